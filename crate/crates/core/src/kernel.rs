//! Free resolvent kernel, the iterated kernel of `R₀ V R₀`, and the
//! ellipsoid-integral estimate that controls it.
//!
//! The iterated kernel
//! `G(x,y) = (1/16π²) ∫ e^{ik(|x−z|+|z−y|)} V(z) / (|x−z||z−y|) dz`
//! is integrated in prolate spheroidal coordinates with foci `x`, `y`:
//! `z = m + rτ e + √(r²−c²) √(1−τ²) (cos φ e₁ + sin φ e₂)`, for which
//! `dz / (|x−z||z−y|) = dr dτ dφ` and `|x−z| + |z−y| = 2r`. Both point
//! singularities disappear, and `x = y` (a family of spheres) needs no
//! special treatment.

use std::f64::consts::PI;

use log::debug;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{add, dist, orthonormal_complement, scale, segment_distance_to_origin, sub, Vec3};
use crate::potential::{compass_maximize, Potential};
use crate::quadrature::{halton_ball, integrate, QuadSpec};

/// A momentum `k` with `λ = k²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub k: Complex64,
    pub lambda: Complex64,
    /// True when `k` may sit in the continuation strip below the real axis.
    pub continued: bool,
}

impl SpectralPoint {
    /// A point of the physical sheet, `Im k > 0`.
    pub fn new(k: Complex64) -> Result<Self> {
        if !(k.im > 0.0) {
            return Err(Error::NonpositiveImK { im: k.im });
        }
        Ok(SpectralPoint { k, lambda: k * k, continued: false })
    }

    /// A point of the strip `Im k > −ε/4`.
    pub fn continued(k: Complex64, eps: f64) -> Result<Self> {
        if !(k.im > -eps / 4.0) {
            return Err(Error::ContinuationOutOfStrip { k, floor: -eps / 4.0 });
        }
        if k.norm() == 0.0 {
            return Err(Error::DegenerateK);
        }
        Ok(SpectralPoint { k, lambda: k * k, continued: k.im <= 0.0 })
    }
}

/// The prolate ellipsoid `E(x, y, r) = {z : |z−x| + |z−y| = 2r}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidSpec {
    pub x: Vec3,
    pub y: Vec3,
    /// Major semiaxis.
    pub r: f64,
    /// Half focal distance `|x−y|/2`.
    pub c: f64,
    /// Minor semiaxis `√(r²−c²)`.
    pub minor: f64,
    /// Distance from the origin to the segment `[x, y]`.
    pub mu: f64,
    center: Vec3,
    axis: Vec3,
    e1: Vec3,
    e2: Vec3,
}

impl EllipsoidSpec {
    pub fn new(x: Vec3, y: Vec3, r: f64) -> Result<Self> {
        let c = 0.5 * dist(x, y);
        if !(r >= c) {
            return Err(Error::InvalidParameter(format!("major semiaxis {r} below half focal distance {c}")));
        }
        let d = sub(y, x);
        let axis = if c > 0.0 { scale(d, 0.5 / c) } else { [0.0, 0.0, 1.0] };
        let (e1, e2) = orthonormal_complement(axis);
        let minor = ((r - c) * (r + c)).sqrt();
        Ok(EllipsoidSpec {
            x,
            y,
            r,
            c,
            minor,
            mu: segment_distance_to_origin(x, y),
            center: scale(add(x, y), 0.5),
            axis,
            e1,
            e2,
        })
    }

    /// Point at prolate angles `(τ, φ)`, `τ ∈ [−1, 1]`.
    #[inline]
    pub fn point(&self, tau: f64, phi: f64) -> Vec3 {
        let s = self.minor * (1.0 - tau * tau).max(0.0).sqrt();
        let (sp, cp) = phi.sin_cos();
        let mut z = add(self.center, scale(self.axis, self.r * tau));
        for i in 0..3 {
            z[i] += s * (cp * self.e1[i] + sp * self.e2[i]);
        }
        z
    }

    /// Same foci, different major semiaxis.
    pub fn with_r(&self, r: f64) -> Self {
        EllipsoidSpec { r, minor: ((r - self.c) * (r + self.c)).max(0.0).sqrt(), ..*self }
    }

    /// Sampled max of `h` over the ellipsoid on a `(n_tau, n_phi)` grid,
    /// followed by a local compass polish in the angles.
    pub fn max_over<H: Fn(Vec3) -> f64>(&self, h: H, grid: (usize, usize)) -> f64 {
        let (nt, np) = (grid.0.max(2), grid.1.max(1));
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        for i in 0..nt {
            // Nodes include both poles.
            let tau = -1.0 + 2.0 * i as f64 / (nt - 1) as f64;
            let n_here = if i == 0 || i == nt - 1 { 1 } else { np };
            for j in 0..n_here {
                let phi = 2.0 * PI * j as f64 / np as f64;
                let v = h(self.point(tau, phi));
                if v > best.2 {
                    best = (tau, phi, v);
                }
            }
        }
        let f = |u: Vec3| {
            let tau = u[0].clamp(-1.0, 1.0);
            h(self.point(tau, u[1]))
        };
        let step = (2.0 / (nt - 1) as f64).max(2.0 * PI / np as f64) * 0.5;
        let (_, polished) = compass_maximize(&f, [best.0, best.1, 0.0], step, 1e-7);
        polished.max(best.2)
    }
}

/// `e^{ik|x−y|} / (4π|x−y|)`.
pub fn free_resolvent_kernel(k: Complex64, x: Vec3, y: Vec3) -> Result<Complex64> {
    let r = dist(x, y);
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok((Complex64::i() * k * r).exp() / (4.0 * PI * r))
}

/// Value of a numerically integrated kernel with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: Complex64,
    pub error: f64,
    pub evals: usize,
}

/// Range of major semiaxes for which `E(x, y, r)` meets the ball `(b, a)`.
fn semiaxis_range(x: Vec3, y: Vec3, b: Vec3, a: f64) -> (f64, f64) {
    let c = 0.5 * dist(x, y);
    let dx = dist(x, b);
    let dy = dist(y, b);
    let lo = 0.5 * ((dx - a).max(0.0) + (dy - a).max(0.0));
    (lo.max(c), 0.5 * (dx + dy) + a)
}

fn field_scale(p: &Potential, seed: u64) -> f64 {
    let (b, a) = p.support_ball();
    let mut m = p.value(b).norm();
    for z in halton_ball(128, b, a, seed) {
        m = m.max(p.value(z).norm());
    }
    m
}

/// The iterated kernel `G_λ(x, y)` of `R₀(λ) V R₀(λ)`, `λ = k²`.
///
/// Adaptive Gauss–Kronrod in the major semiaxis and in `τ`, periodic
/// trapezoid in `φ`. Valid for any complex `k` (the truncated support makes
/// the integrand entire in `k`).
pub fn iterated_kernel(k: Complex64, x: Vec3, y: Vec3, p: &Potential, spec: &QuadSpec) -> Result<KernelValue> {
    if p.is_zero() {
        return Ok(KernelValue { value: Complex64::new(0.0, 0.0), error: 0.0, evals: 0 });
    }
    let (b, a) = p.support_ball();
    let (r_lo, r_hi) = semiaxis_range(x, y, b, a);
    let e = EllipsoidSpec::new(x, y, r_lo)?;
    let n_phi = 2 * spec.n_azimuth;
    let dphi = 2.0 * PI / n_phi as f64;
    let vscale = field_scale(p, spec.seed);
    let abs_tol = spec.rel_tol * vscale * 4.0 * PI * (r_hi - r_lo).max(1e-300);
    let mut evals = 0usize;
    let mut inner_ok = true;
    let est = integrate(
        |r: f64| {
            let er = e.with_r(r);
            let s = integrate(
                |tau: f64| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..n_phi {
                        acc += p.value(er.point(tau, (j as f64 + 0.5) * dphi));
                    }
                    acc * dphi
                },
                -1.0,
                1.0,
                spec.rel_tol * 0.1,
                abs_tol * 0.1 / (r_hi - r_lo).max(1e-300),
                spec.max_subdivisions,
            );
            evals += s.evals * n_phi;
            inner_ok &= s.converged;
            (Complex64::i() * k * (2.0 * r)).exp() * s.value
        },
        r_lo,
        r_hi,
        spec.rel_tol,
        abs_tol,
        spec.max_subdivisions,
    );
    if !(est.converged && inner_ok) {
        return Err(Error::QuadratureNotConverged { what: "iterated kernel".into(), error: est.error });
    }
    let norm_factor = 1.0 / (16.0 * PI * PI);
    debug!("G({x:?}, {y:?}; k = {k}) used {evals} field evaluations");
    Ok(KernelValue { value: est.value * norm_factor, error: est.error * norm_factor, evals })
}

/// Both sides of `∫∫ |e^{ik|x−y|} V(y) / |x−y||² dx dy = (2π/Im k) ‖V‖₂²`.
///
/// The left side integrates `y` over spherical shells of the support
/// (adaptive in the radius, 50-point Lebedev on each shell) and, for each `y`,
/// the `x`-integral in spherical coordinates about `y` as
/// `4π ∫₀^∞ e^{−2 Im k r} dr` by adaptive quadrature (mapped to `[0, 1)`).
/// The right side uses `‖V‖₂²` from an independent adaptive 3D quadrature.
pub fn hs_identity_check(k: Complex64, p: &Potential, spec: &QuadSpec) -> Result<(f64, f64)> {
    if !(k.im > 0.0) {
        return Err(Error::NonpositiveImK { im: k.im });
    }
    let kappa = k.im;
    // r = t / (1 − t)
    let radial = integrate(
        |t: f64| {
            if t >= 1.0 {
                return 0.0;
            }
            let r = t / (1.0 - t);
            (-2.0 * kappa * r).exp() / ((1.0 - t) * (1.0 - t))
        },
        0.0,
        1.0,
        1e-12,
        0.0,
        spec.max_subdivisions,
    );
    let x_integral = 4.0 * PI * radial.value;
    let (b, a) = p.support_ball();
    let rule = crate::quadrature::lebedev(50).expect("tabulated");
    let y_integral = integrate(
        |r: f64| {
            let mut s = 0.0;
            for (d, wa) in rule.points.iter().zip(&rule.weights) {
                s += wa * p.value(add(b, scale(*d, r))).norm_sqr();
            }
            r * r * s
        },
        0.0,
        a,
        spec.rel_tol,
        spec.abs_tol,
        spec.max_subdivisions,
    )
    .value;
    let lhs = x_integral * y_integral;
    let l2 = crate::potential::ball_integral(|z| p.value(z).norm_sqr(), b, a, spec);
    if !l2.converged {
        return Err(Error::QuadratureNotConverged { what: "L2 norm".into(), error: l2.error });
    }
    Ok((lhs, 2.0 * PI / kappa * l2.value))
}

/// The Proposition's right-hand side and its two ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropositionBound {
    /// `(1/8|k|)(‖V‖∞/π + I/√2)`.
    pub bound: f64,
    /// `I = ∫_c^∞ max_{E(x,y,r)} |∇V| r dr / √(r² − c²)`.
    pub integral_term: f64,
    pub c: f64,
}

/// The ellipsoid integral `I`, evaluated in the minor semiaxis
/// `s = √(r² − c²)` (so `ds = r dr/√(r²−c²)` and the endpoint singularity
/// disappears), with `max_E |∇V|` from sampled ellipsoids.
pub fn ellipsoid_gradient_integral(x: Vec3, y: Vec3, p: &Potential, spec: &QuadSpec) -> Result<f64> {
    if p.is_zero() {
        return Ok(0.0);
    }
    let (b, a) = p.support_ball();
    let (r_lo, r_hi) = semiaxis_range(x, y, b, a);
    let e = EllipsoidSpec::new(x, y, r_lo)?;
    let c = e.c;
    let s_lo = ((r_lo - c) * (r_lo + c)).max(0.0).sqrt();
    let s_hi = ((r_hi - c) * (r_hi + c)).sqrt();
    let grid = spec.ellipsoid_grid;
    let est = integrate(
        |s: f64| {
            let r = (s * s + c * c).sqrt();
            e.with_r(r).max_over(|z| p.grad_norm(z), grid)
        },
        s_lo,
        s_hi,
        spec.rel_tol.max(1e-6),
        spec.abs_tol,
        spec.max_subdivisions,
    );
    // The sampled max is piecewise smooth in s; accept a looser tolerance
    // instead of failing on kinks.
    if !est.converged && est.error > 1e-3 * est.value.abs() {
        return Err(Error::QuadratureNotConverged { what: "ellipsoid integral".into(), error: est.error });
    }
    Ok(est.value)
}

/// `(1/8|k|)(‖V‖∞/π + (1/√2) ∫_c^∞ max_E |∇V| r dr/√(r²−c²))`.
pub fn proposition_bound(
    k: Complex64,
    x: Vec3,
    y: Vec3,
    p: &Potential,
    linf: f64,
    spec: &QuadSpec,
) -> Result<PropositionBound> {
    let m = k.norm();
    if m == 0.0 {
        return Err(Error::DegenerateK);
    }
    let integral_term = ellipsoid_gradient_integral(x, y, p, spec)?;
    Ok(PropositionBound {
        bound: (linf / PI + integral_term / 2f64.sqrt()) / (8.0 * m),
        integral_term,
        c: 0.5 * dist(x, y),
    })
}

/// Majorant of `|∇V|` on `E(x, y, r)` under `|∇V| ≤ εA e^{−ε|x|}`:
/// `εA (e^{ε(c+μ−r)} ϑ(r − √(μ²+c²)) + e^{ε(√(r²−c²)−μ)} ϑ(c+μ−r))`
/// with `ϑ(0) = 1`.
pub fn exponential_grad_majorant(spec: &EllipsoidSpec, eps: f64, amp: f64) -> f64 {
    let (r, c, mu) = (spec.r, spec.c, spec.mu);
    let mut total = 0.0;
    if r >= (mu * mu + c * c).sqrt() {
        total += (eps * (c + mu - r)).exp();
    }
    if c + mu >= r {
        total += (eps * (spec.minor - mu)).exp();
    }
    eps * amp * total
}

/// `|G| ≤ kato / (4π²|x−y|)` (infinite on the diagonal).
pub fn kato_kernel_bound(kato: f64, x: Vec3, y: Vec3) -> f64 {
    let d = dist(x, y);
    if d == 0.0 {
        f64::INFINITY
    } else {
        kato / (4.0 * PI * PI * d)
    }
}

/// Distance from the origin to the ellipsoid's focal segment, exposed for
/// callers that sample `(x, y)` pairs.
pub fn focal_segment_distance(x: Vec3, y: Vec3) -> f64 {
    segment_distance_to_origin(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolvent_kernel_values() {
        let g = free_resolvent_kernel(Complex64::i(), [0.0; 3], [1.0, 0.0, 0.0]).unwrap();
        assert!((g - Complex64::new((-1.0f64).exp() / (4.0 * PI), 0.0)).norm() < 1e-15);
        let g0 = free_resolvent_kernel(Complex64::new(0.0, 0.0), [0.0; 3], [0.0, 2.0, 0.0]).unwrap();
        assert!((g0.re - 1.0 / (8.0 * PI)).abs() < 1e-15);
        assert_eq!(free_resolvent_kernel(Complex64::i(), [1.0; 3], [1.0; 3]), Err(Error::CoincidentPoints));
    }

    #[test]
    fn ellipsoid_points_have_constant_focal_sum() {
        let e = EllipsoidSpec::new([0.1, 0.2, -0.3], [0.5, -0.1, 0.2], 0.8).unwrap();
        for (tau, phi) in [(-1.0, 0.0), (0.3, 1.0), (0.99, 4.0), (1.0, 2.0)] {
            let z = e.point(tau, phi);
            assert!((dist(z, e.x) + dist(z, e.y) - 2.0 * e.r).abs() < 1e-14);
        }
        assert!((e.minor * e.minor - (e.r * e.r - e.c * e.c)).abs() < 1e-15);
    }

    #[test]
    fn majorant_convention_at_crossover() {
        let e = EllipsoidSpec::new([1.0, 0.0, 0.0], [1.0, 0.5, 0.0], 0.0).err();
        assert!(e.is_some());
        let x = [1.0, -0.25, 0.0];
        let y = [1.0, 0.25, 0.0];
        let base = EllipsoidSpec::new(x, y, 0.25).unwrap();
        let r_star = (base.mu * base.mu + base.c * base.c).sqrt();
        let at = base.with_r(r_star);
        let expected = (base.c + base.mu - r_star).exp() + (at.minor - base.mu).exp();
        assert!((exponential_grad_majorant(&at, 1.0, 1.0) - expected).abs() < 1e-14);
        let far = base.with_r(50.0);
        assert!(exponential_grad_majorant(&far, 1.0, 1.0) < 1e-18);
    }
}
