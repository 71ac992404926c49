//! Partial-wave ground truth for radial potentials.
//!
//! Each angular-momentum channel reduces to `−u'' + (l(l+1)/r² + V(r))u = k²u`.
//! The regular solution is integrated outward from `r_min` and matched at
//! `r_max` to the outgoing Riccati–Hankel solution; the mismatch is a Jost
//! function whose zeros in `Im k > 0` are the channel's eigenvalues.

use std::sync::Arc;

use log::{debug, info};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::LogDet;
use crate::potential::Potential;
use crate::zerocount::{locate_zeros, LocateOptions, Rect, Zero};

pub type Profile = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// One angular-momentum channel of a radial potential.
#[derive(Clone)]
pub struct RadialProblem {
    pub profile: Profile,
    pub l: usize,
    /// Matching radius; the profile must vanish beyond it.
    pub r_max: f64,
    pub ode: OdeOptions,
}

impl std::fmt::Debug for RadialProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialProblem").field("l", &self.l).field("r_max", &self.r_max).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub r_min: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { r_min: 1e-6, rtol: 1e-10, atol: 1e-12, max_steps: 200_000 }
    }
}

impl RadialProblem {
    pub fn new(profile: Profile, l: usize, r_max: f64) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("r_max must be positive, got {r_max}")));
        }
        Ok(RadialProblem { profile, l, r_max, ode: OdeOptions::default() })
    }

    /// Channel `l` of a radial potential, matched at its truncation radius.
    pub fn from_potential(p: &Potential, l: usize) -> Result<Self> {
        if !p.is_radial() {
            return Err(Error::NotRadial);
        }
        let q = p.clone();
        let profile: Profile = Arc::new(move |r| q.radial_value(r).unwrap_or_default());
        RadialProblem::new(profile, l, p.support_ball().1)
    }

    pub fn with_l(&self, l: usize) -> Self {
        RadialProblem { l, ..self.clone() }
    }

    fn potential(&self, r: f64) -> Complex64 {
        (self.profile)(r)
    }
}

/// State of the outward integration: `(u, u')` times `exp(log_scale)`.
#[derive(Debug, Clone, Copy)]
struct Outward {
    u: Complex64,
    up: Complex64,
    log_scale: f64,
    nodes: usize,
}

type Y = [Complex64; 2];

fn axpy(y: &Y, h: f64, terms: &[(f64, &Y)]) -> Y {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += k[0] * (h * c);
        out[1] += k[1] * (h * c);
    }
    out
}

/// Dormand–Prince 5(4) integration of the regular solution at energy `e`
/// from `r_min` to `r_max`. Sign changes of `Re u` are counted as nodes (only
/// meaningful for real profiles and real `e`).
fn integrate_regular(rp: &RadialProblem, e: Complex64) -> Result<Outward> {
    let o = &rp.ode;
    let l = rp.l as f64;
    let cent = l * (l + 1.0);
    let rhs = |r: f64, y: &Y| -> Y { [y[1], (cent / (r * r) + rp.potential(r) - e) * y[0]] };
    let r0 = o.r_min.min(0.5 * rp.r_max);
    // r^{l+1} with the scale carried separately.
    let mut y: Y = [Complex64::new(1.0, 0.0), Complex64::new((l + 1.0) / r0, 0.0)];
    let mut log_scale = (l + 1.0) * r0.ln();
    let mut r = r0;
    let mut h = 0.1 * r0;
    let h_max = (rp.r_max - r0) / 100.0;
    let mut nodes = 0;
    let mut steps = 0;

    const A21: f64 = 1.0 / 5.0;
    const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
    const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
    const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
    const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
    const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
    const E: [f64; 7] =
        [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];
    const C: [f64; 6] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0];

    while r < rp.r_max {
        steps += 1;
        if steps > o.max_steps {
            return Err(Error::StiffIntegration { r });
        }
        h = h.min(rp.r_max - r).min(h_max);
        let k1 = rhs(r, &y);
        let k2 = rhs(r + C[1] * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = rhs(r + C[2] * h, &axpy(&y, h, &[(A3[0], &k1), (A3[1], &k2)]));
        let k4 = rhs(r + C[3] * h, &axpy(&y, h, &[(A4[0], &k1), (A4[1], &k2), (A4[2], &k3)]));
        let k5 = rhs(r + C[4] * h, &axpy(&y, h, &[(A5[0], &k1), (A5[1], &k2), (A5[2], &k3), (A5[3], &k4)]));
        let k6 = rhs(r + h, &axpy(&y, h, &[(A6[0], &k1), (A6[1], &k2), (A6[2], &k3), (A6[3], &k4), (A6[4], &k5)]));
        let yn = axpy(&y, h, &[(B[0], &k1), (B[2], &k3), (B[3], &k4), (B[4], &k5), (B[5], &k6)]);
        let k7 = rhs(r + h, &yn);
        let err = axpy(
            &[Complex64::default(); 2],
            h,
            &[(E[0], &k1), (E[2], &k3), (E[3], &k4), (E[4], &k5), (E[5], &k6), (E[6], &k7)],
        );
        // u' is compared on the scale of u/r so both components weigh alike.
        let su = o.atol + o.rtol * y[0].norm().max(yn[0].norm());
        let sp = o.atol / r + o.rtol * y[1].norm().max(yn[1].norm());
        let en = ((err[0].norm() / su).powi(2) + (err[1].norm() / sp).powi(2)).sqrt() / std::f64::consts::SQRT_2;
        if !en.is_finite() {
            return Err(Error::StiffIntegration { r });
        }
        if en <= 1.0 {
            if yn[0].re * y[0].re < 0.0 {
                nodes += 1;
            }
            r += h;
            y = yn;
            let m = y[0].norm().max(y[1].norm() * r);
            if m > 1e100 || (m < 1e-100 && m > 0.0) {
                y[0] /= m;
                y[1] /= m;
                log_scale += m.ln();
            }
        }
        let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h < 1e-14 * r {
            return Err(Error::StiffIntegration { r });
        }
    }
    debug!("l = {} regular solution: {steps} steps, {nodes} nodes", rp.l);
    Ok(Outward { u: y[0], up: y[1], log_scale, nodes })
}

/// Outgoing Riccati–Hankel polynomial `P(z) = Σ_m (l+m)!/(m!(l−m)!) (i/2z)^m`
/// and its derivative; `w_l(z) = e^{iz} P(z)`.
fn hankel_poly(l: usize, z: Complex64) -> (Complex64, Complex64) {
    let x = Complex64::new(0.0, 0.5) / z;
    let mut t = Complex64::new(1.0, 0.0);
    let (mut p, mut dp) = (t, Complex64::default());
    for m in 0..l {
        let (m_, l_) = (m as f64, l as f64);
        t *= x * ((l_ + m_ + 1.0) * (l_ - m_) / (m_ + 1.0));
        p += t;
        dp -= t * ((m_ + 1.0) / z);
    }
    (p, dp)
}

/// Jost-type mismatch `P(ka)u'(a) − k(iP(ka) + P'(ka))u(a)` between the regular
/// solution and the outgoing solution at `a = r_max`, in log-polar form. It
/// differs from the Wronskian `W[w_l(k·), u]` by the nonvanishing `e^{ika}`.
pub fn jost_like_value(rp: &RadialProblem, k: Complex64) -> Result<LogDet> {
    if !(k.im > 0.0) {
        return Err(Error::NonpositiveImK { im: k.im });
    }
    let out = integrate_regular(rp, k * k)?;
    let (p, dp) = hankel_poly(rp.l, k * rp.r_max);
    let f = p * out.up - k * (Complex64::i() * p + dp) * out.u;
    let mut v = LogDet::from_value(f);
    v.log_abs += out.log_scale;
    Ok(v)
}

/// Number of bound states of a real channel: nodes of the zero-energy regular
/// solution on `(0, ∞)`, the exterior tail `αr^{l+1} + βr^{−l}` included.
pub fn sturm_count(rp: &RadialProblem) -> Result<usize> {
    let probe = [0.1, 0.37, 0.5, 0.77, 1.0].map(|t| rp.potential(t * rp.r_max).im.abs());
    if probe.iter().any(|&v| v > 0.0) {
        return Err(Error::InvalidParameter("node counting needs a real profile".into()));
    }
    let out = integrate_regular(rp, Complex64::default())?;
    let (a, l) = (rp.r_max, rp.l as i32);
    let (u, up) = (out.u.re, out.up.re);
    let lf = l as f64;
    let alpha = (lf * u + a * up) / ((2.0 * lf + 1.0) * a.powi(l + 1));
    let beta = ((lf + 1.0) * u - a * up) * a.powi(l) / (2.0 * lf + 1.0);
    // Zero at r^{2l+1} = −β/α, which lies beyond a iff u and α have opposite signs.
    let exterior = alpha != 0.0 && -beta / alpha > a.powi(2 * l + 1);
    Ok(out.nodes + usize::from(exterior))
}

/// Smallest coupling `g` for which `−g·shape` binds at least `n` states in
/// channel `l`, by bisection on the node count.
pub fn coupling_threshold<S>(shape: S, l: usize, r_max: f64, n: usize, g_lo: f64, g_hi: f64, tol: f64) -> Result<f64>
where
    S: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
{
    let count = |g: f64| -> Result<usize> {
        let s = shape.clone();
        let rp = RadialProblem::new(Arc::new(move |r| Complex64::new(-g * s(r), 0.0)), l, r_max)?;
        sturm_count(&rp)
    };
    let (mut lo, mut hi) = (g_lo, g_hi);
    if count(lo)? >= n || count(hi)? < n {
        return Err(Error::InvalidParameter(format!("threshold {n} not bracketed by [{g_lo}, {g_hi}]")));
    }
    while hi - lo > tol * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if count(mid)? >= n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest channel not excluded by the centrifugal barrier:
/// channels with `l(l+1) > max_r r²|V(r)|` have a positive effective potential.
pub fn channel_cutoff(profile: &Profile, r_max: f64) -> usize {
    let n = 4000;
    let m = (1..=n)
        .map(|i| {
            let r = r_max * i as f64 / n as f64;
            r * r * profile(r).norm()
        })
        .fold(0.0, f64::max);
    // Sampling slack: a 1% margin on the maximum.
    let m = 1.01 * m;
    let mut l = 0usize;
    while ((l + 1) * (l + 2)) as f64 <= m {
        l += 1;
    }
    l
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCount {
    pub l: usize,
    pub count: i64,
    pub zeros: Vec<Zero>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialCount {
    /// Eigenvalues with multiplicity `2l + 1`.
    pub total: i64,
    pub channels: Vec<ChannelCount>,
    pub l_max: usize,
    pub justification: String,
}

/// Eigenvalues `λ = k²` with `k` in `region`, summed over channels `0..=l_max`.
/// With `l_max = None` the barrier cutoff is used; an explicit `l_max` below
/// it is refused.
pub fn count_eigenvalues_radial(
    p: &Potential,
    region: Rect,
    l_max: Option<usize>,
    opts: &LocateOptions,
) -> Result<RadialCount> {
    let base = RadialProblem::from_potential(p, 0)?;
    if p.is_zero() {
        return Ok(RadialCount { total: 0, channels: vec![], l_max: 0, justification: "zero potential".into() });
    }
    let required = channel_cutoff(&base.profile, base.r_max);
    let l_max = match l_max {
        Some(l) if l < required => return Err(Error::ChannelTruncationUnsafe { l_max: l, required }),
        Some(l) => l,
        None => required,
    };
    let justification = format!("channels l > {required} skipped: l(l+1) exceeds max r^2|V(r)| on [0, {}]", base.r_max);
    info!("{justification}");
    let channels = crate::par::map_range(l_max + 1, |l| -> Result<ChannelCount> {
        let rp = base.with_l(l);
        let res = locate_zeros(&|k| jost_like_value(&rp, k), region, opts)?;
        Ok(ChannelCount { l, count: res.winding, zeros: res.zeros })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let total = channels.iter().map(|c| (2 * c.l as i64 + 1) * c.count).sum();
    Ok(RadialCount { total, channels, l_max, justification })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hankel_poly_matches_closed_forms() {
        let z = Complex64::new(0.7, 0.4);
        let (p0, d0) = hankel_poly(0, z);
        assert_eq!((p0, d0), (Complex64::new(1.0, 0.0), Complex64::default()));
        // l = 1: 1 + i/z
        let (p1, d1) = hankel_poly(1, z);
        assert!((p1 - (1.0 + Complex64::i() / z)).norm() < 1e-14);
        assert!((d1 + Complex64::i() / (z * z)).norm() < 1e-14);
        // l = 2: 1 + 3i/z − 3/z²
        let (p2, _) = hankel_poly(2, z);
        assert!((p2 - (1.0 + 3.0 * Complex64::i() / z - 3.0 / (z * z))).norm() < 1e-13);
    }
}
