//! Quadrature building blocks: Gauss–Legendre, adaptive Gauss–Kronrod,
//! Lebedev spherical rules and a low-discrepancy sampler of the ball.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{direction, Vec3};

/// Tolerances and sample counts shared by all numerical integrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of interval bisections per adaptive integral.
    pub max_subdivisions: usize,
    /// Low-discrepancy samples used for sup-norm estimates.
    pub sup_samples: usize,
    /// Seed for the sampler's random shift.
    pub seed: u64,
    /// Angular sampling of ellipsoids (polar, azimuthal).
    pub ellipsoid_grid: (usize, usize),
    /// Azimuthal trapezoid nodes in the prolate kernel quadrature.
    pub n_azimuth: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            rel_tol: 1e-8,
            abs_tol: 1e-13,
            max_subdivisions: 400,
            sup_samples: 4096,
            seed: 0,
            ellipsoid_grid: (32, 64),
            n_azimuth: 24,
        }
    }
}

impl QuadSpec {
    /// Same spec with tolerances tightened by `factor` and node counts raised.
    pub fn refined(&self, factor: f64) -> Self {
        QuadSpec {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            max_subdivisions: self.max_subdivisions * 2,
            n_azimuth: self.n_azimuth * 2,
            ..*self
        }
    }
}

/// Values that can be integrated: real or complex.
pub trait Integrand:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn modulus(self) -> f64;
}

impl Integrand for f64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

// Kronrod 15-point abscissae (descending, last is the centre) and weights;
// Gauss 7-point weights for the odd-indexed abscissae.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<T: Integrand, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron = kron + s * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + s * WG[j / 2];
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    (kron, (kron - gauss).modulus())
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// The interval with the largest error estimate is bisected until the total
/// error falls below `max(abs_tol, rel_tol * |I|)` or the subdivision budget
/// runs out; in the latter case `converged` is false.
pub fn integrate<T, F>(mut f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64, max_subdivisions: usize) -> Estimate<T>
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    if a == b {
        return Estimate { value: T::default(), error: 0.0, evals: 0, converged: true };
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut evals = 15;
    let mut total = v;
    let mut total_err = e;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut splits = 0;
    loop {
        let target = abs_tol.max(rel_tol * total.modulus());
        if total_err <= target {
            break;
        }
        if splits >= max_subdivisions {
            return Estimate { value: total, error: total_err, evals, converged: false };
        }
        let seg = heap.pop().expect("heap never empties");
        let m = 0.5 * (seg.a + seg.b);
        if m <= seg.a || m >= seg.b {
            // Interval collapsed to machine resolution.
            return Estimate { value: total, error: total_err, evals, converged: false };
        }
        let (v1, e1) = gk15(&mut f, seg.a, m);
        let (v2, e2) = gk15(&mut f, m, seg.b);
        evals += 30;
        splits += 1;
        total = total - seg.value + v1 + v2;
        total_err = total_err - seg.error + e1 + e2;
        heap.push(Segment { a: seg.a, b: m, value: v1, error: e1 });
        heap.push(Segment { a: m, b: seg.b, value: v2, error: e2 });
    }
    // Re-sum to wash out cancellation in the running totals.
    let mut value = T::default();
    let mut error = 0.0;
    for s in heap.iter() {
        value = value + s.value;
        error += s.error;
    }
    Estimate { value, error, evals, converged: true }
}

/// Adaptive integration with the tolerances of `spec`.
pub fn integrate_spec<T: Integrand, F: FnMut(f64) -> T>(f: F, a: f64, b: f64, spec: &QuadSpec) -> Estimate<T> {
    integrate(f, a, b, spec.rel_tol, spec.abs_tol, spec.max_subdivisions)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    (x.iter().map(|t| c + h * t).collect(), w.iter().map(|v| v * h).collect())
}

/// A rule on the unit sphere; weights sum to 4π.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
}

impl SphereRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn push_octahedral(points: &mut Vec<Vec3>, weights: &mut Vec<f64>, w: f64) {
    for axis in 0..3 {
        for s in [1.0, -1.0] {
            let mut p = [0.0; 3];
            p[axis] = s;
            points.push(p);
            weights.push(w);
        }
    }
}

fn push_cube(points: &mut Vec<Vec3>, weights: &mut Vec<f64>, w: f64) {
    let a = 1.0 / 3f64.sqrt();
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                points.push([sx * a, sy * a, sz * a]);
                weights.push(w);
            }
        }
    }
}

fn push_edges(points: &mut Vec<Vec3>, weights: &mut Vec<f64>, w: f64) {
    let a = 1.0 / 2f64.sqrt();
    for zero in 0..3 {
        for s1 in [1.0, -1.0] {
            for s2 in [1.0, -1.0] {
                let mut p = [0.0; 3];
                let (i, j) = ((zero + 1) % 3, (zero + 2) % 3);
                p[i] = s1 * a;
                p[j] = s2 * a;
                points.push(p);
                weights.push(w);
            }
        }
    }
}

/// Orbit (±l, ±l, ±m) over the three positions of m.
fn push_llm(points: &mut Vec<Vec3>, weights: &mut Vec<f64>, l: f64, m: f64, w: f64) {
    for pos in 0..3 {
        for s0 in [1.0, -1.0] {
            for s1 in [1.0, -1.0] {
                for s2 in [1.0, -1.0] {
                    let mut p = [s0 * l, s1 * l, s2 * l];
                    p[pos] = [s0, s1, s2][pos] * m;
                    points.push(p);
                    weights.push(w);
                }
            }
        }
    }
}

/// Orbit (±p, ±q, 0) over all permutations.
fn push_pq0(points: &mut Vec<Vec3>, weights: &mut Vec<f64>, p: f64, q: f64, w: f64) {
    for zero in 0..3 {
        let (i, j) = ((zero + 1) % 3, (zero + 2) % 3);
        for (u, v) in [(p, q), (q, p)] {
            for s1 in [1.0, -1.0] {
                for s2 in [1.0, -1.0] {
                    let mut pt = [0.0; 3];
                    pt[i] = s1 * u;
                    pt[j] = s2 * v;
                    points.push(pt);
                    weights.push(w);
                }
            }
        }
    }
}

/// Lebedev rule with `n` points, for n in {6, 14, 26, 38, 50}.
pub fn lebedev(n: usize) -> Option<SphereRule> {
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let degree = match n {
        6 => {
            push_octahedral(&mut points, &mut weights, 1.0 / 6.0);
            3
        }
        14 => {
            push_octahedral(&mut points, &mut weights, 1.0 / 15.0);
            push_cube(&mut points, &mut weights, 3.0 / 40.0);
            5
        }
        26 => {
            push_octahedral(&mut points, &mut weights, 1.0 / 21.0);
            push_edges(&mut points, &mut weights, 4.0 / 105.0);
            push_cube(&mut points, &mut weights, 27.0 / 840.0);
            7
        }
        38 => {
            push_octahedral(&mut points, &mut weights, 1.0 / 105.0);
            push_cube(&mut points, &mut weights, 9.0 / 280.0);
            push_pq0(&mut points, &mut weights, 0.4597008433809831, 0.8880738339771153, 1.0 / 35.0);
            9
        }
        50 => {
            push_octahedral(&mut points, &mut weights, 4.0 / 315.0);
            push_edges(&mut points, &mut weights, 64.0 / 2835.0);
            push_cube(&mut points, &mut weights, 27.0 / 1280.0);
            let l = 1.0 / 11f64.sqrt();
            push_llm(&mut points, &mut weights, l, 3.0 * l, 14641.0 / 725760.0);
            11
        }
        _ => return None,
    };
    for w in weights.iter_mut() {
        *w *= 4.0 * PI;
    }
    Some(SphereRule { points, weights, degree })
}

/// Gauss–Legendre in cos θ times a trapezoid in φ with `2 n_theta` nodes.
pub fn product_sphere_rule(n_theta: usize) -> SphereRule {
    let (ct, wt) = gauss_legendre(n_theta);
    let n_phi = 2 * n_theta;
    let dphi = 2.0 * PI / n_phi as f64;
    let mut points = Vec::with_capacity(n_theta * n_phi);
    let mut weights = Vec::with_capacity(n_theta * n_phi);
    for (c, w) in ct.iter().zip(&wt) {
        for j in 0..n_phi {
            points.push(direction(*c, (j as f64 + 0.5) * dphi));
            weights.push(w * dphi);
        }
    }
    SphereRule { points, weights, degree: (2 * n_theta - 1).min(n_phi - 1) }
}

/// Lebedev rule when `n` matches a tabulated size, otherwise the product rule
/// with roughly `n` points.
pub fn sphere_rule(n: usize) -> SphereRule {
    lebedev(n).unwrap_or_else(|| {
        let n_theta = ((n as f64 / 2.0).sqrt().round() as usize).max(2);
        product_sphere_rule(n_theta)
    })
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton points in the ball of radius `radius` about `center`, with a
/// seed-determined Cranley–Patterson shift. Volume-uniform in distribution.
pub fn halton_ball(n: usize, center: Vec3, radius: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    (1..=n as u64)
        .map(|i| {
            let u = (radical_inverse(i, 2) + shift[0]).fract();
            let v = (radical_inverse(i, 3) + shift[1]).fract();
            let w = (radical_inverse(i, 5) + shift[2]).fract();
            let r = radius * u.cbrt();
            let d = direction(2.0 * v - 1.0, 2.0 * PI * w);
            [center[0] + r * d[0], center[1] + r * d[1], center[2] + r * d[2]]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for n in [1, 2, 5, 12, 40] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - (deg % 2) as i32)).sum();
            let p = (deg - deg % 2) as f64;
            assert!((m - 2.0 / (p + 1.0)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn adaptive_handles_peaks() {
        let est = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 0.0, 500);
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!(est.converged);
        assert!((est.value - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn adaptive_complex() {
        let est = integrate(|x: f64| Complex64::new(0.0, x).exp(), 0.0, PI, 1e-12, 0.0, 100);
        assert!((est.value - Complex64::new(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let est = integrate(|x: f64| 1.0 / x.abs().sqrt().max(1e-300), -1.0, 1.0, 1e-15, 0.0, 5);
        assert!(!est.converged);
    }

    fn sphere_moment(rule: &SphereRule, f: impl Fn(Vec3) -> f64) -> f64 {
        rule.points.iter().zip(&rule.weights).map(|(p, w)| w * f(*p)).sum()
    }

    #[test]
    fn lebedev_rules_integrate_monomials() {
        // Exact moments over the unit sphere.
        let x2 = 4.0 * PI / 3.0;
        let x4 = 4.0 * PI / 5.0;
        let x2y2 = 4.0 * PI / 15.0;
        let x4y4 = 4.0 * PI * 9.0 / 945.0;
        for n in [6, 14, 26, 38, 50] {
            let r = lebedev(n).unwrap();
            assert_eq!(r.len(), n);
            assert!((sphere_moment(&r, |_| 1.0) - 4.0 * PI).abs() < 1e-13);
            assert!((sphere_moment(&r, |p| p[0] * p[0]) - x2).abs() < 1e-13);
            for p in &r.points {
                assert!((crate::geometry::norm(*p) - 1.0).abs() < 1e-14);
            }
            if r.degree >= 5 {
                assert!((sphere_moment(&r, |p| p[0].powi(4)) - x4).abs() < 1e-13, "n={n}");
                assert!((sphere_moment(&r, |p| p[0].powi(2) * p[1].powi(2)) - x2y2).abs() < 1e-13);
            }
            if r.degree >= 9 {
                assert!((sphere_moment(&r, |p| p[0].powi(4) * p[1].powi(4)) - x4y4).abs() < 1e-12, "n={n}");
                assert!((sphere_moment(&r, |p| p[0].powi(8)) - 4.0 * PI / 9.0).abs() < 1e-12);
            }
        }
        assert!(lebedev(7).is_none());
    }

    #[test]
    fn product_rule_fallback() {
        let r = sphere_rule(72);
        assert_eq!(r.len(), 72);
        assert!((sphere_moment(&r, |p| p[2].powi(4)) - 4.0 * PI / 5.0).abs() < 1e-12);
    }

    #[test]
    fn halton_points_fill_ball() {
        let pts = halton_ball(2000, [1.0, 0.0, 0.0], 2.0, 7);
        let mean_r3: f64 = pts.iter().map(|p| crate::geometry::dist(*p, [1.0, 0.0, 0.0]).powi(3)).sum::<f64>() / 2000.0;
        assert!(pts.iter().all(|p| crate::geometry::dist(*p, [1.0, 0.0, 0.0]) <= 2.0));
        // r^3 is uniform on [0, 8] for volume-uniform points.
        assert!((mean_r3 - 4.0).abs() < 0.05);
        assert_eq!(pts, halton_ball(2000, [1.0, 0.0, 0.0], 2.0, 7));
        assert_ne!(pts, halton_ball(2000, [1.0, 0.0, 0.0], 2.0, 8));
    }
}
