//! Zero counting and location for determinants in the `k`-plane.
//!
//! Functions are sampled in log-polar form ([`LogDet`]) so values far outside
//! floating range still carry a usable phase. Winding numbers use adaptive
//! arc bisection with a π/2 cap on each phase step; zeros are isolated by
//! box subdivision and polished with Newton steps on the log-derivative.

use std::f64::consts::PI;
use std::io::Write;

use log::{debug, info, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fredholm::{Factor, FredholmEvaluator, GridSpec};
use crate::linalg::LogDet;
use crate::potential::{measure_functionals, sample_sup, Potential};
use crate::quadrature::QuadSpec;
use crate::scalarbounds::{
    lemma1_constant, lemma2_constant, n_bound_theorem1, n_bound_theorem2, BoundMode, BoundParameters, BoundReport,
};

/// A function sampled in log-polar form.
pub trait ZeroFn: Fn(Complex64) -> Result<LogDet> + Sync {}
impl<F: Fn(Complex64) -> Result<LogDet> + Sync> ZeroFn for F {}

/// Wraps a plain complex function.
pub fn plain<F: Fn(Complex64) -> Complex64 + Sync>(f: F) -> impl ZeroFn {
    move |z| Ok(LogDet::from_value(f(z)))
}

/// A circle in the `k`-plane with its sampling budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub center: Complex64,
    pub radius: f64,
    pub n_samples_initial: usize,
    /// Maximum bisection depth of any arc.
    pub refinement_limit: usize,
}

impl ContourSpec {
    pub fn circle(center: Complex64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("contour radius must be positive, got {radius}")));
        }
        Ok(ContourSpec { center, radius, n_samples_initial: 64, refinement_limit: 40 })
    }

    /// Refuses circles through `k = 0` or below the strip `Im k > −ε/4`.
    pub fn check_strip(&self, eps: f64) -> Result<()> {
        if (self.center.norm() - self.radius).abs() < 1e-12 * self.radius {
            return Err(Error::InvalidParameter("contour passes through k = 0".into()));
        }
        let floor = -eps / 4.0;
        let low = self.center.im - self.radius;
        if !(low > floor) {
            return Err(Error::ContinuationOutOfStrip { k: Complex64::new(self.center.re, low), floor });
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in the `k`-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re0: f64,
    pub re1: f64,
    pub im0: f64,
    pub im1: f64,
}

impl Rect {
    pub fn new(re0: f64, re1: f64, im0: f64, im1: f64) -> Result<Self> {
        if !(re1 > re0 && im1 > im0) || ![re0, re1, im0, im1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(format!("degenerate rectangle [{re0}, {re1}] x [{im0}, {im1}]")));
        }
        Ok(Rect { re0, re1, im0, im1 })
    }

    /// Parses `RE0,RE1,IM0,IM1`.
    pub fn parse(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidParameter(format!("region must be RE0,RE1,IM0,IM1, got {s:?}")))?;
        if v.len() != 4 {
            return Err(Error::InvalidParameter(format!("region must have four numbers, got {s:?}")));
        }
        Rect::new(v[0], v[1], v[2], v[3])
    }

    pub fn width(&self) -> f64 {
        self.re1 - self.re0
    }

    pub fn height(&self) -> f64 {
        self.im1 - self.im0
    }

    pub fn size(&self) -> f64 {
        self.width().max(self.height())
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re0 + self.re1), 0.5 * (self.im0 + self.im1))
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re0 && z.re <= self.re1 && z.im >= self.im0 && z.im <= self.im1
    }

    /// Splits across the longer side at fraction `t`.
    fn split(&self, t: f64) -> (Rect, Rect) {
        if self.width() >= self.height() {
            let m = self.re0 + t * self.width();
            (Rect { re1: m, ..*self }, Rect { re0: m, ..*self })
        } else {
            let m = self.im0 + t * self.height();
            (Rect { im1: m, ..*self }, Rect { im0: m, ..*self })
        }
    }

    fn expanded(&self, d: f64) -> Rect {
        Rect { re0: self.re0 - d, re1: self.re1 + d, im0: self.im0 - d, im1: self.im1 + d }
    }
}

/// A closed contour parametrized by `t ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contour {
    Circle {
        center: Complex64,
        radius: f64,
    },
    /// Counter-clockwise; each side gets a quarter of the parameter range.
    Rectangle(Rect),
}

impl Contour {
    pub fn point(&self, t: f64) -> Complex64 {
        match *self {
            Contour::Circle { center, radius } => center + Complex64::from_polar(radius, 2.0 * PI * t),
            Contour::Rectangle(r) => {
                let s = 4.0 * t.rem_euclid(1.0);
                let (side, u) = ((s.floor() as usize).min(3), s - s.floor().min(3.0));
                match side {
                    0 => Complex64::new(r.re0 + u * r.width(), r.im0),
                    1 => Complex64::new(r.re1, r.im0 + u * r.height()),
                    2 => Complex64::new(r.re1 - u * r.width(), r.im1),
                    _ => Complex64::new(r.re0, r.im1 - u * r.height()),
                }
            }
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            Contour::Circle { radius, .. } => radius,
            Contour::Rectangle(r) => r.size(),
        }
    }
}

/// Sampling controls for winding numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindingOptions {
    /// Initial samples on the whole contour (a multiple of 4 keeps rectangle
    /// corners on the grid).
    pub n_initial: usize,
    /// Maximum bisection depth of any arc.
    pub max_depth: usize,
}

impl Default for WindingOptions {
    fn default() -> Self {
        WindingOptions { n_initial: 32, max_depth: 30 }
    }
}

/// A contour sample kept for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSample {
    pub k: Complex64,
    pub log_abs: f64,
    pub arg: f64,
}

/// Winding number and the samples that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Winding {
    pub winding: i64,
    pub samples: Vec<ContourSample>,
}

fn phase_step(a: &LogDet, b: &LogDet) -> f64 {
    (b.phase / a.phase).arg()
}

/// Argument-principle winding number with adaptive arc bisection.
pub fn winding_traced<F: ZeroFn + ?Sized>(f: &F, contour: Contour, opts: &WindingOptions) -> Result<Winding> {
    let n0 = opts.n_initial.max(8);
    let ts: Vec<f64> = (0..n0).map(|j| j as f64 / n0 as f64).collect();
    let eval = |t: f64| -> Result<(f64, LogDet)> {
        let z = contour.point(t);
        let v = f(z)?;
        if v.singular || !v.log_abs.is_finite() {
            return Err(Error::ZeroOnContour { at: z, modulus: 0.0 });
        }
        Ok((t, v))
    };
    let mut pts: Vec<(f64, LogDet)> = crate::par::map_slice(&ts, |t| eval(*t)).into_iter().collect::<Result<_>>()?;
    // Per arc (from point i to i+1): bisection depth, and whether its phase
    // step has been confirmed by its two halves. The check catches steps
    // aliased by a full turn, which the π/2 cap alone misses.
    let mut depth = vec![0usize; pts.len()];
    let mut verified = vec![false; pts.len()];
    loop {
        let n = pts.len();
        let steps: Vec<f64> = (0..n).map(|i| phase_step(&pts[i].1, &pts[(i + 1) % n].1)).collect();
        let bad: Vec<usize> = (0..n).filter(|&i| steps[i].abs() >= 0.5 * PI).collect();
        let checking = bad.is_empty();
        let targets = if checking { (0..n).filter(|&i| !verified[i]).collect() } else { bad };
        if targets.is_empty() {
            break;
        }
        for &i in &targets {
            if depth[i] >= opts.max_depth {
                let z = contour.point(pts[i].0);
                return Err(Error::ZeroOnContour { at: z, modulus: pts[i].1.log_abs.exp() });
            }
        }
        let mids: Vec<f64> = targets
            .iter()
            .map(|&i| {
                let t1 = if i + 1 == n { 1.0 } else { pts[i + 1].0 };
                0.5 * (pts[i].0 + t1)
            })
            .collect();
        let new = crate::par::map_slice(&mids, |t| eval(*t)).into_iter().collect::<Result<Vec<_>>>()?;
        let mut merged = Vec::with_capacity(n + new.len());
        let mut merged_depth = Vec::with_capacity(n + new.len());
        let mut merged_verified = Vec::with_capacity(n + new.len());
        let mut b = 0;
        for i in 0..n {
            merged.push(pts[i]);
            if b < targets.len() && targets[b] == i {
                let m = &new[b].1;
                let (d1, d2) = (log_diff(m, &pts[i].1), log_diff(&pts[(i + 1) % n].1, m));
                // Halves must add up to the parent step and ln f must be
                // nearly linear across the arc.
                let ok = checking && (d1.im + d2.im - steps[i]).abs() < 0.1 && (d1 - d2).norm() < 0.5;
                merged_depth.extend([depth[i] + 1; 2]);
                merged_verified.extend([ok; 2]);
                merged.push(new[b]);
                b += 1;
            } else {
                merged_depth.push(depth[i]);
                merged_verified.push(verified[i]);
            }
        }
        pts = merged;
        depth = merged_depth;
        verified = merged_verified;
    }
    let n = pts.len();
    let total: f64 = (0..n).map(|i| phase_step(&pts[i].1, &pts[(i + 1) % n].1)).sum();
    let w = total / (2.0 * PI);
    let rounded = w.round();
    if (w - rounded).abs() > 1e-6 {
        return Err(Error::NonConvergent(format!("phase sum {w} is not an integer")));
    }
    let samples =
        pts.iter().map(|(t, v)| ContourSample { k: contour.point(*t), log_abs: v.log_abs, arg: v.arg() }).collect();
    debug!("winding {} from {n} samples on contour of scale {}", rounded, contour.scale());
    Ok(Winding { winding: rounded as i64, samples })
}

/// Number of zeros (with multiplicity) of `f` inside the circle.
pub fn winding_number<F: ZeroFn + ?Sized>(f: &F, contour: &ContourSpec) -> Result<i64> {
    let c = Contour::Circle { center: contour.center, radius: contour.radius };
    let opts = WindingOptions { n_initial: contour.n_samples_initial, max_depth: contour.refinement_limit };
    Ok(winding_traced(f, c, &opts)?.winding)
}

pub fn winding_rect<F: ZeroFn + ?Sized>(f: &F, rect: Rect, opts: &WindingOptions) -> Result<i64> {
    Ok(winding_traced(f, Contour::Rectangle(rect), opts)?.winding)
}

/// Result of the averaged Jensen bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JensenValue {
    /// `(1/2π)∫ ln|φ(ρe^{iθ})| dθ − ln|φ(0)|`.
    pub rhs: f64,
    /// `rhs / ln(ρ/inner_radius)`.
    pub n_bound: f64,
    pub mean_log: f64,
    pub center_log: f64,
    pub n_theta: usize,
}

// Fixed angular offset so the nodes avoid symmetry axes and nest under doubling.
const JENSEN_OFFSET: f64 = std::f64::consts::FRAC_1_PI;

/// Trapezoidal Jensen average with node doubling until the mean changes by
/// less than `1e-6`.
pub fn jensen_bound<F: ZeroFn + ?Sized>(
    f: &F,
    center: Complex64,
    rho: f64,
    inner_radius: f64,
    n_theta: usize,
) -> Result<JensenValue> {
    if !(inner_radius > 0.0 && rho > inner_radius) {
        return Err(Error::InvalidParameter(format!("need rho > inner_radius > 0, got {rho} and {inner_radius}")));
    }
    let c = f(center)?;
    if c.singular || !c.log_abs.is_finite() {
        return Err(Error::CenterIsZero);
    }
    let sample = |thetas: &[f64]| -> Result<f64> {
        let vals = crate::par::map_slice(thetas, |th| f(center + Complex64::from_polar(rho, *th)));
        let mut s = 0.0;
        for (v, th) in vals.into_iter().zip(thetas) {
            let v = v?;
            if v.singular || !v.log_abs.is_finite() {
                return Err(Error::ZeroOnContour { at: center + Complex64::from_polar(rho, *th), modulus: 0.0 });
            }
            s += v.log_abs;
        }
        Ok(s)
    };
    let mut n = n_theta.max(8);
    let nodes = |n: usize, odd_only: bool| -> Vec<f64> {
        (0..n).filter(|j| !odd_only || j % 2 == 1).map(|j| JENSEN_OFFSET + 2.0 * PI * j as f64 / n as f64).collect()
    };
    let mut sum = sample(&nodes(n, false))?;
    let mut mean = sum / n as f64;
    loop {
        if n > 1 << 16 {
            return Err(Error::NonConvergent(format!("Jensen average not settled at {n} nodes")));
        }
        sum += sample(&nodes(2 * n, true))?;
        n *= 2;
        let next = sum / n as f64;
        let change = (next - mean).abs();
        mean = next;
        if change < 1e-6 {
            break;
        }
    }
    let rhs = mean - c.log_abs;
    Ok(JensenValue { rhs, n_bound: rhs / (rho / inner_radius).ln(), mean_log: mean, center_log: c.log_abs, n_theta: n })
}

/// One located zero (or cluster).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zero {
    pub k: Complex64,
    pub lambda: Complex64,
    pub multiplicity: i64,
    /// Half-size of the isolating box; ~0 after a successful polish.
    pub uncertainty: f64,
    pub polished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroCountResult {
    pub region: Rect,
    pub winding: i64,
    pub zeros: Vec<Zero>,
    /// Jensen data when computed by the caller.
    pub jensen_rhs: Option<f64>,
    pub jensen_n_bound: Option<f64>,
    pub resolution_flags: Vec<String>,
}

impl ZeroCountResult {
    pub fn total_multiplicity(&self) -> i64 {
        self.zeros.iter().map(|z| z.multiplicity).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocateOptions {
    /// Boxes below this size are reported as clusters.
    pub min_box: f64,
    pub winding: WindingOptions,
    pub newton_steps: usize,
}

impl Default for LocateOptions {
    fn default() -> Self {
        LocateOptions { min_box: 1e-3, winding: WindingOptions::default(), newton_steps: 40 }
    }
}

// Off-center split fractions, tried in turn when a cut runs through a zero.
const SPLITS: [f64; 5] = [0.4731, 0.4419, 0.5237, 0.4083, 0.5591];

fn log_diff(a: &LogDet, b: &LogDet) -> Complex64 {
    Complex64::new(a.log_abs - b.log_abs, (a.phase / b.phase).arg())
}

/// Newton on `ln f`: `k ← k − 1/(ln f)'`, derivative by central differences.
fn newton_polish<F: ZeroFn + ?Sized>(f: &F, start: Complex64, rect: Rect, steps: usize) -> Option<Complex64> {
    let mut k = start;
    let mut last = rect.size();
    for _ in 0..steps {
        // The difference step must stay well below the distance to the zero.
        let floor = 1e-11 * (1.0 + k.norm());
        let h = (1e-6 * rect.size()).min(1e-3 * last).max(floor);
        let (fp, fm) = (f(k + h).ok()?, f(k - h).ok()?);
        if fp.singular || fm.singular {
            return Some(k);
        }
        let dlog = log_diff(&fp, &fm) / (2.0 * h);
        if dlog.norm() == 0.0 || !dlog.is_finite() {
            return None;
        }
        let step = 1.0 / dlog;
        k -= step;
        if !rect.expanded(0.05 * rect.size()).contains(k) {
            return None;
        }
        last = step.norm();
        if last < 1e-12 * (1.0 + k.norm()) || last < 10.0 * floor && h <= floor {
            return Some(k);
        }
    }
    None
}

/// Winding of a box, retrying with a slightly enlarged box if the function
/// vanishes on its boundary.
fn box_winding<F: ZeroFn + ?Sized>(f: &F, rect: Rect, opts: &WindingOptions) -> Result<(Rect, i64)> {
    let mut r = rect;
    for attempt in 0..5 {
        match winding_rect(f, r, opts) {
            Ok(w) => return Ok((r, w)),
            Err(Error::ZeroOnContour { .. }) if attempt < 4 => {
                r = rect.expanded(1e-3 * rect.size() * (attempt + 1) as f64);
                warn!("zero on the boundary of {rect:?}; retrying with {r:?}");
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

/// Isolates and polishes all zeros of `f` inside `region`.
pub fn locate_zeros<F: ZeroFn + ?Sized>(f: &F, region: Rect, opts: &LocateOptions) -> Result<ZeroCountResult> {
    let (region, total) = box_winding(f, region, &opts.winding)?;
    let mut flags = Vec::new();
    if total < 0 {
        return Err(Error::NonConvergent(format!("negative winding {total}: f has poles in the region")));
    }
    let mut zeros = Vec::new();
    let mut queue = vec![(region, total)];
    while let Some((rect, w)) = queue.pop() {
        if w == 0 {
            continue;
        }
        if w == 1 {
            if let Some(k) = newton_polish(f, rect.center(), rect, opts.newton_steps) {
                if rect.contains(k) {
                    zeros.push(Zero { k, lambda: k * k, multiplicity: 1, uncertainty: 0.0, polished: true });
                    continue;
                }
            }
        }
        if rect.size() <= opts.min_box {
            let k = rect.center();
            zeros.push(Zero { k, lambda: k * k, multiplicity: w, uncertainty: 0.5 * rect.size(), polished: false });
            if w > 1 {
                flags.push(format!("cluster of {w} zeros within {:.1e} of {k}", 0.5 * rect.size()));
            }
            continue;
        }
        let mut split_ok = false;
        for frac in SPLITS {
            let (a, b) = rect.split(frac);
            let wa = winding_rect(f, a, &opts.winding);
            let wb = winding_rect(f, b, &opts.winding);
            match (wa, wb) {
                (Ok(wa), Ok(wb)) => {
                    if wa + wb != w {
                        flags.push(format!("child windings {wa} + {wb} != {w} in {rect:?}"));
                    }
                    queue.push((a, wa));
                    queue.push((b, wb));
                    split_ok = true;
                    break;
                }
                (Err(Error::ZeroOnContour { .. }), _) | (_, Err(Error::ZeroOnContour { .. })) => continue,
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        }
        if !split_ok {
            return Err(Error::NonConvergent(format!("could not split {rect:?} away from its zeros")));
        }
    }
    zeros.sort_by(|a, b| a.k.re.total_cmp(&b.k.re).then(a.k.im.total_cmp(&b.k.im)));
    let found: i64 = zeros.iter().map(|z| z.multiplicity).sum();
    if found != total {
        flags.push(format!("located multiplicity {found} differs from region winding {total}"));
    }
    info!("{} zero(s) located in {region:?}", zeros.len());
    Ok(ZeroCountResult {
        region,
        winding: total,
        zeros,
        jensen_rhs: None,
        jensen_n_bound: None,
        resolution_flags: flags,
    })
}

/// Writes zeros as CSV: `re_k,im_k,re_lambda,im_lambda,multiplicity`.
pub fn write_zeros_csv<W: Write>(mut w: W, zeros: &[Zero]) -> std::io::Result<()> {
    writeln!(w, "re_k,im_k,re_lambda,im_lambda,multiplicity")?;
    for z in zeros {
        writeln!(w, "{},{},{},{},{}", z.k.re, z.k.im, z.lambda.re, z.lambda.im, z.multiplicity)?;
    }
    Ok(())
}

/// Writes contour samples as CSV: `re_k,im_k,log_abs,arg`.
pub fn write_samples_csv<W: Write>(mut w: W, samples: &[ContourSample]) -> std::io::Result<()> {
    writeln!(w, "re_k,im_k,log_abs,arg")?;
    for s in samples {
        writeln!(w, "{},{},{},{}", s.k.re, s.k.im, s.log_abs, s.arg)?;
    }
    Ok(())
}

/// Rectangle in the `k`-plane containing every eigenvalue `λ = k²` with
/// `Im k ≥ δ` and `|λ| ≤ R`.
///
/// An eigenvalue lies in the closed convex hull of the values of `V`, so
/// `Im λ = 2 Re k Im k ∈ [min Im V, max Im V]` and
/// `Re λ = (Re k)² − (Im k)² ≥ −W` with `W = max(0, −min Re V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub rect: Rect,
    pub delta: f64,
    pub im_v_min: f64,
    pub im_v_max: f64,
    pub re_v_min: f64,
}

/// Margin added left and right of the numerical-range strip.
pub const REGION_PAD: f64 = 0.3;

pub fn search_region(p: &Potential, eps: f64, radius_r: f64, spec: &QuadSpec) -> Result<SearchRegion> {
    if !(radius_r > 0.0) {
        return Err(Error::InvalidParameter("search region needs R > 0".into()));
    }
    let (b, a) = p.support_ball();
    let extra = [b, [0.0; 3]];
    let im_max = sample_sup(|x| p.value(x).im, b, a, &extra, spec).1.max(0.0);
    let im_min = (-sample_sup(|x| -p.value(x).im, b, a, &extra, spec).1).min(0.0);
    let re_min = (-sample_sup(|x| -p.value(x).re, b, a, &extra, spec).1).min(0.0);
    let delta = (eps / 8.0).min(0.05 * radius_r.sqrt());
    let sr = radius_r.sqrt();
    let re0 = (im_min / (2.0 * delta) - REGION_PAD).max(-sr);
    let re1 = (im_max / (2.0 * delta) + REGION_PAD).min(sr);
    let kre = re0.abs().max(re1.abs());
    let im1 = (-re_min + kre * kre).sqrt().min(sr).max(2.0 * delta);
    Ok(SearchRegion {
        rect: Rect::new(re0, re1, delta, im1)?,
        delta,
        im_v_min: im_min,
        im_v_max: im_max,
        re_v_min: re_min,
    })
}

/// Jensen data on the circle `|k − iT| = ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JensenChain {
    pub t: f64,
    pub rho: f64,
    pub inner_radius: f64,
    /// Zeros of `D` inside `|k − iT| < √(T² + R)`.
    pub n_inside: i64,
    pub jensen: JensenValue,
    pub theorem_n_bound: f64,
    /// `T` was moved by `ε/100` because `D(iT)` vanished.
    pub t_perturbed: bool,
}

/// Empirical counts against the theorem bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub mode: BoundMode,
    pub eps: f64,
    pub bound: BoundReport,
    pub region: Option<SearchRegion>,
    /// Zeros of `det(I + A)`: eigenvalues of `−Δ + V`.
    pub n_empirical_plus: i64,
    /// Zeros of `det(I − A)`: eigenvalues of `−Δ − V`.
    pub n_empirical_minus: i64,
    /// Zeros of `D` in the region.
    pub n_d: i64,
    pub zeros_plus: Vec<Zero>,
    pub zeros_minus: Vec<Zero>,
    pub jensen: Option<JensenChain>,
    /// `N(V) ≤ N_D ≤ n_bound`, and the Jensen chain when computed.
    pub chain_holds: bool,
    pub notes: Vec<String>,
}

/// Options for [`empirical_vs_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub grid: GridSpec,
    pub quad: QuadSpec,
    pub locate: LocateOptions,
    /// Override of the automatic search region.
    pub region: Option<Rect>,
    /// Evaluate the Jensen chain when the circle stays within `|k| ≤ k_max`.
    pub jensen_k_max: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            grid: GridSpec::default(),
            quad: QuadSpec::default(),
            locate: LocateOptions::default(),
            region: None,
            jensen_k_max: 6.0,
        }
    }
}

/// Theorem bound for `p` at `eps` with the default parameters.
pub fn theorem_bound(p: &Potential, eps: f64, mode: Option<BoundMode>, quad: &QuadSpec) -> Result<BoundReport> {
    let funcs = measure_functionals(p, eps, quad)?;
    let mode = mode.unwrap_or_else(|| BoundMode::for_class(funcs.decay_class));
    let params = BoundParameters::new(eps);
    match mode {
        BoundMode::Theorem1 => n_bound_theorem1(&funcs, lemma1_constant(&funcs)?, &params),
        BoundMode::Theorem2 => n_bound_theorem2(&funcs, lemma2_constant(&funcs)?, &params),
    }
}

/// Locates eigenvalues of `−Δ ± V` in the search region, counts zeros of `D`,
/// and (when the Jensen circle is resolved by the grid) evaluates the
/// Jensen chain `N_inside ≤ Jensen ≤ n_bound`.
pub fn empirical_vs_bound(
    p: &Potential,
    eps: f64,
    mode: Option<BoundMode>,
    opts: &CompareOptions,
) -> Result<Comparison> {
    let bound = theorem_bound(p, eps, mode, &opts.quad)?;
    let mode = bound.kind.mode();
    let mut notes = Vec::new();
    if p.is_zero() || bound.radius_r == 0.0 {
        return Ok(Comparison {
            mode,
            eps,
            bound,
            region: None,
            n_empirical_plus: 0,
            n_empirical_minus: 0,
            n_d: 0,
            zeros_plus: vec![],
            zeros_minus: vec![],
            jensen: None,
            chain_holds: true,
            notes: vec!["zero potential: no eigenvalues".into()],
        });
    }
    let region = search_region(p, eps, bound.radius_r, &opts.quad)?;
    let rect = opts.region.unwrap_or(region.rect);
    let ev = FredholmEvaluator::new(p, &opts.grid, eps)?;
    let plus = locate_zeros(&|k| ev.eval(k, Factor::Plus), rect, &opts.locate)?;
    let minus = locate_zeros(&|k| ev.eval(k, Factor::Minus), rect, &opts.locate)?;
    let (_, n_d) = box_winding(&|k| ev.eval(k, Factor::Full), plus.region, &opts.locate.winding)?;
    notes.extend(plus.resolution_flags.iter().cloned());
    notes.extend(minus.resolution_flags.iter().cloned());
    if n_d != plus.winding + minus.winding {
        notes.push(format!("N_D = {n_d} but factor windings sum to {}", plus.winding + minus.winding));
    }
    for z in &plus.zeros {
        if z.lambda.norm() > bound.radius_r {
            notes.push(format!("eigenvalue {} outside |lambda| <= R = {}", z.lambda, bound.radius_r));
        }
    }
    let mut chain_holds = plus.winding <= n_d;
    if bound.admissible {
        chain_holds &= (n_d as f64) <= bound.n_bound;
    }

    let mut jensen = None;
    let mut t = bound.t_used;
    let rho = bound.rho_used;
    if bound.admissible && t + rho <= opts.jensen_k_max {
        // ρ = T + ε/4 puts the circle on the strip floor. The discretized
        // potential has compact support, so its determinant is entire and
        // may be sampled there.
        let ev_circle = FredholmEvaluator::new(p, &opts.grid, 2.0 * eps)?;
        let full = |k: Complex64| ev_circle.eval(k, Factor::Full);
        let mut perturbed = false;
        let c = full(Complex64::new(0.0, t))?;
        if c.singular || c.log_abs < -30.0 {
            t += eps / 100.0;
            perturbed = true;
            notes.push(format!("D(iT) vanished; T moved to {t}"));
        }
        // ρ keeps its offset from T.
        let rho = t + (rho - bound.t_used);
        let inner = (t * t + bound.radius_r).sqrt();
        let center = Complex64::new(0.0, t);
        let n_inside =
            winding_number(&full, &ContourSpec { n_samples_initial: 64, ..ContourSpec::circle(center, inner)? })?;
        let jv = jensen_bound(&full, center, rho, inner, 64)?;
        let theorem = if perturbed {
            let funcs = measure_functionals(p, eps, &opts.quad)?;
            let params = BoundParameters::new(eps).with_t(t);
            match mode {
                BoundMode::Theorem1 => n_bound_theorem1(&funcs, lemma1_constant(&funcs)?, &params)?.n_bound,
                BoundMode::Theorem2 => n_bound_theorem2(&funcs, lemma2_constant(&funcs)?, &params)?.n_bound,
            }
        } else {
            bound.n_bound
        };
        chain_holds &= (n_inside as f64) <= jv.n_bound + 1e-6 && jv.n_bound <= theorem;
        jensen = Some(JensenChain {
            t,
            rho,
            inner_radius: inner,
            n_inside,
            jensen: jv,
            theorem_n_bound: theorem,
            t_perturbed: perturbed,
        });
    } else if bound.admissible {
        notes.push(format!(
            "Jensen chain skipped: circle reaches |k| = {:.3e}, beyond the resolved range {}",
            t + rho,
            opts.jensen_k_max
        ));
    }
    info!(
        "N(V) = {}, N(-V) = {}, N_D = {n_d}, n_bound = {} ({} determinant evaluations)",
        plus.winding,
        minus.winding,
        bound.n_bound,
        ev.evaluations()
    );
    Ok(Comparison {
        mode,
        eps,
        bound,
        region: Some(SearchRegion { rect: plus.region, ..region }),
        n_empirical_plus: plus.winding,
        n_empirical_minus: minus.winding,
        n_d,
        zeros_plus: plus.zeros,
        zeros_minus: minus.zeros,
        jensen,
        chain_holds,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_parametrization_is_closed_and_ccw() {
        let r = Rect::new(-1.0, 2.0, 0.5, 1.5).unwrap();
        let c = Contour::Rectangle(r);
        assert_eq!(c.point(0.0), Complex64::new(-1.0, 0.5));
        assert_eq!(c.point(0.25), Complex64::new(2.0, 0.5));
        assert_eq!(c.point(0.5), Complex64::new(2.0, 1.5));
        assert_eq!(c.point(0.75), Complex64::new(-1.0, 1.5));
        assert!((c.point(0.999999999) - c.point(0.0)).norm() < 1e-8);
    }

    #[test]
    fn rect_parse() {
        let r = Rect::parse("-1, 1, 0.1, 3").unwrap();
        assert_eq!(r, Rect::new(-1.0, 1.0, 0.1, 3.0).unwrap());
        assert!(Rect::parse("1,0,0,1").is_err());
        assert!(Rect::parse("1,2,3").is_err());
    }
}
