//! Closed-form scalar functions and eigenvalue bounds.
//!
//! `f(a) = Σ n^{n/2} aⁿ / n!`, `g_ε(t) = t e^{εt}` and its inverse `h_ε`,
//! the kernel constants `C` (compact support) and `C̃` (exponential decay),
//! the spectral radius bounds and the eigenvalue-count bounds built on them.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use log::debug;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{DecayClass, PotentialFunctionals};

/// `ln n!` — exact summation for small n, Stirling series beyond.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 20 {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64;
    let x2 = x * x;
    x * x.ln() - x + 0.5 * (2.0 * PI * x).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x * x2 * x2)
        - 1.0 / (1680.0 * x * x2 * x2 * x2)
}

/// `ln t_n` for `t_n = n^{n/2} aⁿ / n!` (with `0⁰ = 1`).
fn ln_term(n: u64, ln_a: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let x = n as f64;
    0.5 * x * x.ln() + x * ln_a - ln_factorial(n)
}

/// `ln(t_{n+1}/t_n) = ln a + ((n-1)/2) ln(n+1) - (n/2) ln n`.
fn ln_ratio(n: u64, ln_a: f64) -> f64 {
    if n == 0 {
        return ln_a;
    }
    let x = n as f64;
    // (n-1)/2 ln(n+1) - n/2 ln n = -1/2 ln(n+1) + n/2 ln(1 + 1/n)
    ln_a - 0.5 * (x + 1.0).ln() + 0.5 * x * (1.0 / x).ln_1p()
}

/// Natural logarithm of `f(a)`, finite for every finite `a >= 0`.
///
/// Terms are summed outward from the largest one; the upward tail is cut
/// with a geometric majorant once the term ratio drops below one, and the
/// downward sweep stops when the remaining terms cannot matter. For very
/// large `a` (more than ~10⁶ significant terms) a Laplace approximation of
/// the sum is used instead.
pub fn ln_f_series(a: f64) -> f64 {
    assert!(a >= 0.0 && !a.is_nan(), "f is defined for a >= 0, got {a}");
    if a == 0.0 {
        return 0.0;
    }
    if a.is_infinite() {
        return f64::INFINITY;
    }
    let ln_a = a.ln();
    // Peak: first n with ratio < 1 (the ratio decreases in n).
    let (mut lo, mut hi) = (0u64, 16u64);
    while ln_ratio(hi, ln_a) >= 0.0 {
        hi *= 2;
    }
    if ln_ratio(0, ln_a) < 0.0 {
        hi = 0;
    } else {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ln_ratio(mid, ln_a) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let peak = hi;
    let ln_peak = ln_term(peak, ln_a);
    let width = (2.0 * peak as f64).sqrt().max(1.0);
    if width > 5e4 {
        // Laplace: φ''(n) ≈ -1/(2n) near the peak.
        return ln_peak + 0.5 * (4.0 * PI * peak as f64).ln();
    }
    // Relative sum Σ exp(ln t_n - ln_peak), accumulated outward.
    let mut sum = 1.0;
    let mut ln_t = ln_peak;
    let mut n = peak;
    loop {
        let lr = ln_ratio(n, ln_a);
        ln_t += lr;
        n += 1;
        let t = (ln_t - ln_peak).exp();
        sum += t;
        let q = ln_ratio(n, ln_a).exp();
        if q < 1.0 && t * q / (1.0 - q) < 1e-17 * sum {
            break;
        }
    }
    let mut ln_t = ln_peak;
    let mut n = peak;
    while n > 0 {
        n -= 1;
        ln_t -= ln_ratio(n, ln_a);
        let t = (ln_t - ln_peak).exp();
        sum += t;
        // Terms keep shrinking below the peak, so n more of them bound the rest.
        if t * n as f64 <= 1e-17 * sum {
            break;
        }
    }
    ln_peak + sum.ln()
}

/// `f(a)`; `+∞` once the value leaves the double range.
pub fn f_series(a: f64) -> f64 {
    let l = ln_f_series(a);
    if l > f64::MAX.ln() {
        f64::INFINITY
    } else {
        l.exp()
    }
}

/// `f(a)` with an overflow flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FValue {
    pub value: f64,
    pub ln_value: f64,
    pub overflow: bool,
}

pub fn f_series_checked(a: f64) -> FValue {
    let ln_value = ln_f_series(a);
    let value = f_series(a);
    FValue { value, ln_value, overflow: value.is_infinite() }
}

/// The paper's majorant `(1 + a) e^{2a²}`.
pub fn f_majorant(a: f64) -> f64 {
    (1.0 + a) * (2.0 * a * a).exp()
}

/// Inverse of `f` on `[1, ∞)` by bisection on `ln f`.
pub fn f_inverse(y: f64) -> Result<f64> {
    if !(y >= 1.0) {
        return Err(Error::InvalidParameter(format!("f_inverse needs y >= 1, got {y}")));
    }
    if y == 1.0 {
        return Ok(0.0);
    }
    let target = y.ln();
    let mut hi = 1.0;
    while ln_f_series(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if ln_f_series(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `g_ε(t) = t e^{εt}`.
pub fn g_eps(eps: f64, t: f64) -> f64 {
    t * (eps * t).exp()
}

/// Principal Lambert W on `[0, ∞)`: the root `u` of `u e^u = x`.
///
/// Newton on `ln u + u = ln x` inside the bracket
/// `[x e^{-min(x, ln(1+x))}, min(x, ln(1+x))]`, with bisection fallback.
pub fn lambert_w0(x: f64) -> f64 {
    assert!(x >= 0.0, "lambert_w0 needs x >= 0");
    if x == 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let mut hi = x.min(x.ln_1p());
    let mut lo = x * (-hi).exp();
    let lx = x.ln();
    let resid = |u: f64| u.ln() + u - lx;
    let mut u = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = resid(u);
        if r > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let mut next = u - r / (1.0 / u + 1.0);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - u).abs() <= 4.0 * f64::EPSILON * u || hi - lo <= 4.0 * f64::EPSILON * hi;
        u = next;
        if done {
            break;
        }
    }
    u
}

/// `h_ε = g_ε⁻¹`, i.e. `W(εs)/ε`.
pub fn h_eps(eps: f64, s: f64) -> f64 {
    assert!(eps > 0.0 && s >= 0.0, "h_eps needs eps > 0 and s >= 0");
    lambert_w0(eps * s) / eps
}

fn require_compact(f: &PotentialFunctionals) -> Result<f64> {
    match f.decay_class {
        DecayClass::CompactSupport { .. } => Ok(f.support_diameter.unwrap_or(0.0)),
        _ => Err(Error::WrongDecayClass { expected: "compactly supported" }),
    }
}

/// Kernel constant for compactly supported potentials:
/// `max{kato/(8π²), ‖V‖∞/(8π) + (√2/16)‖∇V‖∞(d + 1)}`.
pub fn lemma1_constant(f: &PotentialFunctionals) -> Result<f64> {
    let d = require_compact(f)?;
    let first = f.kato_constant / (8.0 * PI * PI);
    let second = f.linf_norm / (8.0 * PI) + SQRT_2 / 16.0 * f.grad_linf_norm * (d + 1.0);
    Ok(first.max(second))
}

/// `√(1+4x) − 1` without cancellation for small x.
fn sqrt1p4_minus_1(x: f64) -> f64 {
    4.0 * x / ((1.0 + 4.0 * x).sqrt() + 1.0)
}

/// `2C / (√(1+4|k|) − 1)`.
pub fn lemma1_kernel_bound(c: f64, k: Complex64) -> Result<f64> {
    let m = k.norm();
    if m == 0.0 {
        return Err(Error::DegenerateK);
    }
    Ok(2.0 * c / sqrt1p4_minus_1(m))
}

/// The amplitude entering the exponential-decay constants: the hypothesis
/// amplitude (which also dominates `max |V| e^{ε|x|}`).
pub fn theorem2_amp(f: &PotentialFunctionals) -> f64 {
    f.hypothesis_amp.max(f.weighted_sup)
}

/// Kernel constant for exponentially decaying potentials:
/// `(1/8π²) max{kato, πA(1 + √2 π)}`.
pub fn lemma2_constant(f: &PotentialFunctionals) -> Result<f64> {
    if f.decay_class.is_compact() {
        return Err(Error::WrongDecayClass { expected: "exponentially decaying" });
    }
    let a = theorem2_amp(f);
    Ok(f.kato_constant.max(PI * a * (1.0 + SQRT_2 * PI)) / (8.0 * PI * PI))
}

/// `C̃ / h_ε(|k|)`.
pub fn lemma2_kernel_bound(ct: f64, eps: f64, k: Complex64) -> Result<f64> {
    let m = k.norm();
    if m == 0.0 {
        return Err(Error::DegenerateK);
    }
    Ok(ct / h_eps(eps, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    Theorem1,
    Theorem2,
}

impl BoundMode {
    /// The branch matching a decay class.
    pub fn for_class(class: DecayClass) -> Self {
        if class.is_compact() {
            BoundMode::Theorem1
        } else {
            BoundMode::Theorem2
        }
    }
}

impl fmt::Display for BoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundMode::Theorem1 => "theorem1",
            BoundMode::Theorem2 => "theorem2",
        })
    }
}

/// Radius of the disc containing the discrete spectrum.
pub fn radius_bound(f: &PotentialFunctionals, constant: f64, mode: BoundMode, eps: f64) -> Result<f64> {
    let cv = constant * f.l1_norm;
    match (mode, f.decay_class.is_compact()) {
        (BoundMode::Theorem1, true) => Ok(radius_theorem1(cv)),
        (BoundMode::Theorem2, false) => Ok(radius_theorem2(cv, eps)),
        (BoundMode::Theorem1, false) => Err(Error::ModeMismatch { mode: "theorem1" }),
        (BoundMode::Theorem2, true) => Err(Error::ModeMismatch { mode: "theorem2" }),
    }
}

/// `(C‖V‖₁)² (1 + C‖V‖₁)²`.
pub fn radius_theorem1(cv: f64) -> f64 {
    (cv * (1.0 + cv)).powi(2)
}

/// `(C̃‖V‖₁)² e^{2εC̃‖V‖₁}`.
pub fn radius_theorem2(cv: f64, eps: f64) -> f64 {
    cv * cv * (2.0 * eps * cv).exp()
}

/// Caller-facing parameters of the count bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParameters {
    pub eps: f64,
    /// Jensen disc center `k = iT`; defaults to 1.01 × the threshold.
    pub t: Option<f64>,
    /// Outer Jensen radius; defaults to `T + ε/4`.
    pub rho: Option<f64>,
    /// Evaluate outside the admissible region instead of failing.
    pub allow_inadmissible: bool,
}

impl BoundParameters {
    pub fn new(eps: f64) -> Self {
        BoundParameters { eps, t: None, rho: None, allow_inadmissible: false }
    }

    pub fn with_t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
        self
    }

    pub fn forced(mut self) -> Self {
        self.allow_inadmissible = true;
        self
    }
}

/// Multiplier applied to the admissibility threshold when T is defaulted.
pub const DEFAULT_T_FACTOR: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Theorem1,
    Theorem2,
    Corollary1,
    Corollary2,
}

impl BoundKind {
    pub fn mode(&self) -> BoundMode {
        match self {
            BoundKind::Theorem1 | BoundKind::Corollary1 => BoundMode::Theorem1,
            BoundKind::Theorem2 | BoundKind::Corollary2 => BoundMode::Theorem2,
        }
    }
}

/// All intermediate constants of a count bound and its value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// `"C"` (compact support) or `"C_tilde"` (exponential decay).
    pub constant_name: String,
    pub constant: f64,
    pub l1_norm: f64,
    /// `constant × ‖V‖₁`.
    pub cv: f64,
    pub radius_r: f64,
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    pub t_threshold: f64,
    pub t_used: f64,
    pub rho_used: f64,
    /// `ρ − T`, exact even where `ρ` rounds to `T`.
    pub rho_offset: f64,
    /// Argument of `f` in the Hadamard floor `2 − f(·)`.
    pub hadamard_arg: f64,
    /// `ln f(AB/2πε)`.
    pub ln_f_ab: f64,
    /// `ln(2 − f(hadamard_arg))`; `-∞` when the argument is out of range.
    pub ln_hadamard_floor: f64,
    /// `ln(ρ/√(T²+R))`.
    pub log_ratio: f64,
    pub n_bound: f64,
    pub admissible: bool,
    pub diagnostic: String,
}

fn empty_report(kind: BoundKind, constant: f64, f: &PotentialFunctionals, eps: f64) -> BoundReport {
    BoundReport {
        kind,
        constant_name: match kind.mode() {
            BoundMode::Theorem1 => "C".into(),
            BoundMode::Theorem2 => "C_tilde".into(),
        },
        constant,
        l1_norm: f.l1_norm,
        cv: constant * f.l1_norm,
        radius_r: 0.0,
        a: 0.0,
        b: f.weighted_l1,
        eps,
        t_threshold: 0.0,
        t_used: 0.0,
        rho_used: 0.0,
        rho_offset: 0.0,
        hadamard_arg: 0.0,
        ln_f_ab: 0.0,
        ln_hadamard_floor: 0.0,
        log_ratio: 0.0,
        n_bound: 0.0,
        admissible: true,
        diagnostic: "ok".into(),
    }
}

/// `ln(ρ/√(T²+R))` evaluated as `½ ln1p(((ρ−T)(ρ+T) − R)/(T²+R))`.
pub fn log_ratio(rho: f64, t: f64, r: f64) -> f64 {
    log_ratio_offset(rho - t, t, r)
}

/// `ln(ρ/√(T²+R))` from the offset `ρ − T`, which stays exact when `T` is
/// so large that `T + offset` rounds to `T`.
pub fn log_ratio_offset(offset: f64, t: f64, r: f64) -> f64 {
    // Divided through by T so that T² never forms.
    0.5 * ((offset * (2.0 + offset / t) - r / t) / (t + r / t)).ln_1p()
}

/// Shared tail of the two theorem bounds; `offset` is `ρ − T`.
fn finish(mut rep: BoundReport, offset: f64, allow: bool) -> Result<BoundReport> {
    rep.rho_offset = offset;
    let fv = f_series(rep.hadamard_arg);
    let floor = 2.0 - fv;
    rep.ln_hadamard_floor = if floor > 0.0 { floor.ln() } else { f64::NEG_INFINITY };
    rep.log_ratio = log_ratio_offset(offset, rep.t_used, rep.radius_r);
    if floor <= 0.0 {
        if !allow {
            return Err(Error::NegativeLogArgument { arg: rep.hadamard_arg });
        }
        rep.admissible = false;
        rep.diagnostic = format!("2 - f({}) <= 0", rep.hadamard_arg);
        rep.n_bound = f64::INFINITY;
        return Ok(rep);
    }
    let bracket = rep.ln_f_ab - rep.ln_hadamard_floor;
    if bracket == 0.0 {
        rep.n_bound = 0.0;
    } else if rep.log_ratio <= 0.0 {
        rep.admissible = false;
        rep.diagnostic = format!(
            "rho = {} does not exceed sqrt(T^2 + R) = {}",
            rep.rho_used,
            (rep.t_used.powi(2) + rep.radius_r).sqrt()
        );
        rep.n_bound = f64::INFINITY;
    } else {
        rep.n_bound = bracket / rep.log_ratio;
    }
    debug!("{:?}: n_bound = {} (T = {}, rho = {})", rep.kind, rep.n_bound, rep.t_used, rep.rho_used);
    Ok(rep)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")))
    }
}

/// Resolves T against its threshold; returns `(T, admissible, diagnostic)`.
fn resolve_t(threshold: f64, t: Option<f64>, eps: f64, allow: bool, condition: &str) -> Result<(f64, bool, String)> {
    if !threshold.is_finite() {
        return Err(Error::Overflow(format!("T threshold ({condition})")));
    }
    let t = match t {
        Some(t) => t,
        None if threshold > 0.0 => DEFAULT_T_FACTOR * threshold,
        // Zero potential: any positive T is admissible.
        None => eps,
    };
    if !(t > 0.0) || !(t > threshold) {
        let msg = format!("need T > {threshold} ({condition})");
        if !allow {
            return Err(Error::InadmissibleT { t, condition: msg });
        }
        return Ok((t, false, msg));
    }
    Ok((t, true, "ok".into()))
}

/// Count bound for compactly supported potentials; ρ is fixed to `T + ε/4`.
pub fn n_bound_theorem1(f: &PotentialFunctionals, c: f64, params: &BoundParameters) -> Result<BoundReport> {
    let eps = params.eps;
    check_eps(eps)?;
    let r = radius_bound(f, c, BoundMode::Theorem1, eps)?;
    let cv = c * f.l1_norm;
    let threshold = (2.0 * r / eps - eps / 8.0).max(2.0 * cv * (1.0 + 2.0 * cv));
    let (t, ok, diag) =
        resolve_t(threshold, params.t, eps, params.allow_inadmissible, "T > max{2R/eps - eps/8, 2CV(1+2CV)}")?;
    let mut rep = empty_report(BoundKind::Theorem1, c, f, eps);
    rep.radius_r = r;
    rep.a = f.weighted_sup;
    rep.b = f.weighted_l1;
    rep.t_threshold = threshold;
    rep.t_used = t;
    rep.rho_used = t + eps / 4.0;
    rep.hadamard_arg = if cv == 0.0 { 0.0 } else { 2.0 * cv / sqrt1p4_minus_1(t) };
    rep.ln_f_ab = ln_f_series(rep.a * rep.b / (2.0 * PI * eps));
    rep.admissible = ok;
    rep.diagnostic = diag;
    finish(rep, eps / 4.0, params.allow_inadmissible)
}

/// Count bound for exponentially decaying potentials.
pub fn n_bound_theorem2(f: &PotentialFunctionals, ct: f64, params: &BoundParameters) -> Result<BoundReport> {
    let eps = params.eps;
    check_eps(eps)?;
    let r = radius_bound(f, ct, BoundMode::Theorem2, eps)?;
    if !f.weighted_l1.is_finite() {
        return Err(Error::DivergentB);
    }
    let cv = ct * f.l1_norm;
    let threshold = (2.0 * r / eps - eps / 8.0).max(g_eps(eps, 2.0 * cv));
    let (t, mut ok, mut diag) =
        resolve_t(threshold, params.t, eps, params.allow_inadmissible, "T > max{2R/eps - eps/8, g_eps(2 C~ V)}")?;
    let upper = t + eps / 4.0;
    let lower = t.hypot(r.sqrt());
    let rho = params.rho.unwrap_or(upper);
    let offset = if params.rho.is_some() { rho - t } else { eps / 4.0 };
    if !(log_ratio_offset(offset, t, r) > 0.0 && offset <= eps / 4.0 * (1.0 + 1e-12)) {
        if !params.allow_inadmissible {
            return Err(Error::InadmissibleRho { rho, lower, upper });
        }
        ok = false;
        diag = format!("rho = {rho} outside ({lower}, {upper}]");
    }
    let mut rep = empty_report(BoundKind::Theorem2, ct, f, eps);
    rep.radius_r = r;
    rep.a = theorem2_amp(f);
    rep.b = f.weighted_l1;
    rep.t_threshold = threshold;
    rep.t_used = t;
    rep.rho_used = rho;
    rep.hadamard_arg = if cv == 0.0 { 0.0 } else { cv / h_eps(eps, t) };
    rep.ln_f_ab = ln_f_series(rep.a * rep.b / (2.0 * PI * eps));
    rep.admissible = ok;
    rep.diagnostic = diag;
    finish(rep, offset, params.allow_inadmissible)
}

/// `[3 + 2x² + ln(1 + x)]` with `x = AB/2πε`.
fn corollary_bracket(a: f64, b: f64, eps: f64) -> f64 {
    let x = a * b / (2.0 * PI * eps);
    3.0 + 2.0 * x * x + x.ln_1p()
}

/// Closed-form corollary to the compact-support theorem, with its implied T.
pub fn n_bound_corollary1(f: &PotentialFunctionals, c: f64, eps: f64) -> Result<BoundReport> {
    check_eps(eps)?;
    let r = radius_bound(f, c, BoundMode::Theorem1, eps)?;
    let cv = c * f.l1_norm;
    let mut rep = empty_report(BoundKind::Corollary1, c, f, eps);
    rep.a = f.weighted_sup;
    rep.b = f.weighted_l1;
    if cv == 0.0 {
        rep.t_used = eps;
        rep.rho_used = eps + eps / 4.0;
        rep.diagnostic = "zero potential".into();
        return Ok(rep);
    }
    let l = cv * (1.0 + cv);
    let t = if eps / 2.0 <= l { 4.0 * l * l / eps } else { 2.0 * cv * (1.0 + 2.0 * cv) };
    let threshold = (2.0 * r / eps - eps / 8.0).max(2.0 * cv * (1.0 + 2.0 * cv));
    let m = (eps / (2.0 * cv)).min((1.0 + cv).powi(2) / (1.0 + 2.0 * cv));
    let denom = (0.25 * m * m / (1.0 + cv).powi(2)).ln_1p();
    rep.radius_r = r;
    rep.t_threshold = threshold;
    rep.t_used = t;
    rep.rho_used = t + eps / 4.0;
    rep.hadamard_arg = 2.0 * cv / sqrt1p4_minus_1(t);
    rep.ln_f_ab = ln_f_series(rep.a * rep.b / (2.0 * PI * eps));
    rep.log_ratio = log_ratio(rep.rho_used, t, r);
    rep.n_bound = 2.0 / denom * corollary_bracket(rep.a, rep.b, eps);
    if !(t > threshold) {
        rep.admissible = false;
        rep.diagnostic = format!("implied T = {t} does not exceed the threshold {threshold}");
    }
    Ok(rep)
}

/// Closed-form corollary to the exponential-decay theorem, with its implied T.
pub fn n_bound_corollary2(f: &PotentialFunctionals, ct: f64, eps: f64) -> Result<BoundReport> {
    check_eps(eps)?;
    let r = radius_bound(f, ct, BoundMode::Theorem2, eps)?;
    if !f.weighted_l1.is_finite() {
        return Err(Error::DivergentB);
    }
    let cv = ct * f.l1_norm;
    let mut rep = empty_report(BoundKind::Corollary2, ct, f, eps);
    rep.a = theorem2_amp(f);
    rep.b = f.weighted_l1;
    if cv == 0.0 {
        rep.t_used = eps;
        rep.rho_used = eps + eps / 4.0;
        rep.diagnostic = "zero potential".into();
        return Ok(rep);
    }
    let t = if eps <= 2.0 * cv {
        let m = g_eps(eps, cv);
        4.0 * m * m / eps
    } else {
        g_eps(eps, 2.0 * cv)
    };
    let threshold = (2.0 * r / eps - eps / 8.0).max(g_eps(eps, 2.0 * cv));
    let m = (eps / (2.0 * cv)).min(1.0);
    let denom = (0.25 * m * m * (-2.0 * cv).exp()).ln_1p();
    rep.radius_r = r;
    rep.t_threshold = threshold;
    rep.t_used = t;
    rep.rho_used = t + eps / 4.0;
    rep.hadamard_arg = cv / h_eps(eps, t);
    rep.ln_f_ab = ln_f_series(rep.a * rep.b / (2.0 * PI * eps));
    rep.log_ratio = log_ratio(rep.rho_used, t, r);
    rep.n_bound = 2.0 / denom * corollary_bracket(rep.a, rep.b, eps);
    if !(t >= threshold) {
        rep.admissible = false;
        rep.diagnostic = format!("implied T = {t} is below the threshold {threshold}");
    }
    Ok(rep)
}

/// `f(2C‖V‖₁/(√(1+4|k|) − 1)) − 1`, the bound on `|D(k) − 1|` in the upper
/// half plane. `cv` is `C‖V‖₁`.
pub fn hadamard_deviation_bound(cv: f64, k: Complex64) -> Result<f64> {
    if k.norm() == 0.0 {
        return Err(Error::DegenerateK);
    }
    if !(k.im > 0.0) {
        return Err(Error::NonpositiveImK { im: k.im });
    }
    if cv == 0.0 {
        return Ok(0.0);
    }
    let arg = 2.0 * cv / sqrt1p4_minus_1(k.norm());
    Ok((ln_f_series(arg)).exp_m1())
}

/// The `|D(k)|` ceiling in the continuation strip, `f(AB/2πε)`.
pub fn determinant_ceiling(a: f64, b: f64, eps: f64) -> f64 {
    f_series(a * b / (2.0 * PI * eps))
}

/// Arbitrary-precision (200-bit) re-evaluation of the scalar formulas, used
/// as an independent cross-check of the double-precision path.
pub mod extended {
    use dashu_float::round::mode::HalfEven;

    use super::{BoundKind, BoundReport};
    use crate::error::{Error, Result};

    pub type Big = dashu_float::FBig<HalfEven, 2>;

    pub const PRECISION_BITS: usize = 200;

    pub fn big(x: f64) -> Big {
        Big::try_from(x).expect("finite input").with_precision(PRECISION_BITS).value()
    }

    pub fn int(n: u64) -> Big {
        Big::from(n).with_precision(PRECISION_BITS).value()
    }

    pub fn to_f64(x: &Big) -> f64 {
        x.to_f64().value()
    }

    fn pi() -> Big {
        // 4 atan(1) via Machin: π = 16 atan(1/5) − 4 atan(1/239).
        let atan_inv = |m: u64| -> Big {
            let x = int(1) / int(m);
            let x2 = x.clone() * x.clone();
            let mut term = x.clone();
            let mut sum = x;
            let mut n = 1u64;
            loop {
                term = -(term * x2.clone());
                let t = term.clone() / int(2 * n + 1);
                sum += t.clone();
                n += 1;
                if to_f64(&t).abs() < 2f64.powi(-(PRECISION_BITS as i32) - 8) {
                    break;
                }
            }
            sum
        };
        int(16) * atan_inv(5) - int(4) * atan_inv(239)
    }

    /// `f(a)` summed directly; limited to moderate arguments.
    pub fn f_series(a: &Big) -> Result<Big> {
        if to_f64(a) > 60.0 {
            return Err(Error::InvalidParameter("extended f_series supports a <= 60".into()));
        }
        if *a == int(0) {
            return Ok(int(1));
        }
        let ln_a = a.clone().ln();
        let mut sum = int(1);
        let mut ln_fact = int(0);
        let tiny = big(2f64.powi(-(PRECISION_BITS as i32) - 16));
        let mut n = 1u64;
        loop {
            let nb = int(n);
            ln_fact += nb.clone().ln();
            let ln_t = nb.clone() * nb.clone().ln() / int(2) + nb * ln_a.clone() - ln_fact.clone();
            let t = ln_t.exp();
            sum += t.clone();
            // Past the peak the ratio is below a√(e/(n+1)); stop when tiny.
            if (n as f64) > 8.0 * to_f64(a).powi(2) + 8.0 && t.clone() < tiny.clone() * sum.clone() {
                break;
            }
            n += 1;
        }
        Ok(sum)
    }

    /// Largest argument accepted by [`ln_f_series`].
    pub const MAX_ARG: f64 = 1000.0;

    /// `ln n!`: direct sum for small `n`, otherwise Stirling with Bernoulli
    /// corrections through `B₂₀` (≥ 60 digits for `n ≥ 1000`).
    fn ln_factorial(n: u64) -> Big {
        if n < 1000 {
            return (2..=n).fold(int(0), |acc, k| acc + int(k).ln());
        }
        const B: [(i64, u64); 10] = [
            (1, 6),
            (-1, 30),
            (1, 42),
            (-1, 30),
            (5, 66),
            (-691, 2730),
            (7, 6),
            (-3617, 510),
            (43867, 798),
            (-174611, 330),
        ];
        let x = int(n);
        let ln_x = x.clone().ln();
        let mut sum = x.clone() * ln_x.clone() - x.clone() + (int(2) * pi() * x.clone()).ln() / int(2);
        let x2 = x.clone() * x.clone();
        let mut pow = x;
        for (k, (num, den)) in B.iter().enumerate() {
            let k = k as u64 + 1;
            let b = Big::from(*num).with_precision(PRECISION_BITS).value() / int(*den);
            sum += b / (int(2 * k * (2 * k - 1)) * pow.clone());
            pow *= x2.clone();
        }
        sum
    }

    /// `ln f(a)` by summing the terms within 2⁻²⁴⁰ of the peak term; exact
    /// to the working precision for `a ≤ MAX_ARG`.
    pub fn ln_f_series(a: &Big) -> Result<Big> {
        let af = to_f64(a);
        if af <= 60.0 {
            return Ok(f_series(a)?.ln());
        }
        if af > MAX_ARG {
            return Err(Error::InvalidParameter(format!("extended ln f supports a <= {MAX_ARG}, got {af}")));
        }
        let ln_a = a.clone().ln();
        let peak = (std::f64::consts::E * af * af).floor() as u64;
        let ln_peak = {
            let n = int(peak);
            n.clone() * n.ln() / int(2) + int(peak) * ln_a.clone() - ln_factorial(peak)
        };
        let cut = -(240.0 * std::f64::consts::LN_2);
        // ln(t_{n+1}/t_n) = ln a + ((n−1)/2) ln(n+1) − (n/2) ln n
        let step = |n: u64, ln_n: &Big, ln_n1: &Big| -> Big {
            ln_a.clone() + int(n) * (ln_n1.clone() - ln_n.clone()) / int(2) - ln_n1.clone() / int(2)
        };
        let mut sum = int(1);
        let (mut rel, mut n, mut ln_n) = (int(0), peak, int(peak).ln());
        loop {
            let ln_n1 = int(n + 1).ln();
            rel += step(n, &ln_n, &ln_n1);
            sum += rel.clone().exp();
            n += 1;
            ln_n = ln_n1;
            if to_f64(&rel) < cut {
                break;
            }
        }
        let (mut rel, mut n, mut ln_n) = (int(0), peak, int(peak).ln());
        while n > 1 {
            let ln_prev = int(n - 1).ln();
            rel -= step(n - 1, &ln_prev, &ln_n);
            sum += rel.clone().exp();
            n -= 1;
            ln_n = ln_prev;
            if to_f64(&rel) < cut {
                break;
            }
        }
        Ok(ln_peak + sum.ln())
    }

    /// Lambert-type inverse `h_ε(s)` by Newton on `ln u + u = ln(εs)`.
    pub fn h_eps(eps: &Big, s: &Big) -> Big {
        let x = eps.clone() * s.clone();
        if x == int(0) {
            return int(0);
        }
        let lx = x.clone().ln();
        let mut u = big(super::lambert_w0(to_f64(&x)));
        for _ in 0..12 {
            let r = u.clone().ln() + u.clone() - lx.clone();
            u = u.clone() - r / (int(1) / u.clone() + int(1));
        }
        u / eps.clone()
    }

    fn g_eps(eps: &Big, t: &Big) -> Big {
        t.clone() * (eps.clone() * t.clone()).exp()
    }

    /// Recomputes `n_bound` of a report from its stored inputs (constant,
    /// ‖V‖₁, A, B, ε, T, ρ) at 200 bits.
    pub fn n_bound(rep: &BoundReport) -> Result<f64> {
        let eps = big(rep.eps);
        let cv = big(rep.constant) * big(rep.l1_norm);
        if rep.cv == 0.0 {
            return Ok(0.0);
        }
        let pi = pi();
        let two = int(2);
        let x = big(rep.a) * big(rep.b) / (two.clone() * pi * eps.clone());
        match rep.kind {
            BoundKind::Corollary1 | BoundKind::Corollary2 => {
                let bracket = int(3) + two.clone() * x.clone() * x.clone() + (int(1) + x).ln();
                let inner = if rep.kind == BoundKind::Corollary1 {
                    let one_cv = int(1) + cv.clone();
                    let m1 = eps.clone() / (two.clone() * cv.clone());
                    let m2 = one_cv.clone() * one_cv.clone() / (int(1) + two.clone() * cv.clone());
                    let m = if m1 < m2 { m1 } else { m2 };
                    m.clone() * m / (int(4) * one_cv.clone() * one_cv)
                } else {
                    let m1 = eps.clone() / (two.clone() * cv.clone());
                    let m = if m1 < int(1) { m1 } else { int(1) };
                    m.clone() * m * (-(two.clone() * cv.clone())).exp() / int(4)
                };
                let v = two * bracket / (int(1) + inner).ln();
                Ok(to_f64(&v))
            }
            BoundKind::Theorem1 | BoundKind::Theorem2 => {
                let t = big(rep.t_used);
                let rho = if rep.rho_offset > 0.0 { t.clone() + big(rep.rho_offset) } else { big(rep.rho_used) };
                let r = if rep.kind == BoundKind::Theorem1 {
                    let s = cv.clone() * (int(1) + cv.clone());
                    s.clone() * s
                } else {
                    cv.clone() * cv.clone() * (two.clone() * eps.clone() * cv.clone()).exp()
                };
                let arg = if rep.kind == BoundKind::Theorem1 {
                    two.clone() * cv.clone() / ((int(1) + int(4) * t.clone()).sqrt() - int(1))
                } else {
                    cv.clone() / h_eps(&eps, &t)
                };
                let floor = two.clone() - f_series(&arg)?;
                if floor <= int(0) {
                    return Err(Error::NegativeLogArgument { arg: to_f64(&arg) });
                }
                let ratio = rho / (t.clone() * t + r).sqrt();
                let v = (ln_f_series(&x)? - floor.ln()) / ratio.ln();
                Ok(to_f64(&v))
            }
        }
    }

    /// `g_ε(2 C̃V)` at extended precision, for threshold cross-checks.
    pub fn g_eps_f64(eps: f64, t: f64) -> f64 {
        to_f64(&g_eps(&big(eps), &big(t)))
    }
}
