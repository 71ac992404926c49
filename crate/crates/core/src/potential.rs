//! Test potentials on three-space and the functionals that enter the bounds.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use log::{debug, info};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{self, dist, norm, orthonormal_complement, sub, Vec3};
use crate::quadrature::{halton_ball, integrate, Estimate, QuadSpec};

/// Decay classification used to pick between the compact-support and the
/// exponential-decay branches of the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayClass {
    /// `V` vanishes for `|x| >= support_radius`.
    CompactSupport { support_radius: f64 },
    /// `|V(x)| <= amp e^{-eps |x|}` and `|grad V(x)| <= eps amp e^{-eps |x|}`.
    ExponentialDecay { eps: f64, amp: f64 },
}

impl DecayClass {
    pub fn is_compact(&self) -> bool {
        matches!(self, DecayClass::CompactSupport { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DecayClass::CompactSupport { .. } => "compact-support",
            DecayClass::ExponentialDecay { .. } => "exponential-decay",
        }
    }
}

/// Real radial profiles; the potential is `coupling * shape(|x - center|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Shape {
    /// `exp(1 + 1/((r/a)^2 - 1))` for `r < a`, zero outside.
    Bump { radius: f64 },
    /// `exp(-rate * sqrt(r^2 + s^2))`; `smoothing` defaults to `1e-3 / rate`.
    MollifiedExponential {
        rate: f64,
        #[serde(default)]
        smoothing: Option<f64>,
    },
    /// `exp(-r^2 / w^2)`, declared exponentially decaying at `envelope_rate`.
    Gaussian {
        width: f64,
        #[serde(default = "default_envelope_rate")]
        envelope_rate: f64,
    },
    /// Bump times `exp(-screening r) / sqrt(r^2 + core^2)`: a smooth
    /// short-range well with a softened Coulomb core.
    ScreenedBump { radius: f64, screening: f64, core: f64 },
    /// Cubic Hermite interpolant of a tabulated radial profile, zero beyond
    /// the last abscissa.
    Tabulated { r: Vec<f64>, v: Vec<f64> },
}

fn default_envelope_rate() -> f64 {
    1.0
}

impl Shape {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            Shape::Bump { radius } if !(*radius > 0.0) => bad("bump radius must be positive"),
            Shape::MollifiedExponential { rate, smoothing } => {
                if !(*rate > 0.0) {
                    bad("exponential rate must be positive")
                } else if smoothing.is_some_and(|s| !(s > 0.0)) {
                    bad("smoothing must be positive")
                } else {
                    Ok(())
                }
            }
            Shape::Gaussian { width, envelope_rate } if !(*width > 0.0 && *envelope_rate > 0.0) => {
                bad("gaussian width and envelope rate must be positive")
            }
            Shape::ScreenedBump { radius, screening, core } if !(*radius > 0.0 && *screening >= 0.0 && *core > 0.0) => {
                bad("screened bump needs radius > 0, screening >= 0, core > 0")
            }
            Shape::Tabulated { r, v } => {
                if r.len() < 2 || r.len() != v.len() {
                    return bad("tabulated profile needs at least two (r, v) pairs of equal length");
                }
                if r[0] != 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("tabulated abscissae must start at 0 and increase");
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return bad("tabulated values must be finite");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Profile value and radial derivative at radius `r`.
    fn eval(&self, r: f64) -> (f64, f64) {
        match self {
            Shape::Bump { radius } => bump(r / *radius, *radius),
            Shape::MollifiedExponential { rate, smoothing } => {
                let s = smoothing.unwrap_or(1e-3 / rate);
                let q = (r * r + s * s).sqrt();
                let v = (-rate * q).exp();
                (v, -rate * r / q * v)
            }
            Shape::Gaussian { width, .. } => {
                let v = (-(r * r) / (width * width)).exp();
                (v, -2.0 * r / (width * width) * v)
            }
            Shape::ScreenedBump { radius, screening, core } => {
                let (b, db) = bump(r / *radius, *radius);
                if b == 0.0 {
                    return (0.0, 0.0);
                }
                let q2 = r * r + core * core;
                let v = b * (-screening * r).exp() / q2.sqrt();
                (v, v * (db / b - screening - r / q2))
            }
            Shape::Tabulated { r: rs, v } => hermite(rs, v, r),
        }
    }

    /// Radius (about the shape's own center) beyond which the profile is zero,
    /// if any.
    fn support(&self) -> Option<f64> {
        match self {
            Shape::Bump { radius } | Shape::ScreenedBump { radius, .. } => Some(*radius),
            Shape::Tabulated { r, .. } => r.last().copied(),
            _ => None,
        }
    }
}

fn bump(t: f64, a: f64) -> (f64, f64) {
    if t >= 1.0 {
        return (0.0, 0.0);
    }
    let d = t * t - 1.0;
    let v = (1.0 + 1.0 / d).exp();
    (v, v * (-2.0 * t / (d * d)) / a)
}

fn hermite(rs: &[f64], vs: &[f64], r: f64) -> (f64, f64) {
    let n = rs.len();
    if r >= rs[n - 1] {
        return (0.0, 0.0);
    }
    let i = rs.partition_point(|&x| x <= r).saturating_sub(1).min(n - 2);
    // Three-point slopes; zero slope at the origin keeps the field C^1.
    let slope = |j: usize| -> f64 {
        if j == 0 {
            0.0
        } else if j == n - 1 {
            (vs[j] - vs[j - 1]) / (rs[j] - rs[j - 1])
        } else {
            let h0 = rs[j] - rs[j - 1];
            let h1 = rs[j + 1] - rs[j];
            let d0 = (vs[j] - vs[j - 1]) / h0;
            let d1 = (vs[j + 1] - vs[j]) / h1;
            (h1 * d0 + h0 * d1) / (h0 + h1)
        }
    };
    let h = rs[i + 1] - rs[i];
    let t = (r - rs[i]) / h;
    let (m0, m1) = (slope(i) * h, slope(i + 1) * h);
    let (t2, t3) = (t * t, t * t * t);
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * vs[i]
        + (t3 - 2.0 * t2 + t) * m0
        + (-2.0 * t3 + 3.0 * t2) * vs[i + 1]
        + (t3 - t2) * m1;
    let dv = ((6.0 * t2 - 6.0 * t) * vs[i]
        + (3.0 * t2 - 4.0 * t + 1.0) * m0
        + (-6.0 * t2 + 6.0 * t) * vs[i + 1]
        + (3.0 * t2 - 2.0 * t) * m1)
        / h;
    (v, dv)
}

/// Complex coupling as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingSpec {
    Cartesian {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    Polar {
        magnitude: f64,
        phase: f64,
    },
}

impl CouplingSpec {
    pub fn value(&self) -> Complex64 {
        match *self {
            CouplingSpec::Cartesian { re, im } => Complex64::new(re, im),
            CouplingSpec::Polar { magnitude, phase } => Complex64::from_polar(magnitude, phase),
        }
    }
}

impl Default for CouplingSpec {
    fn default() -> Self {
        CouplingSpec::Cartesian { re: 1.0, im: 0.0 }
    }
}

/// Serializable description of a built-in potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default)]
    pub coupling: CouplingSpec,
    #[serde(default)]
    pub center: Vec3,
    /// Overrides the decay class derived from the shape.
    #[serde(default)]
    pub decay_class: Option<DecayClass>,
}

type FieldFn = dyn Fn(Vec3) -> Complex64 + Send + Sync;
type GradFn = dyn Fn(Vec3) -> [Complex64; 3] + Send + Sync;

#[derive(Clone)]
enum Field {
    Shape(Shape),
    Custom { value: Arc<FieldFn>, grad: Arc<GradFn> },
}

/// A complex potential `V` on three-space with its gradient and decay class.
///
/// Immutable after construction; clones share custom closures.
#[derive(Clone)]
pub struct Potential {
    field: Field,
    coupling: Complex64,
    center: Vec3,
    /// Radius of the ball about `center` outside which V is negligible.
    local_radius: f64,
    decay_class: DecayClass,
    truncation_radius: f64,
    spec_override: Option<DecayClass>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let field = match &self.field {
            Field::Shape(s) => format!("{s:?}"),
            Field::Custom { .. } => "Custom".to_string(),
        };
        f.debug_struct("Potential")
            .field("field", &field)
            .field("coupling", &self.coupling)
            .field("center", &self.center)
            .field("decay_class", &self.decay_class)
            .field("truncation_radius", &self.truncation_radius)
            .finish()
    }
}

/// `v e^{w}` without overflow in the weight when `v` underflows.
#[inline]
pub fn weighted(v: f64, w: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        (v.ln() + w).exp()
    }
}

/// Tail weight `∫_rho^∞ 4π r² amp e^{-eps r} dr`.
fn exponential_tail(amp: f64, eps: f64, rho: f64) -> f64 {
    4.0 * PI * amp * (-eps * rho).exp() * (rho * rho / eps + 2.0 * rho / (eps * eps) + 2.0 / eps.powi(3))
}

/// Smallest radius whose exponential tail contributes less than `tol` to ‖V‖₁.
pub fn exponential_truncation_radius(amp: f64, eps: f64, tol: f64) -> f64 {
    if amp == 0.0 {
        return 1.0 / eps;
    }
    let mut hi = 1.0 / eps;
    while exponential_tail(amp, eps, hi) > tol {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if exponential_tail(amp, eps, mid) > tol {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi {
            break;
        }
    }
    hi
}

/// Absolute tail tolerance used to truncate exponentially decaying fields.
pub const TRUNCATION_TAIL: f64 = 1e-10;

impl Potential {
    /// Builds a potential from a serializable spec.
    pub fn from_spec(spec: &PotentialSpec) -> Result<Self> {
        spec.shape.validate()?;
        let coupling = spec.coupling.value();
        if !coupling.re.is_finite() || !coupling.im.is_finite() {
            return Err(Error::InvalidParameter("coupling must be finite".into()));
        }
        let mut p = Potential {
            field: Field::Shape(spec.shape.clone()),
            coupling,
            center: spec.center,
            local_radius: 0.0,
            decay_class: DecayClass::CompactSupport { support_radius: 0.0 },
            truncation_radius: 0.0,
            spec_override: spec.decay_class,
        };
        p.derive_decay(spec.decay_class)?;
        Ok(p)
    }

    /// Convenience: `coupling * shape(|x - center|)`.
    pub fn new(shape: Shape, coupling: Complex64, center: Vec3) -> Result<Self> {
        Self::from_spec(&PotentialSpec {
            shape,
            coupling: CouplingSpec::Cartesian { re: coupling.re, im: coupling.im },
            center,
            decay_class: None,
        })
    }

    pub fn bump(coupling: Complex64, radius: f64) -> Self {
        Self::new(Shape::Bump { radius }, coupling, [0.0; 3]).expect("valid bump")
    }

    pub fn mollified_exponential(amp: f64, rate: f64) -> Self {
        Self::new(Shape::MollifiedExponential { rate, smoothing: None }, Complex64::new(amp, 0.0), [0.0; 3])
            .expect("valid exponential")
    }

    pub fn screened_bump(coupling: Complex64) -> Self {
        Self::new(Shape::ScreenedBump { radius: 1.0, screening: 4.0, core: 1e-2 }, coupling, [0.0; 3])
            .expect("valid screened bump")
    }

    /// The identically zero potential (a bump with zero coupling).
    pub fn zero() -> Self {
        Self::bump(Complex64::new(0.0, 0.0), 1.0)
    }

    /// A library-only potential from closures. `support` is the ball about
    /// `center` outside which the field is treated as zero.
    pub fn custom<F, G>(value: F, grad: G, center: Vec3, support: f64, decay_class: DecayClass) -> Result<Self>
    where
        F: Fn(Vec3) -> Complex64 + Send + Sync + 'static,
        G: Fn(Vec3) -> [Complex64; 3] + Send + Sync + 'static,
    {
        if !(support > 0.0) {
            return Err(Error::InvalidParameter("support radius must be positive".into()));
        }
        let truncation_radius = norm(center) + support;
        if let DecayClass::CompactSupport { support_radius } = decay_class {
            if support_radius < truncation_radius - 1e-12 {
                return Err(Error::InvalidParameter("declared support radius does not cover the support ball".into()));
            }
        }
        Ok(Potential {
            field: Field::Custom { value: Arc::new(value), grad: Arc::new(grad) },
            coupling: Complex64::new(1.0, 0.0),
            center,
            local_radius: support,
            decay_class,
            truncation_radius,
            spec_override: Some(decay_class),
        })
    }

    fn derive_decay(&mut self, declared: Option<DecayClass>) -> Result<()> {
        let Field::Shape(shape) = &self.field else {
            return Ok(());
        };
        let c = norm(self.center);
        let g = self.coupling.norm();
        let natural = match (shape, shape.support()) {
            (_, Some(a)) => DecayClass::CompactSupport { support_radius: c + a },
            (Shape::MollifiedExponential { rate, .. }, None) => {
                DecayClass::ExponentialDecay { eps: *rate, amp: g * (rate * c).exp() }
            }
            (Shape::Gaussian { envelope_rate, .. }, None) => {
                let amp = self.envelope_amp(*envelope_rate);
                DecayClass::ExponentialDecay { eps: *envelope_rate, amp }
            }
            _ => unreachable!("every shape has a support or an exponential rate"),
        };
        let class = declared.unwrap_or(natural);
        let support = shape.support();
        match class {
            DecayClass::CompactSupport { support_radius } => {
                let Some(a) = support else {
                    return Err(Error::InvalidParameter(format!("{} has unbounded support", self.family_name())));
                };
                if support_radius < c + a - 1e-12 {
                    return Err(Error::InvalidParameter("declared support radius does not cover the support".into()));
                }
                self.local_radius = a;
                self.truncation_radius = support_radius;
            }
            DecayClass::ExponentialDecay { eps, amp } => {
                if !(eps > 0.0 && amp >= 0.0) {
                    return Err(Error::InvalidParameter("exponential decay needs eps > 0 and amp >= 0".into()));
                }
                // The quadrature ball follows the field's own decay when it
                // is faster than the declared envelope.
                let own = match (shape, natural) {
                    (_, DecayClass::ExponentialDecay { eps: e, amp: a }) => {
                        let (e, a) = if e >= eps { (e, a) } else { (eps, amp) };
                        (exponential_truncation_radius(a, e, TRUNCATION_TAIL) - c).max(1.0 / e)
                    }
                    _ => support.unwrap(),
                };
                self.local_radius = support.map_or(own, |s| s.min(own));
                self.truncation_radius = c + self.local_radius;
                info!(
                    "{}: truncation radius {:.6} (tail < {:e})",
                    self.family_name(),
                    self.truncation_radius,
                    TRUNCATION_TAIL
                );
            }
        }
        self.decay_class = class;
        Ok(())
    }

    /// Smallest amplitude for which `amp e^{-rate|x|}` dominates both |V| and
    /// |∇V|/rate along a dense radial scan (used for Gaussian envelopes).
    fn envelope_amp(&self, rate: f64) -> f64 {
        let Field::Shape(shape) = &self.field else { return 0.0 };
        let c = norm(self.center);
        let g = self.coupling.norm();
        let mut best: f64 = 0.0;
        let mut r = 0.0;
        while r < 60.0 / rate + 10.0 {
            let (v, dv) = shape.eval(r);
            let w = (rate * (r + c)).exp();
            best = best.max(v.abs() * w).max(dv.abs() * w / rate);
            r += 1e-3 / rate.max(1.0);
        }
        g * best * (1.0 + 1e-6)
    }

    pub fn family_name(&self) -> &'static str {
        match &self.field {
            Field::Shape(Shape::Bump { .. }) => "bump",
            Field::Shape(Shape::MollifiedExponential { .. }) => "mollified_exponential",
            Field::Shape(Shape::Gaussian { .. }) => "gaussian",
            Field::Shape(Shape::ScreenedBump { .. }) => "screened_bump",
            Field::Shape(Shape::Tabulated { .. }) => "tabulated",
            Field::Custom { .. } => "custom",
        }
    }

    /// Serializable spec, when the potential came from a built-in family.
    pub fn spec(&self) -> Option<PotentialSpec> {
        match &self.field {
            Field::Shape(shape) => Some(PotentialSpec {
                shape: shape.clone(),
                coupling: CouplingSpec::Cartesian { re: self.coupling.re, im: self.coupling.im },
                center: self.center,
                decay_class: self.spec_override,
            }),
            Field::Custom { .. } => None,
        }
    }

    /// Stable content hash of the spec (hex), for cache keys.
    pub fn content_hash(&self) -> Option<String> {
        let spec = self.spec()?;
        let json = serde_json::to_string(&spec).ok()?;
        let digest = Sha256::digest(json.as_bytes());
        Some(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn coupling(&self) -> Complex64 {
        self.coupling
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn decay_class(&self) -> DecayClass {
        self.decay_class
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    /// Ball `(center, radius)` carrying the (truncated) support.
    pub fn support_ball(&self) -> (Vec3, f64) {
        (self.center, self.local_radius)
    }

    pub fn is_zero(&self) -> bool {
        self.coupling == Complex64::new(0.0, 0.0)
    }

    /// True for built-in radial families.
    pub fn is_radial(&self) -> bool {
        matches!(self.field, Field::Shape(_))
    }

    pub fn value(&self, x: Vec3) -> Complex64 {
        match &self.field {
            Field::Shape(shape) => {
                let r = dist(x, self.center);
                if r >= self.local_radius && shape.support().is_some() {
                    return Complex64::new(0.0, 0.0);
                }
                self.coupling * shape.eval(r).0
            }
            Field::Custom { value, .. } => value(x),
        }
    }

    pub fn gradient(&self, x: Vec3) -> [Complex64; 3] {
        match &self.field {
            Field::Shape(shape) => {
                let d = sub(x, self.center);
                let r = norm(d);
                let zero = Complex64::new(0.0, 0.0);
                if r == 0.0 || (shape.support().is_some() && r >= self.local_radius) {
                    return [zero; 3];
                }
                let dv = self.coupling * (shape.eval(r).1 / r);
                [dv * d[0], dv * d[1], dv * d[2]]
            }
            Field::Custom { grad, .. } => grad(x),
        }
    }

    pub fn grad_norm(&self, x: Vec3) -> f64 {
        let g = self.gradient(x);
        (g[0].norm_sqr() + g[1].norm_sqr() + g[2].norm_sqr()).sqrt()
    }

    /// Radial profile `V(r)` about the center, for radial families.
    pub fn radial_value(&self, r: f64) -> Option<Complex64> {
        match &self.field {
            Field::Shape(shape) => {
                if shape.support().is_some() && r >= self.local_radius {
                    Some(Complex64::new(0.0, 0.0))
                } else {
                    Some(self.coupling * shape.eval(r).0)
                }
            }
            Field::Custom { .. } => None,
        }
    }

    /// `g * V`.
    pub fn scaled(&self, g: Complex64) -> Self {
        let mut p = self.clone();
        match &mut p.field {
            Field::Shape(_) => {
                let mut spec = self.spec().expect("built-in family");
                let k = self.coupling * g;
                spec.coupling = CouplingSpec::Cartesian { re: k.re, im: k.im };
                spec.decay_class = spec.decay_class.map(|d| scale_decay(d, g.norm()));
                return Potential::from_spec(&spec).expect("scaling preserves validity");
            }
            Field::Custom { value, grad } => {
                let (v, gr) = (value.clone(), grad.clone());
                p.field =
                    Field::Custom { value: Arc::new(move |x| v(x) * g), grad: Arc::new(move |x| gr(x).map(|c| c * g)) };
                p.decay_class = scale_decay(p.decay_class, g.norm());
            }
        }
        p
    }

    /// Rigid translation by `shift`. Fails when a declared decay class can no
    /// longer hold (callers re-declare it).
    pub fn translated(&self, shift: Vec3) -> Result<Self> {
        match &self.field {
            Field::Shape(shape) => Self::from_spec(&PotentialSpec {
                shape: shape.clone(),
                coupling: CouplingSpec::Cartesian { re: self.coupling.re, im: self.coupling.im },
                center: geometry::add(self.center, shift),
                decay_class: None,
            }),
            Field::Custom { .. } => Err(Error::InvalidParameter("custom potentials cannot be translated".into())),
        }
    }

    /// Replaces the decay classification (e.g. to treat a compactly supported
    /// field as exponentially decaying).
    pub fn with_decay_class(&self, class: DecayClass) -> Result<Self> {
        match self.spec() {
            Some(mut spec) => {
                spec.decay_class = Some(class);
                Self::from_spec(&spec)
            }
            None => {
                let mut p = self.clone();
                p.decay_class = class;
                p.spec_override = Some(class);
                Ok(p)
            }
        }
    }
}

fn scale_decay(d: DecayClass, g: f64) -> DecayClass {
    match d {
        DecayClass::ExponentialDecay { eps, amp } => DecayClass::ExponentialDecay { eps, amp: amp * g },
        c => c,
    }
}

/// Every functional of `V` that enters the constants of the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialFunctionals {
    pub l1_norm: f64,
    pub l2_norm_sq: f64,
    pub linf_norm: f64,
    pub grad_linf_norm: f64,
    /// Diameter of the support ball; `None` for non-compact fields.
    pub support_diameter: Option<f64>,
    pub kato_constant: f64,
    /// `A(eps) = max |V(x)| e^{eps|x|}`.
    pub weighted_sup: f64,
    /// `B(eps) = ∫ |V(x)| e^{eps|x|} dx`.
    pub weighted_l1: f64,
    /// Smallest `A` with `|∇V| <= eps A e^{-eps|x|}` and `|V| <= A e^{-eps|x|}`.
    pub hypothesis_amp: f64,
    pub eps: f64,
    pub decay_class: DecayClass,
    pub quadrature_error_estimate: f64,
}

impl PotentialFunctionals {
    /// Functionals of the zero potential.
    pub fn zero(eps: f64, decay_class: DecayClass) -> Self {
        PotentialFunctionals {
            l1_norm: 0.0,
            l2_norm_sq: 0.0,
            linf_norm: 0.0,
            grad_linf_norm: 0.0,
            support_diameter: decay_class.is_compact().then_some(0.0),
            kato_constant: 0.0,
            weighted_sup: 0.0,
            weighted_l1: 0.0,
            hypothesis_amp: 0.0,
            eps,
            decay_class,
            quadrature_error_estimate: 0.0,
        }
    }
}

struct Accum {
    rel_err: f64,
}

impl Accum {
    fn take(&mut self, est: Estimate<f64>, what: &str) -> Result<f64> {
        if !est.converged {
            return Err(Error::QuadratureNotConverged { what: what.to_string(), error: est.error });
        }
        if est.value != 0.0 {
            self.rel_err = self.rel_err.max(est.error / est.value.abs());
        }
        Ok(est.value)
    }
}

/// Integral of `h(x)` over the ball `(center, radius)` in spherical
/// coordinates about `center`: adaptive in r and cos θ, trapezoid in φ.
pub fn ball_integral<H: Fn(Vec3) -> f64 + Sync>(h: H, center: Vec3, radius: f64, spec: &QuadSpec) -> Estimate<f64> {
    let n_phi = 2 * spec.n_azimuth;
    let dphi = 2.0 * PI / n_phi as f64;
    let inner_tol = spec.rel_tol * 0.1;
    let mut worst = true;
    let est = integrate(
        |r: f64| {
            let e = integrate(
                |ct: f64| {
                    let st = (1.0 - ct * ct).max(0.0).sqrt();
                    let mut s = 0.0;
                    for j in 0..n_phi {
                        let phi = (j as f64 + 0.5) * dphi;
                        let x = [center[0] + r * st * phi.cos(), center[1] + r * st * phi.sin(), center[2] + r * ct];
                        s += h(x);
                    }
                    s * dphi
                },
                -1.0,
                1.0,
                inner_tol,
                spec.abs_tol,
                spec.max_subdivisions,
            );
            worst &= e.converged;
            r * r * e.value
        },
        0.0,
        radius,
        spec.rel_tol,
        spec.abs_tol,
        spec.max_subdivisions,
    );
    Estimate { converged: est.converged && worst, ..est }
}

/// `∫ |V(y)| / |x - y| dy`, integrated in spherical coordinates about `x`
/// (the r² volume factor absorbs the singularity), polar axis towards the
/// support center.
pub fn kato_integral(p: &Potential, x: Vec3, spec: &QuadSpec) -> Estimate<f64> {
    let (c, a) = p.support_ball();
    let to_c = sub(c, x);
    let dc = norm(to_c);
    let axis = if dc > 1e-14 { geometry::scale(to_c, 1.0 / dc) } else { [0.0, 0.0, 1.0] };
    let (e1, e2) = orthonormal_complement(axis);
    let n_phi = 2 * spec.n_azimuth;
    let dphi = 2.0 * PI / n_phi as f64;
    // Directions that miss the support ball entirely contribute nothing.
    let ct_min = if dc > a { (1.0 - (a / dc).powi(2)).max(0.0).sqrt() } else { -1.0 };
    let mut ok = true;
    let est = integrate(
        |ct: f64| {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            let mut s = 0.0;
            for j in 0..n_phi {
                let phi = (j as f64 + 0.5) * dphi;
                let (cp, sp) = (phi.cos(), phi.sin());
                let dir = [
                    ct * axis[0] + st * (cp * e1[0] + sp * e2[0]),
                    ct * axis[1] + st * (cp * e1[1] + sp * e2[1]),
                    ct * axis[2] + st * (cp * e1[2] + sp * e2[2]),
                ];
                if let Some((t0, t1)) = geometry::ray_ball_chord(x, dir, c, a) {
                    let e = integrate(
                        |t: f64| t * p.value(geometry::add(x, geometry::scale(dir, t))).norm(),
                        t0,
                        t1,
                        spec.rel_tol * 0.1,
                        spec.abs_tol,
                        spec.max_subdivisions,
                    );
                    ok &= e.converged;
                    s += e.value;
                }
            }
            s * dphi
        },
        ct_min,
        1.0,
        spec.rel_tol,
        spec.abs_tol,
        spec.max_subdivisions,
    );
    Estimate { converged: est.converged && ok, ..est }
}

/// Compass (pattern) search maximizing `h` from `start` with initial step `h0`.
pub fn compass_maximize<H: Fn(Vec3) -> f64>(h: &H, start: Vec3, h0: f64, min_step: f64) -> (Vec3, f64) {
    let mut x = start;
    let mut fx = h(x);
    let mut step = h0;
    while step > min_step {
        let mut improved = false;
        for axis in 0..3 {
            for s in [1.0, -1.0] {
                let mut y = x;
                y[axis] += s * step;
                let fy = h(y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Estimated sup of `h` over the ball: Halton samples plus the listed
/// candidates, then compass refinement of the best few.
pub fn sample_sup<H: Fn(Vec3) -> f64 + Sync>(
    h: H,
    center: Vec3,
    radius: f64,
    extra: &[Vec3],
    spec: &QuadSpec,
) -> (Vec3, f64) {
    let mut pts = halton_ball(spec.sup_samples, center, radius, spec.seed);
    pts.extend_from_slice(extra);
    let vals = crate::par::map_slice(&pts, |x| h(*x));
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    let spacing = radius / (spec.sup_samples.max(1) as f64).cbrt();
    let starts: Vec<Vec3> = order.iter().take(4).map(|&i| pts[i]).chain(extra.iter().copied()).collect();
    let inside = |x: Vec3| if dist(x, center) <= radius { h(x) } else { f64::NEG_INFINITY };
    let refined =
        crate::par::map_slice(&starts, |s| compass_maximize(&inside, *s, spacing, 1e-10 * radius.max(1e-300)));
    refined.into_iter().fold(([0.0; 3], f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// Measures all functionals of `p` at weight rate `eps`.
pub fn measure_functionals(p: &Potential, eps: f64, spec: &QuadSpec) -> Result<PotentialFunctionals> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let class = p.decay_class();
    if let DecayClass::ExponentialDecay { eps: rate, .. } = class {
        // A field declared at the weight rate itself defeats B(eps).
        let own_compact = matches!(&p.field, Field::Shape(s) if s.support().is_some());
        if !own_compact && rate <= eps {
            return Err(Error::DivergentWeightedNorm { eps, decay_rate: rate });
        }
    }
    if p.is_zero() {
        return Ok(PotentialFunctionals::zero(eps, class));
    }
    let (c, a) = p.support_ball();
    let mut acc = Accum { rel_err: 0.0 };
    let l1 = acc.take(ball_integral(|x| p.value(x).norm(), c, a, spec), "L1 norm")?;
    let l2 = acc.take(ball_integral(|x| p.value(x).norm_sqr(), c, a, spec), "L2 norm")?;
    let b = acc.take(ball_integral(|x| weighted(p.value(x).norm(), eps * norm(x)), c, a, spec), "weighted L1 norm")?;
    let mut tail_rel = 0.0;
    if let DecayClass::ExponentialDecay { eps: rate, amp } = class {
        let rho = p.truncation_radius();
        let tail = exponential_tail(amp, rate - eps, rho);
        tail_rel = tail / b.max(1e-300);
        debug!("weighted L1 tail beyond {rho:.4}: {tail:e}");
        if !tail.is_finite() {
            return Err(Error::DivergentWeightedNorm { eps, decay_rate: rate });
        }
    }

    let extra = [c, [0.0; 3]];
    let extra: Vec<Vec3> = extra.into_iter().filter(|x| dist(*x, c) <= a).collect();
    let (_, linf) = sample_sup(|x| p.value(x).norm(), c, a, &extra, spec);
    let (_, grad) = sample_sup(|x| p.grad_norm(x), c, a, &extra, spec);
    let (_, wsup) = sample_sup(|x| weighted(p.value(x).norm(), eps * norm(x)), c, a, &extra, spec);
    let (_, wgrad) = sample_sup(|x| weighted(p.grad_norm(x), eps * norm(x)) / eps, c, a, &extra, spec);

    let kato = kato_constant(p, spec)?;
    acc.rel_err = acc.rel_err.max(kato.1);

    Ok(PotentialFunctionals {
        l1_norm: l1,
        l2_norm_sq: l2,
        linf_norm: linf,
        grad_linf_norm: grad,
        support_diameter: class.is_compact().then_some(2.0 * a),
        kato_constant: kato.0,
        weighted_sup: wsup.max(linf),
        weighted_l1: b.max(l1),
        hypothesis_amp: wgrad.max(wsup),
        eps,
        decay_class: class,
        quadrature_error_estimate: acc.rel_err + tail_rel,
    })
}

/// `max_x ∫|V(y)|/|x−y| dy` and the relative quadrature error.
pub fn kato_constant(p: &Potential, spec: &QuadSpec) -> Result<(f64, f64)> {
    let (c, a) = p.support_ball();
    let coarse = QuadSpec { rel_tol: spec.rel_tol.max(1e-6), ..*spec };
    let eval = |x: Vec3, s: &QuadSpec| -> f64 { kato_integral(p, x, s).value };
    // Radial families peak at the center; otherwise search a coarse cloud.
    let mut starts = vec![c];
    if !p.is_radial() {
        let n = (spec.sup_samples / 64).clamp(16, 128);
        let cloud = halton_ball(n, c, a, spec.seed ^ 0x6b61746f);
        let vals = crate::par::map_slice(&cloud, |x| eval(*x, &coarse));
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
        starts.extend(order.iter().take(2).map(|&i| cloud[i]));
    }
    let step = 0.25 * a;
    let best = crate::par::map_slice(&starts, |s| compass_maximize(&|x| eval(x, &coarse), *s, step, 1e-4 * a));
    let (x, _) = best.into_iter().fold(([0.0; 3], f64::NEG_INFINITY), |b, cur| if cur.1 > b.1 { cur } else { b });
    let est = kato_integral(p, x, spec);
    if !est.converged {
        return Err(Error::QuadratureNotConverged { what: "Kato integral".into(), error: est.error });
    }
    let rel = if est.value > 0.0 { est.error / est.value } else { 0.0 };
    Ok((est.value, rel))
}

/// Worst-case ratios of the exponential decay hypothesis over samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// `max |V(x)| e^{eps|x|} / amp`.
    pub value_ratio: f64,
    /// `max |∇V(x)| e^{eps|x|} / (eps amp)`.
    pub grad_ratio: f64,
    pub worst_point: Vec3,
    pub samples: usize,
}

/// Checks `|V| <= amp e^{-eps|x|}` and `|∇V| <= eps amp e^{-eps|x|}` on
/// `n_samples` low-discrepancy points of the truncation ball (plus local
/// refinement of the worst ones).
pub fn validate_decay_hypothesis(p: &Potential, n_samples: usize) -> Result<DecayReport> {
    let DecayClass::ExponentialDecay { eps, amp } = p.decay_class() else {
        return Err(Error::WrongDecayClass { expected: "exponentially decaying" });
    };
    let (c, a) = p.support_ball();
    let spec = QuadSpec { sup_samples: n_samples, ..QuadSpec::default() };
    let scale = if amp > 0.0 { amp } else { f64::MIN_POSITIVE };
    let extra: Vec<Vec3> = [c, [0.0; 3]].into_iter().filter(|x| dist(*x, c) <= a).collect();
    let (pv, value_ratio) = sample_sup(|x| weighted(p.value(x).norm(), eps * norm(x)) / scale, c, a, &extra, &spec);
    let (pg, grad_ratio) = sample_sup(|x| weighted(p.grad_norm(x), eps * norm(x)) / (eps * scale), c, a, &extra, &spec);
    let (value_ratio, grad_ratio) = (value_ratio.max(0.0), grad_ratio.max(0.0));
    let worst_point = if value_ratio >= grad_ratio { pv } else { pg };
    let worst = value_ratio.max(grad_ratio);
    if worst > 1.0 + 1e-9 {
        return Err(Error::HypothesisViolated { point: worst_point, ratio: worst });
    }
    Ok(DecayReport { value_ratio, grad_ratio, worst_point, samples: n_samples })
}

/// The smallest amplitude making `p` satisfy the exponential hypothesis at
/// rate `eps` (sampled estimate, padded by `1 + 1e-6`).
pub fn exponential_envelope(p: &Potential, eps: f64, spec: &QuadSpec) -> f64 {
    let (c, a) = p.support_ball();
    let extra: Vec<Vec3> = [c, [0.0; 3]].into_iter().filter(|x| dist(*x, c) <= a).collect();
    let (_, v) = sample_sup(|x| weighted(p.value(x).norm(), eps * norm(x)), c, a, &extra, spec);
    let (_, g) = sample_sup(|x| weighted(p.grad_norm(x), eps * norm(x)) / eps, c, a, &extra, spec);
    v.max(g) * (1.0 + 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pots = [
            Potential::bump(Complex64::new(0.3, -0.7), 1.3),
            Potential::mollified_exponential(0.2, 2.0),
            Potential::new(Shape::Gaussian { width: 0.8, envelope_rate: 1.0 }, c(1.5), [0.1, 0.0, -0.2]).unwrap(),
            Potential::screened_bump(c(-3.0)),
            Potential::new(
                Shape::Tabulated { r: vec![0.0, 0.3, 0.7, 1.0, 1.5], v: vec![1.0, 0.9, 0.5, 0.2, 0.0] },
                c(1.0),
                [0.0; 3],
            )
            .unwrap(),
        ];
        let pts = [[0.31, -0.2, 0.4], [0.05, 0.6, -0.1], [-0.4, -0.3, 0.2]];
        for p in &pots {
            for x in pts {
                let g = p.gradient(x);
                for i in 0..3 {
                    let h = 1e-6;
                    let (mut xp, mut xm) = (x, x);
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (p.value(xp) - p.value(xm)) / (2.0 * h);
                    let scale = p.grad_norm(x).max(1e-8);
                    assert!((fd - g[i]).norm() < 1e-5 * scale, "{p:?} {x:?} {i}");
                }
            }
        }
    }

    #[test]
    fn compact_fields_vanish_outside_support() {
        let p = Potential::new(Shape::Bump { radius: 0.7 }, c(2.0), [0.5, 0.0, 0.0]).unwrap();
        let DecayClass::CompactSupport { support_radius } = p.decay_class() else { panic!() };
        assert!((support_radius - 1.2).abs() < 1e-15);
        for x in halton_ball(500, [0.0; 3], 5.0, 1) {
            if norm(x) >= support_radius {
                assert_eq!(p.value(x), c(0.0));
                assert_eq!(p.grad_norm(x), 0.0);
            }
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = PotentialSpec {
            shape: Shape::MollifiedExponential { rate: 2.0, smoothing: None },
            coupling: CouplingSpec::Polar { magnitude: 0.2, phase: 0.5 },
            center: [0.0; 3],
            decay_class: None,
        };
        let s = serde_json::to_string(&spec).unwrap();
        let back: PotentialSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec, back);
        let p = Potential::from_spec(&back).unwrap();
        assert!((p.coupling() - Complex64::from_polar(0.2, 0.5)).norm() < 1e-15);
        assert_eq!(p.content_hash(), Potential::from_spec(&spec).unwrap().content_hash());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(Potential::new(Shape::Bump { radius: 0.0 }, c(1.0), [0.0; 3]).is_err());
        assert!(Potential::new(Shape::Tabulated { r: vec![0.1, 0.2], v: vec![1.0, 0.0] }, c(1.0), [0.0; 3]).is_err());
        let spec = PotentialSpec {
            shape: Shape::Gaussian { width: 1.0, envelope_rate: 1.0 },
            coupling: CouplingSpec::default(),
            center: [0.0; 3],
            decay_class: Some(DecayClass::CompactSupport { support_radius: 3.0 }),
        };
        assert!(Potential::from_spec(&spec).is_err());
    }

    #[test]
    fn exponential_truncation_tail() {
        let rho = exponential_truncation_radius(0.2, 2.0, 1e-10);
        assert!(exponential_tail(0.2, 2.0, rho) <= 1e-10 * (1.0 + 1e-9));
        assert!(exponential_tail(0.2, 2.0, rho * 0.99) > 1e-10);
    }

    #[test]
    fn divergent_weight_is_rejected() {
        let p = Potential::mollified_exponential(0.2, 1.0);
        let err = measure_functionals(&p, 1.0, &QuadSpec::default()).unwrap_err();
        assert!(matches!(err, Error::DivergentWeightedNorm { .. }));
    }

    #[test]
    fn zero_potential_functionals() {
        let f = measure_functionals(&Potential::zero(), 1.0, &QuadSpec::default()).unwrap();
        assert_eq!(f.l1_norm, 0.0);
        assert_eq!(f.kato_constant, 0.0);
        assert_eq!(f.weighted_l1, 0.0);
    }
}
