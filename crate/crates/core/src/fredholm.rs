//! Nyström discretization of `R₀(λ)V` and the determinant
//! `D(k) = det(I − (R₀V)²) = det(I − A) det(I + A)`.
//!
//! Zeros of `det(I + A)` are eigenvalues of `−Δ + V`, zeros of `det(I − A)`
//! those of `−Δ − V`; both factors are kept so callers can report the
//! decomposition.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use log::{debug, trace};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{add, dist, scale, Vec3};
use crate::kernel::{iterated_kernel, SpectralPoint};
use crate::linalg::{log_det, CMatrix, LogDet};
use crate::potential::{Potential, PotentialFunctionals};
use crate::quadrature::{gauss_legendre_on, sphere_rule, QuadSpec};
use crate::scalarbounds::{determinant_ceiling, theorem2_amp, BoundMode};

/// How the singular diagonal of the resolvent kernel is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalRule {
    /// Average of the kernel over the ball with the cell's volume.
    VolumeSphere,
    /// Zero diagonal; converges more slowly.
    Dropped,
    /// Singularity subtraction: the diagonal makes each row integrate
    /// `e^{ik|x−y|}/(4π|x−y|) V(y)` exactly, using precomputed spherical
    /// means of `V` about every node.
    Subtracted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub n_radial: usize,
    pub n_angular: usize,
    /// Overrides the potential's truncation radius.
    pub radius: Option<f64>,
    pub diagonal: DiagonalRule,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_radial: 12, n_angular: 38, radius: None, diagonal: DiagonalRule::Subtracted }
    }
}

const LEBEDEV_SIZES: [usize; 5] = [6, 14, 26, 38, 50];

impl GridSpec {
    pub fn new(n_radial: usize, n_angular: usize) -> Self {
        GridSpec { n_radial, n_angular, ..Default::default() }
    }

    /// Roughly twice the nodes, spread over both directions so cells keep
    /// their aspect ratio: 1.5× radial nodes and the next angular rule.
    pub fn refined(&self) -> Self {
        let n_angular = match LEBEDEV_SIZES.iter().position(|&n| n == self.n_angular) {
            Some(i) if i + 1 < LEBEDEV_SIZES.len() => LEBEDEV_SIZES[i + 1],
            _ => (self.n_angular * 3).div_ceil(2),
        };
        GridSpec { n_radial: (self.n_radial * 3).div_ceil(2), n_angular, ..*self }
    }

    /// Parses `NRxNA`, e.g. `12x38`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("grid must look like 12x38, got {s:?}"));
        let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let nr = a.trim().parse().map_err(|_| bad())?;
        let na = b.trim().parse().map_err(|_| bad())?;
        Ok(GridSpec::new(nr, na))
    }
}

/// Spherical product rule over the truncation ball.
#[derive(Debug, Clone)]
pub struct Grid {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub center: Vec3,
    pub radius: f64,
    pub spec: GridSpec,
    /// Per-node radial tables for [`DiagonalRule::Subtracted`].
    pub means: Option<Arc<Vec<SphereMean>>>,
}

/// `Φ(k) = Σ c_q e^{ik r_q}` approximates `∫ e^{ik|x−y|}/(4π|x−y|) V(y) dy`
/// over the grid ball for one node `x`.
#[derive(Debug, Clone, Default)]
pub struct SphereMean {
    pub r: Vec<f64>,
    pub c: Vec<Complex64>,
}

impl SphereMean {
    pub fn eval(&self, k: Complex64) -> Complex64 {
        let ik = Complex64::i() * k;
        self.r.iter().zip(&self.c).map(|(r, c)| c * (ik * r).exp()).sum()
    }
}

const MEAN_ORDER: usize = 24;

fn sphere_mean(p: &Potential, x: Vec3, center: Vec3, a: f64) -> SphereMean {
    let s = dist(x, center);
    let mut cuts = vec![0.0, s + a];
    for c in [s, (a - s).abs()] {
        if c > 1e-12 * a && c < s + a - 1e-12 * a {
            cuts.push(c);
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut out = SphereMean::default();
    let radial = p.is_radial().then_some(|rho: f64| p.radial_value(rho).unwrap_or_default());
    let rule = sphere_rule(50);
    for w in cuts.windows(2) {
        let (rs, ws) = gauss_legendre_on(MEAN_ORDER, w[0], w[1]);
        for (r, wr) in rs.iter().zip(&ws) {
            // (1/4π) r M(r) with M the integral of V over the sphere of radius r.
            let m = match &radial {
                Some(v) if s > 1e-12 * a => {
                    let (lo, hi) = ((s - r).abs(), (s + r).min(a));
                    if hi <= lo {
                        Complex64::default()
                    } else {
                        let (ps, pw) = gauss_legendre_on(MEAN_ORDER, lo, hi);
                        let inner: Complex64 = ps.iter().zip(&pw).map(|(q, wq)| v(*q) * (q * wq)).sum();
                        inner / (2.0 * s)
                    }
                }
                Some(v) if *r < a => v(*r) * *r,
                Some(_) => Complex64::default(),
                None => {
                    let mut acc = Complex64::default();
                    for (d, wa) in rule.points.iter().zip(&rule.weights) {
                        let y = add(x, scale(*d, *r));
                        if dist(y, center) < a {
                            acc += p.value(y) * *wa;
                        }
                    }
                    // Sphere weights sum to 4π.
                    acc * *r / (4.0 * PI)
                }
            };
            out.r.push(*r);
            out.c.push(m * *wr);
        }
    }
    out
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(Vec3) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Gauss–Legendre in the radius (weights carry `r²`) times a sphere rule.
pub fn build_grid(p: &Potential, n_radial: usize, n_angular: usize) -> Result<Grid> {
    build_grid_spec(p, &GridSpec::new(n_radial, n_angular))
}

pub fn build_grid_spec(p: &Potential, spec: &GridSpec) -> Result<Grid> {
    if spec.n_radial < 2 || spec.n_angular < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least 2 radial and 2 angular nodes, got {}x{}",
            spec.n_radial, spec.n_angular
        )));
    }
    let (center, own) = p.support_ball();
    let radius = spec.radius.unwrap_or(own);
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("grid radius must be positive and finite, got {radius}")));
    }
    let rule = sphere_rule(spec.n_angular);
    let (rs, ws) = gauss_legendre_on(spec.n_radial, 0.0, radius);
    let mut nodes = Vec::with_capacity(rs.len() * rule.len());
    let mut weights = Vec::with_capacity(rs.len() * rule.len());
    for (r, w) in rs.iter().zip(&ws) {
        for (d, wa) in rule.points.iter().zip(&rule.weights) {
            nodes.push(add(center, scale(*d, *r)));
            weights.push(w * r * r * wa);
        }
    }
    let means = (spec.diagonal == DiagonalRule::Subtracted)
        .then(|| Arc::new(crate::par::map_slice(&nodes, |x| sphere_mean(p, *x, center, radius))));
    Ok(Grid { nodes, weights, center, radius, spec: *spec, means })
}

/// The discretized Birman–Schwinger factor `A ≈ R₀(λ)V` at one `k`.
#[derive(Debug, Clone)]
pub struct NystromSystem {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub bs_matrix: CMatrix,
    pub k: SpectralPoint,
    /// Kernel values `A_ii / (V_i w_i)` used on the diagonal.
    pub diag_correction: Vec<Complex64>,
}

impl NystromSystem {
    pub fn dim(&self) -> usize {
        self.bs_matrix.dim()
    }

    /// Builds a system from an explicit matrix (tests, cached matrices).
    pub fn from_matrix(bs_matrix: CMatrix, k: SpectralPoint) -> Self {
        let n = bs_matrix.dim();
        NystromSystem { nodes: vec![[0.0; 3]; n], weights: vec![0.0; n], bs_matrix, k, diag_correction: vec![] }
    }
}

/// `∫₀^ρ r e^{ikr} dr`.
fn radial_cell_integral(k: Complex64, rho: f64) -> Complex64 {
    let z = Complex64::i() * k * rho;
    if z.norm() < 0.5 {
        // Σ zⁿ ρ² / (n! (n+2))
        let mut term = Complex64::new(rho * rho, 0.0);
        let mut sum = term / 2.0;
        for n in 1..30 {
            term *= z / n as f64;
            let add = term / (n + 2) as f64;
            sum += add;
            if add.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        let ik = Complex64::i() * k;
        z.exp() * (rho / ik + 1.0 / (k * k)) - 1.0 / (k * k)
    }
}

/// Cell average of `e^{ikr}/(4πr)` over the ball of volume `w`.
pub fn diagonal_cell_average(k: Complex64, w: f64) -> Complex64 {
    let rho = (3.0 * w / (4.0 * PI)).cbrt();
    radial_cell_integral(k, rho) / w
}

/// `A[i][j] = e^{ik|xᵢ−xⱼ|}/(4π|xᵢ−xⱼ|) V(xⱼ) wⱼ`, diagonal by cell averages.
pub fn assemble_bs_matrix(grid: &Grid, k: SpectralPoint, p: &Potential) -> NystromSystem {
    let n = grid.len();
    let vw: Vec<Complex64> = grid.nodes.iter().zip(&grid.weights).map(|(x, w)| p.value(*x) * *w).collect();
    let kk = k.k;
    let cell: Vec<Complex64> = match grid.spec.diagonal {
        DiagonalRule::VolumeSphere => grid.weights.iter().map(|w| diagonal_cell_average(kk, *w)).collect(),
        DiagonalRule::Dropped | DiagonalRule::Subtracted => vec![Complex64::new(0.0, 0.0); n],
    };
    let means = match (grid.spec.diagonal, &grid.means) {
        (DiagonalRule::Subtracted, Some(m)) => Some(m.clone()),
        (DiagonalRule::Subtracted, None) => panic!("grid built without spherical means"),
        _ => None,
    };
    let mut re = vec![0.0; n * n];
    let mut im = vec![0.0; n * n];
    let rows = crate::par::map_range(n, |i| {
        let xi = grid.nodes[i];
        let mut rr = vec![0.0; n];
        let mut ri = vec![0.0; n];
        let mut off = Complex64::new(0.0, 0.0);
        for j in 0..n {
            if i == j || vw[j] == Complex64::new(0.0, 0.0) {
                continue;
            }
            let r = dist(xi, grid.nodes[j]);
            let (s, c) = (kk.re * r).sin_cos();
            let m = (-kk.im * r).exp() / (4.0 * PI * r);
            let a = Complex64::new(m * c, m * s) * vw[j];
            off += a;
            rr[j] = a.re;
            ri[j] = a.im;
        }
        let aii = match &means {
            Some(m) => m[i].eval(kk) - off,
            None => cell[i] * vw[i],
        };
        rr[i] = aii.re;
        ri[i] = aii.im;
        let g = if vw[i] == Complex64::new(0.0, 0.0) { Complex64::new(0.0, 0.0) } else { aii / vw[i] };
        (rr, ri, g)
    });
    let mut diag_correction = Vec::with_capacity(n);
    for (i, (rr, ri, g)) in rows.into_iter().enumerate() {
        diag_correction.push(g);
        re[i * n..(i + 1) * n].copy_from_slice(&rr);
        im[i * n..(i + 1) * n].copy_from_slice(&ri);
    }
    NystromSystem {
        nodes: grid.nodes.clone(),
        weights: grid.weights.clone(),
        bs_matrix: CMatrix::from_planes(n, re, im),
        k,
        diag_correction,
    }
}

/// Gate for an arbitrary `k`: physical sheet when `Im k > 0`, otherwise the
/// continuation strip `Im k > −ε/4`.
pub fn spectral_point(k: Complex64, eps: f64) -> Result<SpectralPoint> {
    if k.im > 0.0 {
        SpectralPoint::new(k)
    } else {
        SpectralPoint::continued(k, eps)
    }
}

/// A determinant with its resolution and, when two resolutions were used,
/// the difference between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterminantValue {
    /// `phase · e^{log_abs}`; non-finite when out of floating range.
    pub value: Complex64,
    pub log_abs: f64,
    pub phase: Complex64,
    /// An exact zero pivot: the discrete system has an eigenvalue at `k`.
    pub singular: bool,
    pub resolution: usize,
    pub error_estimate: Option<f64>,
}

impl DeterminantValue {
    fn from_log(d: LogDet, resolution: usize) -> Self {
        DeterminantValue {
            value: d.value(),
            log_abs: d.log_abs,
            phase: d.phase,
            singular: d.singular,
            resolution,
            error_estimate: None,
        }
    }

    pub fn log_det(&self) -> LogDet {
        LogDet { log_abs: self.log_abs, phase: self.phase, singular: self.singular }
    }

    pub fn abs(&self) -> f64 {
        if self.singular {
            0.0
        } else {
            self.log_abs.exp()
        }
    }
}

/// `det(I + A)`, `det(I − A)` and their product `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterminantSplit {
    pub plus: DeterminantValue,
    pub minus: DeterminantValue,
    pub full: DeterminantValue,
}

pub fn determinant_plus(sys: &NystromSystem) -> DeterminantValue {
    DeterminantValue::from_log(log_det(sys.bs_matrix.identity_plus(1.0)), sys.dim())
}

pub fn determinant_minus(sys: &NystromSystem) -> DeterminantValue {
    DeterminantValue::from_log(log_det(sys.bs_matrix.identity_plus(-1.0)), sys.dim())
}

pub fn determinant_split(sys: &NystromSystem) -> DeterminantSplit {
    let plus = determinant_plus(sys);
    let minus = determinant_minus(sys);
    let full = DeterminantValue::from_log(plus.log_det().mul(&minus.log_det()), sys.dim());
    DeterminantSplit { plus, minus, full }
}

/// `D = det(I − A²)`, factored as `det(I − A) det(I + A)`.
pub fn determinant(sys: &NystromSystem) -> DeterminantValue {
    determinant_split(sys).full
}

/// `det(I − A²)` from the explicitly formed square (identity check).
pub fn determinant_direct(sys: &NystromSystem) -> DeterminantValue {
    let a2 = sys.bs_matrix.matmul(&sys.bs_matrix);
    DeterminantValue::from_log(log_det(a2.identity_plus(-1.0)), sys.dim())
}

/// Series coefficients `(−1)ⁿ eₙ(K)` of `det(I − K) = Σ (−1)ⁿ eₙ(K)` for
/// `n = 1..=nmax`, from sums of principal minors.
pub fn series_terms_from_minors(k: &CMatrix, nmax: usize) -> Result<Vec<Complex64>> {
    if nmax == 0 || nmax > 3 {
        return Err(Error::TooManyTerms(nmax));
    }
    let n = k.dim();
    let mut out = vec![-k.trace()];
    if nmax >= 2 {
        let e2: Complex64 = crate::par::map_range(n, |i| {
            let mut s = Complex64::new(0.0, 0.0);
            for j in i + 1..n {
                s += k.get(i, i) * k.get(j, j) - k.get(i, j) * k.get(j, i);
            }
            s
        })
        .into_iter()
        .sum();
        out.push(e2);
    }
    if nmax >= 3 {
        let e3: Complex64 = crate::par::map_range(n, |i| {
            let mut s = Complex64::new(0.0, 0.0);
            for j in i + 1..n {
                for l in j + 1..n {
                    let g = |a: usize, b: usize| k.get(a, b);
                    s += g(i, i) * (g(j, j) * g(l, l) - g(j, l) * g(l, j))
                        - g(i, j) * (g(j, i) * g(l, l) - g(j, l) * g(l, i))
                        + g(i, l) * (g(j, i) * g(l, j) - g(j, j) * g(l, i));
                }
            }
            s
        })
        .into_iter()
        .sum();
        out.push(-e3);
    }
    Ok(out)
}

/// The same coefficients from power traces via Newton's identities.
pub fn series_terms_newton(k: &CMatrix, nmax: usize) -> Result<Vec<Complex64>> {
    if nmax == 0 || nmax > 3 {
        return Err(Error::TooManyTerms(nmax));
    }
    let mut powers = vec![k.trace()];
    let mut kp = k.clone();
    for _ in 1..nmax {
        kp = kp.matmul(k);
        powers.push(kp.trace());
    }
    let mut e = vec![Complex64::new(1.0, 0.0)];
    for m in 1..=nmax {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 1..=m {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * e[m - i] * powers[i - 1];
        }
        e.push(s / m as f64);
    }
    Ok((1..=nmax).map(|m| if m % 2 == 1 { -e[m] } else { e[m] }).collect())
}

/// The `nterm`-th Fredholm series term
/// `(−1)ⁿ/n! ∫…∫ det[G_λ(xᵢ, xⱼ) V(xⱼ)] dx₁…dxₙ`, with the continuum iterated
/// kernel `G_λ` (adaptive prolate quadrature) sampled on the product grid.
///
/// Cost is one kernel integral per grid node for `n = 1` and one per node
/// pair (using `G(x, y) = G(y, x)`) for `n ≥ 2`; keep the grid small.
pub fn fredholm_series_term(
    nterm: usize,
    k: SpectralPoint,
    p: &Potential,
    grid: &GridSpec,
    quad: &QuadSpec,
) -> Result<Complex64> {
    if nterm == 0 || nterm > 3 {
        return Err(Error::TooManyTerms(nterm));
    }
    let g = build_grid_spec(p, grid)?;
    let n = g.len();
    let vw: Vec<Complex64> = g.nodes.iter().zip(&g.weights).map(|(x, w)| p.value(*x) * *w).collect();
    let pairs: Vec<(usize, usize)> = if nterm == 1 {
        (0..n).map(|i| (i, i)).collect()
    } else {
        (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
    };
    let vals = crate::par::map_slice(&pairs, |&(i, j)| {
        if vw[i] == Complex64::new(0.0, 0.0) && vw[j] == Complex64::new(0.0, 0.0) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        iterated_kernel(k.k, g.nodes[i], g.nodes[j], p, quad).map(|kv| kv.value)
    });
    let mut kmat = CMatrix::zeros(n);
    for (&(i, j), v) in pairs.iter().zip(vals) {
        let gij = v?;
        kmat.set(i, j, gij * vw[j]);
        kmat.set(j, i, gij * vw[i]);
    }
    Ok(series_terms_from_minors(&kmat, nterm)?[nterm - 1])
}

/// The `nterm`-th series coefficient of the discrete determinant
/// `det(I − A²)` itself (principal minors of `A²`): the exact Taylor
/// coefficient of the Nyström `D` in the coupling.
pub fn nystrom_series_term(nterm: usize, k: SpectralPoint, p: &Potential, grid: &GridSpec) -> Result<Complex64> {
    if nterm == 0 || nterm > 3 {
        return Err(Error::TooManyTerms(nterm));
    }
    let g = build_grid_spec(p, grid)?;
    let sys = assemble_bs_matrix(&g, k, p);
    let kmat = sys.bs_matrix.matmul(&sys.bs_matrix);
    Ok(series_terms_from_minors(&kmat, nterm)?[nterm - 1])
}

/// First series term from the continuum kernel:
/// `−Σᵢ G_λ(xᵢ, xᵢ) V(xᵢ) wᵢ`.
pub fn continuum_trace_term(k: Complex64, p: &Potential, grid: &GridSpec, quad: &QuadSpec) -> Result<Complex64> {
    fredholm_series_term(1, SpectralPoint { k, lambda: k * k, continued: k.im <= 0.0 }, p, grid, quad)
}

/// `|D(k)|` at the working resolution and the ceiling `f(AB/2πε)`.
pub fn determinant_bound_check(
    k: Complex64,
    p: &Potential,
    funcs: &PotentialFunctionals,
    eps: f64,
    grid: &GridSpec,
) -> Result<(f64, f64)> {
    let sp = spectral_point(k, eps)?;
    let a = match BoundMode::for_class(funcs.decay_class) {
        BoundMode::Theorem1 => funcs.weighted_sup,
        BoundMode::Theorem2 => theorem2_amp(funcs),
    };
    let bound = determinant_ceiling(a, funcs.weighted_l1, eps);
    if p.is_zero() {
        return Ok((1.0, bound));
    }
    let g = build_grid_spec(p, grid)?;
    let d = determinant(&assemble_bs_matrix(&g, sp, p));
    Ok((d.abs(), bound))
}

/// On-disk cache of assembled matrices.
///
/// Layout (little endian): 8-byte magic, `u32` version, `u64` dimension,
/// `k` as two `f64`, then `n²` interleaved `(re, im)` `f64` pairs row-major.
#[derive(Debug, Clone)]
pub struct MatrixCache {
    dir: PathBuf,
}

const CACHE_MAGIC: &[u8; 8] = b"EBNYSTRM";
const CACHE_VERSION: u32 = 1;

impl MatrixCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::Cache(format!("{}: {e}", dir.display())))?;
        Ok(MatrixCache { dir })
    }

    /// Key from the potential hash, grid and `k` (bit-exact).
    pub fn key(potential_hash: &str, grid: &GridSpec, k: Complex64) -> String {
        let mut h = Sha256::new();
        h.update(potential_hash.as_bytes());
        h.update(serde_json::to_vec(grid).expect("grid spec serializes"));
        h.update(k.re.to_le_bytes());
        h.update(k.im.to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.nys"))
    }

    pub fn store(&self, key: &str, k: Complex64, m: &CMatrix) -> Result<()> {
        let n = m.dim();
        let mut buf = Vec::with_capacity(36 + 16 * n * n);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        buf.extend_from_slice(&k.re.to_le_bytes());
        buf.extend_from_slice(&k.im.to_le_bytes());
        for (a, b) in m.re().iter().zip(m.im()) {
            buf.extend_from_slice(&a.to_le_bytes());
            buf.extend_from_slice(&b.to_le_bytes());
        }
        let tmp = self.path(&format!("{key}.tmp"));
        let err = |e: std::io::Error| Error::Cache(format!("{}: {e}", tmp.display()));
        fs::File::create(&tmp).and_then(|mut f| f.write_all(&buf)).map_err(err)?;
        fs::rename(&tmp, self.path(key)).map_err(err)
    }

    /// `Ok(None)` when absent; `Err` on a malformed or mismatched file.
    pub fn load(&self, key: &str, k: Complex64) -> Result<Option<CMatrix>> {
        let path = self.path(key);
        let mut buf = Vec::new();
        match fs::File::open(&path) {
            Ok(mut f) => f.read_to_end(&mut buf).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::Cache(format!("{}: {e}", path.display()))),
        };
        let bad = |m: &str| Err(Error::Cache(format!("{}: {m}", path.display())));
        if buf.len() < 36 || &buf[..8] != CACHE_MAGIC {
            return bad("bad magic");
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        if u32_at(8) != CACHE_VERSION {
            return bad("unsupported version");
        }
        let n = u64_at(12) as usize;
        if buf.len() != 36 + 16 * n * n {
            return bad("truncated");
        }
        if f64_at(20).to_bits() != k.re.to_bits() || f64_at(28).to_bits() != k.im.to_bits() {
            return bad("k mismatch");
        }
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for e in 0..n * n {
            re.push(f64_at(36 + 16 * e));
            im.push(f64_at(44 + 16 * e));
        }
        Ok(Some(CMatrix::from_planes(n, re, im)))
    }
}

/// Which determinant factor an evaluator returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    /// `det(I + A)`: eigenvalues of `−Δ + V`.
    Plus,
    /// `det(I − A)`: eigenvalues of `−Δ − V`.
    Minus,
    /// `D = det(I − A²)`.
    Full,
}

/// Memoized determinant evaluation for one potential and grid.
pub struct FredholmEvaluator {
    potential: Potential,
    grid: Grid,
    eps: f64,
    cache: Option<(MatrixCache, String)>,
    memo: Mutex<HashMap<(u64, u64, Factor), LogDet>>,
    evaluations: AtomicUsize,
}

impl FredholmEvaluator {
    pub fn new(p: &Potential, grid: &GridSpec, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        Ok(FredholmEvaluator {
            potential: p.clone(),
            grid: build_grid_spec(p, grid)?,
            eps,
            cache: None,
            memo: Mutex::new(HashMap::new()),
            evaluations: AtomicUsize::new(0),
        })
    }

    /// Persists assembled matrices; requires a hashable (built-in) potential.
    pub fn with_cache(mut self, cache: MatrixCache) -> Result<Self> {
        let hash = self
            .potential
            .content_hash()
            .ok_or_else(|| Error::Cache("custom potentials have no content hash".into()))?;
        self.cache = Some((cache, hash));
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// Number of factorizations performed (memo hits excluded).
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn system(&self, k: Complex64) -> Result<NystromSystem> {
        let sp = spectral_point(k, self.eps)?;
        if let Some((cache, hash)) = &self.cache {
            let key = MatrixCache::key(hash, &self.grid.spec, k);
            if let Some(m) = cache.load(&key, k)? {
                if m.dim() == self.grid.len() {
                    trace!("cache hit at k = {k}");
                    let mut sys = NystromSystem::from_matrix(m, sp);
                    sys.nodes = self.grid.nodes.clone();
                    sys.weights = self.grid.weights.clone();
                    return Ok(sys);
                }
            }
            let sys = assemble_bs_matrix(&self.grid, sp, &self.potential);
            cache.store(&key, k, &sys.bs_matrix)?;
            return Ok(sys);
        }
        Ok(assemble_bs_matrix(&self.grid, sp, &self.potential))
    }

    pub fn eval(&self, k: Complex64, factor: Factor) -> Result<LogDet> {
        let key = (k.re.to_bits(), k.im.to_bits(), factor);
        if let Some(v) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(*v);
        }
        let sys = self.system(k)?;
        let value = match factor {
            Factor::Plus => determinant_plus(&sys).log_det(),
            Factor::Minus => determinant_minus(&sys).log_det(),
            Factor::Full => {
                let s = determinant_split(&sys);
                let mut memo = self.memo.lock().expect("memo lock");
                memo.insert((key.0, key.1, Factor::Plus), s.plus.log_det());
                memo.insert((key.0, key.1, Factor::Minus), s.minus.log_det());
                s.full.log_det()
            }
        };
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.memo.lock().expect("memo lock").insert(key, value);
        Ok(value)
    }

    /// `D(k)` at this resolution and at the refined grid, with the difference
    /// as error estimate.
    pub fn with_error(&self, k: Complex64) -> Result<DeterminantSplit> {
        let sp = spectral_point(k, self.eps)?;
        let coarse = determinant_split(&self.system(k)?);
        let fine_grid = build_grid_spec(&self.potential, &self.grid.spec.refined())?;
        let fine = determinant_split(&assemble_bs_matrix(&fine_grid, sp, &self.potential));
        let est = |c: DeterminantValue, f: DeterminantValue| {
            let e = if c.value.is_finite() && f.value.is_finite() {
                (c.value - f.value).norm()
            } else {
                // Relative difference in log form.
                let dl = Complex64::new(c.log_abs - f.log_abs, (c.phase / f.phase).arg());
                dl.norm() * c.abs()
            };
            DeterminantValue { error_estimate: Some(e), ..c }
        };
        debug!("refined determinant at k = {k}: {} -> {}", coarse.full.value, fine.full.value);
        Ok(DeterminantSplit {
            plus: est(coarse.plus, fine.plus),
            minus: est(coarse.minus, fine.minus),
            full: est(coarse.full, fine.full),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_integral_series_matches_closed_form() {
        for k in [Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.4), Complex64::new(1.0, -0.2)] {
            for rho in [0.05, 0.3, 0.49] {
                let z = Complex64::i() * k * rho;
                let closed = z.exp() * (rho / (Complex64::i() * k) + 1.0 / (k * k)) - 1.0 / (k * k);
                let series = radial_cell_integral(k, rho);
                assert!((closed - series).norm() < 1e-12 * series.norm(), "{k} {rho}");
            }
        }
        // k → 0: ρ²/2
        let v = radial_cell_integral(Complex64::new(0.0, 0.0), 0.2);
        assert!((v.re - 0.02).abs() < 1e-17 && v.im == 0.0);
    }

    #[test]
    fn grid_spec_parse_and_refine() {
        assert_eq!(GridSpec::parse("12x38").unwrap(), GridSpec::new(12, 38));
        assert!(GridSpec::parse("12-38").is_err());
        let r = GridSpec::new(12, 38).refined();
        assert_eq!((r.n_radial, r.n_angular), (18, 50));
        assert_eq!(GridSpec::new(4, 50).refined().n_angular, 75);
    }

    #[test]
    fn newton_identities_match_minors() {
        let m = CMatrix::from_fn(7, |i, j| Complex64::new((i as f64 + 1.0).sin() * 0.3, (j as f64 * 0.7).cos() * 0.2));
        let a = series_terms_from_minors(&m, 3).unwrap();
        let b = series_terms_newton(&m, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12 * (1.0 + x.norm()));
        }
        assert_eq!(series_terms_newton(&m, 4), Err(Error::TooManyTerms(4)));
    }
}
