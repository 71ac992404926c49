//! The invariant suite: every inequality of the bound chain checked
//! numerically on one potential, each with its worst margin.

use log::info;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fredholm::{determinant_bound_check, Factor, FredholmEvaluator, GridSpec};
use crate::geometry::{dist, Vec3};
use crate::kernel::{hs_identity_check, iterated_kernel, proposition_bound};
use crate::potential::{measure_functionals, Potential, PotentialFunctionals};
use crate::quadrature::{halton_ball, QuadSpec};
use crate::scalarbounds::{
    extended, lemma1_constant, lemma1_kernel_bound, lemma2_constant, lemma2_kernel_bound, n_bound_theorem1,
    n_bound_theorem2, BoundMode, BoundParameters, BoundReport,
};
use crate::zerocount::{empirical_vs_bound, CompareOptions};

/// Deliberate corruption of one input, for testing that the suite fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Multiplies the kernel constant `C` (or `C̃`) used by the kernel check.
    ScaleKernelConstant(f64),
    /// Multiplies the determinant ceiling `f(AB/2πε)`.
    ScaleCeiling(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub eps: f64,
    pub mode: Option<BoundMode>,
    /// `(x, y, k)` samples for the kernel checks.
    pub kernel_samples: usize,
    pub quad: QuadSpec,
    pub grid: GridSpec,
    /// Run the eigenvalue location and bound chain (the slow part).
    pub counting: bool,
    /// Cross-check the bound at 200 bits.
    pub extended: bool,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            eps: 1.0,
            mode: None,
            kernel_samples: 20,
            quad: QuadSpec::default(),
            grid: GridSpec::default(),
            counting: true,
            extended: false,
            fault: None,
        }
    }
}

/// Outcome of one named check. `margin` is the worst `(rhs − lhs)/|rhs|` over
/// its samples; negative means violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub samples: usize,
    pub skipped: bool,
    pub detail: String,
}

impl Check {
    fn from_pairs(name: &str, pairs: &[(f64, f64)], slack: f64, detail: String) -> Check {
        let margin = pairs
            .iter()
            .map(
                |&(lhs, rhs)| {
                    if rhs == 0.0 && lhs == 0.0 {
                        0.0
                    } else {
                        (rhs - lhs) / rhs.abs().max(f64::MIN_POSITIVE)
                    }
                },
            )
            .fold(f64::INFINITY, f64::min);
        Check { name: name.into(), passed: margin >= -slack, margin, samples: pairs.len(), skipped: false, detail }
    }

    fn skipped(name: &str, detail: String) -> Check {
        Check { name: name.into(), passed: true, margin: f64::NAN, samples: 0, skipped: true, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub potential: String,
    pub mode: BoundMode,
    pub bound: BoundReport,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Deterministic `(x, y, k)` samples: points from the potential's ball and
/// `k` from `[−3, 3] × [0.1, 3.1]`.
pub fn kernel_samples(p: &Potential, n: usize, seed: u64) -> Vec<(Vec3, Vec3, Complex64)> {
    let (b, a) = p.support_ball();
    let xs = halton_ball(n, b, a, seed);
    let ys = halton_ball(n, b, a, seed.wrapping_add(1));
    let ks = halton_ball(n, [0.0; 3], 1.0, seed.wrapping_add(2));
    (0..n)
        .filter(|&i| dist(xs[i], ys[i]) > 1e-6)
        .map(|i| (xs[i], ys[i], Complex64::new(3.0 * ks[i][0], 0.1 + 3.0 * ks[i][1].abs())))
        .collect()
}

fn bound_for(f: &PotentialFunctionals, mode: BoundMode, params: &BoundParameters) -> Result<BoundReport> {
    match mode {
        BoundMode::Theorem1 => n_bound_theorem1(f, lemma1_constant(f)?, params),
        BoundMode::Theorem2 => n_bound_theorem2(f, lemma2_constant(f)?, params),
    }
}

/// Runs every check on `p`.
pub fn run_suite(p: &Potential, opts: &VerifyOptions) -> Result<VerifyReport> {
    let eps = opts.eps;
    let quad = &opts.quad;
    let funcs = measure_functionals(p, eps, quad)?;
    let mode = opts.mode.unwrap_or_else(|| BoundMode::for_class(funcs.decay_class));
    let bound = bound_for(&funcs, mode, &BoundParameters::new(eps))?;
    let mut checks = Vec::new();

    // Kernel estimates at sampled (x, y, k).
    let samples = kernel_samples(p, opts.kernel_samples, quad.seed);
    let constant = match mode {
        BoundMode::Theorem1 => lemma1_constant(&funcs)?,
        BoundMode::Theorem2 => lemma2_constant(&funcs)?,
    };
    let constant = match opts.fault {
        Some(Fault::ScaleKernelConstant(s)) => constant * s,
        _ => constant,
    };
    let rows = crate::par::map_slice(&samples, |&(x, y, k)| -> Result<(f64, f64, f64, f64, f64)> {
        let g = iterated_kernel(k, x, y, p, quad)?.value.norm();
        let lemma = match mode {
            BoundMode::Theorem1 => lemma1_kernel_bound(constant, k)?,
            BoundMode::Theorem2 => lemma2_kernel_bound(constant, eps, k)?,
        };
        let prop = proposition_bound(k, x, y, p, funcs.linf_norm, quad)?;
        let c = 0.5 * dist(x, y);
        let term_bound = match mode {
            BoundMode::Theorem1 => funcs.grad_linf_norm * (c + funcs.support_diameter.unwrap_or(f64::INFINITY)),
            BoundMode::Theorem2 => funcs.hypothesis_amp * (eps * c).exp(),
        };
        Ok((g, lemma, prop.bound, prop.integral_term, term_bound))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let lemma_name = match mode {
        BoundMode::Theorem1 => "lemma1_kernel",
        BoundMode::Theorem2 => "lemma2_kernel",
    };
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    checks.push(Check::from_pairs(lemma_name, &pairs, 1e-2, format!("|G| <= kernel bound, constant {constant:.6e}")));
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.2)).collect();
    checks.push(Check::from_pairs("proposition", &pairs, 0.0, "|G| <= ellipsoid bound".into()));
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.3, r.4)).collect();
    let detail = match mode {
        BoundMode::Theorem1 => "ellipsoid integral <= |grad V|_inf (c + d)",
        BoundMode::Theorem2 => "ellipsoid integral <= A e^{eps c}",
    };
    checks.push(Check::from_pairs("integral_term", &pairs, 1e-6, detail.into()));

    // Hilbert–Schmidt identity.
    let mut pairs = Vec::new();
    let mut ratios = Vec::new();
    for k in [Complex64::new(0.0, 1.0), Complex64::new(0.0, 2.0), Complex64::new(1.0, 1.0)] {
        let (lhs, rhs) = hs_identity_check(k, p, quad)?;
        let ratio = if rhs == 0.0 { 1.0 } else { lhs / rhs };
        ratios.push(ratio);
        pairs.push(((ratio - 1.0).abs(), 0.01));
    }
    checks.push(Check::from_pairs("hs_identity", &pairs, 0.0, format!("lhs/rhs = {ratios:?}")));

    // |D| against its ceiling on a 3×3 grid reaching Im k = −ε/8.
    let scale = match opts.fault {
        Some(Fault::ScaleCeiling(s)) => s,
        _ => 1.0,
    };
    let mut ks = Vec::new();
    for re in [-1.0, 0.0, 1.0] {
        for im in [-eps / 8.0, 0.5, 2.0] {
            ks.push(Complex64::new(re, im));
        }
    }
    let pairs = crate::par::map_slice(&ks, |&k| determinant_bound_check(k, p, &funcs, eps, &opts.grid))
        .into_iter()
        .map(|r| r.map(|(d, c)| (d, c * scale)))
        .collect::<Result<Vec<_>>>()?;
    checks.push(Check::from_pairs("determinant_ceiling", &pairs, 1e-9, "|D(k)| <= f(AB/2 pi eps)".into()));

    // Hadamard step |D(iT) − 1| ≤ f(arg) − 1 at admissible T.
    if bound.t_threshold > 0.0 && bound.t_threshold < 1e6 {
        let ev = FredholmEvaluator::new(p, &opts.grid, eps)?;
        let mut pairs = Vec::new();
        for factor in [1.01, 2.0, 4.0] {
            let t = factor * bound.t_threshold;
            let rep = bound_for(&funcs, mode, &BoundParameters::new(eps).with_t(t).forced())?;
            let d = ev.eval(Complex64::new(0.0, t), Factor::Full)?.value();
            pairs.push(((d - 1.0).norm(), crate::scalarbounds::f_series(rep.hadamard_arg) - 1.0));
        }
        checks.push(Check::from_pairs("hadamard", &pairs, 1e-9, "|D(iT) - 1| <= f(arg) - 1".into()));
    } else {
        checks.push(Check::skipped(
            "hadamard",
            format!("T threshold {:.3e} beyond the resolved range", bound.t_threshold),
        ));
    }

    // Counting chain.
    if opts.counting {
        let copts = CompareOptions { grid: opts.grid, quad: opts.quad, ..CompareOptions::default() };
        let cmp = empirical_vs_bound(p, eps, Some(mode), &copts)?;
        let mut detail = format!(
            "N(V) = {}, N(-V) = {}, N_D = {}, n_bound = {:.6e}",
            cmp.n_empirical_plus, cmp.n_empirical_minus, cmp.n_d, cmp.bound.n_bound
        );
        if let Some(j) = &cmp.jensen {
            detail += &format!(", inside = {}, jensen = {:.6e}", j.n_inside, j.jensen.n_bound);
        }
        checks.push(Check {
            name: "bound_chain".into(),
            passed: cmp.chain_holds,
            margin: if cmp.bound.n_bound.is_finite() { cmp.bound.n_bound - cmp.n_d as f64 } else { f64::INFINITY },
            samples: 1,
            skipped: false,
            detail,
        });
        let r = cmp.bound.radius_r;
        let pairs: Vec<(f64, f64)> = cmp.zeros_plus.iter().map(|z| (z.lambda.norm(), r)).collect();
        checks.push(Check::from_pairs("radius", &pairs, 0.0, format!("|lambda| <= R = {r:.6e}")));
    }

    if opts.extended && bound.cv > 0.0 && bound.admissible {
        match extended::n_bound(&bound) {
            Ok(big) => {
                let rel = ((big - bound.n_bound) / big).abs();
                checks.push(Check {
                    name: "extended_precision".into(),
                    passed: rel < 1e-9,
                    margin: 1e-9 - rel,
                    samples: 1,
                    skipped: false,
                    detail: format!("200-bit n_bound {big:.15e} vs double {:.15e}", bound.n_bound),
                });
            }
            Err(Error::InvalidParameter(why)) => checks.push(Check::skipped("extended_precision", why)),
            Err(e) => return Err(e),
        }
    }

    let report = VerifyReport { potential: p.family_name().into(), mode, bound, checks };
    for c in &report.checks {
        info!("{:<20} {} margin {:.3e} ({})", c.name, if c.passed { "ok" } else { "FAILED" }, c.margin, c.detail);
    }
    Ok(report)
}
