use std::fmt::Write as _;

use eigenbound::fredholm::{determinant_split, DeterminantSplit, Factor, FredholmEvaluator};
use eigenbound::oracle::count_eigenvalues_radial;
use eigenbound::potential::measure_functionals;
use eigenbound::scalarbounds::{
    extended, lemma1_constant, lemma2_constant, n_bound_corollary1, n_bound_corollary2, n_bound_theorem1,
    n_bound_theorem2,
};
use eigenbound::verify::{run_suite, VerifyOptions};
use eigenbound::zerocount::{
    empirical_vs_bound, locate_zeros, search_region, theorem_bound, winding_traced, write_samples_csv, write_zeros_csv,
    CompareOptions, Contour, Rect,
};
use eigenbound::{BoundMode, BoundParameters, BoundReport, Complex64, Error};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CliError, Precision, RunConfig};

/// What a subcommand produced.
pub struct Outcome {
    pub json: Value,
    pub text: String,
    /// `(file name, contents)` written under `--out`.
    pub files: Vec<(String, Vec<u8>)>,
    /// Set when a checked inequality or ordering failed.
    pub violation: Option<String>,
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

const EXTENDED_REL_TOL: f64 = 1e-9;

#[derive(Serialize)]
struct BoundsReport {
    potential: Value,
    family: &'static str,
    decay_class: Value,
    eps: f64,
    mode: BoundMode,
    precision: Precision,
    truncation_radius: f64,
    functionals: Value,
    theorem: BoundReport,
    corollary: Option<BoundReport>,
    corollary_error: Option<String>,
    extended_n_bound: Option<f64>,
    extended_note: Option<String>,
}

/// Plain notation for moderate magnitudes, scientific otherwise.
fn num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-4..1e12).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn line(out: &mut String, key: &str, v: impl std::fmt::Display) {
    let _ = writeln!(out, "{key:<20} {v}");
}

pub fn bounds(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = &cfg.potential;
    let funcs = measure_functionals(p, cfg.eps, &cfg.quad)?;
    let params = BoundParameters::new(cfg.eps);
    let (theorem, corollary) = match cfg.mode {
        BoundMode::Theorem1 => {
            let c = lemma1_constant(&funcs)?;
            (n_bound_theorem1(&funcs, c, &params)?, n_bound_corollary1(&funcs, c, cfg.eps))
        }
        BoundMode::Theorem2 => {
            let c = lemma2_constant(&funcs)?;
            (n_bound_theorem2(&funcs, c, &params)?, n_bound_corollary2(&funcs, c, cfg.eps))
        }
    };
    let mut violation = None;
    let mut extended_note = None;
    let extended_n_bound = match cfg.precision {
        Precision::Double => None,
        Precision::Extended => match extended::n_bound(&theorem) {
            Ok(x) => {
                let rel = ((x - theorem.n_bound) / theorem.n_bound.abs().max(f64::MIN_POSITIVE)).abs();
                if theorem.n_bound != x && rel > EXTENDED_REL_TOL {
                    violation = Some(format!(
                        "extended-precision n_bound {x} differs from {} (rel {rel:.2e})",
                        theorem.n_bound
                    ));
                }
                Some(x)
            }
            Err(Error::InvalidParameter(why)) => {
                extended_note = Some(format!("extended cross-check unavailable: {why}"));
                None
            }
            Err(e) => return Err(e.into()),
        },
    };
    let (corollary, corollary_error) = match corollary {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let mut text = String::new();
    line(&mut text, "potential", format!("{} ({})", p.family_name(), p.decay_class().name()));
    line(&mut text, "eps", cfg.eps);
    line(&mut text, "mode", cfg.mode);
    line(&mut text, "||V||_1", num(funcs.l1_norm));
    line(&mut text, "kato constant", num(funcs.kato_constant));
    line(&mut text, &theorem.constant_name, num(theorem.constant));
    line(&mut text, "R", num(theorem.radius_r));
    line(&mut text, "A", num(theorem.a));
    line(&mut text, "B", num(theorem.b));
    line(&mut text, "T threshold", num(theorem.t_threshold));
    line(&mut text, "T", num(theorem.t_used));
    line(&mut text, "rho - T", num(theorem.rho_offset));
    line(&mut text, "admissible", theorem.admissible);
    line(&mut text, "n_bound", num(theorem.n_bound));
    if let Some(x) = extended_n_bound {
        line(&mut text, "n_bound (200 bit)", num(x));
    }
    if let Some(n) = &extended_note {
        line(&mut text, "n_bound (200 bit)", n);
    }
    match (&corollary, &corollary_error) {
        (Some(c), _) => line(
            &mut text,
            "corollary n_bound",
            format!("{} (T = {}, admissible {})", num(c.n_bound), num(c.t_used), c.admissible),
        ),
        (_, Some(e)) => line(&mut text, "corollary", e),
        _ => {}
    }

    let report = BoundsReport {
        potential: to_json(&cfg.spec),
        family: p.family_name(),
        decay_class: to_json(&p.decay_class()),
        eps: cfg.eps,
        mode: cfg.mode,
        precision: cfg.precision,
        truncation_radius: p.truncation_radius(),
        functionals: to_json(&funcs),
        theorem,
        corollary,
        corollary_error,
        extended_n_bound,
        extended_note,
    };
    let json = to_json(&report);
    let files = vec![("bounds.json".into(), pretty(&json))];
    Ok(Outcome { json, text, files, violation })
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("json");
    s.push(b'\n');
    s
}

/// The explicit region, or the automatic search region of the potential.
fn region_or_search(cfg: &RunConfig) -> Result<Rect, CliError> {
    if let Some(r) = cfg.region {
        return Ok(r);
    }
    let bound = theorem_bound(&cfg.potential, cfg.eps, Some(cfg.mode), &cfg.quad)?;
    if bound.radius_r == 0.0 {
        return Err(CliError::config("zero potential: give --region explicitly"));
    }
    Ok(search_region(&cfg.potential, cfg.eps, bound.radius_r, &cfg.quad)?.rect)
}

fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.12e}")
    }
}

pub fn scan(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rect = match cfg.region {
        Some(r) => r,
        None => region_or_search(cfg)?,
    };
    let ev = FredholmEvaluator::new(&cfg.potential, &cfg.grid, cfg.eps)?;
    let (nr, ni) = (cfg.scan.n_re, cfg.scan.n_im);
    let at = |n: usize, i: usize, a: f64, b: f64| {
        if n == 1 {
            0.5 * (a + b)
        } else {
            a + (b - a) * i as f64 / (n - 1) as f64
        }
    };
    let ks: Vec<Complex64> = (0..ni)
        .flat_map(|j| (0..nr).map(move |i| (i, j)))
        .map(|(i, j)| Complex64::new(at(nr, i, rect.re0, rect.re1), at(ni, j, rect.im0, rect.im1)))
        .collect();
    let eval = |k: Complex64| -> Result<DeterminantSplit, Error> {
        if cfg.refine {
            ev.with_error(k)
        } else {
            Ok(determinant_split(&ev.system(k)?))
        }
    };
    let values = eigenbound::par::map_slice(&ks, |k| eval(*k));

    let mut csv = String::from("re_k,im_k,abs_d,log_abs_d,arg_d,abs_plus,status");
    if cfg.refine {
        csv.push_str(",err_d,err_plus");
    }
    csv.push('\n');
    let (mut ok, mut skipped, mut failed) = (0, 0, 0);
    for (k, v) in ks.iter().zip(values) {
        let (cols, status, errs) = match v {
            Ok(s) => {
                ok += 1;
                let errs = [s.full.error_estimate.unwrap_or(f64::NAN), s.plus.error_estimate.unwrap_or(f64::NAN)];
                ([s.full.abs(), s.full.log_abs, s.full.phase.arg(), s.plus.abs()], "ok".to_string(), errs)
            }
            Err(Error::ContinuationOutOfStrip { .. }) => {
                skipped += 1;
                ([f64::NAN; 4], "skipped".to_string(), [f64::NAN; 2])
            }
            Err(e) => {
                failed += 1;
                ([f64::NAN; 4], format!("error: {}", e.to_string().replace(',', ";")), [f64::NAN; 2])
            }
        };
        let _ = write!(
            csv,
            "{},{},{},{},{},{},{}",
            k.re,
            k.im,
            fmt_f(cols[0]),
            fmt_f(cols[1]),
            fmt_f(cols[2]),
            fmt_f(cols[3]),
            status
        );
        if cfg.refine {
            let _ = write!(csv, ",{},{}", fmt_f(errs[0]), fmt_f(errs[1]));
        }
        csv.push('\n');
    }
    let json = json!({
        "region": to_json(&rect),
        "grid": to_json(&cfg.grid),
        "refined": cfg.refine,
        "points": ks.len(),
        "evaluated": ok,
        "skipped": skipped,
        "failed": failed,
    });
    let mut text = String::new();
    line(&mut text, "region", format!("Re k in [{}, {}], Im k in [{}, {}]", rect.re0, rect.re1, rect.im0, rect.im1));
    line(&mut text, "points", format!("{} evaluated, {} outside the strip, {} failed", ok, skipped, failed));
    if cfg.out.is_none() {
        text.push_str(&csv);
    }
    Ok(Outcome { json, text, files: vec![("scan.csv".into(), csv.into_bytes())], violation: None })
}

pub fn count(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rect = region_or_search(cfg)?;
    let ev = FredholmEvaluator::new(&cfg.potential, &cfg.grid, cfg.eps)?;
    let f = |k: Complex64| ev.eval(k, Factor::Plus);
    let res = locate_zeros(&f, rect, &cfg.locate)?;
    let traced = winding_traced(&f, Contour::Rectangle(res.region), &cfg.locate.winding)?;
    let mut zeros_csv = Vec::new();
    write_zeros_csv(&mut zeros_csv, &res.zeros).expect("in-memory write");
    let mut samples_csv = Vec::new();
    write_samples_csv(&mut samples_csv, &traced.samples).expect("in-memory write");

    let mut text = String::new();
    let r = res.region;
    line(&mut text, "region", format!("Re k in [{}, {}], Im k in [{}, {}]", r.re0, r.re1, r.im0, r.im1));
    line(&mut text, "eigenvalues", res.total_multiplicity());
    for z in &res.zeros {
        let _ = writeln!(text, "  lambda = {:.8} (k = {:.8}, multiplicity {})", z.lambda, z.k, z.multiplicity);
    }
    for flag in &res.resolution_flags {
        let _ = writeln!(text, "  note: {flag}");
    }
    let json = json!({
        "grid": to_json(&cfg.grid),
        "result": to_json(&res),
    });
    let files = vec![
        ("count.json".into(), pretty(&json)),
        ("zeros.csv".into(), zeros_csv),
        ("contour.csv".into(), samples_csv),
    ];
    Ok(Outcome { json, text, files, violation: None })
}

pub fn verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let opts = VerifyOptions {
        eps: cfg.eps,
        mode: Some(cfg.mode),
        kernel_samples: cfg.verify.kernel_samples,
        quad: cfg.quad,
        grid: cfg.grid,
        counting: cfg.verify.counting,
        extended: cfg.precision == Precision::Extended,
        fault: cfg.fault,
    };
    let rep = run_suite(&cfg.potential, &opts)?;
    let mut text = String::new();
    for c in &rep.checks {
        let status = if c.skipped {
            "SKIP"
        } else if c.passed {
            "PASS"
        } else {
            "FAIL"
        };
        let _ = writeln!(
            text,
            "{status} {:<20} margin {:>10.3e}  samples {:>3}  {}",
            c.name, c.margin, c.samples, c.detail
        );
    }
    let violation = (!rep.passed()).then(|| {
        let names: Vec<&str> = rep.failures().iter().map(|c| c.name.as_str()).collect();
        format!("failed checks: {}", names.join(", "))
    });
    let json = to_json(&rep);
    Ok(Outcome { files: vec![("verify.json".into(), pretty(&json))], json, text, violation })
}

pub fn compare_oracle(cfg: &RunConfig) -> Result<Outcome, CliError> {
    if !cfg.potential.is_radial() {
        return Err(Error::NotRadial.into());
    }
    let opts = CompareOptions {
        grid: cfg.grid,
        quad: cfg.quad,
        locate: cfg.locate,
        region: cfg.region,
        jensen_k_max: cfg.jensen_k_max,
    };
    let cmp = empirical_vs_bound(&cfg.potential, cfg.eps, Some(cfg.mode), &opts)?;
    let oracle = match cmp.region {
        Some(r) => Some(count_eigenvalues_radial(&cfg.potential, r.rect, cfg.l_max, &cfg.locate)?),
        None => None,
    };
    let oracle_total = oracle.as_ref().map_or(0, |o| o.total);
    let mut problems = Vec::new();
    if oracle_total != cmp.n_empirical_plus {
        problems.push(format!("3D count {} differs from the oracle count {oracle_total}", cmp.n_empirical_plus));
    }
    if !cmp.chain_holds {
        problems.push("ordering chain N(V) <= N_D <= n_bound violated".to_string());
    }

    let mut text = String::new();
    line(&mut text, "N(V)", cmp.n_empirical_plus);
    line(&mut text, "N(-V)", cmp.n_empirical_minus);
    line(&mut text, "N_D", cmp.n_d);
    line(&mut text, "oracle", oracle_total);
    line(&mut text, "n_bound", num(cmp.bound.n_bound));
    if let Some(j) = &cmp.jensen {
        line(&mut text, "jensen", format!("{} zeros inside, Jensen bound {}", j.n_inside, num(j.jensen.n_bound)));
    }
    line(&mut text, "chain", if cmp.chain_holds { "holds" } else { "VIOLATED" });
    for n in &cmp.notes {
        let _ = writeln!(text, "  note: {n}");
    }
    let json = json!({
        "comparison": to_json(&cmp),
        "oracle": oracle.as_ref().map(to_json),
        "oracle_total": oracle_total,
        "consistent": problems.is_empty(),
    });
    let violation = (!problems.is_empty()).then(|| problems.join("; "));
    Ok(Outcome { files: vec![("compare.json".into(), pretty(&json))], json, text, violation })
}
