use std::time::Instant;

use eigenbound::fredholm::{
    assemble_bs_matrix, build_grid, build_grid_spec, continuum_trace_term, determinant, determinant_bound_check,
    determinant_direct, determinant_minus, determinant_plus, determinant_split, diagonal_cell_average,
    fredholm_series_term, nystrom_series_term, series_terms_from_minors, series_terms_newton, spectral_point,
    DiagonalRule, Factor, FredholmEvaluator, GridSpec, MatrixCache, NystromSystem,
};
use eigenbound::kernel::SpectralPoint;
use eigenbound::linalg::CMatrix;
use eigenbound::potential::measure_functionals;
use eigenbound::scalarbounds::{hadamard_deviation_bound, lemma1_constant};
use eigenbound::{Complex64, Error, Potential, QuadSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn sp(re: f64, im: f64) -> SpectralPoint {
    SpectralPoint::new(c(re, im)).unwrap()
}

#[test]
fn grid_integrates_volume_and_monomials() {
    let p = Potential::bump(c(1.0, 0.0), 1.0);
    let g = build_grid(&p, 12, 38).unwrap();
    assert_eq!(g.len(), 456);
    let vol = 4.0 / 3.0 * std::f64::consts::PI;
    assert!((g.integrate(|_| 1.0) - vol).abs() < 1e-12 * vol);
    let r2 = g.integrate(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    assert!((r2 - 4.0 * std::f64::consts::PI / 5.0).abs() < 1e-10);
    assert!(g.weights.iter().all(|w| *w > 0.0));
    assert!(g.nodes.iter().all(|x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() < 1.0));
    assert!(matches!(build_grid(&p, 1, 38), Err(Error::InvalidParameter(_))));
}

#[test]
fn grid_refinement_reduces_integral_error() {
    // ∫ V for the unit bump, radial oracle value.
    let exact = 1.1990039070192139;
    let p = Potential::bump(c(1.0, 0.0), 1.0);
    let coarse = build_grid(&p, 6, 38).unwrap();
    let fine = build_grid(&p, 12, 38).unwrap();
    let e1 = (coarse.integrate(|x| p.value(x).re) - exact).abs();
    let e2 = (fine.integrate(|x| p.value(x).re) - exact).abs();
    assert!(e2 < 0.5 * e1, "{e1} -> {e2}");
}

#[test]
fn zero_potential_gives_unit_determinant() {
    let p = Potential::zero();
    let g = build_grid_spec(&p, &GridSpec { radius: Some(1.0), ..GridSpec::new(4, 14) }).unwrap();
    let sys = assemble_bs_matrix(&g, sp(0.5, 1.0), &p);
    assert_eq!(sys.bs_matrix.max_abs(), 0.0);
    let d = determinant(&sys);
    assert_eq!(d.value, c(1.0, 0.0));
    assert_eq!(determinant_plus(&sys).value, c(1.0, 0.0));
}

#[test]
fn one_by_one_system() {
    let a = c(0.3, -0.4);
    let sys = NystromSystem::from_matrix(CMatrix::from_fn(1, |_, _| a), sp(1.0, 1.0));
    let d = determinant(&sys);
    assert!((d.value - (1.0 - a * a)).norm() < 1e-15);
    // Diagonal entry from the cell average.
    let k = c(0.7, 0.2);
    let avg = diagonal_cell_average(k, 0.01);
    let rho = (3.0f64 * 0.01 / (4.0 * std::f64::consts::PI)).cbrt();
    // Direct midpoint-free check: average of e^{ikr}/(4πr) over the ball by 1D quadrature.
    let n = 20000;
    let mut s = c(0.0, 0.0);
    for i in 0..n {
        let r = (i as f64 + 0.5) / n as f64 * rho;
        s += (Complex64::i() * k * r).exp() * r * (rho / n as f64);
    }
    assert!((avg - s / 0.01).norm() < 1e-7 * avg.norm());
}

#[test]
fn off_diagonal_entries_shrink_with_im_k() {
    let p = Potential::bump(c(1.0, 0.5), 1.0);
    let g = build_grid(&p, 6, 14).unwrap();
    let a = assemble_bs_matrix(&g, sp(0.8, 0.5), &p).bs_matrix;
    let b = assemble_bs_matrix(&g, sp(0.8, 1.5), &p).bs_matrix;
    for i in (0..a.dim()).step_by(7) {
        for j in (0..a.dim()).step_by(5) {
            if i != j && a.get(i, j).norm() > 0.0 {
                assert!(b.get(i, j).norm() < a.get(i, j).norm());
            }
        }
    }
}

#[test]
fn factorization_identity_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for scale in [0.02, 0.05] {
        let n = 456;
        let re: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        let im: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        let m = CMatrix::from_planes(n, re, im);
        let sys = NystromSystem::from_matrix(m, sp(1.0, 1.0));
        let split = determinant_split(&sys);
        let direct = determinant_direct(&sys);
        let rel = (split.full.log_abs - direct.log_abs).abs() + (split.full.phase / direct.phase - 1.0).norm();
        assert!(rel < 1e-10, "relative mismatch {rel}");
    }
}

#[test]
fn plus_times_minus_is_full_on_bump() {
    let p = Potential::bump(c(-6.0, 1.0), 1.0);
    let g = build_grid(&p, 12, 38).unwrap();
    let t = Instant::now();
    let sys = assemble_bs_matrix(&g, sp(0.3, 0.9), &p);
    let t_asm = t.elapsed();
    let t = Instant::now();
    let d = determinant(&sys);
    let t_det = t.elapsed();
    println!("456-node assembly {t_asm:?}, two factorizations {t_det:?}");
    let prod = determinant_plus(&sys).value * determinant_minus(&sys).value;
    assert!((prod - d.value).norm() < 1e-10 * d.value.norm());
}

#[test]
fn conjugation_symmetry_for_real_potential() {
    let p = Potential::screened_bump(c(-3.0, 0.0));
    let g = build_grid(&p, 8, 26).unwrap();
    for k in [c(0.7, 0.4), c(2.0, 0.1), c(0.3, -0.1)] {
        let a = determinant(&assemble_bs_matrix(&g, spectral_point(k, 1.0).unwrap(), &p)).value;
        let b = determinant(&assemble_bs_matrix(&g, spectral_point(-k.conj(), 1.0).unwrap(), &p)).value;
        assert!((a - b.conj()).norm() < 1e-10 * a.norm(), "{a} vs {b}");
    }
}

#[test]
fn continuation_gate() {
    assert!(spectral_point(c(1.0, -0.2), 1.0).is_ok());
    assert!(matches!(spectral_point(c(1.0, -0.3), 1.0), Err(Error::ContinuationOutOfStrip { .. })));
    let p = Potential::bump(c(1.0, 0.0), 1.0);
    let f = measure_functionals(&p, 1.0, &QuadSpec::default()).unwrap();
    assert!(matches!(
        determinant_bound_check(c(0.0, -0.3), &p, &f, 1.0, &GridSpec::new(4, 14)),
        Err(Error::ContinuationOutOfStrip { .. })
    ));
}

#[test]
fn series_terms_scale_and_match_small_coupling() {
    let k = sp(0.5, 0.8);
    let grid = GridSpec::new(6, 26);
    let base = Potential::bump(c(1.0, 0.3), 1.0);
    let t1 = nystrom_series_term(1, k, &base, &grid).unwrap();
    let t2 = nystrom_series_term(2, k, &base, &grid).unwrap();
    let g = c(0.5, 0.2);
    let scaled = base.scaled(g);
    let s1 = nystrom_series_term(1, k, &scaled, &grid).unwrap();
    let s2 = nystrom_series_term(2, k, &scaled, &grid).unwrap();
    assert!((s1 - t1 * g.powu(2)).norm() < 1e-12 * s1.norm());
    assert!((s2 - t2 * g.powu(4)).norm() < 1e-12 * s2.norm());
    assert_eq!(nystrom_series_term(4, k, &base, &grid), Err(Error::TooManyTerms(4)));

    // |D − (1 + term₁)| = O(g⁴): halving g divides the remainder by ~16.
    let rem = |g: f64| {
        let p = base.scaled(c(g, 0.0));
        let gr = build_grid_spec(&p, &grid).unwrap();
        let d = determinant(&assemble_bs_matrix(&gr, k, &p)).value;
        (d - 1.0 - nystrom_series_term(1, k, &p, &grid).unwrap()).norm()
    };
    let (r1, r2) = (rem(2e-2), rem(1e-2));
    let ratio = r1 / r2;
    assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
}

#[test]
fn continuum_series_terms() {
    let p = Potential::bump(c(0.8, 0.0), 1.0);
    let k = sp(0.4, 1.0);
    let quad = QuadSpec { rel_tol: 1e-6, ..QuadSpec::default() };
    let grid = GridSpec::new(3, 14);
    let t1 = fredholm_series_term(1, k, &p, &grid, &quad).unwrap();
    let t2 = fredholm_series_term(2, k, &p, &grid, &quad).unwrap();
    // Homogeneity: the n-th term scales as g^{2n}.
    let g = c(0.0, 2.0);
    let s2 = fredholm_series_term(2, k, &p.scaled(g), &grid, &quad).unwrap();
    assert!((s2 - t2 * g.powu(4)).norm() < 1e-9 * s2.norm());
    // Weak coupling: the series converges fast, each term much smaller.
    assert!(t2.norm() < t1.norm() * t1.norm());
    assert_eq!(fredholm_series_term(0, k, &p, &grid, &quad), Err(Error::TooManyTerms(0)));
}

#[test]
fn third_term_newton_cross_check() {
    let p = Potential::bump(c(2.0, -1.0), 1.0);
    let g = build_grid(&p, 4, 14).unwrap();
    let sys = assemble_bs_matrix(&g, sp(1.0, 0.5), &p);
    let kmat = sys.bs_matrix.matmul(&sys.bs_matrix);
    let a = series_terms_from_minors(&kmat, 3).unwrap();
    let b = series_terms_newton(&kmat, 3).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).norm() < 1e-10 * x.norm().max(1e-300));
    }
}

#[test]
fn continuum_trace_is_resolution_stable() {
    let p = Potential::bump(c(1.0, 0.0), 1.0);
    let k = c(1.0, 1.0);
    let quad = QuadSpec { rel_tol: 1e-6, ..QuadSpec::default() };
    let a = continuum_trace_term(k, &p, &GridSpec::new(6, 14), &quad).unwrap();
    let b = continuum_trace_term(k, &p, &GridSpec::new(8, 26), &quad).unwrap();
    assert!((a - b).norm() < 1e-3 * b.norm(), "{a} vs {b}");
}

#[test]
fn determinant_ceiling_holds_in_strip() {
    let p = Potential::bump(c(0.5, 0.5), 1.0);
    let eps = 1.0;
    let f = measure_functionals(&p, eps, &QuadSpec::default()).unwrap();
    let grid = GridSpec::new(8, 26);
    let mut worst: f64 = 0.0;
    let mut bound = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let k = c(-2.0 + 4.0 * i as f64 / 3.0, -eps / 8.0 + 2.0 * j as f64 / 3.0);
            let (d, b) = determinant_bound_check(k, &p, &f, eps, &grid).unwrap();
            worst = worst.max(d);
            bound = b;
        }
    }
    assert!(worst <= bound, "{worst} > {bound}");
    let (d0, b0) = determinant_bound_check(
        c(1.0, 1.0),
        &Potential::zero(),
        &eigenbound::PotentialFunctionals::zero(eps, p.decay_class()),
        eps,
        &grid,
    )
    .unwrap();
    assert_eq!((d0, b0), (1.0, 1.0));
}

#[test]
fn hadamard_deviation_on_imaginary_axis() {
    let p = Potential::bump(c(0.3, 0.2), 1.0);
    let f = measure_functionals(&p, 1.0, &QuadSpec::default()).unwrap();
    let cv = lemma1_constant(&f).unwrap() * f.l1_norm;
    let g = build_grid(&p, 12, 38).unwrap();
    for t in [0.05, 0.2, 1.0, 4.0] {
        let d = determinant(&assemble_bs_matrix(&g, sp(0.0, t), &p)).value;
        let b = hadamard_deviation_bound(cv, c(0.0, t)).unwrap();
        assert!((d - 1.0).norm() <= b, "T = {t}: {} > {b}", (d - 1.0).norm());
    }
}

#[test]
fn dropped_diagonal_is_selectable_and_converges_slower() {
    let p = Potential::bump(c(-4.0, 0.0), 1.0);
    let k = sp(0.0, 1.0);
    let reference = {
        let g = build_grid_spec(&p, &GridSpec::new(20, 50)).unwrap();
        determinant(&assemble_bs_matrix(&g, k, &p)).value
    };
    let err = |rule| {
        let g = build_grid_spec(&p, &GridSpec { diagonal: rule, ..GridSpec::new(8, 26) }).unwrap();
        (determinant(&assemble_bs_matrix(&g, k, &p)).value - reference).norm()
    };
    assert!(err(DiagonalRule::VolumeSphere) < err(DiagonalRule::Dropped));
}

#[test]
fn evaluator_memoizes_and_estimates_error() {
    let p = Potential::bump(c(-3.0, 0.0), 1.0);
    let ev = FredholmEvaluator::new(&p, &GridSpec::new(6, 14), 1.0).unwrap();
    let a = ev.eval(c(0.0, 1.0), Factor::Full).unwrap();
    let b = ev.eval(c(0.0, 1.0), Factor::Plus).unwrap();
    assert_eq!(ev.evaluations(), 1);
    let direct = determinant_plus(&ev.system(c(0.0, 1.0)).unwrap());
    assert_eq!(b.log_abs, direct.log_abs);
    assert!(a.log_abs.is_finite());
    let s = ev.with_error(c(0.0, 1.0)).unwrap();
    assert!(s.full.error_estimate.unwrap() > 0.0);
}

#[test]
fn matrix_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = Potential::bump(c(1.0, 0.0), 1.0);
    let cache = MatrixCache::new(dir.path()).unwrap();
    let ev = FredholmEvaluator::new(&p, &GridSpec::new(4, 6), 1.0).unwrap().with_cache(cache.clone()).unwrap();
    let k = c(0.25, 0.75);
    let first = ev.system(k).unwrap();
    let key = MatrixCache::key(&p.content_hash().unwrap(), &ev.grid().spec, k);
    let loaded = cache.load(&key, k).unwrap().unwrap();
    assert_eq!(loaded, first.bs_matrix);
    assert!(matches!(cache.load(&key, c(0.25, 0.5)), Err(Error::Cache(_))));
    assert_eq!(cache.load("absent", k).unwrap(), None);
    std::fs::write(dir.path().join("junk.nys"), b"nonsense").unwrap();
    assert!(matches!(cache.load("junk", k), Err(Error::Cache(_))));
}
