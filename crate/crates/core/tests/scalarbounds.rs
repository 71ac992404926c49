use approx::assert_relative_eq;
use eigenbound::scalarbounds::*;
use eigenbound::{DecayClass, PotentialFunctionals};
use proptest::prelude::*;

// Hand-picked functionals; the expected values below come from an mpmath
// evaluation (40 digits) of the closed-form bounds.
fn compact_set() -> PotentialFunctionals {
    PotentialFunctionals {
        l1_norm: 0.6,
        l2_norm_sq: 0.1,
        linf_norm: 0.2,
        grad_linf_norm: 0.5,
        support_diameter: Some(2.0),
        kato_constant: 1.1,
        weighted_sup: 0.3,
        weighted_l1: 0.9,
        hypothesis_amp: 0.0,
        eps: 1.0,
        decay_class: DecayClass::CompactSupport { support_radius: 1.0 },
        quadrature_error_estimate: 0.0,
    }
}

fn exponential_set() -> PotentialFunctionals {
    PotentialFunctionals {
        l1_norm: 0.6,
        l2_norm_sq: 0.1,
        linf_norm: 0.3,
        grad_linf_norm: 0.3,
        support_diameter: None,
        kato_constant: 0.7,
        weighted_sup: 0.3,
        weighted_l1: 4.0,
        hypothesis_amp: 0.35,
        eps: 1.0,
        decay_class: DecayClass::ExponentialDecay { eps: 1.0, amp: 0.35 },
        quadrature_error_estimate: 0.0,
    }
}

#[test]
fn f_reference_values() {
    assert_eq!(f_series(0.0), 1.0);
    assert_relative_eq!(f_series(0.5), 1.9211099466577953521, max_relative = 1e-14);
    assert_relative_eq!(f_series(0.3), 1.4201806970393885944, max_relative = 1e-14);
    assert_relative_eq!(f_inverse(2.0).unwrap(), 0.523766015906047, max_relative = 1e-12);
    assert!(f_series(0.5) <= 2.0 - (-3.0f64).exp());
    assert!(f_inverse(2.0).unwrap() > 0.5);
}

#[test]
fn f_below_majorant_on_grid() {
    for i in 0..300 {
        let a = 3.0 * i as f64 / 299.0;
        assert!(f_series(a) <= f_majorant(a) * (1.0 + 1e-14), "a = {a}");
    }
}

#[test]
fn h_inverts_g_on_grid() {
    for i in 0..20 {
        for j in 0..20 {
            // εt stays below ~520 so g_ε(t) is finite in double precision.
            let eps = 0.05 * 1.3f64.powi(i);
            let t = 1e-3 * 1.8f64.powi(j);
            let back = h_eps(eps, g_eps(eps, t));
            assert!((back - t).abs() <= 1e-10 * t.max(1.0), "eps {eps}, t {t}: {back}");
        }
    }
}

#[test]
fn theorem1_matches_reference() {
    let f = compact_set();
    let c = lemma1_constant(&f).unwrap();
    assert_relative_eq!(c, 0.14054026862707242761, max_relative = 1e-14);
    let rep = n_bound_theorem1(&f, c, &BoundParameters::new(1.0)).unwrap();
    assert!(rep.admissible);
    assert_relative_eq!(rep.radius_r, 0.0083603089969626385339, max_relative = 1e-13);
    assert_relative_eq!(rep.t_threshold, 0.19709057898479525012, max_relative = 1e-13);
    assert_relative_eq!(rep.hadamard_arg, 0.49567313217489354948, max_relative = 1e-13);
    assert_relative_eq!(rep.n_bound, 3.3742811403870942372, max_relative = 1e-12);
    assert_relative_eq!(extended::n_bound(&rep).unwrap(), rep.n_bound, max_relative = 1e-12);
}

#[test]
fn theorem2_matches_reference() {
    let f = exponential_set();
    let ct = lemma2_constant(&f).unwrap();
    assert_relative_eq!(ct, 0.075797900874363750265, max_relative = 1e-14);
    let rep = n_bound_theorem2(&f, ct, &BoundParameters::new(1.0)).unwrap();
    assert!(rep.admissible);
    assert_relative_eq!(rep.radius_r, 0.0022652659135371139162, max_relative = 1e-13);
    assert_relative_eq!(rep.t_threshold, 0.099618674018067637448, max_relative = 1e-13);
    assert_relative_eq!(rep.hadamard_arg, 0.49546208993806415540, max_relative = 1e-12);
    assert_relative_eq!(rep.n_bound, 2.2842657330485266842, max_relative = 1e-12);
    assert_relative_eq!(extended::n_bound(&rep).unwrap(), rep.n_bound, max_relative = 1e-12);
}

#[test]
fn corollaries_match_reference() {
    let f = compact_set();
    let rep = n_bound_corollary1(&f, lemma1_constant(&f).unwrap(), 1.0).unwrap();
    assert_relative_eq!(rep.t_used, 0.19709057898479525012, max_relative = 1e-13);
    assert_relative_eq!(rep.n_bound, 31.250116688147155219, max_relative = 1e-12);
    assert_relative_eq!(extended::n_bound(&rep).unwrap(), rep.n_bound, max_relative = 1e-12);

    let f = exponential_set();
    let rep = n_bound_corollary2(&f, lemma2_constant(&f).unwrap(), 1.0).unwrap();
    assert_relative_eq!(rep.t_used, 0.099618674018067637448, max_relative = 1e-13);
    assert_relative_eq!(rep.n_bound, 32.105266824703101065, max_relative = 1e-12);
    assert_relative_eq!(extended::n_bound(&rep).unwrap(), rep.n_bound, max_relative = 1e-12);
}

#[test]
fn huge_t_keeps_the_offset() {
    let f = compact_set();
    let c = lemma1_constant(&f).unwrap();
    let rep = n_bound_theorem1(&f, c, &BoundParameters::new(1.0).with_t(1e16)).unwrap();
    assert_eq!(rep.rho_used, rep.t_used);
    assert_eq!(rep.rho_offset, 0.25);
    assert!(rep.admissible && rep.n_bound.is_finite() && rep.n_bound > 0.0);
    assert_relative_eq!(extended::n_bound(&rep).unwrap(), rep.n_bound, max_relative = 1e-9);
}

#[test]
fn parameter_errors() {
    let f = compact_set();
    let c = lemma1_constant(&f).unwrap();
    assert!(matches!(
        n_bound_theorem1(&f, c, &BoundParameters::new(1.0).with_t(0.1)),
        Err(eigenbound::Error::InadmissibleT { .. })
    ));
    let forced = n_bound_theorem1(&f, c, &BoundParameters::new(1.0).with_t(0.1).forced()).unwrap();
    assert!(!forced.admissible);
    assert!(n_bound_theorem1(&f, c, &BoundParameters::new(-1.0)).is_err());
    assert!(matches!(lemma2_constant(&f), Err(eigenbound::Error::WrongDecayClass { .. })));
    assert!(matches!(lemma1_kernel_bound(c, 0.0.into()), Err(eigenbound::Error::DegenerateK)));
    let fx = exponential_set();
    let ct = lemma2_constant(&fx).unwrap();
    let t = 1.0;
    assert!(matches!(
        n_bound_theorem2(&fx, ct, &BoundParameters::new(1.0).with_t(t).with_rho(t + 0.5)),
        Err(eigenbound::Error::InadmissibleRho { .. })
    ));
}

#[test]
fn zero_functionals_give_zero_bound() {
    let f = PotentialFunctionals::zero(1.0, DecayClass::CompactSupport { support_radius: 1.0 });
    let rep = n_bound_theorem1(&f, lemma1_constant(&f).unwrap(), &BoundParameters::new(1.0)).unwrap();
    assert_eq!(rep.n_bound, 0.0);
    assert_eq!(rep.radius_r, 0.0);
}

proptest! {
    #[test]
    fn f_is_increasing_and_below_majorant(a in 0.0f64..4.0, da in 1e-6f64..0.5) {
        prop_assert!(f_series(a + da) > f_series(a));
        prop_assert!(f_series(a) <= f_majorant(a) * (1.0 + 1e-14));
    }

    #[test]
    fn g_h_round_trip(eps in 1e-3f64..20.0, s in 0.0f64..1e6) {
        let t = h_eps(eps, s);
        prop_assert!((g_eps(eps, t) - s).abs() <= 1e-12 * s.max(1e-300) + 1e-300);
    }

    #[test]
    fn extended_agrees_with_double(scale in 0.05f64..1.5, eps in 0.2f64..2.0) {
        let mut f = compact_set();
        f.l1_norm *= scale;
        f.weighted_sup *= scale;
        f.weighted_l1 *= scale;
        let c = lemma1_constant(&f).unwrap();
        let rep = n_bound_theorem1(&f, c, &BoundParameters::new(eps).forced()).unwrap();
        if rep.admissible {
            let x = extended::n_bound(&rep).unwrap();
            prop_assert!((x - rep.n_bound).abs() <= 1e-10 * rep.n_bound.abs(), "{x} vs {}", rep.n_bound);
        }
    }
}

#[test]
fn extended_log_f_for_large_arguments() {
    for a in [61.0, 250.0, 700.0] {
        let x = extended::ln_f_series(&extended::big(a)).unwrap();
        assert_relative_eq!(extended::to_f64(&x), ln_f_series(a), max_relative = 1e-13);
    }
    assert!(extended::ln_f_series(&extended::big(1e5)).is_err());
}

#[test]
fn astronomical_t_without_overflow() {
    let mut f = exponential_set();
    f.l1_norm *= 4000.0;
    let c = lemma2_constant(&f).unwrap();
    let rep = n_bound_theorem2(&f, c, &BoundParameters::new(1.0)).unwrap();
    // T² alone would overflow.
    assert!(rep.t_used > 1e160 && rep.t_used.is_finite());
    assert!(rep.admissible && rep.log_ratio > 0.0 && rep.n_bound.is_finite());

    f.l1_norm *= 2.0;
    let c = lemma2_constant(&f).unwrap();
    assert!(matches!(n_bound_theorem2(&f, c, &BoundParameters::new(1.0)), Err(eigenbound::Error::Overflow(_))));
}

#[test]
fn exponential_corollary_undercuts_theorem_for_large_eps() {
    // Known defect of the closed form: its e^{-2 C~ V} factor ignores ε, so
    // for ε > 1 it can fall below the theorem at its own implied T.
    let mut f = exponential_set();
    f.l1_norm *= 11.0;
    let c = lemma2_constant(&f).unwrap();
    let ratio = |eps: f64| {
        let cor = n_bound_corollary2(&f, c, eps).unwrap();
        let th = n_bound_theorem2(&f, c, &BoundParameters::new(eps).with_t(cor.t_used).forced()).unwrap();
        assert!(cor.admissible);
        cor.n_bound / th.n_bound
    };
    assert!(ratio(1.0) > 1.0 && ratio(2.0) > 1.0);
    assert!(ratio(5.0) < 0.25, "{}", ratio(5.0));
}
