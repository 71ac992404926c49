use eigenbound::kernel::{
    ellipsoid_gradient_integral, free_resolvent_kernel, hs_identity_check, iterated_kernel, proposition_bound,
    EllipsoidSpec, SpectralPoint,
};
use eigenbound::potential::measure_functionals;
use eigenbound::{Complex64, Error, Potential, QuadSpec};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

// Partial-wave expansion of the iterated kernel for the unit bump
// (spherical Bessel/Hankel products, 30-digit arithmetic, 40 channels).
const PARTIAL_WAVE: &[([f64; 3], [f64; 3], (f64, f64), (f64, f64))] = &[
    ([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], (1.0, 0.5), (0.027132093873990829, 0.017531470149257059)),
    ([0.2, 0.0, 0.0], [0.0, 0.5, 0.1], (1.0, 0.5), (0.0087485085286726927, 0.012930789186042397)),
    ([0.2, 0.0, 0.0], [0.0, 0.5, 0.1], (3.0, 0.2), (-0.01269193158948143, 0.0034240681592723231)),
    ([0.1, 0.1, 0.0], [0.3, -0.4, 0.5], (0.5, -0.1), (0.019970087345282531, 0.013879286065691168)),
    ([0.0, 0.0, 0.0], [0.6, 0.0, 0.0], (0.0, 2.0), (0.0036008546676153325, 0.0)),
    ([0.3, 0.0, 0.1], [-0.2, 0.6, 0.6], (-2.0, 1.0), (-0.0029922390581688233, -0.0020917254770794882)),
];

#[test]
fn iterated_kernel_matches_partial_waves() {
    let p = Potential::bump(c(1.0, 0.0), 1.0);
    let spec = QuadSpec::default();
    for (x, y, k, g) in PARTIAL_WAVE {
        let got = iterated_kernel(c(k.0, k.1), *x, *y, &p, &spec).unwrap();
        let want = c(g.0, g.1);
        assert!((got.value - want).norm() < 1e-7 * want.norm(), "x={x:?} y={y:?} k={k:?}: {} vs {want}", got.value);
        assert!(got.error < 1e-6 * want.norm());
    }
}

#[test]
fn iterated_kernel_is_symmetric_and_linear() {
    let p = Potential::bump(c(0.3, -0.2), 1.0);
    let spec = QuadSpec::default();
    let (x, y, k) = ([0.1, -0.2, 0.3], [0.4, 0.2, -0.5], c(1.5, 0.3));
    let a = iterated_kernel(k, x, y, &p, &spec).unwrap().value;
    let b = iterated_kernel(k, y, x, &p, &spec).unwrap().value;
    assert!((a - b).norm() < 1e-9 * a.norm());
    let g = c(-2.0, 1.0);
    let s = iterated_kernel(k, x, y, &p.scaled(g), &spec).unwrap().value;
    assert!((s - g * a).norm() < 1e-8 * s.norm());
}

#[test]
fn refined_quadrature_agrees() {
    let p = Potential::screened_bump(c(1.0, 0.0));
    let spec = QuadSpec::default();
    let (x, y, k) = ([0.05, 0.0, 0.0], [0.0, -0.3, 0.2], c(4.0, 0.5));
    let a = iterated_kernel(k, x, y, &p, &spec).unwrap().value;
    let b = iterated_kernel(k, x, y, &p, &spec.refined(10.0)).unwrap().value;
    assert!((a - b).norm() < 1e-4 * b.norm());
}

#[test]
fn spectral_point_gates() {
    assert!(matches!(SpectralPoint::new(c(1.0, 0.0)), Err(Error::NonpositiveImK { .. })));
    assert!(SpectralPoint::new(c(1.0, 1e-12)).is_ok());
    let s = SpectralPoint::continued(c(1.0, -0.2), 1.0).unwrap();
    assert!(s.continued);
    assert!((s.lambda - c(0.96, -0.4)).norm() < 1e-15);
    assert!(matches!(SpectralPoint::continued(c(1.0, -0.25), 1.0), Err(Error::ContinuationOutOfStrip { .. })));
    assert_eq!(SpectralPoint::continued(c(0.0, 0.0), 1.0), Err(Error::DegenerateK));
}

#[test]
fn resolvent_kernel_decays_in_upper_half_plane() {
    let g = free_resolvent_kernel(c(2.0, 3.0), [0.0; 3], [0.0, 0.0, 2.0]).unwrap();
    let want = (-6.0f64).exp() / (8.0 * std::f64::consts::PI);
    assert!((g.norm() - want).abs() < 1e-15);
}

#[test]
fn hilbert_schmidt_identity() {
    let spec = QuadSpec::default();
    for (p, k) in
        [(Potential::bump(c(1.0, 0.5), 1.0), c(0.5, 1.0)), (Potential::screened_bump(c(2.0, 0.0)), c(3.0, 0.25))]
    {
        let (lhs, rhs) = hs_identity_check(k, &p, &spec).unwrap();
        assert!(((lhs - rhs) / rhs).abs() < 1e-6, "{lhs} vs {rhs}");
    }
    let p = Potential::bump(c(1.0, 0.0), 1.0);
    assert!(matches!(hs_identity_check(c(1.0, -0.1), &p, &spec), Err(Error::NonpositiveImK { .. })));
}

#[test]
fn proposition_bounds_the_kernel() {
    let p = Potential::bump(c(1.0, 0.0), 1.0);
    let spec = QuadSpec::default();
    let f = measure_functionals(&p, 1.0, &spec).unwrap();
    for (x, y, k) in [
        ([0.0; 3], [0.0; 3], c(2.0, 0.1)),
        ([0.2, 0.0, 0.0], [0.0, 0.5, 0.1], c(3.0, 0.2)),
        ([0.9, 0.0, 0.0], [-0.9, 0.0, 0.0], c(8.0, 0.05)),
    ] {
        let g = iterated_kernel(k, x, y, &p, &spec).unwrap().value.norm();
        let b = proposition_bound(k, x, y, &p, f.linf_norm, &spec).unwrap();
        assert!(g <= b.bound, "|G| = {g} > {}", b.bound);
        // Compact support: I ≤ ‖∇V‖∞ (c + d).
        let d = f.support_diameter.unwrap();
        assert!(b.integral_term <= f.grad_linf_norm * (b.c + d) * (1.0 + 1e-9));
    }
    assert_eq!(proposition_bound(c(0.0, 0.0), [0.0; 3], [0.0; 3], &p, 1.0, &spec), Err(Error::DegenerateK));
}

#[test]
fn ellipsoid_integral_on_the_diagonal_is_radial() {
    // x = y = 0: ellipsoids are spheres, I = ∫ |v'(s)| ds over the support.
    let p = Potential::bump(c(1.0, 0.0), 1.0);
    let i = ellipsoid_gradient_integral([0.0; 3], [0.0; 3], &p, &QuadSpec::default()).unwrap();
    // A monotone profile: the integral of |v'| is v(0) − v(1) = 1.
    assert!((i - 1.0).abs() < 1e-7, "{i}");
}

#[test]
fn ellipsoid_rejects_short_axis() {
    assert!(EllipsoidSpec::new([0.0; 3], [1.0, 0.0, 0.0], 0.4).is_err());
}
