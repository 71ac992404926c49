use eigenbound::verify::*;
use eigenbound::{BoundMode, Complex64, Potential};

fn names(r: &VerifyReport) -> Vec<&str> {
    r.checks.iter().map(|c| c.name.as_str()).collect()
}

#[test]
fn bump_suite_passes() {
    let p = Potential::bump(Complex64::new(1.0, 0.0), 1.0);
    let opts = VerifyOptions { extended: true, ..VerifyOptions::default() };
    let r = run_suite(&p, &opts).unwrap();
    assert_eq!(r.mode, BoundMode::Theorem1);
    assert!(r.passed(), "{:#?}", r.failures());
    for want in [
        "lemma1_kernel",
        "proposition",
        "integral_term",
        "hs_identity",
        "determinant_ceiling",
        "hadamard",
        "bound_chain",
        "radius",
        "extended_precision",
    ] {
        assert!(names(&r).contains(&want), "missing {want}");
    }
    let kernel = &r.checks[0];
    assert!(kernel.samples >= 19 && kernel.margin > 0.0);
}

#[test]
fn corrupted_constant_is_caught() {
    let p = Potential::bump(Complex64::new(1.0, 0.0), 1.0);
    let opts =
        VerifyOptions { counting: false, fault: Some(Fault::ScaleKernelConstant(0.01)), ..VerifyOptions::default() };
    let r = run_suite(&p, &opts).unwrap();
    assert!(!r.passed());
    let failed: Vec<&str> = r.failures().iter().map(|c| c.name.as_str()).collect();
    assert_eq!(failed, vec!["lemma1_kernel"]);

    let opts = VerifyOptions { counting: false, fault: Some(Fault::ScaleCeiling(1e-30)), ..VerifyOptions::default() };
    let r = run_suite(&p, &opts).unwrap();
    let failed: Vec<&str> = r.failures().iter().map(|c| c.name.as_str()).collect();
    assert_eq!(failed, vec!["determinant_ceiling"]);
}

#[test]
fn exponential_suite_takes_the_second_branch() {
    let p = Potential::mollified_exponential(0.2, 2.0);
    let opts = VerifyOptions { kernel_samples: 12, extended: true, ..VerifyOptions::default() };
    let r = run_suite(&p, &opts).unwrap();
    assert_eq!(r.mode, BoundMode::Theorem2);
    assert!(r.passed(), "{:#?}", r.failures());
    assert!(names(&r).contains(&"lemma2_kernel"));
    let chain = r.checks.iter().find(|c| c.name == "bound_chain").unwrap();
    assert!(chain.detail.contains("jensen"), "{}", chain.detail);
}

#[test]
fn report_serializes() {
    let p = Potential::bump(Complex64::new(0.5, 0.5), 1.0);
    let opts = VerifyOptions { counting: false, kernel_samples: 4, ..VerifyOptions::default() };
    let r = run_suite(&p, &opts).unwrap();
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["checks"].as_array().unwrap().len(), r.checks.len());
    assert!(json["bound"]["n_bound"].is_number());
}
