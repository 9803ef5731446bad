use curvegcn::gradcheck::{checks, run_suite, PRIMITIVE_TOLERANCE, SAMPLER_TOLERANCE};

#[test]
fn every_backward_pass_matches_finite_differences() {
    let results = run_suite(100, 2024).unwrap();
    assert_eq!(results.len(), checks().len());
    for r in &results {
        assert_eq!(r.cases, 100);
        assert!(r.passed(), "{}: max rel err {:.3e} (tolerance {:.0e})", r.name, r.max_rel_err, r.tolerance);
    }
}

#[test]
fn samplers_use_the_looser_tolerance() {
    for (name, tol, _) in checks() {
        let expected = if name.ends_with("sampler") { SAMPLER_TOLERANCE } else { PRIMITIVE_TOLERANCE };
        assert_eq!(tol, expected, "{name}");
    }
}

#[test]
fn suite_is_deterministic() {
    assert_eq!(run_suite(3, 9).unwrap(), run_suite(3, 9).unwrap());
}
