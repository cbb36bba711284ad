use multisphere::config::SceneConfig;
use multisphere::field::CueModel;
use multisphere::validation;

#[test]
fn addition_theorem_suite_passes() {
    let r = validation::addition_theorem_suite(2024).unwrap();
    assert!(r.passed(), "{r:#?}");
}

#[test]
fn gradient_suite_passes_at_fifty_states() {
    let m = CueModel::new(&SceneConfig::default()).unwrap();
    let r = validation::gradient_suite(&m, (2.13, 1.10), 50, 7).unwrap();
    assert!(r.passed(), "{r:#?}");
}
