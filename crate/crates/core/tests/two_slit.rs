use pilotwave::scenarios::{run_scenario, Details, InitKind, ScenarioParams};

#[test]
fn equilibrium_ensemble_stays_in_equilibrium() {
    let out = run_scenario("two_slit", &ScenarioParams::with_seed(2024)).unwrap();
    let Details::TwoSlit(s) = &out.details else {
        panic!()
    };
    let eq = s.equivariance.as_ref().unwrap();
    for e in &eq.entries {
        println!("t = {:.2}: ks {:?}", e.time, e.ks);
    }
    println!(
        "threshold {:.4}, frozen {:?}, contrast {:?}, upper {:.4}, {:?}",
        eq.threshold, s.frozen_density_ks, s.fringe_contrast, s.upper_fraction, out.diagnostics
    );
    assert!(out.passed(), "{:?}", out.failures());
    assert!((s.upper_fraction - 0.5).abs() < 0.015);
    // the initial density is the wrong reference once fringes form
    assert!(s.frozen_density_ks.unwrap() > eq.threshold);
}

#[test]
fn uniform_in_slits_fan() {
    let params = ScenarioParams {
        init: Some(InitKind::UniformInSlits),
        ..ScenarioParams::with_seed(5)
    };
    let out = run_scenario("two_slit", &params).unwrap();
    let Details::TwoSlit(s) = &out.details else {
        panic!()
    };
    println!(
        "{:?} crossings {} contrast {:?}",
        s.slit_passage, s.axis_crossings, s.fringe_contrast
    );
    assert!(out.passed(), "{:?}", out.failures());
    assert_eq!(s.slit_passage.single_slit, 200);
    assert_eq!(s.axis_crossings, 0);
}
