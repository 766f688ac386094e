use lierep::algebra::StructureConstants;
use lierep::clebsch::{tensor_structure_report, verification_reps, CgOptions};
use lierep::learnrep::{run, run_with_acceptance, LearnRepConfig};
use lierep::Execution;

#[test]
fn learned_spin_one_is_verified_irreducible() {
    let sc = StructureConstants::builtin("so3").unwrap();
    let (rows, cols) = verification_reps(&sc).unwrap();
    let accept = |rep: &lierep::reps::AlgebraRep| {
        tensor_structure_report(rep, &rows, &cols, &CgOptions::default()).map(|r| r.is_match).unwrap_or(false)
    };
    let out = run_with_acceptance(&LearnRepConfig::new(sc.clone(), 3), &accept).unwrap();
    assert!(out.converged && out.final_loss.total < 1e-9);
    let report = tensor_structure_report(&out.rep, &rows, &cols, &CgOptions::default()).unwrap();
    assert_eq!(report.matched_label(), Some("1"));
    assert!(report.schur.condition_number.unwrap() <= 1e6);
}

#[test]
fn serial_and_parallel_runs_agree() {
    let sc = StructureConstants::builtin("so21").unwrap();
    let mut config = LearnRepConfig::new(sc, 3);
    config.seed = 4;
    let serial = run(&config).unwrap();
    config.execution = Execution::Parallel;
    let parallel = run(&config).unwrap();
    assert_eq!(serial.trace, parallel.trace);
    assert_eq!(serial.rep.generators, parallel.rep.generators);
    assert_eq!(serial.restarts, parallel.restarts);
}
