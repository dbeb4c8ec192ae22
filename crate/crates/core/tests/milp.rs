mod common;

use deepfreight::milp::{build_model, parse_lp, solve, validate_solution, write_lp, SolveLimits, SolveStatus};
use deepfreight::rng::Rng;

#[test]
fn branch_and_bound_matches_enumeration() {
    let mut rng = Rng::new(11);
    for case in 0..30 {
        let inst = common::random_milp_instance(&mut rng);
        let oracle = common::milp_enumerate(&inst);
        let sol = solve(&build_model(&inst), &SolveLimits::default());
        assert_eq!(sol.status, SolveStatus::Optimal, "case {case}");
        assert!(
            (sol.objective - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
            "case {case}: solver {} oracle {oracle} ({inst:?})",
            sol.objective
        );
        let rep = validate_solution(&inst, &sol);
        assert!(rep.is_ok(), "case {case}: {:?}", rep.violations);
    }
}

#[test]
fn lp_text_round_trips_random_models() {
    let mut rng = Rng::new(5);
    for _ in 0..20 {
        let model = build_model(&common::random_milp_instance(&mut rng));
        assert_eq!(parse_lp(&write_lp(&model)).unwrap(), model);
    }
}
