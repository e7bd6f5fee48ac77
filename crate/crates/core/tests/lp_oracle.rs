//! The parametric bound against a general-purpose LP solver.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sysintel::oracle::{intelligence_bound, OracleError};

use common::{lp_bound, random_scenario};

#[test]
fn parametric_bound_matches_lp_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut feasible_cases, mut infeasible_cases) = (0, 0);
    for case in 0..200 {
        let m = rng.gen_range(1..=2);
        let k = rng.gen_range(1..=3);
        let s = random_scenario(&mut rng, m, k, case % 3 == 0);
        let lp = lp_bound(&s);
        match (intelligence_bound(&s), lp) {
            (Ok(sol), Some(v)) => {
                assert!(
                    (sol.value - v).abs() <= 1e-6,
                    "case {case}: parametric {} vs LP {v}",
                    sol.value
                );
                assert!(sol.cost <= s.rho() + 1e-9);
                feasible_cases += 1;
            }
            (Err(OracleError::InfeasibleBudget { .. }), None) => infeasible_cases += 1,
            (got, lp) => panic!("case {case}: disagreement {got:?} vs {lp:?}"),
        }
    }
    assert!(feasible_cases > 100, "{feasible_cases} feasible, {infeasible_cases} not");
}
