mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sysintel::control::{deficit_update, ControllerState};
use sysintel::learning::{dual_learning, theta, Estimates};
use sysintel::model::{AppMask, CostModel, ResourceModel, RewardModel, Scenario};
use sysintel::oracle::{dual, intelligence_bound, minimize_dual, DualParams};

use common::{feasible, random_scenario, state_reward_cost};

fn scenario(seed: u64, m: usize, k: usize, capped: bool) -> Scenario {
    random_scenario(&mut ChaCha8Rng::seed_from_u64(seed), m, k, capped)
}

/// Apps in reverse order.
fn reversed(s: &Scenario) -> Scenario {
    let m = s.num_apps();
    let rev = |m_new: usize| m - 1 - m_new;
    let k_len = s.resources().len();
    Scenario::new(
        (0..m).map(|i| *s.chain(rev(i))).collect(),
        ResourceModel::new(
            (0..k_len)
                .map(|k| (0..m).map(|i| s.resources().state(k)[rev(i)]).collect())
                .collect(),
            s.resources().probs().to_vec(),
        )
        .unwrap(),
        CostModel::new(
            (0..k_len)
                .map(|k| (0..m).map(|i| s.costs().unit(rev(i), k)).collect())
                .collect(),
        )
        .unwrap(),
        RewardModel::new(
            (0..m).map(|i| s.rewards().pre(rev(i))).collect(),
            (0..m).map(|i| s.rewards().cur(rev(i))).collect(),
        )
        .unwrap(),
        s.actions().clone(),
        s.rho(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decide_maximises_drift_plus_penalty(
        seed in any::<u64>(),
        m in 1usize..=10,
        k in 1usize..=3,
        capped in any::<bool>(),
        v in 0.5f64..200.0,
        q in 0.0f64..500.0,
        demand in any::<u64>(),
    ) {
        let s = scenario(seed, m, k, capped);
        let demand = demand & ((1 << m) - 1);
        let mut ctl = ControllerState::bisc(&s, v);
        ctl.deficit = q;
        let objective = |k: usize, a: u64| {
            let (r, c) = state_reward_cost(&s, demand, k, a);
            v * r - q * c
        };
        for k in 0..k {
            let chosen = ctl.decide(AppMask(demand), k, &s);
            prop_assert!(feasible(&s, k, chosen.0));
            let best = (0..1u64 << m)
                .filter(|&a| feasible(&s, k, a))
                .map(|a| objective(k, a))
                .fold(f64::NEG_INFINITY, f64::max);
            let got = objective(k, chosen.0);
            prop_assert!(got >= best - 1e-9 * best.abs().max(1.0), "{got} < {best}");
        }
    }

    #[test]
    fn multiplier_scales_with_v(seed in any::<u64>(), m in 1usize..=3, k in 1usize..=3, v in 1.0f64..500.0) {
        let s = scenario(seed, m, k, seed % 2 == 0);
        prop_assume!(intelligence_bound(&s).is_ok());
        let one = minimize_dual(&DualParams::new(&s, 1.0).unwrap(), f64::INFINITY);
        let scaled = minimize_dual(&DualParams::new(&s, v).unwrap(), f64::INFINITY);
        prop_assert!((scaled.gamma - v * one.gamma).abs() <= 1e-9 * (v * one.gamma).max(1.0));
        prop_assert!((scaled.value - v * one.value).abs() <= 1e-9 * (v * one.value).abs().max(1.0));
    }

    #[test]
    fn bound_is_concave_nondecreasing_in_rho(seed in any::<u64>(), m in 1usize..=3, k in 1usize..=3) {
        let s = scenario(seed, m, k, seed % 2 == 1);
        let top = s.rho_max() * 1.3 + 0.1;
        let values: Vec<Option<f64>> = (0..=40)
            .map(|i| intelligence_bound(&s.with_rho(top * i as f64 / 40.0)).ok().map(|b| b.value))
            .collect();
        let feasible: Vec<f64> = values.iter().flatten().copied().collect();
        // Feasibility is monotone: once a budget works, larger ones do too.
        let first = values.iter().position(Option::is_some);
        if let Some(first) = first {
            prop_assert!(values[first..].iter().all(Option::is_some));
        }
        for w in feasible.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
        for w in feasible.windows(3) {
            prop_assert!(w[1] >= (w[0] + w[2]) / 2.0 - 1e-9);
        }
    }

    #[test]
    fn dual_is_convex(seed in any::<u64>(), m in 1usize..=3, k in 1usize..=3,
                      x in 0.0f64..50.0, y in 0.0f64..50.0, lam in 0.0f64..=1.0) {
        let s = scenario(seed, m, k, seed % 2 == 0);
        let p = DualParams::new(&s, 10.0).unwrap();
        let mid = dual(lam * x + (1.0 - lam) * y, &p);
        let chord = lam * dual(x, &p) + (1.0 - lam) * dual(y, &p);
        prop_assert!(mid <= chord + 1e-9 * chord.abs().max(1.0));
    }

    #[test]
    fn deficit_update_is_nonexpansive(d1 in 0.0f64..1e4, d2 in 0.0f64..1e4, c in 0.0f64..20.0, rho in 0.0f64..10.0) {
        let (a, b) = (deficit_update(d1, c, rho), deficit_update(d2, c, rho));
        prop_assert!(a >= 0.0 && b >= 0.0);
        prop_assert!((a - b).abs() <= (d1 - d2).abs() + 1e-9 * d1.max(d2).max(1.0));
    }

    #[test]
    fn learned_multiplier_ignores_app_order(seed in any::<u64>(), m in 2usize..=3, k in 1usize..=3, v in 2.0f64..400.0) {
        let s = scenario(seed, m, k, false);
        let r = reversed(&s);
        let a = dual_learning(&Estimates::exact(&s, 100), &s, v).unwrap();
        let b = dual_learning(&Estimates::exact(&r, 100), &r, v).unwrap();
        prop_assert!((a.gamma_t - b.gamma_t).abs() <= 1e-9 * a.gamma_t.max(1.0));
        prop_assert_eq!(a.capped, b.capped);
        if let (Ok(x), Ok(y)) = (intelligence_bound(&s), intelligence_bound(&r)) {
            prop_assert!((x.value - y.value).abs() <= 1e-9);
        }
    }

    #[test]
    fn theta_floor(v in 1.5f64..1e4, n in 1usize..10_000_000) {
        let floor = v.log10().powi(2);
        let t = theta(v, n);
        prop_assert!(t >= floor);
        if (n as f64) >= v * v {
            prop_assert_eq!(t, floor);
        }
    }

    #[test]
    fn mask_bit_roundtrip(bits in proptest::collection::vec(any::<bool>(), 1..64)) {
        let mask = AppMask::from_bits(&bits);
        prop_assert_eq!(mask.to_bits(bits.len()), bits.clone());
        prop_assert_eq!(mask.count(), bits.iter().filter(|&&b| b).count());
    }
}
