mod common;

use std::sync::Arc;

use proptest::prelude::*;

use pvcg::learner::LearnedAdjustment;
use pvcg::optimizer::analytic_waterfill;
use pvcg::payments::vcg_tau;
use pvcg::{AdjustmentModel, BidProfile, Economy, Mechanism, PriorSupport, Profile, ResourceVector, Solver, Technology};

fn solver() -> Solver {
    Solver::analytic(Technology::default())
}

fn profile_strategy(max_n: usize) -> impl Strategy<Value = Profile> {
    (1..=max_n, 1..=2usize).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(0.0..5.0f64, n),
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(0.0..1.0f64, m),
        )
            .prop_map(|(c, g, t)| Profile::scalar(&c, &g, &t).unwrap())
    })
}

fn economy(profile: Profile) -> Economy {
    Economy::new(profile, Technology::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn accepted_inputs_are_feasible(p in profile_strategy(8)) {
        let r = solver().solve(&p).unwrap();
        for (x, cap) in r.accepted.iter().zip(&p.capacities) {
            prop_assert!(x.values()[0] >= 0.0);
            prop_assert!(x.values()[0] <= cap.values()[0]);
        }
        prop_assert!(r.surplus >= 0.0);
    }

    #[test]
    fn waterfill_matches_grid_oracle_for_two_producers(p in profile_strategy(2)) {
        let grid = common::grid_oracle(&p, 400);
        let solved = solver().solve(&p).unwrap().surplus;
        // the grid can only do worse; the continuous optimum is close to a grid point
        prop_assert!(solved >= grid - 1e-9);
        prop_assert!(solved - grid <= 5e-3);
    }

    #[test]
    fn waterfill_is_deterministic(p in profile_strategy(10)) {
        let caps: Vec<f64> = p.capacities.iter().map(|c| c.values()[0]).collect();
        let a = analytic_waterfill(&caps, &p.cost_types, &p.valuation_types).unwrap();
        let b = analytic_waterfill(&caps, &p.cost_types, &p.valuation_types).unwrap();
        prop_assert_eq!(a.surplus.to_bits(), b.surplus.to_bits());
        prop_assert_eq!(a.ratios, b.ratios);
    }

    #[test]
    fn removing_a_producer_never_raises_surplus(p in profile_strategy(8)) {
        let s = solver();
        let full = s.solve(&p).unwrap().surplus;
        for cf in s.counterfactuals(&p).unwrap() {
            prop_assert!(cf.surplus <= full + 1e-12);
        }
    }

    #[test]
    fn surplus_monotone_in_capacity_and_cost(p in profile_strategy(8), i in 0usize..8, dc in 0.0..3.0f64, dg in 0.0..1.0f64) {
        let i = i % p.n();
        let s = solver();
        let base = s.max_surplus(&p).unwrap();
        let bigger = ResourceVector::scalar(p.capacities[i].values()[0] + dc).unwrap();
        prop_assert!(s.max_surplus(&p.with_report(i, bigger, p.cost_types[i])).unwrap() >= base - 1e-8);
        let costlier = p.with_report(i, p.capacities[i].clone(), p.cost_types[i] + dg);
        prop_assert!(s.max_surplus(&costlier).unwrap() <= base + 1e-8);
    }

    #[test]
    fn truthful_utility_is_marginal_contribution(p in profile_strategy(6), h in prop::collection::vec(-1.0..1.0f64, 6)) {
        let e = economy(p);
        let h: Vec<f64> = h[..e.n()].to_vec();
        let m = Mechanism { adjustment: AdjustmentModel::Fixed(h.clone()), ..Default::default() };
        let r = m.run(&e, &e.truthful_bids()).unwrap();
        for (i, hi) in h.iter().enumerate() {
            prop_assert!((r.utilities[i] - (r.marginal(i) + hi)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_adjustment_is_ir_and_wbb(p in profile_strategy(8)) {
        let e = economy(p);
        let r = Mechanism::default().run(&e, &e.truthful_bids()).unwrap();
        prop_assert!(r.utilities.iter().all(|u| *u >= -1e-8));
        prop_assert!(r.budget_slack >= -1e-8);
    }

    #[test]
    fn vcg_forms_agree(p in profile_strategy(8)) {
        let s = solver();
        let full = s.solve(&p).unwrap();
        let cfs = s.counterfactuals(&p).unwrap();
        let tau = vcg_tau(&Technology::default(), &p, &full, &cfs).unwrap();
        prop_assert!(tau.iter().all(|t| *t >= -1e-12));
    }

    #[test]
    fn no_profitable_unilateral_misreport(p in profile_strategy(6), i in 0usize..6, cap in 0.0..10.0f64, gamma in 0.0..2.0f64) {
        let e = economy(p);
        let i = i % e.n();
        let m = Mechanism::default();
        let truth = m.run(&e, &e.truthful_bids()).unwrap().utilities[i];
        let mut bids: BidProfile = e.truthful_bids();
        bids.reported_capacities[i] = ResourceVector::scalar(cap).unwrap();
        bids.reported_cost_types[i] = gamma;
        let lie = m.run(&e, &bids).unwrap().utilities[i];
        prop_assert!(lie <= truth + 1e-9, "lie {} truth {}", lie, truth);
    }

    #[test]
    fn learned_adjustment_ignores_own_report(p in profile_strategy(4).prop_filter("n >= 2", |p| p.n() >= 2), cap in 0.0..5.0f64, gamma in 0.0..1.0f64) {
        let support = PriorSupport::reference(p.n(), p.m());
        let model = LearnedAdjustment::random(&support, &[6, 6], 11).unwrap();
        let adj = AdjustmentModel::Learned(Arc::new(model));
        let moved = p.with_report(0, ResourceVector::scalar(cap).unwrap(), gamma);
        let a = adj.for_profile(&p).unwrap()[0];
        let b = adj.for_profile(&moved).unwrap()[0];
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn economy_json_roundtrip(p in profile_strategy(5)) {
        let e = economy(p);
        let text = serde_json::to_string(&e).unwrap();
        let back: Economy = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.truth, e.truth);
    }
}

#[test]
fn prior_sampling_is_deterministic_and_bounded() {
    let support = PriorSupport::reference(10, 2);
    let a = pvcg::adjustment::sample_prior(&support, 500, 3).unwrap();
    let b = pvcg::adjustment::sample_prior(&support, 500, 3).unwrap();
    assert_eq!(a, b);
    for p in &a {
        assert!(p.capacities.iter().all(|c| (0.0..=5.0).contains(&c.values()[0])));
        assert!(p.cost_types.iter().chain(&p.valuation_types).all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn uniform_capacity_mean() {
    let support = PriorSupport::reference(1, 1);
    let draws = pvcg::adjustment::sample_prior(&support, 100_000, 5).unwrap();
    let mean = draws.iter().map(|p| p.capacities[0].values()[0]).sum::<f64>() / draws.len() as f64;
    // three standard errors of a Uniform[0, 5] mean over 1e5 draws is about 0.014
    assert!((mean - 2.5).abs() < 0.02, "{mean}");
}
