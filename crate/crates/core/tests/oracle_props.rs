//! Randomized small worlds checked against the brute-force oracle.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use lowimpact::distribution::propagate;
use lowimpact::measures::state::{coarse_penalty, Norm};
use lowimpact::policy::{Policy, PolicySpace};
use lowimpact::variables::{Variable, VariableSpec};
use lowimpact::expr::Term;
use lowimpact::worldmodel::{Activation, Baseline, Branch, ModelBuilder, ObservationSpec, Policies, WorldModel};

/// A random single-agent world over `n` states of one component.
fn world(n: usize, rows: &[Vec<u32>], baseline_random: bool, observe: bool) -> WorldModel {
    let mut b = ModelBuilder::new(2);
    let c = b.component("s");
    for i in 0..n {
        b.state(&format!("s{i}"), &[i as i64]);
    }
    let a = b.agent("a", &["rest", "push", "pull"], "rest");
    if baseline_random {
        b.baseline(a, Baseline::Random(vec![(0, 0.5), (1, 0.25), (2, 0.25)]));
    }
    if observe {
        b.observe(a, ObservationSpec { components: vec![c], activations: vec![] });
    }
    for (k, w) in rows.iter().enumerate() {
        let (from, action) = (k / 3 % n, k % 3);
        let total: u32 = w.iter().sum();
        let to: Vec<(usize, f64)> = w
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0)
            .map(|(j, &x)| (j % n, x as f64 / total as f64))
            .collect();
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (j, p) in to {
            *merged.entry(j).or_default() += p;
        }
        b.transition(from, &[Some(action)], &merged.into_iter().collect::<Vec<_>>());
    }
    b.build()
}

fn arb_world() -> impl Strategy<Value = (WorldModel, Vec<u32>)> {
    (2usize..5, any::<bool>(), any::<bool>()).prop_flat_map(|(n, random, observe)| {
        let rows = prop::collection::vec(
            prop::collection::vec(0u32..4, n).prop_filter("some mass", |w| w.iter().any(|&x| x > 0)),
            1..3 * n,
        );
        let obs = if observe { n } else { 1 };
        (rows, prop::collection::vec(0u32..3, 2 * obs)).prop_map(move |(rows, table)| {
            (world(n, &rows, random, observe), table)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagate_matches_enumeration((model, table) in arb_world()) {
        prop_assume!(model.validate().is_ok());
        let n_obs = PolicySpace::of(&model, 0).n_obs;
        let policy = Policy::from_table(0, n_obs, table);
        let pols = Policies::new(1).with(policy.clone());
        for b in [Branch::Active, Branch::Inactive, Branch::Either] {
            let d = propagate(&model, &pols, &Activation::all(1, b)).unwrap();
            let oracle = common::enumerate(&model, &[Some(&policy)], &[b]);
            prop_assert_eq!(d.len(), oracle.len());
            for (t, p) in d.entries() {
                let q = oracle[&(t.active.clone(), t.states.clone(), t.actions.clone())];
                prop_assert!((p - q).abs() < 1e-12);
            }
            prop_assert!((d.mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_norms_match_enumeration((model, table) in arb_world()) {
        prop_assume!(model.validate().is_ok());
        let n_obs = PolicySpace::of(&model, 0).n_obs;
        let policy = Policy::from_table(0, n_obs, table);
        let pols = Policies::new(1).with(policy.clone());
        let term = Term::parse(&model, "state:s@end").unwrap();
        let spec = VariableSpec::new(vec![Variable::from_term("s", "state:s@end", term)]).unwrap();
        let m = |b| propagate(&model, &pols, &Activation::all(1, b)).unwrap().marginalize(&spec).unwrap();
        let (mx, mnx) = (m(Branch::Active), m(Branch::Inactive));
        let vars = [common::OracleVar { component: 0, edges: vec![] }];
        let o = |b| common::marginal(&model, &common::enumerate(&model, &[Some(&policy)], &[b]), &vars);
        let (ox, onx) = (o(Branch::Active), o(Branch::Inactive));
        prop_assert!((coarse_penalty(&mx, &mnx, Norm::Linf).unwrap() - common::linf(&ox, &onx)).abs() < 1e-12);
        prop_assert!((coarse_penalty(&mx, &mnx, Norm::Tv).unwrap() - common::tv(&ox, &onx)).abs() < 1e-12);
        prop_assert!((coarse_penalty(&mx, &mnx, Norm::L2).unwrap() - common::l2(&ox, &onx)).abs() < 1e-12);
    }
}
