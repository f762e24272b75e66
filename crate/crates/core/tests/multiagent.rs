use lowimpact::multiagent::{joint_rollout, solve_joint};
use lowimpact::scenario::builtin::{asteroid_laser, AsteroidOptions};
use lowimpact::scenario::Scenario;
use lowimpact::worldmodel::Policies;

fn plan(opts: &AsteroidOptions) -> (Scenario, lowimpact::multiagent::JointPlan) {
    let s = Scenario::from_file(asteroid_laser(opts), None).unwrap();
    let objectives = s.conditional_objectives("coarse:linf", 1.0).unwrap();
    let success = s.multiagent().unwrap().success.clone();
    let p = solve_joint(
        s.model().clone(),
        &objectives,
        &success,
        s.context().clone(),
        &s.planner().search,
    )
    .unwrap();
    (s, p)
}

#[test]
fn swapping_roles_keeps_the_outcome() {
    let (_, a) = plan(&AsteroidOptions::default());
    let (_, b) = plan(&AsteroidOptions {
        swap_roles: true,
        ..AsteroidOptions::default()
    });
    assert_eq!(a.report.p_success, b.report.p_success);
    for (x, y) in a.report.agents.iter().zip(&b.report.agents) {
        assert_eq!(x.row.penalty, y.row.penalty);
        assert_eq!(x.row.expected_u, y.row.expected_u);
    }
}

#[test]
fn success_probability_tracks_both_epsilons() {
    for eps in [[1e-3, 1e-3], [0.01, 0.2], [0.3, 0.05]] {
        let (_, p) = plan(&AsteroidOptions {
            epsilon: eps,
            ..AsteroidOptions::default()
        });
        let want = (1.0 - eps[0]) * (1.0 - eps[1]);
        assert!((p.report.p_success - want).abs() < 1e-12, "{eps:?}");
        for a in &p.report.agents {
            assert!(a.row.penalty.value() <= 1e-6, "{eps:?} {}", a.agent);
        }
    }
}

#[test]
fn effective_utility_mixes_in_indifference() {
    let (_, p) = plan(&AsteroidOptions::default());
    for a in &p.report.agents {
        let want = a.p_assumption * a.row.expected_u + (1.0 - a.p_assumption) * 0.5;
        assert!((a.effective_u - want).abs() < 1e-12);
        assert!((a.p_assumption - 1e-3).abs() < 1e-15);
    }
}

#[test]
fn one_idle_agent_blocks_the_shot() {
    let (s, p) = plan(&AsteroidOptions::default());
    let model = s.model();
    let objectives = s.conditional_objectives("coarse:linf", 1.0).unwrap();
    let success = s.multiagent().unwrap().success.clone();
    let alice_only = Policies::nulls(model).unwrap().with(p.optima[0].policy.clone());
    let r = joint_rollout(model.clone(), &alice_only, &success, &objectives, s.context().clone()).unwrap();
    assert_eq!(r.p_success, 0.0);
    let idle = Policies::nulls(model).unwrap();
    let r = joint_rollout(model.clone(), &idle, &success, &objectives, s.context().clone()).unwrap();
    assert_eq!(r.p_success, 0.0);
}
