mod common;

use lowimpact::conditioning::announcement_probability;
use lowimpact::report;
use lowimpact::scenario::builtin::{self, builtin};
use lowimpact::scenario::{builtin_names, Scenario};
use lowimpact::Error;

#[test]
fn every_builtin_round_trips_through_toml() {
    for name in builtin_names() {
        let s = Scenario::load(name).unwrap();
        let text = s.to_toml().unwrap();
        let back = Scenario::from_toml(&text).unwrap();
        assert_eq!(s, back, "{name}");
        assert_eq!(back.to_toml().unwrap(), text, "{name}");
    }
}

#[test]
fn scenario_files_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clips.toml");
    std::fs::write(&path, Scenario::load("paperclip-grid").unwrap().to_toml().unwrap()).unwrap();
    let s = Scenario::load(path.to_str().unwrap()).unwrap();
    assert_eq!(s.name(), "paperclip-grid");
}

#[test]
fn unknown_names_are_reported_with_their_class() {
    let err = Scenario::load("no-such-world").unwrap_err();
    assert!(matches!(err, Error::UnknownBuiltin { .. }));
    assert_eq!(err.class() as u8, 2);
    let s = Scenario::load("paperclip-grid").unwrap();
    let err = s.measure("coarse:nope").unwrap_err();
    assert_eq!(err.class() as u8, 1);
    assert!(err.to_string().contains("coarse:linf"));
}

#[test]
fn builtin_lookup_matches_the_name_list() {
    for name in builtin_names() {
        assert_eq!(builtin(name).unwrap().name, *name);
    }
    assert!(builtin("paperclip").is_none());
}

#[test]
fn stock_baseline_announcement_probability_is_one_over_n() {
    for n in [10, 100, 1000] {
        let s = Scenario::from_file(builtin::stock_advisor(n), None).unwrap();
        let p = announcement_probability(s.model(), &s.announcements()[0]).unwrap();
        assert_eq!(p, 1.0 / n as f64, "n = {n}");
    }
}

#[test]
fn compare_matches_oracle_norms_on_takeover() {
    let s = Scenario::load("paperclip-grid").unwrap();
    let measures: Vec<String> = ["coarse:linf", "coarse:tv", "coarse:l2"].map(String::from).into();
    let r = report::compare(&s, &measures, "takeover", Some("none")).unwrap();
    let model = s.model();
    let policy = s.policy("takeover").unwrap();
    let refs = [Some(&policy)];
    let vars = common::scenario_vars(s.file(), model);
    let dx = common::marginal(model, &common::enumerate(model, &refs, &[lowimpact::worldmodel::Branch::Active]), &vars);
    let dnx = common::marginal(model, &common::enumerate(model, &refs, &[lowimpact::worldmodel::Branch::Inactive]), &vars);
    let want = [common::linf(&dx, &dnx), common::tv(&dx, &dnx), common::l2(&dx, &dnx)];
    for (row, w) in r.rows.iter().zip(want) {
        assert!(w > 0.0);
        assert!((row.penalty.value() - w).abs() < 1e-12, "{}", row.measure);
    }
}

#[test]
fn output_conditioning_warns() {
    let s = Scenario::load("message-channel").unwrap();
    let r = report::compare(&s, &["coarse:linf".to_string()], "answer", None).unwrap();
    assert!(!r.warnings.is_empty());
    assert_eq!(r.conditioning, "output:output");
}

fn stock(n: usize) -> Scenario {
    Scenario::from_file(builtin::stock_advisor(n), None).unwrap()
}

#[test]
fn conditioning_opens_a_channel_the_plain_penalty_closes() {
    use lowimpact::planner::Problem;
    let s = stock(1000);
    let floor = s.announcements()[0].penalty_floor.unwrap();
    let plain: Problem = s.problem("coarse:linf", "none", 1.0).unwrap();
    let conditioned = s.problem("coarse:linf", "announce:rich", 1.0).unwrap();
    let all: Vec<_> = plain.space().iter().collect();
    assert_eq!(all.len() as u128, plain.space().size());
    let evals: Vec<_> = all.iter().map(|p| (p, plain.evaluate(p).unwrap())).collect();
    let best_u = evals.iter().map(|(_, e)| e.expected_u).fold(0.0, f64::max);
    let top: Vec<_> = evals.iter().filter(|(_, e)| e.expected_u >= best_u - 1e-12).collect();
    assert!(top.len() >= 2);
    for (p, e) in &top {
        assert!(e.penalty.value() > floor, "{} has plain penalty {}", p.id(), e.penalty);
    }
    let low = top
        .iter()
        .filter(|(p, _)| conditioned.evaluate(p).unwrap().penalty.value() <= 1e-12)
        .count();
    assert_eq!(low, 1);
}

#[test]
fn probability_pump_reports() {
    use lowimpact::conditioning::probability_pump_report;
    use lowimpact::worldmodel::Policies;
    let s = stock(10);
    let model = s.model();
    let event = &s.announcements()[0];
    let report = |name: &str| {
        let pols = Policies::new(1).with(s.policy(name).unwrap());
        probability_pump_report(model, &pols, 0, event).unwrap()
    };
    let best = report("best");
    assert_eq!(best.pa_given_x, 1.0);
    assert_eq!(best.pa_given_notx, 0.1);
    assert!((best.ratio - 10.0).abs() < 1e-12);
    assert!((report("null").ratio - 1.0).abs() < 1e-12);
    let avoid = lowimpact::policy::Policy::open_loop(model, 0, &[model.action_index(0, "rec_0").unwrap()]).unwrap();
    let r = probability_pump_report(model, &Policies::new(1).with(avoid), 0, event).unwrap();
    assert!(r.ratio < 1.0);
}

#[test]
fn announcement_probability_matches_enumeration() {
    use lowimpact::worldmodel::Branch;
    for n in [10, 1000] {
        let s = stock(n);
        let model = s.model();
        let oracle = common::enumerate(model, &[None], &[Branch::Inactive]);
        let want: f64 = oracle
            .iter()
            .filter(|((_, st, _), _)| common::holds(model, "state:announce@end == 1", *st.last().unwrap()))
            .map(|(_, p)| p)
            .sum();
        let got = announcement_probability(model, &s.announcements()[0]).unwrap();
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn conditioning_on_a_sure_event_changes_nothing() {
    use lowimpact::conditioning::{conditioned_between, AnnouncementEvent, Conditioning};
    use lowimpact::distribution::EventPredicate;
    let s = Scenario::load("paperclip-grid").unwrap();
    let problem = s.problem("coarse:linf", "none", 1.0).unwrap();
    let (dx, dnx, _) = problem.distributions(&s.policy("takeover").unwrap()).unwrap();
    let sure = Conditioning::Announce(AnnouncementEvent::new(EventPredicate::sure()));
    for m in ["coarse:linf", "coarse:tv", "div:js", "importance"] {
        let cfg = s.measure(m).unwrap();
        let a = conditioned_between(&cfg, s.context(), &Conditioning::None, 0, &dx, &dnx).unwrap();
        let b = conditioned_between(&cfg, s.context(), &sure, 0, &dx, &dnx).unwrap();
        assert!((a.value() - b.value()).abs() <= 1e-12, "{m}");
    }
}
