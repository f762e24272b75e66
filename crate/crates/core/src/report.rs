//! Batch operations over a scenario and their CSV output.

use crate::conditioning::{
    announcement_probability, conditioned_between, probability_pump_report, Conditioning,
};
use crate::error::{Error, Result};
use crate::measures::Penalty;
use crate::multiagent::solve_joint;
use crate::planner::{mu_sweep, SearchConfig, SweepRow};
use crate::scenario::Scenario;

pub const RUN_HEADER: [&str; 6] = ["mu", "policy_id", "expected_u", "penalty", "objective", "measure"];
pub const COMPARE_HEADER: [&str; 4] = ["measure", "policy_id", "expected_u", "penalty"];
pub const JOINT_HEADER: [&str; 10] = [
    "agent",
    "mu",
    "policy_id",
    "expected_u",
    "effective_u",
    "p_assumption",
    "penalty",
    "objective",
    "measure",
    "p_success",
];

/// Rounds to 12 significant digits and prints the shortest text that
/// parses back to the rounded value. Infinities print as `inf`.
pub fn number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float");
    if rounded == 0.0 {
        return "0".into();
    }
    let exp = rounded.abs().log10().floor();
    if (-6.0..16.0).contains(&exp) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn parse_number(text: &str) -> Option<f64> {
    match text {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => text.parse().ok(),
    }
}

fn penalty(p: &Penalty) -> String {
    match p {
        Penalty::Unbounded => "inf".into(),
        Penalty::Finite(v) => number(*v),
    }
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Which penalty weights a run covers.
#[derive(Debug, Clone, PartialEq)]
pub enum MuChoice {
    /// The scenario's `planner.mu`.
    Default,
    /// The scenario's `planner.mu_grid`.
    Grid,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub measure: Option<String>,
    pub condition: Option<String>,
    pub mu: MuChoice,
    pub search: Option<SearchConfig>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            measure: None,
            condition: None,
            mu: MuChoice::Default,
            search: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub measure: String,
    pub conditioning: String,
    /// Largest `mu` first.
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
    /// Diagnostics such as announcement probabilities, one per line.
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn csv(&self) -> String {
        write_csv(
            &RUN_HEADER,
            self.rows.iter().map(|r| {
                vec![
                    number(r.mu),
                    r.policy_id.clone(),
                    number(r.expected_u),
                    penalty(&r.penalty),
                    number(r.objective),
                    r.measure.clone(),
                ]
            }),
        )
    }
}

/// Optimizes the planner agent at each `mu`.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let settings = scenario.planner();
    let measure = opts.measure.clone().unwrap_or_else(|| settings.measure.clone());
    let condition = opts.condition.clone().unwrap_or_else(|| settings.condition.clone());
    let mus = match &opts.mu {
        MuChoice::Default => vec![settings.mu],
        MuChoice::Grid => settings.mu_grid.clone().ok_or_else(|| {
            Error::InvalidConfig(format!(
                "scenario `{}` has no planner.mu_grid; pass --mu-grid",
                scenario.name()
            ))
        })?,
        MuChoice::Explicit(m) => m.clone(),
    };
    let search = opts.search.unwrap_or(settings.search);
    let problem = scenario.problem(&measure, &condition, mus[0])?;
    let optima = mu_sweep(&problem, &mus, &search)?;

    let mut notes = Vec::new();
    if let Conditioning::Announce(event) = problem.conditioning() {
        let model = problem.model();
        notes.push(format!(
            "announcement {}: pA_given_notX={}",
            event.name(),
            number(announcement_probability(model, event)?)
        ));
        for o in &optima {
            let pump = probability_pump_report(model, &problem.policies(&o.policy), problem.agent(), event)?;
            notes.push(format!(
                "mu={} policy={}: pA_given_X={} pA_given_notX={} ratio={}",
                number(o.row.mu),
                o.row.policy_id,
                number(pump.pa_given_x),
                number(pump.pa_given_notx),
                number(pump.ratio)
            ));
        }
    }
    Ok(RunReport {
        scenario: scenario.name().to_string(),
        measure,
        conditioning: problem.conditioning().tag(),
        rows: optima.into_iter().map(|o| o.row).collect(),
        warnings: problem.conditioning().warnings(),
        notes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub measure: String,
    pub policy_id: String,
    pub expected_u: f64,
    pub penalty: Penalty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub scenario: String,
    pub conditioning: String,
    pub rows: Vec<CompareRow>,
    pub warnings: Vec<String>,
}

impl CompareReport {
    pub fn csv(&self) -> String {
        write_csv(
            &COMPARE_HEADER,
            self.rows.iter().map(|r| {
                vec![
                    r.measure.clone(),
                    r.policy_id.clone(),
                    number(r.expected_u),
                    penalty(&r.penalty),
                ]
            }),
        )
    }
}

/// Every measure on one fixed policy; the two distributions are computed
/// once. An empty `measures` list means every measure the scenario knows.
pub fn compare(
    scenario: &Scenario,
    measures: &[String],
    policy: &str,
    condition: Option<&str>,
) -> Result<CompareReport> {
    let measures = if measures.is_empty() {
        scenario.measure_names()
    } else {
        measures.to_vec()
    };
    let configs = measures
        .iter()
        .map(|m| scenario.measure(m))
        .collect::<Result<Vec<_>>>()?;
    let condition = condition.unwrap_or(&scenario.planner().condition).to_string();
    let problem = scenario.problem(&configs[0].name, &condition, scenario.planner().mu)?;
    let policy = scenario.policy(policy)?;
    let eval = problem.evaluate(&policy)?;
    let (dx, dnx, _) = problem.distributions(&policy)?;
    let rows = configs
        .iter()
        .map(|cfg| {
            Ok(CompareRow {
                measure: cfg.name.clone(),
                policy_id: eval.policy_id.clone(),
                expected_u: eval.expected_u,
                penalty: conditioned_between(
                    cfg,
                    scenario.context(),
                    problem.conditioning(),
                    problem.agent(),
                    &dx,
                    &dnx,
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareReport {
        scenario: scenario.name().to_string(),
        conditioning: problem.conditioning().tag(),
        rows,
        warnings: problem.conditioning().warnings(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointRow {
    pub agent: String,
    pub row: SweepRow,
    pub effective_u: f64,
    pub p_assumption: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointRunReport {
    pub scenario: String,
    pub p_success: f64,
    pub agents: Vec<JointRow>,
}

impl JointRunReport {
    pub fn csv(&self) -> String {
        write_csv(
            &JOINT_HEADER,
            self.agents.iter().map(|a| {
                vec![
                    a.agent.clone(),
                    number(a.row.mu),
                    a.row.policy_id.clone(),
                    number(a.row.expected_u),
                    number(a.effective_u),
                    number(a.p_assumption),
                    penalty(&a.row.penalty),
                    number(a.row.objective),
                    a.row.measure.clone(),
                    number(self.p_success),
                ]
            }),
        )
    }
}

/// Finds each agent's conditional optimum, then runs them together.
pub fn joint(
    scenario: &Scenario,
    measure: Option<&str>,
    mu: Option<f64>,
    search: Option<SearchConfig>,
) -> Result<JointRunReport> {
    let settings = scenario.planner();
    let measure = measure.unwrap_or(&settings.measure);
    let mu = mu.unwrap_or(settings.mu);
    let objectives = scenario.conditional_objectives(measure, mu)?;
    let ma = scenario.multiagent().expect("objectives imply a multiagent section");
    let plan = solve_joint(
        scenario.model().clone(),
        &objectives,
        &ma.success,
        scenario.context().clone(),
        &search.unwrap_or(settings.search),
    )?;
    Ok(JointRunReport {
        scenario: scenario.name().to_string(),
        p_success: plan.report.p_success,
        agents: plan
            .report
            .agents
            .into_iter()
            .map(|a| JointRow {
                agent: a.agent,
                row: a.row,
                effective_u: a.effective_u,
                p_assumption: a.p_assumption,
            })
            .collect(),
    })
}
