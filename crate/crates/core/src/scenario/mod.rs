//! Scenario files: a world model plus the variables, utilities, measures,
//! conditioning events and planner settings needed to run it.

pub mod builtin;
pub mod file;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::conditioning::{
    AnnouncementEvent, Conditioning, MessageChannel, DEFAULT_MIN_ANNOUNCEMENT_PROBABILITY,
};
use crate::distribution::{propagate, EventPredicate};
use crate::error::{Error, Result};
use crate::expr::{Predicate, Term};
use crate::measures::info::{DetectionConfig, FactSet, UtilitySet, DEFAULT_CONJUNCTION_SIZE};
use crate::measures::state::{Norm, DEFAULT_SOFTMAX_TAU};
use crate::measures::Utility;
use crate::multiagent::ConditionalObjective;
use crate::penalty::{measure_names, MeasureContext, MeasureKind, PenaltyConfig};
use crate::planner::{log_grid, Objective, Problem, SearchConfig, DEFAULT_INDIFFERENCE};
use crate::policy::Policy;
use crate::variables::{Variable, VariableSpec};
use crate::worldmodel::{
    Activation, Agent, Baseline, Branch, ModelBuilder, ObservationSpec, Policies, WorldModel,
    DEFAULT_EPSILON,
};

pub use builtin::{builtin, builtin_names};
pub use file::ScenarioFile;

/// Parses `lo:hi:steps` into a log-spaced grid.
pub fn parse_mu_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("mu grid `{text}` is not of the form lo:hi:steps"));
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    log_grid(lo, hi, n)
}

/// Finds the line of a table or key in the source text.
struct Locator<'a> {
    lines: Vec<&'a str>,
}

impl<'a> Locator<'a> {
    fn new(src: &'a str) -> Self {
        Locator {
            lines: src.lines().collect(),
        }
    }

    fn header(line: &str) -> Option<String> {
        let t = line.trim();
        if !t.starts_with('[') {
            return None;
        }
        let end = t.rfind(']')?;
        Some(t[..=end].chars().filter(|c| !c.is_whitespace()).collect())
    }

    /// 1-based line of `key` inside `table` (the `index`-th entry of an
    /// array of tables), falling back to the table header.
    fn find(&self, at: &At) -> Option<usize> {
        let start = if at.table.is_empty() {
            0
        } else {
            let single = format!("[{}]", at.table);
            let array = format!("[[{}]]", at.table);
            let mut seen = 0;
            let mut found = None;
            for (i, line) in self.lines.iter().enumerate() {
                match Self::header(line) {
                    Some(h) if at.index.is_none() && h == single => {
                        found = Some(i);
                        break;
                    }
                    Some(h) if at.index.is_some() && h == array => {
                        if Some(seen) == at.index {
                            found = Some(i);
                            break;
                        }
                        seen += 1;
                    }
                    _ => {}
                }
            }
            found? + 1
        };
        if let Some(key) = at.key {
            for (i, line) in self.lines.iter().enumerate().skip(start) {
                if Self::header(line).is_some() {
                    break;
                }
                if let Some(rest) = line.trim().strip_prefix(key) {
                    if rest.trim_start().starts_with('=') {
                        return Some(i + 1);
                    }
                }
            }
        }
        if at.table.is_empty() {
            None
        } else {
            Some(start)
        }
    }
}

/// Where a problem was found: `table[index].key`.
struct At<'a> {
    table: &'a str,
    index: Option<usize>,
    key: Option<&'a str>,
}

impl fmt::Display for At<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if !self.table.is_empty() {
            parts.push(match self.index {
                Some(i) => format!("{}[{i}]", self.table),
                None => self.table.to_string(),
            });
        }
        if let Some(k) = self.key {
            parts.push(k.to_string());
        }
        f.write_str(&parts.join("."))
    }
}

fn at<'a>(table: &'a str, key: &'a str) -> At<'a> {
    At {
        table,
        index: None,
        key: Some(key),
    }
}

fn at_i<'a>(table: &'a str, index: usize, key: &'a str) -> At<'a> {
    At {
        table,
        index: Some(index),
        key: Some(key),
    }
}

struct Diagnostics<'a> {
    locator: Option<Locator<'a>>,
    messages: Vec<String>,
}

impl<'a> Diagnostics<'a> {
    fn new(src: Option<&'a str>) -> Self {
        Diagnostics {
            locator: src.map(Locator::new),
            messages: Vec::new(),
        }
    }

    fn push(&mut self, at: At, msg: impl fmt::Display) {
        let line = self.locator.as_ref().and_then(|l| l.find(&at));
        self.messages.push(match line {
            Some(n) => format!("line {n}: {at}: {msg}"),
            None => format!("{at}: {msg}"),
        });
    }

    fn plain(&mut self, msg: impl fmt::Display) {
        self.messages.push(msg.to_string());
    }

    fn check(&mut self) -> Result<()> {
        if self.messages.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(std::mem::take(&mut self.messages)))
        }
    }
}

fn detail(e: Error) -> String {
    match e {
        Error::Parse(m) => m,
        Error::Validation(m) => m.join("; "),
        other => other.to_string(),
    }
}

fn event_from(name: &str, pred: Predicate) -> EventPredicate {
    EventPredicate::new(name, Arc::new(move |t| pred.holds(t)))
}

/// Planner defaults from the `[planner]` section.
#[derive(Debug, Clone)]
pub struct PlannerSettings {
    pub agent: usize,
    pub utility: String,
    pub measure: String,
    pub condition: String,
    pub mu: f64,
    pub mu_grid: Option<Vec<f64>>,
    pub search: SearchConfig,
}

#[derive(Debug, Clone)]
pub struct MultiagentSettings {
    pub success: EventPredicate,
    /// One conditional objective per agent, in agent order.
    pub agents: Vec<(String, EventPredicate)>,
    pub indifference: f64,
}

/// A loaded and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    file: ScenarioFile,
    model: Arc<WorldModel>,
    context: Arc<MeasureContext>,
    utilities: BTreeMap<String, Utility>,
    named_measures: BTreeMap<String, String>,
    softmax_tau: f64,
    channels: Vec<MessageChannel>,
    announcements: Vec<AnnouncementEvent>,
    planner: PlannerSettings,
    policies: Vec<(String, Policy)>,
    multiagent: Option<MultiagentSettings>,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.file == other.file && self.model == other.model
    }
}

impl Scenario {
    /// A built-in name or a path to a TOML file.
    pub fn load(name_or_path: &str) -> Result<Scenario> {
        if let Some(file) = builtin(name_or_path) {
            return Scenario::from_file(file, None);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(Error::UnknownBuiltin {
                name: name_or_path.to_string(),
                builtins: builtin_names().iter().map(|s| s.to_string()).collect(),
            });
        }
        let text = std::fs::read_to_string(path)?;
        Scenario::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Scenario> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let loc = e
                .span()
                .map(|s| format!("line {}: ", text[..s.start].matches('\n').count() + 1))
                .unwrap_or_default();
            Error::Parse(format!("{loc}{}", e.message()))
        })?;
        Scenario::from_file(file, Some(text))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.file).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Validates `file`; `src` only improves error locations.
    pub fn from_file(file: ScenarioFile, src: Option<&str>) -> Result<Scenario> {
        let mut diag = Diagnostics::new(src);
        let model = Arc::new(build_model(&file, &mut diag)?);
        let m = &*model;

        let variables = if file.variables.is_empty() {
            unboxed_variables(m)
        } else {
            let mut vars = Vec::new();
            for (i, v) in file.variables.iter().enumerate() {
                match slice_term(m, &v.term) {
                    Ok(term) => {
                        if !v.edges.windows(2).all(|w| w[0] < w[1]) {
                            diag.push(at_i("variables", i, "edges"), "bin edges must be ascending");
                        }
                        vars.push(Variable::from_term(&v.name, &v.term, term).with_edges(v.edges.clone()));
                    }
                    Err(e) => diag.push(at_i("variables", i, "term"), e),
                }
            }
            vars
        };
        let names: Vec<&str> = file.variables.iter().map(|v| v.name.as_str()).collect();
        if let Some(d) = first_duplicate(&names) {
            diag.plain(format!("variables: `{d}` defined twice"));
        }

        let mut utilities = BTreeMap::new();
        for (i, u) in file.utilities.iter().enumerate() {
            let built = match (&u.indicator, &u.term) {
                (Some(expr), None) => Predicate::parse(m, expr)
                    .map(|p| Utility::indicator(&u.name, p))
                    .map_err(|e| (at_i("utilities", i, "indicator"), detail(e))),
                (None, Some(term)) => Term::parse(m, term)
                    .map(|t| Utility::linear(&u.name, t, u.scale.unwrap_or(1.0), u.offset.unwrap_or(0.0)))
                    .map_err(|e| (at_i("utilities", i, "term"), detail(e))),
                _ => Err((
                    at_i("utilities", i, "name"),
                    "give exactly one of `indicator` or `term`".to_string(),
                )),
            };
            match built {
                Ok(util) if util.reads_activation() => diag.push(
                    at_i("utilities", i, "name"),
                    "utilities may not read activation flags",
                ),
                Ok(util) => {
                    if utilities.insert(u.name.clone(), util).is_some() {
                        diag.push(at_i("utilities", i, "name"), format!("`{}` defined twice", u.name));
                    }
                }
                Err((where_, msg)) => diag.push(where_, msg),
            }
        }
        if utilities.is_empty() {
            diag.plain("utilities: at least one utility is required");
        }

        let mut facts = Vec::new();
        if !file.facts.is_empty() {
            let nulls = Policies::nulls(m).map_err(|e| Error::Validation(vec![detail(e)]))?;
            let n = m.n_agents();
            let worlds = [
                propagate(m, &nulls, &Activation::all(n, Branch::Active))?,
                propagate(m, &nulls, &Activation::all(n, Branch::Inactive))?,
            ];
            for (i, f) in file.facts.iter().enumerate() {
                match Predicate::parse(m, &f.expr) {
                    Ok(p) if p.reads_activation() => {
                        diag.push(at_i("facts", i, "expr"), "facts may not read activation flags")
                    }
                    Ok(p) => {
                        let event = event_from(&f.name, p);
                        if worlds.iter().any(|w| w.probability(&event) <= 0.0) {
                            diag.push(
                                at_i("facts", i, "expr"),
                                "fact has zero probability on one activation branch under null policies",
                            );
                        }
                        facts.push(event);
                    }
                    Err(e) => diag.push(at_i("facts", i, "expr"), detail(e)),
                }
            }
        }

        let k = file.measures.conjunction_size.unwrap_or(DEFAULT_CONJUNCTION_SIZE);
        let softmax_tau = file.measures.softmax_tau.unwrap_or(DEFAULT_SOFTMAX_TAU);
        if !(softmax_tau > 0.0 && softmax_tau.is_finite()) {
            diag.push(at("measures", "softmax_tau"), "must be positive");
        }
        let mut named_measures = BTreeMap::new();
        for (i, nm) in file.measures.named.iter().enumerate() {
            if let Err(e) = PenaltyConfig::parse(&nm.measure) {
                diag.push(at_i("measures.named", i, "measure"), detail(e));
            }
            if measure_names().contains(&nm.name)
                || named_measures.insert(nm.name.clone(), nm.measure.clone()).is_some()
            {
                diag.push(at_i("measures.named", i, "name"), format!("`{}` is already a measure name", nm.name));
            }
        }

        let mut detection = DetectionConfig::default();
        let det = &file.detection;
        if det.slice.is_empty() {
            detection.slice = unboxed_variables(m);
        } else {
            for (i, s) in det.slice.iter().enumerate() {
                match slice_term(m, s) {
                    Ok(term) => detection.slice.push(Variable::from_term(&format!("slice{i}"), s, term)),
                    Err(e) => diag.push(at("detection", "slice"), e),
                }
            }
        }
        if let Some(g) = &det.grid {
            detection.grid = g.clone();
        }
        detection.threshold = det.threshold.unwrap_or(detection.threshold);
        detection.samples = det.samples.unwrap_or(detection.samples);
        detection.seed = det.seed.unwrap_or(detection.seed);
        if let Err(e) = detection.validate() {
            diag.push(at("detection", "grid"), detail(e));
        }

        let mut channels = Vec::new();
        for (i, c) in file.conditioning.channels.iter().enumerate() {
            let Some(agent) = m.agent_index(&c.agent) else {
                diag.push(at_i("conditioning.channels", i, "agent"), format!("unknown agent `{}`", c.agent));
                continue;
            };
            match Term::parse(m, &c.term) {
                Ok(term) => {
                    let ch = MessageChannel {
                        name: c.name.clone(),
                        agent,
                        term,
                        alphabet: c.alphabet.clone(),
                    };
                    match ch.validate(m) {
                        Ok(()) => channels.push(ch),
                        Err(e) => diag.push(at_i("conditioning.channels", i, "alphabet"), detail(e)),
                    }
                }
                Err(e) => diag.push(at_i("conditioning.channels", i, "term"), detail(e)),
            }
        }
        let mut announcements = Vec::new();
        for (i, a) in file.conditioning.announcements.iter().enumerate() {
            match Predicate::parse(m, &a.expr) {
                Ok(p) => {
                    let ev = AnnouncementEvent {
                        event: event_from(&a.name, p),
                        min_probability: a.min_probability.unwrap_or(DEFAULT_MIN_ANNOUNCEMENT_PROBABILITY),
                        penalty_floor: a.penalty_floor,
                    };
                    match ev.validate(m) {
                        Ok(()) => announcements.push(ev),
                        Err(e) => diag.push(at_i("conditioning.announcements", i, "expr"), detail(e)),
                    }
                }
                Err(e) => diag.push(at_i("conditioning.announcements", i, "expr"), detail(e)),
            }
        }

        let p = &file.planner;
        let agent = match &p.agent {
            None => 0,
            Some(name) => m.agent_index(name).unwrap_or_else(|| {
                diag.push(at("planner", "agent"), format!("unknown agent `{name}`"));
                0
            }),
        };
        let utility = p
            .utility
            .clone()
            .or_else(|| file.utilities.first().map(|u| u.name.clone()))
            .unwrap_or_default();
        if !utility.is_empty() && !utilities.contains_key(&utility) {
            diag.push(at("planner", "utility"), format!("unknown utility `{utility}`"));
        }
        let mu = p.mu.unwrap_or(1.0);
        if !(mu >= 0.0 && mu.is_finite()) {
            diag.push(at("planner", "mu"), "must be finite and non-negative");
        }
        let mu_grid = match &p.mu_grid {
            None => None,
            Some(g) => match parse_mu_grid(g) {
                Ok(grid) => Some(grid),
                Err(e) => {
                    diag.push(at("planner", "mu_grid"), detail(e));
                    None
                }
            },
        };
        let defaults = SearchConfig::default();
        let planner = PlannerSettings {
            agent,
            utility,
            measure: p.measure.clone().unwrap_or_else(|| "coarse:linf".into()),
            condition: p.condition.clone().unwrap_or_else(|| "none".into()),
            mu,
            mu_grid,
            search: SearchConfig {
                budget: p.budget.map_or(defaults.budget, u128::from),
                seed: p.seed.unwrap_or(defaults.seed),
                restarts: p.restarts.unwrap_or(defaults.restarts),
                mutations: p.mutations.unwrap_or(defaults.mutations),
            },
        };

        let mut policies = Vec::new();
        for (i, entry) in file.policies.iter().enumerate() {
            let agent = match &entry.agent {
                None => planner.agent,
                Some(name) => match m.agent_index(name) {
                    Some(a) => a,
                    None => {
                        diag.push(at_i("policies", i, "agent"), format!("unknown agent `{name}`"));
                        continue;
                    }
                },
            };
            if entry.name == "null" || policies.iter().any(|(n, _)| n == &entry.name) {
                diag.push(at_i("policies", i, "name"), format!("`{}` is already a policy name", entry.name));
            }
            match build_policy(m, agent, entry) {
                Ok(pol) => policies.push((entry.name.clone(), pol)),
                Err((key, msg)) => diag.push(at_i("policies", i, key), msg),
            }
        }

        let multiagent = match &file.multiagent {
            None => None,
            Some(ma) => {
                let mut by_agent: Vec<Option<(String, EventPredicate)>> = vec![None; m.n_agents()];
                for (i, e) in ma.agents.iter().enumerate() {
                    let Some(a) = m.agent_index(&e.agent) else {
                        diag.push(at_i("multiagent.agents", i, "agent"), format!("unknown agent `{}`", e.agent));
                        continue;
                    };
                    if !utilities.contains_key(&e.utility) {
                        diag.push(at_i("multiagent.agents", i, "utility"), format!("unknown utility `{}`", e.utility));
                    }
                    match Predicate::parse(m, &e.assumption) {
                        Ok(p) => {
                            if by_agent[a].replace((e.utility.clone(), event_from(&e.assumption, p))).is_some() {
                                diag.push(at_i("multiagent.agents", i, "agent"), "agent listed twice");
                            }
                        }
                        Err(e) => diag.push(at_i("multiagent.agents", i, "assumption"), detail(e)),
                    }
                }
                let success = Predicate::parse(m, &ma.success)
                    .map_err(|e| diag.push(at("multiagent", "success"), detail(e)))
                    .ok();
                let indifference = ma.indifference.unwrap_or(DEFAULT_INDIFFERENCE);
                if !(0.0..=1.0).contains(&indifference) {
                    diag.push(at("multiagent", "indifference"), "must lie in [0, 1]");
                }
                if by_agent.iter().any(Option::is_none) {
                    diag.push(at("multiagent", "agents"), "every agent needs a conditional objective");
                }
                match success {
                    Some(s) if by_agent.iter().all(Option::is_some) => Some(MultiagentSettings {
                        success: event_from("success", s),
                        agents: by_agent.into_iter().flatten().collect(),
                        indifference,
                    }),
                    _ => None,
                }
            }
        };

        diag.check()?;
        let variables = VariableSpec::new(variables).map_err(|e| Error::Validation(vec![detail(e)]))?;
        let fset = FactSet::new(facts, k).map_err(|e| Error::Validation(vec![detail(e)]))?;
        let uset = UtilitySet::new(utilities.values().cloned().collect())
            .map_err(|e| Error::Validation(vec![detail(e)]))?;
        let context = Arc::new(MeasureContext {
            variables,
            utilities: uset,
            facts: fset,
            detection,
        });
        let scenario = Scenario {
            file,
            model,
            context,
            utilities,
            named_measures,
            softmax_tau,
            channels,
            announcements,
            planner,
            policies,
            multiagent,
        };
        // Planner defaults must resolve too.
        let mut diag = Diagnostics::new(src);
        if let Err(e) = scenario.measure(&scenario.planner.measure) {
            diag.push(at("planner", "measure"), detail(e));
        }
        if let Err(e) = scenario.conditioning(&scenario.planner.condition) {
            diag.push(at("planner", "condition"), detail(e));
        }
        diag.check()?;
        Ok(scenario)
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn description(&self) -> &str {
        &self.file.description
    }

    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }

    pub fn model(&self) -> &Arc<WorldModel> {
        &self.model
    }

    pub fn context(&self) -> &Arc<MeasureContext> {
        &self.context
    }

    pub fn planner(&self) -> &PlannerSettings {
        &self.planner
    }

    pub fn multiagent(&self) -> Option<&MultiagentSettings> {
        self.multiagent.as_ref()
    }

    pub fn channels(&self) -> &[MessageChannel] {
        &self.channels
    }

    pub fn announcements(&self) -> &[AnnouncementEvent] {
        &self.announcements
    }

    /// Overrides the Monte Carlo sample count of the detectability measure.
    pub fn with_samples(mut self, samples: usize) -> Result<Self> {
        let mut ctx = (*self.context).clone();
        ctx.detection.samples = samples;
        ctx.detection.validate()?;
        self.context = Arc::new(ctx);
        Ok(self)
    }

    /// Sets both the planner seed and the detectability seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let mut ctx = (*self.context).clone();
        ctx.detection.seed = seed;
        self.context = Arc::new(ctx);
        self.planner.search.seed = seed;
        self
    }

    pub fn utility(&self, name: &str) -> Result<Utility> {
        self.utilities.get(name).cloned().ok_or_else(|| Error::UnknownName {
            kind: "utility",
            name: name.to_string(),
            valid: self.utilities.keys().cloned().collect(),
        })
    }

    /// Every measure name usable in this scenario, built-ins first.
    pub fn measure_names(&self) -> Vec<String> {
        let mut names = measure_names();
        names.extend(self.named_measures.keys().cloned());
        names
    }

    /// Resolves a built-in or scenario-defined measure name.
    pub fn measure(&self, name: &str) -> Result<PenaltyConfig> {
        let target = self.named_measures.get(name).map(String::as_str).unwrap_or(name);
        let mut cfg = PenaltyConfig::parse(target).map_err(|e| match e {
            Error::UnknownName { kind, name, .. } => Error::UnknownName {
                kind,
                name,
                valid: self.measure_names(),
            },
            other => other,
        })?;
        if target == "coarse:softmax" {
            cfg.kind = MeasureKind::Coarse(Norm::Softmax(self.softmax_tau));
        }
        cfg.name = name.to_string();
        Ok(cfg)
    }

    fn condition_names(&self) -> Vec<String> {
        let mut names = vec!["none".to_string()];
        names.extend(self.channels.iter().map(|c| format!("output:{}", c.name)));
        names.extend(self.announcements.iter().map(|a| format!("announce:{}", a.name())));
        names
    }

    /// `none`, `output` (the first channel), `output:<channel>` or
    /// `announce:<event>`.
    pub fn conditioning(&self, spec: &str) -> Result<Conditioning> {
        let unknown = || Error::UnknownName {
            kind: "condition",
            name: spec.to_string(),
            valid: self.condition_names(),
        };
        let found = match spec.split_once(':') {
            None if spec == "none" => Some(Conditioning::None),
            None if spec == "output" => self.channels.first().cloned().map(Conditioning::Output),
            Some(("output", ch)) => self
                .channels
                .iter()
                .find(|c| c.name == ch)
                .cloned()
                .map(Conditioning::Output),
            Some(("announce", a)) => self
                .announcements
                .iter()
                .find(|e| e.name() == a)
                .cloned()
                .map(Conditioning::Announce),
            _ => None,
        };
        found.ok_or_else(unknown)
    }

    pub fn policy_names(&self) -> Vec<String> {
        std::iter::once("null".to_string())
            .chain(self.policies.iter().map(|(n, _)| n.clone()))
            .collect()
    }

    /// A named policy; `null` is the planner agent's null policy.
    pub fn policy(&self, name: &str) -> Result<Policy> {
        if name == "null" {
            return Policy::null(&self.model, self.planner.agent);
        }
        self.policies
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.clone())
            .ok_or_else(|| Error::UnknownName {
                kind: "policy",
                name: name.to_string(),
                valid: self.policy_names(),
            })
    }

    /// The planner agent's problem under the scenario's utility.
    pub fn problem(&self, measure: &str, condition: &str, mu: f64) -> Result<Problem> {
        let objective = Objective {
            utility: self.utility(&self.planner.utility)?,
            mu,
            measure: self.measure(measure)?,
        };
        Ok(
            Problem::new(self.model.clone(), self.planner.agent, objective, self.context.clone())?
                .with_conditioning(self.conditioning(condition)?),
        )
    }

    /// One conditional objective per agent, in agent order.
    pub fn conditional_objectives(&self, measure: &str, mu: f64) -> Result<Vec<ConditionalObjective>> {
        let ma = self.multiagent.as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!("scenario `{}` has no [multiagent] section", self.name()))
        })?;
        let measure = self.measure(measure)?;
        ma.agents
            .iter()
            .map(|(utility, assumption)| {
                Ok(ConditionalObjective {
                    objective: Objective {
                        utility: self.utility(utility)?,
                        mu,
                        measure: measure.clone(),
                    },
                    assumption: assumption.clone(),
                    indifference: ma.indifference,
                })
            })
            .collect()
    }
}

/// One variable per unboxed component, read at the final step.
fn unboxed_variables(m: &WorldModel) -> Vec<Variable> {
    m.components()
        .iter()
        .filter(|c| !c.boxed)
        .map(|c| {
            let key = format!("state:{}@end", c.name);
            let term = Term::parse(m, &key).expect("component term");
            Variable::from_term(&c.name, &key, term)
        })
        .collect()
}

/// A term that world variables may use: no activation flags, nothing boxed.
fn slice_term(m: &WorldModel, text: &str) -> std::result::Result<Term, String> {
    let term = Term::parse(m, text).map_err(detail)?;
    match &term {
        Term::Active { .. } => Err(format!("`{text}` reads an activation flag")),
        Term::State { component, .. } if m.components()[*component].boxed => {
            Err(format!("`{text}` reads boxed component `{}`", m.components()[*component].name))
        }
        _ => Ok(term),
    }
}

fn first_duplicate<'a>(names: &[&'a str]) -> Option<&'a str> {
    let mut seen = BTreeSet::new();
    names.iter().copied().find(|n| !seen.insert(*n))
}

fn build_policy(
    m: &WorldModel,
    agent: usize,
    entry: &file::PolicyEntry,
) -> std::result::Result<Policy, (&'static str, String)> {
    let action = |key: &'static str, name: &str| {
        m.action_index(agent, name).ok_or_else(|| {
            (
                key,
                format!("agent `{}` has no action `{name}`", m.agents()[agent].name),
            )
        })
    };
    match (&entry.actions, &entry.table) {
        (Some(actions), None) => {
            let idx = actions
                .iter()
                .map(|a| action("actions", a))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Policy::open_loop(m, agent, &idx).map_err(|e| ("actions", detail(e)))
        }
        (None, Some(rows)) => {
            let n_obs = m.observation_alphabet(agent).len();
            if rows.len() != m.horizon() || rows.iter().any(|r| r.len() != n_obs) {
                return Err((
                    "table",
                    format!("expected {} rows of {n_obs} actions", m.horizon()),
                ));
            }
            let table = rows
                .iter()
                .flatten()
                .map(|a| action("table", a).map(|i| i as u32))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(Policy::from_table(agent, n_obs, table))
        }
        _ => Err(("name", "give exactly one of `actions` or `table`".into())),
    }
}

fn build_model(file: &ScenarioFile, diag: &mut Diagnostics) -> Result<WorldModel> {
    let ms = &file.model;
    let horizon = ms.horizon.unwrap_or_else(|| {
        diag.push(at("model", "horizon"), "missing required key `horizon`");
        0
    });
    let mut b = ModelBuilder::new(horizon);
    for c in &ms.components {
        if c.boxed {
            b.boxed_component(&c.name);
        } else {
            b.component(&c.name);
        }
    }
    let mut state_index = BTreeMap::new();
    for (i, s) in ms.states.iter().enumerate() {
        if s.values.len() != ms.components.len() {
            diag.push(
                at_i("model.states", i, "values"),
                format!("expected {} values, got {}", ms.components.len(), s.values.len()),
            );
        }
        state_index.entry(s.name.as_str()).or_insert(i);
        b.state(&s.name, &s.values);
    }
    match state_index.get(ms.initial.as_str()) {
        Some(&s) => {
            b.initial(s);
        }
        None => diag.push(at("model", "initial"), format!("unknown state `{}`", ms.initial)),
    }
    let comp = |name: &str| ms.components.iter().position(|c| c.name == name);
    let agent_pos = |name: &str| ms.agents.iter().position(|a| a.name == name);
    for (i, a) in ms.agents.iter().enumerate() {
        let act = |name: &str| a.actions.iter().position(|x| x == name);
        let null_action = act(&a.null_action);
        if null_action.is_none() {
            diag.push(
                at_i("model.agents", i, "null_action"),
                format!("`{}` is not one of the agent's actions", a.null_action),
            );
        }
        let mut resolve = |key: &'static str, names: &[String]| -> Vec<usize> {
            names
                .iter()
                .filter_map(|n| {
                    let found = act(n);
                    if found.is_none() {
                        diag.push(at_i("model.agents", i, key), format!("unknown action `{n}`"));
                    }
                    found
                })
                .collect()
        };
        let baseline = match &a.baseline {
            file::BaselineEntry::Null => Baseline::Null,
            file::BaselineEntry::Random { actions, weights } => {
                let idx = resolve("baseline", actions);
                let weights = weights
                    .clone()
                    .unwrap_or_else(|| vec![1.0 / actions.len().max(1) as f64; actions.len()]);
                if weights.len() != actions.len() {
                    diag.push(
                        at_i("model.agents", i, "baseline"),
                        "baseline weights and actions differ in length",
                    );
                }
                Baseline::Random(idx.into_iter().zip(weights).collect())
            }
            file::BaselineEntry::Scripted { actions } => Baseline::Scripted(resolve("baseline", actions)),
        };
        let mut observe = ObservationSpec::none();
        for c in &a.observe.components {
            match comp(c) {
                Some(ci) => observe.components.push(ci),
                None => diag.push(at_i("model.agents", i, "observe"), format!("unknown component `{c}`")),
            }
        }
        for other in &a.observe.activations {
            match agent_pos(other) {
                Some(ai) => observe.activations.push(ai),
                None => diag.push(at_i("model.agents", i, "observe"), format!("unknown agent `{other}`")),
            }
        }
        b.push_agent(Agent {
            name: a.name.clone(),
            actions: a.actions.clone(),
            null_action,
            epsilon: a.epsilon.unwrap_or(DEFAULT_EPSILON),
            baseline,
            observe,
        });
    }
    for (i, t) in ms.transitions.iter().enumerate() {
        let from = state_index.get(t.from.as_str()).copied();
        if from.is_none() {
            diag.push(at_i("model.transitions", i, "from"), format!("unknown state `{}`", t.from));
        }
        if t.actions.len() != ms.agents.len() {
            diag.push(
                at_i("model.transitions", i, "actions"),
                format!("expected {} actions (one per agent), got {}", ms.agents.len(), t.actions.len()),
            );
            continue;
        }
        let mut actions = Vec::with_capacity(t.actions.len());
        for (a, name) in ms.agents.iter().zip(&t.actions) {
            if name == "*" {
                actions.push(None);
            } else if let Some(x) = a.actions.iter().position(|x| x == name) {
                actions.push(Some(x));
            } else {
                diag.push(
                    at_i("model.transitions", i, "actions"),
                    format!("agent `{}` has no action `{name}`", a.name),
                );
            }
        }
        let mut to = Vec::with_capacity(t.to.len());
        for o in &t.to {
            match state_index.get(o.state.as_str()) {
                Some(&s) => to.push((s, o.p)),
                None => diag.push(at_i("model.transitions", i, "to"), format!("unknown state `{}`", o.state)),
            }
        }
        if let (Some(from), true) = (from, actions.len() == ms.agents.len()) {
            b.transition(from, &actions, &to);
        }
    }
    diag.check()?;
    let model = b.build();
    model.validate().map_err(|issues| {
        Error::Validation(issues.iter().map(|i| format!("model: {i}")).collect())
    })?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
name = "tiny"

[model]
horizon = 1
initial = "off"
components = [{ name = "lamp" }]

[[model.states]]
name = "off"
values = [0]

[[model.states]]
name = "on"
values = [1]

[[model.agents]]
name = "ai"
actions = ["wait", "flip"]
null_action = "wait"

[[model.transitions]]
from = "off"
actions = ["flip"]
to = [{ state = "on", p = 1.0 }]

[[utilities]]
name = "lit"
indicator = "state:lamp@end == 1"
"#;

    #[test]
    fn loads_and_round_trips() {
        let s = Scenario::from_toml(TINY).unwrap();
        assert_eq!(s.model().states().len(), 2);
        assert_eq!(s.context().variables.names(), vec!["lamp".to_string()]);
        let again = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn missing_horizon_names_the_key() {
        let text = TINY.replace("horizon = 1\n", "");
        match Scenario::from_toml(&text) {
            Err(Error::Validation(msgs)) => {
                assert!(msgs[0].contains("model.horizon"), "{msgs:?}");
                assert!(msgs[0].starts_with("line 4:"), "{msgs:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_are_line_anchored() {
        let text = TINY.replace("actions = [\"flip\"]", "actions = [\"jump\"]");
        match Scenario::from_toml(&text) {
            Err(Error::Validation(msgs)) => {
                assert_eq!(msgs.len(), 1);
                assert!(msgs[0].starts_with("line 24: model.transitions[0].actions"), "{msgs:?}");
            }
            other => panic!("{other:?}"),
        }
        match Scenario::from_toml("name = \"x\"\n[model\n") {
            Err(Error::Parse(m)) => assert!(m.starts_with("line 2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(
            Scenario::load("no-such-scenario"),
            Err(Error::UnknownBuiltin { .. })
        ));
    }

    #[test]
    fn mu_grid_syntax() {
        let g = parse_mu_grid("1e-3:1e3:20").unwrap();
        assert_eq!(g.len(), 20);
        assert!(parse_mu_grid("1:2").is_err());
        assert!(parse_mu_grid("a:2:3").is_err());
    }

    #[test]
    fn measures_and_conditions_resolve() {
        let s = Scenario::from_toml(TINY).unwrap();
        assert_eq!(s.measure("coarse:softmax").unwrap().kind, MeasureKind::Coarse(Norm::Softmax(DEFAULT_SOFTMAX_TAU)));
        assert!(matches!(s.measure("bogus"), Err(Error::UnknownName { .. })));
        assert!(matches!(s.conditioning("none"), Ok(Conditioning::None)));
        assert!(matches!(s.conditioning("output"), Err(Error::UnknownName { .. })));
        assert!(s.policy("null").is_ok());
    }
}
