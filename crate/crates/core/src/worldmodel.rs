//! Finite stochastic world models with per-agent activation events.
//!
//! A model is a set of named states (each a vector of integer component
//! values), one or more agents with finite action sets, and a transition
//! kernel over (state, joint action). Each agent is switched on by its own
//! activation event, which fails with probability `epsilon`; when it fails
//! the agent's baseline process supplies its actions instead of its policy.
//!
//! Unlisted (state, joint action) pairs stay in place with probability 1.
//! Listed rules are matched in order; the first rule whose action pattern
//! matches wins, and `None` in a pattern matches any action of that agent.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::policy::Policy;

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_TRAJECTORY_CAP: usize = 10_000_000;
pub const ROW_TOLERANCE: f64 = 1e-12;

const UNSET: u32 = u32::MAX;
/// Upper bound on the dense (state, joint action) table.
const MAX_TABLE: usize = 200_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub name: String,
    /// Inside the box: hidden from coarse-graining and detection slices.
    pub boxed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub name: String,
    pub values: Vec<i64>,
}

/// What an agent does on the branch where its activation event fails.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    /// The null action at every step.
    Null,
    /// An independent draw per step from `(action, weight)` pairs.
    Random(Vec<(usize, f64)>),
    /// A fixed action sequence, one per step.
    Scripted(Vec<usize>),
}

/// Which parts of the world an agent's policy can condition on. The default
/// (nothing) is the boxed agent: one observation symbol per timestep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSpec {
    pub components: Vec<usize>,
    /// Other agents whose activation flag is directly visible.
    pub activations: Vec<usize>,
}

impl ObservationSpec {
    pub fn none() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub name: String,
    pub actions: Vec<String>,
    pub null_action: Option<usize>,
    pub epsilon: f64,
    pub baseline: Baseline,
    pub observe: ObservationSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRule {
    pub from: usize,
    pub actions: Vec<Option<usize>>,
    pub to: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelIssue {
    NonStochasticRow { state: String, actions: String, sum: f64 },
    NegativeProbability { state: String, actions: String, p: f64 },
    DegenerateActivation { agent: String, epsilon: f64 },
    MissingNullAction { agent: String },
    NonStochasticBaseline { agent: String, sum: f64 },
    ScriptLength { agent: String, expected: usize, found: usize },
    Empty(String),
    BadReference(String),
    DuplicateName { kind: &'static str, name: String },
    TooLarge(String),
}

impl fmt::Display for ModelIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelIssue::NonStochasticRow { state, actions, sum } => write!(
                f,
                "NonStochasticRow: transition from `{state}` under [{actions}] sums to {sum}"
            ),
            ModelIssue::NegativeProbability { state, actions, p } => write!(
                f,
                "NegativeProbability: transition from `{state}` under [{actions}] has p = {p}"
            ),
            ModelIssue::DegenerateActivation { agent, epsilon } => write!(
                f,
                "DegenerateActivation: agent `{agent}` has epsilon = {epsilon}; need 0 < epsilon < 1"
            ),
            ModelIssue::MissingNullAction { agent } => {
                write!(f, "MissingNullAction: agent `{agent}` has no valid null action")
            }
            ModelIssue::NonStochasticBaseline { agent, sum } => write!(
                f,
                "NonStochasticBaseline: random baseline of `{agent}` sums to {sum}"
            ),
            ModelIssue::ScriptLength {
                agent,
                expected,
                found,
            } => write!(
                f,
                "ScriptLength: scripted baseline of `{agent}` has {found} steps, horizon is {expected}"
            ),
            ModelIssue::Empty(what) => write!(f, "Empty: {what}"),
            ModelIssue::BadReference(what) => write!(f, "BadReference: {what}"),
            ModelIssue::DuplicateName { kind, name } => {
                write!(f, "DuplicateName: {kind} `{name}` defined twice")
            }
            ModelIssue::TooLarge(what) => write!(f, "TooLarge: {what}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ObsTable {
    alphabet: Vec<Vec<i64>>,
    combos: usize,
    index: Vec<u32>,
}

#[derive(Debug)]
pub(crate) struct Outcomes {
    pub next: Vec<u32>,
    pub prob: Vec<f64>,
    pub cum: Vec<f64>,
}

impl Outcomes {
    fn new(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(s, _)| s);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (s, p) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == s => last.1 += p,
                _ => merged.push((s, p)),
            }
        }
        merged.retain(|&(_, p)| p > 0.0);
        let mut acc = 0.0;
        let cum = merged
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc
            })
            .collect();
        Outcomes {
            next: merged.iter().map(|&(s, _)| s).collect(),
            prob: merged.iter().map(|&(_, p)| p).collect(),
            cum,
        }
    }

    /// Index of the outcome selected by `u` uniform in [0, 1).
    pub fn pick(&self, u: f64) -> usize {
        let total = *self.cum.last().expect("non-empty outcome row");
        let target = u * total;
        self.cum
            .partition_point(|&c| c <= target)
            .min(self.cum.len() - 1)
    }
}

#[derive(Debug)]
pub(crate) struct Kernel {
    pub strides: Vec<usize>,
    pub n_joint: usize,
    pub outcomes: Vec<Outcomes>,
    pub rows: Vec<u32>,
    pub baselines: Vec<BaselineProcess>,
}

impl Kernel {
    pub fn row(&self, state: usize, joint: usize) -> &Outcomes {
        &self.outcomes[self.rows[state * self.n_joint + joint] as usize]
    }
}

#[derive(Debug, Default)]
struct KernelCell(OnceLock<std::result::Result<Arc<Kernel>, Vec<ModelIssue>>>);

impl Clone for KernelCell {
    fn clone(&self) -> Self {
        let cell = OnceLock::new();
        if let Some(k) = self.0.get() {
            let _ = cell.set(k.clone());
        }
        KernelCell(cell)
    }
}

impl PartialEq for KernelCell {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// An immutable finite world model. Build one with [`ModelBuilder`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    components: Vec<Component>,
    states: Vec<State>,
    agents: Vec<Agent>,
    rules: Vec<TransitionRule>,
    initial: usize,
    horizon: usize,
    observations: Vec<ObsTable>,
    kernel: KernelCell,
}

impl WorldModel {
    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn rules(&self) -> &[TransitionRule] {
        &self.rules
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn value(&self, state: usize, component: usize) -> i64 {
        self.states[state].values[component]
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    pub fn agent_index(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.name == name)
    }

    pub fn action_index(&self, agent: usize, name: &str) -> Option<usize> {
        self.agents[agent].actions.iter().position(|a| a == name)
    }

    /// Observation symbols of `agent`, sorted; policies index into this.
    pub fn observation_alphabet(&self, agent: usize) -> &[Vec<i64>] {
        &self.observations[agent].alphabet
    }

    pub fn observation(&self, agent: usize, state: usize, active: &[bool]) -> usize {
        let table = &self.observations[agent];
        let mut combo = 0;
        for (bit, &other) in self.agents[agent].observe.activations.iter().enumerate() {
            if active.get(other).copied().unwrap_or(false) {
                combo |= 1 << bit;
            }
        }
        table.index[state * table.combos + combo] as usize
    }

    pub fn joint_label(&self, actions: &[Option<usize>]) -> String {
        actions
            .iter()
            .zip(&self.agents)
            .map(|(a, agent)| match a {
                Some(i) => agent.actions.get(*i).cloned().unwrap_or_else(|| format!("#{i}")),
                None => "*".to_string(),
            })
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Every violated invariant; empty iff the model is valid.
    pub fn issues(&self) -> Vec<ModelIssue> {
        let mut issues = Vec::new();
        if self.horizon == 0 {
            issues.push(ModelIssue::Empty("horizon must be at least 1".into()));
        }
        if self.states.is_empty() {
            issues.push(ModelIssue::Empty("no states".into()));
        }
        if self.agents.is_empty() {
            issues.push(ModelIssue::Empty("no agents".into()));
        }
        if !self.states.is_empty() && self.initial >= self.states.len() {
            issues.push(ModelIssue::BadReference(format!(
                "initial state #{} does not exist",
                self.initial
            )));
        }
        duplicates("component", self.components.iter().map(|c| &c.name), &mut issues);
        duplicates("state", self.states.iter().map(|s| &s.name), &mut issues);
        duplicates("agent", self.agents.iter().map(|a| &a.name), &mut issues);
        for s in &self.states {
            if s.values.len() != self.components.len() {
                issues.push(ModelIssue::BadReference(format!(
                    "state `{}` has {} values for {} components",
                    s.name,
                    s.values.len(),
                    self.components.len()
                )));
            }
        }
        for agent in &self.agents {
            self.agent_issues(agent, &mut issues);
        }
        for rule in &self.rules {
            self.rule_issues(rule, &mut issues);
        }
        let n_joint = self
            .agents
            .iter()
            .fold(1usize, |acc, a| acc.saturating_mul(a.actions.len().max(1)));
        if self.states.len().saturating_mul(n_joint) > MAX_TABLE {
            issues.push(ModelIssue::TooLarge(format!(
                "{} states x {} joint actions",
                self.states.len(),
                n_joint
            )));
        }
        issues
    }

    fn agent_issues(&self, agent: &Agent, issues: &mut Vec<ModelIssue>) {
        let name = &agent.name;
        if agent.actions.is_empty() {
            issues.push(ModelIssue::Empty(format!("agent `{name}` has no actions")));
        }
        duplicates("action", agent.actions.iter(), issues);
        match agent.null_action {
            Some(a) if a < agent.actions.len() => {}
            _ => issues.push(ModelIssue::MissingNullAction {
                agent: name.clone(),
            }),
        }
        if !(agent.epsilon > 0.0 && agent.epsilon < 1.0) {
            issues.push(ModelIssue::DegenerateActivation {
                agent: name.clone(),
                epsilon: agent.epsilon,
            });
        }
        match &agent.baseline {
            Baseline::Null => {}
            Baseline::Random(weights) => {
                let mut sum = 0.0;
                for &(a, w) in weights {
                    if a >= agent.actions.len() {
                        issues.push(ModelIssue::BadReference(format!(
                            "baseline of `{name}` names action #{a}"
                        )));
                    }
                    if w < 0.0 || !w.is_finite() {
                        issues.push(ModelIssue::NonStochasticBaseline {
                            agent: name.clone(),
                            sum: w,
                        });
                    }
                    sum += w;
                }
                if (sum - 1.0).abs() > ROW_TOLERANCE {
                    issues.push(ModelIssue::NonStochasticBaseline {
                        agent: name.clone(),
                        sum,
                    });
                }
            }
            Baseline::Scripted(seq) => {
                if seq.len() != self.horizon {
                    issues.push(ModelIssue::ScriptLength {
                        agent: name.clone(),
                        expected: self.horizon,
                        found: seq.len(),
                    });
                }
                if seq.iter().any(|&a| a >= agent.actions.len()) {
                    issues.push(ModelIssue::BadReference(format!(
                        "scripted baseline of `{name}` names an unknown action"
                    )));
                }
            }
        }
        for &c in &agent.observe.components {
            if c >= self.components.len() {
                issues.push(ModelIssue::BadReference(format!(
                    "agent `{name}` observes component #{c}"
                )));
            }
        }
        for &o in &agent.observe.activations {
            if o >= self.agents.len() {
                issues.push(ModelIssue::BadReference(format!(
                    "agent `{name}` observes activation of agent #{o}"
                )));
            }
        }
    }

    fn rule_issues(&self, rule: &TransitionRule, issues: &mut Vec<ModelIssue>) {
        let from = match self.states.get(rule.from) {
            Some(s) => s.name.clone(),
            None => {
                issues.push(ModelIssue::BadReference(format!(
                    "transition from state #{}",
                    rule.from
                )));
                return;
            }
        };
        if rule.actions.len() != self.agents.len() {
            issues.push(ModelIssue::BadReference(format!(
                "transition from `{from}` lists {} actions for {} agents",
                rule.actions.len(),
                self.agents.len()
            )));
            return;
        }
        for (a, agent) in rule.actions.iter().zip(&self.agents) {
            if let Some(a) = a {
                if *a >= agent.actions.len() {
                    issues.push(ModelIssue::BadReference(format!(
                        "transition from `{from}` uses action #{a} of `{}`",
                        agent.name
                    )));
                    return;
                }
            }
        }
        let label = self.joint_label(&rule.actions);
        let mut sum = 0.0;
        for &(to, p) in &rule.to {
            if to >= self.states.len() {
                issues.push(ModelIssue::BadReference(format!(
                    "transition from `{from}` leads to state #{to}"
                )));
            }
            if p < 0.0 || !p.is_finite() {
                issues.push(ModelIssue::NegativeProbability {
                    state: from.clone(),
                    actions: label.clone(),
                    p,
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            issues.push(ModelIssue::NonStochasticRow {
                state: from,
                actions: label,
                sum,
            });
        }
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<ModelIssue>> {
        self.kernel_or_issues().map(|_| ())
    }

    fn kernel_or_issues(&self) -> std::result::Result<&Arc<Kernel>, Vec<ModelIssue>> {
        self.kernel
            .0
            .get_or_init(|| {
                let issues = self.issues();
                if issues.is_empty() {
                    Ok(Arc::new(self.compile()))
                } else {
                    Err(issues)
                }
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    pub(crate) fn kernel(&self) -> Result<&Arc<Kernel>> {
        self.kernel_or_issues().map_err(Error::InvalidModel)
    }

    fn compile(&self) -> Kernel {
        let radix: Vec<usize> = self.agents.iter().map(|a| a.actions.len()).collect();
        let mut strides = vec![1usize; radix.len()];
        for i in (0..radix.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * radix[i + 1];
        }
        let n_joint: usize = radix.iter().product();
        let n_states = self.states.len();
        let mut outcomes: Vec<Outcomes> = (0..n_states)
            .map(|s| Outcomes::new(vec![(s as u32, 1.0)]))
            .collect();
        let mut rows = vec![UNSET; n_states * n_joint];
        for rule in &self.rules {
            let id = outcomes.len() as u32;
            outcomes.push(Outcomes::new(
                rule.to.iter().map(|&(s, p)| (s as u32, p)).collect(),
            ));
            let base = rule.from * n_joint;
            let mut joints = vec![0usize];
            for (i, a) in rule.actions.iter().enumerate() {
                let choices: Vec<usize> = match a {
                    Some(a) => vec![*a],
                    None => (0..radix[i]).collect(),
                };
                let stride = strides[i];
                joints = joints
                    .iter()
                    .flat_map(|&j| choices.iter().map(move |&c| j + c * stride))
                    .collect();
            }
            for j in joints {
                if rows[base + j] == UNSET {
                    rows[base + j] = id;
                }
            }
        }
        for s in 0..n_states {
            for slot in &mut rows[s * n_joint..(s + 1) * n_joint] {
                if *slot == UNSET {
                    *slot = s as u32;
                }
            }
        }
        let baselines = (0..self.agents.len())
            .map(|i| self.baseline_process(i))
            .collect();
        Kernel {
            strides,
            n_joint,
            outcomes,
            rows,
            baselines,
        }
    }

    fn baseline_process(&self, agent: usize) -> BaselineProcess {
        let a = &self.agents[agent];
        let steps = (0..self.horizon)
            .map(|t| match &a.baseline {
                Baseline::Null => vec![(a.null_action.unwrap_or(0), 1.0)],
                Baseline::Random(weights) => {
                    let mut w: Vec<(usize, f64)> =
                        weights.iter().copied().filter(|&(_, w)| w > 0.0).collect();
                    w.sort_by_key(|&(a, _)| a);
                    w
                }
                Baseline::Scripted(seq) => vec![(seq[t], 1.0)],
            })
            .collect();
        BaselineProcess { steps }
    }
}

fn duplicates<'a>(
    kind: &'static str,
    names: impl Iterator<Item = &'a String>,
    issues: &mut Vec<ModelIssue>,
) {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            issues.push(ModelIssue::DuplicateName {
                kind,
                name: n.clone(),
            });
        }
    }
}

fn observation_table(
    spec: &ObservationSpec,
    states: &[State],
    n_components: usize,
) -> ObsTable {
    let combos = 1usize << spec.activations.len().min(16);
    let symbol = |s: &State, combo: usize| -> Vec<i64> {
        let mut v: Vec<i64> = spec
            .components
            .iter()
            .filter(|&&c| c < n_components)
            .map(|&c| s.values.get(c).copied().unwrap_or(0))
            .collect();
        v.extend((0..spec.activations.len()).map(|bit| ((combo >> bit) & 1) as i64));
        v
    };
    let mut alphabet: BTreeSet<Vec<i64>> = BTreeSet::new();
    for s in states {
        for combo in 0..combos {
            alphabet.insert(symbol(s, combo));
        }
    }
    if alphabet.is_empty() {
        alphabet.insert(Vec::new());
    }
    let alphabet: Vec<Vec<i64>> = alphabet.into_iter().collect();
    let mut index = Vec::with_capacity(states.len() * combos);
    for s in states {
        for combo in 0..combos {
            let sym = symbol(s, combo);
            index.push(alphabet.binary_search(&sym).expect("symbol in alphabet") as u32);
        }
    }
    ObsTable {
        alphabet,
        combos,
        index,
    }
}

/// Programmatic construction of a [`WorldModel`]. `build` never validates;
/// call [`validate_model`] (or any operation that needs the kernel) for that.
#[derive(Debug, Clone, Default)]
pub struct ModelBuilder {
    components: Vec<Component>,
    states: Vec<State>,
    agents: Vec<Agent>,
    rules: Vec<TransitionRule>,
    initial: usize,
    horizon: usize,
}

impl ModelBuilder {
    pub fn new(horizon: usize) -> Self {
        ModelBuilder {
            horizon,
            ..Default::default()
        }
    }

    pub fn component(&mut self, name: &str) -> usize {
        self.components.push(Component {
            name: name.to_string(),
            boxed: false,
        });
        self.components.len() - 1
    }

    pub fn boxed_component(&mut self, name: &str) -> usize {
        self.components.push(Component {
            name: name.to_string(),
            boxed: true,
        });
        self.components.len() - 1
    }

    pub fn state(&mut self, name: &str, values: &[i64]) -> usize {
        self.states.push(State {
            name: name.to_string(),
            values: values.to_vec(),
        });
        self.states.len() - 1
    }

    /// Adds an agent with the default epsilon, a null baseline, and no
    /// observations. If `null_action` is not among `actions` the model will
    /// fail validation with `MissingNullAction`.
    pub fn agent(&mut self, name: &str, actions: &[&str], null_action: &str) -> usize {
        let null = actions.iter().position(|a| *a == null_action);
        self.agents.push(Agent {
            name: name.to_string(),
            actions: actions.iter().map(|a| a.to_string()).collect(),
            null_action: null,
            epsilon: DEFAULT_EPSILON,
            baseline: Baseline::Null,
            observe: ObservationSpec::none(),
        });
        self.agents.len() - 1
    }

    pub fn push_agent(&mut self, agent: Agent) -> usize {
        self.agents.push(agent);
        self.agents.len() - 1
    }

    pub fn epsilon(&mut self, agent: usize, epsilon: f64) -> &mut Self {
        self.agents[agent].epsilon = epsilon;
        self
    }

    pub fn baseline(&mut self, agent: usize, baseline: Baseline) -> &mut Self {
        self.agents[agent].baseline = baseline;
        self
    }

    pub fn observe(&mut self, agent: usize, spec: ObservationSpec) -> &mut Self {
        self.agents[agent].observe = spec;
        self
    }

    pub fn transition(
        &mut self,
        from: usize,
        actions: &[Option<usize>],
        to: &[(usize, f64)],
    ) -> &mut Self {
        self.rules.push(TransitionRule {
            from,
            actions: actions.to_vec(),
            to: to.to_vec(),
        });
        self
    }

    pub fn initial(&mut self, state: usize) -> &mut Self {
        self.initial = state;
        self
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn build(self) -> WorldModel {
        let observations = self
            .agents
            .iter()
            .map(|a| observation_table(&a.observe, &self.states, self.components.len()))
            .collect();
        WorldModel {
            components: self.components,
            states: self.states,
            agents: self.agents,
            rules: self.rules,
            initial: self.initial,
            horizon: self.horizon,
            observations,
            kernel: KernelCell::default(),
        }
    }
}

pub fn validate_model(model: &WorldModel) -> std::result::Result<(), Vec<ModelIssue>> {
    model.validate()
}

/// Activation outcome of one agent in an enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Condition on the activation event (X).
    Active,
    /// Condition on its failure (not X).
    Inactive,
    /// Leave it random: active with probability 1 - epsilon.
    Either,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Activation(Vec<Branch>);

impl Activation {
    pub fn all(n_agents: usize, branch: Branch) -> Self {
        Activation(vec![branch; n_agents])
    }

    /// `agent` fixed to `branch`, every other agent left random.
    pub fn only(n_agents: usize, agent: usize, branch: Branch) -> Self {
        Activation::all(n_agents, Branch::Either).with(agent, branch)
    }

    pub fn with(mut self, agent: usize, branch: Branch) -> Self {
        self.0[agent] = branch;
        self
    }

    pub fn branches(&self) -> &[Branch] {
        &self.0
    }

    pub fn tag(&self, model: &WorldModel) -> String {
        self.0
            .iter()
            .zip(model.agents())
            .filter_map(|(b, a)| match b {
                Branch::Active => Some(format!("X({})", a.name)),
                Branch::Inactive => Some(format!("!X({})", a.name)),
                Branch::Either => None,
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// One optional policy per agent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Policies(Vec<Option<Policy>>);

impl Policies {
    pub fn new(n_agents: usize) -> Self {
        Policies(vec![None; n_agents])
    }

    /// Every agent playing its null policy.
    pub fn nulls(model: &WorldModel) -> Result<Self> {
        (0..model.n_agents())
            .map(|a| Policy::null(model, a).map(Some))
            .collect::<Result<Vec<_>>>()
            .map(Policies)
    }

    pub fn with(mut self, policy: Policy) -> Self {
        self.set(policy);
        self
    }

    pub fn set(&mut self, policy: Policy) {
        let agent = policy.agent();
        if agent >= self.0.len() {
            self.0.resize(agent + 1, None);
        }
        self.0[agent] = Some(policy);
    }

    pub fn get(&self, agent: usize) -> Option<&Policy> {
        self.0.get(agent).and_then(Option::as_ref)
    }
}

/// One realized run: activation flags, `H + 1` states, and `H` joint actions
/// stored step-major (`actions[(step - 1) * n_agents + agent]`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trajectory {
    pub active: Vec<bool>,
    pub states: Vec<u32>,
    pub actions: Vec<u32>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn state(&self, t: usize) -> usize {
        self.states[t] as usize
    }

    pub fn final_state(&self) -> usize {
        *self.states.last().expect("trajectory has an initial state") as usize
    }

    /// Action of `agent` at `step` (1-based: the action taken from state `step - 1`).
    pub fn action(&self, agent: usize, step: usize) -> usize {
        self.actions[(step - 1) * self.active.len() + agent] as usize
    }
}

/// Per-step action distribution of an agent whose activation failed.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineProcess {
    pub steps: Vec<Vec<(usize, f64)>>,
}

impl BaselineProcess {
    pub fn at(&self, t: usize) -> &[(usize, f64)] {
        &self.steps[t]
    }
}

pub fn apply_baseline(model: &WorldModel, agent: usize) -> Result<BaselineProcess> {
    let kernel = model.kernel()?;
    Ok(kernel.baselines[agent].clone())
}

pub(crate) fn check_policies(
    model: &WorldModel,
    policies: &Policies,
    activation: &Activation,
) -> Result<()> {
    if activation.branches().len() != model.n_agents() {
        return Err(Error::InvalidConfig(format!(
            "activation lists {} agents, model has {}",
            activation.branches().len(),
            model.n_agents()
        )));
    }
    for (i, b) in activation.branches().iter().enumerate() {
        if *b == Branch::Inactive {
            continue;
        }
        let policy = policies
            .get(i)
            .ok_or_else(|| Error::MissingPolicy(model.agents()[i].name.clone()))?;
        if policy.agent() != i {
            return Err(Error::PolicyMismatch {
                agent: model.agents()[i].name.clone(),
                reason: format!("policy belongs to agent #{}", policy.agent()),
            });
        }
        policy.check(model)?;
    }
    Ok(())
}

/// Activation flag combinations with their probabilities, false before true.
pub(crate) fn activation_combos(model: &WorldModel, activation: &Activation) -> Vec<(Vec<bool>, f64)> {
    let mut combos = vec![(Vec::new(), 1.0)];
    for (agent, b) in model.agents().iter().zip(activation.branches()) {
        let options: Vec<(bool, f64)> = match b {
            Branch::Active => vec![(true, 1.0)],
            Branch::Inactive => vec![(false, 1.0)],
            Branch::Either => vec![(false, agent.epsilon), (true, 1.0 - agent.epsilon)],
        };
        combos = combos
            .into_iter()
            .flat_map(|(flags, w): (Vec<bool>, f64)| {
                options.iter().map(move |&(f, p)| {
                    let mut flags = flags.clone();
                    flags.push(f);
                    (flags, w * p)
                })
            })
            .collect();
    }
    combos
}

/// Action distribution of every agent at `(t, state)` for the given flags.
pub(crate) fn step_choices(
    model: &WorldModel,
    kernel: &Kernel,
    policies: &Policies,
    flags: &[bool],
    t: usize,
    state: usize,
) -> Vec<Vec<(usize, f64)>> {
    (0..model.n_agents())
        .map(|i| {
            if flags[i] {
                let policy = policies.get(i).expect("checked: active agents have policies");
                let obs = model.observation(i, state, flags);
                vec![(policy.action(t, obs), 1.0)]
            } else {
                kernel.baselines[i].at(t).to_vec()
            }
        })
        .collect()
}

struct Walker<'a> {
    model: &'a WorldModel,
    kernel: &'a Kernel,
    policies: &'a Policies,
    flags: Vec<bool>,
    states: Vec<u32>,
    actions: Vec<u32>,
    out: &'a mut Vec<(Trajectory, f64)>,
    cap: usize,
}

impl Walker<'_> {
    fn step(&mut self, t: usize, state: usize, p: f64) -> Result<()> {
        if t == self.model.horizon() {
            if self.out.len() >= self.cap {
                return Err(Error::ExplosionGuard { cap: self.cap });
            }
            self.out.push((
                Trajectory {
                    active: self.flags.clone(),
                    states: self.states.clone(),
                    actions: self.actions.clone(),
                },
                p,
            ));
            return Ok(());
        }
        let choices = step_choices(
            self.model,
            self.kernel,
            self.policies,
            &self.flags,
            t,
            state,
        );
        self.choose(&choices, 0, t, state, 0, p)
    }

    fn choose(
        &mut self,
        choices: &[Vec<(usize, f64)>],
        agent: usize,
        t: usize,
        state: usize,
        joint: usize,
        p: f64,
    ) -> Result<()> {
        if agent == choices.len() {
            let row = self.kernel.row(state, joint);
            for (&next, &q) in row.next.iter().zip(&row.prob) {
                self.states.push(next);
                let r = self.step(t + 1, next as usize, p * q);
                self.states.pop();
                r?;
            }
            return Ok(());
        }
        for &(a, q) in &choices[agent] {
            self.actions.push(a as u32);
            let r = self.choose(
                choices,
                agent + 1,
                t,
                state,
                joint + a * self.kernel.strides[agent],
                p * q,
            );
            self.actions.pop();
            r?;
        }
        Ok(())
    }
}

/// Every positive-probability trajectory under the given policies and
/// activation assignment, sorted by (activation flags, states, actions).
pub fn enumerate_trajectories(
    model: &WorldModel,
    policies: &Policies,
    activation: &Activation,
    cap: usize,
) -> Result<Vec<(Trajectory, f64)>> {
    let kernel = model.kernel()?;
    check_policies(model, policies, activation)?;
    let mut out = Vec::new();
    for (flags, w) in activation_combos(model, activation) {
        if w <= 0.0 {
            continue;
        }
        let mut walker = Walker {
            model,
            kernel,
            policies,
            flags,
            states: vec![model.initial() as u32],
            actions: Vec::new(),
            out: &mut out,
            cap,
        };
        walker.step(0, model.initial(), w)?;
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}
