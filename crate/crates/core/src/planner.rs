//! Penalized policy evaluation and search for `U = E[u|X] - mu * R`.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::conditioning::{conditioned_between, Conditioning};
use crate::distribution::{propagate, EventPredicate, TrajectoryDistribution};
use crate::error::{Error, Result};
use crate::measures::{Penalty, Utility};
use crate::penalty::{MeasureContext, PenaltyConfig};
use crate::policy::{Policy, PolicySpace};
use crate::worldmodel::{Activation, Branch, Policies, WorldModel};

pub const DEFAULT_BUDGET: u128 = 100_000;
pub const DEFAULT_RESTARTS: usize = 32;
pub const DEFAULT_MUTATIONS: usize = 512;
pub const DEFAULT_INDIFFERENCE: f64 = 0.5;
const TIE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Objective {
    pub utility: Utility,
    pub mu: f64,
    pub measure: PenaltyConfig,
}

/// One line of a run or sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mu: f64,
    pub policy_id: String,
    pub expected_u: f64,
    pub penalty: Penalty,
    pub objective: f64,
    pub measure: String,
}

/// The other agents being inactive, with the utility `c` the agent receives
/// wherever that assumption fails.
#[derive(Debug, Clone)]
pub struct Assumption {
    pub event: EventPredicate,
    pub indifference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub policy_id: String,
    /// `E[u | X]`, conditioned on the assumption if there is one.
    pub expected_u: f64,
    pub penalty: Penalty,
    /// `P(A|X) E[u|X,A] + (1 - P(A|X)) c`; equals `expected_u` without an
    /// assumption.
    pub effective_u: f64,
    pub p_assumption: f64,
}

impl Evaluation {
    pub fn objective(&self, mu: f64) -> f64 {
        self.expected_u - self.penalty.scaled(mu)
    }

    pub fn row(&self, mu: f64, measure: &str) -> SweepRow {
        SweepRow {
            mu,
            policy_id: self.policy_id.clone(),
            expected_u: self.expected_u,
            penalty: self.penalty,
            objective: self.objective(mu),
            measure: measure.to_string(),
        }
    }

    /// True if `self` should be chosen over `other` at `mu`: higher
    /// objective, then lower penalty, then smaller policy id.
    fn beats(&self, other: &Evaluation, mu: f64) -> bool {
        let (a, b) = (self.objective(mu), other.objective(mu));
        if a > b + TIE {
            return true;
        }
        if b > a + TIE {
            return false;
        }
        let (r, s) = (self.penalty.value(), other.penalty.value());
        if r < s - TIE {
            return true;
        }
        if s < r - TIE {
            return false;
        }
        self.policy_id < other.policy_id
    }
}

/// Exact selection over a candidate set, independent of its order.
fn select(cands: &[(Policy, Evaluation)], mu: f64) -> Option<&(Policy, Evaluation)> {
    let best_u = cands
        .iter()
        .map(|(_, e)| e.objective(mu))
        .fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<&(Policy, Evaluation)> = cands
        .iter()
        .filter(|(_, e)| e.objective(mu) >= best_u - TIE || e.objective(mu) == best_u)
        .collect();
    let best_r = top
        .iter()
        .map(|(_, e)| e.penalty.value())
        .fold(f64::INFINITY, f64::min);
    top.into_iter()
        .filter(|(_, e)| e.penalty.value() <= best_r + TIE || e.penalty.value() == best_r)
        .min_by(|a, b| a.1.policy_id.cmp(&b.1.policy_id))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Largest policy space searched exhaustively.
    pub budget: u128,
    pub seed: u64,
    pub restarts: usize,
    pub mutations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: DEFAULT_BUDGET,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            mutations: DEFAULT_MUTATIONS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimum {
    pub policy: Policy,
    pub evaluation: Evaluation,
    pub row: SweepRow,
    pub exhaustive: bool,
}

/// One agent's planning problem: everything but the policy.
#[derive(Debug, Clone)]
pub struct Problem {
    model: Arc<WorldModel>,
    agent: usize,
    objective: Objective,
    context: Arc<MeasureContext>,
    conditioning: Conditioning,
    others: Policies,
    assumption: Option<Assumption>,
    baseline: Arc<OnceLock<Arc<TrajectoryDistribution>>>,
}

impl Problem {
    /// Other agents, if any, play their null policies until
    /// [`Problem::with_others`] says otherwise.
    pub fn new(
        model: Arc<WorldModel>,
        agent: usize,
        objective: Objective,
        context: Arc<MeasureContext>,
    ) -> Result<Self> {
        if agent >= model.n_agents() {
            return Err(Error::InvalidConfig(format!("no agent #{agent}")));
        }
        if !(objective.mu >= 0.0 && objective.mu.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mu must be a finite non-negative number, got {}",
                objective.mu
            )));
        }
        let others = Policies::nulls(&model)?;
        Ok(Problem {
            model,
            agent,
            objective,
            context,
            conditioning: Conditioning::None,
            others,
            assumption: None,
            baseline: Arc::default(),
        })
    }

    pub fn with_conditioning(mut self, conditioning: Conditioning) -> Self {
        self.conditioning = conditioning;
        self
    }

    pub fn with_others(mut self, others: Policies) -> Self {
        self.others = others;
        self.baseline = Arc::default();
        self
    }

    pub fn with_assumption(mut self, assumption: Assumption) -> Self {
        self.assumption = Some(assumption);
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.objective.mu = mu;
        self
    }

    pub fn model(&self) -> &Arc<WorldModel> {
        &self.model
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn conditioning(&self) -> &Conditioning {
        &self.conditioning
    }

    pub fn space(&self) -> PolicySpace {
        PolicySpace::of(&self.model, self.agent)
    }

    fn activation(&self, branch: Branch) -> Activation {
        Activation::only(self.model.n_agents(), self.agent, branch)
    }

    /// `P(.|not X)`; independent of this agent's policy, so computed once.
    fn baseline(&self) -> Result<Arc<TrajectoryDistribution>> {
        if let Some(d) = self.baseline.get() {
            return Ok(d.clone());
        }
        let d = Arc::new(propagate(
            &self.model,
            &self.others,
            &self.activation(Branch::Inactive),
        )?);
        Ok(self.baseline.get_or_init(|| d).clone())
    }

    pub fn policies(&self, policy: &Policy) -> Policies {
        self.others.clone().with(policy.clone())
    }

    /// `(P(.|X), P(.|not X))` for `policy`, both conditioned on the
    /// assumption if there is one, with `P(assumption | X)`.
    pub fn distributions(
        &self,
        policy: &Policy,
    ) -> Result<(TrajectoryDistribution, TrajectoryDistribution, f64)> {
        if policy.agent() != self.agent {
            return Err(Error::PolicyMismatch {
                agent: self.model.agents()[self.agent].name.clone(),
                reason: format!("policy belongs to agent #{}", policy.agent()),
            });
        }
        let dx = propagate(
            &self.model,
            &self.policies(policy),
            &self.activation(Branch::Active),
        )?;
        let dnx = self.baseline()?;
        match &self.assumption {
            None => Ok((dx, (*dnx).clone(), 1.0)),
            Some(a) => {
                let p = dx.probability(&a.event);
                let cx = dx.condition(&a.event)?;
                self.check_observations(&dx, &cx, &a.event)?;
                Ok((cx, dnx.condition(&a.event)?, p))
            }
        }
    }

    /// Every (step, observation) the agent can meet must stay possible
    /// under the assumption, or its conditional goal is undefined there.
    fn check_observations(
        &self,
        full: &TrajectoryDistribution,
        cond: &TrajectoryDistribution,
        event: &EventPredicate,
    ) -> Result<()> {
        let seen = |d: &TrajectoryDistribution| -> BTreeSet<(usize, usize)> {
            d.entries()
                .iter()
                .flat_map(|(t, _)| {
                    (0..self.model.horizon()).map(move |s| {
                        (s, self.model.observation(self.agent, t.state(s), &t.active))
                    })
                })
                .collect()
        };
        let possible = seen(cond);
        if let Some(&(step, obs)) = seen(full).difference(&possible).next() {
            return Err(Error::AssumptionViolated {
                agent: self.model.agents()[self.agent].name.clone(),
                assumption: event.name().to_string(),
                observation: format!(
                    "{:?} at step {}",
                    self.model.observation_alphabet(self.agent)[obs],
                    step + 1
                ),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, policy: &Policy) -> Result<Evaluation> {
        policy.check(&self.model)?;
        let (dx, dnx, p_assumption) = self.distributions(policy)?;
        let u = &self.objective.utility;
        u.check_bounded(&dx)?;
        let expected_u = dx.expectation(|t| u.eval(t));
        let penalty = conditioned_between(
            &self.objective.measure,
            &self.context,
            &self.conditioning,
            self.agent,
            &dx,
            &dnx,
        )?;
        let effective_u = match &self.assumption {
            None => expected_u,
            Some(a) => p_assumption * expected_u + (1.0 - p_assumption) * a.indifference,
        };
        Ok(Evaluation {
            policy_id: policy.id(),
            expected_u,
            penalty,
            effective_u,
            p_assumption,
        })
    }

    /// Like `evaluate`, but a conditioning event the policy makes impossible
    /// marks it infeasible (`None`) instead of failing.
    fn try_evaluate(&self, policy: &Policy) -> Result<Option<Evaluation>> {
        match self.evaluate(policy) {
            Ok(e) => Ok(Some(e)),
            Err(Error::ZeroProbabilityEvent(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn evaluate_all(&self, policies: Vec<Policy>) -> Result<Vec<(Policy, Evaluation)>> {
        let evals: Vec<Result<Option<Evaluation>>> =
            policies.par_iter().map(|p| self.try_evaluate(p)).collect();
        let mut out = Vec::with_capacity(policies.len());
        for (p, e) in policies.into_iter().zip(evals) {
            if let Some(e) = e? {
                out.push((p, e));
            }
        }
        if out.is_empty() {
            return Err(Error::ZeroProbabilityEvent(format!(
                "{} (no feasible policy)",
                self.conditioning.tag()
            )));
        }
        Ok(out)
    }

    fn exhaustive(&self, cfg: &SearchConfig) -> bool {
        self.space().size() <= cfg.budget
    }

    fn hill_climb(&self, mu: f64, cfg: &SearchConfig) -> Result<(Policy, Evaluation)> {
        let space = self.space();
        let null = Policy::null(&self.model, self.agent)?;
        let runs: Vec<Result<Option<(Policy, Evaluation)>>> = (0..cfg.restarts.max(1))
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(r as u64);
                let mut memo: HashMap<Policy, Option<Evaluation>> = HashMap::new();
                let mut eval = |p: &Policy| -> Result<Option<Evaluation>> {
                    if let Some(e) = memo.get(p) {
                        return Ok(e.clone());
                    }
                    let e = self.try_evaluate(p)?;
                    memo.insert(p.clone(), e.clone());
                    Ok(e)
                };
                let start = if r == 0 {
                    null.clone()
                } else {
                    Policy::from_table(
                        self.agent,
                        space.n_obs,
                        (0..space.entries())
                            .map(|_| rng.random_range(0..space.n_actions) as u32)
                            .collect(),
                    )
                };
                let mut current = eval(&start)?.map(|e| (start, e));
                for _ in 0..cfg.mutations {
                    let base = match &current {
                        Some((p, _)) => p.clone(),
                        None => null.clone(),
                    };
                    let i = rng.random_range(0..space.entries());
                    let a = rng.random_range(0..space.n_actions) as u32;
                    if base.table()[i] == a {
                        continue;
                    }
                    let mut cand = base;
                    cand.table_mut()[i] = a;
                    if let Some(e) = eval(&cand)? {
                        if current.as_ref().is_none_or(|(_, c)| e.beats(c, mu)) {
                            current = Some((cand, e));
                        }
                    }
                }
                Ok(current)
            })
            .collect();
        let mut best: Option<(Policy, Evaluation)> = None;
        for run in runs {
            if let Some((p, e)) = run? {
                if best.as_ref().is_none_or(|(_, b)| e.beats(b, mu)) {
                    best = Some((p, e));
                }
            }
        }
        best.ok_or_else(|| {
            Error::ZeroProbabilityEvent(format!(
                "{} (no feasible policy found)",
                self.conditioning.tag()
            ))
        })
    }

    fn optimum(&self, mu: f64, policy: Policy, evaluation: Evaluation, exhaustive: bool) -> Optimum {
        Optimum {
            row: evaluation.row(mu, &self.objective.measure.name),
            policy,
            evaluation,
            exhaustive,
        }
    }
}

pub fn evaluate_policy(problem: &Problem, policy: &Policy) -> Result<SweepRow> {
    let mu = problem.objective.mu;
    Ok(problem
        .evaluate(policy)?
        .row(mu, &problem.objective.measure.name))
}

/// Exact argmax when the policy space fits the budget, seeded hill-climbing
/// otherwise.
pub fn optimize(problem: &Problem, cfg: &SearchConfig) -> Result<Optimum> {
    let mu = problem.objective.mu;
    if problem.exhaustive(cfg) {
        let all = problem.evaluate_all(problem.space().iter().collect())?;
        let (p, e) = select(&all, mu).expect("non-empty").clone();
        Ok(problem.optimum(mu, p, e, true))
    } else {
        let (p, e) = problem.hill_climb(mu, cfg)?;
        Ok(problem.optimum(mu, p, e, false))
    }
}

/// One optimum per `mu`, largest `mu` first. Exhaustive sweeps evaluate
/// each policy once.
pub fn mu_sweep(problem: &Problem, mus: &[f64], cfg: &SearchConfig) -> Result<Vec<Optimum>> {
    if mus.is_empty() {
        return Err(Error::InvalidConfig("mu list is empty".into()));
    }
    if let Some(bad) = mus.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "mu must be a finite non-negative number, got {bad}"
        )));
    }
    let mut mus = mus.to_vec();
    mus.sort_by(|a, b| b.total_cmp(a));
    if problem.exhaustive(cfg) {
        let all = problem.evaluate_all(problem.space().iter().collect())?;
        Ok(mus
            .into_iter()
            .map(|mu| {
                let (p, e) = select(&all, mu).expect("non-empty").clone();
                problem.optimum(mu, p, e, true)
            })
            .collect())
    } else {
        mus.into_iter()
            .map(|mu| {
                let (p, e) = problem.hill_climb(mu, cfg)?;
                Ok(problem.optimum(mu, p, e, false))
            })
            .collect()
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || n == 0 {
        return Err(Error::InvalidConfig(format!(
            "mu grid needs 0 < lo <= hi and at least one step, got {lo}:{hi}:{n}"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
            }
        })
        .collect())
}
