//! Agents that are low impact conditional on the other agents being
//! inactive, and the joint outcome when all of them run.

use std::sync::Arc;

use crate::distribution::{propagate, EventPredicate};
use crate::error::Result;
use crate::penalty::MeasureContext;
use crate::planner::{optimize, Assumption, Objective, Optimum, Problem, SearchConfig, SweepRow};
use crate::policy::Policy;
use crate::worldmodel::{Activation, Branch, Policies, WorldModel};

#[derive(Debug, Clone)]
pub struct ConditionalObjective {
    pub objective: Objective,
    /// Typically "every other agent inactive".
    pub assumption: EventPredicate,
    /// Utility credited wherever the assumption fails.
    pub indifference: f64,
}

impl ConditionalObjective {
    pub fn problem(
        &self,
        model: Arc<WorldModel>,
        agent: usize,
        context: Arc<MeasureContext>,
        others: Policies,
    ) -> Result<Problem> {
        Ok(Problem::new(model, agent, self.objective.clone(), context)?
            .with_others(others)
            .with_assumption(Assumption {
                event: self.assumption.clone(),
                indifference: self.indifference,
            }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalRow {
    pub agent: String,
    pub row: SweepRow,
    pub effective_u: f64,
    pub p_assumption: f64,
}

/// Evaluates `policy` on `P(.|X, A)` against `P(.|not X, A)` where `A` is
/// the assumption. Fails with `AssumptionViolated` if the agent can observe
/// something the assumption rules out.
pub fn conditional_evaluate(
    model: Arc<WorldModel>,
    agent: usize,
    policy: &Policy,
    cobj: &ConditionalObjective,
    context: Arc<MeasureContext>,
    others: Policies,
) -> Result<ConditionalRow> {
    let problem = cobj.problem(model.clone(), agent, context, others)?;
    let e = problem.evaluate(policy)?;
    Ok(ConditionalRow {
        agent: model.agents()[agent].name.clone(),
        row: e.row(cobj.objective.mu, &cobj.objective.measure.name),
        effective_u: e.effective_u,
        p_assumption: e.p_assumption,
    })
}

pub fn conditional_optimize(
    model: Arc<WorldModel>,
    agent: usize,
    cobj: &ConditionalObjective,
    context: Arc<MeasureContext>,
    others: Policies,
    cfg: &SearchConfig,
) -> Result<Optimum> {
    optimize(&cobj.problem(model, agent, context, others)?, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointReport {
    /// `P(success)` with every activation event left random.
    pub p_success: f64,
    pub agents: Vec<ConditionalRow>,
}

/// Runs all agents together. `objectives[i]` is agent `i`'s conditional
/// objective, evaluated with the other agents playing `policies`.
pub fn joint_rollout(
    model: Arc<WorldModel>,
    policies: &Policies,
    success: &EventPredicate,
    objectives: &[ConditionalObjective],
    context: Arc<MeasureContext>,
) -> Result<JointReport> {
    let n = model.n_agents();
    let dist = propagate(&model, policies, &Activation::all(n, Branch::Either))?;
    let p_success = dist.probability(success);
    let agents = objectives
        .iter()
        .enumerate()
        .map(|(i, cobj)| {
            let policy = policies
                .get(i)
                .cloned()
                .ok_or_else(|| crate::Error::MissingPolicy(model.agents()[i].name.clone()))?;
            conditional_evaluate(
                model.clone(),
                i,
                &policy,
                cobj,
                context.clone(),
                policies.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JointReport { p_success, agents })
}

/// Each agent's conditional optimum, found independently with the other
/// agents at their null policies, and the outcome of running them together.
#[derive(Debug, Clone)]
pub struct JointPlan {
    pub optima: Vec<Optimum>,
    pub report: JointReport,
}

pub fn solve_joint(
    model: Arc<WorldModel>,
    objectives: &[ConditionalObjective],
    success: &EventPredicate,
    context: Arc<MeasureContext>,
    cfg: &SearchConfig,
) -> Result<JointPlan> {
    let nulls = Policies::nulls(&model)?;
    let optima = objectives
        .iter()
        .enumerate()
        .map(|(i, cobj)| conditional_optimize(model.clone(), i, cobj, context.clone(), nulls.clone(), cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut policies = Policies::new(model.n_agents());
    for o in &optima {
        policies.set(o.policy.clone());
    }
    let report = joint_rollout(model, &policies, success, objectives, context)?;
    Ok(JointPlan { optima, report })
}
