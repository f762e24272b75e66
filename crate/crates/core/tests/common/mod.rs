//! Brute-force reference implementations used by the integration tests.
//!
//! Everything here walks the raw transition rules directly and recomputes
//! marginals, norms and importance from scratch, sharing no code with the
//! library beyond reading the model definition.

#![allow(dead_code)]

use std::collections::BTreeMap;

use lowimpact::policy::Policy;
use lowimpact::scenario::file::ScenarioFile;
use lowimpact::worldmodel::{Baseline, Branch, WorldModel};

/// `(active flags, states, step-major actions)` to probability.
pub type OracleDist = BTreeMap<(Vec<bool>, Vec<u32>, Vec<u32>), f64>;

fn activations(model: &WorldModel, branches: &[Branch]) -> Vec<(Vec<bool>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for (agent, b) in model.agents().iter().zip(branches) {
        let eps = agent.epsilon;
        let opts: Vec<(bool, f64)> = match b {
            Branch::Active => vec![(true, 1.0)],
            Branch::Inactive => vec![(false, 1.0)],
            Branch::Either => vec![(false, eps), (true, 1.0 - eps)],
        };
        out = out
            .into_iter()
            .flat_map(|(flags, p)| {
                opts.iter().map(move |&(f, q)| {
                    let mut flags = flags.clone();
                    flags.push(f);
                    (flags, p * q)
                })
            })
            .collect();
    }
    out
}

fn observation(model: &WorldModel, agent: usize, state: usize, active: &[bool]) -> usize {
    let spec = &model.agents()[agent].observe;
    let mut sym: Vec<i64> = spec
        .components
        .iter()
        .map(|&c| model.states()[state].values[c])
        .collect();
    sym.extend(spec.activations.iter().map(|&a| active[a] as i64));
    model
        .observation_alphabet(agent)
        .iter()
        .position(|s| *s == sym)
        .expect("observation symbol")
}

fn choices(
    model: &WorldModel,
    policies: &[Option<&Policy>],
    active: &[bool],
    t: usize,
    state: usize,
) -> Vec<(Vec<usize>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for (i, agent) in model.agents().iter().enumerate() {
        let opts: Vec<(usize, f64)> = if active[i] {
            let p = policies[i].expect("active agent needs a policy");
            vec![(p.action(t, observation(model, i, state, active)), 1.0)]
        } else {
            match &agent.baseline {
                Baseline::Null => vec![(agent.null_action.expect("null action"), 1.0)],
                Baseline::Random(w) => w.clone(),
                Baseline::Scripted(s) => vec![(s[t], 1.0)],
            }
        };
        out = out
            .into_iter()
            .flat_map(|(acts, p)| {
                opts.iter().map(move |&(a, q)| {
                    let mut acts = acts.clone();
                    acts.push(a);
                    (acts, p * q)
                })
            })
            .collect();
    }
    out
}

fn successors(model: &WorldModel, state: usize, joint: &[usize]) -> Vec<(usize, f64)> {
    model
        .rules()
        .iter()
        .find(|r| {
            r.from == state
                && r.actions
                    .iter()
                    .zip(joint)
                    .all(|(want, got)| want.is_none_or(|w| w == *got))
        })
        .map(|r| r.to.clone())
        .unwrap_or_else(|| vec![(state, 1.0)])
}

/// Exact trajectory distribution by depth-first enumeration.
pub fn enumerate(model: &WorldModel, policies: &[Option<&Policy>], branches: &[Branch]) -> OracleDist {
    let mut out = OracleDist::new();
    for (active, pa) in activations(model, branches) {
        let mut stack = vec![(vec![model.initial() as u32], Vec::<u32>::new(), pa)];
        while let Some((states, actions, p)) = stack.pop() {
            let t = states.len() - 1;
            if t == model.horizon() {
                *out.entry((active.clone(), states, actions)).or_default() += p;
                continue;
            }
            let s = states[t] as usize;
            for (joint, q) in choices(model, policies, &active, t, s) {
                if q <= 0.0 {
                    continue;
                }
                for (next, r) in successors(model, s, &joint) {
                    if r <= 0.0 {
                        continue;
                    }
                    let mut st = states.clone();
                    st.push(next as u32);
                    let mut ac = actions.clone();
                    ac.extend(joint.iter().map(|&a| a as u32));
                    stack.push((st, ac, p * q * r));
                }
            }
        }
    }
    out
}

/// Condition on a predicate of the trajectory.
pub fn condition(d: &OracleDist, keep: impl Fn(&(Vec<bool>, Vec<u32>, Vec<u32>)) -> bool) -> OracleDist {
    let mass: f64 = d.iter().filter(|(k, _)| keep(k)).map(|(_, p)| p).sum();
    d.iter()
        .filter(|(k, _)| keep(k))
        .map(|(k, p)| (k.clone(), p / mass))
        .collect()
}

/// A variable `state:<component>@end` with bin edges.
#[derive(Debug, Clone)]
pub struct OracleVar {
    pub component: usize,
    pub edges: Vec<f64>,
}

/// The scenario's variables (or every unboxed component) as oracle vars.
pub fn scenario_vars(file: &ScenarioFile, model: &WorldModel) -> Vec<OracleVar> {
    let comp = |name: &str| model.components().iter().position(|c| c.name == name).unwrap();
    if file.variables.is_empty() {
        return (0..model.components().len())
            .filter(|&c| !model.components()[c].boxed)
            .map(|component| OracleVar { component, edges: vec![] })
            .collect();
    }
    file.variables
        .iter()
        .map(|v| {
            let name = v
                .term
                .strip_prefix("state:")
                .and_then(|r| r.strip_suffix("@end"))
                .expect("oracle only handles state:<c>@end variables");
            OracleVar {
                component: comp(name),
                edges: v.edges.clone(),
            }
        })
        .collect()
}

pub fn cell(model: &WorldModel, vars: &[OracleVar], final_state: u32) -> Vec<i64> {
    vars.iter()
        .map(|v| {
            let x = model.states()[final_state as usize].values[v.component];
            if v.edges.is_empty() {
                x
            } else {
                v.edges.iter().filter(|&&e| e <= x as f64).count() as i64
            }
        })
        .collect()
}

pub fn marginal(model: &WorldModel, d: &OracleDist, vars: &[OracleVar]) -> BTreeMap<Vec<i64>, f64> {
    let mut out = BTreeMap::new();
    for ((_, states, _), p) in d {
        *out.entry(cell(model, vars, *states.last().unwrap())).or_insert(0.0) += p;
    }
    out
}

fn gaps(a: &BTreeMap<Vec<i64>, f64>, b: &BTreeMap<Vec<i64>, f64>) -> Vec<f64> {
    let keys: std::collections::BTreeSet<&Vec<i64>> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .collect()
}

pub fn linf(a: &BTreeMap<Vec<i64>, f64>, b: &BTreeMap<Vec<i64>, f64>) -> f64 {
    gaps(a, b).into_iter().fold(0.0, f64::max)
}

pub fn tv(a: &BTreeMap<Vec<i64>, f64>, b: &BTreeMap<Vec<i64>, f64>) -> f64 {
    gaps(a, b).iter().sum::<f64>() / 2.0
}

pub fn l2(a: &BTreeMap<Vec<i64>, f64>, b: &BTreeMap<Vec<i64>, f64>) -> f64 {
    gaps(a, b).iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// `state:<c>@end == v` (optionally `&&`-joined) evaluated on a final state.
pub fn holds(model: &WorldModel, expr: &str, final_state: u32) -> bool {
    expr.split("&&").all(|clause| {
        let (lhs, rhs) = clause.split_once("==").expect("oracle handles `==` clauses only");
        let name = lhs
            .trim()
            .strip_prefix("state:")
            .and_then(|r| r.strip_suffix("@end"))
            .expect("oracle handles state:<c>@end terms only");
        let c = model.components().iter().position(|x| x.name == name).unwrap();
        model.states()[final_state as usize].values[c] == rhs.trim().parse::<i64>().unwrap()
    })
}

/// The scenario's utilities as a value per state.
pub fn utilities(file: &ScenarioFile, model: &WorldModel) -> Vec<Vec<f64>> {
    let n = model.states().len() as u32;
    file.utilities
        .iter()
        .map(|u| match (&u.indicator, &u.term) {
            (Some(expr), _) => (0..n).map(|s| holds(model, expr, s) as u8 as f64).collect(),
            (None, Some(term)) => {
                let name = term.strip_prefix("state:").unwrap().strip_suffix("@end").unwrap();
                let c = model.components().iter().position(|x| x.name == name).unwrap();
                let (scale, offset) = (u.scale.unwrap_or(1.0), u.offset.unwrap_or(0.0));
                model
                    .states()
                    .iter()
                    .map(|st| offset + scale * st.values[c] as f64)
                    .collect()
            }
            _ => unreachable!(),
        })
        .collect()
}

/// Largest expectation gap over utilities and conjunctions of at most `k`
/// facts, skipping conjunctions impossible on either side.
pub fn importance(
    file: &ScenarioFile,
    model: &WorldModel,
    dx: &OracleDist,
    dnx: &OracleDist,
    k: usize,
) -> f64 {
    let us = utilities(file, model);
    let facts: Vec<String> = file.facts.iter().map(|f| f.expr.clone()).collect();
    let mut subsets: Vec<Vec<usize>> = vec![vec![]];
    for mask in 1u32..(1 << facts.len()) {
        if mask.count_ones() as usize <= k {
            subsets.push((0..facts.len()).filter(|i| mask >> i & 1 == 1).collect());
        }
    }
    let cond_exp = |d: &OracleDist, subset: &[usize], u: &[f64]| -> Option<f64> {
        let (mut mass, mut acc) = (0.0, 0.0);
        for ((_, states, _), p) in d {
            let s = *states.last().unwrap();
            if subset.iter().all(|&i| holds(model, &facts[i], s)) {
                mass += p;
                acc += p * u[s as usize];
            }
        }
        (mass > 0.0).then(|| acc / mass)
    };
    let mut best = 0.0f64;
    for subset in &subsets {
        for u in &us {
            if let (Some(a), Some(b)) = (cond_exp(dx, subset, u), cond_exp(dnx, subset, u)) {
                best = best.max((a - b).abs());
            }
        }
    }
    best
}

pub fn expectation(d: &OracleDist, f: impl Fn(u32) -> f64) -> f64 {
    d.iter().map(|((_, s, _), p)| p * f(*s.last().unwrap())).sum()
}
