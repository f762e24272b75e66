//! Small expression language over trajectories.
//!
//! Terms read one integer from a trajectory:
//!
//! * `state:<component>@<t>` or `state:<component>@end`
//! * `action:<agent>@<step>` (steps are 1-based; the value is the action index)
//! * `active:<agent>` (1 if the agent's activation event fired)
//!
//! Predicates are `&&`-joined clauses `<term> <op> <value>` with `op` one of
//! `== != < <= > >=`, or `<term> in [v1, v2, ...]`. Action terms accept action
//! names as values. The literal `true` is the sure event.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::worldmodel::{Trajectory, WorldModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Time {
    At(usize),
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    State {
        component: usize,
        time: Time,
        /// Component value per state index.
        values: Arc<[i64]>,
    },
    Action {
        agent: usize,
        step: usize,
    },
    Active {
        agent: usize,
    },
}

fn parse_err(text: &str, why: impl fmt::Display) -> Error {
    Error::Parse(format!("`{text}`: {why}"))
}

impl Term {
    pub fn parse(model: &WorldModel, text: &str) -> Result<Term> {
        let text = text.trim();
        let (kind, rest) = text
            .split_once(':')
            .ok_or_else(|| parse_err(text, "expected `state:`, `action:` or `active:`"))?;
        match kind {
            "state" => {
                let (name, at) = rest
                    .split_once('@')
                    .ok_or_else(|| parse_err(text, "expected `@<t>` or `@end`"))?;
                let component = model
                    .component_index(name)
                    .ok_or_else(|| parse_err(text, format!("unknown component `{name}`")))?;
                let time = match at {
                    "end" => Time::End,
                    t => {
                        let t: usize = t
                            .parse()
                            .map_err(|_| parse_err(text, format!("bad time `{t}`")))?;
                        if t > model.horizon() {
                            return Err(parse_err(
                                text,
                                format!("time {t} beyond horizon {}", model.horizon()),
                            ));
                        }
                        Time::At(t)
                    }
                };
                let values = model
                    .states()
                    .iter()
                    .map(|s| s.values.get(component).copied().unwrap_or(0))
                    .collect();
                Ok(Term::State {
                    component,
                    time,
                    values,
                })
            }
            "action" => {
                let (name, at) = rest
                    .split_once('@')
                    .ok_or_else(|| parse_err(text, "expected `@<step>`"))?;
                let agent = model
                    .agent_index(name)
                    .ok_or_else(|| parse_err(text, format!("unknown agent `{name}`")))?;
                let step: usize = at
                    .parse()
                    .map_err(|_| parse_err(text, format!("bad step `{at}`")))?;
                if step == 0 || step > model.horizon() {
                    return Err(parse_err(
                        text,
                        format!("step must lie in 1..={}", model.horizon()),
                    ));
                }
                Ok(Term::Action { agent, step })
            }
            "active" => {
                let agent = model
                    .agent_index(rest)
                    .ok_or_else(|| parse_err(text, format!("unknown agent `{rest}`")))?;
                Ok(Term::Active { agent })
            }
            other => Err(parse_err(text, format!("unknown term kind `{other}`"))),
        }
    }

    pub fn eval(&self, traj: &Trajectory) -> i64 {
        match self {
            Term::State {
                time, values, ..
            } => {
                let s = match time {
                    Time::At(t) => traj.state(*t),
                    Time::End => traj.final_state(),
                };
                values[s]
            }
            Term::Action { agent, step } => traj.action(*agent, *step) as i64,
            Term::Active { agent } => traj.active[*agent] as i64,
        }
    }

    pub fn reads_activation(&self) -> bool {
        matches!(self, Term::Active { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
}

#[derive(Debug, Clone, PartialEq)]
struct Clause {
    term: Term,
    op: Op,
    values: Vec<i64>,
}

impl Clause {
    fn holds(&self, traj: &Trajectory) -> bool {
        let v = self.term.eval(traj);
        let w = self.values[0];
        match self.op {
            Op::Eq => v == w,
            Op::Ne => v != w,
            Op::Lt => v < w,
            Op::Le => v <= w,
            Op::Gt => v > w,
            Op::Ge => v >= w,
            Op::In => self.values.contains(&v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    text: String,
    clauses: Vec<Clause>,
}

impl Predicate {
    pub fn parse(model: &WorldModel, text: &str) -> Result<Predicate> {
        let trimmed = text.trim();
        let mut clauses = Vec::new();
        if trimmed != "true" {
            for part in trimmed.split("&&") {
                clauses.push(parse_clause(model, part.trim())?);
            }
        }
        Ok(Predicate {
            text: trimmed.to_string(),
            clauses,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn holds(&self, traj: &Trajectory) -> bool {
        self.clauses.iter().all(|c| c.holds(traj))
    }

    pub fn reads_activation(&self) -> bool {
        self.clauses.iter().any(|c| c.term.reads_activation())
    }
}

fn parse_value(model: &WorldModel, term: &Term, clause: &str, raw: &str) -> Result<i64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    if let Term::Action { agent, .. } = term {
        if let Some(a) = model.action_index(*agent, raw) {
            return Ok(a as i64);
        }
    }
    Err(parse_err(clause, format!("bad value `{raw}`")))
}

fn parse_clause(model: &WorldModel, clause: &str) -> Result<Clause> {
    if clause.is_empty() {
        return Err(parse_err(clause, "empty clause"));
    }
    if let Some((lhs, rhs)) = clause.split_once(" in ") {
        let term = Term::parse(model, lhs)?;
        let list = rhs
            .trim()
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| parse_err(clause, "expected `[v1, v2, ...]` after `in`"))?;
        let values = list
            .split(',')
            .filter(|v| !v.trim().is_empty())
            .map(|v| parse_value(model, &term, clause, v))
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(parse_err(clause, "empty value list"));
        }
        return Ok(Clause {
            term,
            op: Op::In,
            values,
        });
    }
    const OPS: [(&str, Op); 6] = [
        ("==", Op::Eq),
        ("!=", Op::Ne),
        ("<=", Op::Le),
        (">=", Op::Ge),
        ("<", Op::Lt),
        (">", Op::Gt),
    ];
    for (token, op) in OPS {
        if let Some((lhs, rhs)) = clause.split_once(token) {
            let term = Term::parse(model, lhs)?;
            let value = parse_value(model, &term, clause, rhs)?;
            return Ok(Clause {
                term,
                op,
                values: vec![value],
            });
        }
    }
    Err(parse_err(clause, "expected a comparison or `in [...]`"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldmodel::ModelBuilder;

    fn model() -> WorldModel {
        let mut b = ModelBuilder::new(2);
        b.component("x");
        b.component("y");
        b.state("a", &[0, 5]);
        b.state("b", &[1, 7]);
        b.agent("ai", &["noop", "go"], "noop");
        b.build()
    }

    fn traj() -> Trajectory {
        Trajectory {
            active: vec![true],
            states: vec![0, 1, 1],
            actions: vec![1, 0],
        }
    }

    #[test]
    fn terms_read_the_right_slot() {
        let m = model();
        let t = traj();
        assert_eq!(Term::parse(&m, "state:y@0").unwrap().eval(&t), 5);
        assert_eq!(Term::parse(&m, "state:y@end").unwrap().eval(&t), 7);
        assert_eq!(Term::parse(&m, "action:ai@1").unwrap().eval(&t), 1);
        assert_eq!(Term::parse(&m, "active:ai").unwrap().eval(&t), 1);
    }

    #[test]
    fn predicates_combine_clauses() {
        let m = model();
        let t = traj();
        let p = |s: &str| Predicate::parse(&m, s).unwrap().holds(&t);
        assert!(p("true"));
        assert!(p("state:x@end == 1 && state:y@0 < 6"));
        assert!(!p("state:x@end == 1 && state:y@0 > 6"));
        assert!(p("action:ai@1 == go"));
        assert!(p("state:y@end in [3, 7]"));
        assert!(p("state:x@0 != 1"));
        assert!(Predicate::parse(&m, "active:ai == 1").unwrap().reads_activation());
    }

    #[test]
    fn bad_terms_are_rejected() {
        let m = model();
        for bad in [
            "state:z@end",
            "state:x@3",
            "action:ai@0",
            "active:bob",
            "foo:x",
            "state:x",
        ] {
            assert!(Term::parse(&m, bad).is_err(), "{bad}");
        }
        assert!(Predicate::parse(&m, "state:x@end ~ 1").is_err());
        assert!(Predicate::parse(&m, "state:x@end in []").is_err());
    }
}
