//! Named penalty configurations and their evaluation on a pair of
//! conditional distributions.

use std::fmt;
use std::sync::Arc;

use crate::distribution::TrajectoryDistribution;
use crate::error::{Error, Result};
use crate::measures::info::{detect_between, importance_between, DetectionConfig, FactSet, UtilitySet};
use crate::measures::state::{coarse_penalty, divergence_penalty, DivergenceKind, Norm};
use crate::measures::Penalty;
use crate::variables::{Variable, VariableSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureKind {
    Coarse(Norm),
    /// A divergence over the scenario variables, optionally extended with
    /// the evaluated agent's activation indicator.
    Divergence {
        kind: DivergenceKind,
        with_activation: bool,
    },
    Importance,
    Detect,
}

impl MeasureKind {
    pub fn family(&self) -> &'static str {
        match self {
            MeasureKind::Coarse(_) => "coarse",
            MeasureKind::Divergence { .. } => "div",
            MeasureKind::Importance => "importance",
            MeasureKind::Detect => "detect",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureKind::Coarse(n) => write!(f, "coarse:{n}"),
            MeasureKind::Divergence {
                kind,
                with_activation,
            } => write!(
                f,
                "div:{}{}",
                kind.name(),
                if *with_activation { "+act" } else { "" }
            ),
            MeasureKind::Importance => f.write_str("importance"),
            MeasureKind::Detect => f.write_str("detect"),
        }
    }
}

/// A measure with the name it was requested under.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub name: String,
    pub kind: MeasureKind,
}

/// Every built-in measure name, in listing order.
pub fn measure_names() -> Vec<String> {
    let mut names: Vec<String> = ["linf", "tv", "l2", "softmax"]
        .iter()
        .map(|n| format!("coarse:{n}"))
        .collect();
    for d in DivergenceKind::NAMES {
        names.push(format!("div:{d}"));
        names.push(format!("div:{d}+act"));
    }
    names.push("importance".into());
    names.push("detect".into());
    names
}

impl PenaltyConfig {
    /// Parses a built-in measure name; `coarse:softmax:<tau>` sets the
    /// temperature explicitly.
    pub fn parse(name: &str) -> Result<Self> {
        let unknown = || Error::UnknownName {
            kind: "measure",
            name: name.to_string(),
            valid: measure_names(),
        };
        let kind = if let Some(norm) = name.strip_prefix("coarse:") {
            MeasureKind::Coarse(norm.parse().map_err(|e| match e {
                Error::UnknownKind(_) => unknown(),
                other => other,
            })?)
        } else if let Some(div) = name.strip_prefix("div:") {
            let (div, with_activation) = match div.strip_suffix("+act") {
                Some(d) => (d, true),
                None => (div, false),
            };
            MeasureKind::Divergence {
                kind: div.parse().map_err(|_| unknown())?,
                with_activation,
            }
        } else {
            match name {
                "importance" => MeasureKind::Importance,
                "detect" => MeasureKind::Detect,
                _ => return Err(unknown()),
            }
        };
        Ok(PenaltyConfig {
            name: name.to_string(),
            kind,
        })
    }

    pub fn named(name: &str, kind: MeasureKind) -> Self {
        PenaltyConfig {
            name: name.to_string(),
            kind,
        }
    }
}

/// Everything a measure may need besides the two distributions.
#[derive(Debug, Clone)]
pub struct MeasureContext {
    pub variables: VariableSpec,
    pub utilities: UtilitySet,
    pub facts: FactSet,
    pub detection: DetectionConfig,
}

impl MeasureContext {
    pub fn new(variables: VariableSpec) -> Self {
        MeasureContext {
            variables,
            utilities: UtilitySet::default(),
            facts: FactSet::default(),
            detection: DetectionConfig::default(),
        }
    }
}

fn activation_variable(agent: usize) -> Variable {
    Variable::new(
        "activation",
        &format!("active#{agent}"),
        Arc::new(move |t| Some(t.active[agent] as i64)),
    )
}

/// `R` for `agent`, comparing `dx = P(.|X, ...)` with `dnx = P(.|not X, ...)`.
pub fn evaluate_measure(
    cfg: &PenaltyConfig,
    ctx: &MeasureContext,
    agent: usize,
    dx: &TrajectoryDistribution,
    dnx: &TrajectoryDistribution,
) -> Result<Penalty> {
    match cfg.kind {
        MeasureKind::Coarse(norm) => {
            let (a, b) = (dx.marginalize(&ctx.variables)?, dnx.marginalize(&ctx.variables)?);
            coarse_penalty(&a, &b, norm).map(Penalty::Finite)
        }
        MeasureKind::Divergence {
            kind,
            with_activation,
        } => {
            let spec;
            let vars = if with_activation {
                spec = ctx.variables.extended(activation_variable(agent));
                &spec
            } else {
                &ctx.variables
            };
            let (a, b) = (dx.marginalize(vars)?, dnx.marginalize(vars)?);
            divergence_penalty(&a, &b, kind)
        }
        MeasureKind::Importance => {
            importance_between(dx, dnx, &ctx.utilities, &ctx.facts).map(Penalty::Finite)
        }
        MeasureKind::Detect => detect_between(dx, dnx, &ctx.detection).map(|r| Penalty::Finite(r.penalty)),
    }
}
