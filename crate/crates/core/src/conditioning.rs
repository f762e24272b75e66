//! Penalties computed on distributions conditioned on an output message or
//! on an announcement event.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::distribution::{propagate, propagate_pair, EventPredicate, TrajectoryDistribution};
use crate::error::{Error, Result};
use crate::expr::Term;
use crate::measures::Penalty;
use crate::penalty::{evaluate_measure, MeasureContext, PenaltyConfig};
use crate::worldmodel::{Activation, Branch, Policies, WorldModel};

pub const DEFAULT_MIN_ANNOUNCEMENT_PROBABILITY: f64 = 1e-3;

/// Printed whenever a run conditions on the output channel.
pub const OUTPUT_WARNING: &str = "warning: output conditioning exempts the emitted message from the \
penalty; the message is not vetted by this measure and may itself be unsafe";

/// The agent's output: a trajectory term whose value is the emitted message.
#[derive(Debug, Clone)]
pub struct MessageChannel {
    pub name: String,
    pub agent: usize,
    pub term: Term,
    pub alphabet: Vec<i64>,
}

impl MessageChannel {
    pub fn event(&self, message: i64) -> EventPredicate {
        let term = self.term.clone();
        EventPredicate::new(
            &format!("{}={message}", self.name),
            Arc::new(move |t| term.eval(t) == message),
        )
    }

    /// Checks that the baseline can emit every symbol of the alphabet.
    pub fn validate(&self, model: &WorldModel) -> Result<()> {
        let baseline = propagate(
            model,
            &Policies::nulls(model)?,
            &Activation::only(model.n_agents(), self.agent, Branch::Inactive),
        )?;
        let silent: Vec<String> = self
            .alphabet
            .iter()
            .filter(|&&o| baseline.probability(&self.event(o)) <= 0.0)
            .map(|o| o.to_string())
            .collect();
        if self.alphabet.is_empty() || !silent.is_empty() {
            return Err(Error::Validation(vec![format!(
                "channel `{}`: baseline never emits {}",
                self.name,
                if silent.is_empty() {
                    "anything (empty alphabet)".to_string()
                } else {
                    silent.join(", ")
                }
            )]));
        }
        Ok(())
    }
}

/// A crisply defined success announcement.
#[derive(Debug, Clone)]
pub struct AnnouncementEvent {
    pub event: EventPredicate,
    /// Smallest acceptable `P(A | not X)`.
    pub min_probability: f64,
    /// Lower bound the unconditioned penalty of every high-utility policy
    /// is expected to respect; informational.
    pub penalty_floor: Option<f64>,
}

impl AnnouncementEvent {
    pub fn new(event: EventPredicate) -> Self {
        AnnouncementEvent {
            event,
            min_probability: DEFAULT_MIN_ANNOUNCEMENT_PROBABILITY,
            penalty_floor: None,
        }
    }

    pub fn name(&self) -> &str {
        self.event.name()
    }

    pub fn validate(&self, model: &WorldModel) -> Result<()> {
        let p = announcement_probability(model, self)?;
        if p < self.min_probability || p >= 1.0 {
            return Err(Error::Validation(vec![format!(
                "announcement `{}` has baseline probability {p}; need {} <= P(A|not X) < 1",
                self.name(),
                self.min_probability
            )]));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub enum Conditioning {
    #[default]
    None,
    Output(MessageChannel),
    Announce(AnnouncementEvent),
}

impl Conditioning {
    pub fn tag(&self) -> String {
        match self {
            Conditioning::None => "none".into(),
            Conditioning::Output(c) => format!("output:{}", c.name),
            Conditioning::Announce(a) => format!("announce:{}", a.name()),
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        match self {
            Conditioning::Output(_) => vec![OUTPUT_WARNING.to_string()],
            _ => Vec::new(),
        }
    }
}

/// The configured measure on `dx`, `dnx` after conditioning both on the
/// event. Output conditioning averages the per-message penalty over the
/// messages emitted under `dx`.
pub fn conditioned_between(
    cfg: &PenaltyConfig,
    ctx: &MeasureContext,
    cond: &Conditioning,
    agent: usize,
    dx: &TrajectoryDistribution,
    dnx: &TrajectoryDistribution,
) -> Result<Penalty> {
    match cond {
        Conditioning::None => evaluate_measure(cfg, ctx, agent, dx, dnx),
        Conditioning::Announce(a) => evaluate_measure(
            cfg,
            ctx,
            agent,
            &dx.condition(&a.event)?,
            &dnx.condition(&a.event)?,
        ),
        Conditioning::Output(channel) => {
            let messages: BTreeSet<i64> =
                dx.entries().iter().map(|(t, _)| channel.term.eval(t)).collect();
            let mut total = 0.0;
            for o in messages {
                let event = channel.event(o);
                let weight = dx.probability(&event);
                let r = evaluate_measure(
                    cfg,
                    ctx,
                    agent,
                    &dx.condition(&event)?,
                    &dnx.condition(&event)?,
                )?;
                if r.is_unbounded() {
                    return Ok(Penalty::Unbounded);
                }
                total += weight * r.value();
            }
            Ok(Penalty::Finite(total))
        }
    }
}

pub fn conditioned_penalty(
    cfg: &PenaltyConfig,
    ctx: &MeasureContext,
    cond: &Conditioning,
    model: &WorldModel,
    policies: &Policies,
    agent: usize,
) -> Result<Penalty> {
    let (dx, dnx) = propagate_pair(model, policies, agent)?;
    conditioned_between(cfg, ctx, cond, agent, &dx, &dnx)
}

/// Exact `P(A | not X)` with every agent inactive.
pub fn announcement_probability(model: &WorldModel, event: &AnnouncementEvent) -> Result<f64> {
    let n = model.n_agents();
    let baseline = propagate(model, &Policies::new(n), &Activation::all(n, Branch::Inactive))?;
    Ok(baseline.probability(&event.event))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpReport {
    pub pa_given_x: f64,
    pub pa_given_notx: f64,
    /// `pa_given_x / pa_given_notx`.
    pub ratio: f64,
}

pub fn probability_pump_report(
    model: &WorldModel,
    policies: &Policies,
    agent: usize,
    event: &AnnouncementEvent,
) -> Result<PumpReport> {
    let (dx, dnx) = propagate_pair(model, policies, agent)?;
    let (px, pnx) = (dx.probability(&event.event), dnx.probability(&event.event));
    Ok(PumpReport {
        pa_given_x: px,
        pa_given_notx: pnx,
        ratio: if pnx > 0.0 { px / pnx } else { f64::INFINITY },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Predicate;
    use crate::policy::Policy;
    use crate::variables::{Variable, VariableSpec};
    use crate::worldmodel::{Baseline, ModelBuilder};

    /// One step: the agent emits one of four messages; the baseline picks
    /// uniformly, the null action defers to it.
    fn channel_model() -> WorldModel {
        let mut b = ModelBuilder::new(1);
        b.component("msg");
        let start = b.state("start", &[-1]);
        let ends: Vec<usize> = (0..4).map(|i| b.state(&format!("m{i}"), &[i])).collect();
        let ai = b.agent("ai", &["defer", "m0", "m1", "m2", "m3"], "defer");
        b.baseline(ai, Baseline::Random((1..=4).map(|a| (a, 0.25)).collect()));
        for (i, &e) in ends.iter().enumerate() {
            b.transition(start, &[Some(i + 1)], &[(e, 1.0)]);
        }
        let uniform: Vec<(usize, f64)> = ends.iter().map(|&e| (e, 0.25)).collect();
        b.transition(start, &[Some(0)], &uniform);
        b.build()
    }

    fn setup() -> (WorldModel, MeasureContext, MessageChannel) {
        let m = channel_model();
        let term = Term::parse(&m, "state:msg@end").unwrap();
        let vars = VariableSpec::new(vec![Variable::from_term("msg", "state:msg@end", term.clone())]).unwrap();
        let channel = MessageChannel {
            name: "out".into(),
            agent: 0,
            term,
            alphabet: vec![0, 1, 2, 3],
        };
        (m, MeasureContext::new(vars), channel)
    }

    #[test]
    fn output_conditioning_hides_the_message() {
        let (m, ctx, channel) = setup();
        channel.validate(&m).unwrap();
        let linf = PenaltyConfig::parse("coarse:linf").unwrap();
        let say2 = Policies::new(1).with(Policy::constant(&m, 0, 3));
        let raw = conditioned_penalty(&linf, &ctx, &Conditioning::None, &m, &say2, 0).unwrap();
        assert!((raw.value() - 0.75).abs() < 1e-12);
        let cond = Conditioning::Output(channel);
        let hidden = conditioned_penalty(&linf, &ctx, &cond, &m, &say2, 0).unwrap();
        assert_eq!(hidden.value(), 0.0);
        assert_eq!(cond.warnings().len(), 1);
    }

    #[test]
    fn sure_announcement_changes_nothing() {
        let (m, ctx, _) = setup();
        let linf = PenaltyConfig::parse("coarse:linf").unwrap();
        let say1 = Policies::new(1).with(Policy::constant(&m, 0, 2));
        let raw = conditioned_penalty(&linf, &ctx, &Conditioning::None, &m, &say1, 0).unwrap();
        let sure = Conditioning::Announce(AnnouncementEvent::new(EventPredicate::sure()));
        let cond = conditioned_penalty(&linf, &ctx, &sure, &m, &say1, 0).unwrap();
        assert!((raw.value() - cond.value()).abs() < 1e-12);
    }

    #[test]
    fn impossible_announcement_is_reported() {
        let (m, ctx, _) = setup();
        let never = Predicate::parse(&m, "state:msg@end == 9").unwrap();
        let a = AnnouncementEvent::new(EventPredicate::new("never", Arc::new(move |t| never.holds(t))));
        assert_eq!(announcement_probability(&m, &a).unwrap(), 0.0);
        assert!(a.validate(&m).is_err());
        let linf = PenaltyConfig::parse("coarse:linf").unwrap();
        let p = Policies::new(1).with(Policy::constant(&m, 0, 1));
        let err = conditioned_penalty(&linf, &ctx, &Conditioning::Announce(a), &m, &p, 0).unwrap_err();
        assert!(err.is_zero_probability());
    }

    #[test]
    fn pump_ratios() {
        let (m, _, _) = setup();
        let hit = Predicate::parse(&m, "state:msg@end == 2").unwrap();
        let a = AnnouncementEvent::new(EventPredicate::new("hit", Arc::new(move |t| hit.holds(t))));
        assert_eq!(announcement_probability(&m, &a).unwrap(), 0.25);
        let pump = |action| {
            let p = Policies::new(1).with(Policy::constant(&m, 0, action));
            probability_pump_report(&m, &p, 0, &a).unwrap()
        };
        let best = pump(3);
        assert_eq!((best.pa_given_x, best.pa_given_notx, best.ratio), (1.0, 0.25, 4.0));
        assert_eq!(pump(0).ratio, 1.0);
        assert_eq!(pump(1).ratio, 0.0);
    }
}
