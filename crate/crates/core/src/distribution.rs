//! Exact trajectory distributions and the seeded sampler.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::variables::{VariableSpec, WorldMarginal};
use crate::worldmodel::{
    activation_combos, check_policies, enumerate_trajectories, step_choices, Activation,
    Branch, Policies, Trajectory, WorldModel, DEFAULT_TRAJECTORY_CAP,
};

pub type EventFn = Arc<dyn Fn(&Trajectory) -> bool + Send + Sync>;

/// A named, pure predicate over trajectories.
#[derive(Clone)]
pub struct EventPredicate {
    name: String,
    f: EventFn,
}

impl fmt::Debug for EventPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EventPredicate({})", self.name)
    }
}

impl EventPredicate {
    pub fn new(name: &str, f: EventFn) -> Self {
        EventPredicate {
            name: name.to_string(),
            f,
        }
    }

    pub fn sure() -> Self {
        EventPredicate::new("true", Arc::new(|_| true))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn holds(&self, traj: &Trajectory) -> bool {
        (self.f)(traj)
    }

    pub fn and(&self, other: &EventPredicate) -> Self {
        let (a, b) = (self.f.clone(), other.f.clone());
        EventPredicate::new(
            &format!("({}) && ({})", self.name, other.name),
            Arc::new(move |t| a(t) && b(t)),
        )
    }

    pub fn not(&self) -> Self {
        let a = self.f.clone();
        EventPredicate::new(&format!("!({})", self.name), Arc::new(move |t| !a(t)))
    }
}

/// A sparse probability map over trajectories, sorted by trajectory.
///
/// Clones share the marginal cache; every operation that changes the
/// entries starts a fresh one.
#[derive(Clone)]
pub struct TrajectoryDistribution {
    entries: Vec<(Trajectory, f64)>,
    provenance: Vec<String>,
    marginals: Arc<Mutex<HashMap<String, Arc<WorldMarginal>>>>,
}

impl fmt::Debug for TrajectoryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrajectoryDistribution")
            .field("support", &self.entries.len())
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl PartialEq for TrajectoryDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl TrajectoryDistribution {
    /// Entries need not be sorted; zero-probability entries are dropped and
    /// duplicates summed.
    pub fn from_entries(mut entries: Vec<(Trajectory, f64)>, provenance: Vec<String>) -> Self {
        entries.retain(|(_, p)| *p > 0.0);
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        entries.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        TrajectoryDistribution {
            entries,
            provenance,
            marginals: Arc::default(),
        }
    }

    pub fn entries(&self) -> &[(Trajectory, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn get(&self, traj: &Trajectory) -> f64 {
        self.entries
            .binary_search_by(|(t, _)| t.cmp(traj))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn probability(&self, event: &EventPredicate) -> f64 {
        self.entries
            .iter()
            .filter(|(t, _)| event.holds(t))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn expectation(&self, f: impl Fn(&Trajectory) -> f64) -> f64 {
        self.entries.iter().map(|(t, p)| p * f(t)).sum()
    }

    /// Bayes conditioning on `event`.
    pub fn condition(&self, event: &EventPredicate) -> Result<Self> {
        let kept: Vec<(Trajectory, f64)> = self
            .entries
            .iter()
            .filter(|(t, _)| event.holds(t))
            .cloned()
            .collect();
        let mass: f64 = kept.iter().map(|(_, p)| p).sum();
        if mass <= 0.0 {
            return Err(Error::ZeroProbabilityEvent(event.name().to_string()));
        }
        let mut provenance = self.provenance.clone();
        provenance.push(event.name().to_string());
        if kept.len() == self.entries.len() {
            // Full support: nothing to renormalize.
            return Ok(TrajectoryDistribution {
                entries: kept,
                provenance,
                marginals: self.marginals.clone(),
            });
        }
        Ok(TrajectoryDistribution {
            entries: kept.into_iter().map(|(t, p)| (t, p / mass)).collect(),
            provenance,
            marginals: Arc::default(),
        })
    }

    /// Pushforward onto the world vectors of `vars`; memoized per spec.
    pub fn marginalize(&self, vars: &VariableSpec) -> Result<Arc<WorldMarginal>> {
        if let Some(m) = self.marginals.lock().expect("cache lock").get(vars.key()) {
            return Ok(m.clone());
        }
        let mut cells = BTreeMap::new();
        for (t, p) in &self.entries {
            *cells.entry(vars.evaluate(t)?).or_insert(0.0) += p;
        }
        let m = Arc::new(WorldMarginal::new(vars.key(), vars.names(), cells));
        self.marginals
            .lock()
            .expect("cache lock")
            .insert(vars.key().to_string(), m.clone());
        Ok(m)
    }
}

/// Exact distribution under `activation`, with the default trajectory cap.
pub fn propagate(
    model: &WorldModel,
    policies: &Policies,
    activation: &Activation,
) -> Result<TrajectoryDistribution> {
    propagate_with_cap(model, policies, activation, DEFAULT_TRAJECTORY_CAP)
}

pub fn propagate_with_cap(
    model: &WorldModel,
    policies: &Policies,
    activation: &Activation,
    cap: usize,
) -> Result<TrajectoryDistribution> {
    let entries = enumerate_trajectories(model, policies, activation, cap)?;
    let tag = activation.tag(model);
    let provenance = if tag.is_empty() { Vec::new() } else { vec![tag] };
    Ok(TrajectoryDistribution {
        entries,
        provenance,
        marginals: Arc::default(),
    })
}

/// `(P(.|X), P(.|not X))` for `agent`, other agents left random.
pub fn propagate_pair(
    model: &WorldModel,
    policies: &Policies,
    agent: usize,
) -> Result<(TrajectoryDistribution, TrajectoryDistribution)> {
    let n = model.n_agents();
    Ok((
        propagate(model, policies, &Activation::only(n, agent, Branch::Active))?,
        propagate(model, policies, &Activation::only(n, agent, Branch::Inactive))?,
    ))
}

/// Seeded i.i.d. draws; the bounded-resource counterpart of [`propagate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub seed: u64,
    pub count: usize,
    /// Distinct trajectories with their multiplicities, sorted.
    pub draws: Vec<(Trajectory, usize)>,
}

impl SampleSet {
    pub fn frequency(&self, traj: &Trajectory) -> f64 {
        self.draws
            .binary_search_by(|(t, _)| t.cmp(traj))
            .map(|i| self.draws[i].1 as f64 / self.count as f64)
            .unwrap_or(0.0)
    }

    pub fn empirical(&self) -> TrajectoryDistribution {
        TrajectoryDistribution::from_entries(
            self.draws
                .iter()
                .map(|(t, n)| (t.clone(), *n as f64 / self.count as f64))
                .collect(),
            vec![format!("sample(seed={})", self.seed)],
        )
    }

    /// Total variation distance to an exact distribution.
    pub fn total_variation(&self, exact: &TrajectoryDistribution) -> f64 {
        let emp = self.empirical();
        let mut diff = 0.0;
        for (t, p) in exact.entries() {
            diff += (p - emp.get(t)).abs();
        }
        for (t, q) in emp.entries() {
            if exact.get(t) == 0.0 {
                diff += q;
            }
        }
        diff / 2.0
    }
}

fn draw(rng: &mut ChaCha8Rng, weights: &[(usize, f64)]) -> (usize, f64) {
    if weights.len() == 1 {
        return weights[0];
    }
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &w in weights {
        if u < w.1 {
            return w;
        }
        u -= w.1;
    }
    *weights.last().expect("non-empty weights")
}

pub fn sample(
    model: &WorldModel,
    policies: &Policies,
    activation: &Activation,
    count: usize,
    seed: u64,
) -> Result<SampleSet> {
    let kernel = model.kernel()?;
    check_policies(model, policies, activation)?;
    if count == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let combos: Vec<(usize, f64)> = activation_combos(model, activation)
        .iter()
        .enumerate()
        .map(|(i, (_, w))| (i, *w))
        .collect();
    let flag_sets: Vec<Vec<bool>> = activation_combos(model, activation)
        .into_iter()
        .map(|(f, _)| f)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<Trajectory, usize> = BTreeMap::new();
    for _ in 0..count {
        let flags = flag_sets[draw(&mut rng, &combos).0].clone();
        let mut state = model.initial();
        let mut states = vec![state as u32];
        let mut actions = Vec::with_capacity(model.horizon() * model.n_agents());
        for t in 0..model.horizon() {
            let choices = step_choices(model, kernel, policies, &flags, t, state);
            let mut joint = 0;
            for (i, c) in choices.iter().enumerate() {
                let (a, _) = draw(&mut rng, c);
                actions.push(a as u32);
                joint += a * kernel.strides[i];
            }
            let row = kernel.row(state, joint);
            let k = if row.next.len() == 1 {
                0
            } else {
                row.pick(rng.random::<f64>())
            };
            state = row.next[k] as usize;
            states.push(state as u32);
        }
        *counts
            .entry(Trajectory {
                active: flags,
                states,
                actions,
            })
            .or_insert(0) += 1;
    }
    Ok(SampleSet {
        seed,
        count,
        draws: counts.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Policy;
    use crate::variables::Variable;
    use crate::worldmodel::ModelBuilder;
    use proptest::prelude::*;

    fn coin(p: f64) -> WorldModel {
        let mut b = ModelBuilder::new(1);
        b.component("v");
        let s0 = b.state("s0", &[0]);
        let s1 = b.state("s1", &[1]);
        let s2 = b.state("s2", &[2]);
        b.agent("ai", &["noop", "go"], "noop");
        b.transition(s0, &[Some(1)], &[(s2, 1.0)]);
        b.transition(s0, &[None], &[(s0, p), (s1, 1.0 - p)]);
        b.build()
    }

    fn constant(model: &WorldModel, a: usize) -> Policies {
        Policies::new(1).with(Policy::constant(model, 0, a))
    }

    fn last_is(v: u32) -> EventPredicate {
        EventPredicate::new(&format!("last={v}"), Arc::new(move |t| t.final_state() == v as usize))
    }

    #[test]
    fn null_policy_matches_baseline() {
        let m = coin(0.3);
        let p = constant(&m, 0);
        let x = propagate(&m, &p, &Activation::all(1, Branch::Active)).unwrap();
        let nx = propagate(&m, &p, &Activation::all(1, Branch::Inactive)).unwrap();
        assert_eq!(x.len(), nx.len());
        for ((a, p), (b, q)) in x.entries().iter().zip(nx.entries()) {
            assert_eq!(a.states, b.states);
            assert_eq!(p, q);
        }
    }

    #[test]
    fn conditioning_on_sure_event_is_identity() {
        let m = coin(0.3);
        let d = propagate(&m, &constant(&m, 0), &Activation::all(1, Branch::Either)).unwrap();
        assert_eq!(d.condition(&EventPredicate::sure()).unwrap(), d);
    }

    #[test]
    fn zero_mass_event_is_an_error() {
        let m = coin(0.3);
        let d = propagate(&m, &constant(&m, 0), &Activation::all(1, Branch::Active)).unwrap();
        assert!(matches!(
            d.condition(&last_is(2)),
            Err(Error::ZeroProbabilityEvent(_))
        ));
    }

    #[test]
    fn constant_variable_gives_point_mass() {
        let m = coin(0.3);
        let d = propagate(&m, &constant(&m, 0), &Activation::all(1, Branch::Either)).unwrap();
        let spec = VariableSpec::new(vec![Variable::new("c", "c", Arc::new(|_| Some(7)))]).unwrap();
        let marg = d.marginalize(&spec).unwrap();
        assert_eq!(marg.cells().len(), 1);
        assert!((marg.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marginals_are_memoized() {
        let m = coin(0.3);
        let d = propagate(&m, &constant(&m, 0), &Activation::all(1, Branch::Active)).unwrap();
        let spec = VariableSpec::new(vec![Variable::new(
            "s",
            "s",
            Arc::new(|t| Some(t.final_state() as i64)),
        )])
        .unwrap();
        let a = d.marginalize(&spec).unwrap();
        let b = d.marginalize(&spec).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn single_deterministic_draw() {
        let m = coin(0.3);
        let s = sample(&m, &constant(&m, 1), &Activation::all(1, Branch::Active), 1, 9).unwrap();
        assert_eq!(s.draws.len(), 1);
        assert_eq!(s.draws[0].0.states, vec![0, 2]);
    }

    #[test]
    fn same_seed_same_samples() {
        let m = coin(0.3);
        let p = constant(&m, 0);
        let a = sample(&m, &p, &Activation::all(1, Branch::Either), 500, 42).unwrap();
        let b = sample(&m, &p, &Activation::all(1, Branch::Either), 500, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn binary_branch_frequency() {
        // 99% two-sided binomial bound: 2.576 * sqrt(0.3 * 0.7 / 1e4) = 0.0118 < 0.02.
        let m = coin(0.3);
        let s = sample(&m, &constant(&m, 0), &Activation::all(1, Branch::Active), 10_000, 7)
            .unwrap();
        let stay = Trajectory {
            active: vec![true],
            states: vec![0, 0],
            actions: vec![0],
        };
        assert!((s.frequency(&stay) - 0.3).abs() < 0.02);
    }

    fn arbitrary_dist() -> impl Strategy<Value = TrajectoryDistribution> {
        prop::collection::vec(0.01f64..1.0, 1..12).prop_map(|w| {
            let total: f64 = w.iter().sum();
            TrajectoryDistribution::from_entries(
                w.iter()
                    .enumerate()
                    .map(|(i, p)| {
                        (
                            Trajectory {
                                active: vec![i % 2 == 0],
                                states: vec![0, i as u32],
                                actions: vec![0],
                            },
                            p / total,
                        )
                    })
                    .collect(),
                Vec::new(),
            )
        })
    }

    fn mod_event(k: u32, r: u32) -> EventPredicate {
        EventPredicate::new(
            &format!("mod{k}={r}"),
            Arc::new(move |t| t.final_state() as u32 % k == r),
        )
    }

    proptest! {
        #[test]
        fn sequential_conditioning_equals_conjunction(d in arbitrary_dist(), k1 in 2u32..4, k2 in 2u32..4) {
            let (e1, e2) = (mod_event(k1, 0), mod_event(k2, 1));
            if let (Ok(a), Ok(b)) = (
                d.condition(&e1).and_then(|c| c.condition(&e2)),
                d.condition(&e1.and(&e2)),
            ) {
                prop_assert_eq!(a.len(), b.len());
                for ((t, p), (u, q)) in a.entries().iter().zip(b.entries()) {
                    prop_assert_eq!(t, u);
                    prop_assert!((p - q).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn law_of_total_probability(d in arbitrary_dist(), k in 2u32..4) {
            let e = mod_event(k, 0);
            let pe = d.probability(&e);
            prop_assume!(pe > 0.0 && pe < 1.0);
            let a = d.condition(&e).unwrap();
            let b = d.condition(&e.not()).unwrap();
            for (t, p) in d.entries() {
                let rebuilt = pe * a.get(t) + (1.0 - pe) * b.get(t);
                prop_assert!((rebuilt - p).abs() < 1e-12);
            }
        }

        #[test]
        fn marginal_mass_is_preserved(d in arbitrary_dist(), k in 1i64..5) {
            let spec = VariableSpec::new(vec![Variable::new(
                "m",
                &format!("m{k}"),
                Arc::new(move |t| Some(t.final_state() as i64 % k)),
            )]).unwrap();
            let m = d.marginalize(&spec).unwrap();
            prop_assert!((m.mass() - 1.0).abs() < 1e-9);
        }
    }
}
