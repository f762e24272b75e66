//! Information-based penalties: how much knowing the activation outcome
//! changes expected utilities, and how detectable it is from a visible slice
//! of the future.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use itertools::Itertools;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distribution::{propagate_pair, EventPredicate, TrajectoryDistribution};
use crate::error::{Error, Result};
use crate::expr::{Predicate, Term};
use crate::variables::{Variable, VariableSpec};
use crate::worldmodel::{Policies, Trajectory, WorldModel};

pub const DEFAULT_CONJUNCTION_SIZE: usize = 2;
pub const DEFAULT_THRESHOLD: f64 = 10.0;
pub const DEFAULT_SAMPLES: usize = 10_000;
const MAX_FACTS: usize = 64;
const FACTORIZATION_TOLERANCE: f64 = 1e-9;

pub type UtilityFn = Arc<dyn Fn(&Trajectory) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Utility {
    name: String,
    f: UtilityFn,
    reads_activation: bool,
}

impl fmt::Debug for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Utility({})", self.name)
    }
}

impl Utility {
    pub fn new(name: &str, f: UtilityFn) -> Self {
        Utility {
            name: name.to_string(),
            f,
            reads_activation: false,
        }
    }

    pub fn constant(name: &str, c: f64) -> Self {
        Utility::new(name, Arc::new(move |_| c))
    }

    /// 1 where `pred` holds, 0 elsewhere.
    pub fn indicator(name: &str, pred: Predicate) -> Self {
        let reads = pred.reads_activation();
        Utility {
            reads_activation: reads,
            ..Utility::new(name, Arc::new(move |t| pred.holds(t) as u8 as f64))
        }
    }

    /// `offset + scale * term`.
    pub fn linear(name: &str, term: Term, scale: f64, offset: f64) -> Self {
        let reads = term.reads_activation();
        Utility {
            reads_activation: reads,
            ..Utility::new(name, Arc::new(move |t| offset + scale * term.eval(t) as f64))
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, traj: &Trajectory) -> f64 {
        (self.f)(traj)
    }

    pub fn reads_activation(&self) -> bool {
        self.reads_activation
    }

    /// Fails with `UnboundedUtility` if the utility leaves [0, 1] anywhere
    /// on the support of `dist`.
    pub fn check_bounded(&self, dist: &TrajectoryDistribution) -> Result<()> {
        for (t, _) in dist.entries() {
            let v = self.eval(t);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::UnboundedUtility {
                    name: self.name.clone(),
                    value: v,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct UtilitySet {
    utilities: Vec<Utility>,
}

impl UtilitySet {
    pub fn new(utilities: Vec<Utility>) -> Result<Self> {
        if let Some(u) = utilities.iter().find(|u| u.reads_activation) {
            return Err(Error::InvalidConfig(format!(
                "utility `{}` reads an activation flag directly",
                u.name
            )));
        }
        Ok(UtilitySet { utilities })
    }

    pub fn utilities(&self) -> &[Utility] {
        &self.utilities
    }

    pub fn len(&self) -> usize {
        self.utilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utilities.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct FactSet {
    facts: Vec<EventPredicate>,
    k: usize,
}

impl Default for FactSet {
    fn default() -> Self {
        FactSet {
            facts: Vec::new(),
            k: DEFAULT_CONJUNCTION_SIZE,
        }
    }
}

impl FactSet {
    pub fn new(facts: Vec<EventPredicate>, k: usize) -> Result<Self> {
        if facts.len() > MAX_FACTS {
            return Err(Error::InvalidConfig(format!(
                "at most {MAX_FACTS} facts are supported, got {}",
                facts.len()
            )));
        }
        Ok(FactSet { facts, k })
    }

    pub fn facts(&self) -> &[EventPredicate] {
        &self.facts
    }

    pub fn max_conjunction(&self) -> usize {
        self.k
    }

    /// Bitmask of the facts every conjunction of up to `k` facts uses,
    /// starting with the empty conjunction.
    pub fn conjunctions(&self) -> Vec<u64> {
        let mut out = vec![0u64];
        for size in 1..=self.k.min(self.facts.len()) {
            for combo in (0..self.facts.len()).combinations(size) {
                out.push(combo.iter().fold(0u64, |m, &i| m | (1 << i)));
            }
        }
        out
    }
}

struct Side {
    probs: Vec<f64>,
    masks: Vec<u64>,
    /// `values[u][trajectory]`
    values: Vec<Vec<f64>>,
}

impl Side {
    fn new(dist: &TrajectoryDistribution, uset: &UtilitySet, fset: &FactSet) -> Self {
        let entries = dist.entries();
        Side {
            probs: entries.iter().map(|(_, p)| *p).collect(),
            masks: entries
                .iter()
                .map(|(t, _)| {
                    fset.facts
                        .iter()
                        .enumerate()
                        .filter(|(_, f)| f.holds(t))
                        .fold(0u64, |m, (i, _)| m | (1 << i))
                })
                .collect(),
            values: uset
                .utilities
                .iter()
                .map(|u| entries.iter().map(|(t, _)| u.eval(t)).collect())
                .collect(),
        }
    }

    /// `(P(S), E[u | S] for each u)`, or `None` when `P(S) = 0`.
    fn conditional(&self, conj: u64) -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..self.probs.len())
            .filter(|&i| self.masks[i] & conj == conj)
            .collect();
        let mass: f64 = idx.iter().map(|&i| self.probs[i]).sum();
        if mass <= 0.0 {
            return None;
        }
        Some(
            self.values
                .iter()
                .map(|v| idx.iter().map(|&i| self.probs[i] * v[i]).sum::<f64>() / mass)
                .collect(),
        )
    }
}

/// Largest gap `|E(u | S, X) - E(u | S, not X)|` over utilities `u` and fact
/// conjunctions `S` of at most `k` facts. Conjunctions impossible on either
/// side are skipped.
pub fn importance_between(
    dx: &TrajectoryDistribution,
    dnx: &TrajectoryDistribution,
    uset: &UtilitySet,
    fset: &FactSet,
) -> Result<f64> {
    if uset.is_empty() {
        return Err(Error::EmptyUtilitySet);
    }
    let (x, nx) = (Side::new(dx, uset, fset), Side::new(dnx, uset, fset));
    let mut best = 0.0f64;
    for conj in fset.conjunctions() {
        let (Some(ex), Some(enx)) = (x.conditional(conj), nx.conditional(conj)) else {
            continue;
        };
        for (a, b) in ex.iter().zip(&enx) {
            best = best.max((a - b).abs());
        }
    }
    Ok(best)
}

pub fn importance_penalty(
    model: &WorldModel,
    policies: &Policies,
    agent: usize,
    uset: &UtilitySet,
    fset: &FactSet,
) -> Result<f64> {
    let (dx, dnx) = propagate_pair(model, policies, agent)?;
    importance_between(&dx, &dnx, uset, fset)
}

/// Settings of the likelihood-ratio detectability estimate.
#[derive(Debug, Clone)]
pub struct DetectionConfig {
    /// Ascending fractions of the slice that are revealed.
    pub grid: Vec<f64>,
    pub threshold: f64,
    pub samples: usize,
    pub seed: u64,
    /// Visible positions of the future; each is one variable.
    pub slice: Vec<Variable>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            grid: default_grid(),
            threshold: DEFAULT_THRESHOLD,
            samples: DEFAULT_SAMPLES,
            seed: 0,
            slice: Vec::new(),
        }
    }
}

pub fn default_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 20.0).collect()
}

impl DetectionConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let ascending = self.grid.windows(2).all(|w| w[0] < w[1]);
        let in_range = self.grid.iter().all(|&r| r > 0.0 && r <= 1.0);
        if self.grid.is_empty() || !ascending || !in_range {
            return Err(Error::InvalidConfig(
                "detection grid must be non-empty, ascending and within (0, 1]".into(),
            ));
        }
        if !(self.threshold > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "detection threshold must exceed 1, got {}",
                self.threshold
            )));
        }
        if self.samples == 0 {
            return Err(Error::InvalidConfig("detection needs at least one sample".into()));
        }
        Ok(())
    }

    /// Number of revealed positions at fraction `rho` of an `n`-position slice.
    pub fn visible(rho: f64, n: usize) -> usize {
        ((rho * n as f64).round() as usize).clamp(1, n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoEstimate {
    pub rho: f64,
    pub visible: usize,
    /// Mean of `P(g|X) / P(g|not X)`.
    pub forward: f64,
    /// Mean of `P(g|not X) / P(g|X)`.
    pub backward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// First grid fraction at which either ratio exceeds the threshold;
    /// `None` means undetectable.
    pub detection_rho: Option<f64>,
    pub penalty: f64,
    pub estimates: Vec<RhoEstimate>,
}

impl DetectionResult {
    fn undetectable() -> Self {
        DetectionResult {
            detection_rho: None,
            penalty: 0.0,
            estimates: Vec::new(),
        }
    }
}

type Cells = Vec<(Vec<i64>, f64)>;
type Lookup = HashMap<Vec<i64>, f64>;

/// Per-position marginals if `cells` is exactly their product.
fn factorize(cells: &Cells, n: usize) -> Option<Vec<BTreeMap<i64, f64>>> {
    let mut marg = vec![BTreeMap::new(); n];
    for (v, p) in cells {
        for (j, x) in v.iter().enumerate() {
            *marg[j].entry(*x).or_insert(0.0) += p;
        }
    }
    let product: usize = marg.iter().map(BTreeMap::len).product();
    if product != cells.len() {
        return None;
    }
    for (v, p) in cells {
        let q: f64 = v.iter().enumerate().map(|(j, x)| marg[j][x]).product();
        if (p - q).abs() > FACTORIZATION_TOLERANCE * p {
            return None;
        }
    }
    Some(marg)
}

enum SliceModel {
    Product {
        x: Vec<BTreeMap<i64, f64>>,
        nx: Vec<BTreeMap<i64, f64>>,
    },
    Joint {
        x: Cells,
        nx: Cells,
    },
}

fn restrict(cells: &Cells, mask: &[usize]) -> HashMap<Vec<i64>, f64> {
    let mut out = HashMap::new();
    for (v, p) in cells {
        *out.entry(mask.iter().map(|&j| v[j]).collect()).or_insert(0.0) += p;
    }
    out
}

impl SliceModel {
    fn estimate(
        &self,
        x_cells: &Cells,
        sampler: &WeightedIndex<f64>,
        n: usize,
        m: usize,
        samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> (f64, f64) {
        let mut cache: HashMap<Vec<usize>, (Lookup, Lookup)> = HashMap::new();
        let (mut fwd, mut bwd) = (0.0, 0.0);
        for _ in 0..samples {
            let g = &x_cells[sampler.sample(rng)].0;
            let mut mask = rand::seq::index::sample(rng, n, m).into_vec();
            mask.sort_unstable();
            let (px, pnx) = match self {
                SliceModel::Product { x, nx } => (
                    mask.iter().map(|&j| x[j][&g[j]]).product::<f64>(),
                    mask.iter()
                        .map(|&j| nx[j].get(&g[j]).copied().unwrap_or(0.0))
                        .product::<f64>(),
                ),
                SliceModel::Joint { x, nx } => {
                    let key: Vec<i64> = mask.iter().map(|&j| g[j]).collect();
                    let (mx, mnx) = cache
                        .entry(mask.clone())
                        .or_insert_with(|| (restrict(x, &mask), restrict(nx, &mask)));
                    (mx[&key], mnx.get(&key).copied().unwrap_or(0.0))
                }
            };
            fwd += if pnx > 0.0 { px / pnx } else { f64::INFINITY };
            bwd += pnx / px;
        }
        (fwd / samples as f64, bwd / samples as f64)
    }
}

/// Detectability of the activation outcome from the configured slice,
/// comparing two exact distributions.
pub fn detect_between(
    dx: &TrajectoryDistribution,
    dnx: &TrajectoryDistribution,
    cfg: &DetectionConfig,
) -> Result<DetectionResult> {
    cfg.validate()?;
    if cfg.slice.is_empty() {
        return Ok(DetectionResult::undetectable());
    }
    let spec = VariableSpec::new(cfg.slice.clone())?;
    let n = spec.len();
    let cells = |d: &TrajectoryDistribution| -> Result<Cells> {
        Ok(d.marginalize(&spec)?
            .cells()
            .iter()
            .map(|(v, p)| (v.0.clone(), *p))
            .collect())
    };
    let (x, nx) = (cells(dx)?, cells(dnx)?);
    let sampler = WeightedIndex::new(x.iter().map(|(_, p)| *p))
        .map_err(|e| Error::InvalidConfig(format!("cannot sample the slice: {e}")))?;
    let model = match (factorize(&x, n), factorize(&nx, n)) {
        (Some(fx), Some(fnx)) => SliceModel::Product { x: fx, nx: fnx },
        _ => SliceModel::Joint {
            x: x.clone(),
            nx: nx.clone(),
        },
    };
    let estimates: Vec<RhoEstimate> = cfg
        .grid
        .par_iter()
        .enumerate()
        .map(|(i, &rho)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let m = DetectionConfig::visible(rho, n);
            let (forward, backward) = model.estimate(&x, &sampler, n, m, cfg.samples, &mut rng);
            RhoEstimate {
                rho,
                visible: m,
                forward,
                backward,
            }
        })
        .collect();
    let detection_rho = estimates
        .iter()
        .find(|e| e.forward > cfg.threshold || e.backward > cfg.threshold)
        .map(|e| e.rho);
    Ok(DetectionResult {
        detection_rho,
        penalty: detection_rho.map_or(0.0, |r| 1.0 - r),
        estimates,
    })
}

pub fn detectability(
    model: &WorldModel,
    policies: &Policies,
    agent: usize,
    cfg: &DetectionConfig,
) -> Result<DetectionResult> {
    let (dx, dnx) = propagate_pair(model, policies, agent)?;
    detect_between(&dx, &dnx, cfg)
}
