//! Coarse-graining variables and the world vectors they induce.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Term;
use crate::worldmodel::Trajectory;

pub type VariableFn = Arc<dyn Fn(&Trajectory) -> Option<i64> + Send + Sync>;

/// A named integer-valued function of a trajectory, optionally binned.
///
/// With `edges` empty the bin is the raw value. Otherwise the bin is the
/// number of edges `<=` the value, so edges `[4.0]` split values into
/// `{< 4, >= 4}`.
#[derive(Clone)]
pub struct Variable {
    name: String,
    key: String,
    f: VariableFn,
    edges: Vec<f64>,
}

impl fmt::Debug for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Variable")
            .field("name", &self.name)
            .field("key", &self.key)
            .field("edges", &self.edges)
            .finish()
    }
}

impl Variable {
    /// `key` identifies the definition; two variables with equal keys must
    /// compute the same function.
    pub fn new(name: &str, key: &str, f: VariableFn) -> Self {
        Variable {
            name: name.to_string(),
            key: key.to_string(),
            f,
            edges: Vec::new(),
        }
    }

    pub fn from_term(name: &str, key: &str, term: Term) -> Self {
        Variable::new(name, key, Arc::new(move |t| Some(term.eval(t))))
    }

    pub fn with_edges(mut self, edges: Vec<f64>) -> Self {
        self.edges = edges;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn raw(&self, traj: &Trajectory) -> Option<i64> {
        (self.f)(traj)
    }

    pub fn bin(&self, traj: &Trajectory) -> Option<i64> {
        let v = (self.f)(traj)?;
        if self.edges.is_empty() {
            Some(v)
        } else {
            Some(self.edges.partition_point(|&e| e <= v as f64) as i64)
        }
    }

    fn spec_key(&self) -> String {
        format!("{}={}{:?}", self.name, self.key, self.edges)
    }
}

#[derive(Debug, Clone)]
pub struct VariableSpec {
    vars: Vec<Variable>,
    key: String,
}

impl VariableSpec {
    pub fn new(vars: Vec<Variable>) -> Result<Self> {
        if vars.is_empty() {
            return Err(Error::InvalidConfig(
                "a variable spec needs at least one variable".into(),
            ));
        }
        let key = vars
            .iter()
            .map(Variable::spec_key)
            .collect::<Vec<_>>()
            .join(";");
        Ok(VariableSpec { vars, key })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.iter().map(|v| v.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// The same spec with `extra` appended.
    pub fn extended(&self, extra: Variable) -> Self {
        let mut vars = self.vars.clone();
        vars.push(extra);
        VariableSpec::new(vars).expect("non-empty")
    }

    pub fn evaluate(&self, traj: &Trajectory) -> Result<WorldVector> {
        self.vars
            .iter()
            .map(|v| {
                v.bin(traj)
                    .ok_or_else(|| Error::UnevaluableVariable(v.name.clone()))
            })
            .collect::<Result<Vec<_>>>()
            .map(WorldVector)
    }
}

/// One cell of the coarse-graining: a bin index per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorldVector(pub Vec<i64>);

/// Pushforward of a trajectory distribution onto world vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldMarginal {
    key: String,
    names: Vec<String>,
    cells: BTreeMap<WorldVector, f64>,
}

impl WorldMarginal {
    pub fn new(key: &str, names: Vec<String>, cells: BTreeMap<WorldVector, f64>) -> Self {
        WorldMarginal {
            key: key.to_string(),
            names,
            cells,
        }
    }

    /// Builds a marginal from raw cell masses; zero cells are dropped and
    /// repeated cells are summed.
    pub fn from_cells(
        key: &str,
        names: Vec<String>,
        cells: impl IntoIterator<Item = (Vec<i64>, f64)>,
    ) -> Self {
        let mut map = BTreeMap::new();
        for (v, p) in cells {
            if p > 0.0 {
                *map.entry(WorldVector(v)).or_insert(0.0) += p;
            }
        }
        WorldMarginal::new(key, names, map)
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cells(&self) -> &BTreeMap<WorldVector, f64> {
        &self.cells
    }

    pub fn get(&self, v: &WorldVector) -> f64 {
        self.cells.get(v).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        self.cells.values().sum()
    }

    pub fn check_same_spec(&self, other: &WorldMarginal) -> Result<()> {
        if self.key != other.key {
            return Err(Error::SpecMismatch {
                left: self.names.join(","),
                right: other.names.join(","),
            });
        }
        Ok(())
    }

    /// Aligned probability pairs over the union of both supports, in cell order.
    pub fn aligned(&self, other: &WorldMarginal) -> Vec<(f64, f64)> {
        let mut keys: Vec<&WorldVector> = self.cells.keys().chain(other.cells.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|k| (self.get(k), other.get(k)))
            .collect()
    }

    /// Relabels cells through `f`, summing cells that collide.
    pub fn map_cells(&self, key: &str, f: impl Fn(&WorldVector) -> Vec<i64>) -> Self {
        WorldMarginal::from_cells(
            key,
            self.names.clone(),
            self.cells.iter().map(|(k, &p)| (f(k), p)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(state: u32) -> Trajectory {
        Trajectory {
            active: vec![true],
            states: vec![0, state],
            actions: vec![0],
        }
    }

    #[test]
    fn edges_bin_values() {
        let v = Variable::new("v", "last", Arc::new(|t| Some(t.final_state() as i64)))
            .with_edges(vec![2.0, 4.0]);
        let bins: Vec<i64> = (0..6).map(|s| v.bin(&traj(s)).unwrap()).collect();
        assert_eq!(bins, vec![0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn empty_spec_is_rejected() {
        assert!(VariableSpec::new(Vec::new()).is_err());
    }

    #[test]
    fn undefined_variable_is_reported() {
        let v = Variable::new("odd", "odd", Arc::new(|t| (t.final_state() % 2 == 1).then_some(1)));
        let spec = VariableSpec::new(vec![v]).unwrap();
        assert!(spec.evaluate(&traj(1)).is_ok());
        assert!(matches!(
            spec.evaluate(&traj(2)),
            Err(Error::UnevaluableVariable(n)) if n == "odd"
        ));
    }

    #[test]
    fn aligned_covers_union_of_supports() {
        let a = WorldMarginal::from_cells("k", vec!["v".into()], vec![(vec![0], 0.5), (vec![1], 0.5)]);
        let b = WorldMarginal::from_cells("k", vec!["v".into()], vec![(vec![1], 0.25), (vec![2], 0.75)]);
        assert_eq!(a.aligned(&b), vec![(0.5, 0.0), (0.5, 0.25), (0.0, 0.75)]);
    }
}
