//! Deterministic reactive policies: one action per (timestep, observation).

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::worldmodel::WorldModel;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Policy {
    agent: usize,
    n_obs: usize,
    /// Row-major by timestep: `table[t * n_obs + obs]`.
    table: Vec<u32>,
}

impl Policy {
    pub fn from_table(agent: usize, n_obs: usize, table: Vec<u32>) -> Self {
        assert!(n_obs > 0, "observation alphabet cannot be empty");
        assert!(table.len() % n_obs == 0, "table length must be a multiple of n_obs");
        Policy { agent, n_obs, table }
    }

    /// The policy that plays the agent's null action everywhere.
    pub fn null(model: &WorldModel, agent: usize) -> Result<Self> {
        let null = model.agents()[agent]
            .null_action
            .ok_or_else(|| Error::InvalidModel(model.issues()))?;
        Ok(Self::constant(model, agent, null))
    }

    pub fn constant(model: &WorldModel, agent: usize, action: usize) -> Self {
        let n_obs = model.observation_alphabet(agent).len();
        Policy {
            agent,
            n_obs,
            table: vec![action as u32; n_obs * model.horizon()],
        }
    }

    /// Open-loop policy: the same action for every observation at a step.
    pub fn open_loop(model: &WorldModel, agent: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != model.horizon() {
            return Err(Error::PolicyMismatch {
                agent: model.agents()[agent].name.clone(),
                reason: format!(
                    "expected {} steps, got {}",
                    model.horizon(),
                    actions.len()
                ),
            });
        }
        let n_obs = model.observation_alphabet(agent).len();
        let table = actions
            .iter()
            .flat_map(|&a| std::iter::repeat_n(a as u32, n_obs))
            .collect();
        Ok(Policy { agent, n_obs, table })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn horizon(&self) -> usize {
        self.table.len() / self.n_obs
    }

    pub fn table(&self) -> &[u32] {
        &self.table
    }

    pub fn action(&self, t: usize, obs: usize) -> usize {
        self.table[t * self.n_obs + obs] as usize
    }

    pub(crate) fn table_mut(&mut self) -> &mut [u32] {
        &mut self.table
    }

    pub fn check(&self, model: &WorldModel) -> Result<()> {
        let agent = model.agents().get(self.agent).ok_or_else(|| Error::PolicyMismatch {
            agent: format!("#{}", self.agent),
            reason: "no such agent".into(),
        })?;
        let mismatch = |reason: String| Error::PolicyMismatch {
            agent: agent.name.clone(),
            reason,
        };
        if self.n_obs != model.observation_alphabet(self.agent).len() {
            return Err(mismatch(format!(
                "observation alphabet has {} symbols, policy has {}",
                model.observation_alphabet(self.agent).len(),
                self.n_obs
            )));
        }
        if self.horizon() != model.horizon() {
            return Err(mismatch(format!(
                "horizon {} vs policy {}",
                model.horizon(),
                self.horizon()
            )));
        }
        if let Some(bad) = self.table.iter().find(|&&a| a as usize >= agent.actions.len()) {
            return Err(mismatch(format!("action index {bad} out of range")));
        }
        Ok(())
    }

    /// Canonical text form; the policy id hashes this.
    pub fn canonical(&self) -> String {
        let mut s = format!("agent={};obs={};table=", self.agent, self.n_obs);
        for (i, a) in self.table.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{a}");
        }
        s
    }

    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let mut id = String::from("p");
        for byte in digest.iter().take(8) {
            let _ = write!(id, "{byte:02x}");
        }
        id
    }

    /// Human-readable rendering using action and observation names.
    pub fn describe(&self, model: &WorldModel) -> String {
        let actions = &model.agents()[self.agent].actions;
        let alphabet = model.observation_alphabet(self.agent);
        let mut parts = Vec::new();
        for t in 0..self.horizon() {
            if self.n_obs == 1 {
                parts.push(format!("t{t}:{}", actions[self.action(t, 0)]));
            } else {
                for (o, sym) in alphabet.iter().enumerate() {
                    parts.push(format!("t{t}{sym:?}:{}", actions[self.action(t, o)]));
                }
            }
        }
        parts.join(" ")
    }
}

/// The full deterministic policy space of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicySpace {
    pub agent: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    pub horizon: usize,
}

impl PolicySpace {
    pub fn of(model: &WorldModel, agent: usize) -> Self {
        PolicySpace {
            agent,
            n_obs: model.observation_alphabet(agent).len(),
            n_actions: model.agents()[agent].actions.len(),
            horizon: model.horizon(),
        }
    }

    pub fn entries(&self) -> usize {
        self.n_obs * self.horizon
    }

    /// Number of policies, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        let mut size: u128 = 1;
        for _ in 0..self.entries() {
            size = size.saturating_mul(self.n_actions as u128);
        }
        size
    }

    /// All policies in lexicographic table order. Only sensible when
    /// `size()` is small.
    pub fn iter(&self) -> impl Iterator<Item = Policy> + '_ {
        let entries = self.entries();
        let mut next = Some(vec![0u32; entries]);
        std::iter::from_fn(move || {
            let current = next.take()?;
            let mut succ = current.clone();
            let mut i = entries;
            let mut carried = true;
            while carried && i > 0 {
                i -= 1;
                succ[i] += 1;
                if (succ[i] as usize) < self.n_actions {
                    carried = false;
                } else {
                    succ[i] = 0;
                }
            }
            if !carried {
                next = Some(succ);
            }
            Some(Policy::from_table(self.agent, self.n_obs, current))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_iterates_every_table_once() {
        let space = PolicySpace {
            agent: 0,
            n_obs: 2,
            n_actions: 3,
            horizon: 2,
        };
        let all: Vec<_> = space.iter().collect();
        assert_eq!(all.len() as u128, space.size());
        assert_eq!(all.len(), 81);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 81);
        assert_eq!(all[0].table(), &[0, 0, 0, 0]);
        assert_eq!(all[80].table(), &[2, 2, 2, 2]);
    }

    #[test]
    fn ids_are_stable_and_distinct() {
        let a = Policy::from_table(0, 1, vec![0, 1]);
        let b = Policy::from_table(0, 1, vec![1, 0]);
        assert_eq!(a.id(), a.clone().id());
        assert_ne!(a.id(), b.id());
        assert_eq!(a.id().len(), 17);
    }

    #[test]
    fn size_saturates() {
        let space = PolicySpace {
            agent: 0,
            n_obs: 64,
            n_actions: 1000,
            horizon: 6,
        };
        assert_eq!(space.size(), u128::MAX);
    }
}
