//! Dense tabular value functions and visit counters.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::model::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// Action values over `(state, action)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    pub fn filled(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(contract(format!(
                "table of shape {num_states}x{num_actions} needs {} values, got {}",
                num_states * num_actions,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!("non-finite table entry {v}")));
        }
        Ok(Self { num_states, num_actions, values })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.values[s.0 * self.num_actions + a.0]
    }

    #[inline]
    pub fn set(&mut self, s: StateId, a: ActionId, v: f64) {
        self.values[s.0 * self.num_actions + a.0] = v;
    }

    #[inline]
    pub fn row(&self, s: StateId) -> &[f64] {
        let start = s.0 * self.num_actions;
        &self.values[start..start + self.num_actions]
    }

    /// `max_a Q(s, a)`.
    pub fn max_value(&self, s: StateId) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_index(&self, s: StateId, a: ActionId) -> Result<()> {
        if s.0 >= self.num_states || a.0 >= self.num_actions {
            return Err(contract(format!(
                "({s}, {a}) out of range for {}x{} table",
                self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    /// Sup-norm distance.
    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Entrywise mean of a non-empty slice of equally shaped tables.
    pub fn mean_of(tables: &[QTable]) -> QTable {
        let first = &tables[0];
        let mut out = QTable::zeros(first.num_states, first.num_actions);
        for t in tables {
            for (o, v) in out.values.iter_mut().zip(&t.values) {
                *o += v;
            }
        }
        let k = tables.len() as f64;
        out.values.iter_mut().for_each(|v| *v /= k);
        out
    }

    pub fn to_file(&self, config: serde_json::Value, seed: u64) -> TableFile {
        TableFile {
            shape: vec![self.num_states, self.num_actions],
            values: self.values.clone(),
            config,
            seed,
        }
    }
}

/// Action values over `(state, protagonist action, adversary action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointQTable {
    num_states: usize,
    num_actions_p: usize,
    num_actions_a: usize,
    values: Vec<f64>,
}

impl JointQTable {
    pub fn zeros(num_states: usize, num_actions_p: usize, num_actions_a: usize) -> Self {
        Self {
            num_states,
            num_actions_p,
            num_actions_a,
            values: vec![0.0; num_states * num_actions_p * num_actions_a],
        }
    }

    pub fn from_values(
        num_states: usize,
        num_actions_p: usize,
        num_actions_a: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let flat = QTable::from_values(num_states, num_actions_p * num_actions_a, values)?;
        Ok(Self::from_flat(flat, num_actions_p, num_actions_a))
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions_p(&self) -> usize {
        self.num_actions_p
    }

    pub fn num_actions_a(&self) -> usize {
        self.num_actions_a
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, s: StateId, ap: ActionId, aa: ActionId) -> usize {
        (s.0 * self.num_actions_p + ap.0) * self.num_actions_a + aa.0
    }

    #[inline]
    pub fn get(&self, s: StateId, ap: ActionId, aa: ActionId) -> f64 {
        self.values[self.index(s, ap, aa)]
    }

    #[inline]
    pub fn set(&mut self, s: StateId, ap: ActionId, aa: ActionId, v: f64) {
        let i = self.index(s, ap, aa);
        self.values[i] = v;
    }

    /// The stage matrix at `s`, row-major `[a_p][a_a]`.
    pub fn stage(&self, s: StateId) -> &[f64] {
        let n = self.num_actions_p * self.num_actions_a;
        &self.values[s.0 * n..(s.0 + 1) * n]
    }

    /// `max_{a_p, a_a} Q(s, a_p, a_a)`.
    pub fn max_value(&self, s: StateId) -> f64 {
        self.stage(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &JointQTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean_of(tables: &[JointQTable]) -> JointQTable {
        let first = &tables[0];
        let flats: Vec<QTable> = tables.iter().map(|t| t.clone().into_flat()).collect();
        Self::from_flat(QTable::mean_of(&flats), first.num_actions_p, first.num_actions_a)
    }

    /// One side's action values maximized over the other side's action.
    pub fn marginal(&self, side: Side) -> QTable {
        let (np, na) = (self.num_actions_p, self.num_actions_a);
        let own = if side == Side::Protagonist { np } else { na };
        let mut out = QTable::filled(self.num_states, own, f64::NEG_INFINITY);
        for s in 0..self.num_states {
            for ap in 0..np {
                for aa in 0..na {
                    let v = self.get(StateId(s), ActionId(ap), ActionId(aa));
                    let a = if side == Side::Protagonist { ap } else { aa };
                    let slot = &mut out.values[s * own + a];
                    *slot = slot.max(v);
                }
            }
        }
        out
    }

    /// View the joint action pair as a single action index `a_p * |A_A| + a_a`.
    pub fn into_flat(self) -> QTable {
        QTable {
            num_states: self.num_states,
            num_actions: self.num_actions_p * self.num_actions_a,
            values: self.values,
        }
    }

    pub fn from_flat(flat: QTable, num_actions_p: usize, num_actions_a: usize) -> Self {
        assert_eq!(flat.num_actions, num_actions_p * num_actions_a);
        Self {
            num_states: flat.num_states,
            num_actions_p,
            num_actions_a,
            values: flat.values,
        }
    }

    pub fn to_file(&self, config: serde_json::Value, seed: u64) -> TableFile {
        TableFile {
            shape: vec![self.num_states, self.num_actions_p, self.num_actions_a],
            values: self.values.clone(),
            config,
            seed,
        }
    }
}

/// Per-cell visit counts; `α = 1 / N` is read from here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    visits: Vec<u64>,
}

impl CountTable {
    pub fn zeros(len: usize) -> Self {
        Self { visits: vec![0; len] }
    }

    /// Increments the cell and returns the new count.
    #[inline]
    pub fn increment(&mut self, cell: usize) -> u64 {
        self.visits[cell] += 1;
        self.visits[cell]
    }

    #[inline]
    pub fn get(&self, cell: usize) -> u64 {
        self.visits[cell]
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }
}

/// On-disk table format: shape, row-major values, a config echo and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableFile {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub config: serde_json::Value,
    pub seed: u64,
}

impl TableFile {
    pub fn into_qtable(self) -> Result<QTable> {
        match self.shape.as_slice() {
            &[s, a] => QTable::from_values(s, a, self.values),
            other => Err(contract(format!("expected a 2-d table, got shape {other:?}"))),
        }
    }

    pub fn into_joint(self) -> Result<JointQTable> {
        match self.shape.as_slice() {
            &[s, p, a] => JointQTable::from_values(s, p, a, self.values),
            other => Err(contract(format!("expected a 3-d table, got shape {other:?}"))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_finite() {
        assert!(QTable::from_values(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(QTable::from_values(1, 2, vec![0.0]).is_err());
    }

    #[test]
    fn joint_flat_roundtrip_indexing() {
        let mut j = JointQTable::zeros(2, 2, 3);
        j.set(StateId(1), ActionId(1), ActionId(2), 5.0);
        let flat = j.clone().into_flat();
        assert_eq!(flat.get(StateId(1), ActionId(3 + 2)), 5.0);
        assert_eq!(JointQTable::from_flat(flat, 2, 3), j);
    }

    #[test]
    fn marginals() {
        let j = JointQTable::from_values(1, 2, 3, vec![1.0, 5.0, 0.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(j.marginal(Side::Protagonist).values(), &[5.0, 4.0]);
        assert_eq!(j.marginal(Side::Adversary).values(), &[2.0, 5.0, 4.0]);
    }

    #[test]
    fn wrong_rank_is_rejected() {
        let f = QTable::zeros(2, 2).to_file(serde_json::json!({}), 0);
        assert!(f.clone().into_joint().is_err());
        assert!(f.into_qtable().is_ok());
    }

    proptest! {
        #[test]
        fn table_file_roundtrip_is_bit_exact(
            values in proptest::collection::vec(-1e6f64..1e6, 12),
            seed in any::<u64>(),
        ) {
            let q = QTable::from_values(3, 4, values).unwrap();
            let text = q.to_file(serde_json::json!({"algorithm": "raql"}), seed).to_json().unwrap();
            let back = TableFile::from_json(&text).unwrap();
            prop_assert_eq!(back.seed, seed);
            let q2 = back.into_qtable().unwrap();
            for (a, b) in q.values().iter().zip(q2.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
