//! Finite models with exactly known dynamics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExactDynamics, ExactGameDynamics, GenerativeModel, MarkovGameModel};
use crate::numeric::gauss_hermite;
use crate::rng::RandomStream;
use crate::table::{ActionId, StateId};

const HERMITE_NODES: usize = 20;
const ROW_TOLERANCE: f64 = 1e-12;

fn noise_nodes(sigma: f64) -> Vec<(f64, f64)> {
    if sigma == 0.0 {
        vec![(0.0, 1.0)]
    } else {
        gauss_hermite(HERMITE_NODES).into_iter().map(|(z, w)| (sigma * z, w)).collect()
    }
}

fn check_common(num_states: usize, rows: usize, transitions: &[f64], sigma: f64) -> Result<()> {
    if num_states == 0 || rows == 0 {
        return Err(Error::InvalidConfig("model needs at least one state and one action".into()));
    }
    if transitions.len() != rows * num_states {
        return Err(Error::InvalidConfig(format!(
            "transition tensor has {} entries, expected {}",
            transitions.len(),
            rows * num_states
        )));
    }
    for (i, row) in transitions.chunks(num_states).enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "transition row {i} is not a probability vector (sum {sum})"
            )));
        }
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidConfig(format!("reward noise sigma must be >= 0, got {sigma}")));
    }
    Ok(())
}

fn check_discount(discount: f64) -> Result<()> {
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::InvalidConfig(format!("discount {discount} outside [0, 1)")));
    }
    Ok(())
}

/// Single-agent MDP with an explicit transition tensor and Gaussian reward
/// noise around a mean-reward table.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    exact: ExactDynamics,
    sigma: f64,
    discount: f64,
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<f64>,
        mean_reward: Vec<f64>,
        sigma: f64,
        discount: f64,
    ) -> Result<Self> {
        check_common(num_states, num_states * num_actions, &transitions, sigma)?;
        check_discount(discount)?;
        if mean_reward.len() != num_states * num_actions || mean_reward.iter().any(|r| !r.is_finite())
        {
            return Err(Error::InvalidConfig("mean reward table has wrong size or non-finite entries".into()));
        }
        Ok(Self {
            exact: ExactDynamics {
                num_states,
                num_actions,
                transitions,
                mean_reward,
                noise_nodes: noise_nodes(sigma),
            },
            sigma,
            discount,
        })
    }

    /// One state, one action, deterministic reward `r`.
    pub fn constant(reward: f64, discount: f64) -> Result<Self> {
        Self::new(1, 1, vec![1.0], vec![reward], 0.0, discount)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dynamics(&self) -> &ExactDynamics {
        &self.exact
    }
}

impl GenerativeModel for TabularMdp {
    fn num_states(&self) -> usize {
        self.exact.num_states
    }

    fn num_actions(&self) -> usize {
        self.exact.num_actions
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn draw(&self, s: StateId, a: ActionId, rng: &mut RandomStream) -> (f64, StateId) {
        let next = rng.categorical(self.exact.transition_row(s.0, a.0));
        let mut r = self.exact.mean_reward(s.0, a.0);
        if self.sigma > 0.0 {
            r += self.sigma * rng.standard_normal();
        }
        (r, StateId(next))
    }

    fn reward_variance_proxy(&self) -> f64 {
        self.sigma * self.sigma
    }

    fn exact(&self) -> Option<&ExactDynamics> {
        Some(&self.exact)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub reward_mean_range: [f64; 2],
    #[serde(default)]
    pub reward_noise_sigma: f64,
    /// Number of reachable next states per `(s, a)`.
    pub transition_sparsity: usize,
    pub discount: f64,
    pub seed: u64,
}

/// Transition rows over `k` distinct random next states with random weights.
fn random_rows(rows: usize, num_states: usize, k: usize, rng: &mut RandomStream) -> Vec<f64> {
    let mut out = vec![0.0; rows * num_states];
    let mut idx: Vec<usize> = (0..num_states).collect();
    for row in out.chunks_mut(num_states) {
        for i in 0..k {
            let j = i + rng.below(num_states - i);
            idx.swap(i, j);
        }
        let weights: Vec<f64> = (0..k).map(|_| 0.05 + rng.uniform()).collect();
        let total: f64 = weights.iter().sum();
        for (&s, w) in idx[..k].iter().zip(&weights) {
            row[s] = w / total;
        }
    }
    out
}

fn check_sparsity(num_states: usize, k: usize, range: [f64; 2]) -> Result<()> {
    if num_states == 0 {
        return Err(Error::InvalidConfig("model needs at least one state".into()));
    }
    if k == 0 || k > num_states {
        return Err(Error::InvalidConfig(format!(
            "transition_sparsity must be in 1..={num_states}, got {k}"
        )));
    }
    if !(range[0].is_finite() && range[1].is_finite() && range[0] <= range[1]) {
        return Err(Error::InvalidConfig(format!("bad reward range {range:?}")));
    }
    Ok(())
}

pub fn make_random_mdp(spec: &RandomMdpSpec) -> Result<TabularMdp> {
    if spec.num_actions == 0 {
        return Err(Error::InvalidConfig("model needs at least one action".into()));
    }
    check_sparsity(spec.num_states, spec.transition_sparsity, spec.reward_mean_range)?;
    let mut rng = RandomStream::derived(spec.seed, 0);
    let rows = spec.num_states * spec.num_actions;
    let transitions = random_rows(rows, spec.num_states, spec.transition_sparsity, &mut rng);
    let [lo, hi] = spec.reward_mean_range;
    let mean_reward = (0..rows).map(|_| lo + (hi - lo) * rng.uniform()).collect();
    TabularMdp::new(
        spec.num_states,
        spec.num_actions,
        transitions,
        mean_reward,
        spec.reward_noise_sigma,
        spec.discount,
    )
}

/// Two-agent Markov game with explicit dynamics. In zero-sum mode the
/// adversary's realized reward is exactly the negated protagonist reward;
/// otherwise the two noise draws are independent.
#[derive(Debug, Clone)]
pub struct TabularGame {
    exact: ExactGameDynamics,
    sigma: f64,
    zero_sum: bool,
    discount: f64,
}

impl TabularGame {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions_p: usize,
        num_actions_a: usize,
        transitions: Vec<f64>,
        mean_reward_p: Vec<f64>,
        mean_reward_a: Vec<f64>,
        sigma: f64,
        discount: f64,
    ) -> Result<Self> {
        let cells = num_states * num_actions_p * num_actions_a;
        check_common(num_states, cells, &transitions, sigma)?;
        check_discount(discount)?;
        for table in [&mean_reward_p, &mean_reward_a] {
            if table.len() != cells || table.iter().any(|r| !r.is_finite()) {
                return Err(Error::InvalidConfig("reward table has wrong size or non-finite entries".into()));
            }
        }
        let zero_sum = mean_reward_p.iter().zip(&mean_reward_a).all(|(p, a)| *p == -*a);
        Ok(Self {
            exact: ExactGameDynamics {
                num_states,
                num_actions_p,
                num_actions_a,
                transitions,
                mean_reward_p,
                mean_reward_a,
                noise_nodes: noise_nodes(sigma),
            },
            sigma,
            zero_sum,
            discount,
        })
    }

    /// Deterministic one-state game with stage payoffs `[a_p][a_a]`.
    pub fn single_state(reward_p: &[Vec<f64>], reward_a: &[Vec<f64>], discount: f64) -> Result<Self> {
        let np = reward_p.len();
        let na = reward_p.first().map_or(0, Vec::len);
        let flat = |m: &[Vec<f64>]| -> Result<Vec<f64>> {
            if m.len() != np || m.iter().any(|r| r.len() != na) {
                return Err(Error::InvalidConfig("ragged payoff matrix".into()));
            }
            Ok(m.iter().flatten().copied().collect())
        };
        Self::new(1, np, na, vec![1.0; np * na], flat(reward_p)?, flat(reward_a)?, 0.0, discount)
    }

    pub fn matching_pennies(discount: f64) -> Self {
        let a = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let b = vec![vec![-1.0, 1.0], vec![1.0, -1.0]];
        Self::single_state(&a, &b, discount).expect("valid fixture")
    }

    pub fn is_zero_sum(&self) -> bool {
        self.zero_sum
    }

    pub fn dynamics(&self) -> &ExactGameDynamics {
        &self.exact
    }
}

impl MarkovGameModel for TabularGame {
    fn num_states(&self) -> usize {
        self.exact.num_states
    }

    fn num_actions_p(&self) -> usize {
        self.exact.num_actions_p
    }

    fn num_actions_a(&self) -> usize {
        self.exact.num_actions_a
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn draw(
        &self,
        s: StateId,
        ap: ActionId,
        aa: ActionId,
        rng: &mut RandomStream,
    ) -> (f64, f64, StateId) {
        let e = &self.exact;
        let cell = (s.0 * e.num_actions_p + ap.0) * e.num_actions_a + aa.0;
        let row = &e.transitions[cell * e.num_states..(cell + 1) * e.num_states];
        let next = rng.categorical(row);
        let mut rp = e.mean_reward_p[cell];
        let mut ra = e.mean_reward_a[cell];
        if self.sigma > 0.0 {
            let z = self.sigma * rng.standard_normal();
            rp += z;
            if self.zero_sum {
                ra -= z;
            } else {
                ra += self.sigma * rng.standard_normal();
            }
        }
        (rp, ra, StateId(next))
    }

    fn exact(&self) -> Option<&ExactGameDynamics> {
        Some(&self.exact)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGameSpec {
    pub num_states: usize,
    pub num_actions_p: usize,
    pub num_actions_a: usize,
    pub reward_mean_range: [f64; 2],
    #[serde(default)]
    pub reward_noise_sigma: f64,
    pub transition_sparsity: usize,
    /// Adversary mean reward is the negated protagonist mean.
    #[serde(default)]
    pub zero_sum: bool,
    pub discount: f64,
    pub seed: u64,
}

pub fn make_random_game(spec: &RandomGameSpec) -> Result<TabularGame> {
    if spec.num_actions_p == 0 || spec.num_actions_a == 0 {
        return Err(Error::InvalidConfig("both agents need at least one action".into()));
    }
    check_sparsity(spec.num_states, spec.transition_sparsity, spec.reward_mean_range)?;
    let mut rng = RandomStream::derived(spec.seed, 1);
    let cells = spec.num_states * spec.num_actions_p * spec.num_actions_a;
    let transitions = random_rows(cells, spec.num_states, spec.transition_sparsity, &mut rng);
    let [lo, hi] = spec.reward_mean_range;
    let rp: Vec<f64> = (0..cells).map(|_| lo + (hi - lo) * rng.uniform()).collect();
    let ra: Vec<f64> = if spec.zero_sum {
        rp.iter().map(|r| -r).collect()
    } else {
        (0..cells).map(|_| lo + (hi - lo) * rng.uniform()).collect()
    };
    TabularGame::new(
        spec.num_states,
        spec.num_actions_p,
        spec.num_actions_a,
        transitions,
        rp,
        ra,
        spec.reward_noise_sigma,
        spec.discount,
    )
}
