//! Sampling interfaces for single-agent and two-agent environments.
//!
//! A [`GenerativeModel`] can be queried at any `(s, a)`; an [`Environment`]
//! only supports trajectory interaction. Every generative model is also an
//! environment through [`ModelEnv`]. The two-agent counterparts are
//! [`MarkovGameModel`] and [`GameEnvironment`].

use crate::error::{contract, Error, Result};
use crate::rng::RandomStream;
use crate::table::{ActionId, StateId};

/// Exactly known dynamics, exposed by models built for oracle testing.
///
/// Reward noise is additive, independent of `(s, a)`, and represented by a
/// discrete set of `(offset, weight)` nodes whose weighted sum integrates
/// smooth functions of the noise (Gauss–Hermite nodes for Gaussian noise, a
/// single zero node for deterministic rewards).
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDynamics {
    pub num_states: usize,
    pub num_actions: usize,
    /// Row-major `[s][a][s']`.
    pub transitions: Vec<f64>,
    /// Row-major `[s][a]`.
    pub mean_reward: Vec<f64>,
    pub noise_nodes: Vec<(f64, f64)>,
}

impl ExactDynamics {
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        self.mean_reward[s * self.num_actions + a]
    }
}

/// Exact dynamics of a two-agent Markov game.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactGameDynamics {
    pub num_states: usize,
    pub num_actions_p: usize,
    pub num_actions_a: usize,
    /// Row-major `[s][a_p][a_a][s']`.
    pub transitions: Vec<f64>,
    /// Row-major `[s][a_p][a_a]`.
    pub mean_reward_p: Vec<f64>,
    pub mean_reward_a: Vec<f64>,
    pub noise_nodes: Vec<(f64, f64)>,
}

/// Which agent of a two-agent game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[serde(alias = "p")]
    Protagonist,
    #[serde(alias = "a")]
    Adversary,
}

impl ExactGameDynamics {
    /// Single-agent view over flattened joint actions `a_p * |A_A| + a_a`,
    /// carrying the chosen side's reward.
    pub fn flattened(&self, side: Side) -> ExactDynamics {
        ExactDynamics {
            num_states: self.num_states,
            num_actions: self.num_actions_p * self.num_actions_a,
            transitions: self.transitions.clone(),
            mean_reward: match side {
                Side::Protagonist => self.mean_reward_p.clone(),
                Side::Adversary => self.mean_reward_a.clone(),
            },
            noise_nodes: self.noise_nodes.clone(),
        }
    }
}

pub trait GenerativeModel {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn discount(&self) -> f64;

    /// Draw `(r, s')` for an in-range `(s, a)`.
    fn draw(&self, s: StateId, a: ActionId, rng: &mut RandomStream) -> (f64, StateId);

    /// Variance proxy `σ²` of the (sub-Gaussian) reward noise.
    fn reward_variance_proxy(&self) -> f64 {
        0.0
    }

    fn exact(&self) -> Option<&ExactDynamics> {
        None
    }
}

/// Range-checked draw from a generative model.
pub fn sample_transition<M: GenerativeModel + ?Sized>(
    model: &M,
    s: StateId,
    a: ActionId,
    rng: &mut RandomStream,
) -> Result<(f64, StateId)> {
    if s.0 >= model.num_states() || a.0 >= model.num_actions() {
        return Err(contract(format!(
            "({s}, {a}) out of range for model with {} states and {} actions",
            model.num_states(),
            model.num_actions()
        )));
    }
    let (r, next) = model.draw(s, a, rng);
    debug_assert!(next.0 < model.num_states());
    if !r.is_finite() {
        return Err(Error::NumericalFailure(format!("non-finite reward at ({s}, {a})")));
    }
    Ok((r, next))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub next: StateId,
    /// The episode ended; `next` must not be bootstrapped from.
    pub done: bool,
}

pub trait Environment {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reset(&mut self, rng: &mut RandomStream) -> Result<StateId>;
    fn step(&mut self, action: ActionId, rng: &mut RandomStream) -> Result<Transition>;
}

/// Continuing interaction with a generative model, starting from a uniformly
/// drawn state.
#[derive(Debug)]
pub struct ModelEnv<'m, M: ?Sized> {
    model: &'m M,
    state: StateId,
}

impl<'m, M: GenerativeModel + ?Sized> ModelEnv<'m, M> {
    pub fn new(model: &'m M) -> Self {
        Self { model, state: StateId(0) }
    }
}

impl<M: GenerativeModel + ?Sized> Environment for ModelEnv<'_, M> {
    fn num_states(&self) -> usize {
        self.model.num_states()
    }

    fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    fn reset(&mut self, rng: &mut RandomStream) -> Result<StateId> {
        self.state = StateId(rng.below(self.model.num_states()));
        Ok(self.state)
    }

    fn step(&mut self, action: ActionId, rng: &mut RandomStream) -> Result<Transition> {
        let (reward, next) = sample_transition(self.model, self.state, action, rng)?;
        self.state = next;
        Ok(Transition { reward, next, done: false })
    }
}

pub trait MarkovGameModel {
    fn num_states(&self) -> usize;
    fn num_actions_p(&self) -> usize;
    fn num_actions_a(&self) -> usize;
    fn discount(&self) -> f64;

    /// Draw `(r_P, r_A, s')` for in-range arguments.
    fn draw(
        &self,
        s: StateId,
        ap: ActionId,
        aa: ActionId,
        rng: &mut RandomStream,
    ) -> (f64, f64, StateId);

    fn exact(&self) -> Option<&ExactGameDynamics> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTransition {
    pub reward_p: f64,
    pub reward_a: f64,
    pub next: StateId,
    pub done: bool,
}

pub trait GameEnvironment {
    fn num_states(&self) -> usize;
    fn num_actions_p(&self) -> usize;
    fn num_actions_a(&self) -> usize;
    fn reset(&mut self, rng: &mut RandomStream) -> Result<StateId>;
    fn step(
        &mut self,
        ap: ActionId,
        aa: ActionId,
        rng: &mut RandomStream,
    ) -> Result<JointTransition>;
}

/// Continuing interaction with a Markov game model.
#[derive(Debug)]
pub struct GameModelEnv<'m, G: ?Sized> {
    game: &'m G,
    state: StateId,
}

impl<'m, G: MarkovGameModel + ?Sized> GameModelEnv<'m, G> {
    pub fn new(game: &'m G) -> Self {
        Self { game, state: StateId(0) }
    }
}

impl<G: MarkovGameModel + ?Sized> GameEnvironment for GameModelEnv<'_, G> {
    fn num_states(&self) -> usize {
        self.game.num_states()
    }

    fn num_actions_p(&self) -> usize {
        self.game.num_actions_p()
    }

    fn num_actions_a(&self) -> usize {
        self.game.num_actions_a()
    }

    fn reset(&mut self, rng: &mut RandomStream) -> Result<StateId> {
        self.state = StateId(rng.below(self.game.num_states()));
        Ok(self.state)
    }

    fn step(
        &mut self,
        ap: ActionId,
        aa: ActionId,
        rng: &mut RandomStream,
    ) -> Result<JointTransition> {
        if ap.0 >= self.game.num_actions_p() || aa.0 >= self.game.num_actions_a() {
            return Err(contract(format!("joint action ({ap}, {aa}) out of range")));
        }
        let (reward_p, reward_a, next) = self.game.draw(self.state, ap, aa, rng);
        if !reward_p.is_finite() || !reward_a.is_finite() {
            return Err(Error::NumericalFailure("non-finite game reward".into()));
        }
        self.state = next;
        Ok(JointTransition { reward_p, reward_a, next, done: false })
    }
}

/// What a training loop reports after an update.
pub struct Progress<'a> {
    pub step: usize,
    /// Mean TD error of the update (RA2.1-Q: sup-norm change of the iterate).
    pub td: f64,
    snapshot: &'a dyn Fn() -> crate::table::QTable,
}

impl<'a> Progress<'a> {
    pub fn new(step: usize, td: f64, snapshot: &'a dyn Fn() -> crate::table::QTable) -> Self {
        Self { step, td, snapshot }
    }

    /// The single-agent table the greedy policy would act on right now.
    pub fn policy_table(&self) -> crate::table::QTable {
        (self.snapshot)()
    }
}

pub type Monitor<'m> = dyn FnMut(&Progress<'_>) + 'm;
