//! Single-agent risk-sensitive Q-learning: RAQL, the RA2-Q ensemble, the
//! recentered RA2.1-Q scheme, and exact-dynamics oracles.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::model::{sample_transition, Environment, ExactDynamics, GenerativeModel, ModelEnv, Monitor, Progress};
use crate::numeric::sample_variance;
use crate::policy::{check_epsilon, epsilon_greedy, epsilon_greedy_index};
use crate::rng::RandomStream;
use crate::table::{ActionId, CountTable, QTable, StateId};
use crate::utility::UtilityParams;

/// One observed transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub s: StateId,
    pub a: ActionId,
    pub reward: f64,
    pub next: StateId,
    /// Terminal transition: the target is the reward alone.
    pub done: bool,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidConfig(format!("discount {gamma} outside (0, 1)")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaqlConfig {
    pub steps: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub utility: UtilityParams,
}

impl RaqlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        check_gamma(self.gamma)?;
        check_epsilon(self.epsilon).map_err(|_| Error::InvalidConfig(format!("epsilon {} outside [0, 1]", self.epsilon)))
    }
}

#[inline]
fn td_error(q: &QTable, sample: &Sample, gamma: f64) -> f64 {
    let bootstrap = if sample.done { 0.0 } else { gamma * q.max_value(sample.next) };
    sample.reward + bootstrap - q.get(sample.s, sample.a)
}

/// `Q(s,a) += ũ(r + γ max Q(s',·) - Q(s,a)) / N(s,a)`.
///
/// `counts` must already include this visit. Returns the TD error.
pub fn raql_update(
    q: &mut QTable,
    counts: &CountTable,
    sample: &Sample,
    gamma: f64,
    u: &UtilityParams,
) -> Result<f64> {
    q.check_index(sample.s, sample.a)?;
    let n = counts.get(sample.s.0 * q.num_actions() + sample.a.0);
    if n == 0 {
        return Err(contract("count must be incremented before the update"));
    }
    let td = td_error(q, sample, gamma);
    let v = q.get(sample.s, sample.a) + u.shifted(td) / n as f64;
    if !v.is_finite() {
        return Err(Error::NumericalFailure(format!("non-finite update at ({}, {})", sample.s, sample.a)));
    }
    q.set(sample.s, sample.a, v);
    Ok(td)
}

/// RAQL on an interactive environment; `monitor` sees every update.
pub fn train_raql_env<E: Environment + ?Sized>(
    env: &mut E,
    cfg: &RaqlConfig,
    rng: &mut RandomStream,
    monitor: &mut Monitor<'_>,
) -> Result<QTable> {
    cfg.validate()?;
    let mut q = QTable::zeros(env.num_states(), env.num_actions());
    let mut counts = CountTable::zeros(env.num_states() * env.num_actions());
    let mut s = env.reset(rng)?;
    for step in 0..cfg.steps {
        let a = epsilon_greedy(&q, s, cfg.epsilon, rng)?;
        let tr = env.step(a, rng)?;
        counts.increment(s.0 * q.num_actions() + a.0);
        let sample = Sample { s, a, reward: tr.reward, next: tr.next, done: tr.done };
        let td = raql_update(&mut q, &counts, &sample, cfg.gamma, &cfg.utility)?;
        monitor(&Progress::new(step, td, &|| q.clone()));
        s = if tr.done { env.reset(rng)? } else { tr.next };
    }
    Ok(q)
}

pub fn train_raql<M: GenerativeModel + ?Sized>(model: &M, cfg: &RaqlConfig, seed: u64) -> Result<QTable> {
    let mut rng = RandomStream::new(seed);
    train_raql_env(&mut ModelEnv::new(model), cfg, &mut rng, &mut |_| {})
}

/// `E[ũ(r + γ max Q(s',·) - Q(s,a))]` for every cell, by enumeration.
pub fn expected_shifted_td(q: &QTable, dynamics: &ExactDynamics, u: &UtilityParams, gamma: f64) -> QTable {
    let (ns, na) = (dynamics.num_states, dynamics.num_actions);
    let v: Vec<f64> = (0..ns).map(|s| q.max_value(StateId(s))).collect();
    let mut out = QTable::zeros(ns, na);
    for s in 0..ns {
        for a in 0..na {
            let base = dynamics.mean_reward(s, a) - q.get(StateId(s), ActionId(a));
            let mut acc = 0.0;
            for (next, &p) in dynamics.transition_row(s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let x = base + gamma * v[next];
                let inner: f64 = dynamics.noise_nodes.iter().map(|(z, w)| w * u.shifted(x + z)).sum();
                acc += p * inner;
            }
            out.set(StateId(s), ActionId(a), acc);
        }
    }
    out
}

/// `H(Q) = Q + α · E[ũ(TD)]`.
pub fn exact_h_operator(
    q: &QTable,
    dynamics: &ExactDynamics,
    u: &UtilityParams,
    gamma: f64,
    alpha: f64,
) -> QTable {
    let e = expected_shifted_td(q, dynamics, u, gamma);
    let values = q.values().iter().zip(e.values()).map(|(q, e)| q + alpha * e).collect();
    QTable::from_values(q.num_states(), q.num_actions(), values).expect("same shape")
}

/// Sup-norm modulus `1 - α(1-γ)ε` of `H`.
pub fn contraction_modulus(u: &UtilityParams, gamma: f64, alpha: f64) -> f64 {
    1.0 - alpha * (1.0 - gamma) * u.lipschitz_bounds().0
}

/// Iterates `H` from zero until successive iterates differ by less than
/// `tol` in sup norm. Returns the limit and the iteration count.
pub fn iterate_h(
    dynamics: &ExactDynamics,
    u: &UtilityParams,
    gamma: f64,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(QTable, usize)> {
    let mut q = QTable::zeros(dynamics.num_states, dynamics.num_actions);
    for it in 1..=max_iter {
        let next = exact_h_operator(&q, dynamics, u, gamma, alpha);
        if !next.is_finite() {
            return Err(Error::NumericalFailure("H iteration diverged".into()));
        }
        let delta = next.max_abs_diff(&q);
        q = next;
        if delta < tol {
            return Ok((q, it));
        }
    }
    Err(Error::NumericalFailure(format!("H iteration did not converge in {max_iter} steps")))
}

/// Largest absolute expected shifted TD error over all cells: exact when the
/// model exposes its dynamics, otherwise `n_samples` draws per cell.
pub fn bellman_residual<M: GenerativeModel + ?Sized>(
    q: &QTable,
    model: &M,
    u: &UtilityParams,
    gamma: f64,
    n_samples: usize,
    rng: &mut RandomStream,
) -> Result<f64> {
    if let Some(d) = model.exact() {
        let e = expected_shifted_td(q, d, u, gamma);
        return Ok(e.values().iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    if n_samples == 0 {
        return Err(contract("Monte Carlo residual needs n_samples > 0"));
    }
    let mut worst = 0.0f64;
    for s in 0..model.num_states() {
        for a in 0..model.num_actions() {
            let (s, a) = (StateId(s), ActionId(a));
            let mut acc = 0.0;
            for _ in 0..n_samples {
                let (r, next) = sample_transition(model, s, a, rng)?;
                acc += u.shifted(r + gamma * q.max_value(next) - q.get(s, a));
            }
            worst = worst.max((acc / n_samples as f64).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ra2Config {
    pub steps: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub utility: UtilityParams,
    pub k: usize,
    pub lambda_p: f64,
}

impl Ra2Config {
    pub fn raql(&self) -> RaqlConfig {
        RaqlConfig { steps: self.steps, epsilon: self.epsilon, gamma: self.gamma, utility: self.utility }
    }

    pub fn validate(&self) -> Result<()> {
        self.raql().validate()?;
        check_ensemble(self.k)?;
        if !(self.lambda_p.is_finite() && self.lambda_p >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda_p must be >= 0, got {}", self.lambda_p)));
        }
        Ok(())
    }
}

pub(crate) fn check_ensemble(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("ensemble needs k >= 2 tables, got {k}")));
    }
    Ok(())
}

/// Per-cell sample variance (denominator `k - 1`) of an ensemble at one
/// flat index.
#[inline]
pub(crate) fn cell_variance(values: &[&[f64]], cell: usize, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(values.iter().map(|v| v[cell]));
    sample_variance(scratch)
}

/// `Q̂ = Q^head - λ · Var_i(Q^i)` with `head` a 0-based index.
pub fn ra2q_risk_adjusted_table(tables: &[QTable], head: usize, lambda_p: f64) -> Result<QTable> {
    check_ensemble(tables.len())?;
    if head >= tables.len() {
        return Err(contract(format!("head {head} out of range for {} tables", tables.len())));
    }
    let views: Vec<&[f64]> = tables.iter().map(|t| t.values()).collect();
    let mut scratch = Vec::with_capacity(tables.len());
    let values = (0..views[0].len())
        .map(|c| views[head][c] - lambda_p * cell_variance(&views, c, &mut scratch))
        .collect();
    QTable::from_values(tables[0].num_states(), tables[0].num_actions(), values)
}

/// The trained RA2-Q ensemble with its per-table visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub tables: Vec<QTable>,
    pub counts: Vec<CountTable>,
}

impl Ensemble {
    pub fn mean_table(&self) -> QTable {
        QTable::mean_of(&self.tables)
    }

    /// Largest pairwise sup-norm distance between member tables.
    pub fn max_disagreement(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.tables.iter().enumerate() {
            for b in &self.tables[i + 1..] {
                worst = worst.max(a.max_abs_diff(b));
            }
        }
        worst
    }
}

pub fn train_ra2q_env<E: Environment + ?Sized>(
    env: &mut E,
    cfg: &Ra2Config,
    rng: &mut RandomStream,
    monitor: &mut Monitor<'_>,
) -> Result<Ensemble> {
    cfg.validate()?;
    let (ns, na) = (env.num_states(), env.num_actions());
    let mut tables = vec![QTable::zeros(ns, na); cfg.k];
    let mut counts = vec![CountTable::zeros(ns * na); cfg.k];
    let mut row = vec![0.0; na];
    let mut scratch = Vec::with_capacity(cfg.k);
    let mut s = env.reset(rng)?;
    for step in 0..cfg.steps {
        let head = rng.below(cfg.k);
        {
            let views: Vec<&[f64]> = tables.iter().map(|t| t.values()).collect();
            for (a, slot) in row.iter_mut().enumerate() {
                let c = s.0 * na + a;
                *slot = views[head][c] - cfg.lambda_p * cell_variance(&views, c, &mut scratch);
            }
        }
        let a = ActionId(epsilon_greedy_index(&row, cfg.epsilon, rng));
        let tr = env.step(a, rng)?;
        let sample = Sample { s, a, reward: tr.reward, next: tr.next, done: tr.done };
        let mut td_sum = 0.0;
        let mut updated = 0;
        for i in 0..cfg.k {
            if rng.poisson_one() == 1 {
                counts[i].increment(s.0 * na + a.0);
                td_sum += raql_update(&mut tables[i], &counts[i], &sample, cfg.gamma, &cfg.utility)?;
                updated += 1;
            }
        }
        if updated > 0 {
            monitor(&Progress::new(step, td_sum / updated as f64, &|| QTable::mean_of(&tables)));
        }
        s = if tr.done { env.reset(rng)? } else { tr.next };
    }
    Ok(Ensemble { tables, counts })
}

pub fn train_ra2q<M: GenerativeModel + ?Sized>(model: &M, cfg: &Ra2Config, seed: u64) -> Result<Vec<QTable>> {
    let mut rng = RandomStream::new(seed);
    Ok(train_ra2q_env(&mut ModelEnv::new(model), cfg, &mut rng, &mut |_| {})?.tables)
}

/// One `(r, s')` for a cell, as consumed by the empirical operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSample {
    pub reward: f64,
    pub next: StateId,
    pub done: bool,
}

/// Empirical Bellman image in temporal-difference form,
/// `Q(s,a) + ũ(r + γ max Q(s',·) - Q(s,a))`, one sample per cell. Its
/// expectation has the same fixed point as the RAQL update.
pub fn ra21q_empirical_bellman(
    q: &QTable,
    samples: &[Option<CellSample>],
    u: &UtilityParams,
    gamma: f64,
) -> Result<QTable> {
    if samples.len() != q.values().len() {
        return Err(contract("one sample slot per (state, action) required"));
    }
    if let Some(i) = samples.iter().position(Option::is_none) {
        return Err(Error::IncompleteSample { state: i / q.num_actions(), action: i % q.num_actions() });
    }
    Ok(empirical_image(q, samples, u, gamma))
}

/// As [`ra21q_empirical_bellman`], leaving cells without a sample unchanged.
fn empirical_image(q: &QTable, samples: &[Option<CellSample>], u: &UtilityParams, gamma: f64) -> QTable {
    let na = q.num_actions();
    let values = samples
        .iter()
        .enumerate()
        .map(|(i, smp)| {
            let cur = q.values()[i];
            match smp {
                None => cur,
                Some(c) => {
                    let boot = if c.done { 0.0 } else { gamma * q.max_value(c.next) };
                    cur + u.shifted(c.reward + boot - cur)
                }
            }
        })
        .collect();
    QTable::from_values(q.num_states(), na, values).unwrap_or_else(|_| QTable::filled(q.num_states(), na, f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    /// Fresh draws from the generative model for every cell.
    #[default]
    Generative,
    /// Uniform draws from per-cell replay buffers filled by ε-greedy play.
    ReplayBuffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ra21Config {
    pub epochs: usize,
    pub epoch_length: usize,
    pub recentering_samples: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub utility: UtilityParams,
    #[serde(default)]
    pub source: SampleSource,
    /// Environment steps added to the replay buffer per epoch.
    #[serde(default = "one")]
    pub env_steps_per_epoch: usize,
}

fn one() -> usize {
    1
}

impl Ra21Config {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.epoch_length == 0 || self.recentering_samples == 0 {
            return Err(Error::InvalidConfig("epochs, epoch_length and recentering_samples must be >= 1".into()));
        }
        check_gamma(self.gamma)?;
        check_epsilon(self.epsilon).map_err(|_| Error::InvalidConfig(format!("epsilon {} outside [0, 1]", self.epsilon)))?;
        if self.source == SampleSource::ReplayBuffer && self.env_steps_per_epoch == 0 {
            return Err(Error::InvalidConfig("replay buffer needs env_steps_per_epoch >= 1".into()));
        }
        Ok(())
    }

    /// Transitions consumed per epoch under generative sampling.
    pub fn samples_per_epoch(&self, cells: usize) -> usize {
        (self.recentering_samples + self.epoch_length) * cells
    }
}

/// `λ_k = 1 / (1 + (1 - γ) k)`.
pub fn ra21q_stepsize(gamma: f64, k: usize) -> f64 {
    1.0 / (1.0 + (1.0 - gamma) * k as f64)
}

/// The recentered epoch loop shared by both sample sources. `draw` fills one
/// sample slot per cell.
fn ra21q_epochs(
    cells: (usize, usize),
    cfg: &Ra21Config,
    rng: &mut RandomStream,
    mut before_epoch: impl FnMut(&QTable, &mut RandomStream) -> Result<()>,
    mut draw: impl FnMut(&mut [Option<CellSample>], &mut RandomStream) -> Result<()>,
    monitor: &mut Monitor<'_>,
) -> Result<QTable> {
    let (ns, na) = cells;
    let mut q_bar = QTable::zeros(ns, na);
    let mut slots = vec![None; ns * na];
    let mut step = 0;
    for _ in 0..cfg.epochs {
        before_epoch(&q_bar, rng)?;
        let mut recenter = vec![0.0; ns * na];
        for _ in 0..cfg.recentering_samples {
            draw(&mut slots, rng)?;
            let img = empirical_image(&q_bar, &slots, &cfg.utility, cfg.gamma);
            for (acc, v) in recenter.iter_mut().zip(img.values()) {
                *acc += v;
            }
        }
        let n = cfg.recentering_samples as f64;
        recenter.iter_mut().for_each(|v| *v /= n);

        let mut q = q_bar.clone();
        for k in 1..=cfg.epoch_length {
            let lambda = ra21q_stepsize(cfg.gamma, k);
            draw(&mut slots, rng)?;
            let at_q = empirical_image(&q, &slots, &cfg.utility, cfg.gamma);
            let at_bar = empirical_image(&q_bar, &slots, &cfg.utility, cfg.gamma);
            let values: Vec<f64> = (0..ns * na)
                .map(|c| {
                    let bracket = at_q.values()[c] - at_bar.values()[c] + recenter[c];
                    (1.0 - lambda) * q.values()[c] + lambda * bracket
                })
                .collect();
            let next = QTable::from_values(ns, na, values)
                .map_err(|_| Error::NumericalFailure("non-finite RA2.1-Q iterate".into()))?;
            monitor(&Progress::new(step, next.max_abs_diff(&q), &|| next.clone()));
            step += 1;
            q = next;
        }
        q_bar = q;
    }
    Ok(q_bar)
}

fn generative_draw<M: GenerativeModel + ?Sized>(
    model: &M,
    slots: &mut [Option<CellSample>],
    rng: &mut RandomStream,
) -> Result<()> {
    let na = model.num_actions();
    for (i, slot) in slots.iter_mut().enumerate() {
        let (reward, next) = sample_transition(model, StateId(i / na), ActionId(i % na), rng)?;
        *slot = Some(CellSample { reward, next, done: false });
    }
    Ok(())
}

/// RA2.1-Q with independent generative samples for every operator
/// evaluation.
pub fn train_ra21q_generative<M: GenerativeModel + ?Sized>(
    model: &M,
    cfg: &Ra21Config,
    rng: &mut RandomStream,
    monitor: &mut Monitor<'_>,
) -> Result<QTable> {
    cfg.validate()?;
    ra21q_epochs(
        (model.num_states(), model.num_actions()),
        cfg,
        rng,
        |_, _| Ok(()),
        |slots, rng| generative_draw(model, slots, rng),
        monitor,
    )
}

/// RA2.1-Q drawing per-cell samples uniformly (with replacement) from a
/// replay buffer grown by ε-greedy play under the current recentering
/// table. Cells never visited keep their value.
pub fn train_ra21q_buffer<E: Environment + ?Sized>(
    env: &mut E,
    cfg: &Ra21Config,
    rng: &mut RandomStream,
    monitor: &mut Monitor<'_>,
) -> Result<QTable> {
    cfg.validate()?;
    let (ns, na) = (env.num_states(), env.num_actions());
    let buffer = std::cell::RefCell::new(vec![Vec::<CellSample>::new(); ns * na]);
    let mut state = Some(env.reset(rng)?);
    ra21q_epochs(
        (ns, na),
        cfg,
        rng,
        |q_bar, rng| {
            for _ in 0..cfg.env_steps_per_epoch {
                let s = match state {
                    Some(s) => s,
                    None => env.reset(rng)?,
                };
                let a = epsilon_greedy(q_bar, s, cfg.epsilon, rng)?;
                let tr = env.step(a, rng)?;
                buffer.borrow_mut()[s.0 * na + a.0].push(CellSample { reward: tr.reward, next: tr.next, done: tr.done });
                state = if tr.done { None } else { Some(tr.next) };
            }
            Ok(())
        },
        |slots, rng| {
            for (slot, cell) in slots.iter_mut().zip(buffer.borrow().iter()) {
                *slot = (!cell.is_empty()).then(|| cell[rng.below(cell.len())]);
            }
            Ok(())
        },
        monitor,
    )
}

pub fn train_ra21q<M: GenerativeModel + ?Sized>(model: &M, cfg: &Ra21Config, seed: u64) -> Result<QTable> {
    let mut rng = RandomStream::new(seed);
    match cfg.source {
        SampleSource::Generative => train_ra21q_generative(model, cfg, &mut rng, &mut |_| {}),
        SampleSource::ReplayBuffer => train_ra21q_buffer(&mut ModelEnv::new(model), cfg, &mut rng, &mut |_| {}),
    }
}

/// Fixed point of the risk-sensitive Bellman equation
/// `E[ũ(r + γ max Q(s',·) - Q(s,a))] = 0`, by iterating the map that solves
/// each cell's scalar equation exactly (bisection) given the current
/// next-state values. That map is a `γ`-contraction.
pub fn solve_fixed_point(dynamics: &ExactDynamics, u: &UtilityParams, gamma: f64, tol: f64) -> Result<QTable> {
    let (ns, na) = (dynamics.num_states, dynamics.num_actions);
    let mut q = QTable::zeros(ns, na);
    for _ in 0..100_000 {
        let v: Vec<f64> = (0..ns).map(|s| q.max_value(StateId(s))).collect();
        let mut next = QTable::zeros(ns, na);
        for s in 0..ns {
            for a in 0..na {
                let atoms: Vec<(f64, f64)> = dynamics
                    .transition_row(s, a)
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .flat_map(|(n, &p)| {
                        let x = dynamics.mean_reward(s, a) + gamma * v[n];
                        dynamics.noise_nodes.iter().map(move |(z, w)| (x + z, p * w))
                    })
                    .collect();
                let f = |c: f64| atoms.iter().map(|(x, w)| w * u.shifted(x - c)).sum::<f64>();
                let lo0 = atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min) - u.truncation() - 1.0;
                let hi0 = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max) + u.truncation() + 1.0;
                let (mut lo, mut hi) = (lo0, hi0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid == lo || mid == hi {
                        break;
                    }
                    if f(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                next.set(StateId(s), ActionId(a), 0.5 * (lo + hi));
            }
        }
        let delta = next.max_abs_diff(&q);
        q = next;
        if delta < tol {
            return Ok(q);
        }
    }
    Err(Error::NumericalFailure("fixed-point iteration did not converge".into()))
}
