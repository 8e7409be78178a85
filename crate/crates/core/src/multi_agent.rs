//! Two-agent risk-sensitive learning: RAM-Q (stage-game Nash bootstrapping)
//! and RA3-Q (risk-adjusted ensembles with joint-max bootstrapping), plus
//! RA3-Q training against a frozen opponent.

use serde::{Deserialize, Serialize};

use crate::bimatrix::{solve_bimatrix, BimatrixGame, MixedProfile};
use crate::error::{contract, Error, Result};
use crate::model::{GameEnvironment, GameModelEnv, MarkovGameModel, Monitor, Progress, Side};
use crate::policy::{argmax, check_epsilon, TieRule};
use crate::rng::RandomStream;
use crate::single_agent::{cell_variance, check_ensemble};
use crate::table::{ActionId, CountTable, JointQTable, StateId};
use crate::utility::UtilityParams;

fn check_game_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!("discount {gamma} outside [0, 1)")));
    }
    Ok(())
}

fn check_signs(p: &UtilityParams, a: &UtilityParams) -> Result<()> {
    if !p.is_risk_averse() || a.is_risk_averse() {
        return Err(Error::InvalidConfig(
            "protagonist utility needs beta < 0 and adversary utility beta > 0".into(),
        ));
    }
    Ok(())
}

fn check_common(steps: usize, epsilon: f64, gamma: f64, p: &UtilityParams, a: &UtilityParams) -> Result<()> {
    if steps == 0 {
        return Err(Error::InvalidConfig("steps must be at least 1".into()));
    }
    check_game_gamma(gamma)?;
    check_epsilon(epsilon).map_err(|_| Error::InvalidConfig(format!("epsilon {epsilon} outside [0, 1]")))?;
    check_signs(p, a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamqConfig {
    pub steps: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub utility_p: UtilityParams,
    pub utility_a: UtilityParams,
    #[serde(default = "default_nash_tol")]
    pub nash_tol: f64,
}

fn default_nash_tol() -> f64 {
    1e-9
}

impl RamqConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.steps, self.epsilon, self.gamma, &self.utility_p, &self.utility_a)?;
        if !(self.nash_tol.is_finite() && self.nash_tol > 0.0) {
            return Err(Error::InvalidConfig("nash_tol must be positive".into()));
        }
        Ok(())
    }
}

/// The bimatrix game `(Q_P(s), Q_A(s))`.
pub fn stage_game(qp: &JointQTable, qa: &JointQTable, s: StateId) -> BimatrixGame {
    BimatrixGame::new(qp.num_actions_p(), qp.num_actions_a(), qp.stage(s).to_vec(), qa.stage(s).to_vec())
        .expect("finite tables give a valid stage game")
}

fn solve_stage(qp: &JointQTable, qa: &JointQTable, s: StateId, tol: f64, step: usize) -> Result<MixedProfile> {
    solve_bimatrix(&stage_game(qp, qa, s), tol)
        .map_err(|e| Error::SolverFailure(format!("state {s} at step {step}: {e}")))
}

fn explore_mixed(pi: &[f64], epsilon: f64, rng: &mut RandomStream) -> usize {
    if epsilon > 0.0 && rng.uniform() < epsilon {
        rng.below(pi.len())
    } else {
        rng.categorical(pi)
    }
}

fn bilinear(stage: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let n = y.len();
    x.iter().enumerate().map(|(i, xi)| xi * (0..n).map(|j| stage[i * n + j] * y[j]).sum::<f64>()).sum()
}

fn apply(q: &mut JointQTable, cell: (StateId, ActionId, ActionId), delta: f64) -> Result<()> {
    let v = q.get(cell.0, cell.1, cell.2) + delta;
    if !v.is_finite() {
        return Err(Error::NumericalFailure(format!("non-finite update at ({}, {}, {})", cell.0, cell.1, cell.2)));
    }
    q.set(cell.0, cell.1, cell.2, v);
    Ok(())
}

pub fn train_ramq_env<G: GameEnvironment + ?Sized>(
    env: &mut G,
    cfg: &RamqConfig,
    rng: &mut RandomStream,
    monitor: &mut Monitor<'_>,
) -> Result<(JointQTable, JointQTable)> {
    cfg.validate()?;
    let (ns, np, na) = (env.num_states(), env.num_actions_p(), env.num_actions_a());
    let mut qp = JointQTable::zeros(ns, np, na);
    let mut qa = JointQTable::zeros(ns, np, na);
    let mut counts = CountTable::zeros(ns * np * na);
    let mut s = env.reset(rng)?;
    for step in 0..cfg.steps {
        let pi = solve_stage(&qp, &qa, s, cfg.nash_tol, step)?;
        let ap = ActionId(explore_mixed(&pi.x, cfg.epsilon, rng));
        let aa = ActionId(explore_mixed(&pi.y, cfg.epsilon, rng));
        let tr = env.step(ap, aa, rng)?;
        let (vp, va) = if tr.done {
            (0.0, 0.0)
        } else {
            let next = solve_stage(&qp, &qa, tr.next, cfg.nash_tol, step)?;
            (bilinear(qp.stage(tr.next), &next.x, &next.y), bilinear(qa.stage(tr.next), &next.x, &next.y))
        };
        let idx = qp.index(s, ap, aa);
        let alpha = 1.0 / counts.increment(idx) as f64;
        let cell = (s, ap, aa);
        let tdp = tr.reward_p + cfg.gamma * vp - qp.get(s, ap, aa);
        let tda = tr.reward_a + cfg.gamma * va - qa.get(s, ap, aa);
        apply(&mut qp, cell, alpha * cfg.utility_p.shifted(tdp))?;
        apply(&mut qa, cell, alpha * cfg.utility_a.shifted(tda))?;
        monitor(&Progress::new(step, tdp, &|| qp.marginal(Side::Protagonist)));
        s = if tr.done { env.reset(rng)? } else { tr.next };
    }
    Ok((qp, qa))
}

pub fn train_ramq<G: MarkovGameModel + ?Sized>(
    game: &G,
    cfg: &RamqConfig,
    seed: u64,
) -> Result<(JointQTable, JointQTable)> {
    let mut rng = RandomStream::new(seed);
    train_ramq_env(&mut GameModelEnv::new(game), cfg, &mut rng, &mut |_| {})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ra3Config {
    pub steps: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub utility_p: UtilityParams,
    pub utility_a: UtilityParams,
    pub k: usize,
    pub lambda_p: f64,
    pub lambda_a: f64,
}

impl Ra3Config {
    pub fn validate(&self) -> Result<()> {
        check_common(self.steps, self.epsilon, self.gamma, &self.utility_p, &self.utility_a)?;
        check_ensemble(self.k)?;
        for (name, l) in [("lambda_p", self.lambda_p), ("lambda_a", self.lambda_a)] {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {l}")));
            }
        }
        Ok(())
    }
}

/// `Q̂_P = Q_P^{head_P} - λ_P Var(Q_P^i)` and `Q̂_A = Q_A^{head_A} + λ_A Var(Q_A^i)`.
pub fn ra3q_adjusted_tables(
    qp: &[JointQTable],
    qa: &[JointQTable],
    head_p: usize,
    head_a: usize,
    lambda_p: f64,
    lambda_a: f64,
) -> Result<(JointQTable, JointQTable)> {
    check_ensemble(qp.len())?;
    check_ensemble(qa.len())?;
    if head_p >= qp.len() || head_a >= qa.len() {
        return Err(contract("head index out of range"));
    }
    let adjust = |tables: &[JointQTable], head: usize, signed: f64| {
        let views: Vec<&[f64]> = tables.iter().map(|t| t.values()).collect();
        let mut scratch = Vec::new();
        let values = (0..views[0].len()).map(|c| views[head][c] + signed * cell_variance(&views, c, &mut scratch)).collect();
        let t = &tables[0];
        JointQTable::from_values(t.num_states(), t.num_actions_p(), t.num_actions_a(), values)
    };
    Ok((adjust(qp, head_p, -lambda_p)?, adjust(qa, head_a, lambda_a)?))
}

/// Own component of the joint argmax of a risk-adjusted stage row.
fn joint_argmax(row: &[f64], na: usize, side: Side, rng: &mut RandomStream) -> usize {
    let j = argmax(row, TieRule::Uniform, rng);
    match side {
        Side::Protagonist => j / na,
        Side::Adversary => j % na,
    }
}

fn adjusted_row(tables: &[JointQTable], s: StateId, head: usize, signed: f64, out: &mut [f64], scratch: &mut Vec<f64>) {
    let n = out.len();
    let views: Vec<&[f64]> = tables.iter().map(|t| &t.values()[s.0 * n..(s.0 + 1) * n]).collect();
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = views[head][c] + signed * cell_variance(&views, c, scratch);
    }
}

/// Ensembles of both agents and the shared visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialEnsemble {
    pub protagonist: Vec<JointQTable>,
    pub adversary: Vec<JointQTable>,
    pub counts: CountTable,
}

impl AdversarialEnsemble {
    pub fn mean_protagonist(&self) -> JointQTable {
        JointQTable::mean_of(&self.protagonist)
    }

    pub fn mean_adversary(&self) -> JointQTable {
        JointQTable::mean_of(&self.adversary)
    }
}

/// A side whose actions come from fixed per-state distributions instead of
/// learning.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenSide {
    pub side: Side,
    /// `policy[s]` is a distribution over the frozen side's actions.
    pub policy: Vec<Vec<f64>>,
}

fn check_frozen(f: &FrozenSide, ns: usize, n_actions: usize) -> Result<()> {
    if f.policy.len() != ns {
        return Err(contract(format!("frozen policy covers {} states, need {ns}", f.policy.len())));
    }
    for (s, p) in f.policy.iter().enumerate() {
        let sum: f64 = p.iter().sum();
        if p.len() != n_actions || p.iter().any(|v| v.is_nan() || *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(contract(format!("frozen policy at state {s} is not a distribution")));
        }
    }
    Ok(())
}

/// RA3-Q loop; with `frozen` set, that side plays its fixed policy and its
/// tables are neither used nor updated.
pub fn train_ra3q_core<G: GameEnvironment + ?Sized>(
    env: &mut G,
    cfg: &Ra3Config,
    rng: &mut RandomStream,
    frozen: Option<&FrozenSide>,
    monitor: &mut Monitor<'_>,
) -> Result<AdversarialEnsemble> {
    cfg.validate()?;
    let (ns, np, na) = (env.num_states(), env.num_actions_p(), env.num_actions_a());
    if let Some(f) = frozen {
        check_frozen(f, ns, if f.side == Side::Protagonist { np } else { na })?;
    }
    let learns = |side: Side| frozen.is_none_or(|f| f.side != side);
    let mut qp = vec![JointQTable::zeros(ns, np, na); cfg.k];
    let mut qa = vec![JointQTable::zeros(ns, np, na); cfg.k];
    let mut counts = CountTable::zeros(ns * np * na);
    let mut row = vec![0.0; np * na];
    let mut scratch = Vec::with_capacity(cfg.k);
    let pick = |pol: &FrozenSide, s: StateId, rng: &mut RandomStream| rng.categorical(&pol.policy[s.0]);
    let mut s = env.reset(rng)?;
    for step in 0..cfg.steps {
        let head_p = rng.below(cfg.k);
        let head_a = rng.below(cfg.k);
        let ap = match frozen {
            Some(f) if f.side == Side::Protagonist => pick(f, s, rng),
            _ => {
                adjusted_row(&qp, s, head_p, -cfg.lambda_p, &mut row, &mut scratch);
                let greedy = joint_argmax(&row, na, Side::Protagonist, rng);
                if cfg.epsilon > 0.0 && rng.uniform() < cfg.epsilon { rng.below(np) } else { greedy }
            }
        };
        let aa = match frozen {
            Some(f) if f.side == Side::Adversary => pick(f, s, rng),
            _ => {
                adjusted_row(&qa, s, head_a, cfg.lambda_a, &mut row, &mut scratch);
                let greedy = joint_argmax(&row, na, Side::Adversary, rng);
                if cfg.epsilon > 0.0 && rng.uniform() < cfg.epsilon { rng.below(na) } else { greedy }
            }
        };
        let (ap, aa) = (ActionId(ap), ActionId(aa));
        let tr = env.step(ap, aa, rng)?;
        let idx = qp[0].index(s, ap, aa);
        let alpha = 1.0 / counts.increment(idx) as f64;
        let cell = (s, ap, aa);
        let mut td_sum = 0.0;
        let mut updated = 0usize;
        for i in 0..cfg.k {
            if rng.poisson_one() != 1 {
                continue;
            }
            if learns(Side::Protagonist) {
                let boot = if tr.done { 0.0 } else { cfg.gamma * qp[i].max_value(tr.next) };
                let td = tr.reward_p + boot - qp[i].get(s, ap, aa);
                apply(&mut qp[i], cell, alpha * cfg.utility_p.shifted(td))?;
                td_sum += td;
                updated += 1;
            }
            if learns(Side::Adversary) {
                let boot = if tr.done { 0.0 } else { cfg.gamma * qa[i].max_value(tr.next) };
                let td = tr.reward_a + boot - qa[i].get(s, ap, aa);
                apply(&mut qa[i], cell, alpha * cfg.utility_a.shifted(td))?;
            }
        }
        if updated > 0 {
            monitor(&Progress::new(step, td_sum / updated as f64, &|| {
                JointQTable::mean_of(&qp).marginal(Side::Protagonist)
            }));
        }
        s = if tr.done { env.reset(rng)? } else { tr.next };
    }
    Ok(AdversarialEnsemble { protagonist: qp, adversary: qa, counts })
}

pub fn train_ra3q<G: MarkovGameModel + ?Sized>(
    game: &G,
    cfg: &Ra3Config,
    seed: u64,
) -> Result<(Vec<JointQTable>, Vec<JointQTable>)> {
    let mut rng = RandomStream::new(seed);
    let e = train_ra3q_core(&mut GameModelEnv::new(game), cfg, &mut rng, None, &mut |_| {})?;
    Ok((e.protagonist, e.adversary))
}

/// Trains only the side opposite to `frozen_side`, which plays
/// `frozen_policy`. Returns the learning side's ensemble.
pub fn train_fixed_opponent<G: MarkovGameModel + ?Sized>(
    game: &G,
    cfg: &Ra3Config,
    seed: u64,
    frozen_side: Side,
    frozen_policy: Vec<Vec<f64>>,
) -> Result<Vec<JointQTable>> {
    let mut rng = RandomStream::new(seed);
    let frozen = FrozenSide { side: frozen_side, policy: frozen_policy };
    let e = train_ra3q_core(&mut GameModelEnv::new(game), cfg, &mut rng, Some(&frozen), &mut |_| {})?;
    Ok(match frozen_side {
        Side::Adversary => e.protagonist,
        Side::Protagonist => e.adversary,
    })
}

/// Residual of the joint-max risk-sensitive Bellman equation for the
/// learning `side`, by enumeration of the exact game dynamics.
pub fn fixed_opponent_residual<G: MarkovGameModel + ?Sized>(
    q: &JointQTable,
    game: &G,
    side: Side,
    u: &UtilityParams,
    gamma: f64,
) -> Result<f64> {
    let exact = game.exact().ok_or_else(|| Error::Unsupported("residual needs exact game dynamics".into()))?;
    let flat = exact.flattened(side);
    let e = crate::single_agent::expected_shifted_td(&q.clone().into_flat(), &flat, u, gamma);
    Ok(e.values().iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Greedy per-state policy of one side read off a joint table: the own
/// component of the joint argmax, ties to the lowest index.
pub fn joint_greedy_policy(q: &JointQTable, side: Side) -> Vec<usize> {
    let mut rng = RandomStream::new(0);
    (0..q.num_states())
        .map(|s| {
            let j = argmax(q.stage(StateId(s)), TieRule::First, &mut rng);
            match side {
                Side::Protagonist => j / q.num_actions_a(),
                Side::Adversary => j % q.num_actions_a(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bimatrix::nash_value;
    use crate::envs::{make_random_game, RandomGameSpec, TabularGame};

    fn up(b: f64) -> UtilityParams {
        UtilityParams::new(b).unwrap()
    }

    fn ramq_cfg(steps: usize, beta: f64, gamma: f64) -> RamqConfig {
        RamqConfig { steps, epsilon: 0.2, gamma, utility_p: up(-beta), utility_a: up(beta), nash_tol: 1e-9 }
    }

    fn ra3_cfg(steps: usize) -> Ra3Config {
        Ra3Config {
            steps,
            epsilon: 0.2,
            gamma: 0.0,
            utility_p: up(-1.0),
            utility_a: up(1.0),
            k: 3,
            lambda_p: 0.5,
            lambda_a: 0.5,
        }
    }

    fn zero_game() -> TabularGame {
        TabularGame::new(2, 2, 2, vec![0.5; 16], vec![0.0; 8], vec![0.0; 8], 0.0, 0.9).unwrap()
    }

    #[test]
    fn sign_constraints() {
        let mut c = ramq_cfg(10, 1.0, 0.0);
        c.utility_p = up(1.0);
        assert!(c.validate().is_err());
        let mut r = ra3_cfg(10);
        r.k = 1;
        assert!(r.validate().is_err());
    }

    #[test]
    fn zero_reward_game_stays_zero() {
        let g = zero_game();
        let (qp, qa) = train_ramq(&g, &ramq_cfg(500, 0.5, 0.9), 1).unwrap();
        assert!(qp.values().iter().chain(qa.values()).all(|v| *v == 0.0));
        let (p, a) = train_ra3q(&g, &Ra3Config { gamma: 0.9, ..ra3_cfg(500) }, 1).unwrap();
        assert!(p.iter().chain(&a).all(|t| t.values().iter().all(|v| *v == 0.0)));
        let learner = train_fixed_opponent(&g, &ra3_cfg(500), 1, Side::Adversary, vec![vec![0.5, 0.5]; 2]).unwrap();
        assert!(learner.iter().all(|t| t.values().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn adjusted_tables_cases() {
        let t = |v: f64| JointQTable::from_values(1, 1, 1, vec![v]).unwrap();
        let (p, a) = ra3q_adjusted_tables(&[t(0.0), t(2.0)], &[t(0.0), t(2.0)], 0, 1, 1.5, 0.25).unwrap();
        assert_eq!(p.values(), &[0.0 - 2.0 * 1.5]);
        assert_eq!(a.values(), &[2.0 + 2.0 * 0.25]);
        let (p, a) = ra3q_adjusted_tables(&[t(1.0), t(3.0)], &[t(1.0), t(3.0)], 1, 0, 0.0, 0.0).unwrap();
        assert_eq!((p.values()[0], a.values()[0]), (3.0, 1.0));
        let (p, _) = ra3q_adjusted_tables(&[t(4.0), t(4.0)], &[t(4.0), t(4.0)], 0, 0, 2.0, 2.0).unwrap();
        assert_eq!(p.values(), &[4.0]);
        assert!(ra3q_adjusted_tables(&[t(0.0)], &[t(0.0)], 0, 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ramq_constant_rewards() {
        let g = TabularGame::single_state(&vec![vec![1.0; 2]; 2], &vec![vec![1.0; 2]; 2], 0.0).unwrap();
        let (qp, qa) = train_ramq(&g, &ramq_cfg(20_000, 1.0, 0.0), 4).unwrap();
        for v in qp.values().iter().chain(qa.values()) {
            assert!((v - 1.0).abs() < 0.05, "{v}");
        }
    }

    #[test]
    fn update_locality() {
        let g = make_random_game(&RandomGameSpec {
            num_states: 2,
            num_actions_p: 2,
            num_actions_a: 2,
            reward_mean_range: [0.5, 1.0],
            reward_noise_sigma: 0.1,
            transition_sparsity: 2,
            zero_sum: false,
            discount: 0.5,
            seed: 9,
        })
        .unwrap();
        let cfg = Ra3Config { gamma: 0.5, ..ra3_cfg(1) };
        for seed in 0..20 {
            let (p, a) = train_ra3q(&g, &cfg, seed).unwrap();
            let changed = |ts: &[JointQTable]| ts.iter().map(|t| t.values().iter().filter(|v| **v != 0.0).count()).sum::<usize>();
            assert!(changed(&p) <= cfg.k && changed(&a) <= cfg.k);
        }
    }

    #[test]
    fn matching_pennies_learned_equilibrium() {
        let g = TabularGame::matching_pennies(0.0);
        let (qp, qa) = train_ramq(&g, &ramq_cfg(20_000, 0.1, 0.0), 2).unwrap();
        let pi = solve_bimatrix(&stage_game(&qp, &qa, StateId(0)), 1e-9).unwrap();
        for v in pi.x.iter().chain(&pi.y) {
            assert!((v - 0.5).abs() < 0.05, "{pi:?}");
        }
        let (vr, vc) = nash_value(&stage_game(&qp, &qa, StateId(0)), &pi);
        assert!((vr + vc).abs() < 0.1);
    }
}
