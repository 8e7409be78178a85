//! Sharpe ratios, strategy tournaments on the market and perturbation
//! robustness runs. Policies are always frozen and greedy.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::egt::{MatchResults, SeatSamples};
use crate::envs::{inject_zi_agents, Market, MarketConfig};
use crate::error::{contract, Error, Result};
use crate::model::Side;
use crate::numeric::{mean, sample_variance};
use crate::rng::RandomStream;
use crate::table::{ActionId, JointQTable, QTable, StateId};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_STREAM: u64 = u64::MAX;

/// `mean / sample std` (denominator `n - 1`), risk-free rate zero.
pub fn sharpe_ratio(returns: &[f64]) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: returns.len() });
    }
    let sd = sample_variance(returns).sqrt();
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::UndefinedSharpe);
    }
    Ok(mean(returns) / sd)
}

/// Per-episode total profits and the stream seed of every episode block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReturns {
    pub returns: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl EpisodeReturns {
    pub fn sharpe(&self) -> Result<f64> {
        sharpe_ratio(&self.returns)
    }
}

/// A reported number, or `"n/a"` where it is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    NotAvailable,
}

impl Metric {
    pub fn from_result(r: Result<f64>) -> Result<Self> {
        match r {
            Ok(v) => Ok(Metric::Value(v)),
            Err(Error::UndefinedSharpe) => Ok(Metric::NotAvailable),
            Err(e) => Err(e),
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::NotAvailable => None,
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::NotAvailable => s.serialize_str("n/a"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Metric::Value(v)),
            Raw::Text(t) if t == "n/a" => Ok(Metric::NotAvailable),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"n/a\", got {t:?}"))),
        }
    }
}

/// Frozen greedy policy over a single-agent table; ties go to the lowest
/// action index, so acting draws no randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    table: QTable,
}

impl Policy {
    pub fn greedy(table: QTable) -> Self {
        Self { table }
    }

    /// Protagonist component of the joint argmax of a joint table.
    pub fn protagonist(q: &JointQTable) -> Self {
        Self { table: q.marginal(Side::Protagonist) }
    }

    pub fn adversary(q: &JointQTable) -> Self {
        Self { table: q.marginal(Side::Adversary) }
    }

    /// All-zero table: always action 0, which is the market's no-op.
    pub fn do_nothing(num_states: usize, num_actions: usize) -> Self {
        Self { table: QTable::zeros(num_states, num_actions) }
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn act(&self, s: StateId) -> ActionId {
        let row = self.table.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        ActionId(best)
    }

    fn check_market(&self, m: &Market) -> Result<()> {
        if self.table.num_states() != m.num_states() || self.table.num_actions() != m.num_actions() {
            return Err(contract(format!(
                "policy table is {}x{}, market has {} states and {} actions",
                self.table.num_states(),
                self.table.num_actions(),
                m.num_states(),
                m.num_actions()
            )));
        }
        Ok(())
    }
}

/// One episode; returns each seat's total profit.
fn play_episode(
    market: &mut Market,
    seats: &[&Policy],
    adversary: Option<&Policy>,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    market.reset_episode(rng);
    let mut totals = vec![0.0; seats.len()];
    let mut actions = vec![ActionId(0); seats.len()];
    while !market.is_done() {
        for (i, p) in seats.iter().enumerate() {
            actions[i] = p.act(market.observe(i));
        }
        let aa = adversary.map(|p| p.act(market.observe(0)));
        let r = market.step_orders(&actions, aa)?;
        totals.iter_mut().zip(r).for_each(|(t, r)| *t += r);
    }
    Ok(totals)
}

fn bootstrap_ci(
    samples: &[f64],
    stat: impl Fn(&[f64]) -> Result<f64>,
    rng: &mut RandomStream,
) -> Result<(Metric, Metric)> {
    let n = samples.len();
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut buf = vec![0.0; n];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        buf.iter_mut().for_each(|v| *v = samples[rng.below(n)]);
        match stat(&buf) {
            Ok(v) => stats.push(v),
            Err(Error::UndefinedSharpe) => {}
            Err(e) => return Err(e),
        }
    }
    if stats.is_empty() {
        return Ok((Metric::NotAvailable, Metric::NotAvailable));
    }
    stats.sort_by(f64::total_cmp);
    let q = |p: f64| stats[((p * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1)];
    Ok((Metric::Value(q(0.025)), Metric::Value(q(0.975))))
}

#[derive(Debug, Clone)]
pub struct TournamentSpec {
    pub strategies: Vec<(String, Policy)>,
    pub market: MarketConfig,
    pub players: usize,
    /// Payoff samples per seat and profile.
    pub blocks: usize,
    pub episodes_per_block: usize,
    pub seed: u64,
}

/// Seats of a profile in strategy order, e.g. `(1,0,1)` → `[0, 2]`.
pub fn seat_assignment(counts: &[usize]) -> Vec<usize> {
    counts.iter().enumerate().flat_map(|(j, &n)| std::iter::repeat_n(j, n)).collect()
}

pub fn profile_key(counts: &[usize]) -> String {
    counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_profile_key(key: &str) -> Result<Vec<usize>> {
    key.split(',')
        .map(|c| c.trim().parse::<usize>().map_err(|e| contract(format!("bad profile key {key:?}: {e}"))))
        .collect()
}

/// One seat's summary inside a tournament profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeatReport {
    pub strategy: String,
    /// Mean of the block Sharpe ratios.
    pub sharpe: Metric,
    pub n: usize,
    pub ci_lo: Metric,
    pub ci_hi: Metric,
    /// Stream seed of every block.
    pub seeds: Vec<u64>,
    /// Block Sharpe ratios, the meta-game payoff samples.
    pub samples: Vec<Metric>,
}

/// `profile → seat → report`.
pub type TournamentReport = BTreeMap<String, BTreeMap<String, SeatReport>>;

fn summarize(strategy: &str, samples: Vec<Metric>, seeds: Vec<u64>, rng: &mut RandomStream) -> Result<SeatReport> {
    let values: Option<Vec<f64>> = samples.iter().map(|m| m.value()).collect();
    let (sharpe, ci_lo, ci_hi) = match values {
        Some(v) if v.len() >= 2 => {
            let (lo, hi) = bootstrap_ci(&v, |s| Ok(mean(s)), rng)?;
            (Metric::Value(mean(&v)), lo, hi)
        }
        Some(v) if v.len() == 1 => (Metric::Value(v[0]), Metric::NotAvailable, Metric::NotAvailable),
        _ => (Metric::NotAvailable, Metric::NotAvailable, Metric::NotAvailable),
    };
    Ok(SeatReport { strategy: strategy.to_string(), sharpe, n: samples.len(), ci_lo, ci_hi, seeds, samples })
}

/// Plays every unordered profile with all seats frozen. Each block of
/// episodes runs on a fresh market and a stream keyed by `(seed, profile,
/// block)`, so the outcome does not depend on scheduling order.
pub fn run_tournament(spec: &TournamentSpec) -> Result<TournamentReport> {
    if spec.blocks < 2 {
        return Err(contract(format!("a tournament needs at least 2 blocks, got {}", spec.blocks)));
    }
    if spec.episodes_per_block < 2 {
        return Err(contract("block Sharpe ratios need at least 2 episodes per block"));
    }
    let k = spec.strategies.len();
    let probe = Market::new(spec.market.clone(), spec.players)?;
    for (_, p) in &spec.strategies {
        p.check_market(&probe)?;
    }
    let mut report = TournamentReport::new();
    for (pi, counts) in crate::egt::enumerate_profiles(k, spec.players).into_iter().enumerate() {
        let seats = seat_assignment(&counts);
        let policies: Vec<&Policy> = seats.iter().map(|&j| &spec.strategies[j].1).collect();
        let mut samples = vec![Vec::with_capacity(spec.blocks); seats.len()];
        let mut seeds = Vec::with_capacity(spec.blocks);
        for b in 0..spec.blocks {
            let mut rng = RandomStream::derived(spec.seed, ((pi as u64) << 32) | b as u64);
            seeds.push(rng.seed());
            let mut market = Market::new(spec.market.clone(), seats.len())?;
            let mut per_seat = vec![Vec::with_capacity(spec.episodes_per_block); seats.len()];
            for _ in 0..spec.episodes_per_block {
                let totals = play_episode(&mut market, &policies, None, &mut rng)?;
                per_seat.iter_mut().zip(totals).for_each(|(v, t)| v.push(t));
            }
            for (i, r) in per_seat.iter().enumerate() {
                samples[i].push(Metric::from_result(sharpe_ratio(r))?);
            }
        }
        let mut boot = RandomStream::derived(spec.seed ^ BOOTSTRAP_STREAM, pi as u64);
        let mut by_seat = BTreeMap::new();
        for (i, s) in samples.into_iter().enumerate() {
            let name = &spec.strategies[seats[i]].0;
            by_seat.insert(i.to_string(), summarize(name, s, seeds.clone(), &mut boot)?);
        }
        report.insert(profile_key(&counts), by_seat);
    }
    Ok(report)
}

/// Meta-game samples from a tournament report. Undefined block Sharpe
/// ratios make the profile unusable and are reported as such.
pub fn match_results(report: &TournamentReport, strategies: &[String]) -> Result<MatchResults> {
    let mut out = MatchResults::new();
    for (key, seats) in report {
        let counts = parse_profile_key(key)?;
        let mut list = Vec::new();
        for (seat, r) in seats {
            let strategy = strategies
                .iter()
                .position(|s| *s == r.strategy)
                .ok_or_else(|| contract(format!("profile {key} seat {seat}: unknown strategy {:?}", r.strategy)))?;
            let samples = r
                .samples
                .iter()
                .map(|m| m.value())
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::IncompleteTournament(format!("({key}) seat {seat}: undefined Sharpe ratio")))?;
            list.push(SeatSamples { strategy, samples });
        }
        out.insert(counts, list);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    None,
    Zi { count: usize, intensity: f64, seed: u64 },
    Adversary(Policy),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub sharpe: Metric,
    pub ci_lo: Metric,
    pub ci_hi: Metric,
    pub n: usize,
    pub seed: u64,
    pub mean_return: f64,
    pub std_return: f64,
}

/// Episode returns of a frozen policy in a perturbed single-seat market.
pub fn perturbation_returns(
    policy: &Policy,
    perturbation: &Perturbation,
    market: &MarketConfig,
    n_runs: usize,
    seed: u64,
) -> Result<EpisodeReturns> {
    let cfg = match perturbation {
        Perturbation::Zi { count, intensity, seed } => inject_zi_agents(market, *count, *intensity, *seed),
        _ => market.clone(),
    };
    let mut m = Market::new(cfg, 1)?;
    policy.check_market(&m)?;
    let adversary = match perturbation {
        Perturbation::Adversary(p) => {
            p.check_market(&m)?;
            Some(p)
        }
        _ => None,
    };
    let mut rng = RandomStream::derived(seed, 0);
    let mut returns = Vec::with_capacity(n_runs);
    for _ in 0..n_runs {
        returns.push(play_episode(&mut m, &[policy], adversary, &mut rng)?[0]);
    }
    Ok(EpisodeReturns { returns, seeds: vec![rng.seed()] })
}

/// Sharpe over `n_runs` perturbed episodes with a percentile bootstrap
/// interval; an undefined Sharpe is reported as `n/a`.
pub fn perturbation_eval(
    policy: &Policy,
    perturbation: &Perturbation,
    market: &MarketConfig,
    n_runs: usize,
    seed: u64,
) -> Result<EvalReport> {
    if n_runs < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n_runs });
    }
    let ep = perturbation_returns(policy, perturbation, market, n_runs, seed)?;
    let sharpe = Metric::from_result(ep.sharpe())?;
    let mut boot = RandomStream::derived(seed, BOOTSTRAP_STREAM);
    let (ci_lo, ci_hi) = bootstrap_ci(&ep.returns, sharpe_ratio, &mut boot)?;
    Ok(EvalReport {
        sharpe,
        ci_lo,
        ci_hi,
        n: n_runs,
        seed,
        mean_return: mean(&ep.returns),
        std_return: sample_variance(&ep.returns).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::PriceSource;
    use proptest::prelude::*;

    fn flat_market() -> MarketConfig {
        MarketConfig { price: PriceSource::Path { mids: vec![100.0; 200] }, episode_length: 20, ..Default::default() }
    }

    #[test]
    fn sharpe_cases() {
        assert_eq!(sharpe_ratio(&[1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(sharpe_ratio(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert!(matches!(sharpe_ratio(&[4.0; 3]), Err(Error::UndefinedSharpe)));
        assert!(matches!(sharpe_ratio(&[4.0]), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn metric_json() {
        let v = serde_json::to_string(&[Metric::Value(0.5), Metric::NotAvailable]).unwrap();
        assert_eq!(v, r#"[0.5,"n/a"]"#);
        let back: Vec<Metric> = serde_json::from_str(&v).unwrap();
        assert_eq!(back, vec![Metric::Value(0.5), Metric::NotAvailable]);
        assert!(serde_json::from_str::<Metric>(r#""zero""#).is_err());
    }

    #[test]
    fn do_nothing_self_play_is_undefined() {
        let cfg = flat_market();
        let p = Policy::do_nothing(cfg.num_states(), cfg.num_actions());
        let spec = TournamentSpec {
            strategies: vec![("idle".into(), p)],
            market: cfg,
            players: 2,
            blocks: 3,
            episodes_per_block: 4,
            seed: 1,
        };
        let report = run_tournament(&spec).unwrap();
        let seat = &report["2"]["0"];
        assert_eq!(seat.sharpe, Metric::NotAvailable);
        assert!(seat.samples.iter().all(|m| *m == Metric::NotAvailable));
        let err = match_results(&report, &["idle".to_string()]).unwrap_err();
        assert!(err.to_string().contains("(2)"), "{err}");
    }

    /// Buys one tick up on positive imbalance, sells on negative, with the
    /// cutoff bin shifted by the parity of `seed`.
    fn momentum_policy(cfg: &MarketConfig, seed: u64) -> Policy {
        let ib = cfg.imbalance_bins;
        let mid = ib / 2 + (seed as usize % 2);
        let mut q = QTable::zeros(cfg.num_states(), cfg.num_actions());
        for s in 0..cfg.num_states() {
            let bin = s % ib;
            let a = if bin > mid.min(ib - 1) { 1 } else if bin < mid { cfg.num_offsets + 1 } else { 0 };
            q.set(StateId(s), ActionId(a), 1.0);
        }
        Policy::greedy(q)
    }

    #[test]
    fn tournament_schedules_every_profile_deterministically() {
        let cfg = MarketConfig::default();
        let names = ["a", "b", "c"];
        let spec = TournamentSpec {
            strategies: names.iter().enumerate().map(|(i, n)| (n.to_string(), momentum_policy(&cfg, i as u64))).collect(),
            market: cfg,
            players: 2,
            blocks: 3,
            episodes_per_block: 5,
            seed: 9,
        };
        let a = run_tournament(&spec).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, run_tournament(&spec).unwrap());
        assert_eq!(a["1,0,1"]["0"].strategy, "a");
        assert_eq!(a["1,0,1"]["1"].strategy, "c");
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let mr = match_results(&a, &names).unwrap();
        assert_eq!(mr[&vec![0, 2, 0]].len(), 2);
    }

    #[test]
    fn self_play_seats_are_symmetric() {
        let cfg = MarketConfig::default();
        let spec = TournamentSpec {
            strategies: vec![("x".into(), momentum_policy(&cfg, 4))],
            market: cfg,
            players: 2,
            blocks: 20,
            episodes_per_block: 5,
            seed: 3,
        };
        let r = run_tournament(&spec).unwrap();
        let s0: Vec<f64> = r["2"]["0"].samples.iter().filter_map(|m| m.value()).collect();
        let s1: Vec<f64> = r["2"]["1"].samples.iter().filter_map(|m| m.value()).collect();
        // two-sample Kolmogorov–Smirnov statistic; 1% critical value for 20 vs 20 is 0.515
        let mut all: Vec<f64> = s0.iter().chain(&s1).copied().collect();
        all.sort_by(f64::total_cmp);
        let cdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
        let d = all.iter().map(|&x| (cdf(&s0, x) - cdf(&s1, x)).abs()).fold(0.0, f64::max);
        assert!(d < 0.515, "{d}");
    }

    #[test]
    fn perturbation_determinism_and_zero_zi() {
        let cfg = MarketConfig::default();
        let p = momentum_policy(&cfg, 7);
        let a = perturbation_eval(&p, &Perturbation::None, &cfg, 30, 5).unwrap();
        assert_eq!(a, perturbation_eval(&p, &Perturbation::None, &cfg, 30, 5).unwrap());
        let z = perturbation_eval(&p, &Perturbation::Zi { count: 0, intensity: 0.7, seed: 11 }, &cfg, 30, 5).unwrap();
        assert_eq!(a, z);
        if let (Metric::Value(lo), Metric::Value(s), Metric::Value(hi)) = (a.ci_lo, a.sharpe, a.ci_hi) {
            assert!(lo <= s && s <= hi, "{a:?}");
        }
        let adv = Perturbation::Adversary(momentum_policy(&cfg, 8));
        let b = perturbation_eval(&p, &adv, &cfg, 30, 5).unwrap();
        assert_ne!(a.mean_return, b.mean_return);
    }

    #[test]
    fn flat_do_nothing_eval_is_na() {
        let cfg = flat_market();
        let p = Policy::do_nothing(cfg.num_states(), cfg.num_actions());
        let r = perturbation_eval(&p, &Perturbation::None, &cfg, 10, 0).unwrap();
        assert_eq!(r.sharpe, Metric::NotAvailable);
        assert_eq!(r.ci_lo, Metric::NotAvailable);
    }

    proptest! {
        #[test]
        fn sharpe_scale_covariance(xs in proptest::collection::vec(-10.0f64..10.0, 3..30), c in 0.01f64..100.0) {
            prop_assume!(sample_variance(&xs) > 1e-6);
            let s = sharpe_ratio(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
            prop_assert!((sharpe_ratio(&scaled).unwrap() - s).abs() <= 1e-9 * (1.0 + s.abs()));
            prop_assert!((sharpe_ratio(&neg).unwrap() + s).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }
}
