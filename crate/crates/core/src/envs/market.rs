//! A toy single-ticker market.
//!
//! Each step every participant may submit one limit order: buy at
//! `mid + i·K` or sell at `mid - i·K` for `i in 1..=num_offsets`, or do
//! nothing. An order fills iff its price lies within `fill_halfwidth` of the
//! next mid. The exogenous order flow `f_t` is an AR(1) process that drives
//! the next price move and is visible through the volume imbalance, which
//! the participants' own submitted orders also push around. Rewards are the
//! per-step change in mark-to-market value `cash + holdings · mid`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Environment, GameEnvironment, JointTransition, Transition};
use crate::rng::RandomStream;
use crate::table::{ActionId, StateId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceSource {
    /// `mid(t+1) = mid(t) + K·(signal·f_t + sigma·ε_t)`, redrawn on every reset.
    RandomWalk {
        start: f64,
        sigma: f64,
        signal: f64,
        #[serde(default = "default_persistence")]
        persistence: f64,
    },
    /// Fixed mid path; the flow is read off the next return in ticks.
    Path { mids: Vec<f64> },
    /// Like `Path`, loaded from a `t,mid` CSV.
    Csv { path: PathBuf },
}

fn default_persistence() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketConfig {
    pub price: PriceSource,
    pub tick: f64,
    pub num_offsets: usize,
    pub holdings_bins: usize,
    pub imbalance_bins: usize,
    pub max_holdings: i64,
    pub fill_halfwidth: f64,
    pub episode_length: usize,
    /// Weight of the exogenous flow inside the imbalance.
    pub flow_signal: f64,
    /// Weight of each protagonist or ZI order inside the imbalance.
    pub agent_flow_weight: f64,
    pub adversary_flow_weight: f64,
    pub zi_count: usize,
    pub zi_intensity: f64,
    /// Temporary mid displacement per unit of net ZI flow, in ticks.
    pub zi_impact: f64,
    pub zi_seed: u64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            price: PriceSource::RandomWalk {
                start: 100.0,
                sigma: 0.5,
                signal: 1.0,
                persistence: default_persistence(),
            },
            tick: 1.0,
            num_offsets: 6,
            holdings_bins: 7,
            imbalance_bins: 5,
            max_holdings: 3,
            fill_halfwidth: 1.5,
            episode_length: 50,
            flow_signal: 1.0,
            agent_flow_weight: 0.25,
            adversary_flow_weight: 1.5,
            zi_count: 0,
            zi_intensity: 0.0,
            zi_impact: 0.5,
            zi_seed: 0,
        }
    }
}

impl MarketConfig {
    pub fn num_actions(&self) -> usize {
        2 * self.num_offsets + 1
    }

    pub fn num_states(&self) -> usize {
        self.holdings_bins * self.imbalance_bins
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.tick.is_finite() && self.tick > 0.0) {
            return bad(format!("tick must be positive, got {}", self.tick));
        }
        if self.num_offsets == 0 {
            return bad("num_offsets must be positive".into());
        }
        if self.holdings_bins == 0 || self.holdings_bins.is_multiple_of(2) {
            return bad(format!("holdings_bins must be odd, got {}", self.holdings_bins));
        }
        if self.imbalance_bins == 0 {
            return bad("imbalance_bins must be positive".into());
        }
        if self.max_holdings < 0 {
            return bad("max_holdings must be nonnegative".into());
        }
        if !(self.fill_halfwidth.is_finite() && self.fill_halfwidth >= 0.0) {
            return bad("fill_halfwidth must be nonnegative".into());
        }
        if self.episode_length == 0 {
            return bad("episode_length must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.zi_intensity) {
            return bad(format!("zi_intensity {} outside [0, 1]", self.zi_intensity));
        }
        let weights = [self.flow_signal, self.agent_flow_weight, self.adversary_flow_weight, self.zi_impact];
        if weights.iter().any(|w| !w.is_finite()) {
            return bad("flow weights must be finite".into());
        }
        match &self.price {
            PriceSource::RandomWalk { start, sigma, signal, persistence } => {
                if !(start.is_finite() && sigma.is_finite() && *sigma >= 0.0 && signal.is_finite()) {
                    return bad("random walk parameters must be finite with sigma >= 0".into());
                }
                if !(0.0..1.0).contains(persistence) {
                    return bad(format!("persistence {persistence} outside [0, 1)"));
                }
            }
            PriceSource::Path { mids } => self.check_path(mids)?,
            PriceSource::Csv { .. } => {}
        }
        Ok(())
    }

    fn check_path(&self, mids: &[f64]) -> Result<()> {
        if mids.len() < self.episode_length + 1 {
            return Err(Error::InvalidConfig(format!(
                "price path has {} points, episode needs {}",
                mids.len(),
                self.episode_length + 1
            )));
        }
        if mids.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidConfig("price path has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Adds zero-intelligence traders to a configuration.
pub fn inject_zi_agents(cfg: &MarketConfig, count: usize, intensity: f64, seed: u64) -> MarketConfig {
    MarketConfig { zi_count: count, zi_intensity: intensity, zi_seed: seed, ..cfg.clone() }
}

/// Reads a `t,mid` price file.
pub fn load_price_csv(path: &Path) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(file);
    let mut mids = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Load { line, message: e.to_string() })?;
        if i == 0 {
            if record.iter().collect::<Vec<_>>() != ["t", "mid"] {
                return Err(Error::Load { line, message: "expected header `t,mid`".into() });
            }
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Load { line, message: format!("expected 2 fields, got {}", record.len()) });
        }
        record[0]
            .parse::<u64>()
            .map_err(|e| Error::Load { line, message: format!("bad step `{}`: {e}", &record[0]) })?;
        let mid: f64 = record[1]
            .parse()
            .map_err(|e| Error::Load { line, message: format!("bad mid `{}`: {e}", &record[1]) })?;
        if !mid.is_finite() {
            return Err(Error::Load { line, message: "non-finite mid".into() });
        }
        mids.push(mid);
    }
    Ok(mids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    None,
    Buy(usize),
    Sell(usize),
}

impl Order {
    pub fn from_action(a: ActionId, num_offsets: usize) -> Result<Self> {
        match a.0 {
            0 => Ok(Order::None),
            i if i <= num_offsets => Ok(Order::Buy(i)),
            i if i <= 2 * num_offsets => Ok(Order::Sell(i - num_offsets)),
            _ => Err(crate::error::contract(format!("market action {a} out of range"))),
        }
    }

    fn direction(self) -> i64 {
        match self {
            Order::None => 0,
            Order::Buy(_) => 1,
            Order::Sell(_) => -1,
        }
    }
}

/// One participant's view of the market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState {
    pub t: usize,
    pub holdings: i64,
    pub cash: f64,
    pub imbalance: f64,
    pub mid: f64,
    pub observed_state: StateId,
}

impl MarketState {
    pub fn mark_to_market(&self) -> f64 {
        self.cash + self.holdings as f64 * self.mid
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Account {
    holdings: i64,
    cash: f64,
}

#[derive(Debug, Clone)]
pub struct Market {
    cfg: MarketConfig,
    stored_path: Option<Vec<f64>>,
    mids: Vec<f64>,
    flows: Vec<f64>,
    accounts: Vec<Account>,
    t: usize,
    mid: f64,
    imbalance: f64,
    episode: u64,
    zi: RandomStream,
    started: bool,
}

impl Market {
    pub fn new(cfg: MarketConfig, seats: usize) -> Result<Self> {
        cfg.validate()?;
        if seats == 0 {
            return Err(Error::InvalidConfig("market needs at least one seat".into()));
        }
        let stored_path = match &cfg.price {
            PriceSource::RandomWalk { .. } => None,
            PriceSource::Path { mids } => Some(mids.clone()),
            PriceSource::Csv { path } => {
                let mids = load_price_csv(path)?;
                cfg.check_path(&mids)?;
                Some(mids)
            }
        };
        let zi = RandomStream::derived(cfg.zi_seed, 0);
        Ok(Self {
            cfg,
            stored_path,
            mids: Vec::new(),
            flows: Vec::new(),
            accounts: vec![Account::default(); seats],
            t: 0,
            mid: 0.0,
            imbalance: 0.0,
            episode: 0,
            zi,
            started: false,
        })
    }

    pub fn config(&self) -> &MarketConfig {
        &self.cfg
    }

    pub fn seats(&self) -> usize {
        self.accounts.len()
    }

    pub fn num_states(&self) -> usize {
        self.cfg.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.cfg.num_actions()
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.episode_length
    }

    /// Starts a new episode; price randomness is drawn from `rng`, ZI
    /// randomness from a stream keyed by `(zi_seed, episode index)`.
    pub fn reset_episode(&mut self, rng: &mut RandomStream) {
        let len = self.cfg.episode_length;
        let k = self.cfg.tick;
        match (&self.cfg.price, &self.stored_path) {
            (PriceSource::RandomWalk { start, sigma, signal, persistence }, _) => {
                let innovation = (1.0 - persistence * persistence).sqrt();
                self.mids = Vec::with_capacity(len + 1);
                self.flows = Vec::with_capacity(len + 1);
                let mut f = rng.standard_normal();
                let mut m = *start;
                for _ in 0..=len {
                    self.mids.push(m);
                    self.flows.push(f);
                    m += k * (signal * f + sigma * rng.standard_normal());
                    f = persistence * f + innovation * rng.standard_normal();
                }
            }
            (_, Some(path)) => {
                let offset = rng.below(path.len() - len);
                self.mids = path[offset..=offset + len].to_vec();
                self.flows = (0..=len)
                    .map(|t| match path.get(offset + t + 1) {
                        Some(next) => (next - path[offset + t]) / k,
                        None => 0.0,
                    })
                    .collect();
            }
            (_, None) => unreachable!("stored path is loaded at construction"),
        }
        self.zi = RandomStream::derived(self.cfg.zi_seed, self.episode);
        self.episode += 1;
        self.accounts.iter_mut().for_each(|a| *a = Account::default());
        self.t = 0;
        self.mid = self.mids[0];
        self.imbalance = (self.cfg.flow_signal * self.flows[0]).tanh();
        self.started = true;
    }

    /// Overrides a seat's position; the cap still applies.
    pub fn set_position(&mut self, seat: usize, holdings: i64, cash: f64) -> Result<()> {
        if holdings.abs() > self.cfg.max_holdings || !cash.is_finite() {
            return Err(Error::InvalidParameter(format!("position {holdings} exceeds the holdings cap")));
        }
        self.accounts[seat] = Account { holdings, cash };
        Ok(())
    }

    pub fn state(&self, seat: usize) -> MarketState {
        let a = self.accounts[seat];
        MarketState {
            t: self.t,
            holdings: a.holdings,
            cash: a.cash,
            imbalance: self.imbalance,
            mid: self.mid,
            observed_state: self.observe(seat),
        }
    }

    pub fn observe(&self, seat: usize) -> StateId {
        let c = &self.cfg;
        let h = self.accounts[seat].holdings;
        let span = (2 * c.max_holdings + 1) as f64;
        let hbin = (((h + c.max_holdings) as f64 / span) * c.holdings_bins as f64) as usize;
        let ibin = (((self.imbalance + 1.0) / 2.0) * c.imbalance_bins as f64) as usize;
        StateId(hbin.min(c.holdings_bins - 1) * c.imbalance_bins + ibin.min(c.imbalance_bins - 1))
    }

    fn fills(&self, order: Order, base: f64, next_mid: f64) -> Option<f64> {
        let k = self.cfg.tick;
        let price = match order {
            Order::None => return None,
            Order::Buy(i) => base + i as f64 * k,
            Order::Sell(i) => base - i as f64 * k,
        };
        ((price - next_mid).abs() <= self.cfg.fill_halfwidth).then_some(price)
    }

    /// Advances one step with one action per seat and an optional adversary
    /// order, processed first. Returns the per-seat rewards.
    pub fn step_orders(&mut self, actions: &[ActionId], adversary: Option<ActionId>) -> Result<Vec<f64>> {
        if !self.started || self.is_done() {
            return Err(Error::EpisodeComplete(self.t));
        }
        if actions.len() != self.accounts.len() {
            return Err(crate::error::contract(format!(
                "{} actions for {} seats",
                actions.len(),
                self.accounts.len()
            )));
        }
        let c = &self.cfg;
        let n = c.num_offsets;
        let orders = actions.iter().map(|&a| Order::from_action(a, n)).collect::<Result<Vec<_>>>()?;
        let adversary = adversary.map(|a| Order::from_action(a, n)).transpose()?;

        let mut zi_net = 0i64;
        for _ in 0..c.zi_count {
            if self.zi.bernoulli(c.zi_intensity) {
                zi_net += [1, -1, 0][self.zi.below(3)];
            }
        }
        let base = self.mid;
        let next_mid = self.mids[self.t + 1] + c.zi_impact * c.tick * zi_net as f64;

        let mut flow = c.agent_flow_weight * zi_net as f64;
        if let Some(order) = adversary {
            flow += c.adversary_flow_weight * order.direction() as f64;
        }
        let before: Vec<f64> = self.accounts.iter().map(|a| a.cash + a.holdings as f64 * base).collect();
        for (seat, &order) in orders.iter().enumerate() {
            let acct = self.accounts[seat];
            let target = acct.holdings + order.direction();
            if target.abs() > c.max_holdings {
                continue;
            }
            flow += c.agent_flow_weight * order.direction() as f64;
            if let Some(price) = self.fills(order, base, next_mid) {
                let a = &mut self.accounts[seat];
                a.holdings = target;
                a.cash -= order.direction() as f64 * price;
            }
        }

        self.t += 1;
        self.mid = next_mid;
        self.imbalance = (self.cfg.flow_signal * self.flows[self.t] + flow).tanh();
        let rewards: Vec<f64> = self
            .accounts
            .iter()
            .zip(&before)
            .map(|(a, b)| a.cash + a.holdings as f64 * next_mid - b)
            .collect();
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NumericalFailure("non-finite market reward".into()));
        }
        Ok(rewards)
    }

    /// Single-seat step returning `(state, reward_P, reward_A)` with
    /// `reward_A = -reward_P`.
    pub fn market_step(&mut self, ap: ActionId, aa: Option<ActionId>) -> Result<(MarketState, f64, f64)> {
        let r = self.step_orders(&[ap], aa)?[0];
        Ok((self.state(0), r, -r))
    }
}

impl Environment for Market {
    fn num_states(&self) -> usize {
        self.cfg.num_states()
    }

    fn num_actions(&self) -> usize {
        self.cfg.num_actions()
    }

    fn reset(&mut self, rng: &mut RandomStream) -> Result<StateId> {
        self.reset_episode(rng);
        Ok(self.observe(0))
    }

    fn step(&mut self, action: ActionId, _rng: &mut RandomStream) -> Result<Transition> {
        let reward = self.step_orders(&[action], None)?[0];
        Ok(Transition { reward, next: self.observe(0), done: self.is_done() })
    }
}

/// The single-seat market with an adversary seat; zero-sum rewards.
#[derive(Debug, Clone)]
pub struct AdversarialMarket {
    pub market: Market,
}

impl AdversarialMarket {
    pub fn new(cfg: MarketConfig) -> Result<Self> {
        Ok(Self { market: Market::new(cfg, 1)? })
    }
}

impl GameEnvironment for AdversarialMarket {
    fn num_states(&self) -> usize {
        self.market.num_states()
    }

    fn num_actions_p(&self) -> usize {
        self.market.num_actions()
    }

    fn num_actions_a(&self) -> usize {
        self.market.num_actions()
    }

    fn reset(&mut self, rng: &mut RandomStream) -> Result<StateId> {
        self.market.reset_episode(rng);
        Ok(self.market.observe(0))
    }

    fn step(&mut self, ap: ActionId, aa: ActionId, _rng: &mut RandomStream) -> Result<JointTransition> {
        let (state, reward_p, reward_a) = self.market.market_step(ap, Some(aa))?;
        Ok(JointTransition { reward_p, reward_a, next: state.observed_state, done: self.market.is_done() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::sample_variance;

    fn flat(len: usize) -> MarketConfig {
        MarketConfig {
            price: PriceSource::Path { mids: vec![100.0; len + 1] },
            episode_length: len,
            ..MarketConfig::default()
        }
    }

    #[test]
    fn thirteen_actions() {
        assert_eq!(MarketConfig::default().num_actions(), 13);
        assert_eq!(MarketConfig::default().num_states(), 35);
    }

    #[test]
    fn do_nothing_on_flat_prices() {
        let mut m = Market::new(flat(10), 1).unwrap();
        let mut rng = RandomStream::new(0);
        m.reset_episode(&mut rng);
        for _ in 0..10 {
            let (_, rp, ra) = m.market_step(ActionId(0), None).unwrap();
            assert_eq!((rp, ra), (0.0, -0.0));
        }
        assert!(matches!(m.market_step(ActionId(0), None), Err(Error::EpisodeComplete(10))));
    }

    #[test]
    fn holding_earns_price_move() {
        let cfg = MarketConfig {
            price: PriceSource::Path { mids: vec![100.0, 100.25] },
            episode_length: 1,
            max_holdings: 5,
            holdings_bins: 11,
            ..MarketConfig::default()
        };
        let mut m = Market::new(cfg, 1).unwrap();
        m.reset_episode(&mut RandomStream::new(0));
        m.set_position(0, 5, -500.0).unwrap();
        let (_, r, _) = m.market_step(ActionId(0), None).unwrap();
        assert!((r - 5.0 * 0.25).abs() < 1e-12);
    }

    #[test]
    fn buy_fills_on_static_book() {
        let cfg = MarketConfig { fill_halfwidth: 1.0, ..flat(3) };
        let mut m = Market::new(cfg, 1).unwrap();
        m.reset_episode(&mut RandomStream::new(0));
        let (s, _, _) = m.market_step(ActionId(1), None).unwrap();
        assert_eq!(s.holdings, 1);
        assert_eq!(s.cash, -101.0);
        // The sell at the next offset set is 100 - 2 = 98, two ticks away.
        let (s, _, _) = m.market_step(ActionId(8), None).unwrap();
        assert_eq!(s.holdings, 1);
    }

    #[test]
    fn holdings_cap_rejects_orders() {
        let cfg = MarketConfig { fill_halfwidth: 10.0, ..flat(8) };
        let mut m = Market::new(cfg, 1).unwrap();
        m.reset_episode(&mut RandomStream::new(0));
        for _ in 0..8 {
            let (s, _, _) = m.market_step(ActionId(1), None).unwrap();
            assert!(s.holdings <= 3);
        }
        assert_eq!(m.state(0).holdings, 3);
    }

    #[test]
    fn accounting_identity_telescopes() {
        let cfg = MarketConfig { zi_count: 4, zi_intensity: 0.7, ..MarketConfig::default() };
        let mut m = Market::new(cfg, 1).unwrap();
        let mut rng = RandomStream::new(5);
        for _ in 0..20 {
            m.reset_episode(&mut rng);
            let start = m.state(0).mark_to_market();
            let mut total = 0.0;
            while !m.is_done() {
                let a = ActionId(rng.below(13));
                let adv = Some(ActionId(rng.below(13)));
                let (s, r, _) = m.market_step(a, adv).unwrap();
                assert_eq!(s.mark_to_market(), s.cash + s.holdings as f64 * s.mid);
                assert!(s.holdings.abs() <= 3);
                total += r;
            }
            assert!((total - (m.state(0).mark_to_market() - start)).abs() < 1e-9);
        }
    }

    #[test]
    fn observed_state_binning() {
        let mut m = Market::new(flat(2), 1).unwrap();
        m.reset_episode(&mut RandomStream::new(0));
        // Flat path: zero flow, imbalance 0, centre bins.
        assert_eq!(m.observe(0), StateId(3 * 5 + 2));
        m.set_position(0, -3, 0.0).unwrap();
        assert_eq!(m.observe(0), StateId(2));
        m.set_position(0, 3, 0.0).unwrap();
        assert_eq!(m.observe(0), StateId(6 * 5 + 2));
    }

    fn imbalance_trace(cfg: &MarketConfig, episodes: u64) -> Vec<f64> {
        let mut m = Market::new(cfg.clone(), 1).unwrap();
        let mut out = Vec::new();
        for e in 0..episodes {
            let mut rng = RandomStream::new(e);
            m.reset_episode(&mut rng);
            while !m.is_done() {
                out.push(m.market_step(ActionId(0), None).unwrap().0.imbalance);
            }
        }
        out
    }

    #[test]
    fn zero_zi_agents_is_a_no_op() {
        let base = MarketConfig::default();
        assert_eq!(imbalance_trace(&base, 5), imbalance_trace(&inject_zi_agents(&base, 0, 0.9, 77), 5));
    }

    #[test]
    fn zi_agents_raise_imbalance_variance() {
        let base = flat(50);
        let zi = inject_zi_agents(&base, 10, 1.0, 3);
        let v0 = sample_variance(&imbalance_trace(&base, 100));
        let v1 = sample_variance(&imbalance_trace(&zi, 100));
        assert!(v1 > v0, "{v1} <= {v0}");
        assert_eq!(imbalance_trace(&zi, 3), imbalance_trace(&zi, 3));
    }

    #[test]
    fn csv_replay() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.csv");
        std::fs::write(&good, "t,mid\n0,100.0\n1,100.5\n2,99.5\n").unwrap();
        assert_eq!(load_price_csv(&good).unwrap(), vec![100.0, 100.5, 99.5]);
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "t,mid\n0,100.0\n1,abc\n").unwrap();
        match load_price_csv(&bad) {
            Err(Error::Load { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let cfg = MarketConfig { price: PriceSource::Csv { path: good }, episode_length: 2, ..MarketConfig::default() };
        let mut m = Market::new(cfg, 1).unwrap();
        m.reset_episode(&mut RandomStream::new(0));
        m.set_position(0, 1, -100.0).unwrap();
        let (_, r, _) = m.market_step(ActionId(0), None).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let text = "tick = 1.0\nbogus = 3\n";
        assert!(toml::from_str::<MarketConfig>(text).is_err());
        let ok: MarketConfig = toml::from_str("tick = 0.5\n[price]\nkind = \"random_walk\"\nstart = 10.0\nsigma = 1.0\nsignal = 0.5\n").unwrap();
        assert_eq!(ok.tick, 0.5);
    }
}
