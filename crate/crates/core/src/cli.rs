//! Batch experiment runner behind the `riskq` binary.
//!
//! Each subcommand reads one TOML config (schema version 1), resolves
//! relative paths against the config's directory and writes its artifacts
//! atomically into the output directory together with a `manifest.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::egt::{
    build_meta_payoff_table, directional_field, enumerate_profiles, find_equilibria, integrate_trajectory,
    risk_averse_payoff, simplex_svg, MetaPayoffTable, Mixture,
};
use crate::envs::{
    make_random_game, make_random_mdp, AdversarialMarket, Market, MarketConfig, PriceSource, RandomGameSpec,
    RandomMdpSpec, TabularGame, TabularMdp,
};
use crate::error::{Error, Result};
use crate::eval::{
    match_results, perturbation_eval, perturbation_returns, profile_key, run_tournament, sharpe_ratio, EvalReport,
    Metric, Perturbation, Policy, TournamentReport, TournamentSpec,
};
use crate::model::{GameEnvironment, GameModelEnv, GenerativeModel, MarkovGameModel, ModelEnv, Progress};
use crate::multi_agent::{train_ra3q_core, train_ramq_env, Ra3Config, RamqConfig};
use crate::numeric::{mean, sample_variance};
use crate::rng::RandomStream;
use crate::single_agent::{
    bellman_residual, train_ra21q_buffer, train_ra21q_generative, train_ra2q_env, train_raql_env, Ra21Config,
    Ra2Config, RaqlConfig, SampleSource,
};
use crate::table::{QTable, StateId, TableFile};

pub const SCHEMA_VERSION: u32 = 1;
const EVAL_STREAM: u64 = 0xe7a1;

#[derive(Debug, Parser)]
#[command(name = "riskq", version, about = "Risk-sensitive tabular Q-learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one algorithm on one environment.
    Train {
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play every profile of frozen policies and build the meta-payoff table.
    Tournament {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rebuild the meta-table from a saved results file without simulating.
        #[arg(long)]
        from_results: Option<PathBuf>,
    },
    /// Replicator analysis of a meta-payoff CSV.
    Egt {
        table: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Grid resolution of the directional field.
        #[arg(long)]
        field: Option<usize>,
        /// Start mixture (comma separated), step size and step count.
        #[arg(long, num_args = 3, value_names = ["X0", "DT", "STEPS"])]
        trajectory: Option<Vec<String>>,
        #[arg(long)]
        equilibria: bool,
        #[arg(long)]
        svg: bool,
        /// Speed below which a candidate counts as a rest point.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Sharpe ratios of frozen policies under market perturbations.
    Eval {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingArtifact(_) => 3,
        Error::NumericalFailure(_)
        | Error::SolverFailure(_)
        | Error::UndefinedSharpe
        | Error::InsufficientSamples { .. }
        | Error::IncompleteTournament(_) => 4,
        Error::Io(_) => 1,
        _ => 2,
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config, out } => cmd_train(&config, out.as_deref()).map(drop),
        Command::Tournament { config, out, from_results } => {
            cmd_tournament(&config, out.as_deref(), from_results.as_deref()).map(drop)
        }
        Command::Egt { table, out, field, trajectory, equilibria, svg, tol } => {
            let trajectory = trajectory.map(|t| parse_trajectory(&t)).transpose()?;
            let opts = EgtOptions { field, trajectory, equilibria, svg, tol };
            cmd_egt(&table, &out, &opts).map(drop)
        }
        Command::Eval { config, out } => cmd_eval(&config, out.as_deref()).map(drop),
    }
}

// ---------------------------------------------------------------- configs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    /// Row-major `(s, a) → s'` probabilities.
    pub transitions: Vec<f64>,
    pub mean_reward: Vec<f64>,
    #[serde(default)]
    pub reward_noise_sigma: f64,
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    RandomMdp(RandomMdpSpec),
    Mdp(MdpSpec),
    RandomGame(RandomGameSpec),
    Market(MarketConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Raql(RaqlConfig),
    Ra2q(Ra2Config),
    Ra21q(Ra21Config),
    Ramq(RamqConfig),
    Ra3q(Ra3Config),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSpec {
    pub checkpoints: usize,
    pub eval_episodes: usize,
    /// Episode length for tabular environments.
    pub eval_horizon: usize,
}

impl Default for CurveSpec {
    fn default() -> Self {
        Self { checkpoints: 20, eval_episodes: 20, eval_horizon: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub env: EnvSpec,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub curve: CurveSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRef {
    pub name: String,
    /// A saved table: 2-d tables act greedily, joint tables through their
    /// protagonist component.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TournamentConfig {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "two")]
    pub players: usize,
    pub blocks: usize,
    pub episodes_per_block: usize,
    pub beta_egt: f64,
    #[serde(default)]
    pub market: MarketConfig,
    pub strategies: Vec<PolicyRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    None,
    /// The configured adversary table acts every step.
    Adversarial,
    Zi { count: usize, intensity: f64, seed: u64 },
}

impl PerturbationSpec {
    fn label(&self) -> &'static str {
        match self {
            PerturbationSpec::None => "none",
            PerturbationSpec::Adversarial => "adversarial",
            PerturbationSpec::Zi { .. } => "zi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub n_runs: usize,
    #[serde(default)]
    pub market: MarketConfig,
    /// Joint table whose adversary component drives `adversarial`.
    #[serde(default)]
    pub adversary: Option<PathBuf>,
    pub policies: Vec<PolicyRef>,
    pub perturbations: Vec<PerturbationSpec>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn two() -> usize {
    2
}

/// A parsed config with the hash of its raw bytes.
struct Loaded<T> {
    config: T,
    hash: String,
    dir: PathBuf,
}

/// Git-style blob hash: sha256 of `"blob {len}\0"` followed by the bytes.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_config<T: for<'de> Deserialize<'de>>(path: &Path, version: impl Fn(&T) -> u32) -> Result<Loaded<T>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| Error::InvalidConfig(format!("{} is not UTF-8", path.display())))?;
    let config: T = toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    let v = version(&config);
    if v != SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!("unsupported schema version {v}, expected {SCHEMA_VERSION}")));
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, hash: blob_hash(&bytes), dir })
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

fn resolve_market(dir: &Path, cfg: &MarketConfig) -> MarketConfig {
    let mut cfg = cfg.clone();
    if let PriceSource::Csv { path } = &cfg.price {
        cfg.price = PriceSource::Csv { path: resolve(dir, path) };
    }
    cfg
}

fn output_dir(dir: &Path, configured: Option<&Path>, flag: Option<&Path>) -> PathBuf {
    match (flag, configured) {
        (Some(f), _) => f.to_path_buf(),
        (None, Some(c)) => resolve(dir, c),
        (None, None) => PathBuf::from("out"),
    }
}

// ---------------------------------------------------------------- output

/// Whole-file write through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent)?;
    let name = path.file_name().ok_or_else(|| Error::InvalidConfig(format!("bad output path {}", path.display())))?;
    let tmp = parent.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Collects artifacts and writes them with a manifest.
struct ArtifactSet {
    dir: PathBuf,
    command: &'static str,
    hash: String,
    seed: u64,
    echo: serde_json::Value,
    written: BTreeMap<String, String>,
}

impl ArtifactSet {
    fn new(dir: PathBuf, command: &'static str, hash: &str, seed: u64, echo: serde_json::Value) -> Self {
        Self { dir, command, hash: hash.to_string(), seed, echo, written: BTreeMap::new() }
    }

    /// `config` field embedded in JSON artifacts.
    fn stamp(&self) -> serde_json::Value {
        json!({ "hash": self.hash, "experiment": self.echo })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.written.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    fn finish(self) -> Result<Vec<PathBuf>> {
        let manifest = json!({
            "version": SCHEMA_VERSION,
            "command": self.command,
            "config_hash": self.hash,
            "seed": self.seed,
            "config": self.echo,
            "artifacts": self.written,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        write_atomic(&path, text.as_bytes())?;
        let mut out: Vec<PathBuf> = self.written.keys().map(|k| self.dir.join(k)).collect();
        out.push(path);
        Ok(out)
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn metric_text(m: Metric) -> String {
    match m {
        Metric::Value(v) => format!("{v}"),
        Metric::NotAvailable => "n/a".into(),
    }
}

// ---------------------------------------------------------------- train

/// Builds the training curve from monitor callbacks.
struct Curve<'e> {
    every: usize,
    next: usize,
    td_abs: f64,
    td_n: usize,
    rows: Vec<(usize, f64, Metric)>,
    eval: &'e dyn Fn(&QTable) -> Result<Metric>,
    failure: Option<Error>,
}

impl<'e> Curve<'e> {
    fn new(total: usize, checkpoints: usize, eval: &'e dyn Fn(&QTable) -> Result<Metric>) -> Self {
        let every = total.div_ceil(checkpoints.max(1)).max(1);
        Self { every, next: every, td_abs: 0.0, td_n: 0, rows: Vec::new(), eval, failure: None }
    }

    fn observe(&mut self, p: &Progress<'_>) {
        self.td_abs += p.td.abs();
        self.td_n += 1;
        if p.step + 1 >= self.next {
            self.next = (p.step + 1) / self.every * self.every + self.every;
            let table = p.policy_table();
            self.record(p.step + 1, &table);
        }
    }

    fn record(&mut self, step: usize, table: &QTable) {
        let td = if self.td_n > 0 { self.td_abs / self.td_n as f64 } else { 0.0 };
        self.td_abs = 0.0;
        self.td_n = 0;
        match (self.eval)(table) {
            Ok(m) => self.rows.push((step, td, m)),
            Err(e) => {
                self.failure.get_or_insert(e);
            }
        }
    }

    fn finish(mut self, total: usize, table: &QTable) -> Result<String> {
        if self.rows.last().is_none_or(|r| r.0 < total) {
            self.record(total, table);
        }
        if let Some(e) = self.failure {
            return Err(e);
        }
        let mut s = String::from("step,mean_abs_td,sharpe\n");
        for (step, td, m) in &self.rows {
            let _ = writeln!(s, "{step},{td},{}", metric_text(*m));
        }
        Ok(s)
    }
}

fn episodes_sharpe(returns: &[f64]) -> Result<Metric> {
    Metric::from_result(sharpe_ratio(returns))
}

type CurveEval<'a> = Box<dyn Fn(&QTable) -> Result<Metric> + 'a>;

fn mdp_eval<M: GenerativeModel + ?Sized>(model: &M, table: &QTable, curve: &CurveSpec, seed: u64) -> Result<Metric> {
    let policy = Policy::greedy(table.clone());
    let mut rng = RandomStream::derived(seed, EVAL_STREAM);
    let mut returns = Vec::with_capacity(curve.eval_episodes);
    for _ in 0..curve.eval_episodes {
        let mut s = StateId(rng.below(model.num_states()));
        let mut total = 0.0;
        for _ in 0..curve.eval_horizon {
            let (r, next) = crate::model::sample_transition(model, s, policy.act(s), &mut rng)?;
            total += r;
            s = next;
        }
        returns.push(total);
    }
    episodes_sharpe(&returns)
}

fn game_eval<G: MarkovGameModel + ?Sized>(game: &G, table: &QTable, curve: &CurveSpec, seed: u64) -> Result<Metric> {
    let policy = Policy::greedy(table.clone());
    let mut rng = RandomStream::derived(seed, EVAL_STREAM);
    let mut env = GameModelEnv::new(game);
    let mut returns = Vec::with_capacity(curve.eval_episodes);
    for _ in 0..curve.eval_episodes {
        let mut s = env.reset(&mut rng)?;
        let mut total = 0.0;
        for _ in 0..curve.eval_horizon {
            let aa = crate::table::ActionId(rng.below(game.num_actions_a()));
            let tr = env.step(policy.act(s), aa, &mut rng)?;
            total += tr.reward_p;
            s = tr.next;
        }
        returns.push(total);
    }
    episodes_sharpe(&returns)
}

fn market_eval(cfg: &MarketConfig, table: &QTable, curve: &CurveSpec, seed: u64) -> Result<Metric> {
    let ep = perturbation_returns(&Policy::greedy(table.clone()), &Perturbation::None, cfg, curve.eval_episodes, seed ^ EVAL_STREAM)?;
    episodes_sharpe(&ep.returns)
}

/// What `cmd_train` produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub artifacts: Vec<PathBuf>,
    /// Expected shifted TD residual, for single-agent runs on exact models.
    pub residual: Option<f64>,
}

enum Trained {
    Single(QTable),
    Joint(crate::table::JointQTable, crate::table::JointQTable),
}

fn single_env_model(env: &EnvSpec) -> Result<Option<TabularMdp>> {
    match env {
        EnvSpec::RandomMdp(s) => make_random_mdp(s).map(Some),
        EnvSpec::Mdp(m) => TabularMdp::new(
            m.num_states,
            m.num_actions,
            m.transitions.clone(),
            m.mean_reward.clone(),
            m.reward_noise_sigma,
            m.discount,
        )
        .map(Some),
        _ => Ok(None),
    }
}

fn mismatch(alg: &str, env: &EnvSpec) -> Error {
    let kind = match env {
        EnvSpec::RandomMdp(_) => "random_mdp",
        EnvSpec::Mdp(_) => "mdp",
        EnvSpec::RandomGame(_) => "random_game",
        EnvSpec::Market(_) => "market",
    };
    Error::InvalidConfig(format!("algorithm {alg} cannot run on env {kind}"))
}

fn train_single(
    cfg: &TrainConfig,
    market: Option<&MarketConfig>,
    curve_out: &mut Option<String>,
) -> Result<(QTable, Option<f64>)> {
    let seed = cfg.seed;
    let mut rng = RandomStream::new(seed);
    let model = single_env_model(&cfg.env)?;
    let eval: CurveEval<'_> = match (&model, market) {
        (Some(m), _) => Box::new(move |t: &QTable| mdp_eval(m, t, &cfg.curve, seed)),
        (None, Some(mc)) => Box::new(move |t: &QTable| market_eval(mc, t, &cfg.curve, seed)),
        _ => return Err(mismatch("single-agent", &cfg.env)),
    };
    let mut market_env = market.map(|mc| Market::new(mc.clone(), 1)).transpose()?;
    let mut model_env = model.as_ref().map(ModelEnv::new);
    let env: &mut dyn crate::model::Environment = match (&mut model_env, &mut market_env) {
        (Some(e), _) => e,
        (None, Some(m)) => m,
        _ => unreachable!(),
    };
    let (total, table, u, gamma) = match &cfg.algorithm {
        AlgorithmSpec::Raql(c) => {
            let mut curve = Curve::new(c.steps, cfg.curve.checkpoints, &*eval);
            let q = train_raql_env(env, c, &mut rng, &mut |p| curve.observe(p))?;
            *curve_out = Some(curve.finish(c.steps, &q)?);
            (c.steps, q, c.utility, c.gamma)
        }
        AlgorithmSpec::Ra2q(c) => {
            let mut curve = Curve::new(c.steps, cfg.curve.checkpoints, &*eval);
            let q = train_ra2q_env(env, c, &mut rng, &mut |p| curve.observe(p))?.mean_table();
            *curve_out = Some(curve.finish(c.steps, &q)?);
            (c.steps, q, c.utility, c.gamma)
        }
        AlgorithmSpec::Ra21q(c) => {
            let total = c.epochs * c.epoch_length;
            let mut curve = Curve::new(total, cfg.curve.checkpoints, &*eval);
            let q = match (c.source, &model) {
                (SampleSource::Generative, Some(m)) => {
                    train_ra21q_generative(m, c, &mut rng, &mut |p| curve.observe(p))?
                }
                (SampleSource::Generative, None) => {
                    return Err(Error::InvalidConfig(
                        "ra21q on the market needs source = \"replay_buffer\"".into(),
                    ))
                }
                (SampleSource::ReplayBuffer, _) => train_ra21q_buffer(env, c, &mut rng, &mut |p| curve.observe(p))?,
            };
            *curve_out = Some(curve.finish(total, &q)?);
            (total, q, c.utility, c.gamma)
        }
        other => unreachable!("{other:?} is not single-agent"),
    };
    let _ = total;
    let residual = match &model {
        Some(m) => Some(bellman_residual(&table, m, &u, gamma, 0, &mut rng)?),
        None => None,
    };
    Ok((table, residual))
}

fn train_joint(cfg: &TrainConfig, curve_out: &mut Option<String>) -> Result<Trained> {
    let seed = cfg.seed;
    let mut rng = RandomStream::new(seed);
    let game: Option<TabularGame> = match &cfg.env {
        EnvSpec::RandomGame(s) => Some(make_random_game(s)?),
        _ => None,
    };
    let market_cfg = match &cfg.env {
        EnvSpec::Market(m) => Some(m.clone()),
        _ => None,
    };
    let eval: CurveEval<'_> = match (&game, &market_cfg) {
        (Some(g), _) => Box::new(move |t: &QTable| game_eval(g, t, &cfg.curve, seed)),
        (None, Some(mc)) => Box::new(move |t: &QTable| market_eval(mc, t, &cfg.curve, seed)),
        _ => {
            let alg = if matches!(cfg.algorithm, AlgorithmSpec::Ramq(_)) { "ramq" } else { "ra3q" };
            return Err(mismatch(alg, &cfg.env));
        }
    };
    let mut game_env = game.as_ref().map(GameModelEnv::new);
    let mut market_env = market_cfg.clone().map(AdversarialMarket::new).transpose()?;
    let env: &mut dyn GameEnvironment = match (&mut game_env, &mut market_env) {
        (Some(e), _) => e,
        (None, Some(m)) => m,
        _ => unreachable!(),
    };
    match &cfg.algorithm {
        AlgorithmSpec::Ramq(c) => {
            let mut curve = Curve::new(c.steps, cfg.curve.checkpoints, &*eval);
            let (qp, qa) = train_ramq_env(env, c, &mut rng, &mut |p| curve.observe(p))?;
            *curve_out = Some(curve.finish(c.steps, &qp.marginal(crate::model::Side::Protagonist))?);
            Ok(Trained::Joint(qp, qa))
        }
        AlgorithmSpec::Ra3q(c) => {
            let mut curve = Curve::new(c.steps, cfg.curve.checkpoints, &*eval);
            let e = train_ra3q_core(env, c, &mut rng, None, &mut |p| curve.observe(p))?;
            let (qp, qa) = (e.mean_protagonist(), e.mean_adversary());
            *curve_out = Some(curve.finish(c.steps, &qp.marginal(crate::model::Side::Protagonist))?);
            Ok(Trained::Joint(qp, qa))
        }
        other => unreachable!("{other:?} is not two-agent"),
    }
}

/// Trains per the config and writes `q_table.json` (or
/// `q_protagonist.json` and `q_adversary.json`), `training_curve.csv` and
/// `manifest.json`.
pub fn cmd_train(config_path: &Path, out: Option<&Path>) -> Result<TrainOutcome> {
    let Loaded { mut config, hash, dir } = load_config::<TrainConfig>(config_path, |c| c.version)?;
    if config.curve.eval_episodes < 2 {
        return Err(Error::InvalidConfig("curve.eval_episodes must be at least 2".into()));
    }
    let dest = output_dir(&dir, config.output_dir.as_deref(), out);
    let echo = serde_json::to_value(&config)?;
    if let EnvSpec::Market(m) = &config.env {
        config.env = EnvSpec::Market(resolve_market(&dir, m));
    }
    let mut artifacts = ArtifactSet::new(dest, "train", &hash, config.seed, echo);
    let mut curve = None;
    let (trained, residual) = match &config.algorithm {
        AlgorithmSpec::Raql(_) | AlgorithmSpec::Ra2q(_) | AlgorithmSpec::Ra21q(_) => {
            let market = match &config.env {
                EnvSpec::Market(m) => Some(m),
                EnvSpec::RandomGame(_) => return Err(mismatch("single-agent", &config.env)),
                _ => None,
            };
            let (q, r) = train_single(&config, market, &mut curve)?;
            (Trained::Single(q), r)
        }
        AlgorithmSpec::Ramq(_) | AlgorithmSpec::Ra3q(_) => (train_joint(&config, &mut curve)?, None),
    };
    let stamp = artifacts.stamp();
    match trained {
        Trained::Single(q) => {
            artifacts.put("q_table.json", q.to_file(stamp, config.seed).to_json()?.as_bytes())?;
        }
        Trained::Joint(qp, qa) => {
            artifacts.put("q_protagonist.json", qp.to_file(stamp.clone(), config.seed).to_json()?.as_bytes())?;
            artifacts.put("q_adversary.json", qa.to_file(stamp, config.seed).to_json()?.as_bytes())?;
        }
    }
    artifacts.put("training_curve.csv", curve.unwrap_or_default().as_bytes())?;
    if let Some(r) = residual {
        println!("residual {r}");
    }
    let artifacts = artifacts.finish()?;
    for p in &artifacts {
        println!("wrote {}", p.display());
    }
    Ok(TrainOutcome { artifacts, residual })
}

// ---------------------------------------------------------------- policies

fn load_policy(path: &Path) -> Result<Policy> {
    let file = TableFile::load(path)?;
    match file.shape.len() {
        2 => Ok(Policy::greedy(file.into_qtable()?)),
        3 => Ok(Policy::protagonist(&file.into_joint()?)),
        n => Err(Error::InvalidConfig(format!("{}: expected a 2-d or 3-d table, got {n}-d", path.display()))),
    }
}

fn load_adversary(path: &Path) -> Result<Policy> {
    let file = TableFile::load(path)?;
    match file.shape.len() {
        2 => Ok(Policy::greedy(file.into_qtable()?)),
        3 => Ok(Policy::adversary(&file.into_joint()?)),
        n => Err(Error::InvalidConfig(format!("{}: expected a 2-d or 3-d table, got {n}-d", path.display()))),
    }
}

fn unique_names(refs: &[PolicyRef]) -> Result<Vec<String>> {
    let names: Vec<String> = refs.iter().map(|r| r.name.clone()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != names.len() || names.is_empty() {
        return Err(Error::InvalidConfig("policy names must be unique and non-empty".into()));
    }
    Ok(names)
}

// ---------------------------------------------------------------- tournament

/// Saved tournament samples; enough to rebuild the meta-table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub config_hash: String,
    pub seed: u64,
    pub players: usize,
    pub strategies: Vec<String>,
    pub profiles: TournamentReport,
}

impl ResultsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// Per profile and strategy: pooled sample count, mean, variance and the
/// risk-averse payoff.
fn meta_summary(results: &crate::egt::MatchResults, names: &[String], players: usize, beta: f64) -> Result<String> {
    let k = names.len();
    let mut s = String::new();
    let cols: Vec<String> = (1..=k).map(|j| format!("n_{j}")).collect();
    let _ = writeln!(s, "{},strategy,samples,mean,variance,payoff", cols.join(","));
    for counts in enumerate_profiles(k, players) {
        let Some(seats) = results.get(&counts) else { continue };
        for (j, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let pooled: Vec<f64> =
                seats.iter().filter(|x| x.strategy == j).flat_map(|x| x.samples.iter().copied()).collect();
            let c: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                c.join(","),
                names[j],
                pooled.len(),
                mean(&pooled),
                sample_variance(&pooled),
                risk_averse_payoff(&pooled, beta)?
            );
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TournamentOutcome {
    pub artifacts: Vec<PathBuf>,
    pub table: MetaPayoffTable,
}

/// Runs the tournament (or reloads its samples) and writes `results.json`,
/// `meta_table.csv`, `meta_summary.csv` and `manifest.json`.
pub fn cmd_tournament(config_path: &Path, out: Option<&Path>, from_results: Option<&Path>) -> Result<TournamentOutcome> {
    let Loaded { config, hash, dir } = load_config::<TournamentConfig>(config_path, |c| c.version)?;
    let names = unique_names(&config.strategies)?;
    if !(config.beta_egt.is_finite() && config.beta_egt >= 0.0) {
        return Err(Error::InvalidConfig(format!("beta_egt must be >= 0, got {}", config.beta_egt)));
    }
    let dest = output_dir(&dir, config.output_dir.as_deref(), out);
    let echo = serde_json::to_value(&config)?;
    let mut artifacts = ArtifactSet::new(dest, "tournament", &hash, config.seed, echo);
    let results = match from_results {
        Some(p) => {
            let r = ResultsFile::load(p)?;
            if r.strategies != names || r.players != config.players {
                return Err(Error::InvalidConfig(format!(
                    "{} was produced for strategies {:?} with {} players",
                    p.display(),
                    r.strategies,
                    r.players
                )));
            }
            r
        }
        None => {
            let strategies = config
                .strategies
                .iter()
                .map(|r| Ok((r.name.clone(), load_policy(&resolve(&dir, &r.path))?)))
                .collect::<Result<Vec<_>>>()?;
            let spec = TournamentSpec {
                strategies,
                market: resolve_market(&dir, &config.market),
                players: config.players,
                blocks: config.blocks,
                episodes_per_block: config.episodes_per_block,
                seed: config.seed,
            };
            let profiles = run_tournament(&spec)?;
            let r = ResultsFile { config_hash: hash.clone(), seed: config.seed, players: config.players, strategies: names.clone(), profiles };
            artifacts.put("results.json", pretty(&r)?.as_bytes())?;
            r
        }
    };
    let samples = match_results(&results.profiles, &names)?;
    let table = build_meta_payoff_table(&names, &samples, config.players, config.beta_egt)?;
    artifacts.put("meta_table.csv", table.to_csv()?.as_bytes())?;
    artifacts.put("meta_summary.csv", meta_summary(&samples, &names, config.players, config.beta_egt)?.as_bytes())?;
    for row in table.rows() {
        let key = profile_key(&row.counts);
        let cells: Vec<String> = row.payoffs.iter().map(|p| p.map_or("-".into(), |v| format!("{v:.4}"))).collect();
        println!("({key}) {}", cells.join(" "));
    }
    let artifacts = artifacts.finish()?;
    Ok(TournamentOutcome { artifacts, table })
}

// ---------------------------------------------------------------- egt

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub x0: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgtOptions {
    pub field: Option<usize>,
    pub trajectory: Option<TrajectorySpec>,
    pub equilibria: bool,
    pub svg: bool,
    pub tol: f64,
}

impl Default for EgtOptions {
    fn default() -> Self {
        Self { field: None, trajectory: None, equilibria: false, svg: false, tol: 1e-9 }
    }
}

fn parse_trajectory(args: &[String]) -> Result<TrajectorySpec> {
    let bad = |what: &str, v: &str| Error::InvalidConfig(format!("--trajectory: bad {what} {v:?}"));
    let x0 = args[0]
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad("mixture", &args[0])))
        .collect::<Result<Vec<_>>>()?;
    let dt = args[1].parse().map_err(|_| bad("dt", &args[1]))?;
    let steps = args[2].parse().map_err(|_| bad("step count", &args[2]))?;
    Ok(TrajectorySpec { x0, dt, steps })
}

fn mixture_header(k: usize, prefix: &str) -> Vec<String> {
    (1..=k).map(|j| format!("{prefix}_{j}")).collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

/// Writes the requested `field.csv`, `trajectory.csv`, `equilibria.csv` and
/// `simplex.svg`. CSVs are written before the SVG, so an unsupported plot
/// still leaves the data behind.
pub fn cmd_egt(table_path: &Path, out: &Path, opts: &EgtOptions) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(table_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(table_path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let table = MetaPayoffTable::from_csv(&text)?;
    let k = table.num_strategies();
    let mut written = Vec::new();
    let put = |name: &str, body: &str, written: &mut Vec<PathBuf>| -> Result<()> {
        let p = out.join(name);
        write_atomic(&p, body.as_bytes())?;
        written.push(p);
        Ok(())
    };

    let field = match opts.field.or(opts.svg.then_some(10)) {
        Some(res) => Some(directional_field(&table, res)?),
        None => None,
    };
    if let (Some(f), Some(_)) = (&field, opts.field) {
        let mut s = format!("{},{},speed\n", mixture_header(k, "x").join(","), mixture_header(k, "dx").join(","));
        for p in f {
            let speed = p.derivative.iter().map(|d| d * d).sum::<f64>().sqrt();
            let _ = writeln!(s, "{},{},{speed}", join(p.x.as_slice()), join(&p.derivative));
        }
        put("field.csv", &s, &mut written)?;
    }

    let mut trajectories = Vec::new();
    if let Some(t) = &opts.trajectory {
        let x0 = Mixture::new(t.x0.clone())?;
        let path = integrate_trajectory(&table, &x0, t.dt, t.steps)?;
        let mut s = format!("step,t,{}\n", mixture_header(k, "x").join(","));
        for (i, x) in path.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{}", i as f64 * t.dt, join(x.as_slice()));
        }
        put("trajectory.csv", &s, &mut written)?;
        trajectories.push(path);
    }

    let mut equilibria = Vec::new();
    if opts.equilibria || opts.svg {
        equilibria = find_equilibria(&table, opts.tol)?;
    }
    if opts.equilibria {
        let mut s = format!("{},stability,max_real_part\n", mixture_header(k, "x").join(","));
        for e in &equilibria {
            let st = serde_json::to_value(e.stability)?;
            let st = st.as_str().unwrap_or_default().to_string();
            let _ = writeln!(s, "{},{st},{}", join(e.x.as_slice()), e.max_real_part);
            let xs: Vec<String> = e.x.as_slice().iter().map(|v| format!("{v:.4}")).collect();
            println!("({}) {st} max_re={:.4e}", xs.join(", "), e.max_real_part);
        }
        put("equilibria.csv", &s, &mut written)?;
    }

    if opts.svg {
        let svg = simplex_svg(&table, field.as_deref().unwrap_or(&[]), &trajectories, &equilibria)?;
        put("simplex.svg", &svg, &mut written)?;
    }
    Ok(written)
}

// ---------------------------------------------------------------- eval

/// `policy → perturbation → report`.
pub type EvalGrid = BTreeMap<String, BTreeMap<String, EvalReport>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalFile {
    pub config_hash: String,
    pub seed: u64,
    pub n_runs: usize,
    pub grid: EvalGrid,
}

/// Evaluates every policy under every perturbation with common seeds and
/// writes `report.json` and `manifest.json`.
pub fn cmd_eval(config_path: &Path, out: Option<&Path>) -> Result<EvalFile> {
    let Loaded { config, hash, dir } = load_config::<EvalConfig>(config_path, |c| c.version)?;
    let names = unique_names(&config.policies)?;
    let mut labels: Vec<&str> = config.perturbations.iter().map(PerturbationSpec::label).collect();
    labels.sort();
    let before = labels.len();
    labels.dedup();
    if labels.len() != before || labels.is_empty() {
        return Err(Error::InvalidConfig("perturbation kinds must be listed once each".into()));
    }
    let market = resolve_market(&dir, &config.market);
    let adversary = match (&config.adversary, config.perturbations.contains(&PerturbationSpec::Adversarial)) {
        (Some(p), _) => Some(load_adversary(&resolve(&dir, p))?),
        (None, true) => return Err(Error::InvalidConfig("adversarial perturbation needs `adversary`".into())),
        (None, false) => None,
    };
    let perturbations: Vec<(&str, Perturbation)> = config
        .perturbations
        .iter()
        .map(|p| {
            let v = match p {
                PerturbationSpec::None => Perturbation::None,
                PerturbationSpec::Adversarial => Perturbation::Adversary(adversary.clone().expect("checked above")),
                PerturbationSpec::Zi { count, intensity, seed } => {
                    Perturbation::Zi { count: *count, intensity: *intensity, seed: *seed }
                }
            };
            (p.label(), v)
        })
        .collect();
    let mut grid = EvalGrid::new();
    for (name, r) in names.iter().zip(&config.policies) {
        let policy = load_policy(&resolve(&dir, &r.path))?;
        let row = grid.entry(name.clone()).or_default();
        for (label, p) in &perturbations {
            let report = perturbation_eval(&policy, p, &market, config.n_runs, config.seed)?;
            println!("{name} / {label}: sharpe {}", metric_text(report.sharpe));
            row.insert(label.to_string(), report);
        }
    }
    let file = EvalFile { config_hash: hash.clone(), seed: config.seed, n_runs: config.n_runs, grid };
    let dest = output_dir(&dir, config.output_dir.as_deref(), out);
    let mut artifacts = ArtifactSet::new(dest, "eval", &hash, config.seed, serde_json::to_value(&config)?);
    artifacts.put("report.json", pretty(&file)?.as_bytes())?;
    artifacts.finish()?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git() {
        // `git hash-object` uses sha1; the framing is the same.
        let h = blob_hash(b"");
        assert_eq!(h, hex::encode(Sha256::digest(b"blob 0\0")));
        assert_ne!(blob_hash(b"a"), blob_hash(b"b"));
    }

    #[test]
    fn unknown_key_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(
            &p,
            "seed = 1\nbogus_key = 3\n[env]\nkind = \"random_mdp\"\nnum_states = 2\nnum_actions = 2\nreward_mean_range = [0.0, 1.0]\ntransition_sparsity = 2\ndiscount = 0.9\nseed = 0\n[algorithm]\nkind = \"raql\"\nsteps = 10\nepsilon = 0.1\ngamma = 0.9\nutility = { beta = -0.5 }\n",
        )
        .unwrap();
        let e = cmd_train(&p, Some(dir.path())).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("bogus_key"), "{e}");
    }

    #[test]
    fn unknown_nested_key_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(
            &p,
            "seed = 1\n[env]\nkind = \"random_mdp\"\nnum_states = 2\nnum_actions = 2\nreward_mean_range = [0.0, 1.0]\ntransition_sparsity = 2\ndiscount = 0.9\nseed = 0\nstates = 4\n[algorithm]\nkind = \"raql\"\nsteps = 10\nepsilon = 0.1\ngamma = 0.9\nutility = { beta = -0.5 }\n",
        )
        .unwrap();
        let e = cmd_train(&p, Some(dir.path())).unwrap_err();
        assert!(e.to_string().contains("states"), "{e}");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::MissingArtifact("x".into())), 3);
        assert_eq!(exit_code(&Error::NumericalFailure("x".into())), 4);
        assert_eq!(exit_code(&Error::InvalidConfig("x".into())), 2);
        assert_eq!(run(["riskq", "frobnicate"]), 2);
        assert_eq!(run(["riskq", "train", "/nonexistent/config.toml"]), 2);
    }

    #[test]
    fn trajectory_flag() {
        let t = parse_trajectory(&["0.5,0.3,0.2".into(), "0.01".into(), "100".into()]).unwrap();
        assert_eq!(t, TrajectorySpec { x0: vec![0.5, 0.3, 0.2], dt: 0.01, steps: 100 });
        assert!(parse_trajectory(&["a".into(), "0.01".into(), "1".into()]).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
