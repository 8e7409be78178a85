//! Empirical game-theoretic analysis with mean-variance payoffs.
//!
//! A [`MetaPayoffTable`] pairs every player-count profile over `k` strategies
//! with the payoff each present strategy earned there. For two-player tables
//! the single-population replicator dynamics `ẋ_j = x_j (f_j - x·f)` are
//! available, with `f = A x` read off the table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::numeric::{mean, sample_variance};
use crate::rng::RandomStream;

/// `mean - β · sample variance`, the variance taken with denominator `n - 1`.
pub fn risk_averse_payoff(samples: &[f64], beta_egt: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: samples.len() });
    }
    if !beta_egt.is_finite() || beta_egt < 0.0 {
        return Err(contract(format!("beta_egt must be finite and nonnegative, got {beta_egt}")));
    }
    Ok(mean(samples) - beta_egt * sample_variance(samples))
}

/// Every count vector of length `k` summing to `total`, first component
/// descending, then the next, and so on.
pub fn enumerate_profiles(k: usize, total: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == k {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in (0..=left).rev() {
            prefix.push(c);
            go(k, left - c, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        go(k, total, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

pub fn binomial(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn profile_label(counts: &[usize]) -> String {
    let parts: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
    format!("({})", parts.join(","))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRow {
    pub counts: Vec<usize>,
    /// `None` where the strategy is absent from the profile.
    pub payoffs: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaPayoffTable {
    players: usize,
    strategies: Vec<String>,
    rows: Vec<MetaRow>,
}

/// Payoff samples one seat collected while playing `strategy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeatSamples {
    pub strategy: usize,
    pub samples: Vec<f64>,
}

/// Per profile (keyed by its count vector), the samples of every seat.
pub type MatchResults = BTreeMap<Vec<usize>, Vec<SeatSamples>>;

/// `(N | R)` from tournament samples. A strategy's payoff in a profile pools
/// the samples of every seat that played it there.
pub fn build_meta_payoff_table(
    strategies: &[String],
    results: &MatchResults,
    players: usize,
    beta_egt: f64,
) -> Result<MetaPayoffTable> {
    let k = strategies.len();
    if k == 0 || players == 0 {
        return Err(contract("meta-payoff table needs at least one strategy and one player"));
    }
    let mut rows = Vec::new();
    for counts in enumerate_profiles(k, players) {
        let label = profile_label(&counts);
        let seats = results
            .get(&counts)
            .ok_or_else(|| Error::IncompleteTournament(label.clone()))?;
        let mut payoffs = vec![None; k];
        for (j, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let pooled: Vec<f64> = seats
                .iter()
                .filter(|s| s.strategy == j)
                .flat_map(|s| s.samples.iter().copied())
                .collect();
            if pooled.is_empty() {
                return Err(Error::IncompleteTournament(format!(
                    "{label} (no samples for strategy {})",
                    strategies[j]
                )));
            }
            payoffs[j] = Some(risk_averse_payoff(&pooled, beta_egt)?);
        }
        rows.push(MetaRow { counts, payoffs });
    }
    MetaPayoffTable::new(strategies.to_vec(), players, rows)
}

impl MetaPayoffTable {
    /// Validates completeness and puts rows in canonical order.
    pub fn new(strategies: Vec<String>, players: usize, rows: Vec<MetaRow>) -> Result<Self> {
        let k = strategies.len();
        let mut by_profile = BTreeMap::new();
        for row in rows {
            if row.counts.len() != k || row.payoffs.len() != k {
                return Err(contract(format!("row {} has the wrong width", profile_label(&row.counts))));
            }
            if row.counts.iter().sum::<usize>() != players {
                return Err(contract(format!(
                    "profile {} does not sum to {players}",
                    profile_label(&row.counts)
                )));
            }
            for (j, (&n, r)) in row.counts.iter().zip(&row.payoffs).enumerate() {
                match (n, r) {
                    (0, Some(_)) | (0, None) => {}
                    (_, Some(v)) if v.is_finite() => {}
                    _ => {
                        return Err(contract(format!(
                            "profile {} lacks a finite payoff for strategy {}",
                            profile_label(&row.counts),
                            j + 1
                        )))
                    }
                }
            }
            let label = profile_label(&row.counts);
            let mut row = row;
            for (n, r) in row.counts.iter().zip(row.payoffs.iter_mut()) {
                if *n == 0 {
                    *r = None;
                }
            }
            if by_profile.insert(row.counts.clone(), row).is_some() {
                return Err(contract(format!("profile {label} appears twice")));
            }
        }
        let mut ordered = Vec::new();
        for counts in enumerate_profiles(k, players) {
            let row = by_profile
                .remove(&counts)
                .ok_or_else(|| Error::IncompleteTournament(profile_label(&counts)))?;
            ordered.push(row);
        }
        Ok(Self { players, strategies, rows: ordered })
    }

    /// Table from `(counts, payoffs)` rows in any order, zeros standing in for
    /// absent strategies.
    pub fn from_dense(players: usize, rows: &[(Vec<usize>, Vec<f64>)]) -> Result<Self> {
        let k = rows.first().map(|r| r.0.len()).unwrap_or(0);
        let strategies = (1..=k).map(|j| format!("s{j}")).collect();
        let rows = rows
            .iter()
            .map(|(n, r)| MetaRow {
                counts: n.clone(),
                payoffs: n.iter().zip(r).map(|(&c, &v)| (c > 0).then_some(v)).collect(),
            })
            .collect();
        Self::new(strategies, players, rows)
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn num_strategies(&self) -> usize {
        self.strategies.len()
    }

    pub fn strategies(&self) -> &[String] {
        &self.strategies
    }

    pub fn with_strategy_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.strategies.len() {
            return Err(contract("wrong number of strategy names"));
        }
        self.strategies = names;
        Ok(self)
    }

    pub fn rows(&self) -> &[MetaRow] {
        &self.rows
    }

    pub fn row(&self, counts: &[usize]) -> Option<&MetaRow> {
        self.rows.iter().find(|r| r.counts == counts)
    }

    /// For `p = 2`: `A[j][m]` is strategy `j`'s payoff against `m`.
    pub fn pairwise_matrix(&self) -> Result<Vec<Vec<f64>>> {
        if self.players != 2 {
            return Err(Error::Unsupported(format!(
                "fitness is implemented for 2 players, table has {}",
                self.players
            )));
        }
        let k = self.num_strategies();
        let mut a = vec![vec![0.0; k]; k];
        for j in 0..k {
            for m in 0..k {
                let mut counts = vec![0; k];
                counts[j] += 1;
                counts[m] += 1;
                let row = self.row(&counts).expect("complete table");
                a[j][m] = row.payoffs[j].expect("present strategy has a payoff");
            }
        }
        Ok(a)
    }

    pub fn to_csv(&self) -> Result<String> {
        let k = self.num_strategies();
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> = (1..=k)
            .map(|j| format!("n_{j}"))
            .chain((1..=k).map(|j| format!("R_{j}")))
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let rec: Vec<String> = row
                .counts
                .iter()
                .map(|c| c.to_string())
                .chain(row.payoffs.iter().map(|r| format_float(r.unwrap_or(0.0))))
                .collect();
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Parses the CSV layout written by [`MetaPayoffTable::to_csv`]; rows may
    /// come in any order.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| load_err(1, e.to_string()))?.clone();
        if header.len() % 2 != 0 || header.is_empty() {
            return Err(load_err(1, "header must be n_1..n_k,R_1..R_k".into()));
        }
        let k = header.len() / 2;
        for j in 0..k {
            if header[j] != format!("n_{}", j + 1) || header[k + j] != format!("R_{}", j + 1) {
                return Err(load_err(1, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
            }
        }
        let mut rows = Vec::new();
        let mut players = None;
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| load_err(line, e.to_string()))?;
            if rec.len() != 2 * k {
                return Err(load_err(line, format!("expected {} fields, got {}", 2 * k, rec.len())));
            }
            let counts = (0..k)
                .map(|j| rec[j].parse::<usize>().map_err(|e| load_err(line, format!("n_{}: {e}", j + 1))))
                .collect::<Result<Vec<_>>>()?;
            let values = (0..k)
                .map(|j| {
                    rec[k + j]
                        .parse::<f64>()
                        .map_err(|e| load_err(line, format!("R_{}: {e}", j + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            let sum: usize = counts.iter().sum();
            match players {
                None => players = Some(sum),
                Some(p) if p != sum => {
                    return Err(load_err(line, format!("profile sums to {sum}, expected {p}")))
                }
                _ => {}
            }
            let payoffs = counts.iter().zip(values).map(|(&c, v)| (c > 0).then_some(v)).collect();
            rows.push(MetaRow { counts, payoffs });
        }
        let players = players.ok_or_else(|| load_err(2, "table has no rows".into()))?;
        let strategies = (1..=k).map(|j| format!("s{j}")).collect();
        Self::new(strategies, players, rows)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn load_err(line: usize, message: String) -> Error {
    Error::Load { line, message }
}

/// Shortest decimal form that parses back to the same `f64`.
fn format_float(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture(Vec<f64>);

pub const SIMPLEX_TOL: f64 = 1e-12;

impl Mixture {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(contract("empty mixture"));
        }
        if x.iter().any(|v| !v.is_finite() || *v < -SIMPLEX_TOL) {
            return Err(contract(format!("mixture {x:?} has negative or non-finite entries")));
        }
        let s: f64 = x.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(contract(format!("mixture {x:?} sums to {s}")));
        }
        Ok(Self(x))
    }

    /// Clips negatives to zero and divides by the sum.
    pub fn normalized(mut x: Vec<f64>) -> Result<Self> {
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        let s: f64 = x.iter().sum();
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::NumericalFailure(format!("cannot normalize {x:?}")));
        }
        x.iter_mut().for_each(|v| *v /= s);
        Ok(Self(x))
    }

    pub fn vertex(k: usize, j: usize) -> Self {
        let mut x = vec![0.0; k];
        x[j] = 1.0;
        Self(x)
    }

    pub fn centroid(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &Mixture) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Replicator field of a two-player table.
#[derive(Debug, Clone)]
pub struct ReplicatorField {
    a: Vec<Vec<f64>>,
}

impl ReplicatorField {
    pub fn new(table: &MetaPayoffTable) -> Result<Self> {
        Ok(Self { a: table.pairwise_matrix()? })
    }

    pub fn num_strategies(&self) -> usize {
        self.a.len()
    }

    /// `f = A x`, defined for any `x`, not only simplex points.
    pub fn fitness(&self, x: &[f64]) -> Vec<f64> {
        self.a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
    }

    pub fn derivative(&self, x: &[f64]) -> Vec<f64> {
        replicator_derivative(x, &self.fitness(x))
    }

    fn rk4_step(&self, x: &[f64], dt: f64) -> Vec<f64> {
        let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(u, v)| u + s * v).collect()
        };
        let k1 = self.derivative(x);
        let k2 = self.derivative(&axpy(x, dt / 2.0, &k1));
        let k3 = self.derivative(&axpy(x, dt / 2.0, &k2));
        let k4 = self.derivative(&axpy(x, dt, &k3));
        (0..x.len())
            .map(|j| x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
            .collect()
    }

    /// Jacobian of the field in the tangent coordinates `x = x* + Σ u_b (e_b - e_k)`.
    fn tangent_jacobian(&self, x: &[f64], h: f64) -> DMatrix<f64> {
        let k = x.len();
        let d = k - 1;
        let mut j = DMatrix::zeros(d, d);
        for b in 0..d {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[b] += h;
            plus[k - 1] -= h;
            minus[b] -= h;
            minus[k - 1] += h;
            let fp = self.derivative(&plus);
            let fm = self.derivative(&minus);
            for a in 0..d {
                j[(a, b)] = (fp[a] - fm[a]) / (2.0 * h);
            }
        }
        j
    }
}

pub fn fitness(table: &MetaPayoffTable, x: &Mixture) -> Result<Vec<f64>> {
    check_width(table, x)?;
    Ok(ReplicatorField::new(table)?.fitness(x.as_slice()))
}

/// `ẋ_j = x_j (f_j - x·f)`.
pub fn replicator_derivative(x: &[f64], f: &[f64]) -> Vec<f64> {
    let avg: f64 = x.iter().zip(f).map(|(a, b)| a * b).sum();
    x.iter().zip(f).map(|(xj, fj)| xj * (fj - avg)).collect()
}

fn check_width(table: &MetaPayoffTable, x: &Mixture) -> Result<()> {
    if x.len() != table.num_strategies() {
        return Err(contract(format!(
            "mixture of length {} for a table with {} strategies",
            x.len(),
            table.num_strategies()
        )));
    }
    Ok(())
}

/// Fixed-step RK4 with clip-and-renormalize after every step. The returned
/// sequence starts at `x0` and has `steps + 1` points.
pub fn integrate_trajectory(
    table: &MetaPayoffTable,
    x0: &Mixture,
    dt: f64,
    steps: usize,
) -> Result<Vec<Mixture>> {
    check_width(table, x0)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(contract(format!("dt must be positive, got {dt}")));
    }
    let field = ReplicatorField::new(table)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.clone());
    let mut x = x0.as_slice().to_vec();
    for _ in 0..steps {
        let next = Mixture::normalized(field.rk4_step(&x, dt))?;
        x = next.as_slice().to_vec();
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldPoint {
    pub x: Mixture,
    pub derivative: Vec<f64>,
}

/// Barycentric grid with spacing `1 / resolution` and the field at each node.
pub fn directional_field(table: &MetaPayoffTable, resolution: usize) -> Result<Vec<FieldPoint>> {
    if resolution < 2 {
        return Err(contract(format!("resolution must be at least 2, got {resolution}")));
    }
    let field = ReplicatorField::new(table)?;
    let k = table.num_strategies();
    enumerate_profiles(k, resolution)
        .into_iter()
        .map(|c| {
            let x: Vec<f64> = c.iter().map(|&n| n as f64 / resolution as f64).collect();
            let derivative = field.derivative(&x);
            Ok(FieldPoint { x: Mixture::normalized(x)?, derivative })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub x: Mixture,
    pub stability: Stability,
    /// Largest real part of the tangent-space Jacobian's eigenvalues.
    pub max_real_part: f64,
}

pub const JACOBIAN_STEP: f64 = 1e-6;

/// Rest points among the vertices, pairwise edge equalizers and the interior
/// equalizer, with linear stability on the simplex.
pub fn find_equilibria(table: &MetaPayoffTable, tol: f64) -> Result<Vec<Equilibrium>> {
    let field = ReplicatorField::new(table)?;
    let k = field.num_strategies();
    if !(2..=3).contains(&k) {
        return Err(Error::Unsupported(format!("equilibria need 2 or 3 strategies, got {k}")));
    }
    let a = &field.a;
    let mut candidates: Vec<Vec<f64>> = (0..k).map(|j| Mixture::vertex(k, j).0).collect();
    for i in 0..k {
        for j in i + 1..k {
            // t A_ii + (1-t) A_ij = t A_ji + (1-t) A_jj
            let denom = a[i][i] - a[i][j] - a[j][i] + a[j][j];
            if denom.abs() < 1e-14 {
                continue;
            }
            let t = (a[j][j] - a[i][j]) / denom;
            if t > 0.0 && t < 1.0 {
                let mut x = vec![0.0; k];
                x[i] = t;
                x[j] = 1.0 - t;
                candidates.push(x);
            }
        }
    }
    if k == 3 {
        let mut m = DMatrix::zeros(3, 3);
        for c in 0..3 {
            m[(0, c)] = a[0][c] - a[2][c];
            m[(1, c)] = a[1][c] - a[2][c];
            m[(2, c)] = 1.0;
        }
        if let Some(sol) = m.lu().solve(&DVector::from_vec(vec![0.0, 0.0, 1.0])) {
            if sol.iter().all(|v| *v > 0.0) {
                candidates.push(sol.iter().copied().collect());
            }
        }
    }

    let mut out: Vec<Equilibrium> = Vec::new();
    for c in candidates {
        let speed = field.derivative(&c).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if speed > tol {
            continue;
        }
        let x = Mixture::normalized(c)?;
        if out.iter().any(|e| e.x.distance(&x) < 1e-9) {
            continue;
        }
        let jac = field.tangent_jacobian(x.as_slice(), JACOBIAN_STEP);
        let max_real_part = jac
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let stability = if max_real_part < -tol { Stability::Stable } else { Stability::Unstable };
        out.push(Equilibrium { x, stability, max_real_part });
    }
    Ok(out)
}

/// Number of plays per profile sufficient for the mean-variance meta-game to
/// be `ε`-accurate with probability `1 - δ`:
/// `⌈max(-8R²/ε² · ln(q/4), 64 β² ω² Γ(2) / (ε² q))⌉` with
/// `q = 1 - (1-δ)^{1 / (|S¹|⋯|Sᵖ| · p)}`.
pub fn required_sample_size(
    eps: f64,
    delta: f64,
    r_bound: f64,
    beta_egt: f64,
    omega: f64,
    strategy_counts: &[usize],
    players: usize,
) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(contract(format!("eps and delta must lie in (0, 1), got {eps}, {delta}")));
    }
    if !(r_bound > 0.0 && omega > 0.0 && r_bound.is_finite() && omega.is_finite()) {
        return Err(contract("R and omega must be positive and finite"));
    }
    if !(beta_egt.is_finite() && beta_egt >= 0.0) {
        return Err(contract(format!("beta_egt must be nonnegative, got {beta_egt}")));
    }
    if players == 0 || strategy_counts.len() != players || strategy_counts.contains(&0) {
        return Err(contract("need one positive strategy count per player"));
    }
    const GAMMA_2: f64 = 1.0;
    let cells = strategy_counts.iter().product::<usize>() as f64 * players as f64;
    // 1 - (1-δ)^{1/c}, computed without cancellation.
    let q = -((1.0 - delta).ln() / cells).exp_m1();
    let hoeffding = -8.0 * r_bound * r_bound / (eps * eps) * (q / 4.0).ln();
    let chebyshev = 64.0 * beta_egt * beta_egt * omega * omega * GAMMA_2 / (eps * eps * q);
    let n = hoeffding.max(chebyshev).ceil();
    if !n.is_finite() || n > u64::MAX as f64 {
        return Err(Error::NumericalFailure(format!("sample size {n} out of range")));
    }
    Ok(n as u64)
}

/// Payoff taking `hi` with probability `p_hi`, otherwise `lo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointPayoff {
    pub lo: f64,
    pub hi: f64,
    pub p_hi: f64,
}

impl TwoPointPayoff {
    pub fn constant(c: f64) -> Self {
        Self { lo: c, hi: c, p_hi: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        self.lo + self.p_hi * (self.hi - self.lo)
    }

    pub fn variance(&self) -> f64 {
        self.p_hi * (1.0 - self.p_hi) * (self.hi - self.lo).powi(2)
    }

    fn draw(&self, rng: &mut RandomStream) -> f64 {
        if rng.bernoulli(self.p_hi) {
            self.hi
        } else {
            self.lo
        }
    }
}

/// A normal-form game with known two-point payoff laws, for checking the
/// sample-size bound by simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBoundGame {
    pub strategy_counts: Vec<usize>,
    /// Indexed `[joint strategy, row-major over players][player]`.
    pub payoffs: Vec<Vec<TwoPointPayoff>>,
    pub beta_egt: f64,
    pub r_bound: f64,
    pub omega: f64,
    pub seed: u64,
}

impl SampleBoundGame {
    /// Two players, two strategies each, fair coin payoffs `±1` everywhere.
    pub fn bernoulli(beta_egt: f64, seed: u64) -> Self {
        let coin = TwoPointPayoff { lo: -1.0, hi: 1.0, p_hi: 0.5 };
        Self {
            strategy_counts: vec![2, 2],
            payoffs: vec![vec![coin; 2]; 4],
            beta_egt,
            r_bound: 1.0,
            omega: 1.0,
            seed,
        }
    }

    fn players(&self) -> usize {
        self.strategy_counts.len()
    }

    fn validate(&self) -> Result<()> {
        let cells: usize = self.strategy_counts.iter().product();
        if self.payoffs.len() != cells || self.payoffs.iter().any(|p| p.len() != self.players()) {
            return Err(contract("payoff table does not match the strategy counts"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n: u64,
    pub trials: usize,
    pub coverage: f64,
    pub worst_error: f64,
}

/// Fraction of `trials` tournaments, each of `n` plays per joint strategy,
/// whose estimates all land within `eps` of the true mean-variance payoffs.
pub fn sample_coverage(game: &SampleBoundGame, n: u64, eps: f64, trials: usize) -> Result<CoverageReport> {
    game.validate()?;
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n as usize });
    }
    let mut hits = 0usize;
    let mut worst = 0.0f64;
    let mut buf = vec![0.0; n as usize];
    for trial in 0..trials {
        let mut rng = RandomStream::derived(game.seed, trial as u64);
        let mut sup = 0.0f64;
        for cell in &game.payoffs {
            for law in cell {
                buf.iter_mut().for_each(|v| *v = law.draw(&mut rng));
                let est = risk_averse_payoff(&buf, game.beta_egt)?;
                let truth = law.mean() - game.beta_egt * law.variance();
                sup = sup.max((est - truth).abs());
            }
        }
        worst = worst.max(sup);
        if sup < eps {
            hits += 1;
        }
    }
    Ok(CoverageReport { n, trials, coverage: hits as f64 / trials as f64, worst_error: worst })
}

/// [`sample_coverage`] at the size given by [`required_sample_size`].
pub fn verify_sample_bound(game: &SampleBoundGame, eps: f64, delta: f64, trials: usize) -> Result<CoverageReport> {
    let n = required_sample_size(
        eps,
        delta,
        game.r_bound,
        game.beta_egt,
        game.omega,
        &game.strategy_counts,
        game.players(),
    )?;
    sample_coverage(game, n.max(2), eps, trials)
}

const SVG_W: f64 = 600.0;
const SVG_H: f64 = 520.0;
const CORNERS: [(f64, f64); 3] = [(50.0, 470.0), (550.0, 470.0), (300.0, 470.0 - 433.012_701_892_219_3)];

fn to_xy(x: &[f64]) -> (f64, f64) {
    let mut p = (0.0, 0.0);
    for (w, c) in x.iter().zip(CORNERS) {
        p.0 += w * c.0;
        p.1 += w * c.1;
    }
    p
}

/// SVG view of a 3-strategy field: arrows scaled and shaded by speed,
/// trajectories as polylines, stable rest points filled, unstable hollow.
pub fn simplex_svg(
    table: &MetaPayoffTable,
    field: &[FieldPoint],
    trajectories: &[Vec<Mixture>],
    equilibria: &[Equilibrium],
) -> Result<String> {
    if table.num_strategies() != 3 {
        return Err(Error::Unsupported(format!(
            "simplex plot needs 3 strategies, table has {}",
            table.num_strategies()
        )));
    }
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_W} {SVG_H}" width="{SVG_W}" height="{SVG_H}">"#
    );
    s.push_str(
        r#"<defs><marker id="head" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="5" markerHeight="5" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="context-stroke"/></marker></defs>"#,
    );
    s.push('\n');
    let tri: Vec<String> = CORNERS.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(s, r#"<polygon points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#, tri.join(" "));
    let label_at = [(CORNERS[0].0 - 10.0, CORNERS[0].1 + 25.0), (CORNERS[1].0 + 10.0, CORNERS[1].1 + 25.0), (CORNERS[2].0, CORNERS[2].1 - 12.0)];
    for (name, (x, y)) in table.strategies().iter().zip(label_at) {
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{y:.2}" font-size="16" text-anchor="middle">{}</text>"#, xml_escape(name));
    }

    let speeds: Vec<f64> = field
        .iter()
        .map(|p| {
            let (a, b) = to_xy(p.x.as_slice());
            let tip: Vec<f64> = p.x.as_slice().iter().zip(&p.derivative).map(|(x, d)| x + d).collect();
            let (c, d) = to_xy(&tip);
            ((c - a).powi(2) + (d - b).powi(2)).sqrt()
        })
        .collect();
    let max_speed = speeds.iter().copied().fold(0.0, f64::max);
    for (p, &v) in field.iter().zip(&speeds) {
        if max_speed <= 0.0 || v <= 1e-12 * max_speed {
            continue;
        }
        let (a, b) = to_xy(p.x.as_slice());
        let tip: Vec<f64> = p.x.as_slice().iter().zip(&p.derivative).map(|(x, d)| x + d).collect();
        let (c, d) = to_xy(&tip);
        let rel = v / max_speed;
        let len = 8.0 + 14.0 * rel;
        let (ux, uy) = ((c - a) / v, (d - b) / v);
        let shade = (200.0 * (1.0 - rel)) as u8;
        let _ = writeln!(
            s,
            r#"<line x1="{a:.2}" y1="{b:.2}" x2="{:.2}" y2="{:.2}" stroke="rgb(255,{shade},0)" stroke-width="1.5" marker-end="url(#head)"/>"#,
            a + ux * len,
            b + uy * len
        );
    }
    for t in trajectories {
        let pts: Vec<String> = t
            .iter()
            .map(|m| {
                let (x, y) = to_xy(m.as_slice());
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1"/>"#, pts.join(" "));
    }
    for e in equilibria {
        let (x, y) = to_xy(e.x.as_slice());
        let fill = match e.stability {
            Stability::Stable => "black",
            Stability::Unstable => "white",
        };
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="6" fill="{fill}" stroke="black" stroke-width="1.5"/>"#);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
