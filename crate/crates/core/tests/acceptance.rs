//! Acceptance criteria 1-12. Every test writes one verdict line straight to
//! stdout so the lines survive output capture.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use riskq::bimatrix::{exploitability, solve_bimatrix, BimatrixGame, MixedProfile};
use riskq::egt::{
    build_meta_payoff_table, find_equilibria, integrate_trajectory, required_sample_size, risk_averse_payoff,
    sample_coverage, verify_sample_bound, MatchResults, MetaPayoffTable, Mixture, ReplicatorField,
    SampleBoundGame, SeatSamples, Stability,
};
use riskq::envs::{
    make_random_game, make_random_mdp, AdversarialMarket, Market, MarketConfig, RandomGameSpec, RandomMdpSpec,
    TabularGame, TabularMdp,
};
use riskq::eval::{perturbation_eval, Metric, Perturbation, Policy};
use riskq::model::{sample_transition, GenerativeModel, Side};
use riskq::multi_agent::{
    fixed_opponent_residual, stage_game, train_fixed_opponent, train_ra3q_core, train_ramq, Ra3Config, RamqConfig,
};
use riskq::single_agent::{
    bellman_residual, contraction_modulus, exact_h_operator, iterate_h, raql_update, solve_fixed_point,
    train_ra21q, train_ra2q, train_ra2q_env, train_raql, Ra21Config, Ra2Config, RaqlConfig, Sample, SampleSource,
};
use riskq::{ActionId, CountTable, JointQTable, QTable, RandomStream, StateId, UtilityParams};

fn verdict(n: u32, name: &str, ok: bool, detail: &str, elapsed: Duration, limit_s: u64) {
    let in_time = elapsed.as_secs_f64() < limit_s as f64;
    let status = if ok && in_time { "PASS" } else { "FAIL" };
    let line = format!(
        "criterion {n:>2} {status} {name}: {detail} [{:.1}s of {limit_s}s]\n",
        elapsed.as_secs_f64()
    );
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
    assert!(ok, "criterion {n} failed: {detail}");
    assert!(in_time, "criterion {n} exceeded {limit_s}s");
}

fn utility(beta: f64, m: f64) -> UtilityParams {
    UtilityParams::with_truncation(beta, m).unwrap()
}

fn mdp(seed: u64, sigma: f64, discount: f64) -> TabularMdp {
    let num_states = 3 + (seed % 3) as usize;
    make_random_mdp(&RandomMdpSpec {
        num_states,
        num_actions: 2 + (seed % 2) as usize,
        reward_mean_range: [0.0, 1.0],
        reward_noise_sigma: sigma,
        transition_sparsity: 2,
        discount,
        seed,
    })
    .unwrap()
}

fn random_table(ns: usize, na: usize, rng: &mut RandomStream) -> QTable {
    QTable::from_values(ns, na, (0..ns * na).map(|_| 2.0 * rng.uniform() - 1.0).collect()).unwrap()
}

#[test]
fn c01_contraction() {
    let t = Instant::now();
    let u = utility(-0.5, 6.0);
    let alpha = (1.0 / u.lipschitz_bounds().1).min(1.0) / 2.0;
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for seed in 1..=5u64 {
        for gamma in [0.5, 0.9] {
            let m = mdp(seed, 0.2, gamma);
            let d = m.dynamics();
            let modulus = contraction_modulus(&u, gamma, alpha);
            let mut rng = RandomStream::derived(seed, 100);
            for _ in 0..200 {
                let q1 = random_table(m.num_states(), m.num_actions(), &mut rng);
                let q2 = random_table(m.num_states(), m.num_actions(), &mut rng);
                let lhs = exact_h_operator(&q1, d, &u, gamma, alpha).max_abs_diff(&exact_h_operator(&q2, d, &u, gamma, alpha));
                let rhs = modulus * q1.max_abs_diff(&q2);
                worst = worst.max(lhs - rhs);
                if lhs > rhs + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    let detail = format!("{violations} violations in 2000 pairs, max lhs - rhs {worst:.3e}");
    verdict(1, "contraction", violations == 0, &detail, t.elapsed(), 10);
}

#[test]
fn c02_fixed_points() {
    let t = Instant::now();
    let (gamma, u) = (0.5, utility(-1.0, 6.0));
    let alpha = (1.0 / u.lipschitz_bounds().1).min(1.0) / 2.0;
    let mut ok = true;
    let mut lines = Vec::new();
    for seed in 1..=5u64 {
        let m = mdp(seed, 0.2, gamma);
        let d = m.dynamics();
        let (limit, iters) = iterate_h(d, &u, gamma, alpha, 1e-12, 10_000_000).unwrap();
        let oracle = solve_fixed_point(d, &u, gamma, 1e-12).unwrap();
        let gap = limit.max_abs_diff(&oracle);

        let raql = RaqlConfig { steps: 200_000, epsilon: 0.3, gamma, utility: u };
        let q = train_raql(&m, &raql, seed).unwrap();
        let mut rng = RandomStream::new(0);
        let r_raql = bellman_residual(&q, &m, &u, gamma, 0, &mut rng).unwrap();

        let ra2 = Ra2Config { steps: 200_000, epsilon: 0.3, gamma, utility: u, k: 5, lambda_p: 0.5 };
        let tables = train_ra2q(&m, &ra2, seed).unwrap();
        let r_ra2 = tables
            .iter()
            .map(|q| bellman_residual(q, &m, &u, gamma, 0, &mut rng).unwrap())
            .fold(0.0f64, f64::max);
        let mut spread = 0.0f64;
        for (i, a) in tables.iter().enumerate() {
            for b in &tables[i + 1..] {
                spread = spread.max(a.max_abs_diff(b));
            }
        }
        ok &= gap < 1e-6 && r_raql < 0.05 && r_ra2 < 0.05 && spread < 0.1;
        lines.push(format!(
            "mdp {seed} ({}x{}): H iters {iters}, |H* - oracle| {gap:.1e}, raql {r_raql:.4}, ra2q max {r_ra2:.4}, spread {spread:.4}",
            m.num_states(),
            m.num_actions()
        ));
    }
    for l in &lines {
        println!("{l}");
    }
    verdict(2, "fixed points", ok, &lines.join("; "), t.elapsed(), 120);
}

#[test]
fn c03_small_beta() {
    let t = Instant::now();
    let beta = -1e-4;
    let u = UtilityParams::new(beta).unwrap();
    let gamma = 0.9;
    let m = mdp(4, 0.5, gamma);
    let (ns, na) = (m.num_states(), m.num_actions());
    let mut rng = RandomStream::new(3);
    let mut q = QTable::zeros(ns, na);
    let mut counts = CountTable::zeros(ns * na);
    let mut s = StateId(0);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let a = ActionId(rng.below(na));
        let (reward, next) = sample_transition(&m, s, a, &mut rng).unwrap();
        let sample = Sample { s, a, reward, next, done: false };
        let n = counts.increment(s.0 * na + a.0) as f64;
        let before = q.get(s, a);
        let vanilla = (reward + gamma * q.max_value(next) - before) / n;
        raql_update(&mut q, &counts, &sample, gamma, &u).unwrap();
        let delta = q.get(s, a) - before;
        worst = worst.max((delta - (-beta) * vanilla).abs());
        s = next;
    }
    let detail = format!("max per-step gap {worst:.3e} over 10000 steps");
    verdict(3, "small-beta equivalence", worst <= 1e-6, &detail, t.elapsed(), 10);
}

fn dispersion(tables: &[QTable]) -> f64 {
    let mean = QTable::mean_of(tables);
    let n = tables.len() as f64;
    tables
        .iter()
        .map(|t| t.values().iter().zip(mean.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (n - 1.0)
}

#[test]
fn c04_variance_reduction() {
    let t = Instant::now();
    let m = make_random_mdp(&RandomMdpSpec {
        num_states: 3,
        num_actions: 2,
        reward_mean_range: [0.0, 1.0],
        reward_noise_sigma: 1.0,
        transition_sparsity: 2,
        discount: 0.9,
        seed: 11,
    })
    .unwrap();
    let u = utility(-1.0, 4.0);
    let ra21 = Ra21Config {
        epochs: 3,
        epoch_length: 1000,
        recentering_samples: 2000,
        epsilon: 0.3,
        gamma: 0.9,
        utility: u,
        source: SampleSource::Generative,
        env_steps_per_epoch: 1,
    };
    let budget = ra21.epochs * ra21.samples_per_epoch(6);
    let raql = RaqlConfig { steps: budget, epsilon: 0.3, gamma: 0.9, utility: u };
    let a: Vec<QTable> = (0..50).map(|s| train_ra21q(&m, &ra21, s).unwrap()).collect();
    let b: Vec<QTable> = (0..50).map(|s| train_raql(&m, &raql, s).unwrap()).collect();
    let (da, db) = (dispersion(&a), dispersion(&b));
    let detail = format!("budget {budget}, RA2.1-Q trace {da:.5} vs RAQL trace {db:.5}");
    verdict(4, "RA2.1-Q variance reduction", da < db, &detail, t.elapsed(), 180);
}

fn simplex_grid(dim: usize, res: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return vec![vec![1.0]];
    }
    let mut out = Vec::new();
    for i in 0..=res {
        for mut rest in simplex_grid(dim - 1, res - i) {
            let scale = (res - i) as f64 / res as f64;
            rest.iter_mut().for_each(|v| *v *= scale);
            rest.insert(0, i as f64 / res as f64);
            out.push(rest);
        }
    }
    out
}

fn grid_min_exploitability(g: &BimatrixGame, res: usize) -> f64 {
    let (xs, ys) = (simplex_grid(g.rows(), res), simplex_grid(g.cols(), res));
    let mut best = f64::INFINITY;
    for x in &xs {
        for y in &ys {
            best = best.min(exploitability(g, &MixedProfile { x: x.clone(), y: y.clone() }));
        }
    }
    best
}

#[test]
fn c05_bimatrix_oracle() {
    let t = Instant::now();
    let pennies = BimatrixGame::zero_sum(2, 2, vec![1.0, -1.0, -1.0, 1.0]).unwrap();
    let p = solve_bimatrix(&pennies, 1e-9).unwrap();
    let pennies_ok = p.x.iter().chain(&p.y).all(|v| (v - 0.5).abs() <= 1e-9);

    let pd = BimatrixGame::from_rows(&[vec![-1.0, -3.0], vec![0.0, -2.0]], &[vec![-1.0, 0.0], vec![-3.0, -2.0]]).unwrap();
    let pd_ok = solve_bimatrix(&pd, 1e-9).unwrap() == MixedProfile::pure(2, 2, 1, 1);

    let mut rng = RandomStream::new(505);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100 {
        let n = if i % 2 == 0 { 2 } else { 3 };
        let mut draw = || (0..n * n).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        let g = BimatrixGame::new(n, n, draw(), draw()).unwrap();
        let e = exploitability(&g, &solve_bimatrix(&g, 1e-9).unwrap());
        worst = worst.max(e - grid_min_exploitability(&g, if n == 2 { 200 } else { 30 }));
    }
    let ok = pennies_ok && pd_ok && worst <= 1e-3;
    let detail = format!(
        "pennies {:?}/{:?}, prisoner's dilemma pure defect {pd_ok}, max exploitability over grid minimum {worst:.2e}",
        p.x, p.y
    );
    verdict(5, "bimatrix oracle", ok, &detail, t.elapsed(), 30);
}

fn ramq(steps: usize, beta: f64, gamma: f64) -> RamqConfig {
    RamqConfig {
        steps,
        epsilon: 0.2,
        gamma,
        utility_p: utility(-beta, 6.0),
        utility_a: utility(beta, 6.0),
        nash_tol: 1e-9,
    }
}

fn max_gap(q: &JointQTable, target: f64) -> f64 {
    q.values().iter().fold(0.0f64, |m, v| m.max((v - target).abs()))
}

#[test]
fn c06_ramq_fixtures() {
    let t = Instant::now();
    let zero = TabularGame::new(2, 2, 2, vec![0.5; 16], vec![0.0; 8], vec![0.0; 8], 0.0, 0.9).unwrap();
    let (qp, qa) = train_ramq(&zero, &ramq(20_000, 0.5, 0.9), 1).unwrap();
    let zero_gap = max_gap(&qp, 0.0).max(max_gap(&qa, 0.0));

    let ones = TabularGame::single_state(&vec![vec![1.0; 2]; 2], &vec![vec![1.0; 2]; 2], 0.0).unwrap();
    let (qp, qa) = train_ramq(&ones, &ramq(50_000, 1.0, 0.0), 2).unwrap();
    let myopic_gap = max_gap(&qp, 1.0).max(max_gap(&qa, 1.0));

    let opposed = TabularGame::single_state(&vec![vec![1.0; 2]; 2], &vec![vec![-1.0; 2]; 2], 0.0).unwrap();
    let (qp, qa) = train_ramq(&opposed, &ramq(50_000, 1.0, 0.0), 3).unwrap();
    let opposed_gap = max_gap(&qp, 1.0).max(max_gap(&qa, -1.0));

    let game = make_random_game(&RandomGameSpec {
        num_states: 2,
        num_actions_p: 2,
        num_actions_a: 2,
        reward_mean_range: [-1.0, 1.0],
        reward_noise_sigma: 0.2,
        transition_sparsity: 2,
        zero_sum: true,
        discount: 0.5,
        seed: 8,
    })
    .unwrap();
    let (qp, qa) = train_ramq(&game, &ramq(100_000, 0.05, 0.5), 4).unwrap();
    let (mut zs_gap, mut v_scale) = (0.0f64, 0.0f64);
    for s in 0..2 {
        let g = stage_game(&qp, &qa, StateId(s));
        let pi = solve_bimatrix(&g, 1e-9).unwrap();
        let (vr, vc) = riskq::bimatrix::nash_value(&g, &pi);
        zs_gap = zs_gap.max((vr + vc).abs());
        v_scale = v_scale.max(vr.abs());
    }
    let ok = zero_gap < 0.05 && myopic_gap < 0.05 && opposed_gap < 0.05 && zs_gap < 0.1;
    let detail = format!(
        "zero reward {zero_gap:.2e}, single state {myopic_gap:.4}, opposed rewards {opposed_gap:.4}, |v_row + v_col| {zs_gap:.2e} at |v_row| up to {v_scale:.4}"
    );
    verdict(6, "RAM-Q fixtures", ok, &detail, t.elapsed(), 120);
}

#[test]
fn c07_fixed_opponent() {
    let t = Instant::now();
    let game = make_random_game(&RandomGameSpec {
        num_states: 2,
        num_actions_p: 2,
        num_actions_a: 2,
        reward_mean_range: [0.0, 1.0],
        reward_noise_sigma: 0.2,
        transition_sparsity: 2,
        zero_sum: true,
        discount: 0.2,
        seed: 5,
    })
    .unwrap();
    let (up, ua) = (UtilityParams::new(-3.0).unwrap(), UtilityParams::new(3.0).unwrap());
    let cfg = Ra3Config {
        steps: 200_000,
        epsilon: 0.3,
        gamma: 0.2,
        utility_p: up,
        utility_a: ua,
        k: 5,
        lambda_p: 0.5,
        lambda_a: 0.5,
    };
    let tables = train_fixed_opponent(&game, &cfg, 6, Side::Adversary, vec![vec![0.5, 0.5]; 2]).unwrap();
    let worst = tables
        .iter()
        .map(|q| fixed_opponent_residual(q, &game, Side::Protagonist, &up, 0.2).unwrap())
        .fold(0.0f64, f64::max);
    let mean = JointQTable::mean_of(&tables);
    let r_mean = fixed_opponent_residual(&mean, &game, Side::Protagonist, &up, 0.2).unwrap();
    let detail = format!("max table residual {worst:.4}, mean table residual {r_mean:.4}");
    verdict(7, "fixed-opponent convergence", worst < 0.05, &detail, t.elapsed(), 60);
}

fn rps_results() -> MatchResults {
    let beats = |i: usize, j: usize| -> f64 {
        match (i, j) {
            _ if i == j => 0.0,
            (0, 2) | (1, 0) | (2, 1) => 1.0,
            _ => -1.0,
        }
    };
    let mut out = MatchResults::new();
    for i in 0..3 {
        for j in i..3 {
            let mut counts = vec![0; 3];
            counts[i] += 1;
            counts[j] += 1;
            let seats = vec![
                SeatSamples { strategy: i, samples: vec![beats(i, j); 4] },
                SeatSamples { strategy: j, samples: vec![beats(j, i); 4] },
            ];
            out.insert(counts, seats);
        }
    }
    out
}

#[test]
fn c08_egt_exactness() {
    let t = Instant::now();
    let names: Vec<String> = ["rock", "paper", "scissors"].iter().map(|s| s.to_string()).collect();
    let rps = build_meta_payoff_table(&names, &rps_results(), 2, 0.5).unwrap();
    let expected: [([usize; 3], [f64; 3]); 6] = [
        ([2, 0, 0], [0.0, 0.0, 0.0]),
        ([1, 1, 0], [-1.0, 1.0, 0.0]),
        ([0, 2, 0], [0.0, 0.0, 0.0]),
        ([1, 0, 1], [1.0, 0.0, -1.0]),
        ([0, 0, 2], [0.0, 0.0, 0.0]),
        ([0, 1, 1], [0.0, -1.0, 1.0]),
    ];
    let rows_ok = rps.rows().len() == 6
        && expected.iter().all(|(counts, r)| {
            let row = rps.row(counts).expect("profile present");
            row.payoffs.iter().zip(r).zip(counts).all(|((p, v), &n)| if n == 0 { p.is_none() } else { *p == Some(*v) })
        });

    let field = ReplicatorField::new(&rps).unwrap();
    let centroid = Mixture::centroid(3);
    let speed = field.derivative(centroid.as_slice()).iter().map(|v| v * v).sum::<f64>().sqrt();

    let traj = integrate_trajectory(&rps, &Mixture::new(vec![0.5, 0.3, 0.2]).unwrap(), 0.01, 10_000).unwrap();
    let drift = traj
        .iter()
        .map(|x| {
            let raw: f64 = field.derivative(x.as_slice()).iter().sum();
            (x.as_slice().iter().sum::<f64>() - 1.0).abs().max(raw.abs())
        })
        .fold(0.0f64, f64::max);
    let nonneg = traj.iter().all(|x| x.as_slice().iter().all(|v| *v >= 0.0));

    let sharpe = MetaPayoffTable::from_dense(
        2,
        &[
            (vec![2, 0, 0], vec![0.9130, 0.0, 0.0]),
            (vec![1, 1, 0], vec![0.7311, 0.7970, 0.0]),
            (vec![0, 2, 0], vec![0.0, 1.0298, 0.0]),
            (vec![1, 0, 1], vec![0.6791, 0.0, 1.0786]),
            (vec![0, 0, 2], vec![0.0, 0.0, 2.2177]),
            (vec![0, 1, 1], vec![0.0, 0.7766, 1.4386]),
        ],
    )
    .unwrap();
    let eq = find_equilibria(&sharpe, 1e-9).unwrap();
    let stable: Vec<&Mixture> = eq.iter().filter(|e| e.stability == Stability::Stable).map(|e| &e.x).collect();
    let target = Mixture::vertex(3, 2);
    let unique = stable.len() == 1 && stable[0].distance(&target) < 1e-9;
    let end = integrate_trajectory(&sharpe, &centroid, 0.01, 20_000).unwrap().pop().unwrap();
    let reached = end.distance(&target);

    let ok = rows_ok && speed < 1e-12 && drift < 1e-9 && nonneg && unique && reached < 1e-3;
    let detail = format!(
        "RPS rows {rows_ok}, centroid speed {speed:.1e}, simplex drift {drift:.1e}, stable points {}, distance to RA2.1-Q vertex {reached:.1e}",
        stable.len()
    );
    verdict(8, "EGT exactness", ok, &detail, t.elapsed(), 30);
}

/// `(eps, delta, R, beta_egt, omega, strategy counts, players)`.
type BoundCase = (f64, f64, f64, f64, f64, Vec<usize>, usize);

fn independent_bound(eps: f64, delta: f64, r: f64, beta: f64, omega: f64, counts: &[usize], p: usize) -> u64 {
    let cells = counts.iter().product::<usize>() * p;
    let q = 1.0 - (1.0 - delta).powf(1.0 / cells as f64);
    let first = -8.0 * r * r / (eps * eps) * (0.25 * q).ln();
    let second = 64.0 * beta * beta * omega * omega / (eps * eps * q);
    first.max(second).ceil() as u64
}

#[test]
fn c09_sample_bound() {
    let t = Instant::now();
    let sets: [BoundCase; 5] = [
        (0.5, 0.1, 1.0, 0.5, 1.0, vec![2, 2], 2),
        (0.1, 0.05, 1.0, 0.5, 1.0, vec![3, 3], 2),
        (0.25, 0.2, 2.0, 0.0, 1.0, vec![2, 2], 2),
        (0.5, 0.01, 0.5, 2.0, 0.5, vec![2, 3, 4], 3),
        (0.9, 0.5, 3.0, 0.1, 4.0, vec![5], 1),
    ];
    let mut mismatches = Vec::new();
    for (eps, delta, r, beta, omega, counts, p) in &sets {
        let got = required_sample_size(*eps, *delta, *r, *beta, *omega, counts, *p).unwrap();
        let want = independent_bound(*eps, *delta, *r, *beta, *omega, counts, *p);
        if got != want {
            mismatches.push(format!("{got} != {want}"));
        }
    }
    let game = SampleBoundGame::bernoulli(0.5, 17);
    let report = verify_sample_bound(&game, 0.5, 0.2, 200).unwrap();
    let shrunk = sample_coverage(&game, (report.n / 100).max(2), 0.5, 200).unwrap();
    println!("coverage at n / 100 = {}: {:.3}", shrunk.n, shrunk.coverage);
    let ok = mismatches.is_empty() && report.coverage >= 0.8;
    let detail = format!(
        "formula mismatches {:?}, n {} coverage {:.3} (n/100 coverage {:.3})",
        mismatches, report.n, report.coverage, shrunk.coverage
    );
    verdict(9, "sample-size bound", ok, &detail, t.elapsed(), 120);
}

#[test]
fn c10_variance_unbiased() {
    let t = Instant::now();
    // Mixture law: 0 w.p. 0.7, 3 w.p. 0.3, so variance 0.3 * 0.7 * 9.
    let truth = 0.3 * 0.7 * 9.0;
    let mut rng = RandomStream::new(1010);
    let n = 5;
    let mut terms = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let xs: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.3) { 3.0 } else { 0.0 }).collect();
        terms.push(risk_averse_payoff(&xs, 0.0).unwrap() - risk_averse_payoff(&xs, 1.0).unwrap());
    }
    let m = terms.iter().sum::<f64>() / terms.len() as f64;
    let sd = (terms.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (terms.len() - 1) as f64).sqrt();
    let se = sd / (terms.len() as f64).sqrt();
    let z = (m - truth) / se;
    let detail = format!("mean variance term {m:.4} vs {truth:.4}, z = {z:.2}");
    verdict(10, "variance unbiasedness", z.abs() <= 3.0, &detail, t.elapsed(), 10);
}

#[test]
fn c11_robustness_tripwire() {
    let t = Instant::now();
    let cfg = MarketConfig::default();
    let (beta, gamma, eps, steps) = (0.5, 0.9, 0.1, 200_000);
    let up = UtilityParams::new(-beta).unwrap();
    let ua = UtilityParams::new(beta).unwrap();
    let v = |m: Metric| m.value().unwrap_or(f64::NAN);
    let mut wins = 0;
    let mut grid = vec!["block  RA2-Q adv  RA3-Q adv  RA2-Q zi   RA3-Q zi".to_string()];
    for block in 0..20u64 {
        let ra2 = Ra2Config { steps, epsilon: eps, gamma, utility: up, k: 5, lambda_p: 0.5 };
        let mut m = Market::new(cfg.clone(), 1).unwrap();
        let e2 = train_ra2q_env(&mut m, &ra2, &mut RandomStream::derived(block, 1), &mut |_| {}).unwrap();
        let ra3 = Ra3Config { steps, epsilon: eps, gamma, utility_p: up, utility_a: ua, k: 5, lambda_p: 0.5, lambda_a: 0.5 };
        let mut am = AdversarialMarket::new(cfg.clone()).unwrap();
        let e3 = train_ra3q_core(&mut am, &ra3, &mut RandomStream::derived(block, 2), None, &mut |_| {}).unwrap();
        let p2 = Policy::greedy(e2.mean_table());
        let p3 = Policy::protagonist(&e3.mean_protagonist());
        let adv = Perturbation::Adversary(Policy::adversary(&e3.mean_adversary()));
        let zi = Perturbation::Zi { count: 5, intensity: 0.5, seed: block };
        let s2 = v(perturbation_eval(&p2, &adv, &cfg, 100, block + 1000).unwrap().sharpe);
        let s3 = v(perturbation_eval(&p3, &adv, &cfg, 100, block + 1000).unwrap().sharpe);
        let z2 = v(perturbation_eval(&p2, &zi, &cfg, 100, block + 1000).unwrap().sharpe);
        let z3 = v(perturbation_eval(&p3, &zi, &cfg, 100, block + 1000).unwrap().sharpe);
        if s3 >= s2 {
            wins += 1;
        }
        grid.push(format!("{block:>5}  {s2:>9.4}  {s3:>9.4}  {z2:>9.4}  {z3:>9.4}"));
    }
    let ok = wins * 100 >= 60 * 20;
    if !ok {
        let text = grid.join("\n") + "\n";
        std::io::stdout().lock().write_all(text.as_bytes()).unwrap();
    }
    let detail = format!("RA3-Q >= RA2-Q under adversarial perturbation in {wins}/20 blocks (need 12)");
    verdict(11, "robustness tripwire", ok, &detail, t.elapsed(), 600);
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn c12_determinism() {
    let t = Instant::now();
    let commands: [(&str, &str); 11] = [
        ("train", "mdp3_raql.toml"),
        ("train", "mdp3_ra2q.toml"),
        ("train", "mdp3_ra21q.toml"),
        ("train", "game_ramq.toml"),
        ("train", "market_raql.toml"),
        ("train", "market_ra2q.toml"),
        ("train", "market_ra3q.toml"),
        ("train", "market_ra21q.toml"),
        ("tournament", "tournament.toml"),
        ("eval", "eval.toml"),
        ("eval", "eval_flat.toml"),
    ];
    let mut differing = Vec::new();
    let mut compared = 0;
    for (cmd, name) in commands {
        let runs: Vec<Vec<(String, Vec<u8>)>> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let config = fixture(name);
                let args = ["riskq", cmd, config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()];
                assert_eq!(riskq::cli::run(args), 0, "{cmd} {name}");
                snapshot(dir.path())
            })
            .collect();
        compared += runs[0].len();
        if runs[0] != runs[1] {
            differing.push(format!("{cmd} {name}"));
        }
    }
    let detail = format!("{} commands, {compared} artifacts compared, differing: {differing:?}", commands.len());
    verdict(12, "determinism", differing.is_empty(), &detail, t.elapsed(), 60);
}
