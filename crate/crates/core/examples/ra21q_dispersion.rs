//! Cross-seed dispersion of RA2.1-Q against RAQL at the same sample budget.

use riskq::envs::{make_random_mdp, RandomMdpSpec};
use riskq::single_agent::{train_ra21q, train_raql, Ra21Config, RaqlConfig, SampleSource};
use riskq::{QTable, UtilityParams};

fn dispersion(tables: &[QTable]) -> f64 {
    let mean = QTable::mean_of(tables);
    let n = tables.len() as f64;
    tables
        .iter()
        .map(|t| t.values().iter().zip(mean.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (n - 1.0)
}

fn main() -> riskq::Result<()> {
    let mdp = make_random_mdp(&RandomMdpSpec {
        num_states: 3,
        num_actions: 2,
        reward_mean_range: [0.0, 1.0],
        reward_noise_sigma: 1.0,
        transition_sparsity: 2,
        discount: 0.9,
        seed: 11,
    })?;
    let u = UtilityParams::with_truncation(-1.0, 4.0)?;
    let ra21 = Ra21Config {
        epochs: 3,
        epoch_length: 1000,
        recentering_samples: 500,
        epsilon: 0.3,
        gamma: 0.9,
        utility: u,
        source: SampleSource::Generative,
        env_steps_per_epoch: 1,
    };
    let budget = ra21.epochs * ra21.samples_per_epoch(6);
    let raql = RaqlConfig { steps: budget, epsilon: 0.3, gamma: 0.9, utility: u };

    let seeds = 0..10u64;
    let a: Vec<QTable> = seeds.clone().map(|s| train_ra21q(&mdp, &ra21, s)).collect::<riskq::Result<_>>()?;
    let b: Vec<QTable> = seeds.map(|s| train_raql(&mdp, &raql, s)).collect::<riskq::Result<_>>()?;
    println!("budget {budget} transitions per run");
    println!("RA2.1-Q dispersion {:.5}", dispersion(&a));
    println!("RAQL    dispersion {:.5}", dispersion(&b));
    Ok(())
}
