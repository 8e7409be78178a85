//! RA2-Q trains k tables on Poisson-masked copies of one sample stream and
//! acts on the head table minus the ensemble variance.

use riskq::envs::{make_random_mdp, RandomMdpSpec};
use riskq::single_agent::{ra2q_risk_adjusted_table, train_ra2q, Ra2Config};
use riskq::UtilityParams;

fn main() -> riskq::Result<()> {
    let mdp = make_random_mdp(&RandomMdpSpec {
        num_states: 3,
        num_actions: 3,
        reward_mean_range: [0.0, 1.0],
        reward_noise_sigma: 0.5,
        transition_sparsity: 2,
        discount: 0.5,
        seed: 8,
    })?;
    let cfg = Ra2Config {
        steps: 100_000,
        epsilon: 0.3,
        gamma: 0.5,
        utility: UtilityParams::with_truncation(-1.0, 6.0)?,
        k: 5,
        lambda_p: 0.5,
    };
    let tables = train_ra2q(&mdp, &cfg, 2)?;
    let mean = riskq::QTable::mean_of(&tables);
    let adjusted = ra2q_risk_adjusted_table(&tables, 0, cfg.lambda_p)?;
    let mut spread = 0.0f64;
    for (i, a) in tables.iter().enumerate() {
        for b in &tables[i + 1..] {
            spread = spread.max(a.max_abs_diff(b));
        }
    }
    println!("largest pairwise table gap: {spread:.4}");
    println!("mean table:     {:?}", mean.values().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("risk-adjusted:  {:?}", adjusted.values().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    Ok(())
}
