//! RAM-Q on a small general-sum game: each step solves the stage games at
//! the current and next state.

use riskq::envs::{make_random_game, RandomGameSpec};
use riskq::multi_agent::{stage_game, train_ramq, RamqConfig};
use riskq::bimatrix::solve_bimatrix;
use riskq::{StateId, UtilityParams};

fn main() -> riskq::Result<()> {
    let game = make_random_game(&RandomGameSpec {
        num_states: 2,
        num_actions_p: 2,
        num_actions_a: 2,
        reward_mean_range: [0.0, 1.0],
        reward_noise_sigma: 0.2,
        transition_sparsity: 2,
        zero_sum: false,
        discount: 0.5,
        seed: 5,
    })?;
    let cfg = RamqConfig {
        steps: 50_000,
        epsilon: 0.3,
        gamma: 0.5,
        utility_p: UtilityParams::with_truncation(-1.0, 6.0)?,
        utility_a: UtilityParams::with_truncation(1.0, 6.0)?,
        nash_tol: 1e-9,
    };
    let (qp, qa) = train_ramq(&game, &cfg, 4)?;
    for s in 0..qp.num_states() {
        let g = stage_game(&qp, &qa, StateId(s));
        let ne = solve_bimatrix(&g, 1e-9)?;
        println!("state {s}: protagonist {:?}, adversary {:?}", ne.x, ne.y);
    }
    Ok(())
}
