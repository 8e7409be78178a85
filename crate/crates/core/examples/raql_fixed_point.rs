//! Train RAQL on a seeded random MDP and compare it with the exact
//! risk-sensitive fixed point.

use riskq::envs::{make_random_mdp, RandomMdpSpec};
use riskq::single_agent::{bellman_residual, solve_fixed_point, train_raql, RaqlConfig};
use riskq::{RandomStream, UtilityParams};

fn main() -> riskq::Result<()> {
    let mdp = make_random_mdp(&RandomMdpSpec {
        num_states: 4,
        num_actions: 2,
        reward_mean_range: [0.0, 1.0],
        reward_noise_sigma: 0.2,
        transition_sparsity: 2,
        discount: 0.5,
        seed: 3,
    })?;
    let u = UtilityParams::with_truncation(-1.0, 6.0)?;
    let cfg = RaqlConfig { steps: 200_000, epsilon: 0.3, gamma: 0.5, utility: u };

    let q = train_raql(&mdp, &cfg, 1)?;
    let exact = solve_fixed_point(mdp.dynamics(), &u, cfg.gamma, 1e-12)?;
    let residual = bellman_residual(&q, &mdp, &u, cfg.gamma, 0, &mut RandomStream::new(0))?;

    println!("state  action  learned   exact");
    for s in 0..q.num_states() {
        for a in 0..q.num_actions() {
            let (s, a) = (riskq::StateId(s), riskq::ActionId(a));
            println!("{s:>5}  {a:>6}  {:7.4}  {:7.4}", q.get(s, a), exact.get(s, a));
        }
    }
    println!("sup gap {:.4}, residual {residual:.4}", q.max_abs_diff(&exact));
    Ok(())
}
