//! Train RA2-Q and RA3-Q on the market, then score both against the
//! adversary RA3-Q learned and against zero-intelligence traders.

use riskq::envs::{AdversarialMarket, Market, MarketConfig};
use riskq::eval::{perturbation_eval, Perturbation, Policy};
use riskq::multi_agent::{train_ra3q_core, Ra3Config};
use riskq::single_agent::{train_ra2q_env, Ra2Config};
use riskq::{RandomStream, UtilityParams};

fn main() -> riskq::Result<()> {
    let cfg = MarketConfig::default();
    let (up, ua) = (UtilityParams::new(-0.5)?, UtilityParams::new(0.5)?);
    let ra2 = Ra2Config { steps: 200_000, epsilon: 0.1, gamma: 0.9, utility: up, k: 5, lambda_p: 0.5 };
    let ra3 = Ra3Config {
        steps: 200_000,
        epsilon: 0.1,
        gamma: 0.9,
        utility_p: up,
        utility_a: ua,
        k: 5,
        lambda_p: 0.5,
        lambda_a: 0.5,
    };
    let e2 = train_ra2q_env(&mut Market::new(cfg.clone(), 1)?, &ra2, &mut RandomStream::new(1), &mut |_| {})?;
    let e3 = train_ra3q_core(&mut AdversarialMarket::new(cfg.clone())?, &ra3, &mut RandomStream::new(2), None, &mut |_| {})?;

    let policies = [("RA2-Q", Policy::greedy(e2.mean_table())), ("RA3-Q", Policy::protagonist(&e3.mean_protagonist()))];
    let perturbations = [
        ("adversarial", Perturbation::Adversary(Policy::adversary(&e3.mean_adversary()))),
        ("zi", Perturbation::Zi { count: 5, intensity: 0.5, seed: 3 }),
    ];
    for (name, p) in &policies {
        for (label, pert) in &perturbations {
            let r = perturbation_eval(p, pert, &cfg, 200, 99)?;
            println!("{name:<6} {label:<12} sharpe {:>8}  mean {:+8.3}", fmt(r.sharpe), r.mean_return);
        }
    }
    Ok(())
}

fn fmt(m: riskq::eval::Metric) -> String {
    m.value().map_or("n/a".into(), |v| format!("{v:.4}"))
}
