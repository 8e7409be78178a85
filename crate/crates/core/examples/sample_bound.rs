//! How many samples per profile the risk-averse meta-payoff estimate needs,
//! and a Monte Carlo check of the guarantee on a coin-flip game.

use riskq::egt::{required_sample_size, verify_sample_bound, SampleBoundGame};

fn main() -> riskq::Result<()> {
    for (eps, delta) in [(0.5, 0.2), (0.25, 0.1), (0.1, 0.05)] {
        let n = required_sample_size(eps, delta, 1.0, 0.5, 1.0, &[2, 2], 2)?;
        println!("eps {eps:<5} delta {delta:<5} -> n = {n}");
    }
    let game = SampleBoundGame::bernoulli(0.5, 7);
    let report = verify_sample_bound(&game, 0.5, 0.2, 200)?;
    println!(
        "n = {}, coverage {:.3} over {} trials, worst error {:.4}",
        report.n, report.coverage, report.trials, report.worst_error
    );
    Ok(())
}
