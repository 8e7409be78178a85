//! A two-seat tournament between three hand-made market policies, reduced
//! to a meta-payoff table.

use riskq::egt::build_meta_payoff_table;
use riskq::envs::MarketConfig;
use riskq::eval::{match_results, run_tournament, Policy, TournamentSpec};
use riskq::{ActionId, QTable, StateId};

/// Buys when the imbalance bin is above `cut`, sells below it.
fn momentum(cfg: &MarketConfig, cut: usize, offset: usize) -> Policy {
    let mut q = QTable::zeros(cfg.num_states(), cfg.num_actions());
    for s in 0..cfg.num_states() {
        let ibin = s % cfg.imbalance_bins;
        let a = if ibin > cut {
            offset
        } else if ibin < cut {
            cfg.num_offsets + offset
        } else {
            0
        };
        q.set(StateId(s), ActionId(a), 1.0);
    }
    Policy::greedy(q)
}

fn main() -> riskq::Result<()> {
    let market = MarketConfig::default();
    let names = ["tight", "loose", "contrarian"].map(String::from);
    let contrarian = {
        let mut q = QTable::zeros(market.num_states(), market.num_actions());
        for s in 0..market.num_states() {
            let ibin = s % market.imbalance_bins;
            let a = if ibin > 2 { market.num_offsets + 1 } else if ibin < 2 { 1 } else { 0 };
            q.set(StateId(s), ActionId(a), 1.0);
        }
        Policy::greedy(q)
    };
    let spec = TournamentSpec {
        strategies: vec![
            (names[0].clone(), momentum(&market, 2, 1)),
            (names[1].clone(), momentum(&market, 2, 2)),
            (names[2].clone(), contrarian),
        ],
        market,
        players: 2,
        blocks: 10,
        episodes_per_block: 10,
        seed: 5,
    };
    let report = run_tournament(&spec)?;
    let results = match_results(&report, &names)?;
    let table = build_meta_payoff_table(&names, &results, 2, 0.5)?;
    print!("{}", table.to_csv()?);
    Ok(())
}
