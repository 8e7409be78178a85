//! Step the toy market by hand: buy one tick above mid, hold, then sell.

use riskq::envs::{Market, MarketConfig};
use riskq::{ActionId, RandomStream};

fn main() -> riskq::Result<()> {
    let cfg = MarketConfig { episode_length: 12, ..MarketConfig::default() };
    let n = cfg.num_offsets;
    let mut m = Market::new(cfg, 1)?;
    m.reset_episode(&mut RandomStream::new(17));
    let mut total = 0.0;
    while !m.is_done() {
        let st = m.state(0);
        let a = match st.t {
            0..=2 => ActionId(1),
            9.. => ActionId(n + 1),
            _ => ActionId(0),
        };
        let (next, r, _) = m.market_step(a, None)?;
        total += r;
        println!(
            "t={:>2} action={:>2} mid={:8.3} holdings={:>2} imbalance={:+.3} reward={:+.3}",
            st.t, a.0, next.mid, next.holdings, next.imbalance, r
        );
    }
    println!("episode profit {total:.3}, final mark-to-market {:.3}", m.state(0).mark_to_market());
    Ok(())
}
