//! Environments: finite models with exposed dynamics and a toy trading market.

pub mod market;
pub mod tabular;

pub use market::{
    inject_zi_agents, load_price_csv, AdversarialMarket, Market, MarketConfig, MarketState,
    Order, PriceSource,
};
pub use tabular::{
    make_random_game, make_random_mdp, RandomGameSpec, RandomMdpSpec, TabularGame, TabularMdp,
};
