//! Ground-truth generators: Ising samplers with known couplings and a
//! synthetic market-volume generator.

mod ising;
mod market;

pub use ising::{sample_equilibrium_glauber, simulate_asynchronous, simulate_synchronous, IsingModel};
pub use market::{synth_market_volumes, MarketSpec};
