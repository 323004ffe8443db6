//! Single-episode rollouts through the channel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, Symbol};
use crate::error::Result;
use crate::gridworld::{Action, GridConfig, GridWorld, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps: usize,
    pub discounted_return: f64,
}

/// Runs one episode from `start`. Each step the transmitter maps the current
/// observation to a symbol, the channel adds noise and the receiver picks an
/// action from the noisy symbol.
pub fn run_episode<R, T, D>(
    grid: GridConfig,
    start: Observation,
    channel: &ChannelConfig,
    gamma: f64,
    rng: &mut R,
    mut transmit: T,
    mut decide: D,
) -> Result<EpisodeResult>
where
    R: Rng + ?Sized,
    T: FnMut(&Observation) -> Result<Symbol>,
    D: FnMut(Symbol) -> Action,
{
    let mut world = GridWorld::from_observation(grid, start)?;
    let mut ret = 0.0;
    let mut discount = 1.0;
    loop {
        let x = transmit(&world.observation())?;
        let y = channel.transmit(x, rng);
        let out = world.step(decide(y))?;
        ret += discount * out.reward;
        discount *= gamma;
        if out.done {
            return Ok(EpisodeResult {
                success: out.reached,
                steps: world.steps(),
                discounted_return: ret,
            });
        }
    }
}
