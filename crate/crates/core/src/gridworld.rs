//! Deterministic grid world with an agent and a static treasure.
//!
//! Coordinates grow rightwards (`x`) and downwards (`y`). Moves that would
//! leave the grid keep the agent in place.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub max_steps: usize,
    /// Reward for a move that does not bring the agent closer (including wall bumps).
    pub step_reward: f64,
    /// Reward for a move that reduces the distance without reaching the treasure.
    pub progress_reward: f64,
    pub goal_reward: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            max_steps: 150,
            step_reward: -1.0,
            progress_reward: 1.0,
            goal_reward: 1.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::Config(format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        if ![self.step_reward, self.progress_reward, self.goal_reward]
            .iter()
            .all(|r| r.is_finite())
        {
            return Err(Error::Config("rewards must be finite".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Number of non-terminal observations.
    pub fn n_states(&self) -> usize {
        self.cells() * (self.cells() - 1)
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    /// Row-major index.
    pub fn index(self, width: usize) -> usize {
        self.y * width + self.x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    pub agent: Cell,
    pub treasure: Cell,
}

impl Observation {
    pub const fn new(agent: Cell, treasure: Cell) -> Self {
        Self { agent, treasure }
    }

    pub fn is_terminal(&self) -> bool {
        self.agent == self.treasure
    }

    pub fn distance(&self) -> usize {
        self.agent.manhattan(self.treasure)
    }

    /// Position of this observation in [`enumerate_states`] order.
    pub fn state_index(&self, config: &GridConfig) -> usize {
        let a = self.agent.index(config.width);
        let t = self.treasure.index(config.width);
        a * (config.cells() - 1) + if t > a { t - 1 } else { t }
    }

    /// Concatenated one-hot encoding of the agent cell and the treasure cell.
    pub fn one_hot(&self, config: &GridConfig) -> Vec<f64> {
        let mut v = vec![0.0; 2 * config.cells()];
        self.write_one_hot(config, &mut v);
        v
    }

    pub fn write_one_hot(&self, config: &GridConfig, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[self.agent.index(config.width)] = 1.0;
        out[config.cells() + self.treasure.index(config.width)] = 1.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Right = 0,
    Down = 1,
    Left = 2,
    Up = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Right, Action::Down, Action::Left, Action::Up];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Action::Right => "R",
            Action::Down => "D",
            Action::Left => "L",
            Action::Up => "U",
        }
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Right => (1, 0),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Up => (0, -1),
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Cell reached from `cell` under `action`, clamped at the walls.
pub fn move_cell(config: &GridConfig, cell: Cell, action: Action) -> Cell {
    let (dx, dy) = action.delta();
    let nx = cell.x as isize + dx;
    let ny = cell.y as isize + dy;
    if nx < 0 || ny < 0 || nx >= config.width as isize || ny >= config.height as isize {
        cell
    } else {
        Cell::new(nx as usize, ny as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// True when the treasure was reached (as opposed to hitting the step cap).
    pub reached: bool,
}

/// One episode of the grid world.
#[derive(Debug, Clone)]
pub struct GridWorld {
    config: GridConfig,
    observation: Observation,
    steps: usize,
    done: bool,
}

impl GridWorld {
    /// Starts an episode from a uniformly drawn non-terminal state.
    pub fn reset<R: Rng + ?Sized>(config: GridConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let cells = config.cells();
        let k = rng.random_range(0..cells * (cells - 1));
        let agent = k / (cells - 1);
        let mut treasure = k % (cells - 1);
        if treasure >= agent {
            treasure += 1;
        }
        Ok(Self {
            config,
            observation: Observation::new(config.cell_at(agent), config.cell_at(treasure)),
            steps: 0,
            done: false,
        })
    }

    pub fn reset_seeded(config: GridConfig, seed: u64) -> Result<Self> {
        Self::reset(config, &mut seed::rng(seed))
    }

    /// Starts an episode from a given state.
    pub fn from_observation(config: GridConfig, observation: Observation) -> Result<Self> {
        config.validate()?;
        if !config.contains(observation.agent) || !config.contains(observation.treasure) {
            return Err(Error::Usage("observation outside the grid".into()));
        }
        if observation.is_terminal() {
            return Err(Error::Usage(
                "episode cannot start in a terminal state".into(),
            ));
        }
        Ok(Self {
            config,
            observation,
            steps: 0,
            done: false,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn observation(&self) -> Observation {
        self.observation
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Usage(
                "step called after the episode finished".into(),
            ));
        }
        let before = self.observation.distance();
        let agent = move_cell(&self.config, self.observation.agent, action);
        self.observation.agent = agent;
        self.steps += 1;
        let reached = agent == self.observation.treasure;
        self.done = reached || self.steps >= self.config.max_steps;
        Ok(StepOutcome {
            observation: self.observation,
            reward: if reached {
                self.config.goal_reward
            } else if self.observation.distance() < before {
                self.config.progress_reward
            } else {
                self.config.step_reward
            },
            done: self.done,
            reached,
        })
    }
}

/// All non-terminal observations: agent row-major, then treasure row-major.
pub fn enumerate_states(config: &GridConfig) -> Result<Vec<Observation>> {
    config.validate()?;
    let cells = config.cells();
    let mut out = Vec::with_capacity(config.n_states());
    for a in 0..cells {
        for t in (0..cells).filter(|&t| t != a) {
            out.push(Observation::new(config.cell_at(a), config.cell_at(t)));
        }
    }
    Ok(out)
}

/// Actions that strictly reduce the Manhattan distance to the treasure.
pub fn optimal_action_set(obs: &Observation) -> Result<Vec<Action>> {
    if obs.is_terminal() {
        return Err(Error::Usage("terminal state has no optimal action".into()));
    }
    let (a, t) = (obs.agent, obs.treasure);
    Ok(Action::ALL
        .into_iter()
        .filter(|&act| match act {
            Action::Right => t.x > a.x,
            Action::Down => t.y > a.y,
            Action::Left => t.x < a.x,
            Action::Up => t.y < a.y,
        })
        .collect())
}
