//! Languages: jointly trained encoder/decoder pairs.
//!
//! The encoder maps the one-hot observation to a raw 2-D symbol, which is
//! power-normalized by the rolling constant `tau` before entering the
//! channel. The decoder maps the received symbol to four action values.
//! Both networks are trained end to end with deep Q-learning while the
//! channel adds noise between them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, Symbol};
use crate::episode::{run_episode, EpisodeResult};
use crate::error::{Error, Result};
use crate::gridworld::{enumerate_states, Action, GridConfig, GridWorld, Observation};
use crate::nn::{Adam, AdamConfig, Gradients, Mlp};
use crate::seed::{self, SimRng};

/// Action values for the four actions.
pub type QVector = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `x = x* / sqrt(tau)`: unit average power.
    #[default]
    SqrtTau,
    /// `x = x* / tau`, the literal rolling-mean division.
    Tau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub lr: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Gradient steps between target-network syncs.
    pub target_sync_interval: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which epsilon decays linearly.
    pub epsilon_decay_steps: usize,
    /// Momentum of the rolling power normalization.
    pub eta: f64,
    pub hidden_units: usize,
    /// Replay size before the first gradient step.
    pub learning_starts: usize,
    pub normalization: Normalization,
    /// Weight of `(mean |x*|^2 - 1)^2` in the loss. The TD loss is invariant
    /// to the raw symbol scale, so without this term the encoder weights and
    /// `tau` drift upward without bound.
    pub power_anchor: f64,
    pub tau_freeze: TauFreeze,
}

/// How `tau` is fixed once training ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauFreeze {
    /// Keep the last rolling value, which tracks the replay distribution.
    Final,
    /// Replace it by the raw power averaged over every state, so the frozen
    /// encoder has unit power under uniformly drawn states.
    #[default]
    StateAverage,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            episodes: 2_000,
            gamma: 0.5,
            lr: 1e-3,
            replay_capacity: 50_000,
            batch_size: 64,
            target_sync_interval: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 50_000,
            eta: 0.1,
            hidden_units: 64,
            learning_starts: 1_000,
            normalization: Normalization::SqrtTau,
            power_anchor: 0.01,
            tau_freeze: TauFreeze::StateAverage,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.episodes == 0
            || self.replay_capacity == 0
            || self.batch_size == 0
            || self.target_sync_interval == 0
            || self.hidden_units == 0
        {
            return bad("dqn counts must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if self.epsilon_start < self.epsilon_end {
            return bad("epsilon_start must be at least epsilon_end");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if !(self.power_anchor >= 0.0 && self.power_anchor.is_finite()) {
            return bad("power_anchor must be non-negative");
        }
        if self.batch_size > self.replay_capacity {
            return bad("batch_size cannot exceed replay_capacity");
        }
        Ok(())
    }

    fn epsilon(&self, env_step: usize) -> f64 {
        if self.epsilon_decay_steps == 0 || env_step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let f = env_step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + f * (self.epsilon_end - self.epsilon_start)
    }
}

/// Rolling estimate of the raw symbol power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerNormalizer {
    pub tau: Option<f64>,
    pub eta: f64,
    pub mode: Normalization,
}

impl PowerNormalizer {
    pub fn new(eta: f64, mode: Normalization) -> Self {
        Self {
            tau: None,
            eta,
            mode,
        }
    }

    /// `tau <- eta * tau + (1 - eta) * sq_norm`; the first observation initializes `tau`.
    pub fn update(&mut self, sq_norm: f64) {
        self.tau = Some(match self.tau {
            None => sq_norm,
            Some(t) => self.eta * t + (1.0 - self.eta) * sq_norm,
        });
    }

    /// Factor applied to raw symbols.
    pub fn scale(&self) -> Result<f64> {
        let tau = self
            .tau
            .ok_or_else(|| Error::Usage("normalization constant not initialized".into()))?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Numerical(format!(
                "invalid normalization constant {tau}"
            )));
        }
        Ok(match self.mode {
            Normalization::SqrtTau => 1.0 / tau.sqrt(),
            Normalization::Tau => 1.0 / tau,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Language {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub normalizer: PowerNormalizer,
    pub grid: GridConfig,
    pub train_seed: u64,
    pub train_snr_db: f64,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn greedy(q: &QVector) -> Action {
    Action::from_index(argmax(q)).expect("four action values")
}

impl Language {
    /// Fresh networks with the default architecture.
    pub fn init(
        grid: GridConfig,
        dqn: &DqnConfig,
        train_seed: u64,
        train_snr_db: f64,
    ) -> Result<Self> {
        grid.validate()?;
        let mut rng = seed::rng_at(train_seed, &[seed::label("init")]);
        let h = dqn.hidden_units;
        let encoder = Mlp::he_uniform(&[2 * grid.cells(), h, h, 2], &mut rng)?;
        let decoder = Mlp::he_uniform(&[2, h, h, Action::COUNT], &mut rng)?;
        Self::from_parts(
            encoder,
            decoder,
            PowerNormalizer::new(dqn.eta, dqn.normalization),
            grid,
            train_seed,
            train_snr_db,
        )
    }

    pub fn from_parts(
        encoder: Mlp,
        decoder: Mlp,
        normalizer: PowerNormalizer,
        grid: GridConfig,
        train_seed: u64,
        train_snr_db: f64,
    ) -> Result<Self> {
        let lang = Self {
            encoder,
            decoder,
            normalizer,
            grid,
            train_seed,
            train_snr_db,
        };
        lang.validate()?;
        Ok(lang)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.encoder.input_dim() != 2 * self.grid.cells() || self.encoder.output_dim() != 2 {
            return Err(Error::Format(
                "encoder shape does not match the grid".into(),
            ));
        }
        if self.decoder.input_dim() != 2 || self.decoder.output_dim() != Action::COUNT {
            return Err(Error::Format(
                "decoder must map R^2 to four action values".into(),
            ));
        }
        if let Some(t) = self.normalizer.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Format(format!("invalid tau {t}")));
            }
        }
        Ok(())
    }

    pub fn tau(&self) -> Option<f64> {
        self.normalizer.tau
    }

    /// Encoder output before power normalization.
    pub fn raw_symbol(&self, obs: &Observation) -> Symbol {
        let out = self
            .encoder
            .forward(&obs.one_hot(&self.grid))
            .expect("encoder input width is checked at construction");
        [out[0], out[1]]
    }

    /// Normalized symbol with `tau` frozen.
    pub fn encode(&self, obs: &Observation) -> Result<Symbol> {
        let s = self.normalizer.scale()?;
        let r = self.raw_symbol(obs);
        Ok([r[0] * s, r[1] * s])
    }

    /// Normalized symbol after folding this symbol's power into `tau`.
    pub fn encode_training(&mut self, obs: &Observation) -> Result<Symbol> {
        let r = self.raw_symbol(obs);
        self.normalizer.update(r[0] * r[0] + r[1] * r[1]);
        let s = self.normalizer.scale()?;
        Ok([r[0] * s, r[1] * s])
    }

    pub fn q_values(&self, y: Symbol) -> QVector {
        let q = self
            .decoder
            .forward(&y)
            .expect("decoder input width is checked at construction");
        [q[0], q[1], q[2], q[3]]
    }

    pub fn greedy_action(&self, y: Symbol) -> Action {
        greedy(&self.q_values(y))
    }

    /// Mean squared norm of the raw encoder output over every state.
    pub fn raw_state_power(&self) -> Result<f64> {
        let states = enumerate_states(&self.grid)?;
        let total: f64 = states
            .iter()
            .map(|o| {
                let r = self.raw_symbol(o);
                r[0] * r[0] + r[1] * r[1]
            })
            .sum();
        Ok(total / states.len() as f64)
    }

    /// Mean squared norm of the frozen encoding over every state.
    pub fn average_power(&self) -> Result<f64> {
        let states = enumerate_states(&self.grid)?;
        let mut acc = 0.0;
        for o in &states {
            let x = self.encode(o)?;
            acc += x[0] * x[0] + x[1] * x[1];
        }
        Ok(acc / states.len() as f64)
    }

    /// Matched-language rollout: own encoder, own decoder.
    pub fn run_matched_episode<R: Rng + ?Sized>(
        &self,
        start: Observation,
        channel: &ChannelConfig,
        gamma: f64,
        rng: &mut R,
    ) -> Result<EpisodeResult> {
        run_episode(
            self.grid,
            start,
            channel,
            gamma,
            rng,
            |o| self.encode(o),
            |y| self.greedy_action(y),
        )
    }

    /// Success rate of the matched policy over `episodes` uniformly drawn starts.
    pub fn success_rate(
        &self,
        channel: &ChannelConfig,
        episodes: usize,
        eval_seed: u64,
    ) -> Result<f64> {
        let mut rng = seed::rng(eval_seed);
        let mut ok = 0usize;
        for _ in 0..episodes {
            let start = GridWorld::reset(self.grid, &mut rng)?.observation();
            if self
                .run_matched_episode(start, channel, 0.95, &mut rng)?
                .success
            {
                ok += 1;
            }
        }
        Ok(ok as f64 / episodes as f64)
    }
}

#[derive(Debug, Clone, Copy)]
struct Transition {
    obs: Observation,
    action: Action,
    reward: f64,
    next: Observation,
    terminal: bool,
}

/// Per-episode training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub episode: usize,
    pub steps: usize,
    pub reached: bool,
    pub epsilon: f64,
    pub mean_loss: f64,
    pub tau: f64,
}

struct Trainer<'a> {
    cfg: &'a DqnConfig,
    channel: ChannelConfig,
    online: Language,
    target_encoder: Mlp,
    target_decoder: Mlp,
    enc_opt: Adam,
    dec_opt: Adam,
    replay: Vec<Transition>,
    replay_next: usize,
    grad_steps: usize,
    noise_rng: SimRng,
    sample_rng: SimRng,
    input: Vec<f64>,
    next_input: Vec<f64>,
}

impl Trainer<'_> {
    fn push(&mut self, t: Transition) {
        if self.replay.len() < self.cfg.replay_capacity {
            self.replay.push(t);
        } else {
            self.replay[self.replay_next] = t;
        }
        self.replay_next = (self.replay_next + 1) % self.cfg.replay_capacity;
    }

    /// One gradient step on a replayed minibatch; returns the mean squared TD error.
    fn learn(&mut self) -> Result<f64> {
        let b = self.cfg.batch_size;
        let grid = self.online.grid;
        let width = 2 * grid.cells();
        let batch: Vec<Transition> = (0..b)
            .map(|_| self.replay[self.sample_rng.random_range(0..self.replay.len())])
            .collect();
        for (r, t) in batch.iter().enumerate() {
            t.obs
                .write_one_hot(&grid, &mut self.input[r * width..(r + 1) * width]);
            t.next
                .write_one_hot(&grid, &mut self.next_input[r * width..(r + 1) * width]);
        }
        let noise: Vec<f64> = (0..b)
            .flat_map(|_| self.channel.noise(&mut self.noise_rng))
            .collect();
        let next_noise: Vec<f64> = (0..b)
            .flat_map(|_| self.channel.noise(&mut self.noise_rng))
            .collect();

        // Targets come from the frozen target pipeline at the current tau.
        let scale = self.online.normalizer.scale().or_else(|_| {
            let raw = self.online.encoder.forward_batch(&self.input, b)?;
            let p = raw
                .output()
                .chunks(2)
                .map(|c| c[0] * c[0] + c[1] * c[1])
                .sum::<f64>()
                / b as f64;
            let mut n = self.online.normalizer;
            n.update(p);
            n.scale()
        })?;
        let next_raw = self.target_encoder.forward_batch(&self.next_input, b)?;
        let next_received: Vec<f64> = next_raw
            .output()
            .iter()
            .zip(&next_noise)
            .map(|(r, n)| r * scale + n)
            .collect();
        let next_q = self.target_decoder.forward_batch(&next_received, b)?;
        let next_q = next_q.output();
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(r, t)| {
                let bootstrap = if t.terminal {
                    0.0
                } else {
                    let row = &next_q[r * 4..r * 4 + 4];
                    row[argmax(row)]
                };
                t.reward + self.cfg.gamma * bootstrap
            })
            .collect();
        let actions: Vec<Action> = batch.iter().map(|t| t.action).collect();

        let step = td_step(
            &self.online,
            &self.input,
            &noise,
            &actions,
            &targets,
            self.cfg.power_anchor,
        )?;
        if !step.loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss after {} gradient steps (tau = {:?})",
                self.grad_steps,
                self.online.tau()
            )));
        }
        self.online.normalizer = step.normalizer;
        self.dec_opt
            .step_mlp(&mut self.online.decoder, &step.decoder)
            .map_err(|e| Error::Training(format!("decoder update failed: {e}")))?;
        self.enc_opt
            .step_mlp(&mut self.online.encoder, &step.encoder)
            .map_err(|e| Error::Training(format!("encoder update failed: {e}")))?;

        self.grad_steps += 1;
        if self
            .grad_steps
            .is_multiple_of(self.cfg.target_sync_interval)
        {
            self.target_encoder = self.online.encoder.clone();
            self.target_decoder = self.online.decoder.clone();
        }
        Ok(step.loss)
    }
}

/// Result of one evaluation of the TD objective.
pub struct TdStep {
    /// Mean squared TD error, without the anchor term.
    pub loss: f64,
    pub anchor_loss: f64,
    pub encoder: Gradients,
    pub decoder: Gradients,
    /// Normalizer after folding in this batch's power.
    pub normalizer: PowerNormalizer,
}

/// Evaluates `0.5 * mean (Q(x* s(tau) + n)[a] - target)^2 + anchor * (mean |x*|^2 - 1)^2`
/// on a batch and its gradients. `tau` absorbs the batch's mean raw power, and the gradient
/// flows through that dependence; the noise `n` is held fixed.
pub fn td_step(
    lang: &Language,
    inputs: &[f64],
    noise: &[f64],
    actions: &[Action],
    targets: &[f64],
    anchor: f64,
) -> Result<TdStep> {
    let b = actions.len();
    if noise.len() != 2 * b || targets.len() != b {
        return Err(Error::Usage("batch buffers disagree on size".into()));
    }
    let enc_trace = lang.encoder.forward_batch(inputs, b)?;
    let raw = enc_trace.output();
    let mut normalizer = lang.normalizer;
    let first_update = normalizer.tau.is_none();
    let mean_sq = raw
        .chunks(2)
        .map(|c| c[0] * c[0] + c[1] * c[1])
        .sum::<f64>()
        / b as f64;
    normalizer.update(mean_sq);
    let scale = normalizer.scale()?;
    let received: Vec<f64> = raw.iter().zip(noise).map(|(r, n)| r * scale + n).collect();
    let dec_trace = lang.decoder.forward_batch(&received, b)?;
    let q = dec_trace.output();

    let mut out_grad = vec![0.0; Action::COUNT * b];
    let mut loss = 0.0;
    for r in 0..b {
        let a = actions[r].index();
        let td = q[r * 4 + a] - targets[r];
        loss += td * td;
        out_grad[r * 4 + a] = td / b as f64;
    }
    loss /= b as f64;

    let (decoder, received_grad) = lang.decoder.backward_batch(&dec_trace, &out_grad)?;
    // received = raw * s(tau) + n with tau = eta * tau_prev + (1 - eta) * mean |raw|^2.
    let tau = normalizer.tau.expect("updated above");
    let dtau_dmean = if first_update {
        1.0
    } else {
        1.0 - normalizer.eta
    };
    let ds_dtau = match normalizer.mode {
        Normalization::SqrtTau => -0.5 * tau.powf(-1.5),
        Normalization::Tau => -1.0 / (tau * tau),
    };
    let g_dot_raw: f64 = received_grad.iter().zip(raw).map(|(g, r)| g * r).sum();
    let coupling =
        (g_dot_raw * ds_dtau * dtau_dmean + 2.0 * anchor * (mean_sq - 1.0)) * 2.0 / b as f64;
    let raw_grad: Vec<f64> = received_grad
        .iter()
        .zip(raw)
        .map(|(g, r)| g * scale + coupling * r)
        .collect();
    let encoder = lang.encoder.param_gradients(&enc_trace, &raw_grad)?;
    Ok(TdStep {
        loss,
        anchor_loss: anchor * (mean_sq - 1.0).powi(2),
        encoder,
        decoder,
        normalizer,
    })
}

/// Trains a language with deep Q-learning, the channel in the loop.
///
/// Every random draw derives from `seed`. Returns the trained language with
/// `tau` frozen, plus one record per episode.
pub fn train_language_with_log(
    grid: GridConfig,
    dqn: &DqnConfig,
    channel: ChannelConfig,
    seed: u64,
) -> Result<(Language, Vec<TrainingRecord>)> {
    grid.validate()?;
    dqn.validate()?;
    channel.validate()?;
    let online = Language::init(grid, dqn, seed, channel.snr_db)?;
    let adam = AdamConfig {
        lr: dqn.lr,
        ..AdamConfig::default()
    };
    let width = 2 * grid.cells();
    let mut tr = Trainer {
        cfg: dqn,
        channel,
        enc_opt: Adam::for_mlp(adam, &online.encoder),
        dec_opt: Adam::for_mlp(adam, &online.decoder),
        target_encoder: online.encoder.clone(),
        target_decoder: online.decoder.clone(),
        online,
        replay: Vec::with_capacity(dqn.replay_capacity.min(1 << 16)),
        replay_next: 0,
        grad_steps: 0,
        noise_rng: seed::rng_at(seed, &[seed::label("train-noise")]),
        sample_rng: seed::rng_at(seed, &[seed::label("replay")]),
        input: vec![0.0; dqn.batch_size * width],
        next_input: vec![0.0; dqn.batch_size * width],
    };
    let mut env_rng = seed::rng_at(seed, &[seed::label("env")]);
    let mut act_rng = seed::rng_at(seed, &[seed::label("explore")]);
    let learning_starts = dqn.learning_starts.max(dqn.batch_size);

    let mut log = Vec::with_capacity(dqn.episodes);
    let mut env_steps = 0usize;
    for episode in 0..dqn.episodes {
        let mut world = GridWorld::reset(grid, &mut env_rng)?;
        let mut losses = 0.0;
        let mut n_losses = 0usize;
        let epsilon = dqn.epsilon(env_steps);
        let reached = loop {
            let obs = world.observation();
            let eps = dqn.epsilon(env_steps);
            let action = if act_rng.random::<f64>() < eps {
                Action::ALL[act_rng.random_range(0..Action::COUNT)]
            } else {
                let x = if tr.online.tau().is_none() {
                    tr.online.encode_training(&obs)?
                } else {
                    tr.online.encode(&obs)?
                };
                let y = channel.transmit(x, &mut act_rng);
                tr.online.greedy_action(y)
            };
            let out = world.step(action)?;
            tr.push(Transition {
                obs,
                action,
                reward: out.reward,
                next: out.observation,
                terminal: out.reached,
            });
            env_steps += 1;
            if tr.replay.len() >= learning_starts {
                losses += tr.learn()?;
                n_losses += 1;
            }
            if out.done {
                break out.reached;
            }
        };
        log.push(TrainingRecord {
            episode,
            steps: world.steps(),
            reached,
            epsilon,
            mean_loss: if n_losses > 0 {
                losses / n_losses as f64
            } else {
                0.0
            },
            tau: tr.online.tau().unwrap_or(f64::NAN),
        });
    }
    if dqn.tau_freeze == TauFreeze::StateAverage || tr.online.tau().is_none() {
        tr.online.normalizer.tau = Some(tr.online.raw_state_power()?);
    }
    tr.online.normalizer.scale()?;
    Ok((tr.online, log))
}

pub fn train_language(
    grid: GridConfig,
    dqn: &DqnConfig,
    channel: ChannelConfig,
    seed: u64,
) -> Result<Language> {
    train_language_with_log(grid, dqn, channel, seed).map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};

    fn tiny_dqn() -> DqnConfig {
        DqnConfig {
            episodes: 30,
            replay_capacity: 500,
            batch_size: 8,
            learning_starts: 16,
            target_sync_interval: 20,
            epsilon_decay_steps: 200,
            hidden_units: 8,
            ..DqnConfig::default()
        }
    }

    fn grid3() -> GridConfig {
        GridConfig {
            width: 3,
            height: 3,
            ..GridConfig::default()
        }
    }

    #[test]
    fn frozen_tau_divides_by_root() {
        let mut lang = Language::init(grid3(), &tiny_dqn(), 0, 5.0).unwrap();
        lang.normalizer.tau = Some(4.0);
        let s = lang.normalizer.scale().unwrap();
        assert_eq!([2.0 * s, 0.0 * s], [1.0, 0.0]);
    }

    #[test]
    fn rolling_rule() {
        let mut n = PowerNormalizer::new(0.1, Normalization::SqrtTau);
        n.update(1.0);
        n.update(2.0);
        assert!((n.tau.unwrap() - 1.9).abs() < 1e-15);
        let mut c = PowerNormalizer::new(0.1, Normalization::SqrtTau);
        for _ in 0..50 {
            c.update(3.5);
        }
        assert_eq!(c.tau, Some(3.5));
        let lit = PowerNormalizer {
            tau: Some(4.0),
            eta: 0.1,
            mode: Normalization::Tau,
        };
        assert_eq!(lit.scale().unwrap(), 0.25);
    }

    #[test]
    fn eval_encode_requires_tau() {
        let lang = Language::init(grid3(), &tiny_dqn(), 0, 5.0).unwrap();
        let o = enumerate_states(&grid3()).unwrap()[0];
        assert!(matches!(lang.encode(&o), Err(Error::Usage(_))));
        let mut l2 = lang.clone();
        let x = l2.encode_training(&o).unwrap();
        assert!(((x[0] * x[0] + x[1] * x[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_decoder_gives_zero_q_and_action_right() {
        let mut lang = Language::init(grid3(), &tiny_dqn(), 0, 5.0).unwrap();
        lang.decoder = Mlp::new(vec![
            Dense::zeros(2, 4, Activation::Relu),
            Dense::zeros(4, 4, Activation::Identity),
        ])
        .unwrap();
        assert_eq!(lang.q_values([0.4, -2.0]), [0.0; 4]);
        assert_eq!(lang.greedy_action([0.4, -2.0]), Action::Right);
    }

    #[test]
    fn q_values_match_decoder_forward() {
        let lang = Language::init(grid3(), &tiny_dqn(), 3, 5.0).unwrap();
        let y = [0.25, -0.75];
        assert_eq!(lang.q_values(y).to_vec(), lang.decoder.forward(&y).unwrap());
    }

    #[test]
    fn greedy_tie_break_and_scaling() {
        assert_eq!(greedy(&[0.0; 4]), Action::Right);
        assert_eq!(greedy(&[1.0, 3.0, 2.0, 0.0]), Action::Down);
        for c in [0.01, 1.0, 7.5, 1e6] {
            let q = [0.3 * c, -0.2 * c, 0.31 * c, 0.1 * c];
            assert_eq!(greedy(&q), Action::Left);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = DqnConfig::default();
        assert!(c.validate().is_ok());
        c.epsilon_start = 0.01;
        c.epsilon_end = 0.1;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = DqnConfig {
            gamma: 1.0,
            ..DqnConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn epsilon_schedule_is_linear() {
        let c = DqnConfig::default();
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(25_000) - 0.525).abs() < 1e-12);
        assert_eq!(c.epsilon(50_000), 0.05);
        assert_eq!(c.epsilon(90_000), 0.05);
    }

    #[test]
    fn training_is_deterministic_and_seed_dependent() {
        let ch = ChannelConfig::new(5.0);
        let a = train_language(grid3(), &tiny_dqn(), ch, 1).unwrap();
        let b = train_language(grid3(), &tiny_dqn(), ch, 1).unwrap();
        let c = train_language(grid3(), &tiny_dqn(), ch, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.tau().unwrap() > 0.0);
        let states = enumerate_states(&grid3()).unwrap();
        let dist: f64 = states
            .iter()
            .map(|o| {
                let (x, y) = (a.encode(o).unwrap(), c.encode(o).unwrap());
                ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt()
            })
            .sum::<f64>()
            / states.len() as f64;
        assert!(dist > 0.0);
    }

    fn td_objective(
        lang: &Language,
        inputs: &[f64],
        noise: &[f64],
        actions: &[Action],
        targets: &[f64],
    ) -> f64 {
        let s = td_step(lang, inputs, noise, actions, targets, 0.3).unwrap();
        0.5 * s.loss + s.anchor_loss
    }

    #[test]
    fn td_gradients_match_finite_differences() {
        let grid = GridConfig {
            width: 2,
            height: 2,
            ..GridConfig::default()
        };
        let dqn = DqnConfig {
            hidden_units: 5,
            ..DqnConfig::default()
        };
        let states = enumerate_states(&grid).unwrap();
        let mut rng = seed::rng(17);
        for mode in [Normalization::SqrtTau, Normalization::Tau] {
            for prior_tau in [None, Some(0.7)] {
                let mut lang = Language::init(grid, &dqn, 5, 5.0).unwrap();
                lang.normalizer.mode = mode;
                lang.normalizer.tau = prior_tau;
                let b = 6;
                let inputs: Vec<f64> = (0..b)
                    .flat_map(|i| states[(i * 5) % 12].one_hot(&grid))
                    .collect();
                let noise: Vec<f64> = (0..2 * b).map(|_| rng.random_range(-0.3..0.3)).collect();
                let actions: Vec<Action> = (0..b).map(|i| Action::ALL[i % 4]).collect();
                let targets: Vec<f64> = (0..b).map(|_| rng.random_range(-1.0..1.0)).collect();
                let step = td_step(&lang, &inputs, &noise, &actions, &targets, 0.3).unwrap();
                for (which, grads) in [(0, &step.encoder), (1, &step.decoder)] {
                    let analytic: Vec<f64> = grads.slices().concat();
                    let n = analytic.len();
                    for k in (0..n).step_by(3) {
                        let h = 1e-5;
                        let eval = |delta: f64| {
                            let mut l = lang.clone();
                            let net = if which == 0 {
                                &mut l.encoder
                            } else {
                                &mut l.decoder
                            };
                            let mut idx = k;
                            for p in net.params_mut() {
                                if idx < p.len() {
                                    p[idx] += delta;
                                    break;
                                }
                                idx -= p.len();
                            }
                            td_objective(&l, &inputs, &noise, &actions, &targets)
                        };
                        let fd = (eval(h) - eval(-h)) / (2.0 * h);
                        let a = analytic[k];
                        let err = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-6);
                        assert!(err < 1e-4, "net {which} param {k}: fd {fd} analytic {a}");
                    }
                }
            }
        }
    }
}
