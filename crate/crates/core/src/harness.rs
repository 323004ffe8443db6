//! SNR sweeps over partition and policy combinations.
//!
//! Every cell `(policy, partition, snr, seed)` draws its channel noise from
//! a stream derived from the cell key alone, so adding or removing cells
//! leaves the others bit-identical. Start states depend only on the seed,
//! which pairs episodes across cells.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelConfig;
use crate::episode::{run_episode, EpisodeResult};
use crate::equalizer::{Equalizer, EqualizerPolicy, TransformCodebook};
use crate::error::{Error, Result};
use crate::gridworld::{GridWorld, Observation};
use crate::language::Language;
use crate::partition::{Partition, PartitionKind};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepPolicy {
    Sem,
    Eff,
    /// Source encoder straight into the target decoder.
    Identity,
    /// Target encoder into the target decoder.
    Matched,
}

impl SweepPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SweepPolicy::Sem => "sem",
            SweepPolicy::Eff => "eff",
            SweepPolicy::Identity => "identity",
            SweepPolicy::Matched => "matched",
        }
    }

    /// Whether cells of this policy depend on a partition.
    pub fn uses_partition(self) -> bool {
        matches!(self, SweepPolicy::Sem | SweepPolicy::Eff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub kind: PartitionKind,
    /// Atom count for soft partitions; hard partitions use one atom per action.
    #[serde(default)]
    pub n_c: usize,
}

impl PartitionSpec {
    pub const fn hard() -> Self {
        Self {
            kind: PartitionKind::Hard,
            n_c: 4,
        }
    }

    pub const fn soft(n_c: usize) -> Self {
        Self {
            kind: PartitionKind::Soft,
            n_c,
        }
    }

    pub fn normalized(self) -> Self {
        match self.kind {
            PartitionKind::Hard => Self::hard(),
            PartitionKind::Soft => self,
        }
    }

    /// File-name friendly identifier, e.g. `hard-4` or `soft-8`.
    pub fn id(&self) -> String {
        format!("{}-{}", self.kind, self.n_c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == PartitionKind::Soft && self.n_c < 2 {
            return Err(Error::Config(format!(
                "soft partitions need n_c >= 2, got {}",
                self.n_c
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub snr_grid_db: Vec<f64>,
    pub n_episodes: usize,
    pub seeds: Vec<u64>,
    pub partitions: Vec<PartitionSpec>,
    pub policies: Vec<SweepPolicy>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            n_episodes: 1000,
            seeds: vec![0, 1, 2, 3, 4],
            partitions: vec![
                PartitionSpec::hard(),
                PartitionSpec::soft(4),
                PartitionSpec::soft(6),
                PartitionSpec::soft(8),
            ],
            policies: vec![
                SweepPolicy::Sem,
                SweepPolicy::Eff,
                SweepPolicy::Identity,
                SweepPolicy::Matched,
            ],
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.snr_grid_db.is_empty() || self.seeds.is_empty() || self.policies.is_empty() {
            return bad("sweep lists must be non-empty");
        }
        if self.n_episodes == 0 {
            return bad("n_episodes must be at least 1");
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return bad("SNR values must be finite");
        }
        if self.policies.iter().any(|p| p.uses_partition()) && self.partitions.is_empty() {
            return bad("equalizing policies need at least one partition");
        }
        for p in &self.partitions {
            p.validate()?;
        }
        Ok(())
    }

    /// Every cell in canonical order: policy, partition, SNR, seed.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &policy in &self.policies {
            let parts: Vec<Option<PartitionSpec>> = if policy.uses_partition() {
                self.partitions
                    .iter()
                    .map(|p| Some(p.normalized()))
                    .collect()
            } else {
                vec![None]
            };
            for partition in parts {
                for &snr_db in &self.snr_grid_db {
                    for &seed in &self.seeds {
                        out.push(CellKey {
                            policy,
                            partition,
                            snr_db,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub policy: SweepPolicy,
    pub partition: Option<PartitionSpec>,
    pub snr_db: f64,
    pub seed: u64,
}

impl CellKey {
    /// Seed of the cell's channel-noise stream.
    pub fn noise_seed(&self, master: u64) -> u64 {
        let part = self.partition.map_or(0, |p| seed::label(&p.id()));
        seed::derive_path(
            master,
            &[
                seed::label("sweep-noise"),
                self.seed,
                seed::label(self.policy.name()),
                part,
                self.snr_db.to_bits(),
            ],
        )
    }

    /// Stable identifier, used for cache file names.
    pub fn id(&self) -> String {
        let part = self
            .partition
            .map_or_else(|| "none".to_string(), |p| p.id());
        format!(
            "{}_{}_{}_{}",
            self.policy.name(),
            part,
            self.snr_db,
            self.seed
        )
    }
}

/// Start states shared by every cell with the same evaluation seed.
pub fn start_states(
    lang: &Language,
    master: u64,
    eval_seed: u64,
    n: usize,
) -> Result<Vec<Observation>> {
    let mut rng = seed::rng_at(master, &[seed::label("sweep-starts"), eval_seed]);
    (0..n)
        .map(|_| GridWorld::reset(lang.grid, &mut rng).map(|w| w.observation()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub success_rate: f64,
    pub mean_steps: f64,
    pub mean_return: f64,
    /// Half-width of the normal-approximation 95% interval on the success rate.
    pub ci_half_width: f64,
}

impl CellSummary {
    pub fn from_episodes(episodes: &[EpisodeResult]) -> Self {
        let n = episodes.len() as f64;
        let p = episodes.iter().filter(|e| e.success).count() as f64 / n;
        Self {
            success_rate: p,
            mean_steps: episodes.iter().map(|e| e.steps as f64).sum::<f64>() / n,
            mean_return: episodes.iter().map(|e| e.discounted_return).sum::<f64>() / n,
            ci_half_width: 1.96 * (p * (1.0 - p) / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub summary: CellSummary,
    pub episodes: Vec<EpisodeResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub version: String,
    pub cells: Vec<CellResult>,
}

/// Source and target partitions of one kind plus their codebook.
pub struct PartitionPair {
    pub spec: PartitionSpec,
    pub source: Partition,
    pub target: Partition,
    pub codebook: TransformCodebook,
}

/// Everything a sweep reads.
pub struct SweepInputs<'a> {
    pub source: &'a Language,
    pub target: &'a Language,
    pub pairs: &'a [PartitionPair],
    /// Discount used for the logged return.
    pub gamma: f64,
    pub master_seed: u64,
}

impl SweepInputs<'_> {
    fn pair(&self, spec: PartitionSpec) -> Result<&PartitionPair> {
        self.pairs
            .iter()
            .find(|p| p.spec.normalized() == spec)
            .ok_or_else(|| Error::Usage(format!("no partition pair for {}", spec.id())))
    }

    /// Runs one cell from scratch.
    pub fn run_cell(&self, key: &CellKey, starts: &[Observation]) -> Result<CellResult> {
        let channel = ChannelConfig::new(key.snr_db);
        channel.validate()?;
        let mut rng = seed::rng(key.noise_seed(self.master_seed));
        let grid = self.target.grid;
        let episodes = match key.policy {
            SweepPolicy::Matched => starts
                .iter()
                .map(|&s| {
                    self.target
                        .run_matched_episode(s, &channel, self.gamma, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?,
            SweepPolicy::Identity => starts
                .iter()
                .map(|&s| {
                    run_episode(
                        grid,
                        s,
                        &channel,
                        self.gamma,
                        &mut rng,
                        |o| self.source.encode(o),
                        |y| self.target.greedy_action(y),
                    )
                })
                .collect::<Result<Vec<_>>>()?,
            policy => {
                let eq_policy = if policy == SweepPolicy::Sem {
                    EqualizerPolicy::Sem
                } else {
                    EqualizerPolicy::Eff
                };
                let spec = key.partition.ok_or_else(|| {
                    Error::Usage(format!("{} cells need a partition", policy.name()))
                })?;
                let pair = self.pair(spec)?;
                let eq = Equalizer {
                    source: self.source,
                    target: self.target,
                    source_partition: &pair.source,
                    target_partition: &pair.target,
                    codebook: &pair.codebook,
                };
                starts
                    .iter()
                    .map(|&s| eq.run_episode(eq_policy, grid, s, &channel, self.gamma, &mut rng))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(CellResult {
            key: *key,
            summary: CellSummary::from_episodes(&episodes),
            episodes,
        })
    }
}

/// Runs every cell of `cfg`, reusing results `cached` returns for a cell.
/// `on_done` sees each freshly computed cell, e.g. to persist it.
pub fn run_sweep_with<C, F>(
    cfg: &SweepConfig,
    inputs: &SweepInputs<'_>,
    config_hash: &str,
    cached: C,
    on_done: F,
) -> Result<SweepReport>
where
    C: Fn(&CellKey) -> Option<CellResult> + Sync,
    F: Fn(&CellResult) -> Result<()> + Sync,
{
    cfg.validate()?;
    let mut starts = BTreeMap::new();
    for &s in &cfg.seeds {
        starts.insert(
            s,
            start_states(inputs.target, inputs.master_seed, s, cfg.n_episodes)?,
        );
    }
    let cells = cfg
        .cells()
        .par_iter()
        .map(|key| {
            if let Some(hit) = cached(key) {
                return Ok(hit);
            }
            let res = inputs.run_cell(key, &starts[&key.seed])?;
            on_done(&res)?;
            Ok(res)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        config_hash: config_hash.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        cells,
    })
}

pub fn run_sweep(
    cfg: &SweepConfig,
    inputs: &SweepInputs<'_>,
    config_hash: &str,
) -> Result<SweepReport> {
    run_sweep_with(cfg, inputs, config_hash, |_| None, |_| Ok(()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingAssertion {
    pub policy: SweepPolicy,
    pub snr_db: f64,
    /// Human-readable relation, e.g. `soft-8 >= hard-4`.
    pub relation: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    /// Set when the means rest on a single seed.
    pub low_confidence: bool,
}

impl SweepReport {
    /// Seed-mean success of a `(policy, partition, snr)` group, if present.
    pub fn seed_mean(
        &self,
        policy: SweepPolicy,
        partition: Option<PartitionSpec>,
        snr_db: f64,
    ) -> Option<(f64, usize)> {
        let rates: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| {
                c.key.policy == policy && c.key.partition == partition && c.key.snr_db == snr_db
            })
            .map(|c| c.summary.success_rate)
            .collect();
        (!rates.is_empty()).then(|| (rates.iter().sum::<f64>() / rates.len() as f64, rates.len()))
    }

    pub fn snr_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.cells.iter().map(|c| c.key.snr_db).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

/// At every SNR at or above `min_snr_db`, checks
/// `soft-8 >= hard-4 >= max(soft-4, soft-6)` on seed-mean success for each
/// equalizing policy present in the report.
pub fn ordering_check(report: &SweepReport, min_snr_db: f64) -> Result<Vec<OrderingAssertion>> {
    let hard = PartitionSpec::hard();
    let (s4, s6, s8) = (
        PartitionSpec::soft(4),
        PartitionSpec::soft(6),
        PartitionSpec::soft(8),
    );
    let mut out = Vec::new();
    for policy in [SweepPolicy::Sem, SweepPolicy::Eff] {
        if !report.cells.iter().any(|c| c.key.policy == policy) {
            continue;
        }
        for snr in report.snr_values().into_iter().filter(|&s| s >= min_snr_db) {
            let get = |p: PartitionSpec| {
                report.seed_mean(policy, Some(p), snr).ok_or_else(|| {
                    Error::Usage(format!(
                        "report lacks {} {} at {snr} dB",
                        policy.name(),
                        p.id()
                    ))
                })
            };
            let (h, n) = get(hard)?;
            let (v4, _) = get(s4)?;
            let (v6, _) = get(s6)?;
            let (v8, _) = get(s8)?;
            let low_confidence = n < 2;
            out.push(OrderingAssertion {
                policy,
                snr_db: snr,
                relation: "soft-8 >= hard-4".into(),
                lhs: v8,
                rhs: h,
                pass: v8 >= h,
                low_confidence,
            });
            let worst = v4.max(v6);
            out.push(OrderingAssertion {
                policy,
                snr_db: snr,
                relation: "hard-4 >= max(soft-4, soft-6)".into(),
                lhs: h,
                rhs: worst,
                pass: h >= worst,
                low_confidence,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Usage(
            "report has no equalizing policy cells to order".into(),
        ));
    }
    Ok(out)
}
