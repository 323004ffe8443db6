//! File-level pipeline: train, partition, codebook and sweep steps that read
//! and write artifacts in one output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{content_hash, Container};
use crate::config::{ExperimentConfig, Role};
use crate::equalizer::{build_codebook, TransformCodebook};
use crate::error::{Error, Result};
use crate::gridworld::enumerate_states;
use crate::harness::{
    ordering_check, run_sweep_with, CellKey, CellResult, OrderingAssertion, PartitionPair,
    PartitionSpec, SweepInputs, SweepReport,
};
use crate::language::{train_language_with_log, Language};
use crate::partition::{
    build_hard_partition, build_soft_partition, pca_project, Partition, PartitionKind,
};
use crate::report;

pub const LANGUAGE: &str = "language";
pub const PARTITION: &str = "partition";
pub const CODEBOOK: &str = "codebook";
pub const CELL: &str = "cell";

/// Artifact locations under one output directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn language(&self, role: Role) -> PathBuf {
        self.root.join(format!("language_{}.json", role.name()))
    }

    pub fn training_log(&self, role: Role) -> PathBuf {
        self.root.join(format!("training_{}.csv", role.name()))
    }

    pub fn partition(&self, role: Role, spec: PartitionSpec) -> PathBuf {
        self.root
            .join(format!("partition_{}_{}.json", role.name(), spec.id()))
    }

    pub fn partition_csv(&self, role: Role, spec: PartitionSpec) -> PathBuf {
        self.root
            .join(format!("partition_{}_{}.csv", role.name(), spec.id()))
    }

    pub fn pca_csv(&self, role: Role) -> PathBuf {
        self.root
            .join(format!("pca_projection_{}.csv", role.name()))
    }

    pub fn codebook(&self, spec: PartitionSpec) -> PathBuf {
        self.root.join(format!("codebook_{}.json", spec.id()))
    }

    pub fn zeta_csv(&self, spec: PartitionSpec) -> PathBuf {
        self.root.join(format!("zeta_{}.csv", spec.id()))
    }

    pub fn cell_cache(&self, key: &CellKey) -> PathBuf {
        self.root.join("cells").join(format!("{}.json", key.id()))
    }

    pub fn sweep_report(&self) -> PathBuf {
        self.root.join("sweep_report.csv")
    }

    pub fn episodes(&self) -> PathBuf {
        self.root.join("episodes.csv.gz")
    }

    pub fn ordering(&self) -> PathBuf {
        self.root.join("ordering_check.csv")
    }
}

pub fn load_language(path: &Path) -> Result<Language> {
    let lang = Container::<Language>::load(path, LANGUAGE)?.payload;
    lang.validate()?;
    if lang.tau().is_none() {
        return Err(Error::Format(format!(
            "{}: language has no frozen tau",
            path.display()
        )));
    }
    Ok(lang)
}

pub fn load_partition(path: &Path) -> Result<Partition> {
    let p = Container::<Partition>::load(path, PARTITION)?.payload;
    p.validate()?;
    Ok(p)
}

pub fn load_codebook(path: &Path) -> Result<TransformCodebook> {
    Container::<TransformCodebook>::load(path, CODEBOOK)?
        .payload
        .restore()
}

/// Trains the language for `role` and writes its checkpoint and training curve.
pub fn train(cfg: &ExperimentConfig, ws: &Workspace, role: Role) -> Result<Language> {
    let (lang, log) =
        train_language_with_log(cfg.grid, &cfg.dqn, cfg.channel, cfg.training_seed(role))?;
    let hash = cfg.hash();
    Container::new(LANGUAGE, &hash, lang.clone()).save(&ws.language(role))?;
    report::write_training_log(&ws.training_log(role), &hash, &log)?;
    Ok(lang)
}

/// Builds one partition of `lang` and writes it with its scatter and PCA CSVs.
pub fn partition(
    cfg: &ExperimentConfig,
    ws: &Workspace,
    role: Role,
    lang: &Language,
    spec: PartitionSpec,
) -> Result<Partition> {
    spec.validate()?;
    let states = enumerate_states(&lang.grid)?;
    let part = match spec.kind {
        PartitionKind::Hard => build_hard_partition(lang, &states, &cfg.partition)?,
        PartitionKind::Soft => build_soft_partition(
            lang,
            &states,
            spec.n_c,
            cfg.partition_seed(role, spec.n_c),
            &cfg.partition,
        )?,
    };
    let hash = cfg.hash();
    Container::new(PARTITION, &hash, part.clone()).save(&ws.partition(role, spec))?;
    report::write_partition_scatter(&ws.partition_csv(role, spec), &hash, &part)?;
    let qs: Vec<Vec<f64>> = states
        .iter()
        .map(|o| lang.encode(o).map(|x| lang.q_values(x).to_vec()))
        .collect::<Result<_>>()?;
    report::write_pca(&ws.pca_csv(role), &hash, &part, &pca_project(&qs)?)?;
    Ok(part)
}

/// Fits the codebook between two partitions of the same kind and writes it with its ζ table.
pub fn codebook(
    cfg: &ExperimentConfig,
    ws: &Workspace,
    spec: PartitionSpec,
    source: &Partition,
    target: &Partition,
    target_lang: &Language,
) -> Result<TransformCodebook> {
    let cb = build_codebook(
        source,
        target,
        target_lang,
        &cfg.codebook,
        cfg.codebook_seed(&spec.id()),
    )?;
    if cb.n_maps() != source.n_atoms() * target.n_atoms() {
        return Err(Error::Numerical(
            "codebook map count differs from J_s * J_t".into(),
        ));
    }
    let hash = cfg.hash();
    Container::new(CODEBOOK, &hash, cb.clone()).save(&ws.codebook(spec))?;
    report::write_zeta_file(&ws.zeta_csv(spec), &hash, &cb)?;
    Ok(cb)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Train or build any artifact that is missing instead of failing.
    pub build_missing: bool,
    /// Reuse cached cells whose inputs are unchanged.
    pub resume: bool,
}

fn ensure_language(
    cfg: &ExperimentConfig,
    ws: &Workspace,
    role: Role,
    opts: SweepOptions,
) -> Result<Language> {
    let path = ws.language(role);
    if !path.exists() && opts.build_missing {
        return train(cfg, ws, role);
    }
    load_language(&path)
}

fn ensure_partition(
    cfg: &ExperimentConfig,
    ws: &Workspace,
    role: Role,
    lang: &Language,
    spec: PartitionSpec,
    opts: SweepOptions,
) -> Result<Partition> {
    let path = ws.partition(role, spec);
    let part = if !path.exists() && opts.build_missing {
        partition(cfg, ws, role, lang, spec)?
    } else {
        load_partition(&path)?
    };
    if part.language_hash != content_hash(lang) {
        return Err(Error::Config(format!(
            "{} was built from a different {} language",
            path.display(),
            role.name()
        )));
    }
    Ok(part)
}

/// Loads (or, with `build_missing`, builds) every artifact the sweep needs and
/// checks that each one was derived from the others.
pub fn sweep_inputs(
    cfg: &ExperimentConfig,
    ws: &Workspace,
    opts: SweepOptions,
) -> Result<(Language, Language, Vec<PartitionPair>)> {
    let source = ensure_language(cfg, ws, Role::Source, opts)?;
    let target = ensure_language(cfg, ws, Role::Target, opts)?;
    let mut pairs = Vec::new();
    let needs_partitions = cfg.sweep.policies.iter().any(|p| p.uses_partition());
    let mut specs: Vec<PartitionSpec> = cfg
        .sweep
        .partitions
        .iter()
        .map(|p| p.normalized())
        .collect();
    specs.dedup();
    for spec in specs.into_iter().filter(|_| needs_partitions) {
        let src = ensure_partition(cfg, ws, Role::Source, &source, spec, opts)?;
        let tgt = ensure_partition(cfg, ws, Role::Target, &target, spec, opts)?;
        let path = ws.codebook(spec);
        let cb = if !path.exists() && opts.build_missing {
            codebook(cfg, ws, spec, &src, &tgt, &target)?
        } else {
            load_codebook(&path)?
        };
        if cb.source_partition_hash != content_hash(&src)
            || cb.target_partition_hash != content_hash(&tgt)
        {
            return Err(Error::Config(format!(
                "{} was built from different partitions",
                path.display()
            )));
        }
        pairs.push(PartitionPair {
            spec,
            source: src,
            target: tgt,
            codebook: cb,
        });
    }
    Ok((source, target, pairs))
}

/// Everything a cell's result depends on besides its key.
fn cell_context(cfg: &ExperimentConfig, inputs: &SweepInputs<'_>, key: &CellKey) -> String {
    #[derive(Serialize)]
    struct Context<'a> {
        seed: u64,
        n_episodes: usize,
        gamma: f64,
        source: String,
        target: String,
        codebook: Option<String>,
        key: &'a CellKey,
    }
    let codebook = key.partition.and_then(|spec| {
        inputs
            .pairs
            .iter()
            .find(|p| p.spec == spec)
            .map(|p| content_hash(&p.codebook))
    });
    content_hash(&Context {
        seed: cfg.seed,
        n_episodes: cfg.sweep.n_episodes,
        gamma: inputs.gamma,
        source: content_hash(inputs.source),
        target: content_hash(inputs.target),
        codebook,
        key,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub report: SweepReport,
    /// `None` when the sweep lacks the partitions the ordering compares.
    pub ordering: Option<Vec<OrderingAssertion>>,
    pub ordering_note: Option<String>,
    pub cached_cells: usize,
}

pub fn sweep(cfg: &ExperimentConfig, ws: &Workspace, opts: SweepOptions) -> Result<SweepOutcome> {
    cfg.validate()?;
    let (source, target, pairs) = sweep_inputs(cfg, ws, opts)?;
    let inputs = SweepInputs {
        source: &source,
        target: &target,
        pairs: &pairs,
        gamma: cfg.dqn.gamma,
        master_seed: cfg.seed,
    };
    let hits = std::sync::atomic::AtomicUsize::new(0);
    let cached = |key: &CellKey| -> Option<CellResult> {
        if !opts.resume {
            return None;
        }
        let c = Container::<CellResult>::load(&ws.cell_cache(key), CELL).ok()?;
        let fresh = c.config_hash == cell_context(cfg, &inputs, key) && c.payload.key == *key;
        fresh.then(|| {
            hits.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            c.payload
        })
    };
    let store = |res: &CellResult| {
        Container::new(CELL, &cell_context(cfg, &inputs, &res.key), res.clone())
            .save(&ws.cell_cache(&res.key))
    };
    let hash = cfg.hash();
    let report = run_sweep_with(&cfg.sweep, &inputs, &hash, cached, store)?;
    report::write_sweep_report(&ws.sweep_report(), &report)?;
    report::write_episodes_gz(&ws.episodes(), &report)?;
    let (ordering, ordering_note) = match ordering_check(&report, cfg.channel.snr_db) {
        Ok(checks) => {
            report::write_ordering(&ws.ordering(), &hash, &checks)?;
            (Some(checks), None)
        }
        Err(Error::Usage(m)) => (None, Some(m)),
        Err(e) => return Err(e),
    };
    Ok(SweepOutcome {
        report,
        ordering,
        ordering_note,
        cached_cells: hits.into_inner(),
    })
}

/// Short description of any artifact file; codebooks also yield their ζ table as CSV.
pub fn inspect(path: &Path) -> Result<(String, Option<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let head: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let kind = head
        .get("kind")
        .and_then(|k| k.as_str())
        .unwrap_or("")
        .to_string();
    let mut lines = vec![format!("file: {}", path.display()), format!("kind: {kind}")];
    let mut extra = None;
    match kind.as_str() {
        LANGUAGE => {
            let c = Container::<Language>::from_json(&text, LANGUAGE)?;
            let l = &c.payload;
            lines.push(format!("config_hash: {}", c.config_hash));
            lines.push(format!("language_hash: {}", content_hash(l)));
            lines.push(format!("grid: {}x{}", l.grid.width, l.grid.height));
            lines.push(format!("train_seed: {}", l.train_seed));
            lines.push(format!("train_snr_db: {}", l.train_snr_db));
            lines.push(format!("tau: {:?}", l.tau()));
            if l.tau().is_some() {
                lines.push(format!("average_power: {}", l.average_power()?));
            }
        }
        PARTITION => {
            let c = Container::<Partition>::from_json(&text, PARTITION)?;
            let p = &c.payload;
            lines.push(format!("config_hash: {}", c.config_hash));
            lines.push(format!(
                "partition: {} with {} atoms over {} states",
                p.kind,
                p.n_atoms(),
                p.n_states()
            ));
            lines.push(format!("language_hash: {}", p.language_hash));
            for a in &p.atoms {
                lines.push(format!(
                    "  atom {}: {} states, labels {}, q_centroid {:?}",
                    a.id,
                    a.support.len(),
                    a.label_string(),
                    a.q_centroid
                ));
            }
        }
        CODEBOOK => {
            let c = Container::<TransformCodebook>::from_json(&text, CODEBOOK)?;
            let cb = c.payload.restore()?;
            lines.push(format!("config_hash: {}", c.config_hash));
            lines.push(format!(
                "maps: {} ({} x {} atoms)",
                cb.n_maps(),
                cb.n_source,
                cb.n_target
            ));
            lines.push(format!("kappa: {:?}", cb.kappa));
            lines.push(format!("scope: {:?}", cb.scope));
            let csv = report::write_zeta(Vec::new(), &c.config_hash, &cb)?;
            extra = Some(String::from_utf8(csv).expect("CSV output is UTF-8"));
        }
        CELL => {
            let c = Container::<CellResult>::from_json(&text, CELL)?;
            lines.push(format!("cell: {}", c.payload.key.id()));
            lines.push(format!("summary: {:?}", c.payload.summary));
        }
        other => {
            return Err(Error::Format(format!(
                "{}: unknown artifact kind {other:?}",
                path.display()
            )))
        }
    }
    Ok((lines.join("\n"), extra))
}
