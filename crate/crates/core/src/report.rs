//! CSV outputs. Each file starts with a `# config_hash=<hex>` comment line;
//! floats use Rust's shortest round-trip formatting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;

use crate::equalizer::TransformCodebook;
use crate::error::{Error, Result};
use crate::gridworld::optimal_action_set;
use crate::harness::{CellKey, OrderingAssertion, SweepReport};
use crate::language::{argmax, TrainingRecord};
use crate::partition::{Partition, Projection};

pub const SWEEP_COLUMNS: &[&str] = &[
    "policy",
    "kind",
    "n_c",
    "snr_db",
    "seed",
    "success_rate",
    "mean_steps",
    "mean_return",
    "ci_half_width",
];

pub const EPISODE_COLUMNS: &[&str] = &[
    "policy",
    "kind",
    "n_c",
    "snr_db",
    "seed",
    "episode",
    "success",
    "steps",
    "discounted_return",
];

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes the hash comment and header, then hands rows to `fill`.
fn write_csv<W, F>(
    mut sink: W,
    path: &Path,
    config_hash: &str,
    header: &[&str],
    fill: F,
) -> Result<W>
where
    W: Write,
    F: FnOnce(&mut csv::Writer<&mut W>) -> std::result::Result<(), csv::Error>,
{
    writeln!(sink, "# config_hash={config_hash}").map_err(|e| Error::io(path, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut sink);
        w.write_record(header).map_err(csv_err(path))?;
        fill(&mut w).map_err(csv_err(path))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(sink)
}

fn key_fields(k: &CellKey) -> [String; 5] {
    let (kind, n_c) = k
        .partition
        .map_or(("none".to_string(), 0), |p| (p.kind.to_string(), p.n_c));
    [
        k.policy.name().to_string(),
        kind,
        n_c.to_string(),
        k.snr_db.to_string(),
        k.seed.to_string(),
    ]
}

pub fn write_sweep_report(path: &Path, report: &SweepReport) -> Result<()> {
    let sink = write_csv(open(path)?, path, &report.config_hash, SWEEP_COLUMNS, |w| {
        for c in &report.cells {
            let s = &c.summary;
            let mut row = key_fields(&c.key).to_vec();
            row.extend(
                [s.success_rate, s.mean_steps, s.mean_return, s.ci_half_width]
                    .map(|v| v.to_string()),
            );
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    finish(sink, path)
}

pub fn write_episodes_gz(path: &Path, report: &SweepReport) -> Result<()> {
    let gz = GzEncoder::new(open(path)?, Compression::default());
    let gz = write_csv(gz, path, &report.config_hash, EPISODE_COLUMNS, |w| {
        for c in &report.cells {
            let key = key_fields(&c.key);
            for (i, e) in c.episodes.iter().enumerate() {
                let mut row = key.to_vec();
                row.extend([
                    i.to_string(),
                    u8::from(e.success).to_string(),
                    e.steps.to_string(),
                    e.discounted_return.to_string(),
                ]);
                w.write_record(&row)?;
            }
        }
        Ok(())
    })?;
    let inner = gz.finish().map_err(|e| Error::io(path, e))?;
    finish(inner, path)
}

fn finish<W: Write>(mut sink: W, path: &Path) -> Result<()> {
    sink.flush().map_err(|e| Error::io(path, e))
}

pub fn write_ordering(path: &Path, config_hash: &str, checks: &[OrderingAssertion]) -> Result<()> {
    let header = [
        "policy",
        "snr_db",
        "relation",
        "lhs",
        "rhs",
        "pass",
        "low_confidence",
    ];
    let sink = write_csv(open(path)?, path, config_hash, &header, |w| {
        for c in checks {
            w.write_record([
                c.policy.name().to_string(),
                c.snr_db.to_string(),
                c.relation.clone(),
                c.lhs.to_string(),
                c.rhs.to_string(),
                c.pass.to_string(),
                c.low_confidence.to_string(),
            ])?;
        }
        Ok(())
    })?;
    finish(sink, path)
}

/// One row per state: position, noiseless symbol, atom and greedy action.
pub fn write_partition_scatter(
    path: &Path,
    config_hash: &str,
    partition: &Partition,
) -> Result<()> {
    let header = [
        "state",
        "agent_x",
        "agent_y",
        "treasure_x",
        "treasure_y",
        "symbol_x",
        "symbol_y",
        "atom_id",
        "atom_labels",
        "action_label",
    ];
    let mut rows: Vec<(usize, Vec<String>)> = Vec::with_capacity(partition.n_states());
    for atom in &partition.atoms {
        let labels = atom.label_string();
        for p in &atom.support {
            let action = crate::gridworld::Action::ALL[argmax(&p.q)];
            rows.push((
                p.state,
                vec![
                    p.state.to_string(),
                    p.obs.agent.x.to_string(),
                    p.obs.agent.y.to_string(),
                    p.obs.treasure.x.to_string(),
                    p.obs.treasure.y.to_string(),
                    p.symbol[0].to_string(),
                    p.symbol[1].to_string(),
                    atom.id.to_string(),
                    labels.clone(),
                    action.short_name().to_string(),
                ],
            ));
        }
    }
    rows.sort_by_key(|r| r.0);
    let sink = write_csv(open(path)?, path, config_hash, &header, |w| {
        rows.iter().try_for_each(|(_, r)| w.write_record(r))
    })?;
    finish(sink, path)
}

/// Principal-component coordinates of the Q-vectors, with the atom and the
/// number of optimal actions of each state.
pub fn write_pca(
    path: &Path,
    config_hash: &str,
    partition: &Partition,
    projection: &Projection,
) -> Result<()> {
    let header = [
        "state",
        "pc1",
        "pc2",
        "atom_id",
        "greedy_action",
        "n_optimal",
    ];
    let mut points: Vec<_> = partition
        .atoms
        .iter()
        .flat_map(|a| a.support.iter().map(move |p| (p, a.id)))
        .collect();
    points.sort_by_key(|(p, _)| p.state);
    if points.len() != projection.coords.len() {
        return Err(Error::Usage(
            "projection and partition cover different states".into(),
        ));
    }
    let mut rows = Vec::with_capacity(points.len());
    for ((p, atom), c) in points.iter().zip(&projection.coords) {
        rows.push([
            p.state.to_string(),
            c[0].to_string(),
            c[1].to_string(),
            atom.to_string(),
            crate::gridworld::Action::ALL[argmax(&p.q)]
                .short_name()
                .to_string(),
            optimal_action_set(&p.obs)?.len().to_string(),
        ]);
    }
    let sink = write_csv(open(path)?, path, config_hash, &header, |w| {
        rows.iter().try_for_each(|r| w.write_record(r))
    })?;
    finish(sink, path)
}

/// Long-format ζ table; `own_pair` marks rows where the map was fitted for this source atom.
pub fn write_zeta<W: Write>(sink: W, config_hash: &str, cb: &TransformCodebook) -> Result<W> {
    let header = [
        "map_source",
        "map_target",
        "source_atom",
        "target_atom",
        "zeta",
        "own_pair",
        "kappa_target",
    ];
    let path = Path::new("zeta");
    write_csv(sink, path, config_hash, &header, |w| {
        for k in 0..cb.n_source {
            for l in 0..cb.n_target {
                for i in 0..cb.n_source {
                    for j in 0..cb.n_target {
                        w.write_record([
                            k.to_string(),
                            l.to_string(),
                            i.to_string(),
                            j.to_string(),
                            cb.zeta(k, l, i, j).to_string(),
                            u8::from(k == i).to_string(),
                            u8::from(cb.kappa[i] == j).to_string(),
                        ])?;
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn write_zeta_file(path: &Path, config_hash: &str, cb: &TransformCodebook) -> Result<()> {
    let sink = write_zeta(open(path)?, config_hash, cb)?;
    finish(sink, path)
}

pub fn write_training_log(path: &Path, config_hash: &str, log: &[TrainingRecord]) -> Result<()> {
    let header = ["episode", "steps", "reached", "epsilon", "mean_loss", "tau"];
    let sink = write_csv(open(path)?, path, config_hash, &header, |w| {
        log.iter().try_for_each(|r| {
            w.write_record([
                r.episode.to_string(),
                r.steps.to_string(),
                u8::from(r.reached).to_string(),
                r.epsilon.to_string(),
                r.mean_loss.to_string(),
                r.tau.to_string(),
            ])
        })
    })?;
    finish(sink, path)
}
