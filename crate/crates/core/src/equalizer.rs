//! Codebook of affine maps between source and target atoms, the
//! transported-mass table ζ, and the two map-selection policies.
//!
//! `zeta(k, l, i, j)` is the share of source atom `i` that the map fitted
//! for the pair `(k, l)` sends into target atom `j`. Storing it for every
//! source atom lets a policy score any map against a soft membership vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, Symbol};
use crate::checkpoint::content_hash;
use crate::episode::{run_episode, EpisodeResult};
use crate::error::{Error, Result};
use crate::gridworld::{GridConfig, Observation};
use crate::language::{greedy, Language, QVector};
use crate::partition::{Atom, Partition, PartitionKind};
use crate::seed::{self, SimRng};

pub type Mat2 = [[f64; 2]; 2];

/// Added to both covariances before fitting.
pub const COV_REGULARIZER: f64 = 1e-6;

fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

fn inverse(m: &Mat2) -> Option<Mat2> {
    let d = det(m);
    (d.abs() > 0.0 && d.is_finite())
        .then(|| [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}

/// Principal square root of a symmetric positive definite 2x2 matrix:
/// `(M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M))`.
fn spd_sqrt(m: &Mat2) -> Option<Mat2> {
    let d = det(m);
    let tr = m[0][0] + m[1][1];
    if !(d > 0.0 && tr > 0.0) {
        return None;
    }
    let s = d.sqrt();
    let t = (tr + 2.0 * s).sqrt();
    Some([
        [(m[0][0] + s) / t, m[0][1] / t],
        [m[1][0] / t, (m[1][1] + s) / t],
    ])
}

fn symmetrize(m: Mat2) -> Mat2 {
    let off = 0.5 * (m[0][1] + m[1][0]);
    [[m[0][0], off], [off, m[1][1]]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub linear: Mat2,
    pub offset: [f64; 2],
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        linear: [[1.0, 0.0], [0.0, 1.0]],
        offset: [0.0, 0.0],
    };

    pub fn apply(&self, x: Symbol) -> Symbol {
        let a = &self.linear;
        [
            a[0][0] * x[0] + a[0][1] * x[1] + self.offset[0],
            a[1][0] * x[0] + a[1][1] * x[1] + self.offset[1],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .linear
            .iter()
            .flatten()
            .chain(&self.offset)
            .all(|v| v.is_finite());
        if !finite || det(&self.linear).abs() <= 1e-12 {
            return Err(Error::Numerical(format!(
                "affine map is not finite and invertible: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Closed-form optimal transport map between two Gaussians:
/// `T(x) = m_t + A (x - m_s)` with
/// `A = S^{-1/2} (S^{1/2} C S^{1/2})^{1/2} S^{-1/2}`, `S` and `C` the source
/// and target covariances.
pub fn gaussian_ot_map(
    mean_s: Symbol,
    cov_s: &Mat2,
    mean_t: Symbol,
    cov_t: &Mat2,
) -> Result<AffineMap> {
    let reg = |c: &Mat2| {
        symmetrize([
            [c[0][0] + COV_REGULARIZER, c[0][1]],
            [c[1][0], c[1][1] + COV_REGULARIZER],
        ])
    };
    let (s, c) = (reg(cov_s), reg(cov_t));
    let singular = || Error::Numerical("covariance is singular after regularization".into());
    let s_half = spd_sqrt(&s).ok_or_else(singular)?;
    let s_inv_half = inverse(&s_half).ok_or_else(singular)?;
    let middle = spd_sqrt(&symmetrize(mul(&mul(&s_half, &c), &s_half))).ok_or_else(singular)?;
    let a = symmetrize(mul(&mul(&s_inv_half, &middle), &s_inv_half));
    let am = [
        a[0][0] * mean_s[0] + a[0][1] * mean_s[1],
        a[1][0] * mean_s[0] + a[1][1] * mean_s[1],
    ];
    let map = AffineMap {
        linear: a,
        offset: [mean_t[0] - am[0], mean_t[1] - am[1]],
    };
    map.validate()?;
    Ok(map)
}

pub fn fit_atom_map(source: &Atom, target: &Atom) -> Result<AffineMap> {
    let fail = |reason: String| Error::Fit {
        source_atom: source.id,
        target_atom: target.id,
        reason,
    };
    if source.support.len() < 3 || target.support.len() < 3 {
        return Err(fail(format!(
            "atoms need at least 3 support points (have {} and {})",
            source.support.len(),
            target.support.len()
        )));
    }
    gaussian_ot_map(
        source.semantic_mean,
        &source.semantic_cov,
        target.semantic_mean,
        &target.semantic_cov,
    )
    .map_err(|e| fail(e.to_string()))
}

/// Optional channel jitter on the support symbols before they are mapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZetaConfig {
    /// Noisy copies per support point; 0 uses the noiseless symbols.
    pub noise_samples: usize,
    pub noise_snr_db: f64,
}

impl Default for ZetaConfig {
    fn default() -> Self {
        Self {
            noise_samples: 0,
            noise_snr_db: 5.0,
        }
    }
}

/// Share of `symbols`, pushed through `map`, that the target partition
/// assigns to each target atom. Symbols landing in no atom count for none.
pub fn transported_shares(
    map: &AffineMap,
    symbols: &[Symbol],
    tgt_part: &Partition,
    tgt_lang: &Language,
    cfg: &ZetaConfig,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    if symbols.is_empty() {
        return Err(Error::Usage("transported share of an empty support".into()));
    }
    let mut counts = vec![0usize; tgt_part.n_atoms()];
    let mut total = 0usize;
    let channel = ChannelConfig::new(cfg.noise_snr_db);
    let mut land = |y: Symbol| {
        total += 1;
        if let Some(j) = tgt_part.classify_symbol(tgt_lang, map.apply(y)) {
            counts[j] += 1;
        }
    };
    for &x in symbols {
        if cfg.noise_samples == 0 {
            land(x);
        } else {
            for _ in 0..cfg.noise_samples {
                land(channel.transmit(x, rng));
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / total as f64)
        .collect())
}

/// ζ for one source/target atom pair under `map`, on noiseless support symbols.
pub fn estimate_zeta(
    map: &AffineMap,
    source_atom: usize,
    target_atom: usize,
    src_part: &Partition,
    tgt_part: &Partition,
    tgt_lang: &Language,
) -> Result<f64> {
    let atom = src_part
        .atoms
        .get(source_atom)
        .ok_or_else(|| Error::Usage(format!("no source atom {source_atom}")))?;
    if target_atom >= tgt_part.n_atoms() {
        return Err(Error::Usage(format!("no target atom {target_atom}")));
    }
    let symbols: Vec<Symbol> = atom.support.iter().map(|p| p.symbol).collect();
    let shares = transported_shares(
        map,
        &symbols,
        tgt_part,
        tgt_lang,
        &ZetaConfig::default(),
        &mut seed::rng(0),
    )?;
    Ok(shares[target_atom])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaRule {
    /// Label matching between two hard partitions, nearest centroid otherwise.
    #[default]
    Auto,
    NearestCentroid,
    /// Target atom sharing the most action labels; nearest centroid breaks ties.
    LabelOverlap,
}

fn nearest_centroid(q: &QVector, tgt: &Partition) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, atom) in tgt.atoms.iter().enumerate() {
        let d: f64 = q
            .iter()
            .zip(&atom.q_centroid)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Target atom matched to each source atom.
pub fn kappa(src: &Partition, tgt: &Partition, rule: KappaRule) -> Vec<usize> {
    let by_labels = |s: &Atom| {
        let overlap = |t: &Atom| {
            s.action_labels
                .iter()
                .filter(|a| t.action_labels.contains(a))
                .count()
        };
        let best = tgt.atoms.iter().map(overlap).max().unwrap_or(0);
        if best == 0 {
            return nearest_centroid(&s.q_centroid, tgt);
        }
        let mut pick = (usize::MAX, f64::INFINITY);
        for (j, t) in tgt
            .atoms
            .iter()
            .enumerate()
            .filter(|(_, t)| overlap(t) == best)
        {
            let d: f64 = s
                .q_centroid
                .iter()
                .zip(&t.q_centroid)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < pick.1 {
                pick = (j, d);
            }
        }
        pick.0
    };
    let use_labels = match rule {
        KappaRule::Auto => src.kind == PartitionKind::Hard && tgt.kind == PartitionKind::Hard,
        KappaRule::NearestCentroid => false,
        KappaRule::LabelOverlap => true,
    };
    src.atoms
        .iter()
        .map(|s| {
            if use_labels {
                by_labels(s)
            } else {
                nearest_centroid(&s.q_centroid, tgt)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformCodebook {
    pub n_source: usize,
    pub n_target: usize,
    /// Map fitted for the pair `(k, l)` at index `k * n_target + l`.
    pub maps: Vec<AffineMap>,
    /// `zeta(k, l, i, j)` flattened in that order.
    pub zeta: Vec<f64>,
    pub kappa: Vec<usize>,
    pub source_partition_hash: String,
    pub target_partition_hash: String,
    pub scope: ZetaScope,
    /// `zeta` with the entries excluded by `scope` set to zero.
    #[serde(skip)]
    active: Vec<f64>,
    /// Per map and source atom, `active(., ., i, kappa(i))`.
    #[serde(skip)]
    sem_table: Vec<f64>,
}

/// Which source atoms a map's transported mass is counted for when scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaScope {
    /// The map fitted for `(k, l)` is credited only with the mass it moves
    /// out of source atom `k`.
    #[default]
    OwnAtom,
    /// Every map is credited with the mass it moves out of every source atom.
    AllAtoms,
}

impl TransformCodebook {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_source: usize,
        n_target: usize,
        maps: Vec<AffineMap>,
        zeta: Vec<f64>,
        kappa: Vec<usize>,
        source_partition_hash: String,
        target_partition_hash: String,
        scope: ZetaScope,
    ) -> Result<Self> {
        let mut cb = Self {
            n_source,
            n_target,
            maps,
            zeta,
            kappa,
            source_partition_hash,
            target_partition_hash,
            scope,
            active: Vec::new(),
            sem_table: Vec::new(),
        };
        cb.validate()?;
        cb.cache();
        Ok(cb)
    }

    /// Whether map `m` is credited with mass from source atom `i`.
    pub fn counts(&self, m: usize, i: usize) -> bool {
        self.scope == ZetaScope::AllAtoms || m / self.n_target == i
    }

    fn cache(&mut self) {
        let (js, jt) = (self.n_source, self.n_target);
        self.active = self.zeta.clone();
        for m in 0..self.n_maps() {
            for i in 0..js {
                if !self.counts(m, i) {
                    let start = (m * js + i) * jt;
                    self.active[start..start + jt].fill(0.0);
                }
            }
        }
        self.sem_table = (0..self.n_maps())
            .flat_map(|m| (0..js).map(move |i| (m, i)))
            .map(|(m, i)| self.active[(m * js + i) * jt + self.kappa[i]])
            .collect();
    }

    /// Rebuilds derived tables after deserialization.
    pub fn restore(mut self) -> Result<Self> {
        self.validate()?;
        self.cache();
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (js, jt) = (self.n_source, self.n_target);
        let bad = |m: String| Err(Error::Format(m));
        if js == 0 || jt == 0 {
            return bad("codebook needs at least one source and one target atom".into());
        }
        if self.maps.len() != js * jt {
            return bad(format!("{} maps for {js}x{jt} atoms", self.maps.len()));
        }
        if self.zeta.len() != js * jt * js * jt {
            return bad(format!(
                "zeta has {} entries, expected {}",
                self.zeta.len(),
                js * jt * js * jt
            ));
        }
        if self.kappa.len() != js || self.kappa.iter().any(|&j| j >= jt) {
            return bad("kappa must map every source atom to a target atom".into());
        }
        if self.zeta.iter().any(|z| !(0.0..=1.0).contains(z)) {
            return bad("zeta entries must lie in [0, 1]".into());
        }
        for row in self.zeta.chunks(jt) {
            if row.iter().sum::<f64>() > 1.0 + 1e-9 {
                return bad("transported shares of one source atom exceed 1".into());
            }
        }
        for m in &self.maps {
            m.validate()?;
        }
        Ok(())
    }

    pub fn n_maps(&self) -> usize {
        self.maps.len()
    }

    pub fn map(&self, k: usize, l: usize) -> &AffineMap {
        &self.maps[k * self.n_target + l]
    }

    pub fn zeta(&self, k: usize, l: usize, i: usize, j: usize) -> f64 {
        self.zeta[((k * self.n_target + l) * self.n_source + i) * self.n_target + j]
    }

    /// Shares of map `m` applied to source atom `i`, over target atoms.
    pub fn zeta_row(&self, m: usize, i: usize) -> &[f64] {
        let start = (m * self.n_source + i) * self.n_target;
        &self.zeta[start..start + self.n_target]
    }

    fn active_row(&self, m: usize, i: usize) -> &[f64] {
        let start = (m * self.n_source + i) * self.n_target;
        &self.active[start..start + self.n_target]
    }

    fn check_weights(&self, weights: &[f64]) {
        debug_assert_eq!(weights.len(), self.n_source, "one weight per source atom");
    }

    /// `sum_i w_i zeta_{i -> kappa(i)}(T_m)` for every map, over the atoms `scope` admits.
    pub fn sem_scores(&self, weights: &[f64]) -> Vec<f64> {
        self.check_weights(weights);
        self.sem_table
            .chunks(self.n_source)
            .map(|row| row.iter().zip(weights).map(|(z, w)| w * z).sum())
            .collect()
    }

    /// `sum_i w_i sum_j zeta_{i -> j}(T_m) q_j` for every map, over the atoms `scope` admits.
    pub fn eff_scores(&self, weights: &[f64], q_target: &[f64]) -> Vec<f64> {
        self.check_weights(weights);
        debug_assert_eq!(q_target.len(), self.n_target);
        (0..self.n_maps())
            .map(|m| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| {
                        w * self
                            .active_row(m, i)
                            .iter()
                            .zip(q_target)
                            .map(|(z, q)| z * q)
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    /// Index of the best map for π_sem, lowest index on ties.
    pub fn policy_sem(&self, weights: &[f64]) -> usize {
        first_max(&self.sem_scores(weights))
    }

    /// Index of the best map for π_eff, lowest index on ties.
    pub fn policy_eff(&self, weights: &[f64], q_target: &[f64]) -> usize {
        first_max(&self.eff_scores(weights, q_target))
    }
}

fn first_max(scores: &[f64]) -> usize {
    let mut best = 0;
    for (m, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = m;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookOptions {
    pub kappa: KappaRule,
    pub scope: ZetaScope,
    pub zeta: ZetaConfig,
}

/// Fits every atom-pair map and fills the full ζ table.
pub fn build_codebook(
    src_part: &Partition,
    tgt_part: &Partition,
    tgt_lang: &Language,
    opts: &CodebookOptions,
    seed: u64,
) -> Result<TransformCodebook> {
    src_part.validate()?;
    tgt_part.validate()?;
    if tgt_part.language_hash != content_hash(tgt_lang) {
        return Err(Error::Config(
            "target partition was built from a different language".into(),
        ));
    }
    let (js, jt) = (src_part.n_atoms(), tgt_part.n_atoms());
    let mut maps = Vec::with_capacity(js * jt);
    for s in &src_part.atoms {
        for t in &tgt_part.atoms {
            maps.push(fit_atom_map(s, t)?);
        }
    }
    let supports: Vec<Vec<Symbol>> = src_part
        .atoms
        .iter()
        .map(|a| a.support.iter().map(|p| p.symbol).collect())
        .collect();
    let mut zeta = Vec::with_capacity(js * jt * js * jt);
    for (m, map) in maps.iter().enumerate() {
        for (i, symbols) in supports.iter().enumerate() {
            let mut rng = seed::rng_at(seed, &[m as u64, i as u64]);
            zeta.extend(transported_shares(
                map, symbols, tgt_part, tgt_lang, &opts.zeta, &mut rng,
            )?);
        }
    }
    TransformCodebook::new(
        js,
        jt,
        maps,
        zeta,
        kappa(src_part, tgt_part, opts.kappa),
        content_hash(src_part),
        content_hash(tgt_part),
        opts.scope,
    )
}

/// `(1/|P_j|) sum_{x in P_j} obs_q[greedy(x)]` over the target atom's support.
pub fn atom_q_value(tgt_part: &Partition, obs_q: &QVector, atom: usize) -> f64 {
    let a = &tgt_part.atoms[atom];
    let h = a.action_histogram();
    h.iter().zip(obs_q).map(|(&n, q)| n as f64 * q).sum::<f64>() / a.support.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualizerPolicy {
    Sem,
    Eff,
    /// No transformation: the mismatch baseline.
    Identity,
}

/// Languages, partitions and codebook needed to run equalized episodes.
pub struct Equalizer<'a> {
    pub source: &'a Language,
    pub target: &'a Language,
    pub source_partition: &'a Partition,
    pub target_partition: &'a Partition,
    pub codebook: &'a TransformCodebook,
}

impl Equalizer<'_> {
    /// The map the transmitter applies for observation `obs`.
    pub fn select(&self, policy: EqualizerPolicy, obs: &Observation) -> Result<AffineMap> {
        let x = self.source.encode(obs)?;
        let weights = || {
            self.source_partition
                .membership_weights(&self.source.q_values(x))
        };
        Ok(match policy {
            EqualizerPolicy::Identity => AffineMap::IDENTITY,
            EqualizerPolicy::Sem => self.codebook.maps[self.codebook.policy_sem(&weights())],
            EqualizerPolicy::Eff => {
                // Transmitter-side oracle access to the target's values for this observation.
                let obs_q = self.target.q_values(self.target.encode(obs)?);
                let q_atoms: Vec<f64> = (0..self.target_partition.n_atoms())
                    .map(|j| atom_q_value(self.target_partition, &obs_q, j))
                    .collect();
                self.codebook.maps[self.codebook.policy_eff(&weights(), &q_atoms)]
            }
        })
    }

    pub fn run_episode<R: Rng + ?Sized>(
        &self,
        policy: EqualizerPolicy,
        grid: GridConfig,
        start: Observation,
        channel: &ChannelConfig,
        gamma: f64,
        rng: &mut R,
    ) -> Result<EpisodeResult> {
        run_episode(
            grid,
            start,
            channel,
            gamma,
            rng,
            |o| Ok(self.select(policy, o)?.apply(self.source.encode(o)?)),
            |y| greedy(&self.target.q_values(y)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn spd_sqrt_squares_back() {
        let m = [[2.0, 0.3], [0.3, 0.5]];
        let r = spd_sqrt(&m).unwrap();
        let sq = mul(&r, &r);
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(sq[i][j], m[i][j], 1e-12));
            }
        }
        assert!(spd_sqrt(&[[0.0, 0.0], [0.0, 0.0]]).is_none());
    }

    #[test]
    fn ot_identity_and_translation() {
        let cov = [[0.4, 0.1], [0.1, 0.2]];
        let id = gaussian_ot_map([1.0, -2.0], &cov, [1.0, -2.0], &cov).unwrap();
        for x in [[0.0, 0.0], [3.0, 1.0], [-1.5, 0.25]] {
            let y = id.apply(x);
            assert!(close(y[0], x[0], 1e-9) && close(y[1], x[1], 1e-9));
        }
        let shift = gaussian_ot_map([1.0, -2.0], &cov, [1.5, 0.0], &cov).unwrap();
        for x in [[0.0, 0.0], [3.0, 1.0]] {
            let y = shift.apply(x);
            assert!(close(y[0], x[0] + 0.5, 1e-9) && close(y[1], x[1] + 2.0, 1e-9));
        }
    }

    #[test]
    fn ot_isotropic_scaling() {
        // Variances of order one keep the regularizer's effect below 1e-6.
        let s2 = 1.0;
        let t2 = 2.25;
        let map = gaussian_ot_map(
            [0.0; 2],
            &[[s2, 0.0], [0.0, s2]],
            [0.0; 2],
            &[[t2, 0.0], [0.0, t2]],
        )
        .unwrap();
        let ratio = (t2 / s2).sqrt();
        assert!(close(map.linear[0][0], ratio, 1e-6) && close(map.linear[1][1], ratio, 1e-6));
        assert!(close(map.linear[0][1], 0.0, 1e-12));
    }

    #[test]
    fn ot_map_is_symmetric_positive_definite_and_pushes_covariance() {
        let s = [[1.3, -0.4], [-0.4, 0.7]];
        let c = [[0.2, 0.15], [0.15, 0.9]];
        let map = gaussian_ot_map([0.0; 2], &s, [0.0; 2], &c).unwrap();
        let a = map.linear;
        assert_eq!(a[0][1], a[1][0]);
        assert!(a[0][0] > 0.0 && det(&a) > 0.0);
        let sr = [
            [s[0][0] + COV_REGULARIZER, s[0][1]],
            [s[1][0], s[1][1] + COV_REGULARIZER],
        ];
        let pushed = mul(&mul(&a, &sr), &a);
        for i in 0..2 {
            for j in 0..2 {
                let want = c[i][j] + if i == j { COV_REGULARIZER } else { 0.0 };
                assert!(close(pushed[i][j], want, 1e-12));
            }
        }
    }

    #[test]
    fn policies_break_ties_on_lowest_index() {
        let maps = vec![AffineMap::IDENTITY; 4];
        let zeta = vec![0.25; 16];
        let cb = TransformCodebook::new(
            2,
            2,
            maps,
            zeta,
            vec![0, 1],
            String::new(),
            String::new(),
            ZetaScope::AllAtoms,
        )
        .unwrap();
        assert_eq!(cb.policy_sem(&[0.5, 0.5]), 0);
        assert_eq!(cb.policy_eff(&[0.5, 0.5], &[1.0, 1.0]), 0);
    }

    #[test]
    fn codebook_rejects_bad_shapes() {
        let maps = vec![AffineMap::IDENTITY; 3];
        assert!(TransformCodebook::new(
            2,
            2,
            maps,
            vec![0.0; 16],
            vec![0, 1],
            String::new(),
            String::new(),
            ZetaScope::AllAtoms
        )
        .is_err());
        let maps = vec![AffineMap::IDENTITY; 4];
        assert!(TransformCodebook::new(
            2,
            2,
            maps.clone(),
            vec![0.9; 16],
            vec![0, 1],
            String::new(),
            String::new(),
            ZetaScope::AllAtoms
        )
        .is_err());
        assert!(TransformCodebook::new(
            2,
            2,
            maps,
            vec![0.0; 16],
            vec![0, 2],
            String::new(),
            String::new(),
            ZetaScope::AllAtoms
        )
        .is_err());
    }

    #[test]
    fn gaussian_push_forward_matches_target_moments() {
        let mut rng = seed::rng(5);
        let l = [[0.9, 0.0], [0.4, 0.3]];
        let pts: Vec<Symbol> = (0..2000)
            .map(|_| {
                let z: [f64; 2] = [
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ];
                [l[0][0] * z[0] + 1.0, l[1][0] * z[0] + l[1][1] * z[1] - 1.0]
            })
            .collect();
        let (m, c) = moments(&pts);
        let map = gaussian_ot_map(m, &c, [2.0, 3.0], &[[0.5, -0.2], [-0.2, 0.3]]).unwrap();
        let pushed: Vec<Symbol> = pts.iter().map(|&x| map.apply(x)).collect();
        let (pm, pc) = moments(&pushed);
        assert!(close(pm[0], 2.0, 1e-6) && close(pm[1], 3.0, 1e-6));
        assert!(close(pc[0][1], -0.2, 1e-3) && close(pc[1][1], 0.3, 1e-3));
    }

    pub(crate) fn moments(pts: &[Symbol]) -> (Symbol, Mat2) {
        let n = pts.len() as f64;
        let m = [
            pts.iter().map(|p| p[0]).sum::<f64>() / n,
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
        ];
        let mut c = [[0.0; 2]; 2];
        for p in pts {
            let d = [p[0] - m[0], p[1] - m[1]];
            for r in 0..2 {
                for k in 0..2 {
                    c[r][k] += d[r] * d[k] / n;
                }
            }
        }
        (m, c)
    }
}
