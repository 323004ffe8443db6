//! Hard and soft partitions of a language's semantic space.
//!
//! A hard partition groups states by the greedy action of their noiseless
//! symbol. A soft partition clusters the full action-value vectors with
//! k-means, which separates states with one best action from states where
//! two actions tie.

pub mod kmeans;
pub mod pca;

use serde::{Deserialize, Serialize};

use crate::channel::Symbol;
use crate::checkpoint::content_hash;
use crate::error::{Error, Result};
use crate::gridworld::{Action, Observation};
use crate::language::{argmax, greedy, Language, QVector};

pub use kmeans::{kmeans, silhouette, Clustering};
pub use pca::{pca_project, Projection};

/// Floor added to distances in the inverse-distance membership weights.
pub const WEIGHT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Hard,
    Soft,
}

impl std::fmt::Display for PartitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PartitionKind::Hard => "hard",
            PartitionKind::Soft => "soft",
        })
    }
}

pub type Cov2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    /// Position in the state list the partition was built from.
    pub state: usize,
    pub obs: Observation,
    pub symbol: Symbol,
    pub q: QVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub id: usize,
    pub support: Vec<SupportPoint>,
    pub q_centroid: QVector,
    pub action_labels: Vec<Action>,
    pub semantic_mean: Symbol,
    pub semantic_cov: Cov2,
}

impl Atom {
    fn from_support(id: usize, support: Vec<SupportPoint>, labels: Vec<Action>) -> Self {
        let n = support.len() as f64;
        let mut q_centroid = [0.0; 4];
        let mut mean = [0.0; 2];
        for p in &support {
            q_centroid
                .iter_mut()
                .zip(p.q)
                .for_each(|(c, v)| *c += v / n);
            mean.iter_mut().zip(p.symbol).for_each(|(m, v)| *m += v / n);
        }
        let mut cov = [[0.0; 2]; 2];
        for p in &support {
            let d = [p.symbol[0] - mean[0], p.symbol[1] - mean[1]];
            for r in 0..2 {
                for c in 0..2 {
                    cov[r][c] += d[r] * d[c] / n;
                }
            }
        }
        Self {
            id,
            support,
            q_centroid,
            action_labels: labels,
            semantic_mean: mean,
            semantic_cov: cov,
        }
    }

    /// Support points per greedy action.
    pub fn action_histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for p in &self.support {
            h[argmax(&p.q)] += 1;
        }
        h
    }

    pub fn label_string(&self) -> String {
        self.action_labels.iter().map(|a| a.short_name()).collect()
    }
}

/// Actions whose value lies within `epsilon * (max - min)` of the maximum.
pub fn action_labels(q: &QVector, epsilon: f64) -> Vec<Action> {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let cut = max - epsilon * (max - min);
    Action::ALL
        .into_iter()
        .filter(|a| q[a.index()] >= cut)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionOptions {
    pub ambiguity_epsilon: f64,
    pub kmeans_restarts: usize,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        Self {
            ambiguity_epsilon: 0.15,
            kmeans_restarts: 10,
        }
    }
}

impl PartitionOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.ambiguity_epsilon >= 0.0 && self.ambiguity_epsilon <= 1.0) {
            return Err(Error::Config("ambiguity_epsilon must lie in [0, 1]".into()));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::Config("kmeans_restarts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub kind: PartitionKind,
    pub atoms: Vec<Atom>,
    pub language_hash: String,
    pub ambiguity_epsilon: f64,
}

/// Noiseless symbol and Q-vector for every state.
fn support_points(lang: &Language, states: &[Observation]) -> Result<Vec<SupportPoint>> {
    if states.is_empty() {
        return Err(Error::Usage("cannot partition an empty state list".into()));
    }
    states
        .iter()
        .enumerate()
        .map(|(state, &obs)| {
            let symbol = lang.encode(&obs)?;
            Ok(SupportPoint {
                state,
                obs,
                symbol,
                q: lang.q_values(symbol),
            })
        })
        .collect()
}

pub fn build_hard_partition(
    lang: &Language,
    states: &[Observation],
    opts: &PartitionOptions,
) -> Result<Partition> {
    opts.validate()?;
    let points = support_points(lang, states)?;
    let mut groups: [Vec<SupportPoint>; 4] = Default::default();
    for p in points {
        groups[greedy(&p.q).index()].push(p);
    }
    let atoms = groups
        .into_iter()
        .zip(Action::ALL)
        .filter(|(g, _)| !g.is_empty())
        .enumerate()
        .map(|(id, (g, a))| Atom::from_support(id, g, vec![a]))
        .collect();
    Ok(Partition {
        kind: PartitionKind::Hard,
        atoms,
        language_hash: content_hash(lang),
        ambiguity_epsilon: opts.ambiguity_epsilon,
    })
}

pub fn build_soft_partition(
    lang: &Language,
    states: &[Observation],
    n_c: usize,
    seed: u64,
    opts: &PartitionOptions,
) -> Result<Partition> {
    opts.validate()?;
    if n_c < 2 {
        return Err(Error::Usage(format!(
            "soft partitions need at least 2 atoms, got {n_c}"
        )));
    }
    let points = support_points(lang, states)?;
    let qs: Vec<Vec<f64>> = points.iter().map(|p| p.q.to_vec()).collect();
    let clustering = kmeans(&qs, n_c, opts.kmeans_restarts, seed)?;
    let mut groups: Vec<Vec<SupportPoint>> = vec![Vec::new(); n_c];
    for (p, &c) in points.into_iter().zip(&clustering.assignments) {
        groups[c].push(p);
    }
    if let Some(c) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Partition(format!(
            "cluster {c} is empty after repair"
        )));
    }
    let atoms = groups
        .into_iter()
        .enumerate()
        .map(|(id, g)| {
            let mut atom = Atom::from_support(id, g, Vec::new());
            atom.action_labels = action_labels(&atom.q_centroid, opts.ambiguity_epsilon);
            atom
        })
        .collect();
    Ok(Partition {
        kind: PartitionKind::Soft,
        atoms,
        language_hash: content_hash(lang),
        ambiguity_epsilon: opts.ambiguity_epsilon,
    })
}

impl Partition {
    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_states(&self) -> usize {
        self.atoms.iter().map(|a| a.support.len()).sum()
    }

    /// Atom index of every state, by position in the build-time state list.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.n_states()];
        for atom in &self.atoms {
            for p in &atom.support {
                out[p.state] = atom.id;
            }
        }
        out
    }

    /// Checks ids, disjoint and exhaustive supports, and the hard-label rule.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Partition(m));
        if self.atoms.is_empty() {
            return bad("partition has no atoms".into());
        }
        let n = self.n_states();
        let mut seen = vec![false; n];
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.id != i {
                return bad(format!("atom at position {i} has id {}", atom.id));
            }
            if atom.support.is_empty() {
                return bad(format!("atom {i} has empty support"));
            }
            for p in &atom.support {
                if p.state >= n || seen[p.state] {
                    return bad(format!("state {} is missing or assigned twice", p.state));
                }
                seen[p.state] = true;
            }
        }
        if self.kind == PartitionKind::Hard
            && (self.atoms.len() > Action::COUNT
                || self.atoms.iter().any(|a| a.action_labels.len() != 1))
        {
            return bad("hard atoms must carry exactly one action each".into());
        }
        Ok(())
    }

    fn hard_atom_of(&self, action: Action) -> Option<usize> {
        self.atoms.iter().position(|a| a.action_labels == [action])
    }

    fn nearest_centroid(&self, q: &QVector) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, atom) in self.atoms.iter().enumerate() {
            let d = kmeans::sq_dist(q, &atom.q_centroid);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Atom that a Q-vector falls into. Hard partitions return `None` when
    /// the greedy action has no atom.
    pub fn classify_q(&self, q: &QVector) -> Option<usize> {
        match self.kind {
            PartitionKind::Soft => Some(self.nearest_centroid(q)),
            PartitionKind::Hard => self.hard_atom_of(greedy(q)),
        }
    }

    /// Atom that the symbol `y` falls into under `lang`'s decoder.
    pub fn classify_symbol(&self, lang: &Language, y: Symbol) -> Option<usize> {
        self.classify_q(&lang.q_values(y))
    }

    /// Soft: normalized inverse distances to the Q-centroids. Hard: the
    /// indicator of the greedy action's atom, or of the nearest centroid when
    /// that action has no atom.
    pub fn membership_weights(&self, q: &QVector) -> Vec<f64> {
        match self.kind {
            PartitionKind::Soft => {
                let inv: Vec<f64> = self
                    .atoms
                    .iter()
                    .map(|a| 1.0 / (kmeans::sq_dist(q, &a.q_centroid).sqrt() + WEIGHT_EPS))
                    .collect();
                let total: f64 = inv.iter().sum();
                inv.into_iter().map(|w| w / total).collect()
            }
            PartitionKind::Hard => {
                let hit = self
                    .hard_atom_of(greedy(q))
                    .unwrap_or_else(|| self.nearest_centroid(q));
                (0..self.atoms.len())
                    .map(|i| if i == hit { 1.0 } else { 0.0 })
                    .collect()
            }
        }
    }

    /// For each atom, the mean over its support of the share of each point's
    /// `k` nearest semantic-space neighbours that lie in the same atom.
    pub fn neighbor_agreement(&self, k: usize) -> Result<Vec<f64>> {
        let n = self.n_states();
        if k == 0 || k >= n {
            return Err(Error::Usage(format!(
                "need 0 < k < {n} neighbours, got {k}"
            )));
        }
        let mut pts = vec![([0.0; 2], 0usize); n];
        for atom in &self.atoms {
            for p in &atom.support {
                pts[p.state] = (p.symbol, atom.id);
            }
        }
        let mut per_atom = vec![0.0; self.atoms.len()];
        let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n);
        for (i, &(x, owner)) in pts.iter().enumerate() {
            dists.clear();
            dists.extend(
                pts.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, &(y, _))| ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2), j)),
            );
            dists.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let same = dists[..k]
                .iter()
                .filter(|&&(_, j)| pts[j].1 == owner)
                .count();
            per_atom[owner] += same as f64 / k as f64;
        }
        for (s, atom) in per_atom.iter_mut().zip(&self.atoms) {
            *s /= atom.support.len() as f64;
        }
        Ok(per_atom)
    }

    /// Unweighted mean of [`Partition::neighbor_agreement`] over atoms.
    pub fn regularity(&self, k: usize) -> Result<f64> {
        let per_atom = self.neighbor_agreement(k)?;
        Ok(per_atom.iter().sum::<f64>() / per_atom.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{enumerate_states, GridConfig};
    use crate::language::PowerNormalizer;
    use crate::nn::{Activation, Dense, Mlp};

    fn grid() -> GridConfig {
        GridConfig {
            width: 3,
            height: 3,
            ..GridConfig::default()
        }
    }

    /// Encoder sends each state to the agent's cell coordinates; the decoder
    /// is supplied by the caller.
    fn coordinate_language(decoder: Mlp) -> Language {
        let g = grid();
        let mut enc = Dense::zeros(2 * g.cells(), 2, Activation::Identity);
        for cell in 0..g.cells() {
            enc.weights[cell] = (cell % g.width) as f64;
            enc.weights[2 * g.cells() + cell] = (cell / g.width) as f64;
        }
        let mut normalizer = PowerNormalizer::new(0.1, Default::default());
        normalizer.tau = Some(1.0);
        Language::from_parts(Mlp::new(vec![enc]).unwrap(), decoder, normalizer, g, 0, 5.0).unwrap()
    }

    /// Q = (x, y, -x, -y) + bias: Right wins for x > y, Down otherwise.
    fn linear_decoder(bias: [f64; 4]) -> Mlp {
        let mut d = Dense::zeros(2, 4, Activation::Identity);
        d.weights = vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0];
        d.bias = bias.to_vec();
        Mlp::new(vec![d]).unwrap()
    }

    #[test]
    fn constant_decoder_gives_one_hard_atom() {
        let lang =
            coordinate_language(Mlp::new(vec![Dense::zeros(2, 4, Activation::Identity)]).unwrap());
        let states = enumerate_states(&grid()).unwrap();
        let p = build_hard_partition(&lang, &states, &PartitionOptions::default()).unwrap();
        assert_eq!(p.n_atoms(), 1);
        assert_eq!(p.atoms[0].action_labels, vec![Action::Right]);
        assert_eq!(p.atoms[0].support.len(), states.len());
        p.validate().unwrap();
    }

    #[test]
    fn hard_partition_groups_by_greedy_action_and_classify_agrees() {
        let lang = coordinate_language(linear_decoder([0.0, 0.0, 0.0, 0.0]));
        let states = enumerate_states(&grid()).unwrap();
        let p = build_hard_partition(&lang, &states, &PartitionOptions::default()).unwrap();
        p.validate().unwrap();
        assert_eq!(p.n_atoms(), 2);
        let assignment = p.assignment();
        for (i, o) in states.iter().enumerate() {
            let y = lang.encode(o).unwrap();
            assert_eq!(p.classify_symbol(&lang, y), Some(assignment[i]));
            let expected = if o.agent.x >= o.agent.y {
                Action::Right
            } else {
                Action::Down
            };
            assert_eq!(p.atoms[assignment[i]].action_labels, vec![expected]);
        }
        // Left never wins, so a symbol decoding to Left lands in no atom.
        assert_eq!(p.classify_q(&[0.0, 0.0, 1.0, 0.0]), None);
    }

    #[test]
    fn soft_partition_of_separable_one_hot_values_equals_hard() {
        let lang = coordinate_language(linear_decoder([0.0; 4]));
        let states = enumerate_states(&grid()).unwrap();
        let opts = PartitionOptions::default();
        let hard = build_hard_partition(&lang, &states, &opts).unwrap();
        let q_of = |q: QVector| {
            let mut v = [0.0; 4];
            v[argmax(&q)] = 1.0;
            v
        };
        let pts: Vec<Vec<f64>> = hard
            .atoms
            .iter()
            .flat_map(|a| a.support.iter().map(|p| q_of(p.q).to_vec()))
            .collect();
        let c = kmeans(&pts, 2, 10, 4).unwrap();
        let mut offset = 0;
        for atom in &hard.atoms {
            let label = c.assignments[offset];
            assert!(c.assignments[offset..offset + atom.support.len()]
                .iter()
                .all(|&l| l == label));
            offset += atom.support.len();
        }
    }

    #[test]
    fn soft_partition_is_valid_and_labelled() {
        let lang = coordinate_language(linear_decoder([0.0; 4]));
        let states = enumerate_states(&grid()).unwrap();
        let opts = PartitionOptions::default();
        let p = build_soft_partition(&lang, &states, 3, 7, &opts).unwrap();
        p.validate().unwrap();
        assert_eq!(p.n_atoms(), 3);
        for atom in &p.atoms {
            assert!(!atom.action_labels.is_empty());
            let n = atom.support.len() as f64;
            for a in 0..4 {
                let m: f64 = atom.support.iter().map(|s| s.q[a]).sum::<f64>() / n;
                assert!((m - atom.q_centroid[a]).abs() < 1e-12);
            }
            let c = atom.semantic_cov;
            assert_eq!(c[0][1], c[1][0]);
            assert!(c[0][0] >= 0.0 && c[0][0] * c[1][1] - c[0][1] * c[1][0] >= -1e-12);
        }
        let again = build_soft_partition(&lang, &states, 3, 7, &opts).unwrap();
        assert_eq!(p, again);
        assert!(matches!(
            build_soft_partition(&lang, &states, 1, 7, &opts),
            Err(Error::Usage(_))
        ));
        for (i, o) in states.iter().enumerate() {
            let y = lang.encode(o).unwrap();
            assert_eq!(p.classify_symbol(&lang, y), Some(p.assignment()[i]));
            let w = p.membership_weights(&lang.q_values(y));
            assert_eq!(argmax(&w), p.assignment()[i]);
        }
    }

    #[test]
    fn label_rule() {
        assert_eq!(
            action_labels(&[1.0, 0.95, 0.0, 0.2], 0.15),
            vec![Action::Right, Action::Down]
        );
        assert_eq!(
            action_labels(&[1.0, 0.8, 0.0, 0.2], 0.15),
            vec![Action::Right]
        );
        assert_eq!(action_labels(&[0.5; 4], 0.15).len(), 4);
    }

    #[test]
    fn membership_weight_properties() {
        let lang = coordinate_language(linear_decoder([0.0; 4]));
        let states = enumerate_states(&grid()).unwrap();
        let p = build_soft_partition(&lang, &states, 3, 1, &PartitionOptions::default()).unwrap();
        let at_centroid = p.membership_weights(&p.atoms[1].q_centroid);
        assert!(at_centroid[1] >= 1.0 - 1e-6);
        let q = [0.3, -2.0, 7.0, 1.0];
        let w = p.membership_weights(&q);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| x >= 0.0));

        let mut sym = p.clone();
        sym.atoms.truncate(2);
        sym.atoms[0].q_centroid = [1.0, 0.0, 0.0, 0.0];
        sym.atoms[1].q_centroid = [-1.0, 0.0, 0.0, 0.0];
        let w = sym.membership_weights(&[0.0, 5.0, 0.0, 0.0]);
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);

        let hard = build_hard_partition(&lang, &states, &PartitionOptions::default()).unwrap();
        let w = hard.membership_weights(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(w[hard.hard_atom_of(Action::Down).unwrap()], 1.0);
        assert_eq!(w.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn neighbor_agreement_brute_force() {
        let lang = coordinate_language(linear_decoder([0.0; 4]));
        let states = enumerate_states(&grid()).unwrap();
        let p = build_hard_partition(&lang, &states, &PartitionOptions::default()).unwrap();
        let assignment = p.assignment();
        let symbols: Vec<Symbol> = states.iter().map(|o| lang.encode(o).unwrap()).collect();
        let k = 5;
        let mut expect = vec![0.0; p.n_atoms()];
        for i in 0..states.len() {
            let mut order: Vec<usize> = (0..states.len()).filter(|&j| j != i).collect();
            let d = |j: usize| {
                (symbols[i][0] - symbols[j][0]).powi(2) + (symbols[i][1] - symbols[j][1]).powi(2)
            };
            order.sort_by(|&a, &b| d(a).total_cmp(&d(b)).then(a.cmp(&b)));
            let same = order[..k]
                .iter()
                .filter(|&&j| assignment[j] == assignment[i])
                .count();
            expect[assignment[i]] += same as f64 / k as f64;
        }
        let got = p.neighbor_agreement(k).unwrap();
        for (a, atom) in p.atoms.iter().enumerate() {
            assert!((got[a] - expect[a] / atom.support.len() as f64).abs() < 1e-12);
        }
    }
}
