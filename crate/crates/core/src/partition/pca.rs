//! Projection onto the two leading principal directions.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    pub mean: Vec<f64>,
    /// Unit principal directions, sign-normalized so the first nonzero entry is positive.
    pub components: [Vec<f64>; 2],
    /// Share of the total variance along each direction.
    pub explained: [f64; 2],
}

fn orient(mut v: Vec<f64>) -> Vec<f64> {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}

pub fn pca_project(points: &[Vec<f64>]) -> Result<Projection> {
    if points.len() < 3 {
        return Err(Error::Usage(format!(
            "PCA needs at least 3 points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if dim < 2 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::Usage(
            "PCA points must share a dimension of at least 2".into(),
        ));
    }
    let n = points.len();
    let mut mean = vec![0.0; dim];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / n as f64);
    }
    let centered = DMatrix::from_fn(n, dim, |r, c| points[r][c] - mean[c]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let component = |k: usize| orient(eig.eigenvectors.column(order[k]).iter().copied().collect());
    let components = [component(0), component(1)];
    let explained = [0, 1].map(|k| {
        if total > 0.0 {
            eig.eigenvalues[order[k]].max(0.0) / total
        } else {
            0.0
        }
    });
    let coords = (0..n)
        .map(|r| {
            let row = centered.row(r);
            [0, 1].map(|k| row.iter().zip(&components[k]).map(|(x, v)| x * v).sum())
        })
        .collect();
    Ok(Projection {
        coords,
        mean,
        components,
        explained,
    })
}
