//! SMOTE oversampling.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::L1Label;
use crate::error::{Error, Result};
use crate::learn::Standardizer;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoteTarget {
    #[default]
    MatchMajority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    pub target: SmoteTarget,
    pub seed: u64,
}

impl SmoteConfig {
    pub fn new(seed: u64) -> Self {
        SmoteConfig {
            k_neighbors: 5,
            target: SmoteTarget::MatchMajority,
            seed,
        }
    }
}

/// Raises every class to the majority count with synthetic rows.
///
/// Neighbours are searched in z-scored space (statistics of `x`), and each
/// synthetic row is `x + u * (nn - x)` in the original space, which is the
/// same point as interpolating in z-space and mapping back. Output rows are
/// the originals in input order followed by synthetics grouped by class in
/// canonical order. Base rows are taken round-robin within a class so every
/// original seeds the same number of synthetics (within one).
pub fn smote_resample(
    x: &Array2<f64>,
    y: &[L1Label],
    cfg: &SmoteConfig,
) -> Result<(Array2<f64>, Vec<L1Label>)> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if cfg.k_neighbors == 0 {
        return Err(Error::Config("SMOTE needs k_neighbors >= 1".into()));
    }
    let mut members: BTreeMap<L1Label, Vec<usize>> = BTreeMap::new();
    for (i, &l) in y.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let Some(majority) = members.values().map(Vec::len).max() else {
        return Ok((x.clone(), y.to_vec()));
    };
    for (l, m) in &members {
        if m.len() < 2 && m.len() < majority {
            return Err(Error::Data(format!(
                "SMOTE requires ≥2 per class; {l} has {}",
                m.len()
            )));
        }
    }

    let z = Standardizer::fit(x).transform(x);
    let per_class: Vec<(L1Label, Vec<Vec<f64>>)> = members
        .par_iter()
        .filter(|(_, m)| m.len() < majority)
        .map(|(&label, m)| {
            let k = cfg.k_neighbors.min(m.len() - 1);
            if k < cfg.k_neighbors {
                log::warn!(
                    "SMOTE: class {label} has {} rows, using k = {k} instead of {}",
                    m.len(),
                    cfg.k_neighbors
                );
            }
            let neighbours: Vec<Vec<usize>> = m
                .iter()
                .map(|&i| nearest_same_class(&z, i, m, k))
                .collect();
            let mut rng = seed::rng(cfg.seed, &format!("smote/{}", label.code()));
            let rows = (0..majority - m.len())
                .map(|s| {
                    let base = s % m.len();
                    let nn = neighbours[base][rng.random_range(0..k)];
                    let u: f64 = rng.random();
                    let (a, b) = (x.row(m[base]), x.row(nn));
                    a.iter().zip(b.iter()).map(|(&p, &q)| p + u * (q - p)).collect()
                })
                .collect();
            (label, rows)
        })
        .collect();

    let n_syn: usize = per_class.iter().map(|(_, r)| r.len()).sum();
    let d = x.ncols();
    let mut out = Array2::zeros((x.nrows() + n_syn, d));
    out.slice_mut(ndarray::s![..x.nrows(), ..]).assign(x);
    let mut labels = y.to_vec();
    let mut r = x.nrows();
    for (label, rows) in per_class {
        for row in rows {
            out.row_mut(r).assign(&ArrayView1::from(&row));
            labels.push(label);
            r += 1;
        }
    }
    Ok((out, labels))
}

/// `k` nearest rows of `pool` to row `i` (excluding `i`), ties by index.
fn nearest_same_class(z: &Array2<f64>, i: usize, pool: &[usize], k: usize) -> Vec<usize> {
    let xi = z.row(i);
    let mut d: Vec<(f64, usize)> = pool
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| {
            let dist: f64 = xi.iter().zip(z.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            (dist, j)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|p| p.1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use L1Label::*;

    #[test]
    fn balanced_input_is_unchanged() {
        let x = array![[0.0, 1.0], [2.0, 3.0], [4.0, 5.0], [6.0, 7.0]];
        let y = [CHN, JPN, CHN, JPN];
        let (xo, yo) = smote_resample(&x, &y, &SmoteConfig::new(1)).unwrap();
        assert_eq!(xo, x);
        assert_eq!(yo, y);
    }

    #[test]
    fn identical_minority_points_give_identical_synthetics() {
        let x = array![[1.0, 2.0], [1.0, 2.0], [0.0, 0.0], [5.0, 5.0], [9.0, 1.0], [3.0, 3.0]];
        let y = [KOR, KOR, ENS, ENS, ENS, ENS];
        let (xo, yo) = smote_resample(&x, &y, &SmoteConfig::new(3)).unwrap();
        assert_eq!(xo.nrows(), 8);
        assert_eq!(&yo[6..], &[KOR, KOR]);
        for r in 6..8 {
            assert_eq!(xo.row(r).to_vec(), vec![1.0, 2.0]);
        }
    }

    #[test]
    fn two_point_class_synthetics_lie_on_diagonal() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [5.0, 0.0], [6.0, 0.0], [5.0, 1.0], [6.0, 1.0], [5.5, 0.5]];
        let y = [THA, THA, PAK, PAK, PAK, PAK, PAK];
        let cfg = SmoteConfig {
            k_neighbors: 1,
            ..SmoteConfig::new(9)
        };
        let (xo, _) = smote_resample(&x, &y, &cfg).unwrap();
        assert_eq!(xo.nrows(), 10);
        for r in 7..10 {
            let (a, b) = (xo[[r, 0]], xo[[r, 1]]);
            assert_eq!(a, b);
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn singleton_minority_is_rejected() {
        let x = array![[0.0], [1.0], [2.0]];
        let err = smote_resample(&x, &[SIN, TWN, TWN], &SmoteConfig::new(0)).unwrap_err();
        assert!(err.to_string().contains("SMOTE requires ≥2 per class"), "{err}");
    }
}
