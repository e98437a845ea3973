//! Filter feature selection: information gain, chi-square and ReliefF.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::L1Label;
use crate::error::{Error, Result};
use crate::learn::Standardizer;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    InfoGain,
    ChiSquare,
    Relieff,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 3] = [
        SelectionMethod::InfoGain,
        SelectionMethod::ChiSquare,
        SelectionMethod::Relieff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMethod::InfoGain => "info_gain",
            SelectionMethod::ChiSquare => "chi_square",
            SelectionMethod::Relieff => "relieff",
        }
    }
}

impl std::str::FromStr for SelectionMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SelectionMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown selection method `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionScoreTable {
    pub method: SelectionMethod,
    pub scores: Vec<f64>,
    /// Discretization bins for IG and chi-square.
    pub bins: Option<usize>,
}

impl SelectionScoreTable {
    /// Writes `feature,score` CSV.
    pub fn write_csv(&self, names: &[String], w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Serde(e.to_string());
        wr.write_record(["feature", "score"]).map_err(err)?;
        for (n, s) in names.iter().zip(&self.scores) {
            wr.write_record([n.as_str(), &format!("{s:?}")]).map_err(err)?;
        }
        wr.flush().map_err(|e| Error::Serde(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMask {
    /// Selected columns, ascending.
    pub indices: Vec<usize>,
    pub n: usize,
}

impl SelectionMask {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.indices).expect("index list serializes")
    }
}

/// Equal-frequency bin ids in `0..bins`.
///
/// Cut points are the values at ranks `floor(j * n / bins)` of the sorted
/// column; duplicate cuts (and cuts at the minimum) collapse, so ties never
/// straddle a bin boundary.
pub fn discretize_equal_frequency(column: ArrayView1<f64>, bins: usize) -> Vec<usize> {
    let n = column.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..bins.max(1))
        .map(|j| sorted[j * n / bins])
        .filter(|&c| c > sorted[0])
        .collect();
    cuts.dedup();
    column
        .iter()
        .map(|v| cuts.partition_point(|c| c <= v))
        .collect()
}

fn class_ids(y: &[L1Label]) -> (Vec<usize>, usize) {
    let classes: BTreeMap<L1Label, usize> = y
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, i))
        .collect();
    (y.iter().map(|l| classes[l]).collect(), classes.len())
}

fn contingency(bins: &[usize], y: &[usize], n_classes: usize) -> Vec<Vec<f64>> {
    let n_bins = bins.iter().max().map_or(0, |m| m + 1);
    let mut t = vec![vec![0.0; n_classes]; n_bins];
    for (&b, &c) in bins.iter().zip(y) {
        t[b][c] += 1.0;
    }
    t
}

fn entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum()
}

/// Information gain (nats) of a bin-by-class contingency table.
pub fn info_gain_from_table(table: &[Vec<f64>]) -> f64 {
    let k = table.first().map_or(0, Vec::len);
    let class_totals: Vec<f64> = (0..k).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let n: f64 = class_totals.iter().sum();
    if n <= 0.0 {
        return 0.0;
    }
    let cond: f64 = table
        .iter()
        .map(|r| r.iter().sum::<f64>() / n * entropy(r))
        .sum();
    (entropy(&class_totals) - cond).max(0.0)
}

/// Pearson chi-square of a contingency table; zero-expected cells skipped.
pub fn chi_square_from_table(table: &[Vec<f64>]) -> f64 {
    let k = table.first().map_or(0, Vec::len);
    let col: Vec<f64> = (0..k).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let n: f64 = col.iter().sum();
    if n <= 0.0 {
        return 0.0;
    }
    let mut chi = 0.0;
    for r in table {
        let row: f64 = r.iter().sum();
        for (c, &o) in r.iter().enumerate() {
            let e = row * col[c] / n;
            if e > 0.0 {
                chi += (o - e) * (o - e) / e;
            }
        }
    }
    chi
}

fn check_xy(x: &Array2<f64>, y: &[L1Label]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    Ok(())
}

fn score_tables(x: &Array2<f64>, y: &[L1Label], bins: usize, f: fn(&[Vec<f64>]) -> f64) -> Result<Vec<f64>> {
    check_xy(x, y)?;
    if bins < 2 {
        return Err(Error::Config("discretization needs at least 2 bins".into()));
    }
    let (yi, k) = class_ids(y);
    Ok((0..x.ncols())
        .into_par_iter()
        .map(|c| f(&contingency(&discretize_equal_frequency(x.column(c), bins), &yi, k)))
        .collect())
}

pub fn score_info_gain(x: &Array2<f64>, y: &[L1Label], bins: usize) -> Result<SelectionScoreTable> {
    Ok(SelectionScoreTable {
        method: SelectionMethod::InfoGain,
        scores: score_tables(x, y, bins, info_gain_from_table)?,
        bins: Some(bins),
    })
}

pub fn score_chi_square(x: &Array2<f64>, y: &[L1Label], bins: usize) -> Result<SelectionScoreTable> {
    Ok(SelectionScoreTable {
        method: SelectionMethod::ChiSquare,
        scores: score_tables(x, y, bins, chi_square_from_table)?,
        bins: Some(bins),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelieffParams {
    pub k: usize,
    /// Number of probe instances; `None` probes every row.
    pub m: Option<usize>,
    pub seed: u64,
}

impl Default for RelieffParams {
    fn default() -> Self {
        RelieffParams { k: 10, m: None, seed: 0 }
    }
}

/// ReliefF weights.
///
/// For each probe, the `k` nearest hits and the `k` nearest misses from each
/// other class are found by Euclidean distance in z-scored space (ties to the
/// lower row). With `diff = |a - b| / (max - min)` per feature,
/// `W += sum_miss P(c) / (1 - P(y_i)) * diff / (m k_c) - sum_hit diff / (m k_h)`
/// where `k_c` is `k` clamped to the size of the class searched.
pub fn score_relieff(x: &Array2<f64>, y: &[L1Label], params: &RelieffParams) -> Result<SelectionScoreTable> {
    check_xy(x, y)?;
    let (yi, n_classes) = class_ids(y);
    if n_classes < 2 {
        return Err(Error::Data("ReliefF needs at least two classes".into()));
    }
    if params.k == 0 {
        return Err(Error::Config("ReliefF needs k >= 1".into()));
    }
    let n = x.nrows();
    let d = x.ncols();
    let z = Standardizer::fit(x).transform(x);
    let range: Vec<f64> = x
        .axis_iter(Axis(1))
        .map(|c| {
            let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            hi - lo
        })
        .collect();
    let mut members = vec![Vec::new(); n_classes];
    for (i, &c) in yi.iter().enumerate() {
        members[c].push(i);
    }
    let prior: Vec<f64> = members.iter().map(|m| m.len() as f64 / n as f64).collect();

    let probes: Vec<usize> = match params.m {
        Some(m) if m < n => {
            let mut rng = seed::rng(params.seed, "relieff");
            let mut p = sample(&mut rng, n, m).into_vec();
            p.sort_unstable();
            p
        }
        _ => (0..n).collect(),
    };
    let m = probes.len() as f64;

    let diff_into = |acc: &mut [f64], i: usize, j: usize, scale: f64| {
        for f in 0..d {
            if range[f] > 0.0 {
                acc[f] += scale * (x[[i, f]] - x[[j, f]]).abs() / range[f];
            }
        }
    };

    const CHUNK: usize = 64;
    let partial: Vec<Vec<f64>> = probes
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; d];
            for &i in chunk {
                let zi = z.row(i);
                let ci = yi[i];
                for (c, pool) in members.iter().enumerate() {
                    let mut near: Vec<(f64, usize)> = pool
                        .iter()
                        .filter(|&&j| j != i)
                        .map(|&j| {
                            let dist: f64 = zi.iter().zip(z.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                            (dist, j)
                        })
                        .collect();
                    let kc = params.k.min(near.len());
                    if kc == 0 {
                        continue;
                    }
                    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let scale = if c == ci {
                        -1.0 / (m * kc as f64)
                    } else {
                        prior[c] / (1.0 - prior[ci]) / (m * kc as f64)
                    };
                    for &(_, j) in &near[..kc] {
                        diff_into(&mut acc, i, j, scale);
                    }
                }
            }
            acc
        })
        .collect();
    let mut scores = vec![0.0; d];
    for p in partial {
        for (s, v) in scores.iter_mut().zip(p) {
            *s += v;
        }
    }
    Ok(SelectionScoreTable {
        method: SelectionMethod::Relieff,
        scores,
        bins: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreParams {
    pub bins: usize,
    pub relieff: RelieffParams,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams {
            bins: 10,
            relieff: RelieffParams::default(),
        }
    }
}

pub fn score(method: SelectionMethod, x: &Array2<f64>, y: &[L1Label], p: &ScoreParams) -> Result<SelectionScoreTable> {
    match method {
        SelectionMethod::InfoGain => score_info_gain(x, y, p.bins),
        SelectionMethod::ChiSquare => score_chi_square(x, y, p.bins),
        SelectionMethod::Relieff => score_relieff(x, y, &p.relieff),
    }
}

/// Features ranked by descending score, ties to the lower index.
pub fn ranking(table: &SelectionScoreTable) -> Vec<usize> {
    let mut order: Vec<usize> = (0..table.scores.len()).collect();
    order.sort_by(|&a, &b| table.scores[b].total_cmp(&table.scores[a]).then(a.cmp(&b)));
    order
}

pub fn select_top_n(table: &SelectionScoreTable, n: usize) -> SelectionMask {
    let mut indices: Vec<usize> = ranking(table).into_iter().take(n).collect();
    indices.sort_unstable();
    SelectionMask { indices, n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use L1Label::*;

    #[test]
    fn discretizer_examples() {
        let c = Array1::from_elem(7, 2.5);
        assert!(discretize_equal_frequency(c.view(), 10).iter().all(|&b| b == 0));

        let c = Array1::from_iter((1..=100).map(f64::from));
        let ids = discretize_equal_frequency(c.view(), 10);
        for b in 0..10 {
            assert_eq!(ids.iter().filter(|&&i| i == b).count(), 10);
        }

        let c = Array1::from_iter((0..40).map(|i| f64::from(i % 5)));
        let ids = discretize_equal_frequency(c.view(), 10);
        let occupied: std::collections::BTreeSet<_> = ids.iter().collect();
        assert!(occupied.len() <= 5);
        assert!(ids.iter().all(|&b| b < 10));
    }

    #[test]
    fn info_gain_hand_table() {
        // [[3,1],[1,3]]: H(y) = ln 2, each row has entropy H(3/4, 1/4).
        let t = vec![vec![3.0, 1.0], vec![1.0, 3.0]];
        let h_row = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let expected = 2f64.ln() - h_row;
        assert!((info_gain_from_table(&t) - expected).abs() < 1e-12);
    }

    #[test]
    fn chi_square_hand_table() {
        // Expected counts are all 15.
        let t = vec![vec![10.0, 20.0], vec![20.0, 10.0]];
        assert!((chi_square_from_table(&t) - 4.0 * 25.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_constant_features() {
        let y = [CHN, CHN, ENS, ENS, HKG, HKG];
        let x = array![[0.0, 7.0], [0.0, 7.0], [1.0, 7.0], [1.0, 7.0], [2.0, 7.0], [2.0, 7.0]];
        let ig = score_info_gain(&x, &y, 10).unwrap();
        assert!((ig.scores[0] - 3f64.ln()).abs() < 1e-12);
        assert_eq!(ig.scores[1], 0.0);
        let chi = score_chi_square(&x, &y, 10).unwrap();
        assert_eq!(chi.scores[1], 0.0);
    }

    #[test]
    fn chi_square_is_n_for_separating_binary_feature() {
        let y = [CHN, CHN, CHN, JPN, JPN];
        let x = array![[0.0], [0.0], [0.0], [1.0], [1.0]];
        let chi = score_chi_square(&x, &y, 10).unwrap();
        assert!((chi.scores[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn relieff_four_point_example() {
        let x = array![[0.0], [0.1], [1.0], [1.1]];
        let y = [CHN, CHN, ENS, ENS];
        let p = RelieffParams { k: 1, ..Default::default() };
        let w = score_relieff(&x, &y, &p).unwrap().scores[0];
        // Probe updates (miss - hit) / 1.1 / 4: 0.9, 0.8, 0.8, 0.9.
        assert!((w - 3.4 / 4.4).abs() < 1e-12, "{w}");
    }

    #[test]
    fn relieff_constant_and_duplicate_columns() {
        let x = array![[0.0, 1.0, 0.0], [0.3, 1.0, 0.3], [1.0, 1.0, 1.0], [1.4, 1.0, 1.4], [0.2, 1.0, 0.2], [0.9, 1.0, 0.9]];
        let y = [CHN, CHN, ENS, ENS, CHN, ENS];
        let s = score_relieff(&x, &y, &RelieffParams::default()).unwrap().scores;
        assert_eq!(s[1], 0.0);
        assert_eq!(s[0], s[2]);
        assert!(score_relieff(&x, &[CHN; 6], &RelieffParams::default()).is_err());
    }

    #[test]
    fn top_n_tie_rule() {
        let t = SelectionScoreTable {
            method: SelectionMethod::InfoGain,
            scores: vec![0.5, 0.9, 0.9, 0.1],
            bins: Some(10),
        };
        assert_eq!(select_top_n(&t, 2).indices, [1, 2]);
        assert_eq!(select_top_n(&t, 10).indices, [0, 1, 2, 3]);
        assert_eq!(select_top_n(&t, 2).to_json(), "[1,2]");
    }

    fn labelled_data() -> impl Strategy<Value = (Array2<f64>, Vec<L1Label>)> {
        (6usize..20, 1usize..5).prop_flat_map(|(n, d)| {
            (
                prop::collection::vec(-5.0f64..5.0, n * d),
                prop::collection::vec(0usize..3, n),
            )
                .prop_map(move |(v, l)| {
                    let mut y: Vec<L1Label> = l.into_iter().map(|i| L1Label::ALL[i]).collect();
                    y[0] = CHN;
                    y[1] = ENS;
                    (Array2::from_shape_vec((n, d), v).unwrap(), y)
                })
        })
    }

    proptest! {
        #[test]
        fn scores_ignore_row_order((x, y) in labelled_data()) {
            let n = x.nrows();
            let perm: Vec<usize> = (0..n).rev().collect();
            let xp = x.select(Axis(0), &perm);
            let yp: Vec<L1Label> = perm.iter().map(|&i| y[i]).collect();
            let a = score_info_gain(&x, &y, 4).unwrap().scores;
            let b = score_info_gain(&xp, &yp, 4).unwrap().scores;
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-12);
            }
            let a = score_chi_square(&x, &y, 4).unwrap().scores;
            let b = score_chi_square(&xp, &yp, 4).unwrap().scores;
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }

        #[test]
        fn ig_and_chi_ignore_monotone_transforms((x, y) in labelled_data()) {
            let t = x.mapv(|v| (v * 0.7).exp() + 3.0);
            let a = score_info_gain(&x, &y, 5).unwrap().scores;
            let b = score_info_gain(&t, &y, 5).unwrap().scores;
            prop_assert_eq!(a, b);
            let a = score_chi_square(&x, &y, 5).unwrap().scores;
            let b = score_chi_square(&t, &y, 5).unwrap().scores;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn masks_are_nested(scores in prop::collection::vec(-1.0f64..1.0, 1..30)) {
            let t = SelectionScoreTable { method: SelectionMethod::Relieff, scores, bins: None };
            for n in 1..t.scores.len() {
                let a = select_top_n(&t, n).indices;
                let b = select_top_n(&t, n + 1).indices;
                prop_assert!(a.iter().all(|i| b.contains(i)));
                prop_assert_eq!(a.len(), n);
            }
        }
    }
}
