//! Matrix types passed between pipeline stages.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::audio::FeatureGroup;
use crate::error::{Error, Result};

/// Compressed sparse row matrix with `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn empty(n_cols: usize) -> Self {
        CsrMatrix {
            n_cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from rows of index-sorted `(col, value)` pairs.
    pub fn from_rows<I, R>(n_cols: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = (usize, f64)>,
    {
        let mut m = CsrMatrix::empty(n_cols);
        for row in rows {
            m.push_row(row);
        }
        m
    }

    pub fn push_row(&mut self, row: impl IntoIterator<Item = (usize, f64)>) {
        for (c, v) in row {
            debug_assert!(c < self.n_cols);
            self.indices.push(c);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn select_rows(&self, rows: &[usize]) -> CsrMatrix {
        CsrMatrix::from_rows(self.n_cols, rows.iter().map(|&r| self.row(r)))
    }

    /// Keeps only `cols` (sorted), renumbering them densely.
    pub fn select_cols(&self, cols: &[usize]) -> CsrMatrix {
        let mut remap = vec![usize::MAX; self.n_cols];
        for (new, &old) in cols.iter().enumerate() {
            remap[old] = new;
        }
        let rows = (0..self.n_rows()).map(|i| {
            self.row(i)
                .filter_map(|(c, v)| (remap[c] != usize::MAX).then(|| (remap[c], v)))
                .collect::<Vec<_>>()
        });
        CsrMatrix::from_rows(cols.len(), rows)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows(), self.n_cols));
        for i in 0..self.n_rows() {
            for (c, v) in self.row(i) {
                out[[i, c]] += v;
            }
        }
        out
    }
}

/// Design matrix handed to learners and selectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Dense(Array2<f64>),
    Sparse(CsrMatrix),
}

impl Design {
    pub fn n_rows(&self) -> usize {
        match self {
            Design::Dense(m) => m.nrows(),
            Design::Sparse(m) => m.n_rows(),
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            Design::Dense(m) => m.ncols(),
            Design::Sparse(m) => m.n_cols,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Design::Sparse(_))
    }

    pub fn row_dot(&self, i: usize, w: &[f64]) -> f64 {
        match self {
            Design::Dense(m) => m.row(i).iter().zip(w).map(|(a, b)| a * b).sum(),
            Design::Sparse(m) => m.row(i).map(|(c, v)| v * w[c]).sum(),
        }
    }

    /// `out += alpha * row(i)`
    pub fn row_axpy(&self, i: usize, alpha: f64, out: &mut [f64]) {
        match self {
            Design::Dense(m) => {
                for (o, x) in out.iter_mut().zip(m.row(i)) {
                    *o += alpha * x;
                }
            }
            Design::Sparse(m) => {
                for (c, v) in m.row(i) {
                    out[c] += alpha * v;
                }
            }
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Design {
        match self {
            Design::Dense(m) => Design::Dense(m.select(Axis(0), rows)),
            Design::Sparse(m) => Design::Sparse(m.select_rows(rows)),
        }
    }

    pub fn select_cols(&self, cols: &[usize]) -> Design {
        match self {
            Design::Dense(m) => Design::Dense(m.select(Axis(1), cols)),
            Design::Sparse(m) => Design::Sparse(m.select_cols(cols)),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Design::Dense(m) => m.clone(),
            Design::Sparse(m) => m.to_dense(),
        }
    }
}

/// Dense, named feature matrix: one row per instance id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
    pub data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    /// Column indices whose group is one of `groups`.
    pub fn group_columns(&self, groups: &[FeatureGroup]) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| groups.contains(g))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn select_cols(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            ids: self.ids.clone(),
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            groups: cols.iter().map(|&c| self.groups[c]).collect(),
            data: self.data.select(Axis(1), cols),
        }
    }

    /// Row lookup by id.
    pub fn row_index(&self) -> BTreeMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Writes `id,<names...>` CSV. Values use Rust's shortest round-trip
    /// float formatting, so reading back is lossless.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string()];
        header.extend(self.names.iter().cloned());
        wr.write_record(&header).map_err(csv_err)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.data.row(i).iter().map(|v| format!("{v:?}")));
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::Serde(e.to_string()))?;
        Ok(())
    }

    /// Group sidecar JSON `{feature_name: group}`.
    pub fn group_map_json(&self) -> String {
        let map: BTreeMap<&str, &str> = self
            .names
            .iter()
            .zip(&self.groups)
            .map(|(n, g)| (n.as_str(), g.as_str()))
            .collect();
        serde_json::to_string_pretty(&map).expect("string map serializes")
    }

    /// Reads a feature CSV and its group sidecar.
    pub fn read(csv_path: &Path, groups_path: &Path) -> Result<FeatureMatrix> {
        let groups_text =
            std::fs::read_to_string(groups_path).map_err(|e| Error::io(groups_path, e))?;
        let group_map: BTreeMap<String, String> = serde_json::from_str(&groups_text)?;
        let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
        Self::read_csv(file, &group_map)
    }

    pub fn read_csv(r: impl std::io::Read, group_map: &BTreeMap<String, String>) -> Result<FeatureMatrix> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("id") {
            return Err(Error::Data("feature CSV must start with an `id` column".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let groups = names
            .iter()
            .map(|n| {
                let g = group_map
                    .get(n)
                    .ok_or_else(|| Error::Data(format!("feature {n} missing from group map")))?;
                g.parse::<FeatureGroup>().map_err(Error::Data)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != names.len() + 1 {
                return Err(Error::Data(format!(
                    "feature CSV row at line {} has {} fields, expected {}",
                    line + 2,
                    rec.len(),
                    names.len() + 1
                )));
            }
            ids.push(rec[0].to_string());
            for v in rec.iter().skip(1) {
                values.push(v.parse::<f64>().map_err(|e| {
                    Error::Data(format!("bad number `{v}` at line {}: {e}", line + 2))
                })?);
            }
        }
        let data = Array2::from_shape_vec((ids.len(), names.len()), values)
            .map_err(|e| Error::Data(e.to_string()))?;
        Ok(FeatureMatrix {
            ids,
            names,
            groups,
            data,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csr_select_and_dense_agree() {
        let m = CsrMatrix::from_rows(
            4,
            vec![vec![(0, 1.0), (3, 2.0)], vec![], vec![(1, 5.0), (2, 1.0)]],
        );
        let d = m.to_dense();
        assert_eq!(d, array![[1.0, 0.0, 0.0, 2.0], [0.0, 0.0, 0.0, 0.0], [0.0, 5.0, 1.0, 0.0]]);
        let sub = m.select_rows(&[2, 0]).select_cols(&[1, 3]);
        assert_eq!(sub.to_dense(), array![[5.0, 0.0], [0.0, 2.0]]);
    }

    #[test]
    fn design_dot_and_axpy_match_between_layouts() {
        let dense = array![[1.0, -2.0, 0.0], [0.0, 3.0, 4.0]];
        let sparse = CsrMatrix::from_rows(3, vec![vec![(0, 1.0), (1, -2.0)], vec![(1, 3.0), (2, 4.0)]]);
        let (a, b) = (Design::Dense(dense), Design::Sparse(sparse));
        let w = [0.5, 1.0, -1.0];
        for i in 0..2 {
            assert_eq!(a.row_dot(i, &w), b.row_dot(i, &w));
            let (mut o1, mut o2) = (vec![0.0; 3], vec![0.0; 3]);
            a.row_axpy(i, 2.0, &mut o1);
            b.row_axpy(i, 2.0, &mut o2);
            assert_eq!(o1, o2);
        }
    }

    #[test]
    fn feature_csv_round_trip() {
        let fm = FeatureMatrix {
            ids: vec!["a".into(), "b".into()],
            names: vec!["rms__mean".into(), "mfcc1__max".into()],
            groups: vec![FeatureGroup::EnergyAmplitude, FeatureGroup::Mfcc],
            data: array![[0.1, -3.25e-7], [1.0 / 3.0, 42.0]],
        };
        let mut buf = Vec::new();
        fm.write_csv(&mut buf).unwrap();
        let gm: BTreeMap<String, String> = serde_json::from_str(&fm.group_map_json()).unwrap();
        let back = FeatureMatrix::read_csv(buf.as_slice(), &gm).unwrap();
        assert_eq!(back, fm);
    }
}
