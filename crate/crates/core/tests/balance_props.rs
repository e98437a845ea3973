use std::collections::BTreeMap;

use accent_id_core::balance::{smote_resample, SmoteConfig};
use accent_id_core::L1Label;
use ndarray::Array2;
use proptest::prelude::*;

fn imbalanced() -> impl Strategy<Value = (Array2<f64>, Vec<L1Label>)> {
    (prop::collection::vec(2usize..9, 2..5), 1usize..4).prop_flat_map(|(counts, d)| {
        let labels: Vec<L1Label> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(L1Label::from_index(c).unwrap(), n))
            .collect();
        let n = labels.len();
        prop::collection::vec(-5.0f64..5.0, n * d)
            .prop_map(move |v| (Array2::from_shape_vec((n, d), v).unwrap(), labels.clone()))
    })
}

proptest! {
    #[test]
    fn smote_balances_and_stays_in_class_hull((x, y) in imbalanced(), k in 1usize..6, seed in any::<u64>()) {
        let cfg = SmoteConfig { k_neighbors: k, ..SmoteConfig::new(seed) };
        let (xo, yo) = smote_resample(&x, &y, &cfg).unwrap();
        let mut counts: BTreeMap<L1Label, usize> = BTreeMap::new();
        for l in &yo {
            *counts.entry(*l).or_default() += 1;
        }
        let majority = *counts.values().max().unwrap();
        prop_assert!(counts.values().all(|&c| c == majority));
        prop_assert_eq!(xo.slice(ndarray::s![..x.nrows(), ..]), x.view());
        // Every coordinate of a synthetic lies within its class's range.
        for r in x.nrows()..xo.nrows() {
            for j in 0..x.ncols() {
                let col: Vec<f64> = (0..x.nrows()).filter(|&i| y[i] == yo[r]).map(|i| x[[i, j]]).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(xo[[r, j]] >= lo - 1e-12 && xo[[r, j]] <= hi + 1e-12);
            }
        }
        let (xo2, _) = smote_resample(&x, &y, &cfg).unwrap();
        prop_assert!(xo.iter().zip(xo2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
