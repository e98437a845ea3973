use accent_id_core::learn::{
    train_mlr, train_multiclass_svm, train_smo_binary, train_smo_binary_traced, MlrParams, SmoParams, SmoTrace,
    Standardizer,
};
use accent_id_core::matrix::Design;
use accent_id_core::L1Label;
use ndarray::{concatenate, Array2, Axis};
use proptest::prelude::*;

fn binary_problem() -> impl Strategy<Value = (Array2<f64>, Vec<f64>)> {
    (2usize..24, 1usize..5).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-3.0f64..3.0, n * d),
            prop::collection::vec(prop::bool::ANY, n),
        )
            .prop_map(move |(v, signs)| {
                let mut y: Vec<f64> = signs.iter().map(|&s| if s { 1.0 } else { -1.0 }).collect();
                y[0] = 1.0;
                y[1] = -1.0;
                (Array2::from_shape_vec((n, d), v).unwrap(), y)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smo_invariants((x, y) in binary_problem(), c in prop::sample::select(vec![0.1, 1.0, 10.0])) {
        let params = SmoParams { c, ..SmoParams::default() };
        let design = Design::Dense(x.clone());
        let mut trace = SmoTrace::default();
        let svm = train_smo_binary_traced(&design, &y, &params, Some(&mut trace)).unwrap();

        let balance: f64 = svm.alphas.iter().zip(&y).map(|(a, y)| a * y).sum();
        prop_assert!(balance.abs() < 1e-9);
        prop_assert!(svm.alphas.iter().all(|&a| (0.0..=c).contains(&a)));
        for i in 0..y.len() {
            let m = y[i] * svm.decision(&design, i);
            let a = svm.alphas[i];
            let viol = if a <= 0.0 { 1.0 - m } else if a >= c { m - 1.0 } else { (m - 1.0).abs() };
            prop_assert!(viol <= params.tol + 1e-12, "row {} violation {}", i, viol);
        }
        // w is the alpha-weighted sum of training rows.
        for j in 0..x.ncols() {
            let wj: f64 = (0..y.len()).map(|i| svm.alphas[i] * y[i] * x[[i, j]]).sum();
            prop_assert!((wj - svm.w[j]).abs() < 1e-9 * (1.0 + wj.abs()));
        }
        for w in trace.objective.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0), "objective fell {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn standardizer_moments(v in prop::collection::vec(-1e3f64..1e3, 3 * 8), constant_col in 0usize..3) {
        let mut x = Array2::from_shape_vec((8, 3), v).unwrap();
        x.column_mut(constant_col).fill(7.5);
        let z = Standardizer::fit(&x).transform(&x);
        for col in z.columns() {
            let mean = col.mean().unwrap();
            let sd = col.std(0.0);
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!(sd == 0.0 || (sd - 1.0).abs() < 1e-9, "sd {}", sd);
        }
    }

    #[test]
    fn mlr_loss_never_increases(v in prop::collection::vec(-2.0f64..2.0, 30 * 3), seed in 0usize..11) {
        let x = Array2::from_shape_vec((30, 3), v).unwrap();
        let y: Vec<L1Label> = (0..30).map(|i| L1Label::from_index((i * 7 + seed) % 3).unwrap()).collect();
        let classes: Vec<L1Label> = (0..3).map(|i| L1Label::from_index(i).unwrap()).collect();
        let m = train_mlr(&Design::Dense(x), &y, &classes, &MlrParams { max_iter: 50, ..MlrParams::default() }).unwrap();
        for w in m.loss_trace.windows(2) {
            prop_assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn duplicated_training_set_gives_same_hyperplane() {
    let x = ndarray::array![[0.0, 1.0], [1.0, 2.0], [2.0, 0.5], [3.0, 3.0], [-1.0, 0.0], [0.5, -1.0]];
    let y = [1.0, 1.0, 1.0, 1.0, -1.0, -1.0];
    // Separable, so the hard-margin solution is reached with a large C.
    let params = SmoParams { c: 1e3, tol: 1e-9, ..SmoParams::default() };
    let a = train_smo_binary(&Design::Dense(x.clone()), &y, &params).unwrap();
    let x2 = concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
    let y2: Vec<f64> = y.iter().chain(y.iter()).copied().collect();
    let b = train_smo_binary(&Design::Dense(x2), &y2, &params).unwrap();
    for (p, q) in a.w.iter().zip(&b.w) {
        assert!((p - q).abs() < 1e-6, "{:?} vs {:?}", a.w, b.w);
    }
    assert!((a.b - b.b).abs() < 1e-6);
}

#[test]
fn l2_shrinks_weights() {
    let x = ndarray::array![[1.0, 0.2], [2.0, -0.1], [-1.0, 0.3], [-2.0, 0.0], [0.5, 1.0], [-0.5, -1.0]];
    let y = [L1Label::CHN, L1Label::CHN, L1Label::JPN, L1Label::JPN, L1Label::CHN, L1Label::JPN];
    let classes = [L1Label::CHN, L1Label::JPN];
    let fit = |l2| {
        train_mlr(&Design::Dense(x.clone()), &y, &classes, &MlrParams { l2, max_iter: 2000, tol: 1e-10 })
            .unwrap()
            .weight_norm()
    };
    // Separable data: l2 = 0 drives weights to grow until the iteration cap.
    assert!(fit(0.1) < fit(0.0));
    assert!(fit(1.0) < fit(0.1));
}

#[test]
fn separated_clusters_get_full_training_accuracy() {
    let centres = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (c, &(cx, cy)) in centres.iter().enumerate() {
        for k in 0..6 {
            let t = k as f64 * 0.3;
            rows.extend([cx + t.cos(), cy + t.sin()]);
            y.push(L1Label::from_index(c).unwrap());
        }
    }
    let x = Design::Dense(Array2::from_shape_vec((18, 2), rows).unwrap());
    let classes: Vec<L1Label> = (0..3).map(|i| L1Label::from_index(i).unwrap()).collect();
    let svm = train_multiclass_svm(&x, &y, &classes, &SmoParams::default()).unwrap();
    assert_eq!(svm.predict(&x), y);
    let mlr = train_mlr(&x, &y, &classes, &MlrParams::default()).unwrap();
    assert_eq!(mlr.predict(&x), y);
    let p = mlr.predict_proba(&x);
    for row in p.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn standardizing_consistently_keeps_predictions() {
    let x = ndarray::array![[1.0, 200.0], [2.0, 260.0], [3.0, 180.0], [8.0, 900.0], [9.0, 950.0], [10.0, 870.0]];
    let y = [L1Label::KOR, L1Label::KOR, L1Label::KOR, L1Label::THA, L1Label::THA, L1Label::THA];
    let classes = [L1Label::KOR, L1Label::THA];
    let s = Standardizer::fit(&x);
    let z = Design::Dense(s.transform(&x));
    let probe = ndarray::array![[2.5, 240.0], [8.5, 880.0]];
    let zp = Design::Dense(s.transform(&probe));
    let svm = train_multiclass_svm(&z, &y, &classes, &SmoParams::default()).unwrap();
    assert_eq!(svm.predict(&zp), vec![L1Label::KOR, L1Label::THA]);
}
