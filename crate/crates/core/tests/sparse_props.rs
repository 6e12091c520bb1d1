use proptest::prelude::*;
use sparsla_core::sparse::mmio::{format_matrix_market, parse_matrix_market};
use sparsla_core::SparseCoo;

fn rel_close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-13 * scale.max(1.0)
}

/// Random triplets, duplicates and explicit zeros included.
fn coo_strategy(max_n: usize) -> impl Strategy<Value = SparseCoo> {
    (1..=max_n, 1..=max_n).prop_flat_map(|(nr, nc)| {
        let entry = (0..nr, 0..nc, prop_oneof![Just(0.0), -10.0..10.0f64]);
        prop::collection::vec(entry, 0..(3 * nr * nc).min(200)).prop_map(move |triplets| {
            let rows = triplets.iter().map(|t| t.0).collect();
            let cols = triplets.iter().map(|t| t.1).collect();
            let vals = triplets.iter().map(|t| t.2).collect();
            SparseCoo::new(rows, cols, vals, (nr, nc)).unwrap()
        })
    })
}

fn with_vector(max_n: usize) -> impl Strategy<Value = (SparseCoo, Vec<f64>, Vec<f64>)> {
    coo_strategy(max_n).prop_flat_map(|a| {
        let (nr, nc) = a.shape();
        (
            Just(a),
            prop::collection::vec(-5.0..5.0f64, nc),
            prop::collection::vec(-5.0..5.0f64, nr),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn canonicalization_is_idempotent(a in coo_strategy(12)) {
        let again = SparseCoo::new(a.rows().to_vec(), a.cols().to_vec(), a.vals().to_vec(), a.shape()).unwrap();
        prop_assert_eq!(&again, &a);
        let keys: Vec<_> = a.rows().iter().zip(a.cols()).collect();
        prop_assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn csr_spmv_matches_dense((a, x, _) in with_vector(32)) {
        let dense = a.to_dense().unwrap().matvec(&x).unwrap();
        let sparse = a.to_csr().spmv(&x).unwrap();
        let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (d, s) in dense.iter().zip(&sparse) {
            prop_assert!(rel_close(*d, *s, scale), "{} vs {}", d, s);
        }
    }

    #[test]
    fn spmv_transpose_matches_dense((a, _, y) in with_vector(32)) {
        let dense = a.to_dense().unwrap().transpose().matvec(&y).unwrap();
        let sparse = a.to_csr().spmv_transpose(&y).unwrap();
        let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (d, s) in dense.iter().zip(&sparse) {
            prop_assert!(rel_close(*d, *s, scale));
        }
    }

    #[test]
    fn csr_round_trip_preserves_entry_order(a in coo_strategy(16)) {
        let csr = a.to_csr();
        prop_assert_eq!(csr.col_idx(), a.cols());
        prop_assert_eq!(csr.vals(), a.vals());
        prop_assert_eq!(csr.to_coo(), a);
    }

    #[test]
    fn matrix_market_round_trip(a in coo_strategy(16)) {
        let mut text = Vec::new();
        format_matrix_market(&a, &mut text).unwrap();
        let back = parse_matrix_market(text.as_slice()).unwrap();
        prop_assert_eq!(back.rows(), a.rows());
        prop_assert_eq!(back.cols(), a.cols());
        for (x, y) in back.vals().iter().zip(a.vals()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn matrix_market_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.mtx");
    let a = sparsla_core::poisson2d(5).unwrap().matrix;
    let scaled = a.with_values(a.vals().iter().map(|v| v / 3.0).collect()).unwrap();
    sparsla_core::write_matrix_market(&scaled, &path).unwrap();
    assert_eq!(sparsla_core::read_matrix_market(&path).unwrap(), scaled);
}
