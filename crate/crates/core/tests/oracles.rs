mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varsep_core::clustering::{euclidean_distance_matrix, ward_linkage};
use varsep_core::dataset::DataMatrix;
use varsep_core::dip::dip_statistic;

/// All nondecreasing samples of length n over a value alphabet.
fn multisets(n: usize, alphabet: &[f64]) -> Vec<Vec<f64>> {
    fn rec(n: usize, start: usize, alphabet: &[f64], cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in start..alphabet.len() {
            cur.push(alphabet[i]);
            rec(n, i, alphabet, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, 0, alphabet, &mut Vec::new(), &mut out);
    out
}

#[test]
fn dip_matches_oracle_on_small_multisets() {
    let alphabet = [0.0, 1.0, 2.0, 3.0];
    for n in 2..=6 {
        for v in multisets(n, &alphabet) {
            let fast = dip_statistic(&v).unwrap().dip;
            let slow = common::dip_oracle(&v);
            assert!(
                (fast - slow).abs() <= 1e-9,
                "sample {v:?}: fast {fast} oracle {slow}"
            );
        }
    }
}

#[test]
fn dip_matches_oracle_on_random_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4021);
    for trial in 0..30 {
        let n = rng.gen_range(8..=20);
        let v: Vec<f64> = (0..n)
            .map(|_| {
                let x: f64 = rng.gen_range(-2.0..2.0);
                // Rounding every other trial produces heavy ties.
                if trial % 2 == 0 {
                    (x * 5.0).round() / 5.0
                } else {
                    x
                }
            })
            .collect();
        let fast = dip_statistic(&v).unwrap().dip;
        let slow = common::dip_oracle(&v);
        assert!(
            (fast - slow).abs() <= 1e-9,
            "trial {trial} sample {v:?}: fast {fast} oracle {slow}"
        );
    }
}

#[test]
fn ward_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(515);
    for trial in 0..25 {
        let n = rng.gen_range(4..=12);
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let names = vec!["x1".to_string(), "x2".to_string()];
        let m = DataMatrix::from_columns(names, cols.clone()).unwrap();
        let dist = euclidean_distance_matrix(&m).unwrap();
        let dend = ward_linkage(&dist, &vec![1; n]).unwrap();
        let slow = common::ward_oracle(&cols);
        assert_eq!(dend.merges.len(), slow.len());
        for (step, (merge, &(lo, hi, height))) in dend.merges.iter().zip(&slow).enumerate() {
            assert_eq!(
                (merge.left, merge.right),
                (lo, hi),
                "trial {trial} step {step}"
            );
            assert!(
                (merge.height - height).abs() <= 1e-9 * height.max(1.0),
                "trial {trial} step {step}: {} vs {height}",
                merge.height
            );
        }
    }
}
