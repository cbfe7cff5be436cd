//! Property tests over randomized inputs: partition coverage, round trips,
//! and the projection-growth guarantees.

use proptest::prelude::*;

use apsolve::linalg::{DenseMatrix, DenseVector};
use apsolve::partition::{build_partition, plan_groups, BlockSpec};
use apsolve::problems::{gen_random_consistent, matrix_market_string, parse_matrix_market};
use apsolve::projection::{ap_sweep_observed, init_state, optimal_two_vector, window_project, Kernel};
use apsolve::rng::SplitMix64;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_row_lands_in_some_block(
        rows in 2usize..80,
        block in 2usize..80,
        overlap_steps in 0usize..4,
    ) {
        let block = block.min(rows);
        let overlap = overlap_steps as f64 * 0.25;
        let spec = BlockSpec::new(block, overlap);
        prop_assume!(spec.stride() >= 1);
        let groups = plan_groups(rows, &spec).unwrap();
        let mut covered = vec![false; rows];
        for g in &groups {
            prop_assert_eq!(g.len(), block);
            for &r in g {
                covered[r] = true;
            }
        }
        prop_assert!(covered.iter().all(|&c| c));
        prop_assert_eq!(groups.len(), rows.div_ceil(spec.stride()));
    }

    #[test]
    fn matrix_market_roundtrip_is_bit_exact(
        rows in 1usize..12,
        cols in 1usize..12,
        seed in 0u64..1000,
    ) {
        let mut rng = SplitMix64::new(seed);
        let mut m = DenseMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                // Mix zeros, integers and irrational-looking values.
                m[(i, j)] = match rng.next_u64() % 4 {
                    0 => 0.0,
                    1 => (rng.next_u64() % 100) as f64 - 50.0,
                    _ => rng.next_signed() * 10f64.powi((rng.next_u64() % 7) as i32 - 3),
                };
            }
        }
        let text = matrix_market_string(&m);
        let back = parse_matrix_market(&text).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn two_vector_optimum_dominates_inputs(
        b1 in -3.0f64..3.0,
        b2 in -3.0f64..3.0,
        alpha in -0.99f64..0.99,
    ) {
        if let Ok(r) = optimal_two_vector(b1, b2, alpha) {
            prop_assert!(r.fs >= b1.abs().max(b2.abs()) - 1e-12);
        }
    }

    #[test]
    fn window_projection_never_shrinks_below_any_direction(
        n in 3usize..20,
        k in 1usize..5,
        seed in 0u64..1000,
    ) {
        let k = k.min(n - 1);
        let mut rng = SplitMix64::new(seed);
        let x = DenseVector::from_vec((0..n).map(|_| rng.next_signed()).collect());
        let vectors: Vec<DenseVector> = (0..k)
            .map(|_| DenseVector::from_vec((0..n).map(|_| rng.next_signed()).collect()))
            .collect();
        let products: Vec<f64> = vectors.iter().map(|v| x.dot(v)).collect();
        if let Ok(st) = window_project(&vectors, &products) {
            for (v, &c) in vectors.iter().zip(&products) {
                prop_assert!(st.norm() >= c.abs() / v.norm() - 1e-10);
            }
            prop_assert!(st.master_defect() <= 1e-8);
        }
    }

    #[test]
    fn sweeps_grow_norms_and_keep_the_bookkeeping(
        n in 4usize..24,
        seed in 0u64..500,
    ) {
        let p = gen_random_consistent(n, n, seed);
        let block = (n / 2).max(2);
        let partition = build_partition(&p.a, &p.b, &BlockSpec::new(block, 0.5)).unwrap();
        let mut state = init_state(&p.a, &p.b).unwrap();
        for _ in 0..4 {
            let mut prev_norm = state.norm();
            state = ap_sweep_observed(&state, &partition, Kernel::Fast, |_, _, after| {
                let norm = after.norm();
                assert!(norm >= prev_norm - 1e-10 * prev_norm);
                assert!(after.master_defect() <= 1e-8);
                prev_norm = norm;
            });
        }
    }
}
