mod common;

use common::{naive_mmse, naive_mmse_gradient, sparse_batch};
use deeprec::{masked_mse, masked_mse_gradient, rmse_from_mmse};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn hundred_random_batches_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for b in 0..100 {
        let rows = rng.gen_range(1..40);
        let cols = rng.gen_range(1..60);
        let density = rng.gen_range(0.01..0.5);
        let (target, mut mask) = sparse_batch(&mut rng, rows, cols, density);
        if b % 4 == 0 {
            mask.fill(1.0);
        }
        let pred = Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-2.0..7.0));
        let loss = masked_mse(pred.view(), target.view(), mask.view()).unwrap();
        let oracle = naive_mmse(&pred, &target, &mask);
        assert!(
            (loss - oracle).abs() <= 1e-12 * oracle.max(1.0),
            "batch {b}: {loss} vs {oracle}"
        );
        let grad = masked_mse_gradient(pred.view(), target.view(), mask.view()).unwrap();
        let expected = naive_mmse_gradient(&pred, &target, &mask);
        for (g, e) in grad.iter().zip(&expected) {
            assert!((g - e).abs() <= 1e-12, "batch {b}: {g} vs {e}");
        }
    }
}

#[test]
fn empty_mask_is_an_error() {
    let z = Array2::<f64>::zeros((2, 3));
    assert!(masked_mse(z.view(), z.view(), z.view()).is_err());
}

fn batch_strategy() -> impl Strategy<Value = (Array2<f64>, Array2<f64>, Array2<f64>)> {
    (1usize..8, 1usize..12).prop_flat_map(|(r, c)| {
        let n = r * c;
        (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(1.0f64..=5.0, n),
            prop::collection::vec(prop::bool::weighted(0.4), n),
        )
            .prop_map(move |(p, t, m)| {
                let mut mask = Array2::from_shape_vec((r, c), m.into_iter().map(|b| b as u8 as f64).collect()).unwrap();
                mask[[0, 0]] = 1.0;
                (
                    Array2::from_shape_vec((r, c), p).unwrap(),
                    Array2::from_shape_vec((r, c), t).unwrap(),
                    mask,
                )
            })
    })
}

proptest! {
    #[test]
    fn masked_entries_do_not_matter((pred, target, mask) in batch_strategy(), junk in -100.0f64..100.0) {
        let mut pred2 = pred.clone();
        let mut target2 = target.clone();
        for ((p, t), m) in pred2.iter_mut().zip(target2.iter_mut()).zip(&mask) {
            if *m == 0.0 {
                *p += junk;
                *t -= junk;
            }
        }
        let a = masked_mse(pred.view(), target.view(), mask.view()).unwrap();
        let b = masked_mse(pred2.view(), target2.view(), mask.view()).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        let g = masked_mse_gradient(pred2.view(), target2.view(), mask.view()).unwrap();
        for (gv, m) in g.iter().zip(&mask) {
            if *m == 0.0 {
                prop_assert_eq!(*gv, 0.0);
            }
        }
    }

    #[test]
    fn rmse_is_root_of_mmse((pred, target, mask) in batch_strategy()) {
        let mmse = masked_mse(pred.view(), target.view(), mask.view()).unwrap();
        let rmse = rmse_from_mmse(mmse).unwrap();
        prop_assert!((rmse * rmse - mmse).abs() <= 1e-12 * mmse.max(1.0));
        prop_assert!(rmse >= 0.0);
    }

    #[test]
    fn perfect_prediction_has_zero_loss((_, target, mask) in batch_strategy()) {
        prop_assert_eq!(masked_mse(target.view(), target.view(), mask.view()).unwrap(), 0.0);
    }
}
