mod common;

use awe::encoders::EmbeddingBatch;
use awe::losses::{
    clap_loss, clap_loss_multi, clap_loss_parts, dwd_centroids, dwd_loss, dwd_similarities, DwdBatch,
    SimilarityMatrix,
};
use common::oracles::{loss_examples, loss_random_fixtures, RANDOM_FIXTURES};
use proptest::prelude::*;

#[test]
fn worked_examples_match_at_1e_9() {
    common::assert_all(&loss_examples());
}

#[test]
fn library_equals_loop_oracles_on_random_fixtures() {
    common::assert_all(&loss_random_fixtures(RANDOM_FIXTURES));
}

fn unit_rows(raw: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    raw.into_iter()
        .map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

fn matrix(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, n), n)
}

fn classes(n: usize, m: usize, d: usize) -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
    prop::collection::vec(prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), m), n)
        .prop_filter("non-degenerate", |c| c.iter().flatten().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2))
        .prop_map(|c| c.into_iter().map(unit_rows).collect())
}

proptest! {
    #[test]
    fn row_shift_leaves_audio_direction_term(c in matrix(4), row in 0usize..4, shift in -5.0..5.0f64) {
        let base = clap_loss_parts(&SimilarityMatrix::from_rows(&c, true).unwrap()).unwrap();
        let mut shifted = c.clone();
        shifted[row].iter_mut().for_each(|v| *v += shift);
        let after = clap_loss_parts(&SimilarityMatrix::from_rows(&shifted, true).unwrap()).unwrap();
        prop_assert!((base.audio - after.audio).abs() < 1e-10);
    }

    #[test]
    fn column_shift_leaves_text_direction_term(c in matrix(4), col in 0usize..4, shift in -5.0..5.0f64) {
        let base = clap_loss_parts(&SimilarityMatrix::from_rows(&c, true).unwrap()).unwrap();
        let mut shifted = c.clone();
        shifted.iter_mut().for_each(|r| r[col] += shift);
        let after = clap_loss_parts(&SimilarityMatrix::from_rows(&shifted, true).unwrap()).unwrap();
        prop_assert!((base.text - after.text).abs() < 1e-10);
    }

    #[test]
    fn transpose_swaps_directions(c in matrix(3)) {
        let m = SimilarityMatrix::from_rows(&c, true).unwrap();
        let (a, b) = (clap_loss_parts(&m).unwrap(), clap_loss_parts(&m.transpose()).unwrap());
        prop_assert!((a.audio - b.text).abs() < 1e-12 && (a.text - b.audio).abs() < 1e-12);
        prop_assert!((clap_loss(&m).unwrap() - clap_loss(&m.transpose()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn relabeling_classes_leaves_losses(c in classes(4, 3, 5), text in classes(1, 4, 5), tau in 0.0..4.0f64) {
        let text = &text[0];
        let perm = [2usize, 0, 3, 1];
        let pc: Vec<_> = perm.iter().map(|&k| c[k].clone()).collect();
        let pt: Vec<_> = perm.iter().map(|&k| text[k].clone()).collect();
        let b = DwdBatch::from_nested(&c).unwrap();
        let pb = DwdBatch::from_nested(&pc).unwrap();
        prop_assert!((dwd_loss(&b).unwrap().total() - dwd_loss(&pb).unwrap().total()).abs() < 1e-12);
        let t = EmbeddingBatch::from_rows(text.clone()).unwrap();
        let pt = EmbeddingBatch::from_rows(pt).unwrap();
        let l = clap_loss_multi(&t, &b, tau).unwrap();
        let pl = clap_loss_multi(&pt, &pb, tau).unwrap();
        prop_assert!((l - pl).abs() < 1e-12);
    }

    #[test]
    fn dominant_own_centroid_gives_nonnegative_terms(c in classes(3, 2, 4)) {
        let b = DwdBatch::from_nested(&c).unwrap();
        let s = dwd_similarities(&b, &dwd_centroids(&b).unwrap()).unwrap();
        let own_is_max = (0..3).all(|j| (0..2).all(|i| {
            let row = &s[(j * 2 + i) * 3..(j * 2 + i + 1) * 3];
            row.iter().all(|&v| v <= row[j])
        }));
        let l = dwd_loss(&b).unwrap();
        prop_assert!(l.cc >= 0.0, "L_cc is always non-negative: {}", l.cc);
        if own_is_max {
            prop_assert!(l.sm >= 0.0);
        }
    }

    #[test]
    fn clap_is_nonnegative(c in matrix(5)) {
        prop_assert!(clap_loss(&SimilarityMatrix::from_rows(&c, true).unwrap()).unwrap() >= 0.0);
    }
}
