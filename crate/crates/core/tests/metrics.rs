mod common;

use proptest::prelude::*;
use vocab_forge::metrics::{evaluate_run, macro_f1, weighted_f1, LabelSets, Metric};

const LABELS: [&str; 4] = ["A", "B", "C", "D"];

fn instance() -> impl Strategy<Value = (Vec<&'static str>, Vec<&'static str>)> {
    (1usize..30).prop_flat_map(|n| {
        let label = prop::sample::select(&LABELS[..]);
        (prop::collection::vec(label.clone(), n), prop::collection::vec(label, n))
    })
}

proptest! {
    #[test]
    fn matches_confusion_matrix_oracle((t, p) in instance()) {
        let sets = LabelSets::new(&t, &p, &LABELS).unwrap();
        let (w, m) = common::brute_force_f1(&t, &p, &LABELS);
        prop_assert!((weighted_f1(&sets) - w).abs() < 1e-12);
        prop_assert!((macro_f1(&sets) - m).abs() < 1e-12);
    }

    #[test]
    fn scores_lie_in_unit_interval((t, p) in instance()) {
        let sets = LabelSets::new(&t, &p, &LABELS).unwrap();
        for s in [weighted_f1(&sets), macro_f1(&sets)] {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn invariant_under_example_permutation((t, p) in instance(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut order: Vec<usize> = (0..t.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let t2: Vec<&str> = order.iter().map(|&i| t[i]).collect();
        let p2: Vec<&str> = order.iter().map(|&i| p[i]).collect();
        let a = LabelSets::new(&t, &p, &LABELS).unwrap();
        let b = LabelSets::new(&t2, &p2, &LABELS).unwrap();
        prop_assert!((weighted_f1(&a) - weighted_f1(&b)).abs() < 1e-12);
        prop_assert!((macro_f1(&a) - macro_f1(&b)).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_scores_one(t in prop::collection::vec(prop::sample::select(&LABELS[..]), 1..20)) {
        let sets = LabelSets::from_labels(&t, &t).unwrap();
        prop_assert_eq!(weighted_f1(&sets), 1.0);
        prop_assert_eq!(macro_f1(&sets), 1.0);
    }
}

#[test]
fn run_averages_languages() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("zh.tsv"), "A\tA\nA\tB\nB\tB\n").unwrap();
    std::fs::write(dir.path().join("bo.tsv"), "A\tA\nB\tB\n").unwrap();
    let files = vocab_forge::metrics::prediction_files_in(dir.path()).unwrap();
    let universe = vec!["A".to_string(), "B".to_string()];
    let report = evaluate_run(&files, &universe, Metric::Weighted).unwrap();
    assert!((report.per_language["zh"] - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(report.per_language["bo"], 1.0);
    assert!((report.average - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    assert!(report.to_json().contains("\"per_class\""));
}

#[test]
fn malformed_prediction_line_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ug.tsv");
    std::fs::write(&path, "A\tA\nA B\n").unwrap();
    let err = vocab_forge::metrics::read_predictions(&path, &["A".into(), "B".into()]).unwrap_err();
    assert!(err.to_string().contains(":2:"), "{err}");
    std::fs::write(&path, "A\tZ\n").unwrap();
    assert!(vocab_forge::metrics::read_predictions(&path, &["A".into()]).is_err());
}
