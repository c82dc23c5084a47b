use stylo_core::metrics::{harmonic_fscore, report, t_test, ConfusionMatrix};

fn published_matrix() -> ConfusionMatrix {
    let rows: Vec<Vec<u64>> = vec![
        vec![6, 0, 0, 0, 0, 0, 0, 0, 0, 1],
        vec![0, 4, 0, 3, 1, 0, 1, 0, 0, 2],
        vec![0, 0, 6, 0, 0, 0, 0, 0, 0, 0],
        vec![0, 1, 1, 6, 0, 0, 0, 0, 0, 0],
        vec![1, 1, 0, 0, 6, 0, 0, 0, 1, 1],
        vec![0, 0, 0, 0, 0, 10, 0, 0, 0, 0],
        vec![0, 0, 0, 0, 0, 0, 8, 0, 0, 0],
        vec![0, 1, 0, 0, 1, 0, 0, 8, 0, 0],
        vec![0, 1, 0, 0, 0, 0, 1, 0, 12, 1],
        vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 12],
    ];
    ConfusionMatrix::from_rows(&rows).unwrap()
}

#[test]
fn published_confusion_matrix_metrics() {
    let m = published_matrix();
    assert_eq!((m.total(), m.trace()), (98, 78));
    let r = report(&m).unwrap();
    assert!((r.overall_error - 2000.0 / 98.0).abs() < 1e-9);
    assert!((r.precision_macro - 79.93978).abs() < 1e-4, "{}", r.precision_macro);
    assert!((r.average_accuracy - 95.918).abs() < 1e-3, "{}", r.average_accuracy);
    // the table's macro precision and recall combined by the harmonic mean
    assert!((harmonic_fscore(79.9398, 96.8525) - 87.587).abs() < 1e-3);
    // micro precision equals micro recall equals accuracy for single-label data
    assert!((r.precision_micro - 78.0 / 98.0 * 100.0).abs() < 1e-9);
    assert!((r.recall_micro - r.precision_micro).abs() < 1e-12);
}

// p-values below were computed with 22-digit arithmetic (mpmath).
#[test]
fn t_test_matches_high_precision_values() {
    let cases: [(&[f64], &[f64], f64); 3] = [
        (&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0001], 0.9999693821436881),
        (&[2.1, 3.4, 1.9, 5.6, 4.4], &[6.1, 5.2, 7.7, 6.9], 0.014021941067524037),
        (&[10.0, 12.0, 9.0, 11.0, 13.0, 10.0, 12.0], &[10.5, 11.0, 9.5, 12.0, 10.0], 0.5975669102095756),
    ];
    for (a, b, p) in cases {
        let got = t_test(a, b).unwrap().p_value;
        assert!((got - p).abs() < 1e-10, "{got} vs {p}");
    }
    let same = [4.0, 5.5, 6.0, 7.25];
    assert_eq!(t_test(&same, &same).unwrap().p_value, 1.0);
}

/// Thirty evenly spaced values rescaled to the requested mean and sample sd.
pub fn sample_with(mean: f64, sd: f64) -> Vec<f64> {
    let z: Vec<f64> = (0..30).map(|i| i as f64 - 14.5).collect();
    let s = (z.iter().map(|v| v * v).sum::<f64>() / 29.0).sqrt();
    z.iter().map(|v| mean + sd * v / s).collect()
}

#[test]
fn t_test_on_samples_shaped_like_the_ann_and_mep_battery() {
    let ann = sample_with(36.93, 4.80);
    let mep = sample_with(34.89, 4.58);
    let p = t_test(&ann, &mep).unwrap().p_value;
    // the published value is 0.107; the summary statistics alone give 0.0975
    assert!((p - 0.0975).abs() < 5e-4, "{p}");
    assert!((p - 0.107).abs() <= 0.01, "{p}");
}
