use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stylo_core::classifier::Classifier;
use stylo_core::dataset::{FeatureMatrix, Row};
use stylo_core::error::Error;
use stylo_core::svm::{kernel_matrix, solve_binary, svm_train, Kernel, KernelKind, SvmConfig, SvmModel};

fn clusters(seed: u64, per_class: usize, classes: usize, spread: f64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for label in 0..classes {
        let center: Vec<f64> = (0..3).map(|d| if d == label % 3 { 0.8 } else { 0.2 } + 0.05 * (label / 3) as f64).collect();
        for _ in 0..per_class {
            let features = center.iter().map(|c| (c + rng.random_range(-spread..spread)).clamp(0.0, 1.0)).collect();
            rows.push(Row { features, label });
        }
    }
    FeatureMatrix::new("c", 3, rows).unwrap()
}

#[test]
fn separable_clusters_have_no_training_error() {
    for seed in 0..10 {
        let data = clusters(seed, 12, 3, 0.1);
        let model = svm_train(&data, &SvmConfig::new(KernelKind::Linear, 0.1)).unwrap();
        assert_eq!(model.error_rate(&data).unwrap(), 0.0, "seed {seed}");
    }
}

#[test]
fn nu_bounds_margin_errors_and_support_vectors() {
    for kind in KernelKind::ALL {
        for (seed, nu) in [(1, 0.05), (2, 0.2), (3, 0.5), (4, 0.8), (5, 1.0)] {
            let data = clusters(seed, 15, 4, 0.35);
            let model = svm_train(&data, &SvmConfig::new(kind, nu)).unwrap();
            for m in &model.machines {
                let l = m.n_examples as f64;
                let bounded = m.n_bounded as f64 / l;
                let svs = m.n_sv() as f64 / l;
                assert!(bounded <= nu + 0.05, "{kind} nu {nu}: bounded fraction {bounded}");
                assert!(svs >= nu - 0.05, "{kind} nu {nu}: sv fraction {svs}");
            }
        }
    }
}

#[test]
fn maintained_gradient_matches_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for kind in KernelKind::ALL {
        for shrinking in [false, true] {
            let l = 40;
            let xs: Vec<Vec<f64>> = (0..l).map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
            let y: Vec<i8> = (0..l).map(|i| if i % 3 == 0 { -1 } else { 1 }).collect();
            let kernel = Kernel { kind, gamma: 0.2, coef0: 0.0, degree: 3 };
            let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let k = kernel_matrix(&kernel, &refs);
            let sol = solve_binary(&k, &y, 0.4, 0.001, shrinking);
            for i in 0..l {
                let naive: f64 = (0..l).map(|j| f64::from(y[i]) * f64::from(y[j]) * k[i][j] * sol.alpha[j]).sum();
                assert!((naive - sol.gradient[i]).abs() < 1e-10, "{kind}: {naive} vs {}", sol.gradient[i]);
            }
            let total: f64 = sol.alpha.iter().sum();
            assert!((total - 0.4 * l as f64).abs() < 1e-9);
            let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, &yi)| a * f64::from(yi)).sum();
            assert!(balance.abs() < 1e-9);
            assert!(sol.alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
        }
    }
}

#[test]
fn shrinking_reaches_the_same_predictions() {
    let data = clusters(8, 15, 5, 0.3);
    for kind in KernelKind::ALL {
        let plain = svm_train(&data, &SvmConfig::new(kind, 0.3)).unwrap();
        let shrunk = svm_train(&data, &SvmConfig { shrinking: true, ..SvmConfig::new(kind, 0.3) }).unwrap();
        let probe = clusters(9, 5, 5, 0.3);
        let a = plain.predict_all(&probe).unwrap();
        let b = shrunk.predict_all(&probe).unwrap();
        let differ = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        assert!(differ <= 1, "{kind}: {differ} predictions differ");
    }
}

/// Votes computed from the raw support vectors, one kernel call at a time.
fn naive_predict(model: &SvmModel, x: &[f64]) -> usize {
    let mut votes = [0usize; 10];
    for m in &model.machines {
        let mut f = -m.rho;
        for (sv, c) in m.support_vectors.iter().zip(&m.coefficients) {
            let k = match model.kernel.kind {
                KernelKind::Linear => sv.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
                KernelKind::Polynomial => (model.kernel.gamma * sv.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).powi(3),
                KernelKind::Rbf => (-model.kernel.gamma * sv.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).exp(),
                KernelKind::Sigmoid => (model.kernel.gamma * sv.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).tanh(),
            };
            f += c * k;
        }
        if f > 0.0 {
            votes[m.positive] += 1;
        } else {
            votes[m.negative] += 1;
        }
    }
    let best = *votes.iter().max().unwrap();
    votes.iter().position(|&v| v == best).unwrap()
}

#[test]
fn predictions_match_naive_evaluator() {
    let data = clusters(11, 10, 6, 0.3);
    let probe = clusters(12, 8, 6, 0.4);
    for kind in KernelKind::ALL {
        let model = svm_train(&data, &SvmConfig::new(kind, 0.25)).unwrap();
        for r in &probe.rows {
            assert_eq!(model.predict(&r.features).unwrap(), naive_predict(&model, &r.features));
        }
    }
}

#[test]
fn kernel_matrices_are_symmetric_with_unit_rbf_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<Vec<f64>> = (0..25).map(|_| (0..7).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    for kind in KernelKind::ALL {
        let kernel = Kernel { kind, gamma: 1.0 / 7.0, coef0: 0.0, degree: 3 };
        let k = kernel_matrix(&kernel, &refs);
        for i in 0..25 {
            for j in 0..25 {
                assert_eq!(k[i][j].to_bits(), kernel.eval(refs[j], refs[i]).to_bits());
            }
            if kind == KernelKind::Rbf {
                assert_eq!(k[i][i], 1.0);
            }
        }
    }
}

#[test]
fn appending_a_zero_feature_keeps_predictions() {
    let data = clusters(21, 10, 4, 0.3);
    let widen = |m: &FeatureMatrix| {
        let rows = m
            .rows
            .iter()
            .map(|r| Row { features: r.features.iter().copied().chain([0.0]).collect(), label: r.label })
            .collect();
        FeatureMatrix::new("w", m.n_features + 1, rows).unwrap()
    };
    let wide = widen(&data);
    let probe = clusters(22, 6, 4, 0.4);
    let wide_probe = widen(&probe);
    for kind in KernelKind::ALL {
        let narrow = svm_train(&data, &SvmConfig::new(kind, 0.3)).unwrap();
        let gamma = 1.0 / data.n_features as f64;
        let widened = svm_train(&wide, &SvmConfig { gamma: Some(gamma), ..SvmConfig::new(kind, 0.3) }).unwrap();
        assert_eq!(narrow.predict_all(&probe).unwrap(), widened.predict_all(&wide_probe).unwrap(), "{kind}");
    }
}

#[test]
fn infeasible_nu_names_the_pair() {
    let mut data = clusters(1, 10, 3, 0.1);
    // class 2 keeps only two examples: max nu for (0, 2) is 2*2/12
    let mut seen = 0;
    data.rows.retain(|r| {
        if r.label == 2 {
            seen += 1;
            seen <= 2
        } else {
            true
        }
    });
    match svm_train(&data, &SvmConfig::new(KernelKind::Linear, 0.5)) {
        Err(Error::InfeasibleNu { a, b, nu, max_nu }) => {
            assert_eq!((a, b), (0, 2));
            assert_eq!(nu, 0.5);
            assert!((max_nu - 4.0 / 12.0).abs() < 1e-15);
        }
        other => panic!("{other:?}"),
    }
    assert!(svm_train(&data, &SvmConfig::new(KernelKind::Linear, 0.3)).is_ok());
}

#[test]
fn bad_parameters_are_rejected() {
    let data = clusters(1, 5, 2, 0.1);
    for nu in [0.0, -0.1, 1.5, f64::NAN] {
        assert!(svm_train(&data, &SvmConfig::new(KernelKind::Rbf, nu)).is_err());
    }
    let one = clusters(1, 5, 1, 0.1);
    assert!(svm_train(&one, &SvmConfig::new(KernelKind::Rbf, 0.5)).is_err());
    let model = svm_train(&data, &SvmConfig::new(KernelKind::Rbf, 0.5)).unwrap();
    assert!(matches!(model.predict(&[0.0; 4]), Err(Error::Dimension { expected: 3, actual: 4 })));
}

#[test]
fn binary_machine_follows_the_decision_sign() {
    let data = clusters(3, 10, 2, 0.1);
    let model = svm_train(&data, &SvmConfig::new(KernelKind::Linear, 0.2)).unwrap();
    assert_eq!(model.machines.len(), 1);
    let m = &model.machines[0];
    for r in &data.rows {
        let f = m.decision_value(&model.kernel, &r.features);
        assert_eq!(model.predict(&r.features).unwrap(), if f > 0.0 { m.positive } else { m.negative });
    }
}

/// Reference values from an independent libsvm-based nu-SVC run on the same
/// fixture (nu 0.5, gamma 1/3, coef0 0, degree 3), both solved to tolerance 1e-9.
/// That solver caches kernel values in single precision, hence the 1e-4
/// relative tolerance below.
struct Reference {
    kind: KernelKind,
    rho: [f64; 3],
    decisions: [f64; 12],
    labels: [usize; 12],
}

const REFERENCE: [Reference; 4] = [
    Reference {
        kind: KernelKind::Linear,
        rho: [1.2173901790168915, 0.10869579862313432, 0.1382410813214081],
        decisions: [
            -9.452684780414538, -4.226342681833558, -5.493761049428423, 0.5473162533814997,
            0.7736574407782801, 1.8536552914960567, 0.5473130152149115, 0.773657510524211,
            3.2720510093837456, 0.5473134416507865, 0.7736573757135613, 2.7071481693749915,
        ],
        labels: [2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0],
    },
    Reference {
        kind: KernelKind::Polynomial,
        rho: [0.5661602267663323, 0.6333555511223883, 0.43790906496520904],
        decisions: [
            -3.8037228346184353, -5.133016949252912, -12.021885121970657, 2.614236406984005,
            4.071068468473889, 6.305890343416551, 1.0172486787602018, 3.8527032870461113,
            13.785572647973586, 0.26153496798041564, 0.6322462390246859, 4.88624974836806,
        ],
        labels: [2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0],
    },
    Reference {
        kind: KernelKind::Rbf,
        rho: [-0.5117201083964223, 0.12265911578816828, -0.19715368125378283],
        decisions: [
            -7.282545505542575, -3.7589163778160724, -5.247436674822113, 0.5802916407504964,
            0.7201500584252425, 1.749894473660527, 0.43105323581619837, 0.6760297613306097,
            2.8888462131008787, 0.45233986207170085, 0.7138760057707187, 2.644976129385772,
        ],
        labels: [2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0],
    },
    Reference {
        kind: KernelKind::Sigmoid,
        rho: [1.2561236581252428, 0.15090085928926722, 0.16233820194434087],
        decisions: [
            -9.492954880085087, -4.164377926264715, -5.554867008549187, 0.5333126814095843,
            0.7649803305096375, 1.8775495846080719, 0.5826564567587953, 0.8030805280822767,
            3.228543393791307, 0.5442220886971088, 0.7941679723318026, 2.723248911943186,
        ],
        labels: [2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0],
    },
];

fn reference_fixture() -> (FeatureMatrix, Vec<Vec<f64>>) {
    let rows = (0..30)
        .map(|i| Row {
            features: (0..3)
                .map(|d| ((i * 37 + d * 11) % 23) as f64 / 23.0 * 0.5 + if d == i % 3 { 0.2 } else { 0.0 })
                .collect(),
            label: i % 3,
        })
        .collect();
    let probes = (0..12).map(|j| (0..3).map(|d| ((j * 13 + d * 7) % 17) as f64 / 17.0).collect()).collect();
    (FeatureMatrix::new("ref", 3, rows).unwrap(), probes)
}

/// Machines with a free multiplier on each side pin down r and rho and must match closely.
/// Otherwise at least one side uses the midpoint of an interval and
/// different optimal duals may pick different points, so only the sign of the
/// decision value is compared.
#[test]
fn agrees_with_reference_solver() {
    let (data, probes) = reference_fixture();
    let mut pinned = 0;
    for r in &REFERENCE {
        let cfg = SvmConfig { epsilon: 1e-9, ..SvmConfig::new(r.kind, 0.5) };
        let model = svm_train(&data, &cfg).unwrap();
        for (k, (m, rho)) in model.machines.iter().zip(r.rho).enumerate() {
            let has_free = m.n_free[0] > 0 && m.n_free[1] > 0;
            if has_free {
                pinned += 1;
                assert!((m.rho - rho).abs() < 1e-4 * rho.abs().max(1.0), "{}: machine {k} rho {} vs {rho}", r.kind, m.rho);
            }
            for (p, x) in probes.iter().take(4).enumerate() {
                let want = r.decisions[p * 3 + k];
                let got = m.decision_value(&model.kernel, x);
                if has_free {
                    assert!((got - want).abs() < 1e-4 * want.abs().max(1.0), "{}: probe {p} machine {k}: {got} vs {want}", r.kind);
                } else {
                    assert_eq!(got > 0.0, want > 0.0, "{}: probe {p} machine {k}", r.kind);
                }
            }
        }
        let got: Vec<usize> = probes.iter().map(|x| model.predict(x).unwrap()).collect();
        assert_eq!(got, r.labels, "{}", r.kind);
    }
    assert!(pinned >= 5, "only {pinned} machines had free multipliers");
}
