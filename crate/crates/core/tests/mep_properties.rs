use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stylo_core::classifier::Classifier;
use stylo_core::dataset::{FeatureMatrix, Row};
use stylo_core::mep::{crossover, mep_evolve, mutate, random_chromosome, Chromosome, Gene, MepModel, MepParams, Op};

/// Evaluates gene `i` as an expression tree, recursing through its arguments.
fn recursive(c: &Chromosome, i: usize, x: &[f64]) -> f64 {
    let v = match c.genes[i] {
        Gene::Variable(f) => x[f],
        Gene::Constant(k) => c.constants[k],
        Gene::Function { op, args } => {
            let a: Vec<f64> = args[..op.arity()].iter().map(|&j| recursive(c, j, x)).collect();
            match op {
                Op::Add => a[0] + a[1],
                Op::Sub => a[0] - a[1],
                Op::Mul => a[0] * a[1],
                Op::Div => {
                    if a[1].abs() < 1e-12 {
                        1.0
                    } else {
                        a[0] / a[1]
                    }
                }
                Op::IfNeg => {
                    if a[0] < 0.0 {
                        a[1]
                    } else {
                        a[2]
                    }
                }
                Op::IfLess => {
                    if a[0] < a[1] {
                        a[2]
                    } else {
                        a[3]
                    }
                }
            }
        }
    };
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-f64::MAX, f64::MAX)
    }
}

fn small_params() -> MepParams {
    MepParams { chromosome_length: 30, ..MepParams::default() }
}

#[test]
fn evaluation_matches_recursive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let p = small_params();
    for _ in 0..100 {
        let c = random_chromosome(&mut rng, &p, 6);
        c.validate(6).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
            let fast = c.eval(&x);
            for (i, v) in fast.iter().enumerate() {
                assert_eq!(v.to_bits(), recursive(&c, i, &x).to_bits(), "gene {i}");
                assert!(v.is_finite());
            }
        }
    }
}

#[test]
fn variation_preserves_the_reference_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = MepParams { mutation_probability: 0.3, ..MepParams::default() };
    for _ in 0..200 {
        let a = random_chromosome(&mut rng, &p, 4);
        let b = random_chromosome(&mut rng, &p, 4);
        let (mut x, mut y) = crossover(&mut rng, &a, &b);
        mutate(&mut rng, &mut x, &p, 4);
        mutate(&mut rng, &mut y, &p, 4);
        for c in [&x, &y] {
            c.validate(4).unwrap();
            assert_eq!(c.genes.len(), 200);
            assert_eq!(c.constants.len(), 5);
            assert!(matches!(c.genes[0], Gene::Variable(_) | Gene::Constant(_)));
        }
    }
}

fn blobs(seed: u64, per_class: usize, classes: usize) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for label in 0..classes {
        for _ in 0..per_class {
            let mut features: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..0.3)).collect();
            features[label % 4] += 0.6;
            rows.push(Row { features, label });
        }
    }
    FeatureMatrix::new("blobs", 4, rows).unwrap()
}

fn tiny_run() -> MepParams {
    MepParams { subpopulations: 3, subpopulation_size: 20, chromosome_length: 30, generations: 15, ..MepParams::default() }
}

#[test]
fn equal_seeds_give_equal_runs() {
    let train = blobs(1, 6, 4);
    let val = blobs(2, 3, 4);
    let a = mep_evolve(&train, &val, &tiny_run(), 42).unwrap();
    let b = mep_evolve(&train, &val, &tiny_run(), 42).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.best_fitness_history, b.best_fitness_history);
}

#[test]
fn returned_model_is_no_worse_than_initial_best() {
    let train = blobs(3, 6, 4);
    let val = blobs(4, 3, 4);
    for seed in 0..5 {
        let run = mep_evolve(&train, &val, &tiny_run(), seed).unwrap();
        assert!(run.train_fitness <= run.initial_best_fitness);
        assert!(run.best_fitness_history.windows(2).all(|w| w[1] <= w[0]));
        // fitness is a brute-force count of training mistakes
        let wrong = train.rows.iter().filter(|r| run.model.predict(&r.features).unwrap() != r.label).count();
        assert_eq!(wrong, run.train_fitness);
        assert_eq!(run.model.fitness(&train), wrong);
    }
}

#[test]
fn separable_blobs_are_learned() {
    let train = blobs(7, 8, 4);
    let params = MepParams { generations: 40, ..tiny_run() };
    let run = mep_evolve(&train, &train, &params, 1).unwrap();
    assert!(run.model.error_rate(&train).unwrap() <= 25.0, "{}", run.train_fitness);
}

#[test]
fn text_round_trip() {
    let train = blobs(9, 4, 3);
    let run = mep_evolve(&train, &train, &tiny_run(), 3).unwrap();
    let text = run.model.to_text();
    let back = MepModel::parse(&text).unwrap();
    assert_eq!(back.class_map, run.model.class_map);
    assert_eq!(back.chromosome.genes, run.model.chromosome.genes);
    let bits = |c: &[f64]| c.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.chromosome.constants), bits(&run.model.chromosome.constants));
    let truncated = text.rsplit_once(' ').unwrap().0.to_string() + "\n";
    assert!(MepModel::parse(&truncated).is_err());
}

#[test]
fn forward_reference_is_rejected() {
    let text = "mep 1 11\nconstants\n0 var 0\n1 add 0 2\n2 var 0\n3 var 0\n4 var 0\n5 var 0\n6 var 0\n7 var 0\n8 var 0\n9 var 0\n10 var 0\nmap 0 1 2 3 4 5 6 7 8 9\n";
    assert!(MepModel::parse(text).is_err());
    assert!(MepModel::parse(&text.replace("1 add 0 2", "1 add 0 0")).is_ok());
}
