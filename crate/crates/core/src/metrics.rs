//! Evaluation: confusion matrices, micro/macro averaged metrics, run
//! summaries and the pooled two-sample t-test.
//!
//! Per-class counts follow the usual one-vs-rest reading of a multiclass
//! confusion matrix (rows = actual, columns = predicted):
//! `TP = m[c][c]`, `FP = column sum - TP`, `FN = row sum - TP`,
//! `TN = N - TP - FP - FN`.
//!
//! * macro precision / recall: unweighted mean of the per-class values over
//!   classes that occur as an actual or a predicted label;
//! * macro F-score: harmonic mean of macro precision and macro recall;
//! * micro metrics: the same ratios on pooled counts;
//! * average accuracy: mean over classes of `(TP + TN) / N`.

use std::fmt;

use crate::error::{Error, Result};

/// Sample mean and (n - 1) standard deviation. A single value has spread 0.
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Metrics("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            n_classes: n,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.n_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, actual: usize) -> u64 {
        (0..self.n_classes).map(|p| self.get(actual, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.n_classes).map(|a| self.get(a, predicted)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n_classes).map(|r| r.to_vec()).collect()
    }
}

/// Space-separated integer grid, one actual class per line.
impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.counts.chunks(self.n_classes) {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

pub fn confusion(targets: &[usize], outputs: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if targets.len() != outputs.len() {
        return Err(Error::LengthMismatch {
            targets: targets.len(),
            outputs: outputs.len(),
        });
    }
    let mut m = ConfusionMatrix::zeros(n_classes);
    for (&t, &o) in targets.iter().zip(outputs) {
        if t >= n_classes || o >= n_classes {
            return Err(Error::Metrics(format!(
                "label outside 0..{n_classes}: target {t}, output {o}"
            )));
        }
        m.counts[t * n_classes + o] += 1;
    }
    Ok(m)
}

/// All values are percentages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub overall_error: f64,
    pub average_accuracy: f64,
    pub precision_micro: f64,
    pub recall_micro: f64,
    pub fscore_micro: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub fscore_macro: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "overall_error,average_accuracy,precision_micro,recall_micro,fscore_micro,precision_macro,recall_macro,fscore_macro";

    /// Fields rounded to four decimals, in [`Self::CSV_HEADER`] order.
    pub fn csv_fields(&self) -> String {
        [
            self.overall_error,
            self.average_accuracy,
            self.precision_micro,
            self.recall_micro,
            self.fscore_micro,
            self.precision_macro,
            self.recall_macro,
            self.fscore_macro,
        ]
        .iter()
        .map(|v| format!("{v:.4}"))
        .collect::<Vec<_>>()
        .join(",")
    }
}

pub fn harmonic_fscore(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn report(mat: &ConfusionMatrix) -> Result<MetricsReport> {
    let n = mat.total();
    if n == 0 {
        return Err(Error::Metrics("empty confusion matrix".into()));
    }
    let k = mat.n_classes();
    let (mut tp_sum, mut fp_sum, mut fn_sum) = (0u64, 0u64, 0u64);
    let (mut prec_sum, mut rec_sum, mut acc_sum) = (0.0, 0.0, 0.0);
    let mut active = 0usize;
    for c in 0..k {
        let tp = mat.get(c, c);
        let fp = mat.col_sum(c) - tp;
        let fn_ = mat.row_sum(c) - tp;
        let tn = n - tp - fp - fn_;
        tp_sum += tp;
        fp_sum += fp;
        fn_sum += fn_;
        acc_sum += (tp + tn) as f64 / n as f64;
        if tp + fp + fn_ > 0 {
            active += 1;
            prec_sum += ratio(tp, tp + fp);
            rec_sum += ratio(tp, tp + fn_);
        }
    }
    let precision_macro = 100.0 * prec_sum / active as f64;
    let recall_macro = 100.0 * rec_sum / active as f64;
    let precision_micro = 100.0 * ratio(tp_sum, tp_sum + fp_sum);
    let recall_micro = 100.0 * ratio(tp_sum, tp_sum + fn_sum);
    Ok(MetricsReport {
        overall_error: 100.0 * (n - mat.trace()) as f64 / n as f64,
        average_accuracy: 100.0 * acc_sum / k as f64,
        precision_micro,
        recall_micro,
        fscore_micro: harmonic_fscore(precision_micro, recall_micro),
        precision_macro,
        recall_macro,
        fscore_macro: harmonic_fscore(precision_macro, recall_macro),
    })
}

/// Best (minimum), mean and sample standard deviation of run error rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub best: f64,
    pub avg: f64,
    pub stddev: f64,
}

pub fn summarize(errors: &[f64]) -> Result<RunSummary> {
    if errors.is_empty() {
        return Err(Error::Metrics("cannot summarize zero runs".into()));
    }
    let best = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let (avg, stddev) = mean_and_sample_std(errors);
    Ok(RunSummary { best, avg, stddev })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    /// Pooled variance was zero while the means differ.
    pub degenerate: bool,
}

/// Two-sample, equal-variance, two-tailed Student t-test.
pub fn t_test(sample_a: &[f64], sample_b: &[f64]) -> Result<TTest> {
    let (na, nb) = (sample_a.len(), sample_b.len());
    if na < 2 || nb < 2 {
        return Err(Error::Metrics("t-test needs at least two values per sample".into()));
    }
    let (ma, sa) = mean_and_sample_std(sample_a);
    let (mb, sb) = mean_and_sample_std(sample_b);
    let df = (na + nb - 2) as f64;
    let pooled = ((na - 1) as f64 * sa * sa + (nb - 1) as f64 * sb * sb) / df;
    let diff = ma - mb;
    if pooled == 0.0 {
        return Ok(if diff == 0.0 {
            TTest { t: 0.0, df, p_value: 1.0, degenerate: false }
        } else {
            TTest {
                t: diff.signum() * f64::INFINITY,
                df,
                p_value: 0.0,
                degenerate: true,
            }
        });
    }
    let t = diff / (pooled * (1.0 / na as f64 + 1.0 / nb as f64)).sqrt();
    Ok(TTest {
        t,
        df,
        p_value: student_t_two_tailed(t, df),
        degenerate: false,
    })
}

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(0.5 * df, 0.5, x)
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// I_x(a, b) via the modified Lentz continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
