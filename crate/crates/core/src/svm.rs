//! ν-SVC with one-vs-one voting.
//!
//! Each class pair is solved as a binary ν-SVC dual with C = 1:
//!
//! ```text
//! min 1/2 a'Qa   s.t.  y'a = 0,  e'a = nu * l,  0 <= a_i <= 1
//! ```
//!
//! where `Q_ij = y_i y_j K(x_i, x_j)`. The two equality constraints mean a
//! working pair must come from the same side, so the solver keeps separate
//! maximal violating pairs for the positive and negative examples. The result
//! is rescaled by `1/r` into the usual decision function
//! `f(x) = sum_i coef_i K(x_i, x) - rho`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::classifier::Classifier;
use crate::dataset::{FeatureMatrix, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Linear,
    Polynomial,
    Rbf,
    Sigmoid,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [KernelKind::Linear, KernelKind::Polynomial, KernelKind::Rbf, KernelKind::Sigmoid];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Polynomial => "poly",
            KernelKind::Rbf => "rbf",
            KernelKind::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelKind::Linear),
            "poly" | "polynomial" => Ok(KernelKind::Polynomial),
            "rbf" => Ok(KernelKind::Rbf),
            "sigmoid" => Ok(KernelKind::Sigmoid),
            other => Err(Error::InvalidParameter(format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
    pub coef0: f64,
    pub degree: i32,
}

impl Kernel {
    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(u, v),
            KernelKind::Polynomial => (self.gamma * dot(u, v) + self.coef0).powi(self.degree),
            KernelKind::Rbf => {
                let d: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * d).exp()
            }
            KernelKind::Sigmoid => (self.gamma * dot(u, v) + self.coef0).tanh(),
        }
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Full kernel matrix of `xs`.
pub fn kernel_matrix(kernel: &Kernel, xs: &[&[f64]]) -> Vec<Vec<f64>> {
    let l = xs.len();
    let mut k = vec![vec![0.0; l]; l];
    for i in 0..l {
        for j in i..l {
            let v = kernel.eval(xs[i], xs[j]);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub kernel: KernelKind,
    pub nu: f64,
    /// `None` means `1 / n_features`.
    pub gamma: Option<f64>,
    pub coef0: f64,
    pub degree: i32,
    pub epsilon: f64,
    pub shrinking: bool,
}

impl SvmConfig {
    pub fn new(kernel: KernelKind, nu: f64) -> Self {
        SvmConfig {
            kernel,
            nu,
            gamma: None,
            coef0: 0.0,
            degree: 3,
            epsilon: 0.001,
            shrinking: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidParameter(format!("nu {} outside (0, 1]", self.nu)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon {} must be positive", self.epsilon)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter(format!("gamma {g} must be positive")));
            }
        }
        Ok(())
    }

    fn resolve(&self, n_features: usize) -> Kernel {
        Kernel {
            kind: self.kernel,
            gamma: self.gamma.unwrap_or(1.0 / n_features.max(1) as f64),
            coef0: self.coef0,
            degree: self.degree,
        }
    }
}

/// The ν grid swept by the experiment runner: 0.001..0.009, 0.01..0.09, 0.1..1.0.
pub fn nu_grid() -> Vec<f64> {
    let mut g = Vec::with_capacity(28);
    for scale in [1000.0, 100.0] {
        g.extend((1..=9).map(|i| f64::from(i) / scale));
    }
    g.extend((1..=10).map(|i| f64::from(i) / 10.0));
    g
}

/// Largest feasible ν for a pair with `n1` and `n2` examples.
pub fn max_feasible_nu(n1: usize, n2: usize) -> f64 {
    2.0 * n1.min(n2) as f64 / (n1 + n2) as f64
}

const TAU: f64 = 1e-12;

/// Raw solution of one binary dual, before rescaling.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    /// Gradient `Q alpha`, maintained incrementally by the solver.
    pub gradient: Vec<f64>,
    pub r: f64,
    pub rho: f64,
    pub iterations: usize,
}

struct Solver<'a> {
    q: &'a [Vec<f64>],
    y: &'a [i8],
    alpha: Vec<f64>,
    g: Vec<f64>,
    active: Vec<usize>,
}

impl Solver<'_> {
    fn upper(&self, i: usize) -> bool {
        self.alpha[i] >= 1.0
    }

    fn lower(&self, i: usize) -> bool {
        self.alpha[i] <= 0.0
    }

    /// Maximal violating pair among the active variables, or `None` when the
    /// violation is below `eps`.
    fn select(&self, eps: f64) -> Option<(usize, usize)> {
        // (value, index) for: -G over non-upper and G over non-lower, per side
        let mut up = [(f64::NEG_INFINITY, usize::MAX); 2];
        let mut low = [(f64::NEG_INFINITY, usize::MAX); 2];
        for &t in &self.active {
            let side = usize::from(self.y[t] < 0);
            if !self.upper(t) && -self.g[t] >= up[side].0 {
                up[side] = (-self.g[t], t);
            }
            if !self.lower(t) && self.g[t] >= low[side].0 {
                low[side] = (self.g[t], t);
            }
        }
        let gap = |s: usize| up[s].0 + low[s].0;
        let side = if gap(0) >= gap(1) { 0 } else { 1 };
        if !(gap(side) >= eps) || up[side].1 == usize::MAX || low[side].1 == usize::MAX {
            return None;
        }
        Some((up[side].1, low[side].1))
    }

    fn update(&mut self, i: usize, j: usize) {
        let (ci, cj) = (1.0, 1.0);
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let q = self.q;
        if self.y[i] != self.y[j] {
            let mut quad = q[i][i] + q[j][j] + 2.0 * q[i][j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-self.g[i] - self.g[j]) / quad;
            let diff = self.alpha[i] - self.alpha[j];
            self.alpha[i] += delta;
            self.alpha[j] += delta;
            if diff > 0.0 {
                if self.alpha[j] < 0.0 {
                    self.alpha[j] = 0.0;
                    self.alpha[i] = diff;
                }
            } else if self.alpha[i] < 0.0 {
                self.alpha[i] = 0.0;
                self.alpha[j] = -diff;
            }
            if diff > ci - cj {
                if self.alpha[i] > ci {
                    self.alpha[i] = ci;
                    self.alpha[j] = ci - diff;
                }
            } else if self.alpha[j] > cj {
                self.alpha[j] = cj;
                self.alpha[i] = cj + diff;
            }
        } else {
            let mut quad = q[i][i] + q[j][j] - 2.0 * q[i][j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (self.g[i] - self.g[j]) / quad;
            let sum = self.alpha[i] + self.alpha[j];
            self.alpha[i] -= delta;
            self.alpha[j] += delta;
            if sum > ci {
                if self.alpha[i] > ci {
                    self.alpha[i] = ci;
                    self.alpha[j] = sum - ci;
                }
            } else if self.alpha[j] < 0.0 {
                self.alpha[j] = 0.0;
                self.alpha[i] = sum;
            }
            if sum > cj {
                if self.alpha[j] > cj {
                    self.alpha[j] = cj;
                    self.alpha[i] = sum - cj;
                }
            } else if self.alpha[i] < 0.0 {
                self.alpha[i] = 0.0;
                self.alpha[j] = sum;
            }
        }
        let (di, dj) = (self.alpha[i] - old_i, self.alpha[j] - old_j);
        for (k, g) in self.g.iter_mut().enumerate() {
            *g += q[i][k] * di + q[j][k] * dj;
        }
    }

    /// Drops bounded variables that cannot take part in a violating pair.
    fn shrink(&mut self) {
        let mut gmax = [f64::NEG_INFINITY; 4];
        for &i in &self.active {
            let pos = self.y[i] > 0;
            if !self.upper(i) {
                let k = if pos { 0 } else { 3 };
                gmax[k] = gmax[k].max(-self.g[i]);
            }
            if !self.lower(i) {
                let k = if pos { 1 } else { 2 };
                gmax[k] = gmax[k].max(self.g[i]);
            }
        }
        let keep = |s: &Self, i: usize| {
            let pos = s.y[i] > 0;
            if s.upper(i) {
                !(-s.g[i] > if pos { gmax[0] } else { gmax[3] })
            } else if s.lower(i) {
                !(s.g[i] > if pos { gmax[1] } else { gmax[2] })
            } else {
                true
            }
        };
        let active: Vec<usize> = self.active.iter().copied().filter(|&i| keep(self, i)).collect();
        self.active = active;
    }

    fn rho_and_r(&self) -> (f64, f64) {
        let mut free = [(0usize, 0.0); 2];
        let mut ub = [f64::INFINITY; 2];
        let mut lb = [f64::NEG_INFINITY; 2];
        for i in 0..self.alpha.len() {
            let s = usize::from(self.y[i] < 0);
            if self.upper(i) {
                lb[s] = lb[s].max(self.g[i]);
            } else if self.lower(i) {
                ub[s] = ub[s].min(self.g[i]);
            } else {
                free[s].0 += 1;
                free[s].1 += self.g[i];
            }
        }
        let side = |s: usize| {
            if free[s].0 > 0 {
                free[s].1 / free[s].0 as f64
            } else {
                (ub[s] + lb[s]) / 2.0
            }
        };
        let (r1, r2) = (side(0), side(1));
        ((r1 - r2) / 2.0, (r1 + r2) / 2.0)
    }
}

/// Solves the binary ν-SVC dual for labels `y` in {+1, -1} given the kernel
/// matrix.
pub fn solve_binary(k: &[Vec<f64>], y: &[i8], nu: f64, eps: f64, shrinking: bool) -> BinarySolution {
    let l = y.len();
    let q: Vec<Vec<f64>> = (0..l)
        .map(|i| (0..l).map(|j| f64::from(y[i]) * f64::from(y[j]) * k[i][j]).collect())
        .collect();
    let mut sum_pos = nu * l as f64 / 2.0;
    let mut sum_neg = sum_pos;
    let alpha: Vec<f64> = y
        .iter()
        .map(|&yi| {
            let budget = if yi > 0 { &mut sum_pos } else { &mut sum_neg };
            let a = budget.min(1.0);
            *budget -= a;
            a
        })
        .collect();
    let g: Vec<f64> = (0..l).map(|i| (0..l).map(|j| q[i][j] * alpha[j]).sum()).collect();
    let mut s = Solver { q: &q, y, alpha, g, active: (0..l).collect() };

    let max_iter = 10_000_000usize.max(100 * l);
    let shrink_every = l.clamp(1, 1000);
    let mut counter = shrink_every;
    let mut iterations = 0;
    while iterations < max_iter {
        if shrinking {
            counter -= 1;
            if counter == 0 {
                counter = shrink_every;
                s.shrink();
            }
        }
        let pair = match s.select(eps) {
            Some(p) => p,
            None if s.active.len() < l => {
                // the gradient is always complete, so unshrinking is just a reset
                s.active = (0..l).collect();
                counter = 1;
                match s.select(eps) {
                    Some(p) => p,
                    None => break,
                }
            }
            None => break,
        };
        iterations += 1;
        s.update(pair.0, pair.1);
    }
    if iterations >= max_iter {
        log::warn!("svm solver hit the iteration limit ({max_iter})");
    }
    let (rho, r) = s.rho_and_r();
    BinarySolution { alpha: s.alpha, gradient: s.g, r, rho, iterations }
}

/// Decision function separating `positive` (f > 0) from `negative`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMachine {
    pub positive: usize,
    pub negative: usize,
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub rho: f64,
    /// Training examples of the pair.
    pub n_examples: usize,
    /// Examples whose multiplier sits at the upper bound.
    pub n_bounded: usize,
    /// Support vectors strictly inside the bounds, positive side then negative.
    pub n_free: [usize; 2],
    pub iterations: usize,
}

impl BinaryMachine {
    pub fn n_sv(&self) -> usize {
        self.support_vectors.len()
    }

    pub fn decision_value(&self, kernel: &Kernel, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * kernel.eval(sv, x))
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub classes: Vec<usize>,
    pub machines: Vec<BinaryMachine>,
    pub n_features: usize,
}

fn train_pair(data: &FeatureMatrix, a: usize, b: usize, kernel: &Kernel, cfg: &SvmConfig) -> BinaryMachine {
    let rows: Vec<&[f64]> = data
        .rows
        .iter()
        .filter(|r| r.label == a || r.label == b)
        .map(|r| r.features.as_slice())
        .collect();
    let y: Vec<i8> = data
        .rows
        .iter()
        .filter(|r| r.label == a || r.label == b)
        .map(|r| if r.label == a { 1 } else { -1 })
        .collect();
    let k = kernel_matrix(kernel, &rows);
    let sol = solve_binary(&k, &y, cfg.nu, cfg.epsilon, cfg.shrinking);
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for (i, &alpha) in sol.alpha.iter().enumerate() {
        if alpha > 0.0 {
            support_vectors.push(rows[i].to_vec());
            coefficients.push(alpha * f64::from(y[i]) / sol.r);
        }
    }
    BinaryMachine {
        positive: a,
        negative: b,
        support_vectors,
        coefficients,
        rho: sol.rho / sol.r,
        n_examples: y.len(),
        n_bounded: sol.alpha.iter().filter(|&&a| a >= 1.0).count(),
        n_free: [1, -1].map(|side| {
            sol.alpha.iter().zip(&y).filter(|&(&a, &yi)| yi == side && a > 0.0 && a < 1.0).count()
        }),
        iterations: sol.iterations,
    }
}

pub fn svm_train(train: &FeatureMatrix, cfg: &SvmConfig) -> Result<SvmModel> {
    cfg.validate()?;
    let mut counts = [0usize; NUM_CLASSES];
    for r in &train.rows {
        counts[r.label] += 1;
    }
    let classes: Vec<usize> = (0..NUM_CLASSES).filter(|&c| counts[c] > 0).collect();
    if classes.len() < 2 {
        return Err(Error::InvalidParameter("need at least two classes".into()));
    }
    let mut pairs = Vec::new();
    for (i, &a) in classes.iter().enumerate() {
        for &b in &classes[i + 1..] {
            let max_nu = max_feasible_nu(counts[a], counts[b]);
            if cfg.nu > max_nu {
                return Err(Error::InfeasibleNu { a, b, nu: cfg.nu, max_nu });
            }
            pairs.push((a, b));
        }
    }
    let kernel = cfg.resolve(train.n_features);
    let machines = pairs
        .par_iter()
        .map(|&(a, b)| train_pair(train, a, b, &kernel, cfg))
        .collect();
    Ok(SvmModel { kernel, classes, machines, n_features: train.n_features })
}

impl SvmModel {
    /// Votes per label.
    pub fn votes(&self, x: &[f64]) -> Result<[usize; NUM_CLASSES]> {
        self.check_dimension(x)?;
        let mut votes = [0; NUM_CLASSES];
        for m in &self.machines {
            if m.decision_value(&self.kernel, x) > 0.0 {
                votes[m.positive] += 1;
            } else {
                votes[m.negative] += 1;
            }
        }
        Ok(votes)
    }

    pub fn total_support_vectors(&self) -> usize {
        self.machines.iter().map(BinaryMachine::n_sv).sum()
    }
}

impl Classifier for SvmModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        let votes = self.votes(x)?;
        let best = self.classes.iter().map(|&c| votes[c]).max().unwrap_or(0);
        Ok(self.classes.iter().copied().find(|&c| votes[c] == best).unwrap_or(0))
    }
}
