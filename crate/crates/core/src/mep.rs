//! Multi Expression Programming classifier.
//!
//! A chromosome is a list of three-address instructions. Gene 0 is a
//! terminal and every function gene reads only earlier genes, so one pass in
//! index order evaluates all of them. Every gene is a candidate output: after
//! evaluation on the training set each class is bound to the gene that best
//! separates it from the others, and prediction is the argmax over the bound
//! genes.
//!
//! Evolution runs a ring of steady-state subpopulations. Each subpopulation
//! owns its random stream, so the parallel schedule cannot change the result.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::{argmax, Classifier};
use crate::dataset::{FeatureMatrix, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    /// `a < 0 ? b : c`
    IfNeg,
    /// `a < b ? c : d`
    IfLess,
}

impl Op {
    pub const ALL: [Op; 6] = [Op::Add, Op::Sub, Op::Mul, Op::Div, Op::IfNeg, Op::IfLess];

    pub fn arity(self) -> usize {
        match self {
            Op::IfNeg => 3,
            Op::IfLess => 4,
            _ => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::IfNeg => "ifneg",
            Op::IfLess => "ifless",
        }
    }

    /// Applies the operator; division by a near-zero value gives 1.
    pub fn apply(self, a: &[f64]) -> f64 {
        match self {
            Op::Add => a[0] + a[1],
            Op::Sub => a[0] - a[1],
            Op::Mul => a[0] * a[1],
            Op::Div => {
                if a[1].abs() < PROTECTED_DIV_EPS {
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
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Op::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| format!("unknown operator `{s}`"))
    }
}

pub const PROTECTED_DIV_EPS: f64 = 1e-12;

/// Keeps gene values finite: NaN becomes 0 and infinities are clamped.
pub fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-f64::MAX, f64::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gene {
    Variable(usize),
    Constant(usize),
    /// Only the first `op.arity()` arguments are used.
    Function { op: Op, args: [usize; 4] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    pub genes: Vec<Gene>,
    pub constants: Vec<f64>,
}

impl Chromosome {
    /// Checks the reference rule and index bounds.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        for (i, gene) in self.genes.iter().enumerate() {
            let ok = match *gene {
                Gene::Variable(f) => f < n_features,
                Gene::Constant(c) => c < self.constants.len(),
                Gene::Function { op, args } => args[..op.arity()].iter().all(|&a| a < i),
            };
            if !ok {
                return Err(Error::InvalidParameter(format!("gene {i} is malformed: {gene:?}")));
            }
        }
        if self.constants.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite constant".into()));
        }
        Ok(())
    }

    /// Value of every gene on `x`, written into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let mut args = [0.0; 4];
        for gene in &self.genes {
            let v = match *gene {
                Gene::Variable(f) => x[f],
                Gene::Constant(c) => self.constants[c],
                Gene::Function { op, args: refs } => {
                    for (slot, &r) in args.iter_mut().zip(&refs[..op.arity()]) {
                        *slot = out[r];
                    }
                    op.apply(&args)
                }
            };
            out.push(sanitize(v));
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.genes.len());
        self.eval_into(x, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MepParams {
    pub subpopulations: usize,
    pub subpopulation_size: usize,
    pub chromosome_length: usize,
    pub generations: usize,
    pub n_constants: usize,
    /// Constants start in [0, 1].
    pub constants_init: (f64, f64),
    pub constants_delta: f64,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    pub tournament_size: usize,
    pub p_function: f64,
    pub p_variable: f64,
    pub p_constant: f64,
}

impl Default for MepParams {
    fn default() -> Self {
        MepParams {
            subpopulations: 25,
            subpopulation_size: 300,
            chromosome_length: 200,
            generations: 1000,
            n_constants: 5,
            constants_init: (0.0, 1.0),
            constants_delta: 1.0,
            crossover_probability: 0.9,
            mutation_probability: 0.01,
            tournament_size: 2,
            p_function: 0.4,
            p_variable: 0.5,
            p_constant: 0.1,
        }
    }
}

impl MepParams {
    /// A much smaller budget for smoke runs.
    pub fn fast() -> Self {
        MepParams {
            subpopulations: 5,
            subpopulation_size: 100,
            generations: 200,
            ..MepParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.subpopulations == 0 || self.subpopulation_size < 2 {
            return bad("need at least one subpopulation of two individuals");
        }
        if self.chromosome_length < NUM_CLASSES {
            return bad("chromosome must have at least one gene per class");
        }
        if self.tournament_size == 0 {
            return bad("tournament size must be positive");
        }
        for p in [self.crossover_probability, self.mutation_probability] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        let total = self.p_function + self.p_variable + self.p_constant;
        if [self.p_function, self.p_variable, self.p_constant].iter().any(|&p| p < 0.0) || total <= 0.0 {
            return bad("gene type probabilities must be non-negative with a positive sum");
        }
        if self.p_variable + self.p_constant <= 0.0 {
            return bad("gene 0 needs a terminal");
        }
        if self.p_constant > 0.0 && self.n_constants == 0 {
            return bad("constant genes need at least one constant");
        }
        if !(self.constants_delta >= 0.0 && self.constants_init.0 <= self.constants_init.1) {
            return bad("bad constant range");
        }
        Ok(())
    }
}

fn random_terminal(rng: &mut ChaCha8Rng, p: &MepParams, n_features: usize) -> Gene {
    let total = p.p_variable + p.p_constant;
    if rng.random::<f64>() * total < p.p_variable {
        Gene::Variable(rng.random_range(0..n_features))
    } else {
        Gene::Constant(rng.random_range(0..p.n_constants))
    }
}

fn random_gene(rng: &mut ChaCha8Rng, p: &MepParams, n_features: usize, index: usize) -> Gene {
    let total = p.p_function + p.p_variable + p.p_constant;
    if index > 0 && rng.random::<f64>() * total < p.p_function {
        let op = Op::ALL[rng.random_range(0..Op::ALL.len())];
        let mut args = [0; 4];
        for a in args.iter_mut().take(op.arity()) {
            *a = rng.random_range(0..index);
        }
        Gene::Function { op, args }
    } else {
        random_terminal(rng, p, n_features)
    }
}

pub fn random_chromosome(rng: &mut ChaCha8Rng, p: &MepParams, n_features: usize) -> Chromosome {
    let (lo, hi) = p.constants_init;
    Chromosome {
        genes: (0..p.chromosome_length).map(|i| random_gene(rng, p, n_features, i)).collect(),
        constants: (0..p.n_constants).map(|_| rng.random_range(lo..=hi)).collect(),
    }
}

/// Uniform crossover of genes and constants.
pub fn crossover(rng: &mut ChaCha8Rng, a: &Chromosome, b: &Chromosome) -> (Chromosome, Chromosome) {
    let (mut x, mut y) = (a.clone(), b.clone());
    for i in 0..x.genes.len() {
        if rng.random::<bool>() {
            std::mem::swap(&mut x.genes[i], &mut y.genes[i]);
        }
    }
    for i in 0..x.constants.len() {
        if rng.random::<bool>() {
            std::mem::swap(&mut x.constants[i], &mut y.constants[i]);
        }
    }
    (x, y)
}

pub fn mutate(rng: &mut ChaCha8Rng, c: &mut Chromosome, p: &MepParams, n_features: usize) {
    for i in 0..c.genes.len() {
        if rng.random::<f64>() < p.mutation_probability {
            c.genes[i] = random_gene(rng, p, n_features, i);
        }
    }
    for k in c.constants.iter_mut() {
        if rng.random::<f64>() < p.mutation_probability && p.constants_delta > 0.0 {
            *k += rng.random_range(-p.constants_delta..=p.constants_delta);
        }
    }
}

/// Gene values for every row, row-major.
fn evaluate_rows(c: &Chromosome, data: &FeatureMatrix) -> Vec<f64> {
    let len = c.genes.len();
    let mut all = Vec::with_capacity(len * data.len());
    let mut buf = Vec::with_capacity(len);
    for row in &data.rows {
        c.eval_into(&row.features, &mut buf);
        all.extend_from_slice(&buf);
    }
    all
}

/// Binds each class to a distinct gene, greedily by standardized mean
/// difference `(mean_in - mean_out) / (std_all + eps)`.
pub fn class_map(c: &Chromosome, data: &FeatureMatrix) -> Vec<usize> {
    class_map_from_values(c.genes.len(), &evaluate_rows(c, data), &data.labels())
}

fn class_map_from_values(len: usize, values: &[f64], labels: &[usize]) -> Vec<usize> {
    let n = labels.len();
    let mut counts = [0usize; NUM_CLASSES];
    for &l in labels {
        counts[l] += 1;
    }
    let mut scores = vec![f64::NEG_INFINITY; NUM_CLASSES * len];
    let mut class_sums = [0.0; NUM_CLASSES];
    for g in 0..len {
        class_sums.iter_mut().for_each(|s| *s = 0.0);
        // the score is scale free; shrink huge genes so the sums stay finite
        let max_abs = (0..n).map(|r| values[r * len + g].abs()).fold(0.0, f64::max);
        let scale = if max_abs > 1e100 { 1.0 / max_abs } else { 1.0 };
        let mut total = 0.0;
        for (r, &l) in labels.iter().enumerate() {
            let v = values[r * len + g] * scale;
            class_sums[l] += v;
            total += v;
        }
        let mean = total / n as f64;
        let var = (0..n)
            .map(|r| {
                let d = values[r * len + g] * scale - mean;
                d * d
            })
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        for class in 0..NUM_CLASSES {
            let inside = counts[class];
            if inside == 0 || inside == n {
                continue;
            }
            let mean_in = class_sums[class] / inside as f64;
            let mean_out = (total - class_sums[class]) / (n - inside) as f64;
            let s = (mean_in - mean_out) / (std + 1e-12);
            if s.is_finite() {
                scores[class * len + g] = s;
            }
        }
    }
    let mut map = vec![usize::MAX; NUM_CLASSES];
    let mut used = vec![false; len];
    for _ in 0..NUM_CLASSES {
        let mut best: Option<(usize, usize, f64)> = None;
        for class in (0..NUM_CLASSES).filter(|&c| map[c] == usize::MAX) {
            for g in (0..len).filter(|&g| !used[g]) {
                let s = scores[class * len + g];
                if best.is_none_or(|(_, _, b)| s > b) {
                    best = Some((class, g, s));
                }
            }
        }
        if let Some((class, g, _)) = best {
            map[class] = g;
            used[g] = true;
        }
    }
    map
}

fn predict_from_values(values: &[f64], map: &[usize]) -> usize {
    argmax(map.iter().map(|&g| values[g]))
}

fn misclassified(len: usize, values: &[f64], labels: &[usize], map: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|(r, &l)| predict_from_values(&values[r * len..(r + 1) * len], map) != l)
        .count()
}

/// A chromosome with its class binding, ready to classify.
#[derive(Debug, Clone, PartialEq)]
pub struct MepModel {
    pub chromosome: Chromosome,
    pub class_map: Vec<usize>,
    pub n_features: usize,
}

impl MepModel {
    pub fn new(chromosome: Chromosome, class_map: Vec<usize>, n_features: usize) -> Result<Self> {
        chromosome.validate(n_features)?;
        if let Some(class) = (0..NUM_CLASSES).find(|&c| class_map.get(c).is_none_or(|&g| g >= chromosome.genes.len())) {
            return Err(Error::UnmappedClass(class));
        }
        Ok(MepModel { chromosome, class_map, n_features })
    }

    /// Number of misclassified rows.
    pub fn fitness(&self, data: &FeatureMatrix) -> usize {
        let len = self.chromosome.genes.len();
        misclassified(len, &evaluate_rows(&self.chromosome, data), &data.labels(), &self.class_map)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("mep {} {}\nconstants", self.n_features, self.chromosome.genes.len());
        for c in &self.chromosome.constants {
            s.push_str(&format!(" {c}"));
        }
        s.push('\n');
        for (i, g) in self.chromosome.genes.iter().enumerate() {
            match *g {
                Gene::Variable(f) => s.push_str(&format!("{i} var {f}\n")),
                Gene::Constant(c) => s.push_str(&format!("{i} const {c}\n")),
                Gene::Function { op, args } => {
                    s.push_str(&format!("{i} {}", op.as_str()));
                    for a in &args[..op.arity()] {
                        s.push_str(&format!(" {a}"));
                    }
                    s.push('\n');
                }
            }
        }
        s.push_str("map");
        for g in &self.class_map {
            s.push_str(&format!(" {g}"));
        }
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: "<mep>".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()));
        let num = |line: usize, s: &str| s.parse::<usize>().map_err(|e| err(line, format!("`{s}`: {e}")));

        let (ln, head) = lines.next().ok_or_else(|| err(1, "empty input".into()))?;
        if head.len() != 3 || head[0] != "mep" {
            return Err(err(ln, "expected `mep <features> <genes>`".into()));
        }
        let n_features = num(ln, head[1])?;
        let n_genes = num(ln, head[2])?;

        let (ln, consts) = lines.next().ok_or_else(|| err(2, "missing constants".into()))?;
        if consts.first() != Some(&"constants") {
            return Err(err(ln, "expected `constants`".into()));
        }
        let constants = consts[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| err(ln, format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;

        let mut genes = Vec::with_capacity(n_genes);
        for i in 0..n_genes {
            let (ln, t) = lines.next().ok_or_else(|| err(0, format!("missing gene {i}")))?;
            if t.len() < 3 || num(ln, t[0])? != i {
                return Err(err(ln, format!("expected gene {i}")));
            }
            let gene = match t[1] {
                "var" => Gene::Variable(num(ln, t[2])?),
                "const" => Gene::Constant(num(ln, t[2])?),
                name => {
                    let op: Op = name.parse().map_err(|m| err(ln, m))?;
                    if t.len() != 2 + op.arity() {
                        return Err(err(ln, format!("`{name}` takes {} arguments", op.arity())));
                    }
                    let mut args = [0; 4];
                    for (slot, s) in args.iter_mut().zip(&t[2..]) {
                        *slot = num(ln, s)?;
                    }
                    Gene::Function { op, args }
                }
            };
            genes.push(gene);
        }
        let (ln, map) = lines.next().ok_or_else(|| err(0, "missing map".into()))?;
        if map.first() != Some(&"map") {
            return Err(err(ln, "expected `map`".into()));
        }
        let class_map = map[1..].iter().map(|s| num(ln, s)).collect::<Result<Vec<_>>>()?;
        MepModel::new(Chromosome { genes, constants }, class_map, n_features)
    }
}

impl Classifier for MepModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        self.check_dimension(x)?;
        Ok(predict_from_values(&self.chromosome.eval(x), &self.class_map))
    }
}

impl fmt::Display for MepModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Debug, Clone)]
struct Individual {
    chromosome: Chromosome,
    map: Vec<usize>,
    fitness: usize,
}

struct Evaluator<'a> {
    data: &'a FeatureMatrix,
    labels: Vec<usize>,
}

impl Evaluator<'_> {
    fn individual(&self, chromosome: Chromosome) -> Individual {
        let len = chromosome.genes.len();
        let values = evaluate_rows(&chromosome, self.data);
        let map = class_map_from_values(len, &values, &self.labels);
        let fitness = misclassified(len, &values, &self.labels, &map);
        Individual { chromosome, map, fitness }
    }
}

struct Subpopulation {
    rng: ChaCha8Rng,
    members: Vec<Individual>,
}

impl Subpopulation {
    fn best(&self) -> usize {
        (0..self.members.len()).min_by_key(|&i| (self.members[i].fitness, i)).unwrap_or(0)
    }

    /// Highest fitness; the last such index on ties.
    fn worst(&self) -> usize {
        (0..self.members.len()).max_by_key(|&i| (self.members[i].fitness, i)).unwrap_or(0)
    }

    fn tournament(&mut self, size: usize) -> usize {
        let n = self.members.len();
        let mut winner = self.rng.random_range(0..n);
        for _ in 1..size {
            let other = self.rng.random_range(0..n);
            if self.members[other].fitness < self.members[winner].fitness {
                winner = other;
            }
        }
        winner
    }

    fn replace_worst_if_better(&mut self, child: Individual) {
        let w = self.worst();
        if child.fitness < self.members[w].fitness {
            self.members[w] = child;
        }
    }

    fn step(&mut self, p: &MepParams, n_features: usize, eval: &Evaluator<'_>) {
        for _ in 0..(p.subpopulation_size / 2).max(1) {
            let a = self.tournament(p.tournament_size);
            let b = self.tournament(p.tournament_size);
            let (mut x, mut y) = if self.rng.random::<f64>() < p.crossover_probability {
                crossover(&mut self.rng, &self.members[a].chromosome, &self.members[b].chromosome)
            } else {
                (self.members[a].chromosome.clone(), self.members[b].chromosome.clone())
            };
            mutate(&mut self.rng, &mut x, p, n_features);
            mutate(&mut self.rng, &mut y, p, n_features);
            let x = eval.individual(x);
            let y = eval.individual(y);
            self.replace_worst_if_better(x);
            self.replace_worst_if_better(y);
        }
    }
}

/// Outcome of one evolutionary run.
#[derive(Debug, Clone)]
pub struct MepRun {
    pub model: MepModel,
    /// Training misclassifications of the returned model.
    pub train_fitness: usize,
    /// Best training fitness of the initial population.
    pub initial_best_fitness: usize,
    /// Global best training fitness after each generation.
    pub best_fitness_history: Vec<usize>,
    /// Generation that produced the returned model; 0 is the initial population.
    pub best_generation: usize,
}

pub fn mep_evolve(train: &FeatureMatrix, validation: &FeatureMatrix, params: &MepParams, seed: u64) -> Result<MepRun> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    if !validation.is_empty() && validation.n_features != train.n_features {
        return Err(Error::Dimension { expected: train.n_features, actual: validation.n_features });
    }
    let n_features = train.n_features;
    if n_features == 0 && params.p_variable > 0.0 {
        return Err(Error::InvalidParameter("no features to read".into()));
    }
    let eval = Evaluator { data: train, labels: train.labels() };
    let mut subpops: Vec<Subpopulation> = (0..params.subpopulations)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let members = (0..params.subpopulation_size)
                .map(|_| {
                    let c = random_chromosome(&mut rng, params, n_features);
                    eval.individual(c)
                })
                .collect();
            Subpopulation { rng, members }
        })
        .collect();

    let global_best = |subpops: &[Subpopulation]| -> Individual {
        let (s, i) = subpops
            .iter()
            .enumerate()
            .map(|(s, sp)| (s, sp.best()))
            .min_by_key(|&(s, i)| (subpops[s].members[i].fitness, s))
            .expect("at least one subpopulation");
        subpops[s].members[i].clone()
    };
    let selection_error = |ind: &Individual| -> usize {
        if validation.is_empty() {
            ind.fitness
        } else {
            let len = ind.chromosome.genes.len();
            misclassified(len, &evaluate_rows(&ind.chromosome, validation), &validation.labels(), &ind.map)
        }
    };

    let first = global_best(&subpops);
    let initial_best_fitness = first.fitness;
    let mut chosen_error = selection_error(&first);
    let mut chosen = first;
    let mut best_generation = 0;
    let mut history = Vec::with_capacity(params.generations);

    for generation in 1..=params.generations {
        subpops.par_iter_mut().for_each(|sp| sp.step(params, n_features, &eval));
        // ring migration, all emigrants chosen before any arrive
        let emigrants: Vec<Individual> = subpops.iter().map(|sp| sp.members[sp.best()].clone()).collect();
        let n = subpops.len();
        if n > 1 {
            for (i, migrant) in emigrants.into_iter().enumerate() {
                let target = &mut subpops[(i + 1) % n];
                let w = target.worst();
                if migrant.fitness <= target.members[w].fitness {
                    target.members[w] = migrant;
                }
            }
        }
        let best = global_best(&subpops);
        history.push(best.fitness);
        let err = selection_error(&best);
        if err < chosen_error {
            chosen_error = err;
            chosen = best;
            best_generation = generation;
        }
    }
    log::debug!("mep seed {seed}: best generation {best_generation}, selection error {chosen_error}");
    Ok(MepRun {
        train_fitness: chosen.fitness,
        initial_best_fitness,
        best_fitness_history: history,
        best_generation,
        model: MepModel::new(chosen.chromosome, chosen.map, n_features)?,
    })
}
