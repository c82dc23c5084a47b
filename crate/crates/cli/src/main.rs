use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use stylo_core::corpus::{
    build_feature_set, corpus_author_stats, ipos_occurrence_stats, load_corpus, FeatureSetName,
};
use stylo_core::dataset::{load_split_dir, read_matrix, split_corpus, write_matrix, write_split_dir, FeatureMatrix, Split};
use stylo_core::dtree::dtree_train;
use stylo_core::lexicon::{load_lexicon, IposKind, Lexicon};
use stylo_core::mep::mep_evolve;
use stylo_core::metrics::{report, summarize, t_test, ConfusionMatrix, MetricsReport};
use stylo_core::runner::{
    aligned, best_text, grid_from_keys, parse_best_csv, parse_datasets, plan_from_config, rank_methods, ranking_text,
    run_plan, run_plan_on, write_outputs, ExperimentPlan, Method,
};
use stylo_core::DatasetId;

#[derive(Parser)]
#[command(name = "stylo-attr", version, about = "Authorship attribution from function-word frequencies")]
struct Cli {
    /// Directory holding `<ROST-X-n>/{train,validation,test}.txt`.
    #[arg(long, global = true, env = "STYLO_DATA_ROOT", default_value = "data")]
    data_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a corpus directory into a frequency matrix.
    Featurize(FeaturizeArgs),
    /// Shuffle a matrix into train/validation/test files.
    Split(SplitArgs),
    /// Per-author and per-category corpus statistics.
    Stats(StatsArgs),
    /// Train and test one configuration.
    Train {
        #[command(subcommand)]
        method: TrainCommand,
    },
    /// Run a parameter grid and write result tables.
    Sweep(SweepArgs),
    /// Rank methods from one or more best.csv files.
    Rank(RankArgs),
    /// Metrics for a confusion matrix, or a t-test on two error samples.
    Report(ReportArgs),
    #[command(flatten)]
    Alias(TrainCommand),
}

#[derive(Subcommand)]
enum TrainCommand {
    Knn {
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        data: DataArgs,
    },
    Dtree {
        #[arg(long)]
        no_global_prune: bool,
        #[arg(long, default_value_t = 25)]
        cf: u32,
        #[arg(long, default_value_t = 2)]
        min_cases: usize,
        /// Write the pruned tree here.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
    },
    #[command(alias = "ann")]
    Mlp {
        #[arg(long)]
        hidden: usize,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        /// `rprop` or `backprop[:rate]`.
        #[arg(long, default_value = "rprop")]
        training: String,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    Svm {
        #[arg(long, default_value = "linear")]
        kernel: String,
        #[arg(long)]
        nu: f64,
        #[command(flatten)]
        data: DataArgs,
    },
    Mep {
        #[arg(long)]
        generations: Option<usize>,
        /// Small populations for quick checks.
        #[arg(long)]
        fast: bool,
        /// Write the best chromosome of the best run here.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Args, Clone)]
struct SeedArgs {
    #[arg(long, default_value_t = 30)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset id under the data root, e.g. ROST-PA-2.
    #[arg(long, conflicts_with_all = ["train", "test"])]
    dataset: Option<String>,
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    /// Directory for result tables; stdout only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// `<author_id>_<slug>/<title>.txt` tree.
    #[arg(long)]
    corpus: PathBuf,
    /// Directory with prepositions.txt, adverbs.txt, conjunctions.txt.
    #[arg(long)]
    lexicons: PathBuf,
    #[arg(long, default_value = "PAC")]
    features: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write the ordered column list here.
    #[arg(long)]
    columns: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory; train/validation/test.txt are written inside.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Optional lexicon directory for per-category occurrence counts.
    #[arg(long)]
    lexicons: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// key=value plan file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    /// Comma list of ids, or `all`.
    #[arg(long)]
    datasets: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed_base: Option<u64>,
    /// Grid override such as `k=1..10` or `nu=0.2,0.5`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// MEP desk-scale profile.
    #[arg(long)]
    fast: bool,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct RankArgs {
    /// best.csv files from sweeps of different methods.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Whitespace-separated count grid, one actual class per line.
    #[arg(long, conflicts_with = "ttest")]
    confusion: Option<PathBuf>,
    /// Two files of error values (one per line, or runs.csv).
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    ttest: Option<Vec<PathBuf>>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Featurize(a) => featurize(a),
        Command::Split(a) => split(a),
        Command::Stats(a) => stats(a),
        Command::Train { method } | Command::Alias(method) => train(method, &cli.data_root),
        Command::Sweep(a) => sweep(a, &cli.data_root),
        Command::Rank(a) => rank(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn load_lexicons(dir: &Path, kinds: &[IposKind]) -> Result<Vec<Lexicon>> {
    kinds
        .iter()
        .map(|&k| {
            let path = dir.join(format!("{}.txt", k.as_str()));
            load_lexicon(&path, k).with_context(|| format!("loading {}", path.display()))
        })
        .collect()
}

fn featurize(a: FeaturizeArgs) -> Result<()> {
    let name: FeatureSetName = a.features.parse()?;
    let corpus = load_corpus(&a.corpus)?;
    let lex = load_lexicons(&a.lexicons, name.kinds())?;
    let refs: Vec<&Lexicon> = lex.iter().collect();
    let fs = build_feature_set(&corpus, &refs, name)?;
    let matrix = FeatureMatrix::from_corpus(&corpus, &fs)?;
    write_matrix(&matrix, &a.out)?;
    if let Some(path) = a.columns {
        fs::write(&path, fs.to_columns_string()).with_context(|| path.display().to_string())?;
    }
    println!("{} documents, {} features -> {}", matrix.len(), fs.len(), a.out.display());
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let matrix = read_matrix(&a.matrix)?;
    let s = split_corpus(&matrix, a.seed)?;
    write_split_dir(&s, &a.out)?;
    println!(
        "train {} / validation {} / test {} -> {}",
        s.train.len(),
        s.validation.len(),
        s.test.len(),
        a.out.display()
    );
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let st = corpus_author_stats(&corpus)?;
    let mut rows = vec![["author", "texts", "words", "sd", "unique", "sd", "ratio", "sd"].map(String::from).to_vec()];
    for r in &st.authors {
        rows.push(vec![
            r.author_id.to_string(),
            r.documents.to_string(),
            format!("{:.2}", r.words.mean),
            format!("{:.2}", r.words.stddev),
            format!("{:.2}", r.unique_words.mean),
            format!("{:.2}", r.unique_words.stddev),
            format!("{:.3}", r.ratio.mean),
            format!("{:.3}", r.ratio.stddev),
        ]);
    }
    print!("{}", aligned(&rows));
    for t in &st.excluded {
        println!("excluded (no words): {t}");
    }
    if let Some(dir) = a.lexicons {
        let present: Vec<IposKind> = IposKind::ALL
            .into_iter()
            .filter(|k| {
                let found = dir.join(format!("{}.txt", k.as_str())).exists();
                if !found {
                    log::warn!("no {k} lexicon in {}", dir.display());
                }
                found
            })
            .collect();
        let lex = load_lexicons(&dir, &present)?;
        let refs: Vec<&Lexicon> = lex.iter().collect();
        let mut rows = vec![["category", "lexicon", "occurrences", "% words", "files", "per file"].map(String::from).to_vec()];
        for s in ipos_occurrence_stats(&corpus, &refs) {
            rows.push(vec![
                s.kind.to_string(),
                s.lexicon_size.to_string(),
                s.occurrences.to_string(),
                format!("{:.2}", s.percent_of_words),
                s.files_with_any.to_string(),
                format!("{:.2}", s.avg_per_file),
            ]);
        }
        println!();
        print!("{}", aligned(&rows));
    }
    Ok(())
}

fn load_data(d: &DataArgs, data_root: &Path) -> Result<(DatasetId, Split)> {
    match (&d.dataset, &d.train, &d.test) {
        (Some(id), _, _) => {
            let id: DatasetId = id.parse()?;
            Ok((id, load_split_dir(data_root, id)?))
        }
        (None, Some(train), Some(test)) => {
            let train = read_matrix(train)?;
            let validation = match &d.validation {
                Some(p) => read_matrix(p)?,
                None => FeatureMatrix::new(train.feature_set_name.clone(), train.n_features, Vec::new())?,
            };
            let test = read_matrix(test)?;
            // files given directly carry no id; the placeholder only names outputs
            let id: DatasetId = "ROST-P-1".parse()?;
            Ok((id, Split { train, validation, test, shuffle_seed: 0 }))
        }
        _ => bail!("give --dataset, or --train and --test"),
    }
}

fn train(cmd: TrainCommand, data_root: &Path) -> Result<()> {
    let mut kv = BTreeMap::new();
    let (method, data, runs, seed_base) = match &cmd {
        TrainCommand::Knn { k, data } => {
            kv.insert("k", k.to_string());
            (Method::Knn, data, 1, 0)
        }
        TrainCommand::Dtree { no_global_prune, cf, min_cases, data, .. } => {
            kv.insert("cf", cf.to_string());
            kv.insert("min_cases", min_cases.to_string());
            kv.insert("global_prune", (!no_global_prune).to_string());
            (Method::Dtree, data, 1, 0)
        }
        TrainCommand::Mlp { hidden, epochs, training, seeds, data } => {
            kv.insert("hidden", hidden.to_string());
            kv.insert("epochs", epochs.to_string());
            kv.insert("training", training.clone());
            (Method::Mlp, data, seeds.runs, seeds.seed_base)
        }
        TrainCommand::Svm { kernel, nu, data } => {
            kv.insert("kernels", kernel.clone());
            kv.insert("nu", nu.to_string());
            (Method::Svm, data, 1, 0)
        }
        TrainCommand::Mep { generations, fast, seeds, data, .. } => {
            kv.insert("profile", if *fast { "fast" } else { "full" }.to_string());
            if let Some(g) = generations {
                kv.insert("generations", g.to_string());
            }
            (Method::Mep, data, seeds.runs, seeds.seed_base)
        }
    };
    let kv: BTreeMap<String, String> = kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let (id, split) = load_data(data, data_root)?;
    let plan = ExperimentPlan {
        grid: grid_from_keys(method, &kv)?,
        runs,
        seed_base,
        ..ExperimentPlan::new(method, vec![id], data_root)
    };
    let table = run_plan_on(&plan, &[(id, split.clone())])?;
    let cell = &table.cells[0];
    if let Some(note) = &cell.note {
        bail!("{note}");
    }
    let summary = summarize(&cell.runs.iter().map(|r| r.test_error).collect::<Vec<_>>())?;
    println!("{} {} {}", id, method, cell.cell.label());
    if runs > 1 {
        println!("runs {runs}: best {:.2}%  avg {:.2}%  stddev {:.2}", summary.best, summary.avg, summary.stddev);
    } else {
        println!("test error {:.2}%", summary.best);
    }
    let best = cell.best_run().context("no run")?;
    if !best.detail.is_empty() {
        println!("{}", best.detail);
    }
    print_report(&report(&best.confusion)?);
    print!("{}", best.confusion);

    match &cmd {
        TrainCommand::Dtree { dump: Some(path), no_global_prune, cf, min_cases, .. } => {
            let opts = stylo_core::TreeOptions {
                global_prune: !no_global_prune,
                confidence_factor: *cf,
                min_cases: *min_cases,
            };
            let tree = dtree_train(&split.train_with_validation(), &opts)?;
            fs::write(path, format!("size {}\n{tree}", tree.size())).with_context(|| path.display().to_string())?;
        }
        TrainCommand::Mep { dump: Some(path), .. } => {
            let seed = best.seed.unwrap_or(seed_base);
            let stylo_core::runner::Cell::Mep(params) = cell.cell else { unreachable!() };
            let run = mep_evolve(&split.train, &split.validation, &params, seed)?;
            fs::write(path, run.model.to_text()).with_context(|| path.display().to_string())?;
        }
        _ => {}
    }
    if let Some(out) = &data.out {
        let dir = write_outputs(&plan, &table, out)?;
        println!("tables -> {}", dir.display());
    }
    Ok(())
}

fn print_report(r: &MetricsReport) {
    let rows: Vec<Vec<String>> = [
        ("overall error", r.overall_error),
        ("average accuracy", r.average_accuracy),
        ("precision (micro)", r.precision_micro),
        ("recall (micro)", r.recall_micro),
        ("f-score (micro)", r.fscore_micro),
        ("precision (macro)", r.precision_macro),
        ("recall (macro)", r.recall_macro),
        ("f-score (macro)", r.fscore_macro),
    ]
    .iter()
    .map(|(k, v)| vec![k.to_string(), format!("{v:.4}")])
    .collect();
    print!("{}", aligned(&rows));
}

fn sweep(a: SweepArgs, data_root: &Path) -> Result<()> {
    let mut text = match &a.config {
        Some(p) => fs::read_to_string(p).with_context(|| p.display().to_string())?,
        None => String::new(),
    };
    // later lines win, so flags override the file
    let mut extra = Vec::new();
    if let Some(m) = &a.method {
        extra.push(format!("method={m}"));
    }
    if let Some(d) = &a.datasets {
        extra.push(format!("datasets={d}"));
    }
    if let Some(r) = a.runs {
        extra.push(format!("runs={r}"));
    }
    if let Some(s) = a.seed_base {
        extra.push(format!("seed_base={s}"));
    }
    if a.fast {
        extra.push("profile=fast".into());
    }
    extra.extend(a.overrides.iter().cloned());
    for line in extra {
        text.push('\n');
        text.push_str(&line);
    }
    let mut plan = plan_from_config(&text)?;
    if !text.lines().any(|l| l.trim_start().starts_with("data_root")) {
        plan.data_root = data_root.to_path_buf();
    }
    if a.datasets.is_none() && !text.contains("datasets") {
        plan.datasets = parse_datasets("all")?;
    }
    info!("{} cells x {} runs on {} datasets", plan.grid.cells().len(), plan.effective_runs(), plan.datasets.len());
    let table = run_plan(&plan)?;
    let dir = write_outputs(&plan, &table, &a.out)?;
    print!("{}", best_text(&table.best_per_dataset()));
    println!("tables -> {}", dir.display());
    Ok(())
}

fn rank(a: RankArgs) -> Result<()> {
    let mut rows = Vec::new();
    for p in &a.inputs {
        let text = fs::read_to_string(p).with_context(|| p.display().to_string())?;
        rows.extend(parse_best_csv(&text).with_context(|| p.display().to_string())?);
    }
    let text = ranking_text(&rank_methods(&rows));
    print!("{text}");
    if let Some(out) = a.out {
        fs::write(&out, &text).with_context(|| out.display().to_string())?;
    }
    Ok(())
}

fn read_errors(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    // runs.csv: last column is test_error
    let csv = lines.peek().is_some_and(|l| l.starts_with("dataset,"));
    if csv {
        lines.next();
    }
    lines
        .map(|l| {
            let field = if csv { l.rsplit(',').next().unwrap_or("") } else { l.trim() };
            field.parse::<f64>().with_context(|| format!("{}: `{field}`", path.display()))
        })
        .collect()
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    if let Some(path) = a.confusion {
        let text = fs::read_to_string(&path).with_context(|| path.display().to_string())?;
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().map(str::parse::<u64>).collect::<std::result::Result<Vec<_>, _>>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| path.display().to_string())?;
        print_report(&report(&ConfusionMatrix::from_rows(&rows)?)?);
        return Ok(());
    }
    if let Some(files) = a.ttest {
        let (x, y) = (read_errors(&files[0])?, read_errors(&files[1])?);
        let r = t_test(&x, &y)?;
        println!("t = {:.4}  df = {}  p = {:.4}", r.t, r.df, r.p_value);
        return Ok(());
    }
    bail!("give --confusion FILE or --ttest A B")
}
