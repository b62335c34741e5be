use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use vqm::augment::{
    build_corpus, generate_scatterplot, ingest_benchmark, read_corpus, sample_grid, write_benchmark, write_corpus,
    JudgmentRecord,
};
use vqm::eval::{
    alteration_curve, bootstrap_kappa, pairwise_relations, read_group_ratings, read_pair_judgments,
    relations_as_ratings, write_pair_judgments, BootstrapResult, KappaResult,
};
use vqm::gmm::{BicPenalty, FitConfig, Point2D, Scatterplot};
use vqm::io::{
    fit_result_json, fmt_sig9, read_points_csv, read_scores_csv, write_points_csv, write_ranking_csv,
    write_scores_csv,
};
use vqm::mergemodel::{self, mcc, Balance, Method, PreprocessSpec, TrainConfig};
use vqm::pairspace::{PairFeatures, FEATURE_NAMES};
use vqm::synth::{ranking_benchmark, simulate_pair_judgments, JudgePanel};
use vqm::vqm::{rank, score_scatterplot_detailed, RankOrder, VqmScore};
use vqm::{seed, Error};

const GENERATE_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const SCORE_STREAM: u64 = 3;
const EVALUATE_STREAM: u64 = 4;

#[derive(Parser)]
#[command(name = "vqm", version, about = "Score scatterplots by perceived cluster complexity")]
struct Cli {
    /// Global seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` file (`#` comments); command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or directory for `generate`.
    #[arg(long, global = true)]
    out: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample two-component scatterplots (or a blob ranking set) with simulated judgments.
    Generate(GenerateArgs),
    /// Build the deduplicated, augmented training corpus from a judgment CSV.
    Corpus(CorpusArgs),
    /// Train the merging classifier and report held-out metrics.
    Train(TrainArgs),
    /// Score point CSVs with a trained merger.
    Score(ScoreArgs),
    /// Rank a scores CSV.
    Rank(RankArgs),
    /// Agreement between scores and human judgments.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Parameter sets to render (columns tau..theta_v, optional id, alpha, n); default samples the grid.
    #[arg(long)]
    params: Option<String>,
    /// Number of grid draws when no parameter file is given.
    #[arg(long)]
    count: Option<usize>,
    /// Points per scatterplot; overrides the grid and file values.
    #[arg(long)]
    points: Option<usize>,
    /// Simulated judges voting on each generated plot (0 = none).
    #[arg(long)]
    judges: Option<usize>,
    /// Probability that a simulated judge flips a vote.
    #[arg(long)]
    flip_rate: Option<f64>,
    /// Generate this many blob plots plus pairwise rater votes instead.
    #[arg(long)]
    ranking: Option<usize>,
    /// Raters voting on every pair in ranking mode.
    #[arg(long)]
    raters: Option<usize>,
    /// Probability that a rater's relation is replaced in ranking mode.
    #[arg(long)]
    rater_noise: Option<f64>,
}

#[derive(Args)]
struct CorpusArgs {
    /// Judgment benchmark CSV.
    input: Option<String>,
    /// Ingest and dedup report (JSON); defaults to `<out>.report.json`.
    #[arg(long)]
    report: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus CSV written by `corpus`.
    input: Option<String>,
    /// treebag, knn or naive_bayes.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    knn_k: Option<usize>,
    /// none, up_sample or down_sample.
    #[arg(long)]
    balance: Option<String>,
    /// Comma-separated steps from center_scale, box_cox, pca, spatial_sign, or `none`.
    #[arg(long)]
    preprocess: Option<String>,
    #[arg(long)]
    pca_threshold: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Also run repeated k-fold cross-validation on the training portion.
    #[arg(long)]
    cross_validate: Option<bool>,
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long)]
    cv_repeats: Option<usize>,
    /// Metrics JSON; defaults to `<out>.metrics.json`.
    #[arg(long)]
    metrics: Option<String>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Point CSVs (`x,y`); the file stem is the scatterplot id.
    inputs: Vec<String>,
    /// Model JSON written by `train`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    n_restarts: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    em_tolerance: Option<f64>,
    #[arg(long)]
    regularization: Option<f64>,
    /// free_parameter_count or component_count.
    #[arg(long)]
    bic_penalty: Option<String>,
    /// Per-plot mixture fits and merge matrices (JSON).
    #[arg(long)]
    details: Option<String>,
}

#[derive(Args)]
struct RankArgs {
    /// Scores CSV written by `score`.
    input: Option<String>,
    /// descending (most complex first) or ascending.
    #[arg(long)]
    order: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// pairwise, alteration or group.
    #[arg(long)]
    mode: Option<String>,
    /// Scores CSV (pairwise and alteration modes).
    #[arg(long)]
    scores: Option<String>,
    /// Pair judgments CSV `idA,idB,vote_1..` (pairwise and alteration modes).
    #[arg(long)]
    judgments: Option<String>,
    /// Group ratings CSV `item_id,rater_1..` (group mode).
    #[arg(long)]
    group: Option<String>,
    /// Isolated ratings CSV `item_id,vote` (group mode).
    #[arg(long)]
    isolated: Option<String>,
    /// Bootstrap resamples, or altered copies per k in alteration mode.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Comma-separated alteration counts.
    #[arg(long)]
    k_values: Option<String>,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self { code: if e.is_input_error() { 2 } else { 1 }, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

fn context<T>(path: &str, r: vqm::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{path}: {}", err.message);
        err
    })
}

/// Merges flags, config-file values and defaults, recording what was used.
struct Resolver {
    file: BTreeMap<String, String>,
    known: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| CliError::usage(format!("config line {}: expected `key = value`", i + 1)))?;
                file.insert(key.trim().replace('-', "_"), value.trim().to_string());
            }
        }
        Ok(Self { file, known: BTreeSet::new(), resolved: BTreeMap::new() })
    }

    fn optional<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.known.insert(key.to_string());
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(
                    raw.parse::<T>()
                        .map_err(|e| CliError::usage(format!("config key `{key}` = `{raw}`: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.optional(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn required<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.optional(key, flag)?.ok_or_else(|| CliError::usage(format!("missing required `--{}`", key.replace('_', "-"))))
    }

    /// Reject config keys no resolution asked for.
    fn finish(&self) -> CliResult<()> {
        match self.file.keys().find(|k| !self.known.contains(*k)) {
            Some(k) => Err(CliError::usage(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    fn record(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn as_json(&self) -> serde_json::Value {
        json!(self.resolved)
    }
}

fn write_file(path: &str, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = Path::new(path).parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::usage(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::usage(format!("{path}: {e}")))
}

fn read_file(path: &str) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::usage(format!("{path}: {e}")))
}

/// Write to `out`, or stdout when absent; the resolved config goes beside a file output.
fn emit(out: Option<&str>, bytes: &[u8], resolver: &Resolver) -> CliResult<()> {
    match out {
        Some(path) => {
            write_file(path, bytes)?;
            write_file(&format!("{path}.run.conf"), resolver.record().as_bytes())
        }
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::usage(e.to_string())),
    }
}

fn to_csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> vqm::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn pretty(value: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("JSON value serializes");
    s.push(b'\n');
    s
}

fn rotate(sp: &Scatterplot, alpha: f64) -> vqm::Result<Scatterplot> {
    let (s, c) = alpha.sin_cos();
    Scatterplot::new(sp.points().iter().map(|p| Point2D::new(c * p.x - s * p.y, s * p.x + c * p.y)).collect())
}

struct ParamRow {
    id: String,
    params: PairFeatures,
    alpha: f64,
    n: usize,
}

fn read_param_file(path: &str) -> CliResult<Vec<ParamRow>> {
    let bytes = read_file(path)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let headers = rdr.headers().map_err(|e| CliError::usage(format!("{path}: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let feature_cols = FEATURE_NAMES
        .iter()
        .map(|n| col(n).ok_or_else(|| CliError::usage(format!("{path}: missing `{n}` column"))))
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| CliError::usage(format!("{path}: {e}")))?;
        let num = |c: usize| -> CliResult<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse().map_err(|_| CliError::usage(format!("{path}: row {row}: `{raw}` is not a number")))
        };
        let mut a = [0.0; 8];
        for (slot, &c) in a.iter_mut().zip(&feature_cols) {
            *slot = num(c)?;
        }
        let params = PairFeatures::from_array(a);
        context(path, params.validate().map_err(|e| Error::Parse { row, message: e.to_string() }))?;
        rows.push(ParamRow {
            id: col("id").and_then(|c| rec.get(c)).map_or_else(|| format!("s{row:04}"), str::to_string),
            params,
            alpha: col("alpha").map(num).transpose()?.unwrap_or(0.0),
            n: col("n").map(num).transpose()?.map_or(100, |v| v as usize),
        });
    }
    Ok(rows)
}

fn cmd_generate(args: GenerateArgs, out: Option<String>, seed_value: u64, mut r: Resolver) -> CliResult<()> {
    let dir = r.required::<String>("out", out)?;
    let ranking = r.optional("ranking", args.ranking)?;
    let points = r.optional("points", args.points)?;
    if let Some(n_plots) = ranking {
        let raters = r.value("raters", args.raters, 31)?;
        let noise = r.value("rater_noise", args.rater_noise, 0.1)?;
        r.finish()?;
        let n_points = points.unwrap_or(300);
        let plots = ranking_benchmark(n_plots, n_points, seed::derive(seed_value, &[GENERATE_STREAM, 0]))?;
        let mut manifest = String::from("id,file,blobs,perceived,n\n");
        for p in &plots {
            let file = format!("{}.csv", p.id);
            write_file(&format!("{dir}/{file}"), &to_csv_bytes(|b| write_points_csv(b, &p.scatterplot))?)?;
            manifest.push_str(&format!("{},{file},{},{},{}\n", p.id, p.blobs, p.perceived, p.scatterplot.len()));
        }
        let set = simulate_pair_judgments(&plots, raters, noise, seed::derive(seed_value, &[GENERATE_STREAM, 1]));
        write_file(&format!("{dir}/judgments.csv"), &to_csv_bytes(|b| write_pair_judgments(b, &set))?)?;
        write_file(&format!("{dir}/manifest.csv"), manifest.as_bytes())?;
        return write_file(&format!("{dir}/run.conf"), r.record().as_bytes());
    }

    let params_path = r.optional::<String>("params", args.params)?;
    let judges = r.value("judges", args.judges, 0)?;
    let flip_rate = r.value("flip_rate", args.flip_rate, 0.02)?;
    let rows = match &params_path {
        Some(path) => read_param_file(path)?,
        None => {
            let count = r.value("count", args.count, 10)?;
            let mut rng = seed::rng(seed_value, &[GENERATE_STREAM, 0]);
            (0..count)
                .map(|i| {
                    let (params, alpha, n) = sample_grid(&mut rng);
                    ParamRow { id: format!("s{:04}", i + 1), params, alpha, n }
                })
                .collect()
        }
    };
    r.finish()?;
    let mut manifest = String::from("id,file,");
    manifest.push_str(&FEATURE_NAMES.join(","));
    manifest.push_str(",alpha,n,seed\n");
    let panel = JudgePanel::new(judges, flip_rate);
    let mut records = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let n = points.unwrap_or(row.n);
        let plot_seed = seed::derive(seed_value, &[GENERATE_STREAM, 1, i as u64]);
        let sp = rotate(&generate_scatterplot(&row.params, n, plot_seed)?, row.alpha)?;
        let file = format!("{}.csv", row.id);
        write_file(&format!("{dir}/{file}"), &to_csv_bytes(|b| write_points_csv(b, &sp))?)?;
        let values: Vec<String> = row.params.to_array().iter().map(|v| fmt_sig9(*v)).collect();
        manifest.push_str(&format!("{},{file},{},{},{n},{plot_seed}\n", row.id, values.join(","), fmt_sig9(row.alpha)));
        if judges > 0 {
            let mut rng = seed::rng(seed_value, &[GENERATE_STREAM, 2, i as u64]);
            records.push(JudgmentRecord { id: row.id.clone(), params: row.params, judgments: panel.judge(&row.params, &mut rng) });
        }
    }
    write_file(&format!("{dir}/manifest.csv"), manifest.as_bytes())?;
    if judges > 0 {
        write_file(&format!("{dir}/judgments.csv"), &to_csv_bytes(|b| write_benchmark(b, &records))?)?;
    }
    write_file(&format!("{dir}/run.conf"), r.record().as_bytes())
}

fn cmd_corpus(args: CorpusArgs, out: Option<String>, mut r: Resolver) -> CliResult<()> {
    let input = r.required::<String>("input", args.input)?;
    let out = r.required::<String>("out", out)?;
    let report_path = r.value("report", args.report, format!("{out}.report.json"))?;
    r.finish()?;
    let report = context(&input, ingest_benchmark(read_file(&input)?.as_slice()))?;
    let corpus = context(&input, build_corpus(&report.records))?;
    emit(Some(&out), &to_csv_bytes(|b| write_corpus(b, &corpus))?, &r)?;
    let (do_not_merge, merge) = corpus.class_counts();
    let doc = json!({
        "rows_read": report.rows_read,
        "records_kept": report.records.len(),
        "duplicates_dropped": report.duplicates.len(),
        "duplicates": report.duplicates,
        "warnings": report.warnings,
        "corpus_records": corpus.len(),
        "class_counts": { "do_not_merge": do_not_merge, "merge": merge },
        "config": r.as_json(),
    });
    write_file(&report_path, &pretty(&doc))
}

fn cmd_train(args: TrainArgs, out: Option<String>, seed_value: u64, mut r: Resolver) -> CliResult<()> {
    let input = r.required::<String>("input", args.input)?;
    let out = r.required::<String>("out", out)?;
    let defaults = TrainConfig::default();
    let method = Method::parse(&r.value("method", args.method, defaults.method.name().to_string())?)?;
    let balance = Balance::parse(&r.value("balance", args.balance, defaults.balance.name().to_string())?)?;
    let steps = r.value("preprocess", args.preprocess, defaults.preprocess.describe())?;
    let pca_threshold = r.value("pca_threshold", args.pca_threshold, defaults.preprocess.pca_variance_threshold())?;
    let config = TrainConfig {
        method,
        n_trees: r.value("n_trees", args.n_trees, defaults.n_trees)?,
        min_leaf: r.value("min_leaf", args.min_leaf, defaults.min_leaf)?,
        knn_k: r.value("knn_k", args.knn_k, defaults.knn_k)?,
        test_fraction: r.value("test_fraction", args.test_fraction, defaults.test_fraction)?,
        balance,
        preprocess: PreprocessSpec::parse(&steps, pca_threshold)?,
        cv_folds: r.value("cv_folds", args.cv_folds, defaults.cv_folds)?,
        cv_repeats: r.value("cv_repeats", args.cv_repeats, defaults.cv_repeats)?,
        seed: seed::derive(seed_value, &[TRAIN_STREAM]),
    };
    let run_cv = r.value("cross_validate", args.cross_validate, false)?;
    let metrics_path = r.value("metrics", args.metrics, format!("{out}.metrics.json"))?;
    r.finish()?;
    config.validate()?;

    let corpus = context(&input, read_corpus(read_file(&input)?.as_slice()))?;
    let outcome = mergemodel::train(&corpus, &config)?;
    emit(Some(&out), &mergemodel::serialize(&outcome.model), &r)?;
    let c = outcome.test_confusion;
    let mut doc = json!({
        "method": method.name(),
        "balance": balance.name(),
        "preprocess": config.preprocess.describe(),
        "n_train": outcome.train.len(),
        "n_test": outcome.test.len(),
        "test": { "tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn_, "mcc": mcc(&c), "accuracy": c.accuracy() },
        "corpus_fingerprint": outcome.model.metadata.corpus_fingerprint,
        "config": r.as_json(),
    });
    if run_cv {
        let scores = mergemodel::cross_validate(&outcome.train, &config)?;
        let summary = vqm::eval::summarize(&scores);
        doc["cross_validation"] = json!({
            "folds": config.cv_folds,
            "repeats": config.cv_repeats,
            "mcc_mean": summary.mean,
            "mcc_sd": summary.sd,
            "mcc": scores,
        });
    }
    write_file(&metrics_path, &pretty(&doc))
}

fn cmd_score(args: ScoreArgs, out: Option<String>, seed_value: u64, mut r: Resolver) -> CliResult<()> {
    let joined = r.optional::<String>("inputs", (!args.inputs.is_empty()).then(|| args.inputs.join(",")))?;
    let inputs: Vec<String> = joined.map(|j| j.split(',').map(str::to_string).collect()).unwrap_or_default();
    if inputs.is_empty() {
        return Err(CliError::usage("no point files given"));
    }
    let model_path = r.required::<String>("model", args.model)?;
    let d = FitConfig::default();
    let penalty = match r.value("bic_penalty", args.bic_penalty, "free_parameter_count".to_string())?.as_str() {
        "free_parameter_count" => BicPenalty::FreeParameterCount,
        "component_count" => BicPenalty::ComponentCount,
        other => return Err(CliError::usage(format!("unknown bic penalty `{other}`"))),
    };
    let fit_config = FitConfig {
        k_max: r.value("k_max", args.k_max, d.k_max)?,
        n_restarts: r.value("n_restarts", args.n_restarts, d.n_restarts)?,
        max_iterations: r.value("max_iterations", args.max_iterations, d.max_iterations)?,
        em_tolerance: r.value("em_tolerance", args.em_tolerance, d.em_tolerance)?,
        regularization: r.value("regularization", args.regularization, d.regularization)?,
        bic_penalty: penalty,
        seed: seed::derive(seed_value, &[SCORE_STREAM]),
    };
    let details_path = r.optional::<String>("details", args.details)?;
    let out = r.optional::<String>("out", out)?;
    r.finish()?;
    fit_config.validate()?;

    let merger = context(&model_path, mergemodel::deserialize(&read_file(&model_path)?))?;
    let loaded = inputs
        .iter()
        .map(|path| {
            let id = Path::new(path).file_stem().map_or_else(|| path.clone(), |s| s.to_string_lossy().into_owned());
            Ok((id, context(path, read_points_csv(read_file(path)?.as_slice()))?))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let details = loaded
        .par_iter()
        .map(|(id, sp)| score_scatterplot_detailed(sp, &fit_config, &merger).map_err(|e| (id.clone(), e)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|(id, e)| {
            let mut err = CliError::from(e);
            err.message = format!("{id}: {}", err.message);
            err
        })?;
    let scores: Vec<(String, VqmScore)> = loaded.iter().zip(&details).map(|((id, _), d)| (id.clone(), d.score)).collect();
    emit(out.as_deref(), &to_csv_bytes(|b| write_scores_csv(b, &scores))?, &r)?;
    if let Some(path) = details_path {
        let doc: Vec<_> = scores
            .iter()
            .zip(&details)
            .map(|((id, s), d)| json!({ "id": id, "m": s.m, "k_star": s.k_star, "merge_matrix": d.matrix.rows(), "fit": fit_result_json(&d.fit) }))
            .collect();
        write_file(&path, &pretty(&json!(doc)))?;
    }
    Ok(())
}

fn cmd_rank(args: RankArgs, out: Option<String>, mut r: Resolver) -> CliResult<()> {
    let input = r.required::<String>("input", args.input)?;
    let order = match r.value("order", args.order, "descending".to_string())?.as_str() {
        "descending" => RankOrder::Descending,
        "ascending" => RankOrder::Ascending,
        other => return Err(CliError::usage(format!("unknown order `{other}`"))),
    };
    let out = r.optional::<String>("out", out)?;
    r.finish()?;
    let scores = context(&input, read_scores_csv(read_file(&input)?.as_slice()))?;
    let ranked = rank(&scores, order);
    emit(out.as_deref(), &to_csv_bytes(|b| write_ranking_csv(b, &ranked))?, &r)
}

fn kappa_json(k: &KappaResult) -> serde_json::Value {
    json!({
        "kappa": k.kappa,
        "observed_agreement": k.observed_agreement,
        "expected_agreement": k.expected_agreement,
        "label": k.label.name(),
    })
}

fn bootstrap_json(b: &BootstrapResult) -> serde_json::Value {
    let s = &b.summary;
    json!({
        "resamples": s.n,
        "mean": s.mean,
        "sd": s.sd,
        "min": s.min,
        "max": s.max,
        "percentiles": s.percentiles.iter().map(|(p, v)| json!({ "p": p, "kappa": v })).collect::<Vec<_>>(),
    })
}

fn cmd_evaluate(args: EvaluateArgs, out: Option<String>, seed_value: u64, mut r: Resolver) -> CliResult<()> {
    let mode = r.value("mode", args.mode, "pairwise".to_string())?;
    let eval_seed = seed::derive(seed_value, &[EVALUATE_STREAM]);
    match mode.as_str() {
        "pairwise" | "alteration" => {
            let scores_path = r.required::<String>("scores", args.scores)?;
            let judgments_path = r.required::<String>("judgments", args.judgments)?;
            let b = r.value("bootstrap", args.bootstrap, if mode == "pairwise" { 10_000 } else { 1_000 })?;
            let k_values = if mode == "alteration" {
                let raw = r.value("k_values", args.k_values, "0,5,10,15,20,25,30,40,50,60,80,100".to_string())?;
                raw.split(',')
                    .map(|k| k.trim().parse::<usize>().map_err(|_| CliError::usage(format!("bad k value `{k}`"))))
                    .collect::<CliResult<Vec<_>>>()?
            } else {
                Vec::new()
            };
            let out = r.optional::<String>("out", out)?;
            r.finish()?;
            let scores = context(&scores_path, read_scores_csv(read_file(&scores_path)?.as_slice()))?;
            let set = context(&judgments_path, read_pair_judgments(read_file(&judgments_path)?.as_slice()))?;
            let relations = context(&judgments_path, pairwise_relations(&scores, &set.pairs))?;
            let group = set.group()?;
            if mode == "pairwise" {
                let isolated = relations_as_ratings(&group, &relations)?;
                let boot = bootstrap_kappa(&group, &isolated, b, eval_seed)?;
                let doc = json!({
                    "mode": "pairwise",
                    "pairs": group.items(),
                    "raters": group.raters(),
                    "agreement": kappa_json(&boot.point),
                    "bootstrap": bootstrap_json(&boot),
                    "config": r.as_json(),
                });
                emit(out.as_deref(), &pretty(&doc), &r)
            } else {
                let curve = alteration_curve(&relations, &group, &k_values, b, eval_seed)?;
                let mut csv = String::from("k,mean,sd,min,max\n");
                for p in &curve {
                    csv.push_str(&format!("{},{},{},{},{}\n", p.k, fmt_sig9(p.mean), fmt_sig9(p.sd), fmt_sig9(p.min), fmt_sig9(p.max)));
                }
                emit(out.as_deref(), csv.as_bytes(), &r)
            }
        }
        "group" => {
            let group_path = r.required::<String>("group", args.group)?;
            let isolated_path = r.required::<String>("isolated", args.isolated)?;
            let b = r.value("bootstrap", args.bootstrap, 10_000)?;
            let out = r.optional::<String>("out", out)?;
            r.finish()?;
            let iso_bytes = read_file(&isolated_path)?;
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(iso_bytes.as_slice());
            let mut iso_votes: BTreeMap<String, String> = BTreeMap::new();
            for (idx, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(|e| CliError::usage(format!("{isolated_path}: {e}")))?;
                if rec.len() < 2 {
                    return Err(CliError::usage(format!("{isolated_path}: row {}: expected `item_id,vote`", idx + 1)));
                }
                iso_votes.insert(rec[0].to_string(), rec[1].to_string());
            }
            let extra: Vec<&str> = iso_votes.values().map(String::as_str).collect();
            let (ids, group) = context(&group_path, read_group_ratings(read_file(&group_path)?.as_slice(), &extra))?;
            if let Some(stray) = iso_votes.keys().find(|k| !ids.contains(k)) {
                return Err(Error::UnknownId(stray.clone()).into());
            }
            let symbols = ids
                .iter()
                .map(|id| iso_votes.get(id).map(String::as_str).ok_or_else(|| Error::UnknownId(id.clone())))
                .collect::<vqm::Result<Vec<_>>>()?;
            let isolated = group.isolated_from_symbols(&symbols)?;
            let boot = bootstrap_kappa(&group, &isolated, b, eval_seed)?;
            let doc = json!({
                "mode": "group",
                "items": group.items(),
                "raters": group.raters(),
                "agreement": kappa_json(&boot.point),
                "bootstrap": bootstrap_json(&boot),
                "config": r.as_json(),
            });
            emit(out.as_deref(), &pretty(&doc), &r)
        }
        other => Err(CliError::usage(format!("unknown mode `{other}`"))),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut r = Resolver::load(cli.config.as_deref())?;
    let seed_value = r.value("seed", cli.seed, 0u64)?;
    match cli.command {
        Command::Generate(a) => cmd_generate(a, cli.out, seed_value, r),
        Command::Corpus(a) => cmd_corpus(a, cli.out, r),
        Command::Train(a) => cmd_train(a, cli.out, seed_value, r),
        Command::Score(a) => cmd_score(a, cli.out, seed_value, r),
        Command::Rank(a) => cmd_rank(a, cli.out, r),
        Command::Evaluate(a) => cmd_evaluate(a, cli.out, seed_value, r),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vqm: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
