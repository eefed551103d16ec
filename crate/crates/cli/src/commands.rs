//! Implementations of the drchot subcommands. Each command reads its inputs,
//! calls into `drchot_core`, writes outputs atomically, and records a run
//! manifest next to them.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use drchot_core::dataset::{
    apply_manifest, parse_manifest, split, write_manifest, SplitManifest, SplitResult, SplitSpec,
};
use drchot_core::ensemble::{self, EnsembleModel, TrainConfig};
use drchot_core::features::{
    extract_design, write_samples_csv, write_samples_jsonl, Sample,
};
use drchot_core::forest::{self, RandomForest, RfConfig};
use drchot_core::layout::{parse_drc, parse_layout, write_drc, write_layout};
use drchot_core::metrics::{evaluate, pr_csv, roc_csv, EvalReport};
use drchot_core::subset::{SelectionConfig, SelectionMode};
use drchot_core::synth::{generate_suite, SynthConfig};
use drchot_core::Error;

use crate::util::{
    atomic_write, canonical_json, load_config, load_samples, read_bytes, sample_key,
    write_run_manifest,
};
use crate::{Command, MetricChoice};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenSynth {
            config,
            out_dir,
            count,
            seed,
        } => gen_synth(config.as_ref(), &out_dir, count, seed),
        Command::Extract {
            layout,
            drc,
            design_id,
            out,
            csv,
        } => extract(&layout, &drc, design_id, &out, csv.as_deref()),
        Command::Split {
            samples,
            config,
            holdout,
            seed,
            out,
        } => split_cmd(&samples, config.as_ref(), holdout, seed, &out),
        Command::Train {
            samples,
            manifest,
            config,
            seed,
            out,
        } => train(&samples, &manifest, config.as_ref(), seed, &out),
        Command::RfTrain {
            samples,
            manifest,
            config,
            seed,
            out,
        } => rf_train(&samples, &manifest, config.as_ref(), seed, &out),
        Command::Predict {
            model,
            samples,
            out,
        } => predict(&model, &samples, &out),
        Command::Evaluate {
            scores,
            samples,
            report,
            roc,
            pr,
        } => evaluate_cmd(&scores, &samples, &report, roc.as_deref(), pr.as_deref()),
        Command::GridSearch {
            samples,
            manifest,
            grid,
            metric,
            seed,
            out,
        } => grid_search(&samples, &manifest, &grid, metric, seed, &out),
        Command::Matrix {
            samples,
            manifest,
            out_dir,
            seed,
        } => matrix(&samples, &manifest, &out_dir, seed),
    }
}

// ---------------------------------------------------------------------------
// gen-synth

fn gen_synth(
    config: Option<&PathBuf>,
    out_dir: &Path,
    count: usize,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg: SynthConfig = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let designs = generate_suite(&cfg, count, cfg.seed)?;

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let mut outputs = Vec::new();
    for design in &designs {
        let layout_path = out_dir.join(format!("{}.layout.json", design.name));
        let drc_path = out_dir.join(format!("{}.drc.json", design.name));
        atomic_write(&layout_path, &write_layout(&design.grid))?;
        atomic_write(&drc_path, &write_drc(&design.drc))?;
        log::info!(
            "{}: {}x{} g-cells, {} violation boxes",
            design.name,
            design.grid.nx,
            design.grid.ny,
            design.drc.boxes.len()
        );
        outputs.push(layout_path);
        outputs.push(drc_path);
    }

    let inputs: Vec<PathBuf> = config.cloned().into_iter().collect();
    write_run_manifest(
        out_dir,
        true,
        "gen-synth",
        serde_json::json!({ "config": cfg, "count": count }),
        &inputs,
        &outputs,
    )
}

// ---------------------------------------------------------------------------
// extract

fn extract(
    layout_path: &Path,
    drc_path: &Path,
    design_id: Option<String>,
    out: &Path,
    csv: Option<&Path>,
) -> Result<()> {
    let grid = parse_layout(&read_bytes(layout_path)?)
        .with_context(|| format!("parsing {}", layout_path.display()))?;
    let drc = parse_drc(&read_bytes(drc_path)?)
        .with_context(|| format!("parsing {}", drc_path.display()))?;
    let design_id = design_id.unwrap_or_else(|| default_design_id(layout_path));

    let samples = extract_design(&grid, &drc, &design_id);
    let positives = samples.iter().filter(|s| s.label).count();
    log::info!(
        "{design_id}: {} samples ({} positive), {} features each",
        samples.len(),
        positives,
        samples.first().map_or(0, |s| s.features.len())
    );

    let mut bytes = Vec::new();
    write_samples_jsonl(&samples, &mut bytes)?;
    atomic_write(out, &bytes)?;
    let mut outputs = vec![out.to_path_buf()];
    if let Some(csv_path) = csv {
        let mut csv_bytes = Vec::new();
        write_samples_csv(&samples, &mut csv_bytes)?;
        atomic_write(csv_path, &csv_bytes)?;
        outputs.push(csv_path.to_path_buf());
    }

    write_run_manifest(
        out,
        false,
        "extract",
        serde_json::json!({ "design_id": design_id }),
        &[layout_path.to_path_buf(), drc_path.to_path_buf()],
        &outputs,
    )
}

/// `foo.layout.json` -> `foo`; `bar.json` -> `bar`.
fn default_design_id(layout_path: &Path) -> String {
    let stem = layout_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "design".into());
    stem.strip_suffix(".layout").map(str::to_owned).unwrap_or(stem)
}

// ---------------------------------------------------------------------------
// split

fn split_cmd(
    sample_paths: &[PathBuf],
    config: Option<&PathBuf>,
    holdout: Vec<String>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let samples = load_samples(sample_paths)?;
    let mut spec: SplitSpec = load_config(config)?;
    if !holdout.is_empty() {
        spec.holdout_designs = holdout;
    }
    if let Some(seed) = seed {
        spec.seed = seed;
    }

    let result = split(&samples, &spec)?;
    log_split(&result);
    let manifest = SplitManifest::from_result(&result);
    atomic_write(out, &write_manifest(&manifest))?;

    write_run_manifest(
        out,
        false,
        "split",
        serde_json::json!({ "spec": spec }),
        sample_paths,
        &[out.to_path_buf()],
    )
}

fn log_split(result: &SplitResult) {
    let test_total: usize = result.tests.values().map(Vec::len).sum();
    log::info!(
        "split: {} train / {} valid / {} test across {} designs",
        result.train.len(),
        result.valid.len(),
        test_total,
        result.tests.len()
    );
}

fn load_split(
    sample_paths: &[PathBuf],
    manifest_path: &Path,
) -> Result<(Vec<Sample>, SplitResult)> {
    let samples = load_samples(sample_paths)?;
    let manifest = parse_manifest(&read_bytes(manifest_path)?)
        .with_context(|| format!("parsing {}", manifest_path.display()))?;
    let result = apply_manifest(&samples, &manifest)?;
    Ok((samples, result))
}

// ---------------------------------------------------------------------------
// train / rf-train

fn train(
    sample_paths: &[PathBuf],
    manifest_path: &Path,
    config: Option<&PathBuf>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let (_, result) = load_split(sample_paths, manifest_path)?;
    let mut cfg: TrainConfig = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
        cfg.selection.seed = seed;
    }

    let model = ensemble::train(&result.train, &cfg)?;
    atomic_write(out, &ensemble::save_model(&model))?;

    let mut inputs = sample_paths.to_vec();
    inputs.push(manifest_path.to_path_buf());
    if let Some(cfg_path) = config {
        inputs.push(cfg_path.clone());
    }
    write_run_manifest(
        out,
        false,
        "train",
        serde_json::json!({ "config": cfg }),
        &inputs,
        &[out.to_path_buf()],
    )
}

fn rf_train(
    sample_paths: &[PathBuf],
    manifest_path: &Path,
    config: Option<&PathBuf>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let (_, result) = load_split(sample_paths, manifest_path)?;
    let mut cfg: RfConfig = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }

    let forest = forest::rf_train(&result.train, &cfg)?;
    log::info!(
        "trained {} trees on {} samples",
        forest.trees.len(),
        result.train.len()
    );
    atomic_write(out, &forest::save_forest(&forest))?;

    let mut inputs = sample_paths.to_vec();
    inputs.push(manifest_path.to_path_buf());
    if let Some(cfg_path) = config {
        inputs.push(cfg_path.clone());
    }
    write_run_manifest(
        out,
        false,
        "rf-train",
        serde_json::json!({ "config": cfg }),
        &inputs,
        &[out.to_path_buf()],
    )
}

// ---------------------------------------------------------------------------
// predict

enum Model {
    Ensemble(Box<EnsembleModel>),
    Forest(Box<RandomForest>),
}

impl Model {
    fn load(path: &Path) -> Result<Model> {
        let bytes = read_bytes(path)?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing {}", path.display()))?;
        let model = if value.get("voters").is_some() {
            Model::Ensemble(Box::new(ensemble::load_model(&bytes)?))
        } else if value.get("trees").is_some() {
            Model::Forest(Box::new(forest::load_forest(&bytes)?))
        } else {
            bail!(Error::Schema {
                path: ".".into(),
                message: format!(
                    "{} has neither a `voters` nor a `trees` field",
                    path.display()
                ),
            });
        };
        Ok(model)
    }

    fn predict(&self, samples: &[Sample]) -> drchot_core::Result<Vec<f64>> {
        match self {
            Model::Ensemble(m) => ensemble::predict(m, samples),
            Model::Forest(f) => forest::rf_predict(f, samples),
        }
    }
}

fn predict(model_path: &Path, sample_paths: &[PathBuf], out: &Path) -> Result<()> {
    let model = Model::load(model_path)?;
    let samples = load_samples(sample_paths)?;
    let scores = model.predict(&samples)?;

    let mut csv = String::from("key,score\n");
    for (sample, score) in samples.iter().zip(&scores) {
        csv.push_str(&format!("{},{}\n", sample_key(sample), score));
    }
    atomic_write(out, csv.as_bytes())?;
    log::info!("scored {} samples", samples.len());

    let mut inputs = vec![model_path.to_path_buf()];
    inputs.extend(sample_paths.iter().cloned());
    write_run_manifest(
        out,
        false,
        "predict",
        serde_json::json!({}),
        &inputs,
        &[out.to_path_buf()],
    )
}

// ---------------------------------------------------------------------------
// evaluate

fn parse_scores(bytes: &[u8], path: &Path) -> Result<Vec<(String, f64)>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::validation("score file", format!("not UTF-8: {e}")))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("key,score") => {}
        other => bail!(Error::validation(
            "score file",
            format!(
                "{} must start with a `key,score` header, found {:?}",
                path.display(),
                other.unwrap_or("")
            ),
        )),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let Some((key, score)) = line.rsplit_once(',') else {
            bail!(Error::validation(
                "score file",
                format!("line {}: missing comma: {line:?}", i + 2),
            ));
        };
        let score: f64 = score.parse().map_err(|e| {
            Error::validation("score file", format!("line {}: bad score: {e}", i + 2))
        })?;
        rows.push((key.to_owned(), score));
    }
    Ok(rows)
}

fn evaluate_cmd(
    scores_path: &Path,
    sample_paths: &[PathBuf],
    report_path: &Path,
    roc: Option<&Path>,
    pr: Option<&Path>,
) -> Result<()> {
    let rows = parse_scores(&read_bytes(scores_path)?, scores_path)?;
    let samples = load_samples(sample_paths)?;
    let mut labels: HashMap<String, bool> = HashMap::with_capacity(samples.len());
    for sample in &samples {
        if labels.insert(sample_key(sample), sample.label).is_some() {
            bail!(Error::validation(
                "samples",
                format!("duplicate sample key {}", sample_key(sample)),
            ));
        }
    }

    let mut scores = Vec::with_capacity(rows.len());
    let mut truth = Vec::with_capacity(rows.len());
    for (key, score) in &rows {
        let Some(&label) = labels.get(key) else {
            bail!(Error::validation(
                "score file",
                format!("key {key} has no matching sample"),
            ));
        };
        scores.push(*score);
        truth.push(label);
    }

    let report = evaluate(&scores, &truth)?;
    if report.undefined {
        bail!(Error::UndefinedMetric(format!(
            "score set has {} positive and {} negative samples; every threshold \
             metric needs both classes",
            report.num_pos, report.num_neg
        )));
    }
    log_report(&report);

    atomic_write(report_path, &canonical_json(&report))?;
    let mut outputs = vec![report_path.to_path_buf()];
    if let Some(roc_path) = roc {
        atomic_write(roc_path, roc_csv(&report)?.as_bytes())?;
        outputs.push(roc_path.to_path_buf());
    }
    if let Some(pr_path) = pr {
        atomic_write(pr_path, pr_csv(&report)?.as_bytes())?;
        outputs.push(pr_path.to_path_buf());
    }

    let mut inputs = vec![scores_path.to_path_buf()];
    inputs.extend(sample_paths.iter().cloned());
    write_run_manifest(
        report_path,
        false,
        "evaluate",
        serde_json::json!({}),
        &inputs,
        &outputs,
    )
}

fn log_report(report: &EvalReport) {
    log::info!(
        "acc_e {} / a_roc {} / a_prc {} ({} pos, {} neg)",
        fmt_metric(report.acc_e),
        fmt_metric(report.a_roc),
        fmt_metric(report.a_prc),
        report.num_pos,
        report.num_neg
    );
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "---".into(),
    }
}

// ---------------------------------------------------------------------------
// grid-search

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct GridSpec {
    learning_rates: Vec<f64>,
    epochs: Vec<usize>,
    num_voters: Vec<usize>,
    subset_sizes: Vec<usize>,
    mode: SelectionMode,
    metric: MetricChoice,
    batch_size: usize,
    hidden: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            learning_rates: vec![0.001],
            epochs: vec![50],
            num_voters: vec![1],
            subset_sizes: vec![20],
            mode: SelectionMode::Srs,
            metric: MetricChoice::ARoc,
            batch_size: 32,
            hidden: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct GridResult {
    learning_rate: f64,
    epochs: usize,
    num_voters: usize,
    subset_size: usize,
    score: f64,
}

fn grid_search(
    sample_paths: &[PathBuf],
    manifest_path: &Path,
    grid_path: &Path,
    metric: Option<MetricChoice>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let (_, result) = load_split(sample_paths, manifest_path)?;
    let grid: GridSpec = load_config(Some(&grid_path.to_path_buf()))?;
    let metric = metric.unwrap_or(grid.metric);
    let seed = seed.unwrap_or(1);

    let pos = result.valid.iter().filter(|s| s.label).count();
    if pos == 0 || pos == result.valid.len() {
        bail!(Error::UndefinedMetric(format!(
            "validation set has {pos} positive of {} samples; grid search needs \
             both classes to rank candidates",
            result.valid.len()
        )));
    }
    for (name, list) in [
        ("learning_rates", grid.learning_rates.is_empty()),
        ("epochs", grid.epochs.is_empty()),
        ("num_voters", grid.num_voters.is_empty()),
        ("subset_sizes", grid.subset_sizes.is_empty()),
    ] {
        if list {
            bail!(Error::Config(format!("grid `{name}` must not be empty")));
        }
    }

    let mut results = Vec::new();
    for &lr in &grid.learning_rates {
        for &epochs in &grid.epochs {
            for &m in &grid.num_voters {
                for &n in &grid.subset_sizes {
                    let cfg = TrainConfig {
                        learning_rate: lr,
                        epochs,
                        batch_size: grid.batch_size,
                        hidden: grid.hidden,
                        selection: SelectionConfig {
                            mode: grid.mode,
                            subset_size: n,
                            num_voters: m,
                            seed,
                        },
                        loss: Default::default(),
                        seed,
                    };
                    let model = ensemble::train(&result.train, &cfg)?;
                    let scores = ensemble::predict(&model, &result.valid)?;
                    let truth: Vec<bool> = result.valid.iter().map(|s| s.label).collect();
                    let report = evaluate(&scores, &truth)?;
                    let score = match metric {
                        MetricChoice::ARoc => report.a_roc,
                        MetricChoice::AccE => report.acc_e,
                    }
                    .expect("both classes present in validation set");
                    log::info!(
                        "lr {lr} epochs {epochs} voters {m} subset {n}: {score:.4}"
                    );
                    results.push(GridResult {
                        learning_rate: lr,
                        epochs,
                        num_voters: m,
                        subset_size: n,
                        score,
                    });
                }
            }
        }
    }

    // Best score first; ties prefer the cheaper configuration.
    results.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("metric scores are finite")
            .then(a.num_voters.cmp(&b.num_voters))
            .then(a.subset_size.cmp(&b.subset_size))
            .then(a.learning_rate.partial_cmp(&b.learning_rate).unwrap())
            .then(a.epochs.cmp(&b.epochs))
    });

    println!("learning_rate,epochs,num_voters,subset_size,score");
    for r in &results {
        println!(
            "{},{},{},{},{:.4}",
            r.learning_rate, r.epochs, r.num_voters, r.subset_size, r.score
        );
    }

    let metric_name = match metric {
        MetricChoice::ARoc => "a_roc",
        MetricChoice::AccE => "acc_e",
    };
    let doc = serde_json::json!({
        "metric": metric_name,
        "ranked": results,
        "best": results.first(),
    });
    atomic_write(out, &canonical_json(&doc))?;

    let mut inputs = sample_paths.to_vec();
    inputs.push(manifest_path.to_path_buf());
    inputs.push(grid_path.to_path_buf());
    write_run_manifest(
        out,
        false,
        "grid-search",
        serde_json::json!({ "grid": grid, "metric": metric_name, "seed": seed }),
        &inputs,
        &[out.to_path_buf()],
    )
}

// ---------------------------------------------------------------------------
// matrix

/// The four ensemble settings compared in the matrix: single net, full
/// ensemble, largest-variance subsets, SRS subsets.
fn table_settings(seed: u64) -> [(&'static str, TrainConfig); 4] {
    let base = TrainConfig {
        seed,
        selection: SelectionConfig {
            mode: SelectionMode::All,
            subset_size: 20,
            num_voters: 1,
            seed,
        },
        ..Default::default()
    };
    let mut setting2 = base.clone();
    setting2.selection.num_voters = 100;
    let mut setting3 = setting2.clone();
    setting3.selection.mode = SelectionMode::LargestVariance;
    let mut setting4 = setting2.clone();
    setting4.selection.mode = SelectionMode::Srs;
    [
        ("setting1", base),
        ("setting2", setting2),
        ("setting3", setting3),
        ("setting4", setting4),
    ]
}

struct MatrixRow {
    test_set: String,
    /// One (acc_e, a_roc, a_prc) triple per column group.
    cells: Vec<[Option<f64>; 3]>,
}

fn eval_triple(scores: &[f64], labels: &[bool]) -> Result<[Option<f64>; 3]> {
    let report = evaluate(scores, labels)?;
    Ok([report.acc_e, report.a_roc, report.a_prc])
}

fn matrix(
    sample_paths: &[PathBuf],
    manifest_path: &Path,
    out_dir: &Path,
    seed: u64,
) -> Result<()> {
    let (_, result) = load_split(sample_paths, manifest_path)?;
    let settings = table_settings(seed);

    let mut group_names: Vec<String> = Vec::new();
    let mut rows: Vec<MatrixRow> = result
        .tests
        .keys()
        .map(|design| MatrixRow {
            test_set: design.clone(),
            cells: Vec::new(),
        })
        .collect();
    rows.push(MatrixRow {
        test_set: "All testing samples".into(),
        cells: Vec::new(),
    });

    // Pooled set = concatenation of the per-design test sets in key order.
    let pooled: Vec<Sample> = result.tests.values().flatten().cloned().collect();
    let mut test_sets: Vec<(&str, &[Sample])> = Vec::new();
    for (design, samples) in &result.tests {
        test_sets.push((design, samples));
    }
    test_sets.push(("All testing samples", &pooled));

    let mut score_column = |name: &str, scores_per_set: Vec<Vec<f64>>| -> Result<()> {
        group_names.push(name.to_owned());
        for (row, ((_, samples), scores)) in
            rows.iter_mut().zip(test_sets.iter().zip(scores_per_set))
        {
            let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
            row.cells.push(eval_triple(&scores, &labels)?);
        }
        Ok(())
    };

    for (name, cfg) in &settings {
        log::info!("matrix: training {name}");
        let model = ensemble::train(&result.train, cfg)?;
        let mut per_set = Vec::with_capacity(test_sets.len());
        for (_, samples) in &test_sets {
            per_set.push(ensemble::predict(&model, samples)?);
        }
        score_column(name, per_set)?;
    }

    log::info!("matrix: training rf");
    let rf_cfg = RfConfig {
        seed,
        ..Default::default()
    };
    let rf = forest::rf_train(&result.train, &rf_cfg)?;
    let mut per_set = Vec::with_capacity(test_sets.len());
    for (_, samples) in &test_sets {
        per_set.push(forest::rf_predict(&rf, samples)?);
    }
    score_column("rf", per_set)?;

    // Render CSV and Markdown views of the same table.
    let metric_names = ["acc_e", "a_roc", "a_prc"];
    let mut csv = String::from("test_set");
    for group in &group_names {
        for metric in metric_names {
            csv.push_str(&format!(",{group}_{metric}"));
        }
    }
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.test_set);
        for cell in &row.cells {
            for v in cell {
                csv.push_str(&format!(",{}", fmt_metric(*v)));
            }
        }
        csv.push('\n');
    }

    let mut md = String::from("| test set |");
    for group in &group_names {
        for metric in metric_names {
            md.push_str(&format!(" {group} {metric} |"));
        }
    }
    md.push('\n');
    md.push_str("|---|");
    for _ in 0..group_names.len() * metric_names.len() {
        md.push_str("---|");
    }
    md.push('\n');
    for row in &rows {
        md.push_str(&format!("| {} |", row.test_set));
        for cell in &row.cells {
            for v in cell {
                md.push_str(&format!(" {} |", fmt_metric(*v)));
            }
        }
        md.push('\n');
    }

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join("matrix.csv");
    let md_path = out_dir.join("matrix.md");
    atomic_write(&csv_path, csv.as_bytes())?;
    atomic_write(&md_path, md.as_bytes())?;
    print!("{md}");

    let mut inputs = sample_paths.to_vec();
    inputs.push(manifest_path.to_path_buf());
    write_run_manifest(
        out_dir,
        true,
        "matrix",
        serde_json::json!({ "seed": seed }),
        &inputs,
        &[csv_path, md_path],
    )
}

// ---------------------------------------------------------------------------
