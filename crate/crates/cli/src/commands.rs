//! Subcommand implementations. Each returns the paths it wrote.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde_json::json;
use tlstm::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use tlstm::metrics::{comparison_markdown, confusion, ppv_npv_f, ConfusionCounts, MetricsReport};
use tlstm::simulator::{generate_split, read_dataset, short_hash, write_dataset, Dataset, Split, TransitionTable, NUM_DIGITS};
use tlstm::trainer::{
    digit_names, final_targets, gradcheck, loss_log_csv, predict_all, train, GradcheckReport, ModelKind, TrainConfig,
};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// `# config_hash=<hash>` followed by the CSV body.
fn tagged_csv(hash: &str, body: &str) -> String {
    format!("# config_hash={hash}\n{body}")
}

pub struct SimulateOutput {
    pub train: PathBuf,
    pub test: PathBuf,
    pub manifest: PathBuf,
}

pub fn simulate(cfg: &ExperimentConfig, seed: u64, n_train: usize, n_test: usize, out: &Path) -> CliResult<SimulateOutput> {
    if n_train == 0 || n_test == 0 {
        return Err(CliError::Validation("--n-train and --n-test must be positive".into()));
    }
    ensure_dir(out)?;
    let train_set = generate_split(&cfg.simulator, seed, Split::Train, n_train)?;
    let test_set = generate_split(&cfg.simulator, seed, Split::Test, n_test)?;
    let paths = SimulateOutput {
        train: out.join("train.jsonl"),
        test: out.join("test.jsonl"),
        manifest: out.join("manifest.json"),
    };
    write_dataset(&paths.train, &train_set)?;
    write_dataset(&paths.test, &test_set)?;
    let manifest = json!({
        "seed": seed,
        "config_hash": cfg.simulator.hash(),
        "n_train": n_train,
        "n_test": n_test,
        "train_file": "train.jsonl",
        "test_file": "test.jsonl",
        "simulator": cfg.simulator.canonical(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    write_text(&paths.manifest, &text)?;
    Ok(paths)
}

/// Hash of the training settings together with the data they ran on.
pub fn run_hash(config: &TrainConfig, data: &Dataset) -> String {
    short_hash(&format!("{}data={}\nn={}\n", config.canonical(), data.config_hash, data.len()))
}

pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    pub config_hash: String,
}

pub fn train_model(
    config: &TrainConfig,
    data: &Dataset,
    held_out: Option<&Dataset>,
    out: &Path,
    progress: bool,
) -> CliResult<TrainOutput> {
    ensure_dir(out)?;
    let name = config.model.name();
    if progress {
        eprintln!("training {name} on {} sequences for {} epochs", data.len(), config.epochs);
    }
    let outcome = train(data, config, held_out)?;
    if progress {
        for e in &outcome.log {
            eprintln!("  {name} epoch {:>3} {:<5} loss {:.5}", e.epoch, e.split, e.mean_loss);
        }
    }
    let hash = run_hash(config, data);
    let paths = TrainOutput {
        checkpoint: out.join(format!("{name}.ckpt")),
        loss_log: out.join(format!("{name}_loss.csv")),
        config_hash: hash.clone(),
    };
    save_checkpoint(
        &paths.checkpoint,
        &Checkpoint {
            model: outcome.model,
            config_hash: hash.clone(),
        },
    )?;
    write_text(&paths.loss_log, &tagged_csv(&hash, &loss_log_csv(&outcome.log)))?;
    Ok(paths)
}

/// Per-sequence final-step probabilities: `id,p_0,p_6,p_8,p_3,p_9`.
pub fn predictions_csv(data: &Dataset, preds: &[Vec<f64>]) -> String {
    let mut out = String::from("id");
    for name in digit_names() {
        out.push_str(&format!(",p_{name}"));
    }
    out.push('\n');
    for (s, p) in data.sequences.iter().zip(preds) {
        out.push_str(&s.id.to_string());
        for v in p {
            out.push_str(&format!(",{v:?}"));
        }
        out.push('\n');
    }
    out
}

/// Reads a predictions file in the layout of [`predictions_csv`], ordered to
/// match `data`. Lines starting with `#` are skipped.
pub fn read_predictions(path: &Path, data: &Dataset) -> CliResult<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |line: usize, why: &str| CliError::Validation(format!("{}: line {line}: {why}", path.display()));
    let mut by_id = std::collections::HashMap::new();
    let mut rows = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    match rows.next() {
        Some((_, header)) if header.trim_start().starts_with("id") => {}
        Some((i, _)) => return Err(bad(i + 1, "expected a header starting with id")),
        None => return Err(bad(1, "empty predictions file")),
    }
    for (i, line) in rows {
        let mut fields = line.split(',').map(str::trim);
        let id: u64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad(i + 1, "bad sequence id"))?;
        let probs: Vec<f64> = fields
            .map(|f| f.parse::<f64>().ok().filter(|v| (0.0..=1.0).contains(v)))
            .collect::<Option<_>>()
            .ok_or_else(|| bad(i + 1, "probabilities must be numbers in [0, 1]"))?;
        if probs.len() != NUM_DIGITS {
            return Err(bad(i + 1, &format!("expected {NUM_DIGITS} probabilities")));
        }
        if by_id.insert(id, probs).is_some() {
            return Err(bad(i + 1, "repeated sequence id"));
        }
    }
    data.sequences
        .iter()
        .map(|s| {
            by_id
                .remove(&s.id)
                .ok_or_else(|| CliError::Validation(format!("{}: no prediction for sequence {}", path.display(), s.id)))
        })
        .collect()
}

pub struct EvaluateOutput {
    pub csv: PathBuf,
    pub markdown: PathBuf,
    pub predictions: PathBuf,
    pub report: MetricsReport,
}

pub enum Scorer<'a> {
    Checkpoint(&'a Path),
    Predictions(&'a Path),
}

pub fn evaluate(scorer: Scorer<'_>, data_path: &Path, threshold: f64, out: &Path) -> CliResult<EvaluateOutput> {
    let data = read_dataset(data_path)?;
    let (name, title, hash, preds) = match scorer {
        Scorer::Checkpoint(path) => {
            let ck = load_checkpoint(path)?;
            let kind = ck.model.kind();
            for s in &data.sequences {
                ck.model.check_sample(s).map_err(|e| {
                    CliError::Validation(format!("{} vs {}: {e}", path.display(), data_path.display()))
                })?;
            }
            let preds = predict_all(&ck.model, &data)?;
            (kind.name().to_string(), kind.title().to_string(), ck.config_hash, preds)
        }
        Scorer::Predictions(path) => {
            let preds = read_predictions(path, &data)?;
            let stem = path.file_stem().map_or("predictions".into(), |s| s.to_string_lossy().into_owned());
            (stem.clone(), stem, short_hash(&data.config_hash), preds)
        }
    };
    let counts = confusion(&preds, &final_targets(&data), threshold)?;
    let report = ppv_npv_f(&counts, &digit_names());
    ensure_dir(out)?;
    let paths = EvaluateOutput {
        csv: out.join(format!("{name}_metrics.csv")),
        markdown: out.join(format!("{name}_metrics.md")),
        predictions: out.join(format!("{name}_predictions.csv")),
        report,
    };
    write_text(&paths.csv, &tagged_csv(&hash, &paths.report.to_csv(&title)))?;
    let md = format!(
        "<!-- config_hash={hash} data={} threshold={threshold} -->\n\n{}",
        data.config_hash,
        paths.report.to_markdown(&title)
    );
    write_text(&paths.markdown, &md)?;
    write_text(&paths.predictions, &tagged_csv(&hash, &predictions_csv(&data, &preds)))?;
    Ok(paths)
}

pub struct CompareOutput {
    pub table: PathBuf,
    pub csv: PathBuf,
    /// Pooled over all seeds, in model order.
    pub pooled: Vec<(ModelKind, MetricsReport)>,
    /// Average F-measure per seed and model.
    pub per_seed: Vec<(u64, Vec<(ModelKind, Option<f64>)>)>,
    /// Wall-clock training time per seed and model.
    pub timings: Vec<(u64, ModelKind, Duration)>,
}

/// Simulates, trains every configured model and evaluates it, once per seed.
/// The combined table pools the confusion counts of all seeds.
pub fn compare(cfg: &ExperimentConfig, out: &Path, progress: bool) -> CliResult<CompareOutput> {
    ensure_dir(out)?;
    let hash = cfg.hash();
    write_text(&out.join("config.txt"), &cfg.to_text())?;
    let mut counts: Vec<Vec<ConfusionCounts>> = vec![Vec::new(); cfg.models.len()];
    let mut per_seed = Vec::new();
    let mut timings = Vec::new();
    let mut csv = String::from("seed,model,label,metric,value\n");
    for &seed in &cfg.seeds {
        let dir = out.join(format!("seed-{seed}"));
        if progress {
            eprintln!("seed {seed}: simulating {} + {} sequences", cfg.n_train, cfg.n_test);
        }
        let sim = simulate(cfg, seed, cfg.n_train, cfg.n_test, &dir)?;
        let train_set = read_dataset(&sim.train)?;
        let test_set = read_dataset(&sim.test)?;
        let mut row = Vec::new();
        for (m, &kind) in cfg.models.iter().enumerate() {
            let config = TrainConfig {
                model: kind,
                seed,
                ..cfg.train.clone()
            };
            let started = Instant::now();
            let trained = train_model(&config, &train_set, Some(&test_set), &dir, progress)?;
            timings.push((seed, kind, started.elapsed()));
            let model = load_checkpoint(&trained.checkpoint)?.model;
            let preds = predict_all(&model, &test_set)?;
            let c = confusion(&preds, &final_targets(&test_set), cfg.train.threshold)?;
            let report = ppv_npv_f(&c, &digit_names());
            write_text(
                &dir.join(format!("{}_metrics.csv", kind.name())),
                &tagged_csv(&trained.config_hash, &report.to_csv(kind.title())),
            )?;
            for line in report.to_csv(kind.title()).lines().skip(1) {
                csv.push_str(&format!("{seed},{line}\n"));
            }
            if progress {
                eprintln!("seed {seed}: {} avg F {}", kind.name(), fmt_opt(report.macro_avg.f_measure));
            }
            row.push((kind, report.macro_avg.f_measure));
            counts[m].push(c);
        }
        per_seed.push((seed, row));
    }
    let mut pooled = Vec::new();
    for (m, &kind) in cfg.models.iter().enumerate() {
        let c = ConfusionCounts::pooled(&counts[m])?;
        let report = ppv_npv_f(&c, &digit_names());
        for line in report.to_csv(kind.title()).lines().skip(1) {
            csv.push_str(&format!("pooled,{line}\n"));
        }
        pooled.push((kind, report));
    }
    let blocks: Vec<(&str, &MetricsReport)> = pooled.iter().map(|(k, r)| (k.title(), r)).collect();
    let mut md = format!(
        "<!-- config_hash={hash} -->\n\nTest-set results, final step of each sequence, pooled over seeds {}.\n\n",
        cfg.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
    );
    md.push_str(&comparison_markdown(&blocks));
    md.push_str("\nAverage F-measure per seed:\n\n| seed |");
    for kind in &cfg.models {
        md.push_str(&format!(" {} |", kind.title()));
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(cfg.models.len()));
    md.push('\n');
    for (seed, row) in &per_seed {
        md.push_str(&format!("| {seed} |"));
        for (_, f) in row {
            md.push_str(&format!(" {} |", fmt_opt(*f)));
        }
        md.push('\n');
    }
    let paths = CompareOutput {
        table: out.join("comparison.md"),
        csv: out.join("comparison.csv"),
        pooled,
        per_seed,
        timings,
    };
    write_text(&paths.table, &md)?;
    write_text(&paths.csv, &tagged_csv(&hash, &csv))?;
    Ok(paths)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undef".into(), |x| format!("{x:.4}"))
}

pub fn run_gradcheck(cfg: &ExperimentConfig, seed: u64, out: Option<&Path>) -> CliResult<GradcheckReport> {
    let report = gradcheck(&cfg.gradcheck, seed)?;
    if let Some(path) = out {
        let text = format!("# config_hash={}\n{}", cfg.hash(), report.to_text());
        write_text(path, &text)?;
    }
    Ok(report)
}

pub struct CheckSummary {
    pub sequences: usize,
    pub transitions: usize,
    pub violations: Vec<String>,
}

/// Re-checks every transition of a dataset against the transition table.
pub fn check_dataset(path: &Path) -> CliResult<CheckSummary> {
    let data = read_dataset(path)?;
    let table = TransitionTable::standard();
    let mut summary = CheckSummary {
        sequences: data.len(),
        transitions: 0,
        violations: Vec::new(),
    };
    for s in &data.sequences {
        if !s.steps[0].state.is_empty() {
            summary.violations.push(format!("sequence {}: first step is not empty", s.id));
        }
        for (t, pair) in s.steps.windows(2).enumerate() {
            summary.transitions += 1;
            let allowed = table.allowed_digits(pair[0].state, i64::from(pair[1].delta))?;
            if !allowed.admits(pair[1].state) {
                summary.violations.push(format!(
                    "sequence {} step {}: {} -> {} with delta {}",
                    s.id,
                    t + 2,
                    pair[0].state,
                    pair[1].state,
                    pair[1].delta
                ));
            }
        }
    }
    Ok(summary)
}
