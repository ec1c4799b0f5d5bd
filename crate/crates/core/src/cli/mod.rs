//! Command-line front end. `run` returns the process exit code so the
//! commands can be driven from tests.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    analyze, count_rss, enumerate_rss, AnalyzeOptions, FamilyBase, Forbidden, Method, Pin, RemapFamily, DEFAULT_BUDGET,
};
use crate::error::{Error, Result};
use crate::logic::{build_beta_star, parse_task, InferenceTable, TaskSpec};
use crate::mitigation::{summary_csv, what_if, MitigationSpec, WhatIfOptions};
use crate::train::{
    build_extractor, estimate_alpha, evaluate, expand_annotations, generate_dataset, io, select_queries, train_bears_ensemble,
    train_with, EnsembleConfig, Extras, ModelConfig, SyntheticTaskConfig, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_DETERMINISM: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;
pub const EXIT_DIVERGENCE: i32 = 5;
pub const EXIT_UNSUPPORTED: i32 = 6;

pub const ENUMERATION_SCHEMA_VERSION: u32 = 1;
pub const TRAIN_SCHEMA_VERSION: u32 = 1;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Syntax { .. } | Error::UndeclaredVariable(_) | Error::OutOfRange { .. } => EXIT_PARSE,
        Error::DeterminismViolation(_) | Error::NoConsistentLabel(_) | Error::Unsatisfiable => EXIT_DETERMINISM,
        Error::BudgetExceeded { .. } => EXIT_BUDGET,
        Error::Divergence(_) => EXIT_DIVERGENCE,
        Error::Unsupported(_) => EXIT_UNSUPPORTED,
        _ => EXIT_FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "rslab", version, about = "Count, enumerate and mitigate reasoning shortcuts")]
pub struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count shortcuts and report knowledge complexity and k-unambiguity.
    Analyze {
        task: PathBuf,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, conflicts_with = "brute")]
        sat: bool,
        #[arg(long)]
        brute: bool,
        /// Most shortcuts listed in the report.
        #[arg(long, default_value_t = 100)]
        cap: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// List shortcuts as explicit pairs.
    Enumerate {
        task: PathBuf,
        #[command(flatten)]
        family: FamilyArgs,
        /// Most shortcuts listed; 0 prints the count only.
        #[arg(long, default_value_t = 100)]
        cap: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Shortcut counts before and after mitigation strategies.
    Mitigate {
        task: PathBuf,
        strategies: PathBuf,
        #[command(flatten)]
        family: FamilyArgs,
        /// Also count every pair of countable strategies.
        #[arg(long)]
        combos: bool,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Where to write the CSV summary.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Format printed on stdout when no report path is given.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Train a concept extractor on a synthetic rendering of the task.
    Train {
        task: PathBuf,
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the data and training seeds of the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
pub struct FamilyArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Fulltable)]
    pub family: FamilyArg,
    /// JSON file with pins: a list of pins, or `{"pins": [...], "forbidden": [...]}`.
    #[arg(long)]
    pub pin: Option<PathBuf>,
    #[arg(long)]
    pub injective: bool,
    /// Largest parameter space searched exhaustively.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u128,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Fulltable,
    Perslot,
    Sharedslot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Constraints {
    Pins(Vec<Pin>),
    Full {
        #[serde(default)]
        pins: Vec<Pin>,
        #[serde(default)]
        forbidden: Vec<Forbidden>,
    },
}

/// Everything `train` reads from its configuration file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainSpec {
    #[serde(default)]
    pub data: SyntheticTaskConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    /// Entropy-ranked annotation budget; needs an ensemble.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queries: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub task_file: String,
    pub task_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tool_version: String,
    pub wall_clock_ms: u128,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub family_description: String,
    pub method: Method,
    pub count: u128,
    pub cap: usize,
    pub remaps: Vec<Vec<(Vec<u32>, Vec<u32>)>>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn read_task(path: &Path) -> Result<(TaskSpec, String)> {
    let text = std::fs::read_to_string(path)?;
    let task = parse_task(&text)?;
    Ok((task, sha256_hex(text.as_bytes())))
}

/// Compiles the table, memoized under `RSLAB_CACHE` when that is set.
fn load_table(task: &TaskSpec, hash: &str) -> Result<InferenceTable> {
    let Some(dir) = std::env::var_os("RSLAB_CACHE") else {
        return build_beta_star(task);
    };
    let path = PathBuf::from(dir).join(format!("{hash}-{}.table.json", task.cap()));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(t) = serde_json::from_str::<InferenceTable>(&text) {
            return Ok(t);
        }
    }
    let table = build_beta_star(task)?;
    std::fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, serde_json::to_vec(&table)?)?;
    std::fs::rename(tmp, path)?;
    Ok(table)
}

fn build_family(args: &FamilyArgs) -> Result<RemapFamily> {
    let base = match args.family {
        FamilyArg::Fulltable => FamilyBase::FullTable,
        FamilyArg::Perslot => FamilyBase::PerSlot,
        FamilyArg::Sharedslot => FamilyBase::SharedSlot,
    };
    let mut family = RemapFamily::new(base);
    if args.injective {
        family = family.injective();
    }
    if let Some(p) = &args.pin {
        let (pins, forbidden) = match serde_json::from_str::<Constraints>(&std::fs::read_to_string(p)?)? {
            Constraints::Pins(pins) => (pins, Vec::new()),
            Constraints::Full { pins, forbidden } => (pins, forbidden),
        };
        for pin in pins {
            family = family.with_pin(pin);
        }
        for f in forbidden {
            family = family.with_forbidden(f)?;
        }
    }
    Ok(family)
}

fn manifest_path(report: &Path) -> PathBuf {
    let name = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    report.with_file_name(format!("{name}.manifest.json"))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Writes a report and its manifest, or prints the report when no path is given.
fn emit<T: Serialize>(
    value: &mut T,
    set_manifest: impl FnOnce(&mut T, String),
    report: Option<&Path>,
    manifest: RunManifest,
    extra_outputs: &[PathBuf],
    out: &mut dyn Write,
) -> Result<()> {
    match report {
        Some(path) => {
            let mp = manifest_path(path);
            set_manifest(value, file_name(&mp));
            write_json(path, value)?;
            let mut m = manifest;
            m.outputs = std::iter::once(path)
                .chain(extra_outputs.iter().map(PathBuf::as_path))
                .map(|p| p.to_string_lossy().into_owned())
                .collect();
            write_json(&mp, &m)?;
        }
        None => writeln!(out, "{}", serde_json::to_string_pretty(value)?)?,
    }
    Ok(())
}

fn manifest(command: &str, task: &Path, hash: &str, seed: Option<u64>, started: Instant) -> RunManifest {
    RunManifest {
        command: command.into(),
        task_file: task.to_string_lossy().into_owned(),
        task_sha256: hash.into(),
        seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_ms: started.elapsed().as_millis(),
        outputs: Vec::new(),
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    match cmd {
        Command::Analyze { task, family, sat, brute, cap, report } => {
            let (spec, hash) = read_task(&task)?;
            let table = load_table(&spec, &hash)?;
            let fam = build_family(&family)?;
            let method = match (sat, brute) {
                (true, _) => Method::Sat,
                (_, true) => Method::Brute,
                _ => Method::Auto,
            };
            let opts = AnalyzeOptions { method, budget: family.budget, cap };
            let mut r = analyze(&spec, &table, &fam, &opts)?;
            let m = manifest("analyze", &task, &hash, None, started);
            emit(&mut r, |r, m| r.manifest = Some(m), report.as_deref(), m, &[], out)
        }
        Command::Enumerate { task, family, cap, report } => {
            let (spec, hash) = read_task(&task)?;
            let table = load_table(&spec, &hash)?;
            let fam = build_family(&family)?;
            let (count, method) = count_rss(&spec, &table, &fam, Method::Auto, family.budget)?;
            let remaps = if cap == 0 || count == 0 {
                Vec::new()
            } else {
                let support = spec.support_vectors();
                enumerate_rss(&spec, &table, &fam, cap, family.budget)?
                    .remaps
                    .iter()
                    .map(|r| r.to_pairs(&support))
                    .collect::<Result<_>>()?
            };
            let mut r = EnumerationReport {
                schema_version: ENUMERATION_SCHEMA_VERSION,
                manifest: None,
                family_description: fam.describe(),
                method,
                count,
                cap,
                remaps,
            };
            let m = manifest("enumerate", &task, &hash, None, started);
            emit(&mut r, |r, m| r.manifest = Some(m), report.as_deref(), m, &[], out)
        }
        Command::Mitigate { task, strategies, family, combos, report, csv, format } => {
            let (spec, hash) = read_task(&task)?;
            let fam = build_family(&family)?;
            let list: Vec<MitigationSpec> = serde_json::from_str(&std::fs::read_to_string(&strategies)?)?;
            let opts = WhatIfOptions {
                combos,
                budget: family.budget,
                method: Method::Auto,
                base_dir: strategies.parent().map(Path::to_path_buf),
            };
            let mut r = what_if(&spec, &fam, &list, &opts)?;
            let table = summary_csv(&r)?;
            if let Some(p) = &csv {
                std::fs::write(p, &table)?;
            }
            if report.is_none() && format == Format::Csv {
                write!(out, "{table}")?;
                return Ok(());
            }
            let m = manifest("mitigate", &task, &hash, None, started);
            let extra: Vec<PathBuf> = csv.into_iter().collect();
            emit(&mut r, |r, m| r.manifest = Some(m), report.as_deref(), m, &extra, out)
        }
        Command::Train { task, config, out: dir, seed } => {
            let (spec, hash) = read_task(&task)?;
            let mut ts: TrainSpec = serde_json::from_str(&std::fs::read_to_string(&config)?)?;
            if let Some(s) = seed {
                ts.data.seed = s;
                ts.train.seed = s;
            }
            run_train(&spec, &ts, &dir, &task, &hash, started, out)
        }
    }
}

#[derive(Serialize)]
struct TrainMetricsFile<'a> {
    schema_version: u32,
    manifest: String,
    converged: bool,
    epochs: usize,
    metrics: &'a crate::train::EvalMetrics,
}

fn run_train(
    spec: &TaskSpec,
    ts: &TrainSpec,
    dir: &Path,
    task_path: &Path,
    hash: &str,
    started: Instant,
    out: &mut dyn Write,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let data = generate_dataset(spec, &ts.data)?;
    let model = build_extractor(&ts.model, &data, &ts.train, ts.train.seed)?;
    let mut outputs: Vec<PathBuf> = Vec::new();
    let man = "manifest.json".to_string();

    let ensemble = match &ts.ensemble {
        Some(e) => Some(train_bears_ensemble(e.members, &ts.model, &data, &ts.train, e)?),
        None => None,
    };
    let annotations = match (ts.queries, &ensemble) {
        (Some(b), Some(e)) => select_queries(&e.ensemble, &data, b)?,
        (Some(_), None) => return Err(Error::InvalidArgument("queries need an ensemble".into())),
        _ => Vec::new(),
    };
    let extras = Extras { annotations: expand_annotations(&data, &annotations), ..Default::default() };
    let run = train_with(model, &data, &ts.train, &extras)?;
    let metrics = evaluate(&run.extractor, &data)?;

    let p = dir.join("dataset.csv");
    io::write_dataset(&p, &data, Some(&man))?;
    outputs.push(p);
    let p = dir.join("trajectory.csv");
    io::write_trajectory(&p, &run.trajectory, Some(&man))?;
    outputs.push(p);
    let p = dir.join("metrics.json");
    write_json(
        &p,
        &TrainMetricsFile {
            schema_version: TRAIN_SCHEMA_VERSION,
            manifest: man.clone(),
            converged: run.converged,
            epochs: run.trajectory.len(),
            metrics: &metrics,
        },
    )?;
    outputs.push(p);
    let p = dir.join("alpha.json");
    write_json(&p, &serde_json::json!({"schema_version": TRAIN_SCHEMA_VERSION, "manifest": man, "alpha": estimate_alpha(&run.extractor, &data)?}))?;
    outputs.push(p);
    if let Some(e) = &ensemble {
        let p = dir.join("ensemble.json");
        write_json(
            &p,
            &serde_json::json!({
                "schema_version": TRAIN_SCHEMA_VERSION,
                "manifest": man,
                "members": e.ensemble.members.len(),
                "slot_entropy": e.slot_entropy,
                "slots": spec.concepts().vars().iter().map(|v| v.name.clone()).collect::<Vec<_>>(),
                "excluded": e.excluded,
                "queries": annotations,
            }),
        )?;
        outputs.push(p);
    }
    let mut m = manifest("train", task_path, hash, Some(ts.train.seed), started);
    m.outputs = outputs.iter().map(|p| p.to_string_lossy().into_owned()).collect();
    write_json(&dir.join(&man), &m)?;
    writeln!(
        out,
        "label accuracy {:.4}, concept accuracy {:.4}, rs risk {:.4}, {} epochs",
        metrics.label_accuracy,
        metrics.concept_accuracy,
        metrics.rs_risk,
        run.trajectory.len()
    )?;
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let mut buf: Vec<u8> = Vec::new();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| execute(cli.command, &mut buf)),
            Err(e) => Err(Error::InvalidArgument(format!("thread pool: {e}"))),
        },
        None => execute(cli.command, &mut buf),
    };
    let _ = out.write_all(&buf);
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if let Error::DeterminismViolation(rows) = &e {
                for (g, ys) in rows.iter().take(10) {
                    let _ = writeln!(err, "  {g:?} admits labels {ys:?}");
                }
            }
            exit_code(&e)
        }
    }
}
