//! `flexmesh` subcommands.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or IO
//! error. Every output directory gets the effective configuration as
//! `config.json`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::encoders::HistoryBuffer;
use crate::mesh::{load_obj, save_obj, TriangleMesh};
use crate::pipeline::{
    bench_inference, evaluate, observe, split_dataset, split_unseen, train, write_report_csv, write_scatter_csv, EvalOptions,
    Modality, Model, ModelConfig, PipelineError, Split, TrainConfig,
};
use crate::synth::{
    default_objects, estimate_stiffness, gen_corpus, object_catalog, read_sequence, read_sequences, write_sequence, Protocol,
    RansacConfig, Sequence, SynthConfig, SynthError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Hold out this many whole objects instead of one sequence per object.
    pub unseen: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { unseen: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub warmup: usize,
    pub timed: usize,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { warmup: 10, timed: 200, repeats: 1 }
    }
}

/// Everything a run can be configured with; the TOML file mirrors it
/// section by section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Seeds data generation and the dataset split.
    pub seed: u64,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub bench: BenchConfig,
    pub stiffness: RansacConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthConfig::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            bench: BenchConfig::default(),
            stiffness: RansacConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Usage(m),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Invalid(m) => CliError::Usage(m),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<crate::mesh::MeshError> for CliError {
    fn from(e: crate::mesh::MeshError) -> Self {
        CliError::Data(e.to_string())
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Parser, Debug)]
#[command(name = "flexmesh", version, about = "Template-mesh deformation from multimodal observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic sequences.
    Synth {
        #[arg(long)]
        objects: usize,
        #[arg(long, default_value = "poke")]
        protocol: Protocol,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Sequences per object.
        #[arg(long)]
        sequences: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and keep the checkpoint with the best validation loss.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on its validation split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Report JSON; CSV tables are written next to it.
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Deform the template of a sequence directory frame by frame.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Measure inference throughput.
    Bench {
        /// Without a checkpoint a freshly initialized model is timed.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        modality: Option<Modality>,
        /// Template OBJ; the default foam cube otherwise.
        #[arg(long)]
        template: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a Hooke stiffness to `displacement,force` rows.
    Stiffness {
        #[arg(long)]
        csv: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Runs one command line (program name first) and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { objects, protocol, out, seed, sequences, common } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = sequences {
                cfg.synth.sequences_per_object = n;
            }
            cmd_synth(&cfg, objects, protocol, &out)
        }
        Command::Train { data, out, seed, common } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cmd_train(&cfg, &data, &out)
        }
        Command::Eval { checkpoint, data, report, common } => cmd_eval(&load_config(&common)?, &checkpoint, &data, &report),
        Command::Infer { checkpoint, frames, out, common } => {
            load_config(&common)?;
            cmd_infer(&checkpoint, &frames, &out)
        }
        Command::Bench { checkpoint, modality, template, common } => {
            cmd_bench(&load_config(&common)?, checkpoint.as_deref(), modality, template.as_deref())
        }
        Command::Stiffness { csv, common } => cmd_stiffness(&load_config(&common)?, &csv),
    }
}

/// Reads the config file (if any) and applies `--set` overrides on top.
fn load_config(common: &Common) -> Result<CliConfig> {
    let mut table = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            text.parse::<toml::Table>().map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for s in &common.set {
        apply_override(&mut table, s)?;
    }
    CliConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Usage(format!("config: {e}")))
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| CliError::Usage(format!("--set {spec:?}: expected KEY=VALUE")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("--set {spec:?}: empty key segment")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let next = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next.as_table_mut().ok_or_else(|| CliError::Usage(format!("--set {spec:?}: {p} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{}: no such file or directory", path.display())))
    }
}

fn cmd_synth(cfg: &CliConfig, objects: usize, protocol: Protocol, out: &Path) -> Result<()> {
    if objects == 0 {
        return Err(CliError::Usage("--objects must be >= 1".into()));
    }
    let catalog = object_catalog(objects, cfg.seed)?;
    let seqs = gen_corpus(&catalog, protocol, &cfg.synth, cfg.seed)?;
    create_dir(out)?;
    let echo = serde_json::json!({ "seed": cfg.seed, "protocol": protocol, "objects": objects, "config": cfg });
    let mut per_object = std::collections::HashMap::<&str, usize>::new();
    for seq in &seqs {
        let k = per_object.entry(seq.object.as_str()).or_default();
        let dir = out.join(format!("{}_{:02}", seq.object, k));
        *k += 1;
        write_sequence(seq, &dir, &echo)?;
    }
    write_json(&out.join("config.json"), &echo)?;
    println!("wrote {} {protocol} sequences of {objects} objects to {}", seqs.len(), out.display());
    Ok(())
}

fn load_data(dir: &Path) -> Result<Vec<Sequence>> {
    require(dir)?;
    let seqs = read_sequences(dir)?;
    if seqs.is_empty() {
        return Err(CliError::Data(format!("{}: no sequence directories", dir.display())));
    }
    Ok(seqs)
}

fn make_split(cfg: &CliConfig, seqs: &[Sequence]) -> Result<Split> {
    Ok(match cfg.split.unseen {
        Some(n) => split_unseen(seqs, n, cfg.seed)?,
        None => split_dataset(seqs, cfg.seed)?,
    })
}

fn cmd_train(cfg: &CliConfig, data: &Path, out: &Path) -> Result<()> {
    cfg.train.validate()?;
    let seqs = load_data(data)?;
    let split = make_split(cfg, &seqs)?;
    create_dir(out)?;
    write_json(&out.join("config.json"), &serde_json::json!({ "seed": cfg.seed, "data": data, "config": cfg }))?;
    write_json(&out.join("split.json"), &split)?;
    let outcome = train(&cfg.train, &seqs, &split, Some(out))?;
    println!(
        "validation loss {:.6e} (init {:.6e}), best epoch {}, checkpoint {}",
        outcome.best_val_loss,
        outcome.init_val_loss,
        outcome.best_epoch.map_or("init".to_string(), |e| e.to_string()),
        out.join(crate::pipeline::BEST_CHECKPOINT).display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<(Model, serde_json::Value)> {
    require(path)?;
    Ok(Model::load(path)?)
}

fn cmd_eval(cfg: &CliConfig, checkpoint: &Path, data: &Path, report: &Path) -> Result<()> {
    let (model, meta) = load_model(checkpoint)?;
    let seqs = load_data(data)?;
    let split = match meta.get("split").cloned().map(serde_json::from_value::<Split>) {
        Some(Ok(s)) if s.validation.iter().chain(&s.train).all(|&i| i < seqs.len()) => s,
        _ => make_split(cfg, &seqs)?,
    };
    let ev = evaluate(&model, &seqs, &split, &cfg.eval)?;
    let mut rep = ev.report;
    let first = &seqs[split.validation[0]].template;
    rep.inference_hz = Some(bench_inference(&model, first, 5, 100)?.hz);
    rep.config = serde_json::json!({ "seed": cfg.seed, "eval": cfg.eval, "config": cfg, "checkpoint": meta });
    if let Some(dir) = report.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(report, &rep)?;
    let sibling = |suffix: &str| {
        let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
        report.with_file_name(format!("{stem}{suffix}"))
    };
    write_report_csv(&rep, &sibling(".csv"))?;
    write_scatter_csv(&ev.scatter, &sibling("_scatter.csv"))?;
    write_scatter_csv(&ev.identity_scatter, &sibling("_scatter_identity.csv"))?;
    println!("object               L_PFD·10³  L_ROI·10³  CD_UL1[mm]  J");
    for r in &rep.rows {
        let m = &r.model;
        println!("{:<20} {:>9.4} {:>10.4} {:>11.4} {:>7.4}", r.object, m.l_pfd_e3, m.l_roi_e3, m.cd_ul1_mm, m.jaccard);
    }
    let m = &rep.mean;
    println!("{:<20} {:>9.4} {:>10.4} {:>11.4} {:>7.4}", "mean", m.l_pfd_e3, m.l_roi_e3, m.cd_ul1_mm, m.jaccard);
    Ok(())
}

fn cmd_infer(checkpoint: &Path, frames: &Path, out: &Path) -> Result<()> {
    let (model, meta) = load_model(checkpoint)?;
    require(frames)?;
    let seq = read_sequence(frames)?;
    create_dir(out)?;
    let mut buf = HistoryBuffer::new(model.config().history);
    for i in 0..seq.frames.len() {
        buf.push(observe(&seq, i, model.config())?);
        let mesh = model.infer(&seq.template, &buf)?;
        save_obj(&mesh, out.join(format!("{:04}.obj", seq.frames[i].index)))?;
    }
    write_json(&out.join("config.json"), &serde_json::json!({ "checkpoint": meta, "frames": frames }))?;
    println!("wrote {} meshes to {}", seq.frames.len(), out.display());
    Ok(())
}

fn cmd_bench(cfg: &CliConfig, checkpoint: Option<&Path>, modality: Option<Modality>, template: Option<&Path>) -> Result<()> {
    let model = match (checkpoint, modality) {
        (Some(p), m) => {
            let (model, _) = load_model(p)?;
            if let Some(m) = m.filter(|&m| m != model.modality()) {
                return Err(CliError::Data(format!("checkpoint is a {} model, not {m}", model.modality())));
            }
            model
        }
        (None, Some(m)) => Model::new(ModelConfig { modality: m, ..cfg.train.model }, cfg.train.seed)?,
        (None, None) => return Err(CliError::Usage("bench needs --checkpoint or --modality".into())),
    };
    let template: TriangleMesh = match template {
        Some(p) => {
            require(p)?;
            load_obj(p)?
        }
        None => default_objects()?.remove(0).template,
    };
    for _ in 0..cfg.bench.repeats.max(1) {
        let r = bench_inference(&model, &template, cfg.bench.warmup, cfg.bench.timed)?;
        println!("{}", serde_json::to_string(&r).expect("serializable"));
    }
    Ok(())
}

/// `displacement,force` rows; a non-numeric first line is a header.
fn read_pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    require(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (mut x, mut f) = (vec![], vec![]);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match cells.as_slice() {
            [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some((a, b)) => {
                x.push(a);
                f.push(b);
            }
            None if i == 0 => {}
            None => return Err(CliError::Data(format!("{}:{}: expected displacement,force", path.display(), i + 1))),
        }
    }
    Ok((x, f))
}

fn cmd_stiffness(cfg: &CliConfig, csv: &Path) -> Result<()> {
    let (x, f) = read_pairs(csv)?;
    let fit = estimate_stiffness(&x, &f, &cfg.stiffness).map_err(|e| CliError::Data(e.to_string()))?;
    log::info!("{} of {} samples are inliers", fit.inliers, fit.total);
    println!("{:.1}", fit.k);
    Ok(())
}
