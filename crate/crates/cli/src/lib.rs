//! Command implementations behind the `elastic-shape` binary.

mod config;
mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use elastic_shape::data::{generate_labeled_trajectories, load_sequences, save_sequences, AlignmentStage, FileFormat, RawSequence};
use elastic_shape::eval::{run_cross_validation, subjects_of, FoldPlan};
use elastic_shape::experiments::{run_ablation, run_sphere_demo};
use elastic_shape::pipeline::{fit_pipeline, FittedPipeline};
use elastic_shape::{register_collection, Trajectory};

pub use config::{ConfigError, FoldSpec, RunConfig, Seeds};
pub use output::OutputDir;

#[derive(Debug, Parser)]
#[command(name = "elastic-shape", version, about = "Elastic shape analysis of landmark-sequence trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register a collection: mean trajectory, aligned trajectories, shooting fields, warps.
    Register(Common),
    /// Fit preprocessing and the autoencoder on the whole dataset and write the model archive.
    Train(Common),
    /// Write posterior-mean latent codes for every sequence.
    Embed {
        #[command(flatten)]
        common: Common,
        /// Model archive written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Subject-wise cross-validation with k-NN prediction in latent space.
    Eval(Common),
    /// One-dimensional submanifold recovery on the sphere.
    SphereDemo(Common),
    /// Alignment-stage, loss-mode and KL-weight ablation.
    Ablation(Common),
    /// Write the synthetic labeled dataset.
    GenData(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set training.epochs=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing prerequisite: {0}")]
    Missing(String),
    #[error(transparent)]
    Core(#[from] elastic_shape::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Missing(_) => "missing_prerequisite",
            CliError::Core(e) => core_kind(e),
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": { "kind": self.kind(), "message": self.to_string() } });
        if let CliError::Config(ConfigError::Field { key, .. }) = self {
            v["error"]["key"] = json!(key);
        }
        v
    }
}

fn core_kind(e: &elastic_shape::Error) -> &'static str {
    use elastic_shape::Error as E;
    match e {
        E::InvalidInput(_) => "invalid_input",
        E::DimensionMismatch { .. } => "dimension_mismatch",
        E::DegenerateConfiguration { .. } => "degenerate_configuration",
        E::SingularShape => "singular_shape",
        E::OutOfInjectivityRadius { .. } => "out_of_injectivity_radius",
        E::AntipodalPoints { .. } => "antipodal_points",
        E::Frame { source, .. } | E::Trajectory { source, .. } => core_kind(source),
        E::TrainingDiverged { .. } => "training_diverged",
        E::UndefinedMetric(_) => "undefined_metric",
        E::UnstableInterval { .. } => "unstable_interval",
        E::EmptyTrainingSet => "empty_training_set",
        E::EmptyTestFold { .. } => "empty_test_fold",
        E::RaggedData { .. } => "ragged_data",
        E::DuplicateRow { .. } => "duplicate_row",
        E::Format(_) => "format",
        E::MissingContext(_) => "missing_context",
        E::ArchiveVersion { .. } => "archive_version",
        E::Io(_) => "io",
        E::Json(_) => "json",
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Runs one command and returns the output directory it wrote.
pub fn run(cli: Cli) -> Result<PathBuf> {
    let (name, common) = match &cli.command {
        Command::Register(c) => ("register", c),
        Command::Train(c) => ("train", c),
        Command::Embed { common, .. } => ("embed", common),
        Command::Eval(c) => ("eval", c),
        Command::SphereDemo(c) => ("sphere-demo", c),
        Command::Ablation(c) => ("ablation", c),
        Command::GenData(c) => ("gen-data", c),
    };
    let mut cfg = RunConfig::resolve(common.config.as_deref(), &common.overrides)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = Some(o.clone());
    }
    let out_path = cfg
        .output_dir
        .clone()
        .ok_or_else(|| ConfigError::Invalid("an output directory is required (--out or output_dir)".into()))?;
    if let Some(n) = common.jobs {
        if n == 0 {
            return Err(ConfigError::Invalid("--jobs must be at least 1".into()).into());
        }
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = OutputDir::create(&out_path)?;
    match &cli.command {
        Command::Register(_) => cmd_register(&cfg, &out)?,
        Command::Train(_) => cmd_train(&cfg, &out)?,
        Command::Embed { model, .. } => cmd_embed(&cfg, model, &out)?,
        Command::Eval(_) => cmd_eval(&cfg, &out)?,
        Command::SphereDemo(_) => cmd_sphere_demo(&cfg, &out)?,
        Command::Ablation(_) => cmd_ablation(&cfg, &out)?,
        Command::GenData(_) => cmd_gen_data(&cfg, &out)?,
    }
    out.finish(name, &cfg)
}

fn load_dataset(cfg: &RunConfig) -> Result<Vec<RawSequence>> {
    match &cfg.data.path {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::Missing(format!("data file {}", p.display())));
            }
            let fmt = match cfg.data.format {
                Some(f) => f,
                None => FileFormat::from_path(p)?,
            };
            Ok(load_sequences(p, fmt)?)
        }
        None => {
            let mut spec = cfg.data.synthetic.clone();
            spec.seed = cfg.seeds().data;
            Ok(generate_labeled_trajectories(&spec)?)
        }
    }
}

fn cmd_gen_data(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let data = load_dataset(&RunConfig {
        data: config::DataSection {
            path: None,
            ..cfg.data.clone()
        },
        ..cfg.clone()
    })?;
    let fmt = cfg.data.format.unwrap_or(FileFormat::Csv);
    let name = match fmt {
        FileFormat::Csv => "sequences.csv",
        FileFormat::Json => "sequences.json",
    };
    save_sequences(&out.path(name), fmt, &data)?;
    Ok(())
}

fn preshape_trajectories(data: &[RawSequence], frames: usize) -> Result<Vec<Trajectory>> {
    data.iter()
        .map(|s| {
            let p = elastic_shape::data::preprocess(s, AlignmentStage::Preshape, frames, None)?;
            let mut seq = RawSequence::new(s.subject_id.clone(), s.k, s.m, p.to_flat())?;
            seq.sequence_id = s.sequence_id.clone();
            Ok(seq.to_trajectory()?)
        })
        .collect()
}

fn as_sequence(id: &str, seq_id: &str, t: &Trajectory) -> Result<RawSequence> {
    let mut s = RawSequence::new(id, t.k(), t.m(), t.to_flat())?;
    s.sequence_id = seq_id.to_string();
    Ok(s)
}

fn cmd_register(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let data = load_dataset(cfg)?;
    let trajs = preshape_trajectories(&data, cfg.alignment.frames)?;
    let res = register_collection(&trajs, &cfg.registration)?;
    save_sequences(&out.path("mean.json"), FileFormat::Json, &[as_sequence("mean", "", &res.mean)?])?;
    let aligned = data
        .iter()
        .zip(&res.aligned)
        .map(|(s, a)| as_sequence(&s.subject_id, &s.sequence_id, a))
        .collect::<Result<Vec<_>>>()?;
    save_sequences(&out.path("aligned.json"), FileFormat::Json, &aligned)?;
    let shooting: Vec<serde_json::Value> = data
        .iter()
        .zip(&res.shooting)
        .map(|(s, v)| json!({ "subject_id": s.subject_id, "sequence_id": s.sequence_id, "field": v.to_flat() }))
        .collect();
    out.write_json("shooting.json", &shooting)?;
    let mut warps = String::from("subject_id,sequence_id,index,gamma\n");
    for (s, w) in data.iter().zip(&res.warps) {
        for (i, g) in w.values().iter().enumerate() {
            warps.push_str(&format!("{},{},{i},{g}\n", s.subject_id, s.sequence_id));
        }
    }
    out.write("warps.csv", warps.as_bytes())?;
    out.write("convergence.log", res.convergence_log().as_bytes())?;
    out.write_json(
        "registration.json",
        &json!({
            "converged": res.converged,
            "iterations": res.iterations,
            "medoid": res.medoid,
            "objective_history": res.objective_history,
            "log": res.log,
        }),
    )?;
    Ok(())
}

fn cmd_train(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let data = load_dataset(cfg)?;
    let model = fit_pipeline(&data, &cfg.pipeline())?;
    model.save(&out.path("model.json"))?;
    let mut hist = String::from("epoch,reconstruction,kl,total\n");
    for (e, l) in model.history.iter().enumerate() {
        hist.push_str(&format!("{e},{},{},{}\n", l.reconstruction, l.kl, l.total));
    }
    out.write("training_history.csv", hist.as_bytes())?;
    Ok(())
}

fn cmd_embed(cfg: &RunConfig, model: &Path, out: &OutputDir) -> Result<()> {
    if !model.exists() {
        return Err(CliError::Missing(format!("model archive {}", model.display())));
    }
    let fitted = FittedPipeline::load(model)?;
    let data = load_dataset(cfg)?;
    let codes = fitted.embed_all(&data)?;
    let l = fitted.params.latent();
    let mut csv = String::from("subject_id,sequence_id");
    for j in 1..=l {
        csv.push_str(&format!(",z{j}"));
    }
    csv.push('\n');
    for (s, z) in data.iter().zip(&codes) {
        csv.push_str(&s.subject_id);
        csv.push(',');
        csv.push_str(&s.sequence_id);
        for v in z {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    out.write("embeddings.csv", csv.as_bytes())?;
    Ok(())
}

fn fold_plan(cfg: &RunConfig, data: &[RawSequence]) -> Result<FoldPlan> {
    let subjects = subjects_of(data);
    Ok(match &cfg.eval.folds {
        FoldSpec::L5so => FoldPlan::l5so(&subjects)?,
        FoldSpec::LeaveOut { group } => FoldPlan::leave_subjects_out(&subjects, *group)?,
        FoldSpec::KFold { k } => FoldPlan::k_fold(&subjects, *k)?,
        FoldSpec::Stroke30 => FoldPlan::stroke_30(&subjects)?,
        FoldSpec::Custom { path } => {
            if !path.exists() {
                return Err(CliError::Missing(format!("fold plan {}", path.display())));
            }
            serde_json::from_slice(&std::fs::read(path)?)?
        }
    })
}

fn cmd_eval(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let data = load_dataset(cfg)?;
    let plan = fold_plan(cfg, &data)?;
    let eval = cfg.eval_config();
    let res = run_cross_validation(&data, &plan, &cfg.pipeline(), &eval)?;
    out.write("predictions.csv", res.predictions_csv().as_bytes())?;
    out.write_json(
        "metrics.json",
        &json!({
            "task": res.task,
            "metrics": res.metrics,
            "regression": res.regression,
            "classification": res.classification,
            "classes": res.classes,
            "folds": res.folds,
            "seeds": cfg.seeds(),
            "config": cfg,
        }),
    )?;
    Ok(())
}

fn cmd_sphere_demo(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let mut demo = cfg.experiments.sphere_demo.clone();
    let seeds = cfg.seeds();
    demo.dataset.seed = seeds.data;
    demo.training.rng_seed = seeds.training;
    let res = run_sphere_demo(&demo)?;
    out.write("sphere_demo.csv", res.table_csv().as_bytes())?;
    out.write("sphere_points.csv", res.points_csv().as_bytes())?;
    out.write_json(
        "sphere_demo.json",
        &json!({
            "base_point": res.base_point,
            "methods": res.methods.iter().map(|m| json!({
                "method": m.method,
                "mean_geodesic_error": m.mean_geodesic_error,
                "mean_curve_distance": m.mean_curve_distance,
            })).collect::<Vec<_>>(),
            "seeds": seeds,
        }),
    )?;
    Ok(())
}

fn cmd_ablation(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let mut ab = cfg.experiments.ablation.clone();
    let seeds = cfg.seeds();
    ab.dataset.seed = seeds.data;
    ab.eval.seed = seeds.eval;
    let res = run_ablation(&ab)?;
    out.write("ablation.csv", res.to_csv().as_bytes())?;
    out.write_json("ablation.json", &json!({ "rows": res.rows, "seeds": seeds }))?;
    Ok(())
}
