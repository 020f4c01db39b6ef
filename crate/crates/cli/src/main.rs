use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use scenefit_cli::formats::{write_labels, write_motion, write_obj};
use scenefit_cli::io::write_atomic;
use scenefit_cli::pipeline::{Manifest, MotionEntry, SceneEntry};
use scenefit_cli::synthetic::{motion_suite, scene_suite};
use scenefit_cli::{exit, export_dataset, run, FeatureSource, PipelineConfig, RunArgs, Status};

#[derive(Parser)]
#[command(name = "scenefit", version, about = "Place motion clips in static 3D scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Place one motion in one scene.
    Run(RunCommand),
    /// Place every motion of a manifest in every scene and keep the
    /// placements that pass the filters.
    ExportDataset(ExportCommand),
    /// Write a seeded suite of synthetic rooms and clips with a manifest.
    Generate(GenerateCommand),
}

#[derive(Args)]
struct RunCommand {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    motion: PathBuf,
    /// A features file (JSON or PFTR) or `heuristic`.
    #[arg(long, default_value = "heuristic")]
    features: FeatureSource,
    #[arg(long)]
    out: PathBuf,
    /// Write posed per-frame surface meshes next to each placement.
    #[arg(long)]
    export_mesh: bool,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct ExportCommand {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct GenerateCommand {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Config file plus per-flag overrides.
#[derive(Args)]
struct Tuning {
    /// TOML, or JSON with a `.json` extension.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    grid_step: Option<f64>,
    /// Degrees.
    #[arg(long)]
    rot_step: Option<f64>,
    #[arg(long)]
    top_b: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    lbfgs_steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda_mot: Option<f64>,
    #[arg(long)]
    lambda_tau: Option<f64>,
    #[arg(long)]
    lambda_pen: Option<f64>,
    #[arg(long)]
    lambda_sem: Option<f64>,
    #[arg(long)]
    lambda_g: Option<f64>,
    #[arg(long)]
    lambda_b: Option<f64>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Tuning {
    fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let p = &mut c.placement;
        let w = &mut p.weights;
        set(&mut p.grid_step, self.grid_step);
        set(&mut p.rot_step, self.rot_step);
        set(&mut p.top_b, self.top_b);
        set(&mut p.rounds, self.rounds);
        set(&mut p.lbfgs.max_steps, self.lbfgs_steps);
        set(&mut p.lbfgs.learning_rate, self.lr);
        set(&mut w.lambda_mot, self.lambda_mot);
        set(&mut w.lambda_tau, self.lambda_tau);
        set(&mut w.lambda_pen, self.lambda_pen);
        set(&mut w.lambda_sem, self.lambda_sem);
        set(&mut c.weighting.lambda_g, self.lambda_g);
        set(&mut c.weighting.lambda_b, self.lambda_b);
        set(&mut c.cell_size, self.cell_size);
        set(&mut c.seed, self.seed);
        c.validate().context("config")?;
        Ok(c)
    }
}

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

fn generate(cmd: &GenerateCommand) -> anyhow::Result<()> {
    let mut manifest = Manifest {
        scenes: Vec::new(),
        motions: Vec::new(),
    };
    for (i, spec) in scene_suite(cmd.seed, cmd.scenes).iter().enumerate() {
        let scene = spec.build().with_context(|| format!("scene {i}"))?;
        let stem = format!("scene_{i:02}");
        let (mesh, labels) = (PathBuf::from(format!("scenes/{stem}.obj")), PathBuf::from(format!("scenes/{stem}.labels.json")));
        write_atomic(&cmd.out.join(&mesh), write_obj(&scene.mesh).as_bytes())?;
        write_atomic(&cmd.out.join(&labels), write_labels(scene.mesh.labels().expect("synthetic scenes are labelled")).as_bytes())?;
        let truth = serde_json::to_string_pretty(&scene.truth)? + "\n";
        write_atomic(&cmd.out.join(format!("scenes/{stem}.truth.json")), truth.as_bytes())?;
        manifest.scenes.push(SceneEntry {
            mesh,
            labels: Some(labels),
        });
    }
    for (label, motion) in motion_suite(cmd.seed)? {
        let path = PathBuf::from(format!("motions/{label}.mjson"));
        write_atomic(&cmd.out.join(&path), write_motion(&motion).as_bytes())?;
        manifest.motions.push(MotionEntry {
            path,
            label,
            features: None,
        });
    }
    write_atomic(&cmd.out.join("manifest.json"), (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())?;
    println!("wrote {} scenes and {} motions to {}", manifest.scenes.len(), manifest.motions.len(), cmd.out.display());
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Run(cmd) => {
            let args = RunArgs {
                scene: cmd.scene,
                labels: cmd.labels,
                motion: cmd.motion,
                features: cmd.features,
                config: cmd.tuning.resolve()?,
                out: cmd.out,
                export_mesh: cmd.export_mesh,
                cache: scenefit_cli::cache::cache_dir_from_env(),
            };
            let outcome = run(&args)?;
            let report = &outcome.report;
            println!(
                "{} placements optimized, {} accepted, report in {}",
                report.candidates.len(),
                report.accepted,
                Path::new(&args.out).join("report.json").display()
            );
            Ok(match outcome.status() {
                Status::Ok => exit::SUCCESS,
                Status::NoValidFit => exit::NO_VALID_FIT,
            })
        }
        Command::ExportDataset(cmd) => {
            let config = cmd.tuning.resolve()?;
            let manifest = Manifest::load(&cmd.manifest)?;
            let cache = scenefit_cli::cache::cache_dir_from_env();
            let s = export_dataset(&manifest, &config, &cmd.out, cache.as_deref())?;
            println!(
                "{} pairs ({} resumed): {} exported with {} placements, {} rejected by filters, {} without a valid fit, {} failed",
                s.pairs, s.resumed, s.exported, s.placements, s.rejected, s.no_valid_fit, s.failed
            );
            Ok(if s.failed > 0 { exit::FAILURE } else { exit::SUCCESS })
        }
        Command::Generate(cmd) => {
            generate(&cmd)?;
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::FAILURE as u8)
        }
    }
}
