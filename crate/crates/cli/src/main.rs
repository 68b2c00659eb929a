use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use fragpose::detect::{detect_image, load_grayscale, read_detections_csv, write_detections_csv, DetectionSet};
use fragpose::pose::{estimate_from_detections, status_from_str, status_str, transform_from_json, EstimateStatus, StageTimings};
use fragpose::recon::{reconstruct, Reconstruction};
use fragpose::sim::{
    evaluate_delta, priors_from, read_cameras_json, run_batch, seed_range, simulate_trial, summary_csv, summary_table,
    write_simulation, ForcedOcclusion, NoiseModel, Scene, SummaryRow, TrialConfig,
};
use fragpose::Execution;

/// Exit code for a run where the pipeline reported a failure.
const EXIT_PIPELINE: u8 = 2;
/// Exit code for unreadable or invalid input.
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "fragpose", version, about = "Single-view fragment pose estimation from BB constellations")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Base seed for simulation and batches.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Noise profile name (none, calibrated, bilateral) or path to a JSON profile.
    #[arg(long, global = true)]
    noise_profile: Option<String>,
    /// JSON trial configuration; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Sequential execution and no wall-clock fields in the output.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a case: scene, cameras, truth table and four images.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect BBs in a grayscale image and write CSV.
    Detect {
        image: PathBuf,
        #[arg(long, default_value_t = 0)]
        view_id: usize,
        /// Output CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct the constellations from views 0-2 of a simulated case.
    Reconstruct {
        /// Case directory written by `simulate`.
        dir: PathBuf,
        /// Detections for views 0-2; detected from the images when absent.
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Default: `<dir>/reconstruction.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the fragment motion from view 3.
    Estimate {
        dir: PathBuf,
        /// Default: `<dir>/reconstruction.json`.
        #[arg(long)]
        recon: Option<PathBuf>,
        /// Detections for view 3; detected from the image when absent.
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Report JSON (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare an estimate report against the scene truth and write CSV.
    Evaluate {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a batch of simulated trials and print the error summary.
    Bench {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Also write the per-trial CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// How a command ended, when it did not hit an input error.
enum Outcome {
    Ok,
    PipelineFailed(String),
}

struct RunContext {
    config: TrialConfig,
    exec: Execution,
    deterministic: bool,
    seed: u64,
}

fn input<T>(r: Result<T, impl std::fmt::Display>, what: impl std::fmt::Display) -> anyhow::Result<T> {
    r.map_err(|e| anyhow!("{what}: {e}"))
}

fn load_context(g: &GlobalOpts) -> anyhow::Result<RunContext> {
    let mut config = match &g.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<TrialConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TrialConfig::default(),
    };
    if let Some(name) = &g.noise_profile {
        config.noise = input(NoiseModel::resolve(name), "noise profile")?;
    }
    input(config.noise.validate(), "noise profile")?;
    let exec = if g.deterministic { Execution::Sequential } else { config.pipeline.execution };
    config.pipeline.execution = exec;
    if let Some(n) = g.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    Ok(RunContext {
        config,
        exec,
        deterministic: g.deterministic,
        seed: g.seed,
    })
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_scene(path: &Path) -> anyhow::Result<Scene> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    input(Scene::from_json(&text), path.display())
}

/// Detections for `views`, from a CSV when given, else from `view{k}.png`.
fn view_detections(dir: &Path, csv: Option<&Path>, views: &[usize], ctx: &RunContext) -> anyhow::Result<Vec<DetectionSet>> {
    if let Some(p) = csv {
        let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let sets = input(read_detections_csv(f), p.display())?;
        return views
            .iter()
            .map(|&v| {
                sets.iter()
                    .find(|s| s.view_id == v)
                    .cloned()
                    .ok_or_else(|| anyhow!("{}: no detections for view {v}", p.display()))
            })
            .collect();
    }
    views
        .iter()
        .map(|&v| {
            let path = dir.join(format!("view{v}.png"));
            let img = input(load_grayscale(&path), path.display())?;
            input(detect_image(&img, &ctx.config.pipeline.detector, v, ctx.exec), path.display())
        })
        .collect()
}

fn cmd_simulate(ctx: &RunContext, out: &Path) -> anyhow::Result<Outcome> {
    let inputs = input(simulate_trial(ctx.seed, &ctx.config, &ForcedOcclusion::default(), |_, _| {}), "simulation")?;
    input(write_simulation(out, &inputs, ctx.seed), out.display())?;
    eprintln!("wrote case for seed {} to {}", ctx.seed, out.display());
    Ok(Outcome::Ok)
}

fn cmd_detect(ctx: &RunContext, image: &Path, view_id: usize, out: Option<&Path>) -> anyhow::Result<Outcome> {
    let img = input(load_grayscale(image), image.display())?;
    let set = input(detect_image(&img, &ctx.config.pipeline.detector, view_id, ctx.exec), image.display())?;
    let mut buf = Vec::new();
    input(write_detections_csv(&[set], &mut buf), "csv")?;
    write_out(out, &String::from_utf8(buf)?)?;
    Ok(Outcome::Ok)
}

fn cmd_reconstruct(ctx: &RunContext, dir: &Path, detections: Option<&Path>, out: Option<&Path>) -> anyhow::Result<Outcome> {
    let scene = read_scene(&dir.join("scene.json"))?;
    let cams = input(read_cameras_json(&dir.join("cameras.json")), "cameras.json")?;
    if cams.cameras.len() < 3 {
        bail!("cameras.json holds {} cameras, need 3", cams.cameras.len());
    }
    let views = view_detections(dir, detections, &[0, 1, 2], ctx)?;
    let rec = reconstruct(
        [&views[0], &views[1], &views[2]],
        [&cams.cameras[0], &cams.cameras[1], &cams.cameras[2]],
        &scene.surface,
        scene.side,
        &scene.iliac_reference,
        &ctx.config.recon,
        ctx.exec,
    );
    let rec = match rec {
        Ok(r) => r,
        Err(e) => return Ok(Outcome::PipelineFailed(format!("reconstruction failed: {e}"))),
    };
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("reconstruction.json"));
    write_out(Some(&path), &serde_json::to_string_pretty(&rec)?)?;
    eprintln!("reconstructed {} BBs ({} ilium, {} fragment)", rec.bbs.len(), rec.ilium.len(), rec.fragment.len());
    Ok(Outcome::Ok)
}

fn cmd_estimate(
    ctx: &RunContext,
    dir: &Path,
    recon: Option<&Path>,
    detections: Option<&Path>,
    out: Option<&Path>,
) -> anyhow::Result<Outcome> {
    let scene = read_scene(&dir.join("scene.json"))?;
    let cams = input(read_cameras_json(&dir.join("cameras.json")), "cameras.json")?;
    let camera = cams.cameras.get(3).ok_or_else(|| anyhow!("cameras.json has no view 3"))?;
    let recon_path = recon.map(Path::to_path_buf).unwrap_or_else(|| dir.join("reconstruction.json"));
    let text = fs::read_to_string(&recon_path).with_context(|| format!("reading {}", recon_path.display()))?;
    let rec: Reconstruction = serde_json::from_str(&text).with_context(|| format!("parsing {}", recon_path.display()))?;
    let image_path = dir.join("view3.png");
    let image = input(load_grayscale(&image_path), image_path.display())?;
    let t0 = Instant::now();
    let dets = view_detections(dir, detections, &[3], ctx)?.remove(0);
    let detect_ms = t0.elapsed().as_secs_f64() * 1e3;
    let priors = priors_from(&rec, &scene);
    let mut est = estimate_from_detections(&dets.points(), &image, camera, &priors, &ctx.config.pipeline);
    est.timings.detect_ms = detect_ms;
    est.timings.total_ms += detect_ms;
    let report = est.report_json(ctx.deterministic);
    write_out(out, &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    Ok(match est.status {
        EstimateStatus::Success => Outcome::Ok,
        s => Outcome::PipelineFailed(status_str(s).to_string()),
    })
}

fn cmd_evaluate(report: &Path, scene: &Path, out: Option<&Path>) -> anyhow::Result<Outcome> {
    let text = fs::read_to_string(report).with_context(|| format!("reading {}", report.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", report.display()))?;
    let status = v
        .get("status")
        .and_then(Value::as_str)
        .and_then(status_from_str)
        .ok_or_else(|| anyhow!("{}: missing or unknown status", report.display()))?;
    let scene = read_scene(scene)?;
    let error = match status {
        EstimateStatus::Success => {
            let delta = v
                .get("delta_app")
                .and_then(transform_from_json)
                .ok_or_else(|| anyhow!("{}: malformed delta_app", report.display()))?;
            Some(input(evaluate_delta(&delta, &scene, StageTimings::default()), "evaluation")?)
        }
        _ => None,
    };
    let row = SummaryRow {
        label: "0".into(),
        status,
        error,
    };
    write_out(out, &summary_csv(&[row]))?;
    Ok(match status {
        EstimateStatus::Success => Outcome::Ok,
        s => Outcome::PipelineFailed(status_str(s).to_string()),
    })
}

fn cmd_bench(ctx: &RunContext, trials: usize, csv: Option<&Path>) -> anyhow::Result<Outcome> {
    if trials == 0 {
        bail!("--trials must be positive");
    }
    let seeds = seed_range(ctx.seed, trials);
    let t0 = Instant::now();
    let results = run_batch(&seeds, &ctx.config, ctx.exec);
    let wall = t0.elapsed().as_secs_f64();
    let rows: Vec<SummaryRow> = results
        .iter()
        .map(|r| SummaryRow {
            label: r.seed.to_string(),
            status: r.estimate.as_ref().map_or(EstimateStatus::FailedIlium, |e| e.status),
            error: r.error.clone(),
        })
        .collect();
    print!("{}", summary_table(&rows));
    let ok = results.iter().filter(|r| r.is_success()).count();
    let recon: Vec<f64> = results.iter().filter_map(|r| r.recon_rms_mm).collect();
    println!("success {ok}/{trials}");
    if !recon.is_empty() {
        println!("reconstruction RMS mean {:.4} mm", recon.iter().sum::<f64>() / recon.len() as f64);
    }
    if !ctx.deterministic {
        let est: Vec<f64> = results.iter().filter(|r| r.estimate.is_some()).map(|r| r.estimate_seconds).collect();
        let mean = est.iter().sum::<f64>() / est.len().max(1) as f64;
        let max = est.iter().copied().fold(0.0, f64::max);
        println!("estimate time mean {mean:.3} s, max {max:.3} s; batch wall time {wall:.2} s");
    }
    if let Some(p) = csv {
        write_out(Some(p), &summary_csv(&rows))?;
    }
    Ok(Outcome::Ok)
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let ctx = load_context(&cli.global)?;
    match &cli.command {
        Command::Simulate { out } => cmd_simulate(&ctx, out),
        Command::Detect { image, view_id, out } => cmd_detect(&ctx, image, *view_id, out.as_deref()),
        Command::Reconstruct { dir, detections, out } => cmd_reconstruct(&ctx, dir, detections.as_deref(), out.as_deref()),
        Command::Estimate {
            dir,
            recon,
            detections,
            out,
        } => cmd_estimate(&ctx, dir, recon.as_deref(), detections.as_deref(), out.as_deref()),
        Command::Evaluate { report, scene, out } => cmd_evaluate(report, scene, out.as_deref()),
        Command::Bench { trials, csv } => cmd_bench(&ctx, *trials, csv.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::PipelineFailed(msg)) => {
            eprintln!("pipeline failure: {msg}");
            ExitCode::from(EXIT_PIPELINE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
