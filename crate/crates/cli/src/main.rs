//! `fmnet`: batch driver for the parking perception stack.
//!
//! Exit codes: 0 success, 2 usage or I/O error, 3 no slot found, 4 perception
//! degraded by camera soiling.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fisheye_multinet::dataset::{read_json, read_ppm, write_json, write_pgm, Dataset, Sample, Split};
use fisheye_multinet::eval::{
    evaluate_network, run_comparison, write_report, DecodeSettings, EvalReport, Evaluator, Predictions,
};
use fisheye_multinet::geometry::CameraRig;
use fisheye_multinet::labels::{Scenario, SegMask, SoilingTileReport};
use fisheye_multinet::model::{Network, NetworkConfig, TaskSet};
use fisheye_multinet::park::{plan_parking, CameraPerception, ParkStatus};
use fisheye_multinet::planner::{PlannerConfig, VehicleSpec};
use fisheye_multinet::synth::{generate_dataset, render_scene, sample_scene, GenerateParams, SceneParams};
use fisheye_multinet::train::{train, write_log, TrainConfig, TrainMode};
use serde::{Deserialize, Serialize};

const DEFAULT_SEED: u64 = 42;
const MODEL_FILE: &str = "model.fmnw";
const LOG_FILE: &str = "train_log.csv";

#[derive(Debug, Parser)]
#[command(name = "fmnet", version, about = "Multi-task fisheye perception for automated parking")]
struct Cli {
    /// Seed for every random choice [default: 42].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; created if missing, its parent must exist.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// JSON configuration file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic dataset (`--config`: generation parameters).
    Generate(GenerateArgs),
    /// Train a network (`--config`: training configuration, required).
    Train(TrainArgs),
    /// Score a model, the ground truth, or a list of training configurations.
    Eval(EvalArgs),
    /// Run a model on one image.
    Infer(InferArgs),
    /// Render one scene and plan a parking slot (`--seed` picks the scene).
    Park(ParkArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Number of scenes; each yields one image per camera.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Overrides the dataset named in the configuration.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Dataset manifest or directory; the test split is scored.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, conflicts_with = "oracle_perception")]
    model: Option<PathBuf>,
    /// Score ground truth as if it were the network output.
    #[arg(long)]
    oracle_perception: bool,
    /// Column label of the report.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// Binary PPM image at the model's input size.
    #[arg(long)]
    image: PathBuf,
    /// Rig camera that took the image.
    #[arg(long, default_value = "front")]
    camera: String,
}

#[derive(Debug, Args)]
struct ParkArgs {
    #[arg(long, conflicts_with = "oracle_perception", required_unless_present = "oracle_perception")]
    model: Option<PathBuf>,
    #[arg(long)]
    oracle_perception: bool,
    /// parallel, perpendicular, fishbone or ambiguous.
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    #[arg(long)]
    free_slots: Option<usize>,
    /// Number of cameras covered by a large opaque disc.
    #[arg(long, default_value_t = 0)]
    soiled_cameras: usize,
    /// Chance of random lens soiling per camera.
    #[arg(long, default_value_t = 0.3)]
    soiling_probability: f64,
    /// Render size with oracle perception; a model fixes its own.
    #[arg(long, default_value_t = 1280)]
    width: usize,
    #[arg(long, default_value_t = 384)]
    height: usize,
}

/// Optional `--config` of `park`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct ParkConfig {
    planner: PlannerConfig,
    vehicle: VehicleSpec,
    decode: DecodeSettings,
}

/// `eval --config` accepts one training configuration or a list of them.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ConfigList {
    One(Box<TrainConfig>),
    Many(Vec<TrainConfig>),
}

/// Errors that map to a dedicated exit code rather than 2.
#[derive(Debug, Clone, Copy)]
enum Outcome {
    Done,
    NoSlot,
    Degraded,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    Scenario::parse(s).ok_or_else(|| format!("unknown scenario {s:?}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NoSlot) => ExitCode::from(3),
        Ok(Outcome::Degraded) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    if let Some(config) = &cli.config {
        require_file(config)?;
    }
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Infer(a) => infer(cli, a),
        Command::Park(a) => park(cli, a),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("{}: no such file", path.display());
    }
    Ok(())
}

fn require_path(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("{}: no such file or directory", path.display());
    }
    Ok(())
}

/// Checks that `dir` exists or can be created without creating parents.
fn check_out_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        return Ok(());
    }
    if dir.exists() {
        bail!("{}: exists and is not a directory", dir.display());
    }
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        bail!("{}: parent directory {} does not exist", dir.display(), parent.display());
    }
    Ok(())
}

fn make_out_dir(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        std::fs::create_dir(dir).with_context(|| format!("{}: cannot create directory", dir.display()))?;
    }
    Ok(())
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<Outcome> {
    check_out_dir(&cli.out)?;
    let mut params = match &cli.config {
        Some(path) => read_json::<GenerateParams>(path)?,
        None => GenerateParams::desk(),
    };
    if a.width.is_some() || a.height.is_some() {
        let width = a.width.unwrap_or(params.width);
        let height = a.height.unwrap_or(params.height);
        let scene = params.scene.clone();
        params = GenerateParams {
            scene: SceneParams {
                image_width: width,
                image_height: height,
                ..scene
            },
            ..GenerateParams::new(width, height)
        };
        params.tiles = GenerateParams::desk().tiles;
    }
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let manifest = generate_dataset(a.n, seed, &cli.out, &params)?;
    println!("manifest {}", cli.out.join(fisheye_multinet::dataset::MANIFEST_FILE).display());
    println!(
        "samples train {} val {} test {}",
        manifest.train.len(),
        manifest.val.len(),
        manifest.test.len()
    );
    Ok(Outcome::Done)
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<Outcome> {
    let Some(config_path) = &cli.config else {
        bail!("train needs --config <training configuration JSON>");
    };
    let mut config: TrainConfig = read_json(config_path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(m) = &a.manifest {
        config.manifest = m.clone();
    } else if config.manifest.is_relative() {
        let base = config_path.parent().unwrap_or(Path::new(""));
        config.manifest = base.join(&config.manifest);
    }
    require_path(&config.manifest)?;
    check_out_dir(&cli.out)?;
    make_out_dir(&cli.out)?;
    let verbose = cli.verbose > 0;
    let outcome = train(&config, |log, _| {
        if verbose {
            let l = log.losses;
            eprintln!(
                "epoch {} loss seg {:?} det {:?} soil {:?} weights {:?}",
                log.epoch, l.seg, l.det, l.soil, log.weights
            );
        }
        ControlFlow::Continue(())
    })?;
    let model = cli.out.join(MODEL_FILE);
    outcome.network.save(&model, config.seed)?;
    let log = cli.out.join(LOG_FILE);
    write_log(&log, &outcome.log, config.mode)?;
    println!("model {}", model.display());
    println!("log {} ({} epochs)", log.display(), outcome.log.len());
    Ok(Outcome::Done)
}

fn task_label(tasks: TaskSet) -> &'static str {
    [TrainMode::StlSeg, TrainMode::StlDet, TrainMode::StlSoil, TrainMode::Mtl]
        .into_iter()
        .find(|m| m.tasks() == tasks)
        .map_or("custom", TrainMode::label)
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<Outcome> {
    require_path(&a.manifest)?;
    if let Some(model) = &a.model {
        require_file(model)?;
    }
    check_out_dir(&cli.out)?;
    let reports: Vec<EvalReport> = match (&cli.config, &a.model, a.oracle_perception) {
        (Some(path), None, false) => {
            let mut configs = match read_json::<ConfigList>(path)? {
                ConfigList::One(c) => vec![*c],
                ConfigList::Many(cs) => cs,
            };
            if let Some(seed) = cli.seed {
                for c in &mut configs {
                    c.seed = seed;
                }
            }
            run_comparison(&a.manifest, &configs)?
        }
        (None, Some(model), false) => {
            let net = Network::load(model)?;
            let test = load_test(&a.manifest)?;
            let label = a.label.clone().unwrap_or_else(|| task_label(net.config().tasks).to_string());
            vec![evaluate_network(&net, &test, &DecodeSettings::default(), &label)?]
        }
        (None, None, true) => {
            let test = load_test(&a.manifest)?;
            let mut ev = Evaluator::new(TaskSet::ALL, DecodeSettings::default().match_iou);
            for s in &test {
                ev.add(&Predictions::oracle(s), s);
            }
            vec![ev.report(a.label.as_deref().unwrap_or("oracle"))]
        }
        _ => bail!("eval needs exactly one of --model, --oracle-perception or --config"),
    };
    make_out_dir(&cli.out)?;
    write_report(&cli.out, &reports)?;
    print!("{}", fisheye_multinet::eval::report_text(&reports));
    Ok(Outcome::Done)
}

fn load_test(manifest: &Path) -> Result<Vec<Sample>> {
    let dataset = Dataset::open(manifest)?;
    if dataset.manifest.test.is_empty() {
        bail!("{}: test split is empty", manifest.display());
    }
    Ok(dataset.load_split(Split::Test)?)
}

#[derive(Debug, Serialize)]
struct InferOutput<'a> {
    camera: &'a str,
    boxes: Option<&'a [fisheye_multinet::labels::DetectedBox]>,
    soiling: Option<&'a SoilingTileReport>,
}

fn infer(cli: &Cli, a: &InferArgs) -> Result<Outcome> {
    require_file(&a.model)?;
    require_file(&a.image)?;
    check_out_dir(&cli.out)?;
    let net = Network::load(&a.model)?;
    let image = read_ppm(&a.image)?;
    let cfg = net.config();
    if (image.width, image.height) != (cfg.input_width, cfg.input_height) {
        bail!(
            "{}: image is {}x{}, model expects {}x{}",
            a.image.display(),
            image.width,
            image.height,
            cfg.input_width,
            cfg.input_height
        );
    }
    let rig = CameraRig::default_rig(image.width, image.height);
    let cam = rig
        .camera(&a.camera)
        .with_context(|| format!("unknown camera {:?}", a.camera))?;
    let sample = Sample {
        stem: String::new(),
        scene_id: 0,
        camera: a.camera.clone(),
        horizon_row: cam.horizon_row(),
        mask: SegMask {
            width: image.width,
            height: image.height,
            data: vec![0; image.width * image.height],
        },
        image,
        boxes: Vec::new(),
        soiling: SoilingTileReport::clean(cfg.soiling_tiles.0, cfg.soiling_tiles.1),
    };
    let pred = Predictions::from_network(&net, &sample, &DecodeSettings::default())?;
    make_out_dir(&cli.out)?;
    let stem = a
        .image
        .file_stem()
        .map_or_else(|| "image".to_string(), |s| s.to_string_lossy().into_owned());
    if let Some(mask) = &pred.mask {
        write_pgm(&cli.out.join(format!("{stem}.mask.pgm")), mask)?;
    }
    let json = cli.out.join(format!("{stem}.pred.json"));
    write_json(
        &json,
        &InferOutput {
            camera: &a.camera,
            boxes: pred.boxes.as_deref(),
            soiling: pred.soiling.as_ref(),
        },
    )?;
    println!("predictions {}", json.display());
    Ok(Outcome::Done)
}

fn park(cli: &Cli, a: &ParkArgs) -> Result<Outcome> {
    if let Some(model) = &a.model {
        require_file(model)?;
    }
    check_out_dir(&cli.out)?;
    let config: ParkConfig = match &cli.config {
        Some(path) => read_json(path)?,
        None => ParkConfig::default(),
    };
    let net = a.model.as_deref().map(Network::load).transpose()?;
    let (width, height, tiles) = match &net {
        Some(n) => {
            let c = n.config();
            (c.input_width, c.input_height, c.soiling_tiles)
        }
        None => (a.width, a.height, NetworkConfig::desk().soiling_tiles),
    };
    let mut params = SceneParams::new(width, height);
    if let Some(s) = a.scenario {
        params = params.only(s);
    }
    params.free_slots = a.free_slots;
    params.soiled_cameras = a.soiled_cameras;
    params.soiling_probability = a.soiling_probability;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let scene = sample_scene(seed, &params);
    let rig = CameraRig::default_rig(width, height);
    let samples = render_scene(&scene, 0, &rig, tiles);
    let views = samples
        .iter()
        .map(|s| match &net {
            Some(n) => CameraPerception::from_network(n, s, &config.decode),
            None => Ok(CameraPerception::oracle(s)),
        })
        .collect::<fisheye_multinet::Result<Vec<_>>>()?;
    let (report, map) = plan_parking(&views, &rig, &config.planner, &config.vehicle)?;
    make_out_dir(&cli.out)?;
    write_json(&cli.out.join("slot.json"), &report)?;
    write_json(&cli.out.join("objects.json"), &report.fused_objects)?;
    write_json(&cli.out.join("scene.json"), &scene)?;
    map.write_snapshot(&cli.out)?;
    Ok(match report.status {
        ParkStatus::SlotFound => {
            let s = report.chosen.as_ref().expect("slot found");
            println!(
                "slot {:?} center ({:.2}, {:.2}) heading {:.1} deg",
                s.scenario,
                s.center[0],
                s.center[1],
                s.heading.to_degrees()
            );
            Outcome::Done
        }
        ParkStatus::NoSlot => {
            println!("no slot");
            Outcome::NoSlot
        }
        ParkStatus::PerceptionDegraded => {
            println!("perception degraded: soiled cameras {}", report.soiled_cameras.join(", "));
            Outcome::Degraded
        }
    })
}
