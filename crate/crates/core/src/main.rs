use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bandtrack::cli::{self, CliError, Config, SweepConfig};
use bandtrack::imaging::io::{write_pgm, write_ppm};
use bandtrack::synthetic::{self, SceneSpec};

#[derive(Parser)]
#[command(name = "bandtrack", version, about = "Track a color-banded pointer in 3D from one camera")]
struct Args {
    /// JSON config with camera, pointer and detection settings. Defaults to
    /// the built-in reference camera and pointer.
    #[arg(long, global = true, env = "BANDTRACK_CONFIG")]
    config: Option<PathBuf>,
    /// Color model JSON written by `calibrate`.
    #[arg(long, global = true, env = "BANDTRACK_COLOR_MODEL")]
    color_model: Option<PathBuf>,
    /// Prefix for output files.
    #[arg(long, global = true, env = "BANDTRACK_OUT_PREFIX")]
    out_prefix: Option<PathBuf>,
    /// Overrides the association seed and the sweep seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a color model from an image and its label mask (PGM, 0 = unlabeled).
    Calibrate { image: PathBuf, mask: PathBuf },
    /// Locate the pointer in one PPM frame and print its pose.
    Probe { image: PathBuf },
    /// Locate the pointer in every PPM frame of a directory.
    Track { frames: PathBuf },
    /// Run a synthetic depth × angle sweep.
    Eval { sweep: PathBuf },
    /// Render a synthetic frame and its band mask.
    Render {
        #[arg(long, default_value_t = 500.0)]
        depth_mm: f64,
        #[arg(long, default_value_t = 0.0)]
        angle_deg: f64,
        #[arg(long, default_value_t = 0.0)]
        blur_px: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Print the reference config.
    DefaultConfig,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(args: Args) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => Config::load(path)?,
        None => {
            log::info!("no --config given; using the reference camera and pointer");
            Config::reference()
        }
    };
    if let Some(seed) = args.seed {
        config.association_seed = seed;
    }
    let model_path = args.color_model.clone().or_else(|| config.paths.color_model.clone());
    let prefix = args
        .out_prefix
        .clone()
        .or_else(|| config.paths.output_prefix.clone())
        .unwrap_or_else(|| PathBuf::from("bandtrack"));
    let need_model = || {
        let path = model_path
            .as_deref()
            .ok_or_else(|| CliError::Config("a color model is required (--color-model)".into()))?;
        cli::load_color_model(path)
    };

    match args.command {
        Command::Calibrate { image, mask } => {
            let out = model_path.unwrap_or_else(|| with_suffix(&prefix, "_colors.json"));
            let (_, summary) = cli::cmd_calibrate(&image, &mask, &config, &out)?;
            print!("{summary}");
            println!("wrote {}", out.display());
        }
        Command::Probe { image } => {
            let record = cli::cmd_probe(&image, &config, &need_model()?)?;
            println!("{record}");
        }
        Command::Track { frames } => {
            let out = cli::cmd_track(&frames, &config, &need_model()?, &prefix, args.jobs)?;
            let n = out.records.len();
            println!(
                "{n} frames, {} failed, {} cloud points, {} filtered{}",
                out.failure_count(),
                out.cloud.len(),
                out.cloud.filtered_count(),
                if out.cloud.filter_skipped { " (filter skipped)" } else { "" }
            );
        }
        Command::Eval { sweep } => {
            let mut sweep = SweepConfig::load(&sweep)?;
            if let Some(seed) = args.seed {
                sweep.seed = seed;
            }
            let model = model_path.as_deref().map(cli::load_color_model).transpose()?;
            let (reports, path) = cli::cmd_eval(&sweep, &config, model.as_ref(), &prefix, args.jobs)?;
            let failures: usize = reports.iter().map(|r| r.failures).sum();
            println!("{} cells, {failures} failed trials; wrote {}", reports.len(), path.display());
        }
        Command::Render {
            depth_mm,
            angle_deg,
            blur_px,
            noise,
        } => {
            let mut scene = SceneSpec::new(synthetic::grid_pose(depth_mm, angle_deg), config.pointer.to_spec()?);
            scene.blur_sigma_px = blur_px;
            scene.noise_sigma = noise;
            scene.seed = args.seed.unwrap_or(0);
            let (img, truth) = synthetic::render(&scene, &config.camera, synthetic::IMAGE_WIDTH, synthetic::IMAGE_HEIGHT)?;
            let (ppm, pgm) = (with_suffix(&prefix, ".ppm"), with_suffix(&prefix, "_mask.pgm"));
            if let Some(dir) = ppm.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            write_ppm(&ppm, &img).map_err(|e| CliError::image(&ppm, e))?;
            write_pgm(&pgm, &truth.band_mask).map_err(|e| CliError::image(&pgm, e))?;
            let t = truth.pose.tip;
            println!("wrote {} and {}; tip_mm {} {} {}", ppm.display(), pgm.display(), t.x, t.y, t.z);
        }
        Command::DefaultConfig => println!("{}", Config::reference().to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bandtrack: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
