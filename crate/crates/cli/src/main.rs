//! `pact`: dataset generation, Deconv-Net training, compensation,
//! reconstruction and evaluation from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pact_core::compensation::{infer_full, init_model, load_model, save_model, train};
use pact_core::config::RunConfig;
use pact_core::dataset::{generate_dataset, read_spheres, substream_seed, Manifest, Variant, MANIFEST_FILE};
use pact_core::forward::{add_noise, noise_scale, simulate, Mode};
use pact_core::io::{read_pressure, write_pressure, write_volume};
use pact_core::study::{eval_rows_tsv, evaluate_split, reconstruct, resolution_study, summarize, summary_tsv};
use pact_core::{Model, Pressure};

#[derive(Parser)]
#[command(name = "pact", version, about = "3D photoacoustic tomography with learned transducer compensation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; omitted keys take the preset defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 1 gives bit-reproducible outputs.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a Stochastic Spheres dataset and its manifest.
    GenData,
    /// Point and rect data for a sphere list (`x y z radius amplitude` per line).
    Simulate {
        #[arg(long)]
        spheres: PathBuf,
    },
    /// Train a Deconv-Net on a generated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Map a rect tensor through a trained checkpoint.
    Compensate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Universal backprojection of a pressure tensor onto the configured grid.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        /// Overrides `recon.presmooth_fwhm` (mm; 0 disables).
        #[arg(long)]
        presmooth_fwhm: Option<f64>,
    },
    /// Image-quality metrics of compensated vs uncompensated reconstructions on the test split.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// FWHM versus sphere position for the Deterministic Spheres variants.
    ResolutionStudy {
        /// Without a checkpoint the compensated method is reported as NA.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "baseline,high_noise,low_sos,high_sos")]
        variants: Vec<String>,
    },
}

/// Files a command writes under `--out`, removed again if it fails.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    paths: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            paths: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.paths.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    fn discard(&self) {
        if self.created_dir {
            let _ = fs::remove_dir_all(&self.dir);
            return;
        }
        for p in &self.paths {
            let _ = if p.is_dir() { fs::remove_dir_all(p) } else { fs::remove_file(p) };
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => {
            log::info!("no --config given, using the desk preset");
            Ok(RunConfig::preset("desk")?)
        }
    }
}

fn run(cli: &Cli, out: &mut Outputs) -> Result<()> {
    let c = &cli.common;
    let mut cfg = load_config(c)?;
    let start = Instant::now();
    match &cli.command {
        Command::GenData => {
            out.path("samples");
            out.path(MANIFEST_FILE);
            out.write("config.toml", &cfg.to_toml_string())?;
            let m = generate_dataset(
                cfg.dataset.n_samples,
                &cfg.system,
                &cfg.dataset.distribution,
                cfg.dataset.noise_fraction,
                c.seed,
                &out.dir,
            )?;
            log::info!("wrote {} samples to {}", m.entries.len(), out.dir.display());
        }
        Command::Simulate { spheres } => {
            let spheres = read_spheres(spheres)?;
            let point: Pressure = simulate(&spheres, &cfg.system, Mode::Point)?;
            let mut rect: Pressure = simulate(&spheres, &cfg.system, Mode::Rect)?;
            // Noise is relative to the data, so an empty scene stays exactly zero.
            if cfg.dataset.noise_fraction > 0.0 && !spheres.is_empty() {
                let sigma = noise_scale(&rect, cfg.dataset.noise_fraction)?;
                rect = add_noise(&rect, sigma, substream_seed(c.seed, 0, 0))?;
            }
            write_pressure(&out.path("point.tns"), &point)?;
            write_pressure(&out.path("rect.tns"), &rect)?;
        }
        Command::Train { data } => {
            let manifest = Manifest::read(data)?;
            if manifest.config.config_hash() != cfg.system.config_hash() {
                log::warn!("[system] differs from the dataset's; training on the dataset's system");
            }
            cfg.train.seed = c.seed;
            let model: Model = init_model(&cfg.model, &manifest.config, c.seed)?;
            let (model, history) = train(model, &manifest, &cfg.train)?;
            save_model(&out.path("model.tns"), &model)?;
            out.write("history.tsv", &history.to_tsv())?;
            log::info!(
                "best validation MAE {:.4e} at epoch {} (identity {:.4e})",
                history.best_val_mae(),
                history.best_epoch,
                history.identity_val_mae
            );
        }
        Command::Compensate { model, input } => {
            let model: Model = load_model(model)?;
            let p: Pressure = read_pressure(input)?;
            write_pressure(&out.path("compensated.tns"), &infer_full(&model, &p)?)?;
        }
        Command::Reconstruct { input, presmooth_fwhm } => {
            if let Some(f) = presmooth_fwhm {
                cfg.recon.presmooth_fwhm = *f;
                cfg.validate()?;
            }
            let p: Pressure = read_pressure(input)?;
            p.check_matches(&cfg.system)?;
            write_volume(&out.path("volume.tns"), &reconstruct(&p, &cfg.system, &cfg.recon)?)?;
        }
        Command::Evaluate { data, model } => {
            let manifest = Manifest::read(data)?;
            let model: Model = load_model(model)?;
            let rows = evaluate_split(&manifest, &model, &cfg.recon, &cfg.eval)?;
            out.write("metrics.tsv", &eval_rows_tsv(&rows))?;
            let summary = summarize(&rows, &cfg.eval.shells)?;
            let text = summary_tsv(&summary);
            out.write("summary.tsv", &text)?;
            print!("{text}");
        }
        Command::ResolutionStudy { model, variants } => {
            let variants = variants.iter().map(|v| v.parse()).collect::<pact_core::Result<Vec<Variant>>>()?;
            if variants.is_empty() {
                bail!("no variants requested");
            }
            let model: Option<Model> = model.as_deref().map(load_model).transpose()?;
            let study = resolution_study(&cfg.system, &variants, model.as_ref(), &cfg.eval, c.seed)?;
            out.write("resolution.tsv", &study.table_tsv())?;
            out.write("profiles.tsv", &study.profiles_tsv())?;
            print!("{}", study.table_tsv());
        }
    }
    log::info!("done in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let mut out = match Outputs::new(&cli.common.out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    match run(&cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            out.discard();
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
