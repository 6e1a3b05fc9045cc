use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hdfnet_core::io::{load_run_config, load_weights, read_bundle_file, read_wav, save_weights, write_wav, RunConfig};
use hdfnet_core::loss::{comp_loss, mag_loss, si_sdr, total_loss};
use hdfnet_core::model::{layer_schema, macs_per_second, param_count, HdfNet, TensorRole, WeightBundle};
use hdfnet_core::spectral::{istft_to_len, stft};
use hdfnet_core::verify;

#[derive(Parser)]
#[command(name = "hdfnet", version, about = "Two-stage deep filtering speech enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance a 16 kHz mono WAV file.
    Enhance {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the layer table, parameter total and compute cost of a bundle.
    Inspect {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the built-in oracle and property checks.
    Verify,
    /// Compare two WAV files with the spectral losses and SI-SDR.
    Loss {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long = "est")]
        estimate: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a freshly initialized weight bundle.
    Init {
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// All-zero weights instead of random ones.
        #[arg(long)]
        zeros: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => load_run_config(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn enhance(input: &Path, output: &Path, weights: Option<&Path>, config: Option<&Path>) -> Result<()> {
    let cfg = run_config(config)?;
    let weights = weights
        .or(cfg.paths.weights.as_deref())
        .context("no weights given (use --weights or paths.weights)")?;
    let bundle = load_weights(weights, &cfg.model).with_context(|| format!("loading {}", weights.display()))?;
    let net = HdfNet::new(&cfg.model, &bundle)?;
    let wav = read_wav(input).with_context(|| format!("reading {}", input.display()))?;
    let spec = stft(&wav, &cfg.stft)?;
    let enhanced = net.enhance(&spec)?.output;
    let out = istft_to_len(&enhanced, &cfg.stft, wav.len())?;
    write_wav(output, &out).with_context(|| format!("writing {}", output.display()))?;
    println!("frames={}", spec.frames());
    println!("samples={}", out.len());
    println!("output={}", output.display());
    Ok(())
}

fn inspect(weights: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = run_config(config)?;
    let bundle = read_bundle_file(weights).with_context(|| format!("reading {}", weights.display()))?;
    bundle.validate(&cfg.model)?;
    for spec in layer_schema(&cfg.model)? {
        let shape: Vec<String> = spec.shape.iter().map(usize::to_string).collect();
        let role = match spec.role {
            TensorRole::Param => "param",
            TensorRole::Buffer => "buffer",
        };
        println!(
            "layer={} shape={} numel={} role={role}",
            spec.name,
            shape.join("x"),
            spec.numel()
        );
    }
    println!("tensors={}", bundle.len());
    println!("params_total={}", param_count(&cfg.model)?);
    println!("macs_per_second={:.0}", macs_per_second(&cfg.model, &cfg.stft)?);
    Ok(())
}

fn verify_all() -> Result<()> {
    let checks = verify::run_all();
    for c in &checks {
        println!(
            "check={} status={} elapsed_s={:.3} {}",
            c.name,
            if c.passed { "pass" } else { "fail" },
            c.elapsed.as_secs_f64(),
            c.detail
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if !failed.is_empty() {
        bail!("verification failed: {}", failed.join(", "));
    }
    Ok(())
}

fn loss(reference: &Path, estimate: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = run_config(config)?;
    let r = read_wav(reference).with_context(|| format!("reading {}", reference.display()))?;
    let e = read_wav(estimate).with_context(|| format!("reading {}", estimate.display()))?;
    if r.len() != e.len() {
        bail!("length mismatch: reference {} samples, estimate {}", r.len(), e.len());
    }
    let (rs, es) = (stft(&r, &cfg.stft)?, stft(&e, &cfg.stft)?);
    println!("mag_loss={}", mag_loss(&rs, &es, cfg.loss.c)?);
    println!("comp_loss={}", comp_loss(&rs, &es, cfg.loss.c)?);
    println!("total_loss={}", total_loss(&rs, &es, &cfg.loss)?);
    println!("si_sdr_db={}", si_sdr(&r, &e)?);
    Ok(())
}

fn init(output: &Path, seed: u64, zeros: bool, config: Option<&Path>) -> Result<()> {
    let cfg = run_config(config)?;
    let bundle = if zeros {
        WeightBundle::zeros(&cfg.model)?
    } else {
        WeightBundle::random(&cfg.model, seed)?
    };
    save_weights(&bundle, output)?;
    println!("tensors={}", bundle.len());
    println!("digest={}", hdfnet_core::model::weights::hex(&bundle.digest));
    println!("output={}", output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Enhance {
            input,
            output,
            weights,
            config,
        } => enhance(input, output, weights.as_deref(), config.as_deref()),
        Command::Inspect { weights, config } => inspect(weights, config.as_deref()),
        Command::Verify => verify_all(),
        Command::Loss {
            reference,
            estimate,
            config,
        } => loss(reference, estimate, config.as_deref()),
        Command::Init {
            output,
            seed,
            zeros,
            config,
        } => init(output, *seed, *zeros, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
