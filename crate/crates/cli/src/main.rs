use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use prunekit::arch::build_arch;
use prunekit::checkpoint::Checkpoint;
use prunekit::compact::compact;
use prunekit::config::{RunConfig, KEYS};
use prunekit::data::make_dataset;
use prunekit::flops::{count_flops_with, uniform_rates, ChannelCounting, PruneRates};
use prunekit::network::Network;
use prunekit::pruning::{FilterMask, Mode, RateRamp, ScheduleConfig};
use prunekit::trainer::{evaluate, run_ghfp};
use prunekit::{Error, Result};

fn config_help() -> String {
    let mut s = String::from(
        "Config files hold `key = value` lines; `#` starts a comment.\n\
         A `[layer.<id>]` section may set `goal_rate` for one layer.\n\nKeys and defaults:\n",
    );
    for (k, v) in KEYS {
        s.push_str(&format!("  {k:<16} {v}\n"));
    }
    s
}

#[derive(Parser)]
#[command(name = "prunekit", version, about = "Soft/hard filter pruning experiments")]
#[command(after_help = config_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Counting {
    Integer,
    Fractional,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ramp {
    Cubic,
    Linear,
    Constant,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer MAC counts and the reduction for a pruning rate.
    Flops {
        arch: String,
        /// Uniform rate for every prunable conv.
        #[arg(long, conflicts_with = "rates")]
        rate: Option<f64>,
        /// File of `<layer> = <rate>` lines.
        #[arg(long)]
        rates: Option<PathBuf>,
        /// How a fractional number of kept channels is counted.
        #[arg(long, value_enum, default_value = "fractional")]
        counting: Counting,
    },
    /// The α, λ_h and rate schedule as CSV.
    Schedule {
        #[arg(long, default_value_t = 200)]
        t_max: usize,
        #[arg(long, default_value_t = 0.0)]
        alpha0: f64,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda_i: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_f: f64,
        #[arg(long, value_enum, default_value = "cubic")]
        ramp: Ramp,
        #[arg(long, default_value_t = 0.4)]
        goal: f64,
        #[arg(long, default_value = "GHFP")]
        mode: String,
    },
    /// Train and prune from a config file.
    #[command(after_help = config_help())]
    Run {
        config: PathBuf,
        /// Override the config's mode. α₀ is reset to the mode's convention if it conflicts.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run seeds seed..seed+N in parallel (capped by PRUNEKIT_THREADS).
        #[arg(long)]
        sweep: Option<u64>,
        /// Directory for outputs the config does not name.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Physically remove pruned filters from a checkpoint.
    Compact {
        checkpoint: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Test accuracy of a checkpoint on the test split its config describes.
    Eval { checkpoint: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let detail = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {}", e.code(), detail);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Flops {
            arch,
            rate,
            rates,
            counting,
        } => cmd_flops(&arch, rate, rates.as_deref(), counting),
        Command::Schedule {
            t_max,
            alpha0,
            epsilon,
            lambda_i,
            lambda_f,
            ramp,
            goal,
            mode,
        } => {
            let sched = ScheduleConfig {
                mode: mode.parse()?,
                alpha0,
                epsilon,
                lambda_i,
                lambda_f,
                t_max,
                goal_rate: goal,
                layer_rates: BTreeMap::new(),
                rate_ramp: match ramp {
                    Ramp::Cubic => RateRamp::Cubic,
                    Ramp::Linear => RateRamp::Linear,
                    Ramp::Constant => RateRamp::Constant,
                },
            };
            print!("{}", sched.dump_csv(&[])?);
            Ok(())
        }
        Command::Run {
            config,
            mode,
            seed,
            sweep,
            out,
        } => cmd_run(&config, mode.as_deref(), seed, sweep, &out),
        Command::Compact { checkpoint, output } => cmd_compact(&checkpoint, output),
        Command::Eval { checkpoint } => cmd_eval(&checkpoint),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn parse_rates(text: &str) -> Result<PruneRates> {
    let mut rates = PruneRates::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
        let (id, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err("expected `<layer> = <rate>`".into()))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("invalid rate `{}`", v.trim())))?;
        rates.insert(id.trim().to_string(), v);
    }
    Ok(rates)
}

fn cmd_flops(arch: &str, rate: Option<f64>, rates: Option<&Path>, counting: Counting) -> Result<()> {
    let spec = build_arch(arch)?;
    let rates = match (rate, rates) {
        (_, Some(p)) => parse_rates(&read_text(p)?)?,
        (r, None) => uniform_rates(&spec, r.unwrap_or(0.0)),
    };
    let counting = match counting {
        Counting::Integer => ChannelCounting::Integer,
        Counting::Fractional => ChannelCounting::Fractional,
    };
    print!("{}", count_flops_with(&spec, &rates, counting)?.to_csv());
    Ok(())
}

fn apply_mode(cfg: &mut RunConfig, mode: Mode) {
    let s = &mut cfg.schedule;
    s.mode = mode;
    match mode {
        Mode::Sfp | Mode::Asfp | Mode::Hfp => s.alpha0 = 0.0,
        Mode::Srfp | Mode::Asrfp if s.alpha0 == 0.0 => s.alpha0 = 1.0,
        _ => {}
    }
}

/// `metrics.csv` becomes `metrics_seed3.csv`.
fn with_seed(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_seed{seed}.{ext}"),
        None => format!("{stem}_seed{seed}"),
    };
    path.with_file_name(name)
}

fn cmd_run(config: &Path, mode: Option<&str>, seed: Option<u64>, sweep: Option<u64>, out: &Path) -> Result<()> {
    let mut base = RunConfig::from_text(&read_text(config)?)?;
    if let Some(m) = mode {
        apply_mode(&mut base, m.parse()?);
    }
    if let Some(s) = seed {
        base.seed = s;
    }
    let metrics = base.metrics_path.clone().unwrap_or_else(|| out.join("metrics.csv"));
    let ckpt = base.checkpoint_path.clone().unwrap_or_else(|| out.join("checkpoint.pkpt"));
    let seeds: Vec<u64> = match sweep {
        None => vec![base.seed],
        Some(0) => return Err(Error::Config("--sweep needs at least one seed".into())),
        Some(n) => (base.seed..base.seed + n).collect(),
    };
    let configs: Vec<RunConfig> = seeds
        .iter()
        .map(|&s| {
            let mut c = base.clone();
            c.seed = s;
            if sweep.is_some() {
                c.metrics_path = Some(with_seed(&metrics, s));
                c.checkpoint_path = Some(with_seed(&ckpt, s));
            } else {
                c.metrics_path = Some(metrics.clone());
                c.checkpoint_path = Some(ckpt.clone());
            }
            c
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }

    let threads = std::env::var("PRUNEKIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<f64>> = pool.install(|| {
        use rayon::prelude::*;
        configs
            .par_iter()
            .map(|c| run_ghfp(c).map(|o| o.final_accuracy()))
            .collect()
    });
    for (c, r) in configs.iter().zip(results) {
        let acc = r?;
        println!(
            "seed={} test_acc={} metrics={} checkpoint={}",
            c.seed,
            acc,
            c.metrics_path.as_ref().unwrap().display(),
            c.checkpoint_path.as_ref().unwrap().display()
        );
    }
    Ok(())
}

fn cmd_compact(path: &Path, output: Option<PathBuf>) -> Result<()> {
    let ck = Checkpoint::load(path)?;
    let net = Network::from_weights(&ck.arch, ck.weights.clone())?;
    let c = compact(&net, &ck.mask)?;
    let out = output.unwrap_or_else(|| path.with_extension("compact.pkpt"));
    let compacted = Checkpoint {
        arch: c.arch.clone(),
        weights: c.network.weights(),
        mask: FilterMask::new(&c.arch),
        state: ck.state.clone(),
        config_text: ck.config_text.clone(),
    };
    compacted.save(&out)?;
    print!("{}", c.report(&net));
    println!("written {}", out.display());
    Ok(())
}

fn cmd_eval(path: &Path) -> Result<()> {
    let ck = Checkpoint::load(path)?;
    let cfg = RunConfig::from_text(&ck.config_text)?;
    let (_, test) = make_dataset(cfg.seed, &cfg.dataset)?;
    let net = Network::from_weights(&ck.arch, ck.weights)?;
    let (acc, _) = evaluate(&net, &test, 256)?;
    println!("test_acc={acc}");
    Ok(())
}
