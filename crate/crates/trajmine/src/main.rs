use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trajmine::pipeline::{emit_scene, run_genvideo, run_mine, run_render, run_simulate};
use trajmine::{RunConfig, RunError};
use trajmine_core::genloop::LoopMode;
use trajmine_core::MatchingStrategy;

#[derive(Parser)]
#[command(name = "trajmine", version, about = "Mine hard examples and pseudo labels from detector output")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML or JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Line-delimited detection records.
    #[arg(long, global = true, value_name = "PATH")]
    detections: Option<PathBuf>,
    /// Frame directory, loop manifest, or a directory of per-video sources.
    #[arg(long, global = true, value_name = "PATH")]
    frames: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[arg(long, global = true, value_name = "F")]
    theta_iou: Option<f64>,
    #[arg(long, global = true)]
    mode: Option<ModeArg>,
    #[arg(long, global = true)]
    matching: Option<MatchingArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Build trajectories, mine hard examples and write the pseudo dataset.
    Mine,
    /// Turn still images into synthetic videos.
    Genvideo {
        /// Image file or directory of images.
        #[arg(long, value_name = "PATH")]
        images: Option<PathBuf>,
    },
    /// Compare matching strategies on simulated scenes.
    Simulate {
        /// Number of seeds to evaluate.
        #[arg(long, value_name = "N")]
        seeds: Option<u64>,
        /// Also write the run-seed scene as mining inputs into this directory.
        #[arg(long, value_name = "DIR")]
        emit: Option<PathBuf>,
    },
    /// Draw dataset labels onto their frames.
    Render {
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Base,
    BaseTrans,
    Straight,
    Loop,
}

impl From<ModeArg> for LoopMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Base => LoopMode::Base,
            ModeArg::BaseTrans => LoopMode::BaseTrans,
            ModeArg::Straight => LoopMode::GenStraight,
            ModeArg::Loop => LoopMode::GenLoop,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchingArg {
    MutualBest,
    Greedy,
}

impl From<MatchingArg> for MatchingStrategy {
    fn from(m: MatchingArg) -> Self {
        match m {
            MatchingArg::MutualBest => MatchingStrategy::MutualBest,
            MatchingArg::Greedy => MatchingStrategy::Greedy,
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.theta_iou {
        cfg.tmm.theta_iou = t;
    }
    if let Some(m) = c.mode {
        cfg.genloop.mode = m.into();
    }
    if let Some(m) = c.matching {
        cfg.matching = m.into();
    }
    let paths = &mut cfg.paths;
    for (slot, flag) in [
        (&mut paths.detections, &c.detections),
        (&mut paths.frames, &c.frames),
        (&mut paths.out, &c.out),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    match &cli.command {
        Command::Genvideo { images: Some(p) } => paths.images = Some(p.clone()),
        Command::Render { dataset: Some(p) } => paths.dataset = Some(p.clone()),
        Command::Simulate { seeds: Some(n), .. } => cfg.sim.seeds = *n,
        _ => {}
    }
    Ok(cfg.finalize()?)
}

fn run(cli: &Cli) -> Result<(), RunError> {
    let cfg = build_config(cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.common.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| RunError::Config(format!("cannot start {} workers: {e}", cli.common.jobs.unwrap_or(0))))?;
    pool.install(|| match &cli.command {
        Command::Mine => {
            let r = run_mine(&cfg)?;
            println!(
                "trajectories {}  hard positives {}  hard negatives {}  admitted frames {}  labels {}",
                r.report.trajectories,
                r.report.hard_positives,
                r.report.hard_negatives,
                r.report.admitted_frames,
                r.report.labels
            );
            Ok(())
        }
        Command::Genvideo { .. } => {
            for m in run_genvideo(&cfg)? {
                println!("{}", m.display());
            }
            Ok(())
        }
        Command::Simulate { emit, .. } => {
            if let Some(dir) = emit {
                emit_scene(&cfg, dir)?;
            }
            let r = run_simulate(&cfg)?;
            for (name, s) in &r.strategies {
                println!(
                    "{name:<12} purity {:.4}  hp precision {:.4}  hp recall {:.4}  hn precision {:.4}  noise rate {:.4}",
                    s.mean.purity, s.mean.hp_precision, s.mean.hp_recall, s.mean.hn_precision, s.mean.pseudo_noise_rate
                );
            }
            Ok(())
        }
        Command::Render { .. } => {
            let n = run_render(&cfg)?;
            println!("rendered {n} frame(s)");
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRAJMINE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
