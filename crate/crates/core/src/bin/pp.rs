use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use pp_core::experiments::io::{write_csv, NetworkFile};
use pp_core::experiments::{self, ControllerSpec, ExperimentConfig, Prepared, RatioSource, Scale};
use pp_core::perturbation::{perturb_turning_ratios, PerturbationSpec};
use pp_core::Result;

#[derive(Parser)]
#[command(name = "pp", version, about = "Multi-hop pressure perimeter control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML, or JSON by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured scale.
    #[arg(long, value_enum)]
    scale: Option<Scale>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_path(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.scale {
            cfg.scale = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        std::fs::create_dir_all(&cfg.output_dir)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ControllerArgs {
    /// Hop count of the softmax controller; overrides the config.
    #[arg(long)]
    hop: Option<usize>,
    /// Sensitivity of the softmax controller; overrides the config.
    #[arg(long)]
    sensitivity: Option<f64>,
}

impl ControllerArgs {
    fn apply(&self, cfg: &ExperimentConfig) -> ControllerSpec {
        match (cfg.controller, self.hop, self.sensitivity) {
            (c, None, None) => c,
            (c, h, s) => ControllerSpec::Softmax {
                hop: h.or(c.hop()).unwrap_or(8),
                sensitivity: s.or(c.sensitivity()).unwrap_or(8.0),
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compare no control, homogeneous, N-MP, myopic and the main controller.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep softmax sensitivity and hop count.
    SweepSh {
        #[command(flatten)]
        common: Common,
    },
    /// Improvement over homogeneous control across demand heterogeneity.
    SweepHetero {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        controller: ControllerArgs,
    },
    /// Controller performance under perturbed turning ratios.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        controller: ControllerArgs,
    },
    /// Per-cycle feeder pressures during one run.
    PressureDump {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        controller: ControllerArgs,
        #[arg(long, default_value_t = 10)]
        max_hop: usize,
    },
    /// Accumulated visiting probability from one feeder.
    Importance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        feeder: u32,
        #[arg(long)]
        hops: usize,
        #[arg(long, value_enum, default_value = "assigned")]
        ratios: RatioSource,
    },
    /// Write the routed network, optionally with perturbed ratios, as JSON.
    ExportNetwork {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        perturb_alpha: Option<f64>,
        #[arg(long, default_value_t = 100.0)]
        perturb_m: f64,
        #[arg(long, default_value_t = 1)]
        perturb_seed: u64,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common } => {
            let cfg = common.load()?;
            let out = experiments::compare_controllers(&cfg, &experiments::roster(&cfg))?;
            out.write(&cfg.output_dir)?;
            for r in &out.summary {
                println!("{:24} {:10.1} h", r.controller, r.tts_total_mean_h);
            }
        }
        Command::SweepSh { common } => {
            let cfg = common.load()?;
            let out = experiments::sweep_s_and_hops(&cfg)?;
            out.write(&cfg.output_dir)?;
            println!("best s={} h={}", out.best.0, out.best.1);
        }
        Command::SweepHetero { common, controller } => {
            let cfg = common.load()?;
            let out = experiments::sweep_heterogeneity(&cfg, controller.apply(&cfg))?;
            out.write(&cfg.output_dir)?;
        }
        Command::Robustness { common, controller } => {
            let cfg = common.load()?;
            let alphas = cfg.robustness.alphas.clone();
            let out = experiments::robustness_sweep(&cfg, controller.apply(&cfg), &alphas)?;
            out.write(&cfg.output_dir)?;
        }
        Command::PressureDump {
            common,
            controller,
            max_hop,
        } => {
            let cfg = common.load()?;
            let rows = experiments::pressure_dump(&cfg, controller.apply(&cfg), max_hop)?;
            write_csv(&cfg.output_dir.join("pressure.csv"), &rows)?;
        }
        Command::Importance {
            common,
            feeder,
            hops,
            ratios,
        } => {
            let cfg = common.load()?;
            let rows = experiments::importance_map(&cfg, feeder, hops, ratios)?;
            write_csv(&cfg.output_dir.join(format!("importance_f{feeder}_h{hops}.csv")), &rows)?;
        }
        Command::ExportNetwork {
            common,
            perturb_alpha,
            perturb_m,
            perturb_seed,
        } => {
            let cfg = common.load()?;
            let seed = cfg.seeds().first().copied().unwrap_or(1);
            let p = Prepared::new(cfg.grid(), &cfg.demand_params(), seed)?;
            let (graph, name) = match perturb_alpha {
                Some(alpha) => {
                    let spec = PerturbationSpec {
                        alpha,
                        m: perturb_m,
                        seed: perturb_seed,
                    };
                    (perturb_turning_ratios(&p.graph, &spec)?, format!("network_pa{alpha}_ps{perturb_seed}.json"))
                }
                None => (p.graph.clone(), "network.json".to_string()),
            };
            let path = cfg.output_dir.join(name);
            NetworkFile::from_graph(&graph, Some(cfg.grid())).write(&path)?;
            info!("wrote {}", path.display());
        }
        Command::Config { common } => {
            let cfg = common.load()?;
            print!("{}", cfg.to_toml()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
