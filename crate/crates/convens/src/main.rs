//! Batch front-end for the ensemble natural-convection experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use convens::config::{Experiment, RunConfig};
use convens::experiments;

#[derive(Parser)]
#[command(name = "convens", version, about = "Ensemble solver for 2D laminar natural convection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Double-pane window benchmark: steady cavity flow per Rayleigh number
    Benchmark(CommonArgs),
    /// Spatial convergence of the manufactured-solution ensemble mean
    ConvergenceSpace(CommonArgs),
    /// Temporal convergence of the manufactured-solution ensemble mean
    ConvergenceTime(CommonArgs),
    /// Bred-vector predictability exploration
    Predictability(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// key=value config file loaded before flag overrides
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh resolution (m x m squares, two triangles each)
    #[arg(long)]
    m: Option<usize>,
    /// Mesh resolutions for the spatial study, comma separated
    #[arg(long)]
    m_list: Option<String>,
    /// Initial timestep
    #[arg(long)]
    dt0: Option<f64>,
    /// Timesteps for the temporal study, comma separated
    #[arg(long)]
    dt_list: Option<String>,
    /// Final time
    #[arg(long)]
    t_star: Option<f64>,
    /// Steady-state relative-increment tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Step cap for steady-state runs
    #[arg(long)]
    max_steps: Option<usize>,
    /// Prandtl number
    #[arg(long)]
    pr: Option<f64>,
    /// Rayleigh number(s), comma separated
    #[arg(long)]
    ra: Option<String>,
    /// Fluid thermal conductivity
    #[arg(long)]
    kappa_f: Option<f64>,
    /// Solid thermal conductivity
    #[arg(long)]
    kappa_s: Option<f64>,
    /// Use the thick-wall scheme (solid enclosure, coupled buoyancy)
    #[arg(long)]
    thick_wall: bool,
    /// Include the (u1, S) source in the thin-wall heat equation
    #[arg(long)]
    include_u1: Option<bool>,
    /// Solid strips as x0,x1,y0,y1 separated by ';'
    #[arg(long)]
    solid_strips: Option<String>,
    /// Bred-vector magnitudes eps1,eps2,eps3 (default: drawn from seed)
    #[arg(long)]
    bv_eps: Option<String>,
    /// Bred-vector reinitialization interval
    #[arg(long)]
    bv_delta_t: Option<f64>,
    /// Bred-vector cycle count
    #[arg(long)]
    bv_k_star: Option<u32>,
    /// RNG seed (bred-vector magnitude draw)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for manifest, CSV tables, and VTK snapshots
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Use the symmetric energy 0.5*||T||^2 + 0.5*||u||^2 instead of the
    /// printed form ||T|| + 0.5*||u||^2
    #[arg(long)]
    energy_symmetric: bool,
    /// Stability-condition constant
    #[arg(long)]
    c_dagger: Option<f64>,
    /// Manufactured-family perturbation magnitude
    #[arg(long)]
    mms_eps: Option<f64>,
}

fn build_config(experiment: Experiment, args: &CommonArgs) -> convens::Result<RunConfig> {
    let mut cfg = RunConfig::defaults(experiment);
    if let Some(path) = &args.config {
        cfg.load_file(path)?;
    }
    if let Some(v) = args.m {
        cfg.m = v;
    }
    if let Some(v) = &args.m_list {
        cfg.set("m_list", v)?;
    }
    if let Some(v) = args.dt0 {
        cfg.dt0 = v;
    }
    if let Some(v) = &args.dt_list {
        cfg.set("dt_list", v)?;
    }
    if let Some(v) = args.t_star {
        cfg.t_star = v;
    }
    if let Some(v) = args.tol {
        cfg.steady_tol = v;
    }
    if let Some(v) = args.max_steps {
        cfg.max_steps = v;
    }
    if let Some(v) = args.pr {
        cfg.pr = v;
    }
    if let Some(v) = &args.ra {
        cfg.set("ra", v)?;
    }
    if let Some(v) = args.kappa_f {
        cfg.kappa_f = v;
    }
    if let Some(v) = args.kappa_s {
        cfg.kappa_s = v;
    }
    if args.thick_wall {
        cfg.thick_wall = true;
    }
    if let Some(v) = args.include_u1 {
        cfg.include_u1_source = v;
    }
    if let Some(v) = &args.solid_strips {
        cfg.set("solid_strips", v)?;
    }
    if let Some(v) = &args.bv_eps {
        cfg.set("bv_eps", v)?;
    }
    if let Some(v) = args.bv_delta_t {
        cfg.bv_delta_t = v;
    }
    if let Some(v) = args.bv_k_star {
        cfg.bv_k_star = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.outdir {
        cfg.outdir = v.clone();
    }
    if args.energy_symmetric {
        cfg.energy_symmetric = true;
    }
    if let Some(v) = args.c_dagger {
        cfg.c_dagger = v;
    }
    if let Some(v) = args.mms_eps {
        cfg.mms_eps = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::Benchmark(a) => (Experiment::Benchmark, a),
        Command::ConvergenceSpace(a) => (Experiment::ConvergenceSpace, a),
        Command::ConvergenceTime(a) => (Experiment::ConvergenceTime, a),
        Command::Predictability(a) => (Experiment::Predictability, a),
    };
    let result = build_config(experiment, args).and_then(|cfg| experiments::run(&cfg));
    match result {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("convens: {e}");
            ExitCode::FAILURE
        }
    }
}
