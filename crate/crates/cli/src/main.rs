use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use shev_mompc::config::{write_atomic, RunConfig};
use shev_mompc::cycle::{parse_cycle_named, DriveCycle, SpeedUnit};
use shev_mompc::mompc::{mark_dominated, simplex_grid, ParetoPoint};
use shev_mompc::powertrain::{fit_fuel_coefficients, FuelSample};
use shev_mompc::sim::{closed_loop_pareto_point, compute_metrics, replay_check, run_closed_loop, SimMetrics};
use shev_mompc::Error;

#[derive(Parser, Debug)]
#[command(
    name = "shev-mompc",
    version,
    about = "Series hybrid vehicle simulation with a multi-objective MPC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// JSON run configuration. Missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if needed).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drive cycle CSV with header `t_s,v_mps`.
    #[arg(long)]
    cycle: Option<PathBuf>,
    /// Unit of the speed column in the cycle file.
    #[arg(long, value_enum, default_value_t = Unit::Mps)]
    unit: Unit,
    /// Worker threads for independent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Unit {
    Mps,
    Mph,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-loop run over a drive cycle (bundled UDDS by default).
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Weight sweep; one closed-loop run per weight triple (bundled 120 s
    /// pulse by default).
    Pareto {
        #[command(flatten)]
        common: Common,
        /// Number of weight triples on the simplex.
        #[arg(long)]
        grid: usize,
    },
    /// Affine fuel-map fit from a CSV with header `P_e_W,mdot_f_gps`.
    IdentifyFuel {
        #[command(flatten)]
        common: Common,
        samples: PathBuf,
    },
    /// Print the effective configuration as JSON.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::SolverAbort(_) | Error::Callback(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

fn load_config(common: &Common) -> CmdResult<RunConfig> {
    match &common.config {
        Some(path) => RunConfig::load(path).map_err(Failure::from),
        None => Ok(RunConfig::default()),
    }
}

fn load_cycle(common: &Common, cfg: &RunConfig, fallback: fn() -> DriveCycle) -> CmdResult<DriveCycle> {
    let Some(path) = common.cycle.as_ref().or(cfg.cycle_path.as_ref()) else {
        return Ok(fallback());
    };
    let bytes =
        std::fs::read(path).map_err(|e| Failure::Input(format!("cannot read cycle file {}: {e}", path.display())))?;
    let unit = match common.unit {
        Unit::Mps => SpeedUnit::MetersPerSecond,
        Unit::Mph => SpeedUnit::MilesPerHour,
    };
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cycle");
    parse_cycle_named(&bytes, name, unit).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn output_dir(common: &Common, cfg: &RunConfig) -> CmdResult<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, contents: &[u8]) -> CmdResult {
    write_atomic(path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn summary(cycle: &DriveCycle, m: &SimMetrics, replay_ok: bool) -> String {
    let mut s = String::new();
    s.push_str(&format!("cycle             {} ({} samples)\n", cycle.name, m.steps));
    s.push_str(&format!("fuel              {:.3} g\n", m.total_fuel_g));
    s.push_str(&format!(
        "velocity RMSE     {:.4} m/s (max {:.4})\n",
        m.velocity_rmse, m.velocity_error_max
    ));
    s.push_str(&format!("position RMSE     {:.4} m\n", m.position_rmse));
    s.push_str(&format!(
        "SOC               final {:.4}, range [{:.4}, {:.4}]\n",
        m.soc_final, m.soc_min, m.soc_max
    ));
    s.push_str(&format!(
        "battery current   [{:.2}, {:.2}] A\n",
        m.current_min, m.current_max
    ));
    s.push_str(&format!("bound violations  {}\n", m.violation_count));
    s.push_str(&format!(
        "solver            {:.2} iterations/step, {} fallbacks\n",
        m.mean_solve_iterations, m.fallback_count
    ));
    s.push_str(&format!(
        "replay            {}\n",
        if replay_ok { "ok" } else { "MISMATCH" }
    ));
    s
}

fn simulate(common: &Common) -> CmdResult {
    let cfg = load_config(common)?;
    let cycle = load_cycle(common, &cfg, DriveCycle::udds)?;
    let params = cfg.params();
    cycle.check_speed_limit(params.vehicle.v_max)?;
    let dir = output_dir(common, &cfg)?;
    log::info!("simulating {} ({} samples)", cycle.name, cycle.len());

    let log = run_closed_loop(&cycle, &cfg.controller, &params, cfg.initial)?;
    let metrics = compute_metrics(&log, &params.battery, params.engine.motor_efficiency)?;
    let replay_ok = replay_check(&log, &params);
    if !replay_ok {
        return Err(Failure::Runtime("trace failed its replay check".into()));
    }
    write(&dir.join("trace.csv"), log.to_csv_string()?.as_bytes())?;
    let json = serde_json::to_string_pretty(&metrics).map_err(|e| Failure::Runtime(e.to_string()))?;
    write(&dir.join("metrics.json"), format!("{json}\n").as_bytes())?;
    write(
        &dir.join("summary.txt"),
        summary(&cycle, &metrics, replay_ok).as_bytes(),
    )?;
    log::info!("wrote trace.csv, metrics.json and summary.txt to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct ParetoRow {
    alpha1: f64,
    alpha2: f64,
    alpha3: f64,
    #[serde(rename = "J_m")]
    motion: f64,
    #[serde(rename = "J_fb")]
    energy: f64,
    dominated: u8,
}

fn pareto(common: &Common, grid: usize) -> CmdResult {
    let weights = simplex_grid(grid).map_err(|e| Failure::Input(format!("bad --grid value: {e}")))?;
    let cfg = load_config(common)?;
    let cycle = load_cycle(common, &cfg, DriveCycle::synthetic_pulse)?;
    let params = cfg.params();
    cycle.check_speed_limit(params.vehicle.v_max)?;
    let dir = output_dir(common, &cfg)?;

    let run = |w: &[f64; 3]| -> Result<ParetoPoint, Error> {
        let c = cfg.controller.with_weights(*w)?;
        log::info!("weights {w:?}");
        closed_loop_pareto_point(&cycle, &c, &params, cfg.initial)
    };
    let results: Vec<Result<ParetoPoint, Error>> = if common.jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(common.jobs)
            .build()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        pool.install(|| weights.par_iter().map(run).collect())
    } else {
        weights.iter().map(run).collect()
    };
    let mut points = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    mark_dominated(&mut points);

    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &points {
        w.serialize(ParetoRow {
            alpha1: p.weights[0],
            alpha2: p.weights[1],
            alpha3: p.weights[2],
            motion: p.motion,
            energy: p.energy,
            dominated: p.dominated as u8,
        })
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
    write(&dir.join("pareto.csv"), &bytes)?;
    log::info!(
        "{} of {} points are non-dominated",
        points.iter().filter(|p| !p.dominated).count(),
        points.len()
    );
    Ok(())
}

#[derive(Deserialize)]
struct FuelRow {
    #[serde(rename = "P_e_W")]
    engine_power: f64,
    #[serde(rename = "mdot_f_gps")]
    fuel_rate: f64,
}

fn identify_fuel(path: &Path) -> CmdResult {
    let mut rdr =
        csv::Reader::from_path(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let samples = rdr
        .deserialize::<FuelRow>()
        .map(|r| {
            r.map(|r| FuelSample {
                engine_power: r.engine_power,
                fuel_rate: r.fuel_rate,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let fit = fit_fuel_coefficients(&samples)?;
    println!(
        "{}",
        serde_json::to_string(&fit).map_err(|e| Failure::Runtime(e.to_string()))?
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SHEV_MOMPC_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common } => simulate(common),
        Command::Pareto { common, grid } => pareto(common, *grid),
        Command::IdentifyFuel { samples, .. } => identify_fuel(samples),
        Command::Config { common } => load_config(common).and_then(|cfg| {
            let json = cfg.to_json()?;
            println!("{json}");
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
