//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any of them fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shev_mompc::cycle::{reference_trajectory, DriveCycle};
use shev_mompc::mompc::{build_ocp, mark_dominated, solve_ocp, MompcConfig, ParetoPoint};
use shev_mompc::nlp::{finite_diff_grad, NlpProblem};
use shev_mompc::powertrain::{battery_current, battery_power_from_current, PowertrainParams, VehicleState};
use shev_mompc::sim::{compute_metrics, replay_check, run_closed_loop, InitialConditions, SimLog};

const TRACK_RMSE_MAX: f64 = 0.5;
const TRACK_ERR_MAX: f64 = 2.0;
const POWER_BALANCE_TOL: f64 = 1e-3;
const ROUND_TRIP_TOL: f64 = 1e-9;
const ROUND_TRIP_SAMPLES: usize = 1000;
const BATTERY_POINT_TOL: f64 = 1e-3;
const ORACLE_INSTANCES: usize = 20;
const ORACLE_GRID: usize = 200;
const ORACLE_REL_TOL: f64 = 0.01;
const ORACLE_TIME_LIMIT_S: f64 = 30.0;
const GRADIENT_POINTS: usize = 100;
const GRADIENT_REL_TOL: f64 = 1e-5;
const GRADIENT_STEP: f64 = 1e-6;
const SOC_LEDGER_TOL: f64 = 1e-9;
const FUEL_FIT_TOL: f64 = 1e-9;
const PARETO_GRID: usize = 10;
const PARETO_TIE_TOL: f64 = 1e-6;
const SEED: u64 = 20_240_917;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn udds_log() -> &'static SimLog {
    use std::sync::OnceLock;
    static LOG: OnceLock<SimLog> = OnceLock::new();
    LOG.get_or_init(|| {
        let t = Instant::now();
        let log = run_closed_loop(
            &DriveCycle::udds(),
            &MompcConfig::default(),
            &PowertrainParams::default(),
            InitialConditions::default(),
        )
        .expect("UDDS closed loop");
        eprintln!(
            "UDDS closed loop: {} steps in {:.1} s",
            log.len(),
            t.elapsed().as_secs_f64()
        );
        log
    })
}

fn udds_tracking() -> Outcome {
    let p = PowertrainParams::default();
    let t = Instant::now();
    let log = udds_log();
    let m = compute_metrics(log, &p.battery, p.engine.motor_efficiency).map_err(|e| e.to_string())?;
    ensure(m.violation_count == 0, || {
        format!("{} constraint violations", m.violation_count)
    })?;
    ensure(m.velocity_rmse <= TRACK_RMSE_MAX, || {
        format!("velocity RMSE {:.4}", m.velocity_rmse)
    })?;
    let worst = log
        .records
        .iter()
        .filter(|r| r.fallback_flag == 0)
        .map(|r| (r.v - r.v_ref).abs())
        .fold(0.0, f64::max);
    ensure(worst <= TRACK_ERR_MAX, || format!("velocity error {worst:.3} m/s"))?;
    Ok(format!(
        "RMSE {:.4} m/s, max error {:.3} m/s, {} fallbacks, 0 violations, {:.1} s",
        m.velocity_rmse,
        worst,
        m.fallback_count,
        t.elapsed().as_secs_f64()
    ))
}

fn power_balance() -> Outcome {
    let p = PowertrainParams::default();
    let m = compute_metrics(udds_log(), &p.battery, p.engine.motor_efficiency).map_err(|e| e.to_string())?;
    ensure(m.power_balance_max <= POWER_BALANCE_TOL, || {
        format!("power balance residual {:e} W", m.power_balance_max)
    })?;
    Ok(format!("max residual {:.2e} W", m.power_balance_max))
}

fn battery_round_trip() -> Outcome {
    let b = PowertrainParams::default().battery;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..ROUND_TRIP_SAMPLES {
        let i = rng.gen_range(b.current_min..=b.current_max);
        let back = battery_current(battery_power_from_current(i, &b), &b).map_err(|e| e.to_string())?;
        worst = worst.max((back - i).abs());
    }
    ensure(worst <= ROUND_TRIP_TOL, || format!("round trip error {worst:e} A"))?;
    let dis = battery_current(10_000.0, &b).map_err(|e| e.to_string())?;
    let chg = battery_current(-10_000.0, &b).map_err(|e| e.to_string())?;
    ensure((dis - 49.494).abs() <= BATTERY_POINT_TOL, || {
        format!("I(10 kW) = {dis}")
    })?;
    ensure((chg + 42.278).abs() <= BATTERY_POINT_TOL, || {
        format!("I(-10 kW) = {chg}")
    })?;
    Ok(format!(
        "round trip {worst:.1e} A, I(+10 kW) {dis:.6} A, I(-10 kW) {chg:.6} A"
    ))
}

fn one_step_oracle() -> Outcome {
    let t = Instant::now();
    let p = PowertrainParams::default();
    let cfg = MompcConfig {
        horizon: 1,
        ..MompcConfig::default()
    };
    let reference = reference_trajectory(&DriveCycle::udds(), cfg.dt).map_err(|e| e.to_string())?;
    let (pb_lo, pb_hi) = p.battery.power_bounds();
    let (f_lo, f_hi) = (p.vehicle.force_min, p.vehicle.force_max);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst = f64::NEG_INFINITY;
    for case in 0..ORACLE_INSTANCES {
        let k = rng.gen_range(0..reference.len());
        let window = reference.preview(k, 1);
        let v = (window[0].velocity + rng.gen_range(-1.0..1.0)).max(0.0);
        let state = VehicleState::new(window[0].position + rng.gen_range(-2.0..2.0), v);
        let soc = rng.gen_range(0.4..0.7);
        let ocp = build_ocp(state, soc, &window, &cfg, &p).map_err(|e| e.to_string())?;
        let sol = solve_ocp(&ocp, None).map_err(|e| e.to_string())?;
        let solved = ocp.objective(&sol.raw);

        let mut best = f64::INFINITY;
        let mut z = vec![0.0; ocp.dim()];
        for i in 0..ORACLE_GRID {
            let f = f_lo + (f_hi - f_lo) * i as f64 / (ORACLE_GRID - 1) as f64;
            for j in 0..ORACLE_GRID {
                let pb = pb_lo + (pb_hi - pb_lo) * j as f64 / (ORACLE_GRID - 1) as f64;
                z.fill(0.0);
                z[0] = f / cfg.force_norm;
                z[1] = pb / cfg.pb_norm;
                ocp.repair(&mut z);
                best = best.min(ocp.objective(&z));
            }
        }
        let gap = (solved - best) / best.abs().max(1e-12);
        ensure(gap <= ORACLE_REL_TOL, || {
            format!("instance {case}: solver {solved:.6e} vs grid {best:.6e}")
        })?;
        worst = worst.max(gap);
    }
    let elapsed = t.elapsed().as_secs_f64();
    ensure(elapsed <= ORACLE_TIME_LIMIT_S, || format!("took {elapsed:.1} s"))?;
    Ok(format!(
        "{ORACLE_INSTANCES} instances, worst relative gap {worst:+.2e} (negative = better than grid), {elapsed:.1} s"
    ))
}

fn gradient_audit() -> Outcome {
    let p = PowertrainParams::default();
    let cfg = MompcConfig::default();
    let reference = reference_trajectory(&DriveCycle::udds(), cfg.dt).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let (mut accepted, mut drawn) = (0, 0);
    let mut worst = 0.0f64;
    while accepted < GRADIENT_POINTS {
        drawn += 1;
        ensure(drawn <= 100 * GRADIENT_POINTS, || {
            "too few points clear of the speed clamps".into()
        })?;
        let k = rng.gen_range(0..reference.len());
        let window = reference.preview(k, cfg.horizon);
        let v = window[0].velocity + rng.gen_range(-1.0..1.0);
        let state = VehicleState::new(window[0].position, v.max(0.0));
        let soc = rng.gen_range(0.35..0.75);
        let ocp = build_ocp(state, soc, &window, &cfg, &p).map_err(|e| e.to_string())?;
        let mut z = ocp.initial_guess();
        for zi in z.iter_mut().take(2 * cfg.horizon) {
            *zi += rng.gen_range(-0.05..0.05);
        }
        ocp.repair(&mut z);
        // the speed clamps are kinks of the objective
        let pred = ocp.predict(&z);
        if !pred.velocity.iter().all(|v| *v > 0.05 && *v < p.vehicle.v_max - 0.05) {
            continue;
        }
        let mut g = vec![0.0; z.len()];
        ocp.gradient(&z, &mut g);
        let fd = finite_diff_grad(|z| ocp.objective(z), &z, GRADIENT_STEP);
        let scale = fd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / scale);
        }
        accepted += 1;
    }
    ensure(worst <= GRADIENT_REL_TOL, || {
        format!("relative gradient error {worst:e}")
    })?;
    Ok(format!(
        "{accepted} points ({drawn} drawn), worst relative error {worst:.2e}"
    ))
}

fn soc_ledger() -> Outcome {
    let p = PowertrainParams::default();
    let log = udds_log();
    let init = InitialConditions::default();
    let drawn: f64 = log
        .records
        .iter()
        .map(|r| r.current * log.dt / p.battery.capacity_c)
        .sum();
    let soc_final = log.final_soc().ok_or("log has no final state")?;
    let err = (soc_final - (init.soc - drawn)).abs();
    ensure(err <= SOC_LEDGER_TOL, || format!("ledger mismatch {err:e}"))?;
    Ok(format!("final SOC {soc_final:.6}, ledger mismatch {err:.1e}"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shev-mompc"))
}

fn run_ok(cmd: &mut Command) -> Result<String, String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "{:?} exited with {}: {}",
            cmd,
            out.status,
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn fuel_identification() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (alpha, beta) = (0.0614, 0.0583);
    let mut csv = String::from("P_e_W,mdot_f_gps\n");
    for i in 0..=40 {
        let pe = 300.0 * i as f64;
        csv.push_str(&format!("{pe},{}\n", alpha * pe / 1000.0 + beta));
    }
    let path = dir.path().join("samples.csv");
    std::fs::write(&path, csv).map_err(|e| e.to_string())?;
    let stdout = run_ok(bin().arg("identify-fuel").arg(&path))?;
    let fit: serde_json::Value = serde_json::from_str(stdout.trim()).map_err(|e| e.to_string())?;
    let get = |k: &str| fit[k].as_f64().ok_or_else(|| format!("missing {k} in {stdout}"));
    let (a, b, r2) = (get("alpha")?, get("beta")?, get("r_squared")?);
    ensure(
        (a - alpha).abs() <= FUEL_FIT_TOL && (b - beta).abs() <= FUEL_FIT_TOL,
        || format!("fit alpha {a} beta {b}"),
    )?;
    ensure((r2 - 1.0).abs() <= FUEL_FIT_TOL, || format!("R^2 {r2}"))?;
    Ok(format!("alpha {a:.10}, beta {b:.10}, R^2 {r2}"))
}

fn pareto_sweep() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_ok(
        bin()
            .args(["pareto", "--grid", &PARETO_GRID.to_string(), "--jobs", "4", "--out"])
            .arg(dir.path()),
    )?;
    let mut rdr = csv::Reader::from_path(dir.path().join("pareto.csv")).map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    let mut flags = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        let num = |i: usize| row[i].parse::<f64>().map_err(|e| e.to_string());
        points.push(ParetoPoint::new([num(0)?, num(1)?, num(2)?], num(3)?, num(4)?));
        flags.push(&row[5] == "1");
    }
    ensure(points.len() == PARETO_GRID, || format!("{} rows", points.len()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    for _ in 0..20 {
        let mut shuffled = points.clone();
        shuffled.shuffle(&mut rng);
        mark_dominated(&mut shuffled);
        for (p, &flag) in points.iter().zip(&flags) {
            let q = shuffled.iter().find(|q| q.weights == p.weights).ok_or("lost a point")?;
            ensure(q.dominated == flag, || {
                format!("flag of {:?} depends on order", p.weights)
            })?;
        }
    }
    let min_motion = points.iter().map(|p| p.motion).fold(f64::INFINITY, f64::min);
    let pure = points
        .iter()
        .find(|p| p.weights == [1.0, 0.0, 0.0])
        .ok_or("grid lacks the pure motion corner")?;
    ensure(pure.motion <= min_motion * (1.0 + PARETO_TIE_TOL), || {
        format!("J_m at (1,0,0) is {} but the minimum is {min_motion}", pure.motion)
    })?;
    let front = flags.iter().filter(|d| !**d).count();
    Ok(format!(
        "{} points, {front} non-dominated, J_m(1,0,0) = {:.4}",
        points.len(),
        pure.motion
    ))
}

fn reproducible_trace() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_ok(bin().args(["simulate", "--out"]).arg(a.path()))?;
    run_ok(bin().args(["simulate", "--out"]).arg(b.path()))?;
    let read = |d: &Path| std::fs::read(d.join("trace.csv")).map_err(|e| e.to_string());
    let (ta, tb) = (read(a.path())?, read(b.path())?);
    ensure(ta == tb, || "trace.csv differs between runs".into())?;
    let p = PowertrainParams::default();
    let log = SimLog::read_csv(&ta[..]).map_err(|e| e.to_string())?;
    ensure(replay_check(&log, &p), || "replay of the written trace failed".into())?;
    Ok(format!("{} bytes identical, {} rows replay", ta.len(), log.len()))
}

fn main() -> ExitCode {
    let checks: [Check; 9] = [
        ("closed-loop UDDS tracking", udds_tracking),
        ("power balance", power_balance),
        ("battery current round trip", battery_round_trip),
        ("one-step optimum against grid search", one_step_oracle),
        ("objective gradient against differences", gradient_audit),
        ("SOC ledger", soc_ledger),
        ("fuel map identification", fuel_identification),
        ("weight sweep dominance", pareto_sweep),
        ("reproducible trace", reproducible_trace),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
