//! Acceptance suite. Runs every criterion at its stated tolerance and
//! runtime budget, prints one PASS/FAIL line each, and exits nonzero if any
//! criterion fails.

mod support;

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use cemsim_core::cli::{replay_scenario, run_cli, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
use cemsim_core::context::{context_query, ContextRecord};
use cemsim_core::control::{check_plan, solve_charging, ControlError};
use cemsim_core::engine::{ChannelRecorder, CsvStepSink, SimulatorStepOutput, SinkError, StepSink};
use cemsim_core::experiment::{
    compare_strategies, estimator_for, forecast_eval, open_loop_problem, run_strategy, Strategy,
};
use cemsim_core::forecast::{mean_rmse, FeatureFamily};
use cemsim_core::models::{BatteryLinear, BatteryLinearConfig, InverterPvFirst, InverterPvFirstConfig};
use cemsim_core::records::{
    BatteryMode, BatteryStepInput, BatteryStepResult, GridStepResult, InverterStepInput, LoadStepResult,
    PowerSourceStepResult,
};
use cemsim_core::replay::{read_timeseries, write_timeseries, IngestOptions, TimeSeriesTable};
use cemsim_core::scenario::{Scenario, ScenarioFile};
use cemsim_core::Timestamp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use support::{oracle, IntInstance};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario_from(json: &serde_json::Value) -> Scenario {
    let file: ScenarioFile = serde_json::from_value(json.clone()).expect("scenario json");
    Scenario::new(file, std::path::PathBuf::new()).expect("valid scenario")
}

// ---------------------------------------------------------------- AC1

fn ac1_battery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut battery = None;
    let mut worst_rel = 0.0f64;
    let mut clamped = 0u32;
    for i in 0..100_000u32 {
        if i % 1000 == 0 {
            let cfg = BatteryLinearConfig {
                capacity: rng.random_range(1e3..1e9),
                eta_charge: rng.random_range(0.5..=1.0),
                eta_discharge: rng.random_range(0.5..=1.0),
                nominal_voltage: rng.random_range(10.0..800.0),
                initial_soc: rng.random_range(0.0..=1.0),
            };
            battery = Some(BatteryLinear::new(cfg).map_err(|e| e.to_string())?);
        }
        let b = battery.as_mut().expect("set above");
        let cfg = *b.config();
        let mode = match rng.random_range(0..3) {
            0 => BatteryMode::Idle,
            1 => BatteryMode::Charge,
            _ => BatteryMode::Discharge,
        };
        // Currents sized so both clamped and interior steps occur.
        let scale = cfg.capacity / (cfg.nominal_voltage * 3600.0);
        let current = rng.random_range(0.0..scale * 2.0);
        let seconds = rng.random_range(1.0..3600.0);
        let input = BatteryStepInput { mode, current };

        let expected_raw = match mode {
            BatteryMode::Idle => 0.0,
            BatteryMode::Charge => seconds * cfg.nominal_voltage * current * cfg.eta_charge,
            BatteryMode::Discharge => -(seconds * cfg.nominal_voltage * current) / cfg.eta_discharge,
        };
        let raw = b.raw_delta(seconds, &input);
        let rel = (raw - expected_raw).abs() / expected_raw.abs().max(f64::MIN_POSITIVE);
        worst_rel = worst_rel.max(if expected_raw == 0.0 { raw.abs() } else { rel });
        check(expected_raw == 0.0 && raw == 0.0 || rel <= 1e-12, || {
            format!("step {i}: raw delta {raw} vs formula {expected_raw}")
        })?;

        let before = b.energy();
        let unclamped = before + expected_raw;
        let expected_after = unclamped.clamp(0.0, cfg.capacity);
        if unclamped != expected_after {
            clamped += 1;
        }
        let r = b.advance(seconds, &input);
        let after = b.energy();
        check((after - expected_after).abs() <= 1e-12 * cfg.capacity.max(expected_raw.abs()), || {
            format!("step {i}: energy {after} vs {expected_after}")
        })?;
        check((0.0..=1.0).contains(&r.soc), || format!("step {i}: soc {} out of [0,1]", r.soc))?;
        check(r.delta_energy == after - before, || format!("step {i}: delta_energy not post-clamp"))?;
        check(r.voltage == cfg.nominal_voltage, || format!("step {i}: voltage"))?;
    }

    // Round trip: charge from empty, discharge back to empty.
    let mut worst_rt = 0.0f64;
    for _ in 0..10_000 {
        let cfg = BatteryLinearConfig {
            capacity: 1e9,
            eta_charge: rng.random_range(0.5..=1.0),
            eta_discharge: rng.random_range(0.5..=1.0),
            nominal_voltage: rng.random_range(10.0..800.0),
            initial_soc: 0.0,
        };
        let mut b = BatteryLinear::new(cfg).map_err(|e| e.to_string())?;
        let seconds = rng.random_range(1.0..3600.0);
        let i_in = rng.random_range(0.1..100.0);
        let stored = b
            .advance(seconds, &BatteryStepInput { mode: BatteryMode::Charge, current: i_in })
            .delta_energy;
        let i_out = stored * cfg.eta_discharge / (cfg.nominal_voltage * seconds);
        b.advance(seconds, &BatteryStepInput { mode: BatteryMode::Discharge, current: i_out });
        check(b.energy().abs() <= 1e-9 * stored, || format!("round trip left {} J", b.energy()))?;
        let drawn = cfg.nominal_voltage * i_in * seconds;
        let delivered = cfg.nominal_voltage * i_out * seconds;
        let eff = cfg.eta_charge * cfg.eta_discharge;
        let rel = ((delivered / drawn) - eff).abs() / eff;
        worst_rt = worst_rt.max(rel);
        check(rel <= 1e-9, || format!("round trip {} vs {eff}", delivered / drawn))?;
    }
    Ok(format!(
        "1e5 steps ({clamped} clamped), max formula rel err {worst_rel:.1e}; round-trip max rel err {worst_rt:.1e}"
    ))
}

// ---------------------------------------------------------------- AC2

fn ac2_inverter() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let capacity = rng.random_range(1e6..1e8);
        let soc_min = rng.random_range(0.0..0.4);
        let soc_max = rng.random_range(0.6..1.0);
        let cfg = InverterPvFirstConfig {
            soc_min,
            soc_max,
            self_power: if rng.random_bool(0.5) { rng.random_range(0.0..50.0) } else { 0.0 },
            max_charge_power: if rng.random_bool(0.3) { rng.random_range(100.0..3000.0) } else { f64::INFINITY },
            max_discharge_power: if rng.random_bool(0.3) { rng.random_range(100.0..3000.0) } else { f64::INFINITY },
            battery_capacity: Some(capacity),
            ..InverterPvFirstConfig::default()
        };
        let inverter = InverterPvFirst::new(cfg).map_err(|e| e.to_string())?;
        let soc = match rng.random_range(0..4) {
            0 => soc_min,
            1 => soc_max,
            _ => rng.random_range(0.0..=1.0),
        };
        let mut battery = BatteryLinear::new(BatteryLinearConfig {
            capacity,
            eta_charge: 1.0,
            eta_discharge: 1.0,
            nominal_voltage: 48.0,
            initial_soc: soc,
        })
        .map_err(|e| e.to_string())?;
        let pv = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..5000.0) };
        let load = rng.random_range(0.0..5000.0);
        let seconds = rng.random_range(1.0..900.0);
        let mut input = InverterStepInput::new(
            PowerSourceStepResult { voltage: 300.0, current: pv / 300.0, power: pv },
            BatteryStepResult { soc, voltage: 48.0, ..Default::default() },
            GridStepResult::default(),
            LoadStepResult { requested_active_power: load, requested_apparent_power: load },
        );
        if rng.random_bool(0.25) {
            input.grid_to_battery_power = rng.random_range(0.0..2000.0);
        }
        if rng.random_bool(0.25) {
            input.battery_discharge_limit = Some(rng.random_range(0.0..2000.0));
        }
        let a = inverter.allocate(seconds, &input);
        check(!(a.battery_charge > 0.0 && a.battery_discharge > 0.0), || {
            format!("state {i}: charge and discharge together")
        })?;
        let out = inverter.dispatch(seconds, &input).map_err(|e| e.to_string())?;
        let b = battery.advance(seconds, &out.battery);
        let demand = load + cfg.self_power;
        let supplied = out.pv_power_drawn.min(demand) * cfg.eta_pv_to_load
            + out.grid.requested_active_power
            + (-b.delta_energy).max(0.0) * cfg.eta_batt_to_load / seconds;
        let scale = demand.max(pv).max(1.0);
        worst = worst.max((demand - supplied) / scale);
        check(demand <= supplied + 1e-6 * scale, || {
            format!("state {i}: demand {demand} W exceeds supplied {supplied} W")
        })?;
        check(out.pv_power_drawn <= pv * (1.0 + 1e-6), || {
            format!("state {i}: drew {} W from {pv} W of PV", out.pv_power_drawn)
        })?;
    }
    Ok(format!("1e3 states, max balance shortfall {:.1e} relative", worst.max(0.0)))
}

// ---------------------------------------------------------------- AC3

fn random_instance(rng: &mut ChaCha8Rng) -> IntInstance {
    let t = rng.random_range(1..=8);
    let capacity = rng.random_range(2..=8);
    let s_min = rng.random_range(0..=2).min(capacity);
    IntInstance {
        prices: (0..t).map(|_| rng.random_range(0..5)).collect(),
        load: (0..t).map(|_| rng.random_range(0..4)).collect(),
        pv: (0..t).map(|_| rng.random_range(0..4)).collect(),
        capacity,
        s_min,
        s_max: capacity,
        s0: rng.random_range(s_min..=capacity),
        g_max: if rng.random_bool(0.5) { Some(rng.random_range(1..4)) } else { None },
    }
}

fn ac3_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut feasible, mut infeasible) = (0, 0);
    let mut worst = 0.0f64;
    for i in 0..500 {
        let inst = random_instance(&mut rng);
        let problem = inst.to_problem();
        let got = solve_charging(&problem);
        match (oracle(&inst), got) {
            (None, Err(ControlError::Infeasible { .. })) => infeasible += 1,
            (Some(opt), Ok(plan)) => {
                feasible += 1;
                let want = opt.cost_milli as f64 / 1000.0;
                let rel = (plan.cost - want).abs() / want.abs().max(1e-12);
                let err = if want == 0.0 { plan.cost.abs() } else { rel };
                worst = worst.max(err);
                check(err <= 1e-6, || format!("instance {i}: cost {} vs oracle {want}: {inst:?}", plan.cost))?;
                check_plan(&problem, &plan, 1e-9).map_err(|e| format!("instance {i}: {e}"))?;
                let again = solve_charging(&problem).map_err(|e| e.to_string())?;
                check(again == plan, || format!("instance {i}: re-solve differs"))?;
            }
            (o, g) => return Err(format!("instance {i}: oracle {o:?} vs solver {g:?}")),
        }
    }
    Ok(format!(
        "{feasible} feasible + {infeasible} infeasible instances, max cost rel err {worst:.1e}, re-solves identical"
    ))
}

// ---------------------------------------------------------------- AC4

fn lossless_day(seed: u64) -> serde_json::Value {
    serde_json::json!({
        "name": format!("day-{seed}"),
        "seed": seed,
        "clock": {"start_ns": seed * 86_400_000_000_000u64},
        "horizon_seconds": 86400,
        "step_seconds": 120,
        "synthetic": {
            "pv_peak_power": 300.0 + 50.0 * (seed % 10) as f64,
            "pv_noise_amplitude": 0.3,
            "base_load": 200.0,
            "load_noise_amplitude": 0.05,
            "job_generator": {"watts_per_effort": 150.0}
        },
        "prices": {"two_tier": {"off_peak_price": 0.1, "peak_price": 0.4, "peak_start_hour": 7, "peak_end_hour": 22}},
        "components": {
            "battery": {"type": "linear", "capacity_wh": 8000.0, "eta_charge": 1.0, "eta_discharge": 1.0, "initial_soc": 0.1}
        },
        "forecast": {"train_days": 0}
    })
}

fn ac4_closed_loop() -> Outcome {
    let mut worst = 0.0f64;
    let mut bitwise = 0;
    let mut total_gap = 0.0;
    for seed in 1..=50u64 {
        let s = scenario_from(&lossless_day(seed));
        let open = solve_charging(&open_loop_problem(&s).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let cmp = compare_strategies(&s, &[Strategy::Default, Strategy::MpcPerfect]).map_err(|e| e.to_string())?;
        let closed = cmp.run(Strategy::MpcPerfect).expect("ran").aggregates.cost;
        let default = cmp.run(Strategy::Default).expect("ran").aggregates.cost;
        if closed == open.cost {
            bitwise += 1;
        }
        let rel = (closed - open.cost).abs() / open.cost.abs().max(1e-12);
        worst = worst.max(rel);
        check(rel <= 1e-12, || format!("day {seed}: closed loop {closed} vs open loop {}", open.cost))?;
        check(closed <= default, || format!("day {seed}: mpc-perfect {closed} above default {default}"))?;
        total_gap += default - closed;
    }
    Ok(format!(
        "50 days, {bitwise} bitwise equal, max rel diff {worst:.1e}; saved {total_gap:.3} vs default in total"
    ))
}

// ---------------------------------------------------------------- AC5

fn effort_scenario(seed: u64) -> serde_json::Value {
    serde_json::json!({
        "name": format!("effort-{seed}"),
        "seed": seed,
        "horizon_seconds": 5 * 86400,
        "step_seconds": 120,
        "synthetic": {
            "pv_peak_power": 600.0,
            "pv_noise_amplitude": 0.2,
            "base_load": 200.0,
            "load_noise_amplitude": 0.05,
            "job_generator": {"max_jobs_per_day": 3, "watts_per_effort": 300.0, "max_lead_hours": 14.0}
        },
        "prices": {"two_tier": {"off_peak_price": 0.1, "peak_price": 0.4, "peak_start_hour": 7, "peak_end_hour": 22}},
        "components": {
            "battery": {"type": "linear", "capacity_wh": 10000.0, "eta_charge": 1.0, "eta_discharge": 1.0, "initial_soc": 0.1}
        },
        "control": {"horizon_steps": 720},
        "forecast": {"train_days": 3, "resamples": 20, "context_family": "effort"}
    })
}

fn ac5_ordering() -> Outcome {
    let n = 20;
    let families = [FeatureFamily::None, FeatureFamily::Effort];
    let mut rmse = [0.0; 2];
    let mut cost = [0.0; 3];
    let strategies = [Strategy::MpcPerfect, Strategy::MpcContext, Strategy::MpcNocontext];
    for seed in 1..=n {
        let s = scenario_from(&effort_scenario(seed));
        let est = estimator_for(&s);
        let scores = forecast_eval(&s, &families, est.as_ref()).map_err(|e| e.to_string())?;
        for (k, (_, m)) in mean_rmse(&scores, &families).into_iter().enumerate() {
            rmse[k] += m / n as f64;
        }
        let cmp = compare_strategies(&s, &strategies).map_err(|e| e.to_string())?;
        for (k, st) in strategies.iter().enumerate() {
            cost[k] += cmp.run(*st).expect("ran").aggregates.cost / n as f64;
        }
    }
    let detail = format!(
        "mean RMSE effort {:.1} W vs none {:.1} W; mean cost perfect {:.4} <= context {:.4} <= nocontext {:.4}",
        rmse[1], rmse[0], cost[0], cost[1], cost[2]
    );
    check(rmse[1] < rmse[0], || format!("RMSE ordering fails: {detail}"))?;
    check(cost[0] <= cost[1] && cost[1] <= cost[2], || format!("cost ordering fails: {detail}"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- AC6

fn ac6_replay() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let json = serde_json::json!({
        "name": "record",
        "seed": 6,
        "horizon_seconds": 2 * 86400,
        "step_seconds": 120,
        "synthetic": {"pv_noise_amplitude": 0.4, "load_noise_amplitude": 0.1, "job_generator": {}},
        "prices": {"two_tier": {"off_peak_price": 0.1, "peak_price": 0.4, "peak_start_hour": 7, "peak_end_hour": 22}},
        "components": {"battery": {"type": "linear", "capacity_wh": 3000.0, "initial_soc": 0.4}},
        "forecast": {"train_days": 0}
    });
    let live_scenario = scenario_from(&json);
    let est = estimator_for(&live_scenario);

    let mut recorder = ChannelRecorder::new(live_scenario.subsystem_id());
    let initial = BatteryLinear::new(live_scenario.battery_config().map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    recorder
        .record_initial(
            live_scenario.start(),
            &BatteryStepResult { soc: initial.soc(), voltage: initial.config().nominal_voltage, ..Default::default() },
        )
        .map_err(|e| e.to_string())?;
    let mut live = Vec::new();
    let mut tee = |o: &SimulatorStepOutput| -> Result<(), SinkError> {
        live.push((o.end, o.battery.soc));
        recorder.accept(o)
    };
    run_strategy(&live_scenario, Strategy::Default, None, est.clone(), &mut tee).map_err(|e| e.to_string())?;

    let mut f = std::fs::File::create(dir.path().join("channels.csv")).map_err(|e| e.to_string())?;
    write_timeseries(recorder.table(), &mut f).map_err(|e| e.to_string())?;
    let mut f = std::fs::File::create(dir.path().join("context.jsonl")).map_err(|e| e.to_string())?;
    cemsim_core::replay::write_context(&live_scenario.context_records(), &mut f).map_err(|e| e.to_string())?;
    let replay = Scenario::new(replay_scenario(&live_scenario), dir.path().to_owned()).map_err(|e| e.to_string())?;

    let mut replayed = Vec::new();
    let mut collect = |o: &SimulatorStepOutput| -> Result<(), SinkError> {
        replayed.push((o.end, o.battery.soc));
        Ok(())
    };
    run_strategy(&replay, Strategy::Default, None, est, &mut collect).map_err(|e| e.to_string())?;
    check(live.len() == replayed.len(), || format!("{} live vs {} replayed steps", live.len(), replayed.len()))?;
    let mut worst = 0.0f64;
    for ((t1, a), (t2, b)) in live.iter().zip(&replayed) {
        check(t1 == t2, || format!("misaligned times {t1} vs {t2}"))?;
        worst = worst.max((a - b).abs());
    }
    check(worst <= 1e-6, || format!("SOC differs by {worst:.3e}"))?;
    Ok(format!("{} steps replayed, max SOC diff {worst:.1e}", live.len()))
}

// ---------------------------------------------------------------- AC7

fn brute_force_query(records: &[ContextRecord], now: Timestamp) -> Vec<ContextRecord> {
    let mut idx: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].recorded_at <= now && now < records[i].ends_at)
        .collect();
    // Insertion sort keeps equal keys in input order.
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (&records[idx[j - 1]], &records[idx[j]]);
            if (a.begins_at, a.recorded_at) > (b.begins_at, b.recorded_at) {
                idx.swap(j - 1, j);
                j -= 1;
            } else {
                break;
            }
        }
    }
    idx.into_iter().map(|i| records[i].clone()).collect()
}

fn ac7_context() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut future_hidden = 0u64;
    for set in 0..10_000 {
        let n = rng.random_range(0..12);
        let records: Vec<ContextRecord> = (0..n)
            .map(|k| {
                let begins = rng.random_range(0..50u64);
                let ends = begins + rng.random_range(1..20u64);
                let recorded = rng.random_range(0..ends);
                ContextRecord::new(
                    Timestamp::from_secs(recorded),
                    Timestamp::from_secs(begins),
                    Timestamp::from_secs(ends),
                    rng.random_range(1..3),
                    format!("record {k}"),
                )
                .expect("valid record")
            })
            .collect();
        for _ in 0..4 {
            let now = Timestamp::from_secs(rng.random_range(0..75u64));
            let got = context_query(&records, now);
            let want = brute_force_query(&records, now);
            check(got == want, || format!("set {set} at {now}: query differs from brute force"))?;
            check(got.iter().all(|r| r.recorded_at <= now), || format!("set {set}: future record leaked"))?;
            future_hidden += records.iter().filter(|r| r.recorded_at > now).count() as u64;
        }
    }
    Ok(format!("1e4 record sets, 4e4 queries, {future_hidden} future-recorded records withheld"))
}

// ---------------------------------------------------------------- AC8

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Independent Neumaier sum, for bit-exact comparison.
#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        self.c += if self.sum.abs() >= v.abs() { (self.sum - t) + v } else { (v - t) + self.sum };
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

fn long_run(check_sums: bool) -> Result<(u64, Vec<u8>), String> {
    let s = scenario_from(&serde_json::json!({
        "name": "long",
        "seed": 8,
        "horizon_seconds": 60_000_000u64,
        "step_seconds": 60,
        "synthetic": {"pv_noise_amplitude": 0.3, "load_noise_amplitude": 0.1},
        "prices": {"two_tier": {"off_peak_price": 0.1, "peak_price": 0.4, "peak_start_hour": 7, "peak_end_hour": 22}},
        "components": {"battery": {"type": "linear", "capacity_wh": 2000.0}, "context": {"type": "none"}},
        "forecast": {"train_days": 0}
    }));
    let mut csv = CsvStepSink::new(HashWriter(Sha256::new()));
    csv.write_header().map_err(|e| e.to_string())?;
    let mut sums = [Neumaier::default(); 6];
    let mut naive = [0.0f64; 6];
    let mut prev_max: Option<cemsim_core::engine::Maxima> = None;
    let mut failure: Option<String> = None;
    let mut sink = |o: &SimulatorStepOutput| -> Result<(), SinkError> {
        csv.accept(o)?;
        if !check_sums || failure.is_some() {
            return Ok(());
        }
        let e = &o.energies;
        let a = &o.aggregates;
        let parts = [e.generated_wh, e.charged_wh, e.discharged_wh, e.consumed_wh, e.purchased_wh, e.cost];
        let totals = [a.generated_wh, a.charged_wh, a.discharged_wh, a.consumed_wh, a.purchased_wh, a.cost];
        for k in 0..6 {
            sums[k].add(parts[k]);
            naive[k] += parts[k];
            if sums[k].value() != totals[k] {
                failure = Some(format!("step {}: aggregate {k} is {} but steps sum to {}", o.index, totals[k], sums[k].value()));
            }
        }
        let m = &o.maxima;
        let cur = [m.pv_voltage, m.pv_current, m.battery_voltage, m.battery_current, m.load_current, m.grid_current, m.grid_requested_power];
        if let Some(p) = &prev_max {
            let prev = [p.pv_voltage, p.pv_current, p.battery_voltage, p.battery_current, p.load_current, p.grid_current, p.grid_requested_power];
            if cur.iter().zip(prev).any(|(c, p)| *c < p) {
                failure = Some(format!("step {}: a maximum decreased", o.index));
            }
        }
        prev_max = Some(*m);
        Ok(())
    };
    let (run, _) = run_strategy(&s, Strategy::Default, None, estimator_for(&s), &mut sink).map_err(|e| e.to_string())?;
    if let Some(f) = failure {
        return Err(f);
    }
    if check_sums {
        let a = &run.aggregates;
        let totals = [a.generated_wh, a.charged_wh, a.discharged_wh, a.consumed_wh, a.purchased_wh, a.cost];
        for k in 0..6 {
            if (naive[k] - totals[k]).abs() > 1e-9 * totals[k].abs().max(1.0) {
                return Err(format!("aggregate {k}: naive sum {} far from {}", naive[k], totals[k]));
            }
        }
    }
    let digest = csv.finish().map_err(|e| e.to_string())?.0.finalize().to_vec();
    Ok((run.steps, digest))
}

fn ac8_engine() -> Outcome {
    let (steps, first) = long_run(true)?;
    check(steps == 1_000_000, || format!("{steps} steps"))?;
    let (_, second) = long_run(false)?;
    check(first == second, || "rerun produced different bytes".into())?;
    let hex: String = first.iter().take(6).map(|b| format!("{b:02x}")).collect();
    Ok(format!("1e6 steps, aggregates bit-exact, maxima monotone, rerun sha256 {hex}... identical"))
}

// ---------------------------------------------------------------- AC9

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_table(path: &Path) -> Result<TimeSeriesTable, String> {
    let f = std::io::BufReader::new(std::fs::File::open(path).map_err(|e| e.to_string())?);
    read_timeseries(f, IngestOptions { strict: true }).map(|i| i.value).map_err(|e| e.to_string())
}

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["cemsim", "--quiet"];
    full.extend_from_slice(args);
    run_cli(full)
}

fn ac9_cli() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let scen = d.join("s.json");
    write_file(
        &scen,
        r#"{"name": "rt", "seed": 9, "horizon_seconds": 86400,
            "synthetic": {"job_generator": {}, "pv_noise_amplitude": 0.3},
            "prices": {"flat": 0.25},
            "forecast": {"train_days": 0}}"#,
    )?;
    let out = d.join("out");
    let out_s = out.to_str().ok_or("path")?;
    let code = cli(&["run", "--scenario", scen.to_str().ok_or("path")?, "--out", out_s]);
    check(code == EXIT_OK, || format!("run exited {code}"))?;
    let run_dir = out.join("rt");
    let steps = std::fs::read_to_string(run_dir.join("steps.csv")).map_err(|e| e.to_string())?;
    check(steps.lines().count() == 721, || format!("{} step rows", steps.lines().count() - 1))?;

    let files: Vec<String> = ["channels.csv", "context.jsonl", "replay.json"]
        .iter()
        .map(|f| run_dir.join(f).to_string_lossy().into_owned())
        .collect();
    let mut args = vec!["validate", "--strict"];
    args.extend(files.iter().map(String::as_str));
    let code = cli(&args);
    check(code == EXIT_OK, || format!("validate exited {code}"))?;

    let replay = run_dir.join("replay.json");
    let code = cli(&["run", "--scenario", replay.to_str().ok_or("path")?]);
    check(code == EXIT_OK, || format!("replay run exited {code}"))?;
    let recorded = read_table(&run_dir.join("channels.csv"))?;
    let replayed = read_table(&run_dir.join("replayed").join("channels.csv"))?;
    let mut compared = 0;
    for (key, ch) in recorded.channels() {
        let other = replayed.channel(key.subsystem_id, &key.name).ok_or_else(|| format!("replay lacks channel {key}"))?;
        check(ch.len() == other.len(), || format!("channel {key}: {} vs {} samples", ch.len(), other.len()))?;
        for ((t1, a), (t2, b)) in ch.samples().zip(other.samples()) {
            check(t1 == t2 && (a - b).abs() <= 1e-6 * a.abs().max(1.0), || {
                format!("channel {key} at {t1}: recorded {a}, replayed {b}")
            })?;
            compared += 1;
        }
    }

    // Exit codes per error class.
    let missing = d.join("missing.json");
    let code = cli(&["run", "--scenario", missing.to_str().ok_or("path")?]);
    check(code == EXIT_CONFIG, || format!("missing scenario exited {code}"))?;
    let bad = d.join("bad.json");
    write_file(&bad, r#"{"name": "x", "horizon_seconds": 60, "mystery": true}"#)?;
    check(cli(&["run", "--scenario", bad.to_str().ok_or("path")?]) == EXIT_CONFIG, || "unknown key not exit 1".into())?;
    let dangling = d.join("dangling.json");
    write_file(
        &dangling,
        r#"{"name": "x", "horizon_seconds": 60, "components": {"load": {"type": "replay", "file": "nowhere.csv"}}}"#,
    )?;
    check(cli(&["run", "--scenario", dangling.to_str().ok_or("path")?]) == EXIT_CONFIG, || {
        "missing input file not exit 1".into()
    })?;
    check(cli(&["run", "--bogus-flag"]) == EXIT_CONFIG, || "usage error not exit 1".into())?;
    let ctx = d.join("bad.jsonl");
    write_file(&ctx, "{\"recorded_at_ns\":0,\"begins_at_ns\":5,\"ends_at_ns\":5,\"subsystem_id\":1,\"payload\":{\"text\":\"x\"}}\n")?;
    check(cli(&["validate", ctx.to_str().ok_or("path")?]) == EXIT_CONFIG, || "invalid context not exit 1".into())?;
    let ts = d.join("bad.csv");
    write_file(&ts, "timestamp_ns,subsystem_id,channel,value\n10,1,pv_power,1\n5,1,pv_power,2\n")?;
    check(cli(&["validate", ts.to_str().ok_or("path")?]) == EXIT_CONFIG, || "non-monotonic series not exit 1".into())?;
    // Replaying past the end of the recording fails mid-run.
    let mut long: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&replay).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    long["horizon_seconds"] = serde_json::json!(2 * 86400);
    long["output_dir"] = serde_json::json!("too-long");
    let long_path = run_dir.join("too_long.json");
    write_file(&long_path, &long.to_string())?;
    let code = cli(&["run", "--scenario", long_path.to_str().ok_or("path")?]);
    check(code == EXIT_RUNTIME, || format!("runtime failure exited {code}"))?;

    Ok(format!("run -> validate -> replay matched {compared} samples; exit codes 0/1/2 verified"))
}

// ----------------------------------------------------------------

fn main() {
    cemsim_core::cli::init_logging();
    let criteria: [(&str, &str, Duration, fn() -> Outcome); 9] = [
        ("AC1", "battery model exactness", Duration::from_secs(5), ac1_battery),
        ("AC2", "inverter balance", Duration::from_secs(5), ac2_inverter),
        ("AC3", "solver optimality", Duration::from_secs(60), ac3_solver),
        ("AC4", "closed-loop optimality", Duration::from_secs(120), ac4_closed_loop),
        ("AC5", "forecast-family ordering", Duration::from_secs(120), ac5_ordering),
        ("AC6", "replay self-consistency", Duration::from_secs(10), ac6_replay),
        ("AC7", "context semantics", Duration::from_secs(5), ac7_context),
        ("AC8", "engine bookkeeping", Duration::from_secs(30), ac8_engine),
        ("AC9", "cli round-trip", Duration::from_secs(30), ac9_cli),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC")).collect();
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > budget => Err(format!("{detail}; took {took:.2?}, budget {budget:?}")),
            r => r,
        };
        match result {
            Ok(detail) => println!("{id} PASS {name}: {detail} ({took:.2?})"),
            Err(e) => {
                failed += 1;
                println!("{id} FAIL {name}: {e} ({took:.2?})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
