use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use irrisim_core::data::{generate_synthetic, load_csv, subsample, SmpSeries, SynthParams};
use irrisim_core::encoder::{calibrate_encoder, rescale_smp, CropProfile, EncoderSpec};
use irrisim_core::exec::Exec;
use irrisim_core::fabric::{CompiledNetwork, FabricLimits};
use irrisim_core::fabric::{EventLog, MismatchModel, NetworkSpec};
use irrisim_core::neuron::{fi_curve, FiSettings, NeuronParams};
use irrisim_core::oracle::{
    compare_commands, hysteresis_oracle, load_commands, save_commands, summarize, EvalReport,
};
use irrisim_core::pipeline::{evaluate_traces, Controller, PipelineSpec, StateReading};
use irrisim_core::power::{estimate_energy, estimate_energy_for_spec};
use irrisim_core::state_machine::{
    state_core_config, tune_attractor, TuneSettings, WtaSpec, CLOSE, OPEN, STATE_LABELS,
};
use irrisim_core::Error;

use crate::config::{Mode, RunConfig, SynthSection};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(mut cfg: RunConfig, out: &Path) -> Result<()> {
    match cfg.command.as_str() {
        "simulate" => simulate(&mut cfg, out)?,
        "fi-curve" => fi(&mut cfg, out)?,
        "calibrate" => calibrate(&mut cfg, out)?,
        "evaluate" => evaluate(&mut cfg, out)?,
        "power" => power(&mut cfg, out)?,
        "synth" => synth(&mut cfg, out)?,
        other => return Err(CliError::usage(format!("unknown command {other}"))),
    }
    fs::write(out.join("manifest.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn mismatch(cfg: &RunConfig) -> MismatchModel {
    MismatchModel {
        cv: cfg.cv,
        seed: cfg.seed,
    }
}

/// Profile and pipeline for the configured crop, recorded in the config.
fn resolve_pipeline(cfg: &mut RunConfig) -> Result<(CropProfile, PipelineSpec)> {
    let profile = cfg.profile_named(&cfg.crop.clone())?;
    let mut spec = match cfg.pipeline.take() {
        Some(p) => p,
        None => PipelineSpec::for_profile(&profile)?,
    };
    spec.dt_ms = cfg.dt_ms;
    cfg.profile = Some(profile.clone());
    cfg.pipeline = Some(spec.clone());
    Ok((profile, spec))
}

/// Sensor series from the input file, or a synthetic one; then gap
/// handling and subsampling.
fn load_series(
    cfg: &mut RunConfig,
    profile: &CropProfile,
    out: &Path,
    preset: fn(&CropProfile, u64) -> SynthParams,
) -> Result<SmpSeries> {
    let series = match &cfg.input {
        Some(path) => {
            let (series, gaps) = load_csv(path)?;
            let mut text = String::from("missing_t\n");
            for t in &gaps.missing {
                writeln!(text, "{}", irrisim_core::data::iso8601(*t)).unwrap();
            }
            fs::write(out.join("gaps.csv"), text)?;
            if !gaps.is_empty() {
                eprintln!(
                    "warning: {} missing sample slot(s) in {}{}",
                    gaps.missing.len(),
                    path.display(),
                    if cfg.fill_gaps {
                        ", filled with the previous reading"
                    } else {
                        ""
                    }
                );
            }
            if cfg.fill_gaps {
                series.fill_gaps_hold_last()
            } else {
                series
            }
        }
        None => {
            let section = cfg
                .synth
                .get_or_insert_with(|| SynthSection::from_params(&preset(profile, 0)))
                .clone();
            generate_synthetic(&section.params(cfg.seed), profile)?
        }
    };
    Ok(subsample(&series, cfg.stride)?)
}

fn simulate(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let (profile, mut spec) = resolve_pipeline(cfg)?;
    let series = load_series(cfg, &profile, out, SynthParams::evaluation)?;
    if cfg.mode == Mode::Realtime {
        let cycle_ms = series.interval_s as f64 * 1000.0;
        spec.schedule.time_scale = 1.0;
        spec.schedule.hold_ms = (cycle_ms - spec.schedule.drive_ms).max(0.0);
        cfg.pipeline = Some(spec.clone());
    }
    series.save_csv(&out.join("series.csv"))?;

    let ctl = Controller::new(spec)?;
    fs::write(out.join("calibration.txt"), ctl.calibration.report())?;
    ctl.network.save(&out.join("network.toml"))?;

    let (run, commands) = ctl.run_series(&series, &profile, mismatch(cfg))?;
    run.log.save_csv(&out.join("events.csv"))?;
    run.log
        .write_binary(BufWriter::new(fs::File::create(out.join("events.bin"))?))?;
    save_commands(&commands, &out.join("commands.csv"))?;

    let currents = rescale_smp(&series, &profile, ctl.spec.encoder.bands.c_max)?.currents;
    let mut rates = String::from(
        "sample,t_iso8601,smp_kpa,current,state,e0_hz,e1_hz,e2_hz,open_hz,close_hz,command\n",
    );
    for c in &run.cycles {
        let w = ctl.spec.schedule.window(c.sample);
        let state = match &c.state {
            StateReading::None => "none".to_string(),
            StateReading::State(k) => STATE_LABELS[*k].to_string(),
            StateReading::Conflict(_) => "conflict".to_string(),
        };
        let mut row = format!(
            "{},{},{},{},{}",
            c.sample,
            irrisim_core::data::iso8601(series.samples[c.sample].t),
            series.samples[c.sample].smp_kpa,
            currents[c.sample],
            state
        );
        for l in STATE_LABELS.iter().chain([OPEN, CLOSE].iter()) {
            write!(row, ",{}", run.log.rate(l, w.0, w.1)?).unwrap();
        }
        writeln!(row, ",{}", c.command.map_or("", |x| x.action.as_str())).unwrap();
        rates.push_str(&row);
    }
    fs::write(out.join("rates.csv"), rates)?;

    let energy = estimate_energy_for_spec(&run.log, &ctl.network, &cfg.energy)?;
    fs::write(out.join("energy.txt"), energy.text("simulation"))?;
    energy.write_csv(BufWriter::new(fs::File::create(out.join("energy.csv"))?))?;
    let conflicts = run.conflicts();
    if conflicts > 0 {
        eprintln!("warning: {conflicts} decision window(s) with more than one active state");
    }
    Ok(())
}

fn write_fi(path: &Path, params: &NeuronParams, hi: f64, cfg: &RunConfig) -> Result<Option<f64>> {
    let settings = FiSettings {
        dt_ms: cfg.dt_ms,
        warmup_ms: cfg.fi.warmup_ms,
        window_ms: cfg.fi.window_ms,
    };
    let points = fi_curve(params, (0.0, hi), cfg.fi.points, &settings)?;
    let mut text = String::from("i_in,rate_hz\n");
    for p in &points {
        writeln!(text, "{},{}", p.i_in, p.rate_hz).unwrap();
    }
    fs::write(path, text)?;
    Ok(points.iter().find(|p| p.rate_hz > 10.0).map(|p| p.i_in))
}

fn fi(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let (_, spec) = resolve_pipeline(cfg)?;
    let cal = calibrate_encoder(&spec.encoder, &FiSettings::default())?;
    let mut summary = String::from("population,onset_above_10hz\n");
    for (b, params) in cal.params.iter().enumerate() {
        let name = EncoderSpec::group(b);
        let onset = write_fi(
            &out.join(format!("fi_{name}.csv")),
            params,
            cfg.fi.i_max,
            cfg,
        )?;
        writeln!(
            summary,
            "{name},{}",
            onset.map_or(String::new(), |x| x.to_string())
        )
        .unwrap();
    }
    let state = spec.wta.config.neuron;
    let hi = 3.0 * state.rheobase().unwrap_or(1.0);
    let onset = write_fi(&out.join("fi_state.csv"), &state, hi, cfg)?;
    writeln!(
        summary,
        "state,{}",
        onset.map_or(String::new(), |x| x.to_string())
    )
    .unwrap();
    fs::write(out.join("fi_summary.csv"), summary)?;
    Ok(())
}

fn calibrate(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let (_, spec) = resolve_pipeline(cfg)?;
    let cal = calibrate_encoder(&spec.encoder, &FiSettings::default())?;
    fs::write(out.join("calibration.txt"), cal.report())?;
    fs::write(
        out.join("calibration.toml"),
        toml::to_string(&cal).map_err(|e| Error::Config(e.to_string()))?,
    )?;

    let settings = TuneSettings {
        mismatch: mismatch(cfg),
        ..TuneSettings::default()
    };
    let base = WtaSpec {
        config: state_core_config(),
        ..spec.wta.clone()
    };
    let mut text = String::new();
    match tune_attractor(&base, &settings) {
        Ok((tuned, p)) => {
            writeln!(
                text,
                "w_ee = {}\nmean_rate_hz = {:.3}\npersisted_s = {}",
                tuned.w_ee, p.mean_hz, p.persisted_s
            )
            .unwrap();
            writeln!(text, "configured_w_ee = {}", spec.wta.w_ee).unwrap();
        }
        Err(e @ Error::Tuning { .. }) => {
            writeln!(text, "no candidate met the target: {e}").unwrap();
            fs::write(out.join("attractor.txt"), text)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    }
    fs::write(out.join("attractor.txt"), text)?;
    Ok(())
}

fn evaluate(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    if cfg.input.is_some() {
        return evaluate_file(cfg, out);
    }
    let mut summary = String::from("crop,traces,oracle_commands,within_one_interval,alternating,conflicts,latency_median,latency_q1,latency_q3\n");
    for crop in cfg.eval_crops.clone() {
        let profile = cfg.profile_named(&crop)?;
        if crop == "custom" {
            cfg.profile = Some(profile.clone());
        }
        let mut spec = PipelineSpec::for_profile(&profile)?;
        spec.dt_ms = cfg.dt_ms;
        let ctl = Controller::new(spec)?;
        let seeds: Vec<u64> = (0..cfg.traces as u64)
            .map(|k| cfg.seed.wrapping_add(k))
            .collect();
        let traces = evaluate_traces(&ctl, &profile, &seeds, cfg.cv, Exec::default())?;

        let mut rows = String::from("seed,samples,oracle,network,matched,missed,spurious,within_one_interval,alternating,conflicts\n");
        for t in &traces {
            writeln!(
                rows,
                "{},{},{},{},{},{},{},{},{},{}",
                t.seed,
                t.samples,
                t.oracle.len(),
                t.network.len(),
                t.report.matched.len(),
                t.report.missed.len(),
                t.report.spurious.len(),
                t.report.fraction_within(1.0),
                t.alternates(),
                t.conflicts
            )
            .unwrap();
        }
        fs::write(out.join(format!("traces_{crop}.csv")), rows)?;
        let reports: Vec<EvalReport> = traces.iter().map(|t| t.report.clone()).collect();
        let all = EvalReport::combine(&reports);
        all.save(
            &out.join(format!("eval_{crop}.csv")),
            &out.join(format!("eval_{crop}_summary.txt")),
        )?;
        let l = summarize(&all.latencies());
        writeln!(
            summary,
            "{crop},{},{},{},{},{},{},{},{}",
            traces.len(),
            all.n_oracle(),
            all.fraction_within(1.0),
            traces.iter().all(|t| t.alternates()),
            traces.iter().map(|t| t.conflicts).sum::<usize>(),
            l.map_or(String::new(), |l| l.median.to_string()),
            l.map_or(String::new(), |l| l.q1.to_string()),
            l.map_or(String::new(), |l| l.q3.to_string()),
        )
        .unwrap();
    }
    fs::write(out.join("summary.csv"), summary)?;
    Ok(())
}

fn evaluate_file(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let profile = cfg.profile_named(&cfg.crop.clone())?;
    cfg.profile = Some(profile.clone());
    let series = load_series(cfg, &profile, out, SynthParams::evaluation)?;
    let oracle = hysteresis_oracle(&series, &profile);
    let network = match (&cfg.commands, cfg.self_compare) {
        (_, true) => oracle.clone(),
        (Some(p), false) => load_commands(p)?,
        (None, false) => {
            return Err(CliError::usage(
                "evaluate --input needs --commands <file> or --self-compare",
            ));
        }
    };
    save_commands(&oracle, &out.join("oracle_commands.csv"))?;
    let report = compare_commands(&oracle, &network, series.interval_s, cfg.horizon_intervals);
    report.save(&out.join("eval.csv"), &out.join("eval_summary.txt"))?;
    Ok(())
}

fn power(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    if let Some(events) = cfg.events.clone() {
        let log = if events.extension().is_some_and(|e| e == "bin") {
            EventLog::read_binary(std::io::BufReader::new(fs::File::open(&events)?))?
        } else {
            EventLog::load_csv(&events)?
        };
        let net = match &cfg.network {
            Some(p) => NetworkSpec::load(p)?,
            None => {
                let (_, spec) = resolve_pipeline(cfg)?;
                Controller::new(spec)?.network
            }
        };
        let compiled = CompiledNetwork::compile(&net, &FabricLimits::default())?;
        let end = log.events.last().map_or(0, |e| e.t_us + 1);
        let report = estimate_energy(&log, &compiled, &cfg.energy, (0, end))?;
        fs::write(out.join("energy.txt"), report.text("event log"))?;
        report.write_csv(BufWriter::new(fs::File::create(out.join("energy.csv"))?))?;
    }
    let budget = cfg.budget.budget(&cfg.energy)?;
    budget.save(out)?;
    Ok(())
}

fn synth(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let profile = cfg.profile_named(&cfg.crop.clone())?;
    cfg.profile = Some(profile.clone());
    let section = cfg
        .synth
        .get_or_insert_with(|| SynthSection::from_params(&SynthParams::closed_loop(&profile, 0)))
        .clone();
    let series = generate_synthetic(&section.params(cfg.seed), &profile)?;
    let series = subsample(&series, cfg.stride)?;
    series.save_csv(&out.join("smp.csv"))?;
    Ok(())
}
