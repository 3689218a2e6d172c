use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use blockclique_core::trace::{read_trace, replay as replay_trace, TraceError};
use blockclique_core::{ConsensusError, ProtocolParams, SelectionOracle, Slot};
use blockclique_netsim::output::{write_block_csv, write_propagation_trace};
use blockclique_netsim::{run_simulation, SimConfig, SimError};
use blockclique_security::{
    attack_duration_stats, attack_report, closed_form_success, newcomer_safety_threshold,
    parse_range, sweep_beta, SecurityError, ThreatModel,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::canonical::{to_canonical, to_canonical_value};
use crate::overrides::apply_overrides;
use crate::{AttackArgs, CliError, Format, ReplayArgs, ScheduleArgs, SimulateArgs};

const MANIFEST: &str = "manifest.json";

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: &'a Value,
    seed: Option<u64>,
    started: f64,
    finished: f64,
    outputs: Vec<String>,
    build: String,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn build_id() -> String {
    format!(
        "blockclique {} ({})",
        env!("CARGO_PKG_VERSION"),
        env!("BLOCKCLIQUE_BUILD_ID")
    )
}

/// Writes `files` into `dir` followed by a manifest naming them.
fn write_run(
    dir: &Path,
    command: &str,
    config: &Value,
    seed: Option<u64>,
    started: f64,
    files: Vec<(&str, Vec<u8>)>,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut outputs = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        outputs.push(name.to_string());
    }
    let manifest = RunManifest {
        command,
        config,
        seed,
        started,
        finished: now(),
        outputs,
        build: build_id(),
    };
    let text = to_canonical(&manifest).context("serializing manifest")? + "\n";
    fs::write(dir.join(MANIFEST), text).context("writing manifest")?;
    Ok(())
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("malformed JSON in {}: {e}", path.display())))
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Config(_) | SimError::Topology(_) | SimError::InsufficientData(_) => {
            CliError::Config(e.to_string())
        }
        SimError::Consensus(ConsensusError::CliqueExplosion { .. }) => {
            CliError::CliqueExplosion(e.to_string())
        }
        SimError::InvalidBlock(_) => CliError::Structural(e.to_string()),
        SimError::Consensus(_) => CliError::Other(anyhow::anyhow!(e)),
    }
}

fn security_error(e: SecurityError) -> CliError {
    CliError::Config(e.to_string())
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).context("writing CSV")?;
    }
    Ok(w.into_inner().context("flushing CSV")?)
}

/// One-row CSV of a flat JSON object, columns in key order.
fn csv_object(v: &Value) -> Result<Vec<u8>, CliError> {
    let obj = v.as_object().expect("flat object");
    let mut keys: Vec<&String> = obj.keys().collect();
    keys.sort();
    let cell = |x: &Value| match x {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => to_canonical_value(other),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&keys).context("writing CSV")?;
    w.write_record(keys.iter().map(|k| cell(&obj[*k]))).context("writing CSV")?;
    Ok(w.into_inner().context("flushing CSV")?)
}

fn print(bytes: &[u8]) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)?;
    out.flush()?;
    Ok(())
}

pub fn resolve_sim_config(args: &SimulateArgs) -> Result<(Value, SimConfig), CliError> {
    let mut value = match &args.config {
        Some(p) => read_json(p)?,
        None => serde_json::to_value(SimConfig::desk_default()).expect("serializable"),
    };
    apply_overrides(&mut value, &args.overrides)?;
    if let Some(seed) = args.seed {
        value["seed"] = json!(seed);
    }
    let cfg: SimConfig = serde_json::from_value(value.clone())
        .map_err(|e| CliError::Config(format!("invalid simulation config: {e}")))?;
    cfg.validate().map_err(sim_error)?;
    let resolved = serde_json::to_value(&cfg).expect("serializable");
    Ok((resolved, cfg))
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let started = now();
    let (resolved, cfg) = resolve_sim_config(args)?;
    log::info!(
        "simulating N={} T={} t0={} for {} s",
        cfg.node_count,
        cfg.protocol.thread_count,
        cfg.protocol.slot_interval,
        cfg.duration
    );
    let out = run_simulation(&cfg).map_err(sim_error)?;
    let mut metrics = serde_json::to_value(&out.metrics).expect("serializable");
    if args.output.out.is_some() {
        metrics["manifest"] = json!(MANIFEST);
    }
    let (name, main) = match args.output.format {
        Format::Json => ("metrics.json", (to_canonical_value(&metrics) + "\n").into_bytes()),
        Format::Csv => ("metrics.csv", csv_bytes([&out.metrics])?),
    };
    print(&main)?;
    if let Some(dir) = &args.output.out {
        let mut blocks = Vec::new();
        write_block_csv(&out, &mut blocks).context("writing block CSV")?;
        let mut files = vec![(name, main), ("blocks.csv", blocks)];
        if args.trace {
            let mut trace = Vec::new();
            write_propagation_trace(&out, &mut trace)?;
            files.push(("propagation.jsonl", trace));
        }
        write_run(dir, "simulate", &resolved, Some(cfg.seed), started, files)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ReportRow {
    beta: f64,
    mu: f64,
    finality: u32,
    endorsement_slots: u32,
    start: i64,
    p_success: f64,
    log10_p: f64,
    mean_slots: f64,
    std_slots: f64,
    beta_star: f64,
    delay_assumption_violated: bool,
}

pub fn attack(args: &AttackArgs) -> Result<(), CliError> {
    let started = now();
    let tm = ThreatModel {
        beta: args.beta,
        mu: args.mu,
        finality: args.finality,
        endorsement_slots: args.endorsement_slots,
        snapshot_delay: args.snapshot_delay,
        max_delay: args.delta,
    };
    let config = json!({
        "model": tm, "start": args.start, "t0": args.t0, "tail": args.tail, "sweep": args.sweep,
    });
    let (name, bytes) = if args.threshold {
        let b = newcomer_safety_threshold(args.mu, args.endorsement_slots).map_err(security_error)?;
        let v = json!({"beta_star": b, "mu": args.mu, "endorsement_slots": args.endorsement_slots});
        ("threshold", render(&v, args.output.format, || csv_object(&v))?)
    } else if args.closed_form {
        let p = closed_form_success(&tm).map_err(security_error)?;
        let v = json!({"p_success": p, "log10_p": p.log10(), "start": tm.default_start()});
        ("closed_form", render(&v, args.output.format, || csv_object(&v))?)
    } else if let Some(spec) = &args.sweep {
        let (param, range) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("sweep {spec:?} is not param=lo:hi:step")))?;
        if param != "beta" {
            return Err(CliError::Config(format!("only beta can be swept, got {param:?}")));
        }
        tm.validate().map_err(security_error)?;
        let betas = parse_range(range).map_err(security_error)?;
        let rows = sweep_beta(&tm, &betas, args.start).map_err(security_error)?;
        let v = serde_json::to_value(&rows).expect("serializable");
        ("sweep", render(&v, args.output.format, || csv_bytes(&rows))?)
    } else if args.duration {
        let start = args.start.unwrap_or_else(|| tm.default_start());
        let d = attack_duration_stats(&tm, start).map_err(security_error)?;
        let v = json!({"start": start, "mean_slots": d.mean, "std_slots": d.std_dev});
        ("duration", render(&v, args.output.format, || csv_object(&v))?)
    } else {
        let r = attack_report(&tm, args.start, &args.tail, args.t0).map_err(security_error)?;
        if r.delay_assumption_violated {
            log::warn!("delta >= t0/2: the drift analysis does not apply");
        }
        let v = serde_json::to_value(&r).expect("serializable");
        let row = ReportRow {
            beta: tm.beta,
            mu: tm.mu,
            finality: tm.finality,
            endorsement_slots: tm.endorsement_slots,
            start: r.start,
            p_success: r.p_success,
            log10_p: r.log10_p,
            mean_slots: r.mean_slots,
            std_slots: r.std_slots,
            beta_star: r.beta_star,
            delay_assumption_violated: r.delay_assumption_violated,
        };
        ("attack", render(&v, args.output.format, || csv_bytes([row]))?)
    };
    print(&bytes)?;
    if let Some(dir) = &args.output.out {
        let file = format!(
            "{name}.{}",
            if args.output.format == Format::Json { "json" } else { "csv" }
        );
        write_run(dir, "attack", &config, None, started, vec![(&file, bytes)])?;
    }
    Ok(())
}

fn render(
    v: &Value,
    format: Format,
    csv: impl FnOnce() -> Result<Vec<u8>, CliError>,
) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => Ok((to_canonical_value(v) + "\n").into_bytes()),
        Format::Csv => csv(),
    }
}

fn resolve_params(
    from_trace: Option<ProtocolParams>,
    config: Option<&Path>,
    overrides: &[String],
) -> Result<(Value, ProtocolParams), CliError> {
    let mut value = match (from_trace, config) {
        (_, Some(p)) => {
            let v = read_json(p)?;
            // Accept either bare params or a simulation config.
            v.get("protocol").cloned().unwrap_or(v)
        }
        (Some(p), None) => serde_json::to_value(p).expect("serializable"),
        (None, None) => serde_json::to_value(ProtocolParams::default()).expect("serializable"),
    };
    let mut wrapped = json!({ "protocol": value });
    apply_overrides(&mut wrapped, overrides)?;
    value = wrapped["protocol"].take();
    let params: ProtocolParams = serde_json::from_value(value.clone())
        .map_err(|e| CliError::Config(format!("invalid protocol parameters: {e}")))?;
    params
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok((value, params))
}

pub fn replay(args: &ReplayArgs) -> Result<(), CliError> {
    let started = now();
    let file = fs::File::open(&args.trace)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.trace.display())))?;
    let trace = read_trace(BufReader::new(file)).map_err(|e| match e {
        TraceError::Io(io) => CliError::Other(io.into()),
        other => CliError::Config(other.to_string()),
    })?;
    let (params_value, params) =
        resolve_params(trace.params, args.config.as_deref(), &args.overrides)?;
    let report = replay_trace(params, &trace.records, args.clique_cap).map_err(|e| match e {
        ConsensusError::CliqueExplosion { .. } => CliError::CliqueExplosion(e.to_string()),
        other => CliError::Other(anyhow::anyhow!(other)),
    })?;
    let bytes = match args.output.format {
        Format::Json => {
            let mut s = String::new();
            for b in &report.blocks {
                s += &to_canonical(b).context("serializing block report")?;
                s.push('\n');
            }
            s += &to_canonical(&json!({ "summary": report.summary })).context("summary")?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => csv_bytes(report.blocks.iter().map(|b| {
            (
                b.id.to_hex(),
                b.thread,
                b.period,
                to_canonical(&b.status).unwrap().trim_matches('"').to_string(),
                b.cliques,
                b.reason.clone().unwrap_or_default(),
            )
        }))?,
    };
    print(&bytes)?;
    if let Some(dir) = &args.output.out {
        let name = match args.output.format {
            Format::Json => "replay.jsonl",
            Format::Csv => "replay.csv",
        };
        let config = json!({ "params": params_value, "trace": args.trace, "clique_cap": args.clique_cap });
        write_run(dir, "replay", &config, None, started, vec![(name, bytes)])?;
    }
    if report.summary.invalid > 0 {
        let bad: Vec<String> = report
            .blocks
            .iter()
            .filter_map(|b| b.reason.as_ref().map(|r| format!("{}: {r}", b.id)))
            .collect();
        return Err(CliError::Structural(format!(
            "{} invalid block(s)\n{}",
            bad.len(),
            bad.join("\n")
        )));
    }
    Ok(())
}

pub fn schedule(args: &ScheduleArgs) -> Result<(), CliError> {
    let started = now();
    if args.threads == 0 || !args.threads.is_power_of_two() {
        return Err(CliError::Config(format!(
            "thread count {} is not a positive power of two",
            args.threads
        )));
    }
    if args.to < args.from {
        return Err(CliError::Config("--to precedes --from".into()));
    }
    let oracle = SelectionOracle::uniform(args.seed, args.nodes)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let slots = (args.from..args.to)
        .flat_map(|p| (0..args.threads).map(move |t| Slot::new(t, p)));
    let entries = oracle.schedule(slots, args.endorsement_slots);
    let bytes = match args.output.format {
        Format::Json => {
            let mut s = String::new();
            for e in &entries {
                s += &to_canonical(e).context("serializing schedule")?;
                s.push('\n');
            }
            s.into_bytes()
        }
        Format::Csv => csv_bytes(&entries)?,
    };
    print(&bytes)?;
    if let Some(dir) = &args.output.out {
        let name = match args.output.format {
            Format::Json => "schedule.jsonl",
            Format::Csv => "schedule.csv",
        };
        let config = json!({
            "nodes": args.nodes, "threads": args.threads, "endorsement_slots": args.endorsement_slots,
            "from": args.from, "to": args.to,
        });
        write_run(dir, "schedule", &config, Some(args.seed), started, vec![(name, bytes)])?;
    }
    Ok(())
}
