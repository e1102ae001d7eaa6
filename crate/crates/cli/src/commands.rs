use std::fs;
use std::hint::black_box;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use muacp::compression::{self, BoundParameters, MessageDistribution};
use muacp::consensus::{run_campaign, run_decree_with_log, CampaignConfig};
use muacp::fipa::{check_trace_inclusion_with, procedural_bound_check, ConversationAutomaton, Tau};
use muacp::simnet::SimEventLog;
use muacp::wire::{self, MessageMix};
use muacp::workload::{run_scale, ScaleConfig, ScaleReport};

use crate::output::{print, Output};
use crate::{Cli, Command};

#[derive(Debug)]
pub enum Failure {
    /// A checked property does not hold: exit 1.
    Property(String),
    /// Bad input or configuration: exit 2.
    Usage(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

/// Seeds from a file: a JSON array or whitespace/comma separated integers.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    if let Ok(v) = serde_json::from_str::<Vec<u64>>(text) {
        return Ok(v);
    }
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().map_err(|e| format!("bad seed {s:?}: {e}")))
        .collect()
}

fn seed_override(cli: &Cli) -> Result<Option<Vec<u64>>, Failure> {
    if let Some(s) = cli.seed {
        return Ok(Some(vec![s]));
    }
    match &cli.seeds {
        Some(path) => parse_seeds(&read(path)?).map(Some).map_err(Failure::Usage),
        None => Ok(None),
    }
}

fn config_text(cli: &Cli) -> Result<Option<String>, Failure> {
    cli.config.as_deref().map(read).transpose()
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let mut out = Output::new(cli.out.as_deref())?;
    let (name, seeds) = match &cli.command {
        Command::BenchCodec { count, mix } => ("bench-codec", bench_codec(cli, &mut out, *count, mix)?),
        Command::SimConsensus { write_log } => ("sim-consensus", sim_consensus(cli, &mut out, *write_log)?),
        Command::SimScale { write_log } => ("sim-scale", sim_scale(cli, &mut out, *write_log)?),
        Command::CheckTraces { protocol, max_len, tau } => (
            "check-traces",
            check_traces(&mut out, protocol, *max_len, tau.as_deref())?,
        ),
        Command::CheckBound { distribution, from_log } => (
            "check-bound",
            check_bound(&mut out, distribution.as_deref(), from_log.as_deref())?,
        ),
        Command::Validate { paths } => ("validate", validate(&mut out, paths)?),
    };
    // The manifest is written even when a property failed.
    let (seeds, verdict) = match seeds {
        Verdict::Pass(s) => (s, Ok(())),
        Verdict::Fail(s, msg) => (s, Err(Failure::Property(msg))),
    };
    out.finish(name, cli.config.as_deref(), &seeds, cli.tick_ms)?;
    verdict
}

/// Outcome of a command that ran to completion, with the seeds it used.
pub enum Verdict {
    Pass(Vec<u64>),
    Fail(Vec<u64>, String),
}

fn verdict(seeds: Vec<u64>, failures: Vec<String>) -> Verdict {
    if failures.is_empty() {
        Verdict::Pass(seeds)
    } else {
        Verdict::Fail(seeds, failures.join("; "))
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timing {
    pub mean_us: f64,
    pub min_us: f64,
    pub max_us: f64,
}

fn bench_codec(cli: &Cli, out: &mut Output, count: usize, mix: &str) -> Result<Verdict, Failure> {
    let mix: MessageMix = mix.parse().map_err(Failure::Usage)?;
    if count < 1000 {
        return Err(Failure::Usage(format!("count must be at least 1000, got {count}")));
    }
    let seed = cli.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let messages: Vec<wire::Message> = (0..count).map(|_| wire::random_message(&mut rng, mix)).collect();
    let encoded: Vec<Vec<u8>> = messages
        .iter()
        .map(|m| wire::encode(m).expect("generated messages encode"))
        .collect();
    let mean_size = encoded.iter().map(Vec::len).sum::<usize>() as f64 / count as f64;
    let empty_size = wire::encode(&wire::Message::new(wire::Verb::Ping))
        .map_err(usage)?
        .len();
    let option_size = wire::encode(&wire::random_message(&mut rng, MessageMix::OneOption))
        .map_err(usage)?
        .len();

    let time = |f: &mut dyn FnMut(usize)| {
        let mut t = Timing {
            min_us: f64::INFINITY,
            ..Timing::default()
        };
        let start = Instant::now();
        for i in 0..count {
            let s = Instant::now();
            f(i);
            let us = s.elapsed().as_secs_f64() * 1e6;
            t.min_us = t.min_us.min(us);
            t.max_us = t.max_us.max(us);
        }
        t.mean_us = start.elapsed().as_secs_f64() * 1e6 / count as f64;
        t
    };
    // Warm up caches and the allocator before measuring.
    for m in messages.iter().take(1000) {
        black_box(wire::encode(black_box(m)).ok());
    }
    let encode = time(&mut |i| {
        black_box(wire::encode(black_box(&messages[i])).ok());
    });
    let decode = time(&mut |i| {
        black_box(wire::decode(black_box(&encoded[i])).ok());
    });
    let roundtrip_ok = encoded
        .iter()
        .zip(&messages)
        .all(|(b, m)| wire::decode(b).as_ref() == Ok(m));

    let report = json!({
        "count": count,
        "mix": mix,
        "seed": seed,
        "mean_size_bytes": mean_size,
        "empty_size_bytes": empty_size,
        "one_option_size_bytes": option_size,
        "encode_us": encode,
        "decode_us": decode,
        "roundtrip_ok": roundtrip_ok,
    });
    out.write_json("bench_codec.json", &report)?;
    print(&report);
    let mut failures = Vec::new();
    if !roundtrip_ok {
        failures.push("decode(encode(m)) differs from m".to_string());
    }
    Ok(verdict(vec![seed], failures))
}

fn sim_consensus(cli: &Cli, out: &mut Output, write_log: bool) -> Result<Verdict, Failure> {
    let mut config = match config_text(cli)? {
        Some(t) => serde_json::from_str::<CampaignConfig>(&t).map_err(usage)?,
        None => CampaignConfig::default(),
    };
    if let Some(seeds) = seed_override(cli)? {
        config.seeds = seeds;
    }
    config.validate().map_err(usage)?;
    let report = run_campaign(&config);

    out.write_with("runs.jsonl", |buf| {
        for o in &report.outcomes {
            serde_json::to_writer(&mut *buf, o).map_err(|e| e.to_string())?;
            buf.push(b'\n');
        }
        Ok(())
    })?;
    out.write_with("campaign.csv", |buf| report.write_csv(buf).map_err(|e| e.to_string()))?;
    if write_log && out.enabled() {
        for &seed in &config.seeds {
            let (_, log) = run_decree_with_log(&config, seed);
            out.write_with(&format!("logs/seed-{seed}.jsonl"), |buf| {
                log.write_jsonl(buf).map_err(|e| e.to_string())
            })?;
        }
    }
    let s = &report.summary;
    let survivors_decided = s.runs - s.undecided_runs;
    let summary = json!({
        "summary": s,
        "success_rate_among_survivors": if s.runs == 0 { 1.0 } else { survivors_decided as f64 / s.runs as f64 },
        "liveness_asserted": config.liveness_expected(),
        "tick_ms": cli.tick_ms,
    });
    out.write_json("summary.json", &summary)?;
    print(&summary);

    let mut failures = Vec::new();
    if s.safety_violations > 0 {
        failures.push(format!("{} runs violate agreement or validity", s.safety_violations));
    }
    if config.liveness_expected() {
        if s.liveness_violations > 0 {
            failures.push(format!("{} runs missed a decision", s.liveness_violations));
        }
        if s.fd_violations > 0 {
            failures.push(format!("{} runs violate failure-detector properties", s.fd_violations));
        }
    }
    if s.budget_violations > 0 {
        failures.push(format!("{} runs overdrew a budget", s.budget_violations));
    }
    Ok(verdict(config.seeds.clone(), failures))
}

fn sim_scale(cli: &Cli, out: &mut Output, write_log: bool) -> Result<Verdict, Failure> {
    let mut config = match config_text(cli)? {
        Some(t) => ScaleConfig::from_json(&t).map_err(usage)?,
        None => ScaleConfig::default(),
    };
    if let Some(seeds) = seed_override(cli)? {
        config.seed = *seeds.first().ok_or_else(|| usage("seed list is empty"))?;
    }
    config.validate().map_err(usage)?;
    let mut runs = Vec::new();
    for &n in &config.ns {
        let (run, metrics, log) = run_scale(&config, n);
        out.write_with(&format!("metrics_n{n}.csv"), |buf| {
            metrics.write_csv(buf).map_err(|e| e.to_string())
        })?;
        out.write_json(
            &format!("metrics_n{n}_summary.json"),
            &metrics.summary_json(cli.tick_ms),
        )?;
        if write_log {
            out.write_with(&format!("log_n{n}.jsonl"), |buf| {
                log.write_jsonl(buf).map_err(|e| e.to_string())
            })?;
        }
        runs.push(run);
    }
    let report = ScaleReport::from_runs(runs);
    out.write_json("scale.json", &report)?;
    print(&json!({
        "ns": config.ns,
        "queue_ratio": report.queue_ratio,
        "n_ratio": report.n_ratio,
        "sublinear": report.sublinear,
        "deadlock_free": report.deadlock_free,
        "all_completed": report.all_completed,
        "max_queue_depth": report.runs.iter().map(|r| r.metrics.max_queue_depth).collect::<Vec<_>>(),
        "p99_latency_ms": report.runs.iter().map(|r| r.metrics.latency.p99 as f64 * cli.tick_ms).collect::<Vec<_>>(),
    }));
    let mut failures = Vec::new();
    if !report.sublinear {
        failures.push(format!(
            "queue depth grew by {:?} for {:?} more agents",
            report.queue_ratio, report.n_ratio
        ));
    }
    if !report.deadlock_free {
        failures.push("conversations left open".to_string());
    }
    if !report.all_completed {
        failures.push("not every conversation completed".to_string());
    }
    Ok(verdict(vec![config.seed], failures))
}

fn check_traces(out: &mut Output, protocol: &Path, max_len: usize, tau: Option<&Path>) -> Result<Verdict, Failure> {
    let auto = ConversationAutomaton::from_json(&read(protocol)?).map_err(usage)?;
    let tau = match tau {
        Some(p) => Tau::from_json(&read(p)?).map_err(usage)?,
        None => Tau::standard(),
    };
    let inclusion = check_trace_inclusion_with(&auto, max_len, &tau).map_err(usage)?;
    let bound = procedural_bound_check(&auto);
    let report = json!({
        "inclusion": inclusion,
        "procedural_bound": bound.as_ref().ok(),
        "procedural_bound_error": bound.as_ref().err().map(ToString::to_string),
    });
    out.write_json("check_traces.json", &report)?;
    print(&report);
    let mut failures = Vec::new();
    if !inclusion.holds() {
        failures.push(format!("{} uncovered traces", inclusion.uncovered.len()));
    }
    if let Err(e) = bound {
        failures.push(e.to_string());
    }
    Ok(verdict(Vec::new(), failures))
}

fn check_bound(out: &mut Output, dist: Option<&Path>, from_log: Option<&Path>) -> Result<Verdict, Failure> {
    let d = match (dist, from_log) {
        (Some(p), None) => MessageDistribution::from_json(&read(p)?).map_err(usage)?,
        (None, Some(p)) => {
            let file = fs::File::open(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            let log = SimEventLog::read_jsonl(std::io::BufReader::new(file)).map_err(usage)?;
            compression::corpus_ingest(&log, &p.display().to_string()).map_err(usage)?
        }
        _ => return Err(usage("give a distribution file or --from-log")),
    };
    let report = compression::bound_report(&d, BoundParameters::default()).map_err(usage)?;
    out.write_json("bound.json", &report)?;
    print(&serde_json::to_value(&report).map_err(usage)?);
    let mut failures = Vec::new();
    if !report.holds {
        failures.push(format!(
            "{} bits exceed the bound {}",
            report.expected_bits, report.bound_bits
        ));
    }
    if !report.tables_ok {
        failures.push("a Huffman table violates Kraft or the entropy bracket".to_string());
    }
    Ok(verdict(Vec::new(), failures))
}

/// Expected outcome of decoding a wire vector.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    #[serde(default)]
    pub description: String,
    /// Whether the bytes decode.
    pub valid: bool,
    /// Decoder error name for invalid vectors.
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub size: Option<usize>,
    #[serde(default)]
    pub message: Option<wire::Message>,
}

fn error_name(e: &wire::WireError) -> String {
    let debug = format!("{e:?}");
    debug
        .split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or_default()
        .to_string()
}

fn vector_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(usage)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "hex"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn validate(out: &mut Output, paths: &[PathBuf]) -> Result<Verdict, Failure> {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for file in vector_files(paths)? {
        let text = read(&file)?;
        let bytes = hex::decode(text.split_whitespace().collect::<String>())
            .map_err(|e| usage(format!("{}: {e}", file.display())))?;
        let sidecar: Sidecar = serde_json::from_str(&read(&file.with_extension("json"))?)
            .map_err(|e| usage(format!("{}: {e}", file.with_extension("json").display())))?;
        let decoded = wire::decode(&bytes);
        let mut problems = Vec::new();
        match (&decoded, sidecar.valid) {
            (Ok(m), true) => {
                if wire::encode(m).as_deref() != Ok(&bytes[..]) {
                    problems.push("re-encoding differs".to_string());
                }
                if sidecar.message.as_ref().is_some_and(|x| x != m) {
                    problems.push("decoded message differs from the sidecar".to_string());
                }
                if !wire::validate(m).is_well_formed() {
                    problems.push("decoded message is not well formed".to_string());
                }
            }
            (Err(e), false) => {
                if sidecar.error.as_ref().is_some_and(|x| *x != error_name(e)) {
                    problems.push(format!("expected {:?}, got {}", sidecar.error, error_name(e)));
                }
            }
            (Ok(_), false) => problems.push("decoded but expected an error".to_string()),
            (Err(e), true) => problems.push(format!("expected to decode, got {e}")),
        }
        if sidecar.size.is_some_and(|s| s != bytes.len()) {
            problems.push(format!("size {} differs from the sidecar", bytes.len()));
        }
        let name = file.display().to_string();
        if !problems.is_empty() {
            failures.push(format!("{name}: {}", problems.join(", ")));
        }
        results.push(json!({
            "vector": name,
            "description": sidecar.description,
            "bytes": bytes.len(),
            "decoded": decoded.is_ok(),
            "error": decoded.as_ref().err().map(error_name),
            "ok": problems.is_empty(),
            "problems": problems,
        }));
    }
    let report = json!({ "vectors": results.len(), "failed": failures.len(), "results": results });
    out.write_json("validate.json", &report)?;
    print(&report);
    Ok(verdict(Vec::new(), failures))
}
