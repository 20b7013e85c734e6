//! `pdnsctl`: initialize a ledger network on disk, ingest observations,
//! query, replay fault scenarios and run benchmarks.
//!
//! Exit codes: 0 ok, 2 usage, 3 access denied, 4 not found, 5 internal.

mod datadir;
mod error;
mod script;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use log::{info, warn};
use pdns_core::bench::{self, emit_report, BenchOptions, Format, Operation, System, WorkloadConfig};
use pdns_core::collector::{parse_ingest_line, Collector, IngestLine, PassiveDnsRecord, RecordId};
use pdns_core::identity::Identity;
use pdns_core::network::{Fault, NetworkConfig};
use pdns_core::txflow::{Gateway, TxError, TxStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use datadir::{read_config, DataDir};
use error::CliError;
use script::{parse_script, Step};

#[derive(Parser)]
#[command(name = "pdnsctl", version, about = "Operate a permissioned passive DNS ledger")]
struct Cli {
    /// Network config (TOML). Read by `init`; overrides the stored copy elsewhere.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Certificate or key file of the identity to act as.
    #[arg(long, global = true)]
    identity: Option<PathBuf>,
    #[arg(long, global = true, env = "PRESERVE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Aligned text instead of JSON/CSV.
    #[arg(long, global = true)]
    human: bool,
    /// -v for progress, -vv for debug output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create the CA and every topology identity, and commit genesis.
    Init {
        /// Derive all keys from this seed instead of the OS RNG.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay JSON-lines records or hex observation lines and store them.
    Ingest { file: PathBuf },
    /// Public selector query, private read, or record history.
    #[command(group(ArgGroup::new("what").required(true).args(["selector", "private", "history"])))]
    Query {
        /// JSON selector, e.g. '{"domain": "example.com"}'.
        #[arg(long)]
        selector: Option<String>,
        /// Record id whose client and resolver addresses to read.
        #[arg(long)]
        private: Option<String>,
        #[arg(long)]
        history: Option<String>,
    },
    /// Run a fault-injection script and write its transcript.
    Scenario {
        #[arg(long)]
        script: PathBuf,
        /// Seed for the records generated by `store` steps.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure read/write latency of the ledger and the baseline store.
    Bench {
        /// Entry counts; comma-separated for a sweep.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u64>,
        /// ledger or baseline; both when omitted.
        #[arg(long)]
        system: Option<System>,
        /// read or write; both when omitted.
        #[arg(long)]
        op: Option<Operation>,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "csv")]
        format: Format,
        /// Untimed calls before each measured point.
        #[arg(long, default_value_t = BenchOptions::default().warmup)]
        warmup: usize,
        /// Give the baseline a domain index.
        #[arg(long)]
        indexed: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error ({}): {e}", e.kind());
            e.exit_code()
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    match &cli.command {
        Command::Init { seed } => cmd_init(cli, *seed),
        Command::Ingest { file } => cmd_ingest(cli, file),
        Command::Query {
            selector,
            private,
            history,
        } => cmd_query(cli, selector.as_deref(), private.as_deref(), history.as_deref()),
        Command::Scenario { script, seed } => cmd_scenario(cli, script, *seed),
        Command::Bench {
            n,
            system,
            op,
            trials,
            seed,
            format,
            warmup,
            indexed,
        } => cmd_bench(cli, n, *system, *op, *trials, *seed, *format, *warmup, *indexed),
    }
}

fn data_dir(cli: &Cli) -> Result<DataDir, CliError> {
    cli.data_dir
        .as_ref()
        .map(DataDir::new)
        .ok_or_else(|| CliError::Usage("no data directory: pass --data-dir or set PRESERVE_DATA_DIR".into()))
}

fn acting_identity(cli: &Cli, dir: &DataDir, gateway: &Gateway) -> Result<Identity, CliError> {
    let path = cli
        .identity
        .as_ref()
        .ok_or_else(|| CliError::Usage("this command needs --identity".into()))?;
    dir.identity(path, gateway)
}

fn print(cli: &Cli, value: &Value) {
    let mut out = std::io::stdout().lock();
    let text = if cli.human {
        human(value)
    } else {
        serde_json::to_string_pretty(value).expect("json value serializes") + "\n"
    };
    let _ = out.write_all(text.as_bytes());
}

/// Objects become `key  value` lines; arrays of objects become a table.
fn human(value: &Value) -> String {
    let cell = |v: &Value| match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    };
    match value {
        Value::Object(map) => {
            let width = map.keys().map(String::len).max().unwrap_or(0);
            map.iter()
                .map(|(k, v)| format!("{k:<width$}  {}\n", cell(v)))
                .collect()
        }
        Value::Array(rows) if rows.iter().all(Value::is_object) && !rows.is_empty() => {
            let header: Vec<String> = rows[0].as_object().expect("object").keys().cloned().collect();
            let mut table = vec![header.clone()];
            for r in rows {
                table.push(header.iter().map(|k| cell(&r[k])).collect());
            }
            let widths: Vec<usize> = (0..header.len())
                .map(|i| table.iter().map(|r| r[i].len()).max().unwrap_or(0))
                .collect();
            table
                .iter()
                .map(|r| {
                    let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                    cells.join("  ").trim_end().to_string() + "\n"
                })
                .collect()
        }
        Value::Array(rows) if rows.is_empty() => "(no rows)\n".into(),
        other => cell(other) + "\n",
    }
}

fn cmd_init(cli: &Cli, seed: Option<u64>) -> Result<ExitCode, CliError> {
    let dir = data_dir(cli)?;
    let config = match &cli.config {
        Some(path) => read_config(path)?,
        None => NetworkConfig::default(),
    };
    let mut rng = match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    };
    let (gateway, certs) = dir.init(&config, &mut rng)?;
    info!("initialized {} with {} identities", dir.root().display(), certs.len());
    print(
        cli,
        &json!({
            "data_dir": dir.root(),
            "orgs": config.org_names().collect::<Vec<_>>(),
            "peers": gateway.network().peer_ids().iter().map(|p| p.0.clone()).collect::<Vec<_>>(),
            "orderers": gateway.network().orderer_ids().iter().map(|p| p.0.clone()).collect::<Vec<_>>(),
            "certificates": certs,
            "height": gateway.height(),
        }),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_ingest(cli: &Cli, file: &Path) -> Result<ExitCode, CliError> {
    let dir = data_dir(cli)?;
    let mut gateway = dir.open(cli.config.as_deref())?;
    let caller = acting_identity(cli, &dir, &gateway)?;
    let text = fs::read_to_string(file).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;

    let mut collector = Collector::new(gateway.network().config().chain_id.clone());
    let mut direct: Vec<PassiveDnsRecord> = Vec::new();
    let mut errors = Vec::new();
    let mut lines = 0usize;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        match parse_ingest_line(line) {
            Ok(None) => continue,
            Ok(Some(IngestLine::Record(r))) => direct.push(r),
            Ok(Some(IngestLine::Observation {
                client_ip,
                resolver_ip,
                at,
                message,
            })) => {
                if let Err(e) = collector.observe(&message, client_ip, resolver_ip, at) {
                    warn!("{}:{n}: {e}", file.display());
                    errors.push(json!({ "line": n, "error": e.to_string() }));
                }
            }
            Err(e) => {
                warn!("{}:{n}: {e}", file.display());
                errors.push(json!({ "line": n, "error": e.to_string() }));
            }
        }
        lines += 1;
    }
    let records: Vec<PassiveDnsRecord> = direct.into_iter().chain(collector.records().cloned()).collect();
    let results = gateway.store_batch(&caller, &records);
    let (mut committed, mut rejected, mut queued, mut denied) = (0, 0, 0, 0);
    for (record, result) in records.iter().zip(&results) {
        match result {
            Ok(r) => match &r.status {
                TxStatus::Committed { .. } => committed += 1,
                TxStatus::Queued => queued += 1,
                TxStatus::Rejected { reason } => {
                    rejected += 1;
                    warn!("record {}: rejected: {reason}", record.record_id);
                    errors.push(json!({ "record_id": record.record_id, "error": reason }));
                }
            },
            Err(e) => {
                rejected += 1;
                denied += usize::from(matches!(e, TxError::PolicyViolation(_) | TxError::AccessDenied));
                warn!("record {}: {e}", record.record_id);
                errors.push(json!({ "record_id": record.record_id, "error": e.to_string() }));
            }
        }
    }
    dir.save(&gateway)?;
    print(
        cli,
        &json!({
            "lines": lines,
            "records": records.len(),
            "visits": records.iter().map(|r| r.visit_count).sum::<u64>(),
            "committed": committed,
            "rejected": rejected,
            "queued": queued,
            "height": gateway.height(),
            "errors": errors,
        }),
    );
    if denied > 0 && committed == 0 {
        return Err(CliError::Denied(format!("{denied} records refused for {}", caller.certificate.label())));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_query(
    cli: &Cli,
    selector: Option<&str>,
    private: Option<&str>,
    history: Option<&str>,
) -> Result<ExitCode, CliError> {
    let dir = data_dir(cli)?;
    let gateway = dir.open(cli.config.as_deref())?;
    let caller = acting_identity(cli, &dir, &gateway)?;
    let record_id = |s: &str| {
        s.parse::<RecordId>()
            .map_err(|e| CliError::Usage(format!("bad record id {s:?}: {e}")))
    };
    let value = if let Some(selector) = selector {
        serde_json::to_value(gateway.query_public_json(&caller, selector)?)
    } else if let Some(id) = private {
        let id = record_id(id)?;
        let p = gateway.query_private(&caller, &id)?;
        Ok(json!({ "record_id": id, "client_ip": p.client_ip, "resolver_ip": p.resolver_ip }))
    } else {
        let id = record_id(history.expect("clap requires one of the three"))?;
        serde_json::to_value(gateway.get_history(&caller, &id)?)
    };
    print(cli, &value.map_err(|e| CliError::Internal(e.to_string()))?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_scenario(cli: &Cli, script_path: &Path, seed: u64) -> Result<ExitCode, CliError> {
    let dir = data_dir(cli)?;
    let mut gateway = dir.open(cli.config.as_deref())?;
    let text = fs::read_to_string(script_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", script_path.display())))?;
    let peers = gateway.network().peer_ids().to_vec();
    let nodes: Vec<_> = peers.iter().chain(gateway.network().orderer_ids()).cloned().collect();
    let steps = parse_script(&text, &nodes, &peers).map_err(|e| CliError::Usage(e.to_string()))?;
    let caller = if steps.iter().any(|(_, s)| s.needs_identity()) {
        Some(acting_identity(cli, &dir, &gateway)?)
    } else {
        None
    };
    let workload = WorkloadConfig {
        chain_id: gateway.network().config().chain_id.clone(),
        ..WorkloadConfig::default()
    };

    let mut outcomes = Vec::new();
    for (line, step) in &steps {
        info!("line {line}: {step}");
        let at = |e: CliError| e.context(format!("ScriptError at line {line} ({step})"));
        let outcome = match step {
            Step::Crash(n) => fault(&mut gateway, Fault::Crash(n.clone())).map_err(at)?,
            Step::Recover(n) => fault(&mut gateway, Fault::Recover(n.clone())).map_err(at)?,
            Step::Failover => fault(&mut gateway, Fault::OrdererFailover).map_err(at)?,
            Step::Sync(p) => {
                let report = gateway
                    .network_mut()
                    .gossip_sync(p)
                    .map_err(|e| at(CliError::Internal(e.to_string())))?;
                json!({ "fetched": report.fetched, "complete": report.complete, "rejected": report.rejected.len() })
            }
            Step::Store(k) => {
                let caller = caller.as_ref().expect("identity loaded for store steps");
                let records = bench::generate_workload_with(*k, seed ^ (*line as u64) << 32, &workload);
                let mut counts = [0usize; 3];
                for r in gateway.store_batch(caller, &records) {
                    match r.map_err(|e| at(e.into()))?.status {
                        TxStatus::Committed { .. } => counts[0] += 1,
                        TxStatus::Queued => counts[1] += 1,
                        TxStatus::Rejected { .. } => counts[2] += 1,
                    }
                }
                json!({ "committed": counts[0], "queued": counts[1], "rejected": counts[2] })
            }
            Step::Query(selector) => {
                let caller = caller.as_ref().expect("identity loaded for query steps");
                let hits = gateway.query_public_json(caller, selector).map_err(|e| at(e.into()))?;
                json!({ "matches": hits.len() })
            }
        };
        outcomes.push(json!({ "line": line, "step": step.to_string(), "height": gateway.height(), "result": outcome }));
    }

    let transcript = gateway.network().transcript_jsonl();
    let path = dir.root().join("transcript.jsonl");
    fs::write(&path, &transcript)?;
    dir.save(&gateway)?;
    let gossip = gateway
        .network()
        .transcript()
        .iter()
        .filter(|l| l.json.contains("\"via\":\"gossip\""))
        .count();
    print(
        cli,
        &json!({
            "steps": outcomes,
            "transcript": path,
            "transcript_lines": transcript.lines().count(),
            "gossip_commits": gossip,
            "height": gateway.height(),
            "converged": gateway.network().converged(),
        }),
    );
    Ok(ExitCode::SUCCESS)
}

fn fault(gateway: &mut Gateway, f: Fault) -> Result<Value, CliError> {
    gateway.inject_fault(f)?;
    Ok(json!({ "pending": gateway.pending() }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    cli: &Cli,
    sizes: &[u64],
    system: Option<System>,
    op: Option<Operation>,
    trials: usize,
    seed: u64,
    format: Format,
    warmup: usize,
    indexed: bool,
) -> Result<ExitCode, CliError> {
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.first() == Some(&0) {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let systems = system.map_or(vec![System::Ledger, System::Baseline], |s| vec![s]);
    let ops = op.map_or(vec![Operation::Read, Operation::Write], |o| vec![o]);
    let options = BenchOptions {
        warmup,
        baseline_indexed: indexed,
        baseline_dir: cli.data_dir.as_ref().map(|d| d.join("bench")),
        ..BenchOptions::default()
    };
    let mut rows = Vec::new();
    for system in systems {
        info!("bench {system} {ops:?} over {sizes:?}, {trials} trials");
        let report = bench::run_sweep(system, &ops, &sizes, trials, seed, &options)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        rows.extend(report.rows);
    }
    let format = if cli.human { Format::Table } else { format };
    let text = emit_report(&rows, format);
    if let Some(d) = &cli.data_dir {
        fs::create_dir_all(d)?;
        fs::write(d.join("bench.csv"), emit_report(&rows, Format::Csv))?;
    }
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    Ok(ExitCode::SUCCESS)
}
