//! Read/write latency of the ledger against a column-encrypted baseline
//! store over growing entry counts.

mod baseline;
mod report;
mod resources;
mod workload;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::Serialize;
use thiserror::Error;

pub use baseline::{open_cell, seal_cell, BaselineError, BaselineRow, BaselineStore, Column};
pub use report::{
    emit_report, parse_csv, reported, BenchRow, Format, Operation, Reference, System, CSV_HEADER,
};
pub use resources::{sample_resources, ResourceSample, ResourceSampler};
pub use workload::{generate_workload, generate_workload_with, WorkloadConfig};

use crate::collector::PassiveDnsRecord;
use crate::digest::Digest;
use crate::identity::{CertificateAuthority, Identity};
use crate::ledger::Selector;
use crate::network::{enroll_topology, NetworkConfig, NodeId, OrgSpec};
use crate::txflow::Gateway;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("setup failed: {0}")]
    SetupFailure(String),
    #[error("resource sampling unsupported: {0}")]
    Unsupported(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Calls made before timing starts, per point.
    pub warmup: usize,
    pub network: NetworkConfig,
    pub baseline_indexed: bool,
    /// Persist the baseline table under this directory.
    pub baseline_dir: Option<PathBuf>,
    pub sample_interval: Option<Duration>,
    /// Records stored per gateway call while preloading the ledger.
    pub preload_chunk: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            warmup: 3,
            network: bench_network(),
            baseline_indexed: false,
            baseline_dir: None,
            sample_interval: None,
            preload_chunk: 500,
        }
    }
}

/// Two organizations with one peer each: cross-organization endorsement
/// and a member/non-member split, at half the memory of the full topology.
pub fn bench_network() -> NetworkConfig {
    let mut config = NetworkConfig::default();
    for org in &mut config.orgs {
        *org = OrgSpec {
            name: org.name.clone(),
            peers: vec!["peer0".into()],
            clients: vec!["client".into()],
        };
    }
    config
}

#[derive(Debug, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub resources: Vec<ResourceSample>,
}

/// One point: `system` preloaded with `n` entries, `trials` timed calls.
pub fn run_bench(system: System, op: Operation, n: u64, trials: usize, seed: u64) -> Result<BenchReport, BenchError> {
    run_sweep(system, &[op], &[n], trials, seed, &BenchOptions::default())
}

/// Times every operation at each entry count in `sizes` (ascending).
///
/// Each size gets its own store, preloaded with the same workload prefix.
/// Timed calls then go round-robin across the stores, with the starting
/// store rotating each round, so CPU frequency changes, core migration and
/// neighbour load hit every size alike instead of skewing whichever size
/// happened to be measured during the disturbance.
pub fn run_sweep(
    system: System,
    ops: &[Operation],
    sizes: &[u64],
    trials: usize,
    seed: u64,
    options: &BenchOptions,
) -> Result<BenchReport, BenchError> {
    if trials == 0 || ops.is_empty() || sizes.is_empty() {
        return Ok(BenchReport::default());
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::SetupFailure("entry counts must be strictly ascending".into()));
    }
    let sampler = match options.sample_interval {
        Some(interval) => sample_resources(interval).ok(),
        None => None,
    };
    let rounds = options.warmup + trials;
    let max_n = *sizes.last().expect("non-empty") as usize;
    let writes = ops.iter().filter(|&&o| o == Operation::Write).count() * rounds;
    let workload = generate_workload(max_n + writes, seed);
    let (preload, fresh) = workload.split_at(max_n);

    let mut targets = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut target = Target::new(system, seed, n, options)?;
        target.preload(&preload[..n as usize], options.preload_chunk)?;
        targets.push(target);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut fresh = fresh.iter();
    let mut times: Vec<Vec<Vec<Duration>>> = vec![vec![Vec::with_capacity(trials); sizes.len()]; ops.len()];

    for (o, &op) in ops.iter().enumerate() {
        // every store takes the same write records, so one slice per round
        let mut round_records = Vec::new();
        for round in 0..rounds {
            if op == Operation::Write {
                round_records = vec![fresh
                    .next()
                    .cloned()
                    .ok_or_else(|| BenchError::SetupFailure("workload exhausted".into()))?];
            }
            for k in 0..targets.len() {
                let i = (round + k) % targets.len();
                let target = &mut targets[i];
                let elapsed = match op {
                    Operation::Read => {
                        let probe = target.probe(&mut rng);
                        target.time_read(&probe)?
                    }
                    Operation::Write => target.time_write(&round_records[0])?,
                };
                if round >= options.warmup {
                    times[o][i].push(elapsed);
                }
            }
        }
    }

    let mut rows = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        for (o, &op) in ops.iter().enumerate() {
            rows.push(summarize(system, op, n, seed, options, std::mem::take(&mut times[o][i])));
        }
    }
    let resources = sampler.map(ResourceSampler::finish).unwrap_or_default();
    Ok(BenchReport { rows, resources })
}

fn summarize(system: System, op: Operation, n: u64, seed: u64, options: &BenchOptions, times: Vec<Duration>) -> BenchRow {
    let mut ms: Vec<f64> = times.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    ms.sort_by(f64::total_cmp);
    BenchRow {
        system,
        operation: op,
        entries: n,
        median_ms: median(&ms),
        p95_ms: percentile(&ms, 95.0),
        trials: ms.len(),
        seed,
        config_hash: config_hash(system, op, n, ms.len(), seed, options),
    }
}

/// Median of sorted samples (mean of the middle pair for even counts).
pub fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        (sorted[k / 2 - 1] + sorted[k / 2]) / 2.0
    }
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    system: System,
    operation: Operation,
    entries: u64,
    trials: usize,
    seed: u64,
    warmup: usize,
    network: &'a NetworkConfig,
    baseline_indexed: bool,
    baseline_persisted: bool,
}

/// First 16 hex digits of SHA-256 over the JSON of everything that shapes
/// a measurement.
pub fn config_hash(system: System, op: Operation, n: u64, trials: usize, seed: u64, options: &BenchOptions) -> String {
    let cfg = HashedConfig {
        system,
        operation: op,
        entries: n,
        trials,
        seed,
        warmup: options.warmup,
        network: &options.network,
        baseline_indexed: options.baseline_indexed,
        baseline_persisted: options.baseline_dir.is_some(),
    };
    let json = serde_json::to_vec(&cfg).expect("config serializes");
    Digest::of(&json).to_hex()[..16].to_string()
}

struct LedgerTarget {
    gw: Gateway,
    client: Identity,
    ids: Vec<crate::collector::RecordId>,
}

enum Target {
    Ledger(Box<LedgerTarget>),
    Baseline {
        store: BaselineStore,
        domains: Vec<String>,
    },
}

impl Target {
    fn new(system: System, seed: u64, n: u64, options: &BenchOptions) -> Result<Self, BenchError> {
        let setup = |e: String| BenchError::SetupFailure(e);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        match system {
            System::Ledger => {
                let config = options.network.clone();
                let mut ca = CertificateAuthority::generate(&mut rng);
                let ids = enroll_topology(&config, &mut ca, &mut rng).map_err(|e| setup(e.to_string()))?;
                let org = config
                    .collections
                    .first()
                    .and_then(|c| c.member_orgs.iter().next())
                    .ok_or_else(|| setup("no collection member organization".into()))?;
                let client = config
                    .orgs
                    .iter()
                    .find(|o| &o.name == org)
                    .and_then(|o| o.clients.first())
                    .map(|c| NodeId::new(c, org))
                    .and_then(|id| ids.get(&id).cloned())
                    .ok_or_else(|| setup(format!("no client in {org}")))?;
                let mut gw = Gateway::new(config, ca.public_key(), &ids).map_err(|e| setup(e.to_string()))?;
                gw.init_chain().map_err(|e| setup(e.to_string()))?;
                gw.network_mut().set_recording(false);
                Ok(Target::Ledger(Box::new(LedgerTarget {
                    gw,
                    client,
                    ids: Vec::new(),
                })))
            }
            System::Baseline => {
                let key: [u8; 32] = rng.gen();
                let store = match &options.baseline_dir {
                    Some(dir) => {
                        std::fs::create_dir_all(dir).map_err(|e| setup(e.to_string()))?;
                        let path = dir.join(format!("baseline-{seed}-{n}.jsonl"));
                        if path.exists() {
                            std::fs::remove_file(&path).map_err(|e| setup(e.to_string()))?;
                        }
                        BaselineStore::open(&path, key, options.baseline_indexed)?
                    }
                    None => BaselineStore::new(key, options.baseline_indexed),
                };
                Ok(Target::Baseline {
                    store,
                    domains: Vec::new(),
                })
            }
        }
    }

    fn preload(&mut self, records: &[PassiveDnsRecord], chunk: usize) -> Result<(), BenchError> {
        match self {
            Target::Ledger(l) => {
                for part in records.chunks(chunk.max(1)) {
                    for (r, res) in part.iter().zip(l.gw.store_batch(&l.client, part)) {
                        match res {
                            Ok(t) if t.is_committed() => l.ids.push(r.record_id),
                            Ok(t) => {
                                return Err(BenchError::SetupFailure(format!("preload not committed: {:?}", t.status)))
                            }
                            Err(e) => return Err(BenchError::SetupFailure(format!("preload: {e}"))),
                        }
                    }
                }
            }
            Target::Baseline { store, domains } => {
                for r in records {
                    store.insert(r)?;
                    domains.push(r.domain.clone());
                }
            }
        }
        Ok(())
    }

    /// A stored key (ledger) or the domain of a stored row (baseline),
    /// picked uniformly over stored entries.
    fn probe(&self, rng: &mut ChaCha8Rng) -> Probe {
        match self {
            Target::Ledger(l) if !l.ids.is_empty() => Probe::Key(l.ids[rng.gen_range(0..l.ids.len())]),
            Target::Baseline { domains, .. } if !domains.is_empty() => {
                Probe::Domain(domains[rng.gen_range(0..domains.len())].clone())
            }
            _ => Probe::Domain("empty.invalid".into()),
        }
    }

    fn time_read(&mut self, probe: &Probe) -> Result<Duration, BenchError> {
        match (self, probe) {
            (Target::Ledger(l), Probe::Key(id)) => {
                let selector = Selector::record_id(*id);
                let start = Instant::now();
                let got = l.gw.query_public(&l.client, &selector);
                let elapsed = start.elapsed();
                match got {
                    Ok(rows) if rows.len() == 1 => Ok(elapsed),
                    other => Err(BenchError::SetupFailure(format!("keyed read returned {other:?}"))),
                }
            }
            (Target::Ledger(l), Probe::Domain(_)) => {
                let selector = Selector::record_id(crate::collector::RecordId([0; 16]));
                let start = Instant::now();
                let _ = l.gw.query_public(&l.client, &selector);
                Ok(start.elapsed())
            }
            (Target::Baseline { store, .. }, Probe::Domain(domain)) => {
                let start = Instant::now();
                let got = store.find_by_domain(domain)?;
                let elapsed = start.elapsed();
                std::hint::black_box(got);
                Ok(elapsed)
            }
            (Target::Baseline { .. }, Probe::Key(_)) => unreachable!("baseline probes are domains"),
        }
    }

    fn time_write(&mut self, record: &PassiveDnsRecord) -> Result<Duration, BenchError> {
        match self {
            Target::Ledger(l) => {
                let start = Instant::now();
                let res = l.gw.store_record(&l.client, record);
                let elapsed = start.elapsed();
                match res {
                    Ok(t) if t.is_committed() => {
                        l.ids.push(record.record_id);
                        Ok(elapsed)
                    }
                    other => Err(BenchError::SetupFailure(format!("write not committed: {other:?}"))),
                }
            }
            Target::Baseline { store, domains } => {
                let start = Instant::now();
                store.insert(record)?;
                let elapsed = start.elapsed();
                domains.push(record.domain.clone());
                Ok(elapsed)
            }
        }
    }
}

enum Probe {
    Key(crate::collector::RecordId),
    Domain(String),
}
