//! Synthetic passive DNS traffic.

use std::collections::{HashMap, HashSet};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::collector::{ObservationKey, PassiveDnsRecord, RecordId};
use crate::dnswire::RecordType;

const POPULAR: &[&str] = &[
    "google.com", "youtube.com", "facebook.com", "wikipedia.org", "amazon.com",
    "twitter.com", "instagram.com", "linkedin.com", "netflix.com", "microsoft.com",
    "apple.com", "github.com", "stackoverflow.com", "reddit.com", "bing.com",
    "yahoo.com", "cloudflare.com", "zoom.us", "office.com", "live.com",
];

const WORDS: &[&str] = &[
    "alpha", "blue", "cloud", "data", "echo", "fast", "green", "host", "info", "jet",
    "kilo", "lab", "media", "net", "open", "pixel", "quick", "red", "shop", "tech",
];

const TLDS: &[&str] = &["com", "net", "org", "io", "de", "co.uk", "info", "gr"];

const TTLS: &[u32] = &[30, 60, 300, 600, 3600, 86400];

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub chain_id: String,
    /// Probability that a record repeats an earlier observation key.
    pub duplicate_rate: f64,
    pub domains: usize,
    pub clients: u32,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            chain_id: "pdns".into(),
            duplicate_rate: 0.0,
            domains: 10_000,
            clients: 5_000,
        }
    }
}

/// `n` records, deterministic in `seed`, with distinct record ids.
pub fn generate_workload(n: usize, seed: u64) -> Vec<PassiveDnsRecord> {
    generate_workload_with(n, seed, &WorkloadConfig::default())
}

/// Domains follow a Zipf law over a pool led by well-known names; clients
/// sit in 10.0.0.0/8 behind three resolvers. A repeated observation keeps
/// its key, moves its timestamp forward and bumps `visit_count`.
pub fn generate_workload_with(n: usize, seed: u64, config: &WorkloadConfig) -> Vec<PassiveDnsRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = domain_pool(config.domains.max(POPULAR.len()), &mut rng);
    let zipf = Zipf::new(pool.len() as u64, 1.1).expect("valid zipf parameters");
    let resolvers = [
        IpAddr::V4(Ipv4Addr::new(10, 0, 0, 53)),
        IpAddr::V4(Ipv4Addr::new(10, 0, 1, 53)),
        IpAddr::V4(Ipv4Addr::new(10, 0, 2, 53)),
    ];
    // latest occurrence of each key
    let mut seen: HashMap<RecordId, usize> = HashMap::with_capacity(n);
    let mut out: Vec<PassiveDnsRecord> = Vec::with_capacity(n);
    let mut now_ms: u64 = 1_700_000_000_000;

    while out.len() < n {
        now_ms += rng.gen_range(0..50);
        if !out.is_empty() && rng.gen_bool(config.duplicate_rate.clamp(0.0, 1.0)) {
            let earlier = out[rng.gen_range(0..out.len())].record_id;
            let last = seen[&earlier];
            let mut again = out[last].clone();
            again.visit_count += 1;
            seen.insert(earlier, out.len());
            again.ts_seconds = now_ms / 1000;
            again.ts_millis = (now_ms % 1000) as u16;
            out.push(again);
            continue;
        }
        let d = zipf.sample(&mut rng) as usize - 1;
        let domain = pool[d].clone();
        let rtype = if rng.gen_bool(0.8) { RecordType::A } else { RecordType::AAAA };
        let answer_ip = answer_for(d, rtype, rng.gen_range(0..3));
        let c = rng.gen_range(0..config.clients.max(1));
        let client_ip = IpAddr::V4(Ipv4Addr::new(10, 10 + (c >> 16) as u8, (c >> 8) as u8, c as u8));
        let key = ObservationKey {
            client_ip,
            domain: domain.clone(),
            rtype,
            answer_ip: answer_ip.clone(),
        };
        let record_id = key.record_id(&config.chain_id);
        if seen.contains_key(&record_id) {
            continue;
        }
        seen.insert(record_id, out.len());
        out.push(PassiveDnsRecord {
            chain_id: config.chain_id.clone(),
            record_id,
            domain,
            answer_ip,
            ttl: *TTLS.choose(&mut rng).expect("non-empty"),
            ts_seconds: now_ms / 1000,
            ts_millis: (now_ms % 1000) as u16,
            visit_count: 1,
            client_ip,
            resolver_ip: resolvers[rng.gen_range(0..resolvers.len())],
        });
    }
    out
}

fn domain_pool(size: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut pool: Vec<String> = POPULAR.iter().map(|d| d.to_string()).collect();
    let mut taken: HashSet<String> = pool.iter().cloned().collect();
    while pool.len() < size {
        let a = WORDS.choose(rng).expect("non-empty");
        let b = WORDS.choose(rng).expect("non-empty");
        let tld = TLDS.choose(rng).expect("non-empty");
        let name = if rng.gen_bool(0.3) {
            format!("cdn{}.{a}{b}.{tld}", rng.gen_range(0..100))
        } else {
            format!("{a}{b}{}.{tld}", rng.gen_range(0..1000))
        };
        if taken.insert(name.clone()) {
            pool.push(name);
        }
    }
    pool
}

/// A small, stable answer set per domain.
fn answer_for(domain: usize, rtype: RecordType, choice: u32) -> String {
    let d = domain as u32;
    if rtype == RecordType::AAAA {
        let ip = Ipv6Addr::new(0x2001, 0xdb8, (d >> 16) as u16, d as u16, 0, 0, 0, choice as u16 + 1);
        ip.to_string()
    } else {
        const PREFIXES: [u8; 10] = [23, 34, 52, 104, 142, 151, 172, 185, 199, 216];
        let x = d.wrapping_mul(2_654_435_761);
        let first = PREFIXES[(x % PREFIXES.len() as u32) as usize];
        Ipv4Addr::new(first, (x >> 8) as u8, (x >> 16) as u8, 1 + choice as u8).to_string()
    }
}
