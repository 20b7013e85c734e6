//! Process CPU and memory sampling from procfs.

use std::fs;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceSample {
    /// Milliseconds since sampling started.
    pub t_ms: u64,
    /// Share of one CPU used by the whole process since the previous sample.
    pub cpu_percent: f64,
    pub rss_kib: u64,
}

/// Background sampler; stop it with [`ResourceSampler::finish`].
pub struct ResourceSampler {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<Vec<ResourceSample>>,
}

/// Starts sampling every `interval`. Fails with `Unsupported` where procfs
/// is unavailable.
pub fn sample_resources(interval: Duration) -> Result<ResourceSampler, BenchError> {
    let ticks = clock_ticks().ok_or_else(|| BenchError::Unsupported("clock tick rate unknown".into()))?;
    let first = cpu_ticks().ok_or_else(|| BenchError::Unsupported("/proc/self/stat unreadable".into()))?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let handle = thread::spawn(move || {
        let start = Instant::now();
        let mut samples = Vec::new();
        let (mut last_t, mut last_cpu) = (start, first);
        while !flag.load(Ordering::Relaxed) {
            thread::sleep(interval);
            let now = Instant::now();
            let Some(cpu) = cpu_ticks() else { break };
            let wall = now.duration_since(last_t).as_secs_f64();
            let used = cpu.saturating_sub(last_cpu) as f64 / ticks;
            samples.push(ResourceSample {
                t_ms: now.duration_since(start).as_millis() as u64,
                cpu_percent: if wall > 0.0 { 100.0 * used / wall } else { 0.0 },
                rss_kib: rss_kib().unwrap_or(0),
            });
            (last_t, last_cpu) = (now, cpu);
        }
        samples
    });
    Ok(ResourceSampler { stop, handle })
}

impl ResourceSampler {
    pub fn finish(self) -> Vec<ResourceSample> {
        self.stop.store(true, Ordering::Relaxed);
        self.handle.join().unwrap_or_default()
    }
}

fn clock_ticks() -> Option<f64> {
    // SAFETY: sysconf only reads a configuration value.
    let t = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    (t > 0).then_some(t as f64)
}

/// utime + stime of this process, in clock ticks.
fn cpu_ticks() -> Option<u64> {
    let stat = fs::read_to_string("/proc/self/stat").ok()?;
    // the command name may contain spaces; fields resume after its ')'
    let rest = &stat[stat.rfind(')')? + 1..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let utime: u64 = fields.get(11)?.parse().ok()?;
    let stime: u64 = fields.get(12)?.parse().ok()?;
    Some(utime + stime)
}

fn rss_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmRSS:"))?
        .split_whitespace()
        .next()?
        .parse()
        .ok()
}
