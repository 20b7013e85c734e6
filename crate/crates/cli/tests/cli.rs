use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pdns_core::bench::generate_workload;
use pdns_core::collector::{parse_ingest_line, Collector, IngestLine, PassiveDnsRecord};
use serde_json::Value;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/dedup_replay.log");

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }
}

fn pdnsctl(dir: &Path, args: &[&str]) -> Run {
    pdnsctl_env(dir, args, &[])
}

fn pdnsctl_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pdnsctl"));
    cmd.arg("--data-dir").arg(dir).args(args).env_remove("PRESERVE_DATA_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    finish(cmd.output().expect("spawn pdnsctl"))
}

fn finish(out: Output) -> Run {
    Run {
        code: out.status.code().expect("exited"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn cert(dir: &Path, org: &str, subject: &str) -> String {
    dir.join("crypto").join(org).join(format!("{subject}.cert")).display().to_string()
}

fn initialized() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("net");
    let run = pdnsctl(&dir, &["init", "--seed", "5"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    (tmp, dir)
}

/// Workload records with addresses from the documentation ranges, so a
/// substring search for the prefix finds any leak.
fn sentinel_records(n: usize) -> Vec<PassiveDnsRecord> {
    generate_workload(n, 3)
        .into_iter()
        .enumerate()
        .map(|(i, mut r)| {
            r.client_ip = format!("203.0.113.{}", i + 1).parse().unwrap();
            r.resolver_ip = "198.51.100.53".parse().unwrap();
            r
        })
        .collect()
}

fn write_jsonl(path: &Path, records: &[PassiveDnsRecord]) {
    let text: String = records.iter().map(|r| r.to_json() + "\n").collect();
    fs::write(path, text).unwrap();
}

fn ingest_sentinels(dir: &Path, n: usize) -> Vec<PassiveDnsRecord> {
    let records = sentinel_records(n);
    let file = dir.with_extension("jsonl");
    write_jsonl(&file, &records);
    let run = pdnsctl(dir, &["--identity", &cert(dir, "Org1", "client"), "ingest", file.to_str().unwrap()]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    records
}

#[test]
fn init_lays_out_identities_and_refuses_a_second_run() {
    let (_tmp, dir) = initialized();
    let count = |org: &str, ext: &str| {
        fs::read_dir(dir.join("crypto").join(org))
            .unwrap()
            .filter(|e| {
                let p = e.as_ref().unwrap().path();
                p.extension().is_some_and(|x| x == ext) && p.file_name().unwrap().to_str().unwrap().starts_with("peer")
            })
            .count()
    };
    assert_eq!(count("Org1", "cert") + count("Org2", "cert"), 4);
    assert!(dir.join("crypto/OrdererOrg/orderer0.cert").is_file());
    assert!(dir.join("crypto/ca.key").is_file() && dir.join("crypto/ca.pub").is_file());
    for peer in ["peer0@Org1", "peer1@Org1", "peer0@Org2", "peer1@Org2"] {
        assert!(dir.join("peers").join(peer).join("chain.bin").is_file());
    }

    let again = pdnsctl(&dir, &["init"]);
    assert_eq!(again.code, 2);
    assert!(again.stderr.contains("DirNotEmpty"), "{}", again.stderr);
}

#[test]
fn init_with_a_three_org_config_creates_three_org_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("three.toml");
    fs::write(
        &config,
        r#"
orgs = [
  { name = "Alpha", peers = ["p0"] },
  { name = "Beta", peers = ["p0", "p1"] },
  { name = "Gamma", peers = ["p0"] },
]

[[collections]]
name = "pdnsPrivate"
member_orgs = ["Alpha"]
"#,
    )
    .unwrap();
    let dir = tmp.path().join("net");
    let run = pdnsctl(&dir, &["--config", config.to_str().unwrap(), "init", "--seed", "1"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let mut orgs: Vec<String> = fs::read_dir(dir.join("crypto"))
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_dir())
        .map(|e| e.file_name().into_string().unwrap())
        .filter(|n| n != "OrdererOrg")
        .collect();
    orgs.sort();
    assert_eq!(orgs, ["Alpha", "Beta", "Gamma"]);
    assert_eq!(run.json()["peers"].as_array().unwrap().len(), 4);
}

#[test]
fn ingest_counts_committed_records_and_logs_bad_lines() {
    let (_tmp, dir) = initialized();
    let records = generate_workload(10, 1);
    let file = dir.with_extension("ten.jsonl");
    write_jsonl(&file, &records);
    let org1 = cert(&dir, "Org1", "client");
    let run = pdnsctl(&dir, &["--identity", &org1, "ingest", file.to_str().unwrap()]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.json()["committed"], 10);
    assert_eq!(run.json()["errors"].as_array().unwrap().len(), 0);

    let mut lines: Vec<String> = generate_workload(9, 2).iter().map(|r| r.to_json()).collect();
    lines.insert(4, "{\"chain_id\": \"pdns\", \"domain\": ".into());
    let file = dir.with_extension("broken.jsonl");
    fs::write(&file, lines.join("\n")).unwrap();
    let run = pdnsctl(&dir, &["--identity", &org1, "ingest", file.to_str().unwrap()]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let summary = run.json();
    assert_eq!(summary["committed"], 9);
    assert_eq!(summary["errors"][0]["line"], 5);
    assert!(run.stderr.contains(":5:"), "error not logged: {}", run.stderr);
}

#[test]
fn ingest_of_the_replay_fixture_matches_the_collector() {
    let (_tmp, dir) = initialized();
    let text = fs::read_to_string(FIXTURE).unwrap();
    let mut collector = Collector::new("pdns");
    let mut lines = 0;
    for line in text.lines() {
        if let Some(IngestLine::Observation {
            client_ip,
            resolver_ip,
            at,
            message,
        }) = parse_ingest_line(line).unwrap()
        {
            lines += 1;
            let _ = collector.observe(&message, client_ip, resolver_ip, at);
        }
    }
    let visits: u64 = collector.records().map(|r| r.visit_count).sum();

    let run = pdnsctl(&dir, &["--identity", &cert(&dir, "Org1", "client"), "ingest", FIXTURE]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let s = run.json();
    assert_eq!(s["lines"], lines);
    assert_eq!(s["records"], collector.len() as u64);
    assert!(collector.len() < lines);
    assert_eq!(s["visits"], visits);
    assert_eq!(s["committed"], collector.len() as u64);
}

#[test]
fn queries_are_gated_by_identity() {
    let (_tmp, dir) = initialized();
    let records = ingest_sentinels(&dir, 6);
    let id = records[2].record_id.to_hex();
    let org1 = cert(&dir, "Org1", "client");
    let org2 = cert(&dir, "Org2", "client");

    let public = pdnsctl(&dir, &["--identity", &org1, "query", "--selector", "{}"]);
    assert_eq!(public.code, 0, "{}", public.stderr);
    assert_eq!(public.json().as_array().unwrap().len(), 6);
    assert!(!public.stdout.contains("client_ip"));

    let member = pdnsctl(&dir, &["--identity", &org1, "query", "--private", &id]);
    assert_eq!(member.code, 0, "{}", member.stderr);
    assert_eq!(member.json()["client_ip"], records[2].client_ip.to_string());

    let denied = pdnsctl(&dir, &["--identity", &org2, "query", "--private", &id]);
    assert_eq!(denied.code, 3);
    assert!(denied.stderr.contains("AccessDenied"), "{}", denied.stderr);
    assert!(denied.stdout.is_empty());

    let missing = pdnsctl(&dir, &["--identity", &org1, "query", "--private", &"ab".repeat(16)]);
    assert_eq!(missing.code, 4);
    assert!(missing.stderr.contains("NotFound"));

    let bad_id = pdnsctl(&dir, &["--identity", &org1, "query", "--private", "xyz"]);
    assert_eq!(bad_id.code, 2);
    let bad_selector = pdnsctl(&dir, &["--identity", &org1, "query", "--selector", "{\"client_ip\": \"1.2.3.4\"}"]);
    assert_eq!(bad_selector.code, 2, "{}", bad_selector.stderr);
}

#[test]
fn non_members_never_see_private_values() {
    let (_tmp, dir) = initialized();
    let records = ingest_sentinels(&dir, 8);
    let mut outputs = String::new();
    for who in ["client", "peer0", "peer1"] {
        let identity = cert(&dir, "Org2", who);
        let domain = format!("{{\"domain\": \"{}\"}}", records[0].domain);
        for args in [
            vec!["query", "--selector", "{}"],
            vec!["query", "--selector", domain.as_str()],
            vec!["--human", "query", "--selector", "{}"],
        ] {
            let mut full = vec!["--identity", identity.as_str()];
            full.extend(args);
            let run = pdnsctl(&dir, &full);
            assert_eq!(run.code, 0, "{}", run.stderr);
            outputs += &run.stdout;
            outputs += &run.stderr;
        }
        for r in &records {
            let id = r.record_id.to_hex();
            for flag in ["--private", "--history"] {
                let run = pdnsctl(&dir, &["--identity", &identity, "query", flag, &id]);
                outputs += &run.stdout;
                outputs += &run.stderr;
            }
        }
    }
    assert!(outputs.contains(&records[0].domain));
    assert!(!outputs.contains("203.0.113."));
    assert!(!outputs.contains("198.51.100."));
}

#[test]
fn identities_from_another_network_are_refused() {
    let (tmp, dir) = initialized();
    let other = tmp.path().join("other");
    assert_eq!(pdnsctl(&other, &["init", "--seed", "6"]).code, 0);
    let foreign = cert(&other, "Org1", "client");
    let run = pdnsctl(&dir, &["--identity", &foreign, "query", "--selector", "{}"]);
    assert_eq!(run.code, 3, "{}", run.stderr);
    let ingest = pdnsctl(&dir, &["--identity", &foreign, "ingest", FIXTURE]);
    assert_eq!(ingest.code, 3);
}

#[test]
fn org2_writes_are_refused() {
    let (_tmp, dir) = initialized();
    let run = pdnsctl(&dir, &["--identity", &cert(&dir, "Org2", "client"), "ingest", FIXTURE]);
    assert_eq!(run.code, 3, "{}", run.stderr);
    assert_eq!(run.json()["committed"], 0);
}

#[test]
fn state_persists_across_invocations() {
    let (_tmp, dir) = initialized();
    let org1 = cert(&dir, "Org1", "client");
    for expected in [1, 2] {
        let run = pdnsctl(&dir, &["--identity", &org1, "ingest", FIXTURE]);
        assert_eq!(run.code, 0, "{}", run.stderr);
        // the same records again: fresh transaction ids, so they commit as updates
        assert_eq!(run.json()["committed"], 9);
        assert_eq!(run.json()["height"], expected);
    }
    let chains: Vec<Vec<u8>> = ["peer0@Org1", "peer1@Org1", "peer0@Org2", "peer1@Org2"]
        .iter()
        .map(|p| fs::read(dir.join("peers").join(p).join("chain.bin")).unwrap())
        .collect();
    assert!(chains.windows(2).all(|w| w[0] == w[1]));
    let org2_private = fs::read_to_string(dir.join("peers/peer0@Org2/private.jsonl")).unwrap();
    assert!(org2_private.is_empty());
    let org1_private = fs::read_to_string(dir.join("peers/peer0@Org1/private.jsonl")).unwrap();
    assert_eq!(org1_private.lines().count(), 9);

    let run = pdnsctl(&dir, &["--identity", &org1, "query", "--selector", "{}"]);
    assert_eq!(run.json().as_array().unwrap().len(), 9);
}

#[test]
fn crash_recover_scenario_shows_gossip_catch_up() {
    let (_tmp, dir) = initialized();
    let script = dir.with_extension("scenario");
    fs::write(
        &script,
        "# peer0@Org2 misses three blocks\ncrash peer0@Org2\nstore 2\nstore 2\nstore 2\nrecover peer0@Org2\nstore 1\n",
    )
    .unwrap();
    let run = pdnsctl(
        &dir,
        &["--identity", &cert(&dir, "Org1", "client"), "scenario", "--script", script.to_str().unwrap()],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    let summary = run.json();
    assert_eq!(summary["height"], 4);
    assert_eq!(summary["converged"], true);
    assert!(summary["gossip_commits"].as_u64().unwrap() >= 3);

    let transcript = fs::read_to_string(dir.join("transcript.jsonl")).unwrap();
    let events: Vec<Value> = transcript.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let mut gossiped: Vec<u64> = events
        .iter()
        .filter(|e| e["event"] == "committed" && e["peer"] == "peer0@Org2" && e["via"] == "gossip")
        .map(|e| e["height"].as_u64().unwrap())
        .collect();
    gossiped.sort_unstable();
    assert_eq!(&gossiped[..3], [1, 2, 3]);
    assert!(events.iter().any(|e| e["event"] == "fault" && e["fault"] == "crash"));

    let chains: Vec<Vec<u8>> = ["peer0@Org1", "peer0@Org2"]
        .iter()
        .map(|p| fs::read(dir.join("peers").join(p).join("chain.bin")).unwrap())
        .collect();
    assert_eq!(chains[0], chains[1]);
}

#[test]
fn empty_scenario_writes_an_empty_transcript() {
    let (_tmp, dir) = initialized();
    let script = dir.with_extension("empty");
    fs::write(&script, "").unwrap();
    let run = pdnsctl(&dir, &["scenario", "--script", script.to_str().unwrap()]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.json()["transcript_lines"], 0);
    assert_eq!(fs::read_to_string(dir.join("transcript.jsonl")).unwrap(), "");
}

#[test]
fn script_errors_name_the_line() {
    let (_tmp, dir) = initialized();
    let script = dir.with_extension("bad");
    fs::write(&script, "crash peer0@Org1\n\nteleport peer0@Org1\n").unwrap();
    let run = pdnsctl(&dir, &["scenario", "--script", script.to_str().unwrap()]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("ScriptError at line 3"), "{}", run.stderr);

    fs::write(&script, "store 1\n").unwrap();
    let run = pdnsctl(
        &dir,
        &["--identity", &cert(&dir, "Org2", "client"), "scenario", "--script", script.to_str().unwrap()],
    );
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("line 1"), "{}", run.stderr);
}

#[test]
fn bench_emits_a_csv_row() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("bench");
    let run = pdnsctl(
        &dir,
        &["bench", "--n", "1000", "--system", "ledger", "--op", "read", "--trials", "5", "--seed", "4"],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    let lines: Vec<&str> = run.stdout.lines().collect();
    assert_eq!(lines[0], pdns_core::bench::CSV_HEADER);
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("ledger,read,1000,"), "{}", lines[1]);
    assert_eq!(fs::read_to_string(dir.join("bench.csv")).unwrap(), run.stdout);

    let table = pdnsctl(&dir, &["--human", "bench", "--n", "10,100", "--system", "baseline", "--trials", "3"]);
    assert_eq!(table.code, 0, "{}", table.stderr);
    assert!(table.stdout.lines().filter(|l| l.starts_with("measured")).count() == 4);
    assert!(table.stdout.contains("reported"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("none");
    assert_eq!(pdnsctl(&dir, &["query", "--selector", "{}"]).code, 2);
    assert_eq!(pdnsctl(&dir, &["frobnicate"]).code, 2);
    assert_eq!(pdnsctl(&dir, &["bench", "--n", "10", "--system", "oracle"]).code, 2);
    let (_tmp, dir) = initialized();
    let run = pdnsctl(&dir, &["query", "--selector", "{}"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("--identity"));

    let no_dir = Command::new(env!("CARGO_BIN_EXE_pdnsctl"))
        .args(["init"])
        .env_remove("PRESERVE_DATA_DIR")
        .output()
        .unwrap();
    assert_eq!(no_dir.status.code(), Some(2));
}

#[test]
fn data_dir_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_pdnsctl"))
        .args(["init", "--seed", "2"])
        .env("PRESERVE_DATA_DIR", &dir)
        .output()
        .unwrap();
    let run = finish(out);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(dir.join("network.toml").is_file());
    let run = pdnsctl_env(&dir, &["--identity", &cert(&dir, "Org1", "client"), "query", "--selector", "{}"], &[]);
    assert_eq!(run.code, 0);
    assert_eq!(run.json(), Value::Array(vec![]));
}
