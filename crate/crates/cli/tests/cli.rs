use std::path::Path;
use std::process::{Command, Output};

use blockclique_core::trace::write_trace;
use blockclique_core::{BlockHeader, BlockId, Digest, NodeId, ProtocolParams, Slot};
use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockclique"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

fn header(slot: Slot, parents: Vec<BlockId>) -> BlockHeader {
    BlockHeader {
        slot,
        creator: NodeId(0),
        parents,
        endorsements: vec![],
        tx_count: 0,
        tx_root: Digest::ZERO,
        size_bits: 1000,
    }
}

fn two_clique_trace() -> (ProtocolParams, Vec<BlockHeader>) {
    let params = ProtocolParams::new(2, 16.0, 1_000_000, 10, 0).unwrap();
    let g0 = BlockHeader::genesis(0).id();
    let g1 = BlockHeader::genesis(1).id();
    let x = header(Slot::new(0, 1), vec![g0, g1]);
    let y = header(Slot::new(1, 1), vec![x.id(), g1]);
    let h0 = header(Slot::new(0, 2), vec![x.id(), y.id()]);
    let h2 = header(Slot::new(0, 3), vec![x.id(), y.id()]);
    (params, vec![x, y, h0, h2])
}

fn write_file(dir: &Path, name: &str, params: Option<&ProtocolParams>, hs: &[BlockHeader]) -> String {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    write_trace(&mut f, params, hs).unwrap();
    path.to_str().unwrap().to_string()
}

fn lines(o: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn attack_point_and_threshold() {
    let o = bin(&["attack", "--beta", "0.45", "--mu", "0.01", "--F", "64", "--E", "0"]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    let p = v["p_success"].as_f64().unwrap();
    assert!(p > 0.5e-6 && p < 2e-6);
    for key in ["log10_p", "mean_slots", "std_slots", "tail_bounds", "beta_star"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let o = bin(&["attack", "--threshold", "--mu", "0.01"]);
    let b = stdout_json(&o)["beta_star"].as_f64().unwrap();
    assert_eq!(format!("{b:.3}"), "0.497");
}

#[test]
fn attack_domain_errors_exit_2() {
    assert_eq!(bin(&["attack", "--closed-form", "--E", "2"]).status.code(), Some(2));
    assert_eq!(bin(&["attack", "--beta", "1.5"]).status.code(), Some(2));
    assert_eq!(bin(&["attack", "--start", "0"]).status.code(), Some(2));
    assert_eq!(bin(&["attack", "--sweep", "mu=0:1:0.1"]).status.code(), Some(2));
}

#[test]
fn attack_sweep_csv() {
    let o = bin(&["attack", "--sweep", "beta=0.05:0.45:0.05", "--F", "16", "--format", "csv"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 10);
    assert!(rows[0].starts_with("beta,mu,finality"));
    assert!(rows[3].starts_with("0.15,"));
}

#[test]
fn delay_violation_is_flagged() {
    let o = bin(&["attack", "--beta", "0.3", "--F", "8", "--t0", "16", "--delta", "9"]);
    assert_eq!(stdout_json(&o)["delay_assumption_violated"], Value::Bool(true));
}

#[test]
fn toy_simulation_writes_stable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = bin(&[
            "simulate", "--override", "N=8", "T=2", "t0=4", "S_B=25000", "F=3", "duration=200",
            "--seed", "11", "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout_json(&o)["stale_rate"], 0);
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "metrics.json"), read(&b, "metrics.json"));
    assert_eq!(read(&a, "blocks.csv"), read(&b, "blocks.csv"));
    let metrics: Value = serde_json::from_slice(&read(&a, "metrics.json")).unwrap();
    assert_eq!(metrics["manifest"], "manifest.json");
    let manifest: Value = serde_json::from_slice(&read(&a, "manifest.json")).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["node_count"], 8);
    assert_eq!(manifest["outputs"][1], "blocks.csv");
    // Keys are sorted.
    let text = String::from_utf8(read(&a, "metrics.json")).unwrap();
    let mut keys: Vec<&str> = metrics.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    keys.sort();
    let positions: Vec<usize> = keys.iter().map(|k| text.find(&format!("\"{k}\":")).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn canned_toy_config_runs() {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/toy.json");
    let o = bin(&["simulate", "--config", cfg]);
    assert!(o.status.success());
    let m = stdout_json(&o);
    assert_eq!(m["stale_rate"], 0);
    assert_eq!(m["throughput"], m["ceiling"]);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{ not json").unwrap();
    let o = bin(&["simulate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert_eq!(bin(&["simulate", "--override", "N=1"]).status.code(), Some(2));
    assert_eq!(bin(&["simulate", "--override", "bogus=1"]).status.code(), Some(2));
    assert_eq!(bin(&["simulate", "--override", "T=3"]).status.code(), Some(2));
}

#[test]
fn replay_reports_two_cliques() {
    let dir = tempfile::tempdir().unwrap();
    let (params, hs) = two_clique_trace();
    let path = write_file(dir.path(), "t.jsonl", Some(&params), &hs);
    let o = bin(&["replay", &path]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ls = lines(&o);
    assert_eq!(ls.len(), 2 + 4 + 1);
    let summary = &ls.last().unwrap()["summary"];
    assert_eq!(summary["cliques"], 2);
    assert_eq!(summary["blockclique"].as_array().unwrap().len(), 5);
    assert_eq!(ls[4]["cliques"], 1);
    assert_eq!(ls[2]["cliques"], 2);
    // Deterministic output.
    assert_eq!(o.stdout, bin(&["replay", &path]).stdout);
}

#[test]
fn replay_clique_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let (params, hs) = two_clique_trace();
    let path = write_file(dir.path(), "t.jsonl", Some(&params), &hs);
    assert_eq!(bin(&["replay", &path, "--clique-cap", "1"]).status.code(), Some(3));
}

#[test]
fn replay_empty_and_unresolved() {
    let dir = tempfile::tempdir().unwrap();
    let params = ProtocolParams::new(2, 16.0, 1_000_000, 10, 0).unwrap();
    let empty = write_file(dir.path(), "e.jsonl", Some(&params), &[]);
    let ls = lines(&bin(&["replay", &empty]));
    assert_eq!(ls.len(), 3);
    assert_eq!(ls[2]["summary"]["blocks"], 2);

    let g1 = BlockHeader::genesis(1).id();
    let orphan = header(Slot::new(0, 2), vec![Digest([9; 32]), g1]);
    let path = write_file(dir.path(), "o.jsonl", Some(&params), &[orphan]);
    let o = bin(&["replay", &path]);
    assert!(o.status.success());
    let ls = lines(&o);
    assert_eq!(ls[2]["status"], "unresolved");
    assert_eq!(ls[3]["summary"]["unresolved"], 1);
}

#[test]
fn replay_structural_violation_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let params = ProtocolParams::new(2, 16.0, 1_000_000, 10, 0).unwrap();
    let g0 = BlockHeader::genesis(0).id();
    let g1 = BlockHeader::genesis(1).id();
    // Parent listed for thread 1 belongs to thread 0.
    let bad = header(Slot::new(0, 1), vec![g0, g0]);
    let good = header(Slot::new(1, 1), vec![g0, g1]);
    let path = write_file(dir.path(), "s.jsonl", Some(&params), &[bad, good]);
    let o = bin(&["replay", &path]);
    assert_eq!(o.status.code(), Some(4));
    let ls = lines(&o);
    assert_eq!(ls[2]["status"], "invalid");
    assert_eq!(ls[3]["status"], "active");
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid"));
}

#[test]
fn replay_malformed_trace_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.jsonl");
    std::fs::write(&p, "{\"slot\": 3}\n").unwrap();
    assert_eq!(bin(&["replay", p.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(bin(&["replay", "/nonexistent/trace"]).status.code(), Some(2));
}

#[test]
fn schedule_is_reproducible() {
    let args = ["schedule", "--seed", "3", "--nodes", "50", "--T", "4", "--to", "5", "--E", "2"];
    let a = bin(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, bin(&args).stdout);
    let ls = lines(&a);
    assert_eq!(ls.len(), 4 * 4 * 3);
    assert_eq!(ls[0]["role"], "block");
    assert_eq!(ls[1]["role"], "endorsement");
    assert_eq!(bin(&["schedule", "--nodes", "5", "--T", "3", "--to", "2"]).status.code(), Some(2));
}
