use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use vanet_gka::codec::WireMessage;
use vanet_gka::ta::{refresh_vehicle_epoch, TaState};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vanet-gka")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gka_run_prints_one_equal_key_per_member() {
    let o = run(&["gka", "run", "--n", "3", "--seed", "7"]);
    assert!(o.status.success());
    let keys: Vec<String> = stdout(&o)
        .lines()
        .filter(|l| l.starts_with("member "))
        .map(|l| l.split("sk=").nth(1).unwrap().to_string())
        .collect();
    assert_eq!(keys.len(), 3);
    assert!(keys.iter().all(|k| *k == keys[0]));
    // Same seed, same key.
    assert_eq!(stdout(&run(&["gka", "run", "--n", "3", "--seed", "7"])), stdout(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["simulate", "--config", "/nonexistent/cfg.json", "--out", "/tmp/x.csv"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["gka", "run", "--n", "0"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"bandwidth_mbps": -1}"#).unwrap();
    let o = run(&["simulate", "--config", p(&cfg), "--out", p(&dir.path().join("o.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bandwidth_mbps"));
}

#[test]
fn simulate_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sim_time_s": 4}"#).unwrap();
    let (out, report) = (dir.path().join("delay.csv"), dir.path().join("report.json"));
    let o = run(&[
        "simulate",
        "--config",
        p(&cfg),
        "--out",
        p(&out),
        "--densities",
        "5,10",
        "--report",
        p(&report),
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines, ["n,delay_ms,overhead_bytes", lines[1], lines[2]]);
    assert!(lines[1].starts_with("5,") && lines[2].starts_with("10,"));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 2);
    assert_eq!(json[0]["rng_seed"], 3);
}

#[test]
fn cost_table_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cost.csv");
    let o = run(&["cost", "table", "--n-max", "100", "--step", "10", "--out", p(&out)]);
    assert!(o.status.success());
    let delays = std::fs::read_to_string(&out).unwrap();
    let overheads = std::fs::read_to_string(dir.path().join("cost_overhead.csv")).unwrap();
    // n = 1, 10, 20, ..., 100 in long format.
    assert_eq!(delays.lines().count(), 1 + 11 * 10);
    assert_eq!(overheads.lines().count(), 1 + 11 * 4);
    assert!(overheads.lines().any(|l| l == "100,ours,5800"));
    assert!(delays.lines().any(|l| l == "100,ours,rsu,1140.0"));
}

#[test]
fn codec_dump_decodes_hex_and_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut ta = TaState::init(vanet_gka::params::Profile::Desk64, &mut rng).unwrap();
    let (_, beacon) = ta
        .register_rsu(b"RSU-A", vanet_gka::ta::Location::from_meters(10.0, 0.0), &mut rng)
        .unwrap();
    let bytes = WireMessage::Beacon(beacon).encode(ta.group());
    let hex_file = dir.path().join("beacon.hex");
    std::fs::write(&hex_file, hex::encode(&bytes)).unwrap();
    let bin_file = dir.path().join("beacon.bin");
    std::fs::write(&bin_file, &bytes).unwrap();
    let a = run(&["codec", "dump", p(&hex_file)]);
    let b = run(&["codec", "dump", p(&bin_file)]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert!(!stdout(&a).is_empty());
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, [0xffu8, 1, 2]).unwrap();
    assert_eq!(run(&["codec", "dump", p(&junk)]).status.code(), Some(1));
}

#[test]
fn registry_round_trip_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let reg = dir.path().join("reg");
    assert!(run(&["ta", "init", "--dir", p(&reg)]).status.success());
    assert!(run(&["ta", "register-rsu", "--dir", p(&reg), "--tid", "RSU-1", "--x", "250"]).status.success());
    assert!(run(&["ta", "register-vehicle", "--dir", p(&reg), "--tid", "CAR-9"]).status.success());

    let (ta, ks) = TaState::load(&reg).unwrap();
    let creds = ks.credentials.iter().find(|c| c.tid == b"CAR-9").unwrap();
    let ep = refresh_vehicle_epoch(creds, ta.params(), &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
    let pk = hex::encode(ta.group().elem_bytes(&ep.pk));
    let o = run(&["ta", "trace", "--dir", p(&reg), "--fid", &ep.fid.to_string(), "--pk", &pk]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "CAR-9");

    // A pseudonym under the wrong key does not trace.
    let other = refresh_vehicle_epoch(creds, ta.params(), &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
    let o = run(&["ta", "trace", "--dir", p(&reg), "--fid", &ep.fid.to_string(), "--pk", &hex::encode(ta.group().elem_bytes(&other.pk))]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["ta", "trace", "--dir", p(&reg), "--fid", "abcd", "--pk", &pk]).status.code(), Some(1));
}

#[test]
fn auth_demo_reaches_fast_path() {
    let o = run(&["auth", "demo", "--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("FastPathDone"), "{s}");
    assert!(s.contains("trace -> CAR"), "{s}");
}
