//! End-to-end runs of the installed binary: encode/aggregate round
//! trips, the simulate pipeline, and the exit-code contract.

use std::path::PathBuf;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_privseed");

fn tmp(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn params_reports_the_chosen_field_and_sizes() {
    let out = run(&["params", "--k", "10", "--eps", "1.0986122886681098"]);
    let v = stdout_json(&out);
    assert_eq!(v["modulus"], 307);
    assert_eq!(v["threshold"], 77);
    assert_eq!(v["message_bits"], 18);
    assert_eq!(v["bytes_per_message"], 3);
    assert!(v["realized_eps"].as_f64().unwrap() <= 1.0986122886681098);

    // An explicit modulus with e^eps + 1 dividing p gives alpha0 exactly.
    let out = run(&["params", "--k", "4", "--eps", "0.4054651081081644", "--modulus", "5"]);
    let v = stdout_json(&out);
    assert_eq!(v["threshold"], 2);
    assert_eq!(v["alpha0"], 0.4);
}

#[test]
fn freq_encode_aggregate_round_trip_is_deterministic() {
    let input = tmp("freq_input.txt");
    std::fs::write(&input, "1\n2\n1\n3\n4\n1\n").unwrap();
    let out_a = tmp("freq_a.bin");
    let out_b = tmp("freq_b.bin");
    for out in [&out_a, &out_b] {
        let res = run(&[
            "freq", "encode",
            "--input", input.to_str().unwrap(),
            "--output", out.to_str().unwrap(),
            "--k", "4",
            "--eps", "1.0",
        ]);
        assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    }
    // Same master seed, bit-identical report files.
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());

    let v = stdout_json(&run(&["freq", "aggregate", "--input", out_a.to_str().unwrap()]));
    assert_eq!(v["k"], 4);
    assert_eq!(v["n"], 6);
    assert_eq!(v["estimates"].as_array().unwrap().len(), 4);
}

#[test]
fn mean_encode_aggregate_round_trip_across_schemes() {
    let input = tmp("mean_input.txt");
    std::fs::write(&input, "1,0,0\n0,1,0\n0,0,1\n0.6,0.8,0\n").unwrap();
    for scheme in ["priv-hs", "priv-unit", "priv-unit-compressed"] {
        let output = tmp(&format!("mean_{scheme}.bin"));
        let res = run(&[
            "mean", "encode",
            "--input", input.to_str().unwrap(),
            "--output", output.to_str().unwrap(),
            "--eps", "2",
            "--scheme", scheme,
            "--theta", "0.5",
        ]);
        assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
        let v = stdout_json(&run(&["mean", "aggregate", "--input", output.to_str().unwrap()]));
        assert_eq!(v["scheme"], scheme);
        assert_eq!(v["d"], 3);
        assert_eq!(v["n"], 4);
        assert_eq!(v["mean"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn simulate_streams_csv_and_honors_the_out_dir_env() {
    let config = tmp("sim.conf");
    std::fs::write(&config, "task = freq\nscheme = pi-rappor\nk = 5\nn = 60\neps = 1\ntrials = 2\n")
        .unwrap();
    let out = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("scheme,eps,n,k_or_d,trial,sq_l2_error"));
    assert_eq!(lines.count(), 2);

    // With the env var set, results land in that directory instead.
    let dir = tmp("sim_out");
    let out = Command::new(BIN)
        .args(["simulate", "--config", config.to_str().unwrap()])
        .env("PRIVSEED_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["results"][0]["trials"], 2);
    assert_eq!(summary["results"][0]["scheme"], "pi-rappor");
}

#[test]
fn exit_codes_separate_config_errors_from_io_errors() {
    // Unknown config key: 2.
    let config = tmp("bad.conf");
    std::fs::write(&config, "task = freq\nscheme = pi-rappor\nk = 5\nn = 10\neps = 1\nbogus = 7\n")
        .unwrap();
    let out = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // Missing input file: 3.
    let out = run(&["freq", "aggregate", "--input", tmp("missing.bin").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    // Bad flag values: clap's usage error, also 2.
    let out = run(&["params", "--k", "10", "--eps", "1", "--variant", "sideways"]);
    assert_eq!(out.status.code(), Some(2));

    // Encoding an out-of-range index: 2.
    let input = tmp("oob.txt");
    std::fs::write(&input, "9\n").unwrap();
    let out = run(&[
        "freq", "encode",
        "--input", input.to_str().unwrap(),
        "--output", tmp("oob.bin").to_str().unwrap(),
        "--k", "4",
        "--eps", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
