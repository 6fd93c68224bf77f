use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn otlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs a command that must succeed and returns its `results`.
fn results(args: &[&str]) -> Value {
    let out = otlab(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_slice(&out.stdout).expect("stdout is JSON");
    report["results"].clone()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn exit_code(args: &[&str]) -> (i32, Value) {
    let out = otlab(args);
    let body = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().expect("exited"), body)
}

#[test]
fn bundled_data_regenerates_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let r = results(&["gen-data", "--out", out]);
    let files = r["files"].as_array().unwrap();
    assert_eq!(files.len(), 3);
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    for file in files {
        let name = format!("{}.json", file["name"].as_str().unwrap());
        let fresh = std::fs::read(dir.path().join(&name)).unwrap();
        let shipped = std::fs::read(bundled.join(&name)).unwrap();
        assert!(fresh == shipped, "{name} differs from the bundled copy");
    }
}

#[test]
fn report_envelope() {
    let out = otlab(&["bound", "ot-lower"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["command"][0], "bound");
    assert_eq!(report["seed"], 0);
    assert!(report["versions"]["otlab-core"].is_string());
    assert!(report["meta"]["wall_clock_seconds"].is_number());
    let out = otlab(&["bound", "ot-lower", "--no-meta", "--seed", "9"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.get("meta").is_none());
    assert_eq!(report["seed"], 9);
}

#[test]
fn sampling_is_reproducible_across_thread_counts() {
    let run = |jobs: &str| {
        results(&[
            "simulate",
            "qutrit-ot",
            "--trials",
            "3000",
            "--seed",
            "5",
            "--jobs",
            jobs,
        ])["sampled"]
            .clone()
    };
    let one = run("1");
    assert_eq!(one, run("3"));
    assert_eq!(one["trials"], 3000);
    assert_eq!(one["unexpected"], 0);
    assert_ne!(
        one,
        results(&["simulate", "qutrit-ot", "--trials", "3000", "--seed", "6"])["sampled"]
    );
}

#[test]
fn simulate_qutrit_ot_is_uniform_and_correct() {
    let r = results(&[
        "simulate",
        "qutrit-ot",
        "--trials",
        "4000",
        "--transcripts",
        "2",
    ]);
    let exact = r["exact"]["distribution"].as_array().unwrap();
    assert_eq!(exact.len(), 8);
    assert!(exact
        .iter()
        .all(|e| (f(&e["probability"]) - 0.125).abs() < 1e-12));
    assert!((f(&r["exact"]["summary"]["consistent_probability"]) - 1.0).abs() < 1e-12);
    assert!(f(&r["sampled"]["chi_square"]["p_value"]) > 1e-3);
    let transcripts = r["transcripts"].as_array().unwrap();
    assert_eq!(transcripts.len(), 2);
    assert!(transcripts[0]["transcript"]["steps"][0]["state_after"].is_array());
}

#[test]
fn simulate_spec_file_matches_builtin() {
    let spec = results(&["simulate", "qutrit-commitment-cf", "--trials", "0"]);
    let file = results(&["simulate", "qutrit-commitment-cf.json", "--trials", "0"]);
    // The round form lists every label pair; compare supports.
    let support = |r: &Value| -> Vec<(String, String, f64)> {
        r["exact"]["distribution"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|e| f(&e["probability"]) > 1e-12)
            .map(|e| {
                (
                    e["alice"].to_string(),
                    e["bob"].to_string(),
                    f(&e["probability"]),
                )
            })
            .collect()
    };
    let (a, b) = (support(&spec), support(&file));
    assert_eq!(a.len(), 2);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((&x.0, &x.1), (&y.0, &y.1));
        assert!((x.2 - y.2).abs() < 1e-12);
    }
    assert!(f(&file["exact"]["max_norm_drift"]) < 1e-12);
}

#[test]
fn simulate_fot_reports_runs_and_bounds() {
    let r = results(&[
        "simulate",
        "fot",
        "--n",
        "3",
        "--k",
        "2",
        "--cf",
        "ideal:0.7071067811865476",
        "--trials",
        "2000",
    ]);
    assert_eq!(r["exact"]["distribution"].as_array().unwrap().len(), 24);
    assert_eq!(r["sampled"]["unexpected"], 0);
    assert_eq!(r["example_run"]["b"].as_array().unwrap().len(), 2);
    let b = &r["fot_bounds"];
    assert!(b["above_floor"].as_bool().unwrap());
    assert!((f(&b["bias"]) - 2.0).abs() < 1e-12);

    let r = results(&["simulate", "fot", "--trials", "3", "--transcripts", "1"]);
    assert!(r["transcripts"][0]["run"]["coins"][0]["transcript"]["steps"].is_array());
}

#[test]
fn cheat_qutrit_ot_attacks_meet_their_bounds() {
    for party in ["alice", "bob"] {
        let r = results(&["cheat", "qutrit-ot", "--party", party, "--trials", "4000"]);
        let lower = f(&r["report"]["lower_bound"]["value"]);
        let upper = f(&r["report"]["upper_bound"]["value"]);
        assert!(
            (lower - 0.75).abs() < 1e-12 && (upper - 0.75).abs() < 1e-12,
            "{party}"
        );
        assert!(r["monte_carlo"]["consistent"].as_bool().unwrap());
    }
    let r = results(&[
        "cheat",
        "qutrit-ot",
        "--party",
        "bob",
        "--attack",
        "parity",
        "--trials",
        "500",
    ]);
    assert!((f(&r["report"]["lower_bound"]["value"]) - 1.0).abs() < 1e-12);
    assert_eq!(r["monte_carlo"]["estimate"]["successes"], 500);
}

#[test]
fn cheat_commitment_cf_is_certified() {
    for (party, coin) in [("alice", "0"), ("bob", "1")] {
        let r = results(&[
            "cheat",
            "qutrit-commitment-cf",
            "--party",
            party,
            "--coin",
            coin,
            "--trials",
            "1000",
        ]);
        let ub = &r["report"]["upper_bound"];
        assert_eq!(ub["certificate"]["kind"], "sdp");
        assert!(ub["certificate"]["pass"].as_bool().unwrap());
        let lower = f(&r["report"]["lower_bound"]["value"]);
        assert!((lower - 0.75).abs() < 1e-10 && f(&ub["value"]) >= lower - 1e-9);
    }
    let r = results(&[
        "cheat",
        "qutrit-commitment-cf",
        "--party",
        "bob",
        "--attack",
        "optimal",
        "--oracle",
        "--restarts",
        "3",
    ]);
    assert_eq!(
        r["report"]["lower_bound"]["strategy"],
        "parameterized-unitaries"
    );
    assert!((f(&r["report"]["lower_bound"]["value"]) - 0.75).abs() < 1e-6);
}

#[test]
fn cheat_fot_uses_the_composition_certificate() {
    let r = results(&[
        "cheat",
        "fot",
        "--party",
        "alice",
        "--n",
        "3",
        "--k",
        "2",
        "--cf",
        "ideal:0.8",
        "--trials",
        "4000",
    ]);
    let ub = &r["report"]["upper_bound"];
    assert_eq!(ub["certificate"]["kind"], "composition");
    assert!((f(&ub["value"]) - 0.64 / 3.0).abs() < 1e-12);
    assert!((f(&r["report"]["lower_bound"]["value"]) - f(&ub["value"])).abs() < 1e-12);
    assert!(r["monte_carlo"]["consistent"].as_bool().unwrap());
}

#[test]
fn bound_values() {
    let r = results(&["bound", "f", "--z", "0.75"]);
    assert!((f(&r["bounds"]["f"]["value"]) - f(&r["bounds"]["f"]["bisection"])).abs() < 1e-9);
    let r = results(&["bound", "g", "--x", "0.5"]);
    assert_eq!(f(&r["bounds"]["g"]["value"]), 0.0);
    let r = results(&["bound", "kitaev-product", "--a", "0.75", "--b", "0.75"]);
    assert!(r["bounds"]["kitaev_product"]["check"]["pass"]
        .as_bool()
        .unwrap());
    let r = results(&["bound", "kitaev-product", "--a", "0.6", "--b", "0.6"]);
    assert!(!r["bounds"]["kitaev_product"]["check"]["pass"]
        .as_bool()
        .unwrap());
    let r = results(&["bound", "fot-lower", "--n", "2", "--k", "1"]);
    assert!((f(&r["bounds"]["fot_lower"]["bounds"]["honest_joint"]) - 0.125).abs() < 1e-15);
    let bias = f(&r["bounds"]["fot_lower"]["bounds"]["min_forcing_bias"]);
    assert!((bias - 2f64.sqrt()).abs() < 1e-12);
    let r = results(&["bound", "f", "--z", "0.1875"]);
    assert!((f(&r["bounds"]["f"]["value"]) - 0.75).abs() < 1e-9);
    let r = results(&["bound", "ot-lower"]);
    assert!((f(&r["bounds"]["ot_lower"]["epsilon"]["closed_form"]) - 0.0586).abs() < 5e-5);
    let r = results(&[
        "bound",
        "fot-upper",
        "--n",
        "2",
        "--k",
        "1",
        "--gamma",
        "0.01",
    ]);
    let b = &r["bounds"]["fot_upper"]["bounds"];
    assert!((f(&b["b_bound"]) - 1.01 / 8f64.sqrt()).abs() < 1e-9, "{b}");
}

#[test]
fn sdp_both_parties_with_product_check() {
    let r = results(&["sdp", "qutrit-commitment-cf", "--oracle", "--restarts", "3"]);
    let parties = r["parties"].as_array().unwrap();
    assert_eq!(parties.len(), 2);
    for p in parties {
        assert!(p["certificate"]["pass"].as_bool().unwrap());
        assert!((f(&p["dual_value"]) - 0.75).abs() < 1e-6);
        assert!(p["oracle"]["within_certificate"].as_bool().unwrap());
        assert!(p["sizes"]["unreduced_constraints"].as_u64() >= p["sizes"]["constraints"].as_u64());
    }
    assert_eq!(r["product"]["kind"], "kitaev");
    assert!((f(&r["product"]["check"]["product"]) - 0.5625).abs() < 1e-6);

    let r = results(&[
        "sdp",
        "qutrit-ot",
        "--party",
        "bob",
        "--target",
        "11",
        "--full",
    ]);
    let p = &r["parties"][0];
    assert!((f(&p["primal_value"]) - 0.25).abs() < 1e-6);
    assert!(p["solution"]["dual"].is_array() && p["problem"]["families"].is_array());
}

#[test]
fn csv_and_pretty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let out = otlab(&[
        "bound",
        "fot-lower",
        "--n",
        "3",
        "--k",
        "1",
        "--pretty",
        "--csv",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    serde_json::from_slice::<Value>(&out.stdout).expect("stdout stays JSON");
    let table = String::from_utf8(out.stderr).unwrap();
    assert!(table.contains("bounds.fot_lower.bounds.honest_joint"));
    let mut rows = csv::Reader::from_path(&path).unwrap();
    let rows: Vec<(String, f64)> = rows.deserialize().map(|r| r.unwrap()).collect();
    let joint = rows
        .iter()
        .find(|(p, _)| p == "bounds.fot_lower.bounds.honest_joint")
        .unwrap();
    assert!((joint.1 - 1.0 / 24.0).abs() < 1e-15);
}

#[test]
fn bad_input_exits_2() {
    for args in [
        &["simulate", "/no/such/spec.json"][..],
        &[
            "cheat",
            "qutrit-ot",
            "--party",
            "alice",
            "--attack",
            "wormhole",
        ],
        &["bound", "f"],
        &["bound", "f", "--z", "1.5"],
        &["sdp", "qutrit-ot", "--target", "b={5};xb=0"],
        &["cheat", "fot", "--party", "bob", "--n", "2", "--k", "3"],
    ] {
        let (code, body) = exit_code(args);
        assert_eq!(code, 2, "{args:?}");
        assert_eq!(body["error"]["code"], 2);
    }
    // Argument-parser errors print usage only.
    assert_eq!(exit_code(&["simulate"]).0, 2);
    assert_eq!(exit_code(&["frobnicate"]).0, 2);
}

#[test]
fn invalid_spec_file_exits_2_with_violations() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/announce-coin.json");
    let mut spec: Value = serde_json::from_str(&std::fs::read_to_string(shipped).unwrap()).unwrap();
    // Break unitarity of the first round.
    let u = &mut spec["rounds"][0]["unitary"];
    let first = first_number(u).expect("unitary has entries");
    *first = Value::from(first.as_f64().unwrap() + 0.5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, spec.to_string()).unwrap();
    let (code, body) = exit_code(&["sdp", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    let kinds: Vec<&str> = body["error"]["detail"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["kind"].as_str().unwrap())
        .collect();
    assert!(kinds.contains(&"unitarity"), "{kinds:?}");
}

fn first_number(v: &mut Value) -> Option<&mut Value> {
    match v {
        Value::Number(_) => Some(v),
        Value::Array(items) => items.iter_mut().find_map(first_number),
        Value::Object(map) => map.values_mut().find_map(first_number),
        _ => None,
    }
}

#[test]
fn solver_failure_exits_3_with_residuals() {
    let (code, body) = exit_code(&["sdp", "qutrit-commitment-cf", "--max-iterations", "2"]);
    assert_eq!(code, 3);
    let d = &body["error"]["detail"];
    assert_eq!(d["iterations"], 2);
    assert!(d["residuals"]["gap"].is_number());
}
