use std::path::Path;
use std::process::{Command, Output};

use reluprop::format;
use reluprop::{BitVector, Network};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reluprop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    serde_json::from_str(text.lines().next().unwrap()).unwrap()
}

#[test]
fn gen_random_is_valid_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = run(&["gen", "random", "--n", "8", "--m", "8", "--seed", "1", "--out", arg(p)]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let Network::Shl(net) = format::load(&a).unwrap() else { panic!("expected shl") };
    assert_eq!((net.n(), net.m()), (8, 8));
    assert!(net.a().values().iter().chain(net.w()).all(|v| (-1.0..=1.0).contains(v)));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["generator"]["kind"], "random");
    assert_eq!(meta["seed"], 1);
}

#[test]
fn gen_constructions() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.json");
    assert!(run(&["gen", "vanilla-hard", "--n", "1000", "--eps", "1e-4", "--out", arg(&v)]).status.success());
    let Network::Shl(net) = format::load(&v).unwrap() else { panic!() };
    assert_eq!(net.w().iter().filter(|&&w| w == 1.0).count(), 100);
    assert_eq!(net.w().iter().filter(|&&w| w == -1.0).count(), 200);

    let p = dir.path().join("p.json");
    assert!(run(&["gen", "partition", "--items", "1,2", "--out", arg(&p)]).status.success());
    let Network::Shl(net) = format::load(&p).unwrap() else { panic!() };
    assert_eq!((net.n(), net.m()), (3, 3));

    let n2 = dir.path().join("n2.json");
    assert!(run(&["gen", "n2", "--n", "8", "--k", "2", "--out", arg(&n2)]).status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("n2.json.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["construction"]["gamma"], "1/32");
    assert_eq!(meta["construction"]["partition"].as_array().unwrap().len(), 4);
}

#[test]
fn test_reports() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.json");
    let ones = dir.path().join("ones.json");
    run(&["gen", "all-zero", "--n", "16", "--m", "16", "--out", arg(&zero)]);
    run(&["gen", "all-ones", "--n", "16", "--m", "16", "--out", arg(&ones)]);

    let out = run(&["test", "all-zero", arg(&zero), "--scale", "1e-6"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["decision"], "accept");
    assert!(v["witness"].is_null());

    let out = run(&["test", "one-sided-zero", arg(&ones), "--seed", "5"]);
    let v = json(&out);
    assert_eq!(v["decision"], "reject");
    let x: BitVector = v["witness"].as_str().unwrap().parse().unwrap();
    let net = format::load(&ones).unwrap();
    assert!(net.eval_bits(&x).unwrap().get(0));

    let again = run(&["test", "one-sided-zero", arg(&ones), "--seed", "5"]);
    assert_eq!(out.stdout, again.stdout);

    let many = run(&["test", "all-zero", arg(&zero), "--scale", "1e-6", "--trials", "3"]);
    assert_eq!(String::from_utf8(many.stdout).unwrap().lines().count(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("r.json");
    run(&["gen", "random", "--n", "40", "--m", "40", "--out", arg(&net)]);
    assert_eq!(run(&["test", "all-zero", arg(&net), "--eps", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["test", "no-such-tester", arg(&net)]).status.code(), Some(2));
    assert_eq!(run(&["gen", "vanilla-hard", "--n", "1000", "--eps", "0.3", "--out", arg(&net)]).status.code(), Some(2));
    assert_eq!(
        run(&["test", "one-sided-zero", arg(&net), "--enum-cap", "10"]).status.code(),
        Some(3)
    );
    assert_eq!(run(&["test", "all-zero", arg(&dir.path().join("missing.json"))]).status.code(), Some(1));
}

#[test]
fn experiment_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"seed": 9, "rows": [
            {"type": "test", "generator": {"kind": "all-zero", "n": 16, "m": 16}, "tester": "all-zero",
             "config": {"constant_scale": 1e-6}, "trials": 20},
            {"type": "game", "n": 100, "k": 2, "budget": 30, "tester": "pair-hunting", "trials": 20}
        ]}"#,
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(run(&["experiment", arg(&spec), "--threads", "1", "--out", arg(&a)]).status.success());
    assert!(run(&["experiment", arg(&spec), "--threads", "4", "--out", arg(&b)]).status.success());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), reluprop::harness::CSV_HEADER);
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[7], "20");
    assert_eq!(text.lines().count(), 1 + 1 + 3);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"rows": [{"type": "test"}]}"#).unwrap();
    assert_eq!(run(&["experiment", arg(&bad)]).status.code(), Some(2));
}
