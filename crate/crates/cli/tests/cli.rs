use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scansat"));
    for (k, _) in std::env::vars() {
        if k.starts_with("SCANSAT_") {
            c.env_remove(k);
        }
    }
    c
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("scansat-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn gen(dir: &Path, cfg: &Path, out: &str) -> PathBuf {
    let o = dir.join(out);
    let r = run(bin().args(["gen", "--config"]).arg(cfg).arg("--out").arg(&o));
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    o
}

fn attack(o: &Path, extra: &[&str]) -> Output {
    run(bin()
        .arg("attack")
        .arg("--design")
        .arg(o.join("design.json"))
        .arg("--secret")
        .arg(o.join("golden.json"))
        .arg("--out")
        .arg(o)
        .args(extra))
}

const STATIC: &str = r#"{ "circuit": "s386-scale", "chains": 2, "static_bits": 4, "seed": 9 }"#;

#[test]
fn gen_writes_all_files_deterministically() {
    let d = scratch("gen");
    let cfg = write_config(&d, "c.json", STATIC);
    let a = gen(&d, &cfg, "a");
    let b = gen(&d, &cfg, "b");
    for f in ["locked.bench", "scan_inserted.bench", "design.json", "golden.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let golden: serde_json::Value = serde_json::from_slice(&fs::read(a.join("golden.json")).unwrap()).unwrap();
    assert_eq!(golden["static_key"].as_array().unwrap().len(), 4);
    let design = fs::read_to_string(a.join("design.json")).unwrap();
    assert!(!design.contains("static_key"));
}

#[test]
fn seed_flag_and_env_override_config() {
    let d = scratch("seed");
    let cfg = write_config(&d, "c.json", STATIC);
    let base = gen(&d, &cfg, "base");
    let flag = d.join("flag");
    run(bin().args(["gen", "--seed", "77", "--config"]).arg(&cfg).arg("--out").arg(&flag));
    let env = d.join("env");
    run(bin().env("SCANSAT_SEED", "77").env("SCANSAT_CONFIG", &cfg).env("SCANSAT_OUT", &env).arg("gen"));
    let read = |p: &Path| fs::read(p.join("design.json")).unwrap();
    assert_eq!(read(&flag), read(&env));
    assert_ne!(read(&flag), read(&base));
}

#[test]
fn ratio_not_dividing_chains_is_a_config_error() {
    let d = scratch("ratio");
    let cfg = write_config(&d, "c.json", r#"{ "circuit": "s386-scale", "chains": 3, "ratio": 2, "static_bits": 2 }"#);
    let r = run(bin().args(["gen", "--config"]).arg(&cfg).arg("--out").arg(d.join("o")));
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("must divide"));
}

#[test]
fn unknown_config_field_is_a_config_error() {
    let d = scratch("unknown");
    let cfg = write_config(&d, "c.json", r#"{ "circuit": "s27", "keysize": 3 }"#);
    let r = run(bin().args(["gen", "--config"]).arg(&cfg).arg("--out").arg(d.join("o")));
    assert_eq!(r.status.code(), Some(3));
}

fn strip_time(v: &mut serde_json::Value) {
    v.as_object_mut().unwrap().remove("time_s");
}

#[test]
fn static_attack_succeeds_and_is_reproducible() {
    let d = scratch("attack");
    let cfg = write_config(&d, "c.json", STATIC);
    let o = gen(&d, &cfg, "o");
    let read = || -> serde_json::Value { serde_json::from_slice(&fs::read(o.join("result.json")).unwrap()).unwrap() };
    assert_eq!(attack(&o, &["--transcript", "--dump-cnf"]).status.code(), Some(0));
    let mut first = read();
    assert_eq!(attack(&o, &[]).status.code(), Some(0));
    let mut second = read();
    strip_time(&mut first);
    strip_time(&mut second);
    assert_eq!(first, second);
    assert_eq!(first["success"], true);
    let csv = fs::read_to_string(o.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("circuit,mode,ratio,key_bits,outcome,success,dips,iterations,time_s"));
    let transcript = fs::read_to_string(o.join("transcript.jsonl")).unwrap();
    for line in transcript.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(rec["captures"].is_u64() && rec["a"].is_string());
    }
    let cnf = fs::read_to_string(o.join("final.cnf")).unwrap();
    assert!(cnf.starts_with("p cnf "));
}

#[test]
fn naive_attack_on_obfuscated_scan_fails_cleanly() {
    let d = scratch("naive");
    let cfg = write_config(
        &d,
        "c.json",
        r#"{ "circuit": "s27", "chains": 1, "stitch": "declaration", "static_bits": 2, "rll_bits": 3, "seed": 5 }"#,
    );
    let o = gen(&d, &cfg, "o");
    let r = attack(&o, &["--mode", "naive"]);
    assert_eq!(r.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(o.join("result.json")).unwrap()).unwrap();
    assert_eq!(v["unsat"], true);
    assert_eq!(attack(&o, &["--mode", "combined"]).status.code(), Some(0));
}

#[test]
fn mode_mismatch_is_a_config_error() {
    let d = scratch("mismatch");
    let cfg = write_config(&d, "c.json", STATIC);
    let o = gen(&d, &cfg, "o");
    assert_eq!(attack(&o, &["--mode", "scramble"]).status.code(), Some(3));
}

#[test]
fn dynamic_attack_detects_p_when_omitted() {
    let d = scratch("dynamic");
    let cfg = write_config(
        &d,
        "c.json",
        r#"{ "circuit": "synthetic:6,5,12,100", "chains": 2, "dos": { "p": 2, "alpha": 0.5 }, "seed": 4 }"#,
    );
    let o = gen(&d, &cfg, "o");
    assert_eq!(attack(&o, &[]).status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(o.join("result.json")).unwrap()).unwrap();
    assert_eq!(v["detected_p"], 2);
}

#[test]
fn expired_timeout_exits_4() {
    let d = scratch("timeout");
    let cfg = write_config(
        &d,
        "c.json",
        r#"{ "circuit": "synthetic:12,10,48,500", "chains": 8, "ratio": 4, "static_bits": 32, "seed": 1 }"#,
    );
    let o = gen(&d, &cfg, "o");
    let r = attack(&o, &["--timeout", "0.000001"]);
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn verify_reports_pass_fail_and_bitwise_note() {
    let d = scratch("verify");
    let cfg = write_config(&d, "c.json", STATIC);
    let o = gen(&d, &cfg, "o");
    let verify = |rec: &Path| {
        run(bin()
            .arg("verify")
            .arg("--design")
            .arg(o.join("design.json"))
            .arg("--secret")
            .arg(o.join("golden.json"))
            .arg("--recovered")
            .arg(rec))
    };
    let same = verify(&o.join("golden.json"));
    assert_eq!(same.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&same.stdout).starts_with("PASS"));

    let mut g: serde_json::Value = serde_json::from_slice(&fs::read(o.join("golden.json")).unwrap()).unwrap();
    let b = g["static_key"][0].as_bool().unwrap();
    g["static_key"][0] = serde_json::Value::Bool(!b);
    let flipped = d.join("flipped.json");
    fs::write(&flipped, g.to_string()).unwrap();
    let r = verify(&flipped);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stdout).starts_with("FAIL"));
}

#[test]
fn verify_notes_duplicate_path_scramble_key() {
    let d = scratch("dup");
    let cfg = write_config(&d, "c.json", r#"{ "circuit": "s386-scale", "chains": 2, "stitch": "declaration", "seed": 2 }"#);
    let o = gen(&d, &cfg, "o");
    let path = o.join("design.json");
    let mut design: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    design["muxes"] = serde_json::json!([
        { "chain": 0, "slice": 1, "sources": [0, 0] },
        { "chain": 1, "slice": 2, "sources": [1, 0] }
    ]);
    fs::write(&path, design.to_string()).unwrap();
    fs::write(o.join("golden.json"), r#"{ "static_key": [], "scramble_key": [false, false], "dos": null, "rll_key": [] }"#).unwrap();
    let alt = d.join("alt.json");
    fs::write(&alt, r#"{ "static_key": [], "scramble_key": [true, false], "dos": null, "rll_key": [] }"#).unwrap();
    let r = run(bin()
        .arg("verify")
        .arg("--design")
        .arg(&path)
        .arg("--secret")
        .arg(o.join("golden.json"))
        .arg("--recovered")
        .arg(&alt));
    assert_eq!(r.status.code(), Some(0));
    let out = String::from_utf8_lossy(&r.stdout);
    assert!(out.contains("PASS") && out.contains("NOTE"), "{out}");
}

#[test]
fn empty_suite_gives_empty_table() {
    let d = scratch("empty");
    let cfg = write_config(&d, "suite.json", r#"{ "runs": [] }"#);
    let r = run(bin().args(["bench", "--config"]).arg(&cfg).arg("--out").arg(&d));
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(fs::read_to_string(d.join("results.md")).unwrap().lines().count(), 2);
}

#[test]
fn bench_runs_in_parallel_and_records_failures() {
    let d = scratch("bench");
    let cfg = write_config(
        &d,
        "suite.json",
        r#"{ "trials": 2, "runs": [
            { "circuit": "s27", "chains": 1, "static_bits": 3 },
            { "circuit": "s386-scale", "chains": 2, "ratio": 2, "static_bits": 4 },
            { "circuit": "missing.bench", "chains": 1, "static_bits": 1 }
        ] }"#,
    );
    let r = run(bin().args(["bench", "--jobs", "3", "--config"]).arg(&cfg).arg("--out").arg(&d));
    assert_eq!(r.status.code(), Some(0));
    let csv = fs::read_to_string(d.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines.iter().filter(|l| l.contains(",true,")).count(), 4);
    assert_eq!(lines.iter().filter(|l| l.contains("missing.bench")).count(), 2);
}

#[test]
fn export_cnf_writes_dimacs_and_bench() {
    let d = scratch("export");
    let cfg = write_config(&d, "c.json", STATIC);
    let o = gen(&d, &cfg, "o");
    let r = run(bin().arg("export-cnf").arg("--design").arg(o.join("design.json")).arg("--out").arg(&o));
    assert_eq!(r.status.code(), Some(0));
    let cnf = fs::read_to_string(o.join("model.cnf")).unwrap();
    let header = cnf.lines().find(|l| l.starts_with("p cnf")).unwrap();
    let declared: usize = header.split_whitespace().nth(3).unwrap().parse().unwrap();
    let clauses = cnf.lines().filter(|l| !l.starts_with('c') && !l.starts_with('p')).count();
    assert_eq!(declared, clauses);
    assert!(fs::read_to_string(o.join("model.bench")).unwrap().contains("keyinput"));
}
