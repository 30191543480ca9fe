//! wasm-bindgen entry points for the static demo page in `www/`.
//!
//! Every export takes plain numbers/strings and returns a JSON string;
//! errors come back as `{"error": "..."}`.

use scansat::attack::{dynamic_attack, run_attack, AttackConfig, AttackMode, AttackResult};
use scansat::circuits::{s27, synthetic, SynthParams};
use scansat::defense::{Boundary, DosSpec, GoldenSecret, Lfsr, ObfuscatedDesign};
use scansat::netlist::{GateKind, Netlist, NetlistBuilder};
use scansat::oracle::{bits_from_string, bits_to_string};
use scansat::scanarch::{build_scan, StitchPolicy};
use scansat::solver::SolverSession;
use scansat::Oracle;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn respond<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}")),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| format!("`{t}` is not a slice index")))
        .collect()
}

/// `cells` flip-flops that either capture `pi_i` (sel = 0) or hold (sel = 1).
fn hold_circuit(cells: usize) -> Netlist {
    let mut b = NetlistBuilder::new();
    let sel = b.input("sel");
    let pis: Vec<_> = (0..cells).map(|i| b.input(&format!("pi{i}"))).collect();
    for (i, &pi) in pis.iter().enumerate() {
        let q = b.net(&format!("q{i}"));
        let d = b.gate(GateKind::Mux2, &[sel, pi, q], &format!("d{i}"));
        b.dff(&format!("q{i}"), d);
        b.output(d);
    }
    b.build().expect("hold circuit is well formed")
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Inversions {
    pub stimulus: Vec<usize>,
    pub response: Vec<usize>,
    pub flush_parity: bool,
}

/// Which cells of a single chain see inverted stimuli and responses,
/// measured through the chip.
pub fn inversions(cells: usize, boundaries: &str, key: &str) -> Result<Inversions, String> {
    if !(1..=64).contains(&cells) {
        return Err("cells must be between 1 and 64".into());
    }
    let slices = parse_list(boundaries)?;
    let key = bits_from_string(key.trim()).ok_or("key must be a 0/1 string")?;
    if key.len() != slices.len() {
        return Err(format!("{} boundaries but {} key bits", slices.len(), key.len()));
    }
    let n = hold_circuit(cells);
    let arch = build_scan(&n, 1, StitchPolicy::DeclarationOrder).map_err(|e| e.to_string())?;
    let sites: Vec<Boundary> = slices.iter().map(|&s| Boundary::new(0, s)).collect();
    let d = ObfuscatedDesign::new(n, arch).insert_static_at(&sites).map_err(|e| e.to_string())?;
    let mut o = Oracle::new(d, GoldenSecret { static_key: key, ..Default::default() }).map_err(|e| e.to_string())?;
    let zero = vec![false; cells];
    let mut pi = vec![false; cells + 1];
    let (r, _) = o.scan_transaction(&zero, &pi).map_err(|e| e.to_string())?;
    pi[0] = true;
    let (lr, _) = o.scan_transaction(&zero, &pi).map_err(|e| e.to_string())?;
    let flush = o.flush(&zero).map_err(|e| e.to_string())?;
    let set = |v: Vec<bool>| v.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    Ok(Inversions {
        stimulus: set(lr.iter().zip(&r).map(|(a, b)| a ^ b).collect()),
        response: set(r),
        flush_parity: flush[0],
    })
}

#[derive(Debug, Serialize)]
pub struct AttackSummary {
    pub circuit: String,
    pub chains: usize,
    pub ratio: usize,
    pub key_bits: usize,
    pub golden: String,
    pub recovered: Option<String>,
    pub outcome: String,
    pub success: bool,
    pub dips: usize,
    pub iterations: usize,
    pub trace: Vec<String>,
    pub time_ms: f64,
}

fn circuit(name: &str, seed: u64) -> Result<Netlist, String> {
    match name {
        "s27" => Ok(s27()),
        "s386-scale" => Ok(synthetic(&SynthParams::s386_scale(), seed)),
        "desk-m" => Ok(synthetic(&SynthParams::new(10, 8, 32, 300), seed)),
        "desk-l" => Ok(synthetic(&SynthParams::new(12, 10, 48, 500), seed)),
        other => Err(format!("unknown circuit `{other}`")),
    }
}

fn summary(name: &str, d: &ObfuscatedDesign, golden: String, bits: usize, r: &AttackResult) -> AttackSummary {
    AttackSummary {
        circuit: name.to_string(),
        chains: d.arch.num_chains(),
        ratio: d.compression.ratio,
        key_bits: bits,
        golden,
        recovered: r.secret.as_ref().map(|s| match &s.dos {
            Some(dos) => bits_to_string(&dos.seed),
            None => bits_to_string(&s.static_key),
        }),
        outcome: format!("{:?}", r.outcome),
        success: r.success,
        dips: r.dips,
        iterations: r.iterations,
        trace: r.resolution_trace.iter().map(|t| AttackResult::render_resolution(t)).collect(),
        time_ms: r.time_s * 1e3,
    }
}

/// Lock `name` with `key_bits` random static key gates and attack it.
pub fn static_attack(name: &str, chains: usize, ratio: usize, key_bits: usize, seed: u64) -> Result<AttackSummary, String> {
    let n = circuit(name, seed)?;
    let arch = build_scan(&n, chains, StitchPolicy::SeededRandom { seed }).map_err(|e| e.to_string())?;
    let d = ObfuscatedDesign::new(n, arch).with_compression(ratio).map_err(|e| e.to_string())?;
    let (d, spec) = d.insert_static(key_bits, seed).map_err(|e| e.to_string())?;
    let golden = GoldenSecret { static_key: spec.key.clone(), ..Default::default() };
    let mut o = Oracle::new(d.clone(), golden).map_err(|e| e.to_string())?;
    let mut s = SolverSession::new();
    let cfg = AttackConfig { seed, ..Default::default() };
    let r = run_attack(&d, &mut o, AttackMode::Static, &cfg, &mut s).map_err(|e| e.to_string())?;
    Ok(summary(name, &d, bits_to_string(&spec.key), key_bits, &r))
}

/// DOS with key width `lambda` (= chain depth), update period 1; shows the
/// per-iteration seed resolution.
pub fn dynamic_trace(lambda: usize, seed_bits: &str, seed: u64) -> Result<AttackSummary, String> {
    if !(2..=24).contains(&lambda) {
        return Err("lambda must be between 2 and 24".into());
    }
    let dseed = bits_from_string(seed_bits.trim()).ok_or("seed must be a 0/1 string")?;
    if dseed.len() != lambda {
        return Err(format!("seed needs {lambda} bits"));
    }
    let n = synthetic(&SynthParams::new(6, 5, 2 * lambda, 40 + 12 * lambda), seed);
    let arch = build_scan(&n, 2, StitchPolicy::DeclarationOrder).map_err(|e| e.to_string())?;
    let d = ObfuscatedDesign::new(n, arch);
    let lfsr = Lfsr::primitive(lambda).map_err(|e| e.to_string())?;
    let spec = DosSpec::derive(&d.arch, lfsr, dseed.clone(), 1, 0.6, u64::MAX, seed).map_err(|e| e.to_string())?;
    let d = d.attach_dos(&spec).map_err(|e| e.to_string())?;
    let mut o = Oracle::new(d.clone(), GoldenSecret { dos: Some(spec.secret()), ..Default::default() })
        .map_err(|e| e.to_string())?;
    let mut s = SolverSession::new();
    let r = dynamic_attack(&d, &mut o, 1, &AttackConfig::default(), &mut s).map_err(|e| e.to_string())?;
    Ok(summary("dos-demo", &d, bits_to_string(&dseed), lambda, &r))
}

#[wasm_bindgen(js_name = inversionPattern)]
pub fn inversion_pattern_js(cells: usize, boundaries: &str, key: &str) -> String {
    respond(inversions(cells, boundaries, key))
}

#[wasm_bindgen(js_name = staticAttack)]
pub fn static_attack_js(circuit: &str, chains: usize, ratio: usize, key_bits: usize, seed: u32) -> String {
    respond(static_attack(circuit, chains, ratio, key_bits, seed as u64))
}

#[wasm_bindgen(js_name = dynamicTrace)]
pub fn dynamic_trace_js(lambda: usize, seed_bits: &str, seed: u32) -> String {
    respond(dynamic_trace(lambda, seed_bits, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig3_sets() {
        let inv = inversions(6, "2,4,5", "111").unwrap();
        assert_eq!(inv.stimulus, vec![2, 3, 5]);
        assert_eq!(inv.response, vec![0, 1, 4]);
        assert!(inv.flush_parity);
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(inversions(6, "2,4", "111").is_err());
        let json = inversion_pattern_js(6, "x", "1");
        assert!(json.contains("error"));
    }

    #[test]
    fn static_attack_recovers_key() {
        let r = static_attack("s386-scale", 2, 1, 4, 3).unwrap();
        assert!(r.success);
        assert_eq!(r.recovered.as_deref(), Some(r.golden.as_str()));
    }

    #[test]
    fn dynamic_trace_ends_with_the_seed() {
        let r = dynamic_trace(5, "00001", 1000).unwrap();
        assert!(r.success);
        assert_eq!(r.trace.last().map(String::as_str), Some("00001"));
    }
}
