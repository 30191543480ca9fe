//! Oracle-guided SAT attacks on scan-locked designs.
//!
//! Everything here talks to the chip through [`Oracle`] transactions only.
//! The solver session is grow-only: constraints learned in one run carry
//! over to the next, which is what the dynamic attack relies on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use web_time::{Duration, Instant};

use crate::cnf::{encode_netlist, xor_gate, ClauseSink, Lit, Signal};
use crate::defense::{DefenseError, GoldenSecret, ObfuscatedDesign};
use crate::model::{KeyGroupKind, LockedModel, ModelKind};
use crate::netlist::NetlistError;
use crate::oracle::{Oracle, OracleError};
use crate::solver::{SolveResult, SolverSession};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Defense(#[from] DefenseError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("model and oracle disagree on {0}")]
    Interface(String),
    #[error("attack mode {mode:?} does not fit this design: {why}")]
    Mode { mode: AttackMode, why: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Static,
    Scramble,
    Dynamic,
    Combined,
    Naive,
}

impl std::str::FromStr for AttackMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "static" => Self::Static,
            "scramble" => Self::Scramble,
            "dynamic" => Self::Dynamic,
            "combined" => Self::Combined,
            "naive" => Self::Naive,
            _ => return Err(format!("unknown attack mode `{s}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// DIP cap for one static run.
    pub max_dips: usize,
    pub max_iterations: usize,
    pub solve_timeout: Option<Duration>,
    pub attack_timeout: Option<Duration>,
    /// Known key-update period; detected when `None`.
    pub p: Option<u64>,
    pub p_probes: usize,
    pub p_max_captures: u64,
    pub verify_trials: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            max_dips: 10_000,
            max_iterations: 256,
            solve_timeout: Some(Duration::from_secs(60)),
            attack_timeout: Some(Duration::from_secs(3600)),
            p: None,
            p_probes: 4,
            p_max_captures: 64,
            verify_trials: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Miter UNSAT (or seed fully resolved) and a key was extracted.
    Converged,
    /// The accumulated constraints admit no key at all.
    KeySpaceEmpty,
    /// DIP or iteration cap reached; constraints are kept in the session.
    Partial,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dip {
    pub a: Vec<bool>,
    pub pi: Vec<bool>,
    pub b: Vec<bool>,
    pub po: Vec<bool>,
    /// DOS key window the transaction fell into (1 for static runs).
    pub window: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub mode: AttackMode,
    pub outcome: Outcome,
    /// Converged and, when checked, functionally verified.
    pub success: bool,
    pub verified: Option<bool>,
    /// UNSAT with an empty key space: the naive attack's signature.
    pub unsat: bool,
    pub key: Option<Vec<bool>>,
    pub secret: Option<GoldenSecret>,
    pub dips: usize,
    pub iterations: usize,
    pub detected_p: Option<u64>,
    /// Seed-bit status after every dynamic iteration.
    pub resolution_trace: Vec<Vec<Option<bool>>>,
    pub dip_log: Vec<Dip>,
    pub time_s: f64,
    pub cnf_vars: u32,
    pub cnf_clauses: u64,
}

impl AttackResult {
    fn new(mode: AttackMode) -> Self {
        Self {
            mode,
            outcome: Outcome::Partial,
            success: false,
            verified: None,
            unsat: false,
            key: None,
            secret: None,
            dips: 0,
            iterations: 0,
            detected_p: None,
            resolution_trace: Vec::new(),
            dip_log: Vec::new(),
            time_s: 0.0,
            cnf_vars: 0,
            cnf_clauses: 0,
        }
    }

    /// Seed bits as `0`, `1` or `-` for unresolved.
    pub fn render_resolution(bits: &[Option<bool>]) -> String {
        bits.iter()
            .map(|b| match b {
                Some(true) => '1',
                Some(false) => '0',
                None => '-',
            })
            .collect()
    }
}

/// Two model copies with shared inputs and independent keys.
struct Miter {
    inputs: Vec<Lit>,
    act: Lit,
}

fn fresh(s: &mut SolverSession, n: usize) -> Vec<Lit> {
    (0..n).map(|_| s.new_lit()).collect()
}

fn sigs(l: &[Lit]) -> Vec<Signal> {
    l.iter().map(|&l| Signal::Lit(l)).collect()
}

fn add_miter(s: &mut SolverSession, m: &LockedModel, k1: &[Lit], k2: &[Lit]) -> Result<Miter, AttackError> {
    let inputs = fresh(s, m.netlist.inputs().len());
    let x = sigs(&inputs);
    let y1 = encode_netlist(s, &m.netlist, &x, &sigs(k1), &[])?;
    let y2 = encode_netlist(s, &m.netlist, &x, &sigs(k2), &[])?;
    let act = s.new_lit();
    let mut clause = vec![!act];
    for &o in m.netlist.outputs() {
        match xor_gate(s, y1[o], y2[o]) {
            Signal::Const(false) => {}
            Signal::Const(true) => unreachable!("copies of one netlist cannot differ constantly"),
            Signal::Lit(d) => clause.push(d),
        }
    }
    s.add_clause(&clause);
    Ok(Miter { inputs, act })
}

/// Constrain `keys` so the model reproduces one oracle observation.
fn constrain(s: &mut SolverSession, m: &LockedModel, keys: &[Lit], ins: &[bool], outs: &[bool]) -> Result<(), AttackError> {
    let x: Vec<Signal> = ins.iter().map(|&b| Signal::Const(b)).collect();
    let y = encode_netlist(s, &m.netlist, &x, &sigs(keys), &[])?;
    for (&o, &want) in m.netlist.outputs().iter().zip(outs) {
        let sig = y[o];
        s.assert_signal(if want { sig } else { !sig });
    }
    Ok(())
}

fn check_interface(m: &LockedModel, o: &Oracle) -> Result<(), AttackError> {
    if m.scan_bits() != o.scan_bits() {
        return Err(AttackError::Interface("scan width".into()));
    }
    if m.num_pis() != o.num_pis() || m.num_pos() != o.num_pos() {
        return Err(AttackError::Interface("primary I/O".into()));
    }
    Ok(())
}

fn query(o: &mut Oracle, m: &LockedModel, ins: &[bool]) -> Result<Dip, AttackError> {
    let (a, pi) = ins.split_at(m.scan_bits());
    let (b, po) = o.scan_transaction(a, pi)?;
    Ok(Dip {
        a: a.to_vec(),
        pi: pi.to_vec(),
        b,
        po,
        window: 1,
    })
}

fn observed(d: &Dip) -> (Vec<bool>, Vec<bool>) {
    let mut ins = d.a.clone();
    ins.extend(&d.pi);
    let mut outs = d.b.clone();
    outs.extend(&d.po);
    (ins, outs)
}

fn start(s: &mut SolverSession, cfg: &AttackConfig) -> Instant {
    let t0 = Instant::now();
    s.set_solve_timeout(cfg.solve_timeout);
    s.set_deadline(cfg.attack_timeout.map(|t| t0 + t));
    t0
}

fn finish(r: &mut AttackResult, s: &SolverSession, t0: Instant) {
    r.time_s = t0.elapsed().as_secs_f64();
    r.cnf_vars = s.num_vars();
    r.cnf_clauses = s.num_clauses();
}

/// Handle on the key variables of a finished static run, for enumeration.
#[derive(Debug, Clone)]
pub struct KeyVars(pub Vec<Lit>);

/// Classic DIP loop on `model` against `oracle`.
pub fn sat_attack(
    model: &LockedModel,
    oracle: &mut Oracle,
    cfg: &AttackConfig,
    s: &mut SolverSession,
) -> Result<(AttackResult, KeyVars), AttackError> {
    check_interface(model, oracle)?;
    let t0 = start(s, cfg);
    let mode = match model.kind {
        ModelKind::Naive => AttackMode::Naive,
        _ if model.group(KeyGroupKind::Scramble).is_some() => AttackMode::Scramble,
        _ if model.group(KeyGroupKind::Rll).is_some() => AttackMode::Combined,
        _ => AttackMode::Static,
    };
    let mut r = AttackResult::new(mode);
    let k1 = fresh(s, model.key_len());
    let k2 = fresh(s, model.key_len());
    let miter = add_miter(s, model, &k1, &k2)?;
    loop {
        if r.dips >= cfg.max_dips {
            r.outcome = Outcome::Partial;
            break;
        }
        match s.solve(&[miter.act]) {
            SolveResult::Sat => {
                let ins: Vec<bool> = miter.inputs.iter().map(|&l| s.value(l)).collect();
                let dip = query(oracle, model, &ins)?;
                let (ins, outs) = observed(&dip);
                constrain(s, model, &k1, &ins, &outs)?;
                constrain(s, model, &k2, &ins, &outs)?;
                r.dip_log.push(dip);
                r.dips += 1;
            }
            SolveResult::Unsat => {
                r.outcome = Outcome::Converged;
                break;
            }
            SolveResult::Timeout => {
                r.outcome = Outcome::Timeout;
                break;
            }
        }
    }
    r.iterations = 1;
    if r.outcome != Outcome::Timeout {
        match s.solve(&[]) {
            SolveResult::Sat => {
                let key: Vec<bool> = k1.iter().map(|&l| s.value(l)).collect();
                r.secret = Some(model.secret_of(&key, None));
                r.key = Some(key);
                r.success = r.outcome == Outcome::Converged;
            }
            SolveResult::Unsat => {
                r.outcome = Outcome::KeySpaceEmpty;
                r.unsat = true;
            }
            SolveResult::Timeout => r.outcome = Outcome::Timeout,
        }
    }
    finish(&mut r, s, t0);
    Ok((r, KeyVars(k1)))
}

/// Every key the session still admits, up to `limit`.
pub fn enumerate_keys(s: &mut SolverSession, keys: &KeyVars, limit: usize) -> Vec<Vec<bool>> {
    let gate = s.new_lit();
    let mut out = Vec::new();
    while out.len() < limit && s.solve(&[gate]) == SolveResult::Sat {
        let k: Vec<bool> = keys.0.iter().map(|&l| s.value(l)).collect();
        let mut block = vec![!gate];
        block.extend(keys.0.iter().zip(&k).map(|(&l, &v)| if v { !l } else { l }));
        s.add_clause(&block);
        out.push(k);
    }
    out
}

/// SAT attack on a model that ignores the scan obfuscation.
pub fn naive_sat_attack(
    design: &ObfuscatedDesign,
    oracle: &mut Oracle,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    let model = LockedModel::build(design, ModelKind::Naive)?;
    let mut s = SolverSession::new();
    let (mut r, _) = sat_attack(&model, oracle, cfg, &mut s)?;
    r.mode = AttackMode::Naive;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "p")]
pub enum PDetection {
    Detected(u64),
    /// No response change within the capture budget.
    Static,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Repeat each probe from power-up and look for response changes.
/// A change at pattern `m` means a key update happened after pattern
/// `m - 1`, so `p` divides `m - 1`; the estimate is the gcd over all changes.
pub fn detect_p(oracle: &mut Oracle, probes: &[(Vec<bool>, Vec<bool>)], max_captures: u64) -> Result<PDetection, AttackError> {
    let mut g = 0u64;
    for (a, pi) in probes {
        oracle.power_up();
        // pattern 1 is masked by the shadow chain
        let mut prev = oracle.scan_transaction(a, pi)?;
        for m in 2..=max_captures {
            let cur = oracle.scan_transaction(a, pi)?;
            if m >= 3 && cur != prev {
                g = gcd(g, m - 1);
            }
            prev = cur;
        }
    }
    oracle.power_up();
    Ok(if g == 0 { PDetection::Static } else { PDetection::Detected(g) })
}

pub fn random_probes(oracle: &Oracle, count: usize, seed: u64) -> Vec<(Vec<bool>, Vec<bool>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = (0..oracle.scan_bits()).map(|_| rng.gen()).collect();
            let pi = (0..oracle.num_pis()).map(|_| rng.gen()).collect();
            (a, pi)
        })
        .collect()
}

/// Iterative seed recovery on a DOS design with known update period `p`.
pub fn dynamic_attack(
    design: &ObfuscatedDesign,
    oracle: &mut Oracle,
    p: u64,
    cfg: &AttackConfig,
    s: &mut SolverSession,
) -> Result<AttackResult, AttackError> {
    let dos = design.dos.as_ref().ok_or_else(|| AttackError::Mode {
        mode: AttackMode::Dynamic,
        why: "design has no DOS block".into(),
    })?;
    if p == 0 {
        return Err(AttackError::Mode {
            mode: AttackMode::Dynamic,
            why: "p must be at least 1".into(),
        });
    }
    let t0 = start(s, cfg);
    let lambda = dos.lfsr.width();
    let rll = design.netlist.keys().len();
    let mut r = AttackResult::new(AttackMode::Dynamic);
    r.detected_p = Some(p);
    let seed1 = fresh(s, lambda);
    let seed2 = fresh(s, lambda);
    s.add_clause(&seed1);
    s.add_clause(&seed2);
    let rll1 = fresh(s, rll);
    let rll2 = fresh(s, rll);
    let k1: Vec<Lit> = seed1.iter().chain(&rll1).copied().collect();
    let k2: Vec<Lit> = seed2.iter().chain(&rll2).copied().collect();

    let filler_a = vec![false; oracle.scan_bits()];
    let filler_pi = vec![false; oracle.num_pis()];
    oracle.power_up();
    oracle.scan_transaction(&filler_a, &filler_pi)?;
    let mut m: u64 = 1;
    let mut resolved: Vec<Option<bool>> = vec![None; lambda];

    loop {
        if r.iterations >= cfg.max_iterations {
            r.outcome = Outcome::Partial;
            break;
        }
        if s.deadline_passed() {
            r.outcome = Outcome::Timeout;
            break;
        }
        r.iterations += 1;
        let j = (m + 1).div_ceil(p);
        let model = LockedModel::build(design, ModelKind::Dynamic(j))?;
        if r.iterations == 1 {
            check_interface(&model, oracle)?;
        }
        let miter = add_miter(s, &model, &k1, &k2)?;
        let mut converged = false;
        let mut timed_out = false;
        while m < j * p {
            match s.solve(&[miter.act]) {
                SolveResult::Sat => {
                    let ins: Vec<bool> = miter.inputs.iter().map(|&l| s.value(l)).collect();
                    let mut dip = query(oracle, &model, &ins)?;
                    dip.window = j;
                    m += 1;
                    let (ins, outs) = observed(&dip);
                    constrain(s, &model, &k1, &ins, &outs)?;
                    constrain(s, &model, &k2, &ins, &outs)?;
                    r.dip_log.push(dip);
                    r.dips += 1;
                }
                SolveResult::Unsat => {
                    converged = true;
                    break;
                }
                SolveResult::Timeout => {
                    timed_out = true;
                    break;
                }
            }
        }
        if timed_out {
            r.outcome = Outcome::Timeout;
            break;
        }
        while m < j * p {
            oracle.scan_transaction(&filler_a, &filler_pi)?;
            m += 1;
        }
        match s.solve(&[]) {
            SolveResult::Sat => {}
            SolveResult::Unsat => {
                r.outcome = Outcome::KeySpaceEmpty;
                r.unsat = true;
                break;
            }
            SolveResult::Timeout => {
                r.outcome = Outcome::Timeout;
                break;
            }
        }
        let current: Vec<bool> = seed1.iter().map(|&l| s.value(l)).collect();
        for i in 0..lambda {
            if resolved[i].is_some() {
                continue;
            }
            let v = current[i];
            let opposite = if v { !seed1[i] } else { seed1[i] };
            match s.solve(&[opposite]) {
                SolveResult::Unsat => {
                    resolved[i] = Some(v);
                    let l1 = if v { seed1[i] } else { !seed1[i] };
                    let l2 = if v { seed2[i] } else { !seed2[i] };
                    s.add_clause(&[l1]);
                    s.add_clause(&[l2]);
                }
                SolveResult::Sat => {}
                SolveResult::Timeout => {
                    timed_out = true;
                    break;
                }
            }
        }
        r.resolution_trace.push(resolved.clone());
        if timed_out {
            r.outcome = Outcome::Timeout;
            break;
        }
        if resolved.iter().all(Option::is_some) && (rll == 0 || converged) {
            r.outcome = Outcome::Converged;
            break;
        }
    }
    if matches!(r.outcome, Outcome::Converged | Outcome::Partial) && s.solve(&[]) == SolveResult::Sat {
        let key: Vec<bool> = k1.iter().map(|&l| s.value(l)).collect();
        let model = LockedModel::build(design, ModelKind::Dynamic(1))?;
        r.secret = Some(model.secret_of(&key, Some(p)));
        r.key = Some(key);
        r.success = r.outcome == Outcome::Converged;
    }
    finish(&mut r, s, t0);
    Ok(r)
}

/// Compare `n_trials` random transactions of a chip built from `secret`
/// with the target chip, both from power-up.
pub fn verify_key(
    design: &ObfuscatedDesign,
    oracle: &mut Oracle,
    secret: &GoldenSecret,
    n_trials: usize,
    seed: u64,
) -> Result<bool, AttackError> {
    let mut candidate = match Oracle::new(design.clone(), secret.clone()) {
        Ok(o) => o,
        Err(_) => return Ok(false),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e51_f00d);
    oracle.power_up();
    for _ in 0..n_trials {
        let a: Vec<bool> = (0..oracle.scan_bits()).map(|_| rng.gen()).collect();
        let pi: Vec<bool> = (0..oracle.num_pis()).map(|_| rng.gen()).collect();
        if oracle.scan_transaction(&a, &pi)? != candidate.scan_transaction(&a, &pi)? {
            oracle.power_up();
            return Ok(false);
        }
    }
    oracle.power_up();
    Ok(true)
}

/// Pick the attack for `mode`, run it and verify the result.
pub fn run_attack(
    design: &ObfuscatedDesign,
    oracle: &mut Oracle,
    mode: AttackMode,
    cfg: &AttackConfig,
    session: &mut SolverSession,
) -> Result<AttackResult, AttackError> {
    let mode_err = |why: &str| AttackError::Mode {
        mode,
        why: why.to_string(),
    };
    let t0 = Instant::now();
    let mut r = match mode {
        AttackMode::Naive => {
            if !design.has_scan_obfuscation() && design.netlist.keys().is_empty() {
                return Err(mode_err("nothing is locked"));
            }
            let model = LockedModel::build(design, ModelKind::Naive)?;
            let mut r = sat_attack(&model, oracle, cfg, session)?.0;
            r.mode = AttackMode::Naive;
            r
        }
        AttackMode::Static | AttackMode::Scramble | AttackMode::Combined if design.dos.is_none() => {
            match mode {
                AttackMode::Static if design.static_gates.is_empty() => return Err(mode_err("no static key gates")),
                AttackMode::Scramble if design.muxes.is_empty() => return Err(mode_err("no scramble MUXes")),
                AttackMode::Combined if design.netlist.keys().is_empty() => return Err(mode_err("no RLL key gates")),
                _ => {}
            }
            let model = LockedModel::build(design, ModelKind::Static)?;
            let mut r = sat_attack(&model, oracle, cfg, session)?.0;
            r.mode = mode;
            r
        }
        AttackMode::Dynamic | AttackMode::Combined if design.dos.is_some() => {
            let p = match cfg.p {
                Some(p) => p,
                None => {
                    let probes = random_probes(oracle, cfg.p_probes.max(1), cfg.seed);
                    match detect_p(oracle, &probes, cfg.p_max_captures)? {
                        PDetection::Detected(p) => p,
                        PDetection::Static => return Err(mode_err("no key updates observed; p undetectable")),
                    }
                }
            };
            let mut r = dynamic_attack(design, oracle, p, cfg, session)?;
            r.mode = mode;
            r
        }
        _ => return Err(mode_err("defense type does not match")),
    };
    if let (Some(secret), true) = (r.secret.clone(), r.outcome == Outcome::Converged) {
        let ok = verify_key(design, oracle, &secret, cfg.verify_trials, cfg.seed)?;
        r.verified = Some(ok);
        r.success = ok;
    }
    r.time_s = t0.elapsed().as_secs_f64();
    Ok(r)
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub circuit: String,
    pub mode: AttackMode,
    pub ratio: usize,
    pub key_bits: usize,
    pub outcome: Outcome,
    pub success: bool,
    pub dips: usize,
    pub iterations: usize,
    pub time_s: f64,
}

impl ResultRow {
    pub fn new(circuit: &str, ratio: usize, key_bits: usize, r: &AttackResult) -> Self {
        Self {
            circuit: circuit.to_string(),
            mode: r.mode,
            ratio,
            key_bits,
            outcome: r.outcome,
            success: r.success,
            dips: r.dips,
            iterations: r.iterations,
            time_s: r.time_s,
        }
    }
}
