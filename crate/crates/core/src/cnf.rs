//! Tseitin encoding of netlists into CNF.
//!
//! Encoding goes through the [`ClauseSink`] trait so the same code feeds a
//! standalone [`Cnf`] clause store (for DIMACS export) and a live solver
//! session. Nets are encoded as [`Signal`]s: constants fold away and
//! `BUF`/`NOT` alias their input literal instead of allocating a variable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Not;

use crate::netlist::{GateKind, Netlist, NetlistError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

/// Literal packed as `2 * var + negated`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(u32);

impl Lit {
    pub fn positive(v: Var) -> Lit {
        Lit(v.0 << 1)
    }

    pub fn negative(v: Var) -> Lit {
        Lit((v.0 << 1) | 1)
    }

    pub fn new(v: Var, value: bool) -> Lit {
        if value {
            Lit::positive(v)
        } else {
            Lit::negative(v)
        }
    }

    pub fn var(self) -> Var {
        Var(self.0 >> 1)
    }

    pub fn is_negated(self) -> bool {
        self.0 & 1 == 1
    }

    /// Signed 1-based DIMACS literal.
    pub fn to_dimacs(self) -> i64 {
        let v = i64::from(self.var().0) + 1;
        if self.is_negated() {
            -v
        } else {
            v
        }
    }

    pub fn from_dimacs(d: i64) -> Lit {
        assert!(d != 0, "0 is not a DIMACS literal");
        let v = Var((d.unsigned_abs() - 1) as u32);
        Lit::new(v, d > 0)
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Signal {
    Const(bool),
    Lit(Lit),
}

impl Signal {
    pub fn as_lit(self) -> Option<Lit> {
        match self {
            Signal::Lit(l) => Some(l),
            Signal::Const(_) => None,
        }
    }
}

impl Not for Signal {
    type Output = Signal;
    fn not(self) -> Signal {
        match self {
            Signal::Const(b) => Signal::Const(!b),
            Signal::Lit(l) => Signal::Lit(!l),
        }
    }
}

impl From<Lit> for Signal {
    fn from(l: Lit) -> Signal {
        Signal::Lit(l)
    }
}

impl From<bool> for Signal {
    fn from(b: bool) -> Signal {
        Signal::Const(b)
    }
}

pub trait ClauseSink {
    fn new_var(&mut self) -> Var;
    fn add_clause(&mut self, lits: &[Lit]);

    fn new_lit(&mut self) -> Lit {
        Lit::positive(self.new_var())
    }

    /// Assert `s`; a false constant adds the empty clause.
    fn assert_signal(&mut self, s: Signal) {
        match s {
            Signal::Const(true) => {}
            Signal::Const(false) => self.add_clause(&[]),
            Signal::Lit(l) => self.add_clause(&[l]),
        }
    }
}

pub fn and_gate<S: ClauseSink + ?Sized>(sink: &mut S, ins: &[Signal]) -> Signal {
    let mut lits = Vec::with_capacity(ins.len());
    for &s in ins {
        match s {
            Signal::Const(false) => return Signal::Const(false),
            Signal::Const(true) => {}
            Signal::Lit(l) => lits.push(l),
        }
    }
    lits.sort_unstable();
    lits.dedup();
    if lits.windows(2).any(|w| w[0].var() == w[1].var()) {
        return Signal::Const(false);
    }
    match lits.len() {
        0 => Signal::Const(true),
        1 => Signal::Lit(lits[0]),
        _ => {
            let y = sink.new_lit();
            let mut big = Vec::with_capacity(lits.len() + 1);
            big.push(y);
            for &l in &lits {
                sink.add_clause(&[!y, l]);
                big.push(!l);
            }
            sink.add_clause(&big);
            Signal::Lit(y)
        }
    }
}

pub fn or_gate<S: ClauseSink + ?Sized>(sink: &mut S, ins: &[Signal]) -> Signal {
    let neg: Vec<Signal> = ins.iter().map(|&s| !s).collect();
    !and_gate(sink, &neg)
}

pub fn xor_gate<S: ClauseSink + ?Sized>(sink: &mut S, a: Signal, b: Signal) -> Signal {
    match (a, b) {
        (Signal::Const(x), s) | (s, Signal::Const(x)) => {
            if x {
                !s
            } else {
                s
            }
        }
        (Signal::Lit(x), Signal::Lit(y)) => {
            if x == y {
                return Signal::Const(false);
            }
            if x == !y {
                return Signal::Const(true);
            }
            let z = sink.new_lit();
            sink.add_clause(&[!z, x, y]);
            sink.add_clause(&[!z, !x, !y]);
            sink.add_clause(&[z, !x, y]);
            sink.add_clause(&[z, x, !y]);
            Signal::Lit(z)
        }
    }
}

/// `sel ? in1 : in0`.
pub fn mux_gate<S: ClauseSink + ?Sized>(sink: &mut S, sel: Signal, in0: Signal, in1: Signal) -> Signal {
    if in0 == in1 {
        return in0;
    }
    let s = match sel {
        Signal::Const(true) => return in1,
        Signal::Const(false) => return in0,
        Signal::Lit(s) => s,
    };
    match (in0, in1) {
        (Signal::Const(false), _) => and_gate(sink, &[Signal::Lit(s), in1]),
        (Signal::Const(true), _) => or_gate(sink, &[Signal::Lit(!s), in1]),
        (_, Signal::Const(false)) => and_gate(sink, &[Signal::Lit(!s), in0]),
        (_, Signal::Const(true)) => or_gate(sink, &[Signal::Lit(s), in0]),
        (Signal::Lit(a), Signal::Lit(b)) => {
            if a == !b {
                return xor_gate(sink, Signal::Lit(s), Signal::Lit(a));
            }
            let y = sink.new_lit();
            sink.add_clause(&[!s, !b, y]);
            sink.add_clause(&[!s, b, !y]);
            sink.add_clause(&[s, !a, y]);
            sink.add_clause(&[s, a, !y]);
            sink.add_clause(&[!a, !b, y]);
            sink.add_clause(&[a, b, !y]);
            Signal::Lit(y)
        }
    }
}

/// Encode every net of `n` given signals for its inputs, key inputs and
/// flip-flop outputs (the latter act as pseudo-primary inputs). Returns
/// one signal per net, indexed by [`crate::netlist::NetId`].
pub fn encode_netlist<S: ClauseSink + ?Sized>(
    sink: &mut S,
    n: &Netlist,
    inputs: &[Signal],
    keys: &[Signal],
    state: &[Signal],
) -> Result<Vec<Signal>, NetlistError> {
    let dim = |what, expected: usize, got: usize| {
        if expected == got {
            Ok(())
        } else {
            Err(NetlistError::Dimension { what, expected, got })
        }
    };
    dim("primary inputs", n.inputs().len(), inputs.len())?;
    dim("key inputs", n.keys().len(), keys.len())?;
    dim("state", n.flip_flops().len(), state.len())?;
    let mut sig = vec![Signal::Const(false); n.num_nets()];
    for (&net, &s) in n.inputs().iter().zip(inputs) {
        sig[net] = s;
    }
    for (&net, &s) in n.keys().iter().zip(keys) {
        sig[net] = s;
    }
    for (ff, &s) in n.flip_flops().iter().zip(state) {
        sig[ff.q] = s;
    }
    let mut ins = Vec::with_capacity(4);
    for &g in n.topo_order() {
        let gate = &n.gates()[g];
        ins.clear();
        ins.extend(gate.inputs.iter().map(|&i| sig[i]));
        sig[gate.output] = match gate.kind {
            GateKind::And => and_gate(sink, &ins),
            GateKind::Nand => !and_gate(sink, &ins),
            GateKind::Or => or_gate(sink, &ins),
            GateKind::Nor => !or_gate(sink, &ins),
            GateKind::Xor => xor_gate(sink, ins[0], ins[1]),
            GateKind::Xnor => !xor_gate(sink, ins[0], ins[1]),
            GateKind::Not => !ins[0],
            GateKind::Buf => ins[0],
            GateKind::Mux2 => mux_gate(sink, ins[0], ins[1], ins[2]),
            GateKind::Const0 => Signal::Const(false),
            GateKind::Const1 => Signal::Const(true),
        };
    }
    Ok(sig)
}

/// Standalone clause store with per-instance net maps.
#[derive(Debug, Clone, Default)]
pub struct Cnf {
    num_vars: u32,
    clauses: Vec<Vec<Lit>>,
    instances: BTreeMap<String, Vec<Signal>>,
}

impl ClauseSink for Cnf {
    fn new_var(&mut self) -> Var {
        let v = Var(self.num_vars);
        self.num_vars += 1;
        v
    }

    fn add_clause(&mut self, lits: &[Lit]) {
        self.clauses.push(lits.to_vec());
    }
}

impl Cnf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Vec<Lit>] {
        &self.clauses
    }

    /// Encode a fresh copy of `n` under `tag`. Flip-flop Q nets become free
    /// inputs and D nets are ordinary nets, i.e. the combinational view.
    pub fn add_instance(&mut self, n: &Netlist, tag: &str) -> Result<&[Signal], NetlistError> {
        let fresh = |count: usize, me: &mut Cnf| -> Vec<Signal> {
            (0..count).map(|_| Signal::Lit(me.new_lit())).collect()
        };
        let inputs = fresh(n.inputs().len(), self);
        let keys = fresh(n.keys().len(), self);
        let state = fresh(n.flip_flops().len(), self);
        let sig = encode_netlist(self, n, &inputs, &keys, &state)?;
        self.instances.insert(tag.to_string(), sig);
        Ok(&self.instances[tag])
    }

    /// Signal of `net` in instance `tag`.
    pub fn signal(&self, tag: &str, net: usize) -> Option<Signal> {
        self.instances.get(tag).and_then(|s| s.get(net).copied())
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "p cnf {} {}", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                let _ = write!(out, "{} ", l.to_dimacs());
            }
            out.push_str("0\n");
        }
        out
    }
}

/// Combinational-view CNF of `n` with variables namespaced under `instance_tag`.
pub fn to_cnf(n: &Netlist, instance_tag: &str) -> Result<Cnf, NetlistError> {
    let mut cnf = Cnf::new();
    cnf.add_instance(n, instance_tag)?;
    Ok(cnf)
}

/// Parse DIMACS text back into clauses (`p` line and comments skipped).
pub fn parse_dimacs(text: &str) -> Result<(u32, Vec<Vec<Lit>>), String> {
    let mut num_vars = 0;
    let mut clauses = Vec::new();
    let mut cur = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("p cnf") {
            let mut it = rest.split_whitespace();
            num_vars = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| format!("bad header `{line}`"))?;
            continue;
        }
        for tok in line.split_whitespace() {
            let d: i64 = tok.parse().map_err(|_| format!("bad literal `{tok}`"))?;
            if d == 0 {
                clauses.push(std::mem::take(&mut cur));
            } else {
                cur.push(Lit::from_dimacs(d));
            }
        }
    }
    Ok((num_vars, clauses))
}
