//! Gate-level netlist IR.
//!
//! A [`Netlist`] holds a combinational gate graph plus D flip-flops. Nets are
//! dense integer ids with case-sensitive names. Inputs whose name starts with
//! [`KEY_INPUT_PREFIX`] are kept in a separate key-input group, which is how
//! logic-locked BENCH files mark their key pins.
//!
//! The BENCH front end lives in [`crate::bench`]; Tseitin encoding lives in
//! [`crate::cnf`].

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NetId = usize;

/// Name prefix that marks an `INPUT` as a key input.
pub const KEY_INPUT_PREFIX: &str = "keyinput";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("net `{0}` has no driver")]
    Undriven(String),
    #[error("net `{0}` has more than one driver")]
    MultiplyDriven(String),
    #[error("combinational cycle through net `{0}`")]
    Cycle(String),
    #[error("gate driving `{net}`: {kind} does not accept {got} inputs")]
    Arity {
        net: String,
        kind: GateKind,
        got: usize,
    },
    #[error("{what}: expected {expected} bits, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown net `{0}`")]
    UnknownNet(String),
    #[error("net `{0}` is not driven by a gate")]
    NotAGate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    And,
    Nand,
    Or,
    Nor,
    Xor,
    Xnor,
    Not,
    Buf,
    /// `MUX(select, in0, in1)`: `select ? in1 : in0`.
    Mux2,
    Const0,
    Const1,
}

impl GateKind {
    pub fn bench_name(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Nand => "NAND",
            GateKind::Or => "OR",
            GateKind::Nor => "NOR",
            GateKind::Xor => "XOR",
            GateKind::Xnor => "XNOR",
            GateKind::Not => "NOT",
            GateKind::Buf => "BUFF",
            GateKind::Mux2 => "MUX",
            GateKind::Const0 => "CONST0",
            GateKind::Const1 => "CONST1",
        }
    }

    pub fn from_bench_name(name: &str) -> Option<GateKind> {
        let kind = match name.to_ascii_uppercase().as_str() {
            "AND" => GateKind::And,
            "NAND" => GateKind::Nand,
            "OR" => GateKind::Or,
            "NOR" => GateKind::Nor,
            "XOR" => GateKind::Xor,
            "XNOR" => GateKind::Xnor,
            "NOT" | "INV" => GateKind::Not,
            "BUF" | "BUFF" => GateKind::Buf,
            "MUX" | "MUX2" => GateKind::Mux2,
            "CONST0" | "GND" => GateKind::Const0,
            "CONST1" | "VDD" => GateKind::Const1,
            _ => return None,
        };
        Some(kind)
    }

    pub fn arity_ok(self, n: usize) -> bool {
        match self {
            GateKind::And | GateKind::Nand | GateKind::Or | GateKind::Nor => n >= 1,
            GateKind::Xor | GateKind::Xnor => n == 2,
            GateKind::Not | GateKind::Buf => n == 1,
            GateKind::Mux2 => n == 3,
            GateKind::Const0 | GateKind::Const1 => n == 0,
        }
    }

    /// Evaluate on 64 packed patterns at once.
    #[inline]
    pub fn eval_words(self, ins: &[u64]) -> u64 {
        match self {
            GateKind::And => ins.iter().fold(!0, |acc, &w| acc & w),
            GateKind::Nand => !ins.iter().fold(!0, |acc, &w| acc & w),
            GateKind::Or => ins.iter().fold(0, |acc, &w| acc | w),
            GateKind::Nor => !ins.iter().fold(0, |acc, &w| acc | w),
            GateKind::Xor => ins[0] ^ ins[1],
            GateKind::Xnor => !(ins[0] ^ ins[1]),
            GateKind::Not => !ins[0],
            GateKind::Buf => ins[0],
            GateKind::Mux2 => (ins[0] & ins[2]) | (!ins[0] & ins[1]),
            GateKind::Const0 => 0,
            GateKind::Const1 => !0,
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.bench_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: Vec<NetId>,
    pub output: NetId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlipFlop {
    /// State output.
    pub q: NetId,
    /// Next-state input.
    pub d: NetId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    Input(usize),
    Key(usize),
    FlipFlop(usize),
    Gate(usize),
}

/// Immutable, validated netlist.
#[derive(Debug, Clone)]
pub struct Netlist {
    names: Vec<String>,
    index: HashMap<String, NetId>,
    drivers: Vec<Driver>,
    gates: Vec<Gate>,
    inputs: Vec<NetId>,
    keys: Vec<NetId>,
    outputs: Vec<NetId>,
    ffs: Vec<FlipFlop>,
    order: Vec<usize>,
}

impl Netlist {
    pub fn num_nets(&self) -> usize {
        self.names.len()
    }

    pub fn net_name(&self, id: NetId) -> &str {
        &self.names[id]
    }

    pub fn net_id(&self, name: &str) -> Option<NetId> {
        self.index.get(name).copied()
    }

    pub fn driver(&self, id: NetId) -> Driver {
        self.drivers[id]
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn inputs(&self) -> &[NetId] {
        &self.inputs
    }

    pub fn keys(&self) -> &[NetId] {
        &self.keys
    }

    pub fn outputs(&self) -> &[NetId] {
        &self.outputs
    }

    pub fn flip_flops(&self) -> &[FlipFlop] {
        &self.ffs
    }

    /// Gate indices in topological order.
    pub fn topo_order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_combinational(&self) -> bool {
        self.ffs.is_empty()
    }

    /// Two-valued simulation of one cycle: primary outputs and next state.
    ///
    /// Fails if the netlist carries key inputs; use [`Netlist::evaluate_keyed`].
    pub fn evaluate(&self, pi: &[bool], state: &[bool]) -> Result<(Vec<bool>, Vec<bool>), NetlistError> {
        self.evaluate_keyed(pi, &[], state)
    }

    pub fn evaluate_keyed(
        &self,
        pi: &[bool],
        key: &[bool],
        state: &[bool],
    ) -> Result<(Vec<bool>, Vec<bool>), NetlistError> {
        let widen = |bits: &[bool]| -> Vec<u64> { bits.iter().map(|&b| if b { !0 } else { 0 }).collect() };
        let (po, ns) = self.simulate_words(&widen(pi), &widen(key), &widen(state))?;
        Ok((
            po.iter().map(|&w| w & 1 == 1).collect(),
            ns.iter().map(|&w| w & 1 == 1).collect(),
        ))
    }

    /// Bit-parallel simulation: each `u64` carries 64 independent patterns.
    pub fn simulate_words(
        &self,
        pi: &[u64],
        key: &[u64],
        state: &[u64],
    ) -> Result<(Vec<u64>, Vec<u64>), NetlistError> {
        let values = self.net_values(pi, key, state)?;
        let po = self.outputs.iter().map(|&o| values[o]).collect();
        let ns = self.ffs.iter().map(|ff| values[ff.d]).collect();
        Ok((po, ns))
    }

    /// Values of every net under bit-parallel simulation.
    pub fn net_values(&self, pi: &[u64], key: &[u64], state: &[u64]) -> Result<Vec<u64>, NetlistError> {
        check_dim("primary inputs", self.inputs.len(), pi.len())?;
        check_dim("key inputs", self.keys.len(), key.len())?;
        check_dim("state", self.ffs.len(), state.len())?;
        let mut values = vec![0u64; self.names.len()];
        for (&net, &v) in self.inputs.iter().zip(pi) {
            values[net] = v;
        }
        for (&net, &v) in self.keys.iter().zip(key) {
            values[net] = v;
        }
        for (ff, &v) in self.ffs.iter().zip(state) {
            values[ff.q] = v;
        }
        let mut scratch = Vec::with_capacity(4);
        for &g in &self.order {
            let gate = &self.gates[g];
            scratch.clear();
            scratch.extend(gate.inputs.iter().map(|&i| values[i]));
            values[gate.output] = gate.kind.eval_words(&scratch);
        }
        Ok(values)
    }

    /// Rebuild with XOR/XNOR key gates spliced after the given gate-driven
    /// nets. The original net keeps its name and now carries the key gate's
    /// output; the old driver moves to `<name>_pre<k>`. New key inputs are
    /// appended after existing ones and named `keyinput<n>`.
    pub fn with_key_gates(&self, sites: &[(NetId, GateKind)]) -> Result<Netlist, NetlistError> {
        let mut b = NetlistBuilder::new();
        for name in &self.names {
            b.reserve(name);
        }
        let mut renamed: HashMap<NetId, String> = HashMap::new();
        for (k, &(net, _)) in sites.iter().enumerate() {
            match self.drivers[net] {
                Driver::Gate(_) => {}
                _ => return Err(NetlistError::NotAGate(self.names[net].clone())),
            }
            renamed.insert(net, b.fresh(&format!("{}_pre{}", self.names[net], k)));
        }
        for &i in &self.inputs {
            b.input(&self.names[i]);
        }
        for &k in &self.keys {
            b.key_input(&self.names[k]);
        }
        let mut next_key = self.keys.len();
        let mut key_names = Vec::with_capacity(sites.len());
        for _ in sites {
            let mut name = format!("{KEY_INPUT_PREFIX}{next_key}");
            while self.index.contains_key(&name) {
                next_key += 1;
                name = format!("{KEY_INPUT_PREFIX}{next_key}");
            }
            next_key += 1;
            key_names.push(b.key_input(&name));
        }
        let name_of = |net: NetId| -> &str { renamed.get(&net).map(String::as_str).unwrap_or(&self.names[net]) };
        for ff in &self.ffs {
            let d = b.net(&self.names[ff.d]);
            b.dff(&self.names[ff.q], d);
        }
        for &g in &self.order {
            let gate = &self.gates[g];
            let ins: Vec<NetId> = gate.inputs.iter().map(|&i| b.net(&self.names[i])).collect();
            b.gate(gate.kind, &ins, name_of(gate.output));
        }
        for (k, &(net, kind)) in sites.iter().enumerate() {
            let pre = b.net(name_of(net));
            b.gate(kind, &[pre, key_names[k]], &self.names[net]);
        }
        for &o in &self.outputs {
            let id = b.net(&self.names[o]);
            b.output(id);
        }
        b.build()
    }
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), NetlistError> {
    if expected != got {
        return Err(NetlistError::Dimension { what, expected, got });
    }
    Ok(())
}

/// Incremental constructor; [`NetlistBuilder::build`] validates every invariant.
#[derive(Debug, Default, Clone)]
pub struct NetlistBuilder {
    names: Vec<String>,
    index: HashMap<String, NetId>,
    reserved: std::collections::HashSet<String>,
    drivers: Vec<Vec<Driver>>,
    gates: Vec<Gate>,
    inputs: Vec<NetId>,
    keys: Vec<NetId>,
    outputs: Vec<NetId>,
    ffs: Vec<FlipFlop>,
    fresh_counter: usize,
}

impl NetlistBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Get or create the net with this name.
    pub fn net(&mut self, name: &str) -> NetId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.drivers.push(Vec::new());
        id
    }

    pub fn name_of(&self, id: NetId) -> &str {
        &self.names[id]
    }

    pub fn has_net(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Keep `name` out of the pool used by [`NetlistBuilder::fresh`].
    pub fn reserve(&mut self, name: &str) {
        self.reserved.insert(name.to_string());
    }

    /// A name not yet used or reserved, derived from `base`.
    pub fn fresh(&mut self, base: &str) -> String {
        let taken = |s: &str, me: &Self| me.index.contains_key(s) || me.reserved.contains(s);
        if !taken(base, self) {
            self.reserved.insert(base.to_string());
            return base.to_string();
        }
        loop {
            let candidate = format!("{base}_{}", self.fresh_counter);
            self.fresh_counter += 1;
            if !taken(&candidate, self) {
                self.reserved.insert(candidate.clone());
                return candidate;
            }
        }
    }

    pub fn input(&mut self, name: &str) -> NetId {
        let id = self.net(name);
        self.drivers[id].push(Driver::Input(self.inputs.len()));
        self.inputs.push(id);
        id
    }

    pub fn key_input(&mut self, name: &str) -> NetId {
        let id = self.net(name);
        self.drivers[id].push(Driver::Key(self.keys.len()));
        self.keys.push(id);
        id
    }

    pub fn output(&mut self, net: NetId) {
        self.outputs.push(net);
    }

    pub fn dff(&mut self, q: &str, d: NetId) -> NetId {
        let id = self.net(q);
        self.drivers[id].push(Driver::FlipFlop(self.ffs.len()));
        self.ffs.push(FlipFlop { q: id, d });
        id
    }

    pub fn gate(&mut self, kind: GateKind, inputs: &[NetId], output: &str) -> NetId {
        let id = self.net(output);
        self.drivers[id].push(Driver::Gate(self.gates.len()));
        self.gates.push(Gate {
            kind,
            inputs: inputs.to_vec(),
            output: id,
        });
        id
    }

    /// Add a gate whose output gets a fresh name derived from `base`.
    pub fn gate_fresh(&mut self, kind: GateKind, inputs: &[NetId], base: &str) -> NetId {
        let name = self.fresh(base);
        self.gate(kind, inputs, &name)
    }

    pub fn build(self) -> Result<Netlist, NetlistError> {
        let mut drivers = Vec::with_capacity(self.names.len());
        for (id, ds) in self.drivers.iter().enumerate() {
            match ds.len() {
                0 => return Err(NetlistError::Undriven(self.names[id].clone())),
                1 => drivers.push(ds[0]),
                _ => return Err(NetlistError::MultiplyDriven(self.names[id].clone())),
            }
        }
        for g in &self.gates {
            if !g.kind.arity_ok(g.inputs.len()) {
                return Err(NetlistError::Arity {
                    net: self.names[g.output].clone(),
                    kind: g.kind,
                    got: g.inputs.len(),
                });
            }
        }
        let order = topo_sort(&self.names, &drivers, &self.gates)?;
        Ok(Netlist {
            names: self.names,
            index: self.index,
            drivers,
            gates: self.gates,
            inputs: self.inputs,
            keys: self.keys,
            outputs: self.outputs,
            ffs: self.ffs,
            order,
        })
    }
}

fn topo_sort(names: &[String], drivers: &[Driver], gates: &[Gate]) -> Result<Vec<usize>, NetlistError> {
    // Kahn over gate-to-gate edges; flip-flops break every cycle.
    let mut indegree = vec![0usize; gates.len()];
    let mut fanout: Vec<Vec<usize>> = vec![Vec::new(); gates.len()];
    for (g, gate) in gates.iter().enumerate() {
        for &i in &gate.inputs {
            if let Driver::Gate(src) = drivers[i] {
                indegree[g] += 1;
                fanout[src].push(g);
            }
        }
    }
    let mut ready: Vec<usize> = (0..gates.len()).filter(|&g| indegree[g] == 0).collect();
    ready.reverse();
    let mut order = Vec::with_capacity(gates.len());
    while let Some(g) = ready.pop() {
        order.push(g);
        for &h in fanout[g].iter().rev() {
            indegree[h] -= 1;
            if indegree[h] == 0 {
                ready.push(h);
            }
        }
    }
    if order.len() != gates.len() {
        let stuck = (0..gates.len()).find(|&g| indegree[g] > 0).unwrap();
        return Err(NetlistError::Cycle(names[gates[stuck].output].clone()));
    }
    Ok(order)
}
