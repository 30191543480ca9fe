//! Built-in circuits: ISCAS-89 s27 and a seeded generator of random
//! sequential netlists for desk-scale experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netlist::{GateKind, NetId, Netlist, NetlistBuilder};

pub const S27_BENCH: &str = "\
# s27
INPUT(G0)
INPUT(G1)
INPUT(G2)
INPUT(G3)
OUTPUT(G17)
G5 = DFF(G10)
G6 = DFF(G11)
G7 = DFF(G13)
G14 = NOT(G0)
G17 = NOT(G11)
G8 = AND(G14, G6)
G15 = OR(G12, G8)
G16 = OR(G3, G8)
G9 = NAND(G16, G15)
G10 = NOR(G14, G11)
G11 = NOR(G5, G9)
G12 = NOR(G1, G7)
G13 = NOR(G2, G12)
";

pub fn s27() -> Netlist {
    crate::bench::parse_bench(S27_BENCH).expect("built-in s27 parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SynthParams {
    pub inputs: usize,
    pub outputs: usize,
    pub flip_flops: usize,
    pub gates: usize,
}

impl SynthParams {
    pub fn new(inputs: usize, outputs: usize, flip_flops: usize, gates: usize) -> Self {
        Self {
            inputs,
            outputs,
            flip_flops,
            gates,
        }
    }

    /// Interface of s386: 7 PIs, 7 POs, 6 flip-flops, ~160 gates.
    pub fn s386_scale() -> Self {
        Self::new(7, 7, 6, 160)
    }
}

/// Random sequential netlist. Every PI and flip-flop output feeds at least
/// one gate; POs and next-state nets come from the last gates created.
pub fn synthetic(p: &SynthParams, seed: u64) -> Netlist {
    assert!(p.inputs + p.flip_flops >= 1, "need at least one source net");
    let gates = p.gates.max(p.outputs + p.flip_flops).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = NetlistBuilder::new();
    let mut pool: Vec<NetId> = (0..p.inputs).map(|i| b.input(&format!("I{i}"))).collect();
    let qs: Vec<String> = (0..p.flip_flops).map(|i| format!("Q{i}")).collect();
    pool.extend(qs.iter().map(|q| b.net(q)));
    let mut unused: Vec<NetId> = pool.clone();
    unused.shuffle(&mut rng);
    let kinds = [
        GateKind::And,
        GateKind::Nand,
        GateKind::Or,
        GateKind::Nor,
        GateKind::Xor,
        GateKind::Xnor,
        GateKind::Not,
    ];
    for g in 0..gates {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let arity = match kind {
            GateKind::Not => 1,
            GateKind::Xor | GateKind::Xnor => 2,
            _ => rng.gen_range(2..=3),
        };
        let mut ins: Vec<NetId> = Vec::with_capacity(arity);
        while ins.len() < arity {
            let pick = if let Some(u) = unused.pop() {
                u
            } else {
                // bias towards recent nets to get depth
                let lo = pool.len().saturating_sub(24);
                let i = if rng.gen_bool(0.7) { rng.gen_range(lo..pool.len()) } else { rng.gen_range(0..pool.len()) };
                pool[i]
            };
            if !ins.contains(&pick) {
                ins.push(pick);
            } else if pool.len() <= ins.len() {
                break;
            }
        }
        let kind = if ins.len() == 1 && kind != GateKind::Not { GateKind::Not } else { kind };
        let out = b.gate(kind, &ins, &format!("N{g}"));
        pool.push(out);
    }
    let sinks = p.outputs + p.flip_flops;
    let tail: Vec<NetId> = pool[pool.len() - sinks.min(gates)..].to_vec();
    for i in 0..p.flip_flops {
        let d = tail[i % tail.len()];
        b.dff(&qs[i], d);
    }
    for i in 0..p.outputs {
        b.output(tail[(p.flip_flops + i) % tail.len()]);
    }
    b.build().expect("generator produces valid netlists")
}
