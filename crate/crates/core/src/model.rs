//! One-cycle combinational equivalent of a keyed scan transaction.
//!
//! Model inputs are the flat stimulus (channel-major, same layout as the
//! oracle) followed by the primary inputs; outputs are the flat response
//! followed by the primary outputs. Key inputs come in groups, in this order:
//! static scan key, scramble selects, DOS seed, RLL key.
//!
//! For a cell at slice `i` of chain `j` without scrambling:
//!
//! ```text
//! a'[j][i] = D(a)[j][i] ^ L(k, j, i)     L = XOR of key bits at boundaries <= i
//! b[c][i]  = XOR_{j in c} (b'[j][i] ^ R(k, j, i))   R = XOR at boundaries > i
//! ```
//!
//! Scrambled designs are modeled by unrolling the shift network symbolically.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::bench::write_bench;
use crate::defense::{DefenseError, GoldenSecret, Lfsr, ObfuscatedDesign};
use crate::netlist::{GateKind, NetId, Netlist, NetlistBuilder, NetlistError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyGroupKind {
    Static,
    Scramble,
    Seed,
    Rll,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyGroup {
    pub kind: KeyGroupKind,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Static XOR and/or scramble obfuscation, key = static ++ scramble ++ RLL.
    Static,
    /// DOS key window `j` (1-based), key = seed ++ RLL.
    Dynamic(u64),
    /// Scan obfuscation ignored; only RLL key inputs remain.
    Naive,
}

#[derive(Debug, Clone)]
pub struct LockedModel {
    pub netlist: Netlist,
    pub kind: ModelKind,
    pub channels: usize,
    pub depth: usize,
    pub key_groups: Vec<KeyGroup>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sig {
    C(bool),
    N(NetId),
}

struct Gen {
    b: NetlistBuilder,
    consts: [Option<NetId>; 2],
}

impl Gen {
    fn net(&mut self, s: Sig) -> NetId {
        match s {
            Sig::N(n) => n,
            Sig::C(v) => {
                let i = usize::from(v);
                if let Some(n) = self.consts[i] {
                    return n;
                }
                let kind = if v { GateKind::Const1 } else { GateKind::Const0 };
                let n = self.b.gate_fresh(kind, &[], if v { "one" } else { "zero" });
                self.consts[i] = Some(n);
                n
            }
        }
    }

    fn xor(&mut self, a: Sig, b: Sig, base: &str) -> Sig {
        match (a, b) {
            (Sig::C(x), Sig::C(y)) => Sig::C(x ^ y),
            (Sig::C(false), s) | (s, Sig::C(false)) => s,
            (Sig::C(true), Sig::N(n)) | (Sig::N(n), Sig::C(true)) => Sig::N(self.b.gate_fresh(GateKind::Not, &[n], base)),
            (Sig::N(x), Sig::N(y)) => Sig::N(self.b.gate_fresh(GateKind::Xor, &[x, y], base)),
        }
    }

    fn xor_all(&mut self, sigs: &[Sig], base: &str) -> Sig {
        sigs.iter().fold(Sig::C(false), |acc, &s| self.xor(acc, s, base))
    }

    fn mux(&mut self, sel: Sig, in0: Sig, in1: Sig, base: &str) -> Sig {
        if in0 == in1 {
            return in0;
        }
        match sel {
            Sig::C(v) => {
                if v {
                    in1
                } else {
                    in0
                }
            }
            Sig::N(s) => {
                let (a, b) = (self.net(in0), self.net(in1));
                Sig::N(self.b.gate_fresh(GateKind::Mux2, &[s, a, b], base))
            }
        }
    }
}

/// XOR network from `width` seed inputs to the `j`-th LFSR state.
pub fn seed_to_key_block(lfsr: &Lfsr, j: u64) -> Netlist {
    let mut g = Gen {
        b: NetlistBuilder::new(),
        consts: [None, None],
    };
    let seed: Vec<Sig> = (0..lfsr.width()).map(|i| Sig::N(g.b.key_input(&format!("keyinput{i}")))).collect();
    let keys = seed_to_key(&mut g, lfsr, j, &seed);
    for (i, k) in keys.into_iter().enumerate() {
        let n = g.net(k);
        let out = g.b.gate(GateKind::Buf, &[n], &format!("key{i}"));
        g.b.output(out);
    }
    g.b.build().expect("seed-to-key block is well formed")
}

fn seed_to_key(g: &mut Gen, lfsr: &Lfsr, j: u64, seed: &[Sig]) -> Vec<Sig> {
    lfsr.key_matrix(j)
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let terms: Vec<Sig> = row.iter().zip(seed).filter(|(&r, _)| r).map(|(_, &s)| s).collect();
            g.xor_all(&terms, &format!("s2k_{i}"))
        })
        .collect()
}

impl LockedModel {
    pub fn build(d: &ObfuscatedDesign, kind: ModelKind) -> Result<Self, DefenseError> {
        d.validate()?;
        match kind {
            ModelKind::Static if d.dos.is_some() => {
                return Err(DefenseError::Invalid("DOS designs need a dynamic model".into()))
            }
            ModelKind::Dynamic(_) if d.dos.is_none() => {
                return Err(DefenseError::Invalid("design has no DOS block".into()))
            }
            ModelKind::Dynamic(0) => return Err(DefenseError::Invalid("key index is 1-based".into())),
            _ => {}
        }
        let n = &d.netlist;
        let x = d.arch.num_chains();
        let depth = d.depth();
        let channels = d.channels();
        let mut g = Gen {
            b: NetlistBuilder::new(),
            consts: [None, None],
        };
        for id in 0..n.num_nets() {
            g.b.reserve(n.net_name(id));
        }

        let a: Vec<Sig> = (0..channels * depth)
            .map(|f| {
                let name = g.b.fresh(&format!("si{}_{}", f / depth, f % depth));
                Sig::N(g.b.input(&name))
            })
            .collect();
        for &i in n.inputs() {
            g.b.input(n.net_name(i));
        }

        let mut key_groups = Vec::new();
        let mut key_count = 0;
        let mut group = |g: &mut Gen, kind: KeyGroupKind, len: usize, base: &str| -> Vec<Sig> {
            let sigs: Vec<Sig> = (0..len)
                .map(|k| {
                    let name = g.b.fresh(&format!("keyinput_{base}{k}"));
                    Sig::N(g.b.key_input(&name))
                })
                .collect();
            if len > 0 {
                key_groups.push(KeyGroup {
                    kind,
                    range: key_count..key_count + len,
                });
                key_count += len;
            }
            sigs
        };

        // key signal XORed in at each boundary
        let mut at: Vec<Vec<Vec<Sig>>> = vec![vec![Vec::new(); depth]; x];
        let mut mux_sel: Vec<Vec<Option<(Sig, [usize; 2])>>> = vec![vec![None; depth]; x];
        match kind {
            ModelKind::Naive => {}
            ModelKind::Static => {
                let sk = group(&mut g, KeyGroupKind::Static, d.static_gates.len(), "s");
                for (b, &s) in d.static_gates.iter().zip(&sk) {
                    at[b.chain][b.slice].push(s);
                }
                let mk = group(&mut g, KeyGroupKind::Scramble, d.muxes.len(), "m");
                for (m, &s) in d.muxes.iter().zip(&mk) {
                    mux_sel[m.chain][m.slice] = Some((s, m.sources));
                }
            }
            ModelKind::Dynamic(j) => {
                let dos = d.dos.as_ref().expect("checked above");
                let seed = group(&mut g, KeyGroupKind::Seed, dos.lfsr.width(), "seed");
                let keys = seed_to_key(&mut g, &dos.lfsr, j, &seed);
                for b in &dos.gates {
                    at[b.chain][b.slice].push(keys[b.slice]);
                }
                // static gates and MUXes next to a DOS block are not modeled
                if !d.static_gates.is_empty() || !d.muxes.is_empty() {
                    return Err(DefenseError::Invalid(
                        "DOS combined with static or scramble obfuscation is not supported".into(),
                    ));
                }
            }
        }
        for &k in n.keys() {
            g.b.key_input(n.net_name(k));
        }
        if !n.keys().is_empty() {
            key_groups.push(KeyGroup {
                kind: KeyGroupKind::Rll,
                range: key_count..key_count + n.keys().len(),
            });
        }
        let boundary: Vec<Vec<Sig>> = (0..x)
            .map(|j| (0..depth).map(|i| g.xor_all(&at[j][i].clone(), &format!("bk_{j}_{i}"))).collect())
            .collect();
        let scrambled = mux_sel.iter().flatten().any(Option::is_some);

        // load
        let delivered: Vec<Vec<Sig>> = if !scrambled {
            (0..x)
                .map(|j| {
                    let ch = d.compression.channel_of(j);
                    let mut prefix = Sig::C(false);
                    (0..depth)
                        .map(|i| {
                            prefix = g.xor(prefix, boundary[j][i], &format!("L_{j}_{i}"));
                            g.xor(a[ch * depth + i], prefix, &format!("ap_{j}_{i}"))
                        })
                        .collect()
                })
                .collect()
        } else {
            let mut st = vec![vec![Sig::C(false); depth]; x];
            for t in 0..depth {
                let ins: Vec<Sig> = (0..x).map(|j| a[d.compression.channel_of(j) * depth + depth - 1 - t]).collect();
                st = shift(&mut g, &st, &ins, &mux_sel, &boundary, "ld");
            }
            st
        };

        // capture
        let mut sig: Vec<Option<Sig>> = vec![None; n.num_nets()];
        for &i in n.inputs() {
            sig[i] = Some(Sig::N(g.b.net(n.net_name(i))));
        }
        for &k in n.keys() {
            sig[k] = Some(Sig::N(g.b.net(n.net_name(k))));
        }
        for (ff, &(j, i)) in d.arch.locate().iter().enumerate() {
            let q = n.flip_flops()[ff].q;
            let src = g.net(delivered[j][i]);
            g.b.gate(GateKind::Buf, &[src], n.net_name(q));
            sig[q] = Some(Sig::N(g.b.net(n.net_name(q))));
        }
        for &gi in n.topo_order() {
            let gate = &n.gates()[gi];
            let ins: Vec<NetId> = gate.inputs.iter().map(|&i| g.b.net(n.net_name(i))).collect();
            let out = g.b.gate(gate.kind, &ins, n.net_name(gate.output));
            sig[gate.output] = Some(Sig::N(out));
        }
        let mut captured = vec![vec![Sig::C(false); depth]; x];
        for (ff, &(j, i)) in d.arch.locate().iter().enumerate() {
            captured[j][i] = sig[n.flip_flops()[ff].d].expect("every net is driven");
        }

        // unload
        let mut b = vec![Sig::C(false); channels * depth];
        if !scrambled {
            for j in 0..x {
                let c = d.compression.channel_of(j);
                let mut suffix = Sig::C(false);
                for i in (0..depth).rev() {
                    let bit = g.xor(captured[j][i], suffix, &format!("bo_{j}_{i}"));
                    b[c * depth + i] = g.xor(b[c * depth + i], bit, &format!("cmp_{c}_{i}"));
                    suffix = g.xor(suffix, boundary[j][i], &format!("R_{j}_{i}"));
                }
            }
        } else {
            let mut st = captured;
            let zeros = vec![Sig::C(false); x];
            for t in 0..depth {
                for (c, grp) in d.compression.compactor.iter().enumerate() {
                    let lasts: Vec<Sig> = grp.iter().map(|&j| st[j][depth - 1]).collect();
                    b[c * depth + depth - 1 - t] = g.xor_all(&lasts, &format!("cmp_{c}_{t}"));
                }
                if t + 1 < depth {
                    st = shift(&mut g, &st, &zeros, &mux_sel, &boundary, "ul");
                }
            }
        }
        for (f, &s) in b.iter().enumerate() {
            let src = g.net(s);
            let name = g.b.fresh(&format!("so{}_{}", f / depth, f % depth));
            let out = g.b.gate(GateKind::Buf, &[src], &name);
            g.b.output(out);
        }
        for &o in n.outputs() {
            let id = g.b.net(n.net_name(o));
            g.b.output(id);
        }
        let netlist = g.b.build()?;
        Ok(Self {
            netlist,
            kind,
            channels,
            depth,
            key_groups,
        })
    }

    pub fn scan_bits(&self) -> usize {
        self.channels * self.depth
    }

    pub fn num_pis(&self) -> usize {
        self.netlist.inputs().len() - self.scan_bits()
    }

    pub fn num_pos(&self) -> usize {
        self.netlist.outputs().len() - self.scan_bits()
    }

    pub fn key_len(&self) -> usize {
        self.netlist.keys().len()
    }

    pub fn group(&self, kind: KeyGroupKind) -> Option<Range<usize>> {
        self.key_groups.iter().find(|g| g.kind == kind).map(|g| g.range.clone())
    }

    /// Key vector of `secret` in this model's input order.
    pub fn key_of(&self, secret: &GoldenSecret) -> Vec<bool> {
        let mut k = Vec::with_capacity(self.key_len());
        match self.kind {
            ModelKind::Static => {
                k.extend(&secret.static_key);
                k.extend(&secret.scramble_key);
            }
            ModelKind::Dynamic(_) => k.extend(secret.dos.as_ref().map(|d| d.seed.as_slice()).unwrap_or(&[])),
            ModelKind::Naive => {}
        }
        k.extend(&secret.rll_key);
        k
    }

    /// Split a model key back into secret fields. The DOS period is not part
    /// of the model; `p` fills it in and updates are left uncapped.
    pub fn secret_of(&self, key: &[bool], p: Option<u64>) -> GoldenSecret {
        let take = |kind| self.group(kind).map(|r| key[r].to_vec()).unwrap_or_default();
        GoldenSecret {
            static_key: take(KeyGroupKind::Static),
            scramble_key: take(KeyGroupKind::Scramble),
            dos: self.group(KeyGroupKind::Seed).map(|r| crate::defense::DosSecret {
                seed: key[r].to_vec(),
                p: p.unwrap_or(1),
                max_updates: u64::MAX,
            }),
            rll_key: take(KeyGroupKind::Rll),
        }
    }

    /// `(b, po)` for stimulus `a`, primary inputs `pi` and model key `key`.
    pub fn eval(&self, a: &[bool], pi: &[bool], key: &[bool]) -> Result<(Vec<bool>, Vec<bool>), NetlistError> {
        let mut ins = a.to_vec();
        ins.extend_from_slice(pi);
        let (mut out, _) = self.netlist.evaluate_keyed(&ins, key, &[])?;
        let po = out.split_off(self.scan_bits());
        Ok((out, po))
    }

    pub fn to_bench(&self) -> String {
        write_bench(&self.netlist)
    }
}

fn shift(
    g: &mut Gen,
    st: &[Vec<Sig>],
    ins: &[Sig],
    mux_sel: &[Vec<Option<(Sig, [usize; 2])>>],
    boundary: &[Vec<Sig>],
    tag: &str,
) -> Vec<Vec<Sig>> {
    let depth = st[0].len();
    (0..st.len())
        .map(|j| {
            (0..depth)
                .map(|i| {
                    let src = if i == 0 {
                        ins[j]
                    } else if let Some((sel, [s0, s1])) = mux_sel[j][i] {
                        g.mux(sel, st[s0][i - 1], st[s1][i - 1], &format!("{tag}m_{j}_{i}"))
                    } else {
                        st[j][i - 1]
                    };
                    g.xor(src, boundary[j][i], &format!("{tag}x_{j}_{i}"))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{synthetic, SynthParams};
    use crate::defense::Boundary;
    use crate::scanarch::{build_scan, StitchPolicy};

    fn design(x: usize) -> ObfuscatedDesign {
        let n = synthetic(&SynthParams::new(3, 2, 6, 40), 1);
        let arch = build_scan(&n, x, StitchPolicy::DeclarationOrder).unwrap();
        ObfuscatedDesign::new(n, arch)
    }

    #[test]
    fn model_is_combinational_with_expected_interface() {
        let d = design(2).insert_static(3, 1).unwrap().0;
        let m = LockedModel::build(&d, ModelKind::Static).unwrap();
        assert!(m.netlist.flip_flops().is_empty());
        assert_eq!(m.scan_bits(), 6);
        assert_eq!(m.num_pis(), 3);
        assert_eq!(m.num_pos(), 2);
        assert_eq!(m.key_len(), 3);
        assert!(m.to_bench().contains("INPUT(keyinput_s0)"));
        assert!(LockedModel::build(&d, ModelKind::Dynamic(1)).is_err());
    }

    #[test]
    fn fig3_l_and_r_sets() {
        let d = design(1)
            .insert_static_at(&[Boundary::new(0, 2), Boundary::new(0, 4), Boundary::new(0, 5)])
            .unwrap();
        let m = LockedModel::build(&d, ModelKind::Static).unwrap();
        let ones = vec![true; 3];
        let zeros = vec![false; 3];
        // stimulus side: probe the BUF feeding each flip-flop
        let mut ins = vec![false; 6];
        ins.extend([false; 3]);
        let vals = m.netlist.net_values(&widen(&ins), &widen(&ones), &[]).unwrap();
        let base = m.netlist.net_values(&widen(&ins), &widen(&zeros), &[]).unwrap();
        let arch = &d.arch;
        let inverted: Vec<usize> = (0..6)
            .filter(|&i| {
                let ff = arch.cell(0, i).unwrap();
                let q = m.netlist.net_id(d.netlist.net_name(d.netlist.flip_flops()[ff].q)).unwrap();
                vals[q] != base[q]
            })
            .collect();
        assert_eq!(inverted, vec![2, 3, 5]);
    }

    fn widen(b: &[bool]) -> Vec<u64> {
        b.iter().map(|&v| if v { !0 } else { 0 }).collect()
    }

    #[test]
    fn seed_block_j1_is_identity() {
        let l = Lfsr::primitive(6).unwrap();
        let blk = seed_to_key_block(&l, 1);
        assert!(blk.gates().iter().all(|g| g.kind == GateKind::Buf));
        for j in 1..5 {
            let blk = seed_to_key_block(&l, j);
            assert!(blk
                .gates()
                .iter()
                .all(|g| matches!(g.kind, GateKind::Xor | GateKind::Buf)));
        }
    }
}
