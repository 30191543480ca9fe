//! Structural view of an obfuscated design: scan MUX in front of every
//! flip-flop, keyed scan path, decompressor fanout and compactor XORs.
//!
//! Scan-path key bits become `keyinput*` inputs so the result reads back as a
//! logic-locked netlist. The DOS shadow chain and control unit are not drawn.

use crate::netlist::{GateKind, NetId, Netlist, NetlistBuilder};

use super::{DefenseError, ObfuscatedDesign};

pub fn scan_inserted_netlist(d: &ObfuscatedDesign) -> Result<Netlist, DefenseError> {
    d.validate()?;
    let n = &d.netlist;
    let x = d.arch.num_chains();
    let depth = d.depth();
    let mut b = NetlistBuilder::new();
    for id in 0..n.num_nets() {
        b.reserve(n.net_name(id));
    }
    for &i in n.inputs() {
        b.input(n.net_name(i));
    }
    for &k in n.keys() {
        b.key_input(n.net_name(k));
    }
    let key = |b: &mut NetlistBuilder, base: String| {
        let name = b.fresh(&base);
        b.key_input(&name)
    };
    let static_keys: Vec<NetId> = (0..d.static_gates.len()).map(|k| key(&mut b, format!("keyinput_s{k}"))).collect();
    let mux_keys: Vec<NetId> = (0..d.muxes.len()).map(|k| key(&mut b, format!("keyinput_m{k}"))).collect();
    let dos_keys: Vec<NetId> = match &d.dos {
        Some(_) => (0..depth).map(|i| key(&mut b, format!("keyinput_dos{i}"))).collect(),
        None => Vec::new(),
    };
    let se_name = b.fresh("scan_enable");
    let se = b.input(&se_name);
    let scan_in: Vec<NetId> = (0..d.channels())
        .map(|c| {
            let name = b.fresh(&format!("scan_in{c}"));
            b.input(&name)
        })
        .collect();

    let q: Vec<Vec<NetId>> = (0..x)
        .map(|j| {
            (0..depth)
                .map(|i| match d.arch.cell(j, i) {
                    Some(ff) => b.net(n.net_name(n.flip_flops()[ff].q)),
                    None => {
                        let name = b.fresh(&format!("scan_pad_{j}_{i}"));
                        b.net(&name)
                    }
                })
                .collect()
        })
        .collect();

    let mut zero = None;
    for j in 0..x {
        for i in 0..depth {
            let mut s = if i == 0 {
                scan_in[d.compression.channel_of(j)]
            } else if let Some(k) = d.muxes.iter().position(|m| m.chain == j && m.slice == i) {
                let m = d.muxes[k];
                b.gate_fresh(
                    GateKind::Mux2,
                    &[mux_keys[k], q[m.sources[0]][i - 1], q[m.sources[1]][i - 1]],
                    &format!("scan_mux_{j}_{i}"),
                )
            } else {
                q[j][i - 1]
            };
            for (k, g) in d.static_gates.iter().enumerate() {
                if g.chain == j && g.slice == i {
                    s = b.gate_fresh(GateKind::Xor, &[s, static_keys[k]], &format!("scan_xor_{j}_{i}"));
                }
            }
            if let Some(dos) = &d.dos {
                if dos.gates.iter().any(|g| g.chain == j && g.slice == i) {
                    s = b.gate_fresh(GateKind::Xor, &[s, dos_keys[i]], &format!("scan_dos_{j}_{i}"));
                }
            }
            let func = match d.arch.cell(j, i) {
                Some(ff) => b.net(n.net_name(n.flip_flops()[ff].d)),
                None => *zero.get_or_insert_with(|| b.gate_fresh(GateKind::Const0, &[], "scan_zero")),
            };
            let dn = b.gate_fresh(GateKind::Mux2, &[se, func, s], &format!("scan_d_{j}_{i}"));
            let qname = b_name(&b, q[j][i]);
            b.dff(&qname, dn);
        }
    }
    for &g in n.topo_order() {
        let gate = &n.gates()[g];
        let ins: Vec<NetId> = gate.inputs.iter().map(|&i| b.net(n.net_name(i))).collect();
        b.gate(gate.kind, &ins, n.net_name(gate.output));
    }
    for &o in n.outputs() {
        let id = b.net(n.net_name(o));
        b.output(id);
    }
    for (c, group) in d.compression.compactor.iter().enumerate() {
        let lasts: Vec<NetId> = group.iter().map(|&j| q[j][depth - 1]).collect();
        let mut acc = lasts[0];
        for &l in &lasts[1..] {
            acc = b.gate_fresh(GateKind::Xor, &[acc, l], &format!("scan_cmp_{c}"));
        }
        let name = b.fresh(&format!("scan_out{c}"));
        let out = b.gate(GateKind::Buf, &[acc], &name);
        b.output(out);
    }
    Ok(b.build()?)
}

fn b_name(b: &NetlistBuilder, id: NetId) -> String {
    b.name_of(id).to_string()
}
