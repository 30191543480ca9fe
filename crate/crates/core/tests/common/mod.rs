#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scansat::circuits::{s27, synthetic, SynthParams};
use scansat::defense::{Boundary, DosSpec, GoldenSecret, Lfsr, ObfuscatedDesign, RllGate};
use scansat::netlist::{GateKind, Netlist};
use scansat::scanarch::{build_scan, StitchPolicy};
use scansat::Oracle;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bits(rng: &mut impl Rng, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.gen()).collect()
}

pub fn s386_scale(seed: u64) -> Netlist {
    synthetic(&SynthParams::s386_scale(), seed)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Combo {
    pub chains: usize,
    pub ratio: usize,
    pub static_bits: usize,
    pub mux_bits: usize,
    /// (p, alpha, max_updates)
    pub dos: Option<(u64, f64, u64)>,
    pub rll_bits: usize,
}

pub fn lock(n: &Netlist, c: Combo, seed: u64) -> (ObfuscatedDesign, GoldenSecret) {
    let arch = build_scan(n, c.chains, StitchPolicy::SeededRandom { seed }).unwrap();
    let mut d = ObfuscatedDesign::new(n.clone(), arch).with_compression(c.ratio.max(1)).unwrap();
    let mut g = GoldenSecret::default();
    if c.rll_bits > 0 {
        let (dd, spec) = d.apply_rll(c.rll_bits, seed ^ 0x11).unwrap();
        d = dd;
        g.rll_key = spec.key;
    }
    if c.static_bits > 0 {
        let (dd, spec) = d.insert_static(c.static_bits, seed ^ 0x22).unwrap();
        d = dd;
        g.static_key = spec.key;
    }
    if c.mux_bits > 0 {
        let (dd, spec) = d.insert_scramble(c.mux_bits, seed ^ 0x33).unwrap();
        d = dd;
        g.scramble_key = spec.key;
    }
    if let Some((p, alpha, max_updates)) = c.dos {
        let width = d.depth();
        let lfsr = Lfsr::primitive(width).unwrap();
        let mut r = rng(seed ^ 0x44);
        let mut s = bits(&mut r, width);
        if !s.iter().any(|&b| b) {
            s[0] = true;
        }
        let spec = DosSpec::derive(&d.arch, lfsr, s, p, alpha, max_updates, seed ^ 0x55).unwrap();
        d = d.attach_dos(&spec).unwrap();
        g.dos = Some(spec.secret());
    }
    (d, g)
}

/// s27 + RLL key 101 + static scan key (1,0) on a single 3-cell chain.
pub fn s27_fig5() -> (ObfuscatedDesign, GoldenSecret) {
    let n = s27();
    let arch = build_scan(&n, 1, StitchPolicy::DeclarationOrder).unwrap();
    let gates = vec![
        RllGate { net: "G8".into(), kind: GateKind::Xnor },
        RllGate { net: "G9".into(), kind: GateKind::Xor },
        RllGate { net: "G10".into(), kind: GateKind::Xnor },
    ];
    let (d, rll) = ObfuscatedDesign::new(n, arch).apply_rll_at(&gates).unwrap();
    let d = d.insert_static_at(&[Boundary::new(0, 1), Boundary::new(0, 2)]).unwrap();
    (
        d,
        GoldenSecret {
            static_key: vec![true, false],
            rll_key: rll.key,
            ..Default::default()
        },
    )
}

pub fn int_to_bits(v: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| v >> i & 1 == 1).collect()
}

/// Static/scramble/RLL keys (model order) consistent with every logged
/// observation, found by building one chip per key and replaying.
pub fn exhaustive_filter(d: &ObfuscatedDesign, log: &[scansat::attack::Dip]) -> Vec<Vec<bool>> {
    let (ns, nm, nr) = (d.static_gates.len(), d.muxes.len(), d.netlist.keys().len());
    let total = ns + nm + nr;
    assert!(total <= 16, "too many key bits to brute force");
    let mut out = Vec::new();
    for v in 0..1u64 << total {
        let k = int_to_bits(v, total);
        let g = GoldenSecret {
            static_key: k[..ns].to_vec(),
            scramble_key: k[ns..ns + nm].to_vec(),
            rll_key: k[ns + nm..].to_vec(),
            dos: None,
        };
        let mut o = Oracle::new(d.clone(), g).unwrap();
        if log.iter().all(|dip| o.scan_transaction(&dip.a, &dip.pi).unwrap() == (dip.b.clone(), dip.po.clone())) {
            out.push(k);
        }
    }
    out
}
