mod common;

use std::collections::HashSet;

use common::*;
use proptest::prelude::*;
use scansat::attack::{dynamic_attack, enumerate_keys, sat_attack, AttackConfig};
use scansat::bench::{parse_bench, write_bench};
use scansat::circuits::{synthetic, SynthParams};
use scansat::defense::{Boundary, DosSpec, GoldenSecret, Lfsr, ObfuscatedDesign};
use scansat::netlist::{GateKind, Netlist, NetlistBuilder};
use scansat::scanarch::{build_scan, StitchPolicy};
use scansat::solver::SolverSession;
use scansat::{LockedModel, ModelKind, Oracle};

/// `cells` flip-flops with `d_i = sel ? q_i : pi_i`. With `sel = 0` the
/// capture overwrites every cell from the PIs, with `sel = 1` it holds.
fn probe_circuit(cells: usize) -> Netlist {
    let mut b = NetlistBuilder::new();
    let sel = b.input("sel");
    let pis: Vec<_> = (0..cells).map(|i| b.input(&format!("pi{i}"))).collect();
    for i in 0..cells {
        let q = b.net(&format!("q{i}"));
        let d = b.gate(GateKind::Mux2, &[sel, pis[i], q], &format!("d{i}"));
        b.dff(&format!("q{i}"), d);
        b.output(d);
    }
    b.build().unwrap()
}

/// Per-slice stimulus and response inversion read off the chip.
fn inversion_pattern(o: &mut Oracle, cells: usize) -> (Vec<bool>, Vec<bool>) {
    let zero_a = vec![false; o.scan_bits()];
    let mut pi = vec![false; cells + 1];
    // capture zeros from the PIs: b = R
    let (r, _) = o.scan_transaction(&zero_a, &pi).unwrap();
    // hold: b = L xor R
    pi[0] = true;
    let (lr, _) = o.scan_transaction(&zero_a, &pi).unwrap();
    let l = lr.iter().zip(&r).map(|(x, y)| x ^ y).collect();
    (l, r)
}

fn single_chain(n: &Netlist) -> ObfuscatedDesign {
    ObfuscatedDesign::new(n.clone(), build_scan(n, 1, StitchPolicy::DeclarationOrder).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn static_keys_induce_distinct_inversion_patterns(cells in 2usize..7, mask in 1u32..128) {
        let n = probe_circuit(cells);
        let sites: Vec<Boundary> = (0..cells).filter(|i| mask >> i & 1 == 1).map(|i| Boundary::new(0, i)).collect();
        prop_assume!(!sites.is_empty());
        let d = single_chain(&n).insert_static_at(&sites).unwrap();
        let mut seen = HashSet::new();
        for v in 0..1u64 << sites.len() {
            let g = GoldenSecret { static_key: int_to_bits(v, sites.len()), ..Default::default() };
            let mut o = Oracle::new(d.clone(), g).unwrap();
            prop_assert!(seen.insert(inversion_pattern(&mut o, cells)), "key {} collides", v);
        }
    }

    #[test]
    fn flush_inverts_every_bit_by_chain_key_parity(seed in 0u64..1000, chains in 1usize..4, k in 1usize..8) {
        let n = synthetic(&SynthParams::new(4, 3, 9, 60), seed);
        let arch = build_scan(&n, chains, StitchPolicy::SeededRandom { seed }).unwrap();
        let (d, spec) = ObfuscatedDesign::new(n, arch).insert_static(k, seed).unwrap();
        let g = GoldenSecret { static_key: spec.key.clone(), ..Default::default() };
        let mut o = Oracle::new(d.clone(), g).unwrap();
        let depth = d.depth();
        let mut r = rng(seed);
        let a = bits(&mut r, o.scan_bits());
        let b = o.flush(&a).unwrap();
        for c in 0..chains {
            let parity = spec.placements.iter().zip(&spec.key).filter(|(p, _)| p.chain == c).fold(false, |acc, (_, &v)| acc ^ v);
            for i in 0..depth {
                prop_assert_eq!(b[c * depth + i], a[c * depth + i] ^ parity);
            }
        }
    }

    #[test]
    fn every_surviving_key_reproduces_the_dip_log(seed in 0u64..1000, k in 2usize..10, ratio in prop::sample::select(vec![1usize, 2])) {
        let n = synthetic(&SynthParams::new(5, 4, 10, 80), seed);
        let (d, g) = lock(&n, Combo { chains: 2, ratio, static_bits: k, ..Default::default() }, seed);
        let mut o = Oracle::new(d.clone(), g).unwrap();
        let m = LockedModel::build(&d, ModelKind::Static).unwrap();
        let mut s = SolverSession::new();
        let (res, kv) = sat_attack(&m, &mut o, &AttackConfig { max_dips: 2, ..Default::default() }, &mut s).unwrap();
        for key in enumerate_keys(&mut s, &kv, 64) {
            let mut replay = Oracle::new(d.clone(), m.secret_of(&key, None)).unwrap();
            for dip in &res.dip_log {
                prop_assert_eq!(replay.scan_transaction(&dip.a, &dip.pi).unwrap(), (dip.b.clone(), dip.po.clone()));
            }
        }
    }

    #[test]
    fn bench_round_trip_is_stable(seed in 0u64..10_000, ins in 1usize..8, ffs in 1usize..12) {
        let n = synthetic(&SynthParams::new(ins, 3, ffs, 20 + 5 * ffs), seed);
        let text = write_bench(&n);
        let back = parse_bench(&text).unwrap();
        prop_assert_eq!(write_bench(&back), text);
        let mut r = rng(seed);
        for _ in 0..16 {
            let pi = bits(&mut r, ins);
            let st = bits(&mut r, ffs);
            prop_assert_eq!(back.evaluate(&pi, &st).unwrap(), n.evaluate(&pi, &st).unwrap());
        }
    }

    #[test]
    fn dos_key_window_follows_capture_count(seed in 0u64..1000, p in 1u64..5, max_updates in 0u64..6) {
        let n = synthetic(&SynthParams::new(4, 3, 6, 50), seed);
        let arch = build_scan(&n, 2, StitchPolicy::SeededRandom { seed }).unwrap();
        let d = ObfuscatedDesign::new(n, arch);
        let mut r = rng(seed);
        let mut s0 = bits(&mut r, 3);
        s0[0] = true;
        let spec = DosSpec::derive(&d.arch, Lfsr::primitive(3).unwrap(), s0, p, 1.0, max_updates, seed).unwrap();
        let d = d.attach_dos(&spec).unwrap();
        let g = GoldenSecret { dos: Some(spec.secret()), ..Default::default() };
        let mut o = Oracle::new(d.clone(), g.clone()).unwrap();
        let a = bits(&mut r, o.scan_bits());
        let pi = bits(&mut r, o.num_pis());
        o.scan_transaction(&a, &pi).unwrap();
        for m in 2..=16u64 {
            let j = m.div_ceil(p).min(max_updates + 1);
            let model = LockedModel::build(&d, ModelKind::Dynamic(j)).unwrap();
            let a = bits(&mut r, o.scan_bits());
            let pi = bits(&mut r, o.num_pis());
            prop_assert_eq!(o.scan_transaction(&a, &pi).unwrap(), model.eval(&a, &pi, &model.key_of(&g)).unwrap(), "pattern {}", m);
        }
    }

    #[test]
    fn ratio_one_is_the_uncompressed_design(seed in 0u64..1000, k in 1usize..6) {
        let n = synthetic(&SynthParams::new(4, 3, 8, 60), seed);
        let arch = build_scan(&n, 2, StitchPolicy::SeededRandom { seed }).unwrap();
        let (d, spec) = ObfuscatedDesign::new(n, arch).insert_static(k, seed).unwrap();
        let d1 = d.clone().with_compression(1).unwrap();
        let g = GoldenSecret { static_key: spec.key, ..Default::default() };
        let m0 = LockedModel::build(&d, ModelKind::Static).unwrap();
        let m1 = LockedModel::build(&d1, ModelKind::Static).unwrap();
        prop_assert_eq!(m0.to_bench(), m1.to_bench());
        let mut r = rng(seed);
        let key = m0.key_of(&g);
        for _ in 0..16 {
            let a = bits(&mut r, m0.scan_bits());
            let pi = bits(&mut r, 4);
            prop_assert_eq!(m0.eval(&a, &pi, &key).unwrap(), m1.eval(&a, &pi, &key).unwrap());
        }
    }

    #[test]
    fn compressed_chip_is_fanout_then_xor_of_the_uncompressed_chip(seed in 0u64..1000, ratio in prop::sample::select(vec![2usize, 4]), k in 0usize..6) {
        let n = synthetic(&SynthParams::new(4, 3, 11, 70), seed);
        let arch = build_scan(&n, 4, StitchPolicy::SeededRandom { seed }).unwrap();
        let base = ObfuscatedDesign::new(n, arch);
        let (base, key) = if k > 0 {
            let (d, spec) = base.insert_static(k, seed).unwrap();
            (d, spec.key)
        } else {
            (base, vec![])
        };
        let comp = base.clone().with_compression(ratio).unwrap();
        let g = GoldenSecret { static_key: key, ..Default::default() };
        let mut wide = Oracle::new(base.clone(), g.clone()).unwrap();
        let mut narrow = Oracle::new(comp.clone(), g).unwrap();
        let depth = base.depth();
        let mut r = rng(seed);
        for _ in 0..16 {
            let a = bits(&mut r, narrow.scan_bits());
            let pi = bits(&mut r, narrow.num_pis());
            let mut expanded = vec![false; wide.scan_bits()];
            for j in 0..4 {
                let c = comp.compression.channel_of(j);
                expanded[j * depth..(j + 1) * depth].copy_from_slice(&a[c * depth..(c + 1) * depth]);
            }
            let (wb, wpo) = wide.scan_transaction(&expanded, &pi).unwrap();
            let mut want = vec![false; narrow.scan_bits()];
            for j in 0..4 {
                let c = comp.compression.channel_of(j);
                for i in 0..depth {
                    want[c * depth + i] ^= wb[j * depth + i];
                }
            }
            prop_assert_eq!(narrow.scan_transaction(&a, &pi).unwrap(), (want, wpo));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn resolved_seed_bits_never_change(seed in 0u64..1000, lambda in 4usize..9) {
        let n = synthetic(&SynthParams::new(5, 4, 2 * lambda, 40 + 10 * lambda), seed);
        let arch = build_scan(&n, 2, StitchPolicy::SeededRandom { seed }).unwrap();
        let d = ObfuscatedDesign::new(n, arch);
        let mut r = rng(seed);
        let mut s0 = bits(&mut r, lambda);
        s0[lambda - 1] = true;
        let spec = DosSpec::derive(&d.arch, Lfsr::primitive(lambda).unwrap(), s0, 1, 0.5, 1 << 20, seed).unwrap();
        let d = d.attach_dos(&spec).unwrap();
        let mut o = Oracle::new(d.clone(), GoldenSecret { dos: Some(spec.secret()), ..Default::default() }).unwrap();
        let mut s = SolverSession::new();
        let res = dynamic_attack(&d, &mut o, 1, &AttackConfig::default(), &mut s).unwrap();
        for w in res.resolution_trace.windows(2) {
            for (x, y) in w[0].iter().zip(&w[1]) {
                prop_assert!(x.is_none() || x == y);
            }
        }
    }
}
