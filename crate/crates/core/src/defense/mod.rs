//! Scan-path and logic-locking defenses.
//!
//! A defense splits into a public part, which a reverse engineer reads off
//! the layout ([`ObfuscatedDesign`]: gate positions, MUX wiring, the LFSR
//! polynomial) and a secret part ([`GoldenSecret`]: key values, DOS seed and
//! update period). Only the [`crate::oracle::Oracle`] ever sees both.

pub mod lfsr;
mod scan_insert;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{GateKind, Netlist, NetlistError};
use crate::scanarch::{build_compression, CompressionSpec, ScanArchitecture, ScanError};

pub use lfsr::Lfsr;
pub use scan_insert::scan_inserted_netlist;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DefenseError {
    #[error("{what}: requested {requested}, only {available} available")]
    TooMany {
        what: &'static str,
        requested: usize,
        available: usize,
    },
    #[error("seed / LFSR state must be nonzero")]
    ZeroSeed,
    #[error("LFSR polynomial: {0}")]
    Polynomial(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("locked netlist differs from the original under the correct key")]
    NotEquivalent,
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

/// Key-gate site on the scan path, directly in front of cell (`chain`, `slice`).
/// Slice 0 means right after the chain's Scan-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Boundary {
    pub chain: usize,
    pub slice: usize,
}

impl Boundary {
    pub fn new(chain: usize, slice: usize) -> Self {
        Self { chain, slice }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticObfSpec {
    pub placements: Vec<Boundary>,
    pub key: Vec<bool>,
}

/// Keyed MUX feeding the scan input of cell (`chain`, `slice`). Key value `v`
/// selects the cell of chain `sources[v]` in slice `slice - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrambleMux {
    pub chain: usize,
    pub slice: usize,
    pub sources: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrambleSpec {
    pub muxes: Vec<ScrambleMux>,
    pub key: Vec<bool>,
    /// For each Scan-in chain, the chain index visited at every slice.
    pub intended_paths: Vec<Vec<usize>>,
}

/// Public view of a DOS block: the LFSR and where its key bits land.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosLayout {
    pub lfsr: Lfsr,
    pub alpha: f64,
    /// XOR sites; the gate in front of slice `i` is driven by key bit `i`.
    pub gates: Vec<Boundary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosSpec {
    pub lfsr: Lfsr,
    pub seed: Vec<bool>,
    pub p: u64,
    pub alpha: f64,
    pub max_updates: u64,
    pub gates: Vec<Boundary>,
}

impl DosSpec {
    /// Size the DOS block for `arch`: key width = depth, and `ceil(alpha * len)`
    /// real boundaries per chain chosen at random.
    pub fn derive(
        arch: &ScanArchitecture,
        lfsr: Lfsr,
        seed: Vec<bool>,
        p: u64,
        alpha: f64,
        max_updates: u64,
        placement_seed: u64,
    ) -> Result<Self, DefenseError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(DefenseError::Invalid(format!("alpha {alpha} outside (0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(placement_seed);
        let mut gates = Vec::new();
        for (j, chain) in arch.chains().iter().enumerate() {
            let len = chain.len();
            let count = ((alpha * len as f64) - 1e-9).ceil().max(1.0) as usize;
            let pad = arch.padding(j);
            let mut slices: Vec<usize> = (pad..arch.depth()).collect();
            slices.shuffle(&mut rng);
            gates.extend(slices[..count.min(len)].iter().map(|&s| Boundary::new(j, s)));
        }
        gates.sort();
        let spec = Self {
            lfsr,
            seed,
            p,
            alpha,
            max_updates,
            gates,
        };
        spec.validate(arch)?;
        Ok(spec)
    }

    pub fn validate(&self, arch: &ScanArchitecture) -> Result<(), DefenseError> {
        if self.lfsr.width() != arch.depth() {
            return Err(DefenseError::Shape(format!(
                "LFSR width {} must equal scan depth {}",
                self.lfsr.width(),
                arch.depth()
            )));
        }
        if self.seed.len() != self.lfsr.width() {
            return Err(DefenseError::Shape("seed width differs from LFSR width".into()));
        }
        if !self.seed.iter().any(|&b| b) {
            return Err(DefenseError::ZeroSeed);
        }
        if self.p == 0 {
            return Err(DefenseError::Invalid("p must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(DefenseError::Invalid(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        check_boundaries(arch, &self.gates)
    }

    pub fn layout(&self) -> DosLayout {
        DosLayout {
            lfsr: self.lfsr.clone(),
            alpha: self.alpha,
            gates: self.gates.clone(),
        }
    }

    pub fn secret(&self) -> DosSecret {
        DosSecret {
            seed: self.seed.clone(),
            p: self.p,
            max_updates: self.max_updates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RllGate {
    pub net: String,
    pub kind: GateKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RllSpec {
    pub gates: Vec<RllGate>,
    pub key: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DosSecret {
    pub seed: Vec<bool>,
    pub p: u64,
    pub max_updates: u64,
}

/// Every secret value of an obfuscated chip.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenSecret {
    pub static_key: Vec<bool>,
    pub scramble_key: Vec<bool>,
    pub dos: Option<DosSecret>,
    pub rll_key: Vec<bool>,
}

impl GoldenSecret {
    pub fn check(&self, design: &ObfuscatedDesign) -> Result<(), DefenseError> {
        let want = |what: &str, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(DefenseError::Shape(format!("{what}: expected {expected} bits, got {got}")))
            }
        };
        want("static key", design.static_gates.len(), self.static_key.len())?;
        want("scramble key", design.muxes.len(), self.scramble_key.len())?;
        want("RLL key", design.netlist.keys().len(), self.rll_key.len())?;
        match (&design.dos, &self.dos) {
            (None, None) => Ok(()),
            (Some(layout), Some(dos)) => {
                want("DOS seed", layout.lfsr.width(), dos.seed.len())?;
                if !dos.seed.iter().any(|&b| b) {
                    return Err(DefenseError::ZeroSeed);
                }
                if dos.p == 0 {
                    return Err(DefenseError::Invalid("p must be at least 1".into()));
                }
                Ok(())
            }
            (Some(_), None) => Err(DefenseError::Shape("design has DOS but secret has no seed".into())),
            (None, Some(_)) => Err(DefenseError::Shape("secret has a seed but design has no DOS".into())),
        }
    }
}

/// What a reverse engineer recovers from the layout: functional netlist
/// (including any RLL key gates), scan stitching, compression and the
/// position of every scan-path key gate. No key values.
#[derive(Debug, Clone)]
pub struct ObfuscatedDesign {
    pub netlist: Netlist,
    pub arch: ScanArchitecture,
    pub compression: CompressionSpec,
    pub static_gates: Vec<Boundary>,
    pub muxes: Vec<ScrambleMux>,
    pub dos: Option<DosLayout>,
    pub rll: Vec<RllGate>,
}

impl ObfuscatedDesign {
    pub fn new(netlist: Netlist, arch: ScanArchitecture) -> Self {
        let chains = arch.num_chains();
        Self {
            netlist,
            arch,
            compression: CompressionSpec::identity(chains),
            static_gates: Vec::new(),
            muxes: Vec::new(),
            dos: None,
            rll: Vec::new(),
        }
    }

    pub fn with_compression(mut self, ratio: usize) -> Result<Self, DefenseError> {
        self.compression = build_compression(&self.arch, ratio)?;
        Ok(self)
    }

    pub fn channels(&self) -> usize {
        self.compression.channels()
    }

    pub fn depth(&self) -> usize {
        self.arch.depth()
    }

    pub fn has_scan_obfuscation(&self) -> bool {
        !self.static_gates.is_empty() || !self.muxes.is_empty() || self.dos.is_some()
    }

    pub fn validate(&self) -> Result<(), DefenseError> {
        if self.arch.num_ffs() != self.netlist.flip_flops().len() {
            return Err(DefenseError::Shape("scan architecture does not cover the netlist".into()));
        }
        self.compression.validate(self.arch.num_chains())?;
        check_boundaries(&self.arch, &self.static_gates)?;
        let mut sorted = self.static_gates.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.static_gates.len() {
            return Err(DefenseError::Invalid("two static key gates on one boundary".into()));
        }
        let x = self.arch.num_chains();
        let mut seen = std::collections::HashSet::new();
        for m in &self.muxes {
            if m.chain >= x || m.slice == 0 || m.slice >= self.depth() || m.sources.iter().any(|&s| s >= x) {
                return Err(DefenseError::Invalid(format!("scramble MUX {m:?} out of range")));
            }
            if !seen.insert((m.chain, m.slice)) {
                return Err(DefenseError::Invalid(format!("two scramble MUXes at {m:?}")));
            }
        }
        if let Some(dos) = &self.dos {
            if dos.lfsr.width() != self.depth() {
                return Err(DefenseError::Shape("DOS width must equal scan depth".into()));
            }
            check_boundaries(&self.arch, &dos.gates)?;
        }
        Ok(())
    }

    /// Every boundary in front of a real (non-padding) cell.
    pub fn real_boundaries(&self) -> Vec<Boundary> {
        (0..self.arch.num_chains())
            .flat_map(|j| (self.arch.padding(j)..self.depth()).map(move |s| Boundary::new(j, s)))
            .collect()
    }

    /// Insert `count` XOR key gates at random free boundaries with a random key.
    pub fn insert_static(&self, count: usize, rng_seed: u64) -> Result<(Self, StaticObfSpec), DefenseError> {
        let mut free: Vec<Boundary> = self
            .real_boundaries()
            .into_iter()
            .filter(|b| !self.static_gates.contains(b))
            .collect();
        if count > free.len() {
            return Err(DefenseError::TooMany {
                what: "static key gates",
                requested: count,
                available: free.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        free.shuffle(&mut rng);
        let mut placements = free[..count].to_vec();
        placements.sort();
        let key = (0..count).map(|_| rng.gen()).collect();
        let spec = StaticObfSpec { placements, key };
        Ok((self.insert_static_at(&spec.placements)?, spec))
    }

    /// Insert XOR key gates at explicit boundaries.
    pub fn insert_static_at(&self, placements: &[Boundary]) -> Result<Self, DefenseError> {
        if !self.static_gates.is_empty() {
            return Err(DefenseError::Invalid("design already carries static key gates".into()));
        }
        let mut d = self.clone();
        d.static_gates = placements.to_vec();
        d.validate()?;
        Ok(d)
    }

    /// Insert `mux_count` scrambling MUXes. MUXes come in swap pairs where
    /// possible, so that the correct key routes a permutation of each slice.
    pub fn insert_scramble(&self, mux_count: usize, rng_seed: u64) -> Result<(Self, ScrambleSpec), DefenseError> {
        let x = self.arch.num_chains();
        let depth = self.depth();
        if x < 2 {
            return Err(DefenseError::Invalid("scrambling needs at least two chains".into()));
        }
        let available = x * (depth - 1);
        if mux_count > available {
            return Err(DefenseError::TooMany {
                what: "scramble MUXes",
                requested: mux_count,
                available,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut free: Vec<Vec<usize>> = (0..depth).map(|s| if s == 0 { vec![] } else { (0..x).collect() }).collect();
        for f in free.iter_mut() {
            f.shuffle(&mut rng);
        }
        let mut muxes = Vec::with_capacity(mux_count);
        let mut key = Vec::with_capacity(mux_count);
        let push = |m: ScrambleMux, correct: usize, rng: &mut ChaCha8Rng, muxes: &mut Vec<ScrambleMux>, key: &mut Vec<bool>| {
            let mut m = m;
            if rng.gen::<bool>() {
                m.sources.swap(0, 1);
            }
            key.push(m.sources[1] == correct);
            muxes.push(m);
        };
        while muxes.len() < mux_count {
            let remaining = mux_count - muxes.len();
            let pair_slices: Vec<usize> = (1..depth).filter(|&s| free[s].len() >= 2).collect();
            if remaining >= 2 && !pair_slices.is_empty() {
                let s = pair_slices[rng.gen_range(0..pair_slices.len())];
                let a = free[s].pop().unwrap();
                let b = free[s].pop().unwrap();
                let crossed: bool = rng.gen();
                let (src_a, src_b) = if crossed { (b, a) } else { (a, b) };
                push(ScrambleMux { chain: a, slice: s, sources: [a, b] }, src_a, &mut rng, &mut muxes, &mut key);
                push(ScrambleMux { chain: b, slice: s, sources: [b, a] }, src_b, &mut rng, &mut muxes, &mut key);
            } else {
                let single: Vec<usize> = (1..depth).filter(|&s| !free[s].is_empty()).collect();
                let s = single[rng.gen_range(0..single.len())];
                let c = free[s].pop().unwrap();
                let mut decoy = rng.gen_range(0..x - 1);
                if decoy >= c {
                    decoy += 1;
                }
                push(ScrambleMux { chain: c, slice: s, sources: [c, decoy] }, c, &mut rng, &mut muxes, &mut key);
            }
        }
        // key index follows (chain, slice) order
        let mut order: Vec<usize> = (0..muxes.len()).collect();
        order.sort_by_key(|&i| (muxes[i].chain, muxes[i].slice));
        let muxes: Vec<ScrambleMux> = order.iter().map(|&i| muxes[i]).collect();
        let key: Vec<bool> = order.iter().map(|&i| key[i]).collect();
        self.insert_scramble_with(&muxes, &key)
    }

    /// Insert explicit MUXes; `key` is the designer's correct select vector.
    pub fn insert_scramble_with(&self, muxes: &[ScrambleMux], key: &[bool]) -> Result<(Self, ScrambleSpec), DefenseError> {
        if !self.muxes.is_empty() {
            return Err(DefenseError::Invalid("design already carries scramble MUXes".into()));
        }
        if muxes.len() != key.len() {
            return Err(DefenseError::Shape("one key bit per MUX".into()));
        }
        for m in muxes {
            if m.sources[0] == m.sources[1] && m.sources[0] != m.chain {
                // duplicate-input MUXes are legal; they just ignore their key bit
            }
        }
        let mut d = self.clone();
        d.muxes = muxes.to_vec();
        d.validate()?;
        let intended_paths = trace_paths(&d, key);
        Ok((
            d,
            ScrambleSpec {
                muxes: muxes.to_vec(),
                key: key.to_vec(),
                intended_paths,
            },
        ))
    }

    pub fn attach_dos(&self, spec: &DosSpec) -> Result<Self, DefenseError> {
        spec.validate(&self.arch)?;
        if self.dos.is_some() {
            return Err(DefenseError::Invalid("design already carries a DOS block".into()));
        }
        let mut d = self.clone();
        d.dos = Some(spec.layout());
        d.validate()?;
        Ok(d)
    }

    /// Random logic locking on the functional netlist.
    pub fn apply_rll(&self, key_size: usize, rng_seed: u64) -> Result<(Self, RllSpec), DefenseError> {
        let (netlist, spec) = apply_rll(&self.netlist, key_size, rng_seed)?;
        let mut d = self.clone();
        d.netlist = netlist;
        d.rll.extend(spec.gates.iter().cloned());
        Ok((d, spec))
    }

    pub fn apply_rll_at(&self, gates: &[RllGate]) -> Result<(Self, RllSpec), DefenseError> {
        let (netlist, spec) = apply_rll_at(&self.netlist, gates)?;
        let mut d = self.clone();
        d.netlist = netlist;
        d.rll.extend(spec.gates.iter().cloned());
        Ok((d, spec))
    }

    /// Chain index feeding cell (`chain`, `slice`) under scramble key `key`
    /// (natural predecessor when no MUX sits there).
    pub fn scan_source(&self, chain: usize, slice: usize, key: &[bool]) -> usize {
        match self.muxes.iter().position(|m| m.chain == chain && m.slice == slice) {
            Some(k) => self.muxes[k].sources[usize::from(key[k])],
            None => chain,
        }
    }
}

fn check_boundaries(arch: &ScanArchitecture, gates: &[Boundary]) -> Result<(), DefenseError> {
    for b in gates {
        if b.chain >= arch.num_chains() || b.slice >= arch.depth() || b.slice < arch.padding(b.chain) {
            return Err(DefenseError::Invalid(format!("boundary {b:?} is not in front of a real cell")));
        }
    }
    Ok(())
}

fn trace_paths(d: &ObfuscatedDesign, key: &[bool]) -> Vec<Vec<usize>> {
    let x = d.arch.num_chains();
    (0..x)
        .map(|start| {
            let mut path = vec![start];
            for s in 1..d.depth() {
                let prev = *path.last().unwrap();
                match (0..x).find(|&c| d.scan_source(c, s, key) == prev) {
                    Some(c) => path.push(c),
                    None => break,
                }
            }
            path
        })
        .collect()
}

/// Insert `key_size` XOR/XNOR key gates after randomly chosen gate outputs.
/// Correct key bit: 0 for XOR, 1 for XNOR.
pub fn apply_rll(n: &Netlist, key_size: usize, rng_seed: u64) -> Result<(Netlist, RllSpec), DefenseError> {
    let mut candidates: Vec<usize> = n
        .gates()
        .iter()
        .filter(|g| !matches!(g.kind, GateKind::Const0 | GateKind::Const1))
        .map(|g| g.output)
        .collect();
    if key_size > candidates.len() {
        return Err(DefenseError::TooMany {
            what: "RLL key gates",
            requested: key_size,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    candidates.shuffle(&mut rng);
    let gates: Vec<RllGate> = candidates[..key_size]
        .iter()
        .map(|&net| RllGate {
            net: n.net_name(net).to_string(),
            kind: if rng.gen() { GateKind::Xnor } else { GateKind::Xor },
        })
        .collect();
    apply_rll_at(n, &gates)
}

pub fn apply_rll_at(n: &Netlist, gates: &[RllGate]) -> Result<(Netlist, RllSpec), DefenseError> {
    let mut sites = Vec::with_capacity(gates.len());
    for g in gates {
        let net = n.net_id(&g.net).ok_or_else(|| NetlistError::UnknownNet(g.net.clone()))?;
        if !matches!(g.kind, GateKind::Xor | GateKind::Xnor) {
            return Err(DefenseError::Invalid(format!("RLL gate kind {} is not XOR/XNOR", g.kind)));
        }
        sites.push((net, g.kind));
    }
    let locked = n.with_key_gates(&sites)?;
    let new_bits: Vec<bool> = gates.iter().map(|g| g.kind == GateKind::Xnor).collect();
    let mut full_key = vec![false; n.keys().len()];
    if !n.keys().is_empty() {
        return Err(DefenseError::Invalid("netlist is already logic-locked".into()));
    }
    full_key.extend(&new_bits);
    check_equivalent(n, &locked, &full_key, 0x5eed)?;
    Ok((
        locked,
        RllSpec {
            gates: gates.to_vec(),
            key: new_bits,
        },
    ))
}

/// 1024 random vectors (16 words) through both netlists.
fn check_equivalent(original: &Netlist, locked: &Netlist, key: &[bool], seed: u64) -> Result<(), DefenseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key_words: Vec<u64> = key.iter().map(|&b| if b { !0 } else { 0 }).collect();
    for _ in 0..16 {
        let pi: Vec<u64> = (0..original.inputs().len()).map(|_| rng.gen()).collect();
        let st: Vec<u64> = (0..original.flip_flops().len()).map(|_| rng.gen()).collect();
        let want = original.simulate_words(&pi, &[], &st)?;
        let got = locked.simulate_words(&pi, &key_words, &st)?;
        if want != got {
            return Err(DefenseError::NotEquivalent);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::parse_bench;
    use crate::circuits;
    use crate::scanarch::{build_scan, StitchPolicy};

    fn six_ff_design(x: usize) -> ObfuscatedDesign {
        let n = circuits::synthetic(&circuits::SynthParams::new(4, 3, 6, 40), 3);
        let arch = build_scan(&n, x, StitchPolicy::DeclarationOrder).unwrap();
        ObfuscatedDesign::new(n, arch)
    }

    #[test]
    fn static_insertion_is_deterministic_and_bounded() {
        let d = six_ff_design(1);
        let (a, sa) = d.insert_static(3, 7).unwrap();
        let (_, sb) = d.insert_static(3, 7).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(a.static_gates, sa.placements);
        assert_eq!(sa.key.len(), 3);
        assert!(d.insert_static(7, 1).is_err());
        assert!(d.insert_static(6, 1).is_ok());
    }

    #[test]
    fn dos_fig6_sizing() {
        let d = six_ff_design(2);
        let lfsr = Lfsr::primitive(3).unwrap();
        let spec = DosSpec::derive(&d.arch, lfsr.clone(), vec![true, false, true], 1, 2.0 / 3.0, 100, 1).unwrap();
        assert_eq!(spec.gates.len(), 4);
        assert!(d.attach_dos(&spec).is_ok());
        assert!(DosSpec::derive(&d.arch, lfsr.clone(), vec![true, false, true], 1, 0.0, 100, 1).is_err());
        assert_eq!(
            DosSpec::derive(&d.arch, lfsr, vec![false; 3], 1, 1.0, 100, 1),
            Err(DefenseError::ZeroSeed)
        );
    }

    #[test]
    fn scramble_paths_are_permutations() {
        let n = circuits::synthetic(&circuits::SynthParams::new(4, 3, 12, 60), 5);
        let arch = build_scan(&n, 3, StitchPolicy::DeclarationOrder).unwrap();
        let d = ObfuscatedDesign::new(n, arch);
        for seed in 0..20 {
            let (sd, spec) = d.insert_scramble(6, seed).unwrap();
            assert_eq!(sd.muxes.len(), 6);
            for s in 1..sd.depth() {
                let mut used: Vec<usize> = (0..3).map(|c| sd.scan_source(c, s, &spec.key)).collect();
                used.sort();
                assert_eq!(used, vec![0, 1, 2], "slice {s} seed {seed}");
            }
            assert!(spec.intended_paths.iter().all(|p| p.len() == sd.depth()));
        }
        assert!(d.insert_scramble(0, 1).unwrap().1.muxes.is_empty());
        let single = ObfuscatedDesign::new(
            d.netlist.clone(),
            build_scan(&d.netlist, 1, StitchPolicy::DeclarationOrder).unwrap(),
        );
        assert!(single.insert_scramble(1, 1).is_err());
        assert!(d.insert_scramble(13, 1).is_err());
    }

    #[test]
    fn rll_correct_key_polarity() {
        let n = parse_bench(circuits::S27_BENCH).unwrap();
        let gates = vec![
            RllGate { net: "G8".into(), kind: GateKind::Xnor },
            RllGate { net: "G15".into(), kind: GateKind::Xor },
            RllGate { net: "G12".into(), kind: GateKind::Xnor },
        ];
        let (locked, spec) = apply_rll_at(&n, &gates).unwrap();
        assert_eq!(spec.key, vec![true, false, true]);
        assert_eq!(locked.keys().len(), 3);
        let (_, empty) = apply_rll(&n, 0, 1).unwrap();
        assert!(empty.key.is_empty());
        assert!(apply_rll(&n, 1000, 1).is_err());
    }
}
