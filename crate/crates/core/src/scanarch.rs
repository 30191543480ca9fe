//! Scan-chain stitching and fanout/XOR test compression.
//!
//! Conventions used across the crate:
//!
//! * Slice `0` is adjacent to the Scan-in pin and slice `depth - 1` drives
//!   Scan-out. The bit shifted in first ends at the highest slice.
//! * Every chain is `depth` cells long. A chain with fewer flip-flops is
//!   padded at its Scan-in end with dummy cells that capture a constant 0.
//! * Stimuli and responses are flat vectors laid out channel-major:
//!   bit `channel * depth + slice`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::Netlist;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScanError {
    #[error("chain count {x} out of range 1..={ffs}")]
    ChainCount { x: usize, ffs: usize },
    #[error("compression ratio {ratio} does not divide {chains} chains")]
    Ratio { ratio: usize, chains: usize },
    #[error("unknown flip-flop `{0}`")]
    UnknownFlipFlop(String),
    #[error("scan architecture is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum StitchPolicy {
    DeclarationOrder,
    SeededRandom { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanArchitecture {
    chains: Vec<Vec<usize>>,
    depth: usize,
    num_ffs: usize,
}

impl ScanArchitecture {
    /// Build from explicit chains of flip-flop indices (Scan-in side first).
    pub fn from_chains(chains: Vec<Vec<usize>>, num_ffs: usize) -> Result<Self, ScanError> {
        if chains.is_empty() || chains.iter().any(Vec::is_empty) {
            return Err(ScanError::Inconsistent("empty chain".into()));
        }
        let mut seen = vec![false; num_ffs];
        for &ff in chains.iter().flatten() {
            if ff >= num_ffs || seen[ff] {
                return Err(ScanError::Inconsistent(format!("flip-flop {ff} missing or repeated")));
            }
            seen[ff] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(ScanError::Inconsistent("flip-flop not on any chain".into()));
        }
        let depth = chains.iter().map(Vec::len).max().unwrap();
        let shortest = chains.iter().map(Vec::len).min().unwrap();
        if depth - shortest > 1 {
            return Err(ScanError::Inconsistent("chain lengths differ by more than 1".into()));
        }
        Ok(Self {
            chains,
            depth,
            num_ffs,
        })
    }

    pub fn num_chains(&self) -> usize {
        self.chains.len()
    }

    /// Maximum chain length; also the number of shift cycles per load.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_ffs(&self) -> usize {
        self.num_ffs
    }

    pub fn chains(&self) -> &[Vec<usize>] {
        &self.chains
    }

    /// Number of dummy cells at the Scan-in end of `chain`.
    pub fn padding(&self, chain: usize) -> usize {
        self.depth - self.chains[chain].len()
    }

    /// Flip-flop at (`chain`, `slice`), or `None` for a padding cell.
    pub fn cell(&self, chain: usize, slice: usize) -> Option<usize> {
        let pad = self.padding(chain);
        if slice < pad {
            None
        } else {
            Some(self.chains[chain][slice - pad])
        }
    }

    /// (chain, slice) of every flip-flop.
    pub fn locate(&self) -> Vec<(usize, usize)> {
        let mut at = vec![(0, 0); self.num_ffs];
        for (j, chain) in self.chains.iter().enumerate() {
            let pad = self.padding(j);
            for (pos, &ff) in chain.iter().enumerate() {
                at[ff] = (j, pos + pad);
            }
        }
        at
    }

    /// Chains as flip-flop Q-net names, for serialization.
    pub fn to_named(&self, n: &Netlist) -> Vec<Vec<String>> {
        self.chains
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&ff| n.net_name(n.flip_flops()[ff].q).to_string())
                    .collect()
            })
            .collect()
    }

    pub fn from_named(n: &Netlist, chains: &[Vec<String>]) -> Result<Self, ScanError> {
        let mut by_name = std::collections::HashMap::new();
        for (i, ff) in n.flip_flops().iter().enumerate() {
            by_name.insert(n.net_name(ff.q), i);
        }
        let idx = chains
            .iter()
            .map(|c| {
                c.iter()
                    .map(|name| {
                        by_name
                            .get(name.as_str())
                            .copied()
                            .ok_or_else(|| ScanError::UnknownFlipFlop(name.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_chains(idx, n.flip_flops().len())
    }
}

/// Stitch the flip-flops of `n` into `x` balanced chains.
pub fn build_scan(n: &Netlist, x: usize, policy: StitchPolicy) -> Result<ScanArchitecture, ScanError> {
    let ffs = n.flip_flops().len();
    if x == 0 || x > ffs {
        return Err(ScanError::ChainCount { x, ffs });
    }
    let mut order: Vec<usize> = (0..ffs).collect();
    if let StitchPolicy::SeededRandom { seed } = policy {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let base = ffs / x;
    let extra = ffs % x;
    let mut chains = Vec::with_capacity(x);
    let mut it = order.into_iter();
    for j in 0..x {
        let len = base + usize::from(j < extra);
        chains.push(it.by_ref().take(len).collect());
    }
    ScanArchitecture::from_chains(chains, ffs)
}

/// Fanout decompressor plus XOR compactor, grouping consecutive chains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressionSpec {
    pub ratio: usize,
    /// Scan-in channel feeding each internal chain.
    pub decompressor: Vec<usize>,
    /// Internal chains XORed into each scan-out channel.
    pub compactor: Vec<Vec<usize>>,
}

impl CompressionSpec {
    pub fn identity(chains: usize) -> Self {
        Self {
            ratio: 1,
            decompressor: (0..chains).collect(),
            compactor: (0..chains).map(|j| vec![j]).collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.compactor.len()
    }

    pub fn channel_of(&self, chain: usize) -> usize {
        self.decompressor[chain]
    }

    pub fn is_identity(&self) -> bool {
        self.ratio == 1
    }

    pub fn validate(&self, chains: usize) -> Result<(), ScanError> {
        if self.ratio == 0 || !chains.is_multiple_of(self.ratio) || self.decompressor.len() != chains {
            return Err(ScanError::Ratio {
                ratio: self.ratio,
                chains,
            });
        }
        if self.compactor.len() * self.ratio != chains {
            return Err(ScanError::Inconsistent("channel count does not match ratio".into()));
        }
        let mut fed = vec![0usize; chains];
        for (c, group) in self.compactor.iter().enumerate() {
            for &j in group {
                if j >= chains || self.decompressor[j] != c {
                    return Err(ScanError::Inconsistent(format!(
                        "chain {j} is compacted into channel {c} but fed from another"
                    )));
                }
                fed[j] += 1;
            }
        }
        if fed.iter().any(|&f| f != 1) {
            return Err(ScanError::Inconsistent("each chain must feed exactly one channel".into()));
        }
        Ok(())
    }
}

pub fn build_compression(arch: &ScanArchitecture, ratio: usize) -> Result<CompressionSpec, ScanError> {
    let x = arch.num_chains();
    if ratio == 0 || !x.is_multiple_of(ratio) {
        return Err(ScanError::Ratio { ratio, chains: x });
    }
    let channels = x / ratio;
    Ok(CompressionSpec {
        ratio,
        decompressor: (0..x).map(|j| j / ratio).collect(),
        compactor: (0..channels)
            .map(|c| (c * ratio..(c + 1) * ratio).collect())
            .collect(),
    })
}
