//! Run configuration and the public/secret files written by `gen`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use rand::Rng as _;
use scansat::attack::{AttackConfig, AttackMode};
use scansat::bench::{parse_bench, write_bench};
use scansat::circuits::{s27, synthetic, SynthParams};
use scansat::defense::{Boundary, DosLayout, DosSpec, GoldenSecret, Lfsr, ObfuscatedDesign, RllGate, ScrambleMux};
use scansat::netlist::Netlist;
use scansat::oracle::bits_from_string;
use scansat::scanarch::{build_compression, build_scan, ScanArchitecture, StitchPolicy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `s27`, `s386-scale`, `synthetic:I,O,F,G`, or a path to a BENCH file
    /// (relative paths resolve against the config file).
    pub circuit: String,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default = "one")]
    pub ratio: usize,
    #[serde(default)]
    pub stitch: Stitch,
    #[serde(default)]
    pub static_bits: usize,
    #[serde(default)]
    pub scramble_bits: usize,
    #[serde(default)]
    pub rll_bits: usize,
    #[serde(default)]
    pub dos: Option<DosConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Option<AttackMode>,
    #[serde(default)]
    pub attack: AttackSection,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stitch {
    Declaration,
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosConfig {
    pub p: u64,
    pub alpha: f64,
    #[serde(default)]
    pub max_updates: Option<u64>,
    /// Feedback taps; the built-in primitive polynomial when absent.
    #[serde(default)]
    pub taps: Option<Vec<usize>>,
    /// Seed as a bit string, slice 0 first; random when absent.
    #[serde(default)]
    pub seed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub max_dips: usize,
    pub max_iterations: usize,
    pub solve_timeout_s: f64,
    pub attack_timeout_s: f64,
    pub p: Option<u64>,
    pub verify_trials: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        let d = AttackConfig::default();
        Self {
            max_dips: d.max_dips,
            max_iterations: d.max_iterations,
            solve_timeout_s: 60.0,
            attack_timeout_s: 3600.0,
            p: None,
            verify_trials: d.verify_trials,
        }
    }
}

impl AttackSection {
    pub fn to_config(&self, seed: u64, timeout: Option<f64>) -> Result<AttackConfig> {
        let secs = |v: f64, what: &str| -> Result<Option<Duration>> {
            ensure!(v >= 0.0 && v.is_finite(), "{what} must be a non-negative number of seconds");
            Ok((v > 0.0).then(|| Duration::from_secs_f64(v)))
        };
        Ok(AttackConfig {
            max_dips: self.max_dips,
            max_iterations: self.max_iterations,
            solve_timeout: secs(self.solve_timeout_s, "solve_timeout_s")?,
            attack_timeout: secs(timeout.unwrap_or(self.attack_timeout_s), "attack timeout")?,
            p: self.p,
            verify_trials: self.verify_trials,
            seed,
            ..AttackConfig::default()
        })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn circuit_name(&self) -> String {
        Path::new(&self.circuit)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.circuit.clone())
    }

    pub fn load_circuit(&self, base: &Path) -> Result<Netlist> {
        if self.circuit == "s27" {
            return Ok(s27());
        }
        if self.circuit == "s386-scale" {
            return Ok(synthetic(&SynthParams::s386_scale(), self.seed));
        }
        if let Some(spec) = self.circuit.strip_prefix("synthetic:") {
            let v: Vec<usize> = spec
                .split(',')
                .map(|x| x.trim().parse())
                .collect::<Result<_, _>>()
                .context("synthetic:I,O,F,G expects four integers")?;
            ensure!(v.len() == 4, "synthetic:I,O,F,G expects four integers");
            return Ok(synthetic(&SynthParams::new(v[0], v[1], v[2], v[3]), self.seed));
        }
        let path = base.join(&self.circuit);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        parse_bench(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Lock the circuit: RLL, then static gates, then scrambling, then DOS.
    pub fn generate(&self, base: &Path) -> Result<(ObfuscatedDesign, GoldenSecret)> {
        ensure!(self.chains >= 1, "chains must be at least 1");
        ensure!(
            self.ratio >= 1 && self.chains.is_multiple_of(self.ratio),
            "compression ratio {} must divide the chain count {}",
            self.ratio,
            self.chains
        );
        let n = self.load_circuit(base)?;
        let policy = match self.stitch {
            Stitch::Declaration => StitchPolicy::DeclarationOrder,
            Stitch::Random => StitchPolicy::SeededRandom { seed: self.seed },
        };
        let arch = build_scan(&n, self.chains, policy)?;
        let mut d = ObfuscatedDesign::new(n, arch).with_compression(self.ratio)?;
        let mut g = GoldenSecret::default();
        if self.rll_bits > 0 {
            let (dd, spec) = d.apply_rll(self.rll_bits, self.seed ^ 0x11)?;
            d = dd;
            g.rll_key = spec.key;
        }
        if self.static_bits > 0 {
            let (dd, spec) = d.insert_static(self.static_bits, self.seed ^ 0x22)?;
            d = dd;
            g.static_key = spec.key;
        }
        if self.scramble_bits > 0 {
            let (dd, spec) = d.insert_scramble(self.scramble_bits, self.seed ^ 0x33)?;
            d = dd;
            g.scramble_key = spec.key;
        }
        if let Some(dos) = &self.dos {
            let width = d.depth();
            let lfsr = match &dos.taps {
                Some(t) => Lfsr::new(width, t)?,
                None => Lfsr::primitive(width)?,
            };
            let seed = match &dos.seed {
                Some(s) => {
                    let b = bits_from_string(s).context("dos.seed must be a 0/1 string")?;
                    ensure!(b.len() == width, "dos.seed needs {width} bits (the chain depth)");
                    b
                }
                None => random_seed(width, self.seed),
            };
            let spec = DosSpec::derive(
                &d.arch,
                lfsr,
                seed,
                dos.p,
                dos.alpha,
                dos.max_updates.unwrap_or(u64::MAX),
                self.seed ^ 0x55,
            )?;
            d = d.attach_dos(&spec)?;
            g.dos = Some(spec.secret());
        }
        Ok((d, g))
    }
}

fn random_seed(width: usize, seed: u64) -> Vec<bool> {
    use rand::SeedableRng;
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x44);
    loop {
        let s: Vec<bool> = (0..width).map(|_| r.gen()).collect();
        if s.iter().any(|&b| b) {
            return s;
        }
    }
}

/// Everything the attacker may know: netlist, stitching, compression and
/// key-gate positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub circuit: String,
    pub bench: String,
    pub chains: Vec<Vec<String>>,
    pub ratio: usize,
    pub static_gates: Vec<Boundary>,
    pub muxes: Vec<ScrambleMux>,
    pub dos: Option<DosLayout>,
    pub rll: Vec<RllGate>,
}

impl DesignFile {
    pub fn from_design(circuit: &str, d: &ObfuscatedDesign) -> Self {
        Self {
            circuit: circuit.to_string(),
            bench: write_bench(&d.netlist),
            chains: d.arch.to_named(&d.netlist),
            ratio: d.compression.ratio,
            static_gates: d.static_gates.clone(),
            muxes: d.muxes.clone(),
            dos: d.dos.clone(),
            rll: d.rll.clone(),
        }
    }

    pub fn to_design(&self) -> Result<ObfuscatedDesign> {
        let netlist = parse_bench(&self.bench).context("embedded netlist")?;
        let arch = ScanArchitecture::from_named(&netlist, &self.chains)?;
        let compression = build_compression(&arch, self.ratio)?;
        let d = ObfuscatedDesign {
            netlist,
            arch,
            compression,
            static_gates: self.static_gates.clone(),
            muxes: self.muxes.clone(),
            dos: self.dos.clone(),
            rll: self.rll.clone(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn load_secret(path: &Path, d: &ObfuscatedDesign) -> Result<GoldenSecret> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // accept a bare secret or an attack result carrying one
    let s = match v.get("secret") {
        Some(inner) if !inner.is_null() => inner.clone(),
        Some(_) => bail!("{} holds no recovered secret", path.display()),
        None => v,
    };
    let g: GoldenSecret = serde_json::from_value(s).with_context(|| format!("secret in {}", path.display()))?;
    g.check(d)?;
    Ok(g)
}

/// Mode implied by the defenses present.
pub fn default_mode(d: &ObfuscatedDesign) -> AttackMode {
    let rll = !d.netlist.keys().is_empty();
    if d.dos.is_some() {
        if rll {
            AttackMode::Combined
        } else {
            AttackMode::Dynamic
        }
    } else if rll && d.has_scan_obfuscation() {
        AttackMode::Combined
    } else if !d.muxes.is_empty() {
        AttackMode::Scramble
    } else if d.static_gates.is_empty() && rll {
        AttackMode::Combined
    } else {
        AttackMode::Static
    }
}
