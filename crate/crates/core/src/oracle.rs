//! Cycle-level simulation of the manufactured chip, reachable only through
//! its scan pins, primary inputs and primary outputs.
//!
//! A transaction is load (`depth` shifts), one capture pulse, unload (`depth`
//! shifts with 0 shifted in). Load cycle `t` drives `a[c*depth + depth-1-t]`
//! into channel `c`; unload cycle `t` emits the channel's compacted bit into
//! `b[c*depth + depth-1-t]`. With DOS, the capture counter advances on every
//! capture and the key moves to the next LFSR state after the unload of the
//! `p`-th capture. The shadow chain masks the first unload after power-up.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::defense::{DefenseError, GoldenSecret, ObfuscatedDesign};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{what}: expected {expected} bits, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("transcript write failed: {0}")]
    Transcript(#[from] std::io::Error),
}

#[derive(Serialize)]
struct Record<'a> {
    kind: &'a str,
    a: String,
    pi: String,
    b: String,
    po: String,
    captures: u64,
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn bits_from_string(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

/// Stateful chip session. There is deliberately no accessor for the secret.
pub struct Oracle {
    design: ObfuscatedDesign,
    secret: GoldenSecret,
    locate: Vec<(usize, usize)>,
    static_mask: Vec<Vec<bool>>,
    dos_at: Vec<Vec<bool>>,
    source: Vec<Vec<usize>>,
    cells: Vec<Vec<bool>>,
    captures: u64,
    counter: u64,
    updates: u64,
    dos_key: Vec<bool>,
    shadow: bool,
    transcript: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for Oracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Oracle")
            .field("channels", &self.channels())
            .field("depth", &self.depth())
            .field("captures", &self.captures)
            .finish_non_exhaustive()
    }
}

impl Clone for Oracle {
    /// Same chip, same session state, no transcript.
    fn clone(&self) -> Self {
        Self {
            design: self.design.clone(),
            secret: self.secret.clone(),
            locate: self.locate.clone(),
            static_mask: self.static_mask.clone(),
            dos_at: self.dos_at.clone(),
            source: self.source.clone(),
            cells: self.cells.clone(),
            captures: self.captures,
            counter: self.counter,
            updates: self.updates,
            dos_key: self.dos_key.clone(),
            shadow: self.shadow,
            transcript: None,
        }
    }
}

impl Oracle {
    /// Manufacture a chip; it starts powered up.
    pub fn new(design: ObfuscatedDesign, secret: GoldenSecret) -> Result<Self, DefenseError> {
        design.validate()?;
        secret.check(&design)?;
        let x = design.arch.num_chains();
        let depth = design.depth();
        let mut static_mask = vec![vec![false; depth]; x];
        for (g, &k) in design.static_gates.iter().zip(&secret.static_key) {
            static_mask[g.chain][g.slice] ^= k;
        }
        let mut dos_at = vec![vec![false; depth]; x];
        if let Some(dos) = &design.dos {
            for g in &dos.gates {
                dos_at[g.chain][g.slice] = true;
            }
        }
        let source = (0..x)
            .map(|j| (0..depth).map(|i| design.scan_source(j, i, &secret.scramble_key)).collect())
            .collect();
        let mut o = Self {
            locate: design.arch.locate(),
            design,
            secret,
            static_mask,
            dos_at,
            source,
            cells: Vec::new(),
            captures: 0,
            counter: 0,
            updates: 0,
            dos_key: Vec::new(),
            shadow: false,
            transcript: None,
        };
        o.power_up();
        Ok(o)
    }

    /// Public half of the chip, as recovered by reverse engineering.
    pub fn design(&self) -> &ObfuscatedDesign {
        &self.design
    }

    pub fn channels(&self) -> usize {
        self.design.channels()
    }

    pub fn depth(&self) -> usize {
        self.design.depth()
    }

    /// Stimulus / response length: channels x depth.
    pub fn scan_bits(&self) -> usize {
        self.channels() * self.depth()
    }

    pub fn num_pis(&self) -> usize {
        self.design.netlist.inputs().len()
    }

    pub fn num_pos(&self) -> usize {
        self.design.netlist.outputs().len()
    }

    /// Capture pulses since power-up.
    pub fn captures(&self) -> u64 {
        self.captures
    }

    /// Log every later transaction as one JSON object per line.
    pub fn set_transcript(&mut self, w: Option<Box<dyn Write + Send>>) {
        self.transcript = w;
    }

    pub fn power_up(&mut self) {
        let x = self.design.arch.num_chains();
        self.cells = vec![vec![false; self.depth()]; x];
        self.captures = 0;
        self.counter = 0;
        self.updates = 0;
        self.dos_key = self.secret.dos.as_ref().map(|d| d.seed.clone()).unwrap_or_default();
        self.shadow = self.design.dos.is_some();
    }

    fn check(&self, a: &[bool], pi: Option<&[bool]>) -> Result<(), OracleError> {
        if a.len() != self.scan_bits() {
            return Err(OracleError::Dimension {
                what: "scan stimulus",
                expected: self.scan_bits(),
                got: a.len(),
            });
        }
        if let Some(pi) = pi {
            if pi.len() != self.num_pis() {
                return Err(OracleError::Dimension {
                    what: "primary inputs",
                    expected: self.num_pis(),
                    got: pi.len(),
                });
            }
        }
        Ok(())
    }

    /// One shift cycle; `ins[j]` enters chain `j`.
    fn shift(&mut self, ins: &[bool]) {
        let depth = self.depth();
        let old = self.cells.clone();
        for (j, chain) in self.cells.iter_mut().enumerate() {
            for (i, cell) in chain.iter_mut().enumerate() {
                let src = if i == 0 { ins[j] } else { old[self.source[j][i]][i - 1] };
                let dos = self.dos_at[j][i] && self.dos_key[i];
                *cell = src ^ self.static_mask[j][i] ^ dos;
            }
        }
        debug_assert!(self.cells.iter().all(|c| c.len() == depth));
    }

    fn load(&mut self, a: &[bool]) {
        let depth = self.depth();
        let x = self.design.arch.num_chains();
        for t in 0..depth {
            let ins: Vec<bool> = (0..x)
                .map(|j| a[self.design.compression.channel_of(j) * depth + depth - 1 - t])
                .collect();
            self.shift(&ins);
        }
    }

    fn unload(&mut self) -> Vec<bool> {
        let depth = self.depth();
        let x = self.design.arch.num_chains();
        let mut b = vec![false; self.scan_bits()];
        let zeros = vec![false; x];
        for t in 0..depth {
            for (c, group) in self.design.compression.compactor.iter().enumerate() {
                b[c * depth + depth - 1 - t] = group.iter().fold(false, |acc, &j| acc ^ self.cells[j][depth - 1]);
            }
            self.shift(&zeros);
        }
        if self.shadow {
            self.shadow = false;
            b.iter_mut().for_each(|v| *v = false);
        }
        b
    }

    fn capture(&mut self, pi: &[bool]) -> Vec<bool> {
        let n = &self.design.netlist;
        let state: Vec<bool> = self.locate.iter().map(|&(j, i)| self.cells[j][i]).collect();
        let (po, next) = n
            .evaluate_keyed(pi, &self.secret.rll_key, &state)
            .expect("dimensions checked at construction");
        for row in self.cells.iter_mut() {
            row.iter_mut().for_each(|v| *v = false);
        }
        for (ff, &(j, i)) in self.locate.iter().enumerate() {
            self.cells[j][i] = next[ff];
        }
        self.captures += 1;
        po
    }

    fn after_unload(&mut self) {
        let Some(dos) = &self.secret.dos else { return };
        let layout = self.design.dos.as_ref().expect("checked with secret");
        self.counter += 1;
        if self.counter == dos.p {
            self.counter = 0;
            if self.updates < dos.max_updates {
                self.dos_key = layout.lfsr.next(&self.dos_key).expect("seed is nonzero");
                self.updates += 1;
            }
        }
    }

    /// Load `a`, capture with `pi` applied, unload. Returns `(b, po)`.
    pub fn scan_transaction(&mut self, a: &[bool], pi: &[bool]) -> Result<(Vec<bool>, Vec<bool>), OracleError> {
        self.check(a, Some(pi))?;
        self.load(a);
        let po = self.capture(pi);
        let b = self.unload();
        self.after_unload();
        self.log("transaction", a, pi, &b, &po)?;
        Ok((b, po))
    }

    /// Shift `a` in and straight out again, no capture.
    pub fn flush(&mut self, a: &[bool]) -> Result<Vec<bool>, OracleError> {
        self.check(a, None)?;
        self.load(a);
        let b = self.unload();
        self.log("flush", a, &[], &b, &[])?;
        Ok(b)
    }

    fn log(&mut self, kind: &str, a: &[bool], pi: &[bool], b: &[bool], po: &[bool]) -> Result<(), OracleError> {
        if let Some(w) = &mut self.transcript {
            let rec = Record {
                kind,
                a: bits_to_string(a),
                pi: bits_to_string(pi),
                b: bits_to_string(b),
                po: bits_to_string(po),
                captures: self.captures,
            };
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{synthetic, SynthParams};
    use crate::defense::{Boundary, DosSpec, Lfsr};
    use crate::scanarch::{build_scan, StitchPolicy};

    fn six_cell(x: usize) -> ObfuscatedDesign {
        let n = synthetic(&SynthParams::new(3, 2, 6, 40), 1);
        let arch = build_scan(&n, x, StitchPolicy::DeclarationOrder).unwrap();
        ObfuscatedDesign::new(n, arch)
    }

    fn random_bits(rng: &mut impl rand::Rng, n: usize) -> Vec<bool> {
        (0..n).map(|_| rng.gen()).collect()
    }

    #[test]
    fn plain_flush_is_identity() {
        let o = &mut Oracle::new(six_cell(2), GoldenSecret::default()).unwrap();
        let mut rng = rand::rngs::mock::StepRng::new(3, 7);
        for _ in 0..10 {
            let a = random_bits(&mut rng, o.scan_bits());
            assert_eq!(o.flush(&a).unwrap(), a);
        }
    }

    #[test]
    fn fig3_inversion_sets() {
        let d = six_cell(1)
            .insert_static_at(&[Boundary::new(0, 2), Boundary::new(0, 4), Boundary::new(0, 5)])
            .unwrap();
        let secret = GoldenSecret {
            static_key: vec![true; 3],
            ..Default::default()
        };
        let mut o = Oracle::new(d, secret).unwrap();
        // flush of zeros: each cell's bit picks up L then R; total parity 1
        assert_eq!(o.flush(&[false; 6]).unwrap(), vec![true; 6]);
        o.load(&[false; 6]);
        let delivered: Vec<usize> = (0..6).filter(|&i| o.cells[0][i]).collect();
        assert_eq!(delivered, vec![2, 3, 5]);
        for row in o.cells.iter_mut() {
            row.iter_mut().for_each(|v| *v = false);
        }
        let b = o.unload();
        let observed: Vec<usize> = (0..6).filter(|&i| b[i]).collect();
        assert_eq!(observed, vec![0, 1, 4]);
    }

    #[test]
    fn dimension_errors() {
        let mut o = Oracle::new(six_cell(2), GoldenSecret::default()).unwrap();
        assert!(matches!(o.flush(&[false; 5]), Err(OracleError::Dimension { .. })));
        assert!(matches!(
            o.scan_transaction(&[false; 6], &[false; 2]),
            Err(OracleError::Dimension { what: "primary inputs", .. })
        ));
    }

    #[test]
    fn dos_shadow_and_schedule() {
        let d = six_cell(2);
        let spec = DosSpec::derive(&d.arch, Lfsr::primitive(3).unwrap(), vec![true, false, false], 2, 1.0, 1, 0).unwrap();
        let d = d.attach_dos(&spec).unwrap();
        let mut o = Oracle::new(d, GoldenSecret { dos: Some(spec.secret()), ..Default::default() }).unwrap();
        let a = vec![true; 6];
        let (b1, _) = o.scan_transaction(&a, &[true, false, true]).unwrap();
        assert!(b1.iter().all(|&v| !v));
        assert_eq!(o.dos_key, vec![true, false, false]);
        o.scan_transaction(&a, &[true, false, true]).unwrap();
        assert_eq!(o.dos_key, vec![false, true, false]);
        // max_updates = 1: frozen from here on
        for _ in 0..4 {
            o.scan_transaction(&a, &[true, false, true]).unwrap();
        }
        assert_eq!(o.dos_key, vec![false, true, false]);
        o.power_up();
        o.power_up();
        assert_eq!(o.captures(), 0);
        assert!(o.flush(&a).unwrap().iter().all(|&v| !v));
        assert_eq!(o.captures(), 0);
    }

    #[test]
    fn transcript_lines() {
        #[derive(Clone, Default)]
        struct Shared(std::sync::Arc<std::sync::Mutex<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let buf = Shared::default();
        let mut o = Oracle::new(six_cell(2), GoldenSecret::default()).unwrap();
        o.set_transcript(Some(Box::new(buf.clone())));
        o.scan_transaction(&[false; 6], &[true; 3]).unwrap();
        o.flush(&[true; 6]).unwrap();
        let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["captures"], 1);
        assert_eq!(lines[1]["kind"], "flush");
        assert_eq!(lines[1]["b"], "111111");
    }
}
