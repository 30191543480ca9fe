//! Fibonacci LFSR used by dynamic scan obfuscation, plus its GF(2) linear
//! form (the seed-to-key relation).
//!
//! State bit `s[0]` is stage 1. One step computes `f = XOR s[t-1]` over the
//! tap set, shifts `s[i] <- s[i-1]` and loads `s[0] <- f`.

use serde::{Deserialize, Serialize};

use super::DefenseError;

/// Maximal-length tap sets, widths 1..=32.
const PRIMITIVE_TAPS: [&[usize]; 32] = [
    &[1],
    &[2, 1],
    &[3, 2],
    &[4, 3],
    &[5, 3],
    &[6, 5],
    &[7, 6],
    &[8, 6, 5, 4],
    &[9, 5],
    &[10, 7],
    &[11, 9],
    &[12, 6, 4, 1],
    &[13, 4, 3, 1],
    &[14, 5, 3, 1],
    &[15, 14],
    &[16, 15, 13, 4],
    &[17, 14],
    &[18, 11],
    &[19, 6, 2, 1],
    &[20, 17],
    &[21, 19],
    &[22, 21],
    &[23, 18],
    &[24, 23, 22, 17],
    &[25, 22],
    &[26, 6, 2, 1],
    &[27, 5, 2, 1],
    &[28, 25],
    &[29, 27],
    &[30, 6, 4, 1],
    &[31, 28],
    &[32, 22, 2, 1],
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lfsr {
    width: usize,
    taps: Vec<usize>,
}

impl Lfsr {
    /// Taps are 1-based stage numbers and must include `width`. For widths up
    /// to 32 the polynomial is checked for primitivity; wider ones are trusted.
    pub fn new(width: usize, taps: &[usize]) -> Result<Self, DefenseError> {
        let mut taps = taps.to_vec();
        taps.sort_unstable();
        taps.dedup();
        if width == 0 || taps.last() != Some(&width) || taps[0] == 0 {
            return Err(DefenseError::Polynomial(format!(
                "taps {taps:?} must lie in 1..={width} and include {width}"
            )));
        }
        let lfsr = Self { width, taps };
        if lfsr.is_primitive() == Some(false) {
            return Err(DefenseError::Polynomial(format!(
                "taps {:?} are not primitive for width {width}",
                lfsr.taps
            )));
        }
        Ok(lfsr)
    }

    /// Built-in primitive polynomial for `width <= 32`.
    pub fn primitive(width: usize) -> Result<Self, DefenseError> {
        match width {
            1..=32 => Ok(Self {
                width,
                taps: {
                    let mut t = PRIMITIVE_TAPS[width - 1].to_vec();
                    t.sort_unstable();
                    t
                },
            }),
            _ => Err(DefenseError::Polynomial(format!(
                "no built-in polynomial for width {width}; pass taps explicitly"
            ))),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    /// `None` when the width is too large to check.
    pub fn is_primitive(&self) -> Option<bool> {
        if self.width > 32 {
            return None;
        }
        let mut poly: u64 = 1;
        for &t in &self.taps {
            poly |= 1 << t;
        }
        Some(gf2_is_primitive(poly, self.width as u32))
    }

    pub fn next(&self, state: &[bool]) -> Result<Vec<bool>, DefenseError> {
        self.check_state(state)?;
        Ok(self.step(state))
    }

    fn step(&self, state: &[bool]) -> Vec<bool> {
        let f = self.taps.iter().fold(false, |acc, &t| acc ^ state[t - 1]);
        let mut out = Vec::with_capacity(self.width);
        out.push(f);
        out.extend_from_slice(&state[..self.width - 1]);
        out
    }

    fn check_state(&self, state: &[bool]) -> Result<(), DefenseError> {
        if state.len() != self.width {
            return Err(DefenseError::Shape(format!(
                "LFSR state has {} bits, width is {}",
                state.len(),
                self.width
            )));
        }
        if !state.iter().any(|&b| b) {
            return Err(DefenseError::ZeroSeed);
        }
        Ok(())
    }

    /// The `j`-th dynamic key (1-based): key 1 is the seed itself.
    pub fn key_at(&self, seed: &[bool], j: u64) -> Result<Vec<bool>, DefenseError> {
        self.check_state(seed)?;
        if j == 0 {
            return Err(DefenseError::Shape("key index is 1-based".into()));
        }
        let mut s = seed.to_vec();
        for _ in 1..j {
            s = self.step(&s);
        }
        Ok(s)
    }

    /// GF(2) form of `key_at(·, j)`: row `i` lists which seed bits XOR into
    /// key bit `i`.
    pub fn key_matrix(&self, j: u64) -> Vec<Vec<bool>> {
        assert!(j >= 1, "key index is 1-based");
        let w = self.width;
        let mut rows: Vec<Vec<bool>> = (0..w).map(|i| (0..w).map(|c| c == i).collect()).collect();
        for _ in 1..j {
            let mut f = vec![false; w];
            for &t in &self.taps {
                for (fc, &rc) in f.iter_mut().zip(&rows[t - 1]) {
                    *fc ^= rc;
                }
            }
            rows.pop();
            rows.insert(0, f);
        }
        rows
    }
}

fn gf2_mulmod(mut a: u64, mut b: u64, poly: u64, deg: u32) -> u64 {
    let top = 1u64 << deg;
    let mut r = 0;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & top != 0 {
            a ^= poly;
        }
    }
    r
}

fn gf2_powmod(mut base: u64, mut e: u64, poly: u64, deg: u32) -> u64 {
    let mut acc = 1;
    while e > 0 {
        if e & 1 == 1 {
            acc = gf2_mulmod(acc, base, poly, deg);
        }
        base = gf2_mulmod(base, base, poly, deg);
        e >>= 1;
    }
    acc
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// `x` has multiplicative order `2^deg - 1` modulo `poly` (constant term set).
fn gf2_is_primitive(poly: u64, deg: u32) -> bool {
    if poly & 1 == 0 {
        return false;
    }
    if deg == 1 {
        return poly == 0b11;
    }
    let order = (1u64 << deg) - 1;
    let x = 0b10;
    if gf2_powmod(x, order, poly, deg) != 1 {
        return false;
    }
    prime_factors(order)
        .into_iter()
        .all(|q| gf2_powmod(x, order / q, poly, deg) != 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    fn period(l: &Lfsr, seed: &[bool]) -> usize {
        let mut s = l.next(seed).unwrap();
        let mut n = 1;
        while s != seed {
            s = l.next(&s).unwrap();
            n += 1;
        }
        n
    }

    #[test]
    fn width3_revisits_after_seven() {
        let l = Lfsr::new(3, &[3, 2]).unwrap();
        let seed = bits("001");
        let mut seen = vec![seed.clone()];
        let mut s = seed.clone();
        for _ in 0..6 {
            s = l.next(&s).unwrap();
            assert!(!seen.contains(&s));
            seen.push(s.clone());
        }
        assert_eq!(l.next(&s).unwrap(), seed);
    }

    #[test]
    fn width5_period_31() {
        let l = Lfsr::primitive(5).unwrap();
        assert_eq!(period(&l, &bits("00001")), 31);
    }

    #[test]
    fn zero_state_rejected() {
        let l = Lfsr::primitive(4).unwrap();
        assert_eq!(l.next(&bits("0000")), Err(DefenseError::ZeroSeed));
        assert_eq!(l.key_at(&bits("0000"), 1), Err(DefenseError::ZeroSeed));
    }

    #[test]
    fn table_is_primitive_by_brute_force_up_to_16() {
        for w in 1..=16 {
            let l = Lfsr::primitive(w).unwrap();
            let mut seed = vec![false; w];
            seed[0] = true;
            assert_eq!(period(&l, &seed), (1 << w) - 1, "width {w}");
        }
    }

    #[test]
    fn table_is_primitive_algebraically() {
        for w in 1..=32 {
            assert_eq!(Lfsr::primitive(w).unwrap().is_primitive(), Some(true), "width {w}");
        }
    }

    #[test]
    fn non_primitive_rejected() {
        // x^4 + x^2 + 1 = (x^2 + x + 1)^2
        assert!(Lfsr::new(4, &[4, 2]).is_err());
        assert!(Lfsr::new(4, &[3]).is_err());
    }

    #[test]
    fn key_schedule() {
        let l = Lfsr::primitive(5).unwrap();
        let seed = bits("00001");
        assert_eq!(l.key_at(&seed, 1).unwrap(), seed);
        assert_eq!(l.key_at(&seed, 2).unwrap(), l.next(&seed).unwrap());
        let keys: Vec<Vec<bool>> = (1..=4).map(|j| l.key_at(&seed, j).unwrap()).collect();
        for (i, k) in keys.iter().enumerate() {
            assert!(k.iter().any(|&b| b));
            for other in &keys[i + 1..] {
                assert_ne!(k, other);
            }
        }
    }
}
