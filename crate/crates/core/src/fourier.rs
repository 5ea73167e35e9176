//! One-dimensional Fourier proposal distribution.
//!
//! A parameter register of `M` qubits holding amplitudes `θ` is padded with
//! `N - M` ground-state qubits and passed through a quantum Fourier transform
//! on `N` qubits. Measuring the result in the computational basis gives
//!
//! ```text
//! q(x; θ) = | Σ_j θ_j e^{2πi x j / 2^N} / √(2^N) |²,   x ∈ [0, 2^N).
//! ```
//!
//! Indices are plain integers: `x`'s binary expansion is read MSB-first where
//! a bit prefix is involved, and the parameter register occupies the
//! low-order `M` bits of the transform's input index.
//!
//! Draws are produced by simulating the transform with measurement-conditioned
//! single-register phase rotations (semiclassical QFT), which never touches
//! more than `2^M` amplitudes at once.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, SlmcError};

pub type C64 = Complex64;

/// Lower clamp applied to probabilities used as denominators.
pub const PROB_FLOOR: f64 = 1e-12;

/// Largest supported register width; outcomes are stored in a `u128`.
pub const MAX_QUBITS: u32 = 127;

/// Largest `N` for which a full probability table may be materialized.
pub const MAX_TABLE_QUBITS: u32 = 26;

const NORM_TOL: f64 = 1e-12;

/// `2^-n` as an `f64`.
#[inline]
pub(crate) fn pow2_neg(n: u32) -> f64 {
    2f64.powi(-(n as i32))
}

#[inline]
fn low_mask(n: u32) -> u128 {
    if n >= 128 {
        u128::MAX
    } else {
        (1u128 << n) - 1
    }
}

/// Fractional part of `a·b / 2^n`, in turns.
#[inline]
pub(crate) fn turns(a: u128, b: u128, n: u32) -> f64 {
    (a.wrapping_mul(b) & low_mask(n)) as f64 * pow2_neg(n)
}

#[inline]
fn cis_turns(t: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * t)
}

pub(crate) fn check_outcome(x: u128, n_qubits: u32) -> Result<()> {
    if x > low_mask(n_qubits) {
        return domain(format!("outcome {x} out of range for {n_qubits} qubits"));
    }
    Ok(())
}

/// Normalized complex amplitudes of the parameter register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    theta: Vec<C64>,
}

impl ParamVector {
    /// Normalizes `raw`. Fails on a length that is not a power of two or a
    /// vanishing / non-finite norm.
    pub fn new(raw: Vec<C64>) -> Result<Self> {
        if raw.is_empty() || !raw.len().is_power_of_two() {
            return domain(format!("parameter length {} is not a power of two", raw.len()));
        }
        let norm = l2_norm(&raw);
        if !norm.is_finite() {
            return domain("parameter vector has non-finite entries");
        }
        if norm == 0.0 {
            return Err(SlmcError::DegenerateNorm);
        }
        Ok(Self {
            theta: raw.into_iter().map(|t| t / norm).collect(),
        })
    }

    /// Wraps `raw` without normalizing it. `FourierProposal::new` rejects the
    /// result unless it happens to be unit-norm.
    pub fn from_raw_unchecked(raw: Vec<C64>) -> Self {
        Self { theta: raw }
    }

    /// Basis vector `e_j` on `m_qubits` qubits.
    pub fn basis(m_qubits: u32, j: usize) -> Result<Self> {
        let len = 1usize << m_qubits;
        if j >= len {
            return domain(format!("basis index {j} out of range for {m_qubits} qubits"));
        }
        let mut theta = vec![C64::new(0.0, 0.0); len];
        theta[j] = C64::new(1.0, 0.0);
        Ok(Self { theta })
    }

    /// `e_0`: the uniform proposal.
    pub fn uniform(m_qubits: u32) -> Self {
        Self::basis(m_qubits, 0).expect("index 0 always in range")
    }

    /// Complex Gaussian draw, normalized.
    pub fn random<R: Rng + ?Sized>(m_qubits: u32, rng: &mut R) -> Self {
        let raw = (0..1usize << m_qubits)
            .map(|_| {
                C64::new(
                    StandardNormal.sample(&mut *rng),
                    StandardNormal.sample(&mut *rng),
                )
            })
            .collect();
        // A Gaussian vector is zero with probability zero.
        Self::new(raw).expect("nonzero gaussian draw")
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.theta
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn m_qubits(&self) -> u32 {
        self.theta.len().trailing_zeros()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.theta)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOL
    }
}

pub(crate) fn l2_norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// First `2^M` entries of row `x` of the `N`-qubit transform matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierRow {
    entries: Vec<C64>,
}

impl FourierRow {
    pub fn new(n_qubits: u32, m_qubits: u32, x: u128) -> Result<Self> {
        check_outcome(x, n_qubits)?;
        let scale = pow2_neg(n_qubits).sqrt();
        let entries = (0..1u128 << m_qubits)
            .map(|j| cis_turns(turns(x, j, n_qubits)) * scale)
            .collect();
        Ok(Self { entries })
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.entries
    }

    /// `u_x^T v` (no conjugation).
    pub fn dot(&self, v: &[C64]) -> C64 {
        self.entries.iter().zip(v).map(|(u, t)| u * t).sum()
    }
}

/// `Σ_j θ_j e^{2πi x j / 2^N} / √(2^N)` for arbitrary (not necessarily
/// normalized) amplitudes.
pub fn amplitude_of(theta: &[C64], n_qubits: u32, x: u128) -> C64 {
    let sum: C64 = theta
        .iter()
        .enumerate()
        .map(|(j, t)| t * cis_turns(turns(x, j as u128, n_qubits)))
        .sum();
    sum * pow2_neg(n_qubits).sqrt()
}

/// An MSB-first bit prefix of an outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BitPrefix {
    bits: u128,
    len: u32,
}

impl BitPrefix {
    pub const EMPTY: Self = Self { bits: 0, len: 0 };

    pub fn new(bits: u128, len: u32) -> Result<Self> {
        if len > MAX_QUBITS || (len < 128 && bits >> len != 0) {
            return domain(format!("prefix value {bits} does not fit in {len} bits"));
        }
        Ok(Self { bits, len })
    }

    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&self, bit: bool) -> Self {
        Self {
            bits: (self.bits << 1) | bit as u128,
            len: self.len + 1,
        }
    }
}

impl std::str::FromStr for BitPrefix {
    type Err = SlmcError;

    fn from_str(s: &str) -> Result<Self> {
        s.chars().try_fold(Self::EMPTY, |p, c| match c {
            '0' => Ok(p.push(false)),
            '1' => Ok(p.push(true)),
            other => domain(format!("invalid prefix character {other:?}")),
        })
    }
}

/// The `(N, M, θ)` proposal distribution over `[0, 2^N)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierProposal {
    n_qubits: u32,
    theta: ParamVector,
}

impl FourierProposal {
    pub fn new(n_qubits: u32, theta: ParamVector) -> Result<Self> {
        let m = theta.m_qubits();
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return domain(format!("n_qubits must lie in 1..={MAX_QUBITS}, got {n_qubits}"));
        }
        if m == 0 || m > n_qubits {
            return domain(format!("m_qubits must lie in 1..={n_qubits}, got {m}"));
        }
        if !theta.is_normalized() {
            return Err(SlmcError::NotNormalized { norm: theta.norm() });
        }
        Ok(Self { n_qubits, theta })
    }

    pub fn uniform(n_qubits: u32, m_qubits: u32) -> Result<Self> {
        Self::new(n_qubits, ParamVector::uniform(m_qubits))
    }

    pub fn n_qubits(&self) -> u32 {
        self.n_qubits
    }

    pub fn m_qubits(&self) -> u32 {
        self.theta.m_qubits()
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn row(&self, x: u128) -> Result<FourierRow> {
        FourierRow::new(self.n_qubits, self.m_qubits(), x)
    }

    pub fn amplitude(&self, x: u128) -> Result<C64> {
        check_outcome(x, self.n_qubits)?;
        Ok(amplitude_of(self.theta.as_slice(), self.n_qubits, x))
    }

    pub fn prob(&self, x: u128) -> Result<f64> {
        self.amplitude(x).map(|a| a.norm_sqr())
    }

    /// Total probability of all outcomes whose top `prefix.len()` bits equal
    /// `prefix`, summed in closed form over the `2^(N-t)` suffixes.
    pub fn prefix_mass(&self, prefix: BitPrefix) -> Result<f64> {
        let n = self.n_qubits;
        let t = prefix.len();
        if t > n {
            return domain(format!("prefix of {t} bits longer than {n} qubits"));
        }
        let theta = self.theta.as_slice();
        let dim = theta.len();
        // Geometric-sum kernel 2^-N Σ_s e^{2πi s d / 2^N}, with the phase
        // e^{iπ d (2^-t - 2^-N)} folded into the coefficients below.
        let shift = pow2_neg(t) - pow2_neg(n);
        let coeffs: Vec<C64> = theta
            .iter()
            .enumerate()
            .map(|(j, th)| {
                let turn = turns(prefix.bits(), j as u128, t) + 0.5 * j as f64 * shift;
                th * cis_turns(turn)
            })
            .collect();
        let kernel: Vec<f64> = (0..dim)
            .map(|d| {
                if d == 0 {
                    pow2_neg(t)
                } else {
                    let d = d as f64;
                    (PI * d * pow2_neg(t)).sin() / ((PI * d * pow2_neg(n)).sin() * 2f64.powi(n as i32))
                }
            })
            .collect();
        let mut mass = kernel[0] * coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>();
        for j in 1..dim {
            let cross: C64 = (0..j).map(|k| coeffs[j] * coeffs[k].conj() * kernel[j - k]).sum();
            mass += 2.0 * cross.re;
        }
        Ok(mass)
    }

    /// One exact draw, by adaptive-measurement simulation of the transform.
    ///
    /// Output bits are measured least-significant first. Bit `k` comes from
    /// input qubit `N-1-k`, which is phase-rotated by the bits already
    /// measured, Hadamard-transformed and measured. The `N-M` padding qubits
    /// are tracked as independent two-level states; the parameter register
    /// is tracked as a single state that halves with each measurement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u128 {
        let n = self.n_qubits;
        let m = self.m_qubits();
        let mut measured: u128 = 0;

        for k in 0..n - m {
            let phase = C64::from_polar(1.0, PI * measured as f64 * pow2_neg(k));
            let qubit = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
            let out0 = (qubit[0] + phase * qubit[1]) * FRAC_1_SQRT_2;
            let out1 = (qubit[0] - phase * qubit[1]) * FRAC_1_SQRT_2;
            let (p0, p1) = (out0.norm_sqr(), out1.norm_sqr());
            if rng.random::<f64>() * (p0 + p1) >= p0 {
                measured |= 1 << k;
            }
        }

        let mut register = self.theta.as_slice().to_vec();
        for k in n - m..n {
            let half = register.len() / 2;
            let phase = C64::from_polar(1.0, PI * measured as f64 * pow2_neg(k));
            let (lo, hi) = register.split_at(half);
            let mut p0 = 0.0;
            let mut p1 = 0.0;
            for (a, b) in lo.iter().zip(hi) {
                let rotated = phase * b;
                p0 += (a + rotated).norm_sqr();
                p1 += (a - rotated).norm_sqr();
            }
            let bit = rng.random::<f64>() * (p0 + p1) >= p0;
            let (sign, p) = if bit { (-1.0, p1) } else { (1.0, p0) };
            let scale = 1.0 / p.sqrt();
            for i in 0..half {
                register[i] = (register[i] + sign * phase * register[half + i]) * scale;
            }
            register.truncate(half);
            if bit {
                measured |= 1 << k;
            }
        }
        measured
    }

    /// One exact draw by bitwise inverse-CDF over `prefix_mass`, MSB first.
    /// Costs `O(N·4^M)`; kept as an independent cross-check of `sample`.
    pub fn sample_by_prefix<R: Rng + ?Sized>(&self, rng: &mut R) -> u128 {
        let mut prefix = BitPrefix::EMPTY;
        for _ in 0..self.n_qubits {
            let zero = prefix.push(false);
            let one = prefix.push(true);
            let m0 = self.prefix_mass(zero).expect("prefix within range").max(0.0);
            let m1 = self.prefix_mass(one).expect("prefix within range").max(0.0);
            prefix = if rng.random::<f64>() * (m0 + m1) < m0 { zero } else { one };
        }
        prefix.bits()
    }

    /// Conjugated cross-entropy gradient estimate
    /// `-(1/B) Σ_i p(r_i)/q(r_i)² (u_{r_i}^T θ) u_{r_i}^*`.
    pub fn grad_theta(&self, samples: &[u128], target_vals: &[f64]) -> Result<Vec<C64>> {
        if samples.is_empty() {
            return domain("empty sample batch");
        }
        if samples.len() != target_vals.len() {
            return Err(SlmcError::Shape {
                expected: samples.len(),
                got: target_vals.len(),
            });
        }
        let mut grad = vec![C64::new(0.0, 0.0); self.theta.len()];
        let inv_b = 1.0 / samples.len() as f64;
        for (&r, &p) in samples.iter().zip(target_vals) {
            if p == 0.0 {
                continue;
            }
            let row = self.row(r)?;
            let amp = row.dot(self.theta.as_slice());
            let q = amp.norm_sqr().max(PROB_FLOOR);
            let w = -inv_b * p / (q * q);
            for (g, u) in grad.iter_mut().zip(row.as_slice()) {
                *g += amp * u.conj() * w;
            }
        }
        Ok(grad)
    }

    /// Every `q(x)` for `x` in `[0, 2^N)`, by one inverse FFT of the
    /// zero-padded parameter vector.
    pub fn full_table(&self) -> Result<Vec<f64>> {
        if self.n_qubits > MAX_TABLE_QUBITS {
            return Err(SlmcError::Budget(format!(
                "full table over {} qubits exceeds the {MAX_TABLE_QUBITS}-qubit limit",
                self.n_qubits
            )));
        }
        let fft = FftPlanner::<f64>::new().plan_fft_inverse(1usize << self.n_qubits);
        Ok(self.table_with(fft.as_ref()))
    }

    /// [`Self::full_table`] with a prepared inverse FFT of length `2^N`.
    pub(crate) fn table_with(&self, fft: &dyn Fft<f64>) -> Vec<f64> {
        let size = 1usize << self.n_qubits;
        debug_assert_eq!(fft.len(), size);
        let mut buf = vec![C64::new(0.0, 0.0); size];
        buf[..self.theta.len()].copy_from_slice(self.theta.as_slice());
        fft.process(&mut buf);
        let scale = pow2_neg(self.n_qubits);
        buf.iter().map(|c| c.norm_sqr() * scale).collect()
    }
}

/// Inverse-CDF sampler over an explicit probability table.
#[derive(Clone, Debug)]
pub struct TableSampler {
    cdf: Vec<f64>,
}

impl TableSampler {
    pub fn new(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return domain("empty probability table");
        }
        let mut acc = 0.0;
        let cdf: Vec<f64> = probs
            .iter()
            .map(|&p| {
                acc += p.max(0.0);
                acc
            })
            .collect();
        if !(acc > 0.0 && acc.is_finite()) {
            return domain("probability table has no mass");
        }
        Ok(Self { cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("nonempty");
        let u = rng.random::<f64>() * total;
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{chi_square_gof, tv_distance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Brute-force DFT of the zero-padded vector, 2^N points.
    fn dft_oracle(theta: &[C64], n: u32) -> Vec<C64> {
        let size = 1usize << n;
        (0..size)
            .map(|x| {
                let mut acc = c(0.0, 0.0);
                for (j, t) in theta.iter().enumerate() {
                    let ang = 2.0 * PI * ((x * j) % size) as f64 / size as f64;
                    acc += t * C64::from_polar(1.0, ang);
                }
                acc / (size as f64).sqrt()
            })
            .collect()
    }

    fn seeded(n: u32, m: u32, seed: u64) -> FourierProposal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FourierProposal::new(n, ParamVector::random(m, &mut rng)).unwrap()
    }

    #[test]
    fn two_point_cancellation() {
        let h = FRAC_1_SQRT_2;
        let p = FourierProposal::new(1, ParamVector::new(vec![c(h, 0.0), c(h, 0.0)]).unwrap()).unwrap();
        assert!((p.amplitude(0).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!(p.prob(1).unwrap() < 1e-30);

        let p = FourierProposal::new(1, ParamVector::new(vec![c(h, 0.0), c(-h, 0.0)]).unwrap()).unwrap();
        assert!(p.prob(0).unwrap() < 1e-30);
        assert!((p.prob(1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_mode_has_flat_modulus() {
        for (n, m, j) in [(3, 2, 1), (6, 3, 5), (10, 4, 15)] {
            let p = FourierProposal::new(n, ParamVector::basis(m, j).unwrap()).unwrap();
            for x in 0..1u128 << n {
                let a = p.amplitude(x).unwrap().norm();
                assert!((a - pow2_neg(n).sqrt()).abs() < 1e-14);
            }
        }
        let p = FourierProposal::uniform(6, 2).unwrap();
        assert!((0..64).all(|x| (p.prob(x).unwrap() - 1.0 / 64.0).abs() < 1e-15));
    }

    #[test]
    fn amplitude_matches_dft_n4_m2() {
        let theta = ParamVector::new(vec![c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let oracle = dft_oracle(theta.as_slice(), 4);
        let p = FourierProposal::new(4, theta).unwrap();
        assert!((p.amplitude(3).unwrap() - oracle[3]).norm() < 1e-14);
    }

    #[test]
    fn prob_matches_dft_n6_m3() {
        let p = seeded(6, 3, 7);
        let oracle = dft_oracle(p.theta().as_slice(), 6);
        let dev = (0..64)
            .map(|x| (p.prob(x as u128).unwrap() - oracle[x].norm_sqr()).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12, "{dev}");
    }

    #[test]
    fn full_table_matches_prob() {
        let p = seeded(9, 4, 3);
        let table = p.full_table().unwrap();
        for (x, t) in table.iter().enumerate() {
            assert!((t - p.prob(x as u128).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn out_of_range_outcome_is_rejected() {
        let p = FourierProposal::uniform(4, 2).unwrap();
        assert!(matches!(p.prob(16), Err(SlmcError::Domain(_))));
        assert!(p.prob(15).is_ok());
    }

    #[test]
    fn construction_checks() {
        assert!(ParamVector::new(vec![c(1.0, 0.0); 3]).is_err());
        assert!(matches!(ParamVector::new(vec![c(0.0, 0.0); 4]), Err(SlmcError::DegenerateNorm)));
        assert!(FourierProposal::new(2, ParamVector::uniform(3)).is_err());
        let bad = ParamVector::from_raw_unchecked(vec![c(2.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(FourierProposal::new(3, bad), Err(SlmcError::NotNormalized { .. })));
    }

    #[test]
    fn prefix_mass_trivial_cases() {
        let p = seeded(8, 3, 11);
        assert!((p.prefix_mass(BitPrefix::EMPTY).unwrap() - 1.0).abs() < 1e-12);
        let u = FourierProposal::uniform(8, 3).unwrap();
        assert!((u.prefix_mass("1".parse().unwrap()).unwrap() - 0.5).abs() < 1e-15);
        assert!(p.prefix_mass("101010101".parse().unwrap()).is_err());
    }

    #[test]
    fn prefix_mass_matches_exhaustive_sum() {
        let p = seeded(8, 3, 5);
        // prefix "101" over 8 bits covers x = 0b101_xxxxx.
        let exhaustive: f64 = (0..32u128).map(|s| p.prob((0b101 << 5) | s).unwrap()).sum();
        let closed = p.prefix_mass("101".parse().unwrap()).unwrap();
        assert!((closed - exhaustive).abs() < 1e-12, "{closed} vs {exhaustive}");
        // Full-length prefix is a single outcome.
        let full = BitPrefix::new(0b1011_0110, 8).unwrap();
        assert!((p.prefix_mass(full).unwrap() - p.prob(0b1011_0110).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn deterministic_two_point_draw() {
        let h = FRAC_1_SQRT_2;
        let p = FourierProposal::new(1, ParamVector::new(vec![c(h, 0.0), c(h, 0.0)]).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| p.sample(&mut rng) == 0));
    }

    #[test]
    fn uniform_draws_pass_chi_square() {
        let p = FourierProposal::uniform(6, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = vec![0u64; 64];
        for _ in 0..100_000 {
            counts[p.sample(&mut rng) as usize] += 1;
        }
        let gof = chi_square_gof(&counts, &vec![1.0 / 64.0; 64]).unwrap();
        assert!(gof.p_value > 0.01, "{gof:?}");
    }

    #[test]
    fn adaptive_draws_match_exhaustive_distribution() {
        // 64 cells keep the expected sampling TV at 10^6 draws near 0.003.
        let p = seeded(6, 4, 99);
        let probs = p.full_table().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = vec![0u64; 64];
        for _ in 0..1_000_000 {
            counts[p.sample(&mut rng) as usize] += 1;
        }
        let tv = tv_distance(&counts, &probs);
        assert!(tv < 0.005, "tv = {tv}");
    }

    #[test]
    fn both_backends_agree() {
        let p = seeded(6, 2, 8);
        let probs = p.full_table().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = vec![0u64; 64];
        let mut b = vec![0u64; 64];
        for _ in 0..200_000 {
            a[p.sample(&mut rng) as usize] += 1;
            b[p.sample_by_prefix(&mut rng) as usize] += 1;
        }
        assert!(chi_square_gof(&a, &probs).unwrap().p_value > 0.001);
        assert!(chi_square_gof(&b, &probs).unwrap().p_value > 0.001);
    }

    #[test]
    fn wide_register_draw_is_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = FourierProposal::new(100, ParamVector::random(4, &mut rng)).unwrap();
        for _ in 0..100 {
            assert!(p.sample(&mut rng) < 1u128 << 100);
        }
    }

    #[test]
    fn grad_zero_targets_vanish() {
        let p = seeded(5, 2, 1);
        let g = p.grad_theta(&[1, 2, 3], &[0.0; 3]).unwrap();
        assert!(g.iter().all(|z| z.norm() == 0.0));
        assert!(p.grad_theta(&[], &[]).is_err());
        assert!(p.grad_theta(&[1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn grad_single_uniform_term() {
        // θ = e_0, r = 0, p = 2^-N: weight p/q² = 2^N, u_0^T θ = 2^{-N/2},
        // (u_0^*)_j = 2^{-N/2}; each entry equals -2^N · 2^-N = -1.
        let n = 5;
        let p = FourierProposal::uniform(n, 2).unwrap();
        let g = p.grad_theta(&[0], &[pow2_neg(n)]).unwrap();
        let amp = p.amplitude(0).unwrap();
        let q = p.prob(0).unwrap();
        let row = p.row(0).unwrap();
        for (gj, uj) in g.iter().zip(row.as_slice()) {
            let expected = -(pow2_neg(n) / (q * q)) * amp * uj.conj();
            assert!((gj - expected).norm() < 1e-12);
            assert!((gj - c(-1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn grad_matches_finite_differences() {
        let n = 6;
        let p = seeded(n, 3, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let samples: Vec<u128> = (0..64).map(|_| p.sample(&mut rng)).collect();
        let targets: Vec<f64> = samples.iter().map(|&r| 0.5 + (r as f64 / 64.0).powi(2)).collect();
        // Surrogate loss -(1/B) Σ w_i log q(r_i; θ) with w_i = p_i / q_i frozen.
        let weights: Vec<f64> = samples
            .iter()
            .zip(&targets)
            .map(|(&r, &t)| t / p.prob(r).unwrap())
            .collect();
        let loss = |theta: &[C64]| -> f64 {
            samples
                .iter()
                .zip(&weights)
                .map(|(&r, &w)| -w * amplitude_of(theta, n, r).norm_sqr().ln())
                .sum::<f64>()
                / samples.len() as f64
        };
        let g = p.grad_theta(&samples, &targets).unwrap();
        let h = 1e-6;
        let base = p.theta().as_slice().to_vec();
        let mut fd = vec![c(0.0, 0.0); base.len()];
        for j in 0..base.len() {
            for (k, dir) in [c(1.0, 0.0), c(0.0, 1.0)].into_iter().enumerate() {
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[j] += dir * h;
                minus[j] -= dir * h;
                let d = (loss(&plus) - loss(&minus)) / (2.0 * h);
                // ∂L/∂θ* = (∂L/∂a + i ∂L/∂b) / 2
                if k == 0 {
                    fd[j].re = 0.5 * d;
                } else {
                    fd[j].im = 0.5 * d;
                }
            }
        }
        let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let scale = l2_norm(&fd);
        assert!(err / scale < 1e-5, "relative error {}", err / scale);
    }

    #[test]
    fn bit_prefix_parsing() {
        let p: BitPrefix = "0110".parse().unwrap();
        assert_eq!((p.bits(), p.len()), (6, 4));
        assert!("01x".parse::<BitPrefix>().is_err());
        assert!(BitPrefix::new(4, 2).is_err());
    }

    #[test]
    fn table_sampler_hits_support_only() {
        let t = TableSampler::new(&[0.0, 0.3, 0.0, 0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!((0..1000).all(|_| matches!(t.sample(&mut rng), 1 | 3)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn prob_equals_padded_dft(seed in any::<u64>(), n in 1u32..=12, m_off in 0u32..4) {
                let m = (n.min(5)).saturating_sub(m_off).max(1);
                let p = seeded(n, m, seed);
                let oracle = dft_oracle(p.theta().as_slice(), n);
                for (x, o) in oracle.iter().enumerate() {
                    prop_assert!((p.prob(x as u128).unwrap() - o.norm_sqr()).abs() < 1e-12);
                }
            }

            #[test]
            fn total_mass_is_one(seed in any::<u64>(), n in 1u32..=14, m in 1u32..=4) {
                let m = m.min(n);
                let p = seeded(n, m, seed);
                let total: f64 = p.full_table().unwrap().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert!((p.prefix_mass(BitPrefix::EMPTY).unwrap() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn prefix_mass_splits(seed in any::<u64>(), n in 2u32..=40, bits in any::<u64>(), t in 0u32..40) {
                let p = seeded(n, 3.min(n), seed);
                let t = t % n;
                let prefix = BitPrefix::new(bits as u128 & ((1u128 << t) - 1), t).unwrap();
                let whole = p.prefix_mass(prefix).unwrap();
                let split = p.prefix_mass(prefix.push(false)).unwrap() + p.prefix_mass(prefix.push(true)).unwrap();
                prop_assert!((whole - split).abs() < 1e-12);
            }

            #[test]
            fn real_theta_gives_mirror_symmetry(seed in any::<u64>(), n in 2u32..=10) {
                let m = 3.min(n);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let raw: Vec<C64> = (0..1 << m).map(|_| c(rng.random::<f64>() - 0.5, 0.0)).collect();
                let p = FourierProposal::new(n, ParamVector::new(raw).unwrap()).unwrap();
                let size = 1u128 << n;
                for x in 0..size {
                    let mirror = (size - x) % size;
                    prop_assert!((p.prob(x).unwrap() - p.prob(mirror).unwrap()).abs() < 1e-13);
                }
            }
        }
    }
}
