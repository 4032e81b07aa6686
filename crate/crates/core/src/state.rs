//! Statevectors, gate application, partial traces and von Neumann entropy.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Tolerance for the norm / trace / hermiticity checks.
pub const STATE_TOL: f64 = 1e-10;

/// Eigenvalues below this floor contribute nothing to the entropy.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    H,
    Cnot,
}

impl GateKind {
    pub const SINGLE_QUBIT: [GateKind; 4] = [GateKind::Rx, GateKind::Ry, GateKind::Rz, GateKind::H];

    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz)
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::Cnot => 2,
            _ => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::H => "H",
            GateKind::Cnot => "CNOT",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "RX" => GateKind::Rx,
            "RY" => GateKind::Ry,
            "RZ" => GateKind::Rz,
            "H" => GateKind::H,
            "CNOT" => GateKind::Cnot,
            _ => return None,
        })
    }

    /// 2×2 matrix of a single-qubit gate, rotations as `exp(−i θ/2 σ_a)`.
    pub fn single_qubit_matrix(self, angle: f64) -> [[C64; 2]; 2] {
        let (s, c) = (angle / 2.0).sin_cos();
        let cc = C64::new(c, 0.0);
        match self {
            GateKind::Rx => [[cc, C64::new(0.0, -s)], [C64::new(0.0, -s), cc]],
            GateKind::Ry => [[cc, C64::new(-s, 0.0)], [C64::new(s, 0.0), cc]],
            GateKind::Rz => [[C64::new(c, -s), ZERO], [ZERO, C64::new(c, s)]],
            GateKind::H => {
                let h = C64::new(FRAC_1_SQRT_2, 0.0);
                [[h, h], [h, -h]]
            }
            GateKind::Cnot => panic!("CNOT is not a single-qubit gate"),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Applies a 2×2 matrix to bit `bit` of every index in `amps`.
#[inline]
pub(crate) fn apply_1q(amps: &mut [C64], bit: usize, m: &[[C64; 2]; 2]) {
    let step = 1usize << bit;
    let mut base = 0;
    while base < amps.len() {
        for i0 in base..base + step {
            let i1 = i0 | step;
            let a0 = amps[i0];
            let a1 = amps[i1];
            amps[i0] = m[0][0] * a0 + m[0][1] * a1;
            amps[i1] = m[1][0] * a0 + m[1][1] * a1;
        }
        base += step << 1;
    }
}

/// CNOT on index bits: flips `target_bit` where `control_bit` is set.
#[inline]
pub(crate) fn apply_cnot(amps: &mut [C64], control_bit: usize, target_bit: usize) {
    let cm = 1usize << control_bit;
    let tm = 1usize << target_bit;
    for i in 0..amps.len() {
        if i & cm != 0 && i & tm == 0 {
            amps.swap(i, i | tm);
        }
    }
}

/// Normalized pure state of an `n_sites` spin-1/2 chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: Vec<C64>,
    n_sites: usize,
}

impl PureState {
    /// Wraps `amps`, rejecting non-power-of-two lengths and unnormalized vectors.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::InvalidState(format!("length {len} is not a power of two")));
        }
        let norm = norm_sqr(&amps);
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("norm² = {norm}")));
        }
        Ok(Self {
            n_sites: len.trailing_zeros() as usize,
            amps,
        })
    }

    /// Normalizes `amps` first.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self> {
        let n = norm_sqr(&amps).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidState("zero or non-finite norm".into()));
        }
        amps.iter_mut().for_each(|a| *a /= n);
        Self::new(amps)
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::normalized(amps.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_sites: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_sites];
        amps[index] = ONE;
        Self { amps, n_sites }
    }

    /// `(|+⟩^⊗N + |−⟩^⊗N)/√2`, the GHZ state in the x basis.
    pub fn x_ghz(n_sites: usize) -> Self {
        // |±⟩^⊗N = 2^{-N/2} Σ_b (±1)^{|b|} |b⟩, so the sum keeps even-weight b.
        let d = 1usize << n_sites;
        let amp = (2.0f64).powf(-(n_sites as f64 - 1.0) / 2.0);
        let amps = (0..d)
            .map(|b| if b.count_ones() % 2 == 0 { C64::new(amp, 0.0) } else { ZERO })
            .collect();
        Self { amps, n_sites }
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites {
            return Err(Error::SiteOutOfRange {
                index: site,
                n_sites: self.n_sites,
            });
        }
        Ok(())
    }

    /// Applies one gate in place; see [`apply_gate`].
    pub fn apply_gate_mut(&mut self, kind: GateKind, qubits: &[usize], angle: Option<f64>) -> Result<()> {
        if qubits.len() != kind.arity() {
            return Err(Error::InvalidGate(format!(
                "{kind} acts on {} qubit(s), got {}",
                kind.arity(),
                qubits.len()
            )));
        }
        for &q in qubits {
            self.check_site(q)?;
        }
        match (kind.is_rotation(), angle) {
            (true, None) => return Err(Error::InvalidGate(format!("{kind} requires an angle"))),
            (false, Some(_)) => return Err(Error::InvalidGate(format!("{kind} takes no angle"))),
            (true, Some(a)) if !a.is_finite() => {
                return Err(Error::InvalidGate(format!("non-finite angle {a}")))
            }
            _ => {}
        }
        match kind {
            GateKind::Cnot => {
                if qubits[0] == qubits[1] {
                    return Err(Error::InvalidGate("CNOT control equals target".into()));
                }
                apply_cnot(&mut self.amps, qubits[0], qubits[1]);
            }
            _ => {
                let m = kind.single_qubit_matrix(angle.unwrap_or(0.0));
                apply_1q(&mut self.amps, qubits[0], &m);
            }
        }
        Ok(())
    }

    /// Applies a `2^k × 2^k` unitary to `sites` (sites[0] most significant).
    pub fn apply_unitary(&mut self, sites: &[usize], u: &DMatrix<C64>) -> Result<()> {
        let layout = SubsystemLayout::new(self.n_sites, sites)?;
        let d = layout.sub_dim();
        if u.nrows() != d || u.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: u.nrows(),
            });
        }
        let mut buf = vec![ZERO; d];
        for base in layout.complement_bases() {
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = self.amps[base | layout.offsets[i]];
            }
            for i in 0..d {
                let mut acc = ZERO;
                for (j, b) in buf.iter().enumerate() {
                    acc += u[(i, j)] * b;
                }
                self.amps[base | layout.offsets[i]] = acc;
            }
        }
        Ok(())
    }
}

fn norm_sqr(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

/// Applies `kind` to `qubits` and returns the new state.
pub fn apply_gate(state: &PureState, kind: GateKind, qubits: &[usize], angle: Option<f64>) -> Result<PureState> {
    let mut out = state.clone();
    out.apply_gate_mut(kind, qubits, angle)?;
    Ok(out)
}

/// Bit bookkeeping for a subsystem given as an ordered site list.
pub(crate) struct SubsystemLayout {
    n_sites: usize,
    mask: usize,
    /// `offsets[i]`: full-index bits of sub-index `i`.
    pub(crate) offsets: Vec<usize>,
}

impl SubsystemLayout {
    pub(crate) fn new(n_sites: usize, sites: &[usize]) -> Result<Self> {
        let mut mask = 0usize;
        for &s in sites {
            if s >= n_sites {
                return Err(Error::SiteOutOfRange { index: s, n_sites });
            }
            if mask >> s & 1 == 1 {
                return Err(Error::InvalidState(format!("duplicate site {s}")));
            }
            mask |= 1 << s;
        }
        let k = sites.len();
        let offsets = (0..1usize << k)
            .map(|i| {
                sites
                    .iter()
                    .enumerate()
                    .filter(|(pos, _)| i >> (k - 1 - pos) & 1 == 1)
                    .fold(0usize, |acc, (_, &s)| acc | 1 << s)
            })
            .collect();
        Ok(Self {
            n_sites,
            mask,
            offsets,
        })
    }

    pub(crate) fn sub_dim(&self) -> usize {
        self.offsets.len()
    }

    /// Full indices with all subsystem bits clear.
    pub(crate) fn complement_bases(&self) -> impl Iterator<Item = usize> + '_ {
        let comp = !self.mask & ((1usize << self.n_sites) - 1);
        // enumerate submasks of `comp` in increasing order
        let count = 1usize << comp.count_ones();
        let mut cur = 0usize;
        (0..count).map(move |_| {
            let out = cur;
            cur = (cur.wrapping_sub(comp)) & comp;
            out
        })
    }
}

/// Reduced density matrix of an ordered list of sites.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<C64>,
    sites: Vec<usize>,
}

impl DensityMatrix {
    /// Validates hermiticity, unit trace and positivity.
    pub fn new(entries: DMatrix<C64>, sites: Vec<usize>) -> Result<Self> {
        let d = entries.nrows();
        if d != entries.ncols() || d == 0 {
            return Err(Error::InvalidDensity("not square".into()));
        }
        check_hermitian(&entries)?;
        let tr = entries.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidDensity(format!("trace = {tr}")));
        }
        let rho = Self { entries, sites };
        if let Some(&min) = rho.eigenvalues_raw().first() {
            if min < -STATE_TOL {
                return Err(Error::InvalidDensity(format!("negative eigenvalue {min}")));
            }
        }
        Ok(rho)
    }

    /// Diagonal density matrix (mainly for tests).
    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        let d = probs.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &p) in probs.iter().enumerate() {
            m[(i, i)] = C64::new(p, 0.0);
        }
        Self::new(m, Vec::new())
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    fn eigenvalues_raw(&self) -> Vec<f64> {
        let mut ev = hermitian_eigenvalues(&self.entries);
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Eigenvalues clamped to `[0, 1]`, sorted non-increasing.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.eigenvalues_raw().into_iter().map(|e| e.clamp(0.0, 1.0)).collect();
        ev.reverse();
        ev
    }
}

fn check_hermitian(m: &DMatrix<C64>) -> Result<()> {
    let d = m.nrows();
    for i in 0..d {
        for j in i..d {
            let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
            if dev > STATE_TOL {
                return Err(Error::InvalidDensity(format!(
                    "not Hermitian at ({i},{j}): deviation {dev:e}"
                )));
            }
        }
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix (closed form for 2×2).
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 2 {
        let (a, b, d) = (m[(0, 0)].re, m[(0, 1)], m[(1, 1)].re);
        let (lo, hi) = eig2(a, b, d);
        return vec![lo, hi];
    }
    m.clone().symmetric_eigenvalues().iter().copied().collect()
}

/// Eigenvalues `(low, high)` of `[[a, b], [b*, d]]`.
#[inline]
pub(crate) fn eig2(a: f64, b: C64, d: f64) -> (f64, f64) {
    let mean = 0.5 * (a + d);
    let half = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    (mean - half, mean + half)
}

/// Reduced density matrix of `sites`; `sites[0]` is the most significant factor.
pub fn reduced_density(state: &PureState, sites: &[usize]) -> Result<DensityMatrix> {
    if sites.is_empty() || sites.len() > 5 {
        return Err(Error::InvalidState(format!(
            "reduced density needs 1..=5 sites, got {}",
            sites.len()
        )));
    }
    let layout = SubsystemLayout::new(state.n_sites, sites)?;
    let d = layout.sub_dim();
    let mut rho = DMatrix::<C64>::zeros(d, d);
    let amps = &state.amps;
    let mut col = vec![ZERO; d];
    for base in layout.complement_bases() {
        for (i, c) in col.iter_mut().enumerate() {
            *c = amps[base | layout.offsets[i]];
        }
        for j in 0..d {
            let cj = col[j].conj();
            if cj == ZERO {
                continue;
            }
            for i in 0..d {
                rho[(i, j)] += col[i] * cj;
            }
        }
    }
    Ok(DensityMatrix {
        entries: rho,
        sites: sites.to_vec(),
    })
}

/// `−Σ p log₂ p` with the eigenvalue floor applied.
pub fn shannon_bits(probs: impl IntoIterator<Item = f64>) -> f64 {
    let s: f64 = probs
        .into_iter()
        .map(|p| p.clamp(0.0, 1.0))
        .filter(|&p| p > EIGEN_FLOOR)
        .map(|p| -p * p.log2())
        .sum();
    s.max(0.0)
}

/// Von Neumann entropy in bits.
pub fn entropy(rho: &DensityMatrix) -> Result<f64> {
    check_hermitian(&rho.entries)?;
    let d = rho.dim() as f64;
    Ok(shannon_bits(rho.eigenvalues()).min(d.log2()))
}

/// Entropy of one qubit from its 2×2 reduced density entries.
#[inline]
pub fn qubit_entropy(a: f64, b: C64, d: f64) -> f64 {
    let tr = a + d;
    let (lo, hi) = eig2(a / tr, b / tr, d / tr);
    shannon_bits([lo, hi]).min(1.0)
}

/// Entropy of the single-site reduced state at `site`.
pub fn site_entropy(state: &PureState, site: usize) -> Result<f64> {
    entropy(&reduced_density(state, &[site])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bell() -> PureState {
        let s = FRAC_1_SQRT_2;
        PureState::from_real(&[s, 0.0, 0.0, s]).unwrap()
    }

    fn random_state(n: usize, seed: u64) -> PureState {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..1 << n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        PureState::normalized(amps).unwrap()
    }

    fn assert_close(a: &[C64], b: &[C64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).norm() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn hadamard_on_zero() {
        let out = apply_gate(&PureState::basis(1, 0), GateKind::H, &[0], None).unwrap();
        let s = C64::new(FRAC_1_SQRT_2, 0.0);
        assert_close(out.amplitudes(), &[s, s], 1e-15);
    }

    #[test]
    fn rz_keeps_basis_probabilities() {
        for b in 0..8 {
            let s = PureState::basis(3, b);
            let out = apply_gate(&s, GateKind::Rz, &[1], Some(0.77)).unwrap();
            for (x, y) in s.amplitudes().iter().zip(out.amplitudes()) {
                assert!((x.norm_sqr() - y.norm_sqr()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cnot_disentangles_bell_pair() {
        // site 0 is bit 0; |00⟩+|11⟩ → |00⟩+|01⟩ (bit 0 set) = |+⟩ on site 0
        let out = apply_gate(&bell(), GateKind::Cnot, &[0, 1], None).unwrap();
        let s = C64::new(FRAC_1_SQRT_2, 0.0);
        assert_close(out.amplitudes(), &[s, s, ZERO, ZERO], 1e-15);
        assert!(site_entropy(&out, 0).unwrap() < 1e-12);
        assert!(site_entropy(&out, 1).unwrap() < 1e-12);
    }

    #[test]
    fn rotation_conventions() {
        // RX(π)|0⟩ = −i|1⟩, RY(π)|0⟩ = |1⟩, RZ(π)|0⟩ = −i|0⟩
        let z = PureState::basis(1, 0);
        let rx = apply_gate(&z, GateKind::Rx, &[0], Some(std::f64::consts::PI)).unwrap();
        assert_close(rx.amplitudes(), &[ZERO, C64::new(0.0, -1.0)], 1e-15);
        let ry = apply_gate(&z, GateKind::Ry, &[0], Some(std::f64::consts::PI)).unwrap();
        assert_close(ry.amplitudes(), &[ZERO, ONE], 1e-15);
        let rz = apply_gate(&z, GateKind::Rz, &[0], Some(std::f64::consts::PI)).unwrap();
        assert_close(rz.amplitudes(), &[C64::new(0.0, -1.0), ZERO], 1e-15);
    }

    #[test]
    fn gate_errors() {
        let s = PureState::basis(3, 0);
        assert!(matches!(
            apply_gate(&s, GateKind::H, &[3], None),
            Err(Error::SiteOutOfRange { .. })
        ));
        assert!(apply_gate(&s, GateKind::H, &[0], Some(1.0)).is_err());
        assert!(apply_gate(&s, GateKind::Cnot, &[0, 1], Some(1.0)).is_err());
        assert!(apply_gate(&s, GateKind::Rx, &[0], None).is_err());
        assert!(apply_gate(&s, GateKind::Cnot, &[1, 1], None).is_err());
        assert!(apply_gate(&s, GateKind::Cnot, &[1], None).is_err());
    }

    #[test]
    fn state_validation() {
        assert!(PureState::new(vec![ONE, ONE]).is_err());
        assert!(PureState::new(vec![ONE, ZERO, ZERO]).is_err());
        assert!(PureState::normalized(vec![ZERO, ZERO]).is_err());
    }

    #[test]
    fn reduced_density_examples() {
        let rho = reduced_density(&PureState::basis(5, 0), &[2]).unwrap();
        assert_eq!(rho.eigenvalues(), vec![1.0, 0.0]);
        assert!((rho.entries()[(0, 0)].re - 1.0).abs() < 1e-15);

        let rho = reduced_density(&bell(), &[0]).unwrap();
        assert!((rho.entries()[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((rho.entries()[(1, 1)].re - 0.5).abs() < 1e-15);
        assert!(rho.entries()[(0, 1)].norm() < 1e-15);

        assert!(reduced_density(&bell(), &[0, 0]).is_err());
        assert!(reduced_density(&bell(), &[2]).is_err());
        assert!(reduced_density(&PureState::basis(7, 0), &[0, 1, 2, 3, 4, 5]).is_err());
    }

    /// Partial trace by explicit summation over complement configurations.
    fn brute_force_partial_trace(state: &PureState, sites: &[usize]) -> DMatrix<C64> {
        let n = state.n_sites();
        let k = sites.len();
        let d = 1 << k;
        let mut rho = DMatrix::zeros(d, d);
        for x in 0..state.dim() {
            for y in 0..state.dim() {
                // same bits outside `sites`
                let outside_equal = (0..n).filter(|s| !sites.contains(s)).all(|s| (x >> s & 1) == (y >> s & 1));
                if !outside_equal {
                    continue;
                }
                let sub = |b: usize| sites.iter().fold(0, |acc, &s| acc << 1 | (b >> s & 1));
                rho[(sub(x), sub(y))] += state.amplitudes()[x] * state.amplitudes()[y].conj();
            }
        }
        rho
    }

    #[test]
    fn ghz_two_site_spectrum() {
        let ghz = PureState::x_ghz(8);
        assert!((ghz.norm() - 1.0).abs() < 1e-14);
        let rho = reduced_density(&ghz, &[3, 4]).unwrap();
        let bf = brute_force_partial_trace(&ghz, &[3, 4]);
        assert!((rho.entries() - &bf).norm() < 1e-12);
        let ev = rho.eigenvalues();
        let want = [0.5, 0.5, 0.0, 0.0];
        for (a, b) in ev.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn partial_trace_matches_brute_force_on_random_states() {
        let s = random_state(5, 3);
        for sites in [vec![0], vec![4, 1], vec![2, 0, 3], vec![1, 2, 3, 4, 0]] {
            let rho = reduced_density(&s, &sites).unwrap();
            let bf = brute_force_partial_trace(&s, &sites);
            assert!((rho.entries() - &bf).norm() < 1e-12);
            assert!((rho.entries().trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&DensityMatrix::diagonal(&[1.0, 0.0]).unwrap()).unwrap(), 0.0);
        assert!((entropy(&DensityMatrix::diagonal(&[0.5, 0.5]).unwrap()).unwrap() - 1.0).abs() < 1e-15);
        let uniform = DensityMatrix::diagonal(&[0.25; 4]).unwrap();
        assert!((entropy(&uniform).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn density_validation() {
        let mut m = DMatrix::<C64>::zeros(2, 2);
        m[(0, 0)] = C64::new(0.5, 0.0);
        m[(1, 1)] = C64::new(0.5, 0.0);
        m[(0, 1)] = C64::new(0.1, 0.0);
        assert!(matches!(DensityMatrix::new(m, vec![]), Err(Error::InvalidDensity(_))));
        assert!(DensityMatrix::diagonal(&[0.6, 0.6]).is_err());
        assert!(DensityMatrix::diagonal(&[1.2, -0.2]).is_err());
    }

    /// log(ρ) via the Mercator series of log(I − (I − ρ)).
    fn entropy_by_matrix_log(rho: &DMatrix<C64>) -> f64 {
        let d = rho.nrows();
        let id = DMatrix::<C64>::identity(d, d);
        let x = &id - rho;
        let mut term = x.clone();
        let mut log = DMatrix::<C64>::zeros(d, d);
        for k in 1..4000 {
            log -= &term / C64::new(k as f64, 0.0);
            term = &term * &x;
            if term.norm() < 1e-18 {
                break;
            }
        }
        -(rho * log).trace().re / std::f64::consts::LN_2
    }

    #[test]
    fn entropy_matches_matrix_logarithm() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for d in [2usize, 4, 8] {
            for _ in 0..5 {
                // well-conditioned: mix a random pure-state Gram with the identity
                let a = DMatrix::<C64>::from_fn(d, d, |_, _| {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                let g = &a * a.adjoint();
                let g = &g / g.trace();
                let rho = g * C64::new(0.5, 0.0)
                    + DMatrix::<C64>::identity(d, d) * C64::new(0.5 / d as f64, 0.0);
                let dm = DensityMatrix::new(rho.clone(), vec![]).unwrap();
                let s1 = entropy(&dm).unwrap();
                let s2 = entropy_by_matrix_log(&rho);
                assert!((s1 - s2).abs() < 1e-8, "{s1} vs {s2}");
            }
        }
    }

    #[test]
    fn qubit_entropy_matches_general_route() {
        let s = random_state(4, 9);
        let rho = reduced_density(&s, &[2]).unwrap();
        let e = rho.entries();
        let fast = qubit_entropy(e[(0, 0)].re, e[(0, 1)], e[(1, 1)].re);
        let mut m = e.clone();
        // force the general path through a 2×2 embedded in 4×4 block-diagonal
        m = m.resize(4, 4, ZERO);
        let general = shannon_bits(hermitian_eigenvalues(&m));
        assert!((fast - general).abs() < 1e-12);
    }

    #[test]
    fn apply_unitary_matches_gate() {
        let s = random_state(4, 21);
        let mut via_u = s.clone();
        // CNOT with control = sites[0] (most significant), target = sites[1]
        let mut u = DMatrix::<C64>::zeros(4, 4);
        u[(0, 0)] = ONE;
        u[(1, 1)] = ONE;
        u[(2, 3)] = ONE;
        u[(3, 2)] = ONE;
        via_u.apply_unitary(&[3, 1], &u).unwrap();
        let via_gate = apply_gate(&s, GateKind::Cnot, &[3, 1], None).unwrap();
        assert_close(via_u.amplitudes(), via_gate.amplitudes(), 1e-14);
    }

    fn gate_strategy() -> impl Strategy<Value = (GateKind, usize, usize, f64)> {
        (0usize..5, 0usize..5, 1usize..5, -10.0f64..10.0).prop_map(|(k, a, off, angle)| {
            let kind = [GateKind::Rx, GateKind::Ry, GateKind::Rz, GateKind::H, GateKind::Cnot][k];
            (kind, a, (a + off) % 5, angle)
        })
    }

    fn apply_random(state: &mut PureState, (kind, a, b, angle): (GateKind, usize, usize, f64)) {
        match kind {
            GateKind::Cnot => state.apply_gate_mut(kind, &[a, b], None).unwrap(),
            GateKind::H => state.apply_gate_mut(kind, &[a], None).unwrap(),
            _ => state.apply_gate_mut(kind, &[a], Some(angle)).unwrap(),
        }
    }

    proptest! {
        #[test]
        fn gates_preserve_norm(seed in 0u64..1000, gates in prop::collection::vec(gate_strategy(), 1..20)) {
            let mut s = random_state(5, seed);
            for g in gates {
                apply_random(&mut s, g);
            }
            prop_assert!((s.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn distant_gates_leave_reduced_state_unchanged(seed in 0u64..1000, gates in prop::collection::vec(gate_strategy(), 1..10)) {
            // sites {0, 1} observed; gates restricted to sites {2, 3, 4}
            let mut s = random_state(5, seed);
            let before = reduced_density(&s, &[0, 1]).unwrap();
            for (kind, a, b, angle) in gates {
                let (a, b) = (2 + a % 3, 2 + (a % 3 + 1 + b % 2) % 3);
                apply_random(&mut s, (kind, a, b, angle));
            }
            let after = reduced_density(&s, &[0, 1]).unwrap();
            prop_assert!((before.entries() - after.entries()).norm() < 1e-10);
        }

        #[test]
        fn local_gate_keeps_target_spectrum(seed in 0u64..1000, k in 0usize..4, angle in -7.0f64..7.0) {
            let mut s = random_state(5, seed);
            let before = site_entropy(&s, 2).unwrap();
            let kind = GateKind::SINGLE_QUBIT[k];
            s.apply_gate_mut(kind, &[2], kind.is_rotation().then_some(angle)).unwrap();
            prop_assert!((site_entropy(&s, 2).unwrap() - before).abs() < 1e-10);
        }
    }
}
