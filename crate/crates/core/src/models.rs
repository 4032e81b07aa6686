//! Periodic spin-1/2 chains: the transverse-field Ising model and the XXZ chain.
//!
//! Basis convention used throughout the crate: site `j` is bit `j` of the
//! computational-basis index, and a clear bit is `|0⟩` (σ^z = +1).
//!
//! Every model is a [`SpinModel`] trait object. Both Hamiltonians here are
//! real, with a diagonal part and bond terms that flip a pair of bits, which is
//! exactly what [`HamiltonianAction`] stores.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{AddAssign, Mul};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Largest dimension for which [`HamiltonianAction::to_dense`] materializes H.
pub const DENSE_LIMIT: usize = 4096;

/// Off-diagonal bond term: `coeff · |b ^ mask⟩⟨b|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlipTerm {
    pub mask: usize,
    pub coeff: f64,
    /// Only acts when the two masked bits differ (spin-exchange terms).
    pub antialigned_only: bool,
}

impl FlipTerm {
    #[inline]
    fn acts_on(&self, basis: usize) -> bool {
        if !self.antialigned_only {
            return true;
        }
        let bits = basis & self.mask;
        bits != 0 && bits != self.mask
    }
}

/// A family of periodic chain Hamiltonians parameterized by one coupling.
pub trait SpinModel: Send + Sync + fmt::Debug {
    /// Registry key, e.g. `"tfim"`.
    fn name(&self) -> &'static str;

    /// Display name of the coupling, e.g. `"lambda"`.
    fn coupling_name(&self) -> &'static str;

    /// ⟨b|H|b⟩.
    fn diagonal(&self, n_sites: usize, coupling: f64, basis: usize) -> f64;

    /// Off-diagonal part as bit-flip terms.
    fn flip_terms(&self, n_sites: usize, coupling: f64) -> Vec<FlipTerm>;

    /// Eigenvalue of the model's conserved diagonal symmetry on basis state `b`.
    fn symmetry_charge(&self, n_sites: usize, basis: usize) -> i32;

    /// Charge of the representative chosen inside a degenerate ground space.
    fn preferred_charge(&self, n_sites: usize) -> i32;

    /// Human-readable symmetry label for metadata.
    fn symmetry_name(&self) -> &'static str;
}

/// Nearest-neighbour bonds `(j, j+1 mod N)`, one per site.
pub fn periodic_bonds(n_sites: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n_sites).map(move |j| (j, (j + 1) % n_sites))
}

#[inline]
fn z_value(basis: usize, site: usize) -> f64 {
    if basis >> site & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `H = −Σ_j (λ σ^x_j σ^x_{j+1} + σ^z_j)`.
#[derive(Debug, Default, Clone, Copy)]
pub struct Tfim;

impl SpinModel for Tfim {
    fn name(&self) -> &'static str {
        "tfim"
    }

    fn coupling_name(&self) -> &'static str {
        "lambda"
    }

    fn diagonal(&self, n_sites: usize, _coupling: f64, basis: usize) -> f64 {
        -(0..n_sites).map(|j| z_value(basis, j)).sum::<f64>()
    }

    fn flip_terms(&self, n_sites: usize, coupling: f64) -> Vec<FlipTerm> {
        periodic_bonds(n_sites)
            .map(|(i, j)| FlipTerm {
                mask: (1 << i) | (1 << j),
                coeff: -coupling,
                antialigned_only: false,
            })
            .collect()
    }

    fn symmetry_charge(&self, _n_sites: usize, basis: usize) -> i32 {
        if basis.count_ones().is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    fn preferred_charge(&self, _n_sites: usize) -> i32 {
        1
    }

    fn symmetry_name(&self) -> &'static str {
        "parity"
    }
}

/// `H = Σ_j (σ^x_j σ^x_{j+1} + σ^y_j σ^y_{j+1} + Δ σ^z_j σ^z_{j+1})`.
#[derive(Debug, Default, Clone, Copy)]
pub struct Xxz;

impl SpinModel for Xxz {
    fn name(&self) -> &'static str {
        "xxz"
    }

    fn coupling_name(&self) -> &'static str {
        "delta"
    }

    fn diagonal(&self, n_sites: usize, coupling: f64, basis: usize) -> f64 {
        coupling
            * periodic_bonds(n_sites)
                .map(|(i, j)| z_value(basis, i) * z_value(basis, j))
                .sum::<f64>()
    }

    fn flip_terms(&self, n_sites: usize, _coupling: f64) -> Vec<FlipTerm> {
        // σxσx + σyσy = 2(σ+σ- + σ-σ+)
        periodic_bonds(n_sites)
            .map(|(i, j)| FlipTerm {
                mask: (1 << i) | (1 << j),
                coeff: 2.0,
                antialigned_only: true,
            })
            .collect()
    }

    /// Twice the total S^z.
    fn symmetry_charge(&self, n_sites: usize, basis: usize) -> i32 {
        n_sites as i32 - 2 * basis.count_ones() as i32
    }

    fn preferred_charge(&self, _n_sites: usize) -> i32 {
        0
    }

    fn symmetry_name(&self) -> &'static str {
        "magnetization"
    }
}

/// Name-keyed collection of available models.
#[derive(Debug, Clone)]
pub struct ModelRegistry {
    models: BTreeMap<&'static str, Arc<dyn SpinModel>>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut reg = Self {
            models: BTreeMap::new(),
        };
        reg.register(Arc::new(Tfim));
        reg.register(Arc::new(Xxz));
        reg
    }
}

impl ModelRegistry {
    pub fn register(&mut self, model: Arc<dyn SpinModel>) {
        self.models.insert(model.name(), model);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn SpinModel>> {
        self.models
            .get(name.to_ascii_lowercase().as_str())
            .cloned()
            .ok_or_else(|| Error::Unknown {
                kind: "model",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.models.keys().copied()
    }
}

/// A concrete chain: model family, size and coupling.
#[derive(Clone)]
pub struct ModelSpec {
    model: Arc<dyn SpinModel>,
    n_sites: usize,
    coupling: f64,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}(N={}, {}={})",
            self.model.name(),
            self.n_sites,
            self.model.coupling_name(),
            self.coupling
        )
    }
}

impl ModelSpec {
    pub fn new(model: Arc<dyn SpinModel>, n_sites: usize, coupling: f64) -> Result<Self> {
        let spec = Self::new_unchecked(model, n_sites, coupling);
        if n_sites < 3 {
            return Err(Error::InvalidModel(format!(
                "n_sites must be at least 3, got {n_sites}"
            )));
        }
        if n_sites > 24 {
            return Err(Error::InvalidModel(format!("n_sites {n_sites} too large")));
        }
        if !coupling.is_finite() {
            return Err(Error::InvalidModel(format!("non-finite coupling {coupling}")));
        }
        Ok(spec)
    }

    /// Skips the `n_sites ≥ 3` check; only for small-chain tests such as the
    /// doubled-bond N=2 cases.
    pub fn new_unchecked(model: Arc<dyn SpinModel>, n_sites: usize, coupling: f64) -> Self {
        Self {
            model,
            n_sites,
            coupling,
        }
    }

    pub fn tfim(n_sites: usize, lambda: f64) -> Result<Self> {
        Self::new(Arc::new(Tfim), n_sites, lambda)
    }

    pub fn xxz(n_sites: usize, delta: f64) -> Result<Self> {
        Self::new(Arc::new(Xxz), n_sites, delta)
    }

    pub fn model(&self) -> &Arc<dyn SpinModel> {
        &self.model
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    /// Same model family and size at a different coupling.
    pub fn with_coupling(&self, coupling: f64) -> Result<Self> {
        Self::new(self.model.clone(), self.n_sites, coupling)
    }

    pub fn with_sites(&self, n_sites: usize) -> Result<Self> {
        Self::new(self.model.clone(), n_sites, self.coupling)
    }
}

/// Matrix-free H for one [`ModelSpec`].
#[derive(Clone, Debug)]
pub struct HamiltonianAction {
    spec: ModelSpec,
    diag: Vec<f64>,
    flips: Vec<FlipTerm>,
}

/// Builds the Hamiltonian of `spec`.
pub fn build_hamiltonian(spec: &ModelSpec) -> Result<HamiltonianAction> {
    if spec.n_sites < 1 || !spec.coupling.is_finite() {
        return Err(Error::InvalidModel(format!("{spec:?}")));
    }
    let n = spec.n_sites;
    let diag = (0..spec.dim())
        .map(|b| spec.model.diagonal(n, spec.coupling, b))
        .collect();
    let flips = spec.model.flip_terms(n, spec.coupling);
    Ok(HamiltonianAction {
        spec: spec.clone(),
        diag,
        flips,
    })
}

impl HamiltonianAction {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `out = H v`, for real or complex amplitudes.
    pub fn apply<T>(&self, v: &[T], out: &mut [T])
    where
        T: Copy + AddAssign + Mul<f64, Output = T>,
    {
        assert_eq!(v.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        for (b, o) in out.iter_mut().enumerate() {
            let mut acc = v[b] * self.diag[b];
            for t in &self.flips {
                if t.acts_on(b) {
                    acc += v[b ^ t.mask] * t.coeff;
                }
            }
            *o = acc;
        }
    }

    pub fn apply_vec<T>(&self, v: &[T]) -> Vec<T>
    where
        T: Copy + AddAssign + Mul<f64, Output = T>,
    {
        let mut out = v.to_vec();
        self.apply(v, &mut out);
        out
    }

    /// Symmetry charge of basis state `b`.
    pub fn charge(&self, basis: usize) -> i32 {
        self.spec.model.symmetry_charge(self.spec.n_sites, basis)
    }

    pub fn preferred_charge(&self) -> i32 {
        self.spec.model.preferred_charge(self.spec.n_sites)
    }

    /// Dense real matrix, only for `dim ≤ DENSE_LIMIT`.
    pub fn to_dense(&self) -> Option<DMatrix<f64>> {
        let d = self.dim();
        if d > DENSE_LIMIT {
            return None;
        }
        let mut m = DMatrix::zeros(d, d);
        for b in 0..d {
            m[(b, b)] += self.diag[b];
            for t in &self.flips {
                if t.acts_on(b) {
                    m[(b ^ t.mask, b)] += t.coeff;
                }
            }
        }
        Some(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(rng: &mut ChaCha8Rng, d: usize) -> Vec<Complex64> {
        (0..d)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
        u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
    }

    #[test]
    fn tfim_two_sites_zero_coupling_is_diagonal() {
        let spec = ModelSpec::new_unchecked(Arc::new(Tfim), 2, 0.0);
        let h = build_hamiltonian(&spec).unwrap().to_dense().unwrap();
        let expected = [-2.0, 0.0, 0.0, 2.0];
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { expected[i] } else { 0.0 };
                assert_eq!(h[(i, j)], want, "({i},{j})");
            }
        }
    }

    #[test]
    fn xxz_two_site_heisenberg_singlet_energy() {
        // Doubled bond at N=2: H = 2 σ·σ, singlet σ·σ = −3.
        let spec = ModelSpec::new_unchecked(Arc::new(Xxz), 2, 1.0);
        let h = build_hamiltonian(&spec).unwrap().to_dense().unwrap();
        let eig = h.clone().symmetric_eigen();
        let e0 = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((e0 + 6.0).abs() < 1e-12);
        // singlet (|01⟩ − |10⟩)/√2 is an eigenvector
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = nalgebra::DVector::from_vec(vec![0.0, s, -s, 0.0]);
        let hv = &h * &v;
        assert!((hv - v * -6.0).norm() < 1e-12);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(ModelSpec::tfim(2, 1.0).is_err());
        assert!(ModelSpec::tfim(8, f64::NAN).is_err());
        assert!(ModelSpec::xxz(8, f64::INFINITY).is_err());
        assert!(ModelSpec::xxz(3, 1.0).is_ok());
    }

    #[test]
    fn registry_lookup() {
        let reg = ModelRegistry::default();
        assert_eq!(reg.get("TFIM").unwrap().name(), "tfim");
        assert_eq!(reg.get("xxz").unwrap().name(), "xxz");
        assert!(matches!(reg.get("heisenberg"), Err(Error::Unknown { .. })));
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["tfim", "xxz"]);
    }

    #[test]
    fn hermitian_and_symmetric_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [ModelSpec::tfim(6, 0.7).unwrap(), ModelSpec::xxz(6, 1.3).unwrap()] {
            let h = build_hamiltonian(&spec).unwrap();
            let d = h.dim();
            for _ in 0..20 {
                let u = random_complex(&mut rng, d);
                let v = random_complex(&mut rng, d);
                let huv = inner(&u, &h.apply_vec(&v));
                let hvu = inner(&v, &h.apply_vec(&u));
                assert!((huv - hvu.conj()).norm() < 1e-12);

                // [H, Q] = 0 with Q the diagonal symmetry operator
                let qv: Vec<Complex64> =
                    v.iter().enumerate().map(|(b, a)| a * h.charge(b) as f64).collect();
                let hqv = h.apply_vec(&qv);
                let hv = h.apply_vec(&v);
                let qhv: Vec<Complex64> =
                    hv.iter().enumerate().map(|(b, a)| a * h.charge(b) as f64).collect();
                let diff: f64 = hqv.iter().zip(&qhv).map(|(a, b)| (a - b).norm_sqr()).sum();
                assert!(diff.sqrt() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_matches_matrix_free_on_basis_vectors() {
        for spec in [ModelSpec::tfim(5, 1.1).unwrap(), ModelSpec::xxz(5, 0.4).unwrap()] {
            let h = build_hamiltonian(&spec).unwrap();
            let dense = h.to_dense().unwrap();
            for b in 0..h.dim() {
                let mut e = vec![0.0f64; h.dim()];
                e[b] = 1.0;
                let col = h.apply_vec(&e);
                for (i, c) in col.iter().enumerate() {
                    assert_eq!(*c, dense[(i, b)]);
                }
            }
        }
    }
}
