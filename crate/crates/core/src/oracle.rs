//! Exact minimal target entropy over all unitaries on a window, the unitary
//! attaining it, and a brute-force search to check both.
//!
//! Region site lists put the target first, so in `ρ_RP` the target is the
//! most significant factor: index `m·d_R + α` is `|m⟩_P ⊗ |α⟩_R`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;

use crate::circuit::WindowSpec;
use crate::optimizer::{bfgs, BfgsSettings};
use crate::rng;
use crate::state::{qubit_entropy, reduced_density, shannon_bits, DensityMatrix, PureState, C64};
use crate::{Error, Result};

const SUM_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupedSpectrum {
    /// Eigenvalues of `ρ_RP`, non-increasing.
    pub p: Vec<f64>,
    /// Block sums of `p` in consecutive groups of `d_R`.
    pub q: Vec<f64>,
    pub d_p: usize,
    pub d_r: usize,
}

impl GroupedSpectrum {
    /// Groups a spectrum; `p` is sorted here.
    pub fn new(mut p: Vec<f64>, d_p: usize, d_r: usize) -> Result<Self> {
        if d_p == 0 || d_r == 0 || p.len() != d_p * d_r {
            return Err(Error::DimensionMismatch {
                expected: d_p * d_r,
                got: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite() || *x < -SUM_TOL) {
            return Err(Error::InvalidDensity("spectrum has negative or non-finite entries".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDensity(format!("spectrum sums to {total}")));
        }
        p.sort_by(|a, b| b.total_cmp(a));
        let q = p.chunks(d_r).map(|c| c.iter().sum()).collect();
        Ok(Self { p, q, d_p, d_r })
    }

    /// `H(q)` in bits.
    pub fn entropy(&self) -> f64 {
        shannon_bits(self.q.iter().copied()).min((self.d_p as f64).log2())
    }
}

fn check_dims(rho: &DensityMatrix, d_p: usize, d_r: usize) -> Result<()> {
    if rho.dim() != d_p * d_r {
        return Err(Error::DimensionMismatch {
            expected: d_p * d_r,
            got: rho.dim(),
        });
    }
    Ok(())
}

/// Minimal entropy of `P` over unitaries on `RP`, with the grouped spectrum.
pub fn min_window_entropy(rho_rp: &DensityMatrix, d_p: usize, d_r: usize) -> Result<(f64, GroupedSpectrum)> {
    check_dims(rho_rp, d_p, d_r)?;
    let g = GroupedSpectrum::new(rho_rp.eigenvalues(), d_p, d_r)?;
    Ok((g.entropy(), g))
}

/// `V` with `V ψ_{m·d_R+α} = |m, α⟩`, eigenvectors ordered by non-increasing
/// eigenvalue and phased so the first nonzero component is real positive.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalUnitary(pub DMatrix<C64>);

impl OptimalUnitary {
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    /// Largest entry of `|V†V − I|`.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.0.nrows();
        let prod = self.0.adjoint() * &self.0;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

pub fn optimal_disentangler(rho_rp: &DensityMatrix, d_p: usize, d_r: usize) -> Result<OptimalUnitary> {
    check_dims(rho_rp, d_p, d_r)?;
    let d = rho_rp.dim();
    let eig = rho_rp.entries().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut v = DMatrix::<C64>::zeros(d, d);
    for (row, &k) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        let lead = col.iter().find(|z| z.norm() > 1e-12).copied().unwrap_or(C64::new(1.0, 0.0));
        let phase = lead.conj() / lead.norm();
        for j in 0..d {
            v[(row, j)] = (col[j] * phase).conj();
        }
    }
    Ok(OptimalUnitary(v))
}

/// Site list of a window region, target first.
pub fn window_region(window: &WindowSpec) -> Vec<usize> {
    let mut sites = vec![window.target()];
    sites.extend(window.sites().into_iter().filter(|&s| s != window.target()));
    sites
}

/// Two-site region `{target, target+1}`.
pub fn pair_region(n_sites: usize, target: usize) -> Result<Vec<usize>> {
    if target >= n_sites || n_sites < 2 {
        return Err(Error::SiteOutOfRange { index: target, n_sites });
    }
    Ok(vec![target, (target + 1) % n_sites])
}

/// Minimal entropy of `region[0]` over unitaries on `region`.
pub fn region_minimum(state: &PureState, region: &[usize]) -> Result<f64> {
    let rho = reduced_density(state, region)?;
    let d_r = 1 << (region.len() - 1);
    Ok(min_window_entropy(&rho, 2, d_r)?.0)
}

pub fn window_minimum(state: &PureState, window: &WindowSpec) -> Result<f64> {
    region_minimum(state, &window_region(window))
}

/// Hermitian generator from `d²` reals: diagonal first, then upper-triangle
/// real/imaginary pairs.
fn hermitian_from(x: &[f64], d: usize) -> DMatrix<C64> {
    let mut g = DMatrix::<C64>::zeros(d, d);
    let mut it = x.iter();
    for i in 0..d {
        g[(i, i)] = C64::new(*it.next().unwrap(), 0.0);
    }
    for i in 0..d {
        for j in i + 1..d {
            let z = C64::new(*it.next().unwrap(), *it.next().unwrap());
            g[(i, j)] = z;
            g[(j, i)] = z.conj();
        }
    }
    g
}

/// `exp(iG)` for Hermitian `G`.
pub fn unitary_from_generator(x: &[f64], d: usize) -> DMatrix<C64> {
    let eig = hermitian_from(x, d).symmetric_eigen();
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|w| C64::new(w.cos(), w.sin())));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// Target entropy of `U ρ U†` with the target as the major factor.
pub fn entropy_after_unitary(rho: &DMatrix<C64>, u: &DMatrix<C64>) -> f64 {
    let d = rho.nrows();
    let d_r = d / 2;
    let r = u * rho * u.adjoint();
    let (mut a, mut b, mut dd) = (0.0, C64::new(0.0, 0.0), 0.0);
    for al in 0..d_r {
        a += r[(al, al)].re;
        dd += r[(d_r + al, d_r + al)].re;
        b += r[(al, d_r + al)];
    }
    qubit_entropy(a, b, dd)
}

/// Random-restart BFGS over the full unitary group on a region of at most
/// three sites (target first).
pub fn brute_force_region(state: &PureState, region: &[usize], trials: usize, seed: u64) -> Result<f64> {
    if region.len() > 3 || region.len() < 2 {
        return Err(Error::InvalidWindow(format!(
            "brute force needs 2 or 3 sites, got {}",
            region.len()
        )));
    }
    if trials == 0 {
        return Err(Error::Config("brute force needs at least one trial".into()));
    }
    let rho = reduced_density(state, region)?.entries().clone();
    let d = rho.nrows();
    let settings = BfgsSettings {
        grad_tol: 1e-7,
        max_iters: 500,
        ..BfgsSettings::default()
    };
    let mut best = f64::INFINITY;
    for t in 0..trials {
        let mut rng = rng::substream(seed, "brute-force", t as u64);
        let x0: Vec<f64> = (0..d * d).map(|_| rng.random_range(-PI..PI)).collect();
        let f = |x: &[f64]| entropy_after_unitary(&rho, &unitary_from_generator(x, d));
        if let Some(out) = bfgs(f, &x0, &settings) {
            best = best.min(out.value);
        }
        if best <= 0.0 {
            break;
        }
    }
    if best.is_finite() {
        Ok(best.max(0.0))
    } else {
        Err(Error::NonFinite("brute-force objective".into()))
    }
}

pub fn brute_force_min_entropy(state: &PureState, window: &WindowSpec, trials: usize, seed: u64) -> Result<f64> {
    brute_force_region(state, &window_region(window), trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{action_space, CircuitArchitecture, WindowState};
    use crate::models::ModelSpec;
    use crate::solver::ground_state;
    use crate::state::{site_entropy, PureState};
    use rand::SeedableRng;

    fn random_state(n: usize, rng: &mut impl Rng) -> PureState {
        let amps = (0..1 << n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        PureState::normalized(amps).unwrap()
    }

    #[test]
    fn grouped_spectrum_examples() {
        let ghz = DensityMatrix::diagonal(&[0.5, 0.5, 0.0, 0.0]).unwrap();
        let (s, g) = min_window_entropy(&ghz, 2, 2).unwrap();
        assert_eq!(g.q, vec![1.0, 0.0]);
        assert!(s.abs() < 1e-12);

        let mixed = DensityMatrix::diagonal(&[0.25; 4]).unwrap();
        let (s, g) = min_window_entropy(&mixed, 2, 2).unwrap();
        assert_eq!(g.q, vec![0.5, 0.5]);
        assert!((s - 1.0).abs() < 1e-12);

        let mut p = vec![0.0; 8];
        p[5] = 1.0;
        let pure = DensityMatrix::diagonal(&p).unwrap();
        assert!(min_window_entropy(&pure, 2, 4).unwrap().0.abs() < 1e-12);
        assert!(min_window_entropy(&pure, 2, 2).is_err());
    }

    #[test]
    fn bell_pair_is_disentangled_by_v() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = PureState::from_real(&[h, 0.0, 0.0, h]).unwrap();
        let mut amps = vec![C64::new(0.0, 0.0); 8];
        amps[0] = C64::new(h, 0.0);
        amps[0b011] = C64::new(h, 0.0);
        let psi = PureState::new(amps).unwrap();
        for (state, region) in [(bell, vec![0, 1]), (psi, vec![0, 1])] {
            let rho = reduced_density(&state, &region).unwrap();
            let v = optimal_disentangler(&rho, 2, 2).unwrap();
            assert!(v.unitarity_error() < 1e-10);
            let mut out = state.clone();
            out.apply_unitary(&region, v.matrix()).unwrap();
            assert!(site_entropy(&out, region[0]).unwrap() < 1e-8);
        }
    }

    #[test]
    fn ghz_pair_is_disentangled_by_v() {
        let ghz = PureState::x_ghz(8);
        let region = pair_region(8, 0).unwrap();
        let rho = reduced_density(&ghz, &region).unwrap();
        let (s, _) = min_window_entropy(&rho, 2, 2).unwrap();
        assert!(s < 1e-10);
        let v = optimal_disentangler(&rho, 2, 2).unwrap();
        let mut out = ghz.clone();
        out.apply_unitary(&region, v.matrix()).unwrap();
        assert!(site_entropy(&out, 0).unwrap() < 1e-8);
        assert!((site_entropy(&ghz, 0).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn v_attains_the_minimum_on_tfim_windows() {
        for lambda in [0.5, 1.0, 1.5] {
            let g = ground_state(&ModelSpec::tfim(8, lambda).unwrap(), 1e-10, 0).unwrap();
            for radius in [1, 2] {
                let w = WindowSpec::new(8, 0, radius).unwrap();
                let region = window_region(&w);
                let rho = reduced_density(&g.state, &region).unwrap();
                let d_r = 1 << (region.len() - 1);
                let (s, _) = min_window_entropy(&rho, 2, d_r).unwrap();
                let v = optimal_disentangler(&rho, 2, d_r).unwrap();
                assert!(v.unitarity_error() < 1e-10);
                let mut out = g.state.clone();
                out.apply_unitary(&region, v.matrix()).unwrap();
                let after = site_entropy(&out, 0).unwrap();
                assert!((after - s).abs() < 1e-8, "λ={lambda} r={radius}: {after} vs {s}");
            }
        }
    }

    #[test]
    fn window_minimum_is_monotone_in_window_size() {
        for lambda in [0.3, 0.8, 1.0, 1.2, 2.0] {
            let g = ground_state(&ModelSpec::tfim(8, lambda).unwrap(), 1e-10, 0).unwrap();
            let pair = region_minimum(&g.state, &pair_region(8, 0).unwrap()).unwrap();
            let three = window_minimum(&g.state, &WindowSpec::new(8, 0, 1).unwrap()).unwrap();
            let five = window_minimum(&g.state, &WindowSpec::new(8, 0, 2).unwrap()).unwrap();
            assert!(five <= three + 1e-10 && three <= pair + 1e-10, "λ={lambda}: {five} {three} {pair}");
        }
        for delta in [0.5, 1.0, 1.5] {
            let g = ground_state(&ModelSpec::xxz(8, delta).unwrap(), 1e-10, 0).unwrap();
            let pair = region_minimum(&g.state, &pair_region(8, 0).unwrap()).unwrap();
            let three = window_minimum(&g.state, &WindowSpec::new(8, 0, 1).unwrap()).unwrap();
            let five = window_minimum(&g.state, &WindowSpec::new(8, 0, 2).unwrap()).unwrap();
            assert!(five <= three + 1e-10 && three <= pair + 1e-10, "Δ={delta}: {five} {three} {pair}");
        }
    }

    #[test]
    fn random_unitaries_never_beat_the_bound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let psi = random_state(5, &mut rng);
            let rho = reduced_density(&psi, &[2, 0, 4]).unwrap();
            let (s, g) = min_window_entropy(&rho, 2, 4).unwrap();
            let total: f64 = g.q.iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            assert!(g.q.windows(2).all(|w| w[0] >= w[1]));
            for _ in 0..10 {
                let x: Vec<f64> = (0..64).map(|_| rng.random_range(-PI..PI)).collect();
                let u = unitary_from_generator(&x, 8);
                assert!(entropy_after_unitary(rho.entries(), &u) >= s - 1e-10);
            }
        }
    }

    #[test]
    fn circuits_never_beat_the_bound() {
        use crate::circuit::GateTemplate;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = ground_state(&ModelSpec::tfim(8, 0.9).unwrap(), 1e-10, 0).unwrap();
        for radius in [1, 2] {
            let w = WindowSpec::new(8, 0, radius).unwrap();
            let floor = window_minimum(&g.state, &w).unwrap();
            let ws = WindowState::from_state(&g.state, &w).unwrap();
            let space = action_space(&w);
            for _ in 0..100 {
                let len = rng.random_range(0..=12);
                let gates: Vec<GateTemplate> =
                    (0..len).map(|_| *space.get(rng.random_range(0..space.len())).unwrap()).collect();
                let arch = CircuitArchitecture::new(w, gates, 12).unwrap();
                let params: Vec<f64> = (0..arch.n_params()).map(|_| rng.random_range(-PI..PI)).collect();
                assert!(ws.entropy_after(&arch, &params).unwrap() >= floor - 1e-8);
            }
        }
    }

    #[test]
    fn brute_force_trivial_cases() {
        let product = PureState::basis(4, 0b0101);
        assert_eq!(brute_force_region(&product, &[0, 1], 3, 0).unwrap(), 0.0);
        assert!(region_minimum(&product, &[0, 1]).unwrap().abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = PureState::from_real(&[h, 0.0, 0.0, h]).unwrap();
        assert!(brute_force_region(&bell, &[0, 1], 5, 0).unwrap() < 1e-6);
        assert!(brute_force_region(&bell, &[0], 5, 0).is_err());
        let w = WindowSpec::new(8, 0, 2).unwrap();
        assert!(brute_force_min_entropy(&PureState::basis(8, 0), &w, 1, 0).is_err());
    }

    #[test]
    fn brute_force_agrees_on_random_states() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for i in 0..5 {
            let psi = random_state(4, &mut rng);
            let exact = region_minimum(&psi, &[1, 2]).unwrap();
            let brute = brute_force_region(&psi, &[1, 2], 20, i).unwrap();
            assert!(brute >= exact - 1e-6);
            assert!((brute - exact).abs() < 1e-4, "{brute} vs {exact}");
        }
    }
}
