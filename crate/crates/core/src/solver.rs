//! Ground-state eigensolvers.
//!
//! Both Hamiltonians commute with a diagonal symmetry (parity for TFIM, S^z
//! for XXZ). When the lowest level is degenerate to within
//! [`DEGENERACY_TOL`], the representative with the model's preferred charge is
//! returned so scans are reproducible deep inside ordered phases.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::models::{build_hamiltonian, HamiltonianAction, ModelSpec};
use crate::rng;
use crate::state::PureState;
use crate::{Error, Result};

pub const DEGENERACY_TOL: f64 = 1e-10;

/// Dense diagonalization is used up to this dimension by [`AutoSolver`].
pub const DEFAULT_DENSE_MAX_DIM: usize = 1024;

pub const DEFAULT_MAX_KRYLOV: usize = 300;

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct GroundStateResult {
    pub state: PureState,
    pub energy: f64,
    pub residual_norm: f64,
    /// Every level within [`DEGENERACY_TOL`] of the ground energy (length ≥ 1).
    pub degenerate_energies: Vec<f64>,
    /// Symmetry charge of the returned representative.
    pub charge: i32,
    pub solver: &'static str,
}

impl GroundStateResult {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate_energies.len() > 1
    }
}

pub trait GroundStateSolver: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn solve(&self, h: &HamiltonianAction, tol: f64, seed: u64) -> Result<GroundStateResult>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct DenseSolver;

#[derive(Debug, Clone, Copy)]
pub struct LanczosSolver {
    pub max_krylov: usize,
}

impl Default for LanczosSolver {
    fn default() -> Self {
        Self {
            max_krylov: DEFAULT_MAX_KRYLOV,
        }
    }
}

/// Dense below `dense_max_dim`, Lanczos above.
#[derive(Debug, Clone, Copy)]
pub struct AutoSolver {
    pub dense_max_dim: usize,
    pub lanczos: LanczosSolver,
}

impl Default for AutoSolver {
    fn default() -> Self {
        Self {
            dense_max_dim: DEFAULT_DENSE_MAX_DIM,
            lanczos: LanczosSolver::default(),
        }
    }
}

fn residual(h: &HamiltonianAction, v: &[f64], energy: f64) -> f64 {
    let hv = h.apply_vec(v);
    hv.iter()
        .zip(v)
        .map(|(a, b)| (a - energy * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn normalize_sign(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let pivot = v
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, &x)| if x.abs() > bv.abs() + 1e-12 { (i, x) } else { (bi, bv) })
        .1;
    let scale = if pivot < 0.0 { -1.0 / norm } else { 1.0 / norm };
    v.iter_mut().for_each(|x| *x *= scale);
}

fn finish(
    h: &HamiltonianAction,
    mut v: Vec<f64>,
    energy: f64,
    degenerate_energies: Vec<f64>,
    tol: f64,
    solver: &'static str,
) -> Result<GroundStateResult> {
    normalize_sign(&mut v);
    let res = residual(h, &v, energy);
    if !(res <= tol) {
        return Err(Error::NoConvergence(format!(
            "{solver}: residual {res:e} exceeds tolerance {tol:e}"
        )));
    }
    let charge = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(b, _)| h.charge(b))
        .unwrap_or(0);
    Ok(GroundStateResult {
        state: PureState::from_real(&v)?,
        energy,
        residual_norm: res,
        degenerate_energies,
        charge,
        solver,
    })
}

impl GroundStateSolver for DenseSolver {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn solve(&self, h: &HamiltonianAction, tol: f64, _seed: u64) -> Result<GroundStateResult> {
        let dense = h
            .to_dense()
            .ok_or_else(|| Error::InvalidModel(format!("dimension {} too large for dense", h.dim())))?;
        let eig = dense.symmetric_eigen();
        let mut order: Vec<usize> = (0..h.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let e0 = eig.eigenvalues[order[0]];
        let degenerate: Vec<usize> = order
            .iter()
            .copied()
            .take_while(|&i| eig.eigenvalues[i] - e0 < DEGENERACY_TOL)
            .collect();
        let energies: Vec<f64> = degenerate.iter().map(|&i| eig.eigenvalues[i]).collect();
        let v: Vec<f64> = if degenerate.len() == 1 {
            eig.eigenvectors.column(order[0]).iter().copied().collect()
        } else {
            // diagonalize the symmetry charge inside the degenerate space
            let sub = DMatrix::from_fn(h.dim(), degenerate.len(), |r, c| eig.eigenvectors[(r, degenerate[c])]);
            let k = degenerate.len();
            let charges = DVector::from_fn(h.dim(), |b, _| h.charge(b) as f64);
            let cm = DMatrix::<f64>::from_fn(k, k, |i, j| {
                sub.column(i).iter().zip(sub.column(j).iter()).zip(charges.iter()).map(|((a, b), q)| a * b * q).sum::<f64>()
            });
            let ceig = cm.symmetric_eigen();
            let want = h.preferred_charge() as f64;
            let best = (0..k)
                .min_by(|&a, &b| {
                    (ceig.eigenvalues[a] - want).abs().total_cmp(&(ceig.eigenvalues[b] - want).abs())
                })
                .unwrap();
            (&sub * ceig.eigenvectors.column(best)).iter().copied().collect()
        };
        finish(h, v, e0, energies, tol, self.name())
    }
}

impl LanczosSolver {
    /// Lowest eigenpair of H restricted to basis states where `in_sector` holds.
    fn sector_ground(
        &self,
        h: &HamiltonianAction,
        in_sector: &dyn Fn(usize) -> bool,
        tol: f64,
        seed: u64,
    ) -> Result<Option<(f64, Vec<f64>)>> {
        let d = h.dim();
        let mask: Vec<bool> = (0..d).map(in_sector).collect();
        let sector_dim = mask.iter().filter(|&&m| m).count();
        if sector_dim == 0 {
            return Ok(None);
        }
        let mut rng = rng::stream(seed, "lanczos");
        let mut v: Vec<f64> = mask
            .iter()
            .map(|&m| if m { rng.random_range(-1.0..1.0) } else { 0.0 })
            .collect();
        let n0 = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= n0);

        let max_m = self.max_krylov.min(sector_dim);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_m);
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut w = vec![0.0; d];
        basis.push(v);

        for j in 0..max_m {
            h.apply(&basis[j], &mut w);
            let alpha = dot(&basis[j], &w);
            alphas.push(alpha);
            // full reorthogonalization, two passes
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    axpy(-c, q, &mut w);
                }
            }
            for (x, &m) in w.iter_mut().zip(&mask) {
                if !m {
                    *x = 0.0;
                }
            }
            let beta = dot(&w, &w).sqrt();
            let m = alphas.len();
            let invariant = beta < 1e-13;
            let last = j + 1 == max_m;
            if invariant || last || m.is_multiple_of(5) {
                let (theta, s) = tridiagonal_lowest(&alphas, &betas);
                let estimate = beta * s[m - 1].abs();
                if invariant || estimate <= 0.1 * tol || last {
                    let mut ritz = vec![0.0; d];
                    for (coef, q) in s.iter().zip(&basis) {
                        axpy(*coef, q, &mut ritz);
                    }
                    let nr = dot(&ritz, &ritz).sqrt();
                    ritz.iter_mut().for_each(|x| *x /= nr);
                    let res = residual(h, &ritz, theta);
                    if res <= tol {
                        return Ok(Some((theta, ritz)));
                    }
                    if invariant || last {
                        return Err(Error::NoConvergence(format!(
                            "lanczos: residual {res:e} after {m} Krylov vectors (tolerance {tol:e})"
                        )));
                    }
                }
            }
            betas.push(beta);
            let next: Vec<f64> = w.iter().map(|x| x / beta).collect();
            basis.push(next);
        }
        unreachable!("loop returns on the last iteration")
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Lowest eigenpair of the symmetric tridiagonal matrix (alphas, betas).
fn tridiagonal_lowest(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    let k = (0..m)
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .unwrap();
    (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect())
}

impl GroundStateSolver for LanczosSolver {
    fn name(&self) -> &'static str {
        "lanczos"
    }

    fn solve(&self, h: &HamiltonianAction, tol: f64, seed: u64) -> Result<GroundStateResult> {
        let want = h.preferred_charge();
        let preferred = self.sector_ground(h, &|b| h.charge(b) == want, tol, rng::derive_seed(seed, "preferred"))?;
        let other = self.sector_ground(h, &|b| h.charge(b) != want, tol, rng::derive_seed(seed, "other"))?;
        let (energy, v, energies) = match (preferred, other) {
            (Some((ep, vp)), Some((eo, vo))) => {
                if (ep - eo).abs() < DEGENERACY_TOL {
                    let mut es = vec![ep, eo];
                    es.sort_by(f64::total_cmp);
                    (ep.min(eo), vp, es)
                } else if ep < eo {
                    (ep, vp, vec![ep])
                } else {
                    (eo, vo, vec![eo])
                }
            }
            (Some((e, v)), None) | (None, Some((e, v))) => (e, v, vec![e]),
            (None, None) => unreachable!("sectors cover the basis"),
        };
        finish(h, v, energy, energies, tol, self.name())
    }
}

impl GroundStateSolver for AutoSolver {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn solve(&self, h: &HamiltonianAction, tol: f64, seed: u64) -> Result<GroundStateResult> {
        if h.dim() <= self.dense_max_dim {
            DenseSolver.solve(h, tol, seed)
        } else {
            self.lanczos.solve(h, tol, seed)
        }
    }
}

/// Name-keyed solver collection: `auto`, `dense`, `lanczos`.
#[derive(Debug, Clone)]
pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Arc<dyn GroundStateSolver>>,
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut reg = Self {
            solvers: BTreeMap::new(),
        };
        reg.register(Arc::new(AutoSolver::default()));
        reg.register(Arc::new(DenseSolver));
        reg.register(Arc::new(LanczosSolver::default()));
        reg
    }
}

impl SolverRegistry {
    pub fn register(&mut self, solver: Arc<dyn GroundStateSolver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn GroundStateSolver>> {
        self.solvers.get(name).cloned().ok_or_else(|| Error::Unknown {
            kind: "solver",
            name: name.to_string(),
        })
    }
}

/// Ground state of `model` with the default dense/Lanczos split.
pub fn ground_state(model: &ModelSpec, tol: f64, seed: u64) -> Result<GroundStateResult> {
    ground_state_with(&AutoSolver::default(), model, tol, seed)
}

pub fn ground_state_with(
    solver: &dyn GroundStateSolver,
    model: &ModelSpec,
    tol: f64,
    seed: u64,
) -> Result<GroundStateResult> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("solver tolerance must be positive, got {tol}")));
    }
    let h = build_hamiltonian(model)?;
    solver.solve(&h, tol, seed)
}
