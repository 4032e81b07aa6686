//! BFGS minimization of the target-site entropy over rotation angles.

use std::f64::consts::{FRAC_PI_4, PI};

use rand::Rng;

use crate::circuit::{CircuitArchitecture, WindowState};
use crate::rng;
use crate::state::PureState;
use crate::{Error, Result};

/// Starting angles for each restart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// Every rotation starts at π.
    AllPi,
    /// Independent draws from `U(mean − half_width, mean + half_width)`.
    UniformAroundMean { mean: f64, half_width: f64 },
}

impl InitScheme {
    pub fn uniform(mean: f64) -> Self {
        Self::UniformAroundMean {
            mean,
            half_width: FRAC_PI_4,
        }
    }

    /// Default restart count for the scheme.
    pub fn default_restarts(&self) -> usize {
        match self {
            Self::AllPi => 1,
            Self::UniformAroundMean { .. } => 5,
        }
    }

    fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        match *self {
            Self::AllPi => vec![PI; n],
            Self::UniformAroundMean { mean, half_width } => (0..n)
                .map(|_| mean + half_width * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::AllPi => "all-pi".into(),
            Self::UniformAroundMean { mean, half_width } => format!("uniform(mean={mean},half_width={half_width})"),
        }
    }
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    /// `pi`, `uniform-0`, `uniform-half-pi`, `uniform-pi`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pi" | "all-pi" => Ok(Self::AllPi),
            "uniform-0" => Ok(Self::uniform(0.0)),
            "uniform-half-pi" => Ok(Self::uniform(PI / 2.0)),
            "uniform-pi" => Ok(Self::uniform(PI)),
            other => Err(Error::Unknown {
                kind: "init scheme",
                name: other.into(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizeConfig {
    pub init_scheme: InitScheme,
    /// Central-difference step.
    pub gradient_step: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self::with_scheme(InitScheme::AllPi, 0)
    }
}

impl OptimizeConfig {
    pub fn with_scheme(init_scheme: InitScheme, seed: u64) -> Self {
        Self {
            init_scheme,
            gradient_step: 1e-5,
            grad_tol: 1e-8,
            max_iters: 200,
            restarts: init_scheme.default_restarts(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_step > 0.0) || !(self.grad_tol > 0.0) || self.restarts == 0 {
            return Err(Error::Config(format!(
                "optimizer needs h > 0, grad_tol > 0, restarts ≥ 1: {self:?}"
            )));
        }
        Ok(())
    }

    fn bfgs(&self) -> BfgsSettings {
        BfgsSettings {
            gradient_step: self.gradient_step,
            grad_tol: self.grad_tol,
            max_iters: self.max_iters,
            ..BfgsSettings::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeResult {
    pub params: Vec<f64>,
    pub entropy: f64,
    /// Entropy at the start of the winning restart.
    pub initial_entropy: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct BfgsSettings {
    pub gradient_step: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    pub shrink: f64,
    /// Objective value at or below which the search stops.
    pub floor: f64,
}

impl Default for BfgsSettings {
    fn default() -> Self {
        Self {
            gradient_step: 1e-5,
            grad_tol: 1e-8,
            max_iters: 200,
            armijo_c: 1e-4,
            shrink: 0.5,
            floor: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Central-difference gradient.
pub fn central_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// BFGS with finite-difference gradients and backtracking Armijo line search.
///
/// Returns `None` when the objective is non-finite at the start or the
/// gradient turns non-finite.
pub fn bfgs(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], s: &BfgsSettings) -> Option<BfgsOutcome> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return None;
    }
    let initial_value = fx;
    let mut g = central_gradient(&mut f, &x, s.gradient_step);
    if g.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let identity = |n: usize| {
        let mut m = vec![0.0; n * n];
        (0..n).for_each(|i| m[i * n + i] = 1.0);
        m
    };
    let mut hinv = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < s.max_iters {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax < s.grad_tol || fx <= s.floor {
            converged = true;
            break;
        }
        let mut p: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| hinv[i * n + j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            hinv = identity(n);
            fresh = true;
            p = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }

        let mut alpha = 1.0;
        let mut trial = vec![0.0; n];
        let accepted = loop {
            trial.iter_mut().zip(&x).zip(&p).for_each(|((t, xi), pi)| *t = xi + alpha * pi);
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + s.armijo_c * alpha * slope {
                break Some(ft);
            }
            alpha *= s.shrink;
            if alpha < 1e-14 {
                break None;
            }
        };
        let Some(f_new) = accepted else {
            if fresh {
                // steepest descent made no progress: a plateau at FD resolution
                converged = gmax < s.grad_tol.sqrt();
                break;
            }
            hinv = identity(n);
            fresh = true;
            continue;
        };
        iterations += 1;
        let g_new = central_gradient(&mut f, &trial, s.gradient_step);
        if g_new.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = step.iter().zip(&y).map(|(a, b)| a * b).sum();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if sy > 1e-12 * norm(&step) * norm(&y) {
            bfgs_update(&mut hinv, &step, &y, sy);
            fresh = false;
        }
        x = trial.clone();
        fx = f_new;
        g = g_new;
    }
    Some(BfgsOutcome {
        x,
        value: fx,
        initial_value,
        iterations,
        converged,
    })
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ` with `ρ = 1 / yᵀs`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Minimizes the target entropy of `arch` applied to `ground`.
pub fn minimize_entropy(ground: &PureState, arch: &CircuitArchitecture, cfg: &OptimizeConfig) -> Result<OptimizeResult> {
    let ws = WindowState::from_state(ground, arch.window())?;
    minimize_window_entropy(&ws, arch, cfg)
}

/// As [`minimize_entropy`], on a precomputed window state.
pub fn minimize_window_entropy(
    ws: &WindowState,
    arch: &CircuitArchitecture,
    cfg: &OptimizeConfig,
) -> Result<OptimizeResult> {
    cfg.validate()?;
    let n = arch.n_params();
    if n == 0 {
        let e = ws.entropy_after(arch, &[])?;
        return Ok(OptimizeResult {
            params: Vec::new(),
            entropy: e,
            initial_entropy: e,
            iterations: 0,
            converged: true,
        });
    }
    let mut best: Option<OptimizeResult> = None;
    for r in 0..cfg.restarts {
        let mut rng = rng::substream(cfg.seed, "restart", r as u64);
        let x0 = cfg.init_scheme.sample(n, &mut rng);
        if let Some(res) = run_restart(ws, arch, cfg, &x0)? {
            if best.as_ref().is_none_or(|b| res.entropy < b.entropy) {
                best = Some(res);
            }
        }
    }
    best.ok_or_else(|| Error::NonFinite("objective non-finite in every restart".into()))
}

/// Single BFGS run from `start` (warm start).
pub fn minimize_from(
    ws: &WindowState,
    arch: &CircuitArchitecture,
    cfg: &OptimizeConfig,
    start: &[f64],
) -> Result<OptimizeResult> {
    cfg.validate()?;
    if start.len() != arch.n_params() {
        return Err(Error::InvalidCircuit(format!(
            "{} start angles for {} rotations",
            start.len(),
            arch.n_params()
        )));
    }
    if start.is_empty() {
        return minimize_window_entropy(ws, arch, cfg);
    }
    run_restart(ws, arch, cfg, start)?.ok_or_else(|| Error::NonFinite("objective non-finite".into()))
}

fn run_restart(
    ws: &WindowState,
    arch: &CircuitArchitecture,
    cfg: &OptimizeConfig,
    x0: &[f64],
) -> Result<Option<OptimizeResult>> {
    // validate once so the closure can unwrap
    ws.entropy_after(arch, x0)?;
    let objective = |x: &[f64]| ws.entropy_after(arch, x).unwrap_or(f64::NAN);
    Ok(bfgs(objective, x0, &cfg.bfgs()).map(|o| OptimizeResult {
        params: o.x,
        entropy: o.value.clamp(0.0, 1.0),
        initial_entropy: o.initial_value,
        iterations: o.iterations,
        converged: o.converged,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{action_space, GateTemplate, WindowSpec};
    use crate::models::ModelSpec;
    use crate::solver::ground_state;
    use crate::state::{GateKind, C64};

    #[test]
    fn bfgs_minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let s = BfgsSettings {
            max_iters: 500,
            grad_tol: 1e-6,
            ..Default::default()
        };
        let out = bfgs(f, &[-1.2, 1.0], &s).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4, "{:?}", out.x);
        assert!(out.value <= out.initial_value);
    }

    #[test]
    fn bfgs_rejects_nonfinite_start() {
        assert!(bfgs(|_| f64::NAN, &[0.0], &BfgsSettings::default()).is_none());
    }

    fn two_qubit_window() -> (WindowSpec, PureState) {
        // N=3 chain, target 1, the third site left in |0⟩
        let w = WindowSpec::new(3, 1, 1).unwrap();
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        // cos|00⟩ + sin|11⟩ on sites (1, 2)
        let mut amps = vec![C64::new(0.0, 0.0); 8];
        amps[0] = C64::new(c, 0.0);
        amps[0b110] = C64::new(s, 0.0);
        (w, PureState::new(amps).unwrap())
    }

    #[test]
    fn parameter_free_architecture_is_evaluated_directly() {
        let w = WindowSpec::new(3, 1, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![C64::new(0.0, 0.0); 8];
        amps[0] = C64::new(h, 0.0);
        amps[0b110] = C64::new(h, 0.0);
        let bell = PureState::new(amps).unwrap();
        let arch = CircuitArchitecture::new(w, vec![GateTemplate::cnot(1, 2)], 1).unwrap();
        let r = minimize_entropy(&bell, &arch, &OptimizeConfig::default()).unwrap();
        assert!(r.entropy < 1e-12);
        assert!(r.params.is_empty() && r.converged && r.iterations == 0);
    }

    #[test]
    fn two_qubit_state_is_disentangled() {
        let (w, psi) = two_qubit_window();
        // brute-force grid over θ confirms a root exists: RY(θ) then CNOT(1→2)
        let ws = WindowState::from_state(&psi, &w).unwrap();
        let arch = CircuitArchitecture::new(
            w,
            vec![GateTemplate::single(GateKind::Ry, 1), GateTemplate::cnot(1, 2)],
            2,
        )
        .unwrap();
        let grid_min = (0..=20_000)
            .map(|i| ws.entropy_after(&arch, &[-PI + 2.0 * PI * i as f64 / 20_000.0]).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(grid_min < 1e-3, "grid minimum {grid_min}");

        let r = minimize_entropy(&psi, &arch, &OptimizeConfig::default()).unwrap();
        assert!(r.entropy < 1e-8, "{r:?}");
        assert!(r.entropy <= r.initial_entropy);
    }

    #[test]
    fn uniform_restarts_and_determinism() {
        let g = ground_state(&ModelSpec::tfim(8, 1.2).unwrap(), 1e-10, 0).unwrap();
        let w = WindowSpec::new(8, 0, 1).unwrap();
        let space = action_space(&w);
        let gates = [0usize, 5, 12, 9, 14, 1].iter().map(|&i| *space.get(i).unwrap()).collect();
        let arch = CircuitArchitecture::new(w, gates, 6).unwrap();
        let cfg = OptimizeConfig::with_scheme(InitScheme::uniform(PI / 2.0), 42);
        assert_eq!(cfg.restarts, 5);
        let a = minimize_entropy(&g.state, &arch, &cfg).unwrap();
        let b = minimize_entropy(&g.state, &arch, &cfg).unwrap();
        assert_eq!(a.params.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.params.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.entropy.to_bits(), b.entropy.to_bits());
        assert!(a.entropy <= a.initial_entropy);
        assert!((0.0..=1.0).contains(&a.entropy));
    }

    #[test]
    fn central_difference_agrees_with_five_point_stencil() {
        use rand::SeedableRng;
        let g = ground_state(&ModelSpec::tfim(8, 0.8).unwrap(), 1e-10, 0).unwrap();
        let w = WindowSpec::new(8, 0, 1).unwrap();
        let space = action_space(&w);
        let gates = [0usize, 13, 6, 1, 15, 10, 4].iter().map(|&i| *space.get(i).unwrap()).collect();
        let arch = CircuitArchitecture::new(w, gates, 7).unwrap();
        let ws = WindowState::from_state(&g.state, &w).unwrap();
        let mut f = |x: &[f64]| ws.entropy_after(&arch, x).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let h = 1e-5;
        let big_h = 1e-3;
        for _ in 0..10 {
            let x: Vec<f64> = (0..arch.n_params()).map(|_| rng.random_range(-PI..PI)).collect();
            let g2 = central_gradient(&mut f, &x, h);
            for i in 0..x.len() {
                let at = |d: f64| {
                    let mut y = x.clone();
                    y[i] += d;
                    f(&y)
                };
                let g4 = (-at(2.0 * big_h) + 8.0 * at(big_h) - 8.0 * at(-big_h) + at(-2.0 * big_h)) / (12.0 * big_h);
                let scale = g4.abs().max(1e-3);
                assert!((g2[i] - g4).abs() / scale < 1e-4, "component {i}: {} vs {g4}", g2[i]);
            }
        }
    }

    #[test]
    fn config_validation_and_parsing() {
        let cfg = OptimizeConfig {
            restarts: 0,
            ..OptimizeConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!("uniform-pi".parse::<InitScheme>().unwrap(), InitScheme::uniform(PI));
        assert!("gauss".parse::<InitScheme>().is_err());
    }
}
