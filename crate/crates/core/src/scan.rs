//! Coupling scans with trained circuit pairs, crossing detection, region
//! segmentation, duality reference curves and size transfer.

use std::fmt::Write as _;

use log::{info, warn};

use crate::agent::{train_agent, TrainConfig, TrainOutcome};
use crate::circuit::{Circuit, WindowSpec, WindowState};
use crate::models::ModelSpec;
use crate::optimizer::{minimize_from, minimize_window_entropy, OptimizeConfig};
use crate::oracle::{pair_region, region_minimum};
use crate::solver::{ground_state, DEFAULT_TOL};
use crate::textfmt::decimal17;
use crate::{rng, Error, Result};

/// Header of the scan CSV.
pub const SCAN_HEADER: &str = "coupling,S_raw,S_a,S_b,direct_ref,dual_ref";

/// How angles are refreshed at each scan coupling (architecture fixed).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reopt {
    /// Keep the trained angles.
    Off,
    /// BFGS started from the trained angles.
    WarmStart(OptimizeConfig),
    /// Fresh BFGS restarts drawn from the config's scheme.
    Fresh(OptimizeConfig),
}

impl Default for Reopt {
    fn default() -> Self {
        Self::WarmStart(OptimizeConfig::default())
    }
}

impl Reopt {
    pub fn label(&self) -> String {
        match self {
            Self::Off => "off".into(),
            Self::WarmStart(_) => "warm-start".into(),
            Self::Fresh(cfg) => format!("fresh {}", cfg.init_scheme.label()),
        }
    }

    fn evaluate(&self, ws: &WindowState, circuit: &Circuit) -> Result<f64> {
        match self {
            Self::Off => ws.entropy_after(&circuit.arch, &circuit.params),
            Self::WarmStart(cfg) => Ok(minimize_from(ws, &circuit.arch, cfg, &circuit.params)?.entropy),
            Self::Fresh(cfg) => Ok(minimize_window_entropy(ws, &circuit.arch, cfg)?.entropy),
        }
    }
}

/// Parses `start:step:stop` into an inclusive ascending grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let bad = |msg: &str| Error::Config(format!("grid `{spec}`: {msg}"));
    if parts.len() != 3 {
        return Err(bad("expected start:step:stop"));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| bad("not a number")))
        .collect::<Result<_>>()?;
    let (start, step, stop) = (nums[0], nums[1], nums[2]);
    if !(start.is_finite() && step.is_finite() && stop.is_finite()) || !(step > 0.0) || stop < start {
        return Err(bad("need finite values, step > 0 and stop ≥ start"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err(bad("too many points"));
    }
    // rounded to 12 decimals so 0.5 + 3·0.1 prints as 0.8
    Ok((0..=n)
        .map(|i| {
            let x = start + step * i as f64;
            (x * 1e12).round() / 1e12
        })
        .collect())
}

/// Two trained circuits, one per coupling.
#[derive(Clone, Debug)]
pub struct TrainedPair {
    pub a: f64,
    pub b: f64,
    pub side_a: TrainOutcome,
    pub side_b: TrainOutcome,
    /// Training seed behind each side.
    pub seeds: (u64, u64),
}

fn check_pair(a: f64, b: f64) -> Result<()> {
    if !(a < b) {
        return Err(Error::Config(format!("training couplings need a < b, got {a} and {b}")));
    }
    Ok(())
}

/// Trains one agent at coupling `a` and an independent one at `b`.
pub fn train_pair(model: &ModelSpec, a: f64, b: f64, layers: usize, window: WindowSpec, cfg: &TrainConfig) -> Result<TrainedPair> {
    best_of_seeds(model, a, b, layers, window, cfg, &[cfg.seed])
}

/// Trains each side once per seed and keeps, per side, the run with the
/// highest best reward (earliest seed on ties).
pub fn best_of_seeds(
    model: &ModelSpec,
    a: f64,
    b: f64,
    layers: usize,
    window: WindowSpec,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<TrainedPair> {
    best_of_seeds_with(model, a, b, layers, window, cfg, seeds, |_, _, _| Ok(()))
}

/// As [`best_of_seeds`], calling `on_run(side, seed, outcome)` after every
/// training run (`side` is `'a'` or `'b'`).
#[allow(clippy::too_many_arguments)]
pub fn best_of_seeds_with(
    model: &ModelSpec,
    a: f64,
    b: f64,
    layers: usize,
    window: WindowSpec,
    cfg: &TrainConfig,
    seeds: &[u64],
    mut on_run: impl FnMut(char, u64, &TrainOutcome) -> Result<()>,
) -> Result<TrainedPair> {
    check_pair(a, b)?;
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed required".into()));
    }
    let mut sides: [Option<(TrainOutcome, u64)>; 2] = [None, None];
    for &seed in seeds {
        for (k, coupling) in [a, b].into_iter().enumerate() {
            let side_cfg = TrainConfig {
                seed: rng::derive_seed(seed, if k == 0 { "side-a" } else { "side-b" }),
                ..cfg.clone()
            };
            let out = train_agent(&model.with_coupling(coupling)?, window, layers, &side_cfg)?;
            on_run(if k == 0 { 'a' } else { 'b' }, seed, &out)?;
            info!(
                "seed {seed}, coupling {coupling}: best reward {:.4}, S_RL {:.6}",
                out.best_reward, out.best_entropy
            );
            if sides[k].as_ref().is_none_or(|(best, _)| out.best_reward > best.best_reward) {
                sides[k] = Some((out, seed));
            }
        }
    }
    let [Some((side_a, seed_a)), Some((side_b, seed_b))] = sides else {
        unreachable!("every side trained at least once")
    };
    Ok(TrainedPair {
        a,
        b,
        side_a,
        side_b,
        seeds: (seed_a, seed_b),
    })
}

/// Root of `S_a − S_b` and whether several roots were found.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub value: Option<f64>,
    pub ambiguous: bool,
}

/// Sign changes of `S_a − S_b`, interpolated linearly. Exact zeros count as
/// roots; NaN points are skipped. With several roots the one nearest the
/// grid midpoint wins and the result is flagged ambiguous.
pub fn crossing(grid: &[f64], s_a: &[f64], s_b: &[f64]) -> Crossing {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(s_a.iter().zip(s_b))
        .map(|(&x, (&a, &b))| (x, a - b))
        .filter(|(x, d)| x.is_finite() && d.is_finite())
        .collect();
    if !pts.is_empty() && pts.iter().all(|(_, d)| *d == 0.0) {
        return Crossing {
            value: None,
            ambiguous: true,
        };
    }
    let mut roots = Vec::new();
    for (i, &(x, d)) in pts.iter().enumerate() {
        if d == 0.0 {
            roots.push(x);
        }
        if let Some(&(x2, d2)) = pts.get(i + 1) {
            if d != 0.0 && d2 != 0.0 && (d < 0.0) != (d2 < 0.0) {
                roots.push(x + (x2 - x) * d / (d - d2));
            }
        }
    }
    if roots.is_empty() {
        return Crossing {
            value: None,
            ambiguous: false,
        };
    }
    let mid = 0.5 * (pts[0].0 + pts[pts.len() - 1].0);
    let best = roots
        .iter()
        .copied()
        .min_by(|p, q| (p - mid).abs().total_cmp(&(q - mid).abs()))
        .expect("non-empty");
    Crossing {
        value: Some(best),
        ambiguous: roots.len() > 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Speed {
    Fast,
    Slow,
}

/// Inclusive index range of grid points sharing a speed label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub speed: Speed,
    pub start: usize,
    pub end: usize,
}

/// Centered finite-difference slopes (one-sided at the ends).
pub fn slopes(grid: &[f64], curve: &[f64]) -> Vec<f64> {
    let n = grid.len();
    (0..n)
        .map(|i| {
            let (l, r) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (curve[r] - curve[l]) / (grid[r] - grid[l])
        })
        .collect()
}

/// Fast/slow/fast segmentation by slope magnitude.
///
/// A point is slow when `|slope|` is below half the median `|slope|` of the
/// outer thirds (or exactly zero when that median is zero). Everything from
/// the first to the last slow point is one slow segment.
pub fn region_slopes(grid: &[f64], curve: &[f64]) -> Result<Vec<Segment>> {
    let n = grid.len();
    if n < 5 || curve.len() != n {
        return Err(Error::Config(format!(
            "region segmentation needs ≥ 5 points and matching lengths ({n}, {})",
            curve.len()
        )));
    }
    if curve.iter().chain(grid).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("curve or grid".into()));
    }
    let s: Vec<f64> = slopes(grid, curve).iter().map(|v| v.abs()).collect();
    let third = n.div_ceil(3);
    let mut outer: Vec<f64> = s[..third].iter().chain(&s[n - third..]).copied().collect();
    outer.sort_by(f64::total_cmp);
    let m = outer.len();
    let median = if m % 2 == 1 { outer[m / 2] } else { 0.5 * (outer[m / 2 - 1] + outer[m / 2]) };
    let slow: Vec<bool> = s
        .iter()
        .map(|&v| if median > 0.0 { v < 0.5 * median } else { v == 0.0 })
        .collect();
    let (Some(first), Some(last)) = (slow.iter().position(|&b| b), slow.iter().rposition(|&b| b)) else {
        return Ok(vec![Segment {
            speed: Speed::Fast,
            start: 0,
            end: n - 1,
        }]);
    };
    let mut segs = Vec::with_capacity(3);
    if first > 0 {
        segs.push(Segment {
            speed: Speed::Fast,
            start: 0,
            end: first - 1,
        });
    }
    segs.push(Segment {
        speed: Speed::Slow,
        start: first,
        end: last,
    });
    if last < n - 1 {
        segs.push(Segment {
            speed: Speed::Fast,
            start: last + 1,
            end: n - 1,
        });
    }
    Ok(segs)
}

/// Minimal target entropy over unitaries on `{0, 1}` for the TFIM ground state at `lambda`.
pub fn pair_reference(n_sites: usize, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidModel(format!("reference coupling must be positive, got {lambda}")));
    }
    let g = ground_state(&ModelSpec::tfim(n_sites, lambda)?, DEFAULT_TOL, 0)?;
    region_minimum(&g.state, &pair_region(n_sites, 0)?)
}

/// `direct(λ)` = two-site minimum at `λ`; `dual(λ)` = `direct(1/λ)`.
pub fn reference_curves(n_sites: usize, grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let direct = grid.iter().map(|&l| pair_reference(n_sites, l)).collect::<Result<Vec<_>>>()?;
    let dual = grid.iter().map(|&l| pair_reference(n_sites, 1.0 / l)).collect::<Result<Vec<_>>>()?;
    Ok((direct, dual))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub grid: Vec<f64>,
    /// Missing values are NaN.
    pub s_raw: Vec<f64>,
    pub s_a: Vec<f64>,
    pub s_b: Vec<f64>,
    pub direct_ref: Vec<f64>,
    pub dual_ref: Vec<f64>,
    pub crossing: Option<f64>,
    pub ambiguous: bool,
    /// Ordered `key: value` annotations.
    pub metadata: Vec<(String, String)>,
}

impl ScanResult {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key.into(), value)),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "# crossing: {}", self.crossing.map_or("none".into(), decimal17));
        let _ = writeln!(out, "# ambiguous: {}", self.ambiguous);
        out.push_str(SCAN_HEADER);
        out.push('\n');
        for i in 0..self.grid.len() {
            let row = [self.grid[i], self.s_raw[i], self.s_a[i], self.s_b[i], self.direct_ref[i], self.dual_ref[i]];
            let cells: Vec<String> = row.iter().map(|&v| decimal17(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut res = ScanResult {
            grid: vec![],
            s_raw: vec![],
            s_a: vec![],
            s_b: vec![],
            direct_ref: vec![],
            dual_ref: vec![],
            crossing: None,
            ambiguous: false,
            metadata: vec![],
        };
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| err(format!("metadata without `:`: {line}")))?;
                let (k, v) = (k.trim(), v.trim());
                match k {
                    "crossing" if v == "none" => res.crossing = None,
                    "crossing" => res.crossing = Some(v.parse().map_err(|_| err(format!("bad crossing `{v}`")))?),
                    "ambiguous" => res.ambiguous = v.parse().map_err(|_| err(format!("bad flag `{v}`")))?,
                    _ => res.metadata.push((k.into(), v.into())),
                }
                continue;
            }
            if !header_seen {
                if line != SCAN_HEADER {
                    return Err(err(format!("expected header `{SCAN_HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let cells: Vec<f64> = line
                .split(',')
                .map(|c| c.parse::<f64>().map_err(|_| err(format!("bad number `{c}`"))))
                .collect::<Result<_>>()?;
            if cells.len() != 6 {
                return Err(err(format!("expected 6 columns, got {}", cells.len())));
            }
            res.grid.push(cells[0]);
            res.s_raw.push(cells[1]);
            res.s_a.push(cells[2]);
            res.s_b.push(cells[3]);
            res.direct_ref.push(cells[4]);
            res.dual_ref.push(cells[5]);
        }
        if !header_seen {
            return Err(Error::Parse {
                line: 0,
                msg: "missing header".into(),
            });
        }
        Ok(res)
    }
}

/// Evaluates both circuits across `grid` on chains of `model.n_sites()` sites.
pub fn scan_curves(model: &ModelSpec, grid: &[f64], circuit_a: &Circuit, circuit_b: &Circuit, reopt: &Reopt) -> Result<ScanResult> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("scan grid must be non-empty and strictly ascending".into()));
    }
    for c in [circuit_a, circuit_b] {
        if c.arch.window().n_sites() != model.n_sites() {
            return Err(Error::InvalidWindow(format!(
                "circuit built for {} sites, chain has {}",
                c.arch.window().n_sites(),
                model.n_sites()
            )));
        }
    }
    let is_tfim = model.model().name() == "tfim";
    let n = model.n_sites();
    let mut res = ScanResult {
        grid: grid.to_vec(),
        s_raw: vec![f64::NAN; grid.len()],
        s_a: vec![f64::NAN; grid.len()],
        s_b: vec![f64::NAN; grid.len()],
        direct_ref: vec![f64::NAN; grid.len()],
        dual_ref: vec![f64::NAN; grid.len()],
        crossing: None,
        ambiguous: false,
        metadata: vec![
            ("model".into(), model.model().name().into()),
            ("n_sites".into(), n.to_string()),
            ("reopt".into(), reopt.label()),
        ],
    };
    for (i, &c) in grid.iter().enumerate() {
        let point = || -> Result<[f64; 4]> {
            let g = ground_state(&model.with_coupling(c)?, DEFAULT_TOL, 0)?;
            let wa = WindowState::from_state(&g.state, circuit_a.arch.window())?;
            let wb = if circuit_b.arch.window() == circuit_a.arch.window() {
                wa.clone()
            } else {
                WindowState::from_state(&g.state, circuit_b.arch.window())?
            };
            let raw = crate::state::site_entropy(&g.state, circuit_a.arch.window().target())?;
            let direct = region_minimum(&g.state, &pair_region(n, circuit_a.arch.window().target())?)?;
            Ok([raw, reopt.evaluate(&wa, circuit_a)?, reopt.evaluate(&wb, circuit_b)?, direct])
        };
        match point() {
            Ok([raw, a, b, direct]) => {
                res.s_raw[i] = raw;
                res.s_a[i] = a;
                res.s_b[i] = b;
                res.direct_ref[i] = direct;
            }
            Err(e) => warn!("scan point {c}: {e}"),
        }
        if is_tfim && c > 0.0 {
            match pair_reference(n, 1.0 / c) {
                Ok(v) => res.dual_ref[i] = v,
                Err(e) => warn!("dual reference at {c}: {e}"),
            }
        }
    }
    let x = crossing(&res.grid, &res.s_a, &res.s_b);
    res.crossing = x.value;
    res.ambiguous = x.ambiguous;
    Ok(res)
}

/// Re-anchors both circuits on each chain size and scans.
pub fn transfer_scan(
    model: &ModelSpec,
    sizes: &[usize],
    grid: &[f64],
    circuit_a: &Circuit,
    circuit_b: &Circuit,
    reopt: &Reopt,
) -> Result<Vec<(usize, ScanResult)>> {
    sizes
        .iter()
        .map(|&n| {
            let (a, b) = (circuit_a.resized(n)?, circuit_b.resized(n)?);
            let res = scan_curves(&model.with_sites(n)?, grid, &a, &b, reopt)?;
            info!("N = {n}: crossing {:?} (ambiguous {})", res.crossing, res.ambiguous);
            Ok((n, res))
        })
        .collect()
}
