//! Windowed gate sets, circuit architectures and their evaluation.
//!
//! A [`WindowSpec`] is the target site plus `radius` neighbours on each side.
//! Gates are stored window-relative: position `w` in `0..2r+1` maps to site
//! `(target + w − r) mod N`, so the target sits at position `r` and a circuit
//! can be re-anchored onto a longer chain by changing `n_sites` only.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::state::{apply_1q, apply_cnot, qubit_entropy, reduced_density, GateKind, PureState, C64};
use crate::textfmt::decimal17;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WindowSpec {
    n_sites: usize,
    target: usize,
    radius: usize,
}

impl WindowSpec {
    pub fn new(n_sites: usize, target: usize, radius: usize) -> Result<Self> {
        if !(1..=2).contains(&radius) {
            return Err(Error::InvalidWindow(format!("radius must be 1 or 2, got {radius}")));
        }
        if 2 * radius + 1 > n_sites {
            return Err(Error::InvalidWindow(format!(
                "window of {} sites does not fit a chain of {n_sites}",
                2 * radius + 1
            )));
        }
        if target >= n_sites {
            return Err(Error::SiteOutOfRange { index: target, n_sites });
        }
        Ok(Self { n_sites, target, radius })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    /// Window position of the target site.
    pub fn target_position(&self) -> usize {
        self.radius
    }

    /// Lattice site of window position `w`.
    pub fn site(&self, w: usize) -> usize {
        (self.target + self.n_sites + w - self.radius) % self.n_sites
    }

    /// Window sites, left to right.
    pub fn sites(&self) -> Vec<usize> {
        (0..self.size()).map(|w| self.site(w)).collect()
    }

    /// Window position of lattice `site`, if inside the window.
    pub fn position(&self, site: usize) -> Option<usize> {
        if site >= self.n_sites {
            return None;
        }
        let w = (site + self.n_sites + self.radius - self.target) % self.n_sites;
        (w < self.size()).then_some(w)
    }

    /// Same window on a chain of `n_sites` (target kept).
    pub fn resized(&self, n_sites: usize) -> Result<Self> {
        Self::new(n_sites, self.target.min(n_sites.saturating_sub(1)), self.radius)
    }
}

/// Which CNOT pairs the action space offers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CnotPolicy {
    /// Consecutive window positions, both directions.
    #[default]
    Adjacent,
    /// Every ordered pair of distinct window positions.
    AllPairs,
}

impl std::str::FromStr for CnotPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacent" => Ok(Self::Adjacent),
            "all" | "all-pairs" => Ok(Self::AllPairs),
            other => Err(Error::Unknown {
                kind: "cnot policy",
                name: other.into(),
            }),
        }
    }
}

/// A gate with window-relative wires and no angle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GateTemplate {
    pub kind: GateKind,
    /// `[wire, wire]` for one-qubit gates, `[control, target]` for CNOT.
    qubits: [usize; 2],
}

impl GateTemplate {
    pub fn single(kind: GateKind, w: usize) -> Self {
        assert!(kind != GateKind::Cnot);
        Self { kind, qubits: [w, w] }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        assert_ne!(control, target);
        Self {
            kind: GateKind::Cnot,
            qubits: [control, target],
        }
    }

    pub fn wires(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn is_parameterized(&self) -> bool {
        self.kind.is_rotation()
    }
}

/// Ordered list of the gates an agent may append.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpace {
    window: WindowSpec,
    actions: Vec<GateTemplate>,
}

impl ActionSpace {
    pub fn window(&self) -> &WindowSpec {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&GateTemplate> {
        self.actions.get(index)
    }

    pub fn templates(&self) -> &[GateTemplate] {
        &self.actions
    }

    pub fn index_of(&self, gate: &GateTemplate) -> Option<usize> {
        self.actions.iter().position(|g| g == gate)
    }
}

/// Gate set on `window` with adjacent CNOTs.
pub fn action_space(window: &WindowSpec) -> ActionSpace {
    action_space_with(window, CnotPolicy::Adjacent)
}

/// Single-qubit gates by position then kind, then CNOTs by pair then direction.
pub fn action_space_with(window: &WindowSpec, policy: CnotPolicy) -> ActionSpace {
    let k = window.size();
    let mut actions: Vec<GateTemplate> = (0..k)
        .flat_map(|w| GateKind::SINGLE_QUBIT.into_iter().map(move |kind| GateTemplate::single(kind, w)))
        .collect();
    for a in 0..k {
        for b in a + 1..k {
            if policy == CnotPolicy::Adjacent && b != a + 1 {
                continue;
            }
            actions.push(GateTemplate::cnot(a, b));
            actions.push(GateTemplate::cnot(b, a));
        }
    }
    ActionSpace {
        window: *window,
        actions,
    }
}

/// Horizon `T = p·L`; `L` defaults to twice the window size.
pub fn horizon(window: &WindowSpec, layers: usize, gates_per_layer: Option<usize>) -> usize {
    layers * gates_per_layer.unwrap_or(2 * window.size())
}

/// Gate sequence on a window, bounded by a horizon.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CircuitArchitecture {
    window: WindowSpec,
    gates: Vec<GateTemplate>,
    horizon: usize,
}

impl CircuitArchitecture {
    pub fn empty(window: WindowSpec, horizon: usize) -> Self {
        Self {
            window,
            gates: Vec::new(),
            horizon,
        }
    }

    pub fn new(window: WindowSpec, gates: Vec<GateTemplate>, horizon: usize) -> Result<Self> {
        let mut arch = Self::empty(window, horizon);
        for g in gates {
            arch.push(g)?;
        }
        Ok(arch)
    }

    pub fn push(&mut self, gate: GateTemplate) -> Result<()> {
        if self.gates.len() >= self.horizon {
            return Err(Error::InvalidCircuit(format!("horizon {} reached", self.horizon)));
        }
        if gate.wires().iter().any(|&w| w >= self.window.size()) {
            return Err(Error::InvalidCircuit(format!("{gate:?} leaves the window")));
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn window(&self) -> &WindowSpec {
        &self.window
    }

    pub fn gates(&self) -> &[GateTemplate] {
        &self.gates
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.gates.iter().filter(|g| g.is_parameterized()).count()
    }

    /// Same gates on a re-anchored window (e.g. a longer chain).
    pub fn on_window(&self, window: WindowSpec) -> Result<Self> {
        if window.radius != self.window.radius {
            return Err(Error::InvalidWindow("radius differs".into()));
        }
        Ok(Self {
            window,
            gates: self.gates.clone(),
            horizon: self.horizon,
        })
    }
}

/// One-hot architecture encoding: `T` slots of `|A| + 1` entries, the last
/// entry of a slot marking "empty".
#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureEncoding(pub Vec<f32>);

impl ArchitectureEncoding {
    pub fn len_for(horizon: usize, n_actions: usize) -> usize {
        horizon * (n_actions + 1)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

pub fn encode(arch: &CircuitArchitecture, space: &ActionSpace) -> Result<ArchitectureEncoding> {
    let slot = space.len() + 1;
    let mut v = vec![0.0f32; arch.horizon * slot];
    for t in 0..arch.horizon {
        let hot = match arch.gates.get(t) {
            Some(g) => space
                .index_of(g)
                .ok_or_else(|| Error::InvalidCircuit(format!("{g:?} not in the action space")))?,
            None => space.len(),
        };
        v[t * slot + hot] = 1.0;
    }
    Ok(ArchitectureEncoding(v))
}

pub fn decode(enc: &ArchitectureEncoding, space: &ActionSpace, horizon: usize) -> Result<CircuitArchitecture> {
    let slot = space.len() + 1;
    if enc.0.len() != horizon * slot {
        return Err(Error::DimensionMismatch {
            expected: horizon * slot,
            got: enc.0.len(),
        });
    }
    let mut arch = CircuitArchitecture::empty(space.window, horizon);
    let mut ended = false;
    for chunk in enc.0.chunks(slot) {
        let hot: Vec<usize> = chunk.iter().enumerate().filter(|(_, &x)| x == 1.0).map(|(i, _)| i).collect();
        if hot.len() != 1 || chunk.iter().sum::<f32>() != 1.0 {
            return Err(Error::InvalidCircuit("slot is not one-hot".into()));
        }
        if hot[0] == space.len() {
            ended = true;
        } else if ended {
            return Err(Error::InvalidCircuit("gate after an empty slot".into()));
        } else {
            arch.push(space.actions[hot[0]])?;
        }
    }
    Ok(arch)
}

/// Applies `arch` with `params` (one angle per rotation, in order) to `state`.
pub fn run_circuit(state: &PureState, arch: &CircuitArchitecture, params: &[f64]) -> Result<PureState> {
    if params.len() != arch.n_params() {
        return Err(Error::InvalidCircuit(format!(
            "{} parameters for {} rotations",
            params.len(),
            arch.n_params()
        )));
    }
    if state.n_sites() != arch.window.n_sites {
        return Err(Error::DimensionMismatch {
            expected: arch.window.n_sites,
            got: state.n_sites(),
        });
    }
    let mut out = state.clone();
    let mut angles = params.iter();
    for g in &arch.gates {
        let sites: Vec<usize> = g.wires().iter().map(|&w| arch.window.site(w)).collect();
        let angle = if g.is_parameterized() { angles.next().copied() } else { None };
        out.apply_gate_mut(g.kind, &sites, angle)?;
    }
    Ok(out)
}

/// Entropy of the window's target site in `state`.
pub fn target_entropy(state: &PureState, window: &WindowSpec) -> Result<f64> {
    crate::state::site_entropy(state, window.target())
}

/// Purification of the window's reduced state: `ρ_window = M M†` with `M` of
/// size `d × r`, `r ≤ d`. Gates on the window act on the rows of `M`, so any
/// window circuit can be evaluated without touching the full chain.
#[derive(Clone, Debug)]
pub struct WindowState {
    window: WindowSpec,
    /// Column-major, each column a `d`-vector; window position `w` is bit `k−1−w`.
    columns: Vec<C64>,
    d: usize,
}

impl WindowState {
    pub fn from_state(state: &PureState, window: &WindowSpec) -> Result<Self> {
        if state.n_sites() != window.n_sites {
            return Err(Error::DimensionMismatch {
                expected: window.n_sites,
                got: state.n_sites(),
            });
        }
        let rho = reduced_density(state, &window.sites())?;
        Ok(Self::from_density_matrix(rho.entries(), window))
    }

    fn from_density_matrix(rho: &DMatrix<C64>, window: &WindowSpec) -> Self {
        let d = rho.nrows();
        let eig = rho.clone().symmetric_eigen();
        let mut columns = Vec::with_capacity(d * d);
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > 1e-15 {
                let s = lam.sqrt();
                columns.extend(eig.eigenvectors.column(i).iter().map(|z| z * s));
            }
        }
        Self {
            window: *window,
            columns,
            d,
        }
    }

    pub fn window(&self) -> &WindowSpec {
        &self.window
    }

    /// Window density matrix `M M†`.
    pub fn density(&self) -> DMatrix<C64> {
        let d = self.d;
        let mut rho = DMatrix::zeros(d, d);
        for col in self.columns.chunks(d) {
            for j in 0..d {
                for i in 0..d {
                    rho[(i, j)] += col[i] * col[j].conj();
                }
            }
        }
        rho
    }

    fn bit(&self, w: usize) -> usize {
        self.window.size() - 1 - w
    }

    /// Applies gates in place; `params` must match the rotation count.
    fn apply(&mut self, gates: &[GateTemplate], params: &[f64]) {
        let d = self.d;
        let mut angles = params.iter();
        for g in gates {
            match g.kind {
                GateKind::Cnot => {
                    let (cb, tb) = (self.bit(g.qubits[0]), self.bit(g.qubits[1]));
                    for col in self.columns.chunks_mut(d) {
                        apply_cnot(col, cb, tb);
                    }
                }
                kind => {
                    let angle = if kind.is_rotation() { *angles.next().expect("angle count checked") } else { 0.0 };
                    let m = kind.single_qubit_matrix(angle);
                    let b = self.bit(g.qubits[0]);
                    for col in self.columns.chunks_mut(d) {
                        apply_1q(col, b, &m);
                    }
                }
            }
        }
    }

    /// Target-site entropy of the untouched window.
    pub fn base_entropy(&self) -> f64 {
        self.target_entropy_of(&self.columns)
    }

    fn target_entropy_of(&self, columns: &[C64]) -> f64 {
        let tb = 1usize << self.bit(self.window.target_position());
        let (mut a, mut dd, mut b) = (0.0, 0.0, C64::new(0.0, 0.0));
        for col in columns.chunks(self.d) {
            for i in 0..self.d {
                if i & tb == 0 {
                    let (x0, x1) = (col[i], col[i | tb]);
                    a += x0.norm_sqr();
                    dd += x1.norm_sqr();
                    b += x0 * x1.conj();
                }
            }
        }
        qubit_entropy(a, b, dd)
    }

    /// Target-site entropy after running `arch` with `params`.
    pub fn entropy_after(&self, arch: &CircuitArchitecture, params: &[f64]) -> Result<f64> {
        if params.len() != arch.n_params() {
            return Err(Error::InvalidCircuit(format!(
                "{} parameters for {} rotations",
                params.len(),
                arch.n_params()
            )));
        }
        if arch.window.size() != self.window.size() {
            return Err(Error::InvalidWindow("circuit window size differs".into()));
        }
        let mut work = self.clone();
        work.apply(&arch.gates, params);
        Ok(work.target_entropy_of(&work.columns))
    }
}

/// Architecture with bound angles, the unit persisted to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub arch: CircuitArchitecture,
    pub params: Vec<f64>,
}

impl Circuit {
    pub fn new(arch: CircuitArchitecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.n_params() {
            return Err(Error::InvalidCircuit(format!(
                "{} parameters for {} rotations",
                params.len(),
                arch.n_params()
            )));
        }
        Ok(Self { arch, params })
    }

    /// Line-oriented text form (`version 1` header, one gate per line).
    pub fn to_text(&self) -> String {
        let w = &self.arch.window;
        let mut out = String::new();
        writeln!(out, "version 1").unwrap();
        writeln!(out, "n_sites {}", w.n_sites).unwrap();
        writeln!(out, "target {}", w.target).unwrap();
        writeln!(out, "radius {}", w.radius).unwrap();
        let mut angles = self.params.iter();
        for g in &self.arch.gates {
            let sites: Vec<usize> = g.wires().iter().map(|&q| w.site(q)).collect();
            match g.kind {
                GateKind::Cnot => writeln!(out, "CNOT {} {}", sites[0], sites[1]).unwrap(),
                GateKind::H => writeln!(out, "H {}", sites[0]).unwrap(),
                k => writeln!(out, "{} {} {}", k.symbol(), sites[0], decimal17(*angles.next().unwrap())).unwrap(),
            }
        }
        out
    }

    /// Parses [`Circuit::to_text`] output; the horizon is set to the gate count.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut header = |key: &str| -> Result<usize> {
            let (no, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("missing `{key}` header"),
            })?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Parse {
                    line: no,
                    msg: format!("expected `{key}`"),
                });
            }
            let value = parts.next().and_then(|v| v.parse().ok()).ok_or(Error::Parse {
                line: no,
                msg: format!("bad `{key}` value"),
            })?;
            if parts.next().is_some() {
                return Err(Error::Parse {
                    line: no,
                    msg: "trailing tokens".into(),
                });
            }
            Ok(value)
        };
        let version = header("version")?;
        if version != 1 {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported version {version}"),
            });
        }
        let n_sites = header("n_sites")?;
        let target = header("target")?;
        let radius = header("radius")?;
        let window = WindowSpec::new(n_sites, target, radius)?;

        let mut gates = Vec::new();
        let mut params = Vec::new();
        for (no, line) in lines {
            let err = |msg: String| Error::Parse { line: no, msg };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let kind = GateKind::from_symbol(tokens[0]).ok_or_else(|| err(format!("unknown gate `{}`", tokens[0])))?;
            let expected = match kind {
                GateKind::Cnot => 3,
                GateKind::H => 2,
                _ => 3,
            };
            if tokens.len() != expected {
                return Err(err(format!("{} takes {} fields", kind, expected - 1)));
            }
            let pos = |tok: &str| -> Result<usize> {
                let site: usize = tok.parse().map_err(|_| err(format!("bad site `{tok}`")))?;
                window
                    .position(site)
                    .ok_or_else(|| err(format!("site {site} outside the window")))
            };
            match kind {
                GateKind::Cnot => {
                    let (c, t) = (pos(tokens[1])?, pos(tokens[2])?);
                    if c == t {
                        return Err(err("CNOT control equals target".into()));
                    }
                    gates.push(GateTemplate::cnot(c, t));
                }
                GateKind::H => gates.push(GateTemplate::single(kind, pos(tokens[1])?)),
                _ => {
                    gates.push(GateTemplate::single(kind, pos(tokens[1])?));
                    let angle: f64 = tokens[2].parse().map_err(|_| err(format!("bad angle `{}`", tokens[2])))?;
                    if !angle.is_finite() {
                        return Err(err("non-finite angle".into()));
                    }
                    params.push(angle);
                }
            }
        }
        let horizon = gates.len();
        Self::new(CircuitArchitecture::new(window, gates, horizon)?, params)
    }

    /// Re-anchors onto a chain of `n_sites`, keeping the target index.
    pub fn resized(&self, n_sites: usize) -> Result<Self> {
        let window = self.arch.window.resized(n_sites)?;
        Ok(Self {
            arch: self.arch.on_window(window)?,
            params: self.params.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{apply_gate, site_entropy};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn random_state(n: usize, seed: u64) -> PureState {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..1 << n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        PureState::normalized(amps).unwrap()
    }

    #[test]
    fn window_geometry() {
        let w = WindowSpec::new(8, 0, 1).unwrap();
        assert_eq!(w.sites(), vec![7, 0, 1]);
        assert_eq!(w.position(7), Some(0));
        assert_eq!(w.position(1), Some(2));
        assert_eq!(w.position(4), None);
        let w2 = WindowSpec::new(8, 0, 2).unwrap();
        assert_eq!(w2.sites(), vec![6, 7, 0, 1, 2]);
        assert!(WindowSpec::new(4, 0, 2).is_err());
        assert!(WindowSpec::new(8, 0, 3).is_err());
        assert!(WindowSpec::new(8, 8, 1).is_err());
    }

    #[test]
    fn action_space_sizes() {
        let w1 = WindowSpec::new(8, 0, 1).unwrap();
        let w2 = WindowSpec::new(8, 0, 2).unwrap();
        assert_eq!(action_space(&w1).len(), 16);
        assert_eq!(action_space(&w2).len(), 28);
        assert_eq!(action_space_with(&w1, CnotPolicy::AllPairs).len(), 12 + 6);
        assert_eq!(action_space_with(&w2, CnotPolicy::AllPairs).len(), 20 + 20);

        // N = 3: the window wraps around the whole chain
        let w3 = WindowSpec::new(3, 0, 1).unwrap();
        assert_eq!(w3.sites(), vec![2, 0, 1]);
        let space = action_space(&w3);
        assert_eq!(space.len(), 16);
        assert_eq!(space.get(0), Some(&GateTemplate::single(GateKind::Rx, 0)));
        assert_eq!(space.get(3), Some(&GateTemplate::single(GateKind::H, 0)));
        assert_eq!(space.get(12), Some(&GateTemplate::cnot(0, 1)));
        assert_eq!(space.get(13), Some(&GateTemplate::cnot(1, 0)));
        assert_eq!(space.get(15), Some(&GateTemplate::cnot(2, 1)));
    }

    #[test]
    fn encoding_examples() {
        let w = WindowSpec::new(8, 0, 1).unwrap();
        let space = action_space(&w);
        let empty = CircuitArchitecture::empty(w, 4);
        let enc = encode(&empty, &space).unwrap();
        assert_eq!(enc.0.len(), 4 * 17);
        for slot in enc.0.chunks(17) {
            assert_eq!(slot[16], 1.0);
            assert_eq!(slot.iter().sum::<f32>(), 1.0);
        }

        let one = CircuitArchitecture::new(w, vec![*space.get(3).unwrap()], 4).unwrap();
        let enc = encode(&one, &space).unwrap();
        assert_eq!(enc.0[3], 1.0);
        assert_eq!(enc.0[..17].iter().sum::<f32>(), 1.0);
        for slot in enc.0[17..].chunks(17) {
            assert_eq!(slot[16], 1.0);
        }

        // CNOT between window ends is absent under the adjacency policy
        let far = CircuitArchitecture::new(w, vec![GateTemplate::cnot(0, 2)], 4).unwrap();
        assert!(encode(&far, &space).is_err());
    }

    #[test]
    fn decode_rejects_gaps() {
        let w = WindowSpec::new(8, 0, 1).unwrap();
        let space = action_space(&w);
        let mut v = vec![0.0f32; 2 * 17];
        v[16] = 1.0;
        v[17 + 2] = 1.0;
        assert!(decode(&ArchitectureEncoding(v), &space, 2).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(seed in 0u64..10_000, radius in 1usize..3, len in 0usize..12) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w = WindowSpec::new(8, 3, radius).unwrap();
            let space = action_space(&w);
            let gates = (0..len).map(|_| *space.get(rng.random_range(0..space.len())).unwrap()).collect();
            let arch = CircuitArchitecture::new(w, gates, 12).unwrap();
            let back = decode(&encode(&arch, &space).unwrap(), &space, 12).unwrap();
            prop_assert_eq!(back, arch);
        }
    }

    #[test]
    fn run_circuit_examples() {
        let w = WindowSpec::new(3, 1, 1).unwrap(); // sites [0, 1, 2]
        let s = random_state(3, 1);
        let empty = CircuitArchitecture::empty(w, 4);
        assert_eq!(run_circuit(&s, &empty, &[]).unwrap(), s);

        // Bell pair between the target (site 1) and site 2
        let bell = PureState::basis(3, 0);
        let bell = apply_gate(&bell, GateKind::H, &[1], None).unwrap();
        let bell = apply_gate(&bell, GateKind::Cnot, &[1, 2], None).unwrap();
        assert!((site_entropy(&bell, 1).unwrap() - 1.0).abs() < 1e-12);
        let arch = CircuitArchitecture::new(w, vec![GateTemplate::cnot(1, 2)], 4).unwrap();
        let out = run_circuit(&bell, &arch, &[]).unwrap();
        assert!(site_entropy(&out, 1).unwrap() < 1e-12);

        let rx = CircuitArchitecture::new(w, vec![GateTemplate::single(GateKind::Rx, 1)], 4).unwrap();
        let out = run_circuit(&s, &rx, &[2.0 * PI]).unwrap();
        for (a, b) in out.amplitudes().iter().zip(s.amplitudes()) {
            assert!((a + b).norm() < 1e-14);
        }
        assert!(run_circuit(&s, &rx, &[]).is_err());
    }

    #[test]
    fn window_state_matches_full_simulation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for radius in [1, 2] {
            let n = 7;
            let w = WindowSpec::new(n, 5, radius).unwrap();
            let space = action_space_with(&w, CnotPolicy::AllPairs);
            for trial in 0..30 {
                let s = random_state(n, 100 + trial);
                let gates: Vec<GateTemplate> =
                    (0..10).map(|_| *space.get(rng.random_range(0..space.len())).unwrap()).collect();
                let arch = CircuitArchitecture::new(w, gates, 10).unwrap();
                let params: Vec<f64> = (0..arch.n_params()).map(|_| rng.random_range(-PI..PI)).collect();
                let full = site_entropy(&run_circuit(&s, &arch, &params).unwrap(), w.target()).unwrap();
                let ws = WindowState::from_state(&s, &w).unwrap();
                let fast = ws.entropy_after(&arch, &params).unwrap();
                assert!((full - fast).abs() < 1e-10, "{full} vs {fast}");
                assert!((ws.base_entropy() - site_entropy(&s, w.target()).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gates_off_target_keep_its_entropy() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let w = WindowSpec::new(6, 2, 2).unwrap();
        let s = random_state(6, 5);
        let base = site_entropy(&s, 2).unwrap();
        let off_target: Vec<GateTemplate> = action_space(&w)
            .templates()
            .iter()
            .copied()
            .filter(|g| !g.wires().contains(&w.target_position()))
            .collect();
        for _ in 0..20 {
            let gates = (0..8).map(|_| off_target[rng.random_range(0..off_target.len())]).collect();
            let arch = CircuitArchitecture::new(w, gates, 8).unwrap();
            let params: Vec<f64> = (0..arch.n_params()).map(|_| rng.random_range(-PI..PI)).collect();
            let out = run_circuit(&s, &arch, &params).unwrap();
            assert!((site_entropy(&out, 2).unwrap() - base).abs() < 1e-10);

            // appending target-only single-qubit gates does not change it either
            let mut arch2 = arch.clone();
            arch2.horizon += 2;
            arch2.push(GateTemplate::single(GateKind::Ry, 2)).unwrap();
            arch2.push(GateTemplate::single(GateKind::H, 2)).unwrap();
            let mut p2 = params.clone();
            p2.push(rng.random_range(-PI..PI));
            let out2 = run_circuit(&s, &arch2, &p2).unwrap();
            assert!((site_entropy(&out2, 2).unwrap() - base).abs() < 1e-10);
        }
    }

    #[test]
    fn text_format_round_trip_and_layout() {
        let w = WindowSpec::new(8, 0, 1).unwrap();
        let arch = CircuitArchitecture::new(
            w,
            vec![
                GateTemplate::single(GateKind::Rx, 0),
                GateTemplate::single(GateKind::H, 1),
                GateTemplate::cnot(1, 2),
                GateTemplate::single(GateKind::Rz, 2),
            ],
            6,
        )
        .unwrap();
        let c = Circuit::new(arch, vec![PI, -0.25]).unwrap();
        let text = c.to_text();
        assert_eq!(
            text,
            "version 1\nn_sites 8\ntarget 0\nradius 1\nRX 7 3.1415926535897931\nH 0\nCNOT 0 1\nRZ 1 -0.25000000000000000\n"
        );
        let back = Circuit::from_text(&text).unwrap();
        assert_eq!(back.arch.gates(), c.arch.gates());
        assert_eq!(back.params, c.params);
    }

    #[test]
    fn text_format_errors() {
        let head = "version 1\nn_sites 8\ntarget 0\nradius 1\n";
        for bad in [
            format!("{head}XX 0\n"),
            format!("{head}RX 0\n"),
            format!("{head}H 4\n"),
            format!("{head}CNOT 0 0\n"),
            format!("{head}H 0 1.0\n"),
            format!("{head}RY 1 abc\n"),
            "version 2\nn_sites 8\ntarget 0\nradius 1\n".to_string(),
            "n_sites 8\n".to_string(),
            "version 1\nn_sites 4\ntarget 0\nradius 2\n".to_string(),
        ] {
            assert!(Circuit::from_text(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn resized_circuit_keeps_relative_wires() {
        let w = WindowSpec::new(8, 0, 1).unwrap();
        let arch = CircuitArchitecture::new(w, vec![GateTemplate::cnot(0, 1)], 1).unwrap();
        let c = Circuit::new(arch, vec![]).unwrap().resized(12).unwrap();
        assert!(c.to_text().contains("CNOT 11 0"));
    }

    #[test]
    fn bell_entropy_in_window() {
        let s = FRAC_1_SQRT_2;
        let bell = PureState::from_real(&[s, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, s]).unwrap(); // GHZ-3
        let w = WindowSpec::new(3, 1, 1).unwrap();
        let ws = WindowState::from_state(&bell, &w).unwrap();
        assert!((ws.base_entropy() - 1.0).abs() < 1e-12);
    }
}
