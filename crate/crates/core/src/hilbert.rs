//! Exact complex-amplitude algebra for small two-photon Hilbert spaces.
//!
//! A single-photon mode is labeled by fiber core, polarization and an
//! optional time bin. Two-photon states are sparse maps from label pairs to
//! complex amplitudes; the physical states in this crate never exceed a few
//! dozen nonzero terms, so exact sparse bookkeeping beats a dense tensor.
//! Density operators materialize a dense Hermitian matrix over the joint
//! labels actually present.
//!
//! Sub-normalized states are first class: a squared norm below one stands
//! for the surviving fraction after post-selection or loss, so lossy maps
//! need no ancilla modes. Global phase is never canonicalized; comparisons
//! go through probabilities and fidelities only.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use thiserror::Error;

/// Tolerance for Hermiticity and unitarity checks (double precision assumed).
pub const OPERATOR_TOL: f64 = 1e-12;
/// Density-operator eigenvalues may undershoot zero by at most this much.
pub const EIGENVALUE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum HilbertError {
    #[error("state has zero norm")]
    ZeroState,
    #[error("basis mismatch: {0}")]
    Basis(String),
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("operator is not unitary (deviation {deviation:.3e})")]
    Unitarity { deviation: f64 },
}

/// Index of a fiber core in the canonical layout (see [`crate::channel`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoreId(pub u8);

impl fmt::Display for CoreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

/// Short or long interferometer arm; only meaningful after an unbalanced
/// interferometer stage has tagged the photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimeBin {
    Short,
    Long,
}

/// Basis label of a single photon: core, polarization, optional time bin.
///
/// The time bin is `None` before any interferometer stage; states reject
/// mixed labeled/unlabeled time structure within one photon slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeLabel {
    pub core: CoreId,
    pub pol: Polarization,
    pub timebin: Option<TimeBin>,
}

impl ModeLabel {
    pub fn new(core: CoreId, pol: Polarization) -> Self {
        Self { core, pol, timebin: None }
    }

    pub fn with_bin(core: CoreId, pol: Polarization, bin: TimeBin) -> Self {
        Self { core, pol, timebin: Some(bin) }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pol = match self.pol {
            Polarization::H => "H",
            Polarization::V => "V",
        };
        match self.timebin {
            None => write!(f, "{}:{}", self.core, pol),
            Some(TimeBin::Short) => write!(f, "{}:{}:S", self.core, pol),
            Some(TimeBin::Long) => write!(f, "{}:{}:L", self.core, pol),
        }
    }
}

/// Which photon of the pair an operation acts on. Photon A travels to
/// Alice's station, photon B to Bob's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Photon {
    A,
    B,
}

/// Joint basis label of a two-photon term: (photon A mode, photon B mode).
pub type JointLabel = (ModeLabel, ModeLabel);

/// Degree of freedom selector for dephasing maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dof {
    Path,
    Time,
    Pol,
}

fn dof_key(label: &JointLabel, dof: Dof) -> (u32, u32) {
    let enc = |m: &ModeLabel| -> u32 {
        match dof {
            Dof::Path => m.core.0 as u32,
            Dof::Pol => m.pol.index() as u32,
            Dof::Time => match m.timebin {
                None => 0,
                Some(TimeBin::Short) => 1,
                Some(TimeBin::Long) => 2,
            },
        }
    };
    (enc(&label.0), enc(&label.1))
}

/// Operation on a single photon's mode space. `Polarization` and
/// `CoreModes` accept non-unitary matrices when applied through
/// [`TwoPhotonState::apply_local`] (loss, projection); the `_unitary`
/// entry points validate the matrix first.
#[derive(Debug, Clone)]
pub enum LocalOp {
    /// 2x2 Jones matrix on the polarization of one photon, optionally
    /// restricted to a single core (fiber drift acts per core).
    Polarization {
        matrix: Matrix2<Complex64>,
        core: Option<CoreId>,
    },
    /// Matrix over a list of core modes (beamsplitter, crosstalk,
    /// per-core loss and phase as a diagonal). Cores not listed pass
    /// through unchanged.
    CoreModes {
        modes: Vec<CoreId>,
        matrix: DMatrix<Complex64>,
    },
    /// Phase factor on one time bin.
    TimePhase { bin: TimeBin, phase: f64 },
}

impl LocalOp {
    pub fn identity() -> Self {
        LocalOp::Polarization { matrix: Matrix2::identity(), core: None }
    }

    /// Per-core amplitude factors as a diagonal core-mode map.
    pub fn core_diagonal(factors: &[(CoreId, Complex64)]) -> Self {
        let modes: Vec<CoreId> = factors.iter().map(|(c, _)| *c).collect();
        let n = modes.len();
        let mut matrix = DMatrix::<Complex64>::zeros(n, n);
        for (i, (_, f)) in factors.iter().enumerate() {
            matrix[(i, i)] = *f;
        }
        LocalOp::CoreModes { modes, matrix }
    }

    /// Largest deviation of `M†M` from the identity on the touched subspace.
    pub fn unitarity_deviation(&self) -> f64 {
        match self {
            LocalOp::Polarization { matrix, .. } => {
                let g = matrix.adjoint() * matrix;
                let mut dev: f64 = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        let expect = if i == j { Complex64::ONE } else { Complex64::ZERO };
                        dev = dev.max((g[(i, j)] - expect).norm());
                    }
                }
                dev
            }
            LocalOp::CoreModes { matrix, .. } => {
                let n = matrix.nrows();
                let g = matrix.adjoint() * matrix;
                let mut dev: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let expect = if i == j { Complex64::ONE } else { Complex64::ZERO };
                        dev = dev.max((g[(i, j)] - expect).norm());
                    }
                }
                dev
            }
            LocalOp::TimePhase { .. } => 0.0,
        }
    }

    pub fn require_unitary(&self) -> Result<(), HilbertError> {
        if let LocalOp::CoreModes { modes, matrix } = self {
            if matrix.nrows() != modes.len() || matrix.ncols() != modes.len() {
                return Err(HilbertError::Basis(format!(
                    "core-mode matrix is {}x{} but {} modes listed",
                    matrix.nrows(),
                    matrix.ncols(),
                    modes.len()
                )));
            }
        }
        let deviation = self.unitarity_deviation();
        if deviation > OPERATOR_TOL {
            return Err(HilbertError::Unitarity { deviation });
        }
        Ok(())
    }

    /// Sparse column of the map for one input mode label.
    fn apply_to_label(&self, label: &ModeLabel) -> Vec<(ModeLabel, Complex64)> {
        match self {
            LocalOp::Polarization { matrix, core } => {
                if core.map_or(false, |c| c != label.core) {
                    return vec![(*label, Complex64::ONE)];
                }
                let col = label.pol.index();
                let mut out = Vec::with_capacity(2);
                for (row, pol) in [Polarization::H, Polarization::V].iter().enumerate() {
                    let coeff = matrix[(row, col)];
                    if coeff != Complex64::ZERO {
                        out.push((ModeLabel { pol: *pol, ..*label }, coeff));
                    }
                }
                out
            }
            LocalOp::CoreModes { modes, matrix } => {
                let Some(col) = modes.iter().position(|c| *c == label.core) else {
                    return vec![(*label, Complex64::ONE)];
                };
                let mut out = Vec::with_capacity(modes.len());
                for (row, core) in modes.iter().enumerate() {
                    let coeff = matrix[(row, col)];
                    if coeff != Complex64::ZERO {
                        out.push((ModeLabel { core: *core, ..*label }, coeff));
                    }
                }
                out
            }
            LocalOp::TimePhase { bin, phase } => {
                let coeff = if label.timebin == Some(*bin) {
                    Complex64::from_polar(1.0, *phase)
                } else {
                    Complex64::ONE
                };
                vec![(*label, coeff)]
            }
        }
    }
}

/// Sparse two-photon state. The squared norm is the probability mass the
/// state carries; it is at most one and may be below one.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    amps: BTreeMap<JointLabel, Complex64>,
}

impl TwoPhotonState {
    /// Builds a state from amplitude terms. Exact zeros are dropped and
    /// repeated labels accumulate. Mixed labeled/unlabeled time structure
    /// within one photon slot is rejected.
    pub fn from_amplitudes<I>(terms: I) -> Result<Self, HilbertError>
    where
        I: IntoIterator<Item = (JointLabel, Complex64)>,
    {
        let mut amps: BTreeMap<JointLabel, Complex64> = BTreeMap::new();
        for (label, amp) in terms {
            *amps.entry(label).or_insert(Complex64::ZERO) += amp;
        }
        amps.retain(|_, a| *a != Complex64::ZERO);
        let state = Self { amps };
        state.check_time_structure()?;
        Ok(state)
    }

    fn check_time_structure(&self) -> Result<(), HilbertError> {
        for slot in [Photon::A, Photon::B] {
            let mut labeled: Option<bool> = None;
            for (la, lb) in self.amps.keys() {
                let bin = match slot {
                    Photon::A => la.timebin,
                    Photon::B => lb.timebin,
                };
                let is_labeled = bin.is_some();
                match labeled {
                    None => labeled = Some(is_labeled),
                    Some(prev) if prev != is_labeled => {
                        return Err(HilbertError::Basis(
                            "mixed labeled and unlabeled time bins in one state".into(),
                        ))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Whether each photon slot carries time-bin labels.
    pub fn time_structure(&self) -> (bool, bool) {
        let mut a = false;
        let mut b = false;
        if let Some((la, lb)) = self.amps.keys().next() {
            a = la.timebin.is_some();
            b = lb.timebin.is_some();
        }
        (a, b)
    }

    pub fn terms(&self) -> &BTreeMap<JointLabel, Complex64> {
        &self.amps
    }

    pub fn amplitude(&self, label: &JointLabel) -> Complex64 {
        self.amps.get(label).copied().unwrap_or(Complex64::ZERO)
    }

    /// Squared norm, i.e. the total probability mass of the state.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    /// Rescales to unit norm, preserving amplitude ratios.
    pub fn normalize(&self) -> Result<Self, HilbertError> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return Err(HilbertError::ZeroState);
        }
        Ok(self.scaled(Complex64::new(1.0 / n.sqrt(), 0.0)))
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            amps: self.amps.iter().map(|(l, a)| (*l, a * factor)).collect(),
        }
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amps
            .iter()
            .map(|(l, a)| a.conj() * other.amplitude(l))
            .sum()
    }

    /// Applies a single-photon map without requiring unitarity (loss,
    /// projection). The norm may shrink.
    pub fn apply_local(&self, photon: Photon, op: &LocalOp) -> Result<Self, HilbertError> {
        if let LocalOp::CoreModes { modes, matrix } = op {
            if matrix.nrows() != modes.len() || matrix.ncols() != modes.len() {
                return Err(HilbertError::Basis(format!(
                    "core-mode matrix is {}x{} but {} modes listed",
                    matrix.nrows(),
                    matrix.ncols(),
                    modes.len()
                )));
            }
        }
        let mut amps: BTreeMap<JointLabel, Complex64> = BTreeMap::new();
        for ((la, lb), amp) in &self.amps {
            let target = match photon {
                Photon::A => la,
                Photon::B => lb,
            };
            for (out, coeff) in op.apply_to_label(target) {
                let label = match photon {
                    Photon::A => (out, *lb),
                    Photon::B => (*la, out),
                };
                *amps.entry(label).or_insert(Complex64::ZERO) += coeff * amp;
            }
        }
        amps.retain(|_, a| a.norm_sqr() > 0.0);
        let state = Self { amps };
        state.check_time_structure()?;
        Ok(state)
    }

    /// Applies a single-photon unitary; rejects non-unitary input.
    pub fn apply_local_unitary(
        &self,
        photon: Photon,
        op: &LocalOp,
    ) -> Result<Self, HilbertError> {
        op.require_unitary()?;
        self.apply_local(photon, op)
    }

    /// Born-rule probability of landing in the projector's subspace.
    pub fn probability(&self, proj: &Projector) -> Result<f64, HilbertError> {
        proj.check_compatible(self)?;
        let p: f64 = proj
            .kets
            .iter()
            .map(|k| k.inner(self).norm_sqr())
            .sum();
        Ok(p)
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator::from_pure(self)
    }
}

/// Orthogonal projector, stored as an orthonormal set of kets spanning the
/// projected subspace. Construction orthonormalizes, so idempotency and
/// Hermiticity hold by definition.
#[derive(Debug, Clone)]
pub struct Projector {
    kets: Vec<TwoPhotonState>,
}

impl Projector {
    pub fn onto(kets: &[TwoPhotonState]) -> Result<Self, HilbertError> {
        let mut ortho: Vec<TwoPhotonState> = Vec::new();
        for ket in kets {
            let mut residual = ket.clone();
            for prev in &ortho {
                let overlap = prev.inner(&residual);
                let correction = prev.scaled(overlap);
                let mut amps = residual.amps.clone();
                for (l, a) in correction.amps {
                    *amps.entry(l).or_insert(Complex64::ZERO) -= a;
                }
                amps.retain(|_, a| a.norm_sqr() > 1e-28);
                residual = TwoPhotonState { amps };
            }
            let n = residual.norm_sqr();
            if n > 1e-24 {
                ortho.push(residual.scaled(Complex64::new(1.0 / n.sqrt(), 0.0)));
            }
        }
        if ortho.is_empty() {
            return Err(HilbertError::ZeroState);
        }
        Ok(Self { kets: ortho })
    }

    /// Rank-1 projector onto a single (normalized) ket.
    pub fn onto_ket(ket: &TwoPhotonState) -> Result<Self, HilbertError> {
        Self::onto(std::slice::from_ref(ket))
    }

    pub fn rank(&self) -> usize {
        self.kets.len()
    }

    pub fn kets(&self) -> &[TwoPhotonState] {
        &self.kets
    }

    fn check_compatible(&self, state: &TwoPhotonState) -> Result<(), HilbertError> {
        if state.terms().is_empty() {
            return Ok(());
        }
        let st = state.time_structure();
        for ket in &self.kets {
            if ket.time_structure() != st {
                return Err(HilbertError::Basis(
                    "projector and state disagree on time-bin structure".into(),
                ));
            }
        }
        Ok(())
    }

    /// P|psi>.
    pub fn apply(&self, state: &TwoPhotonState) -> Result<TwoPhotonState, HilbertError> {
        self.check_compatible(state)?;
        let mut amps: BTreeMap<JointLabel, Complex64> = BTreeMap::new();
        for ket in &self.kets {
            let coeff = ket.inner(state);
            for (l, a) in &ket.amps {
                *amps.entry(*l).or_insert(Complex64::ZERO) += coeff * a;
            }
        }
        amps.retain(|_, a| a.norm_sqr() > 0.0);
        Ok(TwoPhotonState { amps })
    }
}

/// Dense Hermitian operator over the joint labels present in the state.
/// Trace at most one; sub-unit trace carries post-selection/loss weight.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    basis: Vec<JointLabel>,
    matrix: DMatrix<Complex64>,
}

impl DensityOperator {
    pub fn from_pure(state: &TwoPhotonState) -> Self {
        let basis: Vec<JointLabel> = state.amps.keys().copied().collect();
        let v: Vec<Complex64> = basis.iter().map(|l| state.amplitude(l)).collect();
        let n = basis.len();
        let mut matrix = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                matrix[(i, j)] = v[i] * v[j].conj();
            }
        }
        Self { basis, matrix }
    }

    /// Maximally mixed operator over an explicit label set.
    pub fn maximally_mixed(basis: &[JointLabel]) -> Self {
        let n = basis.len();
        let mut matrix = DMatrix::<Complex64>::zeros(n, n);
        let w = Complex64::new(1.0 / n as f64, 0.0);
        for i in 0..n {
            matrix[(i, i)] = w;
        }
        Self { basis: basis.to_vec(), matrix }
    }

    pub fn basis(&self) -> &[JointLabel] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        (0..self.basis.len()).map(|i| self.matrix[(i, i)].re).sum()
    }

    pub fn element(&self, row: &JointLabel, col: &JointLabel) -> Complex64 {
        let (Some(i), Some(j)) = (self.index_of(row), self.index_of(col)) else {
            return Complex64::ZERO;
        };
        self.matrix[(i, j)]
    }

    pub fn population(&self, label: &JointLabel) -> f64 {
        self.element(label, label).re
    }

    fn index_of(&self, label: &JointLabel) -> Option<usize> {
        self.basis.iter().position(|l| l == label)
    }

    /// weight * self + (1 - weight) * other, over the merged basis.
    pub fn mix(&self, other: &Self, weight: f64) -> Result<Self, HilbertError> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(HilbertError::Range(format!(
                "mix weight {weight} outside [0, 1]"
            )));
        }
        let mut basis: Vec<JointLabel> = self.basis.clone();
        for l in &other.basis {
            if !basis.contains(l) {
                basis.push(*l);
            }
        }
        basis.sort();
        let n = basis.len();
        let mut matrix = DMatrix::<Complex64>::zeros(n, n);
        let w = Complex64::new(weight, 0.0);
        let cw = Complex64::new(1.0 - weight, 0.0);
        for (i, li) in basis.iter().enumerate() {
            for (j, lj) in basis.iter().enumerate() {
                matrix[(i, j)] = w * self.element(li, lj) + cw * other.element(li, lj);
            }
        }
        Ok(Self { basis, matrix })
    }

    /// Conjugation by a single-photon map: rho -> (M ⊗ I) rho (M ⊗ I)†.
    pub fn apply_local(&self, photon: Photon, op: &LocalOp) -> Result<Self, HilbertError> {
        // Columns of the transfer matrix in the joint-label basis.
        let mut out_basis: Vec<JointLabel> = Vec::new();
        let mut columns: Vec<Vec<(usize, Complex64)>> = Vec::with_capacity(self.basis.len());
        for (la, lb) in &self.basis {
            let target = match photon {
                Photon::A => la,
                Photon::B => lb,
            };
            let mut col = Vec::new();
            for (mode, coeff) in op.apply_to_label(target) {
                let label = match photon {
                    Photon::A => (mode, *lb),
                    Photon::B => (*la, mode),
                };
                let idx = match out_basis.iter().position(|l| *l == label) {
                    Some(i) => i,
                    None => {
                        out_basis.push(label);
                        out_basis.len() - 1
                    }
                };
                col.push((idx, coeff));
            }
            columns.push(col);
        }
        let n_out = out_basis.len();
        let n_in = self.basis.len();
        let mut transfer = DMatrix::<Complex64>::zeros(n_out, n_in);
        for (j, col) in columns.iter().enumerate() {
            for (i, coeff) in col {
                transfer[(*i, j)] += *coeff;
            }
        }
        let matrix = &transfer * &self.matrix * transfer.adjoint();
        let mut result = Self { basis: out_basis, matrix };
        result.sort_basis();
        Ok(result)
    }

    pub fn apply_local_unitary(
        &self,
        photon: Photon,
        op: &LocalOp,
    ) -> Result<Self, HilbertError> {
        op.require_unitary()?;
        self.apply_local(photon, op)
    }

    fn sort_basis(&mut self) {
        let mut order: Vec<usize> = (0..self.basis.len()).collect();
        order.sort_by_key(|&i| self.basis[i]);
        let basis: Vec<JointLabel> = order.iter().map(|&i| self.basis[i]).collect();
        let n = basis.len();
        let mut matrix = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                matrix[(i, j)] = self.matrix[(order[i], order[j])];
            }
        }
        self.basis = basis;
        self.matrix = matrix;
    }

    /// Scales coherences between differing labels of one degree of freedom
    /// by `1 - p`, leaving populations untouched.
    pub fn dephase(&self, dof: Dof, p: f64) -> Result<Self, HilbertError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(HilbertError::Range(format!(
                "dephasing weight {p} outside [0, 1]"
            )));
        }
        let keep = Complex64::new(1.0 - p, 0.0);
        let n = self.basis.len();
        let mut matrix = self.matrix.clone();
        for i in 0..n {
            for j in 0..n {
                if dof_key(&self.basis[i], dof) != dof_key(&self.basis[j], dof) {
                    matrix[(i, j)] *= keep;
                }
            }
        }
        Ok(Self { basis: self.basis.clone(), matrix })
    }

    /// `<target| rho |target>`; the target must be normalized.
    pub fn fidelity_with_pure(&self, target: &TwoPhotonState) -> Result<f64, HilbertError> {
        if (target.norm_sqr() - 1.0).abs() > 1e-9 {
            return Err(HilbertError::Range(format!(
                "fidelity target norm^2 = {}, expected 1",
                target.norm_sqr()
            )));
        }
        if !self.basis.is_empty() && !target.terms().is_empty() {
            let st = target.time_structure();
            let (la, lb) = self.basis[0];
            if (la.timebin.is_some(), lb.timebin.is_some()) != st {
                return Err(HilbertError::Basis(
                    "fidelity target disagrees on time-bin structure".into(),
                ));
            }
        }
        let mut f = Complex64::ZERO;
        for (i, li) in self.basis.iter().enumerate() {
            let ti = target.amplitude(li);
            if ti == Complex64::ZERO {
                continue;
            }
            for (j, lj) in self.basis.iter().enumerate() {
                let tj = target.amplitude(lj);
                if tj == Complex64::ZERO {
                    continue;
                }
                f += ti.conj() * self.matrix[(i, j)] * tj;
            }
        }
        Ok(f.re)
    }

    /// Born-rule weight of a projector's subspace.
    pub fn probability(&self, proj: &Projector) -> Result<f64, HilbertError> {
        let mut total = 0.0;
        for ket in proj.kets() {
            let mut f = Complex64::ZERO;
            for (i, li) in self.basis.iter().enumerate() {
                let ti = ket.amplitude(li);
                if ti == Complex64::ZERO {
                    continue;
                }
                for (j, lj) in self.basis.iter().enumerate() {
                    let tj = ket.amplitude(lj);
                    if tj == Complex64::ZERO {
                        continue;
                    }
                    f += ti.conj() * self.matrix[(i, j)] * tj;
                }
            }
            total += f.re;
        }
        Ok(total)
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.basis.len();
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                dev = dev.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// Eigenvalues via the real symmetric embedding [[Re, -Im], [Im, Re]],
    /// whose spectrum doubles each Hermitian eigenvalue.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.basis.len();
        if n == 0 {
            return Vec::new();
        }
        let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.matrix[(i, j)];
                big[(i, j)] = z.re;
                big[(i, j + n)] = -z.im;
                big[(i + n, j)] = z.im;
                big[(i + n, j + n)] = z.re;
            }
        }
        let eig = big.symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        vals.into_iter().step_by(2).collect()
    }

    /// Checks Hermiticity, positivity and trace bounds at the module
    /// tolerances.
    pub fn validate(&self) -> Result<(), HilbertError> {
        let dev = self.hermiticity_deviation();
        if dev > OPERATOR_TOL {
            return Err(HilbertError::Range(format!(
                "Hermiticity deviation {dev:.3e} exceeds {OPERATOR_TOL:.0e}"
            )));
        }
        if let Some(min) = self.eigenvalues().first() {
            if *min < -EIGENVALUE_TOL {
                return Err(HilbertError::Range(format!(
                    "negative eigenvalue {min:.3e}"
                )));
            }
        }
        let tr = self.trace();
        if !(-EIGENVALUE_TOL..=1.0 + EIGENVALUE_TOL).contains(&tr) {
            return Err(HilbertError::Range(format!("trace {tr} outside [0, 1]")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn label(core: u8, pol: Polarization) -> ModeLabel {
        ModeLabel::new(CoreId(core), pol)
    }

    fn phi_plus(core_a: u8, core_b: u8) -> TwoPhotonState {
        TwoPhotonState::from_amplitudes([
            (
                (label(core_a, Polarization::H), label(core_b, Polarization::H)),
                c(FRAC_1_SQRT_2),
            ),
            (
                (label(core_a, Polarization::V), label(core_b, Polarization::V)),
                c(FRAC_1_SQRT_2),
            ),
        ])
        .unwrap()
    }

    #[test]
    fn normalize_single_term() {
        let s = TwoPhotonState::from_amplitudes([(
            (label(1, Polarization::H), label(2, Polarization::H)),
            c(2.0),
        )])
        .unwrap();
        let n = s.normalize().unwrap();
        assert_abs_diff_eq!(n.norm_sqr(), 1.0, epsilon = 1e-15);
        let amp = n.amplitude(&(label(1, Polarization::H), label(2, Polarization::H)));
        assert_abs_diff_eq!(amp.re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hyper_entangled_wavefunction_is_normalized() {
        // (|SS> + e^{i phi} |LL>) ⊗ (|HH> + |VV>) / 2, expanded to four
        // terms of amplitude one half each.
        let phi = 0.7;
        let mut terms = Vec::new();
        for bin in [TimeBin::Short, TimeBin::Long] {
            for pol in [Polarization::H, Polarization::V] {
                let amp = if bin == TimeBin::Long {
                    Complex64::from_polar(0.5, phi)
                } else {
                    c(0.5)
                };
                terms.push((
                    (
                        ModeLabel::with_bin(CoreId(1), pol, bin),
                        ModeLabel::with_bin(CoreId(10), pol, bin),
                    ),
                    amp,
                ));
            }
        }
        let s = TwoPhotonState::from_amplitudes(terms).unwrap();
        assert_abs_diff_eq!(s.norm_sqr(), 1.0, epsilon = 1e-15);
        let n = s.normalize().unwrap();
        assert_abs_diff_eq!(n.norm_sqr(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn normalize_random_state_matches_sum_of_squares() {
        // Independent oracle: accumulate |a|^2 by hand, then verify the
        // normalized state divides each amplitude by that sum's root.
        let raw = [
            (0.3, 0.1),
            (-0.2, 0.4),
            (0.9, -0.5),
            (0.05, 0.0),
            (0.0, 0.77),
            (-0.6, -0.6),
            (0.25, -0.1),
            (0.4, 0.9),
        ];
        let mut oracle_sum = 0.0;
        let mut terms = Vec::new();
        for (k, (re, im)) in raw.iter().enumerate() {
            oracle_sum += re * re + im * im;
            let pol = if k % 2 == 0 { Polarization::H } else { Polarization::V };
            terms.push((
                (label(k as u8 / 2, pol), label(9 + k as u8 / 2, pol)),
                Complex64::new(*re, *im),
            ));
        }
        let s = TwoPhotonState::from_amplitudes(terms).unwrap();
        assert_abs_diff_eq!(s.norm_sqr(), oracle_sum, epsilon = 1e-14);
        let n = s.normalize().unwrap();
        assert_abs_diff_eq!(n.norm_sqr(), 1.0, epsilon = 1e-14);
        // Ratio preservation on a pair of labels.
        let keys: Vec<JointLabel> = s.terms().keys().copied().collect();
        let r_before = s.amplitude(&keys[0]) / s.amplitude(&keys[3]);
        let r_after = n.amplitude(&keys[0]) / n.amplitude(&keys[3]);
        assert!((r_before - r_after).norm() < 1e-12);
    }

    #[test]
    fn normalize_zero_state_errors() {
        let s = TwoPhotonState::from_amplitudes([]).unwrap();
        assert!(matches!(s.normalize(), Err(HilbertError::ZeroState)));
    }

    #[test]
    fn bell_state_projection_probabilities() {
        let s = phi_plus(1, 2);
        let hh = Projector::onto_ket(
            &TwoPhotonState::from_amplitudes([(
                (label(1, Polarization::H), label(2, Polarization::H)),
                c(1.0),
            )])
            .unwrap(),
        )
        .unwrap();
        let hv = Projector::onto_ket(
            &TwoPhotonState::from_amplitudes([(
                (label(1, Polarization::H), label(2, Polarization::V)),
                c(1.0),
            )])
            .unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(s.probability(&hh).unwrap(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.probability(&hv).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn two_core_superposition_projects_evenly() {
        // (|3 3'> - |4 4'>)/sqrt(2) against the |3 3'> subspace (both
        // polarizations) gives one half.
        let s = TwoPhotonState::from_amplitudes([
            ((label(3, Polarization::H), label(13, Polarization::H)), c(0.5)),
            ((label(3, Polarization::V), label(13, Polarization::V)), c(0.5)),
            ((label(4, Polarization::H), label(14, Polarization::H)), c(-0.5)),
            ((label(4, Polarization::V), label(14, Polarization::V)), c(-0.5)),
        ])
        .unwrap();
        let kets = [
            TwoPhotonState::from_amplitudes([(
                (label(3, Polarization::H), label(13, Polarization::H)),
                c(1.0),
            )])
            .unwrap(),
            TwoPhotonState::from_amplitudes([(
                (label(3, Polarization::V), label(13, Polarization::V)),
                c(1.0),
            )])
            .unwrap(),
        ];
        let proj = Projector::onto(&kets).unwrap();
        assert_abs_diff_eq!(s.probability(&proj).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn projector_rejects_time_structure_mismatch() {
        let s = phi_plus(1, 2);
        let ket = TwoPhotonState::from_amplitudes([(
            (
                ModeLabel::with_bin(CoreId(1), Polarization::H, TimeBin::Short),
                ModeLabel::with_bin(CoreId(2), Polarization::H, TimeBin::Short),
            ),
            c(1.0),
        )])
        .unwrap();
        let proj = Projector::onto_ket(&ket).unwrap();
        assert!(matches!(
            s.probability(&proj),
            Err(HilbertError::Basis(_))
        ));
    }

    #[test]
    fn self_fidelity_is_one() {
        let s = phi_plus(1, 2);
        let rho = s.to_density();
        assert_abs_diff_eq!(rho.fidelity_with_pure(&s).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn maximally_mixed_fidelity_is_inverse_dimension() {
        // 16-dimensional path ⊗ polarization space.
        let mut basis = Vec::new();
        for core in 1..=4u8 {
            for pol_a in [Polarization::H, Polarization::V] {
                for pol_b in [Polarization::H, Polarization::V] {
                    basis.push((label(core, pol_a), label(core + 10, pol_b)));
                }
            }
        }
        assert_eq!(basis.len(), 16);
        let rho = DensityOperator::maximally_mixed(&basis);
        // Target: equal superposition of the four |i i'> ⊗ |HH>+|VV> terms.
        let mut terms = Vec::new();
        for core in 1..=4u8 {
            for pol in [Polarization::H, Polarization::V] {
                terms.push(((label(core, pol), label(core + 10, pol)), c(1.0 / 8f64.sqrt())));
            }
        }
        let target = TwoPhotonState::from_amplitudes(terms).unwrap();
        assert_abs_diff_eq!(
            rho.fidelity_with_pure(&target).unwrap(),
            1.0 / 16.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn werner_mixture_fidelity() {
        // v |Phi+><Phi+| + (1 - v) I/4 at v = 0.9 has fidelity
        // 0.9 + 0.1/4 = 0.925 with |Phi+>; cross-check by matrix arithmetic.
        let s = phi_plus(1, 2);
        let pure = s.to_density();
        let basis = [
            (label(1, Polarization::H), label(2, Polarization::H)),
            (label(1, Polarization::H), label(2, Polarization::V)),
            (label(1, Polarization::V), label(2, Polarization::H)),
            (label(1, Polarization::V), label(2, Polarization::V)),
        ];
        let mixed = DensityOperator::maximally_mixed(&basis);
        let werner = pure.mix(&mixed, 0.9).unwrap();
        assert_abs_diff_eq!(
            werner.fidelity_with_pure(&s).unwrap(),
            0.925,
            epsilon = 1e-12
        );
        werner.validate().unwrap();
    }

    #[test]
    fn mix_weight_bounds() {
        let s = phi_plus(1, 2);
        let rho = s.to_density();
        assert!(matches!(
            rho.mix(&rho, 1.1),
            Err(HilbertError::Range(_))
        ));
        let same = rho.mix(&rho, 1.0).unwrap();
        assert_abs_diff_eq!(same.fidelity_with_pure(&s).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn equal_mix_of_projectors_is_diagonal() {
        let hh = TwoPhotonState::from_amplitudes([(
            (label(1, Polarization::H), label(2, Polarization::H)),
            c(1.0),
        )])
        .unwrap()
        .to_density();
        let vv = TwoPhotonState::from_amplitudes([(
            (label(1, Polarization::V), label(2, Polarization::V)),
            c(1.0),
        )])
        .unwrap()
        .to_density();
        let mixed = hh.mix(&vv, 0.5).unwrap();
        assert_abs_diff_eq!(
            mixed.population(&(label(1, Polarization::H), label(2, Polarization::H))),
            0.5,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            mixed.population(&(label(1, Polarization::V), label(2, Polarization::V))),
            0.5,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            mixed
                .element(
                    &(label(1, Polarization::H), label(2, Polarization::H)),
                    &(label(1, Polarization::V), label(2, Polarization::V))
                )
                .norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn fidelity_is_linear_in_the_state() {
        let s = phi_plus(1, 2);
        let pure = s.to_density();
        let basis: Vec<JointLabel> = pure.basis().to_vec();
        let mixed = DensityOperator::maximally_mixed(&basis);
        for w in [0.0, 0.3, 0.5, 0.8, 1.0] {
            let blend = pure.mix(&mixed, w).unwrap();
            let f = blend.fidelity_with_pure(&s).unwrap();
            let f_pure = pure.fidelity_with_pure(&s).unwrap();
            let f_mixed = mixed.fidelity_with_pure(&s).unwrap();
            assert_abs_diff_eq!(f, w * f_pure + (1.0 - w) * f_mixed, epsilon = 1e-12);
        }
    }

    #[test]
    fn local_phase_on_long_bin_moves_to_the_ll_term() {
        // Phase plate on photon B's |L> bin acting on the time-bin Bell
        // state multiplies only the |LL> coefficient.
        let half = c(FRAC_1_SQRT_2);
        let s = TwoPhotonState::from_amplitudes([
            (
                (
                    ModeLabel::with_bin(CoreId(1), Polarization::H, TimeBin::Short),
                    ModeLabel::with_bin(CoreId(2), Polarization::H, TimeBin::Short),
                ),
                half,
            ),
            (
                (
                    ModeLabel::with_bin(CoreId(1), Polarization::H, TimeBin::Long),
                    ModeLabel::with_bin(CoreId(2), Polarization::H, TimeBin::Long),
                ),
                half,
            ),
        ])
        .unwrap();
        let phi = 1.234;
        let op = LocalOp::TimePhase { bin: TimeBin::Long, phase: phi };
        let out = s.apply_local_unitary(Photon::B, &op).unwrap();
        let ll = out.amplitude(&(
            ModeLabel::with_bin(CoreId(1), Polarization::H, TimeBin::Long),
            ModeLabel::with_bin(CoreId(2), Polarization::H, TimeBin::Long),
        ));
        let expect = half * Complex64::from_polar(1.0, phi);
        assert!((ll - expect).norm() < 1e-14);
        let ss = out.amplitude(&(
            ModeLabel::with_bin(CoreId(1), Polarization::H, TimeBin::Short),
            ModeLabel::with_bin(CoreId(2), Polarization::H, TimeBin::Short),
        ));
        assert!((ss - half).norm() < 1e-14);
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let s = phi_plus(1, 2);
        let out = s.apply_local_unitary(Photon::A, &LocalOp::identity()).unwrap();
        assert_eq!(s, out);
    }

    #[test]
    fn non_unitary_is_rejected() {
        let op = LocalOp::Polarization {
            matrix: Matrix2::new(c(0.5), c(0.0), c(0.0), c(0.5)),
            core: None,
        };
        let s = phi_plus(1, 2);
        assert!(matches!(
            s.apply_local_unitary(Photon::A, &op),
            Err(HilbertError::Unitarity { .. })
        ));
        // The same map passes through the lossy entry point.
        let lossy = s.apply_local(Photon::A, &op).unwrap();
        assert!(lossy.norm_sqr() < s.norm_sqr());
    }

    #[test]
    fn random_unitaries_preserve_norm() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            // Random SU(2)-like Jones matrix from two phases and an angle.
            let theta: f64 = rng.random_range(0.0..PI);
            let a: f64 = rng.random_range(0.0..2.0 * PI);
            let b: f64 = rng.random_range(0.0..2.0 * PI);
            let m = Matrix2::new(
                Complex64::from_polar(theta.cos(), a),
                Complex64::from_polar(theta.sin(), b),
                -Complex64::from_polar(theta.sin(), -b),
                Complex64::from_polar(theta.cos(), -a),
            );
            let op = LocalOp::Polarization { matrix: m, core: None };
            let re: f64 = rng.random_range(-1.0..1.0);
            let im: f64 = rng.random_range(-1.0..1.0);
            let s = TwoPhotonState::from_amplitudes([
                (
                    (label(1, Polarization::H), label(2, Polarization::H)),
                    Complex64::new(re, im),
                ),
                (
                    (label(1, Polarization::V), label(2, Polarization::V)),
                    Complex64::new(im, 0.3),
                ),
            ])
            .unwrap();
            let before = s.norm_sqr();
            let out = s.apply_local_unitary(Photon::A, &op).unwrap();
            assert!((out.norm_sqr() - before).abs() < 1e-12);
        }
    }

    #[test]
    fn complete_projector_set_resolves_norm() {
        let s = phi_plus(1, 2).scaled(c(0.8));
        let mut total = 0.0;
        for pa in [Polarization::H, Polarization::V] {
            for pb in [Polarization::H, Polarization::V] {
                let ket = TwoPhotonState::from_amplitudes([(
                    (label(1, pa), label(2, pb)),
                    c(1.0),
                )])
                .unwrap();
                total += s.probability(&Projector::onto_ket(&ket).unwrap()).unwrap();
            }
        }
        assert_abs_diff_eq!(total, s.norm_sqr(), epsilon = 1e-10);
    }

    #[test]
    fn pure_density_validates() {
        let rho = phi_plus(1, 2).to_density();
        rho.validate().unwrap();
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-14);
        let eig = rho.eigenvalues();
        assert_abs_diff_eq!(eig.last().copied().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dephasing_kills_coherence_keeps_populations() {
        let rho = phi_plus(1, 2).to_density();
        let full = rho.dephase(Dof::Pol, 1.0).unwrap();
        let hh = (label(1, Polarization::H), label(2, Polarization::H));
        let vv = (label(1, Polarization::V), label(2, Polarization::V));
        assert_abs_diff_eq!(full.population(&hh), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(full.element(&hh, &vv).norm(), 0.0, epsilon = 1e-14);
        let partial = rho.dephase(Dof::Pol, 0.25).unwrap();
        assert_abs_diff_eq!(partial.element(&hh, &vv).re, 0.375, epsilon = 1e-14);
        assert!(rho.dephase(Dof::Pol, 1.5).is_err());
    }
}
