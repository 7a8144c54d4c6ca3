//! Measurement stations producing exact outcome distributions.
//!
//! Three stations mirror the experiment:
//!
//! * A pair of unbalanced Mach-Zehnder interferometers, one per photon.
//!   Each photon is split into short and long branches; joint detection
//!   sorts coincidences into a central time bin (short-short and long-long,
//!   temporally indistinguishable when the arm imbalances match within the
//!   two-photon coherence time) and two side bins. The central-bin
//!   amplitudes add coherently with a weight that carries both the source's
//!   time coherence and the imbalance-mismatch envelope, producing the
//!   nonlocal fringe in the phase sum.
//! * A polarization analyzer per photon: half-wave plate followed by a
//!   polarizing beamsplitter. Transmitted ports land on detectors D1 (Alice)
//!   and D3 (Bob); reflected ports on D2 and D4.
//! * A path station interfering two cores per photon on one beamsplitter
//!   each, with a piezo phase on one input, per-input length offsets and an
//!   optional polarizing pre-filter.
//!
//! The interferometers are handled by amplitude bookkeeping over the four
//! path combinations rather than by enlarging the source Hilbert space; a
//! beamsplitter reflection carries phase i (symmetric convention), so any
//! fixed port choice only shifts the fringe offset.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::Matrix2;
use num_complex::Complex64;
use thiserror::Error;

use crate::hilbert::{CoreId, DensityOperator, Polarization};

#[derive(Debug, Error)]
pub enum ApparatusError {
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("basis mismatch: {0}")]
    Basis(String),
}

/// Detector labels. D1/D2 sit on Alice's side, D3/D4 on Bob's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Detector {
    D1,
    D2,
    D3,
    D4,
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Detector::D1 => "D1",
            Detector::D2 => "D2",
            Detector::D3 => "D3",
            Detector::D4 => "D4",
        };
        f.write_str(s)
    }
}

/// The four coincidence pairings of one Alice detector with one Bob
/// detector. In the polarization wiring these read HH (D1/D3),
/// VV (D2/D4), HV (D1/D4) and VH (D2/D3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetPair {
    D1D3,
    D2D4,
    D1D4,
    D2D3,
}

impl DetPair {
    pub const ALL: [DetPair; 4] = [DetPair::D1D3, DetPair::D2D4, DetPair::D1D4, DetPair::D2D3];

    pub fn detectors(self) -> (Detector, Detector) {
        match self {
            DetPair::D1D3 => (Detector::D1, Detector::D3),
            DetPair::D2D4 => (Detector::D2, Detector::D4),
            DetPair::D1D4 => (Detector::D1, Detector::D4),
            DetPair::D2D3 => (Detector::D2, Detector::D3),
        }
    }

    pub fn from_outcomes(alice_reflected: bool, bob_reflected: bool) -> Self {
        match (alice_reflected, bob_reflected) {
            (false, false) => DetPair::D1D3,
            (true, true) => DetPair::D2D4,
            (false, true) => DetPair::D1D4,
            (true, false) => DetPair::D2D3,
        }
    }
}

impl fmt::Display for DetPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.detectors();
        write!(f, "{a}/{b}")
    }
}

/// Output ports of one unbalanced interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MziPort {
    /// Transmitted at both beamsplitters for the short branch.
    Through,
    Cross,
}

/// Joint port pairing of the two interferometers (Alice, Bob).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortPair(pub MziPort, pub MziPort);

impl fmt::Display for PortPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = |m: MziPort| match m {
            MziPort::Through => "T",
            MziPort::Cross => "X",
        };
        write!(f, "{}/{}", p(self.0), p(self.1))
    }
}

/// Relative-arrival-time class of a coincidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimeTag {
    /// Short-short and long-long, indistinguishable; post-selected.
    Central,
    /// Alice long, Bob short: Bob's photon arrives one imbalance early.
    EarlySide,
    /// Alice short, Bob long.
    LateSide,
    /// Station without time bins (path analysis).
    NotApplicable,
}

impl fmt::Display for TimeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TimeTag::Central => "central",
            TimeTag::EarlySide => "early-side",
            TimeTag::LateSide => "late-side",
            TimeTag::NotApplicable => "n/a",
        };
        f.write_str(s)
    }
}

/// Probabilities keyed by detector pair and time tag, plus per-detector
/// single-photon marginals. Probabilities are per emitted pair, before
/// efficiencies.
#[derive(Debug, Clone, Default)]
pub struct DetectorDistribution {
    pub coincidences: BTreeMap<(DetPair, TimeTag), f64>,
    pub singles: BTreeMap<Detector, f64>,
}

/// Port-level interferometer-pair distribution, polarization traced out.
#[derive(Debug, Clone, Default)]
pub struct PortDistribution {
    pub coincidences: BTreeMap<(PortPair, TimeTag), f64>,
    /// Single-photon port weights for Alice: [Through, Cross].
    pub singles_a: [f64; 2],
    pub singles_b: [f64; 2],
}

impl PortDistribution {
    pub fn total(&self) -> f64 {
        self.coincidences.values().sum()
    }
}

/// One unbalanced Mach-Zehnder interferometer.
#[derive(Debug, Clone, Copy)]
pub struct FransonInterferometer {
    /// Long-short propagation difference; 1.2 ns by default.
    pub delay_s: f64,
    /// Phase of the long arm relative to the short arm.
    pub phase_rad: f64,
    /// Power transmittance of both beamsplitters.
    pub bs_ratio: f64,
    /// Which output feeds the downstream polarization module.
    pub monitored_port: MziPort,
}

impl Default for FransonInterferometer {
    fn default() -> Self {
        Self {
            delay_s: 1.2e-9,
            phase_rad: 0.0,
            bs_ratio: 0.5,
            monitored_port: MziPort::Through,
        }
    }
}

impl FransonInterferometer {
    pub fn with_phase(phase_rad: f64) -> Self {
        Self { phase_rad, ..Self::default() }
    }

    pub fn validate(&self, tau_cc: f64) -> Result<(), ApparatusError> {
        if !(self.bs_ratio > 0.0 && self.bs_ratio < 1.0) {
            return Err(ApparatusError::Range(format!(
                "bs_ratio {} outside (0, 1)",
                self.bs_ratio
            )));
        }
        if self.delay_s <= 0.0 {
            return Err(ApparatusError::Range("delay must be positive".into()));
        }
        if self.delay_s <= tau_cc {
            return Err(ApparatusError::Range(format!(
                "arm imbalance {} s does not exceed the coherence time {} s; \
                 short and long bins would overlap",
                self.delay_s, tau_cc
            )));
        }
        Ok(())
    }

    /// Single-photon amplitudes into [port][bin], bins ordered short, long.
    /// Reflections carry phase i; the long branch carries the configured
    /// phase.
    pub fn port_amplitudes(&self) -> [[Complex64; 2]; 2] {
        let t = self.bs_ratio.sqrt();
        let r = (1.0 - self.bs_ratio).sqrt();
        let i = Complex64::new(0.0, 1.0);
        let phase = Complex64::from_polar(1.0, self.phase_rad);
        let through_s = Complex64::new(t * t, 0.0);
        let through_l = i * i * Complex64::new(r * r, 0.0) * phase;
        let cross_s = i * Complex64::new(t * r, 0.0);
        let cross_l = i * Complex64::new(r * t, 0.0) * phase;
        [[through_s, through_l], [cross_s, cross_l]]
    }
}

/// Half-wave plate plus polarizing beamsplitter.
#[derive(Debug, Clone, Copy)]
pub struct PolarizationAnalyzer {
    pub hwp_angle_rad: f64,
    /// Fraction of the wrong polarization leaking into each output.
    pub pbs_extinction: f64,
}

impl PolarizationAnalyzer {
    /// HV basis: wave plate at zero.
    pub fn hv() -> Self {
        Self { hwp_angle_rad: 0.0, pbs_extinction: 0.0 }
    }

    /// DA basis: wave plate rotated by 22.5 degrees.
    pub fn da() -> Self {
        Self { hwp_angle_rad: std::f64::consts::FRAC_PI_8, pbs_extinction: 0.0 }
    }

    pub fn validate(&self) -> Result<(), ApparatusError> {
        if !(0.0..1.0).contains(&self.pbs_extinction) {
            return Err(ApparatusError::Range(format!(
                "pbs_extinction {} outside [0, 1)",
                self.pbs_extinction
            )));
        }
        Ok(())
    }

    pub fn jones(&self) -> Matrix2<Complex64> {
        hwp_jones(self.hwp_angle_rad)
    }
}

/// Jones matrix of a half-wave plate with its fast axis at `angle`:
/// [[cos 2a, sin 2a], [sin 2a, -cos 2a]]. Unitary and Hermitian.
pub fn hwp_jones(angle: f64) -> Matrix2<Complex64> {
    let c = (2.0 * angle).cos();
    let s = (2.0 * angle).sin();
    Matrix2::new(
        Complex64::new(c, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(-c, 0.0),
    )
}

/// Gaussian two-photon coherence envelope for a relative delay mismatch.
pub fn coherence_overlap(delta_s: f64, tau_cc: f64) -> f64 {
    if tau_cc <= 0.0 {
        return if delta_s == 0.0 { 1.0 } else { 0.0 };
    }
    (-(delta_s * delta_s) / (2.0 * tau_cc * tau_cc)).exp()
}

/// Two-beamsplitter path station. Alice's beamsplitter interferes
/// `alice_inputs`, Bob's `bob_inputs`; outputs land on D1/D2 and D3/D4.
/// The piezo phase acts on Alice's second input. Input order for the
/// per-input offsets is [alice.0, alice.1, bob.0, bob.1].
#[derive(Debug, Clone)]
pub struct PathStation {
    pub alice_inputs: (CoreId, CoreId),
    pub bob_inputs: (CoreId, CoreId),
    pub piezo_phase_rad: f64,
    pub input_delays_s: [f64; 4],
    pub input_phases_rad: [f64; 4],
    pub bs_ratio: f64,
    /// Project both photons onto a common polarization before the
    /// beamsplitters; drifted light reduces the heralding only.
    pub pbs_prefilter: bool,
    /// Pre-filter axis measured from H.
    pub prefilter_angle_rad: f64,
}

impl PathStation {
    pub fn new(alice_inputs: (CoreId, CoreId), bob_inputs: (CoreId, CoreId)) -> Self {
        Self {
            alice_inputs,
            bob_inputs,
            piezo_phase_rad: 0.0,
            input_delays_s: [0.0; 4],
            input_phases_rad: [0.0; 4],
            bs_ratio: 0.5,
            pbs_prefilter: true,
            prefilter_angle_rad: 0.0,
        }
    }

    pub fn with_piezo(mut self, theta: f64) -> Self {
        self.piezo_phase_rad = theta;
        self
    }

    pub fn validate(&self) -> Result<(), ApparatusError> {
        if !(self.bs_ratio > 0.0 && self.bs_ratio < 1.0) {
            return Err(ApparatusError::Range(format!(
                "bs_ratio {} outside (0, 1)",
                self.bs_ratio
            )));
        }
        let cores = [
            self.alice_inputs.0,
            self.alice_inputs.1,
            self.bob_inputs.0,
            self.bob_inputs.1,
        ];
        for (i, a) in cores.iter().enumerate() {
            for b in cores.iter().skip(i + 1) {
                if a == b {
                    return Err(ApparatusError::Basis(format!(
                        "core {a} wired to two station inputs"
                    )));
                }
            }
        }
        Ok(())
    }

    fn delay_of(&self, core: CoreId) -> Option<f64> {
        let cores = [
            self.alice_inputs.0,
            self.alice_inputs.1,
            self.bob_inputs.0,
            self.bob_inputs.1,
        ];
        cores
            .iter()
            .position(|c| *c == core)
            .map(|i| self.input_delays_s[i])
    }

    /// Beamsplitter amplitudes v[output][input] for one photon, input
    /// phases included.
    fn bs_amplitudes(&self, bob: bool) -> [[Complex64; 2]; 2] {
        let t = Complex64::new(self.bs_ratio.sqrt(), 0.0);
        let r = Complex64::new(0.0, (1.0 - self.bs_ratio).sqrt());
        let (p0, p1) = if bob {
            (self.input_phases_rad[2], self.input_phases_rad[3])
        } else {
            (
                self.input_phases_rad[0],
                self.input_phases_rad[1] + self.piezo_phase_rad,
            )
        };
        let e0 = Complex64::from_polar(1.0, p0);
        let e1 = Complex64::from_polar(1.0, p1);
        [[t * e0, r * e1], [r * e0, t * e1]]
    }

    fn prefilter_amp(&self, pol: Polarization) -> Complex64 {
        if !self.pbs_prefilter {
            return Complex64::ONE;
        }
        let a = self.prefilter_angle_rad;
        let amp = match pol {
            Polarization::H => a.cos(),
            Polarization::V => a.sin(),
        };
        Complex64::new(amp, 0.0)
    }
}

/// Mixes a 2x2 joint outcome grid by per-photon extinction leakage.
fn mix_extinction(p: [[f64; 2]; 2], eps_a: f64, eps_b: f64) -> [[f64; 2]; 2] {
    let ma = [[1.0 - eps_a, eps_a], [eps_a, 1.0 - eps_a]];
    let mb = [[1.0 - eps_b, eps_b], [eps_b, 1.0 - eps_b]];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[i][j] += ma[i][k] * mb[j][l] * p[k][l];
                }
            }
        }
    }
    out
}

/// Port-level joint distribution of the interferometer pair for photons in
/// the given cores, polarization traced out. The central-bin coherence
/// weight is `time_coherence` times the arm-imbalance overlap; a mismatch
/// beyond the coherence time suppresses the fringe but is not an error.
pub fn franson_pair_distribution(
    rho: &DensityOperator,
    time_coherence: f64,
    tau_cc: f64,
    core_a: CoreId,
    core_b: CoreId,
    ia: &FransonInterferometer,
    ib: &FransonInterferometer,
) -> Result<PortDistribution, ApparatusError> {
    ia.validate(tau_cc)?;
    ib.validate(tau_cc)?;
    let gamma = time_coherence * coherence_overlap(ia.delay_s - ib.delay_s, tau_cc);
    let ua = ia.port_amplitudes();
    let ub = ib.port_amplitudes();
    let mut dist = PortDistribution::default();
    let basis = rho.basis();
    for (i, row) in basis.iter().enumerate() {
        for (j, col) in basis.iter().enumerate() {
            let e = rho.matrix()[(i, j)];
            if e == Complex64::ZERO {
                continue;
            }
            let (ra, rb) = row;
            let (ca, cb) = col;
            if ra.timebin.is_some() || rb.timebin.is_some() {
                return Err(ApparatusError::Basis(
                    "interferometer input already carries time bins".into(),
                ));
            }
            // Polarization is not resolved here: diagonal terms only.
            let b_diagonal = rb == cb;
            let a_diagonal = ra == ca;
            // Singles: trace the partner entirely.
            if a_diagonal && b_diagonal && ra.core == core_a {
                for (pi, port) in ua.iter().enumerate() {
                    let w: f64 = port.iter().map(|u| u.norm_sqr()).sum();
                    dist.singles_a[pi] += (e * w).re;
                }
            }
            if a_diagonal && b_diagonal && rb.core == core_b {
                for (pi, port) in ub.iter().enumerate() {
                    let w: f64 = port.iter().map(|u| u.norm_sqr()).sum();
                    dist.singles_b[pi] += (e * w).re;
                }
            }
            if !(a_diagonal && b_diagonal) {
                continue;
            }
            if ra.core != core_a || rb.core != core_b {
                continue;
            }
            for (pa_idx, port_a) in [MziPort::Through, MziPort::Cross].iter().enumerate() {
                for (pb_idx, port_b) in [MziPort::Through, MziPort::Cross].iter().enumerate() {
                    let q_ss = ua[pa_idx][0] * ub[pb_idx][0];
                    let q_ll = ua[pa_idx][1] * ub[pb_idx][1];
                    let q_sl = ua[pa_idx][0] * ub[pb_idx][1];
                    let q_ls = ua[pa_idx][1] * ub[pb_idx][0];
                    let central = q_ss.norm_sqr()
                        + q_ll.norm_sqr()
                        + 2.0 * gamma * (q_ss * q_ll.conj()).re;
                    let key = PortPair(*port_a, *port_b);
                    *dist
                        .coincidences
                        .entry((key, TimeTag::Central))
                        .or_insert(0.0) += (e * central).re;
                    *dist
                        .coincidences
                        .entry((key, TimeTag::LateSide))
                        .or_insert(0.0) += (e * q_sl.norm_sqr()).re;
                    *dist
                        .coincidences
                        .entry((key, TimeTag::EarlySide))
                        .or_insert(0.0) += (e * q_ls.norm_sqr()).re;
                }
            }
        }
    }
    Ok(dist)
}

/// Coincidence probabilities of the four polarization-analyzer pairings,
/// ordered (HH, HV, VH, VV), for whatever cores and time content the state
/// carries (those degrees of freedom are traced out).
pub fn polarization_coincidence_probs(
    rho: &DensityOperator,
    pa: &PolarizationAnalyzer,
    pb: &PolarizationAnalyzer,
) -> Result<[f64; 4], ApparatusError> {
    pa.validate()?;
    pb.validate()?;
    let ja = pa.jones();
    let jb = pb.jones();
    let basis = rho.basis();
    let mut grid = [[0.0f64; 2]; 2];
    for (i, row) in basis.iter().enumerate() {
        for (j, col) in basis.iter().enumerate() {
            let e = rho.matrix()[(i, j)];
            if e == Complex64::ZERO {
                continue;
            }
            let (ra, rb) = row;
            let (ca, cb) = col;
            // Core and time bins are not touched by the analyzer: diagonal.
            if ra.core != ca.core || rb.core != cb.core {
                continue;
            }
            if ra.timebin != ca.timebin || rb.timebin != cb.timebin {
                continue;
            }
            for out_a in 0..2 {
                let fa = ja[(out_a, ra.pol.index())] * ja[(out_a, ca.pol.index())].conj();
                for out_b in 0..2 {
                    let fb = jb[(out_b, rb.pol.index())] * jb[(out_b, cb.pol.index())].conj();
                    grid[out_a][out_b] += (e * fa * fb).re;
                }
            }
        }
    }
    let grid = mix_extinction(grid, pa.pbs_extinction, pb.pbs_extinction);
    // (HH, HV, VH, VV)
    Ok([grid[0][0], grid[0][1], grid[1][0], grid[1][1]])
}

/// Full energy-time station: interferometer pair on the monitored ports,
/// then a polarization analyzer per photon. Detector pairs carry the
/// per-time-tag coincidence probabilities; singles marginals ignore the
/// partner photon's fate.
#[allow(clippy::too_many_arguments)]
pub fn energy_time_distribution(
    rho: &DensityOperator,
    time_coherence: f64,
    tau_cc: f64,
    core_a: CoreId,
    core_b: CoreId,
    ia: &FransonInterferometer,
    ib: &FransonInterferometer,
    pa: &PolarizationAnalyzer,
    pb: &PolarizationAnalyzer,
) -> Result<DetectorDistribution, ApparatusError> {
    ia.validate(tau_cc)?;
    ib.validate(tau_cc)?;
    pa.validate()?;
    pb.validate()?;
    let gamma = time_coherence * coherence_overlap(ia.delay_s - ib.delay_s, tau_cc);
    let ua = ia.port_amplitudes();
    let ub = ib.port_amplitudes();
    let ma = match ia.monitored_port {
        MziPort::Through => ua[0],
        MziPort::Cross => ua[1],
    };
    let mb = match ib.monitored_port {
        MziPort::Through => ub[0],
        MziPort::Cross => ub[1],
    };
    let ja = pa.jones();
    let jb = pb.jones();

    // Time-branch factors shared by every matrix entry.
    let q_ss = ma[0] * mb[0];
    let q_ll = ma[1] * mb[1];
    let t_central = q_ss.norm_sqr() + q_ll.norm_sqr() + 2.0 * gamma * (q_ss * q_ll.conj()).re;
    let t_late = (ma[0] * mb[1]).norm_sqr();
    let t_early = (ma[1] * mb[0]).norm_sqr();
    let port_weight_a: f64 = ma.iter().map(|u| u.norm_sqr()).sum();
    let port_weight_b: f64 = mb.iter().map(|u| u.norm_sqr()).sum();

    let basis = rho.basis();
    let mut joint = [[[0.0f64; 2]; 2]; 3]; // [tag][out_a][out_b]
    let mut singles_a = [0.0f64; 2];
    let mut singles_b = [0.0f64; 2];
    for (i, row) in basis.iter().enumerate() {
        for (j, col) in basis.iter().enumerate() {
            let e = rho.matrix()[(i, j)];
            if e == Complex64::ZERO {
                continue;
            }
            let (ra, rb) = row;
            let (ca, cb) = col;
            if ra.timebin.is_some() || rb.timebin.is_some() {
                return Err(ApparatusError::Basis(
                    "interferometer input already carries time bins".into(),
                ));
            }
            // Singles: partner traced out entirely.
            if rb == cb && ra.core == ca.core && ra.core == core_a {
                for out in 0..2 {
                    let fa = ja[(out, ra.pol.index())] * ja[(out, ca.pol.index())].conj();
                    singles_a[out] += (e * fa).re * port_weight_a;
                }
            }
            if ra == ca && rb.core == cb.core && rb.core == core_b {
                for out in 0..2 {
                    let fb = jb[(out, rb.pol.index())] * jb[(out, cb.pol.index())].conj();
                    singles_b[out] += (e * fb).re * port_weight_b;
                }
            }
            if ra.core != core_a || ca.core != core_a || rb.core != core_b || cb.core != core_b {
                continue;
            }
            for out_a in 0..2 {
                let fa = ja[(out_a, ra.pol.index())] * ja[(out_a, ca.pol.index())].conj();
                for out_b in 0..2 {
                    let fb = jb[(out_b, rb.pol.index())] * jb[(out_b, cb.pol.index())].conj();
                    let w = (e * fa * fb).re;
                    joint[0][out_a][out_b] += w * t_central;
                    joint[1][out_a][out_b] += w * t_early;
                    joint[2][out_a][out_b] += w * t_late;
                }
            }
        }
    }

    let mut dist = DetectorDistribution::default();
    for (tag_idx, tag) in [TimeTag::Central, TimeTag::EarlySide, TimeTag::LateSide]
        .iter()
        .enumerate()
    {
        let mixed = mix_extinction(joint[tag_idx], pa.pbs_extinction, pb.pbs_extinction);
        for out_a in 0..2 {
            for out_b in 0..2 {
                let pair = DetPair::from_outcomes(out_a == 1, out_b == 1);
                *dist.coincidences.entry((pair, *tag)).or_insert(0.0) +=
                    mixed[out_a][out_b];
            }
        }
    }
    let ea = pa.pbs_extinction;
    let eb = pb.pbs_extinction;
    dist.singles.insert(
        Detector::D1,
        (1.0 - ea) * singles_a[0] + ea * singles_a[1],
    );
    dist.singles.insert(
        Detector::D2,
        (1.0 - ea) * singles_a[1] + ea * singles_a[0],
    );
    dist.singles.insert(
        Detector::D3,
        (1.0 - eb) * singles_b[0] + eb * singles_b[1],
    );
    dist.singles.insert(
        Detector::D4,
        (1.0 - eb) * singles_b[1] + eb * singles_b[0],
    );
    Ok(dist)
}

/// Path station distribution. Photon A must occupy one of Alice's input
/// cores and photon B one of Bob's; coherences between input combinations
/// are weighted by the Gaussian overlap of their differential delays
/// against `tau_cc`, so offsets beyond the coherence time flatten the
/// fringe without raising an error.
pub fn path_station_distribution(
    rho: &DensityOperator,
    station: &PathStation,
    tau_cc: f64,
) -> Result<DetectorDistribution, ApparatusError> {
    station.validate()?;
    let va = station.bs_amplitudes(false);
    let vb = station.bs_amplitudes(true);
    let a_index = |core: CoreId| -> Option<usize> {
        if core == station.alice_inputs.0 {
            Some(0)
        } else if core == station.alice_inputs.1 {
            Some(1)
        } else {
            None
        }
    };
    let b_index = |core: CoreId| -> Option<usize> {
        if core == station.bob_inputs.0 {
            Some(0)
        } else if core == station.bob_inputs.1 {
            Some(1)
        } else {
            None
        }
    };
    let basis = rho.basis();
    let mut dist = DetectorDistribution::default();
    for det in [Detector::D1, Detector::D2, Detector::D3, Detector::D4] {
        dist.singles.insert(det, 0.0);
    }
    for pair in DetPair::ALL {
        dist.coincidences.insert((pair, TimeTag::NotApplicable), 0.0);
    }
    for (i, row) in basis.iter().enumerate() {
        for (j, col) in basis.iter().enumerate() {
            let e = rho.matrix()[(i, j)];
            if e == Complex64::ZERO {
                continue;
            }
            let (ra, rb) = row;
            let (ca, cb) = col;
            // Alice singles: any partner, diagonal in the partner label.
            if rb == cb {
                if let (Some(ar), Some(ac)) = (a_index(ra.core), a_index(ca.core)) {
                    let env = coherence_overlap(
                        station.input_delays_s[ar] - station.input_delays_s[ac],
                        tau_cc,
                    );
                    let pf = station.prefilter_amp(ra.pol)
                        * station.prefilter_amp(ca.pol).conj();
                    let pol_ok = station.pbs_prefilter || ra.pol == ca.pol;
                    if pol_ok {
                        for (out, det) in [(0, Detector::D1), (1, Detector::D2)] {
                            let w = va[out][ar] * va[out][ac].conj();
                            *dist.singles.get_mut(&det).unwrap() +=
                                (e * pf * w).re * env;
                        }
                    }
                }
            }
            if ra == ca {
                if let (Some(br), Some(bc)) = (b_index(rb.core), b_index(cb.core)) {
                    let env = coherence_overlap(
                        station.input_delays_s[2 + br] - station.input_delays_s[2 + bc],
                        tau_cc,
                    );
                    let pf = station.prefilter_amp(rb.pol)
                        * station.prefilter_amp(cb.pol).conj();
                    let pol_ok = station.pbs_prefilter || rb.pol == cb.pol;
                    if pol_ok {
                        for (out, det) in [(0, Detector::D3), (1, Detector::D4)] {
                            let w = vb[out][br] * vb[out][bc].conj();
                            *dist.singles.get_mut(&det).unwrap() +=
                                (e * pf * w).re * env;
                        }
                    }
                }
            }
            // Coincidences: both photons inside the station.
            let (Some(ar), Some(ac)) = (a_index(ra.core), a_index(ca.core)) else {
                continue;
            };
            let (Some(br), Some(bc)) = (b_index(rb.core), b_index(cb.core)) else {
                continue;
            };
            let pol_ok = if station.pbs_prefilter {
                true
            } else {
                ra.pol == ca.pol && rb.pol == cb.pol
            };
            if !pol_ok {
                continue;
            }
            let pf = station.prefilter_amp(ra.pol)
                * station.prefilter_amp(ca.pol).conj()
                * station.prefilter_amp(rb.pol)
                * station.prefilter_amp(cb.pol).conj();
            let d_row = station.input_delays_s[ar] - station.input_delays_s[2 + br];
            let d_col = station.input_delays_s[ac] - station.input_delays_s[2 + bc];
            let env = coherence_overlap(d_row - d_col, tau_cc);
            for (out_a, det_a) in [(0usize, false), (1usize, true)] {
                let wa = va[out_a][ar] * va[out_a][ac].conj();
                for (out_b, det_b) in [(0usize, false), (1usize, true)] {
                    let wb = vb[out_b][br] * vb[out_b][bc].conj();
                    let pair = DetPair::from_outcomes(det_a, det_b);
                    *dist
                        .coincidences
                        .get_mut(&(pair, TimeTag::NotApplicable))
                        .unwrap() += (e * pf * wa * wb).re * env;
                }
            }
        }
    }
    Ok(dist)
}
