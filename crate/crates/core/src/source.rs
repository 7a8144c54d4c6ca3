//! Photon-pair source: ideal hyper-entangled state plus configurable
//! imperfections.
//!
//! A continuous-wave-pumped down-conversion source emits pairs that are
//! simultaneously correlated in emission direction (opposing fiber cores),
//! emission time, and polarization. The emission time is continuous, so no
//! time-bin label exists at the source; what matters downstream is that the
//! two photons are born together and that the pump coherence exceeds the
//! interferometer imbalance. That guarantee is carried as a scalar time
//! coherence in [`HyperState`], consumed by the interferometer model, and
//! degraded by the `p_time` dephasing weight.
//!
//! Path and polarization imperfections act directly on the density operator
//! as per-degree-of-freedom coherence scaling; an optional white-noise
//! admixture is available for certification stress tests.

use num_complex::Complex64;
use rand_distr::{Distribution, Poisson};

use crate::channel::{FiberLayout, LayoutError};
use crate::counts::stream_rng;
use crate::hilbert::{
    DensityOperator, Dof, HilbertError, JointLabel, ModeLabel, Polarization, TwoPhotonState,
};

/// Per-degree-of-freedom dephasing weights in [0, 1]. A weight p scales the
/// coherences of that degree of freedom by 1 - p, which lands downstream as
/// a fringe visibility of 1 - p.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseWeights {
    pub p_path: f64,
    pub p_time: f64,
    pub p_pol: f64,
}

impl NoiseWeights {
    pub fn validate(&self) -> Result<(), HilbertError> {
        for (name, p) in [
            ("p_path", self.p_path),
            ("p_time", self.p_time),
            ("p_pol", self.p_pol),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(HilbertError::Range(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Source parameters. The default pair rate reproduces the experiment's
/// counting scales together with the default arm efficiencies: 125 kHz
/// singles per detector and about 300 Hz of central-bin coincidences.
#[derive(Debug, Clone)]
pub struct SourceConfig {
    /// Number of collected opposing core pairs (1 to 4).
    pub n_core_pairs: u8,
    /// Pairs per second emitted into the collected core pairs combined.
    pub pair_rate_hz: f64,
    /// Two-photon coherence time; sets the path-length matching scale.
    pub coherence_time_s: f64,
    /// Phase between the |HH> and |VV> terms; zero for the Phi+ state.
    pub pol_phase_rad: f64,
    /// Relative phase between amplitude k and k+1 of the collected core
    /// pairs. The default pi reproduces the minus sign the path analysis
    /// sees between neighbouring pairs.
    pub inter_pair_phase_rad: f64,
    pub noise: NoiseWeights,
    /// Weight of a maximally mixed admixture over the occupied space.
    pub white_noise: f64,
    /// Informational; the scale of all optical carrier frequencies.
    pub center_wavelength_m: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            n_core_pairs: 4,
            pair_rate_hz: 8.333_333_333e8,
            coherence_time_s: 1.5e-12,
            pol_phase_rad: 0.0,
            inter_pair_phase_rad: std::f64::consts::PI,
            noise: NoiseWeights::default(),
            white_noise: 0.0,
            center_wavelength_m: 1560.48e-9,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), HilbertError> {
        if !(1..=4).contains(&self.n_core_pairs) {
            return Err(HilbertError::Range(format!(
                "n_core_pairs = {} outside 1..=4",
                self.n_core_pairs
            )));
        }
        if self.pair_rate_hz <= 0.0 {
            return Err(HilbertError::Range("pair_rate_hz must be positive".into()));
        }
        if self.coherence_time_s <= 0.0 {
            return Err(HilbertError::Range(
                "coherence_time_s must be positive".into(),
            ));
        }
        self.noise.validate()?;
        if !(0.0..=1.0).contains(&self.white_noise) {
            return Err(HilbertError::Range(format!(
                "white_noise = {} outside [0, 1]",
                self.white_noise
            )));
        }
        Ok(())
    }

    /// Builds the emitted state: pure superposition with the configured
    /// phases, then dephasing and optional white-noise admixture.
    pub fn emit(&self, layout: &FiberLayout) -> Result<HyperState, SourceError> {
        self.validate()?;
        let pure = build_pure_state(
            layout,
            self.n_core_pairs,
            self.pol_phase_rad,
            self.inter_pair_phase_rad,
        )?;
        let dephased = apply_isotropic_noise(&pure, &self.noise)?;
        let rho = mix_white_noise(&dephased.rho, self.white_noise)?;
        Ok(HyperState {
            pure,
            rho,
            time_coherence: dephased.time_coherence,
        })
    }
}

/// Source output: the ideal pure state, the density operator after noise,
/// and the surviving scalar time coherence (1 at a perfect source).
#[derive(Debug, Clone)]
pub struct HyperState {
    pub pure: TwoPhotonState,
    pub rho: DensityOperator,
    pub time_coherence: f64,
}

/// Density operator plus unlabeled-time coherence, as returned by
/// [`apply_isotropic_noise`].
#[derive(Debug, Clone)]
pub struct DephasedState {
    pub rho: DensityOperator,
    pub time_coherence: f64,
}

/// Equal-amplitude superposition of the first `n` collected core pairs,
/// each carrying the |HH> + |VV> polarization Bell state. All terms share
/// the same sign; relative pair phases belong to the source configuration.
pub fn build_target_state(
    layout: &FiberLayout,
    n_core_pairs: u8,
) -> Result<TwoPhotonState, SourceError> {
    build_pure_state(layout, n_core_pairs, 0.0, 0.0)
}

/// Pure source state with configurable polarization and inter-pair phases.
pub fn build_pure_state(
    layout: &FiberLayout,
    n_core_pairs: u8,
    pol_phase_rad: f64,
    inter_pair_phase_rad: f64,
) -> Result<TwoPhotonState, SourceError> {
    if !(1..=4).contains(&n_core_pairs) {
        return Err(SourceError::Range(format!(
            "n_core_pairs = {n_core_pairs} outside 1..=4"
        )));
    }
    let pairs = layout.standard_pairs()?;
    let n = n_core_pairs as usize;
    let amp = 1.0 / ((2 * n) as f64).sqrt();
    let mut terms = Vec::with_capacity(2 * n);
    for (k, (core_a, core_b)) in pairs.iter().take(n).enumerate() {
        let pair_phase = Complex64::from_polar(1.0, k as f64 * inter_pair_phase_rad);
        for pol in [Polarization::H, Polarization::V] {
            let pol_phase = if pol == Polarization::V {
                Complex64::from_polar(1.0, pol_phase_rad)
            } else {
                Complex64::ONE
            };
            terms.push((
                (ModeLabel::new(*core_a, pol), ModeLabel::new(*core_b, pol)),
                Complex64::new(amp, 0.0) * pair_phase * pol_phase,
            ));
        }
    }
    Ok(TwoPhotonState::from_amplitudes(terms)?)
}

/// Scales each degree of freedom's coherences by 1 - p. Path and
/// polarization act on the labeled density operator; the time weight
/// returns as a scalar because pre-interferometer states carry no time
/// labels (labeled states are dephased directly instead).
pub fn apply_isotropic_noise(
    state: &TwoPhotonState,
    weights: &NoiseWeights,
) -> Result<DephasedState, SourceError> {
    weights.validate()?;
    let mut rho = state.to_density();
    rho = rho.dephase(Dof::Path, weights.p_path)?;
    rho = rho.dephase(Dof::Pol, weights.p_pol)?;
    let (ta, tb) = state.time_structure();
    let time_coherence = if ta || tb {
        rho = rho.dephase(Dof::Time, weights.p_time)?;
        1.0
    } else {
        1.0 - weights.p_time
    };
    Ok(DephasedState { rho, time_coherence })
}

/// Mixes in a maximally mixed state over the full product of the occupied
/// single-photon labels.
pub fn mix_white_noise(
    rho: &DensityOperator,
    weight: f64,
) -> Result<DensityOperator, SourceError> {
    if weight == 0.0 {
        return Ok(rho.clone());
    }
    let mut labels_a = Vec::new();
    let mut labels_b = Vec::new();
    for (a, b) in rho.basis() {
        if !labels_a.contains(a) {
            labels_a.push(*a);
        }
        if !labels_b.contains(b) {
            labels_b.push(*b);
        }
    }
    let mut product: Vec<JointLabel> = Vec::with_capacity(labels_a.len() * labels_b.len());
    for a in &labels_a {
        for b in &labels_b {
            product.push((*a, *b));
        }
    }
    product.sort();
    let mixed = DensityOperator::maximally_mixed(&product);
    Ok(rho.mix(&mixed, 1.0 - weight)?)
}

/// Number of pairs emitted over `duration_s`, Poisson distributed and
/// deterministic per seed.
pub fn emission_pair_stream(config: &SourceConfig, duration_s: f64, seed: u64) -> u64 {
    let lambda = config.pair_rate_hz * duration_s;
    if lambda <= 0.0 {
        return 0;
    }
    let mut rng = stream_rng(seed, 0, crate::counts::STREAM_EMISSION);
    let poisson = Poisson::new(lambda).expect("positive mean");
    poisson.sample(&mut rng) as u64
}

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("argument out of range: {0}")]
    Range(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}
