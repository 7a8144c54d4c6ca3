//! Detection statistics: efficiencies, dark counts, coincidence windowing,
//! Poisson sampling, accidental estimation and subtraction.
//!
//! Sampling draws from counter-mode streams keyed by (seed, scan index,
//! channel), so scan points can be evaluated in any order or in parallel
//! and still reproduce byte-identical records.
//!
//! Accidentals are handled the way an experiment handles them: a uniform
//! background coincidence rate s1*s2*tau is injected into the raw counts
//! from the true singles rates, while the estimate that gets subtracted is
//! recomputed from the *sampled* singles — the subtraction procedure is
//! exercised, not short-circuited.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::apparatus::{DetPair, Detector, DetectorDistribution, TimeTag};

/// Channel id for the source emission stream.
pub const STREAM_EMISSION: u64 = 0xE0;

#[derive(Debug, Error)]
pub enum CountsError {
    #[error("argument out of range: {0}")]
    Range(String),
}

/// A single detector: quantum efficiency and dark-count rate.
#[derive(Debug, Clone, Copy)]
pub struct DetectorSpec {
    pub label: Detector,
    pub efficiency: f64,
    pub dark_rate_hz: f64,
}

impl DetectorSpec {
    pub fn new(label: Detector, efficiency: f64, dark_rate_hz: f64) -> Self {
        Self { label, efficiency, dark_rate_hz }
    }

    pub fn validate(&self) -> Result<(), CountsError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(CountsError::Range(format!(
                "efficiency {} outside [0, 1]",
                self.efficiency
            )));
        }
        if self.dark_rate_hz < 0.0 {
            return Err(CountsError::Range("negative dark rate".into()));
        }
        Ok(())
    }
}

/// Default detector bank: 80% efficiency, 100 Hz dark counts.
pub fn default_detectors() -> [DetectorSpec; 4] {
    [Detector::D1, Detector::D2, Detector::D3, Detector::D4]
        .map(|d| DetectorSpec::new(d, 0.80, 100.0))
}

/// Coincidence bookkeeping parameters.
#[derive(Debug, Clone, Copy)]
pub struct CoincidenceConfig {
    /// Coincidence window; the default 320 ps reproduces 5 Hz of
    /// accidentals at 125 kHz singles.
    pub window_s: f64,
    pub integration_time_s: f64,
    pub subtract_accidentals: bool,
    /// Inject the uniform accidental background into the sampled raw
    /// coincidences (on by default so subtraction does real work).
    pub inject_accidentals: bool,
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        Self {
            window_s: 320e-12,
            integration_time_s: 30.0,
            subtract_accidentals: true,
            inject_accidentals: true,
        }
    }
}

impl CoincidenceConfig {
    pub fn validate(&self) -> Result<(), CountsError> {
        if self.window_s <= 0.0 {
            return Err(CountsError::Range("window_s must be positive".into()));
        }
        if self.integration_time_s <= 0.0 {
            return Err(CountsError::Range(
                "integration_time_s must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Expected singles and coincidence rates before sampling.
#[derive(Debug, Clone, Default)]
pub struct RatePrediction {
    pub singles_hz: BTreeMap<Detector, f64>,
    pub pairs_hz: BTreeMap<(DetPair, TimeTag), f64>,
}

/// Folds source rate, per-arm coupling, detector efficiency and dark counts
/// into expected rates:
/// singles = rate * coupling * efficiency * marginal + dark,
/// coincidences = rate * (coupling_a eff_a) * (coupling_b eff_b) * P.
pub fn expected_rates(
    dist: &DetectorDistribution,
    pair_rate_hz: f64,
    coupling_a: f64,
    coupling_b: f64,
    detectors: &[DetectorSpec; 4],
) -> Result<RatePrediction, CountsError> {
    for spec in detectors {
        spec.validate()?;
    }
    for (name, c) in [("coupling_a", coupling_a), ("coupling_b", coupling_b)] {
        if !(0.0..=1.0).contains(&c) {
            return Err(CountsError::Range(format!("{name} = {c} outside [0, 1]")));
        }
    }
    if pair_rate_hz < 0.0 {
        return Err(CountsError::Range("negative pair rate".into()));
    }
    let spec_of = |d: Detector| detectors.iter().find(|s| s.label == d).copied();
    let mut singles_hz = BTreeMap::new();
    for (&det, &marginal) in &dist.singles {
        let spec = spec_of(det).ok_or_else(|| {
            CountsError::Range(format!("no detector spec for {det}"))
        })?;
        let coupling = match det {
            Detector::D1 | Detector::D2 => coupling_a,
            Detector::D3 | Detector::D4 => coupling_b,
        };
        singles_hz.insert(
            det,
            pair_rate_hz * coupling * spec.efficiency * marginal + spec.dark_rate_hz,
        );
    }
    let mut pairs_hz = BTreeMap::new();
    for (&(pair, tag), &p) in &dist.coincidences {
        let (da, db) = pair.detectors();
        let ea = spec_of(da)
            .ok_or_else(|| CountsError::Range(format!("no detector spec for {da}")))?
            .efficiency;
        let eb = spec_of(db)
            .ok_or_else(|| CountsError::Range(format!("no detector spec for {db}")))?
            .efficiency;
        pairs_hz.insert(
            (pair, tag),
            pair_rate_hz * coupling_a * ea * coupling_b * eb * p,
        );
    }
    Ok(RatePrediction { singles_hz, pairs_hz })
}

/// Uncorrelated-coincidence rate within a window: s1 * s2 * tau.
pub fn accidental_rate(s1_hz: f64, s2_hz: f64, window_s: f64) -> f64 {
    s1_hz * s2_hz * window_s
}

/// Counts for one coincidence channel of one scan point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCounts {
    pub raw: f64,
    /// Accidental estimate from the (sampled) singles, in counts.
    pub accidental: f64,
    /// raw - accidental, clamped at zero when subtraction is enabled.
    pub net: f64,
    /// Sigma of `net`: sqrt(raw + accidental) after subtraction,
    /// sqrt(raw) otherwise.
    pub sigma: f64,
    pub clamped: bool,
}

/// One scan point's detection record.
#[derive(Debug, Clone, Default)]
pub struct CountRecord {
    pub singles: BTreeMap<Detector, f64>,
    pub pairs: BTreeMap<(DetPair, TimeTag), PairCounts>,
}

/// Deterministic stream generator keyed by (seed, scan index, channel).
pub fn stream_rng(seed: u64, scan_index: u64, channel: u64) -> ChaCha8Rng {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let a = splitmix(seed);
    let b = splitmix(a ^ scan_index.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    let c = splitmix(b ^ channel.wrapping_mul(0xA5A3_564E_2C4F_01F1));
    let d = splitmix(c ^ 0x5BF0_3635_DE2D_4C4F);
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&c.to_le_bytes());
    key[24..32].copy_from_slice(&d.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn detector_channel(d: Detector) -> u64 {
    match d {
        Detector::D1 => 1,
        Detector::D2 => 2,
        Detector::D3 => 3,
        Detector::D4 => 4,
    }
}

fn pair_channel(pair: DetPair, tag: TimeTag) -> u64 {
    let p = match pair {
        DetPair::D1D3 => 0,
        DetPair::D2D4 => 1,
        DetPair::D1D4 => 2,
        DetPair::D2D3 => 3,
    };
    let t = match tag {
        TimeTag::Central => 0,
        TimeTag::EarlySide => 1,
        TimeTag::LateSide => 2,
        TimeTag::NotApplicable => 3,
    };
    16 + p * 4 + t
}

fn poisson_draw(lambda: f64, rng: &mut ChaCha8Rng) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let dist = Poisson::new(lambda).expect("positive mean");
    dist.sample(rng)
}

/// Draws one Poissonian count record. Accidental background is injected at
/// the true singles rates; the recorded estimate comes from the sampled
/// singles, mirroring how it would be measured.
pub fn sample_counts(
    rates: &RatePrediction,
    cfg: &CoincidenceConfig,
    seed: u64,
    scan_index: u64,
) -> Result<CountRecord, CountsError> {
    cfg.validate()?;
    let t = cfg.integration_time_s;
    let mut record = CountRecord::default();
    for (&det, &rate) in &rates.singles_hz {
        let mut rng = stream_rng(seed, scan_index, detector_channel(det));
        record.singles.insert(det, poisson_draw(rate * t, &mut rng));
    }
    for (&(pair, tag), &rate) in &rates.pairs_hz {
        let (da, db) = pair.detectors();
        let injected = if cfg.inject_accidentals {
            let sa = rates.singles_hz.get(&da).copied().unwrap_or(0.0);
            let sb = rates.singles_hz.get(&db).copied().unwrap_or(0.0);
            accidental_rate(sa, sb, cfg.window_s)
        } else {
            0.0
        };
        let mut rng = stream_rng(seed, scan_index, pair_channel(pair, tag));
        let raw = poisson_draw((rate + injected) * t, &mut rng);
        let est = {
            let na = record.singles.get(&da).copied().unwrap_or(0.0);
            let nb = record.singles.get(&db).copied().unwrap_or(0.0);
            if cfg.inject_accidentals {
                na * nb * cfg.window_s / t
            } else {
                0.0
            }
        };
        record.pairs.insert((pair, tag), finish_pair(raw, est, cfg));
    }
    Ok(record)
}

/// Noise-free record: counts equal rate times integration time exactly,
/// with the Poissonian sigma they would carry.
pub fn analytic_counts(
    rates: &RatePrediction,
    cfg: &CoincidenceConfig,
) -> Result<CountRecord, CountsError> {
    cfg.validate()?;
    let t = cfg.integration_time_s;
    let mut record = CountRecord::default();
    for (&det, &rate) in &rates.singles_hz {
        record.singles.insert(det, rate * t);
    }
    for (&(pair, tag), &rate) in &rates.pairs_hz {
        let (da, db) = pair.detectors();
        let injected = if cfg.inject_accidentals {
            let sa = rates.singles_hz.get(&da).copied().unwrap_or(0.0);
            let sb = rates.singles_hz.get(&db).copied().unwrap_or(0.0);
            accidental_rate(sa, sb, cfg.window_s)
        } else {
            0.0
        };
        let raw = (rate + injected) * t;
        let est = injected * t;
        record.pairs.insert((pair, tag), finish_pair(raw, est, cfg));
    }
    Ok(record)
}

fn finish_pair(raw: f64, accidental: f64, cfg: &CoincidenceConfig) -> PairCounts {
    if cfg.subtract_accidentals {
        let net = raw - accidental;
        PairCounts {
            raw,
            accidental,
            net: net.max(0.0),
            sigma: (raw + accidental).sqrt(),
            clamped: net < 0.0,
        }
    } else {
        PairCounts {
            raw,
            accidental,
            net: raw,
            sigma: raw.sqrt(),
            clamped: false,
        }
    }
}

/// Re-applies accidental subtraction to a record (clamping at zero and
/// widening sigma to sqrt(raw + accidental)).
pub fn subtract_accidentals(record: &CountRecord) -> CountRecord {
    let cfg = CoincidenceConfig {
        subtract_accidentals: true,
        ..CoincidenceConfig::default()
    };
    let mut out = record.clone();
    for (_, pc) in out.pairs.iter_mut() {
        *pc = finish_pair(pc.raw, pc.accidental, &cfg);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat_distribution(p: f64, marginal: f64) -> DetectorDistribution {
        let mut dist = DetectorDistribution::default();
        for pair in DetPair::ALL {
            dist.coincidences.insert((pair, TimeTag::Central), p);
        }
        for det in [Detector::D1, Detector::D2, Detector::D3, Detector::D4] {
            dist.singles.insert(det, marginal);
        }
        dist
    }

    #[test]
    fn accidental_rate_matches_quoted_scales() {
        // 125 kHz singles with a 320 ps window give 5.0 Hz; doubling the
        // window gives the 10 Hz quoted for the path measurement.
        assert_abs_diff_eq!(accidental_rate(125e3, 125e3, 320e-12), 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(accidental_rate(125e3, 125e3, 640e-12), 10.0, epsilon = 1e-9);
        assert_eq!(accidental_rate(125e3, 125e3, 0.0), 0.0);
    }

    #[test]
    fn accidental_rate_is_bilinear() {
        let base = accidental_rate(1e5, 2e5, 1e-9);
        assert_abs_diff_eq!(accidental_rate(2e5, 2e5, 1e-9), 2.0 * base, epsilon = 1e-12);
        assert_abs_diff_eq!(accidental_rate(1e5, 4e5, 1e-9), 2.0 * base, epsilon = 1e-12);
    }

    #[test]
    fn expected_rates_compose_efficiencies() {
        // P = 0.25 at unit couplings and efficiencies, no dark counts,
        // 1200 pairs/s: every pair channel sees 300 Hz.
        let dist = flat_distribution(0.25, 0.5);
        let detectors = [Detector::D1, Detector::D2, Detector::D3, Detector::D4]
            .map(|d| DetectorSpec::new(d, 1.0, 0.0));
        let rates = expected_rates(&dist, 1200.0, 1.0, 1.0, &detectors).unwrap();
        for pair in DetPair::ALL {
            assert_abs_diff_eq!(
                rates.pairs_hz[&(pair, TimeTag::Central)],
                300.0,
                epsilon = 1e-9
            );
        }
        assert_abs_diff_eq!(rates.singles_hz[&Detector::D1], 600.0, epsilon = 1e-9);
    }

    #[test]
    fn dead_arm_leaves_only_dark_counts() {
        let dist = flat_distribution(0.25, 0.5);
        let detectors = [Detector::D1, Detector::D2, Detector::D3, Detector::D4]
            .map(|d| DetectorSpec::new(d, 0.8, 100.0));
        let rates = expected_rates(&dist, 1200.0, 0.0, 0.0, &detectors).unwrap();
        for det in [Detector::D1, Detector::D2, Detector::D3, Detector::D4] {
            assert_abs_diff_eq!(rates.singles_hz[&det], 100.0, epsilon = 1e-12);
        }
        for (_, r) in &rates.pairs_hz {
            assert_eq!(*r, 0.0);
        }
    }

    #[test]
    fn efficiency_out_of_range_is_rejected() {
        let dist = flat_distribution(0.25, 0.5);
        let detectors = [Detector::D1, Detector::D2, Detector::D3, Detector::D4]
            .map(|d| DetectorSpec::new(d, 1.2, 0.0));
        assert!(matches!(
            expected_rates(&dist, 1200.0, 1.0, 1.0, &detectors),
            Err(CountsError::Range(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let dist = flat_distribution(0.1, 0.3);
        let detectors = default_detectors();
        let rates = expected_rates(&dist, 3000.0, 0.5, 0.5, &detectors).unwrap();
        let cfg = CoincidenceConfig::default();
        let a = sample_counts(&rates, &cfg, 99, 3).unwrap();
        let b = sample_counts(&rates, &cfg, 99, 3).unwrap();
        assert_eq!(a.singles, b.singles);
        assert_eq!(a.pairs, b.pairs);
        let c = sample_counts(&rates, &cfg, 100, 3).unwrap();
        assert_ne!(a.singles, c.singles);
    }

    #[test]
    fn zero_rate_samples_zero() {
        let mut rates = RatePrediction::default();
        rates.singles_hz.insert(Detector::D1, 0.0);
        rates.pairs_hz.insert((DetPair::D1D3, TimeTag::Central), 0.0);
        let cfg = CoincidenceConfig {
            inject_accidentals: false,
            ..CoincidenceConfig::default()
        };
        let rec = sample_counts(&rates, &cfg, 1, 0).unwrap();
        assert_eq!(rec.singles[&Detector::D1], 0.0);
        assert_eq!(rec.pairs[&(DetPair::D1D3, TimeTag::Central)].raw, 0.0);
    }

    #[test]
    fn poisson_band_300hz_30s() {
        let mut rates = RatePrediction::default();
        rates.singles_hz.insert(Detector::D1, 0.0);
        rates.singles_hz.insert(Detector::D3, 0.0);
        rates.pairs_hz.insert((DetPair::D1D3, TimeTag::Central), 300.0);
        let cfg = CoincidenceConfig {
            inject_accidentals: false,
            subtract_accidentals: false,
            ..CoincidenceConfig::default()
        };
        let mut inside = 0;
        let runs = 400;
        for seed in 0..runs {
            let rec = sample_counts(&rates, &cfg, seed, 0).unwrap();
            let n = rec.pairs[&(DetPair::D1D3, TimeTag::Central)].raw;
            if (n - 9000.0).abs() <= 3.0 * 9000f64.sqrt() {
                inside += 1;
            }
        }
        // 3 sigma covers 99.7%; demand at least 98% to keep flake away.
        assert!(inside as f64 >= 0.98 * runs as f64, "{inside}/{runs} in band");
    }

    #[test]
    fn monte_carlo_mean_converges() {
        let mut rates = RatePrediction::default();
        rates.singles_hz.insert(Detector::D1, 0.0);
        rates.singles_hz.insert(Detector::D3, 0.0);
        rates.pairs_hz.insert((DetPair::D1D3, TimeTag::Central), 40.0);
        let cfg = CoincidenceConfig {
            inject_accidentals: false,
            subtract_accidentals: false,
            integration_time_s: 5.0,
            ..CoincidenceConfig::default()
        };
        let runs = 500;
        let sum: f64 = (0..runs)
            .map(|seed| {
                sample_counts(&rates, &cfg, seed, 0).unwrap().pairs
                    [&(DetPair::D1D3, TimeTag::Central)]
                    .raw
            })
            .sum();
        let mean = sum / runs as f64;
        let expect: f64 = 200.0;
        let band = 4.0 * expect.sqrt() / (runs as f64).sqrt();
        assert!((mean - expect).abs() < band, "mean {mean} vs {expect}");
    }

    #[test]
    fn subtraction_properties() {
        let cfg = CoincidenceConfig::default();
        let pc = finish_pair(9000.0, 150.0, &cfg);
        assert_abs_diff_eq!(pc.net, 8850.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pc.sigma, 9150f64.sqrt(), epsilon = 1e-12);
        assert!((pc.sigma - 95.66).abs() < 0.01);
        assert!(!pc.clamped);

        let none = finish_pair(500.0, 0.0, &cfg);
        assert_eq!(none.net, none.raw);

        let floor = finish_pair(3.0, 10.0, &cfg);
        assert_eq!(floor.net, 0.0);
        assert!(floor.clamped);
    }

    #[test]
    fn injected_background_is_estimated_back_out() {
        // High singles, zero true coincidences: the net counts after
        // subtraction must straddle zero within a few sigma.
        let mut rates = RatePrediction::default();
        rates.singles_hz.insert(Detector::D1, 125e3);
        rates.singles_hz.insert(Detector::D3, 125e3);
        rates.pairs_hz.insert((DetPair::D1D3, TimeTag::Central), 0.0);
        let cfg = CoincidenceConfig::default();
        let rec = sample_counts(&rates, &cfg, 5, 0).unwrap();
        let pc = rec.pairs[&(DetPair::D1D3, TimeTag::Central)];
        // 5 Hz for 30 s injects about 150 counts.
        assert!(pc.raw > 100.0 && pc.raw < 220.0, "raw {}", pc.raw);
        assert!(pc.net.abs() < 4.0 * pc.sigma, "net {} sigma {}", pc.net, pc.sigma);
    }
}
