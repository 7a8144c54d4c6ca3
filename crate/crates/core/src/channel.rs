//! Multicore-fiber channel: core geometry, diametric pairing and per-core
//! impairments.
//!
//! The canonical fiber holds 19 single-mode cores on a hexagonal lattice —
//! one center core, an inner ring of six and an outer ring of twelve.
//! Momentum anti-correlation of the photon pair places the partner of a
//! photon collected in any core in the diametrically opposite core, so the
//! pairing map is point reflection through the lattice center.
//!
//! Named core pairs follow the measurement wiring: pairs 1-1' and 2-2' sit
//! in the inner ring, the neighbouring pairs 3-3' and 4-4' in the outer
//! ring. Remaining cores get arbitrary unprimed/primed labels.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use thiserror::Error;

use crate::hilbert::{CoreId, DensityOperator, LocalOp, Photon};

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("unknown core {0}")]
    UnknownCore(String),
    #[error("core {0} not present in the fiber layout")]
    CoreOutsideLayout(CoreId),
    #[error("invalid fiber spec: {0}")]
    InvalidSpec(String),
}

/// One core site: stable id, human label and axial hex coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreSite {
    pub id: CoreId,
    pub label: String,
    pub ring: u8,
    pub coord: (i32, i32),
}

/// The fixed 19-core hexagonal layout.
#[derive(Debug, Clone)]
pub struct FiberLayout {
    sites: Vec<CoreSite>,
}

fn hex_distance(q: i32, r: i32) -> i32 {
    (q.abs() + r.abs() + (q + r).abs()) / 2
}

/// Cartesian angle of an axial coordinate, used only to order ring sites.
fn site_angle(q: i32, r: i32) -> f64 {
    let x = q as f64 + r as f64 / 2.0;
    let y = r as f64 * 3f64.sqrt() / 2.0;
    y.atan2(x).rem_euclid(std::f64::consts::TAU)
}

impl FiberLayout {
    /// Center core "0"; inner ring labels 1, 2, 5 and primes; outer ring
    /// labels 3, 4, 6, 7, 8, 9 and primes. A primed core sits diametrically
    /// opposite its unprimed partner.
    pub fn standard() -> Self {
        let mut sites = vec![CoreSite {
            id: CoreId(0),
            label: "0".to_string(),
            ring: 0,
            coord: (0, 0),
        }];
        let ring_labels: [&[&str]; 2] = [
            &["1", "2", "5", "1'", "2'", "5'"],
            &["3", "4", "6", "7", "8", "9", "3'", "4'", "6'", "7'", "8'", "9'"],
        ];
        let mut next_id = 1u8;
        for (ring, labels) in ring_labels.iter().enumerate() {
            let k = ring as i32 + 1;
            let mut coords: Vec<(i32, i32)> = Vec::new();
            for q in -k..=k {
                for r in -k..=k {
                    if hex_distance(q, r) == k {
                        coords.push((q, r));
                    }
                }
            }
            coords.sort_by(|a, b| {
                site_angle(a.0, a.1)
                    .partial_cmp(&site_angle(b.0, b.1))
                    .unwrap()
            });
            for (pos, coord) in coords.iter().enumerate() {
                sites.push(CoreSite {
                    id: CoreId(next_id),
                    label: labels[pos].to_string(),
                    ring: ring as u8 + 1,
                    coord: *coord,
                });
                next_id += 1;
            }
        }
        Self { sites }
    }

    pub fn sites(&self) -> &[CoreSite] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, core: CoreId) -> bool {
        self.sites.iter().any(|s| s.id == core)
    }

    pub fn by_label(&self, label: &str) -> Result<CoreId, LayoutError> {
        self.sites
            .iter()
            .find(|s| s.label == label)
            .map(|s| s.id)
            .ok_or_else(|| LayoutError::UnknownCore(label.to_string()))
    }

    pub fn label(&self, core: CoreId) -> Result<&str, LayoutError> {
        self.sites
            .iter()
            .find(|s| s.id == core)
            .map(|s| s.label.as_str())
            .ok_or(LayoutError::CoreOutsideLayout(core))
    }

    /// Point reflection through the lattice center: (q, r) -> (-q, -r).
    pub fn opposite_core(&self, core: CoreId) -> Result<CoreId, LayoutError> {
        let site = self
            .sites
            .iter()
            .find(|s| s.id == core)
            .ok_or(LayoutError::CoreOutsideLayout(core))?;
        let mirror = (-site.coord.0, -site.coord.1);
        self.sites
            .iter()
            .find(|s| s.coord == mirror)
            .map(|s| s.id)
            .ok_or(LayoutError::CoreOutsideLayout(core))
    }

    /// The core pairs wired to the measurement stations, in label order
    /// 1-1', 2-2', 3-3', 4-4'.
    pub fn standard_pairs(&self) -> Result<Vec<(CoreId, CoreId)>, LayoutError> {
        ["1", "2", "3", "4"]
            .iter()
            .map(|l| {
                let a = self.by_label(l)?;
                let b = self.opposite_core(a)?;
                Ok((a, b))
            })
            .collect()
    }
}

impl Default for FiberLayout {
    fn default() -> Self {
        Self::standard()
    }
}

/// Involutive map from each core to its diametric opposite.
#[derive(Debug, Clone)]
pub struct CorePairing {
    map: BTreeMap<CoreId, CoreId>,
}

impl CorePairing {
    pub fn from_layout(layout: &FiberLayout) -> Result<Self, LayoutError> {
        let mut map = BTreeMap::new();
        for site in layout.sites() {
            map.insert(site.id, layout.opposite_core(site.id)?);
        }
        let pairing = Self { map };
        for (&a, &b) in &pairing.map {
            if pairing.partner(b)? != a {
                return Err(LayoutError::InvalidSpec(format!(
                    "pairing is not involutive at {a}"
                )));
            }
        }
        Ok(pairing)
    }

    pub fn partner(&self, core: CoreId) -> Result<CoreId, LayoutError> {
        self.map
            .get(&core)
            .copied()
            .ok_or(LayoutError::CoreOutsideLayout(core))
    }
}

/// Fiber description: geometry plus per-core impairments. Defaults are a
/// transparent 411 m fiber — no loss, no phase, no drift, no crosstalk.
#[derive(Debug, Clone)]
pub struct FiberSpec {
    pub layout: FiberLayout,
    pub length_m: f64,
    pub loss_db: BTreeMap<CoreId, f64>,
    pub phase_rad: BTreeMap<CoreId, f64>,
    pub pol_drift: BTreeMap<CoreId, Matrix2<Complex64>>,
    /// Amplitude-coupling matrix over all layout cores, column c holding
    /// the output amplitudes of light entering core c. `None` means no
    /// coupling between cores.
    pub crosstalk: Option<DMatrix<Complex64>>,
}

impl Default for FiberSpec {
    fn default() -> Self {
        Self {
            layout: FiberLayout::standard(),
            length_m: 411.0,
            loss_db: BTreeMap::new(),
            phase_rad: BTreeMap::new(),
            pol_drift: BTreeMap::new(),
            crosstalk: None,
        }
    }
}

impl FiberSpec {
    /// Passivity and shape checks: losses nonnegative, crosstalk columns
    /// with at most unit power.
    pub fn validate(&self) -> Result<(), LayoutError> {
        for (core, loss) in &self.loss_db {
            if !self.layout.contains(*core) {
                return Err(LayoutError::CoreOutsideLayout(*core));
            }
            if *loss < 0.0 {
                return Err(LayoutError::InvalidSpec(format!(
                    "negative loss {loss} dB on core {core}"
                )));
            }
        }
        for core in self.phase_rad.keys().chain(self.pol_drift.keys()) {
            if !self.layout.contains(*core) {
                return Err(LayoutError::CoreOutsideLayout(*core));
            }
        }
        if let Some(x) = &self.crosstalk {
            let n = self.layout.len();
            if x.nrows() != n || x.ncols() != n {
                return Err(LayoutError::InvalidSpec(format!(
                    "crosstalk matrix is {}x{}, layout has {} cores",
                    x.nrows(),
                    x.ncols(),
                    n
                )));
            }
            for j in 0..n {
                let power: f64 = (0..n).map(|i| x[(i, j)].norm_sqr()).sum();
                if power > 1.0 + 1e-9 {
                    return Err(LayoutError::InvalidSpec(format!(
                        "crosstalk column {j} carries power {power} > 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Nearest-neighbour amplitude coupling of strength `eps`, column
    /// normalized so the device stays passive. Identity at eps = 0.
    pub fn uniform_crosstalk(layout: &FiberLayout, eps: f64) -> DMatrix<Complex64> {
        let n = layout.len();
        let sites = layout.sites();
        let mut x = DMatrix::<Complex64>::zeros(n, n);
        for j in 0..n {
            x[(j, j)] = Complex64::ONE;
            for i in 0..n {
                if i == j {
                    continue;
                }
                let dq = sites[i].coord.0 - sites[j].coord.0;
                let dr = sites[i].coord.1 - sites[j].coord.1;
                if hex_distance(dq, dr) == 1 {
                    x[(i, j)] = Complex64::new(eps, 0.0);
                }
            }
        }
        for j in 0..n {
            let power: f64 = (0..n).map(|i| x[(i, j)].norm_sqr()).sum();
            let scale = Complex64::new(1.0 / power.sqrt(), 0.0);
            for i in 0..n {
                x[(i, j)] *= scale;
            }
        }
        x
    }

    fn amplitude_map(&self, support: &[CoreId]) -> LocalOp {
        let factors: Vec<(CoreId, Complex64)> = support
            .iter()
            .map(|c| {
                let loss = self.loss_db.get(c).copied().unwrap_or(0.0);
                let phase = self.phase_rad.get(c).copied().unwrap_or(0.0);
                let mag = 10f64.powf(-loss / 20.0);
                (*c, Complex64::from_polar(mag, phase))
            })
            .collect();
        LocalOp::core_diagonal(&factors)
    }
}

/// Propagates a two-photon state through the fiber. Each photon traverses
/// its own core: per-core attenuation and phase, per-core polarization
/// drift, then amplitude crosstalk between cores. The trace never grows.
pub fn transmit(
    rho: &DensityOperator,
    fiber: &FiberSpec,
) -> Result<DensityOperator, LayoutError> {
    fiber.validate()?;
    let mut support: Vec<CoreId> = Vec::new();
    for (a, b) in rho.basis() {
        for core in [a.core, b.core] {
            if !fiber.layout.contains(core) {
                return Err(LayoutError::CoreOutsideLayout(core));
            }
            if !support.contains(&core) {
                support.push(core);
            }
        }
    }
    support.sort();

    let mut out = rho.clone();
    let fail = |e: crate::hilbert::HilbertError| LayoutError::InvalidSpec(e.to_string());
    for photon in [Photon::A, Photon::B] {
        for (core, drift) in &fiber.pol_drift {
            let op = LocalOp::Polarization { matrix: *drift, core: Some(*core) };
            out = out.apply_local(photon, &op).map_err(fail)?;
        }
        let amp = fiber.amplitude_map(&support);
        out = out.apply_local(photon, &amp).map_err(fail)?;
        if let Some(x) = &fiber.crosstalk {
            let modes: Vec<CoreId> = fiber.layout.sites().iter().map(|s| s.id).collect();
            let op = LocalOp::CoreModes { modes, matrix: x.clone() };
            out = out.apply_local(photon, &op).map_err(fail)?;
        }
    }
    Ok(out)
}
