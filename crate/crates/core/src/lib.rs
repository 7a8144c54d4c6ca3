//! Discrete-mode simulation and analysis toolkit for hyper-entangled photon
//! pairs distributed through a multicore fiber.
//!
//! A photon pair is entangled simultaneously in three degrees of freedom:
//! which opposing core pair of the fiber it occupies (path), its emission
//! time relative to an unbalanced interferometer delay (energy-time), and
//! its polarization. The crate models the chain
//!
//! ```text
//! source -> channel -> apparatus -> counts -> analysis
//! ```
//!
//! from the ideal two-photon state through fiber impairments, measurement
//! stations (Franson interferometer pair, polarization analyzers,
//! two-beamsplitter path station), Poissonian detection with dark counts and
//! accidentals, down to fringe fits, visibilities and the entanglement
//! certification chain (off-diagonal bound, fidelity, Schmidt number,
//! key-distribution threshold).
//!
//! [`runner`] executes full phase scans from a [`config::RunConfig`] and
//! writes CSV datasets, a summary report and a reproducibility manifest.

pub mod analysis;
pub mod apparatus;
pub mod channel;
pub mod config;
pub mod counts;
pub mod hilbert;
pub mod oracle;
pub mod runner;
pub mod source;
