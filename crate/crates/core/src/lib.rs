//! Geometric optics for the Reissner–Nordström wave equation: null
//! bicharacteristics, WKB phases and amplitudes along ray bundles, the
//! turning-point caustic via a momentum-side oscillatory integral, and
//! residual checks of the full construction against the wave operator.

pub mod interp;
pub mod metric;
pub mod ode;
pub mod quad;

pub mod caustic;
pub mod config;
pub mod eikonal;
pub mod geodesic;
pub mod output;
pub mod transport;
pub mod wavecheck;
