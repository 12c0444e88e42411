//! Numerical toolkit for the strong-coupling Fröhlich polaron in the
//! Landau–Pekar (classical phonon field) approximation.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: periodic spectral grids, fields and transforms
//! * [`fields`]: the electron/phonon couplings `V_φ` and `σ_ψ`
//! * [`eigensolver`]: ground states, gaps, resolvents and the Pekar fixed point
//! * [`dynamics`]: Strang-split time stepping of the coupled equations
//! * [`adiabatic`]: comparison of the coupled flow with the adiabatic ansatz
//! * [`fock`]: a truncated-Fock-space Fröhlich toy model
//! * [`fit`]: log-log slope fitting used by the experiment drivers

pub mod adiabatic;
pub mod dynamics;
pub mod eigensolver;
pub mod error;
pub mod fields;
pub mod fit;
pub mod fock;
pub mod grid;

pub use error::{PolaronError, Result};
