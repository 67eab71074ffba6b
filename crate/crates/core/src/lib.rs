//! Simulation and verification tools for the one-dimensional screened
//! Vlasov–Poisson system near vacuum.

mod error;

pub mod characteristics;
pub mod combinatorics;
pub mod comparison_ode;
pub mod grid;
pub mod ode;
pub mod oracle;
pub mod picard;
pub mod quadrature;
pub mod screened_field;
pub mod transport;
pub mod verification;
pub mod weights;

pub use error::{Error, Result};
