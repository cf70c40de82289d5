//! Hilbert-space fragmentation in a detuned Rydberg Ising chain.
//!
//! Configurations and sectors live in [`basis`], kinetic constraints and
//! Krylov fragments in [`constraints`], exact and effective Hamiltonians in
//! [`model`]. [`spectral`], [`dynamics`] and [`disorder`] provide the
//! diagnostics built on top.

pub mod basis;
pub mod constraints;
pub mod disorder;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod spectral;

pub use basis::{RootTemplate, SectorKey, SpinConfig};
pub use constraints::{build_fragment, KrylovFragment, RegimeTag};
pub use error::{Error, Result};
pub use model::{HamiltonianMatrix, InteractionProfile, ModelParams};
