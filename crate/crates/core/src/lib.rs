//! Phase estimation in a Mach-Zehnder interferometer fed with a coherent
//! state and a photon-added squeezed vacuum.

pub mod error;
pub mod jet;
pub mod moments;
pub mod optim;
pub mod oracle;
pub mod parity;
pub mod qfi_kerr;
pub mod qfi_linear;
pub mod states;
pub mod sweep;

pub use error::{Error, Result};
