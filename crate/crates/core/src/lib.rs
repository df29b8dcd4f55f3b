//! Numerical construction of dilation-periodic (Fowler-type) singular
//! solutions of the CR Yamabe equation -Δ_H u = u^{(Q+2)/(Q-2)} on the
//! Heisenberg group H^n, by periodizing the Jerison–Lee bubble and solving
//! a Lyapunov–Schmidt reduction on the space X_T of functions with
//! u∘δ_T = T^{-(Q-2)/2} u.

pub mod bubble;
pub mod error;
pub mod functional;
pub mod heis;
pub mod lorentz;
pub mod numerics;
pub mod periodize;
pub mod quadrature;
pub mod reduction;

pub use error::{Error, Result};
pub use heis::{CylPoint, GroupParams, HPoint};
pub use quadrature::{build_grid, AnnulusGrid, GridFunction};
