//! Numerical building blocks shared by the estimators: stable special
//! functions, optimizers, quadrature and small statistical helpers.

pub mod optim;
pub mod quad;
pub mod special;
pub mod stats;
