//! Shared numerical building blocks.

pub mod chebyshev;
pub mod fit;
pub mod grid;
pub mod interp;
pub mod quadrature;
pub mod rootfind;
