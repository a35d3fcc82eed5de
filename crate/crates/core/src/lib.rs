pub mod scalar;
pub mod series;
pub mod expr;
pub mod matrix;
pub mod frobenius;
pub mod frame;
pub mod rmatrix;
pub mod wk;
pub mod graphs;
pub mod genus;
pub mod hodge;
pub mod descendent;
pub mod io;
pub mod selftest;
