//! Simulation of the degenerate two-photon state from a dual-pump fiber
//! four-wave-mixing source and of its Hong-Ou-Mandel interference.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod export;
pub mod fitdata;
pub mod hom;
pub mod imperfections;
pub mod interp;
pub mod jsa;
pub mod quadrature;
pub mod units;
