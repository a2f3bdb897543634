//! Multi-time quantum processes as quantum combs, with every classicality
//! notion decidable and a linear-program measure of non-classicality.
//!
//! The crate is `no_std` (alloc only); IO, file formats, and the CLI live
//! in the companion `combclassic` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod classicality;
pub mod comb;
pub mod instrument;
pub mod lp;
pub mod measure;
pub mod models;
pub mod prob;
pub mod tensor;

pub use comb::{
    choi_of_map, comb_from_dilation, link_product, ChoiState, Comb, CombError, Dilation,
};
pub use instrument::{
    coarse_grain, dephasing_choi, identity_choi, povm_instrument, projective_instrument,
    BlochPovm, Instrument,
};
pub use prob::ProbTable;
pub use tensor::{
    kron, partial_trace, transpose_computational, C64, ComplexMatrix, Factor, FactorLayout,
    Port,
};
