//! End-to-end experiment drivers shared by the command line and the
//! acceptance suite.

pub mod classify;
pub mod seq;
