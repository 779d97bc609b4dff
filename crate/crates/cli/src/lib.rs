//! Batch runner, trace comparison and live service for the color sorting
//! cell. The `colorsort` binary is a thin wrapper over these modules.

pub mod batch;
pub mod exit;
pub mod serve;
