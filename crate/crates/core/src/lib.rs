//! Certification and audit tooling for the weak maximum principle of
//! strongly coupled second-order elliptic systems.

pub mod auditor;
pub mod cli;
pub mod densecore;
pub mod exprlang;
pub mod femgrid;
pub mod hypocheck;
pub mod krylov;
pub mod sampling;
pub mod sysmodel;
