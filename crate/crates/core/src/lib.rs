//! Joint base-station / RIS beamforming for secure ISAC: maximize the
//! beampattern gain at an eavesdropping sensing target subject to
//! communication-SINR floors, information-leakage ceilings, a power budget,
//! and per-element RIS amplitude bounds, in both passive and active RIS
//! modes.
//!
//! The nonconvex design problem is driven by successive convex approximation:
//! every iteration builds second-order-cone-representable inner
//! approximations around the previous iterate ([`sca`]) and solves them with
//! the embedded conic solver. [`metrics`] evaluates the exact model
//! quantities and doubles as the ground-truth oracle in tests; [`scene`]
//! generates reproducible channel realizations.

pub mod metrics;
pub mod optimizer;
pub mod scene;
pub mod sca;

pub use num_complex::Complex64;
