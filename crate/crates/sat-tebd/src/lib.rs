//! Time-evolving block decimation (TEBD) for one-dimensional lattice
//! transport through a switchable single-atom impurity.
//!
//! The crate simulates interacting bosons hopping on a chain whose central
//! site couples coherently to a molecular bound state (an optically
//! switchable "single-atom transistor"). It provides:
//!
//! - [`model`]: Hamiltonian blocks, lattice geometry, and closed-form
//!   single-impurity results (dressed energies, effective tunneling, Fano
//!   transmission profile);
//! - [`mps`]: the Γ–λ matrix-product-state representation with
//!   particle-number block structure, two-site/single-site updates, and
//!   measurement routines;
//! - [`oracle`]: independent exact references — free-fermion correlation
//!   dynamics, sector exact diagonalization, and single-particle wavepacket
//!   scattering — used to validate the TEBD engine.
//!
//! Real- and imaginary-time propagation, observables, persistence and the
//! command-line front end build on these in [`evolve`], [`observables`],
//! [`snapshot`] and [`cli`].

extern crate blas_src;

pub mod cli;
pub mod evolve;
pub mod model;
pub mod mps;
pub mod observables;
pub mod oracle;
pub mod snapshot;

pub use cli::{CliError, RunConfig, RunMode, SweepAxis, SweepSpec};
pub use evolve::{
    EvolutionConfig, EvolveError, GroundStateReport, GroundStateSchedule, LayerRef, TimeStep,
    TrotterPlan,
};
pub use model::{LatticeGeometry, ModelError, ModelParams};
pub use mps::{
    GateReport, MpsError, SchmidtSpectrum, TruncationPolicy, TwoSiteGate, UpdatePath, VidalState,
};
pub use observables::{CurrentFit, ObservablesError, Sample, TimeSeries};
pub use oracle::{CorrelationState, EdProblem, OracleError, QuadraticModel, SectorBasis};
pub use snapshot::{Checkpoint, SnapshotError};
