//! Simulation toolkit for the parallel fixed-point quantum search over
//! SAT instances.
//!
//! The pieces, bottom up:
//!
//! - [`cnf`]: DIMACS parsing, evaluation, and the brute-force solution
//!   enumerator that serves as ground truth everywhere else.
//! - [`circuit`]: a gate-level IR with inversion and layered-depth
//!   accounting.
//! - [`sim`]: dense statevector simulation with trajectory and
//!   exact-conditioning mid-circuit measurement.
//! - [`builders`]: the parallel oracle and diffuser circuits (one qubit
//!   per literal occurrence, GHZ-entangled per variable) plus a plain
//!   Grover baseline.
//! - [`search`]: the fixed-point iteration loop, φ schedules, and the
//!   circuit-versus-operator equivalence check.
//! - [`analytic`]: the 3×3 transfer-matrix convergence model with
//!   eigenvalue and spectral-radius diagnostics.
//! - [`distnet`]: the teleportation-based distributed multi-controlled
//!   gate over a master/sub-node topology, and a distributed run of the
//!   full search.

pub mod analytic;
pub mod builders;
pub mod circuit;
pub mod cnf;
pub mod distnet;
pub mod rng;
pub mod search;
pub mod sim;

pub use circuit::{Circuit, Gate, GateKind};
pub use cnf::{parse_dimacs, Clause, CnfFormula, Literal};
pub use distnet::{ClausePartition, DistUnitary, DistributedPfp, Network};
pub use search::{PfpEngine, PfpOutcome, PfpRunReport, PhiSchedule, RunMode};
pub use sim::{InitGroup, MeasureBasis, MeasureMode, StateVector};
