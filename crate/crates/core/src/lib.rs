//! Distributed least squares for block-partitioned linear systems.
//!
//! A system `H z = h` is cut into blocks `H_kl`; every block is known to
//! exactly one agent of a communication graph. [`reformulation::compile`]
//! turns the ownership pattern into one local quadratic program per agent plus
//! affine edge constraints, and [`simulator::Simulation`] runs the proximal
//! ADMM iteration of [`admm`] in synchronous rounds using neighbor messages
//! only. [`oracle`] provides the centralized reference solution.
//!
//! ```
//! use blocklsq::admm::AdmmParams;
//! use blocklsq::generators::{fig3, Fig3System};
//! use blocklsq::reformulation::compile;
//! use blocklsq::simulator::{SimOptions, Simulation, Termination};
//!
//! let (problem, graph) = fig3(Fig3System::Unique);
//! let compiled = compile(&problem, &graph).unwrap();
//! let mut sim = Simulation::new(&compiled, &AdmmParams::default(), SimOptions::default()).unwrap();
//! let report = sim.run().unwrap();
//! assert_eq!(report.termination, Termination::Converged);
//! ```

pub mod admm;
pub mod cli;
pub mod error;
pub mod generators;
pub mod graph;
pub mod io;
pub mod oracle;
pub mod problem;
pub mod reformulation;
pub mod simulator;

pub use error::{Error, Result};
