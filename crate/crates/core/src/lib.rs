//! Simulation and exact-density toolkit for the time-changed
//! vertex-reinforced jump process (VRJP) on finite weighted graphs.
//!
//! The crate has five layers:
//!
//! * [`graph`] — weighted graphs, spanning trees, Kirchhoff current spaces,
//!   cycle bases, and the matrix-tree evaluation of tree polynomials.
//! * [`simulate`] — exact event-driven simulation of the jump process, its
//!   time change, two-time-scale observable extraction, and the rescaling
//!   map onto sigma-model coordinates.
//! * [`density`] — closed-form log-space evaluation of the sigma-model
//!   densities, marginals, finite-time joint density, combinatorial factors,
//!   and the Gaussian integral over sourceless currents.
//! * [`oracle`] — independent brute-force and quadrature oracles: path
//!   enumeration, adaptive cubature, Monte Carlo event probabilities, and a
//!   finite-difference Jacobian check.
//! * [`harness`] — ensemble experiments comparing simulated rescaled
//!   observables against the exact limit laws, with seeded, reproducible
//!   statistical reports.

pub mod density;
pub mod graph;
pub mod harness;
pub mod oracle;
pub mod simulate;
pub mod suite;

pub use graph::{build_graph, CurrentVector, DirectedTree, IntegerCurrent, SpanningTree, WeightedGraph};
