//! Numerical toolkit for Green's functions, heat kernels and special functions
//! on hyperbolic space `H^n`, with a Nyström solver for the associated
//! semilinear integral equations and a moving-plane harness that certifies
//! radial symmetry of discrete solutions.

pub mod error;
pub mod geom;
pub mod specfun;
pub mod heat;
pub mod quad;
pub mod kernels;
pub mod solver;
pub mod symmetry;
pub mod verify;

pub use error::{Error, Result};
pub use geom::{BallPoint, FoliationLeaf, HalfSpacePoint, HyperboloidPoint};
pub use heat::HeatQuery;
pub use kernels::{KernelSpec, RadialProfile, RatioTable, ViolationReport};
pub use quad::BallMesh;
pub use solver::{
    GridField, InitialGuess, Nonlinearity, SolveConfig, SolveResult, SourceSpec,
};
pub use symmetry::{RadialCheck, SymmetryReport};
pub use verify::CheckResult;
