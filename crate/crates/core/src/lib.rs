//! Robust adaptive LQR: least-squares identification, FIR system level
//! synthesis with a built-in conic solver, the OFU / Thompson sampling /
//! certainty-equivalence baselines, and the experiment harness around them.

pub mod adaptive;
pub mod baselines;
pub mod conic;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod linsys;
pub mod rng;
pub mod sls;
pub mod sysid;
pub mod validation;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
pub use linsys::{Controller, DecayBound, LinearSystem, LqrSolution, StateSpaceController, Trajectory};
pub use sls::{FirResponse, RealizedController, SynthesisConfig};
pub use sysid::{ConfidenceEllipsoid, ParamEstimate};
