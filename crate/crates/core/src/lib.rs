//! SGD under the Polyak–Łojasiewicz condition with Markov-modulated and
//! martingale gradient noise: finite Markov chains, Poisson-equation noise
//! decomposition, the SGD engine, three application problems, and the
//! closed-form constants of the convergence bounds.

pub mod chain;
pub mod engine;
pub mod linalg;
pub mod poisson;
pub mod problems;
pub mod report;
pub mod scalar;
pub mod theory;

pub use chain::{ChainError, Distribution, FiniteChain};
pub use engine::{EngineError, StepSchedule, Trajectory};
pub use poisson::{PoissonError, PoissonSolution, PoissonSolver};
pub use problems::{Problem, ProblemConstants, ProblemError};
pub use report::{Check, Report};
pub use scalar::Scalar;
pub use theory::{TheoryConstants, TheoryError, TheoryInputs};

pub type Chain = FiniteChain<f64>;
pub type Matrix = linalg::Matrix<f64>;
