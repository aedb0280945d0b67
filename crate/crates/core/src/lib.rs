pub mod asymptotics;
pub mod banded;
pub mod dump;
pub mod evolution;
pub mod error;
pub mod field;
pub mod functional;
pub mod newton;
pub mod grid;
pub mod profiles;
pub mod scalar;
pub mod solver;
pub mod state;
pub mod thresholds;

pub use error::{Error, Result};
pub use field::RadialField;
pub use functional::{Diagnostics, FiberCriticalPoints, ProblemParams};
pub use grid::{RadialGrid, Spacing};
pub use scalar::Scalar;
pub use state::{h1_distance, StatePair};

pub type Grid = RadialGrid<f64>;
pub type Field = RadialField<f64>;
pub type State = StatePair<f64>;
pub type Params = ProblemParams<f64>;
