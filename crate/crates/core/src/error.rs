use thiserror::Error;

/// Errors raised across the planning stack.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlanError {
    #[error("bicycle model undefined: |v*dt*sin(delta)| = {g:.6} exceeds wheelbase {wheelbase:.3}")]
    Domain { g: f64, wheelbase: f64 },

    #[error("no route from node {start} to node {goal}")]
    NoRoute { start: u64, goal: u64 },

    #[error("unknown road node {0}")]
    UnknownNode(u64),

    #[error("invalid Savitzky-Golay parameters: {0}")]
    BadFilterParams(String),

    #[error("degenerate vehicle pair: circle center coincides with ellipse center")]
    DegeneratePair,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular KKT system")]
    SingularKkt,

    #[error("initial nominal trajectories overlap: vehicles {0} and {1}")]
    InfeasibleStart(usize, usize),

    #[error("could not generate a feasible scenario: {0}")]
    ScenarioInfeasible(String),

    #[error("collision between vehicles {a} and {b} at step {step}")]
    CollisionDetected { step: usize, a: usize, b: usize },

    #[error("step budget of {0} steps exhausted before all vehicles arrived")]
    StepBudgetExceeded(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PlanError {
    fn from(e: std::io::Error) -> Self {
        PlanError::Io(e.to_string())
    }
}

pub type Result<T, E = PlanError> = std::result::Result<T, E>;
