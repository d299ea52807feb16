use thiserror::Error;

/// Error type shared by every module in the crate.
///
/// Variants are grouped by how the CLI maps them to exit codes: configuration
/// and parse problems (exit 2), numerical failures (exit 3). Property
/// failures are not errors; they are reported through verdicts.
#[derive(Debug, Error)]
pub enum Error {
    // --- configuration / construction (exit 2) ---
    #[error("grid dimension {0} unsupported, expected 1..=3")]
    BadDimension(usize),
    #[error("axis {axis}: interval [{lo}, {hi}] is empty or not finite")]
    EmptyInterval { axis: usize, lo: f64, hi: f64 },
    #[error("axis {axis}: {n_cells} cells is too coarse, need at least 4")]
    TooCoarse { axis: usize, n_cells: usize },
    #[error("grid would have {0} nodes, limit is 10^8")]
    TooManyNodes(u128),
    #[error("field has {got} values, grid has {want} nodes")]
    LengthMismatch { got: usize, want: usize },
    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("exponent expression uses {0} but the grid is {1}-dimensional")]
    CoordOutOfRange(String, usize),
    #[error("exponent reaches {value} at node {node}; p must stay above 1")]
    ExponentTooSmall { node: usize, value: f64 },
    #[error("bump support touches the domain boundary (axis {axis})")]
    BumpTouchesBoundary { axis: usize },
    #[error("bump radius {0} must be positive")]
    BadBumpRadius(f64),
    #[error("kernel: {0}")]
    BadKernel(String),
    #[error("config: {0}")]
    Config(String),
    #[error("restricting to the interior at distance {r_eps} leaves no usable grid; choose a smaller eps")]
    EmptyEffectiveDomain { r_eps: f64 },
    #[error("mollifier radius 1/{j} is below the resolvable limit 2h = {two_h}")]
    MollifierTooNarrow { j: u32, two_h: f64 },
    #[error("case {0:?} mixes degenerate and singular regimes; this check needs a single regime")]
    MixedCase(crate::exponent::CaseTag),

    // --- numerical (exit 3) ---
    #[error("gradient undefined at node {node}: |Du| = 0")]
    UndefinedAtCriticalPoint { node: usize },
    #[error("node {node} lies on the boundary; centered differences need interior nodes")]
    BoundaryNode { node: usize },
    #[error("overflow while raising |u({node})| = {value} to p = {p}")]
    ModularOverflow { node: usize, value: f64, p: f64 },
    #[error("bisection failed to bracket the norm (modular {0})")]
    BracketFailure(f64),
    #[error("descent did not converge: residual {residual} after {iters} iterations (tol {tol})")]
    NoConvergence { residual: f64, iters: usize, tol: f64 },
    #[error("certificate constant {name} = {value} must exceed 1")]
    ConstantNotAboveOne { name: &'static str, value: f64 },
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit-code class used by the CLI: 2 for configuration errors, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            BadDimension(_) | EmptyInterval { .. } | TooCoarse { .. } | TooManyNodes(_)
            | LengthMismatch { .. } | NonFinite { .. } | Syntax { .. } | CoordOutOfRange(..)
            | ExponentTooSmall { .. } | BumpTouchesBoundary { .. } | BadBumpRadius(_)
            | BadKernel(_) | Config(_) | EmptyEffectiveDomain { .. }
            | MollifierTooNarrow { .. } | MixedCase(_) | Io(_) | Json(_) => 2,
            _ => 3,
        }
    }
}
