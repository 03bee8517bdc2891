use thiserror::Error;

/// Errors produced while building triangulations, evaluating geometry,
/// evolving the flow, or running experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "grid dimension {axis} = {value} is below 3; smaller tori identify distinct simplices \
         across the periodic boundary and merge their neighbour sets"
    )]
    GridTooSmall { axis: char, value: usize },

    #[error("degenerate tetrahedron{}: Cayley-Menger determinant {determinant:e}", fmt_tet(*.tet))]
    DegenerateSimplex { tet: Option<usize>, determinant: f64 },

    #[error("edge {edge} is not a face diagonal (role {role})")]
    NotFaceDiagonal { edge: usize, role: String },

    #[error("edge {edge} has non-positive or non-finite length {length:e}")]
    InvalidLength { edge: usize, length: f64 },

    #[error("length array has {got} entries, triangulation has {expected} edges")]
    LengthCount { expected: usize, got: usize },

    #[error("edges {edge} and {neighbour} do not share a vertex")]
    NotAdjacent { edge: usize, neighbour: usize },

    #[error("no unfolding fan around vertex {vertex} reaches edge {edge}")]
    NoFan { vertex: usize, edge: usize },

    #[error("singular flattening constraint in block {block:?}: d(deficit)/d(length) = {derivative:e}")]
    SingularConstraint { block: [usize; 3], derivative: f64 },

    #[error("flattening of block {block:?} did not converge: residual deficit {residual:e}")]
    FlattenNotConverged { block: [usize; 3], residual: f64 },

    #[error("flow aborted at step {step}: {source}")]
    FlowAborted {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("lengths are not a stationary point: max |rate| = {max_rate:e} at edge {edge}")]
    NotStationary { max_rate: f64, edge: usize },

    #[error("eigensolver failed to converge on a {dim}x{dim} matrix within {max_iterations} iterations")]
    EigenNonConvergence { dim: usize, max_iterations: usize },

    #[error("row sums within role block {block} vary by {spread:e} (tolerance {tolerance:e})")]
    NonConstantRoleBlock { block: usize, spread: f64, tolerance: f64 },

    #[error("fit needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown table '{0}'; valid ids: table1, table3, table4, table5, table6")]
    UnknownTable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_tet(tet: Option<usize>) -> String {
    match tet {
        Some(t) => format!(" {t}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
