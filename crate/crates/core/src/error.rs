//! Error type shared by every module.
//!
//! Identification failures carry the label of the identifying assumption they
//! correspond to so that callers (and the CLI) can report which condition the
//! data failed to satisfy.

use std::fmt;

use thiserror::Error;

/// Labels of the identifying assumptions, as surfaced in diagnostics.
pub mod assumptions {
    pub const HS_POSITIVITY: &str = "HS Assumption 1 (bounded non-zero joint density)";
    pub const HS_INDEPENDENCE: &str = "HS Assumption 2 (proxies mutually independent given W)";
    pub const HS_COMPLETENESS: &str = "HS Assumption 3 (completeness of V and Z for W)";
    pub const HS_DISTINGUISHABILITY: &str =
        "HS Assumption 4 (latent states distinguishable through the third proxy)";
    pub const HS_UNBIASEDNESS: &str = "HS Assumption 5 (known centring functional)";
    pub const POSITIVITY: &str = "Assumption 1 (bounded non-zero joint density)";
    pub const STRATUM_COMPLETENESS: &str =
        "Assumption 2 (completeness of V and Z for W within treatment strata)";
    pub const OUTCOME_DISTINGUISHABILITY: &str =
        "Assumption 3 (latent states distinguishable through the outcome)";
    pub const TREATMENT_DISTINGUISHABILITY: &str =
        "Assumption 4 (latent states distinguishable through the treatment)";
    pub const OUTCOME_STRATUM_COMPLETENESS: &str =
        "Assumption 5 (completeness of V and Z for W within outcome strata)";
    pub const COND_TREATMENT_DISTINGUISHABILITY: &str =
        "Assumption 6 (latent states distinguishable through the treatment within outcome strata)";
    pub const AUX_POSITIVITY: &str = "Assumption 7 (bounded non-zero joint density with C)";
    pub const AUX_DISTINGUISHABILITY: &str =
        "Assumption 8 (latent states distinguishable through C within treatment strata)";
    pub const MONOTONE_PROXY: &str = "Assumption 9 (centring functional monotone in W)";
    pub const RANK_INVARIANCE: &str = "Assumption 10 (rank invariance)";
    pub const V_RANK_INVARIANCE: &str = "Assumption 11 (V-conditional rank invariance)";
}

/// The three assumption roles an HS-style decomposition relies on. Each
/// identification design maps them to its own labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionLabels {
    pub positivity: &'static str,
    pub completeness: &'static str,
    pub distinguishability: &'static str,
}

impl AssumptionLabels {
    pub const RAW_HS: AssumptionLabels = AssumptionLabels {
        positivity: assumptions::HS_POSITIVITY,
        completeness: assumptions::HS_COMPLETENESS,
        distinguishability: assumptions::HS_DISTINGUISHABILITY,
    };
}

/// Broad class of an error, used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed input or violated precondition.
    Validation,
    /// The data do not satisfy an identifying assumption numerically.
    Identification,
    /// Filesystem or serialization failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown axis `{0}`")]
    UnknownAxis(String),
    #[error("duplicate axis name `{0}`")]
    DuplicateAxis(String),
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),
    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid variable space: {0}")]
    InvalidSpace(String),
    #[error("negative probability {value:e} at flat index {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("total mass {total} is not 1")]
    MassMismatch { total: f64 },
    #[error("{assumption} violated: zero-probability conditioning cell {cell}")]
    ZeroConditioningCell { cell: String, assumption: &'static str },

    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid conditional-independence query: {0}")]
    InvalidQuery(String),
    #[error("graph lacks required role `{0}`")]
    MissingRole(String),

    #[error("enumeration of {configurations} noise configurations exceeds the limit {limit}")]
    EnumerationTooLarge { configurations: u128, limit: u128 },

    #[error("{assumption} violated: rank deficient (sigma_K/sigma_1 = {ratio:e}){}", stratum_suffix(.stratum))]
    RankDeficient { ratio: f64, stratum: Option<String>, assumption: &'static str },
    #[error("{assumption} violated: eigen-gap exhausted after {retries} draws (best gap {gap:e}){}", stratum_suffix(.stratum))]
    EigenGapExhausted { gap: f64, retries: usize, stratum: Option<String>, assumption: &'static str },
    #[error("{assumption} violated: complex eigenvalues (imaginary part {imag:e}){}", stratum_suffix(.stratum))]
    ComplexResidual { imag: f64, stratum: Option<String>, assumption: &'static str },
    #[error("{assumption} violated: clipped negative mass {clipped:e} exceeds tolerance{}", stratum_suffix(.stratum))]
    NegativeMass { clipped: f64, stratum: Option<String>, assumption: &'static str },
    #[error("{assumption} violated: linear solve ill-conditioned (condition number {condition:e}){}", stratum_suffix(.stratum))]
    SolveIllConditioned { condition: f64, stratum: Option<String>, assumption: &'static str },
    #[error("{assumption} violated: solved kernel is {distance:e} away from the simplex{}", stratum_suffix(.stratum))]
    NonStochasticSolution { distance: f64, stratum: Option<String>, assumption: &'static str },
    #[error("latent dimension {latent_dim} exceeds |{axis}| = {cardinality}; {assumption} requires |{axis}| >= K")]
    DimensionTooSmall { axis: String, cardinality: usize, latent_dim: usize, assumption: &'static str },

    #[error("ambiguous latent matching: best cost {best:e}, runner-up {runner_up:e}")]
    AmbiguousMatch { best: f64, runner_up: f64 },

    #[error("variable `{0}` has no numeric levels")]
    MissingLevels(String),
    #[error("treatment must be binary, found {cardinality} levels")]
    NonBinaryTreatment { cardinality: usize },
    #[error("{assumption} violated: latent states {first} and {second} share the same centring value")]
    AlphaCollision { first: usize, second: usize, assumption: &'static str },
    #[error("quantile level {0} outside (0, 1]")]
    TauOutOfRange(f64),
    #[error("{assumption} refuted by the data: lower bound {lower} exceeds upper bound {upper}")]
    RankInvarianceRefuted { lower: f64, upper: f64, assumption: &'static str },

    #[error("{assumption} fails on graph `{graph}`: no triple-proxy design applies (available: {available:?})")]
    NoTripleProxyDesign { graph: String, available: Vec<String>, assumption: &'static str },

    #[error("golden mismatch:\n{}", .0.join("\n"))]
    GoldenMismatch(Vec<String>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn stratum_suffix(stratum: &Option<String>) -> String {
    match stratum {
        Some(s) => format!(" [stratum {s}]"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// The assumption label carried by identification failures.
    pub fn assumption(&self) -> Option<&'static str> {
        use Error::*;
        match self {
            ZeroConditioningCell { assumption, .. }
            | RankDeficient { assumption, .. }
            | EigenGapExhausted { assumption, .. }
            | ComplexResidual { assumption, .. }
            | NegativeMass { assumption, .. }
            | SolveIllConditioned { assumption, .. }
            | NonStochasticSolution { assumption, .. }
            | DimensionTooSmall { assumption, .. }
            | AlphaCollision { assumption, .. }
            | RankInvarianceRefuted { assumption, .. }
            | NoTripleProxyDesign { assumption, .. } => Some(assumption),
            _ => None,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            UnknownAxis(_) => "UnknownAxis",
            DuplicateAxis(_) => "DuplicateAxis",
            AxisMismatch(_) => "AxisMismatch",
            ShapeMismatch { .. } => "ShapeMismatch",
            InvalidSpace(_) => "InvalidSpace",
            NegativeEntry { .. } => "NegativeEntry",
            MassMismatch { .. } => "MassMismatch",
            ZeroConditioningCell { .. } => "ZeroConditioningCell",
            UnknownNode(_) => "UnknownNode",
            InvalidGraph(_) => "InvalidGraph",
            InvalidQuery(_) => "InvalidQuery",
            MissingRole(_) => "MissingRole",
            EnumerationTooLarge { .. } => "EnumerationTooLarge",
            RankDeficient { .. } => "RankDeficient",
            EigenGapExhausted { .. } => "EigenGapExhausted",
            ComplexResidual { .. } => "ComplexResidual",
            NegativeMass { .. } => "NegativeMass",
            SolveIllConditioned { .. } => "SolveIllConditioned",
            NonStochasticSolution { .. } => "NonStochasticSolution",
            DimensionTooSmall { .. } => "DimensionTooSmall",
            AmbiguousMatch { .. } => "AmbiguousMatch",
            MissingLevels(_) => "MissingLevels",
            NonBinaryTreatment { .. } => "NonBinaryTreatment",
            AlphaCollision { .. } => "AlphaCollision",
            TauOutOfRange(_) => "TauOutOfRange",
            RankInvarianceRefuted { .. } => "RankInvarianceRefuted",
            NoTripleProxyDesign { .. } => "NoTripleProxyDesign",
            GoldenMismatch(_) => "GoldenMismatch",
            InvalidInput(_) => "InvalidInput",
            Io(_) => "Io",
            Json(_) => "Json",
            Csv(_) => "Csv",
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            ZeroConditioningCell { .. }
            | RankDeficient { .. }
            | EigenGapExhausted { .. }
            | ComplexResidual { .. }
            | NegativeMass { .. }
            | SolveIllConditioned { .. }
            | NonStochasticSolution { .. }
            | AmbiguousMatch { .. }
            | AlphaCollision { .. }
            | RankInvarianceRefuted { .. }
            | NoTripleProxyDesign { .. }
            | GoldenMismatch(_) => ErrorClass::Identification,
            Io(_) | Csv(_) => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }

    /// Attach a stratum description to identification failures that lack one.
    pub fn in_stratum(mut self, label: impl fmt::Display) -> Self {
        use Error::*;
        match &mut self {
            RankDeficient { stratum, .. }
            | EigenGapExhausted { stratum, .. }
            | ComplexResidual { stratum, .. }
            | NegativeMass { stratum, .. }
            | SolveIllConditioned { stratum, .. }
            | NonStochasticSolution { stratum, .. } => {
                if stratum.is_none() {
                    *stratum = Some(label.to_string());
                }
            }
            ZeroConditioningCell { cell, .. } => {
                *cell = format!("{cell} [stratum {label}]");
            }
            _ => {}
        }
        self
    }

    /// Re-tag an error raised by a raw decomposition with the labels of the
    /// design that invoked it.
    pub fn relabel_assumptions(mut self, labels: &AssumptionLabels) -> Self {
        use Error::*;
        let raw = AssumptionLabels::RAW_HS;
        match &mut self {
            RankDeficient { assumption, .. }
            | SolveIllConditioned { assumption, .. }
            | DimensionTooSmall { assumption, .. }
            | NonStochasticSolution { assumption, .. } => {
                if *assumption == raw.completeness {
                    *assumption = labels.completeness;
                }
            }
            EigenGapExhausted { assumption, .. } | ComplexResidual { assumption, .. } => {
                if *assumption == raw.distinguishability {
                    *assumption = labels.distinguishability;
                }
            }
            ZeroConditioningCell { assumption, .. } | NegativeMass { assumption, .. } => {
                if *assumption == raw.positivity {
                    *assumption = labels.positivity;
                }
            }
            _ => {}
        }
        self
    }
}
