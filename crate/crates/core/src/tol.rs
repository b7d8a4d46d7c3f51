//! Numerical tolerances shared by every solver layer.
//!
//! Downstream acceptance tolerances are composed from these values, so they
//! live in one record instead of being scattered as literals.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Primal and dual feasibility of an LP solution.
    pub feasibility: f64,
    /// Allowed gap between primal and dual objective.
    pub duality_gap: f64,
    /// Complementary slackness residual.
    pub complementarity: f64,
    /// Smallest magnitude accepted as a simplex pivot.
    pub pivot: f64,
    /// Reduced-cost threshold for an entering column.
    pub pricing: f64,
    /// Probability vectors returned by solvers.
    pub probability: f64,
    /// Probability sums in user input.
    pub input_probability: f64,
}

pub const TOL: Tolerances = Tolerances {
    feasibility: 1e-8,
    duality_gap: 1e-7,
    complementarity: 1e-7,
    pivot: 1e-9,
    pricing: 1e-11,
    probability: 1e-9,
    input_probability: 1e-12,
};
