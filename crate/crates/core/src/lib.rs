//! Solver for zero-sum discounted semi-Markov games in which only Player 1
//! knows the game type.
//!
//! The value function is computed by value iteration over concave cut
//! envelopes on the belief simplex. Optimal policies for both players are
//! derived from it: the informed player through Bayesian belief tracking,
//! the uninformed player through the dual game. Brute-force oracles and a
//! seeded simulator check the results.

pub mod belief;
pub mod dual;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod player1;
pub mod sim;
pub mod tol;
pub mod value;

pub use belief::{Belief, JointMix, StageMixP1, StageMixP2};
pub use error::{Error, Result};
pub use model::{
    certify_assumption1, default_delta_candidates, discounted_aggregates, validate_spec, Assumption1Certificate,
    DiscountedAggregates, GameSpec, SojournLaw,
};
pub use value::{value_iterate, ConcaveEnvelope, SolveOptions, SolveReport};
