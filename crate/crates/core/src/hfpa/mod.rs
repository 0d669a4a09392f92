//! Node mapping by a hybrid of a genetic algorithm and flower pollination.
//!
//! Each iteration first replaces individuals whose lifespan ran out, then
//! takes one of two branches:
//!
//! * global: keep the better half and refill it with offspring of random
//!   parent pairs, crossed under a logistic-map mask;
//! * local: move every individual one id-step along the sign of the
//!   difference of two others, keeping the move only if the rating-blended
//!   fitness improves.
//!
//! A plain GA (tournament selection, single-point crossover, per-gene
//! mutation) is available through [`SolverParams::baseline_mode`].

pub mod chaos;
pub mod operators;
mod solver;

pub use chaos::{chaos_mask, mask_from_sequence, ChaosError, ChaosSource, ChaosState, CHAOS_U};
pub use operators::{
    apply_pollen, chaos_crossover, elite_indices, feasibility_repair, is_feasible, lifespan_of, random_assignment,
    raw_pollen, recycle_individual, reinject, select_elite, self_pollinate, sign_pollen, single_point_crossover,
    Individual,
};
pub use solver::{solve_nodes, Phase, SolveError, SolveOutcome, SolveStats, SolverParams, TracePoint};
