//! Bounded solutions of the corrector ODE `a(x) f' + H(x, f) = λ`.

pub mod band;
pub mod extremal;
pub mod insert;
pub mod ode;
pub mod solution;

pub use band::{max_h_at_zero, min_h, p_bounds, p_bounds_with, AdmissibleBand};
pub use extremal::{
    bounded_solution_window, estimate_lambda0, safety_box, stationary_branches, Branches,
    CellOptions, CorrectorRhs, Extremal, Lambda0Estimate,
};
pub use insert::{insert_between, Fence, Funnel};
pub use ode::{integrate, Exit, IvpOptions, Rhs, Trajectory};
pub use solution::{
    check_ordering, corrector_potential, extrema_diagnostic, CorrectorPotential, CorrectorSolution,
    Ordering, Role,
};
