//! Optimistic and pessimistic Gaussian-mixture likelihood bounds.
//!
//! The nominal class-conditional model is the smoothed empirical mixture
//! `N^{-1} sum_i N(x_i, sigma^2 I)`. Its ambiguity set contains every mixture
//! whose components can be coupled to the nominal ones with ground cost at
//! most `epsilon`. Because the coupling constraint binds component by
//! component, each bound splits into independent per-sample problems, and
//! each of those reduces to a two-dimensional problem solved by projected
//! gradient descent ([`pgd::pgd_2d`]).

pub mod bounds;
pub mod cache;
pub mod pgd;
pub mod recovery;
pub mod subproblem;

pub use bounds::{
    nominal_log_likelihood, optimistic_bound, optimistic_likelihood, pessimistic_bound, pessimistic_likelihood,
    BoundSolver, LikelihoodBound,
};
pub use cache::AlphaCache;
pub use pgd::{
    grid_oracle_2d, pgd_2d, pgd_nd, project_quarter_disk, Pgd2dOutcome, PgdOutcome, PgdParams, PgdStatus, Point2,
};
pub use recovery::{
    build_orthonormal_basis, gaussian_ground_cost, recover_optimistic_component, recover_pessimistic_component,
    BasisPosition, WorstCaseComponent,
};
pub use subproblem::{
    optimistic_alpha, optimistic_alpha_pgd, optimistic_alpha_starts, optimistic_alpha_with, pessimistic_alpha,
    pessimistic_alpha_starts, pessimistic_alpha_with, AmbiguityBall, ComponentSolution, OptimisticSubproblem,
    PessimisticSubproblem, DEFAULT_ZETA,
};
