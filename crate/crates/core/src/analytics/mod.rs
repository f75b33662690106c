//! Analytic side: `Psi`, `alpha*`, ladder-height statistics and the exact
//! tail constants.

pub mod alpha;
pub mod constants;
pub mod implicit;
pub mod ladder;
pub mod psi;
pub mod quadrature;

pub use alpha::{solve_alpha_at_level, solve_alpha_star, AlphaStar};
pub use constants::{heavy_traffic_prediction, mg1_stop_alpha, mg1_stop_constant, HeavyTrafficLaw};
pub use implicit::{mbp_implicit_constant, mbp_implicit_constant_sampled, ImplicitConstant};
pub use ladder::{
    cycle_max_constant, estimate_ladder_stats, ladder_rmp_samples, estimate_ladder_stats_with, goldie_constant_rmp, Estimate, LadderStats,
};
pub use psi::{psi_eval, PsiBacking, PsiFunction};
