//! varflow: exact solvers and particle methods for variance-optimal control
//! of N interacting agents and their mean-field limit.
//!
//! Agents move on the line with velocity controls constrained to [-1, 1] and
//! pay a quadratic running cost; the terminal payoff is the population
//! variance scaled by 1/(2 lambda). For lambda > T or lambda < 0 the optimal
//! controls are an explicit Lipschitz feedback of the initial position; for
//! 0 < lambda <= T they are bang-bang and no Lipschitz selection exists. The
//! crate solves the N-agent problem exactly, transports particle measures
//! under the limiting feedback fields, and quantifies the N -> infinity
//! convergence rate.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod field;
pub mod flow;
pub mod measure;
pub mod output;
pub mod pmp;
pub mod problem;

pub use error::{Error, Result};
pub use experiments::{
    convergence_study, dichotomy_map, fit_log_decay, gronwall_sweep, lipschitz_gap_scan,
    singular_limit_cost, ConvergenceRow, DichotomyCell, DichotomyVerdict, DichotomyWitness,
    GapRow, GapScanReport, GronwallReport, GronwallRow,
};
pub use field::{
    eval_field, mollify_sign_field, optimal_feedback, FeedbackField, TabulatedField,
};
pub use flow::{
    analytic_flow, continuous_cost, flow_map, gronwall_bound_check, integrate_flow,
    solve_continuity, weak_form_residual, BumpTest, FlowResult, ParticleEnsemble, SpaceTimeTest,
};
pub use measure::Measure1D;
pub use output::{emit_figure_data, write_document, FigureKind, OutputFormat, TableDocument};
pub use pmp::{
    classify_regime, closed_form_controls, costates, discrete_cost, fixed_point_candidates,
    hamiltonian, lipschitz_constant, select_optimal_branch, solve_closed_form, solve_fixed_point,
    trajectories, ControlVector, PMPSolution, Regime,
};
pub use problem::ProblemParams;
