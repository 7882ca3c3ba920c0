//! Exact solution of the N-agent variance-optimization problem.
//!
//! With constant controls the state is x_i(t) = x_i(0) + t*u_i, the costate is
//! constant, and optimality reduces to the scalar fixed-point equation
//! u = pi((x0 + T*u)/lambda) per agent. The equation has one, two, or three
//! solutions depending on the regime; fixed_point_candidates enumerates the
//! three analytic branches and select_optimal_branch picks the cost minimizer.
//! Fixed-point iteration is deliberately avoided: on the interior branch the
//! map has slope T/lambda, which exceeds 1 precisely in the contested regime.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::Measure1D;
use crate::problem::{project_control, ProblemParams};

/// Parameter regime; exactly one per valid (lambda, T).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// lambda > T: variance maximization with a unique interior/saturated control.
    SupercriticalMax,
    /// lambda = T: bang-bang controls sign(x0).
    CriticalMax,
    /// 0 < lambda < T: bang-bang controls sign(x0); multiple fixed points.
    SubcriticalMax,
    /// lambda < 0: variance minimization, controls oppose position.
    Minimization,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::SupercriticalMax => "supercritical-max",
            Regime::CriticalMax => "critical-max",
            Regime::SubcriticalMax => "subcritical-max",
            Regime::Minimization => "minimization",
        }
    }

    /// True when the limiting feedback field is Lipschitz in space.
    pub fn has_lipschitz_feedback(&self) -> bool {
        matches!(self, Regime::SupercriticalMax | Regime::Minimization)
    }
}

pub fn classify_regime(params: &ProblemParams) -> Regime {
    let (l, t) = (params.lambda(), params.horizon());
    if l > t {
        Regime::SupercriticalMax
    } else if l == t {
        Regime::CriticalMax
    } else if l > 0.0 {
        Regime::SubcriticalMax
    } else {
        Regime::Minimization
    }
}

/// Per-agent constant controls, each in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlVector {
    values: Vec<f64>,
}

impl ControlVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|u| !(-1.0..=1.0).contains(u)) {
            return Err(Error::InvalidParameter(
                "controls must lie in [-1, 1]".to_string(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub running: f64,
    pub terminal: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PMPSolution {
    pub regime: Regime,
    pub controls: ControlVector,
    pub costates: Vec<f64>,
    pub final_positions: Vec<f64>,
    pub cost: CostBreakdown,
}

/// Positions sampled on a uniform time grid; rows are agents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
}

/// Closed-form optimal control for one agent starting at x0.
pub fn closed_form_control(lambda: f64, horizon: f64, x0: f64) -> f64 {
    if lambda > 0.0 && lambda <= horizon {
        if x0 >= 0.0 {
            1.0
        } else {
            -1.0
        }
    } else {
        // lambda > T and lambda < 0 share one formula: clamp(x0/(lambda-T)).
        project_control(x0 / (lambda - horizon))
    }
}

/// Closed-form optimal controls on the symmetric initial grid.
pub fn closed_form_controls(params: &ProblemParams) -> ControlVector {
    let values = params
        .initial_grid()
        .iter()
        .map(|&x0| closed_form_control(params.lambda(), params.horizon(), x0))
        .collect();
    ControlVector { values }
}

/// All fixed points of u = pi((x0 + T*u)/lambda), sorted ascending.
///
/// Enumerates the three analytic branches with exact boundary comparisons:
/// interior u = x0/(lambda-T) (valid iff |u| <= 1), saturated +1 (valid iff
/// (x0+T)/lambda >= 1), saturated -1 (valid iff (x0-T)/lambda <= -1).
pub fn fixed_point_candidates(params: &ProblemParams, x0: f64) -> Result<Vec<f64>> {
    let (l, t) = (params.lambda(), params.horizon());
    let mut out = Vec::with_capacity(3);
    if (x0 - t) / l <= -1.0 {
        out.push(-1.0);
    }
    if l != t {
        let u = x0 / (l - t);
        if (-1.0..=1.0).contains(&u) {
            out.push(u);
        }
    }
    if (x0 + t) / l >= 1.0 {
        out.push(1.0);
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite controls"));
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    if out.is_empty() {
        return Err(Error::Inconsistency(format!(
            "no fixed point found for lambda = {l}, T = {t}, x0 = {x0}"
        )));
    }
    Ok(out)
}

/// Per-agent cost contribution of a constant control, valid under the
/// mean-zero reduction: c(u) = (T/2)u^2 - (x0 + T*u)^2/(2 lambda).
pub fn agent_cost(lambda: f64, horizon: f64, x0: f64, u: f64) -> f64 {
    let xf = x0 + horizon * u;
    0.5 * horizon * u * u - xf * xf / (2.0 * lambda)
}

/// Cost-minimizing candidate; ties (within 1e-12) broken toward larger |u|.
pub fn select_optimal_branch(params: &ProblemParams, x0: f64, candidates: &[f64]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Inconsistency(
            "empty candidate list in branch selection".to_string(),
        ));
    }
    let cost = |u: f64| agent_cost(params.lambda(), params.horizon(), x0, u);
    let mut best = candidates[0];
    let mut best_cost = cost(best);
    for &u in &candidates[1..] {
        let c = cost(u);
        if c < best_cost - 1e-12 || ((c - best_cost).abs() <= 1e-12 && u.abs() > best.abs()) {
            best = u;
            best_cost = c;
        }
    }
    Ok(best)
}

/// Full PMP solution from the closed-form controls.
pub fn solve_closed_form(params: &ProblemParams) -> PMPSolution {
    let controls = closed_form_controls(params);
    assemble_solution(params, controls)
}

/// Full PMP solution from branch enumeration + cost selection per agent;
/// independent of the closed forms, used to cross-check them.
pub fn solve_fixed_point(params: &ProblemParams) -> Result<PMPSolution> {
    let grid = params.initial_grid();
    let mut values = Vec::with_capacity(grid.len());
    for &x0 in &grid {
        let cands = fixed_point_candidates(params, x0)?;
        values.push(select_optimal_branch(params, x0, &cands)?);
    }
    // The per-agent decoupling above is only valid if the selected vector has
    // zero mean; the symmetric grid guarantees it pairwise, so a violation is
    // a bug. Checked pair-by-pair to avoid summation roundoff at large N.
    let n = values.len();
    for i in 0..n / 2 {
        let pair = values[i] + values[n - 1 - i];
        if pair.abs() > 1e-12 {
            return Err(Error::Inconsistency(format!(
                "selected controls break mean-zero symmetry at agent {i}: {pair:e}"
            )));
        }
    }
    Ok(assemble_solution(params, ControlVector { values }))
}

fn assemble_solution(params: &ProblemParams, controls: ControlVector) -> PMPSolution {
    let grid = params.initial_grid();
    let t = params.horizon();
    let final_positions: Vec<f64> = grid
        .iter()
        .zip(controls.values())
        .map(|(&x0, &u)| x0 + t * u)
        .collect();
    let costates = costates(params, &final_positions);
    let cost = discrete_cost(params, &grid, &controls);
    PMPSolution {
        regime: classify_regime(params),
        controls,
        costates,
        final_positions,
        cost,
    }
}

/// H(x, p, u) = sum_i (p_i u_i - u_i^2 / (2N)).
pub fn hamiltonian(params: &ProblemParams, p: &[f64], u: &[f64]) -> Result<f64> {
    let n = params.num_agents();
    if p.len() != n || u.len() != n {
        return Err(Error::LengthMismatch(format!(
            "hamiltonian expects length {n}, got p: {}, u: {}",
            p.len(),
            u.len()
        )));
    }
    let two_n = 2.0 * n as f64;
    Ok(p.iter()
        .zip(u)
        .map(|(&pi, &ui)| pi * ui - ui * ui / two_n)
        .sum())
}

/// Constant costates p_i = (x_i(T) - mean(x(T))) / (N lambda).
pub fn costates(params: &ProblemParams, final_positions: &[f64]) -> Vec<f64> {
    let n = final_positions.len() as f64;
    let mean = final_positions.iter().sum::<f64>() / n;
    let scale = 1.0 / (n * params.lambda());
    final_positions.iter().map(|&x| scale * (x - mean)).collect()
}

/// Cost of constant controls: running (T/(2N)) sum u_i^2, terminal
/// -Var(x0 + T u)/(2 lambda).
pub fn discrete_cost(params: &ProblemParams, x0: &[f64], controls: &ControlVector) -> CostBreakdown {
    let t = params.horizon();
    let n = x0.len() as f64;
    let running = t / (2.0 * n) * controls.values().iter().map(|u| u * u).sum::<f64>();
    let finals: Vec<f64> = x0
        .iter()
        .zip(controls.values())
        .map(|(&x, &u)| x + t * u)
        .collect();
    let var = Measure1D::empirical(finals)
        .expect("final positions are finite")
        .variance();
    let terminal = -var / (2.0 * params.lambda());
    CostBreakdown {
        running,
        terminal,
        total: running + terminal,
    }
}

/// Exact affine trajectories x_i(t_k) = x_i(0) + t_k u_i on a uniform grid.
pub fn trajectories(
    x0: &[f64],
    controls: &ControlVector,
    horizon: f64,
    num_steps: usize,
) -> Result<Trajectory> {
    if num_steps == 0 {
        return Err(Error::InvalidParameter(
            "trajectories need at least one step".to_string(),
        ));
    }
    if x0.len() != controls.len() {
        return Err(Error::LengthMismatch(format!(
            "positions ({}) vs controls ({})",
            x0.len(),
            controls.len()
        )));
    }
    let times: Vec<f64> = (0..=num_steps)
        .map(|k| horizon * k as f64 / num_steps as f64)
        .collect();
    let positions = x0
        .iter()
        .zip(controls.values())
        .map(|(&x, &u)| times.iter().map(|&t| x + t * u).collect())
        .collect();
    Ok(Trajectory { times, positions })
}

/// L(t) = max over pairs of |u_i - u_j| / |x_i(t) - x_j(t)| by full O(N^2)
/// scan; coincident positions with distinct controls yield +infinity.
pub fn lipschitz_constant(traj: &Trajectory, controls: &ControlVector, t: f64) -> f64 {
    let t0 = traj.times[0];
    let x0: Vec<f64> = traj.positions.iter().map(|row| row[0]).collect();
    let u = controls.values();
    let pos: Vec<f64> = x0
        .iter()
        .zip(u)
        .map(|(&x, &ui)| x + (t - t0) * ui)
        .collect();
    let mut best = 0.0_f64;
    for i in 0..pos.len() {
        for j in (i + 1)..pos.len() {
            let du = (u[i] - u[j]).abs();
            let dx = (pos[i] - pos[j]).abs();
            if dx == 0.0 {
                if du > 0.0 {
                    return f64::INFINITY;
                }
            } else {
                best = best.max(du / dx);
            }
        }
    }
    best
}
