//! Characteristic flows of feedback fields and the particle solution of the
//! continuity equation.
//!
//! Everything here reduces to per-particle ODEs dy/dt = u(t, y) integrated by
//! the classical 4th-order Runge-Kutta scheme. On the branches that matter the
//! scheme is exact up to round-off: along an interior characteristic of the
//! saturated linear field every stage evaluates to the same constant control,
//! and saturated branches are affine. The sign field is transported by its
//! exact affine motion instead of being integrated.

use crate::error::{Error, Result};
use crate::field::FeedbackField;
use crate::measure::{KbnSum, Measure1D};
use crate::pmp::{classify_regime, CostBreakdown};
use crate::problem::ProblemParams;

/// Number of midpoint samples used when a uniform measure must be discretized
/// for flow-based comparisons.
const UNIFORM_FLOW_SAMPLES: usize = 4096;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {x}"
        )));
    }
    Ok(())
}

/// Steps covering `span` at width close to `step_dt`.
fn num_steps(span: f64, step_dt: f64) -> usize {
    ((span / step_dt).round() as usize).max(1)
}

#[inline]
fn rk4_step(field: &FeedbackField, t: f64, y: f64, h: f64) -> Result<f64> {
    let k1 = field.eval(t, y)?;
    let k2 = field.eval(t + 0.5 * h, y + 0.5 * h * k1)?;
    let k3 = field.eval(t + 0.5 * h, y + 0.5 * h * k2)?;
    let k4 = field.eval(t + h, y + h * k3)?;
    Ok(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Characteristic through x0, sampled at every integrator node on [0, horizon].
pub fn integrate_flow(
    field: &FeedbackField,
    x0: f64,
    horizon: f64,
    step_dt: f64,
) -> Result<Vec<(f64, f64)>> {
    check_positive("horizon", horizon)?;
    check_positive("step_dt", step_dt)?;
    let k = num_steps(horizon, step_dt);
    let h = horizon / k as f64;
    let mut path = Vec::with_capacity(k + 1);
    let mut y = x0;
    path.push((0.0, y));
    for i in 0..k {
        let t = horizon * i as f64 / k as f64;
        y = rk4_step(field, t, y, h)?;
        path.push((horizon * (i + 1) as f64 / k as f64, y));
    }
    Ok(path)
}

/// Endpoint of the characteristic through x0 at time `t`.
pub fn flow_map(field: &FeedbackField, x0: f64, t: f64, step_dt: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(x0);
    }
    Ok(integrate_flow(field, x0, t, step_dt)?.last().unwrap().1)
}

/// Closed-form characteristic of the optimal saturated-linear field:
/// interior start |x0| <= |lambda - T| rides y = x0 (lambda - T + t)/(lambda - T),
/// a saturated start moves at unit speed away from (lambda > T) or toward
/// (lambda < 0) the origin. Continuous across the branch boundary.
pub fn analytic_flow(params: &ProblemParams, t: f64, x0: f64) -> Result<f64> {
    if !classify_regime(params).has_lipschitz_feedback() {
        return Err(Error::UnsupportedRegime(format!(
            "no analytic flow for lambda = {} in (0, T]; integrate a mollified field or use the exact sign motion",
            params.lambda()
        )));
    }
    if !(0.0..=params.horizon()).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "flow time {t} outside [0, {}]",
            params.horizon()
        )));
    }
    if !x0.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite start {x0}")));
    }
    let a = params.lambda() - params.horizon();
    if x0.abs() <= a.abs() {
        Ok(x0 * (a + t) / a)
    } else {
        Ok(x0 + t * (x0 * a).signum())
    }
}

/// Deterministic discretization of an initial measure: midpoint-quantile
/// particles with equal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
    source: &'static str,
}

impl ParticleEnsemble {
    pub fn from_measure(mu0: &Measure1D, num_particles: usize) -> Result<Self> {
        Ok(Self {
            positions: mu0.sample(num_particles)?,
            source: mu0.label(),
        })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Uniform weight of each particle.
    pub fn weight(&self) -> f64 {
        1.0 / self.positions.len() as f64
    }

    pub fn source(&self) -> &'static str {
        self.source
    }
}

/// Particle trajectories of the continuity equation.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    times: Vec<f64>,
    /// paths[i][k] = position of particle i at times[k].
    paths: Vec<Vec<f64>>,
    method: &'static str,
    step_dt: f64,
}

impl FlowResult {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn paths(&self) -> &[Vec<f64>] {
        &self.paths
    }

    pub fn num_particles(&self) -> usize {
        self.paths.len()
    }

    pub fn method(&self) -> &'static str {
        self.method
    }

    pub fn step_dt(&self) -> f64 {
        self.step_dt
    }

    pub fn positions_at(&self, node: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[node]).collect()
    }

    pub fn final_positions(&self) -> Vec<f64> {
        self.positions_at(self.times.len() - 1)
    }

    pub fn measure_at(&self, node: usize) -> Result<Measure1D> {
        Measure1D::empirical(self.positions_at(node))
    }

    pub fn final_measure(&self) -> Result<Measure1D> {
        self.measure_at(self.times.len() - 1)
    }
}

fn sign_initial_check(positions: &[f64]) -> Result<()> {
    if positions.iter().any(|&y| y == 0.0) {
        return Err(Error::InvalidParameter(
            "initial measure charges y = 0; sign-field transport is undefined there".to_string(),
        ));
    }
    Ok(())
}

/// Evolve `num_particles` midpoint samples of mu0 along the field on
/// [0, horizon]. The sign field is moved by its exact affine motion; all other
/// fields are integrated with RK4. Particle order must survive the flow.
pub fn solve_continuity(
    field: &FeedbackField,
    mu0: &Measure1D,
    num_particles: usize,
    horizon: f64,
    step_dt: f64,
) -> Result<FlowResult> {
    check_positive("horizon", horizon)?;
    check_positive("step_dt", step_dt)?;
    let ensemble = ParticleEnsemble::from_measure(mu0, num_particles)?;
    let k = num_steps(horizon, step_dt);
    let h = horizon / k as f64;
    let times: Vec<f64> = (0..=k).map(|i| horizon * i as f64 / k as f64).collect();

    let (paths, method) = match field {
        FeedbackField::SignWithGap { .. } => {
            sign_initial_check(ensemble.positions())?;
            let paths = ensemble
                .positions()
                .iter()
                .map(|&y0| {
                    let s = if y0 > 0.0 { 1.0 } else { -1.0 };
                    times.iter().map(|&t| y0 + t * s).collect()
                })
                .collect();
            (paths, "exact-sign")
        }
        _ => {
            let mut paths = Vec::with_capacity(ensemble.len());
            for &y0 in ensemble.positions() {
                let mut row = Vec::with_capacity(k + 1);
                let mut y = y0;
                row.push(y);
                for (i, &t) in times[..k].iter().enumerate() {
                    let _ = i;
                    y = rk4_step(field, t, y, h)?;
                    row.push(y);
                }
                paths.push(row);
            }
            (paths, "rk4")
        }
    };

    let result = FlowResult {
        times,
        paths,
        method,
        step_dt: h,
    };
    let finals = result.final_positions();
    if finals.windows(2).any(|w| w[0] > w[1] + 1e-12) {
        return Err(Error::Inconsistency(
            "particle order not preserved by the flow; step size too coarse for this field"
                .to_string(),
        ));
    }
    Ok(result)
}

/// Mean-field cost of driving mu0 along the field on [0, T]:
/// running (1/2) integral of the mean squared control (trapezoidal in time),
/// terminal -Var(mu(T))/(2 lambda). Streams over particles without storing
/// paths.
pub fn continuous_cost(
    params: &ProblemParams,
    field: &FeedbackField,
    mu0: &Measure1D,
    num_particles: usize,
    step_dt: f64,
) -> Result<CostBreakdown> {
    check_positive("step_dt", step_dt)?;
    let horizon = params.horizon();
    let ensemble = ParticleEnsemble::from_measure(mu0, num_particles)?;
    let w = ensemble.weight();

    let (running, finals) = match field {
        FeedbackField::SignWithGap { .. } => {
            sign_initial_check(ensemble.positions())?;
            // Controls are identically +-1, so the running integrand is 1.
            let finals: Vec<f64> = ensemble
                .positions()
                .iter()
                .map(|&y0| y0 + horizon * if y0 > 0.0 { 1.0 } else { -1.0 })
                .collect();
            (0.5 * horizon, finals)
        }
        _ => {
            let k = num_steps(horizon, step_dt);
            let h = horizon / k as f64;
            let mut ys: Vec<f64> = ensemble.positions().to_vec();
            // Trapezoidal accumulation of E[u^2](t): half weight at the ends.
            let mut integral = KbnSum::default();
            for i in 0..=k {
                let t = horizon * i as f64 / k as f64;
                let mut node = KbnSum::default();
                for y in &ys {
                    let u = field.eval(t, *y)?;
                    node.add(u * u);
                }
                let trap_w = if i == 0 || i == k { 0.5 } else { 1.0 };
                integral.add(trap_w * h * w * node.total());
                if i < k {
                    for y in ys.iter_mut() {
                        *y = rk4_step(field, t, *y, h)?;
                    }
                }
            }
            (0.5 * integral.total(), ys)
        }
    };

    let terminal = -Measure1D::empirical(finals)?.variance() / (2.0 * params.lambda());
    Ok(CostBreakdown {
        running,
        terminal,
        total: running + terminal,
    })
}

/// Smooth space-time test function with compact support.
pub trait SpaceTimeTest {
    fn value(&self, t: f64, x: f64) -> f64;
    fn partial_t(&self, t: f64, x: f64) -> f64;
    fn partial_x(&self, t: f64, x: f64) -> f64;
}

/// Product bump supported on (t0, t1) x (x0, x1):
/// xi(t, x) = beta(s_t) beta(s_x) with beta(s) = exp(-1/(s(1-s))).
#[derive(Debug, Clone, Copy)]
pub struct BumpTest {
    t0: f64,
    t1: f64,
    x0: f64,
    x1: f64,
}

impl BumpTest {
    pub fn new(t0: f64, t1: f64, x0: f64, x1: f64) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite() && x0.is_finite() && x1.is_finite())
            || t0 >= t1
            || x0 >= x1
        {
            return Err(Error::InvalidParameter(
                "bump support needs t0 < t1 and x0 < x1".to_string(),
            ));
        }
        Ok(Self { t0, t1, x0, x1 })
    }

    // beta and beta' vanish to all orders at the edges; below q = s(1-s) of
    // 2e-3 the true values are under 1e-217, so returning exact zeros there
    // avoids 0 * inf while changing nothing at working precision.
    fn beta(s: f64) -> f64 {
        let q = s * (1.0 - s);
        if !(s > 0.0 && s < 1.0) || q < 2e-3 {
            0.0
        } else {
            (-1.0 / q).exp()
        }
    }

    fn beta_prime(s: f64) -> f64 {
        let q = s * (1.0 - s);
        if !(s > 0.0 && s < 1.0) || q < 2e-3 {
            0.0
        } else {
            (-1.0 / q).exp() * (1.0 - 2.0 * s) / (q * q)
        }
    }
}

impl SpaceTimeTest for BumpTest {
    fn value(&self, t: f64, x: f64) -> f64 {
        let st = (t - self.t0) / (self.t1 - self.t0);
        let sx = (x - self.x0) / (self.x1 - self.x0);
        Self::beta(st) * Self::beta(sx)
    }

    fn partial_t(&self, t: f64, x: f64) -> f64 {
        let st = (t - self.t0) / (self.t1 - self.t0);
        let sx = (x - self.x0) / (self.x1 - self.x0);
        Self::beta_prime(st) / (self.t1 - self.t0) * Self::beta(sx)
    }

    fn partial_x(&self, t: f64, x: f64) -> f64 {
        let st = (t - self.t0) / (self.t1 - self.t0);
        let sx = (x - self.x0) / (self.x1 - self.x0);
        Self::beta(st) * Self::beta_prime(sx) / (self.x1 - self.x0)
    }
}

/// Distributional residual of the continuity equation along computed paths:
/// integral over [0, T] of the particle mean of dt_xi + dx_xi * u, trapezoidal
/// at a stride of `quadrature_dt` (rounded to a multiple of the flow step).
/// Vanishes as step and 1/particles shrink when xi has compact time support.
pub fn weak_form_residual(
    flow: &FlowResult,
    field: &FeedbackField,
    test_fn: &dyn SpaceTimeTest,
    quadrature_dt: f64,
) -> Result<f64> {
    check_positive("quadrature_dt", quadrature_dt)?;
    let times = flow.times();
    let last = times.len() - 1;
    let stride = ((quadrature_dt / flow.step_dt()).round() as usize).clamp(1, last);
    let w = 1.0 / flow.num_particles() as f64;

    let node_mean = |k: usize| -> Result<f64> {
        let t = times[k];
        let mut acc = KbnSum::default();
        for path in flow.paths() {
            let y = path[k];
            let u = field.eval(t, y)?;
            acc.add(test_fn.partial_t(t, y) + test_fn.partial_x(t, y) * u);
        }
        Ok(w * acc.total())
    };

    // Trapezoid over the strided (possibly ragged at the end) node sequence.
    let mut integral = KbnSum::default();
    let mut prev_k = 0usize;
    let mut prev_g = node_mean(0)?;
    let mut k = stride;
    loop {
        let k_here = k.min(last);
        let g = node_mean(k_here)?;
        integral.add(0.5 * (times[k_here] - times[prev_k]) * (prev_g + g));
        if k_here == last {
            break;
        }
        prev_k = k_here;
        prev_g = g;
        k += stride;
    }
    Ok(integral.total())
}

/// Replace a uniform measure by its midpoint-sample empirical discretization;
/// empirical measures pass through unchanged. The Gronwall comparison is then
/// exact for the discretized pair.
fn discretize_for_flow(mu: &Measure1D) -> Result<Measure1D> {
    match mu {
        Measure1D::Empirical(_) => Ok(mu.clone()),
        Measure1D::Uniform(_) => Measure1D::empirical(mu.sample(UNIFORM_FLOW_SAMPLES)?),
    }
}

fn evolve_empirical(
    field: &FeedbackField,
    mu: &Measure1D,
    t: f64,
    step_dt: f64,
) -> Result<Measure1D> {
    let atoms = match mu {
        Measure1D::Empirical(e) => e.atoms().to_vec(),
        Measure1D::Uniform(_) => unreachable!("discretized before evolution"),
    };
    let mut out = Vec::with_capacity(atoms.len());
    for x0 in atoms {
        out.push(flow_map(field, x0, t, step_dt)?);
    }
    Measure1D::empirical(out)
}

/// One Gronwall stability comparison: lhs = W1 of the two flowed measures at
/// time t, rhs = e^{Lt} W1 of the inputs. The caller supplies L >= the field's
/// spatial Lipschitz constant; the contract is lhs <= rhs.
pub fn gronwall_bound_check(
    field: &FeedbackField,
    mu: &Measure1D,
    nu: &Measure1D,
    t: f64,
    lipschitz: f64,
    step_dt: f64,
) -> Result<(f64, f64)> {
    if field.space_lipschitz().is_none() {
        return Err(Error::InvalidParameter(
            "field is not Lipschitz in space; the Gronwall bound does not apply".to_string(),
        ));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter(format!("bad comparison time {t}")));
    }
    check_positive("step_dt", step_dt)?;
    let mu = discretize_for_flow(mu)?;
    let nu = discretize_for_flow(nu)?;
    let rhs = (lipschitz * t).exp() * mu.wasserstein1(&nu);
    let lhs = if t == 0.0 {
        mu.wasserstein1(&nu)
    } else {
        evolve_empirical(field, &mu, t, step_dt)?.wasserstein1(&evolve_empirical(field, &nu, t, step_dt)?)
    };
    Ok((lhs, rhs))
}
