//! Quantitative experiments: convergence of the N-agent value to its
//! mean-field limit, Gronwall stability sweeps over random measure pairs, the
//! cost gap left by mollifying the singular feedback, and the regime
//! dichotomy table.

use crate::error::{Error, Result};
use crate::field::{mollify_sign_field, FeedbackField};
use crate::flow::{continuous_cost, flow_map, gronwall_bound_check};
use crate::measure::Measure1D;
use crate::pmp::{classify_regime, discrete_cost, ControlVector, Regime};
use crate::problem::{project_control, ProblemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// One row of the N -> infinity convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub num_agents: usize,
    /// W1 distance from the N-point initial grid to U(-1, 1).
    pub w1_initial: f64,
    pub cost_n: f64,
    pub cost_limit: f64,
    pub abs_error: f64,
}

/// Evaluate the N-agent cost of the controls induced by `field` for each N in
/// `n_list`, against the mean-field cost of the same field started from
/// U(-1, 1). Each agent takes the constant control matching the endpoint of
/// the field's characteristic through its grid point, i.e. the time average
/// of the feedback along that characteristic.
pub fn convergence_study(
    params: &ProblemParams,
    n_list: &[usize],
    field: &FeedbackField,
    limit_particles: usize,
    step_dt: f64,
) -> Result<Vec<ConvergenceRow>> {
    if field.space_lipschitz().is_none() {
        return Err(Error::InvalidParameter(
            "convergence study needs a field that is Lipschitz in space".to_string(),
        ));
    }
    if n_list.is_empty() {
        return Err(Error::InvalidParameter(
            "agent-count list must not be empty".to_string(),
        ));
    }
    let reference = Measure1D::uniform(-1.0, 1.0)?;
    let cost_limit = continuous_cost(params, field, &reference, limit_particles, step_dt)?.total;
    let horizon = params.horizon();

    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let params_n = ProblemParams::new(params.lambda(), horizon, n)?;
        let grid = params_n.initial_grid();
        let mut controls = Vec::with_capacity(n);
        for &x0 in &grid {
            let end = flow_map(field, x0, horizon, step_dt)?;
            controls.push(project_control((end - x0) / horizon));
        }
        let controls = ControlVector::new(controls)?;
        let cost_n = discrete_cost(&params_n, &grid, &controls).total;
        let w1_initial = Measure1D::empirical(grid)?.wasserstein1(&reference);
        rows.push(ConvergenceRow {
            num_agents: n,
            w1_initial,
            cost_n,
            cost_limit,
            abs_error: (cost_n - cost_limit).abs(),
        });
    }
    Ok(rows)
}

/// Least-squares decay order p of y against x: fits log y = a - p log x.
pub fn fit_log_decay(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter(
            "decay fit needs two or more matched samples".to_string(),
        ));
    }
    if xs.iter().chain(ys.iter()).any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::InvalidParameter(
            "decay fit needs strictly positive finite samples".to_string(),
        ));
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "decay fit needs at least two distinct x values".to_string(),
        ));
    }
    Ok(-sxy / sxx)
}

/// One slope of the mollification scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRow {
    pub slope_l: f64,
    pub cost_mollified: f64,
    pub limit_cost: f64,
    /// cost_mollified - limit_cost; positive, shrinking as the slope grows.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapScanReport {
    pub rows: Vec<GapRow>,
    /// Fitted decay order of the gap in the slope.
    pub fitted_order: f64,
    /// Aitken extrapolation of the mollified costs to infinite slope.
    pub extrapolated_limit: f64,
}

/// Exact mean-field value in the singular regime 0 < lambda <= T started from
/// U(-1, 1): the bang-bang transport costs T/2 to run and spreads the mass to
/// second moment ((1+T)^3 - T^3)/3.
pub fn singular_limit_cost(params: &ProblemParams) -> Result<f64> {
    if classify_regime(params).has_lipschitz_feedback() {
        return Err(Error::UnsupportedRegime(format!(
            "singular limit applies to 0 < lambda <= T only; got lambda = {}",
            params.lambda()
        )));
    }
    let t = params.horizon();
    let second_moment = ((1.0 + t).powi(3) - t.powi(3)) / 3.0;
    Ok(t / 2.0 - second_moment / (2.0 * params.lambda()))
}

/// Cost of transporting U(-1, 1) by mollified sign fields of growing slope,
/// compared with the exact singular value the mollifications approach.
pub fn lipschitz_gap_scan(
    params: &ProblemParams,
    l_list: &[f64],
    num_particles: usize,
    step_dt: f64,
) -> Result<GapScanReport> {
    let limit_cost = singular_limit_cost(params)?;
    if l_list.len() < 3 {
        return Err(Error::InvalidParameter(
            "gap scan needs at least three slopes for extrapolation".to_string(),
        ));
    }
    if l_list.windows(2).any(|w| w[0] >= w[1]) || l_list[0] <= 0.0 {
        return Err(Error::InvalidParameter(
            "slopes must be positive and strictly increasing".to_string(),
        ));
    }
    let mu = Measure1D::uniform(-1.0, 1.0)?;
    let mut rows = Vec::with_capacity(l_list.len());
    for &l in l_list {
        let field = mollify_sign_field(l)?;
        // Resolve the interior band: keep the per-step slope increment small.
        let dt = step_dt.min(0.25 / l);
        let cost = continuous_cost(params, &field, &mu, num_particles, dt)?.total;
        rows.push(GapRow {
            slope_l: l,
            cost_mollified: cost,
            limit_cost,
            gap: cost - limit_cost,
        });
    }

    let xs: Vec<f64> = rows.iter().map(|r| r.slope_l).collect();
    let ys: Vec<f64> = rows
        .iter()
        .map(|r| r.gap.max(f64::MIN_POSITIVE))
        .collect();
    let fitted_order = fit_log_decay(&xs, &ys)?;

    let k = rows.len();
    let (c0, c1, c2) = (
        rows[k - 3].cost_mollified,
        rows[k - 2].cost_mollified,
        rows[k - 1].cost_mollified,
    );
    let curvature = c2 - 2.0 * c1 + c0;
    let extrapolated_limit = if curvature.abs() < 1e-300 {
        c2
    } else {
        c2 - (c2 - c1) * (c2 - c1) / curvature
    };

    Ok(GapScanReport {
        rows,
        fitted_order,
        extrapolated_limit,
    })
}

/// One stability comparison of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GronwallRow {
    pub pair_index: usize,
    pub time: f64,
    pub w1_evolved: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallReport {
    pub rows: Vec<GronwallRow>,
    pub max_ratio: f64,
}

/// Flow `num_pairs` random pairs of empirical measures (2 to 64 atoms drawn
/// from U(-1, 1)) and compare their W1 distance at five times against the
/// exponential bound with the field's own Lipschitz constant.
pub fn gronwall_sweep(
    field: &FeedbackField,
    num_pairs: usize,
    rng_seed: u64,
    horizon: f64,
    step_dt: f64,
) -> Result<GronwallReport> {
    let lipschitz = field.space_lipschitz().ok_or_else(|| {
        Error::InvalidParameter(
            "field is not Lipschitz in space; the Gronwall bound does not apply".to_string(),
        )
    })?;
    if num_pairs == 0 {
        return Err(Error::InvalidParameter(
            "sweep needs at least one pair".to_string(),
        ));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let draw = |rng: &mut ChaCha8Rng| -> Result<Measure1D> {
        let m = rng.gen_range(2..=64);
        Measure1D::empirical((0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };

    let mut rows = Vec::with_capacity(num_pairs * 5);
    let mut max_ratio: f64 = 0.0;
    for pair_index in 0..num_pairs {
        let mu = draw(&mut rng)?;
        let nu = draw(&mut rng)?;
        for j in 1..=5 {
            let time = horizon * j as f64 / 5.0;
            let (lhs, rhs) = gronwall_bound_check(field, &mu, &nu, time, lipschitz, step_dt)?;
            let ratio = if rhs == 0.0 {
                if lhs == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                lhs / rhs
            };
            max_ratio = max_ratio.max(ratio);
            rows.push(GronwallRow {
                pair_index,
                time,
                w1_evolved: lhs,
                bound: rhs,
                ratio,
            });
        }
    }
    Ok(GronwallReport { rows, max_ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DichotomyVerdict {
    LipschitzMinimizerExists,
    NoLipschitzMinimizer,
}

impl DichotomyVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            DichotomyVerdict::LipschitzMinimizerExists => "lipschitz_minimizer_exists",
            DichotomyVerdict::NoLipschitzMinimizer => "no_lipschitz_minimizer",
        }
    }
}

/// What certifies the verdict: a bound on the feedback's Lipschitz constant
/// that holds uniformly in N, or the fact that the best constant at time zero
/// is N - 1 and grows without bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DichotomyWitness {
    UniformBound { value: f64 },
    GrowsLinearlyWithN,
}

impl DichotomyWitness {
    pub fn describe(&self) -> String {
        match self {
            DichotomyWitness::UniformBound { value } => format!("uniform_bound={value}"),
            DichotomyWitness::GrowsLinearlyWithN => "grows_like_n_minus_1".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DichotomyCell {
    pub lambda: f64,
    pub regime: &'static str,
    pub verdict: DichotomyVerdict,
    pub witness: DichotomyWitness,
}

/// Classify each lambda at the given horizon. The verdict depends only on
/// lambda and T, never on the number of agents.
pub fn dichotomy_map(lambda_list: &[f64], horizon: f64) -> Result<Vec<DichotomyCell>> {
    if lambda_list.is_empty() {
        return Err(Error::InvalidParameter(
            "lambda list must not be empty".to_string(),
        ));
    }
    let mut cells = Vec::with_capacity(lambda_list.len());
    for &lambda in lambda_list {
        let params = ProblemParams::new(lambda, horizon, 2)?;
        let regime = classify_regime(&params);
        let (verdict, witness) = match regime {
            Regime::SupercriticalMax => (
                DichotomyVerdict::LipschitzMinimizerExists,
                DichotomyWitness::UniformBound {
                    value: 1.0 / (lambda - horizon),
                },
            ),
            Regime::Minimization => (
                DichotomyVerdict::LipschitzMinimizerExists,
                DichotomyWitness::UniformBound {
                    value: 1.0 / lambda.abs(),
                },
            ),
            Regime::CriticalMax | Regime::SubcriticalMax => (
                DichotomyVerdict::NoLipschitzMinimizer,
                DichotomyWitness::GrowsLinearlyWithN,
            ),
        };
        cells.push(DichotomyCell {
            lambda,
            regime: regime.label(),
            verdict,
            witness,
        });
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::optimal_feedback;

    fn params(lambda: f64, horizon: f64) -> ProblemParams {
        ProblemParams::new(lambda, horizon, 4).unwrap()
    }

    #[test]
    fn convergence_supercritical_frozen_rows() {
        let p = params(2.0, 1.0);
        let field = optimal_feedback(&p);
        let rows = convergence_study(&p, &[4, 16, 64], &field, 2000, 0.01).unwrap();
        let frozen = [-5.0 / 18.0, -17.0 / 90.0, -65.0 / 378.0];
        for (row, want) in rows.iter().zip(frozen) {
            assert!(
                (row.cost_n - want).abs() <= 1e-12,
                "N={}: {} vs {}",
                row.num_agents,
                row.cost_n,
                want
            );
            assert!((row.cost_limit + 1.0 / 6.0).abs() <= 1e-6);
            assert_eq!(row.abs_error, (row.cost_n - row.cost_limit).abs());
        }
        assert!(rows[0].w1_initial > rows[1].w1_initial);
        assert!(rows[1].w1_initial > rows[2].w1_initial);
    }

    #[test]
    fn convergence_zero_field_is_pure_variance() {
        let p = params(3.0, 1.0);
        let field = FeedbackField::zero(1.0, 2.0).unwrap();
        let rows = convergence_study(&p, &[4, 16], &field, 2000, 0.01).unwrap();
        for row in &rows {
            let n = row.num_agents as f64;
            let want = -(n + 1.0) / (6.0 * (n - 1.0) * 3.0);
            assert!((row.cost_n - want).abs() <= 1e-14, "{} vs {want}", row.cost_n);
        }
        assert!((rows[0].cost_limit + 1.0 / 18.0).abs() <= 1e-6);
    }

    #[test]
    fn convergence_minimization_error_decays_first_order() {
        let p = params(-1.0, 1.0);
        let field = optimal_feedback(&p);
        let ns = [4usize, 16, 64, 256, 1024, 4096];
        let rows = convergence_study(&p, &ns, &field, 20000, 0.01).unwrap();
        for row in &rows {
            let n = row.num_agents as f64;
            let want = (n + 1.0) / (12.0 * (n - 1.0));
            assert!((row.cost_n - want).abs() <= 1e-12);
        }
        assert!(rows[2].abs_error < rows[0].abs_error / 8.0);

        let xs: Vec<f64> = rows[1..].iter().map(|r| r.num_agents as f64).collect();
        let ys: Vec<f64> = rows[1..].iter().map(|r| r.abs_error).collect();
        let order = fit_log_decay(&xs, &ys).unwrap();
        assert!(order >= 0.9, "order {order}");
    }

    #[test]
    fn convergence_rejects_sign_field_and_empty_list() {
        let p = params(2.0, 1.0);
        let sign = FeedbackField::sign_with_gap(0.0).unwrap();
        assert!(convergence_study(&p, &[4], &sign, 100, 0.01).is_err());
        let field = optimal_feedback(&p);
        assert!(convergence_study(&p, &[], &field, 100, 0.01).is_err());
    }

    #[test]
    fn initial_grid_w1_frozen_and_decreasing() {
        let p = params(2.0, 1.0);
        let field = optimal_feedback(&p);
        let rows = convergence_study(&p, &[2, 4, 8, 16, 64, 256], &field, 100, 0.05).unwrap();
        assert!((rows[0].w1_initial - 0.5).abs() <= 1e-12);
        assert!((rows[1].w1_initial - 7.0 / 36.0).abs() <= 1e-12);
        for w in rows.windows(2) {
            assert!(w[0].w1_initial > w[1].w1_initial);
        }
    }

    #[test]
    fn fit_log_decay_recovers_exact_power() {
        let xs = [2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / (x * x)).collect();
        let p = fit_log_decay(&xs, &ys).unwrap();
        assert!((p - 2.0).abs() <= 1e-12);
        assert!(fit_log_decay(&[1.0], &[1.0]).is_err());
        assert!(fit_log_decay(&[1.0, 2.0], &[1.0, -1.0]).is_err());
        assert!(fit_log_decay(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn singular_limit_cost_frozen() {
        assert!((singular_limit_cost(&params(0.5, 1.0)).unwrap() + 11.0 / 6.0).abs() <= 1e-15);
        assert!((singular_limit_cost(&params(1.0, 1.0)).unwrap() + 2.0 / 3.0).abs() <= 1e-15);
        assert!(singular_limit_cost(&params(2.0, 1.0)).is_err());
        assert!(singular_limit_cost(&params(-1.0, 1.0)).is_err());
    }

    #[test]
    fn gap_scan_matches_closed_form() {
        let p = params(0.5, 1.0);
        let report = lipschitz_gap_scan(&p, &[2.0, 8.0, 32.0], 4000, 1e-3).unwrap();
        assert_eq!(report.rows.len(), 3);
        for row in &report.rows {
            assert!((row.limit_cost + 11.0 / 6.0).abs() <= 1e-12);
            assert!(row.gap > 0.0, "L={}: gap {}", row.slope_l, row.gap);
        }
        assert!(report.rows[0].gap > report.rows[1].gap);
        assert!(report.rows[1].gap > report.rows[2].gap);
        // gap(L) = (2/3)(1/L^2 - 1/L^3) once exp(-L) transients are negligible.
        assert!((report.rows[1].gap - 7.0 / 768.0).abs() <= 2e-5);
        assert!((report.rows[2].gap - 62.0 / 98304.0).abs() <= 1e-5);
        assert!(
            (1.5..2.1).contains(&report.fitted_order),
            "order {}",
            report.fitted_order
        );
        assert!(
            (report.extrapolated_limit + 11.0 / 6.0).abs() <= 1e-3,
            "extrapolated {}",
            report.extrapolated_limit
        );
    }

    #[test]
    fn gap_scan_validation() {
        let p = params(0.5, 1.0);
        assert!(lipschitz_gap_scan(&params(2.0, 1.0), &[2.0, 4.0, 8.0], 100, 0.01).is_err());
        assert!(lipschitz_gap_scan(&params(-1.0, 1.0), &[2.0, 4.0, 8.0], 100, 0.01).is_err());
        assert!(lipschitz_gap_scan(&p, &[2.0, 4.0], 100, 0.01).is_err());
        assert!(lipschitz_gap_scan(&p, &[4.0, 2.0, 8.0], 100, 0.01).is_err());
        assert!(lipschitz_gap_scan(&p, &[-1.0, 2.0, 4.0], 100, 0.01).is_err());
    }

    #[test]
    fn gronwall_sweep_stays_bounded() {
        let field = FeedbackField::saturated_linear(2.0, 1.0).unwrap();
        let report = gronwall_sweep(&field, 20, 11, 1.0, 0.01).unwrap();
        assert_eq!(report.rows.len(), 100);
        assert!(report.max_ratio <= 1.0 + 1e-9, "max {}", report.max_ratio);
        assert!(report.rows.iter().all(|r| r.ratio <= report.max_ratio));

        // Zero field, zero constant: the distance is conserved, bound is tight.
        let zero = FeedbackField::zero(1.0, 2.0).unwrap();
        let report = gronwall_sweep(&zero, 5, 3, 1.0, 0.05).unwrap();
        assert!((report.max_ratio - 1.0).abs() <= 1e-12);

        let sign = FeedbackField::sign_with_gap(0.0).unwrap();
        assert!(gronwall_sweep(&sign, 5, 3, 1.0, 0.05).is_err());
        assert!(gronwall_sweep(&zero, 0, 3, 1.0, 0.05).is_err());
    }

    #[test]
    fn gronwall_sweep_is_reproducible() {
        let field = mollify_sign_field(5.0).unwrap();
        let a = gronwall_sweep(&field, 5, 7, 1.0, 0.02).unwrap();
        let b = gronwall_sweep(&field, 5, 7, 1.0, 0.02).unwrap();
        assert_eq!(a, b);
        let c = gronwall_sweep(&field, 5, 8, 1.0, 0.02).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn dichotomy_frozen_table() {
        let cells = dichotomy_map(&[2.0, 1.0, 0.5, -1.0], 1.0).unwrap();
        let verdicts: Vec<_> = cells.iter().map(|c| c.verdict).collect();
        assert_eq!(
            verdicts,
            vec![
                DichotomyVerdict::LipschitzMinimizerExists,
                DichotomyVerdict::NoLipschitzMinimizer,
                DichotomyVerdict::NoLipschitzMinimizer,
                DichotomyVerdict::LipschitzMinimizerExists,
            ]
        );
        assert_eq!(
            cells[0].witness,
            DichotomyWitness::UniformBound { value: 1.0 }
        );
        assert_eq!(cells[1].witness, DichotomyWitness::GrowsLinearlyWithN);
        assert_eq!(cells[2].witness, DichotomyWitness::GrowsLinearlyWithN);
        assert_eq!(
            cells[3].witness,
            DichotomyWitness::UniformBound { value: 1.0 }
        );
        assert_eq!(cells[0].regime, classify_regime(&params(2.0, 1.0)).label());

        let more = dichotomy_map(&[3.0, -2.0], 1.0).unwrap();
        assert_eq!(more[0].witness, DichotomyWitness::UniformBound { value: 0.5 });
        assert_eq!(more[1].witness, DichotomyWitness::UniformBound { value: 0.5 });

        assert!(dichotomy_map(&[0.0], 1.0).is_err());
        assert!(dichotomy_map(&[], 1.0).is_err());
    }
}
