//! Limiting feedback fields u(t, y) and their pointwise evaluation.
//!
//! Four shapes cover everything the experiments need: the saturated linear
//! feedback pi(y/(lambda-T+t)) that is optimal for lambda > T and lambda < 0,
//! the discontinuous sign field with its undefined central band for
//! 0 < lambda <= T, the Lipschitz mollification pi(L*y) of the sign field,
//! and tabulated fields interpolated bilinearly from a grid.

use crate::error::{Error, Result};
use crate::problem::{project_control, ProblemParams};

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackField {
    /// u(t, y) = pi(y / (lambda - T + t)); requires the denominator to stay
    /// away from 0 on [0, T], i.e. lambda > T or lambda < 0.
    SaturatedLinear { lambda: f64, horizon: f64 },
    /// u(t, y) = sign(y) for |y| > t, undefined for 0 < |y| <= t; the single
    /// point y = 0 carries a configurable tie value.
    SignWithGap { tie_value_at_zero: f64 },
    /// u(t, y) = pi(slope * y); globally slope-Lipschitz in y.
    MollifiedSign { slope: f64 },
    /// Bilinear interpolation of tabulated values, clamped at grid edges.
    Tabulated(TabulatedField),
}

impl FeedbackField {
    pub fn saturated_linear(lambda: f64, horizon: f64) -> Result<Self> {
        if !lambda.is_finite() || !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidParameter(
                "saturated-linear field needs finite lambda and horizon T > 0".to_string(),
            ));
        }
        if lambda > 0.0 && lambda <= horizon {
            return Err(Error::UnsupportedRegime(format!(
                "saturated-linear field is singular at t = T - lambda for lambda = {lambda}, T = {horizon}"
            )));
        }
        Ok(FeedbackField::SaturatedLinear { lambda, horizon })
    }

    pub fn sign_with_gap(tie_value_at_zero: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&tie_value_at_zero) {
            return Err(Error::InvalidParameter(
                "tie value at y = 0 must lie in [-1, 1]".to_string(),
            ));
        }
        Ok(FeedbackField::SignWithGap { tie_value_at_zero })
    }

    pub fn mollified_sign(slope: f64) -> Result<Self> {
        if !(slope.is_finite() && slope > 0.0) {
            return Err(Error::InvalidParameter(
                "mollification slope L must be positive".to_string(),
            ));
        }
        Ok(FeedbackField::MollifiedSign { slope })
    }

    pub fn tabulated(table: TabulatedField) -> Self {
        FeedbackField::Tabulated(table)
    }

    /// Constant-zero field on [0, horizon] x [-half_width, half_width].
    pub fn zero(horizon: f64, half_width: f64) -> Result<Self> {
        let table = TabulatedField::new(
            vec![0.0, horizon],
            vec![-half_width, half_width],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        )?;
        Ok(FeedbackField::Tabulated(table))
    }

    /// Field value at (t, y), always in [-1, 1] when defined.
    pub fn eval(&self, t: f64, y: f64) -> Result<f64> {
        match self {
            FeedbackField::SaturatedLinear { lambda, horizon } => {
                let denom = lambda - horizon + t;
                if denom == 0.0 {
                    return Err(Error::Domain(y));
                }
                Ok(project_control(y / denom))
            }
            FeedbackField::SignWithGap { tie_value_at_zero } => {
                if y == 0.0 {
                    Ok(*tie_value_at_zero)
                } else if y.abs() <= t {
                    Err(Error::UndefinedBand { t, y })
                } else if y > 0.0 {
                    Ok(1.0)
                } else {
                    Ok(-1.0)
                }
            }
            FeedbackField::MollifiedSign { slope } => Ok(project_control(slope * y)),
            FeedbackField::Tabulated(table) => Ok(table.eval(t, y)),
        }
    }

    /// Spatial Lipschitz constant: exact for the analytic shapes, a grid
    /// difference estimate for tabulated fields, None for the sign field.
    pub fn space_lipschitz(&self) -> Option<f64> {
        match self {
            FeedbackField::SaturatedLinear { lambda, horizon } => {
                if *lambda > *horizon {
                    Some(1.0 / (lambda - horizon))
                } else if *lambda < 0.0 {
                    Some(1.0 / lambda.abs())
                } else {
                    None
                }
            }
            FeedbackField::SignWithGap { .. } => None,
            FeedbackField::MollifiedSign { slope } => Some(*slope),
            FeedbackField::Tabulated(table) => Some(table.lipschitz_estimate()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FeedbackField::SaturatedLinear { .. } => "saturated-linear",
            FeedbackField::SignWithGap { .. } => "sign-with-gap",
            FeedbackField::MollifiedSign { .. } => "mollified-sign",
            FeedbackField::Tabulated(_) => "tabulated",
        }
    }
}

/// Free-function form of field evaluation.
pub fn eval_field(field: &FeedbackField, t: f64, y: f64) -> Result<f64> {
    field.eval(t, y)
}

/// The optimal limiting feedback for the given parameters: saturated linear
/// when a Lipschitz minimizer exists, the sign field otherwise.
pub fn optimal_feedback(params: &ProblemParams) -> FeedbackField {
    let (l, t) = (params.lambda(), params.horizon());
    if l > t || l < 0.0 {
        FeedbackField::saturated_linear(l, t).expect("regime checked")
    } else {
        FeedbackField::sign_with_gap(0.0).expect("tie 0 is admissible")
    }
}

/// L-Lipschitz approximation pi(L*y) of the sign field.
pub fn mollify_sign_field(slope: f64) -> Result<FeedbackField> {
    FeedbackField::mollified_sign(slope)
}

/// Rectangular value table with bilinear interpolation; queries outside the
/// grid are clamped to the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedField {
    times: Vec<f64>,
    ys: Vec<f64>,
    /// values[i][j] = u(times[i], ys[j])
    values: Vec<Vec<f64>>,
}

impl TabulatedField {
    pub fn new(times: Vec<f64>, ys: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite());
        if times.len() < 2 || ys.len() < 2 || !increasing(&times) || !increasing(&ys) {
            return Err(Error::InvalidParameter(
                "tabulated field needs strictly increasing time and space grids of length >= 2"
                    .to_string(),
            ));
        }
        if values.len() != times.len() || values.iter().any(|row| row.len() != ys.len()) {
            return Err(Error::LengthMismatch(format!(
                "tabulated values must be {} x {}",
                times.len(),
                ys.len()
            )));
        }
        if values
            .iter()
            .flatten()
            .any(|v| !v.is_finite() || !(-1.0..=1.0).contains(v))
        {
            return Err(Error::InvalidParameter(
                "tabulated field values must lie in [-1, 1]".to_string(),
            ));
        }
        Ok(Self { times, ys, values })
    }

    /// Sample another field on the given grids.
    pub fn from_field(field: &FeedbackField, times: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(times.len());
        for &t in &times {
            let mut row = Vec::with_capacity(ys.len());
            for &y in &ys {
                row.push(field.eval(t, y)?);
            }
            values.push(row);
        }
        Self::new(times, ys, values)
    }

    fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
        let xc = x.clamp(grid[0], *grid.last().unwrap());
        let i = grid
            .partition_point(|&g| g <= xc)
            .saturating_sub(1)
            .min(grid.len() - 2);
        let w = (xc - grid[i]) / (grid[i + 1] - grid[i]);
        (i, w)
    }

    pub fn eval(&self, t: f64, y: f64) -> f64 {
        let (i, wt) = Self::bracket(&self.times, t);
        let (j, wy) = Self::bracket(&self.ys, y);
        let v = &self.values;
        (1.0 - wt) * ((1.0 - wy) * v[i][j] + wy * v[i][j + 1])
            + wt * ((1.0 - wy) * v[i + 1][j] + wy * v[i + 1][j + 1])
    }

    /// Max absolute slope between adjacent space nodes; bilinear interpolation
    /// never exceeds the slope of its edge rows, so this bounds the field.
    pub fn lipschitz_estimate(&self) -> f64 {
        let mut best = 0.0_f64;
        for row in &self.values {
            for j in 0..self.ys.len() - 1 {
                let s = (row[j + 1] - row[j]).abs() / (self.ys[j + 1] - self.ys[j]);
                best = best.max(s);
            }
        }
        best
    }
}
