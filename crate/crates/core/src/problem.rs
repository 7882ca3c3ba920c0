//! Problem data: the cost weight lambda, the horizon T, the agent count N,
//! the symmetric initial grid, and the admissible-control projection.

use serde::Serialize;

use crate::error::{Error, Result};

/// Validated problem parameters.
///
/// `lambda` weighs the terminal variance term `-Var/(2 lambda)`: positive
/// lambda rewards spread, negative lambda penalizes it. `horizon` is the final
/// time T > 0. `num_agents` must be even so that no agent starts at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemParams {
    lambda: f64,
    horizon: f64,
    num_agents: usize,
}

impl ProblemParams {
    pub fn new(lambda: f64, horizon: f64, num_agents: usize) -> Result<Self> {
        if !lambda.is_finite() || lambda == 0.0 {
            return Err(Error::InvalidParameter(
                "lambda must be nonzero".to_string(),
            ));
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidParameter(
                "horizon T must be positive".to_string(),
            ));
        }
        validate_agent_count(num_agents)?;
        Ok(Self {
            lambda,
            horizon,
            num_agents,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    /// The initial grid for this parameter set.
    pub fn initial_grid(&self) -> Vec<f64> {
        initial_grid(self.num_agents).expect("agent count validated at construction")
    }
}

fn validate_agent_count(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "num_agents N must be even and >= 2, got {n}"
        )));
    }
    Ok(())
}

/// Equispaced symmetric grid x_i = (2i - N - 1)/(N - 1), i = 1..=N.
///
/// Endpoints are exactly -1 and 1, spacing is 2/(N-1), and the grid is exactly
/// anti-symmetric (x_i = -x_{N+1-i}); even N keeps every point away from 0.
pub fn initial_grid(num_agents: usize) -> Result<Vec<f64>> {
    validate_agent_count(num_agents)?;
    let n = num_agents;
    let denom = (n - 1) as f64;
    let mut xs = vec![0.0; n];
    // Mirror the negative half so anti-symmetry holds bit-for-bit; the mirror
    // equals the direct formula because IEEE division commutes with negation.
    for i in 0..n / 2 {
        let numer = 2.0 * (i as f64 + 1.0) - n as f64 - 1.0;
        let v = numer / denom;
        xs[i] = v;
        xs[n - 1 - i] = -v;
    }
    Ok(xs)
}

/// Projection onto the admissible control interval [-1, 1].
///
/// Boundary comparisons are exact (`>=`, `<=`); idempotent and non-decreasing.
#[inline]
pub fn project_control(u: f64) -> f64 {
    debug_assert!(!u.is_nan(), "projection queried with NaN");
    if u >= 1.0 {
        1.0
    } else if u <= -1.0 {
        -1.0
    } else {
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn params_reject_bad_inputs() {
        assert!(ProblemParams::new(0.0, 1.0, 4).is_err());
        assert!(ProblemParams::new(f64::NAN, 1.0, 4).is_err());
        assert!(ProblemParams::new(2.0, 0.0, 4).is_err());
        assert!(ProblemParams::new(2.0, -1.0, 4).is_err());
        assert!(ProblemParams::new(2.0, 1.0, 3).is_err());
        assert!(ProblemParams::new(2.0, 1.0, 0).is_err());
        assert!(ProblemParams::new(2.0, 1.0, 4).is_ok());
    }

    #[test]
    fn grid_two_agents_is_unit_pair() {
        assert_eq!(initial_grid(2).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn grid_four_agents_is_thirds() {
        let g = initial_grid(4).unwrap();
        assert_eq!(g[0], -1.0);
        assert_eq!(g[3], 1.0);
        assert!((g[1] - (-1.0 / 3.0)).abs() < 1e-16);
        assert!((g[2] - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn grid_is_sorted_symmetric_and_avoids_zero() {
        for k in 1..=64usize {
            let n = 2 * k;
            let g = initial_grid(n).unwrap();
            assert_eq!(g[0], -1.0);
            assert_eq!(g[n - 1], 1.0);
            for i in 0..n {
                assert_eq!(g[i].to_bits(), (-g[n - 1 - i]).to_bits());
                assert_ne!(g[i], 0.0);
                if i + 1 < n {
                    assert!(g[i] < g[i + 1]);
                }
            }
        }
    }

    #[test]
    fn grid_spacing_is_uniform() {
        for &n in &[2usize, 6, 40, 400, 16384] {
            let g = initial_grid(n).unwrap();
            let h = 2.0 / (n - 1) as f64;
            for w in g.windows(2) {
                assert!((w[1] - w[0] - h).abs() <= 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn grid_symmetry_all_even_n(k in 1usize..=8192) {
            let n = 2 * k;
            let g = initial_grid(n).unwrap();
            for i in 0..n / 2 {
                prop_assert_eq!(g[i].to_bits(), (-g[n - 1 - i]).to_bits());
            }
        }
    }

    #[test]
    fn projection_matches_case_split() {
        assert_eq!(project_control(0.3), 0.3);
        assert_eq!(project_control(2.6), 1.0);
        assert_eq!(project_control(-1.4), -1.0);
        assert_eq!(project_control(1.0), 1.0);
        assert_eq!(project_control(-1.0), -1.0);
        assert_eq!(project_control(f64::INFINITY), 1.0);
        assert_eq!(project_control(f64::NEG_INFINITY), -1.0);
    }

    #[test]
    fn projection_idempotent_and_monotone_on_dense_grid() {
        let m = 10_000;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=m {
            let u = -3.0 + 6.0 * (k as f64) / (m as f64);
            let p = project_control(u);
            assert_eq!(project_control(p), p);
            assert!(p >= prev);
            assert!((-1.0..=1.0).contains(&p));
            prev = p;
        }
    }
}
