//! Probability measures on the line represented by their quantile functions.
//!
//! Both measure families used here (empirical atoms, uniform densities) have
//! piecewise-affine quantile functions, so the 1-D Wasserstein-1 identity
//! W1(mu, nu) = int_0^1 |Q_mu(q) - Q_nu(q)| dq is evaluated exactly by merging
//! the two segment lists and integrating each affine difference in closed form.

use serde::Serialize;

use crate::error::{Error, Result};

/// Equal-weight atomic measure (1/n) sum of delta_{x_k}; atoms kept sorted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure1D {
    atoms: Vec<f64>,
}

impl EmpiricalMeasure1D {
    /// Builds from arbitrary finite values; sorts (stable), keeps duplicates.
    pub fn new(mut atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter(
                "empirical measure needs at least one atom".to_string(),
            ));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "empirical atoms must be finite".to_string(),
            ));
        }
        atoms.sort_by(|a, b| a.partial_cmp(b).expect("finite atoms"));
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Uniform density on the interval (left, right).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformMeasure1D {
    left: f64,
    right: f64,
}

impl UniformMeasure1D {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        if !(left.is_finite() && right.is_finite() && left < right) {
            return Err(Error::InvalidParameter(format!(
                "uniform measure needs left < right, got ({left}, {right})"
            )));
        }
        Ok(Self { left, right })
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }
}

/// A compactly supported probability measure on the line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Measure1D {
    Empirical(EmpiricalMeasure1D),
    Uniform(UniformMeasure1D),
}

impl Measure1D {
    pub fn empirical(atoms: Vec<f64>) -> Result<Self> {
        Ok(Measure1D::Empirical(EmpiricalMeasure1D::new(atoms)?))
    }

    pub fn uniform(left: f64, right: f64) -> Result<Self> {
        Ok(Measure1D::Uniform(UniformMeasure1D::new(left, right)?))
    }

    pub fn mean(&self) -> f64 {
        match self {
            Measure1D::Empirical(e) => compensated_sum(e.atoms()) / e.len() as f64,
            Measure1D::Uniform(u) => 0.5 * (u.left + u.right),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Measure1D::Empirical(e) => {
                let m = self.mean();
                let sq: Vec<f64> = e.atoms().iter().map(|x| (x - m) * (x - m)).collect();
                compensated_sum(&sq) / e.len() as f64
            }
            Measure1D::Uniform(u) => {
                let w = u.right - u.left;
                w * w / 12.0
            }
        }
    }

    /// Left-continuous quantile function, q in [0, 1].
    pub fn quantile(&self, q: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&q));
        match self {
            Measure1D::Empirical(e) => {
                let n = e.len();
                let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
                e.atoms[idx]
            }
            Measure1D::Uniform(u) => u.left + (u.right - u.left) * q,
        }
    }

    /// Deterministic midpoint-quantile sample: positions Q((k - 1/2)/m), sorted.
    pub fn sample(&self, m: usize) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(Error::InvalidParameter(
                "sample size must be positive".to_string(),
            ));
        }
        Ok((0..m)
            .map(|k| self.quantile((k as f64 + 0.5) / m as f64))
            .collect())
    }

    /// Exact Wasserstein-1 distance via the quantile identity.
    pub fn wasserstein1(&self, other: &Measure1D) -> f64 {
        let a = quantile_segments(self);
        let b = quantile_segments(other);
        let (mut i, mut j) = (0usize, 0usize);
        let mut lo = 0.0_f64;
        let mut total = 0.0_f64;
        while i < a.len() && j < b.len() {
            let hi = a[i].q1.min(b[j].q1);
            if hi > lo {
                let d0 = a[i].at(lo) - b[j].at(lo);
                let d1 = a[i].at(hi) - b[j].at(hi);
                total += abs_affine_integral(hi - lo, d0, d1);
            }
            if a[i].q1 <= hi {
                i += 1;
            }
            if b[j].q1 <= hi {
                j += 1;
            }
            lo = hi;
        }
        total
    }

    /// Image measure under a pointwise map. Empirical atoms are mapped in
    /// place; a uniform measure is first midpoint-sampled at `particles`
    /// points. The map returns None where it is undefined (-> domain error).
    pub fn push_forward<F>(&self, map: F, particles: usize) -> Result<Measure1D>
    where
        F: Fn(f64) -> Option<f64>,
    {
        let source: Vec<f64> = match self {
            Measure1D::Empirical(e) => e.atoms().to_vec(),
            Measure1D::Uniform(_) => self.sample(particles)?,
        };
        let mut mapped = Vec::with_capacity(source.len());
        for x in source {
            mapped.push(map(x).ok_or(Error::Domain(x))?);
        }
        Measure1D::empirical(mapped)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Measure1D::Empirical(_) => "empirical",
            Measure1D::Uniform(_) => "uniform",
        }
    }

    /// Exact image under x -> scale*x + shift; uniform stays uniform.
    pub fn affine_image(&self, scale: f64, shift: f64) -> Result<Measure1D> {
        if scale == 0.0 {
            // Degenerate image is a single atom.
            return Measure1D::empirical(vec![shift]);
        }
        match self {
            Measure1D::Empirical(e) => {
                Measure1D::empirical(e.atoms().iter().map(|x| scale * x + shift).collect())
            }
            Measure1D::Uniform(u) => {
                let (p, q) = (scale * u.left + shift, scale * u.right + shift);
                Measure1D::uniform(p.min(q), p.max(q))
            }
        }
    }
}

/// Kahan-Babuska-Neumaier compensated summation.
pub(crate) fn compensated_sum(xs: &[f64]) -> f64 {
    let mut acc = KbnSum::default();
    for &x in xs {
        acc.add(x);
    }
    acc.total()
}

/// Streaming form of Kahan-Babuska-Neumaier summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KbnSum {
    sum: f64,
    comp: f64,
}

impl KbnSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// One affine piece of a quantile function: Q(q) = a + b*q on [q0, q1].
#[derive(Debug, Clone, Copy)]
struct QSeg {
    q1: f64,
    a: f64,
    b: f64,
}

impl QSeg {
    #[inline]
    fn at(&self, q: f64) -> f64 {
        self.a + self.b * q
    }
}

fn quantile_segments(mu: &Measure1D) -> Vec<QSeg> {
    match mu {
        Measure1D::Empirical(e) => {
            let n = e.len();
            e.atoms()
                .iter()
                .enumerate()
                .map(|(k, &x)| QSeg {
                    q1: (k + 1) as f64 / n as f64,
                    a: x,
                    b: 0.0,
                })
                .collect()
        }
        Measure1D::Uniform(u) => vec![QSeg {
            q1: 1.0,
            a: u.left,
            b: u.right - u.left,
        }],
    }
}

/// Integral of |affine| over an interval of width w with endpoint values
/// d0, d1; splits at the interior zero when the sign changes.
fn abs_affine_integral(w: f64, d0: f64, d1: f64) -> f64 {
    if d0 == 0.0 && d1 == 0.0 {
        return 0.0;
    }
    if d0 * d1 >= 0.0 {
        0.5 * w * (d0.abs() + d1.abs())
    } else {
        let r = d0 / (d0 - d1); // zero-crossing fraction in (0,1)
        0.5 * w * (r * d0.abs() + (1.0 - r) * d1.abs())
    }
}
