//! Zeroth-order gradient estimators built from function values along random
//! unit directions.
//!
//! The estimators take already-sampled function values instead of function
//! handles; the caller decides where the values come from (usually a
//! [`crate::problem::BanditOracle`] that enforces query budgets).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

/// A point on the unit sphere `S^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint(DVector<f64>);

impl SpherePoint {
    /// Normalizes `v`; fails for the zero vector.
    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if v.is_empty() || !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidParameter(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        Ok(Self(v / norm))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Draws a uniform point on the unit sphere by normalizing a standard normal
/// vector.
pub fn sample_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Result<SpherePoint> {
    if dim == 0 {
        return Err(Error::InvalidParameter(
            "sphere dimension must be positive".into(),
        ));
    }
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        // Rejection only triggers on an all-zero draw.
        if norm > 0.0 {
            return Ok(SpherePoint(v / norm));
        }
    }
}

/// Draws a uniform point in the unit ball: sphere sample scaled by `U^(1/dim)`.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Result<DVector<f64>> {
    let u = sample_sphere(rng, dim)?;
    let radius = rng.gen::<f64>().powf(1.0 / dim as f64);
    Ok(u.0 * radius)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "exploration radius must be positive, got {delta}"
        )))
    }
}

/// One-point estimate `(p / delta) f(x + delta u) u`.
pub fn grad_one_point(
    value_at_perturbed: f64,
    delta: f64,
    u: &SpherePoint,
) -> Result<DVector<f64>> {
    check_delta(delta)?;
    let p = u.dim() as f64;
    Ok(u.as_vector() * (p / delta * value_at_perturbed))
}

/// Two-point estimate `(p / delta) (f(x + delta u) - f(x)) u`.
pub fn grad_two_point(
    value_at_perturbed: f64,
    value_at_base: f64,
    delta: f64,
    u: &SpherePoint,
) -> Result<DVector<f64>> {
    grad_one_point(value_at_perturbed - value_at_base, delta, u)
}

/// Row-wise estimator for a vector-valued function `g: R^dim -> R^m`.
///
/// Row `j` is the one-point estimate of `[g]_j` when `values_at_base` is
/// `None`, and the two-point estimate otherwise. The result is `m x dim`.
pub fn jacobian_estimate(
    values_at_perturbed: &DVector<f64>,
    values_at_base: Option<&DVector<f64>>,
    delta: f64,
    u: &SpherePoint,
) -> Result<DMatrix<f64>> {
    check_delta(delta)?;
    if values_at_perturbed.is_empty() {
        return Err(Error::InvalidParameter(
            "constraint dimension must be positive".into(),
        ));
    }
    let diff = match values_at_base {
        Some(base) => {
            check_dim(values_at_perturbed.len(), base.len())?;
            values_at_perturbed - base
        }
        None => values_at_perturbed.clone(),
    };
    let p = u.dim() as f64;
    Ok((diff * (p / delta)) * u.as_vector().transpose())
}

/// The function values gathered for one gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSample<V> {
    pub base_point: DVector<f64>,
    pub delta: f64,
    pub direction: SpherePoint,
    pub value_at_perturbed: V,
    /// Present only for two-point samples.
    pub value_at_base: Option<V>,
}

impl EstimatorSample<f64> {
    pub fn gradient(&self) -> Result<DVector<f64>> {
        match self.value_at_base {
            Some(base) => {
                grad_two_point(self.value_at_perturbed, base, self.delta, &self.direction)
            }
            None => grad_one_point(self.value_at_perturbed, self.delta, &self.direction),
        }
    }
}

impl EstimatorSample<DVector<f64>> {
    pub fn jacobian(&self) -> Result<DMatrix<f64>> {
        jacobian_estimate(
            &self.value_at_perturbed,
            self.value_at_base.as_ref(),
            self.delta,
            &self.direction,
        )
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl MonteCarloEstimate {
    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Self {
        // Welford keeps the variance accurate when the mean dominates.
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for x in xs {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        Self {
            mean,
            std_err: (var / n.max(1) as f64).sqrt(),
            samples: n,
        }
    }
}

/// Monte-Carlo value of the ball-smoothed function
/// `f_hat(x) = E_{v ~ B^p}[f(x + delta v)]`.
///
/// Test oracle only; the caller guarantees `x + delta v` is inside `f`'s
/// domain.
pub fn smoothed_value_mc<F, R>(
    f: F,
    x: &DVector<f64>,
    delta: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate>
where
    F: Fn(&DVector<f64>) -> f64,
    R: Rng + ?Sized,
{
    check_delta(delta)?;
    if n_samples == 0 {
        return Err(Error::InvalidParameter(
            "need at least one Monte-Carlo sample".into(),
        ));
    }
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let v = sample_ball(rng, x.len())?;
        values.push(f(&(x + v * delta)));
    }
    Ok(MonteCarloEstimate::from_samples(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn e(dim: usize, k: usize) -> SpherePoint {
        SpherePoint::from_vector(DVector::from_fn(dim, |i, _| if i == k { 1.0 } else { 0.0 }))
            .unwrap()
    }

    #[test]
    fn sphere_rejects_zero_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_sphere(&mut rng, 0).is_err());
    }

    #[test]
    fn sphere_points_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in 1..12 {
            for _ in 0..1000 {
                let u = sample_sphere(&mut rng, dim).unwrap();
                assert!((u.as_vector().norm() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sphere_dim_one_is_a_fair_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let plus = (0..n)
            .filter(|_| sample_sphere(&mut rng, 1).unwrap().as_vector()[0] > 0.0)
            .count();
        let freq = plus as f64 / n as f64;
        assert!((0.49..=0.51).contains(&freq), "freq {freq}");
    }

    #[test]
    fn sphere_mean_vanishes_in_dim_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let mut sum = DVector::zeros(3);
        for _ in 0..n {
            sum += sample_sphere(&mut rng, 3).unwrap().as_vector();
        }
        assert!((sum / n as f64).norm() <= 0.005);
    }

    #[test]
    fn sphere_is_deterministic_per_seed() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_sphere(&mut rng, 4).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn ball_samples_stay_inside_and_fill_radially() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let dim = 3;
        let mut sq = Vec::with_capacity(n);
        for _ in 0..n {
            let b = sample_ball(&mut rng, dim).unwrap();
            assert!(b.norm() <= 1.0 + 1e-15);
            sq.push(b.norm_squared());
        }
        // E|v|^2 = p / (p + 2) for the uniform ball.
        let est = MonteCarloEstimate::from_samples(sq);
        assert!((est.mean - 0.6).abs() <= 3.0 * est.std_err, "{est:?}");
    }

    #[test]
    fn one_point_examples() {
        let u = e(3, 0);
        assert_eq!(grad_one_point(0.0, 0.7, &u).unwrap(), DVector::zeros(3));
        assert_eq!(grad_one_point(2.0, 0.5, &u).unwrap(), v(&[12.0, 0.0, 0.0]));
        assert!(grad_one_point(1.0, 0.0, &u).is_err());
        assert!(grad_one_point(1.0, -1.0, &u).is_err());
    }

    #[test]
    fn two_point_examples() {
        let u = e(2, 1);
        assert_eq!(
            grad_two_point(3.0, 3.0, 0.2, &u).unwrap(),
            DVector::zeros(2)
        );
        let g = grad_two_point(1.2, 1.0, 0.1, &u).unwrap();
        assert!((g - v(&[0.0, 4.0])).norm() < 1e-12);
        assert!(grad_two_point(1.0, 0.0, 0.0, &u).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let u = e(2, 0);
        let j = jacobian_estimate(&v(&[1.0, -1.0]), None, 1.0, &u).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, -2.0, 0.0]));

        let vals = v(&[0.3, 4.0]);
        assert_eq!(
            jacobian_estimate(&vals, Some(&vals), 0.5, &u).unwrap(),
            DMatrix::zeros(2, 2)
        );

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = sample_sphere(&mut rng, 4).unwrap();
        let row = jacobian_estimate(&v(&[1.7]), Some(&v(&[0.2])), 0.3, &w).unwrap();
        let scalar = grad_two_point(1.7, 0.2, 0.3, &w).unwrap();
        assert_eq!(row.row(0).transpose(), scalar);
        let row1 = jacobian_estimate(&v(&[1.7]), None, 0.3, &w).unwrap();
        assert_eq!(
            row1.row(0).transpose(),
            grad_one_point(1.7, 0.3, &w).unwrap()
        );

        assert!(jacobian_estimate(&v(&[1.0, 2.0]), Some(&v(&[1.0])), 1.0, &u).is_err());
        assert!(jacobian_estimate(&v(&[1.0]), None, 0.0, &u).is_err());
    }

    #[test]
    fn sample_struct_dispatches_on_base_value() {
        let u = e(2, 0);
        let one = EstimatorSample {
            base_point: v(&[0.0, 0.0]),
            delta: 0.5,
            direction: u.clone(),
            value_at_perturbed: 1.0,
            value_at_base: None,
        };
        assert_eq!(one.gradient().unwrap(), v(&[4.0, 0.0]));
        let two = EstimatorSample {
            value_at_base: Some(1.0),
            ..one
        };
        assert_eq!(two.gradient().unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn smoothing_a_linear_function_is_exact_in_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = v(&[1.0, -2.0, 0.5]);
        let x = v(&[0.1, 0.2, 0.3]);
        let f = |y: &DVector<f64>| a.dot(y) + 3.0;
        let est = smoothed_value_mc(f, &x, 0.4, 100_000, &mut rng).unwrap();
        assert!((est.mean - f(&x)).abs() <= 3.0 * est.std_err);
    }

    #[test]
    fn smoothing_squared_norm_matches_ball_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in [1usize, 2, 5] {
            let est = smoothed_value_mc(
                |y| y.norm_squared(),
                &DVector::zeros(p),
                1.0,
                200_000,
                &mut rng,
            )
            .unwrap();
            let exact = p as f64 / (p as f64 + 2.0);
            assert!(
                (est.mean - exact).abs() <= 3.0 * est.std_err,
                "p={p}: {est:?} vs {exact}"
            );
        }
    }

    #[test]
    fn smoothing_error_is_bounded_by_lipschitz_constant() {
        // f(y) = |y|_1 is Lipschitz with L0 = sqrt(p).
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = v(&[0.3, -0.1]);
        let f = |y: &DVector<f64>| y.iter().map(|c| c.abs()).sum::<f64>();
        let delta = 0.25;
        let est = smoothed_value_mc(f, &x, delta, 100_000, &mut rng).unwrap();
        assert!((est.mean - f(&x)).abs() <= delta * 2f64.sqrt() + 3.0 * est.std_err);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let est = MonteCarloEstimate::from_samples(xs);
        let mean = 3.75;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 3.0;
        assert!((est.mean - mean).abs() < 1e-15);
        assert!((est.std_err - (var / 4.0).sqrt()).abs() < 1e-15);
    }
}
