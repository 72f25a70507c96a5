//! Gaussian-process regression with analytic kernel derivatives.
//!
//! A fitted [`GpModel`] holds training inputs `a`, observations `y`, a noise
//! variance, and a Cholesky factorization of `B = K(a,a) + sigma^2 I`. From
//! it we read off the posterior mean `K(t,a) B^{-1} y` and variance
//! `k(t,t) - K(t,a) B^{-1} K(a,t)`, and — because differentiation is linear —
//! the same expressions with kernel partials give the posterior law of the
//! derivative: mean `K_x(t,a) B^{-1} y` and variance
//! `k_xy(t,t) - K_x(t,a) B^{-1} K_y(a,t)` (analogously with `k_xx`/`k_xxyy`
//! for the second derivative). These derivative variances shrink
//! monotonically as observations accrue, which is what makes the smoothed
//! shape's arc length trustworthy.
//!
//! Shipped kernels: the periodic sine-squared exponential kernel
//! `exp(-2 sin^2((s-t)/2))` on the parameter circle (with full analytic
//! partials), the squared-exponential kernel on an interval, and a
//! pushforward kernel built from a reference polyline for complexes that are
//! not parameter circles (evaluation only).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use thiserror::Error;

use crate::geometry::dist;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("noise variance must be positive (got {0})")]
    NonPositiveNoise(f64),
    #[error("need at least one training point")]
    EmptyTraining,
    #[error("{params} parameters vs {observations} observations")]
    LengthMismatch { params: usize, observations: usize },
    #[error("kernel does not provide analytic partial derivatives")]
    MissingDerivatives,
    #[error("factorization failed even with jitter {jitter}; condition estimate {condition:.3e}")]
    Factorization { jitter: f64, condition: f64 },
    #[error("need at least one probe point")]
    EmptyProbes,
}

/// Analytic partial derivatives of a kernel at `(s, t)`. Subscripts denote
/// differentiation slots; repeated subscripts repeat the derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub k_x: f64,
    pub k_y: f64,
    pub k_xy: f64,
    pub k_xx: f64,
    pub k_xxyy: f64,
}

pub trait Kernel: Send + Sync {
    fn eval(&self, s: f64, t: f64) -> f64;

    /// Analytic partials, if the kernel provides them.
    fn partials(&self, _s: f64, _t: f64) -> Option<Partials> {
        None
    }
}

/// Periodic kernel on the parameter circle:
/// `k(s,t) = amplitude2 * exp(-rate * sin^2((s-t)/2))`.
///
/// The defaults `amplitude2 = 1, rate = 2` give `exp(-2 sin^2((s-t)/2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineSquaredExpKernel {
    pub amplitude2: f64,
    pub rate: f64,
}

impl Default for SineSquaredExpKernel {
    fn default() -> Self {
        SineSquaredExpKernel {
            amplitude2: 1.0,
            rate: 2.0,
        }
    }
}

impl Kernel for SineSquaredExpKernel {
    fn eval(&self, s: f64, t: f64) -> f64 {
        let u = s - t;
        self.amplitude2 * (-self.rate * (0.5 * u).sin().powi(2)).exp()
    }

    fn partials(&self, s: f64, t: f64) -> Option<Partials> {
        // k(s,t) = g(s-t) with g = A exp(phi), phi(u) = -(rate/2)(1 - cos u).
        // Faa di Bruno gives the needed derivatives of exp(phi).
        let u = s - t;
        let half = 0.5 * self.rate;
        let (sin_u, cos_u) = u.sin_cos();
        let g = self.eval(s, t);
        let p1 = -half * sin_u;
        let p2 = -half * cos_u;
        let p3 = half * sin_u;
        let p4 = half * cos_u;
        let g2 = (p2 + p1 * p1) * g;
        let g4 = (p4 + 4.0 * p1 * p3 + 3.0 * p2 * p2 + 6.0 * p1 * p1 * p2 + p1.powi(4)) * g;
        Some(Partials {
            k_x: p1 * g,
            k_y: -p1 * g,
            k_xy: -g2,
            k_xx: g2,
            k_xxyy: g4,
        })
    }
}

/// Squared-exponential kernel on an interval:
/// `k(s,t) = amplitude2 * exp(-(s-t)^2 / (2 lengthscale^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredExpKernel {
    pub amplitude2: f64,
    pub lengthscale: f64,
}

impl Default for SquaredExpKernel {
    fn default() -> Self {
        SquaredExpKernel {
            amplitude2: 1.0,
            lengthscale: 0.2,
        }
    }
}

impl Kernel for SquaredExpKernel {
    fn eval(&self, s: f64, t: f64) -> f64 {
        let u = s - t;
        self.amplitude2 * (-u * u / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }

    fn partials(&self, s: f64, t: f64) -> Option<Partials> {
        let u = s - t;
        let l2 = self.lengthscale * self.lengthscale;
        let g = self.eval(s, t);
        let g1 = -(u / l2) * g;
        let g2 = (u * u / (l2 * l2) - 1.0 / l2) * g;
        let g4 = (u.powi(4) / l2.powi(4) - 6.0 * u * u / l2.powi(3) + 3.0 / (l2 * l2)) * g;
        Some(Partials {
            k_x: g1,
            k_y: -g1,
            k_xy: -g2,
            k_xx: g2,
            k_xxyy: g4,
        })
    }
}

/// Kernel pushed forward through a reference PL embedding: `k'(s,t) =
/// exp(-||f(s) - f(t)||^2 / (2 l^2))` with `f` interpolating the reference
/// points over their parameter values. The PL reference is continuous but
/// not differentiable at its knots, so no analytic partials are offered.
#[derive(Debug, Clone)]
pub struct PushforwardKernel {
    params: Vec<f64>,
    points: Vec<Vec<f64>>,
    pub lengthscale: f64,
}

impl PushforwardKernel {
    /// `reference` pairs strictly increasing parameter values with points.
    pub fn new(reference: Vec<(f64, Vec<f64>)>, lengthscale: f64) -> Self {
        assert!(reference.len() >= 2, "need at least two reference points");
        assert!(
            reference.windows(2).all(|w| w[0].0 < w[1].0),
            "reference parameters must be strictly increasing"
        );
        let (params, points) = reference.into_iter().unzip();
        PushforwardKernel {
            params,
            points,
            lengthscale,
        }
    }

    fn map(&self, s: f64) -> Vec<f64> {
        if s <= self.params[0] {
            return self.points[0].clone();
        }
        if s >= *self.params.last().unwrap() {
            return self.points.last().unwrap().clone();
        }
        let idx = self.params.partition_point(|&p| p <= s);
        let (p0, p1) = (self.params[idx - 1], self.params[idx]);
        let w = (s - p0) / (p1 - p0);
        crate::geometry::lerp(&self.points[idx - 1], &self.points[idx], w)
    }
}

impl Kernel for PushforwardKernel {
    fn eval(&self, s: f64, t: f64) -> f64 {
        let d = dist(&self.map(s), &self.map(t));
        (-d * d / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }
}

/// The kernel's intrinsic metric `sqrt(k(s,s) + k(t,t) - 2 k(s,t))`.
pub fn kernel_metric(kernel: &impl Kernel, s: f64, t: f64) -> f64 {
    (kernel.eval(s, s) + kernel.eval(t, t) - 2.0 * kernel.eval(s, t))
        .max(0.0)
        .sqrt()
}

/// Gram matrix of a kernel on a point set.
pub fn gram_matrix(kernel: &impl Kernel, points: &[f64]) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| kernel.eval(points[i], points[j]))
}

/// Smallest eigenvalue of the Gram matrix on `points`; the numerical
/// positive-semidefiniteness check.
pub fn gram_min_eigenvalue(kernel: &impl Kernel, points: &[f64]) -> f64 {
    let eigen = gram_matrix(kernel, points).symmetric_eigen();
    eigen
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

const JITTER_FLOOR: f64 = 1e-12;
const JITTER_CEIL: f64 = 1e-6;

/// A fitted Gaussian-process regression: training inputs, observations,
/// noise variance, and the factorized regularized Gram matrix.
#[derive(Debug, Clone)]
pub struct GpModel<K: Kernel> {
    kernel: K,
    train: Vec<f64>,
    y: DVector<f64>,
    sigma2: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Factorize `B = K(a,a) + sigma2 I`, escalating jitter from 1e-12 by
/// factors of 10 up to 1e-6 if plain factorization fails.
pub fn fit<K: Kernel>(
    kernel: K,
    params: &[f64],
    observations: &[f64],
    sigma2: f64,
) -> Result<GpModel<K>, GpError> {
    if params.is_empty() {
        return Err(GpError::EmptyTraining);
    }
    if params.len() != observations.len() {
        return Err(GpError::LengthMismatch {
            params: params.len(),
            observations: observations.len(),
        });
    }
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return Err(GpError::NonPositiveNoise(sigma2));
    }
    let n = params.len();
    let gram = gram_matrix(&kernel, params);
    let base = &gram + DMatrix::identity(n, n) * sigma2;
    let mut jitter = 0.0;
    let chol = loop {
        let candidate = if jitter == 0.0 {
            base.clone()
        } else {
            &base + DMatrix::identity(n, n) * jitter
        };
        match Cholesky::new(candidate) {
            Some(c) => break c,
            None => {
                jitter = if jitter == 0.0 {
                    JITTER_FLOOR
                } else {
                    jitter * 10.0
                };
                if jitter > JITTER_CEIL {
                    let eigen = base.clone().symmetric_eigen();
                    let max = eigen.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
                    let min = eigen.eigenvalues.iter().copied().fold(f64::MAX, f64::min);
                    return Err(GpError::Factorization {
                        jitter: JITTER_CEIL,
                        condition: max / min.abs().max(f64::MIN_POSITIVE),
                    });
                }
            }
        }
    };
    let y = DVector::from_column_slice(observations);
    let alpha = chol.solve(&y);
    Ok(GpModel {
        kernel,
        train: params.to_vec(),
        y,
        sigma2,
        chol,
        alpha,
        jitter,
    })
}

impl<K: Kernel> GpModel<K> {
    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn train_params(&self) -> &[f64] {
        &self.train
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma2
    }

    /// Jitter that had to be added for factorization (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn cross(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.train.len(), |i, _| self.kernel.eval(t, self.train[i]))
    }

    fn cross_partial(
        &self,
        t: f64,
        pick: impl Fn(&Partials) -> f64,
    ) -> Result<DVector<f64>, GpError> {
        let mut out = DVector::zeros(self.train.len());
        for (i, &a) in self.train.iter().enumerate() {
            let p = self
                .kernel
                .partials(t, a)
                .ok_or(GpError::MissingDerivatives)?;
            out[i] = pick(&p);
        }
        Ok(out)
    }

    pub fn posterior_mean(&self, t: f64) -> f64 {
        self.cross(t).dot(&self.alpha)
    }

    /// Posterior variance, clamped at zero against rounding.
    pub fn posterior_var(&self, t: f64) -> f64 {
        let k = self.cross(t);
        let v = self.kernel.eval(t, t) - k.dot(&self.chol.solve(&k));
        v.max(0.0)
    }

    /// Analytic derivative of the posterior mean.
    pub fn posterior_mean_derivative(&self, t: f64) -> Result<f64, GpError> {
        Ok(self.cross_partial(t, |p| p.k_x)?.dot(&self.alpha))
    }

    /// Variance of the derivative of the posterior process, clamped at zero.
    pub fn derivative_posterior_var(&self, t: f64) -> Result<f64, GpError> {
        let kxy = self
            .kernel
            .partials(t, t)
            .ok_or(GpError::MissingDerivatives)?
            .k_xy;
        let w = self.cross_partial(t, |p| p.k_x)?;
        Ok((kxy - w.dot(&self.chol.solve(&w))).max(0.0))
    }

    /// Variance of the second derivative of the posterior process.
    pub fn second_derivative_posterior_var(&self, t: f64) -> Result<f64, GpError> {
        let kxxyy = self
            .kernel
            .partials(t, t)
            .ok_or(GpError::MissingDerivatives)?
            .k_xxyy;
        let w = self.cross_partial(t, |p| p.k_xx)?;
        Ok((kxxyy - w.dot(&self.chol.solve(&w))).max(0.0))
    }

    /// Joint draws from the posterior at `probes`: `count` vectors of
    /// function values, deterministic per seed. The posterior covariance is
    /// jittered by `1e-10 I` before factorization.
    pub fn sample_posterior(
        &self,
        probes: &[f64],
        count: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>, GpError> {
        if probes.is_empty() {
            return Err(GpError::EmptyProbes);
        }
        let m = probes.len();
        let mean = DVector::from_fn(m, |i, _| self.posterior_mean(probes[i]));
        let cross = DMatrix::from_fn(m, self.train.len(), |i, j| {
            self.kernel.eval(probes[i], self.train[j])
        });
        let solved = self.chol.solve(&cross.transpose());
        let prior = DMatrix::from_fn(m, m, |i, j| self.kernel.eval(probes[i], probes[j]));
        let cov = prior - &cross * solved + DMatrix::identity(m, m) * 1e-10;
        let factor = Cholesky::new(cov).ok_or(GpError::Factorization {
            jitter: 1e-10,
            condition: f64::NAN,
        })?;
        let l = factor.l();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::StandardNormal;
        let mut draws = Vec::with_capacity(count);
        for _ in 0..count {
            let z = DVector::from_fn(m, |_, _| normal.sample(&mut rng));
            let x = &mean + &l * z;
            draws.push(x.iter().copied().collect());
        }
        Ok(draws)
    }

    /// Max-norm residual of rebuilding `B` from its factor; a health check.
    pub fn factorization_residual(&self) -> f64 {
        let n = self.train.len();
        let b = gram_matrix(&self.kernel, &self.train)
            + DMatrix::identity(n, n) * (self.sigma2 + self.jitter);
        let l = self.chol.l();
        let rebuilt = &l * l.transpose();
        (b - rebuilt).abs().max()
    }

    pub fn observations(&self) -> &[f64] {
        self.y.as_slice()
    }
}
