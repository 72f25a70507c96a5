//! End-to-end estimation of a shape's transform from noisy observations.
//!
//! The driver works on simple closed curves in the plane given by complex
//! Fourier coefficients: evaluate the curve at evenly spaced parameters,
//! corrupt each sample with independent Gaussian noise, smooth every
//! coordinate with a periodic-kernel Gaussian process, re-parameterize the
//! posterior mean to constant velocity, discretize it into a closed PL
//! cycle, and compare its transform field against the transform of a dense
//! PL reference of the true curve. The batch runner repeats this over a
//! grid of sample counts and seeds and also scores curves drawn from the
//! GP posterior, so the output distribution shows the estimator tightening
//! as observations accrue.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{CwComplex, DirectionSet, Edge, Embedding};
use crate::ect::{ect_distance, ect_field, sect_distance, sect_field, EctError, EctField};
use crate::geometry::dist;
use crate::gp::{fit, GpError, GpModel, SineSquaredExpKernel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown curve preset '{0}'")]
    UnknownPreset(String),
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
    #[error("need at least {need} samples (got {got})")]
    TooFewSamples { got: usize, need: usize },
    #[error("noise level must be nonnegative (got {0})")]
    BadSigma(f64),
    #[error("samples must contain at least two distinct parameters")]
    DistinctParams,
    #[error("speed vanishes on the reparameterization grid")]
    VanishingSpeed,
    #[error("need at least {need} discretization points (got {got})")]
    TooFewPoints { got: usize, need: usize },
    #[error("bad experiment config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Ect(#[from] EctError),
    #[error(transparent)]
    Complex(#[from] crate::complex::ComplexError),
}

const TAU: f64 = std::f64::consts::TAU;

/// A closed plane curve `t -> sum_j c_j e^(i j t)` on `[0, 2pi]`, stored as
/// sparse complex Fourier coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCurve {
    pub coeffs: Vec<CoeffRecord>,
}

/// One Fourier coefficient `c_j = re + i im`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoeffRecord {
    pub j: i32,
    pub re: f64,
    pub im: f64,
}

impl FourierCurve {
    pub fn new(coeffs: Vec<(i32, f64, f64)>) -> Self {
        FourierCurve {
            coeffs: coeffs
                .into_iter()
                .map(|(j, re, im)| CoeffRecord { j, re, im })
                .collect(),
        }
    }

    /// Named test curves: `circle`, `ellipse`, `blob`.
    pub fn preset(name: &str) -> Result<Self, PipelineError> {
        match name {
            "circle" => Ok(FourierCurve::new(vec![(1, 1.0, 0.0)])),
            "ellipse" => Ok(FourierCurve::new(vec![(1, 1.5, 0.0), (-1, 0.5, 0.0)])),
            "blob" => Ok(FourierCurve::new(vec![
                (1, 1.0, 0.0),
                (-1, 0.08, -0.05),
                (2, 0.10, 0.06),
                (-2, 0.0, 0.04),
                (3, 0.03, -0.02),
            ])),
            other => Err(PipelineError::UnknownPreset(other.to_string())),
        }
    }

    fn eval_series(&self, t: f64, weight: impl Fn(i32) -> (f64, f64)) -> Vec<f64> {
        let mut x = 0.0;
        let mut y = 0.0;
        for c in &self.coeffs {
            let (wr, wi) = weight(c.j);
            // (c * w) e^(i j t) expanded into real and imaginary parts.
            let re = c.re * wr - c.im * wi;
            let im = c.re * wi + c.im * wr;
            let (s, co) = (c.j as f64 * t).sin_cos();
            x += re * co - im * s;
            y += re * s + im * co;
        }
        vec![x, y]
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.eval_series(t, |_| (1.0, 0.0))
    }

    /// First derivative: multiply each coefficient by `i j`.
    pub fn derivative(&self, t: f64) -> Vec<f64> {
        self.eval_series(t, |j| (0.0, j as f64))
    }

    /// Second derivative: multiply each coefficient by `-j^2`.
    pub fn second_derivative(&self, t: f64) -> Vec<f64> {
        self.eval_series(t, |j| (-(j as f64) * (j as f64), 0.0))
    }

    pub fn curvature(&self, t: f64) -> f64 {
        let d = self.derivative(t);
        let dd = self.second_derivative(t);
        let speed2 = d[0] * d[0] + d[1] * d[1];
        (d[0] * dd[1] - d[1] * dd[0]).abs() / speed2.powf(1.5)
    }

    fn check_regular(&self) -> Result<(), PipelineError> {
        let grid = 4096;
        let mut min_speed = f64::INFINITY;
        let mut max_speed = 0.0_f64;
        for i in 0..grid {
            let d = self.derivative(TAU * i as f64 / grid as f64);
            let s = (d[0] * d[0] + d[1] * d[1]).sqrt();
            min_speed = min_speed.min(s);
            max_speed = max_speed.max(s);
        }
        if !min_speed.is_finite() || min_speed <= 1e-9 * max_speed.max(1e-300) {
            return Err(PipelineError::DegenerateCurve(format!(
                "speed drops to {min_speed}"
            )));
        }
        Ok(())
    }

    /// Maximum curvature: a 4096-point grid scan refined by iterated local
    /// grid zoom around the best bracket.
    pub fn curvature_bound(&self) -> Result<f64, PipelineError> {
        self.check_regular()?;
        let grid = 4096;
        let mut best_i = 0;
        let mut best = 0.0_f64;
        for i in 0..grid {
            let k = self.curvature(TAU * i as f64 / grid as f64);
            if k > best {
                best = k;
                best_i = i;
            }
        }
        let mut lo = TAU * (best_i as f64 - 1.0) / grid as f64;
        let mut hi = TAU * (best_i as f64 + 1.0) / grid as f64;
        for _ in 0..12 {
            let sub = 32;
            let mut sub_best = (self.curvature(lo), lo);
            for k in 0..=sub {
                let t = lo + (hi - lo) * k as f64 / sub as f64;
                let c = self.curvature(t);
                if c > sub_best.0 {
                    sub_best = (c, t);
                }
            }
            best = best.max(sub_best.0);
            let width = (hi - lo) / sub as f64;
            lo = sub_best.1 - width;
            hi = sub_best.1 + width;
        }
        Ok(best)
    }

    /// Arc length by adaptive Simpson quadrature of the speed, to 1e-8
    /// relative tolerance.
    pub fn arc_length(&self) -> Result<f64, PipelineError> {
        self.check_regular()?;
        let speed = |t: f64| {
            let d = self.derivative(t);
            (d[0] * d[0] + d[1] * d[1]).sqrt()
        };
        fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                adapt(f, a, m, left, tol / 2.0, depth - 1)
                    + adapt(f, m, b, right, tol / 2.0, depth - 1)
            }
        }
        // Seed the tolerance with a coarse estimate of the total.
        let coarse: f64 = (0..64)
            .map(|i| simpson(&speed, TAU * i as f64 / 64.0, TAU * (i + 1) as f64 / 64.0))
            .sum();
        let tol = 1e-8 * coarse.abs();
        let total = (0..64)
            .map(|i| {
                let a = TAU * i as f64 / 64.0;
                let b = TAU * (i + 1) as f64 / 64.0;
                adapt(&speed, a, b, simpson(&speed, a, b), tol / 64.0, 24)
            })
            .sum();
        Ok(total)
    }

    /// Numerical simplicity check: scan a closed `n`-gon discretization for
    /// self-intersections between non-adjacent segments.
    pub fn is_simple(&self, n: usize) -> bool {
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|i| self.eval(TAU * i as f64 / n as f64))
            .collect();
        let seg = |i: usize| (&pts[i], &pts[(i + 1) % n]);
        let orient = |a: &[f64], b: &[f64], c: &[f64]| {
            (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        };
        let crosses = |i: usize, j: usize| {
            let (p1, p2) = seg(i);
            let (q1, q2) = seg(j);
            let d1 = orient(p1, p2, q1);
            let d2 = orient(p1, p2, q2);
            let d3 = orient(q1, q2, p1);
            let d4 = orient(q1, q2, p2);
            d1 * d2 < 0.0 && d3 * d4 < 0.0
        };
        for i in 0..n {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue; // adjacent around the wrap
                }
                if crosses(i, j) {
                    return false;
                }
            }
        }
        true
    }
}

/// One noisy observation of a curve: the parameter and the perturbed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisySample {
    pub param: f64,
    pub point: Vec<f64>,
}

/// Evaluate the curve at `n` evenly spaced parameters and add independent
/// `N(0, sigma^2)` noise per coordinate. Deterministic per seed.
pub fn sample_noisy(
    curve: &FourierCurve,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<Vec<NoisySample>, PipelineError> {
    if n < 3 {
        return Err(PipelineError::TooFewSamples { got: n, need: 3 });
    }
    if sigma < 0.0 {
        return Err(PipelineError::BadSigma(sigma));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = TAU * i as f64 / n as f64;
        let mut p = curve.eval(t);
        for c in p.iter_mut() {
            let z: f64 = normal.sample(&mut rng);
            *c += sigma * z;
        }
        out.push(NoisySample { param: t, point: p });
    }
    Ok(out)
}

/// A parameterized curve that can report a point and a velocity; the
/// reparameterization machinery is generic over this.
pub trait ParamCurve {
    fn dim(&self) -> usize;
    fn point(&self, t: f64) -> Vec<f64>;
    fn velocity(&self, t: f64) -> Vec<f64>;
}

impl ParamCurve for FourierCurve {
    fn dim(&self) -> usize {
        2
    }
    fn point(&self, t: f64) -> Vec<f64> {
        self.eval(t)
    }
    fn velocity(&self, t: f64) -> Vec<f64> {
        self.derivative(t)
    }
}

/// Monotone map from arc-length fraction to parameter, tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReparamTable {
    pub domain: (f64, f64),
    t_nodes: Vec<f64>,
    fractions: Vec<f64>,
    pub length: f64,
}

impl ReparamTable {
    /// Parameter at arc-length fraction `u` in `[0, 1]`.
    pub fn t_for_fraction(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.t_nodes[0];
        }
        if u >= 1.0 {
            return *self.t_nodes.last().unwrap();
        }
        let idx = self.fractions.partition_point(|&f| f <= u);
        let (f0, f1) = (self.fractions[idx - 1], self.fractions[idx]);
        let (t0, t1) = (self.t_nodes[idx - 1], self.t_nodes[idx]);
        t0 + (t1 - t0) * (u - f0) / (f1 - f0)
    }

    /// Arc-length fraction at parameter `t` (the forward map).
    pub fn fraction_at(&self, t: f64) -> f64 {
        if t <= self.t_nodes[0] {
            return 0.0;
        }
        if t >= *self.t_nodes.last().unwrap() {
            return 1.0;
        }
        let idx = self.t_nodes.partition_point(|&x| x <= t);
        let (t0, t1) = (self.t_nodes[idx - 1], self.t_nodes[idx]);
        let (f0, f1) = (self.fractions[idx - 1], self.fractions[idx]);
        f0 + (f1 - f0) * (t - t0) / (t1 - t0)
    }
}

/// Tabulate cumulative arc length over `grid_size` intervals by per-interval
/// Simpson quadrature of the speed. Errors out if the speed is not bounded
/// away from zero on the grid.
pub fn reparam_table(
    curve: &impl ParamCurve,
    domain: (f64, f64),
    grid_size: usize,
) -> Result<ReparamTable, PipelineError> {
    let n = grid_size.max(8);
    let (lo, hi) = domain;
    let h = (hi - lo) / n as f64;
    let speed = |t: f64| {
        let v = curve.velocity(t);
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let mut speeds_ok = (f64::INFINITY, 0.0_f64);
    let mut check = |s: f64| {
        speeds_ok = (speeds_ok.0.min(s), speeds_ok.1.max(s));
        s
    };
    let mut t_nodes = Vec::with_capacity(n + 1);
    let mut cum = Vec::with_capacity(n + 1);
    t_nodes.push(lo);
    cum.push(0.0);
    let mut prev_speed = check(speed(lo));
    for k in 0..n {
        let t0 = lo + h * k as f64;
        let t1 = lo + h * (k + 1) as f64;
        let mid = check(speed(0.5 * (t0 + t1)));
        let next = check(speed(t1));
        let piece = h / 6.0 * (prev_speed + 4.0 * mid + next);
        cum.push(cum.last().unwrap() + piece);
        t_nodes.push(t1);
        prev_speed = next;
    }
    let (min_s, max_s) = speeds_ok;
    if !min_s.is_finite() || min_s <= 1e-8 * max_s.max(1e-300) {
        return Err(PipelineError::VanishingSpeed);
    }
    let length = *cum.last().unwrap();
    let fractions = cum.iter().map(|c| c / length).collect();
    Ok(ReparamTable {
        domain,
        t_nodes,
        fractions,
        length,
    })
}

/// Evaluate a curve at `m` uniform arc-length fractions (the closing point
/// is omitted, so the result is a closed polyline of `m` points).
pub fn discretize_cv(curve: &impl ParamCurve, table: &ReparamTable, m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| curve.point(table.t_for_fraction(i as f64 / m as f64)))
        .collect()
}

/// Package a closed polyline as a single-cycle complex: one vertex at the
/// first point, one loop edge carrying the rest as interior points.
pub fn cycle_shape(points: &[Vec<f64>]) -> (CwComplex, Embedding) {
    let complex = CwComplex::new(
        vec!["v0".to_string()],
        vec![Edge {
            id: "cycle".to_string(),
            u: "v0".to_string(),
            v: "v0".to_string(),
        }],
    );
    let emb = Embedding::new(
        points.first().map_or(0, Vec::len),
        [("v0".to_string(), points[0].clone())]
            .into_iter()
            .collect(),
        [("cycle".to_string(), points[1..].to_vec())]
            .into_iter()
            .collect(),
    );
    (complex, emb)
}

fn closed_polyline_length(points: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for i in 0..points.len() {
        total += dist(&points[i], &points[(i + 1) % points.len()]);
    }
    total
}

/// Per-coordinate Gaussian smoothing of a closed curve, with an optional
/// constant-velocity reparameterization table once computed.
#[derive(Debug, Clone)]
pub struct SmoothedCurve {
    models: Vec<GpModel<SineSquaredExpKernel>>,
    reparam: Option<ReparamTable>,
}

impl SmoothedCurve {
    pub fn models(&self) -> &[GpModel<SineSquaredExpKernel>] {
        &self.models
    }

    pub fn reparam(&self) -> Option<&ReparamTable> {
        self.reparam.as_ref()
    }

    /// Attach a constant-velocity table computed on `grid_size` intervals.
    pub fn reparameterize(&self, grid_size: usize) -> Result<SmoothedCurve, PipelineError> {
        let table = reparam_table(self, (0.0, TAU), grid_size)?;
        Ok(SmoothedCurve {
            models: self.models.clone(),
            reparam: Some(table),
        })
    }

    /// Joint posterior curve draws at `probes`: `count` closed polylines.
    pub fn sample_curves(
        &self,
        probes: &[f64],
        count: usize,
        seed: u64,
    ) -> Result<Vec<Vec<Vec<f64>>>, PipelineError> {
        let mut per_coord = Vec::with_capacity(self.models.len());
        for (c, model) in self.models.iter().enumerate() {
            per_coord.push(model.sample_posterior(probes, count, mix_seed(seed, c as u64))?);
        }
        let mut curves = Vec::with_capacity(count);
        for k in 0..count {
            let pts: Vec<Vec<f64>> = (0..probes.len())
                .map(|j| per_coord.iter().map(|draws| draws[k][j]).collect())
                .collect();
            curves.push(pts);
        }
        Ok(curves)
    }
}

impl ParamCurve for SmoothedCurve {
    fn dim(&self) -> usize {
        self.models.len()
    }
    fn point(&self, t: f64) -> Vec<f64> {
        self.models.iter().map(|m| m.posterior_mean(t)).collect()
    }
    fn velocity(&self, t: f64) -> Vec<f64> {
        self.models
            .iter()
            .map(|m| {
                m.posterior_mean_derivative(t)
                    .expect("periodic kernel provides partials")
            })
            .collect()
    }
}

/// Fit one GP per coordinate to the samples. The posterior means define the
/// smoothed curve; their analytic derivatives define its speed.
pub fn smooth(
    samples: &[NoisySample],
    kernel: SineSquaredExpKernel,
    sigma2: f64,
) -> Result<SmoothedCurve, PipelineError> {
    if samples.len() < 2 {
        return Err(PipelineError::TooFewSamples {
            got: samples.len(),
            need: 2,
        });
    }
    let params: Vec<f64> = samples.iter().map(|s| s.param).collect();
    if params.windows(2).all(|w| w[0] == w[1]) {
        return Err(PipelineError::DistinctParams);
    }
    let dim = samples[0].point.len();
    if samples.iter().any(|s| s.point.len() != dim) {
        return Err(PipelineError::BadConfig(
            "samples have inconsistent dimensions".to_string(),
        ));
    }
    let mut models = Vec::with_capacity(dim);
    for c in 0..dim {
        let ys: Vec<f64> = samples.iter().map(|s| s.point[c]).collect();
        models.push(fit(kernel, &params, &ys, sigma2)?);
    }
    Ok(SmoothedCurve {
        models,
        reparam: None,
    })
}

/// Discretize the reparameterized smoothed curve into `m_points` and compute
/// its transform field. Uses the attached table, or a 1024-interval one.
pub fn estimate_ect(
    sc: &SmoothedCurve,
    m_points: usize,
    dirs: &DirectionSet,
    a: f64,
) -> Result<EctField, PipelineError> {
    if m_points < 3 {
        return Err(PipelineError::TooFewPoints {
            got: m_points,
            need: 3,
        });
    }
    let table = match sc.reparam() {
        Some(t) => t.clone(),
        None => reparam_table(sc, (0.0, TAU), 1024)?,
    };
    let points = discretize_cv(sc, &table, m_points);
    let (complex, emb) = cycle_shape(&points);
    Ok(ect_field(&complex, &emb, dirs, a)?)
}

fn mix_seed(a: u64, b: u64) -> u64 {
    // splitmix64 over the packed pair; cheap and collision-resistant enough
    // for stream derivation.
    let mut z = a ^ b.rotate_left(32) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Which curve an experiment runs on: a named preset or explicit
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurveSpec {
    Preset(String),
    Coeffs { coeffs: Vec<CoeffRecord> },
}

impl CurveSpec {
    pub fn resolve(&self) -> Result<FourierCurve, PipelineError> {
        match self {
            CurveSpec::Preset(name) => FourierCurve::preset(name),
            CurveSpec::Coeffs { coeffs } => Ok(FourierCurve {
                coeffs: coeffs.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub curve: CurveSpec,
    pub sigma: f64,
    pub ns: Vec<usize>,
    pub seeds: Vec<u64>,
    pub directions: usize,
    pub m_points: usize,
    pub posterior_samples: usize,
    pub a: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            curve: CurveSpec::Preset("blob".to_string()),
            sigma: 0.002,
            ns: vec![20, 50, 100],
            seeds: (0..20).collect(),
            directions: 64,
            m_points: 256,
            posterior_samples: 100,
            a: 2.0,
        }
    }
}

/// One scored curve: the smoothed estimate or one posterior draw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRow {
    pub n: usize,
    pub seed: u64,
    pub kind: String,
    pub ect_dist: f64,
    pub sect_dist: f64,
    pub sup_gap: f64,
    pub arc_length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub runs: usize,
    pub median_ect_dist: f64,
    pub median_sect_dist: f64,
    pub median_arc_length_error: f64,
}

/// Facts about the reference shape the estimates are scored against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthMeta {
    pub curvature_bound: f64,
    pub arc_length: f64,
    pub reference_points: usize,
    pub reference_epsilon: f64,
    /// PL-interpolation error bound for the reference discretization, when
    /// the reference is fine enough for the bound to apply.
    pub interpolation_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub truth: TruthMeta,
    pub rows: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
    pub failed_runs: usize,
}

pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

const REFERENCE_POINTS: usize = 4096;

/// Run the full estimator over every `(n, seed)` pair of the config.
///
/// Runs execute in parallel; each owns an RNG stream derived from its own
/// seed, and rows are emitted in job order, so the output is identical
/// regardless of thread count. Individual run failures become rows with
/// `kind = "failed:..."` and NaN scores rather than aborting the batch.
/// The GP noise variance is `max(sigma^2, 1e-10)` so that noise-free
/// configurations stay well-posed.
pub fn run_consistency_experiment(
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult, PipelineError> {
    if cfg.ns.is_empty() || cfg.seeds.is_empty() {
        return Err(PipelineError::BadConfig("empty ns or seeds".to_string()));
    }
    if cfg.directions == 0 {
        return Err(PipelineError::BadConfig(
            "need at least one direction".to_string(),
        ));
    }
    let curve = cfg.curve.resolve()?;
    let curvature_bound = curve.curvature_bound()?;
    let arc_length = curve.arc_length()?;
    let dirs = crate::complex::make_directions(2, cfg.directions, 0)?;

    let truth_table = reparam_table(&curve, (0.0, TAU), REFERENCE_POINTS)?;
    let truth_points = discretize_cv(&curve, &truth_table, REFERENCE_POINTS);
    let (truth_complex, truth_emb) = cycle_shape(&truth_points);
    let truth_field = ect_field(&truth_complex, &truth_emb, &dirs, cfg.a)?;
    let truth_sects = sect_field(&truth_field);
    let reference_epsilon = crate::complex::epsilon_density(&truth_complex, &truth_emb)?;
    let truth = TruthMeta {
        curvature_bound,
        arc_length,
        reference_points: REFERENCE_POINTS,
        reference_epsilon,
        interpolation_bound: crate::bounds::interpolation_bound(
            curvature_bound,
            arc_length,
            reference_epsilon,
        )
        .ok(),
    };

    let jobs: Vec<(usize, u64)> = cfg
        .ns
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect();

    let gp_sigma2 = (cfg.sigma * cfg.sigma).max(1e-10);
    let probes: Vec<f64> = (0..cfg.m_points)
        .map(|j| TAU * j as f64 / cfg.m_points as f64)
        .collect();

    let run_one = |n: usize, seed: u64| -> Result<Vec<RunRow>, PipelineError> {
        let samples = sample_noisy(&curve, n, cfg.sigma, seed)?;
        let sc =
            smooth(&samples, SineSquaredExpKernel::default(), gp_sigma2)?.reparameterize(1024)?;
        let mut rows = Vec::with_capacity(1 + cfg.posterior_samples);

        let score = |points: &[Vec<f64>]| -> Result<(f64, f64, f64), PipelineError> {
            let (complex, emb) = cycle_shape(points);
            let field = ect_field(&complex, &emb, &dirs, cfg.a)?;
            let e = ect_distance(&field, &truth_field)?;
            let s = sect_distance(&sect_field(&field), &truth_sects)?;
            let sup = points
                .iter()
                .zip(&probes)
                .map(|(p, &t)| dist(p, &curve.eval(t)))
                .fold(0.0, f64::max);
            Ok((e, s, sup))
        };

        let est_points = discretize_cv(&sc, sc.reparam().unwrap(), cfg.m_points);
        // The estimate's sup gap is measured at matched parameters, not
        // matched fractions, so compare against parameter-grid evaluations.
        let est_param_points: Vec<Vec<f64>> = probes.iter().map(|&t| sc.point(t)).collect();
        let (e, s, _) = score(&est_points)?;
        let sup = est_param_points
            .iter()
            .zip(&probes)
            .map(|(p, &t)| dist(p, &curve.eval(t)))
            .fold(0.0, f64::max);
        rows.push(RunRow {
            n,
            seed,
            kind: "estimate".to_string(),
            ect_dist: e,
            sect_dist: s,
            sup_gap: sup,
            arc_length: sc.reparam().unwrap().length,
        });

        if cfg.posterior_samples > 0 {
            let curves = sc.sample_curves(&probes, cfg.posterior_samples, mix_seed(seed, 0xec7))?;
            for (k, pts) in curves.iter().enumerate() {
                let (e, s, sup) = score(pts)?;
                rows.push(RunRow {
                    n,
                    seed,
                    kind: format!("posterior_{k}"),
                    ect_dist: e,
                    sect_dist: s,
                    sup_gap: sup,
                    arc_length: closed_polyline_length(pts),
                });
            }
        }
        Ok(rows)
    };

    let per_job: Vec<Vec<RunRow>> = jobs
        .par_iter()
        .map(|&(n, seed)| {
            run_one(n, seed).unwrap_or_else(|err| {
                vec![RunRow {
                    n,
                    seed,
                    kind: format!("failed:{err}"),
                    ect_dist: f64::NAN,
                    sect_dist: f64::NAN,
                    sup_gap: f64::NAN,
                    arc_length: f64::NAN,
                }]
            })
        })
        .collect();
    let rows: Vec<RunRow> = per_job.into_iter().flatten().collect();
    let failed_runs = rows.iter().filter(|r| r.kind.starts_with("failed")).count();

    let summary = cfg
        .ns
        .iter()
        .map(|&n| {
            let ect: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.kind == "estimate")
                .map(|r| r.ect_dist)
                .collect();
            let sect: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.kind == "estimate")
                .map(|r| r.sect_dist)
                .collect();
            let arc: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.kind == "estimate")
                .map(|r| (r.arc_length - arc_length).abs())
                .collect();
            SummaryRow {
                n,
                runs: ect.len(),
                median_ect_dist: if ect.is_empty() {
                    f64::NAN
                } else {
                    median(&ect)
                },
                median_sect_dist: if sect.is_empty() {
                    f64::NAN
                } else {
                    median(&sect)
                },
                median_arc_length_error: if arc.is_empty() {
                    f64::NAN
                } else {
                    median(&arc)
                },
            }
        })
        .collect();

    Ok(ExperimentResult {
        config: cfg.clone(),
        truth,
        rows,
        summary,
        failed_runs,
    })
}

/// Plot-ready CSV of the per-run rows (header plus one line per row).
pub fn render_rows_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("n,seed,kind,ect_dist,sect_dist,sup_gap,arc_length\n");
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.n, r.seed, r.kind, r.ect_dist, r.sect_dist, r.sup_gap, r.arc_length
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::make_directions;

    #[test]
    fn circle_analytics() {
        let c = FourierCurve::preset("circle").unwrap();
        assert!((c.curvature_bound().unwrap() - 1.0).abs() < 1e-8);
        assert!((c.arc_length().unwrap() - TAU).abs() < 1e-8);
        // Radius-r circle: curvature 1/r, length 2 pi r.
        let big = FourierCurve::new(vec![(1, 2.0, 0.0)]);
        assert!((big.curvature_bound().unwrap() - 0.5).abs() < 1e-8);
        assert!((big.arc_length().unwrap() - 2.0 * TAU).abs() < 1e-7);
    }

    #[test]
    fn ellipse_analytics() {
        let c = FourierCurve::preset("ellipse").unwrap();
        // (2 cos t, sin t): curvature max a/b^2 = 2 at the major axis.
        assert!((c.curvature_bound().unwrap() - 2.0).abs() < 1e-6);
        let l = c.arc_length().unwrap();
        // Independent quadrature oracle: dense composite Simpson.
        let n = 1 << 16;
        let speed = |t: f64| {
            let d = c.derivative(t);
            (d[0] * d[0] + d[1] * d[1]).sqrt()
        };
        let mut oracle = 0.0;
        let h = TAU / n as f64;
        for i in 0..n {
            let a = h * i as f64;
            oracle += h / 6.0 * (speed(a) + 4.0 * speed(a + 0.5 * h) + speed(a + h));
        }
        assert!((l - oracle).abs() < 1e-7 * oracle, "{l} vs {oracle}");
        assert!((l - 9.68845).abs() < 1e-4);
    }

    #[test]
    fn degenerate_curve_is_rejected() {
        // A single stationary point.
        let c = FourierCurve::new(vec![(0, 1.0, 0.0)]);
        assert!(matches!(
            c.arc_length(),
            Err(PipelineError::DegenerateCurve(_))
        ));
    }

    #[test]
    fn presets_simple_limacon_not() {
        assert!(FourierCurve::preset("circle").unwrap().is_simple(1024));
        assert!(FourierCurve::preset("ellipse").unwrap().is_simple(1024));
        assert!(FourierCurve::preset("blob").unwrap().is_simple(2048));
        assert!(FourierCurve::preset("nope").is_err());
        // Limacon with an inner loop self-intersects.
        let limacon = FourierCurve::new(vec![(0, 0.5, 0.0), (1, 0.5, 0.0), (2, 0.5, 0.0)]);
        assert!(!limacon.is_simple(1024));
    }

    #[test]
    fn noisy_samples_deterministic_and_exact_at_zero_sigma() {
        let c = FourierCurve::preset("circle").unwrap();
        let exact = sample_noisy(&c, 16, 0.0, 5).unwrap();
        for s in &exact {
            let p = c.eval(s.param);
            assert_eq!(s.point, p);
        }
        let a = sample_noisy(&c, 16, 0.01, 5).unwrap();
        let b = sample_noisy(&c, 16, 0.01, 5).unwrap();
        assert_eq!(a, b);
        let c2 = sample_noisy(&c, 16, 0.01, 6).unwrap();
        assert_ne!(a, c2);
        assert!(sample_noisy(&c, 2, 0.01, 0).is_err());
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let c = FourierCurve::preset("circle").unwrap();
        let sigma = 0.5;
        let n = 5000;
        let samples = sample_noisy(&c, n, sigma, 11).unwrap();
        let mut sq = 0.0;
        let mut count = 0.0;
        for s in &samples {
            let p = c.eval(s.param);
            for (o, e) in s.point.iter().zip(&p) {
                sq += (o - e) * (o - e);
                count += 1.0;
            }
        }
        let var = sq / count;
        assert!(
            (var - sigma * sigma).abs() < 0.05 * sigma * sigma,
            "sample variance {var}"
        );
    }

    #[test]
    fn smoothing_nearly_interpolates_noiseless_data() {
        let c = FourierCurve::preset("circle").unwrap();
        let samples = sample_noisy(&c, 40, 0.0, 0).unwrap();
        let sc = smooth(&samples, SineSquaredExpKernel::default(), 1e-10).unwrap();
        let max_dev = samples
            .iter()
            .map(|s| dist(&sc.point(s.param), &s.point))
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-4, "max deviation {max_dev}");
    }

    #[test]
    fn smoothing_shrinks_constant_curves() {
        let c = FourierCurve::new(vec![(0, 0.7, 0.2)]);
        let samples: Vec<NoisySample> = (0..20)
            .map(|i| NoisySample {
                param: TAU * i as f64 / 20.0,
                point: c.eval(TAU * i as f64 / 20.0),
            })
            .collect();
        let sc = smooth(&samples, SineSquaredExpKernel::default(), 0.01).unwrap();
        for i in 0..10 {
            let p = sc.point(TAU * i as f64 / 10.0);
            assert!(p[0] > 0.0 && p[0] < 0.7);
            assert!(p[1] > 0.0 && p[1] < 0.2);
        }
    }

    #[test]
    fn reparam_of_constant_speed_circle_is_identity() {
        let c = FourierCurve::preset("circle").unwrap();
        let table = reparam_table(&c, (0.0, TAU), 512).unwrap();
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            assert!((table.t_for_fraction(u) - TAU * u).abs() < 1e-6);
        }
        assert!((table.length - TAU).abs() < 1e-9);
    }

    /// Circle traversed at non-uniform speed through t + 0.3 sin t.
    struct Wobble(FourierCurve);

    impl ParamCurve for Wobble {
        fn dim(&self) -> usize {
            2
        }
        fn point(&self, t: f64) -> Vec<f64> {
            self.0.eval(t + 0.3 * t.sin())
        }
        fn velocity(&self, t: f64) -> Vec<f64> {
            let inner = t + 0.3 * t.sin();
            let rate = 1.0 + 0.3 * t.cos();
            self.0
                .derivative(inner)
                .into_iter()
                .map(|v| v * rate)
                .collect()
        }
    }

    #[test]
    fn reparam_flattens_wobbly_speed() {
        let w = Wobble(FourierCurve::preset("circle").unwrap());
        let table = reparam_table(&w, (0.0, TAU), 1024).unwrap();
        let m = 256;
        let pts = discretize_cv(&w, &table, m);
        let lengths: Vec<f64> = (0..m).map(|i| dist(&pts[i], &pts[(i + 1) % m])).collect();
        let mean = lengths.iter().sum::<f64>() / m as f64;
        for l in &lengths {
            assert!(
                (l - mean).abs() <= 0.01 * mean,
                "segment {l} vs mean {mean}"
            );
        }
        // Total length is that of the circle regardless of parameterization.
        assert!((table.length - TAU).abs() < 1e-8 * TAU);
    }

    #[test]
    fn vanishing_speed_is_detected() {
        // Cardioid-like curve whose speed hits zero.
        let c = FourierCurve::new(vec![(1, 1.0, 0.0), (2, 0.5, 0.0)]);
        assert!(matches!(
            reparam_table(&c, (0.0, TAU), 256),
            Err(PipelineError::VanishingSpeed)
        ));
    }

    #[test]
    fn estimate_ect_of_smoothed_circle() {
        let c = FourierCurve::preset("circle").unwrap();
        let samples = sample_noisy(&c, 64, 0.0, 0).unwrap();
        let sc = smooth(&samples, SineSquaredExpKernel::default(), 1e-8)
            .unwrap()
            .reparameterize(512)
            .unwrap();
        let dirs = make_directions(2, 8, 0).unwrap();
        let field = estimate_ect(&sc, 256, &dirs, 2.0).unwrap();
        for curve in &field.curves {
            assert_eq!(curve.values().first(), Some(&0));
            assert_eq!(curve.values().last(), Some(&0));
            assert_eq!(curve.values()[1], 1, "pattern 0 -> 1 -> 0");
            let bps = curve.breakpoints();
            assert!((bps[0] + 1.0).abs() < 0.05, "first jump near -1");
            assert!((bps[bps.len() - 1] - 1.0).abs() < 0.05, "last jump near +1");
        }
        // Radius too small for the unit circle.
        assert!(estimate_ect(&sc, 256, &dirs, 0.5).is_err());
        assert!(estimate_ect(&sc, 2, &dirs, 2.0).is_err());
    }

    #[test]
    fn estimate_refinement_is_cauchy() {
        let c = FourierCurve::preset("blob").unwrap();
        let samples = sample_noisy(&c, 80, 0.0, 3).unwrap();
        let sc = smooth(&samples, SineSquaredExpKernel::default(), 1e-8)
            .unwrap()
            .reparameterize(1024)
            .unwrap();
        let dirs = make_directions(2, 16, 0).unwrap();
        let mut gaps = Vec::new();
        for m in [32usize, 64, 128] {
            let f1 = estimate_ect(&sc, m, &dirs, 2.0).unwrap();
            let f2 = estimate_ect(&sc, 2 * m, &dirs, 2.0).unwrap();
            gaps.push(crate::ect::ect_distance(&f1, &f2).is_err() as u8);
            // Fields with different discretizations share directions and a,
            // so the distance is defined.
            assert_eq!(*gaps.last().unwrap(), 0);
        }
        let d1 = {
            let f1 = estimate_ect(&sc, 32, &dirs, 2.0).unwrap();
            let f2 = estimate_ect(&sc, 64, &dirs, 2.0).unwrap();
            crate::ect::ect_distance(&f1, &f2).unwrap()
        };
        let d2 = {
            let f1 = estimate_ect(&sc, 128, &dirs, 2.0).unwrap();
            let f2 = estimate_ect(&sc, 256, &dirs, 2.0).unwrap();
            crate::ect::ect_distance(&f1, &f2).unwrap()
        };
        assert!(d2 < d1, "refinement gaps {d1} -> {d2}");
    }

    #[test]
    fn experiment_smoke_and_determinism() {
        let cfg = ExperimentConfig {
            curve: CurveSpec::Preset("circle".to_string()),
            sigma: 0.002,
            ns: vec![10, 30],
            seeds: vec![0, 1],
            directions: 8,
            m_points: 64,
            posterior_samples: 1,
            a: 2.0,
        };
        let r1 = run_consistency_experiment(&cfg).unwrap();
        let r2 = run_consistency_experiment(&cfg).unwrap();
        assert_eq!(render_rows_csv(&r1), render_rows_csv(&r2));
        assert_eq!(r1.rows.len(), 2 * 2 * 2);
        assert_eq!(r1.failed_runs, 0);
        assert_eq!(r1.summary.len(), 2);
        for row in &r1.summary {
            assert_eq!(row.runs, 2);
            assert!(row.median_sect_dist.is_finite());
        }
        // Arc lengths of estimates hover near the truth.
        for row in r1.rows.iter().filter(|r| r.kind == "estimate") {
            assert!((row.arc_length - TAU).abs() < 0.3);
        }
    }

    #[test]
    fn curve_spec_json_shapes() {
        let preset: CurveSpec = serde_json::from_str("\"blob\"").unwrap();
        assert_eq!(preset, CurveSpec::Preset("blob".to_string()));
        let coeffs: CurveSpec =
            serde_json::from_str(r#"{"coeffs":[{"j":1,"re":1.0,"im":0.0}]}"#).unwrap();
        assert!(matches!(coeffs, CurveSpec::Coeffs { .. }));
        assert!(coeffs.resolve().is_ok());
    }
}
