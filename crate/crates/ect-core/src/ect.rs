//! The exact Euler characteristic transform engine.
//!
//! For a PL-embedded one-dimensional complex and a unit direction `v`, the
//! Euler characteristic curve is
//!
//! ```text
//! ecc(v, t) = #{sample points p : <p,v> <= t}
//!           - #{segments (p,q) : max(<p,v>, <q,v>) <= t}
//! ```
//!
//! over the refined structure in which every polyline point is a sample
//! vertex. Each curve is a right-continuous integer step function; the `<=`
//! threshold matches closed sublevel sets, and jumps at equal heights are
//! merged so the representation is canonical. [`euler_sublevel`] clips the
//! complex at a single threshold and counts cells directly, giving an
//! independent oracle for the sweep-based construction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{ComplexError, CwComplex, DirectionSet, Embedding};
use crate::geometry::dot;

#[derive(Debug, Error)]
pub enum EctError {
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("breakpoints must be strictly increasing and finite")]
    BadBreakpoints,
    #[error("need exactly one more value than breakpoints (got {values} values, {breakpoints} breakpoints)")]
    LengthMismatch { breakpoints: usize, values: usize },
    #[error("direction has dimension {got}, embedding has dimension {expected}")]
    DirectionDimension { got: usize, expected: usize },
    #[error("threshold t={t} ties a sample-point height exactly")]
    TieAtThreshold { t: f64 },
    #[error("bounding radius {a} is smaller than {location} at norm {norm}")]
    RadiusExceeded { a: f64, norm: f64, location: String },
    #[error("bounding radius must be positive (got {0})")]
    BadRadius(f64),
    #[error("fields are incompatible: {0}")]
    IncompatibleFields(String),
}

/// A right-continuous piecewise-constant integer-valued function of one real
/// variable. `value(t) = values[i]` for `t` in `[breakpoints[i-1], breakpoints[i])`,
/// with `values[0]` to the left of every breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepFunctionRepr")]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<i64>,
}

#[derive(Deserialize)]
struct StepFunctionRepr {
    breakpoints: Vec<f64>,
    values: Vec<i64>,
}

impl TryFrom<StepFunctionRepr> for StepFunction {
    type Error = EctError;
    fn try_from(r: StepFunctionRepr) -> Result<Self, EctError> {
        StepFunction::new(r.breakpoints, r.values)
    }
}

impl StepFunction {
    /// Build from explicit data; merges adjacent equal values into canonical
    /// form. Breakpoints must be finite and strictly increasing.
    pub fn new(breakpoints: Vec<f64>, values: Vec<i64>) -> Result<Self, EctError> {
        if values.len() != breakpoints.len() + 1 {
            return Err(EctError::LengthMismatch {
                breakpoints: breakpoints.len(),
                values: values.len(),
            });
        }
        if breakpoints.iter().any(|t| !t.is_finite())
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(EctError::BadBreakpoints);
        }
        let mut out = StepFunction {
            breakpoints: Vec::with_capacity(breakpoints.len()),
            values: vec![values[0]],
        };
        for (t, v) in breakpoints.into_iter().zip(values.into_iter().skip(1)) {
            if v != *out.values.last().unwrap() {
                out.breakpoints.push(t);
                out.values.push(v);
            }
        }
        Ok(out)
    }

    pub fn constant(v: i64) -> Self {
        StepFunction {
            breakpoints: Vec::new(),
            values: vec![v],
        }
    }

    /// Build from signed jumps `(height, delta)` on top of `base`. Jumps at
    /// exactly equal heights are merged; zero net jumps disappear.
    pub fn from_jumps(mut jumps: Vec<(f64, i64)>, base: i64) -> Self {
        jumps.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite heights"));
        let mut breakpoints = Vec::new();
        let mut values = vec![base];
        let mut acc = base;
        let mut i = 0;
        while i < jumps.len() {
            let t = jumps[i].0;
            let mut delta = 0;
            while i < jumps.len() && jumps[i].0 == t {
                delta += jumps[i].1;
                i += 1;
            }
            if delta != 0 {
                acc += delta;
                breakpoints.push(t);
                values.push(acc);
            }
        }
        StepFunction {
            breakpoints,
            values,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn initial_value(&self) -> i64 {
        self.values[0]
    }

    pub fn final_value(&self) -> i64 {
        *self.values.last().unwrap()
    }

    /// Right-continuous evaluation.
    pub fn eval(&self, t: f64) -> i64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx]
    }

    /// Exact integral over `[lo, hi]`.
    pub fn integral_on(&self, lo: f64, hi: f64) -> f64 {
        self.piece_integral(lo, hi, |v| v as f64)
    }

    /// Exact integral of `|f|` over `[lo, hi]`.
    pub fn abs_integral_on(&self, lo: f64, hi: f64) -> f64 {
        self.piece_integral(lo, hi, |v| (v as f64).abs())
    }

    fn piece_integral(&self, lo: f64, hi: f64, map: impl Fn(i64) -> f64) -> f64 {
        assert!(lo <= hi, "empty integration range");
        let mut total = 0.0;
        let mut t = lo;
        let mut idx = self.breakpoints.partition_point(|&b| b <= lo);
        while t < hi {
            let next = if idx < self.breakpoints.len() {
                self.breakpoints[idx].min(hi)
            } else {
                hi
            };
            if next > t {
                total += map(self.values[idx]) * (next - t);
                t = next;
            }
            idx += 1;
        }
        total
    }

    /// Exact L1 distance to `other` over `[lo, hi]`, by merging breakpoints.
    pub fn l1_distance_on(&self, other: &StepFunction, lo: f64, hi: f64) -> f64 {
        assert!(lo <= hi, "empty integration range");
        let mut total = 0.0;
        let mut t = lo;
        let mut i = self.breakpoints.partition_point(|&b| b <= lo);
        let mut j = other.breakpoints.partition_point(|&b| b <= lo);
        while t < hi {
            let next_i = self.breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
            let next_j = other.breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
            let next = next_i.min(next_j).min(hi);
            if next > t {
                total += ((self.values[i] - other.values[j]).abs() as f64) * (next - t);
                t = next;
            }
            if next_i <= next {
                i += 1;
            }
            if next_j <= next {
                j += 1;
            }
        }
        total
    }
}

/// The refined sample structure of an embedded complex: every vertex and
/// every interior polyline point is a sample, and segments join consecutive
/// samples along each edge.
#[derive(Debug, Clone)]
pub(crate) struct SampleGraph {
    pub points: Vec<Vec<f64>>,
    pub segments: Vec<(usize, usize)>,
}

impl SampleGraph {
    pub fn build(complex: &CwComplex, emb: &Embedding) -> Result<Self, ComplexError> {
        let mut points = Vec::with_capacity(complex.vertices.len());
        let mut vertex_index = std::collections::BTreeMap::new();
        for v in &complex.vertices {
            vertex_index.insert(v.as_str(), points.len());
            points.push(emb.position(v)?.clone());
        }
        let mut segments = Vec::new();
        for edge in &complex.edges {
            let u = *vertex_index
                .get(edge.u.as_str())
                .ok_or_else(|| ComplexError::UnknownVertex(edge.u.clone()))?;
            let v = *vertex_index
                .get(edge.v.as_str())
                .ok_or_else(|| ComplexError::UnknownVertex(edge.v.clone()))?;
            let mut prev = u;
            if let Some(interior) = emb.interiors.get(&edge.id) {
                for p in interior {
                    let idx = points.len();
                    points.push(p.clone());
                    segments.push((prev, idx));
                    prev = idx;
                }
            }
            segments.push((prev, v));
        }
        Ok(SampleGraph { points, segments })
    }

    fn heights(&self, v: &[f64]) -> Vec<f64> {
        self.points.iter().map(|p| dot(p, v)).collect()
    }
}

fn check_direction(dir: &[f64], dim: usize) -> Result<(), EctError> {
    if dir.len() != dim {
        return Err(EctError::DirectionDimension {
            got: dir.len(),
            expected: dim,
        });
    }
    Ok(())
}

fn ecc_graph(graph: &SampleGraph, v: &[f64]) -> StepFunction {
    let heights = graph.heights(v);
    let mut jumps = Vec::with_capacity(graph.points.len() + graph.segments.len());
    for &h in &heights {
        jumps.push((h, 1));
    }
    for &(i, j) in &graph.segments {
        jumps.push((heights[i].max(heights[j]), -1));
    }
    StepFunction::from_jumps(jumps, 0)
}

/// Euler characteristic curve of the embedded complex in direction `v`,
/// as a canonical right-continuous step function.
pub fn ecc(complex: &CwComplex, emb: &Embedding, v: &[f64]) -> Result<StepFunction, EctError> {
    check_direction(v, emb.dim)?;
    let graph = SampleGraph::build(complex, emb)?;
    Ok(ecc_graph(&graph, v))
}

/// Brute-force oracle: explicitly clip every PL segment at height `t`,
/// count the vertices and edges of the clipped sublevel complex, and return
/// `V - E`. Thresholds that tie a sample height exactly are rejected.
pub fn euler_sublevel(
    complex: &CwComplex,
    emb: &Embedding,
    v: &[f64],
    t: f64,
) -> Result<i64, EctError> {
    check_direction(v, emb.dim)?;
    let graph = SampleGraph::build(complex, emb)?;
    let heights = graph.heights(v);
    if heights.contains(&t) {
        return Err(EctError::TieAtThreshold { t });
    }

    // Vertices of the clipped complex: retained samples plus one clip point
    // per crossing segment. Edges: one per segment with any part below t
    // (heights are affine along a segment, so the part below is connected).
    let mut vertex_count = 0usize;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut sample_slot = vec![usize::MAX; graph.points.len()];
    for (i, &h) in heights.iter().enumerate() {
        if h <= t {
            sample_slot[i] = vertex_count;
            vertex_count += 1;
        }
    }
    for &(i, j) in &graph.segments {
        let below_i = heights[i] <= t;
        let below_j = heights[j] <= t;
        match (below_i, below_j) {
            (true, true) => edges.push((sample_slot[i], sample_slot[j])),
            (true, false) => {
                let clip = vertex_count;
                vertex_count += 1;
                edges.push((sample_slot[i], clip));
            }
            (false, true) => {
                let clip = vertex_count;
                vertex_count += 1;
                edges.push((clip, sample_slot[j]));
            }
            (false, false) => {}
        }
    }
    Ok(vertex_count as i64 - edges.len() as i64)
}

/// A direction set paired with one ECC per direction, restricted to the
/// band `[-a, a]` that contains the shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EctField {
    pub directions: DirectionSet,
    pub radius: f64,
    pub curves: Vec<StepFunction>,
}

impl EctField {
    pub fn new(
        directions: DirectionSet,
        radius: f64,
        curves: Vec<StepFunction>,
    ) -> Result<Self, EctError> {
        if radius <= 0.0 {
            return Err(EctError::BadRadius(radius));
        }
        if directions.len() != curves.len() {
            return Err(EctError::IncompatibleFields(format!(
                "{} directions vs {} curves",
                directions.len(),
                curves.len()
            )));
        }
        Ok(EctField {
            directions,
            radius,
            curves,
        })
    }
}

/// Compute the ECC for every direction in the set. Directions are evaluated
/// in parallel; the output ordering follows the direction set, so results do
/// not depend on the schedule.
pub fn ect_field(
    complex: &CwComplex,
    emb: &Embedding,
    dirs: &DirectionSet,
    a: f64,
) -> Result<EctField, EctError> {
    if a <= 0.0 {
        return Err(EctError::BadRadius(a));
    }
    if dirs.dim != emb.dim {
        return Err(EctError::DirectionDimension {
            got: dirs.dim,
            expected: emb.dim,
        });
    }
    let (radius, location) = crate::complex::max_radius(complex, emb)?;
    if radius > a {
        return Err(EctError::RadiusExceeded {
            a,
            norm: radius,
            location,
        });
    }
    let graph = SampleGraph::build(complex, emb)?;
    let curves: Vec<StepFunction> = dirs
        .vectors
        .par_iter()
        .map(|v| ecc_graph(&graph, v))
        .collect();
    EctField::new(dirs.clone(), a, curves)
}

fn check_compatible(f1: &EctField, f2: &EctField) -> Result<(), EctError> {
    if f1.radius != f2.radius {
        return Err(EctError::IncompatibleFields(format!(
            "radius {} vs {}",
            f1.radius, f2.radius
        )));
    }
    if f1.directions != f2.directions {
        return Err(EctError::IncompatibleFields(
            "direction sets differ".to_string(),
        ));
    }
    Ok(())
}

/// Exact transform distance: the maximum over the shared direction set of
/// the exact L1 distance between curves on `[-a, a]`. Over a finite set this
/// is a lower bound for the supremum over the whole sphere.
pub fn ect_distance(f1: &EctField, f2: &EctField) -> Result<f64, EctError> {
    check_compatible(f1, f2)?;
    let a = f1.radius;
    Ok(f1
        .curves
        .iter()
        .zip(&f2.curves)
        .map(|(c1, c2)| c1.l1_distance_on(c2, -a, a))
        .fold(0.0, f64::max))
}

/// A continuous piecewise-linear function on `[-a, a]` given by knots and
/// values; the smoothed transform of one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectCurve {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl SectCurve {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.knots[0] {
            return self.values[0];
        }
        if t >= *self.knots.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let idx = self.knots.partition_point(|&k| k <= t);
        let (t0, t1) = (self.knots[idx - 1], self.knots[idx]);
        let (v0, v1) = (self.values[idx - 1], self.values[idx]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Exact L1 distance between two PL curves sharing the domain, splitting
    /// segments at sign changes of the difference.
    pub fn l1_distance(&self, other: &SectCurve) -> f64 {
        let mut knots: Vec<f64> = self
            .knots
            .iter()
            .chain(other.knots.iter())
            .copied()
            .collect();
        knots.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        knots.dedup();
        let mut total = 0.0;
        for w in knots.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let d0 = self.eval(t0) - other.eval(t0);
            let d1 = self.eval(t1) - other.eval(t1);
            let len = t1 - t0;
            if d0 * d1 >= 0.0 {
                total += 0.5 * (d0.abs() + d1.abs()) * len;
            } else {
                let root = len * d0 / (d0 - d1);
                total += 0.5 * (d0.abs() * root + d1.abs() * (len - root));
            }
        }
        total
    }
}

/// Integrate the mean-centered ECC from `-a`: the smoothed transform for one
/// direction. Starts at exactly 0 and returns to 0 at `+a` up to rounding.
pub fn sect(ecc: &StepFunction, a: f64) -> SectCurve {
    assert!(a > 0.0, "bounding radius must be positive");
    let mean = ecc.integral_on(-a, a) / (2.0 * a);
    let mut knots = vec![-a];
    for &b in ecc.breakpoints() {
        if b > -a && b < a {
            knots.push(b);
        }
    }
    knots.push(a);
    let mut values = Vec::with_capacity(knots.len());
    let mut acc = 0.0;
    values.push(acc);
    for w in knots.windows(2) {
        let mid = ecc.eval(w[0]) as f64;
        acc += (mid - mean) * (w[1] - w[0]);
        values.push(acc);
    }
    SectCurve { knots, values }
}

/// Smoothed transforms for every direction of a field.
pub fn sect_field(field: &EctField) -> Vec<SectCurve> {
    field.curves.iter().map(|c| sect(c, field.radius)).collect()
}

/// Exact transform distance between per-direction smoothed curves: max over
/// directions of the exact PL L1 distance.
pub fn sect_distance(s1: &[SectCurve], s2: &[SectCurve]) -> Result<f64, EctError> {
    if s1.len() != s2.len() {
        return Err(EctError::IncompatibleFields(format!(
            "{} curves vs {}",
            s1.len(),
            s2.len()
        )));
    }
    Ok(s1
        .iter()
        .zip(s2)
        .map(|(a, b)| a.l1_distance(b))
        .fold(0.0, f64::max))
}
