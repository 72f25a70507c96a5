//! Closed-form evaluators for the transform stability machinery.
//!
//! The central quantity is the per-cell penalty
//!
//! ```text
//! G(eps) = 8 * sqrt(L * n * eps) + n * eps     if L / n > 2 eps
//!          11 * n * eps                        otherwise,
//! n      = max(ceil((M^2 L^3 / 24 eps)^(1/3)), ceil(L M / pi), 1),
//! ```
//!
//! which controls how far the transforms of two embeddings of the same
//! complex can drift apart when the embeddings stay within `eps` of each
//! other under constant-velocity parameterizations with matching arc
//! lengths: the total bound is `|Z0| * eps + sum G(eps)` over cells.
//! Companions: the local two-curve bound, the chord-versus-arc bound for
//! curvature-limited curves, the coordinate-variation bound, the
//! PL-interpolation bound `M L eps / sqrt(12)`, and a convexity cap used by
//! the interpolation argument. [`metric_upper_bound`] produces a concrete
//! `eps` witnessing how close two embeddings are.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{realized_polyline, ComplexError, CwComplex, Embedding};
use crate::geometry::{dist, lerp};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative (got {value})")]
    Negative { name: &'static str, value: f64 },
    #[error("eps={eps} must lie in (0, pi/M) = (0, {limit})")]
    EpsTooLarge { eps: f64, limit: f64 },
    #[error("coordinate length {lx} exceeds total length {l}")]
    CoordinateExceedsLength { lx: f64, l: f64 },
    #[error("embeddings disagree with the complex: {0}")]
    StructureMismatch(String),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

fn require_positive(name: &'static str, value: f64) -> Result<(), BoundsError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(BoundsError::NonPositive { name, value })
    }
}

/// Ceiling with a snap: values within 1e-12 of an integer are treated as
/// that integer first, so exact-integer arguments do not round up spuriously.
fn snapped_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 {
        r
    } else {
        x.ceil()
    }
}

/// Number of pieces a cell of length `l` must be split into so that each
/// piece of a curvature-`m` curve is nearly straight at scale `eps`.
pub fn n_lambda(m: f64, l: f64, eps: f64) -> Result<u64, BoundsError> {
    require_positive("curvature bound", m)?;
    require_positive("cell length", l)?;
    require_positive("eps", eps)?;
    let by_sagitta = snapped_ceil((m * m * l * l * l / (24.0 * eps)).cbrt());
    let by_angle = snapped_ceil(l * m / std::f64::consts::PI);
    Ok((by_sagitta.max(by_angle).max(1.0)) as u64)
}

/// Per-cell transform penalty at perturbation scale `eps`.
pub fn g_lambda(m: f64, l: f64, eps: f64) -> Result<f64, BoundsError> {
    let n = n_lambda(m, l, eps)? as f64;
    Ok(if l / n > 2.0 * eps {
        8.0 * (l * n * eps).sqrt() + n * eps
    } else {
        11.0 * n * eps
    })
}

/// Inputs for [`stability_bound`]: per-cell arc lengths, a curvature bound,
/// the 0-cell count, and the perturbation scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityInput {
    pub cell_lengths: Vec<f64>,
    pub curvature_bound: f64,
    pub vertex_count: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellBound {
    pub length: f64,
    pub pieces: u64,
    pub penalty: f64,
}

/// Evaluated stability bound: `total = |Z0| * eps + sum of penalties`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub cells: Vec<CellBound>,
    pub vertex_term: f64,
    pub total: f64,
}

pub fn stability_bound(input: &StabilityInput) -> Result<BoundReport, BoundsError> {
    let mut cells = Vec::with_capacity(input.cell_lengths.len());
    let mut total = input.vertex_count as f64 * input.epsilon;
    let vertex_term = total;
    for &l in &input.cell_lengths {
        let pieces = n_lambda(input.curvature_bound, l, input.epsilon)?;
        let penalty = g_lambda(input.curvature_bound, l, input.epsilon)?;
        total += penalty;
        cells.push(CellBound {
            length: l,
            pieces,
            penalty,
        });
    }
    Ok(BoundReport {
        cells,
        vertex_term,
        total,
    })
}

/// Transform gap between two nearly straight curves with endpoints within
/// `eps`: `8 sqrt(L eps)` when `L > 2 eps`, else `10 eps`.
pub fn local_ect_bound(l: f64, eps: f64) -> Result<f64, BoundsError> {
    if l < 0.0 {
        return Err(BoundsError::Negative {
            name: "chord length",
            value: l,
        });
    }
    require_positive("eps", eps)?;
    Ok(if l > 2.0 * eps {
        8.0 * (l * eps).sqrt()
    } else {
        10.0 * eps
    })
}

/// Minimum chord spanned by an arc of length `eps` on a curve with curvature
/// at most `m`: `(2/m) sin(m eps / 2)`. Requires `0 < eps < pi/m`.
pub fn chord_lower_bound(m: f64, eps: f64) -> Result<f64, BoundsError> {
    require_positive("curvature bound", m)?;
    require_positive("eps", eps)?;
    let limit = std::f64::consts::PI / m;
    if eps >= limit {
        return Err(BoundsError::EpsTooLarge { eps, limit });
    }
    Ok(2.0 / m * (m * eps / 2.0).sin())
}

/// Cubic relaxation of [`chord_lower_bound`]: `eps - m^2 eps^3 / 24`.
pub fn chord_lower_bound_cubic(m: f64, eps: f64) -> Result<f64, BoundsError> {
    require_positive("curvature bound", m)?;
    require_positive("eps", eps)?;
    let limit = std::f64::consts::PI / m;
    if eps >= limit {
        return Err(BoundsError::EpsTooLarge { eps, limit });
    }
    Ok(eps - m * m * eps * eps * eps / 24.0)
}

/// Variation cap for any coordinate of a length-`l` path whose first
/// coordinate already spans `lx`: `sqrt(l^2 - lx^2)`.
pub fn coord_variation_bound(l: f64, lx: f64) -> Result<f64, BoundsError> {
    if lx < 0.0 {
        return Err(BoundsError::Negative {
            name: "coordinate length",
            value: lx,
        });
    }
    if l < 0.0 {
        return Err(BoundsError::Negative {
            name: "length",
            value: l,
        });
    }
    if lx > l {
        return Err(BoundsError::CoordinateExceedsLength { lx, l });
    }
    Ok((l * l - lx * lx).sqrt())
}

/// Transform gap between a curvature-`m` shape of total length `l_total` and
/// its PL interpolation on an `eps`-dense sample set: `m l eps / sqrt(12)`.
/// `m = 0` (straight segments) gives 0 with no constraint on `eps`.
pub fn interpolation_bound(m: f64, l_total: f64, eps: f64) -> Result<f64, BoundsError> {
    if m < 0.0 {
        return Err(BoundsError::Negative {
            name: "curvature bound",
            value: m,
        });
    }
    require_positive("total length", l_total)?;
    require_positive("eps", eps)?;
    if m == 0.0 {
        return Ok(0.0);
    }
    let limit = std::f64::consts::PI / m;
    if eps >= limit {
        return Err(BoundsError::EpsTooLarge { eps, limit });
    }
    Ok(m * l_total * eps / 12.0_f64.sqrt())
}

/// Cap on `sum f(x_i)` over partitions of `l` into parts of size at most
/// `eps`, for convex `f` with `f(0) = 0`: `l * f(eps) / eps`.
pub fn convexity_cap(l: f64, eps: f64, f_at_eps: f64) -> Result<f64, BoundsError> {
    require_positive("total", l)?;
    require_positive("eps", eps)?;
    if f_at_eps < 0.0 {
        return Err(BoundsError::Negative {
            name: "f(eps)",
            value: f_at_eps,
        });
    }
    Ok(l * f_at_eps / eps)
}

/// One cell's polyline with its constant-velocity parameterization: knot
/// fractions are cumulative arc length over total length.
struct CvPolyline {
    points: Vec<Vec<f64>>,
    fractions: Vec<f64>,
    length: f64,
}

impl CvPolyline {
    fn build(points: Vec<Vec<f64>>) -> Result<Self, BoundsError> {
        let mut cum = vec![0.0];
        for w in points.windows(2) {
            cum.push(cum.last().unwrap() + dist(&w[0], &w[1]));
        }
        let length = *cum.last().unwrap();
        if !length.is_finite() || length <= 0.0 {
            return Err(BoundsError::StructureMismatch(
                "cell with zero arc length".to_string(),
            ));
        }
        let fractions = cum.iter().map(|c| c / length).collect();
        Ok(CvPolyline {
            points,
            fractions,
            length,
        })
    }

    /// Point at arc-length fraction `u` in `[0, 1]`.
    fn at(&self, u: f64) -> Vec<f64> {
        if u <= 0.0 {
            return self.points[0].clone();
        }
        if u >= 1.0 {
            return self.points.last().unwrap().clone();
        }
        let idx = self.fractions.partition_point(|&f| f <= u);
        let (f0, f1) = (self.fractions[idx - 1], self.fractions[idx]);
        let w = if f1 > f0 { (u - f0) / (f1 - f0) } else { 0.0 };
        lerp(&self.points[idx - 1], &self.points[idx], w)
    }

    /// Point at cyclically shifted fraction (closed polylines only).
    fn at_cyclic(&self, u: f64) -> Vec<f64> {
        self.at(u.rem_euclid(1.0))
    }

    fn reversed(&self) -> CvPolyline {
        let mut points = self.points.clone();
        points.reverse();
        CvPolyline::build(points).expect("reversal preserves length")
    }
}

/// Exact sup distance between two constant-velocity polylines matched by
/// arc-length fraction. On each merged-knot interval both maps are affine in
/// the fraction, so the norm of the difference is convex and maximised at
/// the interval ends.
fn matched_sup(x: &CvPolyline, y: &CvPolyline) -> f64 {
    let mut knots: Vec<f64> = x
        .fractions
        .iter()
        .chain(y.fractions.iter())
        .copied()
        .collect();
    knots.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    knots
        .iter()
        .map(|&u| dist(&x.at(u), &y.at(u)))
        .fold(0.0, f64::max)
}

/// As [`matched_sup`] but with `y` traversed from cyclic offset `shift`.
fn matched_sup_shifted(x: &CvPolyline, y: &CvPolyline, shift: f64) -> f64 {
    let mut knots: Vec<f64> = x.fractions.clone();
    for &f in &y.fractions {
        knots.push((f - shift).rem_euclid(1.0));
    }
    knots.push(0.0);
    knots.push(1.0);
    knots.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    knots
        .iter()
        .map(|&u| dist(&x.at(u), &y.at_cyclic(u + shift)))
        .fold(0.0, f64::max)
}

const ROTATION_SEARCH_GRID: usize = 512;

/// Witness for the embedding distance of two realizations of one complex:
/// the larger of the worst per-cell arc-length difference and the sup-norm
/// distance under matched constant-velocity parameterizations. For a
/// single-cycle complex, `rotation_search` additionally minimizes the
/// sup-norm over cyclic shifts and orientation reversal on a grid. The true
/// distance is an infimum over all correspondences, so this value can only
/// overestimate it.
pub fn metric_upper_bound(
    complex: &CwComplex,
    emb_x: &Embedding,
    emb_y: &Embedding,
    rotation_search: bool,
) -> Result<f64, BoundsError> {
    if emb_x.dim != emb_y.dim {
        return Err(BoundsError::StructureMismatch(format!(
            "ambient dimensions differ: {} vs {}",
            emb_x.dim, emb_y.dim
        )));
    }
    let mut eps = 0.0_f64;
    // Isolated vertices are matched directly; vertices on edges are covered
    // by the cell endpoints below (and by the shift search for cycles).
    let incident: std::collections::BTreeSet<&str> = complex
        .edges
        .iter()
        .flat_map(|e| [e.u.as_str(), e.v.as_str()])
        .collect();
    for v in &complex.vertices {
        if !incident.contains(v.as_str()) {
            eps = eps.max(dist(emb_x.position(v)?, emb_y.position(v)?));
        }
    }
    let search = rotation_search && complex.is_single_cycle();
    for edge in &complex.edges {
        let px = CvPolyline::build(realized_polyline(emb_x, edge)?)?;
        let py = CvPolyline::build(realized_polyline(emb_y, edge)?)?;
        eps = eps.max((px.length - py.length).abs());
        let sup = if search {
            let reversed = py.reversed();
            let mut best = f64::INFINITY;
            for k in 0..ROTATION_SEARCH_GRID {
                let shift = k as f64 / ROTATION_SEARCH_GRID as f64;
                best = best.min(matched_sup_shifted(&px, &py, shift));
                best = best.min(matched_sup_shifted(&px, &reversed, shift));
            }
            best
        } else {
            matched_sup(&px, &py)
        };
        eps = eps.max(sup);
    }
    Ok(eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{CwComplex, Edge, Embedding};
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    #[test]
    fn n_lambda_reference_values() {
        // Direct evaluation of the piece-count formula.
        assert_eq!(n_lambda(2.0, PI, 0.01).unwrap(), 9);
        assert_eq!(n_lambda(1e-12, 1.0, 1.0).unwrap(), 1);
        // Arguments that land exactly on 1 must not round up.
        assert_eq!(n_lambda(1.0, PI, PI * PI * PI / 24.0).unwrap(), 1);
        assert!(n_lambda(-1.0, 1.0, 1.0).is_err());
        assert!(n_lambda(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn g_lambda_reference_values() {
        // n = 9, L/n ~ 0.349 > 0.02, so the sqrt branch applies.
        let g = g_lambda(2.0, PI, 0.01).unwrap();
        let expect = 8.0 * (PI * 9.0 * 0.01).sqrt() + 9.0 * 0.01;
        assert!((g - expect).abs() < 1e-12);
        assert!((g - 4.344).abs() < 1e-3);
        // Short-cell branch: L/n <= 2 eps gives 11 n eps.
        let g2 = g_lambda(1.0, 0.01, 0.01).unwrap();
        assert!((g2 - 0.11).abs() < 1e-15);
    }

    #[test]
    fn g_lambda_vanishes_with_eps() {
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let eps = 10f64.powi(-k);
            let g = g_lambda(2.0, PI, eps).unwrap();
            assert!(g < prev, "G({eps}) = {g} not below {prev}");
            prev = g;
        }
        assert!(prev < 0.2);
    }

    #[test]
    fn stability_bound_assembles_cells() {
        let single = stability_bound(&StabilityInput {
            cell_lengths: vec![PI],
            curvature_bound: 2.0,
            vertex_count: 0,
            epsilon: 0.01,
        })
        .unwrap();
        assert!((single.total - 4.344).abs() < 1e-3);
        assert_eq!(single.cells[0].pieces, 9);

        let double = stability_bound(&StabilityInput {
            cell_lengths: vec![PI, PI],
            curvature_bound: 2.0,
            vertex_count: 2,
            epsilon: 0.01,
        })
        .unwrap();
        let g = g_lambda(2.0, PI, 0.01).unwrap();
        assert!((double.total - (2.0 * 0.01 + 2.0 * g)).abs() < 1e-12);

        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let total = stability_bound(&StabilityInput {
                cell_lengths: vec![PI],
                curvature_bound: 2.0,
                vertex_count: 3,
                epsilon: 10f64.powi(-k),
            })
            .unwrap()
            .total;
            assert!(total < prev);
            prev = total;
        }
    }

    #[test]
    fn local_bound_branches() {
        assert!((local_ect_bound(1.0, 0.01).unwrap() - 0.8).abs() < 1e-15);
        assert!((local_ect_bound(0.01, 0.01).unwrap() - 0.1).abs() < 1e-15);
        // Ties go to the short branch.
        assert!((local_ect_bound(0.02, 0.01).unwrap() - 0.1).abs() < 1e-15);
        assert!(local_ect_bound(-1.0, 0.01).is_err());
    }

    #[test]
    fn chord_bound_reference_values() {
        let c = chord_lower_bound(1.0, PI / 2.0).unwrap();
        assert!((c - 2.0_f64.sqrt()).abs() < 1e-12);
        let cubic = chord_lower_bound_cubic(1.0, PI / 2.0).unwrap();
        assert!((cubic - (PI / 2.0 - (PI / 2.0).powi(3) / 24.0)).abs() < 1e-12);
        assert!(cubic <= c);
        assert!(chord_lower_bound(1.0, PI).is_err());
        // Small-angle limit: bound / eps -> 1, and never exceeds eps.
        for k in 1..10 {
            let eps = 10f64.powi(-k);
            let b = chord_lower_bound(2.0, eps).unwrap();
            assert!(b <= eps);
            assert!(b / eps >= 1.0 - eps * eps);
        }
        assert!((chord_lower_bound(2.0, 1e-8).unwrap() / 1e-8 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coord_variation_reference_values() {
        assert_eq!(coord_variation_bound(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(coord_variation_bound(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(coord_variation_bound(5.0, 3.0).unwrap(), 4.0);
        assert!(coord_variation_bound(1.0, 2.0).is_err());
    }

    #[test]
    fn interpolation_bound_values() {
        let b = interpolation_bound(1.0, 2.0 * PI, 2.0 * PI / 64.0).unwrap();
        let expect = PI * PI / 16.0 / 12.0_f64.sqrt();
        assert!((b - expect).abs() < 1e-15);
        assert!((b - 0.178069).abs() < 1e-6);
        // Linear in eps.
        let half = interpolation_bound(1.0, 2.0 * PI, PI / 64.0).unwrap();
        assert!((2.0 * half - b).abs() < 1e-15);
        assert_eq!(interpolation_bound(0.0, 1.0, 0.5).unwrap(), 0.0);
        assert!(interpolation_bound(1.0, 1.0, 4.0).is_err());
    }

    #[test]
    fn convexity_cap_bounds_partitions() {
        use rand::Rng;
        use rand::SeedableRng;
        // f(x) = x^2, L = 1, eps = 0.1: cap is 0.1.
        let cap = convexity_cap(1.0, 0.1, 0.01).unwrap();
        assert!((cap - 0.1).abs() < 1e-15);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            // Random partition of 1 into parts of size at most 0.1.
            let mut rest = 1.0;
            let mut sum_sq = 0.0;
            while rest > 1e-12 {
                let part = rng.random_range(0.0..=0.1_f64).min(rest);
                sum_sq += part * part;
                rest -= part;
            }
            assert!(sum_sq <= cap + 1e-12);
        }
        // Single part of size eps = L attains the cap.
        let tight = convexity_cap(0.1, 0.1, 0.01).unwrap();
        assert!((tight - 0.01).abs() < 1e-15);
        // Equal parts L/k with k > L/eps: sum = L^2/k <= L * eps.
        let k = 50.0;
        assert!(1.0 / k <= convexity_cap(1.0, 0.1, 0.1 * 0.1).unwrap() + 1e-15);
    }

    fn segment_shape(shift: f64) -> (CwComplex, Embedding) {
        let complex = CwComplex::new(
            vec!["a".into(), "b".into()],
            vec![Edge {
                id: "e".into(),
                u: "a".into(),
                v: "b".into(),
            }],
        );
        let emb = Embedding::new(
            2,
            [
                ("a".to_string(), vec![shift, 0.0]),
                ("b".to_string(), vec![1.0 + shift, 0.0]),
            ]
            .into_iter()
            .collect(),
            BTreeMap::new(),
        );
        (complex, emb)
    }

    #[test]
    fn metric_witness_identity_and_translation() {
        let (complex, emb) = segment_shape(0.0);
        assert_eq!(
            metric_upper_bound(&complex, &emb, &emb, false).unwrap(),
            0.0
        );
        let (_, shifted) = segment_shape(0.25);
        let eps = metric_upper_bound(&complex, &emb, &shifted, false).unwrap();
        assert!((eps - 0.25).abs() < 1e-12);
    }

    #[test]
    fn metric_witness_circle_refinements() {
        // Two polygonal models of the unit circle on the same loop complex.
        let ngon = |n: usize| {
            let pt = |i: usize| {
                let t = 2.0 * PI * i as f64 / n as f64;
                vec![t.cos(), t.sin()]
            };
            Embedding::new(
                2,
                [("v0".to_string(), pt(0))].into_iter().collect(),
                [("cycle".to_string(), (1..n).map(pt).collect())]
                    .into_iter()
                    .collect(),
            )
        };
        let complex = CwComplex::new(
            vec!["v0".into()],
            vec![Edge {
                id: "cycle".into(),
                u: "v0".into(),
                v: "v0".into(),
            }],
        );
        let e64 = ngon(64);
        let e128 = ngon(128);
        let eps = metric_upper_bound(&complex, &e64, &e128, true).unwrap();
        let len64 = 64.0 * 2.0 * (PI / 64.0).sin();
        let len128 = 128.0 * 2.0 * (PI / 128.0).sin();
        let length_defect = (len128 - len64).abs();
        // Pointwise, both polygons stay within one sagitta of the circle.
        let sagitta = |n: f64| 1.0 - (PI / n).cos();
        let cap = length_defect + sagitta(64.0) + sagitta(128.0);
        assert!(eps <= cap + 1e-9, "eps {eps} above cap {cap}");
        assert!(eps >= length_defect - 1e-12);
    }

    #[test]
    fn rotation_search_finds_matching_start() {
        // Same square traversed from different start corners.
        let complex = CwComplex::new(
            vec!["v0".into()],
            vec![Edge {
                id: "cycle".into(),
                u: "v0".into(),
                v: "v0".into(),
            }],
        );
        let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let shape_from = |start: usize| {
            let pts: Vec<Vec<f64>> = (0..4).map(|i| corners[(start + i) % 4].to_vec()).collect();
            Embedding::new(
                2,
                [("v0".to_string(), pts[0].clone())].into_iter().collect(),
                [("cycle".to_string(), pts[1..].to_vec())]
                    .into_iter()
                    .collect(),
            )
        };
        let a = shape_from(0);
        let b = shape_from(2);
        let without = metric_upper_bound(&complex, &a, &b, false).unwrap();
        let with = metric_upper_bound(&complex, &a, &b, true).unwrap();
        assert!(without > 1.0);
        assert!(with < 0.02, "rotation search left eps = {with}");
    }
}
