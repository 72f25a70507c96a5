//! Finite one-dimensional CW complexes with a fixed cellular structure and
//! their piecewise-linear embeddings into R^d.
//!
//! A [`CwComplex`] is a combinatorial multigraph: named 0-cells and a
//! multiset of 1-cells given as (possibly equal) endpoint pairs. An
//! [`Embedding`] realizes it in R^d by assigning a position to every vertex
//! and an ordered interior polyline to every edge. Sample points are stored
//! explicitly, so the vertex set together with all interior points is always
//! a compatible sample set: every 0-cell is present and every 1-cell carries
//! at least the points needed to pin down its image.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{dist, norm};

#[derive(Debug, Error)]
pub enum ComplexError {
    #[error("unknown edge id '{0}'")]
    UnknownEdge(String),
    #[error("unknown vertex id '{0}'")]
    UnknownVertex(String),
    #[error("direction set needs d >= 1 and m >= 1 (got d={dim}, m={count})")]
    BadDirectionParams { dim: usize, count: usize },
    #[error("direction vector {index} has norm {norm}, expected 1")]
    NotUnit { index: usize, norm: f64 },
    #[error("direction vector {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
}

/// One 1-cell of a complex. Loops (`u == v`) are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub u: String,
    pub v: String,
}

impl Edge {
    pub fn is_loop(&self) -> bool {
        self.u == self.v
    }
}

/// A finite one-dimensional CW complex with a fixed cellular structure:
/// named 0-cells plus a multiset of 1-cells attached at their endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CwComplex {
    pub vertices: Vec<String>,
    pub edges: Vec<Edge>,
}

impl CwComplex {
    pub fn new(vertices: Vec<String>, edges: Vec<Edge>) -> Self {
        CwComplex { vertices, edges }
    }

    /// `|V| - |E|` of the whole complex.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.iter().find(|e| e.id == id)
    }

    /// Whether the underlying multigraph is connected (vertex-empty
    /// complexes count as connected).
    pub fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return true;
        }
        let index: BTreeMap<&str, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i))
            .collect();
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            let (Some(&a), Some(&b)) = (index.get(e.u.as_str()), index.get(e.v.as_str())) else {
                return false;
            };
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Is this the canonical single-cycle structure: one vertex carrying one
    /// loop edge?
    pub fn is_single_cycle(&self) -> bool {
        self.vertices.len() == 1 && self.edges.len() == 1 && self.edges[0].is_loop()
    }
}

/// A PL realization of a complex in R^d: per-vertex positions plus ordered
/// interior polyline points per edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub dim: usize,
    pub positions: BTreeMap<String, Vec<f64>>,
    pub interiors: BTreeMap<String, Vec<Vec<f64>>>,
}

impl Embedding {
    pub fn new(
        dim: usize,
        positions: BTreeMap<String, Vec<f64>>,
        interiors: BTreeMap<String, Vec<Vec<f64>>>,
    ) -> Self {
        Embedding {
            dim,
            positions,
            interiors,
        }
    }

    pub fn position(&self, vertex: &str) -> Result<&Vec<f64>, ComplexError> {
        self.positions
            .get(vertex)
            .ok_or_else(|| ComplexError::UnknownVertex(vertex.to_string()))
    }
}

/// The full polyline realizing one edge: `position(u), interior..., position(v)`.
pub fn realized_polyline(emb: &Embedding, edge: &Edge) -> Result<Vec<Vec<f64>>, ComplexError> {
    let mut pts = Vec::with_capacity(2 + emb.interiors.get(&edge.id).map_or(0, Vec::len));
    pts.push(emb.position(&edge.u)?.clone());
    if let Some(interior) = emb.interiors.get(&edge.id) {
        pts.extend(interior.iter().cloned());
    }
    pts.push(emb.position(&edge.v)?.clone());
    Ok(pts)
}

/// Chord-sum arc length of one edge's realized polyline.
pub fn edge_arc_length(
    complex: &CwComplex,
    emb: &Embedding,
    edge_id: &str,
) -> Result<f64, ComplexError> {
    let edge = complex
        .edge(edge_id)
        .ok_or_else(|| ComplexError::UnknownEdge(edge_id.to_string()))?;
    let pts = realized_polyline(emb, edge)?;
    Ok(pts.windows(2).map(|w| dist(&w[0], &w[1])).sum())
}

/// Sum of [`edge_arc_length`] over all edges.
pub fn total_arc_length(complex: &CwComplex, emb: &Embedding) -> Result<f64, ComplexError> {
    complex
        .edges
        .iter()
        .map(|e| edge_arc_length(complex, emb, &e.id))
        .sum()
}

/// The smallest ε for which the stored sample set (vertices plus interior
/// points) is ε-dense for the PL map: the maximum single-segment length.
pub fn epsilon_density(complex: &CwComplex, emb: &Embedding) -> Result<f64, ComplexError> {
    let mut max_seg = 0.0_f64;
    for edge in &complex.edges {
        let pts = realized_polyline(emb, edge)?;
        for w in pts.windows(2) {
            max_seg = max_seg.max(dist(&w[0], &w[1]));
        }
    }
    Ok(max_seg)
}

/// Largest Euclidean norm over every sample point, with a human-readable
/// label of where it sits.
pub fn max_radius(complex: &CwComplex, emb: &Embedding) -> Result<(f64, String), ComplexError> {
    let mut best = (0.0_f64, String::from("empty embedding"));
    for v in &complex.vertices {
        let r = norm(emb.position(v)?);
        if r > best.0 {
            best = (r, format!("vertex '{v}'"));
        }
    }
    for edge in &complex.edges {
        if let Some(interior) = emb.interiors.get(&edge.id) {
            for (i, p) in interior.iter().enumerate() {
                let r = norm(p);
                if r > best.0 {
                    best = (r, format!("edge '{}' interior point {i}", edge.id));
                }
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    DuplicateVertexId,
    DuplicateEdgeId,
    DanglingEndpoint,
    MissingPosition,
    WrongDimension,
    NonFiniteCoordinate,
    DegenerateLoop,
    ZeroLengthSegment,
    OrphanRecord,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::DuplicateVertexId => "duplicate vertex id",
            ViolationKind::DuplicateEdgeId => "duplicate edge id",
            ViolationKind::DanglingEndpoint => "dangling endpoint",
            ViolationKind::MissingPosition => "missing position",
            ViolationKind::WrongDimension => "wrong dimension",
            ViolationKind::NonFiniteCoordinate => "non-finite coordinate",
            ViolationKind::DegenerateLoop => "degenerate loop",
            ViolationKind::ZeroLengthSegment => "zero-length segment",
            ViolationKind::OrphanRecord => "orphan record",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Offending vertex or edge id.
    pub id: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            write!(f, "valid")
        } else {
            for v in &self.violations {
                writeln!(f, "{} at '{}': {}", v.kind, v.id, v.detail)?;
            }
            Ok(())
        }
    }
}

/// Check every structural invariant of a complex/embedding pair and report
/// each violation with the offending id. Succeeds iff the report is empty.
pub fn validate(complex: &CwComplex, emb: &Embedding) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |kind: ViolationKind, id: &str, detail: String| {
        violations.push(Violation {
            kind,
            id: id.to_string(),
            detail,
        });
    };

    let mut vertex_ids = BTreeSet::new();
    for v in &complex.vertices {
        if !vertex_ids.insert(v.as_str()) {
            push(
                ViolationKind::DuplicateVertexId,
                v,
                "vertex id appears more than once".into(),
            );
        }
    }
    let mut edge_ids = BTreeSet::new();
    for e in &complex.edges {
        if !edge_ids.insert(e.id.as_str()) {
            push(
                ViolationKind::DuplicateEdgeId,
                &e.id,
                "edge id appears more than once".into(),
            );
        }
        for endpoint in [&e.u, &e.v] {
            if !vertex_ids.contains(endpoint.as_str()) {
                push(
                    ViolationKind::DanglingEndpoint,
                    &e.id,
                    format!("endpoint '{endpoint}' is not a vertex"),
                );
            }
        }
    }

    let check_point = |p: &[f64]| -> Option<ViolationKind> {
        if p.len() != emb.dim {
            Some(ViolationKind::WrongDimension)
        } else if p.iter().any(|x| !x.is_finite()) {
            Some(ViolationKind::NonFiniteCoordinate)
        } else {
            None
        }
    };

    for v in &complex.vertices {
        match emb.positions.get(v) {
            None => push(
                ViolationKind::MissingPosition,
                v,
                "vertex has no position".into(),
            ),
            Some(p) => {
                if let Some(kind) = check_point(p) {
                    push(kind, v, format!("position {p:?}"));
                }
            }
        }
    }
    for id in emb.positions.keys() {
        if !vertex_ids.contains(id.as_str()) {
            push(
                ViolationKind::OrphanRecord,
                id,
                "position for a vertex not in the complex".into(),
            );
        }
    }
    for id in emb.interiors.keys() {
        if !edge_ids.contains(id.as_str()) {
            push(
                ViolationKind::OrphanRecord,
                id,
                "interior points for an edge not in the complex".into(),
            );
        }
    }

    for edge in &complex.edges {
        let interior = emb
            .interiors
            .get(&edge.id)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        for p in interior {
            if let Some(kind) = check_point(p) {
                push(kind, &edge.id, format!("interior point {p:?}"));
            }
        }
        if edge.is_loop() && interior.is_empty() {
            push(
                ViolationKind::DegenerateLoop,
                &edge.id,
                "loop edge needs at least one interior point".into(),
            );
        }
        // Segment-length check only makes sense once endpoints resolve.
        if let Ok(pts) = realized_polyline(emb, edge) {
            if pts.iter().all(|p| check_point(p).is_none()) {
                for (i, w) in pts.windows(2).enumerate() {
                    if dist(&w[0], &w[1]) <= 0.0 {
                        push(
                            ViolationKind::ZeroLengthSegment,
                            &edge.id,
                            format!("segment {i} has coincident endpoints"),
                        );
                    }
                }
            }
        }
    }

    ValidationReport { violations }
}

/// A finite set of unit directions on S^{d-1} together with the descriptor
/// that generated it. Two sets compare equal only if the descriptor and the
/// vectors agree exactly, which is what transform distances require.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    pub dim: usize,
    pub scheme: String,
    pub count: usize,
    pub seed: u64,
    pub vectors: Vec<Vec<f64>>,
}

impl DirectionSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Wrap explicit unit vectors (norms checked to 1e-9).
    pub fn from_vectors(dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self, ComplexError> {
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(ComplexError::DimensionMismatch {
                    index: i,
                    got: v.len(),
                    expected: dim,
                });
            }
            let n = norm(v);
            if (n - 1.0).abs() > 1e-9 {
                return Err(ComplexError::NotUnit { index: i, norm: n });
            }
        }
        Ok(DirectionSet {
            dim,
            scheme: "custom".into(),
            count: vectors.len(),
            seed: 0,
            vectors,
        })
    }
}

/// Deterministic direction sampling on S^{d-1}.
///
/// * d = 1: `{+1, -1}` regardless of `m`.
/// * d = 2: `m` equally spaced angles starting at angle 0.
/// * d = 3: Fibonacci-sphere points.
/// * d >= 4: seeded normalized Gaussian draws.
pub fn make_directions(d: usize, m: usize, seed: u64) -> Result<DirectionSet, ComplexError> {
    if d == 0 || m == 0 {
        return Err(ComplexError::BadDirectionParams { dim: d, count: m });
    }
    let (scheme, vectors): (&str, Vec<Vec<f64>>) = match d {
        1 => ("pm-one", vec![vec![1.0], vec![-1.0]]),
        2 => {
            let vs = (0..m)
                .map(|i| {
                    let theta = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
                    vec![theta.cos(), theta.sin()]
                })
                .collect();
            ("uniform-angles", vs)
        }
        3 => {
            // Golden-angle spiral; offsets keep the poles off the sample set.
            let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            let vs = (0..m)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect();
            ("fibonacci-sphere", vs)
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = rand_distr::StandardNormal;
            let mut vs = Vec::with_capacity(m);
            while vs.len() < m {
                let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(normal)).collect();
                let n = norm(&v);
                if n > 1e-8 {
                    vs.push(v.iter().map(|x| x / n).collect());
                }
            }
            ("gaussian", vs)
        }
    };
    // Renormalize so the unit invariant holds exactly up to one rounding.
    let vectors = vectors
        .into_iter()
        .map(|v| {
            let n = norm(&v);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    Ok(DirectionSet {
        dim: d,
        scheme: scheme.to_string(),
        count: m,
        seed,
        vectors,
    })
}

/// Vertex record of the interchange JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertexRecord {
    pub id: String,
    pub pos: Vec<f64>,
}

/// Edge record of the interchange JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: String,
    pub u: String,
    pub v: String,
    #[serde(default)]
    pub interior: Vec<Vec<f64>>,
}

/// The complex+embedding JSON document:
/// `{"dim": d, "vertices": [{"id", "pos"}], "edges": [{"id", "u", "v", "interior"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeDoc {
    pub dim: usize,
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
}

impl ShapeDoc {
    pub fn from_parts(complex: &CwComplex, emb: &Embedding) -> Self {
        ShapeDoc {
            dim: emb.dim,
            vertices: complex
                .vertices
                .iter()
                .map(|v| VertexRecord {
                    id: v.clone(),
                    pos: emb.positions.get(v).cloned().unwrap_or_default(),
                })
                .collect(),
            edges: complex
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    id: e.id.clone(),
                    u: e.u.clone(),
                    v: e.v.clone(),
                    interior: emb.interiors.get(&e.id).cloned().unwrap_or_default(),
                })
                .collect(),
        }
    }

    pub fn into_parts(self) -> (CwComplex, Embedding) {
        let complex = CwComplex {
            vertices: self.vertices.iter().map(|r| r.id.clone()).collect(),
            edges: self
                .edges
                .iter()
                .map(|r| Edge {
                    id: r.id.clone(),
                    u: r.u.clone(),
                    v: r.v.clone(),
                })
                .collect(),
        };
        let emb = Embedding {
            dim: self.dim,
            positions: self.vertices.into_iter().map(|r| (r.id, r.pos)).collect(),
            interiors: self.edges.into_iter().map(|r| (r.id, r.interior)).collect(),
        };
        (complex, emb)
    }
}
