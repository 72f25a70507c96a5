//! Shared random-instance generators for the integration suites.

use ect_core::complex::{CwComplex, Edge, Embedding};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub fn random_unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()
}

/// A random small complex: up to 8 vertices and 12 edges (loops and parallel
/// edges allowed), every point inside the ball of radius 1.5 * sqrt(dim).
pub fn random_complex(rng: &mut ChaCha8Rng, dim: usize) -> (CwComplex, Embedding) {
    let nv = rng.random_range(1..=8usize);
    let ne = rng.random_range(0..=12usize);
    let vertices: Vec<String> = (0..nv).map(|i| format!("v{i}")).collect();
    let mut edges = Vec::with_capacity(ne);
    let mut interiors: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for e in 0..ne {
        let u = rng.random_range(0..nv);
        let v = rng.random_range(0..nv);
        let id = format!("e{e}");
        let min_interior = if u == v { 1 } else { 0 };
        let n_interior = rng.random_range(min_interior..=3usize);
        interiors.insert(
            id.clone(),
            (0..n_interior).map(|_| random_point(rng, dim)).collect(),
        );
        edges.push(Edge {
            id,
            u: format!("v{u}"),
            v: format!("v{v}"),
        });
    }
    let positions: BTreeMap<String, Vec<f64>> = vertices
        .iter()
        .map(|v| (v.clone(), random_point(rng, dim)))
        .collect();
    (
        CwComplex::new(vertices, edges),
        Embedding::new(dim, positions, interiors),
    )
}

/// A random open PL path: a chain of straight edges through random points.
#[allow(dead_code)]
pub fn random_path(rng: &mut ChaCha8Rng, dim: usize) -> (CwComplex, Embedding) {
    let segments = rng.random_range(3..=10usize);
    let vertices: Vec<String> = (0..=segments).map(|i| format!("p{i}")).collect();
    let edges: Vec<Edge> = (0..segments)
        .map(|i| Edge {
            id: format!("s{i}"),
            u: format!("p{i}"),
            v: format!("p{}", i + 1),
        })
        .collect();
    let positions: BTreeMap<String, Vec<f64>> = vertices
        .iter()
        .map(|v| (v.clone(), random_point(rng, dim)))
        .collect();
    (
        CwComplex::new(vertices, edges),
        Embedding::new(dim, positions, BTreeMap::new()),
    )
}
