//! k-means grouping of segments by their pre-meal glucose curve.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Segment, HALF_WINDOW};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const PRE_MEAL_LEN: usize = HALF_WINDOW + 1;
pub const MAX_ITERATIONS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 100;
pub const DEFAULT_K: usize = 15;
pub const ELBOW_KS: [usize; 9] = [3, 5, 7, 9, 11, 13, 15, 17, 19];

pub type PreMeal = [f64; PRE_MEAL_LEN];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centers: Vec<PreMeal>,
    /// Sum of squared distances from each vector to its center.
    pub intra_distance: f64,
    pub seed: u64,
}

impl ClusterModel {
    /// Index of the nearest center; ties go to the lower index.
    pub fn nearest(&self, v: &PreMeal) -> usize {
        nearest(&self.centers, v).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub model: ClusterModel,
    pub assignment: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowRow {
    pub k: usize,
    pub intra_distance: f64,
}

pub fn pre_meal_vector(segment: &Segment) -> PreMeal {
    segment.pre_meal_glucose()
}

fn sq_dist(a: &PreMeal, b: &PreMeal) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[PreMeal], v: &PreMeal) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn intra(vectors: &[PreMeal], centers: &[PreMeal], assignment: &[usize]) -> f64 {
    vectors
        .iter()
        .zip(assignment)
        .map(|(v, &a)| sq_dist(v, &centers[a]))
        .sum()
}

/// Lloyd iterations from the given centers. Returns the final assignment
/// (every vector on its nearest center) and its intra-distance.
fn lloyd(vectors: &[PreMeal], centers: &mut [PreMeal]) -> (Vec<usize>, f64) {
    let k = centers.len();
    let mut assignment: Vec<usize> = vec![usize::MAX; vectors.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (v, a) in vectors.iter().zip(assignment.iter_mut()) {
            let n = nearest(centers, v).0;
            if *a != n {
                *a = n;
                changed = true;
            }
        }
        changed |= repair_empty(vectors, centers, &mut assignment);
        if !changed {
            break;
        }
        let mut sums = vec![[0.0; PRE_MEAL_LEN]; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in vectors.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += x;
            }
        }
        for ((c, s), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
            for (ci, si) in c.iter_mut().zip(s) {
                *ci = si / n as f64;
            }
        }
    }
    for (v, a) in vectors.iter().zip(assignment.iter_mut()) {
        *a = nearest(centers, v).0;
    }
    let d = intra(vectors, centers, &assignment);
    (assignment, d)
}

/// Moves the point farthest from its center into each empty cluster.
fn repair_empty(vectors: &[PreMeal], centers: &mut [PreMeal], assignment: &mut [usize]) -> bool {
    let mut repaired = false;
    loop {
        let mut counts = vec![0usize; centers.len()];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return repaired;
        };
        let far = (0..vectors.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&i, &j| {
                let di = sq_dist(&vectors[i], &centers[assignment[i]]);
                let dj = sq_dist(&vectors[j], &centers[assignment[j]]);
                di.total_cmp(&dj).then(j.cmp(&i))
            })
            .expect("at least k vectors");
        centers[empty] = vectors[far];
        assignment[far] = empty;
        repaired = true;
    }
}

fn check(vectors: &[PreMeal], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if vectors.len() < k {
        return Err(Error::Domain(format!(
            "{} vectors cannot form {k} clusters",
            vectors.len()
        )));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Domain("pre-meal vectors must be finite".into()));
    }
    Ok(())
}

/// Best of `restarts` Lloyd runs from distinct random data points.
pub fn kmeans(vectors: &[PreMeal], k: usize, restarts: usize, seed: u64) -> Result<Clustering> {
    check(vectors, k)?;
    let restarts = restarts.max(1);
    let (assignment, centers, d) = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[k as u64, r as u64]));
            let mut centers: Vec<PreMeal> = sample(&mut rng, vectors.len(), k)
                .into_iter()
                .map(|i| vectors[i])
                .collect();
            let (assignment, d) = lloyd(vectors, &mut centers);
            (r, assignment, centers, d)
        })
        .min_by(|a, b| a.3.total_cmp(&b.3).then(a.0.cmp(&b.0)))
        .map(|(_, a, c, d)| (a, c, d))
        .expect("at least one restart");
    Ok(Clustering {
        model: ClusterModel {
            k,
            centers,
            intra_distance: d,
            seed,
        },
        assignment,
    })
}

/// Adds centers at the points farthest from the current ones, then runs
/// Lloyd. The result is never worse than `base`.
fn warm_start(vectors: &[PreMeal], base: &ClusterModel, k: usize) -> Clustering {
    let mut centers = base.centers.clone();
    while centers.len() < k {
        let far = (0..vectors.len())
            .max_by(|&i, &j| {
                nearest(&centers, &vectors[i])
                    .1
                    .total_cmp(&nearest(&centers, &vectors[j]).1)
                    .then(j.cmp(&i))
            })
            .expect("non-empty");
        centers.push(vectors[far]);
    }
    let (assignment, d) = lloyd(vectors, &mut centers);
    Clustering {
        model: ClusterModel {
            k,
            centers,
            intra_distance: d,
            seed: base.seed,
        },
        assignment,
    }
}

/// Intra-distance for each `k`, non-increasing in `k`.
pub fn elbow_scan(vectors: &[PreMeal], ks: &[usize], restarts: usize, seed: u64) -> Result<Vec<ElbowRow>> {
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut rows = Vec::with_capacity(ks.len());
    let mut previous: Option<ClusterModel> = None;
    for k in ks {
        let mut best = kmeans(vectors, k, restarts, seed)?;
        if let Some(prev) = &previous {
            if best.model.intra_distance > prev.intra_distance {
                let warm = warm_start(vectors, prev, k);
                if warm.model.intra_distance < best.model.intra_distance {
                    best = warm;
                }
            }
        }
        rows.push(ElbowRow {
            k,
            intra_distance: best.model.intra_distance,
        });
        previous = Some(best.model);
    }
    Ok(rows)
}

/// Clusters `segments` and records each one's cluster id.
pub fn cluster_segments(segments: &mut [Segment], k: usize, restarts: usize, seed: u64) -> Result<ClusterModel> {
    let vectors: Vec<PreMeal> = segments.iter().map(pre_meal_vector).collect();
    let c = kmeans(&vectors, k, restarts, seed)?;
    for (s, &a) in segments.iter_mut().zip(&c.assignment) {
        s.cluster_id = Some(a);
    }
    Ok(c.model)
}

/// Persisted `{segment_id: cluster_id}` map.
pub fn assignment_map(segments: &[Segment]) -> BTreeMap<String, usize> {
    segments
        .iter()
        .filter_map(|s| s.cluster_id.map(|c| (s.id.clone(), c)))
        .collect()
}
