//! k-means with farthest-point seeding, and one-pick-per-cluster diversity
//! selection.

use std::collections::HashSet;

use rand::Rng;

use super::embed::Embedder;
use super::{DemonstrationSet, Provenance};
use crate::error::{Error, Result};
use crate::model::{Instance, LabelSet};
use crate::rng::keyed_rng;

pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn distinct_points(points: &[Vec<f64>]) -> usize {
    points
        .iter()
        .map(|p| p.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

/// First seed uniform from `seed`; each next seed is the point farthest from
/// all chosen seeds (lowest index on ties).
pub fn farthest_point_seeds(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut rng = keyed_rng(seed, &["kmeans_seed"]);
    let first = rng.random_range(0..points.len());
    let mut chosen = vec![first];
    let mut dmin: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while chosen.len() < k.min(points.len()) {
        let mut far = 0;
        for i in 1..points.len() {
            if dmin[i] > dmin[far] {
                far = i;
            }
        }
        chosen.push(far);
        for (i, p) in points.iter().enumerate() {
            dmin[i] = dmin[i].min(sq_dist(p, &points[far]));
        }
    }
    chosen
}

/// Lloyd iterations until the largest centroid shift drops below
/// [`KMEANS_TOL`] or [`KMEANS_MAX_ITER`] rounds pass. An empty cluster keeps
/// its previous centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    let distinct = distinct_points(points);
    if k == 0 || distinct < k {
        return Err(Error::DegenerateClustering { distinct, clusters: k });
    }
    let mut centroids: Vec<Vec<f64>> = farthest_point_seeds(points, k, seed)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let dim = points[0].len();
    let mut assignments = vec![0; points.len()];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            assignments[i] = nearest(p, &centroids);
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&mean, &centroids[c]).sqrt());
            centroids[c] = mean;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignments,
        iterations,
    })
}

/// Clusters the training set into K×N groups, takes the instance nearest each
/// centroid, then restores label balance by swapping over-quota picks for
/// the nearest unpicked candidates of under-quota labels, cheapest swap first.
pub fn select_diversity(
    train: &[Instance],
    labels: &LabelSet,
    n: usize,
    embedder: &dyn Embedder,
    seed: u64,
) -> Result<DemonstrationSet> {
    let k = labels.len() * n;
    let texts: Vec<&str> = train.iter().map(|i| i.text.as_str()).collect();
    let points = embedder.embed(&texts)?;
    let km = kmeans(&points, k, seed)?;
    let label_of: Vec<Option<usize>> = train.iter().map(|i| labels.index_of(&i.gold)).collect();
    let dist: Vec<Vec<f64>> = km
        .centroids
        .iter()
        .map(|c| points.iter().map(|p| sq_dist(p, c)).collect())
        .collect();

    let mut picked = vec![false; train.len()];
    let mut picks = Vec::with_capacity(k);
    for d in &dist {
        let best = (0..train.len())
            .filter(|&i| !picked[i] && label_of[i].is_some())
            .min_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)))
            .ok_or_else(|| Error::InsufficientData("too few labelled instances for clusters".into()))?;
        picked[best] = true;
        picks.push(best);
    }

    let mut counts = vec![0usize; labels.len()];
    for &p in &picks {
        counts[label_of[p].expect("filtered")] += 1;
    }
    while counts.iter().any(|&c| c > n) {
        let mut best: Option<(f64, usize, usize)> = None;
        for (c, &cur) in picks.iter().enumerate() {
            if counts[label_of[cur].expect("filtered")] <= n {
                continue;
            }
            for i in 0..train.len() {
                let Some(li) = label_of[i] else { continue };
                if picked[i] || counts[li] >= n {
                    continue;
                }
                let cost = dist[c][i] - dist[c][cur];
                if best.is_none_or(|(b, _, _)| cost < b) {
                    best = Some((cost, c, i));
                }
            }
        }
        let (_, c, i) = best.ok_or_else(|| {
            Error::InsufficientData(format!("cannot rebalance diversity picks to {n} per label"))
        })?;
        let old = picks[c];
        picked[old] = false;
        picked[i] = true;
        counts[label_of[old].expect("filtered")] -= 1;
        counts[label_of[i].expect("filtered")] += 1;
        picks[c] = i;
    }

    let mut per_label: Vec<Vec<&Instance>> = vec![Vec::new(); labels.len()];
    for &p in &picks {
        per_label[label_of[p].expect("filtered")].push(&train[p]);
    }
    Ok(DemonstrationSet::build(
        per_label,
        labels,
        n,
        Provenance {
            strategy: "diversity".into(),
            category: None,
            seed,
            supplemented: 0,
        },
        "",
    ))
}
