//! Neighbor structure for the local-aggregation objective.
//!
//! Close neighbors of a video are the members of its k-means cluster over
//! memory-bank rows; background neighbors are its k nearest bank rows by
//! dot product. Both are recomputed on a configurable cadence during
//! training and are pure functions of (bank, parameters, seed).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embedding::{normalize, MemoryBank};

#[derive(Debug, Error)]
pub enum NeighborError {
    #[error("kmeans: cluster count {m} out of range [1, {n}]")]
    BadClusterCount { m: usize, n: usize },
    #[error("knn: k {k} out of range [1, {n}]")]
    BadK { k: usize, n: usize },
    #[error("neighbors: index {index} out of range for {count} points")]
    IndexOutOfRange { index: usize, count: usize },
}

/// Output of one k-means run over bank rows.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    /// `m x dim` centroid matrix, rows unit-normalized.
    pub centroids: Vec<f64>,
    pub dim: usize,
    /// Cluster label per point, each `< m`.
    pub labels: Vec<usize>,
    pub iteration_count: usize,
}

impl ClusterAssignment {
    pub fn cluster_count(&self) -> usize {
        self.centroids.len() / self.dim
    }

    /// Sum over points of the dot product with their assigned centroid.
    pub fn objective(&self, bank: &MemoryBank) -> f64 {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                dot(
                    bank.row(i).expect("label table matches bank"),
                    &self.centroids[c * self.dim..(c + 1) * self.dim],
                )
            })
            .sum()
    }
}

/// Close and background neighbor sets for one video, ascending indices.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSets {
    pub close: Vec<usize>,
    pub background: Vec<usize>,
}

/// Lloyd's algorithm with dot-product assignment on unit vectors.
///
/// Initial centroids are `m` distinct rows chosen uniformly per seed.
/// Each iteration assigns points to their best centroid (ties to the
/// lower centroid index), repairs empty clusters by moving in the point
/// that is farthest from its assigned centroid, then recomputes each
/// centroid as the normalized mean of its members. Stops at a label
/// fixpoint or after `max_iters`.
pub fn kmeans_fit(
    bank: &MemoryBank,
    m: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterAssignment, NeighborError> {
    let n = bank.count();
    let dim = bank.dim();
    if m == 0 || m > n {
        return Err(NeighborError::BadClusterCount { m, n });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut centroids = Vec::with_capacity(m * dim);
    for &p in order.iter().take(m) {
        centroids.extend_from_slice(bank.row(p).expect("in range"));
    }

    let mut labels = vec![0usize; n];
    let mut iteration_count = 0;
    for _ in 0..max_iters {
        iteration_count += 1;
        let new_labels = assign(bank, &centroids, dim);
        let repaired = repair_empty_clusters(bank, &centroids, dim, m, new_labels);
        let changed = repaired != labels;
        labels = repaired;
        centroids = recompute_centroids(bank, &labels, m, dim);
        if !changed && iteration_count > 1 {
            break;
        }
    }

    Ok(ClusterAssignment {
        centroids,
        dim,
        labels,
        iteration_count,
    })
}

fn assign(bank: &MemoryBank, centroids: &[f64], dim: usize) -> Vec<usize> {
    (0..bank.count())
        .map(|i| {
            let row = bank.row(i).expect("in range");
            let mut best = 0usize;
            let mut best_dot = f64::NEG_INFINITY;
            for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
                let d = dot(row, centroid);
                if d > best_dot {
                    best_dot = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Moves the globally worst-assigned point into each empty cluster, in
/// ascending cluster order; a point moved once is not moved again.
fn repair_empty_clusters(
    bank: &MemoryBank,
    centroids: &[f64],
    dim: usize,
    m: usize,
    mut labels: Vec<usize>,
) -> Vec<usize> {
    let mut sizes = vec![0usize; m];
    for &l in &labels {
        sizes[l] += 1;
    }
    let mut moved = vec![false; labels.len()];
    for empty in 0..m {
        if sizes[empty] > 0 {
            continue;
        }
        let mut worst: Option<(usize, f64)> = None;
        for (p, &l) in labels.iter().enumerate() {
            if moved[p] || sizes[l] <= 1 {
                continue;
            }
            let d = dot(
                bank.row(p).expect("in range"),
                &centroids[l * dim..(l + 1) * dim],
            );
            let better = match worst {
                None => true,
                Some((_, wd)) => d < wd,
            };
            if better {
                worst = Some((p, d));
            }
        }
        if let Some((p, _)) = worst {
            sizes[labels[p]] -= 1;
            labels[p] = empty;
            sizes[empty] = 1;
            moved[p] = true;
        }
    }
    labels
}

fn recompute_centroids(bank: &MemoryBank, labels: &[usize], m: usize, dim: usize) -> Vec<f64> {
    let mut sums = vec![0.0f64; m * dim];
    let mut counts = vec![0usize; m];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        let row = bank.row(i).expect("in range");
        for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut centroids = vec![0.0f64; m * dim];
    for c in 0..m {
        let chunk = &sums[c * dim..(c + 1) * dim];
        match normalize(chunk) {
            Ok(unit) => centroids[c * dim..(c + 1) * dim].copy_from_slice(unit.coords()),
            // Degenerate (empty cluster survived repair, or exactly
            // cancelling members): keep a unit placeholder on axis 0.
            Err(_) => centroids[c * dim] = 1.0,
        }
    }
    centroids
}

/// All points sharing `i`'s cluster label, `i` included.
pub fn close_neighbors(assign: &ClusterAssignment, i: usize) -> Result<Vec<usize>, NeighborError> {
    let n = assign.labels.len();
    if i >= n {
        return Err(NeighborError::IndexOutOfRange { index: i, count: n });
    }
    let own = assign.labels[i];
    Ok((0..n).filter(|&j| assign.labels[j] == own).collect())
}

/// The `k` bank rows with the largest dot product against row `i`
/// (self included; ties broken toward the lower index), ascending.
pub fn background_neighbors(
    bank: &MemoryBank,
    i: usize,
    k: usize,
) -> Result<Vec<usize>, NeighborError> {
    let n = bank.count();
    if i >= n {
        return Err(NeighborError::IndexOutOfRange { index: i, count: n });
    }
    if k == 0 || k > n {
        return Err(NeighborError::BadK { k, n });
    }
    let query = bank.row(i).expect("in range");
    let mut scored: Vec<(usize, f64)> = (0..n)
        .map(|j| (j, dot(query, bank.row(j).expect("in range"))))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut out: Vec<usize> = scored[..k].iter().map(|(j, _)| *j).collect();
    out.sort_unstable();
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::MemoryBank;

    #[test]
    fn single_cluster_is_normalized_mean() {
        let bank = MemoryBank::init(10, 4, 0.5, 3).unwrap();
        let assign = kmeans_fit(&bank, 1, 0, 50).unwrap();
        assert!(assign.labels.iter().all(|&l| l == 0));
        let mut mean = vec![0.0; 4];
        for i in 0..10 {
            for (m, v) in mean.iter_mut().zip(bank.row(i).unwrap()) {
                *m += v;
            }
        }
        let want = normalize(&mean).unwrap();
        for (a, b) in assign.centroids.iter().zip(want.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn clusters_equal_points_yields_permutation() {
        let bank = MemoryBank::init(9, 5, 0.5, 8).unwrap();
        let assign = kmeans_fit(&bank, 9, 1, 50).unwrap();
        let mut sorted = assign.labels.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..9).collect::<Vec<_>>(), "labels a permutation");
        for i in 0..9 {
            assert_eq!(close_neighbors(&assign, i).unwrap(), vec![i]);
        }
    }

    /// Three tight groups of four points around well-separated
    /// directions; exhaustive search over all 3^12 labelings is the
    /// oracle for the best-objective partition.
    fn three_group_bank() -> (MemoryBank, Vec<usize>) {
        let anchors = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let jitter = [
            [0.05, 0.02, -0.03],
            [-0.04, 0.03, 0.02],
            [0.01, -0.05, 0.04],
            [0.03, 0.04, 0.01],
        ];
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (g, anchor) in anchors.iter().enumerate() {
            for j in &jitter {
                let v: Vec<f64> = anchor.iter().zip(j).map(|(a, d)| a + d).collect();
                rows.extend_from_slice(normalize(&v).unwrap().coords());
                truth.push(g);
            }
        }
        (MemoryBank::from_rows(rows, 3, 0.5).unwrap(), truth)
    }

    fn partition_objective(bank: &MemoryBank, labels: &[usize], m: usize) -> f64 {
        let centroids = recompute_centroids(bank, labels, m, bank.dim());
        labels
            .iter()
            .enumerate()
            .map(|(i, &c)| dot(bank.row(i).unwrap(), &centroids[c * 3..(c + 1) * 3]))
            .sum()
    }

    #[test]
    fn kmeans_matches_exhaustive_partition_oracle() {
        let (bank, _) = three_group_bank();
        let n = bank.count();
        let m = 3;

        // Oracle: enumerate every labeling of 12 points into 3 clusters.
        let mut best_obj = f64::NEG_INFINITY;
        let mut best_labels = vec![0usize; n];
        let mut labels = vec![0usize; n];
        loop {
            let obj = partition_objective(&bank, &labels, m);
            if obj > best_obj {
                best_obj = obj;
                best_labels = labels.clone();
            }
            // Odometer increment over base-3 digits.
            let mut pos = 0;
            loop {
                if pos == n {
                    break;
                }
                labels[pos] += 1;
                if labels[pos] < m {
                    break;
                }
                labels[pos] = 0;
                pos += 1;
            }
            if pos == n {
                break;
            }
        }

        let assign = kmeans_fit(&bank, m, 5, 100).unwrap();
        let got_obj = assign.objective(&bank);
        assert!(
            (got_obj - best_obj).abs() < 1e-9,
            "objective {got_obj} vs oracle {best_obj}"
        );
        // Same partition up to label renaming.
        for i in 0..n {
            for j in 0..n {
                assert_eq!(
                    assign.labels[i] == assign.labels[j],
                    best_labels[i] == best_labels[j],
                    "pair ({i},{j})"
                );
            }
        }
        // close_neighbors agrees with the oracle's cluster of i.
        for i in 0..n {
            let want: Vec<usize> = (0..n).filter(|&j| best_labels[j] == best_labels[i]).collect();
            assert_eq!(close_neighbors(&assign, i).unwrap(), want);
        }
    }

    #[test]
    fn kmeans_rejects_too_many_clusters() {
        let bank = MemoryBank::init(4, 3, 0.5, 0).unwrap();
        assert!(matches!(
            kmeans_fit(&bank, 5, 0, 10),
            Err(NeighborError::BadClusterCount { .. })
        ));
    }

    #[test]
    fn lloyd_objective_is_monotone() {
        for seed in 0..8u64 {
            let bank = MemoryBank::init(40, 6, 0.5, 100 + seed).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for iters in 1..8 {
                let assign = kmeans_fit(&bank, 5, seed, iters).unwrap();
                let obj = assign.objective(&bank);
                assert!(
                    obj >= prev - 1e-9,
                    "seed {seed} iteration {iters}: {obj} < {prev}"
                );
                prev = obj;
            }
        }
    }

    #[test]
    fn kmeans_is_deterministic() {
        let bank = MemoryBank::init(30, 5, 0.5, 17).unwrap();
        let a = kmeans_fit(&bank, 4, 9, 60).unwrap();
        let b = kmeans_fit(&bank, 4, 9, 60).unwrap();
        assert_eq!(a.labels, b.labels);
        assert!(a
            .centroids
            .iter()
            .zip(&b.centroids)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn close_neighbors_single_cluster_is_everything() {
        let bank = MemoryBank::init(12, 4, 0.5, 2).unwrap();
        let assign = kmeans_fit(&bank, 1, 0, 20).unwrap();
        assert_eq!(
            close_neighbors(&assign, 5).unwrap(),
            (0..12).collect::<Vec<_>>()
        );
    }

    #[test]
    fn background_neighbors_trivial_cases() {
        let bank = MemoryBank::init(15, 6, 0.5, 6).unwrap();
        // k = N returns everything.
        assert_eq!(
            background_neighbors(&bank, 3, 15).unwrap(),
            (0..15).collect::<Vec<_>>()
        );
        // k = 1 returns self (dot product 1 is the maximum).
        for i in 0..15 {
            assert_eq!(background_neighbors(&bank, i, 1).unwrap(), vec![i]);
        }
        assert!(matches!(
            background_neighbors(&bank, 0, 16),
            Err(NeighborError::BadK { .. })
        ));
    }

    #[test]
    fn background_neighbors_circle_example() {
        let rows = vec![1.0, 0.0, 0.6, 0.8, 0.0, 1.0, -1.0, 0.0];
        let bank = MemoryBank::from_rows(rows, 2, 0.5).unwrap();
        assert_eq!(background_neighbors(&bank, 0, 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn background_neighbors_match_brute_force() {
        use rand::Rng;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..=64);
            let dim = rng.random_range(2..=8);
            let bank = MemoryBank::init(n, dim, 0.5, seed * 31 + 1).unwrap();
            let i = rng.random_range(0..n);
            let k = rng.random_range(1..=n);

            // Brute force: full sort by (-dot, index).
            let mut pairs: Vec<(usize, f64)> = (0..n)
                .map(|j| (j, dot(bank.row(i).unwrap(), bank.row(j).unwrap())))
                .collect();
            pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let mut want: Vec<usize> = pairs[..k].iter().map(|(j, _)| *j).collect();
            want.sort_unstable();

            assert_eq!(background_neighbors(&bank, i, k).unwrap(), want);
        }
    }

    #[test]
    fn neighbor_sets_recompute_identically() {
        let bank = MemoryBank::init(25, 5, 0.5, 55).unwrap();
        let a1 = kmeans_fit(&bank, 4, 7, 40).unwrap();
        let a2 = kmeans_fit(&bank, 4, 7, 40).unwrap();
        for i in 0..25 {
            assert_eq!(
                close_neighbors(&a1, i).unwrap(),
                close_neighbors(&a2, i).unwrap()
            );
            assert_eq!(
                background_neighbors(&bank, i, 6).unwrap(),
                background_neighbors(&bank, i, 6).unwrap()
            );
        }
    }
}
