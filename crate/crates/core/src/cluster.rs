//! Seeded spherical k-means over dense vectors (cosine geometry).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

pub const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<T> {
    pub centroids: Vec<Vec<T>>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let dot = a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y);
    let na = a.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
    let nb = b.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
    if na == T::zero() || nb == T::zero() {
        T::zero()
    } else {
        dot / (na * nb)
    }
}

fn normalized<T: Scalar>(v: &[T]) -> Vec<T> {
    let n = v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
    if n == T::zero() {
        v.to_vec()
    } else {
        v.iter().map(|&x| x / n).collect()
    }
}

/// Index of the most similar centroid; ties go to the lower index.
pub fn nearest<T: Scalar>(v: &[T], centroids: &[Vec<T>]) -> usize {
    let mut best = 0;
    let mut best_sim = T::neg_infinity();
    for (i, c) in centroids.iter().enumerate() {
        let s = cosine(v, c);
        if s > best_sim {
            best = i;
            best_sim = s;
        }
    }
    best
}

/// k-means++ seeding with `1 - cosine` as the distance.
fn seed_centroids<T: Scalar>(points: &[Vec<T>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut chosen = vec![rng.random_range(0..points.len())];
    while chosen.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if chosen.contains(&i) {
                    return 0.0;
                }
                let d = chosen
                    .iter()
                    .map(|&c| 1.0 - cosine(p, &points[c]).to_f64_lossy())
                    .fold(f64::INFINITY, f64::min)
                    .max(0.0);
                d * d
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a centre
            (0..points.len()).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(pick);
    }
    chosen
}

/// Cluster `points` into `k` groups. Requires `1 <= k <= points.len()`.
pub fn spherical_kmeans<T: Scalar>(points: &[Vec<T>], k: usize, seed: u64) -> Clustering<T> {
    assert!(k >= 1 && k <= points.len(), "k must be in 1..=n");
    let points: Vec<Vec<T>> = points.iter().map(|p| normalized(p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<T>> = seed_centroids(&points, k, &mut rng)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let dim = points[0].len();
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let mut sum = vec![T::zero(); dim];
            let mut members = 0;
            for (p, _) in points.iter().zip(&assignment).filter(|(_, &a)| a == c) {
                members += 1;
                for (s, &x) in sum.iter_mut().zip(p) {
                    *s = *s + x;
                }
            }
            // an emptied cluster keeps its previous centre
            if members > 0 {
                *centroid = normalized(&sum);
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    Clustering {
        centroids,
        assignment,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_groups() {
        let pts = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.9, 0.1, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.1, 0.9],
        ];
        let c = spherical_kmeans::<f64>(&pts, 2, 7);
        assert_eq!(c.assignment[0], c.assignment[1]);
        assert_eq!(c.assignment[2], c.assignment[3]);
        assert_ne!(c.assignment[0], c.assignment[2]);
    }

    #[test]
    fn deterministic_for_seed() {
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![(i % 3) as f64, (i % 5) as f64, 1.0]).collect();
        assert_eq!(spherical_kmeans(&pts, 3, 42), spherical_kmeans(&pts, 3, 42));
    }

    #[test]
    fn identical_points_still_seed() {
        let pts = vec![vec![1.0f32, 1.0]; 3];
        let c = spherical_kmeans(&pts, 3, 1);
        assert_eq!(c.centroids.len(), 3);
    }
}
