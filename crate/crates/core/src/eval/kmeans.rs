//! k-means with k-means++ seeding and Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAX_ITERATIONS: usize = 300;
pub const RESTARTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centers: Matrix,
    /// Sum of squared distances to the assigned centers.
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = sq_dist(x, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus<R: Rng + ?Sized>(h: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = h.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(h.row(i), h.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && t < d {
                    pick = i;
                    break;
                }
                t -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(h.row(i), h.row(next)));
        }
    }
    h.select_rows(&chosen)
}

fn update_centers(h: &Matrix, assign: &mut [usize], centers: &mut Matrix) {
    let k = centers.rows();
    let mut counts = vec![0usize; k];
    let mut sums = Matrix::zeros(k, h.cols());
    for (i, &c) in assign.iter().enumerate() {
        counts[c] += 1;
        for (s, &v) in sums.row_mut(c).iter_mut().zip(h.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for (dst, &s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }
    // Reseed each empty cluster at the point farthest from its own center,
    // taken from a cluster that can spare it.
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let far = (0..h.rows())
            .filter(|&i| counts[assign[i]] > 1)
            .map(|i| (i, sq_dist(h.row(i), centers.row(assign[i]))))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = far else { continue };
        counts[assign[i]] -= 1;
        assign[i] = c;
        counts[c] = 1;
        centers.row_mut(c).copy_from_slice(h.row(i));
    }
}

/// One seeded run: k-means++ then Lloyd until the assignment is a fixed
/// point or [`MAX_ITERATIONS`] is reached.
pub fn kmeans_once<R: Rng + ?Sized>(h: &Matrix, k: usize, rng: &mut R) -> Result<Clustering> {
    if k == 0 || k > h.rows() {
        return Err(Error::Validation(format!("k-means needs 1 <= k <= n, got k = {k}, n = {}", h.rows())));
    }
    let mut centers = plus_plus(h, k, rng);
    let mut assign: Vec<usize> = (0..h.rows()).map(|i| nearest(h.row(i), &centers).0).collect();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        update_centers(h, &mut assign, &mut centers);
        let next: Vec<usize> = (0..h.rows()).map(|i| nearest(h.row(i), &centers).0).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let inertia = (0..h.rows()).map(|i| sq_dist(h.row(i), centers.row(assign[i]))).sum();
    Ok(Clustering {
        assignments: assign,
        centers,
        inertia,
        iterations,
    })
}

/// Lowest-inertia clustering over [`RESTARTS`] runs drawn from one seeded
/// stream.
pub fn kmeans_best(h: &Matrix, k: usize, seed: u64) -> Result<Clustering> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = kmeans_once(h, k, &mut rng)?;
    for _ in 1..RESTARTS {
        let c = kmeans_once(h, k, &mut rng)?;
        if c.inertia < best.inertia {
            best = c;
        }
    }
    Ok(best)
}

pub fn kmeans(h: &Matrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    Ok(kmeans_best(h, k, seed)?.assignments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::{homogeneity, nmi};

    fn blobs() -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let off = if c == 0 { -10.0 } else { 10.0 };
            rows.push([off + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            labels.push(c);
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separates_far_blobs() {
        let (h, labels) = blobs();
        let a = kmeans(&h, 2, 0).unwrap();
        assert_eq!(nmi(&labels, &a).unwrap(), 1.0);
    }

    #[test]
    fn k_one_and_k_n() {
        let (h, labels) = blobs();
        let one = kmeans(&h, 1, 3).unwrap();
        assert!(one.iter().all(|&c| c == 0));
        assert_eq!(nmi(&labels, &one).unwrap(), 0.0);
        let all = kmeans(&h, h.rows(), 3).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), h.rows());
        assert_eq!(homogeneity(&labels, &all).unwrap(), 1.0);
    }

    #[test]
    fn deterministic_and_bounds_checked() {
        let (h, _) = blobs();
        assert_eq!(kmeans_best(&h, 3, 9).unwrap(), kmeans_best(&h, 3, 9).unwrap());
        assert!(kmeans(&h, 0, 0).is_err());
        assert!(kmeans(&h, 41, 0).is_err());
    }

    #[test]
    fn duplicate_points_terminate() {
        let h = Matrix::from_rows(&[[0.0], [0.0], [0.0], [1.0]]).unwrap();
        let c = kmeans_best(&h, 2, 1).unwrap();
        assert_eq!(c.inertia, 0.0);
        assert_eq!(c.assignments[0], c.assignments[2]);
        assert_ne!(c.assignments[0], c.assignments[3]);
    }
}
