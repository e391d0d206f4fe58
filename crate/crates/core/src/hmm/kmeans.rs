//! Seeded k-means (k-means++ seeding, Lloyd iterations).

use crate::prng::SplitMix64;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub(crate) struct Clustering<F> {
    pub(crate) centroids: Vec<Vec<F>>,
    pub(crate) assignments: Vec<usize>,
}

fn sq_dist<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<F: Scalar>(p: &[F], centroids: &[Vec<F>]) -> (usize, F) {
    let mut best = (0, F::infinity());
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Clusters `points` into `k` groups. Ties go to the lowest centroid index;
/// an emptied cluster keeps its previous centroid. `k` may exceed the number
/// of distinct points, in which case some centroids coincide.
pub(crate) fn kmeans<F: Scalar>(
    points: &[&[F]],
    k: usize,
    rng: &mut SplitMix64,
    max_iters: usize,
) -> Clustering<F> {
    assert!(k > 0 && !points.is_empty(), "k-means needs points and k > 0");
    let dim = points[0].len();

    let mut centroids: Vec<Vec<F>> = Vec::with_capacity(k);
    centroids.push(points[rng.below(points.len())].to_vec());
    let mut dist: Vec<F> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: F = dist.iter().copied().sum();
        let pick = if total > F::zero() {
            let target = F::lit(rng.next_f64()) * total;
            let mut acc = F::zero();
            let mut chosen = points.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                acc = acc + d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.below(points.len())
        };
        let c = points[pick].to_vec();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }

    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..max_iters {
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (best, _) = nearest(p, &centroids);
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![F::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(p.iter()) {
                *s = *s + x;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                let n = F::from_usize_lossy(n);
                *c = s.into_iter().map(|v| v / n).collect();
            }
        }
    }
    // Final assignment against the final centroids.
    for (a, p) in assignments.iter_mut().zip(points) {
        *a = nearest(p, &centroids).0;
    }
    Clustering {
        centroids,
        assignments,
    }
}
