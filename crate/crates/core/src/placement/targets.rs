use rand::Rng;

use crate::scenario::{Location2D, Location3D, NetworkState};

pub const KMEANS_MAX_ITERS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Location2D>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares after seeding and after every iteration.
    pub objective: Vec<f64>,
}

fn sq(a: &Location2D, b: &Location2D) -> f64 {
    (a.x - b.x).powi(2) + (a.y - b.y).powi(2)
}

fn nearest(p: &Location2D, centroids: &[Location2D]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus<R: Rng + ?Sized>(points: &[Location2D], k: usize, rng: &mut R) -> Vec<Location2D> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        };
        let c = points[pick];
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding. `k` is reduced to the number of
/// points; an emptied cluster keeps its previous centroid.
pub fn kmeans<R: Rng + ?Sized>(points: &[Location2D], k: usize, max_iters: usize, rng: &mut R) -> KMeansResult {
    if points.is_empty() || k == 0 {
        return KMeansResult { centroids: Vec::new(), labels: Vec::new(), objective: Vec::new() };
    }
    let k = k.min(points.len());
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut labels: Vec<usize> = Vec::with_capacity(points.len());
    let mut objective = Vec::new();
    let assign = |centroids: &[Location2D], labels: &mut Vec<usize>| -> (f64, bool) {
        let mut changed = labels.is_empty();
        let mut wcss = 0.0;
        labels.resize(points.len(), usize::MAX);
        for (p, l) in points.iter().zip(labels.iter_mut()) {
            let (c, d) = nearest(p, centroids);
            if *l != c {
                changed = true;
                *l = c;
            }
            wcss += d;
        }
        (wcss, changed)
    };
    let (wcss, _) = assign(&centroids, &mut labels);
    objective.push(wcss);
    for _ in 0..max_iters {
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l].0 += p.x;
            sums[l].1 += p.y;
            sums[l].2 += 1;
        }
        for (c, (sx, sy, n)) in centroids.iter_mut().zip(sums) {
            if n > 0 {
                *c = Location2D::new(sx / n as f64, sy / n as f64);
            }
        }
        let (wcss, changed) = assign(&centroids, &mut labels);
        objective.push(wcss);
        if !changed {
            break;
        }
    }
    KMeansResult { centroids, labels, objective }
}

/// Unique assignment of targets to MAPs minimising the summed 3D distance.
/// Returns, for each MAP, the index of its target. With fewer targets than
/// MAPs the surplus MAPs fall back to their nearest target.
pub fn match_targets(maps: &[Location3D], targets: &[Location3D]) -> Vec<usize> {
    let (n, m) = (maps.len(), targets.len());
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let nearest_target = |a: &Location3D| {
        (0..m)
            .min_by(|&x, &y| a.distance(&targets[x]).total_cmp(&a.distance(&targets[y])))
            .unwrap_or(0)
    };
    if m < n || m > 20 {
        return maps.iter().map(nearest_target).collect();
    }
    // dp over MAPs in order and subsets of used targets.
    let full = 1usize << m;
    let mut cost = vec![f64::INFINITY; full];
    let mut choice: Vec<Vec<usize>> = vec![vec![usize::MAX; full]; n + 1];
    cost[0] = 0.0;
    let mut layer = vec![0usize];
    for (i, map) in maps.iter().enumerate() {
        let mut next_cost = vec![f64::INFINITY; full];
        let mut next_layer = Vec::new();
        for &mask in &layer {
            for t in 0..m {
                if mask & (1 << t) != 0 {
                    continue;
                }
                let nm = mask | (1 << t);
                let c = cost[mask] + map.distance(&targets[t]);
                if c < next_cost[nm] {
                    if next_cost[nm].is_infinite() {
                        next_layer.push(nm);
                    }
                    next_cost[nm] = c;
                    choice[i + 1][nm] = t;
                }
            }
        }
        cost = next_cost;
        layer = next_layer;
    }
    let best = layer
        .iter()
        .copied()
        .min_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(a.cmp(&b)))
        .expect("at least one complete matching");
    let mut out = vec![0; n];
    let mut mask = best;
    for i in (0..n).rev() {
        let t = choice[i + 1][mask];
        out[i] = t;
        mask &= !(1 << t);
    }
    out
}

/// Clustering targets for the active MAPs: k-means over unblocked UEs with
/// `k` clusters, centroids lifted to `altitude`, matched to MAPs. Returns
/// (map id, target) pairs in ascending MAP id; empty if no UE is visible.
pub fn target_locations<R: Rng + ?Sized>(
    state: &NetworkState,
    k: usize,
    altitude: f64,
    rng: &mut R,
) -> Vec<(usize, Location3D)> {
    let points: Vec<Location2D> = state.ues.iter().filter(|u| !u.blocked).map(|u| u.loc).collect();
    let result = kmeans(&points, k.max(1), KMEANS_MAX_ITERS, rng);
    assign_targets(state, &result.centroids, altitude)
}

/// Matches precomputed centroids to the currently active MAPs.
pub fn assign_targets(state: &NetworkState, centroids: &[Location2D], altitude: f64) -> Vec<(usize, Location3D)> {
    let ids = state.active_map_ids();
    let lifted: Vec<Location3D> = centroids.iter().map(|c| c.lift(altitude)).collect();
    let locs: Vec<Location3D> = ids.iter().map(|&i| state.maps[i].loc).collect();
    let assignment = match_targets(&locs, &lifted);
    ids.into_iter().zip(assignment).map(|(i, t)| (i, lifted[t])).collect()
}
