//! Individual-level survivor selection: dominance filtering, additive-eps
//! IBEA and a simplified immune-style selection standing in for HEIA.

use crate::metrics::dominates;

/// Indices of the points not dominated by any other (minimisation on all
/// objectives). Equal vectors do not dominate each other, so duplicates
/// survive together.
pub fn nondominated_filter(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .enumerate()
                .any(|(j, q)| j != i && dominates(q, &points[i]))
        })
        .collect()
}

/// NSGA-II crowding distances for one set of objective vectors. Boundary
/// points get infinity.
pub fn crowding_distances(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut distance = vec![0.0f64; n];
    if n == 0 {
        return distance;
    }
    let n_obj = points[0].len();
    for m in 0..n_obj {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| points[a][m].partial_cmp(&points[b][m]).expect("finite"));
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let span = points[order[n - 1]][m] - points[order[0]][m];
        if span > 0.0 {
            for w in 1..n - 1 {
                let gap = points[order[w + 1]][m] - points[order[w - 1]][m];
                distance[order[w]] += gap / span;
            }
        }
    }
    distance
}

/// Min-max normalization per objective over a pool; constant objectives
/// collapse to zero.
fn normalized(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if points.is_empty() {
        return Vec::new();
    }
    let n_obj = points[0].len();
    let mut lo = vec![f64::INFINITY; n_obj];
    let mut hi = vec![f64::NEG_INFINITY; n_obj];
    for p in points {
        for (m, &v) in p.iter().enumerate() {
            lo[m] = lo[m].min(v);
            hi[m] = hi[m].max(v);
        }
    }
    points
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(m, &v)| {
                    let span = hi[m] - lo[m];
                    if span > 0.0 {
                        (v - lo[m]) / span
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Additive-epsilon indicator: smallest shift making `a` weakly dominate `b`.
fn eps_indicator(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Additive-epsilon IBEA environmental selection with min-max objective
/// normalization: iteratively removes the worst-fitness individual,
/// updating the remaining fitnesses after each removal. Returns surviving
/// indices in their original order.
pub fn ibea_select(points: &[Vec<f64>], kappa: f64, n_survivors: usize) -> Vec<usize> {
    let n = points.len();
    assert!(n >= n_survivors, "population smaller than survivor count");
    let unit = normalized(points);

    // I(j, i) for all ordered pairs.
    let indicator: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| eps_indicator(&unit[j], &unit[i])).collect())
        .collect();

    let mut fitness: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| -(-indicator[j][i] / kappa).exp())
                .sum()
        })
        .collect();

    let mut alive = vec![true; n];
    let mut remaining = n;
    while remaining > n_survivors {
        let worst = (0..n)
            .filter(|&i| alive[i])
            .min_by(|&a, &b| fitness[a].partial_cmp(&fitness[b]).expect("finite"))
            .expect("population nonempty");
        alive[worst] = false;
        remaining -= 1;
        for i in 0..n {
            if alive[i] {
                fitness[i] += (-indicator[worst][i] / kappa).exp();
            }
        }
    }
    (0..n).filter(|&i| alive[i]).collect()
}

/// Simplified immune-style selection (HEIA stand-in): survivors are the
/// nondominated set padded front-by-front (final partial front by crowding
/// distance), and a clone pool of `clone_budget` copies of nondominated
/// members allocated proportionally to crowding distance. The caller
/// hypermutates the clones.
pub fn heia_select_simplified(
    points: &[Vec<f64>],
    n_survivors: usize,
    clone_budget: usize,
) -> (Vec<usize>, Vec<usize>) {
    let n = points.len();
    assert!(n >= n_survivors, "population smaller than survivor count");

    // Peel nondominated fronts until the survivor quota is filled.
    let mut survivors: Vec<usize> = Vec::with_capacity(n_survivors);
    let mut pool: Vec<usize> = (0..n).collect();
    let first_front: Vec<usize> = nondominated_filter(points);
    let mut front = first_front.clone();
    while survivors.len() < n_survivors {
        if survivors.len() + front.len() <= n_survivors {
            survivors.extend(&front);
        } else {
            // Partial front: keep the most spread-out members.
            let front_points: Vec<Vec<f64>> = front.iter().map(|&i| points[i].clone()).collect();
            let crowd = crowding_distances(&front_points);
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&a, &b| {
                crowd[b]
                    .partial_cmp(&crowd[a])
                    .expect("crowding comparable")
                    .then(front[a].cmp(&front[b]))
            });
            for &k in order.iter().take(n_survivors - survivors.len()) {
                survivors.push(front[k]);
            }
        }
        pool.retain(|i| !front.contains(i));
        if pool.is_empty() {
            break;
        }
        let sub: Vec<Vec<f64>> = pool.iter().map(|&i| points[i].clone()).collect();
        front = nondominated_filter(&sub).iter().map(|&k| pool[k]).collect();
    }
    survivors.sort_unstable();

    // Clones come from the first front, proportional to crowding distance.
    let clones = allocate_clones(points, &first_front, clone_budget);
    (survivors, clones)
}

/// Largest-remainder allocation of `budget` clones over the front,
/// proportional to crowding distance (infinite distances capped).
fn allocate_clones(points: &[Vec<f64>], front: &[usize], budget: usize) -> Vec<usize> {
    if budget == 0 || front.is_empty() {
        return Vec::new();
    }
    if front.len() == 1 {
        return vec![front[0]; budget];
    }
    let front_points: Vec<Vec<f64>> = front.iter().map(|&i| points[i].clone()).collect();
    let mut crowd = crowding_distances(&front_points);
    let max_finite = crowd
        .iter()
        .copied()
        .filter(|d| d.is_finite())
        .fold(0.0f64, f64::max);
    let cap = if max_finite > 0.0 {
        2.0 * max_finite
    } else {
        1.0
    };
    for d in crowd.iter_mut() {
        if !d.is_finite() {
            *d = cap;
        }
        // Every front member keeps a minimal share.
        if *d <= 0.0 {
            *d = 1e-9;
        }
    }
    let total: f64 = crowd.iter().sum();
    let shares: Vec<f64> = crowd.iter().map(|d| d / total * budget as f64).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut assigned: usize = counts.iter().sum();
    let mut remainder_order: Vec<usize> = (0..front.len()).collect();
    remainder_order.sort_by(|&a, &b| {
        let ra = shares[a] - counts[a] as f64;
        let rb = shares[b] - counts[b] as f64;
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    let mut k = 0;
    while assigned < budget {
        counts[remainder_order[k % front.len()]] += 1;
        assigned += 1;
        k += 1;
    }
    let mut clones = Vec::with_capacity(budget);
    for (member, &count) in front.iter().zip(&counts) {
        clones.extend(std::iter::repeat_n(*member, count));
    }
    clones
}
