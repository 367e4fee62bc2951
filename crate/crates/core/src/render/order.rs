//! Similarity ordering of groups by average-linkage clustering.

use ndarray::Array2;

use crate::nap::NapMatrix;

fn column_distances(values: &Array2<f64>) -> Array2<f64> {
    let g = values.ncols();
    Array2::from_shape_fn((g, g), |(a, b)| {
        values.column(a).iter().zip(values.column(b).iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    })
}

/// Dendrogram leaf order of an average-linkage clustering on `dist`.
///
/// The closest pair of clusters merges first, ties going to the pair whose
/// smallest members are lexicographically smallest; within a merge the
/// cluster holding the lower original index goes left.
pub fn average_linkage_order(dist: &Array2<f64>) -> Vec<usize> {
    let g = dist.nrows();
    // each cluster: (members for distances, leaf order)
    let mut clusters: Vec<(Vec<usize>, Vec<usize>)> = (0..g).map(|i| (vec![i], vec![i])).collect();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let (ma, mb) = (&clusters[a].0, &clusters[b].0);
                let mut total = 0.0;
                for &i in ma {
                    for &j in mb {
                        total += dist[[i, j]];
                    }
                }
                let d = total / (ma.len() * mb.len()) as f64;
                let key = |x: usize| clusters[x].0[0];
                let better = match best {
                    None => true,
                    Some((bd, ba, bb)) => d.total_cmp(&bd).then((key(a), key(b)).cmp(&(key(ba), key(bb)))).is_lt(),
                };
                if better {
                    best = Some((d, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two clusters");
        let right = clusters.remove(b);
        let left = &mut clusters[a];
        let (left_first, right_first) = (left.0[0], right.0[0]);
        let mut members: Vec<usize> = left.0.iter().chain(&right.0).copied().collect();
        members.sort_unstable();
        let leaves = if left_first < right_first {
            left.1.iter().chain(&right.1).copied().collect()
        } else {
            right.1.iter().chain(&left.1).copied().collect()
        };
        *left = (members, leaves);
        clusters.sort_by_key(|c| c.0[0]);
    }
    clusters.pop().map(|c| c.1).unwrap_or_default()
}

/// Group indices ordered so that groups with similar color columns sit together.
pub fn order_groups(nap: &NapMatrix) -> Vec<usize> {
    average_linkage_order(&column_distances(&nap.color_values))
}
