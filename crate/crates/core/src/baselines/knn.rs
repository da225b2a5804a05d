use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnPoint {
    pub id: u64,
    pub x: Vec<f64>,
    pub y: f64,
}

/// Mean outcome of the `k_n` points nearest to `x` (Euclidean), ties broken
/// by lowest id. Callers guarantee a non-empty group and `k_n >= 1`.
pub fn knn_predict(group: &[KnnPoint], x: &[f64], k_n: usize) -> f64 {
    assert!(!group.is_empty() && k_n >= 1, "knn needs a non-empty group and k_n >= 1");
    let mut dist: Vec<(f64, u64, f64)> = group
        .iter()
        .map(|p| (p.x.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), p.id, p.y))
        .collect();
    let k = k_n.min(dist.len());
    let by_distance = |a: &(f64, u64, f64), b: &(f64, u64, f64)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_distance);
    }
    let mut nearest = dist[..k].to_vec();
    // Sum in a fixed order so the result does not depend on group order.
    nearest.sort_by(by_distance);
    nearest.iter().map(|d| d.2).sum::<f64>() / k as f64
}
