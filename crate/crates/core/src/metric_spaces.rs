//! Intra-space distance structures: point clouds, probability vectors,
//! distance matrices and weighted graphs, with the operations that turn one
//! into another (pairwise Euclidean distances, k-NN graphs, Floyd-Warshall
//! geodesics) and the max-normalization used inside the Sinkhorn iterates.

use alloc::{format, vec, vec::Vec};
use ndarray::{Array1, Array2};
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Distance below which two points are treated as coincident (their pair gets
/// a zero subgradient instead of a division blow-up).
pub const COINCIDENT_EPS: f64 = 1e-12;

/// A point on the probability simplex: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    entries: Array1<f64>,
}

impl ProbabilityVector {
    pub fn new(entries: Array1<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        if entries.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidInput(
                "probability entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = entries.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "probability vector sums to {sum}, expected 1"
            )));
        }
        Ok(Self { entries })
    }

    /// The uniform distribution on `n` points.
    pub fn uniform(n: usize) -> Self {
        Self {
            entries: Array1::from_elem(n, 1.0 / n as f64),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.entries
    }
}

/// A weighted sample set: `n x d` coordinates plus a probability vector.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Array2<f64>,
    pub weights: ProbabilityVector,
}

impl PointCloud {
    /// Uniformly weighted cloud; validates finiteness and `n >= 1`.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::InvalidInput("point cloud needs at least one row".into()));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("point cloud coordinates"));
        }
        let weights = ProbabilityVector::uniform(points.nrows());
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// A square symmetric nonnegative matrix of intra-space distances.
///
/// `scale` records the normalization factor applied so far: `values * scale`
/// are the distances in original units (`scale = 1` for unnormalized input).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
    scale: f64,
}

impl DistanceMatrix {
    /// Validates symmetry (1e-9), zero diagonal, nonnegativity and finiteness.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        Self::with_scale(values, 1.0)
    }

    pub fn with_scale(values: Array2<f64>, scale: f64) -> Result<Self> {
        let (n, m) = values.dim();
        if n != m {
            return Err(Error::ShapeMismatch {
                context: "distance matrix",
                expected: (n, n),
                got: (n, m),
            });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput("distance scale must be positive".into()));
        }
        for i in 0..n {
            if values[[i, i]] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "distance matrix diagonal entry {i} is {}, expected 0",
                    values[[i, i]]
                )));
            }
            for j in 0..n {
                let v = values[[i, j]];
                if !v.is_finite() {
                    return Err(Error::NonFinite("distance matrix"));
                }
                if v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "negative distance {v} at ({i}, {j})"
                    )));
                }
                if (v - values[[j, i]]).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "asymmetric distances at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { values, scale })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Distances in original units (`values * scale`).
    pub fn original_values(&self) -> Array2<f64> {
        if self.scale == 1.0 {
            self.values.clone()
        } else {
            &self.values * self.scale
        }
    }

    /// Largest off-diagonal entry.
    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.n();
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.max(self.values[[i, j]]);
                }
            }
        }
        m
    }
}

/// An undirected weighted graph given as an edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    pub node_count: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    pub fn new(node_count: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, w) in &edges {
            if i >= node_count || j >= node_count {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) out of range for {node_count} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop at node {i}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) has non-positive or non-finite weight {w}"
                )));
            }
        }
        Ok(Self { node_count, edges })
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        if self.node_count == 0 {
            return 0;
        }
        let mut adj = vec![Vec::new(); self.node_count];
        for &(i, j, _) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.node_count];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..self.node_count {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        components
    }
}

/// Pairwise Euclidean distances between the rows of `points`.
pub fn pairwise_euclidean(points: &Array2<f64>) -> Result<DistanceMatrix> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("empty point set".into()));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("pairwise_euclidean input"));
    }
    let d = points.ncols();
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for k in 0..d {
                let diff = points[[i, k]] - points[[j, k]];
                acc += diff * diff;
            }
            let dist = acc.sqrt();
            values[[i, j]] = dist;
            values[[j, i]] = dist;
        }
    }
    DistanceMatrix::new(values)
}

/// Gradient of `sum_ij upstream_ij * D_ij(points)` with respect to `points`.
///
/// Coincident pairs (distance below [`COINCIDENT_EPS`]) contribute zero — the
/// subgradient at the kink — so training survives rare collisions.
pub fn pairwise_euclidean_backward(
    points: &Array2<f64>,
    upstream: &Array2<f64>,
) -> Result<Array2<f64>> {
    let (n, d) = points.dim();
    if upstream.dim() != (n, n) {
        return Err(Error::ShapeMismatch {
            context: "pairwise_euclidean_backward",
            expected: (n, n),
            got: upstream.dim(),
        });
    }
    if points.iter().chain(upstream.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("pairwise_euclidean_backward input"));
    }
    let mut grad = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for k in 0..d {
                let diff = points[[i, k]] - points[[j, k]];
                acc += diff * diff;
            }
            let dist = acc.sqrt();
            if dist < COINCIDENT_EPS {
                continue;
            }
            // d D_ij / d x_i = (x_i - x_j) / D_ij; both (i,j) and (j,i) upstream
            // entries flow through the same distance.
            let w = (upstream[[i, j]] + upstream[[j, i]]) / dist;
            for k in 0..d {
                let diff = points[[i, k]] - points[[j, k]];
                grad[[i, k]] += w * diff;
                grad[[j, k]] -= w * diff;
            }
        }
    }
    Ok(grad)
}

/// Divides by the largest off-diagonal entry, storing that factor in `scale`
/// so callers can evaluate losses on original-unit distances. An all-zero
/// matrix is returned unchanged with scale 1.
pub fn normalize_distances(d: &DistanceMatrix) -> DistanceMatrix {
    let max = d.max_off_diagonal();
    if max <= 0.0 {
        return DistanceMatrix {
            values: d.values().clone(),
            scale: 1.0,
        };
    }
    DistanceMatrix {
        values: d.values() / max,
        scale: d.scale() * max,
    }
}

/// Undirected k-nearest-neighbor graph: edge `(i, j)` is present iff `j` is
/// among the `k` nearest of `i` or vice versa, weighted by Euclidean distance.
/// Neighbor ties break toward the lower index.
///
/// Errors with the component count when the result is disconnected (callers
/// typically retry with a larger `k`).
pub fn knn_graph(points: &Array2<f64>, k: usize) -> Result<WeightedGraph> {
    let n = points.nrows();
    if n < 2 || k == 0 || k >= n {
        return Err(Error::InvalidInput(format!(
            "knn_graph requires 1 <= k < n, got k = {k}, n = {n}"
        )));
    }
    let dist = pairwise_euclidean(points)?;
    let mut edge_set: Vec<(usize, usize)> = Vec::new();
    let mut present = vec![false; n * n];
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            dist.values()[[i, a]]
                .partial_cmp(&dist.values()[[i, b]])
                .unwrap()
                .then(a.cmp(&b))
        });
        for &j in order.iter().take(k) {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if !present[a * n + b] {
                present[a * n + b] = true;
                edge_set.push((a, b));
            }
        }
    }
    edge_set.sort_unstable();
    let edges = edge_set
        .into_iter()
        .map(|(a, b)| (a, b, dist.values()[[a, b]]))
        .collect();
    let graph = WeightedGraph::new(n, edges)?;
    let components = graph.component_count();
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    Ok(graph)
}

/// All-pairs shortest paths of a connected weighted graph.
pub fn floyd_warshall(g: &WeightedGraph) -> Result<DistanceMatrix> {
    let n = g.node_count;
    if n == 0 {
        return Err(Error::InvalidInput("empty graph".into()));
    }
    let mut dist = vec![f64::INFINITY; n * n];
    for i in 0..n {
        dist[i * n + i] = 0.0;
    }
    for &(i, j, w) in &g.edges {
        if w < dist[i * n + j] {
            dist[i * n + j] = w;
            dist[j * n + i] = w;
        }
    }
    for k in 0..n {
        let row_k: Vec<f64> = dist[k * n..(k + 1) * n].to_vec();
        for i in 0..n {
            let dik = dist[i * n + k];
            if !dik.is_finite() {
                continue;
            }
            let row_i = &mut dist[i * n..(i + 1) * n];
            for j in 0..n {
                let cand = dik + row_k[j];
                if cand < row_i[j] {
                    row_i[j] = cand;
                }
            }
        }
    }
    if dist.iter().any(|x| !x.is_finite()) {
        return Err(Error::Disconnected {
            components: g.component_count(),
        });
    }
    let values = Array2::from_shape_vec((n, n), dist)
        .expect("shape consistent by construction");
    DistanceMatrix::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pairwise_345_triangle() {
        let pts = array![[0.0, 0.0], [3.0, 4.0]];
        let d = pairwise_euclidean(&pts).unwrap();
        assert_eq!(d.values(), &array![[0.0, 5.0], [5.0, 0.0]]);
        assert_eq!(d.scale(), 1.0);
    }

    #[test]
    fn pairwise_single_row() {
        let pts = array![[1.0, 2.0, 3.0]];
        let d = pairwise_euclidean(&pts).unwrap();
        assert_eq!(d.n(), 1);
        assert_eq!(d.values()[[0, 0]], 0.0);
    }

    #[test]
    fn pairwise_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = Array2::from_shape_fn((4, 3), |_| rng.random::<f64>() * 4.0 - 2.0);
        let d = pairwise_euclidean(&pts).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += (pts[[i, k]] - pts[[j, k]]) * (pts[[i, k]] - pts[[j, k]]);
                }
                assert_abs_diff_eq!(d.values()[[i, j]], acc.sqrt(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pairwise_rejects_non_finite() {
        let pts = array![[0.0, f64::NAN]];
        assert!(matches!(pairwise_euclidean(&pts), Err(Error::NonFinite(_))));
    }

    #[test]
    fn backward_two_points_all_ones_upstream() {
        let pts = array![[0.0, 0.0], [1.0, 0.0]];
        let upstream = Array2::from_elem((2, 2), 1.0);
        let g = pairwise_euclidean_backward(&pts, &upstream).unwrap();
        assert_abs_diff_eq!(g[[0, 0]], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[[0, 1]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[[1, 0]], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[[1, 1]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn backward_zero_upstream_is_zero() {
        let pts = array![[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]];
        let g = pairwise_euclidean_backward(&pts, &Array2::zeros((3, 3))).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn backward_coincident_points_zero_subgradient() {
        let pts = array![[1.0, 1.0], [1.0, 1.0]];
        let upstream = Array2::from_elem((2, 2), 1.0);
        let g = pairwise_euclidean_backward(&pts, &upstream).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts = Array2::from_shape_fn((5, 3), |_| rng.random::<f64>() * 4.0 - 2.0);
        let mut upstream = Array2::from_shape_fn((5, 5), |_| rng.random::<f64>() - 0.5);
        upstream = (&upstream + &upstream.t()) / 2.0;
        let grad = pairwise_euclidean_backward(&pts, &upstream).unwrap();

        let objective = |p: &Array2<f64>| -> f64 {
            let d = pairwise_euclidean(p).unwrap();
            (&upstream * d.values()).sum()
        };
        let h = 1e-6;
        for i in 0..5 {
            for k in 0..3 {
                let mut plus = pts.clone();
                plus[[i, k]] += h;
                let mut minus = pts.clone();
                minus[[i, k]] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let denom = fd.abs().max(1e-8);
                assert!(
                    (grad[[i, k]] - fd).abs() / denom < 1e-5,
                    "grad {} vs fd {} at ({i}, {k})",
                    grad[[i, k]],
                    fd
                );
            }
        }
    }

    #[test]
    fn normalize_divides_by_max_and_records_scale() {
        let d = DistanceMatrix::new(array![[0.0, 5.0], [5.0, 0.0]]).unwrap();
        let n = normalize_distances(&d);
        assert_eq!(n.values(), &array![[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(n.scale(), 5.0);

        let unit = DistanceMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let n2 = normalize_distances(&unit);
        assert_eq!(n2.values(), unit.values());
        assert_eq!(n2.scale(), 1.0);
    }

    #[test]
    fn normalize_all_zero_unchanged() {
        let d = DistanceMatrix::new(Array2::zeros((3, 3))).unwrap();
        let n = normalize_distances(&d);
        assert_eq!(n.values(), d.values());
        assert_eq!(n.scale(), 1.0);
    }

    #[test]
    fn normalize_random_has_unit_max_and_roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = Array2::from_shape_fn((6, 2), |_| rng.random::<f64>() * 10.0);
        let d = pairwise_euclidean(&pts).unwrap();
        let n = normalize_distances(&d);
        assert_abs_diff_eq!(n.max_off_diagonal(), 1.0, epsilon = 1e-15);
        let restored = n.values() * n.scale();
        for (a, b) in restored.iter().zip(d.values().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn knn_collinear_points() {
        let pts = array![[0.0], [1.0], [3.0]];
        let g = knn_graph(&pts, 1).unwrap();
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.edges[0], (0, 1, 1.0));
        assert_eq!(g.edges[1], (1, 2, 2.0));
    }

    #[test]
    fn knn_complete_graph_when_k_is_n_minus_1() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = Array2::from_shape_fn((6, 2), |_| rng.random::<f64>());
        let g = knn_graph(&pts, 5).unwrap();
        assert_eq!(g.edges.len(), 6 * 5 / 2);
    }

    #[test]
    fn knn_disconnected_reports_components() {
        // Two tight, far-apart pairs with k = 1.
        let pts = array![[0.0, 0.0], [0.1, 0.0], [100.0, 0.0], [100.1, 0.0]];
        match knn_graph(&pts, 1) {
            Err(Error::Disconnected { components }) => assert_eq!(components, 2),
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn floyd_warshall_path_graph() {
        let g = WeightedGraph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let d = floyd_warshall(&g).unwrap();
        assert_abs_diff_eq!(d.values()[[0, 2]], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn floyd_warshall_triangle_shortcut() {
        let g = WeightedGraph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]).unwrap();
        let d = floyd_warshall(&g).unwrap();
        // The heavy direct edge is beaten by the two-hop path.
        assert_abs_diff_eq!(d.values()[[0, 2]], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn floyd_warshall_matches_dijkstra() {
        // Random connected 20-node graph; oracle is a per-source Dijkstra.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 20;
        let mut edges = Vec::new();
        for i in 1..n {
            let j = rng.random_range(0..i);
            edges.push((j, i, rng.random::<f64>() + 0.1));
        }
        for _ in 0..30 {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                if !edges.iter().any(|&(x, y, _)| (x, y) == (a, b)) {
                    edges.push((a, b, rng.random::<f64>() + 0.1));
                }
            }
        }
        let g = WeightedGraph::new(n, edges.clone()).unwrap();
        let d = floyd_warshall(&g).unwrap();

        let mut adj = vec![Vec::new(); n];
        for &(i, j, w) in &edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for src in 0..n {
            // Dijkstra with a linear scan (n is tiny).
            let mut dist = vec![f64::INFINITY; n];
            let mut done = vec![false; n];
            dist[src] = 0.0;
            for _ in 0..n {
                let mut u = usize::MAX;
                let mut best = f64::INFINITY;
                for v in 0..n {
                    if !done[v] && dist[v] < best {
                        best = dist[v];
                        u = v;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                for &(v, w) in &adj[u] {
                    if dist[u] + w < dist[v] {
                        dist[v] = dist[u] + w;
                    }
                }
            }
            for j in 0..n {
                assert_abs_diff_eq!(d.values()[[src, j]], dist[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn floyd_warshall_rejects_disconnected() {
        let g = WeightedGraph::new(4, vec![(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(matches!(
            floyd_warshall(&g),
            Err(Error::Disconnected { components: 2 })
        ));
    }

    #[test]
    fn distance_matrix_validation() {
        assert!(DistanceMatrix::new(array![[0.0, 1.0], [2.0, 0.0]]).is_err());
        assert!(DistanceMatrix::new(array![[0.5, 1.0], [1.0, 0.0]]).is_err());
        assert!(DistanceMatrix::new(array![[0.0, -1.0], [-1.0, 0.0]]).is_err());
        assert!(DistanceMatrix::new(array![[0.0, 1.0, 2.0], [1.0, 0.0, 3.0]]).is_err());
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(array![0.5, 0.5]).is_ok());
        assert!(ProbabilityVector::new(array![0.6, 0.5]).is_err());
        assert!(ProbabilityVector::new(array![-0.1, 1.1]).is_err());
        assert_eq!(ProbabilityVector::uniform(4).as_array()[0], 0.25);
    }
}
