//! Synthetic reference distributions for the experiment tasks: Gaussian
//! mixtures, the 3D S-curve, stochastic-block community graphs and small
//! stroke glyphs for the style task.

use alloc::vec::Vec;
use ndarray::{Array1, Array2};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::metric_spaces::{DistanceMatrix, PointCloud, WeightedGraph};
use crate::trainer::{RefBatch, ReferenceSampler};
use crate::{Error, Result};

/// A Gaussian mixture with isotropic per-mode spread.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    /// `(center, sigma)` per mode.
    pub modes: Vec<(Array1<f64>, f64)>,
}

impl MixtureSpec {
    pub fn new(modes: Vec<(Array1<f64>, f64)>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidInput("mixture needs at least one mode".into()));
        }
        let dim = modes[0].0.len();
        for (center, sigma) in &modes {
            if center.len() != dim {
                return Err(Error::InvalidInput("mixture centers differ in dimension".into()));
            }
            if !(sigma.is_finite() && *sigma > 0.0) {
                return Err(Error::InvalidInput("mixture sigma must be positive".into()));
            }
        }
        Ok(Self { modes })
    }

    pub fn dim(&self) -> usize {
        self.modes[0].0.len()
    }

    /// Centers stacked as a `k x d` matrix.
    pub fn centers(&self) -> Array2<f64> {
        let k = self.modes.len();
        let d = self.dim();
        Array2::from_shape_fn((k, d), |(i, j)| self.modes[i].0[j])
    }

    /// Draws `n` samples: mode uniform, then isotropic Gaussian noise.
    pub fn draw(&self, rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
        let d = self.dim();
        let mut out = Array2::<f64>::zeros((n, d));
        for i in 0..n {
            let m = rng.random_range(0..self.modes.len());
            let (center, sigma) = &self.modes[m];
            for j in 0..d {
                let noise: f64 = StandardNormal.sample(rng);
                out[[i, j]] = center[j] + sigma * noise;
            }
        }
        out
    }
}

/// Samples a Gaussian mixture point cloud; deterministic per seed.
pub fn make_gaussian_mixture(
    modes: &[(Array1<f64>, f64)],
    n: usize,
    seed: u64,
) -> Result<PointCloud> {
    let spec = MixtureSpec::new(modes.to_vec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::uniform(spec.draw(&mut rng, n))
}

/// The classic 3D S-curve: `t` uniform on `[-3pi/2, 3pi/2]` mapped to
/// `(sin t, y, sign(t) (cos t - 1))` with `y` uniform on `[0, 2]`.
pub fn make_scurve(n: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::<f64>::zeros((n, 3));
    for i in 0..n {
        let t = (rng.random::<f64>() - 0.5) * 3.0 * core::f64::consts::PI;
        let y = rng.random::<f64>() * 2.0;
        out[[i, 0]] = t.sin();
        out[[i, 1]] = y;
        out[[i, 2]] = t.signum() * (t.cos() - 1.0);
    }
    PointCloud::uniform(out)
}

/// Unit-weight stochastic-block graph: `communities` blocks of `size` nodes,
/// edge probability `p_in` within and `p_out` across blocks. Retries with
/// derived seeds until connected (up to 10 attempts).
pub fn make_community_graph(
    communities: usize,
    size: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<WeightedGraph> {
    if communities == 0 || size == 0 {
        return Err(Error::InvalidInput("empty community graph".into()));
    }
    if !(0.0 < p_in && p_in <= 1.0) || !(0.0 <= p_out && p_out <= 1.0) || p_in <= p_out {
        return Err(Error::InvalidInput(
            "community graph needs 0 < p_out < p_in <= 1".into(),
        ));
    }
    let n = communities * size;
    for attempt in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if i / size == j / size { p_in } else { p_out };
                if rng.random::<f64>() < p {
                    edges.push((i, j, 1.0));
                }
            }
        }
        let graph = WeightedGraph::new(n, edges)?;
        if graph.component_count() == 1 {
            return Ok(graph);
        }
    }
    Err(Error::ConnectivityRetriesExhausted { attempts: 10 })
}

/// Community label per node for a graph built by [`make_community_graph`].
pub fn community_labels(communities: usize, size: usize) -> Vec<usize> {
    (0..communities * size).map(|i| i / size).collect()
}

/// Synthetic 8x8 stroke glyphs flattened to 64-dim rows: each glyph is two
/// random bright strokes (row, column or diagonal) on a dark background.
pub fn make_glyphs(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (8usize, 8usize);
    let mut out = Array2::<f64>::zeros((n, h * w));
    for g in 0..n {
        for _ in 0..2 {
            let intensity = 0.5 + 0.4 * rng.random::<f64>();
            match rng.random_range(0..3) {
                0 => {
                    let r = rng.random_range(0..h);
                    let c0 = rng.random_range(0..w / 2);
                    let len = rng.random_range(3..=(w - c0));
                    for c in c0..(c0 + len) {
                        out[[g, r * w + c]] = intensity;
                    }
                }
                1 => {
                    let c = rng.random_range(0..w);
                    let r0 = rng.random_range(0..h / 2);
                    let len = rng.random_range(3..=(h - r0));
                    for r in r0..(r0 + len) {
                        out[[g, r * w + c]] = intensity;
                    }
                }
                _ => {
                    let start = rng.random_range(0..4);
                    let len = rng.random_range(3..=(h - start).min(w - start));
                    for d in 0..len {
                        out[[g, (start + d) * w + (start + d)]] = intensity;
                    }
                }
            }
        }
    }
    out
}

/// Sampler drawing a fresh batch from a Gaussian mixture each call.
#[derive(Debug, Clone)]
pub struct MixtureSampler {
    pub spec: MixtureSpec,
}

impl ReferenceSampler for MixtureSampler {
    fn sample_batch(&mut self, rng: &mut ChaCha8Rng, m: usize) -> Result<RefBatch> {
        Ok(RefBatch {
            points: Some(self.spec.draw(rng, m)),
            distances: None,
        })
    }
}

/// Sampler subsampling (without replacement) a fixed point set, optionally
/// carrying precomputed intra-set distances (geodesics) for the batch.
#[derive(Debug, Clone)]
pub struct FixedSetSampler {
    points: Option<Array2<f64>>,
    distances: Option<DistanceMatrix>,
    n: usize,
}

impl FixedSetSampler {
    /// Batches carry raw coordinates; distances are computed downstream.
    pub fn from_points(points: Array2<f64>) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::InvalidInput("fixed set needs at least two points".into()));
        }
        Ok(Self {
            n: points.nrows(),
            points: Some(points),
            distances: None,
        })
    }

    /// Batches carry the corresponding geodesic submatrix; `points` may be
    /// absent (graph nodes have no coordinates).
    pub fn from_distances(distances: DistanceMatrix, points: Option<Array2<f64>>) -> Result<Self> {
        if let Some(p) = &points {
            if p.nrows() != distances.n() {
                return Err(Error::ShapeMismatch {
                    context: "fixed-set sampler",
                    expected: (distances.n(), p.ncols()),
                    got: p.dim(),
                });
            }
        }
        if distances.n() < 2 {
            return Err(Error::InvalidInput("fixed set needs at least two points".into()));
        }
        Ok(Self {
            n: distances.n(),
            points,
            distances: Some(distances),
        })
    }
}

impl ReferenceSampler for FixedSetSampler {
    fn sample_batch(&mut self, rng: &mut ChaCha8Rng, m: usize) -> Result<RefBatch> {
        if m > self.n {
            return Err(Error::InvalidInput(
                "batch size exceeds fixed reference set".into(),
            ));
        }
        let idx = rand::seq::index::sample(rng, self.n, m).into_vec();
        let points = self.points.as_ref().map(|p| {
            Array2::from_shape_fn((m, p.ncols()), |(i, j)| p[[idx[i], j]])
        });
        let distances = match &self.distances {
            Some(d) => {
                let sub =
                    Array2::from_shape_fn((m, m), |(i, j)| d.values()[[idx[i], idx[j]]]);
                Some(DistanceMatrix::with_scale(sub, d.scale())?)
            }
            None => None,
        };
        Ok(RefBatch { points, distances })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn mixture_single_mode_mean_concentrates() {
        let cloud =
            make_gaussian_mixture(&[(array![0.0, 0.0], 0.01)], 1000, 3).unwrap();
        let mean = cloud.points.sum_axis(ndarray::Axis(0)) / 1000.0;
        assert!(mean[0].abs() < 0.01 && mean[1].abs() < 0.01, "mean {mean:?}");
    }

    #[test]
    fn mixture_mode_counts_are_balanced() {
        let centers = [
            (array![-10.0, -10.0], 0.1),
            (array![10.0, -10.0], 0.1),
            (array![-10.0, 10.0], 0.1),
            (array![10.0, 10.0], 0.1),
        ];
        let n = 4000;
        let cloud = make_gaussian_mixture(&centers, n, 5).unwrap();
        let mut counts = [0usize; 4];
        for i in 0..n {
            let x = cloud.points[[i, 0]];
            let y = cloud.points[[i, 1]];
            let m = match (x > 0.0, y > 0.0) {
                (false, false) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (true, true) => 3,
            };
            counts[m] += 1;
        }
        // Binomial(n, 1/4): 3 sigma ~ 82.
        let expected = n as f64 / 4.0;
        let three_sigma = 3.0 * (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!(
                (c as f64 - expected).abs() < three_sigma,
                "counts {counts:?}"
            );
        }
    }

    #[test]
    fn mixture_same_seed_identical() {
        let modes = [(array![1.0, 2.0], 0.5)];
        let a = make_gaussian_mixture(&modes, 50, 11).unwrap();
        let b = make_gaussian_mixture(&modes, 50, 11).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn scurve_satisfies_parametrization() {
        let cloud = make_scurve(500, 7).unwrap();
        assert_eq!(cloud.points.dim(), (500, 3));
        for i in 0..500 {
            let x = cloud.points[[i, 0]];
            let y = cloud.points[[i, 1]];
            let z = cloud.points[[i, 2]];
            // x = sin t and |z| = 1 - cos t on the generating curve:
            // sin^2 t + cos^2 t = 1 with cos t = 1 - |z|.
            let cos_t = 1.0 - z.abs();
            assert_abs_diff_eq!(x * x + cos_t * cos_t, 1.0, epsilon = 1e-9);
            assert!((0.0..=2.0).contains(&y));
        }
    }

    #[test]
    fn scurve_geodesics_track_parameter() {
        // Intrinsic 2D: geodesic distance grows with |delta t| along the curve.
        let n = 100;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut ts = Vec::with_capacity(n);
        let mut pts = Array2::<f64>::zeros((n, 3));
        for i in 0..n {
            let t = (rng.random::<f64>() - 0.5) * 3.0 * core::f64::consts::PI;
            ts.push(t);
            pts[[i, 0]] = t.sin();
            pts[[i, 1]] = 0.0; // collapse the extruded axis to isolate t
            pts[[i, 2]] = t.signum() * (t.cos() - 1.0);
        }
        let graph = crate::metric_spaces::knn_graph(&pts, 10).unwrap();
        let geo = crate::metric_spaces::floyd_warshall(&graph).unwrap();
        let mut dt = Vec::new();
        let mut dg = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                dt.push((ts[i] - ts[j]).abs());
                dg.push(geo.values()[[i, j]]);
            }
        }
        let corr = crate::linalg::pearson(&dt, &dg).unwrap();
        assert!(corr > 0.95, "geodesic vs |dt| correlation {corr}");
    }

    #[test]
    fn community_graph_extremes_and_determinism() {
        // One community with p_in = 1 is the complete graph.
        let g = make_community_graph(1, 5, 1.0, 0.0, 1).unwrap();
        assert_eq!(g.edges.len(), 10);

        let a = make_community_graph(2, 10, 0.8, 0.05, 2).unwrap();
        let b = make_community_graph(2, 10, 0.8, 0.05, 2).unwrap();
        assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn community_graph_separates_blocks() {
        let g = make_community_graph(2, 12, 0.8, 0.05, 3).unwrap();
        let d = crate::metric_spaces::floyd_warshall(&g).unwrap();
        let labels = community_labels(2, 12);
        let mut intra = (0.0, 0usize);
        let mut inter = (0.0, 0usize);
        for i in 0..24 {
            for j in (i + 1)..24 {
                if labels[i] == labels[j] {
                    intra = (intra.0 + d.values()[[i, j]], intra.1 + 1);
                } else {
                    inter = (inter.0 + d.values()[[i, j]], inter.1 + 1);
                }
            }
        }
        assert!(intra.0 / (intra.1 as f64) < inter.0 / (inter.1 as f64));
    }

    #[test]
    fn glyphs_have_plausible_intensity() {
        let glyphs = make_glyphs(64, 9);
        let mean: f64 = glyphs.iter().sum::<f64>() / glyphs.len() as f64;
        assert!(mean > 0.03 && mean < 0.4, "mean glyph intensity {mean}");
        assert!(glyphs.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn fixed_set_sampler_subsamples_consistently() {
        let pts = make_scurve(40, 13).unwrap().points;
        let graph = crate::metric_spaces::knn_graph(&pts, 6).unwrap();
        let geo = crate::metric_spaces::floyd_warshall(&graph).unwrap();
        let mut sampler = FixedSetSampler::from_distances(geo.clone(), Some(pts.clone())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sampler.sample_batch(&mut rng, 8).unwrap();
        let bp = batch.points.unwrap();
        let bd = batch.distances.unwrap();
        assert_eq!(bp.dim(), (8, 3));
        assert_eq!(bd.n(), 8);
        // The submatrix rows must correspond to the subsampled points: check
        // one entry by brute-force lookup of matching source rows.
        'outer: for i in 0..40 {
            for j in 0..40 {
                if (0..3).all(|k| pts[[i, k]] == bp[[0, k]])
                    && (0..3).all(|k| pts[[j, k]] == bp[[1, k]])
                {
                    assert_eq!(bd.values()[[0, 1]], geo.values()[[i, j]]);
                    break 'outer;
                }
            }
        }
    }
}
