//! Evaluation metrics for generated distributions.
//!
//! Everything here is invariant under rotation, reflection and translation of
//! the generated cloud: the relational loss leaves those degrees of freedom
//! undetermined, so the metrics must not punish them. Same-dimension mode
//! tasks align with a rigid map fitted on matched k-means centroids;
//! cross-dimension tasks compare pairwise centroid-distance matrices; manifold
//! and graph tasks compare neighborhood structure through a full GW matching.

use alloc::{vec, vec::Vec};
use ndarray::{Array1, Array2};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gw::{solve_entropic_gw, GwConfig};
use crate::linalg::{apply_rigid, pearson, rigid_align};
use crate::metric_spaces::{pairwise_euclidean, DistanceMatrix, ProbabilityVector};
use crate::{Error, Result};

/// Quantified counterpart of the paper-style visual checks.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EvalReport {
    /// Per-mode fraction of generated samples landing within the coverage
    /// radius of each reference mode (empty for manifold/graph tasks).
    pub mode_coverage: Vec<f64>,
    /// Pearson correlation of upper-triangular pairwise centroid distances,
    /// generated vs reference; 0 when degenerate.
    pub centroid_distance_correlation: f64,
    /// Mean Jaccard overlap of k-NN neighborhoods, data geodesic vs generated
    /// Euclidean, matched through the GW coupling (0 for mode tasks).
    pub knn_overlap: f64,
    /// GW loss of the evaluation solve (reference structure vs generated).
    pub final_gw: f64,
}

/// What the generated samples are compared against.
#[derive(Debug, Clone)]
pub enum EvalReference {
    /// Mixture task: true mode centers, optionally with reference samples for
    /// the evaluation GW solve.
    Modes {
        centers: Array2<f64>,
        points: Option<Array2<f64>>,
    },
    /// Manifold task: precomputed geodesic distances of the reference set.
    Geodesic { distances: DistanceMatrix },
    /// Graph task: geodesic distances plus a community label per node.
    Graph {
        distances: DistanceMatrix,
        communities: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub kmeans_seed: u64,
    pub knn_k: usize,
    /// Solver settings for the evaluation GW solve.
    pub gw: GwConfig,
    /// Coverage radius; defaults to half the minimum inter-mode distance.
    pub coverage_radius: Option<f64>,
    /// Cap on the point count of the evaluation GW solve.
    pub gw_subsample: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            kmeans_seed: 0,
            knn_k: 10,
            gw: GwConfig {
                outer_iters: 100,
                sinkhorn_iters: 1000,
                ..GwConfig::default()
            },
            coverage_radius: None,
            gw_subsample: 256,
        }
    }
}

/// Lloyd's k-means with k-means++ seeding. Deterministic per seed; only
/// pairwise distances enter the seeding, so cluster memberships are invariant
/// under rigid transforms of the input. Returns `(centroids, assignment,
/// counts)`; empty clusters keep their last centroid and a zero count.
pub fn kmeans(points: &Array2<f64>, k: usize, seed: u64) -> (Array2<f64>, Vec<usize>, Vec<usize>) {
    let (n, d) = points.dim();
    let k = k.min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ over data indices.
    let mut chosen = vec![rng.random_range(0..n)];
    let mut min_sq = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let last = chosen[chosen.len() - 1];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..d {
                let diff = points[[i, j]] - points[[last, j]];
                acc += diff * diff;
            }
            if acc < min_sq[i] {
                min_sq[i] = acc;
            }
        }
        let total: f64 = min_sq.iter().sum();
        if total <= 0.0 {
            // All points coincide with chosen centers; reuse the first index.
            chosen.push(chosen[0]);
            continue;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for i in 0..n {
            target -= min_sq[i];
            if target <= 0.0 {
                pick = i;
                break;
            }
        }
        chosen.push(pick);
    }

    let mut centroids = Array2::from_shape_fn((k, d), |(c, j)| points[[chosen[c], j]]);
    let mut assignment = vec![0usize; n];
    let mut counts = vec![0usize; k];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let mut acc = 0.0;
                for j in 0..d {
                    let diff = points[[i, j]] - centroids[[c, j]];
                    acc += diff * diff;
                }
                if acc < best_d {
                    best_d = acc;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        counts = vec![0usize; k];
        let mut sums = Array2::<f64>::zeros((k, d));
        for i in 0..n {
            counts[assignment[i]] += 1;
            for j in 0..d {
                sums[[assignment[i], j]] += points[[i, j]];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centroids[[c, j]] = sums[[c, j]] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (centroids, assignment, counts)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    fn heap(arr: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(arr.clone());
            return;
        }
        for i in 0..k {
            heap(arr, k - 1, out);
            if k % 2 == 0 {
                arr.swap(i, k - 1);
            } else {
                arr.swap(0, k - 1);
            }
        }
    }
    heap(&mut current, k, &mut out);
    out
}

fn upper_triangular_distances(points: &Array2<f64>, order: &[usize]) -> Vec<f64> {
    let k = order.len();
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in (a + 1)..k {
            let mut acc = 0.0;
            for j in 0..points.ncols() {
                let diff = points[[order[a], j]] - points[[order[b], j]];
                acc += diff * diff;
            }
            out.push(acc.sqrt());
        }
    }
    out
}

/// Row-argmax matching of a coupling plan: data row `i` maps to the generated
/// column with the largest transported mass. Ties break toward lower index.
pub fn coupling_row_argmax(plan: &Array2<f64>) -> Vec<usize> {
    let (n, m) = plan.dim();
    (0..n)
        .map(|i| {
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for j in 0..m {
                if plan[[i, j]] > best_v {
                    best_v = plan[[i, j]];
                    best = j;
                }
            }
        best
        })
        .collect()
}

fn k_smallest_indices(row: impl Fn(usize) -> f64, n: usize, skip: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).filter(|&j| j != skip).collect();
    idx.sort_by(|&a, &b| row(a).partial_cmp(&row(b)).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// GW matching between a reference distance structure and generated samples:
/// returns the data-to-generated row-argmax map and the solve's loss.
pub fn match_generated(
    reference: &DistanceMatrix,
    generated: &Array2<f64>,
    cfg: &GwConfig,
) -> Result<(Vec<usize>, f64)> {
    if reference.n() != generated.nrows() {
        return Err(Error::ShapeMismatch {
            context: "match_generated",
            expected: (reference.n(), generated.ncols()),
            got: generated.dim(),
        });
    }
    let d_gen = pairwise_euclidean(generated)?;
    let p = ProbabilityVector::uniform(reference.n());
    let q = ProbabilityVector::uniform(generated.nrows());
    let res = solve_entropic_gw(reference, &d_gen, &p, &q, cfg)?;
    Ok((coupling_row_argmax(res.coupling.plan()), res.loss))
}

/// Mean Jaccard overlap of `k`-NN neighborhoods: the reference geodesic
/// neighborhoods vs the generated Euclidean neighborhoods of the matched
/// points, with neighborhoods expressed as data-index sets.
pub fn knn_overlap(
    reference: &DistanceMatrix,
    generated: &Array2<f64>,
    matching: &[usize],
    k: usize,
) -> Result<f64> {
    let n = reference.n();
    if matching.len() != n || generated.nrows() < 2 {
        return Err(Error::InvalidInput("matching length mismatch".into()));
    }
    let d_gen = pairwise_euclidean(generated)?;
    let mut total = 0.0;
    for i in 0..n {
        let a = k_smallest_indices(|j| reference.values()[[i, j]], n, i, k);
        let b = k_smallest_indices(
            |j| d_gen.values()[[matching[i], matching[j]]],
            n,
            i,
            k,
        );
        let inter = a.iter().filter(|x| b.contains(x)).count();
        let union = a.len() + b.len() - inter;
        total += inter as f64 / union as f64;
    }
    Ok(total / n as f64)
}

/// Mean Euclidean distance between generated points matched to same-community
/// vs different-community nodes: `(intra, inter)`.
pub fn community_separation(
    generated: &Array2<f64>,
    matching: &[usize],
    communities: &[usize],
) -> Result<(f64, f64)> {
    if matching.len() != communities.len() {
        return Err(Error::InvalidInput("community label length mismatch".into()));
    }
    let d_gen = pairwise_euclidean(generated)?;
    let mut intra = (0.0, 0usize);
    let mut inter = (0.0, 0usize);
    for i in 0..matching.len() {
        for j in (i + 1)..matching.len() {
            let dist = d_gen.values()[[matching[i], matching[j]]];
            if communities[i] == communities[j] {
                intra = (intra.0 + dist, intra.1 + 1);
            } else {
                inter = (inter.0 + dist, inter.1 + 1);
            }
        }
    }
    if intra.1 == 0 || inter.1 == 0 {
        return Err(Error::InvalidInput("need both intra and inter pairs".into()));
    }
    Ok((intra.0 / intra.1 as f64, inter.0 / inter.1 as f64))
}

fn subsample_rows(points: &Array2<f64>, cap: usize, seed: u64) -> Array2<f64> {
    let n = points.nrows();
    if n <= cap {
        return points.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
    Array2::from_shape_fn((cap, points.ncols()), |(i, j)| points[[idx[i], j]])
}

fn evaluate_modes(
    generated: &Array2<f64>,
    centers: &Array2<f64>,
    points: Option<&Array2<f64>>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let k = centers.nrows();
    if k < 2 {
        return Err(Error::InvalidInput("mode evaluation needs >= 2 modes".into()));
    }
    let (gcent, _assignment, counts) = kmeans(generated, k, cfg.kmeans_seed);
    let nonempty: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
    let same_dim = centers.ncols() == generated.ncols();

    // Coverage radius: half the minimum inter-mode distance.
    let radius = cfg.coverage_radius.unwrap_or_else(|| {
        let d = upper_triangular_distances(centers, &(0..k).collect::<Vec<_>>());
        0.5 * d.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    });

    let mut correlation = 0.0;
    let mut coverage = vec![0.0; k];

    if same_dim {
        // Best mode correspondence + rigid alignment over permutations.
        let perms = permutations(k);
        let mut best: Option<(f64, Vec<usize>, Array2<f64>, Array1<f64>)> = None;
        for perm in &perms {
            // perm[c]: generated centroid assigned to reference mode c; only
            // non-empty centroids participate in the fit.
            let pairs: Vec<(usize, usize)> = (0..k)
                .filter(|&c| counts[perm[c]] > 0)
                .map(|c| (perm[c], c))
                .collect();
            if pairs.len() < 2 {
                continue;
            }
            let src = Array2::from_shape_fn((pairs.len(), generated.ncols()), |(i, j)| {
                gcent[[pairs[i].0, j]]
            });
            let dst = Array2::from_shape_fn((pairs.len(), centers.ncols()), |(i, j)| {
                centers[[pairs[i].1, j]]
            });
            let (r, t) = rigid_align(&src, &dst);
            let aligned = apply_rigid(&src, &r, &t);
            let residual: f64 = (&aligned - &dst).iter().map(|x| x * x).sum();
            if best.as_ref().map_or(true, |(b, _, _, _)| residual < *b) {
                best = Some((residual, perm.clone(), r, t));
            }
        }

        if let Some((_, perm, r, t)) = best {
            let aligned = apply_rigid(generated, &r, &t);
            for i in 0..aligned.nrows() {
                let mut best_mode = 0usize;
                let mut best_d = f64::INFINITY;
                for c in 0..k {
                    let mut acc = 0.0;
                    for j in 0..centers.ncols() {
                        let diff = aligned[[i, j]] - centers[[c, j]];
                        acc += diff * diff;
                    }
                    if acc < best_d {
                        best_d = acc;
                        best_mode = c;
                    }
                }
                if best_d.sqrt() <= radius {
                    coverage[best_mode] += 1.0;
                }
            }
            for c in coverage.iter_mut() {
                *c /= aligned.nrows() as f64;
            }
            // Correlation over the matched non-empty centroids.
            let matched: Vec<usize> = (0..k).filter(|&c| counts[perm[c]] > 0).collect();
            if matched.len() >= 3 {
                let gen_order: Vec<usize> = matched.iter().map(|&c| perm[c]).collect();
                let dg = upper_triangular_distances(&gcent, &gen_order);
                let dr = upper_triangular_distances(centers, &matched);
                correlation = pearson(&dg, &dr).unwrap_or(0.0);
            }
        } else {
            // Degenerate (collapsed) cloud: everything lands on one mode.
            let mut nearest = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let mut acc = 0.0;
                for j in 0..centers.ncols() {
                    let diff = gcent[[0, j]] - centers[[c, j]];
                    acc += diff * diff;
                }
                if acc < best_d {
                    best_d = acc;
                    nearest = c;
                }
            }
            if best_d.sqrt() <= radius {
                coverage[nearest] = 1.0;
            }
        }
    } else {
        // Cross-dimension: no alignment exists; pick the mode correspondence
        // maximizing the centroid-distance correlation. Degenerate clustering
        // (an empty cluster) leaves the correlation at 0.
        if nonempty.len() == k && k >= 3 {
            let ref_order: Vec<usize> = (0..k).collect();
            let dr = upper_triangular_distances(centers, &ref_order);
            let mut best = f64::NEG_INFINITY;
            for perm in &permutations(k) {
                let dg = upper_triangular_distances(&gcent, perm);
                if let Some(c) = pearson(&dg, &dr) {
                    if c > best {
                        best = c;
                    }
                }
            }
            if best > f64::NEG_INFINITY {
                correlation = best;
            }
        }
        for (c, cnt) in counts.iter().enumerate() {
            coverage[c] = *cnt as f64 / generated.nrows() as f64;
        }
        coverage.sort_by(|a, b| b.partial_cmp(a).unwrap());
    }

    // Evaluation GW between reference samples and generated samples.
    let final_gw = match points {
        Some(ref_pts) => {
            let a = subsample_rows(ref_pts, cfg.gw_subsample, cfg.kmeans_seed ^ 0x5bd1);
            let b = subsample_rows(generated, cfg.gw_subsample, cfg.kmeans_seed ^ 0xa3c1);
            let da = pairwise_euclidean(&a)?;
            let db = pairwise_euclidean(&b)?;
            let p = ProbabilityVector::uniform(a.nrows());
            let q = ProbabilityVector::uniform(b.nrows());
            solve_entropic_gw(&da, &db, &p, &q, &cfg.gw)?.loss
        }
        None => 0.0,
    };

    Ok(EvalReport {
        mode_coverage: coverage,
        centroid_distance_correlation: correlation,
        knn_overlap: 0.0,
        final_gw,
    })
}

fn evaluate_relational(
    generated: &Array2<f64>,
    distances: &DistanceMatrix,
    cfg: &EvalConfig,
) -> Result<(EvalReport, Vec<usize>)> {
    if generated.nrows() != distances.n() {
        return Err(Error::InvalidInput(
            "relational evaluation needs one generated sample per reference point".into(),
        ));
    }
    let (matching, final_gw) = match_generated(distances, generated, &cfg.gw)?;
    let overlap = knn_overlap(distances, generated, &matching, cfg.knn_k)?;
    Ok((
        EvalReport {
            mode_coverage: Vec::new(),
            centroid_distance_correlation: 0.0,
            knn_overlap: overlap,
            final_gw,
        },
        matching,
    ))
}

/// Evaluates generated samples against a reference specification.
pub fn evaluate(
    generated: &Array2<f64>,
    reference: &EvalReference,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if generated.nrows() == 0 {
        return Err(Error::InvalidInput("no generated samples".into()));
    }
    if generated.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("generated samples"));
    }
    match reference {
        EvalReference::Modes { centers, points } => {
            evaluate_modes(generated, centers, points.as_ref(), cfg)
        }
        EvalReference::Geodesic { distances } => {
            Ok(evaluate_relational(generated, distances, cfg)?.0)
        }
        EvalReference::Graph { distances, .. } => {
            Ok(evaluate_relational(generated, distances, cfg)?.0)
        }
    }
}

/// Random-matching baseline for [`knn_overlap`]: the expected overlap when
/// the data-to-generated map is a seeded random permutation.
pub fn knn_overlap_permutation_baseline(
    reference: &DistanceMatrix,
    generated: &Array2<f64>,
    k: usize,
    seed: u64,
) -> Result<f64> {
    let n = reference.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n.min(generated.nrows())).collect();
    for i in (1..perm.len()).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    knn_overlap(reference, generated, &perm, k)
}
