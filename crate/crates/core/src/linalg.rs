//! Small dense linear-algebra helpers: thin SVD (one-sided Jacobi), polar
//! factors, Gram-Schmidt orthonormalization and rigid alignment.
//!
//! The SVD here targets the small matrices this crate actually decomposes
//! (Procrustes cross-products and Kabsch covariances, a handful of rows and
//! columns); it is not a general-purpose LAPACK replacement.

use alloc::{vec, vec::Vec};
use ndarray::{Array1, Array2};
#[allow(unused_imports)]
use num_traits::Float;

/// Thin singular value decomposition `a = u * diag(s) * v^T`.
///
/// `u` is `m x k`, `s` has length `k`, `v` is `n x k` with `k = min(m, n)`.
/// Singular values are sorted in descending order. Rank-deficient inputs still
/// yield orthonormal `u` and `v`; the null-direction columns are completed
/// deterministically from the canonical basis.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
}

/// One-sided Jacobi SVD. Numerically robust for the small, well-scaled
/// matrices used by the Procrustes and Kabsch paths.
pub fn thin_svd(a: &Array2<f64>) -> ThinSvd {
    let (m, n) = a.dim();
    if m < n {
        let t = thin_svd(&a.t().to_owned());
        return ThinSvd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }

    // Work on columns of b; accumulate right rotations into v.
    let mut b = a.clone();
    let mut v = Array2::<f64>::eye(n);

    let scale = b.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1e-300);
    let tol = 1e-15 * scale * scale;

    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..m {
                    let bp = b[[i, p]];
                    let bq = b[[i, q]];
                    app += bp * bp;
                    aqq += bq * bq;
                    apq += bp * bq;
                }
                off = off.max(apq.abs());
                if apq.abs() <= tol.max(1e-30 * app.max(aqq)) {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..m {
                    let bp = b[[i, p]];
                    let bq = b[[i, q]];
                    b[[i, p]] = c * bp - s * bq;
                    b[[i, q]] = s * bp + c * bq;
                }
                for i in 0..n {
                    let vp = v[[i, p]];
                    let vq = v[[i, q]];
                    v[[i, p]] = c * vp - s * vq;
                    v[[i, q]] = s * vp + c * vq;
                }
            }
        }
        if off <= tol {
            break;
        }
    }

    // Column norms are the singular values.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| b[[i, j]] * b[[i, j]]).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap().then(x.cmp(&y)));

    let mut u = Array2::<f64>::zeros((m, n));
    let mut s = Array1::<f64>::zeros(n);
    let mut v_sorted = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        for i in 0..n {
            v_sorted[[i, dst]] = v[[i, src]];
        }
        if norms[src] > 1e-12 * scale.max(1.0) {
            for i in 0..m {
                u[[i, dst]] = b[[i, src]] / norms[src];
            }
        }
    }

    // Complete zero columns of u against the canonical basis.
    for j in 0..n {
        let norm_j = (0..m).map(|i| u[[i, j]] * u[[i, j]]).sum::<f64>().sqrt();
        if norm_j > 0.5 {
            continue;
        }
        'candidates: for e in 0..m {
            let mut col = vec![0.0; m];
            col[e] = 1.0;
            for k in 0..n {
                if k == j {
                    continue;
                }
                let dot: f64 = (0..m).map(|i| col[i] * u[[i, k]]).sum();
                for i in 0..m {
                    col[i] -= dot * u[[i, k]];
                }
            }
            let norm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for i in 0..m {
                    u[[i, j]] = col[i] / norm;
                }
                break 'candidates;
            }
        }
    }

    ThinSvd { u, s, v: v_sorted }
}

/// Nearest matrix with orthonormal rows/columns: `u * v^T` from the thin SVD.
///
/// For a square input this is the orthogonal polar factor; for an `s x d`
/// input with `s < d` the result has orthonormal rows, for `s > d`
/// orthonormal columns.
pub fn semi_orthogonal_polar(a: &Array2<f64>) -> Array2<f64> {
    let svd = thin_svd(a);
    svd.u.dot(&svd.v.t())
}

/// Orthonormalizes the columns of `g` in place with (twice-iterated) modified
/// Gram-Schmidt. Requires `g` to have full column rank.
pub fn orthonormalize_columns(g: &mut Array2<f64>) {
    let (m, n) = g.dim();
    debug_assert!(m >= n);
    for _pass in 0..2 {
        for j in 0..n {
            for k in 0..j {
                let dot: f64 = (0..m).map(|i| g[[i, j]] * g[[i, k]]).sum();
                for i in 0..m {
                    g[[i, j]] -= dot * g[[i, k]];
                }
            }
            let norm: f64 = (0..m).map(|i| g[[i, j]] * g[[i, j]]).sum::<f64>().sqrt();
            debug_assert!(norm > 1e-12, "rank-deficient draw in orthonormalization");
            for i in 0..m {
                g[[i, j]] /= norm;
            }
        }
    }
}

/// Best orthogonal map (reflections allowed) and translation aligning `src`
/// onto `dst`: minimizes `sum_i ||r * src_i + t - dst_i||^2` over orthogonal
/// `r`. Both inputs are `k x d` with matched rows.
pub fn rigid_align(src: &Array2<f64>, dst: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let (k, d) = src.dim();
    debug_assert_eq!(dst.dim(), (k, d));
    let kf = k as f64;
    let src_mean = src.sum_axis(ndarray::Axis(0)) / kf;
    let dst_mean = dst.sum_axis(ndarray::Axis(0)) / kf;

    // Covariance dst_c^T src_c; its polar factor maximizes tr(R * src_c^T dst_c).
    let mut h = Array2::<f64>::zeros((d, d));
    for i in 0..k {
        for r in 0..d {
            for c in 0..d {
                h[[r, c]] += (dst[[i, r]] - dst_mean[r]) * (src[[i, c]] - src_mean[c]);
            }
        }
    }
    let rot = semi_orthogonal_polar(&h);
    let t = &dst_mean - &rot.dot(&src_mean);
    (rot, t)
}

/// Applies `r`/`t` from [`rigid_align`] to every row of `points`.
pub fn apply_rigid(points: &Array2<f64>, r: &Array2<f64>, t: &Array1<f64>) -> Array2<f64> {
    let mut out = points.dot(&r.t());
    for mut row in out.rows_mut() {
        row += t;
    }
    out
}

/// Pearson correlation; `None` when either side has (numerically) zero
/// variance or fewer than two entries.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 1e-24 || sbb <= 1e-24 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, n), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn assert_orthonormal_cols(a: &Array2<f64>, tol: f64) {
        let g = a.t().dot(a);
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g[[i, j]], want, epsilon = tol);
            }
        }
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        for (m, n, seed) in [(5, 3, 1), (3, 5, 2), (4, 4, 3), (8, 2, 4)] {
            let a = random_matrix(m, n, seed);
            let svd = thin_svd(&a);
            let mut recon = Array2::<f64>::zeros((m, n));
            for k in 0..svd.s.len() {
                for i in 0..m {
                    for j in 0..n {
                        recon[[i, j]] += svd.u[[i, k]] * svd.s[k] * svd.v[[j, k]];
                    }
                }
            }
            for i in 0..m {
                for j in 0..n {
                    assert_abs_diff_eq!(recon[[i, j]], a[[i, j]], epsilon = 1e-10);
                }
            }
            assert_orthonormal_cols(&svd.u, 1e-10);
            assert_orthonormal_cols(&svd.v, 1e-10);
            for k in 1..svd.s.len() {
                assert!(svd.s[k] <= svd.s[k - 1] + 1e-12);
            }
        }
    }

    #[test]
    fn svd_handles_rank_deficiency() {
        // Second column is a multiple of the first.
        let a = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let svd = thin_svd(&a);
        assert!(svd.s[1] < 1e-10);
        assert_orthonormal_cols(&svd.u, 1e-8);
        assert_orthonormal_cols(&svd.v, 1e-8);
    }

    #[test]
    fn polar_of_scaled_identity_is_identity() {
        let a = array![[2.0, 0.0], [0.0, 2.0]];
        let p = semi_orthogonal_polar(&a);
        assert_abs_diff_eq!(p[[0, 0]], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(p[[1, 1]], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(p[[0, 1]], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn rigid_align_recovers_transform() {
        let src = random_matrix(6, 3, 9);
        // A rotation-ish orthogonal matrix from the polar factor.
        let r_true = semi_orthogonal_polar(&random_matrix(3, 3, 10));
        let t_true = array![0.5, -1.0, 2.0];
        let dst = {
            let mut d = src.dot(&r_true.t());
            for mut row in d.rows_mut() {
                row += &t_true;
            }
            d
        };
        let (r, t) = rigid_align(&src, &dst);
        let aligned = apply_rigid(&src, &r, &t);
        for i in 0..src.nrows() {
            for j in 0..3 {
                assert_abs_diff_eq!(aligned[[i, j]], dst[[i, j]], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        assert_abs_diff_eq!(pearson(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
        let c = [4.0, 3.0, 2.0, 1.0];
        assert_abs_diff_eq!(pearson(&a, &c).unwrap(), -1.0, epsilon = 1e-12);
        assert!(pearson(&a, &[1.0, 1.0, 1.0, 1.0]).is_none());
    }
}
