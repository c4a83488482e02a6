//! Small dense linear-algebra helpers on top of LAPACK.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eigh, Norm, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Infinity norm (max absolute row sum) of a real matrix.
pub fn inf_norm(a: &Array2<f64>) -> f64 {
    a.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Ascending eigenpairs of a real symmetric matrix, all of them.
pub fn eigh_all(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    Ok(a.eigh(UPLO::Lower)?)
}

/// Orthonormalize the columns of `w` against `basis` and among themselves
/// (two passes of classical Gram-Schmidt). Columns whose norm collapses
/// below `drop_tol` times their original norm are removed.
fn orthonormalize_block(basis: ArrayView2<f64>, w: Array2<f64>, drop_tol: f64) -> Array2<f64> {
    let mut kept: Vec<Array1<f64>> = Vec::new();
    for col in w.columns() {
        let mut v = col.to_owned();
        let n0 = v.norm_l2();
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            if basis.ncols() > 0 {
                let c = basis.t().dot(&v);
                v -= &basis.dot(&c);
            }
            for q in &kept {
                let c = q.dot(&v);
                v.scaled_add(-c, q);
            }
        }
        let n1 = v.norm_l2();
        if n1 > drop_tol * n0 {
            kept.push(v / n1);
        }
    }
    let mut out = Array2::zeros((w.nrows(), kept.len()));
    for (j, v) in kept.into_iter().enumerate() {
        out.column_mut(j).assign(&v);
    }
    out
}

/// Settings for [`lowest_eigenpairs_iterative`].
#[derive(Debug, Clone)]
pub struct LanczosOptions {
    pub block_size: usize,
    /// Residual target relative to the matrix norm.
    pub tol: f64,
    pub max_dim: Option<usize>,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { block_size: 8, tol: 1e-11, max_dim: None, seed: 0x5eed }
    }
}

/// Lowest `k` eigenpairs of a symmetric matrix by block Lanczos with full
/// reorthogonalization (Rayleigh-Ritz on the whole Krylov space). The block
/// size bounds the multiplicity of degenerate eigenvalues that are resolved.
/// `start` seeds the first block, typically with eigenvectors from a nearby
/// problem.
pub fn lowest_eigenpairs_iterative(
    a: &Array2<f64>,
    k: usize,
    start: Option<ArrayView2<f64>>,
    opts: &LanczosOptions,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid("k", format!("need 1 <= k <= {n}, got {k}")));
    }
    let norm = inf_norm(a).max(f64::MIN_POSITIVE);
    let max_dim = opts.max_dim.unwrap_or(n).min(n);
    let block = opts.block_size.max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut first = Array2::<f64>::zeros((n, 0));
    if let Some(s) = start {
        first = s.to_owned();
    }
    let extra = block.max(k + block).saturating_sub(first.ncols()).min(n);
    let random = Array2::from_shape_fn((n, extra), |_| rng.random::<f64>() - 0.5);
    let first = ndarray::concatenate(Axis(1), &[first.view(), random.view()]).expect("same row count");

    let mut basis = Array2::<f64>::zeros((n, 0));
    let mut image = Array2::<f64>::zeros((n, 0));
    let mut next = orthonormalize_block(basis.view(), first, 1e-8);
    let mut worst = f64::INFINITY;
    loop {
        if next.ncols() == 0 {
            // Krylov space exhausted; refill with random directions.
            let fill = block.min(n - basis.ncols());
            if fill == 0 {
                break;
            }
            let random = Array2::from_shape_fn((n, fill), |_| rng.random::<f64>() - 0.5);
            next = orthonormalize_block(basis.view(), random, 1e-8);
            if next.ncols() == 0 {
                break;
            }
        }
        let room = max_dim - basis.ncols();
        if next.ncols() > room {
            next = next.slice(s![.., ..room]).to_owned();
        }
        let hn = a.dot(&next);
        basis = ndarray::concatenate(Axis(1), &[basis.view(), next.view()]).expect("rows");
        image = ndarray::concatenate(Axis(1), &[image.view(), hn.view()]).expect("rows");
        let m = basis.ncols();
        if m >= k {
            let t = basis.t().dot(&image);
            let t = (&t + &t.t()) * 0.5;
            let (theta, s) = t.eigh(UPLO::Lower)?;
            let s_k = s.slice(s![.., ..k]);
            let ritz = basis.dot(&s_k);
            let residual = image.dot(&s_k) - &ritz * &theta.slice(s![..k]);
            worst = residual.columns().into_iter().map(|c| c.norm_l2()).fold(0.0, f64::max) / norm;
            if worst < opts.tol || m == max_dim {
                if worst >= opts.tol {
                    return Err(Error::NotConverged { iterations: m, residual: worst });
                }
                return Ok((theta.slice(s![..k]).to_owned(), ritz));
            }
        }
        if m >= max_dim {
            break;
        }
        next = orthonormalize_block(basis.view(), hn, 1e-10);
    }
    Err(Error::NotConverged { iterations: basis.ncols(), residual: worst })
}
