//! One-dimensional harmonic-oscillator functions and their matrix elements.
//!
//! Everything here is in oscillator units: lengths in units of the
//! oscillator length, so that `phi_n(x) = H_n(x) exp(-x^2/2) / sqrt(2^n n! sqrt(pi))`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};

/// Values `phi_0(x) .. phi_nmax(x)` of the normalized oscillator functions.
pub fn oscillator_functions(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = scaled_oscillator_functions(nmax, x);
    let g = (-0.5 * x * x).exp();
    for v in &mut out {
        *v *= g;
    }
    out
}

/// Oscillator functions with the Gaussian factor removed: `phi_n(x) exp(x^2/2)`.
///
/// Used by quadrature rules whose weight already carries the Gaussian.
pub fn scaled_oscillator_functions(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(PI.powf(-0.25));
    if nmax >= 1 {
        out.push(std::f64::consts::SQRT_2 * x * out[0]);
    }
    for n in 1..nmax {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

/// `phi_n(0)` and `phi_n'(0)` for `n = 0..=nmax`.
fn values_at_origin(nmax: usize) -> (Vec<f64>, Vec<f64>) {
    // one extra order is needed for the derivative ladder
    let mut value = vec![0.0; nmax + 2];
    value[0] = PI.powf(-0.25);
    for n in 1..=nmax {
        // phi_{n+1}(0) = -sqrt(n/(n+1)) phi_{n-1}(0)
        let nf = n as f64;
        value[n + 1] = -(nf / (nf + 1.0)).sqrt() * value[n - 1];
    }
    let deriv = (0..=nmax)
        .map(|n| {
            let nf = n as f64;
            let lower = if n > 0 { (nf / 2.0).sqrt() * value[n - 1] } else { 0.0 };
            lower - ((nf + 1.0) / 2.0).sqrt() * value[n + 1]
        })
        .collect();
    value.truncate(nmax + 1);
    (value, deriv)
}

/// Table of half-line overlaps `int_0^inf phi_n phi_m dx` for `n, m <= nmax`.
///
/// Equal parity gives `delta_nm / 2`. For opposite parity the integrand's
/// Wronskian identity `(phi_n phi_m' - phi_m phi_n')' = 2 (n - m) phi_n phi_m`
/// reduces the integral to values at the origin.
pub fn half_integral_table(nmax: usize) -> Array2<f64> {
    let (value, deriv) = values_at_origin(nmax);
    Array2::from_shape_fn((nmax + 1, nmax + 1), |(n, m)| {
        if n == m {
            0.5
        } else if (n + m) % 2 == 0 {
            0.0
        } else {
            -(value[n] * deriv[m] - value[m] * deriv[n]) / (2.0 * (n as f64 - m as f64))
        }
    })
}

/// `int_0^inf phi_n(x) phi_m(x) dx`.
pub fn hermite_half_integral(n: usize, m: usize) -> f64 {
    half_integral_table(n.max(m))[[n, m]]
}

/// Table of `<n| |x| |m>` for `n, m <= nmax`.
pub fn absx_table(nmax: usize) -> Array2<f64> {
    // x phi_m = (sqrt(m) phi_{m-1} + sqrt(m+1) phi_{m+1}) / sqrt(2), and the
    // remaining half-line overlaps have opposite parity.
    let half = half_integral_table(nmax + 1);
    Array2::from_shape_fn((nmax + 1, nmax + 1), |(n, m)| {
        if (n + m) % 2 == 1 {
            return 0.0;
        }
        let mf = m as f64;
        let lower = if m > 0 { mf.sqrt() * half[[n, m - 1]] } else { 0.0 };
        let upper = (mf + 1.0).sqrt() * half[[n, m + 1]];
        std::f64::consts::SQRT_2 * (lower + upper)
    })
}

/// `<n| |x| |m>` in oscillator units.
pub fn absx_matrix_element(n: usize, m: usize) -> f64 {
    absx_table(n.max(m))[[n, m]]
}

/// Position operator `x = (a + a^dagger) / sqrt(2)`.
pub fn position_table(nmax: usize) -> Array2<f64> {
    let mut x = Array2::zeros((nmax + 1, nmax + 1));
    for n in 0..nmax {
        let v = ((n + 1) as f64 / 2.0).sqrt();
        x[[n, n + 1]] = v;
        x[[n + 1, n]] = v;
    }
    x
}

/// Real antisymmetric matrix `q` with `p = -i d/dx = i q`.
pub fn momentum_table(nmax: usize) -> Array2<f64> {
    let mut q = Array2::zeros((nmax + 1, nmax + 1));
    for n in 0..nmax {
        let v = ((n + 1) as f64 / 2.0).sqrt();
        // <n+1|p|n> = i sqrt((n+1)/2)
        q[[n + 1, n]] = v;
        q[[n, n + 1]] = -v;
    }
    q
}

/// `x^2` in the truncated oscillator basis (exact elements, not the square of the truncated `x`).
pub fn position_squared_table(nmax: usize) -> Array2<f64> {
    let mut x2 = Array2::zeros((nmax + 1, nmax + 1));
    for n in 0..=nmax {
        x2[[n, n]] = n as f64 + 0.5;
        if n + 2 <= nmax {
            let v = 0.5 * (((n + 1) * (n + 2)) as f64).sqrt();
            x2[[n, n + 2]] = v;
            x2[[n + 2, n]] = v;
        }
    }
    x2
}

/// Gauss-Hermite rule for weight `exp(-x^2)` via the Golub-Welsch eigenproblem.
///
/// Exact for polynomials up to degree `2 n - 1`. Nodes ascending.
pub fn gauss_hermite(n: usize) -> (Array1<f64>, Array1<f64>) {
    assert!(n > 0, "Gauss-Hermite rule needs at least one node");
    let mut jacobi = Array2::<f64>::zeros((n, n));
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[[k, k - 1]] = b;
        jacobi[[k - 1, k]] = b;
    }
    let (nodes, vectors) = jacobi.eigh(UPLO::Lower).expect("symmetric tridiagonal eigenproblem");
    let weights = vectors.row(0).mapv(|v| v * v * PI.sqrt());
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn half_integral_examples() {
        assert_abs_diff_eq!(hermite_half_integral(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(hermite_half_integral(2, 2), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(hermite_half_integral(0, 2), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hermite_half_integral(0, 1), 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn absx_ground_state() {
        assert_abs_diff_eq!(absx_matrix_element(0, 0), 1.0 / PI.sqrt(), epsilon = 1e-15);
        assert_eq!(absx_matrix_element(0, 1), 0.0);
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(12);
        let m0: f64 = w.sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m22: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        assert_abs_diff_eq!(m0, PI.sqrt(), epsilon = 1e-13);
        assert_abs_diff_eq!(m2, PI.sqrt() / 2.0, epsilon = 1e-13);
        // (21)!! / 2^11 * sqrt(pi)
        let double_fact: f64 = (1..=21).step_by(2).map(|k| k as f64).product();
        assert!((m22 / (double_fact / 2048.0 * PI.sqrt()) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn oscillator_functions_orthonormal_under_quadrature() {
        let (x, w) = gauss_hermite(40);
        let nmax = 20;
        let vals: Vec<Vec<f64>> = x.iter().map(|&x| scaled_oscillator_functions(nmax, x)).collect();
        for n in 0..=nmax {
            for m in 0..=nmax {
                let s: f64 = vals.iter().zip(&w).map(|(v, w)| w * v[n] * v[m]).sum();
                let expected = if n == m { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(s, expected, epsilon = 1e-12);
            }
        }
    }
}
