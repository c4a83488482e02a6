//! Coulomb integrals `<ab|1/r12|cd>` between products of 2D oscillator orbitals.
//!
//! Each Cartesian direction is rotated to centre-of-mass and relative
//! coordinates with 1D oscillator transformation brackets. The interaction
//! only acts on the relative coordinate `r = (r1 - r2)/sqrt(2)`, so every
//! integral collapses to a bracket-weighted sum over a small table of
//! relative-coordinate elements `<nx ny| 1/|r| |mx my>`, which are evaluated
//! by a polar quadrature that is exact for the polynomial integrands.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::basis::OrbitalIndex;
use crate::hermite::{gauss_hermite, scaled_oscillator_functions};

/// 1D transformation brackets `<N, n | n1, n2>` with `n = n1 + n2 - N`.
#[derive(Debug, Clone)]
struct Brackets {
    nmax: usize,
    // [n1][n2][N]
    values: Vec<f64>,
}

impl Brackets {
    fn new(nmax: usize) -> Self {
        let stride = 2 * nmax + 1;
        let mut values = vec![0.0; (nmax + 1) * (nmax + 1) * stride];
        let ln_fact: Vec<f64> = std::iter::once(0.0)
            .chain((1..=2 * nmax).scan(0.0, |acc, k| {
                *acc += (k as f64).ln();
                Some(*acc)
            }))
            .collect();
        let binom = |n: usize, k: usize| -> f64 {
            if k > n {
                0.0
            } else {
                (ln_fact[n] - ln_fact[k] - ln_fact[n - k]).exp().round()
            }
        };
        for n1 in 0..=nmax {
            for n2 in 0..=nmax {
                let total = n1 + n2;
                for cm in 0..=total {
                    // Integer sum, exact in f64 for these sizes.
                    let mut s = 0.0;
                    for p in 0..=n1.min(cm) {
                        let q = cm - p;
                        if q > n2 {
                            continue;
                        }
                        let sign = if (n2 - q) % 2 == 0 { 1.0 } else { -1.0 };
                        s += sign * binom(n1, p) * binom(n2, q);
                    }
                    let rel = total - cm;
                    let log_pref = 0.5 * (ln_fact[cm] + ln_fact[rel] - ln_fact[n1] - ln_fact[n2])
                        - 0.5 * total as f64 * std::f64::consts::LN_2;
                    values[(n1 * (nmax + 1) + n2) * stride + cm] = s * log_pref.exp();
                }
            }
        }
        Brackets { nmax, values }
    }

    #[inline]
    fn get(&self, n1: usize, n2: usize, cm: usize) -> f64 {
        self.values[(n1 * (self.nmax + 1) + n2) * (2 * self.nmax + 1) + cm]
    }
}

/// `<nx ny| 1/|r| |mx my>` for 2D oscillator functions of unit length,
/// `nx, mx <= rx_max`, `ny, my <= ry_max`. Rows and columns are indexed
/// `nx * (ry_max + 1) + ny`.
pub fn relative_coulomb_table(rx_max: usize, ry_max: usize) -> Array2<f64> {
    let dim = (rx_max + 1) * (ry_max + 1);
    // Polynomial degree of the integrand in (x, y); in polar coordinates the
    // 1/r cancels the Jacobian, the angular integral of a polynomial is an
    // even polynomial in r, so a full-line Gauss-Hermite rule halved and a
    // uniform angular rule are both exact.
    let degree = 2 * (rx_max + ry_max);
    let mut n_radial = degree / 2 + 4;
    if n_radial % 2 == 1 {
        n_radial += 1;
    }
    let n_angle = degree + 8;
    let (nodes, weights) = gauss_hermite(n_radial);
    let radial: Vec<(f64, f64)> = nodes
        .iter()
        .zip(weights.iter())
        .filter(|(r, _)| **r > 0.0)
        .map(|(&r, &w)| (r, w))
        .collect();

    let n_points = radial.len() * n_angle;
    let mut phi = Array2::<f64>::zeros((n_points, dim));
    let mut wsqrt = vec![0.0; n_points];
    let dtheta = 2.0 * PI / n_angle as f64;
    for (k, &(r, w)) in radial.iter().enumerate() {
        for j in 0..n_angle {
            let theta = (j as f64 + 0.5) * dtheta;
            let (s, c) = theta.sin_cos();
            let hx = scaled_oscillator_functions(rx_max, r * c);
            let hy = scaled_oscillator_functions(ry_max, r * s);
            let pt = k * n_angle + j;
            wsqrt[pt] = (w * dtheta).sqrt();
            for nx in 0..=rx_max {
                for ny in 0..=ry_max {
                    phi[[pt, nx * (ry_max + 1) + ny]] = hx[nx] * hy[ny];
                }
            }
        }
    }
    for (pt, mut row) in phi.rows_mut().into_iter().enumerate() {
        row *= wsqrt[pt];
    }
    let mut table = phi.t().dot(&phi);
    // Parity selection rules hold exactly.
    for nx in 0..=rx_max {
        for ny in 0..=ry_max {
            for mx in 0..=rx_max {
                for my in 0..=ry_max {
                    if (nx + mx) % 2 == 1 || (ny + my) % 2 == 1 {
                        table[[nx * (ry_max + 1) + ny, mx * (ry_max + 1) + my]] = 0.0;
                    }
                }
            }
        }
    }
    table
}

/// Precomputed Coulomb integrals for all orbitals with `nx <= nx_max`, `ny <= ny_max`.
#[derive(Debug, Clone)]
pub struct CoulombIntegrals {
    nx_max: usize,
    ny_max: usize,
    by: Brackets,
    // [x pair (ax,bx)][x pair (cx,dx)][rel ny][rel my]
    partial: Vec<f64>,
}

impl CoulombIntegrals {
    pub fn new(nx_max: usize, ny_max: usize) -> Self {
        let rx = 2 * nx_max;
        let ry = 2 * ny_max;
        let w = relative_coulomb_table(rx, ry);
        let bx = Brackets::new(nx_max);
        let by = Brackets::new(ny_max);
        let nxp = (nx_max + 1) * (nx_max + 1);
        let ny_rel = ry + 1;
        let block = ny_rel * ny_rel;
        let mut partial = vec![0.0; nxp * nxp * block];
        for ax in 0..=nx_max {
            for bx_ in 0..=nx_max {
                let px = ax * (nx_max + 1) + bx_;
                for cx in 0..=nx_max {
                    for dx in 0..=nx_max {
                        let (s1, s2) = (ax + bx_, cx + dx);
                        if (s1 + s2) % 2 == 1 {
                            continue;
                        }
                        let qx = cx * (nx_max + 1) + dx;
                        let out = &mut partial[(px * nxp + qx) * block..(px * nxp + qx + 1) * block];
                        for cm in 0..=s1.min(s2) {
                            let coef = bx.get(ax, bx_, cm) * bx.get(cx, dx, cm);
                            if coef == 0.0 {
                                continue;
                            }
                            let (nx, mx) = (s1 - cm, s2 - cm);
                            for ny in 0..=ry {
                                let row = nx * (ry + 1) + ny;
                                for my in (ny % 2..=ry).step_by(2) {
                                    out[ny * ny_rel + my] += coef * w[[row, mx * (ry + 1) + my]];
                                }
                            }
                        }
                    }
                }
            }
        }
        CoulombIntegrals { nx_max, ny_max, by, partial }
    }

    pub fn nx_max(&self) -> usize {
        self.nx_max
    }

    pub fn ny_max(&self) -> usize {
        self.ny_max
    }

    /// `<a(1) b(2)| 1/|r1 - r2| |c(1) d(2)>` for unit oscillator length.
    pub fn element(&self, a: OrbitalIndex, b: OrbitalIndex, c: OrbitalIndex, d: OrbitalIndex) -> f64 {
        let (s1, s2) = (a.ny + b.ny, c.ny + d.ny);
        if (s1 + s2) % 2 == 1 || (a.nx + b.nx + c.nx + d.nx) % 2 == 1 {
            return 0.0;
        }
        let nxp = (self.nx_max + 1) * (self.nx_max + 1);
        let px = a.nx * (self.nx_max + 1) + b.nx;
        let qx = c.nx * (self.nx_max + 1) + d.nx;
        let ny_rel = 2 * self.ny_max + 1;
        let block = &self.partial[(px * nxp + qx) * ny_rel * ny_rel..];
        let mut sum = 0.0;
        for cm in 0..=s1.min(s2) {
            let coef = self.by.get(a.ny, b.ny, cm) * self.by.get(c.ny, d.ny, cm);
            sum += coef * block[(s1 - cm) * ny_rel + (s2 - cm)];
        }
        // 1/|r1 - r2| = 1/(sqrt(2) |r|)
        sum * std::f64::consts::FRAC_1_SQRT_2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn brackets_are_orthogonal() {
        let b = Brackets::new(8);
        for n1 in 0..=8 {
            for n2 in 0..=8 {
                let norm: f64 = (0..=n1 + n2).map(|cm| b.get(n1, n2, cm).powi(2)).sum();
                assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-13);
            }
        }
        // Different (n1, n2) with the same total are orthogonal.
        let dot: f64 = (0..=6).map(|cm| b.get(2, 4, cm) * b.get(3, 3, cm)).sum();
        assert_abs_diff_eq!(dot, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn ground_state_element() {
        let ints = CoulombIntegrals::new(2, 2);
        let o = OrbitalIndex { nx: 0, ny: 0 };
        assert_abs_diff_eq!(ints.element(o, o, o, o), (PI / 2.0).sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn relative_ground_state() {
        let w = relative_coulomb_table(2, 2);
        assert_abs_diff_eq!(w[[0, 0]], PI.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn integral_symmetries() {
        let ints = CoulombIntegrals::new(3, 2);
        let o = |nx, ny| OrbitalIndex { nx, ny };
        let (a, b, c, d) = (o(1, 0), o(2, 1), o(3, 0), o(0, 1));
        let v = ints.element(a, b, c, d);
        assert!(v.abs() > 1e-6);
        assert_abs_diff_eq!(v, ints.element(b, a, d, c), epsilon = 1e-13);
        assert_abs_diff_eq!(v, ints.element(c, d, a, b), epsilon = 1e-13);
        assert_abs_diff_eq!(v, ints.element(c, b, a, d), epsilon = 1e-13);
    }
}
