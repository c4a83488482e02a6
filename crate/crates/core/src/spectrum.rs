//! Field-free and field-dependent eigenproblems, adiabatic tables and
//! nonadiabatic couplings.
//!
//! The static field enters as `H(xi) = H0 - xi X`. With that sign the
//! nonadiabatic coupling is
//! `K_kl = <theta_k| d/dxi theta_l> = <theta_k|X|theta_l> / (eps_k - eps_l)`.

use ndarray::{s, Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Parity;
use crate::error::{Error, Result};
use crate::linalg::{eigh_all, inf_norm, lowest_eigenpairs_iterative, LanczosOptions};

/// Default threshold below which two levels count as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;
/// Default number of adiabatic states kept.
pub const DEFAULT_N_KEEP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    #[default]
    Dense,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSolution {
    /// Ascending.
    pub energies: Array1<f64>,
    /// Columns are eigenvectors in the basis the matrix was given in.
    pub vectors: Array2<f64>,
    pub xi: f64,
}

impl EigenSolution {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Largest `||(H - E_k) v_k|| / ||H||_inf`.
    pub fn max_residual(&self, h: &Array2<f64>) -> f64 {
        let norm = inf_norm(h).max(f64::MIN_POSITIVE);
        let hv = h.dot(&self.vectors);
        (0..self.len())
            .map(|k| {
                let r = &hv.column(k) - &(&self.vectors.column(k) * self.energies[k]);
                r.dot(&r).sqrt() / norm
            })
            .fold(0.0, f64::max)
    }

    /// Largest deviation of `V^T V` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.vectors.t().dot(&self.vectors);
        g.indexed_iter()
            .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }
}

/// Lowest `k` eigenpairs of the real symmetric matrix `h`.
pub fn solve_eigen(h: &Array2<f64>, k: usize, mode: SolveMode) -> Result<EigenSolution> {
    solve_eigen_warm(h, k, mode, None)
}

/// As [`solve_eigen`]; in iterative mode `start` seeds the Krylov space.
pub fn solve_eigen_warm(
    h: &Array2<f64>,
    k: usize,
    mode: SolveMode,
    start: Option<ArrayView2<f64>>,
) -> Result<EigenSolution> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::DimensionMismatch(format!("matrix is {}x{}", n, h.ncols())));
    }
    if k == 0 || k > n {
        return Err(Error::invalid("k", format!("need 1 <= k <= {n}, got {k}")));
    }
    let (energies, vectors) = match mode {
        SolveMode::Dense => {
            let (e, v) = eigh_all(h)?;
            (e.slice(s![..k]).to_owned(), v.slice(s![.., ..k]).to_owned())
        }
        SolveMode::Iterative => {
            let opts = LanczosOptions { tol: 1e-11, ..Default::default() };
            lowest_eigenpairs_iterative(h, k, start, &opts)?
        }
    };
    let sol = EigenSolution { energies, vectors, xi: 0.0 };
    let residual = sol.max_residual(h);
    if residual > 1e-9 {
        return Err(Error::NotConverged { iterations: 0, residual });
    }
    Ok(sol)
}

/// Field-free eigenbasis truncated to `m` states, with the dipole operator
/// transformed into it. Adiabatic tables built from `(diag(E), X_eig)` are
/// much cheaper than from the full pair basis and converge with `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedOperators {
    pub energies: Array1<f64>,
    pub dipole: Array2<f64>,
    /// Pair-basis coefficients of the retained states.
    pub vectors: Array2<f64>,
}

impl ReducedOperators {
    pub fn new(h0: &Array2<f64>, x: &Array2<f64>, m: usize) -> Result<Self> {
        let sol = solve_eigen(h0, m, SolveMode::Dense)?;
        let dipole = sol.vectors.t().dot(x).dot(&sol.vectors);
        let dipole = (&dipole + &dipole.t()) * 0.5;
        Ok(ReducedOperators { energies: sol.energies, dipole, vectors: sol.vectors })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn hamiltonian(&self) -> Array2<f64> {
        Array2::from_diag(&self.energies)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticTable {
    pub xi_grid: Vec<f64>,
    pub solutions: Vec<EigenSolution>,
    /// `<theta_k|X|theta_l>` at each grid point.
    pub dipole: Vec<Array2<f64>>,
    /// Nonadiabatic coupling at each grid point.
    pub coupling: Vec<Array2<f64>>,
    pub n_keep: usize,
    pub gauge_fixed: bool,
    /// Largest `1 - |<theta_k(m)|theta_k(m+1)>|` over states and grid steps.
    pub max_overlap_defect: f64,
}

#[derive(Debug, Clone)]
pub struct TableOptions {
    pub mode: SolveMode,
    pub degeneracy_threshold: f64,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions { mode: SolveMode::Dense, degeneracy_threshold: DEGENERACY_THRESHOLD }
    }
}

/// Flip column signs so the largest-magnitude entry of each is positive.
fn canonical_signs(v: &mut Array2<f64>) {
    for mut col in v.columns_mut() {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() + 1e-12 {
                best = x;
            }
        }
        if best < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

/// Eigenstates of `H(xi) = h0 - xi x` on every grid point, gauge fixed by
/// positive successive overlaps, with couplings `K`.
pub fn build_adiabatic_table(
    h0: &Array2<f64>,
    x: &Array2<f64>,
    xi_grid: &[f64],
    n_keep: usize,
    opts: &TableOptions,
) -> Result<AdiabaticTable> {
    if xi_grid.is_empty() {
        return Err(Error::invalid("xi_grid", "empty"));
    }
    if xi_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("xi_grid", "must be strictly ascending"));
    }
    if h0.dim() != x.dim() {
        return Err(Error::DimensionMismatch(format!("H0 {:?} vs X {:?}", h0.dim(), x.dim())));
    }
    let solve_at = |xi: f64, start: Option<ArrayView2<f64>>| -> Result<EigenSolution> {
        let h = h0 - &(x * xi);
        let mut sol = solve_eigen_warm(&h, n_keep, opts.mode, start)?;
        sol.xi = xi;
        Ok(sol)
    };
    let mut solutions: Vec<EigenSolution> = match opts.mode {
        SolveMode::Dense => xi_grid.par_iter().map(|&xi| solve_at(xi, None)).collect::<Result<_>>()?,
        SolveMode::Iterative => {
            let mut out: Vec<EigenSolution> = Vec::with_capacity(xi_grid.len());
            for &xi in xi_grid {
                let start = out.last().map(|s| s.vectors.view());
                let sol = solve_at(xi, start)?;
                out.push(sol);
            }
            out
        }
    };

    canonical_signs(&mut solutions[0].vectors);
    let mut max_defect = 0.0f64;
    for m in 1..solutions.len() {
        let (prev, cur) = solutions.split_at_mut(m);
        let prev = &prev[m - 1].vectors;
        let cur = &mut cur[0].vectors;
        for k in 0..n_keep {
            let ov = prev.column(k).dot(&cur.column(k));
            max_defect = max_defect.max(1.0 - ov.abs());
            if ov < 0.0 {
                cur.column_mut(k).mapv_inplace(|v| -v);
            }
        }
    }

    let mut dipole = Vec::with_capacity(solutions.len());
    let mut coupling = Vec::with_capacity(solutions.len());
    for sol in &solutions {
        let d = sol.vectors.t().dot(x).dot(&sol.vectors);
        let d = (&d + &d.t()) * 0.5;
        let mut kmat = Array2::<f64>::zeros((n_keep, n_keep));
        for k in 0..n_keep {
            for l in 0..k {
                let gap = sol.energies[k] - sol.energies[l];
                if gap.abs() < opts.degeneracy_threshold {
                    return Err(Error::Degenerate { k: l, l: k, xi: sol.xi, gap });
                }
                kmat[[k, l]] = d[[k, l]] / gap;
                kmat[[l, k]] = -kmat[[k, l]];
            }
        }
        dipole.push(d);
        coupling.push(kmat);
    }

    Ok(AdiabaticTable {
        xi_grid: xi_grid.to_vec(),
        solutions,
        dipole,
        coupling,
        n_keep,
        gauge_fixed: true,
        max_overlap_defect: max_defect,
    })
}

/// Uniform grid of `n` points from `a` to `b` inclusive.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Interpolated quantities at a field value inside the table.
#[derive(Debug, Clone)]
pub struct TablePoint {
    pub energies: Array1<f64>,
    pub coupling: Array2<f64>,
}

impl AdiabaticTable {
    pub fn len(&self) -> usize {
        self.xi_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi_grid.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xi_grid[0], *self.xi_grid.last().unwrap())
    }

    /// Grid energies as a `(n_xi, n_keep)` array.
    pub fn energy_matrix(&self) -> Array2<f64> {
        let mut e = Array2::zeros((self.len(), self.n_keep));
        for (m, sol) in self.solutions.iter().enumerate() {
            e.row_mut(m).assign(&sol.energies);
        }
        e
    }

    /// Segment index and weight for linear interpolation at `xi`.
    pub fn locate(&self, xi: f64) -> Result<(usize, f64)> {
        let (min, max) = self.range();
        let slack = 1e-12 * (max - min).abs().max(1.0);
        if !(xi >= min - slack && xi <= max + slack) {
            return Err(Error::OutOfTableRange { xi, min, max });
        }
        if self.len() == 1 {
            return Ok((0, 0.0));
        }
        let m = self.xi_grid.partition_point(|&g| g <= xi).clamp(1, self.len() - 1) - 1;
        let w = ((xi - self.xi_grid[m]) / (self.xi_grid[m + 1] - self.xi_grid[m])).clamp(0.0, 1.0);
        Ok((m, w))
    }

    /// Piecewise-linear interpolation of energies and couplings.
    pub fn interpolate(&self, xi: f64) -> Result<TablePoint> {
        if !self.gauge_fixed {
            return Err(Error::GaugeNotFixed);
        }
        let (m, w) = self.locate(xi)?;
        if w == 0.0 || self.len() == 1 {
            return Ok(TablePoint {
                energies: self.solutions[m].energies.clone(),
                coupling: self.coupling[m].clone(),
            });
        }
        let e = &self.solutions[m].energies * (1.0 - w) + &self.solutions[m + 1].energies * w;
        let k = &self.coupling[m] * (1.0 - w) + &self.coupling[m + 1] * w;
        Ok(TablePoint { energies: e, coupling: k })
    }

    /// `-<theta_k|X|theta_k>` at each grid point: the Hellmann-Feynman slope.
    pub fn hellmann_feynman_slopes(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), self.n_keep));
        for (m, d) in self.dipole.iter().enumerate() {
            out.row_mut(m).assign(&d.diag().mapv(|v| -v));
        }
        out
    }

    /// Overlap matrix `<theta_k(m)|theta_l(m+1)>`.
    pub fn successive_overlap(&self, m: usize) -> Result<Array2<f64>> {
        if m + 1 >= self.len() {
            return Err(Error::IndexOutOfRange { index: m + 1, len: self.len() });
        }
        Ok(self.solutions[m].vectors.t().dot(&self.solutions[m + 1].vectors))
    }
}

/// Local minima of the gap `eps_l - eps_k` over interior grid points, with
/// position and gap refined by a parabola through the three nearest points.
pub fn locate_anticrossings(table: &AdiabaticTable, pair: (usize, usize)) -> Result<Vec<(f64, f64)>> {
    let (k, l) = pair;
    for idx in [k, l] {
        if idx >= table.n_keep {
            return Err(Error::IndexOutOfRange { index: idx, len: table.n_keep });
        }
    }
    let gap: Vec<f64> = table
        .solutions
        .iter()
        .map(|s| (s.energies[l] - s.energies[k]).abs())
        .collect();
    let xs = &table.xi_grid;
    let mut out = Vec::new();
    for m in 1..gap.len().saturating_sub(1) {
        if gap[m] < gap[m - 1] && gap[m] <= gap[m + 1] {
            let (x0, x1, x2) = (xs[m - 1], xs[m], xs[m + 1]);
            let (g0, g1, g2) = (gap[m - 1], gap[m], gap[m + 1]);
            let d01 = (g1 - g0) / (x1 - x0);
            let d12 = (g2 - g1) / (x2 - x1);
            let a = (d12 - d01) / (x2 - x0);
            if a > 0.0 {
                let xm = (0.5 * (x0 + x1) - d01 / (2.0 * a)).clamp(x0, x2);
                let gm = g0 + d01 * (xm - x0) + a * (xm - x0) * (xm - x1);
                out.push((xm, gm.clamp(0.0, g1)));
            } else {
                out.push((x1, g1));
            }
        }
    }
    Ok(out)
}

/// `<theta_k|X|theta_k>` at each grid point.
pub fn expectation_diagonal(table: &AdiabaticTable) -> Array2<f64> {
    let mut out = Array2::zeros((table.len(), table.n_keep));
    for (m, d) in table.dipole.iter().enumerate() {
        out.row_mut(m).assign(&d.diag());
    }
    out
}

/// Interleaves the ascending level ladders of the two y-parity sectors and
/// returns, for each label of the merged ladder, the sector and the index
/// within it. Ties go to the even ladder.
pub fn merge_parity_ladders(even: &[f64], odd: &[f64]) -> Vec<(Parity, usize)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(even.len() + odd.len());
    while i < even.len() || j < odd.len() {
        let take_even = j >= odd.len() || (i < even.len() && even[i] <= odd[j]);
        if take_even {
            out.push((Parity::Even, i));
            i += 1;
        } else {
            out.push((Parity::Odd, j));
            j += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_level(delta: f64) -> (Array2<f64>, Array2<f64>) {
        // H(xi) = [[xi, delta], [delta, -xi]] = h0 - xi x
        let h0 = ndarray::arr2(&[[0.0, delta], [delta, 0.0]]);
        let x = ndarray::arr2(&[[-1.0, 0.0], [0.0, 1.0]]);
        (h0, x)
    }

    #[test]
    fn dense_and_iterative_agree() {
        let n = 20;
        let h = Array2::from_shape_fn((n, n), |(i, j)| ((i * 7 + j * 3) % 11) as f64 + ((j * 7 + i * 3) % 11) as f64);
        let a = solve_eigen(&h, 6, SolveMode::Dense).unwrap();
        let b = solve_eigen(&h, 6, SolveMode::Iterative).unwrap();
        for k in 0..6 {
            assert_abs_diff_eq!(a.energies[k], b.energies[k], epsilon = 1e-9);
        }
        assert!(b.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn two_level_anticrossing_located() {
        let (h0, x) = two_level(0.1);
        let grid = uniform_grid(-1.0, 1.3, 47);
        let table = build_adiabatic_table(&h0, &x, &grid, 2, &TableOptions::default()).unwrap();
        let found = locate_anticrossings(&table, (0, 1)).unwrap();
        assert_eq!(found.len(), 1);
        let spacing = grid[1] - grid[0];
        assert!(found[0].0.abs() <= spacing);
        assert!((found[0].1 - 0.2).abs() < 0.2 * spacing);
    }

    #[test]
    fn monotone_gap_has_no_anticrossing() {
        let h0 = Array2::from_diag(&ndarray::arr1(&[0.0, 1.0]));
        let x = Array2::from_diag(&ndarray::arr1(&[1.0, -1.0]));
        let table =
            build_adiabatic_table(&h0, &x, &uniform_grid(0.0, 0.4, 9), 2, &TableOptions::default()).unwrap();
        assert!(locate_anticrossings(&table, (0, 1)).unwrap().is_empty());
        assert!(locate_anticrossings(&table, (0, 2)).is_err());
    }

    #[test]
    fn gauge_gives_positive_overlaps_and_antisymmetric_k() {
        let (h0, x) = two_level(0.3);
        let table =
            build_adiabatic_table(&h0, &x, &uniform_grid(-0.5, 0.5, 21), 2, &TableOptions::default()).unwrap();
        for m in 0..table.len() - 1 {
            let ov = table.successive_overlap(m).unwrap();
            assert!(ov[[0, 0]] > 0.0 && ov[[1, 1]] > 0.0);
        }
        for k in &table.coupling {
            assert_abs_diff_eq!((k + &k.t()).iter().map(|v| v.abs()).sum::<f64>(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn degenerate_pair_reported() {
        let h0 = Array2::<f64>::zeros((2, 2));
        let x = Array2::<f64>::zeros((2, 2));
        match build_adiabatic_table(&h0, &x, &[0.0], 2, &TableOptions::default()) {
            Err(Error::Degenerate { .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_range_and_bad_grid() {
        let (h0, x) = two_level(0.3);
        let table = build_adiabatic_table(&h0, &x, &[0.0, 0.1], 2, &TableOptions::default()).unwrap();
        assert!(table.interpolate(0.2).is_err());
        assert!(table.interpolate(0.05).is_ok());
        assert!(build_adiabatic_table(&h0, &x, &[0.1, 0.0], 2, &TableOptions::default()).is_err());
    }

    #[test]
    fn ladders_interleave() {
        let m = merge_parity_ladders(&[0.0, 0.978, 1.078, 1.64], &[0.95, 1.0]);
        let expect = [
            (Parity::Even, 0),
            (Parity::Odd, 0),
            (Parity::Even, 1),
            (Parity::Odd, 1),
            (Parity::Even, 2),
            (Parity::Even, 3),
        ];
        assert_eq!(m, expect);
        assert_eq!(merge_parity_ladders(&[1.0], &[1.0]), vec![(Parity::Even, 0), (Parity::Odd, 0)]);
    }
}
