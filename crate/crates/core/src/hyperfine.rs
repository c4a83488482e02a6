//! Hyperfine coupling to a frozen nuclear field acting on the right dot only,
//! and ensemble-averaged singlet-triplet dephasing.
//!
//! The spin space is ordered `[S, T+, T0, T-]`, each block spanned by the
//! retained spatial eigenstates of the matching exchange sector.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{c64, Eigh, UPLO};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{Sector, TwoElectronBasis};
use crate::error::{Error, Result};
use crate::operators::{halfspace_overlaps, pair_one_body, OneBodySum};

/// Nuclear field in tesla, present for `x >= 0` only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NuclearField {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl NuclearField {
    pub fn is_finite(&self) -> bool {
        self.bx.is_finite() && self.by.is_finite() && self.bz.is_finite()
    }

    pub fn scaled(&self, f: f64) -> NuclearField {
        NuclearField { bx: self.bx * f, by: self.by * f, bz: self.bz * f }
    }
}

/// One draw with independent normal components of standard deviation `b_nuc`.
pub fn sample_nuclear_field(b_nuc: f64, rng: &mut impl rand::Rng) -> Result<NuclearField> {
    let normal = Normal::new(0.0, b_nuc).map_err(|e| Error::invalid("b_nuc", e.to_string()))?;
    if !(b_nuc > 0.0) {
        return Err(Error::invalid("b_nuc", "must be positive"));
    }
    Ok(NuclearField { bx: normal.sample(rng), by: normal.sample(rng), bz: normal.sample(rng) })
}

/// `n` draws from a ChaCha stream seeded with `seed`.
pub fn sample_nuclear_fields(b_nuc: f64, n: usize, seed: u64) -> Result<Vec<NuclearField>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_nuclear_field(b_nuc, &mut rng)).collect()
}

/// Spin-coupling entries `a` to `j`: `<S|(S1 - S2).B|.>` for the singlet
/// row and `<T|(S1 + S2).B|T'>` for the triplet rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinTable {
    /// `<S|.|S>`
    pub a: c64,
    /// `<S|.|T0>`
    pub b: c64,
    /// `<S|.|T->`
    pub c: c64,
    /// `<S|.|T+>`
    pub d: c64,
    /// `<T0|.|T0>`
    pub e: c64,
    /// `<T0|.|T+>`
    pub f: c64,
    /// `<T0|.|T->`
    pub g: c64,
    /// `<T-|.|T->`
    pub h: c64,
    /// `<T-|.|T+>`
    pub i: c64,
    /// `<T+|.|T+>`
    pub j: c64,
}

pub fn spin_table(bx: f64, by: f64, bz: f64) -> SpinTable {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let zero = c64::new(0.0, 0.0);
    SpinTable {
        a: zero,
        b: c64::new(bz, 0.0),
        c: c64::new(bx, -by) * r,
        d: -c64::new(bx, by) * r,
        e: zero,
        f: c64::new(bx, by) * r,
        g: c64::new(bx, -by) * r,
        h: c64::new(-bz, 0.0),
        i: zero,
        j: c64::new(bz, 0.0),
    }
}

/// Spatial factors of the hyperfine coupling between retained eigenstates:
/// `st = <S_k| (Theta(x1) - Theta(x2))/2 |T_l>` and
/// `tt = <T_k| (Theta(x1) + Theta(x2))/2 |T_l>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialCoupling {
    pub st: Array2<f64>,
    pub tt: Array2<f64>,
}

/// Pair-basis spatial blocks, before projection onto eigenstates.
pub fn pair_spatial_blocks(singlet: &TwoElectronBasis, triplet: &TwoElectronBasis) -> Result<(Array2<f64>, Array2<f64>)> {
    if singlet.sector != Sector::Symmetric || triplet.sector != Sector::Antisymmetric {
        return Err(Error::invalid("basis", "expected a symmetric and an antisymmetric basis"));
    }
    if !singlet.same_orbitals(triplet) {
        return Err(Error::invalid("basis", "singlet and triplet bases use different orbital sets"));
    }
    let p = halfspace_overlaps(&singlet.orbitals, singlet.nx_max, singlet.ny_max);
    let st = pair_one_body(singlet, triplet, &p, OneBodySum::Minus)? * 0.5;
    let tt = pair_one_body(triplet, triplet, &p, OneBodySum::Plus)? * 0.5;
    Ok((st, tt))
}

impl SpatialCoupling {
    /// Projects the pair-basis blocks on eigenvectors (columns) of each sector.
    pub fn new(
        singlet: &TwoElectronBasis,
        triplet: &TwoElectronBasis,
        singlet_vectors: &Array2<f64>,
        triplet_vectors: &Array2<f64>,
    ) -> Result<Self> {
        if singlet_vectors.nrows() != singlet.len() || triplet_vectors.nrows() != triplet.len() {
            return Err(Error::DimensionMismatch("eigenvectors do not match the pair bases".into()));
        }
        let (st, tt) = pair_spatial_blocks(singlet, triplet)?;
        let st = singlet_vectors.t().dot(&st).dot(triplet_vectors);
        let tt = triplet_vectors.t().dot(&tt).dot(triplet_vectors);
        let tt = (&tt + &tt.t()) * 0.5;
        Ok(SpatialCoupling { st, tt })
    }
}

/// Spin-resolved eigenbasis model for hyperfine dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSpaceModel {
    pub singlet_energies: Array1<f64>,
    pub triplet_energies: Array1<f64>,
    pub spatial: SpatialCoupling,
    /// `gamma_e` times the tesla-to-internal field conversion: energy per tesla.
    pub coupling_per_tesla: f64,
    /// Zeeman energy of `T+` (and minus that of `T-`) from an external field.
    pub zeeman: f64,
}

impl SpinSpaceModel {
    pub fn new(
        singlet_energies: Array1<f64>,
        triplet_energies: Array1<f64>,
        spatial: SpatialCoupling,
        coupling_per_tesla: f64,
    ) -> Result<Self> {
        let (ns, nt) = (singlet_energies.len(), triplet_energies.len());
        if spatial.st.dim() != (ns, nt) || spatial.tt.dim() != (nt, nt) {
            return Err(Error::DimensionMismatch(format!(
                "spatial blocks {:?}/{:?} for {ns} singlets and {nt} triplets",
                spatial.st.dim(),
                spatial.tt.dim()
            )));
        }
        Ok(SpinSpaceModel { singlet_energies, triplet_energies, spatial, coupling_per_tesla, zeeman: 0.0 })
    }

    pub fn n_singlet(&self) -> usize {
        self.singlet_energies.len()
    }

    pub fn n_triplet(&self) -> usize {
        self.triplet_energies.len()
    }

    pub fn dim(&self) -> usize {
        self.n_singlet() + 3 * self.n_triplet()
    }

    /// Offsets of the `[S, T+, T0, T-]` blocks.
    pub fn offsets(&self) -> [usize; 4] {
        let (ns, nt) = (self.n_singlet(), self.n_triplet());
        [0, ns, ns + nt, ns + 2 * nt]
    }

    /// Hyperfine part of the Hamiltonian for one nuclear field (tesla).
    pub fn hyperfine_blocks(&self, field: &NuclearField) -> Array2<c64> {
        let n = self.dim();
        let [os, op, o0, om] = self.offsets();
        let (ns, nt) = (self.n_singlet(), self.n_triplet());
        let t = spin_table(field.bx, field.by, field.bz);
        let gamma = self.coupling_per_tesla;
        let st = self.spatial.st.mapv(|v| c64::new(v * gamma, 0.0));
        let tt = self.spatial.tt.mapv(|v| c64::new(v * gamma, 0.0));
        let mut h = Array2::<c64>::zeros((n, n));
        let mut put = |r: usize, c: usize, rows: usize, cols: usize, block: &Array2<c64>, w: c64| {
            if w == c64::new(0.0, 0.0) {
                return;
            }
            let b = block.mapv(|v| v * w);
            h.slice_mut(s![r..r + rows, c..c + cols]).zip_mut_with(&b, |x, y| *x += *y);
            if r != c {
                let bt = b.t().mapv(|v| v.conj());
                h.slice_mut(s![c..c + cols, r..r + rows]).zip_mut_with(&bt, |x, y| *x += *y);
            }
        };
        put(os, os, ns, ns, &Array2::zeros((ns, ns)), t.a);
        put(os, o0, ns, nt, &st, t.b);
        put(os, om, ns, nt, &st, t.c);
        put(os, op, ns, nt, &st, t.d);
        put(o0, o0, nt, nt, &tt, t.e);
        put(o0, op, nt, nt, &tt, t.f);
        put(o0, om, nt, nt, &tt, t.g);
        put(om, om, nt, nt, &tt, t.h);
        put(om, op, nt, nt, &tt, t.i);
        put(op, op, nt, nt, &tt, t.j);
        h
    }

    /// Full spin-space Hamiltonian.
    pub fn hamiltonian(&self, field: &NuclearField) -> Array2<c64> {
        let mut h = self.hyperfine_blocks(field);
        let [os, op, o0, om] = self.offsets();
        for k in 0..self.n_singlet() {
            h[[os + k, os + k]] += self.singlet_energies[k];
        }
        for k in 0..self.n_triplet() {
            let e = self.triplet_energies[k];
            h[[op + k, op + k]] += e + self.zeeman;
            h[[o0 + k, o0 + k]] += e;
            h[[om + k, om + k]] += e - self.zeeman;
        }
        h
    }

    /// Embeds singlet-sector coefficients into the spin space.
    pub fn embed_singlet(&self, coeffs: &Array1<c64>) -> Result<Array1<c64>> {
        if coeffs.len() != self.n_singlet() {
            return Err(Error::DimensionMismatch(format!("{} coefficients for {} singlets", coeffs.len(), self.n_singlet())));
        }
        let mut v = Array1::zeros(self.dim());
        v.slice_mut(s![..self.n_singlet()]).assign(coeffs);
        Ok(v)
    }

    pub fn singlet_part(&self, state: &Array1<c64>) -> Array1<c64> {
        state.slice(s![..self.n_singlet()]).to_owned()
    }

    pub fn singlet_probability(&self, state: &Array1<c64>) -> f64 {
        state.slice(s![..self.n_singlet()]).iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Exact evolution under a time-independent Hermitian matrix.
pub struct FrozenEvolution {
    energies: Array1<f64>,
    vectors: Array2<c64>,
}

impl FrozenEvolution {
    pub fn new(h: &Array2<c64>) -> Result<Self> {
        let (energies, vectors) = h.eigh(UPLO::Lower)?;
        Ok(FrozenEvolution { energies, vectors })
    }

    /// `exp(-i H t) psi`.
    pub fn evolve(&self, psi: &Array1<c64>, t: f64) -> Array1<c64> {
        let shift = self.energies.first().copied().unwrap_or(0.0);
        let vh = self.vectors.t().mapv(|v| v.conj());
        let mut c = vh.dot(psi);
        for (k, v) in c.iter_mut().enumerate() {
            *v *= c64::new(0.0, -(self.energies[k] - shift) * t).exp();
        }
        let phase = c64::new(0.0, -shift * t).exp();
        self.vectors.dot(&c).mapv(|v| v * phase)
    }
}

/// Ensemble mean and standard error of an observable on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DephasingResult {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
    pub failed: usize,
    /// Largest deviation of the total probability from 1 over all samples and times.
    pub max_norm_drift: f64,
}

/// Evolves `initial` under each frozen field and averages
/// `observe(state)` over the ensemble at every time. Samples that fail are
/// dropped; more than 1% failures fails the run.
pub fn ensemble_dephasing<F>(
    model: &SpinSpaceModel,
    initial: &Array1<c64>,
    times: &[f64],
    fields: &[NuclearField],
    observe: F,
) -> Result<DephasingResult>
where
    F: Fn(&Array1<c64>) -> f64 + Sync,
{
    if fields.is_empty() {
        return Err(Error::invalid("n_samples", "need at least one sample"));
    }
    if initial.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!("state {} vs spin space {}", initial.len(), model.dim())));
    }
    let runs: Vec<Result<(Vec<f64>, f64)>> = fields
        .par_iter()
        .map(|field| {
            if !field.is_finite() {
                return Err(Error::invalid("field", "non-finite nuclear field"));
            }
            let evo = FrozenEvolution::new(&model.hamiltonian(field))?;
            let mut values = Vec::with_capacity(times.len());
            let mut drift = 0.0f64;
            for &t in times {
                let psi = evo.evolve(initial, t);
                let total: f64 = psi.iter().map(|v| v.norm_sqr()).sum();
                drift = drift.max((total - 1.0).abs());
                values.push(observe(&psi));
            }
            Ok((values, drift))
        })
        .collect();
    let total = runs.len();
    let ok: Vec<(Vec<f64>, f64)> = runs.into_iter().filter_map(|r| r.map_err(|e| log::warn!("sample failed: {e}")).ok()).collect();
    let failed = total - ok.len();
    if failed * 100 > total || ok.is_empty() {
        return Err(Error::EnsembleFailed { failed, total });
    }
    let n = ok.len() as f64;
    let mut mean = vec![0.0; times.len()];
    let mut stderr = vec![0.0; times.len()];
    for (k, m) in mean.iter_mut().enumerate() {
        *m = ok.iter().map(|(v, _)| v[k]).sum::<f64>() / n;
    }
    if ok.len() > 1 {
        for (k, se) in stderr.iter_mut().enumerate() {
            let var = ok.iter().map(|(v, _)| (v[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0);
            *se = (var / n).sqrt();
        }
    }
    let max_norm_drift = ok.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    Ok(DephasingResult { times: times.to_vec(), mean, stderr, n_samples: ok.len(), failed, max_norm_drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_model() -> SpinSpaceModel {
        let st = ndarray::arr2(&[[0.2, 0.05], [0.1, -0.3]]);
        let tt = ndarray::arr2(&[[0.25, 0.1], [0.1, 0.4]]);
        SpinSpaceModel::new(
            ndarray::arr1(&[0.0, 1.0]),
            ndarray::arr1(&[0.001, 1.02]),
            SpatialCoupling { st, tt },
            0.7,
        )
        .unwrap()
    }

    #[test]
    fn spin_table_entries() {
        let (bx, by, bz) = (0.3, -0.7, 1.1);
        let t = spin_table(bx, by, bz);
        let r = 0.5f64.sqrt();
        assert_eq!(t.a, c64::new(0.0, 0.0));
        assert_eq!(t.b, c64::new(bz, 0.0));
        assert_abs_diff_eq!((t.c - c64::new(bx * r, -by * r)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((t.d - c64::new(-bx * r, -by * r)).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(t.e, c64::new(0.0, 0.0));
        assert_abs_diff_eq!((t.f - c64::new(bx * r, by * r)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((t.g - c64::new(bx * r, -by * r)).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(t.h, c64::new(-bz, 0.0));
        assert_eq!(t.i, c64::new(0.0, 0.0));
        assert_eq!(t.j, c64::new(bz, 0.0));
    }

    #[test]
    fn hermitian_with_empty_singlet_block() {
        let m = toy_model();
        let h = m.hamiltonian(&NuclearField { bx: 0.4, by: -0.2, bz: 0.9 });
        let defect = (&h - &h.t().mapv(|v| v.conj())).iter().fold(0.0f64, |a, v| a.max(v.norm()));
        assert!(defect < 1e-12);
        let hf = m.hyperfine_blocks(&NuclearField { bx: 0.4, by: -0.2, bz: 0.9 });
        assert!(hf.slice(s![..2, ..2]).iter().all(|v| v.norm() == 0.0));
        assert!(m.hyperfine_blocks(&NuclearField::default()).iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn zero_field_keeps_singlet() {
        let m = toy_model();
        let psi = m.embed_singlet(&ndarray::arr1(&[c64::new(1.0, 0.0), c64::new(0.0, 0.0)])).unwrap();
        let r = ensemble_dephasing(&m, &psi, &[0.0, 10.0, 100.0], &[NuclearField::default()], |s| m.singlet_probability(s)).unwrap();
        for v in &r.mean {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn field_sampling_statistics() {
        let n = 100_000;
        let b = 1e-3;
        let f = sample_nuclear_fields(b, n, 7).unwrap();
        for comp in [|f: &NuclearField| f.bx, |f: &NuclearField| f.by, |f: &NuclearField| f.bz] {
            let vals: Vec<f64> = f.iter().map(comp).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            assert!(mean.abs() < 3.0 * b / (n as f64).sqrt());
            assert!((std / b - 1.0).abs() < 0.02);
        }
        assert_eq!(sample_nuclear_fields(b, 3, 1).unwrap(), sample_nuclear_fields(b, 3, 1).unwrap());
        assert!(sample_nuclear_fields(0.0, 1, 1).is_err());
    }
}
