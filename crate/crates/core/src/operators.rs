//! Matrices of the two-electron model in the symmetrized pair basis.

use ndarray::{Array2, Zip};
use ndarray_linalg::c64;

use crate::basis::{OrbitalIndex, Parity, TwoElectronBasis};
use crate::coulomb::CoulombIntegrals;
use crate::error::{Error, Result};
use crate::hermite;
use crate::model::Confinement;

pub use crate::hermite::{absx_matrix_element, hermite_half_integral};

/// Single-orbital matrix built from x and y factors:
/// `o[a, b] = fx[ax, bx] * gy[ay, by]`.
pub fn orbital_product(orbitals: &[OrbitalIndex], fx: &Array2<f64>, gy: &Array2<f64>) -> Array2<f64> {
    let n = orbitals.len();
    Array2::from_shape_fn((n, n), |(a, b)| {
        let (oa, ob) = (orbitals[a], orbitals[b]);
        fx[[oa.nx, ob.nx]] * gy[[oa.ny, ob.ny]]
    })
}

fn identity(n: usize) -> Array2<f64> {
    Array2::eye(n)
}

/// Symmetry of a one-body operator under particle exchange:
/// `o(1) + o(2)` is symmetric, `o(1) - o(2)` antisymmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OneBodySum {
    Plus,
    Minus,
}

/// Matrix of `o(1) +- o(2)` between two pair bases over the same orbitals.
///
/// With `|P> = N_P (|ij> + s_P |ji>)` the element is
/// `2 N_P N_Q [O(ij,kl) + s_Q O(ij,lk)]` where
/// `O(ij,kl) = o_ik delta_jl +- delta_ik o_jl`; it vanishes unless the
/// exchange symmetries of bra, ket and operator are compatible.
pub fn pair_one_body(
    bra: &TwoElectronBasis,
    ket: &TwoElectronBasis,
    o: &Array2<f64>,
    sum: OneBodySum,
) -> Result<Array2<f64>> {
    if !bra.same_orbitals(ket) || o.nrows() != bra.orbital_count() || o.ncols() != bra.orbital_count() {
        return Err(Error::DimensionMismatch(format!(
            "one-body operator {:?} against {} orbitals",
            o.dim(),
            bra.orbital_count()
        )));
    }
    let tau = match sum {
        OneBodySum::Plus => 1.0,
        OneBodySum::Minus => -1.0,
    };
    let (sp, sq) = (bra.sector.exchange_sign(), ket.sector.exchange_sign());
    let mut out = Array2::zeros((bra.len(), ket.len()));
    if sp * sq * tau < 0.0 {
        return Ok(out);
    }
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let elem = |i: usize, j: usize, k: usize, l: usize| o[[i, k]] * delta(j, l) + tau * delta(i, k) * o[[j, l]];
    for (p, &(i, j)) in bra.pairs.iter().enumerate() {
        let np = bra.pair_norm(p);
        for (q, &(k, l)) in ket.pairs.iter().enumerate() {
            // Only pairs sharing an orbital can couple through a one-body operator.
            if i != k && i != l && j != k && j != l {
                continue;
            }
            let v = elem(i, j, k, l) + sq * elem(i, j, l, k);
            if v != 0.0 {
                out[[p, q]] = 2.0 * np * ket.pair_norm(q) * v;
            }
        }
    }
    Ok(out)
}

/// Matrix of the Coulomb repulsion in the pair basis for unit oscillator length.
pub fn coulomb_pair_matrix(basis: &TwoElectronBasis, ints: &CoulombIntegrals) -> Result<Array2<f64>> {
    if ints.nx_max() < basis.nx_max || ints.ny_max() < basis.ny_max {
        return Err(Error::DimensionMismatch(format!(
            "Coulomb integrals cover nx <= {}, ny <= {}; basis needs {}, {}",
            ints.nx_max(),
            ints.ny_max(),
            basis.nx_max,
            basis.ny_max
        )));
    }
    let s = basis.sector.exchange_sign();
    let orb = &basis.orbitals;
    let n = basis.len();
    let mut out = Array2::zeros((n, n));
    for p in 0..n {
        let (i, j) = basis.pairs[p];
        let np = basis.pair_norm(p);
        for q in p..n {
            let (k, l) = basis.pairs[q];
            let v = ints.element(orb[i], orb[j], orb[k], orb[l]) + s * ints.element(orb[i], orb[j], orb[l], orb[k]);
            if !v.is_finite() {
                return Err(Error::invalid(
                    "coulomb",
                    format!("non-finite integral for pairs {:?} {:?}", basis.pairs[p], basis.pairs[q]),
                ));
            }
            let v = 2.0 * np * basis.pair_norm(q) * v;
            out[[p, q]] = v;
            out[[q, p]] = v;
        }
    }
    Ok(out)
}

/// Coulomb matrix in internal energy units.
pub fn coulomb_tensor(basis: &TwoElectronBasis, conf: &Confinement) -> Result<Array2<f64>> {
    let ints = CoulombIntegrals::new(basis.nx_max, basis.ny_max);
    let mut v = coulomb_pair_matrix(basis, &ints)?;
    v *= conf.coulomb / conf.oscillator_length();
    Ok(v)
}

/// Single-particle Hamiltonian over the orbitals, internal units:
/// `omega (nx + ny + 1) - (omega^2 d / 2) |x| + omega^2 d^2 / 8`.
pub fn one_body_hamiltonian(basis: &TwoElectronBasis, conf: &Confinement) -> Array2<f64> {
    let l = conf.oscillator_length();
    let (nx, ny) = (basis.nx_max, basis.ny_max);
    let absx = hermite::absx_table(nx);
    let mut h = orbital_product(&basis.orbitals, &absx, &identity(ny + 1));
    h *= -0.5 * conf.omega * conf.omega * conf.d * l;
    let shift = conf.omega * conf.omega * conf.d * conf.d / 8.0;
    for (a, o) in basis.orbitals.iter().enumerate() {
        h[[a, a]] += conf.omega * (o.nx + o.ny + 1) as f64 + shift;
    }
    h
}

/// Field-free two-electron Hamiltonian with the Coulomb matrix supplied.
pub fn assemble_h0_with(basis: &TwoElectronBasis, conf: &Confinement, coulomb: &Array2<f64>) -> Result<Array2<f64>> {
    conf.validate()?;
    if coulomb.dim() != (basis.len(), basis.len()) {
        return Err(Error::DimensionMismatch(format!(
            "Coulomb matrix {:?} for basis of {}",
            coulomb.dim(),
            basis.len()
        )));
    }
    let h1 = one_body_hamiltonian(basis, conf);
    let mut h = pair_one_body(basis, basis, &h1, OneBodySum::Plus)?;
    h += coulomb;
    Ok(h)
}

/// `h0(r1) + h0(r2) + 1/r12` in internal energy units.
pub fn assemble_h0(basis: &TwoElectronBasis, conf: &Confinement) -> Result<Array2<f64>> {
    conf.validate()?;
    let v = if conf.coulomb != 0.0 {
        coulomb_tensor(basis, conf)?
    } else {
        Array2::zeros((basis.len(), basis.len()))
    };
    assemble_h0_with(basis, conf, &v)
}

/// `X = x1 + x2` in internal length units.
pub fn dipole_matrix(basis: &TwoElectronBasis, conf: &Confinement) -> Result<Array2<f64>> {
    let x = hermite::position_table(basis.nx_max) * conf.oscillator_length();
    let o = orbital_product(&basis.orbitals, &x, &identity(basis.ny_max + 1));
    pair_one_body(basis, basis, &o, OneBodySum::Plus)
}

/// Half-space overlaps `P[a, b] = <a| Theta(x) |b>` over single orbitals.
pub fn halfspace_overlaps(orbitals: &[OrbitalIndex], nx_max: usize, ny_max: usize) -> Array2<f64> {
    let half = hermite::half_integral_table(nx_max);
    orbital_product(orbitals, &half, &identity(ny_max + 1))
}

/// Orbital-space `x^2 + y^2` in internal length^2.
fn radius_squared(basis: &TwoElectronBasis, conf: &Confinement) -> Array2<f64> {
    let l2 = conf.oscillator_length().powi(2);
    let x2 = orbital_product(&basis.orbitals, &hermite::position_squared_table(basis.nx_max), &identity(basis.ny_max + 1));
    let y2 = orbital_product(&basis.orbitals, &identity(basis.nx_max + 1), &hermite::position_squared_table(basis.ny_max));
    (x2 + y2) * l2
}

/// Orbital-space `L_z = x p_y - y p_x` (dimensionless, purely imaginary).
pub fn orbital_lz(basis: &TwoElectronBasis) -> Array2<c64> {
    let (nx, ny) = (basis.nx_max, basis.ny_max);
    // p = i q with q real antisymmetric
    let xpy = orbital_product(&basis.orbitals, &hermite::position_table(nx), &hermite::momentum_table(ny));
    let ypx = orbital_product(&basis.orbitals, &hermite::momentum_table(nx), &hermite::position_table(ny));
    (xpy - ypx).mapv(|v| c64::new(0.0, v))
}

/// Magnetic pieces of the external-field Hamiltonian.
#[derive(Debug, Clone)]
pub struct ExternalTerms {
    /// `B^2/8 * sum_i (x_i^2 + y_i^2)`.
    pub quadratic: Array2<f64>,
    /// `B/2 * (L_z1 + L_z2)`.
    pub paramagnetic: Array2<c64>,
    /// Spin Zeeman coefficient `gamma_e B`, multiplying total `S_z` in the spin blocks.
    pub zeeman: f64,
}

/// External magnetic-field terms for field `b_ext` (internal units). The
/// electric dipole term is applied at propagation time through `X`.
pub fn assemble_external(
    basis: &TwoElectronBasis,
    conf: &Confinement,
    gamma_e: f64,
    b_ext: f64,
) -> Result<ExternalTerms> {
    let n = basis.len();
    if b_ext == 0.0 {
        return Ok(ExternalTerms {
            quadratic: Array2::zeros((n, n)),
            paramagnetic: Array2::zeros((n, n)),
            zeeman: 0.0,
        });
    }
    if basis.y_parity.is_some() {
        return Err(Error::invalid(
            "b_ext",
            "L_z mixes y-parities; use an unfiltered basis with a magnetic field",
        ));
    }
    let r2 = radius_squared(basis, conf);
    let quadratic = pair_one_body(basis, basis, &r2, OneBodySum::Plus)? * (b_ext * b_ext / 8.0);
    let lz = pair_lz(basis)?;
    Ok(ExternalTerms { quadratic, paramagnetic: lz.mapv(|v| v * (0.5 * b_ext)), zeeman: gamma_e * b_ext })
}

/// `L_z1 + L_z2` in the pair basis.
pub fn pair_lz(basis: &TwoElectronBasis) -> Result<Array2<c64>> {
    let lz = orbital_lz(basis);
    let im = lz.mapv(|v| v.im);
    Ok(pair_one_body(basis, basis, &im, OneBodySum::Plus)?.mapv(|v| c64::new(0.0, v)))
}

/// All matrices needed by spectrum, dynamics and hyperfine stages for one sector.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub h0_matrix: Array2<f64>,
    pub x_dipole: Array2<f64>,
    /// `sum_i (x_i^2 + y_i^2)`.
    pub magnetic_quadratic: Array2<f64>,
    /// `L_z1 + L_z2`; empty when the basis is y-parity filtered.
    pub lz_matrix: Array2<c64>,
    pub halfspace_overlap: Array2<f64>,
}

impl OperatorSet {
    pub fn assemble(basis: &TwoElectronBasis, conf: &Confinement) -> Result<Self> {
        let h0_matrix = assemble_h0(basis, conf)?;
        Self::assemble_with_h0(basis, conf, h0_matrix)
    }

    pub fn assemble_with_h0(basis: &TwoElectronBasis, conf: &Confinement, h0_matrix: Array2<f64>) -> Result<Self> {
        let x_dipole = dipole_matrix(basis, conf)?;
        let r2 = radius_squared(basis, conf);
        let magnetic_quadratic = pair_one_body(basis, basis, &r2, OneBodySum::Plus)?;
        let lz_matrix = if basis.y_parity.is_some() { Array2::zeros((0, 0)) } else { pair_lz(basis)? };
        let halfspace_overlap = halfspace_overlaps(&basis.orbitals, basis.nx_max, basis.ny_max);
        Ok(OperatorSet { h0_matrix, x_dipole, magnetic_quadratic, lz_matrix, halfspace_overlap })
    }
}

/// Diagonal sign matrices of the x- and y-parity operators on the pair basis.
pub fn parity_signs(basis: &TwoElectronBasis) -> (Vec<f64>, Vec<f64>) {
    (0..basis.len())
        .map(|p| {
            let (px, py) = basis.pair_parity(p).expect("index in range");
            (px as f64, py as f64)
        })
        .unzip()
}

/// Largest `|A - A^T|` relative to the largest `|A|`.
pub fn symmetry_defect(a: &Array2<f64>) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    Zip::from(a).and(&a.t()).for_each(|x, y| worst = worst.max((x - y).abs()));
    worst / scale
}

/// Whether `p` has the given y parity; convenience for filters.
pub fn has_y_parity(basis: &TwoElectronBasis, p: usize, parity: Parity) -> bool {
    basis.pair_parity(p).map(|(_, y)| y == parity.sign()).unwrap_or(false)
}
