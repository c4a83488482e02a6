//! Symmetrized two-electron basis built from products of 2D oscillator orbitals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exchange symmetry of the spatial part. Symmetric spatial functions pair
/// with the spin singlet, antisymmetric ones with the triplets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Symmetric,
    Antisymmetric,
}

impl Sector {
    /// Sign of the exchange term.
    pub fn exchange_sign(self) -> f64 {
        match self {
            Sector::Symmetric => 1.0,
            Sector::Antisymmetric => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(quanta: usize) -> Parity {
        if quanta % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            Parity::Even => 1,
            Parity::Odd => -1,
        }
    }
}

/// Quantum numbers of a 2D oscillator orbital.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrbitalIndex {
    pub nx: usize,
    pub ny: usize,
}

/// Ordered list of symmetrized products `|ij>` of one sector.
///
/// Orbitals are ordered `nx`-major, pairs lexicographically in `(i, j)` with
/// `j >= i` (symmetric) or `j > i` (antisymmetric). An optional y-parity
/// filter keeps only pairs with `(-1)^(ny_i + ny_j)` equal to the given
/// parity; the field-free and x-field Hamiltonians never mix y-parities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoElectronBasis {
    pub nx_max: usize,
    pub ny_max: usize,
    pub sector: Sector,
    pub y_parity: Option<Parity>,
    pub orbitals: Vec<OrbitalIndex>,
    pub pairs: Vec<(usize, usize)>,
}

/// All pairs of the sector.
pub fn build_basis(nx_max: usize, ny_max: usize, sector: Sector) -> TwoElectronBasis {
    build_basis_with_parity(nx_max, ny_max, sector, None)
}

pub fn build_basis_with_parity(
    nx_max: usize,
    ny_max: usize,
    sector: Sector,
    y_parity: Option<Parity>,
) -> TwoElectronBasis {
    let orbitals: Vec<OrbitalIndex> = (0..=nx_max)
        .flat_map(|nx| (0..=ny_max).map(move |ny| OrbitalIndex { nx, ny }))
        .collect();
    let n = orbitals.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        let start = match sector {
            Sector::Symmetric => i,
            Sector::Antisymmetric => i + 1,
        };
        for j in start..n {
            let keep = y_parity
                .map(|p| Parity::of(orbitals[i].ny + orbitals[j].ny) == p)
                .unwrap_or(true);
            if keep {
                pairs.push((i, j));
            }
        }
    }
    TwoElectronBasis { nx_max, ny_max, sector, y_parity, orbitals, pairs }
}

/// Closed-form size of an unfiltered sector.
pub fn sector_size(nx_max: usize, ny_max: usize, sector: Sector) -> usize {
    let n = (nx_max + 1) * (ny_max + 1);
    match sector {
        Sector::Symmetric => n * (n + 1) / 2,
        Sector::Antisymmetric => n * n.saturating_sub(1) / 2,
    }
}

impl TwoElectronBasis {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn orbital_count(&self) -> usize {
        self.orbitals.len()
    }

    /// Index of orbital `(nx, ny)` in `orbitals`.
    pub fn orbital_index(&self, nx: usize, ny: usize) -> Option<usize> {
        (nx <= self.nx_max && ny <= self.ny_max).then(|| nx * (self.ny_max + 1) + ny)
    }

    /// Position of pair `(i, j)` (either order) in the basis, if present.
    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.pairs.binary_search(&key).ok()
    }

    /// Coefficient `N` in `|ij> = N (|i j> +- |j i>)`: `1/sqrt(2)` for `i != j`,
    /// `1/2` for `i == j` so that `|ii>` is the plain product.
    pub fn pair_norm(&self, p: usize) -> f64 {
        let (i, j) = self.pairs[p];
        if i == j {
            0.5
        } else {
            std::f64::consts::FRAC_1_SQRT_2
        }
    }

    /// `(x_parity, y_parity)` signs of pair `p`.
    pub fn pair_parity(&self, p: usize) -> Result<(i32, i32)> {
        let &(i, j) = self
            .pairs
            .get(p)
            .ok_or(Error::IndexOutOfRange { index: p, len: self.pairs.len() })?;
        let (a, b) = (self.orbitals[i], self.orbitals[j]);
        Ok((Parity::of(a.nx + b.nx).sign(), Parity::of(a.ny + b.ny).sign()))
    }

    /// Whether two bases describe the same orbital set (possibly different sectors).
    pub fn same_orbitals(&self, other: &TwoElectronBasis) -> bool {
        self.nx_max == other.nx_max && self.ny_max == other.ny_max
    }
}

/// Pair parity as a free function, mirroring [`TwoElectronBasis::pair_parity`].
pub fn pair_parity(basis: &TwoElectronBasis, pair_index: usize) -> Result<(i32, i32)> {
    basis.pair_parity(pair_index)
}
