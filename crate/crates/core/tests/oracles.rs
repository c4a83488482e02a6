//! Closed-form matrix elements against quadrature and Fourier-space oracles
//! on randomly sampled indices.

mod common;

use qdot::basis::{build_basis, OrbitalIndex, Sector};
use qdot::coulomb::CoulombIntegrals;
use qdot::hermite::{absx_table, half_integral_table};
use qdot::operators::{coulomb_pair_matrix, halfspace_overlaps};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 200;

#[test]
fn half_integrals_match_quadrature() {
    let table = half_integral_table(30);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let (n, m) = (rng.random_range(0..=30), rng.random_range(0..=30));
        worst = worst.max((table[[n, m]] - common::half_overlap(n, m)).abs());
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn absx_elements_match_quadrature() {
    let table = absx_table(30);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let (n, m) = (rng.random_range(0..=30), rng.random_range(0..=30));
        worst = worst.max((table[[n, m]] - common::absx(n, m)).abs());
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn halfspace_overlaps_match_quadrature() {
    let (nx, ny) = (14, 4);
    let orbitals = build_basis(nx, ny, Sector::Symmetric).orbitals;
    let p = halfspace_overlaps(&orbitals, nx, ny);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let (a, b) = (rng.random_range(0..orbitals.len()), rng.random_range(0..orbitals.len()));
        let (oa, ob) = (orbitals[a], orbitals[b]);
        let expect = if oa.ny == ob.ny { common::half_overlap(oa.nx, ob.nx) } else { 0.0 };
        worst = worst.max((p[[a, b]] - expect).abs());
    }
    assert!(worst < 1e-8, "{worst}");
}

fn random_orbital(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> OrbitalIndex {
    OrbitalIndex { nx: rng.random_range(0..=nx), ny: rng.random_range(0..=ny) }
}

#[test]
fn coulomb_orbital_elements_match_fourier_route() {
    let (nx, ny) = (14, 4);
    let ints = CoulombIntegrals::new(nx, ny);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < SAMPLES {
        let o: Vec<OrbitalIndex> = (0..4).map(|_| random_orbital(&mut rng, nx, ny)).collect();
        // Half of the random draws vanish by parity; keep mostly nonzero ones.
        let parity_ok = (o.iter().map(|v| v.nx).sum::<usize>() % 2 == 0) && (o.iter().map(|v| v.ny).sum::<usize>() % 2 == 0);
        if !parity_ok && checked % 10 != 0 {
            continue;
        }
        let fast = ints.element(o[0], o[1], o[2], o[3]);
        let slow = common::coulomb_fourier(o[0], o[1], o[2], o[3]);
        let rel = (fast - slow).abs() / slow.abs().max(1e-3);
        worst = worst.max(rel);
        checked += 1;
    }
    assert!(worst < 1e-6, "worst relative deviation {worst}");
}

#[test]
fn coulomb_pair_elements_match_fourier_route() {
    for sector in [Sector::Symmetric, Sector::Antisymmetric] {
        let basis = build_basis(5, 2, sector);
        let v = coulomb_pair_matrix(&basis, &CoulombIntegrals::new(5, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst = 0.0f64;
        for _ in 0..SAMPLES / 2 {
            let (p, q) = (rng.random_range(0..basis.len()), rng.random_range(0..basis.len()));
            let slow = common::pair_element(&basis, p, q, common::coulomb_fourier);
            worst = worst.max((v[[p, q]] - slow).abs() / slow.abs().max(1e-3));
        }
        assert!(worst < 1e-6, "{sector:?}: worst relative deviation {worst}");
    }
}
