//! Independent reference constructions shared by the oracle and acceptance
//! suites. Nothing here calls into the closed-form paths it is compared with.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use ndarray_linalg::c64;
use qdot::basis::{build_basis, OrbitalIndex, Sector, TwoElectronBasis};
use qdot::hyperfine::{NuclearField, SpatialCoupling, SpinSpaceModel};

/// Normalized oscillator functions from the three-term recurrence.
pub fn psi(nmax: usize, x: f64) -> Vec<f64> {
    let mut v = vec![0.0; nmax + 1];
    v[0] = std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp();
    if nmax > 0 {
        v[1] = 2f64.sqrt() * x * v[0];
    }
    for n in 2..=nmax {
        v[n] = (2.0 / n as f64).sqrt() * x * v[n - 1] - ((n - 1) as f64 / n as f64).sqrt() * v[n - 2];
    }
    v
}

/// Composite Simpson rule of `f` on `[a, b]` with `steps` (even) intervals.
pub fn simpson(a: f64, b: f64, steps: usize, f: impl Fn(f64) -> f64) -> f64 {
    assert!(steps % 2 == 0);
    let h = (b - a) / steps as f64;
    let mut s = f(a) + f(b);
    for k in 1..steps {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// `int_0^inf phi_n phi_m dx` by quadrature.
pub fn half_overlap(n: usize, m: usize) -> f64 {
    let nmax = n.max(m);
    simpson(0.0, 16.0, 8000, |x| {
        let f = psi(nmax, x);
        f[n] * f[m]
    })
}

/// `<n| |x| |m>` by quadrature on the half line; `phi_n phi_m` has parity
/// `(-1)^(n+m)`.
pub fn absx(n: usize, m: usize) -> f64 {
    let nmax = n.max(m);
    let reflect = if (n + m) % 2 == 0 { 2.0 } else { 0.0 };
    reflect * simpson(0.0, 16.0, 8000, |x| {
        let f = psi(nmax, x);
        x * f[n] * f[m]
    })
}

/// Half-line overlap matrix for `n, m <= nmax`.
pub fn half_overlaps(nmax: usize) -> Array2<f64> {
    Array2::from_shape_fn((nmax + 1, nmax + 1), |(n, m)| half_overlap(n, m))
}

/// Generalized Laguerre polynomial `L_n^a(z)` by recurrence.
fn laguerre(n: usize, a: f64, z: f64) -> f64 {
    let (mut l0, mut l1) = (1.0, 1.0 + a - z);
    if n == 0 {
        return l0;
    }
    for k in 1..n {
        let kf = k as f64;
        let l2 = ((2.0 * kf + 1.0 + a - z) * l1 - (kf + a) * l0) / (kf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// `int phi_n(x) phi_m(x) e^{ikx} dx` from the Laguerre closed form.
pub fn fourier_pair(n: usize, m: usize, k: f64) -> c64 {
    let (hi, lo) = if n >= m { (n, m) } else { (m, n) };
    let d = hi - lo;
    let ln_ratio: f64 = ((lo + 1)..=hi).map(|j| (j as f64).ln()).sum::<f64>();
    let z = k * k / 2.0;
    let mag = (-0.5 * ln_ratio).exp() * (k / 2f64.sqrt()).powi(d as i32) * (-k * k / 4.0).exp() * laguerre(lo, d as f64, z);
    // i^d, symmetric in (n, m) since the integrand is.
    let phase = match d % 4 {
        0 => c64::new(1.0, 0.0),
        1 => c64::new(0.0, 1.0),
        2 => c64::new(-1.0, 0.0),
        _ => c64::new(0.0, -1.0),
    };
    phase * mag
}

/// `<a b| 1/|r1 - r2| |c d>` for unit-length 2D oscillator orbitals through
/// the Fourier representation `1/r = int d^2k/(2 pi)^2 (2 pi / k) e^{ik.r}`.
pub fn coulomb_fourier(a: OrbitalIndex, b: OrbitalIndex, c: OrbitalIndex, d: OrbitalIndex) -> f64 {
    let nk = 1600;
    let kmax = 24.0;
    let nth = 96;
    let hk = kmax / nk as f64;
    let mut sum = 0.0;
    for ik in 0..=nk {
        let k = ik as f64 * hk;
        // The angular average is even in k, so the trapezoid rule on the half
        // line converges spectrally.
        let wk = if ik == 0 || ik == nk { 0.5 } else { 1.0 };
        let mut ang = 0.0;
        for it in 0..nth {
            let th = 2.0 * std::f64::consts::PI * it as f64 / nth as f64;
            let (kx, ky) = (k * th.cos(), k * th.sin());
            let f1 = fourier_pair(a.nx, c.nx, kx) * fourier_pair(a.ny, c.ny, ky);
            let f2 = fourier_pair(b.nx, d.nx, -kx) * fourier_pair(b.ny, d.ny, -ky);
            ang += (f1 * f2).re;
        }
        sum += wk * ang * 2.0 * std::f64::consts::PI / nth as f64;
    }
    sum * hk / (2.0 * std::f64::consts::PI)
}

fn spin_ops(b: &NuclearField) -> Array2<c64> {
    // B . sigma / 2 on one spin, basis (up, down).
    ndarray::arr2(&[
        [c64::new(b.bz / 2.0, 0.0), c64::new(b.bx / 2.0, -b.by / 2.0)],
        [c64::new(b.bx / 2.0, b.by / 2.0), c64::new(-b.bz / 2.0, 0.0)],
    ])
}

/// Largest deviation between `hyperfine_blocks` (pair basis, unit coupling)
/// and the projection of `sum_i Theta(x_i) B.s_i` built in the full
/// orbital x orbital x spin x spin product space.
pub fn hyperfine_block_deviation(nx: usize, ny: usize, field: NuclearField) -> f64 {
    let sing = build_basis(nx, ny, Sector::Symmetric);
    let trip = build_basis(nx, ny, Sector::Antisymmetric);
    let no = sing.orbitals.len();
    let half = half_overlaps(nx);
    let theta = Array2::from_shape_fn((no, no), |(a, b)| {
        let (oa, ob) = (sing.orbitals[a], sing.orbitals[b]);
        if oa.ny == ob.ny {
            half[[oa.nx, ob.nx]]
        } else {
            0.0
        }
    });
    let sb = spin_ops(&field);

    let dim = no * no * 4;
    let idx = |a: usize, b: usize, s1: usize, s2: usize| ((a * no + b) * 2 + s1) * 2 + s2;
    let mut h = Array2::<c64>::zeros((dim, dim));
    for a in 0..no {
        for b in 0..no {
            for s1 in 0..2 {
                for s2 in 0..2 {
                    let row = idx(a, b, s1, s2);
                    for a2 in 0..no {
                        for t1 in 0..2 {
                            h[[row, idx(a2, b, t1, s2)]] += sb[[s1, t1]] * theta[[a, a2]];
                        }
                    }
                    for b2 in 0..no {
                        for t2 in 0..2 {
                            h[[row, idx(a, b2, s1, t2)]] += sb[[s2, t2]] * theta[[b, b2]];
                        }
                    }
                }
            }
        }
    }

    let r = std::f64::consts::FRAC_1_SQRT_2;
    // Spin vectors over (s1, s2) with up = 0, ordered S, T+, T0, T-.
    let singlet = [0.0, r, -r, 0.0];
    let t_plus = [1.0, 0.0, 0.0, 0.0];
    let t_zero = [0.0, r, r, 0.0];
    let t_minus = [0.0, 0.0, 0.0, 1.0];
    let state = |pair: (usize, usize), sign: f64, spin: &[f64; 4]| {
        let mut v = Array1::<c64>::zeros(dim);
        let (i, j) = pair;
        for s1 in 0..2 {
            for s2 in 0..2 {
                let w = spin[s1 * 2 + s2];
                v[idx(i, j, s1, s2)] += c64::new(w, 0.0);
                v[idx(j, i, s1, s2)] += c64::new(sign * w, 0.0);
            }
        }
        let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v / c64::new(n, 0.0)
    };
    let mut states = Vec::new();
    for &p in &sing.pairs {
        states.push(state(p, 1.0, &singlet));
    }
    for spin in [&t_plus, &t_zero, &t_minus] {
        for &p in &trip.pairs {
            states.push(state(p, -1.0, spin));
        }
    }

    let spatial = SpatialCoupling::new(&sing, &trip, &Array2::eye(sing.len()), &Array2::eye(trip.len())).unwrap();
    let model = SpinSpaceModel::new(Array1::zeros(sing.len()), Array1::zeros(trip.len()), spatial, 1.0).unwrap();
    let blocks = model.hyperfine_blocks(&field);
    assert_eq!(blocks.nrows(), states.len());

    let mut worst = 0.0f64;
    for (p, bra) in states.iter().enumerate() {
        let hb = h.t().dot(&bra.mapv(|v| v.conj()));
        for (q, ket) in states.iter().enumerate() {
            let brute: c64 = hb.iter().zip(ket.iter()).map(|(a, b)| *a * *b).sum::<c64>();
            worst = worst.max((brute - blocks[[p, q]]).norm());
        }
    }
    worst
}

/// Symmetrized pair element `<p|V|q>` of a sector from orbital integrals.
pub fn pair_element(basis: &TwoElectronBasis, p: usize, q: usize, v: impl Fn(OrbitalIndex, OrbitalIndex, OrbitalIndex, OrbitalIndex) -> f64) -> f64 {
    let sign = match basis.sector {
        Sector::Symmetric => 1.0,
        Sector::Antisymmetric => -1.0,
    };
    let o = &basis.orbitals;
    let (i, j) = basis.pairs[p];
    let (k, l) = basis.pairs[q];
    2.0 * basis.pair_norm(p) * basis.pair_norm(q) * (v(o[i], o[j], o[k], o[l]) + sign * v(o[i], o[j], o[l], o[k]))
}
