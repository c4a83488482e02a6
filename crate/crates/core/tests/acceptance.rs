//! Acceptance criteria 1-12. Each criterion prints one PASS/FAIL line; the
//! test fails if any criterion fails.
//!
//! Run with `cargo test --test acceptance`.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{c64, Eigh, UPLO};
use qdot::basis::{build_basis, build_basis_with_parity, OrbitalIndex, Parity, Sector};
use qdot::control::{krotov_optimize, structure_subspace, ControlProblem, LambdaProfile, PenaltyConfig, PenaltyKind};
use qdot::coulomb::CoulombIntegrals;
use qdot::dynamics::{
    basis_state, inner, intuitive_pulse, propagate_adiabatic, propagate_eigenbasis, propagate_eigenbasis_backward,
    EigenSystem, PropagationOptions, PulseWaveform, SwitchSchedule, SwitchShape,
};
use qdot::experiments::{presets, run_scenario, Cache, RunManifest, RunOptions};
use qdot::hermite::{absx_table, half_integral_table};
use qdot::hyperfine::{ensemble_dephasing, spin_table, NuclearField, SpatialCoupling, SpinSpaceModel};
use qdot::model::{Confinement, MaterialParams};
use qdot::operators::{assemble_h0, dipole_matrix, halfspace_overlaps};
use qdot::spectrum::{build_adiabatic_table, solve_eigen, uniform_grid, ReducedOperators, SolveMode, TableOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn report(n: usize, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = f();
    let status = if o.pass { "PASS" } else { "FAIL" };
    // Written to the process stdout directly so the line shows up even when
    // the harness captures test output.
    let line = format!("criterion {n:>2} {status}  {title}: {} [{:.1} s]\n", o.detail, t.elapsed().as_secs_f64());
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes()).and_then(|_| out.flush());
    o.pass
}

/// Reduced-basis system used by the desk-scale criteria.
fn desk_system(n_keep: usize) -> (ReducedOperators, EigenSystem) {
    let conf = MaterialParams::GAAS.confinement().unwrap();
    let b = build_basis_with_parity(10, 3, Sector::Symmetric, Some(Parity::Even));
    let h = assemble_h0(&b, &conf).unwrap();
    let x = dipole_matrix(&b, &conf).unwrap();
    let red = ReducedOperators::new(&h, &x, 60).unwrap();
    let sys = EigenSystem::new(red.energies.slice(s![..n_keep]).to_owned(), red.dipole.slice(s![..n_keep, ..n_keep]).to_owned()).unwrap();
    (red, sys)
}

fn criterion_1() -> Outcome {
    // d = 0 and no Coulomb: two independent electrons in one isotropic well,
    // E = (N + 2) hbar omega. The symmetric sector holds the unordered pairs
    // of single-particle orbitals; shells have degeneracy 1, 2, 3, ...
    let l = 6;
    let conf = Confinement { omega: 1.0, d: 0.0, coulomb: 0.0 };
    let b = build_basis(l, l, Sector::Symmetric);
    let h = assemble_h0(&b, &conf).unwrap();
    let (e, _) = h.eigh(UPLO::Lower).unwrap();
    let shell = |n: usize| n + 1;
    let mut worst = 0.0f64;
    let mut counts_ok = true;
    let mut summary = Vec::new();
    for n in 0..=l {
        // Unordered pairs of orbitals from shells (n1, n2) with n1 + n2 = n.
        let expect: usize = (0..=n / 2)
            .map(|n1| {
                let n2 = n - n1;
                if n1 == n2 {
                    shell(n1) * (shell(n1) + 1) / 2
                } else {
                    shell(n1) * shell(n2)
                }
            })
            .sum();
        let level = (n + 2) as f64;
        let found: Vec<f64> = e.iter().copied().filter(|v| (v - level).abs() < 1e-6).collect();
        for v in &found {
            worst = worst.max((v - level).abs() / level);
        }
        counts_ok &= found.len() == expect;
        summary.push(format!("{}", found.len()));
    }
    outcome(
        worst < 1e-10 && counts_ok,
        format!("max rel error {worst:.1e}, degeneracies N=0..{l}: [{}]", summary.join(", ")),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 200;
    let half = half_integral_table(30);
    let absx = absx_table(30);
    let (mut e_half, mut e_abs, mut e_coul, mut e_ov) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n {
        let (a, b) = (rng.random_range(0..=30), rng.random_range(0..=30));
        e_half = e_half.max((half[[a, b]] - common::half_overlap(a, b)).abs());
        let (a, b) = (rng.random_range(0..=30), rng.random_range(0..=30));
        e_abs = e_abs.max((absx[[a, b]] - common::absx(a, b)).abs());
    }
    let (nx, ny) = (14, 4);
    let orbitals = build_basis(nx, ny, Sector::Symmetric).orbitals;
    let p = halfspace_overlaps(&orbitals, nx, ny);
    for _ in 0..n {
        let (a, b) = (rng.random_range(0..orbitals.len()), rng.random_range(0..orbitals.len()));
        let expect = if orbitals[a].ny == orbitals[b].ny { common::half_overlap(orbitals[a].nx, orbitals[b].nx) } else { 0.0 };
        e_ov = e_ov.max((p[[a, b]] - expect).abs());
    }
    let ints = CoulombIntegrals::new(nx, ny);
    let mut drawn = 0;
    while drawn < n {
        let o: Vec<OrbitalIndex> = (0..4).map(|_| OrbitalIndex { nx: rng.random_range(0..=nx), ny: rng.random_range(0..=ny) }).collect();
        if o.iter().map(|v| v.nx + v.ny).sum::<usize>() % 2 == 1 {
            continue;
        }
        let slow = common::coulomb_fourier(o[0], o[1], o[2], o[3]);
        let fast = ints.element(o[0], o[1], o[2], o[3]);
        e_coul = e_coul.max((fast - slow).abs() / slow.abs().max(1e-3));
        drawn += 1;
    }
    outcome(
        e_half < 1e-8 && e_abs < 1e-8 && e_ov < 1e-8 && e_coul < 1e-6,
        format!("half {e_half:.1e}, |x| {e_abs:.1e}, half-space {e_ov:.1e} (abs); Coulomb {e_coul:.1e} (rel)"),
    )
}

fn criterion_3() -> Outcome {
    let (red, _) = desk_system(20);
    let n_keep = 20;
    let grid = uniform_grid(0.0, 0.02, 81);
    let table = build_adiabatic_table(&red.hamiltonian(), &red.dipole, &grid, n_keep, &TableOptions::default()).unwrap();
    let anti = table.coupling.iter().map(|k| (k + &k.t()).iter().fold(0.0f64, |a, v| a.max(v.abs()))).fold(0.0, f64::max);

    // Finite differences of energies and of eigenvectors at fields away from
    // near-degeneracies.
    let h = 2e-6;
    let eig = |xi: f64| solve_eigen(&(red.hamiltonian() - &(&red.dipole * xi)), n_keep + 1, SolveMode::Dense).unwrap();
    let (mut hf_worst, mut k_worst, mut checked) = (0.0f64, 0.0f64, 0);
    for (m, &xi) in grid.iter().enumerate().skip(1).step_by(4) {
        let c = eig(xi);
        // Levels closer than this to a neighbour are treated as being at an
        // anticrossing and skipped.
        let isolated: Vec<bool> = (0..n_keep)
            .map(|k| {
                let lo = if k > 0 { c.energies[k] - c.energies[k - 1] } else { f64::INFINITY };
                lo.min(c.energies[k + 1] - c.energies[k]) >= 0.005
            })
            .collect();
        let (p, q) = (eig(xi + h), eig(xi - h));
        let sol = &table.solutions[m];
        for k in 0..n_keep {
            if !isolated[k] {
                continue;
            }
            let fd = (p.energies[k] - q.energies[k]) / (2.0 * h);
            let hf = -table.dipole[m][[k, k]];
            if hf.abs() > 1e-3 {
                hf_worst = hf_worst.max((fd - hf).abs() / hf.abs());
            }
            for l in 0..n_keep {
                if l == k || !isolated[l] {
                    continue;
                }
                // <k| d/dxi |l> with signs aligned to the table gauge.
                let align = |v: &Array2<f64>, j: usize| {
                    let col = v.column(j).to_owned();
                    if col.dot(&sol.vectors.column(j)) < 0.0 { -col } else { col }
                };
                let dl = (align(&p.vectors, l) - align(&q.vectors, l)) / (2.0 * h);
                let fd_k = sol.vectors.column(k).dot(&dl);
                let kv = table.coupling[m][[k, l]];
                if kv.abs() > 1e-2 {
                    k_worst = k_worst.max((fd_k - kv).abs() / kv.abs());
                }
            }
            checked += 1;
        }
    }
    outcome(
        anti < 1e-10 && hf_worst < 0.01 && k_worst < 0.01,
        format!("|K + K^T| {anti:.1e}; Hellmann-Feynman rel err {hf_worst:.1e}, coupling FD rel err {k_worst:.1e} over {checked} levels"),
    )
}

fn criterion_4() -> Outcome {
    let (red, sys) = desk_system(12);
    let opts = PropagationOptions::default();
    let w = sys.energies[1] - sys.energies[0];
    let pulse = intuitive_pulse(2e-3, w, 400.0, 0.5).unwrap();
    let psi0 = basis_state(sys.dim(), 0);
    let fwd = propagate_eigenbasis(&psi0, &pulse, &sys, &opts).unwrap();
    let drift = fwd.max_norm_drift();

    let zero = PulseWaveform::zeros(300.0, 0.5).unwrap();
    let k = 3;
    let stat = propagate_eigenbasis(&basis_state(sys.dim(), k), &zero, &sys, &opts).unwrap();
    let expect = c64::new(0.0, -sys.energies[k] * 300.0).exp();
    let phase_err = (stat.final_state()[k] - expect).norm();

    let back = propagate_eigenbasis_backward(fwd.final_state(), &pulse, &sys, &opts).unwrap();
    let rev_err = (back.final_state() - &psi0).iter().fold(0.0f64, |a, v| a.max(v.norm()));

    // Shared problem: a slow static-field ramp, once as a field in the
    // zero-field eigenbasis and once through the adiabatic table.
    let n = sys.dim();
    let hn = Array2::from_diag(&sys.energies);
    let xi1 = 0.004;
    let duration = 2000.0;
    let sched = SwitchSchedule { xi_start: 0.0, xi_end: xi1, duration, shape: SwitchShape::Sin2 };
    let table = build_adiabatic_table(&hn, &sys.dipole, &uniform_grid(0.0, xi1, 801), n, &TableOptions::default()).unwrap();
    let start = table.solutions[0].vectors.clone();
    let c0 = start.t().mapv(|v| c64::new(v, 0.0)).dot(&psi0);
    let adia = propagate_adiabatic(&c0, &sched, &table, 1, &opts).unwrap();
    let v_end = table.solutions.last().unwrap().vectors.mapv(|v| c64::new(v, 0.0));
    let via_table = v_end.dot(adia.final_state());
    let ramp = PulseWaveform::from_fn(duration, 0.05, |t| sched.xi(t)).unwrap();
    let direct = propagate_eigenbasis(&psi0, &ramp, &sys, &opts).unwrap();
    let ov = inner(&via_table, direct.final_state());
    let phase = ov / ov.norm();
    let agree = (direct.final_state() - &via_table.mapv(|v| v * phase)).iter().fold(0.0f64, |a, v| a.max(v.norm()));
    let _ = red;
    outcome(
        drift < 1e-8 && phase_err < 1e-8 && rev_err < 1e-6 && agree < 1e-4,
        format!("norm drift {drift:.1e}, stationary phase {phase_err:.1e}, time reversal {rev_err:.1e}, eigen vs adiabatic {agree:.1e}"),
    )
}

fn criterion_5() -> Outcome {
    let sys = EigenSystem::new(ndarray::arr1(&[0.0, 1.0]), ndarray::arr2(&[[0.0, 1.0], [1.0, 0.0]])).unwrap();
    let duration = 40.0;
    let dt = 0.05;
    let guess = PulseWaveform::from_fn(duration, dt, |t| 0.005 * (PI * t / duration).sin().powi(2) * t.cos()).unwrap();
    let problem = ControlProblem {
        initial_state: basis_state(2, 0),
        target_state: basis_state(2, 1),
        duration,
        dt,
        penalty: PenaltyConfig { kind: PenaltyKind::Energy, lambda_profile: LambdaProfile::Constant, lambda: 0.5, ..Default::default() },
        initial_guess: guess,
        max_iterations: 50,
        target_yield: 0.9999,
    };
    let out = krotov_optimize(&problem, &sys, &PropagationOptions::default()).unwrap();
    let first = out.yield_history.iter().position(|&y| y > 0.999);
    outcome(
        out.final_yield > 0.999 && first.is_some_and(|i| i <= 50),
        format!("yield {:.6} (guess {:.4}), above 0.999 from iteration {:?}", out.final_yield, out.yield_history[0], first),
    )
}

fn criterion_6() -> Outcome {
    let (_, sys) = desk_system(30);
    let duration = 67.0 / MaterialParams::GAAS.units().unwrap().time_unit;
    let dt = 0.5;
    let energies: Vec<f64> = sys.energies.iter().take(10).copied().collect();
    let sub = structure_subspace(&energies, duration, dt).unwrap();
    let p = sub.good_projector();
    let q = sub.bad_projector();
    let id = Array2::<f64>::eye(p.nrows());
    let max = |a: &Array2<f64>| a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let algebra = max(&(p.dot(&p) - &p)).max(max(&(q.dot(&q) - &q))).max(max(&p.dot(&q))).max(max(&(&p + &q - &id)));

    let w = sys.energies[2] - sys.energies[0];
    let guess = PulseWaveform::from_fn(duration, dt, |t| 1e-4 * (PI * t / duration).sin().powi(2) * (w * t).cos()).unwrap();
    let lambda = 10.0;
    let problem = ControlProblem {
        initial_state: basis_state(sys.dim(), 0),
        target_state: basis_state(sys.dim(), 2),
        duration,
        dt,
        penalty: PenaltyConfig {
            kind: PenaltyKind::Structure,
            lambda_profile: LambdaProfile::InverseSin2,
            lambda,
            lambda1: 0.0,
            lambda2: 10.0 * lambda,
            structure_states: 10,
            ..Default::default()
        },
        initial_guess: guess,
        max_iterations: 100,
        target_yield: 0.999,
    };
    let out = krotov_optimize(&problem, &sys, &PropagationOptions::default()).unwrap();
    let u = Array1::from(out.pulse.samples.clone());
    let good = sub.project_good(&u);
    let fraction = good.dot(&good) / u.dot(&u);
    outcome(
        algebra < 1e-10 && fraction > 0.9,
        format!("projector algebra {algebra:.1e}; good-subspace share of |u|^2 {fraction:.4} (rank {}, yield {:.4})", sub.rank(), out.final_yield),
    )
}

fn criterion_7() -> Outcome {
    let field = NuclearField { bx: 0.37, by: -0.81, bz: 0.52 };
    let worst = common::hyperfine_block_deviation(1, 0, field);
    let (bx, by, bz) = (0.3, -0.7, 1.1);
    let t = spin_table(bx, by, bz);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let zero = c64::new(0.0, 0.0);
    let expect = [
        ("a", t.a, zero),
        ("b", t.b, c64::new(bz, 0.0)),
        ("c", t.c, c64::new(bx * r, -by * r)),
        ("d", t.d, c64::new(-bx * r, -by * r)),
        ("e", t.e, zero),
        ("f", t.f, c64::new(bx * r, by * r)),
        ("g", t.g, c64::new(bx * r, -by * r)),
        ("h", t.h, c64::new(-bz, 0.0)),
        ("i", t.i, zero),
        ("j", t.j, c64::new(bz, 0.0)),
    ];
    let bad: Vec<&str> = expect.iter().filter(|(_, got, want)| (got - want).norm() > 1e-15).map(|(n, _, _)| *n).collect();
    outcome(worst < 1e-10 && bad.is_empty(), format!("brute-force deviation {worst:.1e}; spin table mismatches {bad:?}"))
}

fn criterion_8() -> Outcome {
    let params = MaterialParams::GAAS;
    let units = params.units().unwrap();
    let conf = params.confinement().unwrap();
    let n_keep = 20;
    let sb = build_basis_with_parity(10, 3, Sector::Symmetric, Some(Parity::Even));
    let tb = build_basis_with_parity(10, 3, Sector::Antisymmetric, Some(Parity::Even));
    let s = solve_eigen(&assemble_h0(&sb, &conf).unwrap(), n_keep, SolveMode::Dense).unwrap();
    let t = solve_eigen(&assemble_h0(&tb, &conf).unwrap(), n_keep, SolveMode::Dense).unwrap();
    let spatial = SpatialCoupling::new(&sb, &tb, &s.vectors, &t.vectors).unwrap();
    let model = SpinSpaceModel::new(s.energies.clone(), t.energies.clone(), spatial, params.gamma_e() / units.bfield_unit).unwrap();
    let psi = model.embed_singlet(&basis_state(n_keep, 0)).unwrap();
    let hold = units.time_to_internal(50_000.0);
    let times = uniform_grid(0.0, hold, 21);

    let quiet = ensemble_dephasing(&model, &psi, &times, &[NuclearField::default()], |v| model.singlet_probability(v)).unwrap();
    let zero_dev = quiet.mean.iter().fold(0.0f64, |a, p| a.max((p - 1.0).abs()));

    let mut finals = Vec::new();
    let mut drift = quiet.max_norm_drift;
    for b in [0.5e-3, 1e-3, 2e-3] {
        let fields = qdot::hyperfine::sample_nuclear_fields(b, 50, 3).unwrap();
        let r = ensemble_dephasing(&model, &psi, &times, &fields, |v| model.singlet_probability(v)).unwrap();
        drift = drift.max(r.max_norm_drift);
        finals.push((r.mean[times.len() - 1], r.stderr[times.len() - 1]));
    }
    let monotone = finals.windows(2).all(|w| w[0].0 - w[1].0 > w[0].1.max(w[1].1));
    outcome(
        zero_dev < 1e-12 && drift < 1e-8 && monotone,
        format!(
            "B=0 deviation {zero_dev:.1e}, norm drift {drift:.1e}; P_S(50 ns) at 0.5/1/2 mT: {}",
            finals.iter().map(|(m, e)| format!("{m:.4}+-{e:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn run_preset(name: &str, cache: &Cache, root: &std::path::Path) -> RunManifest {
    let cfg = presets::load(name).unwrap();
    run_scenario(&cfg, &RunOptions { cache: cache.clone(), output_dir: Some(root.join(name)) }).unwrap()
}

#[test]
fn acceptance() {
    let scratch = tempfile::tempdir().unwrap();
    let cache = Cache::new(scratch.path().join("cache"));
    let out = scratch.path().join("out");
    let mut all = true;
    all &= report(1, "oscillator-limit spectrum", criterion_1);
    all &= report(2, "matrix-element oracles", criterion_2);
    all &= report(3, "coupling matrix properties", criterion_3);
    all &= report(4, "propagators", criterion_4);
    all &= report(5, "Krotov two-level", criterion_5);
    all &= report(6, "structure penalty", criterion_6);
    all &= report(7, "hyperfine block oracle", criterion_7);
    all &= report(8, "dephasing sanity", criterion_8);
    all &= report(9, "CLS beat period", || {
        let m = run_preset("fig4", &cache, &out);
        let p = m.get("cls.period_ps").unwrap_or(f64::NAN);
        outcome((p - 180.0).abs() <= 0.15 * 180.0, format!("<X> period {p:.1} ps (target 180 ps +-15%)"))
    });
    let fig3 = std::cell::OnceCell::new();
    all &= report(10, "intuitive |0> -> |2>", || {
        let m = fig3.get_or_init(|| run_preset("fig3", &cache, &out));
        let w = m.get("resonance_rad_per_ps").unwrap_or(f64::NAN);
        let y = m.get("intuitive.yield").unwrap_or(f64::NAN);
        outcome((w - 1.5).abs() <= 0.15 && y >= 0.95, format!("carrier {w:.4} rad/ps (target 1.5 +-10%), P2(237 ps) {y:.4}"))
    });
    all &= report(11, "optimized |0> -> |2> at 67 ps", || {
        let m = fig3.get_or_init(|| run_preset("fig3", &cache, &out));
        let ja = m.get("ja_67ps.yield").unwrap_or(f64::NAN);
        let jb = m.get("jb_67ps.yield").unwrap_or(f64::NAN);
        outcome(ja >= 0.95 && jb >= ja - 0.02, format!("J_a {ja:.4}, J_b {jb:.4}"))
    });
    all &= report(12, "anticrossing protocol", || {
        let m = run_preset("fig8", &cache, &out);
        let y = m.get("pulse.yield").unwrap_or(f64::NAN);
        let r = m.get("hold.return_ground_population").unwrap_or(f64::NAN);
        let e = m.get("hold.return_ground_stderr").unwrap_or(f64::NAN);
        outcome(y >= 0.99 && r + e >= 0.98, format!("pulse yield {y:.5}, ground population regained {r:.5} +- {e:.5}"))
    });
    assert!(all, "some acceptance criteria failed");
}
