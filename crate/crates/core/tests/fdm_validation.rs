use std::sync::Arc;

use bladetrap::bem::{solve_basis, SolveOptions};
use bladetrap::fdm::{compare_solvers, fdm_solve, Boundary, FdmOptions, SimplifiedTrap, VoxelProblem};
use bladetrap::geometry::ElectrodeId;
use nalgebra::Vector3;

type V3 = Vector3<f64>;

const INNER: f64 = 0.25;

/// Square coax (outer half side 1 grounded, inner half side 0.25 at 1 V)
/// by conjugate gradients on the 5-point stencil with n cells per side.
fn coax_cg(n: usize) -> (usize, Vec<f64>) {
    let h = 2.0 / n as f64;
    let m = n + 1;
    let fixed = |i: usize, j: usize| {
        let (x, y) = (-1.0 + i as f64 * h, -1.0 + j as f64 * h);
        i == 0 || j == 0 || i == n || j == n || (x.abs() <= INNER + 1e-12 && y.abs() <= INNER + 1e-12)
    };
    let inner = |i: usize, j: usize| i != 0 && j != 0 && i != n && j != n && fixed(i, j);
    let mut u: Vec<f64> = (0..m * m).map(|k| if inner(k % m, k / m) { 1.0 } else { 0.0 }).collect();
    let free: Vec<bool> = (0..m * m).map(|k| !fixed(k % m, k / m)).collect();
    // A u = 4u - sum of neighbours on free nodes
    let apply = |v: &[f64], out: &mut [f64], free_only: bool| {
        for j in 1..n {
            for i in 1..n {
                let k = i + m * j;
                if !free[k] {
                    continue;
                }
                let nb = |kk: usize| if !free_only || free[kk] { v[kk] } else { 0.0 };
                out[k] = 4.0 * v[k] - nb(k - 1) - nb(k + 1) - nb(k - m) - nb(k + m);
            }
        }
    };
    let mut au = vec![0.0; m * m];
    apply(&u, &mut au, false);
    let mut r: Vec<f64> = (0..m * m).map(|k| if free[k] { -au[k] } else { 0.0 }).collect();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|x| x * x).sum();
    let r0 = rr.sqrt();
    let mut ap = vec![0.0; m * m];
    for _ in 0..20 * n {
        apply(&p, &mut ap, true);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for k in 0..m * m {
            if free[k] {
                u[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
        }
        let rr_new: f64 = r.iter().map(|x| x * x).sum();
        if rr_new.sqrt() < 1e-11 * r0 {
            break;
        }
        for k in 0..m * m {
            p[k] = r[k] + rr_new / rr * p[k];
        }
        rr = rr_new;
    }
    (n, u)
}

fn cg_at(sol: &(usize, Vec<f64>), x: f64, y: f64) -> f64 {
    let (n, u) = sol;
    let h = 2.0 / *n as f64;
    let i = ((x + 1.0) / h).round() as usize;
    let j = ((y + 1.0) / h).round() as usize;
    u[i + (n + 1) * j]
}

fn coax_fdm(cells: usize) -> bladetrap::fdm::FdmSolution {
    let h = 2.0 / cells as f64;
    let mut p = VoxelProblem::new(V3::new(-1.0, -1.0, -h), V3::new(1.0, 1.0, h), h, [
        Boundary::Grounded,
        Boundary::Grounded,
        Boundary::Symmetric,
    ])
    .unwrap();
    p.paint(ElectrodeId::Aux(1), |r| r.x.abs() <= INNER + 1e-12 && r.y.abs() <= INNER + 1e-12);
    fdm_solve(&p, &[(ElectrodeId::Aux(1), 1.0)], &FdmOptions { tolerance: 1e-9, ..Default::default() }).unwrap()
}

/// Probes on the x axis and the diagonal, all on the 1/16 lattice.
fn probes() -> Vec<(f64, f64)> {
    (5..16)
        .map(|k| (k as f64 / 16.0, 0.0))
        .chain((5..16).map(|k| (k as f64 / 16.0, k as f64 / 16.0)))
        .chain((5..16).map(|k| (k as f64 / 16.0, -0.5)))
        .collect()
}

fn max_error(sol: &bladetrap::fdm::FdmSolution, oracle: &(usize, Vec<f64>)) -> f64 {
    probes()
        .iter()
        .map(|&(x, y)| (sol.potential(&V3::new(x, y, 0.0)).unwrap() - cg_at(oracle, x, y)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn square_coax_matches_fine_grid_and_converges() {
    let oracle = coax_cg(1024);
    let fine = coax_fdm(256);
    let e = max_error(&fine, &oracle);
    assert!(e < 0.02, "error at extent/256: {e}");
    let e32 = max_error(&coax_fdm(32), &oracle);
    let e64 = max_error(&coax_fdm(64), &oracle);
    assert!(e32 / e64 >= 1.5, "halving h: {e32} -> {e64}");
    // the mirror plane keeps the solution independent of z
    let a = fine.potential(&V3::new(0.5, 0.1, -fine.h)).unwrap();
    let b = fine.potential(&V3::new(0.5, 0.1, fine.h)).unwrap();
    assert!((a - b).abs() < 1e-9);
}

#[test]
fn voxel_solution_is_linear_in_the_drive() {
    let trap = SimplifiedTrap::default();
    let p = trap.voxels(100e-6).unwrap();
    let v: Vec<_> = SimplifiedTrap::bars().iter().map(|b| (b.0, 3.0)).collect();
    // grounded box with all bars at 3 V is not equipotential, but the
    // problem is linear: doubling the drive doubles the field
    let s1 = fdm_solve(&p, &v, &FdmOptions::default()).unwrap();
    let v2: Vec<_> = v.iter().map(|&(e, x)| (e, 2.0 * x)).collect();
    let s2 = fdm_solve(&p, &v2, &FdmOptions::default()).unwrap();
    for r in [V3::zeros(), V3::new(1e-4, -5e-5, 3e-4)] {
        let (a, b) = (s1.potential(&r).unwrap(), s2.potential(&r).unwrap());
        assert!((b - 2.0 * a).abs() < 1e-4 * a.abs(), "{a} {b}");
        assert!(a > 0.0 && a < 3.0);
    }
}

#[test]
fn boundary_elements_agree_with_finite_differences() {
    let trap = SimplifiedTrap::default();
    let mesh = Arc::new(trap.mesh(100e-6, 200e-6).unwrap());
    let basis = solve_basis(mesh, &SolveOptions::default()).unwrap();
    let voxels = trap.voxels(25e-6).unwrap();
    let drives = [
        vec![(ElectrodeId::RfBlade(1), 1.0), (ElectrodeId::RfBlade(2), 1.0)],
        vec![(SimplifiedTrap::bars()[2].0, 1.0)],
    ];
    let probes: Vec<[f64; 3]> = (0..125)
        .map(|k| {
            let c = |i: usize| -100e-6 + 50e-6 * i as f64;
            [c(k % 5), c((k / 5) % 5), c(k / 25)]
        })
        .collect();
    for drive in drives {
        let bem = basis.charge_set(std::slice::from_ref(&drive)).unwrap();
        let fdm = fdm_solve(&voxels, &drive, &FdmOptions::default()).unwrap();
        let a: Vec<_> = probes.iter().map(|&p| (p, bem.potential(&V3::from(p))[0])).collect();
        let b: Vec<_> = probes.iter().map(|&p| (p, fdm.potential(&V3::from(p)).unwrap())).collect();
        let c = compare_solvers(&a, &b).unwrap();
        println!(
            "{drive:?}: rms {:.3}% max {:.3}% per-axis {:?}",
            100.0 * c.rms_relative,
            100.0 * c.max_relative,
            c.per_axis
        );
        assert!(c.within(0.03), "{c:?}");
    }
}
