use std::collections::HashMap;
use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::lu::partial_pivoting::{factor, solve};
use faer::perm::PermRef;
use faer::{Mat, MatMut, MatRef, Par};
use rayon::prelude::*;

use super::{BasisSet, Diagnostics, Geometry};
use crate::error::{Error, Result};
use crate::geometry::ElectrodeMesh;
use crate::units::EPSILON_0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Dense,
    Gmres,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Relative residual target of the linear solve.
    pub tolerance: f64,
    /// Largest system solved by direct factorization.
    pub dense_limit: usize,
    /// Bytes available for a stored system matrix.
    pub memory_budget: usize,
    pub restart: usize,
    pub max_iterations: usize,
    /// Distances, in panel diameters, below which the analytic kernel and
    /// the 7-point rule are used; the monopole kernel applies beyond.
    pub near_factor: f64,
    pub far_factor: f64,
    /// Condition estimates above this are treated as singular.
    pub max_condition: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-8,
            dense_limit: 20_000,
            memory_budget: 3 << 30,
            restart: 60,
            max_iterations: 2_000,
            near_factor: 3.0,
            far_factor: 20.0,
            max_condition: 1e13,
        }
    }
}

/// Computes the unit-voltage charge density of every electrode.
pub fn solve_basis(mesh: Arc<ElectrodeMesh>, options: &SolveOptions) -> Result<BasisSet> {
    if !(options.tolerance > 0.0 && options.tolerance < 1.0) {
        return Err(Error::InvalidArgument("tolerance must lie in (0, 1)".into()));
    }
    let geometry = Arc::new(Geometry::new(&mesh, options.near_factor, options.far_factor));
    let n = geometry.len();
    let ne = mesh.electrodes().len();
    let labels: Vec<usize> = mesh.panels().iter().map(|p| p.electrode).collect();
    let matrix_bytes = n.saturating_mul(n).saturating_mul(8);
    let fits = matrix_bytes <= options.memory_budget;
    log::info!("solving {ne} electrode bases on {n} panels");

    let (mut x, condition, method, iterations) = if n <= options.dense_limit && fits {
        let (x, cond) = dense_solve(&geometry, &labels, ne, options)?;
        (x, cond, SolveMethod::Dense, 0)
    } else {
        let (x, it) = iterative_solve(&geometry, &labels, ne, options, fits)?;
        (x, f64::NAN, SolveMethod::Gmres, it)
    };

    let residual = boundary_residual(&geometry, &labels, &x);
    log::info!("basis residual {residual:e}, condition {condition:e}");
    if !(residual <= options.tolerance.max(1e-10)) {
        return Err(Error::NoConvergence(format!(
            "boundary-condition residual {residual:e} exceeds tolerance {:e}",
            options.tolerance
        )));
    }
    // x solves ∫ σ'/R = V; σ = 4πε₀ σ'.
    let scale = 4.0 * std::f64::consts::PI * EPSILON_0;
    for col in &mut x {
        col.iter_mut().for_each(|v| *v *= scale);
    }
    let diagnostics = Diagnostics {
        method,
        panels: n,
        residual,
        condition,
        iterations,
    };
    BasisSet::from_parts(mesh, geometry, x, options.tolerance, diagnostics)
}

fn assemble_column(geometry: &Geometry, j: usize, col: &mut [f64]) {
    for (i, out) in col.iter_mut().enumerate() {
        *out = geometry.potential_kernel(j, &geometry.panels[i].centroid);
    }
}

fn dense_solve(
    geometry: &Geometry,
    labels: &[usize],
    ne: usize,
    options: &SolveOptions,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let n = geometry.len();
    let mut data = vec![0.0f64; n * n];
    data.par_chunks_mut(n)
        .enumerate()
        .for_each(|(j, col)| assemble_column(geometry, j, col));
    let norm1 = data
        .par_chunks(n)
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .reduce(|| 0.0, f64::max);

    let par = faer::get_global_parallelism();
    let mut a = MatMut::from_column_major_slice_mut(&mut data, n, n);
    let mut perm = vec![0usize; n];
    let mut perm_inv = vec![0usize; n];
    {
        let req = factor::lu_in_place_scratch::<usize, f64>(n, n, par, Default::default());
        let mut mem = MemBuffer::new(req);
        factor::lu_in_place(
            a.as_mut(),
            &mut perm,
            &mut perm_inv,
            par,
            MemStack::new(&mut mem),
            Default::default(),
        );
    }
    let lu = a.as_ref();
    let p = PermRef::new_checked(&perm, &perm_inv, n);
    let pivots_ok = (0..n).all(|i| {
        let d = lu[(i, i)];
        d.is_finite() && d != 0.0
    });
    let condition = if pivots_ok {
        // the pivot spread bounds cond(U) from below and catches exactly
        // repeated rows that the sampling estimator can miss
        let (lo, hi) = (0..n)
            .map(|i| lu[(i, i)].abs())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        (norm1 * inverse_norm1_estimate(lu, p, par)).max(hi / lo)
    } else {
        f64::INFINITY
    };
    if !(condition.is_finite() && condition <= options.max_condition) {
        return Err(Error::Singular {
            condition,
            duplicates: near_duplicates(geometry),
        });
    }

    let mut rhs = Mat::<f64>::zeros(n, ne);
    for (i, &e) in labels.iter().enumerate() {
        rhs[(i, e)] = 1.0;
    }
    let req = solve::solve_in_place_scratch::<usize, f64>(n, ne, par);
    let mut mem = MemBuffer::new(req);
    solve::solve_in_place(lu, lu, p, rhs.as_mut(), par, MemStack::new(&mut mem));
    let x = (0..ne)
        .map(|e| (0..n).map(|i| rhs[(i, e)]).collect())
        .collect();
    Ok((x, condition))
}

/// Hager/Higham estimate of ‖A⁻¹‖₁ from an LU factorization.
fn inverse_norm1_estimate(lu: MatRef<'_, f64>, p: PermRef<'_, usize>, par: Par) -> f64 {
    let n = lu.nrows();
    let req = solve::solve_in_place_scratch::<usize, f64>(n, 1, par)
        .or(solve::solve_transpose_in_place_scratch::<usize, f64>(n, 1, par));
    let mut mem = MemBuffer::new(req);
    // slightly uneven start so symmetric null vectors are not missed
    let mut x = Mat::<f64>::from_fn(n, 1, |i, _| (1.0 + 0.5 * (i as f64 * 0.618).sin()) / n as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let mut y = x.clone();
        solve::solve_in_place(lu, lu, p, y.as_mut(), par, MemStack::new(&mut mem));
        estimate = (0..n).map(|i| y[(i, 0)].abs()).sum::<f64>();
        let mut z = Mat::<f64>::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
        solve::solve_transpose_in_place(lu, lu, p, z.as_mut(), par, MemStack::new(&mut mem));
        let (jmax, zmax) = (0..n)
            .map(|i| (i, z[(i, 0)].abs()))
            .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        if zmax <= ztx {
            break;
        }
        x = Mat::<f64>::zeros(n, 1);
        x[(jmax, 0)] = 1.0;
    }
    estimate
}

/// Pairs of panels whose centroids coincide to within 1e-6 of the smallest
/// panel size.
fn near_duplicates(geometry: &Geometry) -> Vec<(usize, usize)> {
    let h = geometry
        .panels
        .iter()
        .map(|p| p.diameter)
        .fold(f64::INFINITY, f64::min)
        * 1e-6;
    let mut seen: HashMap<[i64; 3], usize> = HashMap::new();
    let mut out = Vec::new();
    for (j, p) in geometry.panels.iter().enumerate() {
        let key = [0, 1, 2].map(|k| (p.centroid[k] / h).round() as i64);
        if let Some(&i) = seen.get(&key) {
            out.push((i, j));
        } else {
            seen.insert(key, j);
        }
        if out.len() >= 32 {
            break;
        }
    }
    out
}

/// max over electrodes and collocation points of |Σ_j I_ij x_j - V_i|,
/// recomputed without the factorization.
fn boundary_residual(geometry: &Geometry, labels: &[usize], x: &[Vec<f64>]) -> f64 {
    let n = geometry.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let c = geometry.panels[i].centroid;
            let mut acc = vec![0.0; x.len()];
            for j in 0..n {
                let k = geometry.potential_kernel(j, &c);
                for (a, col) in acc.iter_mut().zip(x) {
                    *a += k * col[j];
                }
            }
            acc.iter()
                .enumerate()
                .map(|(e, v)| (v - if labels[i] == e { 1.0 } else { 0.0 }).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Block-diagonal preconditioner over runs of consecutive panels.
struct BlockJacobi {
    blocks: Vec<(usize, nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>)>,
}

impl BlockJacobi {
    const BLOCK: usize = 256;

    fn new(geometry: &Geometry) -> Self {
        let n = geometry.len();
        let starts: Vec<usize> = (0..n).step_by(Self::BLOCK).collect();
        let blocks = starts
            .into_par_iter()
            .map(|s| {
                let m = Self::BLOCK.min(n - s);
                let a = nalgebra::DMatrix::from_fn(m, m, |i, j| {
                    geometry.potential_kernel(s + j, &geometry.panels[s + i].centroid)
                });
                (s, a.lu())
            })
            .collect();
        BlockJacobi { blocks }
    }

    fn apply(&self, r: &[f64], out: &mut [f64]) {
        for (s, lu) in &self.blocks {
            let m = lu.l().nrows();
            let b = nalgebra::DVector::from_column_slice(&r[*s..s + m]);
            match lu.solve(&b) {
                Some(z) => out[*s..s + m].copy_from_slice(z.as_slice()),
                None => out[*s..s + m].copy_from_slice(&r[*s..s + m]),
            }
        }
    }
}

fn iterative_solve(
    geometry: &Geometry,
    labels: &[usize],
    ne: usize,
    options: &SolveOptions,
    store: bool,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let n = geometry.len();
    let stored: Option<Vec<f64>> = store.then(|| {
        let mut data = vec![0.0f64; n * n];
        data.par_chunks_mut(n)
            .enumerate()
            .for_each(|(j, col)| assemble_column(geometry, j, col));
        data
    });
    let apply = |v: &[f64], out: &mut [f64]| match &stored {
        Some(a) => {
            let a = MatRef::from_column_major_slice(a, n, n);
            let vv = faer::ColRef::from_slice(v);
            let res = a * vv;
            out.copy_from_slice(res.as_ref().try_as_col_major().unwrap().as_slice());
        }
        None => {
            out.par_iter_mut().enumerate().for_each(|(i, o)| {
                let c = geometry.panels[i].centroid;
                *o = (0..n).map(|j| geometry.potential_kernel(j, &c) * v[j]).sum();
            });
        }
    };
    let pre = BlockJacobi::new(geometry);
    let mut total = 0;
    let mut x = Vec::with_capacity(ne);
    for e in 0..ne {
        let b: Vec<f64> = labels.iter().map(|&l| if l == e { 1.0 } else { 0.0 }).collect();
        let mut xe = vec![0.0; n];
        pre.apply(&b, &mut xe);
        total += gmres(
            &apply,
            &|r, o| pre.apply(r, o),
            &b,
            &mut xe,
            // the Krylov residual is a 2-norm; the boundary check is a max-norm
            0.1 * options.tolerance,
            options.restart,
            options.max_iterations,
        )?;
        x.push(xe);
    }
    Ok((x, total))
}

/// Right-preconditioned restarted GMRES. Returns the iteration count.
pub fn gmres(
    apply: &dyn Fn(&[f64], &mut [f64]),
    precondition: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tolerance: f64,
    restart: usize,
    max_iterations: usize,
) -> Result<usize> {
    let n = b.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let restart = restart.max(1);
    let mut iterations = 0;
    let mut tmp = vec![0.0; n];
    let mut z = vec![0.0; n];
    loop {
        apply(x, &mut tmp);
        let r: Vec<f64> = b.iter().zip(&tmp).map(|(b, a)| b - a).collect();
        let beta = dot(&r, &r).sqrt();
        if beta <= tolerance * bnorm {
            return Ok(iterations);
        }
        if iterations >= max_iterations {
            return Err(Error::NoConvergence(format!(
                "GMRES reached {iterations} iterations at relative residual {:e}",
                beta / bnorm
            )));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart && iterations < max_iterations {
            precondition(&v[k], &mut z);
            apply(&z, &mut tmp);
            let mut w = tmp.clone();
            for i in 0..=k {
                h[i][k] = dot(&w, &v[i]);
                for (wj, vj) in w.iter_mut().zip(&v[i]) {
                    *wj -= h[i][k] * vj;
                }
            }
            h[k + 1][k] = dot(&w, &w).sqrt();
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[k][k] / denom, h[k + 1][k] / denom) };
            cs[k] = c;
            sn[k] = s;
            let hk1 = h[k + 1][k];
            if hk1 > 0.0 {
                v.push(w.iter().map(|x| x / hk1).collect());
            }
            h[k][k] = c * h[k][k] + s * hk1;
            h[k + 1][k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            k += 1;
            iterations += 1;
            if g[k].abs() <= tolerance * bnorm || hk1 == 0.0 {
                break;
            }
        }
        // back substitution for the k x k upper-triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut u = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&v) {
            for (uj, vj) in u.iter_mut().zip(vi) {
                *uj += yi * vj;
            }
        }
        precondition(&u, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmres_solves_small_nonsymmetric_system() {
        let n = 40;
        let a = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                4.0 + i as f64 * 0.1
            } else {
                1.0 / (1.0 + (i as f64 - 2.0 * j as f64).abs())
            }
        });
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let apply = |v: &[f64], out: &mut [f64]| {
            let r = &a * nalgebra::DVector::from_column_slice(v);
            out.copy_from_slice(r.as_slice());
        };
        let mut x = vec![0.0; n];
        let it = gmres(&apply, &|r, o| o.copy_from_slice(r), &b, &mut x, 1e-12, 7, 500).unwrap();
        assert!(it > 7, "restart path exercised");
        let exact = a.lu().solve(&nalgebra::DVector::from_column_slice(&b)).unwrap();
        for (u, v) in x.iter().zip(exact.iter()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn gmres_reports_budget_exhaustion() {
        let n = 30;
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = v[(i + 1) % n];
            }
        };
        let b: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let mut x = vec![0.0; n];
        let err = gmres(&apply, &|r, o| o.copy_from_slice(r), &b, &mut x, 1e-12, 5, 12).unwrap_err();
        assert!(matches!(err, Error::NoConvergence(_)));
    }
}
