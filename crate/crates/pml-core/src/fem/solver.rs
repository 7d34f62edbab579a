use super::mesh::{triangle_area, Mesh, NodeTag};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Sparse symmetric matrix in CSR form, full (both triangles) storage.
pub(crate) struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }
}

/// Incomplete Cholesky factor on the lower-triangular pattern, with a
/// diagonal shift retried until the factorization exists.
struct Ic0 {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    diag_idx: Vec<usize>,
}

impl Ic0 {
    fn build(a: &Csr) -> Ic0 {
        // Lower-triangular pattern of A (col <= row), row-sorted.
        let n = a.n;
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            let mut cnt = 0;
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                if a.col_idx[k] <= i {
                    cnt += 1;
                }
            }
            row_ptr[i + 1] = row_ptr[i] + cnt;
        }
        let nnz = row_ptr[n];
        let mut col_idx = vec![0usize; nnz];
        let mut base = vec![0.0f64; nnz];
        let mut diag_idx = vec![0usize; n];
        for i in 0..n {
            let mut w = row_ptr[i];
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                if j <= i {
                    col_idx[w] = j;
                    base[w] = a.vals[k];
                    if j == i {
                        diag_idx[i] = w;
                    }
                    w += 1;
                }
            }
        }

        let mut shift = 0.0f64;
        'retry: loop {
            let mut vals = base.clone();
            if shift > 0.0 {
                for i in 0..n {
                    vals[diag_idx[i]] = base[diag_idx[i]] * (1.0 + shift);
                }
            }
            // Row-oriented IC(0).
            for i in 0..n {
                for ki in row_ptr[i]..row_ptr[i + 1] {
                    let j = col_idx[ki];
                    // Dot product of rows i and j over columns < j.
                    let mut sum = vals[ki];
                    let (mut pi, mut pj) = (row_ptr[i], row_ptr[j]);
                    let (ei, ej) = (row_ptr[i + 1], row_ptr[j + 1]);
                    while pi < ei && pj < ej {
                        let (ci, cj) = (col_idx[pi], col_idx[pj]);
                        if ci >= j || cj >= j {
                            break;
                        }
                        match ci.cmp(&cj) {
                            std::cmp::Ordering::Less => pi += 1,
                            std::cmp::Ordering::Greater => pj += 1,
                            std::cmp::Ordering::Equal => {
                                sum -= vals[pi] * vals[pj];
                                pi += 1;
                                pj += 1;
                            }
                        }
                    }
                    if j == i {
                        if sum <= 0.0 {
                            shift = if shift == 0.0 { 1e-3 } else { shift * 10.0 };
                            if shift > 1e3 {
                                // Fall back to a diagonal (Jacobi) factor.
                                let mut vals = base.clone();
                                for r in 0..n {
                                    for k in row_ptr[r]..row_ptr[r + 1] {
                                        vals[k] = 0.0;
                                    }
                                    vals[diag_idx[r]] = base[diag_idx[r]].abs().max(1e-300).sqrt();
                                }
                                return Ic0 { n, row_ptr, col_idx, vals, diag_idx };
                            }
                            continue 'retry;
                        }
                        vals[ki] = sum.sqrt();
                    } else {
                        vals[ki] = sum / vals[diag_idx[j]];
                    }
                }
            }
            return Ic0 { n, row_ptr, col_idx, vals, diag_idx };
        }
    }

    /// Solves L L^T z = r.
    fn apply(&self, r: &[f64], z: &mut [f64], scratch: &mut [f64]) {
        let y = scratch;
        for i in 0..self.n {
            let mut acc = r[i];
            for k in self.row_ptr[i]..self.diag_idx[i] {
                acc -= self.vals[k] * y[self.col_idx[k]];
            }
            y[i] = acc / self.vals[self.diag_idx[i]];
        }
        z.copy_from_slice(y);
        for i in (0..self.n).rev() {
            let zi = z[i] / self.vals[self.diag_idx[i]];
            z[i] = zi;
            for k in self.row_ptr[i]..self.diag_idx[i] {
                z[self.col_idx[k]] -= self.vals[k] * zi;
            }
        }
    }
}

/// Preconditioned conjugate gradients; returns iterations used.
fn pcg(a: &Csr, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> Result<usize> {
    let n = a.n;
    let ic = Ic0::build(a);
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    ic.apply(&r, &mut z, &mut scratch);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= rtol * bnorm {
            return Ok(it);
        }
        a.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::Solver { residual: rnorm / bnorm, iters: it });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        ic.apply(&r, &mut z, &mut scratch);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = dot(&r, &r).sqrt();
    if rnorm <= rtol * bnorm * 10.0 {
        // Close enough for a damped Newton step; the outer loop guards
        // progress through the energy decrease test.
        return Ok(max_iter);
    }
    Err(Error::Solver { residual: rnorm / bnorm, iters: max_iter })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-triangle geometry cached for assembly.
pub(crate) struct ElementData {
    pub area: Vec<f64>,
    /// Basis-function gradients, three 2-vectors per triangle.
    pub grad_phi: Vec<[[f64; 2]; 3]>,
}

impl ElementData {
    pub fn new(mesh: &Mesh) -> ElementData {
        let mut area = Vec::with_capacity(mesh.triangle_count());
        let mut grad_phi = Vec::with_capacity(mesh.triangle_count());
        for tri in &mesh.triangles {
            let (a, b, c) = (mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]);
            let ar = triangle_area(a, b, c);
            let inv = 1.0 / (2.0 * ar);
            grad_phi.push([
                [(b.y - c.y) * inv, (c.x - b.x) * inv],
                [(c.y - a.y) * inv, (a.x - c.x) * inv],
                [(a.y - b.y) * inv, (b.x - a.x) * inv],
            ]);
            area.push(ar);
        }
        ElementData { area, grad_phi }
    }

    pub fn gradient(&self, mesh: &Mesh, u: &[f64], t: usize) -> [f64; 2] {
        let tri = mesh.triangles[t];
        let g = &self.grad_phi[t];
        let mut gx = 0.0;
        let mut gy = 0.0;
        for k in 0..3 {
            gx += u[tri[k]] * g[k][0];
            gy += u[tri[k]] * g[k][1];
        }
        [gx, gy]
    }
}

pub(crate) struct System {
    free: Vec<usize>,
    free_of_node: Vec<usize>,
    pattern: Csr,
}

impl System {
    fn new(mesh: &Mesh) -> System {
        let free: Vec<usize> = (0..mesh.node_count())
            .filter(|&i| mesh.node_tags[i] == NodeTag::Interior)
            .collect();
        let mut free_of_node = vec![usize::MAX; mesh.node_count()];
        for (fi, &i) in free.iter().enumerate() {
            free_of_node[i] = fi;
        }
        // Sparsity pattern from node adjacency.
        let n = free.len();
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for tri in &mesh.triangles {
            for &i in tri {
                let fi = free_of_node[i];
                if fi == usize::MAX {
                    continue;
                }
                for &j in tri {
                    let fj = free_of_node[j];
                    if fj != usize::MAX {
                        neighbors[fi].push(fj);
                    }
                }
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        for (i, nb) in neighbors.iter_mut().enumerate() {
            nb.sort_unstable();
            nb.dedup();
            col_idx.extend_from_slice(nb);
            row_ptr[i + 1] = col_idx.len();
        }
        let vals = vec![0.0; col_idx.len()];
        System {
            free,
            free_of_node,
            pattern: Csr { n, row_ptr, col_idx, vals },
        }
    }
}

/// Regularized p-Dirichlet energy of the piecewise-linear field.
fn energy(mesh: &Mesh, elems: &ElementData, u: &[f64], p: f64, eps: f64) -> f64 {
    let terms: Vec<f64> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| {
            let g = elems.gradient(mesh, u, t);
            let s = eps * eps + g[0] * g[0] + g[1] * g[1];
            elems.area[t] / p * s.powf(p / 2.0)
        })
        .collect();
    terms.iter().sum()
}

/// Assembles the reduced gradient and Hessian of the regularized energy.
fn assemble(
    mesh: &Mesh,
    elems: &ElementData,
    sys: &mut System,
    u: &[f64],
    p: f64,
    eps: f64,
) -> Vec<f64> {
    struct Local {
        tri: [usize; 3],
        grad: [f64; 3],
        hess: [[f64; 3]; 3],
    }
    let locals: Vec<Local> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| {
            let tri = mesh.triangles[t];
            let gp = &elems.grad_phi[t];
            let g = elems.gradient(mesh, u, t);
            let s = eps * eps + g[0] * g[0] + g[1] * g[1];
            let w = s.powf((p - 2.0) / 2.0);
            let w2 = (p - 2.0) * s.powf((p - 4.0) / 2.0);
            let area = elems.area[t];
            let mut grad = [0.0; 3];
            let mut hess = [[0.0; 3]; 3];
            let gdot: Vec<f64> = (0..3)
                .map(|k| g[0] * gp[k][0] + g[1] * gp[k][1])
                .collect();
            for k in 0..3 {
                grad[k] = area * w * gdot[k];
                for l in 0..3 {
                    let lap = gp[k][0] * gp[l][0] + gp[k][1] * gp[l][1];
                    hess[k][l] = area * (w * lap + w2 * gdot[k] * gdot[l]);
                }
            }
            Local { tri, grad, hess }
        })
        .collect();

    // Deterministic sequential scatter.
    let n = sys.pattern.n;
    let mut rhs = vec![0.0f64; n];
    sys.pattern.vals.iter_mut().for_each(|v| *v = 0.0);
    for loc in &locals {
        for k in 0..3 {
            let fi = sys.free_of_node[loc.tri[k]];
            if fi == usize::MAX {
                continue;
            }
            rhs[fi] -= loc.grad[k];
            for l in 0..3 {
                let fj = sys.free_of_node[loc.tri[l]];
                if fj == usize::MAX {
                    continue;
                }
                let row = &sys.pattern.col_idx
                    [sys.pattern.row_ptr[fi]..sys.pattern.row_ptr[fi + 1]];
                let off = row.binary_search(&fj).expect("pattern covers adjacency");
                sys.pattern.vals[sys.pattern.row_ptr[fi] + off] += loc.hess[k][l];
            }
        }
    }
    rhs
}

pub(crate) struct SolveOutcome {
    pub u: Vec<f64>,
    pub energy: f64,
}

/// Damped Newton minimization at fixed (p, eps) down to the reduced
/// gradient tolerance. `u` holds full nodal values with the Dirichlet
/// data already imposed.
fn newton_stage(
    mesh: &Mesh,
    elems: &ElementData,
    sys: &mut System,
    u: &mut Vec<f64>,
    p: f64,
    eps: f64,
    tol: f64,
    max_iters: usize,
    damping: f64,
) -> Result<usize> {
    let mut j_cur = energy(mesh, elems, u, p, eps);
    for it in 0..max_iters {
        let rhs = assemble(mesh, elems, sys, u, p, eps);
        let gmax = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= tol {
            return Ok(it);
        }
        let mut delta = vec![0.0; rhs.len()];
        pcg(&sys.pattern, &rhs, &mut delta, 1e-8, 4000)?;
        // Backtracking on the energy.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = u.clone();
            for (fi, &i) in sys.free.iter().enumerate() {
                trial[i] += step * delta[fi];
            }
            let j_new = energy(mesh, elems, &trial, p, eps);
            if j_new <= j_cur * (1.0 + 1e-14) {
                *u = trial;
                j_cur = j_new;
                accepted = true;
                break;
            }
            step *= damping;
        }
        if !accepted {
            return Err(Error::Solver { residual: gmax, iters: it });
        }
    }
    let rhs = assemble(mesh, elems, sys, u, p, eps);
    let gmax = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if gmax <= tol {
        Ok(max_iters)
    } else {
        Err(Error::Solver { residual: gmax, iters: max_iters })
    }
}

/// Continuation driver: solves p = 2 exactly, then walks p toward the
/// target in 0.25 steps when it is far from 2, tightening the gradient
/// regularization geometrically down to `eps_final` at each p.
pub(crate) fn solve_capacitary_values(
    mesh: &Mesh,
    p: f64,
    eps_final: f64,
    newton_tol: f64,
    max_iters: usize,
    damping: f64,
    continuation_steps: usize,
) -> Result<SolveOutcome> {
    let elems = ElementData::new(mesh);
    let mut sys = System::new(mesh);

    let mut u = vec![0.0f64; mesh.node_count()];
    for i in 0..mesh.node_count() {
        if mesh.node_tags[i] == NodeTag::InnerCircle {
            u[i] = 1.0;
        }
    }
    // p = 2 is a single linear solve; use it as the universal warm start.
    let rhs = assemble(mesh, &elems, &mut sys, &u, 2.0, 1e-2);
    let mut delta = vec![0.0; rhs.len()];
    pcg(&sys.pattern, &rhs, &mut delta, 1e-12, 8000)?;
    for (fi, &i) in sys.free.iter().enumerate() {
        u[i] += delta[fi];
    }

    let mut p_stages: Vec<f64> = Vec::new();
    if (p - 2.0).abs() > 0.5 {
        let step = 0.25 * (p - 2.0).signum();
        let mut q = 2.0 + step;
        while (p - q) * step.signum() > 1e-12 {
            p_stages.push(q);
            q += step;
        }
    }
    p_stages.push(p);

    let mut newton_total = 0usize;
    let eps_start: f64 = 1e-2;
    let stages = continuation_steps.max(1);
    for (si, &ps) in p_stages.iter().enumerate() {
        let last_p = si + 1 == p_stages.len();
        // Intermediate p stages only need a moderate epsilon.
        let eps_target = if last_p { eps_final } else { eps_final.max(1e-5) };
        let n_eps = if last_p { stages } else { 2 };
        for k in 0..=n_eps {
            let t = k as f64 / n_eps as f64;
            let eps = eps_start * (eps_target / eps_start).powf(t);
            let last = last_p && k == n_eps;
            let tol = if last { newton_tol } else { (newton_tol * 1e3).min(1e-4) };
            newton_total += newton_stage(
                mesh, &elems, &mut sys, &mut u, ps, eps, tol, max_iters, damping,
            )?;
        }
    }

    let _ = newton_total;
    let j = energy(mesh, &elems, &u, p, eps_final);
    Ok(SolveOutcome { u, energy: j })
}

/// The epsilon-free discrete residual of the weak form at the free
/// nodes: the flux `|g|^{p-2} g` tested against every interior hat.
pub(crate) fn weak_residual_linf(mesh: &Mesh, elems: &ElementData, u: &[f64], p: f64) -> f64 {
    let sys_free: Vec<bool> = mesh
        .node_tags
        .iter()
        .map(|t| *t == NodeTag::Interior)
        .collect();
    let mut res = vec![0.0f64; mesh.node_count()];
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangles[t];
        let g = elems.gradient(mesh, u, t);
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        let w = if gn > 0.0 { gn.powf(p - 2.0) } else { 0.0 };
        for k in 0..3 {
            let gp = elems.grad_phi[t][k];
            res[tri[k]] += elems.area[t] * w * (g[0] * gp[0] + g[1] * gp[1]);
        }
    }
    res.iter()
        .zip(&sys_free)
        .filter(|(_, f)| **f)
        .fold(0.0f64, |m, (v, _)| m.max(v.abs()))
}

/// Nodal flux of the epsilon-free weak form at every node; boundary
/// nodes carry the discrete Riesz mass (with a sign).
pub(crate) fn nodal_flux(mesh: &Mesh, elems: &ElementData, u: &[f64], p: f64) -> Vec<f64> {
    let locals: Vec<([usize; 3], [f64; 3])> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| {
            let tri = mesh.triangles[t];
            let g = elems.gradient(mesh, u, t);
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            let w = if gn > 0.0 { gn.powf(p - 2.0) } else { 0.0 };
            let mut out = [0.0; 3];
            for k in 0..3 {
                let gp = elems.grad_phi[t][k];
                out[k] = elems.area[t] * w * (g[0] * gp[0] + g[1] * gp[1]);
            }
            (tri, out)
        })
        .collect();
    let mut flux = vec![0.0f64; mesh.node_count()];
    for (tri, vals) in locals {
        for k in 0..3 {
            flux[tri[k]] += vals[k];
        }
    }
    flux
}

