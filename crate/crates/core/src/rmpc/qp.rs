//! Dense primal-dual interior-point solver for small convex QPs
//!
//! ```txt
//!     min  1/2 x'Hx + q'x
//!     s.t. a_i'x <= b_i,   i = 1..m
//! ```
//!
//! `H` is dense and positive semidefinite; constraint rows are stored sparse
//! because most of them (bounds, epigraph rows) touch one or two variables.
//! Mehrotra predictor-corrector on the normal equations. Variables flagged as
//! local are eliminated block-wise before factorization, so only the Schur
//! complement on the remaining variables is factored densely.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Debug, Clone, Default)]
pub struct SparseRow {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(i: usize, v: f64) -> Self {
        Self {
            idx: vec![i],
            val: vec![v],
        }
    }

    pub fn push(&mut self, i: usize, v: f64) {
        self.idx.push(i);
        self.val.push(v);
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| v * x[i]).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Qp {
    pub h: DMatrix<f64>,
    pub q: DVector<f64>,
    pub rows: Vec<SparseRow>,
    pub b: Vec<f64>,
    /// Variables to eliminate block-wise (empty: none). Only a speed hint:
    /// groups of local variables linked by rows or by `H` must stay small,
    /// otherwise the solver factors everything densely.
    pub local: Vec<bool>,
}

impl Qp {
    pub fn new(h: DMatrix<f64>, q: DVector<f64>, rows: Vec<SparseRow>, b: Vec<f64>) -> Self {
        Self {
            h,
            q,
            rows,
            b,
            local: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 80,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per row, nonnegative.
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest `a` in (0, 1] with `v + a * dv >= 0`, scaled by `frac`.
fn max_step(v: &[f64], dv: &[f64], frac: f64) -> f64 {
    let mut a: f64 = 1.0;
    for (&vi, &dvi) in v.iter().zip(dv) {
        if dvi < 0.0 {
            a = a.min(-frac * vi / dvi);
        }
    }
    a.min(1.0)
}

const MAX_GROUP: usize = 12;

/// Sparsity bookkeeping for block elimination.
struct Blocks {
    /// dense variable -> position in the Schur complement
    dense: Vec<usize>,
    groups: Vec<Group>,
    /// per row: dense entries as (schur position, value)
    row_dense: Vec<Vec<(usize, f64)>>,
    /// per row: group and entries as (position in group, value)
    row_local: Vec<Option<(usize, Vec<(usize, f64)>)>>,
    /// per row: index of each dense entry in its group's `touched` list
    row_touched: Vec<Vec<usize>>,
}

struct Group {
    vars: Vec<usize>,
    /// Schur positions coupled to this group
    touched: Vec<usize>,
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut i = i;
    while parent[i] != r {
        let next = parent[i];
        parent[i] = r;
        i = next;
    }
    r
}

impl Blocks {
    fn build(qp: &Qp) -> Self {
        let n = qp.q.len();
        let mut local = if qp.local.len() == n { qp.local.clone() } else { vec![false; n] };
        loop {
            if let Some(b) = Self::try_build(qp, &local) {
                return b;
            }
            local = vec![false; n];
        }
    }

    fn try_build(qp: &Qp, local: &[bool]) -> Option<Self> {
        let n = qp.q.len();
        let mut parent: Vec<usize> = (0..n).collect();
        for row in &qp.rows {
            let mut first = None;
            for &i in &row.idx {
                if local[i] {
                    match first {
                        None => first = Some(i),
                        Some(f) => {
                            let (a, b) = (find(&mut parent, f), find(&mut parent, i));
                            parent[a] = b;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                if local[i] && local[j] && qp.h[(i, j)] != 0.0 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let dense: Vec<usize> = (0..n).filter(|&i| !local[i]).collect();
        let mut dense_pos = vec![usize::MAX; n];
        for (p, &i) in dense.iter().enumerate() {
            dense_pos[i] = p;
        }
        let mut group_of_root = vec![usize::MAX; n];
        let mut groups: Vec<Group> = Vec::new();
        let mut slot = vec![(usize::MAX, usize::MAX); n];
        for i in 0..n {
            if !local[i] {
                continue;
            }
            let r = find(&mut parent, i);
            if group_of_root[r] == usize::MAX {
                group_of_root[r] = groups.len();
                groups.push(Group {
                    vars: Vec::new(),
                    touched: Vec::new(),
                });
            }
            let g = group_of_root[r];
            slot[i] = (g, groups[g].vars.len());
            groups[g].vars.push(i);
            if groups[g].vars.len() > MAX_GROUP {
                return None;
            }
        }

        let mut row_dense = Vec::with_capacity(qp.rows.len());
        let mut row_local = Vec::with_capacity(qp.rows.len());
        let mut row_touched = Vec::with_capacity(qp.rows.len());
        for row in &qp.rows {
            let mut d = Vec::new();
            let mut l = Vec::new();
            let mut g = None;
            for (&i, &v) in row.idx.iter().zip(&row.val) {
                if local[i] {
                    g = Some(slot[i].0);
                    l.push((slot[i].1, v));
                } else {
                    d.push((dense_pos[i], v));
                }
            }
            let mut t = Vec::new();
            if let Some(g) = g {
                for &(p, _) in &d {
                    let touched = &mut groups[g].touched;
                    let k = match touched.iter().position(|&x| x == p) {
                        Some(k) => k,
                        None => {
                            touched.push(p);
                            touched.len() - 1
                        }
                    };
                    t.push(k);
                }
            }
            row_dense.push(d);
            row_local.push(g.map(|g| (g, l)));
            row_touched.push(t);
        }
        // dense-local coupling through H
        for g in groups.iter_mut() {
            for &lv in &g.vars {
                for &dv in &dense {
                    if qp.h[(dv, lv)] != 0.0 && !g.touched.contains(&dense_pos[dv]) {
                        g.touched.push(dense_pos[dv]);
                    }
                }
            }
        }
        Some(Self {
            dense,
            groups,
            row_dense,
            row_local,
            row_touched,
        })
    }
}

/// Factored normal matrix `H + A' W A`.
struct Factor {
    schur: Cholesky<f64, Dyn>,
    /// per group: Cholesky of its diagonal block and the coupling block
    /// (touched x vars)
    diag: Vec<Cholesky<f64, Dyn>>,
    coupling: Vec<DMatrix<f64>>,
}

fn chol_with_reg(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    // regularization relative to the diagonal, which spans many decades
    // near convergence
    let scale = m.diagonal().amax().max(1.0);
    let mut reg = 0.0;
    loop {
        let mut kk = m.clone();
        if reg > 0.0 {
            for i in 0..kk.nrows() {
                kk[(i, i)] += reg * scale;
            }
        }
        if let Some(c) = kk.cholesky() {
            return Some(c);
        }
        reg = if reg == 0.0 { 1e-15 } else { reg * 100.0 };
        if reg > 1e-3 {
            return None;
        }
    }
}

impl Factor {
    fn new(qp: &Qp, blk: &Blocks, w: &[f64]) -> Option<Self> {
        let nd = blk.dense.len();
        let mut k = DMatrix::<f64>::zeros(nd, nd);
        for (a, &ia) in blk.dense.iter().enumerate() {
            for (b, &ib) in blk.dense.iter().enumerate() {
                k[(a, b)] = qp.h[(ia, ib)];
            }
        }
        let mut diag: Vec<DMatrix<f64>> = blk
            .groups
            .iter()
            .map(|g| DMatrix::from_fn(g.vars.len(), g.vars.len(), |a, b| qp.h[(g.vars[a], g.vars[b])]))
            .collect();
        let mut coupling: Vec<DMatrix<f64>> = blk
            .groups
            .iter()
            .map(|g| {
                DMatrix::from_fn(g.touched.len(), g.vars.len(), |a, b| {
                    qp.h[(blk.dense[g.touched[a]], g.vars[b])]
                })
            })
            .collect();

        for (i, &wi) in w.iter().enumerate() {
            let d = &blk.row_dense[i];
            for &(pa, va) in d {
                let wa = wi * va;
                for &(pb, vb) in d {
                    k[(pa, pb)] += wa * vb;
                }
            }
            if let Some((g, l)) = &blk.row_local[i] {
                let dg = &mut diag[*g];
                for &(pa, va) in l {
                    for &(pb, vb) in l {
                        dg[(pa, pb)] += wi * va * vb;
                    }
                }
                let cg = &mut coupling[*g];
                for (&(_, va), &t) in d.iter().zip(&blk.row_touched[i]) {
                    for &(pb, vb) in l {
                        cg[(t, pb)] += wi * va * vb;
                    }
                }
            }
        }

        let mut diag_f = Vec::with_capacity(diag.len());
        for (g, dg) in blk.groups.iter().zip(diag) {
            let f = chol_with_reg(&dg)?;
            let cg = &coupling[diag_f.len()];
            if !g.touched.is_empty() {
                // K_dd -= C D^-1 C'
                let sol = f.solve(&cg.transpose());
                let upd = cg * sol;
                for (a, &pa) in g.touched.iter().enumerate() {
                    for (b, &pb) in g.touched.iter().enumerate() {
                        k[(pa, pb)] -= upd[(a, b)];
                    }
                }
            }
            diag_f.push(f);
        }
        Some(Self {
            schur: chol_with_reg(&k)?,
            diag: diag_f,
            coupling,
        })
    }

    fn solve(&self, blk: &Blocks, rhs: &DVector<f64>) -> DVector<f64> {
        let nd = blk.dense.len();
        let mut rd = DVector::from_fn(nd, |p, _| rhs[blk.dense[p]]);
        let mut locals = Vec::with_capacity(blk.groups.len());
        for (gi, g) in blk.groups.iter().enumerate() {
            let rl = DVector::from_fn(g.vars.len(), |a, _| rhs[g.vars[a]]);
            let y = self.diag[gi].solve(&rl);
            let cy = &self.coupling[gi] * &y;
            for (a, &pa) in g.touched.iter().enumerate() {
                rd[pa] -= cy[a];
            }
            locals.push(rl);
        }
        let xd = self.schur.solve(&rd);
        let mut x = DVector::zeros(rhs.len());
        for (p, &i) in blk.dense.iter().enumerate() {
            x[i] = xd[p];
        }
        for (gi, g) in blk.groups.iter().enumerate() {
            let xt = DVector::from_fn(g.touched.len(), |a, _| xd[g.touched[a]]);
            let r = &locals[gi] - self.coupling[gi].transpose() * xt;
            let xl = self.diag[gi].solve(&r);
            for (a, &i) in g.vars.iter().enumerate() {
                x[i] = xl[a];
            }
        }
        x
    }
}

struct Newton {
    dx: DVector<f64>,
    ds: Vec<f64>,
    dl: Vec<f64>,
}

/// Mehrotra's heuristic: take the full affine step from the trivial point,
/// then shift slacks and multipliers to be safely positive and balanced.
fn start_point(x: &mut DVector<f64>, s: &mut [f64], lam: &mut [f64], aff: &Newton) {
    x.axpy(1.0, &aff.dx, 1.0);
    for i in 0..s.len() {
        s[i] += aff.ds[i];
        lam[i] += aff.dl[i];
    }
    if s.is_empty() {
        return;
    }
    let shift_s = (-1.5 * s.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0);
    let shift_l = (-1.5 * lam.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0);
    s.iter_mut().for_each(|v| *v += shift_s);
    lam.iter_mut().for_each(|v| *v += shift_l);
    let prod: f64 = s.iter().zip(lam.iter()).map(|(a, b)| a * b).sum();
    let sum_s: f64 = s.iter().sum();
    let sum_l: f64 = lam.iter().sum();
    let (ds, dl) = if prod > 0.0 { (0.5 * prod / sum_l, 0.5 * prod / sum_s) } else { (1.0, 1.0) };
    s.iter_mut().for_each(|v| *v = (*v + ds).max(1e-8));
    lam.iter_mut().for_each(|v| *v = (*v + dl).max(1e-8));
}

pub fn solve_qp(qp: &Qp, opts: &QpOptions) -> QpSolution {
    let n = qp.q.len();
    let m = qp.rows.len();
    debug_assert_eq!(qp.b.len(), m);
    debug_assert_eq!(qp.h.nrows(), n);
    let blk = Blocks::build(qp);

    // the first pass only computes the starting point
    let mut x = DVector::<f64>::zeros(n);
    let mut s = vec![1.0; m];
    let mut lam = vec![1.0; m];
    let mut started = false;

    let q_norm = qp.q.amax();
    let b_norm = qp.b.iter().fold(0.0_f64, |a, v| a.max(v.abs()));

    let mut rd = DVector::<f64>::zeros(n);
    let mut rp = vec![0.0; m];
    let mut w = vec![0.0; m];

    let mut iter = 0;
    while iter < opts.max_iter {
        // residuals
        rd.copy_from(&qp.q);
        rd.gemv(1.0, &qp.h, &x, 1.0);
        for (row, &l) in qp.rows.iter().zip(&lam) {
            for (&i, &v) in row.idx.iter().zip(&row.val) {
                rd[i] += v * l;
            }
        }
        for i in 0..m {
            rp[i] = qp.rows[i].dot(x.as_slice()) + s[i] - qp.b[i];
        }
        let mu = if m > 0 {
            s.iter().zip(&lam).map(|(a, b)| a * b).sum::<f64>() / m as f64
        } else {
            0.0
        };
        let rd_norm = rd.amax();
        let rp_norm = rp.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if started && rd_norm <= opts.tol * (1.0 + q_norm) && rp_norm <= opts.tol * (1.0 + b_norm) && mu <= opts.tol {
            return QpSolution {
                x,
                lambda: lam,
                iterations: iter,
                converged: true,
            };
        }

        for i in 0..m {
            w[i] = lam[i] / s[i];
        }
        let Some(fac) = Factor::new(qp, &blk, &w) else {
            return QpSolution {
                x,
                lambda: lam,
                iterations: iter,
                converged: false,
            };
        };

        let solve = |rc: &[f64]| -> Newton {
            // rhs = -rd + A' S^-1 (rc - Lam rp)
            let mut rhs = -&rd;
            for i in 0..m {
                let t = (rc[i] - lam[i] * rp[i]) / s[i];
                let row = &qp.rows[i];
                for (&j, &v) in row.idx.iter().zip(&row.val) {
                    rhs[j] += v * t;
                }
            }
            let dx = fac.solve(&blk, &rhs);
            let mut ds = vec![0.0; m];
            let mut dl = vec![0.0; m];
            for i in 0..m {
                ds[i] = -rp[i] - qp.rows[i].dot(dx.as_slice());
                dl[i] = (-rc[i] - lam[i] * ds[i]) / s[i];
            }
            Newton { dx, ds, dl }
        };

        // predictor
        let rc_aff: Vec<f64> = s.iter().zip(&lam).map(|(a, b)| a * b).collect();
        let aff = solve(&rc_aff);
        if !started {
            start_point(&mut x, &mut s, &mut lam, &aff);
            started = true;
            continue;
        }
        let ap = max_step(&s, &aff.ds, 1.0);
        let ad = max_step(&lam, &aff.dl, 1.0);
        let mu_aff = if m > 0 {
            (0..m)
                .map(|i| (s[i] + ap * aff.ds[i]) * (lam[i] + ad * aff.dl[i]))
                .sum::<f64>()
                / m as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };

        // corrector
        let rc: Vec<f64> = (0..m)
            .map(|i| s[i] * lam[i] + aff.ds[i] * aff.dl[i] - sigma * mu)
            .collect();
        let dir = solve(&rc);
        let a = max_step(&s, &dir.ds, 0.99).min(max_step(&lam, &dir.dl, 0.99));

        x.axpy(a, &dir.dx, 1.0);
        for i in 0..m {
            s[i] += a * dir.ds[i];
            lam[i] += a * dir.dl[i];
        }
        iter += 1;
    }

    QpSolution {
        x,
        lambda: lam,
        iterations: opts.max_iter,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unconstrained_minimum_inside_box() {
        // min (x-1)^2 + (y+2)^2, |x|,|y| <= 5
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0]));
        let q = DVector::from_vec(vec![-2.0, 4.0]);
        let mut rows = Vec::new();
        let mut b = Vec::new();
        for i in 0..2 {
            rows.push(SparseRow::single(i, 1.0));
            b.push(5.0);
            rows.push(SparseRow::single(i, -1.0));
            b.push(5.0);
        }
        let sol = solve_qp(&Qp::new(h, q, rows, b), &QpOptions::default());
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.x[1], -2.0, epsilon = 1e-8);
    }

    #[test]
    fn lp_with_tiny_regularization_hits_vertex() {
        // min -x - y  s.t. x + y <= 1, x,y >= 0, x <= 0.3
        let h = DMatrix::from_diagonal_element(2, 2, 1e-9);
        let q = DVector::from_vec(vec![-1.0, -2.0]);
        let mut r = SparseRow::new();
        r.push(0, 1.0);
        r.push(1, 1.0);
        let rows = vec![r, SparseRow::single(0, -1.0), SparseRow::single(1, -1.0)];
        let b = vec![1.0, 0.0, 0.0];
        let sol = solve_qp(&Qp::new(h, q, rows, b), &QpOptions::default());
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.x[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-6);
        // multiplier of the coupling row equals the marginal value of y
        assert_abs_diff_eq!(sol.lambda[0], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn active_constraint_multiplier() {
        // min 1/2 x^2 - 3x, x <= 1  -> x = 1, lambda = 2
        let h = DMatrix::from_element(1, 1, 1.0);
        let q = DVector::from_vec(vec![-3.0]);
        let sol = solve_qp(
            &Qp::new(h, q, vec![SparseRow::single(0, 1.0)], vec![1.0]),
            &QpOptions::default(),
        );
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.lambda[0], 2.0, epsilon = 1e-7);
    }

    /// Stage-structured problem: 3 dense "inputs" per stage shared across
    /// stages, 3 epigraph-like locals per stage tied to their stage.
    fn staged(stages: usize) -> Qp {
        let nd = 3 * stages;
        let n = nd + 3 * stages;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..nd {
            h[(i, i)] = 1.0 + 0.1 * i as f64;
            if i + 1 < nd {
                h[(i, i + 1)] = 0.2;
                h[(i + 1, i)] = 0.2;
            }
        }
        for i in nd..n {
            h[(i, i)] = 1e-5;
        }
        let q = DVector::from_fn(n, |i, _| if i < nd { (i as f64 * 0.7).sin() } else { 1.0 });
        let mut rows = Vec::new();
        let mut b = Vec::new();
        for k in 0..stages {
            for j in 0..3 {
                let (u, t) = (3 * k + j, nd + 3 * k + j);
                // |u - r| <= t
                let r = 0.3 * j as f64 - 0.2;
                let mut a = SparseRow::new();
                a.push(u, 1.0);
                a.push(t, -1.0);
                rows.push(a);
                b.push(r);
                let mut a = SparseRow::new();
                a.push(u, -1.0);
                a.push(t, -1.0);
                rows.push(a);
                b.push(-r);
            }
            // cumulative coupling of every earlier input with this stage's locals
            let mut a = SparseRow::new();
            for i in 0..3 * (k + 1) {
                a.push(i, 0.5);
            }
            a.push(nd + 3 * k, -1.0);
            a.push(nd + 3 * k + 1, 0.3);
            rows.push(a);
            b.push(0.4);
            for i in 0..3 {
                rows.push(SparseRow::single(3 * k + i, 1.0));
                b.push(1.0);
                rows.push(SparseRow::single(3 * k + i, -1.0));
                b.push(1.0);
            }
        }
        Qp::new(h, q, rows, b)
    }

    #[test]
    fn block_elimination_matches_dense() {
        let dense = staged(5);
        let mut blocked = dense.clone();
        let nd = 15;
        blocked.local = (0..dense.q.len()).map(|i| i >= nd).collect();
        let a = solve_qp(&dense, &QpOptions::default());
        let b = solve_qp(&blocked, &QpOptions::default());
        assert!(a.converged && b.converged);
        for (x, y) in a.x.iter().zip(b.x.iter()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-7);
        }
        for (x, y) in a.lambda.iter().zip(&b.lambda) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-6);
        }
    }

    #[test]
    fn oversized_local_group_falls_back_to_dense() {
        let dense = staged(5);
        let mut all_local = dense.clone();
        all_local.local = vec![true; dense.q.len()];
        let a = solve_qp(&dense, &QpOptions::default());
        let b = solve_qp(&all_local, &QpOptions::default());
        assert!(b.converged);
        for (x, y) in a.x.iter().zip(b.x.iter()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-7);
        }
    }
}
