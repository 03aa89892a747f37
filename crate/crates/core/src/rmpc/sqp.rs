//! Sequential quadratic programming with an elastic (l1 exact-penalty)
//! subproblem, an l-infinity trust region on the rates and a second-order
//! correction when a step is rejected by the penalty merit function.
//!
//! Variables per step `k` (block of 9): rates `u_k` (4), epigraph bounds
//! `s_k >= |u_k - r_k|` (4), slack `eps_k` (1). Every linear constraint is
//! kept hard in the subproblem; each nonlinear row gets an elastic variable.
//! The Lagrangian Hessian is built from the analytic second derivatives of
//! the end-effector radius and height and made positive semidefinite by
//! dropping negative diagonal curvature.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::qp::{solve_qp, Qp, QpOptions, SparseRow};
use super::{
    rmpc_tracking_cost, RmpcProblem, RmpcSolution, SolveStatus, SolverOptions, ROWS_PER_STEP,
};
use crate::arm_model::{self, radial_height_derivatives, ControlInput, RadialHeightDerivatives};

const BLOCK: usize = 9;
const PROX: f64 = 1e-5;
const TR_INIT: f64 = 0.5;
const TR_MAX: f64 = 4.0;

#[inline]
fn iu(k: usize, i: usize) -> usize {
    BLOCK * k + i
}
#[inline]
fn is(k: usize, i: usize) -> usize {
    BLOCK * k + 4 + i
}
#[inline]
fn ie(k: usize) -> usize {
    BLOCK * k + 8
}

/// (min, max) of cos over [a, b].
fn cos_range(a: f64, b: f64) -> (f64, f64) {
    if b - a >= TAU {
        return (-1.0, 1.0);
    }
    let (ca, cb) = (a.cos(), b.cos());
    let hi = if TAU * (a / TAU).ceil() <= b { 1.0 } else { ca.max(cb) };
    let lo = if PI + TAU * ((a - PI) / TAU).ceil() <= b {
        -1.0
    } else {
        ca.min(cb)
    };
    (lo, hi)
}

fn sin_range(a: f64, b: f64) -> (f64, f64) {
    cos_range(a - FRAC_PI_2, b - FRAC_PI_2)
}

/// Joint bounds at predicted step `k` (state `x_{k+1}`), relaxed to the
/// fastest possible return when the initial state is outside the limits.
struct JointBounds {
    lo: Vec<[f64; 4]>,
    hi: Vec<[f64; 4]>,
}

fn joint_bounds(p: &RmpcProblem) -> JointBounds {
    let x0 = p.initial.to_array();
    let mut lo = Vec::with_capacity(p.horizon);
    let mut hi = Vec::with_capacity(p.horizon);
    for k in 0..p.horizon {
        let t = (k + 1) as f64 * p.dt;
        let mut l = [0.0; 4];
        let mut h = [0.0; 4];
        for i in 0..4 {
            l[i] = p.joint_limits.lower[i].min(x0[i] + t * p.input_limits.upper[i]);
            h[i] = p.joint_limits.upper[i].max(x0[i] + t * p.input_limits.lower[i]);
        }
        lo.push(l);
        hi.push(h);
    }
    JointBounds { lo, hi }
}

/// Interval reasoning over the reachable angle box at each step. Radius and
/// height are separable in the angles, so their exact ranges over the box are
/// available; an empty intersection with the constraints proves infeasibility.
fn certify_infeasible(p: &RmpcProblem, jb: &JointBounds) -> Option<usize> {
    let x0 = p.initial.to_array();
    let g = &p.geometry;
    for k in 0..p.horizon {
        let t = (k + 1) as f64 * p.dt;
        let mut boxes = [(0.0, 0.0); 3];
        for (i, bx) in boxes.iter_mut().enumerate() {
            let a = (x0[i] + t * p.input_limits.lower[i]).max(jb.lo[k][i]);
            let b = (x0[i] + t * p.input_limits.upper[i]).min(jb.hi[k][i]);
            if a > b {
                return Some(k);
            }
            *bx = (a, b);
        }
        let (ca_lo, ca_hi) = cos_range(boxes[0].0, boxes[0].1);
        let (sa_lo, sa_hi) = sin_range(boxes[0].0, boxes[0].1);
        let (cb_lo, cb_hi) = cos_range(boxes[1].0, boxes[1].1);
        let (sb_lo, sb_hi) = sin_range(boxes[1].0, boxes[1].1);
        let (cg_lo, cg_hi) = cos_range(boxes[2].0, boxes[2].1);
        let (sg_lo, sg_hi) = sin_range(boxes[2].0, boxes[2].1);

        let z_hi = g.l1 * ca_hi + g.l2 * sb_hi - g.l3 * cg_lo;
        let z_lo = g.l1 * ca_lo + g.l2 * sb_lo - g.l3 * cg_hi;
        let rho_hi = -g.l1 * sa_lo + g.l2 * cb_hi + g.l3 * sg_hi;
        let rho_lo = -g.l1 * sa_hi + g.l2 * cb_lo + g.l3 * sg_lo;
        let rho2_min = if rho_lo <= 0.0 && rho_hi >= 0.0 {
            0.0
        } else {
            (rho_lo * rho_lo).min(rho_hi * rho_hi)
        };
        let margin = 1e-9;
        let r = p.tightened.radii[k];
        if p.tightened.floors[k] - p.eps_max > z_hi + margin
            || z_lo > p.tightened.z_max + margin
            || rho2_min > r * r + margin
        {
            return Some(k);
        }
    }
    None
}

struct Eval {
    derivs: Vec<RadialHeightDerivatives>,
    /// nonlinear constraint values, `ROWS_PER_STEP` per step
    c: Vec<f64>,
}

struct Sqp<'a> {
    p: &'a RmpcProblem,
    np: usize,
    n: usize,
    weights: [f64; 4],
    refs: Vec<[f64; 4]>,
    lin_rows: Vec<SparseRow>,
    lin_b: Vec<f64>,
}

impl<'a> Sqp<'a> {
    fn new(p: &'a RmpcProblem, jb: &JointBounds) -> Self {
        let np = p.horizon;
        let n = BLOCK * np;
        let refs: Vec<[f64; 4]> = (0..np).map(|k| p.reference_at(k)).collect();
        let weights = p.weights.rate_weights();
        let mut rows = Vec::new();
        let mut b = Vec::new();
        let x0 = p.initial.to_array();
        for k in 0..np {
            for i in 0..4 {
                rows.push(SparseRow::single(iu(k, i), 1.0));
                b.push(p.input_limits.upper[i]);
                rows.push(SparseRow::single(iu(k, i), -1.0));
                b.push(-p.input_limits.lower[i]);

                // a zero-weight axis has no epigraph: its auxiliary would be
                // a free direction of the subproblem
                if weights[i] > 0.0 {
                    let mut r = SparseRow::new();
                    r.push(iu(k, i), 1.0);
                    r.push(is(k, i), -1.0);
                    rows.push(r);
                    b.push(refs[k][i]);
                    let mut r = SparseRow::new();
                    r.push(iu(k, i), -1.0);
                    r.push(is(k, i), -1.0);
                    rows.push(r);
                    b.push(-refs[k][i]);
                }

                // joint limits on x_{k+1}
                let mut up = SparseRow::new();
                let mut dn = SparseRow::new();
                for j in 0..=k {
                    up.push(iu(j, i), p.dt);
                    dn.push(iu(j, i), -p.dt);
                }
                rows.push(up);
                b.push(jb.hi[k][i] - x0[i]);
                rows.push(dn);
                b.push(x0[i] - jb.lo[k][i]);
            }
            rows.push(SparseRow::single(ie(k), 1.0));
            b.push(p.eps_max);
            rows.push(SparseRow::single(ie(k), -1.0));
            b.push(0.0);
        }
        Self {
            p,
            np,
            n,
            weights,
            refs,
            lin_rows: rows,
            lin_b: b,
        }
    }

    fn controls(&self, z: &[f64]) -> Vec<ControlInput> {
        (0..self.np)
            .map(|k| ControlInput::new(z[iu(k, 0)], z[iu(k, 1)], z[iu(k, 2)], z[iu(k, 3)]))
            .collect()
    }

    fn objective(&self, z: &[f64]) -> f64 {
        (0..self.np)
            .map(|k| {
                (0..4).map(|i| self.weights[i] * z[is(k, i)]).sum::<f64>() + self.p.weights.c4 * z[ie(k)]
            })
            .sum()
    }

    fn gradient(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.n);
        for k in 0..self.np {
            for i in 0..4 {
                g[is(k, i)] = self.weights[i];
            }
            g[ie(k)] = self.p.weights.c4;
        }
        g
    }

    fn evaluate(&self, z: &[f64]) -> Eval {
        let p = self.p;
        let mut x = p.initial;
        let mut derivs = Vec::with_capacity(self.np);
        let mut c = Vec::with_capacity(ROWS_PER_STEP * self.np);
        for k in 0..self.np {
            let u = ControlInput::new(z[iu(k, 0)], z[iu(k, 1)], z[iu(k, 2)], z[iu(k, 3)]);
            x = arm_model::step(&x, &u, p.dt);
            let d = radial_height_derivatives(&x, &p.geometry);
            let r = p.tightened.radii[k];
            c.push(d.rho * d.rho - r * r);
            c.push(p.tightened.floors[k] - z[ie(k)] - d.z);
            c.push(d.z - p.tightened.z_max);
            derivs.push(d);
        }
        Eval { derivs, c }
    }

    /// Gradient rows of the nonlinear constraints, with the elastic column
    /// appended at `n + j`.
    fn nonlinear_rows(&self, ev: &Eval) -> Vec<SparseRow> {
        let dt = self.p.dt;
        let mut rows = Vec::with_capacity(ROWS_PER_STEP * self.np);
        for k in 0..self.np {
            let d = &ev.derivs[k];
            let mut radial = SparseRow::new();
            let mut floor = SparseRow::new();
            let mut ceil = SparseRow::new();
            for j in 0..=k {
                for a in 0..3 {
                    radial.push(iu(j, a), 2.0 * d.rho * d.d_rho[a] * dt);
                    floor.push(iu(j, a), -d.d_z[a] * dt);
                    ceil.push(iu(j, a), d.d_z[a] * dt);
                }
            }
            floor.push(ie(k), -1.0);
            let base = self.n + ROWS_PER_STEP * k;
            radial.push(base, -1.0);
            floor.push(base + 1, -1.0);
            ceil.push(base + 2, -1.0);
            rows.push(radial);
            rows.push(floor);
            rows.push(ceil);
        }
        rows
    }

    fn linear_violation(&self, z: &[f64]) -> f64 {
        self.lin_rows
            .iter()
            .zip(&self.lin_b)
            .map(|(r, &b)| (r.dot(z) - b).max(0.0))
            .sum()
    }

    fn infeasibility(&self, z: &[f64], ev: &Eval) -> f64 {
        ev.c.iter().map(|c| c.max(0.0)).sum::<f64>() + self.linear_violation(z)
    }

    fn max_violation(&self, z: &[f64], ev: &Eval) -> f64 {
        let nl = ev.c.iter().fold(0.0_f64, |a, &c| a.max(c));
        let lin = self
            .lin_rows
            .iter()
            .zip(&self.lin_b)
            .fold(0.0_f64, |a, (r, &b)| a.max(r.dot(z) - b));
        nl.max(lin)
    }

    /// Convexified Lagrangian Hessian over `[z, elastic]`.
    fn hessian(&self, ev: &Eval, lam_nl: &[f64]) -> DMatrix<f64> {
        let np = self.np;
        let total = self.n + ROWS_PER_STEP * np;
        let mut h = DMatrix::<f64>::zeros(total, total);
        // per-step curvature in (alpha, beta, gamma)
        let mut m: Vec<[[f64; 3]; 3]> = Vec::with_capacity(np);
        for k in 0..np {
            let d = &ev.derivs[k];
            let (lr, lf, lc) = (
                lam_nl[ROWS_PER_STEP * k],
                lam_nl[ROWS_PER_STEP * k + 1],
                lam_nl[ROWS_PER_STEP * k + 2],
            );
            let mut mk = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    mk[a][b] = 2.0 * lr * d.d_rho[a] * d.d_rho[b];
                }
                let diag = 2.0 * lr * d.rho * d.dd_rho[a] - lf * d.dd_z[a] + lc * d.dd_z[a];
                mk[a][a] += diag.max(0.0);
            }
            m.push(mk);
        }
        // suffix sums: block (j, l) = dt^2 * sum_{k >= max(j, l)} M_k
        let dt2 = self.p.dt * self.p.dt;
        let mut suffix = vec![[[0.0; 3]; 3]; np + 1];
        for k in (0..np).rev() {
            for a in 0..3 {
                for b in 0..3 {
                    suffix[k][a][b] = suffix[k + 1][a][b] + m[k][a][b];
                }
            }
        }
        for j in 0..np {
            for l in 0..np {
                let s = &suffix[j.max(l)];
                for a in 0..3 {
                    for b in 0..3 {
                        h[(iu(j, a), iu(l, b))] = dt2 * s[a][b];
                    }
                }
            }
        }
        for i in 0..total {
            h[(i, i)] += PROX;
        }
        h
    }
}

fn finish(
    p: &RmpcProblem,
    sqp: &Sqp<'_>,
    z: &[f64],
    status: SolveStatus,
    iterations: usize,
    kkt: f64,
    start: Instant,
) -> RmpcSolution {
    let controls: Vec<ControlInput> = sqp
        .controls(z)
        .into_iter()
        .map(|u| arm_model::clamp_input(&u, &p.input_limits))
        .collect();
    let slacks: Vec<f64> = (0..p.horizon).map(|k| z[ie(k)].clamp(0.0, p.eps_max)).collect();
    let states = p.rollout(&controls);
    let objective = rmpc_tracking_cost(&controls, p.reference.as_deref(), &slacks, &p.weights);
    let c = p.constraint_values(&controls, &slacks);
    let jb = joint_bounds(p);
    let mut viol = c.iter().fold(0.0_f64, |a, &v| a.max(v));
    for k in 0..p.horizon {
        let x = states[k + 1].to_array();
        for i in 0..4 {
            viol = viol.max(x[i] - jb.hi[k][i]).max(jb.lo[k][i] - x[i]);
        }
    }
    RmpcSolution {
        controls,
        slacks,
        states,
        objective,
        status,
        iterations,
        solve_time: start.elapsed().as_secs_f64(),
        kkt_residual: kkt,
        constraint_violation: viol,
    }
}

/// Re-solve the subproblem with the nonlinear constraint values taken at the
/// trial point, `c(z + d) - J d` in place of `c(z)`.
fn second_order_correction(
    sqp: &Sqp,
    qp: &Qp,
    z: &[f64],
    ev_trial: &Eval,
    jd: &[f64],
    n_lin: usize,
    qp_opts: &QpOptions,
) -> Option<(Vec<f64>, Eval, Vec<f64>)> {
    let mut qp = qp.clone();
    for (j, (c, l)) in ev_trial.c.iter().zip(jd).enumerate() {
        qp.b[n_lin + j] = -(c - l);
    }
    let sol = solve_qp(&qp, qp_opts);
    if !sol.converged {
        return None;
    }
    let n = sqp.n;
    let z2: Vec<f64> = z.iter().zip(&sol.x.as_slice()[..n]).map(|(a, b)| a + b).collect();
    let ev2 = sqp.evaluate(&z2);
    let lam = sol.lambda[n_lin..n_lin + jd.len()].to_vec();
    Some((z2, ev2, lam))
}

pub(super) fn solve(p: &RmpcProblem, warm: Option<&[ControlInput]>, opts: &SolverOptions) -> RmpcSolution {
    let start = Instant::now();
    assert_eq!(
        p.tightened.steps(),
        p.horizon,
        "tightened workspace must cover the horizon"
    );
    let np = p.horizon;
    let jb = joint_bounds(p);
    let sqp = Sqp::new(p, &jb);
    let n = sqp.n;

    // initial iterate
    let mut z = vec![0.0; n];
    for k in 0..np {
        let u = match warm {
            Some(w) if w.len() == np => w[k].to_array(),
            _ => sqp.refs[k],
        };
        for i in 0..4 {
            // an unweighted axis has no gradient, so the solver keeps its
            // starting value; start it on the reference rather than on a
            // stale warm start
            let u_i = if sqp.weights[i] > 0.0 { u[i] } else { sqp.refs[k][i] };
            z[iu(k, i)] = u_i.clamp(p.input_limits.lower[i], p.input_limits.upper[i]);
            if sqp.weights[i] > 0.0 {
                z[is(k, i)] = (z[iu(k, i)] - sqp.refs[k][i]).abs();
            }
        }
    }
    {
        let ev = sqp.evaluate(&z);
        for k in 0..np {
            // smallest slack meeting the floor at the initial guess
            let need = p.tightened.floors[k] - ev.derivs[k].z;
            z[ie(k)] = need.clamp(0.0, p.eps_max);
        }
    }

    if certify_infeasible(p, &jb).is_some() {
        return finish(p, &sqp, &z, SolveStatus::Infeasible, 0, f64::INFINITY, start);
    }

    let max_w = sqp.weights.iter().fold(p.weights.c4, |a, &w| a.max(w));
    let mut penalty = 10.0 * (1.0 + max_w);
    let n_nl = ROWS_PER_STEP * np;
    let n_lin = sqp.lin_rows.len();
    // a floor held up by slack has multiplier c4; seeding it gives the first
    // subproblem the right curvature
    let mut lam_nl = vec![0.0; n_nl];
    for k in 0..np {
        if z[ie(k)] > 0.0 {
            lam_nl[ROWS_PER_STEP * k + 1] = p.weights.c4;
        }
    }
    let grad = sqp.gradient();
    let qp_opts = QpOptions::default();
    let mut kkt = f64::INFINITY;
    let mut radius = TR_INIT;
    let mut ev = sqp.evaluate(&z);

    for iter in 0..opts.max_iter {
        let nl_rows = sqp.nonlinear_rows(&ev);

        // subproblem in (d, v), v the elastic variables
        let total = n + n_nl;
        let h = sqp.hessian(&ev, &lam_nl);
        let mut q = DVector::zeros(total);
        q.rows_mut(0, n).copy_from(&grad);
        for j in 0..n_nl {
            q[n + j] = penalty;
        }
        let mut rows = Vec::with_capacity(n_lin + 2 * n_nl + 8 * np);
        let mut b = Vec::with_capacity(rows.capacity());
        for (r, &bi) in sqp.lin_rows.iter().zip(&sqp.lin_b) {
            rows.push(r.clone());
            b.push(bi - r.dot(&z));
        }
        for (j, r) in nl_rows.iter().enumerate() {
            rows.push(r.clone());
            b.push(-ev.c[j]);
        }
        for j in 0..n_nl {
            rows.push(SparseRow::single(n + j, -1.0));
            b.push(0.0);
        }
        // trust region on the inputs
        for k in 0..np {
            for i in 0..4 {
                rows.push(SparseRow::single(iu(k, i), 1.0));
                b.push(radius);
                rows.push(SparseRow::single(iu(k, i), -1.0));
                b.push(radius);
            }
        }
        let quad_h = h.view((0, 0), (n, n)).clone_owned();
        // epigraph, slack and elastic variables couple only within a step
        let mut local = vec![true; n + n_nl];
        for k in 0..np {
            for i in 0..4 {
                local[iu(k, i)] = false;
            }
        }
        let qp = Qp {
            h,
            q,
            rows,
            b,
            local,
        };
        let sol = solve_qp(&qp, &qp_opts);
        let d: Vec<f64> = sol.x.as_slice()[..n].to_vec();
        let lam_lin = &sol.lambda[..n_lin];
        let lam_new = &sol.lambda[n_lin..n_lin + n_nl];

        // first-order optimality at z with the subproblem multipliers
        let mut station = grad.clone();
        for (r, &l) in sqp.lin_rows.iter().zip(lam_lin) {
            for (&i, &v) in r.idx.iter().zip(&r.val) {
                station[i] += v * l;
            }
        }
        for (r, &l) in nl_rows.iter().zip(lam_new) {
            for (&i, &v) in r.idx.iter().zip(&r.val) {
                if i < n {
                    station[i] += v * l;
                }
            }
        }
        let mut comp = 0.0_f64;
        for ((r, &bi), &l) in sqp.lin_rows.iter().zip(&sqp.lin_b).zip(lam_lin) {
            comp = comp.max(l * (bi - r.dot(&z)).max(0.0));
        }
        for (&c, &l) in ev.c.iter().zip(lam_new) {
            comp = comp.max(l * (-c).max(0.0));
        }
        kkt = station.amax().max(comp);
        let viol = sqp.max_violation(&z, &ev);
        let step_u = (0..np)
            .flat_map(|k| (0..4).map(move |i| iu(k, i)))
            .fold(0.0_f64, |a, i| a.max(d[i].abs()));

        if viol <= opts.tol && kkt <= opts.tol {
            return finish(p, &sqp, &z, SolveStatus::Converged, iter, kkt, start);
        }

        let lam_max = lam_new.iter().fold(0.0_f64, |a, &l| a.max(l));
        if lam_max > 0.5 * penalty {
            penalty = 2.0 * lam_max;
        }

        // predicted and actual reduction of the l1 penalty merit
        let merit = |zz: &[f64], e: &Eval| sqp.objective(zz) + penalty * sqp.infeasibility(zz, e);
        let phi0 = merit(&z, &ev);
        let jd: Vec<f64> = nl_rows
            .iter()
            .map(|r| {
                r.idx
                    .iter()
                    .zip(&r.val)
                    .filter(|(&i, _)| i < n)
                    .map(|(&i, &v)| v * d[i])
                    .sum()
            })
            .collect();
        let lin_infeas: f64 = ev.c.iter().zip(&jd).map(|(c, l)| (c + l).max(0.0)).sum();
        let dv = DVector::from_column_slice(&d);
        let gd = grad.dot(&dv);
        let quad = 0.5 * dv.dot(&(&quad_h * &dv));
        let trial: Vec<f64> = z.iter().zip(&d).map(|(zi, di)| zi + di).collect();
        let lin_trial = sqp.linear_violation(&trial);
        let pred = -gd - quad + penalty * (sqp.infeasibility(&z, &ev) - lin_infeas - lin_trial);
        let ev_t = sqp.evaluate(&trial);
        let ared = phi0 - merit(&trial, &ev_t);
        let noise = 1e-12 * (1.0 + phi0.abs());
        let ratio = if pred > noise {
            ared / pred
        } else if ared >= -noise {
            1.0
        } else {
            -1.0
        };

        if ratio >= 0.1 {
            z = trial;
            ev = ev_t;
            lam_nl.copy_from_slice(lam_new);
            if ratio > 0.5 && step_u >= 0.99 * radius {
                radius = (2.0 * radius).min(TR_MAX);
            }
        } else if let Some((z2, ev2, lam2)) = second_order_correction(&sqp, &qp, &z, &ev_t, &jd, n_lin, &qp_opts)
            .filter(|(z2, ev2, _)| pred > noise && phi0 - merit(z2, ev2) >= 0.1 * pred)
        {
            // the corrected step absorbs the constraint curvature that made
            // the plain step look bad
            z = z2;
            ev = ev2;
            lam_nl.copy_from_slice(&lam2);
        } else {
            radius = 0.5 * radius.min(step_u.max(1e-3 * radius));
            if radius < 1e-10 {
                log::debug!("rmpc trust region collapsed at iteration {iter}");
                return finish(p, &sqp, &z, SolveStatus::MaxIter, iter + 1, kkt, start);
            }
        }
    }
    finish(p, &sqp, &z, SolveStatus::MaxIter, opts.max_iter, kkt, start)
}
