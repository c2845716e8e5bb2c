//! Bundled primal-dual interior-point method (HKM direction with Mehrotra
//! predictor-corrector) for
//!
//! `max b'v  s.t.  S_k(v) = C_k + sum_i v_i A_{k,i} ⪰ 0,  s_r(v) = c_r + a_r'v >= 0`.
//!
//! Iterates stay dual feasible; the primal `X` starts infeasible.

use faer::prelude::Solve;
use rayon::prelude::*;

use crate::linalg::{self, Mat};

use super::compile::Triplets;

#[derive(Debug, Clone)]
pub(crate) struct SdpBlock {
    pub dim: usize,
    pub c: Mat,
    pub coeffs: Vec<(usize, Triplets)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Sdp {
    pub nv: usize,
    pub blocks: Vec<SdpBlock>,
    pub row_c: Vec<f64>,
    pub row_a: Vec<Vec<(usize, f64)>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum IpmStatus {
    Optimal,
    /// Dual objective certified above `target` (early stop).
    TargetReached,
    /// Primal feasible point with objective below zero: the optimum is negative.
    NegativeBound,
    MaxIterations,
    Breakdown(String),
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutcome {
    pub v: Vec<f64>,
    pub status: IpmStatus,
    pub iterations: usize,
    pub pobj: f64,
    pub dobj: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmSettings {
    pub max_iterations: usize,
    pub gap_tol: f64,
    pub feas_tol: f64,
    /// Stop once `dobj > 0` and `dobj >= fraction * pobj`.
    pub early_fraction: Option<f64>,
    pub verbose: bool,
}

fn assemble(dim: usize, c: &Mat, coeffs: &[(usize, Triplets)], v: &[f64]) -> Mat {
    let mut s = c.clone();
    for (i, t) in coeffs {
        let vi = v[*i];
        if vi == 0.0 {
            continue;
        }
        for &(p, q, a) in t {
            s[(p as usize, q as usize)] += vi * a;
        }
    }
    debug_assert_eq!(s.nrows(), dim);
    s
}

fn inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn trace_with(t: &Triplets, g: &Mat) -> f64 {
    // tr(A G) = sum_{p,q} A[p,q] G[q,p]
    t.iter().map(|&(p, q, a)| a * g[(q as usize, p as usize)]).sum()
}

fn apply_adjoint(t: &Triplets, m: &Mat) -> f64 {
    t.iter().map(|&(p, q, a)| a * m[(p as usize, q as usize)]).sum()
}

/// Largest `alpha <= cap` keeping `M + alpha D ⪰ 0` for `M ≻ 0`.
fn max_step(m: &Mat, d: &Mat) -> f64 {
    let Some(ch) = linalg::symmetrize(m).cholesky() else { return 0.0 };
    let l = ch.l();
    let linv = match l.clone().try_inverse() {
        Some(x) => x,
        None => return 0.0,
    };
    let w = &linv * linalg::symmetrize(d) * linv.transpose();
    let lmin = linalg::min_eig(&w);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct Layout {
    /// For each variable: (block, index into the block's coefficient list).
    var_blocks: Vec<Vec<(usize, usize)>>,
    /// For each variable: rows it appears in with its coefficient.
    var_rows: Vec<Vec<(usize, f64)>>,
    rank: Vec<usize>,
}

fn layout(sdp: &Sdp) -> Layout {
    let mut var_blocks = vec![Vec::new(); sdp.nv];
    let mut cost = vec![0usize; sdp.nv];
    for (k, b) in sdp.blocks.iter().enumerate() {
        for (idx, (i, t)) in b.coeffs.iter().enumerate() {
            var_blocks[*i].push((k, idx));
            cost[*i] += t.len();
        }
    }
    let mut var_rows = vec![Vec::new(); sdp.nv];
    for (r, row) in sdp.row_a.iter().enumerate() {
        for &(i, a) in row {
            var_rows[i].push((r, a));
            cost[i] += 1;
        }
    }
    let mut order: Vec<usize> = (0..sdp.nv).collect();
    order.sort_by_key(|&i| (cost[i], i));
    let mut rank = vec![0; sdp.nv];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    Layout { var_blocks, var_rows, rank }
}

/// Schur complement `M_ij = sum_k tr(A_ki X_k A_kj S_k^{-1}) + sum_r a_ri a_rj x_r / s_r`.
/// Each pair is computed once, in the row of its more expensive member.
fn schur(sdp: &Sdp, lay: &Layout, xs: &[Mat], sinv: &[Mat], ratio: &[f64]) -> Vec<f64> {
    let nv = sdp.nv;
    let mut m = vec![0.0; nv * nv];
    m.par_chunks_mut(nv).enumerate().for_each(|(i, row)| {
        let ri = lay.rank[i];
        for &(k, idx) in &lay.var_blocks[i] {
            let blk = &sdp.blocks[k];
            let d = blk.dim;
            let t = &blk.coeffs[idx].1;
            let (x, si) = (&xs[k], &sinv[k]);
            let g = if t.len() <= 2 * d {
                let mut g = Mat::zeros(d, d);
                for &(p, q, a) in t {
                    let xcol = x.column(p as usize);
                    for s in 0..d {
                        let f = a * si[(q as usize, s)];
                        if f != 0.0 {
                            g.column_mut(s).axpy(f, &xcol, 1.0);
                        }
                    }
                }
                g
            } else {
                let mut a = Mat::zeros(d, d);
                for &(p, q, v) in t {
                    a[(p as usize, q as usize)] += v;
                }
                x * a * si
            };
            for (j, tj) in &blk.coeffs {
                if lay.rank[*j] <= ri {
                    row[*j] += trace_with(tj, &g);
                }
            }
        }
        for &(r, a) in &lay.var_rows[i] {
            for &(j, aj) in &sdp.row_a[r] {
                if lay.rank[j] <= ri {
                    row[j] += a * aj * ratio[r];
                }
            }
        }
    });
    for i in 0..nv {
        for j in 0..nv {
            if lay.rank[j] > lay.rank[i] {
                m[i * nv + j] = m[j * nv + i];
            }
        }
    }
    m
}

fn factor(m: &[f64], nv: usize) -> Option<faer::linalg::solvers::Llt<f64>> {
    let maxdiag = (0..nv).map(|i| m[i * nv + i].abs()).fold(0.0, f64::max).max(1e-300);
    for reg in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
        let fm = faer::Mat::<f64>::from_fn(nv, nv, |i, j| {
            let v = 0.5 * (m[i * nv + j] + m[j * nv + i]);
            if i == j {
                v + reg * maxdiag
            } else {
                v
            }
        });
        if let Ok(l) = fm.llt(faer::Side::Lower) {
            return Some(l);
        }
    }
    None
}

fn solve_with(l: &faer::linalg::solvers::Llt<f64>, rhs: &[f64]) -> Vec<f64> {
    let r = faer::Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = l.solve(&r);
    (0..rhs.len()).map(|i| x[(i, 0)]).collect()
}

pub(crate) fn solve(sdp: &Sdp, v0: Vec<f64>, set: &IpmSettings) -> IpmOutcome {
    let nv = sdp.nv;
    let nb = sdp.blocks.len();
    let nr = sdp.row_c.len();
    let lay = layout(sdp);
    let mut v = v0;
    let mut xs: Vec<Mat> = sdp.blocks.iter().map(|b| Mat::identity(b.dim, b.dim)).collect();
    let mut xr = vec![1.0; nr];
    let nu = (sdp.blocks.iter().map(|b| b.dim).sum::<usize>() + nr) as f64;
    let bnorm = sdp.b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (mut pobj, mut dobj) = (f64::NAN, f64::NAN);
    let fail = |v: Vec<f64>, it: usize, msg: String, p: f64, d: f64| IpmOutcome {
        v,
        status: IpmStatus::Breakdown(msg),
        iterations: it,
        pobj: p,
        dobj: d,
    };

    for it in 0..set.max_iterations {
        // dual slacks
        let ss: Vec<Mat> = sdp.blocks.iter().map(|b| assemble(b.dim, &b.c, &b.coeffs, &v)).collect();
        let sr: Vec<f64> = (0..nr).map(|r| sdp.row_c[r] + sdp.row_a[r].iter().map(|&(i, a)| a * v[i]).sum::<f64>()).collect();
        let mut sinv = Vec::with_capacity(nb);
        for (k, s) in ss.iter().enumerate() {
            match linalg::symmetrize(s).cholesky() {
                Some(c) => sinv.push(c.inverse()),
                None => return fail(v, it, format!("dual slack of block {k} lost definiteness"), pobj, dobj),
            }
        }
        if sr.iter().any(|&s| s <= 0.0) {
            return fail(v, it, "dual slack row lost positivity".into(), pobj, dobj);
        }
        // residuals and objectives
        let mut ax = vec![0.0; nv];
        for (k, b) in sdp.blocks.iter().enumerate() {
            for (i, t) in &b.coeffs {
                ax[*i] += apply_adjoint(t, &xs[k]);
            }
        }
        for r in 0..nr {
            for &(i, a) in &sdp.row_a[r] {
                ax[i] += a * xr[r];
            }
        }
        let rp: Vec<f64> = (0..nv).map(|i| -sdp.b[i] - ax[i]).collect();
        let pinf = rp.iter().map(|x| x * x).sum::<f64>().sqrt() / (1.0 + bnorm);
        let gap: f64 = (0..nb).map(|k| inner(&xs[k], &ss[k])).sum::<f64>() + (0..nr).map(|r| xr[r] * sr[r]).sum::<f64>();
        pobj = (0..nb).map(|k| inner(&sdp.blocks[k].c, &xs[k])).sum::<f64>() + (0..nr).map(|r| sdp.row_c[r] * xr[r]).sum::<f64>();
        dobj = sdp.b.iter().zip(&v).map(|(a, b)| a * b).sum();
        let mu = gap / nu;
        if set.verbose {
            eprintln!("ipm {it:3}: pobj {pobj:+.6e} dobj {dobj:+.6e} gap {gap:.2e} pinf {pinf:.2e}");
        }
        if pinf < set.feas_tol && gap < set.gap_tol * (1.0 + pobj.abs() + dobj.abs()) {
            return IpmOutcome { v, status: IpmStatus::Optimal, iterations: it, pobj, dobj };
        }
        if pinf < set.feas_tol && pobj < -set.gap_tol.max(1e-9) * 10.0 && dobj < 0.0 {
            return IpmOutcome { v, status: IpmStatus::NegativeBound, iterations: it, pobj, dobj };
        }
        if let Some(f) = set.early_fraction {
            if dobj > 0.0 && pinf < set.feas_tol && dobj >= f * pobj {
                return IpmOutcome { v, status: IpmStatus::TargetReached, iterations: it, pobj, dobj };
            }
        }
        // Schur system
        let ratio: Vec<f64> = (0..nr).map(|r| xr[r] / sr[r]).collect();
        let m = schur(sdp, &lay, &xs, &sinv, &ratio);
        let Some(llt) = factor(&m, nv) else {
            return fail(v, it, "Schur complement factorization failed".into(), pobj, dobj);
        };
        let asinv: Vec<f64> = {
            let mut out = vec![0.0; nv];
            for (k, b) in sdp.blocks.iter().enumerate() {
                for (i, t) in &b.coeffs {
                    out[*i] += apply_adjoint(t, &sinv[k]);
                }
            }
            for r in 0..nr {
                for &(i, a) in &sdp.row_a[r] {
                    out[i] += a / sr[r];
                }
            }
            out
        };
        let dual_dir = |dv: &[f64]| -> (Vec<Mat>, Vec<f64>) {
            let ds: Vec<Mat> =
                sdp.blocks.iter().map(|b| assemble(b.dim, &Mat::zeros(b.dim, b.dim), &b.coeffs, dv)).collect();
            let dsr: Vec<f64> = (0..nr).map(|r| sdp.row_a[r].iter().map(|&(i, a)| a * dv[i]).sum()).collect();
            (ds, dsr)
        };
        // predictor
        let dv_a = solve_with(&llt, &sdp.b);
        let (ds_a, dsr_a) = dual_dir(&dv_a);
        let dx_a: Vec<Mat> = (0..nb).map(|k| linalg::symmetrize(&(-&xs[k] - &xs[k] * &ds_a[k] * &sinv[k]))).collect();
        let dxr_a: Vec<f64> = (0..nr).map(|r| -xr[r] - xr[r] * dsr_a[r] / sr[r]).collect();
        let steps = |dx: &[Mat], dxr: &[f64], ds: &[Mat], dsr: &[f64]| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..nb {
                ap = ap.min(max_step(&xs[k], &dx[k]));
                ad = ad.min(max_step(&ss[k], &ds[k]));
            }
            for r in 0..nr {
                if dxr[r] < 0.0 {
                    ap = ap.min(-xr[r] / dxr[r]);
                }
                if dsr[r] < 0.0 {
                    ad = ad.min(-sr[r] / dsr[r]);
                }
            }
            (ap, ad)
        };
        let (ap, ad) = steps(&dx_a, &dxr_a, &ds_a, &dsr_a);
        let (ap1, ad1) = (ap.min(1.0), ad.min(1.0));
        let mut gap_a = 0.0;
        for k in 0..nb {
            gap_a += inner(&(&xs[k] + &dx_a[k] * ap1), &(&ss[k] + &ds_a[k] * ad1));
        }
        for r in 0..nr {
            gap_a += (xr[r] + ap1 * dxr_a[r]) * (sr[r] + ad1 * dsr_a[r]);
        }
        let sigma = ((gap_a / nu) / mu).clamp(0.0, 1.0).powi(3);
        // corrector
        let corr: Vec<Mat> = (0..nb).map(|k| &dx_a[k] * &ds_a[k] * &sinv[k]).collect();
        let corr_r: Vec<f64> = (0..nr).map(|r| dxr_a[r] * dsr_a[r] / sr[r]).collect();
        let mut rhs: Vec<f64> = (0..nv).map(|i| sdp.b[i] + sigma * mu * asinv[i]).collect();
        for (k, b) in sdp.blocks.iter().enumerate() {
            for (i, t) in &b.coeffs {
                rhs[*i] -= trace_with(t, &corr[k].transpose());
            }
        }
        for r in 0..nr {
            for &(i, a) in &sdp.row_a[r] {
                rhs[i] -= a * corr_r[r];
            }
        }
        let dv = solve_with(&llt, &rhs);
        let (ds, dsr) = dual_dir(&dv);
        let dx: Vec<Mat> = (0..nb)
            .map(|k| {
                linalg::symmetrize(&(&sinv[k] * (sigma * mu) - &xs[k] - &corr[k] - &xs[k] * &ds[k] * &sinv[k]))
            })
            .collect();
        let dxr: Vec<f64> =
            (0..nr).map(|r| sigma * mu / sr[r] - xr[r] - corr_r[r] - xr[r] * dsr[r] / sr[r]).collect();
        let (ap, ad) = steps(&dx, &dxr, &ds, &dsr);
        let gamma = 0.95;
        let (ap, ad) = ((gamma * ap).min(1.0), (gamma * ad).min(1.0));
        if !(ap.is_finite() && ad.is_finite()) || (ap < 1e-12 && ad < 1e-12) {
            return fail(v, it, "step length collapsed".into(), pobj, dobj);
        }
        for k in 0..nb {
            xs[k] = linalg::symmetrize(&(&xs[k] + &dx[k] * ap));
        }
        for r in 0..nr {
            xr[r] += ap * dxr[r];
        }
        for i in 0..nv {
            v[i] += ad * dv[i];
        }
    }
    IpmOutcome { v, status: IpmStatus::MaxIterations, iterations: set.max_iterations, pobj, dobj }
}
