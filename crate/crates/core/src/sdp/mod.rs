//! Solver-neutral semidefinite feasibility programs with a bundled
//! interior-point backend.

mod compile;
pub mod export;
pub mod expr;
mod ipm;
pub mod program;

pub use expr::{AffineMatrixExpression, Expr, Term, VarKind, VariableHandle};
pub use program::{
    BoxConstraint, EqualityConstraint, Program, PsdConstraint, Residuals, Sense, Solution, SolveOptions, SolveStatus,
    DEFAULT_TOL, STRICT_MARGIN,
};

use crate::linalg::{self, Mat};

/// A conic backend able to decide feasibility of a [`Program`].
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, program: &Program, opts: &SolveOptions) -> Solution;
}

/// Self-contained interior-point backend.
///
/// Maximizes a common slack `t` subject to every (row-scaled) constraint
/// exceeding `t`; the program is feasible when the re-evaluated constraints
/// hold at the returned point.
#[derive(Debug, Clone, Copy)]
pub struct BundledIpm {
    /// Stop once the slack is positive and within this fraction of its upper
    /// bound; `None` runs to optimality.
    pub early_fraction: Option<f64>,
}

impl Default for BundledIpm {
    fn default() -> Self {
        Self { early_fraction: Some(0.5) }
    }
}

/// Solve with the bundled backend and default options except `tol`.
pub fn solve(program: &Program, tol: f64) -> Solution {
    BundledIpm::default().solve(program, &SolveOptions { tol, ..Default::default() })
}

fn values_from(program: &Program, offsets: &[usize], y: &[f64]) -> Vec<Mat> {
    program.vars.iter().map(|h| h.kind.assemble(&y[offsets[h.id]..offsets[h.id] + h.kind.components()])).collect()
}

impl SdpBackend for BundledIpm {
    fn name(&self) -> &str {
        "bundled-ipm"
    }

    fn solve(&self, program: &Program, opts: &SolveOptions) -> Solution {
        let compiled = compile::compile(program);
        let zero_values = || values_from(program, &compiled.offsets, &vec![0.0; compiled.nvars]);
        let (red, blocks, rows) = match compile::reduce(&compiled) {
            Ok(x) => x,
            Err(msg) => {
                let values = zero_values();
                return Solution {
                    status: SolveStatus::Infeasible,
                    residuals: program.evaluate(&values),
                    values,
                    slack: f64::NEG_INFINITY,
                    iterations: 0,
                    message: msg,
                };
            }
        };
        let nz = red.nz;
        let t = nz;
        let nv = nz + 1;
        let mut sdp_blocks = Vec::with_capacity(blocks.len());
        for b in blocks {
            let mut scale = linalg::max_abs(&b.constant);
            for (_, tr) in &b.coeffs {
                for x in tr {
                    scale = scale.max(x.2.abs());
                }
            }
            let s = if scale > 0.0 { 1.0 / scale } else { 1.0 };
            let mut coeffs: Vec<(usize, compile::Triplets)> = b
                .coeffs
                .into_iter()
                .map(|(i, tr)| (i, tr.into_iter().map(|(p, q, v)| (p, q, v * s)).collect()))
                .collect();
            coeffs.push((t, (0..b.dim as u32).map(|i| (i, i, -1.0)).collect()));
            sdp_blocks.push(ipm::SdpBlock { dim: b.dim, c: b.constant * s, coeffs });
        }
        let mut row_c = Vec::new();
        let mut row_a: Vec<Vec<(usize, f64)>> = Vec::new();
        for r in rows {
            let scale = r.coeffs.iter().map(|x| x.1.abs()).fold(r.constant.abs(), f64::max);
            let s = if scale > 0.0 { 1.0 / scale } else { 1.0 };
            let mut a: Vec<(usize, f64)> = r.coeffs.iter().map(|&(i, v)| (i, v * s)).collect();
            if r.slack {
                a.push((t, -1.0));
            }
            row_c.push(r.constant * s);
            row_a.push(a);
        }
        let bound = opts.variable_bound;
        for i in 0..nz {
            row_c.push(bound);
            row_a.push(vec![(i, -1.0)]);
            row_c.push(bound);
            row_a.push(vec![(i, 1.0)]);
        }
        row_c.push(1.0);
        row_a.push(vec![(t, -1.0)]);
        let mut b = vec![0.0; nv];
        b[t] = 1.0;
        // initial slack keeps every dual slack at least one
        let mut t0 = f64::INFINITY;
        for blk in &sdp_blocks {
            t0 = t0.min(linalg::min_eig(&blk.c) - 1.0);
        }
        for (c, a) in row_c.iter().zip(&row_a) {
            if a.iter().any(|x| x.0 == t) && a.len() > 1 {
                t0 = t0.min(c - 1.0);
            }
        }
        let t0 = if t0.is_finite() { t0.min(0.0) } else { 0.0 };
        let mut v0 = vec![0.0; nv];
        v0[t] = t0;
        let sdp = ipm::Sdp { nv, blocks: sdp_blocks, row_c, row_a, b };
        let set = ipm::IpmSettings {
            max_iterations: opts.max_iterations,
            gap_tol: 1e-9,
            feas_tol: 1e-9,
            early_fraction: self.early_fraction,
            verbose: opts.verbose,
        };
        let out = ipm::solve(&sdp, v0, &set);
        let y = red.lift(&out.v[..nz]);
        let values = values_from(program, &compiled.offsets, &y);
        let residuals = program.evaluate(&values);
        let slack = out.v[t];
        let ok = residuals.satisfied(opts.tol);
        let (status, message) = match (&out.status, ok) {
            (_, true) => (SolveStatus::Feasible, format!("{:?} after {} iterations", out.status, out.iterations)),
            (ipm::IpmStatus::Optimal, false) if out.dobj < 0.0 => {
                (SolveStatus::Infeasible, format!("optimal common slack {:.3e} < 0", out.dobj))
            }
            (ipm::IpmStatus::NegativeBound, false) => {
                (SolveStatus::Infeasible, format!("primal bound {:.3e} on the common slack is negative", out.pobj))
            }
            (ipm::IpmStatus::MaxIterations, false) if out.pobj < 0.0 => (
                SolveStatus::Infeasible,
                format!("iteration cap reached with slack bound {:.3e} < 0", out.pobj),
            ),
            (s, false) => (
                SolveStatus::NumericalFailure,
                format!("{s:?}: constraints violated at returned point (worst PSD residual {:.3e})", residuals.worst_psd()),
            ),
        };
        Solution { status, values, residuals, slack, iterations: out.iterations, message }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> Mat {
        Mat::from_element(1, 1, 1.0)
    }

    #[test]
    fn scalar_with_unit_trace() {
        let mut p = Program::new();
        let x = p.declare(VarKind::Symmetric(1));
        p.add_psd(Expr::var(x), Sense::Geq, 0.0).unwrap();
        p.add_trace_box(x, 1.0, 1.0).unwrap();
        let s = solve(&p, DEFAULT_TOL);
        assert_eq!(s.status, SolveStatus::Feasible, "{}", s.message);
        assert!((s.value(x)[(0, 0)] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn identity_is_feasible_and_negative_identity_is_not() {
        let mut p = Program::new();
        p.add_psd(Expr::constant(Mat::identity(2, 2)), Sense::Geq, 0.0).unwrap();
        assert_eq!(solve(&p, DEFAULT_TOL).status, SolveStatus::Feasible);
        let mut q = Program::new();
        q.add_psd(Expr::constant(-Mat::identity(2, 2)), Sense::Geq, 0.0).unwrap();
        assert_eq!(solve(&q, DEFAULT_TOL).status, SolveStatus::Infeasible);
    }

    #[test]
    fn contradictory_constraints_on_same_expression() {
        let mut p = Program::new();
        let x = p.declare(VarKind::Symmetric(2));
        let e = Expr::var(x).add_const(&Mat::identity(2, 2));
        p.add_psd(e.clone(), Sense::Geq, 1e-7).unwrap();
        p.add_psd(e, Sense::Leq, 1e-7).unwrap();
        assert_eq!(solve(&p, DEFAULT_TOL).status, SolveStatus::Infeasible);
    }

    #[test]
    fn pinned_variable() {
        let mut p = Program::new();
        let x = p.declare(VarKind::Symmetric(2));
        p.add_equality(Expr::var(x).add_const(&-Mat::identity(2, 2))).unwrap();
        p.add_psd(Expr::var(x), Sense::Geq, 1e-7).unwrap();
        let s = solve(&p, DEFAULT_TOL);
        assert!(s.is_feasible());
        assert!((s.value(x) - Mat::identity(2, 2)).abs().max() < 1e-9);
    }

    #[test]
    fn lyapunov_inequality_for_stable_matrix() {
        // find P ≻ 0 with A'PA - P ≺ 0
        let a = Mat::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.8]);
        let mut p = Program::new();
        let x = p.declare(VarKind::Symmetric(2));
        p.add_psd(Expr::var(x), Sense::Geq, 1e-7).unwrap();
        p.add_psd(Expr::product(&a.transpose(), x, &a).sub(Expr::var(x)), Sense::Leq, 1e-7).unwrap();
        p.add_trace_box(x, 1.0, 10.0).unwrap();
        let s = solve(&p, DEFAULT_TOL);
        assert!(s.is_feasible(), "{}", s.message);
        let pv = s.value(x);
        assert!(linalg::max_eig(&(a.transpose() * pv * &a - pv)) < 0.0);
    }

    #[test]
    fn lyapunov_inequality_for_unstable_matrix_is_infeasible() {
        let a = Mat::from_row_slice(2, 2, &[1.1, 0.3, 0.0, 0.5]);
        let mut p = Program::new();
        let x = p.declare(VarKind::Symmetric(2));
        p.add_psd(Expr::var(x), Sense::Geq, 1e-7).unwrap();
        p.add_psd(Expr::product(&a.transpose(), x, &a).sub(Expr::var(x)), Sense::Leq, 1e-7).unwrap();
        p.add_trace_box(x, 1.0, 10.0).unwrap();
        assert_eq!(solve(&p, DEFAULT_TOL).status, SolveStatus::Infeasible);
    }

    #[test]
    fn scalar_box_and_scalar_variable() {
        let mut p = Program::new();
        let s = p.declare(VarKind::Scalar);
        p.add_scalar_box(s, 2.0, 3.0).unwrap();
        p.add_psd(Expr::scalar_times(s, &Mat::identity(2, 2)).add_const(&(Mat::identity(2, 2) * -2.5)), Sense::Geq, 0.0).unwrap();
        let sol = solve(&p, DEFAULT_TOL);
        assert!(sol.is_feasible(), "{}", sol.message);
        assert!(sol.scalar(s) >= 2.5 - 1e-7 && sol.scalar(s) <= 3.0 + 1e-7);
        let _ = one();
    }

    #[test]
    fn construction_is_deterministic() {
        let build = || {
            let mut p = Program::new();
            let x = p.declare(VarKind::Symmetric(3));
            let l = Mat::from_fn(3, 3, |i, j| (i as f64 + 1.0) / (j as f64 + 2.0));
            p.add_psd(Expr::product(&l, x, &l.transpose()).add_const(&Mat::identity(3, 3)), Sense::Geq, 1e-7).unwrap();
            compile::compile(&p)
        };
        assert_eq!(build(), build());
    }
}
