//! Plain-text dump of a program for inspection or an external solver.
//!
//! Format: a `vars` section (`id name kind rows cols`), then one section per
//! constraint holding the constant and each variable component's coefficient
//! matrix as sparse `row col value` lines.

use std::fmt::Write;

use super::compile;
use super::program::Program;

pub fn to_text(p: &Program) -> String {
    let (offsets, nvars) = compile::offsets(p);
    let mut s = String::new();
    let _ = writeln!(s, "vars {} components {}", p.vars.len(), nvars);
    for (h, name) in p.vars.iter().zip(&p.var_names) {
        let (r, c) = h.shape();
        let _ = writeln!(s, "{} {} {:?} {} {} offset {}", h.id, name, h.kind, r, c, offsets[h.id]);
    }
    let dump = |s: &mut String, title: &str, e: &super::Expr| {
        let (c0, coeffs) = compile::compile_expr(e, &offsets);
        let (r, c) = e.shape();
        let _ = writeln!(s, "{title} {r} {c}");
        let _ = writeln!(s, "constant");
        for j in 0..c {
            for i in 0..r {
                if c0[(i, j)] != 0.0 {
                    let _ = writeln!(s, "{i} {j} {:.17e}", c0[(i, j)]);
                }
            }
        }
        for (k, t) in coeffs {
            let _ = writeln!(s, "component {k}");
            for (i, j, v) in t {
                let _ = writeln!(s, "{i} {j} {v:.17e}");
            }
        }
    };
    for c in &p.psd {
        dump(&mut s, &format!("psd {} {:?} margin {:e}", c.name, c.sense, c.margin), &c.expr);
    }
    for c in &p.equalities {
        dump(&mut s, &format!("eq {}", c.name), &c.expr);
    }
    for b in &p.boxes {
        let _ = writeln!(s, "box {} var {} lo {:e} hi {:e} trace {}", b.name, b.var.id, b.lo, b.hi, b.trace);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::sdp::{Expr, Sense, VarKind};

    #[test]
    fn lists_every_section() {
        let mut p = Program::new();
        let x = p.declare_named(VarKind::Symmetric(2), "P");
        p.add_psd_named("pos", Expr::var(x), Sense::Geq, 1e-7).unwrap();
        p.add_equality_named("fix", Expr::var(x).add_const(&-Mat::identity(2, 2))).unwrap();
        p.add_trace_box(x, 0.1, 10.0).unwrap();
        let t = to_text(&p);
        assert!(t.contains("0 P Symmetric(2) 2 2"));
        assert!(t.contains("psd pos"));
        assert!(t.contains("eq fix"));
        assert!(t.contains("box"));
    }
}
