//! Lowering of a [`Program`] to sparse symmetric coefficient blocks, and
//! elimination of linear equalities.

use std::collections::BTreeMap;

use crate::linalg::{self, Mat};

use super::expr::{Expr, VarKind};
use super::program::Program;

/// Sparse symmetric matrix stored with both triangles.
pub(crate) type Triplets = Vec<(u32, u32, f64)>;

/// `constant + sum_i y_i A_i ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub dim: usize,
    pub constant: Mat,
    pub coeffs: Vec<(usize, Triplets)>,
}

/// `constant + sum_i a_i y_i >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Row {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
    /// Rows that realize user constraints participate in the common slack.
    pub slack: bool,
}

/// `sum_i a_i y_i = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EqRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Compiled {
    pub nvars: usize,
    pub offsets: Vec<usize>,
    pub blocks: Vec<Block>,
    pub rows: Vec<Row>,
    pub eqs: Vec<EqRow>,
}

fn sparse_cols(m: &Mat) -> Vec<Vec<(usize, f64)>> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).filter_map(|i| (m[(i, j)] != 0.0).then(|| (i, m[(i, j)]))).collect())
        .collect()
}

fn sparse_rows(m: &Mat) -> Vec<Vec<(usize, f64)>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).filter_map(|j| (m[(i, j)] != 0.0).then(|| (j, m[(i, j)]))).collect())
        .collect()
}

fn merge(mut t: Triplets) -> Triplets {
    t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut out: Triplets = Vec::with_capacity(t.len());
    for (p, q, v) in t {
        match out.last_mut() {
            Some(last) if last.0 == p && last.1 == q => last.2 += v,
            _ => out.push((p, q, v)),
        }
    }
    out.retain(|x| x.2 != 0.0);
    out
}

/// Constant and per-component coefficient matrices of an expression.
pub(crate) fn compile_expr(e: &Expr, offsets: &[usize]) -> (Mat, BTreeMap<usize, Triplets>) {
    let mut acc: BTreeMap<usize, Triplets> = BTreeMap::new();
    for term in &e.terms {
        let lc = sparse_cols(&term.left);
        let rr = sparse_rows(&term.right);
        let kind = term.var.kind;
        let off = offsets[term.var.id];
        for c in 0..kind.components() {
            let ((i, j), other) = kind.component_entries(c);
            let list = acc.entry(off + c).or_default();
            let mut push = |a: usize, b: usize| {
                for &(p, lv) in &lc[a] {
                    for &(q, rv) in &rr[b] {
                        list.push((p as u32, q as u32, lv * rv));
                    }
                }
            };
            if term.transpose {
                push(j, i);
                if let Some((i2, j2)) = other {
                    push(j2, i2);
                }
            } else {
                push(i, j);
                if let Some((i2, j2)) = other {
                    push(i2, j2);
                }
            }
        }
    }
    let acc = acc.into_iter().map(|(k, t)| (k, merge(t))).filter(|(_, t)| !t.is_empty()).collect();
    (e.constant.clone(), acc)
}

pub(crate) fn offsets(p: &Program) -> (Vec<usize>, usize) {
    let mut off = Vec::with_capacity(p.vars.len());
    let mut total = 0;
    for v in &p.vars {
        off.push(total);
        total += v.kind.components();
    }
    (off, total)
}

pub(crate) fn compile(p: &Program) -> Compiled {
    let (offsets, nvars) = offsets(p);
    let mut blocks = Vec::new();
    for c in &p.psd {
        let (constant, coeffs) = compile_expr(&c.expr, &offsets);
        let s = c.sense.sign();
        let dim = constant.nrows();
        let constant = linalg::symmetrize(&constant) * s - Mat::identity(dim, dim) * c.margin;
        let coeffs = coeffs
            .into_iter()
            .map(|(k, t)| {
                let mut sym = Vec::with_capacity(2 * t.len());
                for (a, b, v) in t {
                    sym.push((a, b, 0.5 * s * v));
                    sym.push((b, a, 0.5 * s * v));
                }
                (k, merge(sym))
            })
            .filter(|(_, t)| !t.is_empty())
            .collect();
        blocks.push(Block { dim, constant, coeffs });
    }
    let mut eqs = Vec::new();
    for c in &p.equalities {
        let (constant, coeffs) = compile_expr(&c.expr, &offsets);
        let mut rows: BTreeMap<(u32, u32), Vec<(usize, f64)>> = BTreeMap::new();
        for (k, t) in coeffs {
            for (a, b, v) in t {
                rows.entry((a, b)).or_default().push((k, v));
            }
        }
        for i in 0..constant.nrows() {
            for j in 0..constant.ncols() {
                let coeffs = rows.remove(&(i as u32, j as u32)).unwrap_or_default();
                let rhs = -constant[(i, j)];
                if coeffs.is_empty() && rhs == 0.0 {
                    continue;
                }
                eqs.push(EqRow { coeffs, rhs });
            }
        }
    }
    let mut rows = Vec::new();
    for b in &p.boxes {
        let off = offsets[b.var.id];
        let coeffs: Vec<(usize, f64)> = match b.var.kind {
            VarKind::Symmetric(d) if b.trace => {
                (0..b.var.kind.components()).filter(|&c| { let (i, j) = super::expr::sym_component(c); i == j && i < d }).map(|c| (off + c, 1.0)).collect()
            }
            _ => vec![(off, 1.0)],
        };
        if b.lo == b.hi {
            eqs.push(EqRow { coeffs, rhs: b.lo });
            continue;
        }
        if b.lo.is_finite() {
            rows.push(Row { constant: -b.lo, coeffs: coeffs.clone(), slack: true });
        }
        if b.hi.is_finite() {
            rows.push(Row { constant: b.hi, coeffs: coeffs.iter().map(|&(k, v)| (k, -v)).collect(), slack: true });
        }
    }
    Compiled { nvars, offsets, blocks, rows, eqs }
}

/// Affine reparametrization `y = y0 + map(z)` that satisfies all equalities.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Reduction {
    pub nz: usize,
    pub y0: Vec<f64>,
    /// `(global index, z index)` for variables untouched by equalities.
    pub free: Vec<(usize, usize)>,
    /// Global indices appearing in equalities.
    pub involved: Vec<usize>,
    /// Null-space basis over `involved`; its columns are z indices `free.len()..`.
    pub basis: Mat,
}

impl Reduction {
    pub fn lift(&self, z: &[f64]) -> Vec<f64> {
        let mut y = self.y0.clone();
        for &(g, k) in &self.free {
            y[g] += z[k];
        }
        let base = self.free.len();
        for (pos, &g) in self.involved.iter().enumerate() {
            for k in 0..self.basis.ncols() {
                y[g] += self.basis[(pos, k)] * z[base + k];
            }
        }
        y
    }
}

/// Eliminate the equalities. Returns the reduction plus transformed blocks
/// and rows in z-coordinates, or a message if the equalities are inconsistent.
pub(crate) fn reduce(c: &Compiled) -> Result<(Reduction, Vec<Block>, Vec<Row>), String> {
    let mut involved: Vec<usize> = c.eqs.iter().flat_map(|e| e.coeffs.iter().map(|x| x.0)).collect();
    involved.sort_unstable();
    involved.dedup();
    let mut pos = vec![usize::MAX; c.nvars];
    for (k, &g) in involved.iter().enumerate() {
        pos[g] = k;
    }
    let mut y0 = vec![0.0; c.nvars];
    let mut basis = Mat::zeros(involved.len(), 0);
    let consistent_tol = 1e-9;
    if !c.eqs.is_empty() {
        let mut e = Mat::zeros(c.eqs.len(), involved.len());
        let mut f = Mat::zeros(c.eqs.len(), 1);
        for (r, row) in c.eqs.iter().enumerate() {
            for &(g, v) in &row.coeffs {
                e[(r, pos[g])] += v;
            }
            f[(r, 0)] = row.rhs;
        }
        let rel = 1e-11;
        let sol = linalg::pinv(&e, rel) * &f;
        let resid = linalg::max_abs(&(&e * &sol - &f));
        if resid > consistent_tol * (1.0 + linalg::max_abs(&f)) {
            return Err(format!("equality constraints are inconsistent (residual {resid:.3e})"));
        }
        for (k, &g) in involved.iter().enumerate() {
            y0[g] = sol[(k, 0)];
        }
        basis = if involved.is_empty() { basis } else { linalg::null_space(&e, rel) };
    }
    let mut free = Vec::new();
    for g in 0..c.nvars {
        if pos[g] == usize::MAX {
            free.push((g, free.len()));
        }
    }
    let mut zmap = vec![usize::MAX; c.nvars];
    for &(g, k) in &free {
        zmap[g] = k;
    }
    let nfree = free.len();
    let nk = basis.ncols();
    let red = Reduction { nz: nfree + nk, y0: y0.clone(), free, involved, basis };

    let mut blocks = Vec::with_capacity(c.blocks.len());
    for b in &c.blocks {
        let mut constant = b.constant.clone();
        let mut coeffs: Vec<(usize, Triplets)> = Vec::new();
        let mut dense: Vec<Option<Mat>> = vec![None; nk];
        for (g, t) in &b.coeffs {
            if zmap[*g] != usize::MAX {
                coeffs.push((zmap[*g], t.clone()));
                continue;
            }
            let y = y0[*g];
            let p = pos[*g];
            for &(a, bb, v) in t {
                constant[(a as usize, bb as usize)] += y * v;
            }
            for k in 0..nk {
                let w = red.basis[(p, k)];
                if w == 0.0 {
                    continue;
                }
                let d = dense[k].get_or_insert_with(|| Mat::zeros(b.dim, b.dim));
                for &(a, bb, v) in t {
                    d[(a as usize, bb as usize)] += w * v;
                }
            }
        }
        for (k, d) in dense.into_iter().enumerate() {
            if let Some(d) = d {
                let thr = 1e-14 * linalg::max_abs(&d);
                let mut t: Triplets = Vec::new();
                for j in 0..b.dim {
                    for i in 0..b.dim {
                        let v = 0.5 * (d[(i, j)] + d[(j, i)]);
                        if v.abs() > thr {
                            t.push((i as u32, j as u32, v));
                        }
                    }
                }
                if !t.is_empty() {
                    coeffs.push((nfree + k, t));
                }
            }
        }
        coeffs.sort_by_key(|x| x.0);
        blocks.push(Block { dim: b.dim, constant, coeffs });
    }
    let mut rows = Vec::with_capacity(c.rows.len());
    for r in &c.rows {
        let mut constant = r.constant;
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(g, v) in &r.coeffs {
            if zmap[g] != usize::MAX {
                *acc.entry(zmap[g]).or_default() += v;
            } else {
                constant += y0[g] * v;
                for k in 0..nk {
                    let w = red.basis[(pos[g], k)];
                    if w != 0.0 {
                        *acc.entry(nfree + k).or_default() += w * v;
                    }
                }
            }
        }
        let coeffs = acc.into_iter().filter(|x| x.1.abs() > 1e-15).collect();
        rows.push(Row { constant, coeffs, slack: r.slack });
    }
    Ok((red, blocks, rows))
}
