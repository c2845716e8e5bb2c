//! Quadratic-in-`p` data parametrization `F(p)` and the linear fractional
//! lifting used to enforce parameter-dependent LMIs at the box vertices.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::sdp::{Expr, Program, Sense, VarKind, VariableHandle};

/// Number of `T x n` blocks in `F`: `1 + l + l^2`.
pub fn num_f_blocks(l: usize) -> usize {
    1 + l + l * l
}

/// Block index of the `p_i p_j` coefficient.
pub fn quad_index(l: usize, i: usize, j: usize) -> usize {
    1 + l + i * l + j
}

/// `F = [F_0 | F_1..F_l | F_11..F_ll]`, each block `T x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptF {
    pub t: usize,
    pub n: usize,
    pub l: usize,
    pub blocks: Vec<Mat>,
}

impl ScriptF {
    pub fn new(blocks: Vec<Mat>, l: usize) -> Result<Self> {
        if blocks.len() != num_f_blocks(l) {
            return Err(Error::Dimension(format!("expected {} blocks, got {}", num_f_blocks(l), blocks.len())));
        }
        let (t, n) = blocks[0].shape();
        if blocks.iter().any(|b| b.shape() != (t, n)) {
            return Err(Error::Dimension("F blocks must share one shape".into()));
        }
        Ok(Self { t, n, l, blocks })
    }

    pub fn zeros(t: usize, n: usize, l: usize) -> Self {
        Self { t, n, l, blocks: vec![Mat::zeros(t, n); num_f_blocks(l)] }
    }

    /// Split a `T x n(1+l+l^2)` matrix into blocks.
    pub fn from_matrix(m: &Mat, n: usize, l: usize) -> Result<Self> {
        let nb = num_f_blocks(l);
        if m.ncols() != n * nb {
            return Err(Error::Dimension(format!("F has {} columns, expected {}", m.ncols(), n * nb)));
        }
        Self::new((0..nb).map(|k| m.columns(k * n, n).into_owned()).collect(), l)
    }

    pub fn to_matrix(&self) -> Mat {
        linalg::hstack(&self.blocks.iter().collect::<Vec<_>>())
    }

    /// Scalar weights of each block in `F(p)`.
    pub fn weights(p: &Vector) -> Vec<f64> {
        let l = p.len();
        let mut w = Vec::with_capacity(num_f_blocks(l));
        w.push(1.0);
        w.extend(p.iter().copied());
        for i in 0..l {
            for j in 0..l {
                w.push(p[i] * p[j]);
            }
        }
        w
    }
}

/// `F(p) = F_0 + sum_i p_i F_i + sum_ij p_i p_j F_ij`.
pub fn eval_f(f: &ScriptF, p: &Vector) -> Result<Mat> {
    if p.len() != f.l {
        return Err(Error::Dimension(format!("p has length {}, expected {}", p.len(), f.l)));
    }
    let mut out = Mat::zeros(f.t, f.n);
    for (b, w) in f.blocks.iter().zip(ScriptF::weights(p)) {
        out += b * w;
    }
    Ok(out)
}

/// Selector `S_k` with `F * S_k = F_k` for the stacked matrix `F`.
pub fn block_selector(n: usize, l: usize, k: usize) -> Mat {
    let mut s = Mat::zeros(n * num_f_blocks(l), n);
    for a in 0..n {
        s[(k * n + a, a)] = 1.0;
    }
    s
}

/// `F(p)` as a single linear map of the stacked matrix: `F * sum_k w_k S_k`.
pub fn f_weight_matrix(n: usize, l: usize, p: &Vector) -> Mat {
    let mut s = Mat::zeros(n * num_f_blocks(l), n);
    for (k, w) in ScriptF::weights(p).into_iter().enumerate() {
        for a in 0..n {
            s[(k * n + a, a)] = w;
        }
    }
    s
}

/// `F_Q` of shape `T(1+l) x n(1+l)`: row block 0 is `[F_0 | F_1..F_l]`,
/// row block `1+i` is `[0 | F_i1..F_il]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FQuad {
    pub t: usize,
    pub n: usize,
    pub l: usize,
    pub mat: Mat,
}

impl FQuad {
    pub fn q00(&self) -> Mat {
        self.mat.view((0, 0), (self.t, self.n)).into_owned()
    }
    pub fn q01(&self) -> Mat {
        self.mat.view((0, self.n), (self.t, self.l * self.n)).into_owned()
    }
    pub fn q10(&self) -> Mat {
        self.mat.view((self.t, 0), (self.l * self.t, self.n)).into_owned()
    }
    pub fn q11(&self) -> Mat {
        self.mat.view((self.t, self.n), (self.l * self.t, self.l * self.n)).into_owned()
    }

    /// `[I_T; p (x) I_T]' F_Q [I_n; p (x) I_n]`.
    pub fn reconstruct(&self, p: &Vector) -> Mat {
        lift_matrix(p, self.t).transpose() * &self.mat * lift_matrix(p, self.n)
    }
}

/// `[I_d; p (x) I_d]`.
pub fn lift_matrix(p: &Vector, d: usize) -> Mat {
    let l = p.len();
    let mut m = Mat::zeros((1 + l) * d, d);
    for a in 0..d {
        m[(a, a)] = 1.0;
        for i in 0..l {
            m[((1 + i) * d + a, a)] = p[i];
        }
    }
    m
}

/// `(row block, column block, F block)` placements of the canonical layout.
fn fq_placements(l: usize) -> Vec<(usize, usize, usize)> {
    let mut out = vec![(0, 0, 0)];
    for i in 0..l {
        out.push((0, 1 + i, 1 + i));
    }
    for i in 0..l {
        for j in 0..l {
            out.push((1 + i, 1 + j, quad_index(l, i, j)));
        }
    }
    out
}

/// `(L, R)` pairs with `F_Q = sum L * F * R` for the stacked matrix `F`.
pub fn fq_maps(t: usize, n: usize, l: usize) -> Vec<(Mat, Mat)> {
    fq_placements(l)
        .into_iter()
        .map(|(rb, cb, k)| {
            let mut left = Mat::zeros(t * (1 + l), t);
            for a in 0..t {
                left[(rb * t + a, a)] = 1.0;
            }
            let mut right = Mat::zeros(n * num_f_blocks(l), n * (1 + l));
            for a in 0..n {
                right[(k * n + a, cb * n + a)] = 1.0;
            }
            (left, right)
        })
        .collect()
}

pub fn build_fq(f: &ScriptF) -> FQuad {
    let mut mat = Mat::zeros(f.t * (1 + f.l), f.n * (1 + f.l));
    for (rb, cb, k) in fq_placements(f.l) {
        mat.view_mut((rb * f.t, cb * f.n), (f.t, f.n)).copy_from(&f.blocks[k]);
    }
    FQuad { t: f.t, n: f.n, l: f.l, mat }
}

/// `F_Q` as an expression in the stacked variable `F` (`T x n(1+l+l^2)`).
pub fn fq_expr(fvar: VariableHandle, t: usize, n: usize, l: usize) -> Expr {
    let mut out = Expr::zeros(t * (1 + l), n * (1 + l));
    for (left, right) in fq_maps(t, n, l) {
        out = out.add(Expr::product(&left, fvar, &right));
    }
    out
}

/// Lifting matrices for channels of sizes `dims`, each channel of `Phi`
/// having size `(1+l) d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lfr {
    pub dims: Vec<usize>,
    pub l: usize,
    pub m12: Mat,
    pub m21: Mat,
    pub m22: Mat,
}

impl Lfr {
    pub fn new(dims: &[usize], l: usize) -> Self {
        let m12: Vec<Mat> = dims.iter().map(|&d| linalg::kron(&Mat::from_element(l, 1, 1.0), &Mat::identity(d, d))).collect();
        let m21: Vec<Mat> =
            dims.iter().map(|&d| linalg::vstack(&[&Mat::zeros(d, l * d), &Mat::identity(l * d, l * d)])).collect();
        let m22: Vec<Mat> = dims.iter().map(|&d| linalg::vstack(&[&Mat::identity(d, d), &Mat::zeros(l * d, d)])).collect();
        let r = |v: &Vec<Mat>| linalg::blkdiag(&v.iter().collect::<Vec<_>>());
        Self { dims: dims.to_vec(), l, m12: r(&m12), m21: r(&m21), m22: r(&m22) }
    }

    /// Sum of channel sizes.
    pub fn size(&self) -> usize {
        self.dims.iter().sum()
    }

    /// `blkdiag over channels of Diag(p) (x) I_d`.
    pub fn upsilon(&self, p: &Vector) -> Mat {
        let diag = Mat::from_diagonal(p);
        let blocks: Vec<Mat> = self.dims.iter().map(|&d| linalg::kron(&diag, &Mat::identity(d, d))).collect();
        linalg::blkdiag(&blocks.iter().collect::<Vec<_>>())
    }

    /// `M(p) = M22 + M21 Upsilon(p) M12`, the channel-wise `[I; p (x) I]`.
    pub fn m(&self, p: &Vector) -> Mat {
        &self.m22 + &self.m21 * self.upsilon(p) * &self.m12
    }

    /// `[[0, M12], [I, 0]]`.
    pub fn j(&self) -> Mat {
        let ln = self.l * self.size();
        let nn = self.size();
        let mut out = Mat::zeros(2 * ln, ln + nn);
        out.view_mut((0, ln), (ln, nn)).copy_from(&self.m12);
        out.view_mut((ln, 0), (ln, ln)).copy_from(&Mat::identity(ln, ln));
        out
    }

    /// `[M21, M22]`.
    pub fn k(&self) -> Mat {
        linalg::hstack(&[&self.m21, &self.m22])
    }

    /// `[I; Upsilon(p)]`.
    pub fn multiplier_frame(&self, p: &Vector) -> Mat {
        let ln = self.l * self.size();
        linalg::vstack(&[&Mat::identity(ln, ln), &self.upsilon(p)])
    }
}

/// Constraint handles added by [`add_full_block_s_procedure`].
#[derive(Debug, Clone, PartialEq)]
pub struct SProcedure {
    pub xi: Option<VariableHandle>,
    pub lfr: Lfr,
}

/// Enforce `M(p)' Phi M(p) > 0` on the box spanned by `vertices` via a full
/// symmetric multiplier `Xi`:
/// `J' Xi J - K' Phi K < 0`, `[I; Upsilon]' Xi [I; Upsilon] >= 0` at every
/// vertex, and `Xi_22 < 0`. With `l = 0` this is `Phi > 0` directly.
pub fn add_full_block_s_procedure(
    prog: &mut Program,
    tag: &str,
    phi: Expr,
    dims: &[usize],
    l: usize,
    vertices: &[Vector],
    margin: f64,
) -> Result<SProcedure> {
    let lfr = Lfr::new(dims, l);
    let nn = lfr.size();
    if phi.shape() != ((1 + l) * nn, (1 + l) * nn) {
        return Err(Error::Dimension(format!("Phi is {:?}, channels need {}", phi.shape(), (1 + l) * nn)));
    }
    if l == 0 {
        prog.add_psd_named(&format!("{tag}:main"), phi, Sense::Geq, margin)?;
        return Ok(SProcedure { xi: None, lfr });
    }
    if vertices.is_empty() {
        return Err(Error::Precondition("no scheduling vertices".into()));
    }
    let ln = l * nn;
    let xi = prog.declare_named(VarKind::Symmetric(2 * ln), &format!("{tag}:Xi"));
    let j = lfr.j();
    let k = lfr.k();
    let main = Expr::product(&j.transpose(), xi, &j).sub(phi.left_mul(&k.transpose()).right_mul(&k));
    prog.add_psd_named(&format!("{tag}:main"), main, Sense::Leq, margin)?;
    for (idx, v) in vertices.iter().enumerate() {
        if v.len() != l {
            return Err(Error::Dimension(format!("vertex {idx} has length {}, expected {l}", v.len())));
        }
        let fr = lfr.multiplier_frame(v);
        prog.add_psd_named(&format!("{tag}:vertex{idx}"), Expr::product(&fr.transpose(), xi, &fr), Sense::Geq, 0.0)?;
    }
    let mut sel = Mat::zeros(2 * ln, ln);
    for a in 0..ln {
        sel[(ln + a, a)] = 1.0;
    }
    prog.add_psd_named(&format!("{tag}:xi22"), Expr::product(&sel.transpose(), xi, &sel), Sense::Leq, margin)?;
    Ok(SProcedure { xi: Some(xi), lfr })
}
