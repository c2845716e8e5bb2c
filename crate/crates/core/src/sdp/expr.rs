//! Matrix decision variables and affine expressions in them.

use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Symmetric(usize),
    Rectangular(usize, usize),
    Scalar,
}

impl VarKind {
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            VarKind::Symmetric(d) => (d, d),
            VarKind::Rectangular(r, c) => (r, c),
            VarKind::Scalar => (1, 1),
        }
    }

    /// Number of free scalar components.
    pub fn components(&self) -> usize {
        match *self {
            VarKind::Symmetric(d) => d * (d + 1) / 2,
            VarKind::Rectangular(r, c) => r * c,
            VarKind::Scalar => 1,
        }
    }

    /// Matrix positions `(i, j)` touched by component `c`; symmetric
    /// off-diagonal components touch both `(i, j)` and `(j, i)`.
    pub fn component_entries(&self, c: usize) -> ((usize, usize), Option<(usize, usize)>) {
        match *self {
            VarKind::Symmetric(_) => {
                let (i, j) = sym_component(c);
                if i == j {
                    ((i, j), None)
                } else {
                    ((i, j), Some((j, i)))
                }
            }
            VarKind::Rectangular(r, _) => ((c % r, c / r), None),
            VarKind::Scalar => ((0, 0), None),
        }
    }

    /// Build a value matrix from component values.
    pub fn assemble(&self, comps: &[f64]) -> Mat {
        let (r, c) = self.shape();
        let mut m = Mat::zeros(r, c);
        for (k, v) in comps.iter().enumerate() {
            let (a, b) = self.component_entries(k);
            m[a] = *v;
            if let Some(b) = b {
                m[b] = *v;
            }
        }
        m
    }

    /// Component values of a matrix (upper triangle for symmetric kinds).
    pub fn flatten(&self, m: &Mat) -> Vec<f64> {
        (0..self.components()).map(|k| m[self.component_entries(k).0]).collect()
    }
}

/// Symmetric component index to `(row, col)` with `row <= col`, column by column.
pub fn sym_component(c: usize) -> (usize, usize) {
    let mut j = 0;
    let mut start = 0;
    while start + j + 1 <= c {
        start += j + 1;
        j += 1;
    }
    (c - start, j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VariableHandle {
    pub id: usize,
    pub kind: VarKind,
}

impl VariableHandle {
    pub fn shape(&self) -> (usize, usize) {
        self.kind.shape()
    }
}

/// `left * V * right` or `left * V' * right`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub left: Mat,
    pub var: VariableHandle,
    pub right: Mat,
    pub transpose: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixExpression {
    pub constant: Mat,
    pub terms: Vec<Term>,
}

pub type Expr = AffineMatrixExpression;

impl AffineMatrixExpression {
    pub fn constant(m: Mat) -> Self {
        Self { constant: m, terms: Vec::new() }
    }

    pub fn zeros(r: usize, c: usize) -> Self {
        Self::constant(Mat::zeros(r, c))
    }

    pub fn var(h: VariableHandle) -> Self {
        let (r, c) = h.shape();
        Self {
            constant: Mat::zeros(r, c),
            terms: vec![Term { left: Mat::identity(r, r), var: h, right: Mat::identity(c, c), transpose: false }],
        }
    }

    /// `left * V * right`.
    pub fn product(left: &Mat, h: VariableHandle, right: &Mat) -> Self {
        Self::var(h).left_mul(left).right_mul(right)
    }

    /// Scalar variable times a constant matrix.
    pub fn scalar_times(h: VariableHandle, m: &Mat) -> Self {
        assert_eq!(h.kind, VarKind::Scalar, "scalar_times needs a scalar variable");
        let (r, c) = m.shape();
        let mut out = Self::zeros(r, c);
        for k in 0..c {
            let col = m.column(k);
            if col.iter().all(|v| *v == 0.0) {
                continue;
            }
            let mut right = Mat::zeros(1, c);
            right[(0, k)] = 1.0;
            out.terms.push(Term { left: Mat::from_column_slice(r, 1, col.as_slice()), var: h, right, transpose: false });
        }
        out
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn left_mul(mut self, l: &Mat) -> Self {
        assert_eq!(l.ncols(), self.constant.nrows(), "left multiplier shape");
        self.constant = l * &self.constant;
        for t in &mut self.terms {
            t.left = l * &t.left;
        }
        self
    }

    pub fn right_mul(mut self, r: &Mat) -> Self {
        assert_eq!(r.nrows(), self.constant.ncols(), "right multiplier shape");
        self.constant = &self.constant * r;
        for t in &mut self.terms {
            t.right = &t.right * r;
        }
        self
    }

    pub fn transpose(self) -> Self {
        Self {
            constant: self.constant.transpose(),
            terms: self
                .terms
                .into_iter()
                .map(|t| Term { left: t.right.transpose(), var: t.var, right: t.left.transpose(), transpose: !t.transpose })
                .collect(),
        }
    }

    pub fn scale(mut self, a: f64) -> Self {
        self.constant *= a;
        for t in &mut self.terms {
            t.left *= a;
        }
        self
    }

    pub fn add(mut self, other: Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "sum of expressions with different shapes");
        self.constant += other.constant;
        self.terms.extend(other.terms);
        self
    }

    pub fn sub(self, other: Self) -> Self {
        self.add(other.scale(-1.0))
    }

    pub fn add_const(mut self, m: &Mat) -> Self {
        self.constant += m;
        self
    }

    /// Place this expression at `(r0, c0)` inside a `rows x cols` zero matrix.
    pub fn embed(self, rows: usize, cols: usize, r0: usize, c0: usize) -> Self {
        let (r, c) = self.shape();
        let mut li = Mat::zeros(rows, r);
        for i in 0..r {
            li[(r0 + i, i)] = 1.0;
        }
        let mut ri = Mat::zeros(c, cols);
        for j in 0..c {
            ri[(j, c0 + j)] = 1.0;
        }
        self.left_mul(&li).right_mul(&ri)
    }

    /// Block matrix from a grid of optional expressions (`None` is zero).
    pub fn block(row_sizes: &[usize], col_sizes: &[usize], grid: Vec<Vec<Option<Self>>>) -> Self {
        let rows: usize = row_sizes.iter().sum();
        let cols: usize = col_sizes.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in grid.into_iter().enumerate() {
            let mut c0 = 0;
            for (bj, e) in row.into_iter().enumerate() {
                if let Some(e) = e {
                    assert_eq!(e.shape(), (row_sizes[bi], col_sizes[bj]), "block ({bi},{bj}) shape");
                    let placed = e.embed(rows, cols, r0, c0);
                    out.constant += placed.constant;
                    out.terms.extend(placed.terms);
                }
                c0 += col_sizes[bj];
            }
            r0 += row_sizes[bi];
        }
        out
    }

    /// Evaluate with `value(handle)` supplying each variable's matrix.
    pub fn eval(&self, value: &dyn Fn(&VariableHandle) -> Mat) -> Mat {
        let mut out = self.constant.clone();
        for t in &self.terms {
            let v = value(&t.var);
            if t.transpose {
                out += &t.left * v.transpose() * &t.right;
            } else {
                out += &t.left * v * &t.right;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_component_order() {
        assert_eq!(sym_component(0), (0, 0));
        assert_eq!(sym_component(1), (0, 1));
        assert_eq!(sym_component(2), (1, 1));
        assert_eq!(sym_component(3), (0, 2));
        assert_eq!(sym_component(5), (2, 2));
        let k = VarKind::Symmetric(3);
        let m = k.assemble(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m, Mat::from_row_slice(3, 3, &[1.0, 2.0, 4.0, 2.0, 3.0, 5.0, 4.0, 5.0, 6.0]));
        assert_eq!(k.flatten(&m), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn component_counts() {
        assert_eq!(VarKind::Symmetric(2).components(), 3);
        assert_eq!(VarKind::Rectangular(1, 2).components(), 2);
        assert_eq!(VarKind::Scalar.components(), 1);
    }

    #[test]
    fn expression_algebra_evaluates() {
        let h = VariableHandle { id: 0, kind: VarKind::Rectangular(2, 3) };
        let s = VariableHandle { id: 1, kind: VarKind::Scalar };
        let v = Mat::from_fn(2, 3, |i, j| (i * 3 + j) as f64 + 1.0);
        let l = Mat::from_fn(4, 2, |i, j| (i as f64) - (j as f64) * 0.5);
        let r = Mat::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        let k = Mat::from_fn(4, 2, |i, j| (i * j) as f64 + 0.25);
        let e = Expr::product(&l, h, &r).add(Expr::scalar_times(s, &k)).add_const(&Mat::identity(4, 2));
        let value = |vh: &VariableHandle| if vh.id == 0 { v.clone() } else { Mat::from_element(1, 1, -2.0) };
        let direct = &l * &v * &r - &k * 2.0 + Mat::identity(4, 2);
        assert!((e.eval(&value) - &direct).abs().max() < 1e-12);
        assert!((e.clone().transpose().eval(&value) - direct.transpose()).abs().max() < 1e-12);
        let big = Expr::block(&[4, 1], &[2, 2], vec![vec![Some(e), None], vec![None, Some(Expr::constant(Mat::from_element(1, 2, 7.0)))]]);
        let bv = big.eval(&value);
        assert!((bv.view((0, 0), (4, 2)) - &direct).abs().max() < 1e-12);
        assert_eq!(bv[(4, 3)], 7.0);
        assert_eq!(bv[(0, 3)], 0.0);
    }
}
