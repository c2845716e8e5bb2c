//! Excitation experiments, data matrices, excitation checks and least-squares
//! identification.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lpv::{hankel, kron_vec, lift_state, AffineMatrixFunction, LpvSystem, SignalLaw};

/// Default relative rank threshold.
pub const RANK_TOL: f64 = 1e-9;

/// Data matrices of one open-loop experiment (columns indexed by time).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub u: Mat,
    pub up: Mat,
    pub x: Mat,
    pub xp: Mat,
    pub x_next: Mat,
    pub w: Mat,
    pub wp: Mat,
    pub y: Mat,
    pub schedule: Vec<Vector>,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub l: usize,
    pub t: usize,
    pub delta: f64,
    /// Set when `t` is below [`min_data_length`].
    pub short: bool,
}

/// `G`, `Theta` and `Z` built from one data set.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorMatrices {
    pub g: Mat,
    pub theta: Mat,
    pub z: Mat,
}

impl ExperimentData {
    /// `G = Col(X, X_P, U, U_P)`.
    pub fn g(&self) -> Mat {
        linalg::vstack(&[&self.x, &self.xp, &self.u, &self.up])
    }

    /// `Theta = Col(U, U_P, X, X_P)`.
    pub fn theta(&self) -> Mat {
        linalg::vstack(&[&self.u, &self.up, &self.x, &self.xp])
    }

    pub fn z(&self) -> Mat {
        linalg::vstack(&[&self.x, &self.xp])
    }

    pub fn regressors(&self) -> RegressorMatrices {
        RegressorMatrices { g: self.g(), theta: self.theta(), z: self.z() }
    }

    /// `Delta = sqrt(T) * delta * I_n`.
    pub fn delta_matrix(&self) -> Mat {
        Mat::identity(self.n, self.n) * ((self.t as f64).sqrt() * self.delta)
    }

    /// Full regressor rank `(1+l)(n+m)`.
    pub fn full_rank(&self) -> usize {
        (1 + self.l) * (self.n + self.m)
    }

    /// Successor data with the perturbation removed (exact when `W` is known).
    pub fn x_next_clean(&self) -> Mat {
        &self.x_next - &self.w
    }

    /// Assemble from recorded sequences of equal length.
    pub fn from_sequences(
        x: &[Vector],
        u: &[Vector],
        p: &[Vector],
        w: &[Vector],
        x_next: &[Vector],
        y: &[Vector],
        delta: f64,
    ) -> Result<Self> {
        let t = x.len();
        if t == 0 || [u.len(), p.len(), w.len(), x_next.len(), y.len()].iter().any(|&k| k != t) {
            return Err(Error::Dimension("experiment sequences must share a non-zero length".into()));
        }
        let (n, m, l, r) = (x[0].len(), u[0].len(), p[0].len(), y[0].len());
        let cols = |f: &dyn Fn(usize) -> Vector, rows: usize| {
            let mut out = Mat::zeros(rows, t);
            for k in 0..t {
                out.set_column(k, &f(k));
            }
            out
        };
        Ok(Self {
            u: cols(&|k| u[k].clone(), m),
            up: cols(&|k| kron_vec(&p[k], &u[k]), l * m),
            x: cols(&|k| x[k].clone(), n),
            xp: cols(&|k| kron_vec(&p[k], &x[k]), l * n),
            x_next: cols(&|k| x_next[k].clone(), n),
            w: cols(&|k| w[k].clone(), n),
            wp: cols(&|k| kron_vec(&p[k], &w[k]), l * n),
            y: cols(&|k| y[k].clone(), r),
            schedule: p.to_vec(),
            n,
            m,
            r,
            l,
            t,
            delta,
            short: t < min_data_length(n, m, l),
        })
    }
}

/// `n(1+l)(1+m(1+l)) - 1`.
pub fn min_data_length(n: usize, m: usize, l: usize) -> usize {
    n * (1 + l) * (1 + m * (1 + l)) - 1
}

/// Run an open-loop experiment of length `t` and record its data matrices.
pub fn collect<I, S, W>(
    sys: &LpvSystem,
    t: usize,
    input: &mut I,
    schedule: &mut S,
    noise: &mut W,
    x0: &Vector,
    delta: f64,
) -> Result<ExperimentData>
where
    I: SignalLaw + ?Sized,
    S: SignalLaw + ?Sized,
    W: SignalLaw + ?Sized,
{
    if t == 0 {
        return Err(Error::Precondition("experiment length must be at least 1".into()));
    }
    if x0.len() != sys.n() {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), sys.n())));
    }
    let (mut xs, mut us, mut ps, mut ws, mut xn, mut ys) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    let mut x = x0.clone();
    for k in 0..t {
        let p = schedule.sample(k);
        let u = input.sample(k);
        let w = noise.sample(k);
        let (next, y) = sys.step(&x, &u, &p, &w)?;
        xs.push(x);
        us.push(u);
        ps.push(p);
        ws.push(w);
        ys.push(y);
        xn.push(next.clone());
        x = next;
    }
    ExperimentData::from_sequences(&xs, &us, &ps, &ws, &xn, &ys, delta)
}

/// Smallest singular value of the depth-`depth` Hankel matrix of
/// `Col(u_k, p_k ⊗ u_k)`; zero when the Hankel matrix is wider in rows than
/// in columns.
pub fn theta_pe_margin(u_seq: &[Vector], p_seq: &[Vector], depth: usize) -> Result<f64> {
    if u_seq.len() != p_seq.len() {
        return Err(Error::Dimension("input and schedule sequences differ in length".into()));
    }
    if u_seq.len() < depth {
        return Err(Error::Precondition(format!("sequence of length {} shorter than order {depth}", u_seq.len())));
    }
    let lifted: Vec<Vector> = u_seq.iter().zip(p_seq).map(|(u, p)| lift_state(u, p)).collect();
    let h = hankel(&lifted, depth)?;
    if h.ncols() < h.nrows() {
        return Ok(0.0);
    }
    let sv = linalg::singular_values(&h);
    Ok(sv.get(h.nrows() - 1).copied().unwrap_or(0.0))
}

/// Numerical rank of `Theta` with relative threshold `tol`.
pub fn regressor_rank(data: &ExperimentData, tol: f64) -> usize {
    linalg::numerical_rank(&data.theta(), tol)
}

/// Least-squares stacked matrices `[A0..Al]` and `[B0..Bl]` from
/// `(X+ - W) G^+`. With `subtract_w` false the raw successor data is used.
pub fn identify_with(data: &ExperimentData, subtract_w: bool) -> Result<(Mat, Mat)> {
    let rank = regressor_rank(data, RANK_TOL);
    let required = data.full_rank();
    if rank < required {
        return Err(Error::RankDeficient { rank, required });
    }
    let lhs = if subtract_w { data.x_next_clean() } else { data.x_next.clone() };
    let ab = lhs * linalg::pinv(&data.g(), 1e-12);
    let na = data.n * (1 + data.l);
    Ok((ab.columns(0, na).into_owned(), ab.columns(na, data.m * (1 + data.l)).into_owned()))
}

/// Identification with the recorded perturbation subtracted.
pub fn identify(data: &ExperimentData) -> Result<(Mat, Mat)> {
    identify_with(data, true)
}

/// Identified `A(p)` and `B(p)` as affine functions.
pub fn identify_affine(data: &ExperimentData) -> Result<(AffineMatrixFunction, AffineMatrixFunction)> {
    let (a, b) = identify(data)?;
    Ok((
        AffineMatrixFunction::from_stacked(&a, data.n, data.l)?,
        AffineMatrixFunction::from_stacked(&b, data.m, data.l)?,
    ))
}

/// Upper bound on the norm of the accumulated perturbation data along the
/// schedule `p_seq`: `sum_i (1+|p_i|) [sum_{j<i} prod_{h=j}^{i-1} |A(p_h)| + 1] delta`
/// over `i = 1..T-1` (the accumulated perturbation at `i = 0` is zero).
pub fn perturbation_accumulation_bound(a: &AffineMatrixFunction, p_seq: &[Vector], delta: f64) -> Result<f64> {
    let norms: Vec<f64> = p_seq.iter().map(|p| a.eval(p).map(|m| linalg::spectral_norm(&m))).collect::<Result<_>>()?;
    let mut total = 0.0;
    for i in 1..p_seq.len() {
        let mut inner = 1.0;
        for j in 1..i {
            inner += norms[j..i].iter().product::<f64>();
        }
        total += (1.0 + p_seq[i].norm()) * inner * delta;
    }
    Ok(total)
}
