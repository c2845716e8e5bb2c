//! Affine LPV models, Kronecker lifting, Hankel matrices, scheduling boxes and
//! open/closed-loop simulation.


use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// `M(p) = M0 + sum_i p_i M_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixFunction {
    pub base: Mat,
    pub coeffs: Vec<Mat>,
}

impl AffineMatrixFunction {
    pub fn new(base: Mat, coeffs: Vec<Mat>) -> Result<Self> {
        for (i, c) in coeffs.iter().enumerate() {
            if c.shape() != base.shape() {
                return Err(Error::Dimension(format!(
                    "coefficient {} has shape {:?}, base has {:?}",
                    i + 1,
                    c.shape(),
                    base.shape()
                )));
            }
        }
        Ok(Self { base, coeffs })
    }

    /// Parameter-independent function with `l` zero coefficients.
    pub fn constant(base: Mat, l: usize) -> Self {
        let z = Mat::zeros(base.nrows(), base.ncols());
        Self { base, coeffs: vec![z; l] }
    }

    pub fn zeros(rows: usize, cols: usize, l: usize) -> Self {
        Self::constant(Mat::zeros(rows, cols), l)
    }

    pub fn l(&self) -> usize {
        self.coeffs.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.base.shape()
    }

    pub fn eval(&self, p: &Vector) -> Result<Mat> {
        if p.len() != self.l() {
            return Err(Error::Dimension(format!("schedule has length {}, expected {}", p.len(), self.l())));
        }
        let mut m = self.base.clone();
        for (pi, c) in p.iter().zip(&self.coeffs) {
            m += c * *pi;
        }
        Ok(m)
    }

    /// `[M0, M1, ..., M_l]` side by side.
    pub fn stacked(&self) -> Mat {
        let (r, c) = self.shape();
        let mut out = Mat::zeros(r, c * (1 + self.l()));
        out.view_mut((0, 0), (r, c)).copy_from(&self.base);
        for (i, m) in self.coeffs.iter().enumerate() {
            out.view_mut((0, c * (i + 1)), (r, c)).copy_from(m);
        }
        out
    }

    /// Inverse of [`stacked`](Self::stacked).
    pub fn from_stacked(m: &Mat, cols: usize, l: usize) -> Result<Self> {
        if m.ncols() != cols * (1 + l) {
            return Err(Error::Dimension(format!("{} columns cannot split into {} blocks of {}", m.ncols(), 1 + l, cols)));
        }
        let blk = |i: usize| m.columns(i * cols, cols).into_owned();
        Ok(Self { base: blk(0), coeffs: (1..=l).map(blk).collect() })
    }
}

/// Free-function form of [`AffineMatrixFunction::eval`].
pub fn eval_affine(f: &AffineMatrixFunction, p: &Vector) -> Result<Mat> {
    f.eval(p)
}

/// `p ⊗ x`: l blocks of size n, block i equal to `p_i x`.
pub fn kron_vec(p: &Vector, x: &Vector) -> Vector {
    let n = x.len();
    let mut out = Vector::zeros(p.len() * n);
    for (i, pi) in p.iter().enumerate() {
        out.rows_mut(i * n, n).copy_from(&(x * *pi));
    }
    out
}

/// `Col(x, p ⊗ x)`.
pub fn lift_state(x: &Vector, p: &Vector) -> Vector {
    let n = x.len();
    let mut out = Vector::zeros(n * (1 + p.len()));
    out.rows_mut(0, n).copy_from(x);
    out.rows_mut(n, n * p.len()).copy_from(&kron_vec(p, x));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpvSystem {
    pub a: AffineMatrixFunction,
    pub b: AffineMatrixFunction,
    pub c: AffineMatrixFunction,
    pub d: AffineMatrixFunction,
}

impl LpvSystem {
    pub fn new(
        a: AffineMatrixFunction,
        b: AffineMatrixFunction,
        c: AffineMatrixFunction,
        d: AffineMatrixFunction,
    ) -> Result<Self> {
        let (n, n2) = a.shape();
        let (nb, m) = b.shape();
        let (r, nc) = c.shape();
        let (rd, md) = d.shape();
        if n != n2 || nb != n || nc != n || rd != r || md != m {
            return Err(Error::Dimension(format!(
                "A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        let l = a.l();
        if b.l() != l || c.l() != l || d.l() != l {
            return Err(Error::Dimension("A, B, C, D must share the scheduling dimension".into()));
        }
        Ok(Self { a, b, c, d })
    }

    /// System with `C = I`, `D = 0` (full state output).
    pub fn state_output(a: AffineMatrixFunction, b: AffineMatrixFunction) -> Result<Self> {
        let (n, _) = a.shape();
        let (_, m) = b.shape();
        let l = a.l();
        Self::new(a, b, AffineMatrixFunction::constant(Mat::identity(n, n), l), AffineMatrixFunction::zeros(n, m, l))
    }

    pub fn n(&self) -> usize {
        self.a.base.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.base.ncols()
    }
    pub fn r(&self) -> usize {
        self.c.base.nrows()
    }
    pub fn l(&self) -> usize {
        self.a.l()
    }

    /// One step: `x+ = A(p)x + B(p)u + w`, `y = C(p)x + D(p)u`.
    pub fn step(&self, x: &Vector, u: &Vector, p: &Vector, w: &Vector) -> Result<(Vector, Vector)> {
        if x.len() != self.n() || u.len() != self.m() || w.len() != self.n() {
            return Err(Error::Dimension(format!(
                "x {}, u {}, w {} for n={}, m={}",
                x.len(),
                u.len(),
                w.len(),
                self.n(),
                self.m()
            )));
        }
        let a = self.a.eval(p)?;
        let b = self.b.eval(p)?;
        let xn = &a * x + &b * u + w;
        let y = self.c.eval(p)? * x + self.d.eval(p)? * u;
        Ok((xn, y))
    }
}

pub fn step(sys: &LpvSystem, x: &Vector, u: &Vector, p: &Vector, w: &Vector) -> Result<(Vector, Vector)> {
    sys.step(x, u, p, w)
}

/// Block Hankel matrix of depth `depth` built from `seq`.
pub fn hankel(seq: &[Vector], depth: usize) -> Result<Mat> {
    let t = seq.len();
    if depth == 0 || depth > t {
        return Err(Error::Precondition(format!("Hankel depth {depth} invalid for sequence of length {t}")));
    }
    let d = seq[0].len();
    let cols = t - depth + 1;
    let mut h = Mat::zeros(depth * d, cols);
    for i in 0..depth {
        for j in 0..cols {
            h.view_mut((i * d, j), (d, 1)).copy_from(&seq[i + j]);
        }
    }
    Ok(h)
}

/// Axis-aligned box of scheduling values.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub const MAX_ENUMERATED_DIM: usize = 20;

impl SchedulingBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension("box bounds differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a <= b)) {
            return Err(Error::Precondition("box requires lower <= upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn symmetric(l: usize, radius: f64) -> Self {
        Self { lower: vec![-radius; l], upper: vec![radius; l] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &Vector, tol: f64) -> bool {
        p.len() == self.dim() && p.iter().enumerate().all(|(i, v)| *v >= self.lower[i] - tol && *v <= self.upper[i] + tol)
    }

    /// Corners in lexicographic order (first coordinate slowest, lower before
    /// upper). Degenerate coordinates contribute a single value.
    pub fn vertices(&self) -> Result<Vec<Vector>> {
        let l = self.dim();
        if l > MAX_ENUMERATED_DIM {
            return Err(Error::Precondition(format!("{l} scheduling dimensions exceed enumeration limit")));
        }
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for i in 0..l {
            let choices: Vec<f64> =
                if self.lower[i] == self.upper[i] { vec![self.lower[i]] } else { vec![self.lower[i], self.upper[i]] };
            out = out
                .into_iter()
                .flat_map(|pre| {
                    choices.iter().map(move |&c| {
                        let mut v = pre.clone();
                        v.push(c);
                        v
                    })
                })
                .collect();
        }
        Ok(out.into_iter().map(Vector::from_vec).collect())
    }
}

pub fn vertices(b: &SchedulingBox) -> Result<Vec<Vector>> {
    b.vertices()
}

/// Recorded closed-loop or open-loop run. Every sequence has `horizon + 1`
/// entries; the perturbation at the last index is zero because no step follows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationTrace {
    pub x: Vec<Vector>,
    pub u: Vec<Vector>,
    pub p: Vec<Vector>,
    pub w: Vec<Vector>,
    pub y: Vec<Vector>,
    pub triggered: Vec<bool>,
    pub lyapunov: Option<Vec<f64>>,
    /// Sampling-induced error of event-triggered runs.
    pub nu: Option<Vec<Vector>>,
    /// Reference samples of tracking runs.
    pub reference: Option<Vec<Vector>>,
    pub horizon: usize,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.x.len()
    }
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Attach `V(x) = x' P^{-1} x` at every sample.
    pub fn with_lyapunov(mut self, p_inv: &Mat) -> Self {
        self.lyapunov = Some(self.x.iter().map(|x| x.dot(&(p_inv * x))).collect());
        self
    }
}

/// A sampled signal indexed by time.
pub trait SignalLaw {
    fn sample(&mut self, k: usize) -> Vector;
}

impl<F: FnMut(usize) -> Vector> SignalLaw for F {
    fn sample(&mut self, k: usize) -> Vector {
        self(k)
    }
}

/// Iterate the plant under `feedback(x, p, k)`. Every sample counts as a
/// transmission.
pub fn simulate<F, S, W>(
    sys: &LpvSystem,
    mut feedback: F,
    schedule: &mut S,
    noise: &mut W,
    x0: &Vector,
    horizon: usize,
) -> Result<SimulationTrace>
where
    F: FnMut(&Vector, &Vector, usize) -> Vector,
    S: SignalLaw + ?Sized,
    W: SignalLaw + ?Sized,
{
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    if x0.len() != sys.n() {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), sys.n())));
    }
    let mut tr = SimulationTrace { horizon, ..Default::default() };
    let mut x = x0.clone();
    for k in 0..=horizon {
        let p = schedule.sample(k);
        let u = feedback(&x, &p, k);
        let w = if k < horizon { noise.sample(k) } else { Vector::zeros(sys.n()) };
        let (xn, y) = sys.step(&x, &u, &p, &w)?;
        tr.x.push(x.clone());
        tr.u.push(u);
        tr.p.push(p);
        tr.w.push(w);
        tr.y.push(y);
        tr.triggered.push(true);
        x = xn;
    }
    Ok(tr)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("spectral radius of non-square {:?}", m.shape())));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}
