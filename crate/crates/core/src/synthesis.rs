//! Data-driven robust stabilization: the certificate LMI for a fixed data
//! parametrization, the vertex-relaxed synthesis program, gain recovery and
//! closed-loop verification.

use rayon::prelude::*;

use crate::data::{regressor_rank, ExperimentData, RANK_TOL};
use crate::error::{Error, Result};
use crate::laws::{rng_for_trial, BallNoise, Stream, UniformLaw};
use crate::lfr::{self, add_full_block_s_procedure, build_fq, num_f_blocks, FQuad, SProcedure, ScriptF};
use crate::linalg::{self, Mat, Vector};
use crate::lpv::{simulate, spectral_radius, AffineMatrixFunction, LpvSystem, SchedulingBox};
use crate::sdp::{
    Expr, Program, Residuals, Sense, SdpBackend, Solution, SolveOptions, SolveStatus, VarKind, VariableHandle,
    STRICT_MARGIN,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    pub sigma: f64,
    pub beta: f64,
    /// Fixed multiplier scalar.
    pub eps: f64,
    /// Per-sample perturbation bound used in `Delta = sqrt(T) delta I`.
    pub delta: f64,
    pub trace_lo: f64,
    pub trace_hi: f64,
    /// Margin turning strict inequalities into non-strict ones.
    pub margin: f64,
    /// Use `X+ - W` instead of `X+` (only meaningful when `W` was recorded).
    pub subtract_known_noise: bool,
    /// Solve the small vertex-only program first and stop if it is infeasible.
    pub vertex_precheck: bool,
    /// Defaults to the unit box `[-1, 1]^l`.
    pub schedule_box: Option<SchedulingBox>,
}

impl SynthesisConfig {
    pub fn new(sigma: f64, beta: f64, eps: f64, delta: f64) -> Self {
        Self {
            sigma,
            beta,
            eps,
            delta,
            trace_lo: 0.1,
            trace_hi: 10.0,
            margin: STRICT_MARGIN,
            subtract_known_noise: false,
            vertex_precheck: true,
            schedule_box: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 1.0) {
            return Err(Error::Config(format!("sigma must exceed 1, got {}", self.sigma)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Config(format!("delta must be non-negative, got {}", self.delta)));
        }
        if !(self.trace_lo <= self.trace_hi) {
            return Err(Error::Config("trace bounds out of order".into()));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::Config("margin must be non-negative".into()));
        }
        Ok(())
    }

    pub fn schedule_box(&self, l: usize) -> Result<SchedulingBox> {
        match &self.schedule_box {
            Some(b) if b.dim() != l => Err(Error::Dimension(format!("scheduling box has dimension {}, data has {l}", b.dim()))),
            Some(b) => Ok(b.clone()),
            None => Ok(SchedulingBox::symmetric(l, 1.0)),
        }
    }
}

/// Successor data used by the programs.
pub fn successor_data(data: &ExperimentData, subtract_known_noise: bool) -> Mat {
    if subtract_known_noise {
        data.x_next_clean()
    } else {
        data.x_next.clone()
    }
}

/// `sqrt(T) delta I_n`.
pub fn delta_matrix(n: usize, t: usize, delta: f64) -> Mat {
    Mat::identity(n, n) * ((t as f64).sqrt() * delta)
}

/// Five-channel block shared by the certificate and its lifted version:
///
/// ```text
/// [ Y    0    XF'  Y    F' ]
/// [ 0    sY   Y    0    0  ]
/// [ XF   Y    Yb   0    0  ]
/// [ Y    0    0    Y/b  0  ]
/// [ F    0    0    0    E  ]
/// ```
pub fn five_block(y: Expr, ybar: Expr, xf: Expr, f: Expr, e: Mat, sigma: f64, beta: f64) -> Expr {
    let d = y.shape().0;
    let dt = f.shape().0;
    let sizes = [d, d, d, d, dt];
    let grid = vec![
        vec![Some(y.clone()), None, Some(xf.clone().transpose()), Some(y.clone()), Some(f.clone().transpose())],
        vec![None, Some(y.clone().scale(sigma)), Some(y.clone()), None, None],
        vec![Some(xf), Some(y.clone()), Some(ybar), None, None],
        vec![Some(y.clone()), None, None, Some(y.scale(1.0 / beta)), None],
        vec![Some(f), None, None, None, Some(Expr::constant(e))],
    ];
    Expr::block(&sizes, &sizes, grid)
}

/// Certificate matrix at one `p` with `F(p)` given as an expression.
pub fn certificate_expr(p: Expr, f: Expr, xplus: &Mat, delta: &Mat, cfg: &SynthesisConfig) -> Expr {
    let t = f.shape().0;
    let ybar = p.clone().add_const(&(delta * delta.transpose() * -cfg.eps));
    let xf = f.clone().left_mul(xplus);
    five_block(p, ybar, xf, f, Mat::identity(t, t) * cfg.eps, cfg.sigma, cfg.beta)
}

/// Lifted multiplier matrix over channels `[n, n, n, n, T]`, each of size `(1+l)d`.
pub fn lifted_phi(p: Expr, fq: Expr, xplus: &Mat, delta: &Mat, cfg: &SynthesisConfig, l: usize) -> Expr {
    let n = p.shape().0;
    let t = xplus.ncols();
    let dn = n * (1 + l);
    let dt = t * (1 + l);
    let y = p.clone().embed(dn, dn, 0, 0);
    let ybar = p.add_const(&(delta * delta.transpose() * -cfg.eps)).embed(dn, dn, 0, 0);
    let xcal = linalg::kron(&Mat::identity(1 + l, 1 + l), xplus);
    let mut e = Mat::zeros(dt, dt);
    e.view_mut((0, 0), (t, t)).fill_with_identity();
    e.view_mut((0, 0), (t, t)).scale_mut(cfg.eps);
    five_block(y, ybar, fq.clone().left_mul(&xcal), fq, e, cfg.sigma, cfg.beta)
}

fn check_rank(data: &ExperimentData) -> Result<()> {
    let rank = regressor_rank(data, RANK_TOL);
    let required = data.full_rank();
    if rank < required {
        return Err(Error::RankDeficient { rank, required });
    }
    Ok(())
}

/// Decision variables shared by the synthesis and vertex programs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreVariables {
    pub p: VariableHandle,
    pub z0: VariableHandle,
    pub f: VariableHandle,
}

/// A synthesis-type program with its variable handles.
#[derive(Debug, Clone)]
pub struct SynthesisProgram {
    pub program: Program,
    pub core: CoreVariables,
    pub zbar: Vec<VariableHandle>,
    pub sproc: Option<SProcedure>,
    pub vertices: Vec<Vector>,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub t: usize,
}

/// Right-hand side of `G F = R` in the stacked column blocks of `F`.
fn gain_link_rhs(p: VariableHandle, z0: VariableHandle, zbar: &[VariableHandle], n: usize, m: usize, l: usize) -> Expr {
    let rows = (1 + l) * (n + m);
    let cols = n * num_f_blocks(l);
    let u0 = n * (1 + l);
    let up0 = u0 + m;
    let mut r = Expr::zeros(rows, cols);
    let mut put = |h: VariableHandle, r0: usize, c0: usize| {
        r = std::mem::replace(&mut r, Expr::zeros(0, 0)).add(Expr::var(h).embed(rows, cols, r0, c0));
    };
    put(p, 0, 0);
    put(z0, u0, 0);
    for i in 0..l {
        let c0 = (1 + i) * n;
        put(p, n + i * n, c0);
        put(zbar[i], u0, c0);
        put(z0, up0 + i * m, c0);
    }
    for i in 0..l {
        for j in 0..l {
            put(zbar[j], up0 + i * m, lfr::quad_index(l, i, j) * n);
        }
    }
    r
}

fn declare_core(prog: &mut Program, data: &ExperimentData, cfg: &SynthesisConfig) -> Result<(CoreVariables, Vec<VariableHandle>)> {
    let (n, m, l, t) = (data.n, data.m, data.l, data.t);
    let p = prog.declare_named(VarKind::Symmetric(n), "P");
    let z0 = prog.declare_named(VarKind::Rectangular(m, n), "Z0");
    let zbar: Vec<VariableHandle> =
        (0..l).map(|i| prog.declare_named(VarKind::Rectangular(m, n), &format!("Zbar{}", i + 1))).collect();
    let f = prog.declare_named(VarKind::Rectangular(t, n * num_f_blocks(l)), "F");
    let link = Expr::product(&data.g(), f, &Mat::identity(n * num_f_blocks(l), n * num_f_blocks(l)))
        .sub(gain_link_rhs(p, z0, &zbar, n, m, l));
    prog.add_equality_named("gain-link", link)?;
    prog.add_psd_named("P", Expr::var(p), Sense::Geq, cfg.margin)?;
    prog.add_trace_box(p, cfg.trace_lo, cfg.trace_hi)?;
    Ok((CoreVariables { p, z0, f }, zbar))
}

/// Full synthesis program: gain link, trace box and the parameter-dependent
/// certificate enforced through a full-block multiplier at the box vertices.
pub fn build_synthesis_program(data: &ExperimentData, cfg: &SynthesisConfig) -> Result<SynthesisProgram> {
    cfg.validate()?;
    check_rank(data)?;
    let (n, m, l, t) = (data.n, data.m, data.l, data.t);
    let vertices = cfg.schedule_box(l)?.vertices()?;
    let mut program = Program::new();
    let (core, zbar) = declare_core(&mut program, data, cfg)?;
    let xplus = successor_data(data, cfg.subtract_known_noise);
    let delta = delta_matrix(n, t, cfg.delta);
    let phi = lifted_phi(Expr::var(core.p), lfr::fq_expr(core.f, t, n, l), &xplus, &delta, cfg, l);
    let sproc = add_full_block_s_procedure(&mut program, "lmi", phi, &[n, n, n, n, t], l, &vertices, cfg.margin)?;
    Ok(SynthesisProgram { program, core, zbar, sproc: Some(sproc), vertices, n, m, l, t })
}

/// Necessary condition: the certificate at each vertex with the data
/// parametrization left free under the gain link.
pub fn build_vertex_program(data: &ExperimentData, cfg: &SynthesisConfig) -> Result<SynthesisProgram> {
    cfg.validate()?;
    check_rank(data)?;
    let (n, m, l, t) = (data.n, data.m, data.l, data.t);
    let vertices = cfg.schedule_box(l)?.vertices()?;
    let mut program = Program::new();
    let (core, zbar) = declare_core(&mut program, data, cfg)?;
    let xplus = successor_data(data, cfg.subtract_known_noise);
    let delta = delta_matrix(n, t, cfg.delta);
    for (k, v) in vertices.iter().enumerate() {
        let fv = Expr::product(&Mat::identity(t, t), core.f, &lfr::f_weight_matrix(n, l, v));
        let c = certificate_expr(Expr::var(core.p), fv, &xplus, &delta, cfg);
        program.add_psd_named(&format!("vertex{k}"), c, Sense::Geq, cfg.margin)?;
    }
    Ok(SynthesisProgram { program, core, zbar, sproc: None, vertices, n, m, l, t })
}

/// Certificate for a fixed `F` on a grid of scheduling values; `P` is the
/// only decision variable.
pub fn build_certificate_program(
    data: &ExperimentData,
    f: &ScriptF,
    cfg: &SynthesisConfig,
    grid: &[Vector],
) -> Result<(Program, VariableHandle)> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::Precondition("certificate grid is empty".into()));
    }
    if f.t != data.t || f.n != data.n || f.l != data.l {
        return Err(Error::Dimension("F does not match the data dimensions".into()));
    }
    let mut program = Program::new();
    let p = program.declare_named(VarKind::Symmetric(data.n), "P");
    program.add_trace_box(p, cfg.trace_lo, cfg.trace_hi)?;
    let xplus = successor_data(data, cfg.subtract_known_noise);
    let delta = delta_matrix(data.n, data.t, cfg.delta);
    for (k, q) in grid.iter().enumerate() {
        let fv = Expr::constant(lfr::eval_f(f, q)?);
        program.add_psd_named(&format!("grid{k}"), certificate_expr(Expr::var(p), fv, &xplus, &delta, cfg), Sense::Geq, cfg.margin)?;
    }
    Ok((program, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSolution {
    pub p: Mat,
    pub z0: Mat,
    /// `[Zbar_1 .. Zbar_l]`, `m x l n`.
    pub zbar: Mat,
    pub script_f: ScriptF,
    pub fq: FQuad,
    pub xi: Option<Mat>,
    pub gains: AffineMatrixFunction,
    /// Raw values in declaration order, for plug-in re-evaluation.
    pub values: Vec<Mat>,
}

impl SynthesisSolution {
    pub fn from_solution(sp: &SynthesisProgram, sol: &Solution) -> Result<Self> {
        let p = linalg::symmetrize(sol.value(sp.core.p));
        let z0 = sol.value(sp.core.z0).clone();
        let zb: Vec<&Mat> = sp.zbar.iter().map(|h| sol.value(*h)).collect();
        let zbar = if zb.is_empty() { Mat::zeros(sp.m, 0) } else { linalg::hstack(&zb) };
        let script_f = ScriptF::from_matrix(sol.value(sp.core.f), sp.n, sp.l)?;
        let fq = build_fq(&script_f);
        let xi = sp.sproc.as_ref().and_then(|s| s.xi).map(|h| sol.value(h).clone());
        let gains = recover_gains(&p, &z0, &zbar)?;
        Ok(Self { p, z0, zbar, script_f, fq, xi, gains, values: sol.values.clone() })
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub status: SolveStatus,
    pub message: String,
    pub solution: Option<SynthesisSolution>,
    /// Status of the vertex-only program when it was run.
    pub precheck: Option<SolveStatus>,
    pub residuals: Option<Residuals>,
    pub iterations: usize,
}

impl SynthesisOutcome {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible && self.solution.is_some()
    }
}

/// Solve the synthesis program, optionally after the vertex precheck.
pub fn synthesize(
    data: &ExperimentData,
    cfg: &SynthesisConfig,
    opts: &SolveOptions,
    backend: &dyn SdpBackend,
) -> Result<SynthesisOutcome> {
    let mut precheck = None;
    if cfg.vertex_precheck && data.l > 0 {
        let vp = build_vertex_program(data, cfg)?;
        let sol = backend.solve(&vp.program, opts);
        precheck = Some(sol.status);
        if sol.status == SolveStatus::Infeasible {
            return Ok(SynthesisOutcome {
                status: SolveStatus::Infeasible,
                message: format!("vertex condition infeasible: {}", sol.message),
                solution: None,
                precheck,
                residuals: Some(sol.residuals),
                iterations: sol.iterations,
            });
        }
    }
    let sp = build_synthesis_program(data, cfg)?;
    let sol = backend.solve(&sp.program, opts);
    let solution = if sol.status == SolveStatus::Feasible { Some(SynthesisSolution::from_solution(&sp, &sol)?) } else { None };
    Ok(SynthesisOutcome {
        status: sol.status,
        message: sol.message.clone(),
        solution,
        precheck,
        residuals: Some(sol.residuals),
        iterations: sol.iterations,
    })
}

/// Constraint residuals recomputed with dense matrices from the solution
/// values, without the program's expression trees. Positive entries of
/// [`PlugInReport::violations`] are violations.
#[derive(Debug, Clone, PartialEq)]
pub struct PlugInReport {
    /// Largest entry of `|G F - R(P, Z)|`.
    pub gain_link: f64,
    pub p_min_eig: f64,
    pub p_trace: f64,
    /// Largest eigenvalue of `J' Xi J - K' Phi K`.
    pub main_max_eig: f64,
    /// Smallest eigenvalue of the multiplier at any vertex.
    pub vertex_min_eig: f64,
    pub xi22_max_eig: f64,
    /// Smallest eigenvalue of the certificate over the grid and vertices.
    pub certificate_min_eig: f64,
}

impl PlugInReport {
    /// `(name, amount)` for each constraint, positive when violated beyond `margin`.
    pub fn violations(&self, cfg: &SynthesisConfig) -> Vec<(&'static str, f64)> {
        let m = cfg.margin;
        vec![
            ("gain-link", self.gain_link),
            ("P", m - self.p_min_eig),
            ("trace-lo", cfg.trace_lo - self.p_trace),
            ("trace-hi", self.p_trace - cfg.trace_hi),
            ("main", self.main_max_eig + m),
            ("vertices", -self.vertex_min_eig),
            ("xi22", self.xi22_max_eig + m),
            ("certificate", -self.certificate_min_eig),
        ]
    }

    pub fn worst(&self, cfg: &SynthesisConfig) -> f64 {
        self.violations(cfg).into_iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn dense_five_block(y: &Mat, ybar: &Mat, xf: &Mat, f: &Mat, e: &Mat, sigma: f64, beta: f64) -> Mat {
    let d = y.nrows();
    let sizes = [d, d, d, d, f.nrows()];
    let (xft, ft, sy, yb) = (xf.transpose(), f.transpose(), y * sigma, y / beta);
    linalg::block_grid(
        &sizes,
        &sizes,
        &[
            vec![Some(y), None, Some(&xft), Some(y), Some(&ft)],
            vec![None, Some(&sy), Some(y), None, None],
            vec![Some(xf), Some(y), Some(ybar), None, None],
            vec![Some(y), None, None, Some(&yb), None],
            vec![Some(f), None, None, None, Some(e)],
        ],
    )
}

/// Re-evaluate every synthesis constraint at `sol`. `grid` adds interior
/// scheduling points to the vertex check of the certificate.
pub fn plug_in_check(
    data: &ExperimentData,
    cfg: &SynthesisConfig,
    sol: &SynthesisSolution,
    grid: &[Vector],
) -> Result<PlugInReport> {
    let (n, m, l, t) = (data.n, data.m, data.l, data.t);
    let p = &sol.p;
    let xplus = successor_data(data, cfg.subtract_known_noise);
    let dd = delta_matrix(n, t, cfg.delta);
    let pbar = p - &dd * dd.transpose() * cfg.eps;

    let nb = num_f_blocks(l);
    let mut rhs = Mat::zeros((1 + l) * (n + m), n * nb);
    let zb = |i: usize| sol.zbar.columns(i * n, n).into_owned();
    rhs.view_mut((0, 0), (n, n)).copy_from(p);
    rhs.view_mut((n * (1 + l), 0), (m, n)).copy_from(&sol.z0);
    for i in 0..l {
        rhs.view_mut((n * (1 + i), n * (1 + i)), (n, n)).copy_from(p);
        rhs.view_mut((n * (1 + l), n * (1 + i)), (m, n)).copy_from(&zb(i));
        rhs.view_mut((n * (1 + l) + m * (1 + i), n * (1 + i)), (m, n)).copy_from(&sol.z0);
        for j in 0..l {
            let col = n * (1 + l + i * l + j);
            rhs.view_mut((n * (1 + l) + m * (1 + i), col), (m, n)).copy_from(&zb(j));
        }
    }
    let gain_link = linalg::max_abs(&(data.g() * sol.script_f.to_matrix() - rhs));

    let vertices = cfg.schedule_box(l)?.vertices()?;
    let mut points = vertices.clone();
    points.extend(grid.iter().cloned());
    let mut certificate_min_eig = f64::INFINITY;
    for q in &points {
        let f = lfr::eval_f(&sol.script_f, q)?;
        let c = dense_five_block(p, &pbar, &(&xplus * &f), &f, &(Mat::identity(t, t) * cfg.eps), cfg.sigma, cfg.beta);
        certificate_min_eig = certificate_min_eig.min(linalg::min_eig(&c));
    }

    let dn = n * (1 + l);
    let dt = t * (1 + l);
    let mut y = Mat::zeros(dn, dn);
    y.view_mut((0, 0), (n, n)).copy_from(p);
    let mut ybar = Mat::zeros(dn, dn);
    ybar.view_mut((0, 0), (n, n)).copy_from(&pbar);
    let mut e = Mat::zeros(dt, dt);
    e.view_mut((0, 0), (t, t)).copy_from(&(Mat::identity(t, t) * cfg.eps));
    let fq = &sol.fq.mat;
    let xcal = linalg::kron(&Mat::identity(1 + l, 1 + l), &xplus);
    let phi = dense_five_block(&y, &ybar, &(xcal * fq), fq, &e, cfg.sigma, cfg.beta);
    let lfr = lfr::Lfr::new(&[n, n, n, n, t], l);
    let (main_max_eig, vertex_min_eig, xi22_max_eig) = match &sol.xi {
        Some(xi) => {
            let (j, k) = (lfr.j(), lfr.k());
            let main = linalg::max_eig(&(j.transpose() * xi * &j - k.transpose() * &phi * &k));
            let mut vmin = f64::INFINITY;
            for v in &vertices {
                let fr = lfr.multiplier_frame(v);
                vmin = vmin.min(linalg::min_eig(&(fr.transpose() * xi * &fr)));
            }
            let ln = xi.nrows() / 2;
            (main, vmin, linalg::max_eig(&xi.view((ln, ln), (ln, ln)).into_owned()))
        }
        None => (-linalg::min_eig(&phi), 0.0, f64::NEG_INFINITY),
    };
    Ok(PlugInReport {
        gain_link,
        p_min_eig: linalg::min_eig(p),
        p_trace: p.trace(),
        main_max_eig,
        vertex_min_eig,
        xi22_max_eig,
        certificate_min_eig,
    })
}

/// `K_0 = Z_0 P^{-1}`, `K_i = Zbar_i P^{-1}`.
pub fn recover_gains(p: &Mat, z0: &Mat, zbar: &Mat) -> Result<AffineMatrixFunction> {
    let n = p.nrows();
    if p.ncols() != n || z0.ncols() != n || zbar.nrows() != z0.nrows() || (n > 0 && zbar.ncols() % n != 0) {
        return Err(Error::Dimension("gain recovery shapes are inconsistent".into()));
    }
    let pinv = p.clone().try_inverse().ok_or_else(|| Error::Singular("P is singular".into()))?;
    if !pinv.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular("P is singular".into()));
    }
    let l = if n == 0 { 0 } else { zbar.ncols() / n };
    let coeffs = (0..l).map(|i| zbar.columns(i * n, n) * &pinv).collect();
    AffineMatrixFunction::new(z0 * &pinv, coeffs)
}

/// `R = sqrt(lmax(P^-1) / lmin(P^-1))`, `c1 = lmin(P^-1)^{-1/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IssConstants {
    pub overshoot: f64,
    pub c1: f64,
}

pub fn iss_constants(p: &Mat) -> Result<IssConstants> {
    let pinv = linalg::spd_inverse(p).ok_or_else(|| Error::Precondition("P must be positive definite".into()))?;
    let (lo, hi) = (linalg::min_eig(&pinv), linalg::max_eig(&pinv));
    if !(lo > 0.0) {
        return Err(Error::Precondition("P must be positive definite".into()));
    }
    Ok(IssConstants { overshoot: (hi / lo).sqrt(), c1: lo.powf(-0.5) })
}

/// Closed loop `A(p) + B(p) K(p)` of a plant under scheduled state feedback.
pub fn closed_loop_matrix(sys: &LpvSystem, gains: &AffineMatrixFunction, p: &Vector) -> Result<Mat> {
    Ok(sys.a.eval(p)? + sys.b.eval(p)? * gains.eval(p)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub beta: f64,
    pub sigma: f64,
    pub delta: f64,
    pub trials: usize,
    pub horizon: usize,
    /// Initial states are uniform on `[-a, a]^n`.
    pub x0_amplitude: f64,
    pub seed: u64,
    pub slack: f64,
}

impl VerifyConfig {
    pub fn new(beta: f64, sigma: f64, delta: f64, seed: u64) -> Self {
        Self { beta, sigma, delta, trials: 100, horizon: 200, x0_amplitude: 2.0, seed, slack: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// Spectral radius of the frozen closed loop at each box vertex.
    pub vertex_radii: Vec<f64>,
    pub decrease_ok: bool,
    /// Largest `lhs - rhs` of the decrease inequality over all steps.
    pub worst_excess: f64,
    /// `(trial, step)` of the first violation.
    pub first_violation: Option<(usize, usize)>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn vertices_stable(&self) -> bool {
        self.vertex_radii.iter().all(|r| *r < 1.0)
    }
}

/// Check `V(x+) - V(x) <= -beta V(x) + sigma w' P^-1 w + slack` along
/// seeded closed-loop trajectories with `V(x) = x' P^-1 x`.
pub fn verify_closed_loop(
    sys: &LpvSystem,
    gains: &AffineMatrixFunction,
    p: &Mat,
    schedule_box: &SchedulingBox,
    cfg: &VerifyConfig,
) -> Result<VerificationReport> {
    let pinv = linalg::spd_inverse(p).ok_or_else(|| Error::Precondition("P must be positive definite".into()))?;
    let vertex_radii =
        schedule_box.vertices()?.iter().map(|v| spectral_radius(&closed_loop_matrix(sys, gains, v)?)).collect::<Result<Vec<_>>>()?;
    let per_trial: Vec<(f64, Option<usize>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<(f64, Option<usize>)> {
            let mut init = UniformLaw::symmetric(rng_for_trial(cfg.seed, Stream::Initial, trial), sys.n(), cfg.x0_amplitude);
            let x0 = crate::lpv::SignalLaw::sample(&mut init, 0);
            let mut sched = UniformLaw::in_box(rng_for_trial(cfg.seed, Stream::ClosedLoopSchedule, trial), schedule_box);
            let mut noise = BallNoise::new(rng_for_trial(cfg.seed, Stream::ClosedLoopNoise, trial), sys.n(), cfg.delta);
            let tr = simulate(sys, |x, q, _| gains.eval(q).map(|k| k * x).unwrap_or_else(|_| Vector::zeros(sys.m())), &mut sched, &mut noise, &x0, cfg.horizon)?;
            Ok(decrease_excess(&tr.x, &tr.w, &pinv, cfg.beta, cfg.sigma, cfg.slack))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut first_violation = None;
    for (trial, (ex, step)) in per_trial.into_iter().enumerate() {
        worst_excess = worst_excess.max(ex);
        if first_violation.is_none() {
            first_violation = step.map(|s| (trial, s));
        }
    }
    let decrease_ok = first_violation.is_none();
    Ok(VerificationReport { vertex_radii, decrease_ok, worst_excess, first_violation, passed: decrease_ok })
}

/// Worst `lhs - rhs` of the decrease inequality and the first violating step.
pub fn decrease_excess(x: &[Vector], w: &[Vector], pinv: &Mat, beta: f64, sigma: f64, slack: f64) -> (f64, Option<usize>) {
    let v = |z: &Vector| z.dot(&(pinv * z));
    let mut worst = f64::NEG_INFINITY;
    let mut first = None;
    for k in 0..x.len().saturating_sub(1) {
        let lhs = v(&x[k + 1]) - v(&x[k]);
        let rhs = -beta * v(&x[k]) + sigma * v(&w[k]);
        let ex = lhs - rhs;
        worst = worst.max(ex);
        if ex > slack && first.is_none() {
            first = Some(k);
        }
    }
    (worst, first)
}

/// `||x_N|| / ||x_0||` with `w = 0` and a seeded admissible schedule.
pub fn nominal_decay_ratio(
    sys: &LpvSystem,
    gains: &AffineMatrixFunction,
    schedule_box: &SchedulingBox,
    x0: &Vector,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    let mut sched = UniformLaw::in_box(rng_for_trial(seed, Stream::ClosedLoopSchedule, 0), schedule_box);
    let mut noise = crate::laws::ZeroLaw(sys.n());
    let tr = simulate(sys, |x, q, _| gains.eval(q).map(|k| k * x).unwrap_or_else(|_| Vector::zeros(sys.m())), &mut sched, &mut noise, x0, horizon)?;
    Ok(tr.x[horizon].norm() / x0.norm())
}
