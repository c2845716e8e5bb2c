//! Event-triggered transmission from controller to actuator: trigger rule,
//! trigger-parameter synthesis, simulation under zero-order hold and
//! post-hoc checks on recorded traces.

use crate::data::{identify_affine, ExperimentData};
use crate::error::{Error, Result};
use crate::lfr::{add_full_block_s_procedure, FQuad, SProcedure};
use crate::linalg::{self, Mat, Vector};
use crate::lpv::{AffineMatrixFunction, LpvSystem, SchedulingBox, SignalLaw, SimulationTrace};
use crate::sdp::{Expr, Program, Residuals, Sense, SdpBackend, SolveOptions, SolveStatus, VarKind, VariableHandle, STRICT_MARGIN};
use crate::synthesis::{delta_matrix, successor_data};

/// Parameters of the trigger rule `nu' Psi1 nu >= x' Psi2 x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerConfig {
    pub psi1: Mat,
    pub psi2: Mat,
    pub v: f64,
    pub mu: f64,
    pub eps: f64,
    pub beta: f64,
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(linalg::min_eig(&self.psi1) > 0.0 && linalg::min_eig(&self.psi2) > 0.0) {
            return Err(Error::Config("Psi1 and Psi2 must be positive definite".into()));
        }
        if !(self.v > 0.0) {
            return Err(Error::Config(format!("v must be positive, got {}", self.v)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Config(format!("mu must be positive, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Fixed scalars of the trigger-parameter program.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerDesign {
    pub mu: f64,
    pub eps: f64,
    pub beta: f64,
    pub delta: f64,
    pub margin: f64,
    pub subtract_known_noise: bool,
    pub schedule_box: Option<SchedulingBox>,
}

impl TriggerDesign {
    pub fn new(mu: f64, eps: f64, beta: f64, delta: f64) -> Self {
        Self { mu, eps, beta, delta, margin: STRICT_MARGIN, subtract_known_noise: false, schedule_box: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::Precondition(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Precondition(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Precondition(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Precondition("delta must be non-negative".into()));
        }
        Ok(())
    }
}

/// Input matrices `B_0..B_l` from the `B` columns of `(X+ - W) G^+`.
pub fn extract_input_matrix(data: &ExperimentData) -> Result<AffineMatrixFunction> {
    Ok(identify_affine(data)?.1)
}

/// Quantities held between transmissions.
#[derive(Debug, Clone, PartialEq)]
pub struct EtState {
    pub x_hat: Vector,
    pub p_hat: Vector,
    pub u_held: Vector,
    pub last: usize,
}

impl EtState {
    pub fn transmit(gains: &AffineMatrixFunction, x: &Vector, p: &Vector, k: usize) -> Result<Self> {
        Ok(Self { x_hat: x.clone(), p_hat: p.clone(), u_held: gains.eval(p)? * x, last: k })
    }
}

/// `nu = B(p) K(p) (x_hat - x) + B(p) (K(p_hat) - K(p)) x_hat`.
pub fn compute_nu(b: &AffineMatrixFunction, gains: &AffineMatrixFunction, x: &Vector, p: &Vector, et: &EtState) -> Result<Vector> {
    let bp = b.eval(p)?;
    let kp = gains.eval(p)?;
    let kh = gains.eval(&et.p_hat)?;
    let e = &et.x_hat - x;
    Ok(&bp * (&kp * e) + &bp * ((kh - &kp) * &et.x_hat))
}

/// `nu' Psi1 nu >= x' Psi2 x + v`.
pub fn trigger_fire(nu: &Vector, x: &Vector, cfg: &TriggerConfig) -> bool {
    nu.dot(&(&cfg.psi1 * nu)) >= x.dot(&(&cfg.psi2 * x)) + cfg.v
}

#[derive(Debug, Clone)]
pub struct TriggerProgram {
    pub program: Program,
    pub psi1: VariableHandle,
    pub psi2: VariableHandle,
    pub sproc: SProcedure,
}

/// Lifted trigger matrix over channels `[n, n, T]`:
/// `-[[diag(O11, 0), mu (X F_Q)', F_Q'], [mu X F_Q, diag(O22, 0), 0], [F_Q, 0, diag(-eps I_T, 0)]]`
/// with `O11 = -mu beta P + P Psi2 P` and `O22 = -P Psi1 P + eps mu^2 Delta Delta'`.
pub fn trigger_phi(
    p: &Mat,
    fq: &Mat,
    psi1: VariableHandle,
    psi2: VariableHandle,
    xplus: &Mat,
    delta: &Mat,
    d: &TriggerDesign,
    l: usize,
) -> Expr {
    let n = p.nrows();
    let t = xplus.ncols();
    let dn = n * (1 + l);
    let dt = t * (1 + l);
    let o11 = Expr::product(p, psi2, p).add_const(&(p * (-d.mu * d.beta))).embed(dn, dn, 0, 0);
    let o22 = Expr::product(p, psi1, p).scale(-1.0).add_const(&(delta * delta.transpose() * (d.eps * d.mu * d.mu))).embed(dn, dn, 0, 0);
    let xcal = linalg::kron(&Mat::identity(1 + l, 1 + l), xplus);
    let xf = &xcal * fq * d.mu;
    let mut e = Mat::zeros(dt, dt);
    e.view_mut((0, 0), (t, t)).fill_with_identity();
    e.view_mut((0, 0), (t, t)).scale_mut(-d.eps);
    let c = |m: Mat| Some(Expr::constant(m));
    let grid = vec![
        vec![Some(o11), c(xf.transpose()), c(fq.transpose())],
        vec![c(xf), Some(o22), None],
        vec![c(fq.clone()), None, c(e)],
    ];
    Expr::block(&[dn, dn, dt], &[dn, dn, dt], grid).scale(-1.0)
}

/// Trigger-parameter program for fixed `P` and `F_Q` from a stabilizing design.
pub fn build_trigger_program(p: &Mat, fq: &FQuad, data: &ExperimentData, d: &TriggerDesign) -> Result<TriggerProgram> {
    d.validate()?;
    let (n, l, t) = (data.n, data.l, data.t);
    if p.shape() != (n, n) || fq.mat.shape() != (t * (1 + l), n * (1 + l)) {
        return Err(Error::Dimension("P or F_Q does not match the data".into()));
    }
    let vertices = match &d.schedule_box {
        Some(b) => b.vertices()?,
        None => SchedulingBox::symmetric(l, 1.0).vertices()?,
    };
    let mut program = Program::new();
    let psi1 = program.declare_named(VarKind::Symmetric(n), "Psi1");
    let psi2 = program.declare_named(VarKind::Symmetric(n), "Psi2");
    program.add_psd_named("Psi1", Expr::var(psi1), Sense::Geq, d.margin)?;
    program.add_psd_named("Psi2", Expr::var(psi2), Sense::Geq, d.margin)?;
    let xplus = successor_data(data, d.subtract_known_noise);
    let delta = delta_matrix(n, t, d.delta);
    let phi = trigger_phi(p, &fq.mat, psi1, psi2, &xplus, &delta, d, l);
    let sproc = add_full_block_s_procedure(&mut program, "trigger", phi, &[n, n, t], l, &vertices, d.margin)?;
    Ok(TriggerProgram { program, psi1, psi2, sproc })
}

#[derive(Debug, Clone)]
pub struct TriggerOutcome {
    pub status: SolveStatus,
    pub message: String,
    pub psi1: Option<Mat>,
    pub psi2: Option<Mat>,
    pub xi: Option<Mat>,
    pub values: Vec<Mat>,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl TriggerOutcome {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}

pub fn synthesize_trigger(
    p: &Mat,
    fq: &FQuad,
    data: &ExperimentData,
    d: &TriggerDesign,
    opts: &SolveOptions,
    backend: &dyn SdpBackend,
) -> Result<TriggerOutcome> {
    let tp = build_trigger_program(p, fq, data, d)?;
    let sol = backend.solve(&tp.program, opts);
    let ok = sol.status == SolveStatus::Feasible;
    Ok(TriggerOutcome {
        status: sol.status,
        message: sol.message.clone(),
        psi1: ok.then(|| linalg::symmetrize(sol.value(tp.psi1))),
        psi2: ok.then(|| linalg::symmetrize(sol.value(tp.psi2))),
        xi: if ok { tp.sproc.xi.map(|h| sol.value(h).clone()) } else { None },
        values: sol.values.clone(),
        residuals: sol.residuals,
        iterations: sol.iterations,
    })
}

/// Event-triggered closed loop. The detector runs at `k = 0..N-1`, the first
/// sample always transmits, and the recorded `nu` is the sampling-induced
/// error acting on the plant at each step (zero at transmissions).
#[allow(clippy::too_many_arguments)]
pub fn simulate_event_triggered<S, W>(
    sys: &LpvSystem,
    gains: &AffineMatrixFunction,
    cfg: &TriggerConfig,
    b_est: &AffineMatrixFunction,
    schedule: &mut S,
    noise: &mut W,
    x0: &Vector,
    horizon: usize,
) -> Result<SimulationTrace>
where
    S: SignalLaw + ?Sized,
    W: SignalLaw + ?Sized,
{
    simulate_event_triggered_with(sys, gains, cfg, b_est, schedule, &mut |k| noise.sample(k), x0, horizon)
}

/// As [`simulate_event_triggered`] with the perturbation given by `perturb(k)`.
pub(crate) fn simulate_event_triggered_with<S>(
    sys: &LpvSystem,
    gains: &AffineMatrixFunction,
    cfg: &TriggerConfig,
    b_est: &AffineMatrixFunction,
    schedule: &mut S,
    perturb: &mut dyn FnMut(usize) -> Vector,
    x0: &Vector,
    horizon: usize,
) -> Result<SimulationTrace>
where
    S: SignalLaw + ?Sized,
{
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    if x0.len() != sys.n() {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), sys.n())));
    }
    let n = sys.n();
    let mut tr = SimulationTrace { horizon, ..Default::default() };
    let mut nus = Vec::with_capacity(horizon + 1);
    let mut x = x0.clone();
    let mut et: Option<EtState> = None;
    for k in 0..=horizon {
        let p = schedule.sample(k);
        let mut fired = false;
        let nu = match &et {
            None => {
                et = Some(EtState::transmit(gains, &x, &p, k)?);
                fired = true;
                Vector::zeros(n)
            }
            Some(state) if k < horizon => {
                let nu = compute_nu(b_est, gains, &x, &p, state)?;
                if trigger_fire(&nu, &x, cfg) {
                    et = Some(EtState::transmit(gains, &x, &p, k)?);
                    fired = true;
                    Vector::zeros(n)
                } else {
                    nu
                }
            }
            Some(state) => compute_nu(b_est, gains, &x, &p, state)?,
        };
        let u = et.as_ref().map(|s| s.u_held.clone()).unwrap_or_else(|| Vector::zeros(sys.m()));
        let w = if k < horizon { perturb(k) } else { Vector::zeros(n) };
        let (xn, y) = sys.step(&x, &u, &p, &w)?;
        tr.x.push(x.clone());
        tr.u.push(u);
        tr.p.push(p);
        tr.w.push(w);
        tr.y.push(y);
        tr.triggered.push(fired);
        nus.push(nu);
        x = xn;
    }
    tr.nu = Some(nus);
    Ok(tr)
}

/// First non-transmission step `k < N` where the detector should have fired.
pub fn detector_violation(trace: &SimulationTrace, cfg: &TriggerConfig) -> Option<usize> {
    let nu = trace.nu.as_ref()?;
    (0..trace.horizon).find(|&k| !trace.triggered[k] && trigger_fire(&nu[k], &trace.x[k], cfg))
}

/// First step where the applied input differs from `K(p_hat) x_hat` of the
/// latest transmission.
pub fn zoh_violation(trace: &SimulationTrace, gains: &AffineMatrixFunction, tol: f64) -> Option<usize> {
    let mut last = None;
    for k in 0..trace.len() {
        if trace.triggered[k] {
            last = Some(k);
        }
        let j = last?;
        let expect = gains.eval(&trace.p[j]).ok()? * &trace.x[j];
        if (&trace.u[k] - expect).amax() > tol || (&trace.u[k] - &trace.u[j]).amax() > tol {
            return Some(k);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecreaseReport {
    pub ok: bool,
    pub first_violation: Option<usize>,
    pub worst_excess: f64,
}

/// `V(x+) - V(x) <= -beta V(x) + sigma lmax(P^-1) |nu + w|^2 + v/mu + 1e-8`
/// at every recorded step.
pub fn practical_decrease_check(trace: &SimulationTrace, p: &Mat, cfg: &TriggerConfig, sigma: f64) -> Result<DecreaseReport> {
    let pinv = linalg::spd_inverse(p).ok_or_else(|| Error::Precondition("P must be positive definite".into()))?;
    let nu = trace.nu.as_ref().ok_or_else(|| Error::Precondition("trace carries no sampling error".into()))?;
    let lmax = linalg::max_eig(&pinv);
    let v = |z: &Vector| z.dot(&(&pinv * z));
    let mut worst = f64::NEG_INFINITY;
    let mut first = None;
    for k in 0..trace.len().saturating_sub(1) {
        let lhs = v(&trace.x[k + 1]) - v(&trace.x[k]);
        let rhs = -cfg.beta * v(&trace.x[k]) + sigma * lmax * (&nu[k] + &trace.w[k]).norm_squared() + cfg.v / cfg.mu;
        let ex = lhs - rhs;
        worst = worst.max(ex);
        if ex > 1e-8 && first.is_none() {
            first = Some(k);
        }
    }
    Ok(DecreaseReport { ok: first.is_none(), first_violation: first, worst_excess: worst })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterEventStats {
    pub transmissions: usize,
    pub mean_interval: f64,
    pub max_interval: usize,
}

/// Transmissions over `k = 0..N-1`; intervals run between consecutive
/// transmissions and from the last one to `N`.
pub fn inter_event_stats(trace: &SimulationTrace) -> InterEventStats {
    let n = trace.horizon.min(trace.triggered.len());
    let times: Vec<usize> = (0..n).filter(|&k| trace.triggered[k]).collect();
    if times.is_empty() {
        return InterEventStats { transmissions: 0, mean_interval: f64::INFINITY, max_interval: n };
    }
    let mut max_interval = 0;
    for w in times.windows(2) {
        max_interval = max_interval.max(w[1] - w[0]);
    }
    max_interval = max_interval.max(n - times[times.len() - 1]);
    InterEventStats { transmissions: times.len(), mean_interval: (n - times[0]) as f64 / times.len() as f64, max_interval }
}

/// `c0 = c1 / (mu (1 - exp(-beta/2)))` with `c1 = lmin(P^-1)^{-1/2}`.
pub fn iss_practical_constant(p: &Mat, mu: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Precondition(format!("beta must be positive, got {beta}")));
    }
    if !(mu > 0.0) {
        return Err(Error::Precondition(format!("mu must be positive, got {mu}")));
    }
    let c1 = crate::synthesis::iss_constants(p)?.c1;
    Ok(c1 / (mu * (1.0 - (-beta / 2.0).exp())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::ZeroLaw;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn cfg(psi1: Mat, psi2: Mat, v: f64) -> TriggerConfig {
        TriggerConfig { psi1, psi2, v, mu: 40.0, eps: 0.001, beta: 0.1 }
    }

    #[test]
    fn nu_vanishes_at_transmission_and_for_zero_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = AffineMatrixFunction::new(rand_mat(&mut rng, 2, 1), vec![rand_mat(&mut rng, 2, 1)]).unwrap();
        let k = AffineMatrixFunction::new(rand_mat(&mut rng, 1, 2), vec![rand_mat(&mut rng, 1, 2)]).unwrap();
        let x = Vector::from_vec(vec![0.3, -0.2]);
        let p = Vector::from_vec(vec![0.5]);
        let et = EtState::transmit(&k, &x, &p, 0).unwrap();
        assert!(compute_nu(&b, &k, &x, &p, &et).unwrap().amax() < 1e-15);
        let z = AffineMatrixFunction::zeros(1, 2, 1);
        let et = EtState::transmit(&z, &Vector::from_vec(vec![1.0, 1.0]), &Vector::from_vec(vec![-1.0]), 0).unwrap();
        assert_eq!(compute_nu(&b, &z, &x, &p, &et).unwrap(), Vector::zeros(2));
    }

    #[test]
    fn nu_equals_held_minus_current_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let b = AffineMatrixFunction::new(rand_mat(&mut rng, 3, 2), vec![rand_mat(&mut rng, 3, 2), rand_mat(&mut rng, 3, 2)]).unwrap();
            let k = AffineMatrixFunction::new(rand_mat(&mut rng, 2, 3), vec![rand_mat(&mut rng, 2, 3), rand_mat(&mut rng, 2, 3)]).unwrap();
            let x = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let p = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let xh = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let ph = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let et = EtState::transmit(&k, &xh, &ph, 0).unwrap();
            let direct = b.eval(&p).unwrap() * (k.eval(&ph).unwrap() * &xh - k.eval(&p).unwrap() * &x);
            assert!((compute_nu(&b, &k, &x, &p, &et).unwrap() - direct).amax() < 1e-12);
        }
    }

    #[test]
    fn trigger_rule_boundaries() {
        let c = cfg(Mat::identity(2, 2), Mat::identity(2, 2), 0.01);
        assert!(!trigger_fire(&Vector::zeros(2), &Vector::from_vec(vec![3.0, 1.0]), &c));
        assert!(trigger_fire(&Vector::from_vec(vec![0.1, 0.0]), &Vector::zeros(2), &c));
        let psi1 = Mat::from_row_slice(2, 2, &[166.7528, -14.2105, -14.2105, 36.4492]);
        let psi2 = Mat::from_row_slice(2, 2, &[0.0710, 0.0266, 0.0266, 0.0174]);
        let c = cfg(psi1.clone(), psi2, 0.01);
        let nu = Vector::from_vec(vec![0.1, 0.0]);
        assert!((nu.dot(&(&psi1 * &nu)) - 1.667528).abs() < 1e-12);
        assert!(trigger_fire(&nu, &Vector::zeros(2), &c));
    }

    fn scalar_loop() -> (LpvSystem, AffineMatrixFunction) {
        let s = |v: f64| Mat::from_element(1, 1, v);
        let sys = LpvSystem::state_output(
            AffineMatrixFunction::new(s(1.2), vec![s(0.1)]).unwrap(),
            AffineMatrixFunction::new(s(1.0), vec![s(0.0)]).unwrap(),
        )
        .unwrap();
        let gains = AffineMatrixFunction::new(s(-0.9), vec![s(-0.1)]).unwrap();
        (sys, gains)
    }

    #[test]
    fn quiet_detector_transmits_once() {
        let (sys, gains) = scalar_loop();
        let c = cfg(Mat::identity(1, 1), Mat::identity(1, 1) * 1e9, 1e9);
        let mut sched = |k: usize| Vector::from_element(1, if k % 2 == 0 { 0.5 } else { -0.5 });
        let tr = simulate_event_triggered(&sys, &gains, &c, &sys.b, &mut sched, &mut ZeroLaw(1), &Vector::from_element(1, 1.0), 10).unwrap();
        assert_eq!(tr.triggered.iter().filter(|t| **t).count(), 1);
        let st = inter_event_stats(&tr);
        assert_eq!((st.transmissions, st.max_interval), (1, 10));
        assert!(zoh_violation(&tr, &gains, 0.0).is_none());
        assert!(detector_violation(&tr, &c).is_none());
    }

    #[test]
    fn eager_detector_transmits_every_step() {
        let (sys, gains) = scalar_loop();
        let c = cfg(Mat::identity(1, 1) * 1e12, Mat::identity(1, 1) * 1e-12, 1e-12);
        let mut sched = |k: usize| Vector::from_element(1, (k as f64 * 0.7).sin());
        let tr = simulate_event_triggered(&sys, &gains, &c, &sys.b, &mut sched, &mut ZeroLaw(1), &Vector::from_element(1, 1.0), 10).unwrap();
        let st = inter_event_stats(&tr);
        assert_eq!(st.transmissions, 10);
        assert!((st.mean_interval - 1.0).abs() < 1e-15);
        assert!(zoh_violation(&tr, &gains, 1e-15).is_none());
    }

    #[test]
    fn equilibrium_trace_passes_decrease() {
        let (sys, gains) = scalar_loop();
        let c = cfg(Mat::identity(1, 1), Mat::identity(1, 1), 0.01);
        let mut sched = |_k: usize| Vector::zeros(1);
        let tr = simulate_event_triggered(&sys, &gains, &c, &sys.b, &mut sched, &mut ZeroLaw(1), &Vector::zeros(1), 20).unwrap();
        assert!(practical_decrease_check(&tr, &Mat::identity(1, 1), &c, 4.0).unwrap().ok);
    }

    #[test]
    fn mismatched_p_is_reported() {
        let (sys, _) = scalar_loop();
        let zero = AffineMatrixFunction::zeros(1, 1, 1);
        let c = TriggerConfig { v: 1e-9, ..cfg(Mat::identity(1, 1), Mat::identity(1, 1), 1e-9) };
        let mut sched = |_k: usize| Vector::zeros(1);
        let tr = simulate_event_triggered(&sys, &zero, &c, &sys.b, &mut sched, &mut ZeroLaw(1), &Vector::from_element(1, 1.0), 20).unwrap();
        let rep = practical_decrease_check(&tr, &Mat::identity(1, 1), &c, 4.0).unwrap();
        assert!(!rep.ok && rep.first_violation == Some(0));
    }

    #[test]
    fn practical_constant() {
        let c0 = iss_practical_constant(&Mat::identity(2, 2), 1.0, 2.0 * 2f64.ln()).unwrap();
        assert!((c0 - 2.0).abs() < 1e-12);
        let a = iss_practical_constant(&Mat::identity(2, 2), 10.0, 0.1).unwrap();
        let b = iss_practical_constant(&Mat::identity(2, 2), 1000.0, 0.1).unwrap();
        assert!(b < a && b > 0.0);
        let c4 = iss_practical_constant(&(Mat::identity(2, 2) * 4.0), 1.0, 2.0 * 2f64.ln()).unwrap();
        assert!((c4 - 4.0).abs() < 1e-12);
        assert!(iss_practical_constant(&Mat::identity(2, 2), 1.0, 0.0).is_err());
    }

    #[test]
    fn zero_mu_is_a_precondition_error() {
        let d = TriggerDesign::new(0.0, 0.001, 0.1, 0.1);
        assert!(matches!(d.validate(), Err(Error::Precondition(_))));
    }
}
