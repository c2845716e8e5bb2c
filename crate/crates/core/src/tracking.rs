//! Output reference tracking through an integral compensator: augmented
//! plant, augmented data, reference generators and event-triggered tracking
//! runs. Synthesis reuses the stabilization and trigger builders on the
//! augmented data.

use std::f64::consts::PI;

use crate::data::{collect, min_data_length, ExperimentData};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lpv::{AffineMatrixFunction, LpvSystem, SignalLaw, SimulationTrace};
use crate::lfr::FQuad;
use crate::sdp::Program;
use crate::synthesis::{build_synthesis_program, SynthesisConfig, SynthesisProgram};
use crate::trigger::{build_trigger_program, inter_event_stats, InterEventStats, TriggerConfig, TriggerDesign, TriggerProgram};

/// Plant with state `psi = (x, chi)`, `chi+ = chi + y - r`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub base: LpvSystem,
    /// Augmented plant; its output is the base output `C(p) x + D(p) u`.
    pub system: LpvSystem,
    /// `blkdiag(I_n, -I_r)`.
    pub e_hat: Mat,
}

impl AugmentedSystem {
    pub fn a_hat(&self) -> &AffineMatrixFunction {
        &self.system.a
    }
    pub fn b_hat(&self) -> &AffineMatrixFunction {
        &self.system.b
    }
    /// `n + r`.
    pub fn n_bar(&self) -> usize {
        self.system.n()
    }
    pub fn n(&self) -> usize {
        self.base.n()
    }
    pub fn r(&self) -> usize {
        self.base.r()
    }

    /// `E_hat (w, r) = (w, -r)`.
    pub fn perturbation(&self, w: &Vector, r: &Vector) -> Vector {
        let mut out = Vector::zeros(self.n_bar());
        out.rows_mut(0, self.n()).copy_from(w);
        out.rows_mut(self.n(), self.r()).copy_from(&(-r));
        out
    }
}

/// Recover the plant from given augmented matrices `A_hat`, `B_hat` with `n`
/// plant states; the integrator block must be `[[I], [0]]` exactly.
pub fn from_augmented(a_hat: &AffineMatrixFunction, b_hat: &AffineMatrixFunction, n: usize) -> Result<AugmentedSystem> {
    let (nb, nc) = a_hat.shape();
    if nb != nc || nb <= n || b_hat.shape().0 != nb || a_hat.l() != b_hat.l() {
        return Err(Error::Dimension(format!("augmented matrices {nb}x{nc} incompatible with n = {n}")));
    }
    let r = nb - n;
    let m = b_hat.shape().1;
    let l = a_hat.l();
    let mats = std::iter::once(&a_hat.base).chain(&a_hat.coeffs);
    for (i, a) in mats.enumerate() {
        let mut expect = Mat::zeros(nb, r);
        if i == 0 {
            expect.view_mut((n, 0), (r, r)).fill_with_identity();
        }
        if a.columns(n, r) != expect {
            return Err(Error::Precondition(format!("A_hat_{i} does not carry the integrator structure")));
        }
    }
    let split = |f: &AffineMatrixFunction, rows: (usize, usize), cols: usize| -> Result<AffineMatrixFunction> {
        AffineMatrixFunction::new(
            f.base.view((rows.0, 0), (rows.1, cols)).into_owned(),
            f.coeffs.iter().map(|c| c.view((rows.0, 0), (rows.1, cols)).into_owned()).collect(),
        )
    };
    let base = LpvSystem::new(
        split(a_hat, (0, n), n)?,
        split(b_hat, (0, n), m)?,
        split(a_hat, (n, r), n)?,
        split(b_hat, (n, r), m)?,
    )?;
    debug_assert_eq!(base.l(), l);
    augment_system(&base)
}

/// `A_hat_0 = [[A_0, 0], [C_0, I]]`, `A_hat_i = [[A_i, 0], [C_i, 0]]`,
/// `B_hat_i = Col(B_i, D_i)`.
pub fn augment_system(sys: &LpvSystem) -> Result<AugmentedSystem> {
    let (n, m, r, l) = (sys.n(), sys.m(), sys.r(), sys.l());
    let nb = n + r;
    let a_blk = |a: &Mat, c: &Mat, integ: bool| {
        let mut out = Mat::zeros(nb, nb);
        out.view_mut((0, 0), (n, n)).copy_from(a);
        out.view_mut((n, 0), (r, n)).copy_from(c);
        if integ {
            out.view_mut((n, n), (r, r)).fill_with_identity();
        }
        out
    };
    let b_blk = |b: &Mat, d: &Mat| linalg::vstack(&[b, d]);
    let a = AffineMatrixFunction::new(
        a_blk(&sys.a.base, &sys.c.base, true),
        (0..l).map(|i| a_blk(&sys.a.coeffs[i], &sys.c.coeffs[i], false)).collect(),
    )?;
    let b = AffineMatrixFunction::new(
        b_blk(&sys.b.base, &sys.d.base),
        (0..l).map(|i| b_blk(&sys.b.coeffs[i], &sys.d.coeffs[i])).collect(),
    )?;
    let c_blk = |c: &Mat| linalg::hstack(&[c, &Mat::zeros(r, r)]);
    let c = AffineMatrixFunction::new(c_blk(&sys.c.base), sys.c.coeffs.iter().map(c_blk).collect())?;
    let system = LpvSystem::new(a, b, c, sys.d.clone())?;
    let mut e_hat = Mat::identity(nb, nb);
    e_hat.view_mut((n, n), (r, r)).fill_with_identity();
    e_hat.view_mut((n, n), (r, r)).scale_mut(-1.0);
    debug_assert_eq!(system.m(), m);
    Ok(AugmentedSystem { base: sys.clone(), system, e_hat })
}

/// Minimum augmented data length `n_bar (1+l)(1 + m(1+l)) - 1`.
pub fn min_data_length_aug(n_bar: usize, m: usize, l: usize) -> usize {
    min_data_length(n_bar, m, l)
}

/// Bound on `(w, r)` rounded up to two decimals.
pub fn delta_hat(delta: f64, reference_max: f64) -> f64 {
    ((delta * delta + reference_max * reference_max).sqrt() * 100.0 - 1e-9).ceil() / 100.0
}

/// Open-loop experiment on the augmented plant with perturbation `(w, -r)`.
#[allow(clippy::too_many_arguments)]
pub fn collect_aug<I, S, W>(
    aug: &AugmentedSystem,
    t: usize,
    input: &mut I,
    schedule: &mut S,
    noise: &mut W,
    reference: &ReferenceSignal,
    psi0: &Vector,
    delta_hat: f64,
) -> Result<ExperimentData>
where
    I: SignalLaw + ?Sized,
    S: SignalLaw + ?Sized,
    W: SignalLaw + ?Sized,
{
    let mut pert = |k: usize| aug.perturbation(&noise.sample(k), &reference.at(k));
    collect(&aug.system, t, input, schedule, &mut pert, psi0, delta_hat)
}

/// Stabilization program on augmented data (same builders as the plain case).
pub fn build_tracking_synthesis_program(data: &ExperimentData, cfg: &SynthesisConfig) -> Result<SynthesisProgram> {
    build_synthesis_program(data, cfg)
}

/// Trigger program on augmented data (same builders as the plain case).
pub fn build_tracking_trigger_program(p: &Mat, fq: &FQuad, data: &ExperimentData, d: &TriggerDesign) -> Result<TriggerProgram> {
    build_trigger_program(p, fq, data, d)
}

/// Exported text of a program, for regression comparison.
pub fn program_fingerprint(p: &Program) -> String {
    crate::sdp::export::to_text(p)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceKind {
    /// `a sin(2 pi k / period)`.
    Sinusoid { amplitude: f64, period: f64 },
    /// `a sign(sin(2 pi k / period))`, with `sign(0) = 1`.
    Square { amplitude: f64, period: f64 },
    /// `(R cos t, R sin t)`, `t = 2 pi k / period`.
    Circle { radius: f64, period: f64 },
    /// `x = R sin t`, `y = 2 x sqrt(1 - (x/R)^2) sign(cos t)`.
    Figure8 { radius: f64, period: f64 },
    Custom(Vec<Vector>),
}

impl ReferenceKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sinusoid { .. } => "sinusoid",
            Self::Square { .. } => "square",
            Self::Circle { .. } => "circle",
            Self::Figure8 { .. } => "figure8",
            Self::Custom(_) => "custom",
        }
    }

    /// Build from a kind name and its two scalar parameters.
    pub fn from_name(name: &str, size: f64, period: f64) -> Result<Self> {
        match name {
            "sinusoid" => Ok(Self::Sinusoid { amplitude: size, period }),
            "square" => Ok(Self::Square { amplitude: size, period }),
            "circle" => Ok(Self::Circle { radius: size, period }),
            "figure8" => Ok(Self::Figure8 { radius: size, period }),
            other => Err(Error::Config(format!("unknown reference kind \"{other}\""))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Sinusoid { .. } | Self::Square { .. } => 1,
            Self::Circle { .. } | Self::Figure8 { .. } => 2,
            Self::Custom(s) => s.first().map_or(0, |v| v.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal {
    pub kind: ReferenceKind,
    pub samples: Vec<Vector>,
}

impl ReferenceSignal {
    /// Sample `k`; past the end the last sample is held.
    pub fn at(&self, k: usize) -> Vector {
        self.samples[k.min(self.samples.len() - 1)].clone()
    }

    pub fn max_norm(&self) -> f64 {
        self.samples.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }
}

/// `N + 1` samples of the reference.
pub fn make_reference(kind: ReferenceKind, horizon: usize) -> Result<ReferenceSignal> {
    let check_period = |p: f64| {
        if p > 0.0 && p.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("reference period must be positive, got {p}")))
        }
    };
    let samples: Vec<Vector> = match &kind {
        ReferenceKind::Sinusoid { amplitude, period } => {
            check_period(*period)?;
            (0..=horizon).map(|k| Vector::from_element(1, amplitude * (2.0 * PI * k as f64 / period).sin())).collect()
        }
        ReferenceKind::Square { amplitude, period } => {
            check_period(*period)?;
            (0..=horizon)
                .map(|k| {
                    let s = (2.0 * PI * k as f64 / period).sin();
                    Vector::from_element(1, if s >= 0.0 { *amplitude } else { -amplitude })
                })
                .collect()
        }
        ReferenceKind::Circle { radius, period } => {
            check_period(*period)?;
            (0..=horizon)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / period;
                    Vector::from_vec(vec![radius * t.cos(), radius * t.sin()])
                })
                .collect()
        }
        ReferenceKind::Figure8 { radius, period } => {
            check_period(*period)?;
            (0..=horizon)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / period;
                    let x = radius * t.sin();
                    let f = (1.0 - (x / radius).powi(2)).max(0.0).sqrt();
                    let s = if t.cos() >= 0.0 { 1.0 } else { -1.0 };
                    Vector::from_vec(vec![x, 2.0 * x * f * s])
                })
                .collect()
        }
        ReferenceKind::Custom(s) => {
            if s.len() < horizon + 1 {
                return Err(Error::Config(format!("custom reference has {} samples, need {}", s.len(), horizon + 1)));
            }
            s[..=horizon].to_vec()
        }
    };
    Ok(ReferenceSignal { kind, samples })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingStats {
    pub max_error: f64,
    /// RMS of `|y - r|` over the final quarter of the samples.
    pub final_rms: f64,
    pub integral_max: f64,
    /// Largest `|chi|` up to the horizon midpoint.
    pub integral_mid: f64,
    /// Largest `|chi|` in the final quarter.
    pub integral_final_max: f64,
}

impl TrackingStats {
    /// Final-quarter integral state stays within ten times its midpoint value.
    pub fn integral_bounded(&self) -> bool {
        self.integral_max.is_finite() && self.integral_final_max <= 10.0 * self.integral_mid
    }
}

/// Error statistics of a tracking run; `n` is the base state dimension.
pub fn tracking_error_stats(trace: &SimulationTrace, reference: &ReferenceSignal, n: usize) -> Result<TrackingStats> {
    let len = trace.len();
    if len == 0 {
        return Err(Error::Precondition("empty trace".into()));
    }
    let errs: Vec<f64> = (0..len).map(|k| (&trace.y[k] - reference.at(k)).norm()).collect();
    let start = len - (len / 4).max(1);
    let window = &errs[start..];
    let final_rms = (window.iter().map(|e| e * e).sum::<f64>() / window.len() as f64).sqrt();
    let chi = |k: usize| trace.x[k].rows(n, trace.x[k].len() - n).norm();
    let integral_max = (0..len).map(chi).fold(0.0, f64::max);
    let integral_final_max = (start..len).map(chi).fold(0.0, f64::max);
    Ok(TrackingStats {
        max_error: errs.iter().copied().fold(0.0, f64::max),
        final_rms,
        integral_max,
        integral_mid: (0..=len / 2).map(chi).fold(0.0, f64::max),
        integral_final_max,
    })
}

#[derive(Debug, Clone)]
pub struct TrackingRun {
    pub trace: SimulationTrace,
    pub stats: TrackingStats,
    pub events: InterEventStats,
}

/// Event-triggered loop on `psi` with perturbation `(w_k, -r_k)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_tracking_event_triggered<S, W>(
    aug: &AugmentedSystem,
    gains: &AffineMatrixFunction,
    cfg: &TriggerConfig,
    b_hat_est: &AffineMatrixFunction,
    reference: &ReferenceSignal,
    schedule: &mut S,
    noise: &mut W,
    psi0: &Vector,
    horizon: usize,
) -> Result<TrackingRun>
where
    S: SignalLaw + ?Sized,
    W: SignalLaw + ?Sized,
{
    if reference.dim() != aug.r() {
        return Err(Error::Dimension(format!("reference has dimension {}, plant output {}", reference.dim(), aug.r())));
    }
    let mut pert = |k: usize| aug.perturbation(&noise.sample(k), &reference.at(k));
    let mut trace =
        crate::trigger::simulate_event_triggered_with(&aug.system, gains, cfg, b_hat_est, schedule, &mut pert, psi0, horizon)?;
    trace.reference = Some((0..=horizon).map(|k| reference.at(k)).collect());
    let stats = tracking_error_stats(&trace, reference, aug.n())?;
    let events = inter_event_stats(&trace);
    Ok(TrackingRun { trace, stats, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{example2_plant, example3_plant};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn rand_sys(rng: &mut ChaCha8Rng, n: usize, m: usize, r: usize, l: usize) -> LpvSystem {
        let f = |rng: &mut ChaCha8Rng, a: usize, b: usize| {
            AffineMatrixFunction::new(rand_mat(rng, a, b), (0..l).map(|_| rand_mat(rng, a, b)).collect()).unwrap()
        };
        let a = f(rng, n, n);
        let b = f(rng, n, m);
        let c = f(rng, r, n);
        let d = f(rng, r, m);
        LpvSystem::new(a, b, c, d).unwrap()
    }

    #[test]
    fn example_two_augmentation_matches_printed_matrices() {
        let aug = augment_system(&example2_plant()).unwrap();
        let a0 = Mat::from_row_slice(2, 2, &[0.3023, 0.0, 0.1885, 1.0]);
        let a1 = Mat::from_row_slice(2, 2, &[0.5469, 0.0, 0.0997, 0.0]);
        assert_eq!(aug.a_hat().base, a0);
        assert_eq!(aug.a_hat().coeffs[0], a1);
        assert_eq!(aug.b_hat().base, Mat::from_row_slice(2, 1, &[0.9902, 0.9672]));
        assert_eq!(aug.b_hat().coeffs[0], Mat::from_row_slice(2, 1, &[0.6914, 0.0470]));
    }

    #[test]
    fn example_three_augmentation_matches_printed_matrices() {
        let aug = augment_system(&example3_plant()).unwrap();
        let a0 = Mat::from_row_slice(3, 3, &[0.5387, 0.0, 0.0, 0.2466, 1.0, 0.0, 0.3765, 0.0, 1.0]);
        let a1 = Mat::from_row_slice(3, 3, &[0.8871, 0.0, 0.0, 0.8401, 0.0, 0.0, 0.8190, 0.0, 0.0]);
        let b0 = Mat::from_row_slice(3, 2, &[0.5450, 0.2260, 0.6290, 0.0160, 0.9022, 0.9636]);
        let b1 = Mat::from_row_slice(3, 2, &[0.5289, 0.2227, 0.2676, 0.8512, 0.7303, 0.4969]);
        assert_eq!(aug.a_hat().base, a0);
        assert_eq!(aug.a_hat().coeffs[0], a1);
        assert_eq!(aug.b_hat().base, b0);
        assert_eq!(aug.b_hat().coeffs[0], b1);
    }

    #[test]
    fn given_augmented_matrices_pass_through() {
        let aug = augment_system(&example2_plant()).unwrap();
        let again = from_augmented(aug.a_hat(), aug.b_hat(), 1).unwrap();
        assert_eq!(again.system, aug.system);
        assert_eq!(again.base, example2_plant());
        let mut bad = aug.a_hat().clone();
        bad.base[(0, 1)] = 0.5;
        assert!(from_augmented(&bad, aug.b_hat(), 1).is_err());
    }

    #[test]
    fn zero_output_map_freezes_integrator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sys = rand_sys(&mut rng, 2, 1, 1, 1);
        sys.c = AffineMatrixFunction::zeros(1, 2, 1);
        sys.d = AffineMatrixFunction::zeros(1, 1, 1);
        let aug = augment_system(&sys).unwrap();
        let mut psi = Vector::from_vec(vec![0.3, -0.1, 0.7]);
        for k in 0..10 {
            let u = Vector::from_element(1, (k as f64).cos());
            let p = Vector::from_element(1, 0.5);
            psi = aug.system.step(&psi, &u, &p, &aug.perturbation(&Vector::zeros(2), &Vector::zeros(1))).unwrap().0;
            assert_eq!(psi[2], 0.7);
        }
    }

    #[test]
    fn data_lengths() {
        assert_eq!(min_data_length_aug(2, 1, 1), 11);
        assert_eq!(min_data_length_aug(3, 2, 1), 29);
        assert_eq!(min_data_length_aug(1, 1, 0), 1);
    }

    #[test]
    fn delta_hat_rounding() {
        assert!((delta_hat(0.1, 1.0) - 1.01).abs() < 1e-12);
        assert!((delta_hat(0.1, 2.5) - 2.51).abs() < 1e-12);
        assert!((delta_hat(0.0, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_shapes() {
        let c = make_reference(ReferenceKind::Circle { radius: 2.5, period: 1000.0 }, 3000).unwrap();
        assert_eq!(c.samples.len(), 3001);
        assert!(c.samples.iter().all(|v| (v[0] * v[0] + v[1] * v[1] - 6.25).abs() < 1e-12));
        let s = make_reference(ReferenceKind::Square { amplitude: 1.0, period: 150.0 }, 600).unwrap();
        assert!(s.samples.iter().all(|v| v[0] == 1.0 || v[0] == -1.0));
        assert!(s.samples.iter().any(|v| v[0] == -1.0));
        let w = make_reference(ReferenceKind::Sinusoid { amplitude: 1.0, period: 150.0 }, 600).unwrap();
        assert_eq!(w.samples[0][0], 0.0);
        assert!(w.samples.iter().all(|v| v[0].abs() <= 1.0));
        let e = make_reference(ReferenceKind::Figure8 { radius: 2.5, period: 1000.0 }, 3000).unwrap();
        for v in &e.samples {
            assert!(v[0].abs() <= 2.5);
            assert!((v[1] * v[1] - 4.0 * v[0] * v[0] * (1.0 - (v[0] / 2.5).powi(2))).abs() < 1e-12);
        }
        assert!(e.samples.iter().any(|v| v[1] > 1.0) && e.samples.iter().any(|v| v[1] < -1.0));
        assert!(matches!(ReferenceKind::from_name("unknown", 1.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn quiet_tracking_run() {
        let aug = augment_system(&example2_plant()).unwrap();
        let gains = AffineMatrixFunction::new(Mat::from_row_slice(1, 2, &[-0.3, -0.1]), vec![Mat::zeros(1, 2)]).unwrap();
        let cfg = TriggerConfig { psi1: Mat::identity(2, 2), psi2: Mat::identity(2, 2), v: 1.0, mu: 9.0, eps: 0.001, beta: 0.1 };
        let r = make_reference(ReferenceKind::Custom(vec![Vector::zeros(1); 51]), 50).unwrap();
        let mut sched = |k: usize| Vector::from_element(1, (k as f64).sin());
        let run = simulate_tracking_event_triggered(&aug, &gains, &cfg, aug.b_hat(), &r, &mut sched, &mut |_k: usize| Vector::zeros(1), &Vector::zeros(2), 50).unwrap();
        assert!(run.trace.x.iter().all(|v| v.amax() == 0.0));
        assert_eq!(run.events.transmissions, 1);
        assert_eq!(run.stats.final_rms, 0.0);
    }

    #[test]
    fn constant_offset_rms() {
        let r = make_reference(ReferenceKind::Custom(vec![Vector::zeros(2); 9]), 8).unwrap();
        let e = Vector::from_vec(vec![0.3, -0.4]);
        let trace = SimulationTrace {
            x: vec![Vector::zeros(3); 9],
            y: vec![e.clone(); 9],
            triggered: vec![true; 9],
            horizon: 8,
            ..Default::default()
        };
        let st = tracking_error_stats(&trace, &r, 1).unwrap();
        assert!((st.final_rms - 0.5).abs() < 1e-15);
        assert!((st.max_error - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn augmented_step_matches_componentwise(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, m, r, l) = (2, 2, 2, 2);
            let sys = rand_sys(&mut rng, n, m, r, l);
            let aug = augment_system(&sys).unwrap();
            let mut x = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let mut chi = Vector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
            let mut psi = Vector::from_iterator(n + r, x.iter().chain(chi.iter()).copied());
            for _ in 0..20 {
                let u = Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
                let p = Vector::from_fn(l, |_, _| rng.random_range(-1.0..1.0));
                let w = Vector::from_fn(n, |_, _| rng.random_range(-0.1..0.1));
                let rk = Vector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
                let (xn, y) = sys.step(&x, &u, &p, &w).unwrap();
                let chin = &chi + &y - &rk;
                psi = aug.system.step(&psi, &u, &p, &aug.perturbation(&w, &rk)).unwrap().0;
                prop_assert!((psi.rows(0, n) - &xn).amax() <= 1e-12 * (1.0 + xn.amax()));
                prop_assert!((psi.rows(n, r) - &chin).amax() <= 1e-12 * (1.0 + chin.amax()));
                x = xn;
                chi = chin;
            }
        }
    }
}
