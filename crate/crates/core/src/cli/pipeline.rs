//! Stabilization and tracking pipelines behind the CLI commands.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::cli::config::{bundled_config, RunConfig, ScheduleDef};
use crate::cli::report::{
    rows, DataSummary, EventSummary, RunReport, StabilizationSummary, StageError, TrackingSummary, TriggerSummary,
    VerificationSummary,
};
use crate::data::{collect, min_data_length, regressor_rank, theta_pe_margin, ExperimentData, RANK_TOL};
use crate::error::{Error, Result};
use crate::laws::{rng_for, BallNoise, Stream, UniformLaw};
use crate::linalg::{self, Mat, Vector};
use crate::lpv::{AffineMatrixFunction, LpvSystem, SchedulingBox, SignalLaw, SimulationTrace};
use crate::sdp::{BundledIpm, SolveOptions, SolveStatus};
use crate::synthesis::{
    nominal_decay_ratio, plug_in_check, synthesize, verify_closed_loop, SynthesisConfig, SynthesisSolution, VerifyConfig,
};
use crate::tracking::{
    augment_system, collect_aug, delta_hat, make_reference, simulate_tracking_event_triggered, AugmentedSystem,
    ReferenceKind, ReferenceSignal,
};
use crate::trigger::{
    detector_violation, extract_input_matrix, inter_event_stats, practical_decrease_check, simulate_event_triggered,
    synthesize_trigger, zoh_violation, TriggerConfig, TriggerDesign,
};

/// Environment variable overriding the default output directory.
pub const OUT_DIR_ENV: &str = "ETLPV_OUT_DIR";

const ZOH_TOL: f64 = 1e-9;
const NOMINAL_DECAY_BOUND: f64 = 1e-3;
const PLUG_IN_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// `None` skips writing files.
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub solver_tol: Option<f64>,
    /// Add the `expect` block checks.
    pub reproduce: bool,
}

/// `--out`, else the environment override, else `out`.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

fn apply_overrides(cfg: &RunConfig, opts: &RunOptions) -> Result<RunConfig> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.simulation.seed = s;
    }
    if let Some(t) = opts.solver_tol {
        cfg.solver.tol = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn solve_options(cfg: &RunConfig) -> SolveOptions {
    SolveOptions { tol: cfg.solver.tol, max_iterations: cfg.solver.max_iterations, ..Default::default() }
}

fn closed_loop_schedule(cfg: &RunConfig, bx: &SchedulingBox) -> Box<dyn SignalLaw> {
    match cfg.simulation.schedule {
        ScheduleDef::Uniform => Box::new(UniformLaw::in_box(rng_for(cfg.simulation.seed, Stream::ClosedLoopSchedule), bx)),
        ScheduleDef::Sinusoid { period } => {
            let (lo, hi) = (bx.lower.clone(), bx.upper.clone());
            let l = lo.len();
            Box::new(move |k: usize| {
                Vector::from_fn(l, |i, _| {
                    let phase = 2.0 * PI * (k as f64 / period + i as f64 / l as f64);
                    0.5 * (lo[i] + hi[i]) + 0.5 * (hi[i] - lo[i]) * phase.sin()
                })
            })
        }
    }
}

/// Interior grid for the certificate re-check: 21 points per axis up to two
/// scheduling parameters, the box center otherwise.
fn check_grid(bx: &SchedulingBox) -> Vec<Vector> {
    let l = bx.dim();
    let pt = |i: usize, t: f64| bx.lower[i] + t * (bx.upper[i] - bx.lower[i]);
    match l {
        0 => vec![],
        1 => (0..=20).map(|a| Vector::from_element(1, pt(0, a as f64 / 20.0))).collect(),
        2 => (0..=20)
            .flat_map(|a| (0..=20).map(move |b| (a, b)))
            .map(|(a, b)| Vector::from_vec(vec![pt(0, a as f64 / 20.0), pt(1, b as f64 / 20.0)]))
            .collect(),
        _ => vec![Vector::from_fn(l, |i, _| pt(i, 0.5))],
    }
}

fn pd(m: &Mat) -> bool {
    linalg::min_eig(m) > 0.0
}

fn gains_rows(g: &AffineMatrixFunction) -> Vec<Vec<Vec<f64>>> {
    std::iter::once(&g.base).chain(&g.coeffs).map(rows).collect()
}

/// Experiment-stage checks shared by both pipelines. Returns `false` when the
/// pipeline must stop.
fn record_data(report: &mut RunReport, cfg: &RunConfig, opts: &RunOptions, data: &ExperimentData, min_len: usize) -> bool {
    let t = data.t;
    let us: Vec<Vector> = (0..t).map(|k| data.u.column(k).into_owned()).collect();
    let depth = data.n * (1 + data.l);
    let pe_margin = theta_pe_margin(&us, &data.schedule, depth.min(t)).unwrap_or(0.0);
    let rank = regressor_rank(data, RANK_TOL);
    let required = data.full_rank();
    report.data =
        Some(DataSummary { length: t, min_length: min_len, rank, required_rank: required, pe_margin, delta: data.delta });
    report.check("data-length", t >= min_len, format!("T = {t}, minimum {min_len}"));
    if opts.reproduce {
        if let Some(e) = cfg.expect.length {
            report.check("expected-data-length", t == e, format!("T = {t}, expected {e}"));
        }
        if let Some(e) = cfg.expect.min_length {
            report.check("expected-min-length", min_len == e, format!("minimum {min_len}, expected {e}"));
        }
        if let Some(e) = cfg.expect.rank {
            report.check("expected-rank", rank == e, format!("rank {rank}, expected {e}"));
        }
    }
    report.check("rank", rank == required, format!("rank {rank}, required {required}"));
    if rank < required {
        report.fail("excitation", StageError::RankDeficientData, format!("rank {rank} < {required}"));
        return false;
    }
    report.pass("excitation", format!("rank {rank}, PE margin {pe_margin:.3e}"));
    true
}

fn blocked(report: &mut RunReport, names: &[&str], why: &str) {
    for n in names {
        report.check(n, false, format!("not evaluated: {why}"));
    }
}

struct Stabilized {
    sol: SynthesisSolution,
}

fn run_stabilization(
    report: &mut RunReport,
    data: &ExperimentData,
    scfg: &SynthesisConfig,
    cfg: &RunConfig,
    bx: &SchedulingBox,
) -> Result<Option<Stabilized>> {
    let opts = solve_options(cfg);
    let out = synthesize(data, scfg, &opts, &BundledIpm::default())?;
    let mut summary = StabilizationSummary {
        status: out.status.as_str().into(),
        message: out.message.clone(),
        iterations: out.iterations,
        precheck: out.precheck.map(|s| s.as_str().into()),
        plug_in_worst: None,
        p: None,
        gains: None,
    };
    report.check("stabilization-feasible", out.is_feasible(), out.message.clone());
    let Some(sol) = out.solution else {
        report.stabilization = Some(summary);
        let err = match out.status {
            SolveStatus::Infeasible => StageError::StabilizationInfeasible,
            _ => StageError::StabilizationNumericalFailure,
        };
        report.fail("stabilization", err, out.message);
        return Ok(None);
    };
    let pc = plug_in_check(data, scfg, &sol, &check_grid(bx))?;
    let worst = pc.worst(scfg);
    let limit = PLUG_IN_FACTOR * cfg.solver.tol;
    let named: Vec<String> = pc.violations(scfg).iter().map(|(n, v)| format!("{n} {v:.2e}")).collect();
    report.check("plug-in-residuals", worst <= limit, format!("worst {worst:.3e} <= {limit:.1e}; {}", named.join(", ")));
    summary.plug_in_worst = Some(worst);
    summary.p = Some(rows(&sol.p));
    summary.gains = Some(gains_rows(&sol.gains));
    report.stabilization = Some(summary);
    report.pass("stabilization", format!("trace(P) = {:.4}", sol.p.trace()));
    Ok(Some(Stabilized { sol }))
}

fn run_trigger(
    report: &mut RunReport,
    data: &ExperimentData,
    st: &Stabilized,
    design: &TriggerDesign,
    v: f64,
    cfg: &RunConfig,
) -> Result<Option<TriggerConfig>> {
    let out = synthesize_trigger(&st.sol.p, &st.sol.fq, data, design, &solve_options(cfg), &BundledIpm::default())?;
    let mut summary = TriggerSummary {
        status: out.status.as_str().into(),
        message: out.message.clone(),
        iterations: out.iterations,
        psi1: None,
        psi2: None,
    };
    report.check("trigger-feasible", out.is_feasible(), out.message.clone());
    let (Some(psi1), Some(psi2)) = (out.psi1.clone(), out.psi2.clone()) else {
        report.trigger = Some(summary);
        let err = match out.status {
            SolveStatus::Infeasible => StageError::TriggerInfeasible,
            _ => StageError::TriggerNumericalFailure,
        };
        report.fail("trigger", err, out.message);
        return Ok(None);
    };
    let psi_ok = pd(&psi1) && pd(&psi2);
    report.check(
        "psi-positive-definite",
        psi_ok,
        format!("lmin(Psi1) = {:.3e}, lmin(Psi2) = {:.3e}", linalg::min_eig(&psi1), linalg::min_eig(&psi2)),
    );
    summary.psi1 = Some(rows(&psi1));
    summary.psi2 = Some(rows(&psi2));
    report.trigger = Some(summary);
    if !psi_ok {
        report.fail("trigger", StageError::TriggerNumericalFailure, "Psi matrices are not positive definite");
        return Ok(None);
    }
    report.pass("trigger", "Psi1, Psi2 positive definite");
    Ok(Some(TriggerConfig { psi1, psi2, v, mu: design.mu, eps: design.eps, beta: design.beta }))
}

fn event_checks(report: &mut RunReport, trace: &SimulationTrace, tc: &TriggerConfig, gains: &AffineMatrixFunction, p: &Mat, sigma: f64) -> Result<()> {
    let det = detector_violation(trace, tc);
    report.check("detector-soundness", det.is_none(), det.map_or("holds at every step".into(), |k| format!("violated at k = {k}")));
    let zoh = zoh_violation(trace, gains, ZOH_TOL);
    report.check("zoh-contract", zoh.is_none(), zoh.map_or("holds at every step".into(), |k| format!("violated at k = {k}")));
    let dec = practical_decrease_check(trace, p, tc, sigma)?;
    report.check(
        "practical-decrease",
        dec.ok,
        format!("worst excess {:.3e}{}", dec.worst_excess, dec.first_violation.map_or(String::new(), |k| format!(", first at k = {k}"))),
    );
    Ok(())
}

fn printed_psi_check(report: &mut RunReport, cfg: &RunConfig, opts: &RunOptions) {
    if !opts.reproduce {
        return;
    }
    if let Some((a, b)) = &cfg.expect.printed_psi {
        let (a, b) = (linalg::from_rows(a), linalg::from_rows(b));
        report.check(
            "printed-psi-positive-definite",
            pd(&a) && pd(&b),
            format!("lmin = {:.4}, {:.4}", linalg::min_eig(&a), linalg::min_eig(&b)),
        );
    }
}

fn write_outputs(report: &mut RunReport, opts: &RunOptions, trace: Option<&SimulationTrace>) -> Result<()> {
    let Some(dir) = &opts.out_dir else { return Ok(()) };
    std::fs::create_dir_all(dir)?;
    if let Some(tr) = trace {
        let path = trace_path(dir, &report.name);
        let file = std::fs::File::create(&path)?;
        write_trace_csv(tr, std::io::BufWriter::new(file))?;
        report.traces.push(path.display().to_string());
    }
    let path = dir.join(format!("{}.report.json", report.name));
    std::fs::write(path, report.to_json())?;
    Ok(())
}

/// `k, x1..xn, u1..um, p1..pl, w1..wn, triggered, V`, one row per sample.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let n = trace.x.first().map_or(0, |v| v.len());
    let m = trace.u.first().map_or(0, |v| v.len());
    let l = trace.p.first().map_or(0, |v| v.len());
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.extend((1..=l).map(|i| format!("p{i}")));
    header.extend((1..=n).map(|i| format!("w{i}")));
    header.push("triggered".into());
    header.push("V".into());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).map_err(io)?;
    for k in 0..trace.len() {
        let mut row = vec![k.to_string()];
        for v in [&trace.x[k], &trace.u[k], &trace.p[k], &trace.w[k]] {
            row.extend(v.iter().map(|z| z.to_string()));
        }
        row.push(if trace.triggered[k] { "1".into() } else { "0".into() });
        row.push(trace.lyapunov.as_ref().map_or(String::new(), |v| v[k].to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub const SYNTHESIZE_STAGES: &[&str] = &["collect", "excitation", "stabilization", "trigger", "simulate", "verify"];
pub const TRACK_STAGES: &[&str] = &["augment", "collect", "excitation", "stabilization", "trigger", "simulate", "verify"];

/// Collect, check excitation, solve both programs, simulate the
/// event-triggered loop and verify it.
pub fn cmd_synthesize(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport> {
    let cfg = apply_overrides(cfg, opts)?;
    let s = cfg.synthesis.clone().ok_or_else(|| Error::Config("field `synthesis`: required by synthesize".into()))?;
    let t_def = cfg.trigger.clone().ok_or_else(|| Error::Config("field `trigger`: required by synthesize".into()))?;
    let seed = cfg.simulation.seed;
    let mut report = RunReport::new(&cfg.name, "synthesize", seed, SYNTHESIZE_STAGES);
    report.duration_seconds = cfg.simulation.horizon as f64 * cfg.k_step;
    let sys = cfg.system.build()?;
    let bx = cfg.scheduling_box(sys.l())?;
    let delta = cfg.simulation.delta;
    let min_len = min_data_length(sys.n(), sys.m(), sys.l());
    let t = cfg.data_length(min_len)?;
    const DOWNSTREAM: &[&str] = &[
        "stabilization-feasible",
        "plug-in-residuals",
        "trigger-feasible",
        "psi-positive-definite",
        "vertex-spectral-radius",
        "nominal-decay",
        "lyapunov-decrease",
        "mean-inter-event-interval",
        "detector-soundness",
        "zoh-contract",
        "practical-decrease",
    ];
    printed_psi_check(&mut report, &cfg, opts);

    if cfg.data.pe_check && t < min_len {
        report.fail("collect", StageError::InsufficientDataLength, format!("T = {t} < {min_len}"));
        report.check("data-length", false, format!("T = {t}, minimum {min_len}"));
        blocked(&mut report, DOWNSTREAM, "insufficient data length");
        write_outputs(&mut report, opts, None)?;
        return Ok(report);
    }
    let mut input = UniformLaw::symmetric(rng_for(seed, Stream::Input), sys.m(), cfg.data.input_amplitude);
    let mut sched = UniformLaw::in_box(rng_for(seed, Stream::Schedule), &bx);
    let mut noise = BallNoise::new(rng_for(seed, Stream::Noise), sys.n(), delta);
    let data = collect(&sys, t, &mut input, &mut sched, &mut noise, &Vector::from_vec(cfg.data.x0.clone()), delta)?;
    report.pass("collect", format!("T = {t}"));
    if !record_data(&mut report, &cfg, opts, &data, min_len) {
        blocked(&mut report, DOWNSTREAM, "rank-deficient data");
        write_outputs(&mut report, opts, None)?;
        return Ok(report);
    }

    let mut scfg = SynthesisConfig::new(s.sigma, s.beta, s.eps, delta);
    scfg.trace_lo = s.trace_lo;
    scfg.trace_hi = s.trace_hi;
    scfg.vertex_precheck = s.vertex_precheck;
    scfg.schedule_box = Some(bx.clone());
    let Some(st) = run_stabilization(&mut report, &data, &scfg, &cfg, &bx)? else {
        blocked(&mut report, &DOWNSTREAM[1..], "stabilization failed");
        write_outputs(&mut report, opts, None)?;
        return Ok(report);
    };

    let mut design = TriggerDesign::new(t_def.mu, t_def.eps, t_def.beta.unwrap_or(s.beta / 2.0), delta);
    design.schedule_box = Some(bx.clone());
    let tc = run_trigger(&mut report, &data, &st, &design, t_def.v, &cfg)?;

    let pinv = linalg::spd_inverse(&st.sol.p).ok_or_else(|| Error::Singular("P".into()))?;
    let mut vcfg = VerifyConfig::new(s.beta, s.sigma, delta, seed);
    vcfg.trials = cfg.simulation.trials;
    vcfg.horizon = cfg.simulation.verify_horizon;
    let ver = verify_closed_loop(&sys, &st.sol.gains, &st.sol.p, &bx, &vcfg)?;
    let decay = nominal_decay_ratio(&sys, &st.sol.gains, &bx, &cfg.x0(), cfg.simulation.decay_horizon, seed)?;
    report.check("vertex-spectral-radius", ver.vertices_stable(), format!("radii {:?}", ver.vertex_radii));
    report.check("nominal-decay", decay <= NOMINAL_DECAY_BOUND, format!("|x_N|/|x_0| = {decay:.3e}"));
    report.check("lyapunov-decrease", ver.decrease_ok, format!("worst excess {:.3e} over {} trials", ver.worst_excess, vcfg.trials));
    report.verification = Some(VerificationSummary {
        vertex_radii: ver.vertex_radii.clone(),
        decrease_ok: ver.decrease_ok,
        worst_decrease_excess: ver.worst_excess,
        nominal_decay_ratio: decay,
    });

    let Some(tc) = tc else {
        blocked(&mut report, &DOWNSTREAM[7..], "trigger synthesis failed");
        report.fail("verify", StageError::VerificationFailed, "event-triggered loop not available");
        write_outputs(&mut report, opts, None)?;
        return Ok(report);
    };
    let b_est = extract_input_matrix(&data)?;
    let mut cl_sched = closed_loop_schedule(&cfg, &bx);
    let mut cl_noise = BallNoise::new(rng_for(seed, Stream::ClosedLoopNoise), sys.n(), delta);
    let trace = match simulate_event_triggered(&sys, &st.sol.gains, &tc, &b_est, &mut *cl_sched, &mut cl_noise, &cfg.x0(), cfg.simulation.horizon) {
        Ok(tr) => tr.with_lyapunov(&pinv),
        Err(e) => {
            report.fail("simulate", StageError::SimulationFailed, e.to_string());
            blocked(&mut report, &DOWNSTREAM[7..], "simulation failed");
            write_outputs(&mut report, opts, None)?;
            return Ok(report);
        }
    };
    let ev = inter_event_stats(&trace);
    report.events = Some(EventSummary {
        transmissions: ev.transmissions,
        horizon: trace.horizon,
        mean_interval: ev.mean_interval,
        max_interval: ev.max_interval,
    });
    report.pass("simulate", format!("{} transmissions over {} steps", ev.transmissions, trace.horizon));
    report.check("mean-inter-event-interval", ev.mean_interval > 1.0, format!("mean {:.4}", ev.mean_interval));
    event_checks(&mut report, &trace, &tc, &st.sol.gains, &st.sol.p, s.sigma)?;
    finish_verify(&mut report);
    write_outputs(&mut report, opts, Some(&trace))?;
    Ok(report)
}

fn finish_verify(report: &mut RunReport) {
    let failed: Vec<String> = report.failed_checks().iter().map(|c| c.name.clone()).collect();
    if failed.is_empty() {
        report.pass("verify", "all checks passed");
    } else {
        report.fail("verify", StageError::VerificationFailed, failed.join(", "));
    }
}

/// Largest relative mismatch between the recorded augmented trace and the
/// plant plus integrator stepped componentwise.
pub fn augmentation_mismatch(aug: &AugmentedSystem, trace: &SimulationTrace, reference: &ReferenceSignal) -> Result<f64> {
    let (n, r) = (aug.n(), aug.r());
    let mut worst: f64 = 0.0;
    for k in 0..trace.horizon {
        let psi = &trace.x[k];
        let x = psi.rows(0, n).into_owned();
        let chi = psi.rows(n, r).into_owned();
        let w = trace.w[k].rows(0, n).into_owned();
        let (xn, y) = aug.base.step(&x, &trace.u[k], &trace.p[k], &w)?;
        let chin = &chi + &y - reference.at(k);
        let next = &trace.x[k + 1];
        let ex = (next.rows(0, n) - &xn).amax() / (1.0 + xn.amax());
        let ec = (next.rows(n, r) - &chin).amax() / (1.0 + chin.amax());
        worst = worst.max(ex).max(ec);
    }
    Ok(worst)
}

/// Largest deviation of the reference samples from their defining relation.
pub fn reference_invariant_error(reference: &ReferenceSignal) -> f64 {
    let s = &reference.samples;
    match &reference.kind {
        ReferenceKind::Circle { radius, .. } => {
            s.iter().map(|v| (v[0] * v[0] + v[1] * v[1] - radius * radius).abs()).fold(0.0, f64::max)
        }
        ReferenceKind::Figure8 { radius, .. } => s
            .iter()
            .map(|v| {
                let out_of_range = if v[0].abs() > *radius { 1.0 } else { 0.0 };
                (v[1] * v[1] - 4.0 * v[0] * v[0] * (1.0 - (v[0] / radius).powi(2))).abs() + out_of_range
            })
            .fold(0.0, f64::max),
        ReferenceKind::Square { amplitude, .. } => {
            s.iter().map(|v| (v[0].abs() - amplitude).abs()).fold(0.0, f64::max)
        }
        ReferenceKind::Sinusoid { amplitude, .. } => {
            s.iter().map(|v| (v[0].abs() - amplitude).max(0.0)).fold(0.0, f64::max)
        }
        ReferenceKind::Custom(_) => 0.0,
    }
}

/// Augment, collect, solve both tracking programs, simulate the
/// event-triggered tracking loop and verify it.
pub fn cmd_track(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport> {
    let cfg = apply_overrides(cfg, opts)?;
    let td = cfg.tracking.clone().ok_or_else(|| Error::Config("field `tracking`: required by track".into()))?;
    let seed = cfg.simulation.seed;
    let mut report = RunReport::new(&cfg.name, "track", seed, TRACK_STAGES);
    report.duration_seconds = cfg.simulation.horizon as f64 * cfg.k_step;
    let sys: LpvSystem = cfg.system.build()?;
    let bx = cfg.scheduling_box(sys.l())?;
    let horizon = cfg.simulation.horizon;
    const DOWNSTREAM: &[&str] = &[
        "stabilization-feasible",
        "plug-in-residuals",
        "trigger-feasible",
        "psi-positive-definite",
        "augmentation-consistency",
        "transmissions-below-horizon",
        "detector-soundness",
        "zoh-contract",
        "practical-decrease",
        "integral-bounded",
    ];

    let aug = augment_system(&sys)?;
    report.pass("augment", format!("n_bar = {}", aug.n_bar()));
    let kind = cfg.reference_kind()?.expect("tracking block present");
    let min_len = min_data_length(aug.n_bar(), sys.m(), sys.l());
    let t = cfg.data_length(min_len)?;
    let reference = make_reference(kind, horizon.max(t))?;
    let ref_err = reference_invariant_error(&reference);
    report.check("reference-invariant", ref_err <= 1e-12, format!("max deviation {ref_err:.3e}"));
    let delta = cfg.simulation.delta;
    let dhat = td.delta_hat.unwrap_or_else(|| delta_hat(delta, reference.max_norm()));

    if cfg.data.pe_check && t < min_len {
        report.fail("collect", StageError::InsufficientDataLength, format!("T = {t} < {min_len}"));
        report.check("data-length", false, format!("T = {t}, minimum {min_len}"));
        blocked(&mut report, DOWNSTREAM, "insufficient data length");
        write_outputs(&mut report, opts, None)?;
        return Ok(report);
    }
    let mut input = UniformLaw::symmetric(rng_for(seed, Stream::Input), sys.m(), cfg.data.input_amplitude);
    let mut sched = UniformLaw::in_box(rng_for(seed, Stream::Schedule), &bx);
    let mut noise = BallNoise::new(rng_for(seed, Stream::Noise), sys.n(), delta);
    let psi0 = Vector::from_vec(cfg.data.x0.clone());
    let data = collect_aug(&aug, t, &mut input, &mut sched, &mut noise, &reference, &psi0, dhat)?;
    report.pass("collect", format!("T = {t}, delta_hat = {dhat}"));
    if !record_data(&mut report, &cfg, opts, &data, min_len) {
        blocked(&mut report, DOWNSTREAM, "rank-deficient data");
        write_outputs(&mut report, opts, None)?;
        return Ok(report);
    }

    let mut scfg = SynthesisConfig::new(td.sigma, td.beta, td.eps, dhat);
    scfg.trace_lo = td.trace_lo;
    scfg.trace_hi = td.trace_hi;
    scfg.vertex_precheck = td.vertex_precheck;
    scfg.schedule_box = Some(bx.clone());
    let Some(st) = run_stabilization(&mut report, &data, &scfg, &cfg, &bx)? else {
        blocked(&mut report, &DOWNSTREAM[1..], "stabilization failed");
        write_outputs(&mut report, opts, None)?;
        return Ok(report);
    };
    let mut design = TriggerDesign::new(td.mu, td.eps_trigger, td.beta_trigger.unwrap_or(td.beta / 2.0), dhat);
    design.schedule_box = Some(bx.clone());
    let Some(tc) = run_trigger(&mut report, &data, &st, &design, td.v, &cfg)? else {
        blocked(&mut report, &DOWNSTREAM[4..], "trigger synthesis failed");
        write_outputs(&mut report, opts, None)?;
        return Ok(report);
    };

    let pinv = linalg::spd_inverse(&st.sol.p).ok_or_else(|| Error::Singular("P".into()))?;
    let b_est = extract_input_matrix(&data)?;
    let mut cl_sched = closed_loop_schedule(&cfg, &bx);
    let mut cl_noise = BallNoise::new(rng_for(seed, Stream::ClosedLoopNoise), sys.n(), delta);
    let run = match simulate_tracking_event_triggered(&aug, &st.sol.gains, &tc, &b_est, &reference, &mut *cl_sched, &mut cl_noise, &cfg.x0(), horizon) {
        Ok(r) => r,
        Err(e) => {
            report.fail("simulate", StageError::SimulationFailed, e.to_string());
            blocked(&mut report, &DOWNSTREAM[4..], "simulation failed");
            write_outputs(&mut report, opts, None)?;
            return Ok(report);
        }
    };
    let trace = run.trace.clone().with_lyapunov(&pinv);
    report.pass("simulate", format!("{} transmissions over {horizon} steps", run.events.transmissions));
    report.events = Some(EventSummary {
        transmissions: run.events.transmissions,
        horizon,
        mean_interval: run.events.mean_interval,
        max_interval: run.events.max_interval,
    });
    let st_ = &run.stats;
    report.tracking = Some(TrackingSummary {
        reference: reference.kind.name().into(),
        delta_hat: dhat,
        max_error: st_.max_error,
        final_rms: st_.final_rms,
        integral_max: st_.integral_max,
        integral_first_half_max: st_.integral_mid,
        integral_final_quarter_max: st_.integral_final_max,
    });
    let mis = augmentation_mismatch(&aug, &trace, &reference)?;
    report.check("augmentation-consistency", mis <= 1e-12, format!("max relative mismatch {mis:.3e}"));
    report.check(
        "transmissions-below-horizon",
        run.events.transmissions < horizon,
        format!("{} transmissions, N = {horizon}", run.events.transmissions),
    );
    event_checks(&mut report, &trace, &tc, &st.sol.gains, &st.sol.p, td.sigma)?;
    report.check(
        "integral-bounded",
        st_.integral_bounded(),
        format!("final-quarter max {:.4}, first-half max {:.4}", st_.integral_final_max, st_.integral_mid),
    );
    if let Some(c) = cfg.expect.rms_ceiling.filter(|_| opts.reproduce) {
        report.check("final-rms-ceiling", st_.final_rms <= c, format!("RMS {:.4} <= {c}", st_.final_rms));
    }
    if let Some(c) = cfg.expect.max_error_ceiling.filter(|_| opts.reproduce) {
        report.check("max-error-ceiling", st_.max_error <= c, format!("max error {:.4} <= {c}", st_.max_error));
    }
    finish_verify(&mut report);
    write_outputs(&mut report, opts, Some(&trace))?;
    Ok(report)
}

/// Run a bundled example with its acceptance checks.
pub fn cmd_reproduce(id: &str, opts: &RunOptions) -> Result<RunReport> {
    let cfg = bundled_config(id)?;
    let opts = RunOptions { reproduce: true, ..opts.clone() };
    if cfg.tracking.is_some() {
        cmd_track(&cfg, &opts)
    } else {
        cmd_synthesize(&cfg, &opts)
    }
}

/// 0 when every stage and check passed, 1 on infeasibility or a failed
/// check, 2 on configuration errors.
pub fn exit_code(result: &Result<RunReport>) -> i32 {
    match result {
        Ok(r) if r.passed() => 0,
        Ok(_) => 1,
        Err(Error::Config(_)) => 2,
        Err(_) => 1,
    }
}

pub fn trace_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_one_row_per_sample() {
        let tr = SimulationTrace {
            x: vec![Vector::from_vec(vec![1.0, 2.0]); 4],
            u: vec![Vector::from_element(1, 0.5); 4],
            p: vec![Vector::from_element(1, -1.0); 4],
            w: vec![Vector::zeros(2); 4],
            y: vec![Vector::zeros(2); 4],
            triggered: vec![true, false, false, true],
            lyapunov: Some(vec![1.0; 4]),
            horizon: 3,
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_trace_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,x1,x2,u1,p1,w1,w2,triggered,V");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2], "1,1,2,0.5,-1,0,0,0,1");
    }

    #[test]
    fn short_data_is_a_named_stage_failure() {
        let mut cfg = bundled_config("1").unwrap();
        cfg.data.length = crate::cli::config::DataLength::Fixed(10);
        let rep = cmd_synthesize(&cfg, &RunOptions::default()).unwrap();
        let st = rep.stage("collect").unwrap();
        assert_eq!(st.error, Some(StageError::InsufficientDataLength));
        assert!(st.detail.starts_with("insufficient data length"));
        assert!(rep.stages.iter().skip(1).all(|s| s.status == crate::cli::report::StageStatus::Skipped));
        assert_eq!(exit_code(&Ok(rep)), 1);
    }

    #[test]
    fn config_error_exit_code() {
        let mut cfg = bundled_config("1").unwrap();
        cfg.synthesis.as_mut().unwrap().beta = 1.5;
        let r = cmd_synthesize(&cfg, &RunOptions::default());
        assert!(matches!(r, Err(Error::Config(_))));
        assert_eq!(exit_code(&r), 2);
        assert!(matches!(cmd_reproduce("9", &RunOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn every_stage_reported_once() {
        let rep = RunReport::new("x", "track", 1, TRACK_STAGES);
        for s in TRACK_STAGES {
            assert_eq!(rep.stages.iter().filter(|r| r.name == *s).count(), 1);
        }
    }

    #[test]
    fn reference_invariants() {
        for kind in [
            ReferenceKind::Circle { radius: 2.5, period: 1000.0 },
            ReferenceKind::Figure8 { radius: 2.5, period: 1000.0 },
            ReferenceKind::Square { amplitude: 1.0, period: 150.0 },
            ReferenceKind::Sinusoid { amplitude: 1.0, period: 150.0 },
        ] {
            let r = make_reference(kind, 3000).unwrap();
            assert!(reference_invariant_error(&r) <= 1e-12);
        }
    }

    #[test]
    fn out_dir_resolution() {
        assert_eq!(resolve_out_dir(Some(PathBuf::from("a"))), PathBuf::from("a"));
    }
}
