//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use etlpv::cli::{bundled_config, cmd_reproduce, RunOptions, RunReport};
use etlpv::data::{collect, identify, min_data_length, regressor_rank, RANK_TOL};
use etlpv::examples::{example1_system, example2_plant, example3_plant};
use etlpv::laws::{rng_for, BallNoise, Stream, UniformLaw, ZeroLaw};
use etlpv::lfr::{build_fq, eval_f, num_f_blocks, ScriptF};
use etlpv::linalg::{Mat, Vector};
use etlpv::lpv::{LpvSystem, SchedulingBox};
use etlpv::tracking::{augment_system, collect_aug, delta_hat, make_reference, ReferenceKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Named checks of a report that must all be present and passing.
fn require_checks(rep: &RunReport, names: &[&str]) -> std::result::Result<(), String> {
    let mut bad = vec![];
    for n in names {
        match rep.checks.iter().find(|c| c.name == *n) {
            Some(c) if c.passed => {}
            Some(c) => bad.push(format!("{n}: {}", c.detail)),
            None => bad.push(format!("{n}: missing")),
        }
    }
    ensure(bad.is_empty(), format!("{}: {}", rep.name, bad.join("; ")))
}

fn c1_data_length() -> Outcome {
    let got = [min_data_length(2, 1, 2), min_data_length(2, 1, 1), min_data_length(3, 2, 1)];
    ensure(got == [23, 11, 29], format!("got {got:?}"))?;
    Ok(format!("{got:?}"))
}

fn c2_pe_rank() -> Outcome {
    let mut counts = vec![];
    for (idx, want) in [(1usize, 9usize), (2, 6), (3, 10)] {
        let mut hits = 0;
        for seed in 0..100u64 {
            let data = match idx {
                1 => {
                    let sys = example1_system();
                    let bx = SchedulingBox::symmetric(2, 1.0);
                    collect(
                        &sys,
                        23,
                        &mut UniformLaw::symmetric(rng_for(seed, Stream::Input), 1, 1.0),
                        &mut UniformLaw::in_box(rng_for(seed, Stream::Schedule), &bx),
                        &mut BallNoise::new(rng_for(seed, Stream::Noise), 2, 0.1),
                        &Vector::from_vec(vec![2.0, -2.0]),
                        0.1,
                    )
                }
                _ => {
                    let (plant, t, kind, psi0) = if idx == 2 {
                        (example2_plant(), 17, ReferenceKind::Sinusoid { amplitude: 1.0, period: 150.0 }, vec![1.0, 1.0])
                    } else {
                        (example3_plant(), 29, ReferenceKind::Circle { radius: 2.5, period: 1000.0 }, vec![3.0, -2.0, 3.0])
                    };
                    let aug = augment_system(&plant).unwrap();
                    let r = make_reference(kind, t).unwrap();
                    let dhat = delta_hat(0.1, r.max_norm());
                    let bx = SchedulingBox::symmetric(1, 1.0);
                    collect_aug(
                        &aug,
                        t,
                        &mut UniformLaw::symmetric(rng_for(seed, Stream::Input), plant.m(), 1.0),
                        &mut UniformLaw::in_box(rng_for(seed, Stream::Schedule), &bx),
                        &mut BallNoise::new(rng_for(seed, Stream::Noise), plant.n(), 0.1),
                        &r,
                        &Vector::from_vec(psi0),
                        dhat,
                    )
                }
            }
            .map_err(|e| e.to_string())?;
            if regressor_rank(&data, RANK_TOL) == want {
                hits += 1;
            }
        }
        counts.push(hits);
        ensure(hits >= 99, format!("example {idx}: rank {want} in {hits}/100 seeds"))?;
    }
    Ok(format!("full rank in {counts:?} of 100 seeds"))
}

/// Generating matrices written out independently of the library.
fn stacked_ab(idx: usize) -> (Mat, Mat) {
    match idx {
        1 => (
            Mat::from_row_slice(2, 6, &[0.2485, -1.0355, -0.0063, -0.0938, -0.0063, -0.0938, 0.8910, 0.4065, 0.0, 0.0188, 0.0, 0.0188]),
            Mat::from_row_slice(2, 3, &[0.3190, 0.3, 0.0, -1.3080, 1.4, 0.0]),
        ),
        2 => (Mat::from_row_slice(1, 2, &[0.3023, 0.5469]), Mat::from_row_slice(1, 2, &[0.9902, 0.6914])),
        _ => (Mat::from_row_slice(1, 2, &[0.5387, 0.8871]), Mat::from_row_slice(1, 4, &[0.5450, 0.2260, 0.5289, 0.2227])),
    }
}

fn c3_identification() -> Outcome {
    let mut worst: f64 = 0.0;
    for (idx, sys, t) in [(1, example1_system(), 23usize), (2, example2_plant(), 11), (3, example3_plant(), 29)] {
        let sys: LpvSystem = sys;
        let bx = SchedulingBox::symmetric(sys.l(), 1.0);
        let data = collect(
            &sys,
            t,
            &mut UniformLaw::symmetric(rng_for(7, Stream::Input), sys.m(), 1.0),
            &mut UniformLaw::in_box(rng_for(7, Stream::Schedule), &bx),
            &mut ZeroLaw(sys.n()),
            &Vector::from_element(sys.n(), 1.0),
            0.0,
        )
        .map_err(|e| e.to_string())?;
        let (a, b) = identify(&data).map_err(|e| e.to_string())?;
        let (a0, b0) = stacked_ab(idx);
        let err = (a - a0).amax().max((b - b0).amax());
        ensure(err < 1e-8, format!("example {idx}: max abs error {err:.3e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("max abs error {worst:.3e} < 1e-8"))
}

fn example1_report() -> std::result::Result<RunReport, String> {
    let cfg = bundled_config("1").map_err(|e| e.to_string())?;
    let s = cfg.synthesis.as_ref().ok_or("missing synthesis block")?;
    let t = cfg.trigger.as_ref().ok_or("missing trigger block")?;
    ensure(
        (s.sigma, s.beta, s.eps, cfg.simulation.delta, s.trace_lo, s.trace_hi) == (4.0, 0.2, 0.01, 0.1, 0.1, 10.0),
        "example 1 synthesis scalars differ from the acceptance values",
    )?;
    ensure(
        (t.mu, t.eps, t.beta, t.v, cfg.simulation.horizon) == (40.0, 0.001, Some(0.1), 0.01, 200),
        "example 1 trigger scalars differ from the acceptance values",
    )?;
    ensure(cfg.simulation.x0 == vec![2.0, -2.0] && cfg.simulation.decay_horizon == 500, "example 1 decay setup differs")?;
    ensure(cfg.simulation.trials == 100, "example 1 trial count differs")?;
    cmd_reproduce("1", &RunOptions::default()).map_err(|e| e.to_string())
}

fn c4_stabilization(rep: &std::result::Result<RunReport, String>) -> Outcome {
    let rep = rep.as_ref().map_err(Clone::clone)?;
    require_checks(rep, &["stabilization-feasible", "plug-in-residuals", "vertex-spectral-radius", "nominal-decay"])?;
    Ok("feasible, plug-in re-check, vertex radii and decay pass".into())
}

fn c5_lyapunov(rep: &std::result::Result<RunReport, String>) -> Outcome {
    let rep = rep.as_ref().map_err(Clone::clone)?;
    require_checks(rep, &["lyapunov-decrease"])?;
    Ok("decrease holds on 100 trajectories".into())
}

fn c6_trigger(rep: &std::result::Result<RunReport, String>) -> Outcome {
    let rep = rep.as_ref().map_err(Clone::clone)?;
    require_checks(
        rep,
        &[
            "printed-psi-positive-definite",
            "trigger-feasible",
            "psi-positive-definite",
            "mean-inter-event-interval",
            "detector-soundness",
            "practical-decrease",
        ],
    )?;
    Ok("trigger feasible, event-triggered run checks pass".into())
}

fn c7_tracking() -> Outcome {
    let mut summary = vec![];
    for id in ["2a", "2b", "3a", "3b"] {
        let cfg = bundled_config(id).map_err(|e| e.to_string())?;
        ensure(cfg.expect.rms_ceiling.is_some(), format!("{id}: no frozen RMS ceiling"))?;
        let rep = cmd_reproduce(id, &RunOptions::default()).map_err(|e| e.to_string())?;
        require_checks(
            &rep,
            &["stabilization-feasible", "trigger-feasible", "augmentation-consistency", "final-rms-ceiling", "reference-invariant"],
        )?;
        let tr = rep.tracking.as_ref().ok_or("missing tracking metrics")?;
        summary.push(format!("{id} rms {:.3}", tr.final_rms));
    }
    // Circle samples against the radius directly.
    let r = make_reference(ReferenceKind::Circle { radius: 2.5, period: 1000.0 }, 3000).map_err(|e| e.to_string())?;
    let dev = r.samples.iter().map(|v| (v[0] * v[0] + v[1] * v[1] - 6.25).abs()).fold(0.0, f64::max);
    ensure(dev <= 1e-12, format!("circle deviation {dev:.3e}"))?;
    Ok(format!("{}; circle deviation {dev:.1e}", summary.join(", ")))
}

fn c8_fq_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let l = 1 + trial % 3;
        let (t, n) = (rng.random_range(2..8), rng.random_range(1..4));
        let blocks: Vec<Mat> =
            (0..num_f_blocks(l)).map(|_| Mat::from_fn(t, n, |_, _| rng.random_range(-1.0..1.0))).collect();
        let p = Vector::from_fn(l, |_, _| rng.random_range(-1.0..1.0));
        let f = ScriptF::new(blocks.clone(), l).map_err(|e| e.to_string())?;
        // F_0 + sum p_i F_i + sum p_i p_j F_ij from the raw blocks.
        let mut direct = blocks[0].clone();
        for i in 0..l {
            direct += &blocks[1 + i] * p[i];
            for j in 0..l {
                direct += &blocks[1 + l + i * l + j] * (p[i] * p[j]);
            }
        }
        let via_fq = build_fq(&f).reconstruct(&p);
        let via_eval = eval_f(&f, &p).map_err(|e| e.to_string())?;
        worst = worst.max((&via_fq - &direct).amax()).max((&via_eval - &direct).amax());
    }
    ensure(worst < 1e-10, format!("max error {worst:.3e}"))?;
    Ok(format!("max error {worst:.3e} < 1e-10"))
}

fn c9_determinism() -> Outcome {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let mut bytes = vec![];
    for d in &dirs {
        let opts = RunOptions { out_dir: Some(d.path().to_path_buf()), seed: Some(1), ..Default::default() };
        let rep = cmd_reproduce("2a", &opts).map_err(|e| e.to_string())?;
        let path = rep.traces.first().ok_or("no trace emitted")?;
        bytes.push(std::fs::read(path).map_err(|e| e.to_string())?);
    }
    ensure(!bytes[0].is_empty() && bytes[0] == bytes[1], "CSV traces differ between runs")?;
    Ok(format!("{} identical bytes", bytes[0].len()))
}

fn run(label: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let secs = t0.elapsed().as_secs_f64();
    match out {
        Ok(d) => {
            println!("PASS {label}: {d} ({secs:.1}s)");
            true
        }
        Err(d) => {
            println!("FAIL {label}: {d} ({secs:.1}s)");
            false
        }
    }
}

fn main() {
    let ex1 = example1_report();
    let results = [
        run("1 data-length formula", c1_data_length),
        run("2 excitation rank", c2_pe_rank),
        run("3 identification oracle", c3_identification),
        run("4 stabilization feasibility (example 1)", || c4_stabilization(&ex1)),
        run("5 Lyapunov decrease", || c5_lyapunov(&ex1)),
        run("6 trigger feasibility (example 1)", || c6_trigger(&ex1)),
        run("7 tracking pipelines", c7_tracking),
        run("8 F_Q reconstruction identity", c8_fq_identity),
        run("9 determinism", c9_determinism),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
