use etlpv::cli::{bundled_config, emit_config, parse_config};
use etlpv::data::{collect, min_data_length, regressor_rank, RANK_TOL};
use etlpv::laws::{rng_for, BallNoise, Stream, UniformLaw};
use etlpv::linalg::{Mat, Vector};
use etlpv::lpv::{AffineMatrixFunction, LpvSystem, SchedulingBox};
use etlpv::tracking::{delta_hat, make_reference, ReferenceKind};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn min_length_expanded_form(n in 1usize..6, m in 1usize..4, l in 0usize..4) {
        let t = min_data_length(n, m, l);
        prop_assert_eq!(t, n * (1 + l) + n * m * (1 + l) * (1 + l) - 1);
        // Enough columns for full row rank once the plant is scheduled.
        if l > 0 {
            prop_assert!(t >= (1 + l) * (n + m));
        }
    }

    #[test]
    fn delta_hat_bounds_the_stacked_perturbation(d in 0.0f64..3.0, r in 0.0f64..5.0) {
        let h = delta_hat(d, r);
        let exact = (d * d + r * r).sqrt();
        prop_assert!(h >= exact - 1e-10);
        prop_assert!(h <= exact + 0.01 + 1e-12);
        prop_assert!(((h * 100.0).round() - h * 100.0).abs() < 1e-9);
    }

    #[test]
    fn circle_and_figure8_stay_on_their_curves(radius in 0.1f64..10.0, period in 2.0f64..2000.0) {
        let c = make_reference(ReferenceKind::Circle { radius, period }, 500).unwrap();
        for v in &c.samples {
            prop_assert!((v[0] * v[0] + v[1] * v[1] - radius * radius).abs() <= 1e-12 * (1.0 + radius * radius));
        }
        let f = make_reference(ReferenceKind::Figure8 { radius, period }, 500).unwrap();
        for v in &f.samples {
            prop_assert!(v[0].abs() <= radius);
            let rhs = 4.0 * v[0] * v[0] * (1.0 - (v[0] / radius).powi(2));
            prop_assert!((v[1] * v[1] - rhs).abs() <= 1e-12 * (1.0 + radius * radius));
        }
    }

    #[test]
    fn config_emit_parse_round_trip(seed in any::<u64>(), delta in 0.001f64..1.0, horizon in 1usize..5000) {
        let mut cfg = bundled_config("2a").unwrap();
        cfg.simulation.seed = seed;
        cfg.simulation.delta = delta;
        cfg.simulation.horizon = horizon;
        let back = parse_config(&emit_config(&cfg), "mem").unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn random_plants_reach_full_regressor_rank(seed in 0u64..1000, n in 1usize..3, m in 1usize..3, l in 1usize..3) {
        let mut rng = rng_for(seed, Stream::Initial);
        let mut draw = |r: usize, c: usize| {
            use rand::Rng;
            Mat::from_fn(r, c, |_, _| rng.random_range(-0.4..0.4))
        };
        let a = AffineMatrixFunction::new(draw(n, n), (0..l).map(|_| draw(n, n)).collect()).unwrap();
        let b = AffineMatrixFunction::new(draw(n, m), (0..l).map(|_| draw(n, m)).collect()).unwrap();
        let sys = LpvSystem::state_output(a, b).unwrap();
        let bx = SchedulingBox::symmetric(l, 1.0);
        let data = collect(
            &sys,
            min_data_length(n, m, l),
            &mut UniformLaw::symmetric(rng_for(seed, Stream::Input), m, 1.0),
            &mut UniformLaw::in_box(rng_for(seed, Stream::Schedule), &bx),
            &mut BallNoise::new(rng_for(seed, Stream::Noise), n, 0.01),
            &Vector::from_element(n, 0.5),
            0.01,
        )
        .unwrap();
        prop_assert_eq!(regressor_rank(&data, RANK_TOL), data.full_rank());
    }
}
