use metastable::kramers::{ek_constant, EkPrediction};
use metastable::landscape::LandscapeSpec;
use metastable::saddlecheck::{reduced_det_check, test_function};
use metastable::simulate::{equilibrium_potential, run_ensemble, Ball, SimConfig};
use metastable::spectral::random::{check, saddle_instance, Lemma};
use metastable::{CriticalPoint, SaddleSpectrum, SkewGenerator};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn doublewell2d(skew: SkewGenerator) -> LandscapeSpec {
    LandscapeSpec::builtin("doublewell2d", skew).unwrap()
}

fn level_dependent(c0: f64, c1: f64, c2: f64) -> SkewGenerator {
    SkewGenerator::ScalarPoly { base: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]), coeffs: vec![c0, c1, c2] }
}

fn prediction(omega0: f64, nu0: f64, exponent: f64) -> EkPrediction {
    EkPrediction {
        level: exponent,
        h0: 0.0,
        exponent,
        saddles: Vec::new(),
        omega0,
        omega0_rev: omega0,
        nu0,
        speedup: 1.0,
        times: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ell_is_orthogonal_to_the_gradient(
        x in -2.0f64..2.0, y in -2.0f64..2.0,
        c0 in -3.0f64..3.0, c1 in -2.0f64..2.0, c2 in -1.0f64..1.0,
    ) {
        let spec = doublewell2d(level_dependent(c0, c1, c2));
        let p = [x, y];
        let g = spec.gradient(&p);
        let l = spec.ell(&p).unwrap();
        let dot = g[0] * l[0] + g[1] * l[1];
        let scale = (g[0] * g[0] + g[1] * g[1]) * (l[0].abs() + l[1].abs() + 1.0);
        prop_assert!(dot.abs() <= 1e-12 * scale, "dot {dot}");
        let j = spec.skew().matrix(spec.value(&p));
        prop_assert!((&j + j.transpose()).amax() == 0.0);
    }

    #[test]
    fn matrix_lemmas_hold_on_random_instances(seed in any::<u64>(), d in 2usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for lemma in Lemma::ALL {
            let r = check(lemma, d, &mut rng);
            prop_assert!(r.is_ok(), "{lemma} d={d}: {:?}", r);
        }
    }

    #[test]
    fn reduced_determinant_identity(seed in any::<u64>(), d in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, l) = saddle_instance(d, &mut rng);
        let sp = SaddleSpectrum::new(&h, &l, None).unwrap();
        prop_assert!(reduced_det_check(&sp) <= 1e-10);
    }

    #[test]
    fn skew_drift_only_speeds_up_the_gate(a in 0.05f64..4.0) {
        let saddle_at = |spec: &LandscapeSpec| CriticalPoint::at(spec, vec![0.0, 0.0]).unwrap();
        let spec = doublewell2d(SkewGenerator::planar(a));
        let c = ek_constant(&saddle_at(&spec), &spec, Some(&[-1.0, 0.0])).unwrap();
        prop_assert!(c.omega >= c.omega_rev);
        let doubled = doublewell2d(SkewGenerator::planar(2.0 * a));
        let c2 = ek_constant(&saddle_at(&doubled), &doubled, Some(&[-1.0, 0.0])).unwrap();
        prop_assert!(c2.omega > c.omega);
    }

    #[test]
    fn mean_time_is_monotone_in_its_inputs(
        omega0 in 0.01f64..10.0, nu0 in 0.01f64..10.0, exponent in 0.01f64..2.0,
        factor in 1.01f64..3.0, eps in 0.05f64..1.0,
    ) {
        let base = prediction(omega0, nu0, exponent).mean_time(eps);
        prop_assert!(prediction(omega0 * factor, nu0, exponent).mean_time(eps) < base);
        prop_assert!(prediction(omega0, nu0 * factor, exponent).mean_time(eps) > base);
        prop_assert!(prediction(omega0, nu0, exponent * factor).mean_time(eps) > base);
    }

    #[test]
    fn test_function_is_a_probability(x in -1.0f64..1.0, y in -1.0f64..1.0, a in -2.0f64..2.0, eps in 1e-5f64..0.5) {
        let spec = doublewell2d(SkewGenerator::planar(a));
        let s = CriticalPoint::at(&spec, vec![0.0, 0.0]).unwrap();
        let c = ek_constant(&s, &spec, Some(&[-1.0, 0.0])).unwrap();
        let p = test_function(&[x, y], &[0.0, 0.0], &c.spectrum, eps);
        prop_assert!((0.0..=1.0).contains(&p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ensembles_are_deterministic(seed in any::<u64>()) {
        let spec = doublewell2d(SkewGenerator::planar(1.0));
        let mut cfg = SimConfig::new(0.5, 1e-3, 16, seed);
        cfg.t_max = 200.0;
        cfg.guard_radius = Some(10.0);
        let targets = [Ball::new(vec![1.0, 0.0], 0.3)];
        let a = run_ensemble(&[-1.0, 0.0], &targets, &spec, &cfg).unwrap();
        let b = run_ensemble(&[-1.0, 0.0], &targets, &spec, &cfg).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn adjoint_flag_is_inert_without_skew(seed in any::<u64>()) {
        let spec = doublewell2d(SkewGenerator::Zero { dim: 2 });
        let mut cfg = SimConfig::new(0.5, 1e-3, 16, seed);
        cfg.t_max = 200.0;
        cfg.guard_radius = Some(10.0);
        let targets = [Ball::new(vec![1.0, 0.0], 0.3)];
        let forward = run_ensemble(&[-1.0, 0.0], &targets, &spec, &cfg).unwrap();
        cfg.adjoint = true;
        let adjoint = run_ensemble(&[-1.0, 0.0], &targets, &spec, &cfg).unwrap();
        prop_assert_eq!(forward.trajectories, adjoint.trajectories);
    }

    #[test]
    fn equilibrium_estimates_are_complementary(seed in any::<u64>(), x in -0.5f64..0.5) {
        let spec = doublewell2d(SkewGenerator::planar(1.0));
        let mut cfg = SimConfig::new(0.3, 1e-3, 64, seed);
        cfg.t_max = 500.0;
        cfg.guard_radius = Some(10.0);
        let a = [Ball::new(vec![-1.0, 0.0], 0.3)];
        let b = [Ball::new(vec![1.0, 0.0], 0.3)];
        let est = equilibrium_potential(&[x, 0.0], &a, &b, &spec, &cfg).unwrap();
        if est.n_censored == 0 {
            prop_assert_eq!(est.p_a + est.p_b, 1.0);
        }
        prop_assert!(est.ci95.0 <= est.p_a && est.p_a <= est.ci95.1);
    }
}

#[test]
fn reversible_constants_agree_bit_for_bit() {
    let spec = doublewell2d(SkewGenerator::Zero { dim: 2 });
    let s = CriticalPoint::at(&spec, vec![0.0, 0.0]).unwrap();
    let c = ek_constant(&s, &spec, Some(&[-1.0, 0.0])).unwrap();
    assert_eq!(c.omega.to_bits(), c.omega_rev.to_bits());
    assert_eq!(c.spectrum.v.as_slice(), c.spectrum.e1().as_slice());
}
