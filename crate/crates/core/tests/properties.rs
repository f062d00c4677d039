use proptest::prelude::*;
use rand::Rng;

use tailkrig::design::{lhs, Domain};
use tailkrig::evt::{empirical_cvar, pot_cvar, pot_cvar_value, pot_var, FitConfig, GpdFit};
use tailkrig::harness::{estimate_site, MethodId};
use tailkrig::kriging::{log_likelihood, log_likelihood_at, DesignSite, KrigingModel, ModelParts};
use tailkrig::models::{benchmark_mean, noise_cvar, sample_noise, true_cvar_benchmark, NoiseScenario, Point2D};
use tailkrig::rng::RngStream;

fn scenario() -> impl Strategy<Value = NoiseScenario> {
    prop::sample::select(NoiseScenario::ALL.to_vec())
}

fn point() -> impl Strategy<Value = Point2D> {
    (-3.1f64..3.1, -3.1f64..3.1).prop_map(|(a, b)| Point2D::new(a, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cvar_at_least_var(xi in -0.45f64..0.95, beta in 0.1f64..10.0, u in -5.0f64..5.0, alpha in 0.9f64..0.9999) {
        let fit = GpdFit::exact(u, 10_000, 1000, xi, beta);
        prop_assert!(pot_cvar_value(&fit, alpha).unwrap() >= pot_var(&fit, alpha).unwrap());
    }

    #[test]
    fn truth_is_translated_noise(s in scenario(), p in point(), alpha in 0.9f64..0.999) {
        let total = true_cvar_benchmark(s, p, alpha).unwrap();
        let parts = benchmark_mean(p) + noise_cvar(s, p, alpha).unwrap();
        prop_assert!((total - parts).abs() <= 1e-12 * (1.0 + total.abs()));
    }

    #[test]
    fn same_stream_same_sample(s in scenario(), p in point(), seed in any::<u64>(), stream in any::<u64>()) {
        let a = sample_noise(s, p, 50, &RngStream::new(seed, stream)).unwrap();
        let b = sample_noise(s, p, 50, &RngStream::new(seed, stream)).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn same_stream_same_design(count in 2usize..40, seed in any::<u64>()) {
        let d = Domain::benchmark();
        prop_assert_eq!(lhs(&d, count, &RngStream::new(seed, 1)).unwrap(), lhs(&d, count, &RngStream::new(seed, 1)).unwrap());
    }

    #[test]
    fn shrinkage_toward_trend(
        y in prop::collection::vec(-5.0f64..5.0, 2),
        v in 0.01f64..2.0,
        tau2 in 0.1f64..5.0,
        theta in 0.1f64..3.0,
        factor in 1.5f64..10.0,
    ) {
        prop_assume!((y[0] - y[1]).abs() > 1e-3);
        let sites = |scale: f64| vec![
            DesignSite { location: vec![0.0], response: y[0], intrinsic_variance: v * scale },
            DesignSite { location: vec![1.0], response: y[1], intrinsic_variance: 0.5 * v * scale },
        ];
        // the neighbour sits on the trend; an opposite-signed neighbour residual can
        // legitimately push the prediction past the trend
        let beta0 = y[1];
        let predict = |scale: f64| {
            KrigingModel::from_parts(ModelParts { beta0, tau2, theta: vec![theta], nugget: 0.0, sites: sites(scale) })
                .unwrap()
                .predict_mean(&[0.0])
                .unwrap()
        };
        let (near, far) = (predict(1.0), predict(factor));
        let (dy, dn, df) = (y[0] - beta0, near - beta0, far - beta0);
        prop_assert!(dn * dy > 0.0 && dn.abs() < dy.abs());
        prop_assert!(df * dy > 0.0 && df.abs() < dn.abs());
    }

    #[test]
    fn profiled_trend_is_optimal(seed in any::<u64>(), k in 3usize..12, tau2 in 0.2f64..4.0, theta in 0.2f64..3.0) {
        let mut rng = RngStream::new(seed, 0).rng();
        let sites: Vec<DesignSite> = (0..k)
            .map(|i| DesignSite {
                location: vec![i as f64 * 0.7],
                response: rng.random_range(-3.0..3.0),
                intrinsic_variance: rng.random_range(0.0..0.5),
            })
            .collect();
        let (ll, beta0) = log_likelihood(&sites, tau2, &[theta], 0.0).unwrap();
        for d in [-1e-3, 1e-3] {
            prop_assert!(log_likelihood_at(&sites, beta0 + d, tau2, &[theta], 0.0).unwrap() <= ll);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn single_replication_identity(s in scenario(), p in point(), seed in any::<u64>(), alpha in prop::sample::select(vec![0.95, 0.99])) {
        let sample = sample_noise(s, p, 1500, &RngStream::new(seed, 3)).unwrap();
        prop_assume!(sample.values().iter().any(|v| *v != sample.values()[0]));
        let cfg = FitConfig::default();
        let emp = empirical_cvar(&sample, alpha).unwrap();
        let site = estimate_site(MethodId::EmpEmp, std::slice::from_ref(&sample), alpha, &cfg).unwrap();
        prop_assert_eq!((site.response, site.variance), (emp.value, emp.variance));
        if let Ok(pot) = tailkrig::evt::fit_gpd(&sample, &cfg).and_then(|f| pot_cvar(&f, alpha)) {
            let site = estimate_site(MethodId::PotEvt, &[sample], alpha, &cfg).unwrap();
            prop_assert_eq!((site.response, site.variance), (pot.value, pot.variance));
        }
    }
}
