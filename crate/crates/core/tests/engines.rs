use homsim::fitdata::{
    fit_cached, fit_gaussian_dip, CachedRate, CoincidenceDataset, ModelFitOptions,
};
use homsim::hom::{
    compute_curve, delay_grid, dip_metrics, rate_asymmetric, DipCurve, Engine, HomSettings,
    RateModel, SpectralEngine,
};
use homsim::jsa::{jsa_grid, q_amplitude};
use homsim::quadrature::QuadratureSettings;
use homsim::units::{build_config, ExperimentConfig, FilterProfile, FilterSpec, LabConfig};
use proptest::prelude::*;

fn reference() -> ExperimentConfig {
    build_config(&LabConfig::reference()).unwrap()
}

fn with_filter(profile: FilterProfile) -> ExperimentConfig {
    reference()
        .with_filter(FilterSpec::symmetric(profile))
        .unwrap()
}

#[test]
fn mismatch_visibility_matches_grid_sum() {
    let cfg = reference()
        .with_filter(FilterSpec {
            signal: FilterProfile::Gaussian { fwhm_nm: 0.8 },
            idler: Some(FilterProfile::Gaussian { fwhm_nm: 0.88 }),
        })
        .unwrap();
    let settings = QuadratureSettings::default();
    let engine_rate =
        rate_asymmetric(0.0, &cfg, cfg.signal_filter, cfg.idler_filter, &settings).unwrap();

    // midpoint sums of |F|² and F(s,i)F*(i,s) on a 200 × 200 grid
    let half = 6.0 * cfg.max_width();
    let n = 200;
    let h = 2.0 * half / n as f64;
    let (mut direct, mut cross) = (0.0, 0.0);
    for a in 0..n {
        let s = -half + (a as f64 + 0.5) * h;
        for b in 0..n {
            let i = -half + (b as f64 + 0.5) * h;
            let q = q_amplitude(s, i, &cfg, &settings).unwrap();
            let f = q * cfg.signal_filter.amplitude(s) * cfg.idler_filter.amplitude(i);
            let g = q * cfg.signal_filter.amplitude(i) * cfg.idler_filter.amplitude(s);
            direct += f.norm_sqr();
            cross += (f * g.conj()).re;
        }
    }
    let grid_rate = 1.0 - cross / direct;
    assert!(engine_rate > 0.0);
    assert!(
        (engine_rate - grid_rate).abs() < 1e-6,
        "{engine_rate} vs {grid_rate}"
    );
}

#[test]
fn super_gaussian_dip_is_wider() {
    let delays = delay_grid(-15.0, 15.0, 0.1).unwrap();
    let s = HomSettings::default();
    let g = compute_curve(Engine::GaussianClosed, &reference(), &s, &delays).unwrap();
    let sg = compute_curve(
        Engine::SuperGaussian,
        &with_filter(FilterProfile::SuperGaussian4 { fwhm_nm: 0.8 }),
        &s,
        &delays,
    )
    .unwrap();
    let wg = dip_metrics(&g).unwrap().fwhm_ps;
    let wsg = dip_metrics(&sg).unwrap().fwhm_ps;
    assert!(wsg > wg, "{wsg} <= {wg}");
}

#[test]
fn super_gaussian_engine_matches_general_engine() {
    let cfg = with_filter(FilterProfile::SuperGaussian4 { fwhm_nm: 0.8 });
    let delays: Vec<f64> = (0..=10).map(|k| -10.0 + 2.0 * k as f64).collect();
    let s = HomSettings::default();
    let a = compute_curve(Engine::SuperGaussian, &cfg, &s, &delays).unwrap();
    let b = compute_curve(Engine::GeneralSpectral, &cfg, &s, &delays).unwrap();
    for (x, y) in a.rates.iter().zip(&b.rates) {
        assert!((x - y).abs() < 1e-5, "{x} vs {y}");
    }
}

#[test]
fn engine_fits_separate_widths() {
    let w = 7.2 / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let delays: Vec<f64> = (0..=120).map(|k| -15.0 + 0.25 * k as f64).collect();
    let counts = delays
        .iter()
        .map(|t| 900.0 * (1.0 - 0.943 * (-t * t / (2.0 * w * w)).exp()))
        .collect();
    let data = CoincidenceDataset::new(delays, counts, None).unwrap();
    let opts = ModelFitOptions::default();
    let gauss =
        CachedRate::new(Engine::GaussianClosed, &reference(), &opts.hom, 25.0, 0.05).unwrap();
    let sg_cfg = with_filter(FilterProfile::SuperGaussian4 { fwhm_nm: 0.8 });
    let sg = CachedRate::new(Engine::SuperGaussian, &sg_cfg, &opts.hom, 25.0, 0.05).unwrap();
    let fg = fit_cached(&data, &gauss, Engine::GaussianClosed, &opts).unwrap();
    let fs = fit_cached(&data, &sg, Engine::SuperGaussian, &opts).unwrap();
    let wg = fg.fwhm_ps().unwrap();
    let ws = fs.fwhm_ps().unwrap();
    assert!((wg - 6.4).abs() < 0.3, "{wg}");
    assert!((ws - 8.0).abs() < 0.4, "{ws}");
}

#[test]
fn cascade_fit_lies_between_engine_widths() {
    let delays = delay_grid(-15.0, 15.0, 0.25).unwrap();
    let s = HomSettings::default();
    let width = |engine, cfg: &ExperimentConfig| {
        dip_metrics(&compute_curve(engine, cfg, &s, &delays).unwrap())
            .unwrap()
            .fwhm_ps
    };
    let wg = width(Engine::GaussianClosed, &reference());
    let ws = width(
        Engine::SuperGaussian,
        &with_filter(FilterProfile::SuperGaussian4 { fwhm_nm: 0.8 }),
    );
    let cascade = with_filter(FilterProfile::Cascade {
        gaussian_fwhm_nm: 1.2,
        super_gaussian_fwhm_nm: 0.9,
    });
    let curve = compute_curve(Engine::GeneralSpectral, &cascade, &s, &delays).unwrap();
    let counts = curve.rates.iter().map(|r| 500.0 * r).collect();
    let data = CoincidenceDataset::new(curve.delays_ps.clone(), counts, None).unwrap();
    let fit = fit_gaussian_dip(&data).unwrap();
    let wc = fit.param("fwhm_ps").unwrap();
    assert!(wg < wc && wc < ws, "{wg} < {wc} < {ws}");
}

#[test]
fn perfect_symmetry_gives_full_visibility() {
    let delays = delay_grid(-15.0, 15.0, 0.5).unwrap();
    let s = HomSettings::default();
    for (engine, cfg) in [
        (Engine::GeneralSpectral, reference()),
        (Engine::GaussianClosed, reference()),
        (
            Engine::GeneralSpectral,
            with_filter(FilterProfile::Cascade {
                gaussian_fwhm_nm: 1.0,
                super_gaussian_fwhm_nm: 0.8,
            }),
        ),
    ] {
        let c = compute_curve(engine, &cfg, &s, &delays).unwrap();
        let m = dip_metrics(&c).unwrap();
        let min = c.rates.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min <= 1e-6 * m.baseline, "{engine}: {min}");
    }
}

#[test]
fn jsa_grid_is_symmetric() {
    let cfg = reference();
    let g = jsa_grid(&cfg, 21, 3.0, &QuadratureSettings::default()).unwrap();
    for s in 0..21 {
        for i in 0..21 {
            assert!((g.get(s, i) - g.get(i, s)).norm() < 1e-12);
        }
    }
}

#[test]
fn curve_parallel_sampling_is_deterministic() {
    let cfg = reference();
    let engine = SpectralEngine::symmetric(&cfg, &QuadratureSettings::default()).unwrap();
    let delays = delay_grid(-6.0, 6.0, 1.0).unwrap();
    let a: Vec<f64> = delays.iter().map(|&d| engine.rate(d).unwrap()).collect();
    let b = homsim::hom::sample_curve(&engine, &delays).unwrap();
    assert_eq!(a, b.rates);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rates_are_even_and_bounded(
        length in 50.0f64..800.0,
        beta2 in -0.4f64..0.4,
        fwhm in 0.4f64..1.4,
        delay in 0.0f64..12.0,
    ) {
        let mut lab = LabConfig::reference();
        lab.length_m = length;
        lab.beta2_ps2_per_km = beta2;
        lab.filter = FilterSpec::symmetric(FilterProfile::Gaussian { fwhm_nm: fwhm });
        let cfg = build_config(&lab).unwrap();
        let s = HomSettings::default();
        let c = compute_curve(Engine::GaussianClosed, &cfg, &s, &[-delay - 1e-9, delay]).unwrap();
        prop_assert!((c.rates[0] - c.rates[1]).abs() < 1e-6);
        prop_assert!(c.rates.iter().all(|&r| (0.0..=1.0 + 1e-6).contains(&r)));
    }
}

#[test]
fn dip_curve_rejects_unsorted_delays() {
    assert!(DipCurve::new(vec![1.0, 0.0], vec![1.0, 1.0], Engine::GaussianClosed).is_err());
}
