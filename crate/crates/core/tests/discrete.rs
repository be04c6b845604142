mod common;

use common::{arm_means, brute_force, discrete_instance, key};
use proxyport::transport::{estimate_cate, fit_variant};
use proxyport::{estimate, ModelSpec, ProxyConfig, Variant};

#[test]
fn saturated_estimators_match_cell_enumeration() {
    let spec = ModelSpec::saturated(64);
    for seed in 0..100 {
        let data = discrete_instance(seed);
        let cfg = ProxyConfig::default_for(&data).unwrap();
        for variant in Variant::ALL {
            let est = estimate(&data, &cfg, &spec, variant).unwrap();
            let (overall, per_study) = brute_force(&data, &cfg, variant);
            assert!((est.overall - overall).abs() <= 1e-10, "seed {seed} {variant}");
            for (e, b) in est.studies.iter().zip(&per_study) {
                assert!((e.ate - b).abs() <= 1e-10, "seed {seed} {variant} study {}", e.label);
            }
        }
    }
}

#[test]
fn empty_proxy_subset_reduces_to_blind() {
    for seed in 0..20 {
        let data = discrete_instance(seed);
        let mut cfg = ProxyConfig::default_for(&data).unwrap();
        for s in cfg.s_star..data.n_studies() {
            cfg.proxy_subsets[s].clear();
        }
        let spec = ModelSpec::saturated(64);
        let aware = estimate(&data, &cfg, &spec, Variant::ProxyAware).unwrap();
        let blind = estimate(&data, &cfg, &spec, Variant::Blind).unwrap();
        assert_eq!(aware.overall.to_bits(), blind.overall.to_bits(), "seed {seed}");
        assert_eq!(aware.studies, blind.studies, "seed {seed}");

        // Least squares refits a linear function of W on W: equal up to rounding.
        let spec = ModelSpec::default();
        let aware = estimate(&data, &cfg, &spec, Variant::ProxyAware).unwrap();
        let blind = estimate(&data, &cfg, &spec, Variant::Blind).unwrap();
        assert!((aware.overall - blind.overall).abs() <= 1e-8, "seed {seed}");
    }
}

#[test]
fn least_squares_matches_oracle_when_model_is_saturated() {
    // One binary covariate and one binary proxy with their interaction span
    // every cell, so least squares reproduces the cell means.
    let spec = ModelSpec { interaction_order: 2, ..ModelSpec::default() };
    for seed in 200..230 {
        let data = discrete_instance(seed);
        let mut cfg = ProxyConfig::default_for(&data).unwrap();
        for s in cfg.s_star..data.n_studies() {
            cfg.proxy_subsets[s] = vec![0];
        }
        if (0..data.n_rows()).any(|i| data.covariates(i)[0] > 1.0) {
            continue;
        }
        let est = estimate(&data, &cfg, &spec, Variant::ProxyAware).unwrap();
        let (overall, _) = brute_force(&data, &cfg, Variant::ProxyAware);
        assert!((est.overall - overall).abs() <= 1e-9, "seed {seed}");
    }
}

#[test]
fn cate_matches_oracle_cells() {
    let spec = ModelSpec::saturated(64);
    for seed in 0..30 {
        let data = discrete_instance(seed);
        let cfg = ProxyConfig::default_for(&data).unwrap();
        for variant in Variant::ALL {
            let model = fit_variant(&data, &cfg, &spec, variant).unwrap();
            for s in 0..data.n_studies() {
                let [m0, m1] = arm_means(&data, &cfg, variant, s);
                for w in [0.0, 1.0] {
                    let expected = m1[&key(&[w])] - m0[&key(&[w])];
                    let got = estimate_cate(&model, &[w], s).unwrap();
                    assert!((got - expected).abs() <= 1e-10, "seed {seed} {variant} study {s} w {w}");
                }
            }
        }
    }
}
