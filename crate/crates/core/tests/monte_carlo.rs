mod common;

use common::setup;
use radau_guidance::guidance::Method;
use radau_guidance::monte_carlo::{
    run_campaign, sample_alpha, summarize, MonteCarloConfig, RunStatus,
};

#[test]
fn zero_sigma_campaign_is_centered() {
    let cfg = MonteCarloConfig {
        runs: 1,
        q: 0.0,
        ..MonteCarloConfig::default()
    };
    let records = run_campaign(&cfg, &setup(5.0, 0.01)).unwrap();
    assert_eq!(records.len(), 4);
    for r in &records {
        assert_eq!(r.status, RunStatus::Ok);
        assert_eq!(r.alpha_tilde, 2.0);
        assert!(r.epsilon.unwrap().abs() < 1e-5, "{}", r.method);
    }
    for s in summarize(&records).unwrap() {
        let st = s.stats.unwrap();
        assert!(st.mean.abs() < 1e-5 && st.median.abs() < 1e-5);
    }
}

#[test]
fn draws_are_paired_across_methods() {
    let cfg = MonteCarloConfig {
        runs: 6,
        methods: vec![Method::Doc, Method::Oc],
        ..MonteCarloConfig::default()
    };
    let records = run_campaign(&cfg, &setup(5.0, 0.01)).unwrap();
    let oc: Vec<f64> = records
        .iter()
        .filter(|r| r.method == Method::Oc)
        .map(|r| r.alpha_tilde)
        .collect();
    let doc: Vec<f64> = records
        .iter()
        .filter(|r| r.method == Method::Doc)
        .map(|r| r.alpha_tilde)
        .collect();
    assert_eq!(oc, doc);
    assert_eq!(oc, sample_alpha(cfg.seed, 6, 2.0, 0.02).unwrap());
    // ordered by run, then method
    assert_eq!(records[0].method, Method::Oc);
    assert_eq!(records[1].method, Method::Doc);
}

#[test]
fn campaigns_are_reproducible_across_worker_counts() {
    let base = MonteCarloConfig {
        runs: 4,
        methods: vec![Method::Og, Method::Oc],
        ..MonteCarloConfig::default()
    };
    let a = run_campaign(&base, &setup(5.0, 0.01)).unwrap();
    let b = run_campaign(
        &MonteCarloConfig {
            workers: 3,
            ..base.clone()
        },
        &setup(5.0, 0.01),
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn spread_grows_with_uncertainty() {
    let std_at = |q: f64| {
        let cfg = MonteCarloConfig {
            runs: 100,
            q,
            beta: 5.0,
            methods: vec![Method::Doc],
            ..MonteCarloConfig::default()
        };
        let records = run_campaign(&cfg, &setup(5.0, q)).unwrap();
        summarize(&records).unwrap()[0].stats.unwrap().std
    };
    assert!(std_at(0.02) >= std_at(0.01));
}

#[test]
fn campaign_rejects_bad_config() {
    let cfg = MonteCarloConfig {
        runs: 0,
        ..MonteCarloConfig::default()
    };
    assert!(run_campaign(&cfg, &setup(5.0, 0.01)).is_err());
}
