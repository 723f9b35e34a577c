use mrp_core::distributions::{histogram_from_samples, BucketScheme, PriceVector};
use mrp_core::market_models::{simulate_paths, ImpliedVolSurface, ModelSpec, SlvParams, TimeGrid};
use mrp_core::risk_engine::decompose_full;
use mrp_core::scenario::{cross_check, cross_check_prices, ScenarioConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

fn skewed() -> ImpliedVolSurface {
    ImpliedVolSurface::new(
        vec![0.25, 0.5, 1.0, 2.0],
        vec![0.245, 0.2395, 0.235, 0.232],
        -0.25,
        0.1,
        0.05,
        1.5,
    )
    .unwrap()
}

fn phi() -> StdNormal {
    StdNormal::new(0.0, 1.0).unwrap()
}

/// Undiscounted Black call on the forward.
fn black_call(forward: f64, strike: f64, vol: f64, t: f64) -> f64 {
    let sd = vol * t.sqrt();
    let d1 = (forward / strike).ln() / sd + 0.5 * sd;
    forward * phi().cdf(d1) - strike * phi().cdf(d1 - sd)
}

fn terminal(model: &ModelSpec, t: f64, n: usize, seed: u64) -> Vec<f64> {
    let grid = TimeGrid::for_horizon(252, t, 0).unwrap();
    let paths = simulate_paths(model, grid, n, seed).unwrap();
    paths.paths().map(|p| p[p.len() - 1]).collect()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn implied_from_price(forward: f64, strike: f64, t: f64, price: f64) -> f64 {
    let (mut lo, mut hi) = (1e-4, 3.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if black_call(forward, strike, mid, t) > price {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn dupire_matches_price_form_oracle() {
    let s = skewed();
    let (spot, mu) = (100.0, -0.05);
    let fwd = |t: f64| spot * (mu * t).exp();
    // Price-form Dupire on undiscounted calls with drift mu, dense grid.
    let call = |k: f64, t: f64| black_call(fwd(t), k, s.implied_vol((k / fwd(t)).ln(), t), t);
    for &t in &[0.3, 0.7, 1.5] {
        for &k in &[80.0, 90.0, 100.0, 110.0, 120.0] {
            let (hk, ht) = (1e-2, 1e-5);
            let c = call(k, t);
            let c_t = (call(k, t + ht) - call(k, t - ht)) / (2.0 * ht);
            let c_k = (call(k + hk, t) - call(k - hk, t)) / (2.0 * hk);
            let c_kk = (call(k + hk, t) - 2.0 * c + call(k - hk, t)) / (hk * hk);
            let oracle = (2.0 * (c_t - mu * (c - k * c_k)) / (k * k * c_kk)).sqrt();
            let ours = s.local_vol_at(k, t, fwd(t));
            assert!(
                (ours / oracle - 1.0).abs() < 2e-3,
                "K={k} t={t}: {ours} vs {oracle}"
            );
        }
    }
}

#[test]
fn local_vol_spot_is_a_martingale_after_drift() {
    let model = ModelSpec::local_vol(100.0, 0.0, skewed());
    let st = terminal(&model, 1.0, 50_000, 21);
    let (mean, se) = mean_se(&st);
    assert!((mean - 100.0).abs() < 3.0 * se, "{mean} +/- {se}");
}

#[test]
fn slv_leverage_is_self_consistent() {
    // Mild vol of vol: calibrated SLV should reprice the surface's vanillas.
    let t = 0.5;
    let model = ModelSpec::slv(
        100.0,
        0.0,
        skewed(),
        SlvParams {
            eta: 1.0,
            kappa: 10.0,
            rho: -0.5,
        },
    );
    let st = terminal(&model, t, 100_000, 31);
    for k in [85.0, 95.0, 100.0, 105.0, 115.0] {
        let payoffs: Vec<f64> = st.iter().map(|s| (s - k).max(0.0)).collect();
        let (price, _) = mean_se(&payoffs);
        let iv = implied_from_price(100.0, k, t, price);
        let target = skewed().implied_vol((k / 100.0f64).ln(), t);
        assert!((iv / target - 1.0).abs() < 0.05, "K={k}: {iv} vs {target}");
    }
}

#[test]
fn normal_histogram_matches_cdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 200_000;
    let xs: Vec<f64> = Normal::new(0.0, 1.0)
        .unwrap()
        .sample_iter(&mut rng)
        .take(n)
        .collect();
    let scheme = BucketScheme::equal_width(-6.0, 6.0, 24).unwrap();
    let h = histogram_from_samples(&xs, &scheme).unwrap();
    for (i, p) in h.probs.iter().enumerate() {
        let (lo, hi) = scheme.bounds(i);
        let q = phi().cdf(hi) - phi().cdf(lo);
        let se = (q * (1.0 - q) / n as f64).sqrt().max(1e-6);
        assert!((p - q).abs() < 5.0 * se, "bucket {i}: {p} vs {q}");
    }
}

fn lognormal_config(booking_vol: f64, market_vol: f64) -> ScenarioConfig {
    let text = format!(
        r#"{{
          "market": {{ "spot": 100.0, "drift": 0.0, "surface": {{ "tenors": [1.0], "atm_vols": [0.2] }} }},
          "booking_model": {{ "label": "booking", "kind": "constant_vol", "vol": {booking_vol} }},
          "market_models": [ {{ "label": "market", "kind": "constant_vol", "vol": {market_vol} }} ],
          "vol_target": {{ "target_vol": 0.1 }},
          "apply_overlay": false,
          "horizon": 0.5,
          "n_paths": 100000,
          "seeds": {{ "booking": 1, "market": 2 }}
        }}"#
    );
    ScenarioConfig::from_json(&text).unwrap()
}

#[test]
fn lognormal_cell_matches_closed_form_kl() {
    let (s1, s2, t) = (0.2f64, 0.25f64, 0.5);
    let cfg = lognormal_config(s1, s2);
    let cell = cross_check(&cfg, "booking", "market", false).unwrap();
    // KL between the two lognormals equals the KL of their log-normals.
    let (v1, v2) = (s1 * s1 * t, s2 * s2 * t);
    let dm = 0.5 * (v2 - v1);
    let exact = 0.5 * (v2 / v1).ln() + (v1 + dm * dm) / (2.0 * v2) - 0.5;
    let got = cell.report.mrp_horizon;
    assert!((got / exact - 1.0).abs() < 0.1, "{got} vs {exact}");
}

#[test]
fn mean_correction_removes_a_drift_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let b: Vec<f64> = LogNormal::new(0.05, 0.1)
        .unwrap()
        .sample_iter(&mut rng)
        .take(100_000)
        .collect();
    let m: Vec<f64> = LogNormal::new(0.0, 0.1)
        .unwrap()
        .sample_iter(&mut rng)
        .take(100_000)
        .collect();
    let l = decompose_full(&b, &m, 20, 0.5, Some(0.5)).unwrap().ladder;
    assert!(l.mrp_raw > 0.1);
    assert!(l.mrp_mean_corrected < 0.5 * l.mrp_raw, "{l:?}");
}

#[test]
fn price_route_agrees_with_sample_route() {
    let cfg = lognormal_config(0.2, 0.25);
    let cell = cross_check(&cfg, "booking", "market", false).unwrap();
    let d = &cell.decomposition;
    let df = (-0.01f64 * cfg.horizon).exp();
    let pv = PriceVector {
        edges: d.scheme.edges().to_vec(),
        prices: d.market.probs.iter().map(|p| p * df).collect(),
        df,
        cf: 1.0,
    };
    let check = cross_check_prices(&cfg, "booking", &pv).unwrap();
    assert!((check.report.mrp_horizon - cell.report.mrp_horizon).abs() < 1e-3);
    assert!((check.rates.rfr - 0.01).abs() < 1e-12);
}

#[test]
fn outputs_are_written() {
    let mut cfg = lognormal_config(0.2, 0.25);
    cfg.n_paths = 2000;
    let outcome = mrp_core::scenario::run_scenario(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    outcome.write(dir.path()).unwrap();
    for name in [
        "report.json",
        "payoff_market_raw.csv",
        "payoff_market_mean.csv",
        "payoff_market_meanvar.csv",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["cells"][0]["market_label"], "market");
}
