//! Growth-optimal payoff, model-risk premium and its moment-matching
//! decomposition.
//!
//! Given an investor-believed histogram `b` and a market-implied histogram
//! `m` on the same buckets, the growth-optimal payoff is `f = b / m` and the
//! risky part of its expected log return is the relative entropy
//! `MRP = sum b ln(b / m)`.

use serde::{Deserialize, Serialize};

use crate::distributions::{
    histogram_from_samples, smoothed_histogram, union_scheme, BucketScheme, Histogram,
};
use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatesSpec {
    /// Annualized risk-free rate.
    #[serde(default)]
    pub rfr: f64,
    /// Annualized commission rate.
    #[serde(default)]
    pub cr: f64,
    /// Annualized MRP above which model risk is material.
    #[serde(default = "default_threshold")]
    pub materiality_threshold: f64,
}

fn default_threshold() -> f64 {
    0.01
}

impl Default for RatesSpec {
    fn default() -> Self {
        Self {
            rfr: 0.0,
            cr: 0.0,
            materiality_threshold: default_threshold(),
        }
    }
}

impl RatesSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.rfr.is_finite() {
            return Err(config_err("rfr must be finite"));
        }
        if !(self.cr >= 0.0 && self.cr.is_finite()) {
            return Err(config_err("cr must be >= 0"));
        }
        if !(self.materiality_threshold > 0.0 && self.materiality_threshold.is_finite()) {
            return Err(config_err("materiality_threshold must be > 0"));
        }
        Ok(())
    }
}

/// Payoff ratios per bucket. `+inf` where the market assigns no mass to a
/// bucket the investor believes in.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffCurve {
    pub scheme: BucketScheme,
    pub values: Vec<f64>,
}

/// Serialized payoff bucket; `f` is `None` when infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffPoint {
    pub lo: f64,
    pub hi: f64,
    pub f: Option<f64>,
}

impl PayoffCurve {
    pub fn points(&self) -> Vec<PayoffPoint> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let (lo, hi) = self.scheme.bounds(i);
                PayoffPoint {
                    lo,
                    hi,
                    f: f.is_finite().then_some(f),
                }
            })
            .collect()
    }
}

/// Relative entropy with the buckets that make it infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct MrpValue {
    pub nats: f64,
    pub infinite_buckets: Vec<usize>,
}

impl MrpValue {
    pub fn is_infinite(&self) -> bool {
        !self.infinite_buckets.is_empty()
    }
}

/// `sum b ln(b/m)` per horizon, in nats. `0 ln(0/m) = 0`; any bucket with
/// `b > 0 = m` makes the result `+inf`.
pub fn mrp(b: &Histogram, m: &Histogram) -> Result<f64> {
    Ok(mrp_detail(b, m)?.nats)
}

pub fn mrp_detail(b: &Histogram, m: &Histogram) -> Result<MrpValue> {
    b.same_scheme(m)?;
    let mut total = 0.0;
    let mut infinite_buckets = Vec::new();
    for (i, (&bi, &mi)) in b.probs.iter().zip(&m.probs).enumerate() {
        if bi == 0.0 {
            continue;
        }
        if mi == 0.0 {
            infinite_buckets.push(i);
        } else {
            total += bi * (bi / mi).ln();
        }
    }
    let nats = if infinite_buckets.is_empty() {
        total.max(0.0)
    } else {
        f64::INFINITY
    };
    Ok(MrpValue {
        nats,
        infinite_buckets,
    })
}

/// `f_i = b_i / m_i` with `0/0 = 1`.
pub fn optimal_payoff(b: &Histogram, m: &Histogram) -> Result<PayoffCurve> {
    b.same_scheme(m)?;
    let values = b
        .probs
        .iter()
        .zip(&m.probs)
        .map(|(&bi, &mi)| match (bi == 0.0, mi == 0.0) {
            (true, true) => 1.0,
            (false, true) => f64::INFINITY,
            _ => bi / mi,
        })
        .collect();
    Ok(PayoffCurve {
        scheme: b.scheme.clone(),
        values,
    })
}

/// Expected log growth `sum b ln g` of payoff `g` under beliefs `b`.
pub fn growth_rate(b: &Histogram, payoff: &[f64]) -> f64 {
    b.probs
        .iter()
        .zip(payoff)
        .filter(|(bi, _)| **bi > 0.0)
        .map(|(bi, g)| bi * g.ln())
        .sum()
}

/// Per-horizon nats to an annual rate (simple division).
pub fn annualize(nats: f64, horizon: f64) -> f64 {
    nats / horizon
}

/// Annualized expected return of the growth-optimal investment.
pub fn expected_return(
    b: &Histogram,
    m: &Histogram,
    rates: &RatesSpec,
    horizon: f64,
) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(config_err("horizon must be > 0"));
    }
    Ok(annualize(mrp(b, m)?, horizon) + rates.rfr - rates.cr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Material,
    Immaterial,
}

/// Material iff the annual MRP strictly exceeds both the commission rate and
/// the business threshold.
pub fn materiality(mrp_annual: f64, rates: &RatesSpec) -> Verdict {
    if mrp_annual > rates.cr.max(rates.materiality_threshold) {
        Verdict::Material
    } else {
        Verdict::Immaterial
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
fn std_dev(xs: &[f64], mu: f64) -> f64 {
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn check_nonempty(b: &[f64], m: &[f64]) -> Result<()> {
    if b.is_empty() || m.is_empty() {
        return Err(config_err("sample sets must be non-empty"));
    }
    Ok(())
}

/// Shifts the booking samples onto the market mean.
pub fn mean_correct(samples_b: &[f64], samples_m: &[f64]) -> Result<Vec<f64>> {
    check_nonempty(samples_b, samples_m)?;
    let shift = mean(samples_m) - mean(samples_b);
    Ok(samples_b.iter().map(|x| x + shift).collect())
}

/// Affine map of the booking samples onto the market mean and (population)
/// variance.
pub fn mean_var_correct(samples_b: &[f64], samples_m: &[f64]) -> Result<Vec<f64>> {
    check_nonempty(samples_b, samples_m)?;
    let (mu_b, mu_m) = (mean(samples_b), mean(samples_m));
    let sd_b = std_dev(samples_b, mu_b);
    if !(sd_b > 0.0) {
        return Err(Error::DegenerateBooking);
    }
    let scale = std_dev(samples_m, mu_m) / sd_b;
    Ok(samples_b
        .iter()
        .map(|x| mu_m + (x - mu_b) * scale)
        .collect())
}

/// Annualized MRP after each correction level.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionLadder {
    pub mrp_raw: f64,
    pub mrp_mean_corrected: f64,
    pub mrp_mean_var_corrected: f64,
    /// `f** = b** / m`.
    pub residual_payoff: PayoffCurve,
}

/// Histograms behind a ladder, all on one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub scheme: BucketScheme,
    pub market: Histogram,
    pub raw: Histogram,
    pub mean_corrected: Histogram,
    pub mean_var_corrected: Histogram,
    pub ladder: DecompositionLadder,
}

impl Decomposition {
    /// Booking histograms in ladder order: raw, mean, mean-and-variance.
    pub fn levels(&self) -> [(&'static str, &Histogram); 3] {
        [
            ("raw", &self.raw),
            ("mean", &self.mean_corrected),
            ("meanvar", &self.mean_var_corrected),
        ]
    }
}

/// MRP ladder over a scheme spanning the market, raw and corrected samples.
pub fn decompose(
    samples_b: &[f64],
    samples_m: &[f64],
    n: usize,
    horizon: f64,
) -> Result<DecompositionLadder> {
    Ok(decompose_full(samples_b, samples_m, n, horizon, None)?.ladder)
}

/// As [`decompose`], keeping the histograms. `smoothing` adds that
/// pseudo-count to every bucket of every histogram.
pub fn decompose_full(
    samples_b: &[f64],
    samples_m: &[f64],
    n: usize,
    horizon: f64,
    smoothing: Option<f64>,
) -> Result<Decomposition> {
    if !(horizon > 0.0) {
        return Err(config_err("horizon must be > 0"));
    }
    let b_star = mean_correct(samples_b, samples_m)?;
    let b_2star = mean_var_correct(samples_b, samples_m)?;
    let scheme = union_scheme(&[samples_b, &b_star, &b_2star, samples_m], n)?;
    let hist = |xs: &[f64]| match smoothing {
        Some(p) => smoothed_histogram(xs, &scheme, p),
        None => histogram_from_samples(xs, &scheme),
    };
    let market = hist(samples_m)?;
    let raw = hist(samples_b)?;
    let mean_corrected = hist(&b_star)?;
    let mean_var_corrected = hist(&b_2star)?;
    let ladder = DecompositionLadder {
        mrp_raw: annualize(mrp(&raw, &market)?, horizon),
        mrp_mean_corrected: annualize(mrp(&mean_corrected, &market)?, horizon),
        mrp_mean_var_corrected: annualize(mrp(&mean_var_corrected, &market)?, horizon),
        residual_payoff: optimal_payoff(&mean_var_corrected, &market)?,
    };
    Ok(Decomposition {
        scheme,
        market,
        raw,
        mean_corrected,
        mean_var_corrected,
        ladder,
    })
}

/// Full verdict for one booking/market pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MrpReport {
    pub mrp_horizon: f64,
    pub mrp_annual: f64,
    pub er_annual: f64,
    pub material: bool,
    pub infinite: bool,
    pub infinite_buckets: Vec<usize>,
    pub ladder: Option<DecompositionLadder>,
    pub payoff: PayoffCurve,
}

pub fn assess(b: &Histogram, m: &Histogram, rates: &RatesSpec, horizon: f64) -> Result<MrpReport> {
    if !(horizon > 0.0) {
        return Err(config_err("horizon must be > 0"));
    }
    let value = mrp_detail(b, m)?;
    let mrp_annual = annualize(value.nats, horizon);
    Ok(MrpReport {
        mrp_horizon: value.nats,
        mrp_annual,
        er_annual: mrp_annual + rates.rfr - rates.cr,
        material: materiality(mrp_annual, rates) == Verdict::Material,
        infinite: value.is_infinite(),
        infinite_buckets: value.infinite_buckets,
        ladder: None,
        payoff: optimal_payoff(b, m)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(b: [f64; 2], m: [f64; 2]) -> (Histogram, Histogram) {
        let s = BucketScheme::equal_width(0.0, 1.0, 2).unwrap();
        (
            Histogram::from_probs(s.clone(), b.to_vec()).unwrap(),
            Histogram::from_probs(s, m.to_vec()).unwrap(),
        )
    }

    #[test]
    fn identical_histograms_have_zero_mrp() {
        let (b, m) = two([0.3, 0.7], [0.3, 0.7]);
        assert_eq!(mrp(&b, &m).unwrap(), 0.0);
        assert_eq!(optimal_payoff(&b, &m).unwrap().values, vec![1.0, 1.0]);
    }

    #[test]
    fn two_bucket_mrp() {
        let (b, m) = two([0.5, 0.5], [0.25, 0.75]);
        let expect = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((mrp(&b, &m).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.143841036225890).abs() < 1e-12);
        let f = optimal_payoff(&b, &m).unwrap().values;
        assert_eq!(f[0], 2.0);
        assert!((f[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn support_mismatch_is_infinite() {
        let (b, m) = two([1.0, 0.0], [0.0, 1.0]);
        let d = mrp_detail(&b, &m).unwrap();
        assert_eq!(d.nats, f64::INFINITY);
        assert_eq!(d.infinite_buckets, vec![0]);
        assert_eq!(
            optimal_payoff(&b, &m).unwrap().values,
            vec![f64::INFINITY, 0.0]
        );
    }

    #[test]
    fn neutral_bucket_convention() {
        let s = BucketScheme::equal_width(0.0, 3.0, 3).unwrap();
        let b = Histogram::from_probs(s.clone(), vec![0.5, 0.0, 0.5]).unwrap();
        let m = Histogram::from_probs(s, vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(optimal_payoff(&b, &m).unwrap().values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn scheme_mismatch_rejected() {
        let b = Histogram::from_probs(
            BucketScheme::equal_width(0.0, 1.0, 2).unwrap(),
            vec![0.5, 0.5],
        )
        .unwrap();
        let m = Histogram::from_probs(
            BucketScheme::equal_width(0.0, 2.0, 2).unwrap(),
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(mrp(&b, &m), Err(Error::SchemeMismatch));
    }

    #[test]
    fn expected_return_cases() {
        let rates = RatesSpec {
            rfr: 0.02,
            cr: 0.005,
            ..Default::default()
        };
        let (b, m) = two([0.4, 0.6], [0.4, 0.6]);
        assert!((expected_return(&b, &m, &rates, 0.5).unwrap() - 0.015).abs() < 1e-15);

        let (b, m) = two([0.5, 0.5], [0.25, 0.75]);
        let er = expected_return(&b, &m, &RatesSpec::default(), 0.5).unwrap();
        assert!((er - 0.287682072451781).abs() < 1e-12);
        assert!(expected_return(&b, &m, &rates, 0.0).is_err());
    }

    #[test]
    fn materiality_is_strict() {
        let r = RatesSpec::default();
        assert_eq!(materiality(0.0044, &r), Verdict::Immaterial);
        assert_eq!(materiality(0.0606, &r), Verdict::Material);
        assert_eq!(materiality(0.01, &r), Verdict::Immaterial);
        let costly = RatesSpec {
            cr: 0.03,
            ..Default::default()
        };
        assert_eq!(materiality(0.02, &costly), Verdict::Immaterial);
    }

    #[test]
    fn mean_correction() {
        assert_eq!(
            mean_correct(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap(),
            vec![2.0, 3.0, 4.0]
        );
        let b = [0.3, 1.7, -2.0];
        assert_eq!(mean_correct(&b, &b).unwrap(), b.to_vec());
    }

    #[test]
    fn mean_var_correction() {
        assert_eq!(
            mean_var_correct(&[0.0, 2.0], &[10.0, 14.0]).unwrap(),
            vec![10.0, 14.0]
        );
        let b = [1.0, 2.0, 4.0];
        let out = mean_var_correct(&b, &b).unwrap();
        for (x, y) in out.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(
            mean_var_correct(&[3.0, 3.0], &[1.0, 2.0]),
            Err(Error::DegenerateBooking)
        );
    }

    #[test]
    fn identical_samples_give_flat_ladder() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| ((i * 7919) % 1000) as f64 / 10.0)
            .collect();
        let l = decompose(&xs, &xs, 20, 0.5).unwrap();
        // Binning noise only: affine maps of identical sets can flip edge samples.
        assert!(l.mrp_raw < 1e-3 && l.mrp_mean_corrected < 1e-3 && l.mrp_mean_var_corrected < 1e-3);
    }

    #[test]
    fn assess_flags_infinite() {
        let (b, m) = two([0.5, 0.5], [1.0, 0.0]);
        let r = assess(&b, &m, &RatesSpec::default(), 0.5).unwrap();
        assert!(r.infinite && r.material);
        assert_eq!(r.infinite_buckets, vec![1]);
        assert_eq!(r.payoff.points()[1].f, None);
    }
}
