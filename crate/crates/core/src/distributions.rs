//! Bucketed distributions: sample histograms and state-price normalization.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

/// Strictly increasing bucket boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScheme {
    edges: Vec<f64>,
}

impl BucketScheme {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 3 {
            return Err(config_err("bucket scheme needs at least 2 buckets"));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err(
                "bucket edges must be finite and strictly increasing",
            ));
        }
        Ok(Self { edges })
    }

    /// `n` equal-width buckets over `[lo, hi]`.
    pub fn equal_width(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(config_err("bucket count must be >= 2"));
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(config_err("bucket range must be finite"));
        }
        if !(hi > lo) {
            return Err(Error::DegenerateRange);
        }
        let width = (hi - lo) / n as f64;
        let mut edges: Vec<f64> = (0..n).map(|i| lo + i as f64 * width).collect();
        edges.push(hi);
        Self::new(edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_buckets(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    /// Bucket index of `x`. Interior edges belong to the bucket on their
    /// right; the top edge belongs to the last bucket.
    pub fn bucket_of(&self, x: f64) -> Result<usize> {
        if !(x >= self.lo() && x <= self.hi()) {
            return Err(Error::OutOfRange {
                value: x,
                lo: self.lo(),
                hi: self.hi(),
            });
        }
        let n = self.n_buckets();
        Ok(self.edges[1..n].partition_point(|&e| e <= x))
    }
}

/// Probabilities over a bucket scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub scheme: BucketScheme,
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
}

/// Serialized bucket: `{lo, hi, prob}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketProb {
    pub lo: f64,
    pub hi: f64,
    pub prob: f64,
}

impl Histogram {
    /// Histogram from explicit probabilities, which must be non-negative and
    /// sum to one within `1e-12`.
    pub fn from_probs(scheme: BucketScheme, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != scheme.n_buckets() {
            return Err(Error::SchemeMismatch);
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(config_err("probabilities must be non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(config_err(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self {
            scheme,
            probs,
            counts: None,
        })
    }

    pub fn from_counts(scheme: BucketScheme, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != scheme.n_buckets() {
            return Err(Error::SchemeMismatch);
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(config_err("histogram needs at least one sample"));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self {
            scheme,
            probs,
            counts: Some(counts),
        })
    }

    pub fn n_buckets(&self) -> usize {
        self.probs.len()
    }

    pub fn buckets(&self) -> Vec<BucketProb> {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &prob)| {
                let (lo, hi) = self.scheme.bounds(i);
                BucketProb { lo, hi, prob }
            })
            .collect()
    }

    pub fn same_scheme(&self, other: &Histogram) -> Result<()> {
        if self.scheme != other.scheme {
            return Err(Error::SchemeMismatch);
        }
        Ok(())
    }
}

/// `n` equal-width buckets over the union range of both sample sets.
pub fn build_bucket_edges(samples_b: &[f64], samples_m: &[f64], n: usize) -> Result<BucketScheme> {
    union_scheme(&[samples_b, samples_m], n)
}

/// `n` equal-width buckets over the union range of several sample sets.
pub fn union_scheme(sets: &[&[f64]], n: usize) -> Result<BucketScheme> {
    if sets.iter().any(|s| s.is_empty()) {
        return Err(config_err("sample sets must be non-empty"));
    }
    let (lo, hi) = sets
        .iter()
        .flat_map(|s| s.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    BucketScheme::equal_width(lo, hi, n)
}

pub fn bucket_counts(samples: &[f64], scheme: &BucketScheme) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; scheme.n_buckets()];
    for &x in samples {
        counts[scheme.bucket_of(x)?] += 1;
    }
    Ok(counts)
}

pub fn histogram_from_samples(samples: &[f64], scheme: &BucketScheme) -> Result<Histogram> {
    Histogram::from_counts(scheme.clone(), bucket_counts(samples, scheme)?)
}

/// Histogram with `pseudo` added to every bucket count before normalizing.
/// Raw counts are kept unsmoothed.
pub fn smoothed_histogram(
    samples: &[f64],
    scheme: &BucketScheme,
    pseudo: f64,
) -> Result<Histogram> {
    let counts = bucket_counts(samples, scheme)?;
    let total = counts.iter().sum::<u64>() as f64 + pseudo * counts.len() as f64;
    let probs = counts
        .iter()
        .map(|&c| (c as f64 + pseudo) / total)
        .collect();
    Ok(Histogram {
        scheme: scheme.clone(),
        probs,
        counts: Some(counts),
    })
}

/// Binary-security prices per bucket with their discount and commission
/// factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceVector {
    pub edges: Vec<f64>,
    pub prices: Vec<f64>,
    pub df: f64,
    pub cf: f64,
}

impl PriceVector {
    pub fn validate(&self) -> Result<BucketScheme> {
        let scheme = BucketScheme::new(self.edges.clone())?;
        if self.prices.len() != scheme.n_buckets() {
            return Err(config_err("one price per bucket is required"));
        }
        if !(self.df > 0.0 && self.df <= 1.0) {
            return Err(config_err("discount factor must lie in (0, 1]"));
        }
        if !(self.cf >= 1.0 && self.cf.is_finite()) {
            return Err(config_err("commission factor must be >= 1"));
        }
        if let Some((bucket, &price)) = self.prices.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
            return Err(Error::NonPositivePrice { bucket, price });
        }
        let total: f64 = self.prices.iter().sum();
        let norm = self.df * self.cf;
        if (total - norm).abs() > 1e-12 * norm.max(1.0) {
            return Err(config_err(format!(
                "prices sum to {total}, expected DF*CF = {norm}"
            )));
        }
        Ok(scheme)
    }
}

/// Market-implied distribution recovered from state prices.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketImplied {
    pub histogram: Histogram,
    /// `-ln DF`, per horizon.
    pub rfr: f64,
    /// `ln CF`, per horizon.
    pub cr: f64,
}

pub fn market_implied_from_prices(pv: &PriceVector) -> Result<MarketImplied> {
    let scheme = pv.validate()?;
    let norm = pv.df * pv.cf;
    let probs = pv.prices.iter().map(|p| p / norm).collect();
    Ok(MarketImplied {
        histogram: Histogram {
            scheme,
            probs,
            counts: None,
        },
        rfr: -pv.df.ln(),
        cr: pv.cf.ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_width_edges() {
        let s = build_bucket_edges(&[0.0, 3.0], &[10.0, 5.0], 5).unwrap();
        assert_eq!(s.edges(), &[0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
    }

    #[test]
    fn union_covers_wider_set() {
        let s = build_bucket_edges(&[4.0, 6.0], &[1.0, 9.0], 4).unwrap();
        assert_eq!((s.lo(), s.hi()), (1.0, 9.0));
    }

    #[test]
    fn degenerate_range_is_an_error() {
        assert_eq!(
            build_bucket_edges(&[2.0], &[2.0, 2.0], 5),
            Err(Error::DegenerateRange)
        );
        assert!(build_bucket_edges(&[], &[1.0, 2.0], 5).is_err());
        assert!(build_bucket_edges(&[1.0], &[2.0], 1).is_err());
    }

    #[test]
    fn uniform_samples() {
        let s = BucketScheme::equal_width(0.0, 10.0, 5).unwrap();
        let h = histogram_from_samples(&[1.0, 3.0, 5.0, 7.0, 9.0], &s).unwrap();
        assert_eq!(h.probs, vec![0.2; 5]);
    }

    #[test]
    fn edge_convention() {
        let s = BucketScheme::equal_width(0.0, 10.0, 5).unwrap();
        assert_eq!(s.bucket_of(0.0).unwrap(), 0);
        assert_eq!(s.bucket_of(2.0).unwrap(), 1);
        assert_eq!(s.bucket_of(10.0).unwrap(), 4);
        assert!(s.bucket_of(10.5).is_err());
        assert!(s.bucket_of(f64::NAN).is_err());
        let h = histogram_from_samples(&[4.0, 4.5, 5.9], &s).unwrap();
        assert_eq!(h.probs, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_sample_rejected() {
        let s = BucketScheme::equal_width(0.0, 1.0, 2).unwrap();
        assert!(matches!(
            histogram_from_samples(&[0.5, -0.1], &s),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn smoothing_adds_half_counts() {
        let s = BucketScheme::equal_width(0.0, 1.0, 2).unwrap();
        let h = smoothed_histogram(&[0.1, 0.2, 0.3], &s, 0.5).unwrap();
        assert_eq!(h.probs, vec![3.5 / 4.0, 0.5 / 4.0]);
        assert_eq!(h.counts, Some(vec![3, 0]));
    }

    #[test]
    fn prices_normalize_to_distribution() {
        let pv = PriceVector {
            edges: vec![0.0, 1.0, 2.0, 3.0],
            prices: vec![0.3, 0.3, 0.38],
            df: 0.98,
            cf: 1.0,
        };
        let mi = market_implied_from_prices(&pv).unwrap();
        for (got, want) in mi
            .histogram
            .probs
            .iter()
            .zip([0.3 / 0.98, 0.3 / 0.98, 0.38 / 0.98])
        {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((mi.histogram.probs[0] - 0.306122448979).abs() < 1e-11);
        assert!((mi.rfr + 0.98f64.ln()).abs() < 1e-15);
        assert_eq!(mi.cr, 0.0);
    }

    #[test]
    fn unit_prices_are_probabilities() {
        let pv = PriceVector {
            edges: vec![0.0, 1.0, 2.0],
            prices: vec![0.25, 0.75],
            df: 1.0,
            cf: 1.0,
        };
        let mi = market_implied_from_prices(&pv).unwrap();
        assert_eq!(mi.histogram.probs, vec![0.25, 0.75]);
        assert_eq!((mi.rfr, mi.cr), (0.0, 0.0));
    }

    #[test]
    fn commission_rate_is_log_cf() {
        let pv = PriceVector {
            edges: vec![0.0, 1.0, 2.0],
            prices: vec![0.51, 0.51],
            df: 1.0,
            cf: 1.02,
        };
        let mi = market_implied_from_prices(&pv).unwrap();
        assert!((mi.cr - 0.0198026272961797).abs() < 1e-15);
    }

    #[test]
    fn non_positive_price_rejected() {
        let pv = PriceVector {
            edges: vec![0.0, 1.0, 2.0],
            prices: vec![1.0, 0.0],
            df: 1.0,
            cf: 1.0,
        };
        assert_eq!(
            market_implied_from_prices(&pv),
            Err(Error::NonPositivePrice {
                bucket: 1,
                price: 0.0
            })
        );
    }
}
