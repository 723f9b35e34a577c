//! Parametric implied-volatility surface and Dupire local volatility.
//!
//! The surface is quoted in log-moneyness `y = ln(K/F(T))`:
//!
//! ```text
//! sigma(y, T) = clamp(atm(T) + skew * y + smile * y^2, floor, cap)
//! ```
//!
//! `atm(T)` interpolates ATM total variance linearly between pillar tenors and
//! extrapolates with flat vol outside them. Local volatility follows from the
//! total-variance form of Dupire's formula,
//!
//! ```text
//! sigma_loc^2 = w_T / (1 - (y/w) w_y + 1/4 (-1/4 - 1/w + y^2/w^2) w_y^2 + 1/2 w_yy)
//! ```
//!
//! with central differences in log-strike and a forward difference in tenor.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Relative strike bump used by the Dupire finite differences (1%).
pub const STRIKE_BUMP: f64 = 0.01;
/// Tenor bump used by the Dupire finite differences (one business day).
pub const TENOR_BUMP: f64 = 1.0 / 252.0;
/// Smallest admissible Dupire denominator.
pub const DENOM_FLOOR: f64 = 1e-8;
/// Local volatility bounds.
pub const LOCAL_VOL_FLOOR: f64 = 0.01;
pub const LOCAL_VOL_CAP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedVolSurface {
    /// Pillar tenors in years, strictly increasing.
    pub tenors: Vec<f64>,
    /// ATM implied vols at the pillars.
    pub atm_vols: Vec<f64>,
    /// Slope of implied vol per unit log-moneyness.
    #[serde(default)]
    pub skew: f64,
    /// Curvature of implied vol per unit squared log-moneyness.
    #[serde(default)]
    pub smile: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

fn default_floor() -> f64 {
    0.05
}

fn default_cap() -> f64 {
    1.5
}

/// Dupire evaluation result. `degenerate` marks a clamped evaluation where the
/// ratio had a non-positive denominator or numerator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalVolValue {
    pub vol: f64,
    pub degenerate: bool,
}

impl ImpliedVolSurface {
    /// Flat surface at a single vol.
    pub fn flat(vol: f64) -> Result<Self> {
        Self::new(
            vec![1.0],
            vec![vol],
            0.0,
            0.0,
            default_floor().min(vol),
            default_cap().max(vol),
        )
    }

    pub fn new(
        tenors: Vec<f64>,
        atm_vols: Vec<f64>,
        skew: f64,
        smile: f64,
        floor: f64,
        cap: f64,
    ) -> Result<Self> {
        let s = Self {
            tenors,
            atm_vols,
            skew,
            smile,
            floor,
            cap,
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks the structural invariants and calendar no-arbitrage on a grid.
    pub fn validate(&self) -> Result<()> {
        if self.tenors.is_empty() || self.tenors.len() != self.atm_vols.len() {
            return Err(config_err(
                "surface needs matching, non-empty tenors and atm_vols",
            ));
        }
        if self.tenors.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(config_err("surface tenors must be positive"));
        }
        if self.tenors.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("surface tenors must be strictly increasing"));
        }
        if self.atm_vols.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(config_err("surface atm vols must be positive"));
        }
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(config_err("surface floor must be > 0"));
        }
        if !(self.cap >= self.floor && self.cap.is_finite()) {
            return Err(config_err("surface cap must be >= floor"));
        }
        if !(self.skew.is_finite() && self.smile.is_finite()) {
            return Err(config_err("surface skew and smile must be finite"));
        }
        self.check_calendar()
    }

    fn check_calendar(&self) -> Result<()> {
        let t_max = self.tenors[self.tenors.len() - 1] * 1.5;
        let n_t = 400;
        for iy in -60..=60 {
            let y = iy as f64 * 0.05;
            let mut prev = 0.0;
            for it in 1..=n_t {
                let t = t_max * it as f64 / n_t as f64;
                let w = self.total_variance(y, t);
                if w < prev * (1.0 - 1e-12) {
                    return Err(config_err(format!(
                        "calendar arbitrage: total variance decreases at log-moneyness {y:.2}, tenor {t:.4}"
                    )));
                }
                prev = w;
            }
        }
        Ok(())
    }

    /// ATM vol at tenor `t`.
    pub fn atm_vol(&self, t: f64) -> f64 {
        let n = self.tenors.len();
        if t <= self.tenors[0] || n == 1 {
            return if t <= self.tenors[0] {
                self.atm_vols[0]
            } else {
                self.atm_vols[n - 1]
            };
        }
        if t >= self.tenors[n - 1] {
            return self.atm_vols[n - 1];
        }
        let i = self.tenors.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.tenors[i], self.tenors[i + 1]);
        let w0 = self.atm_vols[i].powi(2) * t0;
        let w1 = self.atm_vols[i + 1].powi(2) * t1;
        let w = w0 + (w1 - w0) * (t - t0) / (t1 - t0);
        (w / t).sqrt()
    }

    /// Implied vol at log-moneyness `y` and tenor `t`.
    pub fn implied_vol(&self, y: f64, t: f64) -> f64 {
        let raw = self.atm_vol(t) + self.skew * y + self.smile * y * y;
        raw.clamp(self.floor, self.cap)
    }

    pub fn total_variance(&self, y: f64, t: f64) -> f64 {
        let v = self.implied_vol(y, t);
        v * v * t
    }

    /// The vol of a surface with no skew, no smile and a constant ATM term
    /// structure.
    pub fn flat_vol(&self) -> Option<f64> {
        let v0 = self.atm_vols[0];
        let flat = self.skew == 0.0
            && self.smile == 0.0
            && self.atm_vols.iter().all(|&v| v == v0)
            && v0 >= self.floor
            && v0 <= self.cap;
        flat.then_some(v0)
    }

    /// Dupire local vol at spot level `spot_level` and time `time`, given the
    /// forward to that time. Clamped to `[LOCAL_VOL_FLOOR, LOCAL_VOL_CAP]`.
    pub fn local_vol_at(&self, spot_level: f64, time: f64, forward: f64) -> f64 {
        self.local_vol_checked(spot_level, time, forward).vol
    }

    pub fn local_vol_checked(&self, spot_level: f64, time: f64, forward: f64) -> LocalVolValue {
        if let Some(v) = self.flat_vol() {
            return LocalVolValue {
                vol: v.clamp(LOCAL_VOL_FLOOR, LOCAL_VOL_CAP),
                degenerate: false,
            };
        }
        let y = (spot_level / forward).ln();
        let t = time.max(TENOR_BUMP);
        let hy = (1.0 + STRIKE_BUMP).ln();

        let w = self.total_variance(y, t);
        let w_up = self.total_variance(y + hy, t);
        let w_dn = self.total_variance(y - hy, t);
        let w_t = (self.total_variance(y, t + TENOR_BUMP) - w) / TENOR_BUMP;
        let w_y = (w_up - w_dn) / (2.0 * hy);
        let w_yy = (w_up - 2.0 * w + w_dn) / (hy * hy);

        let denom =
            1.0 - y / w * w_y + 0.25 * (-0.25 - 1.0 / w + y * y / (w * w)) * w_y * w_y + 0.5 * w_yy;

        let floored = LocalVolValue {
            vol: LOCAL_VOL_FLOOR,
            degenerate: true,
        };
        if !denom.is_finite() || denom <= 0.0 || !w_t.is_finite() || w_t < 0.0 {
            return floored;
        }
        let local_var = w_t / denom.max(DENOM_FLOOR);
        if !local_var.is_finite() {
            return floored;
        }
        LocalVolValue {
            vol: local_var.sqrt().clamp(LOCAL_VOL_FLOOR, LOCAL_VOL_CAP),
            degenerate: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skewed() -> ImpliedVolSurface {
        ImpliedVolSurface::new(
            vec![0.25, 0.5, 1.0],
            vec![0.25, 0.2395, 0.235],
            -0.25,
            0.1,
            0.05,
            1.5,
        )
        .unwrap()
    }

    #[test]
    fn flat_surface_is_a_fixed_point() {
        let s = ImpliedVolSurface::flat(0.2).unwrap();
        for &(spot, t) in &[(50.0, 0.0), (100.0, 0.3), (170.0, 2.0)] {
            assert_eq!(s.local_vol_at(spot, t, 100.0), 0.2);
        }
    }

    #[test]
    fn term_structure_only_matches_total_variance_slope() {
        // Total-variance pillars increasing, no skew.
        let s =
            ImpliedVolSurface::new(vec![0.25, 1.0], vec![0.15, 0.25], 0.0, 0.0, 0.01, 2.0).unwrap();
        for &t in &[0.3, 0.5, 0.8] {
            // Oracle: central difference of T * v^2(T) with a much smaller step.
            let h = 1e-5;
            let tv = |x: f64| x * s.atm_vol(x).powi(2);
            let slope = (tv(t + h) - tv(t - h)) / (2.0 * h);
            let lv = s.local_vol_at(100.0, t, 100.0);
            assert!(
                (lv * lv - slope).abs() < 1e-9,
                "t={t} lv^2={} slope={slope}",
                lv * lv
            );
        }
    }

    #[test]
    fn atm_interpolation_hits_pillars() {
        let s = skewed();
        assert!((s.atm_vol(0.5) - 0.2395).abs() < 1e-15);
        assert_eq!(s.atm_vol(0.1), 0.25);
        assert_eq!(s.atm_vol(3.0), 0.235);
    }

    #[test]
    fn calendar_arbitrage_rejected() {
        // Steeply inverted term structure with total variance decreasing.
        let err = ImpliedVolSurface::new(vec![0.25, 1.0], vec![0.6, 0.2], 0.0, 0.0, 0.01, 2.0);
        assert!(err.is_err());
    }

    #[test]
    fn implied_vol_respects_bounds() {
        let s = skewed();
        for iy in -100..=100 {
            let v = s.implied_vol(iy as f64 * 0.1, 0.5);
            assert!(v >= s.floor && v <= s.cap);
        }
    }

    #[test]
    fn negative_skew_lifts_low_strike_local_vol() {
        let s = skewed();
        let lv = s.local_vol_at(80.0, 0.5, 100.0);
        assert!(lv > s.implied_vol(0.0, 0.5));
    }

    #[test]
    fn degenerate_denominator_clamps_to_floor() {
        // Steep positive slope drives the Dupire denominator negative on the upside.
        let s = ImpliedVolSurface::new(vec![1.0], vec![0.2], 3.0, 0.0, 0.01, 5.0).unwrap();
        let v = s.local_vol_checked(100.0 * 0.5f64.exp(), 1.0, 100.0);
        assert!(v.degenerate);
        assert_eq!(v.vol, LOCAL_VOL_FLOOR);
    }
}
