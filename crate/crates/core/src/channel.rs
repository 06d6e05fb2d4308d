//! Received power, delivery decisions and maximum communication range.
//!
//! Mean received power follows a log-distance law anchored at the free-space
//! loss at 1 m. With exponent 2 this is exactly Friis. The Friis model is
//! deterministic; the Nakagami model multiplies the mean power (in mW) by a
//! unit-mean gamma fade of shape `m`, drawn independently per packet and
//! receiver.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelModel {
    Friis,
    Nakagami,
}

impl std::fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChannelModel::Friis => "friis",
            ChannelModel::Nakagami => "nakagami",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub model: ChannelModel,
    pub tx_power_dbm: f64,
    pub frequency_hz: f64,
    /// Minimum acceptable received power, dBm.
    pub sensitivity_dbm: f64,
    /// Distance exponent of the mean path loss (2 = free space).
    pub path_loss_exponent: f64,
    /// Nakagami shape parameter.
    pub nakagami_m: f64,
    /// PHY rate used for serialization delay, bit/s.
    pub phy_bitrate: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            model: ChannelModel::Friis,
            tx_power_dbm: 20.0,
            frequency_hz: 2.4e9,
            sensitivity_dbm: -83.0,
            path_loss_exponent: 2.75,
            nakagami_m: 2.0,
            phy_bitrate: 24e6,
        }
    }
}

impl ChannelParams {
    /// Textbook free space: exponent 2, no fading.
    pub fn free_space(tx_power_dbm: f64, sensitivity_dbm: f64, frequency_hz: f64) -> Self {
        Self {
            model: ChannelModel::Friis,
            tx_power_dbm,
            sensitivity_dbm,
            frequency_hz,
            path_loss_exponent: 2.0,
            ..Default::default()
        }
    }

    /// Free-space loss at the 1 m reference distance, dB.
    pub fn reference_loss_db(&self) -> f64 {
        20.0 * (4.0 * std::f64::consts::PI * self.frequency_hz / SPEED_OF_LIGHT).log10()
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.frequency_hz > 0.0) {
            return Err(ChannelError::InvalidParams("frequency_hz must be > 0"));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(ChannelError::InvalidParams("path_loss_exponent must be > 0"));
        }
        if self.model == ChannelModel::Nakagami && self.path_loss_exponent < 2.0 {
            return Err(ChannelError::InvalidParams("path_loss_exponent must be >= 2 for nakagami"));
        }
        if !(self.nakagami_m >= 0.5) {
            return Err(ChannelError::InvalidParams("nakagami_m must be >= 0.5"));
        }
        if !(self.phy_bitrate > 0.0) {
            return Err(ChannelError::InvalidParams("phy_bitrate must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("sensitivity {sensitivity_dbm} dBm is not reachable below 1 m loss ({ceiling_dbm} dBm)")]
    NoRange { sensitivity_dbm: f64, ceiling_dbm: f64 },
    #[error("invalid channel parameters: {0}")]
    InvalidParams(&'static str),
}

fn check_distance(d: f64) -> Result<(), ChannelError> {
    if d > 0.0 {
        Ok(())
    } else {
        Err(ChannelError::NonPositiveDistance(d))
    }
}

/// Received power without fading: `tx - 20 log10(4 pi f / c) - 10 g log10(d)`.
/// With `g = 2` this is `tx - 20 log10(4 pi d f / c)`.
pub fn friis_rx_power(params: &ChannelParams, d: f64) -> Result<f64, ChannelError> {
    check_distance(d)?;
    Ok(mean_rx_power_unchecked(params, d))
}

fn mean_rx_power_unchecked(params: &ChannelParams, d: f64) -> f64 {
    params.tx_power_dbm
        - params.reference_loss_db()
        - 10.0 * params.path_loss_exponent * d.log10()
}

/// Mean received power of the active model, dBm.
pub fn mean_rx_power(params: &ChannelParams, d: f64) -> Result<f64, ChannelError> {
    friis_rx_power(params, d)
}

/// Draws a unit-mean gamma fade (power domain) with shape `m`.
pub fn nakagami_fade<R: Rng + ?Sized>(m: f64, rng: &mut R) -> f64 {
    Gamma::new(m, 1.0 / m).expect("nakagami_m validated >= 0.5").sample(rng)
}

/// Instantaneous received power under Nakagami fading, dBm.
pub fn nakagami_rx_power<R: Rng + ?Sized>(
    params: &ChannelParams,
    d: f64,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    let mean = mean_rx_power(params, d)?;
    Ok(mean + 10.0 * nakagami_fade(params.nakagami_m, rng).log10())
}

/// Distance at which the mean received power equals the sensitivity.
pub fn max_range(params: &ChannelParams) -> Result<f64, ChannelError> {
    let ceiling = params.tx_power_dbm - params.reference_loss_db();
    let margin = ceiling - params.sensitivity_dbm;
    if !(margin > 0.0) {
        return Err(ChannelError::NoRange {
            sensitivity_dbm: params.sensitivity_dbm,
            ceiling_dbm: ceiling,
        });
    }
    Ok(10f64.powf(margin / (10.0 * params.path_loss_exponent)))
}

/// Per-run channel with the range precomputed.
#[derive(Debug, Clone)]
pub struct Channel {
    params: ChannelParams,
    d_max: f64,
    fade: Option<Gamma<f64>>,
}

impl Channel {
    pub fn new(params: ChannelParams) -> Result<Self, ChannelError> {
        params.validate()?;
        let d_max = max_range(&params)?;
        let fade = match params.model {
            ChannelModel::Friis => None,
            ChannelModel::Nakagami => Some(
                Gamma::new(params.nakagami_m, 1.0 / params.nakagami_m)
                    .map_err(|_| ChannelError::InvalidParams("nakagami_m"))?,
            ),
        };
        Ok(Self { params, d_max, fade })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Whether one transmission over `d` meters arrives. Friis is a pure
    /// range check; Nakagami consumes one fade draw.
    pub fn delivered<R: Rng + ?Sized>(&self, d: f64, rng: &mut R) -> bool {
        let d = d.max(f64::MIN_POSITIVE);
        match &self.fade {
            None => d <= self.d_max,
            Some(gamma) => {
                // rx >= sens  <=>  fade >= 10^((sens - mean)/10) = (d/d_max)^g
                let needed = (d / self.d_max).powf(self.params.path_loss_exponent);
                gamma.sample(rng) >= needed
            }
        }
    }

    /// Serialization time of `bytes` at the PHY rate, seconds.
    pub fn airtime(&self, bytes: usize) -> f64 {
        bytes as f64 * 8.0 / self.params.phy_bitrate
    }
}

/// Single delivery decision against the sensitivity (see [`Channel::delivered`]).
pub fn delivered<R: Rng + ?Sized>(
    params: &ChannelParams,
    d: f64,
    rng: &mut R,
) -> Result<bool, ChannelError> {
    check_distance(d)?;
    let rx = match params.model {
        ChannelModel::Friis => friis_rx_power(params, d)?,
        ChannelModel::Nakagami => nakagami_rx_power(params, d, rng)?,
    };
    Ok(rx >= params.sensitivity_dbm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    fn free_space() -> ChannelParams {
        ChannelParams::free_space(20.0, -83.0, 2.4e9)
    }

    /// `20 log10(4 pi f / c)` evaluated independently.
    fn loss_at_1m() -> f64 {
        let lambda = SPEED_OF_LIGHT / 2.4e9;
        -20.0 * (lambda / (4.0 * std::f64::consts::PI)).log10()
    }

    #[test]
    fn one_meter_loss() {
        let rx = friis_rx_power(&free_space(), 1.0).unwrap();
        assert!((rx - (20.0 - loss_at_1m())).abs() < 1e-12);
        assert!((rx - -20.05).abs() < 0.01);
    }

    #[test]
    fn doubling_distance_costs_6db() {
        let p = free_space();
        let a = friis_rx_power(&p, 100.0).unwrap();
        let b = friis_rx_power(&p, 200.0).unwrap();
        assert!((a - b - 20.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn free_space_range_inverts() {
        let p = free_space();
        let d = max_range(&p).unwrap();
        // 20 log10(d) = 103 - 40.05
        let oracle = 10f64.powf((20.0 + 83.0 - loss_at_1m()) / 20.0);
        assert!((d - oracle).abs() < 1e-9 * oracle);
        assert!((d - 1404.0).abs() / 1404.0 < 0.01);
        assert!((friis_rx_power(&p, d).unwrap() - -83.0).abs() < 1e-6);
    }

    #[test]
    fn sensitivity_plus_20db_divides_range_by_10() {
        let a = max_range(&free_space()).unwrap();
        let b = max_range(&ChannelParams { sensitivity_dbm: -63.0, ..free_space() }).unwrap();
        assert!((a / b - 10.0).abs() < 1e-9);
    }

    #[test]
    fn log_distance_range_by_bisection() {
        let p = ChannelParams { model: ChannelModel::Nakagami, path_loss_exponent: 2.75, ..free_space() };
        let d = max_range(&p).unwrap();
        let (mut lo, mut hi) = (1.0f64, 1e5f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_rx_power(&p, mid).unwrap() > p.sensitivity_dbm {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((d - lo).abs() < 1e-6 * d);
        assert!((mean_rx_power(&p, d).unwrap() - p.sensitivity_dbm).abs() < 1e-6);
    }

    #[test]
    fn unreachable_sensitivity_is_an_error() {
        let p = ChannelParams { sensitivity_dbm: 0.0, ..free_space() };
        assert!(matches!(max_range(&p), Err(ChannelError::NoRange { .. })));
        assert!(matches!(friis_rx_power(&p, 0.0), Err(ChannelError::NonPositiveDistance(_))));
        assert!(matches!(friis_rx_power(&p, -1.0), Err(ChannelError::NonPositiveDistance(_))));
    }

    #[test]
    fn friis_delivery_is_threshold() {
        let ch = Channel::new(free_space()).unwrap();
        let mut rng = substream(1, Stream::Fading);
        assert!(ch.delivered(0.5 * ch.d_max(), &mut rng));
        assert!(!ch.delivered(2.0 * ch.d_max(), &mut rng));
        assert!(delivered(&free_space(), 0.5 * ch.d_max(), &mut rng).unwrap());
        assert!(!delivered(&free_space(), 2.0 * ch.d_max(), &mut rng).unwrap());
    }

    #[test]
    fn fade_concentrates_for_large_m() {
        let mut rng = substream(2, Stream::Fading);
        let draws: Vec<f64> = (0..10_000).map(|_| nakagami_fade(500.0, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!(var.sqrt() < 0.05);
    }

    #[test]
    fn fade_has_unit_mean() {
        let mut rng = substream(3, Stream::Fading);
        let n = 100_000;
        let mean = (0..n).map(|_| nakagami_fade(2.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");
    }

    #[test]
    fn fast_and_direct_delivery_agree() {
        let p = ChannelParams { model: ChannelModel::Nakagami, ..Default::default() };
        let ch = Channel::new(p).unwrap();
        let mut a = substream(4, Stream::Fading);
        let mut b = substream(4, Stream::Fading);
        for k in 1..2000 {
            let d = k as f64 * 0.2;
            assert_eq!(ch.delivered(d, &mut a), delivered(&p, d, &mut b).unwrap(), "d={d}");
        }
    }

    #[test]
    fn rx_strictly_decreasing() {
        let p = ChannelParams::default();
        let mut prev = f64::INFINITY;
        for k in 1..5000 {
            let rx = friis_rx_power(&p, k as f64 * 0.37).unwrap();
            assert!(rx < prev);
            prev = rx;
        }
    }
}
