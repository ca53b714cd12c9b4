//! Scenario container, synthetic data generator and the naive price forecaster.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::{Prosumer, Tariffs, HOURS_PER_DAY};
use crate::{Error, Result};

/// A prosumer population with aligned hourly price series.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub prosumers: Vec<Prosumer>,
    pub tariffs: Tariffs,
    pub days: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn hours(&self) -> usize {
        self.days * HOURS_PER_DAY
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::Config("scenario must span at least one day".into()));
        }
        if self.prosumers.is_empty() {
            return Err(Error::Config("scenario has no prosumers".into()));
        }
        self.tariffs.validate()?;
        let h = self.hours();
        if self.tariffs.hours() != h {
            return Err(Error::Config(format!(
                "price series has {} hours, expected {h}",
                self.tariffs.hours()
            )));
        }
        for p in &self.prosumers {
            p.validate()?;
            if p.hours() != h {
                return Err(Error::Config(format!(
                    "prosumer {} has {} hours, expected {h}",
                    p.id,
                    p.hours()
                )));
            }
        }
        Ok(())
    }

    /// Demand-weighted mean TOU price of `day` over the given participants.
    ///
    /// Falls back to the plain hourly mean when the participants draw nothing.
    pub fn tou_reference(&self, day: usize, participants: &[usize]) -> f64 {
        let hours = day * HOURS_PER_DAY..(day + 1) * HOURS_PER_DAY;
        let (mut paid, mut energy) = (0.0, 0.0);
        for t in hours.clone() {
            let d: f64 = participants.iter().map(|&j| self.prosumers[j].demand_kw[t]).sum();
            paid += d * self.tariffs.tou[t];
            energy += d;
        }
        if energy > 0.0 {
            paid / energy
        } else {
            self.tariffs.tou[hours].iter().sum::<f64>() / HOURS_PER_DAY as f64
        }
    }
}

/// 24-hour persistence forecast of the price at `t + 1`, made at hour `t`.
///
/// Reads only `history[..=t]`. With less than a day of history it repeats
/// the last observed price.
pub fn forecast_price(history: &[f64], t: usize) -> f64 {
    if t + 1 >= HOURS_PER_DAY {
        history[t + 1 - HOURS_PER_DAY]
    } else {
        history[t]
    }
}

pub fn forecast_series(spot: &[f64]) -> Vec<f64> {
    (0..spot.len()).map(|t| forecast_price(spot, t)).collect()
}

/// Retail TOU price by hour of day: off-peak overnight, peak in the evening.
pub fn tou_price(hour_of_day: usize, cfg: &SyntheticConfig) -> f64 {
    match hour_of_day {
        h if !(7..22).contains(&h) => cfg.tou_offpeak,
        16..=20 => cfg.tou_peak,
        _ => cfg.tou_shoulder,
    }
}

/// Knobs of the synthetic generator. Prices in $/kWh, powers in kW.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub pv_peak_kw: (f64, f64),
    pub daily_demand_kwh: (f64, f64),
    pub ess_capacity_kwh: f64,
    pub ess_power_kw: f64,
    pub fit: f64,
    pub tou_offpeak: f64,
    pub tou_shoulder: f64,
    pub tou_peak: f64,
    /// AR(1) persistence of the spot deviation.
    pub spot_persistence: f64,
    pub spot_noise: f64,
    pub spike_probability: f64,
    pub negative_probability: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            pv_peak_kw: (1.5, 7.0),
            daily_demand_kwh: (15.0, 25.0),
            ess_capacity_kwh: 15.0,
            ess_power_kw: 7.5,
            fit: 0.07,
            tou_offpeak: 0.15,
            tou_shoulder: 0.25,
            tou_peak: 0.40,
            spot_persistence: 0.85,
            spot_noise: 0.015,
            spike_probability: 0.01,
            negative_probability: 0.04,
        }
    }
}

fn bell(x: f64, center: f64, width: f64) -> f64 {
    let z = (x - center) / width;
    libm::exp(-0.5 * z * z)
}

/// Clear-sky PV shape, zero outside 06:00-19:00.
fn pv_shape(hour: usize) -> f64 {
    if (6..=19).contains(&hour) {
        bell(hour as f64 + 0.5, 13.0, 2.2)
    } else {
        0.0
    }
}

/// Residential demand shape with morning and evening peaks, summing to one.
fn demand_shape() -> [f64; HOURS_PER_DAY] {
    let mut s = [0.0; HOURS_PER_DAY];
    for (h, v) in s.iter_mut().enumerate() {
        let x = h as f64 + 0.5;
        *v = 0.5 + 0.9 * bell(x, 7.5, 1.2) + 1.6 * bell(x, 19.0, 1.8);
    }
    let total: f64 = s.iter().sum();
    s.map(|v| v / total)
}

/// Expected spot price by hour: cheap midday solar trough, evening peak.
fn spot_shape(hour: usize) -> f64 {
    let x = hour as f64 + 0.5;
    0.09 + 0.17 * bell(x, 19.0, 1.8) + 0.04 * bell(x, 8.0, 1.0) - 0.07 * bell(x, 13.0, 2.0)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Deterministic synthetic scenario with default knobs.
pub fn generate_synthetic(seed: u64, n_prosumers: usize, days: usize) -> Result<Scenario> {
    generate_with(&SyntheticConfig::default(), seed, n_prosumers, days)
}

pub fn generate_with(
    cfg: &SyntheticConfig,
    seed: u64,
    n_prosumers: usize,
    days: usize,
) -> Result<Scenario> {
    if n_prosumers == 0 {
        return Err(Error::Config("n_prosumers must be >= 1".into()));
    }
    if days == 0 {
        return Err(Error::Config("days must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hours = days * HOURS_PER_DAY;

    let mut spot = Vec::with_capacity(hours);
    let mut dev = 0.0;
    for t in 0..hours {
        let h = t % HOURS_PER_DAY;
        dev = cfg.spot_persistence * dev + cfg.spot_noise * normal(&mut rng);
        let mut price = spot_shape(h) + dev;
        if rng.random::<f64>() < cfg.spike_probability {
            price += rng.random_range(0.3..1.0);
        }
        if (10..=15).contains(&h) && rng.random::<f64>() < cfg.negative_probability {
            price -= rng.random_range(0.05..0.12);
        }
        spot.push(price);
    }
    let tou: Vec<f64> = (0..hours).map(|t| tou_price(t % HOURS_PER_DAY, cfg)).collect();
    let spot_forecast = forecast_series(&spot);

    let shape = demand_shape();
    let mut prosumers = Vec::with_capacity(n_prosumers);
    for id in 0..n_prosumers {
        let pv_peak = rng.random_range(cfg.pv_peak_kw.0..cfg.pv_peak_kw.1);
        let daily = rng.random_range(cfg.daily_demand_kwh.0..cfg.daily_demand_kwh.1);
        let mut demand_kw = Vec::with_capacity(hours);
        let mut pv_kw = Vec::with_capacity(hours);
        for _ in 0..days {
            let cloud = rng.random_range(0.4..1.0);
            let day_total = daily * (1.0 + 0.1 * normal(&mut rng)).max(0.5);
            for (h, s) in shape.iter().enumerate() {
                let noise = (1.0 + 0.15 * normal(&mut rng)).max(0.2);
                demand_kw.push(day_total * s * noise);
                let pv = pv_peak * cloud * pv_shape(h) * (1.0 + 0.1 * normal(&mut rng));
                pv_kw.push(pv.max(0.0));
            }
        }
        prosumers.push(Prosumer {
            id: id as u32,
            pv_peak_kw: pv_peak,
            ess_capacity_kwh: cfg.ess_capacity_kwh,
            ess_power_kw: cfg.ess_power_kw,
            demand_kw,
            pv_kw,
            active: true,
        });
    }
    let scenario = Scenario {
        prosumers,
        tariffs: Tariffs { tou, fit: cfg.fit, spot, spot_forecast },
        days,
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}
