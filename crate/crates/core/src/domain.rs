//! Core value types shared by every other module.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Simulation time step in hours. Coefficients and trades are decided hourly.
pub const DT_HOURS: f64 = 1.0;
pub const HOURS_PER_DAY: usize = 24;

/// A PV-ESS household that can join the shared storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Prosumer {
    pub id: u32,
    pub pv_peak_kw: f64,
    pub ess_capacity_kwh: f64,
    /// Household battery power limit; also caps hourly deposit/withdrawal.
    pub ess_power_kw: f64,
    /// Hourly demand D_{j,t} (kW, i.e. kWh per hour).
    pub demand_kw: Vec<f64>,
    /// Hourly PV generation G_{j,t} (kW).
    pub pv_kw: Vec<f64>,
    pub active: bool,
}

impl Prosumer {
    pub fn validate(&self) -> Result<()> {
        if !(self.pv_peak_kw > 0.0) {
            return Err(Error::Config(format!("prosumer {}: pv_peak_kw must be > 0", self.id)));
        }
        if !(self.ess_capacity_kwh > 0.0) {
            return Err(Error::Config(format!(
                "prosumer {}: ess_capacity_kwh must be > 0",
                self.id
            )));
        }
        if !(self.ess_power_kw > 0.0) {
            return Err(Error::Config(format!("prosumer {}: ess_power_kw must be > 0", self.id)));
        }
        if self.demand_kw.len() != self.pv_kw.len() {
            return Err(Error::Config(format!(
                "prosumer {}: demand has {} hours but pv has {}",
                self.id,
                self.demand_kw.len(),
                self.pv_kw.len()
            )));
        }
        let bad = |v: &f64| !v.is_finite() || *v < 0.0;
        if self.demand_kw.iter().any(bad) || self.pv_kw.iter().any(bad) {
            return Err(Error::Config(format!(
                "prosumer {}: demand and pv must be finite and nonnegative",
                self.id
            )));
        }
        Ok(())
    }

    pub fn hours(&self) -> usize {
        self.demand_kw.len()
    }
}

/// Retail, feed-in and wholesale prices ($/kWh).
#[derive(Debug, Clone, PartialEq)]
pub struct Tariffs {
    /// Hourly time-of-use retail price.
    pub tou: Vec<f64>,
    /// Flat feed-in tariff.
    pub fit: f64,
    /// Hourly realized wholesale (spot) price. May be negative.
    pub spot: Vec<f64>,
    /// `spot_forecast[t]` is the price predicted at hour `t` for hour `t + 1`.
    pub spot_forecast: Vec<f64>,
}

impl Tariffs {
    pub fn validate(&self) -> Result<()> {
        if self.tou.len() != self.spot.len() || self.spot.len() != self.spot_forecast.len() {
            return Err(Error::Config(format!(
                "tariff series misaligned: tou {}, spot {}, forecast {}",
                self.tou.len(),
                self.spot.len(),
                self.spot_forecast.len()
            )));
        }
        if !self.fit.is_finite() {
            return Err(Error::Config("feed-in tariff must be finite".into()));
        }
        if self.tou.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("TOU prices must be finite and >= 0".into()));
        }
        if self.spot.iter().chain(&self.spot_forecast).any(|p| !p.is_finite()) {
            return Err(Error::Config("spot prices must be finite".into()));
        }
        Ok(())
    }

    pub fn hours(&self) -> usize {
        self.spot.len()
    }
}

/// How the market trading term enters the SES revenue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TradeConvention {
    /// Sell revenue minus buy cost at the spot price.
    Cashflow,
    /// λ·(P_ch·η_ch − P_dis/η_dis): buying is positive-weighted.
    AsPrinted,
}

/// Parameters of the SES balance, virtual operation and action bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SesConfig {
    pub eta_ch: f64,
    /// Discharge divisor (≥ 1).
    pub eta_dis: f64,
    pub beta_fit: f64,
    pub beta_tou: f64,
    pub sdr_up: f64,
    pub sdr_low: f64,
    pub soc_up: f64,
    pub soc_low: f64,
    pub ao_up: f64,
    pub ao_low: f64,
    /// Degradation slope in percent of capital per kWh-cycle.
    ///
    /// Not a published value: 0.5 % per 100 cycles, i.e. 0.005 % per cycle.
    pub k_e: f64,
    /// Unit capital cost of the household batteries ($/kWh). Not a published value.
    pub gamma_ses: f64,
    pub xi_pro: f64,
    pub xi_esp: f64,
    pub alpha_dps_max: f64,
    pub alpha_wtd_min: f64,
    /// Trailing window (hours) for min-max normalization of the arbitrage signal.
    pub ao_window_hours: usize,
    pub trade_convention: TradeConvention,
}

impl Default for SesConfig {
    fn default() -> Self {
        Self {
            eta_ch: 0.95,
            eta_dis: 1.05,
            beta_fit: 0.8,
            beta_tou: 1.2,
            sdr_up: 0.9,
            sdr_low: 0.1,
            soc_up: 0.9,
            soc_low: 0.1,
            ao_up: 0.85,
            ao_low: 0.15,
            k_e: 0.005,
            gamma_ses: 300.0,
            xi_pro: 0.3,
            xi_esp: 0.3,
            alpha_dps_max: 1.6,
            alpha_wtd_min: 0.7,
            ao_window_hours: 30 * HOURS_PER_DAY,
            trade_convention: TradeConvention::Cashflow,
        }
    }
}

impl SesConfig {
    /// η^{adm} = η^{ch} / η^{dis}.
    pub fn eta_adm(&self) -> f64 {
        self.eta_ch / self.eta_dis
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.into()));
        if !(self.eta_ch > 0.0 && self.eta_ch <= 1.0 && self.eta_dis >= 1.0) {
            return err("require 0 < eta_ch <= 1 <= eta_dis");
        }
        if !(self.beta_fit < 1.0 && self.beta_tou > 1.0) {
            return err("require beta_fit < 1 < beta_tou");
        }
        for (name, low, up) in [
            ("sdr", self.sdr_low, self.sdr_up),
            ("soc", self.soc_low, self.soc_up),
            ("ao", self.ao_low, self.ao_up),
        ] {
            if !((0.0..=1.0).contains(&low) && (0.0..=1.0).contains(&up) && low < up) {
                return Err(Error::Config(format!(
                    "{name} thresholds must satisfy 0 <= low < up <= 1 (got {low}, {up})"
                )));
            }
        }
        if !(self.k_e >= 0.0 && self.gamma_ses >= 0.0) {
            return err("k_e and gamma_ses must be >= 0");
        }
        if !((0.0..=1.0).contains(&self.xi_pro) && (0.0..=1.0).contains(&self.xi_esp)) {
            return err("xi_pro and xi_esp must lie in [0, 1]");
        }
        if !(self.alpha_dps_max >= 1.0) {
            return err("alpha_dps_max must be >= 1");
        }
        if !(self.alpha_wtd_min > 0.0 && self.alpha_wtd_min <= 1.0) {
            return err("alpha_wtd_min must lie in (0, 1]");
        }
        if self.ao_window_hours == 0 {
            return err("ao_window_hours must be > 0");
        }
        Ok(())
    }
}

/// Aggregate storage state of the SES.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SesState {
    pub energy_kwh: f64,
    pub capacity_kwh: f64,
    pub max_charge_kw: f64,
    pub max_discharge_kw: f64,
}

impl SesState {
    pub fn soc(&self) -> f64 {
        self.energy_kwh / self.capacity_kwh
    }
}

/// Pools the active prosumers' batteries into one SES, half full.
pub fn aggregate_ses(prosumers: &[Prosumer]) -> Result<SesState> {
    let mut capacity = 0.0;
    let mut power = 0.0;
    let mut n = 0usize;
    for p in prosumers.iter().filter(|p| p.active) {
        capacity += p.ess_capacity_kwh;
        power += p.ess_power_kw;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Config("no active prosumers to aggregate".into()));
    }
    Ok(SesState {
        energy_kwh: 0.5 * capacity,
        capacity_kwh: capacity,
        max_charge_kw: power,
        max_discharge_kw: power,
    })
}

/// Hourly deposit/withdrawal coefficients (α^{dps}, α^{wtd}).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwsCoefficients {
    pub alpha_dps: f64,
    pub alpha_wtd: f64,
}

impl DwsCoefficients {
    pub const NEUTRAL: Self = Self { alpha_dps: 1.0, alpha_wtd: 1.0 };
}

/// Market exchange for one hour (kW). At most one side is positive.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Trade {
    pub charge_kw: f64,
    pub discharge_kw: f64,
}

impl Trade {
    pub const NONE: Self = Self { charge_kw: 0.0, discharge_kw: 0.0 };

    /// Nets simultaneous buy and sell requests: the larger side keeps the difference.
    pub fn netted(charge_kw: f64, discharge_kw: f64) -> Self {
        let (c, d) = (charge_kw.max(0.0), discharge_kw.max(0.0));
        if c >= d {
            Self { charge_kw: c - d, discharge_kw: 0.0 }
        } else {
            Self { charge_kw: 0.0, discharge_kw: d - c }
        }
    }
}
