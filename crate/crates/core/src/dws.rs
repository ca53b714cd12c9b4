//! Credit-based deposit and withdrawal service.
//!
//! Prosumers keep their usual storage habits: surplus PV is deposited, deficits
//! are withdrawn while their credit is positive. The ESP scales deposits and
//! withdrawals with hourly coefficients, may serve either side virtually from
//! the spot market, and settles leftover credit at the end of each day.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{DwsCoefficients, Prosumer, SesConfig, SesState, Tariffs, DT_HOURS};
use crate::{Error, Result};

/// Requested deposit and withdrawal (kW) of one household for one hour.
///
/// Deposits absorb surplus PV up to the battery power limit. Withdrawals cover
/// deficits only while the credit is strictly positive.
pub fn prosumer_flows(demand_kw: f64, pv_kw: f64, power_kw: f64, credit: f64) -> (f64, f64) {
    if pv_kw > demand_kw {
        ((pv_kw - demand_kw).min(power_kw), 0.0)
    } else if demand_kw > pv_kw && credit > 0.0 {
        (0.0, (demand_kw - pv_kw).min(power_kw))
    } else {
        (0.0, 0.0)
    }
}

/// Convenience wrapper reading hour `t` of a prosumer's series.
pub fn prosumer_flows_at(p: &Prosumer, t: usize, credit: f64) -> (f64, f64) {
    prosumer_flows(p.demand_kw[t], p.pv_kw[t], p.ess_power_kw, credit)
}

/// Per-prosumer flows for one hour. Index `j` refers to the participant order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HourFlows {
    pub deposit: Vec<f64>,
    pub withdraw: Vec<f64>,
    pub virtual_deposit: Vec<f64>,
    pub virtual_withdraw: Vec<f64>,
}

impl HourFlows {
    /// Flows with nothing routed virtually.
    pub fn physical(deposit: Vec<f64>, withdraw: Vec<f64>) -> Self {
        let n = deposit.len();
        debug_assert_eq!(n, withdraw.len());
        Self { deposit, withdraw, virtual_deposit: vec![0.0; n], virtual_withdraw: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.deposit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deposit.is_empty()
    }

    pub fn total_deposit(&self) -> f64 {
        self.deposit.iter().sum()
    }

    pub fn total_withdraw(&self) -> f64 {
        self.withdraw.iter().sum()
    }

    pub fn total_virtual_deposit(&self) -> f64 {
        self.virtual_deposit.iter().sum()
    }

    pub fn total_virtual_withdraw(&self) -> f64 {
        self.virtual_withdraw.iter().sum()
    }

    /// Σ_j (P^{dps} − P^{dps,V}).
    pub fn physical_deposit(&self) -> f64 {
        self.deposit.iter().zip(&self.virtual_deposit).map(|(d, v)| d - v).sum()
    }

    /// Σ_j (P^{wtd} − P^{wtd,V}).
    pub fn physical_withdraw(&self) -> f64 {
        self.withdraw.iter().zip(&self.virtual_withdraw).map(|(w, v)| w - v).sum()
    }

    /// Moves `fraction` of every remaining physical deposit to the market.
    pub fn reroute_deposits(&mut self, fraction: f64) {
        let f = fraction.clamp(0.0, 1.0);
        for (d, v) in self.deposit.iter().zip(self.virtual_deposit.iter_mut()) {
            *v = (*v + (d - *v) * f).min(*d);
        }
    }

    /// Moves `fraction` of every remaining physical withdrawal to the market.
    pub fn reroute_withdrawals(&mut self, fraction: f64) {
        let f = fraction.clamp(0.0, 1.0);
        for (w, v) in self.withdraw.iter().zip(self.virtual_withdraw.iter_mut()) {
            *v = (*v + (w - *v) * f).min(*w);
        }
    }
}

/// Which side of the service was routed to the market this hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VirtualTriggers {
    pub storage: bool,
    pub extraction: bool,
}

impl VirtualTriggers {
    pub fn any(&self) -> bool {
        self.storage || self.extraction
    }
}

/// Who pays in a day-end settlement line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SettlementSide {
    /// Negative credit: the prosumer buys the overdraw from the SES.
    ProsumerPays,
    /// Positive credit: the SES buys the leftover from the prosumer.
    ProsumerReceives,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settlement {
    pub day: u32,
    pub prosumer: usize,
    pub credit: f64,
    pub amount: f64,
    pub side: SettlementSide,
}

/// Result of one day-end settlement.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DaySettlement {
    /// R^{CR}: paid to the SES by prosumers with negative credit.
    pub ses_revenue: f64,
    /// C^{CR}: paid by the SES to prosumers with positive credit.
    pub ses_cost: f64,
    /// R^{CR}_j: what each prosumer receives.
    pub prosumer_revenue: Vec<f64>,
    /// C^{CR}_j: what each prosumer pays.
    pub prosumer_cost: Vec<f64>,
    pub lambda_dps: f64,
    pub lambda_wtd: f64,
}

/// Running credits Γ_{j,t} (kWh-credits) and the settlement history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CreditLedger {
    credit: Vec<f64>,
    settlements: Vec<Settlement>,
}

impl CreditLedger {
    pub fn new(n: usize) -> Self {
        Self { credit: vec![0.0; n], settlements: Vec::new() }
    }

    pub fn credits(&self) -> &[f64] {
        &self.credit
    }

    pub fn settlements(&self) -> &[Settlement] {
        &self.settlements
    }

    /// Γ_{j,t+1} = Γ_{j,t} + (α^{dps}·P^{dps}·η^{adm} − α^{wtd}·P^{wtd})·Δt.
    ///
    /// Uses the requested flows: a prosumer's credit does not depend on
    /// whether the ESP served the request physically or virtually.
    pub fn update_credit(
        &mut self,
        flows: &HourFlows,
        coeffs: DwsCoefficients,
        cfg: &SesConfig,
    ) -> Result<()> {
        check_coefficients(coeffs, cfg)?;
        if flows.len() != self.credit.len() {
            return Err(Error::Dimension { expected: self.credit.len(), got: flows.len() });
        }
        let eta_adm = cfg.eta_adm();
        for ((g, d), w) in self.credit.iter_mut().zip(&flows.deposit).zip(&flows.withdraw) {
            *g += credit_increment(*d, *w, coeffs, eta_adm);
        }
        Ok(())
    }

    /// Day-end settlement of every open credit, which resets all credits to zero.
    ///
    /// `tou_average` is the day's reference retail price λ̄^{TOU}.
    pub fn settle_day(
        &mut self,
        day: u32,
        tou_average: f64,
        fit: f64,
        cfg: &SesConfig,
    ) -> DaySettlement {
        let lambda_wtd = cfg.beta_tou * tou_average;
        let lambda_dps = cfg.beta_fit * fit;
        let n = self.credit.len();
        let mut out = DaySettlement {
            prosumer_revenue: vec![0.0; n],
            prosumer_cost: vec![0.0; n],
            lambda_dps,
            lambda_wtd,
            ..Default::default()
        };
        for (j, g) in self.credit.iter_mut().enumerate() {
            let credit = *g;
            if credit < 0.0 {
                let amount = -credit * lambda_wtd;
                out.ses_revenue += amount;
                out.prosumer_cost[j] = amount;
                self.settlements.push(Settlement {
                    day,
                    prosumer: j,
                    credit,
                    amount,
                    side: SettlementSide::ProsumerPays,
                });
            } else if credit > 0.0 {
                let amount = credit * lambda_dps;
                out.ses_cost += amount;
                out.prosumer_revenue[j] = amount;
                self.settlements.push(Settlement {
                    day,
                    prosumer: j,
                    credit,
                    amount,
                    side: SettlementSide::ProsumerReceives,
                });
            }
            *g = 0.0;
        }
        out
    }
}

/// One prosumer's credit increment for one hour.
pub fn credit_increment(deposit: f64, withdraw: f64, coeffs: DwsCoefficients, eta_adm: f64) -> f64 {
    (coeffs.alpha_dps * deposit * eta_adm - coeffs.alpha_wtd * withdraw) * DT_HOURS
}

const COEFF_TOL: f64 = 1e-12;

pub fn check_coefficients(c: DwsCoefficients, cfg: &SesConfig) -> Result<()> {
    let dps_ok = c.alpha_dps >= 1.0 - COEFF_TOL && c.alpha_dps <= cfg.alpha_dps_max + COEFF_TOL;
    let wtd_ok = c.alpha_wtd >= cfg.alpha_wtd_min - COEFF_TOL && c.alpha_wtd <= 1.0 + COEFF_TOL;
    if dps_ok && wtd_ok {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "coefficients out of bounds: alpha_dps={} (allowed [1, {}]), alpha_wtd={} (allowed [{}, 1])",
            c.alpha_dps, cfg.alpha_dps_max, c.alpha_wtd, cfg.alpha_wtd_min
        )))
    }
}

/// The three normalized state factors plus their raw values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factors {
    pub f_sdr: f64,
    pub f_soc: f64,
    pub f_ao: f64,
    pub raw_sdr: f64,
    /// λ^{spot,Pred}_{t+1} − λ^{spot,Real}_t ($/kWh).
    pub raw_ao: f64,
}

/// Raw arbitrage signal at hour `t`. Reads only data known at `t`.
pub fn raw_arbitrage(tariffs: &Tariffs, t: usize) -> f64 {
    tariffs.spot_forecast[t] - tariffs.spot[t]
}

/// Min-max position of `value` within `[lo, hi]`, clipped; 0.5 on a flat window.
pub fn min_max_position(value: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span > 1e-12 {
        ((value - lo) / span).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

/// Normalized supply-demand ratio and storage state for the given flows.
pub fn sdr_soc(ses: &SesState, flows: &HourFlows) -> Result<(f64, f64, f64)> {
    if !(ses.max_charge_kw > 0.0) {
        return Err(Error::Config("SES power cap must be > 0".into()));
    }
    let raw_sdr = (flows.total_deposit() - flows.total_withdraw()) / ses.max_charge_kw;
    let f_sdr = ((raw_sdr + 1.0) / 2.0).clamp(0.0, 1.0);
    let f_soc = (ses.energy_kwh / ses.capacity_kwh).clamp(0.0, 1.0);
    Ok((raw_sdr, f_sdr, f_soc))
}

/// Computes the factors at hour `t`, normalizing the arbitrage signal over
/// the trailing `window_hours` hours (inclusive of `t`).
pub fn compute_factors(
    ses: &SesState,
    flows: &HourFlows,
    tariffs: &Tariffs,
    t: usize,
    window_hours: usize,
) -> Result<Factors> {
    if tariffs.spot_forecast.is_empty() {
        return Err(Error::Empty("spot price forecast"));
    }
    if t >= tariffs.spot_forecast.len() || t >= tariffs.spot.len() {
        return Err(Error::OutOfRange(format!("hour {t} beyond price series")));
    }
    let (raw_sdr, f_sdr, f_soc) = sdr_soc(ses, flows)?;
    let raw_ao = raw_arbitrage(tariffs, t);
    let start = (t + 1).saturating_sub(window_hours.max(1));
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in start..=t {
        let v = raw_arbitrage(tariffs, k);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let f_ao = min_max_position(raw_ao, lo, hi);
    Ok(Factors { f_sdr, f_soc, f_ao, raw_sdr, raw_ao })
}

/// Normalized arbitrage signal for every hour, computed with monotone deques.
///
/// Produces exactly the values [`compute_factors`] would, in O(hours).
pub fn arbitrage_series(tariffs: &Tariffs, window_hours: usize) -> Vec<f64> {
    use alloc::collections::VecDeque;
    let n = tariffs.spot.len().min(tariffs.spot_forecast.len());
    let w = window_hours.max(1);
    let raw: Vec<f64> = (0..n).map(|t| raw_arbitrage(tariffs, t)).collect();
    let mut mins: VecDeque<usize> = VecDeque::new();
    let mut maxs: VecDeque<usize> = VecDeque::new();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        while mins.back().is_some_and(|&k| raw[k] >= raw[t]) {
            mins.pop_back();
        }
        mins.push_back(t);
        while maxs.back().is_some_and(|&k| raw[k] <= raw[t]) {
            maxs.pop_back();
        }
        maxs.push_back(t);
        let start = (t + 1).saturating_sub(w);
        while mins.front().is_some_and(|&k| k < start) {
            mins.pop_front();
        }
        while maxs.front().is_some_and(|&k| k < start) {
            maxs.pop_front();
        }
        out.push(min_max_position(raw[t], raw[mins[0]], raw[maxs[0]]));
    }
    out
}

/// Applies the virtual storage / extraction triggers.
///
/// Routing is all-or-nothing per hour and direction: when a storage trigger
/// fires every deposit goes to the market, likewise for withdrawals.
pub fn route_virtual(flows: &HourFlows, f: &Factors, cfg: &SesConfig) -> (HourFlows, VirtualTriggers) {
    let storage = f.f_sdr > cfg.sdr_up || f.f_soc > cfg.soc_up || f.f_ao > cfg.ao_up;
    let extraction = f.f_sdr < cfg.sdr_low || f.f_soc < cfg.soc_low || f.f_ao < cfg.ao_low;
    let mut out = flows.clone();
    out.virtual_deposit = if storage { flows.deposit.clone() } else { vec![0.0; flows.len()] };
    out.virtual_withdraw = if extraction { flows.withdraw.clone() } else { vec![0.0; flows.len()] };
    (out, VirtualTriggers { storage, extraction })
}

/// G_dw = mean over hours of α^{dps}/α^{wtd}.
pub fn deposit_withdraw_gain(history: &[DwsCoefficients]) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Empty("coefficient history"));
    }
    let mut sum = 0.0;
    for c in history {
        if !(c.alpha_wtd > 0.0) {
            return Err(Error::Contract(format!("alpha_wtd must be > 0, got {}", c.alpha_wtd)));
        }
        sum += c.alpha_dps / c.alpha_wtd;
    }
    Ok(sum / history.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SesConfig {
        SesConfig::default()
    }

    fn ses(energy: f64) -> SesState {
        SesState { energy_kwh: energy, capacity_kwh: 30.0, max_charge_kw: 15.0, max_discharge_kw: 15.0 }
    }

    #[test]
    fn flows_follow_surplus_and_deficit() {
        assert_eq!(prosumer_flows(2.0, 5.0, 7.5, 0.0), (3.0, 0.0));
        assert_eq!(prosumer_flows(5.0, 2.0, 7.5, 1.0), (0.0, 3.0));
        assert_eq!(prosumer_flows(5.0, 2.0, 7.5, 0.0), (0.0, 0.0));
        assert_eq!(prosumer_flows(0.0, 12.0, 7.5, 0.0), (7.5, 0.0));
        assert_eq!(prosumer_flows(3.0, 3.0, 7.5, 5.0), (0.0, 0.0));
    }

    #[test]
    fn credit_examples() {
        let c = cfg();
        let mut l = CreditLedger::new(1);
        let f = HourFlows::physical(vec![2.0], vec![0.0]);
        l.update_credit(&f, DwsCoefficients { alpha_dps: 1.2, alpha_wtd: 1.0 }, &c).unwrap();
        assert!((l.credits()[0] - 1.2 * 2.0 * 0.95 / 1.05).abs() < 1e-12);
        assert!((l.credits()[0] - 2.1714).abs() < 1e-4);

        let mut l = CreditLedger { credit: vec![2.0], settlements: vec![] };
        let f = HourFlows::physical(vec![0.0], vec![1.0]);
        l.update_credit(&f, DwsCoefficients { alpha_dps: 1.0, alpha_wtd: 0.9 }, &c).unwrap();
        assert!((l.credits()[0] - 1.1).abs() < 1e-12);

        let f = HourFlows::physical(vec![0.0], vec![0.0]);
        l.update_credit(&f, DwsCoefficients { alpha_dps: 1.5, alpha_wtd: 0.8 }, &c).unwrap();
        assert!((l.credits()[0] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn credit_rejects_out_of_bounds_coefficients() {
        let c = cfg();
        let mut l = CreditLedger::new(1);
        let f = HourFlows::physical(vec![1.0], vec![0.0]);
        let bad = DwsCoefficients { alpha_dps: 0.9, alpha_wtd: 1.0 };
        assert!(matches!(l.update_credit(&f, bad, &c), Err(Error::Contract(_))));
        let bad = DwsCoefficients { alpha_dps: 1.0, alpha_wtd: 1.1 };
        assert!(matches!(l.update_credit(&f, bad, &c), Err(Error::Contract(_))));
        assert_eq!(l.credits()[0], 0.0);
    }

    #[test]
    fn factors_edge_cases() {
        let tariffs = Tariffs {
            tou: vec![0.3; 3],
            fit: 0.1,
            spot: vec![0.1, 0.2, 0.3],
            spot_forecast: vec![0.1, 0.2, 0.3],
        };
        let f = HourFlows::physical(vec![2.0, 1.0], vec![1.0, 2.0]);
        let fac = compute_factors(&ses(30.0), &f, &tariffs, 2, 720).unwrap();
        assert_eq!(fac.raw_sdr, 0.0);
        assert_eq!(fac.f_sdr, 0.5);
        assert_eq!(fac.f_soc, 1.0);
        assert_eq!(fac.raw_ao, 0.0);
    }

    #[test]
    fn factors_require_forecast() {
        let tariffs = Tariffs { tou: vec![], fit: 0.1, spot: vec![], spot_forecast: vec![] };
        let f = HourFlows::physical(vec![], vec![]);
        assert!(matches!(compute_factors(&ses(1.0), &f, &tariffs, 0, 24), Err(Error::Empty(_))));
    }

    #[test]
    fn sdr_spans_unit_interval() {
        let all_in = HourFlows::physical(vec![7.5, 7.5], vec![0.0, 0.0]);
        let all_out = HourFlows::physical(vec![0.0, 0.0], vec![7.5, 7.5]);
        assert_eq!(sdr_soc(&ses(10.0), &all_in).unwrap().1, 1.0);
        assert_eq!(sdr_soc(&ses(10.0), &all_out).unwrap().1, 0.0);
    }

    #[test]
    fn arbitrage_series_matches_direct_window() {
        let spot: Vec<f64> = (0..200).map(|t| libm::sin(t as f64 * 0.37) * 0.1 + 0.1).collect();
        let forecast: Vec<f64> = (0..200).map(|t| libm::cos(t as f64 * 0.11) * 0.05 + 0.1).collect();
        let tariffs = Tariffs { tou: vec![0.2; 200], fit: 0.05, spot, spot_forecast: forecast };
        let flows = HourFlows::physical(vec![0.0], vec![0.0]);
        for w in [1, 5, 24, 300] {
            let series = arbitrage_series(&tariffs, w);
            for t in 0..200 {
                let direct = compute_factors(&ses(10.0), &flows, &tariffs, t, w).unwrap().f_ao;
                assert_eq!(series[t], direct, "window {w} hour {t}");
            }
        }
    }

    fn factors(sdr: f64, soc: f64, ao: f64) -> Factors {
        Factors { f_sdr: sdr, f_soc: soc, f_ao: ao, raw_sdr: 2.0 * sdr - 1.0, raw_ao: 0.0 }
    }

    #[test]
    fn virtual_routing_triggers() {
        let c = cfg();
        let f = HourFlows::physical(vec![3.0, 0.0], vec![0.0, 2.0]);
        let (r, t) = route_virtual(&f, &factors(0.5, 0.95, 0.5), &c);
        assert!(t.storage && !t.extraction);
        assert_eq!(r.virtual_deposit, vec![3.0, 0.0]);
        assert_eq!(r.virtual_withdraw, vec![0.0, 0.0]);

        let (r, t) = route_virtual(&f, &factors(0.5, 0.05, 0.5), &c);
        assert!(!t.storage && t.extraction);
        assert_eq!(r.virtual_withdraw, vec![0.0, 2.0]);
        assert_eq!(r.virtual_deposit, vec![0.0, 0.0]);

        let (r, t) = route_virtual(&f, &factors(0.5, 0.5, 0.5), &c);
        assert!(!t.any());
        assert_eq!(r.physical_deposit(), 3.0);
        assert_eq!(r.physical_withdraw(), 2.0);
    }

    #[test]
    fn settlement_examples() {
        let c = cfg();
        let mut l = CreditLedger { credit: vec![-1.0, 2.0, 0.0], settlements: vec![] };
        let s = l.settle_day(0, 0.30, 0.10, &c);
        assert!((s.ses_revenue - 0.36).abs() < 1e-12);
        assert!((s.prosumer_cost[0] - 0.36).abs() < 1e-12);
        assert!((s.ses_cost - 0.16).abs() < 1e-12);
        assert!((s.prosumer_revenue[1] - 0.16).abs() < 1e-12);
        assert_eq!((s.prosumer_revenue[2], s.prosumer_cost[2]), (0.0, 0.0));
        assert!(l.credits().iter().all(|g| *g == 0.0));
        assert_eq!(l.settlements().len(), 2);
        assert_eq!(l.settlements()[0].side, SettlementSide::ProsumerPays);
    }

    #[test]
    fn gain_index() {
        let h = vec![DwsCoefficients { alpha_dps: 1.2, alpha_wtd: 0.9 }; 24];
        assert!((deposit_withdraw_gain(&h).unwrap() - 1.2 / 0.9).abs() < 1e-12);
        assert!((deposit_withdraw_gain(&h).unwrap() - 1.3333).abs() < 1e-4);
        assert_eq!(deposit_withdraw_gain(&[DwsCoefficients::NEUTRAL; 5]).unwrap(), 1.0);
        assert!(deposit_withdraw_gain(&[]).is_err());
        let zero = DwsCoefficients { alpha_dps: 1.0, alpha_wtd: 0.0 };
        assert!(deposit_withdraw_gain(&[zero]).is_err());
    }

    #[test]
    fn rerouting_never_exceeds_request() {
        let mut f = HourFlows::physical(vec![3.0, 1.0], vec![2.0, 0.5]);
        f.reroute_deposits(0.5);
        f.reroute_deposits(0.7);
        f.reroute_withdrawals(1.5);
        for j in 0..2 {
            assert!(f.virtual_deposit[j] <= f.deposit[j]);
            assert!(f.virtual_withdraw[j] <= f.withdraw[j]);
        }
        assert!((f.physical_deposit() - 4.0 * 0.5 * 0.3).abs() < 1e-12);
        assert_eq!(f.physical_withdraw(), 0.0);
    }
}
