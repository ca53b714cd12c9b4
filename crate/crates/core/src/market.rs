//! SES-side economics: storage dynamics, market trading, degradation,
//! virtual-operation cash flows, prosumer bills and the daily objective.

use alloc::vec::Vec;
use core::ops::Range;

use crate::domain::{Prosumer, SesConfig, SesState, Trade, TradeConvention, DT_HOURS};
use crate::dws::HourFlows;
use crate::{Error, Result};

/// Signed storage energy change for the given physical flows and trade.
pub fn energy_delta(flows: &HourFlows, trade: Trade, cfg: &SesConfig) -> f64 {
    let inflow = (flows.physical_deposit() + trade.charge_kw) * cfg.eta_ch;
    let outflow = (flows.physical_withdraw() + trade.discharge_kw) / cfg.eta_dis;
    (inflow - outflow) * DT_HOURS
}

/// Outcome of one storage step after feasibility repair.
#[derive(Debug, Clone, PartialEq)]
pub struct SocStep {
    pub ses: SesState,
    /// Flows with any repair-induced virtual routing applied.
    pub flows: HourFlows,
    /// Trade after curtailment.
    pub trade: Trade,
    /// Energy change actually applied (kWh).
    pub delta_kwh: f64,
}

/// Advances the SES by one hour.
///
/// When the requested flows would break a power cap or the energy bounds, the
/// market trade is curtailed first; prosumer flows are then moved to the
/// market pro rata until the step is feasible.
pub fn step_soc(ses: &SesState, flows: &HourFlows, trade: Trade, cfg: &SesConfig) -> Result<SocStep> {
    if !(trade.charge_kw >= 0.0 && trade.discharge_kw >= 0.0) {
        return Err(Error::Contract("trade powers must be >= 0".into()));
    }
    if trade.charge_kw > 0.0 && trade.discharge_kw > 0.0 {
        return Err(Error::Contract("trade cannot charge and discharge in the same hour".into()));
    }
    let mut f = flows.clone();
    let mut tr = trade;

    let dep = f.physical_deposit();
    if dep > ses.max_charge_kw {
        f.reroute_deposits(1.0 - ses.max_charge_kw / dep);
    }
    tr.charge_kw = tr.charge_kw.min((ses.max_charge_kw - f.physical_deposit()).max(0.0));

    let wtd = f.physical_withdraw();
    if wtd > ses.max_discharge_kw {
        f.reroute_withdrawals(1.0 - ses.max_discharge_kw / wtd);
    }
    tr.discharge_kw = tr.discharge_kw.min((ses.max_discharge_kw - f.physical_withdraw()).max(0.0));

    let projected = ses.energy_kwh + energy_delta(&f, tr, cfg);
    if projected > ses.capacity_kwh {
        let mut excess = projected - ses.capacity_kwh;
        let cut = (excess / (cfg.eta_ch * DT_HOURS)).min(tr.charge_kw);
        tr.charge_kw -= cut;
        excess -= cut * cfg.eta_ch * DT_HOURS;
        let dep_energy = f.physical_deposit() * cfg.eta_ch * DT_HOURS;
        if excess > 0.0 && dep_energy > 0.0 {
            f.reroute_deposits((excess / dep_energy).min(1.0));
        }
    } else if projected < 0.0 {
        let mut deficit = -projected;
        let cut = (deficit * cfg.eta_dis / DT_HOURS).min(tr.discharge_kw);
        tr.discharge_kw -= cut;
        deficit -= cut / cfg.eta_dis * DT_HOURS;
        let wtd_energy = f.physical_withdraw() / cfg.eta_dis * DT_HOURS;
        if deficit > 0.0 && wtd_energy > 0.0 {
            f.reroute_withdrawals((deficit / wtd_energy).min(1.0));
        }
    }

    let delta = energy_delta(&f, tr, cfg);
    let mut next = *ses;
    next.energy_kwh = (ses.energy_kwh + delta).clamp(0.0, ses.capacity_kwh);
    Ok(SocStep { ses: next, flows: f, trade: tr, delta_kwh: delta })
}

/// Trading term exactly as printed: λ·(P^{ch}·η^{ch} − P^{dis}/η^{dis})·Δt.
pub fn trade_revenue(trade: Trade, spot: f64, cfg: &SesConfig) -> f64 {
    spot * (trade.charge_kw * cfg.eta_ch - trade.discharge_kw / cfg.eta_dis) * DT_HOURS
}

/// Sell revenue minus buy cost: λ·(P^{dis} − P^{ch})·Δt.
pub fn arbitrage_cashflow(trade: Trade, spot: f64) -> f64 {
    spot * (trade.discharge_kw - trade.charge_kw) * DT_HOURS
}

/// The trading term that enters R_SES under the configured convention.
pub fn trading_term(trade: Trade, spot: f64, cfg: &SesConfig) -> f64 {
    match cfg.trade_convention {
        TradeConvention::Cashflow => arbitrage_cashflow(trade, spot),
        TradeConvention::AsPrinted => trade_revenue(trade, spot, cfg),
    }
}

/// Linear cycle-degradation cost of all physical discharge this hour.
pub fn degradation_cost(trade: Trade, flows: &HourFlows, cfg: &SesConfig) -> f64 {
    cfg.k_e / 100.0 * cfg.gamma_ses * (trade.discharge_kw + flows.physical_withdraw()) * DT_HOURS
}

/// (R^{VS}, C^{VS}): virtual deposits sold and virtual withdrawals bought at spot.
pub fn virtual_cash(flows: &HourFlows, spot: f64) -> (f64, f64) {
    (
        flows.total_virtual_deposit() * spot * DT_HOURS,
        flows.total_virtual_withdraw() * spot * DT_HOURS,
    )
}

/// Cash flows of one SES hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HourResult {
    pub step: SocStep,
    /// Trading term under the configured convention.
    pub trade_revenue: f64,
    pub trade_as_printed: f64,
    pub arbitrage_cashflow: f64,
    pub degradation_cost: f64,
    pub virtual_revenue: f64,
    pub virtual_cost: f64,
}

/// Storage step plus every SES cash flow for the hour.
pub fn settle_hour(
    ses: &SesState,
    flows: &HourFlows,
    trade: Trade,
    spot: f64,
    cfg: &SesConfig,
) -> Result<HourResult> {
    let step = step_soc(ses, flows, trade, cfg)?;
    let (virtual_revenue, virtual_cost) = virtual_cash(&step.flows, spot);
    Ok(HourResult {
        trade_revenue: trading_term(step.trade, spot, cfg),
        trade_as_printed: trade_revenue(step.trade, spot, cfg),
        arbitrage_cashflow: arbitrage_cashflow(step.trade, spot),
        degradation_cost: degradation_cost(step.trade, &step.flows, cfg),
        virtual_revenue,
        virtual_cost,
        step,
    })
}

/// Hour-by-hour replay of a household running its own battery greedily.
#[derive(Debug, Clone, PartialEq)]
pub struct StandaloneTrace {
    /// Battery energy at the start of each hour.
    pub energy_kwh: Vec<f64>,
    /// Energy delivered from the battery to the house each hour.
    pub delivered_kwh: Vec<f64>,
    /// Retail purchase cost each hour (the baseline bill contribution).
    pub hourly_bill: Vec<f64>,
    /// What the same hour would cost with no battery at all.
    pub no_storage_bill: Vec<f64>,
}

/// Self-consumption dispatch: charge surplus, discharge deficit, within the
/// household battery's energy and power limits. Demand the battery cannot
/// cover is bought at the TOU price.
pub fn standalone_trace(
    p: &Prosumer,
    tou: &[f64],
    initial_energy_kwh: f64,
    cfg: &SesConfig,
) -> StandaloneTrace {
    let n = p.hours().min(tou.len());
    let mut e = initial_energy_kwh.clamp(0.0, p.ess_capacity_kwh);
    let mut out = StandaloneTrace {
        energy_kwh: Vec::with_capacity(n),
        delivered_kwh: Vec::with_capacity(n),
        hourly_bill: Vec::with_capacity(n),
        no_storage_bill: Vec::with_capacity(n),
    };
    for t in 0..n {
        out.energy_kwh.push(e);
        let (d, g) = (p.demand_kw[t], p.pv_kw[t]);
        let mut delivered = 0.0;
        let mut bill = 0.0;
        if g > d {
            let room = (p.ess_capacity_kwh - e) / (cfg.eta_ch * DT_HOURS);
            let charge = (g - d).min(p.ess_power_kw).min(room.max(0.0));
            e = (e + charge * cfg.eta_ch * DT_HOURS).min(p.ess_capacity_kwh);
        } else if d > g {
            delivered = (d - g).min(p.ess_power_kw).min(e * cfg.eta_dis / DT_HOURS);
            e = (e - delivered / cfg.eta_dis * DT_HOURS).max(0.0);
            bill = tou[t] * (d - g - delivered) * DT_HOURS;
        }
        out.delivered_kwh.push(delivered);
        out.hourly_bill.push(bill);
        out.no_storage_bill.push(tou[t] * (d - g).max(0.0) * DT_HOURS);
    }
    out
}

/// B^{ORI}_j over `hours` of a standalone trace.
pub fn baseline_bill(trace: &StandaloneTrace, hours: Range<usize>) -> f64 {
    trace.hourly_bill[hours].iter().sum()
}

/// Grid purchase covering demand left after PV and the DWS withdrawal.
pub fn net_load_kw(demand_kw: f64, pv_kw: f64, withdraw_kw: f64) -> f64 {
    (demand_kw - pv_kw - withdraw_kw).max(0.0)
}

/// One prosumer's bill for a settled day.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BillStatement {
    /// C^{NET}_j.
    pub net_cost: f64,
    /// R^{CR}_j.
    pub credit_revenue: f64,
    /// C^{CR}_j.
    pub credit_cost: f64,
    /// B_j.
    pub bill: f64,
    /// B^{ORI}_j.
    pub baseline: f64,
    /// R_{bill,j}.
    pub reduction: f64,
}

impl BillStatement {
    pub fn new(net_cost: f64, credit_revenue: f64, credit_cost: f64, baseline: f64) -> Self {
        let bill = net_cost - credit_revenue + credit_cost;
        Self { net_cost, credit_revenue, credit_cost, bill, baseline, reduction: baseline - bill }
    }
}

/// Day totals of every objective component.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DayTotals {
    /// R^{TRD} under the configured convention.
    pub trade_revenue: f64,
    pub trade_as_printed: f64,
    pub arbitrage_cashflow: f64,
    pub credit_revenue: f64,
    pub credit_cost: f64,
    pub virtual_revenue: f64,
    pub virtual_cost: f64,
    pub degradation_cost: f64,
    pub bills: Vec<BillStatement>,
}

impl DayTotals {
    /// R_SES = R^{TRD} + R^{CR} − C^{CR} + R^{VS} − C^{VS} − C^{SES}.
    pub fn ses_profit(&self) -> f64 {
        self.trade_revenue + self.credit_revenue - self.credit_cost + self.virtual_revenue
            - self.virtual_cost
            - self.degradation_cost
    }

    pub fn total_bill_reduction(&self) -> f64 {
        self.bills.iter().map(|b| b.reduction).sum()
    }
}

/// Obj = R_SES + Σ_j R_{bill,j}.
pub fn objective(day: &DayTotals) -> f64 {
    day.ses_profit() + day.total_bill_reduction()
}
