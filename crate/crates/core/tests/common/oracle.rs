//! Brute-force recomputation of a simulated day from its hourly trace.
//!
//! Nothing here calls the accounting code under test: credits, settlement,
//! bills and the objective are rebuilt from raw flows, prices and
//! coefficients with the closed-form definitions.

#![allow(dead_code)]

use sesim_core::domain::{SesConfig, TradeConvention, HOURS_PER_DAY};
use sesim_core::env::{DayResult, HourRecord, SimContext};

/// Largest discrepancies found in one day.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DayCheck {
    /// $ quantities: credits×price, bills, settlement, objective.
    pub money: f64,
    /// kWh-credit balances.
    pub credit: f64,
    /// Σ hourly rewards against the recomputed objective.
    pub reward: f64,
    pub objective: f64,
}

impl DayCheck {
    pub fn merge(self, o: DayCheck) -> DayCheck {
        DayCheck {
            money: self.money.max(o.money),
            credit: self.credit.max(o.credit),
            reward: self.reward.max(o.reward),
            objective: self.objective,
        }
    }
}

fn trade_term(h: &HourRecord, cfg: &SesConfig) -> f64 {
    let (ch, dis) = (h.trade.charge_kw, h.trade.discharge_kw);
    match cfg.trade_convention {
        TradeConvention::Cashflow => h.spot * (dis - ch),
        TradeConvention::AsPrinted => h.spot * (ch * cfg.eta_ch - dis / cfg.eta_dis),
    }
}

pub fn check_day(ctx: &SimContext, d: &DayResult) -> DayCheck {
    let cfg = &ctx.cfg;
    let sc = &ctx.scenario;
    let n = d.participants.len();
    assert_eq!(d.records.len(), HOURS_PER_DAY, "day must be recorded");
    let eta_adm = cfg.eta_ch / cfg.eta_dis;

    let mut credit = vec![0.0; n];
    let mut credit_err: f64 = 0.0;
    let mut net_cost = vec![0.0; n];
    let mut baseline = vec![0.0; n];
    let (mut paid, mut energy) = (0.0, 0.0);
    let (mut r_trd, mut r_vs, mut c_vs, mut c_ses) = (0.0, 0.0, 0.0, 0.0);
    let mut reward_sum = 0.0;
    for h in &d.records {
        let t = h.hour;
        let q = &h.requested_flows;
        for k in 0..n {
            let j = d.participants[k];
            let p = &sc.prosumers[j];
            credit[k] += h.coeffs.alpha_dps * q.deposit[k] * eta_adm - h.coeffs.alpha_wtd * q.withdraw[k];
            credit_err = credit_err.max((credit[k] - h.credits[k]).abs());
            net_cost[k] += sc.tariffs.tou[t] * (p.demand_kw[t] - p.pv_kw[t] - q.withdraw[k]).max(0.0);
            baseline[k] += ctx.baselines[j].hourly_bill[t];
            paid += sc.tariffs.tou[t] * p.demand_kw[t];
            energy += p.demand_kw[t];
        }
        let f = &h.flows;
        let vdep: f64 = f.virtual_deposit.iter().sum();
        let vwtd: f64 = f.virtual_withdraw.iter().sum();
        let phys_wtd: f64 = f.withdraw.iter().sum::<f64>() - vwtd;
        r_trd += trade_term(h, cfg);
        r_vs += h.spot * vdep;
        c_vs += h.spot * vwtd;
        c_ses += cfg.k_e / 100.0 * cfg.gamma_ses * (h.trade.discharge_kw + phys_wtd);
        reward_sum += h.reward;
    }
    let tou_ref = if energy > 0.0 {
        paid / energy
    } else {
        let hours = d.day * HOURS_PER_DAY..(d.day + 1) * HOURS_PER_DAY;
        sc.tariffs.tou[hours].iter().sum::<f64>() / HOURS_PER_DAY as f64
    };
    let lambda_wtd = cfg.beta_tou * tou_ref;
    let lambda_dps = cfg.beta_fit * sc.tariffs.fit;

    let mut money: f64 = 0.0;
    let mut diff = |a: f64, b: f64| money = money.max((a - b).abs());
    diff(d.settlement.lambda_wtd, lambda_wtd);
    diff(d.settlement.lambda_dps, lambda_dps);
    let (mut r_cr, mut c_cr, mut bill_red) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let rev = credit[k].max(0.0) * lambda_dps;
        let cost = (-credit[k]).max(0.0) * lambda_wtd;
        r_cr += cost;
        c_cr += rev;
        let bill = net_cost[k] - rev + cost;
        bill_red += baseline[k] - bill;
        let s = &d.totals.bills[k];
        diff(d.settlement.prosumer_revenue[k], rev);
        diff(d.settlement.prosumer_cost[k], cost);
        diff(s.net_cost, net_cost[k]);
        diff(s.baseline, baseline[k]);
        diff(s.bill, bill);
        diff(s.reduction, baseline[k] - bill);
    }
    let t = &d.totals;
    diff(t.credit_revenue, r_cr);
    diff(t.credit_cost, c_cr);
    diff(t.trade_revenue, r_trd);
    diff(t.virtual_revenue, r_vs);
    diff(t.virtual_cost, c_vs);
    diff(t.degradation_cost, c_ses);
    let r_ses = r_trd + r_cr - c_cr + r_vs - c_vs - c_ses;
    let obj = r_ses + bill_red;
    diff(t.ses_profit(), r_ses);
    diff(t.total_bill_reduction(), bill_red);
    diff(d.objective(), obj);
    DayCheck { money, credit: credit_err, reward: (reward_sum - obj).abs(), objective: obj }
}

/// Worst feasibility and energy-balance errors of one recorded hour.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HourCheck {
    /// kWh by which the energy update misses the flow balance.
    pub balance: f64,
    /// Largest excess over a power cap or the energy bounds.
    pub violation: f64,
}

pub fn check_hour(h: &HourRecord, cfg: &SesConfig, capacity: f64, max_ch: f64, max_dis: f64) -> HourCheck {
    let f = &h.flows;
    let phys_dep: f64 = f.deposit.iter().zip(&f.virtual_deposit).map(|(a, b)| a - b).sum();
    let phys_wtd: f64 = f.withdraw.iter().zip(&f.virtual_withdraw).map(|(a, b)| a - b).sum();
    let delta = (phys_dep + h.trade.charge_kw) * cfg.eta_ch - (phys_wtd + h.trade.discharge_kw) / cfg.eta_dis;
    let balance = (h.energy_after - h.energy_before - delta).abs();
    let mut v: f64 = 0.0;
    v = v.max(phys_dep + h.trade.charge_kw - max_ch);
    v = v.max(phys_wtd + h.trade.discharge_kw - max_dis);
    v = v.max(h.energy_after - capacity).max(-h.energy_after);
    v = v.max(-h.trade.charge_kw).max(-h.trade.discharge_kw);
    v = v.max(h.trade.charge_kw.min(h.trade.discharge_kw));
    for k in 0..f.deposit.len() {
        v = v.max(f.virtual_deposit[k] - f.deposit[k]).max(-f.virtual_deposit[k]);
        v = v.max(f.virtual_withdraw[k] - f.withdraw[k]).max(-f.virtual_withdraw[k]);
    }
    HourCheck { balance, violation: v.max(0.0) }
}
