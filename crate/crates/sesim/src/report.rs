//! CSV reports. Every row starts with the seed and the config hash; floats
//! use Rust's shortest round-trip formatting so reruns compare byte-for-byte.

use std::path::Path;

use sesim_core::cnepr::PairOccupancy;
use sesim_core::env::DayResult;
use sesim_core::lifecycle::{LifecycleReport, Phase};
use sesim_core::matching::MatchOutcome;
use sesim_core::training::EpisodeStat;

use crate::IoError;

/// Row prefix shared by every report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunTag {
    /// A seed, or several joined with `+` for cross-seed summaries.
    pub seed: String,
    pub config_hash: String,
}

impl RunTag {
    pub fn new(seed: u64, config_hash: &str) -> Self {
        Self { seed: seed.to_string(), config_hash: config_hash.to_string() }
    }

    pub fn seeds(seeds: &[u64], config_hash: &str) -> Self {
        let s: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
        Self { seed: s.join("+"), config_hash: config_hash.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// A table whose header starts with `seed,config_hash`.
    pub fn new(columns: &[&'static str]) -> Self {
        let mut header = vec!["seed", "config_hash"];
        header.extend_from_slice(columns);
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, tag: &RunTag, values: Vec<String>) {
        let mut row = Vec::with_capacity(values.len() + 2);
        row.push(tag.seed.clone());
        row.push(tag.config_hash.clone());
        row.extend(values);
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn append(&mut self, other: Table) {
        debug_assert_eq!(self.header, other.header);
        self.rows.extend(other.rows);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| IoError::file(path, e))
    }
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn b(x: bool) -> String {
    u8::from(x).to_string()
}

fn phase(p: Phase) -> String {
    match p {
        Phase::Construction => "construction".into(),
        Phase::Operation => "operation".into(),
    }
}

pub fn daily(tag: &RunTag, report: &LifecycleReport) -> Table {
    let mut t = Table::new(&[
        "day",
        "phase",
        "participants",
        "r_trd",
        "r_trd_as_printed",
        "arbitrage_cashflow",
        "r_cr",
        "c_cr",
        "r_vs",
        "c_vs",
        "c_ses",
        "ses_profit",
        "bill_reduction",
        "obj",
        "trigger_hours",
    ]);
    for d in &report.days {
        let r = &d.result;
        let x = &r.totals;
        t.push(
            tag,
            vec![
                r.day.to_string(),
                phase(d.phase),
                r.participants.len().to_string(),
                f(x.trade_revenue),
                f(x.trade_as_printed),
                f(x.arbitrage_cashflow),
                f(x.credit_revenue),
                f(x.credit_cost),
                f(x.virtual_revenue),
                f(x.virtual_cost),
                f(x.degradation_cost),
                f(x.ses_profit()),
                f(x.total_bill_reduction()),
                f(r.objective()),
                r.trigger_hours.to_string(),
            ],
        );
    }
    t
}

/// Per-prosumer daily bills, long format.
pub fn bills(tag: &RunTag, days: &[&DayResult]) -> Table {
    let mut t = Table::new(&[
        "day",
        "prosumer",
        "net_cost",
        "credit_revenue",
        "credit_cost",
        "bill",
        "baseline",
        "reduction",
    ]);
    for r in days {
        for (j, s) in r.participants.iter().zip(&r.totals.bills) {
            t.push(
                tag,
                vec![
                    r.day.to_string(),
                    j.to_string(),
                    f(s.net_cost),
                    f(s.credit_revenue),
                    f(s.credit_cost),
                    f(s.bill),
                    f(s.baseline),
                    f(s.reduction),
                ],
            );
        }
    }
    t
}

pub fn matching(tag: &RunTag, outcomes: &[(usize, MatchOutcome)]) -> Table {
    let mut t =
        Table::new(&["trial_start", "prosumer", "b_ori", "bill", "ratio", "threshold", "retained"]);
    for (start, m) in outcomes {
        for tb in &m.bills {
            t.push(
                tag,
                vec![
                    start.to_string(),
                    tb.prosumer.to_string(),
                    f(tb.baseline),
                    f(tb.bill()),
                    tb.ratio().map_or_else(String::new, f),
                    f(m.threshold),
                    b(m.retained.contains(&tb.prosumer)),
                ],
            );
        }
    }
    t
}

/// Credit ledger per (hour, prosumer); needs recorded days.
pub fn ledger(tag: &RunTag, days: &[&DayResult]) -> Table {
    let mut t = Table::new(&[
        "day",
        "hour",
        "prosumer",
        "credit",
        "deposit",
        "withdraw",
        "virtual_deposit",
        "virtual_withdraw",
        "storage_trigger",
        "extraction_trigger",
    ]);
    for r in days {
        for h in &r.records {
            for (k, j) in r.participants.iter().enumerate() {
                let q = &h.requested_flows;
                t.push(
                    tag,
                    vec![
                        r.day.to_string(),
                        (h.hour % 24).to_string(),
                        j.to_string(),
                        f(h.credits[k]),
                        f(q.deposit[k]),
                        f(q.withdraw[k]),
                        f(h.flows.virtual_deposit[k]),
                        f(h.flows.virtual_withdraw[k]),
                        b(h.triggers.storage),
                        b(h.triggers.extraction),
                    ],
                );
            }
        }
    }
    t
}

/// Day-end settlement per prosumer with a nonzero transfer.
pub fn settlements(tag: &RunTag, days: &[&DayResult]) -> Table {
    let mut t =
        Table::new(&["day", "prosumer", "lambda_dps", "lambda_wtd", "prosumer_receives", "prosumer_pays"]);
    for r in days {
        let s = &r.settlement;
        for (k, j) in r.participants.iter().enumerate() {
            let (rev, cost) = (s.prosumer_revenue[k], s.prosumer_cost[k]);
            if rev != 0.0 || cost != 0.0 {
                t.push(
                    tag,
                    vec![r.day.to_string(), j.to_string(), f(s.lambda_dps), f(s.lambda_wtd), f(rev), f(cost)],
                );
            }
        }
    }
    t
}

/// Hourly episode trace: state, action and reward components.
pub fn trace(tag: &RunTag, days: &[&DayResult]) -> Table {
    let mut t = Table::new(&[
        "hour",
        "day",
        "hour_of_day",
        "spot",
        "tou",
        "f_sdr",
        "f_soc",
        "f_ao",
        "alpha_dps",
        "alpha_wtd",
        "req_charge_kw",
        "req_discharge_kw",
        "charge_kw",
        "discharge_kw",
        "energy_before",
        "energy_after",
        "deposit",
        "withdraw",
        "virtual_deposit",
        "virtual_withdraw",
        "storage_trigger",
        "extraction_trigger",
        "r_trd",
        "r_vs",
        "c_vs",
        "c_ses",
        "bill_delta",
        "reward",
    ]);
    for r in days {
        for h in &r.records {
            let bill_delta: f64 = h.baseline.iter().zip(&h.net_cost).map(|(b, c)| b - c).sum();
            t.push(
                tag,
                vec![
                    h.hour.to_string(),
                    r.day.to_string(),
                    (h.hour % 24).to_string(),
                    f(h.spot),
                    f(h.tou),
                    f(h.factors.f_sdr),
                    f(h.factors.f_soc),
                    f(h.factors.f_ao),
                    f(h.coeffs.alpha_dps),
                    f(h.coeffs.alpha_wtd),
                    f(h.requested_trade.charge_kw),
                    f(h.requested_trade.discharge_kw),
                    f(h.trade.charge_kw),
                    f(h.trade.discharge_kw),
                    f(h.energy_before),
                    f(h.energy_after),
                    f(h.flows.total_deposit()),
                    f(h.flows.total_withdraw()),
                    f(h.flows.total_virtual_deposit()),
                    f(h.flows.total_virtual_withdraw()),
                    b(h.triggers.storage),
                    b(h.triggers.extraction),
                    f(h.trade_revenue),
                    f(h.virtual_revenue),
                    f(h.virtual_cost),
                    f(h.degradation_cost),
                    f(bill_delta),
                    f(h.reward),
                ],
            );
        }
    }
    t
}

pub fn curve(tag: &RunTag, agent: &str, curve: &[EpisodeStat]) -> Table {
    let mut t = Table::new(&["agent", "episode", "day", "return", "critic_loss", "actor_loss"]);
    for e in curve {
        t.push(
            tag,
            vec![
                agent.to_string(),
                e.episode.to_string(),
                e.day.to_string(),
                f(e.ret),
                f(e.critic_loss),
                f(e.actor_loss),
            ],
        );
    }
    t
}

pub fn occupancy(tag: &RunTag, pools: &[PairOccupancy]) -> Table {
    let mut t = Table::new(&["axis", "label", "high", "low", "mean_reward"]);
    for p in pools {
        t.push(
            tag,
            vec![
                p.axis.name().to_string(),
                p.label.to_string(),
                p.high.to_string(),
                p.low.to_string(),
                f(p.mean_reward),
            ],
        );
    }
    t
}

/// One row of the ξ^pro sweep; money columns are $/day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiRow {
    pub xi_pro: f64,
    pub obj: f64,
    pub retained: usize,
    pub bill_reduction: f64,
    pub participant_profit: f64,
    pub esp_profit: f64,
    pub g_dw: f64,
}

pub fn sweep_xi(tag: &RunTag, rows: &[XiRow]) -> Table {
    let mut t = Table::new(&[
        "xi_pro",
        "obj",
        "retained",
        "bill_reduction",
        "participant_profit",
        "esp_profit",
        "g_dw",
    ]);
    for r in rows {
        t.push(
            tag,
            vec![
                f(r.xi_pro),
                f(r.obj),
                r.retained.to_string(),
                f(r.bill_reduction),
                f(r.participant_profit),
                f(r.esp_profit),
                f(r.g_dw),
            ],
        );
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerRow {
    pub sdr_low: f64,
    pub ao_low: f64,
    /// SES profit, $/day.
    pub ses_profit: f64,
    pub obj: f64,
    /// Share of enrolled hours with a virtual trigger.
    pub trigger_rate: f64,
}

pub fn sweep_triggers(tag: &RunTag, rows: &[TriggerRow]) -> Table {
    let mut t = Table::new(&["sdr_low", "ao_low", "ses_profit", "obj", "trigger_rate"]);
    for r in rows {
        t.push(tag, vec![f(r.sdr_low), f(r.ao_low), f(r.ses_profit), f(r.obj), f(r.trigger_rate)]);
    }
    t
}

/// One (case, seed) cell of the ablation; money columns are $/day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub case: u8,
    /// Bill reduction plus allocated profit per participant-day.
    pub prosumer_profit: f64,
    pub esp_profit: f64,
    pub total: f64,
    pub participants: usize,
}

pub fn ablation(tag: &RunTag, rows: &[AblationRow], case1_total: f64) -> Table {
    let mut t = Table::new(&["case", "prosumer_profit", "esp_profit", "total", "loss", "participants"]);
    for r in rows {
        t.push(
            tag,
            vec![
                r.case.to_string(),
                f(r.prosumer_profit),
                f(r.esp_profit),
                f(r.total),
                f(relative_loss(case1_total, r.total)),
                r.participants.to_string(),
            ],
        );
    }
    t
}

/// (reference − value)/|reference|; zero when the reference is zero.
pub fn relative_loss(reference: f64, value: f64) -> f64 {
    if reference == 0.0 {
        0.0
    } else {
        (reference - value) / reference.abs()
    }
}
