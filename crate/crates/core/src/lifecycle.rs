//! Construction → matching → operation → reconstruction driver.

use alloc::vec::Vec;

use crate::domain::HOURS_PER_DAY;
use crate::dws::deposit_withdraw_gain;
use crate::env::{encode_state, map_action, DayResult, Policy, SimContext, SimFlags, Simulator, StateMode};
use crate::matching::{
    allocate_by_capacity, contract_threshold, evaluate_matching, shapley_split, Allocation,
    Characteristic, MatchOutcome, TrialBill,
};
use crate::{Error, Result};

/// Which mechanisms are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseConfig {
    pub dynamic_coefficients: bool,
    pub matching: bool,
    pub virtual_ops: bool,
    pub reconstruction: bool,
}

impl CaseConfig {
    pub const FULL: Self =
        Self { dynamic_coefficients: true, matching: true, virtual_ops: true, reconstruction: true };

    /// Ablation cases 1-4.
    pub fn case(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Self::FULL),
            2 => Ok(Self { virtual_ops: false, ..Self::FULL }),
            3 => Ok(Self { reconstruction: false, ..Self::FULL }),
            4 => Ok(Self { dynamic_coefficients: false, matching: false, ..Self::FULL }),
            _ => Err(Error::Config(alloc::format!("unknown case {n}; expected 1-4"))),
        }
    }
}

/// Counts consecutive days whose profit falls short of the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitMonitor {
    reference: f64,
    fraction: f64,
    patience: u32,
    below: u32,
}

impl ProfitMonitor {
    pub fn new(reference: f64, fraction: f64, patience: u32) -> Self {
        Self { reference, fraction, patience, below: 0 }
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    /// `fraction` of the reference, measured from below so that a negative
    /// reference still yields a lower bar.
    pub fn threshold(&self) -> f64 {
        self.reference - (1.0 - self.fraction) * libm::fabs(self.reference)
    }

    pub fn below_count(&self) -> u32 {
        self.below
    }

    /// Records one day; true once `patience` consecutive low days accrue.
    pub fn observe(&mut self, profit: f64) -> bool {
        if profit < self.threshold() {
            self.below += 1;
        } else {
            self.below = 0;
        }
        self.below >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifecycleConfig {
    pub case: CaseConfig,
    pub construction_days: usize,
    pub patience: u32,
    pub profit_fraction: f64,
    pub state_mode: StateMode,
    pub record: bool,
}

impl LifecycleConfig {
    pub fn new(case: CaseConfig) -> Self {
        Self {
            case,
            construction_days: 7,
            patience: 7,
            profit_fraction: 0.8,
            state_mode: StateMode::Extended,
            record: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Construction,
    Operation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifecycleDay {
    pub phase: Phase,
    pub result: DayResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifecycleReport {
    pub days: Vec<LifecycleDay>,
    /// Matching outcomes with the day their trial started.
    pub matchings: Vec<(usize, MatchOutcome)>,
    /// Days on which a reconstruction was triggered.
    pub reconstructions: Vec<usize>,
}

impl LifecycleReport {
    pub fn total_objective(&self) -> f64 {
        self.days.iter().map(|d| d.result.objective()).sum()
    }

    pub fn mean_daily_objective(&self) -> f64 {
        if self.days.is_empty() {
            0.0
        } else {
            self.total_objective() / self.days.len() as f64
        }
    }

    pub fn ses_profit(&self) -> f64 {
        self.days.iter().map(|d| d.result.totals.ses_profit()).sum()
    }

    pub fn bill_reduction(&self) -> f64 {
        self.days.iter().map(|d| d.result.totals.total_bill_reduction()).sum()
    }

    /// G_dw over every hour of the horizon.
    pub fn gain_index(&self) -> Result<f64> {
        let history: Vec<_> =
            self.days.iter().flat_map(|d| d.result.coefficients.iter().copied()).collect();
        deposit_withdraw_gain(&history)
    }

    /// Participants retained by the first matching (everyone when there was none).
    pub fn first_retained(&self) -> Option<usize> {
        self.matchings.first().map(|(_, m)| m.retained.len())
    }

    /// Participants enrolled during the last operation day, if any.
    pub fn final_participants(&self) -> usize {
        self.days.last().map_or(0, |d| d.result.participants.len())
    }

    /// Shapley split of the horizon's SES profit, then per-prosumer shares by
    /// capacity-days of enrollment.
    pub fn allocation(&self, ctx: &SimContext) -> Result<Allocation> {
        let n = ctx.n_prosumers();
        let mut capacity_days = alloc::vec![0.0; n];
        let mut standalone_savings = 0.0;
        for d in &self.days {
            let hours = d.result.day * HOURS_PER_DAY..(d.result.day + 1) * HOURS_PER_DAY;
            for &j in &d.result.participants {
                let trace = &ctx.baselines[j];
                let saved: f64 = hours
                    .clone()
                    .map(|t| trace.no_storage_bill[t] - trace.hourly_bill[t])
                    .sum();
                standalone_savings += saved;
                capacity_days[j] += ctx.scenario.prosumers[j].ess_capacity_kwh;
            }
        }
        let v = Characteristic { empty: 0.0, esp: 0.0, prosumers: standalone_savings, grand: self.ses_profit() };
        let mut a = shapley_split(&v)?;
        if capacity_days.iter().any(|c| *c > 0.0) {
            a.per_prosumer = allocate_by_capacity(a.prosumer_pool, &capacity_days)?;
        } else {
            a.per_prosumer = alloc::vec![0.0; n];
        }
        Ok(a)
    }
}

fn run_day(sim: &mut Simulator, policy: &mut dyn Policy, mode: StateMode) -> Result<DayResult> {
    loop {
        let hod = sim.hour() % HOURS_PER_DAY;
        let f = sim.observe()?.factors;
        let u = policy.act(&encode_state(&f, hod, mode));
        let (coeffs, trade) = map_action(&u, &sim.context().cfg, sim.ses());
        if let Some(day) = sim.step(coeffs, trade)?.day {
            return Ok(day);
        }
    }
}

/// Runs the whole scenario horizon under `policy`.
pub fn run_lifecycle(
    ctx: &SimContext,
    cfg: &LifecycleConfig,
    policy: &mut dyn Policy,
) -> Result<LifecycleReport> {
    let horizon = ctx.days();
    let recruits: Vec<usize> = (0..ctx.n_prosumers()).collect();
    let flags = SimFlags::from_case(&cfg.case, cfg.record);
    let xi = contract_threshold(ctx.cfg.xi_pro, ctx.cfg.xi_esp)?;
    let mut report = LifecycleReport { days: Vec::new(), matchings: Vec::new(), reconstructions: Vec::new() };
    let mut day = 0;

    while day < horizon {
        let trial_start = day;
        let trial_days = cfg.construction_days.min(horizon - day);
        let mut sim = Simulator::new(ctx.clone(), recruits.clone(), day, flags)?;
        let mut trial = alloc::vec![TrialBill { prosumer: 0, baseline: 0.0, reduction: 0.0 }; recruits.len()];
        for (k, t) in trial.iter_mut().enumerate() {
            t.prosumer = recruits[k];
        }
        let mut trial_profit = 0.0;
        for _ in 0..trial_days {
            let r = run_day(&mut sim, policy, cfg.state_mode)?;
            for (t, b) in trial.iter_mut().zip(&r.totals.bills) {
                t.baseline += b.baseline;
                t.reduction += b.reduction;
            }
            trial_profit += r.totals.ses_profit();
            report.days.push(LifecycleDay { phase: Phase::Construction, result: r });
        }
        day += trial_days;
        if day >= horizon {
            break;
        }

        let retained = if cfg.case.matching {
            let outcome = evaluate_matching(&trial, xi);
            let kept = outcome.retained.clone();
            report.matchings.push((trial_start, outcome));
            kept
        } else {
            recruits.clone()
        };
        let reference = trial_profit / (trial_days * recruits.len()) as f64;
        let mut monitor = ProfitMonitor::new(reference, cfg.profit_fraction, cfg.patience);

        let mut sim = if retained.is_empty() {
            None
        } else {
            Some(Simulator::new(ctx.clone(), retained.clone(), day, flags)?)
        };
        while day < horizon {
            let r = match sim.as_mut() {
                Some(s) => run_day(s, policy, cfg.state_mode)?,
                None => DayResult::empty(day),
            };
            let per_participant = if retained.is_empty() {
                0.0
            } else {
                r.totals.ses_profit() / retained.len() as f64
            };
            report.days.push(LifecycleDay { phase: Phase::Operation, result: r });
            day += 1;
            if monitor.observe(per_participant) && cfg.case.reconstruction {
                log::info!("profit below {:.4} for {} days; reconstructing at day {day}", monitor.threshold(), cfg.patience);
                report.reconstructions.push(day);
                break;
            }
        }
    }
    Ok(report)
}
