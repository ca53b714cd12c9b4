//! Experiment drivers shared by the CLI and the acceptance tests.

use std::str::FromStr;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use sesim_core::cnepr::PairOccupancy;
use sesim_core::domain::{SesConfig, HOURS_PER_DAY};
use sesim_core::env::{Env, EnvConfig, Policy, SimContext, StateMode};
use sesim_core::lifecycle::{run_lifecycle, CaseConfig, LifecycleConfig, LifecycleReport};
use sesim_core::scenario::Scenario;
use sesim_core::td3::{Greedy, Td3Agent};
use sesim_core::training::{self, EpisodeStat, RandomPolicy, TrainConfig};

use crate::config::{config_hash, config_to_string};
use crate::report::{AblationRow, TriggerRow, XiRow};
use crate::IoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    /// TD3 with CNEPR replay.
    Cnepr,
    /// TD3 with one uniform buffer.
    Td3,
    Random,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cnepr => "cnepr",
            Self::Td3 => "td3",
            Self::Random => "random",
        }
    }
}

impl FromStr for AgentKind {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, IoError> {
        match s {
            "cnepr" => Ok(Self::Cnepr),
            "td3" | "uniform" => Ok(Self::Td3),
            "random" => Ok(Self::Random),
            _ => Err(IoError::Invalid(format!("unknown agent {s:?}; expected cnepr, td3 or random"))),
        }
    }
}

/// A scenario with its SES configuration and fingerprint.
#[derive(Debug, Clone)]
pub struct Setup {
    pub scenario: Arc<Scenario>,
    pub cfg: SesConfig,
    pub state_mode: StateMode,
}

impl Setup {
    pub fn new(scenario: Scenario, cfg: SesConfig, state_mode: StateMode) -> Result<Self, IoError> {
        scenario.validate()?;
        cfg.validate()?;
        Ok(Self { scenario: Arc::new(scenario), cfg, state_mode })
    }

    pub fn context(&self) -> Result<SimContext, IoError> {
        self.context_with(self.cfg.clone())
    }

    pub fn context_with(&self, cfg: SesConfig) -> Result<SimContext, IoError> {
        Ok(SimContext::new(self.scenario.clone(), cfg)?)
    }

    /// Hash of everything a trained model depends on: configuration,
    /// scenario data and state layout.
    pub fn model_hash(&self) -> String {
        let mut h = Sha256::new();
        let s = &self.scenario;
        h.update((s.prosumers.len() as u64).to_le_bytes());
        for p in &s.prosumers {
            h.update(p.id.to_le_bytes());
            for x in [p.pv_peak_kw, p.ess_capacity_kwh, p.ess_power_kw] {
                h.update(x.to_bits().to_le_bytes());
            }
            for x in p.demand_kw.iter().chain(&p.pv_kw) {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        let t = &s.tariffs;
        h.update(t.fit.to_bits().to_le_bytes());
        for x in t.tou.iter().chain(&t.spot).chain(&t.spot_forecast) {
            h.update(x.to_bits().to_le_bytes());
        }
        let data = hex::encode(h.finalize());
        let mode = format!("{:?}", self.state_mode);
        config_hash(&[&config_to_string(&self.cfg), &data, &mode])
    }

    /// Hash tagging one command's reports.
    pub fn run_hash(&self, parts: &[&str]) -> String {
        let model = self.model_hash();
        let mut all = vec![model.as_str()];
        all.extend_from_slice(parts);
        config_hash(&all)
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub kind: AgentKind,
    pub agent: Option<Td3Agent>,
    pub curve: Vec<EpisodeStat>,
    pub occupancy: Vec<PairOccupancy>,
}

/// Trains (or, for the random policy, just rolls out) `episodes` one-day episodes.
pub fn train_agent(
    setup: &Setup,
    case: CaseConfig,
    kind: AgentKind,
    seed: u64,
    episodes: usize,
) -> Result<Trained, IoError> {
    let ctx = setup.context()?;
    let mut cfg = EnvConfig::for_population(case, ctx.n_prosumers());
    cfg.state_mode = setup.state_mode;
    let mut env = Env::full(ctx, cfg)?;
    let train_cfg = match kind {
        AgentKind::Cnepr => TrainConfig::cnepr(episodes, seed),
        AgentKind::Td3 => TrainConfig::uniform(episodes, seed),
        AgentKind::Random => {
            let curve = training::random_curve(&mut env, episodes, seed)?;
            return Ok(Trained { kind, agent: None, curve, occupancy: Vec::new() });
        }
    };
    let out = training::train(&mut env, &train_cfg)?;
    Ok(Trained { kind, agent: Some(out.agent), curve: out.curve, occupancy: out.occupancy })
}

/// Where evaluation actions come from.
#[derive(Debug, Clone, Copy)]
pub enum PolicySource<'a> {
    Agent(&'a Td3Agent),
    Random(u64),
}

impl<'a> PolicySource<'a> {
    /// A fresh policy; random policies restart from their seed every time.
    pub fn make(&self) -> Box<dyn Policy + 'a> {
        match *self {
            Self::Agent(a) => Box::new(Greedy(a)),
            Self::Random(seed) => Box::new(RandomPolicy::new(seed)),
        }
    }

    pub fn from_trained(t: &'a Trained, seed: u64) -> Self {
        t.agent.as_ref().map_or(Self::Random(seed), Self::Agent)
    }
}

/// Mean daily objective of one-day episodes over every scenario day, with the
/// full population and no matching.
pub fn mean_daily_objective(setup: &Setup, case: CaseConfig, policy: PolicySource) -> Result<f64, IoError> {
    let ctx = setup.context()?;
    let mut cfg = EnvConfig::for_population(case, ctx.n_prosumers());
    cfg.state_mode = setup.state_mode;
    let mut env = Env::full(ctx, cfg)?;
    let days: Vec<usize> = (0..env.days()).collect();
    let mut p = policy.make();
    Ok(training::mean(&training::evaluate(&mut env, p.as_mut(), &days)?))
}

pub fn lifecycle(
    setup: &Setup,
    ctx: &SimContext,
    case: CaseConfig,
    policy: PolicySource,
    record: bool,
) -> Result<LifecycleReport, IoError> {
    let mut cfg = LifecycleConfig::new(case);
    cfg.state_mode = setup.state_mode;
    cfg.record = record;
    let mut p = policy.make();
    Ok(run_lifecycle(ctx, &cfg, p.as_mut())?)
}

/// Per-day and per-participant figures of a lifecycle run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub days: usize,
    pub participant_days: usize,
    /// Participants after the first matching, or everyone without one.
    pub participants: usize,
    pub obj_per_day: f64,
    pub ses_profit_per_day: f64,
    pub bill_reduction_per_participant_day: f64,
    pub allocated_per_participant_day: f64,
    pub esp_profit_per_day: f64,
    pub g_dw: f64,
    pub trigger_rate: f64,
    pub reconstructions: usize,
}

pub fn summarize(report: &LifecycleReport, ctx: &SimContext) -> Result<Summary, IoError> {
    let days = report.days.len().max(1) as f64;
    let participant_days: usize = report.days.iter().map(|d| d.result.participants.len()).sum();
    let enrolled_hours: usize = report
        .days
        .iter()
        .filter(|d| !d.result.participants.is_empty())
        .count()
        * HOURS_PER_DAY;
    let triggers: u32 = report.days.iter().map(|d| d.result.trigger_hours).sum();
    let alloc = report.allocation(ctx)?;
    let per_pd = |x: f64| if participant_days == 0 { 0.0 } else { x / participant_days as f64 };
    Ok(Summary {
        days: report.days.len(),
        participant_days,
        participants: report.first_retained().unwrap_or(ctx.n_prosumers()),
        obj_per_day: report.total_objective() / days,
        ses_profit_per_day: report.ses_profit() / days,
        bill_reduction_per_participant_day: per_pd(report.bill_reduction()),
        allocated_per_participant_day: per_pd(alloc.prosumer_pool),
        esp_profit_per_day: alloc.esp_share / days,
        g_dw: report.gain_index()?,
        trigger_rate: if enrolled_hours == 0 { 0.0 } else { f64::from(triggers) / enrolled_hours as f64 },
        reconstructions: report.reconstructions.len(),
    })
}

/// Maps `f` over `items` on scoped worker threads, preserving order.
pub fn par_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<R, IoError> + Sync,
) -> Result<Vec<R>, IoError> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Result<Vec<R>, IoError>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().map_err(|_| IoError::Invalid("worker thread panicked".into()))??);
        }
        Ok(out)
    })
}

/// ξ^pro grid 0, 0.1, …, 0.9.
pub fn xi_grid() -> Vec<f64> {
    (0..10).map(|i| f64::from(i) / 10.0).collect()
}

/// Runs the Case 1 lifecycle for every ξ^pro in `grid`. ξ^ESP is zeroed so
/// that ξ^pro alone sets the contract threshold.
pub fn sweep_xi(setup: &Setup, policy: PolicySource, grid: &[f64]) -> Result<Vec<XiRow>, IoError> {
    par_map(grid, |&xi| {
        let cfg = SesConfig { xi_pro: xi, xi_esp: 0.0, ..setup.cfg.clone() };
        let ctx = setup.context_with(cfg)?;
        let report = lifecycle(setup, &ctx, CaseConfig::FULL, policy, false)?;
        let s = summarize(&report, &ctx)?;
        Ok(XiRow {
            xi_pro: xi,
            obj: s.obj_per_day,
            retained: s.participants,
            bill_reduction: s.bill_reduction_per_participant_day,
            participant_profit: s.allocated_per_participant_day,
            esp_profit: s.esp_profit_per_day,
            g_dw: s.g_dw,
        })
    })
}

/// LOW-threshold grid 0, 0.05, …, 0.30.
pub fn trigger_grid() -> Vec<f64> {
    (0..=6).map(|i| f64::from(i) * 0.05).collect()
}

/// Case 1 lifecycle per (β^{SDR,LOW}, β^{AO,LOW}) cell, with UP = 1 − LOW.
pub fn sweep_triggers(
    setup: &Setup,
    policy: PolicySource,
    sdr_grid: &[f64],
    ao_grid: &[f64],
) -> Result<Vec<TriggerRow>, IoError> {
    let cells: Vec<(f64, f64)> =
        sdr_grid.iter().flat_map(|&s| ao_grid.iter().map(move |&a| (s, a))).collect();
    par_map(&cells, |&(sdr, ao)| {
        let cfg = SesConfig {
            sdr_low: sdr,
            sdr_up: 1.0 - sdr,
            ao_low: ao,
            ao_up: 1.0 - ao,
            ..setup.cfg.clone()
        };
        let ctx = setup.context_with(cfg)?;
        let report = lifecycle(setup, &ctx, CaseConfig::FULL, policy, false)?;
        let s = summarize(&report, &ctx)?;
        Ok(TriggerRow {
            sdr_low: sdr,
            ao_low: ao,
            ses_profit: s.ses_profit_per_day,
            obj: s.obj_per_day,
            trigger_rate: s.trigger_rate,
        })
    })
}

/// Lifecycle figures of one ablation case under a given policy.
pub fn ablation_row(setup: &Setup, case: u8, policy: PolicySource) -> Result<AblationRow, IoError> {
    let ctx = setup.context()?;
    let report = lifecycle(setup, &ctx, CaseConfig::case(case)?, policy, false)?;
    let s = summarize(&report, &ctx)?;
    Ok(AblationRow {
        case,
        prosumer_profit: s.bill_reduction_per_participant_day + s.allocated_per_participant_day,
        esp_profit: s.esp_profit_per_day,
        total: s.obj_per_day,
        participants: s.participants,
    })
}

/// Per-seed rows plus the cross-seed mean row per case.
#[derive(Debug, Clone)]
pub struct Ablation {
    pub seeds: Vec<u64>,
    /// Indexed [seed][case-1].
    pub rows: Vec<Vec<AblationRow>>,
}

impl Ablation {
    pub fn mean(&self) -> Vec<AblationRow> {
        let n = self.rows.len().max(1) as f64;
        (1..=4u8)
            .map(|case| {
                let cells: Vec<&AblationRow> = self.rows.iter().map(|r| &r[usize::from(case) - 1]).collect();
                let avg = |g: fn(&AblationRow) -> f64| cells.iter().map(|r| g(r)).sum::<f64>() / n;
                AblationRow {
                    case,
                    prosumer_profit: avg(|r| r.prosumer_profit),
                    esp_profit: avg(|r| r.esp_profit),
                    total: avg(|r| r.total),
                    participants: (cells.iter().map(|r| r.participants).sum::<usize>() as f64 / n).round()
                        as usize,
                }
            })
            .collect()
    }
}

/// Trains one agent per (seed, case) unless `agents` supplies it, then runs
/// each case's lifecycle.
pub fn ablation(
    setup: &Setup,
    kind: AgentKind,
    seeds: &[u64],
    episodes: usize,
    agents: &(dyn Fn(u64, u8) -> Result<Option<Td3Agent>, IoError> + Sync),
) -> Result<Ablation, IoError> {
    let cells: Vec<(u64, u8)> = seeds.iter().flat_map(|&s| (1..=4u8).map(move |c| (s, c))).collect();
    let rows = par_map(&cells, |&(seed, case)| {
        let trained = match (kind, agents(seed, case)?) {
            (_, Some(agent)) => Trained { kind, agent: Some(agent), curve: Vec::new(), occupancy: Vec::new() },
            (AgentKind::Random, None) => Trained { kind, agent: None, curve: Vec::new(), occupancy: Vec::new() },
            (_, None) => train_agent(setup, CaseConfig::case(case)?, kind, seed, episodes)?,
        };
        ablation_row(setup, case, PolicySource::from_trained(&trained, seed))
    })?;
    Ok(Ablation { seeds: seeds.to_vec(), rows: rows.chunks(4).map(<[AblationRow]>::to_vec).collect() })
}
