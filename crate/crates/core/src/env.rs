//! Hourly SES simulator and the MDP wrapper around it.
//!
//! One simulator hour runs: prosumer requests → factors → virtual routing →
//! credit update → storage step with repair → cash flows. The reward of an
//! hour is its increment of the daily objective; day-end settlement terms land
//! on the last hour of the day, so the rewards of a day sum to its objective.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{aggregate_ses, DwsCoefficients, SesConfig, SesState, Trade, HOURS_PER_DAY};
use crate::dws::{
    arbitrage_series, prosumer_flows_at, route_virtual, sdr_soc, CreditLedger, DaySettlement,
    Factors, HourFlows, VirtualTriggers,
};
use crate::lifecycle::CaseConfig;
use crate::market::{net_load_kw, settle_hour, standalone_trace, BillStatement, DayTotals, StandaloneTrace};
use crate::scenario::Scenario;
use crate::{Error, Result};

pub const ACTION_DIM: usize = 4;

/// Immutable data shared by every simulator over one scenario.
#[derive(Debug, Clone)]
pub struct SimContext {
    pub scenario: Arc<Scenario>,
    pub cfg: SesConfig,
    /// Normalized arbitrage factor for every hour.
    pub f_ao: Arc<Vec<f64>>,
    /// Standalone-battery replay of every prosumer over the whole horizon.
    pub baselines: Arc<Vec<StandaloneTrace>>,
}

impl SimContext {
    pub fn new(scenario: Arc<Scenario>, cfg: SesConfig) -> Result<Self> {
        scenario.validate()?;
        cfg.validate()?;
        let f_ao = arbitrage_series(&scenario.tariffs, cfg.ao_window_hours);
        let baselines = scenario
            .prosumers
            .iter()
            .map(|p| standalone_trace(p, &scenario.tariffs.tou, 0.5 * p.ess_capacity_kwh, &cfg))
            .collect();
        Ok(Self { scenario, cfg, f_ao: Arc::new(f_ao), baselines: Arc::new(baselines) })
    }

    pub fn days(&self) -> usize {
        self.scenario.days
    }

    pub fn n_prosumers(&self) -> usize {
        self.scenario.prosumers.len()
    }
}

/// What the ESP sees at the start of an hour.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub hour: usize,
    /// Requested (unrouted) flows of the participants.
    pub flows: HourFlows,
    pub factors: Factors,
}

/// Everything that happened in one simulated hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HourRecord {
    pub hour: usize,
    pub spot: f64,
    pub tou: f64,
    pub factors: Factors,
    pub coeffs: DwsCoefficients,
    pub requested_trade: Trade,
    /// Trade after curtailment.
    pub trade: Trade,
    pub energy_before: f64,
    pub energy_after: f64,
    /// Flows after trigger routing and feasibility repair.
    pub flows: HourFlows,
    /// Flows as requested by prosumers, before routing and repair.
    pub requested_flows: HourFlows,
    /// Γ after this hour's update, before any day-end settlement.
    pub credits: Vec<f64>,
    pub triggers: VirtualTriggers,
    pub net_cost: Vec<f64>,
    pub baseline: Vec<f64>,
    pub trade_revenue: f64,
    pub virtual_revenue: f64,
    pub virtual_cost: f64,
    pub degradation_cost: f64,
    pub reward: f64,
}

/// A completed, settled day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayResult {
    pub day: usize,
    /// Scenario indices of the prosumers served that day.
    pub participants: Vec<usize>,
    pub totals: DayTotals,
    pub settlement: DaySettlement,
    pub coefficients: Vec<DwsCoefficients>,
    /// Hours in which at least one virtual trigger fired.
    pub trigger_hours: u32,
    /// Per-hour detail; empty unless recording was requested.
    pub records: Vec<HourRecord>,
}

impl DayResult {
    pub fn objective(&self) -> f64 {
        crate::market::objective(&self.totals)
    }

    /// A day with nobody enrolled.
    pub fn empty(day: usize) -> Self {
        Self {
            day,
            participants: Vec::new(),
            totals: DayTotals::default(),
            settlement: DaySettlement::default(),
            coefficients: Vec::new(),
            trigger_hours: 0,
            records: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourOutcome {
    /// Objective increment of the hour ($).
    pub reward: f64,
    /// Set when this hour closed a day.
    pub day: Option<DayResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimFlags {
    pub dynamic_coefficients: bool,
    pub virtual_ops: bool,
    pub record: bool,
}

impl SimFlags {
    pub fn from_case(case: &CaseConfig, record: bool) -> Self {
        Self {
            dynamic_coefficients: case.dynamic_coefficients,
            virtual_ops: case.virtual_ops,
            record,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct DayAccum {
    totals: DayTotals,
    net_cost: Vec<f64>,
    baseline: Vec<f64>,
    coefficients: Vec<DwsCoefficients>,
    trigger_hours: u32,
    records: Vec<HourRecord>,
}

/// One SES serving a fixed participant set, stepped hour by hour.
#[derive(Debug, Clone)]
pub struct Simulator {
    ctx: SimContext,
    participants: Vec<usize>,
    ses: SesState,
    ledger: CreditLedger,
    hour: usize,
    flags: SimFlags,
    pending: Option<Observation>,
    acc: DayAccum,
}

impl Simulator {
    /// Starts at the beginning of `day` with a freshly aggregated SES.
    pub fn new(ctx: SimContext, participants: Vec<usize>, day: usize, flags: SimFlags) -> Result<Self> {
        if day >= ctx.days() {
            return Err(Error::OutOfRange(alloc::format!("day {day} beyond horizon {}", ctx.days())));
        }
        if let Some(&bad) = participants.iter().find(|&&j| j >= ctx.n_prosumers()) {
            return Err(Error::OutOfRange(alloc::format!("participant index {bad}")));
        }
        let members: Vec<_> = participants.iter().map(|&j| ctx.scenario.prosumers[j].clone()).collect();
        let ses = aggregate_ses(&members)?;
        let n = participants.len();
        Ok(Self {
            ledger: CreditLedger::new(n),
            participants,
            ses,
            hour: day * HOURS_PER_DAY,
            flags,
            pending: None,
            acc: DayAccum::default(),
            ctx,
        })
    }

    pub fn ses(&self) -> &SesState {
        &self.ses
    }

    pub fn hour(&self) -> usize {
        self.hour
    }

    pub fn finished(&self) -> bool {
        self.hour >= self.ctx.scenario.hours()
    }

    pub fn participants(&self) -> &[usize] {
        &self.participants
    }

    pub fn credits(&self) -> &[f64] {
        self.ledger.credits()
    }

    pub fn ledger(&self) -> &CreditLedger {
        &self.ledger
    }

    pub fn context(&self) -> &SimContext {
        &self.ctx
    }

    /// Requested flows and factors for the current hour.
    pub fn observe(&mut self) -> Result<&Observation> {
        if self.finished() {
            return Err(Error::OutOfRange("simulation horizon exhausted".into()));
        }
        if self.pending.is_none() {
            let t = self.hour;
            let (mut dep, mut wtd) = (Vec::with_capacity(self.participants.len()), Vec::new());
            for (k, &j) in self.participants.iter().enumerate() {
                let (d, w) = prosumer_flows_at(&self.ctx.scenario.prosumers[j], t, self.ledger.credits()[k]);
                dep.push(d);
                wtd.push(w);
            }
            let flows = HourFlows::physical(dep, wtd);
            let (raw_sdr, f_sdr, f_soc) = sdr_soc(&self.ses, &flows)?;
            let tariffs = &self.ctx.scenario.tariffs;
            let factors = Factors {
                f_sdr,
                f_soc,
                f_ao: self.ctx.f_ao[t],
                raw_sdr,
                raw_ao: tariffs.spot_forecast[t] - tariffs.spot[t],
            };
            self.pending = Some(Observation { hour: t, flows, factors });
        }
        Ok(self.pending.as_ref().expect("observation just computed"))
    }

    /// Runs the current hour with the given coefficients and market trade.
    pub fn step(&mut self, coeffs: DwsCoefficients, trade: Trade) -> Result<HourOutcome> {
        self.observe()?;
        let obs = self.pending.take().expect("observed above");
        let t = self.hour;
        let cfg = &self.ctx.cfg;
        let coeffs = if self.flags.dynamic_coefficients { coeffs } else { DwsCoefficients::NEUTRAL };
        let (routed, triggers) = if self.flags.virtual_ops {
            route_virtual(&obs.flows, &obs.factors, cfg)
        } else {
            (obs.flows.clone(), VirtualTriggers::default())
        };
        self.ledger.update_credit(&obs.flows, coeffs, cfg)?;

        let spot = self.ctx.scenario.tariffs.spot[t];
        let tou = self.ctx.scenario.tariffs.tou[t];
        let energy_before = self.ses.energy_kwh;
        let res = settle_hour(&self.ses, &routed, trade, spot, cfg)?;
        self.ses = res.step.ses;

        let n = self.participants.len();
        if self.acc.net_cost.len() != n {
            self.acc.net_cost = vec![0.0; n];
            self.acc.baseline = vec![0.0; n];
        }
        let mut bill_delta = 0.0;
        let mut net_cost = Vec::with_capacity(if self.flags.record { n } else { 0 });
        let mut baseline = Vec::with_capacity(net_cost.capacity());
        for (k, &j) in self.participants.iter().enumerate() {
            let p = &self.ctx.scenario.prosumers[j];
            let c = tou * net_load_kw(p.demand_kw[t], p.pv_kw[t], obs.flows.withdraw[k]);
            let b = self.ctx.baselines[j].hourly_bill[t];
            self.acc.net_cost[k] += c;
            self.acc.baseline[k] += b;
            bill_delta += b - c;
            if self.flags.record {
                net_cost.push(c);
                baseline.push(b);
            }
        }

        let tot = &mut self.acc.totals;
        tot.trade_revenue += res.trade_revenue;
        tot.trade_as_printed += res.trade_as_printed;
        tot.arbitrage_cashflow += res.arbitrage_cashflow;
        tot.virtual_revenue += res.virtual_revenue;
        tot.virtual_cost += res.virtual_cost;
        tot.degradation_cost += res.degradation_cost;
        self.acc.coefficients.push(coeffs);
        if triggers.any() {
            self.acc.trigger_hours += 1;
        }
        let mut reward = res.trade_revenue + res.virtual_revenue - res.virtual_cost - res.degradation_cost
            + bill_delta;

        if self.flags.record {
            self.acc.records.push(HourRecord {
                hour: t,
                spot,
                tou,
                factors: obs.factors,
                coeffs,
                requested_trade: trade,
                trade: res.step.trade,
                energy_before,
                energy_after: self.ses.energy_kwh,
                flows: res.step.flows.clone(),
                requested_flows: obs.flows.clone(),
                credits: self.ledger.credits().to_vec(),
                triggers,
                net_cost,
                baseline,
                trade_revenue: res.trade_revenue,
                virtual_revenue: res.virtual_revenue,
                virtual_cost: res.virtual_cost,
                degradation_cost: res.degradation_cost,
                reward: 0.0,
            });
        }

        self.hour += 1;
        let mut day = None;
        if self.hour.is_multiple_of(HOURS_PER_DAY) {
            let d = t / HOURS_PER_DAY;
            let (result, settle_reward) = self.close_day(d);
            reward += settle_reward;
            day = Some(result);
        }
        if let Some(r) = self.acc.records.last_mut().filter(|r| r.hour == t) {
            r.reward = reward;
        }
        if let Some(d) = day.as_mut() {
            if let Some(r) = d.records.last_mut() {
                r.reward = reward;
            }
        }
        Ok(HourOutcome { reward, day })
    }

    fn close_day(&mut self, day: usize) -> (DayResult, f64) {
        let cfg = &self.ctx.cfg;
        let reference = self.ctx.scenario.tou_reference(day, &self.participants);
        let settlement = self.ledger.settle_day(day as u32, reference, self.ctx.scenario.tariffs.fit, cfg);
        let mut acc = core::mem::take(&mut self.acc);
        acc.totals.credit_revenue = settlement.ses_revenue;
        acc.totals.credit_cost = settlement.ses_cost;
        let mut settle_reward = settlement.ses_revenue - settlement.ses_cost;
        acc.totals.bills = (0..self.participants.len())
            .map(|k| {
                settle_reward += settlement.prosumer_revenue[k] - settlement.prosumer_cost[k];
                BillStatement::new(
                    acc.net_cost[k],
                    settlement.prosumer_revenue[k],
                    settlement.prosumer_cost[k],
                    acc.baseline[k],
                )
            })
            .collect();
        let result = DayResult {
            day,
            participants: self.participants.clone(),
            totals: acc.totals,
            settlement,
            coefficients: acc.coefficients,
            trigger_hours: acc.trigger_hours,
            records: acc.records,
        };
        (result, settle_reward)
    }
}

/// Whether the agent sees only the three factors or also the clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StateMode {
    #[default]
    Extended,
    /// (f_sdr, f_soc, f_ao) only.
    FactorsOnly,
}

impl StateMode {
    pub fn dim(self) -> usize {
        match self {
            StateMode::Extended => 6,
            StateMode::FactorsOnly => 3,
        }
    }
}

/// State vector: the three factors, then sin/cos of the hour and day progress.
pub fn encode_state(f: &Factors, hour_of_day: usize, mode: StateMode) -> Vec<f64> {
    let mut s = vec![f.f_sdr, f.f_soc, f.f_ao];
    if mode == StateMode::Extended {
        let angle = 2.0 * core::f64::consts::PI * hour_of_day as f64 / HOURS_PER_DAY as f64;
        s.extend([libm::sin(angle), libm::cos(angle), hour_of_day as f64 / HOURS_PER_DAY as f64]);
    }
    s
}

/// Maps an agent output in [−1, 1]^4 onto coefficients and a netted trade.
///
/// Out-of-range components are clamped.
pub fn map_action(u: &[f64; ACTION_DIM], cfg: &SesConfig, ses: &SesState) -> (DwsCoefficients, Trade) {
    if u.iter().any(|x| !(-1.0..=1.0).contains(x)) {
        log::debug!("action {u:?} outside [-1, 1]; clamping");
    }
    let unit = |x: f64| (x.clamp(-1.0, 1.0) + 1.0) / 2.0;
    let coeffs = DwsCoefficients {
        alpha_dps: 1.0 + unit(u[0]) * (cfg.alpha_dps_max - 1.0),
        alpha_wtd: cfg.alpha_wtd_min + unit(u[1]) * (1.0 - cfg.alpha_wtd_min),
    };
    let trade = Trade::netted(unit(u[2]) * ses.max_charge_kw, unit(u[3]) * ses.max_discharge_kw);
    (coeffs, trade)
}

/// Anything that maps a state to an action in [−1, 1]^4.
pub trait Policy {
    fn act(&mut self, state: &[f64]) -> [f64; ACTION_DIM];
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub case: CaseConfig,
    pub state_mode: StateMode,
    /// Multiplier applied to rewards handed to the learner.
    pub reward_scale: f64,
}

impl EnvConfig {
    /// Reward scale 2/n keeps per-step rewards of order one for n prosumers.
    pub fn for_population(case: CaseConfig, n_prosumers: usize) -> Self {
        Self { case, state_mode: StateMode::Extended, reward_scale: 2.0 / n_prosumers.max(1) as f64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub state: Vec<f64>,
    pub factors: Factors,
    /// Objective increment ($), unscaled.
    pub reward: f64,
    pub done: bool,
    pub day: Option<DayResult>,
}

/// One-day episodes over a fixed participant set.
#[derive(Debug, Clone)]
pub struct Env {
    ctx: SimContext,
    cfg: EnvConfig,
    participants: Vec<usize>,
    sim: Option<Simulator>,
    steps: usize,
    record: bool,
}

impl Env {
    pub fn new(ctx: SimContext, cfg: EnvConfig, participants: Vec<usize>) -> Result<Self> {
        if participants.is_empty() {
            return Err(Error::Config("environment needs at least one participant".into()));
        }
        Ok(Self { ctx, cfg, participants, sim: None, steps: 0, record: false })
    }

    /// Environment over every prosumer of the scenario.
    pub fn full(ctx: SimContext, cfg: EnvConfig) -> Result<Self> {
        let all = (0..ctx.n_prosumers()).collect();
        Self::new(ctx, cfg, all)
    }

    pub fn set_record(&mut self, record: bool) {
        self.record = record;
    }

    pub fn state_dim(&self) -> usize {
        self.cfg.state_mode.dim()
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn context(&self) -> &SimContext {
        &self.ctx
    }

    pub fn days(&self) -> usize {
        self.ctx.days()
    }

    /// Starts an episode on the day picked by `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let day = ChaCha8Rng::seed_from_u64(seed).random_range(0..self.days());
        self.reset_day(day)
    }

    pub fn reset_day(&mut self, day: usize) -> Result<Vec<f64>> {
        let flags = SimFlags::from_case(&self.cfg.case, self.record);
        let mut sim = Simulator::new(self.ctx.clone(), self.participants.clone(), day, flags)?;
        let f = sim.observe()?.factors;
        self.sim = Some(sim);
        self.steps = 0;
        Ok(encode_state(&f, 0, self.cfg.state_mode))
    }

    pub fn factors(&mut self) -> Result<Factors> {
        let sim = self.sim.as_mut().ok_or(Error::Contract("reset before observing".into()))?;
        Ok(sim.observe()?.factors)
    }

    pub fn step(&mut self, action: &[f64; ACTION_DIM]) -> Result<EnvStep> {
        let sim = self.sim.as_mut().ok_or(Error::Contract("step called before reset".into()))?;
        if self.steps >= HOURS_PER_DAY {
            return Err(Error::Contract("episode finished; call reset".into()));
        }
        let (coeffs, trade) = map_action(action, &self.ctx.cfg, sim.ses());
        let out = sim.step(coeffs, trade)?;
        self.steps += 1;
        let done = self.steps == HOURS_PER_DAY;
        let hod = self.steps % HOURS_PER_DAY;
        let factors = if sim.finished() {
            // Horizon end: the terminal state is never bootstrapped from.
            sdr_soc(sim.ses(), &HourFlows::default())
                .map(|(raw_sdr, f_sdr, f_soc)| Factors { f_sdr, f_soc, f_ao: 0.5, raw_sdr, raw_ao: 0.0 })?
        } else {
            sim.observe()?.factors
        };
        Ok(EnvStep {
            state: encode_state(&factors, hod, self.cfg.state_mode),
            factors,
            reward: out.reward,
            done,
            day: out.day,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_synthetic;

    fn ctx() -> SimContext {
        SimContext::new(Arc::new(generate_synthetic(4, 6, 3).unwrap()), SesConfig::default()).unwrap()
    }

    #[test]
    fn action_bounds_map() {
        let cfg = SesConfig::default();
        let ses = SesState { energy_kwh: 5.0, capacity_kwh: 10.0, max_charge_kw: 4.0, max_discharge_kw: 4.0 };
        let (c, t) = map_action(&[-1.0; 4], &cfg, &ses);
        assert_eq!(c, DwsCoefficients { alpha_dps: 1.0, alpha_wtd: cfg.alpha_wtd_min });
        assert_eq!(t, Trade::NONE);
        let (c, t) = map_action(&[1.0, 1.0, 1.0, -1.0], &cfg, &ses);
        assert_eq!(c, DwsCoefficients { alpha_dps: cfg.alpha_dps_max, alpha_wtd: 1.0 });
        assert_eq!(t, Trade { charge_kw: 4.0, discharge_kw: 0.0 });
        let (_, t) = map_action(&[0.0, 0.0, 0.0, 3.0], &cfg, &ses);
        assert_eq!(t, Trade { charge_kw: 0.0, discharge_kw: 2.0 });
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = Env::full(ctx(), EnvConfig::for_population(CaseConfig::case(1).unwrap(), 6)).unwrap();
        let mut b = a.clone();
        assert_eq!(a.reset(9).unwrap(), b.reset(9).unwrap());
        let s = a.reset_day(0).unwrap();
        assert_eq!(s[1], 0.5);
        assert_eq!((s[3], s[4]), (0.0, 1.0));
    }

    #[test]
    fn episode_lasts_one_day() {
        let mut env = Env::full(ctx(), EnvConfig::for_population(CaseConfig::case(1).unwrap(), 6)).unwrap();
        env.reset_day(1).unwrap();
        for h in 0..24 {
            let s = env.step(&[0.0; 4]).unwrap();
            assert_eq!(s.done, h == 23);
            assert_eq!(s.day.is_some(), h == 23);
        }
        assert!(env.step(&[0.0; 4]).is_err());
    }

    #[test]
    fn rewards_sum_to_day_objective() {
        let mut env = Env::full(ctx(), EnvConfig::for_population(CaseConfig::case(1).unwrap(), 6)).unwrap();
        env.reset_day(2).unwrap();
        let mut ret = 0.0;
        let mut day = None;
        for h in 0..24 {
            let u = [0.3, -0.2, if h < 12 { 0.5 } else { -1.0 }, if h >= 17 { 0.8 } else { -1.0 }];
            let s = env.step(&u).unwrap();
            ret += s.reward;
            day = s.day;
        }
        let day = day.unwrap();
        assert!((ret - day.objective()).abs() < 1e-9);
    }

    #[test]
    fn fixed_coefficients_ignore_action() {
        let case = CaseConfig::case(4).unwrap();
        let mut sim = Simulator::new(ctx(), vec![0, 1], 0, SimFlags::from_case(&case, false)).unwrap();
        let mut day = None;
        for _ in 0..24 {
            day = sim.step(DwsCoefficients { alpha_dps: 1.5, alpha_wtd: 0.8 }, Trade::NONE).unwrap().day;
        }
        assert!(day.unwrap().coefficients.iter().all(|c| *c == DwsCoefficients::NEUTRAL));
    }
}
