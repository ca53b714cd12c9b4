//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sesim_core::domain::SesConfig;
use sesim_core::env::StateMode;
use sesim_core::lifecycle::CaseConfig;
use sesim_core::scenario::generate_synthetic;
use sesim_core::td3::Td3Agent;

use crate::experiment::{self, AgentKind, PolicySource, Setup, Trained};
use crate::report::{self, RunTag};
use crate::{checkpoint, config, data};

#[derive(Debug, Parser)]
#[command(name = "sesim", version, about = "Shared energy storage experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent; writes checkpoint.txt, curve.csv and pools.csv.
    Train(TrainArgs),
    /// Run the full lifecycle and write daily, bill, matching, ledger and trace reports.
    Eval(PolicyArgs),
    /// Sweep the prosumer contract threshold over 0..90%.
    SweepXi(PolicyArgs),
    /// Sweep the SDR and AO virtual-trigger LOW thresholds over 0..0.30.
    SweepTriggers(PolicyArgs),
    /// Ablation cases 1-4 across seeds.
    Ablation(AblationArgs),
    /// Write a synthetic scenario as CSV plus manifest.
    GenData(GenArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario manifest; relative paths resolve against $SESIM_DATA_DIR.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Prosumers in the synthetic scenario used when --scenario is absent.
    #[arg(long, default_value_t = 50)]
    pub prosumers: usize,
    /// Days in the synthetic scenario.
    #[arg(long, default_value_t = 30)]
    pub days: usize,
    #[arg(long, default_value_t = 42)]
    pub data_seed: u64,
    /// SES configuration file (`key = value`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Feed the agent only the three factors, without the clock.
    #[arg(long)]
    pub factors_only: bool,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    #[arg(long, default_value_t = 1)]
    pub case: u8,
    #[arg(long, default_value_t = 2000)]
    pub episodes: usize,
    /// cnepr, td3 (uniform buffer) or random.
    #[arg(long, default_value = "cnepr")]
    pub agent: String,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    #[arg(long, default_value_t = 1)]
    pub case: u8,
    /// Trained agent; without it one is trained first (or random actions are used).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "cnepr")]
    pub agent: String,
    #[arg(long, default_value_t = 2000)]
    pub episodes: usize,
}

#[derive(Debug, Clone, Args)]
pub struct AblationArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value = "cnepr")]
    pub agent: String,
    #[arg(long, default_value_t = 2000)]
    pub episodes: usize,
    /// Directory with `case{C}_seed{S}.txt` checkpoints; missing ones are trained.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 50)]
    pub prosumers: usize,
    #[arg(long, default_value_t = 30)]
    pub days: usize,
    #[arg(long, default_value_t = 42)]
    pub data_seed: u64,
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}

fn setup(args: &ScenarioArgs) -> Result<(Setup, String)> {
    let scenario = match &args.scenario {
        Some(p) => {
            let p = data::resolve_data_path(p);
            data::load_scenario(&p).with_context(|| format!("loading scenario {}", p.display()))?
        }
        None => generate_synthetic(args.data_seed, args.prosumers, args.days)?,
    };
    let cfg = match &args.config {
        Some(p) => config::load_config(p)?,
        None => SesConfig::default(),
    };
    let mode = if args.factors_only { StateMode::FactorsOnly } else { StateMode::Extended };
    let describe = match &args.scenario {
        Some(p) => format!("scenario {}", p.display()),
        None => format!("synthetic scenario: {} prosumers, {} days, data seed {}", args.prosumers, args.days, args.data_seed),
    };
    Ok((Setup::new(scenario, cfg, mode)?, describe))
}

fn case(n: u8) -> Result<CaseConfig> {
    CaseConfig::case(n).map_err(|e| anyhow::anyhow!("invalid --case: {e}"))
}

fn out_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn write_summary(dir: &Path, text: &str) -> Result<()> {
    let p = dir.join("summary.txt");
    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
    print!("{text}");
    Ok(())
}

/// Loads `--checkpoint`, or trains an agent with the given flags.
fn policy_agent(args: &PolicyArgs, setup: &Setup) -> Result<Trained> {
    if let Some(p) = &args.checkpoint {
        let (agent, _) = checkpoint::load(p, Some(&setup.model_hash()))
            .with_context(|| format!("loading checkpoint {}", p.display()))?;
        if agent.state_dim() != setup.state_mode.dim() {
            bail!("checkpoint expects {} state inputs, scenario provides {}", agent.state_dim(), setup.state_mode.dim());
        }
        return Ok(Trained { kind: AgentKind::Cnepr, agent: Some(agent), curve: Vec::new(), occupancy: Vec::new() });
    }
    let kind: AgentKind = args.agent.parse()?;
    Ok(experiment::train_agent(setup, case(args.case)?, kind, args.common.seed, args.episodes)?)
}

fn policy_label(args: &PolicyArgs) -> String {
    match &args.checkpoint {
        Some(p) => format!("checkpoint={}", p.display()),
        None => format!("agent={} episodes={}", args.agent, args.episodes),
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (setup, describe) = setup(&a.common)?;
    let kind: AgentKind = a.agent.parse()?;
    let c = case(a.case)?;
    let hash = setup.run_hash(&["train", &format!("case={}", a.case), kind.name(), &a.episodes.to_string()]);
    let tag = RunTag::new(a.common.seed, &hash);
    out_dir(&a.common.out)?;
    let t = experiment::train_agent(&setup, c, kind, a.common.seed, a.episodes)?;
    report::curve(&tag, kind.name(), &t.curve).write(&a.common.out.join("curve.csv"))?;
    let mut s = String::new();
    writeln!(s, "{describe}")?;
    writeln!(s, "agent {} case {} seed {} episodes {}", kind.name(), a.case, a.common.seed, a.episodes)?;
    if let Some(agent) = &t.agent {
        checkpoint::save(&a.common.out.join("checkpoint.txt"), agent, &setup.model_hash())?;
        report::occupancy(&tag, &t.occupancy).write(&a.common.out.join("pools.csv"))?;
        writeln!(s, "updates {}", agent.updates())?;
    }
    let tail = &t.curve[t.curve.len().saturating_sub(100)..];
    let tail_mean = tail.iter().map(|e| e.ret).sum::<f64>() / tail.len().max(1) as f64;
    writeln!(s, "mean return, last {} episodes: {tail_mean:.4}", tail.len())?;
    writeln!(s, "config hash {hash}")?;
    write_summary(&a.common.out, &s)
}

fn cmd_eval(a: &PolicyArgs) -> Result<()> {
    let (setup, describe) = setup(&a.common)?;
    let c = case(a.case)?;
    let hash = setup.run_hash(&["eval", &format!("case={}", a.case), &policy_label(a)]);
    let tag = RunTag::new(a.common.seed, &hash);
    out_dir(&a.common.out)?;
    let trained = policy_agent(a, &setup)?;
    let policy = PolicySource::from_trained(&trained, a.common.seed);
    let ctx = setup.context()?;
    let rep = experiment::lifecycle(&setup, &ctx, c, policy, true)?;
    let days: Vec<_> = rep.days.iter().map(|d| &d.result).collect();
    let dir = &a.common.out;
    report::daily(&tag, &rep).write(&dir.join("daily.csv"))?;
    report::bills(&tag, &days).write(&dir.join("bills.csv"))?;
    report::matching(&tag, &rep.matchings).write(&dir.join("matching.csv"))?;
    report::ledger(&tag, &days).write(&dir.join("ledger.csv"))?;
    report::settlements(&tag, &days).write(&dir.join("settlements.csv"))?;
    report::trace(&tag, &days).write(&dir.join("trace.csv"))?;
    let sm = experiment::summarize(&rep, &ctx)?;
    let one_day = experiment::mean_daily_objective(&setup, c, policy)?;
    let mut s = String::new();
    writeln!(s, "{describe}")?;
    writeln!(s, "case {} {}", a.case, policy_label(a))?;
    writeln!(s, "days {} participant-days {} reconstructions {}", sm.days, sm.participant_days, sm.reconstructions)?;
    writeln!(s, "participants after matching {}", sm.participants)?;
    writeln!(s, "objective $/day {:.4}", sm.obj_per_day)?;
    writeln!(s, "SES profit $/day {:.4}", sm.ses_profit_per_day)?;
    writeln!(s, "ESP allocated $/day {:.4}", sm.esp_profit_per_day)?;
    writeln!(s, "bill reduction $/participant-day {:.4}", sm.bill_reduction_per_participant_day)?;
    writeln!(s, "allocated profit $/participant-day {:.4}", sm.allocated_per_participant_day)?;
    writeln!(s, "G_dw {:.4}", sm.g_dw)?;
    writeln!(s, "trigger rate {:.4}", sm.trigger_rate)?;
    writeln!(s, "one-day episode objective, full population $/day {one_day:.4}")?;
    writeln!(s, "config hash {hash}")?;
    write_summary(dir, &s)
}

fn cmd_sweep_xi(a: &PolicyArgs) -> Result<()> {
    let (setup, describe) = setup(&a.common)?;
    let hash = setup.run_hash(&["sweep-xi", &policy_label(a)]);
    let tag = RunTag::new(a.common.seed, &hash);
    out_dir(&a.common.out)?;
    let trained = policy_agent(a, &setup)?;
    let rows = experiment::sweep_xi(&setup, PolicySource::from_trained(&trained, a.common.seed), &experiment::xi_grid())?;
    report::sweep_xi(&tag, &rows).write(&a.common.out.join("sweep_xi.csv"))?;
    let mut s = format!("{describe}\n{}\n", policy_label(a));
    writeln!(s, "{:>6} {:>10} {:>8} {:>8} {:>8} {:>10} {:>7}", "xi", "obj", "number", "bill", "alloc", "esp", "G_dw")?;
    for r in &rows {
        writeln!(
            s,
            "{:>6.2} {:>10.3} {:>8} {:>8.4} {:>8.4} {:>10.3} {:>7.4}",
            r.xi_pro, r.obj, r.retained, r.bill_reduction, r.participant_profit, r.esp_profit, r.g_dw
        )?;
    }
    writeln!(s, "config hash {hash}")?;
    write_summary(&a.common.out, &s)
}

fn cmd_sweep_triggers(a: &PolicyArgs) -> Result<()> {
    let (setup, describe) = setup(&a.common)?;
    let hash = setup.run_hash(&["sweep-triggers", &policy_label(a)]);
    let tag = RunTag::new(a.common.seed, &hash);
    out_dir(&a.common.out)?;
    let trained = policy_agent(a, &setup)?;
    let grid = experiment::trigger_grid();
    let rows =
        experiment::sweep_triggers(&setup, PolicySource::from_trained(&trained, a.common.seed), &grid, &grid)?;
    report::sweep_triggers(&tag, &rows).write(&a.common.out.join("sweep_triggers.csv"))?;
    let mut s = format!("{describe}\n{}\n", policy_label(a));
    writeln!(s, "{:>8} {:>8} {:>12} {:>8}", "sdr_low", "ao_low", "ses $/day", "rate")?;
    for r in &rows {
        writeln!(s, "{:>8.2} {:>8.2} {:>12.4} {:>8.4}", r.sdr_low, r.ao_low, r.ses_profit, r.trigger_rate)?;
    }
    if let Some(best) = rows.iter().max_by(|x, y| x.ses_profit.total_cmp(&y.ses_profit)) {
        writeln!(s, "best cell sdr_low {} ao_low {}", best.sdr_low, best.ao_low)?;
    }
    writeln!(s, "config hash {hash}")?;
    write_summary(&a.common.out, &s)
}

fn cmd_ablation(a: &AblationArgs) -> Result<()> {
    let (setup, describe) = setup(&a.common)?;
    let kind: AgentKind = a.agent.parse()?;
    if a.seeds.is_empty() {
        bail!("--seeds must list at least one seed");
    }
    let label = match &a.checkpoints {
        Some(d) => format!("checkpoints={}", d.display()),
        None => String::new(),
    };
    let hash = setup.run_hash(&["ablation", kind.name(), &a.episodes.to_string(), &label]);
    out_dir(&a.common.out)?;
    let model_hash = setup.model_hash();
    let loader = |seed: u64, case: u8| -> Result<Option<Td3Agent>, crate::IoError> {
        let Some(dir) = &a.checkpoints else { return Ok(None) };
        let p = dir.join(format!("case{case}_seed{seed}.txt"));
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(checkpoint::load(&p, Some(&model_hash))?.0))
    };
    let ab = experiment::ablation(&setup, kind, &a.seeds, a.episodes, &loader)?;
    let mut table = report::Table::new(&["case", "prosumer_profit", "esp_profit", "total", "loss", "participants"]);
    for (seed, rows) in ab.seeds.iter().zip(&ab.rows) {
        table.append(report::ablation(&RunTag::new(*seed, &hash), rows, rows[0].total));
    }
    table.write(&a.common.out.join("ablation.csv"))?;
    let mean = ab.mean();
    report::ablation(&RunTag::seeds(&a.seeds, &hash), &mean, mean[0].total)
        .write(&a.common.out.join("ablation_summary.csv"))?;
    let mut s = format!("{describe}\nagent {} episodes {} seeds {:?}\n", kind.name(), a.episodes, a.seeds);
    writeln!(s, "{:>4} {:>10} {:>10} {:>10} {:>8} {:>6}", "case", "prosumer", "esp", "total", "loss", "number")?;
    for r in &mean {
        writeln!(
            s,
            "{:>4} {:>10.4} {:>10.3} {:>10.3} {:>7.2}% {:>6}",
            r.case,
            r.prosumer_profit,
            r.esp_profit,
            r.total,
            100.0 * report::relative_loss(mean[0].total, r.total),
            r.participants
        )?;
    }
    writeln!(s, "config hash {hash}")?;
    write_summary(&a.common.out, &s)
}

fn cmd_gen_data(a: &GenArgs) -> Result<()> {
    let scenario = generate_synthetic(a.data_seed, a.prosumers, a.days)?;
    out_dir(&a.out)?;
    let manifest = data::write_scenario(&a.out, &scenario, data::default_start())?;
    println!("wrote {}", manifest.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::SweepXi(a) => cmd_sweep_xi(a),
        Command::SweepTriggers(a) => cmd_sweep_triggers(a),
        Command::Ablation(a) => cmd_ablation(a),
        Command::GenData(a) => cmd_gen_data(a),
    }
}
