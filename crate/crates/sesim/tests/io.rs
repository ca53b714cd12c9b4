//! Scenario CSV round trips, loader diagnostics and checkpoint files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sesim::checkpoint;
use sesim::data::{default_start, load_csv, load_scenario, write_scenario, LoadDefaults};
use sesim::IoError;
use sesim_core::scenario::generate_synthetic;
use sesim_core::td3::{Td3Agent, Td3Config};

#[test]
fn synthetic_scenario_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let sc = generate_synthetic(3, 6, 3).unwrap();
    let manifest = write_scenario(dir.path(), &sc, default_start()).unwrap();
    let back = load_scenario(&manifest).unwrap();
    assert_eq!(back, sc);
}

#[test]
fn loader_without_metadata_uses_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let sc = generate_synthetic(1, 2, 1).unwrap();
    write_scenario(dir.path(), &sc, default_start()).unwrap();
    let d = LoadDefaults { fit: 0.05, ess_capacity_kwh: 10.0, ess_power_kw: 5.0, seed: 9 };
    let back = load_csv(&dir.path().join("prosumers.csv"), &dir.path().join("prices.csv"), None, &d).unwrap();
    assert_eq!(back.tariffs.fit, 0.05);
    assert_eq!(back.seed, 9);
    assert!(back.prosumers.iter().all(|p| p.ess_capacity_kwh == 10.0 && p.ess_power_kw == 5.0));
    assert_eq!(back.prosumers[1].demand_kw, sc.prosumers[1].demand_kw);
}

fn stamp(h: usize) -> String {
    (default_start() + chrono::TimeDelta::hours(h as i64)).format("%Y-%m-%dT%H:%M:%S").to_string()
}

fn prices(hours: impl IntoIterator<Item = usize>) -> String {
    let mut s = String::from("timestamp,spot_price,tou_price\n");
    for h in hours {
        let _ = writeln!(s, "{},0.1,0.2", stamp(h));
    }
    s
}

fn prosumers(hours: impl IntoIterator<Item = usize>) -> String {
    let mut s = String::from("timestamp,prosumer_id,demand_kw,pv_kw\n");
    for h in hours {
        let _ = writeln!(s, "{},7,1.5,0.5", stamp(h));
    }
    s
}

fn load(prices_csv: &str, prosumers_csv: &str) -> Result<sesim_core::scenario::Scenario, IoError> {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("prices.csv"), prices_csv).unwrap();
    fs::write(d.join("prosumers.csv"), prosumers_csv).unwrap();
    load_csv(&d.join("prosumers.csv"), &d.join("prices.csv"), None, &LoadDefaults::default())
}

fn error_line(r: Result<sesim_core::scenario::Scenario, IoError>, file: &str) -> (u64, String) {
    match r {
        Err(IoError::Data { path, line, msg }) => {
            assert_eq!(path.file_name().unwrap(), file, "{msg}");
            (line, msg)
        }
        other => panic!("expected a data error, got {other:?}"),
    }
}

#[test]
fn valid_day_loads() {
    let r = load(&prices(0..24), &prosumers(0..24));
    let sc = r.unwrap();
    assert_eq!(sc.days, 1);
    assert_eq!(sc.prosumers[0].id, 7);
    // 24-hour persistence falls back to the current price on the first day.
    assert_eq!(sc.tariffs.spot_forecast, sc.tariffs.spot);
}

#[test]
fn duplicate_timestamp_reports_its_line() {
    let hours: Vec<usize> = (0..10).chain(9..23).collect();
    let r = load(&prices(hours), &prosumers(0..24));
    let (line, msg) = error_line(r, "prices.csv");
    assert_eq!(line, 12);
    assert!(msg.contains("duplicate") && msg.contains("line 11"), "{msg}");
}

#[test]
fn gap_reports_its_line() {
    let hours: Vec<usize> = (0..5).chain(6..25).collect();
    let r = load(&prices(hours), &prosumers(0..24));
    let (line, msg) = error_line(r, "prices.csv");
    assert_eq!(line, 7);
    assert!(msg.contains("missing hours"), "{msg}");
}

#[test]
fn out_of_order_reports_its_line() {
    let mut hours: Vec<usize> = (0..24).collect();
    hours.swap(3, 4);
    let r = load(&prices(hours), &prosumers(0..24));
    let (line, _) = error_line(r, "prices.csv");
    assert_eq!(line, 5);
}

#[test]
fn partial_day_and_late_start_are_rejected() {
    let r = load(&prices(0..30), &prosumers(0..30));
    let (line, msg) = error_line(r, "prices.csv");
    assert_eq!(line, 31);
    assert!(msg.contains("whole number of days"), "{msg}");

    let r = load(&prices(1..25), &prosumers(1..25));
    let (line, msg) = error_line(r, "prices.csv");
    assert_eq!(line, 2);
    assert!(msg.contains("midnight"), "{msg}");
}

#[test]
fn bad_values_report_their_line() {
    let p = prices(0..24).replacen("0.1,0.2", "abc,0.2", 1);
    let r = load(&p, &prosumers(0..24));
    let (line, msg) = error_line(r, "prices.csv");
    assert_eq!(line, 2);
    assert!(msg.contains("spot_price"), "{msg}");

    let q = prosumers(0..24).replace(&format!("{},7,1.5,0.5", stamp(20)), &format!("{},7,-1,0.5", stamp(20)));
    let r = load(&prices(0..24), &q);
    let (line, _) = error_line(r, "prosumers.csv");
    assert_eq!(line, 22);
}

#[test]
fn prosumer_series_must_cover_the_price_horizon() {
    let r = load(&prices(0..24), &prosumers(0..23));
    let (line, msg) = error_line(r, "prosumers.csv");
    assert_eq!(line, 24);
    assert!(msg.contains("23 hours"), "{msg}");
}

#[test]
fn wrong_header_is_line_one() {
    let p = prices(0..24).replacen("spot_price", "spot", 1);
    let r = load(&p, &prosumers(0..24));
    assert_eq!(error_line(r, "prices.csv").0, 1);
}

#[test]
fn manifest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let sc = generate_synthetic(2, 2, 1).unwrap();
    let manifest = write_scenario(dir.path(), &sc, default_start()).unwrap();
    let text = fs::read_to_string(&manifest).unwrap();

    fs::write(&manifest, format!("{text}colour = blue\n")).unwrap();
    assert!(matches!(load_scenario(&manifest), Err(IoError::Parse { line: 9, .. })));

    fs::write(&manifest, text.replace("horizon_days = 1", "horizon_days = 2")).unwrap();
    assert!(matches!(load_scenario(&manifest), Err(IoError::Invalid(_))));

    fs::write(&manifest, text.replace("prices = prices.csv\n", "")).unwrap();
    assert!(matches!(load_scenario(&manifest), Err(IoError::Invalid(_))));
}

#[test]
fn data_dir_variable_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let sc = generate_synthetic(5, 2, 1).unwrap();
    write_scenario(&dir.path().join("set"), &sc, default_start()).unwrap();
    std::env::set_var(sesim::DATA_DIR_ENV, dir.path());
    let p = sesim::data::resolve_data_path(Path::new("set/scenario.txt"));
    std::env::remove_var(sesim::DATA_DIR_ENV);
    assert_eq!(load_scenario(&p).unwrap(), sc);
    let abs = dir.path().join("x");
    assert_eq!(sesim::data::resolve_data_path(&abs), abs);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = Td3Config { gamma: 0.95, tau: 0.01, ..Td3Config::default() };
    let mut agent = Td3Agent::new(6, cfg, 77).unwrap();
    agent.set_updates(1234);
    let text = checkpoint::to_string(&agent, "abcdef0123456789");
    let (back, hash) = checkpoint::from_str(&text, Some("abcdef0123456789")).unwrap();
    assert_eq!(hash, "abcdef0123456789");
    assert_eq!(back.config(), agent.config());
    assert_eq!(back.updates(), 1234);
    for ((na, a), (nb, b)) in agent.networks().into_iter().zip(back.networks()) {
        assert_eq!(na, nb);
        assert_eq!(a, b);
    }
    let s = [0.3, 0.2, 0.9, 0.0, 1.0, 0.5];
    assert_eq!(agent.act(&s).unwrap(), back.act(&s).unwrap());
    assert_eq!(checkpoint::to_string(&back, "abcdef0123456789"), text);
}

#[test]
fn checkpoint_file_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let agent = Td3Agent::new(3, Td3Config::default(), 1).unwrap();
    let p = dir.path().join("agent.txt");
    checkpoint::save(&p, &agent, "h").unwrap();
    let (back, _) = checkpoint::load(&p, None).unwrap();
    assert_eq!(back.state_dim(), 3);
    assert!(checkpoint::load(&dir.path().join("missing.txt"), None).is_err());
}

#[test]
fn checkpoint_rejects_mismatch_and_damage() {
    let agent = Td3Agent::new(6, Td3Config::default(), 3).unwrap();
    let text = checkpoint::to_string(&agent, "aaaa");
    assert!(matches!(checkpoint::from_str(&text, Some("bbbb")), Err(IoError::Parse { line: 2, .. })));
    assert!(checkpoint::from_str(&text.replacen("checkpoint 1", "checkpoint 9", 1), None).is_err());
    let cut: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
    assert!(checkpoint::from_str(&cut, None).is_err());
    let bad = text.replacen("w ", "w zz ", 1);
    assert!(checkpoint::from_str(&bad, None).is_err());
}
