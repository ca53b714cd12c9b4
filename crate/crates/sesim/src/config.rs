//! `key = value` configuration files and the config hash stamped on reports.

use std::fmt::Write as _;
use std::path::Path;

use sesim_core::domain::{SesConfig, TradeConvention};
use sha2::{Digest, Sha256};

use crate::IoError;

fn parse_f64(key: &str, value: &str, line: usize) -> Result<f64, IoError> {
    value.parse().map_err(|_| IoError::Parse {
        line,
        msg: format!("{key}: expected a number, got {value:?}"),
    })
}

/// Applies `key = value` lines to `cfg`. Blank lines and `#` comments are skipped.
pub fn apply_config(cfg: &mut SesConfig, text: &str) -> Result<(), IoError> {
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| IoError::Parse {
            line,
            msg: format!("expected key = value, got {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let slot = match key {
            "eta_ch" => &mut cfg.eta_ch,
            "eta_dis" => &mut cfg.eta_dis,
            "beta_fit" => &mut cfg.beta_fit,
            "beta_tou" => &mut cfg.beta_tou,
            "sdr_up" => &mut cfg.sdr_up,
            "sdr_low" => &mut cfg.sdr_low,
            "soc_up" => &mut cfg.soc_up,
            "soc_low" => &mut cfg.soc_low,
            "ao_up" => &mut cfg.ao_up,
            "ao_low" => &mut cfg.ao_low,
            "k_e" => &mut cfg.k_e,
            "gamma_ses" => &mut cfg.gamma_ses,
            "xi_pro" => &mut cfg.xi_pro,
            "xi_esp" => &mut cfg.xi_esp,
            "alpha_dps_max" => &mut cfg.alpha_dps_max,
            "alpha_wtd_min" => &mut cfg.alpha_wtd_min,
            "ao_window_hours" => {
                cfg.ao_window_hours = value.parse().map_err(|_| IoError::Parse {
                    line,
                    msg: format!("ao_window_hours: expected an integer, got {value:?}"),
                })?;
                continue;
            }
            "trade_convention" => {
                cfg.trade_convention = match value {
                    "cashflow" => TradeConvention::Cashflow,
                    "as_printed" => TradeConvention::AsPrinted,
                    other => {
                        return Err(IoError::Parse {
                            line,
                            msg: format!("trade_convention must be cashflow or as_printed, got {other:?}"),
                        })
                    }
                };
                continue;
            }
            other => return Err(IoError::Parse { line, msg: format!("unknown key {other:?}") }),
        };
        *slot = parse_f64(key, value, line)?;
    }
    cfg.validate()?;
    Ok(())
}

pub fn parse_config(text: &str) -> Result<SesConfig, IoError> {
    let mut cfg = SesConfig::default();
    apply_config(&mut cfg, text)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SesConfig, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_config(&text)
}

/// Canonical text form; parsing it yields the same configuration.
pub fn config_to_string(cfg: &SesConfig) -> String {
    let mut s = String::new();
    for (k, v) in [
        ("eta_ch", cfg.eta_ch),
        ("eta_dis", cfg.eta_dis),
        ("beta_fit", cfg.beta_fit),
        ("beta_tou", cfg.beta_tou),
        ("sdr_up", cfg.sdr_up),
        ("sdr_low", cfg.sdr_low),
        ("soc_up", cfg.soc_up),
        ("soc_low", cfg.soc_low),
        ("ao_up", cfg.ao_up),
        ("ao_low", cfg.ao_low),
        ("k_e", cfg.k_e),
        ("gamma_ses", cfg.gamma_ses),
        ("xi_pro", cfg.xi_pro),
        ("xi_esp", cfg.xi_esp),
        ("alpha_dps_max", cfg.alpha_dps_max),
        ("alpha_wtd_min", cfg.alpha_wtd_min),
    ] {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "ao_window_hours = {}", cfg.ao_window_hours);
    let convention = match cfg.trade_convention {
        TradeConvention::Cashflow => "cashflow",
        TradeConvention::AsPrinted => "as_printed",
    };
    let _ = writeln!(s, "trade_convention = {convention}");
    s
}

/// First 16 hex digits of SHA-256 over the given parts, newline-joined.
pub fn config_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())[..16].to_string()
}
