//! Versioned text checkpoint of a TD3 agent.
//!
//! Floats are written as the hex of their IEEE-754 bits so a save/load round
//! trip is exact. Optimizer momentum is not stored: a checkpoint restores the
//! policy and value networks, not the optimizer trajectory.

use std::fmt::Write as _;
use std::path::Path;

use sesim_core::nn::{Activation, Mlp};
use sesim_core::td3::{Td3Agent, Td3Config};

use crate::IoError;

const MAGIC: &str = "sesim-checkpoint";
const VERSION: u32 = 1;

fn hex_f64(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn parse_hex(s: &str, line: usize) -> Result<f64, IoError> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| IoError::Parse { line, msg: format!("bad hex float {s:?}") })
}

fn write_net(out: &mut String, name: &str, net: &Mlp) {
    let _ = writeln!(out, "net {name} {}", net.layers.len());
    for l in &net.layers {
        let act = match l.activation {
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        };
        let _ = writeln!(out, "layer {} {} {act}", l.inputs, l.outputs);
        let w: Vec<String> = l.w.iter().map(|x| hex_f64(*x)).collect();
        let b: Vec<String> = l.b.iter().map(|x| hex_f64(*x)).collect();
        let _ = writeln!(out, "w {}", w.join(" "));
        let _ = writeln!(out, "b {}", b.join(" "));
    }
}

pub fn to_string(agent: &Td3Agent, config_hash: &str) -> String {
    let c = agent.config();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "config_hash {config_hash}");
    let _ = writeln!(out, "state_dim {}", agent.state_dim());
    let hidden: Vec<String> = c.hidden.iter().map(|h| h.to_string()).collect();
    let _ = writeln!(out, "hidden {}", hidden.join(","));
    for (k, v) in [
        ("gamma", c.gamma),
        ("actor_lr", c.actor_lr),
        ("critic_lr", c.critic_lr),
        ("momentum", c.momentum),
        ("target_noise", c.target_noise),
        ("noise_clip", c.noise_clip),
        ("tau", c.tau),
    ] {
        let _ = writeln!(out, "{k} {}", hex_f64(v));
    }
    let _ = writeln!(out, "policy_delay {}", c.policy_delay);
    let _ = writeln!(out, "updates {}", agent.updates());
    for (name, net) in agent.networks() {
        write_net(&mut out, name, net);
    }
    out.push_str("end\n");
    out
}

pub fn save(path: &Path, agent: &Td3Agent, config_hash: &str) -> Result<(), IoError> {
    std::fs::write(path, to_string(agent, config_hash)).map_err(|e| IoError::file(path, e))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next line as (1-based number, key, rest).
    fn next(&mut self) -> Result<(usize, &'a str, &'a str), IoError> {
        let (i, l) = self
            .inner
            .next()
            .ok_or(IoError::Parse { line: 0, msg: "unexpected end of checkpoint".into() })?;
        let (k, rest) = l.split_once(' ').unwrap_or((l, ""));
        Ok((i + 1, k, rest))
    }

    fn expect(&mut self, key: &str) -> Result<(usize, &'a str), IoError> {
        let (line, k, rest) = self.next()?;
        if k != key {
            return Err(IoError::Parse { line, msg: format!("expected {key:?}, found {k:?}") });
        }
        Ok((line, rest))
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, IoError> {
        let (line, rest) = self.expect(key)?;
        rest.trim().parse().map_err(|_| IoError::Parse { line, msg: format!("{key}: bad value {rest:?}") })
    }

    fn float(&mut self, key: &str) -> Result<f64, IoError> {
        let (line, rest) = self.expect(key)?;
        parse_hex(rest.trim(), line)
    }
}

fn read_values(line: usize, rest: &str, want: usize) -> Result<Vec<f64>, IoError> {
    let v = rest.split_whitespace().map(|s| parse_hex(s, line)).collect::<Result<Vec<_>, _>>()?;
    if v.len() != want {
        return Err(IoError::Parse { line, msg: format!("expected {want} values, found {}", v.len()) });
    }
    Ok(v)
}

/// Parses a checkpoint. With `expected_hash`, a differing hash is an error.
pub fn from_str(text: &str, expected_hash: Option<&str>) -> Result<(Td3Agent, String), IoError> {
    let mut it = Lines { inner: text.lines().enumerate() };
    let (line, version) = it.expect(MAGIC)?;
    if version.trim() != VERSION.to_string() {
        return Err(IoError::Parse { line, msg: format!("unsupported checkpoint version {version:?}") });
    }
    let (line, hash) = it.expect("config_hash")?;
    let hash = hash.trim().to_string();
    if let Some(want) = expected_hash {
        if want != hash {
            return Err(IoError::Parse { line, msg: format!("config hash {hash} does not match {want}") });
        }
    }
    let state_dim: usize = it.number("state_dim")?;
    let (line, hidden) = it.expect("hidden")?;
    let hidden = hidden
        .split(',')
        .map(|h| h.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| IoError::Parse { line, msg: format!("bad hidden sizes {hidden:?}") })?;
    let cfg = Td3Config {
        hidden,
        gamma: it.float("gamma")?,
        actor_lr: it.float("actor_lr")?,
        critic_lr: it.float("critic_lr")?,
        momentum: it.float("momentum")?,
        target_noise: it.float("target_noise")?,
        noise_clip: it.float("noise_clip")?,
        tau: it.float("tau")?,
        policy_delay: it.number("policy_delay")?,
    };
    let updates: u64 = it.number("updates")?;
    let mut agent = Td3Agent::new(state_dim, cfg, 0)?;
    agent.set_updates(updates);
    for (name, net) in agent.networks_mut() {
        let (line, rest) = it.expect("net")?;
        let mut parts = rest.split_whitespace();
        let (got, n) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
        if got != name || n.parse::<usize>().ok() != Some(net.layers.len()) {
            return Err(IoError::Parse { line, msg: format!("expected net {name} with {} layers", net.layers.len()) });
        }
        for layer in &mut net.layers {
            let (line, rest) = it.expect("layer")?;
            let shape = format!(
                "{} {} {}",
                layer.inputs,
                layer.outputs,
                if layer.activation == Activation::Tanh { "tanh" } else { "linear" }
            );
            if rest.trim() != shape {
                return Err(IoError::Parse { line, msg: format!("layer shape {rest:?} does not match {shape:?}") });
            }
            let (line, w) = it.expect("w")?;
            layer.w = read_values(line, w, layer.inputs * layer.outputs)?;
            let (line, b) = it.expect("b")?;
            layer.b = read_values(line, b, layer.outputs)?;
        }
    }
    it.expect("end")?;
    Ok((agent, hash))
}

pub fn load(path: &Path, expected_hash: Option<&str>) -> Result<(Td3Agent, String), IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    from_str(&text, expected_hash)
}
