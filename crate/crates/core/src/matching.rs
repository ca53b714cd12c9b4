//! Matching contract between the ESP and prosumers, and the Shapley split of
//! the cooperative profit.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// ξ = max(ξ^{pro}, ξ^{ESP}).
pub fn contract_threshold(xi_pro: f64, xi_esp: f64) -> Result<f64> {
    for (name, v) in [("xi_pro", xi_pro), ("xi_esp", xi_esp)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(xi_pro.max(xi_esp))
}

/// One prosumer's trial-period bills.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialBill {
    pub prosumer: usize,
    /// Σ B^{ORI}_j over the trial.
    pub baseline: f64,
    /// Σ R_{bill,j} over the trial.
    pub reduction: f64,
}

impl TrialBill {
    pub fn bill(&self) -> f64 {
        self.baseline - self.reduction
    }

    /// R_{bill,j}/B^{ORI}_j, undefined for a zero baseline.
    pub fn ratio(&self) -> Option<f64> {
        (self.baseline > 0.0).then(|| self.reduction / self.baseline)
    }

    pub fn passes(&self, xi: f64) -> bool {
        match self.ratio() {
            Some(r) => r >= xi,
            None => self.reduction >= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub threshold: f64,
    pub bills: Vec<TrialBill>,
    pub retained: Vec<usize>,
    pub exited: Vec<usize>,
}

/// Retains every prosumer whose trial bill reduction ratio reaches `xi`.
///
/// The ratio is taken over trial totals, which weights days by their
/// baseline bill.
pub fn evaluate_matching(bills: &[TrialBill], xi: f64) -> MatchOutcome {
    let (mut retained, mut exited) = (Vec::new(), Vec::new());
    for b in bills {
        if b.passes(xi) {
            retained.push(b.prosumer);
        } else {
            exited.push(b.prosumer);
        }
    }
    MatchOutcome { threshold: xi, bills: bills.to_vec(), retained, exited }
}

/// Characteristic function of the two-player game (ESP, prosumer coalition).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Characteristic {
    pub empty: f64,
    pub esp: f64,
    pub prosumers: f64,
    pub grand: f64,
}

impl Characteristic {
    fn value(&self, members: u32) -> f64 {
        match members {
            0b00 => self.empty,
            0b01 => self.esp,
            0b10 => self.prosumers,
            _ => self.grand,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub esp_share: f64,
    pub prosumer_pool: f64,
    pub per_prosumer: Vec<f64>,
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Shapley value of each player by enumeration over coalitions without it.
fn shapley(v: &Characteristic) -> [f64; 2] {
    const N: u32 = 2;
    let mut phi = [0.0; 2];
    for (i, out) in phi.iter_mut().enumerate() {
        let me = 1u32 << i;
        for s in 0..(1u32 << N) {
            if s & me != 0 {
                continue;
            }
            let size = s.count_ones();
            let weight = factorial(size) * factorial(N - size - 1) / factorial(N);
            *out += weight * (v.value(s | me) - v.value(s));
        }
    }
    phi
}

/// Splits the grand-coalition value between the ESP and the prosumer pool.
pub fn shapley_split(v: &Characteristic) -> Result<Allocation> {
    if ![v.empty, v.esp, v.prosumers, v.grand].iter().all(|x| x.is_finite()) {
        return Err(Error::Config("characteristic values must be finite".into()));
    }
    let [esp_share, prosumer_pool] = shapley(v);
    Ok(Allocation { esp_share, prosumer_pool, per_prosumer: Vec::new() })
}

/// Shares `pool` in proportion to battery capacity.
pub fn allocate_by_capacity(pool: f64, capacities: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = capacities.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Config("total capacity must be > 0".into()));
    }
    Ok(capacities.iter().map(|c| c / total * pool).collect())
}
