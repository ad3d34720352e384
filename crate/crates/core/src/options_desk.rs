//! Stock options held by origin servers against future deficits.
//!
//! Each contract grants the right to acquire up to `quantity_gb` at the
//! strike until expiry. Contracts are bought from a deficit forecast and
//! exercised, soonest expiry first, against deficits the secondary market
//! could not cover.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Number of past daily deficits the purchase forecast looks at.
    pub window_days: usize,
    /// Smoothing weight of the exponentially weighted deficit average.
    pub ewma_alpha: f64,
    /// First day on which contracts may be bought.
    pub first_purchase_day: u32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            window_days: 14,
            ewma_alpha: 0.3,
            first_purchase_day: 7,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_days == 0 {
            return Err(Error::param("window_days", "must be >= 1"));
        }
        if !(self.ewma_alpha > 0.0 && self.ewma_alpha <= 1.0) {
            return Err(Error::param("ewma_alpha", "must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractState {
    Active,
    Exhausted,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionContract {
    pub id: u64,
    pub os: usize,
    pub sc: u32,
    pub purchase_day: u32,
    /// First day on which the contract can no longer be exercised.
    pub expiry_day: u32,
    pub quantity_gb: f64,
    pub remaining_gb: f64,
    pub premium_per_gb: f64,
    pub exercised_gb: f64,
    pub state: ContractState,
}

impl OptionContract {
    pub fn premium_paid(&self) -> f64 {
        self.quantity_gb * self.premium_per_gb
    }

    pub fn is_live(&self, day: u32) -> bool {
        self.state == ContractState::Active && self.purchase_day <= day && day < self.expiry_day
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeficitRecord {
    pub day: u32,
    pub deficit_gb: f64,
}

/// Decides how much coverage to buy from recent deficits.
pub trait PurchasePolicy {
    fn quantity(&self, recent_deficits: &[f64], active_coverage: f64) -> f64;
}

/// Exponentially weighted mean of the window (oldest first), less the
/// coverage still held, floored at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EwmaPolicy {
    pub alpha: f64,
}

impl EwmaPolicy {
    pub fn smoothed(&self, window: &[f64]) -> f64 {
        let mut it = window.iter();
        let Some(&first) = it.next() else {
            return 0.0;
        };
        it.fold(first, |acc, &x| self.alpha * x + (1.0 - self.alpha) * acc)
    }
}

impl PurchasePolicy for EwmaPolicy {
    fn quantity(&self, recent_deficits: &[f64], active_coverage: f64) -> f64 {
        (self.smoothed(recent_deficits) - active_coverage).max(0.0)
    }
}

/// Result of exercising against one day's deficit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Exercise {
    pub covered_gb: f64,
    /// `(contract id, quantity)` drawn from each contract.
    pub draws: Vec<(u64, f64)>,
}

/// One origin server's option book.
#[derive(Debug, Clone)]
pub struct OptionsDesk {
    pub os: usize,
    pub config: PolicyConfig,
    contracts: Vec<OptionContract>,
    deficits: Vec<DeficitRecord>,
    next_id: u64,
}

impl OptionsDesk {
    pub fn new(os: usize, config: PolicyConfig) -> Self {
        OptionsDesk {
            os,
            config,
            contracts: Vec::new(),
            deficits: Vec::new(),
            next_id: 0,
        }
    }

    pub fn contracts(&self) -> &[OptionContract] {
        &self.contracts
    }

    pub fn deficits(&self) -> &[DeficitRecord] {
        &self.deficits
    }

    /// Stores the post-market deficit for `day`. Days must be recorded once
    /// each, in increasing order.
    pub fn record_deficit(&mut self, day: u32, deficit_gb: f64) -> Result<()> {
        if let Some(last) = self.deficits.last() {
            if last.day == day {
                return Err(Error::DuplicateDeficit {
                    os_id: self.os.to_string(),
                    day,
                });
            }
            if day < last.day {
                return Err(Error::DaySkew {
                    os_id: self.os.to_string(),
                    expected: last.day + 1,
                    got: day,
                });
            }
        }
        if !(deficit_gb >= 0.0) {
            return Err(Error::param("deficit_gb", "must be >= 0"));
        }
        self.deficits.push(DeficitRecord { day, deficit_gb });
        Ok(())
    }

    /// Unexercised quantity of contracts usable on `day`.
    pub fn active_coverage(&self, day: u32) -> f64 {
        self.contracts.iter().filter(|c| c.is_live(day)).map(|c| c.remaining_gb).sum()
    }

    /// Quantity the policy wants to buy on the morning of `day`.
    pub fn plan_purchase(&self, day: u32, policy: &dyn PurchasePolicy) -> f64 {
        if day < self.config.first_purchase_day {
            return 0.0;
        }
        let n = self.deficits.len();
        let window: Vec<f64> = self.deficits[n.saturating_sub(self.config.window_days)..]
            .iter()
            .map(|d| d.deficit_gb)
            .collect();
        policy.quantity(&window, self.active_coverage(day))
    }

    /// Books a new contract and returns its id.
    pub fn buy(&mut self, day: u32, ttm_days: u32, sc: u32, quantity_gb: f64, premium_per_gb: f64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.contracts.push(OptionContract {
            id,
            os: self.os,
            sc,
            purchase_day: day,
            expiry_day: day + ttm_days,
            quantity_gb,
            remaining_gb: quantity_gb,
            premium_per_gb,
            exercised_gb: 0.0,
            state: ContractState::Active,
        });
        id
    }

    /// Covers as much of `deficit_gb` as live contracts allow, soonest
    /// expiry first.
    pub fn exercise(&mut self, day: u32, deficit_gb: f64) -> Exercise {
        let mut out = Exercise::default();
        if deficit_gb <= 0.0 {
            return out;
        }
        let mut order: Vec<usize> = (0..self.contracts.len()).filter(|&i| self.contracts[i].is_live(day)).collect();
        order.sort_by_key(|&i| (self.contracts[i].expiry_day, self.contracts[i].id));
        let mut left = deficit_gb;
        for i in order {
            if left <= 0.0 {
                break;
            }
            let c = &mut self.contracts[i];
            let take = c.remaining_gb.min(left);
            c.remaining_gb -= take;
            c.exercised_gb += take;
            if c.remaining_gb <= 0.0 {
                c.remaining_gb = 0.0;
                c.state = ContractState::Exhausted;
            }
            left -= take;
            out.covered_gb += take;
            out.draws.push((c.id, take));
        }
        out
    }

    /// Marks contracts that can no longer be used after `day` as expired.
    /// Returns the quantity that lapsed unexercised.
    pub fn expire(&mut self, day: u32) -> f64 {
        let mut lapsed = 0.0;
        for c in &mut self.contracts {
            if c.state == ContractState::Active && c.expiry_day <= day + 1 {
                c.state = ContractState::Expired;
                lapsed += c.remaining_gb;
            }
        }
        lapsed
    }
}

/// Writes every contract as one CSV row.
pub fn write_contracts_csv<W: std::io::Write>(contracts: &[OptionContract], names: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "id",
        "os_id",
        "sc",
        "purchase_day",
        "expiry_day",
        "quantity_gb",
        "exercised_gb",
        "premium_per_gb",
        "premium_paid",
        "state",
    ])?;
    for c in contracts {
        let state = match c.state {
            ContractState::Active => "active",
            ContractState::Exhausted => "exhausted",
            ContractState::Expired => "expired",
        };
        w.write_record([
            c.id.to_string(),
            names[c.os].clone(),
            c.sc.to_string(),
            c.purchase_day.to_string(),
            c.expiry_day.to_string(),
            format!("{:.9}", c.quantity_gb),
            format!("{:.9}", c.exercised_gb),
            format!("{:.9}", c.premium_per_gb),
            format!("{:.9}", c.premium_paid()),
            state.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<contract csv>", e))?;
    Ok(())
}
