//! The daily reservation cycle shared by plans 1, 3.x, 5.x and 6.x.
//!
//! Billing is daily. The morning reservation is priced at the normal price
//! of the class containing the volume the origin server actually served
//! that day, so a perfect forecast costs exactly what daily pay-as-you-go
//! would and over-reserving cannot buy into a cheaper class. Urgent volume
//! left after the secondary market is a separate end-of-day purchase,
//! priced at the penalty of the class containing that residual `D`.
//! Options exercised against `D` settle at the strike rule for that class.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{DailyLedgerEntry, PlanResult, PlanSpec, Scenario};
use crate::error::{Error, Result};
use crate::exchange::{self, ClearingMode, MarketPosition, Trade};
use crate::forecasting::{reservation_cap, StepForecast};
use crate::market_config::{PenaltyKind, RunConfig, ServiceClass, TierTable};
use crate::options_desk::{EwmaPolicy, OptionsDesk};
use crate::pricing::{so_premium_table, StrikeRule, TierPremium};

/// How long unused reserved volume stays usable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UreMode {
    /// Wasted at the end of the day.
    Off,
    /// Usable for 28 calendar days after the day it was reserved.
    Days28,
    /// Usable indefinitely.
    Full,
}

const URE_WINDOW_DAYS: u32 = 28;

/// Dated volume, consumed oldest first.
#[derive(Debug, Clone, Default)]
struct Pool {
    lots: VecDeque<(u32, f64)>,
}

impl Pool {
    fn total(&self) -> f64 {
        self.lots.iter().map(|l| l.1).sum()
    }

    fn push(&mut self, day: u32, gb: f64) {
        if gb > 0.0 {
            self.lots.push_back((day, gb));
        }
    }

    /// Takes up to `gb`, returns what was taken.
    fn take(&mut self, gb: f64) -> f64 {
        let mut left = gb;
        while left > 0.0 {
            let Some(front) = self.lots.front_mut() else { break };
            if front.1 <= left {
                left -= front.1;
                self.lots.pop_front();
            } else {
                front.1 -= left;
                left = 0.0;
            }
        }
        gb - left
    }

    /// Drops lots reserved `URE_WINDOW_DAYS` or more days before `day`.
    fn expire(&mut self, day: u32) -> f64 {
        let mut dropped = 0.0;
        while let Some(&(d, gb)) = self.lots.front() {
            if d + URE_WINDOW_DAYS > day {
                break;
            }
            dropped += gb;
            self.lots.pop_front();
        }
        dropped
    }

    fn clear(&mut self) -> f64 {
        let t = self.total();
        self.lots.clear();
        t
    }
}

/// One framework plan in progress.
pub struct FrameworkRun<'a> {
    spec: PlanSpec,
    scenario: &'a Scenario,
    table: &'a TierTable,
    ttm_days: u32,
    clearing: ClearingMode,
    wholesale: (f64, f64),
    strike_rule: StrikeRule,
    premiums: Vec<TierPremium>,
    policy: EwmaPolicy,
    pools: Vec<Pool>,
    desks: Vec<OptionsDesk>,
    cdn_pool: Pool,
    next_day: u32,
    ledger: Vec<DailyLedgerEntry>,
    trades: Vec<Trade>,
    planned_gb: f64,
    urgent_gb: f64,
}

impl<'a> FrameworkRun<'a> {
    pub fn new(spec: PlanSpec, scenario: &'a Scenario, table: &'a TierTable, cfg: &RunConfig) -> Result<Self> {
        let strike_rule = match spec.penalty {
            Some(PenaltyKind::Low) => StrikeRule::LowPenalty,
            _ => StrikeRule::Normal,
        };
        let premiums = if spec.so_on {
            so_premium_table(table, &cfg.sim, strike_rule, cfg.pricing.method, cfg.pricing.lattice_steps)?
        } else {
            Vec::new()
        };
        let n = scenario.n_os();
        Ok(FrameworkRun {
            spec,
            scenario,
            table,
            ttm_days: cfg.sim.so_ttm_days,
            clearing: cfg.market.clearing,
            wholesale: (cfg.sim.wholesale_price, cfg.sim.wholesale_penalty_multiplier),
            strike_rule,
            premiums,
            policy: EwmaPolicy {
                alpha: cfg.options.ewma_alpha,
            },
            pools: vec![Pool::default(); n],
            desks: (0..n).map(|i| OptionsDesk::new(i, cfg.options.clone())).collect(),
            cdn_pool: Pool::default(),
            next_day: 0,
            ledger: Vec::with_capacity(n * scenario.days()),
            trades: Vec::new(),
            planned_gb: 0.0,
            urgent_gb: 0.0,
        })
    }

    fn class(&self, gb: f64) -> &'a ServiceClass {
        &self.table.classes[self.table.index_for_daily(gb)]
    }

    fn penalty_price(&self, class: &ServiceClass) -> f64 {
        match self.spec.penalty {
            Some(kind) => class.penalty_price(kind),
            None => class.normal_price,
        }
    }

    /// Runs one day for every origin server. Days must be consecutive from 0.
    pub fn step(&mut self, day: u32) -> Result<()> {
        if day != self.next_day || day as usize >= self.scenario.days() {
            return Err(Error::DaySkew {
                os_id: "*".into(),
                expected: self.next_day,
                got: day,
            });
        }
        self.next_day += 1;
        let d = day as usize;
        let n = self.scenario.n_os();
        let mut entries: Vec<DailyLedgerEntry> = Vec::with_capacity(n);
        let mut deficits = vec![0.0; n];
        let mut positions = Vec::new();
        let mut reserved_total = 0.0;

        for i in 0..n {
            let actual = self.scenario.actual[i][d];
            let mut e = DailyLedgerEntry::new(day, i, actual);
            if self.spec.ure == UreMode::Days28 {
                e.wasted_gb += self.pools[i].expire(day);
            }

            // Morning: options, then the reservation.
            if self.spec.so_on {
                let q = self.desks[i].plan_purchase(day, &self.policy);
                let idx = self.table.index_for_daily(q);
                if q > 0.0 && !self.table.classes[idx].unlimited {
                    let prem = self.premiums[idx].premium;
                    self.desks[i].buy(day, self.ttm_days, idx as u32, q, prem);
                    e.so_bought_gb = q;
                    e.so_premium = q * prem;
                }
            }
            let forecast = if self.spec.perfect_forecast {
                actual
            } else {
                self.scenario.forecast(i, d)
            };
            let step = StepForecast {
                day,
                predicted_gb: forecast,
            };
            let requested = match self.spec.ure {
                UreMode::Off => forecast,
                _ => (forecast - self.pools[i].total()).max(0.0),
            };
            let r = reservation_cap(requested, &step);
            let day_class = self.class(actual);
            e.forecast_gb = forecast;
            e.reserved_gb = r;
            if r > 0.0 {
                e.cost_normal = r * day_class.normal_price;
            }
            reserved_total += r;

            // Serve from the reservation, then the pool.
            let from_r = r.min(actual);
            let from_pool = self.pools[i].take(actual - from_r);
            self.pools[i].push(day, r - from_r);
            let deficit = (actual - from_r - from_pool).max(0.0);
            deficits[i] = deficit;

            if self.spec.sm_on {
                let surplus = self.pools[i].total();
                if surplus > 0.0 {
                    positions.push(MarketPosition::seller(i, surplus, day_class.normal_price));
                } else if deficit > 0.0 {
                    positions.push(MarketPosition::buyer(i, deficit, self.penalty_price(self.class(deficit))));
                }
            }
            entries.push(e);
        }

        if self.spec.sm_on && !positions.is_empty() {
            let trades = exchange::clear(self.clearing, day, &positions)?;
            for t in &trades {
                let v = t.value();
                let s = &mut entries[t.seller];
                s.sm_sold_gb += t.quantity_gb;
                s.sm_cash -= v;
                let b = &mut entries[t.buyer];
                b.sm_bought_gb += t.quantity_gb;
                b.sm_cash += v;
            }
            for (i, e) in entries.iter().enumerate() {
                if e.sm_sold_gb > 0.0 {
                    self.pools[i].take(e.sm_sold_gb);
                }
            }
            self.trades.extend(trades);
        }

        for (i, e) in entries.iter_mut().enumerate() {
            let residual = (deficits[i] - e.sm_bought_gb).max(0.0);
            if self.spec.so_on {
                self.desks[i].record_deficit(day, residual)?;
            }
            if residual > 0.0 {
                let class = self.class(residual);
                let penalty = self.penalty_price(class);
                let covered = if self.spec.so_on {
                    self.desks[i].exercise(day, residual).covered_gb
                } else {
                    0.0
                };
                if covered > 0.0 {
                    let strike = self.strike_rule.strike_for(class);
                    e.so_exercised_gb = covered;
                    e.so_strike_cost = covered * strike;
                    e.so_saving = covered * (penalty - strike);
                    e.so_normal_price = class.normal_price;
                }
                e.penalty_gb = residual - covered;
                e.cost_penalty = e.penalty_gb * penalty;
            }
            if self.spec.ure == UreMode::Off {
                e.wasted_gb += self.pools[i].clear();
            }
            if self.spec.so_on {
                self.desks[i].expire(day);
            }
            e.carryover_gb = self.pools[i].total();
            e.reserved_gb += e.sm_bought_gb + e.so_exercised_gb + e.penalty_gb - e.sm_sold_gb;
        }

        // CDN inventory: buys every reservation, serves all demand, buys any
        // physical shortfall urgently.
        let served_total: f64 = entries.iter().map(|e| e.served_gb).sum();
        self.planned_gb += reserved_total;
        if self.spec.ure == UreMode::Days28 {
            self.cdn_pool.expire(day);
        }
        let available = reserved_total.min(served_total);
        let from_pool = self.cdn_pool.take(served_total - available);
        self.cdn_pool.push(day, reserved_total - available);
        self.urgent_gb += (served_total - available - from_pool).max(0.0);
        if self.spec.ure == UreMode::Off {
            self.cdn_pool.clear();
        }

        self.ledger.extend(entries);
        Ok(())
    }

    pub fn finish(self) -> PlanResult {
        let n = self.scenario.n_os();
        let contracts = self.desks.into_iter().flat_map(|d| d.contracts().to_vec()).collect();
        PlanResult::from_parts(
            self.spec,
            n,
            self.ledger,
            self.trades,
            contracts,
            self.planned_gb,
            self.urgent_gb,
            self.wholesale,
        )
    }
}
