//! Day-by-day simulation of every pricing plan over a set of traces.
//!
//! Three plan families share one result shape:
//!
//! * pay-as-you-go (4.x) and pre-costed (2.x) plans bill by 28-day month;
//! * framework plans (1, 3.x, 5.x, 6.x) run a daily reservation cycle with
//!   optional carry-over of unused volume, a secondary market and stock
//!   options. Plan 1 is the same cycle driven by a perfect forecast.

mod billing;
mod framework;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use billing::{optimal_precosted_bill, payg_bill, precosted_bill, PaygMode};
pub use framework::{FrameworkRun, UreMode};

use crate::error::{Error, Result};
use crate::exchange::Trade;
use crate::forecasting::{forecast_track, ForecastPoint};
use crate::market_config::{PenaltyKind, RunConfig, TierTable};
use crate::options_desk::OptionContract;
use crate::par::{self, Exec};
use crate::trace_io::DailyLoadSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlanId {
    P1,
    P2a,
    P2b,
    P2c,
    P2d,
    P31a,
    P31b,
    P32a,
    P32b,
    P33a,
    P33b,
    P4a,
    P4b,
    P5a,
    P5b,
    P6a,
    P6b,
}

impl PlanId {
    pub const ALL: [PlanId; 17] = [
        PlanId::P1,
        PlanId::P2a,
        PlanId::P2b,
        PlanId::P2c,
        PlanId::P2d,
        PlanId::P31a,
        PlanId::P31b,
        PlanId::P32a,
        PlanId::P32b,
        PlanId::P33a,
        PlanId::P33b,
        PlanId::P4a,
        PlanId::P4b,
        PlanId::P5a,
        PlanId::P5b,
        PlanId::P6a,
        PlanId::P6b,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlanId::P1 => "1",
            PlanId::P2a => "2.a",
            PlanId::P2b => "2.b",
            PlanId::P2c => "2.c",
            PlanId::P2d => "2.d",
            PlanId::P31a => "3.1.a",
            PlanId::P31b => "3.1.b",
            PlanId::P32a => "3.2.a",
            PlanId::P32b => "3.2.b",
            PlanId::P33a => "3.3.a",
            PlanId::P33b => "3.3.b",
            PlanId::P4a => "4.a",
            PlanId::P4b => "4.b",
            PlanId::P5a => "5.a",
            PlanId::P5b => "5.b",
            PlanId::P6a => "6.a",
            PlanId::P6b => "6.b",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        PlanId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPlan(s.to_string()))
    }

    /// Parses a comma-separated list; `all` selects every plan.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(PlanId::ALL.to_vec());
        }
        s.split(',').filter(|p| !p.trim().is_empty()).map(PlanId::parse).collect()
    }

    /// The high/low-penalty partner of a plan, if it has one.
    pub fn penalty_partner(self) -> Option<PlanId> {
        use PlanId::*;
        Some(match self {
            P2a => P2b,
            P2b => P2a,
            P2c => P2d,
            P2d => P2c,
            P31a => P31b,
            P31b => P31a,
            P32a => P32b,
            P32b => P32a,
            P33a => P33b,
            P33b => P33a,
            P5a => P5b,
            P5b => P5a,
            P6a => P6b,
            P6b => P6a,
            P1 | P4a | P4b => return None,
        })
    }

    pub fn spec(self, sc_count: u32) -> PlanSpec {
        use PlanId::*;
        let penalty = match self {
            P2a | P2c | P31a | P32a | P33a | P5a | P6a => Some(PenaltyKind::High),
            P2b | P2d | P31b | P32b | P33b | P5b | P6b => Some(PenaltyKind::Low),
            P1 | P4a | P4b => None,
        };
        let family = match self {
            P2a | P2b => Family::PreCosted { optimal: true },
            P2c | P2d => Family::PreCosted { optimal: false },
            P4a => Family::Payg(PaygMode::Staggered),
            P4b => Family::Payg(PaygMode::Unified),
            _ => Family::Framework,
        };
        let (ure, sm_on, so_on) = match self {
            P1 => (UreMode::Full, true, false),
            P31a | P31b => (UreMode::Off, false, false),
            P32a | P32b => (UreMode::Days28, false, false),
            P33a | P33b => (UreMode::Full, false, false),
            P5a | P5b => (UreMode::Full, true, false),
            P6a | P6b => (UreMode::Full, true, true),
            _ => (UreMode::Off, false, false),
        };
        PlanSpec {
            plan: self,
            sc_count,
            family,
            penalty,
            perfect_forecast: self == P1,
            ure,
            sm_on,
            so_on,
        }
    }
}

impl fmt::Display for PlanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Payg(PaygMode),
    PreCosted { optimal: bool },
    Framework,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub plan: PlanId,
    pub sc_count: u32,
    pub family: Family,
    /// `None` for plans that never pay a penalty.
    pub penalty: Option<PenaltyKind>,
    pub perfect_forecast: bool,
    pub ure: UreMode,
    pub sm_on: bool,
    pub so_on: bool,
}

/// One origin server on one day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DailyLedgerEntry {
    pub day: u32,
    pub os: usize,
    pub served_gb: f64,
    /// Volume this origin server ended up holding for the day: its
    /// reservation plus urgent acquisitions, less what it sold on.
    pub reserved_gb: f64,
    pub forecast_gb: f64,
    pub cost_normal: f64,
    pub cost_penalty: f64,
    pub penalty_gb: f64,
    pub sm_bought_gb: f64,
    pub sm_sold_gb: f64,
    /// Paid for market purchases less received for market sales.
    pub sm_cash: f64,
    pub so_bought_gb: f64,
    pub so_premium: f64,
    pub so_exercised_gb: f64,
    pub so_strike_cost: f64,
    /// What the exercised volume would have cost at the penalty price, less
    /// the strike actually paid.
    pub so_saving: f64,
    /// Normal price of the class the exercised volume was settled in.
    pub so_normal_price: f64,
    /// Carried-over unused volume at the end of the day.
    pub carryover_gb: f64,
    pub wasted_gb: f64,
}

impl DailyLedgerEntry {
    pub fn new(day: u32, os: usize, served_gb: f64) -> Self {
        DailyLedgerEntry {
            day,
            os,
            served_gb,
            ..Default::default()
        }
    }

    pub fn total_cost(&self) -> f64 {
        self.cost_normal + self.cost_penalty + self.sm_cash + self.so_premium + self.so_strike_cost
    }

    /// What the CDN receives from this entry (market cash stays between
    /// origin servers).
    pub fn cdn_revenue(&self) -> f64 {
        self.cost_normal + self.cost_penalty + self.so_premium + self.so_strike_cost
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OsTotals {
    pub served_gb: f64,
    pub reserved_gb: f64,
    pub cost: f64,
    pub cost_normal: f64,
    pub cost_penalty: f64,
    pub sm_cash: f64,
    pub sm_bought_gb: f64,
    pub sm_sold_gb: f64,
    pub so_premium: f64,
    pub so_exercised_gb: f64,
    pub so_strike_cost: f64,
    pub so_saving: f64,
}

impl OsTotals {
    fn add(&mut self, e: &DailyLedgerEntry) {
        self.served_gb += e.served_gb;
        self.reserved_gb += e.reserved_gb;
        self.cost += e.total_cost();
        self.cost_normal += e.cost_normal;
        self.cost_penalty += e.cost_penalty;
        self.sm_cash += e.sm_cash;
        self.sm_bought_gb += e.sm_bought_gb;
        self.sm_sold_gb += e.sm_sold_gb;
        self.so_premium += e.so_premium;
        self.so_exercised_gb += e.so_exercised_gb;
        self.so_strike_cost += e.so_strike_cost;
        self.so_saving += e.so_saving;
    }
}

/// CDN-side volumes and cash. Costs are volume totals times the wholesale
/// rates, applied once at the end.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CdnTotals {
    pub served_gb: f64,
    pub reserved_gb: f64,
    pub planned_gb: f64,
    pub urgent_gb: f64,
    pub revenue: f64,
    pub cost: f64,
    pub profit: f64,
}

impl CdnTotals {
    pub fn cost_per_served_gb(&self) -> f64 {
        self.cost / self.served_gb
    }

    /// Profit as a percentage of cost.
    pub fn profit_to_cost(&self) -> f64 {
        100.0 * self.profit / self.cost
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanResult {
    pub spec: PlanSpec,
    /// Day-major: all origin servers for day 0, then day 1, ...
    pub ledger: Vec<DailyLedgerEntry>,
    pub os_totals: Vec<OsTotals>,
    pub trades: Vec<Trade>,
    pub contracts: Vec<OptionContract>,
    pub cdn: CdnTotals,
}

impl PlanResult {
    pub fn plan(&self) -> PlanId {
        self.spec.plan
    }

    pub fn sc_count(&self) -> u32 {
        self.spec.sc_count
    }

    pub fn total_cost(&self) -> f64 {
        self.os_totals.iter().map(|t| t.cost).sum()
    }

    pub fn total_served(&self) -> f64 {
        self.os_totals.iter().map(|t| t.served_gb).sum()
    }

    pub fn total_reserved(&self) -> f64 {
        self.os_totals.iter().map(|t| t.reserved_gb).sum()
    }

    pub fn total_premiums(&self) -> f64 {
        self.os_totals.iter().map(|t| t.so_premium).sum()
    }

    fn from_parts(
        spec: PlanSpec,
        n_os: usize,
        ledger: Vec<DailyLedgerEntry>,
        trades: Vec<Trade>,
        contracts: Vec<OptionContract>,
        planned_gb: f64,
        urgent_gb: f64,
        wholesale: (f64, f64),
    ) -> Self {
        let mut os_totals = vec![OsTotals::default(); n_os];
        let mut revenue = 0.0;
        for e in &ledger {
            os_totals[e.os].add(e);
            revenue += e.cdn_revenue();
        }
        let cost = wholesale.0 * planned_gb + wholesale.0 * wholesale.1 * urgent_gb;
        let cdn = CdnTotals {
            served_gb: os_totals.iter().map(|t| t.served_gb).sum(),
            reserved_gb: os_totals.iter().map(|t| t.reserved_gb).sum(),
            planned_gb,
            urgent_gb,
            revenue,
            cost,
            profit: revenue - cost,
        };
        PlanResult {
            spec,
            ledger,
            os_totals,
            trades,
            contracts,
            cdn,
        }
    }
}

/// Traces plus the plan-independent forecasts every framework plan shares.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub names: Vec<String>,
    pub actual: Vec<Vec<f64>>,
    pub tracks: Vec<Vec<ForecastPoint>>,
}

impl Scenario {
    /// Truncates traces to the configured horizon and runs the forecaster
    /// for each origin server. First-week orders are the actual first week
    /// scaled by `initial_order_scale`.
    pub fn prepare(traces: &[DailyLoadSeries], cfg: &RunConfig, exec: Exec) -> Result<Self> {
        let days = cfg.sim.total_days() as usize;
        if traces.is_empty() {
            return Err(Error::Trace("no origin servers".into()));
        }
        for t in traces {
            if t.len() < days {
                return Err(Error::Trace(format!(
                    "{} covers {} days, need {days}",
                    t.os_id,
                    t.len()
                )));
            }
        }
        let grid = cfg.sim.bandwidth_grid();
        let min_gb = cfg.sim.min_volume_gb();
        let scale = cfg.sim.initial_order_scale;
        let tracks = par::map(exec, traces, |t| {
            let series = DailyLoadSeries::new(t.os_id.clone(), t.start_day, t.volumes[..days].to_vec())?;
            let orders: Vec<f64> = series.volumes[..7].iter().map(|v| v * scale).collect();
            forecast_track(&series, &orders, &cfg.forecaster, &grid, min_gb)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Scenario {
            names: traces.iter().map(|t| t.os_id.clone()).collect(),
            actual: traces.iter().map(|t| t.volumes[..days].to_vec()).collect(),
            tracks,
        })
    }

    pub fn days(&self) -> usize {
        self.actual.first().map_or(0, Vec::len)
    }

    pub fn n_os(&self) -> usize {
        self.actual.len()
    }

    pub fn forecast(&self, os: usize, day: usize) -> f64 {
        self.tracks[os][day].forecast_gb
    }
}

/// Runs one plan over the scenario.
pub fn simulate(spec: &PlanSpec, scenario: &Scenario, table: &TierTable, cfg: &RunConfig) -> Result<PlanResult> {
    if table.sc_count != spec.sc_count {
        return Err(Error::param("table", "tier table does not match the plan's class count"));
    }
    match spec.family {
        Family::Framework => {
            let mut run = FrameworkRun::new(*spec, scenario, table, cfg)?;
            for d in 0..scenario.days() as u32 {
                run.step(d)?;
            }
            Ok(run.finish())
        }
        Family::Payg(mode) => Ok(simulate_monthly(spec, scenario, cfg, |_, v| MonthBill {
            normal: payg_bill(v, table, mode),
            penalty: 0.0,
            reserved_gb: v,
            overage_gb: 0.0,
        })),
        Family::PreCosted { optimal } => {
            let penalty = spec.penalty.unwrap_or(PenaltyKind::High);
            Ok(simulate_monthly(spec, scenario, cfg, |prev, v| {
                let idx = if optimal {
                    optimal_precosted_bill(v, table, penalty).2
                } else {
                    // The first month is assumed estimated correctly.
                    table.index_for_monthly(prev.unwrap_or(v))
                };
                let c = &table.classes[idx];
                let (_, reserved) = precosted_bill(c, v, penalty);
                let over = (v - reserved).max(0.0);
                MonthBill {
                    normal: reserved * c.normal_price,
                    penalty: over * c.penalty_price(penalty),
                    reserved_gb: reserved,
                    overage_gb: over,
                }
            }))
        }
    }
}

struct MonthBill {
    normal: f64,
    penalty: f64,
    reserved_gb: f64,
    overage_gb: f64,
}

/// Monthly families, billed by `bill(previous month, this month)` on the
/// month's last day. A trailing partial month is billed on its own volume.
fn simulate_monthly<F>(spec: &PlanSpec, scenario: &Scenario, cfg: &RunConfig, bill: F) -> PlanResult
where
    F: Fn(Option<f64>, f64) -> MonthBill,
{
    let days = scenario.days();
    let n = scenario.n_os();
    let month = cfg.sim.days_per_month as usize;
    let mut ledger: Vec<DailyLedgerEntry> = (0..days)
        .flat_map(|d| (0..n).map(move |i| (d, i)))
        .map(|(d, i)| DailyLedgerEntry::new(d as u32, i, scenario.actual[i][d]))
        .collect();

    let payg = matches!(spec.family, Family::Payg(_));
    let (mut planned, mut urgent) = (0.0, 0.0);
    let mut prev: Vec<Option<f64>> = vec![None; n];
    for start in (0..days).step_by(month) {
        let end = (start + month).min(days);
        let last = end - 1;
        let (mut month_served, mut month_reserved) = (0.0, 0.0);
        for i in 0..n {
            let v: f64 = scenario.actual[i][start..end].iter().sum();
            let b = bill(prev[i], v);
            prev[i] = Some(v);
            let e = &mut ledger[last * n + i];
            e.reserved_gb = b.reserved_gb + b.overage_gb;
            e.penalty_gb = b.overage_gb;
            e.cost_normal = b.normal;
            e.cost_penalty = b.penalty;
            month_served += v;
            month_reserved += b.reserved_gb;
        }
        if payg {
            planned += month_served;
        } else {
            planned += month_reserved;
            urgent += (month_served - month_reserved).max(0.0);
        }
    }
    PlanResult::from_parts(
        *spec,
        n,
        ledger,
        Vec::new(),
        Vec::new(),
        planned,
        urgent,
        (cfg.sim.wholesale_price, cfg.sim.wholesale_penalty_multiplier),
    )
}

/// Runs every `(plan, class count)` pair, in parallel when `exec` allows.
/// Results come back in input order.
pub fn sweep(
    plans: &[PlanId],
    sc_counts: &[u32],
    scenario: &Scenario,
    cfg: &RunConfig,
    exec: Exec,
) -> Result<Vec<PlanResult>> {
    let tables = sc_counts
        .iter()
        .map(|&sc| crate::market_config::build_tier_table(sc))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(PlanId, usize)> = sc_counts
        .iter()
        .enumerate()
        .flat_map(|(t, _)| plans.iter().map(move |&p| (p, t)))
        .collect();
    par::map(exec, &jobs, |&(plan, t)| {
        simulate(&plan.spec(tables[t].sc_count), scenario, &tables[t], cfg)
    })
    .into_iter()
    .collect()
}
