//! Origin-server and CDN metric tables, plot-ready series and run manifests.
//!
//! Tables are rendered to strings once, with fixed decimals (money 2 dp,
//! per-GB figures 6 dp, volumes 0 dp, percentages 2 dp), so CSV and
//! markdown outputs of the same results are byte-stable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market_config::{build_tier_table, SimConfig};
use crate::plan_engine::{PlanId, PlanResult};
use crate::pricing::{so_premium_table, PricingMethod, StrikeRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "md" | "markdown" => Ok(Format::Markdown),
            other => Err(Error::param("format", format!("expected csv or markdown, got `{other}`"))),
        }
    }

    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, title: &str, header: Vec<String>) -> Self {
        Table {
            name: name.into(),
            title: title.into(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("## {}\n\n", self.title);
        let _ = writeln!(s, "| {} |", self.header.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(self.header.len()));
        for r in &self.rows {
            let _ = writeln!(s, "| {} |", r.join(" | "));
        }
        s
    }
}

fn money(x: f64) -> String {
    format!("{x:.2}")
}

fn per_gb(x: f64) -> String {
    format!("{x:.6}")
}

fn volume(x: f64) -> String {
    format!("{x:.0}")
}

fn pct(x: f64) -> String {
    format!("{x:.2}")
}

/// `100 * (a / b - 1)`, the change from `b` to `a` in percent.
fn change(a: f64, b: f64) -> f64 {
    100.0 * (a / b - 1.0)
}

/// Results indexed by `(sc_count, plan)`.
struct Index<'a> {
    by_key: BTreeMap<(u32, PlanId), &'a PlanResult>,
    /// Class counts present, six first.
    sc_counts: Vec<u32>,
    plans: Vec<PlanId>,
}

impl<'a> Index<'a> {
    fn new(results: &'a [PlanResult]) -> Result<Self> {
        let by_key: BTreeMap<_, _> = results.iter().map(|r| ((r.sc_count(), r.plan()), r)).collect();
        let mut sc_counts: Vec<u32> = by_key.keys().map(|k| k.0).collect();
        sc_counts.sort_unstable_by(|a, b| b.cmp(a));
        sc_counts.dedup();
        let mut plans: Vec<PlanId> = by_key.keys().map(|k| k.1).collect();
        plans.sort_unstable();
        plans.dedup();
        Ok(Index {
            by_key,
            sc_counts,
            plans,
        })
    }

    fn get(&self, sc: u32, plan: PlanId) -> Option<&'a PlanResult> {
        self.by_key.get(&(sc, plan)).copied()
    }

    fn baseline(&self, sc: u32) -> Result<&'a PlanResult> {
        self.get(sc, PlanId::P1).ok_or(Error::MissingBaseline(sc))
    }
}

#[derive(Clone, Copy)]
enum OsMetric {
    Cost,
    Reserved,
    CostPerGb,
}

impl OsMetric {
    fn value(self, r: &PlanResult) -> f64 {
        let n = r.os_totals.len() as f64;
        match self {
            OsMetric::Cost => r.total_cost() / n,
            OsMetric::Reserved => r.total_reserved() / n,
            OsMetric::CostPerGb => r.total_cost() / r.total_served(),
        }
    }

    fn render(self, v: f64) -> String {
        match self {
            OsMetric::Cost => money(v),
            OsMetric::Reserved => volume(v),
            OsMetric::CostPerGb => per_gb(v),
        }
    }

    fn unit(self) -> &'static str {
        match self {
            OsMetric::Cost => "$",
            OsMetric::Reserved => "GB",
            OsMetric::CostPerGb => "$/GB",
        }
    }
}

fn os_table(idx: &Index, metric: OsMetric, name: &str, title: &str, penalty_cols: bool) -> Result<Table> {
    let mut header = vec!["plan".to_string()];
    for sc in &idx.sc_counts {
        header.push(format!("{sc}sc_{}", metric.unit()));
        header.push(format!("{sc}sc_pct_to_plan_1"));
    }
    let both = idx.sc_counts.len() == 2;
    if both {
        header.push("increase_6_to_3_pct".into());
    }
    if penalty_cols {
        for sc in &idx.sc_counts {
            header.push(format!("{sc}sc_high_to_low_pct"));
        }
    }
    let mut table = Table::new(name, title, header);
    let base: Vec<f64> = idx
        .sc_counts
        .iter()
        .map(|&sc| idx.baseline(sc).map(|r| metric.value(r)))
        .collect::<Result<_>>()?;

    for &plan in &idx.plans {
        let mut row = vec![plan.name().to_string()];
        let vals: Vec<Option<f64>> = idx.sc_counts.iter().map(|&sc| idx.get(sc, plan).map(|r| metric.value(r))).collect();
        for (v, b) in vals.iter().zip(&base) {
            match v {
                Some(v) => {
                    row.push(metric.render(*v));
                    row.push(pct(100.0 * v / b));
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        if both {
            row.push(match (vals[0], vals[1]) {
                (Some(six), Some(three)) => pct(change(three, six)),
                _ => String::new(),
            });
        }
        if penalty_cols {
            // Shown on the low-penalty row of each pair.
            let high = match plan.spec(6).penalty {
                Some(crate::market_config::PenaltyKind::Low) => plan.penalty_partner(),
                _ => None,
            };
            for (k, &sc) in idx.sc_counts.iter().enumerate() {
                row.push(match (high.and_then(|h| idx.get(sc, h)), vals[k]) {
                    (Some(h), Some(low)) => pct(change(low, metric.value(h))),
                    _ => String::new(),
                });
            }
        }
        table.rows.push(row);
    }
    Ok(table)
}

/// Average origin-server cost, reserved volume and cost per served GB.
pub fn os_metrics(results: &[PlanResult]) -> Result<Vec<Table>> {
    let idx = Index::new(results)?;
    Ok(vec![
        os_table(&idx, OsMetric::Cost, "os_cost", "Average total cost per origin server", true)?,
        os_table(&idx, OsMetric::Reserved, "os_reserved", "Average total reserved volume per origin server", false)?,
        os_table(&idx, OsMetric::CostPerGb, "os_cost_per_gb", "Origin-server cost per served GB", true)?,
    ])
}

/// CDN volumes, revenue, cost and profit, one table per class count.
pub fn cdn_metrics(results: &[PlanResult]) -> Result<Vec<Table>> {
    let idx = Index::new(results)?;
    let header: Vec<String> = [
        "plan",
        "served_gb",
        "reserved_gb",
        "revenue",
        "revenue_per_gb",
        "cost",
        "cost_per_gb",
        "profit",
        "profit_per_gb",
        "profit_to_cost_pct",
    ]
    .map(String::from)
    .to_vec();
    let mut out = Vec::new();
    for &sc in &idx.sc_counts {
        let mut t = Table::new(&format!("cdn_{sc}sc"), &format!("CDN metrics, {sc} service classes"), header.clone());
        for &plan in &idx.plans {
            let Some(r) = idx.get(sc, plan) else { continue };
            let c = &r.cdn;
            t.rows.push(vec![
                plan.name().to_string(),
                volume(c.served_gb),
                volume(c.reserved_gb),
                money(c.revenue),
                per_gb(c.revenue / c.served_gb),
                money(c.cost),
                per_gb(c.cost_per_served_gb()),
                money(c.profit),
                per_gb(c.profit / c.served_gb),
                pct(c.profit_to_cost()),
            ]);
        }
        out.push(t);
    }
    Ok(out)
}

/// Premium per GB by class for every pricing method, both strike rules.
pub fn premium_table(cfg: &SimConfig, lattice_steps: usize, sc_counts: &[u32]) -> Result<Table> {
    let mut t = Table::new(
        "premiums",
        "Option premium per GB by class and method",
        ["sc_count", "sc", "strike_rule", "strike", "method", "premium", "premium_to_strike"]
            .map(String::from)
            .to_vec(),
    );
    for &sc in sc_counts {
        let table = build_tier_table(sc)?;
        for rule in [StrikeRule::Normal, StrikeRule::LowPenalty] {
            for method in PricingMethod::ALL {
                for p in so_premium_table(&table, cfg, rule, method, lattice_steps)? {
                    t.rows.push(vec![
                        sc.to_string(),
                        p.sc.clone(),
                        match rule {
                            StrikeRule::Normal => "normal".into(),
                            StrikeRule::LowPenalty => "low_penalty".into(),
                        },
                        format!("{:.6}", p.strike),
                        method.name().into(),
                        format!("{:.8}", p.premium),
                        format!("{:.7}", p.premium / p.strike),
                    ]);
                }
            }
        }
    }
    Ok(t)
}

/// Long-form plot data: `figure,series,x,y`.
pub fn figure_series(results: &[PlanResult], names: &[String]) -> Result<Table> {
    let idx = Index::new(results)?;
    let mut t = Table::new(
        "figures",
        "Plot-ready series",
        ["figure", "series", "x", "y"].map(String::from).to_vec(),
    );
    if let Some(first) = results.first() {
        for (i, tot) in first.os_totals.iter().enumerate() {
            t.rows.push(vec!["served_per_os".into(), "all".into(), names[i].clone(), volume(tot.served_gb)]);
        }
    }
    for &sc in &idx.sc_counts {
        for &plan in &idx.plans {
            let Some(r) = idx.get(sc, plan) else { continue };
            let n = r.os_totals.len() as f64;
            let series = format!("{sc}sc");
            let x = plan.name().to_string();
            let mut push = |fig: &str, y: String| t.rows.push(vec![fig.into(), series.clone(), x.clone(), y]);
            push("os_cost", money(r.total_cost() / n));
            push("os_reserved", volume(r.total_reserved() / n));
            push("os_cost_per_gb", per_gb(r.total_cost() / r.total_served()));
            push("cdn_cost", money(r.cdn.cost));
            push("cdn_cost_per_gb", per_gb(r.cdn.cost_per_served_gb()));
            push("cdn_profit_to_cost", pct(r.cdn.profit_to_cost()));
        }
    }
    Ok(t)
}

/// Writes each table as `<name>.<ext>`; returns the paths written.
pub fn emit(tables: &[Table], format: Format, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    tables
        .iter()
        .map(|t| {
            let path = out_dir.join(format!("{}.{}", t.name, format.extension()));
            let body = match format {
                Format::Csv => t.to_csv()?,
                Format::Markdown => t.to_markdown(),
            };
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Per-day ledger of one run.
pub fn ledger_csv(result: &PlanResult, names: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "day",
        "os_id",
        "served_gb",
        "reserved_gb",
        "forecast_gb",
        "cost_normal",
        "cost_penalty",
        "penalty_gb",
        "sm_bought_gb",
        "sm_sold_gb",
        "sm_cash",
        "so_bought_gb",
        "so_premium",
        "so_exercised_gb",
        "so_strike_cost",
        "carryover_gb",
        "wasted_gb",
    ])?;
    for e in &result.ledger {
        let f = |x: f64| format!("{x:.9}");
        w.write_record([
            e.day.to_string(),
            names[e.os].clone(),
            f(e.served_gb),
            f(e.reserved_gb),
            f(e.forecast_gb),
            f(e.cost_normal),
            f(e.cost_penalty),
            f(e.penalty_gb),
            f(e.sm_bought_gb),
            f(e.sm_sold_gb),
            f(e.sm_cash),
            f(e.so_bought_gb),
            f(e.so_premium),
            f(e.so_exercised_gb),
            f(e.so_strike_cost),
            f(e.carryover_gb),
            f(e.wasted_gb),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to reproduce a run. Contains no timestamps, so
/// identical runs write identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub plans: Vec<String>,
    pub sc_counts: Vec<u32>,
    pub seed: Option<u64>,
    pub traces: String,
    pub days: usize,
    pub clearing: crate::exchange::ClearingMode,
    pub pricing_method: PricingMethod,
    pub config_sha256: String,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn record_outputs(&mut self, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            self.outputs.insert(name, sha256_hex(&bytes));
        }
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.json");
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markdown_shape() {
        let mut t = Table::new("x", "X", vec!["a".into(), "b".into()]);
        t.rows.push(vec!["1".into(), "2".into()]);
        let md = t.to_markdown();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines[2], "| a | b |");
        assert_eq!(lines[3], "|---|---|");
        assert_eq!(lines[4].matches('|').count(), 3);
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new("x", "X", vec!["plan".into(), "v".into()]);
        t.rows.push(vec!["2.a".into(), money(1234.567)]);
        let text = t.to_csv().unwrap();
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rec = r.records().next().unwrap().unwrap();
        assert_eq!(&rec[1], "1234.57");
    }

    #[test]
    fn hashing_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn formats() {
        assert_eq!(Format::parse("markdown").unwrap(), Format::Markdown);
        assert!(Format::parse("xlsx").is_err());
    }
}
