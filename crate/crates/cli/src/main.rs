use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cdn_prs::market_config::{build_tier_table, RunConfig};
use cdn_prs::par::Exec;
use cdn_prs::plan_engine::{self, PlanId, PlanResult, Scenario};
use cdn_prs::pricing::{mean_markup_over_bs, PricingMethod};
use cdn_prs::report::{self, Format, RunManifest, Table};
use cdn_prs::{exchange, forecasting, options_desk, trace_io};

#[derive(Parser)]
#[command(name = "cdn-prs", version, about = "Simulate CDN pricing plans over origin-server traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print option premiums per service class for every pricing method.
    PriceOptions {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run selected plans and write per-day ledgers and summary tables.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        traces: TraceArgs,
        /// Comma-separated plan ids, or `all`.
        #[arg(long, default_value = "all")]
        plans: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all 17 plans for both class counts and write every report.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        traces: TraceArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render tables from a previous run's results.json.
    Report {
        /// Directory holding results.json.
        #[arg(long)]
        from: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
        format: ReportFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML file layered over the shipped configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// 3, 6 or both.
    #[arg(long, default_value = "both")]
    sc_count: String,
    #[arg(long, value_enum, default_value_t = ExecArg::Parallel)]
    exec: ExecArg,
}

#[derive(Args)]
struct TraceArgs {
    /// Directory of access logs, one file per origin server.
    #[arg(long, conflicts_with = "synthetic")]
    trace_dir: Option<PathBuf>,
    /// Use the configured synthetic profiles (the default).
    #[arg(long)]
    synthetic: bool,
    /// Seed mixed into every synthetic profile.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the simulated horizon.
    #[arg(long)]
    weeks: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExecArg {
    Parallel,
    Sequential,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Markdown,
    Both,
}

impl ReportFormat {
    fn formats(self) -> Vec<Format> {
        match self {
            ReportFormat::Csv => vec![Format::Csv],
            ReportFormat::Markdown => vec![Format::Markdown],
            ReportFormat::Both => vec![Format::Csv, Format::Markdown],
        }
    }
}

impl Common {
    fn load(&self) -> anyhow::Result<RunConfig> {
        Ok(match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::shipped(),
        })
    }

    fn sc_counts(&self) -> anyhow::Result<Vec<u32>> {
        match self.sc_count.as_str() {
            "both" => Ok(vec![6, 3]),
            s => {
                let n: u32 = s.parse().with_context(|| format!("--sc-count: `{s}` is not 3, 6 or both"))?;
                build_tier_table(n)?;
                Ok(vec![n])
            }
        }
    }

    fn exec(&self) -> Exec {
        match self.exec {
            ExecArg::Parallel => Exec::Parallel,
            ExecArg::Sequential => Exec::Sequential,
        }
    }
}

struct Loaded {
    cfg: RunConfig,
    scenario: Scenario,
    source: String,
}

fn load_scenario(common: &Common, args: &TraceArgs) -> anyhow::Result<Loaded> {
    let mut cfg = common.load()?;
    if let Some(w) = args.weeks {
        cfg.sim.total_weeks = w;
        cfg.validate()?;
    }
    let days = cfg.sim.total_days() as usize;
    let (traces, source) = match &args.trace_dir {
        Some(dir) => (trace_io::load_trace_dir(dir, days)?, format!("dir:{}", dir.display())),
        None => {
            if cfg.profiles.is_empty() {
                bail!("no [[profile]] entries configured for synthetic traces");
            }
            (
                trace_io::synthesize_all(&cfg.profiles, days, args.seed, common.exec())?,
                "synthetic".to_string(),
            )
        }
    };
    let scenario = Scenario::prepare(&traces, &cfg, common.exec())?;
    Ok(Loaded { cfg, scenario, source })
}

fn manifest(command: &str, loaded: &Loaded, plans: &[PlanId], sc: &[u32], seed: Option<u64>) -> RunManifest {
    RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        plans: plans.iter().map(|p| p.name().to_string()).collect(),
        sc_counts: sc.to_vec(),
        seed,
        traces: loaded.source.clone(),
        days: loaded.scenario.days(),
        clearing: loaded.cfg.market.clearing,
        pricing_method: loaded.cfg.pricing.method,
        config_sha256: report::sha256_hex(loaded.cfg.to_toml_string().as_bytes()),
        outputs: Default::default(),
    }
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn summary_tables(results: &[PlanResult], names: &[String]) -> anyhow::Result<Vec<Table>> {
    let mut tables = report::os_metrics(results)?;
    tables.extend(report::cdn_metrics(results)?);
    tables.push(report::figure_series(results, names)?);
    Ok(tables)
}

/// Writes results.json with per-day detail stripped.
fn write_results(out: &Path, results: &[PlanResult], names: &[String]) -> anyhow::Result<PathBuf> {
    let slim: Vec<PlanResult> = results
        .iter()
        .map(|r| PlanResult {
            ledger: Vec::new(),
            trades: Vec::new(),
            contracts: Vec::new(),
            ..r.clone()
        })
        .collect();
    let body = serde_json::json!({ "origin_servers": names, "results": slim });
    write(&out.join("results.json"), serde_json::to_string_pretty(&body)? + "\n")
}

fn run_plans(
    command: &str,
    common: &Common,
    args: &TraceArgs,
    plans: &[PlanId],
    out: &Path,
    detail: bool,
) -> anyhow::Result<()> {
    let sc = common.sc_counts()?;
    let loaded = load_scenario(common, args)?;
    let results = plan_engine::sweep(plans, &sc, &loaded.scenario, &loaded.cfg, common.exec())?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let names = &loaded.scenario.names;

    let mut written = Vec::new();
    if detail {
        for r in &results {
            let stem = format!("{}sc_plan_{}", r.sc_count(), r.plan().name());
            written.push(write(&out.join(format!("{stem}_ledger.csv")), report::ledger_csv(r, names)?)?);
            if !r.trades.is_empty() {
                let mut buf = Vec::new();
                exchange::write_trades_csv(&r.trades, names, &mut buf)?;
                written.push(write(&out.join(format!("{stem}_trades.csv")), buf)?);
            }
            if !r.contracts.is_empty() {
                let mut buf = Vec::new();
                options_desk::write_contracts_csv(&r.contracts, names, &mut buf)?;
                written.push(write(&out.join(format!("{stem}_contracts.csv")), buf)?);
            }
        }
        let tracks: Vec<(String, Vec<_>)> = names.iter().cloned().zip(loaded.scenario.tracks.iter().cloned()).collect();
        let mut buf = Vec::new();
        forecasting::write_forecast_csv(&tracks, &mut buf)?;
        written.push(write(&out.join("forecasts.csv"), buf)?);
    }

    let has_baseline = sc.iter().all(|&s| results.iter().any(|r| r.sc_count() == s && r.plan() == PlanId::P1));
    if has_baseline {
        let mut tables = summary_tables(&results, names)?;
        tables.push(report::premium_table(&loaded.cfg.sim, loaded.cfg.pricing.lattice_steps, &sc)?);
        written.extend(report::emit(&tables, Format::Csv, out)?);
        written.extend(report::emit(&tables, Format::Markdown, out)?);
        say(&tables[0].to_markdown())?;
    } else {
        for r in &results {
            say(&format!("{}sc plan {:>6}  cost {:>12.2}", r.sc_count(), r.plan().name(), r.total_cost()))?;
        }
    }
    written.push(write_results(out, &results, names)?);

    let mut m = manifest(command, &loaded, plans, &sc, args.seed);
    m.record_outputs(&written)?;
    m.write(out)?;
    Ok(())
}

fn price_options(common: &Common, out: Option<&Path>) -> anyhow::Result<()> {
    let cfg = common.load()?;
    let sc = common.sc_counts()?;
    let table = report::premium_table(&cfg.sim, cfg.pricing.lattice_steps, &sc)?;
    let mut spread = Table {
        name: "method_spread".into(),
        title: "Mean premium markup over Black-Scholes".into(),
        header: vec!["method".into(), "mean_markup_pct".into()],
        rows: Vec::new(),
    };
    for m in [PricingMethod::Baw, PricingMethod::Binomial, PricingMethod::Trinomial] {
        let v = mean_markup_over_bs(&cfg.sim, m, cfg.pricing.lattice_steps)?;
        spread.rows.push(vec![m.name().into(), format!("{:.4}", 100.0 * v)]);
    }
    say(&table.to_markdown())?;
    say(&spread.to_markdown())?;
    if let Some(dir) = out {
        report::emit(&[table, spread], Format::Csv, dir)?;
    }
    Ok(())
}

// A closed pipe (`| head`) ends output quietly.
fn say(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        r => Ok(r?),
    }
}

fn render_report(from: &Path, format: ReportFormat, out: &Path) -> anyhow::Result<()> {
    let path = from.join("results.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut v: serde_json::Value = serde_json::from_str(&text)?;
    let names: Vec<String> = serde_json::from_value(v["origin_servers"].take())?;
    let results: Vec<PlanResult> = serde_json::from_value(v["results"].take())?;
    let tables = summary_tables(&results, &names)?;
    for f in format.formats() {
        report::emit(&tables, f, out)?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::PriceOptions { common, out } => price_options(&common, out.as_deref()),
        Command::Simulate {
            common,
            traces,
            plans,
            out,
        } => {
            let plans = PlanId::parse_list(&plans)?;
            run_plans("simulate", &common, &traces, &plans, &out, true)
        }
        Command::Sweep { common, traces, out } => run_plans("sweep", &common, &traces, &PlanId::ALL, &out, false),
        Command::Report { from, format, out } => render_report(&from, format, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<cdn_prs::Error>().map_or("cli", |e| e.kind());
            let msg = format!("{e:#}");
            eprintln!("{}", serde_json::json!({ "error": kind, "message": msg }));
            ExitCode::from(2)
        }
    }
}
