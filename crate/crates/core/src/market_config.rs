//! Service-class tier tables and simulation parameters.
//!
//! Two published tier tables exist: a six-class table and a coarser
//! three-class table whose prices are the pairwise means of the six-class
//! ones. Volume ranges are quoted per month and converted to per-day ranges
//! with a fixed 28-day month. Ranges are lower-exclusive and
//! upper-inclusive, except that the first class also contains zero.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days in a billing month. Fixed; every per-day range and monthly bill uses it.
pub const DAYS_PER_MONTH: u32 = 28;

/// Penalty multiplier for urgent purchases under the high-penalty variant.
pub const HIGH_PENALTY_FACTOR: f64 = 1.2;
/// Penalty multiplier for urgent purchases under the low-penalty variant.
pub const LOW_PENALTY_FACTOR: f64 = 0.95;
/// The unlimited class is priced at `previous / (1 + 1/11)`, i.e. 11/12 of
/// the last limited class (0.012 -> 0.011, 0.0135 -> 0.012375).
pub const UNLIMITED_PRICE_RATIO: f64 = 11.0 / 12.0;

const SIX_SC_PRICES: [f64; 6] = [0.035, 0.030, 0.025, 0.020, 0.015, 0.012];
const SIX_SC_MONTHLY_UPPER: [f64; 6] = [10.0, 100.0, 1_000.0, 10_000.0, 100_000.0, 1_000_000.0];
const THREE_SC_MONTHLY_UPPER: [f64; 3] = [100.0, 10_000.0, 1_000_000.0];

/// Published stock-option premiums ($/GB) as printed next to each tier,
/// `(strike = normal price, strike = low-penalty price)`. Reference data
/// only; the simulator prices its own premiums.
pub const PUBLISHED_PREMIUMS_6: [(f64, f64); 6] = [
    (0.00029513, 0.00028038),
    (0.00025297, 0.00024032),
    (0.00021081, 0.00020027),
    (0.00016865, 0.00016022),
    (0.00012649, 0.00012016),
    (0.00010119, 0.00009613),
];
pub const PUBLISHED_PREMIUMS_3: [(f64, f64); 3] = [
    (0.00027405, 0.00026035),
    (0.00018973, 0.00018024),
    (0.00011384, 0.00010815),
];

/// Rounds to the nearest 1e-9, which is finer than any printed price.
fn decimal(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Converts a monthly traffic volume to the equivalent daily volume.
pub fn monthly_to_daily(tv_monthly: f64) -> Result<f64> {
    if !(tv_monthly >= 0.0) {
        return Err(Error::param("tv_monthly", format!("must be >= 0, got {tv_monthly}")));
    }
    Ok(tv_monthly / DAYS_PER_MONTH as f64)
}

/// Which price applies to urgent end-of-day purchases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceClass {
    pub id: String,
    /// Exclusive lower bound in GB/month (inclusive when zero).
    pub monthly_lower: f64,
    /// Inclusive upper bound in GB/month; `None` for the unlimited class.
    pub monthly_upper: Option<f64>,
    pub daily_lower: f64,
    pub daily_upper: Option<f64>,
    pub normal_price: f64,
    pub high_penalty_price: Option<f64>,
    pub low_penalty_price: Option<f64>,
    /// Published premium for strike = normal price.
    pub so_premium_high: Option<f64>,
    /// Published premium for strike = low-penalty price.
    pub so_premium_low: Option<f64>,
    pub unlimited: bool,
}

impl ServiceClass {
    /// Urgent-purchase price. The unlimited class charges no penalty, so its
    /// normal price applies.
    pub fn penalty_price(&self, kind: PenaltyKind) -> f64 {
        let p = match kind {
            PenaltyKind::High => self.high_penalty_price,
            PenaltyKind::Low => self.low_penalty_price,
        };
        p.unwrap_or(self.normal_price)
    }

    pub fn contains_daily(&self, daily_gb: f64) -> bool {
        let above = if self.daily_lower == 0.0 {
            daily_gb >= 0.0
        } else {
            daily_gb > self.daily_lower
        };
        above && self.daily_upper.is_none_or(|u| daily_gb <= u)
    }

    pub fn contains_monthly(&self, monthly_gb: f64) -> bool {
        let above = if self.monthly_lower == 0.0 {
            monthly_gb >= 0.0
        } else {
            monthly_gb > self.monthly_lower
        };
        above && self.monthly_upper.is_none_or(|u| monthly_gb <= u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierTable {
    pub sc_count: u32,
    /// Ordered by volume; the last entry is the unlimited class.
    pub classes: Vec<ServiceClass>,
}

fn limited_class(idx: usize, lower: f64, upper: f64, normal: f64, premiums: (f64, f64)) -> ServiceClass {
    ServiceClass {
        id: format!("P{}", idx + 1),
        monthly_lower: lower,
        monthly_upper: Some(upper),
        daily_lower: lower / DAYS_PER_MONTH as f64,
        daily_upper: Some(upper / DAYS_PER_MONTH as f64),
        normal_price: normal,
        high_penalty_price: Some(decimal(HIGH_PENALTY_FACTOR * normal)),
        low_penalty_price: Some(decimal(LOW_PENALTY_FACTOR * normal)),
        so_premium_high: Some(premiums.0),
        so_premium_low: Some(premiums.1),
        unlimited: false,
    }
}

/// Builds the published three- or six-class tier table.
pub fn build_tier_table(sc_count: u32) -> Result<TierTable> {
    let (uppers, prices, premiums): (&[f64], Vec<f64>, &[(f64, f64)]) = match sc_count {
        6 => (&SIX_SC_MONTHLY_UPPER, SIX_SC_PRICES.to_vec(), &PUBLISHED_PREMIUMS_6),
        3 => (
            &THREE_SC_MONTHLY_UPPER,
            SIX_SC_PRICES
                .chunks(2)
                .map(|pair| decimal((pair[0] + pair[1]) / 2.0))
                .collect(),
            &PUBLISHED_PREMIUMS_3,
        ),
        other => return Err(Error::InvalidScCount(other)),
    };

    let mut classes = Vec::with_capacity(uppers.len() + 1);
    let mut lower = 0.0;
    for (i, (&upper, &price)) in uppers.iter().zip(&prices).enumerate() {
        classes.push(limited_class(i, lower, upper, price, premiums[i]));
        lower = upper;
    }
    let last_price = *prices.last().expect("non-empty price list");
    classes.push(ServiceClass {
        id: format!("P{}", uppers.len() + 1),
        monthly_lower: lower,
        monthly_upper: None,
        daily_lower: lower / DAYS_PER_MONTH as f64,
        daily_upper: None,
        normal_price: decimal(last_price * UNLIMITED_PRICE_RATIO),
        high_penalty_price: None,
        low_penalty_price: None,
        so_premium_high: None,
        so_premium_low: None,
        unlimited: true,
    });
    Ok(TierTable { sc_count, classes })
}

impl TierTable {
    /// Index of the class containing a daily volume.
    pub fn index_for_daily(&self, daily_gb: f64) -> usize {
        let v = daily_gb.max(0.0);
        self.classes
            .iter()
            .position(|c| c.contains_daily(v))
            .unwrap_or(self.classes.len() - 1)
    }

    pub fn index_for_monthly(&self, monthly_gb: f64) -> usize {
        let v = monthly_gb.max(0.0);
        self.classes
            .iter()
            .position(|c| c.contains_monthly(v))
            .unwrap_or(self.classes.len() - 1)
    }

    pub fn get(&self, id: &str) -> Option<&ServiceClass> {
        self.classes.iter().find(|c| c.id == id)
    }

    pub fn limited(&self) -> impl Iterator<Item = &ServiceClass> {
        self.classes.iter().filter(|c| !c.unlimited)
    }

    /// Writes the table as CSV with one row per class.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "sc",
            "monthly_lower_gb",
            "monthly_upper_gb",
            "daily_lower_gb",
            "daily_upper_gb",
            "normal_price",
            "high_penalty_price",
            "low_penalty_price",
            "so_premium_high",
            "so_premium_low",
            "unlimited",
        ])?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for c in &self.classes {
            w.write_record([
                c.id.clone(),
                c.monthly_lower.to_string(),
                opt(c.monthly_upper),
                c.daily_lower.to_string(),
                opt(c.daily_upper),
                c.normal_price.to_string(),
                opt(c.high_penalty_price),
                opt(c.low_penalty_price),
                opt(c.so_premium_high),
                opt(c.so_premium_low),
                c.unlimited.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Returns the class whose daily range contains `daily_gb`.
pub fn tier_for_volume(table: &TierTable, daily_gb: f64) -> &ServiceClass {
    &table.classes[table.index_for_daily(daily_gb)]
}

/// Global simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub origin_servers: usize,
    pub total_weeks: u32,
    pub reference_period_days: u32,
    pub control_granularity_hours: u32,
    pub min_volume_bytes: u64,
    pub kernel: String,
    /// Bandwidth search grid for leave-one-out selection.
    pub bandwidth_min: f64,
    pub bandwidth_max: f64,
    pub bandwidth_step: f64,
    pub so_ttm_days: u32,
    pub risk_free_rate: f64,
    pub volatility: f64,
    pub dividend_yield: f64,
    pub days_per_month: u32,
    /// $/GB the CDN pays the upstream meta-CDN for planned purchases.
    pub wholesale_price: f64,
    /// Multiplier on `wholesale_price` for urgent upstream purchases.
    pub wholesale_penalty_multiplier: f64,
    /// Scale applied to actual volumes to form first-week orders.
    pub initial_order_scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            origin_servers: 6,
            total_weeks: 52,
            reference_period_days: 7,
            control_granularity_hours: 24,
            min_volume_bytes: 1,
            kernel: "gaussian".into(),
            bandwidth_min: 0.8,
            bandwidth_max: 5.1,
            bandwidth_step: 0.1,
            so_ttm_days: 60,
            risk_free_rate: 0.05,
            volatility: 0.01,
            dividend_yield: 0.02,
            days_per_month: DAYS_PER_MONTH,
            wholesale_price: 0.009,
            wholesale_penalty_multiplier: 1.2,
            initial_order_scale: 1.0,
        }
    }
}

impl SimConfig {
    pub fn total_days(&self) -> u32 {
        self.total_weeks * 7
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("risk_free_rate", self.risk_free_rate),
            ("volatility", self.volatility),
            ("dividend_yield", self.dividend_yield),
            ("wholesale_price", self.wholesale_price),
            ("wholesale_penalty_multiplier", self.wholesale_penalty_multiplier),
            ("initial_order_scale", self.initial_order_scale),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.so_ttm_days < 1 {
            return Err(Error::param("so_ttm_days", "must be >= 1"));
        }
        if self.days_per_month != DAYS_PER_MONTH {
            return Err(Error::param("days_per_month", "must be 28"));
        }
        if self.reference_period_days != 7 {
            return Err(Error::param("reference_period_days", "only a one-week reference period is supported"));
        }
        if self.control_granularity_hours != 24 {
            return Err(Error::param("control_granularity_hours", "only daily control slots are supported"));
        }
        if !self.kernel.eq_ignore_ascii_case("gaussian") {
            return Err(Error::param("kernel", format!("unsupported kernel `{}`", self.kernel)));
        }
        if !(self.bandwidth_min > 0.0 && self.bandwidth_max >= self.bandwidth_min && self.bandwidth_step > 0.0) {
            return Err(Error::param("bandwidth", "need 0 < min <= max and step > 0"));
        }
        if self.total_weeks < 2 {
            return Err(Error::param("total_weeks", "need at least two weeks"));
        }
        if self.origin_servers == 0 {
            return Err(Error::param("origin_servers", "must be >= 1"));
        }
        Ok(())
    }

    /// Candidate bandwidths, inclusive of both ends.
    pub fn bandwidth_grid(&self) -> Vec<f64> {
        let n = ((self.bandwidth_max - self.bandwidth_min) / self.bandwidth_step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| decimal(self.bandwidth_min + i as f64 * self.bandwidth_step))
            .collect()
    }

    pub fn min_volume_gb(&self) -> f64 {
        self.min_volume_bytes as f64 / crate::trace_io::BYTES_PER_GB
    }
}

/// Everything a run needs, loadable from one TOML file. Missing keys keep
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub forecaster: crate::forecasting::ForecasterConfig,
    pub options: crate::options_desk::PolicyConfig,
    pub market: crate::exchange::MarketConfig,
    pub pricing: crate::pricing::PremiumConfig,
    #[serde(rename = "profile")]
    pub profiles: Vec<crate::trace_io::TraceProfile>,
}

/// The shipped six-origin-server experiment configuration.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../configs/default.toml");

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sim: SimConfig::default(),
            forecaster: Default::default(),
            options: Default::default(),
            market: Default::default(),
            pricing: Default::default(),
            profiles: Vec::new(),
        }
    }
}

impl RunConfig {
    /// The shipped experiment: defaults plus six trace profiles.
    pub fn shipped() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG_TOML).expect("shipped config parses")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file layered over the shipped experiment: keys present
    /// in the file override, everything else keeps the shipped value.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut base: toml::Table = toml::from_str(DEFAULT_CONFIG_TOML).map_err(|e| Error::Config(e.to_string()))?;
        let over: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        merge_tables(&mut base, over);
        let cfg: RunConfig = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.forecaster.validate()?;
        self.options.validate()?;
        for p in &self.profiles {
            p.validate()?;
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
