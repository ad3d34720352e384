//! Option pricing: Black-Scholes closed form, the Barone-Adesi & Whaley
//! quadratic approximation for American exercise, and CRR binomial /
//! trinomial lattices. All prices are in the same currency unit as spot and
//! strike; maturities are in years.

mod baw;
mod black_scholes;
mod lattice;

use serde::{Deserialize, Serialize};

pub use baw::{baw_american, critical_price, CRITICAL_PRICE_MAX_ITER, CRITICAL_PRICE_TOL};
pub use black_scholes::bs_european;
pub use lattice::{lattice_price, Branching, LatticeSpec, TRINOMIAL_STRETCH};

use crate::error::{Error, Result};
use crate::market_config::{SimConfig, TierTable};

/// Calendar days per year used to convert day counts into maturities.
pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExerciseStyle {
    European,
    American,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionParams {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub dividend_yield: f64,
    pub volatility: f64,
    /// Years.
    pub maturity: f64,
    pub kind: OptionKind,
    pub style: ExerciseStyle,
}

impl OptionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return Err(Error::param("spot", format!("must be > 0, got {}", self.spot)));
        }
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(Error::param("strike", format!("must be > 0, got {}", self.strike)));
        }
        if !(self.volatility > 0.0 && self.volatility.is_finite()) {
            return Err(Error::param("volatility", format!("must be > 0, got {}", self.volatility)));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::param("maturity", format!("must be > 0, got {}", self.maturity)));
        }
        if !self.rate.is_finite() || !self.dividend_yield.is_finite() {
            return Err(Error::param("rate", "rate and dividend yield must be finite"));
        }
        Ok(())
    }

    pub fn intrinsic(&self, spot: f64) -> f64 {
        match self.kind {
            OptionKind::Call => (spot - self.strike).max(0.0),
            OptionKind::Put => (self.strike - spot).max(0.0),
        }
    }

    pub fn with_style(self, style: ExerciseStyle) -> Self {
        OptionParams { style, ..self }
    }

    pub fn with_kind(self, kind: OptionKind) -> Self {
        OptionParams { kind, ..self }
    }

    /// Same contract with spot and strike scaled by `lambda`.
    pub fn scaled(self, lambda: f64) -> Self {
        OptionParams {
            spot: self.spot * lambda,
            strike: self.strike * lambda,
            ..self
        }
    }
}

pub(crate) fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub(crate) fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Pricing route for stock-option premiums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingMethod {
    /// European closed form; for comparison only.
    Bs,
    Baw,
    Binomial,
    Trinomial,
}

impl PricingMethod {
    pub const ALL: [PricingMethod; 4] = [
        PricingMethod::Bs,
        PricingMethod::Baw,
        PricingMethod::Binomial,
        PricingMethod::Trinomial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PricingMethod::Bs => "bs",
            PricingMethod::Baw => "baw",
            PricingMethod::Binomial => "binomial",
            PricingMethod::Trinomial => "trinomial",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bs" => Ok(PricingMethod::Bs),
            "baw" => Ok(PricingMethod::Baw),
            "binomial" => Ok(PricingMethod::Binomial),
            "trinomial" => Ok(PricingMethod::Trinomial),
            other => Err(Error::param("method", format!("unknown pricing method `{other}`"))),
        }
    }
}

/// Prices `p` with the given method. `Bs` always prices European exercise;
/// the other methods honour `p.style`.
pub fn price(p: &OptionParams, method: PricingMethod, steps: usize) -> Result<f64> {
    match method {
        PricingMethod::Bs => bs_european(&p.with_style(ExerciseStyle::European)),
        PricingMethod::Baw => match p.style {
            ExerciseStyle::American => baw_american(p),
            ExerciseStyle::European => bs_european(p),
        },
        PricingMethod::Binomial => lattice_price(p, &LatticeSpec::binomial(steps)),
        PricingMethod::Trinomial => lattice_price(p, &LatticeSpec::trinomial(steps)),
    }
}

/// Which tier price serves as the option strike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrikeRule {
    /// Strike = normal price (high-penalty variant).
    Normal,
    /// Strike = low-penalty price (low-penalty variant).
    LowPenalty,
}

impl StrikeRule {
    pub fn strike_for(self, class: &crate::market_config::ServiceClass) -> f64 {
        match self {
            StrikeRule::Normal => class.normal_price,
            StrikeRule::LowPenalty => class.low_penalty_price.unwrap_or(class.normal_price),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PremiumConfig {
    pub method: PricingMethod,
    pub lattice_steps: usize,
}

impl Default for PremiumConfig {
    fn default() -> Self {
        PremiumConfig {
            method: PricingMethod::Baw,
            lattice_steps: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TierPremium {
    pub sc: String,
    pub strike: f64,
    /// $/GB paid upfront for the right to buy one GB at `strike`.
    pub premium: f64,
}

/// Premium per GB for each limited tier: an at-the-money American call
/// with spot = strike = the rule's tier price and maturity `so_ttm_days`.
/// The `Bs` method prices the European equivalent.
pub fn so_premium_table(
    table: &TierTable,
    cfg: &SimConfig,
    strike_rule: StrikeRule,
    method: PricingMethod,
    lattice_steps: usize,
) -> Result<Vec<TierPremium>> {
    table
        .limited()
        .map(|class| {
            let strike = strike_rule.strike_for(class);
            let p = OptionParams {
                spot: strike,
                strike,
                rate: cfg.risk_free_rate,
                dividend_yield: cfg.dividend_yield,
                volatility: cfg.volatility,
                maturity: cfg.so_ttm_days as f64 / DAYS_PER_YEAR,
                kind: OptionKind::Call,
                style: ExerciseStyle::American,
            };
            Ok(TierPremium {
                sc: class.id.clone(),
                strike,
                premium: price(&p, method, lattice_steps)?,
            })
        })
        .collect()
}

/// Mean relative markup of `method` over Black-Scholes across the normal
/// prices of both published tables.
pub fn mean_markup_over_bs(cfg: &SimConfig, method: PricingMethod, lattice_steps: usize) -> Result<f64> {
    let mut ratios = Vec::new();
    for sc in [6, 3] {
        let table = crate::market_config::build_tier_table(sc)?;
        let bs = so_premium_table(&table, cfg, StrikeRule::Normal, PricingMethod::Bs, lattice_steps)?;
        let other = so_premium_table(&table, cfg, StrikeRule::Normal, method, lattice_steps)?;
        ratios.extend(bs.iter().zip(&other).map(|(b, o)| o.premium / b.premium - 1.0));
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}
