//! Recombining lattices priced by backward induction.

use super::{ExerciseStyle, OptionParams};
use crate::error::{Error, Result};

/// Stretch parameter of the three-branch lattice: node spacing is
/// `lambda * sigma * sqrt(dt)`. With `sqrt(3)` the middle branch carries
/// probability 2/3.
pub const TRINOMIAL_STRETCH: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branching {
    Binomial,
    Trinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSpec {
    pub steps: usize,
    pub branching: Branching,
}

impl LatticeSpec {
    pub fn binomial(steps: usize) -> Self {
        LatticeSpec {
            steps,
            branching: Branching::Binomial,
        }
    }

    pub fn trinomial(steps: usize) -> Self {
        LatticeSpec {
            steps,
            branching: Branching::Trinomial,
        }
    }
}

fn check_prob(prob: f64) -> Result<()> {
    if (0.0..=1.0).contains(&prob) {
        Ok(())
    } else {
        Err(Error::LatticeProbability { prob })
    }
}

pub fn lattice_price(p: &OptionParams, spec: &LatticeSpec) -> Result<f64> {
    p.validate()?;
    if spec.steps == 0 {
        return Err(Error::param("steps", "lattice needs at least one step"));
    }
    match spec.branching {
        Branching::Binomial => binomial(p, spec.steps),
        Branching::Trinomial => trinomial(p, spec.steps),
    }
}

fn binomial(p: &OptionParams, n: usize) -> Result<f64> {
    let dt = p.maturity / n as f64;
    let dx = p.volatility * dt.sqrt();
    let (u, d) = (dx.exp(), (-dx).exp());
    let pu = (((p.rate - p.dividend_yield) * dt).exp() - d) / (u - d);
    check_prob(pu)?;
    let disc = (-p.rate * dt).exp();
    let (wu, wd) = (disc * pu, disc * (1.0 - pu));
    let american = p.style == ExerciseStyle::American;

    // Node j at step i has spot S * exp((i - 2j) dx).
    let mut values: Vec<f64> = (0..=n)
        .map(|j| p.intrinsic(p.spot * ((n as f64 - 2.0 * j as f64) * dx).exp()))
        .collect();
    for i in (0..n).rev() {
        for j in 0..=i {
            let cont = wu * values[j] + wd * values[j + 1];
            values[j] = if american {
                cont.max(p.intrinsic(p.spot * ((i as f64 - 2.0 * j as f64) * dx).exp()))
            } else {
                cont
            };
        }
    }
    Ok(values[0])
}

fn trinomial(p: &OptionParams, n: usize) -> Result<f64> {
    let lambda = TRINOMIAL_STRETCH;
    let dt = p.maturity / n as f64;
    let dx = lambda * p.volatility * dt.sqrt();
    let nu = p.rate - p.dividend_yield - 0.5 * p.volatility * p.volatility;
    let base = 1.0 / (2.0 * lambda * lambda);
    let tilt = nu * dt.sqrt() / (2.0 * lambda * p.volatility);
    let (pu, pd) = (base + tilt, base - tilt);
    let pm = 1.0 - 1.0 / (lambda * lambda);
    check_prob(pu)?;
    check_prob(pd)?;
    check_prob(pm)?;
    let disc = (-p.rate * dt).exp();
    let (wu, wm, wd) = (disc * pu, disc * pm, disc * pd);
    let american = p.style == ExerciseStyle::American;

    // Index k at step i is level (i - k), k in 0..=2i.
    let mut values: Vec<f64> = (0..=2 * n)
        .map(|k| p.intrinsic(p.spot * ((n as f64 - k as f64) * dx).exp()))
        .collect();
    for i in (0..n).rev() {
        for k in 0..=2 * i {
            let cont = wu * values[k] + wm * values[k + 1] + wd * values[k + 2];
            values[k] = if american {
                cont.max(p.intrinsic(p.spot * ((i as f64 - k as f64) * dx).exp()))
            } else {
                cont
            };
        }
    }
    Ok(values[0])
}
