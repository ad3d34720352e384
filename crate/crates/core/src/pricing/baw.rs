//! Barone-Adesi & Whaley quadratic approximation.
//!
//! The American value is the European value plus an early-exercise premium
//! `A * (S / S*)^q`, where `S*` is the critical price at which immediate
//! exercise becomes optimal. `S*` solves a scalar equation handled by a
//! Newton iteration kept inside a shrinking sign-change bracket.

use super::black_scholes::{bs_value, d1_d2};
use super::{norm_cdf, norm_pdf, ExerciseStyle, OptionKind, OptionParams};
use crate::error::{Error, Result};

pub const CRITICAL_PRICE_MAX_ITER: usize = 200;
/// Residual tolerance on the critical-price equation, relative to strike.
pub const CRITICAL_PRICE_TOL: f64 = 1e-9;

struct Quadratic {
    /// Root exponent (`q2 > 0` for calls, `q1 < 0` for puts).
    exponent: f64,
}

fn quadratic(kind: OptionKind, r: f64, q: f64, sigma: f64, t: f64) -> Quadratic {
    let s2 = sigma * sigma;
    let n = 2.0 * (r - q) / s2;
    // m / (1 - e^{-rT}) -> 2 / (sigma^2 T) as r -> 0.
    let m_over_k = if r.abs() < 1e-14 {
        2.0 / (s2 * t)
    } else {
        (2.0 * r / s2) / (-(-r * t).exp_m1())
    };
    let disc = ((n - 1.0) * (n - 1.0) + 4.0 * m_over_k).sqrt();
    let exponent = match kind {
        OptionKind::Call => 0.5 * (-(n - 1.0) + disc),
        OptionKind::Put => 0.5 * (-(n - 1.0) - disc),
    };
    Quadratic { exponent }
}

/// Residual of the critical-price condition and its derivative in `s`.
fn residual(kind: OptionKind, s: f64, k: f64, r: f64, q: f64, sigma: f64, t: f64, e: f64) -> (f64, f64) {
    let (d1, _) = d1_d2(s, k, r, q, sigma, t);
    let dq = (-q * t).exp();
    let pdf_term = dq * norm_pdf(d1) / (e * sigma * t.sqrt());
    let euro = bs_value(kind, s, k, r, q, sigma, t);
    match kind {
        OptionKind::Call => {
            let nd1 = dq * norm_cdf(d1);
            let f = s - k - euro - (1.0 - nd1) * s / e;
            let df = 1.0 - nd1 - (1.0 - nd1) / e + pdf_term;
            (f, df)
        }
        OptionKind::Put => {
            let nmd1 = dq * norm_cdf(-d1);
            let f = k - s - euro + (1.0 - nmd1) * s / e;
            let df = -1.0 + nmd1 + (1.0 - nmd1) / e + pdf_term;
            (f, df)
        }
    }
}

/// Critical exercise price `S*` for the American option described by `p`
/// (spot is ignored). Returns `None` when early exercise is never optimal.
pub fn critical_price(p: &OptionParams) -> Result<Option<f64>> {
    p.validate()?;
    let (k, r, q, sigma, t) = (p.strike, p.rate, p.dividend_yield, p.volatility, p.maturity);
    match p.kind {
        OptionKind::Call if q <= 0.0 => return Ok(None),
        OptionKind::Put if r <= 0.0 => return Ok(None),
        _ => {}
    }
    let e = quadratic(p.kind, r, q, sigma, t).exponent;
    let f = |s: f64| residual(p.kind, s, k, r, q, sigma, t, e);

    // f < 0 at the strike for both kinds; find the other side of the bracket.
    let (mut lo, mut hi) = match p.kind {
        OptionKind::Call => {
            let mut hi = 2.0 * k;
            let mut n = 0;
            while f(hi).0 <= 0.0 {
                hi *= 2.0;
                n += 1;
                if n > 200 {
                    return Err(Error::NoConvergence {
                        iterations: n,
                        residual: f(hi).0,
                    });
                }
            }
            (k, hi)
        }
        OptionKind::Put => (k * 1e-12, k),
    };
    let tol = CRITICAL_PRICE_TOL * k * 1e-3;
    // Seed: the perpetual-option boundary pulled toward the strike.
    let mut s = match p.kind {
        OptionKind::Call => {
            let s_inf = k / (1.0 - 2.0 / e);
            let h = -((r - q) * t + 2.0 * sigma * t.sqrt()) * k / (s_inf - k);
            k + (s_inf - k) * (1.0 - h.exp())
        }
        OptionKind::Put => {
            let s_inf = k / (1.0 - 2.0 / e);
            let h = ((r - q) * t - 2.0 * sigma * t.sqrt()) * k / (k - s_inf);
            s_inf + (k - s_inf) * h.exp()
        }
    };
    if !(s > lo && s < hi) || !s.is_finite() {
        s = 0.5 * (lo + hi);
    }

    let mut last = f64::INFINITY;
    for _ in 0..CRITICAL_PRICE_MAX_ITER {
        let (fv, dfv) = f(s);
        last = fv;
        if fv.abs() < tol {
            return Ok(Some(s));
        }
        // Both residuals are increasing through the root for calls and
        // decreasing for puts; keep the bracket consistent with that.
        let root_above = match p.kind {
            OptionKind::Call => fv < 0.0,
            OptionKind::Put => fv > 0.0,
        };
        if root_above {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s - fv / dfv;
        s = if dfv != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= f64::EPSILON * hi {
            return Ok(Some(s));
        }
    }
    Err(Error::NoConvergence {
        iterations: CRITICAL_PRICE_MAX_ITER,
        residual: last,
    })
}

/// American option value by the quadratic approximation. European-style
/// params are priced as American.
pub fn baw_american(p: &OptionParams) -> Result<f64> {
    p.validate()?;
    let p = p.with_style(ExerciseStyle::American);
    let (s, k, r, q, sigma, t) = (p.spot, p.strike, p.rate, p.dividend_yield, p.volatility, p.maturity);
    let euro = bs_value(p.kind, s, k, r, q, sigma, t);
    let Some(s_star) = critical_price(&p)? else {
        return Ok(euro);
    };
    let e = quadratic(p.kind, r, q, sigma, t).exponent;
    let (d1, _) = d1_d2(s_star, k, r, q, sigma, t);
    let dq = (-q * t).exp();
    let v = match p.kind {
        OptionKind::Call => {
            if s >= s_star {
                s - k
            } else {
                let a2 = (s_star / e) * (1.0 - dq * norm_cdf(d1));
                euro + a2 * (s / s_star).powf(e)
            }
        }
        OptionKind::Put => {
            if s <= s_star {
                k - s
            } else {
                let a1 = -(s_star / e) * (1.0 - dq * norm_cdf(-d1));
                euro + a1 * (s / s_star).powf(e)
            }
        }
    };
    Ok(v.max(euro).max(p.intrinsic(s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::bs_european;

    fn p(kind: OptionKind, s: f64, k: f64, r: f64, q: f64, sigma: f64, t: f64) -> OptionParams {
        OptionParams {
            spot: s,
            strike: k,
            rate: r,
            dividend_yield: q,
            volatility: sigma,
            maturity: t,
            kind,
            style: ExerciseStyle::American,
        }
    }

    #[test]
    fn call_without_dividend_is_european() {
        let c = p(OptionKind::Call, 100.0, 100.0, 0.05, 0.0, 0.2, 1.0);
        let a = baw_american(&c).unwrap();
        let e = bs_european(&c).unwrap();
        assert!((a - e).abs() < 1e-9);
    }

    #[test]
    fn put_exceeds_european() {
        let c = p(OptionKind::Put, 100.0, 100.0, 0.05, 0.0, 0.2, 1.0);
        let a = baw_american(&c).unwrap();
        let e = bs_european(&c).unwrap();
        assert!(a > e);
    }

    #[test]
    fn critical_price_residual_is_small() {
        for kind in [OptionKind::Call, OptionKind::Put] {
            let c = p(kind, 100.0, 100.0, 0.08, 0.04, 0.25, 0.5);
            let s_star = critical_price(&c).unwrap().unwrap();
            let e = quadratic(kind, 0.08, 0.04, 0.25, 0.5).exponent;
            let (f, _) = residual(kind, s_star, 100.0, 0.08, 0.04, 0.25, 0.5, e);
            assert!(f.abs() < CRITICAL_PRICE_TOL * 100.0, "{kind:?} residual {f}");
            match kind {
                OptionKind::Call => assert!(s_star > 100.0),
                OptionKind::Put => assert!(s_star < 100.0),
            }
        }
    }

    #[test]
    fn deep_itm_put_is_intrinsic() {
        let c = p(OptionKind::Put, 40.0, 100.0, 0.1, 0.0, 0.2, 1.0);
        assert!((baw_american(&c).unwrap() - 60.0).abs() < 1e-12);
    }
}
