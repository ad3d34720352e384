//! Monthly billing for the pay-as-you-go and pre-costed plan families.

use serde::{Deserialize, Serialize};

use crate::market_config::{PenaltyKind, ServiceClass, TierTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaygMode {
    /// The whole month is priced at the rate of the class containing it.
    Unified,
    /// Marginal brackets: each class's slice of the month at its own rate.
    Staggered,
}

pub fn payg_bill(monthly_gb: f64, table: &TierTable, mode: PaygMode) -> f64 {
    let v = monthly_gb.max(0.0);
    match mode {
        PaygMode::Unified => v * table.classes[table.index_for_monthly(v)].normal_price,
        PaygMode::Staggered => table
            .classes
            .iter()
            .map(|c| {
                let top = c.monthly_upper.map_or(v, |u| v.min(u));
                (top - c.monthly_lower).max(0.0) * c.normal_price
            })
            .sum(),
    }
}

/// One month on a pre-costed plan: the full class range is paid at the
/// normal price and anything above it at the class's penalty price. The
/// unlimited class reserves what was used, but never less than its own
/// lower bound. Returns `(cost, reserved)`.
pub fn precosted_bill(chosen: &ServiceClass, actual_monthly_gb: f64, penalty: PenaltyKind) -> (f64, f64) {
    let actual = actual_monthly_gb.max(0.0);
    match chosen.monthly_upper {
        None => {
            let reserved = actual.max(chosen.monthly_lower);
            (reserved * chosen.normal_price, reserved)
        }
        Some(upper) => {
            let over = (actual - upper).max(0.0);
            (upper * chosen.normal_price + over * chosen.penalty_price(penalty), upper)
        }
    }
}

/// Cheapest class for a month in hindsight: `(cost, reserved, class index)`.
/// Ties keep the smaller class.
pub fn optimal_precosted_bill(actual_monthly_gb: f64, table: &TierTable, penalty: PenaltyKind) -> (f64, f64, usize) {
    let mut best = (f64::INFINITY, 0.0, 0);
    for (i, c) in table.classes.iter().enumerate() {
        let (cost, reserved) = precosted_bill(c, actual_monthly_gb, penalty);
        if cost < best.0 {
            best = (cost, reserved, i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_config::build_tier_table;

    #[test]
    fn payg_examples() {
        let t = build_tier_table(6).unwrap();
        assert!((payg_bill(50.0, &t, PaygMode::Unified) - 1.50).abs() < 1e-12);
        assert!((payg_bill(50.0, &t, PaygMode::Staggered) - 1.55).abs() < 1e-12);
        assert_eq!(payg_bill(0.0, &t, PaygMode::Unified), 0.0);
        assert_eq!(payg_bill(0.0, &t, PaygMode::Staggered), 0.0);
    }

    #[test]
    fn staggered_reaches_unlimited() {
        let t = build_tier_table(3).unwrap();
        let v = 2_000_000.0;
        let expected = 100.0 * 0.0325 + 9_900.0 * 0.0225 + 990_000.0 * 0.0135 + 1_000_000.0 * 0.012375;
        assert!((payg_bill(v, &t, PaygMode::Staggered) - expected).abs() < 1e-6);
    }

    #[test]
    fn precosted_examples() {
        let t = build_tier_table(6).unwrap();
        let p2 = &t.classes[1];
        let (c, r) = precosted_bill(p2, 80.0, PenaltyKind::High);
        assert!((c - 3.0).abs() < 1e-12);
        assert_eq!(r, 100.0);
        let (c, _) = precosted_bill(p2, 130.0, PenaltyKind::High);
        assert!((c - (3.0 + 30.0 * 0.036)).abs() < 1e-12);
        let (c, _) = precosted_bill(p2, 100.0, PenaltyKind::High);
        assert!((c - 3.0).abs() < 1e-12);
        let unl = t.classes.last().unwrap();
        assert_eq!(precosted_bill(unl, 2e6, PenaltyKind::Low).1, 2e6);
        assert_eq!(precosted_bill(unl, 5.0, PenaltyKind::Low).1, 1e6);
    }

    #[test]
    fn optimal_is_minimum() {
        let t = build_tier_table(6).unwrap();
        for v in [0.0, 80.0, 950.0, 12_345.0] {
            let (best, _, _) = optimal_precosted_bill(v, &t, PenaltyKind::High);
            for c in &t.classes {
                assert!(best <= precosted_bill(c, v, PenaltyKind::High).0);
            }
        }
        let (c, r, i) = optimal_precosted_bill(0.0, &t, PenaltyKind::High);
        assert!((c - 0.35).abs() < 1e-12);
        assert_eq!((r, i), (10.0, 0));
    }
}
