//! Secondary market for unused reserved volume.
//!
//! At the end of each day every origin server posts at most one position:
//! either a surplus (reserved but unused volume) or a deficit (demand its
//! reservation did not cover). The market matches them once per day.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClearingMode {
    /// Every seller sells the same fraction of its surplus and every buyer
    /// receives the same fraction of its deficit.
    Social,
    /// Cheapest asks meet the highest bids first.
    Auction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub clearing: ClearingMode,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            clearing: ClearingMode::Social,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketPosition {
    pub os: usize,
    pub surplus_gb: f64,
    pub deficit_gb: f64,
    /// What the seller paid per GB for the volume on offer.
    pub ask: f64,
    /// What the buyer would otherwise pay per GB (its penalty price).
    pub bid: f64,
}

impl MarketPosition {
    pub fn seller(os: usize, surplus_gb: f64, ask: f64) -> Self {
        MarketPosition {
            os,
            surplus_gb,
            deficit_gb: 0.0,
            ask,
            bid: 0.0,
        }
    }

    pub fn buyer(os: usize, deficit_gb: f64, bid: f64) -> Self {
        MarketPosition {
            os,
            surplus_gb: 0.0,
            deficit_gb,
            ask: 0.0,
            bid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub day: u32,
    pub seller: usize,
    pub buyer: usize,
    pub quantity_gb: f64,
    pub unit_price: f64,
}

impl Trade {
    pub fn value(&self) -> f64 {
        self.quantity_gb * self.unit_price
    }
}

/// Midpoint of ask and bid, never above what the buyer would pay otherwise
/// and never negative.
pub fn trade_price(ask: f64, bid: f64) -> f64 {
    (0.5 * (ask + bid)).clamp(0.0, bid.max(0.0))
}

fn check(positions: &[MarketPosition], day: u32) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for p in positions {
        if !seen.insert(p.os) {
            return Err(Error::DuplicateDeficit { os_id: p.os.to_string(), day });
        }
        if p.surplus_gb < 0.0 || p.deficit_gb < 0.0 || !p.surplus_gb.is_finite() || !p.deficit_gb.is_finite() {
            return Err(Error::param("position", format!("os {} has a negative or non-finite quantity", p.os)));
        }
        if p.surplus_gb > 0.0 && p.deficit_gb > 0.0 {
            return Err(Error::param("position", format!("os {} posts both surplus and deficit", p.os)));
        }
    }
    Ok(())
}

pub fn clear(mode: ClearingMode, day: u32, positions: &[MarketPosition]) -> Result<Vec<Trade>> {
    match mode {
        ClearingMode::Social => clear_social(day, positions),
        ClearingMode::Auction => clear_auction(day, positions),
    }
}

/// Pro-rata clearing: with total surplus `S`, total deficit `D` and
/// `Q = min(S, D)`, seller `i` ships `s_i * Q / S * d_j / D` to buyer `j`.
pub fn clear_social(day: u32, positions: &[MarketPosition]) -> Result<Vec<Trade>> {
    check(positions, day)?;
    let supply: f64 = positions.iter().map(|p| p.surplus_gb).sum();
    let demand: f64 = positions.iter().map(|p| p.deficit_gb).sum();
    if supply <= 0.0 || demand <= 0.0 {
        return Ok(Vec::new());
    }
    let q = supply.min(demand);
    let mut trades = Vec::new();
    for s in positions.iter().filter(|p| p.surplus_gb > 0.0) {
        for b in positions.iter().filter(|p| p.deficit_gb > 0.0) {
            let quantity = s.surplus_gb * (q / supply) * (b.deficit_gb / demand);
            if quantity > 0.0 {
                trades.push(Trade {
                    day,
                    seller: s.os,
                    buyer: b.os,
                    quantity_gb: quantity,
                    unit_price: trade_price(s.ask, b.bid),
                });
            }
        }
    }
    Ok(trades)
}

/// Greedy double auction. Ties keep input order.
pub fn clear_auction(day: u32, positions: &[MarketPosition]) -> Result<Vec<Trade>> {
    check(positions, day)?;
    let mut sellers: Vec<(usize, f64, f64)> = positions
        .iter()
        .filter(|p| p.surplus_gb > 0.0)
        .map(|p| (p.os, p.surplus_gb, p.ask))
        .collect();
    let mut buyers: Vec<(usize, f64, f64)> = positions
        .iter()
        .filter(|p| p.deficit_gb > 0.0)
        .map(|p| (p.os, p.deficit_gb, p.bid))
        .collect();
    sellers.sort_by(|a, b| a.2.total_cmp(&b.2));
    buyers.sort_by(|a, b| b.2.total_cmp(&a.2));

    let mut trades = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < sellers.len() && j < buyers.len() {
        let (s_os, ref mut s_left, ask) = sellers[i];
        let (b_os, ref mut b_left, bid) = buyers[j];
        if ask > bid {
            break;
        }
        let quantity = s_left.min(*b_left);
        trades.push(Trade {
            day,
            seller: s_os,
            buyer: b_os,
            quantity_gb: quantity,
            unit_price: trade_price(ask, bid),
        });
        sellers[i].1 -= quantity;
        buyers[j].1 -= quantity;
        if sellers[i].1 <= 0.0 {
            i += 1;
        }
        if buyers[j].1 <= 0.0 {
            j += 1;
        }
    }
    Ok(trades)
}

/// Quantity each origin server sold (`.0`) and bought (`.1`), indexed by os.
pub fn net_flows(trades: &[Trade], n_os: usize) -> Vec<(f64, f64)> {
    let mut flows = vec![(0.0, 0.0); n_os];
    for t in trades {
        flows[t.seller].0 += t.quantity_gb;
        flows[t.buyer].1 += t.quantity_gb;
    }
    flows
}

/// Netting inside one holder of inventory: surpluses cover deficits without
/// any price. Returns `(matched, residual_surplus, residual_deficit)`.
pub fn redistribute_internal(surpluses: &[f64], deficits: &[f64]) -> (f64, f64, f64) {
    let s: f64 = surpluses.iter().sum();
    let d: f64 = deficits.iter().sum();
    let m = s.min(d);
    (m, s - m, d - m)
}

/// Writes `day,seller,buyer,quantity_gb,unit_price,value` rows, with
/// origin servers named through `names`.
pub fn write_trades_csv<W: std::io::Write>(trades: &[Trade], names: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "seller", "buyer", "quantity_gb", "unit_price", "value"])?;
    for t in trades {
        w.write_record([
            t.day.to_string(),
            names[t.seller].clone(),
            names[t.buyer].clone(),
            format!("{:.9}", t.quantity_gb),
            format!("{:.9}", t.unit_price),
            format!("{:.9}", t.value()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trade csv>", e))?;
    Ok(())
}
