//! Trace-driven simulation of CDN bandwidth pricing plans.

pub mod error;
pub mod exchange;
pub mod forecasting;
pub mod market_config;
pub mod options_desk;
pub mod par;
pub mod plan_engine;
pub mod pricing;
pub mod report;
pub mod trace_io;

pub use error::{Error, Result};
