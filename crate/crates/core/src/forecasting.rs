//! Reservation forecasting.
//!
//! The core estimator is a Nadaraya-Watson kernel regression with a Gaussian
//! kernel, run separately for each day-of-week phase: the estimate for a
//! Tuesday is a weighted mean of past Tuesdays, weighted by their distance
//! (in weeks) from the target. Around it sit four refinements, each of which
//! reduces to the identity under the right configuration:
//!
//! * transient-high-load detection drops spikes (flash crowds, attacks) from
//!   the training data;
//! * inertia-region detection decays the forecast geometrically after the
//!   load has just left a local maximum;
//! * deviation early detection scales the next frame by today's relative
//!   forecast error;
//! * the first reference period uses the origin server's own declared orders.
//!
//! The resulting per-day step is a binding upper bound on what the origin
//! server may reserve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace_io::DailyLoadSeries;

pub const REFERENCE_PERIOD_DAYS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationScope {
    NextDay,
    Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterConfig {
    /// Fixed kernel bandwidth in weeks. `None` selects it per origin server
    /// by leave-one-out cross-validation over the configured grid.
    pub bandwidth: Option<f64>,
    /// Trailing weeks used for the cross-validation score.
    pub cv_window_weeks: usize,
    /// Slots above `multiplier * median(surrounding week)` are dropped from
    /// training. `0` disables detection.
    pub thldm_multiplier: f64,
    /// Per-slot geometric decay after a just-left local maximum. `0` disables.
    pub irdm_decay: f64,
    /// Trailing moving-average width used for peak detection.
    pub irdm_smoothing: usize,
    /// Weight of today's relative error applied to the next frame.
    pub dedm_blend: f64,
    pub dedm_scope: DeviationScope,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        ForecasterConfig {
            bandwidth: None,
            cv_window_weeks: 12,
            thldm_multiplier: 5.0,
            irdm_decay: 0.0,
            irdm_smoothing: 1,
            dedm_blend: 0.5,
            dedm_scope: DeviationScope::NextDay,
        }
    }
}

impl ForecasterConfig {
    /// Every refinement switched off: plain stepized kernel regression.
    pub fn plain(self) -> Self {
        ForecasterConfig {
            thldm_multiplier: 0.0,
            irdm_decay: 0.0,
            dedm_blend: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(h) = self.bandwidth {
            if !(h > 0.0) {
                return Err(Error::param("bandwidth", format!("must be > 0, got {h}")));
            }
        }
        if !(self.thldm_multiplier == 0.0 || self.thldm_multiplier > 1.0) {
            return Err(Error::param("thldm_multiplier", "must be 0 (off) or > 1"));
        }
        if !(0.0..1.0).contains(&self.irdm_decay) {
            return Err(Error::param("irdm_decay", "must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.dedm_blend) {
            return Err(Error::param("dedm_blend", "must be in [0, 1]"));
        }
        if self.irdm_smoothing == 0 || self.cv_window_weeks < 2 {
            return Err(Error::param("irdm_smoothing", "smoothing >= 1 and cv window >= 2 weeks"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepForecast {
    pub day: u32,
    pub predicted_gb: f64,
}

/// Gaussian Nadaraya-Watson estimate at `x0` from `(x, y)` points. Weights
/// are shifted by their largest exponent, so far-away queries still return
/// the nearest points' mean instead of 0/0. `None` when there are no points.
pub fn nadaraya_watson(points: &[(f64, f64)], x0: f64, bandwidth: f64) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let expo = |x: f64| {
        let z = (x0 - x) / bandwidth;
        -0.5 * z * z
    };
    let top = points.iter().map(|&(x, _)| expo(x)).fold(f64::NEG_INFINITY, f64::max);
    let (num, den) = points.iter().fold((0.0, 0.0), |(n, d), &(x, y)| {
        let w = (expo(x) - top).exp();
        (n + w * y, d + w)
    });
    Some(num / den)
}

/// Same-phase training points for `target_day`, in week units.
fn phase_points(history: &[f64], excluded: &[bool], target_day: usize) -> Vec<(f64, f64)> {
    let phase = target_day % REFERENCE_PERIOD_DAYS;
    (phase..history.len())
        .step_by(REFERENCE_PERIOD_DAYS)
        .filter(|&j| !excluded.get(j).copied().unwrap_or(false))
        .map(|j| (j as f64 / REFERENCE_PERIOD_DAYS as f64, history[j]))
        .collect()
}

/// Kernel-regression estimate for `target_day` from the same-phase slots
/// of `history` that are not `excluded`.
pub fn kre_estimate(history: &[f64], excluded: &[bool], target_day: usize, bandwidth: f64) -> Result<f64> {
    let pts = phase_points(history, excluded, target_day);
    nadaraya_watson(&pts, target_day as f64 / REFERENCE_PERIOD_DAYS as f64, bandwidth).ok_or(Error::ColdStart)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Flags slots exceeding `multiplier` times the median of the reference
/// period centred on them (clipped at the series ends). The threshold never
/// drops below `min_volume_gb`, so an all-zero series has no flags.
pub fn detect_transient_high_load(history: &[f64], cfg: &ForecasterConfig, min_volume_gb: f64) -> Vec<bool> {
    let n = history.len();
    if cfg.thldm_multiplier == 0.0 || n < REFERENCE_PERIOD_DAYS {
        return vec![false; n];
    }
    let half = REFERENCE_PERIOD_DAYS / 2;
    let mut window = Vec::with_capacity(REFERENCE_PERIOD_DAYS);
    (0..n)
        .map(|s| {
            window.clear();
            window.extend_from_slice(&history[s.saturating_sub(half)..(s + half + 1).min(n)]);
            let threshold = (cfg.thldm_multiplier * median(&mut window)).max(min_volume_gb);
            history[s] > threshold
        })
        .collect()
}

/// One constant step per daily slot starting at `first_day`, clamped at 0.
pub fn stepize(estimates: &[f64], first_day: u32) -> Vec<StepForecast> {
    estimates
        .iter()
        .enumerate()
        .map(|(i, &e)| StepForecast {
            day: first_day + i as u32,
            predicted_gb: e.max(0.0),
        })
        .collect()
}

fn smoothed_tail(history: &[f64], width: usize, take: usize) -> Vec<f64> {
    let n = history.len();
    let start = n.saturating_sub(take);
    (start..n)
        .map(|i| {
            let lo = (i + 1).saturating_sub(width);
            let w = &history[lo..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Whether the smoothed load has just left a local maximum: the second to
/// last point is a strict peak.
pub fn just_left_peak(history: &[f64], smoothing: usize) -> bool {
    let s = smoothed_tail(history, smoothing, 3);
    s.len() == 3 && s[1] > s[0] && s[2] < s[1]
}

/// Decays step `k` (1-based) by `(1 - decay)^k` when the history has just
/// left a peak.
pub fn apply_inertia(steps: &[StepForecast], history: &[f64], cfg: &ForecasterConfig) -> Vec<StepForecast> {
    if cfg.irdm_decay == 0.0 || !just_left_peak(history, cfg.irdm_smoothing) {
        return steps.to_vec();
    }
    let keep = 1.0 - cfg.irdm_decay;
    steps
        .iter()
        .enumerate()
        .map(|(k, s)| StepForecast {
            day: s.day,
            predicted_gb: (s.predicted_gb * keep.powi(k as i32 + 1)).max(0.0),
        })
        .collect()
}

/// Scales the next frame by `1 + blend * (actual - forecast) / forecast`.
pub fn deviation_adjust(
    next_frame: &[StepForecast],
    today_forecast: f64,
    today_actual: f64,
    cfg: &ForecasterConfig,
) -> Vec<StepForecast> {
    const EPS: f64 = 1e-12;
    let factor = 1.0 + cfg.dedm_blend * (today_actual - today_forecast) / today_forecast.max(EPS);
    next_frame
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let apply = cfg.dedm_scope == DeviationScope::Frame || i == 0;
            StepForecast {
                day: s.day,
                predicted_gb: if apply { (s.predicted_gb * factor).max(0.0) } else { s.predicted_gb },
            }
        })
        .collect()
}

/// First-week forecast: the origin server's declared orders.
pub fn initial_reservation(orders: &[f64]) -> Result<Vec<StepForecast>> {
    if orders.len() != REFERENCE_PERIOD_DAYS {
        return Err(Error::param(
            "orders",
            format!("need exactly {REFERENCE_PERIOD_DAYS} daily orders, got {}", orders.len()),
        ));
    }
    if orders.iter().any(|o| !(*o >= 0.0)) {
        return Err(Error::param("orders", "orders must be >= 0"));
    }
    Ok(stepize(orders, 0))
}

/// The forecast is an upper bound on any reservation.
pub fn reservation_cap(requested: f64, forecast: &StepForecast) -> f64 {
    requested.max(0.0).min(forecast.predicted_gb)
}

/// Leave-one-out bandwidth choice over `grid`, scoring the last
/// `window_weeks` of history. Ties keep the smaller bandwidth; with nothing
/// to score the largest bandwidth is returned.
pub fn select_bandwidth(history: &[f64], excluded: &[bool], grid: &[f64], window_weeks: usize) -> f64 {
    let start = history.len().saturating_sub(window_weeks * REFERENCE_PERIOD_DAYS);
    let per_phase: Vec<Vec<(f64, f64)>> = (0..REFERENCE_PERIOD_DAYS)
        .map(|phase| {
            let first = start + (phase + REFERENCE_PERIOD_DAYS - start % REFERENCE_PERIOD_DAYS) % REFERENCE_PERIOD_DAYS;
            (first..history.len())
                .step_by(REFERENCE_PERIOD_DAYS)
                .filter(|&j| !excluded.get(j).copied().unwrap_or(false))
                .map(|j| (j as f64 / REFERENCE_PERIOD_DAYS as f64, history[j]))
                .collect()
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    let mut others = Vec::new();
    for &h in grid {
        let mut sse = 0.0;
        let mut count = 0usize;
        for pts in &per_phase {
            if pts.len() < 2 {
                continue;
            }
            for (i, &(x, y)) in pts.iter().enumerate() {
                others.clear();
                others.extend(pts.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, p)| *p));
                if let Some(est) = nadaraya_watson(&others, x, h) {
                    sse += (y - est) * (y - est);
                    count += 1;
                }
            }
        }
        if count == 0 {
            continue;
        }
        if best.is_none_or(|(_, e)| sse < e) {
            best = Some((h, sse));
        }
    }
    best.map(|(h, _)| h)
        .unwrap_or_else(|| grid.iter().copied().fold(f64::NAN, f64::max))
}

/// One day of an origin server's forecast track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForecastPoint {
    pub day: u32,
    /// Bandwidth in force (0 during the first reference period).
    pub bandwidth: f64,
    /// Raw kernel estimate (the declared order in week one).
    pub kre_gb: f64,
    /// Estimate after inertia, before the deviation correction.
    pub base_gb: f64,
    /// Binding forecast after all refinements.
    pub forecast_gb: f64,
    pub actual_gb: f64,
    /// Whether this day's actual load was later flagged as transient.
    pub flagged: bool,
    /// Whether the estimate fell back because no same-phase history was usable.
    pub cold_start: bool,
}

/// Runs the forecaster day by day over `series`. Forecasts for day `d` only
/// see actual load before `d`. `orders` covers the first reference period.
pub fn forecast_track(
    series: &DailyLoadSeries,
    orders: &[f64],
    cfg: &ForecasterConfig,
    grid: &[f64],
    min_volume_gb: f64,
) -> Result<Vec<ForecastPoint>> {
    let actual = &series.volumes;
    let days = actual.len();
    let first_week = initial_reservation(orders)?;
    let mut out: Vec<ForecastPoint> = Vec::with_capacity(days);
    let mut bandwidth = cfg.bandwidth.unwrap_or(0.0);

    for d in 0..days {
        if d < REFERENCE_PERIOD_DAYS {
            let f = first_week[d].predicted_gb;
            out.push(ForecastPoint {
                day: d as u32,
                bandwidth: 0.0,
                kre_gb: f,
                base_gb: f,
                forecast_gb: f,
                actual_gb: actual[d],
                flagged: false,
                cold_start: false,
            });
            continue;
        }
        let history = &actual[..d];
        let flags = detect_transient_high_load(history, cfg, min_volume_gb);
        if cfg.bandwidth.is_none() && d % REFERENCE_PERIOD_DAYS == 0 {
            bandwidth = select_bandwidth(history, &flags, grid, cfg.cv_window_weeks);
        }
        let (kre, cold) = match kre_estimate(history, &flags, d, bandwidth) {
            Ok(v) => (v, false),
            Err(_) => (cold_start_estimate(history, &flags, d, bandwidth), true),
        };
        let steps = stepize(&[kre], d as u32);
        let steps = apply_inertia(&steps, history, cfg);
        let base = steps[0].predicted_gb;
        // The correction compares against yesterday's uncorrected estimate,
        // so it does not feed on itself.
        let prev = &out[d - 1];
        let steps = deviation_adjust(&steps, prev.base_gb, prev.actual_gb, cfg);
        out.push(ForecastPoint {
            day: d as u32,
            bandwidth,
            kre_gb: kre,
            base_gb: base,
            forecast_gb: steps[0].predicted_gb,
            actual_gb: actual[d],
            flagged: false,
            cold_start: cold,
        });
    }
    for (p, f) in out
        .iter_mut()
        .zip(detect_transient_high_load(actual, cfg, min_volume_gb))
    {
        p.flagged = f;
    }
    Ok(out)
}

/// Fallback when every same-phase slot is excluded: regress over all
/// unflagged slots ignoring phase, else repeat the last observation.
fn cold_start_estimate(history: &[f64], flags: &[bool], target_day: usize, bandwidth: f64) -> f64 {
    let pts: Vec<(f64, f64)> = history
        .iter()
        .enumerate()
        .filter(|(j, _)| !flags[*j])
        .map(|(j, &y)| (j as f64 / REFERENCE_PERIOD_DAYS as f64, y))
        .collect();
    nadaraya_watson(&pts, target_day as f64 / REFERENCE_PERIOD_DAYS as f64, bandwidth.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|| history.last().copied().unwrap_or(0.0))
}

/// Writes forecast tracks as CSV: `os_id,day,bandwidth,kre_gb,base_gb,forecast_gb,actual_gb,flagged,cold_start`.
pub fn write_forecast_csv<W: std::io::Write>(tracks: &[(String, Vec<ForecastPoint>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["os_id", "day", "bandwidth", "kre_gb", "base_gb", "forecast_gb", "actual_gb", "flagged", "cold_start"])?;
    for (os, track) in tracks {
        for p in track {
            w.write_record([
                os.clone(),
                p.day.to_string(),
                format!("{:.1}", p.bandwidth),
                format!("{:.9}", p.kre_gb),
                format!("{:.9}", p.base_gb),
                format!("{:.9}", p.forecast_gb),
                format!("{:.9}", p.actual_gb),
                p.flagged.to_string(),
                p.cold_start.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<forecast csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ForecasterConfig {
        ForecasterConfig::default()
    }

    #[test]
    fn constant_history() {
        let h = vec![4.2; 35];
        for t in 35..42 {
            assert!((kre_estimate(&h, &[], t, 1.3).unwrap() - 4.2).abs() < 1e-12);
        }
    }

    #[test]
    fn single_observation() {
        let pts = [(0.0, 7.5)];
        assert_eq!(nadaraya_watson(&pts, 3.0, 0.8), Some(7.5));
    }

    #[test]
    fn symmetric_pair_gives_mean() {
        let pts = [(1.0, 2.0), (3.0, 6.0)];
        assert!((nadaraya_watson(&pts, 2.0, 0.9).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn far_query_does_not_underflow() {
        let pts = [(0.0, 1.0), (1.0, 3.0)];
        let v = nadaraya_watson(&pts, 500.0, 0.8).unwrap();
        assert!((v - 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_history_is_cold_start() {
        assert!(matches!(kre_estimate(&[], &[], 7, 1.0), Err(Error::ColdStart)));
        let h = vec![1.0; 7];
        let all = vec![true; 7];
        assert!(kre_estimate(&h, &all, 7, 1.0).is_err());
    }

    #[test]
    fn thldm_flat_series_has_no_flags() {
        let flags = detect_transient_high_load(&[3.0; 21], &cfg(), 1e-9);
        assert!(flags.iter().all(|f| !f));
    }

    #[test]
    fn thldm_flags_tenfold_spike() {
        let mut h = vec![2.0; 21];
        h[10] = 20.0;
        let flags = detect_transient_high_load(&h, &cfg(), 1e-9);
        assert_eq!(flags.iter().filter(|f| **f).count(), 1);
        assert!(flags[10]);
    }

    #[test]
    fn thldm_all_zero() {
        let flags = detect_transient_high_load(&[0.0; 14], &cfg(), 1.0 / 1_073_741_824.0);
        assert!(flags.iter().all(|f| !f));
    }

    #[test]
    fn stepize_clamps_and_preserves_order() {
        let s = stepize(&[1.0, -1e-15, 3.0], 10);
        assert_eq!(s[0].day, 10);
        assert_eq!(s[1].predicted_gb, 0.0);
        let mono = stepize(&[1.0, 2.0, 3.0], 0);
        assert!(mono.windows(2).all(|w| w[0].predicted_gb <= w[1].predicted_gb));
    }

    #[test]
    fn inertia_identity_when_off() {
        let steps = stepize(&[5.0, 5.0], 4);
        assert_eq!(apply_inertia(&steps, &[1.0, 2.0, 5.0, 2.0], &cfg()), steps);
    }

    #[test]
    fn inertia_after_single_peak() {
        let c = ForecasterConfig { irdm_decay: 0.2, ..cfg() };
        let steps = stepize(&[5.0, 5.0], 4);
        let out = apply_inertia(&steps, &[1.0, 2.0, 5.0, 2.0], &c);
        assert!((out[0].predicted_gb - 4.0).abs() < 1e-12);
        assert!((out[1].predicted_gb - 3.2).abs() < 1e-12);
    }

    #[test]
    fn inertia_ignores_monotone_history() {
        let c = ForecasterConfig { irdm_decay: 0.2, ..cfg() };
        let steps = stepize(&[5.0], 4);
        assert_eq!(apply_inertia(&steps, &[1.0, 2.0, 3.0, 4.0], &c), steps);
    }

    #[test]
    fn deviation_cases() {
        let frame = stepize(&[10.0, 10.0], 0);
        assert_eq!(deviation_adjust(&frame, 4.0, 4.0, &cfg()), frame);
        let up = deviation_adjust(&frame, 4.0, 8.0, &cfg());
        assert!((up[0].predicted_gb - 15.0).abs() < 1e-12);
        assert_eq!(up[1].predicted_gb, 10.0);
        let whole = deviation_adjust(&frame, 4.0, 8.0, &ForecasterConfig { dedm_scope: DeviationScope::Frame, ..cfg() });
        assert!((whole[1].predicted_gb - 15.0).abs() < 1e-12);
        let off = ForecasterConfig { dedm_blend: 0.0, ..cfg() };
        assert_eq!(deviation_adjust(&frame, 4.0, 8.0, &off), frame);
        let down = deviation_adjust(&frame, 4.0, 0.0, &ForecasterConfig { dedm_blend: 1.0, ..cfg() });
        assert_eq!(down[0].predicted_gb, 0.0);
    }

    #[test]
    fn initial_orders() {
        let s = initial_reservation(&[5.0; 7]).unwrap();
        assert!(s.iter().all(|x| x.predicted_gb == 5.0));
        assert!(initial_reservation(&[0.0; 7]).unwrap().iter().all(|x| x.predicted_gb == 0.0));
        assert!(initial_reservation(&[5.0; 6]).is_err());
    }

    #[test]
    fn cap_is_min() {
        let f = StepForecast { day: 0, predicted_gb: 8.0 };
        assert_eq!(reservation_cap(10.0, &f), 8.0);
        assert_eq!(reservation_cap(3.0, &f), 3.0);
        assert_eq!(reservation_cap(0.0, &f), 0.0);
    }

    #[test]
    fn track_hands_over_after_week_one() {
        let s = DailyLoadSeries::new("a", 0, vec![3.0; 28]).unwrap();
        let grid = [0.8, 1.6, 3.2];
        let t = forecast_track(&s, &[2.0; 7], &cfg(), &grid, 1e-9).unwrap();
        assert_eq!(t[6].forecast_gb, 2.0);
        assert_eq!(t[6].bandwidth, 0.0);
        // Day 7 sees a week of 3.0 and yesterday's error (3 vs 2) scaled by 0.5.
        assert!((t[7].kre_gb - 3.0).abs() < 1e-12);
        assert!((t[7].forecast_gb - 3.75).abs() < 1e-12);
        assert!(t[8..].iter().all(|p| (p.forecast_gb - 3.0).abs() < 1e-9));
    }

    #[test]
    fn bandwidth_selection_stays_on_grid() {
        let h: Vec<f64> = (0..70).map(|i| 5.0 + (i as f64 * 0.37).sin()).collect();
        let grid = [0.8, 1.0, 2.0, 5.1];
        let b = select_bandwidth(&h, &[], &grid, 12);
        assert!(grid.contains(&b));
        assert_eq!(select_bandwidth(&h[..7], &[], &grid, 12), 5.1);
    }
}
