//! Per-origin-server daily load series: access-log ingestion and seeded
//! synthetic traces.
//!
//! Volumes are stored in GB, with 1 GB = 2^30 bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

pub const BYTES_PER_GB: f64 = 1_073_741_824.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyLoadSeries {
    pub os_id: String,
    /// Day index of `volumes[0]` (days since 1970-01-01 for parsed logs).
    pub start_day: i64,
    /// GB served per daily control slot.
    pub volumes: Vec<f64>,
}

impl DailyLoadSeries {
    pub fn new(os_id: impl Into<String>, start_day: i64, volumes: Vec<f64>) -> Result<Self> {
        if let Some(v) = volumes.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Trace(format!("volume {v} is negative or not finite")));
        }
        Ok(DailyLoadSeries {
            os_id: os_id.into(),
            start_day,
            volumes,
        })
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }
}

/// Total GB served over the series.
pub fn served_total(series: &DailyLoadSeries) -> f64 {
    series.volumes.iter().sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub series: DailyLoadSeries,
    pub lines: usize,
    pub skipped: usize,
}

/// Extracts `(day index, bytes)` from one Common/Combined Log Format line.
fn parse_line(line: &str) -> Option<(i64, u64)> {
    let open = line.find('[')?;
    let close = open + line[open..].find(']')?;
    let ts = DateTime::parse_from_str(&line[open + 1..close], "%d/%b/%Y:%H:%M:%S %z").ok()?;
    let day = ts.date_naive().num_days_from_ce() as i64 - EPOCH_CE_DAYS;

    // Skip the quoted request, honouring backslash escapes.
    let rest = &line[close + 1..];
    let q0 = rest.find('"')?;
    let mut escaped = false;
    let mut end = None;
    for (i, c) in rest[q0 + 1..].char_indices() {
        match c {
            '\\' if !escaped => escaped = true,
            '"' if !escaped => {
                end = Some(q0 + 1 + i);
                break;
            }
            _ => escaped = false,
        }
    }
    let mut fields = rest[end? + 1..].split_whitespace();
    let _status: u16 = fields.next()?.parse().ok()?;
    let bytes: u64 = fields.next()?.parse().ok()?;
    Some((day, bytes))
}

// 1970-01-01 in chrono's days-from-CE numbering.
const EPOCH_CE_DAYS: i64 = 719_163;

/// Sums response bytes per day. Lines without a parseable timestamp or a
/// numeric bytes field (including `-`) are skipped and counted.
pub fn parse_access_log<R: BufRead>(os_id: &str, reader: R) -> Result<ParsedLog> {
    let mut per_day: BTreeMap<i64, u64> = BTreeMap::new();
    let (mut lines, mut skipped) = (0usize, 0usize);
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(os_id, e))?;
        if line.trim().is_empty() {
            continue;
        }
        lines += 1;
        match parse_line(&line) {
            Some((day, bytes)) => *per_day.entry(day).or_default() += bytes,
            None => skipped += 1,
        }
    }
    let series = match (per_day.keys().next(), per_day.keys().next_back()) {
        (Some(&first), Some(&last)) => {
            let mut volumes = vec![0.0; (last - first + 1) as usize];
            for (day, bytes) in per_day {
                volumes[(day - first) as usize] = bytes as f64 / BYTES_PER_GB;
            }
            DailyLoadSeries::new(os_id, first, volumes)?
        }
        _ => DailyLoadSeries::new(os_id, 0, Vec::new())?,
    };
    Ok(ParsedLog {
        series,
        lines,
        skipped,
    })
}

/// Reads a plain or gzip-compressed access log.
pub fn read_log_file(path: &Path) -> Result<ParsedLog> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let os_id = os_id_from_path(path);
    if n == 2 && magic == [0x1f, 0x8b] {
        parse_access_log(&os_id, BufReader::new(flate2::read::MultiGzDecoder::new(file)))
    } else {
        parse_access_log(&os_id, BufReader::new(file))
    }
}

fn os_id_from_path(path: &Path) -> String {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("os");
    let name = name.strip_suffix(".gz").unwrap_or(name);
    name.strip_suffix(".log").unwrap_or(name).to_string()
}

/// Loads every regular file in `dir` as one origin server's log, sorted by
/// file name, and aligns them to a common first day and length `days`.
pub fn load_trace_dir(dir: &Path, days: usize) -> Result<Vec<DailyLoadSeries>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Trace(format!("no log files in {}", dir.display())));
    }
    let mut series = paths
        .iter()
        .map(|p| read_log_file(p).map(|parsed| parsed.series))
        .collect::<Result<Vec<_>>>()?;
    align_series(&mut series, days);
    Ok(series)
}

/// Re-bases all series on their earliest common start day and pads with
/// zeros or truncates to exactly `days` slots.
pub fn align_series(series: &mut [DailyLoadSeries], days: usize) {
    let Some(start) = series.iter().filter(|s| !s.is_empty()).map(|s| s.start_day).min() else {
        for s in series.iter_mut() {
            s.volumes = vec![0.0; days];
        }
        return;
    };
    for s in series.iter_mut() {
        let mut v = vec![0.0; days];
        for (i, &x) in s.volumes.iter().enumerate() {
            let idx = s.start_day - start + i as i64;
            if (0..days as i64).contains(&idx) {
                v[idx as usize] = x;
            }
        }
        s.start_day = start;
        s.volumes = v;
    }
}

/// Writes a series as Common Log Format lines, splitting each day's bytes
/// over `lines_per_day` requests. Days with zero volume get one zero-byte
/// line so the day survives a parse.
pub fn render_access_log<W: Write>(series: &DailyLoadSeries, lines_per_day: usize, mut out: W) -> Result<()> {
    let lines_per_day = lines_per_day.max(1) as u64;
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
    for (i, &gb) in series.volumes.iter().enumerate() {
        let date = epoch + chrono::Days::new((series.start_day + i as i64) as u64);
        let stamp = date.format("%d/%b/%Y");
        let total = (gb * BYTES_PER_GB).round() as u64;
        let parts = if total == 0 { 1 } else { lines_per_day.min(total) };
        for k in 0..parts {
            let share = total / parts + u64::from(k < total % parts);
            let (h, m) = ((k * 7) % 24, (k * 13) % 60);
            writeln!(
                out,
                "10.0.0.{} - - [{stamp}:{h:02}:{m:02}:00 +0000] \"GET /obj/{i}/{k} HTTP/1.1\" 200 {share}",
                k % 250 + 1
            )
            .map_err(|e| Error::io(&series.os_id, e))?;
        }
    }
    Ok(())
}

/// Parameters for one synthetic origin server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceProfile {
    pub os_id: String,
    /// Mean GB/day before weekly shape, trend and noise.
    pub base_daily_gb: f64,
    /// Day-of-week multipliers.
    pub weekly_pattern: [f64; 7],
    /// Coefficient of variation of the mean-one lognormal daily noise.
    pub noise_cv: f64,
    /// Expected load spikes per week.
    pub spike_rate: f64,
    /// Multiplier applied on spike days.
    pub spike_magnitude: f64,
    /// Fractional drift per week.
    pub trend: f64,
    pub seed: u64,
}

impl TraceProfile {
    pub fn flat(os_id: &str, base_daily_gb: f64, seed: u64) -> Self {
        TraceProfile {
            os_id: os_id.into(),
            base_daily_gb,
            weekly_pattern: [1.0; 7],
            noise_cv: 0.0,
            spike_rate: 0.0,
            spike_magnitude: 1.0,
            trend: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_daily_gb > 0.0 && self.base_daily_gb.is_finite()) {
            return Err(Error::param("base_daily_gb", format!("must be > 0, got {}", self.base_daily_gb)));
        }
        if self.weekly_pattern.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::param("weekly_pattern", "multipliers must be > 0"));
        }
        if !(self.noise_cv >= 0.0) || !(self.spike_rate >= 0.0) {
            return Err(Error::param("noise_cv", "noise_cv and spike_rate must be >= 0"));
        }
        if !(self.spike_magnitude >= 1.0) {
            return Err(Error::param("spike_magnitude", "must be >= 1"));
        }
        if !(self.trend > -1.0) {
            return Err(Error::param("trend", "must be > -1"));
        }
        Ok(())
    }
}

/// Deterministic per-day generator output, before byte quantisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDay {
    pub baseline_gb: f64,
    pub spike: bool,
}

fn generate_days(profile: &TraceProfile, days: usize) -> Vec<(SyntheticDay, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let noise = (profile.noise_cv > 0.0).then(|| {
        let s2 = (1.0 + profile.noise_cv * profile.noise_cv).ln();
        LogNormal::new(-0.5 * s2, s2.sqrt()).expect("valid lognormal")
    });
    let spikes = (profile.spike_rate > 0.0).then(|| Poisson::new(profile.spike_rate / 7.0).expect("valid poisson"));
    (0..days)
        .map(|d| {
            let week = (d / 7) as f64;
            let baseline =
                profile.base_daily_gb * profile.weekly_pattern[d % 7] * (1.0 + profile.trend * week).max(0.0);
            let eps = noise.as_ref().map_or(1.0, |n| n.sample(&mut rng));
            let spike = spikes.as_ref().is_some_and(|p| p.sample(&mut rng) >= 1.0);
            // One extra draw per day keeps streams aligned across configs.
            let _: u32 = rng.random();
            let v = baseline * eps * if spike { profile.spike_magnitude } else { 1.0 };
            (SyntheticDay { baseline_gb: baseline * eps, spike }, v)
        })
        .collect()
}

/// Seeded synthetic trace. Volumes are rounded to whole bytes.
pub fn synthesize_trace(profile: &TraceProfile, days: usize) -> Result<DailyLoadSeries> {
    profile.validate()?;
    if days == 0 {
        return Err(Error::param("days", "must be >= 1"));
    }
    let volumes = generate_days(profile, days)
        .into_iter()
        .map(|(_, v)| quantize_gb(v))
        .collect();
    DailyLoadSeries::new(profile.os_id.clone(), 0, volumes)
}

/// Like [`synthesize_trace`] but also reports which days carried a spike and
/// the non-spike level of each day.
pub fn synthesize_with_markers(profile: &TraceProfile, days: usize) -> Result<(DailyLoadSeries, Vec<SyntheticDay>)> {
    let series = synthesize_trace(profile, days)?;
    let markers = generate_days(profile, days).into_iter().map(|(m, _)| m).collect();
    Ok((series, markers))
}

fn quantize_gb(gb: f64) -> f64 {
    (gb * BYTES_PER_GB).round() / BYTES_PER_GB
}

/// Mixes a run seed into a profile seed so one `--seed` reshuffles every
/// origin server while keeping them distinct.
pub fn mix_seed(run_seed: u64, profile_seed: u64) -> u64 {
    let mut z = run_seed ^ profile_seed.rotate_left(32) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Synthesizes all profiles; `run_seed` (if any) is mixed into each
/// profile's own seed.
pub fn synthesize_all(profiles: &[TraceProfile], days: usize, run_seed: Option<u64>, exec: Exec) -> Result<Vec<DailyLoadSeries>> {
    let seeded: Vec<TraceProfile> = profiles
        .iter()
        .map(|p| TraceProfile {
            seed: run_seed.map_or(p.seed, |s| mix_seed(s, p.seed)),
            ..p.clone()
        })
        .collect();
    par::map(exec, &seeded, |p| synthesize_trace(p, days))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"127.0.0.1 - frank [10/Oct/2000:13:55:36 -0700] "GET /apache_pb.gif HTTP/1.0" 200 512"#;

    #[test]
    fn single_line() {
        let parsed = parse_access_log("a", LINE.as_bytes()).unwrap();
        assert_eq!(parsed.series.volumes, vec![512.0 / BYTES_PER_GB]);
        assert_eq!(parsed.skipped, 0);
    }

    #[test]
    fn same_day_adds() {
        let text = format!(
            "{}\n{}\n",
            LINE.replace(" 512", " 1024"),
            LINE.replace(" 512", " 1024").replace("13:55", "18:01")
        );
        let parsed = parse_access_log("a", text.as_bytes()).unwrap();
        assert_eq!(parsed.series.volumes, vec![2048.0 / BYTES_PER_GB]);
    }

    #[test]
    fn dash_bytes_skipped() {
        let text = format!("{LINE}\n{}\n", LINE.replace(" 512", " -"));
        let parsed = parse_access_log("a", text.as_bytes()).unwrap();
        assert_eq!(parsed.skipped, 1);
        assert_eq!(parsed.series.volumes, vec![512.0 / BYTES_PER_GB]);
    }

    #[test]
    fn combined_format_and_escaped_quote() {
        let line = r#"1.2.3.4 - - [11/Oct/2000:01:00:00 +0000] "GET /a\"b HTTP/1.1" 200 100 "http://ref/" "Mozilla/5.0""#;
        let parsed = parse_access_log("a", line.as_bytes()).unwrap();
        assert_eq!(parsed.series.volumes, vec![100.0 / BYTES_PER_GB]);
    }

    #[test]
    fn bad_timestamp_skipped() {
        let text = LINE.replace("10/Oct/2000", "99/Foo/2000");
        let parsed = parse_access_log("a", text.as_bytes()).unwrap();
        assert_eq!(parsed.skipped, 1);
        assert!(parsed.series.is_empty());
    }

    #[test]
    fn empty_input() {
        let parsed = parse_access_log("a", "".as_bytes()).unwrap();
        assert!(parsed.series.is_empty());
        assert_eq!(served_total(&parsed.series), 0.0);
    }

    #[test]
    fn gap_days_are_zero() {
        let text = format!("{LINE}\n{}\n", LINE.replace("10/Oct", "13/Oct"));
        let parsed = parse_access_log("a", text.as_bytes()).unwrap();
        assert_eq!(parsed.series.len(), 4);
        assert_eq!(parsed.series.volumes[1], 0.0);
    }

    #[test]
    fn degenerate_generator_is_flat() {
        let s = synthesize_trace(&TraceProfile::flat("x", 10.0, 1), 30).unwrap();
        assert!(s.volumes.iter().all(|&v| v == 10.0));
    }

    #[test]
    fn nonpositive_base_rejected() {
        assert!(synthesize_trace(&TraceProfile::flat("x", 0.0, 1), 3).is_err());
    }

    #[test]
    fn served_total_sums() {
        let s = DailyLoadSeries::new("x", 0, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(served_total(&s), 6.0);
    }

    #[test]
    fn gzip_logs_are_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("site.log.gz");
        let mut gz = flate2::write::GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::default());
        writeln!(gz, "{LINE}").unwrap();
        gz.finish().unwrap();
        let parsed = read_log_file(&path).unwrap();
        assert_eq!(parsed.series.os_id, "site");
        assert_eq!(parsed.series.volumes, vec![512.0 / BYTES_PER_GB]);
    }

    #[test]
    fn align_pads_and_rebases() {
        let mut v = vec![
            DailyLoadSeries::new("a", 5, vec![1.0, 2.0]).unwrap(),
            DailyLoadSeries::new("b", 6, vec![3.0]).unwrap(),
        ];
        align_series(&mut v, 3);
        assert_eq!(v[0].volumes, vec![1.0, 2.0, 0.0]);
        assert_eq!(v[1].volumes, vec![0.0, 3.0, 0.0]);
        assert!(v.iter().all(|s| s.start_day == 5));
    }
}
