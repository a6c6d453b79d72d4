//! Order-book ingestion, session windowing, same-timestamp deduplication,
//! spread and imbalance covariates, and the canonical CSV formats.
//!
//! Each input row is an event together with the book just after it, so the
//! covariates jump at event times and an event sees the book left by its
//! predecessor. Timestamps are integer milliseconds (since midnight for the
//! clock-time window helpers).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Event, EventStream, StateTrajectory};

pub const LOB_HEADER: [&str; 6] = ["timestamp_ms", "event_type", "bid_price", "ask_price", "bid_size", "ask_size"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobSnapshotRow {
    pub timestamp_ms: i64,
    /// 1-based, as in the file.
    pub event_type: usize,
    pub bid_price: f64,
    pub ask_price: f64,
    pub bid_size: u64,
    pub ask_size: u64,
}

impl LobSnapshotRow {
    pub fn spread(&self) -> f64 {
        self.ask_price - self.bid_price
    }

    /// Spread in whole ticks.
    pub fn spread_ticks(&self, tick_size: f64) -> u64 {
        (self.spread() / tick_size).round().max(1.0) as u64
    }

    /// `(q^B - q^A) / (q^B + q^A)`.
    pub fn imbalance(&self) -> f64 {
        let b = self.bid_size as f64;
        let a = self.ask_size as f64;
        (b - a) / (b + a)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.event_type == 0 {
            return Err("event_type is 1-based, got 0".into());
        }
        if !(self.bid_price.is_finite() && self.ask_price.is_finite()) {
            return Err("non-finite price".into());
        }
        if self.ask_price <= self.bid_price {
            return Err(format!(
                "crossed or locked book: ask {} <= bid {}",
                self.ask_price, self.bid_price
            ));
        }
        if self.bid_size == 0 || self.ask_size == 0 {
            return Err("queue sizes must be positive".into());
        }
        Ok(())
    }
}

pub fn ms_to_secs(ms: i64) -> f64 {
    ms as f64 / 1000.0
}

pub fn secs_to_ms(s: f64) -> i64 {
    (s * 1000.0).round() as i64
}

/// `"HH:MM"`, `"HH:MM:SS"` or `"HH:MM:SS.mmm"` to milliseconds since midnight.
pub fn parse_clock(s: &str) -> Result<i64> {
    let bad = || Error::InvalidOption(format!("clock time {s:?}, expected HH:MM[:SS[.mmm]]"));
    let parts: Vec<&str> = s.trim().split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let h: i64 = parts[0].parse().map_err(|_| bad())?;
    let m: i64 = parts[1].parse().map_err(|_| bad())?;
    let sec_ms = match parts.get(2) {
        None => 0,
        Some(p) => {
            let (sec, frac) = p.split_once('.').unwrap_or((p, ""));
            let sec: i64 = sec.parse().map_err(|_| bad())?;
            if frac.len() > 3 || !frac.chars().all(|c| c.is_ascii_digit()) || sec >= 60 {
                return Err(bad());
            }
            let ms: i64 = if frac.is_empty() { 0 } else { format!("{frac:0<3}").parse().map_err(|_| bad())? };
            sec * 1000 + ms
        }
    };
    if !(0..24).contains(&h) || !(0..60).contains(&m) {
        return Err(bad());
    }
    Ok((h * 3600 + m * 60) * 1000 + sec_ms)
}

/// Read an order-book event file with the exact header [`LOB_HEADER`].
pub fn load_events(path: impl AsRef<Path>) -> Result<Vec<LobSnapshotRow>> {
    read_lob_csv(File::open(path)?)
}

pub fn read_lob_csv<R: Read>(input: R) -> Result<Vec<LobSnapshotRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(LOB_HEADER) {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!("header must be {:?}", LOB_HEADER.join(",")),
        });
    }
    let mut rows: Vec<LobSnapshotRow> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::MalformedRow { line, message: e.to_string() })?;
        let field = |k: usize| rec.get(k).map(str::trim).unwrap_or("");
        let fail = |k: usize| Error::MalformedRow {
            line,
            message: format!("bad {} {:?}", LOB_HEADER[k], field(k)),
        };
        let row = LobSnapshotRow {
            timestamp_ms: field(0).parse().map_err(|_| fail(0))?,
            event_type: field(1).parse().map_err(|_| fail(1))?,
            bid_price: field(2).parse().map_err(|_| fail(2))?,
            ask_price: field(3).parse().map_err(|_| fail(3))?,
            bid_size: field(4).parse().map_err(|_| fail(4))?,
            ask_size: field(5).parse().map_err(|_| fail(5))?,
        };
        row.check().map_err(|message| Error::MalformedRow { line, message })?;
        if let Some(prev) = rows.last() {
            if row.timestamp_ms < prev.timestamp_ms {
                return Err(Error::MalformedRow {
                    line,
                    message: format!("timestamp {} precedes {}", row.timestamp_ms, prev.timestamp_ms),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_lob_csv<W: Write>(rows: &[LobSnapshotRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOB_HEADER)?;
    for r in rows {
        w.write_record([
            r.timestamp_ms.to_string(),
            r.event_type.to_string(),
            r.bid_price.to_string(),
            r.ask_price.to_string(),
            r.bid_size.to_string(),
            r.ask_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of one trading window `[start_ms, end_ms)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub start_ms: i64,
    pub end_ms: i64,
    pub rows: Vec<LobSnapshotRow>,
    /// Last row before the window, giving the book at its opening.
    pub prior: Option<LobSnapshotRow>,
}

impl Session {
    pub fn horizon(&self) -> f64 {
        ms_to_secs(self.end_ms - self.start_ms)
    }

    pub fn time_of(&self, row: &LobSnapshotRow) -> f64 {
        ms_to_secs(row.timestamp_ms - self.start_ms)
    }

    /// The book in force at the window start: the last row at or before
    /// it, else the first row of the window.
    pub fn opening_book(&self) -> Option<&LobSnapshotRow> {
        self.rows
            .iter()
            .take_while(|r| r.timestamp_ms == self.start_ms)
            .last()
            .or(self.prior.as_ref())
            .or(self.rows.first())
    }

    /// Events on `(0, T)`. Rows stamped exactly at the window start only
    /// set the opening book; the count of those dropped is returned.
    pub fn event_stream(&self) -> Result<(EventStream, usize)> {
        let mut dropped = 0;
        let mut evs = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            if r.timestamp_ms == self.start_ms {
                dropped += 1;
                continue;
            }
            evs.push(Event {
                time: self.time_of(r),
                kind: r.event_type - 1,
            });
        }
        Ok((EventStream::new(self.horizon(), evs)?, dropped))
    }
}

/// Keep rows with timestamps in `[start_ms, end_ms)`; times re-base to the
/// window start and the horizon is the window length. Rows must be sorted.
pub fn window_session(rows: &[LobSnapshotRow], start_ms: i64, end_ms: i64) -> Result<Session> {
    if start_ms >= end_ms {
        return Err(Error::InvalidOption(format!("window start {start_ms} ms is not before end {end_ms} ms")));
    }
    let lo = rows.partition_point(|r| r.timestamp_ms < start_ms);
    let hi = rows.partition_point(|r| r.timestamp_ms < end_ms);
    if lo == hi {
        log::warn!("no rows in window [{start_ms}, {end_ms}) ms");
    }
    Ok(Session {
        start_ms,
        end_ms,
        rows: rows[lo..hi].to_vec(),
        prior: lo.checked_sub(1).map(|i| rows[i]),
    })
}

/// Among rows sharing a timestamp keep only the last one. Rows must be
/// sorted by time.
pub fn dedup_same_timestamp(rows: &[LobSnapshotRow]) -> Vec<LobSnapshotRow> {
    let mut out: Vec<LobSnapshotRow> = Vec::with_capacity(rows.len());
    for r in rows {
        match out.last_mut() {
            Some(last) if last.timestamp_ms == r.timestamp_ms => *last = *r,
            _ => out.push(*r),
        }
    }
    out
}

/// The same rule on an event stream.
pub fn dedup_events(events: &EventStream) -> EventStream {
    let mut out: Vec<Event> = Vec::with_capacity(events.len());
    for ev in events.events() {
        match out.last_mut() {
            Some(last) if last.time == ev.time => *last = *ev,
            _ => out.push(*ev),
        }
    }
    EventStream::new(events.horizon(), out).expect("subsequence of a valid stream")
}

/// Occupation-time distribution of the spread in ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadDistribution {
    /// `(spread in ticks, mass)` sorted by spread, masses positive.
    pub mass: Vec<(u64, f64)>,
    /// Smallest spread with cumulative mass `>= 0.5`.
    pub median: u64,
    pub min_p: f64,
    pub max_p: f64,
}

impl SpreadDistribution {
    pub fn p(&self, ticks: u64) -> f64 {
        self.mass
            .binary_search_by_key(&ticks, |(s, _)| *s)
            .map_or(0.0, |i| self.mass[i].1)
    }
}

/// Spread path of a session: `(start, end, ticks)` segments in seconds.
fn spread_segments(session: &Session, tick_size: f64) -> Vec<(f64, f64, u64)> {
    let Some(open) = session.opening_book() else {
        return Vec::new();
    };
    let t_end = session.horizon();
    let mut segs = Vec::with_capacity(session.rows.len() + 1);
    let mut t = 0.0;
    let mut s = open.spread_ticks(tick_size);
    for r in session.rows.iter().filter(|r| r.timestamp_ms > session.start_ms) {
        let tr = session.time_of(r);
        segs.push((t, tr, s));
        t = tr;
        s = r.spread_ticks(tick_size);
    }
    segs.push((t, t_end, s));
    segs
}

/// Time-weighted spread distribution pooled over sessions.
pub fn spread_distribution(sessions: &[Session], tick_size: f64) -> Result<SpreadDistribution> {
    check_tick(tick_size)?;
    let mut occ: BTreeMap<u64, f64> = BTreeMap::new();
    for s in sessions {
        for (a, b, ticks) in spread_segments(s, tick_size) {
            if b > a {
                *occ.entry(ticks).or_default() += b - a;
            }
        }
    }
    let total: f64 = occ.values().sum();
    if !(total > 0.0) {
        return Err(Error::EmptySample);
    }
    let mass: Vec<(u64, f64)> = occ.into_iter().map(|(s, o)| (s, o / total)).collect();
    let mut cum = 0.0;
    let mut median = mass[mass.len() - 1].0;
    for (s, p) in &mass {
        cum += p;
        if cum >= 0.5 {
            median = *s;
            break;
        }
    }
    let min_p = mass.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let max_p = mass.iter().map(|m| m.1).fold(0.0, f64::max);
    Ok(SpreadDistribution {
        mass,
        median,
        min_p,
        max_p,
    })
}

fn check_tick(tick_size: f64) -> Result<()> {
    if !(tick_size > 0.0 && tick_size.is_finite()) {
        return Err(Error::InvalidOption(format!("tick size must be positive, got {tick_size}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Covariate {
    /// Queue imbalance.
    I,
    /// -1 at or below the median spread, +1 above.
    S1,
    /// -1 at one tick, +1 otherwise.
    S2,
    /// Affine map of the spread's probability mass onto [-1, 1].
    S3,
}

impl std::str::FromStr for Covariate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" => Ok(Self::I),
            "S1" => Ok(Self::S1),
            "S2" => Ok(Self::S2),
            "S3" => Ok(Self::S3),
            other => Err(Error::InvalidOption(format!("unknown covariate {other:?}, expected I, S1, S2 or S3"))),
        }
    }
}

/// Parse `"I,S2"` style lists; `""` and `"none"` give no covariates.
pub fn parse_covariates(s: &str) -> Result<Vec<Covariate>> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    s.split([',', '-']).map(str::parse).collect()
}

/// Which formula defines S3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum S3Mode {
    /// `2 (p(s) - min p) / (max p - min p) - 1`, covering [-1, 1].
    #[default]
    Prose,
    /// `(s - min p) / (max p - min p)` taken literally, then clamped.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateOptions {
    pub tick_size: f64,
    pub s3_mode: S3Mode,
}

/// Covariate path of a session, one column per entry of `spec` in order.
/// Also returns warnings (spreads outside the distribution's support).
pub fn build_covariates(
    session: &Session,
    spec: &[Covariate],
    dist: Option<&SpreadDistribution>,
    options: &CovariateOptions,
) -> Result<(StateTrajectory, Vec<String>)> {
    let horizon = session.horizon();
    if spec.is_empty() {
        return Ok((StateTrajectory::trivial(horizon)?, Vec::new()));
    }
    if spec.iter().any(|c| matches!(c, Covariate::S2 | Covariate::S3 | Covariate::S1)) {
        check_tick(options.tick_size)?;
    }
    let needs_dist = spec.iter().any(|c| matches!(c, Covariate::S1 | Covariate::S3));
    if needs_dist && dist.is_none() {
        return Err(Error::InvalidOption("S1 and S3 need a spread distribution".into()));
    }
    let Some(open) = session.opening_book() else {
        return Err(Error::EmptySample);
    };
    let mut unsupported: BTreeMap<u64, usize> = BTreeMap::new();
    let mut value = |r: &LobSnapshotRow| -> Vec<f64> {
        spec.iter()
            .map(|c| {
                let v = match c {
                    Covariate::I => r.imbalance(),
                    Covariate::S1 => {
                        if r.spread_ticks(options.tick_size) <= dist.unwrap().median {
                            -1.0
                        } else {
                            1.0
                        }
                    }
                    Covariate::S2 => {
                        if r.spread_ticks(options.tick_size) == 1 {
                            -1.0
                        } else {
                            1.0
                        }
                    }
                    Covariate::S3 => {
                        let d = dist.unwrap();
                        let s = r.spread_ticks(options.tick_size);
                        let p = d.p(s);
                        if p == 0.0 {
                            *unsupported.entry(s).or_default() += 1;
                        }
                        let range = d.max_p - d.min_p;
                        match options.s3_mode {
                            S3Mode::Prose if range > 0.0 => 2.0 * (p - d.min_p) / range - 1.0,
                            S3Mode::Literal if range > 0.0 => (s as f64 - d.min_p) / range,
                            // a point mass gives a constant covariate
                            _ => 0.0,
                        }
                    }
                };
                v.clamp(-1.0, 1.0)
            })
            .collect()
    };
    let mut breakpoints = vec![0.0];
    let mut values = vec![value(open)];
    for r in session.rows.iter().filter(|r| r.timestamp_ms > session.start_ms) {
        let t = session.time_of(r);
        let v = value(r);
        if *breakpoints.last().unwrap() == t {
            // several rows in the same millisecond: the last book wins
            *values.last_mut().unwrap() = v;
            if values.len() >= 2 && values[values.len() - 2] == values[values.len() - 1] {
                values.pop();
                breakpoints.pop();
            }
        } else if v != *values.last().unwrap() {
            breakpoints.push(t);
            values.push(v);
        }
    }
    breakpoints.push(horizon);
    let warnings = unsupported
        .into_iter()
        .map(|(s, n)| format!("spread {s} ticks outside the distribution support ({n} rows), mapped with p = 0"))
        .collect();
    Ok((StateTrajectory::new(breakpoints, values, spec.len())?, warnings))
}

/// Canonical event file: `time_s,type` with 1-based types.
pub fn write_events_csv<W: Write>(events: &EventStream, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_s", "type"])?;
    for ev in events.events() {
        w.write_record([ev.time.to_string(), (ev.kind + 1).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// The event file carries no horizon, so it is passed in.
pub fn read_events_csv<R: Read>(input: R, horizon: f64) -> Result<EventStream> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(["time_s", "type"]) {
        return Err(Error::MalformedRow {
            line: 1,
            message: "header must be \"time_s,type\"".into(),
        });
    }
    let mut evs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::MalformedRow { line, message: e.to_string() })?;
        let time: f64 = rec[0].trim().parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("bad time {:?}", &rec[0]),
        })?;
        let kind: usize = rec[1].trim().parse().ok().filter(|k| *k >= 1).ok_or_else(|| Error::MalformedRow {
            line,
            message: format!("bad type {:?}, types are 1-based", &rec[1]),
        })?;
        evs.push(Event { time, kind: kind - 1 });
    }
    EventStream::new(horizon, evs)
}

/// Canonical state file: `tau_s,x_1..x_dx`, one row per breakpoint. The
/// final row is the horizon and repeats the last value.
pub fn write_state_csv<W: Write>(state: &StateTrajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dx = state.n_covariates();
    let mut header = vec!["tau_s".to_string()];
    header.extend((1..=dx).map(|c| format!("x_{c}")));
    w.write_record(&header)?;
    let bps = state.breakpoints();
    for (j, tau) in bps.iter().enumerate() {
        let v = state.value(j.min(state.n_segments() - 1));
        let mut row = vec![tau.to_string()];
        row.extend(v.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_state_csv<R: Read>(input: R) -> Result<StateTrajectory> {
    let (times, values, dx) = read_timed_rows(input, "tau_s")?;
    if times.len() < 2 {
        return Err(Error::InvalidState("need rows for 0 and the horizon".into()));
    }
    let n = values.len() - 1;
    StateTrajectory::new(times, values.into_iter().take(n).collect(), dx)
}

/// Pre-built covariates in milliseconds (`timestamp_ms,x_1..`), restricted
/// to a session window like [`window_session`].
pub fn read_state_ms_csv<R: Read>(input: R, start_ms: i64, end_ms: i64) -> Result<StateTrajectory> {
    let (times, values, dx) = read_timed_rows(input, "timestamp_ms")?;
    if start_ms >= end_ms {
        return Err(Error::InvalidOption("window start is not before its end".into()));
    }
    let ms: Vec<i64> = times.iter().map(|t| *t as i64).collect();
    let lo = ms.partition_point(|t| *t <= start_ms);
    let hi = ms.partition_point(|t| *t < end_ms);
    let initial = match lo {
        0 => values.first().ok_or(Error::EmptySample)?.clone(),
        i => values[i - 1].clone(),
    };
    let mut bps = vec![0.0];
    let mut vals = vec![initial];
    for i in lo..hi {
        let t = ms_to_secs(ms[i] - start_ms);
        if *bps.last().unwrap() == t {
            *vals.last_mut().unwrap() = values[i].clone();
        } else {
            bps.push(t);
            vals.push(values[i].clone());
        }
    }
    bps.push(ms_to_secs(end_ms - start_ms));
    StateTrajectory::new(bps, vals, dx)
}

fn read_timed_rows<R: Read>(input: R, time_col: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let dx = header.len().saturating_sub(1);
    let ok = header.get(0).map(str::trim) == Some(time_col)
        && header.iter().skip(1).enumerate().all(|(c, h)| h.trim() == format!("x_{}", c + 1));
    if !ok {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!("header must be \"{time_col},x_1,...,x_dx\""),
        });
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::MalformedRow { line, message: e.to_string() })?;
        let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
        let nums = nums.map_err(|e| Error::MalformedRow { line, message: e.to_string() })?;
        times.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    Ok((times, values, dx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(ms: i64, kind: usize, bid: f64, ask: f64, qb: u64, qa: u64) -> LobSnapshotRow {
        LobSnapshotRow {
            timestamp_ms: ms,
            event_type: kind,
            bid_price: bid,
            ask_price: ask,
            bid_size: qb,
            ask_size: qa,
        }
    }

    #[test]
    fn load_and_reject() {
        let good = "timestamp_ms,event_type,bid_price,ask_price,bid_size,ask_size\n\
                    36000001,1,10.00,10.01,300,100\n36000002,2,10.00,10.02,100,100\n36000005,1,9.99,10.02,5,7\n";
        let rows = read_lob_csv(good.as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].imbalance(), 0.5);
        assert_eq!(rows[1].imbalance(), 0.0);
        let crossed = "timestamp_ms,event_type,bid_price,ask_price,bid_size,ask_size\n\
                       1,1,10.00,10.01,1,1\n2,1,10.01,10.01,1,1\n";
        match read_lob_csv(crossed.as_bytes()) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let malformed = "timestamp_ms,event_type,bid_price,ask_price,bid_size,ask_size\n1,x,1,2,1,1\n";
        assert!(matches!(read_lob_csv(malformed.as_bytes()), Err(Error::MalformedRow { line: 2, .. })));
        assert!(read_lob_csv("time,type\n".as_bytes()).is_err());
    }

    #[test]
    fn ms_round_trip() {
        for ms in [0i64, 1, 999, 36_000_123, 50_399_999] {
            assert_eq!(secs_to_ms(ms_to_secs(ms)), ms);
        }
    }

    #[test]
    fn clock_window() {
        let start = parse_clock("10:00").unwrap();
        let end = parse_clock("14:00:00.000").unwrap();
        let rows = vec![
            row(start - 5, 1, 1.0, 1.01, 1, 1),
            row(start + 10, 2, 1.0, 1.01, 1, 1),
            row(end, 1, 1.0, 1.01, 1, 1),
        ];
        let s = window_session(&rows, start, end).unwrap();
        assert_eq!(s.horizon(), 14400.0);
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.prior, Some(rows[0]));
        let empty = window_session(&rows[..1], start, end).unwrap();
        assert!(empty.event_stream().unwrap().0.is_empty());
        assert!(parse_clock("25:00").is_err());
    }

    #[test]
    fn dedup_last_wins() {
        let rows = vec![row(1, 1, 1.0, 2.0, 1, 1), row(1, 2, 1.0, 2.0, 1, 1), row(2, 3, 1.0, 2.0, 1, 1)];
        let d = dedup_same_timestamp(&rows);
        assert_eq!(d.iter().map(|r| (r.timestamp_ms, r.event_type)).collect::<Vec<_>>(), vec![(1, 2), (2, 3)]);
        let run: Vec<_> = (1..=10).map(|k| row(5, k, 1.0, 2.0, 1, 1)).collect();
        let d = dedup_same_timestamp(&run);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].event_type, 10);
    }

    #[test]
    fn spread_masses_and_s_covariates() {
        // spread 1 tick on [0, 5), 3 ticks on [5, 10)
        let rows = vec![row(0, 1, 1.0, 1.01, 3, 1), row(5000, 2, 1.0, 1.03, 1, 1)];
        let s = window_session(&rows, 0, 10_000).unwrap();
        let d = spread_distribution(std::slice::from_ref(&s), 0.01).unwrap();
        assert_eq!(d.mass, vec![(1, 0.5), (3, 0.5)]);
        assert_eq!(d.median, 1);
        let opts = CovariateOptions {
            tick_size: 0.01,
            s3_mode: S3Mode::Prose,
        };
        let (st, w) = build_covariates(&s, &[Covariate::I, Covariate::S1, Covariate::S2], Some(&d), &opts).unwrap();
        assert!(w.is_empty());
        assert_eq!(st.breakpoints(), &[0.0, 5.0, 10.0]);
        assert_eq!(st.value(0), &[0.5, -1.0, -1.0]);
        assert_eq!(st.value(1), &[0.0, 1.0, 1.0]);
        let (ev, dropped) = s.event_stream().unwrap();
        assert_eq!((ev.len(), dropped), (1, 1));
        assert_eq!(st.value_before(5.0), &[0.5, -1.0, -1.0]);
    }

    #[test]
    fn s3_readings() {
        let rows = vec![row(0, 1, 1.0, 1.01, 1, 1), row(7500, 1, 1.0, 1.02, 1, 1), row(9000, 1, 1.0, 1.05, 1, 1)];
        let s = window_session(&rows, 0, 10_000).unwrap();
        let d = spread_distribution(std::slice::from_ref(&s), 0.01).unwrap();
        let mut opts = CovariateOptions {
            tick_size: 0.01,
            s3_mode: S3Mode::Prose,
        };
        let (st, _) = build_covariates(&s, &[Covariate::S3], Some(&d), &opts).unwrap();
        let v: Vec<f64> = (0..st.n_segments()).map(|j| st.value(j)[0]).collect();
        assert_eq!(v[0], 1.0);
        assert!((v[1] - (2.0 * (0.15 - 0.1) / 0.65 - 1.0)).abs() < 1e-12);
        assert_eq!(v[2], -1.0);
        opts.s3_mode = S3Mode::Literal;
        let (st, _) = build_covariates(&s, &[Covariate::S3], Some(&d), &opts).unwrap();
        assert!((0..st.n_segments()).all(|j| (-1.0..=1.0).contains(&st.value(j)[0])));
        // a spread the distribution never saw is flagged
        let other = window_session(&[row(0, 1, 1.0, 1.09, 1, 1)], 0, 1000).unwrap();
        let (_, w) = build_covariates(&other, &[Covariate::S3], Some(&d), &opts).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn canonical_csv_round_trip() {
        let ev = EventStream::new(
            3.5,
            vec![Event { time: 0.1, kind: 0 }, Event { time: 1.0 / 3.0, kind: 1 }, Event { time: 3.5, kind: 0 }],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_events_csv(&ev, &mut buf).unwrap();
        assert!(buf.starts_with(b"time_s,type\n"));
        assert_eq!(read_events_csv(buf.as_slice(), 3.5).unwrap(), ev);
        let st = StateTrajectory::new(vec![0.0, 0.7, 3.5], vec![vec![0.25, -1.0], vec![1.0 / 7.0, 1.0]], 2).unwrap();
        let mut buf = Vec::new();
        write_state_csv(&st, &mut buf).unwrap();
        assert_eq!(read_state_csv(buf.as_slice()).unwrap(), st);
        let trivial = StateTrajectory::trivial(2.0).unwrap();
        let mut buf = Vec::new();
        write_state_csv(&trivial, &mut buf).unwrap();
        assert_eq!(read_state_csv(buf.as_slice()).unwrap(), trivial);
    }

    #[test]
    fn state_in_milliseconds() {
        let csv = "timestamp_ms,x_1\n900,0.5\n1500,-0.5\n1500,0.25\n2500,1\n";
        let st = read_state_ms_csv(csv.as_bytes(), 1000, 2000).unwrap();
        assert_eq!(st.breakpoints(), &[0.0, 0.5, 1.0]);
        assert_eq!(st.value(0), &[0.5]);
        assert_eq!(st.value(1), &[0.25]);
    }
}
