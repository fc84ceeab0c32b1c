//! Event-log parsing, monthly windowing, and per-harvester aggregates.
//!
//! Logs arrive as CSV or JSONL streams of spam-email events. Analysis is
//! always scoped to one calendar month: [`window_by_month`] filters a
//! parsed log down to a single month and assigns dense row/column indices
//! to the harvesters and spam servers seen there.

use chrono::{DateTime, Datelike, SubsecRound, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::net::Ipv4Addr;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read event log: {0}")]
    Io(#[from] std::io::Error),
    #[error(
        "{malformed} of {total} lines malformed (>10%); first offenders: {}",
        format_offenders(sample)
    )]
    Format {
        malformed: usize,
        total: usize,
        sample: Vec<MalformedLine>,
    },
    #[error("no events in month {month}")]
    EmptyWindow { month: YearMonth },
    #[error("month {month} has no positive address count")]
    MissingAddressCount { month: YearMonth },
    #[error("invalid month {0:?}; expected YYYY-MM")]
    InvalidMonth(String),
}

fn format_offenders(sample: &[MalformedLine]) -> String {
    sample
        .iter()
        .map(|m| format!("line {}: {}", m.line, m.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

/// One received spam email.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmailEvent {
    pub timestamp: DateTime<Utc>,
    pub harvester_ip: Ipv4Addr,
    pub server_ip: Ipv4Addr,
    pub subject: String,
    /// Number of new trap addresses attributed to the harvester by this
    /// event; 0 when the log does not carry the count.
    #[serde(default)]
    pub addresses_acquired_delta: u64,
}

/// A line that failed to parse, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct MalformedLine {
    pub line: u64,
    pub reason: String,
}

/// Parse result: events in file order plus the lines that were rejected.
#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    pub events: Vec<EmailEvent>,
    pub malformed: Vec<MalformedLine>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    Csv,
    Jsonl,
}

impl FromStr for LogFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown log format {other:?}; expected csv or jsonl")),
        }
    }
}

/// A calendar month in UTC, e.g. `2006-10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self, IngestError> {
        if !(1..=12).contains(&month) {
            return Err(IngestError::InvalidMonth(format!("{year}-{month}")));
        }
        Ok(Self { year, month })
    }

    pub fn of(ts: &DateTime<Utc>) -> Self {
        Self {
            year: ts.year(),
            month: ts.month(),
        }
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month
    }

    /// First instant of the month.
    pub fn start(&self) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(self.year, self.month, 1, 0, 0, 0)
            .single()
            .expect("validated month")
    }

    /// First instant of the following month.
    pub fn end_exclusive(&self) -> DateTime<Utc> {
        let (y, m) = if self.month == 12 {
            (self.year + 1, 1)
        } else {
            (self.year, self.month + 1)
        };
        Utc.with_ymd_and_hms(y, m, 1, 0, 0, 0)
            .single()
            .expect("validated month")
    }

    pub fn days(&self) -> u32 {
        (self.end_exclusive() - self.start()).num_days() as u32
    }

    pub fn hours(&self) -> u32 {
        self.days() * 24
    }

    pub fn contains(&self, ts: &DateTime<Utc>) -> bool {
        *ts >= self.start() && *ts < self.end_exclusive()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IngestError::InvalidMonth(s.to_string());
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        Self::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One month of events with dense harvester/server index maps and the
/// per-harvester address counts `e_i >= 1` used for normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWindow {
    month: YearMonth,
    events: Vec<EmailEvent>,
    harvesters: Vec<Ipv4Addr>,
    harvester_index: HashMap<Ipv4Addr, usize>,
    servers: Vec<Ipv4Addr>,
    server_index: HashMap<Ipv4Addr, usize>,
    addresses_acquired: Vec<u64>,
}

impl EventWindow {
    pub fn month(&self) -> YearMonth {
        self.month
    }

    pub fn events(&self) -> &[EmailEvent] {
        &self.events
    }

    /// Number of harvesters M.
    pub fn harvester_count(&self) -> usize {
        self.harvesters.len()
    }

    /// Number of spam servers N.
    pub fn server_count(&self) -> usize {
        self.servers.len()
    }

    pub fn harvester_ips(&self) -> &[Ipv4Addr] {
        &self.harvesters
    }

    pub fn server_ips(&self) -> &[Ipv4Addr] {
        &self.servers
    }

    pub fn harvester_index(&self, ip: Ipv4Addr) -> Option<usize> {
        self.harvester_index.get(&ip).copied()
    }

    pub fn server_index(&self, ip: Ipv4Addr) -> Option<usize> {
        self.server_index.get(&ip).copied()
    }

    /// Address count `e_i` for harvester row `i`.
    pub fn addresses_acquired(&self, i: usize) -> u64 {
        self.addresses_acquired[i]
    }

    /// Events annotated with `(harvester_row, server_col)`.
    pub fn indexed_events(&self) -> impl Iterator<Item = (usize, usize, &EmailEvent)> + '_ {
        self.events.iter().map(|ev| {
            (
                self.harvester_index[&ev.harvester_ip],
                self.server_index[&ev.server_ip],
                ev,
            )
        })
    }
}

fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(raw)
        .map(|t| t.with_timezone(&Utc).trunc_subsecs(0))
        .map_err(|e| format!("bad timestamp {raw:?}: {e}"))
}

fn parse_ipv4(raw: &str, field: &str) -> Result<Ipv4Addr, String> {
    raw.parse()
        .map_err(|_| format!("bad {field} {raw:?}: not an IPv4 dotted quad"))
}

fn event_from_fields(
    timestamp: &str,
    harvester: &str,
    server: &str,
    subject: &str,
    delta: Option<&str>,
) -> Result<EmailEvent, String> {
    let delta = match delta {
        None | Some("") => 0,
        Some(raw) => raw
            .parse()
            .map_err(|_| format!("bad addresses_acquired_delta {raw:?}"))?,
    };
    Ok(EmailEvent {
        timestamp: parse_timestamp(timestamp)?,
        harvester_ip: parse_ipv4(harvester, "harvester_ip")?,
        server_ip: parse_ipv4(server, "server_ip")?,
        subject: subject.to_string(),
        addresses_acquired_delta: delta,
    })
}

/// Parses an event log. Events come back in file order; malformed lines
/// are collected with their line numbers. If more than 10% of data lines
/// are malformed the whole parse fails, listing the first ten offenders.
pub fn parse_event_log<R: Read>(reader: R, format: LogFormat) -> Result<ParsedLog, IngestError> {
    let mut out = ParsedLog::default();
    let mut total = 0usize;

    match format {
        LogFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .flexible(true)
                .from_reader(reader);
            let headers = rdr.headers().map_err(csv_to_ingest)?.clone();
            let col = |name: &str| headers.iter().position(|h| h == name);
            let (c_ts, c_h, c_s, c_subj) = match (
                col("timestamp"),
                col("harvester_ip"),
                col("server_ip"),
                col("subject"),
            ) {
                (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
                _ => {
                    return Err(IngestError::Format {
                        malformed: 0,
                        total: 0,
                        sample: vec![MalformedLine {
                            line: 1,
                            reason: format!(
                                "missing required header columns in {:?}",
                                headers.iter().collect::<Vec<_>>()
                            ),
                        }],
                    })
                }
            };
            let c_delta = col("addresses_acquired_delta");

            let mut record = csv::StringRecord::new();
            loop {
                let line = rdr.position().line();
                match rdr.read_record(&mut record) {
                    Ok(false) => break,
                    Ok(true) => {
                        total += 1;
                        let field = |i: usize| record.get(i).unwrap_or("");
                        match event_from_fields(
                            field(c_ts),
                            field(c_h),
                            field(c_s),
                            field(c_subj),
                            c_delta.map(|i| record.get(i).unwrap_or("")),
                        ) {
                            Ok(ev) => out.events.push(ev),
                            Err(reason) => out.malformed.push(MalformedLine { line, reason }),
                        }
                    }
                    Err(e) => {
                        if e.is_io_error() {
                            return Err(csv_to_ingest(e));
                        }
                        total += 1;
                        out.malformed.push(MalformedLine {
                            line,
                            reason: e.to_string(),
                        });
                    }
                }
            }
        }
        LogFormat::Jsonl => {
            for (idx, line) in BufReader::new(reader).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                total += 1;
                match serde_json::from_str::<EmailEvent>(&line) {
                    Ok(mut ev) => {
                        ev.timestamp = ev.timestamp.trunc_subsecs(0);
                        out.events.push(ev);
                    }
                    Err(e) => out.malformed.push(MalformedLine {
                        line: idx as u64 + 1,
                        reason: e.to_string(),
                    }),
                }
            }
        }
    }

    if out.malformed.len() * 10 > total {
        let malformed = out.malformed.len();
        let mut sample = out.malformed;
        sample.truncate(10);
        return Err(IngestError::Format {
            malformed,
            total,
            sample,
        });
    }
    Ok(out)
}

fn csv_to_ingest(e: csv::Error) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        other => IngestError::Format {
            malformed: 1,
            total: 1,
            sample: vec![MalformedLine {
                line: 1,
                reason: format!("{other:?}"),
            }],
        },
    }
}

/// Retains the events of one calendar month and indexes harvesters and
/// servers in first-appearance order. The per-harvester address count is
/// the sum of `addresses_acquired_delta` over the month, falling back to
/// 1 when the log carries no counts for that harvester.
pub fn window_by_month(events: &[EmailEvent], month: YearMonth) -> Result<EventWindow, IngestError> {
    let mut window = EventWindow {
        month,
        events: Vec::new(),
        harvesters: Vec::new(),
        harvester_index: HashMap::new(),
        servers: Vec::new(),
        server_index: HashMap::new(),
        addresses_acquired: Vec::new(),
    };
    let mut delta_sums: Vec<u64> = Vec::new();

    for ev in events {
        if !month.contains(&ev.timestamp) {
            continue;
        }
        let h = *window
            .harvester_index
            .entry(ev.harvester_ip)
            .or_insert_with(|| {
                window.harvesters.push(ev.harvester_ip);
                delta_sums.push(0);
                window.harvesters.len() - 1
            });
        delta_sums[h] += ev.addresses_acquired_delta;
        window
            .server_index
            .entry(ev.server_ip)
            .or_insert_with(|| {
                window.servers.push(ev.server_ip);
                window.servers.len() - 1
            });
        window.events.push(ev.clone());
    }

    if window.events.is_empty() {
        return Err(IngestError::EmptyWindow { month });
    }
    window.addresses_acquired = delta_sums.into_iter().map(|d| d.max(1)).collect();
    Ok(window)
}

/// One row of the monthly volume report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeRow {
    pub month: YearMonth,
    pub emails: u64,
    pub addresses: u64,
    pub ratio: f64,
}

/// Emails received per address collected, by month.
pub fn monthly_volume_report(
    events: &[EmailEvent],
    addresses_by_month: &BTreeMap<YearMonth, u64>,
) -> Result<Vec<VolumeRow>, IngestError> {
    let mut counts: BTreeMap<YearMonth, u64> = BTreeMap::new();
    for ev in events {
        *counts.entry(YearMonth::of(&ev.timestamp)).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(month, emails)| {
            let addresses = *addresses_by_month
                .get(&month)
                .filter(|&&a| a > 0)
                .ok_or(IngestError::MissingAddressCount { month })?;
            Ok(VolumeRow {
                month,
                emails,
                addresses,
                ratio: emails as f64 / addresses as f64,
            })
        })
        .collect()
}
