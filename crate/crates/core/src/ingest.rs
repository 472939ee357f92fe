//! Photo-record ingestion: parse per-location CSV files, drop malformed rows,
//! duplicates and sentinel timestamps, and restrict to the analysis window.
//!
//! Input layout is one CSV per location and label, named
//! `<location_id>_<label>.csv` with label in {resident, tourist, unknown}
//! and header `photo_id,user_id,taken_at,lat,lon[,url]`.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Required leading header fields of every input file.
pub const INPUT_HEADER: [&str; 5] = ["photo_id", "user_id", "taken_at", "lat", "lon"];

/// 1990-01-01T00:00:00Z. Anything earlier predates consumer digital
/// photography and is treated as a sentinel, like the all-zero timestamps
/// some exporters emit.
fn min_plausible_instant() -> DateTime<Utc> {
    DateTime::from_timestamp(631_152_000, 0).unwrap()
}

/// The dataset's own resident/tourist tag, carried from the source filename.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceLabel {
    Resident,
    Tourist,
    Unknown,
}

impl SourceLabel {
    pub fn parse(s: &str) -> Option<SourceLabel> {
        match s {
            "resident" => Some(SourceLabel::Resident),
            "tourist" => Some(SourceLabel::Tourist),
            "unknown" => Some(SourceLabel::Unknown),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SourceLabel::Resident => "resident",
            SourceLabel::Tourist => "tourist",
            SourceLabel::Unknown => "unknown",
        }
    }
}

impl fmt::Display for SourceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoRecord {
    pub photo_id: String,
    pub user_id: String,
    pub taken_at: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub location_id: String,
    pub source_label: SourceLabel,
}

/// Half-open analysis window [start, end).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<TimeWindow> {
        if start >= end {
            return Err(Error::config(format!(
                "window start {start} is not before end {end}"
            )));
        }
        Ok(TimeWindow { start, end })
    }

    /// Default window: the three calendar years 2007..2009.
    pub fn default_window() -> TimeWindow {
        TimeWindow::parse("2007-01-01..2010-01-01").unwrap()
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }

    /// Parse `start..end` where each side is a date (midnight UTC) or an
    /// RFC 3339 instant.
    pub fn parse(s: &str) -> Result<TimeWindow> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| Error::config(format!("window `{s}` is not of the form start..end")))?;
        TimeWindow::new(parse_instant(a)?, parse_instant(b)?)
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start.to_rfc3339(), self.end.to_rfc3339())
    }
}

fn parse_instant(s: &str) -> Result<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(d) = s.parse::<NaiveDate>() {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc());
    }
    DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc))
        .map_err(|_| Error::config(format!("cannot parse instant `{s}`")))
}

/// Bookkeeping across the ingest stages. `malformed_removed` covers rows
/// with the wrong field count, unparseable numbers, or out-of-range
/// coordinates; sentinel or unparseable timestamps get their own bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records_read: u64,
    pub malformed_removed: u64,
    pub duplicates_removed: u64,
    pub bad_timestamps_removed: u64,
    pub out_of_window_removed: u64,
    pub records_kept: u64,
}

impl IngestStats {
    /// Every row read is either kept or accounted to exactly one removal
    /// bucket.
    pub fn is_balanced(&self) -> bool {
        self.records_kept
            == self.records_read
                - self.malformed_removed
                - self.duplicates_removed
                - self.bad_timestamps_removed
                - self.out_of_window_removed
    }
}

/// Why a row was dropped at parse time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowError {
    Malformed(String),
    BadTimestamp(String),
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowError::Malformed(m) => write!(f, "malformed row: {m}"),
            RowError::BadTimestamp(m) => write!(f, "bad timestamp: {m}"),
        }
    }
}

/// Parse one CSV data row into a record. The url column, when present, is
/// ignored.
pub fn parse_record(
    row: &csv::StringRecord,
    location_id: &str,
    source_label: SourceLabel,
) -> std::result::Result<PhotoRecord, RowError> {
    if row.len() != 5 && row.len() != 6 {
        return Err(RowError::Malformed(format!(
            "expected 5 or 6 fields, got {}",
            row.len()
        )));
    }
    let photo_id = row[0].trim().to_owned();
    let user_id = row[1].trim().to_owned();
    if user_id.is_empty() {
        return Err(RowError::Malformed("empty user_id".into()));
    }
    let ts = row[2].trim();
    let taken_at = DateTime::parse_from_rfc3339(ts)
        .map(|d| d.with_timezone(&Utc))
        .map_err(|_| RowError::BadTimestamp(format!("`{ts}`")))?;
    if taken_at < min_plausible_instant() {
        return Err(RowError::BadTimestamp(format!("`{ts}` predates 1990")));
    }
    let lat: f64 = row[3]
        .trim()
        .parse()
        .map_err(|_| RowError::Malformed(format!("bad lat `{}`", &row[3])))?;
    let lon: f64 = row[4]
        .trim()
        .parse()
        .map_err(|_| RowError::Malformed(format!("bad lon `{}`", &row[4])))?;
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(RowError::Malformed(format!(
            "coordinates ({lat}, {lon}) out of range"
        )));
    }
    Ok(PhotoRecord {
        photo_id,
        user_id,
        taken_at,
        lat,
        lon,
        location_id: location_id.to_owned(),
        source_label,
    })
}

/// Split `<location_id>_<label>` at the last underscore; location ids may
/// themselves contain underscores.
pub fn parse_filename(name: &str) -> Result<(String, SourceLabel)> {
    let stem = name.strip_suffix(".csv").unwrap_or(name);
    let (location_id, label) = stem.rsplit_once('_').ok_or_else(|| {
        Error::data(format!(
            "file name `{name}` does not follow <location_id>_<label>.csv"
        ))
    })?;
    if location_id.is_empty() {
        return Err(Error::data(format!("file name `{name}` has empty location id")));
    }
    let label = SourceLabel::parse(label).ok_or_else(|| {
        Error::data(format!(
            "file name `{name}` has unknown label `{label}` (want resident, tourist or unknown)"
        ))
    })?;
    Ok((location_id.to_owned(), label))
}

/// Duplicate identity: photo_id when present, otherwise the full
/// (user, instant, lat, lon) quadruple.
#[derive(PartialEq, Eq, Hash)]
enum DupKey {
    Id(String),
    Quad(String, i64, u64, u64),
}

fn dup_key(r: &PhotoRecord) -> DupKey {
    if r.photo_id.is_empty() {
        DupKey::Quad(
            r.user_id.clone(),
            r.taken_at.timestamp(),
            r.lat.to_bits(),
            r.lon.to_bits(),
        )
    } else {
        DupKey::Id(r.photo_id.clone())
    }
}

/// Keeps the first occurrence in input order; memory is bounded by the
/// number of distinct keys.
#[derive(Default)]
pub struct Deduplicator {
    seen: HashSet<DupKey>,
}

impl Deduplicator {
    pub fn new() -> Deduplicator {
        Deduplicator::default()
    }

    /// True when this record is the first of its key.
    pub fn first_occurrence(&mut self, r: &PhotoRecord) -> bool {
        self.seen.insert(dup_key(r))
    }
}

pub fn deduplicate(
    records: impl IntoIterator<Item = PhotoRecord>,
    stats: &mut IngestStats,
) -> Vec<PhotoRecord> {
    let mut dedup = Deduplicator::new();
    let mut kept = Vec::new();
    for r in records {
        if dedup.first_occurrence(&r) {
            kept.push(r);
        } else {
            stats.duplicates_removed += 1;
        }
    }
    kept
}

pub fn filter_window(
    records: impl IntoIterator<Item = PhotoRecord>,
    window: &TimeWindow,
    stats: &mut IngestStats,
) -> Vec<PhotoRecord> {
    let mut kept = Vec::new();
    for r in records {
        if window.contains(r.taken_at) {
            kept.push(r);
        } else {
            stats.out_of_window_removed += 1;
        }
    }
    kept
}

struct FileBatch {
    records: Vec<PhotoRecord>,
    rows_read: u64,
    malformed: u64,
    bad_timestamps: u64,
}

fn read_file(path: &Path) -> Result<FileBatch> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::data(format!("unusable file name in {}", path.display())))?;
    let (location_id, label) = parse_filename(name)?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let headers = rdr
        .headers()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got.len() < 5 || got[..5] != INPUT_HEADER || (got.len() == 6 && got[5] != "url") || got.len() > 6 {
        return Err(Error::data(format!(
            "{}: header `{}` does not match photo_id,user_id,taken_at,lat,lon[,url]",
            path.display(),
            got.join(",")
        )));
    }

    let mut batch = FileBatch {
        records: Vec::new(),
        rows_read: 0,
        malformed: 0,
        bad_timestamps: 0,
    };
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2;
        batch.rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{}:{line}: unreadable row: {e}", path.display());
                batch.malformed += 1;
                continue;
            }
        };
        match parse_record(&row, &location_id, label) {
            Ok(rec) => batch.records.push(rec),
            Err(RowError::Malformed(m)) => {
                log::warn!("{}:{line}: {m}", path.display());
                batch.malformed += 1;
            }
            Err(RowError::BadTimestamp(m)) => {
                log::warn!("{}:{line}: bad timestamp {m}", path.display());
                batch.bad_timestamps += 1;
            }
        }
    }
    Ok(batch)
}

/// Ingest every `*.csv` under `dir` (non-recursive). Files are processed in
/// sorted name order so output is independent of directory enumeration and
/// of `workers`.
pub fn ingest_dir(
    dir: &Path,
    window: &TimeWindow,
    workers: usize,
) -> Result<(Vec<PhotoRecord>, IngestStats)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::data(format!(
            "no input files (*.csv) in {}",
            dir.display()
        )));
    }
    ingest_paths(&paths, window, workers)
}

/// Ingest an explicit file list. Parsing runs per file on a worker pool;
/// dedup and windowing walk the files in sorted order, so results do not
/// depend on `workers` (0 = default parallelism).
pub fn ingest_paths(
    paths: &[PathBuf],
    window: &TimeWindow,
    workers: usize,
) -> Result<(Vec<PhotoRecord>, IngestStats)> {
    let mut paths = paths.to_vec();
    paths.sort();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?;
    let batches: Vec<Result<FileBatch>> =
        pool.install(|| paths.par_iter().map(|p| read_file(p)).collect());

    let mut stats = IngestStats::default();
    let mut dedup = Deduplicator::new();
    let mut kept = Vec::new();
    for batch in batches {
        let batch = batch?;
        stats.records_read += batch.rows_read;
        stats.malformed_removed += batch.malformed;
        stats.bad_timestamps_removed += batch.bad_timestamps;
        for rec in batch.records {
            if !dedup.first_occurrence(&rec) {
                stats.duplicates_removed += 1;
            } else if !window.contains(rec.taken_at) {
                stats.out_of_window_removed += 1;
            } else {
                kept.push(rec);
            }
        }
    }
    kept.sort_by(|a, b| {
        (&a.location_id, &a.photo_id).cmp(&(&b.location_id, &b.photo_id))
    });
    stats.records_kept = kept.len() as u64;
    debug_assert!(stats.is_balanced());
    Ok((kept, stats))
}
