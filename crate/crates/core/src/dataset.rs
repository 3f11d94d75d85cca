//! Sensor log and fault annotation ingestion, plus per-sample fault labels.
//!
//! Sensor files carry a timestamp column followed by numeric channels on a
//! strict one-minute grid. Missing cells are kept as `None` until the
//! imputation stage fills them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Duration, NaiveDateTime};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";
const GRID_SECONDS: i64 = 60;

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .ok()
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Column mapping for [`load_sensor_csv`].
#[derive(Debug, Clone)]
pub struct CsvSpec {
    /// Header name of the timestamp column; `None` means the first column.
    pub timestamp_column: Option<String>,
    /// Channels to keep, in order; `None` keeps every non-timestamp column.
    pub channels: Option<Vec<String>>,
    /// Literal that marks a missing cell in addition to the empty string.
    pub missing_sentinel: String,
}

impl Default for CsvSpec {
    fn default() -> Self {
        Self {
            timestamp_column: None,
            channels: None,
            missing_sentinel: "NaN".to_string(),
        }
    }
}

/// Timestamped N×C matrix of raw readings; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorLog {
    timestamps: Vec<NaiveDateTime>,
    channel_names: Vec<String>,
    values: Vec<Option<f64>>,
}

impl SensorLog {
    /// Builds a log and validates grid spacing, shape and finiteness.
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        channel_names: Vec<String>,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = timestamps.len();
        let c = channel_names.len();
        if values.len() != n * c {
            return Err(Error::shape(format!(
                "values has {} cells, expected {n}x{c}",
                values.len()
            )));
        }
        validate_grid(&timestamps)?;
        if let Some(pos) = values
            .iter()
            .position(|v| matches!(v, Some(x) if !x.is_finite()))
        {
            return Err(Error::validation(format!(
                "non-finite reading at row {}, channel {}",
                pos / c.max(1),
                channel_names[pos % c]
            )));
        }
        Ok(Self {
            timestamps,
            channel_names,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, row: usize, channel: usize) -> Option<f64> {
        self.values[row * self.n_channels() + channel]
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        let c = self.n_channels();
        &self.values[row * c..(row + 1) * c]
    }

    /// Copy of one channel as a column.
    pub fn column(&self, channel: usize) -> Vec<Option<f64>> {
        (0..self.n_rows()).map(|r| self.get(r, channel)).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Rebuilds the log from replacement columns, keeping the timestamps.
    pub(crate) fn with_columns(
        &self,
        channel_names: Vec<String>,
        columns: &[Vec<Option<f64>>],
    ) -> Result<Self> {
        let n = self.n_rows();
        let mut values = Vec::with_capacity(n * columns.len());
        for r in 0..n {
            for col in columns {
                values.push(col[r]);
            }
        }
        SensorLog::new(self.timestamps.clone(), channel_names, values)
    }

    /// Dense row-major copy; fails if any cell is still missing.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    Error::validation(format!(
                        "missing cell at row {}, channel {}",
                        i / self.n_channels(),
                        self.channel_names[i % self.n_channels()]
                    ))
                })
            })
            .collect()
    }
}

fn validate_grid(timestamps: &[NaiveDateTime]) -> Result<()> {
    for (i, pair) in timestamps.windows(2).enumerate() {
        let step = (pair[1] - pair[0]).num_seconds();
        if step == 0 {
            return Err(Error::Duplicate { row: i + 1 });
        }
        if step != GRID_SECONDS {
            return Err(Error::Spacing {
                row: i + 1,
                seconds: step,
            });
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn load_sensor_csv(path: &Path, spec: &CsvSpec) -> Result<SensorLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = reader.headers()?.clone();
    let ts_col = match &spec.timestamp_column {
        None => 0,
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("timestamp column {name:?} not found")))?,
    };
    let channel_cols: Vec<usize> = match &spec.channels {
        None => (0..headers.len()).filter(|&i| i != ts_col).collect(),
        Some(names) => names
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::validation(format!("channel {name:?} not found")))
            })
            .collect::<Result<_>>()?,
    };
    if channel_cols.is_empty() {
        return Err(Error::validation("sensor file has no channel columns"));
    }
    let channel_names: Vec<String> = channel_cols.iter().map(|&i| headers[i].to_string()).collect();

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let record = record?;
        let ts_raw = record.get(ts_col).unwrap_or("");
        let ts = parse_timestamp(ts_raw).ok_or_else(|| Error::Parse {
            row,
            message: format!("bad timestamp {ts_raw:?}"),
        })?;
        timestamps.push(ts);
        for &col in &channel_cols {
            let cell = record.get(col).unwrap_or("");
            if cell.is_empty() || cell == spec.missing_sentinel {
                values.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                message: format!("bad number {cell:?} in column {}", &headers[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            values.push(Some(v));
        }
    }
    // grid errors are reported with file line numbers
    validate_grid(&timestamps).map_err(|e| match e {
        Error::Spacing { row, seconds } => Error::Spacing {
            row: row + 2,
            seconds,
        },
        Error::Duplicate { row } => Error::Duplicate { row: row + 2 },
        other => other,
    })?;
    SensorLog::new(timestamps, channel_names, values)
}

pub fn write_sensor_csv(path: &Path, log: &SensorLog) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    write!(out, "timestamp").map_err(io)?;
    for name in log.channel_names() {
        write!(out, ",{name}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for r in 0..log.n_rows() {
        write!(out, "{}", format_timestamp(&log.timestamps()[r])).map_err(io)?;
        for v in log.row(r) {
            match v {
                Some(x) => write!(out, ",{x}").map_err(io)?,
                None => write!(out, ",").map_err(io)?,
            }
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultInterval {
    pub start: NaiveDateTime,
    pub duration_minutes: i64,
}

impl FaultInterval {
    pub fn end(&self) -> NaiveDateTime {
        self.start + Duration::minutes(self.duration_minutes)
    }

    /// Half-open membership: `[start, start + duration)`.
    pub fn contains(&self, t: &NaiveDateTime) -> bool {
        *t >= self.start && *t < self.end()
    }
}

/// Annotated fault intervals, sorted by start; overlaps are allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultSchedule {
    intervals: Vec<FaultInterval>,
}

impl FaultSchedule {
    pub fn new(mut intervals: Vec<FaultInterval>) -> Result<Self> {
        if let Some(bad) = intervals.iter().find(|iv| iv.duration_minutes <= 0) {
            return Err(Error::validation(format!(
                "fault starting {} has non-positive duration {}",
                format_timestamp(&bad.start),
                bad.duration_minutes
            )));
        }
        intervals.sort_by_key(|iv| (iv.start, iv.duration_minutes));
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[FaultInterval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

pub fn load_fault_intervals(path: &Path) -> Result<FaultSchedule> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("fault file lacks column {name:?}")))
    };
    let start_col = col("start")?;
    let dur_col = col("duration_minutes")?;
    let mut intervals = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let raw = record.get(start_col).unwrap_or("");
        let start = parse_timestamp(raw).ok_or_else(|| Error::Parse {
            row,
            message: format!("bad start {raw:?}"),
        })?;
        let raw = record.get(dur_col).unwrap_or("");
        let duration_minutes: i64 = raw.parse().map_err(|_| Error::Parse {
            row,
            message: format!("bad duration {raw:?}"),
        })?;
        intervals.push(FaultInterval {
            start,
            duration_minutes,
        });
    }
    FaultSchedule::new(intervals)
}

pub fn write_fault_csv(path: &Path, schedule: &FaultSchedule) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "start,duration_minutes").map_err(io)?;
    for iv in schedule.intervals() {
        writeln!(out, "{},{}", format_timestamp(&iv.start), iv.duration_minutes).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Per-row fault flags aligned with a [`SensorLog`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    pub flags: Vec<bool>,
}

impl LabelVector {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn fault_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Flags every row whose timestamp falls in any interval (union of half-open ranges).
pub fn label_samples(log: &SensorLog, schedule: &FaultSchedule) -> LabelVector {
    let flags = log
        .timestamps()
        .iter()
        .map(|t| schedule.intervals().iter().any(|iv| iv.contains(t)))
        .collect();
    LabelVector { flags }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn minute_log(start: &str, n: usize) -> SensorLog {
        let t0 = ts(start);
        let stamps = (0..n).map(|i| t0 + Duration::minutes(i as i64)).collect();
        SensorLog::new(stamps, vec!["a".into()], vec![Some(0.0); n]).unwrap()
    }

    #[test]
    fn loads_with_one_missing_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "s.csv",
            "timestamp,a,b\n2018-01-01 00:00,1,2\n2018-01-01 00:01,,3\n2018-01-01 00:02,4,5\n",
        );
        let log = load_sensor_csv(&p, &CsvSpec::default()).unwrap();
        assert_eq!(log.n_rows(), 3);
        assert_eq!(log.n_channels(), 2);
        assert_eq!(log.missing_count(), 1);
        assert_eq!(log.get(1, 0), None);
        assert_eq!(log.get(2, 1), Some(5.0));
    }

    #[test]
    fn gap_of_two_minutes_is_spacing_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "t,a\n2018-01-01 00:00,1\n2018-01-01 00:02,2\n");
        let err = load_sensor_csv(&p, &CsvSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Spacing { row: 3, seconds: 120 }), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn duplicate_and_bad_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "t,a\n2018-01-01 00:00,1\n2018-01-01 00:00,2\n");
        assert!(matches!(
            load_sensor_csv(&p, &CsvSpec::default()),
            Err(Error::Duplicate { row: 3 })
        ));
        let p = write(&dir, "b.csv", "t,a\n2018-01-01 00:00,1\nyesterday,2\n");
        assert!(matches!(
            load_sensor_csv(&p, &CsvSpec::default()),
            Err(Error::Parse { row: 3, .. })
        ));
    }

    #[test]
    fn nan_sentinel_marks_missing() {
        let dir = tempfile::tempdir().unwrap();
        let body = "timestamp,x,y\n\
            2020-02-29 23:58,0.5,1\n\
            2020-02-29 23:59,0.25,2\n\
            2020-03-01 00:00,NaN,3\n\
            2020-03-01 00:01,-1e-3,4\n\
            2020-03-01 00:02,7,5\n";
        let p = write(&dir, "s.csv", body);
        let log = load_sensor_csv(&p, &CsvSpec::default()).unwrap();
        // expected cells from a separate line-by-line split of `body`
        let expected: Vec<Option<f64>> = vec![
            Some(0.5),
            Some(1.0),
            Some(0.25),
            Some(2.0),
            None,
            Some(3.0),
            Some(-0.001),
            Some(4.0),
            Some(7.0),
            Some(5.0),
        ];
        assert_eq!(log.values(), expected.as_slice());

        let spec = CsvSpec {
            missing_sentinel: "-999".into(),
            ..CsvSpec::default()
        };
        let p = write(&dir, "t.csv", "timestamp,x\n2020-01-01 00:00,-999\n2020-01-01 00:01,1\n");
        assert_eq!(load_sensor_csv(&p, &spec).unwrap().missing_count(), 1);
    }

    #[test]
    fn column_mapping_selects_channels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "a,when,b\n1,2018-01-01 00:00,2\n3,2018-01-01 00:01,4\n");
        let spec = CsvSpec {
            timestamp_column: Some("when".into()),
            channels: Some(vec!["b".into()]),
            ..CsvSpec::default()
        };
        let log = load_sensor_csv(&p, &spec).unwrap();
        assert_eq!(log.channel_names(), ["b"]);
        assert_eq!(log.column(0), vec![Some(2.0), Some(4.0)]);
    }

    #[test]
    fn fault_rows_from_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "f.csv",
            "start,duration_minutes\n2018-07-08 00:11,42\n2018-04-18 00:30,3111\n",
        );
        let sched = load_fault_intervals(&p).unwrap();
        let ivs = sched.intervals();
        // sorted by start
        assert_eq!(ivs[0].start, ts("2018-04-18 00:30"));
        assert_eq!(ivs[0].duration_minutes, 51 * 60 + 51);
        assert_eq!(ivs[0].end(), ts("2018-04-20 04:21"));
        assert_eq!(ivs[1].start, ts("2018-07-08 00:11"));
        assert_eq!(ivs[1].duration_minutes, 42);
    }

    #[test]
    fn zero_duration_and_bad_start_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "f.csv", "start,duration_minutes\n2018-07-08 00:11,0\n");
        assert!(matches!(load_fault_intervals(&p), Err(Error::Validation(_))));
        let p = write(&dir, "g.csv", "start,duration_minutes\nsoon,5\n");
        assert!(matches!(
            load_fault_intervals(&p),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn fault_six_flags_42_minutes() {
        let log = minute_log("2018-07-08 00:00", 61);
        let sched = FaultSchedule::new(vec![FaultInterval {
            start: ts("2018-07-08 00:11"),
            duration_minutes: 42,
        }])
        .unwrap();
        let labels = label_samples(&log, &sched);
        // enumerate the 61 minute stamps independently
        let expected: Vec<bool> = (0..61).map(|m| (11..53).contains(&m)).collect();
        assert_eq!(labels.flags, expected);
        assert_eq!(labels.fault_count(), 42);
        assert!(labels.flags[11] && labels.flags[52] && !labels.flags[53]);
    }

    #[test]
    fn empty_schedule_and_overlap() {
        let log = minute_log("2018-01-01 00:00", 10);
        assert_eq!(label_samples(&log, &FaultSchedule::default()).fault_count(), 0);
        let iv = |m: i64, d| FaultInterval {
            start: ts("2018-01-01 00:00") + Duration::minutes(m),
            duration_minutes: d,
        };
        let sched = FaultSchedule::new(vec![iv(2, 3), iv(4, 2)]).unwrap();
        let labels = label_samples(&log, &sched);
        assert_eq!(labels.fault_count(), 4); // minutes 2,3,4,5
    }

    proptest::proptest! {
        #[test]
        fn label_count_matches_set_union(
            raw in proptest::collection::vec((-20i64..80, 1i64..30), 0..6),
            extra in (-20i64..80, 1i64..30),
        ) {
            let log = minute_log("2018-01-01 00:00", 60);
            let t0 = ts("2018-01-01 00:00");
            let mk = |(m, d): (i64, i64)| FaultInterval { start: t0 + Duration::minutes(m), duration_minutes: d };
            let sched = FaultSchedule::new(raw.iter().copied().map(mk).collect()).unwrap();
            let labels = label_samples(&log, &sched);

            let mut minutes = BTreeSet::new();
            for &(m, d) in &raw {
                for k in m..m + d {
                    if (0..60).contains(&k) { minutes.insert(k); }
                }
            }
            proptest::prop_assert_eq!(labels.fault_count(), minutes.len());

            // monotone: adding an interval never unflags
            let mut more: Vec<_> = raw.iter().copied().map(mk).collect();
            more.push(mk(extra));
            let wider = label_samples(&log, &FaultSchedule::new(more).unwrap());
            for (a, b) in labels.flags.iter().zip(&wider.flags) {
                proptest::prop_assert!(!a || *b);
            }
        }

        #[test]
        fn csv_round_trip_is_bit_exact(
            cells in proptest::collection::vec(proptest::option::weighted(0.9, -1e6f64..1e6), 12),
        ) {
            let t0 = ts("2019-03-01 12:00");
            let stamps = (0..4).map(|i| t0 + Duration::minutes(i)).collect();
            let log = SensorLog::new(stamps, vec!["a".into(), "b".into(), "c".into()], cells).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.csv");
            write_sensor_csv(&p, &log).unwrap();
            let back = load_sensor_csv(&p, &CsvSpec::default()).unwrap();
            for (a, b) in log.values().iter().zip(back.values()) {
                proptest::prop_assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
            }
        }
    }
}
