//! Effort analytics: per-group tables of minutes by activity and week,
//! derived from logs or read from effort-record CSV files.
//!
//! Totals are never read from input. They are recomputed from cells, and
//! [`check_printed_totals`] reports where a printed total disagrees.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::normalize_name;
use crate::reflection::{EventLog, LogWarning};

pub const EFFORT_HEADER: [&str; 4] = ["week", "group", "activity", "minutes"];
pub const PRINTED_HEADER: [&str; 4] = ["scope", "group", "key", "minutes"];
/// Group used for derived records whose events carry no group.
pub const UNGROUPED: &str = "ungrouped";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EffortRecord {
    pub week: String,
    pub group: String,
    pub activity: String,
    pub minutes: u64,
}

impl EffortRecord {
    pub fn new(week: &str, group: &str, activity: &str, minutes: u64) -> Self {
        EffortRecord { week: week.to_owned(), group: group.to_owned(), activity: activity.to_owned(), minutes }
    }
}

/// Row and column order for aggregation. An empty `groups` list means
/// "every group that occurs in the records".
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EffortAxes {
    pub taxonomy: Vec<String>,
    pub buckets: Vec<String>,
    pub groups: Vec<String>,
}

impl EffortAxes {
    pub fn new(taxonomy: &[&str], buckets: &[&str]) -> Self {
        EffortAxes {
            taxonomy: taxonomy.iter().map(|s| s.to_string()).collect(),
            buckets: buckets.iter().map(|s| s.to_string()).collect(),
            groups: Vec::new(),
        }
    }

    pub fn with_groups(mut self, groups: &[&str]) -> Self {
        self.groups = groups.iter().map(|s| s.to_string()).collect();
        self
    }

    /// Axes in order of first appearance in `records`.
    pub fn from_records(records: &[EffortRecord]) -> Self {
        fn first_seen<'a>(values: impl Iterator<Item = &'a String>, normalize: bool) -> Vec<String> {
            let mut seen = BTreeSet::new();
            values.filter(|v| seen.insert(if normalize { normalize_name(v) } else { v.to_string() })).cloned().collect()
        }
        EffortAxes {
            taxonomy: first_seen(records.iter().map(|r| &r.activity), true),
            buckets: first_seen(records.iter().map(|r| &r.week), false),
            groups: first_seen(records.iter().map(|r| &r.group), false),
        }
    }
}

/// Minutes per activity (rows) and week bucket (columns) for one group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffortTable {
    group: String,
    activities: Vec<String>,
    buckets: Vec<String>,
    cells: Vec<Vec<u64>>,
}

impl EffortTable {
    fn zero(group: &str, axes: &EffortAxes) -> Self {
        EffortTable {
            group: group.to_owned(),
            activities: axes.taxonomy.clone(),
            buckets: axes.buckets.clone(),
            cells: vec![vec![0; axes.buckets.len()]; axes.taxonomy.len()],
        }
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn buckets(&self) -> &[String] {
        &self.buckets
    }

    fn row_index(&self, activity: &str) -> Option<usize> {
        let wanted = normalize_name(activity);
        self.activities.iter().position(|a| normalize_name(a) == wanted)
    }

    fn column_index(&self, bucket: &str) -> Option<usize> {
        self.buckets.iter().position(|b| b == bucket.trim())
    }

    pub fn cell(&self, activity: &str, bucket: &str) -> Option<u64> {
        Some(self.cells[self.row_index(activity)?][self.column_index(bucket)?])
    }

    pub fn row_total(&self, activity: &str) -> Option<u64> {
        self.row_index(activity).map(|i| self.cells[i].iter().sum())
    }

    pub fn column_total(&self, bucket: &str) -> Option<u64> {
        self.column_index(bucket).map(|j| self.cells.iter().map(|row| row[j]).sum())
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.cells.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn column_totals(&self) -> Vec<u64> {
        (0..self.buckets.len()).map(|j| self.cells.iter().map(|row| row[j]).sum()).collect()
    }

    pub fn grand_total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    /// `(activity, bucket, minutes)` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (&str, &str, u64)> + '_ {
        self.activities.iter().zip(&self.cells).flat_map(move |(activity, row)| {
            self.buckets.iter().zip(row).map(move |(bucket, minutes)| (activity.as_str(), bucket.as_str(), *minutes))
        })
    }
}

#[derive(Serialize)]
struct RowView<'a> {
    activity: &'a str,
    minutes: &'a [u64],
    total: u64,
}

impl Serialize for EffortTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<RowView<'_>> = self
            .activities
            .iter()
            .zip(&self.cells)
            .map(|(activity, row)| RowView { activity, minutes: row, total: row.iter().sum() })
            .collect();
        let mut s = serializer.serialize_struct("EffortTable", 5)?;
        s.serialize_field("group", &self.group)?;
        s.serialize_field("buckets", &self.buckets)?;
        s.serialize_field("rows", &rows)?;
        s.serialize_field("column_totals", &self.column_totals())?;
        s.serialize_field("grand_total", &self.grand_total())?;
        s.end()
    }
}

/// Sums record minutes into one table per group. Activities match the
/// taxonomy by normalized name, buckets by exact label.
pub fn aggregate_effort(records: &[EffortRecord], axes: &EffortAxes) -> Result<BTreeMap<String, EffortTable>> {
    let rows: HashMap<String, usize> = axes.taxonomy.iter().enumerate().map(|(i, a)| (normalize_name(a), i)).collect();
    let columns: HashMap<&str, usize> = axes.buckets.iter().enumerate().map(|(j, b)| (b.as_str(), j)).collect();

    let mut tables: BTreeMap<String, EffortTable> =
        axes.groups.iter().map(|g| (g.clone(), EffortTable::zero(g, axes))).collect();
    for record in records {
        let row = *rows
            .get(&normalize_name(&record.activity))
            .ok_or_else(|| Error::UnknownLabel { what: "activity", name: record.activity.clone() })?;
        let column = *columns
            .get(record.week.trim())
            .ok_or_else(|| Error::UnknownLabel { what: "week bucket", name: record.week.clone() })?;
        let table = if axes.groups.is_empty() {
            tables.entry(record.group.clone()).or_insert_with(|| EffortTable::zero(&record.group, axes))
        } else {
            tables
                .get_mut(&record.group)
                .ok_or_else(|| Error::UnknownLabel { what: "group", name: record.group.clone() })?
        };
        table.cells[row][column] += record.minutes;
    }
    Ok(tables)
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().delimiter(b';').comment(Some(b'#')).trim(csv::Trim::All).flexible(true).from_reader(input)
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    Error::Csv { line, message: err.to_string() }
}

fn read_rows<R: Read>(input: R, header: [&str; 4]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut reader = csv_reader(input);
    let found = reader.headers().map_err(csv_error)?.clone();
    if found.iter().ne(header) {
        return Err(Error::Csv {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                header.join(";"),
                found.iter().collect::<Vec<_>>().join(";")
            ),
        });
    }
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 4 {
            return Err(Error::Csv { line, message: format!("expected 4 fields, found {}", row.len()) });
        }
        rows.push((line, row));
    }
    Ok(rows)
}

fn minutes_field(line: u64, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| Error::Csv { line, message: format!("minutes must be a non-negative integer, found `{value}`") })
}

/// Reads `week;group;activity;minutes` records; `#` starts a comment line.
pub fn read_effort_csv(input: impl Read) -> Result<Vec<EffortRecord>> {
    read_rows(input, EFFORT_HEADER)?
        .into_iter()
        .map(|(line, row)| {
            for (i, field) in EFFORT_HEADER.iter().take(3).enumerate() {
                if row[i].is_empty() {
                    return Err(Error::Csv { line, message: format!("{field} must not be empty") });
                }
            }
            Ok(EffortRecord::new(&row[0], &row[1], &row[2], minutes_field(line, &row[3])?))
        })
        .collect()
}

pub fn parse_effort_csv(text: &str) -> Result<Vec<EffortRecord>> {
    read_effort_csv(text.as_bytes())
}

pub fn write_effort_csv(records: &[EffortRecord]) -> String {
    let mut writer = csv::WriterBuilder::new().delimiter(b';').from_writer(Vec::new());
    writer.write_record(EFFORT_HEADER).expect("writing to memory");
    for r in records {
        writer
            .write_record([r.week.as_str(), &r.group, &r.activity, &r.minutes.to_string()])
            .expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("writing to memory")).expect("utf-8 input")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TotalScope {
    /// Total of one activity row; `key` is the activity.
    Row,
    /// Total of one week column; `key` is the bucket label.
    Column,
    /// Grand total; `key` is ignored.
    Grand,
}

impl FromStr for TotalScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "row" => Ok(TotalScope::Row),
            "column" => Ok(TotalScope::Column),
            "grand" => Ok(TotalScope::Grand),
            other => Err(format!("unknown scope `{other}`")),
        }
    }
}

/// A total as printed in some source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrintedTotal {
    pub scope: TotalScope,
    pub group: String,
    pub key: String,
    pub minutes: u64,
}

/// Reads `scope;group;key;minutes` rows.
pub fn read_printed_totals(input: impl Read) -> Result<Vec<PrintedTotal>> {
    read_rows(input, PRINTED_HEADER)?
        .into_iter()
        .map(|(line, row)| {
            let scope = row[0].parse().map_err(|message| Error::Csv { line, message })?;
            Ok(PrintedTotal {
                scope,
                group: row[1].to_owned(),
                key: row[2].to_owned(),
                minutes: minutes_field(line, &row[3])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TotalMismatch {
    pub scope: TotalScope,
    pub group: String,
    pub key: String,
    pub printed: u64,
    pub recomputed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TotalsReport {
    pub checked: usize,
    pub mismatches: Vec<TotalMismatch>,
}

impl TotalsReport {
    pub fn is_consistent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares printed totals with the recomputed ones.
pub fn check_printed_totals(tables: &BTreeMap<String, EffortTable>, printed: &[PrintedTotal]) -> Result<TotalsReport> {
    let mut mismatches = Vec::new();
    for p in printed {
        let table = tables.get(&p.group).ok_or_else(|| Error::UnknownLabel { what: "group", name: p.group.clone() })?;
        let recomputed = match p.scope {
            TotalScope::Row => {
                table.row_total(&p.key).ok_or_else(|| Error::UnknownLabel { what: "activity", name: p.key.clone() })?
            }
            TotalScope::Column => table
                .column_total(&p.key)
                .ok_or_else(|| Error::UnknownLabel { what: "week bucket", name: p.key.clone() })?,
            TotalScope::Grand => table.grand_total(),
        };
        if recomputed != p.minutes {
            mismatches.push(TotalMismatch {
                scope: p.scope,
                group: p.group.clone(),
                key: p.key.clone(),
                printed: p.minutes,
                recomputed,
            });
        }
    }
    Ok(TotalsReport { checked: printed.len(), mismatches })
}

/// A labelled, inclusive date range such as `10-17.11.2004`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeekBucket {
    pub label: String,
    pub first: NaiveDate,
    pub last: NaiveDate,
}

impl WeekBucket {
    /// Accepts `DD-DD.MM.YYYY` and `DD.MM-DD.MM.YYYY`.
    pub fn parse(label: &str) -> Result<Self> {
        let invalid = || Error::UnknownLabel { what: "week bucket format", name: label.to_owned() };
        let label = label.trim();
        let (start, end) = label.split_once('-').ok_or_else(invalid)?;
        let last = NaiveDate::parse_from_str(end, "%d.%m.%Y").map_err(|_| invalid())?;
        let first = match start.split_once('.') {
            None => {
                let day: u32 = start.parse().map_err(|_| invalid())?;
                last.with_day0(day.checked_sub(1).ok_or_else(invalid)?).ok_or_else(invalid)?
            }
            Some(_) => {
                NaiveDate::parse_from_str(&format!("{start}.{}", end.rsplit('.').next().unwrap_or("")), "%d.%m.%Y")
                    .map_err(|_| invalid())?
            }
        };
        if first > last {
            return Err(invalid());
        }
        Ok(WeekBucket { label: label.to_owned(), first, last })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.first <= date && date <= self.last
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DerivedEffort {
    pub records: Vec<EffortRecord>,
    pub warnings: Vec<LogWarning>,
}

/// One record per started/completed pair, in whole minutes (floored).
/// The bucket is the first one containing the completion date, read in the
/// completion's own offset. Unmatched events and completions outside every
/// bucket become warnings.
pub fn derive_effort_records(log: &EventLog, buckets: &[WeekBucket]) -> DerivedEffort {
    let (pairs, unmatched) = log.pair_events();
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for pair in pairs {
        let completed = pair.completed;
        let date = completed.timestamp.date_naive();
        let Some(bucket) = buckets.iter().find(|b| b.contains(date)) else {
            warnings.push(LogWarning {
                line: completed.line,
                case_id: completed.case_id.clone(),
                activity: completed.activity.clone(),
                performer: completed.performer.clone(),
                message: format!("completed on {date}, outside every week bucket"),
            });
            continue;
        };
        let seconds = (completed.timestamp - pair.started.timestamp).num_seconds();
        let group = completed.group.as_deref().or(pair.started.group.as_deref()).unwrap_or(UNGROUPED);
        records.push(EffortRecord::new(&bucket.label, group, &completed.activity, (seconds / 60) as u64));
    }
    for event in unmatched {
        let message = match event.status {
            crate::reflection::Status::Started => "started without a matching completion",
            crate::reflection::Status::Completed => "completed without a matching start",
        };
        warnings.push(LogWarning {
            line: event.line,
            case_id: event.case_id.clone(),
            activity: event.activity.clone(),
            performer: event.performer.clone(),
            message: message.to_owned(),
        });
    }
    DerivedEffort { records, warnings }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupDifference {
    pub first: String,
    pub second: String,
    /// `grand(first) − grand(second)`.
    pub difference: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupComparison {
    pub grand_totals: BTreeMap<String, u64>,
    /// Every unordered pair once, `first < second`.
    pub differences: Vec<GroupDifference>,
}

impl GroupComparison {
    pub fn difference(&self, first: &str, second: &str) -> Option<i64> {
        let a = *self.grand_totals.get(first)? as i64;
        let b = *self.grand_totals.get(second)? as i64;
        Some(a - b)
    }
}

pub fn compare_groups(tables: &BTreeMap<String, EffortTable>) -> Result<GroupComparison> {
    if tables.len() < 2 {
        return Err(Error::TooFewGroups(tables.len()));
    }
    let grand_totals: BTreeMap<String, u64> = tables.iter().map(|(g, t)| (g.clone(), t.grand_total())).collect();
    let groups: Vec<&String> = grand_totals.keys().collect();
    let mut differences = Vec::new();
    for (i, first) in groups.iter().enumerate() {
        for second in &groups[i + 1..] {
            differences.push(GroupDifference {
                first: (*first).clone(),
                second: (*second).clone(),
                difference: grand_totals[*first] as i64 - grand_totals[*second] as i64,
            });
        }
    }
    Ok(GroupComparison { grand_totals, differences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflection::{Event, Status};
    use chrono::DateTime;

    fn axes() -> EffortAxes {
        EffortAxes::new(&["Panel change", "System test"], &["w1", "w2"])
    }

    #[test]
    fn aggregates_and_recomputes_totals() {
        let records = [
            EffortRecord::new("w1", "A", "Panel change", 30),
            EffortRecord::new("w1", "A", "panel  CHANGE", 15),
            EffortRecord::new("w2", "A", "System test", 60),
            EffortRecord::new("w2", "B", "System test", 10),
        ];
        let tables = aggregate_effort(&records, &axes()).unwrap();
        let a = &tables["A"];
        assert_eq!(a.cell("Panel change", "w1"), Some(45));
        assert_eq!(a.row_totals(), [45, 60]);
        assert_eq!(a.column_totals(), [45, 60]);
        assert_eq!(a.grand_total(), 105);
        assert_eq!(tables["B"].cell("Panel change", "w2"), Some(0));
    }

    #[test]
    fn empty_records_give_zero_tables_for_declared_groups() {
        let tables = aggregate_effort(&[], &axes().with_groups(&["A", "B"])).unwrap();
        assert_eq!(tables.len(), 2);
        assert!(tables.values().all(|t| t.grand_total() == 0 && t.cells().count() == 4));
        assert!(aggregate_effort(&[], &axes()).unwrap().is_empty());
    }

    #[test]
    fn unknown_labels_are_named() {
        let bad_activity = [EffortRecord::new("w1", "A", "Coffee", 5)];
        let err = aggregate_effort(&bad_activity, &axes()).unwrap_err();
        assert!(err.to_string().contains("Coffee"));
        let bad_week = [EffortRecord::new("w9", "A", "System test", 5)];
        let err = aggregate_effort(&bad_week, &axes()).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { what: "week bucket", .. }));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let text = "week;group;activity;minutes\n# comment\nw1; A ;Panel change;30\n\nw2;B;System test;5\n";
        let records = parse_effort_csv(text).unwrap();
        assert_eq!(records[0], EffortRecord::new("w1", "A", "Panel change", 30));
        assert_eq!(parse_effort_csv(&write_effort_csv(&records)).unwrap(), records);

        assert!(matches!(parse_effort_csv("week,group\n"), Err(Error::Csv { line: 1, .. })));
        let negative = parse_effort_csv("week;group;activity;minutes\nw1;A;X;-5\n").unwrap_err();
        assert!(matches!(negative, Error::Csv { line: 2, .. }), "{negative}");
        assert!(parse_effort_csv("week;group;activity;minutes\nw1;A;X\n").is_err());
    }

    #[test]
    fn printed_totals_mismatches() {
        let records = [EffortRecord::new("w1", "A", "Panel change", 30)];
        let tables = aggregate_effort(&records, &axes()).unwrap();
        let printed = read_printed_totals(
            "scope;group;key;minutes\nrow;A;Panel change;30\ncolumn;A;w1;40\ngrand;A;;30\n".as_bytes(),
        )
        .unwrap();
        let report = check_printed_totals(&tables, &printed).unwrap();
        assert_eq!(report.checked, 3);
        assert_eq!(report.mismatches.len(), 1);
        assert_eq!((report.mismatches[0].printed, report.mismatches[0].recomputed), (40, 30));
    }

    #[test]
    fn week_buckets() {
        let b = WeekBucket::parse("10-17.11.2004").unwrap();
        assert_eq!(b.first, NaiveDate::from_ymd_opt(2004, 11, 10).unwrap());
        assert!(b.contains(NaiveDate::from_ymd_opt(2004, 11, 17).unwrap()));
        let spanning = WeekBucket::parse("29.11-05.12.2004").unwrap();
        assert_eq!(spanning.first, NaiveDate::from_ymd_opt(2004, 11, 29).unwrap());
        for bad in ["", "17-10.11.2004", "x-17.11.2004", "32-33.11.2004"] {
            assert!(WeekBucket::parse(bad).is_err(), "{bad}");
        }
    }

    fn ts(s: &str) -> DateTime<chrono::FixedOffset> {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    #[test]
    fn derives_floored_minutes_and_warnings() {
        let log = EventLog::new(vec![
            Event::new(ts("2004-11-12T10:00:00+01:00"), "c", "System test", Status::Started, "ann").with_group("EG1"),
            Event::new(ts("2004-11-12T10:30:59+01:00"), "c", "System test", Status::Completed, "ann").with_group("EG1"),
            Event::new(ts("2004-11-12T11:00:00+01:00"), "c", "Panel change", Status::Completed, "bob"),
            Event::new(ts("2004-12-24T11:00:00+01:00"), "c", "Panel change", Status::Started, "bob"),
        ]);
        let buckets = [WeekBucket::parse("10-17.11.2004").unwrap()];
        let derived = derive_effort_records(&log, &buckets);
        assert_eq!(derived.records, [EffortRecord::new("10-17.11.2004", "EG1", "System test", 30)]);
        assert_eq!(derived.warnings.len(), 2);
    }

    #[test]
    fn comparison() {
        let records =
            [EffortRecord::new("w1", "A", "Panel change", 30), EffortRecord::new("w1", "B", "Panel change", 50)];
        let tables = aggregate_effort(&records, &axes().with_groups(&["A", "B", "C"])).unwrap();
        let cmp = compare_groups(&tables).unwrap();
        assert_eq!(cmp.differences.len(), 3);
        assert_eq!(cmp.difference("A", "B"), Some(-20));
        assert_eq!(cmp.differences[0], GroupDifference { first: "A".into(), second: "B".into(), difference: -20 });

        let one: BTreeMap<_, _> = tables.into_iter().take(1).collect();
        assert!(matches!(compare_groups(&one), Err(Error::TooFewGroups(1))));
    }
}
