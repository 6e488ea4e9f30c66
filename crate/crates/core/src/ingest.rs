//! Call-log ingestion: delimited-text parsing against a schema mapping,
//! exclusion filters, and recontact outcome labeling.
//!
//! Malformed rows are never dropped silently — they land in a rejects
//! report with a reason, and the filter step reports a count per exclusion
//! rule, so sample sizes stay auditable end to end.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::family::FamilyPartition;
use crate::{time, Error, Result};

/// One service call as recorded by the routing system, plus survey
/// responses and downstream outcome flags.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub call_id: String,
    pub customer_id: Option<String>,
    pub phone: Option<String>,
    pub agent_id: String,
    pub queue_id: String,
    /// UTC epoch seconds.
    pub start_time: i64,
    /// Seconds spent waiting before service started.
    pub waiting_time: f64,
    pub transferred: bool,
    /// Never served within the simulation horizon; excluded downstream.
    pub abandoned: bool,
    pub surveyed: bool,
    /// 0–5, present only when surveyed and a score was given.
    pub csat: Option<u8>,
    pub fcr: Option<bool>,
    pub market: String,
    pub ffp_tier: String,
    pub log_hours_from_last_call: f64,
    pub bookings_past_12m: u32,
    pub outcome_flags: BTreeMap<String, bool>,
}

impl CallRecord {
    pub fn flag(&self, name: &str) -> bool {
        self.outcome_flags.get(name).copied().unwrap_or(false)
    }
}

/// Recontact label for one call at a given horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeLabel {
    pub call_id: String,
    pub recontact: bool,
    pub horizon_hours: u32,
}

/// Canonical column names, in serialization order.
pub const CORE_FIELDS: [&str; 16] = [
    "call_id",
    "customer_id",
    "phone",
    "agent_id",
    "queue_id",
    "start_time",
    "waiting_time",
    "transferred",
    "abandoned",
    "surveyed",
    "csat",
    "fcr",
    "market",
    "ffp_tier",
    "log_hours_from_last_call",
    "bookings_past_12m",
];

/// Fields that must be mapped and present for a file to be usable.
const MANDATORY_FIELDS: [&str; 7] = [
    "call_id",
    "agent_id",
    "queue_id",
    "start_time",
    "waiting_time",
    "transferred",
    "surveyed",
];

/// Standard downstream outcome flags emitted by the simulator.
pub const STANDARD_FLAGS: [&str; 5] = [
    "claims_7d",
    "claims_28d",
    "refund_request",
    "regulatory_claim",
    "high_priority_claim",
];

/// Column mapping from canonical field names to the headers of a
/// particular file, plus the delimiter and optional study window.
#[derive(Debug, Clone)]
pub struct Schema {
    pub delimiter: char,
    /// canonical field -> header name; None means the file has no such column.
    columns: BTreeMap<&'static str, Option<String>>,
    /// flag name -> header name.
    pub flags: Vec<(String, String)>,
    /// Optional [start, end) of the study window in UTC epoch seconds.
    pub study_window: Option<(i64, i64)>,
}

impl Default for Schema {
    fn default() -> Self {
        let mut columns = BTreeMap::new();
        for f in CORE_FIELDS {
            columns.insert(f, Some(f.to_string()));
        }
        Schema {
            delimiter: ',',
            columns,
            flags: STANDARD_FLAGS
                .iter()
                .map(|f| (f.to_string(), f.to_string()))
                .collect(),
            study_window: None,
        }
    }
}

impl Schema {
    /// Parse a schema mapping from plain-text key-value config. Unlisted
    /// core fields keep their identity mapping; `field =` (empty value)
    /// unmaps an optional field; `flag.<name> = <header>` declares an
    /// outcome flag column. Listing any flag replaces the standard set.
    pub fn from_kv_text(text: &str) -> Result<Schema> {
        let doc = crate::kv::parse(text)?;
        let mut schema = Schema::default();
        let mut flags: Vec<(String, String)> = vec![];
        for (key, value) in &doc.top.entries {
            if let Some(flag) = key.strip_prefix("flag.") {
                flags.push((flag.to_string(), value.clone()));
                continue;
            }
            match key.as_str() {
                "delimiter" => {
                    let mut chars = value.chars();
                    let c = chars
                        .next()
                        .ok_or_else(|| Error::config("empty delimiter"))?;
                    if chars.next().is_some() {
                        return Err(Error::config("delimiter must be a single character"));
                    }
                    schema.delimiter = c;
                }
                "study_start" => {
                    let start = time::parse_iso8601(value)
                        .map_err(|e| Error::config(format!("study_start: {e}")))?;
                    let end = schema.study_window.map_or(i64::MAX, |(_, e)| e);
                    schema.study_window = Some((start, end));
                }
                "study_end" => {
                    let end = time::parse_iso8601(value)
                        .map_err(|e| Error::config(format!("study_end: {e}")))?;
                    let start = schema.study_window.map_or(i64::MIN, |(s, _)| s);
                    schema.study_window = Some((start, end));
                }
                field => {
                    let canonical = CORE_FIELDS
                        .iter()
                        .find(|f| **f == field)
                        .ok_or_else(|| Error::config(format!("unknown schema field {field:?}")))?;
                    if value.is_empty() {
                        if MANDATORY_FIELDS.contains(canonical) {
                            return Err(Error::config(format!(
                                "field {canonical:?} is mandatory and cannot be unmapped"
                            )));
                        }
                        schema.columns.insert(canonical, None);
                    } else {
                        schema.columns.insert(canonical, Some(value.clone()));
                    }
                }
            }
        }
        if !flags.is_empty() {
            schema.flags = flags;
        }
        Ok(schema)
    }

    fn header_of(&self, field: &str) -> Option<&str> {
        self.columns.get(field).and_then(|v| v.as_deref())
    }

    /// Header row in canonical order.
    pub fn header(&self) -> String {
        let mut cols: Vec<&str> = vec![];
        for f in CORE_FIELDS {
            if let Some(h) = self.header_of(f) {
                cols.push(h);
            }
        }
        for (_, h) in &self.flags {
            cols.push(h);
        }
        let delim = self.delimiter.to_string();
        cols.join(&delim)
    }

    /// Serialize one record in canonical order. Inverse of row parsing.
    pub fn encode_row(&self, record: &CallRecord) -> String {
        let mut out: Vec<String> = vec![];
        for f in CORE_FIELDS {
            if self.header_of(f).is_none() {
                continue;
            }
            let value = match f {
                "call_id" => record.call_id.clone(),
                "customer_id" => record.customer_id.clone().unwrap_or_default(),
                "phone" => record.phone.clone().unwrap_or_default(),
                "agent_id" => record.agent_id.clone(),
                "queue_id" => record.queue_id.clone(),
                "start_time" => time::format_utc(record.start_time),
                "waiting_time" => format!("{}", record.waiting_time),
                "transferred" => bool_str(record.transferred),
                "abandoned" => bool_str(record.abandoned),
                "surveyed" => bool_str(record.surveyed),
                "csat" => record.csat.map(|v| format!("{v}")).unwrap_or_default(),
                "fcr" => record.fcr.map(bool_str).unwrap_or_default(),
                "market" => record.market.clone(),
                "ffp_tier" => record.ffp_tier.clone(),
                "log_hours_from_last_call" => format!("{}", record.log_hours_from_last_call),
                "bookings_past_12m" => format!("{}", record.bookings_past_12m),
                _ => unreachable!(),
            };
            out.push(value);
        }
        for (name, _) in &self.flags {
            out.push(bool_str(record.flag(name)));
        }
        let delim = self.delimiter.to_string();
        out.join(&delim)
    }
}

fn bool_str(v: bool) -> String {
    if v { "true" } else { "false" }.to_string()
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

/// A row that could not be turned into a `CallRecord`, with the reason.
#[derive(Debug, Clone)]
pub struct RejectedRow {
    /// 1-based line number in the source.
    pub line: usize,
    pub reason: String,
    pub raw: String,
}

/// Parsing output: well-formed records plus the rejects report.
#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub records: Vec<CallRecord>,
    pub rejects: Vec<RejectedRow>,
}

/// Parse a delimited text table against a schema. Schema-level problems
/// (missing mapped columns) are errors; row-level problems become rejects.
pub fn parse_calls(source: &str, schema: &Schema) -> Result<ParseReport> {
    let mut lines = source.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::data("empty input: header row required"))?;
    let headers: Vec<&str> = header_line.split(schema.delimiter).collect();
    let col_index = |name: &str| headers.iter().position(|h| *h == name);

    // Resolve every mapped column up front, mandatory fields first so the
    // most actionable schema error wins.
    let mut field_cols: BTreeMap<&'static str, usize> = BTreeMap::new();
    for f in CORE_FIELDS {
        if !MANDATORY_FIELDS.contains(&f) {
            continue;
        }
        let h = schema
            .header_of(f)
            .expect("mandatory fields are always mapped");
        match col_index(h) {
            Some(i) => {
                field_cols.insert(f, i);
            }
            None => {
                return Err(Error::data(format!(
                    "missing mandatory column {h:?} (field {f})"
                )));
            }
        }
    }
    for f in CORE_FIELDS {
        if MANDATORY_FIELDS.contains(&f) {
            continue;
        }
        if let Some(h) = schema.header_of(f) {
            match col_index(h) {
                Some(i) => {
                    field_cols.insert(f, i);
                }
                None => {
                    return Err(Error::data(format!(
                        "schema maps field {f} to column {h:?}, which is not in the header"
                    )));
                }
            }
        }
    }
    let mut flag_cols: Vec<(String, usize)> = vec![];
    for (name, h) in &schema.flags {
        let i = col_index(h).ok_or_else(|| {
            Error::data(format!(
                "schema maps flag {name} to column {h:?}, which is not in the header"
            ))
        })?;
        flag_cols.push((name.clone(), i));
    }

    let mut report = ParseReport::default();
    'rows: for (lineno, raw) in lines {
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(schema.delimiter).collect();
        let reject = |reason: String, report: &mut ParseReport| {
            report.rejects.push(RejectedRow {
                line: lineno + 1,
                reason,
                raw: raw.to_string(),
            });
        };
        if fields.len() != headers.len() {
            reject(
                format!("expected {} fields, found {}", headers.len(), fields.len()),
                &mut report,
            );
            continue;
        }
        let get = |f: &str| field_cols.get(f).map(|&i| fields[i]);
        let opt = |f: &str| get(f).filter(|v| !v.is_empty()).map(str::to_string);

        macro_rules! try_row {
            ($expr:expr, $msg:expr) => {
                match $expr {
                    Some(v) => v,
                    None => {
                        reject($msg, &mut report);
                        continue 'rows;
                    }
                }
            };
        }

        let call_id = try_row!(opt("call_id"), "empty call_id".to_string());
        let start_raw = get("start_time").unwrap_or("");
        let start_time = match time::parse_iso8601(start_raw) {
            Ok(t) => t,
            Err(e) => {
                reject(format!("{e}"), &mut report);
                continue;
            }
        };
        if let Some((lo, hi)) = schema.study_window {
            if start_time < lo || start_time >= hi {
                reject(
                    format!("start_time {start_raw} outside the study window"),
                    &mut report,
                );
                continue;
            }
        }
        let waiting_raw = get("waiting_time").unwrap_or("");
        let waiting_time: f64 = try_row!(
            waiting_raw.parse().ok(),
            format!("unparseable waiting_time {waiting_raw:?}")
        );
        if !(waiting_time >= 0.0) {
            reject(format!("negative waiting_time {waiting_raw}"), &mut report);
            continue;
        }
        let transferred = try_row!(
            parse_bool(get("transferred").unwrap_or("")),
            "unparseable transferred flag".to_string()
        );
        let surveyed = try_row!(
            parse_bool(get("surveyed").unwrap_or("")),
            "unparseable surveyed flag".to_string()
        );
        let abandoned = match get("abandoned") {
            Some(v) => try_row!(parse_bool(v), "unparseable abandoned flag".to_string()),
            None => false,
        };
        let csat = match get("csat").filter(|v| !v.is_empty()) {
            Some(v) => {
                let parsed: Option<u8> = v.parse().ok().filter(|s| *s <= 5);
                match parsed {
                    Some(s) => Some(s),
                    None => {
                        reject(format!("csat {v:?} out of the 0-5 range"), &mut report);
                        continue;
                    }
                }
            }
            None => None,
        };
        if csat.is_some() && !surveyed {
            reject(
                "csat present on an unsurveyed call".to_string(),
                &mut report,
            );
            continue;
        }
        let fcr = match get("fcr").filter(|v| !v.is_empty()) {
            Some(v) => Some(try_row!(parse_bool(v), format!("unparseable fcr {v:?}"))),
            None => None,
        };
        let log_hours = match get("log_hours_from_last_call").filter(|v| !v.is_empty()) {
            Some(v) => try_row!(
                v.parse().ok(),
                format!("unparseable log_hours_from_last_call {v:?}")
            ),
            None => 0.0,
        };
        let bookings = match get("bookings_past_12m").filter(|v| !v.is_empty()) {
            Some(v) => try_row!(
                v.parse().ok(),
                format!("unparseable bookings_past_12m {v:?}")
            ),
            None => 0,
        };
        let mut flags = BTreeMap::new();
        for (name, i) in &flag_cols {
            let v = try_row!(parse_bool(fields[*i]), format!("unparseable flag {name}"));
            flags.insert(name.clone(), v);
        }

        report.records.push(CallRecord {
            call_id,
            customer_id: opt("customer_id"),
            phone: opt("phone"),
            agent_id: get("agent_id").unwrap_or("").to_string(),
            queue_id: get("queue_id").unwrap_or("").to_string(),
            start_time,
            waiting_time,
            transferred,
            abandoned,
            surveyed,
            csat,
            fcr,
            market: get("market").unwrap_or("").to_string(),
            ffp_tier: get("ffp_tier").unwrap_or("").to_string(),
            log_hours_from_last_call: log_hours,
            bookings_past_12m: bookings,
            outcome_flags: flags,
        });
    }
    Ok(report)
}

/// Per-rule exclusion counts for the filter step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterCounts {
    pub input: usize,
    pub transferred: usize,
    pub missing_identity: usize,
    pub abandoned: usize,
    pub kept: usize,
}

/// Filtered calls plus the audit counts.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: Vec<CallRecord>,
    pub counts: FilterCounts,
}

/// Apply the estimation-sample exclusions: transferred calls (assignment
/// not pseudo-random), calls with no customer identification (downstream
/// metrics cannot be associated), and abandoned calls (never served).
/// Relative order is preserved and the operation is idempotent.
pub fn filter_calls(calls: Vec<CallRecord>) -> FilterOutcome {
    let mut counts = FilterCounts {
        input: calls.len(),
        ..FilterCounts::default()
    };
    let mut kept = Vec::with_capacity(calls.len());
    for call in calls {
        if call.transferred {
            counts.transferred += 1;
        } else if call.customer_id.is_none() && call.phone.is_none() {
            counts.missing_identity += 1;
        } else if call.abandoned {
            counts.abandoned += 1;
        } else {
            kept.push(call);
        }
    }
    counts.kept = kept.len();
    FilterOutcome { kept, counts }
}

/// Label each call with whether another call from the same family starts
/// strictly inside `(start, start + horizon)`. Single chronological sweep
/// per family.
pub fn label_recontact(
    calls: &[CallRecord],
    partition: &FamilyPartition,
    horizon_hours: u32,
) -> Result<Vec<OutcomeLabel>> {
    if horizon_hours == 0 {
        return Err(Error::config("horizon_hours must be positive"));
    }
    let horizon_secs = i64::from(horizon_hours) * 3600;

    // Group call indices by family.
    let mut by_family: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, call) in calls.iter().enumerate() {
        let fam = partition.family_of(&call.call_id).ok_or_else(|| {
            Error::data(format!(
                "call {:?} is not resolvable to a family",
                call.call_id
            ))
        })?;
        by_family.entry(fam).or_default().push(i);
    }

    let mut labels: Vec<Option<bool>> = vec![None; calls.len()];
    for indices in by_family.values() {
        let mut order: Vec<usize> = indices.clone();
        order.sort_by_key(|&i| (calls[i].start_time, i));
        // next_strict[j]: first position after j with a strictly later start.
        let m = order.len();
        let mut next_strict: Vec<Option<usize>> = vec![None; m];
        for j in (0..m.saturating_sub(1)).rev() {
            next_strict[j] = if calls[order[j + 1]].start_time > calls[order[j]].start_time {
                Some(j + 1)
            } else {
                next_strict[j + 1]
            };
        }
        for (j, &i) in order.iter().enumerate() {
            let recontact = match next_strict[j] {
                Some(k) => calls[order[k]].start_time - calls[i].start_time < horizon_secs,
                None => false,
            };
            labels[i] = Some(recontact);
        }
    }

    Ok(calls
        .iter()
        .zip(labels)
        .map(|(c, l)| OutcomeLabel {
            call_id: c.call_id.clone(),
            recontact: l.unwrap_or(false),
            horizon_hours,
        })
        .collect())
}
