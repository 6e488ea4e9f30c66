//! Estimation-ready panel construction: time-span fixed effects, baseline
//! covariate encoding, normalized satisfaction scores, and cluster ids.
//!
//! Spans are half-open windows of equal length counted from a midnight
//! origin. Conditioning on them is what makes agent availability
//! quasi-random in a multi-queue operation, so everything downstream keys
//! on the span assignment produced here.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::family::FamilyPartition;
use crate::ingest::{CallRecord, OutcomeLabel};
use crate::linalg::Mat;
use crate::{time, Error, Result};

/// Assignment of calls to equal-length time spans.
#[derive(Debug, Clone)]
pub struct TimeSpanIndex {
    pub window_minutes: u32,
    /// UTC epoch seconds; spans are [origin + k·w, origin + (k+1)·w).
    pub origin: i64,
    span_by_call: BTreeMap<String, u64>,
    pub nonempty_spans: usize,
    pub mean_calls_per_span: f64,
}

impl TimeSpanIndex {
    pub fn span_of(&self, call_id: &str) -> Option<u64> {
        self.span_by_call.get(call_id).copied()
    }

    pub fn span_of_time(&self, start_time: i64) -> u64 {
        ((start_time - self.origin) / (i64::from(self.window_minutes) * 60)) as u64
    }
}

/// Assign every call to its span ordinal: floor((start − origin) / window).
pub fn assign_spans(
    calls: &[CallRecord],
    window_minutes: u32,
    origin: i64,
) -> Result<TimeSpanIndex> {
    if window_minutes == 0 {
        return Err(Error::config("window_minutes must be positive"));
    }
    let width = i64::from(window_minutes) * 60;
    let mut span_by_call = BTreeMap::new();
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    for call in calls {
        if call.start_time < origin {
            return Err(Error::data(format!(
                "call {:?} starts at {} before the span origin {}",
                call.call_id,
                time::format_utc(call.start_time),
                time::format_utc(origin)
            )));
        }
        let span = ((call.start_time - origin) / width) as u64;
        span_by_call.insert(call.call_id.clone(), span);
        seen.insert(span);
    }
    let nonempty = seen.len();
    let mean = if nonempty == 0 {
        0.0
    } else {
        calls.len() as f64 / nonempty as f64
    };
    Ok(TimeSpanIndex {
        window_minutes,
        origin,
        span_by_call,
        nonempty_spans: nonempty,
        mean_calls_per_span: mean,
    })
}

/// Midnight UTC of the earliest call; the default span origin.
pub fn default_origin(calls: &[CallRecord]) -> Option<i64> {
    calls
        .iter()
        .map(|c| c.start_time)
        .min()
        .map(time::floor_to_midnight)
}

/// Which self-reported experience measure plays the endogenous regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Score {
    Csat,
    Fcr,
}

impl Score {
    pub fn label(self) -> &'static str {
        match self {
            Score::Csat => "csat",
            Score::Fcr => "fcr",
        }
    }
}

/// Outcome column selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Recontact label at the horizon carried by the supplied labels.
    Recontact,
    /// A named boolean outcome flag (claims_7d, refund_request, ...).
    Flag(String),
}

impl Outcome {
    pub fn label(&self) -> String {
        match self {
            Outcome::Recontact => "recontact".to_string(),
            Outcome::Flag(name) => name.clone(),
        }
    }
}

/// Estimation-ready arrays. All columns share a length; rows are the
/// surveyed, score-bearing, non-agency calls in input order.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub y: Vec<f64>,
    /// Endogenous score, normalized to [0, 1] (CSAT / 5; FCR as 0/1).
    pub sat: Vec<f64>,
    /// Baseline covariates (one-hot categoricals plus numeric columns).
    pub w: Mat,
    pub w_names: Vec<String>,
    /// Dense span ids, order-stable in chronology.
    pub span_ids: Vec<u32>,
    pub n_spans: usize,
    /// Dense agent ids; `agent_names[agent_ids[i]]` recovers the label.
    pub agent_ids: Vec<u32>,
    pub agent_names: Vec<String>,
    /// Cluster assignments; default agent and span factors.
    pub cluster_agent: Vec<u32>,
    pub cluster_span: Vec<u32>,
    /// Dense calendar-day ids, for autocorrelation-aware diagnostics.
    pub day_ids: Vec<u32>,
    pub row_call_ids: Vec<String>,
    /// Reference levels dropped from the one-hot blocks.
    pub ref_market: String,
    pub ref_tier: String,
    pub score: Score,
    pub outcome_name: String,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// Delimited dump (header + rows) for cross-checking in external tools.
    pub fn to_delimited(&self, delimiter: char) -> String {
        let d = delimiter;
        let mut out = String::new();
        out.push_str(&format!("call_id{d}y{d}sat{d}span_id{d}agent_id"));
        for name in &self.w_names {
            out.push(d);
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.n_rows() {
            out.push_str(&format!(
                "{}{d}{}{d}{}{d}{}{d}{}",
                self.row_call_ids[i],
                self.y[i],
                self.sat[i],
                self.span_ids[i],
                self.agent_names[self.agent_ids[i] as usize]
            ));
            for j in 0..self.w.cols() {
                out.push(d);
                out.push_str(&format!("{}", self.w.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Pick the reference level: most frequent, ties to the lexicographically
/// smallest so the choice is deterministic.
fn reference_level(counts: &BTreeMap<&str, usize>) -> String {
    let mut best: Option<(&str, usize)> = None;
    for (level, &count) in counts {
        match best {
            Some((_, c)) if count <= c => {}
            _ => best = Some((level, count)),
        }
    }
    best.map(|(l, _)| l.to_string()).unwrap_or_default()
}

/// Build the estimation arrays for one outcome/score pair.
///
/// Rows are restricted to surveyed calls with a non-missing score whose
/// family is not agency-flagged. Categorical covariates are one-hot
/// encoded against the most frequent reference level; span ids are
/// dense-renumbered preserving chronological order.
pub fn build_design(
    calls: &[CallRecord],
    labels: &[OutcomeLabel],
    spans: &TimeSpanIndex,
    partition: &FamilyPartition,
    agency_families: &BTreeSet<String>,
    outcome: &Outcome,
    score: Score,
) -> Result<DesignMatrix> {
    if let Outcome::Flag(name) = outcome {
        let known: BTreeSet<&str> = calls
            .iter()
            .flat_map(|c| c.outcome_flags.keys().map(String::as_str))
            .collect();
        if !known.contains(name.as_str()) {
            let mut available: Vec<&str> = known.into_iter().collect();
            available.sort_unstable();
            return Err(Error::config(format!(
                "unknown outcome {name:?}; available outcomes: recontact, {}",
                available.join(", ")
            )));
        }
    }
    let label_by_call: BTreeMap<&str, bool> = labels
        .iter()
        .map(|l| (l.call_id.as_str(), l.recontact))
        .collect();

    // Row selection.
    let mut rows: Vec<&CallRecord> = vec![];
    for call in calls {
        if !call.surveyed {
            continue;
        }
        let has_score = match score {
            Score::Csat => call.csat.is_some(),
            Score::Fcr => call.fcr.is_some(),
        };
        if !has_score {
            continue;
        }
        if let Some(fam) = partition.family_of(&call.call_id) {
            if agency_families.contains(fam) {
                continue;
            }
        }
        rows.push(call);
    }

    let n = rows.len();
    let mut y = Vec::with_capacity(n);
    let mut sat = Vec::with_capacity(n);
    for call in &rows {
        let value = match outcome {
            Outcome::Recontact => {
                let label = label_by_call.get(call.call_id.as_str()).ok_or_else(|| {
                    Error::data(format!("no recontact label for call {:?}", call.call_id))
                })?;
                f64::from(u8::from(*label))
            }
            Outcome::Flag(name) => f64::from(u8::from(call.flag(name))),
        };
        y.push(value);
        sat.push(match score {
            Score::Csat => f64::from(call.csat.unwrap()) / 5.0,
            Score::Fcr => f64::from(u8::from(call.fcr.unwrap())),
        });
    }

    // Dense span renumbering, chronology-stable because raw ordinals are
    // already chronological.
    let mut raw_spans = Vec::with_capacity(n);
    for call in &rows {
        let span = spans.span_of(&call.call_id).ok_or_else(|| {
            Error::data(format!("call {:?} has no span assignment", call.call_id))
        })?;
        raw_spans.push(span);
    }
    let distinct: BTreeSet<u64> = raw_spans.iter().copied().collect();
    let dense_of: BTreeMap<u64, u32> = distinct
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i as u32))
        .collect();
    let span_ids: Vec<u32> = raw_spans.iter().map(|s| dense_of[s]).collect();

    // Dense agent ids, sorted by agent label.
    let agent_set: BTreeSet<&str> = rows.iter().map(|c| c.agent_id.as_str()).collect();
    let agent_names: Vec<String> = agent_set.iter().map(|s| s.to_string()).collect();
    let agent_index: BTreeMap<&str, u32> = agent_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32))
        .collect();
    let agent_ids: Vec<u32> = rows
        .iter()
        .map(|c| agent_index[c.agent_id.as_str()])
        .collect();

    // Baseline covariates: one-hot market and tier, numeric log-hours and
    // bookings.
    let mut market_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut tier_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for call in &rows {
        *market_counts.entry(call.market.as_str()).or_default() += 1;
        *tier_counts.entry(call.ffp_tier.as_str()).or_default() += 1;
    }
    let ref_market = reference_level(&market_counts);
    let ref_tier = reference_level(&tier_counts);

    let mut w_cols: Vec<Vec<f64>> = vec![];
    let mut w_names: Vec<String> = vec![];
    for level in market_counts.keys() {
        if *level == ref_market {
            continue;
        }
        w_names.push(format!("market:{level}"));
        w_cols.push(
            rows.iter()
                .map(|c| f64::from(u8::from(c.market == *level)))
                .collect(),
        );
    }
    for level in tier_counts.keys() {
        if *level == ref_tier {
            continue;
        }
        w_names.push(format!("tier:{level}"));
        w_cols.push(
            rows.iter()
                .map(|c| f64::from(u8::from(c.ffp_tier == *level)))
                .collect(),
        );
    }
    w_names.push("log_hours_from_last_call".to_string());
    w_cols.push(rows.iter().map(|c| c.log_hours_from_last_call).collect());
    w_names.push("bookings_past_12m".to_string());
    w_cols.push(
        rows.iter()
            .map(|c| f64::from(c.bookings_past_12m))
            .collect(),
    );

    let w = if n == 0 {
        Mat::zeros(0, w_cols.len())
    } else {
        Mat::from_cols(&w_cols)
    };

    let day_ids = {
        let raw: Vec<i64> = rows
            .iter()
            .map(|c| c.start_time.div_euclid(86_400))
            .collect();
        let levels: BTreeMap<i64, u32> = {
            let mut d = raw.clone();
            d.sort_unstable();
            d.dedup();
            d.into_iter()
                .enumerate()
                .map(|(i, v)| (v, i as u32))
                .collect()
        };
        raw.into_iter().map(|d| levels[&d]).collect()
    };

    Ok(DesignMatrix {
        y,
        sat,
        w,
        w_names,
        n_spans: distinct.len(),
        cluster_agent: agent_ids.clone(),
        cluster_span: span_ids.clone(),
        day_ids,
        span_ids,
        agent_ids,
        agent_names,
        row_call_ids: rows.iter().map(|c| c.call_id.clone()).collect(),
        ref_market,
        ref_tier,
        score,
        outcome_name: outcome.label(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::build_partition;
    use crate::ingest::test_support::call;

    const T0: i64 = 1_677_628_800; // 2023-03-01T00:00:00Z, a midnight

    fn fixture_calls() -> Vec<CallRecord> {
        // 20 calls, 10 minutes apart; every fourth is unsurveyed.
        (0..20)
            .map(|i| {
                let mut c = call(&format!("c{i:02}"), Some(&format!("cust{i}")), None);
                c.start_time = T0 + i as i64 * 600;
                c.agent_id = if i % 2 == 0 {
                    "A".to_string()
                } else {
                    "B".to_string()
                };
                c.surveyed = i % 4 != 3;
                if c.surveyed {
                    c.csat = Some((i % 6) as u8);
                    c.fcr = Some(i % 2 == 0);
                }
                c.market = ["ES", "ES", "CO", "PE"][i % 4].to_string();
                c.ffp_tier = "D".to_string();
                c.log_hours_from_last_call = i as f64 * 0.1;
                c.bookings_past_12m = (i % 3) as u32;
                c
            })
            .collect()
    }

    fn fixture_labels(calls: &[CallRecord]) -> Vec<OutcomeLabel> {
        calls
            .iter()
            .enumerate()
            .map(|(i, c)| OutcomeLabel {
                call_id: c.call_id.clone(),
                recontact: i % 2 == 0,
                horizon_hours: 24,
            })
            .collect()
    }

    fn build_fixture_design(score: Score) -> DesignMatrix {
        let calls = fixture_calls();
        let labels = fixture_labels(&calls);
        let spans = assign_spans(&calls, 20, T0).unwrap();
        let part = build_partition(&calls);
        build_design(
            &calls,
            &labels,
            &spans,
            &part,
            &BTreeSet::new(),
            &Outcome::Recontact,
            score,
        )
        .unwrap()
    }

    #[test]
    fn span_floor_arithmetic() {
        // Start 00:25 with 20-minute windows from midnight lands in span 1.
        let mut c = call("x", Some("c"), None);
        c.start_time = T0 + 25 * 60;
        let idx = assign_spans(&[c], 20, T0).unwrap();
        assert_eq!(idx.span_of("x"), Some(1));
    }

    #[test]
    fn span_boundary_is_half_open() {
        let mut c = call("x", Some("c"), None);
        c.start_time = T0 + 20 * 60;
        let idx = assign_spans(&[c], 20, T0).unwrap();
        assert_eq!(idx.span_of("x"), Some(1));
        let mut c = call("x", Some("c"), None);
        c.start_time = T0 + 20 * 60 - 1;
        let idx = assign_spans(&[c], 20, T0).unwrap();
        assert_eq!(idx.span_of("x"), Some(0));
    }

    #[test]
    fn span_stats_and_errors() {
        let calls = fixture_calls();
        let idx = assign_spans(&calls, 20, T0).unwrap();
        // 20 calls, 10 min apart: spans 0..=9 all occupied, 2 calls each.
        assert_eq!(idx.nonempty_spans, 10);
        assert!((idx.mean_calls_per_span - 2.0).abs() < 1e-12);

        assert!(assign_spans(&calls, 0, T0).is_err());
        let err = assign_spans(&calls, 20, T0 + 86_400).unwrap_err();
        assert!(format!("{err}").contains("before the span origin"));
    }

    #[test]
    fn spans_translation_consistent() {
        let calls = fixture_calls();
        let base = assign_spans(&calls, 20, T0).unwrap();
        let offset = 7 * 86_400 + 3600;
        let shifted: Vec<CallRecord> = calls
            .iter()
            .map(|c| {
                let mut s = c.clone();
                s.start_time += offset;
                s
            })
            .collect();
        let moved = assign_spans(&shifted, 20, T0 + offset).unwrap();
        for c in &calls {
            assert_eq!(base.span_of(&c.call_id), moved.span_of(&c.call_id));
        }
    }

    #[test]
    fn sample_restriction_counts() {
        // 20 calls, 5 unsurveyed.
        assert_eq!(build_fixture_design(Score::Csat).n_rows(), 15);
    }

    #[test]
    fn golden_design_matrix() {
        let design = build_fixture_design(Score::Csat);

        // Kept rows are i in {0,1,2,4,5,6,8,9,10,12,13,14,16,17,18}.
        // y = 1 for even i.
        let y_expected = [
            1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0,
        ];
        // sat = (i % 6) / 5.
        let sat_expected = [
            0.0, 0.2, 0.4, 0.8, 1.0, 0.0, 0.4, 0.6, 0.8, 0.0, 0.2, 0.4, 0.8, 1.0, 0.0,
        ];
        // span = i / 2 (raw ordinals are already dense here).
        let span_expected = [0u32, 0, 1, 2, 2, 3, 4, 4, 5, 6, 6, 7, 8, 8, 9];
        // agents alternate A (even i) and B (odd i); A sorts first.
        let agent_expected = [0u32, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0];
        assert_eq!(design.y, y_expected);
        assert_eq!(design.sat, sat_expected);
        assert_eq!(design.span_ids, span_expected);
        assert_eq!(design.n_spans, 10);
        assert_eq!(design.agent_ids, agent_expected);
        assert_eq!(
            design.agent_names,
            alloc::vec!["A".to_string(), "B".to_string()]
        );

        // Markets among kept rows: ES x10, CO x5, PE never (only on
        // unsurveyed calls). Reference is ES, so a single CO column.
        // Tier is constant, so it contributes no columns.
        assert_eq!(design.ref_market, "ES");
        assert_eq!(design.ref_tier, "D");
        assert_eq!(
            design.w_names,
            alloc::vec![
                "market:CO".to_string(),
                "log_hours_from_last_call".to_string(),
                "bookings_past_12m".to_string()
            ]
        );
        let co_expected = [
            0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0,
        ];
        let log_hours_expected = [
            0.0, 0.1, 0.2, 0.4, 0.5, 0.6, 0.8, 0.9, 1.0, 1.2, 1.3, 1.4, 1.6, 1.7, 1.8,
        ];
        let bookings_expected = [
            0.0, 1.0, 2.0, 1.0, 2.0, 0.0, 2.0, 0.0, 1.0, 0.0, 1.0, 2.0, 1.0, 2.0, 0.0,
        ];
        assert_eq!(design.w.col(0), co_expected);
        for (got, want) in design.w.col(1).iter().zip(log_hours_expected) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(design.w.col(2), bookings_expected);
    }

    #[test]
    fn csat_normalization_endpoints() {
        let design = build_fixture_design(Score::Csat);
        // Call c05 has csat 5 -> 1.0; call c00 has csat 0 -> 0.0.
        let idx5 = design.row_call_ids.iter().position(|c| c == "c05").unwrap();
        let idx0 = design.row_call_ids.iter().position(|c| c == "c00").unwrap();
        assert_eq!(design.sat[idx5], 1.0);
        assert_eq!(design.sat[idx0], 0.0);
    }

    #[test]
    fn one_hot_rows_have_at_most_one_indicator() {
        let design = build_fixture_design(Score::Csat);
        let market_cols: Vec<usize> = design
            .w_names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with("market:"))
            .map(|(i, _)| i)
            .collect();
        for i in 0..design.n_rows() {
            let ones: f64 = market_cols.iter().map(|&j| design.w.get(i, j)).sum();
            assert!(ones == 0.0 || ones == 1.0);
        }
    }

    #[test]
    fn unknown_outcome_lists_available() {
        let calls = fixture_calls();
        let labels = fixture_labels(&calls);
        let spans = assign_spans(&calls, 20, T0).unwrap();
        let part = build_partition(&calls);
        let err = build_design(
            &calls,
            &labels,
            &spans,
            &part,
            &BTreeSet::new(),
            &Outcome::Flag("no_such".to_string()),
            Score::Csat,
        )
        .unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("no_such"));
        assert!(msg.contains("recontact"));
    }

    #[test]
    fn agency_families_are_excluded() {
        let calls = fixture_calls();
        let labels = fixture_labels(&calls);
        let spans = assign_spans(&calls, 20, T0).unwrap();
        let part = build_partition(&calls);
        let mut agencies = BTreeSet::new();
        agencies.insert(part.family_of("c00").unwrap().to_string());
        let design = build_design(
            &calls,
            &labels,
            &spans,
            &part,
            &agencies,
            &Outcome::Recontact,
            Score::Csat,
        )
        .unwrap();
        assert_eq!(design.n_rows(), 14);
        assert!(!design.row_call_ids.iter().any(|c| c == "c00"));
    }

    #[test]
    fn fcr_score_selection() {
        let design = build_fixture_design(Score::Fcr);
        for (i, id) in design.row_call_ids.iter().enumerate() {
            let idx: usize = id[1..].parse().unwrap();
            assert_eq!(design.sat[i], f64::from(u8::from(idx % 2 == 0)));
        }
    }
}
