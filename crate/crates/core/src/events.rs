//! Clickstream ingestion: ndjson parsing, per-learner ordering, dwell
//! sessionization under the break rule, and attribution to course modules.
//!
//! Dwell is carried as integer milliseconds end to end so that totals are
//! conserved exactly regardless of summation order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::course::CourseTree;

/// One parsed clickstream event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub learner_id: String,
    /// Epoch milliseconds, UTC.
    pub timestamp_ms: i64,
    pub event_type: String,
    pub module_ref: Option<String>,
    pub source: EventSource,
    /// Ingestion sequence number across all input files.
    pub line_no: u64,
}

impl EventRecord {
    pub fn timestamp(&self) -> DateTime<Utc> {
        DateTime::<Utc>::from_timestamp_millis(self.timestamp_ms).expect("in-range timestamp")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    #[default]
    Browser,
    Server,
    Mobile,
}

/// Why a line was skipped during ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SkipReason {
    Malformed,
    MissingLearner,
    BadTimestamp,
    MissingEventType,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::Malformed => "malformed",
            SkipReason::MissingLearner => "missing_learner",
            SkipReason::BadTimestamp => "bad_timestamp",
            SkipReason::MissingEventType => "missing_event_type",
        }
    }
}

/// One attributed dwell interval. `dwell_ms` never exceeds the break
/// threshold; `module_id` is `None` when the event reference did not resolve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DwellSegment {
    pub learner_id: String,
    pub module_id: Option<String>,
    pub start_ms: i64,
    pub dwell_ms: u64,
}

impl DwellSegment {
    pub fn dwell_s(&self) -> f64 {
        self.dwell_ms as f64 / 1000.0
    }
}

/// How to value the dwell of terminal and break-ending events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TerminalDwell {
    /// The gap to the next activity is unknown; count nothing (default).
    #[default]
    Zero,
    /// Sensitivity variant: cap at the break threshold instead.
    Cap,
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("events for learner '{learner}' are not sorted at index {index}")]
    UnsortedInput { learner: String, index: usize },
    #[error("cannot read event log '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Counters accumulated while ingesting event logs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub lines_total: u64,
    pub parsed: u64,
    pub skipped_malformed: u64,
    pub skipped_missing_learner: u64,
    pub skipped_bad_timestamp: u64,
    pub skipped_missing_event_type: u64,
    pub excluded_learner_events: u64,
    pub deduplicated: u64,
    /// Events arriving with a timestamp earlier than the previous event of
    /// the same learner, in file order.
    pub out_of_order: u64,
}

impl IngestStats {
    pub fn skipped_total(&self) -> u64 {
        self.skipped_malformed
            + self.skipped_missing_learner
            + self.skipped_bad_timestamp
            + self.skipped_missing_event_type
    }

    fn count_skip(&mut self, reason: SkipReason) {
        match reason {
            SkipReason::Malformed => self.skipped_malformed += 1,
            SkipReason::MissingLearner => self.skipped_missing_learner += 1,
            SkipReason::BadTimestamp => self.skipped_bad_timestamp += 1,
            SkipReason::MissingEventType => self.skipped_missing_event_type += 1,
        }
    }
}

#[derive(serde::Deserialize)]
struct RawEvent {
    username: Option<String>,
    time: Option<String>,
    event_type: Option<String>,
    page: Option<String>,
    event: Option<serde_json::Value>,
    event_source: Option<String>,
}

/// Parse one ndjson line. Invalid lines yield a categorized skip; the stream
/// is never aborted by a bad line.
pub fn parse_event_line(line: &str, line_no: u64) -> Result<EventRecord, SkipReason> {
    let line = line.trim();
    if line.is_empty() {
        return Err(SkipReason::Malformed);
    }
    let raw: RawEvent = serde_json::from_str(line).map_err(|_| SkipReason::Malformed)?;

    let learner_id = match raw.username {
        Some(u) if !u.trim().is_empty() => u.trim().to_string(),
        _ => return Err(SkipReason::MissingLearner),
    };
    // Timestamps must carry an explicit offset; naive local times are skipped.
    let timestamp_ms = raw
        .time
        .as_deref()
        .and_then(|t| DateTime::parse_from_rfc3339(t).ok())
        .map(|t| t.with_timezone(&Utc).timestamp_millis())
        .ok_or(SkipReason::BadTimestamp)?;
    let event_type = match raw.event_type {
        Some(t) if !t.is_empty() => t,
        _ => return Err(SkipReason::MissingEventType),
    };

    let module_ref = raw.page.filter(|p| !p.is_empty()).or_else(|| {
        raw.event
            .as_ref()
            .and_then(|e| e.get("id"))
            .and_then(|id| id.as_str())
            .map(str::to_string)
    });
    let source = match raw.event_source.as_deref() {
        Some("server") => EventSource::Server,
        Some("mobile") => EventSource::Mobile,
        _ => EventSource::Browser,
    };

    Ok(EventRecord {
        learner_id,
        timestamp_ms,
        event_type,
        module_ref,
        source,
        line_no,
    })
}

/// Read one event-log stream (ndjson; gzip-compressed when `gzipped`),
/// appending parsed records and updating counters. `exclusions` drops
/// course-staff learner ids.
pub fn read_event_stream<R: Read>(
    reader: R,
    gzipped: bool,
    exclusions: &HashSet<String>,
    stats: &mut IngestStats,
    records: &mut Vec<EventRecord>,
) -> std::io::Result<()> {
    let reader: Box<dyn BufRead> = if gzipped {
        Box::new(BufReader::new(flate2::read::GzDecoder::new(reader)))
    } else {
        Box::new(BufReader::new(reader))
    };
    for line in reader.lines() {
        let line = line?;
        let line_no = stats.lines_total;
        stats.lines_total += 1;
        match parse_event_line(&line, line_no) {
            Ok(rec) => {
                if exclusions.contains(&rec.learner_id) {
                    stats.excluded_learner_events += 1;
                } else {
                    stats.parsed += 1;
                    records.push(rec);
                }
            }
            Err(reason) => stats.count_skip(reason),
        }
    }
    Ok(())
}

/// Parse an exclusion list: one learner id per line, blank lines ignored.
pub fn parse_exclusion_list(contents: &str) -> HashSet<String> {
    contents
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// An event after per-learner ordering; the ingestion line number has served
/// its purpose by then.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderedEvent {
    pub timestamp_ms: i64,
    pub event_type: String,
    pub module_ref: Option<String>,
    pub source: EventSource,
}

/// Partition records per learner, order each partition, and collapse exact
/// duplicates (same learner, timestamp, event type, and module reference).
///
/// Ordering ties on identical timestamps break by event content rather than
/// arrival position, so the result is invariant under input-line permutation.
pub fn partition_and_sort(
    records: Vec<EventRecord>,
    stats: &mut IngestStats,
) -> BTreeMap<String, Vec<OrderedEvent>> {
    let mut partitions: BTreeMap<String, Vec<EventRecord>> = BTreeMap::new();
    let mut last_seen: HashMap<String, i64> = HashMap::new();
    for rec in records {
        if let Some(&prev) = last_seen.get(&rec.learner_id) {
            if rec.timestamp_ms < prev {
                stats.out_of_order += 1;
            }
        }
        last_seen.insert(rec.learner_id.clone(), rec.timestamp_ms);
        partitions.entry(rec.learner_id.clone()).or_default().push(rec);
    }

    let mut out = BTreeMap::new();
    for (learner, mut events) in partitions {
        events.sort_by(|a, b| {
            (a.timestamp_ms, &a.event_type, &a.module_ref, a.line_no).cmp(&(
                b.timestamp_ms,
                &b.event_type,
                &b.module_ref,
                b.line_no,
            ))
        });
        let mut ordered: Vec<OrderedEvent> = Vec::with_capacity(events.len());
        for e in events {
            if let Some(last) = ordered.last() {
                if last.timestamp_ms == e.timestamp_ms
                    && last.event_type == e.event_type
                    && last.module_ref == e.module_ref
                {
                    stats.deduplicated += 1;
                    continue;
                }
            }
            ordered.push(OrderedEvent {
                timestamp_ms: e.timestamp_ms,
                event_type: e.event_type,
                module_ref: e.module_ref,
                source: e.source,
            });
        }
        out.insert(learner, ordered);
    }
    out
}

/// Caching reference resolver over a course tree.
///
/// Resolution of a distinct reference string is computed once; the pipeline
/// pre-resolves the unique references of a partition before sessionizing.
pub struct RefResolver<'a> {
    tree: &'a CourseTree,
    cache: HashMap<String, Option<String>>,
}

impl<'a> RefResolver<'a> {
    pub fn new(tree: &'a CourseTree) -> Self {
        RefResolver {
            tree,
            cache: HashMap::new(),
        }
    }

    pub fn resolve(&mut self, reference: &str) -> Option<String> {
        if let Some(hit) = self.cache.get(reference) {
            return hit.clone();
        }
        let resolved = self.tree.resolve_event_ref(reference).map(str::to_string);
        self.cache.insert(reference.to_string(), resolved.clone());
        resolved
    }

    /// References that never resolved, with occurrence handled by the caller.
    pub fn unresolved(&self) -> impl Iterator<Item = &str> {
        self.cache
            .iter()
            .filter(|(_, v)| v.is_none())
            .map(|(k, _)| k.as_str())
    }
}

/// Split one learner's ordered events into dwell segments.
///
/// For consecutive events with gap `d`: `d <= break_s` attributes `d` to the
/// earlier event; a longer gap is a break and the earlier event gets the
/// terminal dwell. The final event always gets the terminal dwell.
/// `resolve` maps a module reference to a module id.
pub fn sessionize(
    learner_id: &str,
    events: &[OrderedEvent],
    break_s: u64,
    terminal: TerminalDwell,
    mut resolve: impl FnMut(&str) -> Option<String>,
) -> Result<Vec<DwellSegment>, EventError> {
    let break_ms = break_s * 1000;
    let terminal_ms = match terminal {
        TerminalDwell::Zero => 0,
        TerminalDwell::Cap => break_ms,
    };
    let mut segments = Vec::with_capacity(events.len());
    for (i, event) in events.iter().enumerate() {
        let dwell_ms = match events.get(i + 1) {
            Some(next) => {
                if next.timestamp_ms < event.timestamp_ms {
                    return Err(EventError::UnsortedInput {
                        learner: learner_id.to_string(),
                        index: i + 1,
                    });
                }
                let gap = (next.timestamp_ms - event.timestamp_ms) as u64;
                if gap <= break_ms {
                    gap
                } else {
                    terminal_ms
                }
            }
            None => terminal_ms,
        };
        let module_id = event.module_ref.as_deref().and_then(&mut resolve);
        segments.push(DwellSegment {
            learner_id: learner_id.to_string(),
            module_id,
            start_ms: event.timestamp_ms,
            dwell_ms,
        });
    }
    Ok(segments)
}

/// Dwell totals per learner and module, plus the per-learner unmapped bucket.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttributedDwell {
    /// (learner, module) -> total milliseconds.
    pub by_learner_module: BTreeMap<(String, String), u64>,
    /// learner -> milliseconds on segments whose reference did not resolve.
    pub unmapped_by_learner: BTreeMap<String, u64>,
    /// learner -> total milliseconds over all segments (mapped + unmapped).
    pub total_by_learner: BTreeMap<String, u64>,
}

impl AttributedDwell {
    /// Fold another total set in; merging is order-independent because the
    /// quantities are integer milliseconds.
    pub fn merge(&mut self, other: AttributedDwell) {
        for (k, v) in other.by_learner_module {
            *self.by_learner_module.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.unmapped_by_learner {
            *self.unmapped_by_learner.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.total_by_learner {
            *self.total_by_learner.entry(k).or_insert(0) += v;
        }
    }

    pub fn grand_total_ms(&self) -> u64 {
        self.total_by_learner.values().sum()
    }

    pub fn mapped_total_ms(&self) -> u64 {
        self.by_learner_module.values().sum()
    }

    pub fn unmapped_total_ms(&self) -> u64 {
        self.unmapped_by_learner.values().sum()
    }
}

/// Sum dwell by learner and module. Segments without a module accumulate in
/// the learner's unmapped bucket; totals conserve the input exactly.
pub fn attribute(segments: &[DwellSegment]) -> AttributedDwell {
    let mut out = AttributedDwell::default();
    for seg in segments {
        *out.total_by_learner.entry(seg.learner_id.clone()).or_insert(0) += seg.dwell_ms;
        match &seg.module_id {
            Some(module) => {
                *out.by_learner_module
                    .entry((seg.learner_id.clone(), module.clone()))
                    .or_insert(0) += seg.dwell_ms;
            }
            None => {
                *out.unmapped_by_learner
                    .entry(seg.learner_id.clone())
                    .or_insert(0) += seg.dwell_ms;
            }
        }
    }
    out
}

/// Render an epoch-milliseconds instant as RFC 3339 UTC.
pub fn format_timestamp_ms(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .expect("in-range timestamp")
        .to_rfc3339_opts(SecondsFormat::Millis, true)
}
