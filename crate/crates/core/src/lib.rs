//! Course-telemetry analytics.
//!
//! Turns a course structure document, clickstream event logs, instructor
//! tag files, and grade tables into learning-objective-level engagement and
//! performance statistics, with deterministic CSV/JSON tables and static
//! SVG/HTML reports. A seed-reproducible synthetic generator provides
//! fixtures with exact ground truth.

pub mod analytics;
pub mod course;
pub mod events;
pub mod grades;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod synth;
pub mod tags;

/// Concrete scalar used by the pipeline; the statistics kernel itself is
/// generic over the float type.
pub type Scalar = f64;

/// Box summary over pipeline scalars.
pub type BoxSummary = stats::BoxStats<Scalar>;

pub use course::{ContentModule, CourseError, CourseTree};
pub use events::{AttributedDwell, DwellSegment, EventRecord, IngestStats, TerminalDwell};
pub use grades::{FinalGrade, LoGrade, SubsectionGrade};
pub use tags::{BloomLevel, LearningObjective, LoRegistry, TagMap, TagRecord};
