//! Evaluation tooling for generated Blender scripts.
//!
//! Calls are pulled out of script source lexically and sorted into simple
//! and complex operations by a user-editable pattern file; sessions add
//! failed-execution counts and phase/edit timings read from their event logs.

mod error;
mod extract;
mod lex;
mod patterns;
mod report;
mod table;
mod timing;

pub use error::MetricsError;
pub use extract::{extract_calls, ExtractedCalls};
pub use patterns::{classify, Classification, MatchRule, OpClass, OpPattern, PatternSet, DEFAULT_PATTERNS};
pub use report::{analyze_session, count_failed_executions, latest_code_version, read_event_log, ScriptReport};
pub use table::{aggregate, format_average, Averages, InputSpec, MetricsRow, MetricsTable, RagLabel, AVERAGE_ROW_NAME, CSV_HEADER};
pub use timing::{phase_timing, phase_timing_for_session, EditSpan, PhaseSpan, TimingReport};
