//! Domain types, the append-only event log and the context projection.

mod context;
mod event;
mod mask;
mod state;
mod store;
mod types;

pub use context::{assemble_context, open_critique_items, open_refinement_items, CodeSlot, ContextBundle, ContextMessage, OpenItem};
pub use event::{ErrorCategory, Event, EventKind, Payload, Reason, RetrievalKind, RetrievalRecord, RetrievedChunk, SessionInit, Step};
pub use mask::{mask_value, masked_event, normalize_ndjson, normalized_log, MASKED_KEYS};
pub use state::{SessionState, StateError};
pub use store::{append_event, load_state, read_events, Clock, Observer, SessionError, SessionLog, StepClock, SystemClock, EVENTS_FILE, SNAPSHOT_FILE};
pub use types::*;
