//! Host side of the Blender execution harness.
//!
//! A persistent headless Blender process runs a small shim that speaks
//! newline-delimited JSON on stdio. This crate owns the wire records, the
//! process supervisor, camera placement for multi-view renders and a pure
//! software fake worker so everything above it can be tested without Blender.

pub mod camera;
pub mod fake;
pub mod outcome;
pub mod protocol;
pub mod runtime;
pub mod worker;

pub use camera::{plan_cameras, BBox, CameraError, CameraPlan, ViewAngle, FALLBACK_DISTANCE};
pub use fake::{FakeRuntime, FakeScene};
pub use outcome::{ErrorKind, ExecutionError, ExecutionOutcome};
pub use protocol::{Command, RenderedView, ResponseData, WireError, WireRequest, WireResponse};
pub use runtime::{RenderError, RenderOutput, SceneRuntime};
pub use worker::{start_worker, Worker, WorkerConfig, WorkerStartError, WorkerState};
