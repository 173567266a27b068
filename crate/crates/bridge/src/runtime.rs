use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use crate::camera::{BBox, CameraPlan};
use crate::outcome::{ErrorKind, ExecutionOutcome};
use crate::protocol::RenderedView;

/// Views written by one render request, plus the scene bounds at render time.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub views: Vec<RenderedView>,
    pub bbox: BBox,
}

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("render produced no file for view(s) {0:?}")]
    MissingViews(Vec<usize>),
    #[error("worker reported render failure: {0}")]
    Worker(String),
    #[error("worker fault during render ({kind:?}): {message}")]
    Fault { kind: ErrorKind, message: String },
    #[error("cannot prepare render directory: {0}")]
    Io(String),
}

/// Anything that can run Blender scripts and render the resulting scene.
///
/// Implemented by the subprocess [`Worker`](crate::Worker) and by the in-process
/// [`FakeRuntime`](crate::FakeRuntime).
pub trait SceneRuntime: Send {
    fn execute(&mut self, source: &str, timeout: Duration) -> ExecutionOutcome;

    /// Bounds reported after the most recent exec, reset or render.
    fn scene_bbox(&self) -> BBox;

    fn render(&mut self, plan: &CameraPlan, out_dir: &Path, resolution: u32) -> Result<RenderOutput, RenderError>;

    /// Restores a factory-empty scene and a fresh script namespace.
    fn reset(&mut self) -> Result<(), RenderError>;

    fn blender_version(&self) -> &str;
}

/// Expected file name of the `k`-th view (1-based).
pub fn view_file_name(k: usize) -> String {
    format!("view{k}.png")
}

/// 1-based indices of views whose image file is absent from `out_dir`.
pub fn missing_views(out_dir: &Path, count: usize) -> Vec<usize> {
    (1..=count).filter(|k| !out_dir.join(view_file_name(*k)).is_file()).collect()
}
