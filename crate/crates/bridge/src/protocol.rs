//! NDJSON wire records exchanged with the in-Blender shim.
//!
//! Every record is one JSON object on one line. Requests carry an `op` and an
//! optional `payload`; each request gets exactly one response with the same
//! `id`. The worker announces itself with an unsolicited response of id 0
//! carrying the handshake token and Blender version.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::camera::{BBox, CameraPlan};

/// Id used by the worker's startup handshake line.
pub const HANDSHAKE_ID: i64 = 0;
/// Id the worker uses when it cannot parse the request line.
pub const UNPARSEABLE_ID: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: i64,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "payload", rename_all = "lowercase")]
pub enum Command {
    Ping,
    Exec { code: String },
    Render { plan: CameraPlan, resolution: u32, out_dir: PathBuf },
    Reset,
}

impl Command {
    pub fn op_name(&self) -> &'static str {
        match self {
            Command::Ping => "ping",
            Command::Exec { .. } => "exec",
            Command::Render { .. } => "render",
            Command::Reset => "reset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    #[serde(rename = "type")]
    pub kind: String,
    pub message: String,
    #[serde(default)]
    pub traceback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedView {
    pub path: PathBuf,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub camera_distance: f64,
}

/// Op-specific extras: handshake identity, scene bounds after exec/render,
/// and per-view records for renders.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResponseData {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handshake: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blender_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views: Option<Vec<RenderedView>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub id: i64,
    pub ok: bool,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    #[serde(default)]
    pub error: Option<WireError>,
    #[serde(default)]
    pub artifacts: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<ResponseData>,
}

impl WireResponse {
    pub fn ok(id: i64) -> Self {
        Self {
            id,
            ok: true,
            stdout: String::new(),
            stderr: String::new(),
            error: None,
            artifacts: Vec::new(),
            data: None,
        }
    }

    pub fn err(id: i64, kind: &str, message: impl Into<String>, traceback: Option<String>) -> Self {
        Self {
            ok: false,
            error: Some(WireError { kind: kind.to_owned(), message: message.into(), traceback }),
            ..Self::ok(id)
        }
    }
}

/// Serializes a record as one protocol line, newline included.
pub fn encode_line<T: Serialize>(record: &T) -> String {
    let mut line = serde_json::to_string(record).expect("wire records always serialize");
    line.push('\n');
    line
}

pub fn decode_request(line: &str) -> Result<WireRequest, serde_json::Error> {
    serde_json::from_str(line.trim_end_matches(['\n', '\r']))
}

pub fn decode_response(line: &str) -> Result<WireResponse, serde_json::Error> {
    serde_json::from_str(line.trim_end_matches(['\n', '\r']))
}
