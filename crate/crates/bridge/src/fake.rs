//! Pure-software stand-in for the Blender shim.
//!
//! The fake understands a tiny subset of script text: `print(...)` with a
//! literal argument, `raise Name("msg")`, `1/0`, `primitive_cube_add` and
//! `primitive_uv_sphere_add` with literal `size`/`radius`/`location`
//! arguments, plus `# fake:` directives used for fault injection:
//!
//! ```text
//! # fake: error KeyError: key "Specular" not found
//! # fake: object -1 -1 -1 1 1 1
//! # fake: sleep 2000
//! # fake: crash | malformed | wrong-id
//! # fake: drop-view 3
//! # fake: stderr some text
//! ```

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Duration;

use crate::camera::{BBox, CameraPlan};
use crate::outcome::{ErrorKind, ExecutionError, ExecutionOutcome};
use crate::protocol::{
    decode_request, encode_line, Command, RenderedView, ResponseData, WireRequest, WireResponse, HANDSHAKE_ID,
    UNPARSEABLE_ID,
};
use crate::runtime::{missing_views, view_file_name, RenderError, RenderOutput, SceneRuntime};

pub const FAKE_BLENDER_VERSION: &str = "fake-4.4.0";

/// Smallest valid PNG: one gray pixel.
pub const PLACEHOLDER_PNG: [u8; 67] = [
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00, 0x00,
    0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x00, 0x00, 0x00, 0x00, 0x3a, 0x7e, 0x9b, 0x55, 0x00, 0x00, 0x00,
    0x0a, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x68, 0x00, 0x00, 0x00, 0x82, 0x00, 0x81, 0x77, 0xcd, 0x72,
    0xb6, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82,
];

/// What the serve loop should do with one request.
#[derive(Debug, Clone, PartialEq)]
pub enum FakeReply {
    Respond(WireResponse),
    /// Sleep, then respond.
    Delayed(Duration, WireResponse),
    /// Exit the process without answering.
    Crash,
    /// Write a line that is not JSON.
    Malformed,
}

/// Scene state and script interpreter of the fake worker.
#[derive(Debug, Default, Clone)]
pub struct FakeScene {
    objects: Vec<BBox>,
    drop_views: BTreeSet<usize>,
}

#[derive(Debug, Default)]
struct ScriptRun {
    stdout: String,
    stderr: String,
    error: Option<ExecutionError>,
    sleep: Option<Duration>,
    crash: bool,
    malformed: bool,
    wrong_id: bool,
}

impl FakeScene {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bbox(&self) -> BBox {
        let mut iter = self.objects.iter();
        match iter.next() {
            None => BBox::EMPTY,
            Some(first) => iter.fold(*first, |acc, b| acc.union(b)),
        }
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn handshake(token: &str) -> WireResponse {
        WireResponse {
            data: Some(ResponseData {
                handshake: Some(token.to_owned()),
                blender_version: Some(FAKE_BLENDER_VERSION.to_owned()),
                ..Default::default()
            }),
            ..WireResponse::ok(HANDSHAKE_ID)
        }
    }

    pub fn handle(&mut self, req: &WireRequest) -> FakeReply {
        match &req.command {
            Command::Ping => FakeReply::Respond(WireResponse {
                data: Some(ResponseData {
                    blender_version: Some(FAKE_BLENDER_VERSION.to_owned()),
                    ..Default::default()
                }),
                ..WireResponse::ok(req.id)
            }),
            Command::Reset => {
                self.reset();
                FakeReply::Respond(self.with_bbox(WireResponse::ok(req.id)))
            }
            Command::Exec { code } => {
                let run = self.run_script(code);
                if run.crash {
                    return FakeReply::Crash;
                }
                if run.malformed {
                    return FakeReply::Malformed;
                }
                let id = if run.wrong_id { req.id + 1000 } else { req.id };
                let mut resp = match run.error {
                    None => WireResponse::ok(id),
                    Some(e) => WireResponse::err(id, e.kind.as_str(), e.message, e.traceback),
                };
                resp.stdout = run.stdout;
                resp.stderr = run.stderr;
                let resp = self.with_bbox(resp);
                match run.sleep {
                    Some(d) => FakeReply::Delayed(d, resp),
                    None => FakeReply::Respond(resp),
                }
            }
            Command::Render { plan, out_dir, .. } => FakeReply::Respond(self.render_response(req.id, plan, out_dir)),
        }
    }

    fn with_bbox(&self, mut resp: WireResponse) -> WireResponse {
        let data = resp.data.get_or_insert_with(Default::default);
        data.bbox = Some(self.bbox());
        resp
    }

    fn render_response(&mut self, id: i64, plan: &CameraPlan, out_dir: &Path) -> WireResponse {
        if let Err(e) = std::fs::create_dir_all(out_dir) {
            return WireResponse::err(id, "RenderError", format!("cannot create {}: {e}", out_dir.display()), None);
        }
        let dropped = std::mem::take(&mut self.drop_views);
        let mut views = Vec::new();
        let mut artifacts = Vec::new();
        for (i, angle) in plan.views.iter().enumerate() {
            let k = i + 1;
            let path = out_dir.join(view_file_name(k));
            if !dropped.contains(&k) {
                if let Err(e) = std::fs::write(&path, PLACEHOLDER_PNG) {
                    return WireResponse::err(id, "RenderError", format!("cannot write {}: {e}", path.display()), None);
                }
            }
            artifacts.push(path.clone());
            views.push(RenderedView {
                path,
                azimuth_deg: angle.azimuth_deg,
                elevation_deg: angle.elevation_deg,
                camera_distance: plan.distance,
            });
        }
        WireResponse {
            artifacts,
            data: Some(ResponseData { bbox: Some(self.bbox()), views: Some(views), ..Default::default() }),
            ..WireResponse::ok(id)
        }
    }

    fn run_script(&mut self, code: &str) -> ScriptRun {
        let mut run = ScriptRun::default();
        for (lineno, raw) in code.lines().enumerate() {
            let line = raw.trim();
            if let Some(directive) = line.strip_prefix("# fake:") {
                self.apply_directive(directive.trim(), lineno + 1, raw, &mut run);
            } else if line.starts_with('#') || line.is_empty() {
                continue;
            } else if let Some(arg) = call_argument(line, "print") {
                run.stdout.push_str(&literal_or_raw(arg));
                run.stdout.push('\n');
            } else if let Some(rest) = line.strip_prefix("raise ") {
                let (name, msg) = match rest.find('(') {
                    Some(p) => (rest[..p].trim(), literal_or_raw(call_argument(rest, &rest[..p]).unwrap_or(""))),
                    None => (rest.trim(), String::new()),
                };
                run.error = Some(script_error(lineno + 1, raw, name, &msg));
            } else if line.contains("1/0") || line.contains("1 / 0") {
                run.error = Some(script_error(lineno + 1, raw, "ZeroDivisionError", "division by zero"));
            } else if line.contains("primitive_cube_add") {
                let size = keyword_number(line, "size").unwrap_or(2.0);
                let loc = keyword_vector(line, "location").unwrap_or([0.0; 3]);
                self.objects.push(centered(loc, [size / 2.0; 3]));
            } else if line.contains("primitive_uv_sphere_add") {
                let radius = keyword_number(line, "radius").unwrap_or(1.0);
                let loc = keyword_vector(line, "location").unwrap_or([0.0; 3]);
                self.objects.push(centered(loc, [radius; 3]));
            }
            if run.error.is_some() || run.crash || run.malformed {
                break;
            }
        }
        run
    }

    fn apply_directive(&mut self, directive: &str, lineno: usize, raw: &str, run: &mut ScriptRun) {
        let (verb, rest) = directive.split_once(' ').unwrap_or((directive, ""));
        let rest = rest.trim();
        match verb {
            "sleep" => run.sleep = rest.parse().ok().map(Duration::from_millis),
            "crash" => run.crash = true,
            "malformed" => run.malformed = true,
            "wrong-id" => run.wrong_id = true,
            "stderr" => {
                run.stderr.push_str(rest);
                run.stderr.push('\n');
            }
            "drop-view" => {
                if let Ok(k) = rest.parse() {
                    self.drop_views.insert(k);
                }
            }
            "object" => {
                let nums: Vec<f64> = rest.split_whitespace().filter_map(|t| t.parse().ok()).collect();
                if nums.len() == 6 {
                    self.objects.push(BBox::new([nums[0], nums[1], nums[2]], [nums[3], nums[4], nums[5]]));
                }
            }
            "error" => {
                let (name, msg) = rest.split_once(':').unwrap_or((rest, ""));
                run.error = Some(script_error(lineno, raw, name.trim(), msg.trim()));
            }
            _ => {}
        }
    }
}

fn centered(loc: [f64; 3], half: [f64; 3]) -> BBox {
    BBox::new(std::array::from_fn(|i| loc[i] - half[i]), std::array::from_fn(|i| loc[i] + half[i]))
}

fn script_error(lineno: usize, raw: &str, name: &str, msg: &str) -> ExecutionError {
    let head = if msg.is_empty() { name.to_owned() } else { format!("{name}: {msg}") };
    let traceback = format!(
        "Traceback (most recent call last):\n  File \"<script>\", line {lineno}, in <module>\n    {}\n{head}\n",
        raw.trim()
    );
    ExecutionError::script(head, traceback)
}

/// Text between the parentheses of `name(...)` at the start of `line`.
fn call_argument<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(name)?.trim_start().strip_prefix('(')?;
    let end = rest.rfind(')')?;
    Some(&rest[..end])
}

fn literal_or_raw(arg: &str) -> String {
    let arg = arg.trim();
    for q in ['\'', '"'] {
        if arg.len() >= 2 && arg.starts_with(q) && arg.ends_with(q) {
            return arg[1..arg.len() - 1].to_owned();
        }
    }
    arg.to_owned()
}

fn keyword_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("{key}=");
    let start = line
        .match_indices(&pat)
        .find(|(i, _)| *i == 0 || !line.as_bytes()[i - 1].is_ascii_alphanumeric() && line.as_bytes()[i - 1] != b'_')?
        .0
        + pat.len();
    Some(line[start..].trim_start())
}

fn keyword_number(line: &str, key: &str) -> Option<f64> {
    let v = keyword_value(line, key)?;
    let end = v.find(|c: char| c == ',' || c == ')' || c.is_whitespace()).unwrap_or(v.len());
    v[..end].parse().ok()
}

fn keyword_vector(line: &str, key: &str) -> Option<[f64; 3]> {
    let v = keyword_value(line, key)?.strip_prefix('(')?;
    let end = v.find(')')?;
    let nums: Vec<f64> = v[..end].split(',').filter_map(|t| t.trim().parse().ok()).collect();
    (nums.len() == 3).then(|| [nums[0], nums[1], nums[2]])
}

/// Runs the fake worker protocol on the given streams until input closes.
///
/// Mirrors the real shim: handshake line first, then one response per request.
/// Returns `Ok(true)` if a `crash` directive asked the process to die.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W, token: &str) -> std::io::Result<bool> {
    let mut scene = FakeScene::new();
    output.write_all(encode_line(&FakeScene::handshake(token)).as_bytes())?;
    output.flush()?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match decode_request(&line) {
            Ok(req) => scene.handle(&req),
            Err(e) => FakeReply::Respond(WireResponse::err(UNPARSEABLE_ID, "ProtocolError", e.to_string(), None)),
        };
        match reply {
            FakeReply::Respond(resp) => output.write_all(encode_line(&resp).as_bytes())?,
            FakeReply::Delayed(d, resp) => {
                std::thread::sleep(d);
                output.write_all(encode_line(&resp).as_bytes())?;
            }
            FakeReply::Malformed => output.write_all(b"this is not a protocol line\n")?,
            FakeReply::Crash => return Ok(true),
        }
        output.flush()?;
    }
    Ok(false)
}

/// In-process runtime backed by [`FakeScene`]; faults are mapped straight to
/// outcomes and never actually sleep.
#[derive(Debug, Default)]
pub struct FakeRuntime {
    scene: FakeScene,
    bbox: BBox,
    restarts: usize,
}

impl FakeRuntime {
    pub fn new() -> Self {
        Self { scene: FakeScene::new(), bbox: BBox::EMPTY, restarts: 0 }
    }

    /// Number of simulated worker restarts after faults.
    pub fn restarts(&self) -> usize {
        self.restarts
    }

    fn restart(&mut self) {
        self.scene.reset();
        self.bbox = BBox::EMPTY;
        self.restarts += 1;
    }
}

impl SceneRuntime for FakeRuntime {
    fn execute(&mut self, source: &str, timeout: Duration) -> ExecutionOutcome {
        let req = WireRequest { id: 1, command: Command::Exec { code: source.to_owned() } };
        let fault = |kind, msg: &str| ExecutionOutcome::failure(ExecutionError::new(kind, msg), String::new(), String::new(), 0);
        let resp = match self.scene.handle(&req) {
            FakeReply::Respond(r) => r,
            FakeReply::Delayed(d, r) if d <= timeout => r,
            FakeReply::Delayed(..) => {
                self.restart();
                return fault(ErrorKind::Timeout, &format!("no response within {} ms", timeout.as_millis()));
            }
            FakeReply::Crash => {
                self.restart();
                return fault(ErrorKind::WorkerCrash, "worker exited during request");
            }
            FakeReply::Malformed => {
                self.restart();
                return fault(ErrorKind::ProtocolError, "malformed response line");
            }
        };
        if resp.id != req.id {
            self.restart();
            return fault(ErrorKind::ProtocolError, &format!("response id {} does not match request id {}", resp.id, req.id));
        }
        if let Some(b) = resp.data.as_ref().and_then(|d| d.bbox) {
            self.bbox = b;
        }
        match resp.error {
            None => ExecutionOutcome::success(resp.stdout, resp.stderr, 0),
            Some(e) => {
                let kind = ErrorKind::parse(&e.kind).unwrap_or(ErrorKind::ScriptException);
                let err = ExecutionError { kind, message: e.message, traceback: e.traceback };
                ExecutionOutcome::failure(err, resp.stdout, resp.stderr, 0)
            }
        }
    }

    fn scene_bbox(&self) -> BBox {
        self.bbox
    }

    fn render(&mut self, plan: &CameraPlan, out_dir: &Path, resolution: u32) -> Result<RenderOutput, RenderError> {
        let req = WireRequest {
            id: 1,
            command: Command::Render { plan: plan.clone(), resolution, out_dir: out_dir.to_path_buf() },
        };
        let resp = match self.scene.handle(&req) {
            FakeReply::Respond(r) => r,
            _ => unreachable!("render never injects transport faults"),
        };
        if let Some(e) = resp.error {
            return Err(RenderError::Worker(e.message));
        }
        let missing = missing_views(out_dir, plan.views.len());
        if !missing.is_empty() {
            return Err(RenderError::MissingViews(missing));
        }
        let data = resp.data.unwrap_or_default();
        self.bbox = data.bbox.unwrap_or(self.bbox);
        Ok(RenderOutput { views: data.views.unwrap_or_default(), bbox: self.bbox })
    }

    fn reset(&mut self) -> Result<(), RenderError> {
        self.scene.reset();
        self.bbox = BBox::EMPTY;
        Ok(())
    }

    fn blender_version(&self) -> &str {
        FAKE_BLENDER_VERSION
    }
}
