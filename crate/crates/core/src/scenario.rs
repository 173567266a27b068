//! Canned sessions: scripted model replies, a small documentation corpus and
//! the in-process fake runtime. They exercise every phase without Blender or
//! network access and back both the test suites and `meshwright demo`.

use std::path::Path;
use std::sync::Arc;

use meshwright_bridge::FakeRuntime;
use meshwright_docrag::{DocChunk, RetrievalIndex, Retriever};
use meshwright_gateway::{ChatResponse, ScriptedBackend, ScriptedEntry, ScriptedTranscript};
use serde_json::json;

use crate::agents::{PromptSet, EXECUTE_CODE_TOOL};
use crate::orchestrator::{Orchestrator, OrchestratorError};
use crate::session::{SessionConfig, SessionLog, SessionState, StepClock};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub goal: String,
    pub config: SessionConfig,
    pub transcript: ScriptedTranscript,
    pub docs: Vec<DocChunk>,
    /// Submitted in order whenever the session waits for the user.
    pub refinements: Vec<String>,
}

pub struct ScenarioRun {
    pub orchestrator: Orchestrator,
    pub backend: Arc<ScriptedBackend>,
}

impl ScenarioRun {
    pub fn state(&self) -> &SessionState {
        self.orchestrator.state()
    }
}

fn code(source: &str) -> ChatResponse {
    ChatResponse::tool_call(EXECUTE_CODE_TOOL, json!({ "code": source }))
}

fn doc(id: u32, file: &str, title: &str, body: &str) -> DocChunk {
    DocChunk {
        chunk_id: id,
        source_file: file.into(),
        title: title.into(),
        body: body.into(),
        version_tag: "4.4".into(),
        offset: 0,
        overlap: 0,
    }
}

fn corpus() -> Vec<DocChunk> {
    vec![
        doc(
            0,
            "bpy.ops.mesh.html",
            "bpy.ops.mesh.primitive_cube_add",
            "Construct a cube mesh. size: edge length. location: placement of the new object. \
             Cubes scaled along one axis make good legs, seats and panels.",
        ),
        doc(
            1,
            "bpy.types.ShaderNodeBsdfPrincipled.html",
            "Principled BSDF inputs",
            "In Blender 4.0 the Specular input was renamed. The key has been renamed to \"Specular IOR Level\"; \
             set inputs[\"Specular IOR Level\"].default_value instead of inputs[\"Specular\"].",
        ),
        doc(
            2,
            "bpy.types.Object.html",
            "Object transforms",
            "Object.location and Object.scale position and size an object; \
             raise an object along the z axis by increasing location.z.",
        ),
        doc(
            3,
            "bpy.types.Material.html",
            "Materials",
            "bpy.data.materials.new creates a material. Set use_nodes to True and edit the Principled BSDF node \
             to change color, roughness and specular response.",
        ),
    ]
}

const LEGS: &str = "import bpy

# four legs
bpy.ops.mesh.primitive_cube_add(size=0.1, location=(-0.4, -0.4, 0.25))
bpy.ops.mesh.primitive_cube_add(size=0.1, location=(0.4, -0.4, 0.25))
bpy.ops.mesh.primitive_cube_add(size=0.1, location=(-0.4, 0.4, 0.25))
bpy.ops.mesh.primitive_cube_add(size=0.1, location=(0.4, 0.4, 0.25))
";

const BACKREST_BROKEN: &str = "
# backrest
bpy.ops.mesh.primitive_cube_add(size=0.8, location=(0.0, 0.45, 1.0))
mat = bpy.data.materials.new(\"Oak\")
mat.use_nodes = True
bsdf = mat.node_tree.nodes[\"Principled BSDF\"]
bsdf.inputs[\"Specular\"].default_value = 0.3
# fake: error KeyError: bpy_prop_collection[key]: key \"Specular\" not found
";

const BACKREST: &str = "
# backrest
bpy.ops.mesh.primitive_cube_add(size=0.8, location=(0.0, 0.45, 1.0))
mat = bpy.data.materials.new(\"Oak\")
mat.use_nodes = True
bsdf = mat.node_tree.nodes[\"Principled BSDF\"]
bsdf.inputs[\"Specular IOR Level\"].default_value = 0.3
";

const SEAT: &str = "
# seat
bpy.ops.mesh.primitive_cube_add(size=0.9, location=(0.0, 0.0, 0.55))
";

const CUSHION: &str = "
# cushion
bpy.ops.mesh.primitive_cube_add(size=0.7, location=(0.0, 0.0, 0.65))
cushion = bpy.context.active_object
cushion.color = (0.8, 0.1, 0.1, 1.0)
";

impl Scenario {
    /// Three subtasks, one execution error on subtask 2, one critique round
    /// with two items (one fixed at once, one needing a follow-up), then a
    /// user edit and the termination keyword.
    pub fn chair() -> Self {
        let v1 = LEGS.to_owned();
        let v2 = format!("{LEGS}{BACKREST_BROKEN}");
        let v3 = format!("{LEGS}{BACKREST}");
        let v4 = format!("{v3}{SEAT}");
        let v5 = v4.replace("0.25))", "0.3))").replace("size=0.8,", "size=0.85,");
        let v6 = v5.replace("0.3))", "0.5))");
        let v7 = format!("{v6}{CUSHION}");
        let entries = vec![
            ScriptedEntry::new(
                "planner",
                ChatResponse::text(
                    "retrieval_agent: build four chair legs\n\
                     retrieval_agent: build the backrest with an oak material\n\
                     retrieval_agent: build the seat on top of the legs\n\
                     COMPLETE",
                ),
            )
            .requiring("a wooden chair"),
            ScriptedEntry::new("retrieval", ChatResponse::text("Use primitive_cube_add with a small size for each leg."))
                .requiring("legs"),
            ScriptedEntry::new(
                "retrieval",
                ChatResponse::text("Create the material with bpy.data.materials.new and enable use_nodes."),
            )
            .requiring("backrest"),
            ScriptedEntry::new(
                "retrieval",
                ChatResponse::text("The key has been renamed to \"Specular IOR Level\"; use that input name."),
            )
            .requiring("\"Specular\" not found"),
            ScriptedEntry::new("retrieval", ChatResponse::text("A flat cube resting on the legs makes a seat."))
                .requiring("seat"),
            ScriptedEntry::new("coding", code(&v1)).requiring("build four chair legs"),
            ScriptedEntry::new("coding", code(&v2)).requiring("backrest"),
            ScriptedEntry::new("coding", code(&v3)).requiring("Specular IOR Level"),
            ScriptedEntry::new("coding", code(&v4)).requiring("build the seat"),
            ScriptedEntry::new("coding", code(&v5)).requiring("Move the legs up the z-axis"),
            ScriptedEntry::new("coding", code(&v6)).requiring("further 0.2"),
            ScriptedEntry::new("coding", code(&v7)).requiring("red cushion"),
            ScriptedEntry::new(
                "critic",
                ChatResponse::text(
                    "1. problem: The legs aren't attached to the seat | fix: Move the legs up the z-axis\n\
                     2. problem: The backrest is too small for the seat | fix: Make the backrest slightly larger | subtask: 2",
                ),
            ),
            ScriptedEntry::new(
                "verification",
                ChatResponse::text("1. PARTIAL: Move the legs a further 0.2 up along the z-axis\n2. RESOLVED"),
            ),
            ScriptedEntry::new("verification", ChatResponse::text("1. RESOLVED")).requiring("legs aren't attached"),
            ScriptedEntry::new("verification", ChatResponse::text("1. RESOLVED")).requiring("red cushion"),
        ];
        Self {
            name: "chair",
            goal: "a wooden chair".into(),
            config: SessionConfig::default(),
            transcript: ScriptedTranscript::new(entries),
            docs: corpus(),
            refinements: vec!["add a red cushion on the seat".into(), "COMPLETE".into()],
        }
    }

    /// A coder whose every script raises, on a single coding-assigned subtask.
    pub fn always_failing() -> Self {
        let entries = vec![
            ScriptedEntry::new("planner", ChatResponse::text("coding_agent: build the lamp base\nCOMPLETE")),
            ScriptedEntry::new("coding", code("import bpy\nbase = 1/0\n")).repeating(),
            ScriptedEntry::new("retrieval", ChatResponse::text("Division by zero is a plain Python error.")).repeating(),
        ];
        Self {
            name: "always-failing",
            goal: "a desk lamp".into(),
            config: SessionConfig { max_exec_retries: 5, ..SessionConfig::default() },
            transcript: ScriptedTranscript::new(entries),
            docs: corpus(),
            refinements: Vec::new(),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "chair" => Some(Self::chair()),
            "always-failing" => Some(Self::always_failing()),
            _ => None,
        }
    }

    pub fn retriever(&self) -> Option<Arc<dyn Retriever>> {
        RetrievalIndex::build(self.docs.clone()).ok().map(|i| Arc::new(i) as Arc<dyn Retriever>)
    }

    /// Builds the orchestrator over a fresh session directory without
    /// running anything.
    pub fn prepare(&self, dir: &Path, prompts: PromptSet) -> Result<ScenarioRun, OrchestratorError> {
        let backend = Arc::new(ScriptedBackend::new(self.transcript.clone()));
        let log = SessionLog::create(dir, Box::new(StepClock::fixed()))?;
        let orchestrator =
            Orchestrator::new(log, backend.clone(), Box::new(FakeRuntime::new()), self.retriever(), prompts);
        Ok(ScenarioRun { orchestrator, backend })
    }

    /// Runs the whole session into `dir`, answering each input wait with the
    /// next canned refinement.
    pub fn run(&self, dir: &Path) -> Result<ScenarioRun, OrchestratorError> {
        let mut run = self.prepare(dir, PromptSet::shipped())?;
        let id = format!("scenario-{}", self.name);
        run.orchestrator.start(&id, &self.goal, self.config.clone())?;
        run.orchestrator.run_until_input()?;
        for text in &self.refinements {
            if !run.orchestrator.awaiting_input() {
                break;
            }
            run.orchestrator.run_phase3_step(text)?;
        }
        Ok(run)
    }
}
