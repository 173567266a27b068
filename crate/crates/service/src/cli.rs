use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use meshwright_core::orchestrator::{replay_session, turn_trace};
use meshwright_core::scenario::Scenario;
use meshwright_core::{load_state, Payload, Phase, SessionLog, SystemClock};
use meshwright_docrag::{ingest, IngestOptions, RetrievalIndex, Retriever};
use meshwright_opmetrics::{aggregate, InputSpec, PatternSet};

use crate::config::{env_key, layered, ServiceConfig};
use crate::host::{new_session_id, SessionHost};
use crate::runtime_env::Environment;
use crate::summary::SessionSummary;

#[derive(Debug, Parser)]
#[command(name = "meshwright", version, about = "Multi-agent modelling sessions that write and refine Blender scripts")]
pub struct Cli {
    /// TOML config file (also MESHWRIGHT_CONFIG).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set session.max_exec_retries=3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// error, warn, info, debug or trace (also MESHWRIGHT_LOG).
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Start a session and run it until it waits for the user.
    Create {
        goal: String,
        /// `1` stops after initial creation; `1,2` also auto-refines.
        #[arg(long, default_value = "1,2")]
        phases: String,
    },
    /// Send a follow-up instruction (or the termination keyword).
    Refine { session_id: String, text: String },
    /// Print a session summary as JSON.
    Status { session_id: String },
    /// Build a documentation index.
    Ragindex {
        docs_dir: PathBuf,
        out_dir: PathBuf,
        #[arg(long)]
        version_tag: Option<String>,
    },
    /// Query a documentation index.
    Ragquery {
        index_dir: PathBuf,
        text: String,
        #[arg(short, default_value_t = 5)]
        k: usize,
    },
    /// Operation counts and failure rates for scripts or session directories.
    Metrics {
        /// `[NAME[+rag|-rag]=]PATH`
        #[arg(required = true)]
        inputs: Vec<String>,
        #[arg(long, value_name = "FILE")]
        patterns: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
    /// Re-run a recorded session against its own model calls.
    Replay {
        session_dir: PathBuf,
        /// Where the replayed session is written; a temporary directory by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in scripted session and print its turn trace.
    Demo {
        #[arg(default_value = "chair")]
        scenario: String,
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

impl Cli {
    pub fn load_config(&self) -> anyhow::Result<ServiceConfig> {
        let file = self.config.clone().or_else(|| std::env::var_os("MESHWRIGHT_CONFIG").map(PathBuf::from));
        let mut sets = self.sets.clone();
        if let Some(level) = &self.log_level {
            sets.push(format!("log_level={level}"));
        }
        if let Some(dir) = &self.data_dir {
            sets.push(format!("data_dir={}", toml::Value::String(dir.display().to_string())));
        }
        Ok(layered(file.as_deref(), std::env::vars(), &sets)?)
    }

    /// Log level without requiring a valid full configuration.
    fn log_level(&self) -> String {
        self.log_level
            .clone()
            .or_else(|| std::env::vars().find(|(k, _)| env_key(k).as_deref() == Some("log_level")).map(|(_, v)| v))
            .or_else(|| self.load_config().ok().map(|c| c.log_level))
            .unwrap_or_else(|| "info".into())
    }
}

pub fn init_logging(level: &str) -> anyhow::Result<()> {
    let level = tracing::Level::from_str(level).map_err(|_| anyhow!("unknown log level {level:?}"))?;
    let _ = tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).with_target(false).try_init();
    Ok(())
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_logging(&cli.log_level()).and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("meshwright: {line}");
            ExitCode::FAILURE
        }
    }
}

fn parse_phases(s: &str) -> anyhow::Result<bool> {
    let mut phases: Vec<u32> =
        s.split(',').map(|p| p.trim().parse::<u32>().map_err(|_| anyhow!("bad --phases {s:?}"))).collect::<Result<_, _>>()?;
    phases.sort_unstable();
    phases.dedup();
    match phases.as_slice() {
        [1] => Ok(false),
        [1, 2] => Ok(true),
        _ => bail!("--phases must be 1 or 1,2"),
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Serve { bind } => {
            let mut config = cli.load_config()?;
            if let Some(b) = bind {
                config.bind = b.clone();
            }
            let host = Arc::new(SessionHost::open(Environment::new(config)?)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::api::serve(host))
        }
        Command::Create { goal, phases } => {
            let through_phase2 = parse_phases(phases)?;
            let config = cli.load_config()?;
            let session_config = config.session.clone();
            let env = Environment::new(config)?;
            let id = new_session_id();
            let dir = env.session_dir(&id);
            let log = SessionLog::create(&dir, Box::new(SystemClock))?;
            let mut orch = env.orchestrator(log)?;
            orch.start(&id, goal, session_config)?;
            if through_phase2 {
                orch.run_until_input()?;
            } else {
                orch.run_phase1()?;
            }
            println!("{}", dir.display());
            fail_if_failed(orch.state())
        }
        Command::Refine { session_id, text } => {
            let env = Environment::new(cli.load_config()?)?;
            let dir = existing_session(&env.session_dir(session_id))?;
            let log = SessionLog::reopen(&dir, Box::new(SystemClock))?;
            let mut orch = env.orchestrator(log)?;
            if !orch.awaiting_input() {
                bail!("session {session_id} is in {} and not waiting for input", orch.state().phase);
            }
            orch.run_phase3_step(text)?;
            let s = SessionSummary::of(orch.state());
            println!(
                "{} {}{}",
                s.session_id,
                s.phase,
                s.latest_code_version.map(|v| format!(" code v{v}")).unwrap_or_default()
            );
            fail_if_failed(orch.state())
        }
        Command::Status { session_id } => {
            let config = cli.load_config()?;
            let dir = existing_session(&config.session_dir(session_id))?;
            let state = load_state(&dir)?;
            println!("{}", serde_json::to_string_pretty(&SessionSummary::of(&state))?);
            Ok(())
        }
        Command::Ragindex { docs_dir, out_dir, version_tag } => {
            let opts = IngestOptions { version_tag: version_tag.clone(), ..IngestOptions::default() };
            let report = ingest(docs_dir, &opts)?;
            for w in &report.warnings {
                tracing::warn!("{w}");
            }
            let n = report.chunks.len();
            let index = RetrievalIndex::build(report.chunks)?;
            index.save(out_dir)?;
            println!("{n} chunks from {} files (docs {}) -> {}", report.files, report.version_tag, out_dir.display());
            Ok(())
        }
        Command::Ragquery { index_dir, text, k } => {
            let index = RetrievalIndex::load(index_dir)?;
            for hit in index.query(text, *k)? {
                let title = index.chunk(hit.chunk_id).map(|c| c.title.as_str()).unwrap_or("");
                println!("{}\t{:.6}\t{}", hit.chunk_id, hit.score, title);
            }
            Ok(())
        }
        Command::Metrics { inputs, patterns, csv } => {
            let specs: Vec<InputSpec> = inputs.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
            let patterns = match patterns {
                Some(p) => PatternSet::load(p)?,
                None => PatternSet::shipped(),
            };
            let table = aggregate(&specs, &patterns);
            for w in &table.warnings {
                tracing::warn!("{w}");
            }
            print!("{}", table.to_text());
            if let Some(path) = csv {
                table.write_csv(path)?;
            }
            Ok(())
        }
        Command::Replay { session_dir, out } => {
            let prompts = match cli.load_config().ok().and_then(|c| c.prompts) {
                Some(dir) => meshwright_core::agents::PromptSet::with_overrides(&dir)?,
                None => meshwright_core::agents::PromptSet::shipped(),
            };
            let temp;
            let out_dir = match out {
                Some(o) => o.clone(),
                None => {
                    temp = tempfile::tempdir()?;
                    temp.path().join("replay")
                }
            };
            let report = replay_session(existing_session(session_dir)?.as_path(), &out_dir, prompts)?;
            println!(
                "events {} -> {}, model calls served {}, unused {}",
                report.original_events, report.replayed_events, report.calls_served, report.calls_remaining
            );
            if let Some(d) = &report.divergence {
                bail!("{d}");
            }
            if let Some(d) = &report.first_difference {
                bail!("replayed log differs at line {}", d.line);
            }
            println!("no divergence");
            Ok(())
        }
        Command::Demo { scenario, dir } => {
            let s = Scenario::by_name(scenario).with_context(|| format!("unknown scenario {scenario:?} (try chair or always-failing)"))?;
            let temp;
            let dir = match dir {
                Some(d) => d.clone(),
                None => {
                    temp = tempfile::tempdir()?;
                    temp.path().join(format!("scenario-{scenario}"))
                }
            };
            let run = s.run(&dir)?;
            for line in turn_trace(&run.state().event_log) {
                println!("{line}");
            }
            println!("# {} events, phase {}", run.state().event_log.len(), run.state().phase);
            Ok(())
        }
    }
}

fn existing_session(dir: &Path) -> anyhow::Result<PathBuf> {
    if dir.join(meshwright_core::EVENTS_FILE).is_file() {
        Ok(dir.to_path_buf())
    } else {
        bail!("no session at {}", dir.display())
    }
}

fn fail_if_failed(state: &meshwright_core::SessionState) -> anyhow::Result<()> {
    if state.phase == Phase::Failed {
        let reason = state.event_log.iter().rev().find_map(|e| match &e.payload {
            Payload::Error { fatal: true, message, execution_error, .. } => Some(match execution_error {
                Some(x) => format!("{message}: {}", x.message),
                None => message.clone(),
            }),
            _ => None,
        });
        bail!("session {} failed: {}", state.session_id, reason.unwrap_or_else(|| "see the event log".into()));
    }
    Ok(())
}
