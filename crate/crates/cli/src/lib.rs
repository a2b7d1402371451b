//! Commands behind the `soundscape` binary.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use soundscape_core::adapters::stub::StubManifest;
use soundscape_core::mixer::{ExportKind, COMBINED_FILE};
use soundscape_core::project::{self, ClipRef, MixProject, Pipeline, ProjectError, TrackError, AUDIO_DIR};
use soundscape_core::{wav, Config};

pub const PROJECT_FILE: &str = "project.json";

#[derive(Debug, Parser)]
#[command(name = "soundscape", version, about = "Scene-aware soundscape generation for video")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Serve every model call from this fixture manifest instead of real backends.
    #[arg(long, global = true)]
    pub stub_manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Describe the scene and brainstorm sounds for it.
    Analyze {
        media: PathBuf,
        #[arg(long)]
        json: bool,
        /// Also save the analyzed project here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export audio from a saved project.
    Render {
        project: PathBuf,
        #[arg(long, default_value = "combined")]
        which: ExportKind,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Analyze, select, generate and mix in one go.
    Pipeline {
        media: PathBuf,
        /// Comma-separated filters; suggestions containing any of them are
        /// selected. Default: all.
        #[arg(long)]
        select: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value = "soundscape-data")]
        data_dir: PathBuf,
    },
}

/// A failed command and its exit code: 1 for pipeline failures, 2 for bad
/// usage or input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn pipeline(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ProjectError> for CliError {
    fn from(e: ProjectError) -> Self {
        match e {
            ProjectError::Schema { .. } | ProjectError::Integrity { .. } | ProjectError::Invalid(_) => {
                CliError::usage(e.to_string())
            }
            other => CliError::pipeline(other.to_string()),
        }
    }
}

pub fn load_pipeline(config: Option<&Path>, stub_manifest: Option<&Path>) -> Result<Pipeline, CliError> {
    let mut config = Config::load(config).map_err(|e| CliError::usage(e.to_string()))?;
    let manifest = match stub_manifest {
        Some(path) => {
            config.backends.llm_api_key = None;
            config.backends.model_server_api_key = None;
            Some(StubManifest::load(path).map_err(|e| CliError::usage(e.to_string()))?)
        }
        None => None,
    };
    let adapters = config.adapters(manifest).map_err(|e| CliError::usage(e.to_string()))?;
    Ok(Pipeline::new(adapters, config))
}

/// Stable project id for a media file: `p` plus 12 hex digits of its digest.
pub fn project_id_for(media: &Path) -> Result<String, CliError> {
    let mut file =
        fs::File::open(media).map_err(|e| CliError::usage(format!("cannot open media {}: {e}", media.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| CliError::usage(format!("cannot read media {}: {e}", media.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("p{}", &hex::encode(hasher.finalize())[..12]))
}

pub fn cmd_analyze(pipeline: &Pipeline, media: &Path, out: Option<&Path>) -> Result<MixProject, CliError> {
    let id = project_id_for(media)?;
    let mut project = pipeline.create_project(media, id)?;
    pipeline.analyze(&mut project)?;
    if let Some(path) = out {
        project::save(&project, path)?;
    }
    Ok(project)
}

pub fn analyze_json(project: &MixProject) -> Value {
    json!({
        "project_id": project.id,
        "context": project.context,
        "scene_prompt": project.scene_prompt,
        "suggestions": project.suggestions,
    })
}

pub fn cmd_render(pipeline: &Pipeline, project_path: &Path, which: ExportKind, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let project = project::load(project_path).map_err(|e| match e {
        ProjectError::Io { .. } => CliError::usage(e.to_string()),
        other => other.into(),
    })?;
    Ok(pipeline.export(&project, which, out)?)
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub project: MixProject,
    pub project_file: PathBuf,
    pub mixdown: PathBuf,
    pub normalization_factor: f64,
    pub failed: Vec<TrackError>,
}

impl PipelineRun {
    pub fn to_json(&self) -> Value {
        let tracks: Vec<Value> = self
            .project
            .tracks
            .iter()
            .map(|t| {
                let text = self
                    .project
                    .suggestion(&t.suggestion_id)
                    .map(|s| s.text.clone())
                    .unwrap_or_default();
                json!({
                    "id": t.id,
                    "text": text,
                    "category": t.category,
                    "gain_automation": t.gain_automation,
                    "pan_automation": t.pan_automation,
                })
            })
            .collect();
        json!({
            "project_id": self.project.id,
            "project_file": self.project_file,
            "mixdown": self.mixdown,
            "normalization_factor": self.normalization_factor,
            "tracks": tracks,
            "failed": self.failed,
        })
    }
}

/// Files a pipeline run writes, so a failed run can take them back.
struct Written {
    created_dir: Option<PathBuf>,
    files: Vec<PathBuf>,
}

impl Written {
    fn cleanup(&self) {
        if let Some(dir) = &self.created_dir {
            let _ = fs::remove_dir_all(dir);
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
    }
}

pub fn cmd_pipeline(pipeline: &Pipeline, media: &Path, select: &[String], out: &Path) -> Result<PipelineRun, CliError> {
    let id = project_id_for(media)?;
    let mut project = pipeline.create_project(media, id)?;
    pipeline.analyze(&mut project)?;
    if project.select_matching(select) == 0 {
        return Err(CliError::usage(format!(
            "--select {:?} matched none of: {}",
            select.join(","),
            project.suggestions.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    let report = pipeline.generate_selected(&mut project)?;
    if project.tracks.is_empty() {
        let reasons: Vec<String> = report.failed.iter().map(|f| f.message.clone()).collect();
        return Err(CliError::pipeline(format!("no track could be generated: {}", reasons.join("; "))));
    }

    let mut written = Written {
        created_dir: (!out.exists()).then(|| out.to_path_buf()),
        files: Vec::new(),
    };
    let result = write_outputs(pipeline, &project, out, &mut written);
    match result {
        Ok((project_file, mixdown, normalization_factor)) => Ok(PipelineRun {
            project,
            project_file,
            mixdown,
            normalization_factor,
            failed: report.failed,
        }),
        Err(e) => {
            written.cleanup();
            Err(e)
        }
    }
}

fn write_outputs(
    pipeline: &Pipeline,
    project: &MixProject,
    out: &Path,
    written: &mut Written,
) -> Result<(PathBuf, PathBuf, f64), CliError> {
    let io = |p: &Path, e: std::io::Error| CliError::pipeline(format!("cannot write {}: {e}", p.display()));
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let project_file = out.join(PROJECT_FILE);
    let audio = out.join(AUDIO_DIR);
    for t in &project.tracks {
        let sidecar = audio.join(ClipRef::of(&t.clip).file_name());
        if !sidecar.exists() {
            written.files.push(sidecar);
        }
    }
    written.files.push(project_file.clone());
    project::save(project, &project_file)?;

    let mix = pipeline.mixdown(project)?;
    let mixdown = out.join(COMBINED_FILE);
    written.files.push(mixdown.clone());
    wav::write_stereo_16(&mixdown, &mix.buffer).map_err(|e| CliError::pipeline(e.to_string()))?;
    Ok((project_file, mixdown, mix.normalization_factor))
}

pub fn parse_select(arg: Option<&str>) -> Vec<String> {
    arg.map(|s| s.split(',').map(|f| f.trim().to_string()).filter(|f| !f.is_empty()).collect())
        .unwrap_or_default()
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json output serializes"));
}

fn print_analysis(project: &MixProject) {
    if let Some(ctx) = &project.context {
        println!("Scene context:");
        println!("{}", serde_json::to_string_pretty(ctx).expect("context serializes"));
    }
    if let Some(prompt) = &project.scene_prompt {
        println!("\nScene prompt:\n  {prompt}");
    }
    println!("\nWhat do I hear?");
    for s in &project.suggestions {
        println!("  {} {}  [{}]", s.emoji, s.text, s.id);
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let pipeline = load_pipeline(cli.config.as_deref(), cli.stub_manifest.as_deref())?;
    match cli.command {
        Command::Analyze { media, json, out } => {
            let project = cmd_analyze(&pipeline, &media, out.as_deref())?;
            if json {
                print_json(&analyze_json(&project));
            } else {
                print_analysis(&project);
            }
        }
        Command::Render {
            project,
            which,
            out,
            json,
        } => {
            let files = cmd_render(&pipeline, &project, which, &out)?;
            if json {
                print_json(&json!({ "which": which, "files": files }));
            } else {
                for f in files {
                    println!("{}", f.display());
                }
            }
        }
        Command::Pipeline {
            media,
            select,
            out,
            json,
        } => {
            let run = cmd_pipeline(&pipeline, &media, &parse_select(select.as_deref()), &out)?;
            if json {
                print_json(&run.to_json());
            } else {
                for t in &run.project.tracks {
                    let text = run.project.suggestion(&t.suggestion_id).map(|s| s.text.as_str()).unwrap_or("");
                    println!("{:<10} {:<11} {text}", t.id, format!("{:?}", t.category).to_lowercase());
                }
                for f in &run.failed {
                    eprintln!("warning: {} failed: {}", f.suggestion_id, f.message);
                }
                println!("project: {}", run.project_file.display());
                println!("mixdown: {} (normalization x{:.4})", run.mixdown.display(), run.normalization_factor);
            }
        }
        Command::Serve { addr, data_dir } => {
            let state = soundscape_service::AppState::open(pipeline, &data_dir)
                .map_err(|e| CliError::usage(format!("cannot open data dir {}: {e}", data_dir.display())))?;
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| CliError::pipeline(e.to_string()))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| CliError::usage(format!("cannot bind {addr}: {e}")))?;
                eprintln!("listening on http://{}", listener.local_addr().map_err(|e| CliError::pipeline(e.to_string()))?);
                soundscape_service::serve(listener, state)
                    .await
                    .map_err(|e| CliError::pipeline(e.to_string()))
            })?;
        }
    }
    Ok(())
}
