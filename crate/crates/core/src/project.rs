//! Mix projects: the end-to-end session state, the operations that move it
//! forward, and JSON persistence with content-addressed audio sidecars.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, AdapterSet, AudioClip, Frame};
use crate::config::Config;
use crate::ideation::{self, IdeationError, SoundSuggestion};
use crate::localization::{self, LocalizationResult};
use crate::mixer::{self, ExportKind, MixError, MixSettings, Mixdown};
use crate::scene_context::{self, SceneContext, SceneError};
use crate::soundgen::{self, AudioTrack, Keyframe, SoundgenError, TrackCategory};
use crate::wav::{self, WavError};

pub const SCHEMA_VERSION: u32 = 1;
/// Sidecar directory, relative to the project file.
pub const AUDIO_DIR: &str = "audio";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceMedia {
    pub path: String,
    pub file_name: String,
    pub sha256: String,
    pub duration_s: f64,
}

/// A suggestion whose last generation attempt failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackError {
    pub suggestion_id: String,
    pub message: String,
}

/// What localization decided for a track, kept for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationNote {
    pub subject: String,
    pub presence_score: Option<f64>,
    pub area_fractions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl From<&LocalizationResult> for LocalizationNote {
    fn from(r: &LocalizationResult) -> Self {
        Self {
            subject: r.subject.clone(),
            presence_score: r.presence.as_ref().map(|p| p.score),
            area_fractions: r.area_fractions.clone(),
            warning: r.warning.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixProject {
    pub id: String,
    pub revision: u64,
    pub source: SourceMedia,
    pub context: Option<SceneContext>,
    pub scene_prompt: Option<String>,
    pub suggestions: Vec<SoundSuggestion>,
    pub tracks: Vec<AudioTrack>,
    /// Keyed by track id.
    pub localization: BTreeMap<String, LocalizationNote>,
    pub track_errors: Vec<TrackError>,
    pub settings: MixSettings,
    /// Last sequence number handed out for suggestion and track ids.
    pub next_seq: u64,
}

/// Reference to a clip stored outside the project document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipRef {
    pub sha256: String,
    pub sample_rate: u32,
    pub samples: usize,
}

impl ClipRef {
    pub fn of(clip: &AudioClip) -> Self {
        Self {
            sha256: clip.sha256(),
            sample_rate: clip.sample_rate(),
            samples: clip.len(),
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.wav", self.sha256)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackDocument {
    pub id: String,
    pub suggestion_id: String,
    pub clip: ClipRef,
    pub duration_target: f64,
    pub category: TrackCategory,
    pub gain_automation: Vec<Keyframe>,
    pub pan_automation: Vec<Keyframe>,
    pub user_gain_offset_db: f64,
}

/// The serialized form of a [`MixProject`]; audio is referenced by hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectDocument {
    pub schema_version: u32,
    pub id: String,
    pub revision: u64,
    pub source: SourceMedia,
    pub context: Option<SceneContext>,
    pub scene_prompt: Option<String>,
    pub suggestions: Vec<SoundSuggestion>,
    pub tracks: Vec<TrackDocument>,
    pub localization: BTreeMap<String, LocalizationNote>,
    pub track_errors: Vec<TrackError>,
    pub settings: MixSettings,
    pub next_seq: u64,
}

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("{what} {id} not found")]
    NotFound { what: &'static str, id: String },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("project file {path}: schema error: {reason}")]
    Schema { path: PathBuf, reason: String },
    #[error("audio sidecar {sha256}: {reason}")]
    Integrity { sha256: String, reason: String },
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("stale revision: expected {expected}, project is at {actual}")]
    Stale { expected: u64, actual: u64 },
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Ideation(#[from] IdeationError),
    #[error(transparent)]
    Soundgen(#[from] SoundgenError),
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error(transparent)]
    Wav(#[from] WavError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ProjectError + '_ {
    move |source| ProjectError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(reason: impl Into<String>) -> ProjectError {
    ProjectError::Invalid(reason.into())
}

impl MixProject {
    pub fn new(id: String, source: SourceMedia, settings: MixSettings) -> Self {
        Self {
            id,
            revision: 1,
            source,
            context: None,
            scene_prompt: None,
            suggestions: Vec::new(),
            tracks: Vec::new(),
            localization: BTreeMap::new(),
            track_errors: Vec::new(),
            settings,
            next_seq: 0,
        }
    }

    fn bump(&mut self) {
        self.revision += 1;
    }

    pub fn check_revision(&self, expected: Option<u64>) -> Result<(), ProjectError> {
        match expected {
            Some(expected) if expected != self.revision => Err(ProjectError::Stale {
                expected,
                actual: self.revision,
            }),
            _ => Ok(()),
        }
    }

    pub fn suggestion(&self, id: &str) -> Result<&SoundSuggestion, ProjectError> {
        self.suggestions.iter().find(|s| s.id == id).ok_or_else(|| ProjectError::NotFound {
            what: "suggestion",
            id: id.to_string(),
        })
    }

    pub fn track(&self, id: &str) -> Result<&AudioTrack, ProjectError> {
        self.tracks.iter().find(|t| t.id == id).ok_or_else(|| ProjectError::NotFound {
            what: "track",
            id: id.to_string(),
        })
    }

    pub fn track_for(&self, suggestion_id: &str) -> Option<&AudioTrack> {
        self.tracks.iter().find(|t| t.suggestion_id == suggestion_id)
    }

    /// Selects or deselects a suggestion. Deselecting discards its track.
    pub fn set_selected(&mut self, suggestion_id: &str, selected: bool) -> Result<(), ProjectError> {
        let idx = self
            .suggestions
            .iter()
            .position(|s| s.id == suggestion_id)
            .ok_or_else(|| ProjectError::NotFound {
                what: "suggestion",
                id: suggestion_id.to_string(),
            })?;
        self.suggestions[idx].selected = selected;
        if !selected {
            let dropped: Vec<String> = self
                .tracks
                .iter()
                .filter(|t| t.suggestion_id == suggestion_id)
                .map(|t| t.id.clone())
                .collect();
            self.tracks.retain(|t| t.suggestion_id != suggestion_id);
            for id in dropped {
                self.localization.remove(&id);
            }
            self.track_errors.retain(|e| e.suggestion_id != suggestion_id);
        }
        self.bump();
        Ok(())
    }

    /// Selects every suggestion whose text contains one of `filters`
    /// (case-insensitive), or all of them when `filters` is empty. Returns
    /// how many are selected afterwards.
    pub fn select_matching(&mut self, filters: &[String]) -> usize {
        let filters: Vec<String> = filters
            .iter()
            .map(|f| f.trim().to_lowercase())
            .filter(|f| !f.is_empty())
            .collect();
        for s in &mut self.suggestions {
            let text = s.text.to_lowercase();
            if filters.is_empty() || filters.iter().any(|f| text.contains(f.as_str())) {
                s.selected = true;
            }
        }
        self.bump();
        self.suggestions.iter().filter(|s| s.selected).count()
    }

    /// Sets the designer's offset on top of the predicted automation.
    pub fn set_track_gain(&mut self, track_id: &str, offset_db: f64) -> Result<(), ProjectError> {
        if !offset_db.is_finite() {
            return Err(invalid(format!("gain offset {offset_db} is not finite")));
        }
        let track = self
            .tracks
            .iter_mut()
            .find(|t| t.id == track_id)
            .ok_or_else(|| ProjectError::NotFound {
                what: "track",
                id: track_id.to_string(),
            })?;
        track.user_gain_offset_db = offset_db;
        self.bump();
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ProjectError> {
        if self.id.trim().is_empty() {
            return Err(invalid("empty project id"));
        }
        if self.revision == 0 {
            return Err(invalid("revision starts at 1"));
        }
        if !(self.source.duration_s.is_finite() && self.source.duration_s > 0.0) {
            return Err(invalid(format!("source duration {}", self.source.duration_s)));
        }
        self.settings.validate()?;
        if let Some(ctx) = &self.context {
            ctx.validate()?;
        }
        let mut ids = HashSet::new();
        for s in &self.suggestions {
            if s.text.trim().is_empty() {
                return Err(invalid(format!("suggestion {} has empty text", s.id)));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(invalid(format!("duplicate suggestion id {}", s.id)));
            }
        }
        let mut covered = HashSet::new();
        for t in &self.tracks {
            t.validate()?;
            if t.clip.is_empty() {
                return Err(invalid(format!("track {} has an empty clip", t.id)));
            }
            if !ids.insert(t.id.as_str()) {
                return Err(invalid(format!("duplicate id {}", t.id)));
            }
            match self.suggestions.iter().find(|s| s.id == t.suggestion_id) {
                Some(s) if s.selected => {}
                Some(_) => return Err(invalid(format!("track {} belongs to an unselected suggestion", t.id))),
                None => return Err(invalid(format!("track {} references unknown suggestion {}", t.id, t.suggestion_id))),
            }
            if !covered.insert(t.suggestion_id.as_str()) {
                return Err(invalid(format!("suggestion {} has more than one track", t.suggestion_id)));
            }
        }
        if let Some(id) = self.localization.keys().find(|k| self.tracks.iter().all(|t| &t.id != *k)) {
            return Err(invalid(format!("localization note for unknown track {id}")));
        }
        Ok(())
    }

    pub fn document(&self) -> ProjectDocument {
        ProjectDocument {
            schema_version: SCHEMA_VERSION,
            id: self.id.clone(),
            revision: self.revision,
            source: self.source.clone(),
            context: self.context.clone(),
            scene_prompt: self.scene_prompt.clone(),
            suggestions: self.suggestions.clone(),
            tracks: self
                .tracks
                .iter()
                .map(|t| TrackDocument {
                    id: t.id.clone(),
                    suggestion_id: t.suggestion_id.clone(),
                    clip: ClipRef::of(&t.clip),
                    duration_target: t.duration_target,
                    category: t.category,
                    gain_automation: t.gain_automation.clone(),
                    pan_automation: t.pan_automation.clone(),
                    user_gain_offset_db: t.user_gain_offset_db,
                })
                .collect(),
            localization: self.localization.clone(),
            track_errors: self.track_errors.clone(),
            settings: self.settings.clone(),
            next_seq: self.next_seq,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.document()).expect("project document serializes");
        text.push('\n');
        text
    }

    /// Rebuilds a project, fetching each clip through `clip_for`.
    pub fn from_document(
        doc: ProjectDocument,
        mut clip_for: impl FnMut(&ClipRef) -> Result<AudioClip, ProjectError>,
    ) -> Result<Self, ProjectError> {
        let tracks = doc
            .tracks
            .into_iter()
            .map(|t| {
                Ok(AudioTrack {
                    clip: clip_for(&t.clip)?,
                    id: t.id,
                    suggestion_id: t.suggestion_id,
                    duration_target: t.duration_target,
                    category: t.category,
                    gain_automation: t.gain_automation,
                    pan_automation: t.pan_automation,
                    user_gain_offset_db: t.user_gain_offset_db,
                })
            })
            .collect::<Result<Vec<_>, ProjectError>>()?;
        Ok(Self {
            id: doc.id,
            revision: doc.revision,
            source: doc.source,
            context: doc.context,
            scene_prompt: doc.scene_prompt,
            suggestions: doc.suggestions,
            tracks,
            localization: doc.localization,
            track_errors: doc.track_errors,
            settings: doc.settings,
            next_seq: doc.next_seq,
        })
    }

    fn id_allocator(&self, kind: char) -> impl FnMut() -> String {
        let mut seq = self.next_seq;
        let prefix = format!("{}-{kind}", self.id);
        move || {
            seq += 1;
            format!("{prefix}{seq}")
        }
    }

    fn seq_of(id: &str) -> u64 {
        id.rsplit_once('-')
            .and_then(|(_, tail)| tail[1..].parse().ok())
            .unwrap_or(0)
    }

    fn advance_seq(&mut self, ids: impl IntoIterator<Item = String>) {
        for id in ids {
            self.next_seq = self.next_seq.max(Self::seq_of(&id));
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ProjectError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn audio_dir(project_path: &Path) -> PathBuf {
    project_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .join(AUDIO_DIR)
}

/// Writes sidecars first and the document last, each atomically.
pub fn save(project: &MixProject, path: &Path) -> Result<(), ProjectError> {
    project.validate()?;
    if !project.tracks.is_empty() {
        let dir = audio_dir(path);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for track in &project.tracks {
            let file = dir.join(ClipRef::of(&track.clip).file_name());
            if !file.exists() {
                write_atomic(&file, &wav::clip_bytes(&track.clip)?)?;
            }
        }
    }
    write_atomic(path, project.to_json().as_bytes())
}

/// Parses and checks a project document without touching sidecars.
pub fn parse_document(text: &str, path: &Path) -> Result<ProjectDocument, ProjectError> {
    let schema = |reason: String| ProjectError::Schema {
        path: path.to_path_buf(),
        reason,
    };
    let doc: ProjectDocument = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(schema(format!(
            "schema version {} (supported: {SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    Ok(doc)
}

pub fn load(path: &Path) -> Result<MixProject, ProjectError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let doc = parse_document(&text, path)?;
    let dir = audio_dir(path);
    let project = MixProject::from_document(doc, |r| load_clip(&dir, r))?;
    project.validate().map_err(|e| match e {
        ProjectError::Invalid(reason) => ProjectError::Schema {
            path: path.to_path_buf(),
            reason,
        },
        ProjectError::Soundgen(e) => ProjectError::Schema {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
        ProjectError::Mix(e) => ProjectError::Schema {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
        ProjectError::Scene(e) => ProjectError::Schema {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
        other => other,
    })?;
    Ok(project)
}

fn load_clip(dir: &Path, r: &ClipRef) -> Result<AudioClip, ProjectError> {
    let integrity = |reason: String| ProjectError::Integrity {
        sha256: r.sha256.clone(),
        reason,
    };
    let file = dir.join(r.file_name());
    let bytes = fs::read(&file).map_err(|e| integrity(format!("cannot read {}: {e}", file.display())))?;
    let clip = wav::decode_clip(&bytes, &file).map_err(|e| integrity(e.to_string()))?;
    let actual = ClipRef::of(&clip);
    if &actual != r {
        return Err(integrity(format!(
            "content does not match reference (hash {}, {} samples at {} Hz)",
            actual.sha256, actual.samples, actual.sample_rate
        )));
    }
    Ok(clip)
}

/// Outcome of one generation pass.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerateReport {
    pub generated: Vec<String>,
    pub failed: Vec<TrackError>,
}

/// Adapters plus configuration; runs the project operations.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub adapters: AdapterSet,
    pub config: Config,
}

impl Pipeline {
    pub fn new(adapters: AdapterSet, config: Config) -> Self {
        Self { adapters, config }
    }

    pub fn create_project(&self, media: &Path, id: String) -> Result<MixProject, ProjectError> {
        if id.trim().is_empty() || id.contains('/') {
            return Err(invalid(format!("unusable project id {id:?}")));
        }
        let info = self.adapters.decoder.probe(media)?;
        let source = SourceMedia {
            path: info.path,
            file_name: info.key.file_name,
            sha256: info.key.sha256,
            duration_s: info.duration_s,
        };
        let project = MixProject::new(id, source, self.config.mix.clone());
        project.validate()?;
        Ok(project)
    }

    fn media_info(&self, project: &MixProject) -> Result<crate::adapters::MediaInfo, ProjectError> {
        Ok(self.adapters.decoder.probe(Path::new(&project.source.path))?)
    }

    /// Scene context, prompt and fresh suggestions. Suggestions that already
    /// have tracks survive; the rest are replaced. On error the project is
    /// left as it was.
    pub fn analyze(&self, project: &mut MixProject) -> Result<(), ProjectError> {
        let media = self.media_info(project)?;
        let context = scene_context::build_context(&media, &self.adapters, &self.config.scene)?;
        let prompt = scene_context::assemble_prompt(&context);
        let ideation_cfg = self.config.ideation();

        let mut next_id = project.id_allocator('s');
        let mut fresh = ideation::brainstorm(&prompt, self.adapters.llm.as_ref(), &ideation_cfg, &mut next_id)?;
        let kept: Vec<SoundSuggestion> = project
            .suggestions
            .iter()
            .filter(|s| project.track_for(&s.id).is_some())
            .cloned()
            .collect();
        let kept_texts: HashSet<String> = kept.iter().map(|s| s.text.to_lowercase()).collect();
        fresh.retain(|s| !kept_texts.contains(&s.text.to_lowercase()));
        ideation::assign_emojis(&mut fresh, self.adapters.llm.as_ref(), &ideation_cfg);

        let new_ids: Vec<String> = fresh.iter().map(|s| s.id.clone()).collect();
        let mut suggestions = kept;
        suggestions.extend(fresh);
        let retained: HashSet<&str> = suggestions.iter().map(|s| s.id.as_str()).collect();
        project.track_errors.retain(|e| retained.contains(e.suggestion_id.as_str()));
        project.suggestions = suggestions;
        project.context = Some(context);
        project.scene_prompt = Some(prompt);
        project.advance_seq(new_ids);
        project.bump();
        Ok(())
    }

    /// Adds a selected custom suggestion and returns its id.
    pub fn add_custom(&self, project: &mut MixProject, text: &str) -> Result<String, ProjectError> {
        let mut next_id = project.id_allocator('s');
        let s = ideation::add_custom(
            text,
            &project.suggestions,
            self.adapters.llm.as_ref(),
            &self.config.ideation(),
            &mut next_id,
        )?;
        let id = s.id.clone();
        project.suggestions.push(s);
        project.advance_seq([id.clone()]);
        project.bump();
        Ok(id)
    }

    /// Inserts two suggestions similar to `suggestion_id` right after it.
    pub fn expand_similar(&self, project: &mut MixProject, suggestion_id: &str) -> Result<[String; 2], ProjectError> {
        let base = project.suggestion(suggestion_id)?.clone();
        let mut next_id = project.id_allocator('s');
        let pair = ideation::expand_similar(&base, self.adapters.llm.as_ref(), &self.config.ideation(), &mut next_id)?;
        let ids = [pair[0].id.clone(), pair[1].id.clone()];
        let at = project.suggestions.iter().position(|s| s.id == suggestion_id).map_or(0, |i| i + 1);
        project.suggestions.splice(at..at, pair);
        project.advance_seq(ids.clone());
        project.bump();
        Ok(ids)
    }

    fn frames(&self, project: &MixProject) -> Vec<Frame> {
        let sampled = self.media_info(project).map_err(|e| e.to_string()).and_then(|media| {
            let plan = scene_context::plan_frames(media.duration_s, self.config.scene.fps).map_err(|e| e.to_string())?;
            scene_context::sample_frames(&self.adapters, &media, &plan).map_err(|e| e.to_string())
        });
        sampled.unwrap_or_else(|e| {
            log::warn!("frame sampling failed, localization will fall back to background: {e}");
            Vec::new()
        })
    }

    /// Generates and localizes a track for every selected suggestion that
    /// lacks one. Failures are recorded per suggestion.
    pub fn generate_selected(&self, project: &mut MixProject) -> Result<GenerateReport, ProjectError> {
        let pending: Vec<SoundSuggestion> = project
            .suggestions
            .iter()
            .filter(|s| s.selected && project.track_for(&s.id).is_none())
            .cloned()
            .collect();
        if pending.is_empty() {
            return Ok(GenerateReport::default());
        }
        let frames = self.frames(project);
        let mut next_id = project.id_allocator('t');
        let jobs: Vec<(SoundSuggestion, String)> = pending.into_iter().map(|s| (s, next_id())).collect();
        let target = project.source.duration_s;
        let cfg = &self.config;
        let adapters = &self.adapters;
        let frames = &frames;

        let outcomes: Vec<Result<(AudioTrack, LocalizationResult), String>> = std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|(s, track_id)| {
                    scope.spawn(move || {
                        let mut track = soundgen::generate_track(
                            s,
                            target,
                            adapters.generator.as_ref(),
                            &cfg.soundgen,
                            track_id.clone(),
                        )
                        .map_err(|e| e.to_string())?;
                        let loc = localization::localize_track(&s.text, &track, frames, adapters, &cfg.localization);
                        loc.apply_to(&mut track);
                        Ok((track, loc))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err("generation thread panicked".to_string())))
                .collect()
        });

        let mut report = GenerateReport::default();
        let attempted: HashSet<String> = jobs.iter().map(|(s, _)| s.id.clone()).collect();
        project.track_errors.retain(|e| !attempted.contains(&e.suggestion_id));
        for ((s, _), outcome) in jobs.iter().zip(outcomes) {
            match outcome {
                Ok((track, loc)) => {
                    report.generated.push(track.id.clone());
                    project.localization.insert(track.id.clone(), LocalizationNote::from(&loc));
                    project.tracks.push(track);
                }
                Err(message) => {
                    log::warn!("generation for suggestion {} failed: {message}", s.id);
                    let err = TrackError {
                        suggestion_id: s.id.clone(),
                        message,
                    };
                    report.failed.push(err.clone());
                    project.track_errors.push(err);
                }
            }
        }
        project.advance_seq(jobs.into_iter().map(|(_, id)| id));
        project.bump();
        Ok(report)
    }

    pub fn mixdown(&self, project: &MixProject) -> Result<Mixdown, ProjectError> {
        Ok(mixer::mixdown(&project.tracks, &project.settings)?)
    }

    pub fn export(&self, project: &MixProject, which: ExportKind, out_dir: &Path) -> Result<Vec<PathBuf>, ProjectError> {
        Ok(mixer::export(
            &project.tracks,
            Path::new(&project.source.path),
            which,
            &project.settings,
            &self.config.export,
            out_dir,
        )?)
    }
}
