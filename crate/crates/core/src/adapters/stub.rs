//! Deterministic stand-ins for every backend, driven by a declarative
//! fixture manifest.
//!
//! A manifest maps media (by file name or SHA-256 digest) to canned model
//! outputs, maps prompts to canned completions, and can force individual
//! adapters into failure. Every stub call is a pure function of its inputs
//! and the manifest.
//!
//! ```json
//! {
//!   "media": {
//!     "park.mp4": {
//!       "duration_s": 6.0,
//!       "objects": [{ "label": "dog", "confidence": 0.9, "from_s": 2.0 }],
//!       "scores": { "outdoors": 0.9, "park": 0.8, "afternoon": 1.0, "sunny": 1.0 },
//!       "caption": "a dog running across a sunny park",
//!       "presence": { "dogs": 0.9 },
//!       "regions": [{ "subject": "dogs", "rect": [0, 0, 2, 8] }]
//!     }
//!   },
//!   "llm": { "rules": [{ "contains": ["emoji", "Dogs barking"], "completion": "🐕" }] }
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::syntax::heuristic_parse;
use super::*;

/// Sample rate of the stub's decoded media audio.
pub const STUB_MEDIA_AUDIO_RATE: u32 = 16_000;

/// Completion returned for prompts the manifest does not know.
pub const FALLBACK_COMPLETION: &str =
    "1. Room tone\n2. Distant traffic\n3. Soft breeze\n4. Faint footsteps\n5. Muffled voices";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read stub manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid stub manifest {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid stub manifest: {0}")]
    Invalid(String),
}

/// Time window a fixture entry applies to, `[from_s, to_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Span {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_s: Option<f64>,
}

impl Span {
    pub fn contains(&self, t: f64) -> bool {
        self.from_s.map_or(true, |f| t >= f) && self.to_s.map_or(true, |e| t < e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedDetection {
    pub label: String,
    pub confidence: f64,
    #[serde(flatten)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedText {
    pub text: String,
    #[serde(default = "one")]
    pub confidence: f64,
    #[serde(flatten)]
    pub span: Span,
}

/// A hot rectangle `[x0, y0, x1, y1)` in activation-grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub subject: String,
    pub rect: [usize; 4],
    #[serde(default = "one")]
    pub value: f64,
    #[serde(flatten)]
    pub span: Span,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            width: 8,
            height: 8,
        }
    }
}

/// Canned model outputs for one media file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MediaFixture {
    /// Optional content digest; matches media regardless of file name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    pub duration_s: f64,
    pub objects: Vec<TimedDetection>,
    /// Classifier scores keyed by category (case-insensitive).
    pub scores: BTreeMap<String, f64>,
    pub text: Vec<TimedText>,
    pub transcript: String,
    pub sound_tags: Vec<SoundTag>,
    pub caption: String,
    /// Presence scores keyed by subject (case-insensitive).
    pub presence: BTreeMap<String, f64>,
    pub regions: Vec<Region>,
    pub activation_grid: Grid,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmRule {
    /// Exact prompt; indexed by its SHA-256.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    /// Every fragment must occur in the prompt.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmFixture {
    pub rules: Vec<LlmRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorFixture {
    pub sample_rate: u32,
    /// Descriptions (case-insensitive) the generator refuses.
    pub fail: Vec<String>,
}

impl Default for GeneratorFixture {
    fn default() -> Self {
        Self {
            sample_rate: 32_000,
            fail: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct StubManifest {
    pub media: BTreeMap<String, MediaFixture>,
    pub llm: LlmFixture,
    pub generator: GeneratorFixture,
    /// Adapters that fail with [`AdapterError::Unavailable`].
    pub unavailable: Vec<AdapterKind>,
    /// Adapters that fail with [`AdapterError::RateLimited`].
    pub rate_limited: Vec<AdapterKind>,
}

impl StubManifest {
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        let manifest: StubManifest = serde_json::from_str(text).map_err(|source| ManifestError::Parse {
            path: "<inline>".into(),
            source,
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let manifest: StubManifest = serde_json::from_str(&text).map_err(|source| ManifestError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    fn validate(&self) -> Result<(), ManifestError> {
        if self.generator.sample_rate == 0 {
            return Err(ManifestError::Invalid("generator sample_rate must be positive".into()));
        }
        for (name, m) in &self.media {
            if !(m.duration_s.is_finite() && m.duration_s > 0.0) {
                return Err(ManifestError::Invalid(format!("{name}: duration_s must be positive")));
            }
            if m.activation_grid.width == 0 || m.activation_grid.height == 0 {
                return Err(ManifestError::Invalid(format!("{name}: empty activation grid")));
            }
            for r in &m.regions {
                let [x0, y0, x1, y1] = r.rect;
                if x0 >= x1 || y0 >= y1 || x1 > m.activation_grid.width || y1 > m.activation_grid.height {
                    return Err(ManifestError::Invalid(format!(
                        "{name}: region {:?} for {:?} outside the activation grid",
                        r.rect, r.subject
                    )));
                }
                if !(r.value.is_finite() && r.value >= 0.0) {
                    return Err(ManifestError::Invalid(format!("{name}: negative region value")));
                }
            }
        }
        Ok(())
    }

    /// Mutable access by file name, used by tests that build manifests in code.
    pub fn media_mut(&mut self, name: &str) -> &mut MediaFixture {
        self.media.entry(name.to_string()).or_default()
    }
}

fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// One object implementing every adapter trait from a [`StubManifest`].
#[derive(Debug)]
pub struct StubAdapters {
    manifest: StubManifest,
    completions_by_hash: BTreeMap<String, String>,
}

impl StubAdapters {
    pub fn new(manifest: StubManifest) -> Self {
        let mut completions_by_hash = BTreeMap::new();
        for rule in &manifest.llm.rules {
            let hash = match (&rule.prompt, &rule.prompt_sha256) {
                (Some(p), _) => Some(prompt_hash(p)),
                (None, Some(h)) => Some(h.to_lowercase()),
                _ => None,
            };
            if let Some(h) = hash {
                completions_by_hash.entry(h).or_insert_with(|| rule.completion.clone());
            }
        }
        Self {
            manifest,
            completions_by_hash,
        }
    }

    pub fn manifest(&self) -> &StubManifest {
        &self.manifest
    }

    fn gate(&self, kind: AdapterKind) -> AdapterResult<()> {
        if self.manifest.unavailable.contains(&kind) {
            return Err(AdapterError::unavailable(kind, "disabled by stub manifest"));
        }
        if self.manifest.rate_limited.contains(&kind) {
            return Err(AdapterError::RateLimited {
                kind,
                retry_after: None,
            });
        }
        Ok(())
    }

    fn fixture(&self, key: &MediaKey) -> Option<&MediaFixture> {
        self.manifest.media.get(&key.file_name).or_else(|| {
            self.manifest
                .media
                .values()
                .find(|m| m.sha256.as_deref().is_some_and(|h| h.eq_ignore_ascii_case(&key.sha256)))
        })
    }
}

impl Adapter for StubAdapters {}

impl MediaDecoder for StubAdapters {
    fn probe(&self, path: &Path) -> AdapterResult<MediaInfo> {
        self.gate(AdapterKind::Decoder)?;
        let bytes = fs::read(path).map_err(|e| {
            AdapterError::unavailable(AdapterKind::Decoder, format!("cannot read {}: {e}", path.display()))
        })?;
        let file_name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let key = MediaKey::from_bytes(file_name, &bytes);
        let fixture = self.fixture(&key).ok_or_else(|| {
            AdapterError::contract(
                AdapterKind::Decoder,
                format!("no stub fixture for media {} ({})", key.file_name, key.sha256),
            )
        })?;
        Ok(MediaInfo {
            key,
            path: path.display().to_string(),
            duration_s: fixture.duration_s,
        })
    }

    fn frame_at(&self, media: &MediaInfo, time_s: f64) -> AdapterResult<Frame> {
        self.gate(AdapterKind::Decoder)?;
        if !(0.0..media.duration_s).contains(&time_s) && !(time_s == 0.0) {
            return Err(AdapterError::contract(
                AdapterKind::Decoder,
                format!("frame time {time_s} outside media duration {}", media.duration_s),
            ));
        }
        Ok(Frame {
            source: Arc::new(media.key.clone()),
            time_s,
            png: None,
        })
    }

    fn audio(&self, media: &MediaInfo) -> AdapterResult<MediaAudio> {
        self.gate(AdapterKind::Decoder)?;
        let len = (media.duration_s * STUB_MEDIA_AUDIO_RATE as f64).round() as usize;
        Ok(MediaAudio {
            source: Arc::new(media.key.clone()),
            clip: AudioClip::silence(len, STUB_MEDIA_AUDIO_RATE),
        })
    }
}

impl ObjectDetector for StubAdapters {
    fn detect_raw(&self, frame: &Frame) -> AdapterResult<Vec<DetectedObject>> {
        self.gate(AdapterKind::Detector)?;
        let Some(fx) = self.fixture(&frame.source) else {
            return Ok(Vec::new());
        };
        Ok(fx
            .objects
            .iter()
            .filter(|o| o.span.contains(frame.time_s))
            .map(|o| DetectedObject {
                label: o.label.clone(),
                confidence: o.confidence,
            })
            .collect())
    }
}

impl ImageClassifier for StubAdapters {
    fn scores(&self, frame: &Frame, categories: &[String]) -> AdapterResult<Vec<f64>> {
        self.gate(AdapterKind::Classifier)?;
        let fx = self.fixture(&frame.source);
        Ok(categories
            .iter()
            .map(|c| {
                fx.and_then(|fx| {
                    fx.scores
                        .iter()
                        .find(|(k, _)| k.eq_ignore_ascii_case(c))
                        .map(|(_, v)| *v)
                })
                .unwrap_or(0.0)
            })
            .collect())
    }
}

impl TextReader for StubAdapters {
    fn extract_text(&self, frame: &Frame) -> AdapterResult<OcrResult> {
        self.gate(AdapterKind::Ocr)?;
        let Some(fx) = self.fixture(&frame.source) else {
            return Ok(OcrResult::default());
        };
        let hits: Vec<&TimedText> = fx.text.iter().filter(|t| t.span.contains(frame.time_s)).collect();
        if hits.is_empty() {
            return Ok(OcrResult::default());
        }
        Ok(OcrResult {
            text: hits.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "),
            confidence: hits.iter().map(|t| t.confidence).fold(1.0, f64::min),
        })
    }
}

impl SpeechTranscriber for StubAdapters {
    fn transcribe(&self, audio: &MediaAudio) -> AdapterResult<Transcript> {
        self.gate(AdapterKind::Asr)?;
        Ok(Transcript {
            text: self
                .fixture(&audio.source)
                .map(|fx| fx.transcript.clone())
                .unwrap_or_default(),
        })
    }
}

impl SoundTagger for StubAdapters {
    fn tag_sounds(&self, audio: &MediaAudio) -> AdapterResult<Vec<SoundTag>> {
        self.gate(AdapterKind::Tagger)?;
        Ok(self
            .fixture(&audio.source)
            .map(|fx| fx.sound_tags.clone())
            .unwrap_or_default())
    }
}

impl Captioner for StubAdapters {
    fn caption(&self, frame: &Frame) -> AdapterResult<String> {
        self.gate(AdapterKind::Captioner)?;
        Ok(self
            .fixture(&frame.source)
            .map(|fx| fx.caption.clone())
            .unwrap_or_default())
    }
}

impl LanguageModel for StubAdapters {
    fn complete(&self, prompt: &str) -> AdapterResult<String> {
        self.gate(AdapterKind::Llm)?;
        if let Some(c) = self.completions_by_hash.get(&prompt_hash(prompt)) {
            return Ok(c.clone());
        }
        let by_fragment = self.manifest.llm.rules.iter().find(|r| {
            r.prompt.is_none()
                && r.prompt_sha256.is_none()
                && !r.contains.is_empty()
                && r.contains.iter().all(|frag| prompt.contains(frag.as_str()))
        });
        Ok(match by_fragment {
            Some(rule) => rule.completion.clone(),
            None => self
                .manifest
                .llm
                .fallback
                .clone()
                .unwrap_or_else(|| FALLBACK_COMPLETION.to_string()),
        })
    }
}

impl AudioGenerator for StubAdapters {
    fn native_sample_rate(&self) -> u32 {
        self.manifest.generator.sample_rate
    }

    /// Sine plus low-passed noise, seeded by the description's hash.
    fn generate_audio(&self, description: &str, duration_s: f64) -> AdapterResult<AudioClip> {
        self.gate(AdapterKind::Generator)?;
        if self
            .manifest
            .generator
            .fail
            .iter()
            .any(|f| f.eq_ignore_ascii_case(description.trim()))
        {
            return Err(AdapterError::unavailable(
                AdapterKind::Generator,
                format!("stub generator refuses {description:?}"),
            ));
        }
        let rate = self.native_sample_rate();
        let digest = Sha256::digest(description.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);

        let freq = 110.0 + 880.0 * rng.random::<f64>();
        let smoothing = 0.02 + 0.3 * rng.random::<f64>();
        let tone_level = 0.1 + 0.25 * rng.random::<f64>();
        let noise_level = 0.6 - tone_level;
        let len = (duration_s * rate as f64).round() as usize;
        let step = 2.0 * std::f64::consts::PI * freq / rate as f64;

        let mut lowpassed = 0.0f64;
        let samples = (0..len)
            .map(|n| {
                let white: f64 = rng.random_range(-1.0..1.0);
                lowpassed += smoothing * (white - lowpassed);
                let s = tone_level * (step * n as f64).sin() + noise_level * lowpassed;
                s.clamp(-1.0, 1.0) as f32
            })
            .collect();
        AudioClip::new(samples, rate).map_err(|e| AdapterError::malformed(AdapterKind::Generator, e.to_string()))
    }
}

impl ActivationLocalizer for StubAdapters {
    fn localize(&self, frame: &Frame, subject: &str) -> AdapterResult<ActivationMap> {
        self.gate(AdapterKind::Localizer)?;
        let Some(fx) = self.fixture(&frame.source) else {
            let g = Grid::default();
            return Ok(ActivationMap::zeros(g.width, g.height, frame.time_s));
        };
        let Grid { width, height } = fx.activation_grid;
        let mut values = vec![0.0f64; width * height];
        for r in fx
            .regions
            .iter()
            .filter(|r| r.subject.eq_ignore_ascii_case(subject.trim()) && r.span.contains(frame.time_s))
        {
            let [x0, y0, x1, y1] = r.rect;
            for y in y0..y1 {
                for x in x0..x1 {
                    let cell = &mut values[y * width + x];
                    *cell = cell.max(r.value);
                }
            }
        }
        Ok(ActivationMap::new(width, height, values, frame.time_s)?.normalized())
    }
}

impl PresenceMatcher for StubAdapters {
    fn presence_score(&self, frame: &Frame, subject: &str) -> AdapterResult<f64> {
        self.gate(AdapterKind::Presence)?;
        Ok(self
            .fixture(&frame.source)
            .and_then(|fx| {
                fx.presence
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case(subject.trim()))
                    .map(|(_, v)| *v)
            })
            .unwrap_or(0.0))
    }
}

impl SyntaxParser for StubAdapters {
    fn parse(&self, text: &str) -> AdapterResult<SyntaxParse> {
        self.gate(AdapterKind::Parser)?;
        Ok(heuristic_parse(text))
    }
}
