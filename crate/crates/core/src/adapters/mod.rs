//! External model interfaces consumed by the pipeline.
//!
//! Every model the workflow leans on (object tagging, zero-shot
//! classification, OCR, speech recognition, audio tagging, captioning, the
//! chat model, text-to-audio, class-activation maps, syntactic parsing and
//! media decoding) sits behind a trait here. Two families of
//! implementations ship with the crate:
//!
//! * [`stub`]: deterministic, manifest-driven stand-ins used by the tests,
//!   the acceptance suite and `--stub-manifest` runs;
//! * [`http`] and [`media`]: clients for a JSON model server, an
//!   OpenAI-compatible chat endpoint and the `ffmpeg`/`ffprobe` binaries.
//!
//! Both families go through the same free functions ([`detect_objects`],
//! [`classify`], ...) which enforce the shared postconditions.

use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod http;
pub mod media;
pub mod stub;
mod syntax;

pub use syntax::{PartOfSpeech, SyntaxParse, TaggedToken};

/// Which backend an error or a fixture switch refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Decoder,
    Detector,
    Classifier,
    Ocr,
    Asr,
    Tagger,
    Captioner,
    Llm,
    Generator,
    Localizer,
    Presence,
    Parser,
}

impl AdapterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdapterKind::Decoder => "decoder",
            AdapterKind::Detector => "detector",
            AdapterKind::Classifier => "classifier",
            AdapterKind::Ocr => "ocr",
            AdapterKind::Asr => "asr",
            AdapterKind::Tagger => "tagger",
            AdapterKind::Captioner => "captioner",
            AdapterKind::Llm => "llm",
            AdapterKind::Generator => "generator",
            AdapterKind::Localizer => "localizer",
            AdapterKind::Presence => "presence",
            AdapterKind::Parser => "parser",
        }
    }
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdapterError {
    /// Backend missing, misconfigured or unreachable. Not worth retrying.
    #[error("{kind} adapter unavailable: {reason}")]
    Unavailable { kind: AdapterKind, reason: String },
    /// Backend asked us to slow down. Retriable.
    #[error("{kind} adapter rate limited")]
    RateLimited {
        kind: AdapterKind,
        retry_after: Option<Duration>,
    },
    /// Caller broke a precondition.
    #[error("{kind} adapter contract violation: {reason}")]
    Contract { kind: AdapterKind, reason: String },
    /// Backend answered with something that breaks the output contract.
    #[error("{kind} adapter returned malformed output: {reason}")]
    Malformed { kind: AdapterKind, reason: String },
}

impl AdapterError {
    pub fn kind(&self) -> AdapterKind {
        match self {
            AdapterError::Unavailable { kind, .. }
            | AdapterError::RateLimited { kind, .. }
            | AdapterError::Contract { kind, .. }
            | AdapterError::Malformed { kind, .. } => *kind,
        }
    }

    pub fn is_retriable(&self) -> bool {
        matches!(self, AdapterError::RateLimited { .. })
    }

    pub(crate) fn unavailable(kind: AdapterKind, reason: impl Into<String>) -> Self {
        AdapterError::Unavailable {
            kind,
            reason: reason.into(),
        }
    }

    pub(crate) fn contract(kind: AdapterKind, reason: impl Into<String>) -> Self {
        AdapterError::Contract {
            kind,
            reason: reason.into(),
        }
    }

    pub(crate) fn malformed(kind: AdapterKind, reason: impl Into<String>) -> Self {
        AdapterError::Malformed {
            kind,
            reason: reason.into(),
        }
    }
}

pub type AdapterResult<T> = Result<T, AdapterError>;

fn check_fraction(kind: AdapterKind, what: &str, value: f64) -> AdapterResult<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(AdapterError::malformed(
            kind,
            format!("{what} {value} outside [0, 1]"),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub label: String,
    pub confidence: f64,
}

impl DetectedObject {
    pub fn new(label: impl Into<String>, confidence: f64) -> AdapterResult<Self> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(AdapterError::malformed(
                AdapterKind::Detector,
                "empty object label",
            ));
        }
        let confidence = check_fraction(AdapterKind::Detector, "confidence", confidence)?;
        Ok(Self { label, confidence })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OcrResult {
    pub text: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundTag {
    pub label: String,
    pub confidence: f64,
}

/// Winning category of a zero-shot classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub category: String,
    pub score: f64,
}

/// Spatial activation grid for one frame, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    frame_time: f64,
}

impl ActivationMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, frame_time: f64) -> AdapterResult<Self> {
        let kind = AdapterKind::Localizer;
        if width == 0 || height == 0 {
            return Err(AdapterError::malformed(kind, "activation grid has no cells"));
        }
        if width * height != values.len() {
            return Err(AdapterError::malformed(
                kind,
                format!(
                    "{}x{} grid but {} activation values",
                    width,
                    height,
                    values.len()
                ),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(AdapterError::malformed(kind, format!("activation {v} is negative or not finite")));
        }
        if !(frame_time.is_finite() && frame_time >= 0.0) {
            return Err(AdapterError::malformed(kind, format!("frame time {frame_time} is invalid")));
        }
        Ok(Self {
            width,
            height,
            values,
            frame_time,
        })
    }

    pub fn zeros(width: usize, height: usize, frame_time: f64) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            frame_time,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame_time(&self) -> f64 {
        self.frame_time
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Rescales so the hottest cell is 1.0. All-zero maps are returned as is.
    pub fn normalized(mut self) -> Self {
        let max = self.max();
        if max > 0.0 {
            for v in &mut self.values {
                *v /= max;
            }
        }
        self
    }
}

/// Mono audio, samples in [-1, 1].
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl fmt::Debug for AudioClip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AudioClip")
            .field("samples", &self.samples.len())
            .field("sample_rate", &self.sample_rate)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClipError {
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("sample {index} = {value} outside [-1, 1]")]
    OutOfRange { index: usize, value: f32 },
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, ClipError> {
        if sample_rate == 0 {
            return Err(ClipError::ZeroSampleRate);
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && (-1.0..=1.0).contains(*s)))
        {
            return Err(ClipError::OutOfRange { index, value });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        assert!(sample_rate > 0);
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    /// Clamps out-of-range samples instead of rejecting them. Returns the
    /// number of samples that had to be clamped.
    pub fn clamped(mut samples: Vec<f32>, sample_rate: u32) -> Result<(Self, usize), ClipError> {
        if sample_rate == 0 {
            return Err(ClipError::ZeroSampleRate);
        }
        let mut clamped = 0;
        for s in &mut samples {
            if s.is_nan() {
                *s = 0.0;
                clamped += 1;
            } else if *s > 1.0 || *s < -1.0 {
                *s = s.clamp(-1.0, 1.0);
                clamped += 1;
            }
        }
        Ok((
            Self {
                samples,
                sample_rate,
            },
            clamped,
        ))
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Content hash over the sample rate and the little-endian sample bytes.
    pub fn sha256(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.sample_rate.to_le_bytes());
        for s in &self.samples {
            hasher.update(s.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Identity of a media file: its name plus a content digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MediaKey {
    pub file_name: String,
    pub sha256: String,
}

impl MediaKey {
    pub fn from_bytes(file_name: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            file_name: file_name.into(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

/// A decoded (or decodable) media file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaInfo {
    pub key: MediaKey,
    pub path: String,
    pub duration_s: f64,
}

/// One sampled video frame. `png` holds the encoded image when a real
/// decoder produced the frame; stub frames carry only their identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub source: Arc<MediaKey>,
    pub time_s: f64,
    pub png: Option<Arc<Vec<u8>>>,
}

/// The audio stream of a media file, tagged with its source.
#[derive(Debug, Clone, PartialEq)]
pub struct MediaAudio {
    pub source: Arc<MediaKey>,
    pub clip: AudioClip,
}

pub trait Adapter: Send + Sync {
    /// Implementations that cannot serve concurrent calls return true and the
    /// orchestrator serializes access to them.
    fn single_flight(&self) -> bool {
        false
    }
}

pub trait MediaDecoder: Adapter {
    fn probe(&self, path: &Path) -> AdapterResult<MediaInfo>;
    fn frame_at(&self, media: &MediaInfo, time_s: f64) -> AdapterResult<Frame>;
    fn audio(&self, media: &MediaInfo) -> AdapterResult<MediaAudio>;
}

pub trait ObjectDetector: Adapter {
    /// Raw detections. Callers go through [`detect_objects`], which applies
    /// the confidence threshold and ordering.
    fn detect_raw(&self, frame: &Frame) -> AdapterResult<Vec<DetectedObject>>;
}

pub trait ImageClassifier: Adapter {
    /// One non-negative score per category, same order as `categories`.
    fn scores(&self, frame: &Frame, categories: &[String]) -> AdapterResult<Vec<f64>>;
}

pub trait TextReader: Adapter {
    fn extract_text(&self, frame: &Frame) -> AdapterResult<OcrResult>;
}

pub trait SpeechTranscriber: Adapter {
    fn transcribe(&self, audio: &MediaAudio) -> AdapterResult<Transcript>;
}

pub trait SoundTagger: Adapter {
    fn tag_sounds(&self, audio: &MediaAudio) -> AdapterResult<Vec<SoundTag>>;
}

pub trait Captioner: Adapter {
    fn caption(&self, frame: &Frame) -> AdapterResult<String>;
}

pub trait LanguageModel: Adapter {
    fn complete(&self, prompt: &str) -> AdapterResult<String>;
}

pub trait AudioGenerator: Adapter {
    fn native_sample_rate(&self) -> u32;
    fn generate_audio(&self, description: &str, duration_s: f64) -> AdapterResult<AudioClip>;
}

pub trait ActivationLocalizer: Adapter {
    fn localize(&self, frame: &Frame, subject: &str) -> AdapterResult<ActivationMap>;
}

/// Binary visual match: how likely is `subject` visible in the frame.
/// Real backends contrast the two [`presence_prompts`].
pub trait PresenceMatcher: Adapter {
    fn presence_score(&self, frame: &Frame, subject: &str) -> AdapterResult<f64>;
}

pub trait SyntaxParser: Adapter {
    fn parse(&self, text: &str) -> AdapterResult<SyntaxParse>;
}

/// Positive and negative text prompts for a presence check.
pub fn presence_prompts(subject: &str) -> [String; 2] {
    [
        format!("a photo containing {subject}"),
        format!("a photo without {subject}"),
    ]
}

/// Detections at or above `threshold`, most confident first.
pub fn detect_objects(
    detector: &dyn ObjectDetector,
    frame: &Frame,
    threshold: f64,
) -> AdapterResult<Vec<DetectedObject>> {
    let raw = detector.detect_raw(frame)?;
    let mut kept = Vec::with_capacity(raw.len());
    for det in raw {
        let det = DetectedObject::new(det.label, det.confidence)?;
        if det.confidence >= threshold {
            kept.push(det);
        }
    }
    kept.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(kept)
}

/// Zero-shot classification over `categories` (at least two). Scores are
/// normalized to sum to one; ties go to the earlier category.
pub fn classify(
    classifier: &dyn ImageClassifier,
    frame: &Frame,
    categories: &[String],
) -> AdapterResult<Classification> {
    let kind = AdapterKind::Classifier;
    if categories.len() < 2 {
        return Err(AdapterError::contract(
            kind,
            format!("need at least two categories, got {}", categories.len()),
        ));
    }
    let scores = classifier.scores(frame, categories)?;
    let probs = normalize_scores(kind, &scores, categories.len())?;
    let (best, score) = probs
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc });
    Ok(Classification {
        category: categories[best].clone(),
        score,
    })
}

/// Normalized score distribution over `categories`.
pub fn classify_scores(
    classifier: &dyn ImageClassifier,
    frame: &Frame,
    categories: &[String],
) -> AdapterResult<Vec<f64>> {
    if categories.len() < 2 {
        return Err(AdapterError::contract(
            AdapterKind::Classifier,
            format!("need at least two categories, got {}", categories.len()),
        ));
    }
    let scores = classifier.scores(frame, categories)?;
    normalize_scores(AdapterKind::Classifier, &scores, categories.len())
}

fn normalize_scores(kind: AdapterKind, scores: &[f64], expected: usize) -> AdapterResult<Vec<f64>> {
    if scores.len() != expected {
        return Err(AdapterError::malformed(
            kind,
            format!("{} scores for {} categories", scores.len(), expected),
        ));
    }
    if let Some(s) = scores.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(AdapterError::malformed(kind, format!("invalid score {s}")));
    }
    let total: f64 = scores.iter().sum();
    if total == 0.0 {
        return Ok(vec![1.0 / expected as f64; expected]);
    }
    Ok(scores.iter().map(|s| (s / total).min(1.0)).collect())
}

pub fn extract_text(reader: &dyn TextReader, frame: &Frame) -> AdapterResult<OcrResult> {
    let mut out = reader.extract_text(frame)?;
    out.confidence = check_fraction(AdapterKind::Ocr, "confidence", out.confidence)?;
    out.text = out.text.trim().to_string();
    Ok(out)
}

pub fn transcribe(asr: &dyn SpeechTranscriber, audio: &MediaAudio) -> AdapterResult<Transcript> {
    let out = asr.transcribe(audio)?;
    Ok(Transcript {
        text: out.text.trim().to_string(),
    })
}

pub fn tag_sounds(tagger: &dyn SoundTagger, audio: &MediaAudio) -> AdapterResult<Vec<SoundTag>> {
    let mut tags = tagger.tag_sounds(audio)?;
    for tag in &tags {
        check_fraction(AdapterKind::Tagger, "confidence", tag.confidence)?;
        if tag.label.trim().is_empty() {
            return Err(AdapterError::malformed(AdapterKind::Tagger, "empty sound label"));
        }
    }
    tags.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.label.cmp(&b.label)));
    Ok(tags)
}

pub fn caption(captioner: &dyn Captioner, frame: &Frame) -> AdapterResult<String> {
    Ok(captioner.caption(frame)?.trim().to_string())
}

pub fn complete(llm: &dyn LanguageModel, prompt: &str) -> AdapterResult<String> {
    if prompt.trim().is_empty() {
        return Err(AdapterError::contract(AdapterKind::Llm, "empty prompt"));
    }
    llm.complete(prompt)
}

/// Generated clip of `duration_s` seconds (within one sample) at the
/// generator's native rate.
pub fn generate_audio(
    generator: &dyn AudioGenerator,
    description: &str,
    duration_s: f64,
) -> AdapterResult<AudioClip> {
    let kind = AdapterKind::Generator;
    if description.trim().is_empty() {
        return Err(AdapterError::contract(kind, "empty description"));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(AdapterError::contract(kind, format!("duration {duration_s} must be positive")));
    }
    let clip = generator.generate_audio(description, duration_s)?;
    let expected = duration_s * clip.sample_rate() as f64;
    if (clip.len() as f64 - expected).abs() > 1.0 {
        return Err(AdapterError::malformed(
            kind,
            format!("expected ~{expected:.0} samples, got {}", clip.len()),
        ));
    }
    Ok(clip)
}

/// Activation map normalized to a peak of 1.0 (all-zero maps stay zero).
pub fn localize(
    localizer: &dyn ActivationLocalizer,
    frame: &Frame,
    subject: &str,
) -> AdapterResult<ActivationMap> {
    let map = localizer.localize(frame, subject)?;
    let map = ActivationMap::new(map.width, map.height, map.values, frame.time_s)?;
    Ok(map.normalized())
}

pub fn presence_score(matcher: &dyn PresenceMatcher, frame: &Frame, subject: &str) -> AdapterResult<f64> {
    let score = matcher.presence_score(frame, subject)?;
    check_fraction(AdapterKind::Presence, "presence score", score)
}

/// Retry policy for rate-limited calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay_ms: 0,
        }
    }

    /// Runs `op`, retrying only on [`AdapterError::RateLimited`].
    pub fn run<T>(&self, mut op: impl FnMut() -> AdapterResult<T>) -> AdapterResult<T> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op() {
                Err(err) if err.is_retriable() && attempt < self.max_attempts.max(1) => {
                    let delay = match &err {
                        AdapterError::RateLimited {
                            retry_after: Some(d),
                            ..
                        } if self.base_delay_ms > 0 => *d,
                        _ => Duration::from_millis(self.base_delay_ms.saturating_mul(1 << (attempt - 1).min(16))),
                    };
                    log::warn!("{err}; retrying in {delay:?} (attempt {attempt})");
                    std::thread::sleep(delay);
                }
                other => return other,
            }
        }
    }
}

/// The full set of backends one pipeline run talks to.
#[derive(Clone)]
pub struct AdapterSet {
    pub decoder: Arc<dyn MediaDecoder>,
    pub detector: Arc<dyn ObjectDetector>,
    pub classifier: Arc<dyn ImageClassifier>,
    pub ocr: Arc<dyn TextReader>,
    pub asr: Arc<dyn SpeechTranscriber>,
    pub tagger: Arc<dyn SoundTagger>,
    pub captioner: Arc<dyn Captioner>,
    pub llm: Arc<dyn LanguageModel>,
    pub generator: Arc<dyn AudioGenerator>,
    pub localizer: Arc<dyn ActivationLocalizer>,
    pub presence: Arc<dyn PresenceMatcher>,
    pub parser: Arc<dyn SyntaxParser>,
}

impl AdapterSet {
    /// Every adapter backed by one stub built from `manifest`.
    pub fn stub(manifest: stub::StubManifest) -> Self {
        let s = Arc::new(stub::StubAdapters::new(manifest));
        Self {
            decoder: s.clone(),
            detector: s.clone(),
            classifier: s.clone(),
            ocr: s.clone(),
            asr: s.clone(),
            tagger: s.clone(),
            captioner: s.clone(),
            llm: s.clone(),
            generator: s.clone(),
            localizer: s.clone(),
            presence: s.clone(),
            parser: s,
        }
    }

    /// Whether any scene-understanding backend asked to be serialized.
    pub fn scene_single_flight(&self) -> bool {
        self.detector.single_flight()
            || self.classifier.single_flight()
            || self.ocr.single_flight()
            || self.asr.single_flight()
            || self.tagger.single_flight()
            || self.captioner.single_flight()
    }
}

impl fmt::Debug for AdapterSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdapterSet").finish_non_exhaustive()
    }
}
