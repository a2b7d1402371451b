//! Default level and pan for each track, predicted from where (and whether)
//! its subject shows up in the frames.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{self, ActivationMap, AdapterError, AdapterSet, Frame, SyntaxParser};
use crate::soundgen::{AudioTrack, Keyframe, TrackCategory};

/// Background sounds sit this many dB under the foreground baseline.
pub const BACKGROUND_DROP_DB: f64 = 7.0;
/// Area fraction that maps to a 0 dB offset.
pub const REFERENCE_AREA: f64 = 0.25;
pub const DB_PER_AREA_DOUBLING: f64 = 6.0;
pub const MIN_AREA_GAIN_DB: f64 = -12.0;
pub const MAX_AREA_GAIN_DB: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPresence {
    pub subject: String,
    pub present: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub category: TrackCategory,
    pub subject: String,
    pub presence: Option<SubjectPresence>,
    pub gain_keyframes: Vec<Keyframe>,
    pub pan_keyframes: Vec<Keyframe>,
    pub area_fractions: Vec<f64>,
    /// Set when an adapter failed and the track fell back to background.
    pub warning: Option<String>,
}

impl LocalizationResult {
    pub fn apply_to(&self, track: &mut AudioTrack) {
        track.category = self.category;
        track.gain_automation = self.gain_keyframes.clone();
        track.pan_automation = self.pan_keyframes.clone();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizationConfig {
    pub presence_threshold: f64,
    pub foreground_baseline_db: f64,
    /// Cells at or above this fraction of the map maximum count towards the
    /// subject's area.
    pub area_binarize: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            presence_threshold: 0.5,
            foreground_baseline_db: 0.0,
            area_binarize: 0.5,
        }
    }
}

#[derive(Debug, Error)]
pub enum LocalizationError {
    #[error("area fraction {0} outside [0, 1]")]
    AreaOutOfRange(f64),
    #[error("no frames to check")]
    NoFrames,
    #[error("empty sound description")]
    EmptyDescription,
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

fn strip_determiners(words: &[&str]) -> String {
    let start = words
        .iter()
        .position(|w| !matches!(w.to_lowercase().as_str(), "a" | "an" | "the" | "some"))
        .unwrap_or(words.len());
    words[start..].join(" ")
}

/// Head noun phrase of a sound description. "X of Y" descriptions name
/// their source in Y, so the phrase after "of" wins.
pub fn extract_subject(description: &str, parser: &dyn SyntaxParser) -> Result<String, LocalizationError> {
    let description = description.trim();
    if description.is_empty() {
        return Err(LocalizationError::EmptyDescription);
    }
    let parse = parser.parse(description)?;
    if !parse.is_valid() {
        return Err(AdapterError::malformed(adapters::AdapterKind::Parser, "noun chunk out of bounds").into());
    }
    let chunk = match parse.noun_chunks.as_slice() {
        [] => None,
        [first, rest @ ..] => {
            let followed_by_of = parse
                .tokens
                .get(first.1)
                .is_some_and(|t| t.text.eq_ignore_ascii_case("of"));
            match rest.first() {
                Some(next) if followed_by_of && next.0 == first.1 + 1 => Some(*next),
                _ => Some(*first),
            }
        }
    };
    if let Some(range) = chunk {
        let text = parse.chunk_text(range);
        let stripped = strip_determiners(&text.split_whitespace().collect::<Vec<_>>());
        if !stripped.is_empty() {
            return Ok(stripped);
        }
    }
    if let Some(noun) = parse.tokens.iter().find(|t| t.pos.is_nominal()) {
        return Ok(noun.text.clone());
    }
    Ok(description.to_string())
}

/// Best match score over the frames; present iff it reaches `threshold`.
pub fn check_presence(
    subject: &str,
    frames: &[Frame],
    matcher: &dyn adapters::PresenceMatcher,
    threshold: f64,
) -> Result<SubjectPresence, LocalizationError> {
    if frames.is_empty() {
        return Err(LocalizationError::NoFrames);
    }
    let mut score = 0.0f64;
    for frame in frames {
        score = score.max(adapters::presence_score(matcher, frame, subject)?);
    }
    Ok(SubjectPresence {
        subject: subject.to_string(),
        present: score >= threshold,
        score,
    })
}

pub fn classify_category(presence: &SubjectPresence) -> TrackCategory {
    if presence.present {
        TrackCategory::Foreground
    } else {
        TrackCategory::Background
    }
}

pub fn background_gain(foreground_baseline_db: f64) -> f64 {
    foreground_baseline_db - BACKGROUND_DROP_DB
}

/// Share of cells at or above `binarize`·max. All-zero maps have no area.
pub fn area_fraction(map: &ActivationMap, binarize: f64) -> f64 {
    let max = map.max();
    if max <= 0.0 {
        return 0.0;
    }
    let cut = binarize * max;
    let hits = map.values().iter().filter(|&&v| v >= cut).count();
    hits as f64 / map.values().len() as f64
}

/// 6 dB per doubling of area around the reference, clamped.
pub fn area_to_gain(area_fraction: f64) -> Result<f64, LocalizationError> {
    if !(0.0..=1.0).contains(&area_fraction) {
        return Err(LocalizationError::AreaOutOfRange(area_fraction));
    }
    if area_fraction == 0.0 {
        return Ok(MIN_AREA_GAIN_DB);
    }
    let offset = DB_PER_AREA_DOUBLING * (area_fraction / REFERENCE_AREA).log2();
    Ok(offset.clamp(MIN_AREA_GAIN_DB, MAX_AREA_GAIN_DB))
}

/// Activation-weighted horizontal centroid mapped to [-1, 1], using cell
/// centers.
pub fn centroid_to_pan(map: &ActivationMap) -> f64 {
    let (w, h) = (map.width(), map.height());
    let mut total = 0.0;
    let mut moment = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = map.get(x, y);
            total += v;
            moment += v * (x as f64 + 0.5);
        }
    }
    if total <= 0.0 {
        return 0.0;
    }
    (2.0 * (moment / total) / w as f64 - 1.0).clamp(-1.0, 1.0)
}

/// Centered 3-point moving average; the ends average what is available.
pub fn smooth3(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let window = &values[lo..=hi];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect()
}

fn background(subject: String, presence: Option<SubjectPresence>, cfg: &LocalizationConfig, warning: Option<String>) -> LocalizationResult {
    LocalizationResult {
        category: TrackCategory::Background,
        subject,
        presence,
        gain_keyframes: vec![Keyframe::new(0.0, background_gain(cfg.foreground_baseline_db))],
        pan_keyframes: vec![Keyframe::new(0.0, 0.0)],
        area_fractions: Vec::new(),
        warning,
    }
}

fn foreground(
    subject: &str,
    frames: &[Frame],
    adapters: &AdapterSet,
    cfg: &LocalizationConfig,
    duration: f64,
) -> Result<(Vec<Keyframe>, Vec<Keyframe>, Vec<f64>), LocalizationError> {
    let mut gains = Vec::with_capacity(frames.len());
    let mut pans = Vec::with_capacity(frames.len());
    let mut areas = Vec::with_capacity(frames.len());
    for frame in frames {
        let map = adapters::localize(adapters.localizer.as_ref(), frame, subject)?;
        let area = area_fraction(&map, cfg.area_binarize);
        gains.push(cfg.foreground_baseline_db + area_to_gain(area)?);
        pans.push(centroid_to_pan(&map));
        areas.push(area);
    }
    let times = frames.iter().map(|f| f.time_s.clamp(0.0, duration));
    let gain_keys = times.clone().zip(smooth3(&gains)).map(|(t, v)| Keyframe::new(t, v)).collect();
    let pan_keys = times.zip(smooth3(&pans)).map(|(t, v)| Keyframe::new(t, v)).collect();
    Ok((gain_keys, pan_keys, areas))
}

/// Picks foreground or background for the track and derives its default
/// automation. Adapter failures degrade to background with a warning.
pub fn localize_track(
    description: &str,
    track: &AudioTrack,
    frames: &[Frame],
    adapters: &AdapterSet,
    cfg: &LocalizationConfig,
) -> LocalizationResult {
    let subject = match extract_subject(description, adapters.parser.as_ref()) {
        Ok(s) => s,
        Err(e) => {
            let warning = format!("track {}: subject extraction failed, using background: {e}", track.id);
            log::warn!("{warning}");
            return background(description.trim().to_string(), None, cfg, Some(warning));
        }
    };
    let presence = match check_presence(&subject, frames, adapters.presence.as_ref(), cfg.presence_threshold) {
        Ok(p) => p,
        Err(e) => {
            let warning = format!("track {}: presence check failed, using background: {e}", track.id);
            log::warn!("{warning}");
            return background(subject, None, cfg, Some(warning));
        }
    };
    if classify_category(&presence) == TrackCategory::Background {
        return background(subject, Some(presence), cfg, None);
    }
    match foreground(&subject, frames, adapters, cfg, track.duration_target) {
        Ok((gain_keyframes, pan_keyframes, area_fractions)) => LocalizationResult {
            category: TrackCategory::Foreground,
            subject,
            presence: Some(presence),
            gain_keyframes,
            pan_keyframes,
            area_fractions,
            warning: None,
        },
        Err(e) => {
            let warning = format!("track {}: localization failed, using background: {e}", track.id);
            log::warn!("{warning}");
            background(subject, Some(presence), cfg, Some(warning))
        }
    }
}
