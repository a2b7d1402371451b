//! Turns selected suggestions into audio tracks that span the source media.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{self, AdapterError, AudioClip, AudioGenerator};
use crate::ideation::SoundSuggestion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackCategory {
    Foreground,
    Background,
    Unknown,
}

/// Automation point: `value` holds from `time_s` on, interpolated linearly
/// towards the next point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub time_s: f64,
    pub value: f64,
}

impl Keyframe {
    pub const fn new(time_s: f64, value: f64) -> Self {
        Self { time_s, value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioTrack {
    pub id: String,
    pub suggestion_id: String,
    pub clip: AudioClip,
    pub duration_target: f64,
    pub category: TrackCategory,
    /// Gain in dB over time.
    pub gain_automation: Vec<Keyframe>,
    /// Pan in [-1, 1] over time.
    pub pan_automation: Vec<Keyframe>,
    pub user_gain_offset_db: f64,
}

#[derive(Debug, Error)]
pub enum SoundgenError {
    #[error(transparent)]
    Generator(#[from] AdapterError),
    #[error("suggestion {0} is not selected")]
    NotSelected(String),
    #[error("target duration {0} must be positive")]
    InvalidTarget(f64),
    #[error("cannot tile an empty clip")]
    EmptyClip,
    #[error("crossfade {crossfade_s}s must be non-negative and shorter than the {clip_s}s clip")]
    InvalidCrossfade { crossfade_s: f64, clip_s: f64 },
    #[error("invalid track {id}: {reason}")]
    InvalidTrack { id: String, reason: String },
}

fn check_automation(
    id: &str,
    name: &str,
    keys: &[Keyframe],
    duration: f64,
    range: Option<(f64, f64)>,
) -> Result<(), SoundgenError> {
    let invalid = |reason: String| SoundgenError::InvalidTrack {
        id: id.to_string(),
        reason,
    };
    if keys.is_empty() {
        return Err(invalid(format!("{name} automation is empty")));
    }
    let mut prev = 0.0;
    for k in keys {
        if !(k.time_s.is_finite() && k.value.is_finite()) {
            return Err(invalid(format!("{name} keyframe {k:?} is not finite")));
        }
        if k.time_s < prev || k.time_s > duration {
            return Err(invalid(format!(
                "{name} keyframe at {}s is out of order or outside [0, {duration}]",
                k.time_s
            )));
        }
        if let Some((lo, hi)) = range {
            if !(lo..=hi).contains(&k.value) {
                return Err(invalid(format!("{name} value {} outside [{lo}, {hi}]", k.value)));
            }
        }
        prev = k.time_s;
    }
    Ok(())
}

impl AudioTrack {
    pub fn validate(&self) -> Result<(), SoundgenError> {
        if !(self.duration_target.is_finite() && self.duration_target > 0.0) {
            return Err(SoundgenError::InvalidTrack {
                id: self.id.clone(),
                reason: format!("target duration {}", self.duration_target),
            });
        }
        if !self.user_gain_offset_db.is_finite() {
            return Err(SoundgenError::InvalidTrack {
                id: self.id.clone(),
                reason: "gain offset is not finite".into(),
            });
        }
        check_automation(&self.id, "gain", &self.gain_automation, self.duration_target, None)?;
        check_automation(&self.id, "pan", &self.pan_automation, self.duration_target, Some((-1.0, 1.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoundgenConfig {
    /// Length requested from the generator before tiling.
    pub clip_duration_s: f64,
    pub crossfade_s: f64,
}

impl Default for SoundgenConfig {
    fn default() -> Self {
        Self {
            clip_duration_s: 5.0,
            crossfade_s: 0.05,
        }
    }
}

/// Repeats `clip` to `target_s` seconds (to the nearest sample), overlapping
/// consecutive copies by `crossfade_s` with complementary cos²/sin² fades.
/// The fade gains sum to one, so identical material crossfades at constant
/// level. Shorter targets truncate.
pub fn tile_clip(clip: &AudioClip, target_s: f64, crossfade_s: f64) -> Result<AudioClip, SoundgenError> {
    if clip.is_empty() {
        return Err(SoundgenError::EmptyClip);
    }
    if !(target_s.is_finite() && target_s > 0.0) {
        return Err(SoundgenError::InvalidTarget(target_s));
    }
    let rate = clip.sample_rate();
    let len = clip.len();
    let fade = (crossfade_s * rate as f64).round();
    if !(crossfade_s >= 0.0 && crossfade_s < clip.duration_s()) || fade >= len as f64 {
        return Err(SoundgenError::InvalidCrossfade {
            crossfade_s,
            clip_s: clip.duration_s(),
        });
    }
    let fade = fade as usize;
    let target = (target_s * rate as f64).round() as usize;
    if target == len {
        return Ok(clip.clone());
    }
    if target < len {
        return Ok(AudioClip::new(clip.samples()[..target].to_vec(), rate).expect("slice of a valid clip"));
    }

    let src = clip.samples();
    let stride = len - fade;
    let theta = |j: usize| (j as f64 + 0.5) / fade as f64 * FRAC_PI_2;
    let mut out = vec![0.0f64; target];
    let mut offset = 0;
    let mut first = true;
    while offset < target {
        let has_next = offset + stride < target;
        for (i, &s) in src.iter().enumerate() {
            let n = offset + i;
            if n >= target {
                break;
            }
            let mut gain = 1.0;
            if !first && i < fade {
                gain *= theta(i).sin().powi(2);
            }
            if has_next && i >= stride {
                gain *= theta(i - stride).cos().powi(2);
            }
            out[n] += gain * s as f64;
        }
        first = false;
        offset += stride;
    }

    let (tiled, clamped) =
        AudioClip::clamped(out.into_iter().map(|s| s as f32).collect(), rate).expect("rate already validated");
    if clamped > 0 {
        log::warn!("tiling clamped {clamped} samples to [-1, 1]");
    }
    Ok(tiled)
}

/// Generates, tiles and wraps one suggestion as a track with neutral
/// automation and no category yet.
pub fn generate_track(
    suggestion: &SoundSuggestion,
    target_duration: f64,
    generator: &dyn AudioGenerator,
    config: &SoundgenConfig,
    track_id: String,
) -> Result<AudioTrack, SoundgenError> {
    if !suggestion.selected {
        return Err(SoundgenError::NotSelected(suggestion.id.clone()));
    }
    if !(target_duration.is_finite() && target_duration > 0.0) {
        return Err(SoundgenError::InvalidTarget(target_duration));
    }
    let clip = adapters::generate_audio(generator, &suggestion.text, config.clip_duration_s)?;
    let crossfade = config.crossfade_s.min(clip.duration_s() / 2.0).max(0.0);
    let clip = tile_clip(&clip, target_duration, crossfade)?;
    Ok(AudioTrack {
        id: track_id,
        suggestion_id: suggestion.id.clone(),
        duration_target: target_duration,
        clip,
        category: TrackCategory::Unknown,
        gain_automation: vec![Keyframe::new(0.0, 0.0)],
        pan_automation: vec![Keyframe::new(0.0, 0.0)],
        user_gain_offset_db: 0.0,
    })
}
