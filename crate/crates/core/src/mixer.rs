//! Level and pan math, automation rendering, multitrack summation and
//! export.

use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::soundgen::{AudioTrack, Keyframe};
use crate::wav;

#[derive(Debug, Clone, PartialEq)]
pub struct StereoBuffer {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub sample_rate: u32,
}

impl StereoBuffer {
    pub fn silent(len: usize, sample_rate: u32) -> Self {
        Self {
            left: vec![0.0; len],
            right: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.left
            .iter()
            .chain(&self.right)
            .fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// RMS over both channels.
    pub fn rms(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.left.iter().chain(&self.right).map(|s| s * s).sum();
        (sum / (2 * self.len()) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanLaw {
    #[default]
    ConstantPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixSettings {
    pub output_sample_rate: u32,
    pub normalization_ceiling: f64,
    pub pan_law: PanLaw,
}

impl Default for MixSettings {
    fn default() -> Self {
        Self {
            output_sample_rate: 48_000,
            normalization_ceiling: 0.99,
            pan_law: PanLaw::ConstantPower,
        }
    }
}

impl MixSettings {
    pub fn validate(&self) -> Result<(), MixError> {
        if self.output_sample_rate == 0 {
            return Err(MixError::InvalidSettings("output sample rate must be positive".into()));
        }
        if !(self.normalization_ceiling > 0.0 && self.normalization_ceiling <= 1.0) {
            return Err(MixError::InvalidSettings(format!(
                "normalization ceiling {} outside (0, 1]",
                self.normalization_ceiling
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MixError {
    #[error("track {0} has an empty clip")]
    EmptyClip(String),
    #[error("track {0} has no gain or pan automation")]
    MissingAutomation(String),
    #[error("nothing to mix")]
    NoTracks,
    #[error("invalid mix settings: {0}")]
    InvalidSettings(String),
    #[error("muxer {program:?} not found; combined and individual exports remain available")]
    MuxerMissing { program: String },
    #[error("muxer failed: {0}")]
    MuxerFailed(String),
    #[error("export I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Wav(#[from] wav::WavError),
}

/// Linear factor for a level in dB.
pub fn db_to_amplitude(gain_db: f64) -> f64 {
    10f64.powf(gain_db / 20.0)
}

pub fn amplitude_to_db(factor: f64) -> f64 {
    20.0 * factor.log10()
}

/// Constant-power placement; pan −1 is hard left, +1 hard right.
pub fn apply_pan(sample: f64, pan: f64) -> (f64, f64) {
    let theta = (pan.clamp(-1.0, 1.0) + 1.0) * FRAC_PI_4;
    (sample * theta.cos(), sample * theta.sin())
}

/// Value of an automation lane at `t`: linear between keyframes, held
/// constant before the first and after the last.
pub fn automation_value(keys: &[Keyframe], t: f64) -> f64 {
    match keys {
        [] => 0.0,
        [only] => only.value,
        _ => {
            let idx = keys.partition_point(|k| k.time_s <= t);
            if idx == 0 {
                keys[0].value
            } else if idx == keys.len() {
                keys[keys.len() - 1].value
            } else {
                interpolate(keys[idx - 1], keys[idx], t)
            }
        }
    }
}

fn interpolate(a: Keyframe, b: Keyframe, t: f64) -> f64 {
    let span = b.time_s - a.time_s;
    if span <= 0.0 {
        return b.value;
    }
    a.value + (b.value - a.value) * (t - a.time_s) / span
}

/// Forward-only automation reader for sample-by-sample rendering.
struct Lane<'a> {
    keys: &'a [Keyframe],
    next: usize,
}

impl<'a> Lane<'a> {
    fn new(keys: &'a [Keyframe]) -> Self {
        Self { keys, next: 0 }
    }

    fn is_constant(&self) -> bool {
        self.keys.len() <= 1 || self.keys.windows(2).all(|w| w[0].value == w[1].value)
    }

    fn at(&mut self, t: f64) -> f64 {
        while self.next < self.keys.len() && self.keys[self.next].time_s <= t {
            self.next += 1;
        }
        if self.next == 0 {
            self.keys[0].value
        } else if self.next == self.keys.len() {
            self.keys[self.keys.len() - 1].value
        } else {
            interpolate(self.keys[self.next - 1], self.keys[self.next], t)
        }
    }
}

/// Linear-interpolation resampling of `samples` from `from` Hz to `to` Hz.
pub fn resample_linear(samples: &[f32], from: u32, to: u32) -> Vec<f64> {
    if from == to {
        return samples.iter().map(|&s| s as f64).collect();
    }
    if samples.is_empty() {
        return Vec::new();
    }
    let out_len = (samples.len() as f64 * to as f64 / from as f64).round() as usize;
    let last = samples.len() - 1;
    (0..out_len)
        .map(|n| {
            let pos = n as f64 * from as f64 / to as f64;
            let i = pos.floor() as usize;
            if i >= last {
                samples[last] as f64
            } else {
                let frac = pos - i as f64;
                samples[i] as f64 + (samples[i + 1] as f64 - samples[i] as f64) * frac
            }
        })
        .collect()
}

/// One track at the output rate with its gain (automation plus user
/// offset) and pan applied.
pub fn render_track(track: &AudioTrack, settings: &MixSettings) -> Result<StereoBuffer, MixError> {
    settings.validate()?;
    if track.clip.is_empty() {
        return Err(MixError::EmptyClip(track.id.clone()));
    }
    if track.gain_automation.is_empty() || track.pan_automation.is_empty() {
        return Err(MixError::MissingAutomation(track.id.clone()));
    }
    let rate = settings.output_sample_rate;
    let mono = resample_linear(track.clip.samples(), track.clip.sample_rate(), rate);
    let mut gain = Lane::new(&track.gain_automation);
    let mut pan = Lane::new(&track.pan_automation);

    let mut out = StereoBuffer::silent(mono.len(), rate);
    let fixed = (gain.is_constant() && pan.is_constant()).then(|| {
        let g = db_to_amplitude(track.gain_automation[0].value + track.user_gain_offset_db);
        apply_pan(g, track.pan_automation[0].value)
    });
    for (n, &s) in mono.iter().enumerate() {
        let (l, r) = match fixed {
            Some((gl, gr)) => (s * gl, s * gr),
            None => {
                let t = n as f64 / rate as f64;
                let g = db_to_amplitude(gain.at(t) + track.user_gain_offset_db);
                apply_pan(s * g, pan.at(t))
            }
        };
        out.left[n] = l;
        out.right[n] = r;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixdown {
    pub buffer: StereoBuffer,
    /// Global factor applied to bring the peak under the ceiling (1.0 when
    /// no scaling was needed).
    pub normalization_factor: f64,
    pub peak_before: f64,
}

/// Sums already-rendered buffers and normalizes the result.
pub fn sum_and_normalize(rendered: &[StereoBuffer], settings: &MixSettings) -> Result<Mixdown, MixError> {
    settings.validate()?;
    if rendered.is_empty() {
        return Err(MixError::NoTracks);
    }
    let len = rendered.iter().map(StereoBuffer::len).max().unwrap_or(0);
    let mut mix = StereoBuffer::silent(len, settings.output_sample_rate);
    for buf in rendered {
        for (acc, s) in mix.left.iter_mut().zip(&buf.left) {
            *acc += s;
        }
        for (acc, s) in mix.right.iter_mut().zip(&buf.right) {
            *acc += s;
        }
    }
    let peak = mix.peak();
    let factor = if peak > settings.normalization_ceiling {
        settings.normalization_ceiling / peak
    } else {
        1.0
    };
    if factor != 1.0 {
        for s in mix.left.iter_mut().chain(mix.right.iter_mut()) {
            *s *= factor;
        }
    }
    Ok(Mixdown {
        buffer: mix,
        normalization_factor: factor,
        peak_before: peak,
    })
}

/// Renders and sums every track, zero-padding to the longest, then scales
/// the whole mix once if its peak exceeds the ceiling.
pub fn mixdown(tracks: &[AudioTrack], settings: &MixSettings) -> Result<Mixdown, MixError> {
    if tracks.is_empty() {
        return Err(MixError::NoTracks);
    }
    let rendered = std::thread::scope(|s| {
        let handles: Vec<_> = tracks.iter().map(|t| s.spawn(move || render_track(t, settings))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("render thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    sum_and_normalize(&rendered, settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportKind {
    /// Source visuals with the combined soundtrack.
    Final,
    Combined,
    Individual,
}

impl std::str::FromStr for ExportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "final" => Ok(ExportKind::Final),
            "combined" => Ok(ExportKind::Combined),
            "individual" => Ok(ExportKind::Individual),
            other => Err(format!("unknown export kind {other:?} (final, combined, individual)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportConfig {
    /// Muxer argv; `{video}`, `{audio}` and `{output}` are substituted.
    pub muxer_command: Vec<String>,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            muxer_command: [
                "ffmpeg", "-y", "-v", "error", "-i", "{video}", "-i", "{audio}", "-map", "0:v:0", "-map", "1:a:0",
                "-c:v", "copy", "-c:a", "aac", "-shortest", "{output}",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

pub const COMBINED_FILE: &str = "mixdown.wav";

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MixError + '_ {
    move |source| MixError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the requested export into `out_dir` and returns the files written.
pub fn export(
    tracks: &[AudioTrack],
    source_media: &Path,
    which: ExportKind,
    settings: &MixSettings,
    export_config: &ExportConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, MixError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    match which {
        ExportKind::Individual => {
            if tracks.is_empty() {
                return Err(MixError::NoTracks);
            }
            let mut written = Vec::with_capacity(tracks.len());
            for track in tracks {
                let buf = render_track(track, settings)?;
                let path = out_dir.join(format!("{}.wav", track.id));
                wav::write_stereo_16(&path, &buf)?;
                written.push(path);
            }
            Ok(written)
        }
        ExportKind::Combined => {
            let mix = mixdown(tracks, settings)?;
            let path = out_dir.join(COMBINED_FILE);
            wav::write_stereo_16(&path, &mix.buffer)?;
            Ok(vec![path])
        }
        ExportKind::Final => {
            let program = export_config
                .muxer_command
                .first()
                .cloned()
                .ok_or_else(|| MixError::MuxerMissing { program: String::new() })?;
            let mix = mixdown(tracks, settings)?;
            let audio = out_dir.join(".final-audio.wav");
            wav::write_stereo_16(&audio, &mix.buffer)?;
            let ext = source_media.extension().and_then(|e| e.to_str()).unwrap_or("mp4");
            let output = out_dir.join(format!("final.{ext}"));
            let result = run_muxer(&export_config.muxer_command, source_media, &audio, &output);
            let _ = fs::remove_file(&audio);
            match result {
                Err(e) if e.kind() == io::ErrorKind::NotFound => Err(MixError::MuxerMissing { program }),
                Err(e) => Err(MixError::MuxerFailed(e.to_string())),
                Ok(output_status) if !output_status.status.success() => Err(MixError::MuxerFailed(
                    String::from_utf8_lossy(&output_status.stderr).trim().to_string(),
                )),
                Ok(_) => Ok(vec![output]),
            }
        }
    }
}

fn run_muxer(template: &[String], video: &Path, audio: &Path, output: &Path) -> io::Result<std::process::Output> {
    let args: Vec<String> = template[1..]
        .iter()
        .map(|a| {
            a.replace("{video}", &video.to_string_lossy())
                .replace("{audio}", &audio.to_string_lossy())
                .replace("{output}", &output.to_string_lossy())
        })
        .collect();
    Command::new(&template[0])
        .args(&args)
        .stdin(Stdio::null())
        .output()
}
