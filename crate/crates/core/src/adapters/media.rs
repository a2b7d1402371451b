//! Media decoding through the `ffprobe` / `ffmpeg` binaries.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::*;

/// Mono rate handed to the speech and sound-tagging backends.
pub const DECODED_AUDIO_RATE: u32 = 16_000;

#[derive(Debug, Clone)]
pub struct FfmpegDecoder {
    ffmpeg: PathBuf,
    ffprobe: PathBuf,
}

impl FfmpegDecoder {
    pub fn new(ffmpeg: impl Into<PathBuf>, ffprobe: impl Into<PathBuf>) -> Self {
        Self {
            ffmpeg: ffmpeg.into(),
            ffprobe: ffprobe.into(),
        }
    }

    fn run(&self, program: &Path, args: &[&str]) -> AdapterResult<Vec<u8>> {
        let kind = AdapterKind::Decoder;
        let output = Command::new(program)
            .args(args)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| AdapterError::unavailable(kind, format!("cannot run {}: {e}", program.display())))?;
        if !output.status.success() {
            return Err(AdapterError::contract(
                kind,
                format!(
                    "{} failed: {}",
                    program.display(),
                    String::from_utf8_lossy(&output.stderr).trim()
                ),
            ));
        }
        Ok(output.stdout)
    }
}

fn file_digest(path: &Path) -> std::io::Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl Adapter for FfmpegDecoder {}

impl MediaDecoder for FfmpegDecoder {
    fn probe(&self, path: &Path) -> AdapterResult<MediaInfo> {
        let kind = AdapterKind::Decoder;
        let sha256 = file_digest(path)
            .map_err(|e| AdapterError::contract(kind, format!("cannot read {}: {e}", path.display())))?;
        let path_str = path.to_string_lossy();
        let out = self.run(
            &self.ffprobe,
            &[
                "-v",
                "error",
                "-show_entries",
                "format=duration",
                "-of",
                "default=noprint_wrappers=1:nokey=1",
                &path_str,
            ],
        )?;
        let text = String::from_utf8_lossy(&out);
        let duration_s: f64 = text
            .trim()
            .parse()
            .map_err(|_| AdapterError::malformed(kind, format!("unparseable duration {:?}", text.trim())))?;
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(AdapterError::malformed(kind, format!("non-positive duration {duration_s}")));
        }
        Ok(MediaInfo {
            key: MediaKey {
                file_name: path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                sha256,
            },
            path: path_str.into_owned(),
            duration_s,
        })
    }

    fn frame_at(&self, media: &MediaInfo, time_s: f64) -> AdapterResult<Frame> {
        let ts = format!("{time_s:.3}");
        let png = self.run(
            &self.ffmpeg,
            &[
                "-v", "error", "-ss", &ts, "-i", &media.path, "-frames:v", "1", "-f", "image2pipe", "-vcodec",
                "png", "-",
            ],
        )?;
        if png.is_empty() {
            return Err(AdapterError::malformed(
                AdapterKind::Decoder,
                format!("no frame decoded at {ts}s"),
            ));
        }
        Ok(Frame {
            source: Arc::new(media.key.clone()),
            time_s,
            png: Some(Arc::new(png)),
        })
    }

    fn audio(&self, media: &MediaInfo) -> AdapterResult<MediaAudio> {
        let rate = DECODED_AUDIO_RATE.to_string();
        let raw = self.run(
            &self.ffmpeg,
            &["-v", "error", "-i", &media.path, "-vn", "-ac", "1", "-ar", &rate, "-f", "f32le", "-"],
        )?;
        let samples: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let (clip, _) = AudioClip::clamped(samples, DECODED_AUDIO_RATE)
            .map_err(|e| AdapterError::malformed(AdapterKind::Decoder, e.to_string()))?;
        Ok(MediaAudio {
            source: Arc::new(media.key.clone()),
            clip,
        })
    }
}
