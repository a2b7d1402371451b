//! WAV encoding: 16-bit stereo for exports, 32-bit float mono for stored
//! clips.

use std::io::{Cursor, Read, Seek, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::adapters::AudioClip;
use crate::mixer::StereoBuffer;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("wav {path}: {source}")]
    Hound {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("wav {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

/// Float sample to 16-bit PCM.
pub fn quantize(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

fn hound_err(path: &Path) -> impl FnOnce(hound::Error) -> WavError + '_ {
    move |source| WavError::Hound {
        path: path.to_path_buf(),
        source,
    }
}

fn stereo_spec(rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 2,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

fn encode_stereo<W: Write + Seek>(w: W, buf: &StereoBuffer, path: &Path) -> Result<(), WavError> {
    let mut writer = hound::WavWriter::new(w, stereo_spec(buf.sample_rate)).map_err(hound_err(path))?;
    for (l, r) in buf.left.iter().zip(&buf.right) {
        writer.write_sample(quantize(*l)).map_err(hound_err(path))?;
        writer.write_sample(quantize(*r)).map_err(hound_err(path))?;
    }
    writer.finalize().map_err(hound_err(path))
}

pub fn stereo_16_bytes(buf: &StereoBuffer) -> Result<Vec<u8>, WavError> {
    let mut cursor = Cursor::new(Vec::new());
    encode_stereo(&mut cursor, buf, Path::new("<memory>"))?;
    Ok(cursor.into_inner())
}

pub fn write_stereo_16(path: &Path, buf: &StereoBuffer) -> Result<(), WavError> {
    let bytes = stereo_16_bytes(buf)?;
    std::fs::write(path, bytes).map_err(|e| hound_err(path)(hound::Error::IoError(e)))
}

/// Reads 16-bit stereo PCM back to floats (sample / 32767).
pub fn read_stereo_16(path: &Path) -> Result<StereoBuffer, WavError> {
    let reader = hound::WavReader::open(path).map_err(hound_err(path))?;
    decode_stereo(reader, path)
}

pub fn decode_stereo_16(bytes: &[u8]) -> Result<StereoBuffer, WavError> {
    let path = Path::new("<memory>");
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(hound_err(path))?;
    decode_stereo(reader, path)
}

fn decode_stereo<R: Read>(reader: hound::WavReader<R>, path: &Path) -> Result<StereoBuffer, WavError> {
    let spec = reader.spec();
    if spec != stereo_spec(spec.sample_rate) {
        return Err(WavError::Format {
            path: path.to_path_buf(),
            reason: format!("expected 16-bit stereo PCM, found {spec:?}"),
        });
    }
    let samples: Vec<i16> = reader
        .into_samples::<i16>()
        .collect::<Result<_, _>>()
        .map_err(hound_err(path))?;
    let mut buf = StereoBuffer::silent(samples.len() / 2, spec.sample_rate);
    for (i, pair) in samples.chunks_exact(2).enumerate() {
        buf.left[i] = pair[0] as f64 / 32767.0;
        buf.right[i] = pair[1] as f64 / 32767.0;
    }
    Ok(buf)
}

fn mono_float_spec(rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    }
}

/// Lossless encoding of a clip.
pub fn clip_bytes(clip: &AudioClip) -> Result<Vec<u8>, WavError> {
    let path = Path::new("<memory>");
    let mut cursor = Cursor::new(Vec::new());
    let mut writer = hound::WavWriter::new(&mut cursor, mono_float_spec(clip.sample_rate())).map_err(hound_err(path))?;
    for &s in clip.samples() {
        writer.write_sample(s).map_err(hound_err(path))?;
    }
    writer.finalize().map_err(hound_err(path))?;
    Ok(cursor.into_inner())
}

pub fn decode_clip(bytes: &[u8], path: &Path) -> Result<AudioClip, WavError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(hound_err(path))?;
    let spec = reader.spec();
    if spec != mono_float_spec(spec.sample_rate) {
        return Err(WavError::Format {
            path: path.to_path_buf(),
            reason: format!("expected 32-bit float mono, found {spec:?}"),
        });
    }
    let samples: Vec<f32> = reader
        .into_samples::<f32>()
        .collect::<Result<_, _>>()
        .map_err(hound_err(path))?;
    AudioClip::new(samples, spec.sample_rate).map_err(|e| WavError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_and_clamps() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 32767);
        assert_eq!(quantize(-1.0), -32767);
        assert_eq!(quantize(1.7), 32767);
        assert_eq!(quantize(0.5), 16384);
    }

    #[test]
    fn stereo_round_trip_within_one_lsb() {
        let mut buf = StereoBuffer::silent(100, 48_000);
        for i in 0..100 {
            buf.left[i] = (i as f64 / 50.0) - 1.0;
            buf.right[i] = -buf.left[i] * 0.3;
        }
        let bytes = stereo_16_bytes(&buf).unwrap();
        let back = decode_stereo_16(&bytes).unwrap();
        assert_eq!(back.sample_rate, 48_000);
        for i in 0..100 {
            assert!((back.left[i] - buf.left[i]).abs() <= 0.5 / 32767.0 + 1e-12);
        }
    }

    #[test]
    fn clip_round_trip_is_exact() {
        let clip = AudioClip::new(vec![0.1, -0.25, 0.999], 32_000).unwrap();
        let bytes = clip_bytes(&clip).unwrap();
        assert_eq!(decode_clip(&bytes, Path::new("x")).unwrap(), clip);
        assert!(decode_clip(b"RIFFjunk", Path::new("x")).is_err());
    }
}
