//! Clients for real backends: a JSON model server that fronts the vision,
//! audio and NLP models, and an OpenAI-compatible chat-completions endpoint.
//!
//! Model server protocol, all `POST` with JSON bodies; images travel as
//! base64 PNG, audio as base64 little-endian `f32` samples:
//!
//! | path               | request                                  | response                                   |
//! |--------------------|------------------------------------------|--------------------------------------------|
//! | `/v1/detect`       | `{image}`                                | `{objects: [{label, confidence}]}`         |
//! | `/v1/classify`     | `{image, categories}`                    | `{scores: [f64]}`                          |
//! | `/v1/ocr`          | `{image}`                                | `{text, confidence}`                       |
//! | `/v1/transcribe`   | `{audio: {sample_rate, samples}}`        | `{text}`                                   |
//! | `/v1/tag_sounds`   | `{audio: {sample_rate, samples}}`        | `{tags: [{label, confidence}]}`            |
//! | `/v1/caption`      | `{image}`                                | `{caption}`                                |
//! | `/v1/generate`     | `{description, duration_s}`              | `{sample_rate, samples}`                   |
//! | `/v1/localize`     | `{image, subject}`                       | `{width, height, values}`                  |
//! | `/v1/presence`     | `{image, positive, negative}`            | `{scores: [pos, neg]}`                     |
//! | `/v1/parse`        | `{text}`                                 | `{tokens: [{text, pos}], noun_chunks}`     |

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::*;

fn http_error(kind: AdapterKind, err: reqwest::Error) -> AdapterError {
    if err.is_decode() {
        AdapterError::malformed(kind, err.to_string())
    } else {
        AdapterError::unavailable(kind, err.to_string())
    }
}

fn status_error(kind: AdapterKind, status: StatusCode, retry_after: Option<Duration>, body: String) -> AdapterError {
    if status == StatusCode::TOO_MANY_REQUESTS {
        AdapterError::RateLimited { kind, retry_after }
    } else if status.is_client_error() {
        AdapterError::contract(kind, format!("{status}: {body}"))
    } else {
        AdapterError::unavailable(kind, format!("{status}: {body}"))
    }
}

fn post_json<T: DeserializeOwned>(
    client: &Client,
    kind: AdapterKind,
    url: &str,
    bearer: Option<&str>,
    body: &Value,
) -> AdapterResult<T> {
    let mut req = client.post(url).json(body);
    if let Some(key) = bearer {
        req = req.bearer_auth(key);
    }
    let resp = req.send().map_err(|e| http_error(kind, e))?;
    let status = resp.status();
    if !status.is_success() {
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(Duration::from_secs_f64);
        let body = resp.text().unwrap_or_default();
        return Err(status_error(kind, status, retry_after, body));
    }
    resp.json::<T>().map_err(|e| http_error(kind, e))
}

fn encode_samples(samples: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(samples.len() * 4);
    for s in samples {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_samples(kind: AdapterKind, text: &str) -> AdapterResult<Vec<f32>> {
    let bytes = B64
        .decode(text)
        .map_err(|e| AdapterError::malformed(kind, format!("bad base64 audio: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(AdapterError::malformed(kind, "audio byte length not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Client for the JSON model server described in the module docs.
#[derive(Debug, Clone)]
pub struct ModelServerClient {
    base_url: String,
    client: Client,
    api_key: Option<String>,
    generator_sample_rate: u32,
}

#[derive(Deserialize)]
struct ObjectsResponse {
    objects: Vec<DetectedObject>,
}

#[derive(Deserialize)]
struct ScoresResponse {
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct TextResponse {
    text: String,
}

#[derive(Deserialize)]
struct TagsResponse {
    tags: Vec<SoundTag>,
}

#[derive(Deserialize)]
struct CaptionResponse {
    caption: String,
}

#[derive(Deserialize)]
struct AudioResponse {
    sample_rate: u32,
    samples: String,
}

#[derive(Deserialize)]
struct MapResponse {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ModelServerClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration, generator_sample_rate: u32) -> AdapterResult<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AdapterError::unavailable(AdapterKind::Detector, e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
            api_key: None,
            generator_sample_rate,
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn call<T: DeserializeOwned>(&self, kind: AdapterKind, path: &str, body: Value) -> AdapterResult<T> {
        let url = format!("{}/v1/{}", self.base_url, path);
        post_json(&self.client, kind, &url, self.api_key.as_deref(), &body)
    }

    fn image(kind: AdapterKind, frame: &Frame) -> AdapterResult<String> {
        frame
            .png
            .as_ref()
            .map(|png| B64.encode(png.as_slice()))
            .ok_or_else(|| AdapterError::contract(kind, "frame carries no decoded image"))
    }

    fn audio_payload(audio: &MediaAudio) -> Value {
        json!({
            "sample_rate": audio.clip.sample_rate(),
            "samples": encode_samples(audio.clip.samples()),
        })
    }
}

impl Adapter for ModelServerClient {}

impl ObjectDetector for ModelServerClient {
    fn detect_raw(&self, frame: &Frame) -> AdapterResult<Vec<DetectedObject>> {
        let kind = AdapterKind::Detector;
        let image = Self::image(kind, frame)?;
        let resp: ObjectsResponse = self.call(kind, "detect", json!({ "image": image }))?;
        Ok(resp.objects)
    }
}

impl ImageClassifier for ModelServerClient {
    fn scores(&self, frame: &Frame, categories: &[String]) -> AdapterResult<Vec<f64>> {
        let kind = AdapterKind::Classifier;
        let image = Self::image(kind, frame)?;
        let resp: ScoresResponse = self.call(kind, "classify", json!({ "image": image, "categories": categories }))?;
        Ok(resp.scores)
    }
}

impl TextReader for ModelServerClient {
    fn extract_text(&self, frame: &Frame) -> AdapterResult<OcrResult> {
        let kind = AdapterKind::Ocr;
        let image = Self::image(kind, frame)?;
        self.call(kind, "ocr", json!({ "image": image }))
    }
}

impl SpeechTranscriber for ModelServerClient {
    fn transcribe(&self, audio: &MediaAudio) -> AdapterResult<Transcript> {
        let resp: TextResponse = self.call(
            AdapterKind::Asr,
            "transcribe",
            json!({ "audio": Self::audio_payload(audio) }),
        )?;
        Ok(Transcript { text: resp.text })
    }
}

impl SoundTagger for ModelServerClient {
    fn tag_sounds(&self, audio: &MediaAudio) -> AdapterResult<Vec<SoundTag>> {
        let resp: TagsResponse = self.call(
            AdapterKind::Tagger,
            "tag_sounds",
            json!({ "audio": Self::audio_payload(audio) }),
        )?;
        Ok(resp.tags)
    }
}

impl Captioner for ModelServerClient {
    fn caption(&self, frame: &Frame) -> AdapterResult<String> {
        let kind = AdapterKind::Captioner;
        let image = Self::image(kind, frame)?;
        let resp: CaptionResponse = self.call(kind, "caption", json!({ "image": image }))?;
        Ok(resp.caption)
    }
}

impl AudioGenerator for ModelServerClient {
    fn native_sample_rate(&self) -> u32 {
        self.generator_sample_rate
    }

    fn generate_audio(&self, description: &str, duration_s: f64) -> AdapterResult<AudioClip> {
        let kind = AdapterKind::Generator;
        let resp: AudioResponse = self.call(
            kind,
            "generate",
            json!({ "description": description, "duration_s": duration_s }),
        )?;
        let samples = decode_samples(kind, &resp.samples)?;
        let (clip, clamped) =
            AudioClip::clamped(samples, resp.sample_rate).map_err(|e| AdapterError::malformed(kind, e.to_string()))?;
        if clamped > 0 {
            log::warn!("generator returned {clamped} out-of-range samples for {description:?}; clamped");
        }
        Ok(clip)
    }
}

impl ActivationLocalizer for ModelServerClient {
    fn localize(&self, frame: &Frame, subject: &str) -> AdapterResult<ActivationMap> {
        let kind = AdapterKind::Localizer;
        let image = Self::image(kind, frame)?;
        let resp: MapResponse = self.call(kind, "localize", json!({ "image": image, "subject": subject }))?;
        ActivationMap::new(resp.width, resp.height, resp.values, frame.time_s)
    }
}

impl PresenceMatcher for ModelServerClient {
    fn presence_score(&self, frame: &Frame, subject: &str) -> AdapterResult<f64> {
        let kind = AdapterKind::Presence;
        let image = Self::image(kind, frame)?;
        let [positive, negative] = presence_prompts(subject);
        let resp: ScoresResponse = self.call(
            kind,
            "presence",
            json!({ "image": image, "positive": positive, "negative": negative }),
        )?;
        match resp.scores.as_slice() {
            [p, n] if p.is_finite() && n.is_finite() && *p >= 0.0 && *n >= 0.0 => {
                if p + n == 0.0 {
                    Ok(0.0)
                } else {
                    Ok(p / (p + n))
                }
            }
            other => Err(AdapterError::malformed(kind, format!("expected two scores, got {other:?}"))),
        }
    }
}

impl SyntaxParser for ModelServerClient {
    fn parse(&self, text: &str) -> AdapterResult<SyntaxParse> {
        let kind = AdapterKind::Parser;
        let parse: SyntaxParse = self.call(kind, "parse", json!({ "text": text }))?;
        if !parse.is_valid() {
            return Err(AdapterError::malformed(kind, "noun chunk outside token range"));
        }
        Ok(parse)
    }
}

/// OpenAI-compatible `chat/completions` client.
#[derive(Debug, Clone)]
pub struct ChatCompletionsClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

impl ChatCompletionsClient {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> AdapterResult<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AdapterError::unavailable(AdapterKind::Llm, e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            client,
        })
    }
}

impl Adapter for ChatCompletionsClient {}

impl LanguageModel for ChatCompletionsClient {
    fn complete(&self, prompt: &str) -> AdapterResult<String> {
        let kind = AdapterKind::Llm;
        let body = serde_json::to_value(ChatRequest {
            model: &self.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: 0.0,
        })
        .map_err(|e| AdapterError::contract(kind, e.to_string()))?;
        let resp: ChatResponse = post_json(&self.client, kind, &self.endpoint, self.api_key.as_deref(), &body)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| AdapterError::malformed(kind, "no completion choices"))
    }
}
