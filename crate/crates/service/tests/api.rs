use std::path::{Path, PathBuf};
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use soundscape_core::adapters::stub::StubManifest;
use soundscape_core::adapters::RetryPolicy;
use soundscape_core::project::{self, ProjectDocument};
use soundscape_core::{wav, Config, Pipeline};
use soundscape_service::{router, AppState, ErrorBody, DEFAULT_UPLOAD_LIMIT};

const BOUNDARY: &str = "soundscape-test-boundary";

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn pipeline(edit: impl FnOnce(&mut StubManifest)) -> Pipeline {
    let mut manifest = StubManifest::load(&fixtures().join("cafe.json")).unwrap();
    edit(&mut manifest);
    let mut config = Config::default();
    config.retry = RetryPolicy::no_delay(1);
    config.export.muxer_command[0] = "soundscape-test-no-such-muxer".into();
    let adapters = config.adapters(Some(manifest)).unwrap();
    Pipeline::new(adapters, config)
}

struct Api {
    app: Router,
    data: tempfile::TempDir,
}

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.bytes)))
    }

    fn error(&self) -> ErrorBody {
        serde_json::from_value(self.json()).expect("error body shape")
    }
}

impl Api {
    fn new(p: Pipeline) -> Self {
        let data = tempfile::tempdir().unwrap();
        let state = AppState::open(p, data.path()).unwrap();
        Self {
            app: router(state, DEFAULT_UPLOAD_LIMIT),
            data,
        }
    }

    async fn send(&self, req: Request<Body>) -> Reply {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, headers, bytes }
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>, revision: Option<u64>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(r) = revision {
            req = req.header(header::IF_MATCH, r.to_string());
        }
        let req = match body {
            Some(v) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(v.to_string())),
            None => req.body(Body::empty()),
        };
        self.send(req.unwrap()).await
    }

    async fn upload(&self, file_name: &str, bytes: &[u8]) -> Reply {
        let mut body = format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"media\"; filename=\"{file_name}\"\r\n\
             Content-Type: video/mp4\r\n\r\n"
        )
        .into_bytes();
        body.extend_from_slice(bytes);
        body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
        let req = Request::post("/projects")
            .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
            .body(Body::from(body))
            .unwrap();
        self.send(req).await
    }

    async fn run_job(&self, uri: &str, revision: Option<u64>) -> Value {
        let started = self.call("POST", uri, None, revision).await;
        assert_eq!(started.status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&started.bytes));
        let location = started.headers[header::LOCATION].to_str().unwrap().to_string();
        for _ in 0..500 {
            let job = self.call("GET", &location, None, None).await.json();
            if job["status"] != "running" {
                return job;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("job {location} never finished");
    }

    /// Fetches the project and checks it against the copy on disk, which
    /// `load` validates.
    async fn project(&self, id: &str) -> ProjectDocument {
        let reply = self.call("GET", &format!("/projects/{id}"), None, None).await;
        assert_eq!(reply.status, StatusCode::OK);
        let doc: ProjectDocument = serde_json::from_slice(&reply.bytes).unwrap();
        let on_disk = project::load(&self.data.path().join("projects").join(id).join("project.json")).unwrap();
        assert_eq!(on_disk.document(), doc);
        for t in &doc.tracks {
            assert!(doc.suggestions.iter().any(|s| s.id == t.suggestion_id && s.selected));
        }
        doc
    }
}

async fn analyzed_cafe(api: &Api) -> ProjectDocument {
    let created = api.upload("cafe.mp4", b"not really a video").await;
    assert_eq!(created.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&created.bytes));
    let id = created.json()["id"].as_str().unwrap().to_string();
    let job = api.run_job(&format!("/projects/{id}/analyze"), Some(1)).await;
    assert_eq!(job["status"], "succeeded", "{job}");
    api.project(&id).await
}

#[tokio::test]
async fn full_flow() {
    let api = Api::new(pipeline(|_| {}));
    let doc = analyzed_cafe(&api).await;
    let id = doc.id.clone();
    assert_eq!(doc.revision, 2);
    assert_eq!(doc.suggestions.len(), 5);
    assert!(doc.scene_prompt.as_deref().unwrap().contains("coffee shop"));

    // Similar sounds land right after their base.
    let base = doc.suggestions[0].id.clone();
    let similar = api.call("POST", &format!("/suggestions/{base}/similar"), None, Some(doc.revision)).await;
    assert_eq!(similar.status, StatusCode::CREATED);
    let ids = similar.json()["suggestion_ids"].clone();
    let doc = api.project(&id).await;
    assert_eq!(doc.suggestions[1].id, ids[0].as_str().unwrap());
    assert_eq!(doc.suggestions[2].text, "Tinkling of glasses");

    let custom = api.call("POST", &format!("/projects/{id}/suggestions"), Some(json!({"text": "Rain on the window"})), None).await;
    assert_eq!(custom.status, StatusCode::CREATED);
    let custom_id = custom.json()["suggestion_id"].as_str().unwrap().to_string();

    for sid in [&base, &custom_id] {
        let r = api.call("POST", &format!("/suggestions/{sid}/select"), Some(json!({})), None).await;
        assert_eq!(r.status, StatusCode::OK);
    }
    let doc = api.project(&id).await;
    let job = api.run_job(&format!("/projects/{id}/generate"), Some(doc.revision)).await;
    assert_eq!(job["status"], "succeeded", "{job}");
    assert_eq!(job["result"]["generated"].as_array().unwrap().len(), 2);
    let doc = api.project(&id).await;
    assert_eq!(doc.tracks.len(), 2);
    assert_eq!(job["revision"], doc.revision);

    let mix = api.call("GET", &format!("/projects/{id}/mixdown"), None, None).await;
    assert_eq!(mix.status, StatusCode::OK);
    assert_eq!(mix.headers[header::CONTENT_TYPE], "audio/wav");
    assert_eq!(mix.headers[header::ETAG], format!("\"{}\"", doc.revision));
    let factor: f64 = mix.headers["x-normalization-factor"].to_str().unwrap().parse().unwrap();
    assert!(factor > 0.0 && factor <= 1.0);
    let buffer = wav::decode_stereo_16(&mix.bytes).unwrap();
    assert_eq!(buffer.sample_rate, 48_000);
    assert_eq!(buffer.len(), 288_000);

    // Gain edits change the mix and bump the revision.
    let track = doc.tracks[0].id.clone();
    let patched = api.call("PATCH", &format!("/tracks/{track}"), Some(json!({"gain_offset_db": -6.0})), Some(doc.revision)).await;
    assert_eq!(patched.status, StatusCode::OK);
    let after: ProjectDocument = serde_json::from_slice(&patched.bytes).unwrap();
    assert_eq!(after.revision, doc.revision + 1);
    assert_eq!(after.tracks[0].user_gain_offset_db, -6.0);
    let mix2 = api.call("GET", &format!("/projects/{id}/mixdown"), None, None).await;
    assert_ne!(mix2.bytes, mix.bytes);

    // Deselecting drops the track.
    let r = api.call("POST", &format!("/suggestions/{custom_id}/select"), Some(json!({"selected": false})), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(api.project(&id).await.tracks.len(), 1);
}

#[tokio::test]
async fn exports() {
    let api = Api::new(pipeline(|_| {}));
    let doc = analyzed_cafe(&api).await;
    let id = doc.id.clone();

    let empty = api.call("POST", &format!("/projects/{id}/export?which=combined"), None, None).await;
    assert_eq!(empty.status, StatusCode::CONFLICT);
    assert_eq!(empty.error().code, "no_tracks");

    for s in &doc.suggestions[..3] {
        api.call("POST", &format!("/suggestions/{}/select", s.id), None, None).await;
    }
    assert_eq!(api.run_job(&format!("/projects/{id}/generate"), None).await["status"], "succeeded");

    let combined = api.call("POST", &format!("/projects/{id}/export?which=combined"), None, None).await.json();
    assert_eq!(combined["files"].as_array().unwrap().len(), 1);
    let url = combined["files"][0]["url"].as_str().unwrap();
    let file = api.call("GET", url, None, None).await;
    assert_eq!(file.status, StatusCode::OK);
    assert_eq!(file.bytes, api.call("GET", &format!("/projects/{id}/mixdown"), None, None).await.bytes);

    let individual = api.call("POST", &format!("/projects/{id}/export?which=individual"), None, None).await.json();
    let files = individual["files"].as_array().unwrap();
    assert_eq!(files.len(), 3);
    for f in files {
        let got = api.call("GET", f["url"].as_str().unwrap(), None, None).await;
        assert_eq!(got.status, StatusCode::OK);
        assert!(got.bytes.starts_with(b"RIFF"));
    }

    let fin = api.call("POST", &format!("/projects/{id}/export?which=final"), None, None).await;
    assert_eq!(fin.status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(fin.error().code, "muxer_missing");

    let bad = api.call("POST", &format!("/projects/{id}/export?which=everything"), None, None).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    let escape = api.call("GET", &format!("/projects/{id}/exports/combined/..%2Fproject.json"), None, None).await;
    assert!(escape.status.is_client_error());
}

#[tokio::test]
async fn errors_are_typed() {
    let api = Api::new(pipeline(|_| {}));
    let doc = analyzed_cafe(&api).await;
    let id = doc.id.clone();

    let stale = api.call("POST", &format!("/projects/{id}/suggestions"), Some(json!({"text": "Wind"})), Some(1)).await;
    assert_eq!(stale.status, StatusCode::CONFLICT);
    let err = stale.error();
    assert_eq!(err.code, "stale_revision");
    assert_eq!(err.detail["actual"], doc.revision);
    assert_eq!(api.project(&id).await, doc);

    let stale_job = api.call("POST", &format!("/projects/{id}/generate"), None, Some(1)).await;
    assert_eq!(stale_job.status, StatusCode::CONFLICT);

    let missing = api.call("GET", "/projects/nope", None, None).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    assert_eq!(missing.error().code, "not_found");
    assert_eq!(api.call("POST", "/suggestions/nope-s1/similar", None, None).await.status, StatusCode::NOT_FOUND);
    assert_eq!(api.call("GET", "/jobs/nope", None, None).await.status, StatusCode::NOT_FOUND);
    let no_track = api.call("PATCH", &format!("/tracks/{id}-t99"), Some(json!({"gain_offset_db": 1.0})), None).await;
    assert_eq!(no_track.status, StatusCode::NOT_FOUND);

    let blank = api.call("POST", &format!("/projects/{id}/suggestions"), Some(json!({"text": "  "})), None).await;
    assert_eq!(blank.status, StatusCode::BAD_REQUEST);
    assert_eq!(blank.error().code, "invalid_request");
    let plain = api.call("POST", &format!("/projects/{id}/suggestions"), Some(json!({"text": "x"})), None).await;
    assert_eq!(plain.status, StatusCode::CREATED);

    let no_mix = api.call("GET", &format!("/projects/{id}/mixdown"), None, None).await;
    assert_eq!(no_mix.error().code, "no_tracks");

    let empty_upload = api.upload("cafe.mp4", b"").await;
    assert_eq!(empty_upload.status, StatusCode::BAD_REQUEST);
    let unknown_media = api.upload("mystery.mp4", b"bytes").await;
    assert!(unknown_media.status.is_client_error() || unknown_media.status.is_server_error());
    assert!(!unknown_media.error().code.is_empty());
}

#[tokio::test]
async fn adapter_failures_surface_in_jobs() {
    let api = Api::new(pipeline(|m| m.unavailable = vec![soundscape_core::adapters::AdapterKind::Llm]));
    let created = api.upload("cafe.mp4", b"video").await;
    let id = created.json()["id"].as_str().unwrap().to_string();
    let job = api.run_job(&format!("/projects/{id}/analyze"), None).await;
    assert_eq!(job["status"], "failed");
    assert_eq!(job["error"]["code"], "adapter_unavailable");
    assert_eq!(job["error"]["detail"]["adapter"], "llm");
    // A failed job leaves the project untouched.
    let doc = api.project(&id).await;
    assert_eq!(doc.revision, 1);
    assert!(doc.suggestions.is_empty());
}

#[tokio::test]
async fn projects_survive_restart() {
    let api = Api::new(pipeline(|_| {}));
    let doc = analyzed_cafe(&api).await;
    let reopened = AppState::open(pipeline(|_| {}), api.data.path()).unwrap();
    let again = Api {
        app: router(reopened, DEFAULT_UPLOAD_LIMIT),
        data: api.data,
    };
    assert_eq!(again.project(&doc.id).await, doc);
}
