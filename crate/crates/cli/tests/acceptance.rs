//! Acceptance suite. Runs every criterion against stub adapters and prints
//! one PASS/FAIL line each; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use soundscape_cli::load_pipeline;
use soundscape_core::adapters::stub::{LlmRule, StubAdapters, StubManifest};
use soundscape_core::adapters::{ActivationMap, AudioClip, RetryPolicy};
use soundscape_core::ideation::{self, IdeationConfig, IdeationError, SoundSuggestion, SuggestionOrigin};
use soundscape_core::localization;
use soundscape_core::mixer::{self, MixSettings, StereoBuffer};
use soundscape_core::project::{self, LocalizationNote, MixProject, ProjectError, SourceMedia, TrackError};
use soundscape_core::scene_context::{assemble_prompt, SceneContext, Setting, TimeOfDay, Weather};
use soundscape_core::soundgen::{AudioTrack, Keyframe, TrackCategory};
use soundscape_core::Pipeline;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn stub_pipeline(manifest: &str) -> Pipeline {
    let mut p = load_pipeline(None, Some(&fixtures().join(manifest))).expect("fixture manifest loads");
    p.config.retry = RetryPolicy::no_delay(1);
    p
}

fn scene_sound_rows() -> Vec<(String, Vec<String>)> {
    let raw: Value = serde_json::from_str(&fs::read_to_string(fixtures().join("scene_sounds.json")).unwrap()).unwrap();
    raw.as_array()
        .unwrap()
        .iter()
        .map(|row| {
            (
                row["scene"].as_str().unwrap().to_string(),
                row["sounds"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect(),
            )
        })
        .collect()
}

fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

// 1 ---------------------------------------------------------------------

fn prompt_template() -> Outcome {
    let ctx = SceneContext {
        objects: vec!["dog".into(), "bench".into(), "tree".into()],
        setting: Setting::Outdoors,
        location: "park".into(),
        time_of_day: Some(TimeOfDay::Afternoon),
        weather: Some(Weather::Sunny),
        ambient_sounds: vec!["Bird vocalization".into(), "Dog".into()],
        sign_text: "KEEP OFF THE GRASS".into(),
        speech_transcript: "Come here, boy".into(),
        caption: "a dog running across the grass in a sunny park".into(),
    };
    let golden = "I see dog, bench, tree. I am at park. The time is afternoon. The weather is sunny. \
                  There are sounds of Bird vocalization, Dog. There are signs writing KEEP OFF THE GRASS. \
                  There are people saying Come here, boy. Overall, I see a dog running across the grass in a sunny park.";
    let got = assemble_prompt(&ctx);
    ensure!(got == golden, "prompt mismatch:\n  got:    {got}\n  golden: {golden}");

    let pipeline = stub_pipeline("park.json");
    let mut p = pipeline.create_project(&fixtures().join("park.mp4"), "park".into()).map_err(|e| e.to_string())?;
    pipeline.analyze(&mut p).map_err(|e| e.to_string())?;
    let park = "I see dog, person, bench. I am at park. The time is afternoon. The weather is sunny. \
                There are sounds of Bird vocalization, Dog. Overall, I see a dog running across the grass in a sunny park.";
    ensure!(p.scene_prompt.as_deref() == Some(park), "park fixture prompt was {:?}", p.scene_prompt);
    Ok("golden string and park fixture match".into())
}

// 2 ---------------------------------------------------------------------

fn background_rule() -> Outcome {
    let paper_factor = 0.44668;
    let mut checked = 0;
    for baseline in [0.0, -3.0] {
        let mut pipeline = stub_pipeline("cafe.json");
        pipeline.config.localization.foreground_baseline_db = baseline;
        let mut p = pipeline.create_project(&fixtures().join("cafe.mp4"), "cafe".into()).map_err(|e| e.to_string())?;
        pipeline.analyze(&mut p).map_err(|e| e.to_string())?;
        p.select_matching(&[]);
        pipeline.generate_selected(&mut p).map_err(|e| e.to_string())?;
        let backgrounds: Vec<&AudioTrack> = p.tracks.iter().filter(|t| t.category == TrackCategory::Background).collect();
        ensure!(!backgrounds.is_empty(), "cafe fixture produced no background track");
        for t in backgrounds {
            ensure!(
                t.gain_automation.iter().all(|k| k.value == baseline - 7.0),
                "track {} gain {:?} is not baseline {baseline} - 7",
                t.id,
                t.gain_automation
            );
            let bg = mixer::render_track(t, &p.settings).map_err(|e| e.to_string())?;
            let mut fg = t.clone();
            fg.gain_automation = vec![Keyframe::new(0.0, baseline)];
            let fg = mixer::render_track(&fg, &p.settings).map_err(|e| e.to_string())?;
            for (b, f) in [(&bg.left, &fg.left), (&bg.right, &fg.right)] {
                let ratio = rms(b) / rms(f);
                ensure!((ratio - paper_factor).abs() < 1e-4, "track {} RMS ratio {ratio}", t.id);
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} background tracks at baseline - 7 dB, RMS ratio 0.44668 +/- 1e-4"))
}

// 3 ---------------------------------------------------------------------

struct SimilarCase {
    completion: String,
    expect: Option<[&'static str; 2]>,
}

const OFFERS: [&str; 6] = [
    "Clattering of plates",
    "Tinkling of glasses",
    "Scraping of chairs",
    "Sizzling of a grill",
    "Pouring of coffee",
    "Rustling of newspapers",
];

fn similar_corpus(base: &str) -> Vec<SimilarCase> {
    let mut cases = Vec::new();
    let render = |items: &[&str], style: usize| -> String {
        match style {
            0 => items.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect::<Vec<_>>().join("\n"),
            1 => items.iter().enumerate().map(|(i, s)| format!("{}) {s}", i + 1)).collect::<Vec<_>>().join("\n"),
            2 => items.iter().map(|s| format!("- {s}")).collect::<Vec<_>>().join("\n"),
            3 => items.iter().map(|s| format!("* {s}")).collect::<Vec<_>>().join("\n"),
            _ => items.join(", "),
        }
    };
    // Plain lists of 0..=6 offers in five styles: 35 cases.
    for style in 0..5 {
        for n in 0..=6usize {
            let items = &OFFERS[..n];
            cases.push(SimilarCase {
                completion: render(items, style),
                expect: (n >= 2).then(|| [OFFERS[0], OFFERS[1]]),
            });
        }
    }
    // The base sound offered back is not a new sound: 5 cases.
    for style in 0..5 {
        let items = [base, OFFERS[2], OFFERS[3]];
        cases.push(SimilarCase {
            completion: render(&items, style),
            expect: Some([OFFERS[2], OFFERS[3]]),
        });
    }
    // Case-insensitive repeats collapse: 5 cases, all short of two.
    for style in 0..5 {
        let lower = OFFERS[4].to_lowercase();
        let items = [OFFERS[4], lower.as_str()];
        cases.push(SimilarCase {
            completion: render(&items, style),
            expect: None,
        });
    }
    // Chatter around a marked list: 5 cases.
    for style in 0..4 {
        cases.push(SimilarCase {
            completion: format!(
                "Sure! Here are some similar sounds:\n{}\nLet me know if you need more.",
                render(&[OFFERS[5], OFFERS[0], OFFERS[1]], style)
            ),
            expect: Some([OFFERS[5], OFFERS[0]]),
        });
    }
    cases.push(SimilarCase {
        completion: "I cannot think of any similar sounds.".into(),
        expect: None,
    });
    cases
}

fn exactly_two_similar() -> Outcome {
    let base = SoundSuggestion {
        id: "s1".into(),
        text: "Clinking of silverware".into(),
        emoji: "🍴".into(),
        origin: SuggestionOrigin::Llm,
        selected: false,
        duplicate: false,
    };
    let cfg = IdeationConfig {
        retry: RetryPolicy::no_delay(1),
        ..Default::default()
    };
    let cases = similar_corpus(&base.text);
    ensure!(cases.len() == 50, "corpus has {} cases", cases.len());
    let (mut ok, mut errs) = (0, 0);
    for (i, case) in cases.iter().enumerate() {
        let mut manifest = StubManifest::default();
        manifest.llm.rules.push(LlmRule {
            contains: vec![format!("similar to \"{}\"", base.text)],
            completion: case.completion.clone(),
            ..Default::default()
        });
        let llm = StubAdapters::new(manifest);
        let mut n = 0;
        let mut next_id = || {
            n += 1;
            format!("x{n}")
        };
        match (ideation::expand_similar(&base, &llm, &cfg, &mut next_id), case.expect) {
            (Ok(pair), Some(expect)) => {
                let got = [pair[0].text.as_str(), pair[1].text.as_str()];
                ensure!(got == expect, "case {i}: got {got:?}, expected {expect:?}");
                ensure!(
                    pair.iter().all(|s| s.origin == SuggestionOrigin::SimilarOf("s1".into())),
                    "case {i}: wrong origin"
                );
                ok += 1;
            }
            (Err(IdeationError::InsufficientSuggestions { .. } | IdeationError::Llm(_)), None) => errs += 1,
            (got, expect) => return Err(format!("case {i} ({:?}): got {got:?}, expected {expect:?}", case.completion)),
        }
    }
    Ok(format!("50 completions: {ok} exact pairs, {errs} typed errors"))
}

// 4 ---------------------------------------------------------------------

fn scene_sound_reproduction() -> Outcome {
    let rows = scene_sound_rows();
    ensure!(rows.len() == 10, "scene sound list has {} rows", rows.len());
    let cafe_row = &rows[0].1;

    let pipeline = stub_pipeline("cafe.json");
    let mut p = pipeline.create_project(&fixtures().join("cafe.mp4"), "cafe".into()).map_err(|e| e.to_string())?;
    pipeline.analyze(&mut p).map_err(|e| e.to_string())?;
    let texts: Vec<&str> = p.suggestions.iter().map(|s| s.text.as_str()).collect();
    ensure!(texts == *cafe_row, "cafe suggestions {texts:?}");
    ensure!(texts[0] == "Clinking of silverware", "first suggestion {}", texts[0]);

    for (scene, sounds) in &rows {
        let numbered: String = sounds.iter().enumerate().map(|(i, s)| format!("{}. {s}\n", i + 1)).collect();
        let bulleted: String = sounds.iter().map(|s| format!("- {s}\n")).collect();
        let inline = sounds.join(", ");
        for completion in [numbered, bulleted, inline] {
            let parsed = ideation::parse_sound_list(&completion);
            ensure!(parsed == *sounds, "{scene}: parsed {parsed:?}");
        }
    }
    Ok("cafe analyze reproduces row 1; 10 rows x 3 list styles parse losslessly".into())
}

// 5 ---------------------------------------------------------------------

fn track_from(samples: Vec<f32>, rate: u32, gain: Vec<Keyframe>, pan: Vec<Keyframe>, id: &str) -> AudioTrack {
    let clip = AudioClip::new(samples, rate).unwrap();
    AudioTrack {
        id: id.into(),
        suggestion_id: format!("s-{id}"),
        duration_target: clip.duration_s(),
        clip,
        category: TrackCategory::Foreground,
        gain_automation: gain,
        pan_automation: pan,
        user_gain_offset_db: 0.0,
    }
}

fn arb_track(max_amp: f32) -> impl Strategy<Value = AudioTrack> {
    (
        prop::collection::vec(-max_amp..=max_amp, 1..64),
        prop::sample::select(vec![16_000u32, 32_000, 44_100, 48_000]),
        prop::collection::vec((0.0f64..0.002, -24.0f64..6.0), 1..4),
        prop::collection::vec((0.0f64..0.002, -1.0f64..=1.0), 1..4),
        -6.0f64..6.0,
    )
        .prop_map(|(samples, rate, mut gain, mut pan, offset)| {
            gain.sort_by(|a, b| a.0.total_cmp(&b.0));
            pan.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut t = track_from(
                samples,
                rate,
                gain.into_iter().map(|(t, v)| Keyframe::new(t, v)).collect(),
                pan.into_iter().map(|(t, v)| Keyframe::new(t, v)).collect(),
                "t",
            );
            t.user_gain_offset_db = offset;
            t
        })
}

fn max_diff(a: &StereoBuffer, b: &StereoBuffer) -> f64 {
    a.left
        .iter()
        .zip(&b.left)
        .chain(a.right.iter().zip(&b.right))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn mixer_properties() -> Outcome {
    let settings = MixSettings::default();
    run_property("dB additivity", (-60.0f64..20.0, -60.0f64..20.0), |(a, b)| {
        let lhs = mixer::db_to_amplitude(a + b);
        let rhs = mixer::db_to_amplitude(a) * mixer::db_to_amplitude(b);
        prop_assert!((lhs - rhs).abs() <= 1e-9, "{a} + {b}: {lhs} vs {rhs}");
        Ok(())
    })?;
    run_property("constant power", (-1.0f64..=1.0, -1.0f64..=1.0), |(s, pan)| {
        let (l, r) = mixer::apply_pan(s, pan);
        prop_assert!((l * l + r * r - s * s).abs() <= 1e-9);
        Ok(())
    })?;
    run_property(
        "permutation invariance",
        (prop::collection::vec(arb_track(1.0), 2..5), any::<prop::sample::Index>()),
        |(tracks, rot)| {
            let mut shuffled = tracks.clone();
            shuffled.reverse();
            let k = rot.index(shuffled.len());
            shuffled.rotate_left(k);
            let a = mixer::mixdown(&tracks, &settings).unwrap();
            let b = mixer::mixdown(&shuffled, &settings).unwrap();
            prop_assert_eq!(a.buffer.len(), b.buffer.len());
            prop_assert!(max_diff(&a.buffer, &b.buffer) <= 1e-9);
            Ok(())
        },
    )?;
    run_property(
        "two copies at -6.0206 dB",
        (prop::collection::vec(-0.99f32..=0.99, 1..128), -1.0f64..=1.0),
        |(samples, pan)| {
            let half = track_from(samples.clone(), 48_000, vec![Keyframe::new(0.0, -6.0206)], vec![Keyframe::new(0.0, pan)], "a");
            let full = track_from(samples, 48_000, vec![Keyframe::new(0.0, 0.0)], vec![Keyframe::new(0.0, pan)], "b");
            let two = mixer::mixdown(&[half.clone(), half], &settings).unwrap();
            let one = mixer::mixdown(&[full], &settings).unwrap();
            prop_assert!(max_diff(&two.buffer, &one.buffer) <= 1e-6);
            Ok(())
        },
    )?;
    run_property("normalization keeps ratios", (arb_track(1.0), arb_track(1.0), 1.0f64..4.0), |(a, mut b, boost)| {
        b.user_gain_offset_db += 20.0 * boost.log10();
        let ra = mixer::render_track(&a, &settings).unwrap();
        let rb = mixer::render_track(&b, &settings).unwrap();
        let mix = mixer::mixdown(&[a, b], &settings).unwrap();
        let f = mix.normalization_factor;
        prop_assert!(mix.buffer.peak() <= settings.normalization_ceiling + 1e-12);
        // Rebuild the mix from the individually scaled renders; it must be
        // the same signal, so each track's share was scaled by f alone.
        let len = mix.buffer.len();
        let share = |r: &StereoBuffer, i: usize, left: bool| {
            let ch = if left { &r.left } else { &r.right };
            ch.get(i).copied().unwrap_or(0.0) * f
        };
        for i in 0..len {
            prop_assert!((mix.buffer.left[i] - share(&ra, i, true) - share(&rb, i, true)).abs() <= 1e-9);
            prop_assert!((mix.buffer.right[i] - share(&ra, i, false) - share(&rb, i, false)).abs() <= 1e-9);
        }
        let before = ra.rms() / rb.rms();
        let scaled = |r: &StereoBuffer| {
            let mut s = r.clone();
            s.left.iter_mut().chain(s.right.iter_mut()).for_each(|x| *x *= f);
            s
        };
        let after = scaled(&ra).rms() / scaled(&rb).rms();
        if before.is_finite() {
            prop_assert!((before - after).abs() <= 1e-6 * before.max(1.0));
        }
        Ok(())
    })?;
    Ok("5 properties x 1000 cases".into())
}

// 6 ---------------------------------------------------------------------

fn oracle_area(map: &ActivationMap) -> f64 {
    let mut max = 0.0f64;
    for y in 0..map.height() {
        for x in 0..map.width() {
            max = max.max(map.get(x, y));
        }
    }
    if max == 0.0 {
        return 0.0;
    }
    let mut hits = 0usize;
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.get(x, y) >= 0.5 * max {
                hits += 1;
            }
        }
    }
    hits as f64 / (map.width() * map.height()) as f64
}

fn oracle_gain(area: f64) -> f64 {
    if area == 0.0 {
        return -12.0;
    }
    (6.0 * (area / 0.25).ln() / std::f64::consts::LN_2).clamp(-12.0, 3.0)
}

fn oracle_pan(map: &ActivationMap) -> f64 {
    let (mut total, mut weighted) = (0.0, 0.0);
    for x in 0..map.width() {
        let column: f64 = (0..map.height()).map(|y| map.get(x, y)).sum();
        total += column;
        weighted += column * (x as f64 + 0.5) / map.width() as f64;
    }
    if total == 0.0 {
        0.0
    } else {
        2.0 * weighted / total - 1.0
    }
}

fn synthetic_maps() -> Vec<ActivationMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut maps = vec![
        ActivationMap::zeros(8, 8, 0.0),
        ActivationMap::new(2, 2, vec![1.0, 0.0, 1.0, 0.0], 0.0).unwrap(),
        ActivationMap::new(4, 1, vec![0.0, 0.0, 0.0, 5.0], 0.0).unwrap(),
        ActivationMap::new(3, 3, vec![1.0; 9], 0.0).unwrap(),
        ActivationMap::new(4, 4, (0..16).map(|i| if i % 4 < 2 { 1.0 } else { 0.0 }).collect(), 0.0).unwrap(),
    ];
    while maps.len() < 20 {
        let (w, h) = (rng.random_range(1..=14usize), rng.random_range(1..=14usize));
        let sparse = rng.random_bool(0.5);
        let values = (0..w * h)
            .map(|_| if sparse && rng.random_bool(0.7) { 0.0 } else { rng.random_range(0.0..3.0) })
            .collect();
        maps.push(ActivationMap::new(w, h, values, 0.0).unwrap());
    }
    maps
}

fn localization_oracle() -> Outcome {
    for (i, map) in synthetic_maps().iter().enumerate() {
        let area = localization::area_fraction(map, 0.5);
        let oracle = oracle_area(map);
        ensure!((area - oracle).abs() <= 1e-9, "map {i}: area {area} vs {oracle}");
        let gain = localization::area_to_gain(area).map_err(|e| e.to_string())?;
        ensure!((gain - oracle_gain(oracle)).abs() <= 1e-9, "map {i}: gain {gain} vs {}", oracle_gain(oracle));
        let pan = localization::centroid_to_pan(map);
        ensure!((pan - oracle_pan(map)).abs() <= 1e-9, "map {i}: pan {pan} vs {}", oracle_pan(map));
        ensure!((-1.0..=1.0).contains(&pan), "map {i}: pan {pan} out of range");
    }
    run_property("area_to_gain monotone", (0.0f64..=1.0, 0.0f64..=1.0), |(a, b)| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (g_lo, g_hi) = (localization::area_to_gain(lo).unwrap(), localization::area_to_gain(hi).unwrap());
        prop_assert!(g_lo <= g_hi, "{lo} -> {g_lo}, {hi} -> {g_hi}");
        prop_assert!((-12.0..=3.0).contains(&g_lo) && (-12.0..=3.0).contains(&g_hi));
        Ok(())
    })?;
    Ok("20 maps match the summation oracle; monotone over 1000 pairs".into())
}

// 7 ---------------------------------------------------------------------

fn run_cli(out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_soundscape"))
        .arg("--stub-manifest")
        .arg(fixtures().join("cafe.json"))
        .arg("pipeline")
        .arg(fixtures().join("cafe.mp4"))
        .arg("--out")
        .arg(out)
        .arg("--json")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        status.status.success(),
        "pipeline exited with {:?}: {}",
        status.status.code(),
        String::from_utf8_lossy(&status.stderr)
    );
    Ok(())
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn end_to_end_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_cli(&a)?;
    run_cli(&b)?;
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    ensure!(fa.keys().eq(fb.keys()), "different file sets: {:?} vs {:?}", fa.keys(), fb.keys());
    for (name, bytes) in &fa {
        ensure!(fb[name] == *bytes, "{name} differs between runs");
    }
    ensure!(fa.contains_key("project.json") && fa.contains_key("mixdown.wav"), "missing outputs: {:?}", fa.keys());

    let mix = soundscape_core::wav::read_stereo_16(&a.join("mixdown.wav")).map_err(|e| e.to_string())?;
    let doc: Value = serde_json::from_slice(&fa["project.json"]).map_err(|e| e.to_string())?;
    let duration = doc["source"]["duration_s"].as_f64().ok_or("no source duration")?;
    let expected = duration * 48_000.0;
    ensure!(mix.sample_rate == 48_000, "rate {}", mix.sample_rate);
    ensure!(
        (mix.len() as f64 - expected).abs() <= 1.0,
        "{} samples for {duration}s",
        mix.len()
    );
    Ok(format!("{} identical files; {} samples for {duration}s", fa.len(), mix.len()))
}

// 8 ---------------------------------------------------------------------

fn random_project(seed: u64) -> MixProject {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = format!("p{:x}", rng.random::<u32>());
    let duration = rng.random_range(0.5..30.0);
    let mut p = MixProject::new(
        id.clone(),
        SourceMedia {
            path: format!("/media/{seed}.mp4"),
            file_name: format!("{seed}.mp4"),
            sha256: format!("{:064x}", rng.random::<u128>()),
            duration_s: duration,
        },
        MixSettings {
            output_sample_rate: [22_050, 44_100, 48_000][rng.random_range(0..3)],
            normalization_ceiling: rng.random_range(0.5..=1.0),
            ..MixSettings::default()
        },
    );
    p.revision = rng.random_range(1..1_000);
    const WORDS: [&str; 10] = ["hum", "of", "distant", "birds", "rain", "café", "doorbell", "🎵 music", "wind \"gusts\"", "engine"];
    if rng.random_bool(0.7) {
        let outdoors = rng.random_bool(0.5);
        p.context = Some(SceneContext {
            objects: (0..rng.random_range(0..4)).map(|i| format!("object {i}")).collect(),
            setting: if outdoors { Setting::Outdoors } else { Setting::Indoors },
            location: "somewhere".into(),
            time_of_day: outdoors.then(|| TimeOfDay::ALL[rng.random_range(0..TimeOfDay::ALL.len())]),
            weather: outdoors.then(|| Weather::ALL[rng.random_range(0..Weather::ALL.len())]),
            ambient_sounds: vec!["Speech".into()],
            sign_text: String::new(),
            speech_transcript: "hello\nworld".into(),
            caption: "a scene".into(),
        });
        p.scene_prompt = Some(assemble_prompt(p.context.as_ref().unwrap()));
    }
    let mut seq = 0;
    for _ in 0..rng.random_range(0..6) {
        seq += 1;
        let text: Vec<&str> = (0..rng.random_range(1..4)).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
        let origin = match (rng.random_range(0..3), p.suggestions.last()) {
            (0, _) => SuggestionOrigin::Custom,
            (1, Some(prev)) => SuggestionOrigin::SimilarOf(prev.id.clone()),
            _ => SuggestionOrigin::Llm,
        };
        p.suggestions.push(SoundSuggestion {
            id: format!("{id}-s{seq}"),
            text: text.join(" "),
            emoji: ["🔊", "🐦", "☕", "🌧️"][rng.random_range(0..4)].into(),
            origin,
            selected: rng.random_bool(0.6),
            duplicate: rng.random_bool(0.2),
        });
    }
    let selected: Vec<String> = p.suggestions.iter().filter(|s| s.selected).map(|s| s.id.clone()).collect();
    for sid in selected {
        seq += 1;
        if rng.random_bool(0.3) {
            p.track_errors.push(TrackError {
                suggestion_id: sid,
                message: "generator unavailable".into(),
            });
            continue;
        }
        let rate = [8_000, 16_000, 32_000][rng.random_range(0..3)];
        let samples: Vec<f32> = (0..rng.random_range(1..200)).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
        let mut times: Vec<f64> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0.0..=duration)).collect();
        times.sort_by(f64::total_cmp);
        let gain = times.iter().map(|&t| Keyframe::new(t, rng.random_range(-60.0..12.0))).collect();
        let pan = times.iter().map(|&t| Keyframe::new(t, rng.random_range(-1.0..=1.0))).collect();
        let track = AudioTrack {
            id: format!("{id}-t{seq}"),
            suggestion_id: sid,
            clip: AudioClip::new(samples, rate).unwrap(),
            duration_target: duration,
            category: [TrackCategory::Foreground, TrackCategory::Background, TrackCategory::Unknown][rng.random_range(0..3)],
            gain_automation: gain,
            pan_automation: pan,
            user_gain_offset_db: rng.random_range(-24.0..12.0),
        };
        if rng.random_bool(0.5) {
            p.localization.insert(
                track.id.clone(),
                LocalizationNote {
                    subject: "subject".into(),
                    presence_score: rng.random_bool(0.5).then(|| rng.random_range(0.0..=1.0)),
                    area_fractions: (0..3).map(|_| rng.random_range(0.0..=1.0)).collect(),
                    warning: rng.random_bool(0.2).then(|| "fell back".to_string()),
                },
            );
        }
        p.tracks.push(track);
    }
    p.next_seq = seq;
    p
}

fn corrupt(text: &str, kind: usize, rng: &mut ChaCha8Rng) -> String {
    let mut doc: Value = serde_json::from_str(text).unwrap();
    match kind {
        0 => {
            let cut = rng.random_range(0..text.len() - 2);
            let mut cut = cut;
            while !text.is_char_boundary(cut) {
                cut -= 1;
            }
            return text[..cut].to_string();
        }
        1 => doc["schema_version"] = Value::from(99),
        2 => doc["revision"] = Value::from("three"),
        3 => {
            doc.as_object_mut().unwrap().remove("id");
        }
        4 => doc["unexpected"] = Value::from(true),
        5 => match doc["tracks"].as_array_mut().and_then(|t| t.first_mut()) {
            Some(track) => track["suggestion_id"] = Value::from("ghost"),
            None => doc["source"]["duration_s"] = Value::from(-1.0),
        },
        6 => doc["settings"]["normalization_ceiling"] = Value::from(3.5),
        _ => return "\u{0}\u{1}not json at all".into(),
    }
    serde_json::to_string_pretty(&doc).unwrap()
}

fn persistence_round_trip() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut with_tracks = 0;
    for case in 0..100u64 {
        let original = random_project(case * 7919 + 1);
        original.validate().map_err(|e| format!("case {case}: generator made an invalid project: {e}"))?;
        let dir = tmp.path().join(format!("case{case}"));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("project.json");
        project::save(&original, &path).map_err(|e| format!("case {case}: save: {e}"))?;
        let loaded = project::load(&path).map_err(|e| format!("case {case}: load: {e}"))?;
        ensure!(loaded == original, "case {case}: round trip changed the project");
        let text = fs::read_to_string(&path).unwrap();
        ensure!(loaded.to_json() == text, "case {case}: re-serialization is not byte-stable");

        for kind in 0..8 {
            let bad = dir.join(format!("corrupt{kind}.json"));
            fs::write(&bad, corrupt(&text, kind, &mut rng)).unwrap();
            match project::load(&bad) {
                Err(ProjectError::Schema { .. }) => {}
                other => return Err(format!("case {case}: corruption {kind} gave {other:?}")),
            }
        }
        if let Some(track) = original.tracks.first() {
            with_tracks += 1;
            let sha = project::ClipRef::of(&track.clip).sha256;
            fs::remove_file(dir.join("audio").join(format!("{sha}.wav"))).unwrap();
            match project::load(&path) {
                Err(ProjectError::Integrity { sha256, .. }) if sha256 == sha => {}
                other => return Err(format!("case {case}: missing sidecar gave {other:?}")),
            }
        }
    }
    Ok(format!("100 projects round-trip ({with_tracks} with audio); 800 corruptions rejected"))
}

fn main() {
    let criteria: [(u8, &str, fn() -> Outcome); 8] = [
        (1, "prompt template fidelity", prompt_template),
        (2, "background sounds sit 7 dB below the foreground baseline", background_rule),
        (3, "similar-sound expansion yields exactly two", exactly_two_similar),
        (4, "scene sound list reproduction", scene_sound_reproduction),
        (5, "mixer math properties", mixer_properties),
        (6, "localization oracle equivalence", localization_oracle),
        (7, "end-to-end determinism", end_to_end_determinism),
        (8, "persistence round trip", persistence_round_trip),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (n, name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(note) => println!("criterion {n}: PASS  {name} ({note})"),
            Err(why) => {
                failures += 1;
                println!("criterion {n}: FAIL  {name}: {why}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 8 acceptance criteria passed");
}
