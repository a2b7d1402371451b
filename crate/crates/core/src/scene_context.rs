//! Three-layer scene understanding and the scene prompt built from it.
//!
//! Layer one collects the visible objects, layer two the environment cues
//! (sign text, speech, sound tags) and layer three the general context:
//! indoors/outdoors first, then a location from the matching category set,
//! then time of day and weather for outdoor scenes only, and finally a
//! caption.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{self, AdapterError, AdapterSet, Classification, Frame, MediaInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Indoors,
    Outdoors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeOfDay {
    Morning,
    Afternoon,
    Evening,
    Night,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weather {
    Sunny,
    Foggy,
    Windy,
    Cloudy,
    Thunderstorm,
    Rainy,
    Drizzle,
    Snowy,
    Blizzard,
}

macro_rules! word_enum {
    ($ty:ty, $($variant:ident => $word:literal),+ $(,)?) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$(<$ty>::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(<$ty>::$variant => $word),+
                }
            }

            pub fn categories() -> Vec<String> {
                Self::ALL.iter().map(|v| v.as_str().to_string()).collect()
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($word => Ok(<$ty>::$variant),)+
                    other => Err(format!("unknown {}: {other:?}", stringify!($ty))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

word_enum!(Setting, Indoors => "indoors", Outdoors => "outdoors");
word_enum!(TimeOfDay, Morning => "morning", Afternoon => "afternoon", Evening => "evening", Night => "night");
word_enum!(
    Weather,
    Sunny => "sunny",
    Foggy => "foggy",
    Windy => "windy",
    Cloudy => "cloudy",
    Thunderstorm => "thunderstorm",
    Rainy => "rainy",
    Drizzle => "drizzle",
    Snowy => "snowy",
    Blizzard => "blizzard",
);

/// Everything the scene layers found, in prompt-slot form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneContext {
    pub objects: Vec<String>,
    pub setting: Setting,
    pub location: String,
    pub time_of_day: Option<TimeOfDay>,
    pub weather: Option<Weather>,
    pub ambient_sounds: Vec<String>,
    pub sign_text: String,
    pub speech_transcript: String,
    pub caption: String,
}

impl SceneContext {
    pub fn validate(&self) -> Result<(), SceneError> {
        let outdoors = self.setting == Setting::Outdoors;
        if outdoors != self.time_of_day.is_some() || outdoors != self.weather.is_some() {
            return Err(SceneError::Invalid(
                "time of day and weather must be present exactly for outdoor scenes".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for label in &self.objects {
            if label.trim().is_empty() {
                return Err(SceneError::Invalid("empty object label".into()));
            }
            if !seen.insert(label.to_lowercase()) {
                return Err(SceneError::Invalid(format!("duplicate object label {label:?}")));
            }
        }
        Ok(())
    }
}

/// Sampling instants for a media file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    pub sample_rate_fps: f64,
    pub frame_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SceneLayer {
    #[serde(rename = "media")]
    Media,
    #[serde(rename = "visible_objects")]
    VisibleObjects,
    #[serde(rename = "environment_cues")]
    EnvironmentCues,
    #[serde(rename = "general_context")]
    GeneralContext,
}

impl fmt::Display for SceneLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SceneLayer::Media => "media decoding",
            SceneLayer::VisibleObjects => "visible objects",
            SceneLayer::EnvironmentCues => "environment cues",
            SceneLayer::GeneralContext => "general context",
        })
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid frame plan: {0}")]
    InvalidPlan(String),
    #[error("{layer} layer failed: {source}")]
    Adapter {
        layer: SceneLayer,
        #[source]
        source: AdapterError,
    },
    #[error("invalid scene context: {0}")]
    Invalid(String),
}

impl SceneError {
    fn at(layer: SceneLayer) -> impl FnOnce(AdapterError) -> SceneError {
        move |source| SceneError::Adapter { layer, source }
    }
}

/// How layer-three classifications combine across frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextVote {
    #[default]
    FirstFrame,
    MajorityVote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub fps: f64,
    pub detection_threshold: f64,
    pub sound_tag_threshold: f64,
    pub context_vote: ContextVote,
    pub indoor_locations: Vec<String>,
    pub outdoor_locations: Vec<String>,
}

/// Readable labels drawn from the Places365 indoor categories.
pub const DEFAULT_INDOOR_LOCATIONS: &[&str] = &[
    "airport terminal", "art gallery", "bakery", "ballroom", "bar", "bedroom", "beer hall",
    "bookstore", "bowling alley", "cafeteria", "classroom", "clothing store", "coffee shop",
    "concert hall", "conference room", "corridor", "dining room", "elevator lobby",
    "fastfood restaurant", "food court", "gymnasium", "hospital room", "hotel room", "kitchen",
    "laundromat", "library", "living room", "lobby", "movie theater", "museum", "music studio",
    "office", "pub", "restaurant", "shopping mall", "subway station platform", "supermarket",
    "swimming pool", "television studio", "train interior", "waiting room",
];

/// Readable labels drawn from the Places365 outdoor categories.
pub const DEFAULT_OUTDOOR_LOCATIONS: &[&str] = &[
    "alley", "amusement park", "beach", "boardwalk", "bridge", "campsite", "canyon",
    "construction site", "courtyard", "crosswalk", "desert", "farm", "forest path", "garden",
    "harbor", "highway", "lake", "market", "moon surface", "mountain", "park", "parking lot",
    "pasture", "plaza", "playground", "rainforest", "river", "runway", "schoolyard", "ski slope",
    "stadium", "street", "train station platform", "village", "waterfall", "wheat field",
];

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            fps: 1.0,
            detection_threshold: 0.5,
            sound_tag_threshold: 0.3,
            context_vote: ContextVote::FirstFrame,
            indoor_locations: DEFAULT_INDOOR_LOCATIONS.iter().map(|s| s.to_string()).collect(),
            outdoor_locations: DEFAULT_OUTDOOR_LOCATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Frames every `1/fps` seconds from zero, always at least one.
pub fn plan_frames(media_duration: f64, fps: f64) -> Result<FramePlan, SceneError> {
    if !(media_duration.is_finite() && media_duration > 0.0) {
        return Err(SceneError::InvalidPlan(format!("media duration {media_duration} must be positive")));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(SceneError::InvalidPlan(format!("frame rate {fps} must be positive")));
    }
    let mut frame_times = vec![0.0];
    let mut k = 1u64;
    loop {
        let t = k as f64 / fps;
        if t >= media_duration {
            break;
        }
        frame_times.push(t);
        k += 1;
    }
    Ok(FramePlan {
        sample_rate_fps: fps,
        frame_times,
    })
}

/// Decodes every planned frame.
pub fn sample_frames(adapters: &AdapterSet, media: &MediaInfo, plan: &FramePlan) -> Result<Vec<Frame>, SceneError> {
    plan.frame_times
        .iter()
        .map(|&t| adapters.decoder.frame_at(media, t).map_err(SceneError::at(SceneLayer::Media)))
        .collect()
}

struct EnvironmentCues {
    sign_text: String,
    speech_transcript: String,
    ambient_sounds: Vec<String>,
}

struct GeneralContext {
    setting: Setting,
    location: String,
    time_of_day: Option<TimeOfDay>,
    weather: Option<Weather>,
    caption: String,
}

fn visible_objects(adapters: &AdapterSet, frames: &[Frame], threshold: f64) -> Result<Vec<String>, AdapterError> {
    // lowercased label -> (display label, best confidence)
    let mut best: HashMap<String, (String, f64)> = HashMap::new();
    for frame in frames {
        for det in adapters::detect_objects(adapters.detector.as_ref(), frame, threshold)? {
            let entry = best
                .entry(det.label.to_lowercase())
                .or_insert_with(|| (det.label.clone(), det.confidence));
            entry.1 = entry.1.max(det.confidence);
        }
    }
    let mut ranked: Vec<(String, f64)> = best.into_values().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked.into_iter().map(|(label, _)| label).collect())
}

fn push_unique(list: &mut Vec<String>, item: &str) {
    let item = item.trim();
    if !item.is_empty() && !list.iter().any(|x| x.eq_ignore_ascii_case(item)) {
        list.push(item.to_string());
    }
}

fn environment_cues(
    adapters: &AdapterSet,
    media: &MediaInfo,
    frames: &[Frame],
    sound_threshold: f64,
) -> Result<EnvironmentCues, AdapterError> {
    let mut signs = Vec::new();
    for frame in frames {
        let ocr = adapters::extract_text(adapters.ocr.as_ref(), frame)?;
        push_unique(&mut signs, &ocr.text);
    }
    let audio = adapters.decoder.audio(media)?;
    let transcript = adapters::transcribe(adapters.asr.as_ref(), &audio)?;
    let mut sounds = Vec::new();
    for tag in adapters::tag_sounds(adapters.tagger.as_ref(), &audio)? {
        if tag.confidence >= sound_threshold {
            push_unique(&mut sounds, &tag.label);
        }
    }
    Ok(EnvironmentCues {
        sign_text: signs.join(", "),
        speech_transcript: transcript.text,
        ambient_sounds: sounds,
    })
}

/// Winning category across frames: most wins, then highest summed score,
/// then earliest category.
fn vote(adapters: &AdapterSet, frames: &[Frame], categories: &[String]) -> Result<String, AdapterError> {
    let mut tally: Vec<(usize, f64)> = vec![(0, 0.0); categories.len()];
    for frame in frames {
        let Classification { category, score } = adapters::classify(adapters.classifier.as_ref(), frame, categories)?;
        let idx = categories.iter().position(|c| *c == category).unwrap_or(0);
        tally[idx].0 += 1;
        tally[idx].1 += score;
    }
    let mut best = 0;
    for (i, t) in tally.iter().enumerate().skip(1) {
        let b = tally[best];
        if t.0 > b.0 || (t.0 == b.0 && t.1 > b.1) {
            best = i;
        }
    }
    Ok(categories[best].clone())
}

fn general_context(adapters: &AdapterSet, frames: &[Frame], config: &SceneConfig) -> Result<GeneralContext, AdapterError> {
    let voters = match config.context_vote {
        ContextVote::FirstFrame => &frames[..1],
        ContextVote::MajorityVote => frames,
    };
    let bad = |e: String| AdapterError::malformed(adapters::AdapterKind::Classifier, e);

    let setting: Setting = vote(adapters, voters, &Setting::categories())?.parse().map_err(bad)?;
    let locations = match setting {
        Setting::Indoors => &config.indoor_locations,
        Setting::Outdoors => &config.outdoor_locations,
    };
    let location = vote(adapters, voters, locations)?;
    let (time_of_day, weather) = match setting {
        Setting::Indoors => (None, None),
        Setting::Outdoors => (
            Some(vote(adapters, voters, &TimeOfDay::categories())?.parse().map_err(bad)?),
            Some(vote(adapters, voters, &Weather::categories())?.parse().map_err(bad)?),
        ),
    };
    let caption = adapters::caption(adapters.captioner.as_ref(), &frames[0])?;
    Ok(GeneralContext {
        setting,
        location,
        time_of_day,
        weather,
        caption,
    })
}

/// Runs all three layers over `media` and merges them into a context.
pub fn build_context(media: &MediaInfo, adapters: &AdapterSet, config: &SceneConfig) -> Result<SceneContext, SceneError> {
    let plan = plan_frames(media.duration_s, config.fps)?;
    let frames = sample_frames(adapters, media, &plan)?;

    let (objects, cues, general) = if adapters.scene_single_flight() {
        (
            visible_objects(adapters, &frames, config.detection_threshold),
            environment_cues(adapters, media, &frames, config.sound_tag_threshold),
            general_context(adapters, &frames, config),
        )
    } else {
        thread::scope(|s| {
            let objects = s.spawn(|| visible_objects(adapters, &frames, config.detection_threshold));
            let cues = s.spawn(|| environment_cues(adapters, media, &frames, config.sound_tag_threshold));
            let general = general_context(adapters, &frames, config);
            (
                objects.join().expect("visible-objects layer panicked"),
                cues.join().expect("environment-cues layer panicked"),
                general,
            )
        })
    };
    let objects = objects.map_err(SceneError::at(SceneLayer::VisibleObjects))?;
    let cues = cues.map_err(SceneError::at(SceneLayer::EnvironmentCues))?;
    let general = general.map_err(SceneError::at(SceneLayer::GeneralContext))?;

    let ctx = SceneContext {
        objects,
        setting: general.setting,
        location: general.location,
        time_of_day: general.time_of_day,
        weather: general.weather,
        ambient_sounds: cues.ambient_sounds,
        sign_text: cues.sign_text,
        speech_transcript: cues.speech_transcript,
        caption: general.caption,
    };
    ctx.validate()?;
    Ok(ctx)
}

fn slot(text: &str) -> &str {
    text.trim().trim_end_matches(['.', '!', '?']).trim_end()
}

/// The scene prompt: one sentence per populated slot, in template order.
pub fn assemble_prompt(ctx: &SceneContext) -> String {
    let mut sentences: Vec<String> = Vec::with_capacity(8);
    let mut push = |prefix: &str, value: &str| {
        let value = slot(value);
        if !value.is_empty() {
            sentences.push(format!("{prefix}{value}."));
        }
    };
    push("I see ", &ctx.objects.join(", "));
    push("I am at ", &ctx.location);
    push("The time is ", ctx.time_of_day.map(TimeOfDay::as_str).unwrap_or(""));
    push("The weather is ", ctx.weather.map(Weather::as_str).unwrap_or(""));
    push("There are sounds of ", &ctx.ambient_sounds.join(", "));
    push("There are signs writing ", &ctx.sign_text);
    push("There are people saying ", &ctx.speech_transcript);
    push("Overall, I see ", &ctx.caption);
    sentences.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn indoor() -> SceneContext {
        SceneContext {
            objects: vec!["cup".into(), "table".into()],
            setting: Setting::Indoors,
            location: "coffee shop".into(),
            time_of_day: None,
            weather: None,
            ambient_sounds: vec![],
            sign_text: String::new(),
            speech_transcript: String::new(),
            caption: "people sitting in a coffee shop".into(),
        }
    }

    #[test]
    fn plan_examples() {
        assert_eq!(
            plan_frames(10.0, 1.0).unwrap().frame_times,
            (0..10).map(f64::from).collect::<Vec<_>>()
        );
        assert_eq!(plan_frames(0.5, 1.0).unwrap().frame_times, vec![0.0]);
        assert!(plan_frames(10.0, 0.0).is_err());
        assert!(plan_frames(0.0, 1.0).is_err());
        assert_eq!(plan_frames(1.0, 4.0).unwrap().frame_times, vec![0.0, 0.25, 0.5, 0.75]);
    }

    #[test]
    fn indoor_prompt_omits_empty_sentences() {
        assert_eq!(
            assemble_prompt(&indoor()),
            "I see cup, table. I am at coffee shop. Overall, I see people sitting in a coffee shop."
        );
    }

    #[test]
    fn list_slots_are_comma_joined() {
        let mut ctx = indoor();
        ctx.objects = vec!["birds".into(), "dogs".into()];
        assert!(assemble_prompt(&ctx).contains("I see birds, dogs."));
    }

    #[test]
    fn trailing_punctuation_is_not_doubled() {
        let mut ctx = indoor();
        ctx.caption = "a quiet cafe.".into();
        ctx.speech_transcript = "Can I get a latte?".into();
        let p = assemble_prompt(&ctx);
        assert!(p.ends_with("There are people saying Can I get a latte. Overall, I see a quiet cafe."), "{p}");
    }

    #[test]
    fn validate_catches_indoor_weather_and_duplicates() {
        let mut ctx = indoor();
        ctx.weather = Some(Weather::Rainy);
        assert!(ctx.validate().is_err());
        let mut ctx = indoor();
        ctx.objects.push("Cup".into());
        assert!(ctx.validate().is_err());
        assert!(indoor().validate().is_ok());
    }

    #[test]
    fn category_sets_match_the_documented_lists() {
        assert_eq!(TimeOfDay::categories(), ["morning", "afternoon", "evening", "night"]);
        assert_eq!(
            Weather::categories(),
            ["sunny", "foggy", "windy", "cloudy", "thunderstorm", "rainy", "drizzle", "snowy", "blizzard"]
        );
        assert_eq!("Blizzard".parse::<Weather>(), Ok(Weather::Blizzard));
        assert!("hail".parse::<Weather>().is_err());
    }
}
