use serde::{Deserialize, Serialize};

/// Universal part-of-speech tags, as emitted by spaCy-style parsers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PartOfSpeech {
    Noun,
    Propn,
    Verb,
    Aux,
    Adj,
    Adv,
    Adp,
    Det,
    Cconj,
    Pron,
    Num,
    Part,
    Punct,
    #[serde(other)]
    Other,
}

impl PartOfSpeech {
    pub fn is_nominal(self) -> bool {
        matches!(self, PartOfSpeech::Noun | PartOfSpeech::Propn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub text: String,
    pub pos: PartOfSpeech,
}

/// Tokens plus base noun phrases as half-open token ranges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SyntaxParse {
    pub tokens: Vec<TaggedToken>,
    pub noun_chunks: Vec<(usize, usize)>,
}

impl SyntaxParse {
    pub fn chunk_text(&self, range: (usize, usize)) -> String {
        self.tokens[range.0..range.1]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub(crate) fn is_valid(&self) -> bool {
        self.noun_chunks
            .iter()
            .all(|&(s, e)| s < e && e <= self.tokens.len())
    }
}

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "some", "this", "that", "these", "those", "its", "their", "his", "her", "my",
    "our", "your", "each", "every", "another", "any", "no",
];

const ADPOSITIONS: &[&str] = &[
    "of", "on", "in", "at", "over", "through", "by", "from", "to", "with", "under", "across",
    "along", "against", "into", "onto", "near", "beside", "behind", "around", "during", "for",
    "about", "above", "below", "between", "beyond", "inside", "past", "toward", "towards", "upon",
    "within", "without", "among", "amid", "via", "like",
];

const CONJUNCTIONS: &[&str] = &["and", "or", "but", "nor", "&"];

const PRONOUNS: &[&str] = &[
    "it", "they", "them", "he", "she", "we", "you", "i", "someone", "something", "somebody",
    "everyone", "people's",
];

const ADVERBS: &[&str] = &[
    "nearby", "underfoot", "overhead", "softly", "loudly", "quietly", "gently", "slowly",
    "rapidly", "quickly", "occasionally", "constantly", "faintly", "far", "here", "there", "again",
    "together", "away", "off", "up", "down", "out", "back", "around", "intermittently",
    "continuously", "rhythmically", "steadily", "briefly",
];

const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "be", "being", "been", "has", "have", "had", "can", "could", "will",
    "would",
];

const ADJECTIVES: &[&str] = &[
    "quiet", "soft", "gentle", "distant", "occasional", "loud", "faint", "low", "high", "heavy",
    "light", "small", "large", "big", "little", "deep", "constant", "steady", "rhythmic", "sharp",
    "rapid", "slow", "busy", "crowded", "wet", "dry", "cold", "warm", "metallic", "electric",
    "mechanical", "distorted", "muted", "subtle", "rustling",
];

/// Words ending in -ing that are ordinary nouns.
const ING_NOUNS: &[&str] = &[
    "ceiling", "building", "thing", "something", "nothing", "king", "ring", "string", "spring",
    "wing", "evening", "morning", "pudding", "clothing", "railing", "painting",
    "lightning", "ping", "sibling", "duckling", "swing", "offspring",
];

fn lexical_class(lower: &str) -> Option<PartOfSpeech> {
    if DETERMINERS.contains(&lower) {
        Some(PartOfSpeech::Det)
    } else if ADPOSITIONS.contains(&lower) {
        Some(PartOfSpeech::Adp)
    } else if CONJUNCTIONS.contains(&lower) {
        Some(PartOfSpeech::Cconj)
    } else if PRONOUNS.contains(&lower) {
        Some(PartOfSpeech::Pron)
    } else if ADVERBS.contains(&lower) {
        Some(PartOfSpeech::Adv)
    } else if AUXILIARIES.contains(&lower) {
        Some(PartOfSpeech::Aux)
    } else if ADJECTIVES.contains(&lower) {
        Some(PartOfSpeech::Adj)
    } else if lower.chars().all(|c| c.is_ascii_digit()) {
        Some(PartOfSpeech::Num)
    } else {
        None
    }
}

fn is_participle(lower: &str, suffix: &str) -> bool {
    lower.len() > suffix.len() + 2 && lower.ends_with(suffix) && !ING_NOUNS.contains(&lower)
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let body_len = word.trim_end_matches(|c: char| ",.;:!?".contains(c)).len();
        let (body, tail) = word.split_at(body_len);
        let body = body.trim_matches(|c: char| "\"()".contains(c));
        if !body.is_empty() {
            tokens.push(body.to_string());
        }
        tokens.extend(tail.chars().map(String::from));
    }
    tokens
}

/// Lexicon-and-suffix tagger used by the stub parser. Good enough for short
/// sound descriptions ("Hum of espresso machine", "Dogs barking"); not a
/// general-purpose parser.
pub(crate) fn heuristic_parse(text: &str) -> SyntaxParse {
    let words = tokenize(text);
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
    let fixed: Vec<Option<PartOfSpeech>> = lower
        .iter()
        .map(|w| {
            if w.chars().all(|c| c.is_ascii_punctuation()) {
                Some(PartOfSpeech::Punct)
            } else {
                lexical_class(w)
            }
        })
        .collect();

    let is_content = |i: usize| -> bool {
        i < words.len()
            && fixed[i].is_none()
            && !is_participle(&lower[i], "ing")
            && !is_participle(&lower[i], "ed")
    };

    let mut pos = Vec::with_capacity(words.len());
    for i in 0..words.len() {
        let tag = if let Some(p) = fixed[i] {
            p
        } else if is_participle(&lower[i], "ing") {
            let next_is_of = lower.get(i + 1).map(|w| w == "of").unwrap_or(false);
            if next_is_of {
                PartOfSpeech::Noun
            } else if is_content(i + 1) {
                PartOfSpeech::Adj
            } else if i == 0 && words.len() == 1 {
                PartOfSpeech::Noun
            } else {
                PartOfSpeech::Verb
            }
        } else if is_participle(&lower[i], "ed") {
            let prev: Option<PartOfSpeech> = pos.last().copied();
            match prev {
                Some(PartOfSpeech::Noun | PartOfSpeech::Propn | PartOfSpeech::Pron | PartOfSpeech::Verb | PartOfSpeech::Aux) => {
                    PartOfSpeech::Verb
                }
                _ => PartOfSpeech::Adj,
            }
        } else {
            PartOfSpeech::Noun
        };
        pos.push(tag);
    }

    let tokens: Vec<TaggedToken> = words
        .into_iter()
        .zip(pos)
        .map(|(text, pos)| TaggedToken { text, pos })
        .collect();

    // Base noun phrases: optional determiners, then modifiers, ending on the
    // last nominal of the run.
    let mut chunks = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let start = i;
        while i < tokens.len() && tokens[i].pos == PartOfSpeech::Det {
            i += 1;
        }
        let mut last_nominal = None;
        while i < tokens.len()
            && matches!(
                tokens[i].pos,
                PartOfSpeech::Noun | PartOfSpeech::Propn | PartOfSpeech::Adj | PartOfSpeech::Num
            )
        {
            if tokens[i].pos.is_nominal() {
                last_nominal = Some(i);
            }
            i += 1;
        }
        match last_nominal {
            Some(end) => {
                chunks.push((start, end + 1));
                i = end + 1;
            }
            None => i = i.max(start + 1),
        }
    }

    SyntaxParse {
        tokens,
        noun_chunks: chunks,
    }
}
