//! Deterministic subword tokenization.
//!
//! [`SubwordTokenizer`] is a greedy longest-match segmenter over a fixed
//! vocabulary of pieces. Pieces are contiguous slices of the input, so
//! concatenating the tokens always reproduces the text. Whitespace is carried
//! inside pieces as a leading space (written `▁` in vocabulary files). When no
//! vocabulary piece matches, a single grapheme cluster is emitted, with a
//! whitespace grapheme absorbing the grapheme that follows it.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

/// Marker used for a leading space in vocabulary files and token dumps.
pub const SPACE_MARK: char = '▁';

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Anything that splits text into tokens for counting and scoring.
pub trait Tokenize {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str>;

    fn detokenize(&self, tokens: &[&str]) -> String;
}

/// Splits on Unicode whitespace. Not reversible: detokenization joins with a
/// single space.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenize for WhitespaceTokenizer {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        text.split_whitespace().collect()
    }

    fn detokenize(&self, tokens: &[&str]) -> String {
        tokens.join(" ")
    }
}

#[derive(Debug, Clone)]
pub struct SubwordTokenizer {
    /// Every nonempty prefix of every piece; pieces map to their score,
    /// bare prefixes to `None`. A scan stops at the first miss.
    prefixes: HashMap<String, Option<f32>>,
    vocab_size: usize,
}

impl SubwordTokenizer {
    pub fn new<I, S>(pieces: I) -> Self
    where
        I: IntoIterator<Item = (S, f32)>,
        S: Into<String>,
    {
        let mut prefixes: HashMap<String, Option<f32>> = HashMap::new();
        for (piece, score) in pieces {
            let piece: String = piece.into();
            if piece.is_empty() {
                continue;
            }
            for (i, _) in piece.grapheme_indices(true).skip(1) {
                prefixes.entry(piece[..i].to_string()).or_insert(None);
            }
            prefixes.insert(piece, Some(score));
        }
        let vocab_size = prefixes.values().filter(|v| v.is_some()).count();
        SubwordTokenizer { prefixes, vocab_size }
    }

    /// Parses `piece<TAB>score` lines (score optional). `▁` stands for a
    /// leading space.
    pub fn from_vocab_text(text: &str) -> Result<Self, VocabError> {
        let mut pieces = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (piece, score) = match line.split_once('\t') {
                Some((p, s)) => {
                    let score = s.trim().parse::<f32>().map_err(|_| VocabError::Malformed {
                        line: idx + 1,
                        reason: format!("bad score {s:?}"),
                    })?;
                    (p, score)
                }
                None => (line, 0.0),
            };
            pieces.push((piece.replace(SPACE_MARK, " "), score));
        }
        Ok(SubwordTokenizer::new(pieces))
    }

    pub fn from_vocab_file(path: &Path) -> Result<Self, VocabError> {
        let text = std::fs::read_to_string(path).map_err(|source| VocabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_vocab_text(&text)
    }

    /// The shipped toy vocabulary: [`BASIC_WORDS`] with and without a
    /// leading space, plus common English suffixes.
    pub fn builtin() -> Self {
        let mut pieces: Vec<(String, f32)> = Vec::new();
        for (rank, word) in BASIC_WORDS.iter().enumerate() {
            let score = -(rank as f32) / 100.0;
            pieces.push((word.to_string(), score));
            pieces.push((format!(" {word}"), score));
        }
        for suffix in ["s", "ed", "ing", "er", "ly", "tion", "ment", "ness"] {
            pieces.push((suffix.to_string(), -10.0));
        }
        SubwordTokenizer::new(pieces)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.score(piece).is_some()
    }

    pub fn score(&self, piece: &str) -> Option<f32> {
        self.prefixes.get(piece).copied().flatten()
    }
}

impl Tokenize for SubwordTokenizer {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        // Outside of CR LF, every ASCII byte is its own grapheme cluster.
        let mut bounds: Vec<usize> = if text.is_ascii() && !text.contains("\r\n") {
            (0..text.len()).collect()
        } else {
            text.grapheme_indices(true).map(|(i, _)| i).collect()
        };
        bounds.push(text.len());
        let n = bounds.len() - 1;
        let mut tokens = Vec::new();
        let mut i = 0;
        while i < n {
            let mut matched = None;
            for j in i + 1..=n {
                let candidate = &text[bounds[i]..bounds[j]];
                match self.prefixes.get(candidate) {
                    None => break,
                    Some(Some(_)) => matched = Some(j),
                    Some(None) => {}
                }
            }
            let end = match matched {
                Some(j) => j,
                None => {
                    let g = &text[bounds[i]..bounds[i + 1]];
                    let next_is_word = i + 1 < n
                        && !text[bounds[i + 1]..bounds[i + 2]].chars().all(char::is_whitespace);
                    if g.chars().all(char::is_whitespace) && next_is_word {
                        i + 2
                    } else {
                        i + 1
                    }
                }
            };
            tokens.push(&text[bounds[i]..bounds[end]]);
            i = end;
        }
        tokens
    }

    fn detokenize(&self, tokens: &[&str]) -> String {
        tokens.concat()
    }
}

/// Display form of a token, with spaces shown as `▁`.
pub fn render_token(token: &str) -> String {
    token.replace(' ', &SPACE_MARK.to_string())
}

/// Fixed English word list. It seeds the builtin tokenizer vocabulary and
/// the cipher translators' token bijection.
pub const BASIC_WORDS: &[&str] = &[
    "the", "of", "and", "to", "in", "is", "was", "for", "on", "that", "with", "as", "by", "at",
    "from", "his", "her", "it", "an", "were", "are", "which", "this", "be", "or", "has", "had",
    "not", "first", "one", "their", "its", "new", "after", "who", "they", "have", "two", "also",
    "but", "all", "other", "been", "time", "when", "during", "into", "year", "more", "city",
    "school", "world", "there", "would", "over", "only", "some", "most", "he", "she", "we", "you",
    "many", "state", "three", "later", "known", "such", "through", "about", "team", "where",
    "between", "under", "while", "people", "then", "made", "used", "best", "since", "film",
    "part", "river", "music", "house", "before", "well", "both", "early", "season", "game",
    "area", "country", "name", "family", "north", "south", "east", "west", "water", "small",
    "large", "long", "old", "young", "good", "great", "high", "low", "day", "night", "man",
    "woman", "child", "children", "book", "song", "war", "life", "work", "home", "church", "road",
    "station", "village", "island", "mountain", "language", "history", "party", "government",
    "president", "king", "queen", "army", "university", "college", "company", "market", "street",
    "garden", "forest", "lake", "sea", "sun", "moon", "star", "cat", "dog", "horse", "bird",
    "fish", "tree", "flower", "red", "blue", "green", "white", "black", "sat", "ran", "saw",
    "went", "came", "took", "gave", "found", "said", "told", "wrote", "read", "built", "won",
    "lost", "played", "lived", "died", "born", "called", "named", "began", "ended", "opened",
    "closed", "moved", "became", "remained", "held", "led", "left", "right", "near", "far",
    "quickly", "slowly", "often", "never", "always", "again", "still", "very", "much", "few",
    "every", "each", "any", "no", "yes", "here", "now", "today", "morning", "evening", "winter",
    "summer", "spring", "autumn", "bridge", "castle", "tower", "port", "ship", "train", "car",
    "a",
];
