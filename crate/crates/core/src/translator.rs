//! Pluggable translation interface and deterministic reference translators.
//!
//! Cipher languages are seeded bijections over a fixed English word list.
//! English is the interlingua: `X→Y` decodes the X cipher back to English and
//! encodes with the Y cipher, so every output is exactly predictable. A
//! noise wrapper corrupts tokens at a fixed rate to model an imperfect
//! system, and [`ExecTranslator`] adapts any external line-oriented program.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Direction, LangCode};
use crate::tokenizer::BASIC_WORDS;

/// Replacement emitted for a corrupted token.
pub const CORRUPTION_MARKER: &str = "⊥";

/// Prefix that wraps words outside the cipher vocabulary.
pub const OOV_MARK: char = '~';

#[derive(Debug, Error)]
pub enum TranslateError {
    /// Carries the direction as text so same-language hops can be reported.
    #[error("direction {0} is not supported")]
    UnsupportedDirection(String),
    #[error("language {0} given twice")]
    DuplicateLanguage(LangCode),
    #[error("noise rate must be within [0, 1], got {0}")]
    InvalidNoiseRate(f64),
    #[error("beam size must be at least 1")]
    InvalidBeamSize,
    #[error("sentence {0} contains a line break and cannot be sent over the line protocol")]
    MultilineSentence(usize),
    #[error("translator command {command:?} failed: {reason}")]
    Exec { command: String, reason: String },
}

/// Decoding settings handed to the model. Reference translators ignore them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodingConfig {
    pub beam_size: usize,
    pub length_penalty: f64,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            beam_size: 4,
            length_penalty: 1.0,
        }
    }
}

impl DecodingConfig {
    pub fn new(beam_size: usize, length_penalty: f64) -> Result<Self, TranslateError> {
        if beam_size == 0 {
            return Err(TranslateError::InvalidBeamSize);
        }
        Ok(DecodingConfig {
            beam_size,
            length_penalty,
        })
    }
}

pub trait Translator: Send + Sync {
    fn supports(&self, dir: &Direction) -> bool;

    /// Implementations may assume `self.supports(dir)`; callers go through
    /// [`translate`], which checks it.
    fn translate_batch(
        &self,
        sentences: &[String],
        dir: &Direction,
        cfg: &DecodingConfig,
    ) -> Result<Vec<String>, TranslateError>;
}

impl<T: Translator + ?Sized> Translator for &T {
    fn supports(&self, dir: &Direction) -> bool {
        (**self).supports(dir)
    }

    fn translate_batch(&self, s: &[String], dir: &Direction, cfg: &DecodingConfig) -> Result<Vec<String>, TranslateError> {
        (**self).translate_batch(s, dir, cfg)
    }
}

impl<T: Translator + ?Sized> Translator for Box<T> {
    fn supports(&self, dir: &Direction) -> bool {
        (**self).supports(dir)
    }

    fn translate_batch(&self, s: &[String], dir: &Direction, cfg: &DecodingConfig) -> Result<Vec<String>, TranslateError> {
        (**self).translate_batch(s, dir, cfg)
    }
}

impl<T: Translator + ?Sized> Translator for Arc<T> {
    fn supports(&self, dir: &Direction) -> bool {
        (**self).supports(dir)
    }

    fn translate_batch(&self, s: &[String], dir: &Direction, cfg: &DecodingConfig) -> Result<Vec<String>, TranslateError> {
        (**self).translate_batch(s, dir, cfg)
    }
}

/// Translates `sentences` along `dir`, one output per input, in order.
pub fn translate<T: Translator + ?Sized>(
    t: &T,
    sentences: &[String],
    dir: &Direction,
    cfg: &DecodingConfig,
) -> Result<Vec<String>, TranslateError> {
    if !t.supports(dir) {
        return Err(TranslateError::UnsupportedDirection(dir.to_string()));
    }
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    t.translate_batch(sentences, dir, cfg)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotOutput {
    /// Intermediate text in the pivot language.
    pub pivot: Vec<String>,
    pub output: Vec<String>,
}

/// `src → pivot → tgt`. Both hops are checked before anything runs.
pub fn pivot_translate<T: Translator + ?Sized>(
    t: &T,
    sentences: &[String],
    src: &LangCode,
    tgt: &LangCode,
    pivot: &LangCode,
    cfg: &DecodingConfig,
) -> Result<PivotOutput, TranslateError> {
    let hop = |a: &LangCode, b: &LangCode| {
        Direction::new(a.clone(), b.clone())
            .map_err(|_| TranslateError::UnsupportedDirection(format!("{a}-{b}")))
    };
    let first = hop(src, pivot)?;
    let second = hop(pivot, tgt)?;
    for d in [&first, &second] {
        if !t.supports(d) {
            return Err(TranslateError::UnsupportedDirection(d.to_string()));
        }
    }
    let pivot_text = translate(t, sentences, &first, cfg)?;
    let output = translate(t, &pivot_text, &second, cfg)?;
    Ok(PivotOutput {
        pivot: pivot_text,
        output,
    })
}

/// Applies `f` to each maximal run of non-whitespace, keeping whitespace
/// verbatim. Token count is preserved.
fn map_tokens(text: &str, mut f: impl FnMut(usize, &str) -> String) -> String {
    let mut out = String::with_capacity(text.len() + 8);
    let mut token_start: Option<usize> = None;
    let mut index = 0;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = token_start.take() {
                out.push_str(&f(index, &text[s..i]));
                index += 1;
            }
            out.push(c);
        } else if token_start.is_none() {
            token_start = Some(i);
        }
    }
    if let Some(s) = token_start {
        out.push_str(&f(index, &text[s..]));
    }
    out
}

/// A seeded bijection between English words and cipher words.
#[derive(Debug, Clone)]
pub struct CipherLanguage {
    lang: LangCode,
    seed: u64,
    encode: HashMap<&'static str, &'static str>,
    decode: HashMap<&'static str, &'static str>,
}

impl CipherLanguage {
    pub fn new(lang: LangCode, seed: u64) -> Self {
        let mut image: Vec<&'static str> = BASIC_WORDS.to_vec();
        image.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let encode: HashMap<_, _> = BASIC_WORDS.iter().copied().zip(image.iter().copied()).collect();
        let decode = encode.iter().map(|(&k, &v)| (v, k)).collect();
        CipherLanguage {
            lang,
            seed,
            encode,
            decode,
        }
    }

    /// Cipher for `lang` keyed by a master seed, so one seed fixes a whole
    /// family of languages.
    pub fn derive(lang: LangCode, master_seed: u64) -> Self {
        let seed = mix(master_seed ^ fnv1a(lang.as_str().as_bytes()));
        CipherLanguage::new(lang, seed)
    }

    pub fn lang(&self) -> &LangCode {
        &self.lang
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn encode_word(&self, word: &str) -> String {
        match self.encode.get(word) {
            Some(w) => w.to_string(),
            None => format!("{OOV_MARK}{word}"),
        }
    }

    pub fn decode_word(&self, word: &str) -> String {
        if let Some(w) = self.decode.get(word) {
            return w.to_string();
        }
        match word.strip_prefix(OOV_MARK) {
            Some(rest) => rest.to_string(),
            None => word.to_string(),
        }
    }

    pub fn encode(&self, english: &str) -> String {
        map_tokens(english, |_, w| self.encode_word(w))
    }

    pub fn decode(&self, text: &str) -> String {
        map_tokens(text, |_, w| self.decode_word(w))
    }
}

/// Translates among English and a set of cipher languages.
#[derive(Debug, Clone)]
pub struct CipherTranslator {
    ciphers: BTreeMap<LangCode, CipherLanguage>,
}

impl CipherTranslator {
    pub fn languages(&self) -> impl Iterator<Item = &LangCode> {
        self.ciphers.keys()
    }

    /// Every ordered pair among English and the cipher languages.
    pub fn supported_directions(&self) -> BTreeSet<Direction> {
        let mut langs: Vec<LangCode> = self.ciphers.keys().cloned().collect();
        langs.push(LangCode::english());
        let mut dirs = BTreeSet::new();
        for a in &langs {
            for b in &langs {
                if let Ok(d) = Direction::new(a.clone(), b.clone()) {
                    dirs.insert(d);
                }
            }
        }
        dirs
    }

    fn knows(&self, lang: &LangCode) -> bool {
        *lang == LangCode::english() || self.ciphers.contains_key(lang)
    }

    pub fn to_english(&self, lang: &LangCode, text: &str) -> String {
        match self.ciphers.get(lang) {
            Some(c) => c.decode(text),
            None => text.to_string(),
        }
    }

    pub fn from_english(&self, lang: &LangCode, text: &str) -> String {
        match self.ciphers.get(lang) {
            Some(c) => c.encode(text),
            None => text.to_string(),
        }
    }
}

impl Translator for CipherTranslator {
    fn supports(&self, dir: &Direction) -> bool {
        self.knows(dir.src()) && self.knows(dir.tgt())
    }

    fn translate_batch(&self, sentences: &[String], dir: &Direction, _cfg: &DecodingConfig) -> Result<Vec<String>, TranslateError> {
        Ok(sentences
            .iter()
            .map(|s| self.from_english(dir.tgt(), &self.to_english(dir.src(), s)))
            .collect())
    }
}

pub fn make_cipher_translator(languages: Vec<CipherLanguage>) -> Result<CipherTranslator, TranslateError> {
    let mut ciphers = BTreeMap::new();
    for c in languages {
        if c.lang == LangCode::english() || ciphers.contains_key(&c.lang) {
            return Err(TranslateError::DuplicateLanguage(c.lang));
        }
        ciphers.insert(c.lang.clone(), c);
    }
    Ok(CipherTranslator { ciphers })
}

/// Wraps a translator and corrupts each output token with probability
/// `rate`. Whether a token is hit depends only on the seed, the direction and
/// its (sentence, token) position.
#[derive(Debug, Clone)]
pub struct NoisyTranslator<T> {
    inner: T,
    rate: f64,
    seed: u64,
    only: Option<BTreeSet<Direction>>,
}

pub fn with_noise<T: Translator>(inner: T, rate: f64, seed: u64) -> Result<NoisyTranslator<T>, TranslateError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(TranslateError::InvalidNoiseRate(rate));
    }
    Ok(NoisyTranslator {
        inner,
        rate,
        seed,
        only: None,
    })
}

impl<T> NoisyTranslator<T> {
    /// Restricts corruption to `dirs`; other directions pass through clean.
    pub fn only_directions(mut self, dirs: impl IntoIterator<Item = Direction>) -> Self {
        self.only = Some(dirs.into_iter().collect());
        self
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }

    fn corrupts(&self, dir_key: u64, sentence: usize, token: usize) -> bool {
        let h = mix(mix(mix(self.seed ^ dir_key) ^ sentence as u64) ^ token as u64);
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        u < self.rate
    }
}

impl<T: Translator> Translator for NoisyTranslator<T> {
    fn supports(&self, dir: &Direction) -> bool {
        self.inner.supports(dir)
    }

    fn translate_batch(&self, sentences: &[String], dir: &Direction, cfg: &DecodingConfig) -> Result<Vec<String>, TranslateError> {
        let clean = self.inner.translate_batch(sentences, dir, cfg)?;
        let applies = self.only.as_ref().is_none_or(|set| set.contains(dir));
        if !applies || self.rate == 0.0 {
            return Ok(clean);
        }
        let dir_key = fnv1a(dir.to_string().as_bytes());
        Ok(clean
            .iter()
            .enumerate()
            .map(|(si, s)| {
                map_tokens(s, |ti, w| {
                    if self.corrupts(dir_key, si, ti) {
                        CORRUPTION_MARKER.to_string()
                    } else {
                        w.to_string()
                    }
                })
            })
            .collect())
    }
}

/// Runs an external program per batch: `program args... SRC TGT`, one
/// sentence per stdin line, one translation per stdout line.
#[derive(Debug, Clone)]
pub struct ExecTranslator {
    program: String,
    args: Vec<String>,
}

impl ExecTranslator {
    /// Splits `command` on whitespace into program and leading arguments.
    pub fn new(command: &str) -> Result<Self, TranslateError> {
        let mut parts = command.split_whitespace().map(String::from);
        let program = parts.next().ok_or_else(|| TranslateError::Exec {
            command: command.to_string(),
            reason: "empty command".to_string(),
        })?;
        Ok(ExecTranslator {
            program,
            args: parts.collect(),
        })
    }

    fn command_line(&self) -> String {
        std::iter::once(self.program.as_str())
            .chain(self.args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Translator for ExecTranslator {
    fn supports(&self, _dir: &Direction) -> bool {
        true
    }

    fn translate_batch(&self, sentences: &[String], dir: &Direction, cfg: &DecodingConfig) -> Result<Vec<String>, TranslateError> {
        if let Some(i) = sentences.iter().position(|s| s.contains('\n')) {
            return Err(TranslateError::MultilineSentence(i));
        }
        let fail = |reason: String| TranslateError::Exec {
            command: self.command_line(),
            reason,
        };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(dir.src().as_str())
            .arg(dir.tgt().as_str())
            .env("MTFORGE_BEAM_SIZE", cfg.beam_size.to_string())
            .env("MTFORGE_LENGTH_PENALTY", cfg.length_penalty.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(e.to_string()))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let input: String = sentences.iter().map(|s| format!("{s}\n")).collect();
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));

        let stdout = child.stdout.take().expect("piped stdout");
        let mut output = Vec::with_capacity(sentences.len());
        for line in BufReader::new(stdout).lines() {
            output.push(line.map_err(|e| fail(e.to_string()))?);
        }
        writer
            .join()
            .map_err(|_| fail("stdin writer panicked".to_string()))?
            .map_err(|e| fail(format!("writing input: {e}")))?;
        let status = child.wait().map_err(|e| fail(e.to_string()))?;
        if !status.success() {
            return Err(fail(format!("exited with {status}")));
        }
        if output.len() != sentences.len() {
            return Err(fail(format!(
                "expected {} output lines, got {}",
                sentences.len(),
                output.len()
            )));
        }
        Ok(output)
    }
}

pub(crate) fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
