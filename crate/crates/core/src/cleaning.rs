//! Sentence-pair filtering, truncation and language tagging.
//!
//! Checks run in a fixed order and the first failure is the reported reason:
//! empty side, language-id mismatch, word cap, unknown-token marker, script
//! rule, then the source/target length ratio. Pairs that survive are cut to
//! the token cap on each side.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{CorpusError, CorpusManifest, LangCode, PairReader, SentencePair, ShardEntry};
use crate::tokenizer::Tokenize;

/// Length-ratio limits used to build progressively cleaner corpora.
pub const RATIO_LADDER: [f64; 4] = [1.5, 2.0, 2.5, 3.0];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CleaningError {
    #[error("source is already tagged: {0:?}")]
    AlreadyTagged(String),
    #[error("unknown script {0:?}")]
    UnknownScript(String),
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
}

/// Writing systems the script filter can require.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Script {
    Latin,
    Cyrillic,
    Greek,
    Arabic,
    Hebrew,
    Devanagari,
    Tamil,
    Han,
}

impl Script {
    pub fn contains(self, c: char) -> bool {
        let u = c as u32;
        match self {
            Script::Latin => {
                c.is_ascii_alphabetic()
                    || matches!(u, 0x00AA | 0x00BA | 0x00C0..=0x00D6 | 0x00D8..=0x00F6 | 0x00F8..=0x024F)
                    || matches!(u, 0x1E00..=0x1EFF | 0x2C60..=0x2C7F | 0xA720..=0xA7FF | 0xFF21..=0xFF3A | 0xFF41..=0xFF5A)
            }
            Script::Cyrillic => matches!(u, 0x0400..=0x052F | 0x1C80..=0x1C8F | 0x2DE0..=0x2DFF | 0xA640..=0xA69F),
            Script::Greek => matches!(u, 0x0370..=0x03FF | 0x1F00..=0x1FFF),
            Script::Arabic => matches!(u, 0x0600..=0x06FF | 0x0750..=0x077F | 0x08A0..=0x08FF | 0xFB50..=0xFDFF | 0xFE70..=0xFEFF),
            Script::Hebrew => matches!(u, 0x0590..=0x05FF | 0xFB1D..=0xFB4F),
            Script::Devanagari => matches!(u, 0x0900..=0x097F | 0xA8E0..=0xA8FF),
            Script::Tamil => matches!(u, 0x0B80..=0x0BFF | 0x11FC0..=0x11FFF),
            Script::Han => matches!(u, 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F),
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Script::Latin => "Latn",
            Script::Cyrillic => "Cyrl",
            Script::Greek => "Grek",
            Script::Arabic => "Arab",
            Script::Hebrew => "Hebr",
            Script::Devanagari => "Deva",
            Script::Tamil => "Taml",
            Script::Han => "Hani",
        }
    }
}

/// Parses ISO 15924 codes (`Cyrl`) or English names (`cyrillic`).
impl FromStr for Script {
    type Err = CleaningError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let script = match s.to_ascii_lowercase().as_str() {
            "latn" | "latin" => Script::Latin,
            "cyrl" | "cyrillic" => Script::Cyrillic,
            "grek" | "greek" => Script::Greek,
            "arab" | "arabic" => Script::Arabic,
            "hebr" | "hebrew" => Script::Hebrew,
            "deva" | "devanagari" => Script::Devanagari,
            "taml" | "tamil" => Script::Tamil,
            "hani" | "han" => Script::Han,
            _ => return Err(CleaningError::UnknownScript(s.to_string())),
        };
        Ok(script)
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Whitespace words per side.
    pub max_words: usize,
    /// Subword tokens per side after truncation.
    pub max_tokens: usize,
    pub length_ratio_limit: f64,
    pub unk_token: String,
    pub script_rules: BTreeMap<LangCode, Script>,
    /// Reject pairs that arrive without a language-id verdict.
    pub langid_required: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_words: 1024,
            max_tokens: 512,
            length_ratio_limit: 3.0,
            unk_token: "[UNK]".to_string(),
            script_rules: BTreeMap::new(),
            langid_required: false,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), CleaningError> {
        if !self.length_ratio_limit.is_finite() || self.length_ratio_limit <= 1.0 {
            return Err(CleaningError::InvalidConfig(format!(
                "length ratio limit must be a finite value above 1, got {}",
                self.length_ratio_limit
            )));
        }
        if self.max_tokens == 0 || self.max_words == 0 {
            return Err(CleaningError::InvalidConfig(
                "max_words and max_tokens must be at least 1".to_string(),
            ));
        }
        if self.unk_token.is_empty() {
            return Err(CleaningError::InvalidConfig("empty unknown-token marker".to_string()));
        }
        Ok(())
    }

    pub fn with_ratio(mut self, limit: f64) -> Self {
        self.length_ratio_limit = limit;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    Empty,
    BadLangId,
    TooLong,
    ContainsUnk,
    WrongScript,
    RatioExceeded,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Empty => "Empty",
            RejectReason::BadLangId => "BadLangId",
            RejectReason::TooLong => "TooLong",
            RejectReason::ContainsUnk => "ContainsUnk",
            RejectReason::WrongScript => "WrongScript",
            RejectReason::RatioExceeded => "RatioExceeded",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterVerdict {
    /// The pair after truncation.
    Kept(SentencePair),
    Rejected(RejectReason),
}

impl FilterVerdict {
    pub fn is_kept(&self) -> bool {
        matches!(self, FilterVerdict::Kept(_))
    }

    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            FilterVerdict::Kept(_) => None,
            FilterVerdict::Rejected(r) => Some(*r),
        }
    }

    pub fn kept(self) -> Option<SentencePair> {
        match self {
            FilterVerdict::Kept(p) => Some(p),
            FilterVerdict::Rejected(_) => None,
        }
    }
}

/// Detected `(source, target)` languages from an external language-id model.
pub type LangIdVerdict<'a> = (&'a LangCode, &'a LangCode);

pub fn apply_filters<T: Tokenize>(
    pair: &SentencePair,
    cfg: &FilterConfig,
    tokenizer: &T,
    langid: Option<LangIdVerdict<'_>>,
) -> FilterVerdict {
    use FilterVerdict::Rejected;

    if pair.is_blank() {
        return Rejected(RejectReason::Empty);
    }
    match langid {
        Some((src, tgt)) if src != pair.direction.src() || tgt != pair.direction.tgt() => {
            return Rejected(RejectReason::BadLangId);
        }
        None if cfg.langid_required => return Rejected(RejectReason::BadLangId),
        _ => {}
    }
    let too_long = |s: &str| s.split_whitespace().count() > cfg.max_words;
    if too_long(&pair.source) || too_long(&pair.target) {
        return Rejected(RejectReason::TooLong);
    }
    let has_unk = |s: &str| s.split_whitespace().any(|w| w == cfg.unk_token);
    if has_unk(&pair.source) || has_unk(&pair.target) {
        return Rejected(RejectReason::ContainsUnk);
    }
    let sides = [
        (pair.direction.src(), &pair.source),
        (pair.direction.tgt(), &pair.target),
    ];
    for (lang, text) in sides {
        if let Some(&script) = cfg.script_rules.get(lang) {
            if !mostly_in_script(text, script) {
                return Rejected(RejectReason::WrongScript);
            }
        }
    }
    let src_tokens = tokenizer.tokenize(&pair.source);
    let tgt_tokens = tokenizer.tokenize(&pair.target);
    if length_ratio(src_tokens.len(), tgt_tokens.len()) > cfg.length_ratio_limit {
        return Rejected(RejectReason::RatioExceeded);
    }

    let mut kept = pair.clone();
    if src_tokens.len() > cfg.max_tokens {
        kept.source = tokenizer.detokenize(&src_tokens[..cfg.max_tokens]);
    }
    if tgt_tokens.len() > cfg.max_tokens {
        kept.target = tokenizer.detokenize(&tgt_tokens[..cfg.max_tokens]);
    }
    FilterVerdict::Kept(kept)
}

/// `max / min` of two lengths. Infinite when exactly one side is zero.
pub fn length_ratio(a: usize, b: usize) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi == 0 {
        1.0
    } else {
        hi as f64 / lo as f64
    }
}

/// True unless more than half of the alphabetic characters fall outside
/// `script`. Text without letters passes.
pub fn mostly_in_script(text: &str, script: Script) -> bool {
    let (letters, outside) = text
        .chars()
        .filter(|c| c.is_alphabetic())
        .fold((0usize, 0usize), |(n, out), c| (n + 1, out + usize::from(!script.contains(c))));
    outside * 2 <= letters
}

/// `__xx__`, the tag for target language `xx`.
pub fn language_tag(lang: &LangCode) -> String {
    format!("__{lang}__")
}

fn leading_tag(text: &str) -> Option<&str> {
    let rest = text.strip_prefix("__")?;
    let end = rest.find("__")?;
    let code = &rest[..end];
    LangCode::new(code).ok()?;
    let after = &rest[end + 2..];
    (after.is_empty() || after.starts_with(' ')).then_some(code)
}

/// Prefixes the source with the target-language tag.
pub fn prefix_language_tag(pair: &SentencePair) -> Result<SentencePair, CleaningError> {
    if leading_tag(&pair.source).is_some() {
        return Err(CleaningError::AlreadyTagged(pair.source.clone()));
    }
    let mut tagged = pair.clone();
    tagged.source = format!("{} {}", language_tag(pair.direction.tgt()), pair.source);
    Ok(tagged)
}

/// Keeps at most `max_tokens` leading tokens. Text already within the limit
/// comes back unchanged.
pub fn truncate_tokens<T: Tokenize>(text: &str, tokenizer: &T, max_tokens: usize) -> String {
    let tokens = tokenizer.tokenize(text);
    if tokens.len() <= max_tokens {
        text.to_string()
    } else {
        tokenizer.detokenize(&tokens[..max_tokens])
    }
}

#[derive(Debug, Error)]
pub enum FilterRunError {
    #[error("{0}")]
    Cleaning(#[from] CleaningError),
    #[error("{0}")]
    Corpus(#[from] CorpusError),
    #[error("{path}:{line}: expected `src<TAB>tgt` language codes")]
    MalformedLangId { path: PathBuf, line: u64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn run_io(path: &Path, source: io::Error) -> FilterRunError {
    FilterRunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Settings for filtering a whole manifest.
#[derive(Debug, Clone)]
pub struct FilterJob {
    pub config: FilterConfig,
    /// Prefix kept sources with the target-language tag.
    pub tag: bool,
    /// Where rejected pairs go, as `line<TAB>reason<TAB>source<TAB>target`.
    pub rejects_dir: Option<PathBuf>,
}

/// Kept and rejected counts per shard, in manifest order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub shards: Vec<(String, u64, BTreeMap<RejectReason, u64>)>,
}

impl FilterReport {
    pub fn kept(&self) -> u64 {
        self.shards.iter().map(|s| s.1).sum()
    }

    pub fn rejected(&self, reason: RejectReason) -> u64 {
        self.shards.iter().map(|s| s.2.get(&reason).copied().unwrap_or(0)).sum()
    }

    pub fn total_rejected(&self) -> u64 {
        self.shards.iter().flat_map(|s| s.2.values()).sum()
    }

    /// `shard kept Empty BadLangId TooLong ContainsUnk WrongScript RatioExceeded`.
    pub fn to_tsv(&self) -> String {
        const ALL: [RejectReason; 6] = [
            RejectReason::Empty,
            RejectReason::BadLangId,
            RejectReason::TooLong,
            RejectReason::ContainsUnk,
            RejectReason::WrongScript,
            RejectReason::RatioExceeded,
        ];
        let mut out = String::from("# shard\tkept");
        for r in ALL {
            out.push('\t');
            out.push_str(r.as_str());
        }
        out.push('\n');
        for (id, kept, rejected) in &self.shards {
            out.push_str(&format!("{id}\t{kept}"));
            for r in ALL {
                out.push_str(&format!("\t{}", rejected.get(&r).copied().unwrap_or(0)));
            }
            out.push('\n');
        }
        out
    }
}

/// Language-id verdicts for a shard live next to it in `<shard>.langid`,
/// one `src<TAB>tgt` line per pair.
fn read_langid(shard: &Path) -> Result<Option<Vec<(LangCode, LangCode)>>, FilterRunError> {
    let mut name = shard.as_os_str().to_owned();
    name.push(".langid");
    let path = PathBuf::from(name);
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(run_io(&path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| run_io(&path, e))?;
        let bad = || FilterRunError::MalformedLangId {
            path: path.clone(),
            line: i as u64 + 1,
        };
        let (a, b) = line.trim_end().split_once('\t').ok_or_else(bad)?;
        out.push((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
    }
    Ok(Some(out))
}

/// Filters every shard of `manifest` into `out_dir`, one output shard per
/// input under the same file name, plus a `manifest.tsv` for the survivors.
/// Shards stream through one pair at a time.
pub fn filter_manifest<T: Tokenize>(
    manifest: &CorpusManifest,
    job: &FilterJob,
    tokenizer: &T,
    out_dir: &Path,
) -> Result<(CorpusManifest, FilterReport), FilterRunError> {
    job.config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| run_io(out_dir, e))?;
    if let Some(dir) = &job.rejects_dir {
        fs::create_dir_all(dir).map_err(|e| run_io(dir, e))?;
    }
    let mut out_manifest = CorpusManifest::new(out_dir);
    let mut report = FilterReport::default();
    for entry in manifest.shards() {
        let input = manifest.resolve(entry);
        let name = PathBuf::from(input.file_name().unwrap_or(input.as_os_str()));
        let langid = read_langid(&input)?;

        let out_path = out_dir.join(&name);
        let mut kept_w = BufWriter::new(File::create(&out_path).map_err(|e| run_io(&out_path, e))?);
        let mut rej_w = match &job.rejects_dir {
            Some(dir) => {
                let p = dir.join(&name);
                Some((BufWriter::new(File::create(&p).map_err(|e| run_io(&p, e))?), p))
            }
            None => None,
        };

        let mut kept = 0u64;
        let mut rejected = BTreeMap::new();
        for pair in PairReader::open(manifest, entry)? {
            let pair = pair?;
            let verdict_langs = langid
                .as_ref()
                .and_then(|v| v.get(pair.line_no as usize - 1))
                .map(|(a, b)| (a, b));
            match apply_filters(&pair, &job.config, tokenizer, verdict_langs) {
                FilterVerdict::Kept(p) => {
                    let p = if job.tag { prefix_language_tag(&p)? } else { p };
                    writeln!(kept_w, "{}\t{}", p.source, p.target).map_err(|e| run_io(&out_path, e))?;
                    kept += 1;
                }
                FilterVerdict::Rejected(reason) => {
                    *rejected.entry(reason).or_insert(0) += 1;
                    if let Some((w, p)) = rej_w.as_mut() {
                        writeln!(w, "{}\t{reason}\t{}\t{}", pair.line_no, pair.source, pair.target)
                            .map_err(|e| run_io(p, e))?;
                    }
                }
            }
        }
        kept_w.flush().map_err(|e| run_io(&out_path, e))?;
        if let Some((mut w, p)) = rej_w {
            w.flush().map_err(|e| run_io(&p, e))?;
        }
        out_manifest.push(ShardEntry {
            path: name,
            direction: entry.direction.clone(),
            origin: entry.origin,
            declared_line_count: kept,
        })?;
        report.shards.push((entry.id(), kept, rejected));
    }
    out_manifest.save(&out_dir.join("manifest.tsv"))?;
    Ok((out_manifest, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::OriginPool;
    use crate::tokenizer::SubwordTokenizer;

    fn pair(src: &str, tgt: &str, dir: &str) -> SentencePair {
        SentencePair::detached(src, tgt, dir.parse().unwrap(), OriginPool::Bitext)
    }

    fn words(n: usize) -> String {
        vec!["a"; n].join(" ")
    }

    fn check(p: &SentencePair, cfg: &FilterConfig) -> FilterVerdict {
        apply_filters(p, cfg, &SubwordTokenizer::builtin(), None)
    }

    #[test]
    fn rejects_long_sentences() {
        let cfg = FilterConfig::default().with_ratio(1000.0);
        let p = pair(&words(1025), "a", "hr-en");
        assert_eq!(check(&p, &cfg).reason(), Some(RejectReason::TooLong));
        let p = pair(&words(1024), &words(1024), "hr-en");
        assert!(check(&p, &cfg).is_kept());
    }

    #[test]
    fn rejects_latin_serbian() {
        // Unseen words split into characters, so keep the ratio out of the way.
        let mut cfg = FilterConfig::default().with_ratio(100.0);
        cfg.script_rules.insert("sr".parse().unwrap(), Script::Cyrillic);
        let p = pair("dobar dan", "good day", "sr-en");
        assert_eq!(check(&p, &cfg).reason(), Some(RejectReason::WrongScript));
        let p = pair("добар дан", "good day", "sr-en");
        assert!(check(&p, &cfg).is_kept());
        // A Latin named entity inside Cyrillic text stays.
        let p = pair("добар дан Paris", "good day", "sr-en");
        assert!(check(&p, &cfg).is_kept());
    }

    #[test]
    fn rejects_unknown_token() {
        let p = pair("the cat", "the [UNK] sat", "hr-en");
        assert_eq!(check(&p, &FilterConfig::default()).reason(), Some(RejectReason::ContainsUnk));
        let p = pair("the cat", "the x[UNK]y sat", "hr-en");
        assert!(check(&p, &FilterConfig::default().with_ratio(100.0)).is_kept());
    }

    #[test]
    fn ratio_rule() {
        let p = pair(&words(10), &words(31), "hr-en");
        let tok = SubwordTokenizer::builtin();
        assert_eq!(tok.tokenize(&p.source).len(), 10);
        assert_eq!(tok.tokenize(&p.target).len(), 31);
        assert_eq!(check(&p, &FilterConfig::default()).reason(), Some(RejectReason::RatioExceeded));
        let p = pair(&words(10), &words(30), "hr-en");
        assert!(check(&p, &FilterConfig::default()).is_kept());
    }

    #[test]
    fn identical_pair_kept_unchanged() {
        let p = pair("the cat sat on the", "the cat sat on the", "hr-en");
        for limit in RATIO_LADDER {
            assert_eq!(check(&p, &FilterConfig::default().with_ratio(limit)), FilterVerdict::Kept(p.clone()));
        }
    }

    #[test]
    fn check_order_is_fixed() {
        // Blank beats everything else.
        let p = pair("  ", &format!("{} [UNK]", words(2000)), "hr-en");
        assert_eq!(check(&p, &FilterConfig::default()).reason(), Some(RejectReason::Empty));
        // Word cap beats unknown token.
        let p = pair(&format!("{} [UNK]", words(1100)), "a", "hr-en");
        assert_eq!(check(&p, &FilterConfig::default()).reason(), Some(RejectReason::TooLong));
    }

    #[test]
    fn langid_verdicts() {
        let hr: LangCode = "hr".parse().unwrap();
        let en = LangCode::english();
        let tok = SubwordTokenizer::builtin();
        let p = pair("dobar dan", "good day", "hr-en");
        let cfg = FilterConfig::default().with_ratio(100.0);
        assert!(apply_filters(&p, &cfg, &tok, Some((&hr, &en))).is_kept());
        assert_eq!(
            apply_filters(&p, &cfg, &tok, Some((&en, &en))).reason(),
            Some(RejectReason::BadLangId)
        );
        let strict = FilterConfig { langid_required: true, ..FilterConfig::default() };
        assert_eq!(apply_filters(&p, &strict, &tok, None).reason(), Some(RejectReason::BadLangId));
    }

    #[test]
    fn kept_pairs_are_truncated() {
        let cfg = FilterConfig { max_tokens: 4, ..FilterConfig::default() };
        let p = pair(&words(6), &words(5), "hr-en");
        let kept = check(&p, &cfg).kept().unwrap();
        assert_eq!(kept.source, "a a a a");
        assert_eq!(kept.target, "a a a a");
    }

    #[test]
    fn tags_encode_target_language() {
        let p = pair("dobar dan", "good day", "hr-en");
        let tagged = prefix_language_tag(&p).unwrap();
        assert_eq!(tagged.source, "__en__ dobar dan");
        assert_eq!(tagged.target, "good day");
        assert!(matches!(prefix_language_tag(&tagged), Err(CleaningError::AlreadyTagged(_))));
        let p = pair("hello", "vanakkam", "en-ta");
        assert!(prefix_language_tag(&p).unwrap().source.starts_with("__ta__ "));
        // Underscored words that are not tags are left alone.
        let p = pair("__x__ is special", "x", "en-hr");
        assert!(prefix_language_tag(&p).is_ok());
    }

    #[test]
    fn truncation() {
        let tok = SubwordTokenizer::builtin();
        assert_eq!(truncate_tokens("the cat sat", &tok, 512), "the cat sat");
        let long = words(600);
        let cut = truncate_tokens(&long, &tok, 512);
        assert_eq!(tok.tokenize(&cut).len(), 512);
        assert!(long.starts_with(&cut));
        assert_eq!(truncate_tokens("the cat sat", &tok, 1), "the");
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::default().validate().is_ok());
        assert!(FilterConfig::default().with_ratio(1.0).validate().is_err());
        assert!(FilterConfig::default().with_ratio(f64::NAN).validate().is_err());
    }

    #[test]
    fn script_parsing() {
        assert_eq!("Cyrl".parse::<Script>().unwrap(), Script::Cyrillic);
        assert_eq!("latin".parse::<Script>().unwrap(), Script::Latin);
        assert!("Klingon".parse::<Script>().is_err());
    }

    #[test]
    fn manifest_filtering_streams_shards() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(
            tmp.path().join("hr-en.tsv"),
            "the cat\tthe cat\n\tthe dog\n[UNK] x\ty\nthe dog\ta dog\n",
        )
        .unwrap();
        fs::write(tmp.path().join("hr-en.tsv.langid"), "hr\ten\nhr\ten\nhr\ten\nen\ten\n").unwrap();
        let manifest = CorpusManifest::parse("hr-en.tsv\thr\ten\tbitext\t4\n", tmp.path()).unwrap();
        let job = FilterJob {
            config: FilterConfig::default(),
            tag: true,
            rejects_dir: Some(tmp.path().join("rej")),
        };
        let out = tmp.path().join("out");
        let (kept, report) = filter_manifest(&manifest, &job, &SubwordTokenizer::builtin(), &out).unwrap();
        assert_eq!(report.kept(), 1);
        assert_eq!(report.rejected(RejectReason::Empty), 1);
        assert_eq!(report.rejected(RejectReason::ContainsUnk), 1);
        assert_eq!(report.rejected(RejectReason::BadLangId), 1);
        assert_eq!(kept.shards()[0].declared_line_count, 1);
        assert_eq!(fs::read_to_string(out.join("hr-en.tsv")).unwrap(), "__en__ the cat\tthe cat\n");
        let rejects = fs::read_to_string(tmp.path().join("rej/hr-en.tsv")).unwrap();
        assert!(rejects.starts_with("2\tEmpty\t\tthe dog\n"));
        assert!(out.join("manifest.tsv").exists());
    }
}
