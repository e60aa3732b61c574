//! Domain types, manifest ingestion, streaming pair readers and corpus statistics.
//!
//! A corpus is described by a manifest: one record per shard,
//! `path<TAB>src<TAB>tgt<TAB>origin<TAB>count`, with `#` comments. Shards
//! hold one `source<TAB>target` pair per line. Relative shard paths resolve
//! against the directory that holds the manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid language code {0:?}: expected 2-8 lowercase ASCII letters")]
    InvalidLangCode(String),
    #[error("invalid direction {0:?}")]
    InvalidDirection(String),
    #[error("source and target language are both {0}")]
    SameLanguage(LangCode),
    #[error("unknown origin pool {0:?}")]
    UnknownOrigin(String),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("malformed manifest at line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("shard path {} listed twice", .0.display())]
    DuplicateShardPath(PathBuf),
    #[error("no shard {0:?} in manifest")]
    UnknownShard(String),
    #[error("{shard}: line {line_no} does not have exactly one tab separator")]
    MalformedLine { shard: String, line_no: u64 },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Short language identifier such as `en`, `hr` or `sr`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LangCode(String);

impl LangCode {
    pub fn new(code: &str) -> Result<Self, CorpusError> {
        let valid = (2..=8).contains(&code.len()) && code.bytes().all(|b| b.is_ascii_lowercase());
        if valid {
            Ok(LangCode(code.to_string()))
        } else {
            Err(CorpusError::InvalidLangCode(code.to_string()))
        }
    }

    pub fn english() -> Self {
        LangCode("en".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for LangCode {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LangCode::new(s)
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An ordered translation direction `src → tgt` with `src ≠ tgt`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Direction {
    src: LangCode,
    tgt: LangCode,
}

impl Direction {
    pub fn new(src: LangCode, tgt: LangCode) -> Result<Self, CorpusError> {
        if src == tgt {
            return Err(CorpusError::SameLanguage(src));
        }
        Ok(Direction { src, tgt })
    }

    pub fn src(&self) -> &LangCode {
        &self.src
    }

    pub fn tgt(&self) -> &LangCode {
        &self.tgt
    }

    pub fn reversed(&self) -> Direction {
        Direction {
            src: self.tgt.clone(),
            tgt: self.src.clone(),
        }
    }

    pub fn touches(&self, lang: &LangCode) -> bool {
        &self.src == lang || &self.tgt == lang
    }
}

/// Accepts `hr-en`, `hr->en` and `hr→en`.
impl FromStr for Direction {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (src, tgt) = ["→", "->", "-"]
            .iter()
            .find_map(|sep| s.split_once(sep))
            .ok_or_else(|| CorpusError::InvalidDirection(s.to_string()))?;
        Direction::new(src.trim().parse()?, tgt.trim().parse()?)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

/// Which of the three training pools a pair belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OriginPool {
    Bitext,
    BackTranslation,
    DualPseudo,
}

impl OriginPool {
    pub const ALL: [OriginPool; 3] = [
        OriginPool::Bitext,
        OriginPool::BackTranslation,
        OriginPool::DualPseudo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OriginPool::Bitext => "bitext",
            OriginPool::BackTranslation => "bt",
            OriginPool::DualPseudo => "dual",
        }
    }

    pub fn index(self) -> usize {
        match self {
            OriginPool::Bitext => 0,
            OriginPool::BackTranslation => 1,
            OriginPool::DualPseudo => 2,
        }
    }
}

impl FromStr for OriginPool {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bitext" => Ok(OriginPool::Bitext),
            "bt" | "back-translation" => Ok(OriginPool::BackTranslation),
            "dual" | "dual-pseudo" => Ok(OriginPool::DualPseudo),
            _ => Err(CorpusError::UnknownOrigin(s.to_string())),
        }
    }
}

impl fmt::Display for OriginPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One aligned sentence pair together with where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source: String,
    pub target: String,
    pub direction: Direction,
    pub origin: OriginPool,
    pub shard_id: String,
    pub line_no: u64,
}

impl SentencePair {
    /// A pair that does not come from any shard, mostly useful in tests and
    /// for in-memory pipelines.
    pub fn detached(source: &str, target: &str, direction: Direction, origin: OriginPool) -> Self {
        SentencePair {
            source: source.to_string(),
            target: target.to_string(),
            direction,
            origin,
            shard_id: String::new(),
            line_no: 1,
        }
    }

    pub fn is_blank(&self) -> bool {
        self.source.trim().is_empty() || self.target.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardEntry {
    /// Path as written in the manifest; doubles as the shard id.
    pub path: PathBuf,
    pub direction: Direction,
    pub origin: OriginPool,
    /// Advisory; see [`verify_counts`].
    pub declared_line_count: u64,
}

impl ShardEntry {
    pub fn id(&self) -> String {
        self.path.display().to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusManifest {
    base_dir: PathBuf,
    shards: Vec<ShardEntry>,
}

impl CorpusManifest {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        CorpusManifest {
            base_dir: base_dir.into(),
            shards: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: ShardEntry) -> Result<(), CorpusError> {
        if self.shards.iter().any(|s| s.path == entry.path) {
            return Err(CorpusError::DuplicateShardPath(entry.path));
        }
        self.shards.push(entry);
        Ok(())
    }

    pub fn shards(&self) -> &[ShardEntry] {
        &self.shards
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn is_empty(&self) -> bool {
        self.shards.is_empty()
    }

    pub fn shard(&self, shard_id: &str) -> Option<&ShardEntry> {
        self.shards.iter().find(|s| s.id() == shard_id)
    }

    /// Filesystem location of a shard.
    pub fn resolve(&self, entry: &ShardEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let mut manifest = CorpusManifest::new(base_dir);
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let malformed = |reason: String| CorpusError::MalformedManifest {
                line: line_no,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(malformed(format!(
                    "expected 5 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            let src: LangCode = fields[1].parse().map_err(|e: CorpusError| malformed(e.to_string()))?;
            let tgt: LangCode = fields[2].parse().map_err(|e: CorpusError| malformed(e.to_string()))?;
            let direction = Direction::new(src, tgt).map_err(|e| malformed(e.to_string()))?;
            let origin = fields[3].parse().map_err(|e: CorpusError| malformed(e.to_string()))?;
            let declared_line_count = fields[4]
                .parse()
                .map_err(|_| malformed(format!("bad line count {:?}", fields[4])))?;
            if fields[0].is_empty() {
                return Err(malformed("empty shard path".to_string()));
            }
            manifest.push(ShardEntry {
                path: PathBuf::from(fields[0]),
                direction,
                origin,
                declared_line_count,
            })?;
        }
        Ok(manifest)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# path\tsrc\ttgt\torigin\tcount\n");
        for s in &self.shards {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                s.path.display(),
                s.direction.src(),
                s.direction.tgt(),
                s.origin,
                s.declared_line_count
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_tsv()).map_err(|e| CorpusError::io(path, e))
    }
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest, CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    CorpusManifest::parse(&text, base)
}

/// Streaming reader over one shard. Holds a single line buffer, so memory
/// does not grow with the shard.
pub struct PairReader {
    reader: BufReader<File>,
    path: PathBuf,
    shard_id: String,
    direction: Direction,
    origin: OriginPool,
    line_no: u64,
    buf: String,
    done: bool,
}

impl PairReader {
    pub fn open(manifest: &CorpusManifest, entry: &ShardEntry) -> Result<Self, CorpusError> {
        let path = manifest.resolve(entry);
        let file = File::open(&path).map_err(|e| CorpusError::io(&path, e))?;
        Ok(PairReader {
            reader: BufReader::new(file),
            path,
            shard_id: entry.id(),
            direction: entry.direction.clone(),
            origin: entry.origin,
            line_no: 0,
            buf: String::new(),
            done: false,
        })
    }
}

impl Iterator for PairReader {
    type Item = Result<SentencePair, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        self.buf.clear();
        match self.reader.read_line(&mut self.buf) {
            Ok(0) => {
                self.done = true;
                None
            }
            Ok(_) => {
                self.line_no += 1;
                let line = strip_newline(&self.buf);
                let mut parts = line.split('\t');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(source), Some(target), None) => Some(Ok(SentencePair {
                        source: source.to_string(),
                        target: target.to_string(),
                        direction: self.direction.clone(),
                        origin: self.origin,
                        shard_id: self.shard_id.clone(),
                        line_no: self.line_no,
                    })),
                    _ => {
                        self.done = true;
                        Some(Err(CorpusError::MalformedLine {
                            shard: self.shard_id.clone(),
                            line_no: self.line_no,
                        }))
                    }
                }
            }
            Err(e) => {
                self.done = true;
                Some(Err(CorpusError::io(&self.path, e)))
            }
        }
    }
}

pub(crate) fn strip_newline(line: &str) -> &str {
    let line = line.strip_suffix('\n').unwrap_or(line);
    line.strip_suffix('\r').unwrap_or(line)
}

pub fn read_pairs(manifest: &CorpusManifest, shard_id: &str) -> Result<PairReader, CorpusError> {
    let entry = manifest
        .shard(shard_id)
        .ok_or_else(|| CorpusError::UnknownShard(shard_id.to_string()))?;
    PairReader::open(manifest, entry)
}

/// Per-language sentence counts `D_l` and per-direction pair counts.
///
/// A pair counts once for each language it contains, so
/// `Σ_l D_l = 2 · Σ_dir count(dir)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LanguageStats {
    pub per_language: BTreeMap<LangCode, u64>,
    pub per_direction: BTreeMap<Direction, u64>,
}

impl LanguageStats {
    pub fn add(&mut self, direction: &Direction, pairs: u64) {
        *self.per_direction.entry(direction.clone()).or_default() += pairs;
        *self.per_language.entry(direction.src().clone()).or_default() += pairs;
        *self.per_language.entry(direction.tgt().clone()).or_default() += pairs;
    }

    pub fn language_count(&self, lang: &LangCode) -> u64 {
        self.per_language.get(lang).copied().unwrap_or(0)
    }

    pub fn direction_count(&self, direction: &Direction) -> u64 {
        self.per_direction.get(direction).copied().unwrap_or(0)
    }

    pub fn total_pairs(&self) -> u64 {
        self.per_direction.values().sum()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (lang, n) in &self.per_language {
            out.push_str(&format!("lang\t{lang}\t{n}\n"));
        }
        for (dir, n) in &self.per_direction {
            out.push_str(&format!("dir\t{dir}\t{n}\n"));
        }
        out
    }
}

fn count_pairs(manifest: &CorpusManifest, entry: &ShardEntry) -> Result<u64, CorpusError> {
    let mut n = 0;
    for pair in PairReader::open(manifest, entry)? {
        pair?;
        n += 1;
    }
    Ok(n)
}

pub fn corpus_stats(manifest: &CorpusManifest) -> Result<LanguageStats, CorpusError> {
    let mut stats = LanguageStats::default();
    for entry in manifest.shards() {
        let n = count_pairs(manifest, entry)?;
        stats.add(&entry.direction, n);
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMismatch {
    pub shard_id: String,
    pub declared: u64,
    pub actual: u64,
}

/// Recounts every shard and reports those whose declared count is wrong.
pub fn verify_counts(manifest: &CorpusManifest) -> Result<Vec<CountMismatch>, CorpusError> {
    let mut mismatches = Vec::new();
    for entry in manifest.shards() {
        let actual = count_pairs(manifest, entry)?;
        if actual != entry.declared_line_count {
            mismatches.push(CountMismatch {
                shard_id: entry.id(),
                declared: entry.declared_line_count,
                actual,
            });
        }
    }
    Ok(mismatches)
}

/// Writes pairs as a shard file and returns the number of lines written.
pub fn write_shard<'a, I>(path: &Path, pairs: I) -> Result<u64, CorpusError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = io::BufWriter::new(file);
    let mut n = 0;
    for (src, tgt) in pairs {
        writeln!(w, "{src}\t{tgt}").map_err(|e| CorpusError::io(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))?;
    Ok(n)
}
