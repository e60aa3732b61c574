//! Synthetic parallel data: back-translation of English monolingual text,
//! dual-pseudo pairs built from two translations of the same English line,
//! and triangulation of an existing bitext into a new language.
//!
//! Planning and running are separate. A plan is a list of tasks naming their
//! inputs and the translation directions they need; [`run_plan`] checks that
//! the translator covers every needed direction before writing anything.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{CorpusError, CorpusManifest, Direction, LangCode, OriginPool, PairReader, ShardEntry};
use crate::translator::{translate, DecodingConfig, TranslateError, Translator};

/// Sentences per translator call.
const CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("monolingual corpus {0} has no sentences")]
    EmptyMonolingual(PathBuf),
    #[error("back-translation target language must not be English")]
    EnglishTarget,
    #[error("dual-pseudo direction {0} includes English")]
    EnglishInPair(Direction),
    #[error("triangulation needs a new source or a new target language")]
    NothingToDo,
    #[error("invalid triangulation: {0}")]
    InvalidTriangulation(String),
    #[error("translator does not support {0}")]
    UnsupportedDirection(Direction),
    #[error("{path}:{line}: text contains a tab")]
    TabInText { path: PathBuf, line: u64 },
    #[error("translator returned {found} sentences for {direction}, expected {expected}")]
    OutputCount {
        direction: Direction,
        expected: usize,
        found: usize,
    },
    #[error("plan line {line}: {reason}")]
    MalformedPlan { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Translate(#[from] TranslateError),
}

fn io_err(path: &Path, source: io::Error) -> AugmentError {
    AugmentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    BackTranslation,
    DualPseudo,
    Triangulation,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::BackTranslation => "bt",
            TaskKind::DualPseudo => "dual",
            TaskKind::Triangulation => "tri",
        }
    }

    pub fn origin(self) -> OriginPool {
        match self {
            TaskKind::BackTranslation => OriginPool::BackTranslation,
            TaskKind::DualPseudo | TaskKind::Triangulation => OriginPool::DualPseudo,
        }
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bt" => Ok(TaskKind::BackTranslation),
            "dual" => Ok(TaskKind::DualPseudo),
            "tri" => Ok(TaskKind::Triangulation),
            _ => Err(format!("unknown task kind {s:?}, expected bt, dual or tri")),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusRef {
    /// English text, one sentence per line.
    Monolingual(PathBuf),
    /// A two-column shard in the given direction.
    Bitext { path: PathBuf, direction: Direction },
}

impl CorpusRef {
    pub fn path(&self) -> &Path {
        match self {
            CorpusRef::Monolingual(p) | CorpusRef::Bitext { path: p, .. } => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentTask {
    pub kind: TaskKind,
    pub input: CorpusRef,
    /// Directions the translator must support.
    pub needs: Vec<Direction>,
    /// One shard is written per output direction.
    pub outputs: Vec<Direction>,
    pub round: u32,
}

impl AugmentTask {
    pub fn origin(&self) -> OriginPool {
        self.kind.origin()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AugmentationPlan {
    pub tasks: Vec<AugmentTask>,
}

impl AugmentationPlan {
    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn extend(&mut self, other: AugmentationPlan) {
        self.tasks.extend(other.tasks);
    }

    /// Tags every task with an iteration number; the round ends up in the
    /// output shard names so successive passes do not overwrite each other.
    pub fn with_round(mut self, round: u32) -> Self {
        for t in &mut self.tasks {
            t.round = round;
        }
        self
    }

    /// Every direction the plan needs, deduplicated, in first-use order.
    pub fn needed_directions(&self) -> Vec<Direction> {
        let mut out: Vec<Direction> = Vec::new();
        for d in self.tasks.iter().flat_map(|t| &t.needs) {
            if !out.contains(d) {
                out.push(d.clone());
            }
        }
        out
    }

    /// `kind round input_kind input_path input_direction needs outputs`, with
    /// `-` as the direction of a monolingual input.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# kind\tround\tinput\tpath\tdirection\tneeds\toutputs\n");
        for t in &self.tasks {
            let (input, dir) = match &t.input {
                CorpusRef::Monolingual(_) => ("mono", "-".to_string()),
                CorpusRef::Bitext { direction, .. } => ("bitext", direction.to_string()),
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                t.kind,
                t.round,
                input,
                t.input.path().display(),
                dir,
                join(&t.needs),
                join(&t.outputs)
            ));
        }
        out
    }

    /// Relative input paths are resolved against `base_dir`.
    pub fn parse_tsv(text: &str, base_dir: &Path) -> Result<Self, AugmentError> {
        let mut tasks = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| AugmentError::MalformedPlan { line: idx + 1, reason };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 tab-separated fields, found {}", f.len())));
            }
            let kind: TaskKind = f[0].parse().map_err(bad)?;
            let round = f[1].parse().map_err(|_| bad(format!("bad round {:?}", f[1])))?;
            let path = base_dir.join(f[3]);
            let input = match (f[2], f[4]) {
                ("mono", "-") => CorpusRef::Monolingual(path),
                ("bitext", d) => CorpusRef::Bitext {
                    path,
                    direction: d.parse().map_err(|e: CorpusError| bad(e.to_string()))?,
                },
                _ => return Err(bad(format!("bad input {:?} with direction {:?}", f[2], f[4]))),
            };
            let dirs = |s: &str| -> Result<Vec<Direction>, AugmentError> {
                s.split(',')
                    .map(|d| d.parse::<Direction>().map_err(|e| bad(e.to_string())))
                    .collect()
            };
            tasks.push(AugmentTask {
                kind,
                input,
                needs: dirs(f[5])?,
                outputs: dirs(f[6])?,
                round,
            });
        }
        Ok(AugmentationPlan { tasks })
    }

    pub fn load(path: &Path) -> Result<Self, AugmentError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse_tsv(&text, base)
    }
}

fn join(dirs: &[Direction]) -> String {
    dirs.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

fn dir(src: &LangCode, tgt: &LangCode) -> Result<Direction, AugmentError> {
    Ok(Direction::new(src.clone(), tgt.clone())?)
}

fn ensure_nonempty(mono_en: &Path) -> Result<(), AugmentError> {
    let file = File::open(mono_en).map_err(|e| io_err(mono_en, e))?;
    for line in BufReader::new(file).lines() {
        if !line.map_err(|e| io_err(mono_en, e))?.trim().is_empty() {
            return Ok(());
        }
    }
    Err(AugmentError::EmptyMonolingual(mono_en.to_path_buf()))
}

/// One task per language: translate the English text into X and emit it as
/// both `X→en` (synthetic source) and `en→X` (synthetic target) pairs.
pub fn plan_backtranslation(mono_en: &Path, langs: &[LangCode]) -> Result<AugmentationPlan, AugmentError> {
    let en = LangCode::english();
    if langs.contains(&en) {
        return Err(AugmentError::EnglishTarget);
    }
    if langs.is_empty() {
        return Ok(AugmentationPlan::default());
    }
    ensure_nonempty(mono_en)?;
    let mut tasks = Vec::new();
    for x in langs {
        let out = dir(&en, x)?;
        tasks.push(AugmentTask {
            kind: TaskKind::BackTranslation,
            input: CorpusRef::Monolingual(mono_en.to_path_buf()),
            needs: vec![out.clone()],
            outputs: vec![out.reversed(), out],
            round: 0,
        });
    }
    Ok(AugmentationPlan { tasks })
}

/// One task per `X→Y`: translate the English text into X and into Y and pair
/// the results line by line.
pub fn plan_dual_pseudo(mono_en: &Path, pairs: &[Direction]) -> Result<AugmentationPlan, AugmentError> {
    let en = LangCode::english();
    if let Some(bad) = pairs.iter().find(|d| d.touches(&en)) {
        return Err(AugmentError::EnglishInPair(bad.clone()));
    }
    if pairs.is_empty() {
        return Ok(AugmentationPlan::default());
    }
    ensure_nonempty(mono_en)?;
    let tasks = pairs
        .iter()
        .map(|d| {
            Ok(AugmentTask {
                kind: TaskKind::DualPseudo,
                input: CorpusRef::Monolingual(mono_en.to_path_buf()),
                needs: vec![dir(&en, d.src())?, dir(&en, d.tgt())?],
                outputs: vec![d.clone()],
                round: 0,
            })
        })
        .collect::<Result<_, AugmentError>>()?;
    Ok(AugmentationPlan { tasks })
}

/// All `K × (K − 1)` ordered directions over `langs`.
pub fn all_ordered_pairs(langs: &[LangCode]) -> Vec<Direction> {
    let mut out = Vec::new();
    for a in langs {
        for b in langs {
            if a != b {
                out.push(Direction::new(a.clone(), b.clone()).expect("distinct languages"));
            }
        }
    }
    out
}

/// From an `X1→Y1` bitext, `new_tgt = Y2` yields `X1→Y2` by translating the
/// target side, and `new_src = X2` yields `X2→Y1` by translating the source
/// side.
pub fn plan_triangulation(
    bitext: &Path,
    direction: &Direction,
    new_src: Option<&LangCode>,
    new_tgt: Option<&LangCode>,
) -> Result<AugmentationPlan, AugmentError> {
    if new_src.is_none() && new_tgt.is_none() {
        return Err(AugmentError::NothingToDo);
    }
    let (x1, y1) = (direction.src(), direction.tgt());
    let input = CorpusRef::Bitext {
        path: bitext.to_path_buf(),
        direction: direction.clone(),
    };
    let mut tasks = Vec::new();
    if let Some(x2) = new_src {
        if x2 == x1 || x2 == y1 {
            return Err(AugmentError::InvalidTriangulation(format!(
                "new source {x2} must differ from {x1} and {y1}"
            )));
        }
        tasks.push(AugmentTask {
            kind: TaskKind::Triangulation,
            input: input.clone(),
            needs: vec![dir(x1, x2)?],
            outputs: vec![dir(x2, y1)?],
            round: 0,
        });
    }
    if let Some(y2) = new_tgt {
        if y2 == x1 || y2 == y1 {
            return Err(AugmentError::InvalidTriangulation(format!(
                "new target {y2} must differ from {x1} and {y1}"
            )));
        }
        tasks.push(AugmentTask {
            kind: TaskKind::Triangulation,
            input,
            needs: vec![dir(y1, y2)?],
            outputs: vec![dir(x1, y2)?],
            round: 0,
        });
    }
    Ok(AugmentationPlan { tasks })
}

fn read_monolingual(path: &Path) -> Result<Vec<String>, AugmentError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let mut line = line.map_err(|e| io_err(path, e))?;
        if line.ends_with('\r') {
            line.pop();
        }
        if line.contains('\t') {
            return Err(AugmentError::TabInText {
                path: path.to_path_buf(),
                line: i as u64 + 1,
            });
        }
        out.push(line);
    }
    Ok(out)
}

fn read_bitext(path: &Path, direction: &Direction) -> Result<(Vec<String>, Vec<String>), AugmentError> {
    let entry = ShardEntry {
        path: path.to_path_buf(),
        direction: direction.clone(),
        origin: OriginPool::Bitext,
        declared_line_count: 0,
    };
    let (mut src, mut tgt) = (Vec::new(), Vec::new());
    for pair in PairReader::open(&CorpusManifest::new(""), &entry)? {
        let pair = pair?;
        src.push(pair.source);
        tgt.push(pair.target);
    }
    Ok((src, tgt))
}

fn run_translation<T: Translator + ?Sized>(
    t: &T,
    sentences: &[String],
    dir: &Direction,
    cfg: &DecodingConfig,
) -> Result<Vec<String>, AugmentError> {
    let mut out = Vec::with_capacity(sentences.len());
    for chunk in sentences.chunks(CHUNK) {
        let got = translate(t, chunk, dir, cfg)?;
        if got.len() != chunk.len() {
            return Err(AugmentError::OutputCount {
                direction: dir.clone(),
                expected: chunk.len(),
                found: got.len(),
            });
        }
        out.extend(got);
    }
    if let Some(i) = out.iter().position(|s| s.contains('\t') || s.contains('\n')) {
        return Err(AugmentError::Translate(TranslateError::Exec {
            command: dir.to_string(),
            reason: format!("output {} contains a tab or line break", i + 1),
        }));
    }
    Ok(out)
}

/// English translations keyed by (monolingual file, target language); each
/// `en→X` pass over a file runs once however many tasks use it.
#[derive(Default)]
struct TranslationCache {
    mono: HashMap<PathBuf, Vec<String>>,
    translated: HashMap<(PathBuf, LangCode), Vec<String>>,
}

impl TranslationCache {
    fn english(&mut self, path: &Path) -> Result<&[String], AugmentError> {
        if !self.mono.contains_key(path) {
            let lines = read_monolingual(path)?;
            self.mono.insert(path.to_path_buf(), lines);
        }
        Ok(&self.mono[path])
    }

    fn translated_into<T: Translator + ?Sized>(
        &mut self,
        t: &T,
        path: &Path,
        lang: &LangCode,
        cfg: &DecodingConfig,
    ) -> Result<&[String], AugmentError> {
        let key = (path.to_path_buf(), lang.clone());
        if !self.translated.contains_key(&key) {
            let en = LangCode::english();
            let d = Direction::new(en, lang.clone())?;
            let out = run_translation(t, self.english(path)?, &d, cfg)?;
            self.translated.insert(key.clone(), out);
        }
        Ok(&self.translated[&key])
    }
}

/// Output shard file name for task `idx`.
pub fn shard_name(idx: usize, task: &AugmentTask, output: &Direction) -> String {
    format!(
        "{idx:03}.{}.{}-{}.r{}.tsv",
        task.kind,
        output.src(),
        output.tgt(),
        task.round
    )
}

/// Executes every task, writing one shard per output direction into
/// `out_dir` together with a `manifest.tsv` describing them.
pub fn run_plan<T: Translator + ?Sized>(
    plan: &AugmentationPlan,
    t: &T,
    cfg: &DecodingConfig,
    out_dir: &Path,
) -> Result<CorpusManifest, AugmentError> {
    if let Some(d) = plan.needed_directions().into_iter().find(|d| !t.supports(d)) {
        return Err(AugmentError::UnsupportedDirection(d));
    }
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut manifest = CorpusManifest::new(out_dir);
    let mut cache = TranslationCache::default();
    let en = LangCode::english();

    for (idx, task) in plan.tasks.iter().enumerate() {
        let shards: Vec<(Direction, Vec<String>, Vec<String>)> = match (&task.kind, &task.input) {
            (TaskKind::BackTranslation, CorpusRef::Monolingual(path)) => {
                let x = task.needs[0].tgt().clone();
                let synthetic = cache.translated_into(t, path, &x, cfg)?.to_vec();
                let english = cache.english(path)?.to_vec();
                task.outputs
                    .iter()
                    .map(|o| {
                        if o.src() == &en {
                            (o.clone(), english.clone(), synthetic.clone())
                        } else {
                            (o.clone(), synthetic.clone(), english.clone())
                        }
                    })
                    .collect()
            }
            (TaskKind::DualPseudo, CorpusRef::Monolingual(path)) => {
                let o = &task.outputs[0];
                let src = cache.translated_into(t, path, o.src(), cfg)?.to_vec();
                let tgt = cache.translated_into(t, path, o.tgt(), cfg)?.to_vec();
                vec![(o.clone(), src, tgt)]
            }
            (TaskKind::Triangulation, CorpusRef::Bitext { path, direction }) => {
                let (src, tgt) = read_bitext(path, direction)?;
                let need = &task.needs[0];
                let o = task.outputs[0].clone();
                if need.src() == direction.src() {
                    vec![(o, run_translation(t, &src, need, cfg)?, tgt)]
                } else {
                    vec![(o, src, run_translation(t, &tgt, need, cfg)?)]
                }
            }
            (kind, input) => {
                return Err(AugmentError::MalformedPlan {
                    line: idx + 1,
                    reason: format!("task {kind} cannot read {input:?}"),
                })
            }
        };
        for (direction, src, tgt) in shards {
            let name = shard_name(idx, task, &direction);
            let path = out_dir.join(&name);
            let n = crate::corpus::write_shard(&path, src.iter().map(String::as_str).zip(tgt.iter().map(String::as_str)))?;
            manifest.push(ShardEntry {
                path: PathBuf::from(name),
                direction,
                origin: task.origin(),
                declared_line_count: n,
            })?;
        }
    }
    manifest.save(&out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_pairs;
    use crate::translator::{make_cipher_translator, CipherLanguage};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn lang(s: &str) -> LangCode {
        s.parse().unwrap()
    }

    fn d(s: &str) -> Direction {
        s.parse().unwrap()
    }

    fn mono(dir: &Path, lines: &[&str]) -> PathBuf {
        let p = dir.join("mono.en");
        fs::write(&p, lines.join("\n") + "\n").unwrap();
        p
    }

    fn ciphers() -> (CipherLanguage, CipherLanguage, crate::translator::CipherTranslator) {
        let x = CipherLanguage::new(lang("hr"), 11);
        let y = CipherLanguage::new(lang("hu"), 12);
        let t = make_cipher_translator(vec![x.clone(), y.clone()]).unwrap();
        (x, y, t)
    }

    /// Counts batches so cache reuse is observable.
    struct Counting<T> {
        inner: T,
        calls: AtomicUsize,
    }

    impl<T: Translator> Translator for Counting<T> {
        fn supports(&self, dir: &Direction) -> bool {
            self.inner.supports(dir)
        }

        fn translate_batch(&self, s: &[String], dir: &Direction, cfg: &DecodingConfig) -> Result<Vec<String>, TranslateError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.translate_batch(s, dir, cfg)
        }
    }

    fn lines(manifest: &CorpusManifest, i: usize) -> Vec<(String, String)> {
        read_pairs(manifest, &manifest.shards()[i].id())
            .unwrap()
            .map(|p| {
                let p = p.unwrap();
                (p.source, p.target)
            })
            .collect()
    }

    #[test]
    fn planning() {
        let tmp = tempfile::tempdir().unwrap();
        let m = mono(tmp.path(), &["the cat"]);
        let bt = plan_backtranslation(&m, &[lang("hr")]).unwrap();
        assert_eq!(bt.len(), 1);
        assert_eq!(bt.tasks[0].needs, vec![d("en-hr")]);
        assert_eq!(bt.tasks[0].origin(), OriginPool::BackTranslation);
        assert_eq!(plan_backtranslation(&m, &[lang("hr"), lang("hu")]).unwrap().len(), 2);
        assert!(plan_backtranslation(&m, &[]).unwrap().is_empty());
        assert!(matches!(
            plan_backtranslation(&m, &[LangCode::english()]),
            Err(AugmentError::EnglishTarget)
        ));

        let dual = plan_dual_pseudo(&m, &[d("hr-hu")]).unwrap();
        assert_eq!(dual.tasks[0].needs, vec![d("en-hr"), d("en-hu")]);
        assert_eq!(dual.tasks[0].origin(), OriginPool::DualPseudo);
        assert!(matches!(
            plan_dual_pseudo(&m, &[d("hr-en")]),
            Err(AugmentError::EnglishInPair(_))
        ));
        let grid = all_ordered_pairs(&[lang("hr"), lang("hu"), lang("et")]);
        assert_eq!(grid.len(), 6);
        let plan = plan_dual_pseudo(&m, &grid).unwrap();
        assert_eq!(plan.needed_directions().len(), 3);

        let tri = plan_triangulation(&m, &d("hr-hu"), None, Some(&lang("mk"))).unwrap();
        assert_eq!(tri.tasks[0].needs, vec![d("hu-mk")]);
        assert_eq!(tri.tasks[0].outputs, vec![d("hr-mk")]);
        let both = plan_triangulation(&m, &d("hr-hu"), Some(&lang("et")), Some(&lang("mk"))).unwrap();
        assert_eq!(both.len(), 2);
        assert!(matches!(
            plan_triangulation(&m, &d("hr-hu"), None, None),
            Err(AugmentError::NothingToDo)
        ));
        assert!(matches!(
            plan_triangulation(&m, &d("hr-hu"), Some(&lang("hu")), None),
            Err(AugmentError::InvalidTriangulation(_))
        ));
    }

    #[test]
    fn empty_monolingual() {
        let tmp = tempfile::tempdir().unwrap();
        let m = mono(tmp.path(), &["", "  "]);
        assert!(matches!(
            plan_backtranslation(&m, &[lang("hr")]),
            Err(AugmentError::EmptyMonolingual(_))
        ));
        assert!(matches!(
            plan_backtranslation(&tmp.path().join("nope"), &[lang("hr")]),
            Err(AugmentError::Io { .. })
        ));
    }

    #[test]
    fn plan_tsv_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let m = mono(tmp.path(), &["the cat"]);
        let mut plan = plan_backtranslation(&m, &[lang("hr")]).unwrap();
        plan.extend(plan_dual_pseudo(&m, &[d("hr-hu")]).unwrap());
        plan.extend(plan_triangulation(&m, &d("hr-hu"), Some(&lang("et")), None).unwrap());
        let plan = plan.with_round(2);
        let back = AugmentationPlan::parse_tsv(&plan.to_tsv(), Path::new("")).unwrap();
        assert_eq!(back, plan);
        assert!(AugmentationPlan::parse_tsv("bt\t0\tmono\tx\n", Path::new("")).is_err());
        assert!(AugmentationPlan::parse_tsv("zz\t0\tmono\tx\t-\ten-hr\thr-en\n", Path::new("")).is_err());
    }

    #[test]
    fn backtranslation_keeps_english() {
        let tmp = tempfile::tempdir().unwrap();
        let (x, _, t) = ciphers();
        let english = ["the cat sat", "a dog ran"];
        let m = mono(tmp.path(), &english);
        let plan = plan_backtranslation(&m, &[lang("hr")]).unwrap();
        let out = tmp.path().join("out");
        let manifest = run_plan(&plan, &t, &DecodingConfig::default(), &out).unwrap();
        assert_eq!(manifest.shards().len(), 2);
        assert_eq!(manifest.shards()[0].direction, d("hr-en"));
        assert_eq!(manifest.shards()[0].origin, OriginPool::BackTranslation);
        let rows = lines(&manifest, 0);
        for (row, en) in rows.iter().zip(english) {
            assert_eq!(row.1, en);
            assert_eq!(row.0, x.encode(en));
        }
        let rows = lines(&manifest, 1);
        assert_eq!(rows[1], ("a dog ran".to_string(), x.encode("a dog ran")));
        assert!(out.join("manifest.tsv").exists());
        assert!(out.join("000.bt.hr-en.r0.tsv").exists());
    }

    #[test]
    fn dual_pseudo_is_exact_and_cached() {
        let tmp = tempfile::tempdir().unwrap();
        let (x, y, t) = ciphers();
        let english = ["the cat sat", "one two", "zebra crossing"];
        let m = mono(tmp.path(), &english);
        let counting = Counting {
            inner: t,
            calls: AtomicUsize::new(0),
        };
        let plan = plan_dual_pseudo(&m, &[d("hr-hu"), d("hu-hr")]).unwrap();
        let manifest = run_plan(&plan, &counting, &DecodingConfig::default(), &tmp.path().join("o")).unwrap();
        assert_eq!(counting.calls.load(Ordering::SeqCst), 2);
        let rows = lines(&manifest, 0);
        assert_eq!(rows.len(), 3);
        for (row, en) in rows.iter().zip(english) {
            assert_eq!(row.0, x.encode(en));
            assert_eq!(row.1, y.encode(en));
        }
        let direct = translate(
            &counting.inner,
            &rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>(),
            &d("hr-hu"),
            &DecodingConfig::default(),
        )
        .unwrap();
        assert_eq!(direct, rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>());
    }

    #[test]
    fn triangulation_translates_one_side() {
        let tmp = tempfile::tempdir().unwrap();
        let (x, y, t) = ciphers();
        let bitext = tmp.path().join("hr-en.tsv");
        let pairs = [(x.encode("the cat"), "the cat"), (x.encode("a dog"), "a dog")];
        crate::corpus::write_shard(&bitext, pairs.iter().map(|(a, b)| (a.as_str(), *b))).unwrap();
        let plan = plan_triangulation(&bitext, &d("hr-en"), None, Some(&lang("hu"))).unwrap();
        let manifest = run_plan(&plan, &t, &DecodingConfig::default(), &tmp.path().join("o")).unwrap();
        assert_eq!(manifest.shards()[0].direction, d("hr-hu"));
        assert_eq!(manifest.shards()[0].origin, OriginPool::DualPseudo);
        let rows = lines(&manifest, 0);
        assert_eq!(rows[0], (x.encode("the cat"), y.encode("the cat")));

        let plan = plan_triangulation(&bitext, &d("hr-en"), Some(&lang("hu")), None).unwrap();
        let manifest = run_plan(&plan, &t, &DecodingConfig::default(), &tmp.path().join("p")).unwrap();
        assert_eq!(lines(&manifest, 0)[1], (y.encode("a dog"), "a dog".to_string()));
    }

    #[test]
    fn unsupported_direction_fails_before_output() {
        let tmp = tempfile::tempdir().unwrap();
        let (_, _, t) = ciphers();
        let m = mono(tmp.path(), &["the cat"]);
        let plan = plan_backtranslation(&m, &[lang("hr"), lang("et")]).unwrap();
        let out = tmp.path().join("out");
        let err = run_plan(&plan, &t, &DecodingConfig::default(), &out).unwrap_err();
        assert!(matches!(err, AugmentError::UnsupportedDirection(ref dir) if *dir == d("en-et")));
        assert!(!out.exists());
    }

    #[test]
    fn empty_plan_touches_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let (_, _, t) = ciphers();
        let counting = Counting {
            inner: t,
            calls: AtomicUsize::new(0),
        };
        let manifest = run_plan(&AugmentationPlan::default(), &counting, &DecodingConfig::default(), tmp.path()).unwrap();
        assert!(manifest.is_empty());
        assert_eq!(counting.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn rounds_version_shards() {
        let tmp = tempfile::tempdir().unwrap();
        let (_, _, t) = ciphers();
        let m = mono(tmp.path(), &["the cat"]);
        let plan = plan_backtranslation(&m, &[lang("hr")]).unwrap().with_round(3);
        run_plan(&plan, &t, &DecodingConfig::default(), tmp.path()).unwrap();
        assert!(tmp.path().join("000.bt.en-hr.r3.tsv").exists());
    }
}
