//! Corpus-level BLEU over subword tokens, and per-direction score matrices.
//!
//! BLEU-4 with clipped n-gram counts summed over the corpus, a corpus-level
//! brevity penalty, and add-one smoothing for orders 2..4 whose match count
//! is zero. With a [`SubwordTokenizer`](crate::tokenizer::SubwordTokenizer)
//! this is the spBLEU recipe; any [`Tokenize`] works.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::{Direction, LangCode};
use crate::routing::{translate_with_strategy, Strategy};
use crate::tokenizer::Tokenize;
use crate::translator::{DecodingConfig, TranslateError, Translator};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error)]
pub enum BleuError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("corpus has no segments")]
    EmptyCorpus,
    #[error("{0}")]
    Translate(#[from] TranslateError),
}

/// Sufficient statistics; they add across segments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn from_segment(hyp: &[&str], reference: &[&str]) -> Self {
        let mut stats = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            if hyp.len() < n {
                break;
            }
            let mut ref_counts: HashMap<&[&str], u64> = HashMap::new();
            for g in reference.windows(n) {
                *ref_counts.entry(g).or_default() += 1;
            }
            let mut hyp_counts: HashMap<&[&str], u64> = HashMap::new();
            for g in hyp.windows(n) {
                *hyp_counts.entry(g).or_default() += 1;
            }
            stats.totals[n - 1] = (hyp.len() + 1 - n) as u64;
            stats.matches[n - 1] = hyp_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    #[allow(clippy::needless_range_loop)]
    pub fn score(&self) -> BleuScore {
        let mut precisions = [0.0; MAX_ORDER];
        for n in 0..MAX_ORDER {
            let (m, t) = (self.matches[n], self.totals[n]);
            precisions[n] = if n > 0 && m == 0 {
                1.0 / (t as f64 + 1.0)
            } else if t == 0 {
                0.0
            } else {
                m as f64 / t as f64
            };
        }
        let brevity_penalty = if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        let score = if precisions.contains(&0.0) || brevity_penalty == 0.0 {
            0.0
        } else {
            let log_mean: f64 = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
            100.0 * brevity_penalty * log_mean.exp()
        };
        BleuScore {
            score,
            precisions,
            brevity_penalty,
            stats: *self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuScore {
    /// In [0, 100].
    pub score: f64,
    pub precisions: [f64; MAX_ORDER],
    /// exp(1 − ref/hyp) for short output, else 1; 0 for empty output.
    pub brevity_penalty: f64,
    pub stats: BleuStats,
}

impl BleuScore {
    pub fn hyp_len(&self) -> u64 {
        self.stats.hyp_len
    }

    pub fn ref_len(&self) -> u64 {
        self.stats.ref_len
    }

    /// `score  p1  p2  p3  p4  bp  hyp_len  ref_len`
    pub fn tsv_line(&self) -> String {
        let p = &self.precisions;
        format!(
            "{:.2}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}",
            self.score,
            p[0],
            p[1],
            p[2],
            p[3],
            self.brevity_penalty,
            self.hyp_len(),
            self.ref_len()
        )
    }
}

pub fn corpus_bleu<T, H, R>(hyps: &[H], refs: &[R], tokenizer: &T) -> Result<BleuScore, BleuError>
where
    T: Tokenize,
    H: AsRef<str>,
    R: AsRef<str>,
{
    if hyps.len() != refs.len() {
        return Err(BleuError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(BleuError::EmptyCorpus);
    }
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        let ht = tokenizer.tokenize(h.as_ref());
        let rt = tokenizer.tokenize(r.as_ref());
        total.add(&BleuStats::from_segment(&ht, &rt));
    }
    Ok(total.score())
}

/// Source sentences and their references for one direction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DevSet {
    pub sources: Vec<String>,
    pub references: Vec<String>,
}

/// Which side of the hub a direction sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionClass {
    IntoHub,
    OutOfHub,
    NonHub,
}

pub fn classify(dir: &Direction, hub: &LangCode) -> DirectionClass {
    if dir.tgt() == hub {
        DirectionClass::IntoHub
    } else if dir.src() == hub {
        DirectionClass::OutOfHub
    } else {
        DirectionClass::NonHub
    }
}

/// Per-direction BLEU with averages over the X→hub, hub→Y and X→Y classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    hub: LangCode,
    scores: BTreeMap<Direction, BleuScore>,
}

impl ScoreMatrix {
    pub fn new(hub: LangCode) -> Self {
        ScoreMatrix {
            hub,
            scores: BTreeMap::new(),
        }
    }

    pub fn hub(&self) -> &LangCode {
        &self.hub
    }

    pub fn insert(&mut self, dir: Direction, score: BleuScore) {
        self.scores.insert(dir, score);
    }

    pub fn get(&self, dir: &Direction) -> Option<&BleuScore> {
        self.scores.get(dir)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Direction, &BleuScore)> {
        self.scores.iter()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn mean_where(&self, keep: impl Fn(&Direction) -> bool) -> Option<f64> {
        let picked: Vec<f64> = self
            .scores
            .iter()
            .filter(|(d, _)| keep(d))
            .map(|(_, s)| s.score)
            .collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }

    pub fn avg_into_hub(&self) -> Option<f64> {
        self.mean_where(|d| classify(d, &self.hub) == DirectionClass::IntoHub)
    }

    pub fn avg_out_of_hub(&self) -> Option<f64> {
        self.mean_where(|d| classify(d, &self.hub) == DirectionClass::OutOfHub)
    }

    pub fn avg_non_hub(&self) -> Option<f64> {
        self.mean_where(|d| classify(d, &self.hub) == DirectionClass::NonHub)
    }

    pub fn avg_all(&self) -> Option<f64> {
        self.mean_where(|_| true)
    }

    /// One row per direction, then `#` rows with the class averages.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# src\ttgt\tscore\tp1\tp2\tp3\tp4\tbp\thyp_len\tref_len\n");
        for (dir, s) in &self.scores {
            let _ = writeln!(out, "{}\t{}\t{}", dir.src(), dir.tgt(), s.tsv_line());
        }
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        let hub = &self.hub;
        let _ = writeln!(out, "# avg x-{hub}\t{}", fmt(self.avg_into_hub()));
        let _ = writeln!(out, "# avg {hub}-y\t{}", fmt(self.avg_out_of_hub()));
        let _ = writeln!(out, "# avg x-y\t{}", fmt(self.avg_non_hub()));
        let _ = writeln!(out, "# avg all\t{}", fmt(self.avg_all()));
        out
    }
}

/// Translates every dev set with `strategy` and scores it. Directions that
/// touch the pivot language are always decoded directly.
pub fn evaluate_directions<T, K>(
    translator: &T,
    devset: &BTreeMap<Direction, DevSet>,
    cfg: &DecodingConfig,
    strategy: &Strategy,
    tokenizer: &K,
    hub: &LangCode,
) -> Result<ScoreMatrix, BleuError>
where
    T: Translator + ?Sized,
    K: Tokenize,
{
    let mut matrix = ScoreMatrix::new(hub.clone());
    for (dir, set) in devset {
        let hyps = translate_with_strategy(translator, &set.sources, dir, strategy, cfg)?;
        matrix.insert(dir.clone(), corpus_bleu(&hyps, &set.references, tokenizer)?);
    }
    Ok(matrix)
}
