//! Temperature-balanced language sampling and three-pool batch scheduling.
//!
//! Each example is drawn in three steps: a pool (bitext, back-translation or
//! dual-pseudo) from the mixture weights λ, a direction inside that pool with
//! probability proportional to `q_src · q_tgt`, then a pair uniformly from
//! that direction's shards. Draws are with replacement, so the stream never
//! runs dry.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::PathBuf;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{
    strip_newline, CorpusError, CorpusManifest, Direction, LangCode, LanguageStats, OriginPool,
    SentencePair, ShardEntry,
};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("no language has a positive sentence count")]
    EmptyStats,
    #[error("temperature must be positive and finite, got {0}")]
    NonPositiveTemperature(f64),
    #[error("mixture weights {0:?} must lie in [0, 1] and sum to 1")]
    InvalidWeights([f64; 3]),
    #[error("pool {0} has positive weight but no sampleable pairs")]
    EmptyPoolWithPositiveWeight(OriginPool),
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("{0}")]
    Corpus(#[from] CorpusError),
}

/// Language probabilities `q_l ∝ p_l^(1/T)` with `p_l = D_l / Σ D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    temperature: f64,
    q: BTreeMap<LangCode, f64>,
}

impl SamplingDistribution {
    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Zero for languages that are absent or have no sentences.
    pub fn prob(&self, lang: &LangCode) -> f64 {
        self.q.get(lang).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LangCode, f64)> {
        self.q.iter().map(|(l, &p)| (l, p))
    }

    /// Draws one language.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &LangCode {
        let langs: Vec<&LangCode> = self.q.keys().collect();
        let index = WeightedIndex::new(self.q.values().copied()).expect("q has positive mass");
        langs[index.sample(rng)]
    }
}

pub fn language_distribution(
    stats: &LanguageStats,
    temperature: f64,
) -> Result<SamplingDistribution, SamplingError> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(SamplingError::NonPositiveTemperature(temperature));
    }
    let total: u64 = stats.per_language.values().sum();
    if total == 0 {
        return Err(SamplingError::EmptyStats);
    }
    // Integer counts divided by their integer total: scaling every count by
    // the same factor yields bit-identical p_l.
    let scaled: Vec<(LangCode, f64)> = stats
        .per_language
        .iter()
        .map(|(lang, &d)| {
            let p = d as f64 / total as f64;
            (lang.clone(), if d == 0 { 0.0 } else { p.powf(1.0 / temperature) })
        })
        .collect();
    let norm: f64 = scaled.iter().map(|(_, w)| w).sum();
    let q = scaled.into_iter().map(|(lang, w)| (lang, w / norm)).collect();
    Ok(SamplingDistribution { temperature, q })
}

/// Pool weights (λ1, λ2, λ3) for bitext, back-translation and dual-pseudo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureWeights([f64; 3]);

impl MixtureWeights {
    /// Starting mixture: equal weight on all three pools.
    pub const UNIFORM: MixtureWeights = MixtureWeights([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    /// Later mixture that leans on authentic bitext.
    pub const BITEXT_FOCUSED: MixtureWeights = MixtureWeights([0.6, 0.2, 0.2]);

    pub fn new(bitext: f64, back_translation: f64, dual_pseudo: f64) -> Result<Self, SamplingError> {
        let w = [bitext, back_translation, dual_pseudo];
        let sum: f64 = w.iter().sum();
        if w.iter().any(|x| !(0.0..=1.0).contains(x)) || (sum - 1.0).abs() > 1e-9 {
            return Err(SamplingError::InvalidWeights(w));
        }
        Ok(MixtureWeights(w))
    }

    /// Accepts weights written with rounding (0.33, 0.33, 0.33) and rescales
    /// them to sum to one. The raw sum must be within 0.02 of 1.
    pub fn normalized(bitext: f64, back_translation: f64, dual_pseudo: f64) -> Result<Self, SamplingError> {
        let w = [bitext, back_translation, dual_pseudo];
        let sum: f64 = w.iter().sum();
        if w.iter().any(|x| x.is_nan() || *x < 0.0) || (sum - 1.0).abs() > 0.02 {
            return Err(SamplingError::InvalidWeights(w));
        }
        MixtureWeights::new(w[0] / sum, w[1] / sum, w[2] / sum)
    }

    pub fn weight(&self, pool: OriginPool) -> f64 {
        self.0[pool.index()]
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }
}

impl FromStr for MixtureWeights {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("bad weight list {s:?}: {e}"))?;
        match parts[..] {
            [a, b, c] => MixtureWeights::normalized(a, b, c).map_err(|e| e.to_string()),
            _ => Err(format!("expected three comma-separated weights, got {s:?}")),
        }
    }
}

impl fmt::Display for MixtureWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.0[0], self.0[1], self.0[2])
    }
}

/// Line offsets of one shard, for uniform random access.
struct IndexedShard {
    path: PathBuf,
    shard_id: String,
    origin: OriginPool,
    direction: Direction,
    offsets: Vec<u64>,
    reader: BufReader<File>,
}

impl IndexedShard {
    fn open(manifest: &CorpusManifest, entry: &ShardEntry) -> Result<Self, CorpusError> {
        let path = manifest.resolve(entry);
        let file = File::open(&path).map_err(|e| CorpusError::io(&path, e))?;
        let mut reader = BufReader::new(file);
        let mut offsets = Vec::new();
        let mut pos = 0u64;
        let mut buf = Vec::new();
        loop {
            buf.clear();
            let n = reader
                .read_until(b'\n', &mut buf)
                .map_err(|e| CorpusError::io(&path, e))?;
            if n == 0 {
                break;
            }
            offsets.push(pos);
            pos += n as u64;
        }
        Ok(IndexedShard {
            path,
            shard_id: entry.id(),
            origin: entry.origin,
            direction: entry.direction.clone(),
            offsets,
            reader,
        })
    }

    fn read(&mut self, index: usize) -> Result<SentencePair, CorpusError> {
        self.reader
            .seek(SeekFrom::Start(self.offsets[index]))
            .map_err(|e| CorpusError::io(&self.path, e))?;
        let mut line = String::new();
        self.reader
            .read_line(&mut line)
            .map_err(|e| CorpusError::io(&self.path, e))?;
        let line_no = index as u64 + 1;
        let (source, target) = strip_newline(&line)
            .split_once('\t')
            .filter(|(_, t)| !t.contains('\t'))
            .ok_or_else(|| CorpusError::MalformedLine {
                shard: self.shard_id.clone(),
                line_no,
            })?;
        Ok(SentencePair {
            source: source.to_string(),
            target: target.to_string(),
            direction: self.direction.clone(),
            origin: self.origin,
            shard_id: self.shard_id.clone(),
            line_no,
        })
    }
}

/// All shards of one direction inside one pool.
struct DirectionSlot {
    direction: Direction,
    shards: Vec<usize>,
    /// Cumulative pair counts over `shards`.
    cumulative: Vec<u64>,
}

impl DirectionSlot {
    fn total(&self) -> u64 {
        self.cumulative.last().copied().unwrap_or(0)
    }
}

struct PoolSampler {
    slots: Vec<DirectionSlot>,
    choose: WeightedIndex<f64>,
}

/// Counts per (language, pool); a pair counts once for each of its two
/// languages.
pub type Composition = BTreeMap<(LangCode, OriginPool), u64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub pairs: Vec<SentencePair>,
    pub composition: Composition,
}

impl Batch {
    fn from_pairs(pairs: Vec<SentencePair>) -> Self {
        let mut composition = Composition::new();
        for p in &pairs {
            for lang in [p.direction.src(), p.direction.tgt()] {
                *composition.entry((lang.clone(), p.origin)).or_default() += 1;
            }
        }
        Batch { pairs, composition }
    }
}

/// `batch lang pool count` rows, batches numbered from 1.
pub fn composition_tsv<'a>(batches: impl IntoIterator<Item = &'a Composition>) -> String {
    let mut out = String::from("# batch\tlang\tpool\tcount\n");
    for (i, comp) in batches.into_iter().enumerate() {
        for ((lang, pool), n) in comp {
            out.push_str(&format!("{}\t{lang}\t{pool}\t{n}\n", i + 1));
        }
    }
    out
}

pub struct BatchScheduler {
    shards: Vec<IndexedShard>,
    pools: [Option<PoolSampler>; 3],
    choose_pool: WeightedIndex<f64>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchScheduler {
    pub fn new(
        manifest: &CorpusManifest,
        dist: &SamplingDistribution,
        weights: MixtureWeights,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self, SamplingError> {
        if batch_size == 0 {
            return Err(SamplingError::ZeroBatchSize);
        }
        let shards = manifest
            .shards()
            .iter()
            .map(|entry| IndexedShard::open(manifest, entry))
            .collect::<Result<Vec<_>, _>>()?;

        let mut pools: [Option<PoolSampler>; 3] = [None, None, None];
        for pool in OriginPool::ALL {
            let mut by_direction: BTreeMap<Direction, Vec<usize>> = BTreeMap::new();
            for (i, shard) in shards.iter().enumerate() {
                if shard.origin == pool && !shard.offsets.is_empty() {
                    by_direction.entry(shard.direction.clone()).or_default().push(i);
                }
            }
            let mut slots = Vec::new();
            let mut slot_weights = Vec::new();
            for (direction, members) in by_direction {
                let w = dist.prob(direction.src()) * dist.prob(direction.tgt());
                if w <= 0.0 {
                    continue;
                }
                let mut acc = 0;
                let cumulative = members
                    .iter()
                    .map(|&i| {
                        acc += shards[i].offsets.len() as u64;
                        acc
                    })
                    .collect();
                slots.push(DirectionSlot {
                    direction,
                    shards: members,
                    cumulative,
                });
                slot_weights.push(w);
            }
            let positive = weights.weight(pool) > 0.0;
            if slots.is_empty() {
                if positive {
                    return Err(SamplingError::EmptyPoolWithPositiveWeight(pool));
                }
                continue;
            }
            let choose = WeightedIndex::new(&slot_weights).expect("positive direction weights");
            pools[pool.index()] = Some(PoolSampler { slots, choose });
        }
        let choose_pool =
            WeightedIndex::new(weights.as_array()).map_err(|_| SamplingError::InvalidWeights(weights.as_array()))?;
        Ok(BatchScheduler {
            shards,
            pools,
            choose_pool,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Directions the scheduler can emit for `pool`, in sampling order.
    pub fn directions(&self, pool: OriginPool) -> Vec<&Direction> {
        self.pools[pool.index()]
            .iter()
            .flat_map(|p| p.slots.iter().map(|s| &s.direction))
            .collect()
    }

    /// Draws one pair.
    pub fn next_pair(&mut self) -> Result<SentencePair, SamplingError> {
        let pool_idx = self.choose_pool.sample(&mut self.rng);
        let pool = self.pools[pool_idx]
            .as_ref()
            .expect("pools with positive weight are populated");
        let slot = &pool.slots[pool.choose.sample(&mut self.rng)];
        let k = self.rng.gen_range(0..slot.total());
        let pos = slot.cumulative.partition_point(|&c| c <= k);
        let before = if pos == 0 { 0 } else { slot.cumulative[pos - 1] };
        let shard = slot.shards[pos];
        Ok(self.shards[shard].read((k - before) as usize)?)
    }

    pub fn next_batch(&mut self) -> Result<Batch, SamplingError> {
        let pairs = (0..self.batch_size)
            .map(|_| self.next_pair())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Batch::from_pairs(pairs))
    }
}

pub fn make_scheduler(
    manifest: &CorpusManifest,
    dist: &SamplingDistribution,
    weights: MixtureWeights,
    batch_size: usize,
    seed: u64,
) -> Result<BatchScheduler, SamplingError> {
    BatchScheduler::new(manifest, dist, weights, batch_size, seed)
}
