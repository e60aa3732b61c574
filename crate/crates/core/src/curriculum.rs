//! Progressive-learning stages, abstract model-shape growth and checkpoint
//! averaging.
//!
//! A schedule is an ordered list of stages. Between consecutive stages the
//! data may only get cleaner, the direction set may only shrink, the encoder
//! may only get deeper and the decoder must stay the same depth. Mixture
//! weights may change freely at a stage boundary.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::cleaning::RATIO_LADDER;
use crate::corpus::Direction;
use crate::sampling::MixtureWeights;

#[derive(Debug, Error, PartialEq)]
pub enum CurriculumError {
    #[error("ratio limit {0} is not on the ladder {RATIO_LADDER:?}")]
    RatioOffLadder(f64),
    #[error("selected direction set is empty")]
    EmptySelection,
    #[error("layer counts must be at least 1")]
    ZeroLayers,
    #[error("encoder growth must add at least one layer")]
    NoGrowth,
    #[error("no checkpoints to average")]
    EmptyList,
    #[error("checkpoint {index} has {found} values, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("schedule has no stages")]
    EmptySchedule,
    #[error("invalid transition {from} -> {to}: {}", join(.violations))]
    InvalidSchedule {
        from: String,
        to: String,
        violations: Vec<Violation>,
    },
    #[error("schedule line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataTier {
    Noisy,
    /// Filtered at this length-ratio limit.
    Clean(f64),
}

impl DataTier {
    /// Effective ratio limit; the noisy tier is unbounded.
    fn limit(self) -> f64 {
        match self {
            DataTier::Noisy => f64::INFINITY,
            DataTier::Clean(r) => r,
        }
    }
}

impl fmt::Display for DataTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataTier::Noisy => f.write_str("noisy"),
            DataTier::Clean(r) => write!(f, "clean:{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DirectionSet {
    All,
    Selected(BTreeSet<Direction>),
}

impl fmt::Display for DirectionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirectionSet::All => f.write_str("all"),
            DirectionSet::Selected(set) => {
                let names: Vec<String> = set.iter().map(|d| d.to_string()).collect();
                f.write_str(&names.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageDescriptor {
    pub stage_id: String,
    pub data_tier: DataTier,
    pub direction_set: DirectionSet,
    pub mixture: MixtureWeights,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
}

impl StageDescriptor {
    pub fn new(
        stage_id: &str,
        data_tier: DataTier,
        direction_set: DirectionSet,
        mixture: MixtureWeights,
        encoder_layers: usize,
        decoder_layers: usize,
    ) -> Result<Self, CurriculumError> {
        if let DataTier::Clean(r) = data_tier {
            if !RATIO_LADDER.contains(&r) {
                return Err(CurriculumError::RatioOffLadder(r));
            }
        }
        if matches!(&direction_set, DirectionSet::Selected(s) if s.is_empty()) {
            return Err(CurriculumError::EmptySelection);
        }
        if encoder_layers == 0 || decoder_layers == 0 {
            return Err(CurriculumError::ZeroLayers);
        }
        Ok(StageDescriptor {
            stage_id: stage_id.to_string(),
            data_tier,
            direction_set,
            mixture,
            encoder_layers,
            decoder_layers,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DataLoosened { from: DataTier, to: DataTier },
    DirectionsGrew { added: Vec<String> },
    EncoderShrank { from: usize, to: usize },
    DecoderChanged { from: usize, to: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DataLoosened { from, to } => write!(f, "data tier loosened from {from} to {to}"),
            Violation::DirectionsGrew { added } => write!(f, "direction set grew by {}", added.join(",")),
            Violation::EncoderShrank { from, to } => write!(f, "encoder shrank from {from} to {to} layers"),
            Violation::DecoderChanged { from, to } => write!(f, "decoder depth changed from {from} to {to}"),
        }
    }
}

/// Every rule the step `from → to` breaks; empty when the step is allowed.
pub fn validate_transition(from: &StageDescriptor, to: &StageDescriptor) -> Vec<Violation> {
    let mut out = Vec::new();
    if to.data_tier.limit().partial_cmp(&from.data_tier.limit()) == Some(Ordering::Greater) {
        out.push(Violation::DataLoosened {
            from: from.data_tier,
            to: to.data_tier,
        });
    }
    match (&from.direction_set, &to.direction_set) {
        (DirectionSet::All, _) => {}
        (DirectionSet::Selected(_), DirectionSet::All) => out.push(Violation::DirectionsGrew {
            added: vec!["all".to_string()],
        }),
        (DirectionSet::Selected(a), DirectionSet::Selected(b)) => {
            let added: Vec<String> = b.difference(a).map(|d| d.to_string()).collect();
            if !added.is_empty() {
                out.push(Violation::DirectionsGrew { added });
            }
        }
    }
    if to.encoder_layers < from.encoder_layers {
        out.push(Violation::EncoderShrank {
            from: from.encoder_layers,
            to: to.encoder_layers,
        });
    }
    if to.decoder_layers != from.decoder_layers {
        out.push(Violation::DecoderChanged {
            from: from.decoder_layers,
            to: to.decoder_layers,
        });
    }
    out
}

/// Checks every consecutive pair and returns the stages unchanged.
pub fn stage_schedule(stages: Vec<StageDescriptor>) -> Result<Vec<StageDescriptor>, CurriculumError> {
    if stages.is_empty() {
        return Err(CurriculumError::EmptySchedule);
    }
    for w in stages.windows(2) {
        let violations = validate_transition(&w[0], &w[1]);
        if !violations.is_empty() {
            return Err(CurriculumError::InvalidSchedule {
                from: w[0].stage_id.clone(),
                to: w[1].stage_id.clone(),
                violations,
            });
        }
    }
    Ok(stages)
}

/// Noisy data on all directions with a 24-layer encoder, then clean data on
/// the selected directions, then the encoder deepened to 36 layers. The
/// mixture moves from uniform to bitext-focused after the first stage.
pub fn progressive_ladder(
    selected: BTreeSet<Direction>,
    clean_ratio: f64,
) -> Result<Vec<StageDescriptor>, CurriculumError> {
    let stages = vec![
        StageDescriptor::new("noisy-all", DataTier::Noisy, DirectionSet::All, MixtureWeights::UNIFORM, 24, 12)?,
        StageDescriptor::new(
            "clean-selected",
            DataTier::Clean(clean_ratio),
            DirectionSet::Selected(selected.clone()),
            MixtureWeights::BITEXT_FOCUSED,
            24,
            12,
        )?,
        StageDescriptor::new(
            "deep-encoder",
            DataTier::Clean(clean_ratio),
            DirectionSet::Selected(selected),
            MixtureWeights::BITEXT_FOCUSED,
            36,
            12,
        )?,
    ];
    stage_schedule(stages)
}

/// Schedule file: one stage per line,
/// `stage_id  tier  directions  lambdas  encoder_layers  decoder_layers`,
/// with tier `noisy` or `clean:R`, directions `all` or `hr-en,en-hr`, and
/// lambdas `0.33,0.33,0.33`.
pub fn parse_schedule(text: &str) -> Result<Vec<StageDescriptor>, CurriculumError> {
    let mut stages = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| CurriculumError::Malformed {
            line: idx + 1,
            reason,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad(format!("expected 6 tab-separated fields, found {}", f.len())));
        }
        let tier = match f[1].split_once(':') {
            None if f[1] == "noisy" => DataTier::Noisy,
            Some(("clean", r)) => DataTier::Clean(r.parse().map_err(|_| bad(format!("bad ratio {r:?}")))?),
            _ => return Err(bad(format!("bad data tier {:?}", f[1]))),
        };
        let dirs = if f[2] == "all" {
            DirectionSet::All
        } else {
            let set = f[2]
                .split(',')
                .map(|d| d.trim().parse::<Direction>())
                .collect::<Result<BTreeSet<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            DirectionSet::Selected(set)
        };
        let mixture: MixtureWeights = f[3].parse().map_err(bad)?;
        let layers = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad layer count {s:?}")));
        let stage = StageDescriptor::new(f[0], tier, dirs, mixture, layers(f[4])?, layers(f[5])?)
            .map_err(|e| bad(e.to_string()))?;
        stages.push(stage);
    }
    Ok(stages)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerProvenance {
    /// Copied from the model trained in `from_stage`.
    Inherited { from_stage: String },
    /// Randomly initialized when `stage` deepened the encoder.
    FreshRandom { stage: String },
}

/// Abstract stand-in for model parameters: layer counts and where each
/// encoder layer's weights came from, bottom layer first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelShape {
    pub encoder: Vec<LayerProvenance>,
    pub decoder_layers: usize,
}

impl ModelShape {
    /// A model whose layers all come from one checkpoint.
    pub fn initialized_from(stage: &str, encoder_layers: usize, decoder_layers: usize) -> Self {
        ModelShape {
            encoder: vec![
                LayerProvenance::Inherited {
                    from_stage: stage.to_string()
                };
                encoder_layers
            ],
            decoder_layers,
        }
    }

    pub fn encoder_layers(&self) -> usize {
        self.encoder.len()
    }

    pub fn inherited_count(&self) -> usize {
        self.encoder
            .iter()
            .filter(|l| matches!(l, LayerProvenance::Inherited { .. }))
            .count()
    }
}

/// Stacks `extra` randomly initialized layers on top of the encoder.
pub fn grow_encoder(shape: &ModelShape, extra: usize, stage_id: &str) -> Result<ModelShape, CurriculumError> {
    if extra == 0 {
        return Err(CurriculumError::NoGrowth);
    }
    let mut grown = shape.clone();
    grown.encoder.extend(std::iter::repeat_n(
        LayerProvenance::FreshRandom {
            stage: stage_id.to_string(),
        },
        extra,
    ));
    Ok(grown)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

/// Elementwise mean. Each position is summed in sorted order from its
/// minimum, so the result does not depend on checkpoint order, equals the
/// input when all checkpoints agree, and stays within `[min, max]`.
pub fn average_checkpoints(checkpoints: &[ParamVector]) -> Result<ParamVector, CurriculumError> {
    let first = checkpoints.first().ok_or(CurriculumError::EmptyList)?;
    let len = first.0.len();
    for (index, c) in checkpoints.iter().enumerate() {
        if c.0.len() != len {
            return Err(CurriculumError::LengthMismatch {
                index,
                expected: len,
                found: c.0.len(),
            });
        }
    }
    let n = checkpoints.len() as f64;
    let mut column = Vec::with_capacity(checkpoints.len());
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        column.clear();
        column.extend(checkpoints.iter().map(|c| c.0[i]));
        column.sort_by(f64::total_cmp);
        let lo = column[0];
        let hi = column[column.len() - 1];
        let offset: f64 = column.iter().map(|v| v - lo).sum();
        out.push((lo + offset / n).clamp(lo, hi));
    }
    Ok(ParamVector(out))
}
