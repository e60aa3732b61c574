//! Hybrid direct/pivot decoding.
//!
//! A routing table is built from validation scores: a direction is decoded
//! directly when its direct BLEU is at least its pivot BLEU, and through the
//! pivot language otherwise. Directions into or out of the pivot language
//! cannot be pivoted and are always direct.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::bleu::ScoreMatrix;
use crate::corpus::{Direction, LangCode};
use crate::translator::{pivot_translate, translate, DecodingConfig, TranslateError, Translator};

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("direct and pivot scores cover different directions (only direct: {only_direct:?}, only pivot: {only_pivot:?})")]
    DirectionSetMismatch {
        only_direct: Vec<String>,
        only_pivot: Vec<String>,
    },
    #[error("direction {0} is not in the routing table")]
    UnknownDirection(Direction),
    #[error("malformed routing table at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("{0}")]
    Translate(#[from] TranslateError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Strategy {
    Direct,
    PivotVia(LangCode),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Direct => f.write_str("direct"),
            Strategy::PivotVia(p) => write!(f, "pivot:{p}"),
        }
    }
}

/// `direct` or `pivot:LANG`.
impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "direct" => Ok(Strategy::Direct),
            Some(("pivot", lang)) => lang
                .parse()
                .map(Strategy::PivotVia)
                .map_err(|e| e.to_string()),
            _ => Err(format!("unknown strategy {s:?}, expected direct or pivot:LANG")),
        }
    }
}

/// Decodes with `strategy`, falling back to direct decoding for directions
/// that touch the pivot language.
pub fn translate_with_strategy<T: Translator + ?Sized>(
    t: &T,
    sentences: &[String],
    dir: &Direction,
    strategy: &Strategy,
    cfg: &DecodingConfig,
) -> Result<Vec<String>, TranslateError> {
    match strategy {
        Strategy::PivotVia(p) if !dir.touches(p) => {
            Ok(pivot_translate(t, sentences, dir.src(), dir.tgt(), p, cfg)?.output)
        }
        _ => translate(t, sentences, dir, cfg),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub strategy: Strategy,
    pub bleu_direct: f64,
    pub bleu_pivot: f64,
}

impl RouteEntry {
    /// Validation BLEU of the chosen strategy.
    pub fn chosen_bleu(&self) -> f64 {
        match self.strategy {
            Strategy::Direct => self.bleu_direct,
            Strategy::PivotVia(_) => self.bleu_pivot,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoutingTable {
    entries: BTreeMap<Direction, RouteEntry>,
}

impl RoutingTable {
    pub fn get(&self, dir: &Direction) -> Option<&RouteEntry> {
        self.entries.get(dir)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Direction, &RouteEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Share of directions routed through a pivot.
    pub fn pivot_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let pivoted = self
            .entries
            .values()
            .filter(|e| matches!(e.strategy, Strategy::PivotVia(_)))
            .count();
        pivoted as f64 / self.entries.len() as f64
    }

    /// Mean validation BLEU of the chosen strategies.
    pub fn hybrid_average(&self) -> Option<f64> {
        (!self.entries.is_empty()).then(|| {
            self.entries.values().map(RouteEntry::chosen_bleu).sum::<f64>() / self.entries.len() as f64
        })
    }

    /// `src tgt strategy pivot_lang bleu_direct bleu_pivot`, `-` for no pivot.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# src\ttgt\tstrategy\tpivot_lang\tbleu_direct\tbleu_pivot\n");
        for (dir, e) in &self.entries {
            let (name, pivot) = match &e.strategy {
                Strategy::Direct => ("direct", "-".to_string()),
                Strategy::PivotVia(p) => ("pivot", p.to_string()),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{name}\t{pivot}\t{}\t{}",
                dir.src(),
                dir.tgt(),
                e.bleu_direct,
                e.bleu_pivot
            );
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self, RoutingError> {
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| RoutingError::Malformed {
                line: idx + 1,
                reason,
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", f.len())));
            }
            let src: LangCode = f[0].parse().map_err(|e: crate::corpus::CorpusError| bad(e.to_string()))?;
            let tgt: LangCode = f[1].parse().map_err(|e: crate::corpus::CorpusError| bad(e.to_string()))?;
            let dir = Direction::new(src, tgt).map_err(|e| bad(e.to_string()))?;
            let strategy = match (f[2], f[3]) {
                ("direct", "-") => Strategy::Direct,
                ("pivot", p) => {
                    let p: LangCode = p.parse().map_err(|e: crate::corpus::CorpusError| bad(e.to_string()))?;
                    if dir.touches(&p) {
                        return Err(bad(format!("pivot {p} is an endpoint of {dir}")));
                    }
                    Strategy::PivotVia(p)
                }
                (s, p) => return Err(bad(format!("bad strategy {s:?} / pivot {p:?}"))),
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad score {s:?}")));
            let entry = RouteEntry {
                strategy,
                bleu_direct: num(f[4])?,
                bleu_pivot: num(f[5])?,
            };
            if entries.insert(dir.clone(), entry).is_some() {
                return Err(bad(format!("{dir} listed twice")));
            }
        }
        Ok(RoutingTable { entries })
    }
}

/// Picks a strategy per direction from validation scores. Ties go to direct
/// decoding. For directions touching `pivot_lang` the pivot column is
/// meaningless and is recorded equal to the direct score.
pub fn build_routing_table(
    direct: &ScoreMatrix,
    pivot: &ScoreMatrix,
    pivot_lang: &LangCode,
) -> Result<RoutingTable, RoutingError> {
    let d: BTreeSet<&Direction> = direct.iter().map(|(d, _)| d).collect();
    let p: BTreeSet<&Direction> = pivot.iter().map(|(d, _)| d).collect();
    if d != p {
        return Err(RoutingError::DirectionSetMismatch {
            only_direct: d.difference(&p).map(|x| x.to_string()).collect(),
            only_pivot: p.difference(&d).map(|x| x.to_string()).collect(),
        });
    }
    let mut entries = BTreeMap::new();
    for (dir, ds) in direct.iter() {
        let bleu_direct = ds.score;
        let entry = if dir.touches(pivot_lang) {
            RouteEntry {
                strategy: Strategy::Direct,
                bleu_direct,
                bleu_pivot: bleu_direct,
            }
        } else {
            let bleu_pivot = pivot.get(dir).expect("same direction sets").score;
            let strategy = if bleu_direct >= bleu_pivot {
                Strategy::Direct
            } else {
                Strategy::PivotVia(pivot_lang.clone())
            };
            RouteEntry {
                strategy,
                bleu_direct,
                bleu_pivot,
            }
        };
        entries.insert(dir.clone(), entry);
    }
    Ok(RoutingTable { entries })
}

pub fn route_translate<T: Translator + ?Sized>(
    t: &T,
    table: &RoutingTable,
    sentences: &[String],
    dir: &Direction,
    cfg: &DecodingConfig,
) -> Result<Vec<String>, RoutingError> {
    let entry = table
        .get(dir)
        .ok_or_else(|| RoutingError::UnknownDirection(dir.clone()))?;
    Ok(translate_with_strategy(t, sentences, dir, &entry.strategy, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bleu::{BleuScore, BleuStats};
    use crate::translator::{make_cipher_translator, with_noise, CipherLanguage};

    fn score(v: f64) -> BleuScore {
        BleuScore {
            score: v,
            precisions: [1.0; 4],
            brevity_penalty: 1.0,
            stats: BleuStats::default(),
        }
    }

    fn matrices(rows: &[(&str, f64, f64)]) -> (ScoreMatrix, ScoreMatrix) {
        let mut d = ScoreMatrix::new(LangCode::english());
        let mut p = ScoreMatrix::new(LangCode::english());
        for (dir, a, b) in rows {
            d.insert(dir.parse().unwrap(), score(*a));
            p.insert(dir.parse().unwrap(), score(*b));
        }
        (d, p)
    }

    fn strategy_of(t: &RoutingTable, dir: &str) -> Strategy {
        t.get(&dir.parse().unwrap()).unwrap().strategy.clone()
    }

    #[test]
    fn rule_and_ties() {
        let (d, p) = matrices(&[("hr-hu", 20.0, 25.0), ("hu-hr", 25.0, 25.0), ("en-hr", 10.0, 90.0)]);
        let t = build_routing_table(&d, &p, &LangCode::english()).unwrap();
        assert_eq!(strategy_of(&t, "hr-hu"), Strategy::PivotVia(LangCode::english()));
        assert_eq!(strategy_of(&t, "hu-hr"), Strategy::Direct);
        assert_eq!(strategy_of(&t, "en-hr"), Strategy::Direct);
        assert_eq!(t.get(&"en-hr".parse().unwrap()).unwrap().bleu_pivot, 10.0);
        assert!((t.pivot_fraction() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_sets() {
        let (d, _) = matrices(&[("hr-hu", 1.0, 1.0)]);
        let (_, p) = matrices(&[("hu-hr", 1.0, 1.0)]);
        assert!(matches!(
            build_routing_table(&d, &p, &LangCode::english()),
            Err(RoutingError::DirectionSetMismatch { .. })
        ));
    }

    #[test]
    fn tsv_round_trip() {
        let (d, p) = matrices(&[("hr-hu", 20.5, 25.25), ("hu-hr", 25.0, 25.0)]);
        let t = build_routing_table(&d, &p, &LangCode::english()).unwrap();
        let text = t.to_tsv();
        assert!(text.contains("hr\thu\tpivot\ten\t20.5\t25.25\n"));
        assert!(text.contains("hu\thr\tdirect\t-\t25\t25\n"));
        assert_eq!(RoutingTable::parse_tsv(&text).unwrap(), t);
        assert!(RoutingTable::parse_tsv("hr\thu\tpivot\thr\t1\t2\n").is_err());
        assert!(RoutingTable::parse_tsv("hr\thu\tsideways\t-\t1\t2\n").is_err());
    }

    #[test]
    fn dispatch() {
        let ciphers = make_cipher_translator(vec![
            CipherLanguage::derive("hr".parse().unwrap(), 1),
            CipherLanguage::derive("hu".parse().unwrap(), 1),
        ])
        .unwrap();
        let noisy = with_noise(&ciphers, 1.0, 5)
            .unwrap()
            .only_directions(["hr-hu".parse().unwrap()]);
        let (d, p) = matrices(&[("hr-hu", 0.0, 100.0), ("hu-hr", 100.0, 100.0)]);
        let table = build_routing_table(&d, &p, &LangCode::english()).unwrap();
        let cfg = DecodingConfig::default();
        let input = vec![ciphers.from_english(&"hr".parse().unwrap(), "the cat sat")];
        let routed = route_translate(&noisy, &table, &input, &"hr-hu".parse().unwrap(), &cfg).unwrap();
        let pivoted =
            pivot_translate(&noisy, &input, &"hr".parse().unwrap(), &"hu".parse().unwrap(), &LangCode::english(), &cfg)
                .unwrap();
        assert_eq!(routed, pivoted.output);
        let direct = route_translate(&noisy, &table, &input, &"hu-hr".parse().unwrap(), &cfg).unwrap();
        assert_eq!(direct, translate(&noisy, &input, &"hu-hr".parse().unwrap(), &cfg).unwrap());
        assert!(matches!(
            route_translate(&noisy, &table, &input, &"hr-en".parse().unwrap(), &cfg),
            Err(RoutingError::UnknownDirection(_))
        ));
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("direct".parse::<Strategy>().unwrap(), Strategy::Direct);
        assert_eq!("pivot:en".parse::<Strategy>().unwrap(), Strategy::PivotVia(LangCode::english()));
        assert!("pivot".parse::<Strategy>().is_err());
        assert_eq!(Strategy::PivotVia(LangCode::english()).to_string(), "pivot:en");
    }
}
