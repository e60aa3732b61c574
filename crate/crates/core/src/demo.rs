//! A self-contained run of the whole pipeline on cipher languages.
//!
//! English text is generated from the toy vocabulary, the "foreign"
//! languages are seeded word ciphers of it, and every translation step uses
//! the cipher translator, optionally with noise on the non-English direct
//! directions. Every output is a deterministic function of the seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::augmentation::{self, AugmentError};
use crate::bleu::{corpus_bleu, evaluate_directions, BleuError, DevSet, ScoreMatrix};
use crate::cleaning::{filter_manifest, FilterConfig, FilterJob, FilterRunError, RejectReason};
use crate::corpus::{corpus_stats, write_shard, CorpusError, CorpusManifest, Direction, LangCode, ShardEntry};
use crate::routing::{build_routing_table, route_translate, RoutingError, RoutingTable, Strategy};
use crate::sampling::{composition_tsv, language_distribution, make_scheduler, MixtureWeights, SamplingError};
use crate::tokenizer::{SubwordTokenizer, BASIC_WORDS};
use crate::translator::{make_cipher_translator, with_noise, CipherLanguage, DecodingConfig, TranslateError};

pub const DEMO_LANGUAGES: [&str; 3] = ["hr", "hu", "et"];

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Filter(#[from] FilterRunError),
    #[error("{0}")]
    Augment(#[from] AugmentError),
    #[error("{0}")]
    Sampling(#[from] SamplingError),
    #[error("{0}")]
    Bleu(#[from] BleuError),
    #[error("{0}")]
    Routing(#[from] RoutingError),
    #[error("{0}")]
    Translate(#[from] TranslateError),
}

#[derive(Debug, Clone)]
pub struct DemoConfig {
    pub seed: u64,
    /// Corruption rate on direct non-English directions.
    pub direct_noise: f64,
    pub mono_lines: usize,
    pub bitext_lines: usize,
    pub dev_lines: usize,
    pub batches: usize,
    pub batch_size: usize,
}

impl DemoConfig {
    pub fn new(seed: u64) -> Self {
        DemoConfig {
            seed,
            direct_noise: 0.0,
            mono_lines: 300,
            bitext_lines: 200,
            dev_lines: 40,
            batches: 20,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub routing: RoutingTable,
    pub devtest: ScoreMatrix,
    /// `key value` rows, also written to `summary.tsv`.
    pub summary: Vec<(String, String)>,
}

fn write(path: &Path, text: &str) -> Result<(), DemoError> {
    fs::write(path, text).map_err(|source| DemoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn mkdir(path: &Path) -> Result<(), DemoError> {
    fs::create_dir_all(path).map_err(|source| DemoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(3..=12);
    (0..n)
        .map(|_| *BASIC_WORDS.choose(rng).expect("vocabulary is not empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Damages a few bitext lines so that the filter has something to remove.
fn damage(i: usize, src: &mut String, tgt: &mut String) {
    match i % 25 {
        3 => tgt.clear(),
        7 => src.insert_str(0, "[UNK] "),
        11 => *tgt = [tgt.as_str(); 4].join(" "),
        17 => *src = vec!["the"; 1025].join(" "),
        _ => {}
    }
}

fn lang(code: &str) -> LangCode {
    LangCode::new(code).expect("valid demo language")
}

pub fn run_demo(out_dir: &Path, cfg: &DemoConfig) -> Result<DemoReport, DemoError> {
    let en = LangCode::english();
    let langs: Vec<LangCode> = DEMO_LANGUAGES.iter().map(|c| lang(c)).collect();
    let ciphers: Vec<CipherLanguage> = langs.iter().map(|l| CipherLanguage::derive(l.clone(), cfg.seed)).collect();
    let perfect = make_cipher_translator(ciphers.clone())?;
    let tok = SubwordTokenizer::builtin();
    let dcfg = DecodingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut summary: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| summary.push((k.to_string(), v));

    put("seed", cfg.seed.to_string());
    put("languages", DEMO_LANGUAGES.join(","));
    put("direct_noise", format!("{}", cfg.direct_noise));

    // Synthetic corpora.
    let data = out_dir.join("data");
    mkdir(&data)?;
    let mono: Vec<String> = (0..cfg.mono_lines).map(|_| sentence(&mut rng)).collect();
    write(&data.join("mono.en"), &(mono.join("\n") + "\n"))?;
    let mut raw = CorpusManifest::new(&data);
    for c in &ciphers {
        let mut pairs = Vec::with_capacity(cfg.bitext_lines);
        for i in 0..cfg.bitext_lines {
            let english = sentence(&mut rng);
            let (mut src, mut tgt) = (c.encode(&english), english);
            damage(i, &mut src, &mut tgt);
            pairs.push((src, tgt));
        }
        let name = format!("{}-en.tsv", c.lang());
        let n = write_shard(&data.join(&name), pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())))?;
        raw.push(ShardEntry {
            path: PathBuf::from(name),
            direction: Direction::new(c.lang().clone(), en.clone())?,
            origin: crate::OriginPool::Bitext,
            declared_line_count: n,
        })?;
    }
    raw.save(&data.join("manifest.tsv"))?;
    put("mono_lines", mono.len().to_string());
    put("bitext_pairs", (cfg.bitext_lines * ciphers.len()).to_string());

    // Filtering.
    let filtered_dir = out_dir.join("filtered");
    let job = FilterJob {
        config: FilterConfig::default(),
        tag: false,
        rejects_dir: Some(filtered_dir.join("rejects")),
    };
    let (filtered, filter_report) = filter_manifest(&raw, &job, &tok, &filtered_dir)?;
    write(&filtered_dir.join("report.tsv"), &filter_report.to_tsv())?;
    put("filter_kept", filter_report.kept().to_string());
    for r in [
        RejectReason::Empty,
        RejectReason::TooLong,
        RejectReason::ContainsUnk,
        RejectReason::RatioExceeded,
    ] {
        put(&format!("filter_rejected_{r}"), filter_report.rejected(r).to_string());
    }

    // Augmentation, all three ways.
    let mono_path = data.join("mono.en");
    let mut plan = augmentation::plan_backtranslation(&mono_path, &langs)?;
    plan.extend(augmentation::plan_dual_pseudo(
        &mono_path,
        &augmentation::all_ordered_pairs(&langs),
    )?);
    let tri_src = &filtered.shards()[0];
    plan.extend(augmentation::plan_triangulation(
        &filtered.resolve(tri_src),
        &tri_src.direction,
        None,
        Some(&langs[1]),
    )?);
    let aug_dir = out_dir.join("augment");
    let augmented = augmentation::run_plan(&plan, &perfect, &dcfg, &aug_dir)?;
    put("augment_tasks", plan.len().to_string());
    put("augment_shards", augmented.shards().len().to_string());
    put(
        "augment_pairs",
        augmented.shards().iter().map(|s| s.declared_line_count).sum::<u64>().to_string(),
    );

    // Training mixture and sampling.
    let mut train = CorpusManifest::new(out_dir);
    for (sub, m) in [("filtered", &filtered), ("augment", &augmented)] {
        for s in m.shards() {
            train.push(ShardEntry {
                path: Path::new(sub).join(&s.path),
                ..s.clone()
            })?;
        }
    }
    train.save(&out_dir.join("train.tsv"))?;
    let stats = corpus_stats(&train)?;
    write(&out_dir.join("stats.tsv"), &stats.to_tsv())?;
    let dist = language_distribution(&stats, 5.0)?;
    for (l, q) in dist.iter() {
        put(&format!("q_{l}"), format!("{q:.6}"));
    }
    let mut scheduler = make_scheduler(&train, &dist, MixtureWeights::BITEXT_FOCUSED, cfg.batch_size, cfg.seed)?;
    let batches = (0..cfg.batches)
        .map(|_| scheduler.next_batch().map(|b| b.composition))
        .collect::<Result<Vec<_>, _>>()?;
    write(&out_dir.join("sample.tsv"), &composition_tsv(&batches))?;
    put("sample_batches", batches.len().to_string());

    // Routing on a validation split, then routed decoding of a test split.
    let mut all_langs = langs.clone();
    all_langs.push(en.clone());
    let directions = augmentation::all_ordered_pairs(&all_langs);
    let non_english: Vec<Direction> = directions.iter().filter(|d| !d.touches(&en)).cloned().collect();
    let translator = with_noise(perfect.clone(), cfg.direct_noise, cfg.seed)?.only_directions(non_english);
    let mut split = || -> BTreeMap<Direction, DevSet> {
        let english: Vec<String> = (0..cfg.dev_lines).map(|_| sentence(&mut rng)).collect();
        directions
            .iter()
            .map(|d| {
                let set = DevSet {
                    sources: english.iter().map(|s| perfect.from_english(d.src(), s)).collect(),
                    references: english.iter().map(|s| perfect.from_english(d.tgt(), s)).collect(),
                };
                (d.clone(), set)
            })
            .collect()
    };
    let valid = split();
    let devtest = split();
    let direct = evaluate_directions(&translator, &valid, &dcfg, &Strategy::Direct, &tok, &en)?;
    let pivot = evaluate_directions(&translator, &valid, &dcfg, &Strategy::PivotVia(en.clone()), &tok, &en)?;
    let routing = build_routing_table(&direct, &pivot, &en)?;
    let route_dir = out_dir.join("routing");
    mkdir(&route_dir)?;
    write(&route_dir.join("valid_direct.tsv"), &direct.to_tsv())?;
    write(&route_dir.join("valid_pivot.tsv"), &pivot.to_tsv())?;
    write(&route_dir.join("table.tsv"), &routing.to_tsv())?;

    let mut routed = ScoreMatrix::new(en.clone());
    for (d, set) in &devtest {
        let hyps = route_translate(&translator, &routing, &set.sources, d, &dcfg)?;
        routed.insert(d.clone(), corpus_bleu(&hyps, &set.references, &tok)?);
    }
    write(&route_dir.join("devtest_routed.tsv"), &routed.to_tsv())?;

    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    put("routing_pivot_fraction", format!("{:.4}", routing.pivot_fraction()));
    put("valid_direct_avg_all", f(direct.avg_all()));
    put("valid_pivot_avg_all", f(pivot.avg_all()));
    put("valid_hybrid_avg_all", f(routing.hybrid_average()));
    put("devtest_avg_x_en", f(routed.avg_into_hub()));
    put("devtest_avg_en_y", f(routed.avg_out_of_hub()));
    put("devtest_avg_x_y", f(routed.avg_non_hub()));
    put("devtest_avg_all", f(routed.avg_all()));

    let mut text = String::from("# key\tvalue\n");
    for (k, v) in &summary {
        let _ = writeln!(text, "{k}\t{v}");
    }
    write(&out_dir.join("summary.tsv"), &text)?;
    Ok(DemoReport {
        routing,
        devtest: routed,
        summary,
    })
}
