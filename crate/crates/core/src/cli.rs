//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for I/O
//! failures (missing files, unreadable shards, failing translator commands).

use std::collections::{BTreeMap, BTreeSet};
use std::error::Error;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::augmentation::{self, AugmentationPlan, TaskKind};
use crate::bleu::{corpus_bleu, evaluate_directions, DevSet};
use crate::cleaning::{filter_manifest, FilterConfig, FilterJob, Script};
use crate::corpus::{
    corpus_stats, load_manifest, verify_counts, CorpusError, CorpusManifest, Direction, LangCode, PairReader,
};
use crate::curriculum::{parse_schedule, stage_schedule};
use crate::demo::{run_demo, DemoConfig};
use crate::routing::{build_routing_table, route_translate, RoutingTable, Strategy};
use crate::sampling::{composition_tsv, language_distribution, make_scheduler, MixtureWeights};
use crate::shuffle::{shuffle_with, ShuffleError, ShuffleOptions};
use crate::tokenizer::SubwordTokenizer;
use crate::translator::{
    make_cipher_translator, with_noise, CipherLanguage, DecodingConfig, ExecTranslator, TranslateError, Translator,
};

#[derive(Parser, Debug)]
#[command(name = "mtforge", version, about = "Corpus engineering for multilingual machine translation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-language and per-direction sentence counts.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        /// Recount shards and report declared counts that are wrong.
        #[arg(long)]
        verify: bool,
    },
    /// Filter every shard of a manifest.
    Filter(FilterArgs),
    /// Shuffle all shards into one file without holding them in memory.
    Shuffle {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256 << 20)]
        memory_budget: u64,
        #[arg(long)]
        scratch: Option<PathBuf>,
    },
    /// Draw batches with temperature and pool-mixture sampling.
    Sample(SampleArgs),
    /// Plan or run data augmentation.
    #[command(subcommand)]
    Augment(AugmentCommand),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Bleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Build or apply a direct/pivot routing table.
    #[command(subcommand)]
    Route(RouteCommand),
    /// Validate a stage schedule.
    #[command(subcommand)]
    Curriculum(CurriculumCommand),
    /// Run the whole pipeline on cipher languages.
    Demo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        direct_noise: f64,
    },
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    ratio: f64,
    #[arg(long, default_value_t = 1024)]
    max_words: usize,
    #[arg(long, default_value_t = 512)]
    max_tokens: usize,
    /// Required script per language, e.g. `sr=Cyrl`; repeatable.
    #[arg(long, value_parser = parse_script_rule)]
    script: Vec<(LangCode, Script)>,
    #[arg(long, default_value = "[UNK]")]
    unk: String,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Prefix kept sources with the target-language tag.
    #[arg(long)]
    tag: bool,
    /// Reject pairs without a `.langid` sidecar verdict.
    #[arg(long)]
    langid_required: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rejects: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    temperature: f64,
    #[arg(long, default_value = "0.6,0.2,0.2")]
    lambda: MixtureWeights,
    #[arg(long, default_value_t = 4096)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    batches: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Composition tallies go here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum AugmentCommand {
    /// Write an augmentation plan.
    Plan {
        #[arg(long, value_parser = parse_kind)]
        kind: TaskKind,
        /// English monolingual text (bt, dual).
        #[arg(long)]
        mono: Option<PathBuf>,
        /// Target languages for back-translation, or the language set whose
        /// ordered pairs make up a dual-pseudo plan.
        #[arg(long, value_delimiter = ',')]
        langs: Vec<LangCode>,
        /// Explicit dual-pseudo directions.
        #[arg(long, value_delimiter = ',')]
        pairs: Vec<Direction>,
        /// Bitext shard to triangulate.
        #[arg(long)]
        bitext: Option<PathBuf>,
        #[arg(long)]
        direction: Option<Direction>,
        #[arg(long)]
        new_src: Option<LangCode>,
        #[arg(long)]
        new_tgt: Option<LangCode>,
        #[arg(long, default_value_t = 0)]
        round: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute a plan.
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        translator: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        decoding: DecodingArgs,
    },
}

#[derive(Subcommand, Debug)]
enum RouteCommand {
    /// Score direct and pivot decoding on a dev manifest and pick per direction.
    Build {
        /// Manifest whose shards hold `source<TAB>reference` dev pairs.
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        translator: String,
        #[arg(long, default_value = "en")]
        pivot: LangCode,
        /// Corrupt direct decoding of directions that avoid the pivot.
        #[arg(long, default_value_t = 0.0)]
        direct_noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the direct and pivot score matrices here.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[command(flatten)]
        decoding: DecodingArgs,
    },
    /// Translate a file with the strategy the table picked.
    Translate {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        translator: String,
        #[arg(long)]
        direction: Direction,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        direct_noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        decoding: DecodingArgs,
    },
}

#[derive(Subcommand, Debug)]
enum CurriculumCommand {
    Check {
        #[arg(long)]
        schedule: PathBuf,
    },
}

#[derive(Args, Debug)]
struct DecodingArgs {
    #[arg(long, default_value_t = 4)]
    beam_size: usize,
    #[arg(long, default_value_t = 1.0)]
    length_penalty: f64,
}

impl DecodingArgs {
    fn config(&self) -> Result<DecodingConfig, TranslateError> {
        DecodingConfig::new(self.beam_size, self.length_penalty)
    }
}

fn parse_script_rule(s: &str) -> Result<(LangCode, Script), String> {
    let (lang, script) = s
        .split_once('=')
        .ok_or_else(|| format!("expected LANG=SCRIPT, got {s:?}"))?;
    Ok((
        lang.parse().map_err(|e: CorpusError| e.to_string())?,
        script.parse().map_err(|e: crate::cleaning::CleaningError| e.to_string())?,
    ))
}

fn parse_kind(s: &str) -> Result<TaskKind, String> {
    s.parse()
}

type BoxError = Box<dyn Error + Send + Sync>;

/// A failure that is the user's fault rather than the environment's.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl Error for Invalid {}

fn invalid(msg: impl Into<String>) -> BoxError {
    Box::new(Invalid(msg.into()))
}

/// 2 when anything in the error chain is an I/O failure, else 1.
fn exit_code(err: &(dyn Error + 'static)) -> i32 {
    let mut cur: Option<&(dyn Error + 'static)> = Some(err);
    while let Some(e) = cur {
        if e.is::<io::Error>()
            || matches!(e.downcast_ref::<CorpusError>(), Some(CorpusError::MissingFile(_)))
            || matches!(e.downcast_ref::<ShuffleError>(), Some(ShuffleError::InsufficientScratchSpace(_)))
            || matches!(e.downcast_ref::<TranslateError>(), Some(TranslateError::Exec { .. }))
        {
            return 2;
        }
        cur = e.source();
    }
    1
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Reports go to stdout, diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.as_ref())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), BoxError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_at(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_at(path, e))
}

fn io_at(path: &Path, e: io::Error) -> BoxError {
    Box::new(CorpusError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>, BoxError> {
    let file = File::open(path).map_err(|e| io_at(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|l| l.map_err(|e| io_at(path, e)))
        .collect()
}

fn tokenizer(vocab: Option<&Path>) -> Result<SubwordTokenizer, BoxError> {
    Ok(match vocab {
        Some(p) => SubwordTokenizer::from_vocab_file(p)?,
        None => SubwordTokenizer::builtin(),
    })
}

/// `cipher:SEED` builds seeded ciphers for every non-English language in
/// `langs`; `exec:CMD` runs an external program.
fn make_translator<'a>(
    spec: &str,
    langs: impl IntoIterator<Item = &'a LangCode>,
) -> Result<Box<dyn Translator>, BoxError> {
    if let Some(seed) = spec.strip_prefix("cipher:") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| invalid(format!("--translator: bad cipher seed {seed:?}")))?;
        let en = LangCode::english();
        let set: BTreeSet<&LangCode> = langs.into_iter().filter(|l| **l != en).collect();
        let ciphers = set
            .into_iter()
            .map(|l| CipherLanguage::derive(l.clone(), seed))
            .collect();
        Ok(Box::new(make_cipher_translator(ciphers)?))
    } else if let Some(cmd) = spec.strip_prefix("exec:") {
        Ok(Box::new(ExecTranslator::new(cmd)?))
    } else {
        Err(invalid(format!(
            "--translator: expected cipher:SEED or exec:CMD, got {spec:?}"
        )))
    }
}

fn langs_of<'a>(dirs: impl IntoIterator<Item = &'a Direction>) -> Vec<LangCode> {
    dirs.into_iter()
        .flat_map(|d| [d.src().clone(), d.tgt().clone()])
        .collect()
}

/// Wraps `t` with noise on directions that avoid `pivot`.
fn with_direct_noise(
    t: Box<dyn Translator>,
    rate: f64,
    seed: u64,
    pivot: &LangCode,
    dirs: &[Direction],
) -> Result<Box<dyn Translator>, BoxError> {
    if rate == 0.0 {
        return Ok(t);
    }
    let noisy: Vec<Direction> = dirs.iter().filter(|d| !d.touches(pivot)).cloned().collect();
    Ok(Box::new(with_noise(t, rate, seed)?.only_directions(noisy)))
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), BoxError> {
    match command {
        Command::Stats { manifest, verify } => {
            let m = load_manifest(&manifest)?;
            out.write_all(corpus_stats(&m)?.to_tsv().as_bytes())?;
            if verify {
                let mismatches = verify_counts(&m)?;
                for mm in &mismatches {
                    writeln!(out, "# count mismatch\t{}\t{}\t{}", mm.shard_id, mm.declared, mm.actual)?;
                }
            }
        }
        Command::Filter(a) => {
            let m = load_manifest(&a.manifest)?;
            let config = FilterConfig {
                max_words: a.max_words,
                max_tokens: a.max_tokens,
                length_ratio_limit: a.ratio,
                unk_token: a.unk,
                script_rules: a.script.into_iter().collect(),
                langid_required: a.langid_required,
            };
            let job = FilterJob {
                config,
                tag: a.tag,
                rejects_dir: a.rejects,
            };
            let tok = tokenizer(a.vocab.as_deref())?;
            let (_, report) = filter_manifest(&m, &job, &tok, &a.out)?;
            out.write_all(report.to_tsv().as_bytes())?;
        }
        Command::Shuffle {
            manifest,
            seed,
            out: out_path,
            memory_budget,
            scratch,
        } => {
            let m = load_manifest(&manifest)?;
            let opts = ShuffleOptions {
                seed,
                memory_budget,
                scratch_dir: scratch,
            };
            let report = shuffle_with(&m, &opts, &out_path)?;
            writeln!(out, "seed\t{seed}\nlines\t{}\nbuckets\t{}", report.lines, report.buckets)?;
        }
        Command::Sample(a) => {
            let m = load_manifest(&a.manifest)?;
            let stats = corpus_stats(&m)?;
            let dist = language_distribution(&stats, a.temperature)?;
            let mut scheduler = make_scheduler(&m, &dist, a.lambda, a.batch_size, a.seed)?;
            let batches = (0..a.batches)
                .map(|_| scheduler.next_batch().map(|b| b.composition))
                .collect::<Result<Vec<_>, _>>()?;
            let mut text = format!("# seed\t{}\n# temperature\t{}\n# lambda\t{}\n", a.seed, a.temperature, a.lambda);
            for (lang, q) in dist.iter() {
                text.push_str(&format!("# q\t{lang}\t{q:.6}\n"));
            }
            text.push_str(&composition_tsv(&batches));
            match a.report {
                Some(p) => write_file(&p, &text)?,
                None => out.write_all(text.as_bytes())?,
            }
        }
        Command::Augment(AugmentCommand::Plan {
            kind,
            mono,
            langs,
            pairs,
            bitext,
            direction,
            new_src,
            new_tgt,
            round,
            out: plan_path,
        }) => {
            let need = |p: Option<PathBuf>, flag: &str| p.ok_or_else(|| invalid(format!("--{flag} is required for --kind {kind}")));
            let plan = match kind {
                TaskKind::BackTranslation => augmentation::plan_backtranslation(&absolute(&need(mono, "mono")?)?, &langs)?,
                TaskKind::DualPseudo => {
                    let dirs = if pairs.is_empty() { augmentation::all_ordered_pairs(&langs) } else { pairs };
                    augmentation::plan_dual_pseudo(&absolute(&need(mono, "mono")?)?, &dirs)?
                }
                TaskKind::Triangulation => {
                    let dir = direction.ok_or_else(|| invalid("--direction is required for --kind tri"))?;
                    augmentation::plan_triangulation(
                        &absolute(&need(bitext, "bitext")?)?,
                        &dir,
                        new_src.as_ref(),
                        new_tgt.as_ref(),
                    )?
                }
            };
            let plan = plan.with_round(round);
            write_file(&plan_path, &plan.to_tsv())?;
            writeln!(out, "tasks\t{}", plan.len())?;
        }
        Command::Augment(AugmentCommand::Run {
            plan,
            translator,
            out: out_dir,
            decoding,
        }) => {
            let plan = AugmentationPlan::load(&plan)?;
            let needed = plan.needed_directions();
            let t = make_translator(&translator, &langs_of(&needed))?;
            let manifest = augmentation::run_plan(&plan, &t, &decoding.config()?, &out_dir)?;
            for s in manifest.shards() {
                writeln!(out, "{}\t{}\t{}\t{}", s.path.display(), s.direction, s.origin, s.declared_line_count)?;
            }
        }
        Command::Bleu { hyp, reference, vocab } => {
            let tok = tokenizer(vocab.as_deref())?;
            let score = corpus_bleu(&read_lines(&hyp)?, &read_lines(&reference)?, &tok)?;
            writeln!(out, "{}", score.tsv_line())?;
        }
        Command::Route(RouteCommand::Build {
            dev,
            translator,
            pivot,
            direct_noise,
            seed,
            vocab,
            out: table_path,
            scores,
            decoding,
        }) => {
            let m = load_manifest(&dev)?;
            let devsets = read_devsets(&m)?;
            let dirs: Vec<Direction> = devsets.keys().cloned().collect();
            let mut langs = langs_of(&dirs);
            langs.push(pivot.clone());
            let t = make_translator(&translator, &langs)?;
            let t = with_direct_noise(t, direct_noise, seed, &pivot, &dirs)?;
            let tok = tokenizer(vocab.as_deref())?;
            let cfg = decoding.config()?;
            let direct = evaluate_directions(&t, &devsets, &cfg, &Strategy::Direct, &tok, &pivot)?;
            let pivoted = evaluate_directions(&t, &devsets, &cfg, &Strategy::PivotVia(pivot.clone()), &tok, &pivot)?;
            let table = build_routing_table(&direct, &pivoted, &pivot)?;
            write_file(&table_path, &table.to_tsv())?;
            if let Some(dir) = scores {
                write_file(&dir.join("direct.tsv"), &direct.to_tsv())?;
                write_file(&dir.join("pivot.tsv"), &pivoted.to_tsv())?;
            }
            out.write_all(table.to_tsv().as_bytes())?;
        }
        Command::Route(RouteCommand::Translate {
            table,
            translator,
            direction,
            input,
            out: out_path,
            direct_noise,
            seed,
            decoding,
        }) => {
            let text = fs::read_to_string(&table).map_err(|e| io_at(&table, e))?;
            let table = RoutingTable::parse_tsv(&text)?;
            let entry = table
                .get(&direction)
                .ok_or_else(|| invalid(format!("--direction {direction} is not in the routing table")))?;
            let en = LangCode::english();
            let pivot = match &entry.strategy {
                Strategy::PivotVia(p) => p.clone(),
                Strategy::Direct => en,
            };
            let mut langs = langs_of([&direction]);
            langs.push(pivot.clone());
            let t = make_translator(&translator, &langs)?;
            let t = with_direct_noise(t, direct_noise, seed, &pivot, std::slice::from_ref(&direction))?;
            let sentences = read_lines(&input)?;
            let hyps = route_translate(&t, &table, &sentences, &direction, &decoding.config()?)?;
            let mut body = hyps.join("\n");
            if !hyps.is_empty() {
                body.push('\n');
            }
            write_file(&out_path, &body)?;
            writeln!(out, "{}\t{}\t{}", direction, entry.strategy, hyps.len())?;
        }
        Command::Curriculum(CurriculumCommand::Check { schedule }) => {
            let text = fs::read_to_string(&schedule).map_err(|e| io_at(&schedule, e))?;
            let stages = stage_schedule(parse_schedule(&text)?)?;
            for s in &stages {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    s.stage_id, s.data_tier, s.direction_set, s.mixture, s.encoder_layers, s.decoder_layers
                )?;
            }
            writeln!(out, "ok\t{} stages", stages.len())?;
        }
        Command::Demo {
            seed,
            out: out_dir,
            direct_noise,
        } => {
            let cfg = DemoConfig {
                direct_noise,
                ..DemoConfig::new(seed)
            };
            let report = run_demo(&out_dir, &cfg)?;
            for (k, v) in &report.summary {
                writeln!(out, "{k}\t{v}")?;
            }
        }
    }
    Ok(())
}

fn absolute(path: &Path) -> Result<PathBuf, BoxError> {
    fs::canonicalize(path).map_err(|e| io_at(path, e))
}

/// Groups dev pairs by direction; shards of the same direction concatenate.
fn read_devsets(m: &CorpusManifest) -> Result<BTreeMap<Direction, DevSet>, BoxError> {
    let mut sets: BTreeMap<Direction, DevSet> = BTreeMap::new();
    for entry in m.shards() {
        let set = sets.entry(entry.direction.clone()).or_default();
        for pair in PairReader::open(m, entry)? {
            let pair = pair?;
            set.sources.push(pair.source);
            set.references.push(pair.target);
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> i32 {
        run(std::iter::once("mtforge").chain(args.iter().copied()))
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run_args(&["frobnicate"]), 1);
        assert_eq!(run_args(&["bleu", "--hyp", "x"]), 1);
        assert_eq!(run_args(&["filter", "--manifest", "m", "--out", "o", "--script", "sr"]), 1);
    }

    #[test]
    fn missing_manifest_exits_2() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("o");
        let missing = tmp.path().join("nope.tsv");
        assert_eq!(
            run_args(&["filter", "--manifest", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]),
            2
        );
    }

    #[test]
    fn identity_bleu_exits_0() {
        let tmp = tempfile::tempdir().unwrap();
        let h = tmp.path().join("h.txt");
        fs::write(&h, "the cat sat\na dog\n").unwrap();
        let h = h.to_str().unwrap();
        assert_eq!(run_args(&["bleu", "--hyp", h, "--ref", h]), 0);
    }

    #[test]
    fn exit_code_follows_error_chain() {
        let io_err: BoxError = Box::new(CorpusError::Io {
            path: "x".into(),
            source: io::Error::other("boom"),
        });
        assert_eq!(exit_code(io_err.as_ref()), 2);
        assert_eq!(exit_code(invalid("bad flag").as_ref()), 1);
        let missing: BoxError = Box::new(CorpusError::MissingFile("m".into()));
        assert_eq!(exit_code(missing.as_ref()), 2);
    }

    #[test]
    fn cipher_spec_parsing() {
        let langs = [LangCode::new("hr").unwrap(), LangCode::english()];
        assert!(make_translator("cipher:7", &langs).is_ok());
        assert!(make_translator("cipher:x", &langs).is_err());
        assert!(make_translator("bogus", &langs).is_err());
        assert!(parse_script_rule("sr=Cyrl").is_ok());
        assert!(parse_script_rule("sr").is_err());
    }
}
