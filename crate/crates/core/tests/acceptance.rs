//! End-to-end acceptance checks. Runs without the libtest harness so that
//! each criterion prints exactly one PASS/FAIL line.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mtforge::augmentation::{all_ordered_pairs, plan_dual_pseudo, run_plan};
use mtforge::bleu::{corpus_bleu, evaluate_directions, BleuStats, DevSet};
use mtforge::cleaning::{apply_filters, FilterConfig, FilterVerdict, RejectReason, Script, RATIO_LADDER};
use mtforge::corpus::{read_pairs, CorpusManifest, LanguageStats};
use mtforge::curriculum::{
    average_checkpoints, grow_encoder, progressive_ladder, stage_schedule, validate_transition, DataTier,
    DirectionSet, LayerProvenance, ModelShape, ParamVector, StageDescriptor, Violation,
};
use mtforge::routing::{build_routing_table, route_translate, Strategy};
use mtforge::sampling::{language_distribution, make_scheduler, MixtureWeights};
use mtforge::tokenizer::{SubwordTokenizer, Tokenize, WhitespaceTokenizer, BASIC_WORDS};
use mtforge::translator::{make_cipher_translator, translate, with_noise, CipherLanguage, DecodingConfig};
use mtforge::{Direction, LangCode, OriginPool, SentencePair};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn lang(s: &str) -> LangCode {
    s.parse().unwrap()
}

fn dir(s: &str) -> Direction {
    s.parse().unwrap()
}

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n)
        .map(|_| *BASIC_WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn within(limit: Duration, start: Instant, what: &str) {
    let took = start.elapsed();
    assert!(took < limit, "{what} took {took:?}, limit {limit:?}");
}

fn temperature_sampling() {
    let start = Instant::now();
    let mut stats = LanguageStats::default();
    stats.per_language.insert(lang("aa"), 32);
    stats.per_language.insert(lang("bb"), 1);
    let dist = language_distribution(&stats, 5.0).unwrap();
    let qa = dist.prob(&lang("aa"));
    let qb = dist.prob(&lang("bb"));
    assert!((qa - 2.0 / 3.0).abs() < 1e-12, "q_a = {qa}");
    assert!((qb - 1.0 / 3.0).abs() < 1e-12, "q_b = {qb}");

    let n = 100_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut hits_a = 0u64;
    for _ in 0..n {
        if *dist.sample(&mut rng) == lang("aa") {
            hits_a += 1;
        }
    }
    let observed = [hits_a as f64, (n - hits_a) as f64];
    let expected = [n as f64 * qa, n as f64 * qb];
    let chi2: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let critical = ChiSquared::new(1.0).unwrap().inverse_cdf(1.0 - 0.001);
    assert!(chi2 < critical, "chi2 = {chi2}, critical = {critical}");
    within(Duration::from_secs(5), start, "temperature sampling");
}

fn write_pool_corpus(root: &Path) -> CorpusManifest {
    let mut manifest = String::new();
    let shards = [
        ("b_hr.tsv", "hr", "en", "bitext"),
        ("b_hu.tsv", "en", "hu", "bitext"),
        ("bt_hr.tsv", "hr", "en", "bt"),
        ("bt_et.tsv", "et", "en", "bt"),
        ("dp.tsv", "hr", "hu", "dual"),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (i, (name, s, t, o)) in shards.iter().enumerate() {
        let lines = 50 + 37 * i;
        let body: String = (0..lines)
            .map(|_| format!("{}\t{}\n", words(&mut rng, 1, 6), words(&mut rng, 1, 6)))
            .collect();
        fs::write(root.join(name), body).unwrap();
        manifest.push_str(&format!("{name}\t{s}\t{t}\t{o}\t{lines}\n"));
    }
    CorpusManifest::parse(&manifest, root).unwrap()
}

fn mixture_weighting() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_pool_corpus(tmp.path());
    let stats = mtforge::corpus::corpus_stats(&manifest).unwrap();
    let dist = language_distribution(&stats, 5.0).unwrap();
    let weights = MixtureWeights::new(0.6, 0.2, 0.2).unwrap();
    let mut scheduler = make_scheduler(&manifest, &dist, weights, 1, 77).unwrap();
    let n = 100_000usize;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[scheduler.next_pair().unwrap().origin.index()] += 1;
    }
    for pool in OriginPool::ALL {
        let p = weights.weight(pool);
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let dev = (counts[pool.index()] as f64 - n as f64 * p).abs();
        assert!(dev <= 3.0 * sigma, "{pool}: {} draws, expected {}, 3σ = {}", counts[pool.index()], n as f64 * p, 3.0 * sigma);
    }
    within(Duration::from_secs(10), start, "mixture weighting");
}

fn filter_pipeline() {
    let sr_en = dir("sr-en");
    let mut cfg = FilterConfig::default();
    cfg.script_rules.insert(lang("sr"), Script::Cyrillic);
    let long_source = vec!["да"; 1025].join(" ");
    let wide_source = vec!["да"; 600].join(" ");
    let wide_target = vec!["yes"; 600].join(" ");
    let (en, sr) = (LangCode::english(), lang("sr"));
    type Case<'a> = (&'a str, &'a str, Option<(&'a LangCode, &'a LangCode)>, Option<RejectReason>);
    let cases: Vec<Case> = vec![
        ("добар дан", "good day", None, None),
        ("dobar dan", "good day", None, Some(RejectReason::WrongScript)),
        ("", "good day", None, Some(RejectReason::Empty)),
        ("добар", "", None, Some(RejectReason::Empty)),
        (&long_source, "yes", None, Some(RejectReason::TooLong)),
        ("добар [UNK]", "good day", None, Some(RejectReason::ContainsUnk)),
        ("добар дан", "good day [UNK]", None, Some(RejectReason::ContainsUnk)),
        ("један два", "one two three four five six seven", None, Some(RejectReason::RatioExceeded)),
        ("један два", "one two three four five six", None, None),
        ("добар дан", "good day", Some((&en, &en)), Some(RejectReason::BadLangId)),
        ("добро јутро свима", "good morning everyone", Some((&sr, &en)), None),
        (&wide_source, &wide_target, None, None),
    ];
    assert_eq!(cases.len(), 12);
    let run = || -> Vec<FilterVerdict> {
        cases
            .iter()
            .map(|(s, t, langid, _)| {
                let pair = SentencePair::detached(s, t, sr_en.clone(), OriginPool::Bitext);
                apply_filters(&pair, &cfg, &WhitespaceTokenizer, *langid)
            })
            .collect()
    };
    let first = run();
    for (i, (verdict, case)) in first.iter().zip(&cases).enumerate() {
        assert_eq!(verdict.reason(), case.3, "pair {}", i + 1);
    }
    // The 600-word pair survives, cut to the token cap.
    let FilterVerdict::Kept(wide) = &first[11] else { unreachable!() };
    assert_eq!(WhitespaceTokenizer.tokenize(&wide.source).len(), 512);
    assert_eq!(WhitespaceTokenizer.tokenize(&wide.target).len(), 512);
    let FilterVerdict::Kept(plain) = &first[0] else { unreachable!() };
    assert_eq!((plain.source.as_str(), plain.target.as_str()), ("добар дан", "good day"));
    assert_eq!(first, run());

    // Ladder monotonicity: anything kept at a stricter limit is kept at every
    // looser one.
    let tok = SubwordTokenizer::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let configs: Vec<FilterConfig> = RATIO_LADDER.iter().map(|&r| FilterConfig::default().with_ratio(r)).collect();
    for _ in 0..10_000 {
        let pair = SentencePair::detached(
            &words(&mut rng, 0, 30),
            &words(&mut rng, 0, 30),
            dir("hr-en"),
            OriginPool::Bitext,
        );
        let kept: Vec<bool> = configs.iter().map(|c| apply_filters(&pair, c, &tok, None).is_kept()).collect();
        for w in kept.windows(2) {
            assert!(!w[0] || w[1], "ladder not monotone for {pair:?}: {kept:?}");
        }
    }
}

/// Independent n-gram counting: linear scans, no hashing.
fn oracle_stats(hyp: &[&str], reference: &[&str]) -> BleuStats {
    let mut s = BleuStats {
        hyp_len: hyp.len() as u64,
        ref_len: reference.len() as u64,
        ..Default::default()
    };
    for n in 1..=4 {
        if hyp.len() < n {
            continue;
        }
        let mut seen: Vec<&[&str]> = Vec::new();
        for i in 0..=hyp.len() - n {
            let g = &hyp[i..i + n];
            s.totals[n - 1] += 1;
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            let in_hyp = (0..=hyp.len() - n).filter(|&j| &hyp[j..j + n] == g).count() as u64;
            let in_ref = if reference.len() >= n {
                (0..=reference.len() - n).filter(|&j| &reference[j..j + n] == g).count() as u64
            } else {
                0
            };
            s.matches[n - 1] += in_hyp.min(in_ref);
        }
    }
    s
}

#[allow(clippy::needless_range_loop)]
fn oracle_score(s: &BleuStats) -> f64 {
    let mut p = [0.0f64; 4];
    for n in 0..4 {
        p[n] = match (n, s.matches[n], s.totals[n]) {
            (1.., 0, t) => 1.0 / (t as f64 + 1.0),
            (_, _, 0) => 0.0,
            (_, m, t) => m as f64 / t as f64,
        };
    }
    if s.hyp_len == 0 || p.contains(&0.0) {
        return 0.0;
    }
    let bp = if s.hyp_len < s.ref_len {
        (1.0 - s.ref_len as f64 / s.hyp_len as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * (p.iter().map(|x| x.ln()).sum::<f64>() / 4.0).exp()
}

fn bleu_oracle() {
    let refs = ["the cat sat on the mat", "a dog", "tiny"];
    let s = corpus_bleu(&refs, &refs, &SubwordTokenizer::builtin()).unwrap();
    assert_eq!(format!("{:.2}", s.score), "100.00");
    assert_eq!(s.score, 100.0);

    let s = corpus_bleu(&["a b c d e f"], &["a b c d e f g"], &WhitespaceTokenizer).unwrap();
    let hand = 100.0 * (-1.0f64 / 6.0).exp();
    assert!((s.score - hand).abs() < 1e-3, "{} vs {hand}", s.score);
    assert!((s.score - 84.648).abs() < 1e-3);

    let vocab = ["a", "b", "c", "d", "e"];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let segments = rng.gen_range(1..=6);
        let mut hyps = Vec::new();
        let mut refs = Vec::new();
        for _ in 0..segments {
            let line = |rng: &mut ChaCha8Rng| {
                let n = rng.gen_range(0..=10);
                (0..n).map(|_| *vocab.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
            };
            hyps.push(line(&mut rng));
            refs.push(line(&mut rng));
        }
        let got = corpus_bleu(&hyps, &refs, &WhitespaceTokenizer).unwrap();
        let mut want = BleuStats::default();
        for (h, r) in hyps.iter().zip(&refs) {
            let ht: Vec<&str> = h.split_whitespace().collect();
            let rt: Vec<&str> = r.split_whitespace().collect();
            want.add(&oracle_stats(&ht, &rt));
        }
        assert_eq!(got.stats, want, "{hyps:?} / {refs:?}");
        assert_eq!(got.score, oracle_score(&want), "{hyps:?} / {refs:?}");
    }
}

fn devsets(ciphers: &[CipherLanguage], lines: usize, seed: u64) -> BTreeMap<Direction, DevSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let english: Vec<String> = (0..lines).map(|_| words(&mut rng, 4, 12)).collect();
    let encode = |l: &LangCode, s: &str| match ciphers.iter().find(|c| c.lang() == l) {
        Some(c) => c.encode(s),
        None => s.to_string(),
    };
    let mut langs: Vec<LangCode> = ciphers.iter().map(|c| c.lang().clone()).collect();
    langs.push(LangCode::english());
    all_ordered_pairs(&langs)
        .into_iter()
        .map(|d| {
            let set = DevSet {
                sources: english.iter().map(|s| encode(d.src(), s)).collect(),
                references: english.iter().map(|s| encode(d.tgt(), s)).collect(),
            };
            (d, set)
        })
        .collect()
}

fn routing_end_to_end() {
    let start = Instant::now();
    let en = LangCode::english();
    let ciphers: Vec<CipherLanguage> = ["hr", "hu", "et"].iter().map(|l| CipherLanguage::derive(lang(l), 9)).collect();
    let perfect = make_cipher_translator(ciphers.clone()).unwrap();
    let valid = devsets(&ciphers, 50, 1);
    let test = devsets(&ciphers, 50, 2);
    let non_english: Vec<Direction> = valid.keys().filter(|d| !d.touches(&en)).cloned().collect();
    let tok = SubwordTokenizer::builtin();
    let cfg = DecodingConfig::default();

    for noise in [0.5, 0.0] {
        let t = with_noise(perfect.clone(), noise, 4).unwrap().only_directions(non_english.clone());
        let direct = evaluate_directions(&t, &valid, &cfg, &Strategy::Direct, &tok, &en).unwrap();
        let pivot = evaluate_directions(&t, &valid, &cfg, &Strategy::PivotVia(en.clone()), &tok, &en).unwrap();
        let table = build_routing_table(&direct, &pivot, &en).unwrap();
        for (d, e) in table.iter() {
            let want = if noise > 0.0 && !d.touches(&en) {
                Strategy::PivotVia(en.clone())
            } else {
                Strategy::Direct
            };
            assert_eq!(e.strategy, want, "noise {noise}, {d}");
        }
        let hybrid = table.hybrid_average().unwrap();
        assert!(hybrid >= direct.avg_all().unwrap());
        assert!(hybrid >= pivot.avg_all().unwrap());
        if noise > 0.0 {
            let mut scores = Vec::new();
            for (d, set) in &test {
                let hyps = route_translate(&t, &table, &set.sources, d, &cfg).unwrap();
                scores.push(corpus_bleu(&hyps, &set.references, &tok).unwrap().score);
            }
            let avg = scores.iter().sum::<f64>() / scores.len() as f64;
            assert_eq!(format!("{avg:.2}"), "100.00");
        }
    }
    within(Duration::from_secs(30), start, "routing");
}

fn dual_pseudo_exactness() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let english: Vec<String> = (0..1000).map(|_| words(&mut rng, 1, 15)).collect();
    let mono = tmp.path().join("mono.en");
    fs::write(&mono, english.join("\n") + "\n").unwrap();
    let langs = [lang("hr"), lang("hu"), lang("et")];
    let t = make_cipher_translator(langs.iter().map(|l| CipherLanguage::derive(l.clone(), 13)).collect()).unwrap();
    let plan = plan_dual_pseudo(&mono, &all_ordered_pairs(&langs)).unwrap();
    let cfg = DecodingConfig::default();
    let manifest = run_plan(&plan, &t, &cfg, &tmp.path().join("out")).unwrap();
    assert_eq!(manifest.shards().len(), 6);
    for shard in manifest.shards() {
        assert_eq!(shard.origin, OriginPool::DualPseudo);
        let (src, tgt): (Vec<String>, Vec<String>) = read_pairs(&manifest, &shard.id())
            .unwrap()
            .map(|p| {
                let p = p.unwrap();
                (p.source, p.target)
            })
            .unzip();
        assert_eq!(src.len(), 1000);
        let direct = translate(&t, &src, &shard.direction, &cfg).unwrap();
        assert_eq!(direct, tgt, "{}", shard.direction);
    }
}

fn curriculum() {
    let selected = [dir("hr-hu"), dir("hu-hr")].into_iter().collect();
    let ladder = progressive_ladder(selected, 2.0).unwrap();
    assert_eq!(ladder.len(), 3);
    assert_eq!((ladder[0].encoder_layers, ladder[2].encoder_layers), (24, 36));

    // Every loosening step is rejected, whatever else changes.
    let tiers: Vec<DataTier> = std::iter::once(DataTier::Noisy)
        .chain(RATIO_LADDER.iter().map(|&r| DataTier::Clean(r)))
        .collect();
    let limit = |t: &DataTier| match t {
        DataTier::Noisy => f64::INFINITY,
        DataTier::Clean(r) => *r,
    };
    let stage = |id: &str, t: DataTier| {
        StageDescriptor::new(id, t, DirectionSet::All, MixtureWeights::UNIFORM, 24, 12).unwrap()
    };
    for a in &tiers {
        for b in &tiers {
            let v = validate_transition(&stage("a", *a), &stage("b", *b));
            let loosened = v.iter().any(|x| matches!(x, Violation::DataLoosened { .. }));
            assert_eq!(loosened, limit(b) > limit(a), "{a} -> {b}");
            if limit(b) > limit(a) {
                assert!(stage_schedule(vec![stage("a", *a), stage("b", *b)]).is_err());
            }
        }
    }

    let base = ModelShape::initialized_from("stage2", 24, 12);
    let deep = grow_encoder(&base, 12, "stage3").unwrap();
    assert_eq!(deep.encoder_layers(), 36);
    let fresh = deep
        .encoder
        .iter()
        .filter(|l| matches!(l, LayerProvenance::FreshRandom { .. }))
        .count();
    assert_eq!((deep.inherited_count(), fresh), (24, 12));
    assert!(deep.encoder[..24].iter().all(|l| matches!(l, LayerProvenance::Inherited { .. })));

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let k = rng.gen_range(1..=8);
        let len = rng.gen_range(0..=64);
        let sets: Vec<ParamVector> = (0..k)
            .map(|_| ParamVector((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let avg = average_checkpoints(&sets).unwrap();
        for i in 0..len {
            let mean = sets.iter().map(|s| s.0[i]).sum::<f64>() / k as f64;
            assert!((avg.0[i] - mean).abs() < 1e-12, "{} vs {mean}", avg.0[i]);
        }
    }
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn demo_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    let mut stdouts = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let res = Command::new(env!("CARGO_BIN_EXE_mtforge"))
            .args(["demo", "--seed", "42", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        stdouts.push(res.stdout);
        trees.push(tree(&out));
    }
    assert!(trees[0].len() > 10);
    assert_eq!(trees[0], trees[1]);
    assert_eq!(stdouts[0], stdouts[1]);
}

fn main() {
    let criteria: [(&str, fn()); 8] = [
        ("1 temperature sampling", temperature_sampling),
        ("2 mixture weighting", mixture_weighting),
        ("3 filter pipeline", filter_pipeline),
        ("4 BLEU oracle", bleu_oracle),
        ("5 pivot/routing end-to-end", routing_end_to_end),
        ("6 dual-pseudo exactness", dual_pseudo_exactness),
        ("7 curriculum", curriculum),
        ("8 demo determinism", demo_determinism),
    ];
    panic::set_hook(Box::new(|info| eprintln!("  {info}")));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let ok = panic::catch_unwind(AssertUnwindSafe(check)).is_ok();
        let status = if ok { "PASS" } else { "FAIL" };
        println!("acceptance {name}: {status} ({:.2}s)", start.elapsed().as_secs_f64());
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
