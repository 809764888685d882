//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use ssdau::config::{PerturbConfig, RunConfig};
use ssdau::io::{load_dataset, sha256_file, LoadOptions};
use ssdau::manifest::Manifest;
use ssdau::pipeline::{MANIFEST, PERTURBED};
use ssdau::stages;
use ssdau_core::augment::{AugmentMode, AugmentPolicy, AugmentedInstance, Provenance};
use ssdau_core::corpus::{
    align_record, tags_to_triples, triples_to_tags, EntityMention, Instance, RawRecord, RelationSchema, Sentence,
    TagAssignment, TagEntry, TagScheme, Triple,
};
use ssdau_core::discretize::{encode, reconstruct, Role, SplitMode, TextBlock};
use ssdau_core::embedding::HashEmbedder;
use ssdau_core::evaluate::{counts, match_pairs, metrics, MatchMode, TripleKey, TripleSet};
use ssdau_core::filtering::{
    accuracy, consistency_loss, fit_topics, init_pretrained, loss_gradient, rank_consistency, score_pair,
    sentence_consistency, softmax, topic_filter, train_scorer, training_loss, DenseLogits, PairScorer,
    ScorerTagModel, TagModel, TrainingExample,
};
use ssdau_core::matching::{component_scores, hybrid_score, QueueConfig, SimilarityWeights};
use ssdau_core::seed;
use ssdau_core::text::tokenize;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn e<E: Display>(err: E) -> String {
    err.to_string()
}

fn corpus() -> Vec<Instance> {
    load_dataset(&common::fixture("corpus.jsonl"), &LoadOptions::default())
        .expect("fixture corpus")
        .0
}

fn elapsed(limit: f64, started: Instant) -> Result<f64, String> {
    let s = started.elapsed().as_secs_f64();
    ensure!(s < limit, "took {s:.2} s, limit {limit} s");
    Ok(s)
}

fn normal(rng: &mut impl Rng) -> f64 {
    seed::standard_normal(rng)
}

fn triple_key(t: &Triple) -> (usize, usize, String, String, String, usize, usize, String, String) {
    (
        t.head.token_start,
        t.head.token_end,
        t.head.surface.clone(),
        t.head.tag.clone(),
        t.relation.clone(),
        t.tail.token_start,
        t.tail.token_end,
        t.tail.surface.clone(),
        t.tail.tag.clone(),
    )
}

fn round_trip() -> Outcome {
    let started = Instant::now();
    let ds = corpus();
    ensure!(ds.len() == 200, "fixture has {} sentences", ds.len());
    let schema = RelationSchema::infer(&ds).map_err(e)?;
    let scheme = TagScheme::fitting(&ds);
    let mut blocks = 0;
    for inst in &ds {
        let s = &inst.sentence;
        for mode in [SplitMode::Labeled, SplitMode::NoLabel, SplitMode::Full] {
            for width in [0, 3] {
                let enc = encode(inst, width, mode);
                blocks += enc.blocks.len();
                let text = reconstruct(s, &enc.blocks).map_err(e)?;
                ensure!(text == s.text, "{}: rebuilt {text:?}", s.id);
                // every block must be the literal bytes between its cut tokens
                for b in enc.blocks.iter().filter(|b| !b.is_empty()) {
                    let bytes = &s.text[s.tokens[b.cut.0].start..s.tokens[b.cut.1 - 1].end];
                    ensure!(bytes == b.span_text, "{}: block text {:?} vs {bytes:?}", b.id, b.span_text);
                }
            }
        }
        let tags = triples_to_tags(s, &inst.triples, &schema, scheme).map_err(e)?;
        let back = tags_to_triples(s, &tags, &schema, scheme).map_err(e)?;
        let a: BTreeSet<_> = inst.triples.iter().map(triple_key).collect();
        let b: BTreeSet<_> = back.iter().map(triple_key).collect();
        ensure!(a == b, "{}: tag round trip changed the triple set", s.id);
    }
    let secs = elapsed(5.0, started)?;
    Ok(format!("200/200 sentences rebuilt from {blocks} blocks, 200/200 triple sets, {secs:.2} s"))
}

fn hybrid_similarity() -> Outcome {
    let started = Instant::now();
    let ds = corpus();
    let p = HashEmbedder::new(64);
    let file = stages::discretize(&ds, 3, SplitMode::Labeled);
    let sentences = file.sentence_map();
    let library = file.library();
    let groups: Vec<Vec<&TextBlock>> = library
        .groups
        .values()
        .map(|g| g.iter().filter(|b| !b.is_empty()).collect::<Vec<_>>())
        .filter(|g| g.len() >= 2)
        .collect();
    let mut rng = seed::rng(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let g = groups.choose(&mut rng).unwrap();
        let a = *g.choose(&mut rng).unwrap();
        let b = *g.choose(&mut rng).unwrap();
        let w: [f64; 5] = std::array::from_fn(|_| rng.gen_range(0.01..1.0));
        let weights = SimilarityWeights::from_array(w);
        let (sa, sb) = (&sentences[&a.source_sentence], &sentences[&b.source_sentence]);
        let score = |x: &TextBlock, y: &TextBlock, sx: &Sentence, sy: &Sentence| {
            component_scores(x, y, sx, sy, &p).map_err(e)?.map_err(|r| format!("{r:?}"))
        };
        let ab = score(a, b, sa, sb)?;
        let ba = score(b, a, sb, sa)?;
        let aa = score(a, a, sa, sa)?;
        let theta = hybrid_score(&ab, &weights).map_err(e)?;
        let c = ab.as_array();
        let oracle = w.iter().zip(&c).map(|(w, c)| w * c).sum::<f64>() / w.iter().sum::<f64>();
        ensure!((0.0..=1.0).contains(&theta), "Θ {theta} for {} / {}", a.id, b.id);
        worst = worst.max((theta - oracle).abs());
        let rev = hybrid_score(&ba, &weights).map_err(e)?;
        ensure!((theta - rev).abs() <= 1e-12, "asymmetric: {theta} vs {rev} for {} / {}", a.id, b.id);
        let id = hybrid_score(&aa, &weights).map_err(e)?;
        ensure!((id - 1.0).abs() <= 1e-12, "self-similarity {id} for {}", a.id);
    }
    ensure!(worst <= 1e-12, "weighted mean off by {worst:e}");

    let mut previous: Option<BTreeSet<(String, String)>> = None;
    let mut sizes = Vec::new();
    for step in 0..10 {
        let eps = step as f64 / 10.0;
        let config = QueueConfig {
            floor: eps,
            cap: usize::MAX,
            ..QueueConfig::default()
        };
        let queues = stages::match_blocks(&file, &p, &config).map_err(e)?;
        let mut set = BTreeSet::new();
        for entry in queues.iter().flat_map(|q| &q.entries) {
            ensure!(entry.hybrid >= eps, "entry below floor {eps}: {}", entry.hybrid);
            set.insert((entry.source.id.clone(), entry.replacement.id.clone()));
        }
        if let Some(prev) = &previous {
            ensure!(set.is_subset(prev), "queues at ε={eps} are not contained in the previous step");
        }
        sizes.push(set.len());
        previous = Some(set);
    }
    ensure!(sizes.windows(2).any(|w| w[1] < w[0]), "queue sizes never shrink: {sizes:?}");
    let secs = elapsed(30.0, started)?;
    Ok(format!(
        "1000 pairs, max |Θ − oracle| {worst:.1e}; queue sizes {sizes:?} nested; {secs:.2} s"
    ))
}

fn random_scorer(rng: &mut impl Rng, d: usize, d_e: usize, k: usize, seed: u64) -> PairScorer {
    let mut s = PairScorer::random(d, d_e, k, seed);
    s.bias = (0..d_e).map(|_| normal(rng) * 0.5).collect();
    s
}

fn scorer_oracle() -> Outcome {
    let mut rng = seed::rng(31);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let (d, d_e, k) = (rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=4));
        let s = random_scorer(&mut rng, d, d_e, k, case);
        let l_h: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let l_t: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = score_pair(&s, &l_h, &l_t, false, 0).map_err(e)?;
        let mut hidden = vec![0.0; d_e];
        for (i, h) in hidden.iter_mut().enumerate() {
            let mut acc = s.bias[i];
            for j in 0..d {
                acc += s.w[(i, j)] * l_h[j] + s.w[(i, d + j)] * l_t[j];
            }
            *h = if acc > 0.0 { acc } else { 0.0 };
        }
        ensure!(got.len() == k, "case {case}: {} scores for K={k}", got.len());
        for (c, g) in got.iter().enumerate() {
            let want: f64 = (0..d_e).map(|i| s.r_rel[(i, c)] * hidden[i]).sum();
            let rel = if want == 0.0 { g.abs() } else { (g - want).abs() / want.abs() };
            worst = worst.max(rel);
        }
    }
    ensure!(worst <= 1e-9, "max relative error {worst:e}");
    for k in 1..=8 {
        let z = PairScorer::zeros(5, 4, k);
        let v = score_pair(&z, &[0.3; 5], &[-0.7; 5], false, 0).map_err(e)?;
        let probs = softmax(&v);
        ensure!(probs.iter().all(|p| *p == 1.0 / k as f64), "K={k}: zero scorer gives {probs:?}");
    }
    Ok(format!("100 scorers, max relative error {worst:.1e}; zero scorer exactly 1/K for K=1..8"))
}

/// ζ by visiting every cell, gold tag null where absent.
fn dense_zeta<M: TagModel>(m: &M, tags: &TagAssignment) -> f64 {
    let gold: BTreeMap<(usize, usize, usize), u32> =
        tags.entries.iter().map(|x| ((x.head, x.relation, x.tail), x.tag)).collect();
    let mut total = 0.0;
    for i in 0..tags.n {
        for r in 0..tags.k {
            for j in 0..tags.n {
                total += m.log_prob(i, r, j, gold.get(&(i, r, j)).copied().unwrap_or(0));
            }
        }
    }
    -total / (tags.n * tags.k * tags.n) as f64
}

fn random_tags(rng: &mut impl Rng, n: usize, k: usize, t: usize, density: f64) -> TagAssignment {
    let mut entries = Vec::new();
    for head in 0..n {
        for relation in 0..k {
            for tail in 0..n {
                if t > 1 && rng.gen_bool(density) {
                    entries.push(TagEntry {
                        head,
                        relation,
                        tail,
                        tag: rng.gen_range(1..t as u32),
                    });
                }
            }
        }
    }
    TagAssignment {
        entries,
        n,
        k,
        tag_vocab_size: t,
    }
}

fn zeta_analytics() -> Outcome {
    let started = Instant::now();
    let mut rng = seed::rng(5);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for n in 1..=6 {
        for k in 1..=3 {
            for t in 1..=4 {
                for density in [0.0, 0.3, 1.0] {
                    let tags = random_tags(&mut rng, n, k, t, density);
                    let uniform = consistency_loss(&DenseLogits::uniform(n, k, t), &tags).map_err(e)?;
                    ensure!(
                        (uniform - (t as f64).ln()).abs() <= 1e-12,
                        "uniform ζ {uniform} vs log {t} at n={n} K={k}"
                    );
                    let mut perfect = vec![0.0; n * k * n * t];
                    for i in 0..n {
                        for r in 0..k {
                            for j in 0..n {
                                perfect[((i * k + r) * n + j) * t + tags.gold_tag(i, r, j) as usize] = 800.0;
                            }
                        }
                    }
                    let z = consistency_loss(&DenseLogits::new(n, k, t, perfect).map_err(e)?, &tags).map_err(e)?;
                    ensure!(z == 0.0, "perfect predictor gives ζ {z} at n={n} K={k} T={t}");

                    let logits: Vec<f64> = (0..n * k * n * t).map(|_| rng.gen_range(-4.0..4.0)).collect();
                    let m = DenseLogits::new(n, k, t, logits).map_err(e)?;
                    worst = worst.max((consistency_loss(&m, &tags).map_err(e)? - dense_zeta(&m, &tags)).abs());

                    let vectors: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
                    let scorer = random_scorer(&mut rng, 3, 4, k, cases as u64);
                    let sm = ScorerTagModel::new(&scorer, &vectors, t).map_err(e)?;
                    worst = worst.max((consistency_loss(&sm, &tags).map_err(e)? - dense_zeta(&sm, &tags)).abs());
                    cases += 1;
                }
            }
        }
    }
    ensure!(worst <= 1e-12, "sparse and dense ζ differ by {worst:e}");
    let secs = elapsed(10.0, started)?;
    Ok(format!("{cases} grid cases, uniform = log T, perfect = 0, max sparse/dense gap {worst:.1e}, {secs:.2} s"))
}

fn separable(n: usize, d: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = seed::rng(seed);
    (0..n)
        .map(|i| {
            let relation = i % 2;
            let sign = if relation == 0 { 1.0 } else { -1.0 };
            let mut l_h: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            l_h[0] = sign * rng.gen_range(1.0..2.0);
            let l_t = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            TrainingExample { l_h, l_t, relation }
        })
        .collect()
}

fn training() -> Outcome {
    let mut rng = seed::rng(77);
    let data = separable(8, 3, 4);
    let s = random_scorer(&mut rng, 3, 2, 2, 12);
    let (_, grad) = loss_gradient(&s, &data, None).map_err(e)?;
    let params = s.parameters();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let at = |delta: f64| -> Result<f64, String> {
            let mut q = params.clone();
            q[i] += delta;
            let mut m = s.clone();
            m.set_parameters(&q).map_err(e)?;
            training_loss(&m, &data).map_err(e)
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        let scale = fd.abs().max(grad[i].abs());
        if scale > 1e-8 {
            worst = worst.max((fd - grad[i]).abs() / scale);
        }
    }
    ensure!(worst < 1e-4, "gradient relative error {worst:e}");

    let toy = separable(20, 4, 9);
    let start = PairScorer::random(4, 8, 2, 3);
    let report = train_scorer(&start, &toy, 200, 0.5, 1).map_err(e)?;
    let acc = accuracy(&report.scorer, &toy).map_err(e)?;
    ensure!(acc == 1.0, "toy accuracy {acc} after 200 epochs");
    Ok(format!(
        "{} parameters, max FD relative error {worst:.1e}; toy accuracy 1.0, loss {:.3} -> {:.3}",
        params.len(),
        report.losses[0],
        report.losses.last().unwrap()
    ))
}

/// Two Gaussian clusters in the head vector, tail vectors pure noise.
fn two_cluster_task(seed: u64) -> Vec<TrainingExample> {
    let d = 8;
    let mut rng = seed::rng(seed);
    let center: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    (0..40)
        .map(|i| {
            let relation = i % 2;
            let sign = if relation == 0 { 1.0 } else { -1.0 };
            let l_h = center.iter().map(|c| sign * c + 0.5 * normal(&mut rng)).collect();
            let l_t = (0..d).map(|_| normal(&mut rng)).collect();
            TrainingExample { l_h, l_t, relation }
        })
        .collect()
}

fn init_ordering() -> Outcome {
    let mut wins = 0;
    let mut sums = [0.0; 3];
    for s in 0..100u64 {
        let data = two_cluster_task(s);
        let init_seed = seed::derive_seed(s, "init");
        let pre = training_loss(&init_pretrained(&data, 32, 2, 1.0, init_seed).map_err(e)?, &data).map_err(e)?;
        let rnd = training_loss(&PairScorer::random(8, 32, 2, init_seed), &data).map_err(e)?;
        let zero = training_loss(&PairScorer::zeros(8, 32, 2), &data).map_err(e)?;
        if pre < rnd && pre < zero {
            wins += 1;
        }
        for (acc, v) in sums.iter_mut().zip([pre, rnd, zero]) {
            *acc += v / 100.0;
        }
    }
    ensure!(wins >= 95, "pretrained init led in only {wins}/100 seeds");
    Ok(format!(
        "pretrained < random and < zero in {wins}/100 seeds; mean losses {:.3} / {:.3} / {:.3}",
        sums[0], sums[1], sums[2]
    ))
}

/// Every mention is exactly the text under its tokens, and the tokens are
/// what a fresh tokenization of the text gives.
fn offsets_hold(inst: &Instance) -> Result<(), String> {
    let s = &inst.sentence;
    ensure!(s.tokens == tokenize(&s.text), "{}: stale tokens", s.id);
    for m in inst.triples.iter().flat_map(|t| [&t.head, &t.tail]) {
        ensure!(m.token_start < m.token_end && m.token_end <= s.tokens.len(), "{}: bad range {:?}", s.id, m);
        let text = &s.text[s.tokens[m.token_start].start..s.tokens[m.token_end - 1].end];
        ensure!(text == m.surface, "{}: mention {:?} covers {text:?}", s.id, m.surface);
    }
    Ok(())
}

fn replacement_integrity() -> Outcome {
    let ds = corpus();
    let p = HashEmbedder::new(64);
    let file = stages::discretize(&ds, 3, SplitMode::Labeled);
    let queues = stages::match_blocks(&file, &p, &QueueConfig::default()).map_err(e)?;
    let policy = AugmentPolicy {
        mode: AugmentMode::CoordinatedHrt,
        epsilon: 0.7,
        ..AugmentPolicy::default()
    };
    let aug = stages::augment_all(&ds, &queues, &policy).map_err(e)?;
    ensure!(!aug.is_empty(), "no augmented instances under hrt at ε=0.7");
    let by_id: BTreeMap<&str, &Instance> = ds.iter().map(|i| (i.id(), i)).collect();
    for a in &aug {
        let src = by_id[a.provenance.source_sentence.as_str()];
        offsets_hold(&a.to_instance())?;
        ensure!(a.triples.len() == src.triples.len(), "{}: triple count changed", a.id());
        let roles: BTreeSet<Role> = a.provenance.replaced.iter().map(|r| r.role).collect();
        ensure!(roles.len() == 3, "{}: hrt replaced roles {roles:?}", a.id());
        ensure!(a.provenance.replaced.iter().all(|r| r.theta >= 0.7), "{}: span below ε", a.id());
        ensure!(a.sentence.text != src.sentence.text, "{}: text unchanged", a.id());
    }

    // the two-triple case: swapping the head of the first triple must
    // also rewrite the tail of the second
    let donor: RawRecord = serde_json::from_str(
        r#"{"id": "donor", "text": "Amy Grant has lived in Nashville .", "triples": [
            {"head": {"surface": "Amy Grant", "char_start": 0, "tag": "people"}, "relation": "place_lived",
             "tail": {"surface": "Nashville", "char_start": 23, "tag": "place"}}]}"#,
    )
    .map_err(e)?;
    let donor = align_record(0, &donor).map_err(e)?.instance;
    let s000 = by_id["s000"].clone();
    let pair = vec![s000.clone(), donor];
    let small = stages::discretize(&pair, 3, SplitMode::Labeled);
    let q = stages::match_blocks(&small, &p, &QueueConfig::default()).map_err(e)?;
    let head_only = AugmentPolicy {
        mode: AugmentMode::HeadOnly,
        epsilon: 0.0,
        max_per_sentence: 10,
        ..AugmentPolicy::default()
    };
    let out = stages::augment_all(&pair, &q, &head_only).map_err(e)?;
    let swap = out
        .iter()
        .find(|a| a.provenance.source_sentence == "s000" && a.sentence.text.contains("Amy Grant"))
        .ok_or("no Amy Grant swap generated")?;
    let want = "At Arkansas , the freshman Amy Grant led the Razorbacks in a 24-23 double-overtime upset of Alabama.";
    ensure!(swap.sentence.text == want, "rebuilt {:?}", swap.sentence.text);
    let t = &swap.triples;
    ensure!(
        t[0].head.surface == "Amy Grant" && t[0].head.tag == "people" && t[0].tail.surface == "Arkansas",
        "first triple {:?}",
        t[0]
    );
    ensure!(
        t[1].head.surface == "Razorbacks" && t[1].tail.surface == "Amy Grant" && t[1].tail.tag == "people",
        "second triple {:?}",
        t[1]
    );
    ensure!(
        t.iter().map(|x| &x.relation).eq(s000.triples.iter().map(|x| &x.relation)),
        "relation labels changed"
    );
    offsets_hold(&swap.to_instance())?;
    Ok(format!(
        "{}/{} hrt instances pass the offset scan with triple counts kept; two-triple propagation reproduced",
        aug.len(),
        aug.len()
    ))
}

fn key(h: &str, r: &str, t: &str) -> TripleKey {
    (h.into(), r.into(), t.into())
}

fn mention(surface: &str) -> EntityMention {
    EntityMention {
        token_start: 0,
        token_end: surface.split(' ').count(),
        surface: surface.into(),
        tag: "x".into(),
    }
}

fn triple(h: &str, r: &str, t: &str) -> Triple {
    Triple {
        head: mention(h),
        relation: r.into(),
        tail: mention(t),
    }
}

fn metrics_oracle() -> Outcome {
    let mut rng = seed::rng(8);
    let heads = ["ann", "bob", "cy", "dee"];
    let rels = ["r1", "r2", "r3"];
    let mut universe: Vec<TripleKey> = Vec::new();
    for h in heads {
        for r in rels {
            for t in heads {
                universe.push(key(h, r, t));
            }
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut draw = |max: usize| -> BTreeSet<TripleKey> {
            let n = rng.gen_range(0..=max);
            universe.choose_multiple(&mut rng, n).cloned().collect()
        };
        let (ps, gs) = (draw(10), draw(10));
        let m = metrics(&ps.iter().cloned().collect(), &gs.iter().cloned().collect());
        let inter = ps.intersection(&gs).count() as f64;
        let union = ps.union(&gs).count() as f64;
        let (np, ng) = (ps.len() as f64, gs.len() as f64);
        let precision = if np > 0.0 { inter / np } else if ng > 0.0 { 0.0 } else { 1.0 };
        let recall = if ng > 0.0 { inter / ng } else if np > 0.0 { 0.0 } else { 1.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        let iou = if union > 0.0 { inter / union } else { 1.0 };
        for (got, want) in [(m.precision, precision), (m.recall, recall), (m.f1, f1), (m.iou, iou)] {
            worst = worst.max((got - want).abs());
        }
        ensure!((m.iou - m.f1 / (2.0 - m.f1)).abs() <= 1e-12, "iou {} vs f1 {}", m.iou, m.f1);
    }
    ensure!(worst <= 1e-12, "metrics differ from the set oracle by {worst:e}");

    // 20 gold triples; predictions are exact, last-token variants, or wrong
    let first = ["Mary Ann", "Jose Luis", "Port Saint", "North", "Blue"];
    let last = ["Jones", "Garcia", "Lucie", "Carolina", "Harbor"];
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for i in 0..20 {
        let h = format!("{} {}", first[i % 5], last[i % 5]);
        let t = format!("{} {}", first[(i + 1) % 5], last[(i + 2) % 5]);
        let r = format!("rel{}", i / 5);
        gold.push(triple(&h, &r, &t));
        match i % 4 {
            0 | 1 => pred.push(triple(&h, &r, &t)),
            2 => pred.push(triple(&format!("Dr {}", last[i % 5]), &r, &t)),
            _ => pred.push(triple(&h, "other", &t)),
        }
    }
    let exact: BTreeSet<_> = match_pairs(&pred, &gold, MatchMode::Exact).into_iter().collect();
    let partial: BTreeSet<_> = match_pairs(&pred, &gold, MatchMode::Partial).into_iter().collect();
    ensure!(exact.is_subset(&partial), "exact matches missing from partial");
    ensure!(partial.len() > exact.len(), "partial adds nothing");
    let c_exact = counts(&TripleSet::from_triples(&pred, MatchMode::Exact), &TripleSet::from_triples(&gold, MatchMode::Exact));
    let c_partial = counts(
        &TripleSet::from_triples(&pred, MatchMode::Partial),
        &TripleSet::from_triples(&gold, MatchMode::Partial),
    );
    ensure!(c_partial.correct >= c_exact.correct, "partial counts below exact");
    Ok(format!(
        "1000 random pairs, max deviation {worst:.1e}, iou = f1/(2-f1); 20-triple corpus {} exact ⊆ {} partial",
        exact.len(),
        partial.len()
    ))
}

fn planted(source: &str, text: &str, n: usize) -> AugmentedInstance {
    AugmentedInstance {
        sentence: Sentence::new(format!("{source}~aug{n}"), text),
        triples: Vec::new(),
        provenance: Provenance {
            source_sentence: source.into(),
            mode: AugmentMode::HeadOnly,
            replaced: Vec::new(),
        },
    }
}

fn filtering() -> Outcome {
    let ds = corpus();
    let p = HashEmbedder::new(64);
    let file = stages::discretize(&ds, 3, SplitMode::Labeled);
    let queues = stages::match_blocks(&file, &p, &QueueConfig::default()).map_err(e)?;
    let policy = AugmentPolicy {
        mode: AugmentMode::HeadOnly,
        ..AugmentPolicy::default()
    };
    let mut aug = stages::augment_all(&ds, &queues, &policy).map_err(e)?;
    // duplicates under fresh ids create exact ζ ties
    let dups: Vec<AugmentedInstance> = aug
        .iter()
        .take(10)
        .map(|a| {
            let mut d = a.clone();
            d.sentence.id = format!("{}~dup", a.id());
            d
        })
        .collect();
    aug.extend(dups);
    let schema = RelationSchema::infer(&ds).map_err(e)?;
    let instances: Vec<Instance> = aug.iter().map(|a| a.to_instance()).collect();
    let scheme = TagScheme::fitting(ds.iter().chain(&instances));
    let scorer = PairScorer::random(64, 16, schema.len(), 9);
    let mut scored = Vec::new();
    for a in &aug {
        let Ok(tags) = triples_to_tags(&a.sentence, &a.triples, &schema, scheme) else {
            continue;
        };
        scored.push((a.id().to_string(), sentence_consistency(&scorer, &a.sentence, &tags, &p).map_err(e)?));
    }
    let n = scored.len();
    ensure!(n > 20, "only {n} scorable instances");
    let mut oracle = scored.clone();
    oracle.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut shuffled = scored.clone();
    shuffled.shuffle(&mut seed::rng(1));
    for pct in [10usize, 25, 50, 80, 100] {
        let want = (n * pct).div_ceil(100);
        let ranked = rank_consistency(scored.clone(), pct as f64 / 100.0).map_err(e)?;
        let kept: Vec<&str> = ranked.iter().filter(|r| r.kept).map(|r| r.id.as_str()).collect();
        ensure!(kept.len() == want, "keep {pct}% of {n}: kept {} not {want}", kept.len());
        let expect: Vec<&str> = oracle[..want].iter().map(|x| x.0.as_str()).collect();
        ensure!(kept == expect, "keep {pct}%: kept set differs from the (ζ, id) oracle");
        let again = rank_consistency(shuffled.clone(), pct as f64 / 100.0).map_err(e)?;
        ensure!(again == ranked, "keep {pct}%: ranking depends on input order");
    }

    let river = ["river", "harbor", "boat", "fishing", "coast", "tide", "sail", "anchor"];
    let court = ["court", "judge", "trial", "lawyer", "verdict", "appeal", "jury", "ruling"];
    let mut rng = seed::rng(12);
    let mut phrase = |words: &[&str]| (0..6).map(|_| *words.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" ");
    let mut sentences = Vec::new();
    for i in 0..20 {
        sentences.push(Sentence::new(format!("a{i}"), phrase(&river)));
        sentences.push(Sentence::new(format!("b{i}"), phrase(&court)));
    }
    let model = fit_topics(&sentences, &p, 2, 4).map_err(e)?;
    ensure!(model.assignments["a0"] != model.assignments["b0"], "clusters share a topic");
    let mut within = 0;
    for s in &sentences {
        let vocab: &[&str] = if s.id.starts_with('a') { &river } else { &court };
        for n in 0..3 {
            let cand = planted(&s.id, &phrase(vocab), n);
            ensure!(topic_filter(&model, &p, s, &cand, 0.7).map_err(e)?, "within-cluster {:?} rejected", cand.sentence.text);
            within += 1;
        }
    }
    let cross = planted("a0", &phrase(&court), 9);
    ensure!(!topic_filter(&model, &p, &sentences[0], &cross, 0.7).map_err(e)?, "planted cross-cluster candidate kept");
    Ok(format!(
        "⌈f·n⌉ kept for f in 10..100% of {n} with id tie-breaks; {within}/{within} within-cluster kept, planted candidate rejected"
    ))
}

fn run_dir(dir: &Path, config: &RunConfig) -> Result<Manifest, String> {
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(config).map_err(e)?).map_err(e)?;
    let out = common::ssdau(&["--config", common::p(&path), "augment-all"]);
    ensure!(out.status.success(), "augment-all failed: {}", String::from_utf8_lossy(&out.stderr));
    let m: Manifest = serde_json::from_slice(&fs::read(Path::new(&config.output_dir).join(MANIFEST)).map_err(e)?).map_err(e)?;
    Ok(m)
}

fn by_name(m: &Manifest) -> BTreeMap<String, String> {
    m.artifact_hashes()
        .into_iter()
        .map(|(k, v)| (Path::new(&k).file_name().unwrap().to_string_lossy().into_owned(), v))
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(e)?;
    let fixture = common::fixture("corpus.jsonl");
    let foreign = common::fixture("foreign.jsonl");
    let before = sha256_file(&fixture).map_err(e)?;
    let mut config = RunConfig::new(42, common::p(&fixture));
    config.filter.append = true;
    config.perturb = Some(PerturbConfig {
        foreign: common::p(&foreign).into(),
        rate: 0.1,
        ..PerturbConfig::default()
    });
    let mut runs = Vec::new();
    for name in ["one", "two"] {
        let dir = tmp.path().join(name);
        fs::create_dir_all(&dir).map_err(e)?;
        config.output_dir = common::p(&dir.join("out")).into();
        runs.push(run_dir(&dir, &config)?);
    }
    let (a, b) = (by_name(&runs[0]), by_name(&runs[1]));
    ensure!(a.len() >= 7, "only {} artifacts hashed", a.len());
    ensure!(a == b, "artifact hashes differ between identical runs");
    ensure!(runs[0].run_digest == runs[1].run_digest, "run digests differ");

    let original = corpus();
    let want = original.len() + (0.1 * original.len() as f64).round() as usize;
    let (perturbed, _) = load_dataset(&Path::new(&config.output_dir).join(PERTURBED), &LoadOptions::default()).map_err(e)?;
    ensure!(perturbed.len() == want, "{} instances after perturbation, want {want}", perturbed.len());
    ensure!(perturbed[..original.len()] == original[..], "originals modified by perturbation");
    ensure!(sha256_file(&fixture).map_err(e)? == before, "input file changed");
    Ok(format!(
        "{} artifacts identical across runs; |D|={} -> {} after 10% injection, originals intact",
        a.len(),
        original.len(),
        perturbed.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("round trip", round_trip),
        ("hybrid similarity", hybrid_similarity),
        ("pair scorer oracle", scorer_oracle),
        ("consistency loss analytics", zeta_analytics),
        ("training", training),
        ("initialization ordering", init_ordering),
        ("replacement integrity", replacement_integrity),
        ("metrics oracle", metrics_oracle),
        ("filtering", filtering),
        ("end-to-end determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
