//! Triple-set metrics, threshold sweeps and triple-count breakdowns.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_dataset, AugmentMode, AugmentPolicy, AugmentedInstance};
use crate::corpus::{Instance, Triple};
use crate::discretize::Role;
use crate::error::{Error, Result};
use crate::matching::CandidateQueue;
use crate::text;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Full head and tail surfaces.
    #[default]
    Exact,
    /// Last token of each entity.
    Partial,
}

impl FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(MatchMode::Exact),
            "partial" => Ok(MatchMode::Partial),
            other => Err(Error::Config(format!("unknown match mode {other:?}"))),
        }
    }
}

pub fn normalize_surface(surface: &str, mode: MatchMode) -> String {
    match mode {
        MatchMode::Exact => surface.to_string(),
        MatchMode::Partial => text::words(surface).pop().unwrap_or_default(),
    }
}

pub type TripleKey = (String, String, String);

pub fn triple_key(t: &Triple, mode: MatchMode) -> TripleKey {
    (
        normalize_surface(&t.head.surface, mode),
        t.relation.clone(),
        normalize_surface(&t.tail.surface, mode),
    )
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleSet {
    pub triples: BTreeSet<TripleKey>,
}

impl TripleSet {
    pub fn from_triples<'a, I: IntoIterator<Item = &'a Triple>>(triples: I, mode: MatchMode) -> Self {
        Self {
            triples: triples.into_iter().map(|t| triple_key(t, mode)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

impl FromIterator<TripleKey> for TripleSet {
    fn from_iter<I: IntoIterator<Item = TripleKey>>(iter: I) -> Self {
        Self {
            triples: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
}

impl Counts {
    pub fn metrics(&self) -> Metrics {
        let ratio = |num: usize, den: usize, other: usize| {
            if den == 0 {
                if other == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(self.correct, self.predicted, self.gold);
        let recall = ratio(self.correct, self.gold, self.predicted);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let union = self.predicted + self.gold - self.correct;
        let iou = if union == 0 { 1.0 } else { self.correct as f64 / union as f64 };
        Metrics {
            precision,
            recall,
            f1,
            iou,
        }
    }
}

pub fn counts(pred: &TripleSet, gold: &TripleSet) -> Counts {
    Counts {
        predicted: pred.len(),
        gold: gold.len(),
        correct: pred.triples.intersection(&gold.triples).count(),
    }
}

pub fn metrics(pred: &TripleSet, gold: &TripleSet) -> Metrics {
    counts(pred, gold).metrics()
}

/// Pairs `(i, j)` of predicted and gold triples that match under `mode`.
pub fn match_pairs(pred: &[Triple], gold: &[Triple], mode: MatchMode) -> Vec<(usize, usize)> {
    let gold_keys: Vec<TripleKey> = gold.iter().map(|t| triple_key(t, mode)).collect();
    let mut out = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        let k = triple_key(p, mode);
        for (j, g) in gold_keys.iter().enumerate() {
            if *g == k {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Counts pooled over the corpus.
    #[default]
    Micro,
    /// Per-sentence metrics averaged.
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub mode: MatchMode,
    pub averaging: Averaging,
    pub sentences: usize,
    pub counts: Counts,
    pub metrics: Metrics,
}

/// Scores predictions against gold by sentence id. Gold sentences without a
/// prediction count as empty predictions; predictions for unknown ids are an
/// error.
pub fn evaluate_corpus(pred: &[Instance], gold: &[Instance], mode: MatchMode, averaging: Averaging) -> Result<CorpusReport> {
    let gold_by_id: BTreeMap<&str, &Instance> = gold.iter().map(|i| (i.id(), i)).collect();
    let mut pred_by_id: BTreeMap<&str, TripleSet> = BTreeMap::new();
    for p in pred {
        if !gold_by_id.contains_key(p.id()) {
            return Err(Error::Config(format!("prediction for unknown sentence {:?}", p.id())));
        }
        pred_by_id
            .entry(p.id())
            .or_default()
            .triples
            .extend(p.triples.iter().map(|t| triple_key(t, mode)));
    }
    let empty = TripleSet::default();
    let mut total = Counts::default();
    let mut sums = [0.0; 4];
    for (id, g) in &gold_by_id {
        let gs = TripleSet::from_triples(&g.triples, mode);
        let c = counts(pred_by_id.get(id).unwrap_or(&empty), &gs);
        total.predicted += c.predicted;
        total.gold += c.gold;
        total.correct += c.correct;
        let m = c.metrics();
        for (s, v) in sums.iter_mut().zip([m.precision, m.recall, m.f1, m.iou]) {
            *s += v;
        }
    }
    let n = gold_by_id.len();
    let metrics = match averaging {
        Averaging::Micro => total.metrics(),
        Averaging::Macro if n == 0 => Counts::default().metrics(),
        Averaging::Macro => Metrics {
            precision: sums[0] / n as f64,
            recall: sums[1] / n as f64,
            f1: sums[2] / n as f64,
            iou: sums[3] / n as f64,
        },
    };
    Ok(CorpusReport {
        mode,
        averaging,
        sentences: n,
        counts: total,
        metrics,
    })
}

/// `[lo, hi)`, or `[lo, hi]` when last in a list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
}

fn tidy(x: f64) -> f64 {
    libm::round(x * 1e12) / 1e12
}

/// Parses `lo:hi:step`.
pub fn parse_bins(spec: &str) -> Result<Vec<Bin>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<core::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bins must look like lo:hi:step, got {spec:?}")))?;
    let [lo, hi, step] = nums[..] else {
        return Err(Error::Config(format!("bins must look like lo:hi:step, got {spec:?}")));
    };
    if !(step > 0.0) || !(hi > lo) {
        return Err(Error::Config(format!("bins need lo < hi and step > 0, got {spec:?}")));
    }
    let n = libm::ceil(tidy((hi - lo) / step)) as usize;
    let bins: Vec<Bin> = (0..n)
        .map(|i| Bin {
            lo: tidy(lo + i as f64 * step),
            hi: if i + 1 == n { hi } else { tidy(lo + (i + 1) as f64 * step) },
        })
        .collect();
    validate_bins(&bins)?;
    Ok(bins)
}

pub fn validate_bins(bins: &[Bin]) -> Result<()> {
    if bins.is_empty() {
        return Err(Error::Config("at least one bin is required".into()));
    }
    for b in bins {
        if !(b.lo < b.hi) || !b.lo.is_finite() || !b.hi.is_finite() {
            return Err(Error::Config(format!("empty or non-finite bin [{}, {})", b.lo, b.hi)));
        }
    }
    if bins.windows(2).any(|w| w[0].hi > w[1].lo) {
        return Err(Error::Config("bins must be disjoint and ascending".into()));
    }
    Ok(())
}

/// Index of the bin holding `x`.
pub fn bin_of(bins: &[Bin], x: f64) -> Option<usize> {
    let last = bins.len().checked_sub(1)?;
    bins.iter()
        .enumerate()
        .position(|(i, b)| b.lo <= x && (x < b.hi || (i == last && x <= b.hi)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub bin: Bin,
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub sum: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Aligned text table with columns Dataset, ε, Head, Relation, Tail, Sum.
    pub fn render(&self) -> String {
        let mut lines: Vec<[String; 6]> = alloc::vec![[
            "Dataset".into(),
            "ε".into(),
            "Head".into(),
            "Relation".into(),
            "Tail".into(),
            "Sum.".into(),
        ]];
        for (i, r) in self.rows.iter().enumerate() {
            let close = if i + 1 == self.rows.len() { ']' } else { ')' };
            lines.push([
                r.dataset.clone(),
                format!("[{}, {}{close}", r.bin.lo, r.bin.hi),
                r.head.to_string(),
                r.relation.to_string(),
                r.tail.to_string(),
                r.sum.to_string(),
            ]);
        }
        let mut widths = [0usize; 6];
        for l in &lines {
            for (w, c) in widths.iter_mut().zip(l) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for l in &lines {
            for (c, (cell, w)) in l.iter().zip(widths).enumerate() {
                let pad = w - cell.chars().count();
                if c == 0 {
                    out.push_str(cell);
                    out.extend(core::iter::repeat(' ').take(pad));
                } else {
                    out.push_str("  ");
                    out.extend(core::iter::repeat(' ').take(pad));
                    out.push_str(cell);
                }
            }
            let _ = writeln!(out);
        }
        out
    }
}

/// Runs each single-role mode under `template` with ε lowered to the first
/// bin's lower edge, then histograms the produced instances by Θ.
pub fn sweep(
    dataset_name: &str,
    dataset: &[Instance],
    queues: &[CandidateQueue],
    template: &AugmentPolicy,
    bins: &[Bin],
) -> Result<SweepReport> {
    validate_bins(bins)?;
    let mut counts = alloc::vec![[0usize; 3]; bins.len()];
    for (slot, (role, mode)) in [
        (Role::Head, AugmentMode::HeadOnly),
        (Role::Relation, AugmentMode::RelationOnly),
        (Role::Tail, AugmentMode::TailOnly),
    ]
    .into_iter()
    .enumerate()
    {
        let policy = AugmentPolicy {
            mode,
            epsilon: bins[0].lo,
            epsilon_entity: None,
            epsilon_relation: None,
            ..*template
        };
        for a in augment_dataset(dataset, queues, &policy)? {
            debug_assert!(a.provenance.replaced.iter().all(|r| r.role == role));
            if let Some(b) = bin_of(bins, a.provenance.score()) {
                counts[b][slot] += 1;
            }
        }
    }
    Ok(SweepReport {
        rows: bins
            .iter()
            .zip(counts)
            .map(|(bin, [head, relation, tail])| SweepRow {
                dataset: dataset_name.into(),
                bin: *bin,
                head,
                relation,
                tail,
                sum: head + relation + tail,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletCountRow {
    pub triples: usize,
    pub original: usize,
    pub augmented: usize,
}

/// Sentences grouped by gold triple count, original and augmented.
pub fn triplet_count_breakdown(dataset: &[Instance], augmented: &[AugmentedInstance]) -> Vec<TripletCountRow> {
    let mut groups: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for i in dataset {
        groups.entry(i.triples.len()).or_default().0 += 1;
    }
    for a in augmented {
        groups.entry(a.triples.len()).or_default().1 += 1;
    }
    groups
        .into_iter()
        .map(|(triples, (original, augmented))| TripletCountRow {
            triples,
            original,
            augmented,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityMention, Sentence};
    use crate::seed;
    use alloc::vec;
    use rand::Rng;

    fn mention(surface: &str) -> EntityMention {
        EntityMention {
            token_start: 0,
            token_end: text::words(surface).len(),
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

    fn key(i: usize) -> TripleKey {
        (format!("h{i}"), "r".into(), format!("t{}", i % 3))
    }

    #[test]
    fn basic_metrics() {
        let a: TripleSet = [key(1), key(2)].into_iter().collect();
        let m = metrics(&a, &a);
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (1.0, 1.0, 1.0, 1.0));
        let p: TripleSet = [key(1)].into_iter().collect();
        let m = metrics(&p, &a);
        assert_eq!((m.precision, m.recall, m.iou), (1.0, 0.5, 0.5));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        let e = TripleSet::default();
        let m = metrics(&e, &e);
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (1.0, 1.0, 1.0, 1.0));
        let m = metrics(&e, &a);
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn metrics_match_set_oracle() {
        let mut rng = seed::rng(21);
        for _ in 0..1000 {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<usize> {
                let n = rng.gen_range(0..=5);
                (0..n).map(|_| rng.gen_range(0..10)).collect()
            };
            let (pv, gv) = (draw(&mut rng), draw(&mut rng));
            let p: TripleSet = pv.iter().map(|&i| key(i)).collect();
            let g: TripleSet = gv.iter().map(|&i| key(i)).collect();
            // oracle over index sets
            let mut pi: Vec<usize> = pv.clone();
            pi.sort();
            pi.dedup();
            let mut gi: Vec<usize> = gv.clone();
            gi.sort();
            gi.dedup();
            let inter = pi.iter().filter(|x| gi.contains(x)).count() as f64;
            let union = (pi.len() + gi.len()) as f64 - inter;
            let prec = if pi.is_empty() { if gi.is_empty() { 1.0 } else { 0.0 } } else { inter / pi.len() as f64 };
            let rec = if gi.is_empty() { if pi.is_empty() { 1.0 } else { 0.0 } } else { inter / gi.len() as f64 };
            let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
            let iou = if union == 0.0 { 1.0 } else { inter / union };
            let m = metrics(&p, &g);
            assert_eq!((m.precision, m.recall), (prec, rec));
            assert!((m.f1 - f1).abs() < 1e-12 && (m.iou - iou).abs() < 1e-12);
            if prec + rec > 0.0 {
                assert!((m.iou - m.f1 / (2.0 - m.f1)).abs() < 1e-12);
                assert!(m.iou <= m.f1 + 1e-15);
            }
            let swapped = metrics(&g, &p);
            assert_eq!(swapped.iou, m.iou);
            assert_eq!(swapped.recall, m.precision);
        }
    }

    #[test]
    fn partial_vs_exact() {
        let a = triple("Mitch Mustain", "r", "Arkansas");
        let b = triple("Mustain", "r", "Arkansas");
        assert!(match_pairs(&[a.clone()], &[b.clone()], MatchMode::Exact).is_empty());
        assert_eq!(match_pairs(&[a.clone()], &[b], MatchMode::Partial), vec![(0, 0)]);
        assert_eq!(match_pairs(&[a.clone()], &[a], MatchMode::Exact), vec![(0, 0)]);
        assert!("fuzzy".parse::<MatchMode>().is_err());
    }

    #[test]
    fn partial_contains_exact_on_constructed_corpus() {
        let heads = ["New York", "York", "Old York", "Paris", "Paris Hilton"];
        let tails = ["France", "South France", "Texas", "East Texas"];
        let mut corpus = Vec::new();
        for i in 0..20 {
            corpus.push(triple(heads[i % 5], ["r", "s"][i % 2], tails[(i * 3 + i / 7) % 4]));
        }
        let (pred, gold) = corpus.split_at(10);
        let exact: BTreeSet<_> = match_pairs(pred, gold, MatchMode::Exact).into_iter().collect();
        let partial: BTreeSet<_> = match_pairs(pred, gold, MatchMode::Partial).into_iter().collect();
        // oracle: compare surfaces directly
        for (i, p) in pred.iter().enumerate() {
            for (j, g) in gold.iter().enumerate() {
                let same = p.head.surface == g.head.surface && p.relation == g.relation && p.tail.surface == g.tail.surface;
                assert_eq!(exact.contains(&(i, j)), same);
            }
        }
        assert!(exact.is_subset(&partial));
        assert!(partial.len() > exact.len());
    }

    #[test]
    fn corpus_averaging() {
        let s = |id: &str, ts: Vec<Triple>| Instance {
            sentence: Sentence::new(id, "x"),
            triples: ts,
        };
        let gold = vec![
            s("a", vec![triple("A", "r", "B"), triple("C", "r", "D")]),
            s("b", vec![triple("E", "r", "F")]),
        ];
        let pred = vec![s("a", vec![triple("A", "r", "B")])];
        let micro = evaluate_corpus(&pred, &gold, MatchMode::Exact, Averaging::Micro).unwrap();
        assert_eq!(micro.counts, Counts { predicted: 1, gold: 3, correct: 1 });
        assert!((micro.metrics.iou - 1.0 / 3.0).abs() < 1e-15);
        let macro_ = evaluate_corpus(&pred, &gold, MatchMode::Exact, Averaging::Macro).unwrap();
        assert!((macro_.metrics.iou - 0.25).abs() < 1e-15);
        assert!(evaluate_corpus(&[s("zz", vec![])], &gold, MatchMode::Exact, Averaging::Micro).is_err());
    }

    #[test]
    fn bins() {
        let b = parse_bins("0.5:1.0:0.1").unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(b[1], Bin { lo: 0.6, hi: 0.7 });
        assert_eq!(bin_of(&b, 0.6), Some(1));
        assert_eq!(bin_of(&b, 1.0), Some(4));
        assert_eq!(bin_of(&b, 0.4), None);
        assert!(parse_bins("1:0:0.1").is_err());
        assert!(validate_bins(&[Bin { lo: 0.0, hi: 0.6 }, Bin { lo: 0.5, hi: 1.0 }]).is_err());
    }

    #[test]
    fn table_shape() {
        let r = SweepReport {
            rows: vec![SweepRow {
                dataset: "NYT".into(),
                bin: Bin { lo: 0.7, hi: 1.0 },
                head: 3,
                relation: 10,
                tail: 2,
                sum: 15,
            }],
        };
        let t = r.render();
        let header: Vec<&str> = t.lines().next().unwrap().split_whitespace().collect();
        assert_eq!(header, ["Dataset", "ε", "Head", "Relation", "Tail", "Sum."]);
        assert_eq!(t.lines().nth(1).unwrap().split_whitespace().collect::<Vec<_>>(), ["NYT", "[0.7,", "1]", "3", "10", "2", "15"]);
    }

    #[test]
    fn breakdown_counts() {
        let s = |id: &str, n: usize| Instance {
            sentence: Sentence::new(id, "x"),
            triples: (0..n).map(|_| triple("A", "r", "B")).collect(),
        };
        let ds = vec![s("a", 1), s("b", 2), s("c", 2), s("d", 3)];
        let rows = triplet_count_breakdown(&ds, &[]);
        assert_eq!(
            rows.iter().map(|r| (r.triples, r.original)).collect::<Vec<_>>(),
            [(1, 1), (2, 2), (3, 1)]
        );
        assert_eq!(triplet_count_breakdown(&ds[..1], &[]).len(), 1);
    }
}
