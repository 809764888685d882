use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Instance, RelationSchema};
use crate::embedding::{check_embedding, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, dot, Matrix};
use crate::seed;

pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zero,
    Random,
    Pretrained,
    /// Pretrained initialization was requested but the inputs were degenerate.
    PretrainedFallback,
}

/// `v = R_relᵀ · drop(ReLU(W · [l_h; l_t] + b))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScorer {
    /// `d_e × 2d`.
    pub w: Matrix,
    /// `d_e`.
    pub bias: Vec<f64>,
    /// `d_e × K`.
    pub r_rel: Matrix,
    pub dropout_rate: f64,
    pub init: InitKind,
    pub seed: u64,
}

impl PairScorer {
    pub fn zeros(d: usize, d_e: usize, k: usize) -> Self {
        Self {
            w: Matrix::zeros(d_e, 2 * d),
            bias: vec![0.0; d_e],
            r_rel: Matrix::zeros(d_e, k),
            dropout_rate: DEFAULT_DROPOUT,
            init: InitKind::Zero,
            seed: 0,
        }
    }

    /// He-scaled `W`, zero `b`, `R_rel` with variance `1/d_e`.
    pub fn random(d: usize, d_e: usize, k: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let ws = libm::sqrt(1.0 / d.max(1) as f64);
        let w = Matrix::from_fn(d_e, 2 * d, |_, _| seed::standard_normal(&mut rng) * ws);
        let rs = libm::sqrt(1.0 / d_e.max(1) as f64);
        let r_rel = Matrix::from_fn(d_e, k, |_, _| seed::standard_normal(&mut rng) * rs);
        Self {
            w,
            bias: vec![0.0; d_e],
            r_rel,
            dropout_rate: DEFAULT_DROPOUT,
            init: InitKind::Random,
            seed,
        }
    }

    /// Input dimension d.
    pub fn input_dim(&self) -> usize {
        self.w.cols() / 2
    }

    /// Hidden dimension d_e.
    pub fn hidden_dim(&self) -> usize {
        self.w.rows()
    }

    /// Relation count K.
    pub fn relations(&self) -> usize {
        self.r_rel.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.w.as_slice().len() + self.bias.len() + self.r_rel.as_slice().len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.cols() % 2 != 0 || self.bias.len() != self.w.rows() || self.r_rel.rows() != self.w.rows() {
            return Err(Error::Shape(format!(
                "inconsistent scorer: W {}x{}, b {}, R {}x{}",
                self.w.rows(),
                self.w.cols(),
                self.bias.len(),
                self.r_rel.rows(),
                self.r_rel.cols()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !self.w.is_finite() || !self.r_rel.is_finite() || self.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Shape("non-finite scorer parameters".into()));
        }
        Ok(())
    }

    fn check_input(&self, l_h: &[f64], l_t: &[f64]) -> Result<()> {
        let d = self.input_dim();
        for l in [l_h, l_t] {
            if l.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: l.len(),
                });
            }
        }
        Ok(())
    }

    /// Pre-activation `W · [l_h; l_t] + b`.
    fn pre_activation(&self, l_h: &[f64], l_t: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        (0..self.hidden_dim())
            .map(|i| {
                let row = self.w.row(i);
                dot(&row[..d], l_h) + dot(&row[d..], l_t) + self.bias[i]
            })
            .collect()
    }

    fn dropout_mask(&self, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed);
        let keep = 1.0 - self.dropout_rate;
        (0..self.hidden_dim())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect()
    }

    /// All parameters, flattened as W, b, R_rel.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        out.extend_from_slice(self.w.as_slice());
        out.extend_from_slice(&self.bias);
        out.extend_from_slice(self.r_rel.as_slice());
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        let (w, rest) = params.split_at(self.w.as_slice().len());
        let (b, r) = rest.split_at(self.bias.len());
        self.w.as_mut_slice().copy_from_slice(w);
        self.bias.copy_from_slice(b);
        self.r_rel.as_mut_slice().copy_from_slice(r);
        Ok(())
    }
}

/// Relation scores for one head/tail pair. Dropout, with inverted scaling,
/// applies only in `train_mode`, its mask drawn from `seed`.
pub fn score_pair(scorer: &PairScorer, l_h: &[f64], l_t: &[f64], train_mode: bool, seed: u64) -> Result<Vec<f64>> {
    scorer.check_input(l_h, l_t)?;
    let mut e: Vec<f64> = scorer.pre_activation(l_h, l_t).into_iter().map(|x| x.max(0.0)).collect();
    if train_mode && scorer.dropout_rate > 0.0 {
        for (x, m) in e.iter_mut().zip(scorer.dropout_mask(seed)) {
            *x *= m;
        }
    }
    scorer.r_rel.t_matvec(&e)
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if v.is_empty() {
        return Vec::new();
    }
    let lse = max + libm::log(v.iter().map(|x| libm::exp(x - max)).sum::<f64>());
    v.iter().map(|x| x - lse).collect()
}

/// Normalizes by the sum so equal inputs give exactly `1/K`.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| libm::exp(x - max)).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|x| x / sum).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub l_h: Vec<f64>,
    pub l_t: Vec<f64>,
    pub relation: usize,
}

/// One example per gold triple, using the vectors of the head and tail
/// start tokens, the same tokens that address the triple's tag cell.
pub fn training_examples<P: EmbeddingProvider + ?Sized>(
    instances: &[Instance],
    provider: &P,
    schema: &RelationSchema,
) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for inst in instances {
        if inst.triples.is_empty() {
            continue;
        }
        let s = &inst.sentence;
        let emb = provider.embed_sentence(&s.text, &s.tokens)?;
        check_embedding(&emb, provider.dimension(), s.len())?;
        for t in &inst.triples {
            let relation = schema.relation_index(&t.relation).ok_or_else(|| Error::UnknownRelation {
                sentence: s.id.clone(),
                relation: t.relation.clone(),
            })?;
            out.push(TrainingExample {
                l_h: emb.per_token[t.head.token_start].to_f64(),
                l_t: emb.per_token[t.tail.token_start].to_f64(),
                relation,
            });
        }
    }
    Ok(out)
}

fn example_loss(scorer: &PairScorer, ex: &TrainingExample) -> Result<f64> {
    if ex.relation >= scorer.relations() {
        return Err(Error::Shape(format!(
            "relation {} outside {} scorer outputs",
            ex.relation,
            scorer.relations()
        )));
    }
    let v = score_pair(scorer, &ex.l_h, &ex.l_t, false, 0)?;
    Ok(-log_softmax(&v)[ex.relation])
}

/// Mean cross-entropy with dropout off.
pub fn training_loss(scorer: &PairScorer, data: &[TrainingExample]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ex in data {
        total += example_loss(scorer, ex)?;
    }
    Ok(total / data.len() as f64)
}

/// Fraction of examples whose gold relation has the strictly largest score.
pub fn accuracy(scorer: &PairScorer, data: &[TrainingExample]) -> Result<f64> {
    if data.is_empty() {
        return Ok(1.0);
    }
    let mut hits = 0;
    for ex in data {
        let v = score_pair(scorer, &ex.l_h, &ex.l_t, false, 0)?;
        let gold = v[ex.relation];
        if v.iter().enumerate().all(|(k, &x)| k == ex.relation || x < gold) {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Gradient of the mean cross-entropy, flattened like
/// [`PairScorer::parameters`], and the loss it was taken at. With
/// `dropout_seed` set, masks are drawn per example in order.
pub fn loss_gradient(scorer: &PairScorer, data: &[TrainingExample], dropout_seed: Option<u64>) -> Result<(f64, Vec<f64>)> {
    scorer.validate()?;
    let d = scorer.input_dim();
    let d_e = scorer.hidden_dim();
    let k = scorer.relations();
    let mut grad = vec![0.0; scorer.parameter_count()];
    if data.is_empty() {
        return Ok((0.0, grad));
    }
    let w_len = d_e * 2 * d;
    let mut rng = dropout_seed.map(seed::rng);
    let keep = 1.0 - scorer.dropout_rate;
    let mut loss = 0.0;
    for ex in data {
        scorer.check_input(&ex.l_h, &ex.l_t)?;
        if ex.relation >= k {
            return Err(Error::Shape(format!("relation {} outside {k} scorer outputs", ex.relation)));
        }
        let pre = scorer.pre_activation(&ex.l_h, &ex.l_t);
        let mask: Vec<f64> = match rng.as_mut() {
            Some(r) if scorer.dropout_rate > 0.0 => (0..d_e)
                .map(|_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect(),
            _ => vec![1.0; d_e],
        };
        let h: Vec<f64> = pre.iter().zip(&mask).map(|(p, m)| p.max(0.0) * m).collect();
        let v = scorer.r_rel.t_matvec(&h)?;
        let lsm = log_softmax(&v);
        loss -= lsm[ex.relation];
        let dv: Vec<f64> = lsm
            .iter()
            .enumerate()
            .map(|(i, l)| libm::exp(*l) - if i == ex.relation { 1.0 } else { 0.0 })
            .collect();
        let r_off = w_len + d_e;
        for i in 0..d_e {
            for (c, g) in dv.iter().enumerate() {
                grad[r_off + i * k + c] += h[i] * g;
            }
        }
        let dh = scorer.r_rel.matvec(&dv)?;
        for i in 0..d_e {
            if pre[i] <= 0.0 || mask[i] == 0.0 {
                continue;
            }
            let dp = dh[i] * mask[i];
            let row = &mut grad[i * 2 * d..(i + 1) * 2 * d];
            for (j, x) in ex.l_h.iter().chain(&ex.l_t).enumerate() {
                row[j] += dp * x;
            }
            grad[w_len + i] += dp;
        }
    }
    let n = data.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub scorer: PairScorer,
    /// Training loss with dropout off, before the first epoch and after
    /// each epoch.
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent on the cross-entropy. Dropout masks come from
/// a per-epoch stream derived from `seed`.
pub fn train_scorer(
    scorer: &PairScorer,
    data: &[TrainingExample],
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<TrainReport> {
    if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
        return Err(Error::Config(format!("learning rate must be finite and nonnegative, got {learning_rate}")));
    }
    let mut s = scorer.clone();
    let mut losses = Vec::with_capacity(epochs + 1);
    losses.push(training_loss(&s, data)?);
    if learning_rate == 0.0 {
        losses.resize(epochs + 1, losses[0]);
        return Ok(TrainReport { scorer: s, losses });
    }
    let mut params = s.parameters();
    for epoch in 0..epochs {
        let stream = seed::derive_seed(seed, &format!("dropout/{epoch}"));
        let (loss, grad) = loss_gradient(&s, data, Some(stream))?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= learning_rate * g;
        }
        s.set_parameters(&params)?;
        let after = training_loss(&s, data)?;
        if !after.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        losses.push(after);
    }
    Ok(TrainReport { scorer: s, losses })
}

/// Data-dependent initialization: a seeded random ReLU expansion whose
/// projections are standardized by the input mean and spread, followed by a
/// ridge fit of `R_rel` onto one-hot relation targets.
pub fn init_pretrained(data: &[TrainingExample], d_e: usize, k: usize, ridge: f64, seed: u64) -> Result<PairScorer> {
    if data.is_empty() {
        return Err(Error::Config("pretrained initialization needs training examples".into()));
    }
    if !(ridge > 0.0) || !ridge.is_finite() {
        return Err(Error::Config(format!("ridge must be positive, got {ridge}")));
    }
    let d = data[0].l_h.len();
    let p = 2 * d;
    let mut mean = vec![0.0; p];
    for ex in data {
        if ex.l_h.len() != d || ex.l_t.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: ex.l_h.len().max(ex.l_t.len()),
            });
        }
        if ex.relation >= k {
            return Err(Error::Shape(format!("relation {} outside {k}", ex.relation)));
        }
        for (m, x) in mean.iter_mut().zip(ex.l_h.iter().chain(&ex.l_t)) {
            *m += x;
        }
    }
    let n = data.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = vec![0.0; p];
    for ex in data {
        for ((s, m), x) in std.iter_mut().zip(&mean).zip(ex.l_h.iter().chain(&ex.l_t)) {
            *s += (x - m) * (x - m);
        }
    }
    std.iter_mut().for_each(|s| *s = libm::sqrt(*s / n));
    let live = std.iter().filter(|s| **s > 1e-12).count();
    let fallback = |reason: &str| {
        log::warn!("pretrained initialization fell back to random: {reason}");
        let mut s = PairScorer::random(d, d_e, k, seed);
        s.init = InitKind::PretrainedFallback;
        s
    };
    if live == 0 {
        return Ok(fallback("all training inputs are identical"));
    }

    let mut rng = seed::rng(seed);
    let scale = 1.0 / libm::sqrt(live as f64);
    let w = Matrix::from_fn(d_e, p, |_, j| {
        let g = seed::standard_normal(&mut rng);
        if std[j] > 1e-12 {
            g * scale / std[j]
        } else {
            0.0
        }
    });
    let bias: Vec<f64> = (0..d_e).map(|i| -dot(w.row(i), &mean)).collect();
    let mut scorer = PairScorer {
        w,
        bias,
        r_rel: Matrix::zeros(d_e, k),
        dropout_rate: DEFAULT_DROPOUT,
        init: InitKind::Pretrained,
        seed,
    };

    let mut gram = Matrix::zeros(d_e, d_e);
    let mut rhs = Matrix::zeros(d_e, k);
    for ex in data {
        let h: Vec<f64> = scorer.pre_activation(&ex.l_h, &ex.l_t).into_iter().map(|x| x.max(0.0)).collect();
        for i in 0..d_e {
            if h[i] == 0.0 {
                continue;
            }
            for j in 0..d_e {
                gram[(i, j)] += h[i] * h[j];
            }
            rhs[(i, ex.relation)] += h[i];
        }
    }
    for i in 0..d_e {
        gram[(i, i)] += ridge;
    }
    match cholesky_solve(&gram, &rhs) {
        Ok(r) if r.is_finite() => {
            scorer.r_rel = r;
            Ok(scorer)
        }
        _ => Ok(fallback("ridge system could not be solved")),
    }
}
