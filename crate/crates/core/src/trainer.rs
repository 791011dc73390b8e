//! A hashed bag-of-tokens dual encoder trained with a pairwise softmax loss.
//!
//! Text is encoded as the mean of embedding-table rows, one per normalized
//! token, where a token's row is `fnv1a64(token) mod H`. Relevance is the dot
//! product of query and passage encodings. For a triple `(q, d+, d-)` the
//! loss is `ln(1 + exp(s(q,d-) - s(q,d+)))`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{fnv1a64, tokens};
use crate::types::TrainingPairSet;

const MAGIC: &[u8; 8] = b"SCRLTENC";
const VERSION: u32 = 1;
/// Identifies FNV-1a 64 modulo H over normalized tokens.
const HASH_FNV1A64_MOD: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub init_sigma: f64,
    pub buckets: usize,
    pub dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 1,
            seed: 0,
            init_sigma: 0.02,
            buckets: 1 << 16,
            dim: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning_rate = {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.init_sigma >= 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("init_sigma = {}", self.init_sigma)));
        }
        if self.buckets == 0 || self.dim == 0 || self.buckets > u32::MAX as usize || self.dim > u32::MAX as usize {
            return Err(Error::InvalidConfig("buckets and dim must be in 1..=u32::MAX".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    buckets: usize,
    dim: usize,
    /// Row-major `buckets x dim`.
    table: Vec<f64>,
}

/// Row gradients keyed by bucket; rows not present are zero.
pub type SparseGrad = BTreeMap<usize, Vec<f64>>;

impl ToyEncoder {
    /// Table entries drawn from `Normal(0, sigma^2)` with a seeded RNG.
    pub fn new(buckets: usize, dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        let cfg = TrainConfig {
            buckets,
            dim,
            init_sigma: sigma,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = if sigma == 0.0 {
            vec![0.0; buckets * dim]
        } else {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            (0..buckets * dim).map(|_| normal.sample(&mut rng)).collect()
        };
        Ok(ToyEncoder { buckets, dim, table })
    }

    pub fn from_config(cfg: &TrainConfig) -> Result<Self> {
        ToyEncoder::new(cfg.buckets, cfg.dim, cfg.init_sigma, cfg.seed)
    }

    pub fn from_table(buckets: usize, dim: usize, table: Vec<f64>) -> Result<Self> {
        if buckets == 0 || dim == 0 || table.len() != buckets * dim {
            return Err(Error::DimensionMismatch {
                expected: buckets * dim,
                actual: table.len(),
            });
        }
        Ok(ToyEncoder { buckets, dim, table })
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.buckets as u64) as usize
    }

    pub fn row(&self, bucket: usize) -> &[f64] {
        &self.table[bucket * self.dim..(bucket + 1) * self.dim]
    }

    pub fn row_mut(&mut self, bucket: usize) -> &mut [f64] {
        &mut self.table[bucket * self.dim..(bucket + 1) * self.dim]
    }

    /// `(bucket, weight)` pairs whose weighted row sum is the encoding.
    fn pooling(&self, text: &str) -> Vec<(usize, f64)> {
        let toks = tokens(text);
        if toks.is_empty() {
            return Vec::new();
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for t in &toks {
            *counts.entry(self.bucket(t)).or_default() += 1;
        }
        let n = toks.len() as f64;
        counts.into_iter().map(|(b, c)| (b, c as f64 / n)).collect()
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (b, w) in self.pooling(text) {
            for (o, r) in out.iter_mut().zip(self.row(b)) {
                *o += w * r;
            }
        }
        out
    }

    pub fn score(&self, query: &str, doc: &str) -> f64 {
        dot(&self.encode(query), &self.encode(doc))
    }

    fn apply(&mut self, grad: &SparseGrad, lr: f64) {
        for (&b, g) in grad {
            for (x, d) in self.row_mut(b).iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [VERSION, self.buckets as u32, self.dim as u32, HASH_FNV1A64_MOD] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &x in &self.table {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut word = [0u8; 4];
        let mut header = [0u32; 4];
        for h in &mut header {
            r.read_exact(&mut word)
                .map_err(|_| Error::Checkpoint("truncated header".into()))?;
            *h = u32::from_le_bytes(word);
        }
        let [version, buckets, dim, hash_id] = header;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        if hash_id != HASH_FNV1A64_MOD {
            return Err(Error::Checkpoint(format!("unknown hash id {hash_id}")));
        }
        let (buckets, dim) = (buckets as usize, dim as usize);
        if buckets == 0 || dim == 0 {
            return Err(Error::Checkpoint("zero-sized table".into()));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != buckets * dim * 4 {
            return Err(Error::Checkpoint(format!(
                "expected {} table bytes, found {}",
                buckets * dim * 4,
                bytes.len()
            )));
        }
        let table = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        Ok(ToyEncoder { buckets, dim, table })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        ToyEncoder::read_from(std::io::BufReader::new(f))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(s_neg - s_pos))` without overflow.
pub fn pair_loss(s_pos: f64, s_neg: f64) -> f64 {
    let x = s_neg - s_pos;
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Token pooling weights and the resulting encoding of one text.
type Pooled = (Vec<(usize, f64)>, Vec<f64>);

/// Summed loss over every `(q, d+, d-)` triple in the batch, and its
/// gradient with respect to the touched table rows.
pub fn batch_loss_and_grad(encoder: &ToyEncoder, batch: &[TrainingPairSet]) -> Result<(f64, SparseGrad)> {
    let dim = encoder.dim;
    let mut loss = 0.0;
    let mut grad = SparseGrad::new();
    let mut push = |pool: &[(usize, f64)], g: &[f64]| {
        for &(b, w) in pool {
            let row = grad.entry(b).or_insert_with(|| vec![0.0; dim]);
            for (r, x) in row.iter_mut().zip(g) {
                *r += w * x;
            }
        }
    };
    for set in batch {
        if !set.is_complete() {
            return Err(Error::InvalidInput(format!(
                "pair set for {:?} has an empty side",
                set.query.rendered
            )));
        }
        let q_pool = encoder.pooling(&set.query.rendered);
        let q = encoder.encode(&set.query.rendered);
        let pos: Vec<Pooled> = set
            .positives
            .iter()
            .map(|p| (encoder.pooling(p.text()), encoder.encode(p.text())))
            .collect();
        let neg: Vec<Pooled> = set
            .negatives
            .iter()
            .map(|p| (encoder.pooling(p.text()), encoder.encode(p.text())))
            .collect();
        let mut dq = vec![0.0; dim];
        let mut dpos = vec![vec![0.0; dim]; pos.len()];
        let mut dneg = vec![vec![0.0; dim]; neg.len()];
        for (i, (_, ep)) in pos.iter().enumerate() {
            let sp = dot(&q, ep);
            for (j, (_, en)) in neg.iter().enumerate() {
                let sn = dot(&q, en);
                loss += pair_loss(sp, sn);
                let g = sigmoid(sn - sp);
                for c in 0..dim {
                    dq[c] += g * (en[c] - ep[c]);
                    dpos[i][c] -= g * q[c];
                    dneg[j][c] += g * q[c];
                }
            }
        }
        push(&q_pool, &dq);
        for ((pool, _), d) in pos.iter().zip(&dpos) {
            push(pool, d);
        }
        for ((pool, _), d) in neg.iter().zip(&dneg) {
            push(pool, d);
        }
    }
    Ok((loss, grad))
}

fn batch_loss(encoder: &ToyEncoder, batch: &[TrainingPairSet]) -> Result<f64> {
    batch_loss_and_grad(encoder, batch).map(|(l, _)| l)
}

/// Largest relative error between analytic and central-difference partial
/// derivatives over at most 64 coordinates of touched rows.
///
/// Relative error is `|a - b| / max(1e-8, |a| + |b|)`.
pub fn grad_check(encoder: &ToyEncoder, batch: &[TrainingPairSet], epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!("epsilon = {epsilon} must be > 0")));
    }
    let (_, grad) = batch_loss_and_grad(encoder, batch)?;
    let mut coords: Vec<(usize, usize)> = grad
        .keys()
        .flat_map(|&b| (0..encoder.dim).map(move |c| (b, c)))
        .collect();
    if coords.len() > 64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
        coords.shuffle(&mut rng);
        coords.truncate(64);
    }
    let mut probe = encoder.clone();
    let mut worst: f64 = 0.0;
    for (b, c) in coords {
        let at = b * probe.dim + c;
        let orig = probe.table[at];
        probe.table[at] = orig + epsilon;
        let up = batch_loss(&probe, batch)?;
        probe.table[at] = orig - epsilon;
        let down = batch_loss(&probe, batch)?;
        probe.table[at] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let analytic = grad[&b][c];
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean instance loss before any update.
    pub initial_loss: f64,
    /// Mean instance loss per epoch, measured at each step before its update.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Plain SGD, one pair set per step, in an order shuffled by `config.seed`.
pub fn train(encoder: &mut ToyEncoder, pairs: &[TrainingPairSet], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no training pairs".into()));
    }
    let mut initial = 0.0;
    for set in pairs {
        initial += batch_loss(encoder, std::slice::from_ref(set))?;
    }
    let initial_loss = initial / pairs.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut steps = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, &i) in order.iter().enumerate() {
            let (loss, grad) = batch_loss_and_grad(encoder, std::slice::from_ref(&pairs[i]))?;
            if !loss.is_finite() {
                log::error!("loss {loss} on pair set {i} ({:?})", pairs[i].query.rendered);
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            total += loss;
            encoder.apply(&grad, config.learning_rate);
            steps += 1;
        }
        let mean = total / pairs.len() as f64;
        log::info!("epoch {} mean loss {mean:.6}", epoch + 1);
        epoch_losses.push(mean);
    }
    Ok(TrainReport {
        initial_loss,
        epoch_losses,
        steps,
    })
}

/// `epoch,mean_loss` rows; epoch 0 is the loss before training.
pub fn write_loss_csv<W: Write>(report: &TrainReport, mut w: W) -> Result<()> {
    writeln!(w, "epoch,mean_loss")?;
    writeln!(w, "0,{}", report.initial_loss)?;
    for (i, l) in report.epoch_losses.iter().enumerate() {
        writeln!(w, "{},{l}", i + 1)?;
    }
    w.flush()?;
    Ok(())
}
