//! Linear softmax learner with a normalized low-dimensional auxiliary head.
//!
//! The main head maps trunk features straight to class logits. The
//! auxiliary head projects the same features with a bias-free matrix,
//! L2-normalizes the result onto the unit sphere and classifies from
//! there; those unit vectors are the embeddings acquisition runs on. The
//! total loss is `CE(main) + λ·CE(aux)`. After `stop_epoch` epochs the
//! auxiliary loss stops reaching parameters that the main path also uses,
//! which only matters when the optional tanh hidden layer is enabled.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, invalid_state, DacsError, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::Seed;
use crate::selection::{ScoreSource, UncertaintyScores};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_classes: usize,
    pub reduced_dim: usize,
    /// Width of an optional shared tanh layer; `None` feeds inputs directly
    /// to both heads.
    pub hidden: Option<usize>,
    pub lambda: f64,
    pub epochs: usize,
    pub stop_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiply the learning rate by 0.1 from 80% of the epochs onward.
    pub lr_decay: bool,
    /// Train the auxiliary head at all. Disabling it gives the plain main
    /// classifier.
    pub aux_head: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_classes: 2,
            reduced_dim: 16,
            hidden: None,
            lambda: 1.0,
            epochs: 60,
            stop_epoch: 45,
            batch_size: 32,
            learning_rate: 0.5,
            lr_decay: true,
            aux_head: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.n_classes < 2 {
            return Err(invalid_argument("need at least two classes"));
        }
        let trunk_dim = self.hidden.unwrap_or(input_dim);
        if self.reduced_dim == 0 || self.reduced_dim >= trunk_dim {
            return Err(invalid_argument(format!(
                "reduced dimension {} must be in [1, {trunk_dim})",
                self.reduced_dim
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid_argument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.stop_epoch > self.epochs {
            return Err(invalid_argument(format!(
                "stop epoch {} exceeds epoch count {}",
                self.stop_epoch, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(invalid_argument("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid_argument("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Dense layer, weights stored input-major (`w[i * out + o]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize, bias: bool) -> Self {
        Dense {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: if bias { vec![0.0; outputs] } else { Vec::new() },
        }
    }

    fn init(inputs: usize, outputs: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut layer = Dense::zeros(inputs, outputs, bias);
        for w in &mut layer.w {
            *w = rng.random_range(-bound..=bound);
        }
        layer
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        if self.b.is_empty() {
            out.iter_mut().for_each(|o| *o = 0.0);
        } else {
            out.copy_from_slice(&self.b);
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.w[i * self.outputs..(i + 1) * self.outputs];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }

    /// Accumulate `x ⊗ g` into this (gradient) layer and return `W g`.
    fn backward(&mut self, weights: &Dense, x: &[f64], g: &[f64], grad_input: Option<&mut [f64]>) {
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut self.w[i * self.outputs..(i + 1) * self.outputs];
            for (r, &gj) in row.iter_mut().zip(g) {
                *r += xi * gj;
            }
        }
        for (b, &gj) in self.b.iter_mut().zip(g) {
            *b += gj;
        }
        if let Some(gi) = grad_input {
            for (i, v) in gi.iter_mut().enumerate() {
                let row = &weights.w[i * weights.outputs..(i + 1) * weights.outputs];
                *v = row.iter().zip(g).map(|(w, gj)| w * gj).sum();
            }
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.w.iter().chain(&self.b)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w.iter_mut().chain(self.b.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub trunk: Option<Dense>,
    pub main: Dense,
    /// Bias-free projection to the reduced dimension.
    pub projection: Dense,
    pub aux: Dense,
}

impl Params {
    fn zeros_like(&self) -> Params {
        let z = |l: &Dense| Dense::zeros(l.inputs, l.outputs, !l.b.is_empty());
        Params {
            trunk: self.trunk.as_ref().map(z),
            main: z(&self.main),
            projection: z(&self.projection),
            aux: z(&self.aux),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk.iter().chain([&self.main, &self.projection, &self.aux])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain([&mut self.main, &mut self.projection, &mut self.aux])
    }

    /// All parameters in a fixed order: trunk, main, projection, aux.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers().flat_map(Dense::params).copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.layers().map(|l| l.w.len() + l.b.len()).sum();
        if flat.len() != total {
            return Err(invalid_argument(format!(
                "expected {total} parameters, got {}",
                flat.len()
            )));
        }
        for (p, &v) in self.layers_mut().flat_map(Dense::params_mut).zip(flat) {
            *p = v;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers().flat_map(Dense::params).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub params: Params,
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutputs {
    pub n_classes: usize,
    /// Row-major n × c main-head probabilities.
    pub probs: Vec<f64>,
    /// Unit-norm auxiliary embeddings.
    pub embeddings: FeatureMatrix,
    pub entropy: Vec<f64>,
    pub loss_per_sample: Option<Vec<f64>>,
}

impl ModelOutputs {
    pub fn n(&self) -> usize {
        self.entropy.len()
    }

    pub fn prob_row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn predictions(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                let row = self.prob_row(i);
                let mut best = 0;
                for (k, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn accuracy(&self, labels: &[usize]) -> f64 {
        let hits = self
            .predictions()
            .iter()
            .zip(labels)
            .filter(|(p, y)| p == y)
            .count();
        hits as f64 / labels.len().max(1) as f64
    }
}

/// Forward-pass intermediates for one sample.
struct Activations {
    trunk: Vec<f64>,
    main_probs: Vec<f64>,
    proj: Vec<f64>,
    proj_norm: f64,
    embedding: Vec<f64>,
    aux_probs: Vec<f64>,
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    v.iter_mut().for_each(|x| *x /= z);
}

/// Scale `u` to unit length; the zero vector maps to the uniform direction.
fn normalize_embedding(u: &[f64]) -> (Vec<f64>, f64) {
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        (u.iter().map(|v| v / norm).collect(), norm)
    } else {
        let c = 1.0 / (u.len() as f64).sqrt();
        (vec![c; u.len()], 0.0)
    }
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

impl ToyModel {
    /// Fresh parameters drawn from the seed's "init" stream.
    pub fn new(config: ModelConfig, input_dim: usize, seed: Seed) -> Result<Self> {
        config.validate(input_dim)?;
        let mut rng = seed.stream("init");
        let trunk = config.hidden.map(|h| Dense::init(input_dim, h, true, &mut rng));
        let feat = config.hidden.unwrap_or(input_dim);
        let main = Dense::init(feat, config.n_classes, true, &mut rng);
        let projection = Dense::init(feat, config.reduced_dim, false, &mut rng);
        let aux = Dense::init(config.reduced_dim, config.n_classes, true, &mut rng);
        Ok(ToyModel {
            config,
            input_dim,
            params: Params {
                trunk,
                main,
                projection,
                aux,
            },
        })
    }

    /// All-zero parameters.
    pub fn zeros(config: ModelConfig, input_dim: usize) -> Result<Self> {
        let mut m = ToyModel::new(config, input_dim, Seed(0))?;
        for l in m.params.layers_mut() {
            l.params_mut().for_each(|v| *v = 0.0);
        }
        Ok(m)
    }

    fn forward(&self, x: &[f64]) -> Activations {
        let p = &self.params;
        let trunk = match &p.trunk {
            Some(layer) => {
                let mut h = vec![0.0; layer.outputs];
                layer.forward(x, &mut h);
                h.iter_mut().for_each(|v| *v = v.tanh());
                h
            }
            None => x.to_vec(),
        };
        let mut main_probs = vec![0.0; self.config.n_classes];
        p.main.forward(&trunk, &mut main_probs);
        softmax_in_place(&mut main_probs);

        let mut proj = vec![0.0; self.config.reduced_dim];
        p.projection.forward(&trunk, &mut proj);
        let (embedding, proj_norm) = normalize_embedding(&proj);
        let mut aux_probs = vec![0.0; self.config.n_classes];
        p.aux.forward(&embedding, &mut aux_probs);
        softmax_in_place(&mut aux_probs);
        Activations {
            trunk,
            main_probs,
            proj,
            proj_norm,
            embedding,
            aux_probs,
        }
    }

    /// Mean total loss over `rows` and its gradient. `aux_to_shared`
    /// controls whether the auxiliary loss reaches the shared trunk.
    pub fn loss_and_gradient(
        &self,
        x: &FeatureMatrix,
        labels: &[usize],
        rows: &[usize],
        aux_to_shared: bool,
    ) -> (f64, Params) {
        let lambda = if self.config.aux_head { self.config.lambda } else { 0.0 };
        let p = &self.params;
        let mut grad = p.zeros_like();
        let mut loss = 0.0;
        let scale = 1.0 / rows.len() as f64;
        let feat = p.main.inputs;
        let mut g_main_trunk = vec![0.0; feat];
        let mut g_aux_trunk = vec![0.0; feat];
        let mut g_emb = vec![0.0; self.config.reduced_dim];

        for &r in rows {
            let xr = x.row(r);
            let y = labels[r];
            let a = self.forward(xr);
            loss -= a.main_probs[y].ln();

            let mut g_logits: Vec<f64> = a.main_probs.clone();
            g_logits[y] -= 1.0;
            g_logits.iter_mut().for_each(|v| *v *= scale);
            grad.main.backward(&p.main, &a.trunk, &g_logits, Some(&mut g_main_trunk));

            if self.config.aux_head {
                loss -= lambda * a.aux_probs[y].ln();
                let mut g_aux: Vec<f64> = a.aux_probs.clone();
                g_aux[y] -= 1.0;
                g_aux.iter_mut().for_each(|v| *v *= lambda * scale);
                grad.aux.backward(&p.aux, &a.embedding, &g_aux, Some(&mut g_emb));
                // d(u/‖u‖)/du = (I − ẑẑᵀ)/‖u‖
                let g_proj: Vec<f64> = if a.proj_norm > 0.0 {
                    let along: f64 = a.embedding.iter().zip(&g_emb).map(|(e, g)| e * g).sum();
                    g_emb
                        .iter()
                        .zip(&a.embedding)
                        .map(|(g, e)| (g - e * along) / a.proj_norm)
                        .collect()
                } else {
                    vec![0.0; a.proj.len()]
                };
                grad.projection
                    .backward(&p.projection, &a.trunk, &g_proj, Some(&mut g_aux_trunk));
            } else {
                g_aux_trunk.iter_mut().for_each(|v| *v = 0.0);
            }

            if let (Some(layer), Some(gl)) = (&p.trunk, grad.trunk.as_mut()) {
                let g_pre: Vec<f64> = (0..feat)
                    .map(|k| {
                        let g = if aux_to_shared {
                            g_main_trunk[k] + g_aux_trunk[k]
                        } else {
                            g_main_trunk[k]
                        };
                        g * (1.0 - a.trunk[k] * a.trunk[k])
                    })
                    .collect();
                gl.backward(layer, xr, &g_pre, None);
            }
        }
        (loss * scale, grad)
    }

    /// Mini-batch gradient descent on the labeled rows.
    pub fn train(
        &mut self,
        x: &FeatureMatrix,
        labels: &[usize],
        labeled: &[usize],
        seed: Seed,
    ) -> Result<TrainReport> {
        if labeled.is_empty() {
            return Err(invalid_state("cannot train on an empty labeled set"));
        }
        if x.d() != self.input_dim {
            return Err(invalid_argument(format!(
                "model expects {} features, got {}",
                self.input_dim,
                x.d()
            )));
        }
        if labels.len() != x.n() {
            return Err(invalid_argument("labels not aligned to features"));
        }
        if let Some(&i) = labeled.iter().find(|&&i| i >= x.n() || labels[i] >= self.config.n_classes) {
            return Err(invalid_argument(format!("bad labeled sample {i}")));
        }

        let cfg = self.config.clone();
        let mut rng = seed.stream("shuffle");
        let mut order = labeled.to_vec();
        let decay_from = (cfg.epochs as f64 * 0.8).floor() as usize;
        let mut epoch_losses = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let lr = if cfg.lr_decay && epoch >= decay_from {
                cfg.learning_rate * 0.1
            } else {
                cfg.learning_rate
            };
            let aux_to_shared = epoch < cfg.stop_epoch;
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let (loss, grad) = self.loss_and_gradient(x, labels, batch, aux_to_shared);
                if !loss.is_finite() {
                    return Err(DacsError::Divergence {
                        epoch: epoch + 1,
                        learning_rate: lr,
                    });
                }
                total += loss * batch.len() as f64;
                for (w, g) in self.params.layers_mut().zip(grad.layers()) {
                    for (p, d) in w.params_mut().zip(g.params()) {
                        *p -= lr * d;
                    }
                }
            }
            epoch_losses.push(total / order.len() as f64);
        }
        if !self.params.all_finite() {
            return Err(DacsError::Divergence {
                epoch: cfg.epochs,
                learning_rate: cfg.learning_rate,
            });
        }
        Ok(TrainReport { epoch_losses })
    }

    /// Deterministic forward pass over every row.
    pub fn infer(&self, x: &FeatureMatrix) -> ModelOutputs {
        let c = self.config.n_classes;
        let dn = self.config.reduced_dim;
        let mut probs = Vec::with_capacity(x.n() * c);
        let mut emb = Vec::with_capacity(x.n() * dn);
        let mut ent = Vec::with_capacity(x.n());
        for row in x.rows() {
            let a = self.forward(row);
            ent.push(entropy(&a.main_probs));
            probs.extend_from_slice(&a.main_probs);
            emb.extend_from_slice(&a.embedding);
        }
        let embeddings = FeatureMatrix::new(x.n(), dn, emb).expect("finite embeddings");
        ModelOutputs {
            n_classes: c,
            probs,
            embeddings,
            entropy: ent,
            loss_per_sample: None,
        }
    }

    /// Forward pass plus per-sample cross-entropy against `labels`.
    pub fn infer_with_labels(&self, x: &FeatureMatrix, labels: &[usize]) -> Result<ModelOutputs> {
        if labels.len() != x.n() {
            return Err(invalid_argument("labels not aligned to features"));
        }
        let mut out = self.infer(x);
        let losses = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -out.prob_row(i)[y].max(f64::MIN_POSITIVE).ln())
            .collect();
        out.loss_per_sample = Some(losses);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyKind {
    Entropy,
    /// `1 − (p_top1 − p_top2)`; needs no labels.
    LossProxy,
}

pub fn uncertainty(outputs: &ModelOutputs, kind: UncertaintyKind) -> UncertaintyScores {
    match kind {
        UncertaintyKind::Entropy => UncertaintyScores::new(outputs.entropy.clone(), ScoreSource::Entropy),
        UncertaintyKind::LossProxy => {
            let scores = (0..outputs.n())
                .map(|i| {
                    let mut top = [f64::NEG_INFINITY; 2];
                    for &p in outputs.prob_row(i) {
                        if p > top[0] {
                            top = [p, top[0]];
                        } else if p > top[1] {
                            top[1] = p;
                        }
                    }
                    1.0 - (top[0] - top[1])
                })
                .collect();
            UncertaintyScores::new(scores, ScoreSource::LossProxy)
        }
    }
}
