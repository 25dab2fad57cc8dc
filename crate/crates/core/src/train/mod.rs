//! Loss assembly, mini-batch training with Adam, early stopping, and
//! checkpointing.

mod checkpoint;

pub use checkpoint::Checkpoint;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{stratified_kfold, Dataset};
use crate::error::{Error, Result};
use crate::eval::{score, Metrics};
use crate::model::{
    backward, forward, init_params, DropoutPlan, ModelConfig, WordVectors,
};
use crate::numcore::{
    adam_step, clip_frobenius, renorm_weights_frobenius, AdamState, GradientSet, ParamStore,
};
use crate::par;
use crate::supervision::{attention_penalty, compute_ranks, score_grid};
use crate::textprep::{build_vocab, encode_email, EncodedEmail};

/// Vocabulary cutoff used when training builds its own vocabulary.
pub const DEFAULT_MIN_COUNT: u64 = 2;

/// Decision threshold for turning probabilities into labels.
pub const DECISION_THRESHOLD: f64 = 0.5;

const PROB_CLAMP: f64 = 1e-12;

/// Which reading of the Frobenius-norm rescaling rule to apply each batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// Rescale oversized per-matrix gradients before the Adam step.
    #[default]
    Gradients,
    /// Rescale oversized non-embedding weight matrices after the step.
    Weights,
}

/// Everything the training loop needs; the shipped defaults follow the
/// published hyperparameters (cells 60, attention 60, embeddings 300,
/// lambda 0.1, clip 0.3, dropout 0.5, Adam at 0.0025).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early-stopping patience in epochs; 0 disables early stopping and the
    /// validation carve-out (history metrics are then measured on the
    /// training data).
    pub patience: usize,
    pub lambda: f64,
    pub dropout: f64,
    pub clip_threshold: f64,
    pub clip_mode: ClipMode,
    pub seed: u64,
    pub l: usize,
    pub k: usize,
    pub h: usize,
    pub embed_dim: usize,
    pub cell_dim: usize,
    pub att_dim: usize,
    pub use_header: bool,
    pub use_supervision: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0025,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            lambda: 0.1,
            dropout: 0.5,
            clip_threshold: 0.3,
            clip_mode: ClipMode::Gradients,
            seed: 42,
            l: 30,
            k: 50,
            h: 30,
            embed_dim: 300,
            cell_dim: 60,
            att_dim: 60,
            use_header: false,
            use_supervision: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch size and epoch count must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.clip_threshold <= 0.0 {
            return Err(Error::InvalidConfig("clip threshold must be positive".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidConfig("lambda must be non-negative".into()));
        }
        if self.l == 0 || self.k == 0 || self.h == 0 {
            return Err(Error::InvalidConfig("L, K, H must be >= 1".into()));
        }
        if self.embed_dim == 0 || self.cell_dim == 0 || self.att_dim == 0 {
            return Err(Error::InvalidConfig("model dimensions must be >= 1".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            cell_dim: self.cell_dim,
            att_dim: self.att_dim,
            l: self.l,
            k: self.k,
            h: self.h,
            use_header: self.use_header,
        }
    }

    /// The penalty term participates only when supervision is on and
    /// lambda is nonzero.
    fn supervision_active(&self) -> bool {
        self.use_supervision && self.lambda != 0.0
    }
}

/// Classification term, penalty term, trade-off and their exact total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub classification: f64,
    pub penalty: f64,
    pub lambda: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(classification: f64, penalty: f64, lambda: f64) -> Self {
        LossBreakdown {
            classification,
            penalty,
            lambda,
            total: classification + lambda * penalty,
        }
    }
}

/// One history row per completed epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// CSV with header `epoch,loss,penalty,val_precision,val_recall,val_f1`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,penalty,val_precision,val_recall,val_f1\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.4},{:.4},{:.4}\n",
                r.epoch,
                r.loss.total,
                r.loss.penalty,
                r.val_precision,
                r.val_recall,
                r.val_f1
            ));
        }
        out
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
}

/// Binary cross-entropy with the probability clamped to
/// [1e-12, 1 - 1e-12]; returns the loss and dL/dp at the clamped point.
pub fn bce_loss(p: f64, y: f64) -> (f64, f64) {
    let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    let grad = (pc - y) / (pc * (1.0 - pc));
    (loss, grad)
}

/// One email's contribution to a batch: the encoded grid, its normalized
/// importance targets when supervision is active, and the dropout masks
/// drawn for this pass.
pub struct EmailExample<'a> {
    pub encoded: &'a EncodedEmail,
    pub score_grid: Option<&'a [f64]>,
    pub dropout: Option<DropoutPlan>,
}

/// Gradients and loss terms for one email.
pub struct EmailGrad {
    pub grads: GradientSet,
    pub classification: f64,
    pub penalty: f64,
    pub p: f64,
}

/// Forward + loss + backward for a single email. `scale` multiplies every
/// upstream gradient (1/batch for mean-reduced batches); the returned loss
/// terms are unscaled.
pub fn email_gradients(
    params: &ParamStore,
    cfg: &ModelConfig,
    example: &EmailExample<'_>,
    lambda: f64,
    scale: f64,
) -> EmailGrad {
    let encoded = example.encoded;
    let trace = forward(params, cfg, encoded, example.dropout.clone());
    let y = f64::from(encoded.label.expect("training email without label"));
    let (classification, dldp) = bce_loss(trace.p, y);

    let mut penalty = 0.0;
    let alpha_grad: Option<Vec<f64>> = example.score_grid.map(|g| {
        let alpha = trace.word_attention_grid(cfg.l, cfg.k);
        penalty = attention_penalty(
            &alpha,
            g,
            &encoded.body_mask,
            &encoded.sentence_mask,
            cfg.k,
        );
        let mut grad = vec![0.0; alpha.len()];
        for (cell, gv) in grad.iter_mut().enumerate() {
            if encoded.body_mask[cell] != 0 {
                *gv = scale * lambda * 2.0 * (alpha[cell] - g[cell]);
            }
        }
        grad
    });

    let grads = backward(params, cfg, &trace, scale * dldp, alpha_grad.as_deref());
    EmailGrad {
        grads,
        classification,
        penalty,
        p: trace.p,
    }
}

/// Per-email gradients for a whole batch, computed in parallel when the
/// `parallel` feature is on. Results are ordered by batch position, so the
/// caller's sequential reduction is bit-identical for any thread count.
pub fn batch_gradients(
    params: &ParamStore,
    cfg: &ModelConfig,
    examples: &[EmailExample<'_>],
    lambda: f64,
) -> Vec<EmailGrad> {
    let scale = 1.0 / examples.len() as f64;
    par::map_ordered(examples, |ex| email_gradients(params, cfg, ex, lambda, scale))
}

/// Sequential twin of [`batch_gradients`], kept callable for benchmarks and
/// equivalence tests.
pub fn batch_gradients_seq(
    params: &ParamStore,
    cfg: &ModelConfig,
    examples: &[EmailExample<'_>],
    lambda: f64,
) -> Vec<EmailGrad> {
    let scale = 1.0 / examples.len() as f64;
    examples
        .iter()
        .map(|ex| email_gradients(params, cfg, ex, lambda, scale))
        .collect()
}

fn predict_labels(
    params: &ParamStore,
    cfg: &ModelConfig,
    encoded: &[EncodedEmail],
) -> Vec<(f64, u8)> {
    par::map_ordered(encoded, |enc| {
        let trace = forward(params, cfg, enc, None);
        (trace.p, u8::from(trace.p >= DECISION_THRESHOLD))
    })
}

fn eval_metrics(params: &ParamStore, cfg: &ModelConfig, encoded: &[EncodedEmail]) -> Metrics {
    let preds: Vec<u8> = predict_labels(params, cfg, encoded)
        .into_iter()
        .map(|(_, l)| l)
        .collect();
    let labels: Vec<u8> = encoded.iter().map(|e| e.label.unwrap()).collect();
    score(&preds, &labels).expect("evaluation sets are non-empty and labeled")
}

/// Trains on `dataset`, optionally warm-starting embeddings from `vectors`.
///
/// Per epoch: seeded shuffle, mini-batches, forward with dropout, mean
/// loss, backward, Frobenius rescaling, Adam. With patience > 0 a
/// stratified tenth of the data is held out and the checkpoint with the
/// best validation F1 is returned; otherwise the final parameters are.
pub fn train(
    dataset: &Dataset,
    cfg: &TrainConfig,
    vectors: Option<&WordVectors>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    dataset.require_labels()?;
    if cfg.use_header && !dataset.has_headers {
        return Err(Error::CheckpointMismatch(
            "use_header requires a corpus where every email has a header".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // validation carve-out: one stratified tenth
    let patience_active = cfg.patience > 0 && dataset.len() >= 10;
    if cfg.patience > 0 && !patience_active {
        log::warn!("dataset too small for a validation split; early stopping disabled");
    }
    let (train_set, val_set) = if patience_active {
        let folds = stratified_kfold(dataset, 10, cfg.seed)?;
        let (train_idx, val_idx) = folds.split_indices(dataset, 0);
        (dataset.subset(&train_idx), Some(dataset.subset(&val_idx)))
    } else {
        (dataset.clone(), None)
    };

    let vocab = build_vocab(&train_set, DEFAULT_MIN_COUNT);
    let model_cfg = cfg.model_config(vocab.size());
    let mut params = init_params(&model_cfg, &vocab, vectors, &mut rng);
    let mut adam = AdamState::new(&params, cfg.learning_rate);

    let table = if cfg.supervision_active() {
        Some(compute_ranks(&train_set, &vocab)?)
    } else {
        None
    };

    let encode_all = |set: &Dataset| -> Vec<EncodedEmail> {
        set.emails
            .iter()
            .map(|e| encode_email(e, &vocab, cfg.l, cfg.k, cfg.h))
            .collect()
    };
    let train_enc = encode_all(&train_set);
    let val_enc = val_set.as_ref().map(|s| encode_all(s));

    let grids: Option<Vec<Vec<f64>>> = table
        .as_ref()
        .map(|t| train_enc.iter().map(|e| score_grid(e, t)).collect());

    let n_train = train_enc.len();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ParamStore, AdamState)> = None;
    let mut stall = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut rng);

        let mut sum_class = 0.0;
        let mut sum_penalty = 0.0;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            // dropout masks come from the single master RNG, before the
            // parallel section, so the stream is thread-count independent
            let mut examples = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let dropout = if cfg.dropout > 0.0 {
                    Some(DropoutPlan::generate(
                        &train_enc[idx],
                        &model_cfg,
                        cfg.dropout,
                        &mut rng,
                    )?)
                } else {
                    None
                };
                examples.push(EmailExample {
                    encoded: &train_enc[idx],
                    score_grid: grids.as_ref().map(|g| g[idx].as_slice()),
                    dropout,
                });
            }

            let results = batch_gradients(&params, &model_cfg, &examples, cfg.lambda);
            for (r, &idx) in results.iter().zip(chunk) {
                if !r.classification.is_finite() || !r.penalty.is_finite() {
                    return Err(Error::TrainingAborted {
                        epoch,
                        batch: batch_no,
                        message: format!(
                            "non-finite loss on email {:?}",
                            train_set.emails[idx].id
                        ),
                    });
                }
                params.accumulate(&r.grads);
                sum_class += r.classification;
                sum_penalty += r.penalty;
            }

            match cfg.clip_mode {
                ClipMode::Gradients => {
                    clip_frobenius(&mut params, cfg.clip_threshold);
                    adam_step(&mut params, &mut adam);
                }
                ClipMode::Weights => {
                    adam_step(&mut params, &mut adam);
                    renorm_weights_frobenius(&mut params, cfg.clip_threshold);
                }
            }
            params.zero_grads();
        }

        let mean_class = sum_class / n_train as f64;
        let mean_penalty = if cfg.supervision_active() {
            sum_penalty / n_train as f64
        } else {
            0.0
        };
        let loss = LossBreakdown::new(mean_class, mean_penalty, cfg.lambda);

        let metrics = match &val_enc {
            Some(v) => eval_metrics(&params, &model_cfg, v),
            None => eval_metrics(&params, &model_cfg, &train_enc),
        };
        history.epochs.push(EpochRecord {
            epoch,
            loss,
            val_precision: metrics.precision,
            val_recall: metrics.recall,
            val_f1: metrics.f1,
        });

        if patience_active {
            let improved = best.as_ref().map_or(true, |(f1, _, _)| metrics.f1 > *f1);
            if improved {
                best = Some((metrics.f1, params.clone(), adam.clone()));
                stall = 0;
            } else {
                stall += 1;
                if stall >= cfg.patience {
                    break;
                }
            }
        }
    }

    let (params, adam) = match best {
        Some((_, p, a)) => (p, a),
        None => (params, adam),
    };
    let checkpoint = Checkpoint {
        model: model_cfg,
        train_config: cfg.clone(),
        vocab,
        params,
        adam,
    };
    Ok(TrainOutcome {
        checkpoint,
        history,
    })
}
