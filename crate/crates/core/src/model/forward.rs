use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{dot, dropout_mask, masked_softmax, ParamStore};
use crate::textprep::EncodedEmail;

use super::lstm::{lstm_cell_traced, LstmStep};
use super::{block_params, sigmoid, AttentionParams, BlockParams, ModelConfig};
use super::{EMBEDDING, HEAD_BLOCK, SENT_BLOCK, WORD_BLOCK};

/// Attention pooling over a hidden sequence: project with tanh, score
/// against the context vector, softmax over unmasked positions, and sum.
/// Returns the full-width weight vector (zeros at masked positions) and
/// the pooled vector; an all-masked input pools to the zero vector.
pub fn attention_pool(
    hiddens: &[Vec<f64>],
    mask: &[u8],
    params: &AttentionParams<'_>,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(hiddens.len(), mask.len(), "attention mask length mismatch");
    let hidden_dim = params.w.cols();
    let mut logits = vec![0.0; hiddens.len()];
    for (j, (h, &m)) in hiddens.iter().zip(mask).enumerate() {
        if m == 0 {
            continue;
        }
        let mut proj = params.w.matvec(h);
        for (p, b) in proj.iter_mut().zip(params.b.values()) {
            *p = (*p + b).tanh();
        }
        logits[j] = dot(&proj, params.v.values());
    }
    let weights = masked_softmax(&logits, mask);
    let mut pooled = vec![0.0; hidden_dim];
    for (j, h) in hiddens.iter().enumerate() {
        if mask[j] == 0 {
            continue;
        }
        for (p, hv) in pooled.iter_mut().zip(h) {
            *p += weights[j] * hv;
        }
    }
    (weights, pooled)
}

/// Trace of one BiLSTM + attention block over the real positions of a
/// sequence. Position indices run over real positions only; the caller
/// keeps track of how they map back onto the padded grid.
#[derive(Clone, Debug)]
pub struct SeqTrace {
    /// Vectors actually fed to the LSTMs (post-dropout where applicable).
    pub inputs: Vec<Vec<f64>>,
    /// Token ids behind `inputs`, when the inputs were embedding rows.
    pub token_ids: Option<Vec<u32>>,
    /// Per-position step records; `bwd[p]` is the step that processed
    /// position p while running right-to-left.
    pub fwd: Vec<LstmStep>,
    pub bwd: Vec<LstmStep>,
    /// Concatenated [forward; backward] hidden per position.
    pub h_cat: Vec<Vec<f64>>,
    /// tanh attention projections per position.
    pub att_proj: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    /// Attention weights over real positions (sum to 1 when non-empty).
    pub weights: Vec<f64>,
    pub pooled: Vec<f64>,
}

/// Runs one block over already-assembled input vectors (all real).
pub fn run_block(
    store: &ParamStore,
    prefix: &str,
    inputs: Vec<Vec<f64>>,
    token_ids: Option<Vec<u32>>,
) -> SeqTrace {
    let BlockParams { fwd, bwd, att } = block_params(store, prefix);
    let cell = fwd.wh.cols();
    let n = inputs.len();

    let mut fwd_steps = Vec::with_capacity(n);
    let mut h = vec![0.0; cell];
    let mut c = vec![0.0; cell];
    for x in &inputs {
        let step = lstm_cell_traced(x, &h, &c, fwd.wx, fwd.wh, fwd.b);
        h = step.h.clone();
        c = step.c.clone();
        fwd_steps.push(step);
    }

    let mut bwd_steps: Vec<Option<LstmStep>> = (0..n).map(|_| None).collect();
    let mut h = vec![0.0; cell];
    let mut c = vec![0.0; cell];
    for p in (0..n).rev() {
        let step = lstm_cell_traced(&inputs[p], &h, &c, bwd.wx, bwd.wh, bwd.b);
        h = step.h.clone();
        c = step.c.clone();
        bwd_steps[p] = Some(step);
    }
    let bwd_steps: Vec<LstmStep> = bwd_steps.into_iter().map(|s| s.unwrap()).collect();

    let mut h_cat = Vec::with_capacity(n);
    for p in 0..n {
        let mut v = Vec::with_capacity(2 * cell);
        v.extend_from_slice(&fwd_steps[p].h);
        v.extend_from_slice(&bwd_steps[p].h);
        h_cat.push(v);
    }

    let mut att_proj = Vec::with_capacity(n);
    let mut logits = vec![0.0; n];
    for p in 0..n {
        let mut proj = att.w.matvec(&h_cat[p]);
        for (v, b) in proj.iter_mut().zip(att.b.values()) {
            *v = (*v + b).tanh();
        }
        logits[p] = dot(&proj, att.v.values());
        att_proj.push(proj);
    }
    let all_real = vec![1u8; n];
    let weights = masked_softmax(&logits, &all_real);
    let mut pooled = vec![0.0; 2 * cell];
    for p in 0..n {
        for (acc, hv) in pooled.iter_mut().zip(&h_cat[p]) {
            *acc += weights[p] * hv;
        }
    }

    SeqTrace {
        inputs,
        token_ids,
        fwd: fwd_steps,
        bwd: bwd_steps,
        h_cat,
        att_proj,
        logits,
        weights,
        pooled,
    }
}

/// Dropout masks generated up front for one email's training forward pass.
/// `sentence_masks[i]` applies to the pooled vector of real sentence i
/// before it enters the sentence-level BiLSTM; `final_mask` applies to the
/// representation fed to the output layer.
#[derive(Clone, Debug)]
pub struct DropoutPlan {
    pub sentence_masks: Vec<Vec<f64>>,
    pub final_mask: Vec<f64>,
}

impl DropoutPlan {
    pub fn generate<R: Rng>(
        encoded: &EncodedEmail,
        cfg: &ModelConfig,
        rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let hidden = cfg.hidden_dim();
        let mut sentence_masks = Vec::new();
        for _ in 0..encoded.real_sentences() {
            sentence_masks.push(dropout_mask(hidden, rate, rng)?);
        }
        let final_mask = dropout_mask(cfg.output_input_dim(), rate, rng)?;
        Ok(DropoutPlan {
            sentence_masks,
            final_mask,
        })
    }
}

/// Trace of the body pipeline: one word-level block per real sentence, the
/// sentence-level block over their pooled vectors, and the body vector.
#[derive(Clone, Debug)]
pub struct BodyTrace {
    pub sentences: Vec<SeqTrace>,
    /// Pooled sentence vectors after dropout, as fed to the sentence level.
    pub sent_inputs_dropped: Vec<Vec<f64>>,
    pub sent: SeqTrace,
    pub r_body: Vec<f64>,
}

/// Trace of one full forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub body: BodyTrace,
    pub header: Option<SeqTrace>,
    /// Final representation before dropout ([r_body] or [r_body; r_head]).
    pub r: Vec<f64>,
    pub r_dropped: Vec<f64>,
    pub z: f64,
    pub p: f64,
    pub dropout: Option<DropoutPlan>,
}

impl ForwardTrace {
    /// Word-level attention weights on the padded L x K grid; padded cells
    /// (and sentences beyond the real count) hold exactly 0.
    pub fn word_attention_grid(&self, l: usize, k: usize) -> Vec<f64> {
        let mut grid = vec![0.0; l * k];
        for (i, st) in self.body.sentences.iter().enumerate() {
            for (j, &w) in st.weights.iter().enumerate() {
                grid[i * k + j] = w;
            }
        }
        grid
    }

    /// Sentence-level attention weights padded to length L.
    pub fn sentence_attention(&self, l: usize) -> Vec<f64> {
        let mut out = vec![0.0; l];
        for (i, &w) in self.body.sent.weights.iter().enumerate() {
            out[i] = w;
        }
        out
    }
}

fn embed_row(store: &ParamStore, id: u32) -> Vec<f64> {
    store.get(EMBEDDING).row(id as usize).to_vec()
}

/// Word-level blocks over each real sentence, then the sentence-level
/// block over the (optionally dropped-out) pooled vectors.
pub fn body_forward(
    store: &ParamStore,
    encoded: &EncodedEmail,
    dropout: Option<&DropoutPlan>,
) -> BodyTrace {
    let n_sentences = encoded.real_sentences();
    let mut sentences = Vec::with_capacity(n_sentences);
    for i in 0..n_sentences {
        let (ids, mask) = encoded.body_row(i);
        let n = mask.iter().filter(|&&m| m != 0).count();
        let token_ids: Vec<u32> = ids[..n].to_vec();
        let inputs: Vec<Vec<f64>> = token_ids.iter().map(|&id| embed_row(store, id)).collect();
        sentences.push(run_block(store, WORD_BLOCK, inputs, Some(token_ids)));
    }

    let sent_inputs_dropped: Vec<Vec<f64>> = sentences
        .iter()
        .enumerate()
        .map(|(i, st)| match dropout {
            Some(plan) => st
                .pooled
                .iter()
                .zip(&plan.sentence_masks[i])
                .map(|(v, m)| v * m)
                .collect(),
            None => st.pooled.clone(),
        })
        .collect();

    let sent = run_block(store, SENT_BLOCK, sent_inputs_dropped.clone(), None);
    let r_body = sent.pooled.clone();
    BodyTrace {
        sentences,
        sent_inputs_dropped,
        sent,
        r_body,
    }
}

/// The header pipeline: one word-level-style block over the header tokens
/// with its own parameters. An all-masked header pools to the zero vector.
pub fn header_forward(store: &ParamStore, encoded: &EncodedEmail) -> SeqTrace {
    let n = encoded.real_header_tokens();
    let token_ids: Vec<u32> = encoded.header_ids[..n].to_vec();
    let inputs: Vec<Vec<f64>> = token_ids.iter().map(|&id| embed_row(store, id)).collect();
    run_block(store, HEAD_BLOCK, inputs, Some(token_ids))
}

/// Full forward pass. `dropout` is None in evaluation mode.
pub fn forward(
    store: &ParamStore,
    cfg: &ModelConfig,
    encoded: &EncodedEmail,
    dropout: Option<DropoutPlan>,
) -> ForwardTrace {
    let body = body_forward(store, encoded, dropout.as_ref());

    let (header, r) = if cfg.use_header {
        let ht = header_forward(store, encoded);
        let mut r = body.r_body.clone();
        r.extend_from_slice(&ht.pooled);
        (Some(ht), r)
    } else {
        (None, body.r_body.clone())
    };

    let r_dropped: Vec<f64> = match &dropout {
        Some(plan) => r.iter().zip(&plan.final_mask).map(|(v, m)| v * m).collect(),
        None => r.clone(),
    };

    let (w_name, b_name) = if cfg.use_header {
        ("sub_w", "sub_b")
    } else {
        ("out_w", "out_b")
    };
    let z = store.get(w_name).matvec(&r_dropped)[0] + store.get(b_name).values()[0];
    let p = sigmoid(z);

    ForwardTrace {
        body,
        header,
        r,
        r_dropped,
        z,
        p,
        dropout,
    }
}

/// Evaluation-mode probability that the email is phishing, plus the full
/// trace. Errors when the header network is requested on an encoding that
/// carries no header capacity.
pub fn predict_proba(
    store: &ParamStore,
    cfg: &ModelConfig,
    encoded: &EncodedEmail,
    use_header: bool,
) -> Result<(f64, ForwardTrace)> {
    if use_header != cfg.use_header {
        return Err(Error::CheckpointMismatch(format!(
            "model built with use_header={}, requested use_header={}",
            cfg.use_header, use_header
        )));
    }
    if use_header && encoded.header_mask.is_empty() {
        return Err(Error::CheckpointMismatch(
            "header network requested but the encoding has no header fields".into(),
        ));
    }
    let trace = forward(store, cfg, encoded, None);
    Ok((trace.p, trace))
}
