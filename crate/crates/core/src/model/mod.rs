//! The body network (word-level BiLSTM + attention feeding a sentence-level
//! BiLSTM + attention), the optional header network, and their hand-derived
//! backward passes.

mod backward;
mod embedding;
mod forward;
mod lstm;

pub use backward::backward;
pub use embedding::{load_word_vectors, WordVectors};
pub use forward::{
    attention_pool, body_forward, forward, header_forward, predict_proba, run_block, BodyTrace,
    DropoutPlan, ForwardTrace, SeqTrace,
};
pub use lstm::{bilstm, lstm_cell, LstmStep};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numcore::{Matrix, ParamStore};
use crate::textprep::{Vocabulary, PAD};

/// Parameter-name prefixes for the three BiLSTM+attention blocks.
pub const WORD_BLOCK: &str = "word";
pub const SENT_BLOCK: &str = "sent";
pub const HEAD_BLOCK: &str = "head";
pub const EMBEDDING: &str = "embedding";

/// Shape of the network. `l`/`k`/`h` are the padded grid dimensions the
/// encoder used; `cell_dim` is the LSTM cell size (hiddens are 2x that
/// after direction concat) and `att_dim` the attention projection size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub cell_dim: usize,
    pub att_dim: usize,
    pub l: usize,
    pub k: usize,
    pub h: usize,
    pub use_header: bool,
}

impl ModelConfig {
    /// Dimension of a concatenated BiLSTM hidden vector.
    pub fn hidden_dim(&self) -> usize {
        2 * self.cell_dim
    }

    /// Dimension of the final representation fed to the output layer.
    pub fn output_input_dim(&self) -> usize {
        if self.use_header {
            4 * self.cell_dim
        } else {
            2 * self.cell_dim
        }
    }
}

/// Borrowed view of one LSTM direction's weights: input-to-gate, hidden-to-
/// gate, and the stacked gate bias (gate order i, f, g, o).
#[derive(Clone, Copy)]
pub struct LstmParams<'a> {
    pub wx: &'a Matrix,
    pub wh: &'a Matrix,
    pub b: &'a Matrix,
}

/// Borrowed view of one attention module's parameters.
#[derive(Clone, Copy)]
pub struct AttentionParams<'a> {
    pub w: &'a Matrix,
    pub b: &'a Matrix,
    pub v: &'a Matrix,
}

pub(crate) struct BlockParams<'a> {
    pub fwd: LstmParams<'a>,
    pub bwd: LstmParams<'a>,
    pub att: AttentionParams<'a>,
}

pub(crate) fn block_params<'a>(store: &'a ParamStore, prefix: &str) -> BlockParams<'a> {
    BlockParams {
        fwd: LstmParams {
            wx: store.get(&format!("{prefix}_fwd_wx")),
            wh: store.get(&format!("{prefix}_fwd_wh")),
            b: store.get(&format!("{prefix}_fwd_b")),
        },
        bwd: LstmParams {
            wx: store.get(&format!("{prefix}_bwd_wx")),
            wh: store.get(&format!("{prefix}_bwd_wh")),
            b: store.get(&format!("{prefix}_bwd_b")),
        },
        att: AttentionParams {
            w: store.get(&format!("{prefix}_att_w")),
            b: store.get(&format!("{prefix}_att_b")),
            v: store.get(&format!("{prefix}_att_v")),
        },
    }
}

const INIT_RANGE: f64 = 0.08;

fn uniform_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let values = (0..rows * cols)
        .map(|_| rng.random_range(-INIT_RANGE..INIT_RANGE))
        .collect();
    Matrix::from_values(rows, cols, values)
}

/// Gate bias vector: zeros with the forget-gate slice set to 1.
fn lstm_bias(cell: usize) -> Matrix {
    let mut b = Matrix::zeros(4 * cell, 1);
    for i in cell..2 * cell {
        b.values_mut()[i] = 1.0;
    }
    b
}

fn insert_block<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    input_dim: usize,
    cell: usize,
    att: usize,
    rng: &mut R,
) {
    for dir in ["fwd", "bwd"] {
        store.insert(
            &format!("{prefix}_{dir}_wx"),
            uniform_matrix(4 * cell, input_dim, rng),
            false,
        );
        store.insert(
            &format!("{prefix}_{dir}_wh"),
            uniform_matrix(4 * cell, cell, rng),
            false,
        );
        store.insert(&format!("{prefix}_{dir}_b"), lstm_bias(cell), false);
    }
    store.insert(
        &format!("{prefix}_att_w"),
        uniform_matrix(att, 2 * cell, rng),
        false,
    );
    store.insert(&format!("{prefix}_att_b"), Matrix::zeros(att, 1), false);
    store.insert(
        &format!("{prefix}_att_v"),
        uniform_matrix(att, 1, rng),
        false,
    );
}

/// Builds all trainable parameters. Vocabulary rows present in `vectors`
/// are copied from the file; everything else is drawn uniform(-0.08, 0.08)
/// except biases (zeros, LSTM forget gate 1) and the PAD embedding row,
/// which is pinned to zero and never receives gradient.
pub fn init_params<R: Rng>(
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    vectors: Option<&WordVectors>,
    rng: &mut R,
) -> ParamStore {
    assert_eq!(cfg.vocab_size, vocab.size(), "config/vocabulary size mismatch");
    let mut store = ParamStore::new();

    let mut emb = Matrix::zeros(cfg.vocab_size, cfg.embed_dim);
    for row in 1..cfg.vocab_size {
        let from_file = vocab
            .token(row as u32)
            .and_then(|tok| vectors.and_then(|v| v.get(tok)));
        match from_file {
            Some(vec) => emb.row_mut(row).copy_from_slice(vec),
            None => {
                for cell in emb.row_mut(row) {
                    *cell = rng.random_range(-INIT_RANGE..INIT_RANGE);
                }
            }
        }
    }
    debug_assert!(emb.row(PAD as usize).iter().all(|&v| v == 0.0));
    store.insert(EMBEDDING, emb, true);

    insert_block(&mut store, WORD_BLOCK, cfg.embed_dim, cfg.cell_dim, cfg.att_dim, rng);
    insert_block(
        &mut store,
        SENT_BLOCK,
        2 * cfg.cell_dim,
        cfg.cell_dim,
        cfg.att_dim,
        rng,
    );
    if cfg.use_header {
        insert_block(&mut store, HEAD_BLOCK, cfg.embed_dim, cfg.cell_dim, cfg.att_dim, rng);
        store.insert("sub_w", uniform_matrix(1, 4 * cfg.cell_dim, rng), false);
        store.insert("sub_b", Matrix::zeros(1, 1), false);
    } else {
        store.insert("out_w", uniform_matrix(1, 2 * cfg.cell_dim, rng), false);
        store.insert("out_b", Matrix::zeros(1, 1), false);
    }
    store
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
