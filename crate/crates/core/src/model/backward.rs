use crate::numcore::{axpy, dot, GradientSet, Matrix, ParamStore};
use crate::textprep::PAD;

use super::forward::{ForwardTrace, SeqTrace};
use super::{block_params, ModelConfig, EMBEDDING, HEAD_BLOCK, SENT_BLOCK, WORD_BLOCK};

/// Exact analytic gradients for one email, returned as a standalone set so
/// batch members can be processed in parallel and reduced in index order.
///
/// `dloss_dp` is the upstream gradient of the scalar loss with respect to
/// the predicted probability. `word_alpha_grad`, when present, is an L*K
/// grid of extra upstream gradients on the word-level attention weights
/// (the supervised-attention penalty path); padded cells must be zero.
pub fn backward(
    store: &ParamStore,
    cfg: &ModelConfig,
    trace: &ForwardTrace,
    dloss_dp: f64,
    word_alpha_grad: Option<&[f64]>,
) -> GradientSet {
    let mut grads = GradientSet::new();
    let hidden = cfg.hidden_dim();

    // output layer: p = sigmoid(z), z = w . r_dropped + b
    let dz = dloss_dp * trace.p * (1.0 - trace.p);
    let (w_name, b_name) = if cfg.use_header {
        ("sub_w", "sub_b")
    } else {
        ("out_w", "out_b")
    };
    let out_w = store.get(w_name);
    {
        let gw = grads.dense_mut(w_name, 1, out_w.cols());
        gw.add_outer(&[dz], &trace.r_dropped);
        let gb = grads.dense_mut(b_name, 1, 1);
        gb.values_mut()[0] += dz;
    }

    let mut dr: Vec<f64> = out_w.row(0).iter().map(|w| dz * w).collect();
    if let Some(plan) = &trace.dropout {
        for (d, m) in dr.iter_mut().zip(&plan.final_mask) {
            *d *= m;
        }
    }

    // header branch
    if cfg.use_header {
        let header = trace.header.as_ref().expect("header trace missing");
        let dr_head = &dr[hidden..];
        let dx = backward_block(store, HEAD_BLOCK, header, dr_head, None, &mut grads);
        route_embedding_grads(&mut grads, header, &dx, cfg.embed_dim);
    }

    // sentence-level block over the dropped-out pooled sentence vectors
    let dr_body = &dr[..hidden];
    let d_sent_inputs = backward_block(
        store,
        SENT_BLOCK,
        &trace.body.sent,
        dr_body,
        None,
        &mut grads,
    );

    // word-level blocks, one per real sentence
    for (i, sentence) in trace.body.sentences.iter().enumerate() {
        let mut du = d_sent_inputs[i].clone();
        if let Some(plan) = &trace.dropout {
            for (d, m) in du.iter_mut().zip(&plan.sentence_masks[i]) {
                *d *= m;
            }
        }
        let extra: Option<Vec<f64>> = word_alpha_grad.map(|grid| {
            let n = sentence.inputs.len();
            grid[i * cfg.k..i * cfg.k + n].to_vec()
        });
        let dx = backward_block(
            store,
            WORD_BLOCK,
            sentence,
            &du,
            extra.as_deref(),
            &mut grads,
        );
        route_embedding_grads(&mut grads, sentence, &dx, cfg.embed_dim);
    }

    grads
}

fn route_embedding_grads(
    grads: &mut GradientSet,
    trace: &SeqTrace,
    dx: &[Vec<f64>],
    embed_dim: usize,
) {
    let ids = trace
        .token_ids
        .as_ref()
        .expect("embedding-backed trace without token ids");
    for (id, d) in ids.iter().zip(dx) {
        if *id == PAD {
            continue; // the PAD row is pinned to zero
        }
        let row = grads.embedding_row_mut(EMBEDDING, *id as usize, embed_dim);
        axpy(row, d, 1.0);
    }
}

/// Backprop through one BiLSTM + attention block. Returns dL/dinput per
/// real position. `dalpha_extra` carries upstream gradient landing directly
/// on the attention weights (in addition to the pooling path).
fn backward_block(
    store: &ParamStore,
    prefix: &str,
    trace: &SeqTrace,
    dpooled: &[f64],
    dalpha_extra: Option<&[f64]>,
    grads: &mut GradientSet,
) -> Vec<Vec<f64>> {
    let n = trace.inputs.len();
    if n == 0 {
        return Vec::new(); // all-masked block pooled to a constant zero
    }
    let params = block_params(store, prefix);
    let cell = params.fwd.wh.cols();
    let input_dim = params.fwd.wx.cols();
    let att_dim = params.att.w.rows();

    // attention backward
    let mut dalpha = vec![0.0; n];
    for j in 0..n {
        dalpha[j] = dot(dpooled, &trace.h_cat[j]);
        if let Some(extra) = dalpha_extra {
            dalpha[j] += extra[j];
        }
    }
    let weighted_sum: f64 = dalpha
        .iter()
        .zip(&trace.weights)
        .map(|(d, w)| d * w)
        .sum();

    let mut g_att_w = Matrix::zeros(att_dim, 2 * cell);
    let mut g_att_b = Matrix::zeros(att_dim, 1);
    let mut g_att_v = Matrix::zeros(att_dim, 1);
    let mut dh_cat = vec![vec![0.0; 2 * cell]; n];

    for j in 0..n {
        // pooling path
        axpy(&mut dh_cat[j], dpooled, trace.weights[j]);

        // softmax backward
        let dlogit = trace.weights[j] * (dalpha[j] - weighted_sum);

        // logit = att_proj . v
        axpy(g_att_v.values_mut(), &trace.att_proj[j], dlogit);
        let mut dpre = vec![0.0; att_dim];
        for a in 0..att_dim {
            let proj = trace.att_proj[j][a];
            dpre[a] = dlogit * params.att.v.values()[a] * (1.0 - proj * proj);
        }
        g_att_w.add_outer(&dpre, &trace.h_cat[j]);
        axpy(g_att_b.values_mut(), &dpre, 1.0);
        let through = params.att.w.matvec_t(&dpre);
        axpy(&mut dh_cat[j], &through, 1.0);
    }

    // BPTT through both directions
    let mut dx = vec![vec![0.0; input_dim]; n];
    let zeros = vec![0.0; cell];

    let mut g_fwd_wx = Matrix::zeros(4 * cell, input_dim);
    let mut g_fwd_wh = Matrix::zeros(4 * cell, cell);
    let mut g_fwd_b = Matrix::zeros(4 * cell, 1);
    {
        let mut carry_h = vec![0.0; cell];
        let mut carry_c = vec![0.0; cell];
        for p in (0..n).rev() {
            let step = &trace.fwd[p];
            let (h_prev, c_prev) = if p > 0 {
                (&trace.fwd[p - 1].h, &trace.fwd[p - 1].c)
            } else {
                (&zeros, &zeros)
            };
            let mut dh = carry_h.clone();
            axpy(&mut dh, &dh_cat[p][..cell], 1.0);
            step_backward(
                step, &dh, &mut carry_c, h_prev, c_prev, cell,
                params.fwd.wx, params.fwd.wh,
                &trace.inputs[p], &mut g_fwd_wx, &mut g_fwd_wh, &mut g_fwd_b,
                &mut dx[p], &mut carry_h,
            );
        }
    }

    let mut g_bwd_wx = Matrix::zeros(4 * cell, input_dim);
    let mut g_bwd_wh = Matrix::zeros(4 * cell, cell);
    let mut g_bwd_b = Matrix::zeros(4 * cell, 1);
    {
        let mut carry_h = vec![0.0; cell];
        let mut carry_c = vec![0.0; cell];
        // the backward LSTM processed positions right-to-left, so its
        // time-reversed sweep walks positions left-to-right
        for p in 0..n {
            let step = &trace.bwd[p];
            let (h_prev, c_prev) = if p + 1 < n {
                (&trace.bwd[p + 1].h, &trace.bwd[p + 1].c)
            } else {
                (&zeros, &zeros)
            };
            let mut dh = carry_h.clone();
            axpy(&mut dh, &dh_cat[p][cell..], 1.0);
            step_backward(
                step, &dh, &mut carry_c, h_prev, c_prev, cell,
                params.bwd.wx, params.bwd.wh,
                &trace.inputs[p], &mut g_bwd_wx, &mut g_bwd_wh, &mut g_bwd_b,
                &mut dx[p], &mut carry_h,
            );
        }
    }

    merge_dense(grads, &format!("{prefix}_att_w"), g_att_w);
    merge_dense(grads, &format!("{prefix}_att_b"), g_att_b);
    merge_dense(grads, &format!("{prefix}_att_v"), g_att_v);
    merge_dense(grads, &format!("{prefix}_fwd_wx"), g_fwd_wx);
    merge_dense(grads, &format!("{prefix}_fwd_wh"), g_fwd_wh);
    merge_dense(grads, &format!("{prefix}_fwd_b"), g_fwd_b);
    merge_dense(grads, &format!("{prefix}_bwd_wx"), g_bwd_wx);
    merge_dense(grads, &format!("{prefix}_bwd_wh"), g_bwd_wh);
    merge_dense(grads, &format!("{prefix}_bwd_b"), g_bwd_b);

    dx
}

fn merge_dense(grads: &mut GradientSet, name: &str, m: Matrix) {
    let acc = grads.dense_mut(name, m.rows(), m.cols());
    acc.add_scaled(&m, 1.0);
}

/// One LSTM step of backprop through time. `carry_c` holds the incoming
/// cell gradient and is replaced with the one flowing to the previous step;
/// `carry_h` is replaced likewise.
#[allow(clippy::too_many_arguments)]
fn step_backward(
    step: &super::lstm::LstmStep,
    dh: &[f64],
    carry_c: &mut Vec<f64>,
    h_prev: &[f64],
    c_prev: &[f64],
    cell: usize,
    wx: &Matrix,
    wh: &Matrix,
    input: &[f64],
    g_wx: &mut Matrix,
    g_wh: &mut Matrix,
    g_b: &mut Matrix,
    dx: &mut [f64],
    carry_h: &mut Vec<f64>,
) {
    let mut dz = vec![0.0; 4 * cell];
    let mut dc = carry_c.clone();
    for j in 0..cell {
        let d_o = dh[j] * step.tanh_c[j];
        dz[3 * cell + j] = d_o * step.o[j] * (1.0 - step.o[j]);
        dc[j] += dh[j] * step.o[j] * (1.0 - step.tanh_c[j] * step.tanh_c[j]);
        let d_f = dc[j] * c_prev[j];
        dz[cell + j] = d_f * step.f[j] * (1.0 - step.f[j]);
        let d_i = dc[j] * step.g[j];
        dz[j] = d_i * step.i[j] * (1.0 - step.i[j]);
        let d_g = dc[j] * step.i[j];
        dz[2 * cell + j] = d_g * (1.0 - step.g[j] * step.g[j]);
    }
    g_wx.add_outer(&dz, input);
    g_wh.add_outer(&dz, h_prev);
    axpy(g_b.values_mut(), &dz, 1.0);

    axpy(dx, &wx.matvec_t(&dz), 1.0);
    *carry_h = wh.matvec_t(&dz);
    for j in 0..cell {
        carry_c[j] = dc[j] * step.f[j];
    }
}
