use crate::numcore::Matrix;

use super::{sigmoid, LstmParams};

/// Every intermediate of one LSTM step, kept for backprop through time.
#[derive(Clone, Debug)]
pub struct LstmStep {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM step: gates i, f, o are logistic, candidate g is tanh;
/// c_t = f . c_prev + i . g and h_t = o . tanh(c_t).
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: LstmParams<'_>,
) -> (Vec<f64>, Vec<f64>) {
    let step = lstm_cell_traced(x, h_prev, c_prev, params.wx, params.wh, params.b);
    (step.h, step.c)
}

pub(crate) fn lstm_cell_traced(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    wx: &Matrix,
    wh: &Matrix,
    b: &Matrix,
) -> LstmStep {
    let cell = wh.cols();
    debug_assert_eq!(wx.rows(), 4 * cell);
    debug_assert_eq!(h_prev.len(), cell);
    debug_assert_eq!(c_prev.len(), cell);

    let mut z = wx.matvec(x);
    let zh = wh.matvec(h_prev);
    for (a, (bb, cc)) in z.iter_mut().zip(zh.iter().zip(b.values())) {
        *a += bb + cc;
    }

    let mut i = vec![0.0; cell];
    let mut f = vec![0.0; cell];
    let mut g = vec![0.0; cell];
    let mut o = vec![0.0; cell];
    for j in 0..cell {
        i[j] = sigmoid(z[j]);
        f[j] = sigmoid(z[cell + j]);
        g[j] = z[2 * cell + j].tanh();
        o[j] = sigmoid(z[3 * cell + j]);
    }
    let mut c = vec![0.0; cell];
    let mut tanh_c = vec![0.0; cell];
    let mut h = vec![0.0; cell];
    for j in 0..cell {
        c[j] = f[j] * c_prev[j] + i[j] * g[j];
        tanh_c[j] = c[j].tanh();
        h[j] = o[j] * tanh_c[j];
    }
    LstmStep {
        i,
        f,
        g,
        o,
        c,
        h,
        tanh_c,
    }
}

/// Runs forward and backward LSTMs over the real (mask = 1) prefix of the
/// sequence and concatenates the two hidden vectors at each position.
/// Masked positions yield zero vectors.
pub fn bilstm(
    inputs: &[Vec<f64>],
    mask: &[u8],
    fwd: LstmParams<'_>,
    bwd: LstmParams<'_>,
) -> Vec<Vec<f64>> {
    assert_eq!(inputs.len(), mask.len(), "bilstm mask length mismatch");
    let cell = fwd.wh.cols();
    let n = mask.iter().filter(|&&m| m != 0).count();
    debug_assert!(
        mask[..n].iter().all(|&m| m != 0),
        "mask must be a contiguous prefix"
    );

    let mut out = vec![vec![0.0; 2 * cell]; inputs.len()];

    let mut h = vec![0.0; cell];
    let mut c = vec![0.0; cell];
    for p in 0..n {
        let (nh, nc) = lstm_cell(&inputs[p], &h, &c, fwd);
        out[p][..cell].copy_from_slice(&nh);
        h = nh;
        c = nc;
    }

    let mut h = vec![0.0; cell];
    let mut c = vec![0.0; cell];
    for p in (0..n).rev() {
        let (nh, nc) = lstm_cell(&inputs[p], &h, &c, bwd);
        out[p][cell..].copy_from_slice(&nh);
        h = nh;
        c = nc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(cell: usize, input: usize) -> (Matrix, Matrix, Matrix) {
        (
            Matrix::zeros(4 * cell, input),
            Matrix::zeros(4 * cell, cell),
            Matrix::zeros(4 * cell, 1),
        )
    }

    #[test]
    fn all_zero_everything_gives_zero_state() {
        let (wx, wh, b) = zero_params(3, 2);
        let p = LstmParams {
            wx: &wx,
            wh: &wh,
            b: &b,
        };
        let (h, c) = lstm_cell(&[0.0, 0.0], &[0.0; 3], &[0.0; 3], p);
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn saturated_forget_gate_preserves_cell() {
        let (wx, wh, mut b) = zero_params(2, 2);
        // forget-gate bias at +20 saturates sigmoid to ~1
        for j in 2..4 {
            b.values_mut()[j] = 20.0;
        }
        let p = LstmParams {
            wx: &wx,
            wh: &wh,
            b: &b,
        };
        let c_prev = vec![0.7, -0.4];
        let (_, c) = lstm_cell(&[0.0, 0.0], &[0.0, 0.0], &c_prev, p);
        for (a, b) in c.iter().zip(&c_prev) {
            assert!((a - b).abs() < 1e-8, "cell {a} vs {b}");
        }
    }

    // Scalar-loop oracle: an independent step-by-step gate evaluation acting
    // on plain nested loops, no Matrix helpers.
    #[test]
    fn random_instance_matches_scalar_loop() {
        let cell = 4;
        let input = 3;
        let mut seed = 0.37f64;
        let mut next = || {
            seed = (seed * 997.0 + 0.123).fract();
            seed * 2.0 - 1.0
        };
        let wx = Matrix::from_values(4 * cell, input, (0..4 * cell * input).map(|_| next()).collect());
        let wh = Matrix::from_values(4 * cell, cell, (0..4 * cell * cell).map(|_| next()).collect());
        let b = Matrix::from_values(4 * cell, 1, (0..4 * cell).map(|_| next()).collect());
        let x: Vec<f64> = (0..input).map(|_| next()).collect();
        let h_prev: Vec<f64> = (0..cell).map(|_| next()).collect();
        let c_prev: Vec<f64> = (0..cell).map(|_| next()).collect();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut expect_h = vec![0.0; cell];
        let mut expect_c = vec![0.0; cell];
        for j in 0..cell {
            let pre = |gate: usize| {
                let row = gate * cell + j;
                let mut acc = b.values()[row];
                for (col, xv) in x.iter().enumerate() {
                    acc += wx.get(row, col) * xv;
                }
                for (col, hv) in h_prev.iter().enumerate() {
                    acc += wh.get(row, col) * hv;
                }
                acc
            };
            let ig = sig(pre(0));
            let fg = sig(pre(1));
            let gg = pre(2).tanh();
            let og = sig(pre(3));
            expect_c[j] = fg * c_prev[j] + ig * gg;
            expect_h[j] = og * expect_c[j].tanh();
        }

        let p = LstmParams {
            wx: &wx,
            wh: &wh,
            b: &b,
        };
        let (h, c) = lstm_cell(&x, &h_prev, &c_prev, p);
        for (a, e) in h.iter().zip(&expect_h) {
            assert!((a - e).abs() < 1e-14);
        }
        for (a, e) in c.iter().zip(&expect_c) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn bilstm_length_one_sees_token_from_both_sides() {
        let _cell = 2;
        let wx = Matrix::from_values(8, 1, (0..8).map(|i| 0.1 * i as f64).collect());
        let wh = Matrix::zeros(8, 2);
        let b = Matrix::zeros(8, 1);
        let p = LstmParams {
            wx: &wx,
            wh: &wh,
            b: &b,
        };
        let out = bilstm(&[vec![1.0]], &[1], p, p);
        let (h, _) = lstm_cell(&[1.0], &[0.0; 2], &[0.0; 2], p);
        assert_eq!(&out[0][..2], h.as_slice());
        assert_eq!(&out[0][2..], h.as_slice());
    }

    #[test]
    fn bilstm_all_masked_is_zero() {
        let (wx, wh, b) = zero_params(2, 1);
        let p = LstmParams {
            wx: &wx,
            wh: &wh,
            b: &b,
        };
        let out = bilstm(&[vec![1.0], vec![2.0]], &[0, 0], p, p);
        assert!(out.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    // Manual unroll oracle for a length-3 sequence.
    #[test]
    fn bilstm_matches_manual_unroll() {
        let _cell = 2;
        let mut seed = 0.91f64;
        let mut next = || {
            seed = (seed * 883.0 + 0.217).fract();
            seed - 0.5
        };
        let mk = |r: usize, c: usize, next: &mut dyn FnMut() -> f64| {
            Matrix::from_values(r, c, (0..r * c).map(|_| next()).collect())
        };
        let fwx = mk(8, 2, &mut next);
        let fwh = mk(8, 2, &mut next);
        let fb = mk(8, 1, &mut next);
        let bwx = mk(8, 2, &mut next);
        let bwh = mk(8, 2, &mut next);
        let bb = mk(8, 1, &mut next);
        let fwd = LstmParams {
            wx: &fwx,
            wh: &fwh,
            b: &fb,
        };
        let bwd = LstmParams {
            wx: &bwx,
            wh: &bwh,
            b: &bb,
        };
        let xs = vec![vec![next(), next()], vec![next(), next()], vec![next(), next()]];

        let out = bilstm(&xs, &[1, 1, 1], fwd, bwd);

        // forward direction by hand
        let (h1, c1) = lstm_cell(&xs[0], &[0.0; 2], &[0.0; 2], fwd);
        let (h2, c2) = lstm_cell(&xs[1], &h1, &c1, fwd);
        let (h3, _) = lstm_cell(&xs[2], &h2, &c2, fwd);
        // backward direction by hand
        let (g3, d3) = lstm_cell(&xs[2], &[0.0; 2], &[0.0; 2], bwd);
        let (g2, d2) = lstm_cell(&xs[1], &g3, &d3, bwd);
        let (g1, _) = lstm_cell(&xs[0], &g2, &d2, bwd);

        assert_eq!(&out[0][..2], h1.as_slice());
        assert_eq!(&out[1][..2], h2.as_slice());
        assert_eq!(&out[2][..2], h3.as_slice());
        assert_eq!(&out[0][2..], g1.as_slice());
        assert_eq!(&out[1][2..], g2.as_slice());
        assert_eq!(&out[2][2..], g3.as_slice());
    }
}
