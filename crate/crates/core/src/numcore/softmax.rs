/// Softmax restricted to positions where `mask` is nonzero.
///
/// Masked-out entries get probability exactly 0; kept entries are
/// normalized with max-subtraction for stability. An all-zero mask yields
/// the all-zero vector rather than an error, which is the convention the
/// attention layers rely on for empty headers and fully padded rows.
pub fn masked_softmax(logits: &[f64], mask: &[u8]) -> Vec<f64> {
    assert_eq!(logits.len(), mask.len(), "masked_softmax length mismatch");
    let mut out = vec![0.0; logits.len()];

    let mut max = f64::NEG_INFINITY;
    for (l, &m) in logits.iter().zip(mask) {
        if m != 0 && *l > max {
            max = *l;
        }
    }
    if max == f64::NEG_INFINITY {
        return out; // all masked
    }

    let mut sum = 0.0;
    for (i, (l, &m)) in logits.iter().zip(mask).enumerate() {
        if m != 0 {
            let e = (l - max).exp();
            out[i] = e;
            sum += e;
        }
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    out
}
