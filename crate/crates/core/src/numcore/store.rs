use std::collections::BTreeMap;

use super::matrix::{axpy, Matrix};

/// Named parameter with its gradient buffer.
#[derive(Clone, Debug)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
    pub is_embedding: bool,
}

/// All trainable matrices of a model, keyed by name.
///
/// A BTreeMap keeps iteration order stable, which makes optimizer updates,
/// checkpoints and finite-difference sweeps deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter; its gradient buffer starts at zero.
    pub fn insert(&mut self, name: &str, value: Matrix, is_embedding: bool) {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.insert(
            name.to_string(),
            Param {
                value,
                grad,
                is_embedding,
            },
        );
    }

    pub fn get(&self, name: &str) -> &Matrix {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
            .value
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Matrix {
        &mut self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
            .value
    }

    pub fn grad(&self, name: &str) -> &Matrix {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
            .grad
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Adds a gradient set into the stored gradient buffers.
    pub fn accumulate(&mut self, grads: &GradientSet) {
        for (name, g) in &grads.dense {
            let p = self
                .params
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter {name:?}"));
            assert!(
                p.grad.same_shape(g),
                "gradient shape mismatch for {name:?}"
            );
            p.grad.add_scaled(g, 1.0);
        }
        for (&(ref name, row), dv) in &grads.embedding_rows {
            let p = self
                .params
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter {name:?}"));
            axpy(p.grad.row_mut(row), dv, 1.0);
        }
    }
}

/// Gradients produced by one backward pass, kept separate from the store so
/// per-email contributions can be computed in parallel and then reduced in
/// a fixed order.
///
/// Embedding gradients are sparse: only rows actually looked up get an
/// entry, which keeps per-email gradient sets small.
#[derive(Clone, Debug, Default)]
pub struct GradientSet {
    pub dense: BTreeMap<String, Matrix>,
    pub embedding_rows: BTreeMap<(String, usize), Vec<f64>>,
}

impl GradientSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dense_mut(&mut self, name: &str, rows: usize, cols: usize) -> &mut Matrix {
        self.dense
            .entry(name.to_string())
            .or_insert_with(|| Matrix::zeros(rows, cols))
    }

    pub fn embedding_row_mut(&mut self, name: &str, row: usize, dim: usize) -> &mut Vec<f64> {
        self.embedding_rows
            .entry((name.to_string(), row))
            .or_insert_with(|| vec![0.0; dim])
    }

    /// Merges `other` into self (used by the ordered batch reduction).
    pub fn merge(&mut self, other: &GradientSet) {
        for (name, g) in &other.dense {
            match self.dense.get_mut(name) {
                Some(mine) => mine.add_scaled(g, 1.0),
                None => {
                    self.dense.insert(name.clone(), g.clone());
                }
            }
        }
        for (key, dv) in &other.embedding_rows {
            match self.embedding_rows.get_mut(key) {
                Some(mine) => axpy(mine, dv, 1.0),
                None => {
                    self.embedding_rows.insert(key.clone(), dv.clone());
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.dense.is_empty() && self.embedding_rows.is_empty()
    }
}

/// Rescales each non-embedding parameter's gradient matrix whose Frobenius
/// norm exceeds `threshold` back down to the threshold. Embedding-flagged
/// parameters are left untouched. Returns the scale factors applied.
pub fn clip_frobenius(store: &mut ParamStore, threshold: f64) -> Vec<(String, f64)> {
    assert!(threshold > 0.0, "clip threshold must be positive");
    let mut applied = Vec::new();
    for (name, p) in store.iter_mut() {
        if p.is_embedding {
            continue;
        }
        let norm = p.grad.frobenius_norm();
        if norm > threshold {
            let scale = threshold / norm;
            p.grad.scale(scale);
            applied.push((name.to_string(), scale));
        }
    }
    applied
}

/// Weight-norm variant of the clipping rule: rescales non-embedding weight
/// matrices themselves when their Frobenius norm exceeds the threshold.
pub fn renorm_weights_frobenius(store: &mut ParamStore, threshold: f64) -> Vec<(String, f64)> {
    assert!(threshold > 0.0, "renorm threshold must be positive");
    let mut applied = Vec::new();
    for (name, p) in store.iter_mut() {
        if p.is_embedding {
            continue;
        }
        let norm = p.value.frobenius_norm();
        if norm > threshold {
            let scale = threshold / norm;
            p.value.scale(scale);
            applied.push((name.to_string(), scale));
        }
    }
    applied
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, values: Vec<f64>, is_embedding: bool) -> ParamStore {
        let mut s = ParamStore::new();
        let n = values.len();
        s.insert(name, Matrix::from_values(1, n, values), is_embedding);
        s
    }

    #[test]
    fn clip_scales_by_ratio() {
        let mut s = store_with("w", vec![0.0, 0.0], false);
        s.params.get_mut("w").unwrap().grad = Matrix::from_values(1, 2, vec![0.6, 0.0]);
        let applied = clip_frobenius(&mut s, 0.3);
        assert_eq!(applied.len(), 1);
        assert!((applied[0].1 - 0.5).abs() < 1e-15);
        assert!((s.grad("w").values()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn clip_leaves_small_gradients() {
        let mut s = store_with("w", vec![0.0], false);
        s.params.get_mut("w").unwrap().grad = Matrix::from_values(1, 1, vec![0.1]);
        let applied = clip_frobenius(&mut s, 0.3);
        assert!(applied.is_empty());
        assert_eq!(s.grad("w").values()[0], 0.1);
    }

    #[test]
    fn clip_exempts_embeddings() {
        let mut s = store_with("emb", vec![0.0], true);
        s.params.get_mut("emb").unwrap().grad = Matrix::from_values(1, 1, vec![5.0]);
        let applied = clip_frobenius(&mut s, 0.3);
        assert!(applied.is_empty());
        assert_eq!(s.grad("emb").values()[0], 5.0);
    }

    #[test]
    fn clip_is_idempotent() {
        let mut s = store_with("w", vec![0.0, 0.0, 0.0], false);
        s.params.get_mut("w").unwrap().grad = Matrix::from_values(1, 3, vec![1.0, -2.0, 2.0]);
        clip_frobenius(&mut s, 0.3);
        let once = s.grad("w").values().to_vec();
        clip_frobenius(&mut s, 0.3);
        assert_eq!(s.grad("w").values(), once.as_slice());
    }

    #[test]
    fn accumulate_sparse_embedding_rows() {
        let mut s = ParamStore::new();
        s.insert("emb", Matrix::zeros(4, 2), true);
        let mut g = GradientSet::new();
        g.embedding_row_mut("emb", 2, 2)[0] = 1.5;
        g.embedding_row_mut("emb", 2, 2)[1] += 0.5;
        s.accumulate(&g);
        assert_eq!(s.grad("emb").row(2), &[1.5, 0.5]);
        assert_eq!(s.grad("emb").row(0), &[0.0, 0.0]);
    }
}
