//! tf-idf and embedding-mean feature extractors plus a linear SVM, the
//! traditional comparison point for the neural models.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, LABEL_PHISH};
use crate::error::{Error, Result};
use crate::model::WordVectors;
use crate::par;
use crate::textprep::{email_tokens, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Tfidf,
    EmbedMean,
    Concat,
}

/// Dense n_emails x n_features matrix, rows aligned with the dataset.
#[derive(Clone, Debug)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub n_rows: usize,
    pub n_cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    fn new(kind: FeatureKind, n_rows: usize, n_cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_rows * n_cols);
        FeatureMatrix {
            kind,
            n_rows,
            n_cols,
            values,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Horizontal concatenation; widths add, row counts must match.
    pub fn concat(&self, other: &FeatureMatrix) -> FeatureMatrix {
        assert_eq!(self.n_rows, other.n_rows, "row count mismatch in concat");
        let n_cols = self.n_cols + other.n_cols;
        let mut values = Vec::with_capacity(self.n_rows * n_cols);
        for i in 0..self.n_rows {
            values.extend_from_slice(self.row(i));
            values.extend_from_slice(other.row(i));
        }
        FeatureMatrix::new(FeatureKind::Concat, self.n_rows, n_cols, values)
    }
}

/// tf-idf transform fitted on a training set: smooth idf
/// ln((1+N)/(1+df)) + 1 with N = training email count and df the training
/// document frequency; rows are L2-normalized.
#[derive(Clone, Debug)]
pub struct TfidfVectorizer {
    idf: Vec<f64>,
}

impl TfidfVectorizer {
    pub fn fit(dataset: &Dataset, vocab: &Vocabulary) -> Self {
        let n = dataset.len() as f64;
        let mut df = vec![0u64; vocab.tokens().len()];
        for email in &dataset.emails {
            let distinct: std::collections::HashSet<u32> = email_tokens(email)
                .iter()
                .map(|t| vocab.lookup(t))
                .filter(|&id| id >= 2)
                .collect();
            for id in distinct {
                df[(id - 2) as usize] += 1;
            }
        }
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        TfidfVectorizer { idf }
    }

    pub fn transform(&self, dataset: &Dataset, vocab: &Vocabulary) -> FeatureMatrix {
        let n_cols = vocab.tokens().len();
        let rows = par::map_ordered(&dataset.emails, |email| {
            let mut row = vec![0.0; n_cols];
            for tok in email_tokens(email) {
                let id = vocab.lookup(&tok);
                if id >= 2 {
                    row[(id - 2) as usize] += 1.0; // raw term count
                }
            }
            for (v, idf) in row.iter_mut().zip(&self.idf) {
                *v *= idf;
            }
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
            }
            row
        });
        let values = rows.into_iter().flatten().collect();
        FeatureMatrix::new(FeatureKind::Tfidf, dataset.len(), n_cols, values)
    }
}

/// Fit-and-transform on the same data (the vocabulary must have been built
/// on this training portion).
pub fn tfidf_features(dataset: &Dataset, vocab: &Vocabulary) -> FeatureMatrix {
    TfidfVectorizer::fit(dataset, vocab).transform(dataset, vocab)
}

/// Mean of the embedding vectors of the email's tokens found in the vector
/// file; emails with no covered token get a zero row.
pub fn embed_mean_features(dataset: &Dataset, vectors: &WordVectors) -> FeatureMatrix {
    let dim = vectors.dim();
    let rows = par::map_ordered(&dataset.emails, |email| {
        let mut row = vec![0.0; dim];
        let mut count = 0usize;
        for tok in email_tokens(email) {
            if let Some(v) = vectors.get(&tok) {
                for (r, x) in row.iter_mut().zip(v) {
                    *r += x;
                }
                count += 1;
            }
        }
        if count > 0 {
            for r in row.iter_mut() {
                *r /= count as f64;
            }
        }
        row
    });
    let values = rows.into_iter().flatten().collect();
    FeatureMatrix::new(FeatureKind::EmbedMean, dataset.len(), dim, values)
}

/// Linear decision function sign(w.x + b) mapped to {0, 1}.
#[derive(Clone, Debug)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
}

const SVM_ITERATIONS: usize = 100_000;

/// Trains by seeded stochastic subgradient descent on the objective
/// (1/2)|w|^2 + C sum_i hinge(y_i (w.x_i + b)), equivalently Pegasos with
/// regularization 1/(C n); the returned model averages the iterates of the
/// second half of the run. The bias rides along as a regularized constant
/// feature.
pub fn svm_train(
    features: &FeatureMatrix,
    labels: &[u8],
    c: f64,
    seed: u64,
) -> Result<LinearSvmModel> {
    svm_train_with_budget(features, labels, c, seed, SVM_ITERATIONS)
}

/// Same solver with an explicit iteration budget.
pub fn svm_train_with_budget(
    features: &FeatureMatrix,
    labels: &[u8],
    c: f64,
    seed: u64,
    iterations: usize,
) -> Result<LinearSvmModel> {
    let n = features.n_rows;
    if n == 0 || labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows vs {} labels",
            n,
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&y| y == LABEL_PHISH).count();
    if pos == 0 || pos == n {
        return Err(Error::SingleClass);
    }

    let dim = features.n_cols;
    let lambda = 1.0 / (c * n as f64);
    let signed: Vec<f64> = labels
        .iter()
        .map(|&y| if y == LABEL_PHISH { 1.0 } else { -1.0 })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; dim];
    let mut b = 0.0f64;
    let mut w_sum = vec![0.0; dim];
    let mut b_sum = 0.0f64;
    let avg_from = iterations / 2;
    let mut averaged = 0usize;

    for t in 1..=iterations {
        let i = rng.random_range(0..n);
        let x = features.row(i);
        let y = signed[i];
        let eta = 1.0 / (lambda * t as f64);

        let margin = y * (w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b);
        let shrink = 1.0 - eta * lambda; // = 1 - 1/t
        for wv in w.iter_mut() {
            *wv *= shrink;
        }
        b *= shrink;
        if margin < 1.0 {
            let step = eta * y;
            for (wv, xv) in w.iter_mut().zip(x) {
                *wv += step * xv;
            }
            b += step;
        }

        if t > avg_from {
            for (s, wv) in w_sum.iter_mut().zip(&w) {
                *s += wv;
            }
            b_sum += b;
            averaged += 1;
        }
    }

    let inv = 1.0 / averaged as f64;
    let weights: Vec<f64> = w_sum.iter().map(|s| s * inv).collect();
    Ok(LinearSvmModel {
        weights,
        bias: b_sum * inv,
        c,
    })
}

pub fn svm_predict(model: &LinearSvmModel, features: &FeatureMatrix) -> Vec<u8> {
    assert_eq!(
        features.n_cols,
        model.weights.len(),
        "feature width does not match the model"
    );
    par::map_ordered(&(0..features.n_rows).collect::<Vec<_>>(), |&i| {
        let x = features.row(i);
        let score: f64 = model.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + model.bias;
        u8::from(score > 0.0)
    })
}

/// The primal objective (1/2)|w|^2 + C sum hinge, used by tests to watch
/// convergence of the averaged iterates.
pub fn svm_objective(model: &LinearSvmModel, features: &FeatureMatrix, labels: &[u8]) -> f64 {
    let reg: f64 = 0.5 * model.weights.iter().map(|w| w * w).sum::<f64>();
    let mut hinge_sum = 0.0;
    for i in 0..features.n_rows {
        let y = if labels[i] == LABEL_PHISH { 1.0 } else { -1.0 };
        let score: f64 = model
            .weights
            .iter()
            .zip(features.row(i))
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + model.bias;
        hinge_sum += (1.0 - y * score).max(0.0);
    }
    reg + model.c * hinge_sum
}
