use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::model::{forward, ModelConfig};
use crate::numcore::{AdamState, Matrix, ParamStore};
use crate::par;
use crate::textprep::{encode_email, Vocabulary};

use super::{TrainConfig, DECISION_THRESHOLD};

const MAGIC: &[u8] = b"HLSTM-CKPT-1\n";

/// A trained model: resolved configs, the vocabulary it was encoded with,
/// all parameters, and the optimizer state. Serializes to a versioned
/// binary container that round-trips every float bit-exactly.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train_config: TrainConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    pub adam: AdamState,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    model: ModelConfig,
    train: TrainConfig,
    vocab_tokens: Vec<String>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);

        let meta = Meta {
            model: self.model.clone(),
            train: self.train_config.clone(),
            vocab_tokens: self.vocab.tokens().to_vec(),
        };
        let meta_json = serde_json::to_vec(&meta)
            .map_err(|e| Error::CorruptCheckpoint(format!("meta encode: {e}")))?;
        put_u32(&mut buf, meta_json.len() as u32);
        buf.extend_from_slice(&meta_json);

        put_u32(&mut buf, self.params.len() as u32);
        for (name, p) in self.params.iter() {
            put_str(&mut buf, name);
            buf.push(u8::from(p.is_embedding));
            put_matrix(&mut buf, &p.value);
        }

        put_u64(&mut buf, self.adam.step);
        put_f64(&mut buf, self.adam.learning_rate);
        put_f64(&mut buf, self.adam.beta1);
        put_f64(&mut buf, self.adam.beta2);
        put_f64(&mut buf, self.adam.epsilon);
        let moments = self.adam.moments();
        put_u32(&mut buf, moments.len() as u32);
        for (name, (m, v)) in moments {
            put_str(&mut buf, name);
            put_matrix(&mut buf, m);
            put_matrix(&mut buf, v);
        }

        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor {
            bytes: &bytes,
            pos: 0,
        };

        let magic = cur.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(Error::BadCheckpointMagic);
        }

        let meta_len = cur.u32()? as usize;
        let meta_bytes = cur.take(meta_len)?;
        let meta: Meta = serde_json::from_slice(meta_bytes)
            .map_err(|e| Error::CorruptCheckpoint(format!("meta decode: {e}")))?;
        let vocab = Vocabulary::from_tokens(meta.vocab_tokens);

        let n_params = cur.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..n_params {
            let name = cur.str()?;
            let is_embedding = cur.take(1)?[0] != 0;
            let value = cur.matrix()?;
            params.insert(&name, value, is_embedding);
        }

        let step = cur.u64()?;
        let learning_rate = cur.f64()?;
        let beta1 = cur.f64()?;
        let beta2 = cur.f64()?;
        let epsilon = cur.f64()?;
        let n_moments = cur.u32()? as usize;
        let mut moments = BTreeMap::new();
        for _ in 0..n_moments {
            let name = cur.str()?;
            let m = cur.matrix()?;
            let v = cur.matrix()?;
            moments.insert(name, (m, v));
        }
        if cur.pos != bytes.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        let adam = AdamState::from_parts(learning_rate, beta1, beta2, epsilon, step, moments);

        Ok(Checkpoint {
            model: meta.model,
            train_config: meta.train,
            vocab,
            params,
            adam,
        })
    }

    /// Evaluation-mode predictions for every email in input order. Errors
    /// when the checkpoint was trained with the header network and the
    /// corpus does not carry headers.
    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Vec<(String, f64, u8)>> {
        if self.model.use_header && !dataset.has_headers {
            return Err(Error::CheckpointMismatch(
                "checkpoint was trained with headers but the corpus has none".into(),
            ));
        }
        let encoded: Vec<_> = dataset
            .emails
            .iter()
            .map(|e| encode_email(e, &self.vocab, self.model.l, self.model.k, self.model.h))
            .collect();
        let probs = par::map_ordered(&encoded, |enc| forward(&self.params, &self.model, enc, None).p);
        Ok(dataset
            .emails
            .iter()
            .zip(probs)
            .map(|(e, p)| (e.id.clone(), p, u8::from(p >= DECISION_THRESHOLD)))
            .collect())
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn put_matrix(buf: &mut Vec<u8>, m: &Matrix) {
    put_u32(buf, m.rows() as u32);
    put_u32(buf, m.cols() as u32);
    for v in m.values() {
        put_f64(buf, *v);
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "unexpected end of file at byte {}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::CorruptCheckpoint("non-utf8 name".into()))
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            values.push(self.f64()?);
        }
        Ok(Matrix::from_values(rows, cols, values))
    }
}
