use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Pre-trained word vectors read from the common text interchange format:
/// a `<count> <dim>` first line, then one token followed by `dim` floats
/// per line.
#[derive(Clone, Debug)]
pub struct WordVectors {
    dim: usize,
    map: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.map.get(token).map(|v| v.as_slice())
    }

    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (String, Vec<f64>)>) -> Self {
        let map: HashMap<String, Vec<f64>> = pairs.into_iter().collect();
        for v in map.values() {
            assert_eq!(v.len(), dim, "vector length must equal dim");
        }
        WordVectors { dim, map }
    }
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectors> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines.next().ok_or(Error::MalformedEmbedding {
        line: 1,
        message: "empty file".into(),
    })?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let mut head = first.split_whitespace();
    let count: usize = head
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or(Error::MalformedEmbedding {
            line: 1,
            message: "expected \"<count> <dim>\"".into(),
        })?;
    let dim: usize = head
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or(Error::MalformedEmbedding {
            line: 1,
            message: "expected \"<count> <dim>\"".into(),
        })?;

    let mut map = HashMap::with_capacity(count);
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or(Error::MalformedEmbedding {
                line: line_no,
                message: "missing token".into(),
            })?
            .to_string();
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| Error::MalformedEmbedding {
                    line: line_no,
                    message: format!("bad float {p:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::MalformedEmbedding {
                line: line_no,
                message: format!("expected {dim} values, got {}", values.len()),
            });
        }
        map.insert(token, values);
    }
    Ok(WordVectors { dim, map })
}
