//! Email corpus loading and stratified cross-validation splits.
//!
//! Two on-disk layouts are supported: a CSV file with columns
//! `id,header,body,label` (RFC 4180, UTF-8), and a directory with
//! `legit/*.txt` and `phish/*.txt` body files.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const LABEL_LEGIT: u8 = 0;
pub const LABEL_PHISH: u8 = 1;

/// One raw email record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Email {
    pub id: String,
    pub header: Option<String>,
    pub body: String,
    /// 1 = phishing, 0 = legitimate, None = unlabeled.
    pub label: Option<u8>,
}

/// An ordered collection of emails with unique ids.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub emails: Vec<Email>,
    pub has_headers: bool,
}

/// Which fold each email id belongs to.
#[derive(Clone, Debug)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusLayout {
    TwoDirs,
    Csv,
}

impl Dataset {
    pub fn new(emails: Vec<Email>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &emails {
            if !seen.insert(e.id.clone()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        let has_headers = !emails.is_empty() && emails.iter().all(|e| e.header.is_some());
        Ok(Dataset {
            emails,
            has_headers,
        })
    }

    pub fn len(&self) -> usize {
        self.emails.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emails.is_empty()
    }

    /// Errors if any email is unlabeled.
    pub fn require_labels(&self) -> Result<()> {
        for e in &self.emails {
            if e.label.is_none() {
                return Err(Error::MissingLabel(e.id.clone()));
            }
        }
        Ok(())
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let phish = self
            .emails
            .iter()
            .filter(|e| e.label == Some(LABEL_PHISH))
            .count();
        let legit = self
            .emails
            .iter()
            .filter(|e| e.label == Some(LABEL_LEGIT))
            .count();
        (legit, phish)
    }

    /// A new dataset containing the emails at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let emails: Vec<Email> = indices.iter().map(|&i| self.emails[i].clone()).collect();
        let has_headers = !emails.is_empty() && emails.iter().all(|e| e.header.is_some());
        Dataset {
            emails,
            has_headers,
        }
    }
}

/// Loads a labeled corpus from disk.
///
/// Emails whose body is empty after trimming are dropped with a warning;
/// an entirely empty corpus is an error.
pub fn load_corpus(root: &Path, layout: CorpusLayout) -> Result<Dataset> {
    let emails = match layout {
        CorpusLayout::TwoDirs => load_two_dirs(root)?,
        CorpusLayout::Csv => load_csv(root)?,
    };
    let mut kept = Vec::with_capacity(emails.len());
    for e in emails {
        if e.body.trim().is_empty() {
            log::warn!("dropping email {:?}: empty body", e.id);
        } else {
            kept.push(e);
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Dataset::new(kept)
}

fn load_two_dirs(root: &Path) -> Result<Vec<Email>> {
    let mut emails = Vec::new();
    for (dir, label) in [("legit", LABEL_LEGIT), ("phish", LABEL_PHISH)] {
        let sub = root.join(dir);
        let entries = fs::read_dir(&sub).map_err(|e| Error::io(&sub, e))?;
        let mut files: Vec<_> = entries
            .filter_map(|e| e.ok().map(|d| d.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort(); // read_dir order is platform-dependent
        for path in files {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let body = String::from_utf8_lossy(&bytes).into_owned();
            let id = format!(
                "{}/{}",
                dir,
                path.file_name().map(|f| f.to_string_lossy()).unwrap_or_default()
            );
            emails.push(Email {
                id,
                header: None,
                body,
                label: Some(label),
            });
        }
    }
    Ok(emails)
}

fn load_csv(path: &Path) -> Result<Vec<Email>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedCsv {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let expected = ["id", "header", "body", "label"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::MalformedCsv {
            row: 0,
            message: format!("expected header id,header,body,label, got {}", got.join(",")),
        });
    }

    let mut emails = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = (i + 2) as u64; // 1-based, after the header row
        let record = record.map_err(|e| Error::MalformedCsv {
            row,
            message: e.to_string(),
        })?;
        if record.len() != 4 {
            return Err(Error::MalformedCsv {
                row,
                message: format!("expected 4 fields, got {}", record.len()),
            });
        }
        let id = record[0].to_string();
        let header = if record[1].is_empty() {
            None
        } else {
            Some(record[1].to_string())
        };
        let body = record[2].to_string();
        let label = match record[3].trim() {
            "" => None,
            "0" => Some(LABEL_LEGIT),
            "1" => Some(LABEL_PHISH),
            other => {
                return Err(Error::InvalidLabel {
                    row,
                    value: other.to_string(),
                })
            }
        };
        emails.push(Email {
            id,
            header,
            body,
            label,
        });
    }
    Ok(emails)
}

/// Writes a dataset back out in the CSV interchange format.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(["id", "header", "body", "label"])
        .map_err(|e| Error::MalformedCsv {
            row: 0,
            message: e.to_string(),
        })?;
    for e in &dataset.emails {
        let label = e.label.map(|l| l.to_string()).unwrap_or_default();
        writer
            .write_record([
                e.id.as_str(),
                e.header.as_deref().unwrap_or(""),
                e.body.as_str(),
                label.as_str(),
            ])
            .map_err(|err| Error::MalformedCsv {
                row: 0,
                message: err.to_string(),
            })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Stratified k-fold assignment: per-class seeded shuffle, then one global
/// round-robin cursor over the classes so fold sizes differ by at most one
/// overall and by at most one within each class.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    let n = dataset.len();
    if k < 2 || k > n {
        return Err(Error::BadFoldCount { k, n });
    }
    dataset.require_labels()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = BTreeMap::new();
    let mut cursor = 0usize;
    for class in [LABEL_LEGIT, LABEL_PHISH] {
        let mut ids: Vec<&str> = dataset
            .emails
            .iter()
            .filter(|e| e.label == Some(class))
            .map(|e| e.id.as_str())
            .collect();
        if ids.len() < k {
            log::warn!(
                "class {} has only {} emails for {}-fold split; some folds get none",
                class,
                ids.len(),
                k
            );
        }
        ids.shuffle(&mut rng);
        for id in ids {
            fold_of.insert(id.to_string(), cursor % k);
            cursor += 1;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

impl FoldAssignment {
    /// Email indices whose fold equals / differs from `fold`.
    pub fn split_indices(&self, dataset: &Dataset, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, e) in dataset.emails.iter().enumerate() {
            if self.fold_of.get(&e.id) == Some(&fold) {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn labeled(n_legit: usize, n_phish: usize) -> Dataset {
        let mut emails = Vec::new();
        for i in 0..n_legit {
            emails.push(Email {
                id: format!("l{i}"),
                header: None,
                body: "hello".into(),
                label: Some(LABEL_LEGIT),
            });
        }
        for i in 0..n_phish {
            emails.push(Email {
                id: format!("p{i}"),
                header: None,
                body: "click".into(),
                label: Some(LABEL_PHISH),
            });
        }
        Dataset::new(emails).unwrap()
    }

    #[test]
    fn two_dirs_layout_labels_by_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("legit")).unwrap();
        fs::create_dir(dir.path().join("phish")).unwrap();
        fs::write(dir.path().join("legit/a.txt"), "hello friend").unwrap();
        fs::write(dir.path().join("phish/b.txt"), "click here now").unwrap();

        let ds = load_corpus(dir.path(), CorpusLayout::TwoDirs).unwrap();
        assert_eq!(ds.len(), 2);
        let labels: Vec<_> = ds.emails.iter().map(|e| e.label.unwrap()).collect();
        assert_eq!(labels, vec![LABEL_LEGIT, LABEL_PHISH]);
        assert!(!ds.has_headers);
    }

    #[test]
    fn empty_csv_corpus_is_an_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "id,header,body,label").unwrap();
        let err = load_corpus(f.path(), CorpusLayout::Csv).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus));
    }

    #[test]
    fn malformed_csv_names_the_row() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "id,header,body,label").unwrap();
        writeln!(f, "a,,body text,1").unwrap();
        writeln!(f, "b,,oops,2").unwrap();
        let err = load_corpus(f.path(), CorpusLayout::Csv).unwrap_err();
        match err {
            Error::InvalidLabel { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn quoted_newlines_round_trip() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "id,header,body,label").unwrap();
        writeln!(f, "a,,\"line one\nline two\",0").unwrap();
        let ds = load_corpus(f.path(), CorpusLayout::Csv).unwrap();
        assert_eq!(ds.emails[0].body, "line one\nline two");
    }

    #[test]
    fn empty_bodies_are_dropped_not_fatal() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "id,header,body,label").unwrap();
        writeln!(f, "a,,\"   \",0").unwrap();
        writeln!(f, "b,,real content,1").unwrap();
        let ds = load_corpus(f.path(), CorpusLayout::Csv).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.emails[0].id, "b");
    }

    #[test]
    fn loading_twice_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("legit")).unwrap();
        fs::create_dir(dir.path().join("phish")).unwrap();
        for i in 0..5 {
            fs::write(dir.path().join(format!("legit/{i}.txt")), format!("msg {i}")).unwrap();
        }
        fs::write(dir.path().join("phish/x.txt"), "verify account").unwrap();
        let a = load_corpus(dir.path(), CorpusLayout::TwoDirs).unwrap();
        let b = load_corpus(dir.path(), CorpusLayout::TwoDirs).unwrap();
        assert_eq!(a.emails, b.emails);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let emails = vec![
            Email {
                id: "x".into(),
                header: None,
                body: "a".into(),
                label: Some(0),
            },
            Email {
                id: "x".into(),
                header: None,
                body: "b".into(),
                label: Some(1),
            },
        ];
        assert!(matches!(Dataset::new(emails), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn exact_divisibility_gives_equal_folds() {
        let ds = labeled(80, 20);
        let folds = stratified_kfold(&ds, 5, 3).unwrap();
        for f in 0..5 {
            let (_, test) = folds.split_indices(&ds, f);
            assert_eq!(test.len(), 20);
            let phish = test
                .iter()
                .filter(|&&i| ds.emails[i].label == Some(LABEL_PHISH))
                .count();
            assert_eq!(phish, 4);
        }
    }

    #[test]
    fn k_of_one_rejected() {
        let ds = labeled(3, 3);
        assert!(stratified_kfold(&ds, 1, 0).is_err());
    }

    #[test]
    fn k_above_len_rejected() {
        let ds = labeled(2, 2);
        assert!(stratified_kfold(&ds, 5, 0).is_err());
    }

    // Recount oracle over the emitted assignment for an uneven split.
    #[test]
    fn eleven_emails_three_phish_recount() {
        let ds = labeled(8, 3);
        let folds = stratified_kfold(&ds, 5, 7).unwrap();
        assert_eq!(folds.fold_of.len(), 11);

        let mut phish_per_fold = vec![0usize; 5];
        let mut total_per_fold = vec![0usize; 5];
        for e in &ds.emails {
            let f = folds.fold_of[&e.id];
            total_per_fold[f] += 1;
            if e.label == Some(LABEL_PHISH) {
                phish_per_fold[f] += 1;
            }
        }
        for &c in &phish_per_fold {
            assert!(c == 0 || c == 1, "phish counts {phish_per_fold:?}");
        }
        assert_eq!(phish_per_fold.iter().sum::<usize>(), 3);
        let max = *total_per_fold.iter().max().unwrap();
        let min = *total_per_fold.iter().min().unwrap();
        assert!(max - min <= 1, "fold sizes {total_per_fold:?}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let ds = labeled(13, 7);
        let a = stratified_kfold(&ds, 4, 99).unwrap();
        let b = stratified_kfold(&ds, 4, 99).unwrap();
        assert_eq!(a.fold_of, b.fold_of);
    }

    proptest! {
        #[test]
        fn folds_partition_and_balance(
            n_legit in 2usize..40,
            n_phish in 2usize..40,
            k in 2usize..6,
            seed in any::<u64>(),
        ) {
            prop_assume!(k <= n_legit + n_phish);
            let ds = labeled(n_legit, n_phish);
            let folds = stratified_kfold(&ds, k, seed).unwrap();

            // every id mapped exactly once
            prop_assert_eq!(folds.fold_of.len(), ds.len());
            let mut union = 0usize;
            let mut phish_counts = vec![0usize; k];
            for f in 0..k {
                let (train, test) = folds.split_indices(&ds, f);
                prop_assert_eq!(train.len() + test.len(), ds.len());
                union += test.len();
                for &i in &test {
                    if ds.emails[i].label == Some(LABEL_PHISH) {
                        phish_counts[f] += 1;
                    }
                }
            }
            prop_assert_eq!(union, ds.len());

            let lo = n_phish / k;
            let hi = n_phish.div_ceil(k);
            for &c in &phish_counts {
                prop_assert!(c >= lo && c <= hi, "phish counts {:?}", phish_counts);
            }
        }
    }
}
