//! Rank-based word importance scores and the supervised-attention penalty.
//!
//! A word scores high when it is frequent in phishing emails and infrequent
//! in legitimate ones: both per-class document frequencies are sorted
//! descending, each word gets a 1-based rank in each sort, and its
//! unnormalized score is legitimateRank / phishingRank. Per sentence, the
//! scores of the real tokens are normalized to sum to 1 and the training
//! objective penalizes the squared difference between the word attention
//! weights and these targets.

use std::collections::HashSet;

use crate::corpus::{Dataset, LABEL_PHISH};
use crate::error::{Error, Result};
use crate::textprep::{EncodedEmail, Vocabulary, PAD, UNK};

/// Per-word frequencies, ranks and unnormalized importance score.
#[derive(Clone, Debug, PartialEq)]
pub struct WordImportance {
    pub token: String,
    pub phish_freq: u64,
    pub legit_freq: u64,
    pub phish_rank: u64,
    pub legit_rank: u64,
    pub score: f64,
}

/// Importance data for every vocabulary word, indexed like the vocabulary.
/// PAD scores 0 and UNK takes the median score, so unknown tail words stay
/// neutral rather than dominant.
#[derive(Clone, Debug)]
pub struct ImportanceTable {
    words: Vec<WordImportance>,
    unk_score: f64,
}

impl ImportanceTable {
    pub fn words(&self) -> &[WordImportance] {
        &self.words
    }

    pub fn unk_score(&self) -> f64 {
        self.unk_score
    }

    /// Unnormalized score for a vocabulary index.
    pub fn score_of(&self, id: u32) -> f64 {
        match id {
            PAD => 0.0,
            UNK => self.unk_score,
            _ => self.words[(id - 2) as usize].score,
        }
    }

    /// Word rows sorted by (score desc, token asc), the shape the
    /// `score-words` output uses.
    pub fn sorted_by_score(&self) -> Vec<&WordImportance> {
        let mut rows: Vec<&WordImportance> = self.words.iter().collect();
        rows.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap()
                .then_with(|| a.token.cmp(&b.token))
        });
        rows
    }
}

/// 1-based descending rank by count with lexicographic tie-breaking.
fn ranks_desc(tokens: &[String], counts: &[u64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..tokens.len()).collect();
    order.sort_by(|&a, &b| {
        counts[b]
            .cmp(&counts[a])
            .then_with(|| tokens[a].cmp(&tokens[b]))
    });
    let mut ranks = vec![0u64; tokens.len()];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = (pos + 1) as u64;
    }
    ranks
}

/// Counts per-class document frequencies (an email containing a word many
/// times counts once) and derives ranks and scores for every vocabulary
/// word. Errors when the dataset has a single class, since the missing
/// class has no rank order.
pub fn compute_ranks(dataset: &Dataset, vocab: &Vocabulary) -> Result<ImportanceTable> {
    dataset.require_labels()?;
    let (legit, phish) = dataset.class_counts();
    if legit == 0 || phish == 0 {
        return Err(Error::SingleClass);
    }

    let tokens = vocab.tokens();
    let mut phish_freq = vec![0u64; tokens.len()];
    let mut legit_freq = vec![0u64; tokens.len()];
    for email in &dataset.emails {
        let distinct: HashSet<u32> = crate::textprep::email_tokens(email)
            .iter()
            .map(|t| vocab.lookup(t))
            .filter(|&id| id >= 2)
            .collect();
        let bucket = if email.label == Some(LABEL_PHISH) {
            &mut phish_freq
        } else {
            &mut legit_freq
        };
        for id in distinct {
            bucket[(id - 2) as usize] += 1;
        }
    }

    let phish_rank = ranks_desc(tokens, &phish_freq);
    let legit_rank = ranks_desc(tokens, &legit_freq);

    let words: Vec<WordImportance> = tokens
        .iter()
        .enumerate()
        .map(|(i, token)| WordImportance {
            token: token.clone(),
            phish_freq: phish_freq[i],
            legit_freq: legit_freq[i],
            phish_rank: phish_rank[i],
            legit_rank: legit_rank[i],
            score: legit_rank[i] as f64 / phish_rank[i] as f64,
        })
        .collect();

    let unk_score = median_score(&words);
    Ok(ImportanceTable { words, unk_score })
}

fn median_score(words: &[WordImportance]) -> f64 {
    if words.is_empty() {
        return 0.0;
    }
    let mut scores: Vec<f64> = words.iter().map(|w| w.score).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = scores.len();
    if n % 2 == 1 {
        scores[n / 2]
    } else {
        0.5 * (scores[n / 2 - 1] + scores[n / 2])
    }
}

/// Normalized importance targets for one encoded sentence row: scores of
/// the real tokens divided by their sum, zeros on padded cells.
pub fn sentence_scores(ids: &[u32], mask: &[u8], table: &ImportanceTable) -> Vec<f64> {
    assert_eq!(ids.len(), mask.len(), "sentence_scores length mismatch");
    let mut raw = vec![0.0; ids.len()];
    let mut sum = 0.0;
    for (j, (&id, &m)) in ids.iter().zip(mask).enumerate() {
        if m != 0 {
            raw[j] = table.score_of(id);
            sum += raw[j];
        }
    }
    if sum > 0.0 {
        for v in raw.iter_mut() {
            *v /= sum;
        }
    }
    raw
}

/// The full L x K grid of normalized importance targets for one email.
pub fn score_grid(encoded: &EncodedEmail, table: &ImportanceTable) -> Vec<f64> {
    let mut grid = vec![0.0; encoded.l * encoded.k];
    for i in 0..encoded.real_sentences() {
        let (ids, mask) = encoded.body_row(i);
        let row = sentence_scores(ids, mask, table);
        grid[i * encoded.k..(i + 1) * encoded.k].copy_from_slice(&row);
    }
    grid
}

/// Squared-difference penalty between word attention weights and the
/// normalized importance targets, summed over real body tokens of real
/// sentences. Both grids are L x K with zeros on padded cells.
pub fn attention_penalty(
    alpha: &[f64],
    scores: &[f64],
    body_mask: &[u8],
    sentence_mask: &[u8],
    k: usize,
) -> f64 {
    assert_eq!(alpha.len(), scores.len(), "penalty grid shape mismatch");
    assert_eq!(alpha.len(), body_mask.len(), "penalty mask shape mismatch");
    let mut penalty = 0.0;
    for (i, &sm) in sentence_mask.iter().enumerate() {
        if sm == 0 {
            continue;
        }
        for j in 0..k {
            let cell = i * k + j;
            if body_mask[cell] != 0 {
                let d = scores[cell] - alpha[cell];
                penalty += d * d;
            }
        }
    }
    penalty
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Email;
    use crate::textprep::build_vocab;

    fn email(id: &str, body: &str, label: u8) -> Email {
        Email {
            id: id.into(),
            header: None,
            body: body.into(),
            label: Some(label),
        }
    }

    #[test]
    fn forced_top_rank_for_phishing_word() {
        // two phishing emails contain "click", no legitimate one does
        let ds = Dataset::new(vec![
            email("p0", "click fast click", 1),
            email("p1", "click now", 1),
            email("l0", "meeting agenda", 0),
        ])
        .unwrap();
        let vocab = build_vocab(&ds, 1);
        let table = compute_ranks(&ds, &vocab).unwrap();
        let click = table
            .words()
            .iter()
            .find(|w| w.token == "click")
            .unwrap();
        assert_eq!(click.phish_freq, 2); // document frequency, not occurrences
        assert_eq!(click.phish_rank, 1);
        // zero legit frequency: ranked after all nonzero-frequency words,
        // ties broken lexicographically
        let zero_legit: Vec<&WordImportance> = table
            .words()
            .iter()
            .filter(|w| w.legit_freq == 0)
            .collect();
        let mut sorted = zero_legit.clone();
        sorted.sort_by(|a, b| a.token.cmp(&b.token));
        let nonzero = table.words().iter().filter(|w| w.legit_freq > 0).count() as u64;
        for (offset, w) in sorted.iter().enumerate() {
            assert_eq!(w.legit_rank, nonzero + 1 + offset as u64);
        }
    }

    #[test]
    fn score_is_rank_ratio() {
        let w = WordImportance {
            token: "x".into(),
            phish_freq: 5,
            legit_freq: 1,
            phish_rank: 2,
            legit_rank: 30,
            score: 30.0 / 2.0,
        };
        assert_eq!(w.score, 15.0);
    }

    #[test]
    fn single_class_is_an_error() {
        let ds = Dataset::new(vec![email("a", "hello", 0), email("b", "hi there", 0)]).unwrap();
        let vocab = build_vocab(&ds, 1);
        assert!(matches!(
            compute_ranks(&ds, &vocab),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn rank_stability_under_duplication() {
        let base = vec![
            email("p0", "click your account now please", 1),
            email("p1", "verify your account today friend", 1),
            email("l0", "lunch meeting agenda attached here", 0),
            email("l1", "quarterly report is attached now", 0),
        ];
        let mut doubled = base.clone();
        for e in &base {
            let mut copy = e.clone();
            copy.id = format!("{}-dup", e.id);
            doubled.push(copy);
        }
        let ds1 = Dataset::new(base).unwrap();
        let ds2 = Dataset::new(doubled).unwrap();
        let vocab = build_vocab(&ds1, 1);
        let t1 = compute_ranks(&ds1, &vocab).unwrap();
        let t2 = compute_ranks(&ds2, &vocab).unwrap();
        for (a, b) in t1.words().iter().zip(t2.words()) {
            assert_eq!(a.phish_rank, b.phish_rank, "token {}", a.token);
            assert_eq!(a.legit_rank, b.legit_rank, "token {}", a.token);
            assert_eq!(a.score, b.score, "token {}", a.token);
        }
    }

    #[test]
    fn score_monotonicity_in_exact_rationals() {
        // holding legit rank fixed, score strictly decreases in phish rank;
        // holding phish rank fixed, score strictly increases in legit rank.
        // Checked by cross-multiplication, which is exact in u64.
        let legit = 30u64;
        for pr in 1u64..50 {
            // legit/pr > legit/(pr+1)  <=>  legit*(pr+1) > legit*pr
            assert!(legit * (pr + 1) > legit * pr);
        }
        let phish = 7u64;
        for lr in 1u64..50 {
            assert!((lr + 1) * phish > lr * phish);
        }
    }

    #[test]
    fn sentence_scores_normalize() {
        let ds = Dataset::new(vec![
            email("p", "alpha beta alpha beta", 1),
            email("l", "beta gamma beta gamma", 0),
        ])
        .unwrap();
        let vocab = build_vocab(&ds, 1);
        let table = compute_ranks(&ds, &vocab).unwrap();

        let a = vocab.lookup("alpha");
        let b = vocab.lookup("beta");
        let (sa, sb) = (table.score_of(a), table.score_of(b));
        let got = sentence_scores(&[a, b, PAD], &[1, 1, 0], &table);
        assert!((got[0] - sa / (sa + sb)).abs() < 1e-15);
        assert!((got[1] - sb / (sa + sb)).abs() < 1e-15);
        assert_eq!(got[2], 0.0);
        assert!((got[0] + got[1] - 1.0).abs() < 1e-15);

        let single = sentence_scores(&[a], &[1], &table);
        assert_eq!(single, vec![1.0]);

        let padded = sentence_scores(&[PAD, PAD], &[0, 0], &table);
        assert_eq!(padded, vec![0.0, 0.0]);
    }

    // Hand-computation oracle for a 5-token synthetic sentence.
    #[test]
    fn five_token_row_matches_hand_normalization() {
        let ds = Dataset::new(vec![
            email("p0", "wire funds verify wire credentials", 1),
            email("p1", "verify credentials funds", 1),
            email("l0", "team lunch funds update", 0),
            email("l1", "team update notes", 0),
        ])
        .unwrap();
        let vocab = build_vocab(&ds, 1);
        let table = compute_ranks(&ds, &vocab).unwrap();

        let toks = ["wire", "funds", "verify", "credentials", "team"];
        let ids: Vec<u32> = toks.iter().map(|t| vocab.lookup(t)).collect();
        let raw: Vec<f64> = ids.iter().map(|&id| table.score_of(id)).collect();
        let sum: f64 = raw.iter().sum();
        let got = sentence_scores(&ids, &[1; 5], &table);
        for (g, r) in got.iter().zip(&raw) {
            assert!((g - r / sum).abs() < 1e-15);
        }
    }

    #[test]
    fn unk_takes_median_and_pad_zero() {
        let ds = Dataset::new(vec![
            email("p", "click verify account", 1),
            email("l", "meeting notes agenda", 0),
        ])
        .unwrap();
        let vocab = build_vocab(&ds, 1);
        let table = compute_ranks(&ds, &vocab).unwrap();
        assert_eq!(table.score_of(PAD), 0.0);
        let mut scores: Vec<f64> = table.words().iter().map(|w| w.score).collect();
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = scores.len();
        let median = if n % 2 == 1 {
            scores[n / 2]
        } else {
            0.5 * (scores[n / 2 - 1] + scores[n / 2])
        };
        assert_eq!(table.score_of(UNK), median);
        assert!(table.unk_score() > 0.0);
    }

    #[test]
    fn penalty_zero_at_match_and_positive_otherwise() {
        let alpha = [0.5, 0.5, 0.0, 0.0];
        let g = [0.5, 0.5, 0.0, 0.0];
        let mask = [1u8, 1, 0, 0];
        let smask = [1u8, 0];
        assert_eq!(attention_penalty(&alpha, &g, &mask, &smask, 2), 0.0);

        let alpha2 = [1.0, 0.0, 0.0, 0.0];
        let g2 = [0.5, 0.5, 0.0, 0.0];
        let p = attention_penalty(&alpha2, &g2, &mask, &smask, 2);
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn penalty_ignores_padded_cells() {
        // identical on real cells, wildly different on padded ones
        let alpha = [0.4, 0.6, 9.0, -3.0];
        let g = [0.4, 0.6, 0.0, 0.0];
        let mask = [1u8, 1, 0, 0];
        let smask = [1u8, 0];
        assert_eq!(attention_penalty(&alpha, &g, &mask, &smask, 2), 0.0);
    }
}
