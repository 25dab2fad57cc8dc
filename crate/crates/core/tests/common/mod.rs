//! Synthetic corpora shared by the integration suites.

use rand::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hlstm_core::corpus::{Dataset, Email};

pub const TRIGGERS: [&str; 10] = [
    "account", "verify", "click", "password", "urgent", "suspended", "login", "confirm",
    "billing", "expires",
];

pub const SAFE_WORDS: [&str; 20] = [
    "meeting", "agenda", "report", "quarter", "team", "lunch", "notes", "project", "review",
    "schedule", "draft", "budget", "summary", "update", "office", "travel", "invoice", "plan",
    "minutes", "deadline",
];

const FILLER: [&str; 12] = [
    "the", "a", "please", "for", "with", "and", "this", "that", "your", "our", "on", "at",
];

fn sentence(words: &[&str], rng: &mut ChaCha8Rng, len: usize, capitalize: bool) -> String {
    let mut parts: Vec<String> = (0..len)
        .map(|_| {
            if rng.random_bool(0.4) {
                FILLER[rng.random_range(0..FILLER.len())].to_string()
            } else {
                words[rng.random_range(0..words.len())].to_string()
            }
        })
        .collect();
    if capitalize {
        let mut chars = parts[0].chars();
        if let Some(first) = chars.next() {
            parts[0] = first.to_uppercase().collect::<String>() + chars.as_str();
        }
    }
    parts.join(" ") + "."
}

fn body(words: &[&str], rng: &mut ChaCha8Rng, n_sentences: usize) -> String {
    (0..n_sentences)
        .map(|_| sentence(words, rng, rng.random_range(4..9), true))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A small fully separable corpus: phishing bodies draw from the trigger
/// pool, legitimate ones from the safe pool, half and half.
pub fn separable_corpus(n: usize, with_headers: bool, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut emails = Vec::with_capacity(n);
    for i in 0..n {
        let phish = i % 2 == 0;
        let pool: &[&str] = if phish { &TRIGGERS } else { &SAFE_WORDS };
        let header = with_headers.then(|| {
            if phish {
                format!("From: security{i}@alerts.example Subject: verify account")
            } else {
                format!("From: colleague{i}@work.example Subject: weekly notes")
            }
        });
        emails.push(Email {
            id: format!("e{i:04}"),
            header,
            body: body(pool, &mut rng, 2 + i % 3),
            label: Some(u8::from(phish)),
        });
    }
    Dataset::new(emails).unwrap()
}

/// An imbalanced corpus where phishing emails over-use trigger words while
/// legitimate emails occasionally contain a stray trigger; mirrors the
/// regime the classifier is meant for, with enough noise that nothing is
/// trivially separable on a single token.
pub fn trigger_corpus(n: usize, phish_fraction: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_phish = ((n as f64) * phish_fraction).round() as usize;
    let mut emails = Vec::with_capacity(n);
    for i in 0..n {
        let phish = i < n_phish;
        let text = if phish {
            // 2-4 trigger-heavy sentences plus mundane padding
            let n_trigger_sents = rng.random_range(2..5);
            let mut sentences = Vec::new();
            for _ in 0..n_trigger_sents {
                let mut words: Vec<&str> = Vec::new();
                for _ in 0..rng.random_range(2..4) {
                    words.push(TRIGGERS[rng.random_range(0..TRIGGERS.len())]);
                }
                for _ in 0..rng.random_range(2..5) {
                    words.push(SAFE_WORDS[rng.random_range(0..SAFE_WORDS.len())]);
                }
                words.shuffle(&mut rng);
                sentences.push(raw_sentence(&words));
            }
            for _ in 0..rng.random_range(1..4) {
                let len = rng.random_range(5..10);
                sentences.push(sentence(&SAFE_WORDS, &mut rng, len, true));
            }
            sentences.shuffle(&mut rng);
            sentences.join(" ")
        } else {
            let n_sents = rng.random_range(3..7);
            let mut b = body(&SAFE_WORDS, &mut rng, n_sents);
            // a tenth of legitimate mail mentions one trigger in passing
            if rng.random_bool(0.1) {
                let t = TRIGGERS[rng.random_range(0..TRIGGERS.len())];
                b.push_str(&format!(" Please {t} the usual way."));
            }
            b
        };
        emails.push(Email {
            id: format!("m{i:05}"),
            header: None,
            body: text,
            label: Some(u8::from(phish)),
        });
    }
    // interleave classes so ids do not encode the label ordering downstream
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let emails: Vec<Email> = order.into_iter().map(|i| emails[i].clone()).collect();
    Dataset::new(emails).unwrap()
}

fn raw_sentence(words: &[&str]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    s + "."
}

/// Fixed-vocabulary toy corpus for gradient checks: 17 distinct words plus
/// the sentence terminal, so the vocabulary lands at exactly 20 entries
/// once PAD and UNK are added.
pub fn toy_corpus(with_headers: bool) -> Dataset {
    let bodies = [
        ("t0", "Alpha beta gamma. Delta epsilon zeta.", 1u8),
        ("t1", "Eta theta iota. Kappa lambda mu.", 0),
        ("t2", "Nu xi omicron. Alpha pi rho.", 1),
        ("t3", "Rho beta gamma. Gamma delta epsilon.", 0),
        ("t4", "Zeta eta theta. Iota kappa lambda.", 1),
        ("t5", "Mu nu xi. Omicron pi rho.", 0),
    ];
    let headers = [
        "alpha rho", "beta pi", "gamma mu", "delta nu", "epsilon xi", "zeta pi",
    ];
    let emails = bodies
        .iter()
        .zip(headers)
        .map(|((id, body, label), header)| Email {
            id: (*id).into(),
            header: with_headers.then(|| header.to_string()),
            body: (*body).into(),
            label: Some(*label),
        })
        .collect();
    Dataset::new(emails).unwrap()
}
