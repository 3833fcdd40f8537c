//! Rhyme model: a forward character LSTM encodes each word's letters; a
//! margin loss pushes the best-rhyming reference pair at least `delta`
//! ahead of the runner-up. Only the character embeddings are shared with
//! the other models; the LSTM weights are this model's own.
//!
//! Training pairs come from quatrain end words: one end word is the target,
//! the other three plus sampled negatives are the references. The model
//! never sees which scheme a quatrain follows.

use crate::cells;
use crate::config::Config;
use crate::corpus::{CharVocab, RhymeExample, Vocab};
use crate::graph::{Graph, NodeId};
use crate::params::{Bound, ParamStore};
use rand::Rng;

pub fn rm_init(ps: &mut ParamStore, cfg: &Config, rng: &mut impl Rng) {
    cells::lstm_init(ps, "rm.enc", cfg.char_dim, cfg.rm_hidden, rng);
}

/// Last hidden state of the forward character LSTM over the word's letters.
pub fn encode_rhyme(
    g: &mut Graph,
    b: &Bound,
    cfg: &Config,
    word: &str,
    train: bool,
    rng: &mut impl Rng,
) -> NodeId {
    let chars = CharVocab.word_ids(word);
    assert!(!chars.is_empty(), "cannot rhyme-encode {word:?}: no letters");
    let cemb = b.id("shared.cemb");
    let xs: Vec<NodeId> = chars.iter().map(|&c| g.lookup(cemb, c)).collect();
    let outs = cells::lstm_run(g, b, "rm.enc", &xs, cfg.rm_hidden, false);
    let last = *outs.last().unwrap();
    g.dropout(last, cfg.dropout, train, rng)
}

/// Indices of the largest and second-largest value (ties broken by
/// position).
pub fn top2_indices(values: &[f64]) -> (usize, usize) {
    assert!(values.len() >= 2, "top-2 needs at least two values");
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    let mut second = usize::MAX;
    for (i, &v) in values.iter().enumerate() {
        if i == best {
            continue;
        }
        if second == usize::MAX || v > values[second] {
            second = i;
        }
    }
    (best, second)
}

/// `max(0, delta - top1 + top2)` over the cosines between the target's
/// encoding and each reference's. The two largest are picked from the
/// forward values; the graph then only contains the picked pair.
pub fn rhyme_loss(
    g: &mut Graph,
    b: &Bound,
    cfg: &Config,
    example: &RhymeExample,
    train: bool,
    rng: &mut impl Rng,
) -> NodeId {
    assert!(example.refs.len() >= 2, "margin loss needs two references");
    let target = encode_rhyme(g, b, cfg, &example.target, train, rng);
    let cosines: Vec<NodeId> = example
        .refs
        .iter()
        .map(|r| {
            let enc = encode_rhyme(g, b, cfg, r, train, rng);
            g.cosine(target, enc)
        })
        .collect();
    let values: Vec<f64> = cosines.iter().map(|&c| g.val(c).data[0]).collect();
    let (best, second) = top2_indices(&values);
    let gap = g.sub(cosines[second], cosines[best]);
    let shifted = g.shift(gap, cfg.rm_margin);
    g.relu(shifted)
}

/// Cosine similarity of two words' rhyme encodings, dropout off.
pub fn rhyme_score(ps: &ParamStore, cfg: &Config, w1: &str, w2: &str) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut g = Graph::new();
    let b = ps.bind(&mut g);
    let e1 = encode_rhyme(&mut g, &b, cfg, w1, false, &mut rng);
    let e2 = encode_rhyme(&mut g, &b, cfg, w2, false, &mut rng);
    let c = g.cosine(e1, e2);
    g.val(c).data[0].clamp(-1.0, 1.0)
}

/// Mean rhyme loss over a batch of examples, as used by the training step.
pub fn rhyme_batch_loss(
    g: &mut Graph,
    b: &Bound,
    cfg: &Config,
    examples: &[RhymeExample],
    train: bool,
    rng: &mut impl Rng,
) -> NodeId {
    assert!(!examples.is_empty());
    let terms: Vec<NodeId> = examples
        .iter()
        .map(|ex| rhyme_loss(g, b, cfg, ex, train, rng))
        .collect();
    let stacked = g.concat(&terms);
    g.mean(stacked)
}

/// All end-word cosines of a quatrain against each other, for scheme checks
/// and error tables.
pub fn pair_scores(ps: &ParamStore, cfg: &Config, words: &[String]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            out.push((i, j, rhyme_score(ps, cfg, &words[i], &words[j])));
        }
    }
    out
}

/// Builds the rotating-target examples for every quatrain of every sonnet.
pub fn rhyme_examples_for(
    sonnets: &[crate::corpus::Sonnet],
    vocab: &Vocab,
    k_neg: usize,
    rng: &mut impl Rng,
) -> Vec<RhymeExample> {
    let mut out = Vec::new();
    for s in sonnets {
        for q in s.quatrains() {
            if let Ok(ends) = crate::corpus::quatrain_end_words(q) {
                out.extend(crate::corpus::make_rhyme_examples(&ends, k_neg, vocab, rng));
            }
        }
    }
    out
}
