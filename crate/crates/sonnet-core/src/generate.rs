//! Constrained quatrain generation. Lines are decoded last-word-first by the
//! reversed language model, so the rhyme-carrying end word is the first draw
//! and can be resampled against the scheme's thresholds before the rest of
//! the line exists. Ten candidate lines share the same context and initial
//! state; the stress model's loss picks among them through a sharp softmax.
//!
//! A draw is rejected when it is the unknown token, a repeat of an earlier
//! non-stopword, a third occurrence of any word, one of the three previous
//! draws, or a parenthesis/quote symbol. Rejections past the cap, like
//! threshold failures past the cap, restart the whole quatrain.

use crate::config::Config;
use crate::corpus::{
    is_punct_token, strip_for_meter, CharVocab, Vocab, LINE_END_ID, LINE_START_ID, PAD_ID, UNK_ID,
};
use crate::error::{Result, SonnetError};
use crate::graph::Graph;
use crate::lm::{self, Token};
use crate::meter;
use crate::params::ParamStore;
use crate::rhyme;
use indexmap::IndexMap;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::sync::OnceLock;

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        include_str!("../data/stopwords.txt")
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .collect()
    })
}

pub fn is_stopword(w: &str) -> bool {
    stopwords().contains(w)
}

/// Parenthesis and quote tokens. Words merely containing an apostrophe
/// ("o'er") stay allowed.
pub fn banned_symbol(w: &str) -> bool {
    is_punct_token(w)
        && w.chars()
            .any(|c| matches!(c, '(' | ')' | '"' | '\'' | '`' | '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}'))
}

/// Words emitted so far in draw order: per-word counts plus the last three
/// draws. Rejected draws never enter.
#[derive(Debug, Clone, Default)]
pub struct GenHistory {
    counts: IndexMap<String, usize>,
    recent: Vec<String>,
}

impl GenHistory {
    pub fn new() -> GenHistory {
        GenHistory::default()
    }

    pub fn push(&mut self, w: &str) {
        *self.counts.entry(w.to_string()).or_insert(0) += 1;
        self.recent.push(w.to_string());
        if self.recent.len() > 3 {
            self.recent.remove(0);
        }
    }

    pub fn count(&self, w: &str) -> usize {
        self.counts.get(w).copied().unwrap_or(0)
    }

    pub fn is_recent(&self, w: &str) -> bool {
        self.recent.iter().any(|r| r == w)
    }
}

/// Why a drawn word must be redrawn, or None when it may stand.
pub fn rule_reject(word: &str, hist: &GenHistory) -> Option<&'static str> {
    if banned_symbol(word) {
        return Some("parenthesis or quote");
    }
    if hist.is_recent(word) {
        return Some("one of the preceding 3 words");
    }
    if hist.count(word) >= 2 {
        return Some("already used twice");
    }
    if hist.count(word) >= 1 && !is_stopword(word) {
        return Some("non-stopword used before");
    }
    None
}

/// The quatrain must be thrown away and regenerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Restart;

/// Softmax of `logits / temp`, numerically stable.
pub fn temperature_probs(logits: &[f64], temp: f64) -> Vec<f64> {
    assert!(temp > 0.0, "temperature must be positive");
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| ((l - max) / temp).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let x: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Debug)]
pub enum Draw {
    Word(usize),
    LineEnd,
}

/// Draws from `probs` until a word passes rules (1) through (5), or the line
/// terminator when `allow_line_end`. Gives up after `gen_resample_cap`
/// rejections.
pub fn sample_word(
    probs: &[f64],
    cfg: &Config,
    vocab: &Vocab,
    hist: &GenHistory,
    allow_line_end: bool,
    rng: &mut impl Rng,
) -> std::result::Result<Draw, Restart> {
    for _ in 0..cfg.gen_resample_cap {
        let id = sample_index(probs, rng);
        // the reversed stream ends at the line-start marker
        if id == LINE_START_ID {
            if allow_line_end {
                return Ok(Draw::LineEnd);
            }
            continue;
        }
        if id == UNK_ID || id == PAD_ID || id == LINE_END_ID {
            continue;
        }
        if rule_reject(vocab.word(id), hist).is_none() {
            return Ok(Draw::Word(id));
        }
    }
    Err(Restart)
}

/// Samples an index from `softmax(-losses / temp)`: the better a line
/// conforms, the likelier its selection.
pub fn select_line(losses: &[f64], temp: f64, rng: &mut impl Rng) -> usize {
    assert!(!losses.is_empty());
    assert!(losses.iter().all(|l| l.is_finite()), "non-finite line loss");
    let neg: Vec<f64> = losses.iter().map(|&l| -l).collect();
    let probs = temperature_probs(&neg, temp);
    sample_index(&probs, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Aabb,
    Abab,
    Abba,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Scheme> {
        match s.to_ascii_uppercase().as_str() {
            "AABB" => Some(Scheme::Aabb),
            "ABAB" => Some(Scheme::Abab),
            "ABBA" => Some(Scheme::Abba),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Aabb => "AABB",
            Scheme::Abab => "ABAB",
            Scheme::Abba => "ABBA",
        }
    }

    /// Rhyme letter of each line; equal letters must rhyme.
    pub fn letters(self) -> [u8; 4] {
        match self {
            Scheme::Aabb => [0, 0, 1, 1],
            Scheme::Abab => [0, 1, 0, 1],
            Scheme::Abba => [0, 1, 1, 0],
        }
    }
}

/// `scores[j]` is the proposed end word's rhyme score against line `j`'s end
/// word. Partner lines need at least the rhyme threshold, all others at most
/// the non-rhyme threshold.
pub fn end_word_ok(scheme: Scheme, line_idx: usize, scores: &[f64], cfg: &Config) -> bool {
    let letters = scheme.letters();
    scores.iter().enumerate().all(|(j, &s)| {
        if letters[j] == letters[line_idx] {
            s >= cfg.gen_rhyme_accept
        } else {
            s <= cfg.gen_nonrhyme_accept
        }
    })
}

/// One decoded candidate: words in reading order, its stress loss, and the
/// end word's scores against the earlier lines' end words.
#[derive(Debug, Clone)]
pub struct CandidateLine {
    pub words: Vec<String>,
    pub l_pm: f64,
    pub end_scores: Vec<f64>,
}

struct LineTask<'a> {
    ps: &'a ParamStore,
    cfg: &'a Config,
    vocab: &'a Vocab,
    prior_lines: &'a [Vec<String>],
    prior_ends: &'a [String],
    scheme: Scheme,
    line_idx: usize,
    hist: &'a GenHistory,
}

fn decode_candidate(task: &LineTask, seed: u64) -> std::result::Result<CandidateLine, Restart> {
    let LineTask { ps, cfg, vocab, prior_lines, prior_ends, scheme, line_idx, hist } = *task;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let b = ps.bind(&mut g);
    let wout = lm::output_matrix(&mut g, &b);

    let word_lines: Vec<Vec<&str>> = prior_lines
        .iter()
        .map(|l| l.iter().map(String::as_str).collect())
        .collect();
    let ctx = lm::context_for_line(&mut g, &b, cfg, vocab, &word_lines, word_lines.len(), false, &mut rng);
    let mut sess = lm::start_line(&mut g, cfg, ctx, wout, false);

    let mut hist = hist.clone();
    let mut drawn: Vec<String> = Vec::new();
    let mut end_scores: Vec<f64> = Vec::new();
    let mut prev = Token { id: LINE_END_ID, chars: Vec::new() };

    loop {
        let logits_node = sess.step(&mut g, &b, cfg, &prev, &mut rng);
        let logits = g.val(logits_node).data.clone();
        let probs = temperature_probs(&logits, cfg.gen_temperature);

        let id = if drawn.is_empty() {
            // the end word: resample against the scheme before anything else
            let mut found = None;
            for _ in 0..cfg.gen_resample_cap {
                let id = sample_index(&probs, &mut rng);
                if id == LINE_START_ID || id == LINE_END_ID || id == UNK_ID || id == PAD_ID {
                    continue;
                }
                let word = vocab.word(id);
                if rule_reject(word, &hist).is_some() {
                    continue;
                }
                let scores: Vec<f64> = prior_ends
                    .iter()
                    .map(|e| rhyme::rhyme_score(ps, cfg, word, e))
                    .collect();
                if end_word_ok(scheme, line_idx, &scores, cfg) {
                    end_scores = scores;
                    found = Some(id);
                    break;
                }
            }
            match found {
                Some(id) => id,
                None => return Err(Restart),
            }
        } else {
            let allow_end = drawn.len() >= cfg.gen_min_words;
            match sample_word(&probs, cfg, vocab, &hist, allow_end, &mut rng)? {
                Draw::LineEnd => break,
                Draw::Word(id) => id,
            }
        };

        let word = vocab.word(id).to_string();
        hist.push(&word);
        drawn.push(word.clone());
        if drawn.len() >= cfg.gen_max_words {
            break;
        }
        prev = lm::word_token(&word, vocab, &CharVocab);
    }

    let mut words = drawn;
    words.reverse();
    let meter_line = strip_for_meter(&words).map_err(|_| Restart)?;
    let l_pm = meter::line_conformity(ps, cfg, &meter_line).map_err(|_| Restart)?;
    Ok(CandidateLine { words, l_pm, end_scores })
}

/// Decodes `gen_candidates` lines against the same context, history and
/// constraints. Each candidate runs its own rng stream, derived here from
/// the master draw by draw, so threaded and sequential runs match bitwise.
#[allow(clippy::too_many_arguments)]
pub fn generate_candidates(
    ps: &ParamStore,
    cfg: &Config,
    vocab: &Vocab,
    prior_lines: &[Vec<String>],
    prior_ends: &[String],
    scheme: Scheme,
    line_idx: usize,
    hist: &GenHistory,
    master: &mut ChaCha8Rng,
) -> std::result::Result<Vec<CandidateLine>, Restart> {
    let seeds: Vec<u64> = (0..cfg.gen_candidates).map(|_| master.next_u64()).collect();
    let task = LineTask { ps, cfg, vocab, prior_lines, prior_ends, scheme, line_idx, hist };
    let results = crate::batch::map_items(&seeds, |&seed| decode_candidate(&task, seed));
    results.into_iter().collect()
}

#[derive(Debug, Clone)]
pub struct QuatrainMeta {
    pub scheme: String,
    pub seed: u64,
    pub restarts: usize,
    /// Stress loss of each emitted line.
    pub line_pm: Vec<f64>,
    /// Stress losses of all candidates per line, emitted one included.
    pub candidate_pm: Vec<Vec<f64>>,
    pub end_words: Vec<String>,
    /// Every end-word pair's rhyme score, post hoc.
    pub pair_scores: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct GenOutcome {
    pub lines: Vec<Vec<String>>,
    pub meta: QuatrainMeta,
}

/// Generates one quatrain. Deterministic in `(params, config, seed)`.
pub fn generate_quatrain(
    ps: &ParamStore,
    cfg: &Config,
    vocab: &Vocab,
    seed: u64,
) -> Result<GenOutcome> {
    for (key, what) in [
        ("pm.out.w", "stress"),
        ("rm.enc.wx", "rhyme"),
    ] {
        if !ps.contains(key) {
            return Err(SonnetError::Config(format!(
                "checkpoint has no {what} model parameters; generation needs all three models"
            )));
        }
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut restarts = 0usize;
    loop {
        let scheme = match Scheme::parse(&cfg.gen_scheme) {
            Some(s) => s,
            None => *[Scheme::Aabb, Scheme::Abab, Scheme::Abba]
                .iter()
                .nth(master.gen_range(0..3))
                .unwrap(),
        };
        match try_quatrain(ps, cfg, vocab, scheme, &mut master) {
            Ok((lines, line_pm, candidate_pm, end_words)) => {
                let pair_scores = end_words
                    .iter()
                    .enumerate()
                    .flat_map(|(i, a)| {
                        end_words.iter().enumerate().skip(i + 1).map(move |(j, b)| (i, j, a, b))
                    })
                    .map(|(i, j, a, b)| (i, j, rhyme::rhyme_score(ps, cfg, a, b)))
                    .collect();
                return Ok(GenOutcome {
                    lines,
                    meta: QuatrainMeta {
                        scheme: scheme.name().to_string(),
                        seed,
                        restarts,
                        line_pm,
                        candidate_pm,
                        end_words,
                        pair_scores,
                    },
                });
            }
            Err(Restart) => {
                restarts += 1;
                if restarts >= cfg.gen_restart_budget {
                    return Err(SonnetError::Data(format!(
                        "gave up after {restarts} quatrain restarts \
                         (scheme {}, resample cap {}, thresholds {}/{})",
                        cfg.gen_scheme,
                        cfg.gen_resample_cap,
                        cfg.gen_rhyme_accept,
                        cfg.gen_nonrhyme_accept
                    )));
                }
            }
        }
    }
}

type QuatrainDraft = (Vec<Vec<String>>, Vec<f64>, Vec<Vec<f64>>, Vec<String>);

fn try_quatrain(
    ps: &ParamStore,
    cfg: &Config,
    vocab: &Vocab,
    scheme: Scheme,
    master: &mut ChaCha8Rng,
) -> std::result::Result<QuatrainDraft, Restart> {
    let mut hist = GenHistory::new();
    let mut lines: Vec<Vec<String>> = Vec::with_capacity(4);
    let mut ends: Vec<String> = Vec::with_capacity(4);
    let mut line_pm = Vec::with_capacity(4);
    let mut candidate_pm = Vec::with_capacity(4);
    for line_idx in 0..4 {
        let cands =
            generate_candidates(ps, cfg, vocab, &lines, &ends, scheme, line_idx, &hist, master)?;
        let losses: Vec<f64> = cands.iter().map(|c| c.l_pm).collect();
        let pick = select_line(&losses, cfg.gen_select_temperature, master);
        let chosen = &cands[pick];
        for w in chosen.words.iter().rev() {
            hist.push(w);
        }
        ends.push(chosen.words.last().unwrap().clone());
        line_pm.push(chosen.l_pm);
        candidate_pm.push(losses);
        lines.push(chosen.words.clone());
    }
    Ok((lines, line_pm, candidate_pm, ends))
}

/// Re-checks the sampling rules on finished text, walking words in the order
/// they were drawn. Returns a description per violation.
pub fn rule_violations(lines: &[Vec<String>], vocab: &Vocab) -> Vec<String> {
    let mut hist = GenHistory::new();
    let mut out = Vec::new();
    for (li, line) in lines.iter().enumerate() {
        for w in line.iter().rev() {
            if vocab.id_of(w) == UNK_ID {
                out.push(format!("line {}: {w:?} is out of vocabulary", li + 1));
            }
            if let Some(reason) = rule_reject(w, &hist) {
                out.push(format!("line {}: {w:?} is {reason}", li + 1));
            }
            hist.push(w);
        }
    }
    out
}
