//! Component evaluation against a pronunciation dictionary: held-out
//! perplexity, stress accuracy of the attention-derived patterns, and rhyme
//! detection F1 with an orthographic last-syllable baseline, plus the error
//! listings and a machine-readable report.

use crate::batch;
use crate::config::Config;
use crate::corpus::{quatrain_end_words, strip_for_meter, CharVocab, Sonnet, Vocab};
use crate::error::{Result, SonnetError};
use crate::lm;
use crate::meter::{self, extract_stress};
use crate::params::ParamStore;
use crate::rhyme;
use indexmap::IndexMap;
use serde::Serialize;
use std::path::Path;

/// Word to pronunciations, each a phoneme list with stress digits on the
/// vowels. Lookup is case-insensitive; "WORD(2)" variant entries are merged
/// under the base word.
#[derive(Debug, Clone)]
pub struct PronDictionary {
    entries: IndexMap<String, Vec<Vec<String>>>,
}

impl PronDictionary {
    pub fn parse_text(text: &str, origin: &Path) -> Result<PronDictionary> {
        let mut entries: IndexMap<String, Vec<Vec<String>>> = IndexMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with(";;;") {
                continue;
            }
            let bad = |msg: String| SonnetError::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            };
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap();
            let phonemes: Vec<String> = parts.map(str::to_string).collect();
            if phonemes.is_empty() {
                return Err(bad(format!("entry {head:?} has no phonemes")));
            }
            for p in &phonemes {
                if let Some(d) = p.chars().last().filter(char::is_ascii_digit) {
                    if !matches!(d, '0' | '1' | '2') {
                        return Err(bad(format!("stress digit {d} in {p:?} is not 0, 1 or 2")));
                    }
                }
            }
            let base = match head.find('(') {
                Some(k) if head.ends_with(')') => &head[..k],
                _ => head,
            };
            if base.is_empty() {
                return Err(bad(format!("entry {head:?} has an empty word")));
            }
            entries.entry(base.to_lowercase()).or_default().push(phonemes);
        }
        Ok(PronDictionary { entries })
    }

    pub fn load(path: &Path) -> Result<PronDictionary> {
        let text = std::fs::read_to_string(path).map_err(|e| SonnetError::io(path, e))?;
        PronDictionary::parse_text(&text, path)
    }

    pub fn pronunciations(&self, word: &str) -> Option<&[Vec<String>]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The stress digit when the phoneme is a vowel, None for consonants.
pub fn vowel_stress(phoneme: &str) -> Option<u8> {
    phoneme
        .chars()
        .last()
        .filter(char::is_ascii_digit)
        .map(|d| d as u8 - b'0')
}

/// Dictionary stress patterns of a word, one per pronunciation, the three
/// stress levels collapsed to two: 0 stays unstressed, 1 and 2 become
/// stressed. Encoding matches the meter model's: 0 unstressed, 1 stressed.
pub fn dict_stress_patterns(dict: &PronDictionary, word: &str) -> Vec<Vec<u8>> {
    let Some(prons) = dict.pronunciations(word) else {
        return Vec::new();
    };
    let mut out: Vec<Vec<u8>> = Vec::new();
    for pron in prons {
        let pat: Vec<u8> = pron
            .iter()
            .filter_map(|p| vowel_stress(p))
            .map(|d| u8::from(d > 0))
            .collect();
        if !out.contains(&pat) {
            out.push(pat);
        }
    }
    out
}

/// No two neighbouring positions carry the same stress. Empty patterns do
/// not count as alternating.
pub fn alternating(pattern: &[u8]) -> bool {
    !pattern.is_empty() && pattern.windows(2).all(|w| w[0] != w[1])
}

#[derive(Debug, Clone, Serialize)]
pub struct StressEval {
    pub threshold: f64,
    pub accuracy: f64,
    pub correct: usize,
    pub considered: usize,
    /// Words the dictionary does not cover.
    pub no_coverage: usize,
    /// Covered words whose dictionary patterns are all non-alternating.
    pub non_alternating: usize,
    pub total_words: usize,
}

/// Accuracy of the attention-derived stress patterns over tokenized lines.
/// A word counts as correct when its predicted pattern equals any
/// dictionary pattern; an empty prediction is always incorrect. Uncovered
/// words and words with only non-alternating dictionary patterns are
/// discarded, with both counts reported.
pub fn stress_accuracy(
    ps: &ParamStore,
    cfg: &Config,
    dict: &PronDictionary,
    lines: &[Vec<String>],
    threshold: f64,
) -> Result<StressEval> {
    let assignments = batch::map_items(lines, |line| {
        let meter_line = strip_for_meter(line)?;
        let (_, trace) = meter::conformity_with_trace(ps, cfg, &meter_line)?;
        Ok(extract_stress(&trace, threshold))
    });
    let mut ev = StressEval {
        threshold,
        accuracy: 0.0,
        correct: 0,
        considered: 0,
        no_coverage: 0,
        non_alternating: 0,
        total_words: 0,
    };
    for a in assignments {
        let a = a?;
        for (word, predicted) in a.words.iter().zip(&a.patterns) {
            ev.total_words += 1;
            let patterns = dict_stress_patterns(dict, word);
            if patterns.is_empty() {
                ev.no_coverage += 1;
                continue;
            }
            if !patterns.iter().any(|p| alternating(p)) {
                ev.non_alternating += 1;
                continue;
            }
            ev.considered += 1;
            if !predicted.is_empty() && patterns.iter().any(|p| p == predicted) {
                ev.correct += 1;
            }
        }
    }
    if ev.considered > 0 {
        ev.accuracy = ev.correct as f64 / ev.considered as f64;
    }
    Ok(ev)
}

fn strip_stress(phoneme: &str) -> String {
    phoneme
        .trim_end_matches(|c: char| c.is_ascii_digit())
        .to_string()
}

/// Phoneme suffix from the last stressed vowel onward, stress digits
/// removed. None when no vowel carries stress 1 or 2.
pub fn rhyme_suffix(pron: &[String]) -> Option<Vec<String>> {
    let anchor = pron
        .iter()
        .rposition(|p| matches!(vowel_stress(p), Some(1) | Some(2)))?;
    Some(pron[anchor..].iter().map(|p| strip_stress(p)).collect())
}

/// Whether two words rhyme by the dictionary: some pronunciation pair agrees
/// on the suffix from its last stressed vowel. None when either word is
/// uncovered or yields no stressed suffix in any pronunciation.
pub fn dict_rhyme(dict: &PronDictionary, w1: &str, w2: &str) -> Option<bool> {
    let s1: Vec<Vec<String>> = dict
        .pronunciations(w1)?
        .iter()
        .filter_map(|p| rhyme_suffix(p))
        .collect();
    let s2: Vec<Vec<String>> = dict
        .pronunciations(w2)?
        .iter()
        .filter_map(|p| rhyme_suffix(p))
        .collect();
    if s1.is_empty() || s2.is_empty() {
        return None;
    }
    Some(s1.iter().any(|a| s2.contains(a)))
}

/// Orthographic rhyme key: the last run of vowel letters plus everything
/// after it. Vowel letters are a, e, i, o, u; a final y serves as the vowel
/// only when the word has none of those. None for words with no vowel.
pub fn baseline_suffix(word: &str) -> Option<String> {
    let letters: Vec<char> = word
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphabetic())
        .collect();
    let is_vowel = |c: &char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u');
    if let Some(last) = letters.iter().rposition(is_vowel) {
        let mut start = last;
        while start > 0 && is_vowel(&letters[start - 1]) {
            start -= 1;
        }
        Some(letters[start..].iter().collect())
    } else if letters.last() == Some(&'y') {
        Some("y".to_string())
    } else {
        None
    }
}

/// Baseline rhyme judgment: equal orthographic keys. None when either word
/// has no vowel.
pub fn rhyme_baseline(w1: &str, w2: &str) -> Option<bool> {
    Some(baseline_suffix(w1)? == baseline_suffix(w2)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct PrF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl PrF1 {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> PrF1 {
        let div = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = div(tp, tp + fp);
        let recall = div(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrF1 { precision, recall, f1, tp, fp, fn_, tn }
    }
}

/// All 6 unordered end-word pairs of each quatrain with their dictionary
/// judgment, plus the count of pairs the dictionary cannot judge.
fn gold_pairs(
    dict: &PronDictionary,
    quatrains: &[[String; 4]],
) -> (Vec<(String, String, bool)>, usize) {
    let mut covered = Vec::new();
    let mut no_coverage = 0usize;
    for q in quatrains {
        for i in 0..4 {
            for j in i + 1..4 {
                match dict_rhyme(dict, &q[i], &q[j]) {
                    Some(gold) => covered.push((q[i].clone(), q[j].clone(), gold)),
                    None => no_coverage += 1,
                }
            }
        }
    }
    (covered, no_coverage)
}

fn model_scores(
    ps: &ParamStore,
    cfg: &Config,
    pairs: &[(String, String, bool)],
) -> Vec<f64> {
    // negative cosines carry no rhyme information; flooring them at zero
    // keeps a threshold-0 sweep accepting every pair
    batch::map_items(pairs, |(a, b, _)| rhyme::rhyme_score(ps, cfg, a, b).max(0.0))
}

fn score_f1(pairs: &[(String, String, bool)], predicted: impl Fn(usize) -> bool) -> PrF1 {
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (i, &(_, _, gold)) in pairs.iter().enumerate() {
        match (gold, predicted(i)) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    PrF1::from_counts(tp, fp, fn_, tn)
}

/// Rhyme detection F1 of the model at a cosine threshold, over the
/// dictionary-covered end-word pairs of the given quatrains.
pub fn rhyme_f1(
    ps: &ParamStore,
    cfg: &Config,
    dict: &PronDictionary,
    quatrains: &[[String; 4]],
    threshold: f64,
) -> PrF1 {
    let (pairs, _) = gold_pairs(dict, quatrains);
    let scores = model_scores(ps, cfg, &pairs);
    score_f1(&pairs, |i| scores[i] >= threshold)
}

/// F1 of the orthographic baseline over the same covered pairs. A pair the
/// baseline cannot judge counts as predicted non-rhyming.
pub fn baseline_f1(dict: &PronDictionary, quatrains: &[[String; 4]]) -> PrF1 {
    let (pairs, _) = gold_pairs(dict, quatrains);
    score_f1(&pairs, |i| {
        rhyme_baseline(&pairs[i].0, &pairs[i].1).unwrap_or(false)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PairScore {
    pub w1: String,
    pub w2: String,
    pub cos: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorTable {
    /// Dictionary rhymes the model scores lowest, ascending.
    pub missed_rhymes: Vec<PairScore>,
    /// Dictionary non-rhymes the model scores highest, descending.
    pub false_rhymes: Vec<PairScore>,
}

pub fn error_table(
    ps: &ParamStore,
    cfg: &Config,
    dict: &PronDictionary,
    quatrains: &[[String; 4]],
    k: usize,
) -> ErrorTable {
    let (pairs, _) = gold_pairs(dict, quatrains);
    let mut unique: IndexMap<(String, String), bool> = IndexMap::new();
    for (a, b, gold) in pairs {
        let key = if a <= b { (a, b) } else { (b, a) };
        unique.entry(key).or_insert(gold);
    }
    let unique: Vec<((String, String), bool)> = unique.into_iter().collect();
    let scores = batch::map_items(&unique, |((a, b), _)| rhyme::rhyme_score(ps, cfg, a, b));
    let mut rhyming = Vec::new();
    let mut non_rhyming = Vec::new();
    for (((w1, w2), gold), cos) in unique.into_iter().zip(scores) {
        let row = PairScore { w1, w2, cos };
        if gold {
            rhyming.push(row);
        } else {
            non_rhyming.push(row);
        }
    }
    rhyming.sort_by(|a, b| f64::total_cmp(&a.cos, &b.cos));
    non_rhyming.sort_by(|a, b| f64::total_cmp(&b.cos, &a.cos));
    rhyming.truncate(k);
    non_rhyming.truncate(k);
    ErrorTable { missed_rhymes: rhyming, false_rhymes: non_rhyming }
}

#[derive(Debug, Clone, Serialize)]
pub struct RhymeEval {
    pub threshold: f64,
    pub model: PrF1,
    pub baseline: PrF1,
    pub pairs_total: usize,
    pub pairs_covered: usize,
    pub pairs_no_coverage: usize,
}

pub fn rhyme_eval(
    ps: &ParamStore,
    cfg: &Config,
    dict: &PronDictionary,
    quatrains: &[[String; 4]],
    threshold: f64,
) -> RhymeEval {
    let (pairs, no_coverage) = gold_pairs(dict, quatrains);
    let scores = model_scores(ps, cfg, &pairs);
    let model = score_f1(&pairs, |i| scores[i] >= threshold);
    let baseline = score_f1(&pairs, |i| {
        rhyme_baseline(&pairs[i].0, &pairs[i].1).unwrap_or(false)
    });
    RhymeEval {
        threshold,
        model,
        baseline,
        pairs_total: pairs.len() + no_coverage,
        pairs_covered: pairs.len(),
        pairs_no_coverage: no_coverage,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub perplexity: f64,
    pub stress: StressEval,
    pub rhyme: RhymeEval,
    pub errors: ErrorTable,
}

/// Full component evaluation of a trained model on held-out sonnets.
pub fn evaluate(
    ps: &ParamStore,
    cfg: &Config,
    vocab: &Vocab,
    test: &[Sonnet],
    dict: &PronDictionary,
) -> Result<EvalReport> {
    let perplexity = lm::perplexity(ps, cfg, vocab, &CharVocab, test);
    let lines: Vec<Vec<String>> = test.iter().flat_map(|s| s.lines.clone()).collect();
    let stress = stress_accuracy(ps, cfg, dict, &lines, cfg.eval_stress_threshold)?;
    let mut quatrains = Vec::new();
    for s in test {
        for q in s.quatrains() {
            quatrains.push(quatrain_end_words(q)?);
        }
    }
    let rhyme = rhyme_eval(ps, cfg, dict, &quatrains, cfg.eval_rhyme_threshold);
    let errors = error_table(ps, cfg, dict, &quatrains, cfg.eval_error_table_k);
    Ok(EvalReport { perplexity, stress, rhyme, errors })
}

pub fn report_text(r: &EvalReport) -> String {
    let mut out = String::new();
    let push = |out: &mut String, s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    push(&mut out, format!("Perplexity        {:.3}", r.perplexity));
    push(&mut out, String::new());
    push(
        &mut out,
        format!(
            "Stress accuracy   {:.3}  ({}/{} considered, {} no coverage, {} non-alternating, threshold {:.2})",
            r.stress.accuracy,
            r.stress.correct,
            r.stress.considered,
            r.stress.no_coverage,
            r.stress.non_alternating,
            r.stress.threshold
        ),
    );
    push(&mut out, String::new());
    push(&mut out, format!("Rhyme at threshold {:.2}", r.rhyme.threshold));
    for (name, s) in [("model", &r.rhyme.model), ("baseline", &r.rhyme.baseline)] {
        push(
            &mut out,
            format!(
                "  {name:<9} P {:.3}  R {:.3}  F1 {:.3}",
                s.precision, s.recall, s.f1
            ),
        );
    }
    push(
        &mut out,
        format!(
            "  pairs: {} total, {} covered, {} without dictionary coverage",
            r.rhyme.pairs_total, r.rhyme.pairs_covered, r.rhyme.pairs_no_coverage
        ),
    );
    for (title, rows) in [
        ("Rhyming pairs scored lowest", &r.errors.missed_rhymes),
        ("Non-rhyming pairs scored highest", &r.errors.false_rhymes),
    ] {
        push(&mut out, String::new());
        push(&mut out, title.to_string());
        push(&mut out, format!("  {:<28} {}", "Word Pair", "Cos"));
        for p in rows {
            push(
                &mut out,
                format!("  {:<28} {:.3}", format!("{} / {}", p.w1, p.w2), p.cos),
            );
        }
    }
    out
}

pub fn report_json(r: &EvalReport) -> Result<String> {
    serde_json::to_string_pretty(r).map_err(|e| SonnetError::Data(format!("report to JSON: {e}")))
}

const REPORT_SCHEMA: &str = include_str!("../data/eval_report.schema.json");

fn resolve<'a>(
    root: &'a serde_json::Value,
    node: &'a serde_json::Value,
) -> &'a serde_json::Value {
    match node.get("$ref").and_then(|v| v.as_str()) {
        Some(r) => {
            let mut cur = root;
            for seg in r.trim_start_matches("#/").split('/') {
                cur = &cur[seg];
            }
            cur
        }
        None => node,
    }
}

fn check_value(
    root: &serde_json::Value,
    schema: &serde_json::Value,
    value: &serde_json::Value,
    path: &str,
    problems: &mut Vec<String>,
) {
    let schema = resolve(root, schema);
    let Some(ty) = schema.get("type").and_then(|t| t.as_str()) else {
        return;
    };
    let ok = match ty {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "number" => value.is_number(),
        "integer" => value.is_u64() || value.is_i64(),
        "boolean" => value.is_boolean(),
        other => {
            problems.push(format!("{path}: unsupported schema type {other:?}"));
            return;
        }
    };
    if !ok {
        problems.push(format!("{path}: expected {ty}"));
        return;
    }
    if ty == "object" {
        if let Some(required) = schema.get("required").and_then(|r| r.as_array()) {
            for name in required.iter().filter_map(|n| n.as_str()) {
                if value.get(name).is_none() {
                    problems.push(format!("{path}: missing required field {name:?}"));
                }
            }
        }
        if let Some(props) = schema.get("properties").and_then(|p| p.as_object()) {
            for (name, sub) in props {
                if let Some(v) = value.get(name) {
                    check_value(root, sub, v, &format!("{path}.{name}"), problems);
                }
            }
        }
    } else if ty == "array" {
        if let Some(items) = schema.get("items") {
            for (i, v) in value.as_array().unwrap().iter().enumerate() {
                check_value(root, items, v, &format!("{path}[{i}]"), problems);
            }
        }
    }
}

/// Structural validation of a JSON report against the bundled schema.
pub fn validate_report_json(json: &str) -> Result<()> {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA)
        .map_err(|e| SonnetError::Data(format!("bundled schema is invalid: {e}")))?;
    let doc: serde_json::Value = serde_json::from_str(json)
        .map_err(|e| SonnetError::Data(format!("report is not JSON: {e}")))?;
    let mut problems = Vec::new();
    check_value(&schema, &schema, &doc, "report", &mut problems);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(SonnetError::Data(format!(
            "report does not match schema: {}",
            problems.join("; ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundled_dict() -> PronDictionary {
        let path = Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/cmudict_subset.dict"
        ));
        PronDictionary::load(path).unwrap()
    }

    #[test]
    fn bundled_dictionary_parses_with_variants() {
        let d = bundled_dict();
        assert!(d.len() > 2000);
        assert!(d.contains("day"));
        assert!(d.contains("DAY"));
        assert!(d.contains("'tis"));
        assert_eq!(d.pronunciations("use").unwrap().len(), 2);
        assert_eq!(d.pronunciations("wind").unwrap().len(), 2);
        assert_eq!(d.pronunciations("day").unwrap().len(), 1);
    }

    #[test]
    fn parser_merges_variants_and_skips_comments() {
        let text = ";;; header\n\nREAD  R EH1 D\nREAD(2)  R IY1 D\n;;; trailing\n";
        let d = PronDictionary::parse_text(text, Path::new("inline")).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.pronunciations("read").unwrap().len(), 2);
    }

    #[test]
    fn parser_rejects_bad_lines() {
        let e = PronDictionary::parse_text("FOO  F AA3", Path::new("x")).unwrap_err();
        assert!(e.to_string().contains("x:1"), "{e}");
        assert!(e.to_string().contains("not 0, 1 or 2"), "{e}");
        let e = PronDictionary::parse_text("GOOD  G UH1 D\nBARE\n", Path::new("x")).unwrap_err();
        assert!(e.to_string().contains("x:2"), "{e}");
        assert!(e.to_string().contains("no phonemes"), "{e}");
    }

    #[test]
    fn stress_patterns_collapse_and_discard() {
        let d = bundled_dict();
        assert_eq!(dict_stress_patterns(&d, "compare"), vec![vec![0, 1]]);
        assert_eq!(dict_stress_patterns(&d, "day"), vec![vec![1]]);
        // secondary stress counts as stressed
        assert_eq!(dict_stress_patterns(&d, "accumulate"), vec![vec![0, 1, 0, 1]]);
        assert_eq!(dict_stress_patterns(&d, "adjunct"), vec![vec![1, 1]]);
        assert!(dict_stress_patterns(&d, "zzzzz").is_empty());
        assert!(alternating(&[0, 1, 0]));
        assert!(alternating(&[1]));
        assert!(!alternating(&[1, 1]));
        assert!(!alternating(&[]));
    }

    #[test]
    fn dictionary_rhyme_spot_checks() {
        let d = bundled_dict();
        assert_eq!(dict_rhyme(&d, "day", "may"), Some(true));
        assert_eq!(dict_rhyme(&d, "endeavour", "never"), Some(true));
        assert_eq!(dict_rhyme(&d, "blood", "stood"), Some(false));
        assert_eq!(dict_rhyme(&d, "day", "zzzzz"), None);
        for (a, b) in [("day", "may"), ("blood", "stood"), ("compare", "day")] {
            assert_eq!(dict_rhyme(&d, a, b), dict_rhyme(&d, b, a));
        }
    }

    #[test]
    fn baseline_rhyme_spot_checks() {
        assert_eq!(baseline_suffix("day").as_deref(), Some("ay"));
        assert_eq!(baseline_suffix("may").as_deref(), Some("ay"));
        assert_eq!(baseline_suffix("blood").as_deref(), Some("ood"));
        assert_eq!(baseline_suffix("stood").as_deref(), Some("ood"));
        assert_eq!(baseline_suffix("fly").as_deref(), Some("y"));
        assert_eq!(baseline_suffix("rhythm"), None);
        assert_eq!(rhyme_baseline("blood", "stood"), Some(true));
        assert_eq!(rhyme_baseline("day", "blood"), Some(false));
        assert_eq!(rhyme_baseline("grrr", "day"), None);
        for (a, b) in [("day", "may"), ("blood", "stood")] {
            assert_eq!(rhyme_baseline(a, b), rhyme_baseline(b, a));
        }
    }

    fn tiny_cfg() -> Config {
        let mut cfg = Config::default();
        cfg.word_dim = 8;
        cfg.char_dim = 6;
        cfg.char_hidden = 6;
        cfg.enc_hidden = 6;
        cfg.dec_hidden = 10;
        cfg.lm_attn_dim = 6;
        cfg.pm_dec_hidden = 6;
        cfg.pm_attn_dim = 5;
        cfg.rm_hidden = 10;
        cfg.dropout = 0.0;
        cfg
    }

    fn test_sonnets() -> Vec<Sonnet> {
        let pool = [
            "shall i compare thee to a summers day",
            "thou art more lovely and more temperate",
            "rough winds do shake the darling buds of may",
            "and summers lease hath all too short a date",
            "sometime too hot the eye of heaven shines",
            "and often is his gold complexion dimmed",
            "and every fair from fair sometime declines",
            "by chance or natures changing course untrimmed",
            "but thy eternal summer shall not fade",
            "nor lose possession of that fair thou owest",
            "nor shall death brag thou wanderest in his shade",
            "when in eternal lines to time thou growest",
            "so long as men can breathe or eyes can see",
            "so long lives this and this gives life to thee",
        ];
        let mk = |id: usize, rot: usize| Sonnet {
            id,
            title: None,
            lines: (0..14)
                .map(|i| {
                    pool[(i + rot) % 14]
                        .split(' ')
                        .map(String::from)
                        .collect()
                })
                .collect(),
        };
        vec![mk(0, 0), mk(1, 3)]
    }

    fn fixture() -> (ParamStore, Config, Vocab) {
        let cfg = tiny_cfg();
        let sonnets = test_sonnets();
        let vocab = Vocab::build(&sonnets, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ps = init_params(&cfg, vocab.len(), &mut rng);
        (ps, cfg, vocab)
    }

    #[test]
    fn stress_counts_partition_the_scan() {
        let (ps, cfg, _) = fixture();
        let d = bundled_dict();
        let lines: Vec<Vec<String>> = test_sonnets()[0].lines.clone();
        let ev = stress_accuracy(&ps, &cfg, &d, &lines, 0.2).unwrap();
        assert_eq!(
            ev.total_words,
            ev.considered + ev.no_coverage + ev.non_alternating
        );
        assert!(ev.considered > 50, "only {} words considered", ev.considered);
        assert!((0.0..=1.0).contains(&ev.accuracy));
        assert_eq!(
            ev.total_words,
            lines.iter().map(Vec::len).sum::<usize>(),
            "every word token is scanned once"
        );
    }

    fn sample_quatrains() -> Vec<[String; 4]> {
        let q = |a: &str, b: &str, c: &str, d: &str| {
            [a.to_string(), b.to_string(), c.to_string(), d.to_string()]
        };
        vec![
            q("day", "night", "may", "bright"),
            q("blood", "stood", "love", "prove"),
            q("endeavour", "never", "compare", "day"),
        ]
    }

    #[test]
    fn threshold_sweep_is_degenerate_at_the_ends_and_monotone() {
        let (ps, cfg, _) = fixture();
        let d = bundled_dict();
        let quatrains = sample_quatrains();
        let mut last_recall = f64::INFINITY;
        let mut t = 0.0;
        while t <= 1.0 + 1e-9 {
            let s = rhyme_f1(&ps, &cfg, &d, &quatrains, t);
            assert!(
                s.recall <= last_recall + 1e-12,
                "recall rose from {last_recall} to {} at threshold {t}",
                s.recall
            );
            last_recall = s.recall;
            t += 0.05;
        }
        let s = rhyme_f1(&ps, &cfg, &d, &quatrains, 0.0);
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.fn_, 0);
        assert_eq!(s.tn, 0, "threshold 0 accepts every pair");
        let s = rhyme_f1(&ps, &cfg, &d, &quatrains, 1.1);
        assert_eq!(s.recall, 0.0);
        assert_eq!(s.tp + s.fp, 0);
    }

    #[test]
    fn f1_is_harmonic_mean_and_baseline_scores_known_pairs() {
        let s = PrF1::from_counts(6, 2, 3, 9);
        let p = 6.0 / 8.0;
        let r = 6.0 / 9.0;
        assert!((s.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
        let zero = PrF1::from_counts(0, 0, 0, 4);
        assert_eq!(zero.f1, 0.0);

        let d = bundled_dict();
        let quatrains = sample_quatrains();
        let b = baseline_f1(&d, &quatrains);
        // blood/stood is the classic baseline false positive
        assert!(b.fp >= 1, "expected the ood false positive, counts {b:?}");
        assert!((0.0..=1.0).contains(&b.f1));
    }

    #[test]
    fn error_table_sorted_and_deduplicated() {
        let (ps, cfg, _) = fixture();
        let d = bundled_dict();
        let mut quatrains = sample_quatrains();
        quatrains.push(quatrains[0].clone());
        let t = error_table(&ps, &cfg, &d, &quatrains, 10);
        for w in t.missed_rhymes.windows(2) {
            assert!(w[0].cos <= w[1].cos);
        }
        for w in t.false_rhymes.windows(2) {
            assert!(w[0].cos >= w[1].cos);
        }
        for p in &t.missed_rhymes {
            assert_eq!(dict_rhyme(&d, &p.w1, &p.w2), Some(true));
        }
        for p in &t.false_rhymes {
            assert_eq!(dict_rhyme(&d, &p.w1, &p.w2), Some(false));
        }
        let count = |rows: &[PairScore], a: &str, b: &str| {
            rows.iter()
                .filter(|p| (p.w1 == a && p.w2 == b) || (p.w1 == b && p.w2 == a))
                .count()
        };
        assert_eq!(
            count(&t.missed_rhymes, "day", "may") + count(&t.false_rhymes, "day", "may"),
            1,
            "repeated pair listed once"
        );
    }

    #[test]
    fn full_report_renders_and_validates() {
        let (ps, cfg, vocab) = fixture();
        let d = bundled_dict();
        let sonnets = test_sonnets();
        let r = evaluate(&ps, &cfg, &vocab, &sonnets, &d).unwrap();
        assert!(r.perplexity.is_finite() && r.perplexity > 1.0);
        assert_eq!(
            r.rhyme.pairs_total,
            r.rhyme.pairs_covered + r.rhyme.pairs_no_coverage
        );
        assert_eq!(r.rhyme.pairs_total, 6 * 6);

        let text = report_text(&r);
        for label in ["Perplexity", "Stress accuracy", "F1", "Word Pair", "Cos"] {
            assert!(text.contains(label), "missing {label:?} in:\n{text}");
        }

        let json = report_json(&r).unwrap();
        validate_report_json(&json).unwrap();

        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc.as_object_mut().unwrap().remove("stress");
        let e = validate_report_json(&doc.to_string()).unwrap_err();
        assert!(e.to_string().contains("stress"), "{e}");

        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc["rhyme"]["model"]["tp"] = serde_json::json!("three");
        let e = validate_report_json(&doc.to_string()).unwrap_err();
        assert!(e.to_string().contains("tp"), "{e}");
        assert!(e.to_string().contains("integer"), "{e}");

        let e = validate_report_json("[1, 2]").unwrap_err();
        assert!(e.to_string().contains("expected object"), "{e}");
    }
}
