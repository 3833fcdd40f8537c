//! Corpus ingestion: poem parsing, the sonnet shape filter, tokenization,
//! vocabularies, data partitioning and rhyme training examples.
//!
//! Input files are UTF-8 text with poems separated by blank lines; a first
//! line of the form `# title` names the poem. Text is NFKD-normalized with
//! combining marks stripped, then lowercased, so accented Latin letters fold
//! to ASCII. Tokens that contain no letter count as punctuation and are
//! excluded from word vocabularies and language-model streams.

use crate::error::{Result, SonnetError};
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use std::fmt::Write as _;
use std::path::Path;
use unicode_normalization::{char::is_combining_mark, UnicodeNormalization};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const LINE_START: &str = "<line-start>";
pub const LINE_END: &str = "<line-end>";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const LINE_START_ID: usize = 2;
pub const LINE_END_ID: usize = 3;
pub const RESERVED: usize = 4;

#[derive(Debug, Clone)]
pub struct Poem {
    pub title: Option<String>,
    pub lines: Vec<String>,
    pub stanza_breaks: Vec<usize>,
}

/// A filtered 14-line sonnet with tokenized lines. Lines 0-3, 4-7 and 8-11
/// are the quatrains; 12-13 the couplet.
#[derive(Debug, Clone, PartialEq)]
pub struct Sonnet {
    pub id: usize,
    pub title: Option<String>,
    pub lines: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<Sonnet>,
    pub dev: Vec<Sonnet>,
    pub test: Vec<Sonnet>,
    pub seed: u64,
}

pub fn normalize(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.nfkd() {
        if is_combining_mark(c) {
            continue;
        }
        let c = match c {
            '\u{2018}' | '\u{2019}' | '\u{02bc}' => '\'',
            '\u{201c}' | '\u{201d}' => '"',
            '\u{2013}' | '\u{2014}' => '-',
            other => other,
        };
        for l in c.to_lowercase() {
            out.push(l);
        }
    }
    out
}

fn is_letter(c: char) -> bool {
    c.is_ascii_alphabetic()
}

/// True for tokens that carry no letters (punctuation, digits, symbols).
pub fn is_punct_token(tok: &str) -> bool {
    !tok.chars().any(is_letter)
}

/// Lowercases, splits punctuation into single-character tokens, and keeps
/// apostrophes attached to adjacent letters ("summer's" stays one token).
pub fn tokenize_line(raw: &str) -> Vec<String> {
    let chars: Vec<char> = normalize(raw).chars().collect();
    let mut tokens = Vec::new();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let in_word = is_letter(c)
            || (c == '\''
                && (i.checked_sub(1).map(|p| is_letter(chars[p])).unwrap_or(false)
                    || chars.get(i + 1).map(|&n| is_letter(n)).unwrap_or(false)));
        if in_word {
            word.push(c);
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// Drops punctuation and apostrophes, leaving lowercase letters and single
/// spaces: the character stream the stress model consumes.
pub fn strip_for_meter(tokens: &[String]) -> Result<String> {
    let words: Vec<String> = tokens
        .iter()
        .map(|t| t.chars().filter(|c| is_letter(*c)).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect();
    if words.is_empty() {
        return Err(SonnetError::Data(format!(
            "no letters in line {:?}",
            detokenize(tokens)
        )));
    }
    Ok(words.join(" "))
}

pub fn parse_poems(text: &str) -> Vec<Poem> {
    let mut poems = Vec::new();
    let mut title: Option<String> = None;
    let mut lines: Vec<String> = Vec::new();
    for raw in text.lines().chain(std::iter::once("")) {
        let line = raw.trim();
        if line.is_empty() {
            if !lines.is_empty() {
                poems.push(Poem {
                    title: title.take(),
                    lines: std::mem::take(&mut lines),
                    stanza_breaks: Vec::new(),
                });
            }
            title = None;
        } else if let Some(t) = line.strip_prefix("# ") {
            title = Some(t.to_string());
        } else {
            lines.push(line.to_string());
        }
    }
    poems
}

pub struct FilterRules {
    pub lines: usize,
    pub mean_words: (f64, f64),
    pub mean_chars: (f64, f64),
    pub words: (usize, usize),
    pub chars: (usize, usize),
    pub min_letter_ratio: f64,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            lines: 14,
            mean_words: (8.0, 11.5),
            mean_chars: (40.0, 51.0),
            words: (6, 15),
            chars: (32, 60),
            min_letter_ratio: 0.59,
        }
    }
}

/// Keeps poems that look like pentameter sonnets: 14 lines whose word and
/// character counts sit inside the expected band, line by line and on
/// average. Character metrics are computed on the detokenized line, so a
/// sonnet that passes once passes again after round-tripping through tokens.
pub fn filter_sonnets(poems: &[Poem]) -> Vec<Sonnet> {
    let rules = FilterRules::default();
    let mut out = Vec::new();
    for poem in poems {
        if poem.lines.len() != rules.lines {
            continue;
        }
        let token_lines: Vec<Vec<String>> = poem.lines.iter().map(|l| tokenize_line(l)).collect();
        let mut ok = true;
        let mut wsum = 0.0;
        let mut csum = 0.0;
        for tokens in &token_lines {
            let wc = tokens.iter().filter(|t| !is_punct_token(t)).count();
            let text = detokenize(tokens);
            let cc = text.chars().count();
            let letters = text.chars().filter(|c| is_letter(*c)).count();
            if wc < rules.words.0
                || wc > rules.words.1
                || cc < rules.chars.0
                || cc > rules.chars.1
                || (letters as f64) < rules.min_letter_ratio * cc as f64
            {
                ok = false;
                break;
            }
            wsum += wc as f64;
            csum += cc as f64;
        }
        if !ok {
            continue;
        }
        let n = rules.lines as f64;
        let (mw, mc) = (wsum / n, csum / n);
        if mw < rules.mean_words.0
            || mw > rules.mean_words.1
            || mc < rules.mean_chars.0
            || mc > rules.mean_chars.1
        {
            continue;
        }
        out.push(Sonnet {
            id: out.len(),
            title: poem.title.clone(),
            lines: token_lines,
        });
    }
    out
}

impl Sonnet {
    pub fn words_of_line(&self, i: usize) -> Vec<&str> {
        self.lines[i]
            .iter()
            .filter(|t| !is_punct_token(t))
            .map(|s| s.as_str())
            .collect()
    }

    pub fn quatrains(&self) -> [&[Vec<String>]; 3] {
        [&self.lines[0..4], &self.lines[4..8], &self.lines[8..12]]
    }

    pub fn couplet(&self) -> &[Vec<String>] {
        &self.lines[12..14]
    }
}

#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
    index: IndexMap<String, usize>,
    freq: Vec<u64>,
}

impl Vocab {
    /// Words at or above `min_freq` get their own ids, ordered by descending
    /// frequency with lexicographic ties; everything else maps to UNK.
    pub fn build(sonnets: &[Sonnet], min_freq: u64) -> Result<Vocab> {
        assert!(min_freq >= 1, "min_freq must be at least 1");
        let mut counts: IndexMap<String, u64> = IndexMap::new();
        for s in sonnets {
            for line in &s.lines {
                for tok in line.iter().filter(|t| !is_punct_token(t)) {
                    *counts.entry(tok.clone()).or_insert(0) += 1;
                }
            }
        }
        if counts.is_empty() {
            return Err(SonnetError::Data("no words to build a vocabulary from".into()));
        }
        let mut kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut words: Vec<String> =
            [PAD, UNK, LINE_START, LINE_END].iter().map(|s| s.to_string()).collect();
        let mut freq = vec![0u64; RESERVED];
        for (w, c) in kept {
            words.push(w);
            freq.push(c);
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Vocab { words, index, freq })
    }

    pub fn id_of(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn freq(&self, id: usize) -> u64 {
        self.freq[id]
    }

    pub fn words_iter(&self) -> impl Iterator<Item = &String> {
        self.words.iter()
    }

    /// Stable hash of the full id→word table, for checkpoint compatibility
    /// checks. FNV-1a over words separated by newlines.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for w in &self.words {
            for b in w.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= b'\n' as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

pub const CHAR_PAD_ID: usize = 0;
pub const CHAR_UNK_ID: usize = 1;
pub const CHAR_SPACE_ID: usize = 2;

/// Fixed character inventory: PAD, UNK, space, then `a`..`z`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharVocab;

impl CharVocab {
    pub fn len(&self) -> usize {
        29
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id_of(&self, c: char) -> usize {
        match c {
            ' ' => CHAR_SPACE_ID,
            'a'..='z' => 3 + (c as usize - 'a' as usize),
            _ => CHAR_UNK_ID,
        }
    }

    /// Ids for the letters of one word, apostrophes and any other
    /// non-letters dropped.
    pub fn word_ids(&self, word: &str) -> Vec<usize> {
        word.chars()
            .filter(|c| c.is_ascii_alphabetic())
            .map(|c| self.id_of(c))
            .collect()
    }

    pub fn line_ids(&self, meter_line: &str) -> Vec<usize> {
        meter_line.chars().map(|c| self.id_of(c)).collect()
    }
}

pub fn partition(sonnets: Vec<Sonnet>, ratios: [f64; 3], seed: u64) -> Result<Split> {
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SonnetError::Data(format!("split ratios {ratios:?} do not sum to 1")));
    }
    if sonnets.len() < 3 {
        return Err(SonnetError::Data(format!(
            "need at least 3 sonnets to partition, got {}",
            sonnets.len()
        )));
    }
    let n = sonnets.len();
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_dev = (ratios[1] * n as f64).round() as usize;
    if n_train + n_dev >= n {
        return Err(SonnetError::Data(format!(
            "split ratios {ratios:?} leave no test sonnets out of {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut by_slot = vec![Vec::new(), Vec::new(), Vec::new()];
    let mut pool: IndexMap<usize, Sonnet> =
        sonnets.into_iter().map(|s| (s.id, s)).collect();
    for (k, &idx) in order.iter().enumerate() {
        let slot = if k < n_train {
            0
        } else if k < n_train + n_dev {
            1
        } else {
            2
        };
        by_slot[slot].push(pool.shift_remove(&idx).expect("sonnet ids must be unique"));
    }
    let mut it = by_slot.into_iter();
    Ok(Split {
        train: it.next().unwrap(),
        dev: it.next().unwrap(),
        test: it.next().unwrap(),
        seed,
    })
}

pub fn quatrain_end_words(quatrain: &[Vec<String>]) -> Result<[String; 4]> {
    assert_eq!(quatrain.len(), 4, "quatrain must have 4 lines");
    let mut out: [String; 4] = Default::default();
    for (i, line) in quatrain.iter().enumerate() {
        let w = line.iter().rev().find(|t| !is_punct_token(t));
        match w {
            Some(w) => out[i] = w.clone(),
            None => {
                return Err(SonnetError::Data(format!(
                    "line {:?} has no words",
                    detokenize(line)
                )))
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhymeExample {
    pub target: String,
    pub refs: Vec<String>,
}

/// One example per end word: the word as target, the other three as
/// references, plus `k_neg` vocabulary words drawn uniformly (end words
/// excluded).
pub fn make_rhyme_examples(
    end_words: &[String; 4],
    k_neg: usize,
    vocab: &Vocab,
    rng: &mut impl Rng,
) -> Vec<RhymeExample> {
    let mut out = Vec::with_capacity(4);
    for t in 0..4 {
        let mut refs: Vec<String> = (0..4)
            .filter(|&i| i != t)
            .map(|i| end_words[i].clone())
            .collect();
        let mut drawn = 0;
        while drawn < k_neg {
            let id = rng.gen_range(RESERVED..vocab.len());
            let w = vocab.word(id);
            if end_words.iter().any(|e| e == w) {
                continue;
            }
            refs.push(w.to_string());
            drawn += 1;
        }
        out.push(RhymeExample { target: end_words[t].clone(), refs });
    }
    out
}

pub fn read_poems_file(path: &Path) -> Result<Vec<Poem>> {
    let text = std::fs::read_to_string(path).map_err(|e| SonnetError::io(path, e))?;
    Ok(parse_poems(&text))
}

/// Writes `sonnets.txt` (all filtered sonnets, tokenized) and `index.txt`
/// (seed plus sonnet ids per partition) under `dir`.
pub fn write_prepared(dir: &Path, filtered: &[Sonnet], split: &Split) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SonnetError::io(dir, e))?;
    let mut text = String::new();
    for s in filtered {
        match &s.title {
            Some(t) => {
                let _ = writeln!(text, "# {} {}", s.id, t);
            }
            None => {
                let _ = writeln!(text, "# {}", s.id);
            }
        }
        for line in &s.lines {
            let _ = writeln!(text, "{}", detokenize(line));
        }
        text.push('\n');
    }
    let sp = dir.join("sonnets.txt");
    std::fs::write(&sp, text).map_err(|e| SonnetError::io(&sp, e))?;

    let mut idx = format!("seed {}\n", split.seed);
    for (name, part) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
        let ids: Vec<String> = part.iter().map(|s| s.id.to_string()).collect();
        let _ = writeln!(idx, "{} {}", name, ids.join(" "));
    }
    let ip = dir.join("index.txt");
    std::fs::write(&ip, idx).map_err(|e| SonnetError::io(&ip, e))?;
    Ok(())
}

pub fn read_prepared(dir: &Path) -> Result<(Vec<Sonnet>, Split)> {
    let sp = dir.join("sonnets.txt");
    let text = std::fs::read_to_string(&sp).map_err(|e| SonnetError::io(&sp, e))?;
    let mut sonnets = Vec::new();
    for (bi, poem) in parse_poems(&text).into_iter().enumerate() {
        let header = poem
            .title
            .clone()
            .ok_or_else(|| SonnetError::parse(&sp, bi, "sonnet block without '# id' header"))?;
        let mut parts = header.splitn(2, ' ');
        let id: usize = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| SonnetError::parse(&sp, bi, format!("bad sonnet id in {header:?}")))?;
        let title = parts.next().map(|s| s.to_string());
        sonnets.push(Sonnet {
            id,
            title,
            lines: poem.lines.iter().map(|l| tokenize_line(l)).collect(),
        });
    }

    let ip = dir.join("index.txt");
    let idx = std::fs::read_to_string(&ip).map_err(|e| SonnetError::io(&ip, e))?;
    let by_id: IndexMap<usize, &Sonnet> = sonnets.iter().map(|s| (s.id, s)).collect();
    let mut seed = 0u64;
    let mut parts: IndexMap<&str, Vec<Sonnet>> = IndexMap::new();
    for (ln, line) in idx.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(key) = fields.next() else { continue };
        if key == "seed" {
            seed = fields
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| SonnetError::parse(&ip, ln + 1, "bad seed line"))?;
            continue;
        }
        let mut list = Vec::new();
        for f in fields {
            let id: usize = f
                .parse()
                .map_err(|_| SonnetError::parse(&ip, ln + 1, format!("bad sonnet id {f:?}")))?;
            let s = by_id
                .get(&id)
                .ok_or_else(|| SonnetError::parse(&ip, ln + 1, format!("unknown sonnet id {id}")))?;
            list.push((*s).clone());
        }
        parts.insert(key, list);
    }
    for key in ["train", "dev", "test"] {
        if !parts.contains_key(key) {
            return Err(SonnetError::parse(&ip, 0, format!("missing {key} partition")));
        }
    }
    let split = Split {
        train: parts.shift_remove("train").unwrap(),
        dev: parts.shift_remove("dev").unwrap(),
        test: parts.shift_remove("test").unwrap(),
        seed,
    };
    Ok((sonnets, split))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_keeps_apostrophes_inside_words() {
        let toks = tokenize_line("Shall I compare thee to a summer's day?");
        let expect: Vec<&str> =
            vec!["shall", "i", "compare", "thee", "to", "a", "summer's", "day", "?"];
        assert_eq!(toks, expect);
    }

    #[test]
    fn tokenize_empty_line() {
        assert!(tokenize_line("").is_empty());
    }

    #[test]
    fn tokenize_plain_words() {
        assert_eq!(tokenize_line("Rough winds do shake"), vec!["rough", "winds", "do", "shake"]);
    }

    #[test]
    fn tokenize_folds_diacritics_and_curly_quotes() {
        assert_eq!(tokenize_line("Café’s daydream"), vec!["cafe's", "daydream"]);
    }

    #[test]
    fn strip_for_meter_deletes_apostrophes() {
        let toks = tokenize_line("Shall I compare thee to a summer's day?");
        assert_eq!(
            strip_for_meter(&toks).unwrap(),
            "shall i compare thee to a summers day"
        );
    }

    #[test]
    fn strip_for_meter_rejects_pure_punctuation() {
        let toks = vec!["!".to_string(), "?".to_string()];
        assert!(strip_for_meter(&toks).is_err());
    }

    #[test]
    fn single_word_meter_line() {
        assert_eq!(strip_for_meter(&["a".to_string()]).unwrap(), "a");
    }

    #[test]
    fn thirteen_line_poem_rejected() {
        let lines: Vec<String> =
            (0..13).map(|_| "shall i compare thee to a summers day now".to_string()).collect();
        let poems = vec![Poem { title: None, lines, stanza_breaks: vec![] }];
        assert!(filter_sonnets(&poems).is_empty());
    }

    #[test]
    fn long_line_rejects_sonnet() {
        let mut lines: Vec<String> =
            (0..13).map(|_| "shall i compare thee to a summers day now".to_string()).collect();
        lines.push("one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen sixteen".to_string());
        let poems = vec![Poem { title: None, lines, stanza_breaks: vec![] }];
        assert!(filter_sonnets(&poems).is_empty());
    }

    #[test]
    fn end_words_skip_trailing_punctuation() {
        let q: Vec<Vec<String>> = [
            "Shall I compare thee to a summer's day?",
            "Thou art more lovely and more temperate:",
            "Rough winds do shake the darling buds of May,",
            "And summer's lease hath all too short a date:",
        ]
        .iter()
        .map(|l| tokenize_line(l))
        .collect();
        let ends = quatrain_end_words(&q).unwrap();
        assert_eq!(ends, ["day", "temperate", "may", "date"].map(String::from));
    }

    #[test]
    fn end_words_reject_pure_punctuation_line() {
        let q = vec![
            vec!["a".to_string()],
            vec!["?".to_string()],
            vec!["b".to_string()],
            vec!["c".to_string()],
        ];
        assert!(quatrain_end_words(&q).is_err());
    }

    fn fig_quatrain() -> Vec<Sonnet> {
        let lines: Vec<Vec<String>> = [
            "Shall I compare thee to a summer's day?",
            "Thou art more lovely and more temperate:",
            "Rough winds do shake the darling buds of May,",
            "And summer's lease hath all too short a date:",
        ]
        .iter()
        .map(|l| tokenize_line(l))
        .collect();
        vec![Sonnet { id: 0, title: None, lines }]
    }

    #[test]
    fn vocab_min_freq_two_keeps_repeated_words() {
        let v = Vocab::build(&fig_quatrain(), 2).unwrap();
        for w in ["and", "more", "summer's", "a"] {
            assert!(v.contains(w), "{w} should survive min_freq=2");
        }
        assert_eq!(v.id_of("darling"), UNK_ID);
        assert_eq!(v.id_of("temperate"), UNK_ID);
        assert!(!v.contains("?"));
        assert!(!v.contains(":"));
    }

    #[test]
    fn vocab_min_freq_one_keeps_everything() {
        let v = Vocab::build(&fig_quatrain(), 1).unwrap();
        assert!(v.contains("darling"));
        assert!(v.contains("lease"));
    }

    #[test]
    fn vocab_huge_min_freq_leaves_only_reserved() {
        let v = Vocab::build(&fig_quatrain(), 1_000_000_000).unwrap();
        assert_eq!(v.len(), RESERVED);
    }

    #[test]
    fn vocab_order_is_frequency_then_lex() {
        let v = Vocab::build(&fig_quatrain(), 2).unwrap();
        assert_eq!(v.word(PAD_ID), PAD);
        assert_eq!(v.word(UNK_ID), UNK);
        // "a", "and", "more", "summer's" all occur exactly twice
        assert_eq!(v.word(RESERVED), "a");
        assert_eq!(v.word(RESERVED + 1), "and");
    }

    #[test]
    fn char_vocab_maps_letters_space_unknown() {
        let cv = CharVocab;
        assert_eq!(cv.id_of('a'), 3);
        assert_eq!(cv.id_of('z'), 28);
        assert_eq!(cv.id_of(' '), CHAR_SPACE_ID);
        assert_eq!(cv.id_of('é'), CHAR_UNK_ID);
        assert_eq!(cv.word_ids("summer's"), cv.word_ids("summers"));
    }

    fn synth_sonnets(n: usize) -> Vec<Sonnet> {
        (0..n)
            .map(|id| Sonnet {
                id,
                title: None,
                lines: (0..14)
                    .map(|_| tokenize_line("shall i compare thee to a summers day now"))
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn partition_eight_one_one() {
        let split = partition(synth_sonnets(10), [0.8, 0.1, 0.1], 1).unwrap();
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.dev.len(), 1);
        assert_eq!(split.test.len(), 1);
    }

    #[test]
    fn partition_same_seed_same_split() {
        let a = partition(synth_sonnets(20), [0.8, 0.1, 0.1], 9).unwrap();
        let b = partition(synth_sonnets(20), [0.8, 0.1, 0.1], 9).unwrap();
        let ids = |v: &[Sonnet]| v.iter().map(|s| s.id).collect::<Vec<_>>();
        assert_eq!(ids(&a.train), ids(&b.train));
        assert_eq!(ids(&a.dev), ids(&b.dev));
        assert_eq!(ids(&a.test), ids(&b.test));
    }

    #[test]
    fn partition_too_few_rejected() {
        assert!(partition(synth_sonnets(2), [0.8, 0.1, 0.1], 0).is_err());
    }

    #[test]
    fn rhyme_examples_rotate_targets() {
        use rand::SeedableRng;
        let v = Vocab::build(&fig_quatrain(), 1).unwrap();
        let ends = ["day", "temperate", "may", "date"].map(String::from);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ex = make_rhyme_examples(&ends, 0, &v, &mut rng);
        assert_eq!(ex.len(), 4);
        assert_eq!(ex[0].target, "day");
        assert_eq!(ex[0].refs, vec!["temperate", "may", "date"]);
        let ex2 = make_rhyme_examples(&ends, 2, &v, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(ex2.iter().all(|e| e.refs.len() == 5));
        for e in &ex2 {
            for r in &e.refs[3..] {
                assert!(!ends.contains(r));
            }
        }
    }

    #[test]
    fn prepared_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sonnets = synth_sonnets(10);
        let split = partition(sonnets.clone(), [0.8, 0.1, 0.1], 4).unwrap();
        write_prepared(dir.path(), &sonnets, &split).unwrap();
        let (all, split2) = read_prepared(dir.path()).unwrap();
        assert_eq!(all.len(), 10);
        assert_eq!(split2.seed, 4);
        let ids = |v: &[Sonnet]| v.iter().map(|s| s.id).collect::<Vec<_>>();
        assert_eq!(ids(&split.train), ids(&split2.train));
        assert_eq!(split.train[0].lines, split2.train[0].lines);
    }
}
