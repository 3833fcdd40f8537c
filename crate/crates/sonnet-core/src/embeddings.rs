//! Skip-gram word embeddings with negative sampling, pretrained on the
//! prepared corpus and loaded as the initial word-embedding table.
//!
//! Text format: header `|V| d hash` (hash = 16 hex digits of the vocabulary
//! hash), then one `word f_1 .. f_d` row per vocabulary entry. A plain
//! `|V| d` header or no header at all (legacy: word + floats per row) is
//! accepted; rows for words outside the target vocabulary are ignored and
//! vocabulary words without a row are drawn uniform(-0.05, 0.05).

use crate::corpus::Vocab;
use crate::error::{Result, SonnetError};
use rand::Rng;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SgConfig {
    pub dim: usize,
    pub window: usize,
    pub k_neg: usize,
    pub epochs: usize,
    pub lr: f64,
}

pub struct SkipgramResult {
    pub vectors: Vec<Vec<f64>>,
    /// Output-side vectors: `p(context | center)` scores with
    /// `vectors[center] . context_vectors[context]`.
    pub context_vectors: Vec<Vec<f64>>,
    /// Mean pair loss per epoch.
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains input vectors over lines of vocabulary ids. Negatives follow the
/// unigram distribution raised to 0.75. Deterministic for a fixed rng.
pub fn train_skipgram(
    lines: &[Vec<usize>],
    n_words: usize,
    sg: &SgConfig,
    rng: &mut impl Rng,
) -> Result<SkipgramResult> {
    if sg.dim == 0 {
        return Err(SonnetError::Config("embedding dimension must be positive".into()));
    }
    let total_tokens: usize = lines.iter().map(|l| l.len()).sum();
    if total_tokens == 0 {
        return Err(SonnetError::Data("empty corpus for embedding training".into()));
    }

    let mut counts = vec![0.0f64; n_words];
    for line in lines {
        for &id in line {
            assert!(id < n_words, "token id {id} outside vocabulary");
            counts[id] += 1.0;
        }
    }
    let mut cdf = Vec::with_capacity(n_words);
    let mut acc = 0.0;
    for c in &counts {
        acc += c.powf(0.75);
        cdf.push(acc);
    }
    let z = acc;
    let pick = |x: f64| -> usize { cdf.partition_point(|&p| p <= x).min(n_words - 1) };

    let half = 0.5 / sg.dim as f64;
    let mut input: Vec<Vec<f64>> = (0..n_words)
        .map(|_| (0..sg.dim).map(|_| rng.gen_range(-half..half)).collect())
        .collect();
    let mut output: Vec<Vec<f64>> = vec![vec![0.0; sg.dim]; n_words];

    let grand_total = (sg.epochs * total_tokens) as f64;
    let mut seen = 0usize;
    let mut epoch_losses = Vec::with_capacity(sg.epochs);
    for _ in 0..sg.epochs {
        let mut loss = 0.0;
        let mut pairs = 0usize;
        for line in lines {
            for (i, &center) in line.iter().enumerate() {
                let lr = sg.lr * (1.0 - seen as f64 / grand_total).max(1e-4);
                seen += 1;
                let lo = i.saturating_sub(sg.window);
                let hi = (i + sg.window + 1).min(line.len());
                for j in lo..hi {
                    if j == i {
                        continue;
                    }
                    let context = line[j];
                    let mut vgrad = vec![0.0; sg.dim];
                    let dot: f64 = input[center]
                        .iter()
                        .zip(&output[context])
                        .map(|(a, b)| a * b)
                        .sum();
                    let p = sigmoid(dot);
                    loss += -p.max(1e-12).ln();
                    let g = (p - 1.0) * lr;
                    for k in 0..sg.dim {
                        vgrad[k] += g * output[context][k];
                        output[context][k] -= g * input[center][k];
                    }
                    for _ in 0..sg.k_neg {
                        let neg = pick(rng.gen_range(0.0..z));
                        if neg == context {
                            continue;
                        }
                        let dot: f64 = input[center]
                            .iter()
                            .zip(&output[neg])
                            .map(|(a, b)| a * b)
                            .sum();
                        let pn = sigmoid(dot);
                        loss += -(1.0 - pn).max(1e-12).ln();
                        let gn = pn * lr;
                        for k in 0..sg.dim {
                            vgrad[k] += gn * output[neg][k];
                            output[neg][k] -= gn * input[center][k];
                        }
                    }
                    for k in 0..sg.dim {
                        input[center][k] -= vgrad[k];
                    }
                    pairs += 1;
                }
            }
        }
        epoch_losses.push(loss / pairs.max(1) as f64);
    }
    Ok(SkipgramResult {
        vectors: input,
        context_vectors: output,
        epoch_losses,
    })
}

pub fn save_embeddings(path: &Path, vocab: &Vocab, matrix: &[Vec<f64>]) -> Result<()> {
    assert_eq!(matrix.len(), vocab.len(), "matrix rows must match vocabulary");
    let dim = matrix.first().map_or(0, |r| r.len());
    let mut out = String::new();
    out.push_str(&format!("{} {} {:016x}\n", vocab.len(), dim, vocab.hash()));
    for (id, row) in matrix.iter().enumerate() {
        out.push_str(vocab.word(id));
        for v in row {
            out.push(' ');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| SonnetError::io(path, e))
}

/// Loads embeddings for `vocab`, drawing uniform(-0.05, 0.05) rows for
/// vocabulary words the file lacks. Returns the matrix and how many rows
/// were missing. A file whose header carries a vocabulary hash is rejected
/// when the hash differs.
pub fn load_embeddings(
    path: &Path,
    vocab: &Vocab,
    rng: &mut impl Rng,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| SonnetError::io(path, e))?;
    let mut rows: indexmap::IndexMap<&str, Vec<f64>> = indexmap::IndexMap::new();
    let mut dim: Option<usize> = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts
            .next()
            .ok_or_else(|| SonnetError::parse(path, ln + 1, "empty row"))?;
        let rest: Vec<&str> = parts.collect();
        if ln == 0 && head.parse::<usize>().is_ok() && (1..=2).contains(&rest.len()) {
            if let Some(hash_field) = rest.get(1) {
                let stored = u64::from_str_radix(hash_field, 16).map_err(|_| {
                    SonnetError::parse(path, 1, format!("bad vocabulary hash {hash_field:?}"))
                })?;
                if stored != vocab.hash() {
                    return Err(SonnetError::Data(format!(
                        "embeddings at {} were built for a different vocabulary",
                        path.display()
                    )));
                }
            }
            continue;
        }
        let mut vals = Vec::with_capacity(rest.len());
        for f in &rest {
            vals.push(f.parse::<f64>().map_err(|_| {
                SonnetError::parse(path, ln + 1, format!("bad float {f:?}"))
            })?);
        }
        match dim {
            None => dim = Some(vals.len()),
            Some(d) if d != vals.len() => {
                return Err(SonnetError::parse(
                    path,
                    ln + 1,
                    format!("row has {} floats, expected {d}", vals.len()),
                ));
            }
            _ => {}
        }
        rows.insert(head, vals);
    }
    let dim = dim.ok_or_else(|| SonnetError::Data(format!("{} has no rows", path.display())))?;
    let mut missing = 0;
    let mut matrix = Vec::with_capacity(vocab.len());
    for id in 0..vocab.len() {
        match rows.get(vocab.word(id)) {
            Some(r) => matrix.push(r.clone()),
            None => {
                missing += 1;
                matrix.push((0..dim).map(|_| rng.gen_range(-0.05..0.05)).collect());
            }
        }
    }
    Ok((matrix, missing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize_line, Sonnet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_sg() -> SgConfig {
        SgConfig {
            dim: 8,
            window: 2,
            k_neg: 3,
            epochs: 200,
            lr: 0.05,
        }
    }

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    // ids 0..3 reserved; 4=a 5=b 6=c 7=d. Alternating runs so that with
    // window 2 the words of a pair share context words: that shared context
    // is what pulls their input vectors together.
    fn toy_lines() -> Vec<Vec<usize>> {
        let mut lines = Vec::new();
        for _ in 0..40 {
            lines.push(vec![4, 5, 4, 5, 4, 5, 4, 5]);
            lines.push(vec![6, 7, 6, 7, 6, 7, 6, 7]);
        }
        lines
    }

    #[test]
    fn seeded_runs_are_identical() {
        let sg = SgConfig { epochs: 3, ..toy_sg() };
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let a = train_skipgram(&toy_lines(), 8, &sg, &mut r1).unwrap();
        let b = train_skipgram(&toy_lines(), 8, &sg, &mut r2).unwrap();
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn cooccurring_pair_beats_stranger() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let got = train_skipgram(&toy_lines(), 8, &toy_sg(), &mut rng).unwrap();
        let sim_ab = cos(&got.vectors[4], &got.vectors[5]);
        let sim_ac = cos(&got.vectors[4], &got.vectors[6]);
        assert!(
            sim_ab > sim_ac,
            "co-occurring pair {sim_ab:.3} not above stranger {sim_ac:.3}"
        );
        // the objective itself: a predicts b as context, never c
        let pred_ab = cos(&got.vectors[4], &got.context_vectors[5]);
        let pred_ac = cos(&got.vectors[4], &got.context_vectors[6]);
        assert!(pred_ab > pred_ac, "{pred_ab:.3} vs {pred_ac:.3}");
        for row in got.vectors.iter().chain(&got.context_vectors) {
            assert!(row.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn epoch_loss_does_not_increase_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let got = train_skipgram(&toy_lines(), 8, &toy_sg(), &mut rng).unwrap();
        assert!(got.epoch_losses[0] >= got.epoch_losses[1]);
        assert!(got.epoch_losses[1] >= got.epoch_losses[2]);
    }

    #[test]
    fn zero_dimension_rejected() {
        let sg = SgConfig { dim: 0, ..toy_sg() };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        assert!(train_skipgram(&toy_lines(), 8, &sg, &mut rng).is_err());
    }

    fn test_vocab(text: &str) -> Vocab {
        let lines: Vec<Vec<String>> = (0..14).map(|_| tokenize_line(text)).collect();
        Vocab::build(
            &[Sonnet {
                id: 0,
                title: None,
                lines,
            }],
            1,
        )
        .unwrap()
    }

    #[test]
    fn save_load_round_trips_bitwise() {
        let vocab = test_vocab("the sun and moon");
        let matrix: Vec<Vec<f64>> = (0..vocab.len())
            .map(|i| vec![i as f64 * 0.1 + 0.037, -1.5 / (i + 1) as f64])
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        save_embeddings(&path, &vocab, &matrix).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (back, missing) = load_embeddings(&path, &vocab, &mut rng).unwrap();
        assert_eq!(matrix, back);
        assert_eq!(missing, 0);
    }

    #[test]
    fn wrong_vocabulary_rejected() {
        let v1 = test_vocab("the sun and moon");
        let v2 = test_vocab("a rose by any name");
        let matrix: Vec<Vec<f64>> = (0..v1.len()).map(|_| vec![0.0, 0.0]).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        save_embeddings(&path, &v1, &matrix).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let err = load_embeddings(&path, &v2, &mut rng).unwrap_err();
        assert!(err.to_string().contains("different vocabulary"), "{err}");
    }

    #[test]
    fn legacy_headerless_format_accepted() {
        let vocab = test_vocab("the sun and moon");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("legacy.txt");
        std::fs::write(&path, "sun 1.0 2.0\nmoon 3.0 4.0\n").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (matrix, missing) = load_embeddings(&path, &vocab, &mut rng).unwrap();
        assert_eq!(matrix[vocab.id_of("sun")], vec![1.0, 2.0]);
        assert_eq!(matrix[vocab.id_of("moon")], vec![3.0, 4.0]);
        assert_eq!(missing, vocab.len() - 2);
        // drawn rows stay inside the init band
        for id in 0..vocab.len() {
            if id == vocab.id_of("sun") || id == vocab.id_of("moon") {
                continue;
            }
            assert!(matrix[id].iter().all(|v| v.abs() <= 0.05));
        }
    }
}
