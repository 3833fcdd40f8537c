//! Word-level language model over reversed lines.
//!
//! A biLSTM encodes the preceding lines; a selective gate filters each
//! encoder state against the whole-context summary. The decoder LSTM reads
//! `[word embedding; character encoding]`, attends over the gated context,
//! and merges the attended vector into its state through GRU-style gates.
//! Output logits use a projection tied to the word embeddings:
//! `W_out = tanh(W_emb · W_prj)`.
//!
//! Every line is wrapped in boundary tokens and reversed before the model
//! sees it, so decoding runs last-word-first. Characters inside a word keep
//! their spelling order, and the stress model elsewhere always receives the
//! original order.

use crate::cells::{self, LstmState};
use crate::config::Config;
use crate::corpus::{CharVocab, Sonnet, Vocab, LINE_END_ID, LINE_START_ID};
use crate::graph::{Graph, NodeId};
use crate::params::{Bound, ParamStore};
use crate::tensor::Tensor;
use rand::Rng;

/// Parameters read by more than one model: word embeddings, character
/// embeddings and the character biLSTM (shared with the stress model).
pub fn shared_init(
    ps: &mut ParamStore,
    cfg: &Config,
    n_words: usize,
    n_chars: usize,
    rng: &mut impl Rng,
) {
    ps.insert(
        "shared.wemb",
        Tensor::uniform(vec![n_words, cfg.word_dim], -0.05, 0.05, rng),
    );
    if cfg.use_char || cfg.train_pm || cfg.train_rm {
        ps.insert(
            "shared.cemb",
            Tensor::uniform(vec![n_chars, cfg.char_dim], -0.05, 0.05, rng),
        );
    }
    if cfg.use_char || cfg.train_pm {
        cells::bilstm_init(ps, "shared.charbi", cfg.char_dim, cfg.char_hidden, rng);
    }
}

pub fn lm_init(ps: &mut ParamStore, cfg: &Config, n_words: usize, rng: &mut impl Rng) {
    let e2 = 2 * cfg.enc_hidden;
    let h = cfg.dec_hidden;
    let a = cfg.lm_attn_dim;
    if cfg.use_context {
        cells::bilstm_init(ps, "lm.enc", cfg.word_dim, cfg.enc_hidden, rng);
        ps.insert("lm.sel.w", Tensor::uniform(vec![e2, e2], -0.05, 0.05, rng));
        ps.insert("lm.sel.u", Tensor::uniform(vec![e2, e2], -0.05, 0.05, rng));
        ps.insert("lm.sel.b", Tensor::zeros(vec![e2]));
        ps.insert("lm.ctx.dummy", Tensor::uniform(vec![e2], -0.05, 0.05, rng));
        ps.insert("lm.attn.w", Tensor::uniform(vec![e2, a], -0.05, 0.05, rng));
        ps.insert("lm.attn.u", Tensor::uniform(vec![a, h], -0.05, 0.05, rng));
        ps.insert("lm.attn.b", Tensor::zeros(vec![a]));
        ps.insert("lm.attn.v", Tensor::uniform(vec![a], -0.05, 0.05, rng));
        for gate in ["z", "r", "h"] {
            ps.insert(
                format!("lm.merge.w{gate}"),
                Tensor::uniform(vec![h, e2], -0.05, 0.05, rng),
            );
            ps.insert(
                format!("lm.merge.u{gate}"),
                Tensor::uniform(vec![h, h], -0.05, 0.05, rng),
            );
            ps.insert(format!("lm.merge.b{gate}"), Tensor::zeros(vec![h]));
        }
    }
    let in_dim = cfg.word_dim + if cfg.use_char { 2 * cfg.char_hidden } else { 0 };
    cells::lstm_init(ps, "lm.dec", in_dim, h, rng);
    ps.insert(
        "lm.out.proj",
        Tensor::uniform(vec![cfg.word_dim, h], -0.05, 0.05, rng),
    );
    ps.insert("lm.out.bias", Tensor::zeros(vec![n_words]));
}

/// A word as the decoder sees it: vocabulary id plus character ids of the
/// surface form. Unknown words keep their real spelling; boundary tokens
/// carry no characters and encode to zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub id: usize,
    pub chars: Vec<usize>,
}

pub fn word_token(word: &str, vocab: &Vocab, cv: &CharVocab) -> Token {
    Token {
        id: vocab.id_of(word),
        chars: cv.word_ids(word),
    }
}

/// `[line-end, w_n .. w_1, line-start]`: the line wrapped in boundary tokens
/// and reversed as a whole sequence.
pub fn reverse_wrap(words: &[&str], vocab: &Vocab, cv: &CharVocab) -> Vec<Token> {
    let mut seq = Vec::with_capacity(words.len() + 2);
    seq.push(Token {
        id: LINE_START_ID,
        chars: Vec::new(),
    });
    for w in words {
        seq.push(word_token(w, vocab, cv));
    }
    seq.push(Token {
        id: LINE_END_ID,
        chars: Vec::new(),
    });
    seq.reverse();
    seq
}

/// Reversed word-id stream of one context line.
pub fn context_line_ids(words: &[&str], vocab: &Vocab) -> Vec<usize> {
    let mut ids: Vec<usize> = words.iter().map(|w| vocab.id_of(w)).collect();
    ids.reverse();
    ids
}

/// Last forward and first backward state of the shared character biLSTM,
/// concatenated.
pub fn encode_word_chars(g: &mut Graph, b: &Bound, cfg: &Config, chars: &[usize]) -> NodeId {
    assert!(!chars.is_empty(), "cannot char-encode an empty word");
    let cemb = b.id("shared.cemb");
    let xs: Vec<NodeId> = chars.iter().map(|&c| g.lookup(cemb, c)).collect();
    let outs = cells::bilstm_run(g, b, "shared.charbi", &xs, cfg.char_hidden);
    outs.ends(g)
}

/// Gated encoder states for the preceding lines, plus their product with the
/// attention input weight (computed once, reused every decoder step).
pub struct ContextEncoding {
    pub hp: NodeId,
    pub hw: NodeId,
    pub len: usize,
}

/// Encodes the already-reversed context lines, oldest first. Gradients only
/// flow into the most recent line: older positions are detached, as is the
/// forward carry entering the newest line. An empty context encodes to the
/// single trainable dummy vector, ungated.
pub fn encode_context(
    g: &mut Graph,
    b: &Bound,
    cfg: &Config,
    lines: &[Vec<usize>],
    train: bool,
    rng: &mut impl Rng,
) -> ContextEncoding {
    assert!(cfg.use_context, "context encoder disabled by configuration");
    let nonempty: Vec<&Vec<usize>> = lines.iter().filter(|l| !l.is_empty()).collect();
    if nonempty.is_empty() {
        let dummy = b.id("lm.ctx.dummy");
        let hp = g.stack_rows(&[dummy]);
        let hw = g.matmul(hp, b.id("lm.attn.w"));
        return ContextEncoding { hp, hw, len: 1 };
    }

    let wemb = b.id("shared.wemb");
    let mut inputs = Vec::new();
    let mut line_of = Vec::new();
    for (li, line) in nonempty.iter().enumerate() {
        for &id in line.iter() {
            let e = g.lookup(wemb, id);
            let e = g.dropout(e, cfg.dropout, train, rng);
            inputs.push(e);
            line_of.push(li);
        }
    }
    let newest = nonempty.len() - 1;
    let hidden = cfg.enc_hidden;

    let mut st = cells::lstm_zero_state(g, hidden);
    let mut fwd = Vec::with_capacity(inputs.len());
    for (t, &x) in inputs.iter().enumerate() {
        if t > 0 && line_of[t] == newest && line_of[t - 1] != newest {
            st = LstmState {
                h: g.detach(st.h),
                c: g.detach(st.c),
            };
        }
        st = cells::lstm_step(g, b, "lm.enc.f", x, st, hidden);
        fwd.push(st.h);
    }
    let bwd = cells::lstm_run(g, b, "lm.enc.r", &inputs, hidden, true);

    let mut rows = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut h = g.concat(&[fwd[t], bwd[t]]);
        if line_of[t] != newest {
            h = g.detach(h);
        }
        h = g.dropout(h, cfg.dropout, train, rng);
        rows.push(h);
    }
    let hmat = g.stack_rows(&rows);

    let fwd_last = g.slice(rows[inputs.len() - 1], 0, hidden);
    let bwd_first = g.slice(rows[0], hidden, hidden);
    let hbar = g.concat(&[fwd_last, bwd_first]);

    let gate_bias = g.matvec(b.id("lm.sel.u"), hbar);
    let gate_bias = {
        let ba = b.id("lm.sel.b");
        g.add(gate_bias, ba)
    };
    let gate_in = g.matmul(hmat, b.id("lm.sel.w"));
    let gate_in = g.add_row_broadcast(gate_in, gate_bias);
    let gate = g.sigmoid(gate_in);
    let hp = g.mul(hmat, gate);
    let hw = g.matmul(hp, b.id("lm.attn.w"));
    ContextEncoding {
        hp,
        hw,
        len: inputs.len(),
    }
}

/// `tanh(W_emb · W_prj)`: the tied output projection, built once per graph.
pub fn output_matrix(g: &mut Graph, b: &Bound) -> NodeId {
    let m = g.matmul(b.id("shared.wemb"), b.id("lm.out.proj"));
    g.tanh(m)
}

/// One line's decode in progress. State resets at every line start; context
/// reaches the decoder only through attention.
pub struct DecodeSession {
    pub st: LstmState,
    pub ctx: Option<ContextEncoding>,
    pub wout: NodeId,
    pub train: bool,
    pub pos: usize,
    pub last_attention: Option<NodeId>,
}

pub fn start_line(
    g: &mut Graph,
    cfg: &Config,
    ctx: Option<ContextEncoding>,
    wout: NodeId,
    train: bool,
) -> DecodeSession {
    DecodeSession {
        st: cells::lstm_zero_state(g, cfg.dec_hidden),
        ctx,
        wout,
        train,
        pos: 0,
        last_attention: None,
    }
}

impl DecodeSession {
    /// Feeds one token and returns the logits for the next position.
    pub fn step(
        &mut self,
        g: &mut Graph,
        b: &Bound,
        cfg: &Config,
        tok: &Token,
        rng: &mut impl Rng,
    ) -> NodeId {
        let e = g.lookup(b.id("shared.wemb"), tok.id);
        let e = g.dropout(e, cfg.dropout, self.train, rng);
        let x = if cfg.use_char {
            let u = if tok.chars.is_empty() {
                g.leaf(Tensor::zeros(vec![2 * cfg.char_hidden]))
            } else {
                encode_word_chars(g, b, cfg, &tok.chars)
            };
            let u = g.dropout(u, cfg.dropout, self.train, rng);
            g.concat(&[e, u])
        } else {
            e
        };
        self.st = cells::lstm_step(g, b, "lm.dec", x, self.st, cfg.dec_hidden);
        self.pos += 1;
        let s = g.dropout(self.st.h, cfg.dropout, self.train, rng);
        let sp = match &self.ctx {
            Some(ctx) => {
                let (sp, attn) = merge_context(g, b, ctx, s);
                self.last_attention = Some(attn);
                sp
            }
            None => s,
        };
        let logits = g.matvec(self.wout, sp);
        g.add(logits, b.id("lm.out.bias"))
    }
}

/// Attention over the gated context rows followed by the GRU-style merge of
/// the attended vector into the decoder state. Returns the merged state and
/// the attention weights.
fn merge_context(g: &mut Graph, b: &Bound, ctx: &ContextEncoding, s: NodeId) -> (NodeId, NodeId) {
    let us = g.matvec(b.id("lm.attn.u"), s);
    let us = {
        let bb = b.id("lm.attn.b");
        g.add(us, bb)
    };
    let pre = g.add_row_broadcast(ctx.hw, us);
    let pre = g.tanh(pre);
    let scores = g.matvec(pre, b.id("lm.attn.v"));
    let attn = g.softmax(scores);
    let hstar = g.vecmat(attn, ctx.hp);

    let z = merge_gate(g, b, "z", hstar, s);
    let z = g.sigmoid(z);
    let r = merge_gate(g, b, "r", hstar, s);
    let r = g.sigmoid(r);
    let rs = g.mul(r, s);
    let shat = merge_gate(g, b, "h", hstar, rs);
    let shat = g.tanh(shat);

    let zs = g.mul(z, shat);
    let nz = g.scale(z, -1.0);
    let nz = g.shift(nz, 1.0);
    let keep = g.mul(nz, s);
    (g.add(keep, zs), attn)
}

fn merge_gate(g: &mut Graph, b: &Bound, gate: &str, hstar: NodeId, s: NodeId) -> NodeId {
    let wh = g.matvec(b.id(&format!("lm.merge.w{gate}")), hstar);
    let us = g.matvec(b.id(&format!("lm.merge.u{gate}")), s);
    let pre = g.add(wh, us);
    let bias = b.id(&format!("lm.merge.b{gate}"));
    g.add(pre, bias)
}

/// Summed next-token negative log likelihood over one reversed line.
pub struct LineNll {
    pub total: NodeId,
    pub tokens: usize,
}

pub fn line_nll(
    g: &mut Graph,
    b: &Bound,
    cfg: &Config,
    seq: &[Token],
    ctx: Option<ContextEncoding>,
    wout: NodeId,
    train: bool,
    rng: &mut impl Rng,
) -> LineNll {
    assert!(seq.len() >= 2, "a line needs at least two tokens to predict");
    let mut sess = start_line(g, cfg, ctx, wout, train);
    let mut terms = Vec::with_capacity(seq.len() - 1);
    for t in 0..seq.len() - 1 {
        let logits = sess.step(g, b, cfg, &seq[t], rng);
        terms.push(g.nll_from_logits(logits, seq[t + 1].id));
    }
    let stacked = g.concat(&terms);
    LineNll {
        total: g.sum(stacked),
        tokens: terms.len(),
    }
}

/// Mean per-token NLL of one line.
pub fn line_loss(
    g: &mut Graph,
    b: &Bound,
    cfg: &Config,
    seq: &[Token],
    ctx: Option<ContextEncoding>,
    wout: NodeId,
    train: bool,
    rng: &mut impl Rng,
) -> NodeId {
    let nll = line_nll(g, b, cfg, seq, ctx, wout, train, rng);
    g.scale(nll.total, 1.0 / nll.tokens as f64)
}

/// Encodes the up-to-`context_lines` preceding lines of `word_lines` for
/// predicting line `t`. Returns `None` when the context encoder is disabled.
pub fn context_for_line(
    g: &mut Graph,
    b: &Bound,
    cfg: &Config,
    vocab: &Vocab,
    word_lines: &[Vec<&str>],
    t: usize,
    train: bool,
    rng: &mut impl Rng,
) -> Option<ContextEncoding> {
    if !cfg.use_context {
        return None;
    }
    let lo = t.saturating_sub(cfg.context_lines);
    let lines: Vec<Vec<usize>> = (lo..t)
        .map(|i| context_line_ids(&word_lines[i], vocab))
        .collect();
    Some(encode_context(g, b, cfg, &lines, train, rng))
}

/// Total NLL and token count over every line of a sonnet, each line decoded
/// against its own preceding-line context.
pub fn sonnet_lm_loss(
    g: &mut Graph,
    b: &Bound,
    cfg: &Config,
    vocab: &Vocab,
    cv: &CharVocab,
    sonnet: &Sonnet,
    wout: NodeId,
    train: bool,
    rng: &mut impl Rng,
) -> LineNll {
    let word_lines: Vec<Vec<&str>> = (0..sonnet.lines.len())
        .map(|i| sonnet.words_of_line(i))
        .collect();
    let mut terms = Vec::with_capacity(word_lines.len());
    let mut tokens = 0;
    for t in 0..word_lines.len() {
        let ctx = context_for_line(g, b, cfg, vocab, &word_lines, t, train, rng);
        let seq = reverse_wrap(&word_lines[t], vocab, cv);
        let nll = line_nll(g, b, cfg, &seq, ctx, wout, train, rng);
        terms.push(nll.total);
        tokens += nll.tokens;
    }
    let stacked = g.concat(&terms);
    LineNll {
        total: g.sum(stacked),
        tokens,
    }
}

/// `exp(total NLL / total predicted tokens)` over whole sonnets, dropout off.
pub fn perplexity(
    ps: &ParamStore,
    cfg: &Config,
    vocab: &Vocab,
    cv: &CharVocab,
    sonnets: &[Sonnet],
) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    let mut tokens = 0usize;
    for s in sonnets {
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let wout = output_matrix(&mut g, &b);
        let nll = sonnet_lm_loss(&mut g, &b, cfg, vocab, cv, s, wout, false, &mut rng);
        total += g.val(nll.total).data[0];
        tokens += nll.tokens;
    }
    (total / tokens as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::gradcheck::GradCheck;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> Config {
        let mut cfg = Config::default();
        cfg.word_dim = 6;
        cfg.char_dim = 4;
        cfg.char_hidden = 3;
        cfg.enc_hidden = 4;
        cfg.dec_hidden = 5;
        cfg.lm_attn_dim = 4;
        cfg.dropout = 0.0;
        cfg
    }

    fn tiny_vocab() -> Vocab {
        let lines: Vec<String> = (0..14)
            .map(|_| "the sun and the moon rose red".to_string())
            .collect();
        let sonnets = vec![Sonnet {
            id: 0,
            title: None,
            lines: lines.iter().map(|l| corpus::tokenize_line(l)).collect(),
        }];
        Vocab::build(&sonnets, 1).unwrap()
    }

    fn init_all(cfg: &Config, vocab: &Vocab, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        shared_init(&mut ps, cfg, vocab.len(), CharVocab.len(), &mut rng);
        lm_init(&mut ps, cfg, vocab.len(), &mut rng);
        ps
    }

    #[test]
    fn reverse_wrap_puts_line_end_first() {
        let vocab = tiny_vocab();
        let seq = reverse_wrap(&["sun", "and", "moon"], &vocab, &CharVocab);
        let ids: Vec<usize> = seq.iter().map(|t| t.id).collect();
        assert_eq!(ids[0], LINE_END_ID);
        assert_eq!(*ids.last().unwrap(), LINE_START_ID);
        assert_eq!(ids[1], vocab.id_of("moon"));
        assert_eq!(ids[3], vocab.id_of("sun"));
        // characters keep spelling order after the word-level reversal
        assert_eq!(seq[1].chars, CharVocab.word_ids("moon"));
    }

    #[test]
    fn unknown_words_keep_their_characters() {
        let vocab = tiny_vocab();
        let tok = word_token("zyzzyva", &vocab, &CharVocab);
        assert_eq!(tok.id, corpus::UNK_ID);
        assert_eq!(tok.chars, CharVocab.word_ids("zyzzyva"));
    }

    #[test]
    fn empty_context_is_exactly_the_dummy_row() {
        let cfg = tiny_cfg();
        let vocab = tiny_vocab();
        let ps = init_all(&cfg, &vocab, 3);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ctx = encode_context(&mut g, &b, &cfg, &[], false, &mut rng);
        assert_eq!(ctx.len, 1);
        assert_eq!(g.val(ctx.hp).shape, vec![1, 2 * cfg.enc_hidden]);
        assert_eq!(g.val(ctx.hp).data, ps.get("lm.ctx.dummy").data);
    }

    #[test]
    fn selective_gate_shrinks_states_elementwise() {
        let cfg = tiny_cfg();
        let vocab = tiny_vocab();
        let ps = init_all(&cfg, &vocab, 4);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let line = context_line_ids(&["the", "sun", "and", "the", "moon", "rose"], &vocab);
        let ctx = encode_context(&mut g, &b, &cfg, &[line], false, &mut rng);
        assert_eq!(ctx.len, 6);
        // reconstruct the ungated states to compare against
        let wemb = b.id("shared.wemb");
        let ids = context_line_ids(&["the", "sun", "and", "the", "moon", "rose"], &vocab);
        let xs: Vec<NodeId> = ids.iter().map(|&i| g.lookup(wemb, i)).collect();
        let outs = cells::bilstm_run(&mut g, &b, "lm.enc", &xs, cfg.enc_hidden);
        for t in 0..6 {
            let h = outs.at(&mut g, t);
            let h = g.val(h).data.clone();
            let hp = g.val(ctx.hp).row(t).to_vec();
            for (a, bb) in hp.iter().zip(h.iter()) {
                assert!(a.abs() <= bb.abs() + 1e-12, "gate amplified: {a} vs {bb}");
            }
        }
    }

    #[test]
    fn char_encoding_is_pure_and_order_sensitive() {
        let cfg = tiny_cfg();
        let vocab = tiny_vocab();
        let ps = init_all(&cfg, &vocab, 5);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let day1 = encode_word_chars(&mut g, &b, &cfg, &CharVocab.word_ids("day"));
        let day2 = encode_word_chars(&mut g, &b, &cfg, &CharVocab.word_ids("day"));
        let dya = encode_word_chars(&mut g, &b, &cfg, &CharVocab.word_ids("dya"));
        let single = encode_word_chars(&mut g, &b, &cfg, &CharVocab.word_ids("i"));
        assert_eq!(g.val(day1).data, g.val(day2).data);
        assert_ne!(g.val(day1).data, g.val(dya).data);
        assert_eq!(g.val(single).numel(), 2 * cfg.char_hidden);
    }

    #[test]
    fn decode_distribution_sums_to_one() {
        let cfg = tiny_cfg();
        let vocab = tiny_vocab();
        let ps = init_all(&cfg, &vocab, 6);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ctx = encode_context(&mut g, &b, &cfg, &[], false, &mut rng);
        let wout = output_matrix(&mut g, &b);
        let mut sess = start_line(&mut g, &cfg, Some(ctx), wout, false);
        let tok = word_token("sun", &vocab, &CharVocab);
        let logits = sess.step(&mut g, &b, &cfg, &tok, &mut rng);
        let dist = g.softmax(logits);
        let total: f64 = g.val(dist).data.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn singleton_context_attention_is_one() {
        let cfg = tiny_cfg();
        let vocab = tiny_vocab();
        let ps = init_all(&cfg, &vocab, 7);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let line = context_line_ids(&["sun"], &vocab);
        let ctx = encode_context(&mut g, &b, &cfg, &[line], false, &mut rng);
        let wout = output_matrix(&mut g, &b);
        let mut sess = start_line(&mut g, &cfg, Some(ctx), wout, false);
        let tok = word_token("moon", &vocab, &CharVocab);
        sess.step(&mut g, &b, &cfg, &tok, &mut rng);
        let attn = sess.last_attention.unwrap();
        assert_eq!(g.val(attn).data, vec![1.0]);
    }

    #[test]
    fn zero_parameters_give_uniform_model_perplexity() {
        let cfg = tiny_cfg();
        let vocab = tiny_vocab();
        let mut ps = init_all(&cfg, &vocab, 8);
        let names: Vec<String> = ps.iter().map(|(n, _)| n.clone()).collect();
        for n in &names {
            for v in ps.get_mut(n).data.iter_mut() {
                *v = 0.0;
            }
        }
        let poem_lines: Vec<Vec<String>> = (0..14)
            .map(|_| corpus::tokenize_line("the sun and the moon rose red"))
            .collect();
        let sonnet = Sonnet {
            id: 0,
            title: None,
            lines: poem_lines,
        };
        let ppl = perplexity(&ps, &cfg, &vocab, &CharVocab, &[sonnet]);
        assert!(
            (ppl - vocab.len() as f64).abs() < 1e-6,
            "uniform model perplexity {ppl} vs |V| = {}",
            vocab.len()
        );
    }

    #[test]
    fn tied_output_tracks_embedding_updates() {
        let cfg = tiny_cfg();
        let vocab = tiny_vocab();
        let mut ps = init_all(&cfg, &vocab, 9);
        let before = {
            let mut g = Graph::new();
            let b = ps.bind(&mut g);
            let w = output_matrix(&mut g, &b);
            g.val(w).data.clone()
        };
        ps.get_mut("shared.wemb").data[0] += 0.5;
        let after = {
            let mut g = Graph::new();
            let b = ps.bind(&mut g);
            let w = output_matrix(&mut g, &b);
            g.val(w).data.clone()
        };
        assert_ne!(before, after);
    }

    #[test]
    fn ablations_shrink_the_parameter_set() {
        let vocab = tiny_vocab();
        let mut plain = tiny_cfg();
        plain.use_char = false;
        plain.use_context = false;
        plain.train_pm = false;
        plain.train_rm = false;
        let ps = init_all(&plain, &vocab, 10);
        assert!(!ps.contains("lm.attn.w"));
        assert!(!ps.contains("shared.cemb"));
        assert_eq!(ps.get("lm.dec.wx").shape, vec![4 * plain.dec_hidden, plain.word_dim]);

        let mut star = tiny_cfg();
        star.use_context = false;
        let ps = init_all(&star, &vocab, 10);
        assert!(ps.contains("shared.cemb"));
        assert!(!ps.contains("lm.merge.wz"));
        assert_eq!(
            ps.get("lm.dec.wx").shape,
            vec![4 * star.dec_hidden, star.word_dim + 2 * star.char_hidden]
        );
    }

    #[test]
    fn line_loss_gradients_match_finite_differences() {
        let mut cfg = tiny_cfg();
        cfg.word_dim = 4;
        cfg.char_dim = 3;
        cfg.char_hidden = 2;
        cfg.enc_hidden = 3;
        cfg.dec_hidden = 4;
        cfg.lm_attn_dim = 3;
        let vocab = tiny_vocab();
        let mut ps = init_all(&cfg, &vocab, 11);
        // at the training init scale (0.05) the character path's true gradient
        // sits below the central-difference noise floor; scale up so every
        // entry is measurable
        let names: Vec<String> = ps.iter().map(|(n, _)| n.clone()).collect();
        for n in &names {
            for v in ps.get_mut(n).data.iter_mut() {
                *v *= 8.0;
            }
        }
        let ctx_words: Vec<usize> = context_line_ids(&["the", "moon", "rose"], &vocab);
        let seq = reverse_wrap(&["the", "sun", "red"], &vocab, &CharVocab);
        let (err, at) = GradCheck::default().run(&mut ps, |g, b| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let ctx = encode_context(g, b, &cfg, &[ctx_words.clone()], false, &mut rng);
            let wout = output_matrix(g, b);
            line_loss(g, b, &cfg, &seq, Some(ctx), wout, false, &mut rng)
        });
        assert!(err < 1e-4, "gradcheck failed at {at}: {err}");
    }
}
