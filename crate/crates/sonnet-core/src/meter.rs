//! Stress model: ten decoder steps walk left-to-right over a line's
//! characters through a Gaussian positional window, attend within it, and
//! predict an alternating unstressed/stressed sequence. The training loss
//! combines the per-step cross entropy with a repeat penalty (revisiting
//! characters) and a coverage penalty (vowels left unattended).
//!
//! Lines arrive in original word order as "meter lines": lowercase letters
//! only, words joined by single spaces (see `corpus::strip_for_meter`).

use crate::cells;
use crate::config::Config;
use crate::corpus::CharVocab;
use crate::error::{Result, SonnetError};
use crate::graph::{Graph, NodeId};
use crate::params::{Bound, ParamStore};
use crate::tensor::Tensor;
use rand::Rng;

pub const STEPS: usize = 10;
pub const VOWELS: [char; 6] = ['a', 'e', 'i', 'o', 'u', 'y'];

/// Canonical target for step `t` (0-based): even steps unstressed (0),
/// odd steps stressed (1).
pub fn canonical_stress(t: usize) -> u8 {
    (t % 2) as u8
}

pub fn pm_init(ps: &mut ParamStore, cfg: &Config, rng: &mut impl Rng) {
    let c2 = 2 * cfg.char_hidden;
    let gdim = cfg.pm_dec_hidden;
    let a = cfg.pm_attn_dim;
    cells::lstm_init(ps, "pm.dec", c2, gdim, rng);
    ps.insert("pm.ustar0", Tensor::uniform(vec![c2], -0.05, 0.05, rng));
    ps.insert("pm.mu.w", Tensor::uniform(vec![a, gdim], -0.05, 0.05, rng));
    ps.insert("pm.mu.u", Tensor::uniform(vec![a, 1], -0.05, 0.05, rng));
    ps.insert("pm.mu.b", Tensor::zeros(vec![a]));
    ps.insert("pm.mu.v", Tensor::uniform(vec![a], -0.05, 0.05, rng));
    ps.insert("pm.attn.w", Tensor::uniform(vec![c2, a], -0.05, 0.05, rng));
    ps.insert("pm.attn.u", Tensor::uniform(vec![a, gdim], -0.05, 0.05, rng));
    ps.insert("pm.attn.b", Tensor::zeros(vec![a]));
    ps.insert("pm.attn.v", Tensor::uniform(vec![a], -0.05, 0.05, rng));
    ps.insert("pm.out.w", Tensor::uniform(vec![1, c2], -0.05, 0.05, rng));
    ps.insert("pm.out.b", Tensor::zeros(vec![1]));
}

/// The loss terms of one line, still attached to the graph.
pub struct PmLoss {
    pub l_ent: NodeId,
    pub l_rep: NodeId,
    pub l_cov: NodeId,
    pub l_pm: NodeId,
}

/// Forward-pass record: per-step attention over characters, normalized
/// positions, and unstressed probabilities.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub chars: Vec<char>,
    pub f: Vec<Vec<f64>>,
    pub nu: Vec<f64>,
    pub p_unstressed: Vec<f64>,
}

/// Repeat penalty over attention rows: each step pays for mass it places
/// where earlier steps already looked.
pub fn repeat_loss(g: &mut Graph, fs: &[NodeId], m: usize) -> NodeId {
    let mut cum = g.leaf(Tensor::zeros(vec![m]));
    let mut terms = Vec::with_capacity(fs.len());
    for &f in fs {
        let overlap = g.min_elem(f, cum);
        terms.push(g.sum(overlap));
        cum = g.add(cum, f);
    }
    let stacked = g.concat(&terms);
    g.sum(stacked)
}

/// Coverage penalty: vowels whose accumulated attention falls short of `c`
/// pay the difference.
pub fn coverage_loss(g: &mut Graph, fs: &[NodeId], vowel_mask: &[f64], c: f64) -> NodeId {
    let mut total = fs[0];
    for &f in &fs[1..] {
        total = g.add(total, f);
    }
    let neg = g.scale(total, -1.0);
    let short = g.shift(neg, c);
    let short = g.relu(short);
    let mask = g.leaf(Tensor::vector(vowel_mask.to_vec()));
    g.dot(short, mask)
}

/// Runs the ten decoder steps over one meter line and assembles the loss.
/// Rejects lines without a vowel (the coverage term would be vacuous).
pub fn pentameter_loss(
    g: &mut Graph,
    b: &Bound,
    cfg: &Config,
    meter_line: &str,
    train: bool,
    rng: &mut impl Rng,
) -> Result<(PmLoss, AttentionTrace)> {
    let chars: Vec<char> = meter_line.chars().collect();
    let m = chars.len();
    if m == 0 {
        return Err(SonnetError::Data("empty meter line".into()));
    }
    let keep: Vec<bool> = chars.iter().map(|&c| c != ' ').collect();
    if !keep.iter().any(|&k| k) {
        return Err(SonnetError::Data("meter line has no characters".into()));
    }
    let vowel_mask: Vec<f64> = chars
        .iter()
        .map(|c| if VOWELS.contains(c) { 1.0 } else { 0.0 })
        .collect();
    if vowel_mask.iter().all(|&v| v == 0.0) {
        return Err(SonnetError::Data(format!(
            "meter line {meter_line:?} has no vowel"
        )));
    }

    let cemb = b.id("shared.cemb");
    let char_ids = CharVocab.line_ids(meter_line);
    let xs: Vec<NodeId> = char_ids.iter().map(|&c| g.lookup(cemb, c)).collect();
    let enc = cells::bilstm_run(g, b, "shared.charbi", &xs, cfg.char_hidden);
    let rows: Vec<NodeId> = (0..m).map(|j| enc.at(g, j)).collect();
    let stacked = g.stack_rows(&rows);
    let u = g.dropout(stacked, cfg.dropout, train, rng);

    let sigma_sq = cfg.pm_sigma * cfg.pm_sigma;
    let mut state = cells::lstm_zero_state(g, cfg.pm_dec_hidden);
    let mut ustar = b.id("pm.ustar0");
    let mut nu = g.leaf(Tensor::zeros(vec![1]));
    let one = g.leaf(Tensor::vector(vec![1.0]));

    let mut fs = Vec::with_capacity(STEPS);
    let mut ent_terms = Vec::with_capacity(STEPS);
    let mut trace = AttentionTrace {
        chars: chars.clone(),
        f: Vec::with_capacity(STEPS),
        nu: Vec::with_capacity(STEPS),
        p_unstressed: Vec::with_capacity(STEPS),
    };

    for t in 0..STEPS {
        state = cells::lstm_step(g, b, "pm.dec", ustar, state, cfg.pm_dec_hidden);
        let gt = g.dropout(state.h, cfg.dropout, train, rng);

        // next position: nu_t = min(sigmoid(score) + nu_{t-1}, 1)
        let wg = g.matvec(b.id("pm.mu.w"), gt);
        let un = g.matvec(b.id("pm.mu.u"), nu);
        let pre = g.add(wg, un);
        let pre = {
            let bias = b.id("pm.mu.b");
            g.add(pre, bias)
        };
        let pre = g.tanh(pre);
        let score = g.dot(pre, b.id("pm.mu.v"));
        let step = g.sigmoid(score);
        let advanced = g.add(step, nu);
        nu = g.min_elem(advanced, one);
        let mu = g.scale(nu, m as f64);

        let p = g.gaussian_window(mu, m, sigma_sq);
        let logp = g.log_gaussian_window(mu, m, sigma_sq);
        let up = g.scale_rows(u, p);
        let dw = g.matmul(up, b.id("pm.attn.w"));
        let ug = g.matvec(b.id("pm.attn.u"), gt);
        let ug = {
            let bias = b.id("pm.attn.b");
            g.add(ug, bias)
        };
        let dpre = g.add_row_broadcast(dw, ug);
        let dpre = g.tanh(dpre);
        let d = g.matvec(dpre, b.id("pm.attn.v"));
        let scores = g.add(d, logp);
        let f = g.masked_softmax(scores, &keep);
        fs.push(f);
        ustar = g.vecmat(f, u);

        let logit = g.matvec(b.id("pm.out.w"), ustar);
        let logit = {
            let bias = b.id("pm.out.b");
            g.add(logit, bias)
        };
        // -log P(target): softplus(-x) when the target is the sigmoid class
        let ent = if canonical_stress(t) == 0 {
            let neg = g.scale(logit, -1.0);
            g.softplus(neg)
        } else {
            g.softplus(logit)
        };
        ent_terms.push(g.sum(ent));

        let p_un = g.sigmoid(logit);
        trace.f.push(g.val(f).data.clone());
        trace.nu.push(g.val(nu).data[0]);
        trace.p_unstressed.push(g.val(p_un).data[0]);
    }

    let ent_stacked = g.concat(&ent_terms);
    let l_ent = g.sum(ent_stacked);
    let l_rep = repeat_loss(g, &fs, m);
    let l_cov = coverage_loss(g, &fs, &vowel_mask, cfg.pm_coverage);
    let rep_scaled = g.scale(l_rep, cfg.pm_alpha);
    let cov_scaled = g.scale(l_cov, cfg.pm_beta);
    let partial = g.add(l_ent, rep_scaled);
    let l_pm = g.add(partial, cov_scaled);
    Ok((
        PmLoss {
            l_ent,
            l_rep,
            l_cov,
            l_pm,
        },
        trace,
    ))
}

/// Evaluation-mode total loss of one line: how far it sits from the
/// alternating stress pattern. Lower is better.
pub fn line_conformity(ps: &ParamStore, cfg: &Config, meter_line: &str) -> Result<f64> {
    let (loss, _) = conformity_with_trace(ps, cfg, meter_line)?;
    Ok(loss)
}

pub fn conformity_with_trace(
    ps: &ParamStore,
    cfg: &Config,
    meter_line: &str,
) -> Result<(f64, AttentionTrace)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut g = Graph::new();
    let b = ps.bind(&mut g);
    let (loss, trace) = pentameter_loss(&mut g, &b, cfg, meter_line, false, &mut rng)?;
    Ok((g.val(loss.l_pm).data[0], trace))
}

/// Stress patterns read off the attention trace: step `t`'s canonical
/// stress goes to every word with at least one character at or above
/// `threshold` attention in that step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StressAssignment {
    pub words: Vec<String>,
    pub patterns: Vec<Vec<u8>>,
    /// Steps whose attention cleared the threshold in more than one word.
    pub multi_word_steps: usize,
}

pub fn extract_stress(trace: &AttentionTrace, threshold: f64) -> StressAssignment {
    let mut words = Vec::new();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (j, &c) in trace.chars.iter().enumerate() {
        if c == ' ' {
            if let Some(s) = start.take() {
                spans.push((s, j));
                words.push(trace.chars[s..j].iter().collect::<String>());
            }
        } else if start.is_none() {
            start = Some(j);
        }
    }
    if let Some(s) = start {
        spans.push((s, trace.chars.len()));
        words.push(trace.chars[s..].iter().collect::<String>());
    }

    let mut patterns = vec![Vec::new(); words.len()];
    let mut multi = 0;
    for (t, f) in trace.f.iter().enumerate() {
        let mut hits = 0;
        for (w, &(s, e)) in spans.iter().enumerate() {
            if f[s..e].iter().any(|&a| a >= threshold) {
                patterns[w].push(canonical_stress(t));
                hits += 1;
            }
        }
        if hits > 1 {
            multi += 1;
        }
    }
    StressAssignment {
        words,
        patterns,
        multi_word_steps: multi,
    }
}

/// CSV rendering of a trace: one header row of characters (space shown as
/// `_`), then one row per stress step.
pub fn trace_csv(trace: &AttentionTrace) -> String {
    let mut out = String::new();
    let header: Vec<String> = trace
        .chars
        .iter()
        .map(|&c| if c == ' ' { "_".to_string() } else { c.to_string() })
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in &trace.f {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
