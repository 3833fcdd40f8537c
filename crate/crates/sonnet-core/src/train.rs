//! Joint training loop. Each epoch walks the training sonnets in shuffled
//! order and takes three optimizer steps per sonnet: Adagrad on the language
//! model loss, Adam on the stress loss, Adam on the rhyme loss. The character
//! tables sit in every loss, so all three optimizers pull on them. After each
//! epoch the summed dev loss decides whether the epoch sticks or the weights
//! roll back to the previous epoch.

use crate::config::Config;
use crate::corpus::{strip_for_meter, CharVocab, Sonnet, Vocab};
use crate::error::{Result, SonnetError};
use crate::graph::Graph;
use crate::lm;
use crate::meter;
use crate::optim::{clip_global_norm, Adagrad, Adam};
use crate::params::ParamStore;
use crate::rhyme;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One row of the per-epoch metrics log. Dev numbers are measured before the
/// reset rule runs; `reset` records whether the epoch was rolled back.
#[derive(Debug, Clone)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_lm: f64,
    pub train_pm: f64,
    pub train_rm: f64,
    pub dev_lm: f64,
    pub dev_pm: f64,
    pub dev_rm: f64,
    pub reset: bool,
    pub seconds: f64,
}

impl EpochMetrics {
    pub fn dev_total(&self) -> f64 {
        self.dev_lm + self.dev_pm + self.dev_rm
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainEnd {
    Completed,
    /// A loss went non-finite; `params` holds the last accepted weights.
    NumericAbort { epoch: usize, detail: String },
}

pub struct TrainResult {
    pub params: ParamStore,
    pub metrics: Vec<EpochMetrics>,
    pub end: TrainEnd,
}

/// Registers every trainable tensor: shared tables first, then the three
/// models, all drawn from one rng so layout and values are seed-determined.
pub fn init_params(cfg: &Config, n_words: usize, rng: &mut impl Rng) -> ParamStore {
    let mut ps = ParamStore::new();
    lm::shared_init(&mut ps, cfg, n_words, CharVocab.len(), rng);
    lm::lm_init(&mut ps, cfg, n_words, rng);
    if cfg.train_pm {
        meter::pm_init(&mut ps, cfg, rng);
    }
    if cfg.train_rm {
        rhyme::rm_init(&mut ps, cfg, rng);
    }
    ps
}

/// Overwrites the word-embedding table with pretrained rows.
pub fn set_pretrained_embeddings(ps: &mut ParamStore, matrix: &[Vec<f64>]) -> Result<()> {
    let t = ps.get_mut("shared.wemb");
    if matrix.len() != t.shape[0] {
        return Err(SonnetError::Data(format!(
            "pretrained matrix has {} rows, embedding table {}",
            matrix.len(),
            t.shape[0]
        )));
    }
    let dim = t.shape[1];
    for (r, row) in matrix.iter().enumerate() {
        if row.len() != dim {
            return Err(SonnetError::Data(format!(
                "pretrained row {r} has {} values, embedding dim is {dim}",
                row.len()
            )));
        }
        t.data[r * dim..(r + 1) * dim].copy_from_slice(row);
    }
    Ok(())
}

/// Mean losses of one split, dropout off: per-token LM NLL, per-line stress
/// loss, per-example rhyme loss. Disabled models report 0.
pub struct SplitLosses {
    pub lm: f64,
    pub pm: f64,
    pub rm: f64,
}

impl SplitLosses {
    pub fn total(&self) -> f64 {
        self.lm + self.pm + self.rm
    }
}

pub fn split_losses(
    ps: &ParamStore,
    cfg: &Config,
    vocab: &Vocab,
    sonnets: &[Sonnet],
    rm_examples: &[crate::corpus::RhymeExample],
) -> Result<SplitLosses> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut lm_total = 0.0;
    let mut lm_tokens = 0usize;
    let mut pm_total = 0.0;
    let mut pm_lines = 0usize;
    for s in sonnets {
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let wout = lm::output_matrix(&mut g, &b);
        let nll = lm::sonnet_lm_loss(&mut g, &b, cfg, vocab, &CharVocab, s, wout, false, &mut rng);
        lm_total += g.val(nll.total).data[0];
        lm_tokens += nll.tokens;
        if cfg.train_pm {
            for tokens in &s.lines {
                let line = strip_for_meter(tokens)?;
                let mut g = Graph::new();
                let b = ps.bind(&mut g);
                let (loss, _) = meter::pentameter_loss(&mut g, &b, cfg, &line, false, &mut rng)?;
                pm_total += g.val(loss.l_pm).data[0];
                pm_lines += 1;
            }
        }
    }
    let rm = if cfg.train_rm && !rm_examples.is_empty() {
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let loss = rhyme::rhyme_batch_loss(&mut g, &b, cfg, rm_examples, false, &mut rng);
        g.val(loss).data[0]
    } else {
        0.0
    };
    Ok(SplitLosses {
        lm: lm_total / lm_tokens.max(1) as f64,
        pm: if pm_lines > 0 { pm_total / pm_lines as f64 } else { 0.0 },
        rm,
    })
}

fn check_finite(what: &str, v: f64, epoch: usize) -> std::result::Result<(), TrainEnd> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(TrainEnd::NumericAbort {
            epoch,
            detail: format!("{what} loss became {v}"),
        })
    }
}

/// Runs the full schedule. `pretrained` replaces the word-embedding init when
/// given. `on_epoch` sees each metrics row next to the weights as they stand
/// after the reset rule.
pub fn train_joint(
    cfg: &Config,
    vocab: &Vocab,
    train: &[Sonnet],
    dev: &[Sonnet],
    pretrained: Option<&[Vec<f64>]>,
    mut on_epoch: impl FnMut(&EpochMetrics, &ParamStore),
) -> Result<TrainResult> {
    if train.is_empty() {
        return Err(SonnetError::Data("no training sonnets".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ps = init_params(cfg, vocab.len(), &mut rng);
    if let Some(m) = pretrained {
        set_pretrained_embeddings(&mut ps, m)?;
    }
    let dev_rm_examples = rhyme::rhyme_examples_for(dev, vocab, cfg.rm_k_neg, &mut rng);

    let mut opt_lm = Adagrad::new(cfg.lm_lr);
    let mut opt_pm = Adam::new(cfg.pm_lr);
    let mut opt_rm = Adam::new(cfg.rm_lr);

    let mut last_good = ps.clone();
    let mut last_dev: Option<f64> = None;
    let mut metrics: Vec<EpochMetrics> = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let started = std::time::Instant::now();
        order.shuffle(&mut rng);
        let mut lm_sum = 0.0;
        let mut lm_tokens = 0usize;
        let mut pm_sum = 0.0;
        let mut pm_lines = 0usize;
        let mut rm_sum = 0.0;
        let mut rm_examples = 0usize;

        let mut abort: Option<TrainEnd> = None;
        'sonnets: for &si in &order {
            let sonnet = &train[si];

            let mut g = Graph::new();
            let b = ps.bind(&mut g);
            let wout = lm::output_matrix(&mut g, &b);
            let nll =
                lm::sonnet_lm_loss(&mut g, &b, cfg, vocab, &CharVocab, sonnet, wout, true, &mut rng);
            let loss = g.scale(nll.total, 1.0 / nll.tokens as f64);
            let v = g.val(loss).data[0];
            if let Err(e) = check_finite("language model", v, epoch) {
                abort = Some(e);
                break 'sonnets;
            }
            lm_sum += v * nll.tokens as f64;
            lm_tokens += nll.tokens;
            g.backward(loss);
            let mut grads = b.grads(&g);
            clip_global_norm(&mut grads, cfg.clip_norm);
            if !opt_lm.step(&mut ps, &grads) {
                abort = Some(TrainEnd::NumericAbort {
                    epoch,
                    detail: "non-finite language model gradient".into(),
                });
                break 'sonnets;
            }

            if cfg.train_pm {
                let mut g = Graph::new();
                let b = ps.bind(&mut g);
                let mut terms = Vec::with_capacity(sonnet.lines.len());
                for tokens in &sonnet.lines {
                    let line = strip_for_meter(tokens)?;
                    let (loss, _) = meter::pentameter_loss(&mut g, &b, cfg, &line, true, &mut rng)?;
                    terms.push(loss.l_pm);
                }
                let stacked = g.concat(&terms);
                let loss = g.mean(stacked);
                let v = g.val(loss).data[0];
                if let Err(e) = check_finite("stress", v, epoch) {
                    abort = Some(e);
                    break 'sonnets;
                }
                pm_sum += v * terms.len() as f64;
                pm_lines += terms.len();
                g.backward(loss);
                let mut grads = b.grads(&g);
                clip_global_norm(&mut grads, cfg.clip_norm);
                if !opt_pm.step(&mut ps, &grads) {
                    abort = Some(TrainEnd::NumericAbort {
                        epoch,
                        detail: "non-finite stress gradient".into(),
                    });
                    break 'sonnets;
                }
            }

            if cfg.train_rm {
                let examples =
                    rhyme::rhyme_examples_for(std::slice::from_ref(sonnet), vocab, cfg.rm_k_neg, &mut rng);
                if !examples.is_empty() {
                    let mut g = Graph::new();
                    let b = ps.bind(&mut g);
                    let loss = rhyme::rhyme_batch_loss(&mut g, &b, cfg, &examples, true, &mut rng);
                    let v = g.val(loss).data[0];
                    if let Err(e) = check_finite("rhyme", v, epoch) {
                        abort = Some(e);
                        break 'sonnets;
                    }
                    rm_sum += v * examples.len() as f64;
                    rm_examples += examples.len();
                    g.backward(loss);
                    let mut grads = b.grads(&g);
                    clip_global_norm(&mut grads, cfg.clip_norm);
                    if !opt_rm.step(&mut ps, &grads) {
                        abort = Some(TrainEnd::NumericAbort {
                            epoch,
                            detail: "non-finite rhyme gradient".into(),
                        });
                        break 'sonnets;
                    }
                }
            }
        }

        if let Some(end) = abort {
            return Ok(TrainResult { params: last_good, metrics, end });
        }

        let dev_losses = split_losses(&ps, cfg, vocab, dev, &dev_rm_examples)?;
        if !dev_losses.total().is_finite() {
            return Ok(TrainResult {
                params: last_good,
                metrics,
                end: TrainEnd::NumericAbort {
                    epoch,
                    detail: format!("dev loss became {}", dev_losses.total()),
                },
            });
        }
        let worsened = last_dev.is_some_and(|prev| dev_losses.total() > prev);
        if worsened {
            ps = last_good.clone();
        } else {
            last_good = ps.clone();
            last_dev = Some(dev_losses.total());
        }

        let row = EpochMetrics {
            epoch,
            train_lm: lm_sum / lm_tokens.max(1) as f64,
            train_pm: if pm_lines > 0 { pm_sum / pm_lines as f64 } else { 0.0 },
            train_rm: if rm_examples > 0 { rm_sum / rm_examples as f64 } else { 0.0 },
            dev_lm: dev_losses.lm,
            dev_pm: dev_losses.pm,
            dev_rm: dev_losses.rm,
            reset: worsened,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&row, &ps);
        metrics.push(row);
    }

    Ok(TrainResult { params: ps, metrics, end: TrainEnd::Completed })
}
