//! Run configuration: every hyperparameter of every module plus data paths,
//! serialized as flat `key = value` lines. A checkpoint header embeds the
//! full serialization, so a run is reconstructible from config + seed.

use crate::error::{Result, SonnetError};
use std::path::Path;

macro_rules! config {
    ($(($field:ident, $key:literal, $ty:ty, $default:expr, $doc:literal)),* $(,)?) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct Config {
            $(#[doc = $doc] pub $field: $ty,)*
        }

        impl Default for Config {
            fn default() -> Config {
                Config { $($field: $default,)* }
            }
        }

        impl Config {
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $(out.push_str(&format!("{} = {}\n", $key, ValueText::to_text(&self.$field)));)*
                out
            }

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$field = ValueText::from_text(value).ok_or_else(|| {
                            SonnetError::Config(format!("bad value {value:?} for key {key}"))
                        })?;
                        Ok(())
                    })*
                    _ => Err(SonnetError::Config(format!("unknown config key {key:?}"))),
                }
            }

            /// `(key, default, description)` for every setting.
            pub fn describe() -> Vec<(&'static str, String, &'static str)> {
                let d = Config::default();
                vec![$(($key, ValueText::to_text(&d.$field), $doc)),*]
            }
        }
    };
}

trait ValueText: Sized {
    fn to_text(&self) -> String;
    fn from_text(s: &str) -> Option<Self>;
}

impl ValueText for usize {
    fn to_text(&self) -> String {
        self.to_string()
    }
    fn from_text(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ValueText for u64 {
    fn to_text(&self) -> String {
        self.to_string()
    }
    fn from_text(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ValueText for f64 {
    fn to_text(&self) -> String {
        let t = format!("{self}");
        if t.contains('.') || t.contains('e') || t.contains("inf") || t.contains("nan") {
            t
        } else {
            format!("{t}.0")
        }
    }
    fn from_text(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ValueText for bool {
    fn to_text(&self) -> String {
        self.to_string()
    }
    fn from_text(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ValueText for String {
    fn to_text(&self) -> String {
        self.clone()
    }
    fn from_text(s: &str) -> Option<Self> {
        Some(s.to_string())
    }
}

config! {
    (seed, "seed", u64, 42, "Master RNG seed for init, dropout, splits, sampling."),

    (min_freq, "min_freq", u64, 2, "Words below this training frequency map to the unknown token."),
    (train_ratio, "train_ratio", f64, 0.8, "Fraction of filtered sonnets in the training split."),
    (dev_ratio, "dev_ratio", f64, 0.1, "Fraction in the development split."),
    (test_ratio, "test_ratio", f64, 0.1, "Fraction in the test split."),

    (word_dim, "word_dim", usize, 100, "Word embedding size."),
    (char_dim, "char_dim", usize, 50, "Character embedding size."),
    (char_hidden, "char_hidden", usize, 50, "Character biLSTM hidden size per direction."),
    (enc_hidden, "enc_hidden", usize, 200, "Context encoder biLSTM hidden size per direction."),
    (dec_hidden, "dec_hidden", usize, 400, "Word decoder LSTM hidden size."),
    (lm_attn_dim, "lm_attn_dim", usize, 200, "Hidden size of the context attention scorer."),
    (context_lines, "context_lines", usize, 3, "Preceding lines fed to the context encoder."),
    (use_char, "use_char", bool, true, "Feed character encodings to the word decoder."),
    (use_context, "use_context", bool, true, "Encode and attend to preceding lines."),
    (dropout, "dropout", f64, 0.3, "Dropout on LSTM outputs and embedding lookups."),

    (pm_dec_hidden, "pm_dec_hidden", usize, 100, "Stress decoder LSTM hidden size."),
    (pm_attn_dim, "pm_attn_dim", usize, 100, "Hidden size of the stress attention and position scorers."),
    (pm_sigma, "pm_sigma", f64, 2.0, "Gaussian window standard deviation, in characters."),
    (pm_alpha, "pm_alpha", f64, 1.0, "Weight of the repeat penalty."),
    (pm_beta, "pm_beta", f64, 1.0, "Weight of the vowel coverage penalty."),
    (pm_coverage, "pm_coverage", f64, 0.6, "Minimum attention a vowel must accumulate to avoid penalty."),

    (rm_hidden, "rm_hidden", usize, 100, "Rhyme character LSTM hidden size."),
    (rm_margin, "rm_margin", f64, 0.5, "Margin between the best and second-best cosine."),
    (rm_k_neg, "rm_k_neg", usize, 2, "Extra negative reference words per rhyme example."),

    (lm_lr, "lm_lr", f64, 0.05, "Adagrad learning rate for the language model step."),
    (pm_lr, "pm_lr", f64, 0.001, "Adam learning rate for the stress model step."),
    (rm_lr, "rm_lr", f64, 0.001, "Adam learning rate for the rhyme model step."),
    (clip_norm, "clip_norm", f64, 5.0, "Global gradient-norm clip applied before each step."),
    (epochs, "epochs", usize, 30, "Training epochs; weights reset when dev loss worsens."),
    (train_pm, "train_pm", bool, true, "Train the stress model (false for LM-only runs)."),
    (train_rm, "train_rm", bool, true, "Train the rhyme model (false for LM-only runs)."),

    (emb_window, "emb_window", usize, 5, "Skip-gram context window."),
    (emb_k_neg, "emb_k_neg", usize, 5, "Skip-gram negative samples per positive."),
    (emb_epochs, "emb_epochs", usize, 5, "Skip-gram training epochs."),
    (emb_lr, "emb_lr", f64, 0.025, "Skip-gram starting learning rate, linearly decayed."),

    (gen_temperature, "gen_temperature", f64, 0.7, "Word sampling temperature (0.6..0.8 band)."),
    (gen_candidates, "gen_candidates", usize, 10, "Candidate lines drawn per emitted line."),
    (gen_select_temperature, "gen_select_temperature", f64, 0.1, "Temperature of the conformity-based line selector."),
    (gen_rhyme_accept, "gen_rhyme_accept", f64, 0.9, "Minimum cosine for a mandated rhyme pair."),
    (gen_nonrhyme_accept, "gen_nonrhyme_accept", f64, 0.7, "Maximum cosine for a mandated non-pair."),
    (gen_resample_cap, "gen_resample_cap", usize, 1000, "Consecutive rejected draws before a quatrain restart."),
    (gen_restart_budget, "gen_restart_budget", usize, 50, "Quatrain restarts before giving up."),
    (gen_scheme, "gen_scheme", String, "random".to_string(), "Rhyme scheme: AABB, ABAB, ABBA or random."),
    (gen_max_words, "gen_max_words", usize, 15, "Hard cap on words per generated line."),
    (gen_min_words, "gen_min_words", usize, 6, "Line end is not accepted before this many words."),

    (eval_rhyme_threshold, "eval_rhyme_threshold", f64, 0.8, "Cosine at or above which a pair counts as predicted rhyming."),
    (eval_stress_threshold, "eval_stress_threshold", f64, 0.2, "Attention a character needs for its word to receive a stress."),
    (eval_error_table_k, "eval_error_table_k", usize, 10, "Rows per side of the rhyme error table."),

    (corpus_path, "corpus_path", String, "data/shakespeare_sonnets.txt".to_string(), "Raw poem collection."),
    (prepared_dir, "prepared_dir", String, "prepared".to_string(), "Output of the prepare step."),
    (dict_path, "dict_path", String, "data/cmudict_subset.dict".to_string(), "Pronunciation dictionary."),
    (embeddings_path, "embeddings_path", String, "embeddings.txt".to_string(), "Pretrained word embeddings."),
    (checkpoint_path, "checkpoint_path", String, "model.ckpt".to_string(), "Checkpoint to write or read."),
}

impl Config {
    pub fn parse_text(text: &str, origin: &Path) -> Result<Config> {
        let mut cfg = Config::default();
        cfg.apply_text(text, origin)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(SonnetError::parse(
                    origin,
                    ln + 1,
                    format!("expected 'key = value', got {line:?}"),
                ));
            };
            self.set(key.trim(), value.trim())
                .map_err(|e| SonnetError::parse(origin, ln + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| SonnetError::io(path, e))?;
        Config::parse_text(&text, path)
    }

    pub fn split_ratios(&self) -> [f64; 3] {
        [self.train_ratio, self.dev_ratio, self.test_ratio]
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.pm_sigma > 0.0, "pm_sigma must be positive"),
            (self.pm_alpha >= 0.0, "pm_alpha must be nonnegative"),
            (self.pm_beta >= 0.0, "pm_beta must be nonnegative"),
            (
                self.pm_coverage > 0.0 && self.pm_coverage <= 10.0,
                "pm_coverage must be in (0, 10]",
            ),
            (self.rm_margin > 0.0, "rm_margin must be positive"),
            ((0.0..1.0).contains(&self.dropout), "dropout must be in [0, 1)"),
            (
                self.gen_nonrhyme_accept < self.gen_rhyme_accept,
                "gen_nonrhyme_accept must be below gen_rhyme_accept",
            ),
            (self.gen_resample_cap >= 1, "gen_resample_cap must be at least 1"),
            (
                matches!(self.gen_scheme.as_str(), "AABB" | "ABAB" | "ABBA" | "random"),
                "gen_scheme must be AABB, ABAB, ABBA or random",
            ),
            (self.min_freq >= 1, "min_freq must be at least 1"),
            (self.word_dim > 0, "word_dim must be positive"),
            (self.gen_min_words <= self.gen_max_words, "gen_min_words must not exceed gen_max_words"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(SonnetError::Config(msg.into()));
            }
        }
        Ok(())
    }
}
