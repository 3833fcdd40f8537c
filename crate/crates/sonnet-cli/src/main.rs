//! Command-line front end: corpus preparation, embedding pretraining, joint
//! training, generation, evaluation and checkpoint inspection.
//!
//! Exit codes: 0 success, 1 usage or configuration mistake, 2 unreadable or
//! inconsistent data, 3 numeric failure (training abort, generation giving
//! up).
//!
//! Commands that read a checkpoint take their configuration from it, so a
//! run stays reconstructible; `--set` overrides still apply on top. The
//! other commands read `--config`, falling back to the `SONNET_CONFIG`
//! environment variable, then to built-in defaults.

use clap::{Parser, Subcommand};
use sonnet_core::checkpoint::{load_checkpoint, save_checkpoint, dump_text, Checkpoint};
use sonnet_core::config::Config;
use sonnet_core::corpus::{
    filter_sonnets, partition, read_poems_file, read_prepared, strip_for_meter, tokenize_line,
    write_prepared, CharVocab, Sonnet, Split, Vocab,
};
use sonnet_core::embeddings::{load_embeddings, save_embeddings, train_skipgram, SgConfig};
use sonnet_core::eval::{
    evaluate, report_json, report_text, validate_report_json, EvalReport, PronDictionary,
};
use sonnet_core::generate::generate_quatrain;
use sonnet_core::lm::perplexity;
use sonnet_core::meter::{conformity_with_trace, trace_csv};
use sonnet_core::rhyme::rhyme_score;
use sonnet_core::train::{train_joint, EpochMetrics, TrainEnd};
use sonnet_core::{Result, SonnetError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sonnet", version, about = "Joint neural model of sonnet language, meter and rhyme")]
struct Cli {
    /// Configuration file (default: $SONNET_CONFIG, then built-in defaults).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. --set epochs=5. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Filter and tokenize the raw poem collection, then split it.
    Prepare,

    /// Pretrain skip-gram word embeddings on the training split.
    TrainEmbeddings {
        /// Output path (default: the embeddings_path setting).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Jointly train the language, stress and rhyme models.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint path (default: the checkpoint_path setting).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Drop character encodings from the word decoder.
        #[arg(long)]
        no_char: bool,
        /// Drop the preceding-line context encoder.
        #[arg(long)]
        no_context: bool,
        /// Train the language model alone, no stress or rhyme models.
        #[arg(long)]
        lm_only: bool,
    },

    /// Generate quatrains from a trained checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Quatrains to generate; seeds run consecutively from --seed.
        #[arg(short = 'n', long, default_value_t = 1)]
        count: usize,
        /// Force AABB, ABAB or ABBA instead of the checkpoint's setting.
        #[arg(long)]
        scheme: Option<String>,
        /// Base sampling seed (default: the checkpoint's seed).
        #[arg(long)]
        seed: Option<u64>,
        /// One JSON object per quatrain instead of text.
        #[arg(long)]
        json: bool,
    },

    /// Evaluate checkpoints on a split; several checkpoints are averaged.
    Eval {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        /// train, dev or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Expected number of checkpoints, as a guard when globbing.
        #[arg(long)]
        runs: Option<usize>,
        /// Machine-readable report instead of text.
        #[arg(long)]
        json: bool,
        /// Print the rhyme score of a "W1,W2" pair instead of a report.
        #[arg(long = "pair", value_name = "W1,W2")]
        pairs: Vec<String>,
        /// Print the stress attention of this line as CSV instead of a report.
        #[arg(long, value_name = "LINE")]
        attention: Option<String>,
    },

    /// Print a checkpoint's header and tensor inventory.
    InspectCheckpoint {
        path: PathBuf,
        /// Also print every tensor's values.
        #[arg(long)]
        full: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                SonnetError::Config(_) => 1,
                SonnetError::Numeric(_) => 3,
                _ => 2,
            })
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Prepare => cmd_prepare(&cli_config(cli)?),
        Cmd::TrainEmbeddings { out } => cmd_train_embeddings(&cli_config(cli)?, out.as_deref()),
        Cmd::Train { epochs, seed, out, no_char, no_context, lm_only } => {
            let mut cfg = cli_config(cli)?;
            if let Some(e) = epochs {
                cfg.epochs = *e;
            }
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            if *no_char {
                cfg.use_char = false;
            }
            if *no_context {
                cfg.use_context = false;
            }
            if *lm_only {
                cfg.train_pm = false;
                cfg.train_rm = false;
            }
            cmd_train(&cfg, out.as_deref())
        }
        Cmd::Generate { checkpoint, count, scheme, seed, json } => {
            let path = match checkpoint {
                Some(p) => p.clone(),
                None => PathBuf::from(&cli_config(cli)?.checkpoint_path),
            };
            cmd_generate(cli, &path, *count, scheme.as_deref(), *seed, *json)
        }
        Cmd::Eval { checkpoints, split, runs, json, pairs, attention } => {
            if let Some(r) = runs {
                if *r != checkpoints.len() {
                    return Err(SonnetError::Config(format!(
                        "--runs {r} but {} checkpoint(s) given",
                        checkpoints.len()
                    )));
                }
            }
            cmd_eval(cli, checkpoints, split, *json, pairs, attention.as_deref())
        }
        Cmd::InspectCheckpoint { path, full } => {
            let ckpt = load_checkpoint(path)?;
            print!("{}", dump_text(&ckpt, *full));
            Ok(())
        }
    }
}

fn cli_config(cli: &Cli) -> Result<Config> {
    let path = cli.config.clone().or_else(|| {
        std::env::var_os("SONNET_CONFIG")
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    });
    let mut cfg = match path {
        Some(p) => Config::load(&p)?,
        None => Config::default(),
    };
    apply_sets(&mut cfg, &cli.sets)?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_sets(cfg: &mut Config, sets: &[String]) -> Result<()> {
    for s in sets {
        let (key, value) = s.split_once('=').ok_or_else(|| {
            SonnetError::Config(format!("--set wants KEY=VALUE, got {s:?}"))
        })?;
        cfg.set(key.trim(), value.trim())?;
    }
    Ok(())
}

/// Configuration for a loaded checkpoint: its embedded config plus any
/// command-line overrides.
fn checkpoint_config(cli: &Cli, ckpt: &Checkpoint) -> Result<Config> {
    let mut cfg = ckpt.config.clone();
    apply_sets(&mut cfg, &cli.sets)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Rebuilds the vocabulary from the prepared corpus and checks it is the one
/// the checkpoint was trained on.
fn model_data(cfg: &Config, ckpt: &Checkpoint) -> Result<(Vocab, Split)> {
    let (_, split) = read_prepared(Path::new(&cfg.prepared_dir))?;
    let vocab = Vocab::build(&split.train, cfg.min_freq)?;
    if vocab.hash() != ckpt.vocab_hash {
        return Err(SonnetError::Data(format!(
            "prepared corpus in {} gives vocabulary hash {:016x}, checkpoint wants {:016x}; \
             rerun prepare with the original corpus and settings",
            cfg.prepared_dir,
            vocab.hash(),
            ckpt.vocab_hash
        )));
    }
    Ok((vocab, split))
}

fn word_count(sonnets: &[Sonnet]) -> usize {
    sonnets
        .iter()
        .map(|s| (0..s.lines.len()).map(|i| s.words_of_line(i).len()).sum::<usize>())
        .sum()
}

fn cmd_prepare(cfg: &Config) -> Result<()> {
    let poems = read_poems_file(Path::new(&cfg.corpus_path))?;
    let sonnets = filter_sonnets(&poems);
    if sonnets.is_empty() {
        return Err(SonnetError::Data(format!(
            "none of the {} poems in {} survived the sonnet filter",
            poems.len(),
            cfg.corpus_path
        )));
    }
    let split = partition(sonnets.clone(), cfg.split_ratios(), cfg.seed)?;
    write_prepared(Path::new(&cfg.prepared_dir), &sonnets, &split)?;
    println!(
        "{} poems read, {} sonnets kept, files written to {}",
        poems.len(),
        sonnets.len(),
        cfg.prepared_dir
    );
    println!();
    println!("{:<10} {:>9} {:>8}", "Partition", "#Sonnets", "#Words");
    for (name, part) in [("Train", &split.train), ("Dev", &split.dev), ("Test", &split.test)] {
        println!("{:<10} {:>9} {:>8}", name, part.len(), word_count(part));
    }
    Ok(())
}

fn cmd_train_embeddings(cfg: &Config, out: Option<&Path>) -> Result<()> {
    let (_, split) = read_prepared(Path::new(&cfg.prepared_dir))?;
    let vocab = Vocab::build(&split.train, cfg.min_freq)?;
    let lines: Vec<Vec<usize>> = split
        .train
        .iter()
        .flat_map(|s| {
            (0..s.lines.len())
                .map(|i| s.words_of_line(i).iter().map(|w| vocab.id_of(w)).collect())
                .collect::<Vec<_>>()
        })
        .collect();
    let sg = SgConfig {
        dim: cfg.word_dim,
        window: cfg.emb_window,
        k_neg: cfg.emb_k_neg,
        epochs: cfg.emb_epochs,
        lr: cfg.emb_lr,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let got = train_skipgram(&lines, vocab.len(), &sg, &mut rng)?;
    for (i, loss) in got.epoch_losses.iter().enumerate() {
        println!("epoch {:>3}  pair loss {loss:.4}", i + 1);
    }
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.embeddings_path));
    save_embeddings(&path, &vocab, &got.vectors)?;
    println!(
        "wrote {} vectors of dimension {} to {}",
        vocab.len(),
        cfg.word_dim,
        path.display()
    );
    Ok(())
}

fn metrics_line(m: &EpochMetrics) -> String {
    format!(
        "epoch {:>3}  train lm {:.3} pm {:.3} rm {:.3}  dev lm {:.3} pm {:.3} rm {:.3} total {:.3}{}  {:.1}s",
        m.epoch,
        m.train_lm,
        m.train_pm,
        m.train_rm,
        m.dev_lm,
        m.dev_pm,
        m.dev_rm,
        m.dev_total(),
        if m.reset { "  reset" } else { "" },
        m.seconds
    )
}

fn cmd_train(cfg: &Config, out: Option<&Path>) -> Result<()> {
    let (_, split) = read_prepared(Path::new(&cfg.prepared_dir))?;
    let vocab = Vocab::build(&split.train, cfg.min_freq)?;
    let pretrained = if Path::new(&cfg.embeddings_path).exists() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (matrix, missing) =
            load_embeddings(Path::new(&cfg.embeddings_path), &vocab, &mut rng)?;
        if missing > 0 {
            eprintln!("note: {missing} vocabulary words not in the embeddings file, kept random");
        }
        Some(matrix)
    } else {
        eprintln!(
            "note: no embeddings file at {}, starting from random embeddings",
            cfg.embeddings_path
        );
        None
    };
    println!(
        "training on {} sonnets ({} dev), vocabulary {}, {} epochs",
        split.train.len(),
        split.dev.len(),
        vocab.len(),
        cfg.epochs
    );
    let result = train_joint(cfg, &vocab, &split.train, &split.dev, pretrained.as_deref(), |m, _| {
        println!("{}", metrics_line(m));
    })?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.checkpoint_path));
    save_checkpoint(
        &path,
        &Checkpoint {
            seed: cfg.seed,
            vocab_hash: vocab.hash(),
            config: cfg.clone(),
            params: result.params,
        },
    )?;
    println!("checkpoint written to {}", path.display());
    match result.end {
        TrainEnd::Completed => Ok(()),
        TrainEnd::NumericAbort { epoch, detail } => Err(SonnetError::Numeric(format!(
            "aborted at epoch {epoch} ({detail}); checkpoint holds the last good weights"
        ))),
    }
}

fn cmd_generate(
    cli: &Cli,
    path: &Path,
    count: usize,
    scheme: Option<&str>,
    seed: Option<u64>,
    json: bool,
) -> Result<()> {
    let ckpt = load_checkpoint(path)?;
    let mut cfg = checkpoint_config(cli, &ckpt)?;
    if let Some(s) = scheme {
        cfg.gen_scheme = s.to_string();
        cfg.validate()?;
    }
    let (vocab, _) = model_data(&cfg, &ckpt)?;
    let base = seed.unwrap_or(cfg.seed);
    let mut failures = 0usize;
    for i in 0..count {
        let seed = base.wrapping_add(i as u64);
        match generate_quatrain(&ckpt.params, &cfg, &vocab, seed) {
            Ok(out) => {
                if json {
                    let lines: Vec<String> = out.lines.iter().map(|l| l.join(" ")).collect();
                    println!(
                        "{}",
                        serde_json::json!({
                            "quatrain": i + 1,
                            "seed": seed,
                            "scheme": out.meta.scheme,
                            "restarts": out.meta.restarts,
                            "lines": lines,
                            "end_words": out.meta.end_words,
                            "line_pm": out.meta.line_pm,
                            "candidate_pm": out.meta.candidate_pm,
                            "pair_scores": out.meta.pair_scores,
                        })
                    );
                } else {
                    println!(
                        "# quatrain {} (scheme {}, seed {}, {} restarts)",
                        i + 1,
                        out.meta.scheme,
                        seed,
                        out.meta.restarts
                    );
                    for line in &out.lines {
                        println!("{}", line.join(" "));
                    }
                    println!();
                }
            }
            Err(e) => {
                failures += 1;
                if json {
                    println!(
                        "{}",
                        serde_json::json!({ "quatrain": i + 1, "seed": seed, "error": e.to_string() })
                    );
                } else {
                    eprintln!("quatrain {}: {e}", i + 1);
                }
            }
        }
    }
    if failures > 0 {
        Err(SonnetError::Numeric(format!(
            "{failures} of {count} quatrains gave up; loosen the rhyme thresholds or train longer"
        )))
    } else {
        Ok(())
    }
}

fn split_of<'a>(split: &'a Split, name: &str) -> Result<&'a [Sonnet]> {
    match name {
        "train" => Ok(&split.train),
        "dev" => Ok(&split.dev),
        "test" => Ok(&split.test),
        other => Err(SonnetError::Config(format!(
            "unknown split {other:?}, expected train, dev or test"
        ))),
    }
}

fn cmd_eval(
    cli: &Cli,
    paths: &[PathBuf],
    split_name: &str,
    json: bool,
    pairs: &[String],
    attention: Option<&str>,
) -> Result<()> {
    let ckpts: Vec<Checkpoint> = paths.iter().map(|p| load_checkpoint(p)).collect::<Result<_>>()?;

    if !pairs.is_empty() {
        for spec in pairs {
            let (w1, w2) = spec.split_once(',').ok_or_else(|| {
                SonnetError::Config(format!("--pair wants W1,W2, got {spec:?}"))
            })?;
            let (w1, w2) = (w1.trim(), w2.trim());
            let mut total = 0.0;
            for ckpt in &ckpts {
                let cfg = checkpoint_config(cli, ckpt)?;
                total += rhyme_score(&ckpt.params, &cfg, w1, w2);
            }
            println!("{w1} {w2} {:.3}", total / ckpts.len() as f64);
        }
        return Ok(());
    }

    if let Some(text) = attention {
        let ckpt = &ckpts[0];
        let cfg = checkpoint_config(cli, ckpt)?;
        let meter_line = strip_for_meter(&tokenize_line(text))?;
        let (loss, trace) = conformity_with_trace(&ckpt.params, &cfg, &meter_line)?;
        eprintln!("conformity loss {loss:.3}");
        print!("{}", trace_csv(&trace));
        return Ok(());
    }

    let mut reports: Vec<EvalReport> = Vec::new();
    for ckpt in &ckpts {
        let cfg = checkpoint_config(cli, ckpt)?;
        let (vocab, split) = model_data(&cfg, ckpt)?;
        let sonnets = split_of(&split, split_name)?;
        let dict_path = Path::new(&cfg.dict_path);
        if !dict_path.exists() {
            eprintln!(
                "warning: no dictionary at {}; stress and rhyme sections skipped",
                dict_path.display()
            );
            let ppl = perplexity(&ckpt.params, &cfg, &vocab, &CharVocab, sonnets);
            if json {
                println!("{}", serde_json::json!({ "perplexity": ppl }));
            } else {
                println!("Perplexity        {ppl:.3}");
            }
            continue;
        }
        let dict = PronDictionary::load(dict_path)?;
        reports.push(evaluate(&ckpt.params, &cfg, &vocab, sonnets, &dict)?);
    }

    match reports.as_slice() {
        [] => Ok(()),
        [report] => {
            if json {
                let text = report_json(report)?;
                validate_report_json(&text)?;
                println!("{text}");
            } else {
                print!("{}", report_text(report));
            }
            Ok(())
        }
        many => {
            let n = many.len() as f64;
            let mean = |f: &dyn Fn(&EvalReport) -> f64| many.iter().map(|r| f(r)).sum::<f64>() / n;
            let ppl = mean(&|r| r.perplexity);
            let acc = mean(&|r| r.stress.accuracy);
            let f1 = mean(&|r| r.rhyme.model.f1);
            let bl = mean(&|r| r.rhyme.baseline.f1);
            if json {
                let runs: Vec<serde_json::Value> = many
                    .iter()
                    .map(|r| serde_json::to_value(r).expect("report serializes"))
                    .collect();
                println!(
                    "{}",
                    serde_json::json!({
                        "runs": many.len(),
                        "mean": {
                            "perplexity": ppl,
                            "stress_accuracy": acc,
                            "rhyme_f1": f1,
                            "baseline_f1": bl,
                        },
                        "reports": runs,
                    })
                );
            } else {
                println!("Averages over {} runs", many.len());
                println!("  Ppl          {ppl:.3}");
                println!("  Stress Acc   {acc:.3}");
                println!("  Rhyme F1     {f1:.3}");
                println!("  Rhyme-BL F1  {bl:.3}");
            }
            Ok(())
        }
    }
}
