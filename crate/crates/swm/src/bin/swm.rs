//! Command-line front end: validate/synthesize/split corpora, train a
//! window model, predict annotations, evaluate, and project BIO tags.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use swm::annotation::{flatten_phrases, serialize_annotation, AnnotatedSentence};
use swm::corpus::{
    default_grammar, generate_synthetic, load_corpus, save_corpus, scan_corpus, split_corpus,
    Corpus, SynthGrammar,
};
use swm::encoder::{EncoderConfig, Vocab};
use swm::metrics::{evaluate, project_bio, BioLevel};
use swm::model::SwmModel;
use swm::train::{corpus_f1, predict_forest, train_epoch, TrainConfig};

#[derive(Parser)]
#[command(name = "swm", about = "Nested phrase recognition via anchor windows")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check an annotated corpus; exit 1 if any line is rejected.
    Validate { corpus: PathBuf },
    /// Generate sentences from a grammar JSON file ("default" for the
    /// built-in grammar).
    Synth {
        grammar: String,
        count: usize,
        seed: u64,
        out: PathBuf,
    },
    /// Shuffle and split a corpus into train/dev/test files.
    Split {
        corpus: PathBuf,
        /// Comma-separated ratios summing to 1, e.g. 0.8,0.1,0.1.
        ratios: String,
        seed: u64,
        outdir: PathBuf,
    },
    /// Train a model, reporting per-epoch loss and dev F1.
    Train {
        train: PathBuf,
        dev: PathBuf,
        /// Hyperparameter JSON ("default" for built-in defaults).
        config: String,
        model_out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config proposal threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Annotate plain-text lines; writes bracket notation plus a
    /// `<out>.spans.json` sidecar.
    Predict {
        model: PathBuf,
        input: PathBuf,
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Evaluate a model on an annotated corpus; metric report JSON on
    /// stdout.
    Eval {
        model: PathBuf,
        test: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Also write the report to this path.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// Project gold trees to per-character BIO tags, one line per
    /// sentence.
    ProjectBio {
        corpus: PathBuf,
        #[arg(value_parser = clap::value_parser!(BioLevel))]
        level: BioLevel,
        out: PathBuf,
    },
}

fn log_info(msg: &str) {
    match std::env::var("PW_LOG").as_deref() {
        Ok("quiet") => {}
        _ => eprintln!("{msg}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Cmd) -> Result<ExitCode, String> {
    match cmd {
        Cmd::Validate { corpus } => {
            let (loaded, diagnostics) = scan_corpus(&corpus).map_err(|e| e.to_string())?;
            for d in &diagnostics {
                println!("{d}");
            }
            if diagnostics.is_empty() {
                log_info(&format!("ok: {} sentences", loaded.sentences.len()));
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Cmd::Synth {
            grammar,
            count,
            seed,
            out,
        } => {
            let grammar = load_grammar(&grammar)?;
            log_info(&format!("synth: count={count} seed={seed}"));
            let corpus = generate_synthetic(&grammar, count, seed).map_err(|e| e.to_string())?;
            save_corpus(&corpus, &out).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Split {
            corpus,
            ratios,
            seed,
            outdir,
        } => {
            let parts: Vec<f64> = ratios
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()?;
            let [rt, rd, rs] = parts[..] else {
                return Err(format!("expected three ratios, got '{ratios}'"));
            };
            let (loaded, diagnostics) = load_corpus(&corpus).map_err(|e| e.to_string())?;
            for d in &diagnostics {
                eprintln!("skipped {d}");
            }
            log_info(&format!("split: ratios={rt},{rd},{rs} seed={seed}"));
            let (train, dev, test) =
                split_corpus(&loaded, (rt, rd, rs), seed).map_err(|e| e.to_string())?;
            fs::create_dir_all(&outdir).map_err(|e| e.to_string())?;
            for (part, name) in [(&train, "train.txt"), (&dev, "dev.txt"), (&test, "test.txt")] {
                save_corpus(part, &outdir.join(name)).map_err(|e| e.to_string())?;
            }
            log_info(&format!(
                "wrote {} train / {} dev / {} test",
                train.sentences.len(),
                dev.sentences.len(),
                test.sentences.len()
            ));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Train {
            train,
            dev,
            config,
            model_out,
            seed,
            threshold,
        } => {
            let mut cfg = load_train_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(threshold) = threshold {
                cfg.threshold = threshold;
            }
            log_info(&format!(
                "config: {}",
                serde_json::to_string(&cfg).map_err(|e| e.to_string())?
            ));
            let train_set = load_strict(&train)?;
            let dev_set = load_strict(&dev)?;
            let vocab: String = train_set.sentences.iter().map(|s| s.text()).collect();
            let enc_cfg = EncoderConfig {
                embed_dim: cfg.embed_dim,
                hidden_dim: cfg.hidden_dim,
                vocab: Vocab::from_chars(vocab.chars()),
            };
            let mut model =
                SwmModel::init(&cfg.encoder, &enc_cfg, cfg.seed).map_err(|e| e.to_string())?;
            for epoch in 0..cfg.epochs {
                let stats = train_epoch(&train_set.sentences, &mut model, &cfg, epoch)
                    .map_err(|e| e.to_string())?;
                let f1 = corpus_f1(&dev_set.sentences, &model, cfg.threshold)
                    .map_err(|e| e.to_string())?;
                println!(
                    "epoch {epoch}: loss {:.6} dev_f1 {:.4} ({:.1}s)",
                    stats.mean_total, f1, stats.seconds
                );
                if cfg.early_stop_f1.is_some_and(|target| f1 >= target) {
                    log_info(&format!("early stop: dev F1 {f1:.4} reached target"));
                    break;
                }
            }
            model.save(&model_out).map_err(|e| e.to_string())?;
            log_info(&format!("model written to {}", model_out.display()));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Predict {
            model,
            input,
            out,
            threshold,
        } => {
            let model = SwmModel::load(&model).map_err(|e| e.to_string())?;
            log_info(&format!(
                "predict: encoder={} threshold={threshold}",
                model.encoder_name
            ));
            let text = fs::read_to_string(&input).map_err(|e| e.to_string())?;
            let mut lines = Vec::new();
            let mut records = Vec::new();
            for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
                let chars: Vec<char> = line.trim().chars().collect();
                let forest =
                    predict_forest(&chars, &model, threshold).map_err(|e| e.to_string())?;
                lines.push(serialize_annotation(&forest).map_err(|e| e.to_string())?);
                records.push(SpanRecord::new(i + 1, &forest));
            }
            fs::write(&out, lines.join("\n") + "\n").map_err(|e| e.to_string())?;
            let sidecar = out.with_extension("spans.json");
            let json = serde_json::to_string_pretty(&records).map_err(|e| e.to_string())?;
            fs::write(&sidecar, json + "\n").map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Eval {
            model,
            test,
            threshold,
            metrics_out,
        } => {
            let model = SwmModel::load(&model).map_err(|e| e.to_string())?;
            let test_set = load_strict(&test)?;
            log_info(&format!(
                "eval: encoder={} threshold={threshold} sentences={}",
                model.encoder_name,
                test_set.sentences.len()
            ));
            let mut pred = Vec::new();
            let mut gold = Vec::new();
            for s in &test_set.sentences {
                let forest =
                    predict_forest(&s.chars, &model, threshold).map_err(|e| e.to_string())?;
                pred.push(flatten_phrases(&forest));
                gold.push(flatten_phrases(s));
            }
            let report = evaluate(&pred, &gold).map_err(|e| e.to_string())?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            println!("{json}");
            if let Some(path) = metrics_out {
                fs::write(&path, json + "\n").map_err(|e| e.to_string())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::ProjectBio { corpus, level, out } => {
            let loaded = load_strict(&corpus)?;
            let mut lines = Vec::new();
            for s in &loaded.sentences {
                let tags = project_bio(s, level);
                let words: Vec<String> = tags.iter().map(|t| t.to_string()).collect();
                lines.push(words.join(" "));
            }
            fs::write(&out, lines.join("\n") + "\n").map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[derive(Serialize)]
struct SpanRecord {
    line: usize,
    text: String,
    phrases: Vec<PhraseRecord>,
}

#[derive(Serialize)]
struct PhraseRecord {
    start: usize,
    end: usize,
    #[serde(rename = "type")]
    kind: String,
}

impl SpanRecord {
    fn new(line: usize, forest: &AnnotatedSentence) -> SpanRecord {
        SpanRecord {
            line,
            text: forest.text(),
            phrases: flatten_phrases(forest)
                .into_iter()
                .map(|(span, kind)| PhraseRecord {
                    start: span.start,
                    end: span.end,
                    kind: kind.short_name().to_string(),
                })
                .collect(),
        }
    }
}

fn load_grammar(arg: &str) -> Result<SynthGrammar, String> {
    if arg == "default" {
        Ok(default_grammar())
    } else {
        SynthGrammar::load(std::path::Path::new(arg)).map_err(|e| e.to_string())
    }
}

fn load_train_config(arg: &str) -> Result<TrainConfig, String> {
    if arg == "default" {
        Ok(TrainConfig::default())
    } else {
        let text = fs::read_to_string(arg).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }
}

/// Load a corpus for training/evaluation, refusing files with bad lines.
fn load_strict(path: &std::path::Path) -> Result<Corpus, String> {
    let (corpus, diagnostics) = load_corpus(path).map_err(|e| e.to_string())?;
    if !diagnostics.is_empty() {
        return Err(format!(
            "{}: {} bad line(s), first: {}",
            path.display(),
            diagnostics.len(),
            diagnostics[0]
        ));
    }
    Ok(corpus)
}
