use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fairprobe::analysis::{concordance, ProbeReport};
use fairprobe::config::RunConfig;
use fairprobe::corpus::{self, Corpus};
use fairprobe::pipeline::{self, Manifest};
use fairprobe::synth::SignalSpec;
use fairprobe::Exec;

/// Identity-bias audit for text-generation services.
#[derive(Parser, Debug)]
#[command(name = "fairprobe", version, about)]
struct Cli {
    /// Run configuration (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Factor dimension the probe predicts.
    #[arg(long, global = true)]
    target: Option<String>,
    /// Features reported per group.
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Exit with status 1 when accuracy is significantly above chance.
    #[arg(long, global = true)]
    fail_on_bias: bool,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample and render prompts into `<out>/prompts.jsonl`.
    Generate {
        #[arg(long)]
        n: Option<usize>,
        /// Deal this dimension's levels evenly instead of sampling them.
        #[arg(long)]
        balanced: Option<String>,
    },
    /// Query the backend for every prompt into `<out>/corpus.jsonl`.
    Collect {
        /// Prompts file; generated from the config when omitted.
        #[arg(long)]
        prompts: Option<PathBuf>,
    },
    /// Write a synthetic labeled corpus to `<out>/corpus.jsonl`.
    Synth {
        /// Marker rate when the config has no `synth` section.
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        #[arg(long, default_value_t = 1500)]
        docs_per_group: usize,
    },
    /// Train and evaluate the probe; writes report.json and report.md.
    Probe {
        #[command(flatten)]
        input: CorpusArgs,
        /// Probe a corpus generated under a different configuration.
        #[arg(long)]
        force: bool,
    },
    /// Search responses for a term, with counts per target group.
    Concordance {
        term: String,
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long, default_value_t = 20)]
        limit: usize,
        #[arg(long, default_value_t = 60)]
        window: usize,
    },
    /// Run hallucination rules over the corpus into `<out>/findings.json`.
    Scan {
        #[command(flatten)]
        input: CorpusArgs,
    },
    /// Re-render `report.md` from a report JSON file.
    Report {
        /// Defaults to `<out>/report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct CorpusArgs {
    /// Corpus files (JSONL); defaults to `<out>/corpus.jsonl`.
    #[arg(long = "corpus")]
    corpus: Vec<PathBuf>,
    /// Skip malformed lines instead of failing.
    #[arg(long)]
    lenient: bool,
}

const EXIT_BIAS: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_FAILURE: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<fairprobe::Error>().is_some_and(|e| e.is_usage());
            ExitCode::from(if usage { EXIT_USAGE } else { EXIT_FAILURE })
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(t) = &cli.target {
        cfg.target = t.clone();
    }
    if let Some(k) = cli.top_k {
        cfg.probe.top_k = k;
    }
    Ok(cfg)
}

fn exec(cli: &Cli) -> Exec {
    if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    }
}

fn create_out(cfg: &RunConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))
}

fn corpus_paths(cfg: &RunConfig, args: &CorpusArgs) -> Vec<PathBuf> {
    if args.corpus.is_empty() {
        vec![cfg.out.join("corpus.jsonl")]
    } else {
        args.corpus.clone()
    }
}

fn load_corpus(cfg: &RunConfig, args: &CorpusArgs) -> anyhow::Result<(Corpus, Vec<PathBuf>)> {
    let paths = corpus_paths(cfg, args);
    let corpus = corpus::load(&paths, args.lenient)?;
    for (path, line, msg) in &corpus.skipped {
        log::warn!("skipped {}:{line}: {msg}", path.display());
    }
    Ok((corpus, paths))
}

/// The generation fingerprint shared by every corpus file, when recorded.
fn recorded_fingerprint(paths: &[PathBuf]) -> anyhow::Result<Option<String>> {
    let mut found = None;
    for p in paths {
        let Some(m) = Manifest::read_for(p)? else {
            return Ok(None);
        };
        match &found {
            None => found = Some(m.generation_fingerprint),
            Some(f) if *f != m.generation_fingerprint => {
                anyhow::bail!(fairprobe::Error::Config(format!(
                    "{} was generated under a different config than the other corpus files",
                    p.display()
                )))
            }
            Some(_) => {}
        }
    }
    Ok(found)
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            log::error!("writing to stdout: {e}");
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let mut cfg = load_config(cli)?;
    let exec = exec(cli);
    match &cli.command {
        Command::Generate { n, balanced } => {
            if let Some(n) = n {
                cfg.n = *n;
            }
            if balanced.is_some() {
                cfg.balanced = balanced.clone();
            }
            cfg.validate()?;
            create_out(&cfg)?;
            let items = pipeline::generate(&cfg)?;
            let path = cfg.out.join("prompts.jsonl");
            pipeline::write_prompts(&path, &items)?;
            Manifest::new("prompts", &cfg, items.len())?.write_for(&path)?;
            log::info!("wrote {} prompts to {}", items.len(), path.display());
        }
        Command::Collect { prompts } => {
            cfg.validate()?;
            create_out(&cfg)?;
            let default_prompts = cfg.out.join("prompts.jsonl");
            let source = prompts.clone().or_else(|| default_prompts.is_file().then_some(default_prompts));
            let (items, manifest) = match &source {
                Some(p) => (pipeline::read_prompts(p)?, Manifest::read_for(p)?),
                None => (pipeline::generate(&cfg)?, None),
            };
            let path = cfg.out.join("corpus.jsonl");
            let records = pipeline::collect(&cfg, &items, &path, manifest.as_ref())?;
            let failed = records.iter().filter(|r| !r.is_ok()).count();
            log::info!("{} records in {} ({failed} failed)", records.len(), path.display());
        }
        Command::Synth { rate, docs_per_group } => {
            if cfg.synth.is_none() {
                let seed = cli.seed.unwrap_or(cfg.seeds.sampling);
                cfg.synth = Some(SignalSpec::ethnicity(*rate, *docs_per_group, seed));
            }
            cfg.validate()?;
            create_out(&cfg)?;
            let path = cfg.out.join("corpus.jsonl");
            let corpus = pipeline::synth(&cfg, &path, exec)?;
            log::info!("wrote {} synthetic records to {}", corpus.len(), path.display());
        }
        Command::Probe { input, force } => {
            cfg.validate()?;
            let (corpus, paths) = load_corpus(&cfg, input)?;
            let recorded = if cli.config.is_some() {
                recorded_fingerprint(&paths)?
            } else {
                None
            };
            let run = pipeline::probe(&cfg, &corpus, recorded, *force, exec)?;
            create_out(&cfg)?;
            pipeline::write_probe_outputs(&run, &cfg.out)?;
            let o = &run.report.outcome;
            println!(
                "{} (p = {:.3e}, {})",
                run.report.headline(),
                o.p_value,
                if o.significant { "significant" } else { "not significant" }
            );
            if cli.fail_on_bias && o.significant {
                return Ok(EXIT_BIAS);
            }
        }
        Command::Concordance {
            term,
            input,
            limit,
            window,
        } => {
            let (corpus, _) = load_corpus(&cfg, input)?;
            let result = concordance(&corpus, term, &cfg.target, *window, *limit, exec)?;
            emit(&(serde_json::to_string_pretty(&result)? + "\n"));
        }
        Command::Scan { input } => {
            cfg.validate()?;
            let (corpus, _) = load_corpus(&cfg, input)?;
            let result = pipeline::scan(&cfg, &corpus, exec)?;
            create_out(&cfg)?;
            let path = cfg.out.join("findings.json");
            write_json(
                &path,
                &serde_json::json!({
                    "config_fingerprint": cfg.fingerprint()?,
                    "scan": result,
                }),
            )?;
            for s in &result.skew {
                let counts: Vec<String> = s.counts.iter().map(|(g, n)| format!("{g}: {n}")).collect();
                println!("{}: {}", s.dimension, counts.join(", "));
            }
            println!("{} findings in {} records", result.total, result.distinct_records);
        }
        Command::Report { report } => {
            let path = report.clone().unwrap_or_else(|| cfg.out.join("report.json"));
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let parsed = ProbeReport::from_json(&text)?;
            let md = parsed.to_markdown();
            let md_path = path.with_extension("md");
            std::fs::write(&md_path, &md).with_context(|| format!("writing {}", md_path.display()))?;
            emit(&md);
        }
    }
    Ok(0)
}
