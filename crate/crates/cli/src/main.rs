use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mpe::datasets::{write_corpus, FeatureCache, Manifest, SynthConfig};
use mpe::signal::HcqtParams;
use mpe::splits::{get_split, validate_split, Partition, SPLIT_NAMES};
use mpe_cli::pipeline::{evaluate_run, extract_features, train_experiment};
use mpe_cli::report::{collect_reports, write_report};
use mpe_cli::{ExperimentConfig, ModelSpec, CACHE_ENV};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "mpe", version, about = "Frame-level multi-pitch estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic corpus with exact note tables and a manifest.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        /// TOML file with generator settings; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        validation: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        max_polyphony: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute HCQT features and piano rolls for every manifest track.
    ExtractFeatures {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, env = CACHE_ENV)]
        cache: Option<PathBuf>,
        #[arg(long, default_value_t = HcqtParams::default().compression)]
        compression: f64,
    },
    /// Resolve named splits against a manifest, validate them and write one
    /// table per split.
    MakeSplits {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Splits to resolve; all published splits by default.
        #[arg(long = "split")]
        splits: Vec<String>,
    },
    /// Train and evaluate one model per seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds replacing `seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Model preset replacing the configured model.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        batches_per_epoch: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        train_patch_target: Option<usize>,
        /// Mix fresh entropy into each seed.
        #[arg(long)]
        non_deterministic: bool,
    },
    /// Re-evaluate run directories from their stored config and checkpoint.
    Evaluate {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Tables, variance summaries and charts from evaluated runs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print an experiment config with every default filled in.
    DefaultConfig,
}

#[derive(Serialize)]
struct Failure {
    item: String,
    error: String,
}

fn write_failures(path: &PathBuf, failures: &[Failure]) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(failures)?).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::SynthCorpus { out, config, train, validation, test, duration, max_polyphony, seed } => {
            let mut cfg = match config {
                Some(p) => toml::from_str(&fs::read_to_string(&p)?).with_context(|| format!("parsing {}", p.display()))?,
                None => SynthConfig::default(),
            };
            cfg.train_tracks = train.unwrap_or(cfg.train_tracks);
            cfg.validation_tracks = validation.unwrap_or(cfg.validation_tracks);
            cfg.test_tracks = test.unwrap_or(cfg.test_tracks);
            cfg.duration_seconds = duration.unwrap_or(cfg.duration_seconds);
            cfg.max_polyphony = max_polyphony.unwrap_or(cfg.max_polyphony);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let manifest = write_corpus(&out, &cfg)?;
            fs::write(out.join("synth.toml"), toml::to_string_pretty(&cfg)?)?;
            println!("wrote {} tracks to {}", manifest.len(), out.display());
            Ok(true)
        }
        Command::ExtractFeatures { manifest, cache, compression } => {
            let m = Manifest::load(&manifest)?;
            let root = cache.unwrap_or_else(|| manifest.parent().unwrap_or(".".as_ref()).join("cache"));
            let summary = extract_features(&m, &FeatureCache::new(&root), &HcqtParams { compression });
            fs::create_dir_all(&root)?;
            fs::write(root.join("extract_summary.json"), serde_json::to_string_pretty(&summary)?)?;
            println!(
                "{} written, {} up to date, {} failed",
                summary.written.len(),
                summary.skipped.len(),
                summary.failed.len()
            );
            for (id, e) in &summary.failed {
                eprintln!("{id}: {e}");
            }
            Ok(summary.failed.is_empty())
        }
        Command::MakeSplits { manifest, out, splits } => {
            let m = Manifest::load(&manifest)?;
            fs::create_dir_all(&out)?;
            let names = if splits.is_empty() { SPLIT_NAMES.iter().map(|s| s.to_string()).collect() } else { splits };
            let mut failures = Vec::new();
            for name in names {
                let spec = match get_split(&name, &m) {
                    Ok(s) => s,
                    Err(e) => {
                        eprintln!("{name}: {e}");
                        failures.push(Failure { item: name, error: e.to_string() });
                        continue;
                    }
                };
                let mut table = String::from("track_id\tpartition\n");
                for (part, ids) in [
                    (Partition::Train, &spec.train),
                    (Partition::Validation, &spec.validation),
                    (Partition::Test, &spec.test),
                    (Partition::Excluded, &spec.excluded),
                ] {
                    for id in ids {
                        table.push_str(&format!("{id}\t{part:?}\n"));
                    }
                }
                fs::write(out.join(format!("{name}.tsv")), table)?;
                let report = validate_split(&spec, &m);
                fs::write(out.join(format!("{name}.validation.txt")), report.summary())?;
                println!(
                    "{name}: {} train / {} validation / {} test, {}",
                    spec.train.len(),
                    spec.validation.len(),
                    spec.test.len(),
                    if report.is_valid() { "valid".to_string() } else { format!("{} violations", report.violations().count()) }
                );
                if !report.is_valid() {
                    failures.push(Failure { item: name, error: report.summary() });
                }
            }
            write_failures(&out.join("errors.json"), &failures)?;
            Ok(failures.is_empty())
        }
        Command::Train {
            config,
            seeds,
            split,
            name,
            output_dir,
            preset,
            max_epochs,
            batches_per_epoch,
            batch_size,
            train_patch_target,
            non_deterministic,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            cfg.split = split.unwrap_or(cfg.split);
            cfg.name = name.unwrap_or(cfg.name);
            cfg.output_dir = output_dir.unwrap_or(cfg.output_dir);
            if let Some(p) = preset {
                cfg.model = ModelSpec::from_preset(&p);
            }
            cfg.train.max_epochs = max_epochs.unwrap_or(cfg.train.max_epochs);
            cfg.train.batches_per_epoch = batches_per_epoch.unwrap_or(cfg.train.batches_per_epoch);
            cfg.train.batch_size = batch_size.unwrap_or(cfg.train.batch_size);
            cfg.sampling.train_patch_target = train_patch_target.unwrap_or(cfg.sampling.train_patch_target);
            if non_deterministic {
                cfg.train.deterministic = false;
            }
            cfg.validate()?;
            let results = train_experiment(&cfg)?;
            let mut failures = Vec::new();
            for r in results {
                match r.result {
                    Ok((dir, history, report)) => {
                        let ap = report.macro_metrics()?.average_precision;
                        println!(
                            "seed {}: best epoch {} of {}, macro AP {}, {}",
                            r.seed,
                            history.best_epoch,
                            history.epochs.len(),
                            ap.map_or("n/a".into(), |v| format!("{v:.1}")),
                            dir.display()
                        );
                    }
                    Err(e) => failures.push(Failure { item: format!("seed {}", r.seed), error: format!("{e:#}") }),
                }
            }
            let dir = cfg.output_dir.join(&cfg.name);
            fs::create_dir_all(&dir)?;
            write_failures(&dir.join("errors.json"), &failures)?;
            Ok(failures.is_empty())
        }
        Command::Evaluate { runs } => {
            let mut ok = true;
            for dir in runs {
                match evaluate_run(&dir) {
                    Ok(report) => {
                        let m = report.macro_metrics()?;
                        println!(
                            "{}: P {:.1} R {:.1} F {:.1} AP {} Acc {:.1}",
                            dir.display(),
                            m.precision,
                            m.recall,
                            m.f_measure,
                            m.average_precision.map_or("n/a".into(), |v| format!("{v:.1}")),
                            m.accuracy
                        );
                    }
                    Err(e) => {
                        eprintln!("{}: {e:#}", dir.display());
                        ok = false;
                    }
                }
            }
            Ok(ok)
        }
        Command::Report { runs, out } => {
            let reports = collect_reports(&runs)?;
            let files = write_report(&reports, &out)?;
            print!("{}", fs::read_to_string(&files.table_md)?);
            println!("report written to {}", out.display());
            Ok(true)
        }
        Command::DefaultConfig => {
            print!("{}", toml::to_string_pretty(&ExperimentConfig::default())?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
