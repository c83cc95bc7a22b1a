//! Command-line interface: dataset generation, training, evaluation,
//! feature extraction, filter inspection, and the pipeline gradient check.

use clap::{Parser, Subcommand};
use rwfb::config::RunConfig;
use rwfb::dataio;
use rwfb::error::{Error, Result};
use rwfb::pipeline::{extract_features, gradcheck_run, ModelParams};
use rwfb::train::{evaluate, load_dataset, metrics_csv, mu_trajectory_csv, train_joint};
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "rwfb",
    version,
    about = "Learnable cosine-Gaussian filterbank with relevance weighting"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the deterministic 6-class synthetic WAV dataset.
    GenData {
        #[arg(long, default_value_t = 17)]
        seed: u64,
        /// Output directory for WAV files and manifest.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 120)]
        n_per_class: usize,
        #[arg(long, default_value_t = 16000)]
        sample_rate: u32,
        /// Clip duration in seconds.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        /// Overwrite an existing dataset directory.
        #[arg(long)]
        force: bool,
    },
    /// Train a model and write params, metrics, and the μ trajectory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate saved parameters on a held-out fold.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        params: PathBuf,
        /// Overrides data.test_fold from the config.
        #[arg(long)]
        test_fold: Option<u32>,
        /// Emit machine-readable CSV instead of the table.
        #[arg(long)]
        csv: bool,
    },
    /// Compute the enhanced representation of one WAV file.
    Extract {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-head relevance masks as CSV into this directory.
        #[arg(long)]
        dump_masks: Option<PathBuf>,
    },
    /// Dump (index, μ, center Hz) of the learned filters, sorted by μ.
    InspectFilters {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sample rate used to convert μ to Hz.
        #[arg(long, default_value_t = 16000)]
        sample_rate: u32,
    },
    /// Finite-difference check of the full joint pipeline gradients.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        /// Use the built-in small configuration (F=8, k=65, S=256, c=2,
        /// hidden=5, 2 heads).
        #[arg(long)]
        tiny: bool,
        /// Test hook: corrupt one analytic gradient entry; the check must
        /// then fail.
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::GenData {
            seed,
            out,
            n_per_class,
            sample_rate,
            duration,
            force,
        } => {
            let manifest = out.join("manifest.csv");
            if manifest.exists() && !force {
                return Err(Error::InvalidArgument(format!(
                    "{} already exists; pass --force to overwrite",
                    manifest.display()
                )));
            }
            let path = dataio::gen_synthetic(&out, seed, n_per_class, sample_rate, duration)?;
            println!(
                "wrote {} clips ({} classes x {n_per_class}) and {}",
                6 * n_per_class,
                dataio::SYNTH_CLASSES.len(),
                path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Train { config, out_dir } => {
            let cfg = RunConfig::load(&config)?;
            let data = load_dataset(&cfg)?;
            fs::create_dir_all(&out_dir)?;
            cfg.save(&out_dir.join("config.txt"))?;
            let started = Instant::now();
            let out = train_joint(&cfg, &data.train, &data.test, data.labels.len())?;
            dataio::write_params(&out_dir.join("params.rwpm"), &out.params.named)?;
            fs::write(out_dir.join("metrics.csv"), metrics_csv(&out.metrics))?;
            if !out.mu_trajectory.is_empty() {
                fs::write(
                    out_dir.join("mu_trajectory.csv"),
                    mu_trajectory_csv(&out.mu_trajectory),
                )?;
            }
            let last = out.metrics.last().expect("at least one epoch");
            println!(
                "trained {} epochs in {:.1}s: loss {:.4}, train_acc {:.3}, val_acc {:.3}",
                out.metrics.len(),
                started.elapsed().as_secs_f64(),
                last.loss,
                last.train_acc,
                last.val_acc
            );
            println!("artifacts in {}", out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Eval {
            config,
            params,
            test_fold,
            csv,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(fold) = test_fold {
                cfg.test_fold = fold;
                cfg.validate()?;
            }
            let model = ModelParams::from_named(dataio::read_params(&params)?);
            let data = load_dataset(&cfg)?;
            let result = evaluate(&cfg, &model, &data.test, data.labels.len())?;
            if csv {
                let mut s = String::from("label,correct,total,accuracy\n");
                for row in &result.per_class {
                    let acc = if row.total > 0 {
                        row.correct as f64 / row.total as f64
                    } else {
                        f64::NAN
                    };
                    let _ = writeln!(
                        s,
                        "{},{},{},{acc}",
                        data.labels[row.label], row.correct, row.total
                    );
                }
                let _ = writeln!(s, "macro,,,{}", result.macro_acc);
                let _ = writeln!(s, "overall,,,{}", result.overall_acc);
                print!("{s}");
            } else {
                println!("per-class accuracy (fold {}):", cfg.test_fold);
                for row in &result.per_class {
                    let acc = if row.total > 0 {
                        format!("{:6.1}%", 100.0 * row.correct as f64 / row.total as f64)
                    } else {
                        "     -".into()
                    };
                    println!(
                        "  {:<12} {acc}  ({}/{})",
                        data.labels[row.label], row.correct, row.total
                    );
                }
                println!("macro accuracy:   {:.1}%", 100.0 * result.macro_acc);
                println!("overall accuracy: {:.1}%", 100.0 * result.overall_acc);
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Extract {
            config,
            params,
            input,
            out,
            dump_masks,
        } => {
            let cfg = RunConfig::load(&config)?;
            let model = ModelParams::from_named(dataio::read_params(&params)?);
            let clip = dataio::read_wav(&input)?;
            if clip.sample_rate != cfg.sample_rate {
                return Err(Error::Config(format!(
                    "{} is {} Hz but frame.sample_rate = {}",
                    input.display(),
                    clip.sample_rate,
                    cfg.sample_rate
                )));
            }
            let extraction = extract_features(&cfg, &model, &clip.samples)?;
            dataio::write_features(&out, &extraction.features)?;
            let shape = extraction.features.shape().to_vec();
            println!(
                "wrote {:?} features to {} ({} relevance heads)",
                shape,
                out.display(),
                extraction.masks.len()
            );
            if let Some(dir) = dump_masks {
                fs::create_dir_all(&dir)?;
                for (h, mask) in extraction.masks.iter().enumerate() {
                    let (rows, cols) = (mask.shape()[0], mask.shape()[1]);
                    let mut s = String::new();
                    for r in 0..rows {
                        let line: Vec<String> =
                            mask.row(r).iter().map(|v| v.to_string()).collect();
                        let _ = writeln!(s, "{}", line.join(","));
                    }
                    let path = dir.join(format!("mask_head{h}.csv"));
                    fs::write(&path, s)?;
                    println!("wrote {rows}x{cols} mask to {}", path.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::InspectFilters {
            params,
            out,
            sample_rate,
        } => {
            let model = ModelParams::from_named(dataio::read_params(&params)?);
            let mu = model
                .mu()
                .map_err(|_| {
                    Error::Config(
                        "these parameters have no learnable filterbank (mel frontend?)".into(),
                    )
                })?
                .data();
            let mut order: Vec<usize> = (0..mu.len()).collect();
            order.sort_by(|&a, &b| mu[a].partial_cmp(&mu[b]).expect("μ is finite"));
            let mut s = String::from("index,mu,center_hz\n");
            for &i in &order {
                let _ = writeln!(s, "{i},{},{}", mu[i], mu[i] * sample_rate as f64);
            }
            fs::write(&out, s)?;
            println!("wrote {} filters to {}", mu.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Gradcheck {
            config,
            tiny,
            corrupt_gradient,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if tiny {
                cfg.apply_tiny();
                cfg.validate()?;
            }
            let started = Instant::now();
            let report = gradcheck_run(&cfg, corrupt_gradient)?;
            println!("worst relative error per parameter group:");
            for (name, err) in &report.per_param {
                println!("  {name:<18} {err:.3e}");
            }
            println!(
                "{} coordinates checked in {:.1}s; max rel err {:.3e} (threshold {:.0e})",
                report.coords_checked,
                started.elapsed().as_secs_f64(),
                report.max_rel_err,
                report.threshold
            );
            if report.passed() {
                println!("gradient check PASSED");
                Ok(ExitCode::SUCCESS)
            } else {
                for c in &report.worst {
                    println!(
                        "  {}[{}]: analytic {:+.6e} vs numeric {:+.6e} (rel {:.3e})",
                        c.name, c.index, c.analytic, c.numeric, c.rel_err
                    );
                }
                println!("gradient check FAILED");
                Ok(ExitCode::from(1))
            }
        }
    }
}
