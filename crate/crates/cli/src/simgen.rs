use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use duplex_core::model::variants::{build, identity_stub, VariantSpec};
use duplex_simgen::scenario::format_scenarios;
use duplex_simgen::toy::{fit, FitOptions};
use duplex_simgen::{export_dataset, parse_scenarios, render, suites, DatasetFile, ExportOptions, Scenario};

/// Synthetic echo/noise scenarios, training-set export and model files.
#[derive(Debug, Parser)]
#[command(name = "simgen", version)]
pub struct SimgenArgs {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteKind {
    /// Far-end single talk.
    Far,
    /// Near-end single talk.
    Near,
    Double,
    /// The three kinds in rotation.
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantKind {
    Full,
    Sparse,
    Small,
    /// Unit gains and zero strengths.
    Identity,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded scenario file.
    Suite {
        #[arg(long, value_enum)]
        kind: SuiteKind,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 16_000)]
        rate: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render `<name>.mic.wav`, `<name>.far.wav` and `<name>.target.wav`.
    Render {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write one `.pnd` record file per scenario.
    Export {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Low-pass each scenario at a seeded random cutoff.
        #[arg(long)]
        random_lowpass: bool,
        /// Also write the rendered WAVs.
        #[arg(long)]
        wavs: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Fit the small recurrent model to exported records.
    TrainToy {
        /// `.pnd` files or directories holding them.
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = FitOptions::default().hidden)]
        hidden: usize,
        #[arg(long, default_value_t = FitOptions::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = FitOptions::default().seed)]
        seed: u64,
    },
    /// Write a reference topology with seeded random weights.
    Variant {
        #[arg(long, value_enum)]
        kind: VariantKind,
        #[arg(long, default_value_t = 16_000)]
        rate: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_scenarios(path: &Path) -> anyhow::Result<Vec<Scenario>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenarios(&text).with_context(|| format!("parsing {}", path.display()))
}

fn in_parallel<F>(scenarios: &[Scenario], jobs: usize, work: F) -> anyhow::Result<()>
where
    F: Fn(&[Scenario]) -> anyhow::Result<()> + Sync,
{
    if scenarios.is_empty() {
        return Ok(());
    }
    let per = scenarios.len().div_ceil(jobs.max(1));
    thread::scope(|scope| {
        let handles: Vec<_> = scenarios.chunks(per).map(|c| scope.spawn(|| work(c))).collect();
        handles.into_iter().try_for_each(|h| h.join().expect("worker panicked"))
    })
}

fn dataset_files(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            found.retain(|f| f.extension().is_some_and(|e| e == "pnd"));
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no .pnd files found");
    }
    Ok(out)
}

pub fn run(args: &SimgenArgs) -> anyhow::Result<()> {
    match &args.command {
        Command::Suite { kind, count, first_seed, rate, out } => {
            let make: fn(u64, u32) -> Scenario = match kind {
                SuiteKind::Far => suites::far_single_talk,
                SuiteKind::Near => suites::near_single_talk,
                SuiteKind::Double => suites::double_talk,
                SuiteKind::Train => {
                    let list = suites::training_set(*count, *first_seed, *rate);
                    fs::write(out, format_scenarios(&list))?;
                    return Ok(());
                }
            };
            let list: Vec<Scenario> = (0..*count as u64).map(|i| make(first_seed + i, *rate)).collect();
            fs::write(out, format_scenarios(&list))?;
        }
        Command::Render { scenarios, out, jobs } => {
            let list = load_scenarios(scenarios)?;
            fs::create_dir_all(out)?;
            in_parallel(&list, *jobs, |chunk| {
                for s in chunk {
                    render(s)?.write_wavs(out, &s.name)?;
                    log::info!("rendered {}", s.name);
                }
                Ok(())
            })?;
        }
        Command::Export { scenarios, out, random_lowpass, wavs, jobs } => {
            let list = load_scenarios(scenarios)?;
            let opts = ExportOptions { random_lowpass: *random_lowpass, write_wavs: *wavs };
            in_parallel(&list, *jobs, |chunk| {
                export_dataset(chunk, out, &opts)?;
                Ok(())
            })?;
        }
        Command::TrainToy { data, out, hidden, epochs, seed } => {
            let files = dataset_files(data)?;
            let mut rate = None;
            let mut sequences = Vec::with_capacity(files.len());
            for f in &files {
                let d = DatasetFile::load(f)?;
                if *rate.get_or_insert(d.sample_rate) != d.sample_rate {
                    bail!("{} is at {} Hz, earlier files at {} Hz", f.display(), d.sample_rate, rate.unwrap());
                }
                sequences.push(d.records);
            }
            let opts = FitOptions { hidden: *hidden, epochs: *epochs, seed: *seed, ..FitOptions::default() };
            let weights = fit(&sequences, rate.expect("at least one file"), &opts);
            weights.save(out)?;
        }
        Command::Variant { kind, rate, seed, out } => {
            let w = match kind {
                VariantKind::Full => build(&VariantSpec::full(), *rate, *seed),
                VariantKind::Sparse => build(&VariantSpec::sparse(), *rate, *seed),
                VariantKind::Small => build(&VariantSpec::small(), *rate, *seed),
                VariantKind::Identity => identity_stub(*rate),
            };
            w.save(out)?;
            println!("{} non-zero weights, {} MACs per frame", w.nonzeros(), w.macs_per_frame());
        }
    }
    Ok(())
}
