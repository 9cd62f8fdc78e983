use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kanlab::metrics::twonn_intrinsic_dimension;
use kanlab::nn::Family;
use kanlab::runner::{
    activation_sweep, degree_width_sweep, emit_plots, read_jsonl, report_text, run_experiment, run_specs, select_best,
    spec_from_record, sweep_scheme, write_results, ExperimentConfig, PreparedData, RunRecord, RunStatus, SelectionRule,
};
use kanlab::{Activation, Error};

#[derive(Parser)]
#[command(name = "kanlab", version, about = "Train and compare KANs and MLPs across training schemes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (model, init, optimizer, lr, seed) combination of a config.
    Grid {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Vary the spline degree and the hidden width of a one-layer KAN.
    SweepDegree {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6")]
        degrees: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        widths: Vec<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Re-run the best KAN scheme with different activations.
    SweepActivation {
        config: PathBuf,
        /// Records to pick the best scheme from; the config's grid is run
        /// first when omitted.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "gelu,silu,elu")]
        activations: Vec<Activation>,
        #[arg(long, value_enum, default_value_t = Rule::MaxAccuracy)]
        rule: Rule,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Rebuild CSV summaries and SVG figures from a JSONL file.
    Report {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the TwoNN intrinsic dimension of a config's dataset.
    IdEstimate {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[arg(long, default_value_t = 2000)]
        limit: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    MaxAccuracy,
    MinGap,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load(config: &Path) -> kanlab::Result<(ExperimentConfig, PreparedData)> {
    let cfg = ExperimentConfig::load(config)?;
    let data = PreparedData::load(&cfg, &base_dir(config))?;
    Ok((cfg, data))
}

fn progress(quiet: bool) -> impl Fn(&RunRecord) + Sync {
    move |r: &RunRecord| {
        if quiet {
            return;
        }
        let acc = r.best_test_acc.map_or("-".into(), |a| format!("{:.4}", a));
        eprintln!(
            "run {:>3} {:<16} {:<32} {:<9} best {acc} ({:.1}s)",
            r.run_id,
            r.model,
            r.scheme_label(),
            format!("{:?}", r.status).to_lowercase(),
            r.wall_seconds
        );
    }
}

fn finish(records: &[RunRecord], out: &Path) -> kanlab::Result<u8> {
    let mut files = write_results(records, out)?;
    files.extend(emit_plots(records, out)?);
    print!("{}", report_text(records));
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(if records.iter().all(|r| r.status == RunStatus::Ok) {
        0
    } else {
        EXIT_PARTIAL
    })
}

fn run(cmd: Command) -> kanlab::Result<u8> {
    match cmd {
        Command::Grid {
            config,
            out,
            workers,
            quiet,
        } => {
            let (mut cfg, data) = load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w.max(1);
            }
            let records = run_experiment(&cfg, &data, &progress(quiet))?;
            finish(&records, &out.unwrap_or(cfg.output))
        }
        Command::SweepDegree {
            config,
            degrees,
            widths,
            epochs,
            lr,
            out,
            quiet,
        } => {
            let (cfg, data) = load(&config)?;
            let mut base = cfg
                .models
                .iter()
                .find(|m| m.family == Family::Kan)
                .cloned()
                .ok_or_else(|| Error::Config("config has no KAN model to sweep".into()))?;
            base.in_dim = data.train.dim();
            base.out_dim = data.train.classes;
            let mut scheme = sweep_scheme(cfg.grid.batch_size, epochs.unwrap_or(cfg.grid.max_epochs));
            scheme.lr = lr;
            let specs = degree_width_sweep(&base, &degrees, &widths, scheme, cfg.seeds[0], &cfg.dataset.name())?;
            let records = run_specs(&specs, &data, cfg.workers, &progress(quiet));
            finish(&records, &out.unwrap_or(cfg.output))
        }
        Command::SweepActivation {
            config,
            from,
            activations,
            rule,
            out,
            quiet,
        } => {
            let (cfg, data) = load(&config)?;
            let prior = match from {
                Some(p) => read_jsonl(&p)?,
                None => run_experiment(&cfg, &data, &progress(quiet))?,
            };
            let rule = match rule {
                Rule::MaxAccuracy => SelectionRule::MaxAccuracy,
                Rule::MinGap => SelectionRule::MinGap,
            };
            let best = select_best(&prior, rule)
                .ok_or_else(|| Error::Config("no completed KAN run to take the best scheme from".into()))?;
            println!("best scheme: {} {} (run {})", best.model, best.scheme_label(), best.run_id);
            let spec = spec_from_record(best, &data, &cfg.models)?;
            let specs = activation_sweep(&spec, &activations);
            let records = run_specs(&specs, &data, cfg.workers, &progress(quiet));
            finish(&records, &out.unwrap_or(cfg.output))
        }
        Command::Report { results, out } => {
            let records = read_jsonl(&results)?;
            let out = out.unwrap_or_else(|| base_dir(&results));
            finish(&records, &out)
        }
        Command::IdEstimate { config, split, limit } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (train, test) = cfg.dataset.load(&base_dir(&config), cfg.normalize)?;
            let ds = match split {
                Split::Train => train,
                Split::Test => test,
            };
            let sample = ds.take(limit);
            let id = twonn_intrinsic_dimension(&sample.features)?;
            println!("{}: TwoNN intrinsic dimension {id:.3} ({} points, ambient {})", ds.name, sample.len(), ds.dim());
            Ok(0)
        }
    }
}
