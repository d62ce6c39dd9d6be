use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use notegen::checkpoint::load_checkpoint;
use notegen::generator::{generate_to_file, GenerateConfig, SeedSource};
use notegen::trainer::Trainer;
use notegen::{parse_midi, TrainConfig};

mod config;
mod inspect;

#[derive(Parser)]
#[command(name = "notegen", version, about = "Train an LSTM on MIDI note onsets and generate new music")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a directory of MIDI files.
    Train(Box<TrainArgs>),
    /// Continue a seed with a trained model and write a MIDI file.
    Generate(GenerateArgs),
    /// Summarise a MIDI file.
    Inspect {
        file: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of .mid/.midi files.
    #[arg(long)]
    data: Option<PathBuf>,
    /// key = value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Global gradient-norm limit.
    #[arg(long, conflicts_with = "no_clip")]
    clip_norm: Option<f64>,
    #[arg(long)]
    no_clip: bool,
    /// Checkpoint path [default: model.ckpt].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-batch and per-epoch metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Per-epoch parameter summary CSV.
    #[arg(long)]
    histograms: Option<PathBuf>,
    /// Record elapsed seconds in the metrics (makes them run-dependent).
    #[arg(long)]
    wall_clock: bool,
    /// Continue from this checkpoint up to --epochs.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("seed").required(true).args(["seed_midi", "random_seed"]))]
struct GenerateArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Take the first `window` notes of this file as the seed.
    #[arg(long)]
    seed_midi: Option<PathBuf>,
    /// Start from uniform random rows drawn with this seed.
    #[arg(long)]
    random_seed: Option<u64>,
    /// Notes to generate.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    length: u64,
    /// Note length in ticks [default: half a quarter note].
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    duration: Option<u32>,
}

fn usage_error(kind: ErrorKind, message: impl std::fmt::Display) -> ! {
    let mut cmd = Cli::command();
    let sub = cmd.find_subcommand_mut("train").expect("train subcommand").clone();
    sub.bin_name("notegen train").error(kind, message).exit()
}

fn train_config(args: &TrainArgs) -> (TrainConfig, PathBuf) {
    let mut cfg = TrainConfig::default();
    let mut out = None;
    let mut have_data = false;
    if let Some(path) = &args.config {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => usage_error(ErrorKind::Io, format!("{}: {e}", path.display())),
        };
        let base = path.parent().unwrap_or_else(|| std::path::Path::new("."));
        let applied = config::parse(&text).and_then(|entries| {
            have_data = entries.contains_key("data");
            config::apply(&entries, base, &mut cfg)
        });
        match applied {
            Ok(o) => out = o,
            Err(e) => usage_error(ErrorKind::InvalidValue, format!("{}: {e}", path.display())),
        }
    }

    if let Some(d) = &args.data {
        cfg.corpus_dir = d.clone();
        have_data = true;
    }
    if !have_data {
        usage_error(ErrorKind::MissingRequiredArgument, "--data <DIR> is required");
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = args.$flag { cfg.$field = v; }
        )*};
    }
    set!(epochs => epochs, window => window, hidden => hidden, dropout => dropout_rate,
         lr => lr, rho => rho, epsilon => epsilon, batch => batch_size, seed => seed);
    if args.no_clip {
        cfg.clip_norm = None;
    } else if let Some(c) = args.clip_norm {
        cfg.clip_norm = Some(c);
    }
    if args.metrics.is_some() {
        cfg.metrics_path = args.metrics.clone();
    }
    if args.histograms.is_some() {
        cfg.histogram_path = args.histograms.clone();
    }
    cfg.record_wall_time |= args.wall_clock;
    let out = args.out.clone().or(out).unwrap_or_else(|| PathBuf::from("model.ckpt"));
    cfg.checkpoint_path = Some(out.clone());
    if let Err(e) = cfg.validate() {
        usage_error(ErrorKind::InvalidValue, e);
    }
    (cfg, out)
}

fn cmd_train(args: TrainArgs) -> notegen::Result<()> {
    let (cfg, out) = train_config(&args);
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            log::info!("resuming {} after epoch {}", path.display(), ckpt.epoch);
            Trainer::resume(cfg, ckpt)?
        }
        None => Trainer::new(cfg)?,
    };
    println!(
        "training on {} samples, {} parameters",
        trainer.sample_count(),
        trainer.params().parameter_count()
    );
    while !trainer.is_finished() {
        let records = trainer.run_epoch()?;
        if let Some(r) = records.last() {
            println!("epoch {:>4}  loss {:.6}  accuracy {:.4}", r.epoch + 1, r.loss, r.accuracy);
        }
    }
    println!("checkpoint: {}", out.display());
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> notegen::Result<()> {
    let seed_source = match (args.seed_midi, args.random_seed) {
        (Some(path), _) => SeedSource::Midi(path),
        (None, Some(seed)) => SeedSource::Random(seed),
        (None, None) => unreachable!("clap requires one seed source"),
    };
    let config = GenerateConfig {
        checkpoint_path: args.model,
        seed_source,
        length: args.length as usize,
        note_duration_ticks: args.duration,
        output_path: args.out,
    };
    let matrix = generate_to_file(&config)?;
    println!("generated {} notes", matrix.len());
    println!("wrote {}", config.output_path.display());
    Ok(())
}

fn cmd_inspect(path: PathBuf) -> notegen::Result<()> {
    let bytes = fs::read(&path).map_err(|source| notegen::Error::Io { path: path.clone(), source })?;
    let file = parse_midi(&bytes)?;
    print!("{}", inspect::summarize(&file));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(*args),
        Command::Generate(args) => cmd_generate(args),
        Command::Inspect { file } => cmd_inspect(file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
