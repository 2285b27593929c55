use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use numerosity::experiments::{
    build_dataset, run_battery, to_samples, verify_bank, DatasetKind, ExperimentConfig,
};
use numerosity::morpho::{normalize_polarity, Engine, HolePolicy, KernelBank};
use numerosity::neuralnet::{
    evaluate_samples, params_to_bytes, save_params, train, Network, NetworkSpec, OptimizerConfig,
    Scalar, TrainConfig,
};
use numerosity::par::{with_jobs, Exec};
use numerosity::stimulus::{read_dataset, write_dataset};
use numerosity::{BinaryImage, Error, Result};

/// Subitizing laboratory: count objects, generate stimuli, train and probe
/// networks.
#[derive(Debug, Parser)]
#[command(name = "numerosity", version)]
struct Cli {
    /// TOML file with [run], [experiment] and [train] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; every file a command writes goes below it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel stages (0 = all logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a dataset to PGM files plus a manifest.
    Generate {
        /// baseline, exp1, exp2-triangles, exp2-squares, exp2-pentagons,
        /// exp3, exp4, mixed or boundary.
        #[arg(long, default_value = "baseline")]
        family: String,
        #[arg(long, default_value_t = 600)]
        count: usize,
    },
    /// Count the objects in a PGM image, or in every PGM of a directory.
    Subitize {
        path: PathBuf,
        /// Kernel bank file; the built-in bank if omitted.
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Holes::Strict)]
        holes: Holes,
    },
    /// Train a count classifier on a generated dataset.
    Train(TrainArgs),
    /// Run every experiment and write all reports.
    Battery,
    /// Check a kernel bank for topology preservation.
    Verify {
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Randomized scenes checked against the oracle.
        #[arg(long, default_value_t = 10_000)]
        random: usize,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    dataset: PathBuf,
    /// Held-out dataset directory.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// JSON network spec; the default count classifier if omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Holes {
    Strict,
    Lenient,
    Fill,
}

impl From<Holes> for HolePolicy {
    fn from(h: Holes) -> Self {
        match h {
            Holes::Strict => HolePolicy::Strict,
            Holes::Lenient => HolePolicy::Lenient,
            Holes::Fill => HolePolicy::Fill,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Precision {
    F32,
    F64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunSection {
    seed: Option<u64>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    run: RunSection,
    experiment: ExperimentConfig,
    train: Option<TrainConfig>,
}

/// Everything a command needs after merging the file with the flags.
struct Run {
    seed: u64,
    jobs: usize,
    out: PathBuf,
    experiment: ExperimentConfig,
    train: TrainConfig,
}

impl Run {
    fn resolve(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::IoAt {
                    path: path.clone(),
                    source: e,
                })?;
                let f: ConfigFile =
                    toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
                f.experiment.check()?;
                f
            }
            None => ConfigFile::default(),
        };
        let train = file
            .train
            .unwrap_or_else(|| file.experiment.baseline.train.clone());
        Ok(Self {
            seed: cli.seed.or(file.run.seed).unwrap_or(1),
            jobs: cli.jobs.or(file.run.jobs).unwrap_or(0),
            out: cli
                .out
                .clone()
                .or(file.run.out)
                .unwrap_or_else(|| PathBuf::from("out")),
            experiment: file.experiment,
            train,
        })
    }
}

/// Written next to every command's outputs.
#[derive(Serialize)]
struct RunRecord<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    details: T,
}

fn sha256_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(v)?)))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::IoAt {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, bytes).map_err(|e| Error::IoAt {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_record<T: Serialize>(
    dir: &Path,
    command: &str,
    seed: u64,
    config_hash: String,
    details: T,
) -> Result<()> {
    let rec = RunRecord {
        command,
        seed,
        config_hash,
        details,
    };
    write_file(
        &dir.join("run.json"),
        (serde_json::to_string_pretty(&rec)? + "\n").as_bytes(),
    )
}

fn load_bank(path: Option<&Path>) -> Result<KernelBank> {
    match path {
        Some(p) => KernelBank::load(p),
        None => Ok(KernelBank::default()),
    }
}

fn cmd_generate(run: &Run, family: &str, count: usize) -> Result<()> {
    let kind: DatasetKind = family.parse()?;
    let manifest = build_dataset(
        kind,
        count,
        &run.experiment.stimulus,
        run.seed,
        Exec::default(),
    )?;
    let dir = run.out.join(kind.to_string());
    let written = write_dataset(&manifest, &dir, Exec::default())?;
    #[derive(Serialize)]
    struct Details<'a> {
        family: String,
        count: usize,
        stimulus: &'a numerosity::stimulus::StimulusConfig,
    }
    let hash = sha256_json(&run.experiment.stimulus)?;
    write_record(
        &dir,
        "generate",
        run.seed,
        hash,
        Details {
            family: kind.to_string(),
            count,
            stimulus: &run.experiment.stimulus,
        },
    )?;
    println!(
        "wrote {} images to {}",
        written.entries.len(),
        dir.display()
    );
    Ok(())
}

fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let read = fs::read_dir(dir).map_err(|e| Error::IoAt {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut files = Vec::new();
    for entry in read {
        let path = entry.map_err(Error::Io)?.path();
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn cmd_subitize(path: &Path, bank: Option<&Path>, holes: Holes) -> Result<()> {
    let engine = Engine::new(load_bank(bank)?, holes.into());
    let count = |p: &Path| -> Result<usize> {
        engine.subitize(&normalize_polarity(&BinaryImage::load_pgm(p)?))
    };
    if !path.is_dir() {
        println!("{}", count(path)?);
        return Ok(());
    }
    let files = pgm_files(path)?;
    let counts = Exec::default().try_map(&files, |p| count(p))?;
    for (p, n) in files.iter().zip(counts) {
        let name = p
            .file_name()
            .map(|s| s.to_string_lossy())
            .unwrap_or_default();
        println!("{name}\t{n}");
    }
    Ok(())
}

fn train_as<T: Scalar>(
    spec: NetworkSpec,
    data: &numerosity::neuralnet::Samples,
    val: Option<&numerosity::neuralnet::Samples>,
    cfg: &TrainConfig,
    path: &Path,
) -> Result<(numerosity::neuralnet::History, Option<f64>, String)> {
    let mut net = Network::<T>::new(spec)?;
    let history = train(&mut net, data, val, cfg, Exec::default(), |e| {
        eprintln!(
            "epoch {}: train loss {:.4} acc {:.4}{}",
            e.epoch + 1,
            e.train_loss,
            e.train_accuracy,
            e.val_accuracy
                .map(|a| format!(", holdout acc {a:.4}"))
                .unwrap_or_default()
        )
    })?;
    let holdout = match val {
        Some(v) => Some(evaluate_samples(&net, v, cfg.loss, Exec::default())?.1),
        None => None,
    };
    save_params(&net, path)?;
    Ok((
        history,
        holdout,
        hex::encode(Sha256::digest(params_to_bytes(&net))),
    ))
}

fn cmd_train(run: &Run, args: &TrainArgs) -> Result<()> {
    let ds = read_dataset(&args.dataset, Exec::default())?;
    let Some(first) = ds.images.first() else {
        return Err(Error::Config("dataset is empty".into()));
    };
    if first.width() != first.height() {
        return Err(Error::Config("training images must be square".into()));
    }
    let spec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::IoAt {
                path: p.clone(),
                source: e,
            })?;
            let mut spec: NetworkSpec =
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            spec.init_seed = run.seed;
            spec
        }
        None => NetworkSpec::count_classifier(first.width(), run.seed),
    };
    let mut cfg = run.train.clone();
    cfg.seed = run.seed;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = args.lr {
        cfg.optimizer = match cfg.optimizer {
            OptimizerConfig::Sgd { momentum, .. } => OptimizerConfig::Sgd { lr, momentum },
            OptimizerConfig::Adam {
                beta1, beta2, eps, ..
            } => OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            },
        };
    }
    let labels = ds.manifest.labels();
    let data = to_samples(&ds.images, &labels);
    let val = match &args.validation {
        Some(dir) => {
            let v = read_dataset(dir, Exec::default())?;
            Some(to_samples(&v.images, &v.manifest.labels()))
        }
        None => None,
    };
    fs::create_dir_all(&run.out).map_err(|e| Error::IoAt {
        path: run.out.clone(),
        source: e,
    })?;
    let params = run.out.join("model.params");
    let (history, holdout, checkpoint) = match args.precision {
        Precision::F32 => train_as::<f32>(spec.clone(), &data, val.as_ref(), &cfg, &params)?,
        Precision::F64 => train_as::<f64>(spec.clone(), &data, val.as_ref(), &cfg, &params)?,
    };
    write_file(
        &run.out.join("spec.json"),
        (serde_json::to_string_pretty(&spec)? + "\n").as_bytes(),
    )?;
    write_file(
        &run.out.join("history.json"),
        serde_json::to_string_pretty(&history)?.as_bytes(),
    )?;
    #[derive(Serialize)]
    struct Details<'a> {
        dataset: &'a str,
        precision: Precision,
        train: &'a TrainConfig,
        checkpoint: String,
        holdout_accuracy: Option<f64>,
    }
    let hash = sha256_json(&(&spec, &cfg))?;
    write_record(
        &run.out,
        "train",
        run.seed,
        hash,
        Details {
            dataset: &ds.manifest.family,
            precision: args.precision,
            train: &cfg,
            checkpoint,
            holdout_accuracy: holdout,
        },
    )?;
    if let Some(a) = holdout {
        println!("holdout accuracy {a:.4}");
    }
    println!("wrote {}", params.display());
    Ok(())
}

fn cmd_battery(run: &Run) -> Result<()> {
    let out = run_battery(
        &run.experiment,
        run.seed,
        &run.out,
        Exec::default(),
        &mut |m| eprintln!("{m}"),
    )?;
    write_record(&run.out, "battery", run.seed, run.experiment.hash(), ())?;
    for r in &out.probes {
        println!(
            "{}: accuracy {:.4}, signed mean error {:+.4}",
            r.id, r.mean_accuracy, r.signed_mean_error
        );
    }
    println!(
        "wrote {} files to {}",
        out.files.len() + 1,
        run.out.display()
    );
    Ok(())
}

fn cmd_verify(run: &Run, bank: Option<&Path>, random: usize) -> Result<bool> {
    let bank = load_bank(bank)?;
    let v = verify_bank(&bank, random, run.seed, Exec::default())?;
    println!("{}", v.summary());
    Ok(v.passed())
}

fn execute(cli: &Cli) -> Result<bool> {
    let run = Run::resolve(cli)?;
    with_jobs(run.jobs, || match &cli.command {
        Command::Generate { family, count } => cmd_generate(&run, family, *count).map(|_| true),
        Command::Subitize { path, bank, holes } => {
            cmd_subitize(path, bank.as_deref(), *holes).map(|_| true)
        }
        Command::Train(args) => cmd_train(&run, args).map(|_| true),
        Command::Battery => cmd_battery(&run).map(|_| true),
        Command::Verify { bank, random } => cmd_verify(&run, bank.as_deref(), *random),
    })
}

fn exit_code(e: &Error) -> u8 {
    if e.is_domain() {
        2
    } else if e.is_io() || matches!(e, Error::Json(_)) {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        // A bank that fails verification is a finding about the data.
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
