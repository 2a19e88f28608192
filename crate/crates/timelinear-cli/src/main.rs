//! Command-line interface: train and evaluate forecasters, run feature and
//! decoder ablations, and inspect series periodicity via autocorrelation.
//!
//! Settings resolve in three layers: built-in defaults, then an optional
//! `--config` file of `key = value` lines, then explicit flags. Validation
//! problems (bad flags or config entries, unknown columns) exit with status
//! 2; runtime failures (I/O, training divergence) exit with 1.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use timelinear::analysis::{acf, downsample, find_peaks};
use timelinear::data::{load_csv, prepare_dataset, SplitKind};
use timelinear::forecaster::{DecoderVariant, ModelConfig};
use timelinear::timefeat::FeatureSpec;
use timelinear::train::{evaluate, train_model, write_train_log, MetricsRecord, TrainConfig};

#[derive(Parser)]
#[command(
    name = "timelinear",
    version,
    about = "Long-horizon forecasting from a linear backbone blended with a calendar-stamp forecaster"
)]
struct Cli {
    /// Run all batch work sequentially (default: data-parallel; results are
    /// bit-identical either way).
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train on a CSV dataset and write model/log/metrics artifacts.
    Train(TrainArgs),
    /// Train once per calendar-feature set and tabulate test metrics.
    AblateFeatures(AblateArgs),
    /// Train once per decoder variant and tabulate test metrics.
    AblateDecoder(AblateArgs),
    /// Autocorrelation of one column, with detected periodicity peaks.
    Acf(AcfArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// CSV dataset path (first column = timestamps).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Config file of `key = value` lines; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Split scheme: `ett` (calendar months, 12/4/4) or `ratio` (70/10/20).
    #[arg(long)]
    split: Option<String>,
    /// History window length L.
    #[arg(long)]
    seq_len: Option<usize>,
    /// Forecast horizon T.
    #[arg(long)]
    pred_len: Option<usize>,
    /// Calendar feature set, e.g. `H`, `H_D` or `H_M_S`.
    #[arg(long)]
    features: Option<String>,
    /// Blend weight on the history branch, in [0, 1].
    #[arg(long)]
    beta: Option<f64>,
    /// Encoder conv kernel size (odd).
    #[arg(long)]
    ksize: Option<usize>,
    /// First hidden width is n_vars / reduction.
    #[arg(long)]
    reduction: Option<f64>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Maximum training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Early-stopping patience, in epochs.
    #[arg(long)]
    patience: Option<usize>,
    /// RNG seed for initialization and batch shuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: runs/<dataset>_L<L>_T<T>).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated seeds; runs once per seed and summarizes.
    #[arg(long)]
    seeds: Option<String>,
    /// Decoder variant: 1..=6 or a name such as `full` or `backbone-only`.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct AcfArgs {
    /// CSV dataset path (first column = timestamps).
    #[arg(long)]
    data: PathBuf,
    /// Column name to analyze.
    #[arg(long)]
    column: String,
    /// Largest lag to compute (in downsampled steps).
    #[arg(long, default_value_t = 60)]
    max_lag: usize,
    /// Average adjacent blocks of this size before computing the ACF.
    #[arg(long, default_value_t = 1)]
    downsample: usize,
    /// Also write the `lag,rho` table to this CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    /// Bad input from the user: exits with status 2.
    Usage(String),
    /// The inputs were fine but the operation failed: exits with status 1.
    Runtime(String),
}

impl CliError {
    fn from_lib(e: timelinear::Error) -> Self {
        match &e {
            timelinear::Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.sequential {
        timelinear::exec::set_sequential(true);
    }
    let result = match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::AblateFeatures(a) => cmd_ablate_features(a),
        Cmd::AblateDecoder(a) => cmd_ablate_decoder(a),
        Cmd::Acf(a) => cmd_acf(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

// ---------------------------------------------------------------------------
// Config file + flag resolution
// ---------------------------------------------------------------------------

/// Parsed `key = value` config file. Keys use the long flag names (with `-`
/// or `_`), `#` starts a comment, values may not repeat.
struct FileConfig {
    entries: HashMap<String, String>,
}

impl FileConfig {
    const KEYS: [&'static str; 15] = [
        "data", "split", "seq_len", "pred_len", "features", "beta", "ksize", "reduction", "lr",
        "batch", "epochs", "patience", "seed", "seeds", "variant",
    ];

    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut entries = HashMap::new();
        let Some(path) = path else {
            return Ok(FileConfig { entries });
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
        })?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim().to_lowercase().replace('-', "_");
            if !Self::KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{}:{}: unknown setting {key:?} (known: {})",
                    path.display(),
                    lineno + 1,
                    Self::KEYS.join(", ")
                )));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!(
                    "{}:{}: duplicate setting {key:?}",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        Ok(FileConfig { entries })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config setting {key} = {raw:?}: {e}"))),
        }
    }
}

/// Fully resolved settings for the training-family commands.
struct Settings {
    data: PathBuf,
    split: SplitKind,
    seq_len: usize,
    pred_len: usize,
    features: FeatureSpec,
    beta: f64,
    ksize: usize,
    reduction: f64,
    train: TrainConfig,
    seeds: Vec<u64>,
    out_dir: PathBuf,
}

fn resolve(
    common: &CommonArgs,
    seeds_flag: Option<&str>,
    variant_flag: Option<&str>,
) -> Result<Settings, CliError> {
    let file = FileConfig::load(common.config.as_deref())?;
    let data = common
        .data
        .clone()
        .or(file.get::<PathBuf>("data")?)
        .ok_or_else(|| {
            CliError::Usage("no dataset: pass --data or set `data = <path>` in the config file".into())
        })?;
    let split = match common.split.clone().or(file.get("split")?).as_deref() {
        None | Some("ratio") => SplitKind::Ratio,
        Some("ett") => SplitKind::EttMonths,
        Some(other) => {
            return Err(CliError::Usage(format!(
                "split must be `ett` or `ratio`, got {other:?}"
            )))
        }
    };
    let seq_len = common.seq_len.or(file.get("seq_len")?).unwrap_or(96);
    let pred_len = common.pred_len.or(file.get("pred_len")?).unwrap_or(96);
    let features_label: String = common
        .features
        .clone()
        .or(file.get("features")?)
        .unwrap_or_else(|| "H".to_string());
    let features = FeatureSpec::parse(&features_label).map_err(CliError::from_lib)?;
    let beta = common.beta.or(file.get("beta")?).unwrap_or(0.5);
    let ksize = common.ksize.or(file.get("ksize")?).unwrap_or(3);
    let reduction = common.reduction.or(file.get("reduction")?).unwrap_or(1.0);
    let seed = common.seed.or(file.get("seed")?).unwrap_or(2020);

    let mut train = TrainConfig::new(seed);
    if let Some(v) = common.lr.or(file.get("lr")?) {
        train.lr = v;
    }
    if let Some(v) = common.batch.or(file.get("batch")?) {
        train.batch_size = v;
    }
    if let Some(v) = common.epochs.or(file.get("epochs")?) {
        train.max_epochs = v;
    }
    if let Some(v) = common.patience.or(file.get("patience")?) {
        train.patience = v;
    }
    if let Some(vs) = variant_flag
        .map(str::to_string)
        .or(file.get("variant")?)
    {
        train.variant = parse_variant(&vs)?;
    }
    train.validate().map_err(CliError::from_lib)?;

    let seeds = match seeds_flag.map(str::to_string).or(file.get("seeds")?) {
        None => vec![seed],
        Some(list) => {
            let mut out = Vec::new();
            for part in list.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                out.push(
                    part.parse::<u64>()
                        .map_err(|e| CliError::Usage(format!("bad seed {part:?}: {e}")))?,
                );
            }
            if out.is_empty() {
                return Err(CliError::Usage("empty seed list".into()));
            }
            out
        }
    };

    let out_dir = common.out_dir.clone().unwrap_or_else(|| {
        PathBuf::from(format!("runs/{}_L{seq_len}_T{pred_len}", stem_of(&data)))
    });
    Ok(Settings {
        data,
        split,
        seq_len,
        pred_len,
        features,
        beta,
        ksize,
        reduction,
        train,
        seeds,
        out_dir,
    })
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn parse_variant(s: &str) -> Result<DecoderVariant, CliError> {
    if let Ok(i) = s.parse::<u8>() {
        return DecoderVariant::from_index(i).map_err(CliError::from_lib);
    }
    let lower = s.to_lowercase();
    DecoderVariant::ALL
        .into_iter()
        .find(|v| variant_label(*v) == lower)
        .ok_or_else(|| {
            let names = DecoderVariant::ALL.map(variant_label);
            CliError::Usage(format!(
                "unknown decoder variant {s:?} (use 1..=6 or one of: {})",
                names.join(", ")
            ))
        })
}

fn variant_label(v: DecoderVariant) -> &'static str {
    match v {
        DecoderVariant::BackboneOnly => "backbone-only",
        DecoderVariant::StampsOnly => "stamps-only",
        DecoderVariant::BackboneOverStamps => "backbone-over-stamps",
        DecoderVariant::MixFutureStamps => "mix-future-stamps",
        DecoderVariant::SumThenBackbone => "sum-then-backbone",
        DecoderVariant::Full => "full",
    }
}

fn model_config(s: &Settings, n_vars: usize, beta: f64) -> Result<ModelConfig, CliError> {
    let mut cfg = ModelConfig::new(s.features.clone(), s.seq_len, s.pred_len, n_vars, beta);
    cfg.ksize = s.ksize;
    cfg.reduction_rate = s.reduction;
    cfg.validate().map_err(CliError::from_lib)?;
    Ok(cfg)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Render the resolved settings in the same `key = value` format the
/// `--config` flag accepts, so a run can be repeated from its artifacts.
fn render_config(s: &Settings) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "data = {}", s.data.display());
    let _ = writeln!(out, "split = {}", s.split);
    let _ = writeln!(out, "seq_len = {}", s.seq_len);
    let _ = writeln!(out, "pred_len = {}", s.pred_len);
    let _ = writeln!(out, "features = {}", s.features.label());
    let _ = writeln!(out, "beta = {}", s.beta);
    let _ = writeln!(out, "ksize = {}", s.ksize);
    let _ = writeln!(out, "reduction = {}", s.reduction);
    let _ = writeln!(out, "lr = {}", s.train.lr);
    let _ = writeln!(out, "batch = {}", s.train.batch_size);
    let _ = writeln!(out, "epochs = {}", s.train.max_epochs);
    let _ = writeln!(out, "patience = {}", s.train.patience);
    let _ = writeln!(out, "variant = {}", variant_label(s.train.variant));
    if s.seeds.len() == 1 {
        let _ = writeln!(out, "seed = {}", s.seeds[0]);
    } else {
        let list: Vec<String> = s.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "seeds = {}", list.join(","));
    }
    out
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let s = resolve(&args.common, args.seeds.as_deref(), args.variant.as_deref())?;
    let bundle = prepare_dataset(&s.data, s.split, s.seq_len, s.pred_len, &s.features)
        .map_err(CliError::from_lib)?;
    println!(
        "{}: {} train / {} val / {} test windows, {} variables, {} stamp features",
        s.data.display(),
        bundle.train.len(),
        bundle.val.len(),
        bundle.test.len(),
        bundle.n_vars,
        bundle.feature_dim
    );
    let model_cfg = model_config(&s, bundle.n_vars, s.beta)?;
    create_out_dir(&s.out_dir)?;

    let multi = s.seeds.len() > 1;
    let mut records = Vec::new();
    let (mut mses, mut maes) = (Vec::new(), Vec::new());
    for &seed in &s.seeds {
        let cfg = TrainConfig {
            seed,
            ..s.train.clone()
        };
        let t0 = Instant::now();
        let outcome =
            train_model(&model_cfg, &cfg, &bundle.train, &bundle.val).map_err(CliError::from_lib)?;
        let test = evaluate(&outcome.model, &bundle.test, cfg.variant).map_err(CliError::from_lib)?;
        println!(
            "seed {seed}: {} epochs, best {} (val mse {:.4}); test mse {:.4}, mae {:.4} ({:.1}s)",
            outcome.log.len(),
            outcome.best_epoch,
            outcome.best_val_mse,
            test.mse,
            test.mae,
            t0.elapsed().as_secs_f64()
        );
        let suffix = if multi {
            format!("_{seed}")
        } else {
            String::new()
        };
        outcome
            .model
            .save(&s.out_dir.join(format!("model{suffix}.bin")))
            .map_err(CliError::from_lib)?;
        write_train_log(&s.out_dir.join(format!("train_log{suffix}.csv")), &outcome.log)
            .map_err(CliError::from_lib)?;
        records.push(MetricsRecord {
            dataset: stem_of(&s.data),
            seq_len: s.seq_len,
            pred_len: s.pred_len,
            features: s.features.label(),
            beta: s.beta,
            seed,
            mse: test.mse,
            mae: test.mae,
        });
        mses.push(test.mse);
        maes.push(test.mae);
    }
    MetricsRecord::write_json(&s.out_dir.join("metrics.json"), &records)
        .map_err(CliError::from_lib)?;
    write_file(&s.out_dir.join("config.txt"), &render_config(&s))?;
    if multi {
        let (mse_mean, mse_std) = mean_std(&mses);
        let (mae_mean, mae_std) = mean_std(&maes);
        println!(
            "mean over {} seeds: mse {mse_mean:.4} ± {mse_std:.4}, mae {mae_mean:.4} ± {mae_std:.4}",
            s.seeds.len()
        );
    }
    println!("artifacts in {}", s.out_dir.display());
    Ok(())
}

/// Feature-ablation grid; `x` is the stampless baseline (beta pinned to 1,
/// which reduces the model to the pure linear backbone).
const FEATURE_GRID: [&str; 9] = [
    "x", "H", "H_D", "H_M", "H_S", "H_D_M", "H_D_S", "H_M_S", "H_D_M_S",
];

fn cmd_ablate_features(args: AblateArgs) -> Result<(), CliError> {
    let s = resolve(&args.common, None, None)?;
    create_out_dir(&s.out_dir)?;
    let mut csv = String::from("features,beta,mse,mae\n");
    println!("{:<10} {:>5} {:>9} {:>9}", "features", "beta", "mse", "mae");
    for label in FEATURE_GRID {
        let (spec_label, beta) = if label == "x" {
            ("H", 1.0)
        } else {
            (label, s.beta)
        };
        let spec = FeatureSpec::parse(spec_label).map_err(CliError::from_lib)?;
        let bundle = prepare_dataset(&s.data, s.split, s.seq_len, s.pred_len, &spec)
            .map_err(CliError::from_lib)?;
        let mut cfg = ModelConfig::new(spec, s.seq_len, s.pred_len, bundle.n_vars, beta);
        cfg.ksize = s.ksize;
        cfg.reduction_rate = s.reduction;
        cfg.validate().map_err(CliError::from_lib)?;
        let outcome = train_model(&cfg, &s.train, &bundle.train, &bundle.val)
            .map_err(CliError::from_lib)?;
        let test =
            evaluate(&outcome.model, &bundle.test, s.train.variant).map_err(CliError::from_lib)?;
        println!("{label:<10} {beta:>5.2} {:>9.4} {:>9.4}", test.mse, test.mae);
        let _ = writeln!(csv, "{label},{beta},{},{}", test.mse, test.mae);
    }
    let path = s.out_dir.join("ablate_features.csv");
    write_file(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_ablate_decoder(args: AblateArgs) -> Result<(), CliError> {
    let s = resolve(&args.common, None, None)?;
    let bundle = prepare_dataset(&s.data, s.split, s.seq_len, s.pred_len, &s.features)
        .map_err(CliError::from_lib)?;
    let model_cfg = model_config(&s, bundle.n_vars, s.beta)?;
    create_out_dir(&s.out_dir)?;
    let mut csv = String::from("variant,label,beta,mse,mae\n");
    println!("{:<2} {:<22} {:>9} {:>9}", "v", "label", "mse", "mae");
    for variant in DecoderVariant::ALL {
        let cfg = TrainConfig {
            variant,
            ..s.train.clone()
        };
        let outcome = train_model(&model_cfg, &cfg, &bundle.train, &bundle.val)
            .map_err(CliError::from_lib)?;
        let test = evaluate(&outcome.model, &bundle.test, variant).map_err(CliError::from_lib)?;
        println!(
            "{:<2} {:<22} {:>9.4} {:>9.4}",
            variant.index(),
            variant_label(variant),
            test.mse,
            test.mae
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            variant.index(),
            variant_label(variant),
            s.beta,
            test.mse,
            test.mae
        );
    }
    let path = s.out_dir.join("ablate_decoder.csv");
    write_file(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_acf(args: AcfArgs) -> Result<(), CliError> {
    if args.downsample == 0 {
        return Err(CliError::Usage("downsample factor must be at least 1".into()));
    }
    let ds = load_csv(&args.data).map_err(CliError::from_lib)?;
    let Some(col) = ds.column_index(&args.column) else {
        return Err(CliError::Usage(format!(
            "column {:?} not in {} (available: {})",
            args.column,
            args.data.display(),
            ds.names.join(", ")
        )));
    };
    let mut series = ds.column(col);
    if args.downsample > 1 {
        series = downsample(&series, args.downsample).map_err(CliError::from_lib)?;
    }
    let rho = acf(&series, args.max_lag).map_err(CliError::from_lib)?;
    let mut csv = String::from("lag,rho\n");
    for (lag, r) in rho.iter().enumerate() {
        let _ = writeln!(csv, "{lag},{r:.6}");
    }
    print!("{csv}");
    let peaks = find_peaks(&rho, 1);
    if peaks.is_empty() {
        println!("peaks: none");
    } else {
        let dominant = peaks
            .iter()
            .copied()
            .max_by(|a, b| rho[*a].total_cmp(&rho[*b]))
            .expect("non-empty");
        let list: Vec<String> = peaks.iter().map(usize::to_string).collect();
        println!("peaks: {}", list.join(", "));
        println!("dominant peak: lag {dominant} (rho {:.4})", rho[dominant]);
    }
    if let Some(out) = &args.out {
        write_file(out, &csv)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
