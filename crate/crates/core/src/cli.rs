//! `ris` command line: dataset generation, training, evaluation, single-angle
//! optimization and radiation-pattern export.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{
    generate_dataset, load_tensor, save_tensor, AngularGrid, Dataset, Scenario, SplitSpec, StoredTensor,
};
use crate::grid::Grid;
use crate::harness::{
    evaluate_report, sibling_path, write_history_csv, write_json, write_report_csv, NoiseSpec,
};
use crate::nn::{
    load_weights, predict_config, save_weights, train_with_progress, Model, TrainConfig, WeightsFile,
};
use crate::optimize::{
    combine_stripes, gim_optimize, im_optimize, step_count, Method as StepMethod, Orientation,
};
use crate::physics::{objective, radiation_pattern, PhaseConfig, PhaseTable, RisGeometry, TxSpec};

#[derive(Debug, Parser)]
#[command(name = "ris", version, about = "Binary-phase RIS optimization toolkit")]
pub struct Cli {
    /// Seed for splits, training shuffles, dropout and noise
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep receiver angles and write a dataset directory
    Generate(GenerateArgs),
    /// Train the stripe-completion network on a dataset
    Train(TrainArgs),
    /// Compare IM, G-IM and CNN-G-IM received power over a split
    Eval(EvalArgs),
    /// Optimize the surface for one receiver direction
    Optimize(OptimizeArgs),
    /// Export the radiation pattern of a stored configuration
    Pattern(PatternArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// Elements along x (columns)
    #[arg(long, default_value_t = 40)]
    pub ris_m: usize,
    /// Elements along y (rows)
    #[arg(long, default_value_t = 40)]
    pub ris_n: usize,
    #[arg(long, default_value_t = 5.0)]
    pub freq_ghz: f64,
    /// Element spacing in wavelengths
    #[arg(long, default_value_t = 0.5)]
    pub spacing: f64,
    /// Transmitter distance in meters
    #[arg(long, default_value_t = 1.0)]
    pub tx_dist: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub tx_el: f64,
    #[arg(long, default_value_t = 0.0)]
    pub tx_az: f64,
    /// Receiver distance in meters
    #[arg(long, default_value_t = 10.0)]
    pub rx_dist: f64,
    #[arg(long, default_value_t = 2)]
    pub phase_states: usize,
    /// Ignore the spherical phase of the incident wave
    #[arg(long)]
    pub flat_tx_phase: bool,
}

impl SceneArgs {
    pub fn scenario(&self) -> anyhow::Result<Scenario> {
        let geom =
            RisGeometry::with_spacing_wavelengths(self.ris_m, self.ris_n, self.freq_ghz * 1e9, self.spacing)?;
        let table = PhaseTable::uniform(self.phase_states)?;
        let tx = TxSpec {
            distance: self.tx_dist,
            elevation_deg: self.tx_el,
            azimuth_deg: self.tx_az,
            flat_phase: self.flat_tx_phase,
            ..TxSpec::default()
        };
        Ok(Scenario::new(geom, table, tx, self.rx_dist)?)
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Azimuth range `start,stop` in degrees (inclusive)
    #[arg(long, value_parser = parse_pair, default_value = "0,180", allow_hyphen_values = true)]
    pub grid_az: (f64, f64),
    /// Elevation range `start,stop` in degrees (inclusive)
    #[arg(long, value_parser = parse_pair, default_value = "-60,60", allow_hyphen_values = true)]
    pub grid_el: (f64, f64),
    #[arg(long, default_value_t = 1.0)]
    pub grid_step: f64,
    /// Train/val/test fractions
    #[arg(long, value_parser = parse_triple, default_value = "0.6,0.2,0.2", allow_hyphen_values = true)]
    pub split: [f64; 3],
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long)]
    pub weights_out: PathBuf,
    /// Defaults to `<weights stem>.history.csv`
    #[arg(long)]
    pub history_out: Option<PathBuf>,
    /// Continue from an existing weights file instead of a fresh initialization
    #[arg(long)]
    pub init_weights: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Per-sample CSV; the summary goes to `<stem>.summary.json`
    #[arg(long)]
    pub report_out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    /// Use sampled noisy received power at this SNR (dB, relative to IM)
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Im,
    Gim,
    Cnn,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Receiver elevation in degrees
    #[arg(long, allow_hyphen_values = true)]
    pub el: f64,
    /// Receiver azimuth in degrees
    #[arg(long, allow_hyphen_values = true)]
    pub az: f64,
    /// Required for `--method cnn`
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Write the state matrix as an `N × M` tensor file
    #[arg(long)]
    pub config_out: Option<PathBuf>,
    /// Also write the radiation pattern CSV of the result
    #[arg(long)]
    pub pattern_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub pattern_step: f64,
}

#[derive(Debug, Args)]
pub struct PatternArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// `N × M` tensor file of phase-state indices
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long, value_parser = parse_pair, default_value = "-90,90", allow_hyphen_values = true)]
    pub el_range: (f64, f64),
    #[arg(long, value_parser = parse_pair, default_value = "0,180", allow_hyphen_values = true)]
    pub az_range: (f64, f64),
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_list<const K: usize>(s: &str) -> Result<[f64; K], String> {
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {K} comma-separated numbers, got {}", v.len()))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    parse_list::<2>(s).map(|[a, b]| (a, b))
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    parse_list::<3>(s)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&args, cli.seed),
        Command::Train(args) => cmd_train(&args, cli.seed),
        Command::Eval(args) => cmd_eval(&args, cli.seed),
        Command::Optimize(args) => cmd_optimize(&args),
        Command::Pattern(args) => cmd_pattern(&args),
    }
}

fn cmd_generate(args: &GenerateArgs, seed: u64) -> anyhow::Result<()> {
    let scenario = args.scene.scenario()?;
    let grid = AngularGrid {
        azimuth_start: args.grid_az.0,
        azimuth_stop: args.grid_az.1,
        elevation_start: args.grid_el.0,
        elevation_stop: args.grid_el.1,
        step: args.grid_step,
    };
    let split = SplitSpec {
        ratios: args.split,
        seed,
    };
    let manifest = generate_dataset(&scenario, &grid, split, &args.out)
        .with_context(|| format!("generating dataset in {}", args.out.display()))?;
    let c = manifest.counts;
    println!(
        "samples={} train={} val={} test={}",
        c.total, c.train, c.val, c.test
    );
    println!(
        "manifest={}",
        args.out.join(crate::dataset::MANIFEST_FILE).display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainRun<'a> {
    data: &'a Path,
    config: TrainConfig,
    parameter_count: usize,
    train_samples: usize,
    val_samples: usize,
    epochs_run: usize,
    stopped_early: bool,
    best_val_loss: Option<f64>,
}

fn cmd_train(args: &TrainArgs, seed: u64) -> anyhow::Result<()> {
    let dataset =
        Dataset::load(&args.data).with_context(|| format!("loading dataset {}", args.data.display()))?;
    let split = dataset.manifest.split()?;
    let train_set = dataset.examples(&split.train)?;
    let val_set = dataset.examples(&split.val)?;
    let hw = (dataset.manifest.geometry.n_rows, dataset.manifest.geometry.m_cols);

    let model = match &args.init_weights {
        Some(path) => {
            let file = load_weights(path)?;
            check_input_hw(&file, hw)?;
            file.model
        }
        None => Model::standard(seed),
    };
    let cfg = TrainConfig {
        batch_size: args.batch,
        max_epochs: args.max_epochs,
        patience: args.patience,
        rng_seed: seed,
        lr: args.lr,
        ..TrainConfig::default()
    };
    let parameter_count = model.parameter_count();
    let quiet = args.quiet;
    let (model, history) = train_with_progress(model, &train_set, &val_set, &cfg, |r| {
        if !quiet {
            eprintln!(
                "epoch {:>4}  train {:.6}  val {:.6}",
                r.epoch, r.train_loss, r.val_loss
            );
        }
    })?;

    save_weights(
        &args.weights_out,
        &WeightsFile {
            model,
            input_hw: Some(hw),
        },
    )
    .with_context(|| format!("writing {}", args.weights_out.display()))?;
    let history_path = args
        .history_out
        .clone()
        .unwrap_or_else(|| sibling_path(&args.weights_out, "history.csv"));
    write_history_csv(&history_path, &history.epochs)?;
    write_json(
        &sibling_path(&args.weights_out, "run.json"),
        &TrainRun {
            data: &args.data,
            config: cfg,
            parameter_count,
            train_samples: train_set.len(),
            val_samples: val_set.len(),
            epochs_run: history.epochs.len(),
            stopped_early: history.stopped_early,
            best_val_loss: history.epochs.iter().map(|r| r.val_loss).reduce(f64::min),
        },
    )?;
    println!(
        "epochs={} stopped_early={} weights={} history={}",
        history.epochs.len(),
        history.stopped_early,
        args.weights_out.display(),
        history_path.display()
    );
    Ok(())
}

fn check_input_hw(file: &WeightsFile, hw: (usize, usize)) -> anyhow::Result<()> {
    if let Some(trained) = file.input_hw {
        ensure!(
            trained == hw,
            "weights were trained on {}x{} inputs but the surface is {}x{}",
            trained.0,
            trained.1,
            hw.0,
            hw.1
        );
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs, seed: u64) -> anyhow::Result<()> {
    let dataset =
        Dataset::load(&args.data).with_context(|| format!("loading dataset {}", args.data.display()))?;
    let file =
        load_weights(&args.weights).with_context(|| format!("loading weights {}", args.weights.display()))?;
    check_input_hw(
        &file,
        (dataset.manifest.geometry.n_rows, dataset.manifest.geometry.m_cols),
    )?;
    let split = dataset.manifest.split()?;
    let indices = match args.split {
        SplitName::Train => split.train,
        SplitName::Val => split.val,
        SplitName::Test => split.test,
        SplitName::All => (0..dataset.samples.len()).collect(),
    };
    let noise = args.snr.map(|snr_db| NoiseSpec { snr_db, seed });
    let report = evaluate_report(&dataset, &indices, &file.model, noise)?;
    write_report_csv(&args.report_out, &report.rows)
        .with_context(|| format!("writing {}", args.report_out.display()))?;
    let summary_path = sibling_path(&args.report_out, "summary.json");
    write_json(&summary_path, &report.summary)?;

    let s = &report.summary;
    println!("samples={}", s.samples);
    for (name, g) in [("gim", &s.gim), ("cnn", &s.cnn)] {
        let band = g
            .mean_within_45
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        println!(
            "gap_{name}_db max={:.4} mean={:.4} median={:.4} mean_within_45={band}",
            g.max, g.mean, g.median
        );
    }
    println!(
        "report={} summary={}",
        args.report_out.display(),
        summary_path.display()
    );
    Ok(())
}

fn cmd_optimize(args: &OptimizeArgs) -> anyhow::Result<()> {
    let scenario = args.scene.scenario()?;
    let geom = &scenario.geometry;
    let table = &scenario.table;
    let ch = scenario.channels(args.el, args.az)?;
    let p = table.len();

    let (cfg, steps) = match args.method {
        Method::Im => {
            let init = PhaseConfig::zeros_for(geom, table.clone());
            let (cfg, trace) = im_optimize(&ch, table, &init)?;
            (cfg, trace.steps)
        }
        Method::Gim | Method::Cnn => {
            let (h, th) = gim_optimize(&ch, table, Orientation::Horizontal)?;
            let (v, tv) = gim_optimize(&ch, table, Orientation::Vertical)?;
            debug_assert_eq!(
                th.steps + tv.steps,
                step_count(StepMethod::Gim, geom.m_cols, geom.n_rows, p)
            );
            let cfg = if args.method == Method::Gim {
                combine_stripes(&h, &v, table)?
            } else {
                let Some(path) = &args.weights else {
                    bail!("--method cnn requires --weights");
                };
                let file =
                    load_weights(path).with_context(|| format!("loading weights {}", path.display()))?;
                check_input_hw(&file, geom.shape())?;
                predict_config(&file.model, &h, &v, table)?
            };
            (cfg, th.steps + tv.steps)
        }
    };
    let obj = objective(&ch, &cfg)?;
    println!("steps={steps}");
    println!("objective_db={:.6}", 20.0 * obj.log10());

    if let Some(path) = &args.config_out {
        write_config(path, &cfg)?;
        println!("config={}", path.display());
    }
    if let Some(path) = &args.pattern_out {
        let range = AngularGrid {
            azimuth_start: 0.0,
            azimuth_stop: 180.0,
            elevation_start: -90.0,
            elevation_stop: 90.0,
            step: args.pattern_step,
        };
        write_pattern(&scenario, &cfg, &range, path)?;
        println!("pattern={}", path.display());
    }
    Ok(())
}

/// Stores phase-state indices as an `N × M` tensor.
pub fn write_config(path: &Path, cfg: &PhaseConfig) -> anyhow::Result<()> {
    let (rows, cols) = cfg.shape();
    let data = cfg.states().iter().map(|&s| s as f32).collect();
    save_tensor(path, &StoredTensor::new(vec![rows, cols], data)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_config(path: &Path, table: &PhaseTable) -> anyhow::Result<PhaseConfig> {
    let t = load_tensor(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(
        t.shape.len() == 2,
        "{}: expected a rank-2 state matrix, found shape {:?}",
        path.display(),
        t.shape
    );
    let states = t
        .data
        .iter()
        .map(|&v| {
            ensure!(
                v >= 0.0 && v.fract() == 0.0 && (v as usize) < table.len(),
                "{}: {v} is not a state index below {}",
                path.display(),
                table.len()
            );
            Ok(v as u8)
        })
        .collect::<anyhow::Result<Vec<u8>>>()?;
    Ok(PhaseConfig::new(
        Grid::from_vec(t.shape[0], t.shape[1], states)?,
        table.clone(),
    )?)
}

#[derive(Serialize)]
struct PatternRow {
    elevation: f64,
    azimuth: f64,
    power_db: f64,
}

fn write_pattern(
    scenario: &Scenario,
    cfg: &PhaseConfig,
    range: &AngularGrid,
    out: &Path,
) -> anyhow::Result<()> {
    range.validate()?;
    let (els, azs) = (range.elevations(), range.azimuths());
    let pattern = radiation_pattern(&scenario.geometry, scenario.illumination(), cfg, &els, &azs)?;
    let mut w = csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
    for (i, &elevation) in els.iter().enumerate() {
        for (j, &azimuth) in azs.iter().enumerate() {
            w.serialize(PatternRow {
                elevation,
                azimuth,
                power_db: pattern.power_db[(i, j)],
            })?;
        }
    }
    w.flush()?;
    let (el, az, db) = pattern.peak();
    println!("peak elevation={el} azimuth={az} power_db={db:.6}");
    Ok(())
}

fn cmd_pattern(args: &PatternArgs) -> anyhow::Result<()> {
    let scenario = args.scene.scenario()?;
    let cfg = read_config(&args.config, &scenario.table)?;
    let expected = scenario.geometry.shape();
    ensure!(
        cfg.shape() == expected,
        "config is {}x{} but the surface is {}x{} (rows x columns)",
        cfg.shape().0,
        cfg.shape().1,
        expected.0,
        expected.1
    );
    let range = AngularGrid {
        azimuth_start: args.az_range.0,
        azimuth_stop: args.az_range.1,
        elevation_start: args.el_range.0,
        elevation_stop: args.el_range.1,
        step: args.step,
    };
    write_pattern(&scenario, &cfg, &range, &args.out)?;
    println!("pattern={}", args.out.display());
    Ok(())
}
