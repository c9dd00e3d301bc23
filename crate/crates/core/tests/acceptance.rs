//! Acceptance criteria, one line of output each.
//!
//! Runs as a plain binary so the PASS/FAIL lines are always printed. Pass
//! criterion numbers or name substrings as arguments to run a subset, and set
//! `RIS_FULL_SCALE=1` to include the full-scale reproduction.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use num_complex::Complex64;
use rand::Rng;

use ris_core::dataset::{generate_samples, to_example, AngularGrid, Scenario, INPUTS_FILE, TARGETS_FILE};
use ris_core::harness::{read_history_csv, read_report_csv, EvalRow};
use ris_core::nn::{evaluate, predict_config, train, AdamConfig, AdamState, Example, Model, TrainConfig};
use ris_core::optimize::{exhaustive_optimize, gim_optimize, im_optimize, Orientation};
use ris_core::physics::{
    cascade_gain, compute_channels, compute_illumination, flip_delta, objective, received_power_db,
    scattered_field, simulate_received_signal, Illumination, PhaseConfig, PhaseTable, RisGeometry, RxSpec,
    TxSpec,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

/// Training settings for the desk-scale run.
const DESK_EPOCHS: &str = "40";
const DESK_BATCH: &str = "8";

fn ris(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ris"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "ris {args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn steps_line(out: &str) -> Option<usize> {
    out.lines().find_map(|l| l.strip_prefix("steps=")?.parse().ok())
}

fn step_counts() -> Outcome {
    let scenario = Scenario::new(
        RisGeometry::half_wavelength(40, 40, 5e9).unwrap(),
        PhaseTable::binary(),
        TxSpec::default(),
        10.0,
    )
    .unwrap();
    let table = PhaseTable::binary();
    let ch = scenario.channels(30.0, 120.0).unwrap();
    let model = Model::standard(0);

    let start = Instant::now();
    let (_, im) = im_optimize(&ch, &table, &PhaseConfig::zeros(40, 40, table.clone())).unwrap();
    let (h, th) = gim_optimize(&ch, &table, Orientation::Horizontal).unwrap();
    let (v, tv) = gim_optimize(&ch, &table, Orientation::Vertical).unwrap();
    predict_config(&model, &h, &v, &table).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.bin");
    ris_core::nn::save_weights(
        &weights,
        &ris_core::nn::WeightsFile {
            model,
            input_hw: Some((40, 40)),
        },
    )
    .unwrap();
    let mut cli = Vec::new();
    for method in ["im", "gim", "cnn"] {
        let out = ris(&[
            "optimize",
            "--method",
            method,
            "--el",
            "30",
            "--az",
            "120",
            "--weights",
            s(&weights),
        ])?;
        cli.push(steps_line(&out).ok_or("no steps line")?);
    }
    check(
        im.steps == 3200 && th.steps + tv.steps == 160 && cli == [3200, 160, 160] && elapsed < 1.0,
        format!(
            "library im={} gim={}, cli im/gim/cnn={:?}, all three pipelines in {elapsed:.3} s",
            im.steps,
            th.steps + tv.steps,
            cli
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut r = rng(2024);
    let (mut field_err, mut cascade_err, mut power_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let geom = random_geometry(&mut r);
        let tx = random_tx(&mut r);
        let illum = compute_illumination(&geom, &tx).unwrap();
        let table = PhaseTable::uniform(r.gen_range(2..=4)).unwrap();
        let (rows, cols) = geom.shape();
        let cfg = random_config(&mut r, rows, cols, &table);
        let (el, az) = (r.gen_range(-89.0..89.0), r.gen_range(0.0..360.0));

        let got = scattered_field(&geom, &illum, &cfg, el, az).unwrap();
        let (want, scale) = naive_field(&geom, &illum, &cfg, el, az);
        field_err = field_err.max((got - want).norm() / scale);

        let ch = compute_channels(&geom, &illum, &RxSpec::new(10.0, el, az).unwrap()).unwrap();
        let (want, scale) = naive_cascade(&ch, &cfg);
        cascade_err = cascade_err.max((cascade_gain(&ch, &cfg).unwrap() - want).norm() / scale);

        let x: Vec<Complex64> = (0..64).map(|_| random_complex(&mut r)).collect();
        let y = simulate_received_signal(&ch, &cfg, &x, 1e-6, r.gen()).unwrap();
        let (got, want) = (received_power_db(&y).unwrap(), naive_power_db(&y));
        power_err = power_err.max((got - want).abs() / want.abs());
    }

    let table = PhaseTable::uniform(4).unwrap();
    let ch = random_channels(&mut r, 8, 8);
    let mut cfg = random_config(&mut r, 8, 8, &table);
    let mut sum = cascade_gain(&ch, &cfg).unwrap();
    let mut flip_err = 0.0f64;
    for _ in 0..10_000 {
        let (row, col, st) = (r.gen_range(0..8), r.gen_range(0..8), r.gen_range(0..4u8));
        sum = flip_delta(&ch, &cfg, row, col, st, sum).unwrap();
        cfg.set_state(row, col, st).unwrap();
        let (full, scale) = naive_cascade(&ch, &cfg);
        flip_err = flip_err.max((sum - full).norm() / scale);
    }
    check(
        field_err < 1e-12 && cascade_err < 1e-12 && power_err < 1e-12 && flip_err < 1e-9,
        format!(
            "max rel err field {field_err:.1e}, cascade {cascade_err:.1e}, power {power_err:.1e}; \
             10000 flips {flip_err:.1e}"
        ),
    )
}

fn broadside_identity() -> Outcome {
    let mut worst = 0.0f64;
    for (m, n) in [(40, 40), (8, 5), (3, 7)] {
        let geom = RisGeometry::half_wavelength(m, n, 5e9).unwrap();
        let illum = Illumination::unit(&geom);
        let cfg = PhaseConfig::zeros(n, m, PhaseTable::binary());
        for az in [0.0, 37.0, 90.0, 180.0, 271.0] {
            let e = scattered_field(&geom, &illum, &cfg, 0.0, az).unwrap().norm();
            let want = (m * n) as f64;
            worst = worst.max((e - want).abs() / want);
        }
    }
    check(
        worst <= 1e-9,
        format!("40x40, 8x5, 3x7 at five azimuths, max rel err {worst:.1e}"),
    )
}

fn greedy_vs_exhaustive() -> Outcome {
    let mut r = rng(77);
    let table = PhaseTable::binary();
    let mut hits = 0;
    for i in 0..100 {
        let ch = random_channels(&mut r, 2, 3);
        let zero = PhaseConfig::zeros(2, 3, table.clone());
        let (_, best) = exhaustive_optimize(&ch, &table).unwrap();
        let (_, trace) = im_optimize(&ch, &table, &zero).unwrap();
        let (im, z) = (trace.final_objective, objective(&ch, &zero).unwrap());
        let slack = 1e-12 * best;
        if !(best + slack >= im && im + slack >= z) {
            return Err(format!("instance {i}: exhaustive {best}, IM {im}, zero {z}"));
        }
        if im + slack >= best {
            hits += 1;
        }
    }
    check(
        hits > 50,
        format!("ordering held on 100/100; IM reached the optimum on {hits}/100"),
    )
}

fn cnn_numerics() -> Outcome {
    let grad_err = (1..=3).map(gradient_check_max_rel_error).fold(0.0f64, f64::max);

    // Two hand-computed ADAM steps on a scalar.
    let cfg = AdamConfig {
        lr: 0.01,
        beta1: 0.8,
        beta2: 0.9,
        epsilon: 1e-6,
    };
    let mut theta = [0.5];
    let mut state = AdamState::new(cfg, [1]);
    let (g1, g2) = (0.3, -0.7);
    state.step(&mut [&mut theta], &[vec![g1]]).unwrap();
    state.step(&mut [&mut theta], &[vec![g2]]).unwrap();
    let (m1, v1) = (0.2 * g1, 0.1 * g1 * g1);
    let t1 = 0.5 - 0.01 * (m1 / 0.2) / ((v1 / 0.1f64).sqrt() + 1e-6);
    let (m2, v2) = (0.8 * m1 + 0.2 * g2, 0.9 * v1 + 0.1 * g2 * g2);
    let t2 = t1 - 0.01 * (m2 / (1.0 - 0.64)) / ((v2 / (1.0 - 0.81f64)).sqrt() + 1e-6);
    let adam_err = (theta[0] - t2).abs();

    // Overfit eight 8x8 samples with the standard architecture. Distinct
    // directions can share identical stripe inputs with different targets,
    // which no network can fit, so only the first eight distinct inputs
    // are kept.
    let scenario = Scenario::new(
        RisGeometry::half_wavelength(8, 8, 5e9).unwrap(),
        PhaseTable::binary(),
        TxSpec::default(),
        10.0,
    )
    .unwrap();
    let grid = AngularGrid {
        azimuth_start: 30.0,
        azimuth_stop: 150.0,
        elevation_start: -45.0,
        elevation_stop: 45.0,
        step: 30.0,
    };
    let mut examples: Vec<Example> = Vec::new();
    for sample in generate_samples(&scenario, &grid).unwrap() {
        let ex = to_example(&sample).unwrap();
        if examples.len() < 8 && examples.iter().all(|e| e.input != ex.input) {
            examples.push(ex);
        }
    }
    assert_eq!(examples.len(), 8);
    let train_cfg = TrainConfig {
        batch_size: 8,
        max_epochs: 2000,
        patience: 2000,
        ..TrainConfig::default()
    };
    let (model, history) = train(Model::standard(0), &examples, &examples, &train_cfg).unwrap();
    let mse = evaluate(&model, &examples).unwrap();
    let reached = history.epochs.iter().find(|e| e.val_loss < 1e-2).map(|e| e.epoch);
    check(
        grad_err < 1e-4 && adam_err < 1e-12 && reached.is_some(),
        format!(
            "grad check {grad_err:.1e}, adam {adam_err:.1e}, overfit MSE<1e-2 at epoch {}, final {mse:.1e}",
            reached.map_or("never".to_string(), |e| e.to_string())
        ),
    )
}

fn early_stopping() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ris(&[
        "generate",
        "--ris-m",
        "6",
        "--ris-n",
        "5",
        "--grid-step",
        "30",
        "--out",
        s(&data),
    ])?;
    let w = dir.path().join("w.bin");
    ris(&[
        "train",
        "--data",
        s(&data),
        "--lr",
        "0",
        "--weights-out",
        s(&w),
        "--quiet",
    ])?;
    let history = read_history_csv(&dir.path().join("w.history.csv")).map_err(|e| e.to_string())?;
    let constant = history.windows(2).all(|p| p[0].val_loss == p[1].val_loss);
    check(
        history.len() == 11 && constant,
        format!(
            "lr 0 gives constant val loss: {constant}; history rows {}",
            history.len()
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct GapStats {
    gim_median: f64,
    cnn_median: f64,
    cnn_band_mean: f64,
    gim_band_mean: f64,
    cnn_max: f64,
}

fn gap_stats(rows: &[EvalRow]) -> GapStats {
    let band: Vec<&EvalRow> = rows.iter().filter(|r| r.elevation_deg.abs() <= 45.0).collect();
    GapStats {
        gim_median: median(rows.iter().map(|r| r.gap_gim_db).collect()),
        cnn_median: median(rows.iter().map(|r| r.gap_cnn_db).collect()),
        cnn_band_mean: mean(&band.iter().map(|r| r.gap_cnn_db).collect::<Vec<_>>()),
        gim_band_mean: mean(&band.iter().map(|r| r.gap_gim_db).collect::<Vec<_>>()),
        cnn_max: rows
            .iter()
            .map(|r| r.gap_cnn_db)
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Generate, train and evaluate with default geometry; returns test rows.
fn end_to_end(dir: &Path, grid_step: &str, epochs: &str, batch: &str) -> Result<Vec<EvalRow>, String> {
    let data = dir.join("data");
    ris(&["generate", "--grid-step", grid_step, "--out", s(&data)])?;
    let w = dir.join("cnn.bin");
    ris(&[
        "train",
        "--data",
        s(&data),
        "--max-epochs",
        epochs,
        "--batch",
        batch,
        "--weights-out",
        s(&w),
        "--quiet",
    ])?;
    let report = dir.join("report.csv");
    ris(&[
        "eval",
        "--data",
        s(&data),
        "--weights",
        s(&w),
        "--report-out",
        s(&report),
    ])?;
    read_report_csv(&report).map_err(|e| e.to_string())
}

fn desk_scale() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let rows = end_to_end(dir.path(), "5", DESK_EPOCHS, DESK_BATCH)?;
    let g = gap_stats(&rows);
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    check(
        g.cnn_median <= g.gim_median && g.cnn_band_mean <= 3.0,
        format!(
            "{} test samples; median gap CNN {:.2} dB vs G-IM {:.2} dB; mean CNN gap |el|<=45 {:.2} dB \
             (G-IM {:.2}); {minutes:.0} min",
            rows.len(),
            g.cnn_median,
            g.gim_median,
            g.cnn_band_mean,
            g.gim_band_mean
        ),
    )
}

fn full_scale() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let rows = end_to_end(dir.path(), "1", "500", "32")?;
    let g = gap_stats(&rows);
    Ok(format!(
        "report only: max CNN gap {:.2} dB (target about 6 dB), median {:.2} dB",
        g.cnn_max, g.cnn_median
    ))
}

fn determinism() -> Outcome {
    let mut files: Vec<Vec<Vec<u8>>> = Vec::new();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let d = dir.path();
        let data = d.join("data");
        ris(&[
            "generate",
            "--ris-m",
            "6",
            "--ris-n",
            "5",
            "--grid-step",
            "30",
            "--seed",
            "9",
            "--out",
            s(&data),
        ])?;
        let w = d.join("w.bin");
        ris(&[
            "train",
            "--data",
            s(&data),
            "--max-epochs",
            "3",
            "--seed",
            "9",
            "--weights-out",
            s(&w),
            "--quiet",
        ])?;
        let report = d.join("r.csv");
        ris(&[
            "eval",
            "--data",
            s(&data),
            "--weights",
            s(&w),
            "--report-out",
            s(&report),
            "--snr",
            "5",
            "--seed",
            "9",
        ])?;
        let paths = [
            data.join(INPUTS_FILE),
            data.join(TARGETS_FILE),
            data.join("samples.csv"),
            data.join("manifest.json"),
            w.clone(),
            d.join("w.history.csv"),
            report,
        ];
        files.push(paths.iter().map(|p| std::fs::read(p).unwrap()).collect());
    }
    let same = files[0] == files[1];
    check(
        same,
        format!("7 output files byte-identical across two runs: {same}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1", "step counts", step_counts),
        ("2", "physics oracle equivalence", oracle_equivalence),
        ("3", "broadside identity", broadside_identity),
        ("4", "greedy vs exhaustive", greedy_vs_exhaustive),
        ("5", "CNN numerics", cnn_numerics),
        ("6", "early stopping", early_stopping),
        ("7", "desk-scale end-to-end", desk_scale),
        ("8", "full-scale reproduction", full_scale),
        ("9", "determinism", determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let full = std::env::var("RIS_FULL_SCALE").is_ok_and(|v| v == "1");
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str()) || id == f) {
            continue;
        }
        if id == "8" && !full {
            println!("criterion {id} ({name}): SKIP  set RIS_FULL_SCALE=1 to run");
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} ({name}): PASS  {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL  {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
