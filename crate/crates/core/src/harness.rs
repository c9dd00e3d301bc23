//! Received-power comparison of IM, combined G-IM stripes and the
//! CNN-completed stripes over a dataset split.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample, Scenario};
use crate::error::{Error, Result};
use crate::nn::{mix_seed, predict_config, EpochRecord, Model};
use crate::physics::{
    cascade_gain, objective, received_power_db, simulate_received_signal, ChannelMatrices, PhaseConfig,
};

/// Elevation half-width of the band summarised separately.
pub const BAND_HALF_WIDTH_DEG: f64 = 45.0;
/// Baseband symbols per sample on the noisy path.
pub const NOISY_SYMBOLS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    #[serde(rename = "azimuth")]
    pub azimuth_deg: f64,
    #[serde(rename = "elevation")]
    pub elevation_deg: f64,
    pub p_im_db: f64,
    pub p_gim_db: f64,
    pub p_cnn_db: f64,
    pub gap_gim_db: f64,
    pub gap_cnn_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    /// `None` when no row lies inside the band.
    pub mean_within_45: Option<f64>,
}

impl GapSummary {
    /// `rows` pairs elevation with gap.
    pub fn from_gaps(rows: &[(f64, f64)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("evaluation rows"));
        }
        let mut gaps: Vec<f64> = rows.iter().map(|&(_, g)| g).collect();
        gaps.sort_by(f64::total_cmp);
        let n = gaps.len();
        let median = if n % 2 == 1 {
            gaps[n / 2]
        } else {
            0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
        };
        let band: Vec<f64> = rows
            .iter()
            .filter(|(el, _)| el.abs() <= BAND_HALF_WIDTH_DEG)
            .map(|&(_, g)| g)
            .collect();
        Ok(Self {
            max: gaps[n - 1],
            mean: gaps.iter().sum::<f64>() / n as f64,
            median,
            mean_within_45: (!band.is_empty()).then(|| band.iter().sum::<f64>() / band.len() as f64),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub samples: usize,
    /// `None` for the noiseless comparison.
    pub snr_db: Option<f64>,
    pub gim: GapSummary,
    pub cnn: GapSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub summary: EvalSummary,
}

/// Noisy received-power path: the noise level is set so that the IM
/// configuration sees `snr_db`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

/// Noiseless received power `20·log10 |G|`.
pub fn power_db(ch: &ChannelMatrices, cfg: &PhaseConfig) -> Result<f64> {
    let obj = objective(ch, cfg)?;
    if obj == 0.0 {
        return Err(Error::DegeneratePower);
    }
    Ok(20.0 * obj.log10())
}

fn noisy_power_db(ch: &ChannelMatrices, cfg: &PhaseConfig, sigma: f64, seed: u64) -> Result<f64> {
    let x = vec![Complex64::new(1.0, 0.0); NOISY_SYMBOLS];
    let y = simulate_received_signal(ch, cfg, &x, sigma, seed)?;
    received_power_db(&y)
}

fn evaluate_sample(
    scenario: &Scenario,
    sample: &Sample,
    model: &Model,
    noise: Option<(NoiseSpec, u64)>,
) -> Result<EvalRow> {
    let ch = scenario.channels(sample.elevation_deg, sample.azimuth_deg)?;
    let gim_cfg = sample.combined_stripes()?;
    let cnn_cfg = predict_config(model, &sample.h_cfg, &sample.v_cfg, &scenario.table)?;
    let configs = [&sample.ref_cfg, &gim_cfg, &cnn_cfg];
    let powers = match noise {
        None => configs.map(|c| power_db(&ch, c)),
        Some((spec, sample_seed)) => {
            let signal = cascade_gain(&ch, &sample.ref_cfg)?.norm();
            let sigma = signal / 10f64.powf(spec.snr_db / 20.0);
            let mut k = 0;
            configs.map(|c| {
                k += 1;
                noisy_power_db(&ch, c, sigma, mix_seed(sample_seed, k))
            })
        }
    };
    let [p_im_db, p_gim_db, p_cnn_db] = powers;
    let (p_im_db, p_gim_db, p_cnn_db) = (p_im_db?, p_gim_db?, p_cnn_db?);
    Ok(EvalRow {
        azimuth_deg: sample.azimuth_deg,
        elevation_deg: sample.elevation_deg,
        p_im_db,
        p_gim_db,
        p_cnn_db,
        gap_gim_db: p_im_db - p_gim_db,
        gap_cnn_db: p_im_db - p_cnn_db,
    })
}

/// Compares the three methods on `indices` (in the given order).
pub fn evaluate_report(
    dataset: &Dataset,
    indices: &[usize],
    model: &Model,
    noise: Option<NoiseSpec>,
) -> Result<EvalReport> {
    let manifest = &dataset.manifest;
    let (rows, cols) = (manifest.geometry.n_rows, manifest.geometry.m_cols);
    if model.input_channels() != 2 {
        return Err(Error::dims(&[2], &[model.input_channels()]));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= dataset.samples.len()) {
        return Err(Error::OutOfRange(format!(
            "sample index {bad} of {}",
            dataset.samples.len()
        )));
    }
    if rows < model.max_kernel() || cols < model.max_kernel() {
        return Err(Error::dims(
            &[model.max_kernel(), model.max_kernel()],
            &[rows, cols],
        ));
    }
    let scenario = Scenario::from_manifest(manifest)?;
    let out = indices
        .par_iter()
        .map(|&i| {
            let noise = noise.map(|n| (n, mix_seed(n.seed, i as u64)));
            evaluate_sample(&scenario, &dataset.samples[i], model, noise)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = EvalSummary {
        samples: out.len(),
        snr_db: noise.map(|n| n.snr_db),
        gim: GapSummary::from_gaps(
            &out.iter()
                .map(|r| (r.elevation_deg, r.gap_gim_db))
                .collect::<Vec<_>>(),
        )?,
        cnn: GapSummary::from_gaps(
            &out.iter()
                .map(|r| (r.elevation_deg, r.gap_cnn_db))
                .collect::<Vec<_>>(),
        )?,
    };
    Ok(EvalReport { rows: out, summary })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_report_csv(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_history_csv(path: &Path, epochs: &[EpochRecord]) -> Result<()> {
    write_csv(path, epochs)
}

pub fn read_history_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// `dir/stem.<suffix>` next to `path`, e.g. `w.bin` → `w.history.csv`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let rows = [(0.0, 1.0), (50.0, 4.0), (-45.0, 3.0), (60.0, 2.0)];
        let s = GapSummary::from_gaps(&rows).unwrap();
        assert_eq!(s.max, 4.0);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean_within_45, Some(2.0));
        let odd = GapSummary::from_gaps(&rows[..3]).unwrap();
        assert_eq!(odd.median, 3.0);
    }

    #[test]
    fn empty_band_is_none() {
        let s = GapSummary::from_gaps(&[(60.0, 1.0)]).unwrap();
        assert_eq!(s.mean_within_45, None);
        assert!(GapSummary::from_gaps(&[]).is_err());
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(
            sibling_path(Path::new("out/w.bin"), "history.csv"),
            PathBuf::from("out/w.history.csv")
        );
        assert_eq!(
            sibling_path(Path::new("report.csv"), "summary.json"),
            PathBuf::from("report.summary.json")
        );
    }
}
