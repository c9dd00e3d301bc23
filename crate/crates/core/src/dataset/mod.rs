//! Angular-sweep dataset: for every receiver direction on the grid, the two
//! G-IM stripe configurations (inputs) and the IM configuration (label).
//!
//! On disk a dataset directory holds `manifest.json`, `inputs.rist`
//! (`S × N × M × 2`), `targets.rist` (`S × N × M`) and `samples.csv` with
//! the per-sample angles and objectives at full precision.

mod tensor_file;

pub use tensor_file::{decode_tensor, encode_tensor, load_tensor, save_tensor, StoredTensor};

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::nn::{decode_value, encode_state, require_binary, Example, Tensor};
use crate::optimize::{combine_stripes, gim_optimize, im_optimize, Orientation, StripeConfig};
use crate::physics::{
    compute_channels, compute_illumination, objective, ChannelMatrices, Illumination, PhaseConfig,
    PhaseTable, RisGeometry, RxSpec, TxSpec,
};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INPUTS_FILE: &str = "inputs.rist";
pub const TARGETS_FILE: &str = "targets.rist";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const DEFAULT_RX_DISTANCE: f64 = 10.0;

/// Inclusive azimuth × elevation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    pub azimuth_start: f64,
    pub azimuth_stop: f64,
    pub elevation_start: f64,
    pub elevation_stop: f64,
    pub step: f64,
}

impl Default for AngularGrid {
    fn default() -> Self {
        Self {
            azimuth_start: 0.0,
            azimuth_stop: 180.0,
            elevation_start: -60.0,
            elevation_stop: 60.0,
            step: 1.0,
        }
    }
}

fn axis(start: f64, stop: f64, step: f64) -> Vec<f64> {
    // Tolerate accumulated decimal error in (stop - start) / step.
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + i as f64 * step).collect()
}

impl AngularGrid {
    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.azimuth_start,
            self.azimuth_stop,
            self.elevation_start,
            self.elevation_stop,
            self.step,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid bounds must be finite"));
        }
        if self.step <= 0.0 {
            return Err(Error::invalid(format!("grid step {} must be > 0", self.step)));
        }
        if self.azimuth_stop < self.azimuth_start || self.elevation_stop < self.elevation_start {
            return Err(Error::invalid("grid stop must not precede start"));
        }
        Ok(())
    }

    pub fn azimuths(&self) -> Vec<f64> {
        axis(self.azimuth_start, self.azimuth_stop, self.step)
    }

    pub fn elevations(&self) -> Vec<f64> {
        axis(self.elevation_start, self.elevation_stop, self.step)
    }

    /// `(azimuth, elevation)` pairs, azimuth-major.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let els = self.elevations();
        self.azimuths()
            .into_iter()
            .flat_map(|az| els.iter().map(move |&el| (az, el)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.azimuths().len() * self.elevations().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed transmitter, geometry and phase table; yields channels per receiver angle.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geometry: RisGeometry,
    pub table: PhaseTable,
    pub tx: TxSpec,
    pub rx_distance: f64,
    illumination: Illumination,
}

impl Scenario {
    pub fn new(geometry: RisGeometry, table: PhaseTable, tx: TxSpec, rx_distance: f64) -> Result<Self> {
        let illumination = compute_illumination(&geometry, &tx)?;
        RxSpec::new(rx_distance, 0.0, 0.0)?;
        Ok(Self {
            geometry,
            table,
            tx,
            rx_distance,
            illumination,
        })
    }

    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Self> {
        let (geometry, table) = manifest.geometry.to_parts()?;
        Self::new(geometry, table, manifest.tx, manifest.rx_distance_m)
    }

    pub fn illumination(&self) -> &Illumination {
        &self.illumination
    }

    pub fn channels(&self, elevation_deg: f64, azimuth_deg: f64) -> Result<ChannelMatrices> {
        let rx = RxSpec::new(self.rx_distance, elevation_deg, azimuth_deg)?;
        compute_channels(&self.geometry, &self.illumination, &rx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub h_cfg: StripeConfig,
    pub v_cfg: StripeConfig,
    pub ref_cfg: PhaseConfig,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    /// Objective of `ref_cfg`.
    pub objective_im: f64,
    /// Objective of `combine_stripes(h_cfg, v_cfg)`.
    pub objective_gim: f64,
}

impl Sample {
    pub fn combined_stripes(&self) -> Result<PhaseConfig> {
        combine_stripes(&self.h_cfg, &self.v_cfg, self.ref_cfg.table())
    }
}

/// Runs both G-IM orientations and IM (from all-zero) at one receiver angle.
pub fn generate_sample(scenario: &Scenario, azimuth_deg: f64, elevation_deg: f64) -> Result<Sample> {
    let ch = scenario.channels(elevation_deg, azimuth_deg)?;
    let table = &scenario.table;
    let (h_cfg, _) = gim_optimize(&ch, table, Orientation::Horizontal)?;
    let (v_cfg, _) = gim_optimize(&ch, table, Orientation::Vertical)?;
    let init = PhaseConfig::zeros_for(&scenario.geometry, table.clone());
    let (ref_cfg, trace) = im_optimize(&ch, table, &init)?;
    let combined = combine_stripes(&h_cfg, &v_cfg, table)?;
    Ok(Sample {
        objective_gim: objective(&ch, &combined)?,
        objective_im: trace.final_objective,
        h_cfg,
        v_cfg,
        ref_cfg,
        elevation_deg,
        azimuth_deg,
    })
}

pub fn generate_samples(scenario: &Scenario, grid: &AngularGrid) -> Result<Vec<Sample>> {
    grid.validate()?;
    grid.points()
        .par_iter()
        .map(|&(az, el)| generate_sample(scenario, az, el))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// `(train, val, test)` fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [0.6, 0.2, 0.2],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded uniform shuffle of `0..n`; validation and test sizes are
/// `floor(n·ratio)` and the remainder goes to training.
pub fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::invalid(format!(
            "split ratios {ratios:?} must lie in [0, 1]"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios {ratios:?} sum to {total}, not 1"
        )));
    }
    let n_val = (n as f64 * ratios[1] + 1e-9).floor() as usize;
    let n_test = (n as f64 * ratios[2] + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Split {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    })
}

pub fn split_dataset(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<Split> {
    split_indices(manifest.counts.total, ratios, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRecord {
    pub m_cols: usize,
    pub n_rows: usize,
    pub dx_m: f64,
    pub dy_m: f64,
    pub carrier_freq_hz: f64,
    pub phase_table_deg: Vec<f64>,
}

impl GeometryRecord {
    pub fn new(geom: &RisGeometry, table: &PhaseTable) -> Self {
        Self {
            m_cols: geom.m_cols,
            n_rows: geom.n_rows,
            dx_m: geom.dx,
            dy_m: geom.dy,
            carrier_freq_hz: geom.carrier_freq,
            phase_table_deg: table.degrees().to_vec(),
        }
    }

    pub fn to_parts(&self) -> Result<(RisGeometry, PhaseTable)> {
        Ok((
            RisGeometry::new(
                self.m_cols,
                self.n_rows,
                self.dx_m,
                self.dy_m,
                self.carrier_freq_hz,
            )?,
            PhaseTable::new(self.phase_table_deg.clone())?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub total: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub geometry: GeometryRecord,
    pub tx: TxSpec,
    pub rx_distance_m: f64,
    pub grid: AngularGrid,
    pub split: SplitSpec,
    pub counts: SplitCounts,
    pub format_version: u32,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: Self = serde_json::from_str(&text)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Format {
                path: dir.join(MANIFEST_FILE),
                reason: format!("unsupported format version {}", manifest.format_version),
            });
        }
        Ok(manifest)
    }

    pub fn split(&self) -> Result<Split> {
        split_dataset(self, self.split.ratios, self.split.seed)
    }
}

/// `(input N×M×2, target N×M)`: channel 0 the horizontal stripes, channel 1
/// the vertical stripes, target the reference; all `±1`.
pub fn encode_sample(s: &Sample) -> Result<(Tensor, Tensor)> {
    require_binary(s.ref_cfg.table())?;
    let (rows, cols) = s.ref_cfg.shape();
    if s.h_cfg.states.len() != rows || s.v_cfg.states.len() != cols {
        return Err(Error::dims(
            &[rows, cols],
            &[s.h_cfg.states.len(), s.v_cfg.states.len()],
        ));
    }
    let input = crate::nn::stripe_input(&s.h_cfg, &s.v_cfg)?;
    let target = Tensor::new(
        vec![rows, cols],
        s.ref_cfg.states().iter().map(|&st| encode_state(st)).collect(),
    )?;
    Ok((input, target))
}

pub fn to_example(s: &Sample) -> Result<Example> {
    let (input, target) = encode_sample(s)?;
    Ok(Example { input, target })
}

/// Writes tensors, per-sample metadata and the manifest into `out_dir`.
pub fn write_dataset(
    out_dir: &Path,
    scenario: &Scenario,
    grid: &AngularGrid,
    split: SplitSpec,
    samples: &[Sample],
) -> Result<DatasetManifest> {
    let (rows, cols) = scenario.geometry.shape();
    let s = samples.len();
    let mut inputs = Vec::with_capacity(s * rows * cols * 2);
    let mut targets = Vec::with_capacity(s * rows * cols);
    let mut csv = csv::Writer::from_writer(Vec::new());
    for (i, sample) in samples.iter().enumerate() {
        let (input, target) = encode_sample(sample)?;
        inputs.extend(input.data().iter().map(|&v| v as f32));
        targets.extend(target.data().iter().map(|&v| v as f32));
        csv.serialize(SampleRow {
            index: i,
            azimuth_deg: sample.azimuth_deg,
            elevation_deg: sample.elevation_deg,
            objective_im: sample.objective_im,
            objective_gim: sample.objective_gim,
        })?;
    }
    let csv = csv.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let parts = split_indices(s, split.ratios, split.seed)?;
    let manifest = DatasetManifest {
        geometry: GeometryRecord::new(&scenario.geometry, &scenario.table),
        tx: scenario.tx,
        rx_distance_m: scenario.rx_distance,
        grid: *grid,
        split,
        counts: SplitCounts {
            total: s,
            train: parts.train.len(),
            val: parts.val.len(),
            test: parts.test.len(),
        },
        format_version: FORMAT_VERSION,
    };

    fs::create_dir_all(out_dir)?;
    save_tensor(
        &out_dir.join(INPUTS_FILE),
        &StoredTensor::new(vec![s, rows, cols, 2], inputs)?,
    )?;
    save_tensor(
        &out_dir.join(TARGETS_FILE),
        &StoredTensor::new(vec![s, rows, cols], targets)?,
    )?;
    fs::write(out_dir.join(SAMPLES_FILE), csv)?;
    fs::write(
        out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Generates every grid sample and writes the dataset directory.
pub fn generate_dataset(
    scenario: &Scenario,
    grid: &AngularGrid,
    split: SplitSpec,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    require_binary(&scenario.table)?;
    grid.validate()?;
    // Fail on an unwritable destination before spending time on generation.
    fs::create_dir_all(out_dir)?;
    let samples = generate_samples(scenario, grid)?;
    write_dataset(out_dir, scenario, grid, split, &samples)
}

/// A dataset directory read back into memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(dir)?;
        let (_, table) = manifest.geometry.to_parts()?;
        let (rows, cols) = (manifest.geometry.n_rows, manifest.geometry.m_cols);
        let total = manifest.counts.total;
        let inputs_path = dir.join(INPUTS_FILE);
        let targets_path = dir.join(TARGETS_FILE);
        let inputs = load_tensor(&inputs_path)?;
        let targets = load_tensor(&targets_path)?;
        let format_err = |path: &Path, reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        if inputs.shape != [total, rows, cols, 2] {
            return Err(format_err(
                &inputs_path,
                format!("unexpected shape {:?}", inputs.shape),
            ));
        }
        if targets.shape != [total, rows, cols] {
            return Err(format_err(
                &targets_path,
                format!("unexpected shape {:?}", targets.shape),
            ));
        }
        let meta = read_sample_rows(&dir.join(SAMPLES_FILE))?;
        if meta.len() != total {
            return Err(format_err(
                &dir.join(SAMPLES_FILE),
                format!("{} rows for {total} samples", meta.len()),
            ));
        }

        let plane = rows * cols;
        let samples = (0..total)
            .map(|i| {
                let inp = &inputs.data[i * plane * 2..(i + 1) * plane * 2];
                let tgt = &targets.data[i * plane..(i + 1) * plane];
                let h_states = (0..rows)
                    .map(|r| decode_value(inp[r * cols * 2] as f64))
                    .collect();
                let v_states = (0..cols).map(|c| decode_value(inp[c * 2 + 1] as f64)).collect();
                let ref_states = tgt.iter().map(|&v| decode_value(v as f64)).collect();
                let row = meta[i];
                Ok(Sample {
                    h_cfg: StripeConfig {
                        orientation: Orientation::Horizontal,
                        states: h_states,
                    },
                    v_cfg: StripeConfig {
                        orientation: Orientation::Vertical,
                        states: v_states,
                    },
                    ref_cfg: PhaseConfig::new(Grid::from_vec(rows, cols, ref_states)?, table.clone())?,
                    elevation_deg: row.elevation_deg,
                    azimuth_deg: row.azimuth_deg,
                    objective_im: row.objective_im,
                    objective_gim: row.objective_gim,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, samples })
    }

    pub fn examples(&self, indices: &[usize]) -> Result<Vec<Example>> {
        indices.iter().map(|&i| to_example(&self.samples[i])).collect()
    }
}

/// One line of `samples.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub index: usize,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub objective_im: f64,
    pub objective_gim: f64,
}

pub fn read_sample_rows(path: &Path) -> Result<Vec<SampleRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<SampleRow>, _>>()?;
    for (i, row) in rows.iter().enumerate() {
        if row.index != i {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("row {i} carries index {}", row.index),
            });
        }
    }
    Ok(rows)
}
