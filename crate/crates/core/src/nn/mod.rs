//! Convolutional stripe-completion network: `same`-padded 2-D convolutions
//! with tanh, inverted dropout, MSE loss, reverse-mode gradients and ADAM.
//!
//! Feature maps are stored channels-last (`H × W × C`), which makes the
//! im2col patch matrix a plain row-major `(H·W) × (k·k·C)` block.

mod adam;
mod conv;
mod model;
mod train;
mod weights;

pub use adam::{AdamConfig, AdamState};
pub use conv::ConvSpec;
pub use model::{mse_loss, Gradients, Layer, LayerSpec, Mode, Model, STANDARD_DROPOUT_RATE};
pub use train::{
    evaluate, train, train_with_progress, EarlyStopping, EpochRecord, Example, History, TrainConfig,
};
pub use weights::{load_weights, save_weights, WeightsFile};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::StripeConfig;
use crate::physics::{PhaseConfig, PhaseTable};

/// Dense row-major `f64` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::invalid(format!(
                "tensor shape {shape:?} has a zero extent"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dims(&[expected], &[data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }
}

/// `+1` for state 0 (0°), `-1` for state 1 (180°).
#[inline]
pub fn encode_state(state: u8) -> f64 {
    if state == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `>= 0` → state 0, `< 0` → state 1.
#[inline]
pub fn decode_value(value: f64) -> u8 {
    if value >= 0.0 {
        0
    } else {
        1
    }
}

pub(crate) fn require_binary(table: &PhaseTable) -> Result<()> {
    if !table.is_binary() {
        return Err(Error::invalid(
            "the network encoding requires the binary [0, 180] phase table",
        ));
    }
    Ok(())
}

/// Two-channel `N × M × 2` map: channel 0 the expanded horizontal stripes,
/// channel 1 the expanded vertical stripes, both `±1`-encoded.
pub fn stripe_input(h_cfg: &StripeConfig, v_cfg: &StripeConfig) -> Result<Tensor> {
    use crate::optimize::Orientation;
    if h_cfg.orientation != Orientation::Horizontal || v_cfg.orientation != Orientation::Vertical {
        return Err(Error::invalid(
            "expected one horizontal and one vertical stripe config",
        ));
    }
    let (rows, cols) = (h_cfg.states.len(), v_cfg.states.len());
    let mut data = Vec::with_capacity(rows * cols * 2);
    for r in 0..rows {
        for c in 0..cols {
            data.push(encode_state(h_cfg.states[r]));
            data.push(encode_state(v_cfg.states[c]));
        }
    }
    Tensor::new(vec![rows, cols, 2], data)
}

/// Runs the network on the stripe pair and thresholds the output map.
pub fn predict_config(
    model: &Model,
    h_cfg: &StripeConfig,
    v_cfg: &StripeConfig,
    table: &PhaseTable,
) -> Result<PhaseConfig> {
    require_binary(table)?;
    let input = stripe_input(h_cfg, v_cfg)?;
    let (rows, cols) = (h_cfg.states.len(), v_cfg.states.len());
    let out = model.forward(&input, Mode::Eval, 0)?;
    let states = out.data().iter().map(|&v| decode_value(v)).collect();
    PhaseConfig::new(crate::grid::Grid::from_vec(rows, cols, states)?, table.clone())
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_add(b.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
