//! Greedy configuration search: element-wise (IM), stripe-wise (G-IM),
//! stripe combination and an exhaustive oracle for tiny arrays.
//!
//! Every objective evaluation counts as one step, i.e. one configure +
//! measure round trip with the receiver.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::physics::{cascade_gain, flip_delta, objective, ChannelMatrices, PhaseConfig, PhaseTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// One state per row (`N` stripes).
    Horizontal,
    /// One state per column (`M` stripes).
    Vertical,
}

/// One phase state per row (horizontal) or per column (vertical).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripeConfig {
    pub orientation: Orientation,
    pub states: Vec<u8>,
}

impl StripeConfig {
    pub fn zeros(orientation: Orientation, len: usize) -> Self {
        Self {
            orientation,
            states: vec![0; len],
        }
    }

    /// Full `rows × cols` configuration with constant rows (horizontal) or
    /// constant columns (vertical).
    pub fn expand(&self, rows: usize, cols: usize, table: &PhaseTable) -> Result<PhaseConfig> {
        let expected = match self.orientation {
            Orientation::Horizontal => rows,
            Orientation::Vertical => cols,
        };
        if self.states.len() != expected {
            return Err(Error::dims(&[expected], &[self.states.len()]));
        }
        let grid = match self.orientation {
            Orientation::Horizontal => Grid::from_fn(rows, cols, |r, _| self.states[r]),
            Orientation::Vertical => Grid::from_fn(rows, cols, |_, c| self.states[c]),
        };
        PhaseConfig::new(grid, table.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizeTrace {
    pub steps: usize,
    /// Running maximum of the measured objective after each step.
    pub best_objective_history: Vec<f64>,
    /// Objective of the returned configuration, recomputed from scratch.
    pub final_objective: f64,
}

impl OptimizeTrace {
    fn record(&mut self, best: f64) {
        self.steps += 1;
        self.best_objective_history.push(best);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Im,
    Gim,
}

/// `M·N·P` for IM, `(M+N)·P` for both G-IM orientations together.
pub fn step_count(method: Method, m_cols: usize, n_rows: usize, states: usize) -> usize {
    match method {
        Method::Im => m_cols * n_rows * states,
        Method::Gim => (m_cols + n_rows) * states,
    }
}

/// How candidate objectives are obtained during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Evaluation {
    /// O(1) update of the running cascade gain per candidate.
    #[default]
    Incremental,
    /// Recompute the cascade gain from scratch for every candidate.
    Full,
}

/// Relative margin below which two objective values count as tied.
/// Mathematically equal candidates (e.g. a global phase rotation of a
/// single stripe) differ by rounding only, and must not be committed.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Strict improvement over the running maximum, modulo rounding noise.
pub fn improves(value: f64, best: f64) -> bool {
    best == f64::NEG_INFINITY || value > best + TIE_TOLERANCE * best.abs()
}

fn check_table(cfg: &PhaseConfig, table: &PhaseTable) -> Result<()> {
    if cfg.table() != table {
        return Err(Error::invalid(
            "initial configuration uses a different phase table",
        ));
    }
    Ok(())
}

/// Single raster-order pass trying every state of every element; a state
/// is committed only on strict improvement of the running maximum.
pub fn im_optimize(
    ch: &ChannelMatrices,
    table: &PhaseTable,
    init: &PhaseConfig,
) -> Result<(PhaseConfig, OptimizeTrace)> {
    im_optimize_with(ch, table, init, Evaluation::Incremental)
}

pub fn im_optimize_with(
    ch: &ChannelMatrices,
    table: &PhaseTable,
    init: &PhaseConfig,
    eval: Evaluation,
) -> Result<(PhaseConfig, OptimizeTrace)> {
    let (rows, cols) = ch.shape();
    init.ensure_matches(rows, cols)?;
    check_table(init, table)?;
    let p = table.len();

    let mut cfg = init.clone();
    let mut sum = cascade_gain(ch, &cfg)?;
    let mut best = f64::NEG_INFINITY;
    let mut trace = OptimizeTrace {
        best_objective_history: Vec::with_capacity(rows * cols * p),
        ..Default::default()
    };
    for row in 0..rows {
        for col in 0..cols {
            for state in 0..p as u8 {
                let candidate = match eval {
                    Evaluation::Incremental => flip_delta(ch, &cfg, row, col, state, sum)?,
                    Evaluation::Full => {
                        let mut trial = cfg.clone();
                        trial.set_state(row, col, state)?;
                        cascade_gain(ch, &trial)?
                    }
                };
                let value = candidate.norm();
                if improves(value, best) {
                    cfg.set_state(row, col, state)?;
                    sum = candidate;
                    best = value;
                }
                trace.record(best);
            }
        }
    }
    trace.final_objective = objective(ch, &cfg)?;
    Ok((cfg, trace))
}

/// Stripe-grouped greedy search: all stripes start at state 0 and each
/// stripe in turn is swept through every state, committing only on strict
/// improvement with the other stripes held at their committed states.
pub fn gim_optimize(
    ch: &ChannelMatrices,
    table: &PhaseTable,
    orientation: Orientation,
) -> Result<(StripeConfig, OptimizeTrace)> {
    gim_optimize_with(ch, table, orientation, Evaluation::Incremental)
}

pub fn gim_optimize_with(
    ch: &ChannelMatrices,
    table: &PhaseTable,
    orientation: Orientation,
    eval: Evaluation,
) -> Result<(StripeConfig, OptimizeTrace)> {
    let (rows, cols) = ch.shape();
    let phasors = table.phasors();
    let p = table.len();
    let coupling = ch.coupling();
    // Coherent sum of each stripe's couplings.
    let stripe_sums: Vec<Complex64> = match orientation {
        Orientation::Horizontal => (0..rows).map(|r| coupling.row(r).iter().sum()).collect(),
        Orientation::Vertical => (0..cols)
            .map(|c| (0..rows).map(|r| coupling[(r, c)]).sum())
            .collect(),
    };
    let mut stripes = StripeConfig::zeros(orientation, stripe_sums.len());
    let mut sum = stripe_sums
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, s| acc + s * phasors[0]);
    if eval == Evaluation::Full {
        sum = cascade_gain(ch, &stripes.expand(rows, cols, table)?)?;
    }
    let mut best = f64::NEG_INFINITY;
    let mut trace = OptimizeTrace {
        best_objective_history: Vec::with_capacity(stripe_sums.len() * p),
        ..Default::default()
    };
    for (i, &stripe_sum) in stripe_sums.iter().enumerate() {
        for state in 0..p as u8 {
            let current = stripes.states[i];
            let candidate = match eval {
                Evaluation::Incremental if state == current => sum,
                Evaluation::Incremental => {
                    sum - stripe_sum * phasors[current as usize] + stripe_sum * phasors[state as usize]
                }
                Evaluation::Full => {
                    let mut trial = stripes.clone();
                    trial.states[i] = state;
                    cascade_gain(ch, &trial.expand(rows, cols, table)?)?
                }
            };
            let value = candidate.norm();
            if improves(value, best) {
                stripes.states[i] = state;
                sum = candidate;
                best = value;
            }
            trace.record(best);
        }
    }
    trace.final_objective = objective(ch, &stripes.expand(rows, cols, table)?)?;
    Ok((stripes, trace))
}

/// Element phase = row-stripe phase + column-stripe phase (mod 360°),
/// snapped to the nearest table entry. For `[0°, 180°]` this is XOR.
pub fn combine_stripes(
    h_cfg: &StripeConfig,
    v_cfg: &StripeConfig,
    table: &PhaseTable,
) -> Result<PhaseConfig> {
    if h_cfg.orientation != Orientation::Horizontal || v_cfg.orientation != Orientation::Vertical {
        return Err(Error::invalid(
            "combine_stripes needs one horizontal and one vertical stripe configuration",
        ));
    }
    let (rows, cols) = (h_cfg.states.len(), v_cfg.states.len());
    let p = table.len();
    if let Some(&s) = h_cfg
        .states
        .iter()
        .chain(&v_cfg.states)
        .find(|&&s| s as usize >= p)
    {
        return Err(Error::OutOfRange(format!(
            "stripe state {s} with {p} phase states"
        )));
    }
    let grid = Grid::from_fn(rows, cols, |r, c| {
        let deg = table.phase_deg(h_cfg.states[r]) + table.phase_deg(v_cfg.states[c]);
        table.nearest_state(deg)
    });
    PhaseConfig::new(grid, table.clone())
}

const EXHAUSTIVE_LIMIT: f64 = (1u64 << 24) as f64;

/// Brute-force optimum over all `P^(M·N)` configurations. Ties go to the
/// lowest mixed-radix code with element `(0, 0)` as the least significant
/// digit.
pub fn exhaustive_optimize(ch: &ChannelMatrices, table: &PhaseTable) -> Result<(PhaseConfig, f64)> {
    let (rows, cols) = ch.shape();
    let digits = rows * cols;
    let p = table.len();
    let configs = (p as f64).powi(digits as i32);
    if configs > EXHAUSTIVE_LIMIT {
        return Err(Error::InstanceTooLarge { configs });
    }
    let mut current = PhaseConfig::zeros(rows, cols, table.clone());
    let mut best_cfg = current.clone();
    let mut best = objective(ch, &current)?;
    let total = configs as u64;
    for _ in 1..total {
        // Odometer increment over the raster-ordered digits.
        for k in 0..digits {
            let (r, c) = (k / cols, k % cols);
            let next = current.state(r, c) as usize + 1;
            if next < p {
                current.set_state(r, c, next as u8)?;
                break;
            }
            current.set_state(r, c, 0)?;
        }
        let value = objective(ch, &current)?;
        if improves(value, best) {
            best = value;
            best_cfg = current.clone();
        }
    }
    Ok((best_cfg, best))
}
