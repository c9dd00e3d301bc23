use num_complex::Complex64;

use super::{unit_phasor_deg, PhaseConfig, RisGeometry, RxSpec, TxSpec};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Incident field on each element: amplitude `A`, phase `α` (radians) and
/// the element-pattern factor `cos ϑ_mn` toward the transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct Illumination {
    pub amp: Grid<f64>,
    pub phase: Grid<f64>,
    pub cos_inc: Grid<f64>,
}

impl Illumination {
    /// `A = 1`, `α = 0`, `cos ϑ_mn = 1` on every element.
    pub fn unit(geom: &RisGeometry) -> Self {
        let (rows, cols) = geom.shape();
        Self {
            amp: Grid::filled(rows, cols, 1.0),
            phase: Grid::filled(rows, cols, 0.0),
            cos_inc: Grid::filled(rows, cols, 1.0),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.amp.shape()
    }

    pub(crate) fn ensure_matches(&self, geom: &RisGeometry) -> Result<()> {
        let (rows, cols) = geom.shape();
        self.amp.ensure_shape(rows, cols)?;
        self.phase.ensure_shape(rows, cols)?;
        self.cos_inc.ensure_shape(rows, cols)
    }

    /// `A e^{jα} cos ϑ_mn` for one element.
    #[inline]
    pub fn incident(&self, row: usize, col: usize) -> Complex64 {
        let idx = (row, col);
        Complex64::from_polar(self.amp[idx], self.phase[idx]) * self.cos_inc[idx]
    }
}

// cos(90°) is not exactly zero, so an in-plane source never lands at r = 0.
const COINCIDENCE_TOLERANCE: f64 = 1e-9;

pub fn compute_illumination(geom: &RisGeometry, tx: &TxSpec) -> Result<Illumination> {
    geom.validate()?;
    tx.validate()?;
    let k0 = geom.wavenumber();
    let lambda = geom.wavelength();
    let src = tx.position();
    let (rows, cols) = geom.shape();

    let mut amp = Grid::filled(rows, cols, 0.0);
    let mut phase = Grid::filled(rows, cols, 0.0);
    let mut cos_inc = Grid::filled(rows, cols, 0.0);
    for row in 0..rows {
        for col in 0..cols {
            let p = geom.element_position(row, col);
            let d = [src[0] - p[0], src[1] - p[1], src[2] - p[2]];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if r <= COINCIDENCE_TOLERANCE * lambda {
                return Err(Error::CoincidentTransmitter { row, col });
            }
            amp[(row, col)] = lambda / (4.0 * std::f64::consts::PI * r);
            phase[(row, col)] = if tx.flat_phase { 0.0 } else { -k0 * r };
            cos_inc[(row, col)] = (d[2] / r).clamp(0.0, 1.0);
        }
    }
    Ok(Illumination { amp, phase, cos_inc })
}

/// Per-element Tx→RIS (`h`) and RIS→Rx (`g`) coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrices {
    pub h: Grid<Complex64>,
    pub g: Grid<Complex64>,
}

impl ChannelMatrices {
    pub fn new(h: Grid<Complex64>, g: Grid<Complex64>) -> Result<Self> {
        if h.shape() != g.shape() {
            let (hr, hc) = h.shape();
            let (gr, gc) = g.shape();
            return Err(Error::dims(&[hr, hc], &[gr, gc]));
        }
        Ok(Self { h, g })
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.h.shape()
    }

    /// Elementwise `h_mn g_mn`, the coefficient multiplying `e^{jφ_mn}`.
    pub fn coupling(&self) -> Grid<Complex64> {
        let (rows, cols) = self.shape();
        Grid::from_fn(rows, cols, |r, c| self.h[(r, c)] * self.g[(r, c)])
    }
}

pub fn compute_channels(geom: &RisGeometry, illum: &Illumination, rx: &RxSpec) -> Result<ChannelMatrices> {
    geom.validate()?;
    illum.ensure_matches(geom)?;
    let rx = RxSpec::new(rx.distance, rx.elevation_deg, rx.azimuth_deg)?;
    let k0 = geom.wavenumber();
    let l_rx = geom.path_loss(rx.distance);
    let (el, az) = (rx.elevation_deg.to_radians(), rx.azimuth_deg.to_radians());
    let gain = l_rx * el.cos();
    let kx = k0 * geom.dx * el.sin() * az.cos();
    let ky = k0 * geom.dy * el.sin() * az.sin();
    let (rows, cols) = geom.shape();

    let h = Grid::from_fn(rows, cols, |r, c| illum.incident(r, c));
    let g = Grid::from_fn(rows, cols, |n, m| {
        Complex64::from_polar(gain, kx * m as f64 + ky * n as f64)
    });
    Ok(ChannelMatrices { h, g })
}

/// `Σ h_mn e^{jφ_mn} g_mn`.
pub fn cascade_gain(ch: &ChannelMatrices, cfg: &PhaseConfig) -> Result<Complex64> {
    let (rows, cols) = ch.shape();
    cfg.ensure_matches(rows, cols)?;
    let phasors = cfg.table().phasors();
    let sum =
        ch.h.iter()
            .zip(ch.g.iter())
            .zip(cfg.states().iter())
            .fold(Complex64::new(0.0, 0.0), |acc, ((h, g), &s)| {
                acc + h * phasors[s as usize] * g
            });
    Ok(sum)
}

/// Cascade gain after setting one element to `new_state`, given the gain
/// `current_sum` of `cfg`. `cfg` is not modified.
pub fn flip_delta(
    ch: &ChannelMatrices,
    cfg: &PhaseConfig,
    row: usize,
    col: usize,
    new_state: u8,
    current_sum: Complex64,
) -> Result<Complex64> {
    let (rows, cols) = ch.shape();
    cfg.ensure_matches(rows, cols)?;
    if row >= rows || col >= cols {
        return Err(Error::OutOfRange(format!(
            "element ({row}, {col}) in {rows}x{cols}"
        )));
    }
    let table = cfg.table();
    if new_state as usize >= table.len() {
        return Err(Error::OutOfRange(format!(
            "state {new_state} with {} phase states",
            table.len()
        )));
    }
    let old_state = cfg.state(row, col);
    if old_state == new_state {
        return Ok(current_sum);
    }
    let h = ch.h[(row, col)];
    let g = ch.g[(row, col)];
    let old = h * unit_phasor_deg(table.phase_deg(old_state)) * g;
    let new = h * unit_phasor_deg(table.phase_deg(new_state)) * g;
    Ok(current_sum - old + new)
}

/// Noiseless maximization target `|Σ h e^{jφ} g|`.
pub fn objective(ch: &ChannelMatrices, cfg: &PhaseConfig) -> Result<f64> {
    Ok(cascade_gain(ch, cfg)?.norm())
}
