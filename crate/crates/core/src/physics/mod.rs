//! RIS channel model: element lattice, near-field illumination, far-field
//! steering, scattered field, cascade gain and received power.

mod channel;
mod field;
mod signal;

pub use channel::{
    cascade_gain, compute_channels, compute_illumination, flip_delta, objective, ChannelMatrices,
    Illumination,
};
pub use field::{radiation_pattern, scattered_field, PatternGrid, DB_FLOOR};
pub use signal::{received_power_db, simulate_received_signal};

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Planar array lattice on the xy-plane, boresight along +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisGeometry {
    /// Horizontal element count `M` (grid columns).
    pub m_cols: usize,
    /// Vertical element count `N` (grid rows).
    pub n_rows: usize,
    pub dx: f64,
    pub dy: f64,
    pub carrier_freq: f64,
}

impl Default for RisGeometry {
    fn default() -> Self {
        Self::half_wavelength(40, 40, 5.0e9).expect("default geometry is valid")
    }
}

impl RisGeometry {
    pub fn new(m_cols: usize, n_rows: usize, dx: f64, dy: f64, carrier_freq: f64) -> Result<Self> {
        let geom = Self {
            m_cols,
            n_rows,
            dx,
            dy,
            carrier_freq,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Square lattice with `λ/2` spacing.
    pub fn half_wavelength(m_cols: usize, n_rows: usize, carrier_freq: f64) -> Result<Self> {
        Self::with_spacing_wavelengths(m_cols, n_rows, carrier_freq, 0.5)
    }

    pub fn with_spacing_wavelengths(
        m_cols: usize,
        n_rows: usize,
        carrier_freq: f64,
        spacing: f64,
    ) -> Result<Self> {
        if !(carrier_freq > 0.0 && carrier_freq.is_finite()) {
            return Err(Error::invalid(format!(
                "carrier frequency {carrier_freq} must be > 0"
            )));
        }
        let d = spacing * SPEED_OF_LIGHT / carrier_freq;
        Self::new(m_cols, n_rows, d, d, carrier_freq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_cols == 0 || self.n_rows == 0 {
            return Err(Error::invalid("element counts must be >= 1"));
        }
        for (name, v) in [
            ("dx", self.dx),
            ("dy", self.dy),
            ("carrier_freq", self.carrier_freq),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} = {v} must be finite and > 0")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Free-space wavenumber `2π f / c`.
    #[inline]
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI * self.carrier_freq / SPEED_OF_LIGHT
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.m_cols)
    }

    #[inline]
    pub fn element_count(&self) -> usize {
        self.m_cols * self.n_rows
    }

    /// Position of element `(row n, col m)` on the centered lattice.
    pub fn element_position(&self, row: usize, col: usize) -> [f64; 3] {
        let x = (col as f64 - (self.m_cols as f64 - 1.0) / 2.0) * self.dx;
        let y = (row as f64 - (self.n_rows as f64 - 1.0) / 2.0) * self.dy;
        [x, y, 0.0]
    }

    /// Free-space path loss in amplitude form, `λ / (4π r)`.
    #[inline]
    pub fn path_loss(&self, distance: f64) -> f64 {
        self.wavelength() / (4.0 * PI * distance)
    }
}

/// Unit vector for elevation measured from +z and azimuth in the xy-plane.
pub fn direction(elevation_deg: f64, azimuth_deg: f64) -> [f64; 3] {
    let (el, az) = (elevation_deg.to_radians(), azimuth_deg.to_radians());
    [el.sin() * az.cos(), el.sin() * az.sin(), el.cos()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxSpec {
    /// Distance from the array center in meters.
    pub distance: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    /// Amplitude of the transmitted baseband samples.
    pub amplitude: f64,
    /// Drop the per-element spherical phase from the illumination.
    #[serde(default)]
    pub flat_phase: bool,
}

impl Default for TxSpec {
    fn default() -> Self {
        Self {
            distance: 1.0,
            elevation_deg: 0.0,
            azimuth_deg: 0.0,
            amplitude: 1.0,
            flat_phase: false,
        }
    }
}

impl TxSpec {
    pub fn boresight(distance: f64) -> Self {
        Self {
            distance,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance > 0.0 && self.distance.is_finite()) {
            return Err(Error::invalid(format!(
                "tx distance {} must be > 0",
                self.distance
            )));
        }
        if !(-90.0..=90.0).contains(&self.elevation_deg) {
            return Err(Error::invalid(format!(
                "tx elevation {} outside [-90, 90]",
                self.elevation_deg
            )));
        }
        if !(0.0..360.0).contains(&self.azimuth_deg) {
            return Err(Error::invalid(format!(
                "tx azimuth {} outside [0, 360)",
                self.azimuth_deg
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::invalid("tx amplitude must be finite"));
        }
        Ok(())
    }

    pub fn position(&self) -> [f64; 3] {
        let u = direction(self.elevation_deg, self.azimuth_deg);
        [u[0] * self.distance, u[1] * self.distance, u[2] * self.distance]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RxSpec {
    pub distance: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

impl RxSpec {
    pub fn new(distance: f64, elevation_deg: f64, azimuth_deg: f64) -> Result<Self> {
        if !(distance > 0.0 && distance.is_finite()) {
            return Err(Error::invalid(format!("rx distance {distance} must be > 0")));
        }
        if !elevation_deg.is_finite() || !azimuth_deg.is_finite() {
            return Err(Error::invalid("rx angles must be finite"));
        }
        Ok(Self {
            distance,
            elevation_deg,
            azimuth_deg,
        })
    }
}

/// `e^{j·deg}` with exact values on the quarter-turn multiples.
pub fn unit_phasor_deg(deg: f64) -> Complex64 {
    let d = deg.rem_euclid(360.0);
    if d == 0.0 {
        Complex64::new(1.0, 0.0)
    } else if d == 90.0 {
        Complex64::new(0.0, 1.0)
    } else if d == 180.0 {
        Complex64::new(-1.0, 0.0)
    } else if d == 270.0 {
        Complex64::new(0.0, -1.0)
    } else {
        Complex64::from_polar(1.0, d.to_radians())
    }
}

/// The discrete set of reflection phases an element can take, in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PhaseTable(Vec<f64>);

impl Default for PhaseTable {
    fn default() -> Self {
        Self::binary()
    }
}

impl PhaseTable {
    pub fn new(phases_deg: Vec<f64>) -> Result<Self> {
        if phases_deg.is_empty() {
            return Err(Error::Empty("phase table"));
        }
        if phases_deg.len() > u8::MAX as usize + 1 {
            return Err(Error::invalid("at most 256 phase states are supported"));
        }
        for (i, &p) in phases_deg.iter().enumerate() {
            if !(0.0..360.0).contains(&p) {
                return Err(Error::invalid(format!("phase {p} outside [0, 360)")));
            }
            if phases_deg[..i].contains(&p) {
                return Err(Error::invalid(format!("duplicate phase {p}")));
            }
        }
        Ok(Self(phases_deg))
    }

    /// `[0°, 180°]`.
    pub fn binary() -> Self {
        Self(vec![0.0, 180.0])
    }

    /// `P` equally spaced states starting at 0°.
    pub fn uniform(states: usize) -> Result<Self> {
        if states == 0 {
            return Err(Error::invalid("phase state count must be >= 1"));
        }
        Self::new((0..states).map(|k| 360.0 * k as f64 / states as f64).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degrees(&self) -> &[f64] {
        &self.0
    }

    pub fn phase_deg(&self, state: u8) -> f64 {
        self.0[state as usize]
    }

    pub fn phasors(&self) -> Vec<Complex64> {
        self.0.iter().map(|&d| unit_phasor_deg(d)).collect()
    }

    /// State whose phase is circularly closest to `deg`; ties go to the lower index.
    pub fn nearest_state(&self, deg: f64) -> u8 {
        let target = deg.rem_euclid(360.0);
        let mut best = (0u8, f64::INFINITY);
        for (i, &p) in self.0.iter().enumerate() {
            let diff = (p - target).abs();
            let dist = diff.min(360.0 - diff);
            if dist < best.1 {
                best = (i as u8, dist);
            }
        }
        best.0
    }

    pub fn is_binary(&self) -> bool {
        self.0 == [0.0, 180.0]
    }
}

impl TryFrom<Vec<f64>> for PhaseTable {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PhaseTable> for Vec<f64> {
    fn from(t: PhaseTable) -> Self {
        t.0
    }
}

/// Per-element phase-state assignment (`N × M`) together with its phase table.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    states: Grid<u8>,
    table: PhaseTable,
}

impl PhaseConfig {
    pub fn new(states: Grid<u8>, table: PhaseTable) -> Result<Self> {
        if let Some(&s) = states.iter().find(|&&s| s as usize >= table.len()) {
            return Err(Error::OutOfRange(format!(
                "state {s} with {} phase states",
                table.len()
            )));
        }
        Ok(Self { states, table })
    }

    /// Every element at state 0.
    pub fn zeros(rows: usize, cols: usize, table: PhaseTable) -> Self {
        Self {
            states: Grid::filled(rows, cols, 0),
            table,
        }
    }

    pub fn zeros_for(geom: &RisGeometry, table: PhaseTable) -> Self {
        Self::zeros(geom.n_rows, geom.m_cols, table)
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.states.shape()
    }

    #[inline]
    pub fn states(&self) -> &Grid<u8> {
        &self.states
    }

    #[inline]
    pub fn table(&self) -> &PhaseTable {
        &self.table
    }

    #[inline]
    pub fn state(&self, row: usize, col: usize) -> u8 {
        self.states[(row, col)]
    }

    pub fn set_state(&mut self, row: usize, col: usize, state: u8) -> Result<()> {
        let (rows, cols) = self.shape();
        if row >= rows || col >= cols {
            return Err(Error::OutOfRange(format!(
                "element ({row}, {col}) in {rows}x{cols}"
            )));
        }
        if state as usize >= self.table.len() {
            return Err(Error::OutOfRange(format!("state {state}")));
        }
        self.states[(row, col)] = state;
        Ok(())
    }

    pub fn phase_deg(&self, row: usize, col: usize) -> f64 {
        self.table.phase_deg(self.state(row, col))
    }

    pub(crate) fn ensure_matches(&self, rows: usize, cols: usize) -> Result<()> {
        self.states.ensure_shape(rows, cols)
    }
}
