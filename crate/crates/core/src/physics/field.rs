use num_complex::Complex64;
use rayon::prelude::*;

use super::{Illumination, PhaseConfig, RisGeometry};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Power assigned to cells whose field magnitude is exactly zero.
pub const DB_FLOOR: f64 = -300.0;

pub(crate) fn magnitude_db(field: Complex64) -> f64 {
    let mag = field.norm();
    if mag == 0.0 {
        DB_FLOOR
    } else {
        20.0 * mag.log10()
    }
}

/// Reflected element excitations `A e^{jα} cos ϑ_mn e^{jφ_mn}` (unit Γ).
fn excitations(illum: &Illumination, cfg: &PhaseConfig) -> Grid<Complex64> {
    let phasors = cfg.table().phasors();
    let (rows, cols) = cfg.shape();
    Grid::from_fn(rows, cols, |r, c| {
        illum.incident(r, c) * phasors[cfg.state(r, c) as usize]
    })
}

fn check_inputs(geom: &RisGeometry, illum: &Illumination, cfg: &PhaseConfig) -> Result<()> {
    geom.validate()?;
    illum.ensure_matches(geom)?;
    cfg.ensure_matches(geom.n_rows, geom.m_cols)
}

/// Field at `exc` steered toward `(elev, azim)`, factored as a row sum of
/// column-steered partial sums.
fn field_from_excitations(
    geom: &RisGeometry,
    exc: &Grid<Complex64>,
    elev_deg: f64,
    azim_deg: f64,
) -> Complex64 {
    let (el, az) = (elev_deg.to_radians(), azim_deg.to_radians());
    let k0 = geom.wavenumber();
    let kx = k0 * geom.dx * el.sin() * az.cos();
    let ky = k0 * geom.dy * el.sin() * az.sin();
    let col_steer: Vec<Complex64> = (0..geom.m_cols)
        .map(|m| Complex64::from_polar(1.0, kx * m as f64))
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    for n in 0..geom.n_rows {
        let row_sum = exc
            .row(n)
            .iter()
            .zip(&col_steer)
            .fold(Complex64::new(0.0, 0.0), |acc, (e, s)| acc + e * s);
        total += row_sum * Complex64::from_polar(1.0, ky * n as f64);
    }
    total * el.cos()
}

/// Scattered field `E(ϑ, φ)` of the configured surface.
pub fn scattered_field(
    geom: &RisGeometry,
    illum: &Illumination,
    cfg: &PhaseConfig,
    elev_deg: f64,
    azim_deg: f64,
) -> Result<Complex64> {
    check_inputs(geom, illum, cfg)?;
    let exc = excitations(illum, cfg);
    Ok(field_from_excitations(geom, &exc, elev_deg, azim_deg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternGrid {
    pub elevations: Vec<f64>,
    pub azimuths: Vec<f64>,
    pub field: Grid<Complex64>,
    pub power_db: Grid<f64>,
}

impl PatternGrid {
    /// `(elevation, azimuth, power_db)` of the strongest cell; the first
    /// cell in raster order wins ties.
    pub fn peak(&self) -> (f64, f64, f64) {
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for i in 0..self.elevations.len() {
            for j in 0..self.azimuths.len() {
                let p = self.power_db[(i, j)];
                if p > best.2 {
                    best = (i, j, p);
                }
            }
        }
        (self.elevations[best.0], self.azimuths[best.1], best.2)
    }
}

pub fn radiation_pattern(
    geom: &RisGeometry,
    illum: &Illumination,
    cfg: &PhaseConfig,
    elevations: &[f64],
    azimuths: &[f64],
) -> Result<PatternGrid> {
    if elevations.is_empty() || azimuths.is_empty() {
        return Err(Error::Empty("pattern angle list"));
    }
    check_inputs(geom, illum, cfg)?;
    let exc = excitations(illum, cfg);
    let cells: Vec<Complex64> = elevations
        .par_iter()
        .flat_map_iter(|&el| {
            let exc = &exc;
            azimuths
                .iter()
                .map(move |&az| field_from_excitations(geom, exc, el, az))
        })
        .collect();
    let field = Grid::from_vec(elevations.len(), azimuths.len(), cells)?;
    let power_db = field.map(|&f| magnitude_db(f));
    Ok(PatternGrid {
        elevations: elevations.to_vec(),
        azimuths: azimuths.to_vec(),
        field,
        power_db,
    })
}
