//! Independent reference implementations and random instance builders shared
//! by the integration tests and the acceptance suite.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ris_core::grid::Grid;
use ris_core::nn::{ConvSpec, Layer, LayerSpec, Mode, Model, Tensor};
use ris_core::physics::{ChannelMatrices, Illumination, PhaseConfig, PhaseTable, RisGeometry, TxSpec};

pub const C: f64 = 299_792_458.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cis(theta: f64) -> Complex64 {
    Complex64::new(theta.cos(), theta.sin())
}

pub type Table = Vec<Vec<f64>>;

/// Plain 3-D vector geometry: element centres, Tx position, distances.
pub fn naive_illumination(geom: &RisGeometry, tx: &TxSpec) -> (Table, Table, Table) {
    let lambda = C / geom.carrier_freq;
    let k0 = 2.0 * PI / lambda;
    let (el, az) = (tx.elevation_deg * PI / 180.0, tx.azimuth_deg * PI / 180.0);
    let t = [
        tx.distance * el.sin() * az.cos(),
        tx.distance * el.sin() * az.sin(),
        tx.distance * el.cos(),
    ];
    let mut amp = vec![vec![0.0; geom.m_cols]; geom.n_rows];
    let mut phase = amp.clone();
    let mut cos_inc = amp.clone();
    for n in 0..geom.n_rows {
        for m in 0..geom.m_cols {
            let p = [
                (m as f64 - (geom.m_cols as f64 - 1.0) / 2.0) * geom.dx,
                (n as f64 - (geom.n_rows as f64 - 1.0) / 2.0) * geom.dy,
                0.0,
            ];
            let d = [t[0] - p[0], t[1] - p[1], t[2] - p[2]];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            amp[n][m] = lambda / (4.0 * PI * r);
            phase[n][m] = if tx.flat_phase { 0.0 } else { -k0 * r };
            // Angle between +z and the element-to-Tx vector.
            cos_inc[n][m] = (d[2] / r).clamp(0.0, 1.0);
        }
    }
    (amp, phase, cos_inc)
}

pub fn illumination_from(amp: &[Vec<f64>], phase: &[Vec<f64>], cos_inc: &[Vec<f64>]) -> Illumination {
    let rows = amp.len();
    let cols = amp[0].len();
    Illumination {
        amp: Grid::from_fn(rows, cols, |r, c| amp[r][c]),
        phase: Grid::from_fn(rows, cols, |r, c| phase[r][c]),
        cos_inc: Grid::from_fn(rows, cols, |r, c| cos_inc[r][c]),
    }
}

/// Direct double loop over the superposition of element fields.
/// Returns the field and the sum of term magnitudes (the scale used for
/// relative comparisons when terms cancel).
pub fn naive_field(
    geom: &RisGeometry,
    illum: &Illumination,
    cfg: &PhaseConfig,
    el_deg: f64,
    az_deg: f64,
) -> (Complex64, f64) {
    let lambda = C / geom.carrier_freq;
    let k0 = 2.0 * PI / lambda;
    let (el, az) = (el_deg * PI / 180.0, az_deg * PI / 180.0);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for m in 0..geom.m_cols {
        for n in 0..geom.n_rows {
            let phi = cfg.phase_deg(n, m) * PI / 180.0;
            let steer =
                k0 * (m as f64 * geom.dx * el.sin() * az.cos() + n as f64 * geom.dy * el.sin() * az.sin());
            let term =
                illum.amp[(n, m)] * cis(illum.phase[(n, m)]) * illum.cos_inc[(n, m)] * cis(phi) * cis(steer);
            sum += term;
            scale += term.norm();
        }
    }
    (sum * el.cos(), scale * el.cos().abs())
}

pub fn naive_channels(
    geom: &RisGeometry,
    illum: &Illumination,
    rx_dist: f64,
    el_deg: f64,
    az_deg: f64,
) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
    let lambda = C / geom.carrier_freq;
    let k0 = 2.0 * PI / lambda;
    let l_rx = lambda / (4.0 * PI * rx_dist);
    let (el, az) = (el_deg * PI / 180.0, az_deg * PI / 180.0);
    let mut h = vec![vec![Complex64::new(0.0, 0.0); geom.m_cols]; geom.n_rows];
    let mut g = h.clone();
    for n in 0..geom.n_rows {
        for m in 0..geom.m_cols {
            h[n][m] = illum.amp[(n, m)] * cis(illum.phase[(n, m)]) * illum.cos_inc[(n, m)];
            let steer =
                k0 * (m as f64 * geom.dx * el.sin() * az.cos() + n as f64 * geom.dy * el.sin() * az.sin());
            g[n][m] = l_rx * el.cos() * cis(steer);
        }
    }
    (h, g)
}

/// `Σ h e^{jφ} g` and the sum of term magnitudes.
pub fn naive_cascade(ch: &ChannelMatrices, cfg: &PhaseConfig) -> (Complex64, f64) {
    let (rows, cols) = ch.shape();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let term = ch.h[(r, c)] * cis(cfg.phase_deg(r, c) * PI / 180.0) * ch.g[(r, c)];
            sum += term;
            scale += term.norm();
        }
    }
    (sum, scale)
}

pub fn naive_power_db(y: &[Complex64]) -> f64 {
    let mut acc = 0.0;
    for v in y {
        acc += v.re * v.re + v.im * v.im;
    }
    10.0 * (acc / y.len() as f64).log10()
}

pub fn random_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn random_channels(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ChannelMatrices {
    let h = Grid::from_fn(rows, cols, |_, _| random_complex(rng));
    let g = Grid::from_fn(rows, cols, |_, _| random_complex(rng));
    ChannelMatrices::new(h, g).unwrap()
}

pub fn random_config(rng: &mut ChaCha8Rng, rows: usize, cols: usize, table: &PhaseTable) -> PhaseConfig {
    let p = table.len() as u8;
    let states = Grid::from_fn(rows, cols, |_, _| rng.gen_range(0..p));
    PhaseConfig::new(states, table.clone()).unwrap()
}

/// Random geometry up to 8×8 with spacing in [0.3λ, 0.7λ] and a random
/// carrier between 1 and 30 GHz.
pub fn random_geometry(rng: &mut ChaCha8Rng) -> RisGeometry {
    let m = rng.gen_range(1..=8);
    let n = rng.gen_range(1..=8);
    let f = rng.gen_range(1e9..30e9);
    let lambda = C / f;
    RisGeometry::new(
        m,
        n,
        lambda * rng.gen_range(0.3..0.7),
        lambda * rng.gen_range(0.3..0.7),
        f,
    )
    .unwrap()
}

pub fn random_tx(rng: &mut ChaCha8Rng) -> TxSpec {
    TxSpec {
        distance: rng.gen_range(0.2..5.0),
        elevation_deg: rng.gen_range(0.0..80.0),
        azimuth_deg: rng.gen_range(0.0..360.0),
        amplitude: 1.0,
        flat_phase: rng.gen_bool(0.2),
    }
}

/// `same`-padded stride-1 convolution + tanh by nested loops, HWC layout,
/// weights indexed `[(ky·kw + kx)·C_in + ci][co]`.
pub fn naive_conv_tanh(
    x: &[f64],
    h: usize,
    w: usize,
    spec: &ConvSpec,
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut out = vec![0.0; h * w * cout];
    for i in 0..h {
        for j in 0..w {
            for co in 0..cout {
                let mut acc = bias[co];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let yi = i as isize + ky as isize - ph;
                        let xj = j as isize + kx as isize - pw;
                        if yi < 0 || xj < 0 || yi >= h as isize || xj >= w as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            let v = x[(yi as usize * w + xj as usize) * cin + ci];
                            acc += v * weight[((ky * kw + kx) * cin + ci) * cout + co];
                        }
                    }
                }
                out[(i * w + j) * cout + co] = acc.tanh();
            }
        }
    }
    out
}

/// Eval-mode forward pass built from `naive_conv_tanh`.
pub fn naive_forward(model: &Model, input: &Tensor) -> Vec<f64> {
    let (h, w) = (input.shape()[0], input.shape()[1]);
    let mut x = input.data().to_vec();
    for layer in model.layers() {
        if let Layer::Conv { spec, weight, bias } = layer {
            x = naive_conv_tanh(&x, h, w, spec, weight, bias);
        }
    }
    x
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_sign_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect(),
    )
    .unwrap()
}

/// Largest relative error of analytic gradients against central finite
/// differences (step 1e−5) over every parameter of a 2→3→1 network on a
/// 6×6 input. Relative error is `|a − n| / max(|a|, |n|, 1e−7)`.
pub fn gradient_check_max_rel_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let specs = [LayerSpec::conv(3, 2, 3), LayerSpec::conv(3, 3, 1)];
    let mut model = Model::from_specs(&specs, seed).unwrap();
    // Non-zero biases so their gradients are exercised away from symmetry.
    for p in model.params_mut() {
        for v in p.iter_mut() {
            *v += r.gen_range(-0.3..0.3);
        }
    }
    let input = random_tensor(&mut r, vec![6, 6, 2]);
    let target = random_sign_tensor(&mut r, vec![6, 6]);
    let grads = model.backward(&input, &target, Mode::Eval, 0).unwrap();
    let loss_at = |m: &Model| {
        let out = m.forward(&input, Mode::Eval, 0).unwrap();
        ris_core::nn::mse_loss(&out, &target).unwrap()
    };
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let n_tensors = model.params().len();
    for t in 0..n_tensors {
        for i in 0..model.params()[t].len() {
            let orig = model.params()[t][i];
            model.params_mut()[t][i] = orig + step;
            let up = loss_at(&model);
            model.params_mut()[t][i] = orig - step;
            let down = loss_at(&model);
            model.params_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = grads.tensors[t][i];
            let denom = analytic.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}
