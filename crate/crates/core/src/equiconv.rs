//! Distortion-adaptive ("equirectangular") convolution.
//!
//! Each output pixel looks at a `kh × kw` grid of taps laid out on the
//! tangent plane of its own sphere point and mapped back to the image by the
//! inverse gnomonic projection, so the footprint stretches by `1/cos φ` in
//! longitude towards the poles and reduces to an ordinary 3×3 stencil at the
//! equator when the angular step is one equator pixel.
//!
//! The tap pattern depends only on the output row. It is stored once per row
//! as offsets relative to the output column together with a precomputed
//! bilinear stencil, which makes the operator commute bitwise with integer
//! column shifts.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{check_dims, EquirectGrid};
use crate::math::{self, FRAC_PI_2, TAU};
use crate::sphere::{self, PixelCoord};
use crate::{Error, Result};

/// Tap counts and angular spacing of the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquiKernelSpec {
    kh: usize,
    kw: usize,
    angular_step: f64,
}

impl EquiKernelSpec {
    pub fn new(kh: usize, kw: usize, angular_step: f64) -> Result<Self> {
        if kh == 0 || kw == 0 || kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::InvalidParameter("kernel sizes must be odd and >= 1"));
        }
        if !(angular_step > 0.0 && angular_step < core::f64::consts::FRAC_PI_4) {
            return Err(Error::InvalidParameter("angular_step must be in (0, pi/4)"));
        }
        Ok(Self {
            kh,
            kw,
            angular_step,
        })
    }

    /// Kernel whose step is one equator pixel (`2π / width`).
    pub fn with_pixel_step(kh: usize, kw: usize, width: usize) -> Result<Self> {
        Self::new(kh, kw, TAU / width as f64)
    }

    pub fn kh(&self) -> usize {
        self.kh
    }

    pub fn kw(&self) -> usize {
        self.kw
    }

    pub fn angular_step(&self) -> f64 {
        self.angular_step
    }

    pub fn taps(&self) -> usize {
        self.kh * self.kw
    }
}

/// What happens to bilinear samples that fall above the first or below the
/// last row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VerticalBoundary {
    /// Repeat the edge row.
    Clamp,
    /// Continue over the pole: row `-1` is row `0` half a turn away.
    #[default]
    PoleWrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldOptions {
    /// Reject rows whose footprint reaches the pole instead of wrapping.
    pub strict: bool,
    pub stride: usize,
    pub boundary: VerticalBoundary,
}

impl Default for FieldOptions {
    fn default() -> Self {
        Self {
            strict: false,
            stride: 1,
            boundary: VerticalBoundary::PoleWrap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Corner {
    row: usize,
    dcol: i64,
    weight: f64,
}

/// Sample positions of every tap for every output pixel.
#[derive(Debug, Clone)]
pub struct SampleField {
    width: usize,
    height: usize,
    out_width: usize,
    out_height: usize,
    stride: usize,
    spec: EquiKernelSpec,
    /// `(out_row * taps + tap)`: u relative to `col * stride`, absolute v.
    offsets: Vec<PixelCoord>,
    stencils: Vec<[Corner; 4]>,
}

fn snap(x: f64) -> f64 {
    let r = math::round(x);
    if math::abs(x - r) < 1e-9 {
        r
    } else {
        x
    }
}

/// Builds the tap field for a `width × height` input.
pub fn build_sample_field(
    width: usize,
    height: usize,
    spec: EquiKernelSpec,
    opts: FieldOptions,
) -> Result<SampleField> {
    check_dims(width, height)?;
    let s = opts.stride;
    if s == 0 || height % s != 0 {
        return Err(Error::InvalidParameter("stride must divide the height"));
    }
    let (out_width, out_height) = (width / s, height / s);
    let taps = spec.taps();
    let reach = spec.angular_step * spec.kh.max(spec.kw) as f64;
    let anchor = (s as f64 - 1.0) / 2.0;
    let (hi, hj) = ((spec.kh / 2) as i64, (spec.kw / 2) as i64);

    let mut offsets = Vec::with_capacity(out_height * taps);
    let mut stencils = Vec::with_capacity(out_height * taps);
    for r in 0..out_height {
        let v_ref = r as f64 * s as f64 + anchor;
        let center = sphere::pixel_to_dir(PixelCoord::new(anchor, v_ref), width, height);
        if opts.strict && math::abs(sphere::lat_of_v(v_ref, height)) >= FRAC_PI_2 - reach {
            return Err(Error::PoleSingularity { row: r });
        }
        for i in -hi..=hi {
            for j in -hj..=hj {
                let x = math::tan(j as f64 * spec.angular_step);
                let y = -math::tan(i as f64 * spec.angular_step);
                let tap = sphere::inverse_gnomonic(center, x, y);
                let p = sphere::dir_to_pixel(tap, width, height);
                let du = snap(anchor + sphere::wrapped_delta(anchor, p.u, width));
                let v = snap(p.v);
                offsets.push(PixelCoord::new(du, v));
                stencils.push(bilinear_stencil(du, v, width, height, opts.boundary));
            }
        }
    }
    Ok(SampleField {
        width,
        height,
        out_width,
        out_height,
        stride: s,
        spec,
        offsets,
        stencils,
    })
}

fn bilinear_stencil(
    du: f64,
    v: f64,
    width: usize,
    height: usize,
    boundary: VerticalBoundary,
) -> [Corner; 4] {
    let u0 = math::floor(du);
    let fx = du - u0;
    let v0 = math::floor(v);
    let fy = v - v0;
    let (u0, v0) = (u0 as i64, v0 as i64);
    let h = height as i64;
    let half = (width / 2) as i64;
    let fix_row = |r: i64| -> (usize, i64) {
        if r < 0 {
            match boundary {
                VerticalBoundary::Clamp => (0, 0),
                VerticalBoundary::PoleWrap => ((-r - 1).min(h - 1) as usize, half),
            }
        } else if r >= h {
            match boundary {
                VerticalBoundary::Clamp => ((h - 1) as usize, 0),
                VerticalBoundary::PoleWrap => ((2 * h - 1 - r).max(0) as usize, half),
            }
        } else {
            (r as usize, 0)
        }
    };
    let (r0, s0) = fix_row(v0);
    let (r1, s1) = fix_row(v0 + 1);
    [
        Corner {
            row: r0,
            dcol: u0 + s0,
            weight: (1.0 - fx) * (1.0 - fy),
        },
        Corner {
            row: r0,
            dcol: u0 + 1 + s0,
            weight: fx * (1.0 - fy),
        },
        Corner {
            row: r1,
            dcol: u0 + s1,
            weight: (1.0 - fx) * fy,
        },
        Corner {
            row: r1,
            dcol: u0 + 1 + s1,
            weight: fx * fy,
        },
    ]
}

impl SampleField {
    pub fn input_width(&self) -> usize {
        self.width
    }

    pub fn input_height(&self) -> usize {
        self.height
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn out_height(&self) -> usize {
        self.out_height
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn spec(&self) -> EquiKernelSpec {
        self.spec
    }

    /// Input-space sample position of `tap` for output pixel `(col, row)`.
    /// `u` is not reduced modulo the width.
    pub fn sample(&self, col: usize, row: usize, tap: usize) -> PixelCoord {
        let o = self.offsets[row * self.spec.taps() + tap];
        PixelCoord::new((col * self.stride) as f64 + o.u, o.v)
    }

    /// Tap offsets of an output row, relative to the output column's input anchor.
    pub fn row_offsets(&self, row: usize) -> &[PixelCoord] {
        let t = self.spec.taps();
        &self.offsets[row * t..(row + 1) * t]
    }

    #[inline]
    fn sample_value(&self, plane: &[f64], col: usize, stencil: &[Corner; 4]) -> f64 {
        let w = self.width as i64;
        let base = (col * self.stride) as i64;
        let mut acc = 0.0;
        for c in stencil {
            let cc = (base + c.dcol).rem_euclid(w) as usize;
            acc += c.weight * plane[c.row * self.width + cc];
        }
        acc
    }
}

/// Weights indexed by `(out_channel, in_channel, tap)`, taps row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    out_channels: usize,
    in_channels: usize,
    taps: usize,
    data: Vec<f64>,
}

impl KernelWeights {
    pub fn zeros(out_channels: usize, in_channels: usize, taps: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            taps,
            data: vec![0.0; out_channels * in_channels * taps],
        }
    }

    pub fn from_vec(out_channels: usize, in_channels: usize, taps: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != out_channels * in_channels * taps || out_channels == 0 || in_channels == 0 {
            return Err(Error::ShapeMismatch("weight tensor length"));
        }
        Ok(Self {
            out_channels,
            in_channels,
            taps,
            data,
        })
    }

    /// Single-channel kernel that passes the center tap through.
    pub fn identity(taps: usize) -> Self {
        let mut w = Self::zeros(1, 1, taps);
        w.data[taps / 2] = 1.0;
        w
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, oc: usize, ic: usize, tap: usize) -> f64 {
        self.data[(oc * self.in_channels + ic) * self.taps + tap]
    }
}

fn check_shapes(input: &EquirectGrid<f64>, weights: &KernelWeights, field: &SampleField) -> Result<()> {
    if input.width() != field.width || input.height() != field.height {
        return Err(Error::ShapeMismatch("input does not match the sample field"));
    }
    if weights.in_channels != input.channels() {
        return Err(Error::ShapeMismatch("weight in-channels vs input channels"));
    }
    if weights.taps != field.spec.taps() {
        return Err(Error::ShapeMismatch("weight taps vs kernel spec"));
    }
    Ok(())
}

/// `out[oc, p] = Σ_ic Σ_tap w[oc, ic, tap] · bilinear(input[ic], field[p, tap])`.
pub fn equiconv_forward(
    input: &EquirectGrid<f64>,
    weights: &KernelWeights,
    field: &SampleField,
) -> Result<EquirectGrid<f64>> {
    check_shapes(input, weights, field)?;
    let taps = field.spec.taps();
    let (ow, oh) = (field.out_width, field.out_height);
    let mut out = EquirectGrid::filled(ow, oh, weights.out_channels, 0.0)?;
    for oc in 0..weights.out_channels {
        let dst = out.plane_mut(oc);
        for r in 0..oh {
            let stencils = &field.stencils[r * taps..(r + 1) * taps];
            for c in 0..ow {
                let mut acc = 0.0;
                for ic in 0..weights.in_channels {
                    let plane = input.plane(ic);
                    for (t, st) in stencils.iter().enumerate() {
                        acc += weights.at(oc, ic, t) * field.sample_value(plane, c, st);
                    }
                }
                dst[r * ow + c] = acc;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`equiconv_forward`] with respect to the input and the weights.
pub fn equiconv_backward(
    grad_out: &EquirectGrid<f64>,
    input: &EquirectGrid<f64>,
    weights: &KernelWeights,
    field: &SampleField,
) -> Result<(EquirectGrid<f64>, KernelWeights)> {
    check_shapes(input, weights, field)?;
    if grad_out.width() != field.out_width
        || grad_out.height() != field.out_height
        || grad_out.channels() != weights.out_channels
    {
        return Err(Error::ShapeMismatch("grad_out does not match the forward output"));
    }
    let taps = field.spec.taps();
    let (w, ow, oh) = (field.width as i64, field.out_width, field.out_height);
    let mut grad_in = EquirectGrid::filled(field.width, field.height, input.channels(), 0.0)?;
    let mut grad_w = KernelWeights::zeros(weights.out_channels, weights.in_channels, taps);
    for oc in 0..weights.out_channels {
        let g = grad_out.plane(oc);
        for r in 0..oh {
            let stencils = &field.stencils[r * taps..(r + 1) * taps];
            for c in 0..ow {
                let go = g[r * ow + c];
                if go == 0.0 {
                    continue;
                }
                let base = (c * field.stride) as i64;
                for ic in 0..weights.in_channels {
                    let plane = input.plane(ic);
                    for (t, st) in stencils.iter().enumerate() {
                        let wv = weights.at(oc, ic, t);
                        let gw_idx = (oc * weights.in_channels + ic) * taps + t;
                        grad_w.data[gw_idx] += go * field.sample_value(plane, c, st);
                        let gi = grad_in.plane_mut(ic);
                        for corner in st {
                            let cc = (base + corner.dcol).rem_euclid(w) as usize;
                            gi[corner.row * field.width + cc] += go * wv * corner.weight;
                        }
                    }
                }
            }
        }
    }
    Ok((grad_in, grad_w))
}

/// Plain stencil convolution (correlation) with horizontal wrap and zero
/// padding above and below; the reference EquiConv is compared against.
pub fn standard_conv(
    input: &EquirectGrid<f64>,
    weights: &KernelWeights,
    kh: usize,
    kw: usize,
) -> Result<EquirectGrid<f64>> {
    if weights.taps != kh * kw || weights.in_channels != input.channels() {
        return Err(Error::ShapeMismatch("standard_conv weights"));
    }
    let (wd, ht) = (input.width(), input.height());
    let mut out = EquirectGrid::filled(wd, ht, weights.out_channels, 0.0)?;
    let (hi, hj) = ((kh / 2) as i64, (kw / 2) as i64);
    for oc in 0..weights.out_channels {
        for r in 0..ht {
            for c in 0..wd {
                let mut acc = 0.0;
                for ic in 0..weights.in_channels {
                    for i in -hi..=hi {
                        let rr = r as i64 + i;
                        if rr < 0 || rr >= ht as i64 {
                            continue;
                        }
                        for j in -hj..=hj {
                            let t = ((i + hi) * kw as i64 + (j + hj)) as usize;
                            acc += weights.at(oc, ic, t)
                                * input.get_wrapped(ic, c as i64 + j, rr as usize);
                        }
                    }
                }
                let idx = out.index(oc, c, r);
                out.data_mut()[idx] = acc;
            }
        }
    }
    Ok(out)
}

/// Random input and weights for the self-checks.
fn random_problem(
    width: usize,
    height: usize,
    channels: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<(EquirectGrid<f64>, KernelWeights)> {
    let x = (0..width * height * channels.0).map(|_| rng.random_range(-1.0..1.0)).collect();
    let k = (0..channels.1 * channels.0 * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok((
        EquirectGrid::from_vec(width, height, channels.0, x)?,
        KernelWeights::from_vec(channels.1, channels.0, 9, k)?,
    ))
}

/// Deviation of a 3×3 one-pixel-step EquiConv from [`standard_conv`] on
/// an input that is zero outside the `band_rows` rows around the equator.
#[derive(Debug, Clone, PartialEq)]
pub struct EquatorAgreement {
    /// `max |equi − std| / max |std|` over the band.
    pub max_rel_error: f64,
    /// The same ratio per band row, `(row, error)`.
    pub rows: Vec<(usize, f64)>,
}

pub fn equator_agreement(width: usize, height: usize, band_rows: usize, seed: u64) -> Result<EquatorAgreement> {
    if band_rows == 0 || band_rows > height {
        return Err(Error::InvalidParameter("band_rows must be in 1..=height"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, k) = random_problem(width, height, (1, 1), &mut rng)?;
    let top = height / 2 - band_rows / 2;
    let band = top..top + band_rows;
    for r in 0..height {
        if !band.contains(&r) {
            for c in 0..width {
                x.set(c, r, 0.0);
            }
        }
    }
    let field = build_sample_field(width, height, EquiKernelSpec::with_pixel_step(3, 3, width)?, FieldOptions::default())?;
    let equi = equiconv_forward(&x, &k, &field)?;
    let plain = standard_conv(&x, &k, 3, 3)?;
    let scale = band
        .clone()
        .flat_map(|r| (0..width).map(move |c| (c, r)))
        .map(|(c, r)| plain.get(c, r).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let rows: Vec<(usize, f64)> = band
        .map(|r| {
            let e = (0..width).map(|c| (equi.get(c, r) - plain.get(c, r)).abs()).fold(0.0, f64::max);
            (r, e / scale)
        })
        .collect();
    Ok(EquatorAgreement {
        max_rel_error: rows.iter().map(|e| e.1).fold(0.0, f64::max),
        rows,
    })
}

/// Whether shifting the input by each of `shifts` columns shifts the
/// output by the same amount, bit for bit.
pub fn shift_equivariance(width: usize, height: usize, shifts: &[i64], seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, k) = random_problem(width, height, (2, 2), &mut rng)?;
    let field = build_sample_field(width, height, EquiKernelSpec::with_pixel_step(3, 3, width)?, FieldOptions::default())?;
    let y = equiconv_forward(&x, &k, &field)?;
    for &s in shifts {
        if equiconv_forward(&x.shift_columns(s), &k, &field)? != y.shift_columns(s) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Worst relative disagreement between [`equiconv_backward`] and central
/// differences of `L = Σ g · forward(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_rel_input: f64,
    pub max_rel_weights: f64,
    pub checked: usize,
}

impl GradientCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_input.max(self.max_rel_weights)
    }
}

/// Central-difference gradient check of a 3×3 kernel with 2 input and 2
/// output channels. The forward map is linear in both the input and the
/// weights, so the check holds wherever the sample positions fall.
pub fn gradient_check(width: usize, height: usize, step: f64, seed: u64) -> Result<GradientCheck> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("finite-difference step must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, k) = random_problem(width, height, (2, 2), &mut rng)?;
    let field = build_sample_field(width, height, EquiKernelSpec::with_pixel_step(3, 3, width)?, FieldOptions::default())?;
    let g_data = (0..width * height * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = EquirectGrid::from_vec(width, height, 2, g_data)?;
    let loss = |x: &EquirectGrid<f64>, k: &KernelWeights| -> Result<f64> {
        let y = equiconv_forward(x, k, &field)?;
        Ok(y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum())
    };
    let (gi, gw) = equiconv_backward(&g, &x, &k, &field)?;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);

    let mut max_rel_input: f64 = 0.0;
    let mut xp = x.clone();
    for i in 0..x.data().len() {
        let v = x.data()[i];
        xp.data_mut()[i] = v + step;
        let up = loss(&xp, &k)?;
        xp.data_mut()[i] = v - step;
        let down = loss(&xp, &k)?;
        xp.data_mut()[i] = v;
        max_rel_input = max_rel_input.max(rel(gi.data()[i], (up - down) / (2.0 * step)));
    }
    let mut max_rel_weights: f64 = 0.0;
    let mut kp = k.clone();
    for i in 0..k.data().len() {
        let v = k.data()[i];
        kp.data_mut()[i] = v + step;
        let up = loss(&x, &kp)?;
        kp.data_mut()[i] = v - step;
        let down = loss(&x, &kp)?;
        kp.data_mut()[i] = v;
        max_rel_weights = max_rel_weights.max(rel(gw.data()[i], (up - down) / (2.0 * step)));
    }
    Ok(GradientCheck {
        max_rel_input,
        max_rel_weights,
        checked: x.data().len() + k.data().len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_grid(w: usize, h: usize, ch: usize, rng: &mut ChaCha8Rng) -> EquirectGrid<f64> {
        let data = (0..w * h * ch).map(|_| rng.random_range(-1.0..1.0)).collect();
        EquirectGrid::from_vec(w, h, ch, data).unwrap()
    }

    fn random_weights(oc: usize, ic: usize, taps: usize, rng: &mut ChaCha8Rng) -> KernelWeights {
        let data = (0..oc * ic * taps).map(|_| rng.random_range(-1.0..1.0)).collect();
        KernelWeights::from_vec(oc, ic, taps, data).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(EquiKernelSpec::new(2, 3, 0.01).is_err());
        assert!(EquiKernelSpec::new(3, 3, 0.0).is_err());
        assert!(EquiKernelSpec::new(3, 3, 1.0).is_err());
        assert!(EquiKernelSpec::new(1, 5, 0.1).is_ok());
    }

    #[test]
    fn one_by_one_kernel_samples_its_own_pixel() {
        let spec = EquiKernelSpec::with_pixel_step(1, 1, 64).unwrap();
        let f = build_sample_field(64, 32, spec, FieldOptions::default()).unwrap();
        for r in 0..32 {
            for c in [0usize, 17, 63] {
                let p = f.sample(c, r, 0);
                assert!((p.u - c as f64).abs() < 1e-9 && (p.v - r as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn equator_taps_form_a_plain_stencil() {
        let spec = EquiKernelSpec::with_pixel_step(3, 3, 512).unwrap();
        let f = build_sample_field(512, 256, spec, FieldOptions::default()).unwrap();
        // rows 127 and 128 straddle the equator
        for r in [127usize, 128] {
            let offs = f.row_offsets(r);
            for (t, o) in offs.iter().enumerate() {
                let j = (t % 3) as f64 - 1.0;
                assert!((o.u - j).abs() < 1e-3, "row {r} tap {t}: {}", o.u);
            }
        }
    }

    #[test]
    fn horizontal_spread_at_sixty_degrees() {
        // row whose latitude is 60°: φ = π/2 − π(v + 0.5)/H → v = H/6 − 0.5
        let (w, h) = (768usize, 384usize);
        let spec = EquiKernelSpec::with_pixel_step(3, 3, w).unwrap();
        let f = build_sample_field(w, h, spec, FieldOptions::default()).unwrap();
        let r = h / 6; // v = 64, φ = 60° − 0.23°
        let lat = sphere::lat_of_v(r as f64, h);
        let offs = f.row_offsets(r);
        let spread = (offs[5].u - offs[3].u) / 2.0;
        assert!((spread - 2.0).abs() / 2.0 < 0.02, "spread {spread}");
        assert!((spread - 1.0 / math::cos(lat)).abs() < 0.01);
    }

    #[test]
    fn strict_mode_flags_polar_rows() {
        let spec = EquiKernelSpec::with_pixel_step(3, 3, 64).unwrap();
        let opts = FieldOptions {
            strict: true,
            ..FieldOptions::default()
        };
        assert!(matches!(
            build_sample_field(64, 32, spec, opts),
            Err(Error::PoleSingularity { row: 0 })
        ));
    }

    #[test]
    fn taps_over_the_pole_land_half_a_turn_away() {
        let spec = EquiKernelSpec::with_pixel_step(3, 3, 64).unwrap();
        let f = build_sample_field(64, 32, spec, FieldOptions::default()).unwrap();
        // top row, northern tap (i = -1, j = 0) is tap 1
        let o = f.row_offsets(0)[1];
        assert!((o.u.abs() - 32.0).abs() < 1e-6, "u offset {}", o.u);
        assert!(o.v >= -0.5 && o.v < 0.5);
    }

    #[test]
    fn identity_and_constant_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, h) = (64, 32);
        let spec = EquiKernelSpec::with_pixel_step(3, 3, w).unwrap();
        let f = build_sample_field(w, h, spec, FieldOptions::default()).unwrap();
        let x = random_grid(w, h, 1, &mut rng);
        let y = equiconv_forward(&x, &KernelWeights::identity(9), &f).unwrap();
        assert_eq!(y, x);

        let k = random_weights(2, 1, 9, &mut rng);
        let c = EquirectGrid::filled(w, h, 1, 0.75).unwrap();
        let y = equiconv_forward(&c, &k, &f).unwrap();
        for oc in 0..2 {
            let sum: f64 = (0..9).map(|t| k.at(oc, 0, t)).sum();
            for v in y.plane(oc) {
                assert!((v - sum * 0.75).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clamp_boundary_also_preserves_constants() {
        let spec = EquiKernelSpec::with_pixel_step(3, 3, 32).unwrap();
        let opts = FieldOptions {
            boundary: VerticalBoundary::Clamp,
            ..FieldOptions::default()
        };
        let f = build_sample_field(32, 16, spec, opts).unwrap();
        let c = EquirectGrid::filled(32, 16, 1, 2.0).unwrap();
        let k = KernelWeights::from_vec(1, 1, 9, vec![1.0; 9]).unwrap();
        for v in equiconv_forward(&c, &k, &f).unwrap().data() {
            assert!((v - 18.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let spec = EquiKernelSpec::with_pixel_step(3, 3, 64).unwrap();
        let f = build_sample_field(64, 32, spec, FieldOptions::default()).unwrap();
        let x = EquirectGrid::filled(32, 16, 1, 0.0).unwrap();
        assert!(equiconv_forward(&x, &KernelWeights::identity(9), &f).is_err());
        let x = EquirectGrid::filled(64, 32, 1, 0.0).unwrap();
        assert!(equiconv_forward(&x, &KernelWeights::identity(25), &f).is_err());
        let g = EquirectGrid::filled(64, 32, 2, 0.0).unwrap();
        assert!(equiconv_backward(&g, &x, &KernelWeights::identity(9), &f).is_err());
    }

    #[test]
    fn strided_field_downsamples() {
        let spec = EquiKernelSpec::with_pixel_step(3, 3, 64).unwrap();
        let opts = FieldOptions {
            stride: 2,
            ..FieldOptions::default()
        };
        let f = build_sample_field(64, 32, spec, opts).unwrap();
        assert_eq!((f.out_width(), f.out_height()), (32, 16));
        let x = EquirectGrid::filled(64, 32, 1, 1.0).unwrap();
        let y = equiconv_forward(&x, &KernelWeights::identity(9), &f).unwrap();
        assert_eq!((y.width(), y.height()), (32, 16));
        // center tap sits between input pixels 2c and 2c+1
        let p = f.sample(3, 5, 4);
        assert!((p.u - 6.5).abs() < 1e-9 && (p.v - 10.5).abs() < 1e-9);
        assert!(build_sample_field(64, 32, spec, FieldOptions { stride: 3, ..opts }).is_err());
    }

    #[test]
    fn zero_grad_out_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = EquiKernelSpec::with_pixel_step(3, 3, 32).unwrap();
        let f = build_sample_field(32, 16, spec, FieldOptions::default()).unwrap();
        let x = random_grid(32, 16, 2, &mut rng);
        let k = random_weights(3, 2, 9, &mut rng);
        let g = EquirectGrid::filled(32, 16, 3, 0.0).unwrap();
        let (gi, gw) = equiconv_backward(&g, &x, &k, &f).unwrap();
        assert!(gi.data().iter().all(|v| *v == 0.0));
        assert!(gw.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn weight_gradient_for_constant_input() {
        // forward is linear in the weights and every sample of a constant is
        // that constant, so dL/dw[oc, ic, t] = c · Σ_p grad_out[oc, p]
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = EquiKernelSpec::with_pixel_step(3, 3, 32).unwrap();
        let f = build_sample_field(32, 16, spec, FieldOptions::default()).unwrap();
        let x = EquirectGrid::filled(32, 16, 2, 1.5).unwrap();
        let k = random_weights(2, 2, 9, &mut rng);
        let g = random_grid(32, 16, 2, &mut rng);
        let (_, gw) = equiconv_backward(&g, &x, &k, &f).unwrap();
        for oc in 0..2 {
            let s: f64 = g.plane(oc).iter().sum();
            for ic in 0..2 {
                for t in 0..9 {
                    let got = gw.at(oc, ic, t);
                    assert!((got - 1.5 * s).abs() < 1e-9 * (1.0 + s.abs()));
                }
            }
        }
    }

    #[test]
    fn self_checks() {
        let g = gradient_check(32, 16, 1e-5, 4).unwrap();
        assert!(g.max_rel_error() < 1e-4, "{g:?}");
        assert_eq!(g.checked, 32 * 16 * 2 + 36);
        assert!(shift_equivariance(64, 32, &[1, 37, 32], 5).unwrap());
        let e = equator_agreement(256, 128, 2, 6).unwrap();
        assert!(e.max_rel_error < 1e-3, "{e:?}");
        assert_eq!(e.rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![63, 64]);
    }

    #[test]
    fn equator_deviation_grows_like_the_longitude_stretch() {
        let e = equator_agreement(256, 128, 20, 6).unwrap();
        let edge = e.rows[0].1;
        let stretch = 1.0 / math::cos(sphere::lat_of_v(e.rows[0].0 as f64, 128)) - 1.0;
        assert!(edge > 0.25 * stretch && edge < 4.0 * stretch, "{edge} vs {stretch}");
        assert!(e.rows[9].1 < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn column_shift_commutes_bitwise(seed in any::<u64>(), k in -70i64..70, stride in 1usize..3) {
            let (w, h) = (64, 32);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_grid(w, h, 2, &mut rng);
            let kw = random_weights(2, 2, 9, &mut rng);
            let opts = FieldOptions { stride, ..FieldOptions::default() };
            let f = build_sample_field(w, h, EquiKernelSpec::with_pixel_step(3, 3, w).unwrap(), opts).unwrap();
            let k = k * stride as i64;
            let a = equiconv_forward(&x.shift_columns(k), &kw, &f).unwrap();
            let b = equiconv_forward(&x, &kw, &f).unwrap().shift_columns(k / stride as i64);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn forward_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let (w, h) = (32, 16);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_grid(w, h, 1, &mut rng);
            let b = random_grid(w, h, 1, &mut rng);
            let kw = random_weights(2, 1, 9, &mut rng);
            let f = build_sample_field(w, h, EquiKernelSpec::with_pixel_step(3, 3, w).unwrap(), FieldOptions::default()).unwrap();
            let mix = EquirectGrid::from_vec(w, h, 1, a.data().iter().zip(b.data()).map(|(x, y)| alpha * x + beta * y).collect()).unwrap();
            let lhs = equiconv_forward(&mix, &kw, &f).unwrap();
            let ya = equiconv_forward(&a, &kw, &f).unwrap();
            let yb = equiconv_forward(&b, &kw, &f).unwrap();
            for i in 0..lhs.data().len() {
                prop_assert!((lhs.data()[i] - (alpha * ya.data()[i] + beta * yb.data()[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn row_offsets_are_column_invariant(w in (5usize..40).prop_map(|x| 2 * x), r in 0usize..100, c in 0usize..200) {
            let h = w / 2;
            let (r, c) = (r % h, c % w);
            let f = build_sample_field(w, h, EquiKernelSpec::with_pixel_step(3, 3, w).unwrap(), FieldOptions::default()).unwrap();
            for t in 0..9 {
                let p = f.sample(c, r, t);
                let o = f.row_offsets(r)[t];
                prop_assert!((p.u - c as f64 - o.u).abs() < 1e-9);
                prop_assert_eq!(p.v, o.v);
            }
        }
    }
}
