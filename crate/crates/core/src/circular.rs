//! Circular accumulators: splatting along normalized image-gradient rays.
//!
//! For every pixel the forward grid `k` points `k` steps along the unit image
//! gradient and the backward grid `k` points `k` steps against it. Edges of a
//! bright disk therefore pile their gradient magnitude onto the disk center
//! at `k = radius`. Outputs are signed raw sums; they are never
//! weight-normalized.

use rayon::prelude::*;

use crate::accumulate::{
    accumulate, accumulate_backward_grid, slice, GridSet, SamplingGrid, TargetShape,
    DEFAULT_EPSILON,
};
use crate::error::{Error, Result};
use crate::filter::box_filter;
use crate::kernels::KernelKind;
use crate::tensor::{mesh_grids, Plane, Tensor};

/// Radius bands giving the best registration results in the reference ablation.
pub const DEFAULT_RADII: [usize; 3] = [15, 10, 5];

/// Image gradients and their normalized directions.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    /// ∂U/∂(row).
    pub ux: Plane,
    /// ∂U/∂(column).
    pub uy: Plane,
    pub magnitude: Plane,
    pub unit_x: Plane,
    pub unit_y: Plane,
    pub epsilon: f64,
}

impl GradientField {
    /// Builds magnitude and unit vectors from raw gradient components.
    pub fn from_components(ux: Plane, uy: Plane, epsilon: f64) -> Result<Self> {
        if ux.dims() != uy.dims() {
            return Err(Error::shape(ux.dims(), uy.dims()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        let (h, w) = ux.dims();
        let magnitude = Plane::from_fn(h, w, |i, j| ux.get(i, j).hypot(uy.get(i, j)));
        let unit_x = Plane::from_fn(h, w, |i, j| ux.get(i, j) / (magnitude.get(i, j) + epsilon));
        let unit_y = Plane::from_fn(h, w, |i, j| uy.get(i, j) / (magnitude.get(i, j) + epsilon));
        Ok(Self {
            ux,
            uy,
            magnitude,
            unit_x,
            unit_y,
            epsilon,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.ux.dims()
    }

    /// Chains gradients on `(unit_x, unit_y, magnitude)` back to `(ux, uy)`.
    pub fn components_backward(
        &self,
        d_unit_x: &Plane,
        d_unit_y: &Plane,
        d_magnitude: &Plane,
    ) -> (Plane, Plane) {
        let (h, w) = self.dims();
        let mut d_ux = Plane::zeros(h, w);
        let mut d_uy = Plane::zeros(h, w);
        for i in 0..h {
            for j in 0..w {
                let (gx, gy, s) = (
                    self.ux.get(i, j),
                    self.uy.get(i, j),
                    self.magnitude.get(i, j),
                );
                let denom = s + self.epsilon;
                let (dx, dy, ds) = (
                    d_unit_x.get(i, j),
                    d_unit_y.get(i, j),
                    d_magnitude.get(i, j),
                );
                // ∂S/∂g is g/S; undefined at S = 0 where we take 0
                let (sx, sy) = if s > 0.0 {
                    (gx / s, gy / s)
                } else {
                    (0.0, 0.0)
                };
                let along = (dx * gx + dy * gy) / (denom * denom);
                d_ux.set(i, j, dx / denom - along * sx + ds * sx);
                d_uy.set(i, j, dy / denom - along * sy + ds * sy);
            }
        }
        (d_ux, d_uy)
    }
}

const SOBEL_SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];

#[inline]
fn clamp(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// 3×3 Sobel gradients scaled by 1/8, replicate-padded.
pub fn sobel_gradient_field(u: &Tensor, epsilon: f64) -> Result<GradientField> {
    if u.channels() != 1 {
        return Err(Error::invalid(format!(
            "gradient field needs a single-channel image, got {} channels",
            u.channels()
        )));
    }
    let (h, w) = u.spatial();
    let at = |i: isize, j: isize| u.get(0, clamp(i, h), clamp(j, w));
    let ux = Plane::from_fn(h, w, |i, j| {
        let (i, j) = (i as isize, j as isize);
        (-1..=1)
            .map(|d: isize| SOBEL_SMOOTH[(d + 1) as usize] * (at(i + 1, j + d) - at(i - 1, j + d)))
            .sum::<f64>()
            / 8.0
    });
    let uy = Plane::from_fn(h, w, |i, j| {
        let (i, j) = (i as isize, j as isize);
        (-1..=1)
            .map(|d: isize| SOBEL_SMOOTH[(d + 1) as usize] * (at(i + d, j + 1) - at(i + d, j - 1)))
            .sum::<f64>()
            / 8.0
    });
    GradientField::from_components(ux, uy, epsilon)
}

/// Adjoint of [`sobel_gradient_field`]'s linear part: maps `(∂L/∂ux, ∂L/∂uy)`
/// to `∂L/∂U`.
pub fn sobel_backward(d_ux: &Plane, d_uy: &Plane) -> Plane {
    let (h, w) = d_ux.dims();
    let mut out = Plane::zeros(h, w);
    let mut add = |i: isize, j: isize, v: f64| {
        let (ci, cj) = (clamp(i, h), clamp(j, w));
        out.set(ci, cj, out.get(ci, cj) + v);
    };
    for i in 0..h as isize {
        for j in 0..w as isize {
            let gx = d_ux.get(i as usize, j as usize) / 8.0;
            let gy = d_uy.get(i as usize, j as usize) / 8.0;
            for d in -1..=1isize {
                let s = SOBEL_SMOOTH[(d + 1) as usize];
                add(i + 1, j + d, s * gx);
                add(i - 1, j + d, -s * gx);
                add(i + d, j + 1, s * gy);
                add(i + d, j - 1, -s * gy);
            }
        }
    }
    out
}

fn ray_grids(field: &GradientField, ks: impl Iterator<Item = usize>, sign: f64) -> Result<GridSet> {
    let (h, w) = field.dims();
    let mesh = mesh_grids(h, w)?;
    let grids = ks
        .map(|k| {
            let step = sign * k as f64;
            let gx = Plane::from_fn(h, w, |i, j| {
                step * field.unit_x.get(i, j) + mesh.mx.get(i, j)
            });
            let gy = Plane::from_fn(h, w, |i, j| {
                step * field.unit_y.get(i, j) + mesh.my.get(i, j)
            });
            SamplingGrid::new(gx, gy)
        })
        .collect::<Result<Vec<_>>>()?;
    GridSet::new(grids)
}

/// Forward (`+k·Û`) and backward (`−k·Û`) grid sets for `k = 1..=N`.
pub fn circular_grids(field: &GradientField, radii_max: usize) -> Result<(GridSet, GridSet)> {
    if radii_max == 0 {
        return Err(Error::invalid("radius count must be >= 1"));
    }
    Ok((
        ray_grids(field, 1..=radii_max, 1.0)?,
        ray_grids(field, 1..=radii_max, -1.0)?,
    ))
}

/// Accumulation radii `k` with `lo < k <= hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Band {
    pub lo: usize,
    pub hi: usize,
}

impl Band {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if hi <= lo {
            return Err(Error::invalid(format!("empty radius band ({lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// The single radius `k`.
    pub fn single(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("radius must be >= 1"));
        }
        Ok(Self { lo: k - 1, hi: k })
    }

    pub fn radii(self) -> std::ops::RangeInclusive<usize> {
        self.lo + 1..=self.hi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircularConfig {
    pub bands: Vec<Band>,
    /// Subtract the accumulation along the opposite direction.
    pub symmetric: bool,
    /// Swap the roles of the forward and backward grid sets.
    pub reversed: bool,
    pub epsilon: f64,
    pub kernel: KernelKind,
}

impl CircularConfig {
    /// Bands from a strictly decreasing radius list: `[15, 10, 5]` gives
    /// `(10, 15]`, `(5, 10]` and `(0, 5]`; a single `N` gives `(0, N]`.
    pub fn from_radii(radii: &[usize]) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::invalid("radius list must not be empty"));
        }
        if radii.contains(&0) {
            return Err(Error::invalid("radii must be >= 1"));
        }
        if radii.windows(2).any(|p| p[1] >= p[0]) {
            return Err(Error::invalid(format!(
                "radii must be strictly decreasing, got {radii:?}"
            )));
        }
        let bands = radii
            .iter()
            .enumerate()
            .map(|(idx, &hi)| Band::new(radii.get(idx + 1).copied().unwrap_or(0), hi))
            .collect::<Result<Vec<_>>>()?;
        Self::with_bands(bands)
    }

    pub fn with_bands(bands: Vec<Band>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::invalid("at least one radius band is required"));
        }
        Ok(Self {
            bands,
            symmetric: true,
            reversed: false,
            epsilon: DEFAULT_EPSILON,
            kernel: KernelKind::Bilinear,
        })
    }

    /// All radii `1..=max(H, W)` in one band.
    pub fn full_range(height: usize, width: usize) -> Result<Self> {
        Self::from_radii(&[height.max(width)])
    }

    pub fn symmetric(mut self, on: bool) -> Self {
        self.symmetric = on;
        self
    }

    pub fn reversed(mut self, on: bool) -> Self {
        self.reversed = on;
        self
    }

    pub fn kernel(mut self, kind: KernelKind) -> Self {
        self.kernel = kind;
        self
    }

    fn signs(&self) -> (f64, f64) {
        if self.reversed {
            (-1.0, 1.0)
        } else {
            (1.0, -1.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandAccumulation {
    pub band: Band,
    pub v_s: Tensor,
    pub v_u: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircularAccumulation {
    /// Accumulated gradient magnitude, summed over bands.
    pub v_s: Tensor,
    /// Accumulated feature, summed over bands.
    pub v_u: Tensor,
    pub per_band: Vec<BandAccumulation>,
}

fn signed_accumulate(
    src: &Tensor,
    forward: &GridSet,
    backward: Option<&GridSet>,
    kind: KernelKind,
    shape: TargetShape,
) -> Result<Tensor> {
    let fwd = accumulate(src, forward, kind, shape)?;
    match backward {
        Some(b) => fwd.zip_map(&accumulate(src, b, kind, shape)?, |x, y| x - y),
        None => Ok(fwd),
    }
}

pub fn circular_accumulate(
    u: &Tensor,
    field: &GradientField,
    cfg: &CircularConfig,
) -> Result<CircularAccumulation> {
    if u.spatial() != field.dims() {
        return Err(Error::shape(field.dims(), u.spatial()));
    }
    let (h, w) = u.spatial();
    let shape = TargetShape::new(h, w)?;
    let magnitude = field.magnitude.clone().into_tensor();
    let (fs, bs) = cfg.signs();

    let per_band = cfg
        .bands
        .par_iter()
        .map(|&band| {
            let forward = ray_grids(field, band.radii(), fs)?;
            let backward = if cfg.symmetric {
                Some(ray_grids(field, band.radii(), bs)?)
            } else {
                None
            };
            Ok(BandAccumulation {
                band,
                v_s: signed_accumulate(&magnitude, &forward, backward.as_ref(), cfg.kernel, shape)?,
                v_u: signed_accumulate(u, &forward, backward.as_ref(), cfg.kernel, shape)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut v_s = Tensor::zeros(1, h, w);
    let mut v_u = Tensor::zeros(u.channels(), h, w);
    for b in &per_band {
        v_s = v_s.zip_map(&b.v_s, |a, x| a + x)?;
        v_u = v_u.zip_map(&b.v_u, |a, x| a + x)?;
    }
    Ok(CircularAccumulation { v_s, v_u, per_band })
}

/// Gradients of a scalar loss through [`circular_accumulate`].
#[derive(Clone, Debug, PartialEq)]
pub struct CircularGrad {
    pub d_magnitude: Plane,
    pub d_u: Tensor,
    pub d_unit_x: Plane,
    pub d_unit_y: Plane,
}

/// Backward pass of the band-summed outputs, given `∂L/∂v_s` and `∂L/∂v_u`.
///
/// Direction gradients are zero for the nearest kernel. Use
/// [`GradientField::components_backward`] and [`sobel_backward`] to continue
/// to the raw gradients and the input image.
pub fn circular_backward(
    d_vs: &Tensor,
    d_vu: &Tensor,
    u: &Tensor,
    field: &GradientField,
    cfg: &CircularConfig,
) -> Result<CircularGrad> {
    let (h, w) = field.dims();
    if d_vs.shape() != (1, h, w) {
        return Err(Error::shape((1, h, w), d_vs.shape()));
    }
    if d_vu.shape() != u.shape() {
        return Err(Error::shape(u.shape(), d_vu.shape()));
    }
    let magnitude = field.magnitude.clone().into_tensor();
    let mut d_s = Tensor::zeros(1, h, w);
    let mut d_u = Tensor::zeros(u.channels(), h, w);
    let mut d_unit_x = Plane::zeros(h, w);
    let mut d_unit_y = Plane::zeros(h, w);
    let (fs, bs) = cfg.signs();

    let mut directions = vec![(fs, 1.0)];
    if cfg.symmetric {
        directions.push((bs, -1.0));
    }
    for band in &cfg.bands {
        for &(dir, coeff) in &directions {
            let grids = ray_grids(field, band.radii(), dir)?;
            let gs = slice(d_vs, &grids, cfg.kernel, (h, w))?;
            let gu = slice(d_vu, &grids, cfg.kernel, (h, w))?;
            d_s = d_s.zip_map(&gs, |a, x| a + coeff * x)?;
            d_u = d_u.zip_map(&gu, |a, x| a + coeff * x)?;

            // nearest grids carry no coordinate gradient
            if cfg.kernel != KernelKind::Bilinear {
                continue;
            }
            let from_s = accumulate_backward_grid(d_vs, &magnitude, &grids, cfg.kernel)?;
            let from_u = accumulate_backward_grid(d_vu, u, &grids, cfg.kernel)?;
            for ((k, gs), gu) in band.radii().zip(&from_s).zip(&from_u) {
                // G = dir·k·Û + M, so ∂G/∂Û = dir·k
                let scale = coeff * dir * k as f64;
                for i in 0..h {
                    for j in 0..w {
                        let dx = gs.gx.get(i, j) + gu.gx.get(i, j);
                        let dy = gs.gy.get(i, j) + gu.gy.get(i, j);
                        d_unit_x.set(i, j, d_unit_x.get(i, j) + scale * dx);
                        d_unit_y.set(i, j, d_unit_y.get(i, j) + scale * dy);
                    }
                }
            }
        }
    }
    Ok(CircularGrad {
        d_magnitude: d_s.plane(0),
        d_u,
        d_unit_x,
        d_unit_y,
    })
}

/// Peak of the 3×3-smoothed `v_s` of one band (or of the band sum when
/// `band` is `None`). Ties go to the larger raw `v_s`, then to the smallest
/// `(row, col)`.
pub fn detect_circle_center(
    acc: &CircularAccumulation,
    band: Option<usize>,
) -> Result<(usize, usize, f64)> {
    let v_s = match band {
        None => &acc.v_s,
        Some(b) => {
            &acc.per_band
                .get(b)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "band {b} out of range ({} bands)",
                        acc.per_band.len()
                    ))
                })?
                .v_s
        }
    };
    if v_s.is_empty() {
        return Err(Error::invalid("empty accumulation"));
    }
    let smooth = box_filter(v_s, 1);
    let w = smooth.width();
    let raw = v_s.channel(0);
    let mut best = 0usize;
    for (idx, &v) in smooth.channel(0).iter().enumerate() {
        let top = smooth.as_slice()[best];
        if v > top || (v == top && raw[idx] > raw[best]) {
            best = idx;
        }
    }
    let score = smooth.as_slice()[best];
    Ok((best / w, best % w, score))
}

/// Sum of `t` over the `(2·half+1)²` window around `(row, col)`.
pub fn window_mass(t: &Tensor, row: usize, col: usize, half: usize) -> f64 {
    let (h, w) = t.spatial();
    let mut total = 0.0;
    for c in 0..t.channels() {
        for i in row.saturating_sub(half)..(row + half + 1).min(h) {
            for j in col.saturating_sub(half)..(col + half + 1).min(w) {
                total += t.get(c, i, j);
            }
        }
    }
    total
}
