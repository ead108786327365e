//! Polar accumulator grids.
//!
//! Image cell `(i, j)` maps to radial coordinate `ρ / s_r` and angular
//! coordinate `(atan2(j − y_c, i − x_c) + π) / s_θ`, where `ρ` is its distance
//! from the center. Accumulating along that grid gives a `H_r×W_ψ` polar
//! accumulator; slicing reads it back. With `angular_wrap` the angular axis is
//! periodic, so splats that straddle the `0/2π` seam land on both sides of it.
//!
//! A pixel lying exactly on the center has no defined angle. It contributes
//! `1/W_ψ` of its weight to every angular bin of radial row 0, and slicing
//! reads the angular mean of that row for it. This keeps the accumulator
//! exactly equivariant under lattice rotations about a pixel center.

use std::f64::consts::PI;

use crate::accumulate::{grid_sample, normalize, AccumulatorGrid, SamplingGrid, DEFAULT_EPSILON};
use crate::engine::{self, TapMap};
use crate::error::{Error, Result};
use crate::filter::GridFilter;
use crate::kernels::{axis_weights, taps_with, Boundary, KernelKind};
use crate::tensor::{Plane, Tensor};

/// Grid sizes evaluated for polar accumulators, smallest first.
pub const PRESET_SIZES: [usize; 4] = [32, 64, 128, 224];
/// Default `(H_r, W_ψ)`.
pub const DEFAULT_SIZE: (usize, usize) = (64, 64);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarConfig {
    /// Pixels per radial bin.
    pub s_r: f64,
    /// Radians per angular bin.
    pub s_theta: f64,
    pub h_r: usize,
    pub w_psi: usize,
    /// `(x_c, y_c)` in (row, column) pixel coordinates.
    pub center: (f64, f64),
    pub angular_wrap: bool,
}

impl PolarConfig {
    pub fn new(
        s_r: f64,
        s_theta: f64,
        h_r: usize,
        w_psi: usize,
        center: (f64, f64),
        angular_wrap: bool,
    ) -> Result<Self> {
        let cfg = Self {
            s_r,
            s_theta,
            h_r,
            w_psi,
            center,
            angular_wrap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Centered on the image, angular bins tiling the circle, radial range
    /// covering the inscribed circle.
    pub fn for_image(height: usize, width: usize, h_r: usize, w_psi: usize) -> Result<Self> {
        let reach = height.min(width) as f64 / 2.0;
        Self::with_reach(height, width, h_r, w_psi, reach)
    }

    /// Like [`PolarConfig::for_image`] but with a radial range reaching the corners.
    pub fn covering_corners(height: usize, width: usize, h_r: usize, w_psi: usize) -> Result<Self> {
        let reach = (height as f64).hypot(width as f64) / 2.0;
        Self::with_reach(height, width, h_r, w_psi, reach)
    }

    fn with_reach(
        height: usize,
        width: usize,
        h_r: usize,
        w_psi: usize,
        reach: f64,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if h_r == 0 || w_psi == 0 {
            return Err(Error::invalid("polar grid dimensions must be positive"));
        }
        let s_r = reach / (h_r.max(2) - 1) as f64;
        Self::new(
            s_r,
            2.0 * PI / w_psi as f64,
            h_r,
            w_psi,
            default_center(height, width),
            true,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_r > 0.0 && self.s_r.is_finite()) {
            return Err(Error::invalid(format!("s_r must be > 0, got {}", self.s_r)));
        }
        if !(self.s_theta > 0.0 && self.s_theta.is_finite()) {
            return Err(Error::invalid(format!(
                "s_theta must be > 0, got {}",
                self.s_theta
            )));
        }
        if self.h_r == 0 || self.w_psi == 0 {
            return Err(Error::invalid("h_r and w_psi must be >= 1"));
        }
        if !(self.center.0.is_finite() && self.center.1.is_finite()) {
            return Err(Error::invalid("center must be finite"));
        }
        if self.angular_wrap && self.s_theta * (self.w_psi as f64) < 2.0 * PI - 1e-9 {
            return Err(Error::invalid(format!(
                "angular wrap needs s_theta * w_psi >= 2π, got {}",
                self.s_theta * self.w_psi as f64
            )));
        }
        Ok(())
    }

    fn cols(&self) -> Boundary {
        if self.angular_wrap {
            Boundary::Wrap
        } else {
            Boundary::Drop
        }
    }

    /// Radius, in pixels, of the outermost radial bin.
    pub fn max_radius(&self) -> f64 {
        (self.h_r - 1) as f64 * self.s_r
    }

    /// Whether pixel `(i, j)` lies within [`max_radius`](Self::max_radius)
    /// of the center, where every radial read has both neighbors in range.
    pub fn covers(&self, i: usize, j: usize) -> bool {
        (i as f64 - self.center.0).hypot(j as f64 - self.center.1) <= self.max_radius()
    }
}

pub fn default_center(height: usize, width: usize) -> (f64, f64) {
    ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0)
}

#[inline]
fn polar_coords(i: usize, j: usize, cfg: &PolarConfig) -> (f64, f64) {
    let di = i as f64 - cfg.center.0;
    let dj = j as f64 - cfg.center.1;
    let r = (di * di + dj * dj).sqrt() / cfg.s_r;
    let theta = (dj.atan2(di) + PI) / cfg.s_theta;
    (r, theta)
}

/// Radial (`gx`) and angular (`gy`) coordinates of every pixel of an `h×w` image.
pub fn polar_grid(h: usize, w: usize, cfg: &PolarConfig) -> SamplingGrid {
    let mut gx = Plane::zeros(h, w);
    let mut gy = Plane::zeros(h, w);
    for i in 0..h {
        for j in 0..w {
            let (r, t) = polar_coords(i, j, cfg);
            gx.set(i, j, r);
            gy.set(i, j, t);
        }
    }
    SamplingGrid::new(gx, gy).expect("planes share a shape")
}

struct PolarMap<'a> {
    grid: &'a SamplingGrid,
    cfg: &'a PolarConfig,
    kind: KernelKind,
}

impl TapMap for PolarMap<'_> {
    fn source_dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    fn target_dims(&self) -> (usize, usize) {
        (self.cfg.h_r, self.cfg.w_psi)
    }

    #[inline]
    fn for_each_tap<F: FnMut(usize, f64)>(&self, n: usize, m: usize, mut f: F) {
        let gx = self.grid.gx().get(n, m);
        if gx == 0.0 {
            let share = 1.0 / self.cfg.w_psi as f64;
            for col in 0..self.cfg.w_psi {
                f(col, share);
            }
            return;
        }
        let gy = self.grid.gy().get(n, m);
        let (h_r, w_psi) = (self.cfg.h_r, self.cfg.w_psi);
        for tap in taps_with(self.kind, gx, gy, h_r, w_psi, self.cfg.cols()) {
            f(tap.row * w_psi + tap.col, tap.weight);
        }
    }
}

/// Unnormalized polar accumulation: values and homogeneous weights.
pub fn polar_accumulate_raw(u: &Tensor, cfg: &PolarConfig, kind: KernelKind) -> AccumulatorGrid {
    let (h, w) = u.spatial();
    let grid = polar_grid(h, w, cfg);
    let map = PolarMap {
        grid: &grid,
        cfg,
        kind,
    };
    AccumulatorGrid {
        values: engine::scatter(u, &map),
        weights: engine::scatter(&Tensor::ones(1, h, w), &map),
        normalized: false,
    }
}

/// Polar accumulation normalized by the homogeneous weights.
pub fn polar_accumulate(u: &Tensor, cfg: &PolarConfig, kind: KernelKind) -> AccumulatorGrid {
    normalize(&polar_accumulate_raw(u, cfg, kind), DEFAULT_EPSILON)
        .expect("fresh accumulation with valid epsilon")
}

/// Classical polar resampling: each polar cell reads the image at its
/// Cartesian position.
pub fn polar_sample(u: &Tensor, cfg: &PolarConfig, kind: KernelKind) -> Tensor {
    grid_sample(u, &inverse_polar_grid(cfg), kind)
}

/// Image coordinates of every polar cell center.
pub fn inverse_polar_grid(cfg: &PolarConfig) -> SamplingGrid {
    let mut gx = Plane::zeros(cfg.h_r, cfg.w_psi);
    let mut gy = Plane::zeros(cfg.h_r, cfg.w_psi);
    for r in 0..cfg.h_r {
        for psi in 0..cfg.w_psi {
            let rho = r as f64 * cfg.s_r;
            let theta = psi as f64 * cfg.s_theta - PI;
            gx.set(r, psi, cfg.center.0 + rho * theta.cos());
            gy.set(r, psi, cfg.center.1 + rho * theta.sin());
        }
    }
    SamplingGrid::new(gx, gy).expect("planes share a shape")
}

fn check_polar_shape(p: &Tensor, cfg: &PolarConfig) -> Result<()> {
    if p.spatial() != (cfg.h_r, cfg.w_psi) {
        return Err(Error::shape((cfg.h_r, cfg.w_psi), p.spatial()));
    }
    Ok(())
}

/// Reads a (processed) polar grid back into an image of `image_shape`.
pub fn polar_slice(
    p: &Tensor,
    cfg: &PolarConfig,
    kind: KernelKind,
    image_shape: (usize, usize),
) -> Result<Tensor> {
    check_polar_shape(p, cfg)?;
    let grid = polar_grid(image_shape.0, image_shape.1, cfg);
    let map = PolarMap {
        grid: &grid,
        cfg,
        kind,
    };
    Ok(engine::gather(p, &map))
}

/// Accumulate, filter in polar space, slice back.
pub fn polar_roundtrip_filter(
    u: &Tensor,
    cfg: &PolarConfig,
    kind: KernelKind,
    filter: GridFilter,
) -> Result<Tensor> {
    let acc = polar_accumulate(u, cfg, kind);
    let processed = filter.apply(&acc.values)?;
    polar_slice(&processed, cfg, kind, u.spatial())
}

/// Learnable per-pixel 2×2 mixing weights over the four polar cells that
/// bilinear slicing would read.
///
/// Stored as a `4×H×W` tensor whose channel `2a + b` holds `L[i][j][a][b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricSlicer {
    l: Tensor,
}

impl ParametricSlicer {
    pub fn new(l: Tensor) -> Result<Self> {
        if l.channels() != 4 {
            return Err(Error::shape("4 channels (2x2 per pixel)", l.channels()));
        }
        Ok(Self { l })
    }

    /// Initializes `L` to the bilinear weights of each pixel's polar
    /// coordinates, so slicing starts out identical to bilinear slicing.
    pub fn bilinear(height: usize, width: usize, cfg: &PolarConfig) -> Self {
        let grid = polar_grid(height, width, cfg);
        let mut l = Tensor::zeros(4, height, width);
        for i in 0..height {
            for j in 0..width {
                let (gx, gy) = (grid.gx().get(i, j), grid.gy().get(i, j));
                if gx == 0.0 {
                    l.set(0, i, j, 1.0);
                    continue;
                }
                let (p, q) = (gx.floor() as i64, gy.floor() as i64);
                let xs = axis_weights(KernelKind::Bilinear, gx);
                let ys = axis_weights(KernelKind::Bilinear, gy);
                for &(ri, wx) in &xs {
                    for &(cj, wy) in &ys {
                        let (a, b) = ((ri - p) as usize, (cj - q) as usize);
                        l.set(2 * a + b, i, j, wx * wy);
                    }
                }
            }
        }
        Self { l }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.l.spatial()
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        self.l.get(2 * a + b, i, j)
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.l
    }

    pub fn into_tensor(self) -> Tensor {
        self.l
    }
}

/// Gradients of a parametric slice.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricGrad {
    pub d_p: Tensor,
    /// Same `4×H×W` layout as [`ParametricSlicer::as_tensor`].
    pub d_l: Tensor,
}

/// The four polar cells a pixel reads: `rows[a]` and `cols[b]`, `None` when
/// out of range. Pole pixels read row means instead of single cells.
struct Stencil {
    pole: bool,
    rows: [Option<usize>; 2],
    cols: [Option<usize>; 2],
}

fn stencil(gx: f64, gy: f64, cfg: &PolarConfig) -> Stencil {
    let p = gx.floor() as i64;
    let q = gy.floor() as i64;
    let row = |n: i64| Boundary::Drop.resolve(n, cfg.h_r);
    let col = |m: i64| cfg.cols().resolve(m, cfg.w_psi);
    Stencil {
        pole: gx == 0.0,
        rows: [row(p), row(p + 1)],
        cols: [col(q), col(q + 1)],
    }
}

fn row_mean(p: &Tensor, c: usize, row: usize) -> f64 {
    let share = 1.0 / p.width() as f64;
    let mut acc = 0.0;
    for m in 0..p.width() {
        acc += p.get(c, row, m) * share;
    }
    acc
}

fn check_slicer(p: &Tensor, slicer: &ParametricSlicer, cfg: &PolarConfig) -> Result<()> {
    check_polar_shape(p, cfg)?;
    if slicer.dims().0 == 0 || slicer.dims().1 == 0 {
        return Err(Error::invalid("slicer must cover a non-empty image"));
    }
    Ok(())
}

/// `Ũ[i][j] = Σ_{a,b} P̃[p+a][q+b] · L[i][j][a][b]` with `p, q` the floors of
/// the pixel's polar coordinates.
pub fn parametric_slice(
    p: &Tensor,
    slicer: &ParametricSlicer,
    cfg: &PolarConfig,
) -> Result<Tensor> {
    check_slicer(p, slicer, cfg)?;
    let (h, w) = slicer.dims();
    let grid = polar_grid(h, w, cfg);
    let mut out = Tensor::zeros(p.channels(), h, w);
    for i in 0..h {
        for j in 0..w {
            let st = stencil(grid.gx().get(i, j), grid.gy().get(i, j), cfg);
            for c in 0..p.channels() {
                let mut acc = 0.0;
                for a in 0..2 {
                    let Some(n) = st.rows[a] else { continue };
                    if st.pole {
                        for b in 0..2 {
                            acc += row_mean(p, c, n) * slicer.weight(i, j, a, b);
                        }
                        continue;
                    }
                    for b in 0..2 {
                        if let Some(m) = st.cols[b] {
                            acc += p.get(c, n, m) * slicer.weight(i, j, a, b);
                        }
                    }
                }
                out.set(c, i, j, acc);
            }
        }
    }
    Ok(out)
}

pub fn parametric_slice_backward(
    d_u: &Tensor,
    p: &Tensor,
    slicer: &ParametricSlicer,
    cfg: &PolarConfig,
) -> Result<ParametricGrad> {
    check_slicer(p, slicer, cfg)?;
    let (h, w) = slicer.dims();
    if d_u.shape() != (p.channels(), h, w) {
        return Err(Error::shape((p.channels(), h, w), d_u.shape()));
    }
    let grid = polar_grid(h, w, cfg);
    let mut d_p = Tensor::zeros(p.channels(), cfg.h_r, cfg.w_psi);
    let mut d_l = Tensor::zeros(4, h, w);
    let share = 1.0 / cfg.w_psi as f64;
    for i in 0..h {
        for j in 0..w {
            let st = stencil(grid.gx().get(i, j), grid.gy().get(i, j), cfg);
            for c in 0..p.channels() {
                let g = d_u.get(c, i, j);
                for a in 0..2 {
                    let Some(n) = st.rows[a] else { continue };
                    for b in 0..2 {
                        let l = slicer.weight(i, j, a, b);
                        if st.pole {
                            d_l[(2 * a + b, i, j)] += row_mean(p, c, n) * g;
                            for m in 0..cfg.w_psi {
                                d_p[(c, n, m)] += g * l * share;
                            }
                        } else if let Some(m) = st.cols[b] {
                            d_l[(2 * a + b, i, j)] += p.get(c, n, m) * g;
                            d_p[(c, n, m)] += g * l;
                        }
                    }
                }
            }
        }
    }
    Ok(ParametricGrad { d_p, d_l })
}
