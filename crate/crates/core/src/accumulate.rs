//! Directed accumulation, slicing, grid sampling and their backward passes.
//!
//! Accumulation scatters each source cell `U[c][n][m]` into the target at the
//! coordinates `(G^x_k[n][m], G^y_k[n][m])` of every grid `k`; slicing reads a
//! target back through the same grids. Slicing is the adjoint of
//! accumulation, so each one doubles as the other's input gradient.

use rayon::prelude::*;

use crate::engine::{self, TapMap};
use crate::error::{Error, Result};
use crate::kernels::{
    axis_derivative_support, axis_weights, bilinear_derivative, taps_with, Boundary, KernelKind,
};
use crate::tensor::{mesh_grids, Plane, Tensor};

/// Default homogeneous-normalization guard.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Fractional target coordinates for every cell of an `H×W` source.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingGrid {
    gx: Plane,
    gy: Plane,
}

impl SamplingGrid {
    pub fn new(gx: Plane, gy: Plane) -> Result<Self> {
        if gx.dims() != gy.dims() {
            return Err(Error::shape(gx.dims(), gy.dims()));
        }
        Ok(Self { gx, gy })
    }

    /// Integer mesh grid: every cell maps onto itself.
    pub fn identity(height: usize, width: usize) -> Result<Self> {
        let m = mesh_grids(height, width)?;
        Ok(Self { gx: m.mx, gy: m.my })
    }

    /// Every cell maps to the same `(x, y)`.
    pub fn constant(height: usize, width: usize, x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::invalid("grid coordinates must be finite"));
        }
        Ok(Self {
            gx: Plane::filled(height, width, x),
            gy: Plane::filled(height, width, y),
        })
    }

    pub fn gx(&self) -> &Plane {
        &self.gx
    }

    pub fn gy(&self) -> &Plane {
        &self.gy
    }

    pub fn dims(&self) -> (usize, usize) {
        self.gx.dims()
    }

    pub fn into_planes(self) -> (Plane, Plane) {
        (self.gx, self.gy)
    }
}

/// An ordered, non-empty list of grids sharing one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSet {
    grids: Vec<SamplingGrid>,
}

impl GridSet {
    pub fn new(grids: Vec<SamplingGrid>) -> Result<Self> {
        let first = grids
            .first()
            .ok_or_else(|| Error::invalid("grid set must hold at least one grid"))?;
        let dims = first.dims();
        if let Some(bad) = grids.iter().find(|g| g.dims() != dims) {
            return Err(Error::shape(dims, bad.dims()));
        }
        Ok(Self { grids })
    }

    pub fn single(grid: SamplingGrid) -> Self {
        Self { grids: vec![grid] }
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grids[0].dims()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SamplingGrid> {
        self.grids.iter()
    }

    pub fn grids(&self) -> &[SamplingGrid] {
        &self.grids
    }
}

impl std::ops::Index<usize> for GridSet {
    type Output = SamplingGrid;

    fn index(&self, k: usize) -> &SamplingGrid {
        &self.grids[k]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TargetShape {
    pub height: usize,
    pub width: usize,
}

impl TargetShape {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "target shape must be positive, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn dims(self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Accumulated values with their homogeneous weight plane.
#[derive(Clone, Debug, PartialEq)]
pub struct AccumulatorGrid {
    pub values: Tensor,
    pub weights: Tensor,
    pub normalized: bool,
}

/// Gradient of a scalar loss with respect to one sampling grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridGrad {
    pub gx: Plane,
    pub gy: Plane,
}

pub(crate) struct GridMap<'a> {
    pub grids: &'a GridSet,
    pub kind: KernelKind,
    pub target: (usize, usize),
    pub cols: Boundary,
}

impl TapMap for GridMap<'_> {
    fn source_dims(&self) -> (usize, usize) {
        self.grids.dims()
    }

    fn target_dims(&self) -> (usize, usize) {
        self.target
    }

    #[inline]
    fn for_each_tap<F: FnMut(usize, f64)>(&self, n: usize, m: usize, mut f: F) {
        let (th, tw) = self.target;
        for g in &self.grids.grids {
            let (gx, gy) = (g.gx.get(n, m), g.gy.get(n, m));
            for tap in taps_with(self.kind, gx, gy, th, tw, self.cols) {
                f(tap.row * tw + tap.col, tap.weight);
            }
        }
    }
}

fn check_source(u_dims: (usize, usize), grids: &GridSet) -> Result<()> {
    if u_dims != grids.dims() {
        return Err(Error::shape(grids.dims(), u_dims));
    }
    Ok(())
}

pub fn accumulate(
    u: &Tensor,
    grids: &GridSet,
    kind: KernelKind,
    shape: TargetShape,
) -> Result<Tensor> {
    check_source(u.spatial(), grids)?;
    let map = GridMap {
        grids,
        kind,
        target: shape.dims(),
        cols: Boundary::Drop,
    };
    Ok(engine::scatter(u, &map))
}

/// Homogeneous weights: the accumulation of an all-ones source.
pub fn accumulate_weights(
    grids: &GridSet,
    kind: KernelKind,
    source_shape: (usize, usize),
    shape: TargetShape,
) -> Result<Tensor> {
    check_source(source_shape, grids)?;
    let ones = Tensor::ones(1, source_shape.0, source_shape.1);
    accumulate(&ones, grids, kind, shape)
}

/// Values and weights together, not yet normalized.
pub fn accumulate_grid(
    u: &Tensor,
    grids: &GridSet,
    kind: KernelKind,
    shape: TargetShape,
) -> Result<AccumulatorGrid> {
    Ok(AccumulatorGrid {
        values: accumulate(u, grids, kind, shape)?,
        weights: accumulate_weights(grids, kind, u.spatial(), shape)?,
        normalized: false,
    })
}

/// Divides values by `weights + epsilon`.
pub fn normalize(acc: &AccumulatorGrid, epsilon: f64) -> Result<AccumulatorGrid> {
    if acc.normalized {
        return Err(Error::invalid("accumulator grid is already normalized"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let (c, h, w) = acc.values.shape();
    if acc.weights.shape() != (1, h, w) {
        return Err(Error::shape((1, h, w), acc.weights.shape()));
    }
    let weights = acc.weights.as_slice();
    let values = Tensor::from_fn(c, h, w, |ch, i, j| {
        acc.values.get(ch, i, j) / (weights[i * w + j] + epsilon)
    });
    Ok(AccumulatorGrid {
        values,
        weights: acc.weights.clone(),
        normalized: true,
    })
}

/// Reads `v` back into an `H×W` image through every grid and sums the reads.
pub fn slice(
    v: &Tensor,
    grids: &GridSet,
    kind: KernelKind,
    source_shape: (usize, usize),
) -> Result<Tensor> {
    check_source(source_shape, grids)?;
    let map = GridMap {
        grids,
        kind,
        target: v.spatial(),
        cols: Boundary::Drop,
    };
    Ok(engine::gather(v, &map))
}

/// Classical grid sampling: each output cell reads `u` at its grid coordinate.
pub fn grid_sample(u: &Tensor, grid: &SamplingGrid, kind: KernelKind) -> Tensor {
    let set = GridSet::single(grid.clone());
    let map = GridMap {
        grids: &set,
        kind,
        target: u.spatial(),
        cols: Boundary::Drop,
    };
    engine::gather(u, &map)
}

/// ∂L/∂U of an accumulation, given ∂L/∂V. Identical to [`slice`].
pub fn accumulate_backward_input(
    d_v: &Tensor,
    grids: &GridSet,
    kind: KernelKind,
    source_shape: (usize, usize),
) -> Result<Tensor> {
    slice(d_v, grids, kind, source_shape)
}

/// ∂L/∂Ṽ of a slicing, given ∂L/∂Ũ. Identical to [`accumulate`].
pub fn slice_backward(
    d_u: &Tensor,
    grids: &GridSet,
    kind: KernelKind,
    shape: TargetShape,
) -> Result<Tensor> {
    accumulate(d_u, grids, kind, shape)
}

/// ∂L/∂G for every grid of an accumulation, given ∂L/∂V.
///
/// Only the bilinear kernel is differentiable in its coordinates.
pub fn accumulate_backward_grid(
    d_v: &Tensor,
    u: &Tensor,
    grids: &GridSet,
    kind: KernelKind,
) -> Result<Vec<GridGrad>> {
    if kind != KernelKind::Bilinear {
        return Err(Error::UnsupportedKernel(kind.name()));
    }
    check_source(u.spatial(), grids)?;
    if d_v.channels() != u.channels() {
        return Err(Error::shape(u.channels(), d_v.channels()));
    }
    let (h, w) = u.spatial();
    let (th, tw) = d_v.spatial();
    let channels = u.channels();

    let grads = grids
        .iter()
        .map(|g| {
            let mut dx = vec![0.0; h * w];
            let mut dy = vec![0.0; h * w];
            dx.par_chunks_mut(w.max(1))
                .zip(dy.par_chunks_mut(w.max(1)))
                .enumerate()
                .for_each(|(n, (rx, ry))| {
                    for m in 0..w {
                        let (gx, gy) = (g.gx.get(n, m), g.gy.get(n, m));
                        let (mut sx, mut sy) = (0.0, 0.0);
                        for c in 0..channels {
                            let val = u.get(c, n, m);
                            if val == 0.0 {
                                continue;
                            }
                            // d/dgx: derivative along rows times weight along columns
                            let mut ax = 0.0;
                            for i in axis_derivative_support(gx) {
                                if i < 0 || i as usize >= th {
                                    continue;
                                }
                                let dk = bilinear_derivative(gx, i);
                                if dk == 0.0 {
                                    continue;
                                }
                                for (j, wy) in axis_weights(KernelKind::Bilinear, gy) {
                                    if j >= 0 && (j as usize) < tw {
                                        ax += dk * wy * d_v.get(c, i as usize, j as usize);
                                    }
                                }
                            }
                            let mut ay = 0.0;
                            for j in axis_derivative_support(gy) {
                                if j < 0 || j as usize >= tw {
                                    continue;
                                }
                                let dk = bilinear_derivative(gy, j);
                                if dk == 0.0 {
                                    continue;
                                }
                                for (i, wx) in axis_weights(KernelKind::Bilinear, gx) {
                                    if i >= 0 && (i as usize) < th {
                                        ay += wx * dk * d_v.get(c, i as usize, j as usize);
                                    }
                                }
                            }
                            sx += val * ax;
                            sy += val * ay;
                        }
                        rx[m] = sx;
                        ry[m] = sy;
                    }
                });
            GridGrad {
                gx: Plane::new(h, w, dx).expect("finite gradient"),
                gy: Plane::new(h, w, dy).expect("finite gradient"),
            }
        })
        .collect();
    Ok(grads)
}
