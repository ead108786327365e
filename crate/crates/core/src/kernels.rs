//! Sampling kernels shared by accumulation, slicing and grid sampling.

use arrayvec::ArrayVec;

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelKind {
    /// Rounded Kronecker delta: weight 1 at `floor(g + 0.5)`.
    Nearest,
    /// Tent kernel `max(0, 1 - |g - i|)`.
    Bilinear,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Nearest => "nearest",
            KernelKind::Bilinear => "bilinear",
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "nearest" => Ok(KernelKind::Nearest),
            "bilinear" => Ok(KernelKind::Bilinear),
            other => Err(Error::invalid(format!(
                "unknown kernel {other:?}; expected nearest or bilinear"
            ))),
        }
    }
}

/// One nonzero term of the separable kernel product, already bounds-resolved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

#[inline]
pub fn kernel_weight(kind: KernelKind, g: f64, i: i64) -> f64 {
    match kind {
        KernelKind::Nearest => {
            if (g + 0.5).floor() == i as f64 {
                1.0
            } else {
                0.0
            }
        }
        KernelKind::Bilinear => (1.0 - (g - i as f64).abs()).max(0.0),
    }
}

/// d/dg of the bilinear weight. At the kinks `|g - i| ∈ {0, 1}` this is the
/// subgradient `-sign(g - i)` with `sign(0) = 0`.
#[inline]
pub fn bilinear_derivative(g: f64, i: i64) -> f64 {
    let d = g - i as f64;
    if d.abs() > 1.0 {
        0.0
    } else if d > 0.0 {
        -1.0
    } else if d < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Integer positions with positive 1-D weight, before bounds handling.
#[inline]
pub(crate) fn axis_weights(kind: KernelKind, g: f64) -> ArrayVec<(i64, f64), 2> {
    let mut out = ArrayVec::new();
    match kind {
        KernelKind::Nearest => out.push(((g + 0.5).floor() as i64, 1.0)),
        KernelKind::Bilinear => {
            let i0 = g.floor() as i64;
            for i in [i0, i0 + 1] {
                let w = kernel_weight(kind, g, i);
                if w > 0.0 {
                    out.push((i, w));
                }
            }
        }
    }
    out
}

/// Positions whose bilinear derivative may be nonzero, kinks included.
#[inline]
pub(crate) fn axis_derivative_support(g: f64) -> ArrayVec<i64, 3> {
    let lo = (g - 1.0).ceil() as i64;
    let hi = (g + 1.0).floor() as i64;
    (lo..=hi).collect()
}

/// How an axis treats indices outside `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Boundary {
    Drop,
    Wrap,
}

impl Boundary {
    #[inline]
    pub(crate) fn resolve(self, i: i64, n: usize) -> Option<usize> {
        match self {
            Boundary::Drop => (i >= 0 && (i as usize) < n).then_some(i as usize),
            Boundary::Wrap => Some(i.rem_euclid(n as i64) as usize),
        }
    }
}

#[inline]
pub(crate) fn taps_with(
    kind: KernelKind,
    gx: f64,
    gy: f64,
    target_h: usize,
    target_w: usize,
    cols: Boundary,
) -> ArrayVec<Tap, 4> {
    let mut out = ArrayVec::new();
    let ys = axis_weights(kind, gy);
    for (i, wx) in axis_weights(kind, gx) {
        let Some(row) = Boundary::Drop.resolve(i, target_h) else {
            continue;
        };
        for &(j, wy) in &ys {
            if let Some(col) = cols.resolve(j, target_w) {
                out.push(Tap {
                    row,
                    col,
                    weight: wx * wy,
                });
            }
        }
    }
    out
}

/// Nonzero in-bounds terms of `K(gx, i)·K(gy, j)` over a `target_h×target_w`
/// lattice. Out-of-bounds terms are dropped, not redistributed.
pub fn taps(kind: KernelKind, gx: f64, gy: f64, target_h: usize, target_w: usize) -> Vec<Tap> {
    taps_with(kind, gx, gy, target_h, target_w, Boundary::Drop).to_vec()
}
