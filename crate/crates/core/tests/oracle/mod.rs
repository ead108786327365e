//! Direct transcriptions of the operator formulas, written without the
//! library's kernel or tap code. Quadratic or worse; only for small inputs.

#![allow(dead_code)]

use std::f64::consts::PI;

use dagrid::{KernelKind, PolarConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub type RawGrid = (Vec<Vec<f64>>, Vec<Vec<f64>>);

pub fn kernel(kind: KernelKind, g: f64, i: usize) -> f64 {
    let i = i as f64;
    match kind {
        KernelKind::Nearest => {
            if (g + 0.5).floor() == i {
                1.0
            } else {
                0.0
            }
        }
        KernelKind::Bilinear => f64::max(0.0, 1.0 - (g - i).abs()),
    }
}

/// `V[c][i][j] = Σ_k Σ_n Σ_m U[c][n][m]·K(Gx_k[n][m], i)·K(Gy_k[n][m], j)`.
pub fn accumulate(u: &Tensor, grids: &[RawGrid], kind: KernelKind, th: usize, tw: usize) -> Tensor {
    let (c, h, w) = u.shape();
    let mut out = Tensor::zeros(c, th, tw);
    for ch in 0..c {
        for i in 0..th {
            for j in 0..tw {
                let mut acc = 0.0;
                for (gx, gy) in grids {
                    for n in 0..h {
                        for m in 0..w {
                            acc += u.get(ch, n, m)
                                * kernel(kind, gx[n][m], i)
                                * kernel(kind, gy[n][m], j);
                        }
                    }
                }
                out.set(ch, i, j, acc);
            }
        }
    }
    out
}

/// `Ũ[c][i][j] = Σ_k Σ_n Σ_m Ṽ[c][n][m]·K(Gx_k[i][j], n)·K(Gy_k[i][j], m)`.
pub fn slice(v: &Tensor, grids: &[RawGrid], kind: KernelKind, h: usize, w: usize) -> Tensor {
    let (c, th, tw) = v.shape();
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (gx, gy) in grids {
                    for n in 0..th {
                        for m in 0..tw {
                            acc += v.get(ch, n, m)
                                * kernel(kind, gx[i][j], n)
                                * kernel(kind, gy[i][j], m);
                        }
                    }
                }
                out.set(ch, i, j, acc);
            }
        }
    }
    out
}

pub fn grid_sample(u: &Tensor, grid: &RawGrid, kind: KernelKind) -> Tensor {
    let (h, w) = (grid.0.len(), grid.0[0].len());
    slice(u, std::slice::from_ref(grid), kind, h, w)
}

/// Polar resampling evaluated cell by cell from the polar-to-Cartesian map.
pub fn polar_sample(u: &Tensor, cfg: &PolarConfig, kind: KernelKind) -> Tensor {
    let (c, h, w) = u.shape();
    let mut out = Tensor::zeros(c, cfg.h_r, cfg.w_psi);
    for r in 0..cfg.h_r {
        for psi in 0..cfg.w_psi {
            let rho = r as f64 * cfg.s_r;
            let theta = psi as f64 * cfg.s_theta - PI;
            let x = cfg.center.0 + rho * theta.cos();
            let y = cfg.center.1 + rho * theta.sin();
            for ch in 0..c {
                let mut acc = 0.0;
                for n in 0..h {
                    for m in 0..w {
                        acc += u.get(ch, n, m) * kernel(kind, x, n) * kernel(kind, y, m);
                    }
                }
                out.set(ch, r, psi, acc);
            }
        }
    }
    out
}

pub fn polar_coords(i: usize, j: usize, cfg: &PolarConfig) -> (f64, f64) {
    let di = i as f64 - cfg.center.0;
    let dj = j as f64 - cfg.center.1;
    (
        (di * di + dj * dj).sqrt() / cfg.s_r,
        (dj.atan2(di) + PI) / cfg.s_theta,
    )
}

/// `Ũ[i][j] = Σ_{n=p}^{p+1} Σ_{m=q}^{q+1} P̃[n][m]·L[i][j][n−p][m−q]`, angular
/// index modulo `W_ψ` under wrap, radial overflow reading zero. A pixel on the
/// center reads the angular mean of each radial row.
pub fn parametric_slice(p: &Tensor, l: &Tensor, cfg: &PolarConfig) -> Tensor {
    let (c, _, _) = p.shape();
    let (_, h, w) = l.shape();
    let mut out = Tensor::zeros(c, h, w);
    for i in 0..h {
        for j in 0..w {
            let (gx, gy) = polar_coords(i, j, cfg);
            let (pp, qq) = (gx.floor() as i64, gy.floor() as i64);
            for ch in 0..c {
                let mut acc = 0.0;
                for n in pp..=pp + 1 {
                    if n < 0 || n as usize >= cfg.h_r {
                        continue;
                    }
                    for m in qq..=qq + 1 {
                        let weight = l.get((2 * (n - pp) + (m - qq)) as usize, i, j);
                        let cell = if gx == 0.0 {
                            (0..cfg.w_psi)
                                .map(|mm| p.get(ch, n as usize, mm))
                                .sum::<f64>()
                                / cfg.w_psi as f64
                        } else {
                            let m = if cfg.angular_wrap {
                                m.rem_euclid(cfg.w_psi as i64)
                            } else if m < 0 || m as usize >= cfg.w_psi {
                                continue;
                            } else {
                                m
                            };
                            p.get(ch, n as usize, m as usize)
                        };
                        acc += cell * weight;
                    }
                }
                out.set(ch, i, j, acc);
            }
        }
    }
    out
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha20Rng, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0))
}

/// Random fractional grid with coordinates in `[lo, hi)` on both axes.
pub fn random_raw_grid(
    rng: &mut ChaCha20Rng,
    h: usize,
    w: usize,
    lo: (f64, f64),
    hi: (f64, f64),
) -> RawGrid {
    let gx = (0..h)
        .map(|_| (0..w).map(|_| rng.random_range(lo.0..hi.0)).collect())
        .collect();
    let gy = (0..h)
        .map(|_| (0..w).map(|_| rng.random_range(lo.1..hi.1)).collect())
        .collect();
    (gx, gy)
}

/// Grid whose coordinates stay at least `margin` away from any integer.
pub fn kink_free_raw_grid(
    rng: &mut ChaCha20Rng,
    h: usize,
    w: usize,
    th: usize,
    tw: usize,
    margin: f64,
) -> RawGrid {
    let mut coord = |n: usize| {
        let base = rng.random_range(-1..n as i64) as f64;
        base + rng.random_range(margin..1.0 - margin)
    };
    let gx = (0..h)
        .map(|_| (0..w).map(|_| coord(th)).collect())
        .collect();
    let gy = (0..h)
        .map(|_| (0..w).map(|_| coord(tw)).collect())
        .collect();
    (gx, gy)
}

pub fn to_grid(raw: &RawGrid) -> dagrid::SamplingGrid {
    let h = raw.0.len();
    let w = raw.0[0].len();
    let flat = |v: &Vec<Vec<f64>>| v.iter().flatten().copied().collect::<Vec<_>>();
    dagrid::SamplingGrid::new(
        dagrid::Plane::new(h, w, flat(&raw.0)).unwrap(),
        dagrid::Plane::new(h, w, flat(&raw.1)).unwrap(),
    )
    .unwrap()
}

pub fn to_set(raws: &[RawGrid]) -> dagrid::GridSet {
    dagrid::GridSet::new(raws.iter().map(to_grid).collect()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// `Σ a·b` with Neumaier compensation, for finite-difference losses.
pub fn dot_compensated(a: &Tensor, b: &Tensor) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        let term = x * y;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
