//! Seeded random instances for the property suites and benchmarks.

use dagrid::{GridSet, Plane, Result, SamplingGrid, Tensor, DEFAULT_EPSILON};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-1, 1)`.
pub fn tensor(rng: &mut ChaCha20Rng, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0))
}

/// Coordinates spread over the target plus a margin of 1.5 cells on each
/// side, so some taps fall out of bounds.
pub fn grid(
    rng: &mut ChaCha20Rng,
    h: usize,
    w: usize,
    th: usize,
    tw: usize,
) -> Result<SamplingGrid> {
    let gx = Plane::from_fn(h, w, |_, _| rng.random_range(-1.5..th as f64 + 0.5));
    let gy = Plane::from_fn(h, w, |_, _| rng.random_range(-1.5..tw as f64 + 0.5));
    SamplingGrid::new(gx, gy)
}

pub fn grids(
    rng: &mut ChaCha20Rng,
    n: usize,
    h: usize,
    w: usize,
    th: usize,
    tw: usize,
) -> Result<GridSet> {
    GridSet::new(
        (0..n)
            .map(|_| grid(rng, h, w, th, tw))
            .collect::<Result<_>>()?,
    )
}

/// Coordinates at least `margin` away from every integer, where the bilinear
/// kernel has its kinks.
pub fn kink_free_grid(
    rng: &mut ChaCha20Rng,
    h: usize,
    w: usize,
    th: usize,
    tw: usize,
    margin: f64,
) -> Result<SamplingGrid> {
    let mut coord = |hi: usize| loop {
        let g: f64 = rng.random_range(-1.0..hi as f64);
        if (g - g.round()).abs() >= margin {
            break g;
        }
    };
    let gx = Plane::from_fn(h, w, |_, _| coord(th));
    let gy = Plane::from_fn(h, w, |_, _| coord(tw));
    SamplingGrid::new(gx, gy)
}

/// Every coordinate inside `[0, th − 1] × [0, tw − 1]`, so bilinear splats
/// lose no mass.
pub fn in_bounds_grid(
    rng: &mut ChaCha20Rng,
    h: usize,
    w: usize,
    th: usize,
    tw: usize,
) -> Result<SamplingGrid> {
    let gx = Plane::from_fn(h, w, |_, _| rng.random_range(0.0..=(th - 1) as f64));
    let gy = Plane::from_fn(h, w, |_, _| rng.random_range(0.0..=(tw - 1) as f64));
    SamplingGrid::new(gx, gy)
}

/// Gradient components whose rays `k·Û`, `k = 1..=n`, keep `margin` away
/// from integer offsets. Magnitudes lie in `[0.2, 2)`.
pub fn kink_free_gradients(
    rng: &mut ChaCha20Rng,
    h: usize,
    w: usize,
    n: usize,
    margin: f64,
) -> (Plane, Plane) {
    let mut ux = Plane::zeros(h, w);
    let mut uy = Plane::zeros(h, w);
    for i in 0..h {
        for j in 0..w {
            let (x, y) = loop {
                let s: f64 = rng.random_range(0.2..2.0);
                let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let (x, y) = (s * theta.cos(), s * theta.sin());
                let clear = (1..=n).all(|k| {
                    [x, y].iter().all(|c| {
                        let p = k as f64 * c / (s + DEFAULT_EPSILON);
                        (p - p.round()).abs() >= margin
                    })
                });
                if clear {
                    break (x, y);
                }
            };
            ux.set(i, j, x);
            uy.set(i, j, y);
        }
    }
    (ux, uy)
}
