//! Separable smoothing filters used as grid-processing functions.
//!
//! Borders are zero-padded and every output is divided by the total weight
//! of the taps that landed in bounds, so constants pass through unchanged.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Processing step applied to an accumulator grid between creation and slicing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridFilter {
    None,
    Box(usize),
    Gaussian(f64),
}

impl GridFilter {
    pub fn apply(&self, t: &Tensor) -> Result<Tensor> {
        match *self {
            GridFilter::None => Ok(t.clone()),
            GridFilter::Box(r) => Ok(box_filter(t, r)),
            GridFilter::Gaussian(sigma) => gaussian_filter(t, sigma),
        }
    }
}

impl std::fmt::Display for GridFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridFilter::None => f.write_str("none"),
            GridFilter::Box(r) => write!(f, "box:{r}"),
            GridFilter::Gaussian(s) => write!(f, "gaussian:{s}"),
        }
    }
}

impl std::str::FromStr for GridFilter {
    type Err = Error;

    /// Parses `none`, `box:<radius>` or `gaussian:<sigma>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        match (name, arg) {
            ("none", None) => Ok(GridFilter::None),
            ("box", Some(a)) => a
                .parse()
                .map(GridFilter::Box)
                .map_err(|_| Error::invalid(format!("bad box radius {a:?}"))),
            ("gaussian", Some(a)) => {
                let sigma: f64 = a
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad gaussian sigma {a:?}")))?;
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::invalid(format!(
                        "gaussian sigma must be > 0, got {sigma}"
                    )));
                }
                Ok(GridFilter::Gaussian(sigma))
            }
            _ => Err(Error::invalid(format!(
                "unknown filter {s:?}; expected none, box:<r> or gaussian:<sigma>"
            ))),
        }
    }
}

/// Mean over the `(2r+1)²` window, renormalized by the in-bounds tap count.
pub fn box_filter(t: &Tensor, radius: usize) -> Tensor {
    if radius == 0 {
        return t.clone();
    }
    let taps = vec![1.0; 2 * radius + 1];
    separable(t, &taps)
}

/// Gaussian blur truncated at `ceil(3σ)` with a unit-sum kernel.
pub fn gaussian_filter(t: &Tensor, sigma: f64) -> Result<Tensor> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(separable(t, &gaussian_kernel(sigma)))
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-half..=half)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

fn separable(t: &Tensor, kernel: &[f64]) -> Tensor {
    let (c, h, w) = t.shape();
    let half = (kernel.len() / 2) as isize;
    let mut tmp = Tensor::zeros(c, h, w);
    let mut out = Tensor::zeros(c, h, w);

    // rows
    for ch in 0..c {
        let src = t.channel(ch);
        let dst = tmp.channel_mut(ch);
        for i in 0..h {
            for j in 0..w {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (k, &wk) in kernel.iter().enumerate() {
                    let jj = j as isize + k as isize - half;
                    if jj >= 0 && (jj as usize) < w {
                        acc += wk * src[i * w + jj as usize];
                        norm += wk;
                    }
                }
                dst[i * w + j] = acc / norm;
            }
        }
    }
    // columns
    for ch in 0..c {
        let src = tmp.channel(ch);
        let dst = out.channel_mut(ch);
        for i in 0..h {
            for j in 0..w {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (k, &wk) in kernel.iter().enumerate() {
                    let ii = i as isize + k as isize - half;
                    if ii >= 0 && (ii as usize) < h {
                        acc += wk * src[ii as usize * w + j];
                        norm += wk;
                    }
                }
                dst[i * w + j] = acc / norm;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn box_radius_zero_is_identity() {
        let t = random(2, 5, 4, 1);
        assert_eq!(box_filter(&t, 0), t);
    }

    #[test]
    fn constants_are_preserved() {
        let t = Tensor::filled(1, 7, 6, 5.0);
        for r in 1..4 {
            let out = box_filter(&t, r);
            assert!(out.as_slice().iter().all(|&v| (v - 5.0).abs() < 1e-14));
        }
        let out = gaussian_filter(&t, 1.3).unwrap();
        assert!(out.as_slice().iter().all(|&v| (v - 5.0).abs() < 1e-14));
    }

    #[test]
    fn box_center_spike_hand_enumerated() {
        let t = Tensor::from_rows(&[[0.0, 0.0, 0.0], [0.0, 9.0, 0.0], [0.0, 0.0, 0.0]]);
        let out = box_filter(&t, 1);
        // center window holds 9 taps, corner windows hold 4, edge windows 6
        assert!((out[(0, 1, 1)] - 1.0).abs() < 1e-15);
        for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert!((out[(0, i, j)] - 2.25).abs() < 1e-15);
        }
        assert!((out[(0, 0, 1)] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_impulse_matches_outer_product() {
        let n = 21;
        let mut t = Tensor::zeros(1, n, n);
        t.set(0, 10, 10, 1.0);
        let out = gaussian_filter(&t, 1.0).unwrap();
        // kernel half-width 3, weight at offset 0 from the formula
        let w: Vec<f64> = (-3..=3)
            .map(|x: i32| (-(x * x) as f64 / 2.0).exp())
            .collect();
        let center = 1.0 / w.iter().sum::<f64>();
        assert!((out[(0, 10, 10)] - center * center).abs() < 1e-15);
        assert!((out.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_sigma_is_near_identity() {
        let t = Tensor::from_fn(1, 16, 16, |_, i, j| {
            (i as f64 * 0.3).sin() + (j as f64 * 0.2).cos()
        });
        let out = gaussian_filter(&t, 0.1).unwrap();
        assert!(out.max_abs_diff(&t).unwrap() < 1e-6);
    }

    #[test]
    fn gaussian_rejects_nonpositive_sigma() {
        let t = Tensor::zeros(1, 2, 2);
        assert!(gaussian_filter(&t, 0.0).is_err());
        assert!(gaussian_filter(&t, -1.0).is_err());
    }

    #[test]
    fn filters_are_linear() {
        let (u, v) = (random(2, 9, 11, 2), random(2, 9, 11, 3));
        let (a, b) = (0.7, -1.9);
        let mix = u.zip_map(&v, |x, y| a * x + b * y).unwrap();
        for f in [GridFilter::Box(2), GridFilter::Gaussian(1.5)] {
            let lhs = f.apply(&mix).unwrap();
            let rhs = f
                .apply(&u)
                .unwrap()
                .zip_map(&f.apply(&v).unwrap(), |x, y| a * x + b * y)
                .unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
        }
    }

    #[test]
    fn parses_filter_specs() {
        assert_eq!("none".parse::<GridFilter>().unwrap(), GridFilter::None);
        assert_eq!("box:2".parse::<GridFilter>().unwrap(), GridFilter::Box(2));
        assert_eq!(
            "gaussian:1.5".parse::<GridFilter>().unwrap(),
            GridFilter::Gaussian(1.5)
        );
        assert!("gaussian:0".parse::<GridFilter>().is_err());
        assert!("median:3".parse::<GridFilter>().is_err());
    }

    #[test]
    fn display_parses_back() {
        for f in [
            GridFilter::None,
            GridFilter::Box(3),
            GridFilter::Gaussian(0.75),
        ] {
            assert_eq!(f.to_string().parse::<GridFilter>().unwrap(), f);
        }
    }
}
