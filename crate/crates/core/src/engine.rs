//! Scatter/gather driver shared by every accumulator.
//!
//! A [`TapMap`] lists, for each image-space cell, the weighted target cells it
//! touches. Scatter pushes image values along those taps; gather pulls target
//! values back along the same taps, so the two are exact adjoints.
//!
//! Scatter splits source rows into a fixed number of chunks that depends only
//! on the source height. Each chunk fills a private buffer and the buffers are
//! summed in chunk order, so results do not depend on the rayon pool size.

use rayon::prelude::*;

use crate::tensor::Tensor;

const MAX_CHUNKS: usize = 16;

pub(crate) trait TapMap: Sync {
    fn source_dims(&self) -> (usize, usize);
    fn target_dims(&self) -> (usize, usize);
    /// Calls `f(row * target_width + col, weight)` for each tap of image cell `(n, m)`.
    fn for_each_tap<F: FnMut(usize, f64)>(&self, n: usize, m: usize, f: F);
}

fn row_chunks(height: usize) -> Vec<std::ops::Range<usize>> {
    if height == 0 {
        return Vec::new();
    }
    let chunks = height.min(MAX_CHUNKS);
    let per = height.div_ceil(chunks);
    (0..height)
        .step_by(per)
        .map(|start| start..(start + per).min(height))
        .collect()
}

pub(crate) fn scatter<M: TapMap>(src: &Tensor, map: &M) -> Tensor {
    let (c, h, w) = src.shape();
    debug_assert_eq!((h, w), map.source_dims());
    let (th, tw) = map.target_dims();
    let plane = th * tw;

    let partials: Vec<Vec<f64>> = row_chunks(h)
        .into_par_iter()
        .map(|rows| {
            let mut buf = vec![0.0; c * plane];
            for n in rows {
                for m in 0..w {
                    map.for_each_tap(n, m, |t, weight| {
                        for ch in 0..c {
                            buf[ch * plane + t] += src.get(ch, n, m) * weight;
                        }
                    });
                }
            }
            buf
        })
        .collect();

    let mut out = Tensor::zeros(c, th, tw);
    if tw == 0 {
        return out;
    }
    out.as_mut_slice()
        .par_chunks_mut(tw)
        .enumerate()
        .for_each(|(r, row)| {
            let base = r * tw;
            for part in &partials {
                for (o, p) in row.iter_mut().zip(&part[base..base + tw]) {
                    *o += *p;
                }
            }
        });
    out
}

pub(crate) fn gather<M: TapMap>(v: &Tensor, map: &M) -> Tensor {
    let c = v.channels();
    debug_assert_eq!(v.spatial(), map.target_dims());
    let (h, w) = map.source_dims();
    let (th, tw) = map.target_dims();
    let plane = th * tw;

    let mut out = Tensor::zeros(c, h, w);
    if w == 0 {
        return out;
    }
    let values = v.as_slice();
    out.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(r, row)| {
            let (ch, n) = (r / h, r % h);
            let src = &values[ch * plane..(ch + 1) * plane];
            for (m, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                map.for_each_tap(n, m, |t, weight| acc += src[t] * weight);
                *o = acc;
            }
        });
    out
}
