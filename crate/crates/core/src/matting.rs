//! Sparse matting Laplacian over local color-line structure.
//!
//! For every fully interior `window` x `window` patch w with mean color mu_w
//! and covariance Sigma_w, pixel pairs (i, j) in w contribute
//!
//! ```text
//! delta_ij - (1/|w|) * (1 + (I_i - mu_w)^T (Sigma_w + (eps/|w|) Id)^-1 (I_j - mu_w))
//! ```
//!
//! summed over all windows containing both pixels. The result is symmetric,
//! annihilates constant vectors, and is positive semidefinite; the quadratic
//! form t^T L t penalizes transmissions that cut across local color lines.

use std::collections::HashMap;

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::image::ImageRGB;
use crate::priors::solve3;

/// Largest pixel count accepted for sparse assembly.
pub const MAX_PIXELS: usize = 64 * 64;

#[derive(Debug, Clone)]
pub struct MattingLaplacian {
    height: usize,
    width: usize,
    window: usize,
    epsilon: f64,
    /// Sorted (row, col, value) triplets covering all nonzero entries.
    entries: Vec<(u32, u32, f64)>,
}

impl MattingLaplacian {
    pub fn n(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n());
        let mut out = vec![0.0; x.len()];
        for &(i, j, v) in &self.entries {
            out[i as usize] += v * x[j as usize];
        }
        out
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n()];
        for &(i, _, v) in &self.entries {
            sums[i as usize] += v;
        }
        sums
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        let mut out = Array2::zeros((n, n));
        for &(i, j, v) in &self.entries {
            out[(i as usize, j as usize)] += v;
        }
        out
    }
}

/// Assembles the matting Laplacian of `img`. Only images up to
/// [`MAX_PIXELS`] pixels are accepted; larger inputs are a resource error.
pub fn build_matting_laplacian(
    img: &ImageRGB,
    window: usize,
    epsilon: f64,
) -> Result<MattingLaplacian> {
    if window % 2 == 0 || window == 0 {
        return Err(CoreError::Parameter(format!("window {window} must be odd")));
    }
    if epsilon <= 0.0 {
        return Err(CoreError::Parameter("epsilon must be > 0".into()));
    }
    let (h, w) = (img.height(), img.width());
    if h * w > MAX_PIXELS {
        return Err(CoreError::Resource(format!(
            "matting laplacian limited to {MAX_PIXELS} pixels, got {}",
            h * w
        )));
    }
    if h < window || w < window {
        return Err(CoreError::Dimension(format!(
            "image {h}x{w} smaller than window {window}"
        )));
    }

    let radius = window / 2;
    let wsize = window * window;
    let inv_wsize = 1.0 / wsize as f64;
    let data = img.data();

    let mut acc: HashMap<(u32, u32), f64> = HashMap::new();

    let mut members = Vec::with_capacity(wsize);
    for cr in radius..h - radius {
        for cc in radius..w - radius {
            members.clear();
            let mut mu = [0.0f64; 3];
            for rr in cr - radius..=cr + radius {
                for ccc in cc - radius..=cc + radius {
                    let px = [data[(rr, ccc, 0)], data[(rr, ccc, 1)], data[(rr, ccc, 2)]];
                    for k in 0..3 {
                        mu[k] += px[k];
                    }
                    members.push((rr * w + ccc, px));
                }
            }
            for m in mu.iter_mut() {
                *m *= inv_wsize;
            }
            let mut sigma = [[0.0f64; 3]; 3];
            for (_, px) in &members {
                for i in 0..3 {
                    for j in 0..3 {
                        sigma[i][j] += (px[i] - mu[i]) * (px[j] - mu[j]);
                    }
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    sigma[i][j] *= inv_wsize;
                }
                sigma[i][i] += epsilon * inv_wsize;
            }
            // Rows of (Sigma + eps/|w| I)^-1 applied to each member deviation.
            let solved: Vec<[f64; 3]> = members
                .iter()
                .map(|(_, px)| {
                    let d = [px[0] - mu[0], px[1] - mu[1], px[2] - mu[2]];
                    solve3(&sigma, &d)
                })
                .collect();
            for (ai, (idx_i, px_i)) in members.iter().enumerate() {
                let di = [px_i[0] - mu[0], px_i[1] - mu[1], px_i[2] - mu[2]];
                for (aj, (idx_j, _)) in members.iter().enumerate() {
                    let dot = di[0] * solved[aj][0] + di[1] * solved[aj][1] + di[2] * solved[aj][2];
                    let mut v = -inv_wsize * (1.0 + dot);
                    if ai == aj {
                        v += 1.0;
                    }
                    *acc.entry((*idx_i as u32, *idx_j as u32)).or_insert(0.0) += v;
                }
            }
        }
    }

    let mut entries: Vec<(u32, u32, f64)> = acc
        .into_iter()
        .map(|((i, j), v)| (i, j, v))
        .collect();
    entries.sort_unstable_by_key(|&(i, j, _)| (i, j));

    Ok(MattingLaplacian {
        height: h,
        width: w,
        window,
        epsilon,
        entries,
    })
}
