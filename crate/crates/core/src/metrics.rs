//! Full-reference quality metrics: PSNR and windowed SSIM.

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::image::ImageRGB;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_shapes(pred: &ImageRGB, gt: &ImageRGB) -> Result<()> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(CoreError::Dimension(format!(
            "pred {}x{} vs gt {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` over all channels with MAX = 1.
/// Identical images report positive infinity.
pub fn psnr(pred: &ImageRGB, gt: &ImageRGB) -> Result<f64> {
    check_shapes(pred, gt)?;
    let mut se = 0.0;
    for (a, b) in pred.data().iter().zip(gt.data().iter()) {
        se += (a - b) * (a - b);
    }
    let mse = se / pred.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_window(size: usize, sigma: f64) -> Array2<f64> {
    let half = (size / 2) as f64;
    let mut k = Array2::from_shape_fn((size, size), |(r, c)| {
        let dy = r as f64 - half;
        let dx = c as f64 - half;
        (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp()
    });
    let sum: f64 = k.iter().sum();
    k.mapv_inplace(|v| v / sum);
    k
}

/// Mean local SSIM with a Gaussian window, dynamic range 1, channels averaged.
/// Windows are evaluated at fully interior positions only.
pub fn ssim(pred: &ImageRGB, gt: &ImageRGB, window: usize, k1: f64, k2: f64) -> Result<f64> {
    check_shapes(pred, gt)?;
    if window % 2 == 0 || window == 0 {
        return Err(CoreError::Parameter(format!("window {window} must be odd")));
    }
    let (h, w) = (pred.height(), pred.width());
    if h < window || w < window {
        return Err(CoreError::Dimension(format!(
            "image {h}x{w} smaller than SSIM window {window}"
        )));
    }
    let kernel = gaussian_window(window, SSIM_SIGMA);
    let c1 = (k1 * 1.0f64).powi(2);
    let c2 = (k2 * 1.0f64).powi(2);

    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        for r0 in 0..=h - window {
            for c0 in 0..=w - window {
                let mut mu_x = 0.0;
                let mut mu_y = 0.0;
                for kr in 0..window {
                    for kc in 0..window {
                        let wgt = kernel[(kr, kc)];
                        mu_x += wgt * pred.data()[(r0 + kr, c0 + kc, ch)];
                        mu_y += wgt * gt.data()[(r0 + kr, c0 + kc, ch)];
                    }
                }
                let mut var_x = 0.0;
                let mut var_y = 0.0;
                let mut cov = 0.0;
                for kr in 0..window {
                    for kc in 0..window {
                        let wgt = kernel[(kr, kc)];
                        let dx = pred.data()[(r0 + kr, c0 + kc, ch)] - mu_x;
                        let dy = gt.data()[(r0 + kr, c0 + kc, ch)] - mu_y;
                        var_x += wgt * dx * dx;
                        var_y += wgt * dy * dy;
                        cov += wgt * dx * dy;
                    }
                }
                let num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
                let den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
                total += num / den;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

pub fn ssim_default(pred: &ImageRGB, gt: &ImageRGB) -> Result<f64> {
    ssim(pred, gt, SSIM_WINDOW, SSIM_K1, SSIM_K2)
}
