//! Procedural paired nighttime-haze data: dim textured scenes with colored
//! point lights, depth-driven scattering with a spatially variant airlight and
//! per-light glow, then bloom / motion blur / sensor noise on top.
//!
//! Every stage is a pure function of its seed, so regenerating a dataset
//! yields byte-identical files.

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};
use crate::image::{crop_offsets, save_image, ImageGray, ImageRGB};
use crate::manifest::{DatasetManifest, SampleRecord, Split};

/// Derives an independent stream seed from a base seed and an index
/// (splitmix64 finalizer).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthStyle {
    LinearRamp,
    Blobs,
    Mixed,
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub num_lights: usize,
    pub depth_style: DepthStyle,
    /// Scattering coefficient per unit of normalized depth.
    pub haze_beta: f64,
    /// Base radiance of the unlit scene.
    pub ambient: f64,
    /// Texture contrast; 0 renders a flat scene.
    pub texture_amp: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(CoreError::Dimension("scene must be at least 8x8".into()));
        }
        if self.haze_beta < 0.0 {
            return Err(CoreError::Parameter("haze_beta must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(CoreError::Parameter("ambient must be in [0,1]".into()));
        }
        if self.texture_amp < 0.0 {
            return Err(CoreError::Parameter("texture_amp must be >= 0".into()));
        }
        Ok(())
    }
}

/// One colored point light source.
#[derive(Debug, Clone)]
pub struct Light {
    pub row: f64,
    pub col: f64,
    pub color: [f64; 3],
    pub intensity: f64,
    pub disk_radius: f64,
}

/// Rendered clean scene plus the geometry later stages need.
#[derive(Debug, Clone)]
pub struct Scene {
    pub clean: ImageRGB,
    pub depth: ImageGray,
    pub lights: Vec<Light>,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

// Bilinear value noise in [-1, 1] from a coarse seeded lattice.
fn value_noise(h: usize, w: usize, cell: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let gh = h / cell + 2;
    let gw = w / cell + 2;
    let grid = Array2::from_shape_fn((gh, gw), |_| rng.gen::<f64>() * 2.0 - 1.0);
    Array2::from_shape_fn((h, w), |(r, c)| {
        let fr = r as f64 / cell as f64;
        let fc = c as f64 / cell as f64;
        let (r0, c0) = (fr.floor() as usize, fc.floor() as usize);
        let (tr, tc) = (fr - r0 as f64, fc - c0 as f64);
        let v00 = grid[(r0, c0)];
        let v01 = grid[(r0, c0 + 1)];
        let v10 = grid[(r0 + 1, c0)];
        let v11 = grid[(r0 + 1, c0 + 1)];
        (1.0 - tr) * ((1.0 - tc) * v00 + tc * v01) + tr * ((1.0 - tc) * v10 + tc * v11)
    })
}

fn place_lights(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Light> {
    let (h, w) = (spec.height as f64, spec.width as f64);
    let base_radius = (spec.height.min(spec.width) as f64 / 24.0).max(1.5);
    let min_sep = (h.max(w) * 0.22).max(4.0 * base_radius);
    let margin = base_radius * 1.4 + 2.0;

    let mut lights: Vec<Light> = Vec::with_capacity(spec.num_lights);
    for li in 0..spec.num_lights {
        let mut placed = None;
        for _ in 0..200 {
            let row = rng.gen_range(margin..h - margin);
            let col = rng.gen_range(margin..w - margin);
            if lights
                .iter()
                .all(|l| ((l.row - row).powi(2) + (l.col - col).powi(2)).sqrt() >= min_sep)
            {
                placed = Some((row, col));
                break;
            }
        }
        // Rejection exhausted: fall back to a coarse grid slot.
        let (row, col) = placed.unwrap_or_else(|| {
            let cols = (spec.num_lights as f64).sqrt().ceil() as usize;
            let gr = li / cols;
            let gc = li % cols;
            (
                margin + (gr as f64 + 0.5) * (h - 2.0 * margin) / (spec.num_lights as f64 / cols as f64).ceil(),
                margin + (gc as f64 + 0.5) * (w - 2.0 * margin) / cols as f64,
            )
        });
        let mut color = [
            rng.gen_range(0.5f64..1.0),
            rng.gen_range(0.5f64..1.0),
            rng.gen_range(0.5f64..1.0),
        ];
        let target_mean = rng.gen_range(0.7f64..0.9);
        let mean = (color[0] + color[1] + color[2]) / 3.0;
        for c in color.iter_mut() {
            *c = (*c * target_mean / mean).min(1.0);
        }
        lights.push(Light {
            row,
            col,
            color,
            intensity: rng.gen_range(0.85..1.0),
            disk_radius: base_radius * rng.gen_range(0.9..1.3),
        });
    }
    lights
}

fn render_depth(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (h, w) = (spec.height, spec.width);
    let ramp = |rng: &mut ChaCha8Rng| -> Array2<f64> {
        let flip_r = rng.gen_bool(0.5);
        let flip_c = rng.gen_bool(0.5);
        let wr = rng.gen_range(0.3..0.7);
        Array2::from_shape_fn((h, w), |(r, c)| {
            let mut fr = r as f64 / (h - 1) as f64;
            let mut fc = c as f64 / (w - 1) as f64;
            if flip_r {
                fr = 1.0 - fr;
            }
            if flip_c {
                fc = 1.0 - fc;
            }
            wr * fr + (1.0 - wr) * fc
        })
    };
    let blobs = |rng: &mut ChaCha8Rng| -> Array2<f64> {
        let k = rng.gen_range(3..6);
        let centers: Vec<(f64, f64, f64)> = (0..k)
            .map(|_| {
                (
                    rng.gen_range(0.0..h as f64),
                    rng.gen_range(0.0..w as f64),
                    rng.gen_range(0.15..0.45) * h.max(w) as f64,
                )
            })
            .collect();
        Array2::from_shape_fn((h, w), |(r, c)| {
            centers
                .iter()
                .map(|(cr, cc, s)| {
                    let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                    (-d2 / (2.0 * s * s)).exp()
                })
                .sum::<f64>()
        })
    };
    let field = match spec.depth_style {
        DepthStyle::LinearRamp => ramp(rng),
        DepthStyle::Blobs => blobs(rng),
        DepthStyle::Mixed => {
            let a = ramp(rng);
            let b = blobs(rng);
            &a * 0.5 + &b * 0.5
        }
    };
    let min = field.iter().cloned().fold(f64::MAX, f64::min);
    let max = field.iter().cloned().fold(f64::MIN, f64::max);
    if max - min < 1e-12 {
        Array2::from_elem((h, w), 0.5)
    } else {
        field.mapv(|v| (v - min) / (max - min))
    }
}

/// Renders the clean low-light scene and its normalized depth map.
/// Deterministic in `spec.seed`.
pub fn render_clean_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let tint = [
        1.0 + rng.gen_range(-0.1..0.1),
        1.0 + rng.gen_range(-0.1..0.1),
        1.0 + rng.gen_range(-0.1..0.1),
    ];
    let cell = (h.min(w) / 8).max(4);
    let noise = value_noise(h, w, cell, &mut rng);

    // Rectangular patches stand in for scene structure; their contrast also
    // scales with texture_amp so a flat spec stays flat.
    let n_rects = rng.gen_range(3..8);
    let rects: Vec<(usize, usize, usize, usize, f64)> = (0..n_rects)
        .map(|_| {
            let r0 = rng.gen_range(0..h);
            let c0 = rng.gen_range(0..w);
            let rh = rng.gen_range(h / 8..h / 2 + 1);
            let rw = rng.gen_range(w / 8..w / 2 + 1);
            (r0, c0, rh, rw, rng.gen_range(-1.0..1.0))
        })
        .collect();

    let mut data = Array3::zeros((h, w, 3));
    for r in 0..h {
        for c in 0..w {
            let mut tex = noise[(r, c)];
            for &(r0, c0, rh, rw, dev) in &rects {
                if r >= r0 && r < (r0 + rh).min(h) && c >= c0 && c < (c0 + rw).min(w) {
                    tex += dev;
                }
            }
            let shade = 1.0 + spec.texture_amp * tex;
            for k in 0..3 {
                data[(r, c, k)] = (spec.ambient * tint[k] * shade).clamp(0.0, 1.0);
            }
        }
    }

    let lights = place_lights(spec, &mut rng);
    for light in &lights {
        let rad = light.disk_radius;
        let r0 = (light.row - rad - 1.0).max(0.0) as usize;
        let r1 = ((light.row + rad + 2.0) as usize).min(h);
        let c0 = (light.col - rad - 1.0).max(0.0) as usize;
        let c1 = ((light.col + rad + 2.0) as usize).min(w);
        for r in r0..r1 {
            for c in c0..c1 {
                let d = ((r as f64 - light.row).powi(2) + (c as f64 - light.col).powi(2)).sqrt();
                let blend = smoothstep(rad - d + 0.5);
                if blend > 0.0 {
                    for k in 0..3 {
                        let lit = light.color[k] * light.intensity;
                        data[(r, c, k)] =
                            ((1.0 - blend) * data[(r, c, k)] + blend * lit).clamp(0.0, 1.0);
                    }
                }
            }
        }
    }

    let depth = render_depth(spec, &mut rng);
    Ok(Scene {
        clean: ImageRGB::from_array(data)?,
        depth: ImageGray::from_array(depth)?,
        lights,
    })
}

/// Hazy frame plus the exact components it was composed from.
#[derive(Debug, Clone)]
pub struct HazeComposite {
    pub hazy: ImageRGB,
    /// `clean * t + A * (1 - t) + G` before the [0,1] clamp.
    pub pre_clamp: Array3<f64>,
    pub transmission: ImageGray,
    pub airlight: ImageRGB,
    pub glow: Array3<f64>,
}

/// Scattering composition `I = J t + A (1 - t) + G` with
/// `t = exp(-beta * depth)`, a spatially variant airlight `A` that blends the
/// global haze color toward the nearest light, and per-light Gaussian glow `G`.
pub fn compose_haze(
    clean: &ImageRGB,
    depth: &ImageGray,
    spec: &SceneSpec,
    lights: &[Light],
    glow_strength: f64,
) -> Result<HazeComposite> {
    if clean.height() != depth.height() || clean.width() != depth.width() {
        return Err(CoreError::Dimension(format!(
            "clean {}x{} vs depth {}x{}",
            clean.height(),
            clean.width(),
            depth.height(),
            depth.width()
        )));
    }
    if glow_strength < 0.0 {
        return Err(CoreError::Parameter("glow_strength must be >= 0".into()));
    }
    let (h, w) = (clean.height(), clean.width());
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(spec.seed, 0x41_49_52));

    let base = rng.gen_range(0.5f64..0.72);
    let air_color = [
        (base * rng.gen_range(0.92f64..1.02)).clamp(0.0, 1.0),
        (base * rng.gen_range(0.95f64..1.05)).clamp(0.0, 1.0),
        (base * rng.gen_range(0.98f64..1.12)).clamp(0.0, 1.0),
    ];
    let sigma_air = 0.25 * h.max(w) as f64;

    let mut airlight = Array3::zeros((h, w, 3));
    let mut glow = Array3::zeros((h, w, 3));
    let mut transmission = Array2::zeros((h, w));
    let mut pre = Array3::zeros((h, w, 3));

    for r in 0..h {
        for c in 0..w {
            let t = (-spec.haze_beta * depth.data()[(r, c)]).exp();
            transmission[(r, c)] = t;

            let mut a_px = air_color;
            if !lights.is_empty() {
                let mut best_d = f64::MAX;
                let mut best: &Light = &lights[0];
                for l in lights {
                    let d = ((r as f64 - l.row).powi(2) + (c as f64 - l.col).powi(2)).sqrt();
                    if d < best_d {
                        best_d = d;
                        best = l;
                    }
                }
                let wl = 0.6 * (-best_d / sigma_air).exp();
                for k in 0..3 {
                    a_px[k] = (1.0 - wl) * air_color[k] + wl * best.color[k];
                }
            }

            let mut g_px = [0.0f64; 3];
            if glow_strength > 0.0 {
                for l in lights {
                    let d2 = (r as f64 - l.row).powi(2) + (c as f64 - l.col).powi(2);
                    let sigma = 0.12 * h.max(w) as f64 * l.intensity;
                    let fall = (-d2 / (2.0 * sigma * sigma)).exp();
                    for k in 0..3 {
                        g_px[k] += glow_strength * l.intensity * l.color[k] * fall;
                    }
                }
            }

            for k in 0..3 {
                airlight[(r, c, k)] = a_px[k];
                glow[(r, c, k)] = g_px[k];
                pre[(r, c, k)] = clean.data()[(r, c, k)] * t + a_px[k] * (1.0 - t) + g_px[k];
            }
        }
    }

    Ok(HazeComposite {
        hazy: ImageRGB::from_array_clamped(pre.clone())?,
        pre_clamp: pre,
        transmission: ImageGray::from_array(transmission)?,
        airlight: ImageRGB::from_array(airlight)?,
        glow,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegradationSet {
    pub glow: bool,
    pub bloom: bool,
    pub blur: bool,
    pub noise: bool,
}

impl DegradationSet {
    pub const NONE: DegradationSet = DegradationSet { glow: false, bloom: false, blur: false, noise: false };
    pub const ALL: DegradationSet = DegradationSet { glow: true, bloom: true, blur: true, noise: true };
}

#[derive(Debug, Clone)]
pub struct DegradationConfig {
    pub glow_strength: f64,
    pub bloom_threshold: f64,
    pub bloom_sigma: f64,
    pub bloom_gain: f64,
    pub blur_len: usize,
    pub noise_sigma: f64,
    pub enabled: DegradationSet,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            glow_strength: 0.35,
            bloom_threshold: 0.55,
            bloom_sigma: 3.0,
            bloom_gain: 0.6,
            blur_len: 5,
            noise_sigma: 0.01,
            enabled: DegradationSet::ALL,
        }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.glow_strength < 0.0
            || self.bloom_threshold < 0.0
            || self.bloom_sigma < 0.0
            || self.bloom_gain < 0.0
            || self.noise_sigma < 0.0
        {
            return Err(CoreError::Parameter("degradation magnitudes must be >= 0".into()));
        }
        if self.blur_len == 0 {
            return Err(CoreError::Parameter("blur_len must be >= 1".into()));
        }
        Ok(())
    }
}

fn gaussian_blur(data: &Array3<f64>, sigma: f64) -> Array3<f64> {
    if sigma <= 0.0 {
        return data.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let (h, w, ch) = data.dim();
    let mut tmp = Array3::zeros((h, w, ch));
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let cc = c as i64 + ki as i64 - radius;
                    if cc >= 0 && cc < w as i64 {
                        acc += kv * data[(r, cc as usize, k)];
                        wsum += kv;
                    }
                }
                tmp[(r, c, k)] = acc / wsum;
            }
        }
    }
    let mut out = Array3::zeros((h, w, ch));
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let rr = r as i64 + ki as i64 - radius;
                    if rr >= 0 && rr < h as i64 {
                        acc += kv * tmp[(rr as usize, c, k)];
                        wsum += kv;
                    }
                }
                out[(r, c, k)] = acc / wsum;
            }
        }
    }
    out
}

/// Discrete line kernel of `len` equally weighted taps along `angle`.
/// Taps that round onto the same pixel merge their weight.
pub fn motion_blur_kernel(len: usize, angle: f64) -> Vec<(i64, i64, f64)> {
    let mut taps: Vec<(i64, i64, f64)> = Vec::new();
    let half = (len as f64 - 1.0) / 2.0;
    let weight = 1.0 / len as f64;
    for s in 0..len {
        let t = s as f64 - half;
        let dy = (t * angle.sin()).round() as i64;
        let dx = (t * angle.cos()).round() as i64;
        if let Some(tap) = taps.iter_mut().find(|(y, x, _)| *y == dy && *x == dx) {
            tap.2 += weight;
        } else {
            taps.push((dy, dx, weight));
        }
    }
    taps
}

fn convolve_taps(data: &Array3<f64>, taps: &[(i64, i64, f64)]) -> Array3<f64> {
    let (h, w, ch) = data.dim();
    let mut out = Array3::zeros((h, w, ch));
    for r in 0..h {
        for c in 0..w {
            for &(dy, dx, wt) in taps {
                let rr = (r as i64 + dy).clamp(0, h as i64 - 1) as usize;
                let cc = (c as i64 + dx).clamp(0, w as i64 - 1) as usize;
                for k in 0..ch {
                    out[(r, c, k)] += wt * data[(rr, cc, k)];
                }
            }
        }
    }
    out
}

/// Applies the enabled post-processing stages in fixed order:
/// bloom, then linear motion blur, then additive Gaussian noise.
/// Glow is part of [`compose_haze`], not re-applied here.
pub fn apply_degradations(img: &ImageRGB, cfg: &DegradationConfig, seed: u64) -> Result<ImageRGB> {
    cfg.validate()?;
    if !cfg.enabled.bloom && !cfg.enabled.blur && !cfg.enabled.noise {
        return Ok(img.clone());
    }
    let (h, w) = (img.height(), img.width());
    let mut data = img.data().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if cfg.enabled.bloom {
        let mut bright = Array3::zeros((h, w, 3));
        for r in 0..h {
            for c in 0..w {
                let lum = (data[(r, c, 0)] + data[(r, c, 1)] + data[(r, c, 2)]) / 3.0;
                let excess = (lum - cfg.bloom_threshold).max(0.0);
                if excess > 0.0 {
                    let scale = excess / lum.max(1e-6);
                    for k in 0..3 {
                        bright[(r, c, k)] = data[(r, c, k)] * scale;
                    }
                }
            }
        }
        let blurred = gaussian_blur(&bright, cfg.bloom_sigma);
        data += &(blurred * cfg.bloom_gain);
    }

    if cfg.enabled.blur && cfg.blur_len > 1 {
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let taps = motion_blur_kernel(cfg.blur_len, angle);
        data = convolve_taps(&data, &taps);
    }

    if cfg.enabled.noise && cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma)
            .map_err(|e| CoreError::Parameter(format!("noise sigma: {e}")))?;
        for v in data.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }

    ImageRGB::from_array_clamped(data)
}

#[derive(Debug, Clone)]
pub struct SceneRanges {
    pub height: usize,
    pub width: usize,
    pub num_lights: (usize, usize),
    pub haze_beta: (f64, f64),
    pub ambient: (f64, f64),
    pub texture_amp: (f64, f64),
    /// None samples a style uniformly per scene.
    pub depth_style: Option<DepthStyle>,
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self {
            height: 128,
            width: 128,
            num_lights: (1, 4),
            haze_beta: (0.6, 2.0),
            ambient: (0.06, 0.16),
            texture_amp: (0.08, 0.2),
            depth_style: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DegradationRanges {
    pub glow_strength: (f64, f64),
    pub noise_sigma: (f64, f64),
    pub blur_len: (usize, usize),
    pub enabled: DegradationSet,
}

impl Default for DegradationRanges {
    fn default() -> Self {
        Self {
            glow_strength: (0.2, 0.5),
            noise_sigma: (0.0, 0.02),
            blur_len: (3, 7),
            enabled: DegradationSet::ALL,
        }
    }
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn sample_range_usize(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// 80/10/10 split boundaries over `n` samples.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = n * 80 / 100;
    let val = n * 10 / 100;
    (train, val, n - train - val)
}

/// Renders `count` scenes, hazes and degrades them, crops hazy/clean pairs at
/// identical offsets, writes PNGs under `<out_root>/hazy` and `<out_root>/gt`,
/// and returns (and saves) the 80/10/10 manifest.
pub fn generate_dataset(
    count: usize,
    out_root: &Path,
    scene_ranges: &SceneRanges,
    degradation_ranges: &DegradationRanges,
    crop: usize,
    crops_per_image: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    if count == 0 || crops_per_image == 0 {
        return Err(CoreError::Parameter("count and crops_per_image must be >= 1".into()));
    }
    let hazy_dir = out_root.join("hazy");
    let gt_dir = out_root.join("gt");
    std::fs::create_dir_all(&hazy_dir)?;
    std::fs::create_dir_all(&gt_dir)?;

    let total = count * crops_per_image;
    let (n_train, n_val, _) = split_counts(total);

    let mut samples = Vec::with_capacity(total);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, i as u64));
        let style = scene_ranges.depth_style.unwrap_or_else(|| {
            match rng.gen_range(0..3) {
                0 => DepthStyle::LinearRamp,
                1 => DepthStyle::Blobs,
                _ => DepthStyle::Mixed,
            }
        });
        let spec = SceneSpec {
            seed: rng.gen(),
            height: scene_ranges.height,
            width: scene_ranges.width,
            num_lights: sample_range_usize(&mut rng, scene_ranges.num_lights),
            depth_style: style,
            haze_beta: sample_range(&mut rng, scene_ranges.haze_beta),
            ambient: sample_range(&mut rng, scene_ranges.ambient),
            texture_amp: sample_range(&mut rng, scene_ranges.texture_amp),
        };
        let cfg = DegradationConfig {
            glow_strength: sample_range(&mut rng, degradation_ranges.glow_strength),
            noise_sigma: sample_range(&mut rng, degradation_ranges.noise_sigma),
            blur_len: sample_range_usize(&mut rng, degradation_ranges.blur_len),
            enabled: degradation_ranges.enabled,
            ..DegradationConfig::default()
        };

        let scene = render_clean_scene(&spec)?;
        let glow = if cfg.enabled.glow { cfg.glow_strength } else { 0.0 };
        let composite = compose_haze(&scene.clean, &scene.depth, &spec, &scene.lights, glow)?;
        let degraded = apply_degradations(&composite.hazy, &cfg, rng.gen())?;

        let offsets = crop_offsets(
            spec.height,
            spec.width,
            crop,
            crops_per_image,
            rng.gen(),
        )?;
        for (j, (top, left)) in offsets.into_iter().enumerate() {
            let hazy_crop = degraded.crop(top, left, crop)?;
            let clean_crop = scene.clean.crop(top, left, crop)?;
            let name = format!("s{i:05}_c{j:02}.png");
            let hazy_path = hazy_dir.join(&name);
            let gt_path = gt_dir.join(&name);
            save_image(&hazy_crop, &hazy_path)?;
            save_image(&clean_crop, &gt_path)?;

            let k = i * crops_per_image + j;
            let split = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            samples.push(SampleRecord {
                split,
                hazy_path,
                clean_path: Some(gt_path),
            });
        }
    }

    let manifest = DatasetManifest::new_paired(samples)?;
    manifest.save(&out_root.join("manifest.tsv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_spec(seed: u64) -> SceneSpec {
        SceneSpec {
            seed,
            height: 64,
            width: 64,
            num_lights: 2,
            depth_style: DepthStyle::Mixed,
            haze_beta: 1.0,
            ambient: 0.1,
            texture_amp: 0.15,
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = toy_spec(7);
        let a = render_clean_scene(&spec).unwrap();
        let b = render_clean_scene(&spec).unwrap();
        assert_eq!(a.clean, b.clean);
        assert_eq!(a.depth, b.depth);
    }

    #[test]
    fn flat_dark_scene_mean_close_to_ambient() {
        let spec = SceneSpec {
            num_lights: 0,
            texture_amp: 0.0,
            ..toy_spec(3)
        };
        let scene = render_clean_scene(&spec).unwrap();
        let mean = scene.clean.luminance().mean();
        assert!((mean - spec.ambient).abs() < 0.05, "mean {mean}");
    }

    fn count_bright_components(img: &ImageRGB, threshold: f64) -> usize {
        let lum = img.luminance();
        let (h, w) = (img.height(), img.width());
        let mut seen = vec![false; h * w];
        let mut components = 0;
        for start in 0..h * w {
            if seen[start] || lum.data()[(start / w, start % w)] <= threshold {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                let (r, c) = (p / w, p % w);
                let neighbors = [
                    (r.wrapping_sub(1), c),
                    (r + 1, c),
                    (r, c.wrapping_sub(1)),
                    (r, c + 1),
                ];
                for (nr, nc) in neighbors {
                    if nr < h && nc < w {
                        let q = nr * w + nc;
                        if !seen[q] && lum.data()[(nr, nc)] > threshold {
                            seen[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        components
    }

    #[test]
    fn three_lights_three_bright_regions() {
        for seed in [1u64, 5, 9] {
            let spec = SceneSpec {
                num_lights: 3,
                height: 96,
                width: 96,
                ..toy_spec(seed)
            };
            let scene = render_clean_scene(&spec).unwrap();
            let n = count_bright_components(&scene.clean, spec.ambient + 0.3);
            assert_eq!(n, 3, "seed {seed}");
        }
    }

    #[test]
    fn no_haze_no_glow_is_identity() {
        let spec = SceneSpec { haze_beta: 0.0, ..toy_spec(11) };
        let scene = render_clean_scene(&spec).unwrap();
        let out = compose_haze(&scene.clean, &scene.depth, &spec, &scene.lights, 0.0).unwrap();
        assert_eq!(out.hazy, scene.clean);
    }

    #[test]
    fn infinite_haze_is_pure_airlight() {
        let spec = SceneSpec { haze_beta: 1e6, ..toy_spec(13) };
        let scene = render_clean_scene(&spec).unwrap();
        let depth = ImageGray::constant(64, 64, 1.0).unwrap();
        let out = compose_haze(&scene.clean, &depth, &spec, &scene.lights, 0.0).unwrap();
        for (hz, al) in out.hazy.data().iter().zip(out.airlight.data().iter()) {
            assert!((hz - al).abs() < 1e-12);
        }
    }

    #[test]
    fn recomposition_residual_is_zero() {
        let spec = toy_spec(17);
        let scene = render_clean_scene(&spec).unwrap();
        let out = compose_haze(&scene.clean, &scene.depth, &spec, &scene.lights, 0.4).unwrap();
        for r in 0..64 {
            for c in 0..64 {
                let t = out.transmission.data()[(r, c)];
                for k in 0..3 {
                    let expect = scene.clean.data()[(r, c, k)] * t
                        + out.airlight.data()[(r, c, k)] * (1.0 - t)
                        + out.glow[(r, c, k)];
                    assert_eq!(out.pre_clamp[(r, c, k)], expect);
                }
            }
        }
    }

    #[test]
    fn composition_inverts_where_transmission_large() {
        let spec = toy_spec(19);
        let scene = render_clean_scene(&spec).unwrap();
        let out = compose_haze(&scene.clean, &scene.depth, &spec, &scene.lights, 0.3).unwrap();
        let mut worst = 0.0f64;
        for r in 0..64 {
            for c in 0..64 {
                let t = out.transmission.data()[(r, c)];
                if t <= 0.1 {
                    continue;
                }
                for k in 0..3 {
                    let recovered = (out.pre_clamp[(r, c, k)]
                        - out.airlight.data()[(r, c, k)] * (1.0 - t)
                        - out.glow[(r, c, k)])
                        / t;
                    worst = worst.max((recovered - scene.clean.data()[(r, c, k)]).abs());
                }
            }
        }
        assert!(worst <= 1e-5, "max inversion error {worst}");
    }

    #[test]
    fn haze_brightens_dark_scenes() {
        let spec = toy_spec(23);
        let scene = render_clean_scene(&spec).unwrap();
        let out = compose_haze(&scene.clean, &scene.depth, &spec, &scene.lights, 0.3).unwrap();
        assert!(out.hazy.luminance().mean() >= scene.clean.luminance().mean());
    }

    #[test]
    fn empty_degradation_set_is_identity() {
        let spec = toy_spec(29);
        let scene = render_clean_scene(&spec).unwrap();
        let cfg = DegradationConfig { enabled: DegradationSet::NONE, ..Default::default() };
        let out = apply_degradations(&scene.clean, &cfg, 5).unwrap();
        assert_eq!(out, scene.clean);
    }

    #[test]
    fn noise_statistics_match_sigma() {
        let img = ImageRGB::constant(128, 128, [0.5, 0.5, 0.5]).unwrap();
        let cfg = DegradationConfig {
            noise_sigma: 0.05,
            enabled: DegradationSet { glow: false, bloom: false, blur: false, noise: true },
            ..Default::default()
        };
        let out = apply_degradations(&img, &cfg, 31).unwrap();
        let diffs: Vec<f64> = out
            .data()
            .iter()
            .zip(img.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((0.04..=0.06).contains(&std), "noise std {std}");
    }

    #[test]
    fn motion_blur_spreads_impulse_along_line() {
        let mut data = Array3::zeros((33, 33, 3));
        for k in 0..3 {
            data[(16, 16, k)] = 1.0;
        }
        let img = ImageRGB::from_array(data).unwrap();
        let cfg = DegradationConfig {
            blur_len: 7,
            enabled: DegradationSet { glow: false, bloom: false, blur: true, noise: false },
            ..Default::default()
        };
        let seed = 37;
        let out = apply_degradations(&img, &cfg, seed).unwrap();
        // Independent oracle: rebuild the same kernel and apply it directly.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let taps = motion_blur_kernel(7, angle);
        let mut expected = 0usize;
        for &(dy, dx, wt) in &taps {
            // The blurred image gathers: out(p) = sum w * in(p + off), so the
            // impulse shows up at p = center - off.
            let r = (16 - dy) as usize;
            let c = (16 - dx) as usize;
            let got = out.data()[(r, c, 0)];
            assert!((got - wt).abs() < 1e-12, "tap ({dy},{dx})");
            expected += 1;
        }
        assert!(expected >= 4, "kernel collapsed to {expected} taps");
        let total: f64 = out.data().iter().sum();
        assert!((total - 3.0).abs() < 1e-9, "energy not preserved: {total}");
    }

    #[test]
    fn split_counts_match_paper_scale() {
        assert_eq!(split_counts(10080), (8064, 1008, 1008));
        assert_eq!(split_counts(4), (3, 0, 1));
    }

    #[test]
    fn generate_dataset_writes_pairs_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let ranges = SceneRanges { height: 48, width: 48, ..Default::default() };
        let m = generate_dataset(
            2,
            dir.path(),
            &ranges,
            &DegradationRanges::default(),
            32,
            2,
            99,
        )
        .unwrap();
        assert_eq!(m.len(), 4);
        assert!(m.paired());
        assert_eq!(std::fs::read_dir(dir.path().join("hazy")).unwrap().count(), 4);
        assert_eq!(std::fs::read_dir(dir.path().join("gt")).unwrap().count(), 4);
        m.validate_files().unwrap();

        // Re-running with the same seed produces byte-identical files.
        let dir2 = tempfile::tempdir().unwrap();
        generate_dataset(2, dir2.path(), &ranges, &DegradationRanges::default(), 32, 2, 99)
            .unwrap();
        for sub in ["hazy", "gt"] {
            let mut names: Vec<_> = std::fs::read_dir(dir.path().join(sub))
                .unwrap()
                .map(|e| e.unwrap().file_name())
                .collect();
            names.sort();
            for name in names {
                let a = std::fs::read(dir.path().join(sub).join(&name)).unwrap();
                let b = std::fs::read(dir2.path().join(sub).join(&name)).unwrap();
                assert_eq!(a, b, "{sub}/{name:?} differs between runs");
            }
        }
    }
}
