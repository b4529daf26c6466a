use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Row-major grayscale image with real-valued intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ClassifierError> {
        if width == 0 || height == 0 {
            return Err(ClassifierError::Input(format!("image has zero area ({width}x{height})")));
        }
        if pixels.len() != width * height {
            return Err(ClassifierError::Input(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, ClassifierError> {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear resampling with pixel-centre alignment; same size is the identity.
    pub fn resize(&self, width: usize, height: usize) -> GrayImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let axis = |d: usize, scale: f64, len: usize| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            (lo, hi, s - lo as f64)
        };
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            let (y0, y1, ty) = axis(y, sy, self.height);
            for x in 0..width {
                let (x0, x1, tx) = axis(x, sx, self.width);
                let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
                let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
                pixels.push(top * (1.0 - ty) + bottom * ty);
            }
        }
        GrayImage { width, height, pixels }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HogConfig {
    /// Target (width, height) before gradient computation.
    pub resize: (usize, usize),
    /// Unsigned orientation bins over [0°, 180°).
    pub bins: usize,
    /// Cell edge in pixels.
    pub cell: usize,
    /// Block edge in cells.
    pub block: usize,
    /// L2-Hys clipping threshold.
    pub clip: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self { resize: (256, 256), bins: 9, cell: 32, block: 2, clip: 0.2 }
    }
}

const NORM_EPS: f64 = 1e-5;

impl HogConfig {
    /// Short string identifying the configuration, stored alongside trained models.
    pub fn fingerprint(&self) -> String {
        format!(
            "hog-{}x{}-b{}-c{}-k{}-clip{}",
            self.resize.0, self.resize.1, self.bins, self.cell, self.block, self.clip
        )
    }

    fn cells(&self) -> (usize, usize) {
        (self.resize.0 / self.cell, self.resize.1 / self.cell)
    }

    pub fn output_len(&self) -> usize {
        let (cx, cy) = self.cells();
        if cx < self.block || cy < self.block {
            return 0;
        }
        (cx - self.block + 1) * (cy - self.block + 1) * self.block * self.block * self.bins
    }
}

/// HOG descriptor with the default configuration (1764 values).
pub fn hog_features(image: &GrayImage) -> Result<Vec<f64>, ClassifierError> {
    hog_with(image, &HogConfig::default())
}

/// HOG descriptor: central-difference gradients (zero on the border), hard
/// magnitude voting into unsigned orientation bins per cell, overlapping
/// blocks with stride one cell, L2-Hys normalisation per block.
pub fn hog_with(image: &GrayImage, cfg: &HogConfig) -> Result<Vec<f64>, ClassifierError> {
    if cfg.bins == 0 || cfg.cell == 0 || cfg.block == 0 {
        return Err(ClassifierError::Input("HOG bins, cell and block must be positive".into()));
    }
    if cfg.output_len() == 0 {
        return Err(ClassifierError::Input(format!(
            "resize {:?} holds fewer than {} cells of {} px per side",
            cfg.resize, cfg.block, cfg.cell
        )));
    }
    let img = image.resize(cfg.resize.0, cfg.resize.1);
    let (w, h) = (img.width(), img.height());
    let (ncx, ncy) = cfg.cells();
    let bin_width = 180.0 / cfg.bins as f64;
    let mut hist = vec![0.0; ncx * ncy * cfg.bins];

    for y in 0..ncy * cfg.cell {
        for x in 0..ncx * cfg.cell {
            let gx = if x > 0 && x + 1 < w { img.get(x + 1, y) - img.get(x - 1, y) } else { 0.0 };
            let gy = if y > 0 && y + 1 < h { img.get(x, y + 1) - img.get(x, y - 1) } else { 0.0 };
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let bin = ((angle / bin_width) as usize).min(cfg.bins - 1);
            let cell = (y / cfg.cell) * ncx + x / cfg.cell;
            hist[cell * cfg.bins + bin] += mag;
        }
    }

    let mut out = Vec::with_capacity(cfg.output_len());
    let mut block = Vec::with_capacity(cfg.block * cfg.block * cfg.bins);
    for by in 0..=ncy - cfg.block {
        for bx in 0..=ncx - cfg.block {
            block.clear();
            for cy in by..by + cfg.block {
                for cx in bx..bx + cfg.block {
                    let start = (cy * ncx + cx) * cfg.bins;
                    block.extend_from_slice(&hist[start..start + cfg.bins]);
                }
            }
            l2_normalize(&mut block);
            block.iter_mut().for_each(|v| *v = v.min(cfg.clip));
            l2_normalize(&mut block);
            out.extend_from_slice(&block);
        }
    }
    Ok(out)
}

fn l2_normalize(v: &mut [f64]) {
    let norm = (v.iter().map(|x| x * x).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> HogConfig {
        HogConfig { resize: (4, 4), bins: 9, cell: 2, block: 2, clip: 0.2 }
    }

    #[test]
    fn default_length() {
        assert_eq!(HogConfig::default().output_len(), 7 * 7 * 4 * 9);
        let img = GrayImage::from_fn(300, 420, |x, y| ((x * 7 + y * 3) % 11) as f64).unwrap();
        assert_eq!(hog_features(&img).unwrap().len(), 1764);
    }

    #[test]
    fn constant_image_has_no_gradients() {
        let img = GrayImage::from_fn(64, 80, |_, _| 0.7).unwrap();
        assert!(hog_features(&img).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_area_is_rejected() {
        assert!(matches!(GrayImage::new(0, 5, vec![]), Err(ClassifierError::Input(_))));
    }

    #[test]
    fn vertical_step_edge_by_hand() {
        // columns 0 0 1 1: gx = 1 at x = 1, 2 on every row, gy = 0
        // each 2x2 cell gets magnitude 2 in bin 0 (angle 0°)
        // block [2,0..,2,0..,2,0..,2,0..] -> /4 -> 0.5 -> clip 0.2 -> /0.4 -> 0.5
        let img = GrayImage::from_fn(4, 4, |x, _| if x >= 2 { 1.0 } else { 0.0 }).unwrap();
        let v = hog_with(&img, &toy()).unwrap();
        assert_eq!(v.len(), 36);
        for (i, value) in v.iter().enumerate() {
            let expected = if i % 9 == 0 { 0.5 } else { 0.0 };
            assert!((value - expected).abs() < 1e-9, "entry {i}: {value}");
        }
    }

    #[test]
    fn horizontal_step_edge_lands_in_ninety_degree_bin() {
        let img = GrayImage::from_fn(4, 4, |_, y| if y >= 2 { 1.0 } else { 0.0 }).unwrap();
        let v = hog_with(&img, &toy()).unwrap();
        // 90° falls in bin 4 ([80°, 100°))
        for (i, value) in v.iter().enumerate() {
            let expected = if i % 9 == 4 { 0.5 } else { 0.0 };
            assert!((value - expected).abs() < 1e-9, "entry {i}: {value}");
        }
    }

    #[test]
    fn deterministic() {
        let img = GrayImage::from_fn(123, 77, |x, y| ((x * x + 3 * y) % 17) as f64 / 17.0).unwrap();
        let a = hog_features(&img).unwrap();
        let b = hog_features(&img).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x + 10 * y) as f64).unwrap();
        assert_eq!(img.resize(5, 3), img);
        let c = GrayImage::from_fn(7, 9, |_, _| 3.0).unwrap().resize(4, 4);
        assert!((0..4).all(|y| (0..4).all(|x| (c.get(x, y) - 3.0).abs() < 1e-12)));
    }

    #[test]
    fn clip_bounds_block_entries() {
        let img = GrayImage::from_fn(64, 64, |x, y| if (x / 8 + y / 8) % 2 == 0 { 0.0 } else { 1.0 }).unwrap();
        let cfg = HogConfig { resize: (64, 64), bins: 9, cell: 16, block: 2, clip: 0.2 };
        let v = hog_with(&img, &cfg).unwrap();
        for chunk in v.chunks(36) {
            let norm: f64 = chunk.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm <= 1.0 + 1e-9);
        }
    }
}
