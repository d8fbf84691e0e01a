use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

/// Grayscale frame with intensities in 0..=255.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "image {width}x{height} with {} pixels",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Pixel with coordinates clamped to the image.
    #[inline]
    pub fn at_clamped(&self, x: i64, y: i64) -> f32 {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.at(x, y)
    }

    /// Bilinear sample with clamped borders.
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let (xi, yi) = (x0 as i64, y0 as i64);
        let a = self.at_clamped(xi, yi);
        let b = self.at_clamped(xi + 1, yi);
        let c = self.at_clamped(xi, yi + 1);
        let d = self.at_clamped(xi + 1, yi + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    /// 2x2 box-filtered half-resolution image.
    pub fn downsample(&self) -> GrayImage {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        GrayImage::from_fn(w, h, |x, y| {
            let (sx, sy) = (2 * x as i64, 2 * y as i64);
            0.25 * (self.at_clamped(sx, sy)
                + self.at_clamped(sx + 1, sy)
                + self.at_clamped(sx, sy + 1)
                + self.at_clamped(sx + 1, sy + 1))
        })
    }

    pub fn to_luma8(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Luma([self.at(x as usize, y as usize).round().clamp(0.0, 255.0) as u8])
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_luma8()
            .save(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }

    /// Load any supported image and convert to luma (0.299 R + 0.587 G + 0.114 B).
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let rgb = img.to_rgb32f();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let data = rgb
            .pixels()
            .map(|p| 255.0 * (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]))
            .collect();
        GrayImage::new(w, h, data)
    }
}

/// Frames of a directory in frame-index order. The index is the last run of
/// digits in the file stem; only `.png` and `.pgm` files are considered.
pub fn list_frames(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("png") | Some("pgm")) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let digits: String = stem
            .chars()
            .rev()
            .skip_while(|c| !c.is_ascii_digit())
            .take_while(|c| c.is_ascii_digit())
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        let idx = digits
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("no frame index in {}", path.display())))?;
        frames.push((idx, path));
    }
    frames.sort();
    if frames.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Parse(format!("duplicate frame index in {}", dir.display())));
    }
    Ok(frames)
}

/// Load every `stride`-th frame of a directory (stride 1 keeps all).
pub fn load_frames(dir: &Path, stride: usize) -> Result<Vec<GrayImage>> {
    let stride = stride.max(1);
    list_frames(dir)?
        .into_iter()
        .step_by(stride)
        .map(|(_, p)| GrayImage::load(&p))
        .collect()
}

/// Gaussian-free image pyramid; level 0 is the input.
#[derive(Debug, Clone)]
pub struct Pyramid {
    levels: Vec<GrayImage>,
}

impl Pyramid {
    pub fn new(img: &GrayImage, levels: usize) -> Self {
        let mut v = vec![img.clone()];
        for _ in 1..levels.max(1) {
            let next = v.last().unwrap().downsample();
            v.push(next);
        }
        Self { levels: v }
    }

    pub fn level(&self, l: usize) -> &GrayImage {
        &self.levels[l]
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn base(&self) -> &GrayImage {
        &self.levels[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_and_downsample() {
        let img = GrayImage::from_fn(4, 4, |x, y| (x + 4 * y) as f32);
        assert_eq!(img.sample(1.5, 0.0), 1.5);
        assert_eq!(img.sample(1.0, 1.5), 7.0);
        assert_eq!(img.sample(-3.0, 0.0), 0.0);
        let d = img.downsample();
        assert_eq!((d.width(), d.height()), (2, 2));
        assert_eq!(d.at(0, 0), 2.5);
    }

    #[test]
    fn frame_directory_ordering() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in [("img_10.pgm", 10.0), ("img_2.pgm", 2.0), ("img_0.png", 0.0)] {
            GrayImage::from_fn(3, 2, |_, _| v).save(&dir.path().join(name)).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let frames = load_frames(dir.path(), 1).unwrap();
        let firsts: Vec<f32> = frames.iter().map(|f| f.at(0, 0)).collect();
        assert_eq!(firsts, vec![0.0, 2.0, 10.0]);
        assert_eq!(load_frames(dir.path(), 2).unwrap().len(), 2);
    }
}
