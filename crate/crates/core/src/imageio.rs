//! 8-bit RGB image files as `[3, H, W]` tensors in [0, 1].
//!
//! PNG and binary PPM are read and written; JPEG is read only, for ingesting
//! existing datasets.

use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const IMAGE_EXTENSIONS: [&str; 5] = ["png", "ppm", "pnm", "jpg", "jpeg"];

pub fn read_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path)
        .map_err(|e| Error::format(path, e.to_string()))?
        .to_rgb8();
    Ok(rgb_to_tensor(&img))
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    let mut data = vec![0.0; 3 * plane];
    for (i, px) in img.pixels().enumerate() {
        for ch in 0..3 {
            data[ch * plane + i] = px[ch] as f64 / 255.0;
        }
    }
    Tensor::new(&[3, h, w], data).expect("consistent shape")
}

/// Round to 8 bits per channel.
pub fn tensor_to_rgb(t: &Tensor) -> Result<RgbImage> {
    let s = t.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::Shape(format!("expected a [3, H, W] image, got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let plane = h * w;
    let d = t.data();
    let mut buf = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for ch in 0..3 {
            buf.push((d[ch * plane + i] * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(RgbImage::from_raw(w as u32, h as u32, buf).expect("buffer matches dimensions"))
}

/// The image as it reads back after an 8-bit save.
pub fn quantize(t: &Tensor) -> Result<Tensor> {
    Ok(rgb_to_tensor(&tensor_to_rgb(t)?))
}

/// Write as PNG, or binary PPM when the extension is `ppm`/`pnm`.
pub fn write_image(path: &Path, t: &Tensor) -> Result<()> {
    let img = tensor_to_rgb(t)?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") | Some("pnm") => ImageFormat::Pnm,
        Some("png") => ImageFormat::Png,
        other => {
            return Err(Error::InvalidArgument(format!(
                "cannot write image with extension {other:?}; use png or ppm"
            )))
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save_with_format(path, format)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// All image files below `root`, sorted by path.
pub fn list_images(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if is_image_path(&path) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// `path` relative to `root` with `/` separators.
pub fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}
