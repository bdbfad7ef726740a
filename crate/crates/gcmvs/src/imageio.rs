use std::path::Path;

use gcmvs_core::image::RgbImage;

use crate::error::{Error, Result};

/// Loads any 8- or 16-bit PNG as RGB in `[0, 1]`.
pub fn read_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb32f();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0).collect();
    Ok(RgbImage::from_data(w as usize, h as usize, data)?)
}

/// Writes 8-bit RGB, rounding to the nearest level.
pub fn write_png(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(img.data.len() * 3);
    for px in &img.data {
        buf.extend(px.iter().map(|&c| (c.clamp(0.0, 1.0) * 255.0 + 0.5) as u8));
    }
    image::save_buffer(path, &buf, img.width as u32, img.height as u32, image::ColorType::Rgb8).map_err(
        |source| Error::Image {
            path: path.to_path_buf(),
            source,
        },
    )
}
