//! 8-bit binary PGM/PPM frames as `[H, W, C]` tensors in `[0, 1]`.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::tensor::RealTensor;

pub fn read_pnm(path: &Path) -> Result<RealTensor> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, bytes) = match img {
        DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
        other => (3, other.to_rgb8().into_raw()),
    };
    RealTensor::new(
        vec![h, w, channels],
        bytes.into_iter().map(|b| f64::from(b) / 255.0).collect(),
    )
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 1-channel tensor as PGM or a 3-channel tensor as PPM.
pub fn write_pnm(path: &Path, img: &RealTensor) -> Result<()> {
    img.expect_rank(3)?;
    let (h, w, c) = (img.shape()[0] as u32, img.shape()[1] as u32, img.shape()[2]);
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let (subtype, color) = match c {
        1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
        3 => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
        _ => return Err(Error::shape(format!("cannot write {c}-channel image as PNM"))),
    };
    let image_err = |source| Error::Image {
        path: path.to_path_buf(),
        source,
    };
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(subtype)
        .write_image(&bytes, w, h, color)
        .map_err(image_err)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
