use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::numerics::bilinear_resize;
use crate::tensor::RealTensor;

/// Value used for crop area that falls outside the source frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropFill {
    /// Per-channel mean of the in-frame part of the crop (RGB).
    ChannelMean,
    /// Zero (event voxels: no event, no signal).
    Zero,
}

/// A square region resampled to `out_size x out_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionCrop {
    pub pixels: RealTensor,
    /// Top-left corner of the crop window in source pixels.
    pub x0: i64,
    pub y0: i64,
    /// Side of the crop window in source pixels.
    pub side: usize,
    /// Output pixels per source pixel.
    pub scale: f64,
}

impl RegionCrop {
    /// Square crop window in source pixel coordinates.
    pub fn window(&self) -> BBox {
        BBox::from_corner(self.x0 as f64, self.y0 as f64, self.side as f64, self.side as f64)
    }
}

/// Crops a square of side `factor * sqrt(w * h)` centered on `bbox` from an
/// `[H, W, C]` image and resizes it to `out_size`.
pub fn crop_region(img: &RealTensor, bbox: &BBox, factor: f64, out_size: usize, fill: CropFill) -> Result<RegionCrop> {
    img.expect_rank(3)?;
    if !bbox.is_valid() {
        return Err(Error::InvalidInput(format!("degenerate bounding box {bbox:?}")));
    }
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::param("factor", format!("must be positive, got {factor}")));
    }
    if out_size == 0 {
        return Err(Error::param("out_size", "must be positive"));
    }
    let (h, w, c) = (img.shape()[0] as i64, img.shape()[1] as i64, img.shape()[2]);
    let side = (factor * (bbox.w * bbox.h).sqrt()).round().max(1.0) as usize;
    let x0 = (bbox.cx - side as f64 / 2.0).round() as i64;
    let y0 = (bbox.cy - side as f64 / 2.0).round() as i64;

    let inside = |i: i64, j: i64| (0..h).contains(&i) && (0..w).contains(&j);
    let src = img.data();
    let fill_values = match fill {
        CropFill::Zero => vec![0.0; c],
        CropFill::ChannelMean => {
            let mut sums = vec![0.0; c];
            let mut count = 0usize;
            for i in y0..y0 + side as i64 {
                for j in x0..x0 + side as i64 {
                    if inside(i, j) {
                        let px = &src[((i * w + j) as usize) * c..][..c];
                        sums.iter_mut().zip(px).for_each(|(s, v)| *s += v);
                        count += 1;
                    }
                }
            }
            if count > 0 {
                sums.iter_mut().for_each(|s| *s /= count as f64);
            }
            sums
        }
    };

    let mut window = Vec::with_capacity(side * side * c);
    for i in y0..y0 + side as i64 {
        for j in x0..x0 + side as i64 {
            if inside(i, j) {
                window.extend_from_slice(&src[((i * w + j) as usize) * c..][..c]);
            } else {
                window.extend_from_slice(&fill_values);
            }
        }
    }
    let window = RealTensor::new(vec![side, side, c], window)?;
    Ok(RegionCrop {
        pixels: bilinear_resize(&window, out_size, out_size)?,
        x0,
        y0,
        side,
        scale: out_size as f64 / side as f64,
    })
}

/// Maps a box normalized to a crop (`[0, 1]` across the crop) back to source
/// pixels.
pub fn search_to_image(crop: &RegionCrop, normalized: &BBox) -> BBox {
    let s = crop.side as f64;
    BBox::new(
        crop.x0 as f64 + normalized.cx * s,
        crop.y0 as f64 + normalized.cy * s,
        normalized.w * s,
        normalized.h * s,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(h: usize, w: usize, c: usize) -> RealTensor {
        RealTensor::from_fn(&[h, w, c], |i| ((i * 31) % 97) as f64 / 97.0).unwrap()
    }

    #[test]
    fn interior_crop_equals_plain_resize() {
        let img = gradient(64, 64, 3);
        let crop = crop_region(&img, &BBox::new(32.0, 32.0, 10.0, 10.0), 2.0, 16, CropFill::ChannelMean).unwrap();
        assert_eq!((crop.x0, crop.y0, crop.side), (22, 22, 20));
        let mut square = Vec::new();
        for i in 22..42 {
            for j in 22..42 {
                for k in 0..3 {
                    square.push(*img.at(&[i, j, k]));
                }
            }
        }
        let square = RealTensor::new(vec![20, 20, 3], square).unwrap();
        assert_eq!(crop.pixels, bilinear_resize(&square, 16, 16).unwrap());
    }

    #[test]
    fn corner_crop_pads_with_fill() {
        let img = RealTensor::full(&[32, 32, 2], 0.25).unwrap();
        // Window [-8, 8) x [-8, 8): the top-left quadrant is off-frame.
        let crop = crop_region(&img, &BBox::new(0.0, 0.0, 8.0, 8.0), 2.0, 16, CropFill::Zero).unwrap();
        assert_eq!((crop.x0, crop.y0, crop.side), (-8, -8, 16));
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(*crop.pixels.at(&[i, j, 0]), 0.0);
            }
        }
        assert_eq!(*crop.pixels.at(&[12, 12, 1]), 0.25);
        let mean = crop_region(&img, &BBox::new(0.0, 0.0, 8.0, 8.0), 2.0, 16, CropFill::ChannelMean).unwrap();
        assert!(mean.pixels.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn template_factor_arithmetic() {
        let img = gradient(300, 300, 3);
        let crop = crop_region(&img, &BBox::new(150.0, 150.0, 64.0, 64.0), 2.0, 112, CropFill::ChannelMean).unwrap();
        assert_eq!(crop.side, 128);
        assert_eq!(crop.pixels.shape(), &[112, 112, 3]);
        assert!((crop.scale - 112.0 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        let img = gradient(8, 8, 1);
        assert!(crop_region(&img, &BBox::new(4.0, 4.0, 0.0, 3.0), 2.0, 4, CropFill::Zero).is_err());
        assert!(crop_region(&img, &BBox::new(4.0, 4.0, 3.0, -1.0), 2.0, 4, CropFill::Zero).is_err());
        assert!(crop_region(&img, &BBox::new(4.0, 4.0, 3.0, 3.0), 0.0, 4, CropFill::Zero).is_err());
    }

    #[test]
    fn normalized_boxes_map_back_to_pixels() {
        let img = gradient(64, 64, 1);
        let crop = crop_region(&img, &BBox::new(32.0, 32.0, 8.0, 8.0), 4.0, 32, CropFill::Zero).unwrap();
        let b = search_to_image(&crop, &BBox::new(0.5, 0.5, 0.25, 0.25));
        assert_eq!(b, BBox::new(32.0, 32.0, 8.0, 8.0));
    }
}
