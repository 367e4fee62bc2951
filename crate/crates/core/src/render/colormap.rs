//! Blue–white–red diverging colormap.

use image::{Rgb, RgbImage};

use crate::render::interpolate::TopoImage;

pub const WHITE: [u8; 3] = [255, 255, 255];

fn channel(x: f64) -> u8 {
    (255.0 * x + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// `-vmax` is pure blue, 0 pure white, `+vmax` pure red; each channel is a
/// linear ramp rounded half up. `vmax = 0` maps everything to white.
pub fn color(v: f64, vmax: f64) -> [u8; 3] {
    if !(vmax > 0.0) || !v.is_finite() {
        return WHITE;
    }
    let t = (v / vmax).clamp(-1.0, 1.0);
    if t < 0.0 {
        let c = channel(1.0 + t);
        [c, c, 255]
    } else {
        let c = channel(1.0 - t);
        [255, c, c]
    }
}

/// RGB raster of a map; pixels outside the hull are white.
pub fn colorize(img: &TopoImage) -> RgbImage {
    let r = img.resolution() as u32;
    RgbImage::from_fn(r, r, |x, y| {
        let (row, col) = (y as usize, x as usize);
        if img.mask[[row, col]] {
            Rgb(color(img.field[[row, col]], img.vmax))
        } else {
            Rgb(WHITE)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_center() {
        assert_eq!(color(0.0, 2.0), [255, 255, 255]);
        assert_eq!(color(2.0, 2.0), [255, 0, 0]);
        assert_eq!(color(-2.0, 2.0), [0, 0, 255]);
        assert_eq!(color(3.0, 0.0), WHITE);
    }

    #[test]
    fn half_negative_rounds_up() {
        // 255 * 0.5 = 127.5 → 128
        assert_eq!(color(-1.0, 2.0), [128, 128, 255]);
        assert_eq!(color(1.0, 2.0), [255, 128, 128]);
    }

    #[test]
    fn masked_pixels_are_white() {
        let img = TopoImage {
            field: Array2::from_elem((2, 2), 1.0),
            mask: ndarray::array![[true, false], [false, true]],
            group_id: "g".into(),
            vmax: 1.0,
        };
        let rgb = colorize(&img);
        assert_eq!(rgb.get_pixel(0, 0).0, [255, 0, 0]);
        assert_eq!(rgb.get_pixel(1, 0).0, WHITE);
    }

    proptest! {
        #[test]
        fn negation_swaps_red_and_blue(v in -10.0f64..10.0, vmax in 0.1f64..10.0) {
            let a = color(v, vmax);
            let b = color(-v, vmax);
            prop_assert_eq!([a[2], a[1], a[0]], b);
        }
    }
}
