use crate::geometry::{GeoError, TransformModel};
use crate::tensor_io::{IoError, RasterImage};

/// Affine rotation by `degrees` about the image center `(width/2, height/2)`.
///
/// Uses the standard matrix `[[cos, -sin], [sin, cos]]` on pixel coordinates.
/// Because the image y-axis points down, a positive angle appears clockwise
/// on screen.
pub fn rotate_about_center(degrees: f64, width: usize, height: usize) -> TransformModel {
    let (s, c) = degrees.to_radians().sin_cos();
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    TransformModel::affine([[c, -s, cx - c * cx + s * cy], [s, c, cy - s * cx - c * cy]])
}

/// Root mean squared distance between `predicted(p)` and `truth(p)` over the
/// pixel centers `p = (i + 0.5, j + 0.5)`, stepping by `grid_stride` pixels.
pub fn rmse(
    predicted: &TransformModel,
    truth: &TransformModel,
    width: usize,
    height: usize,
    grid_stride: usize,
) -> Result<f64, GeoError> {
    let g = grid_stride.max(1);
    let mut sum = 0.0;
    let mut count = 0usize;
    for j in (0..height).step_by(g) {
        for i in (0..width).step_by(g) {
            let p = (i as f64 + 0.5, j as f64 + 0.5);
            let a = predicted.apply(p)?;
            let b = truth.apply(p)?;
            sum += (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok((sum / count as f64).sqrt())
}

/// Alternating `tile`-sized squares: `a` where `floor(x/tile) + floor(y/tile)`
/// is even, `b` elsewhere.
pub fn checkerboard(a: &RasterImage, b: &RasterImage, tile: usize) -> Result<RasterImage, IoError> {
    if (a.width(), a.height(), a.channels()) != (b.width(), b.height(), b.channels()) {
        return Err(IoError::InvalidImage(format!(
            "checkerboard extent mismatch: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    if tile == 0 {
        return Err(IoError::InvalidImage("tile must be >= 1".into()));
    }
    let mut out = a.clone();
    for y in 0..a.height() {
        for x in 0..a.width() {
            if (x / tile + y / tile) % 2 == 1 {
                for c in 0..a.channels() {
                    out.set(x, y, c, b.get(x, y, c));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rotation_conventions() {
        let r0 = rotate_about_center(0.0, 256, 256);
        assert_eq!(r0.row_major(), TransformModel::identity().row_major());

        let r90 = rotate_about_center(90.0, 2, 2);
        let p = r90.apply((0.0, 0.0)).unwrap();
        assert!((p.0 - 2.0).abs() < 1e-12 && p.1.abs() < 1e-12);

        let back =
            rotate_about_center(-23.0, 300, 200).compose(&rotate_about_center(23.0, 300, 200));
        for (a, b) in back
            .row_major()
            .iter()
            .zip(TransformModel::identity().row_major())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rmse_basics() {
        let id = TransformModel::identity();
        assert_eq!(rmse(&id, &id, 64, 32, 1).unwrap(), 0.0);
        let t = TransformModel::translation(3.0, 4.0);
        assert_eq!(rmse(&id, &t, 64, 32, 1).unwrap(), 5.0);
        assert_eq!(rmse(&id, &t, 64, 32, 7).unwrap(), 5.0);
    }

    #[test]
    fn rmse_rotation_closed_form() {
        // mean of (i + 0.5 - n/2)^2 over i in 0..n is (n^2 - 1) / 12
        let n = 256usize;
        let theta = 10.0f64;
        let mean_r2 = 2.0 * ((n * n - 1) as f64 / 12.0);
        let expected = 2.0 * (theta.to_radians() / 2.0).sin() * mean_r2.sqrt();
        let got = rmse(
            &TransformModel::identity(),
            &rotate_about_center(theta, n, n),
            n,
            n,
            1,
        )
        .unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    fn img(w: usize, h: usize, v: u8) -> RasterImage {
        RasterImage::new(w, h, 1, vec![v; w * h]).unwrap()
    }

    #[test]
    fn checkerboard_cases() {
        let a = img(2, 2, 10);
        let b = img(2, 2, 200);
        assert_eq!(checkerboard(&a, &a, 64).unwrap(), a);
        assert_eq!(checkerboard(&a, &b, 1).unwrap().data(), &[10, 200, 200, 10]);
        assert_eq!(checkerboard(&a, &b, 2).unwrap(), a);
        assert!(checkerboard(&a, &img(3, 2, 0), 1).is_err());
    }

    proptest! {
        #[test]
        fn rmse_is_symmetric(a in -30.0f64..30.0, b in -30.0f64..30.0, tx in -5.0f64..5.0) {
            let p = rotate_about_center(a, 40, 30).compose(&TransformModel::translation(tx, 0.0));
            let q = rotate_about_center(b, 40, 30);
            prop_assert_eq!(rmse(&p, &q, 40, 30, 3).unwrap(), rmse(&q, &p, 40, 30, 3).unwrap());
            prop_assert_eq!(rmse(&p, &p, 40, 30, 3).unwrap(), 0.0);
        }

        #[test]
        fn checkerboard_partitions(tile in 1usize..9, seed in any::<u64>()) {
            let (w, h) = (13, 9);
            let a = RasterImage::new(w, h, 1, (0..w * h).map(|i| (i as u64 ^ seed) as u8 | 1).collect()).unwrap();
            let b = RasterImage::new(w, h, 1, vec![0; w * h]).unwrap();
            let ab = checkerboard(&a, &b, tile).unwrap();
            let ba = checkerboard(&b, &a, tile).unwrap();
            for i in 0..w * h {
                // exactly one of the two mosaics takes the nonzero pixel from a
                prop_assert!((ab.data()[i] == 0) != (ba.data()[i] == 0));
            }
        }
    }
}
