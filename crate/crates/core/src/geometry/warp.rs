use super::transform::TransformModel;
use super::GeoError;
use crate::tensor_io::RasterImage;

/// Bilinear sample of channel `c` at continuous pixel coordinate `(u, v)`,
/// where pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`. Returns `None`
/// outside the image.
fn bilinear(img: &RasterImage, u: f64, v: f64, c: usize) -> Option<f64> {
    let (w, h) = (img.width(), img.height());
    if !(u >= 0.0 && v >= 0.0 && u < w as f64 && v < h as f64) {
        return None;
    }
    let fx = (u - 0.5).clamp(0.0, (w - 1) as f64);
    let fy = (v - 0.5).clamp(0.0, (h - 1) as f64);
    let x0 = fx.floor() as usize;
    let y0 = fy.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let ax = fx - x0 as f64;
    let ay = fy - y0 as f64;

    let p = |x: usize, y: usize| img.get(x, y, c) as f64;
    let top = p(x0, y0) + ax * (p(x1, y0) - p(x0, y0));
    let bottom = p(x0, y1) + ax * (p(x1, y1) - p(x0, y1));
    Some(top + ay * (bottom - top))
}

/// Resamples `img` (a query image) into the reference frame of `t`: each
/// output pixel center is pulled back through `t^-1` and bilinearly sampled.
/// Samples falling outside the source are 0.
pub fn warp_image(
    img: &RasterImage,
    t: &TransformModel,
    out_width: usize,
    out_height: usize,
) -> Result<RasterImage, GeoError> {
    let inv = t.inverse()?;
    let channels = img.channels();
    let mut out = RasterImage::zeros(out_width, out_height, channels)
        .map_err(|e| GeoError::InvalidModel(e.to_string()))?;
    for y in 0..out_height {
        for x in 0..out_width {
            let Ok((u, v)) = inv.apply((x as f64 + 0.5, y as f64 + 0.5)) else {
                continue;
            };
            for c in 0..channels {
                if let Some(val) = bilinear(img, u, v, c) {
                    out.set(x, y, c, val.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
    }
    Ok(out)
}
