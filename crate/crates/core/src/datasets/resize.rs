use super::Image;

/// Bilinear resampling with pixel-center alignment. Non-square sources are
/// stretched to the target shape.
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Image {
    if img.height == out_h && img.width == out_w {
        return img.clone();
    }
    let c = img.channels;
    let mut pixels = vec![0.0; out_h * out_w * c];
    let sy = img.height as f64 / out_h as f64;
    let sx = img.width as f64 / out_w as f64;
    let at = |y: usize, x: usize, ch: usize| img.pixels[(y * img.width + x) * c + ch];
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let wy = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let top = at(y0, x0, ch) * (1.0 - wx) + at(y0, x1, ch) * wx;
                let bottom = at(y1, x0, ch) * (1.0 - wx) + at(y1, x1, ch) * wx;
                let v = top * (1.0 - wy) + bottom * wy;
                pixels[(oy * out_w + ox) * c + ch] = v.clamp(0.0, 1.0);
            }
        }
    }
    Image {
        pixels,
        height: out_h,
        width: out_w,
        channels: c,
    }
}
