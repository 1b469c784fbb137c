//! Hexcone HSV model with hue in `[0, 1)`.

pub fn rgb_to_hsv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta <= 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    [if h >= 1.0 { 0.0 } else { h }, s, max]
}

pub fn hsv_to_rgb(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    if s <= 0.0 {
        return [v, v, v];
    }
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u8 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Rewrites every pixel through `f` in HSV space.
pub(crate) fn map_hsv(img: &crate::Image, f: impl Fn([f64; 3]) -> [f64; 3]) -> crate::Image {
    let mut out = img.clone();
    for px in out.pixels_mut() {
        let hsv = rgb_to_hsv([px[0] as f64, px[1] as f64, px[2] as f64]);
        let rgb = hsv_to_rgb(f(hsv));
        for c in 0..3 {
            px[c] = rgb[c].clamp(0.0, 1.0) as f32;
        }
    }
    out
}
