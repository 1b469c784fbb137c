//! Convolution and resampling on single-channel planes.
//!
//! Boundaries use symmetric reflection (`d c b a | a b c d | d c b a`), which
//! keeps the total intensity unchanged under any symmetric normalized kernel.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::image::Image;

/// Maps any integer coordinate into `0..n` by repeated symmetric reflection.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Odd-sized square kernel, stored row-major. Center at `(radius, radius)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel2D {
    pub fn new(size: usize, weights: Vec<f64>) -> Self {
        assert!(size % 2 == 1, "kernel size must be odd");
        assert_eq!(weights.len(), size * size);
        Self { size, weights }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius() as isize;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        self.weights[((dy + r) as usize) * self.size + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn normalized(mut self) -> Self {
        let s = self.sum();
        assert!(s > 0.0, "kernel has no mass");
        for w in &mut self.weights {
            *w /= s;
        }
        self
    }

    /// Normalized disk of the given radius (`x² + y² <= r²`).
    pub fn disk(radius: u32) -> Self {
        let r = radius as isize;
        let size = 2 * radius as usize + 1;
        let mut weights = Vec::with_capacity(size * size);
        for y in -r..=r {
            for x in -r..=r {
                weights.push(if x * x + y * y <= r * r { 1.0 } else { 0.0 });
            }
        }
        Self::new(size, weights).normalized()
    }
}

/// Normalized 1D Gaussian truncated at four standard deviations.
pub fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0);
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// Separable convolution of one plane with a symmetric 1D kernel on both axes.
pub fn convolve_separable(plane: &[f32], width: usize, height: usize, kernel: &[f64]) -> Vec<f32> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0f64; width * height];
    tmp.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let src = &plane[y * width..(y + 1) * width];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, w) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + i as isize - r, width);
                acc += w * src[sx] as f64;
            }
            *out = acc;
        }
    });
    let mut out = vec![0f32; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, w) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + i as isize - r, height);
                acc += w * tmp[sy * width + x];
            }
            *o = acc as f32;
        }
    });
    out
}

pub fn gaussian_blur_image(img: &Image, sigma: f64) -> Image {
    let kernel = gaussian_kernel_1d(sigma);
    map_planes(img, |p, w, h| convolve_separable(p, w, h, &kernel))
}

/// Applies `f` to each channel plane independently.
pub fn map_planes(img: &Image, f: impl Fn(&[f32], usize, usize) -> Vec<f32> + Sync) -> Image {
    let (w, h) = img.dims();
    let planes = img.to_planes();
    let out: Vec<Vec<f32>> = planes.par_iter().map(|p| f(p, w, h)).collect();
    let out: [Vec<f32>; 3] = out.try_into().expect("three planes");
    Image::from_planes(w, h, &out)
}

/// Rectangular output region `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

/// Kernels at or below this many taps use direct summation; larger ones go through the FFT.
const DIRECT_TAP_LIMIT: usize = 15 * 15;

/// True 2D convolution `out(p) = Σ_d K(d) I(p - d)` over the full plane.
pub fn convolve2d(plane: &[f32], width: usize, height: usize, kernel: &Kernel2D) -> Vec<f64> {
    convolve2d_region(plane, width, height, kernel, Region::full(width, height))
}

/// Convolution evaluated only inside `region`; input is read with reflection.
pub fn convolve2d_region(plane: &[f32], width: usize, height: usize, kernel: &Kernel2D, region: Region) -> Vec<f64> {
    if kernel.weights.len() <= DIRECT_TAP_LIMIT {
        return convolve_direct(plane, width, height, kernel, region);
    }
    let r = kernel.radius();
    let padded =
        fast_len(region.width() + 2 * r + kernel.size - 1) * fast_len(region.height() + 2 * r + kernel.size - 1);
    if 4 * width * height < padded {
        convolve_periodic(plane, width, height, kernel, region)
    } else {
        convolve_fft(plane, width, height, kernel, region)
    }
}

/// Reflection makes the input periodic with period `2w × 2h`, so a kernel wider
/// than the image can be folded onto one period and applied circularly.
pub(crate) fn convolve_periodic(
    plane: &[f32],
    width: usize,
    height: usize,
    kernel: &Kernel2D,
    region: Region,
) -> Vec<f64> {
    let (pw, ph) = (2 * width, 2 * height);
    let r = kernel.radius() as isize;
    let k = kernel.size;
    let mut folded = vec![0f64; pw * ph];
    for ky in 0..k {
        let dy = (ky as isize - r).rem_euclid(ph as isize) as usize;
        for kx in 0..k {
            let dx = (kx as isize - r).rem_euclid(pw as isize) as usize;
            folded[dy * pw + dx] += kernel.weights[ky * k + kx];
        }
    }
    let taps: Vec<(usize, usize, f64)> = folded
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(i, &w)| (i % pw, i / pw, w))
        .collect();
    let rw = region.width();
    let direct_cost = taps.len() * rw * region.height();
    let fft_cost = 30 * pw * ph * ((pw * ph) as f64).log2().ceil() as usize;
    if direct_cost <= fft_cost {
        let mut out = vec![0f64; rw * region.height()];
        out.par_chunks_mut(rw).enumerate().for_each(|(ry, row)| {
            let y = region.y0 + ry;
            for (rx, o) in row.iter_mut().enumerate() {
                let x = region.x0 + rx;
                let mut acc = 0.0;
                for &(dx, dy, w) in &taps {
                    let sx = reflect(x as isize - dx as isize, width);
                    let sy = reflect(y as isize - dy as isize, height);
                    acc += w * plane[sy * width + sx] as f64;
                }
                *o = acc;
            }
        });
        return out;
    }
    let fft = Fft2::new(pw, ph);
    let mut a = vec![Complex::new(0.0, 0.0); pw * ph];
    for y in 0..ph {
        let sy = reflect(y as isize, height);
        for x in 0..pw {
            a[y * pw + x].re = plane[sy * width + reflect(x as isize, width)] as f64;
        }
    }
    let mut b: Vec<Complex<f64>> = folded.iter().map(|&w| Complex::new(w, 0.0)).collect();
    fft.transform(&mut a, false);
    fft.transform(&mut b, false);
    a.par_iter_mut().zip(b.par_iter()).for_each(|(x, y)| *x *= *y);
    fft.transform(&mut a, true);
    let scale = 1.0 / (pw * ph) as f64;
    let mut out = vec![0f64; rw * region.height()];
    for y in 0..region.height() {
        for x in 0..rw {
            out[y * rw + x] = a[(region.y0 + y) * pw + region.x0 + x].re * scale;
        }
    }
    out
}

pub(crate) fn convolve_direct(
    plane: &[f32],
    width: usize,
    height: usize,
    kernel: &Kernel2D,
    region: Region,
) -> Vec<f64> {
    let r = kernel.radius() as isize;
    let k = kernel.size;
    let taps: Vec<(isize, isize, f64)> = (0..k * k)
        .filter(|&i| kernel.weights[i] != 0.0)
        .map(|i| ((i % k) as isize - r, (i / k) as isize - r, kernel.weights[i]))
        .collect();
    let rw = region.width();
    let mut out = vec![0f64; rw * region.height()];
    out.par_chunks_mut(rw).enumerate().for_each(|(ry, row)| {
        let y = (region.y0 + ry) as isize;
        for (rx, o) in row.iter_mut().enumerate() {
            let x = (region.x0 + rx) as isize;
            let mut acc = 0.0;
            for &(dx, dy, w) in &taps {
                let sx = reflect(x - dx, width);
                let sy = reflect(y - dy, height);
                acc += w * plane[sy * width + sx] as f64;
            }
            *o = acc;
        }
    });
    out
}

fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut t = m;
        for p in [2, 3, 5, 7] {
            while t.is_multiple_of(p) {
                t /= p;
            }
        }
        if t == 1 {
            return m;
        }
        m += 1;
    }
}

struct Fft2 {
    w: usize,
    h: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(w: usize, h: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            w,
            h,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    fn transform(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        buf.par_chunks_mut(self.w).for_each(|r| row.process(r));
        let mut t = transpose(buf, self.w, self.h);
        t.par_chunks_mut(self.h).for_each(|c| col.process(c));
        let back = transpose(&t, self.h, self.w);
        buf.copy_from_slice(&back);
    }
}

fn transpose(buf: &[Complex<f64>], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = buf[y * w + x];
        }
    }
    out
}

pub(crate) fn convolve_fft(plane: &[f32], width: usize, height: usize, kernel: &Kernel2D, region: Region) -> Vec<f64> {
    let r = kernel.radius();
    let k = kernel.size;
    // Padded crop: region grown by r on each side, read with reflection.
    let pw = region.width() + 2 * r;
    let ph = region.height() + 2 * r;
    let fw = fast_len(pw + k - 1);
    let fh = fast_len(ph + k - 1);
    let fft = Fft2::new(fw, fh);

    let mut a = vec![Complex::new(0.0, 0.0); fw * fh];
    for py in 0..ph {
        let sy = reflect(region.y0 as isize + py as isize - r as isize, height);
        for px in 0..pw {
            let sx = reflect(region.x0 as isize + px as isize - r as isize, width);
            a[py * fw + px].re = plane[sy * width + sx] as f64;
        }
    }
    let mut b = vec![Complex::new(0.0, 0.0); fw * fh];
    for ky in 0..k {
        for kx in 0..k {
            b[ky * fw + kx].re = kernel.weights[ky * k + kx];
        }
    }
    fft.transform(&mut a, false);
    fft.transform(&mut b, false);
    a.par_iter_mut().zip(b.par_iter()).for_each(|(x, y)| *x *= *y);
    fft.transform(&mut a, true);
    let scale = 1.0 / (fw * fh) as f64;

    // Full linear convolution C(a) = Σ K(kk) P(a - kk); output pixel q sits at C(q + 2r).
    let rw = region.width();
    let mut out = vec![0f64; rw * region.height()];
    for y in 0..region.height() {
        for x in 0..rw {
            out[y * rw + x] = a[(y + 2 * r) * fw + x + 2 * r].re * scale;
        }
    }
    out
}

/// Convolves every channel of `img` with `kernel`, clamping the result.
pub fn convolve_image(img: &Image, kernel: &Kernel2D) -> Image {
    let mut out = map_planes(img, |p, w, h| {
        convolve2d(p, w, h, kernel).into_iter().map(|v| v as f32).collect()
    });
    out.clamp_in_place();
    out
}

/// Bilinear sample at a real-valued position with reflected boundary.
pub fn sample_bilinear(plane: &[f32], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |xi: isize, yi: isize| plane[reflect(yi, height) * width + reflect(xi, width)] as f64;
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
    let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Area-weighted (box filter) resampling of one axis.
fn box_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let mut taps = Vec::new();
            let mut j = lo.floor() as usize;
            while (j as f64) < hi && j < src {
                let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((j, overlap));
                }
                j += 1;
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Box-filter resize of a plane to `dst_w x dst_h`.
pub fn resize_box(plane: &[f32], width: usize, height: usize, dst_w: usize, dst_h: usize) -> Vec<f32> {
    let wx = box_weights(width, dst_w);
    let wy = box_weights(height, dst_h);
    let mut tmp = vec![0f64; dst_w * height];
    for y in 0..height {
        for (x, taps) in wx.iter().enumerate() {
            tmp[y * dst_w + x] = taps.iter().map(|&(j, w)| w * plane[y * width + j] as f64).sum();
        }
    }
    let mut out = vec![0f32; dst_w * dst_h];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..dst_w {
            out[y * dst_w + x] = taps.iter().map(|&(j, w)| w * tmp[j * dst_w + x]).sum::<f64>() as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Vec<f32> {
        (0..w * h).map(|i| ((i * 37) % 101) as f32 / 100.0).collect()
    }

    fn oracle_conv(plane: &[f32], w: usize, h: usize, k: &Kernel2D) -> Vec<f64> {
        let r = k.radius() as isize;
        let mut out = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        acc += k.at(dx, dy) * plane[reflect(y - dy, h) * w + reflect(x - dx, w)] as f64;
                    }
                }
                out[(y as usize) * w + x as usize] = acc;
            }
        }
        out
    }

    #[test]
    fn reflect_is_symmetric_with_edge_duplication() {
        let n = 4;
        let got: Vec<usize> = (-5..9).map(|i| reflect(i, n)).collect();
        assert_eq!(got, vec![3, 3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0, 0]);
        assert_eq!(reflect(0, 1), 0);
        assert_eq!(reflect(-3, 1), 0);
    }

    #[test]
    fn fft_matches_direct() {
        let (w, h) = (23, 17);
        let plane = ramp(w, h);
        let weights: Vec<f64> = (0..21 * 21).map(|i| ((i * 7) % 13) as f64 + 0.5).collect();
        let k = Kernel2D::new(21, weights).normalized();
        let direct = convolve_direct(&plane, w, h, &k, Region::full(w, h));
        let fft = convolve_fft(&plane, w, h, &k, Region::full(w, h));
        let oracle = oracle_conv(&plane, w, h, &k);
        for i in 0..w * h {
            assert!((direct[i] - oracle[i]).abs() < 1e-12);
            assert!((fft[i] - oracle[i]).abs() < 1e-9, "{} vs {}", fft[i], oracle[i]);
        }
    }

    #[test]
    fn periodic_matches_oracle_for_kernels_wider_than_image() {
        for (w, h, size) in [(7, 5, 21), (23, 17, 61)] {
            let plane = ramp(w, h);
            let weights: Vec<f64> = (0..size * size).map(|i| ((i * 11) % 17) as f64 + 0.25).collect();
            let k = Kernel2D::new(size, weights).normalized();
            let got = convolve_periodic(&plane, w, h, &k, Region::full(w, h));
            let oracle = oracle_conv(&plane, w, h, &k);
            for i in 0..w * h {
                assert!(
                    (got[i] - oracle[i]).abs() < 1e-9,
                    "{w}x{h}: {} vs {}",
                    got[i],
                    oracle[i]
                );
            }
        }
    }

    #[test]
    fn region_matches_full() {
        let (w, h) = (20, 14);
        let plane = ramp(w, h);
        let k = Kernel2D::disk(2);
        let full = convolve2d(&plane, w, h, &k);
        let region = Region {
            x0: 3,
            y0: 5,
            x1: 11,
            y1: 9,
        };
        for conv in [convolve_direct, convolve_fft, convolve_periodic] {
            let part = conv(&plane, w, h, &k, region);
            for y in 0..region.height() {
                for x in 0..region.width() {
                    let a = part[y * region.width() + x];
                    let b = full[(y + region.y0) * w + x + region.x0];
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn separable_gaussian_conserves_mass() {
        let (w, h) = (31, 19);
        let plane = ramp(w, h);
        let before: f64 = plane.iter().map(|&v| v as f64).sum();
        let out = convolve_separable(&plane, w, h, &gaussian_kernel_1d(3.0));
        let after: f64 = out.iter().map(|&v| v as f64).sum();
        assert!((before - after).abs() / (w * h) as f64 <= 1e-6);
    }

    #[test]
    fn disk_kernel_normalized() {
        for r in [3, 4, 6, 8, 10] {
            let k = Kernel2D::disk(r);
            assert_eq!(k.radius(), r as usize);
            assert!((k.sum() - 1.0).abs() < 1e-9);
            assert!(k.at(r as isize, 0) > 0.0);
            assert_eq!(k.at(r as isize, r as isize), 0.0);
        }
    }

    #[test]
    fn box_resize_averages_blocks() {
        let (w, h) = (8, 4);
        let plane: Vec<f32> = (0..w * h).map(|i| ((i % w + i / w) % 2) as f32).collect();
        let down = resize_box(&plane, w, h, 2, 1);
        assert!(down.iter().all(|&v| (v - 0.5).abs() < 1e-6));
        let up = resize_box(&[0.25, 0.75], 2, 1, 4, 1);
        assert_eq!(up, vec![0.25, 0.25, 0.75, 0.75]);
    }
}
