//! Separable binomial pyramid operators on equirect images: longitude wraps,
//! latitude replicates. `upsample_adjoint` is the exact transpose of
//! `upsample`, which the level-gradient pass relies on.

use crate::img::ImageRgb;
use crate::num::Real;

/// 5-tap binomial kernel [1,4,6,4,1]/16.
const KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[inline]
fn wrap(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

#[inline]
fn reflect_idx(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    loop {
        if i < 0 {
            i = -i;
        } else if i > n - 1 {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
        if n == 1 {
            return 0;
        }
    }
}

/// Horizontal blur with wraparound, scaled by `gain`.
fn blur_x<T: Real>(src: &ImageRgb<T>, gain: T) -> ImageRgb<T> {
    let mut out = ImageRgb::zeros(src.w, src.h);
    for y in 0..src.h {
        for x in 0..src.w {
            let mut acc = [T::zero(); 3];
            for (k, &wk) in KERNEL.iter().enumerate() {
                let sx = wrap(x as i64 + k as i64 - 2, src.w);
                let i = (y * src.w + sx) * 3;
                let w = T::of(wk);
                acc[0] = acc[0] + src.data[i] * w;
                acc[1] = acc[1] + src.data[i + 1] * w;
                acc[2] = acc[2] + src.data[i + 2] * w;
            }
            let o = (y * out.w + x) * 3;
            out.data[o] = acc[0] * gain;
            out.data[o + 1] = acc[1] * gain;
            out.data[o + 2] = acc[2] * gain;
        }
    }
    out
}

/// Vertical blur with mirror reflection at the poles, scaled by `gain`.
/// Reflection about an even index preserves tap parity, which keeps
/// zero-insertion upsampling exact on constants.
fn blur_y<T: Real>(src: &ImageRgb<T>, gain: T) -> ImageRgb<T> {
    let mut out = ImageRgb::zeros(src.w, src.h);
    for y in 0..src.h {
        for x in 0..src.w {
            let mut acc = [T::zero(); 3];
            for (k, &wk) in KERNEL.iter().enumerate() {
                let sy = reflect_idx(y as i64 + k as i64 - 2, src.h);
                let i = (sy * src.w + x) * 3;
                let w = T::of(wk);
                acc[0] = acc[0] + src.data[i] * w;
                acc[1] = acc[1] + src.data[i + 1] * w;
                acc[2] = acc[2] + src.data[i + 2] * w;
            }
            let o = (y * out.w + x) * 3;
            out.data[o] = acc[0] * gain;
            out.data[o + 1] = acc[1] * gain;
            out.data[o + 2] = acc[2] * gain;
        }
    }
    out
}

/// Transpose of [`blur_x`] (scatter with the same kernel and wraparound).
fn blur_x_adjoint<T: Real>(d_out: &ImageRgb<T>, gain: T) -> ImageRgb<T> {
    let mut d_src = ImageRgb::zeros(d_out.w, d_out.h);
    for y in 0..d_out.h {
        for x in 0..d_out.w {
            let o = (y * d_out.w + x) * 3;
            for (k, &wk) in KERNEL.iter().enumerate() {
                let sx = wrap(x as i64 + k as i64 - 2, d_out.w);
                let i = (y * d_out.w + sx) * 3;
                let w = T::of(wk) * gain;
                d_src.data[i] = d_src.data[i] + d_out.data[o] * w;
                d_src.data[i + 1] = d_src.data[i + 1] + d_out.data[o + 1] * w;
                d_src.data[i + 2] = d_src.data[i + 2] + d_out.data[o + 2] * w;
            }
        }
    }
    d_src
}

/// Transpose of [`blur_y`].
fn blur_y_adjoint<T: Real>(d_out: &ImageRgb<T>, gain: T) -> ImageRgb<T> {
    let mut d_src = ImageRgb::zeros(d_out.w, d_out.h);
    for y in 0..d_out.h {
        for x in 0..d_out.w {
            let o = (y * d_out.w + x) * 3;
            for (k, &wk) in KERNEL.iter().enumerate() {
                let sy = reflect_idx(y as i64 + k as i64 - 2, d_out.h);
                let i = (sy * d_out.w + x) * 3;
                let w = T::of(wk) * gain;
                d_src.data[i] = d_src.data[i] + d_out.data[o] * w;
                d_src.data[i + 1] = d_src.data[i + 1] + d_out.data[o + 1] * w;
                d_src.data[i + 2] = d_src.data[i + 2] + d_out.data[o + 2] * w;
            }
        }
    }
    d_src
}

/// Binomial blur (unit gain), both axes.
pub fn blur_separable<T: Real>(src: &ImageRgb<T>) -> ImageRgb<T> {
    blur_y(&blur_x(src, T::one()), T::one())
}

/// Blur then decimate by 2 in both axes.
pub fn downsample<T: Real>(src: &ImageRgb<T>) -> ImageRgb<T> {
    debug_assert!(src.w % 2 == 0 && src.h % 2 == 0);
    let blurred = blur_separable(src);
    let (w, h) = (src.w / 2, src.h / 2);
    let mut out = ImageRgb::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set_px(x, y, blurred.px(2 * x, 2 * y));
        }
    }
    out
}

/// Zero-insert to (w, h) then blur with x2 gain per axis (so constants are
/// reproduced exactly).
pub fn upsample<T: Real>(src: &ImageRgb<T>, w: usize, h: usize) -> ImageRgb<T> {
    debug_assert_eq!((src.w * 2, src.h * 2), (w, h));
    let mut z = ImageRgb::zeros(w, h);
    for y in 0..src.h {
        for x in 0..src.w {
            z.set_px(2 * x, 2 * y, src.px(x, y));
        }
    }
    let two = T::of(2.0);
    blur_y(&blur_x(&z, two), two)
}

/// Exact transpose of [`upsample`]: blur adjoints then take the even taps.
pub fn upsample_adjoint<T: Real>(d_up: &ImageRgb<T>, src_w: usize, src_h: usize) -> ImageRgb<T> {
    debug_assert_eq!((src_w * 2, src_h * 2), (d_up.w, d_up.h));
    let two = T::of(2.0);
    let d_z = blur_x_adjoint(&blur_y_adjoint(d_up, two), two);
    let mut d_src = ImageRgb::zeros(src_w, src_h);
    for y in 0..src_h {
        for x in 0..src_w {
            d_src.set_px(x, y, d_z.px(2 * x, 2 * y));
        }
    }
    d_src
}
