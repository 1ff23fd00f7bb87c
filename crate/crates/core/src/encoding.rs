//! Input encodings for the decoders: Fourier features, real spherical
//! harmonics up to degree 4, and the roughness-attenuated integrated
//! directional encoding of the reflected view vector.

use crate::math::Vec3;
use crate::num::Real;

/// Number of outputs of [`fourier_features`] for `dim` inputs.
pub fn fourier_len(dim: usize, n_freq: usize) -> usize {
    dim * (1 + 2 * n_freq)
}

/// [v, sin(2^k pi v), cos(2^k pi v)] for k = 0..n_freq-1, per input entry.
pub fn fourier_features<T: Real>(v: &[T], n_freq: usize, out: &mut Vec<T>) {
    out.extend_from_slice(v);
    for k in 0..n_freq {
        let w = T::of((1u64 << k) as f64) * T::PI();
        for &x in v {
            out.push((w * x).sin());
        }
        for &x in v {
            out.push((w * x).cos());
        }
    }
}

/// Chain rule through [`fourier_features`]: accumulates d(out)/d(v) * d_out
/// into `d_v`.
pub fn fourier_backward<T: Real>(v: &[T], n_freq: usize, d_out: &[T], d_v: &mut [T]) {
    let dim = v.len();
    for (dv, d) in d_v.iter_mut().zip(d_out) {
        *dv = *dv + *d;
    }
    for k in 0..n_freq {
        let w = T::of((1u64 << k) as f64) * T::PI();
        let base = dim * (1 + 2 * k);
        for (i, &x) in v.iter().enumerate() {
            d_v[i] = d_v[i] + d_out[base + i] * w * (w * x).cos();
            d_v[i] = d_v[i] - d_out[base + dim + i] * w * (w * x).sin();
        }
    }
}

/// Real spherical harmonics basis size for degrees 0..=l_max.
pub const fn sh_len(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

pub const SH4_LEN: usize = sh_len(4);

/// Degree of the i-th coefficient in band-major order.
pub fn sh_degree(i: usize) -> usize {
    (i as f64).sqrt() as usize
}

/// Real spherical harmonics up to degree 4 evaluated at a unit direction,
/// band-major (l ascending, m from -l to l).
pub fn eval_sh4<T: Real>(d: Vec3<T>) -> [T; SH4_LEN] {
    let (x, y, z) = (d.x, d.y, d.z);
    let pi = T::PI();
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let c = |v: f64| T::of(v);

    let c00 = (T::one() / (T::of(4.0) * pi)).sqrt();
    let c1 = (T::of(3.0) / (T::of(4.0) * pi)).sqrt();
    let c2a = c(0.5) * (T::of(15.0) / pi).sqrt();
    let c2b = c(0.25) * (T::of(5.0) / pi).sqrt();
    let c2c = c(0.25) * (T::of(15.0) / pi).sqrt();
    let c3a = c(0.25) * (T::of(17.5) / pi).sqrt();
    let c3b = c(0.5) * (T::of(105.0) / pi).sqrt();
    let c3c = c(0.25) * (T::of(10.5) / pi).sqrt();
    let c3d = c(0.25) * (T::of(7.0) / pi).sqrt();
    let c3e = c(0.25) * (T::of(105.0) / pi).sqrt();
    let c4a = c(0.75) * (T::of(35.0) / pi).sqrt();
    let c4b = c(0.75) * (T::of(17.5) / pi).sqrt();
    let c4c = c(0.75) * (T::of(5.0) / pi).sqrt();
    let c4d = c(0.75) * (T::of(2.5) / pi).sqrt();
    let c4e = c(0.1875) * (T::one() / pi).sqrt();
    let c4f = c(0.375) * (T::of(5.0) / pi).sqrt();
    let c4g = c(0.1875) * (T::of(35.0) / pi).sqrt();

    [
        c00,
        c1 * y,
        c1 * z,
        c1 * x,
        c2a * x * y,
        c2a * y * z,
        c2b * (T::of(3.0) * z2 - T::one()),
        c2a * x * z,
        c2c * (x2 - y2),
        c3a * y * (T::of(3.0) * x2 - y2),
        c3b * x * y * z,
        c3c * y * (T::of(5.0) * z2 - T::one()),
        c3d * z * (T::of(5.0) * z2 - T::of(3.0)),
        c3c * x * (T::of(5.0) * z2 - T::one()),
        c3e * z * (x2 - y2),
        c3a * x * (x2 - T::of(3.0) * y2),
        c4a * x * y * (x2 - y2),
        c4b * y * z * (T::of(3.0) * x2 - y2),
        c4c * x * y * (T::of(7.0) * z2 - T::one()),
        c4d * y * z * (T::of(7.0) * z2 - T::of(3.0)),
        c4e * (T::of(35.0) * z2 * z2 - T::of(30.0) * z2 + T::of(3.0)),
        c4d * x * z * (T::of(7.0) * z2 - T::of(3.0)),
        c4f * (x2 - y2) * (T::of(7.0) * z2 - T::one()),
        c4b * x * z * (x2 - T::of(3.0) * y2),
        c4g * (x2 * x2 - T::of(6.0) * x2 * y2 + y2 * y2),
    ]
}

/// Gradients of [`eval_sh4`] w.r.t. the three direction components (for the
/// fixed polynomial extension used in the forward pass).
pub fn eval_sh4_grad<T: Real>(d: Vec3<T>) -> [Vec3<T>; SH4_LEN] {
    let (x, y, z) = (d.x, d.y, d.z);
    let pi = T::PI();
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let c = |v: f64| T::of(v);
    let k2 = T::of(2.0);
    let k3 = T::of(3.0);
    let k5 = T::of(5.0);
    let k6 = T::of(6.0);
    let k7 = T::of(7.0);

    let c1 = (k3 / (T::of(4.0) * pi)).sqrt();
    let c2a = c(0.5) * (T::of(15.0) / pi).sqrt();
    let c2b = c(0.25) * (k5 / pi).sqrt();
    let c2c = c(0.25) * (T::of(15.0) / pi).sqrt();
    let c3a = c(0.25) * (T::of(17.5) / pi).sqrt();
    let c3b = c(0.5) * (T::of(105.0) / pi).sqrt();
    let c3c = c(0.25) * (T::of(10.5) / pi).sqrt();
    let c3d = c(0.25) * (k7 / pi).sqrt();
    let c3e = c(0.25) * (T::of(105.0) / pi).sqrt();
    let c4a = c(0.75) * (T::of(35.0) / pi).sqrt();
    let c4b = c(0.75) * (T::of(17.5) / pi).sqrt();
    let c4c = c(0.75) * (k5 / pi).sqrt();
    let c4d = c(0.75) * (T::of(2.5) / pi).sqrt();
    let c4e = c(0.1875) * (T::one() / pi).sqrt();
    let c4f = c(0.375) * (k5 / pi).sqrt();
    let c4g = c(0.1875) * (T::of(35.0) / pi).sqrt();
    let zero = T::zero();

    [
        Vec3::zero(),
        Vec3::new(zero, c1, zero),
        Vec3::new(zero, zero, c1),
        Vec3::new(c1, zero, zero),
        Vec3::new(c2a * y, c2a * x, zero),
        Vec3::new(zero, c2a * z, c2a * y),
        Vec3::new(zero, zero, c2b * k6 * z),
        Vec3::new(c2a * z, zero, c2a * x),
        Vec3::new(c2c * k2 * x, -c2c * k2 * y, zero),
        Vec3::new(c3a * k6 * x * y, c3a * k3 * (x2 - y2), zero),
        Vec3::new(c3b * y * z, c3b * x * z, c3b * x * y),
        Vec3::new(zero, c3c * (k5 * z2 - T::one()), c3c * y * T::of(10.0) * z),
        Vec3::new(zero, zero, c3d * (T::of(15.0) * z2 - k3)),
        Vec3::new(c3c * (k5 * z2 - T::one()), zero, c3c * x * T::of(10.0) * z),
        Vec3::new(c3e * k2 * x * z, -c3e * k2 * y * z, c3e * (x2 - y2)),
        Vec3::new(c3a * k3 * (x2 - y2), -c3a * k6 * x * y, zero),
        Vec3::new(c4a * (k3 * x2 * y - y2 * y), c4a * (x2 * x - k3 * x * y2), zero),
        Vec3::new(c4b * k6 * x * y * z, c4b * k3 * z * (x2 - y2), c4b * y * (k3 * x2 - y2)),
        Vec3::new(c4c * y * (k7 * z2 - T::one()), c4c * x * (k7 * z2 - T::one()), c4c * x * y * T::of(14.0) * z),
        Vec3::new(zero, c4d * z * (k7 * z2 - k3), c4d * y * (T::of(21.0) * z2 - k3)),
        Vec3::new(zero, zero, c4e * (T::of(140.0) * z2 * z - T::of(60.0) * z)),
        Vec3::new(c4d * z * (k7 * z2 - k3), zero, c4d * x * (T::of(21.0) * z2 - k3)),
        Vec3::new(c4f * k2 * x * (k7 * z2 - T::one()), -c4f * k2 * y * (k7 * z2 - T::one()), c4f * T::of(14.0) * z * (x2 - y2)),
        Vec3::new(c4b * k3 * z * (x2 - y2), -c4b * k6 * x * y * z, c4b * x * (x2 - k3 * y2)),
        Vec3::new(c4g * (T::of(4.0) * x2 * x - T::of(12.0) * x * y2), c4g * (T::of(4.0) * y2 * y - T::of(12.0) * x2 * y), zero),
    ]
}

/// Band attenuation of the integrated directional encoding:
/// exp(-l(l+1) * kappa / 2) per degree l.
#[inline]
pub fn ide_attenuation<T: Real>(l: usize, kappa: T) -> T {
    let ll1 = T::of_usize(l * (l + 1));
    (-ll1 * kappa * T::of(0.5)).exp()
}

/// Integrated directional encoding: SH of the reflected direction with
/// roughness-attenuated bands.
pub fn ide_encode<T: Real>(omega_r: Vec3<T>, kappa: T) -> [T; SH4_LEN] {
    let mut sh = eval_sh4(omega_r);
    for (i, v) in sh.iter_mut().enumerate() {
        *v = *v * ide_attenuation(sh_degree(i), kappa);
    }
    sh
}

/// Backward for [`ide_encode`]: accumulates gradients w.r.t. the direction
/// and kappa from upstream coefficient gradients.
pub fn ide_backward<T: Real>(omega_r: Vec3<T>, kappa: T, d_out: &[T]) -> (Vec3<T>, T) {
    let sh = eval_sh4(omega_r);
    let grads = eval_sh4_grad(omega_r);
    let mut d_dir = Vec3::zero();
    let mut d_kappa = T::zero();
    for i in 0..SH4_LEN {
        let l = sh_degree(i);
        let att = ide_attenuation(l, kappa);
        d_dir += grads[i] * (d_out[i] * att);
        let ll1 = T::of_usize(l * (l + 1));
        d_kappa = d_kappa - d_out[i] * sh[i] * att * ll1 * T::of(0.5);
    }
    (d_dir, d_kappa)
}
