//! Torrance-Sparrow microfacet BRDF: Beckmann-Spizzichino normal
//! distribution, Smith masking-shadowing, Schlick Fresnel. Evaluation is
//! split into diffuse and specular terms; importance sampling draws
//! half-vectors from the visible-normal distribution.

use crate::decoders::MaterialSample;
use crate::math::{onb, reflect, Rgb, Vec3};
use crate::num::Real;

/// Roughness floor; avoids the singular mirror limit.
pub const RHO_MIN: f64 = 0.01;

const SQRT_PI_INV: f64 = 0.564_189_583_547_756_3;

#[derive(Clone, Copy, Debug)]
pub struct ShadingFrame<T> {
    pub n: Vec3<T>,
    pub t: Vec3<T>,
    pub b: Vec3<T>,
    /// Unit direction toward the viewer; specular evaluation requires
    /// dot(wo, n) > 0.
    pub wo: Vec3<T>,
}

impl<T: Real> ShadingFrame<T> {
    pub fn new(n: Vec3<T>, wo: Vec3<T>) -> Self {
        debug_assert!((n.norm() - T::one()).abs() < T::of(1e-4));
        let (t, b) = onb(n);
        Self { n, t, b, wo }
    }

    #[inline]
    pub fn to_local(&self, v: Vec3<T>) -> Vec3<T> {
        Vec3::new(v.dot(self.t), v.dot(self.b), v.dot(self.n))
    }

    #[inline]
    pub fn to_world(&self, v: Vec3<T>) -> Vec3<T> {
        self.t * v.x + self.b * v.y + self.n * v.z
    }
}

#[inline]
pub fn clamp_rho<T: Real>(rho: T) -> T {
    rho.max(T::of(RHO_MIN))
}

/// Beckmann-Spizzichino normal distribution; `cos_h` is the half-vector
/// cosine against the macro normal.
pub fn beckmann_d<T: Real>(cos_h: T, alpha: T) -> T {
    if cos_h <= T::zero() {
        return T::zero();
    }
    let c2 = cos_h * cos_h;
    let tan2 = (T::one() - c2) / c2;
    let a2 = alpha * alpha;
    (-tan2 / a2).exp() / (T::PI() * a2 * c2 * c2)
}

/// d/d(alpha) of [`beckmann_d`].
pub fn beckmann_d_dalpha<T: Real>(cos_h: T, alpha: T) -> T {
    if cos_h <= T::zero() {
        return T::zero();
    }
    let c2 = cos_h * cos_h;
    let tan2 = (T::one() - c2) / c2;
    let d = beckmann_d(cos_h, alpha);
    d * (T::of(2.0) * tan2 / (alpha * alpha * alpha) - T::of(2.0) / alpha)
}

/// Smith masking ratio a = 1/(alpha tan theta) for a direction cosine.
#[inline]
fn smith_a<T: Real>(cos_v: T, alpha: T) -> T {
    let c2 = cos_v * cos_v;
    let tan_v = ((T::one() - c2).max(T::zero()) / c2).sqrt();
    if tan_v <= T::zero() {
        T::infinity()
    } else {
        T::one() / (alpha * tan_v)
    }
}

/// Rational approximation of Smith's masking-shadowing G1 for Beckmann
/// (G1 = 1 for a >= 1.6).
pub fn smith_g1<T: Real>(cos_v: T, alpha: T) -> T {
    if cos_v <= T::zero() {
        return T::zero();
    }
    let a = smith_a(cos_v, alpha);
    if a >= T::of(1.6) {
        T::one()
    } else {
        (T::of(3.535) * a + T::of(2.181) * a * a)
            / (T::one() + T::of(2.276) * a + T::of(2.577) * a * a)
    }
}

/// d/d(alpha) of [`smith_g1`].
pub fn smith_g1_dalpha<T: Real>(cos_v: T, alpha: T) -> T {
    if cos_v <= T::zero() {
        return T::zero();
    }
    let a = smith_a(cos_v, alpha);
    if a >= T::of(1.6) || !a.is_finite() {
        return T::zero();
    }
    let num = T::of(3.535) * a + T::of(2.181) * a * a;
    let den = T::one() + T::of(2.276) * a + T::of(2.577) * a * a;
    let dnum = T::of(3.535) + T::of(4.362) * a;
    let dden = T::of(2.276) + T::of(5.154) * a;
    let dg_da = (dnum * den - num * dden) / (den * den);
    dg_da * (-a / alpha)
}

/// Exact Smith G1 for Beckmann, used for the sampling pdf so it matches the
/// visible-normal sampler exactly: G1 = 1/(1 + Lambda),
/// Lambda(a) = (erf(a) - 1)/2 + exp(-a^2)/(2 a sqrt(pi)).
pub fn smith_g1_exact<T: Real>(cos_v: T, alpha: T) -> T {
    if cos_v <= T::zero() {
        return T::zero();
    }
    let a = smith_a(cos_v, alpha);
    if !a.is_finite() {
        return T::one();
    }
    let af = a.as_f64();
    let lambda = (statrs::function::erf::erf(af) - 1.0) / 2.0
        + (-af * af).exp() / (2.0 * af * std::f64::consts::PI.sqrt());
    T::of(1.0 / (1.0 + lambda))
}

/// Schlick Fresnel: F0 + (1 - F0)(1 - cos)^5.
pub fn schlick<T: Real>(f0: Rgb<T>, cos_oh: T) -> Rgb<T> {
    let c = cos_oh.clamp(T::zero(), T::one());
    let m = T::one() - c;
    let m5 = m * m * m * m * m;
    f0 + (Rgb::splat(T::one()) - f0) * m5
}

/// (f_diffuse, f_specular) at one incident direction; both zero outside the
/// upper hemisphere of either direction.
pub fn eval_brdf<T: Real>(frame: &ShadingFrame<T>, wi: Vec3<T>, mat: &MaterialSample<T>) -> (Rgb<T>, Rgb<T>) {
    let ci = wi.dot(frame.n);
    let co = frame.wo.dot(frame.n);
    if ci <= T::zero() || co <= T::zero() {
        return (Rgb::zero(), Rgb::zero());
    }
    let f_diffuse = mat.albedo / T::PI();
    let h = match (wi + frame.wo).try_normalized(T::of(1e-12)) {
        Some(h) => h,
        None => return (f_diffuse, Rgb::zero()),
    };
    let alpha = clamp_rho(mat.rho);
    let d = beckmann_d(h.dot(frame.n), alpha);
    let g = smith_g1(ci, alpha) * smith_g1(co, alpha);
    let f = schlick(mat.f0, frame.wo.dot(h));
    let k = d * g / (T::of(4.0) * ci * co);
    (f_diffuse, f * k)
}

/// Partial derivatives of the specular term needed by the shading backward:
/// d(f_spec)/d(rho) per channel and the scalar kernel K with
/// f_spec = F * K, so d(f_spec_c)/d(F0_c) = K * (1 - (1-cos_oh)^5).
#[derive(Clone, Copy, Debug)]
pub struct BrdfGrads<T> {
    pub f_diffuse: Rgb<T>,
    pub f_specular: Rgb<T>,
    pub d_spec_d_rho: Rgb<T>,
    pub d_spec_d_f0: Rgb<T>,
}

pub fn eval_brdf_with_grads<T: Real>(
    frame: &ShadingFrame<T>,
    wi: Vec3<T>,
    mat: &MaterialSample<T>,
) -> BrdfGrads<T> {
    let zero = BrdfGrads {
        f_diffuse: Rgb::zero(),
        f_specular: Rgb::zero(),
        d_spec_d_rho: Rgb::zero(),
        d_spec_d_f0: Rgb::zero(),
    };
    let ci = wi.dot(frame.n);
    let co = frame.wo.dot(frame.n);
    if ci <= T::zero() || co <= T::zero() {
        return zero;
    }
    let f_diffuse = mat.albedo / T::PI();
    let h = match (wi + frame.wo).try_normalized(T::of(1e-12)) {
        Some(h) => h,
        None => return BrdfGrads { f_diffuse, ..zero },
    };
    let alpha = clamp_rho(mat.rho);
    let cos_h = h.dot(frame.n);
    let cos_oh = frame.wo.dot(h);
    let d = beckmann_d(cos_h, alpha);
    let g1i = smith_g1(ci, alpha);
    let g1o = smith_g1(co, alpha);
    let f = schlick(mat.f0, cos_oh);
    let inv4 = T::one() / (T::of(4.0) * ci * co);
    let k = d * g1i * g1o * inv4;

    // dK/d(alpha); alpha = max(rho, RHO_MIN) so the clamp gates the gradient
    let dk_dalpha = (beckmann_d_dalpha(cos_h, alpha) * g1i * g1o
        + d * smith_g1_dalpha(ci, alpha) * g1o
        + d * g1i * smith_g1_dalpha(co, alpha))
        * inv4;
    let gate = if mat.rho > T::of(RHO_MIN) { T::one() } else { T::zero() };
    let m = (T::one() - cos_oh.clamp(T::zero(), T::one())).max(T::zero());
    let m5 = m * m * m * m * m;
    BrdfGrads {
        f_diffuse,
        f_specular: f * k,
        d_spec_d_rho: f * (dk_dalpha * gate),
        d_spec_d_f0: Rgb::splat(k * (T::one() - m5)),
    }
}

/// One BRDF-strategy draw: a direction, its solid-angle pdf, and whether the
/// sample lands in the upper hemisphere (invalid samples contribute zero but
/// keep their pdf for MIS bookkeeping).
#[derive(Clone, Copy, Debug)]
pub struct NdfSample<T> {
    pub wi: Vec3<T>,
    pub pdf: T,
    pub valid: bool,
}

/// Samples the visible-normal distribution of the Beckmann NDF
/// (Heitz & d'Eon style: stretch, sample slopes, rotate, unstretch) and
/// reflects `wo` about the sampled half-vector.
pub fn sample_ndf<T: Real>(frame: &ShadingFrame<T>, mat: &MaterialSample<T>, u1: T, u2: T) -> NdfSample<T> {
    let alpha = clamp_rho(mat.rho).as_f64();
    let wo_local = frame.to_local(frame.wo);
    debug_assert!(wo_local.z > T::zero());
    let wo = Vec3::new(wo_local.x.as_f64(), wo_local.y.as_f64(), wo_local.z.as_f64());

    // stretch incident direction
    let stretched = Vec3::new(alpha * wo.x, alpha * wo.y, wo.z).normalized();
    let (mut sx, mut sy) = sample_visible_slopes_beckmann(stretched.z, u1.as_f64(), u2.as_f64());
    // rotate slopes to the azimuth of the stretched direction
    let r = (stretched.x * stretched.x + stretched.y * stretched.y).sqrt();
    if r > 1e-12 {
        let (cos_phi, sin_phi) = (stretched.x / r, stretched.y / r);
        let tmp = cos_phi * sx - sin_phi * sy;
        sy = sin_phi * sx + cos_phi * sy;
        sx = tmp;
    }
    // unstretch
    sx *= alpha;
    sy *= alpha;
    let h_local = Vec3::new(-sx, -sy, 1.0).normalized();
    let h_local_t = Vec3::new(T::of(h_local.x), T::of(h_local.y), T::of(h_local.z));
    let h_world = frame.to_world(h_local_t);
    let wi = reflect(frame.wo, h_world);
    let pdf = pdf_ndf(frame, wi, mat);
    NdfSample { wi, pdf, valid: wi.dot(frame.n) > T::zero() && pdf > T::zero() }
}

/// Solid-angle pdf of [`sample_ndf`] at `wi`:
/// D(h) G1_exact(wo) / (4 cos_theta_o).
pub fn pdf_ndf<T: Real>(frame: &ShadingFrame<T>, wi: Vec3<T>, mat: &MaterialSample<T>) -> T {
    let co = frame.wo.dot(frame.n);
    if co <= T::zero() {
        return T::zero();
    }
    let h = match (wi + frame.wo).try_normalized(T::of(1e-12)) {
        Some(h) => h,
        None => return T::zero(),
    };
    let cos_h = h.dot(frame.n);
    if cos_h <= T::zero() || frame.wo.dot(h) <= T::zero() {
        return T::zero();
    }
    let alpha = clamp_rho(mat.rho);
    beckmann_d(cos_h, alpha) * smith_g1_exact(co, alpha) / (T::of(4.0) * co)
}

/// Slope-space sampling of the visible Beckmann distribution for a stretched
/// view cosine (unit roughness), after Heitz & d'Eon. Uses a Newton solve on
/// the slope CDF in erf space.
fn sample_visible_slopes_beckmann(cos_theta_i: f64, u1: f64, u2: f64) -> (f64, f64) {
    use statrs::function::erf::{erf, erf_inv};
    if cos_theta_i > 0.9999 {
        // normal incidence: full Beckmann slope distribution
        let r = (-(1.0 - u1).max(1e-12).ln()).sqrt();
        let phi = std::f64::consts::TAU * u2;
        return (r * phi.cos(), r * phi.sin());
    }
    let sin_theta_i = (1.0 - cos_theta_i * cos_theta_i).max(0.0).sqrt();
    let tan_theta_i = sin_theta_i / cos_theta_i;
    let cot_theta_i = 1.0 / tan_theta_i;

    let mut a = -1.0;
    let mut c = erf(cot_theta_i);
    let sample_x = u1.max(1e-6);
    let theta_i = cos_theta_i.acos();
    let fit = 1.0 + theta_i * (-0.876 + theta_i * (0.4265 - 0.0594 * theta_i));
    let mut b = c - (1.0 + c) * (1.0 - sample_x).powf(fit);

    let normalization =
        1.0 / (1.0 + c + SQRT_PI_INV * tan_theta_i * (-cot_theta_i * cot_theta_i).exp());
    for _ in 0..16 {
        if !(a <= b && b <= c) {
            b = 0.5 * (a + c);
        }
        let inv_erf = erf_inv(b);
        let value =
            normalization * (1.0 + b + SQRT_PI_INV * tan_theta_i * (-inv_erf * inv_erf).exp())
                - sample_x;
        if value.abs() < 1e-10 {
            break;
        }
        if value > 0.0 {
            c = b;
        } else {
            a = b;
        }
        let derivative = normalization * (1.0 - inv_erf * tan_theta_i);
        b -= value / derivative;
    }
    let slope_x = erf_inv(b.clamp(-0.9999999, 0.9999999));
    let slope_y = erf_inv((2.0 * u2.max(1e-6) - 1.0).clamp(-0.9999999, 0.9999999));
    (slope_x, slope_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Sampler;

    fn mat(rho: f64, f0: f64) -> MaterialSample<f64> {
        MaterialSample {
            normal: Vec3::of(0.0, 0.0, 1.0),
            albedo: Rgb::splat(0.5),
            f0: Rgb::splat(f0),
            rho,
            kappa: 0.1,
        }
    }

    fn frame(wo: Vec3<f64>) -> ShadingFrame<f64> {
        ShadingFrame::new(Vec3::of(0.0, 0.0, 1.0), wo.normalized())
    }

    #[test]
    fn diffuse_is_albedo_over_pi() {
        let f = frame(Vec3::of(0.0, 0.3, 0.9));
        let (fd, _) = eval_brdf(&f, Vec3::of(0.1, -0.2, 0.97).normalized(), &mat(0.4, 0.04));
        let expect = 0.5 / std::f64::consts::PI;
        assert!((fd.x - expect).abs() < 1e-12 && (fd.y - expect).abs() < 1e-12);
        assert!((expect - 0.15915).abs() < 1e-4);
    }

    #[test]
    fn beckmann_at_normal_incidence() {
        for alpha in [0.1, 0.3, 0.7] {
            let d: f64 = beckmann_d(1.0, alpha);
            let expect = 1.0 / (std::f64::consts::PI * alpha * alpha);
            assert!((d - expect).abs() < 1e-10 * expect);
        }
    }

    #[test]
    fn schlick_endpoints() {
        let f0 = Rgb::of(0.2, 0.5, 0.9);
        let grazing = schlick(f0, 0.0);
        assert_eq!(grazing, Rgb::splat(1.0));
        let head_on = schlick(f0, 1.0);
        assert_eq!(head_on, f0);
    }

    #[test]
    fn below_horizon_is_black() {
        let f = frame(Vec3::of(0.0, 0.0, 1.0));
        let (fd, fs) = eval_brdf(&f, Vec3::of(0.0, 0.0, -1.0), &mat(0.3, 0.5));
        assert_eq!((fd, fs), (Rgb::zero(), Rgb::zero()));
    }

    #[test]
    fn reciprocity() {
        let m = mat(0.37, 0.6);
        let mut s = Sampler::from_seed(4);
        for _ in 0..500 {
            let a = sample_hemi(&mut s);
            let b = sample_hemi(&mut s);
            let (_, f_ab) = eval_brdf(&frame(a), b, &m);
            let (_, f_ba) = eval_brdf(&frame(b), a, &m);
            assert!((f_ab - f_ba).norm() <= 1e-6 * (1.0 + f_ab.norm()));
        }
    }

    fn sample_hemi(s: &mut Sampler) -> Vec3<f64> {
        loop {
            let v = Vec3::new(s.range(-1.0, 1.0), s.range(-1.0, 1.0), s.range(0.05, 1.0));
            if v.norm2() <= 1.0 && v.norm2() > 1e-4 {
                return v.normalized();
            }
        }
    }

    /// Hemisphere quadrature of f(wi) with a theta x phi midpoint grid.
    fn hemi_quadrature(mut f: impl FnMut(Vec3<f64>) -> f64, nt: usize, np: usize) -> f64 {
        let mut acc = 0.0;
        for it in 0..nt {
            let theta = (it as f64 + 0.5) / nt as f64 * std::f64::consts::FRAC_PI_2;
            for ip in 0..np {
                let phi = (ip as f64 + 0.5) / np as f64 * std::f64::consts::TAU;
                let w = theta.sin()
                    * (std::f64::consts::FRAC_PI_2 / nt as f64)
                    * (std::f64::consts::TAU / np as f64);
                acc += f(crate::math::spherical_dir(theta, phi)) * w;
            }
        }
        acc
    }

    #[test]
    fn ndf_projected_area_normalized() {
        for alpha in [0.2, 0.5, 0.8] {
            let integral = hemi_quadrature(|h| beckmann_d(h.z, alpha) * h.z, 256, 256);
            assert!((integral - 1.0).abs() <= 0.02, "alpha {alpha}: {integral}");
        }
    }

    #[test]
    fn white_furnace_bound() {
        // F0 = 1: integral of f_spec cos over the hemisphere stays <= 1.05
        let m = mat(0.4, 1.0);
        for wo_theta in [0.2, 0.9, 1.3] {
            let wo = crate::math::spherical_dir(wo_theta, 0.7);
            let f = frame(wo);
            let integral = hemi_quadrature(
                |wi| {
                    let (_, fs) = eval_brdf(&f, wi, &m);
                    fs.x * wi.z
                },
                128,
                256,
            );
            assert!(integral <= 1.05, "theta {wo_theta}: {integral}");
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        let m = mat(0.3, 1.0);
        let wo = crate::math::spherical_dir(0.8, 0.3);
        let f = frame(wo);
        // quadrature over the full sphere of incident directions with h above
        // the horizon; pdf is zero below
        let mut acc = 0.0;
        let (nt, np) = (512, 512);
        for it in 0..nt {
            let theta = (it as f64 + 0.5) / nt as f64 * std::f64::consts::PI;
            for ip in 0..np {
                let phi = (ip as f64 + 0.5) / np as f64 * std::f64::consts::TAU;
                let w = theta.sin()
                    * (std::f64::consts::PI / nt as f64)
                    * (std::f64::consts::TAU / np as f64);
                acc += pdf_ndf(&f, crate::math::spherical_dir(theta, phi), &m) * w;
            }
        }
        assert!((acc - 1.0).abs() <= 0.01, "pdf integral {acc}");
    }

    #[test]
    fn sampler_matches_claimed_pdf_histogram() {
        // bin sampled directions over the hemisphere and compare bin masses
        // against the quadrature of the claimed pdf
        let m = mat(0.3, 1.0);
        let wo = crate::math::spherical_dir(0.7, 1.9);
        let f = frame(wo);
        let (nt, np) = (8usize, 16usize);
        let mut expected = vec![0.0; nt * np];
        let sub = 64;
        for it in 0..nt * sub {
            let theta = (it as f64 + 0.5) / (nt * sub) as f64 * std::f64::consts::FRAC_PI_2;
            for ip in 0..np * sub {
                let phi = (ip as f64 + 0.5) / (np * sub) as f64 * std::f64::consts::TAU;
                let w = theta.sin()
                    * (std::f64::consts::FRAC_PI_2 / (nt * sub) as f64)
                    * (std::f64::consts::TAU / (np * sub) as f64);
                expected[(it / sub) * np + ip / sub] +=
                    pdf_ndf(&f, crate::math::spherical_dir(theta, phi), &m) * w;
            }
        }
        let mut s = Sampler::from_seed(8);
        let n = 400_000usize;
        let mut counts = vec![0.0; nt * np];
        let mut n_valid = 0;
        for _ in 0..n {
            let smp = sample_ndf(&f, &m, s.uniform(), s.uniform());
            if smp.valid {
                let (theta, phi) = crate::math::dir_to_spherical(smp.wi);
                let it = ((theta / std::f64::consts::FRAC_PI_2 * nt as f64) as usize).min(nt - 1);
                let ip = ((phi / std::f64::consts::TAU * np as f64) as usize).min(np - 1);
                counts[it * np + ip] += 1.0 / n as f64;
                n_valid += 1;
            }
        }
        assert!(n_valid > n * 95 / 100);
        for b in 0..nt * np {
            if expected[b] > 5e-3 {
                let rel = (counts[b] - expected[b]).abs() / expected[b];
                assert!(rel < 0.05, "bin {b}: sampled {} vs pdf mass {}", counts[b], expected[b]);
            }
        }
    }

    #[test]
    fn estimator_matches_quadrature() {
        let m = mat(0.4, 0.8);
        let wo = crate::math::spherical_dir(0.6, 0.2);
        let f = frame(wo);
        let integrand = |wi: Vec3<f64>| {
            let (_, fs) = eval_brdf(&f, wi, &m);
            fs.x * wi.z.max(0.0)
        };
        let quad = hemi_quadrature(integrand, 256, 512);
        let mut s = Sampler::from_seed(77);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let smp = sample_ndf(&f, &m, s.uniform(), s.uniform());
            if smp.valid {
                acc += integrand(smp.wi) / smp.pdf;
            }
        }
        let mc = acc / n as f64;
        assert!((mc - quad).abs() / quad < 0.02, "mc {mc} vs quad {quad}");
    }

    #[test]
    fn mirror_limit_concentrates() {
        let wo = crate::math::spherical_dir(0.5, 0.0);
        let f = frame(wo);
        let mirror = reflect(wo, Vec3::of(0.0, 0.0, 1.0));
        let mut s = Sampler::from_seed(3);
        let mut spreads = Vec::new();
        for rho in [0.02, 0.1, 0.3] {
            let m = mat(rho, 1.0);
            let mut acc = 0.0;
            let mut cnt = 0;
            for _ in 0..4000 {
                let smp = sample_ndf(&f, &m, s.uniform(), s.uniform());
                if smp.valid {
                    acc += smp.wi.dot(mirror).clamp(-1.0, 1.0).acos();
                    cnt += 1;
                }
            }
            spreads.push(acc / cnt as f64);
        }
        assert!(spreads[0] < spreads[1] && spreads[1] < spreads[2], "{spreads:?}");
        assert!(spreads[0] < 0.06, "near-mirror spread {}", spreads[0]);
    }

    #[test]
    fn grads_match_fd() {
        let wo = crate::math::spherical_dir(0.7, 0.4);
        let f = frame(wo);
        let wi = crate::math::spherical_dir(0.5, 2.0);
        let m0 = mat(0.35, 0.6);
        let g = eval_brdf_with_grads(&f, wi, &m0);
        let h = 1e-6;
        // rho
        let mut mp = m0;
        mp.rho += h;
        let mut mm = m0;
        mm.rho -= h;
        let fd = (eval_brdf(&f, wi, &mp).1.x - eval_brdf(&f, wi, &mm).1.x) / (2.0 * h);
        assert!((g.d_spec_d_rho.x - fd).abs() <= 1e-6 + 1e-5 * fd.abs(), "{} vs {fd}", g.d_spec_d_rho.x);
        // f0 (per channel)
        let mut mp = m0;
        mp.f0.y += h;
        let mut mm = m0;
        mm.f0.y -= h;
        let fd = (eval_brdf(&f, wi, &mp).1.y - eval_brdf(&f, wi, &mm).1.y) / (2.0 * h);
        assert!((g.d_spec_d_f0.y - fd).abs() <= 1e-9 + 1e-5 * fd.abs());
        // rho below the floor: clamp gates the gradient to zero
        let g = eval_brdf_with_grads(&f, wi, &mat(0.005, 0.5));
        assert_eq!(g.d_spec_d_rho.x, 0.0);
    }
}
