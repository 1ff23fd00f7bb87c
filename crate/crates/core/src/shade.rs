//! Multiple-importance-sampled shading at a surface point: light-strategy
//! draws from the environment CDF, BRDF-strategy draws from the
//! visible-normal distribution, combined with partition-of-unity weights.
//!
//! Sampling is separated from integration: `draw_samples` produces the
//! sample set (directions, pdfs, MIS weights), `shade_with_samples`
//! integrates it, and `shade_backward` differentiates the integral treating
//! the sample set as fixed. Training freezes the drawn samples, so the
//! analytic gradient is exactly the derivative of the estimate.

use crate::brdf::{eval_brdf_with_grads, pdf_ndf, sample_ndf, BrdfGrads, ShadingFrame};
use crate::decoders::MaterialSample;
use crate::envlight::LaplacianPyramidEnv;
use crate::math::{Rgb, Vec3};
use crate::num::Real;
use crate::sampler::Sampler;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Heuristic {
    #[default]
    Balance,
    Power,
}

#[derive(Clone, Copy, Debug)]
pub struct MisConfig {
    pub n_light: usize,
    pub n_brdf: usize,
    pub heuristic: Heuristic,
    /// Recursion depth for relighting.
    pub max_bounce: usize,
}

impl Default for MisConfig {
    fn default() -> Self {
        Self { n_light: 8, n_brdf: 8, heuristic: Heuristic::Balance, max_bounce: 1 }
    }
}

/// Combination weight for a strategy given both strategies' densities at the
/// sampled point. `pdf_self` must be positive.
pub fn mis_weight<T: Real>(pdf_self: T, pdf_other: T, n_self: usize, n_other: usize, h: Heuristic) -> T {
    debug_assert!(pdf_self > T::zero());
    let a = T::of_usize(n_self) * pdf_self;
    let b = T::of_usize(n_other) * pdf_other;
    match h {
        Heuristic::Balance => a / (a + b),
        Heuristic::Power => a * a / (a * a + b * b),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strategy {
    Light,
    Brdf,
}

/// One frozen MIS draw.
#[derive(Clone, Copy, Debug)]
pub struct MisSample<T> {
    pub wi: Vec3<T>,
    pub strategy: Strategy,
    /// Contribution scale w_mis / (n_strategy * pdf_strategy); zero for
    /// invalid draws.
    pub scale: T,
}

/// Draws the light- and BRDF-strategy sample sets for one shade point.
pub fn draw_samples<T: Real>(
    frame: &ShadingFrame<T>,
    mat: &MaterialSample<T>,
    env: &LaplacianPyramidEnv<T>,
    cfg: &MisConfig,
    sampler: &mut Sampler,
) -> Vec<MisSample<T>> {
    let mut out = Vec::with_capacity(cfg.n_light + cfg.n_brdf);
    for _ in 0..cfg.n_light {
        let (u1, u2) = sampler.uniform2();
        let (wi, p_l) = env.sample_direction(u1, u2);
        let scale = if p_l > T::zero() {
            let p_b = pdf_ndf(frame, wi, mat);
            mis_weight(p_l, p_b, cfg.n_light, cfg.n_brdf, cfg.heuristic)
                / (T::of_usize(cfg.n_light) * p_l)
        } else {
            T::zero()
        };
        out.push(MisSample { wi, strategy: Strategy::Light, scale });
    }
    for _ in 0..cfg.n_brdf {
        let (u1, u2) = sampler.uniform2();
        let s = sample_ndf(frame, mat, u1, u2);
        let scale = if s.valid {
            let p_l = env.pdf_direction(s.wi);
            mis_weight(s.pdf, p_l, cfg.n_brdf, cfg.n_light, cfg.heuristic)
                / (T::of_usize(cfg.n_brdf) * s.pdf)
        } else {
            T::zero()
        };
        out.push(MisSample { wi: s.wi, strategy: Strategy::Brdf, scale });
    }
    out
}

/// Everything the backward pass needs about one integrated sample.
#[derive(Clone, Copy, Debug)]
pub struct ShadeTapeEntry<T> {
    pub wi: Vec3<T>,
    pub scale: T,
    pub cos_i: T,
    /// Incident radiance along `wi`.
    pub radiance: Rgb<T>,
    /// Fraction of the incident radiance that came straight from the
    /// environment map (gradient flows to the pyramid only through this part).
    pub env_frac: T,
    pub brdf: BrdfGrads<T>,
}

#[derive(Clone, Debug)]
pub struct ShadeResult<T> {
    pub c_dif: Rgb<T>,
    pub c_spec: Rgb<T>,
    pub tape: Vec<ShadeTapeEntry<T>>,
}

/// Integrates a frozen sample set. `incident` returns the radiance arriving
/// from a direction and the fraction of it sourced from the environment map.
pub fn shade_with_samples<T: Real>(
    frame: &ShadingFrame<T>,
    mat: &MaterialSample<T>,
    samples: &[MisSample<T>],
    mut incident: impl FnMut(Vec3<T>) -> (Rgb<T>, T),
) -> ShadeResult<T> {
    let mut c_dif = Rgb::zero();
    let mut c_spec = Rgb::zero();
    let mut tape = Vec::with_capacity(samples.len());
    for s in samples {
        if s.scale <= T::zero() {
            continue;
        }
        let cos_i = s.wi.dot(frame.n);
        if cos_i <= T::zero() {
            continue;
        }
        let brdf = eval_brdf_with_grads(frame, s.wi, mat);
        let (radiance, env_frac) = incident(s.wi);
        let k = s.scale * cos_i;
        c_dif += radiance.mul_elem(brdf.f_diffuse) * k;
        c_spec += radiance.mul_elem(brdf.f_specular) * k;
        tape.push(ShadeTapeEntry { wi: s.wi, scale: s.scale, cos_i, radiance, env_frac, brdf });
    }
    ShadeResult { c_dif, c_spec, tape }
}

/// Gradients of the shade estimate w.r.t. the material parameters and the
/// environment radiance along each sample direction.
#[derive(Clone, Debug)]
pub struct ShadeGrads<T> {
    pub d_albedo: Rgb<T>,
    pub d_f0: Rgb<T>,
    pub d_rho: T,
    /// Per-direction gradients to feed `accumulate_radiance_grad`.
    pub d_env: Vec<(Vec3<T>, Rgb<T>)>,
}

pub fn shade_backward<T: Real>(
    result: &ShadeResult<T>,
    d_c_dif: Rgb<T>,
    d_c_spec: Rgb<T>,
) -> ShadeGrads<T> {
    let mut g = ShadeGrads {
        d_albedo: Rgb::zero(),
        d_f0: Rgb::zero(),
        d_rho: T::zero(),
        d_env: Vec::new(),
    };
    let inv_pi = T::one() / T::PI();
    for e in &result.tape {
        let k = e.scale * e.cos_i;
        // diffuse: c_dif += L * (albedo/pi) * k
        g.d_albedo += e.radiance.mul_elem(d_c_dif) * (k * inv_pi);
        // specular: per channel c_spec_c += L_c * f_spec_c * k
        g.d_f0 += e.radiance.mul_elem(d_c_spec).mul_elem(e.brdf.d_spec_d_f0) * k;
        g.d_rho = g.d_rho + e.radiance.mul_elem(d_c_spec).dot(e.brdf.d_spec_d_rho) * k;
        if e.env_frac > T::zero() {
            let d_l = (d_c_dif.mul_elem(e.brdf.f_diffuse) + d_c_spec.mul_elem(e.brdf.f_specular))
                * (k * e.env_frac);
            g.d_env.push((e.wi, d_l));
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::img::ImageRgb;

    fn constant_env(level: f64) -> LaplacianPyramidEnv<f64> {
        let img = ImageRgb::constant(32, 16, Rgb::splat(level));
        LaplacianPyramidEnv::build(&img, 3).unwrap()
    }

    fn lambertian(albedo: f64) -> MaterialSample<f64> {
        MaterialSample {
            normal: Vec3::of(0.0, 0.0, 1.0),
            albedo: Rgb::splat(albedo),
            f0: Rgb::splat(0.0),
            rho: 0.5,
            kappa: 0.1,
        }
    }

    #[test]
    fn mis_weight_identities() {
        let w: f64 = mis_weight(0.3, 0.0, 4, 4, Heuristic::Balance);
        assert_eq!(w, 1.0);
        let w: f64 = mis_weight(0.5, 0.5, 4, 4, Heuristic::Balance);
        assert_eq!(w, 0.5);
        let mut s = Sampler::from_seed(2);
        for _ in 0..200 {
            let (pa, pb): (f64, f64) = (s.range(1e-3, 5.0), s.range(1e-3, 5.0));
            let wl: f64 = mis_weight(pa, pb, 3, 5, Heuristic::Balance);
            let wb: f64 = mis_weight(pb, pa, 5, 3, Heuristic::Balance);
            assert!((wl + wb - 1.0).abs() <= 1e-12);
            let wl: f64 = mis_weight(pa, pb, 2, 2, Heuristic::Power);
            let wb: f64 = mis_weight(pb, pa, 2, 2, Heuristic::Power);
            assert!((wl + wb - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn black_env_shades_black() {
        let env = constant_env(0.0);
        let mat = lambertian(0.7);
        let frame = ShadingFrame::new(mat.normal, Vec3::of(0.0, 0.3, 0.95).normalized());
        let mut s = Sampler::from_seed(5);
        let samples = draw_samples(&frame, &mat, &env, &MisConfig::default(), &mut s);
        let res = shade_with_samples(&frame, &mat, &samples, |wi| (env.eval_radiance(wi), 1.0));
        assert_eq!(res.c_dif, Rgb::zero());
        assert_eq!(res.c_spec, Rgb::zero());
    }

    #[test]
    fn lambertian_under_constant_env_matches_closed_form() {
        // E[c_dif] = albedo * L0 (cosine integral of albedo/pi over hemisphere)
        let l0 = 0.8;
        let gamma = 0.6;
        let env = constant_env(l0);
        let mat = lambertian(gamma);
        let frame = ShadingFrame::new(mat.normal, Vec3::of(0.1, 0.2, 0.97).normalized());
        let cfg = MisConfig { n_light: 8, n_brdf: 8, ..Default::default() };
        let n_runs = 200;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for run in 0..n_runs {
            let mut s = Sampler::stream(42, run, 0, 0);
            let samples = draw_samples(&frame, &mat, &env, &cfg, &mut s);
            let res = shade_with_samples(&frame, &mat, &samples, |wi| (env.eval_radiance(wi), 1.0));
            let v = res.c_dif.x;
            let d = v - mean;
            mean += d / (run + 1) as f64;
            m2 += d * (v - mean);
        }
        let sigma_mean = (m2 / (n_runs - 1) as f64 / n_runs as f64).sqrt();
        let expect = gamma * l0;
        assert!(
            (mean - expect).abs() <= 3.0 * sigma_mean + 1e-4,
            "mean {mean} vs {expect} (3 sigma {})",
            3.0 * sigma_mean
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let env = constant_env(0.5);
        let mat = lambertian(0.4);
        let frame = ShadingFrame::new(mat.normal, Vec3::of(0.0, 0.4, 0.92).normalized());
        let run = |seed: u64| {
            let mut s = Sampler::from_seed(seed);
            let samples = draw_samples(&frame, &mat, &env, &MisConfig::default(), &mut s);
            let res = shade_with_samples(&frame, &mat, &samples, |wi| (env.eval_radiance(wi), 1.0));
            (res.c_dif, res.c_spec)
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn diffuse_ignores_f0_and_specular_ignores_albedo() {
        let env = {
            // non-trivial envmap
            let mut img = ImageRgb::constant(32, 16, Rgb::splat(0.3));
            img.set_px(20, 5, Rgb::of(9.0, 3.0, 1.0));
            LaplacianPyramidEnv::build(&img, 3).unwrap()
        };
        let frame = ShadingFrame::new(Vec3::of(0.0, 0.0, 1.0), Vec3::of(0.2, 0.1, 0.97).normalized());
        let shade_once = |albedo: f64, f0: f64| {
            let mat = MaterialSample {
                normal: Vec3::of(0.0, 0.0, 1.0),
                albedo: Rgb::splat(albedo),
                f0: Rgb::splat(f0),
                rho: 0.3,
                kappa: 0.1,
            };
            let mut s = Sampler::from_seed(11);
            let samples = draw_samples(&frame, &mat, &env, &MisConfig::default(), &mut s);
            let res = shade_with_samples(&frame, &mat, &samples, |wi| (env.eval_radiance(wi), 1.0));
            (res.c_dif, res.c_spec)
        };
        let (dif_a, spec_a) = shade_once(0.5, 0.2);
        let (dif_b, _) = shade_once(0.5, 0.9);
        let (_, spec_c) = shade_once(0.1, 0.2);
        assert_eq!(dif_a, dif_b, "c_dif must not depend on F0");
        assert_eq!(spec_a, spec_c, "c_spec must not depend on albedo");
    }

    #[test]
    fn single_strategy_matches_quadrature_on_diffuse() {
        // light-only estimator vs hemisphere quadrature of the diffuse integrand
        let mut img = ImageRgb::constant(64, 32, Rgb::splat(0.4));
        for x in 0..64 {
            for y in 0..8 {
                img.set_px(x, y, Rgb::splat(1.5));
            }
        }
        let env = LaplacianPyramidEnv::build(&img, 4).unwrap();
        let mat = lambertian(0.7);
        let frame = ShadingFrame::new(mat.normal, Vec3::of(0.0, 0.3, 0.95).normalized());
        // quadrature ref of integrand L * (albedo/pi) * cos over hemisphere
        let mut quad = 0.0;
        let (nt, np) = (128, 256);
        for it in 0..nt {
            let theta = (it as f64 + 0.5) / nt as f64 * std::f64::consts::FRAC_PI_2;
            for ip in 0..np {
                let phi = (ip as f64 + 0.5) / np as f64 * std::f64::consts::TAU;
                let w = theta.sin()
                    * (std::f64::consts::FRAC_PI_2 / nt as f64)
                    * (std::f64::consts::TAU / np as f64);
                let wi = crate::math::spherical_dir(theta, phi);
                quad += env.eval_radiance(wi).x * (0.7 / std::f64::consts::PI) * theta.cos() * w;
            }
        }
        let mut acc = 0.0;
        let runs = 400;
        let cfg = MisConfig { n_light: 16, n_brdf: 0, ..Default::default() };
        for run in 0..runs {
            let mut s = Sampler::stream(7, run, 1, 0);
            let samples = draw_samples(&frame, &mat, &env, &cfg, &mut s);
            let res = shade_with_samples(&frame, &mat, &samples, |wi| (env.eval_radiance(wi), 1.0));
            acc += res.c_dif.x;
        }
        let mc = acc / runs as f64;
        assert!((mc - quad).abs() / quad < 0.02, "mc {mc} vs quad {quad}");
    }

    #[test]
    fn frozen_sample_grads_match_fd() {
        let mut img = ImageRgb::constant(16, 8, Rgb::splat(0.5));
        img.set_px(4, 2, Rgb::of(3.0, 1.0, 0.5));
        let env = LaplacianPyramidEnv::build(&img, 2).unwrap();
        let mat = MaterialSample {
            normal: Vec3::of(0.0, 0.0, 1.0),
            albedo: Rgb::of(0.5, 0.6, 0.4),
            f0: Rgb::of(0.3, 0.4, 0.5),
            rho: 0.35,
            kappa: 0.1,
        };
        let frame = ShadingFrame::new(mat.normal, Vec3::of(0.1, 0.3, 0.94).normalized());
        let mut s = Sampler::from_seed(21);
        let samples = draw_samples(&frame, &mat, &env, &MisConfig::default(), &mut s);
        let w_dif = Rgb::of(0.7, -0.3, 0.4);
        let w_spec = Rgb::of(-0.2, 0.8, 0.5);
        let obj = |m: &MaterialSample<f64>, env: &LaplacianPyramidEnv<f64>| {
            let res = shade_with_samples(&frame, m, &samples, |wi| (env.eval_radiance(wi), 1.0));
            res.c_dif.dot(w_dif) + res.c_spec.dot(w_spec)
        };
        let res = shade_with_samples(&frame, &mat, &samples, |wi| (env.eval_radiance(wi), 1.0));
        let grads = shade_backward(&res, w_dif, w_spec);
        let h = 1e-6;
        // albedo channel
        let mut mp = mat;
        mp.albedo.y += h;
        let mut mm = mat;
        mm.albedo.y -= h;
        let fd = (obj(&mp, &env) - obj(&mm, &env)) / (2.0 * h);
        assert!((grads.d_albedo.y - fd).abs() <= 1e-8 + 1e-5 * fd.abs(), "{} vs {fd}", grads.d_albedo.y);
        // f0 channel
        let mut mp = mat;
        mp.f0.z += h;
        let mut mm = mat;
        mm.f0.z -= h;
        let fd = (obj(&mp, &env) - obj(&mm, &env)) / (2.0 * h);
        assert!((grads.d_f0.z - fd).abs() <= 1e-8 + 1e-5 * fd.abs(), "{} vs {fd}", grads.d_f0.z);
        // rho
        let mut mp = mat;
        mp.rho += h;
        let mut mm = mat;
        mm.rho -= h;
        let fd = (obj(&mp, &env) - obj(&mm, &env)) / (2.0 * h);
        assert!(
            (grads.d_rho - fd).abs() <= 1e-8 + 2e-4 * fd.abs().max(grads.d_rho.abs()),
            "{} vs {fd}",
            grads.d_rho
        );
        // one pyramid level entry through the env lookup
        let mut env2 = env.clone();
        env2.zero_grad();
        for (wi, d_l) in &grads.d_env {
            env2.accumulate_radiance_grad(*wi, *d_l);
        }
        env2.backward_levels();
        let mut s2 = Sampler::from_seed(3);
        for l in 0..env2.n_levels() {
            for _ in 0..5 {
                let idx = s2.index(env2.levels[l].len());
                let analytic = env2.levels[l].g[idx];
                let orig = env2.levels[l].v[idx];
                env2.levels[l].v[idx] = orig + h;
                env2.refresh();
                let hi = obj(&mat, &env2);
                env2.levels[l].v[idx] = orig - h;
                env2.refresh();
                let lo = obj(&mat, &env2);
                env2.levels[l].v[idx] = orig;
                env2.refresh();
                let fd = (hi - lo) / (2.0 * h);
                assert!(
                    (analytic - fd).abs() <= 1e-7 + 1e-4 * fd.abs().max(analytic.abs()),
                    "level {l}[{idx}]: {analytic} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn zero_count_strategy_still_partitions() {
        // n_brdf = 0: light samples must carry full weight
        let env = constant_env(1.0);
        let mat = lambertian(0.5);
        let frame = ShadingFrame::new(mat.normal, Vec3::of(0.0, 0.0, 1.0));
        let mut s = Sampler::from_seed(2);
        let cfg = MisConfig { n_light: 4, n_brdf: 0, ..Default::default() };
        let samples = draw_samples(&frame, &mat, &env, &cfg, &mut s);
        for smp in &samples {
            let p_l = env.pdf_direction(smp.wi);
            assert!((smp.scale - 1.0 / (4.0 * p_l)).abs() < 1e-12);
        }
    }
}
