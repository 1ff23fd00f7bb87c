//! Scene container: density and appearance fields, decoders, per-light
//! environment pyramids, and the evaluation render paths (radiance,
//! physically-based, relighting with recursive shading).

use crate::brdf::ShadingFrame;
use crate::camera::{Camera, Ray};
use crate::config::Config;
use crate::decoders::{DecoderConfig, DecoderSet, MaterialSample};
use crate::envlight::LaplacianPyramidEnv;
use crate::grid::{DensityAct, VmGrid};
use crate::img::ImageRgb;
use crate::march::{march, march_lite, MarchOptions, MarchResult};
use crate::math::{Aabb, Rgb, Vec3};
use crate::num::Real;
use crate::sampler::Sampler;
use crate::shade::{draw_samples, shade_with_samples, Heuristic, MisConfig, ShadeResult};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalMode {
    Radiance,
    Pbr,
    Relight,
}

/// Surface inputs of the physically-based shading step.
#[derive(Clone, Copy, Debug)]
pub struct ShadePoint<T> {
    pub x: Vec3<T>,
    /// Unit direction toward the viewer.
    pub wo: Vec3<T>,
    pub mat: MaterialSample<T>,
    pub light: usize,
}

/// Parameter groups for per-group learning rates and phase gating.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamGroup {
    Grids,
    Decoders,
    RhoHead,
    Pyramid,
}

pub struct Scene<T> {
    pub cfg: Config,
    pub density: VmGrid<T>,
    pub appearance: VmGrid<T>,
    pub decoders: DecoderSet<T>,
    /// One learned light per capture lighting condition.
    pub envs: Vec<LaplacianPyramidEnv<T>>,
}

impl<T: Real> Scene<T> {
    pub fn from_config(cfg: &Config, n_lights: usize) -> crate::Result<Self> {
        let cfg = cfg.validate()?;
        let bbox = Aabb::cube(T::of(cfg.bbox_half));
        let act = match cfg.density_activation.as_str() {
            "softplus" => DensityAct::ShiftedSoftplus { shift: cfg.density_shift },
            "relu" => DensityAct::Relu,
            "identity" => DensityAct::Identity,
            other => {
                return Err(crate::Error::Config(format!("unknown density activation '{other}'")))
            }
        };
        let mut sampler = Sampler::stream(cfg.seed, 0xC0FFEE, 0, 0);
        let mut density = VmGrid::density(
            [cfg.density_res, cfg.density_res, cfg.density_res],
            cfg.density_rank,
            bbox,
            act,
        );
        density.init_uniform(&mut sampler, T::of(cfg.density_init_lo), T::of(cfg.density_init_hi));
        let mut appearance = VmGrid::appearance(
            [cfg.appearance_res, cfg.appearance_res, cfg.appearance_res],
            cfg.appearance_rank,
            cfg.latent_dim,
            bbox,
        );
        appearance.init_uniform(&mut sampler, T::of(-cfg.appearance_init), T::of(cfg.appearance_init));
        let mut decoders = DecoderSet::new(DecoderConfig {
            latent_dim: cfg.latent_dim,
            hidden: cfg.hidden_dim,
            rho_hidden: cfg.rho_hidden_dim,
            n_freq_pos: cfg.n_freq_pos,
            n_freq_kappa: cfg.n_freq_kappa,
            encode_position: cfg.encode_position,
            dropout_p: cfg.dropout_p,
            decomposition: cfg.decomposition,
            separate_rho: cfg.separate_rho,
        });
        decoders.init(&mut sampler);
        let envs = (0..n_lights.max(1))
            .map(|_| LaplacianPyramidEnv::neutral(cfg.env_width, cfg.env_height, cfg.env_levels))
            .collect::<crate::Result<Vec<_>>>()?;
        Ok(Self { cfg, density, appearance, decoders, envs })
    }

    pub fn mis_train(&self) -> MisConfig {
        MisConfig {
            n_light: self.cfg.n_light_train,
            n_brdf: self.cfg.n_brdf_train,
            heuristic: self.heuristic(),
            max_bounce: self.cfg.max_bounce,
        }
    }

    pub fn mis_render(&self) -> MisConfig {
        MisConfig {
            n_light: self.cfg.n_light_render,
            n_brdf: self.cfg.n_brdf_render,
            heuristic: self.heuristic(),
            max_bounce: if self.cfg.indirect { self.cfg.max_bounce } else { 0 },
        }
    }

    fn heuristic(&self) -> Heuristic {
        if self.cfg.mis_heuristic == "power" {
            Heuristic::Power
        } else {
            Heuristic::Balance
        }
    }

    pub fn background(&self) -> Rgb<T> {
        Rgb::of(self.cfg.background[0], self.cfg.background[1], self.cfg.background[2])
    }

    /// Geometric offset for secondary-ray origins. The 1e-3 x scene-scale
    /// floor is far below one voxel, and the expected-depth surface point
    /// carries about one unit of leftover optical depth along the density
    /// ramp above it, so the offset must clear the interpolation ramp:
    /// 1.5 voxels wins at practical grid resolutions.
    pub fn geom_eps(&self) -> T {
        let ext = self.density.bbox.extent();
        let voxel = (0..3)
            .map(|i| ext.axis(i) / T::of_usize(self.density.resolution[i] - 1))
            .fold(T::zero(), |a, b| a.max(b));
        T::of(1e-3 * 2.0 * self.cfg.bbox_half).max(voxel * T::of(1.5))
    }

    pub fn env_for(&self, light: usize) -> &LaplacianPyramidEnv<T> {
        &self.envs[light.min(self.envs.len() - 1)]
    }

    /// Radiance decoded at a single point (used at secondary hits).
    /// `wo` points from the point toward the receiver.
    pub fn point_radiance(&self, x: Vec3<T>, wo: Vec3<T>, fallback_normal: Vec3<T>) -> Rgb<T> {
        let a = self.appearance.eval_appearance(x);
        let m = self.decoders.decode_material(&a);
        let n = m.normal.unwrap_or_else(|| self.density.density_normal(x, fallback_normal));
        let c_i = if self.decoders.cfg.decomposition {
            self.decoders.decode_view_independent(&a, x)
        } else {
            Rgb::zero()
        };
        let mut dummy = Sampler::from_seed(0);
        let c_d = self.decoders.decode_view_dependent(&a, x, wo, n, m.kappa, false, &mut dummy);
        c_i + c_d
    }

    /// Material decoded at a single point (used at relight secondary hits).
    pub fn point_material(&self, x: Vec3<T>, fallback_normal: Vec3<T>) -> MaterialSample<T> {
        let a = self.appearance.eval_appearance(x);
        let m = self.decoders.decode_material(&a);
        let normal = m.normal.unwrap_or_else(|| self.density.density_normal(x, fallback_normal));
        let rho = match m.rho_direct {
            Some(r) => r,
            None => self.decoders.kappa_to_rho(m.kappa),
        };
        MaterialSample { normal, albedo: m.albedo, f0: m.f0, rho, kappa: m.kappa }
    }

    /// Incident radiance from direction `wi` at a surface point, resolving
    /// occlusion through the density field. Returns the radiance and the
    /// fraction sourced directly from the environment (for light gradients).
    ///
    /// Train mode answers secondary hits with the radiance field; relight
    /// mode recurses into the shading path up to `max_bounce`.
    #[allow(clippy::too_many_arguments)]
    pub fn incident_radiance(
        &self,
        x: Vec3<T>,
        n: Vec3<T>,
        wi: Vec3<T>,
        light: usize,
        mode: EvalMode,
        depth: usize,
        mis: &MisConfig,
        env_override: Option<&LaplacianPyramidEnv<T>>,
        sampler: &mut Sampler,
    ) -> (Rgb<T>, T) {
        let env = env_override.unwrap_or_else(|| self.env_for(light));
        let eps = self.geom_eps();
        let mut origin = x + n * eps;
        let n_sec = self.cfg.n_samples_secondary;
        let tau = T::of(self.cfg.tau_hit);
        let (mut acc, mut dist, mut hit) = march_lite(origin, wi, &self.density, n_sec, tau, T::zero());
        if hit && dist < eps {
            // self-intersection: re-march once with a doubled offset
            origin = x + n * (eps + eps);
            let again = march_lite(origin, wi, &self.density, n_sec, tau, T::zero());
            acc = again.0;
            dist = again.1;
            hit = again.2;
            if hit && dist < eps {
                return (Rgb::zero(), T::zero());
            }
        }
        if !hit {
            return (env.eval_radiance(wi), T::one());
        }
        let x2 = origin + wi * dist;
        match mode {
            EvalMode::Radiance | EvalMode::Pbr => {
                // training-style irradiance: query the radiance field
                (self.point_radiance(x2, -wi, -wi), T::zero())
            }
            EvalMode::Relight => {
                if depth >= mis.max_bounce {
                    return (Rgb::zero(), T::zero());
                }
                let mat = self.point_material(x2, -wi);
                let pt = ShadePoint { x: x2, wo: -wi, mat, light };
                let res = self.shade(&pt, mode, depth + 1, mis, env_override, sampler);
                let c = res.c_dif + res.c_spec;
                (c * acc + env.eval_radiance(wi) * (T::one() - acc), T::one() - acc)
            }
        }
    }

    /// Physically-based shading of one surface point: MIS over the light and
    /// BRDF strategies; diffuse and specular radiance reported separately.
    pub fn shade(
        &self,
        pt: &ShadePoint<T>,
        mode: EvalMode,
        depth: usize,
        mis: &MisConfig,
        env_override: Option<&LaplacianPyramidEnv<T>>,
        sampler: &mut Sampler,
    ) -> ShadeResult<T> {
        let env = env_override.unwrap_or_else(|| self.env_for(pt.light));
        let frame = ShadingFrame::new(pt.mat.normal, pt.wo);
        let samples = draw_samples(&frame, &pt.mat, env, mis, sampler);
        shade_with_samples(&frame, &pt.mat, &samples, |wi| {
            let mut s = sampler.clone();
            let out = self.incident_radiance(
                pt.x, pt.mat.normal, wi, pt.light, mode, depth, mis, env_override, &mut s,
            );
            *sampler = s;
            out
        })
    }

    /// Evaluation-path material accumulation along a marched ray: per-sample
    /// decode weighted by the compositing weights.
    pub fn accumulate_along_ray(
        &self,
        ray: &Ray<T>,
        res: &MarchResult<T>,
    ) -> (Rgb<T>, Rgb<T>, MaterialSample<T>) {
        let w_min = T::of(self.cfg.weight_threshold);
        let mut c_i_acc = Rgb::zero();
        let mut c_d_acc = Rgb::zero();
        let mut n_acc = Vec3::zero();
        let mut albedo = Rgb::zero();
        let mut f0 = Rgb::zero();
        let mut rho = T::zero();
        let mut kappa = T::zero();
        let mut dummy = Sampler::from_seed(0);
        let wo = -ray.dir;
        for (j, &w) in res.weights.iter().enumerate() {
            if w < w_min || res.stencils[j].is_none() {
                continue;
            }
            let x = ray.origin + ray.dir * res.ts[j];
            let a = self.appearance.eval_appearance(x);
            let m = self.decoders.decode_material(&a);
            let n_j = m.normal.unwrap_or_else(|| self.density.density_normal(x, wo));
            let rho_j = match m.rho_direct {
                Some(r) => r,
                None => self.decoders.kappa_to_rho(m.kappa),
            };
            if self.decoders.cfg.decomposition {
                c_i_acc += self.decoders.decode_view_independent(&a, x) * w;
            }
            c_d_acc +=
                self.decoders.decode_view_dependent(&a, x, wo, n_j, m.kappa, false, &mut dummy) * w;
            n_acc += n_j * w;
            albedo += m.albedo * w;
            f0 += m.f0 * w;
            rho = rho + rho_j * w;
            kappa = kappa + m.kappa * w;
        }
        let x_hat = res.surface_point(ray);
        let normal = match n_acc.try_normalized(T::of(1e-6)) {
            Some(n) => n,
            None => self.density.density_normal(x_hat, wo),
        };
        (c_i_acc, c_d_acc, MaterialSample { normal, albedo, f0, rho, kappa })
    }

    /// Renders one pixel in evaluation mode (no gradients, midpoint samples).
    #[allow(clippy::too_many_arguments)]
    pub fn render_pixel(
        &self,
        ray: &Ray<T>,
        mode: EvalMode,
        mis: &MisConfig,
        env_override: Option<&LaplacianPyramidEnv<T>>,
        seed: u64,
    ) -> PixelRender<T> {
        let mut sampler = Sampler::stream(seed, ray.pixel.0 as u64, ray.pixel.1 as u64, 7);
        let opts = MarchOptions::<T> {
            n_samples: self.cfg.n_samples_primary,
            jitter: false,
            tau_hit: T::of(self.cfg.tau_hit),
        };
        let res = march(ray, &self.density, &opts, &mut sampler);
        let bg = self.background();
        let mut out = PixelRender {
            color: bg,
            depth: res.depth,
            acc: res.acc_opacity,
            hit: res.hit,
            normal: Vec3::zero(),
            mat: MaterialSample::zero(),
        };
        if res.weights.is_empty() {
            return out;
        }
        let (c_i_acc, c_d_acc, mat) = self.accumulate_along_ray(ray, &res);
        out.normal = mat.normal;
        out.mat = mat;
        match mode {
            EvalMode::Radiance => {
                out.color = c_i_acc + c_d_acc + bg * (T::one() - res.acc_opacity);
            }
            EvalMode::Pbr | EvalMode::Relight => {
                if !res.hit {
                    out.color = bg;
                    return out;
                }
                let pt = ShadePoint {
                    x: res.surface_point(ray),
                    wo: -ray.dir,
                    mat,
                    light: ray.light,
                };
                let shaded = self.shade(&pt, mode, 0, mis, env_override, &mut sampler);
                let c = shaded.c_dif + shaded.c_spec;
                out.color = c * res.acc_opacity + bg * (T::one() - res.acc_opacity);
            }
        }
        out
    }

    /// Full-frame render, parallel over rows; deterministic per-pixel streams.
    pub fn render_camera(
        &self,
        cam: &Camera<T>,
        mode: EvalMode,
        env_override: Option<&LaplacianPyramidEnv<T>>,
        seed: u64,
    ) -> FrameRender<T> {
        let mis = self.mis_render();
        let rows: Vec<Vec<PixelRender<T>>> = (0..cam.height)
            .into_par_iter()
            .map(|r| {
                (0..cam.width)
                    .map(|c| {
                        let ray = cam.ray(r, c);
                        self.render_pixel(&ray, mode, &mis, env_override, seed)
                    })
                    .collect()
            })
            .collect();
        let mut frame = FrameRender::new(cam.width, cam.height);
        for (r, row) in rows.into_iter().enumerate() {
            for (c, px) in row.into_iter().enumerate() {
                frame.color.set_px(c, r, px.color);
                frame.normal.set_px(c, r, px.normal);
                frame
                    .albedo
                    .set_px(c, r, px.mat.albedo);
                frame.f0.set_px(c, r, px.mat.f0);
                let i = r * cam.width + c;
                frame.depth[i] = px.depth;
                frame.acc[i] = px.acc;
                frame.hit[i] = px.hit;
                frame.rho[i] = px.mat.rho;
            }
        }
        frame
    }

    /// Fixed-order traversal of every learnable parameter vector.
    pub fn visit_params_mut(&mut self, mut f: impl FnMut(ParamGroup, &mut crate::param::Pvec<T>)) {
        for m in 0..3 {
            f(ParamGroup::Grids, &mut self.density.vectors[m]);
            f(ParamGroup::Grids, &mut self.density.matrices[m]);
        }
        for m in 0..3 {
            f(ParamGroup::Grids, &mut self.appearance.vectors[m]);
            f(ParamGroup::Grids, &mut self.appearance.matrices[m]);
        }
        if let Some(basis) = &mut self.appearance.basis {
            for b in basis.iter_mut() {
                f(ParamGroup::Grids, b);
            }
        }
        let dec = &mut self.decoders;
        if dec.cfg.decomposition {
            dec.d_ci.visit_params_mut(|p| f(ParamGroup::Decoders, p));
        }
        dec.d_cd.visit_params_mut(|p| f(ParamGroup::Decoders, p));
        dec.d_n.visit_params_mut(|p| f(ParamGroup::Decoders, p));
        dec.d_beta.visit_params_mut(|p| f(ParamGroup::Decoders, p));
        if !dec.cfg.separate_rho {
            dec.d_rho.visit_params_mut(|p| f(ParamGroup::RhoHead, p));
        }
        for env in &mut self.envs {
            for l in env.levels.iter_mut() {
                f(ParamGroup::Pyramid, l);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params_mut(|_, p| p.zero_grad());
        for env in &mut self.envs {
            env.zero_grad();
        }
    }

    pub fn refresh_envs(&mut self) {
        for env in &mut self.envs {
            env.refresh();
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PixelRender<T> {
    pub color: Rgb<T>,
    pub depth: T,
    pub acc: T,
    pub hit: bool,
    pub normal: Vec3<T>,
    pub mat: MaterialSample<T>,
}

#[derive(Clone, Debug)]
pub struct FrameRender<T> {
    pub color: ImageRgb<T>,
    pub normal: ImageRgb<T>,
    pub albedo: ImageRgb<T>,
    pub f0: ImageRgb<T>,
    pub depth: Vec<T>,
    pub acc: Vec<T>,
    pub rho: Vec<T>,
    pub hit: Vec<bool>,
}

impl<T: Real> FrameRender<T> {
    fn new(w: usize, h: usize) -> Self {
        Self {
            color: ImageRgb::zeros(w, h),
            normal: ImageRgb::zeros(w, h),
            albedo: ImageRgb::zeros(w, h),
            f0: ImageRgb::zeros(w, h),
            depth: vec![T::zero(); w * h],
            acc: vec![T::zero(); w * h],
            rho: vec![T::zero(); w * h],
            hit: vec![false; w * h],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> Config {
        Config {
            density_res: 16,
            density_rank: 2,
            appearance_res: 16,
            appearance_rank: 2,
            latent_dim: 8,
            hidden_dim: 16,
            env_width: 32,
            env_height: 16,
            env_levels: 3,
            n_samples_primary: 32,
            n_samples_secondary: 16,
            n_light_render: 4,
            n_brdf_render: 4,
            ..Default::default()
        }
    }

    #[test]
    fn empty_scene_incident_is_env() {
        let mut scene = Scene::<f64>::from_config(&tiny_config(), 1).unwrap();
        // zero density: every secondary ray escapes
        for m in 0..3 {
            scene.density.vectors[m].v.fill(0.0);
            scene.density.matrices[m].v.fill(0.0);
        }
        scene.density.act = DensityAct::Relu;
        let mut s = Sampler::from_seed(4);
        let mis = scene.mis_render();
        let wi = Vec3::of(0.3, 0.2, 0.93).normalized();
        let (c, frac) = scene.incident_radiance(
            Vec3::of(0.0, 0.0, 0.0),
            Vec3::of(0.0, 0.0, 1.0),
            wi,
            0,
            EvalMode::Pbr,
            0,
            &mis,
            None,
            &mut s,
        );
        assert_eq!(frac, 1.0);
        let expect = scene.envs[0].eval_radiance(wi);
        assert_eq!(c, expect);
    }

    #[test]
    fn relight_depth_exhaustion_is_black() {
        let cfg = tiny_config();
        let mut scene = Scene::<f64>::from_config(&cfg, 1).unwrap();
        // opaque everywhere: any direction hits immediately
        scene.density.act = DensityAct::Identity;
        for m in 0..3 {
            scene.density.vectors[m].v.fill(0.0);
            scene.density.matrices[m].v.fill(0.0);
        }
        scene.density.vectors[0].v.fill(100.0);
        scene.density.matrices[0].v.fill(1.0);
        let mut s = Sampler::from_seed(4);
        let mis = MisConfig { max_bounce: 0, ..scene.mis_render() };
        let (c, _) = scene.incident_radiance(
            Vec3::of(0.0, 0.0, 0.0),
            Vec3::of(0.0, 0.0, 1.0),
            Vec3::of(0.0, 0.0, 1.0),
            0,
            EvalMode::Relight,
            0,
            &mis,
            None,
            &mut s,
        );
        assert_eq!(c, Rgb::zero());
    }

    #[test]
    fn render_camera_deterministic() {
        let scene = Scene::<f32>::from_config(&tiny_config(), 1).unwrap();
        let cam = Camera::new(8, 6, 8.0, pose_looking_at_origin(4.0), 0).unwrap();
        let a = scene.render_camera(&cam, EvalMode::Radiance, None, 3);
        let b = scene.render_camera(&cam, EvalMode::Radiance, None, 3);
        assert_eq!(a.color.data, b.color.data);
    }

    pub(crate) fn pose_looking_at_origin<T: Real>(dist: f64) -> crate::math::Mat4<T> {
        // camera at (0,0,dist) looking down -z toward the origin (identity rotation)
        let mut m = crate::math::Mat4::identity();
        m.m[2][3] = T::of(dist);
        m
    }
}
