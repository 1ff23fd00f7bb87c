//! Training forward/backward over a batch of rays.
//!
//! The forward pass marches each ray, decodes per-sample radiance and
//! material at the compositing-active samples (batched through the MLP
//! engine), accumulates per-ray quantities, and (past warm-up) shades hit
//! rays with multiple importance sampling. The backward pass hand-chains the
//! gradients in reverse: shade tape, accumulation, decoders, appearance
//! factors, compositing weights, density factors.
//!
//! Sampled shading directions are treated as constants of the estimate
//! (detached sampling): the analytic gradient is the exact derivative of the
//! frozen-sample estimator, which `ShadeSampling::Replay` exposes for
//! verification.

use crate::camera::Ray;
use crate::decoders::{
    assemble_cd_input, assemble_ci_input, cd_input_backward, ci_input_backward, normalize_backward,
    rho_input_backward, CdAux, MaterialSample,
};
use crate::encoding::fourier_features;
use crate::loss::{LossMap, LossWeights};
use crate::march::{march, march_backward_sigma, MarchOptions, MarchResult};
use crate::math::{Rgb, Vec3};
use crate::mlp::MlpCache;
use crate::num::Real;
use crate::sampler::Sampler;
use crate::scene::{EvalMode, Scene, ShadePoint};
use crate::shade::{draw_samples, shade_backward, shade_with_samples, MisSample, ShadeResult};

/// Per-ray accumulated outputs of one training pass.
#[derive(Clone, Debug)]
pub struct RayRender<T> {
    pub c_rad: Rgb<T>,
    pub c_i_acc: Rgb<T>,
    pub c_d_acc: Rgb<T>,
    pub acc: T,
    pub depth: T,
    pub hit: bool,
    pub x_hat: Vec3<T>,
    pub mat: MaterialSample<T>,
    pub c_pb_dif: Rgb<T>,
    pub c_pb_spec: Rgb<T>,
    pub c_pb: Rgb<T>,
}

/// Rays plus ground truth plus per-ray results; the unit the loss consumes.
pub struct RenderBatch<T> {
    pub rays: Vec<Ray<T>>,
    pub gt: Vec<Rgb<T>>,
    pub per_ray: Vec<RayRender<T>>,
}

pub struct BatchStats<T> {
    pub losses: LossMap<T>,
    pub n_hit: usize,
}

/// Frozen shading state of one hit ray: the drawn sample set plus the frame
/// inputs that the estimator treats as constants (surface point and frame
/// normal are detached from the gradient).
#[derive(Clone, Debug)]
pub struct ShadeBankEntry<T> {
    pub samples: Vec<MisSample<T>>,
    pub normal: Vec3<T>,
    pub x_hat: Vec3<T>,
}

#[derive(Clone, Debug, Default)]
pub struct ShadeBank<T> {
    pub entries: Vec<Option<ShadeBankEntry<T>>>,
}

/// How phase-2 shading obtains its MIS sample sets.
pub enum ShadeSampling<'a, T> {
    /// Draw fresh samples from the per-ray streams (training).
    Draw,
    /// Draw and record samples and frozen frame state (verification).
    Record(&'a mut ShadeBank<T>),
    /// Reuse a recorded bank (finite-difference passes); the detached
    /// quantities stay at their recorded values so central differences see
    /// exactly the function the analytic gradient differentiates.
    Replay(&'a ShadeBank<T>),
}

struct SampleRec<T> {
    ray: usize,
    j: usize,
    w: T,
    x: Vec3<T>,
    n_unit: Vec3<T>,
    n_raw_norm: T,
    degenerate_n: bool,
    albedo: Rgb<T>,
    f0: Rgb<T>,
    kappa: T,
    rho: T,
    c_i: Rgb<T>,
    c_d: Rgb<T>,
    dropped: bool,
    n_sigma: Vec3<T>,
    n_sigma_cache: Option<crate::grid::DensityNormalCache<T>>,
    cd_aux: CdAux<T>,
}

/// Forward + backward over one batch; gradients accumulate into the scene's
/// parameter buffers (call `Scene::zero_grads` first, and
/// `env.backward_levels()` afterwards to push light gradients into the
/// pyramid levels).
#[allow(clippy::too_many_arguments)]
pub fn train_batch<T: Real>(
    scene: &mut Scene<T>,
    rays: &[Ray<T>],
    gt: &[Rgb<T>],
    weights: &LossWeights<T>,
    phase2: bool,
    training: bool,
    iter: u64,
    seed: u64,
    mut sampling: ShadeSampling<'_, T>,
) -> (RenderBatch<T>, BatchStats<T>) {
    assert_eq!(rays.len(), gt.len());
    let b = rays.len();
    let b_t = T::of_usize(b);
    let cfg = scene.cfg.clone();
    let dec_cfg = scene.decoders.cfg.clone();
    let latent = dec_cfg.latent_dim;
    let bg = scene.background();
    let w_min = T::of(cfg.weight_threshold);
    let mis = scene.mis_train();

    let mut losses = LossMap::<T>::default();
    let mut n_hit = 0usize;
    let mut per_ray_out: Vec<RayRender<T>> = Vec::with_capacity(b);

    // ---- march all rays ----
    let opts = MarchOptions::<T> {
        n_samples: cfg.n_samples_primary,
        jitter: training,
        tau_hit: T::of(cfg.tau_hit),
    };
    let marches: Vec<MarchResult<T>> = rays
        .iter()
        .enumerate()
        .map(|(r, ray)| {
            let mut s = Sampler::stream(seed, iter, r as u64, 1);
            march(ray, &scene.density, &opts, &mut s)
        })
        .collect();

    // ---- collect active samples ----
    let mut recs: Vec<SampleRec<T>> = Vec::new();
    for (r, res) in marches.iter().enumerate() {
        let ray = &rays[r];
        let mut drop_stream = Sampler::stream(seed, iter, r as u64, 3);
        for (j, &w) in res.weights.iter().enumerate() {
            if w < w_min || res.stencils[j].is_none() {
                continue;
            }
            let dropped = if training && dec_cfg.decomposition {
                drop_stream.uniform::<T>() < T::of(dec_cfg.dropout_p)
            } else {
                false
            };
            let x = ray.origin + ray.dir * res.ts[j];
            recs.push(SampleRec {
                ray: r,
                j,
                w,
                x,
                n_unit: Vec3::zero(),
                n_raw_norm: T::zero(),
                degenerate_n: false,
                albedo: Rgb::zero(),
                f0: Rgb::zero(),
                kappa: T::zero(),
                rho: T::zero(),
                c_i: Rgb::zero(),
                c_d: Rgb::zero(),
                dropped,
                n_sigma: Vec3::zero(),
                n_sigma_cache: None,
                cd_aux: CdAux { omega_r: Vec3::zero() },
            });
        }
    }
    let n = recs.len();

    // ---- batched decoding ----
    let mut lat = vec![T::zero(); n * latent];
    let app_stencils: Vec<crate::grid::Stencil<T>> = recs
        .iter()
        .map(|rec| scene.appearance.locate(rec.x).expect("active sample inside bbox"))
        .collect();
    for (i, _) in recs.iter().enumerate() {
        scene.appearance.appearance_at(&app_stencils[i], &mut lat[i * latent..(i + 1) * latent]);
    }

    let mut cache_n = MlpCache::default();
    let raw_n = scene.decoders.d_n.forward_batch(&lat, n, Some(&mut cache_n));
    let mut cache_beta = MlpCache::default();
    let beta_out_len = dec_cfg.beta_out_len();
    let beta = scene.decoders.d_beta.forward_batch(&lat, n, Some(&mut cache_beta));

    for (i, rec) in recs.iter_mut().enumerate() {
        let raw = Vec3::new(raw_n[i * 3], raw_n[i * 3 + 1], raw_n[i * 3 + 2]);
        let norm = raw.norm();
        let wo = -rays[rec.ray].dir;
        if norm < T::of(1e-8) {
            rec.degenerate_n = true;
            rec.n_unit = scene.density.density_normal(rec.x, wo);
        } else {
            rec.n_raw_norm = norm;
            rec.n_unit = raw / norm;
        }
        let (n_sigma, cache) = scene.density.density_normal_cached(rec.x, wo);
        rec.n_sigma = n_sigma;
        rec.n_sigma_cache = cache;
        let bo = &beta[i * beta_out_len..(i + 1) * beta_out_len];
        rec.albedo = Rgb::new(bo[0], bo[1], bo[2]);
        rec.f0 = Rgb::new(bo[3], bo[4], bo[5]);
        rec.kappa = bo[6];
        if dec_cfg.separate_rho {
            rec.rho = bo[7];
        }
    }

    // rho head from kappa (fed through the Fourier encoding)
    let rho_in_len = dec_cfg.rho_input_len();
    let mut cache_rho = MlpCache::default();
    if !dec_cfg.separate_rho {
        let mut rho_in = Vec::with_capacity(n * rho_in_len);
        for rec in recs.iter() {
            fourier_features(&[rec.kappa], dec_cfg.n_freq_kappa, &mut rho_in);
        }
        let rho_out = scene.decoders.d_rho.forward_batch(&rho_in, n, Some(&mut cache_rho));
        for (i, rec) in recs.iter_mut().enumerate() {
            rec.rho = rho_out[i];
        }
    }

    // radiance heads
    let ci_in_len = dec_cfg.ci_input_len();
    let mut cache_ci = MlpCache::default();
    if dec_cfg.decomposition {
        let mut ci_in = Vec::with_capacity(n * ci_in_len);
        for (i, rec) in recs.iter().enumerate() {
            assemble_ci_input(&dec_cfg, &lat[i * latent..(i + 1) * latent], rec.x, &mut ci_in);
        }
        let ci = scene.decoders.d_ci.forward_batch(&ci_in, n, Some(&mut cache_ci));
        for (i, rec) in recs.iter_mut().enumerate() {
            rec.c_i = Rgb::new(ci[i * 3], ci[i * 3 + 1], ci[i * 3 + 2]);
        }
    }

    let cd_in_len = dec_cfg.cd_input_len();
    let mut cd_in = Vec::with_capacity(n * cd_in_len);
    for (i, rec) in recs.iter_mut().enumerate() {
        let wo = -rays[rec.ray].dir;
        rec.cd_aux = assemble_cd_input(
            &dec_cfg,
            &lat[i * latent..(i + 1) * latent],
            rec.x,
            wo,
            rec.n_unit,
            rec.kappa,
            &mut cd_in,
        );
    }
    let mut cache_cd = MlpCache::default();
    let cd = scene.decoders.d_cd.forward_batch(&cd_in, n, Some(&mut cache_cd));
    for (i, rec) in recs.iter_mut().enumerate() {
        if !rec.dropped {
            rec.c_d = Rgb::new(cd[i * 3], cd[i * 3 + 1], cd[i * 3 + 2]);
        }
    }

    // ---- per-ray accumulation ----
    let mut ray_first: Vec<usize> = vec![usize::MAX; b];
    for (i, rec) in recs.iter().enumerate() {
        if ray_first[rec.ray] == usize::MAX {
            ray_first[rec.ray] = i;
        }
    }
    for (r, res) in marches.iter().enumerate() {
        let ray = &rays[r];
        let mut c_i_acc = Rgb::zero();
        let mut c_d_acc = Rgb::zero();
        let mut n_acc = Vec3::zero();
        let mut albedo = Rgb::zero();
        let mut f0 = Rgb::zero();
        let mut rho = T::zero();
        let mut kappa = T::zero();
        let mut i = ray_first[r];
        while i != usize::MAX && i < recs.len() && recs[i].ray == r {
            let rec = &recs[i];
            c_i_acc += rec.c_i * rec.w;
            c_d_acc += rec.c_d * rec.w;
            n_acc += rec.n_unit * rec.w;
            albedo += rec.albedo * rec.w;
            f0 += rec.f0 * rec.w;
            rho = rho + rec.rho * rec.w;
            kappa = kappa + rec.kappa * rec.w;
            i += 1;
        }
        let acc = res.acc_opacity;
        let x_hat = res.surface_point(ray);
        let wo = -ray.dir;
        let normal = match n_acc.try_normalized(T::of(1e-6)) {
            Some(nrm) => nrm,
            None => scene.density.density_normal(x_hat, wo),
        };
        per_ray_out.push(RayRender {
            c_rad: c_i_acc + c_d_acc + bg * (T::one() - acc),
            c_i_acc,
            c_d_acc,
            acc,
            depth: res.depth,
            hit: res.hit,
            x_hat,
            mat: MaterialSample { normal, albedo, f0, rho, kappa },
            c_pb_dif: Rgb::zero(),
            c_pb_spec: Rgb::zero(),
            c_pb: Rgb::zero(),
        });
        if res.hit {
            n_hit += 1;
        }
    }

    // ---- phase-2 shading of hit rays ----
    let mut shade_results: Vec<Option<ShadeResult<T>>> = vec![None; b];
    if phase2 {
        if let ShadeSampling::Record(bank) = &mut sampling {
            bank.entries = vec![None; b];
        }
        for r in 0..b {
            if !per_ray_out[r].hit {
                continue;
            }
            let ray = &rays[r];
            let out = &per_ray_out[r];
            let mut pt = ShadePoint { x: out.x_hat, wo: -ray.dir, mat: out.mat, light: ray.light };
            let env = scene.env_for(pt.light);
            let samples: Vec<MisSample<T>> = match &mut sampling {
                ShadeSampling::Draw => {
                    let frame = crate::brdf::ShadingFrame::new(pt.mat.normal, pt.wo);
                    let mut s = Sampler::stream(seed, iter, r as u64, 2);
                    draw_samples(&frame, &pt.mat, env, &mis, &mut s)
                }
                ShadeSampling::Record(bank) => {
                    let frame = crate::brdf::ShadingFrame::new(pt.mat.normal, pt.wo);
                    let mut s = Sampler::stream(seed, iter, r as u64, 2);
                    let smp = draw_samples(&frame, &pt.mat, env, &mis, &mut s);
                    bank.entries[r] = Some(ShadeBankEntry {
                        samples: smp.clone(),
                        normal: pt.mat.normal,
                        x_hat: pt.x,
                    });
                    smp
                }
                ShadeSampling::Replay(bank) => {
                    let entry = bank.entries[r].as_ref().expect("hit set changed under replay");
                    pt.mat.normal = entry.normal;
                    pt.x = entry.x_hat;
                    entry.samples.clone()
                }
            };
            let frame = crate::brdf::ShadingFrame::new(pt.mat.normal, pt.wo);
            let mut s = Sampler::stream(seed, iter, r as u64, 4);
            let res = shade_with_samples(&frame, &pt.mat, &samples, |wi| {
                scene.incident_radiance(
                    pt.x, pt.mat.normal, wi, pt.light, EvalMode::Pbr, 0, &mis, None, &mut s,
                )
            });
            let out = &mut per_ray_out[r];
            out.c_pb_dif = res.c_dif;
            out.c_pb_spec = res.c_spec;
            let surface = res.c_dif + res.c_spec;
            out.c_pb = surface * out.acc + bg * (T::one() - out.acc);
            shade_results[r] = Some(res);
        }
    }

    // ---- losses and upstream gradients ----
    let clamp01 = |v: T| v.clamp(T::zero(), T::one());
    let gate01 = |v: T| {
        if v > T::zero() && v < T::one() {
            T::one()
        } else {
            T::zero()
        }
    };
    let two = T::of(2.0);

    let mut d_crad = vec![Rgb::<T>::zero(); b];
    let mut d_cdif = vec![Rgb::<T>::zero(); b];
    let mut d_cspec = vec![Rgb::<T>::zero(); b];
    let mut d_ciacc = vec![Rgb::<T>::zero(); b];
    let mut d_cdacc = vec![Rgb::<T>::zero(); b];
    let mut d_acc = vec![T::zero(); b];
    let mut d_mat_albedo = vec![Rgb::<T>::zero(); b];
    let mut d_mat_f0 = vec![Rgb::<T>::zero(); b];
    let mut d_mat_rho = vec![T::zero(); b];

    for r in 0..b {
        let out = &per_ray_out[r];
        // radiance photometric loss (clamped to [0,1] inside the loss only)
        let mut rf = T::zero();
        for c in 0..3 {
            let (pred, gtc) = (out.c_rad.axis(c), gt[r].axis(c));
            let e = clamp01(pred) - gtc;
            rf = rf + e * e;
            let g = weights.rf * two * e * gate01(pred) / b_t;
            match c {
                0 => d_crad[r].x = d_crad[r].x + g,
                1 => d_crad[r].y = d_crad[r].y + g,
                _ => d_crad[r].z = d_crad[r].z + g,
            }
        }
        losses.rf = losses.rf + rf / b_t;

        if phase2 && out.hit {
            // physically-based photometric loss
            let mut pb = T::zero();
            let surface = out.c_pb_dif + out.c_pb_spec;
            for c in 0..3 {
                let (pred, gtc) = (out.c_pb.axis(c), gt[r].axis(c));
                let e = clamp01(pred) - gtc;
                pb = pb + e * e;
                let g = weights.pb * two * e * gate01(pred) / b_t;
                let gv = match c {
                    0 => Rgb::new(g, T::zero(), T::zero()),
                    1 => Rgb::new(T::zero(), g, T::zero()),
                    _ => Rgb::new(T::zero(), T::zero(), g),
                };
                d_cdif[r] += gv * out.acc;
                d_cspec[r] += gv * out.acc;
                d_acc[r] = d_acc[r] + g * (surface.axis(c) - bg.axis(c));
            }
            losses.pb = losses.pb + pb / b_t;

            // decomposition supervision: acc-scaled PBR terms against the
            // accumulated radiance splits
            if dec_cfg.decomposition {
                let e_dif = out.c_pb_dif * out.acc - out.c_i_acc;
                losses.diffuse = losses.diffuse + e_dif.norm2() / b_t;
                d_cdif[r] += e_dif * (weights.diffuse * two * out.acc / b_t);
                d_ciacc[r] += e_dif * (-weights.diffuse * two / b_t);
                d_acc[r] = d_acc[r]
                    + weights.diffuse * two / b_t * e_dif.dot(out.c_pb_dif);
                let e_spec = out.c_pb_spec * out.acc - out.c_d_acc;
                losses.specular = losses.specular + e_spec.norm2() / b_t;
                d_cspec[r] += e_spec * (weights.specular * two * out.acc / b_t);
                d_cdacc[r] += e_spec * (-weights.specular * two / b_t);
                d_acc[r] = d_acc[r]
                    + weights.specular * two / b_t * e_spec.dot(out.c_pb_spec);
            }
        }
    }

    // ---- backward ----
    // shade tapes -> material accumulators + environment gradients
    if phase2 {
        for r in 0..b {
            if let Some(res) = &shade_results[r] {
                let g = shade_backward(res, d_cdif[r], d_cspec[r]);
                d_mat_albedo[r] = g.d_albedo;
                d_mat_f0[r] = g.d_f0;
                d_mat_rho[r] = g.d_rho;
                let light = rays[r].light.min(scene.envs.len() - 1);
                for (wi, d_l) in g.d_env {
                    scene.envs[light].accumulate_radiance_grad(wi, d_l);
                }
            }
        }
    }

    // per-sample gradient buffers
    let mut d_ci_out = vec![T::zero(); n * 3];
    let mut d_cd_out = vec![T::zero(); n * 3];
    let mut d_beta_out = vec![T::zero(); n * beta_out_len];
    let mut d_rho_out = vec![T::zero(); n];
    let mut d_nunit = vec![Vec3::<T>::zero(); n];
    let mut d_nsigma = vec![Vec3::<T>::zero(); n];
    let mut d_w: Vec<Vec<T>> = marches.iter().map(|m| vec![T::zero(); m.weights.len()]).collect();

    // background term of the radiance composite touches every sample weight
    for (r, res) in marches.iter().enumerate() {
        let g_bg = -d_crad[r].dot(bg) + d_acc[r];
        for j in 0..res.weights.len() {
            d_w[r][j] = d_w[r][j] + g_bg;
        }
    }

    let inv_b = T::one() / b_t;
    for (i, rec) in recs.iter().enumerate() {
        let r = rec.ray;
        let ray = &rays[r];
        // radiance accumulation
        let d_ci_r = d_crad[r] + d_ciacc[r];
        let d_cd_r = d_crad[r] + d_cdacc[r];
        if dec_cfg.decomposition {
            d_ci_out[i * 3] = d_ci_r.x * rec.w;
            d_ci_out[i * 3 + 1] = d_ci_r.y * rec.w;
            d_ci_out[i * 3 + 2] = d_ci_r.z * rec.w;
        }
        if !rec.dropped {
            d_cd_out[i * 3] = d_cd_r.x * rec.w;
            d_cd_out[i * 3 + 1] = d_cd_r.y * rec.w;
            d_cd_out[i * 3 + 2] = d_cd_r.z * rec.w;
        }
        let mut dw = d_ci_r.dot(rec.c_i) + d_cd_r.dot(rec.c_d);

        // material accumulation (gamma, f0, rho)
        let d_alb = d_mat_albedo[r];
        let d_f0 = d_mat_f0[r];
        let d_rho = d_mat_rho[r];
        d_beta_out[i * beta_out_len] = d_alb.x * rec.w;
        d_beta_out[i * beta_out_len + 1] = d_alb.y * rec.w;
        d_beta_out[i * beta_out_len + 2] = d_alb.z * rec.w;
        d_beta_out[i * beta_out_len + 3] = d_f0.x * rec.w;
        d_beta_out[i * beta_out_len + 4] = d_f0.y * rec.w;
        d_beta_out[i * beta_out_len + 5] = d_f0.z * rec.w;
        if dec_cfg.separate_rho {
            d_beta_out[i * beta_out_len + 7] = d_rho * rec.w;
        } else {
            d_rho_out[i] = d_rho * rec.w;
        }
        dw = dw + d_alb.dot(rec.albedo) + d_f0.dot(rec.f0) + d_rho * rec.rho;

        // normal alignment loss: w * |n - n_sigma|^2, differentiable through
        // both the predicted normal and the density-gradient normal
        let diff = rec.n_unit - rec.n_sigma;
        losses.normal = losses.normal + rec.w * diff.norm2() * inv_b;
        d_nunit[i] += diff * (weights.normal * two * rec.w * inv_b);
        d_nsigma[i] += diff * (-weights.normal * two * rec.w * inv_b);
        dw = dw + weights.normal * diff.norm2() * inv_b;

        // back-facing penalty: w * max(0, <n, d>)^2
        let facing = rec.n_unit.dot(ray.dir).max(T::zero());
        losses.backface = losses.backface + rec.w * facing * facing * inv_b;
        if facing > T::zero() {
            d_nunit[i] += ray.dir * (weights.backface * two * rec.w * facing * inv_b);
            dw = dw + weights.backface * facing * facing * inv_b;
        }

        d_w[r][rec.j] = d_w[r][rec.j] + dw;
    }

    // view-dependent head backward: latent + normal + kappa contributions
    let mut d_lat = vec![T::zero(); n * latent];
    let mut d_kappa = vec![T::zero(); n];
    {
        let d_cd_in = scene.decoders.d_cd.backward_batch(&cache_cd, &d_cd_out);
        for (i, rec) in recs.iter().enumerate() {
            let wo = -rays[rec.ray].dir;
            let (dn, dk) = cd_input_backward(
                &dec_cfg,
                &rec.cd_aux,
                wo,
                rec.n_unit,
                rec.kappa,
                &d_cd_in[i * cd_in_len..(i + 1) * cd_in_len],
                &mut d_lat[i * latent..(i + 1) * latent],
            );
            d_nunit[i] += dn;
            d_kappa[i] = d_kappa[i] + dk;
        }
    }

    if dec_cfg.decomposition {
        let d_ci_in = scene.decoders.d_ci.backward_batch(&cache_ci, &d_ci_out);
        for i in 0..n {
            ci_input_backward(
                &dec_cfg,
                &d_ci_in[i * ci_in_len..(i + 1) * ci_in_len],
                &mut d_lat[i * latent..(i + 1) * latent],
            );
        }
    }

    if !dec_cfg.separate_rho {
        let d_rho_in = scene.decoders.d_rho.backward_batch(&cache_rho, &d_rho_out);
        for (i, rec) in recs.iter().enumerate() {
            d_kappa[i] = d_kappa[i]
                + rho_input_backward(&dec_cfg, rec.kappa, &d_rho_in[i * rho_in_len..(i + 1) * rho_in_len]);
        }
    }

    // fold kappa gradients into the beta head output
    for i in 0..n {
        d_beta_out[i * beta_out_len + 6] = d_beta_out[i * beta_out_len + 6] + d_kappa[i];
    }
    {
        let d_beta_in = scene.decoders.d_beta.backward_batch(&cache_beta, &d_beta_out);
        for i in 0..n {
            for (dl, db) in d_lat[i * latent..(i + 1) * latent].iter_mut().zip(&d_beta_in[i * latent..]) {
                *dl = *dl + *db;
            }
        }
    }

    // normal head through the unit normalization
    let mut d_nraw = vec![T::zero(); n * 3];
    for (i, rec) in recs.iter().enumerate() {
        if rec.degenerate_n {
            continue;
        }
        let d = normalize_backward(rec.n_raw_norm, rec.n_unit, d_nunit[i]);
        d_nraw[i * 3] = d.x;
        d_nraw[i * 3 + 1] = d.y;
        d_nraw[i * 3 + 2] = d.z;
    }
    {
        let d_n_in = scene.decoders.d_n.backward_batch(&cache_n, &d_nraw);
        for i in 0..n {
            for (dl, db) in d_lat[i * latent..(i + 1) * latent].iter_mut().zip(&d_n_in[i * latent..]) {
                *dl = *dl + *db;
            }
        }
    }

    // latent -> appearance factors
    for (i, _) in recs.iter().enumerate() {
        scene.appearance.backward_appearance(&app_stencils[i], &d_lat[i * latent..(i + 1) * latent]);
    }

    // density-gradient normals -> density factors
    for (i, rec) in recs.iter().enumerate() {
        if let Some(cache) = &rec.n_sigma_cache {
            let d = d_nsigma[i];
            if d.x != T::zero() || d.y != T::zero() || d.z != T::zero() {
                scene.density.density_normal_backward(cache, d);
            }
        }
    }

    // compositing weights -> density factors
    for (r, res) in marches.iter().enumerate() {
        if res.weights.is_empty() {
            continue;
        }
        let d_sigma = march_backward_sigma(res, &d_w[r]);
        for (j, ds) in d_sigma.into_iter().enumerate() {
            if ds == T::zero() {
                continue;
            }
            if let Some(st) = &res.stencils[j] {
                let d_raw = ds * scene.density.density_act_grad(res.raws[j]);
                scene.density.backward_raw(st, d_raw);
            }
        }
    }

    let batch = RenderBatch { rays: rays.to_vec(), gt: gt.to_vec(), per_ray: per_ray_out };
    (batch, BatchStats { losses, n_hit })
}
