//! Image-overfitting comparison between the pyramid parameterization, direct
//! pixel optimization (a single-level pyramid) and a spherical-Gaussian
//! mixture, all driven by the shared optimizer.

use super::{fit_sg, LaplacianPyramidEnv};
use crate::img::ImageRgb;
use crate::num::Real;
use crate::optim::{AdamConfig, AdamW};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FitMethod {
    /// Laplacian pyramid with this many levels.
    Pol { levels: usize },
    /// Direct per-pixel optimization (single-level pyramid).
    Pixels,
    /// Spherical-Gaussian mixture with this many lobes.
    Sg { lobes: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub iters: usize,
    pub lr: f64,
    /// Record the PSNR every this many iterations (and at the last).
    pub record_every: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { iters: 2000, lr: 0.01, record_every: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct FitHistory {
    /// (iteration, reconstruction psnr in dB) samples.
    pub psnr: Vec<(usize, f64)>,
    pub final_psnr: f64,
}

impl FitHistory {
    /// First recorded iteration reaching `threshold` dB, if any.
    pub fn iters_to_reach(&self, threshold: f64) -> Option<usize> {
        self.psnr.iter().find(|(_, p)| *p >= threshold).map(|(i, _)| *i)
    }
}

fn psnr_db(mse: f64) -> f64 {
    if mse <= 0.0 {
        99.0
    } else {
        (-10.0) * mse.log10()
    }
}

/// Fits `target` with the chosen representation; returns the final image and
/// the PSNR trace.
pub fn fit_envmap<T: Real>(
    target: &ImageRgb<T>,
    method: FitMethod,
    opts: FitOptions,
) -> crate::Result<(ImageRgb<T>, FitHistory)> {
    match method {
        FitMethod::Sg { lobes } => {
            let (sg, trace) = fit_sg(target, lobes, opts.iters, opts.lr)?;
            let psnr: Vec<(usize, f64)> = trace
                .iter()
                .enumerate()
                .filter(|(i, _)| i % opts.record_every == 0 || *i == opts.iters - 1)
                .map(|(i, &mse)| (i, psnr_db(mse)))
                .collect();
            let final_psnr = psnr.last().map(|(_, p)| *p).unwrap_or(0.0);
            Ok((sg.render(target.w, target.h), FitHistory { psnr, final_psnr }))
        }
        FitMethod::Pol { levels } => fit_pyramid(target, levels, opts),
        FitMethod::Pixels => fit_pyramid(target, 1, opts),
    }
}

fn fit_pyramid<T: Real>(
    target: &ImageRgb<T>,
    levels: usize,
    opts: FitOptions,
) -> crate::Result<(ImageRgb<T>, FitHistory)> {
    let init = ImageRgb::constant(target.w, target.h, crate::math::Rgb::splat(T::of(0.5)));
    let mut env = LaplacianPyramidEnv::build(&init, levels)?;
    let mut opt = AdamW::new(AdamConfig { lr: T::of(opts.lr), ..Default::default() });
    let n = target.data.len();
    let mut history = Vec::new();
    let mut last_psnr = 0.0;
    for it in 0..opts.iters {
        let recon = env.reconstruct();
        let mut d_recon = ImageRgb::zeros(target.w, target.h);
        let mut mse = 0.0;
        for i in 0..n {
            let d = recon.data[i] - target.data[i];
            mse += d.as_f64() * d.as_f64();
            d_recon.data[i] = T::of(2.0) * d / T::of_usize(n);
        }
        mse /= n as f64;
        last_psnr = psnr_db(mse);
        if it % opts.record_every == 0 || it == opts.iters - 1 {
            history.push((it, last_psnr));
        }
        env.zero_grad();
        env.accumulate_image_grad(&d_recon);
        env.backward_levels();
        opt.begin_step();
        for l in env.levels.iter_mut() {
            opt.update(l, T::one());
        }
    }
    env.refresh();
    Ok((env.reconstruct(), FitHistory { psnr: history, final_psnr: last_psnr }))
}

/// Synthetic HDR test environment: smooth sky gradient, a bright compact sun,
/// mid-frequency blobs and stripes. Deterministic for a given seed.
pub fn synthetic_hdr_env<T: Real>(w: usize, h: usize, seed: u64) -> ImageRgb<T> {
    use crate::sampler::Sampler;
    let mut img = ImageRgb::zeros(w, h);
    let mut s = Sampler::from_seed(seed);
    // blobs: (x, y, radius, intensity rgb)
    let mut blobs = Vec::new();
    for _ in 0..24 {
        blobs.push((
            s.range(0.0, w as f64),
            s.range(0.2 * h as f64, 0.8 * h as f64),
            s.range(0.02 * h as f64, 0.12 * h as f64),
            [s.range(0.5, 3.0), s.range(0.5, 3.0), s.range(0.5, 3.0)],
        ));
    }
    let sun = (0.7 * w as f64, 0.25 * h as f64, 0.015 * w as f64);
    for y in 0..h {
        for x in 0..w {
            let fy = y as f64 / (h - 1) as f64;
            // sky gradient: brighter top, slight color shift
            let mut r = 0.35 + 1.3 * (1.0 - fy);
            let mut g = 0.45 + 1.2 * (1.0 - fy);
            let mut b = 0.65 + 1.1 * (1.0 - fy);
            // stripes (mid frequency)
            let stripe = 0.25 * (x as f64 * 24.0 * std::f64::consts::TAU / w as f64).sin()
                * (1.0 - (fy - 0.6).abs()).max(0.0);
            r += stripe.max(0.0);
            g += 0.5 * stripe.max(0.0);
            for (bx, by, rad, amp) in &blobs {
                // wrap-aware distance in x
                let mut dx = (x as f64 - bx).abs();
                dx = dx.min(w as f64 - dx);
                let dy = y as f64 - by;
                let d2 = (dx * dx + dy * dy) / (rad * rad);
                let e = (-d2).exp();
                r += amp[0] * e;
                g += amp[1] * e;
                b += amp[2] * e;
            }
            // sun
            let mut dx = (x as f64 - sun.0).abs();
            dx = dx.min(w as f64 - dx);
            let dy = y as f64 - sun.1;
            let d2 = (dx * dx + dy * dy) / (sun.2 * sun.2);
            let e = 50.0 * (-d2).exp();
            r += e;
            g += 0.95 * e;
            b += 0.85 * e;
            img.set_px(x, y, crate::math::Rgb::of(r, g, b));
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixels_equals_single_level_pol() {
        let target = synthetic_hdr_env::<f64>(32, 16, 3);
        let opts = FitOptions { iters: 40, lr: 0.05, record_every: 5 };
        let (img_a, _) = fit_envmap(&target, FitMethod::Pixels, opts).unwrap();
        let (img_b, _) = fit_envmap(&target, FitMethod::Pol { levels: 1 }, opts).unwrap();
        assert!(img_a.max_abs_diff(&img_b) < 1e-12);
    }

    #[test]
    fn pol_track_reaches_threshold_no_later_than_pixels() {
        let target = synthetic_hdr_env::<f64>(64, 32, 7);
        let opts = FitOptions { iters: 300, lr: 0.02, record_every: 5 };
        let (_, hist_pol) = fit_envmap(&target, FitMethod::Pol { levels: 6 }, opts).unwrap();
        let (_, hist_pix) = fit_envmap(&target, FitMethod::Pixels, opts).unwrap();
        let threshold = hist_pix.final_psnr;
        let it_pol = hist_pol.iters_to_reach(threshold);
        assert!(it_pol.is_some(), "pol never reached pixel baseline {threshold:.2} dB");
        assert!(
            it_pol.unwrap() <= opts.iters - 1,
            "pol reached {threshold:.2} dB at {:?}",
            it_pol
        );
        assert!(
            hist_pol.final_psnr >= hist_pix.final_psnr,
            "pol {:.2} dB < pixels {:.2} dB",
            hist_pol.final_psnr,
            hist_pix.final_psnr
        );
    }
}
