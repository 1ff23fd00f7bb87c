//! Spherical-Gaussian environment mixture: the baseline representation the
//! pyramid is compared against on the image-fitting task.

use crate::img::ImageRgb;
use crate::math::{spherical_dir, Rgb, Vec3};
use crate::num::Real;
use crate::optim::{AdamConfig, AdamW};
use crate::param::Pvec;

#[derive(Clone, Copy, Debug)]
pub struct SgLobe<T> {
    pub axis: Vec3<T>,
    pub sharpness: T,
    pub amplitude: Rgb<T>,
}

/// Mixture of lobes; parameters are stored unconstrained (raw axis,
/// log-sharpness, log-amplitude) in a single flat vector of 7 per lobe.
#[derive(Clone, Debug)]
pub struct SgMixture<T> {
    pub n_lobes: usize,
    pub params: Pvec<T>,
}

const STRIDE: usize = 7;

impl<T: Real> SgMixture<T> {
    /// Lobes spread on a Fibonacci sphere, moderate sharpness, amplitude
    /// seeded from `mean_amp`.
    pub fn new(n_lobes: usize, mean_amp: Rgb<T>) -> crate::Result<Self> {
        if n_lobes == 0 {
            return Err(crate::Error::Config("SG mixture needs at least one lobe".into()));
        }
        let mut params = Pvec::zeros(n_lobes * STRIDE);
        let golden = T::PI() * (T::of(3.0) - T::of(5.0).sqrt());
        for l in 0..n_lobes {
            let i = T::of_usize(l) + T::of(0.5);
            let z = T::one() - T::of(2.0) * i / T::of_usize(n_lobes);
            let r = (T::one() - z * z).max(T::zero()).sqrt();
            let phi = golden * T::of_usize(l);
            let base = l * STRIDE;
            params.v[base] = r * phi.cos();
            params.v[base + 1] = r * phi.sin();
            params.v[base + 2] = z;
            params.v[base + 3] = T::of(2.0); // log sharpness ~ 7.4
            params.v[base + 4] = mean_amp.x.max(T::of(1e-3)).ln();
            params.v[base + 5] = mean_amp.y.max(T::of(1e-3)).ln();
            params.v[base + 6] = mean_amp.z.max(T::of(1e-3)).ln();
        }
        Ok(Self { n_lobes, params })
    }

    pub fn lobe(&self, l: usize) -> SgLobe<T> {
        let base = l * STRIDE;
        let raw = Vec3::new(self.params.v[base], self.params.v[base + 1], self.params.v[base + 2]);
        SgLobe {
            axis: raw.try_normalized(T::of(1e-12)).unwrap_or(Vec3::new(T::zero(), T::zero(), T::one())),
            sharpness: self.params.v[base + 3].exp(),
            amplitude: Rgb::new(
                self.params.v[base + 4].exp(),
                self.params.v[base + 5].exp(),
                self.params.v[base + 6].exp(),
            ),
        }
    }

    pub fn eval(&self, dir: Vec3<T>) -> Rgb<T> {
        let mut acc = Rgb::zero();
        for l in 0..self.n_lobes {
            let lobe = self.lobe(l);
            let e = (lobe.sharpness * (dir.dot(lobe.axis) - T::one())).exp();
            acc += lobe.amplitude * e;
        }
        acc
    }

    pub fn render(&self, w: usize, h: usize) -> ImageRgb<T> {
        let mut img = ImageRgb::zeros(w, h);
        for y in 0..h {
            let theta = (T::of_usize(y) + T::of(0.5)) / T::of_usize(h) * T::PI();
            for x in 0..w {
                let phi = (T::of_usize(x) + T::of(0.5)) / T::of_usize(w) * T::of(2.0) * T::PI();
                img.set_px(x, y, self.eval(spherical_dir(theta, phi)));
            }
        }
        img
    }

    /// Accumulates gradients of sum_px dot(residual_px, eval(dir_px)) where
    /// `residual` plays the role of d(loss)/d(rendered pixel).
    pub fn accumulate_render_grad(&mut self, residual: &ImageRgb<T>) {
        let (w, h) = (residual.w, residual.h);
        for y in 0..h {
            let theta = (T::of_usize(y) + T::of(0.5)) / T::of_usize(h) * T::PI();
            for x in 0..w {
                let phi = (T::of_usize(x) + T::of(0.5)) / T::of_usize(w) * T::of(2.0) * T::PI();
                let dir = spherical_dir(theta, phi);
                let r = residual.px(x, y);
                for l in 0..self.n_lobes {
                    let base = l * STRIDE;
                    let raw = Vec3::new(
                        self.params.v[base],
                        self.params.v[base + 1],
                        self.params.v[base + 2],
                    );
                    let raw_norm = raw.norm().max(T::of(1e-12));
                    let axis = raw / raw_norm;
                    let lambda = self.params.v[base + 3].exp();
                    let amp = Rgb::new(
                        self.params.v[base + 4].exp(),
                        self.params.v[base + 5].exp(),
                        self.params.v[base + 6].exp(),
                    );
                    let mu = dir.dot(axis);
                    let e = (lambda * (mu - T::one())).exp();
                    let r_amp = r.dot(amp);
                    // log-amplitude
                    self.params.g[base + 4] = self.params.g[base + 4] + r.x * amp.x * e;
                    self.params.g[base + 5] = self.params.g[base + 5] + r.y * amp.y * e;
                    self.params.g[base + 6] = self.params.g[base + 6] + r.z * amp.z * e;
                    // log-sharpness
                    self.params.g[base + 3] =
                        self.params.g[base + 3] + r_amp * e * (mu - T::one()) * lambda;
                    // raw axis through normalization
                    let d_mu = r_amp * e * lambda;
                    let d_axis = dir * d_mu;
                    let d_raw = (d_axis - axis * d_axis.dot(axis)) / raw_norm;
                    self.params.g[base] = self.params.g[base] + d_raw.x;
                    self.params.g[base + 1] = self.params.g[base + 1] + d_raw.y;
                    self.params.g[base + 2] = self.params.g[base + 2] + d_raw.z;
                }
            }
        }
    }
}

/// L2-fits a mixture to a target equirect image with the shared optimizer;
/// returns the mixture and the mean-squared-error trace.
pub fn fit_sg<T: Real>(
    target: &ImageRgb<T>,
    n_lobes: usize,
    iters: usize,
    lr: f64,
) -> crate::Result<(SgMixture<T>, Vec<f64>)> {
    let mean = Rgb::new(
        channel_mean(target, 0),
        channel_mean(target, 1),
        channel_mean(target, 2),
    );
    let mut sg = SgMixture::new(n_lobes, mean)?;
    let mut opt = AdamW::new(AdamConfig { lr: T::of(lr), ..Default::default() });
    let n_px = (target.w * target.h) as f64;
    let mut trace = Vec::with_capacity(iters);
    for _ in 0..iters {
        let rendered = sg.render(target.w, target.h);
        let mut residual = ImageRgb::zeros(target.w, target.h);
        let mut mse = 0.0;
        for i in 0..rendered.data.len() {
            let d = rendered.data[i] - target.data[i];
            mse += d.as_f64() * d.as_f64();
            residual.data[i] = T::of(2.0) * d / T::of_usize(rendered.data.len());
        }
        mse /= 3.0 * n_px;
        trace.push(mse);
        sg.params.zero_grad();
        sg.accumulate_render_grad(&residual);
        opt.begin_step();
        opt.update(&mut sg.params, T::one());
    }
    Ok((sg, trace))
}

fn channel_mean<T: Real>(img: &ImageRgb<T>, c: usize) -> T {
    let n = img.w * img.h;
    (0..n).map(|p| img.data[p * 3 + c]).sum::<T>() / T::of_usize(n)
}
