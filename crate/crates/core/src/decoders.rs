//! The five decoding networks that turn latent appearance into radiance and
//! material parameters, plus the input-assembly glue (reflected direction,
//! integrated directional encoding, Fourier features) and its backward pass.

use crate::encoding::{
    fourier_backward, fourier_features, fourier_len, ide_backward, ide_encode, SH4_LEN,
};
use crate::math::{reflect, Rgb, Vec3};
use crate::mlp::{Act, Mlp, OutAct};
use crate::num::Real;
use crate::sampler::Sampler;

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub rho_hidden: usize,
    /// Fourier frequencies for the position input of the radiance decoders.
    pub n_freq_pos: usize,
    /// Fourier frequencies for the kappa input of the rho head.
    pub n_freq_kappa: usize,
    /// Feed an encoding of the sample position to the radiance decoders.
    pub encode_position: bool,
    /// Probability of zeroing the view-dependent output during training.
    pub dropout_p: f64,
    /// Split radiance into view-independent + view-dependent heads. When
    /// false a single view-conditioned network predicts the full radiance.
    pub decomposition: bool,
    /// Ablation: predict the BRDF roughness directly from appearance instead
    /// of through the kappa-to-rho map.
    pub separate_rho: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 24,
            hidden: 128,
            rho_hidden: 10,
            n_freq_pos: 2,
            n_freq_kappa: 2,
            encode_position: true,
            dropout_p: 0.01,
            decomposition: true,
            separate_rho: false,
        }
    }
}

impl DecoderConfig {
    pub fn pos_len(&self) -> usize {
        if self.encode_position {
            fourier_len(3, self.n_freq_pos)
        } else {
            0
        }
    }

    pub fn ci_input_len(&self) -> usize {
        self.latent_dim + self.pos_len()
    }

    pub fn cd_input_len(&self) -> usize {
        if self.decomposition {
            self.latent_dim + self.pos_len() + 3 + 1 + SH4_LEN
        } else {
            // single radiance net: latent, position encoding, view encoding
            self.latent_dim + self.pos_len() + fourier_len(3, self.n_freq_pos)
        }
    }

    pub fn beta_out_len(&self) -> usize {
        if self.separate_rho {
            8
        } else {
            7
        }
    }

    pub fn rho_input_len(&self) -> usize {
        fourier_len(1, self.n_freq_kappa)
    }
}

/// Physically-based parameters at one point.
#[derive(Clone, Copy, Debug)]
pub struct MaterialSample<T> {
    pub normal: Vec3<T>,
    pub albedo: Rgb<T>,
    pub f0: Rgb<T>,
    pub rho: T,
    pub kappa: T,
}

impl<T: Real> MaterialSample<T> {
    pub fn zero() -> Self {
        Self {
            normal: Vec3::zero(),
            albedo: Rgb::zero(),
            f0: Rgb::zero(),
            rho: T::zero(),
            kappa: T::zero(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecoderSet<T> {
    pub cfg: DecoderConfig,
    pub d_ci: Mlp<T>,
    pub d_cd: Mlp<T>,
    pub d_n: Mlp<T>,
    pub d_beta: Mlp<T>,
    pub d_rho: Mlp<T>,
}

impl<T: Real> DecoderSet<T> {
    pub fn new(cfg: DecoderConfig) -> Self {
        let h = cfg.hidden;
        let softplus3 = OutAct::Uniform(Act::SoftplusB(3.0));
        let d_ci = Mlp::new(&[cfg.ci_input_len(), h, h, 3], Act::Relu, softplus3.clone());
        let d_cd = Mlp::new(&[cfg.cd_input_len(), h, h, 3], Act::Relu, softplus3.clone());
        let d_n = Mlp::new(&[cfg.latent_dim, h, h, 3], Act::Relu, OutAct::Uniform(Act::Linear));
        let mut beta_acts = vec![Act::Sigmoid; 6];
        beta_acts.push(Act::SoftplusB(3.0));
        if cfg.separate_rho {
            beta_acts.push(Act::Sigmoid);
        }
        let d_beta = Mlp::new(
            &[cfg.latent_dim, h, h, cfg.beta_out_len()],
            Act::Relu,
            OutAct::PerChannel(beta_acts),
        );
        let d_rho = Mlp::new(
            &[cfg.rho_input_len(), cfg.rho_hidden, cfg.rho_hidden, 1],
            Act::Relu,
            OutAct::Uniform(Act::Sigmoid),
        );
        Self { cfg, d_ci, d_cd, d_n, d_beta, d_rho }
    }

    pub fn init(&mut self, sampler: &mut Sampler) {
        self.d_ci.init(sampler);
        self.d_cd.init(sampler);
        self.d_n.init(sampler);
        self.d_beta.init(sampler);
        self.d_rho.init(sampler);
    }

    pub fn zero_grad(&mut self) {
        self.d_ci.zero_grad();
        self.d_cd.zero_grad();
        self.d_n.zero_grad();
        self.d_beta.zero_grad();
        self.d_rho.zero_grad();
    }

    /// c_i = D_ci(a [, FF(x)]).
    pub fn decode_view_independent(&self, a: &[T], x: Vec3<T>) -> Rgb<T> {
        let mut input = Vec::with_capacity(self.cfg.ci_input_len());
        assemble_ci_input(&self.cfg, a, x, &mut input);
        let y = self.d_ci.forward(&input);
        Rgb::new(y[0], y[1], y[2])
    }

    /// c_d = D_cd(a, omega_r, <omega_r, n>, IDE(omega_r, kappa) [, FF(x)]).
    /// `wo` points from the surface toward the viewer. During training the
    /// whole output is zeroed with probability `dropout_p` per sample.
    pub fn decode_view_dependent(
        &self,
        a: &[T],
        x: Vec3<T>,
        wo: Vec3<T>,
        n: Vec3<T>,
        kappa: T,
        training: bool,
        sampler: &mut Sampler,
    ) -> Rgb<T> {
        if training && sampler.uniform::<T>() < T::of(self.cfg.dropout_p) {
            return Rgb::zero();
        }
        let mut input = Vec::with_capacity(self.cfg.cd_input_len());
        let _aux = assemble_cd_input(&self.cfg, a, x, wo, n, kappa, &mut input);
        let y = self.d_cd.forward(&input);
        Rgb::new(y[0], y[1], y[2])
    }

    /// (normal, albedo, f0, kappa); the normal is `None` when the raw head
    /// output is degenerate and the caller must substitute the density normal.
    pub fn decode_material(&self, a: &[T]) -> DecodedMaterial<T> {
        let raw_n = self.d_n.forward(a);
        let raw_n = Vec3::new(raw_n[0], raw_n[1], raw_n[2]);
        let normal = raw_n.try_normalized(T::of(1e-8));
        let beta = self.d_beta.forward(a);
        DecodedMaterial {
            normal,
            albedo: Rgb::new(beta[0], beta[1], beta[2]),
            f0: Rgb::new(beta[3], beta[4], beta[5]),
            kappa: beta[6],
            rho_direct: self.cfg.separate_rho.then(|| beta[7]),
        }
    }

    /// rho = D_rho(FF(kappa)), strictly inside (0,1).
    pub fn kappa_to_rho(&self, kappa: T) -> T {
        let mut input = Vec::with_capacity(self.cfg.rho_input_len());
        fourier_features(&[kappa], self.cfg.n_freq_kappa, &mut input);
        self.d_rho.forward(&input)[0]
    }

    pub fn param_count(&self) -> usize {
        self.d_ci.param_count()
            + self.d_cd.param_count()
            + self.d_n.param_count()
            + self.d_beta.param_count()
            + self.d_rho.param_count()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DecodedMaterial<T> {
    pub normal: Option<Vec3<T>>,
    pub albedo: Rgb<T>,
    pub f0: Rgb<T>,
    pub kappa: T,
    pub rho_direct: Option<T>,
}

/// Cached intermediates of the view-dependent input assembly.
#[derive(Clone, Copy, Debug)]
pub struct CdAux<T> {
    pub omega_r: Vec3<T>,
}

pub fn assemble_ci_input<T: Real>(cfg: &DecoderConfig, a: &[T], x: Vec3<T>, out: &mut Vec<T>) {
    debug_assert_eq!(a.len(), cfg.latent_dim);
    out.extend_from_slice(a);
    if cfg.encode_position {
        fourier_features(&x.to_array(), cfg.n_freq_pos, out);
    }
}

pub fn assemble_cd_input<T: Real>(
    cfg: &DecoderConfig,
    a: &[T],
    x: Vec3<T>,
    wo: Vec3<T>,
    n: Vec3<T>,
    kappa: T,
    out: &mut Vec<T>,
) -> CdAux<T> {
    debug_assert_eq!(a.len(), cfg.latent_dim);
    debug_assert!((wo.norm() - T::one()).abs() < T::of(1e-4), "wo must be unit");
    out.extend_from_slice(a);
    if cfg.encode_position {
        fourier_features(&x.to_array(), cfg.n_freq_pos, out);
    }
    if !cfg.decomposition {
        // single radiance net: encoded raw view direction, no reflection
        fourier_features(&wo.to_array(), cfg.n_freq_pos, out);
        return CdAux { omega_r: wo };
    }
    let omega_r = reflect(wo, n);
    out.extend_from_slice(&omega_r.to_array());
    out.push(omega_r.dot(n));
    out.extend_from_slice(&ide_encode(omega_r, kappa));
    CdAux { omega_r }
}

/// Splits the view-dependent input gradient into (d_a accumulated in-place,
/// d_n, d_kappa). Position gradients are discarded (positions are not
/// learnable).
pub fn cd_input_backward<T: Real>(
    cfg: &DecoderConfig,
    aux: &CdAux<T>,
    wo: Vec3<T>,
    n: Vec3<T>,
    kappa: T,
    d_input: &[T],
    d_a: &mut [T],
) -> (Vec3<T>, T) {
    let al = cfg.latent_dim;
    for (g, d) in d_a.iter_mut().zip(&d_input[..al]) {
        *g = *g + *d;
    }
    if !cfg.decomposition {
        return (Vec3::zero(), T::zero());
    }
    let mut off = al + cfg.pos_len();
    let d_omega_direct = Vec3::new(d_input[off], d_input[off + 1], d_input[off + 2]);
    off += 3;
    let d_dot = d_input[off];
    off += 1;
    let (d_omega_ide, d_kappa) = ide_backward(aux.omega_r, kappa, &d_input[off..off + SH4_LEN]);

    let d_omega = d_omega_direct + d_omega_ide + n * d_dot;
    // omega_r = 2 (wo.n) n - wo ;  d n from omega_r and from the dot term
    let two = T::of(2.0);
    let d_n = wo * (two * d_omega.dot(n)) + d_omega * (two * wo.dot(n)) + aux.omega_r * d_dot;
    (d_n, d_kappa)
}

pub fn ci_input_backward<T: Real>(cfg: &DecoderConfig, d_input: &[T], d_a: &mut [T]) {
    for (g, d) in d_a.iter_mut().zip(&d_input[..cfg.latent_dim]) {
        *g = *g + *d;
    }
}

/// Backward through unit normalization: d(raw) from d(unit), where
/// unit = raw/|raw|.
#[inline]
pub fn normalize_backward<T: Real>(raw_norm: T, unit: Vec3<T>, d_unit: Vec3<T>) -> Vec3<T> {
    (d_unit - unit * d_unit.dot(unit)) / raw_norm
}

/// Backward through the kappa Fourier encoding of the rho head.
pub fn rho_input_backward<T: Real>(cfg: &DecoderConfig, kappa: T, d_input: &[T]) -> T {
    let mut d = [T::zero()];
    fourier_backward(&[kappa], cfg.n_freq_kappa, d_input, &mut d);
    d[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::MlpCache;

    fn decoders(seed: u64) -> DecoderSet<f64> {
        let cfg = DecoderConfig { latent_dim: 8, hidden: 16, ..Default::default() };
        let mut d = DecoderSet::new(cfg);
        d.init(&mut Sampler::from_seed(seed));
        d
    }

    #[test]
    fn zero_init_ci_is_softplus_closed_form() {
        let cfg = DecoderConfig { latent_dim: 8, hidden: 16, ..Default::default() };
        let d = DecoderSet::<f64>::new(cfg);
        let a = vec![0.4; 8];
        let c = d.decode_view_independent(&a, Vec3::of(0.1, 0.2, 0.3));
        let expect = 2f64.ln() / 3.0;
        assert!((c.x - expect).abs() < 1e-15);
        assert!((c.y - expect).abs() < 1e-15 && (c.z - expect).abs() < 1e-15);
    }

    #[test]
    fn ci_strictly_positive() {
        let d = decoders(3);
        let mut s = Sampler::from_seed(8);
        for _ in 0..20 {
            let a: Vec<f64> = (0..8).map(|_| s.range(-2.0, 2.0)).collect();
            let c = d.decode_view_independent(&a, Vec3::of(0.0, 0.5, -0.5));
            assert!(c.x > 0.0 && c.y > 0.0 && c.z > 0.0);
        }
    }

    #[test]
    fn retro_reflection_axis() {
        let n = Vec3::<f64>::of(0.0, 0.6, 0.8);
        let wo = n;
        let cfg = DecoderConfig::default();
        let mut input = Vec::new();
        let aux = assemble_cd_input(&cfg, &vec![0.0; cfg.latent_dim], Vec3::zero(), wo, n, 0.3, &mut input);
        assert!((aux.omega_r - n).norm() < 1e-12);
    }

    #[test]
    fn zero_init_cd_matches_ci_closed_form() {
        let cfg = DecoderConfig { latent_dim: 8, hidden: 16, ..Default::default() };
        let d = DecoderSet::<f64>::new(cfg);
        let a = vec![0.2; 8];
        let n = Vec3::of(0.0, 0.0, 1.0);
        let mut s = Sampler::from_seed(1);
        let c = d.decode_view_dependent(&a, Vec3::zero(), n, n, 0.1, false, &mut s);
        let expect = 2f64.ln() / 3.0;
        assert!((c.x - expect).abs() < 1e-15);
    }

    #[test]
    fn dropout_rate_within_binomial_band() {
        let d = decoders(5);
        let a = vec![0.3; 8];
        let n = Vec3::of(0.0, 0.0, 1.0);
        let wo = Vec3::of(0.0, 0.6, 0.8);
        let mut s = Sampler::from_seed(1234);
        let total = 100_000;
        let mut zeroed = 0;
        for _ in 0..total {
            let c = d.decode_view_dependent(&a, Vec3::zero(), wo, n, 0.1, true, &mut s);
            if c.x == 0.0 && c.y == 0.0 && c.z == 0.0 {
                zeroed += 1;
            }
        }
        // binomial(1e5, 0.01): mean 1000, sigma ~= 31.5; 3-sigma band
        assert!((905..=1095).contains(&zeroed), "zeroed = {zeroed}");
        // evaluation mode: deterministic, never zeroed
        let c1 = d.decode_view_dependent(&a, Vec3::zero(), wo, n, 0.1, false, &mut s);
        let c2 = d.decode_view_dependent(&a, Vec3::zero(), wo, n, 0.1, false, &mut s);
        assert_eq!(c1, c2);
        assert!(c1.x > 0.0);
    }

    #[test]
    fn material_ranges_and_unit_normal() {
        let d = decoders(17);
        let mut s = Sampler::from_seed(2);
        for _ in 0..30 {
            let a: Vec<f64> = (0..8).map(|_| s.range(-3.0, 3.0)).collect();
            let m = d.decode_material(&a);
            let n = m.normal.expect("non-degenerate");
            assert!((n.norm() - 1.0).abs() < 1e-12);
            for v in [m.albedo.x, m.albedo.y, m.albedo.z, m.f0.x, m.f0.y, m.f0.z] {
                assert!((0.0..=1.0).contains(&v));
            }
            assert!(m.kappa > 0.0);
        }
    }

    #[test]
    fn degenerate_normal_flagged() {
        let cfg = DecoderConfig { latent_dim: 4, hidden: 8, ..Default::default() };
        let d = DecoderSet::<f64>::new(cfg); // zero weights -> zero raw normal
        let m = d.decode_material(&[0.5, -0.5, 0.25, 0.1]);
        assert!(m.normal.is_none());
    }

    #[test]
    fn rho_zero_init_is_half_and_bounded() {
        let cfg = DecoderConfig { latent_dim: 8, hidden: 16, ..Default::default() };
        let d = DecoderSet::<f64>::new(cfg);
        for k in [0.0, 0.3, 1.0, 7.0, 100.0] {
            assert_eq!(d.kappa_to_rho(k), 0.5);
        }
        let d = decoders(23);
        for i in 0..50 {
            let rho = d.kappa_to_rho(i as f64 * 0.2);
            assert!(rho > 0.0 && rho < 1.0);
        }
    }

    #[test]
    fn rho_gradient_matches_fd() {
        let mut d = decoders(29);
        let kappa = 0.8;
        let mut input = Vec::new();
        fourier_features(&[kappa], d.cfg.n_freq_kappa, &mut input);
        let mut cache = MlpCache::default();
        let _ = d.d_rho.forward_batch(&input, 1, Some(&mut cache));
        let d_in = d.d_rho.backward_batch(&cache, &[1.0]);
        let analytic = rho_input_backward(&d.cfg, kappa, &d_in);
        let h = 1e-5;
        let fd = (d.kappa_to_rho(kappa + h) - d.kappa_to_rho(kappa - h)) / (2.0 * h);
        assert!((analytic - fd).abs() <= 1e-8 + 1e-4 * fd.abs(), "{analytic} vs {fd}");
    }

    #[test]
    fn material_jacobian_matches_fd() {
        let mut d = decoders(31);
        let a: Vec<f64> = (0..8).map(|i| 0.2 * (i as f64 - 3.5)).collect();
        // objective: mix of all decoded channels incl. unit normal
        let wn = Vec3::of(0.3, -0.2, 0.5);
        let wa = Vec3::of(0.7, 0.1, -0.4);
        let wf = Vec3::of(-0.3, 0.8, 0.2);
        let wk = 0.6;
        let obj = |d: &DecoderSet<f64>, a: &[f64]| {
            let m = d.decode_material(a);
            m.normal.unwrap().dot(wn) + m.albedo.dot(wa) + m.f0.dot(wf) + m.kappa * wk
        };
        // analytic: backward through both heads
        let raw = d.d_n.forward(&a);
        let raw_v = Vec3::new(raw[0], raw[1], raw[2]);
        let unit = raw_v.normalized();
        let d_raw = normalize_backward(raw_v.norm(), unit, wn);
        let mut cache_n = MlpCache::default();
        let _ = d.d_n.forward_batch(&a, 1, Some(&mut cache_n));
        let da_n = d.d_n.backward_batch(&cache_n, &d_raw.to_array());
        let mut cache_b = MlpCache::default();
        let _ = d.d_beta.forward_batch(&a, 1, Some(&mut cache_b));
        let da_b = d.d_beta.backward_batch(&cache_b, &[wa.x, wa.y, wa.z, wf.x, wf.y, wf.z, wk]);

        let h = 1e-5;
        for i in 0..8 {
            let mut hi = a.clone();
            hi[i] += h;
            let mut lo = a.clone();
            lo[i] -= h;
            let fd = (obj(&d, &hi) - obj(&d, &lo)) / (2.0 * h);
            let an = da_n[i] + da_b[i];
            assert!((an - fd).abs() <= 1e-7 + 1e-4 * fd.abs().max(an.abs()), "a[{i}]: {an} vs {fd}");
        }
    }

    #[test]
    fn cd_input_backward_matches_fd() {
        let mut d = decoders(41);
        let a: Vec<f64> = (0..8).map(|i| 0.15 * (i as f64 - 4.0)).collect();
        let x = Vec3::of(0.2, -0.1, 0.4);
        let wo = Vec3::of(0.3, -0.5, 0.81).normalized();
        let n_raw = Vec3::of(0.2, 0.3, 0.92);
        let n = n_raw.normalized();
        let kappa = 0.45;
        let w_out = Vec3::of(0.5, -0.7, 0.3);
        let s = Sampler::from_seed(0);
        let obj = |d: &DecoderSet<f64>, a: &[f64], n: Vec3<f64>, kappa: f64| {
            d.decode_view_dependent(a, x, wo, n.normalized(), kappa, false, &mut s.clone()).dot(w_out)
        };

        let mut input = Vec::new();
        let aux = assemble_cd_input(&d.cfg, &a, x, wo, n, kappa, &mut input);
        let mut cache = MlpCache::default();
        let _ = d.d_cd.forward_batch(&input, 1, Some(&mut cache));
        let d_in = d.d_cd.backward_batch(&cache, &w_out.to_array());
        let mut d_a = vec![0.0; 8];
        let (d_n_unit, d_kappa) = cd_input_backward(&d.cfg, &aux, wo, n, kappa, &d_in, &mut d_a);
        // chain to the raw (pre-normalization) normal
        let d_n_raw = normalize_backward(n_raw.norm(), n, d_n_unit);

        let h = 1e-6;
        for i in 0..8 {
            let mut hi = a.clone();
            hi[i] += h;
            let mut lo = a.clone();
            lo[i] -= h;
            let fd = (obj(&d, &hi, n_raw, kappa) - obj(&d, &lo, n_raw, kappa)) / (2.0 * h);
            assert!((d_a[i] - fd).abs() <= 1e-8 + 1e-4 * fd.abs().max(d_a[i].abs()), "a[{i}]");
        }
        let fd = (obj(&d, &a, n_raw, kappa + h) - obj(&d, &a, n_raw, kappa - h)) / (2.0 * h);
        assert!((d_kappa - fd).abs() <= 1e-8 + 1e-4 * fd.abs().max(d_kappa.abs()), "{d_kappa} vs {fd}");
        for axis in 0..3 {
            let mut hi = n_raw;
            let mut lo = n_raw;
            match axis {
                0 => {
                    hi.x += h;
                    lo.x -= h;
                }
                1 => {
                    hi.y += h;
                    lo.y -= h;
                }
                _ => {
                    hi.z += h;
                    lo.z -= h;
                }
            }
            let fd = (obj(&d, &a, hi, kappa) - obj(&d, &a, lo, kappa)) / (2.0 * h);
            let an = d_n_raw.axis(axis);
            assert!((an - fd).abs() <= 1e-8 + 2e-4 * fd.abs().max(an.abs()), "n[{axis}]: {an} vs {fd}");
        }
    }

    #[test]
    fn radiance_is_additive() {
        let d = decoders(55);
        let a: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
        let x = Vec3::of(0.1, 0.1, 0.1);
        let n = Vec3::of(0.0, 0.0, 1.0);
        let wo = Vec3::of(0.0, 0.6, 0.8);
        let mut s = Sampler::from_seed(9);
        let ci = d.decode_view_independent(&a, x);
        let cd = d.decode_view_dependent(&a, x, wo, n, 0.2, false, &mut s);
        assert!(cd.x > 0.0);
        // zeroing c_d reproduces c_i exactly
        let zeroed = Rgb::zero();
        assert_eq!(ci + zeroed, ci);
    }

    #[test]
    fn single_net_mode_ignores_normal() {
        let cfg = DecoderConfig {
            latent_dim: 8,
            hidden: 16,
            decomposition: false,
            ..Default::default()
        };
        let mut d = DecoderSet::<f64>::new(cfg);
        d.init(&mut Sampler::from_seed(77));
        let a = vec![0.2; 8];
        let wo = Vec3::of(0.0, 0.6, 0.8);
        let mut s = Sampler::from_seed(1);
        let c1 = d.decode_view_dependent(&a, Vec3::zero(), wo, Vec3::of(0.0, 0.0, 1.0), 0.1, false, &mut s);
        let c2 = d.decode_view_dependent(&a, Vec3::zero(), wo, Vec3::of(1.0, 0.0, 0.0), 0.9, false, &mut s);
        assert_eq!(c1, c2);
    }
}
