//! Flat key-value configuration (TOML). Every tunable default of the
//! pipeline lives here so runs are reproducible from one file.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Config {
    /// Dataset root containing transforms_{train,val,test}.json.
    pub data_root: String,
    pub seed: u64,

    // scene bounds and grids
    pub bbox_half: f64,
    pub density_res: usize,
    pub density_rank: usize,
    pub appearance_res: usize,
    pub appearance_rank: usize,
    pub latent_dim: usize,
    /// "softplus" (shifted), "relu" or "identity".
    pub density_activation: String,
    pub density_shift: f64,
    pub density_init_lo: f64,
    pub density_init_hi: f64,
    pub appearance_init: f64,

    // decoders
    pub hidden_dim: usize,
    pub rho_hidden_dim: usize,
    pub n_freq_pos: usize,
    pub n_freq_kappa: usize,
    pub encode_position: bool,
    pub dropout_p: f64,
    pub decomposition: bool,
    pub separate_rho: bool,

    // environment light
    pub env_width: usize,
    pub env_height: usize,
    pub env_levels: usize,
    pub reproject_every: u32,

    // ray marching
    pub n_samples_primary: usize,
    pub n_samples_secondary: usize,
    pub weight_threshold: f64,
    pub tau_hit: f64,
    pub background: [f64; 3],

    // physically-based shading
    pub n_light_train: usize,
    pub n_brdf_train: usize,
    pub n_light_render: usize,
    pub n_brdf_render: usize,
    pub max_bounce: usize,
    /// Disable indirect lighting entirely during relighting.
    pub indirect: bool,
    /// "balance" or "power".
    pub mis_heuristic: String,

    // optimization
    pub warmup_iters: u64,
    pub total_iters: u64,
    pub batch_rays: usize,
    pub lr_grids: f64,
    pub lr_decoders: f64,
    pub lr_pyramid: f64,
    pub weight_decay: f64,
    /// Final learning-rate fraction of the cosine schedule.
    pub lr_final_fraction: f64,

    // loss weights
    pub w_rf: f64,
    pub w_pb: f64,
    pub w_diffuse: f64,
    pub w_specular: f64,
    pub w_normal: f64,
    pub w_backface: f64,
    pub w_tv: f64,
    pub w_l1: f64,

    // logging / evaluation
    pub log_every: u64,
    pub eval_every: u64,
    pub eval_views: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_root: String::new(),
            seed: 0,
            bbox_half: 1.5,
            density_res: 64,
            density_rank: 4,
            appearance_res: 64,
            appearance_rank: 8,
            latent_dim: 24,
            density_activation: "softplus".into(),
            density_shift: -2.0,
            density_init_lo: 0.0,
            density_init_hi: 0.1,
            appearance_init: 0.05,
            hidden_dim: 128,
            rho_hidden_dim: 10,
            n_freq_pos: 2,
            n_freq_kappa: 2,
            encode_position: true,
            dropout_p: 0.01,
            decomposition: true,
            separate_rho: false,
            env_width: 256,
            env_height: 128,
            env_levels: 6,
            reproject_every: 16,
            n_samples_primary: 192,
            n_samples_secondary: 96,
            weight_threshold: 1e-4,
            tau_hit: 0.5,
            background: [1.0, 1.0, 1.0],
            n_light_train: 8,
            n_brdf_train: 8,
            n_light_render: 64,
            n_brdf_render: 64,
            max_bounce: 1,
            indirect: true,
            mis_heuristic: "balance".into(),
            warmup_iters: 3000,
            total_iters: 10000,
            batch_rays: 1024,
            lr_grids: 0.02,
            lr_decoders: 1e-3,
            lr_pyramid: 0.02,
            weight_decay: 1e-6,
            lr_final_fraction: 0.1,
            w_rf: 1.0,
            w_pb: 0.5,
            w_diffuse: 0.1,
            w_specular: 0.1,
            w_normal: 0.005,
            w_backface: 0.001,
            w_tv: 0.01,
            w_l1: 1e-5,
            log_every: 50,
            eval_every: 1000,
            eval_views: 1,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> crate::Result<Self> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| crate::Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> crate::Result<Self> {
        if self.warmup_iters >= self.total_iters {
            return Err(crate::Error::Config(format!(
                "warmup_iters ({}) must be below total_iters ({})",
                self.warmup_iters, self.total_iters
            )));
        }
        if self.reproject_every == 0 {
            return Err(crate::Error::Config("reproject_every must be >= 1".into()));
        }
        for (name, w) in [
            ("w_pb", self.w_pb),
            ("w_diffuse", self.w_diffuse),
            ("w_specular", self.w_specular),
            ("w_normal", self.w_normal),
            ("w_backface", self.w_backface),
            ("w_tv", self.w_tv),
            ("w_l1", self.w_l1),
        ] {
            if w < 0.0 {
                return Err(crate::Error::Config(format!("{name} must be nonnegative")));
            }
            if w > self.w_rf {
                return Err(crate::Error::Config(format!(
                    "the radiance loss weight must dominate; {name} = {w} exceeds w_rf = {}",
                    self.w_rf
                )));
            }
        }
        if self.env_width != 2 * self.env_height {
            return Err(crate::Error::Config("env_width must equal 2 * env_height".into()));
        }
        // up-front memory estimate: parameters + one training chunk
        let grid = 3 * self.density_rank * (self.density_res + self.density_res * self.density_res)
            + 3 * self.appearance_rank
                * (self.appearance_res + self.appearance_res * self.appearance_res + self.latent_dim);
        let mlp = 5 * (2 * self.hidden_dim * self.hidden_dim + 80 * self.hidden_dim);
        let env = 2 * self.env_width * self.env_height * 3 * 2;
        let chunk = 64 * self.n_samples_primary * (self.latent_dim + 6 * self.hidden_dim + 120);
        let bytes = (grid + mlp + env + chunk) * 3 * 8; // params + grads + moments, f64 worst case
        const LIMIT: usize = 8 << 30;
        if bytes > LIMIT {
            return Err(crate::Error::Config(format!(
                "estimated memory {bytes} bytes exceeds the {LIMIT}-byte guard"
            )));
        }
        Ok(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = Config::default();
        let text = cfg.to_toml();
        let back = Config::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = Config::from_toml("latent_dim = 16\nseed = 7\n").unwrap();
        assert_eq!(cfg.latent_dim, 16);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.hidden_dim, 128);
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(Config::from_toml("warmup_iters = 50\ntotal_iters = 50\n").is_err());
        assert!(Config::from_toml("w_pb = 2.0\n").is_err());
        assert!(Config::from_toml("env_width = 100\nenv_height = 100\n").is_err());
        assert!(Config::from_toml("density_res = 4096\nappearance_res = 4096\n").is_err());
    }
}
