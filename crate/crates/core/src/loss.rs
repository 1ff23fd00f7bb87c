//! Named loss terms and their weights.

use crate::num::Real;

#[derive(Clone, Copy, Debug)]
pub struct LossWeights<T> {
    pub rf: T,
    pub pb: T,
    pub diffuse: T,
    pub specular: T,
    pub normal: T,
    pub backface: T,
    pub tv: T,
    pub l1: T,
}

impl<T: Real> LossWeights<T> {
    pub fn from_config(cfg: &crate::config::Config) -> Self {
        Self {
            rf: T::of(cfg.w_rf),
            pb: T::of(cfg.w_pb),
            diffuse: T::of(cfg.w_diffuse),
            specular: T::of(cfg.w_specular),
            normal: T::of(cfg.w_normal),
            backface: T::of(cfg.w_backface),
            tv: T::of(cfg.w_tv),
            l1: T::of(cfg.w_l1),
        }
    }
}

/// Per-batch scalar losses, unweighted.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossMap<T> {
    pub rf: T,
    pub pb: T,
    pub diffuse: T,
    pub specular: T,
    pub normal: T,
    pub backface: T,
    pub tv: T,
    pub l1: T,
}

impl<T: Real> LossMap<T> {
    pub fn total(&self, w: &LossWeights<T>) -> T {
        w.rf * self.rf
            + w.pb * self.pb
            + w.diffuse * self.diffuse
            + w.specular * self.specular
            + w.normal * self.normal
            + w.backface * self.backface
            + w.tv * self.tv
            + w.l1 * self.l1
    }

    pub fn named(&self) -> [(&'static str, T); 8] {
        [
            ("rf", self.rf),
            ("pb", self.pb),
            ("diffuse", self.diffuse),
            ("specular", self.specular),
            ("normal", self.normal),
            ("backface", self.backface),
            ("tv", self.tv),
            ("l1", self.l1),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_is_weighted_sum_of_named() {
        let m = LossMap::<f64> {
            rf: 0.5,
            pb: 0.25,
            diffuse: 0.1,
            specular: 0.2,
            normal: 0.3,
            backface: 0.01,
            tv: 2.0,
            l1: 40.0,
        };
        let w = LossWeights::from_config(&crate::config::Config::default());
        let by_hand: f64 = m
            .named()
            .iter()
            .zip([w.rf, w.pb, w.diffuse, w.specular, w.normal, w.backface, w.tv, w.l1])
            .map(|((_, v), wt)| wt * v)
            .sum();
        assert!((m.total(&w) - by_hand).abs() <= 1e-6);
    }
}
