//! Adaptive-moment optimizer with decoupled weight decay.

use crate::num::Real;
use crate::param::Pvec;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
}

impl<T: Real> Default for AdamConfig<T> {
    fn default() -> Self {
        Self {
            lr: T::of(1e-3),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            weight_decay: T::zero(),
        }
    }
}

struct Slot<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// AdamW over a set of parameter vectors. Callers must visit the same
/// parameters in the same order on every step; each visited `Pvec` gets its
/// own moment buffers, and `lr_scale` lets parameter groups run at different
/// learning rates.
pub struct AdamW<T> {
    pub cfg: AdamConfig<T>,
    /// Global learning-rate multiplier (for schedules such as cosine decay).
    pub lr_mult: T,
    /// Non-finite gradient entries zeroed since the last reset.
    pub nonfinite_zeroed: u64,
    /// Gradient entries processed since the last reset.
    pub grads_seen: u64,
    t: u64,
    cursor: usize,
    slots: Vec<Slot<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(cfg: AdamConfig<T>) -> Self {
        Self {
            cfg,
            lr_mult: T::one(),
            nonfinite_zeroed: 0,
            grads_seen: 0,
            t: 0,
            cursor: 0,
            slots: Vec::new(),
        }
    }

    /// Starts one optimization step (advances the bias-correction counter).
    pub fn begin_step(&mut self) {
        self.t += 1;
        self.cursor = 0;
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Updates one parameter vector in place from its gradient buffer.
    pub fn update(&mut self, p: &mut Pvec<T>, lr_scale: T) {
        let idx = self.cursor;
        self.cursor += 1;
        if idx == self.slots.len() {
            self.slots.push(Slot { m: vec![T::zero(); p.len()], v: vec![T::zero(); p.len()] });
        }
        let slot = &mut self.slots[idx];
        debug_assert_eq!(slot.m.len(), p.len(), "parameter visit order changed");

        let c = self.cfg;
        let lr = c.lr * lr_scale * self.lr_mult;
        let t = T::of(self.t as f64);
        let bc1 = T::one() - c.beta1.powf(t);
        let bc2 = T::one() - c.beta2.powf(t);
        let decay = T::one() - lr * c.weight_decay;

        for i in 0..p.len() {
            let mut g = p.g[i];
            self.grads_seen += 1;
            if !g.is_finite() {
                g = T::zero();
                self.nonfinite_zeroed += 1;
            }
            slot.m[i] = c.beta1 * slot.m[i] + (T::one() - c.beta1) * g;
            slot.v[i] = c.beta2 * slot.v[i] + (T::one() - c.beta2) * g * g;
            let m_hat = slot.m[i] / bc1;
            let v_hat = slot.v[i] / bc2;
            // decoupled decay, then the adaptive step
            p.v[i] = p.v[i] * decay - lr * m_hat / (v_hat.sqrt() + c.eps);
        }
    }

    /// Fraction of non-finite gradient entries since the last reset.
    pub fn nonfinite_rate(&self) -> f64 {
        if self.grads_seen == 0 {
            0.0
        } else {
            self.nonfinite_zeroed as f64 / self.grads_seen as f64
        }
    }

    pub fn reset_counters(&mut self) {
        self.nonfinite_zeroed = 0;
        self.grads_seen = 0;
    }
}
