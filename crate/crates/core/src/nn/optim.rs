use super::{Gradients, NnError, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<(), NnError> {
        if grads.len() != store.len() {
            return Err(NnError::ParamCount {
                expected: store.len(),
                got: grads.len(),
            });
        }
        for (id, g) in store.ids().zip(grads.iter()) {
            if !g.is_finite() {
                return Err(NnError::NonFiniteGradient {
                    param: store.name(id).to_string(),
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (p, g)) in store.iter_mut().zip(grads.iter()).enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Exponential moving average of a parameter set:
/// `shadow <- m * shadow + (1 - m) * live`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaShadow {
    shadow: Vec<Tensor>,
    momentum: f64,
    updates: u64,
}

impl EmaShadow {
    /// Starts the shadow at the current live values.
    pub fn new(store: &ParamStore, momentum: f64) -> Self {
        Self::from_tensors(store.tensors().to_vec(), momentum)
    }

    pub fn from_tensors(shadow: Vec<Tensor>, momentum: f64) -> Self {
        assert!(
            (0.0..1.0).contains(&momentum),
            "EMA momentum must lie in [0, 1), got {momentum}"
        );
        Self {
            shadow,
            momentum,
            updates: 0,
        }
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.shadow
    }

    pub fn update(&mut self, live: &ParamStore) -> Result<(), NnError> {
        if live.len() != self.shadow.len() {
            return Err(NnError::ParamCount {
                expected: self.shadow.len(),
                got: live.len(),
            });
        }
        for (s, p) in self.shadow.iter().zip(live.iter()) {
            if s.shape() != p.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "ema_update",
                    left: s.shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
        }
        let m = self.momentum;
        for (s, p) in self.shadow.iter_mut().zip(live.iter()) {
            s.data_mut()
                .iter_mut()
                .zip(p.data())
                .for_each(|(sv, &pv)| *sv = m * *sv + (1.0 - m) * pv);
        }
        self.updates += 1;
        Ok(())
    }

    /// Copies the shadow into a store with the same layout.
    pub fn write_to(&self, store: &mut ParamStore) -> Result<(), NnError> {
        store.load(self.shadow.clone())
    }
}
