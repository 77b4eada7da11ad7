use crate::error::{Error, Result};
use crate::tensorcore::{Parameter, Tensor};
use serde::{Deserialize, Serialize};

/// First-order optimizers over the flat parameter list. Adam keeps its
/// moment state aligned with the parameter order, so one optimizer
/// instance must stay with one network.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: u64,
        m: Vec<Tensor>,
        v: Vec<Tensor>,
    },
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => *lr,
        }
    }

    pub fn set_lr(&mut self, new_lr: f64) {
        match self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => *lr = new_lr,
        }
    }

    /// Apply one update from the accumulated gradients. Rejects non-finite
    /// gradients by parameter name; frozen parameters are skipped.
    pub fn step(&mut self, params: &mut [Parameter]) -> Result<()> {
        for p in params.iter() {
            if p.trainable && !p.grad.all_finite() {
                return Err(Error::NonFiniteGradient {
                    param: p.name.clone(),
                });
            }
        }
        match self {
            Optimizer::Sgd { lr } => {
                for p in params.iter_mut().filter(|p| p.trainable) {
                    let scaled = p.grad.map(|g| -*lr * g);
                    p.value.add_assign(&scaled);
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                step,
                m,
                v,
            } => {
                if m.is_empty() {
                    *m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
                    *v = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
                }
                if m.len() != params.len() {
                    return Err(Error::Contract(format!(
                        "optimizer state covers {} parameters, network has {}",
                        m.len(),
                        params.len()
                    )));
                }
                *step += 1;
                let bc1 = 1.0 - beta1.powi(*step as i32);
                let bc2 = 1.0 - beta2.powi(*step as i32);
                for (i, p) in params.iter_mut().enumerate() {
                    if !p.trainable {
                        continue;
                    }
                    let grad = p.grad.data();
                    let md = m[i].data_mut();
                    let vd = v[i].data_mut();
                    let pd = p.value.data_mut();
                    for j in 0..grad.len() {
                        md[j] = *beta1 * md[j] + (1.0 - *beta1) * grad[j];
                        vd[j] = *beta2 * vd[j] + (1.0 - *beta2) * grad[j] * grad[j];
                        let mhat = md[j] / bc1;
                        let vhat = vd[j] / bc2;
                        pd[j] -= *lr * mhat / (vhat.sqrt() + *eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reduce-on-plateau learning rate schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateauConfig {
    /// Divide the learning rate by this factor when the metric stalls.
    pub factor: f64,
    /// Number of consecutive non-improving epochs tolerated.
    pub patience: usize,
    /// Lower bound on the learning rate.
    pub floor: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            factor: 10.0,
            patience: 5,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlateauState {
    best: f64,
    stalled: usize,
}

impl PlateauState {
    pub fn new() -> Self {
        PlateauState {
            best: f64::INFINITY,
            stalled: 0,
        }
    }

    /// Feed one validation metric; returns the learning rate to use next.
    pub fn observe(&mut self, metric: f64, lr: f64, cfg: &PlateauConfig) -> f64 {
        if metric < self.best {
            self.best = metric;
            self.stalled = 0;
            return lr;
        }
        self.stalled += 1;
        if self.stalled >= cfg.patience {
            self.stalled = 0;
            return (lr / cfg.factor).max(cfg.floor);
        }
        lr
    }
}

impl Default for PlateauState {
    fn default() -> Self {
        PlateauState::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(name: &str, value: Vec<f64>, grad: Vec<f64>) -> Parameter {
        let n = value.len();
        let mut p = Parameter::new(name, Tensor::new(vec![n], value).unwrap());
        p.grad = Tensor::new(vec![n], grad).unwrap();
        p
    }

    #[test]
    fn sgd_step_is_value_minus_lr_times_grad() {
        let mut params = vec![param("w", vec![1.0, -2.0], vec![0.5, -1.5])];
        Optimizer::sgd(0.1).step(&mut params).unwrap();
        assert!((params[0].value.data()[0] - 0.95).abs() < 1e-15);
        assert!((params[0].value.data()[1] + 1.85).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr_times_sign() {
        // bias correction makes the first update lr * g / (|g| + eps)
        let mut params = vec![param("w", vec![0.0, 0.0, 0.0], vec![3.0, -0.001, 0.0])];
        let mut opt = Optimizer::adam(0.01);
        opt.step(&mut params).unwrap();
        let d = params[0].value.data();
        assert!((d[0] + 0.01).abs() < 1e-6, "{}", d[0]);
        assert!((d[1] - 0.01).abs() < 1e-4, "{}", d[1]);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn adam_converges_on_a_quadratic() {
        let mut params = vec![param("w", vec![5.0], vec![0.0])];
        let mut opt = Optimizer::adam(0.3);
        for _ in 0..300 {
            let x = params[0].value.data()[0];
            params[0].grad = Tensor::vector(vec![2.0 * x]);
            opt.step(&mut params).unwrap();
        }
        assert!(params[0].value.data()[0].abs() < 1e-2);
    }

    #[test]
    fn non_finite_gradient_is_rejected_by_name() {
        let mut p = param("stem.conv.w", vec![1.0], vec![0.0]);
        p.grad.data_mut()[0] = f64::NAN;
        let err = Optimizer::sgd(0.1).step(&mut [p]).unwrap_err().to_string();
        assert!(err.contains("stem.conv.w"), "{err}");
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut p = param("w", vec![1.0], vec![1.0]);
        p.trainable = false;
        let mut params = vec![p];
        Optimizer::sgd(0.1).step(&mut params).unwrap();
        assert_eq!(params[0].value.data()[0], 1.0);
        let mut opt = Optimizer::adam(0.1);
        opt.step(&mut params).unwrap();
        assert_eq!(params[0].value.data()[0], 1.0);
    }

    #[test]
    fn plateau_drops_by_factor_after_patience_and_respects_floor() {
        let cfg = PlateauConfig::default();
        let mut st = PlateauState::new();
        let mut lr = 1e-4;
        lr = st.observe(1.0, lr, &cfg);
        assert_eq!(lr, 1e-4);
        // five consecutive non-improving epochs trigger one cut
        for i in 0..4 {
            lr = st.observe(1.0, lr, &cfg);
            assert_eq!(lr, 1e-4, "epoch {i}");
        }
        lr = st.observe(1.0, lr, &cfg);
        assert!((lr - 1e-5).abs() < 1e-20);
        // an improvement resets the counter
        lr = st.observe(0.5, lr, &cfg);
        assert!((lr - 1e-5).abs() < 1e-20);
        // repeated stalls eventually pin at the floor
        for _ in 0..100 {
            lr = st.observe(0.5, lr, &cfg);
        }
        assert_eq!(lr, 1e-6);
    }
}
