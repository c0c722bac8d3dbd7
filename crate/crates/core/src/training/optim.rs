use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::OptimizerState;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Multiplied into the learning rate after every optimizer update.
    pub factor: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { lr: 0.008, momentum: 0.26, factor: 0.98 }
    }
}

impl SgdConfig {
    /// Second optimizer used by the alternating regime.
    pub fn alternate_default() -> Self {
        Self { lr: 0.004, momentum: 0.5, factor: 0.98 }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            problems.push(format!("momentum must be in [0,1), got {}", self.momentum));
        }
        if !(self.factor > 0.0 && self.factor <= 1.0) {
            problems.push(format!("factor must be in (0,1], got {}", self.factor));
        }
        match problems.is_empty() {
            true => Ok(()),
            false => Err(Error::InvalidParameter(problems.join("; "))),
        }
    }
}

/// Multiplicative decay: `lr_{k+1} = lr_k · factor`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scheduler {
    lr0: f64,
    factor: f64,
    lr: f64,
    steps: u64,
}

impl Scheduler {
    pub fn new(lr0: f64, factor: f64) -> Self {
        Self { lr0, factor, lr: lr0, steps: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self) -> f64 {
        self.lr *= self.factor;
        self.steps += 1;
        self.lr
    }

    pub fn reset(&mut self) {
        self.lr = self.lr0;
        self.steps = 0;
    }
}

/// SGD with classical momentum: `v ← m·v + g`, `θ ← θ − lr·v`.
#[derive(Clone, Debug)]
pub struct Sgd<T: Element = f32> {
    config: SgdConfig,
    scheduler: Scheduler,
    velocities: Vec<Vec<T>>,
}

impl<T: Element> Sgd<T> {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            scheduler: Scheduler::new(config.lr, config.factor),
            velocities: Vec::new(),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    /// Learning rate the next update will use.
    pub fn lr(&self) -> f64 {
        self.scheduler.lr()
    }

    /// Updates since creation or the last reset.
    pub fn steps(&self) -> u64 {
        self.scheduler.steps()
    }

    /// Returns to the freshly constructed state.
    pub fn reset(&mut self) {
        self.scheduler.reset();
        self.velocities.clear();
    }

    /// Applies one update and clears the gradients. `params` must come in
    /// the same order on every call. Nothing is modified if any gradient is
    /// missing.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>) -> Result<()> {
        let grads = params
            .iter()
            .enumerate()
            .map(|(i, p)| p.grad().ok_or_else(|| Error::MissingGradient(format!("#{i}"))))
            .collect::<Result<Vec<_>>>()?;
        self.step_with(params, &grads)
    }

    /// Like [`Sgd::step`] with externally supplied gradients.
    pub fn step_with(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Vec<T>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::InvalidParameter(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        if self.velocities.is_empty() {
            self.velocities = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        }
        if self.velocities.len() != params.len() {
            return Err(Error::InvalidParameter("parameter list changed between steps".into()));
        }
        for ((p, g), v) in params.iter().zip(grads).zip(&self.velocities) {
            if g.len() != p.numel() || v.len() != p.numel() {
                return Err(Error::shape("sgd", &[p.numel()], &[g.len()]));
            }
        }
        let m = T::from_f64(self.config.momentum);
        let lr = T::from_f64(self.scheduler.lr());
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocities) {
            let mut data = p.to_vec();
            for ((theta, &gi), vi) in data.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = m * *vi + gi;
                *theta = *theta - lr * *vi;
            }
            let shape = p.shape().to_vec();
            p.zero_grad();
            *p = Tensor::param(data, &shape)?;
        }
        self.scheduler.step();
        Ok(())
    }

    pub fn export_state(&self) -> OptimizerState {
        OptimizerState {
            lr: self.scheduler.lr(),
            step: self.scheduler.steps(),
            velocities: self
                .velocities
                .iter()
                .map(|v| v.iter().map(|x| x.as_f64() as f32).collect())
                .collect(),
        }
    }

    /// Resumes from a saved state; the configuration's initial rate stays
    /// the reset target.
    pub fn import_state(&mut self, state: &OptimizerState) {
        self.scheduler.lr = state.lr;
        self.scheduler.steps = state.step;
        self.velocities = state
            .velocities
            .iter()
            .map(|v| v.iter().map(|&x| T::from_f64(x as f64)).collect())
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: &[f64]) -> Tensor<f64> {
        Tensor::param(v.to_vec(), &[v.len()]).unwrap()
    }

    fn cfg(lr: f64, momentum: f64) -> SgdConfig {
        SgdConfig { lr, momentum, factor: 1.0 }
    }

    #[test]
    fn defaults() {
        let c = SgdConfig::default();
        assert_eq!((c.lr, c.momentum, c.factor), (0.008, 0.26, 0.98));
        assert!(SgdConfig { momentum: 1.0, ..c }.validate().is_err());
        assert!(SgdConfig { factor: 0.0, ..c }.validate().is_err());
        let err = SgdConfig { lr: -1.0, factor: 2.0, ..c }.validate().unwrap_err().to_string();
        assert!(err.contains("lr") && err.contains("factor"));
    }

    #[test]
    fn plain_descent_step() {
        let mut opt = Sgd::<f64>::new(cfg(0.1, 0.0)).unwrap();
        let mut p = param(&[1.0]);
        p.sum().unwrap().backward().unwrap();
        opt.step(vec![&mut p]).unwrap();
        assert_eq!(p.data(), &[1.0 - 0.1]);
        assert!(p.grad().is_none());
    }

    #[test]
    fn momentum_recurrence() {
        let mut opt = Sgd::<f64>::new(cfg(1.0, 0.5)).unwrap();
        let mut p = param(&[0.0]);
        for _ in 0..2 {
            opt.step_with(vec![&mut p], &[vec![1.0]]).unwrap();
        }
        assert_eq!(p.data(), &[-2.5]);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut opt = Sgd::<f64>::new(SgdConfig::default()).unwrap();
        let mut p = param(&[0.3, -0.7]);
        opt.step_with(vec![&mut p], &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(p.data(), &[0.3, -0.7]);
    }

    #[test]
    fn missing_gradient() {
        let mut opt = Sgd::<f64>::new(SgdConfig::default()).unwrap();
        let mut a = param(&[1.0]);
        let mut b = param(&[2.0]);
        a.sum().unwrap().backward().unwrap();
        assert!(matches!(opt.step(vec![&mut a, &mut b]), Err(Error::MissingGradient(_))));
        assert_eq!(a.data(), &[1.0]);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn zero_momentum_matches_gradient_descent() {
        let mut opt = Sgd::<f64>::new(SgdConfig { lr: 0.05, momentum: 0.0, factor: 0.9 }).unwrap();
        let mut p = param(&[1.0, -2.0, 0.5]);
        let mut reference = p.to_vec();
        let mut lr = 0.05;
        for k in 0..5 {
            let g: Vec<f64> = reference.iter().map(|x| x * (k as f64 + 1.0)).collect();
            opt.step_with(vec![&mut p], &[g.clone()]).unwrap();
            reference.iter_mut().zip(&g).for_each(|(r, gi)| *r -= lr * gi);
            lr *= 0.9;
            assert_eq!(p.data(), reference.as_slice());
        }
    }

    #[test]
    fn scheduler_examples() {
        let mut s = Scheduler::new(0.008, 0.98);
        assert_eq!(s.lr(), 0.008);
        assert_eq!(s.step(), 0.008 * 0.98);
        assert!((s.lr() - 0.00784).abs() < 1e-18);
        let mut flat = Scheduler::new(0.1, 1.0);
        for _ in 0..100 {
            assert_eq!(flat.step(), 0.1);
        }
    }

    #[test]
    fn reset_replays_first_step() {
        let grads = [vec![0.4, -1.0]];
        let mut fresh = Sgd::<f64>::new(SgdConfig::default()).unwrap();
        let mut a = param(&[1.0, 1.0]);
        fresh.step_with(vec![&mut a], &grads).unwrap();

        let mut used = Sgd::<f64>::new(SgdConfig::default()).unwrap();
        let mut b = param(&[1.0, 1.0]);
        for _ in 0..7 {
            used.step_with(vec![&mut b], &[vec![0.3, 0.2]]).unwrap();
        }
        used.reset();
        assert_eq!(used.lr(), 0.008);
        let mut c = param(&[1.0, 1.0]);
        used.step_with(vec![&mut c], &grads).unwrap();
        assert_eq!(a.data(), c.data());
        assert_eq!(used.export_state(), fresh.export_state());
    }

    #[test]
    fn state_round_trip() {
        let mut a = Sgd::<f32>::new(SgdConfig::default()).unwrap();
        let mut p = Tensor::<f32>::param(vec![1.0, 2.0], &[2]).unwrap();
        a.step_with(vec![&mut p], &[vec![0.5, 0.25]]).unwrap();
        let mut b = Sgd::<f32>::new(SgdConfig::default()).unwrap();
        b.import_state(&a.export_state());
        let (mut pa, mut pb) = (p.clone(), p.clone());
        a.step_with(vec![&mut pa], &[vec![0.1, 0.1]]).unwrap();
        b.step_with(vec![&mut pb], &[vec![0.1, 0.1]]).unwrap();
        assert_eq!(pa.data(), pb.data());
    }
}
