//! Named parameter collections, the Adam optimizer, and EMA blending.

use crate::error::{Error, Result};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<DenseMatrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: DenseMatrix) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &DenseMatrix {
        &self.values[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut DenseMatrix {
        &mut self.values[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseMatrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[DenseMatrix] {
        &self.values
    }

    /// Registers every parameter as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|v| tape.param(v.clone())).collect()
    }

    /// Registers every parameter as a constant (no gradient).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|v| tape.constant(v.clone())).collect()
    }

    fn expect_congruent(&self, other: &[DenseMatrix], what: &str) -> Result<()> {
        if self.values.len() != other.len() {
            return Err(Error::shape(format!(
                "{what}: {} parameters vs {}",
                self.values.len(),
                other.len()
            )));
        }
        for (i, (a, b)) in self.values.iter().zip(other).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::shape(format!(
                    "{what}: parameter `{}` is {:?}, got {:?}",
                    self.names[i],
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Evaluates `objective` on a fresh tape and returns its value plus the
/// gradient for every parameter, in order.
pub fn grad<F>(params: &ParamSet, objective: F) -> Result<(f64, Vec<DenseMatrix>)>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let out = objective(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let value = tape.scalar(out);
    Ok((value, vars.iter().map(|&v| grads.wrt(&tape, v)).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<DenseMatrix>,
    pub second: Vec<DenseMatrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<DenseMatrix> = params
            .values()
            .iter()
            .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[DenseMatrix], cfg: &AdamConfig) -> Result<()> {
        params.expect_congruent(grads, "adam gradients")?;
        params.expect_congruent(&self.first, "adam state")?;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let p = params.values[i].data_mut();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j] + cfg.weight_decay * p[j];
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

/// `target ← τ·target + (1−τ)·online`, elementwise.
pub fn ema_update(online: &ParamSet, target: &mut ParamSet, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::config(format!("EMA decay {tau} outside [0, 1]")));
    }
    target.expect_congruent(online.values(), "ema")?;
    for (t, o) in target.values.iter_mut().zip(online.values()) {
        for (tv, &ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = tau * *tv + (1.0 - tau) * ov;
        }
    }
    Ok(())
}
