use serde::{Deserialize, Serialize};

use super::model::{Layout, ParamVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
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

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut ParamVector,
    grads: &[f32],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    let n = params.data.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::shape(
            format!("{n} gradients and moments"),
            format!("{} / {} / {}", grads.len(), state.m.len(), state.v.len()),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for i in 0..n {
        let g = grads[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params.data[i] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
    }
    Ok(())
}

/// Exponential moving average of the student's parameters.
///
/// The average is accumulated in `f64` so that long runs with `alpha` close
/// to 1 do not drift; `params` is its `f32` rounding, used for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanTeacher {
    params: ParamVector,
    acc: Vec<f64>,
}

impl MeanTeacher {
    /// The teacher at iteration 0: a copy of the student.
    pub fn new(student: &ParamVector) -> Self {
        Self {
            params: student.clone(),
            acc: student.data.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn from_accumulator(layout: Layout, acc: Vec<f64>) -> Result<Self> {
        let params = ParamVector::new(layout, acc.iter().map(|&v| v as f32).collect())?;
        Ok(Self { params, acc })
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.acc
    }

    /// Update at iteration `n`: `n == 0` copies the student, otherwise
    /// `teacher = alpha * teacher + (1 - alpha) * student`.
    pub fn update(&mut self, student: &ParamVector, alpha: f32, n: u64) -> Result<()> {
        self.params.check_layout(student)?;
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Config(format!(
                "EMA coefficient must lie in [0, 1), got {alpha}"
            )));
        }
        if n == 0 {
            *self = Self::new(student);
            return Ok(());
        }
        let a = alpha as f64;
        for ((acc, t), &s) in self
            .acc
            .iter_mut()
            .zip(&mut self.params.data)
            .zip(&student.data)
        {
            *acc = a * *acc + (1.0 - a) * s as f64;
            *t = *acc as f32;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::model::{LayerSpec, Layout};

    fn vector(values: &[f32]) -> ParamVector {
        let layout = Layout {
            layers: vec![LayerSpec {
                c_in: values.len() - 1,
                c_out: 1,
                kernel: 1,
            }],
        };
        ParamVector::new(layout, values.to_vec()).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vector(&[0.3, -0.2, 0.1]);
        let before = p.clone();
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vector(&[0.0, 0.0, 0.0]);
        let mut st = AdamState::new(3);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &[0.5, -2.0, 1e-3], &mut st, &cfg).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        for (&v, g) in p.data.iter().zip([0.5f32, -2.0, 1e-3]) {
            let want = -cfg.lr * g / (g.abs() + cfg.eps);
            assert!((v - want).abs() < 1e-9, "{v} vs {want}");
        }
    }

    #[test]
    fn two_step_recurrence() {
        let cfg = AdamConfig::default();
        let mut p = vector(&[1.0, 1.0]);
        let mut st = AdamState::new(2);
        let g = 0.2f64;
        adam_step(&mut p, &[0.2, 0.2], &mut st, &cfg).unwrap();
        adam_step(&mut p, &[0.2, 0.2], &mut st, &cfg).unwrap();
        // hand recurrence in f64
        let (b1, b2, lr, eps) = (0.9f64, 0.999f64, 1e-3f64, 1e-8f64);
        let mut theta = 1.0f64;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((p.data[0] as f64 - theta).abs() < 1e-6);
        assert_eq!(st.t, 2);
    }

    #[test]
    fn ema_initialization_and_degenerate_alpha() {
        let s = vector(&[1.0, 2.0, 3.0]);
        let mut t = MeanTeacher::new(&vector(&[9.0, 9.0, 9.0]));
        t.update(&s, 0.999, 0).unwrap();
        assert_eq!(t.params(), &s);
        let mut t = MeanTeacher::new(&vector(&[9.0, 9.0, 9.0]));
        t.update(&s, 0.0, 4).unwrap();
        assert_eq!(t.params(), &s);
    }

    #[test]
    fn ema_hand_recurrence() {
        let students = [
            vector(&[0.0, 0.0]),
            vector(&[1.0, 1.0]),
            vector(&[2.0, 2.0]),
        ];
        let mut t = MeanTeacher::new(&students[0]);
        for (n, s) in students.iter().enumerate() {
            t.update(s, 0.5, n as u64).unwrap();
        }
        assert_eq!(t.params().data[0], 1.25);
        assert_eq!(t.accumulator()[0], 1.25);
    }

    #[test]
    fn ema_rejects_bad_input() {
        let mut t = MeanTeacher::new(&vector(&[0.0, 0.0]));
        assert!(t.update(&vector(&[0.0, 0.0, 0.0]), 0.5, 1).is_err());
        assert!(t.update(&vector(&[0.0, 0.0]), 1.0, 1).is_err());
    }
}
