//! Training-curve analysis: sliding-window linear slopes and a constrained
//! fit of the saturating exponential `f(x) = a (1 - exp(-b x^c))`.
//!
//! The exponential is fitted with Levenberg-Marquardt over unconstrained
//! surrogates (`logit a`, `ln b`, `logit c`), so every returned fit satisfies
//! `0 < a < 1`, `b > 0`, `0 < c < 1` by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-epoch accuracies `f_1..f_n`, stored 0-based but addressed 1-based.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracySeries {
    values: Vec<f64>,
}

impl AccuracySeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("accuracy {v} outside [0, 1]")));
        }
        Ok(Self { values })
    }

    pub fn push(&mut self, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Contract(format!("accuracy {value} outside [0, 1]")));
        }
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `f_epoch`, 1-indexed.
    pub fn at(&self, epoch: usize) -> f64 {
        self.values[epoch - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The first `n` epochs.
    pub fn prefix(&self, n: usize) -> &[f64] {
        &self.values[..n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares line through `(x0 + j, ys[j])`.
pub fn linear_fit(ys: &[f64], x0: f64) -> LinearFit {
    let n = ys.len() as f64;
    let x_mean = x0 + (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (j, &y) in ys.iter().enumerate() {
        let dx = x0 + j as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    LinearFit {
        slope,
        intercept: y_mean - slope * x_mean,
    }
}

/// Slope `k_i` of the least-squares line through `f_{i-w}..f_i`
/// (w + 1 points at abscissae 0..w).
pub fn window_slope(series: &AccuracySeries, epoch: usize, window: usize) -> Result<f64> {
    if window < 2 {
        return Err(Error::Config(format!(
            "window size must be >= 2, got {window}"
        )));
    }
    if epoch <= window || epoch > series.len() {
        return Err(Error::InsufficientHistory(format!(
            "slope at epoch {epoch} with window {window} needs epochs {}..={epoch}, have 1..={}",
            epoch as i64 - window as i64,
            series.len()
        )));
    }
    Ok(linear_fit(&series.values[epoch - 1 - window..epoch], 0.0).slope)
}

/// A fitted saturating exponential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sse: f64,
    /// Restarts that converged to a finite SSE.
    pub restarts_used: usize,
    /// Set when the optimum sits at the edge of the feasible region or the
    /// normal matrix is near-singular there.
    pub ill_conditioned: bool,
}

impl ExpFit {
    pub fn eval(&self, x: f64) -> f64 {
        saturating_exp(self.a, self.b, self.c, x)
    }

    /// `f'(x) = a b c x^(c-1) exp(-b x^c)`.
    pub fn gradient(&self, x: f64) -> f64 {
        exp_gradient(self, x)
    }
}

pub fn saturating_exp(a: f64, b: f64, c: f64, x: f64) -> f64 {
    a * (1.0 - (-b * x.powf(c)).exp())
}

pub fn exp_gradient(fit: &ExpFit, x: f64) -> f64 {
    let xc = x.powf(fit.c);
    fit.a * fit.b * fit.c * x.powf(fit.c - 1.0) * (-fit.b * xc).exp()
}

const MAX_ITERATIONS: usize = 500;
const REL_TOL: f64 = 1e-10;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;
/// Surrogate magnitude beyond which a parameter is pinned to its bound.
const SURROGATE_EDGE: f64 = 15.0;
/// Surrogates are clamped here so the mapped parameters stay strictly
/// inside their bounds in floating point.
const SURROGATE_LIMIT: f64 = 30.0;

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

#[derive(Debug, Clone, Copy)]
struct Params {
    a: f64,
    b: f64,
    c: f64,
}

impl Params {
    fn from_surrogate(u: [f64; 3]) -> Self {
        let u = u.map(|v| v.clamp(-SURROGATE_LIMIT, SURROGATE_LIMIT));
        Self {
            a: sigmoid(u[0]),
            b: u[1].exp(),
            c: sigmoid(u[2]),
        }
    }

    fn surrogate(&self) -> [f64; 3] {
        [logit(self.a), self.b.ln(), logit(self.c)]
    }
}

fn sse(u: [f64; 3], ys: &[f64]) -> f64 {
    let p = Params::from_surrogate(u);
    ys.iter()
        .enumerate()
        .map(|(j, &y)| {
            let r = saturating_exp(p.a, p.b, p.c, (j + 1) as f64) - y;
            r * r
        })
        .sum()
}

/// Normal equations `J^T J` and `J^T r` in surrogate coordinates.
fn normal_equations(u: [f64; 3], ys: &[f64]) -> ([[f64; 3]; 3], [f64; 3]) {
    let p = Params::from_surrogate(u);
    let chain = [p.a * (1.0 - p.a), p.b, p.c * (1.0 - p.c)];
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for (j, &y) in ys.iter().enumerate() {
        let x = (j + 1) as f64;
        let xc = x.powf(p.c);
        let e = (-p.b * xc).exp();
        let r = p.a * (1.0 - e) - y;
        let grad = [
            (1.0 - e) * chain[0],
            p.a * xc * e * chain[1],
            p.a * p.b * xc * x.ln() * e * chain[2],
        ];
        for m in 0..3 {
            jtr[m] += grad[m] * r;
            for n in 0..3 {
                jtj[m][n] += grad[m] * grad[n];
            }
        }
    }
    (jtj, jtr)
}

/// Solve a 3x3 system by Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

struct Outcome {
    u: [f64; 3],
    sse: f64,
}

fn levenberg_marquardt(start: Params, ys: &[f64]) -> Option<Outcome> {
    let mut u = start.surrogate();
    let mut cost = sse(u, ys);
    if !cost.is_finite() {
        return None;
    }
    let mut lambda = LAMBDA_INIT;
    for _ in 0..MAX_ITERATIONS {
        let (jtj, jtr) = normal_equations(u, ys);
        let mut accepted = false;
        while lambda < LAMBDA_MAX {
            let mut damped = jtj;
            for k in 0..3 {
                damped[k][k] += lambda * jtj[k][k].max(1e-12);
            }
            let step = solve3(damped, [-jtr[0], -jtr[1], -jtr[2]]);
            if let Some(step) = step {
                let trial = [u[0] + step[0], u[1] + step[1], u[2] + step[2]];
                let trial_cost = sse(trial, ys);
                if trial_cost.is_finite() && trial_cost <= cost {
                    let rel = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                    u = trial;
                    cost = trial_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel < REL_TOL {
                        return Some(Outcome { u, sse: cost });
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Some(Outcome { u, sse: cost })
}

/// Start points: a 2x2 grid over `a` and `b` at `c = 0.5`, plus one
/// estimated from the data.
fn start_points(ys: &[f64]) -> Vec<Params> {
    let mut starts = Vec::with_capacity(5);
    for a in [0.5, 0.9] {
        for b in [0.01, 0.1] {
            starts.push(Params { a, b, c: 0.5 });
        }
    }
    starts.push(data_driven_start(ys));
    starts
}

/// `a` from the series maximum; `b`, `c` from the line through two points of
/// `ln(-ln(1 - y/a)) = ln b + c ln x`.
fn data_driven_start(ys: &[f64]) -> Params {
    let fallback = Params {
        a: 0.5,
        b: 0.1,
        c: 0.5,
    };
    let max = ys.iter().cloned().fold(f64::MIN, f64::max);
    let a = (max * 1.05).clamp(0.01, 0.99);
    let n = ys.len();
    let x1 = (n / 4).max(1);
    let x2 = (3 * n / 4).max(x1 + 1).min(n);
    let transform = |x: usize| {
        let q = 1.0 - ys[x - 1] / a;
        (q > 0.0 && q < 1.0).then(|| (-q.ln()).ln())
    };
    match (transform(x1), transform(x2)) {
        (Some(z1), Some(z2)) if x2 > x1 => {
            let c = (z2 - z1) / ((x2 as f64).ln() - (x1 as f64).ln());
            let b = (z1 - c * (x1 as f64).ln()).exp();
            if c.is_finite() && b.is_finite() && b > 0.0 {
                Params {
                    a,
                    b: b.clamp(1e-6, 1e3),
                    c: c.clamp(0.02, 0.98),
                }
            } else {
                fallback
            }
        }
        _ => fallback,
    }
}

/// Fit `f(x) = a (1 - exp(-b x^c))` to `f_1..f_n` under `0<a<1, b>0, 0<c<1`.
///
/// Deterministic: five fixed restarts, best SSE wins.
pub fn fit_saturating_exp(ys: &[f64]) -> Result<ExpFit> {
    if ys.len() < 5 {
        return Err(Error::InsufficientHistory(format!(
            "exponential fit needs at least 5 points, got {}",
            ys.len()
        )));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Contract("series contains non-finite values".into()));
    }
    let mut best: Option<Outcome> = None;
    let mut used = 0;
    for start in start_points(ys) {
        if let Some(out) = levenberg_marquardt(start, ys) {
            used += 1;
            if best.as_ref().map_or(true, |b| out.sse < b.sse) {
                best = Some(out);
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::Fit(format!(
            "all {} restarts diverged on {} points (first {:?})",
            start_points(ys).len(),
            ys.len(),
            ys.first()
        ))
    })?;
    let p = Params::from_surrogate(best.u);
    let at_edge = best.u.iter().any(|u| u.abs() > SURROGATE_EDGE);
    Ok(ExpFit {
        a: p.a,
        b: p.b,
        c: p.c,
        sse: best.sse,
        restarts_used: used,
        ill_conditioned: at_edge || is_near_singular(best.u, ys),
    })
}

fn is_near_singular(u: [f64; 3], ys: &[f64]) -> bool {
    let (jtj, _) = normal_equations(u, ys);
    // scale to unit diagonal, then compare the determinant with 1
    let d: Vec<f64> = (0..3).map(|k| jtj[k][k].sqrt()).collect();
    if d.iter().any(|&v| v < 1e-150) {
        return true;
    }
    let m: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..3).map(|j| jtj[i][j] / (d[i] * d[j])).collect())
        .collect();
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    det.abs() < 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(f: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
        (1..=n).map(|x| f(x as f64)).collect()
    }

    #[test]
    fn slope_of_exact_line() {
        // f_j = 2j + 1 (not a valid accuracy, so bypass the range check)
        let s = AccuracySeries {
            values: series(|x| 2.0 * x + 1.0, 30),
        };
        for (i, w) in [(3, 2), (10, 5), (30, 29)] {
            assert!((window_slope(&s, i, w).unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn slope_of_constant_is_zero() {
        let s = AccuracySeries::new(vec![0.4; 12]).unwrap();
        assert_eq!(window_slope(&s, 12, 4).unwrap(), 0.0);
    }

    #[test]
    fn slope_hand_ols() {
        // (0,0), (1,0.5), (2,1.5): cov/var = 1.5/2
        let s = AccuracySeries {
            values: vec![0.0, 0.5, 1.5],
        };
        assert!((window_slope(&s, 3, 2).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn slope_needs_history() {
        let s = AccuracySeries::new(vec![0.1; 10]).unwrap();
        assert!(matches!(
            window_slope(&s, 5, 5),
            Err(Error::InsufficientHistory(_))
        ));
        assert!(matches!(
            window_slope(&s, 11, 5),
            Err(Error::InsufficientHistory(_))
        ));
        assert!(matches!(window_slope(&s, 5, 1), Err(Error::Config(_))));
    }

    #[test]
    fn series_rejects_out_of_range() {
        assert!(AccuracySeries::new(vec![0.5, 1.2]).is_err());
        let mut s = AccuracySeries::default();
        assert!(s.push(-0.1).is_err());
    }

    #[test]
    fn noiseless_recovery() {
        let ys = series(|x| saturating_exp(0.7, 0.05, 0.9, x), 100);
        let fit = fit_saturating_exp(&ys).unwrap();
        for (got, want) in [(fit.a, 0.7), (fit.b, 0.05), (fit.c, 0.9)] {
            assert!(((got - want) / want).abs() < 1e-4, "{fit:?}");
        }
        assert!(!fit.ill_conditioned);
    }

    #[test]
    fn noisy_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ys: Vec<f64> = series(|x| saturating_exp(0.7, 0.05, 0.9, x), 100)
            .into_iter()
            .map(|y| y + rng.gen_range(-1e-3..=1e-3))
            .collect();
        let fit = fit_saturating_exp(&ys).unwrap();
        for (got, want) in [(fit.a, 0.7), (fit.b, 0.05), (fit.c, 0.9)] {
            assert!(((got - want) / want).abs() < 0.02, "{fit:?}");
        }
    }

    #[test]
    fn constant_series_is_flagged() {
        let ys = vec![0.42; 40];
        let fit = fit_saturating_exp(&ys).unwrap();
        for x in [1.0, 10.0, 40.0] {
            assert!((fit.eval(x) - 0.42).abs() < 1e-3, "{fit:?}");
        }
        assert!(fit.ill_conditioned);
        assert!(fit.a > 0.0 && fit.a < 1.0 && fit.b > 0.0 && fit.c > 0.0 && fit.c < 1.0);
    }

    #[test]
    fn fit_needs_five_points() {
        assert!(matches!(
            fit_saturating_exp(&[0.1, 0.2, 0.3, 0.4]),
            Err(Error::InsufficientHistory(_))
        ));
    }

    #[test]
    fn gradient_closed_form() {
        let fit = ExpFit {
            a: 1.0,
            b: 1.0,
            c: 1.0,
            sse: 0.0,
            restarts_used: 0,
            ill_conditioned: false,
        };
        assert!((exp_gradient(&fit, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_difference() {
        let fit = ExpFit {
            a: 0.7,
            b: 0.05,
            c: 0.9,
            sse: 0.0,
            restarts_used: 0,
            ill_conditioned: false,
        };
        let h = 1e-5;
        for x in [1.0, 10.0, 50.0] {
            let fd = (fit.eval(x + h) - fit.eval(x - h)) / (2.0 * h);
            let an = fit.gradient(x);
            assert!(((an - fd) / fd).abs() < 1e-6, "x={x}: {an} vs {fd}");
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let ys = series(
            |x| saturating_exp(0.6, 0.1, 0.7, x) + 0.001 * (x * 1.7).sin(),
            60,
        );
        assert_eq!(
            fit_saturating_exp(&ys).unwrap(),
            fit_saturating_exp(&ys).unwrap()
        );
    }
}
