//! One-dimensional regulator map on step paths and the sandwich bound.

use serde::Serialize;
use thiserror::Error;

/// Right-continuous step path: `value[k]` holds on `[time[k], time[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepPath {
    pub time: Vec<f64>,
    pub value: Vec<f64>,
}

impl StepPath {
    pub fn new(time: Vec<f64>, value: Vec<f64>) -> Self {
        assert_eq!(time.len(), value.len(), "step path needs one value per time");
        StepPath { time, value }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn scale(&self, c: f64) -> StepPath {
        StepPath::new(self.time.clone(), self.value.iter().map(|v| v * c).collect())
    }
}

/// `psi(t) = max(0, -inf_{s <= t} x(s))` and `phi = x + psi`.
pub fn regulator_map(x: &StepPath) -> (StepPath, StepPath) {
    let mut psi = Vec::with_capacity(x.len());
    let mut push = 0.0f64;
    for &v in &x.value {
        push = push.max(-v);
        psi.push(push);
    }
    let phi = x.value.iter().zip(&psi).map(|(v, p)| v + p).collect();
    (StepPath::new(x.time.clone(), psi), StepPath::new(x.time.clone(), phi))
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("sandwich preconditions fail: {}", failures.join("; "))]
pub struct PreconditionError {
    pub failures: Vec<String>,
}

/// Checks `psi(x) <= y <= psi(x) + delta` on the grid.
///
/// Preconditions: (i) `w = x + y` and `w >= 0`; (ii) `y(0) = 0`, `y`
/// nondecreasing; (iii) `y` increases at grid point `k` only if `w[k] <= delta`.
pub fn sandwich_check(w: &StepPath, x: &StepPath, y: &StepPath, delta: f64) -> Result<bool, PreconditionError> {
    let n = w.len();
    if x.len() != n || y.len() != n || n == 0 {
        return Err(PreconditionError { failures: vec!["paths must share one nonempty grid".into()] });
    }
    let scale = w.value.iter().chain(&x.value).chain(&y.value).fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-9 * scale;
    let mut failures = Vec::new();
    if let Some(k) = (0..n).find(|&k| (w.value[k] - x.value[k] - y.value[k]).abs() > tol) {
        failures.push(format!("(i) w != x + y at point {k}"));
    }
    if let Some(k) = (0..n).find(|&k| w.value[k] < -tol) {
        failures.push(format!("(i) w < 0 at point {k}"));
    }
    if y.value[0].abs() > tol {
        failures.push(format!("(ii) y(0) = {} != 0", y.value[0]));
    }
    if let Some(k) = (1..n).find(|&k| y.value[k] < y.value[k - 1] - tol) {
        failures.push(format!("(ii) y decreases at point {k}"));
    }
    if let Some(k) = (1..n).find(|&k| y.value[k] > y.value[k - 1] + tol && w.value[k] > delta + tol) {
        failures.push(format!("(iii) y increases at point {k} with w = {} > delta", w.value[k]));
    }
    if !failures.is_empty() {
        return Err(PreconditionError { failures });
    }
    Ok(sandwiched(x, y, delta, tol))
}

/// The bound `psi(x) <= y <= psi(x) + delta` alone, within `tol`.
pub fn sandwiched(x: &StepPath, y: &StepPath, delta: f64, tol: f64) -> bool {
    let (psi, _) = regulator_map(x);
    psi.value.iter().zip(&y.value).all(|(p, y)| *p <= y + tol && *y <= p + delta + tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(v: &[f64]) -> StepPath {
        StepPath::new((0..v.len()).map(|k| k as f64).collect(), v.to_vec())
    }

    #[test]
    fn increasing_input_is_untouched() {
        let x = path(&[0.0, 1.0, 2.0, 3.0]);
        let (psi, phi) = regulator_map(&x);
        assert_eq!(psi.value, vec![0.0; 4]);
        assert_eq!(phi, x);
    }

    #[test]
    fn running_infimum() {
        let (psi, phi) = regulator_map(&path(&[0.0, -1.0, -3.0, -2.0]));
        assert_eq!(psi.value, vec![0.0, 1.0, 3.0, 3.0]);
        assert_eq!(phi.value, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_negative_is_reflected_at_once() {
        let (psi, phi) = regulator_map(&path(&[-2.0; 5]));
        assert_eq!(psi.value, vec![2.0; 5]);
        assert_eq!(phi.value, vec![0.0; 5]);
    }

    #[test]
    fn exact_solution_is_sandwiched() {
        let x = path(&[0.0, -1.0, 0.5, -3.0, -2.0]);
        let (psi, phi) = regulator_map(&x);
        assert_eq!(sandwich_check(&phi, &x, &psi, 0.0), Ok(true));
    }

    #[test]
    fn pushing_within_delta_is_sandwiched() {
        let x = path(&[0.0, -1.0, -1.0]);
        let y = path(&[0.0, 1.5, 1.5]);
        let w = path(&[0.0, 0.5, 0.5]);
        assert_eq!(sandwich_check(&w, &x, &y, 0.5), Ok(true));
    }

    #[test]
    fn overshoot_needs_pushing_above_delta() {
        // y ends above psi(x) + delta only by pushing while w > delta
        let x = path(&[0.0, -1.0, -1.0]);
        let y = path(&[0.0, 2.5, 2.5]);
        let w = path(&[0.0, 1.5, 1.5]);
        assert!(!sandwiched(&x, &y, 0.5, 0.0));
        let err = sandwich_check(&w, &x, &y, 0.5).unwrap_err();
        assert!(err.failures.iter().any(|f| f.starts_with("(iii)")));
    }

    #[test]
    fn preconditions_are_named() {
        let x = path(&[0.0, 1.0]);
        let y = path(&[1.0, 0.0]);
        let w = path(&[0.0, 0.0]);
        let err = sandwich_check(&w, &x, &y, 0.0).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("(i)") && text.contains("(ii)"));
    }
}
