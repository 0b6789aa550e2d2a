//! Adaptive quadrature and improper-integral bookkeeping shared by the
//! model and grid modules.

use std::sync::Mutex;

use crate::{QsdError, Result};

/// Adaptive Simpson integration of `f` over `[a, b]`.
///
/// Endpoint evaluations that come back non-finite are nudged inwards once;
/// a non-finite interior value aborts with a quadrature error.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(QsdError::QuadratureFailure(format!(
            "non-finite interval [{a}, {b}]"
        )));
    }
    let nudge = 1e-12 * (b - a).abs();
    let eval_end = |x: f64, inward: f64| -> f64 {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f(x + inward * nudge)
        }
    };
    let fa = eval_end(a, 1.0);
    let fb = eval_end(b, -1.0);
    let m = 0.5 * (a + b);
    let fm = f(m);
    if !(fa.is_finite() && fb.is_finite() && fm.is_finite()) {
        // Positive blow-up of a density is treated as an infinite integral;
        // NaN is a genuine failure.
        if fa.is_nan() || fb.is_nan() || fm.is_nan() {
            return Err(QsdError::QuadratureFailure(format!(
                "NaN integrand on [{a}, {b}]"
            )));
        }
        return Ok(f64::INFINITY);
    }
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = rel_tol.max(1e-15);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 52)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !(flm.is_finite() && frm.is_finite()) {
        if flm.is_nan() || frm.is_nan() {
            return Err(QsdError::QuadratureFailure(format!(
                "NaN integrand on [{a}, {b}]"
            )));
        }
        return Ok(f64::INFINITY);
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    let scale = (left + right).abs().max(whole.abs()).max(1e-300);
    if depth == 0 || err.abs() <= 15.0 * tol * scale {
        return Ok(left + right + err / 15.0);
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, tol, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, tol, depth - 1)?;
    Ok(l + r)
}

/// Verdict about a monotone sequence of partial values of an improper
/// integral on a growing domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PartialLimit {
    Converged(f64),
    Divergent(f64),
    Inconclusive(f64),
}

impl PartialLimit {
    /// The extended-real value this verdict stands for.
    pub fn value(&self) -> f64 {
        match self {
            PartialLimit::Converged(v) => *v,
            PartialLimit::Divergent(_) => f64::INFINITY,
            PartialLimit::Inconclusive(v) => *v,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, PartialLimit::Converged(_))
    }
}

/// Divergence/convergence detection parameters for partial-value sequences.
#[derive(Clone, Copy, Debug)]
pub struct DivergenceRule {
    /// Relative growth per step that counts as "still growing".
    pub growth: f64,
    /// Absolute blow-up threshold for declaring divergence.
    pub blowup: f64,
    /// Minimum number of partials before a verdict.
    pub min_steps: usize,
    /// Relative change under which the sequence counts as converged.
    pub conv_tol: f64,
}

impl Default for DivergenceRule {
    fn default() -> Self {
        DivergenceRule {
            growth: 0.01,
            blowup: 1e8,
            min_steps: 8,
            conv_tol: 1e-9,
        }
    }
}

impl DivergenceRule {
    /// Judge a growing-domain partial sequence. `None` means undecided.
    ///
    /// Non-finite partials count as divergence (overflow of the underlying
    /// cumulants means the integral left double range).
    pub fn judge(&self, partials: &[f64]) -> Option<PartialLimit> {
        let n = partials.len();
        if n == 0 {
            return None;
        }
        let last = partials[n - 1];
        if !last.is_finite() {
            return Some(PartialLimit::Divergent(
                partials.iter().rev().find(|v| v.is_finite()).copied().unwrap_or(f64::MAX),
            ));
        }
        if n < self.min_steps.max(4) {
            return None;
        }
        let scale = last.abs().max(1e-300);
        let settled = (1..=3).all(|k| (partials[n - k] - partials[n - k - 1]).abs() <= self.conv_tol * scale);
        if settled {
            return Some(PartialLimit::Converged(last));
        }
        let growing = (1..=3).all(|k| {
            let prev = partials[n - k - 1].abs().max(1e-300);
            partials[n - k] - partials[n - k - 1] > self.growth * prev
        });
        if growing && last.abs() > self.blowup {
            return Some(PartialLimit::Divergent(last));
        }
        None
    }
}

/// Cached cumulative integral `x -> int_anchor^x f(t) dt`.
///
/// Every query integrates from the nearest cached point, so values are
/// mutually consistent to quadrature tolerance and repeated evaluation near
/// the same region stays cheap.
pub struct CachedIntegral<F: Fn(f64) -> f64> {
    f: F,
    anchor: f64,
    rel_tol: f64,
    // Sorted (x, value) pairs.
    table: Mutex<Vec<(f64, f64)>>,
}

impl<F: Fn(f64) -> f64> CachedIntegral<F> {
    pub fn new(f: F, anchor: f64, rel_tol: f64) -> Self {
        CachedIntegral {
            f,
            anchor,
            rel_tol,
            table: Mutex::new(vec![(anchor, 0.0)]),
        }
    }

    /// The point where the integral is zero.
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        let (x0, v0) = {
            let table = self.table.lock().unwrap();
            let i = table.partition_point(|&(t, _)| t < x);
            // Nearest cached point.
            if i == 0 {
                table[0]
            } else if i == table.len() || (x - table[i - 1].0) < (table[i].0 - x) {
                table[i - 1]
            } else {
                table[i]
            }
        };
        if x == x0 {
            return Ok(v0);
        }
        let delta = integrate(&self.f, x0, x, self.rel_tol)?;
        let v = v0 + delta;
        let mut table = self.table.lock().unwrap();
        let i = table.partition_point(|&(t, _)| t < x);
        if i == table.len() || table[i].0 != x {
            table.insert(i, (x, v));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_is_near_exact() {
        let v = integrate(|x| x * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_handles_integrable_endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2
        let v = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-4, "got {v}");
    }

    #[test]
    fn positive_blowup_becomes_infinite() {
        let v = integrate(|x| (x * x).exp(), 700.0, 701.0, 1e-8).unwrap();
        assert!(v.is_infinite());
    }

    #[test]
    fn rule_detects_convergence_and_divergence() {
        let rule = DivergenceRule::default();
        // Partial values of int_eps^1 x^{-1/2} dx at eps = 2^-k.
        let conv: Vec<f64> = (0..80).map(|k| 2.0 - 2.0 * (0.5f64).powi(k).sqrt()).collect();
        match rule.judge(&conv) {
            Some(PartialLimit::Converged(v)) => assert!((v - 2.0).abs() < 1e-4),
            other => panic!("expected convergence, got {other:?}"),
        }
        // Partial values of int_1^X 1 dx at X = 2^k: grows without bound.
        let div: Vec<f64> = (0..40).map(|k| (2.0f64).powi(k) - 1.0).collect();
        match rule.judge(&div) {
            Some(PartialLimit::Divergent(_)) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rule_is_undecided_early() {
        let rule = DivergenceRule::default();
        assert!(rule.judge(&[1.0, 2.0]).is_none());
    }

    #[test]
    fn cached_integral_matches_direct() {
        let c = CachedIntegral::new(|x: f64| (-2.0 * x).exp(), 0.0, 1e-12);
        let v1 = c.value(1.0).unwrap();
        let direct = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((v1 - direct).abs() < 1e-10);
        // Second query reuses the cache and stays consistent.
        let v2 = c.value(2.0).unwrap();
        let direct2 = (1.0 - (-4.0f64).exp()) / 2.0;
        assert!((v2 - direct2).abs() < 1e-10);
    }
}
