//! Discretization of `[0, R]` with speed-measure cell weights and the
//! discrete integral operators `I` and `K`.
//!
//! All quadrature against `dm` uses one convention: a function known at the
//! nodes contributes `avg(g_{i-1}, g_i) * w_i` per cell, where
//! `w_i = m((x_{i-1}, x_i])`. `I g` is the trapezoid rule applied to the
//! cumulative `C(x) = int_0^x g dm` over the scale coordinates `s(x_i)`, and
//! `K g = s * int g dm - I g`. Sharing the convention makes the discrete
//! renewal algebra exact to rounding: identities like
//! `K g + I g = s * int g dm` hold without discretization error.

use crate::model::DiffusionSpec;
use crate::{quad, QsdError, Result};

/// Grid construction parameters.
#[derive(Clone, Copy, Debug)]
pub struct GridParams {
    /// Truncation radius `R` (must be finite and `< ell`, or `= ell` when
    /// `ell` is finite).
    pub radius: f64,
    /// Number of cells; there are `n_cells + 1` nodes.
    pub n_cells: usize,
    /// Grading factor `>= 1`: cell widths grow like `g^min(i-1, N-i)`, so
    /// `g > 1` refines both endpoints and `g = 1` is uniform.
    pub grading: f64,
}

impl GridParams {
    pub fn new(radius: f64, n_cells: usize) -> Self {
        GridParams {
            radius,
            n_cells,
            grading: 1.0,
        }
    }

    pub fn with_grading(mut self, grading: f64) -> Self {
        self.grading = grading;
        self
    }
}

/// Discretized diffusion: nodes, scale coordinates, cell masses, tail mass.
#[derive(Clone, Debug)]
pub struct Grid {
    spec: DiffusionSpec,
    nodes: Vec<f64>,
    s_nodes: Vec<f64>,
    weights: Vec<f64>,
    tail_mass: f64,
}

impl Grid {
    pub fn build(spec: &DiffusionSpec, params: &GridParams) -> Result<Self> {
        let r = params.radius;
        let n = params.n_cells;
        if !r.is_finite() || r <= 0.0 {
            return Err(QsdError::GridBuild {
                cell: 0,
                reason: format!("radius must be finite and positive, got {r}"),
            });
        }
        if r > spec.ell() {
            return Err(QsdError::GridBuild {
                cell: 0,
                reason: format!("radius {r} exceeds the interval length {}", spec.ell()),
            });
        }
        if n < 2 {
            return Err(QsdError::GridBuild {
                cell: 0,
                reason: "need at least two cells".into(),
            });
        }
        if !(params.grading >= 1.0) {
            return Err(QsdError::GridBuild {
                cell: 0,
                reason: format!("grading must be >= 1, got {}", params.grading),
            });
        }
        let nodes = graded_nodes(r, n, params.grading);
        let mut s_nodes = Vec::with_capacity(n + 1);
        let mut weights = Vec::with_capacity(n);
        s_nodes.push(0.0);
        for i in 1..=nodes.len() - 1 {
            let (a, b) = (nodes[i - 1], nodes[i]);
            // The first cell touches 0 where densities may be singular;
            // the head ladder separates integrable from divergent.
            let w = if i == 1 {
                spec.m_head(b)
            } else {
                quad::integrate(|x| spec.m_density(x), a, b, 1e-12)
            }
            .map_err(|e| QsdError::GridBuild {
                cell: i,
                reason: format!("speed-measure mass on ({a}, {b}]: {e}"),
            })?;
            if !w.is_finite() || w <= 0.0 {
                return Err(QsdError::GridBuild {
                    cell: i,
                    reason: format!("cell mass on ({a}, {b}] is {w}"),
                });
            }
            weights.push(w);
            let ds = if i == 1 {
                spec.s_head(b)
            } else {
                quad::integrate(|x| spec.s_density(x), a, b, 1e-12)
            }
            .map_err(|e| QsdError::GridBuild {
                cell: i,
                reason: format!("scale increment on ({a}, {b}]: {e}"),
            })?;
            if !ds.is_finite() || ds <= 0.0 {
                return Err(QsdError::GridBuild {
                    cell: i,
                    reason: format!("scale increment on ({a}, {b}] is {ds}"),
                });
            }
            s_nodes.push(s_nodes[i - 1] + ds);
        }
        let tail_mass = if r < spec.ell() {
            spec.m_tail(r)?
        } else {
            0.0
        };
        Ok(Grid {
            spec: spec.clone(),
            nodes,
            s_nodes,
            weights,
            tail_mass,
        })
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    /// Node coordinates, `x_0 = 0` through `x_N = R`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Scale coordinates `s(x_i)`, normalized to `s(0) = 0`.
    pub fn s_nodes(&self) -> &[f64] {
        &self.s_nodes
    }

    /// Cell masses `w_i = m((x_{i-1}, x_i])`, length `n_cells`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Speed-measure mass beyond the truncation radius.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn n_cells(&self) -> usize {
        self.weights.len()
    }

    pub fn radius(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Total grid mass `m((0, R])`.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Sample a pointwise function at the nodes.
    pub fn node_function(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// `int_0^R g dm` for node values `g`.
    pub fn integrate_dm(&self, g: &[f64]) -> f64 {
        debug_assert_eq!(g.len(), self.nodes.len());
        let mut acc = 0.0;
        for i in 1..g.len() {
            acc += 0.5 * (g[i - 1] + g[i]) * self.weights[i - 1];
        }
        acc
    }

    /// Cumulative `C_j = int_0^{x_j} g dm` at every node.
    pub fn cumulative_dm(&self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.nodes.len());
        let mut c = Vec::with_capacity(g.len());
        c.push(0.0);
        for i in 1..g.len() {
            c.push(c[i - 1] + 0.5 * (g[i - 1] + g[i]) * self.weights[i - 1]);
        }
        c
    }

    /// `I g (x) = int_0^x (int_0^t g dm) ds(t)` at every node.
    pub fn apply_i(&self, g: &[f64]) -> Vec<f64> {
        let c = self.cumulative_dm(g);
        self.integrate_cumulative_ds(&c)
    }

    /// `K g (x) = s(x) int_0^R g dm - I g (x)`, the Green-kernel integral
    /// `int (s(x) ^ s(y)) g(y) dm(dy)`.
    ///
    /// Evaluated by summation by parts as
    /// `K g_j = s_j * sum_{i > j} dC_i + sum_{i <= j} avg(s)_i dC_i` with
    /// `dC_i = avg(g)_i w_i`: algebraically identical to `s * C_N - I g` in
    /// the shared convention, but free of the catastrophic cancellation that
    /// form suffers where `s` is huge, and manifestly nonnegative for
    /// nonnegative `g`.
    pub fn apply_k(&self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.nodes.len());
        let n = self.weights.len();
        let dc: Vec<f64> = (0..n)
            .map(|i| 0.5 * (g[i] + g[i + 1]) * self.weights[i])
            .collect();
        // Suffix sums of dC, accumulated from the right for stability.
        let mut suffix = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + dc[i];
        }
        let mut out = Vec::with_capacity(n + 1);
        let mut near = 0.0; // sum_{i <= j} avg(s)_i dC_i
        out.push(self.s_nodes[0] * suffix[0]);
        for i in 0..n {
            near += 0.5 * (self.s_nodes[i] + self.s_nodes[i + 1]) * dc[i];
            out.push(self.s_nodes[i + 1] * suffix[i + 1] + near);
        }
        out
    }

    fn integrate_cumulative_ds(&self, c: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(c.len());
        out.push(0.0);
        for j in 1..c.len() {
            let ds = self.s_nodes[j] - self.s_nodes[j - 1];
            out.push(out[j - 1] + 0.5 * (c[j - 1] + c[j]) * ds);
        }
        out
    }

    /// Warn when the truncated tail is not negligible relative to the grid.
    pub fn tail_warning(&self, rel_threshold: f64) -> Option<String> {
        let total = self.total_mass();
        if !self.tail_mass.is_finite() || self.tail_mass > rel_threshold * total {
            Some(format!(
                "speed-measure tail beyond R = {} is {:e} ({:e} of the grid mass); \
                 truncation effects may dominate",
                self.radius(),
                self.tail_mass,
                self.tail_mass / total
            ))
        } else {
            None
        }
    }
}

fn graded_nodes(r: f64, n: usize, g: f64) -> Vec<f64> {
    let mut widths = Vec::with_capacity(n);
    for i in 1..=n {
        let k = (i - 1).min(n - i) as i32;
        widths.push(g.powi(k));
    }
    let sum: f64 = widths.iter().sum();
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(0.0);
    let mut acc = 0.0;
    for w in &widths {
        acc += w / sum * r;
        nodes.push(acc);
    }
    // Pin the endpoint exactly.
    *nodes.last_mut().unwrap() = r;
    nodes
}

/// Smallest power-of-two radius whose speed-measure tail is negligible:
/// `tail(R) * max(R, 1) <= 1e-6 * m((0, R])`. Errors when the total mass is
/// infinite (then no truncation radius is adequate and the caller must pick
/// one with an explicit tail-error budget).
pub fn default_radius(spec: &DiffusionSpec) -> Result<f64> {
    if spec.ell().is_finite() {
        return Ok(spec.ell());
    }
    let mut r = spec.ref_point().max(1.0);
    for _ in 0..40 {
        let tail = spec.m_tail(r)?;
        if tail.is_finite() {
            let mass = spec.m_mass(1e-12, r)?;
            if tail * r.max(1.0) <= 1e-6 * mass {
                return Ok(r);
            }
        }
        r *= 2.0;
    }
    Err(QsdError::UnsupportedSpec(
        "no adequate truncation radius: the speed measure has heavy or infinite tail mass".into(),
    ))
}
