//! Monte Carlo side of the laboratory: hitting-time sampling, conditioned
//! (Yaglom) laws, tail-rate estimators and the jump-boundary occupation
//! measure.
//!
//! Reproducibility: every path owns an independent ChaCha8 stream derived
//! from `(seed, path index)` by splitmix64 expansion, so results are
//! bit-identical regardless of how rayon schedules the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::grid::Grid;
use crate::model::DiffusionSpec;
use crate::renewal::GridMeasure;
use crate::{QsdError, Result};

/// Path discretization scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    /// Euler-Maruyama on `dX = b dt + sqrt(2a) dW`; requires coefficient
    /// form.
    EulerMaruyama,
    /// Exact inverse-Gaussian absorption times for Brownian motion with
    /// drift `-c` (no path discretization error).
    ExactBmDrift { c: f64 },
}

/// Simulation parameters.
#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    /// Euler step.
    pub h: f64,
    /// Time horizon; paths alive at the horizon are censored.
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Brownian-bridge absorption correction between Euler steps.
    pub bridge: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            h: 1e-3,
            horizon: 1e3,
            n_paths: 10_000,
            seed: 1,
            scheme: Scheme::EulerMaruyama,
            bridge: true,
        }
    }
}

/// Initial condition for path sampling.
#[derive(Clone, Copy, Debug)]
pub enum InitialLaw<'a> {
    Point(f64),
    Measure(&'a Grid, &'a GridMeasure),
}

impl InitialLaw<'_> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            InitialLaw::Point(x) => *x,
            InitialLaw::Measure(grid, mu) => mu.quantile(grid, rng.gen::<f64>()),
        }
    }
}

/// Sorted absorption times plus censoring bookkeeping.
#[derive(Clone, Debug)]
pub struct HittingSample {
    /// Absorption times of absorbed paths, ascending.
    pub times: Vec<f64>,
    /// Paths still alive at the horizon.
    pub censored: usize,
    pub horizon: f64,
    pub n_paths: usize,
}

impl HittingSample {
    /// Empirical survival probability `P(T > t)`, counting censored paths
    /// as survivors (valid for `t <= horizon`).
    pub fn survival(&self, t: f64) -> f64 {
        let absorbed_by_t = self.times.partition_point(|&u| u <= t);
        (self.n_paths - absorbed_by_t) as f64 / self.n_paths as f64
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn path_rng(seed: u64, idx: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = splitmix64(seed).wrapping_add(splitmix64(idx.wrapping_mul(0xA24B_AED4_963E_E407)));
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Inverse-Gaussian sample with mean `mu` and shape `shape`
/// (Michael-Schucany-Haas).
fn sample_inverse_gaussian(rng: &mut ChaCha8Rng, mu: f64, shape: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let y = z * z;
    let x = mu + mu * mu * y / (2.0 * shape)
        - (mu / (2.0 * shape)) * (4.0 * mu * shape * y + mu * mu * y * y).sqrt();
    let u: f64 = rng.gen();
    if u <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

struct EulerStepper<'a> {
    a: &'a crate::model::Density,
    b: &'a crate::model::Density,
    h: f64,
    bridge: bool,
}

impl EulerStepper<'_> {
    /// Advance one step; `Some(dt)` is the within-step absorption offset.
    fn step(&self, x: &mut f64, rng: &mut ChaCha8Rng) -> Option<f64> {
        let sigma2 = 2.0 * self.a.eval(*x);
        let z: f64 = rng.sample(StandardNormal);
        let x_new = *x + self.b.eval(*x) * self.h + (sigma2 * self.h).sqrt() * z;
        if x_new <= 0.0 {
            // Linear crossing-time interpolation inside the step.
            let frac = (*x / (*x - x_new)).clamp(0.0, 1.0);
            return Some(frac * self.h);
        }
        if self.bridge {
            // Probability a Brownian bridge between the endpoints dipped
            // below 0 during the step.
            let p = (-2.0 * *x * x_new / (sigma2 * self.h)).exp();
            if rng.gen::<f64>() < p {
                *x = x_new;
                return Some(0.5 * self.h);
            }
        }
        *x = x_new;
        None
    }
}

/// Sample absorption times at 0.
pub fn sample_hitting_times(
    spec: &DiffusionSpec,
    init: InitialLaw<'_>,
    cfg: &SimConfig,
) -> Result<HittingSample> {
    validate_cfg(spec, cfg)?;
    let raw: Vec<Option<f64>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = path_rng(cfg.seed, idx);
            let x0 = init.draw(&mut rng);
            match cfg.scheme {
                Scheme::ExactBmDrift { c } => {
                    let t = sample_inverse_gaussian(&mut rng, x0 / c, x0 * x0);
                    (t <= cfg.horizon).then_some(t)
                }
                Scheme::EulerMaruyama => {
                    let (a, b) = spec.coefficients().expect("validated");
                    let stepper = EulerStepper {
                        a,
                        b,
                        h: cfg.h,
                        bridge: cfg.bridge,
                    };
                    let mut x = x0;
                    let mut t = 0.0;
                    while t < cfg.horizon {
                        if let Some(dt) = stepper.step(&mut x, &mut rng) {
                            return Some(t + dt);
                        }
                        t += cfg.h;
                    }
                    None
                }
            }
        })
        .collect();
    let mut times: Vec<f64> = raw.iter().filter_map(|t| *t).collect();
    let censored = raw.len() - times.len();
    times.sort_by(f64::total_cmp);
    Ok(HittingSample {
        times,
        censored,
        horizon: cfg.horizon,
        n_paths: cfg.n_paths,
    })
}

fn validate_cfg(spec: &DiffusionSpec, cfg: &SimConfig) -> Result<()> {
    if cfg.n_paths == 0 {
        return Err(QsdError::UnsupportedSimulation("n_paths = 0".into()));
    }
    match cfg.scheme {
        Scheme::EulerMaruyama => {
            if !(cfg.h > 0.0) || !(cfg.horizon > 0.0) {
                return Err(QsdError::UnsupportedSimulation(format!(
                    "need positive step and horizon, got h = {}, horizon = {}",
                    cfg.h, cfg.horizon
                )));
            }
            if spec.coefficients().is_none() {
                return Err(QsdError::UnsupportedSimulation(
                    "Euler-Maruyama needs generator coefficients; \
                     this spec is measure-only"
                        .into(),
                ));
            }
        }
        Scheme::ExactBmDrift { c } => {
            if !(c > 0.0) {
                return Err(QsdError::UnsupportedSimulation(format!(
                    "exact scheme needs drift c > 0, got {c}"
                )));
            }
        }
    }
    Ok(())
}

/// Empirical law of `X_t` conditioned on survival (`T_0 > t`), as a grid
/// measure. Returns the measure and the number of surviving paths.
pub fn yaglom_estimate(
    grid: &Grid,
    init: InitialLaw<'_>,
    t: f64,
    cfg: &SimConfig,
) -> Result<(GridMeasure, usize)> {
    let spec = grid.spec();
    if !matches!(cfg.scheme, Scheme::EulerMaruyama) {
        return Err(QsdError::UnsupportedSimulation(
            "conditioned laws need pathwise positions: use Euler-Maruyama".into(),
        ));
    }
    validate_cfg(spec, cfg)?;
    let positions: Vec<Option<f64>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = path_rng(cfg.seed, idx);
            let x0 = init.draw(&mut rng);
            let (a, b) = spec.coefficients().expect("validated");
            let stepper = EulerStepper {
                a,
                b,
                h: cfg.h,
                bridge: cfg.bridge,
            };
            let mut x = x0;
            let mut tau = 0.0;
            while tau < t {
                if stepper.step(&mut x, &mut rng).is_some() {
                    return None;
                }
                tau += cfg.h;
            }
            Some(x)
        })
        .collect();
    let survivors: Vec<f64> = positions.iter().filter_map(|p| *p).collect();
    if survivors.is_empty() {
        return Err(QsdError::InsufficientTail(0));
    }
    let measure = histogram_measure(grid, &survivors)?;
    Ok((measure, survivors.len()))
}

/// Long-run occupation measure of the jump-boundary process: one chain that
/// restarts from `init` at every absorption. Time-weighted histogram after a
/// 10% burn-in. Returns the measure and the completed cycle count.
pub fn jump_boundary_occupation(
    grid: &Grid,
    init: InitialLaw<'_>,
    cfg: &SimConfig,
) -> Result<(GridMeasure, usize)> {
    let spec = grid.spec();
    if !matches!(cfg.scheme, Scheme::EulerMaruyama) {
        return Err(QsdError::UnsupportedSimulation(
            "occupation measures need pathwise positions: use Euler-Maruyama".into(),
        ));
    }
    validate_cfg(spec, cfg)?;
    let (a, b) = spec.coefficients().expect("validated");
    let stepper = EulerStepper {
        a,
        b,
        h: cfg.h,
        bridge: cfg.bridge,
    };
    let mut rng = path_rng(cfg.seed, u64::MAX);
    let mut weights = vec![0.0f64; grid.n_cells()];
    let mut beyond = 0.0f64;
    let burn_in = 0.1 * cfg.horizon;
    let mut t = 0.0;
    let mut cycles = 0usize;
    let mut x = init.draw(&mut rng);
    while t < cfg.horizon {
        if t >= burn_in {
            deposit(grid, &mut weights, &mut beyond, x, cfg.h);
        }
        if stepper.step(&mut x, &mut rng).is_some() {
            cycles += 1;
            x = init.draw(&mut rng);
        }
        t += cfg.h;
    }
    if cycles == 0 {
        return Err(QsdError::InsufficientTail(0));
    }
    let measure = GridMeasure::from_cell_masses(grid, &weights)?;
    Ok((measure, cycles))
}

fn deposit(grid: &Grid, weights: &mut [f64], beyond: &mut f64, x: f64, h: f64) {
    let nodes = grid.nodes();
    if x >= *nodes.last().unwrap() {
        *beyond += h;
        return;
    }
    let cell = nodes.partition_point(|&t| t <= x).max(1) - 1;
    weights[cell.min(weights.len() - 1)] += h;
}

fn histogram_measure(grid: &Grid, points: &[f64]) -> Result<GridMeasure> {
    let mut weights = vec![0.0f64; grid.n_cells()];
    let mut beyond = 0.0;
    for &x in points {
        deposit(grid, &mut weights, &mut beyond, x, 1.0);
    }
    GridMeasure::from_cell_masses(grid, &weights)
}

/// One-sample Kolmogorov-Smirnov statistic of `times` against the CDF `f`.
/// `times` must be sorted ascending.
pub fn ks_statistic(times: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let n = times.len() as f64;
    let mut d = 0.0f64;
    for (i, &t) in times.iter().enumerate() {
        let c = f(t);
        d = d.max((c - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - c).abs());
    }
    d
}

/// 1%-level KS acceptance threshold for sample size `n`.
pub fn ks_threshold_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Raw tail ratio `P(T > t + s) / P(T > t)` with counts; errors when the
/// denominator has no survivors or the numerator has fewer than
/// `min_survivors` (default 100 via [`tail_ratio`]).
pub fn tail_ratio_checked(
    sample: &HittingSample,
    t: f64,
    s: f64,
    min_survivors: usize,
) -> Result<f64> {
    if t + s > sample.horizon {
        return Err(QsdError::UnsupportedSimulation(format!(
            "tail ratio window {t} + {s} exceeds the simulation horizon"
        )));
    }
    let n = sample.n_paths as f64;
    let surv_t = (sample.survival(t) * n).round() as usize;
    let surv_ts = (sample.survival(t + s) * n).round() as usize;
    if surv_t == 0 {
        return Err(QsdError::UndefinedRatio(t));
    }
    if surv_ts < min_survivors {
        return Err(QsdError::InsufficientTail(surv_ts));
    }
    Ok(surv_ts as f64 / surv_t as f64)
}

pub fn tail_ratio(sample: &HittingSample, t: f64, s: f64) -> Result<f64> {
    tail_ratio_checked(sample, t, s, 100)
}

/// Extrapolated tail-rate estimate: fit
/// `lambda(t) = -ln(ratio(t, s)) / s` against `1/t` over the probe times and
/// report the `t -> inf` intercept. Removes the `O(1/t)` bias that algebraic
/// prefactors (e.g. `t^{-3/2}` for Dirac initial laws) put on finite-`t`
/// ratios.
pub fn tail_ratio_trend(sample: &HittingSample, ts: &[f64], s: f64) -> Result<f64> {
    if ts.len() < 2 {
        return Err(QsdError::InsufficientTail(ts.len()));
    }
    if !(s > 0.0) {
        return Err(QsdError::UnsupportedSimulation(
            "tail ratio trend needs a positive window s".into(),
        ));
    }
    let mut xs = vec![];
    let mut ys = vec![];
    for &t in ts {
        let ratio = tail_ratio(sample, t, s)?;
        if !(ratio > 0.0) {
            return Err(QsdError::UndefinedRatio(t));
        }
        // The window-averaged rate pairs with the window average of 1/t,
        // which is ln(1 + s/t) / s exactly; using it as the covariate
        // removes the leading finite-window bias.
        xs.push(((t + s) / t).ln() / s);
        ys.push(-ratio.ln() / s);
    }
    let (intercept, _) = least_squares_line(&xs, &ys);
    Ok(intercept)
}

/// Tail-rate estimate from the survival curve: least squares of
/// `ln S(t) = a + b ln t + c / t + slope * t` over absorption times inside
/// the `[q_lo, q_hi]` quantile window. The `ln t` and `1/t` covariates
/// absorb algebraic and Gaussian-kernel prefactors, so `-slope` estimates
/// the exponential rate even for Dirac initial laws; keep the window wide
/// (early and deep quantiles) so `ln t` and `t` stay distinguishable.
/// Returns `slope` (negative for decaying tails).
pub fn log_tail_slope(sample: &HittingSample, q_lo: f64, q_hi: f64) -> Result<f64> {
    let n = sample.times.len();
    if n < 100 {
        return Err(QsdError::InsufficientTail(n));
    }
    let lo = ((q_lo * sample.n_paths as f64) as usize).min(n - 1);
    let hi = ((q_hi * sample.n_paths as f64) as usize).min(n - 1);
    if hi <= lo + 10 {
        return Err(QsdError::InsufficientTail(hi.saturating_sub(lo)));
    }
    const P: usize = 4;
    let mut ata = [[0.0f64; P]; P];
    let mut aty = [0.0f64; P];
    let total = sample.n_paths as f64;
    for i in lo..hi {
        let t = sample.times[i];
        if !(t > 0.0) {
            continue;
        }
        let surv = (total - (i + 1) as f64) / total;
        if surv <= 0.0 {
            break;
        }
        let row = [1.0, t.ln(), 1.0 / t, t];
        let y = surv.ln();
        for r in 0..P {
            for c in 0..P {
                ata[r][c] += row[r] * row[c];
            }
            aty[r] += row[r] * y;
        }
    }
    solve(ata, aty)
        .map(|beta| beta[P - 1])
        .ok_or_else(|| QsdError::InsufficientTail(hi - lo))
}

#[allow(clippy::needless_range_loop)]
fn solve<const P: usize>(mut a: [[f64; P]; P], mut b: [f64; P]) -> Option<[f64; P]> {
    for k in 0..P {
        let piv = (k..P).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[piv][k].abs() < 1e-30 {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..P {
            let f = a[i][k] / a[k][k];
            for j in k..P {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = [0.0f64; P];
    for k in (0..P).rev() {
        let mut s = b[k];
        for j in k + 1..P {
            s -= a[k][j] * x[j];
        }
        x[k] = s / a[k][k];
    }
    Some(x)
}

fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (intercept, slope)
}
