//! One-dimensional diffusions in speed-measure / scale-function form.
//!
//! A diffusion on `(0, ell)` absorbed at 0 is described by the densities
//! `m'(x)` and `s'(x)` of its speed measure and scale function with respect
//! to Lebesgue measure. Coefficient form `a u'' + b u'` converts via
//! `m'(x) = exp(B(x)) / a(x)`, `s'(x) = exp(-B(x))` with
//! `B(x) = int_c^x b/a`. Boundaries are classified by the finiteness of the
//! iterated integrals `I` and `J`, and the infinite-QSD criterion at a
//! natural right boundary is `m(c, ell) < inf` together with
//! `limsup s(x) m(x, ell) < inf`.

use std::fmt;
use std::sync::Arc;

use crate::quad::{CachedIntegral, DivergenceRule, PartialLimit};
use crate::{func::FuncSpec, quad, QsdError, Result};

type DynFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// An evaluable positive density on `(0, ell)`.
#[derive(Clone)]
pub struct Density(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl Density {
    pub fn from_fn<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Density(Arc::new(f))
    }

    pub fn from_spec(spec: FuncSpec) -> Self {
        Density(Arc::new(move |x| spec.eval(x)))
    }

    pub fn constant(v: f64) -> Self {
        Density(Arc::new(move |_| v))
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Density(..)")
    }
}

/// Which boundary of `(0, ell)` to look at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryEnd {
    Lower,
    Upper,
}

/// Feller boundary classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    Regular,
    Exit,
    Entrance,
    Natural,
}

impl fmt::Display for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryKind::Regular => "regular",
            BoundaryKind::Exit => "exit",
            BoundaryKind::Entrance => "entrance",
            BoundaryKind::Natural => "natural",
        };
        f.write_str(s)
    }
}

/// Classification verdict with the computed `I` and `J` values
/// (`f64::INFINITY` when divergent).
#[derive(Clone, Copy, Debug)]
pub struct BoundaryClass {
    pub kind: BoundaryKind,
    pub i_value: f64,
    pub j_value: f64,
}

/// Tuning for boundary classification and improper integrals.
#[derive(Clone, Copy, Debug)]
pub struct ClassifyParams {
    /// Interior reference point; defaults to the spec's reference point.
    pub c: Option<f64>,
    /// Subcells per octave of the geometric cutoff ladder.
    pub sub_per_octave: usize,
    /// Maximum number of octaves before giving up.
    pub max_octaves: usize,
    pub rule: DivergenceRule,
    /// Relative tolerance for per-cell quadrature.
    pub cell_tol: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            c: None,
            sub_per_octave: 16,
            max_octaves: 200,
            rule: DivergenceRule::default(),
            cell_tol: 1e-10,
        }
    }
}

/// Verdict of the infinite-QSD criterion.
#[derive(Clone, Debug)]
pub enum QsdVerdict {
    /// Right boundary regular or entrance: exactly one QSD exists.
    UniqueQsd { upper: BoundaryClass },
    /// Natural right boundary with `m(c, ell) < inf` and bounded
    /// `s(x) m(x, ell)`.
    InfinitelyMany { limsup: f64, m_tail: f64 },
    /// The criterion fails; `reason` names the diverging witness.
    No { reason: String },
    Inconclusive { detail: String },
}

/// A one-dimensional diffusion on `(0, ell)` absorbed at 0.
#[derive(Clone)]
pub struct DiffusionSpec {
    ell: f64,
    m_density: Density,
    s_density: Density,
    /// `(a, b)` coefficients when known; needed for path simulation.
    coefficients: Option<(Density, Density)>,
    ref_point: f64,
    natural_scale: bool,
    scale_table: Arc<CachedIntegral<DynFn>>,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("ell", &self.ell)
            .field("ref_point", &self.ref_point)
            .field("natural_scale", &self.natural_scale)
            .finish()
    }
}

impl DiffusionSpec {
    /// Build from speed and scale densities.
    pub fn from_measures(ell: f64, m_density: Density, s_density: Density) -> Result<Self> {
        if !(ell > 0.0) {
            return Err(QsdError::UnsupportedSpec("ell must be positive".into()));
        }
        let ref_point = default_ref(ell);
        for &x in &[ref_point / 2.0, ref_point, probe_hi(ell, ref_point)] {
            let (mv, sv) = (m_density.eval(x), s_density.eval(x));
            if !(mv > 0.0) || !(sv > 0.0) {
                return Err(QsdError::UnsupportedSpec(format!(
                    "densities must be positive: m'({x}) = {mv}, s'({x}) = {sv}"
                )));
            }
        }
        let sd = s_density.clone();
        let scale_table: DynFn = Box::new(move |x| sd.eval(x));
        Ok(DiffusionSpec {
            ell,
            m_density,
            s_density,
            coefficients: None,
            ref_point,
            natural_scale: false,
            scale_table: Arc::new(CachedIntegral::new(scale_table, 0.0, 1e-12)),
        })
    }

    /// Build from a speed density alone; the scale is the identity
    /// (natural-scale diffusion).
    pub fn from_speed_measure(ell: f64, m_density: Density) -> Result<Self> {
        let mut spec = Self::from_measures(ell, m_density, Density::constant(1.0))?;
        spec.natural_scale = true;
        Ok(spec)
    }

    /// Build from generator coefficients `a u'' + b u'`.
    ///
    /// `m'(x) = exp(B(x)) / a(x)` and `s'(x) = exp(-B(x))` with
    /// `B(x) = int_{ref_point}^x b/a`. Different reference points rescale
    /// `m` and `s` by reciprocal constants, which cancels downstream.
    pub fn from_coefficients(ell: f64, a: Density, b: Density, ref_point: f64) -> Result<Self> {
        if !(ref_point > 0.0 && (ell.is_infinite() || ref_point < ell)) && ref_point != 0.0 {
            return Err(QsdError::InvalidCoefficient(format!(
                "reference point {ref_point} outside [0, ell)"
            )));
        }
        for &x in &[
            (ref_point.max(1e-3)) / 2.0,
            ref_point.max(1e-3),
            probe_hi(ell, ref_point.max(1e-3)),
        ] {
            let av = a.eval(x);
            if !(av > 0.0) {
                return Err(QsdError::InvalidCoefficient(format!("a({x}) = {av} <= 0")));
            }
        }
        let (aa, bb) = (a.clone(), b.clone());
        let drift: DynFn = Box::new(move |x| bb.eval(x) / aa.eval(x));
        let drift_integral = Arc::new(CachedIntegral::new(drift, ref_point, 1e-12));
        let (di_m, di_s) = (drift_integral.clone(), drift_integral);
        let a_for_m = a.clone();
        let m_density = Density::from_fn(move |x| match di_m.value(x) {
            Ok(bv) => bv.exp() / a_for_m.eval(x),
            Err(_) => f64::NAN,
        });
        let s_density = Density::from_fn(move |x| match di_s.value(x) {
            Ok(bv) => (-bv).exp(),
            Err(_) => f64::NAN,
        });
        // The anchor only shifts m and s by reciprocal constants, so the
        // interior reference point for cutoff ladders stays the default.
        let mut spec = Self::from_measures(ell, m_density, s_density)?;
        spec.coefficients = Some((a, b));
        Ok(spec)
    }

    /// Brownian motion with constant drift `-c` (`a = 1/2`, `b = -c`):
    /// `m'(x) = 2 exp(-2cx)`, `s'(x) = exp(2cx)`.
    pub fn bm_with_drift(c: f64) -> Self {
        let mut spec = DiffusionSpec::from_measures(
            f64::INFINITY,
            Density::from_fn(move |x| 2.0 * (-2.0 * c * x).exp()),
            Density::from_fn(move |x| (2.0 * c * x).exp()),
        )
        .expect("positive densities");
        spec.coefficients = Some((Density::constant(0.5), Density::constant(-c)));
        spec.natural_scale = c == 0.0;
        spec
    }

    /// Standard Brownian motion on `(0, inf)`: `m' = 2`, `s' = 1`.
    pub fn standard_bm() -> Self {
        let mut spec = Self::bm_with_drift(0.0);
        spec.natural_scale = true;
        spec
    }

    /// Ornstein-Uhlenbeck with drift `-rate * x` (`a = 1/2`):
    /// `m'(x) = 2 exp(-rate x^2)`, `s'(x) = exp(rate x^2)`.
    pub fn ou(rate: f64) -> Self {
        let mut spec = DiffusionSpec::from_measures(
            f64::INFINITY,
            Density::from_fn(move |x| 2.0 * (-rate * x * x).exp()),
            Density::from_fn(move |x| (rate * x * x).exp()),
        )
        .expect("positive densities");
        spec.coefficients = Some((
            Density::constant(0.5),
            Density::from_fn(move |x| -rate * x),
        ));
        spec
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn ref_point(&self) -> f64 {
        self.ref_point
    }

    pub fn is_natural_scale(&self) -> bool {
        self.natural_scale
    }

    pub fn m_density(&self, x: f64) -> f64 {
        self.m_density.eval(x)
    }

    pub fn s_density(&self, x: f64) -> f64 {
        self.s_density.eval(x)
    }

    /// Generator coefficients `(a, b)` when available.
    pub fn coefficients(&self) -> Option<(&Density, &Density)> {
        self.coefficients.as_ref().map(|(a, b)| (a, b))
    }

    /// Scale function normalized so `s(0) = 0`.
    pub fn scale(&self, x: f64) -> Result<f64> {
        self.scale_table.value(x)
    }

    /// Speed-measure mass `m((a, b])` by adaptive quadrature.
    pub fn m_mass(&self, a: f64, b: f64) -> Result<f64> {
        quad::integrate(|x| self.m_density.eval(x), a, b, 1e-11)
    }

    /// `m((0, to])` as an extended real, via the cutoff ladder toward 0.
    /// Needed because adaptive quadrature on a cell touching 0 cannot tell
    /// an integrable singularity from a divergent one.
    pub fn m_head(&self, to: f64) -> Result<f64> {
        self.head_ladder(to, |x| self.m_density.eval(x))
    }

    /// `s(to) - s(0+)` as an extended real, via the cutoff ladder toward 0.
    pub fn s_head(&self, to: f64) -> Result<f64> {
        self.head_ladder(to, |x| self.s_density.eval(x))
    }

    fn head_ladder(&self, to: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
        // Near machine precision: the converged value feeds cell masses that
        // downstream identities hold against to rounding.
        let rule = DivergenceRule {
            conv_tol: 5e-14,
            ..DivergenceRule::default()
        };
        let mut partial = 0.0;
        let mut partials = vec![];
        for k in 0..220 {
            let (lo, hi) = octave_bounds(BoundaryEnd::Lower, to, self.ell, k);
            let v = quad::integrate(&f, lo, hi, 1e-12)?;
            partial += v;
            partials.push(partial);
            match rule.judge(&partials) {
                Some(PartialLimit::Converged(v)) => return Ok(v),
                Some(PartialLimit::Divergent(_)) => return Ok(f64::INFINITY),
                _ => {}
            }
        }
        Err(QsdError::QuadratureFailure(format!(
            "head mass on (0, {to}] undecided after 220 octaves (partial {partial:e})"
        )))
    }

    /// `m((from, ell))` as an extended real, via the cutoff ladder.
    pub fn m_tail(&self, from: f64) -> Result<f64> {
        let rule = DivergenceRule::default();
        let mut partial = 0.0;
        let mut partials = vec![];
        for k in 0..200 {
            let (lo, hi) = octave_bounds(BoundaryEnd::Upper, from, self.ell, k);
            if lo >= hi {
                break;
            }
            let dm = quad::integrate(|x| self.m_density.eval(x), lo, hi, 1e-11)?;
            partial += dm;
            partials.push(partial);
            match rule.judge(&partials) {
                Some(PartialLimit::Converged(v)) => return Ok(v),
                Some(PartialLimit::Divergent(_)) => return Ok(f64::INFINITY),
                _ => {}
            }
        }
        if self.ell.is_finite() {
            return Ok(partial);
        }
        Err(QsdError::QuadratureFailure(
            "m tail ladder undecided within budget".into(),
        ))
    }

    /// Classify one boundary via the cutoff ladder for `I` and `J`.
    pub fn classify_boundary(
        &self,
        end: BoundaryEnd,
        params: &ClassifyParams,
    ) -> Result<BoundaryClass> {
        let c = params.c.unwrap_or(self.ref_point);
        let mut state = LadderState::default();
        let mut i_partials: Vec<f64> = Vec::new();
        let mut j_partials: Vec<f64> = Vec::new();
        let mut i_verdict: Option<PartialLimit> = None;
        let mut j_verdict: Option<PartialLimit> = None;
        for k in 0..params.max_octaves {
            let (lo, hi) = octave_bounds(end, c, self.ell, k);
            if lo >= hi {
                break;
            }
            self.accumulate_octave(end, lo, hi, params, &mut state)?;
            let (i_k, j_k) = match end {
                BoundaryEnd::Lower => (state.p, state.dm_cum * state.ds_cum - state.p),
                BoundaryEnd::Upper => (
                    state.dm_cum * state.ds_cum - state.pp,
                    state.dm_cum * state.ds_cum - state.p,
                ),
            };
            i_partials.push(i_k);
            j_partials.push(j_k);
            if i_verdict.is_none() {
                i_verdict = params.rule.judge(&i_partials);
            }
            if j_verdict.is_none() {
                j_verdict = params.rule.judge(&j_partials);
            }
            if i_verdict.is_some() && j_verdict.is_some() {
                break;
            }
        }
        match (i_verdict, j_verdict) {
            (Some(iv), Some(jv)) => {
                let kind = match (iv.is_finite(), jv.is_finite()) {
                    (true, true) => BoundaryKind::Regular,
                    (false, true) => BoundaryKind::Exit,
                    (true, false) => BoundaryKind::Entrance,
                    (false, false) => BoundaryKind::Natural,
                };
                Ok(BoundaryClass {
                    kind,
                    i_value: iv.value(),
                    j_value: jv.value(),
                })
            }
            _ => Err(QsdError::ClassificationInconclusive {
                i_partial: *i_partials.last().unwrap_or(&f64::NAN),
                j_partial: *j_partials.last().unwrap_or(&f64::NAN),
            }),
        }
    }

    fn accumulate_octave(
        &self,
        end: BoundaryEnd,
        lo: f64,
        hi: f64,
        params: &ClassifyParams,
        state: &mut LadderState,
    ) -> Result<()> {
        let n = params.sub_per_octave.max(1);
        for j in 0..n {
            // Cells ordered moving away from c toward the boundary.
            let (a, b) = match end {
                BoundaryEnd::Lower => {
                    let t1 = hi - (hi - lo) * j as f64 / n as f64;
                    let t0 = hi - (hi - lo) * (j + 1) as f64 / n as f64;
                    (t0, t1)
                }
                BoundaryEnd::Upper => {
                    let t0 = lo + (hi - lo) * j as f64 / n as f64;
                    let t1 = lo + (hi - lo) * (j + 1) as f64 / n as f64;
                    (t0, t1)
                }
            };
            let dm = quad::integrate(|x| self.m_density.eval(x), a, b, params.cell_tol)?;
            let ds = quad::integrate(|x| self.s_density.eval(x), a, b, params.cell_tol)?;
            state.p += dm * (state.ds_cum + 0.5 * ds);
            state.pp += ds * (state.dm_cum + 0.5 * dm);
            state.dm_cum += dm;
            state.ds_cum += ds;
            if !state.dm_cum.is_finite() && !state.ds_cum.is_finite() {
                // Both cumulants overflowed; partials are decided already.
                return Ok(());
            }
        }
        Ok(())
    }

    /// The infinite-QSD criterion (right boundary natural,
    /// `m(c, ell) < inf`, `limsup s(x) m(x, ell) < inf`).
    pub fn qsd_count(&self, params: &ClassifyParams) -> Result<QsdVerdict> {
        let upper = self.classify_boundary(BoundaryEnd::Upper, params)?;
        match upper.kind {
            BoundaryKind::Regular | BoundaryKind::Entrance => {
                return Ok(QsdVerdict::UniqueQsd { upper });
            }
            BoundaryKind::Exit => {
                return Err(QsdError::UnsupportedSpec(
                    "right boundary classifies as exit, contradicting sure absorption at 0".into(),
                ));
            }
            BoundaryKind::Natural => {}
        }
        let c = params.c.unwrap_or(self.ref_point);
        // Cutoff ladder for m(c, ell) keeping per-octave masses for suffix sums.
        let mut octave_dm: Vec<f64> = Vec::new();
        let mut partial = 0.0;
        let mut partials: Vec<f64> = Vec::new();
        let mut verdict = None;
        for k in 0..params.max_octaves {
            let (lo, hi) = octave_bounds(BoundaryEnd::Upper, c, self.ell, k);
            if lo >= hi {
                break;
            }
            let dm = quad::integrate(|x| self.m_density.eval(x), lo, hi, params.cell_tol)?;
            octave_dm.push(dm);
            partial += dm;
            partials.push(partial);
            verdict = params.rule.judge(&partials);
            if verdict.is_some() {
                break;
            }
        }
        match verdict {
            Some(PartialLimit::Divergent(_)) => {
                return Ok(QsdVerdict::No {
                    reason: "m(c, ell) diverges".into(),
                })
            }
            Some(PartialLimit::Converged(_)) => {}
            _ => {
                return Ok(QsdVerdict::Inconclusive {
                    detail: "m(c, ell) ladder undecided within budget".into(),
                })
            }
        }
        let m_tail = partial;
        // Products s(x_k) * m(x_k, ell) on the cutoff ladder; suffix sums
        // avoid catastrophic cancellation against the total mass.
        let s_c = self.scale(c)?;
        let mut products: Vec<f64> = Vec::new();
        let mut ds_cum = 0.0;
        let mut suffix: Vec<f64> = vec![0.0; octave_dm.len() + 1];
        for k in (0..octave_dm.len()).rev() {
            suffix[k] = suffix[k + 1] + octave_dm[k];
        }
        for (k, _) in octave_dm.iter().enumerate() {
            let (lo, hi) = octave_bounds(BoundaryEnd::Upper, c, self.ell, k);
            let ds = quad::integrate(|x| self.s_density.eval(x), lo, hi, params.cell_tol)?;
            ds_cum += ds;
            let s_x = s_c + ds_cum;
            let tail = suffix[k + 1];
            let prod = s_x * tail;
            if prod.is_nan() {
                continue; // overflowed scale against underflowed tail
            }
            if prod.is_infinite() {
                return Ok(QsdVerdict::No {
                    reason: format!("s(x) m(x, ell) unbounded near octave {k}"),
                });
            }
            products.push(prod);
        }
        if products.len() < 4 {
            return Ok(QsdVerdict::Inconclusive {
                detail: "too few usable cutoffs for the limsup estimate".into(),
            });
        }
        if let Some(PartialLimit::Divergent(last)) = params.rule.judge(&products) {
            return Ok(QsdVerdict::No {
                reason: format!("s(x) m(x, ell) grows without bound (last {last:e})"),
            });
        }
        let tail_window = &products[products.len().saturating_sub(5)..];
        let limsup = tail_window.iter().cloned().fold(f64::MIN, f64::max);
        Ok(QsdVerdict::InfinitelyMany { limsup, m_tail })
    }

    /// Reject specs whose boundary at 0 is not regular or exit.
    pub fn validate(&self, params: &ClassifyParams) -> Result<BoundaryClass> {
        if !self.scale(self.ref_point)?.is_finite() {
            return Err(QsdError::UnsupportedSpec(
                "s(0+) = -infinity: the boundary 0 is not reachable".into(),
            ));
        }
        let lower = self.classify_boundary(BoundaryEnd::Lower, params)?;
        match lower.kind {
            BoundaryKind::Regular | BoundaryKind::Exit => Ok(lower),
            other => Err(QsdError::UnsupportedSpec(format!(
                "boundary 0 classifies as {other}; it must be regular or exit"
            ))),
        }
    }

    /// Push the diffusion to natural scale: the image of `X` under `s` is a
    /// `d/dm d/dy`-diffusion on `(0, s(ell))` with
    /// `m'_new(y) = m'(s^-1(y)) / s'(s^-1(y))`.
    pub fn natural_scale_transform(&self) -> Result<DiffusionSpec> {
        if !self.scale(self.ref_point)?.is_finite() {
            return Err(QsdError::UnsupportedSpec(
                "s(0+) = -infinity: natural-scale transform unavailable".into(),
            ));
        }
        let ell_new = self.scale_at_ell()?;
        let this = self.clone();
        let m_new = Density::from_fn(move |y| {
            match this.inverse_scale(y) {
                Ok(x) => this.m_density.eval(x) / this.s_density.eval(x),
                Err(_) => f64::NAN,
            }
        });
        let mut spec = DiffusionSpec::from_speed_measure(ell_new, m_new)?;
        // Natural-scale SDE: dY = sqrt(2 / m'(Y)) dW.
        let md = spec.m_density.clone();
        spec.coefficients = Some((
            Density::from_fn(move |y| 1.0 / md.eval(y)),
            Density::constant(0.0),
        ));
        Ok(spec)
    }

    /// `s(ell)` as an extended real.
    pub fn scale_at_ell(&self) -> Result<f64> {
        let c = self.ref_point;
        let rule = DivergenceRule::default();
        let mut partial = self.scale(c)?;
        let mut partials = vec![];
        for k in 0..200 {
            let (lo, hi) = octave_bounds(BoundaryEnd::Upper, c, self.ell, k);
            if lo >= hi {
                break;
            }
            let ds = quad::integrate(|x| self.s_density.eval(x), lo, hi, 1e-11)?;
            partial += ds;
            partials.push(partial);
            match rule.judge(&partials) {
                Some(PartialLimit::Converged(v)) => return Ok(v),
                Some(PartialLimit::Divergent(_)) => return Ok(f64::INFINITY),
                _ => {}
            }
        }
        if self.ell.is_finite() {
            // Finite interval: the ladder exhausts (c, ell); accept the sum.
            return Ok(partial);
        }
        Err(QsdError::QuadratureFailure(
            "s(ell) ladder undecided within budget".into(),
        ))
    }

    /// Invert the scale function by bisection.
    pub fn inverse_scale(&self, y: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        let mut hi = self.ref_point.max(1.0);
        let cap = if self.ell.is_finite() { self.ell } else { f64::MAX / 4.0 };
        let mut guard = 0;
        while self.scale(hi)? < y {
            hi = (hi * 2.0).min(cap * (1.0 - 1e-12));
            guard += 1;
            if guard > 1100 {
                return Err(QsdError::QuadratureFailure(format!(
                    "inverse scale: no x with s(x) >= {y}"
                )));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.scale(mid)? < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[derive(Default)]
struct LadderState {
    dm_cum: f64,
    ds_cum: f64,
    /// sum of dm_i * (ds between cell midpoint and c)
    p: f64,
    /// sum of ds_i * (dm between cell midpoint and c)
    pp: f64,
}

fn default_ref(ell: f64) -> f64 {
    if ell.is_finite() {
        ell / 2.0
    } else {
        1.0
    }
}

fn probe_hi(ell: f64, r: f64) -> f64 {
    if ell.is_finite() {
        0.5 * (r + ell)
    } else {
        2.0 * r
    }
}

fn octave_bounds(end: BoundaryEnd, c: f64, ell: f64, k: usize) -> (f64, f64) {
    match end {
        BoundaryEnd::Lower => {
            let hi = c * (0.5f64).powi(k as i32);
            (hi * 0.5, hi)
        }
        BoundaryEnd::Upper => {
            if ell.is_finite() {
                let gap = ell - c;
                let lo = ell - gap * (0.5f64).powi(k as i32);
                let hi = ell - gap * (0.5f64).powi(k as i32 + 1);
                (lo, hi)
            } else {
                (c * (2.0f64).powi(k as i32), c * (2.0f64).powi(k as i32 + 1))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn coefficients_driftless() {
        // a = 1/2, b = 0 -> m' = 2, s' = 1.
        let spec = DiffusionSpec::from_coefficients(
            f64::INFINITY,
            Density::constant(0.5),
            Density::constant(0.0),
            1.0,
        )
        .unwrap();
        assert!(close(spec.m_density(0.7), 2.0, 1e-12));
        assert!(close(spec.s_density(0.7), 1.0, 1e-12));
    }

    #[test]
    fn coefficients_bm_with_drift() {
        // a = 1/2, b = -1, c = 0 -> m' = 2 e^{-2x}, s' = e^{2x}.
        let spec = DiffusionSpec::from_coefficients(
            f64::INFINITY,
            Density::constant(0.5),
            Density::constant(-1.0),
            1e-12,
        )
        .unwrap();
        for &x in &[0.25, 1.0, 2.5] {
            assert!(close(spec.m_density(x), 2.0 * (-2.0 * x).exp(), 1e-8));
            assert!(close(spec.s_density(x), (2.0 * x).exp(), 1e-8));
            // m' s' a = 1 pointwise.
            assert!(close(spec.m_density(x) * spec.s_density(x) * 0.5, 1.0, 1e-8));
        }
    }

    #[test]
    fn coefficients_ou() {
        // a = 1/2, b = -x, c = 0 -> m' = 2 e^{-x^2}, s' = e^{x^2}.
        let spec = DiffusionSpec::from_coefficients(
            f64::INFINITY,
            Density::constant(0.5),
            Density::from_fn(|x| -x),
            1e-12,
        )
        .unwrap();
        for &x in &[0.5, 1.0, 2.0] {
            assert!(close(spec.m_density(x), 2.0 * (-x * x).exp(), 1e-8));
            assert!(close(spec.s_density(x), (x * x).exp(), 1e-8));
        }
    }

    #[test]
    fn rejects_nonpositive_a() {
        let r = DiffusionSpec::from_coefficients(
            f64::INFINITY,
            Density::constant(-1.0),
            Density::constant(0.0),
            1.0,
        );
        assert!(matches!(r, Err(QsdError::InvalidCoefficient(_))));
    }

    #[test]
    fn natural_scale_of_bm_with_drift() {
        // y = (e^{2x} - 1)/2, m'_new(y) = 2 (1 + 2y)^{-2}.
        let spec = DiffusionSpec::bm_with_drift(1.0);
        let nat = spec.natural_scale_transform().unwrap();
        assert!(nat.ell().is_infinite());
        for &y in &[0.5f64, 1.0, 2.0] {
            let want = 2.0 / (1.0 + 2.0 * y).powi(2);
            assert!(
                close(nat.m_density(y), want, 1e-6),
                "m'({y}) = {} want {want}",
                nat.m_density(y)
            );
            assert!(close(nat.s_density(y), 1.0, 1e-12));
        }
        // Composed evaluation: m'(s^-1(y)) / s'(s^-1(y)).
        for &y in &[0.5f64, 1.0, 2.0] {
            let x = spec.inverse_scale(y).unwrap();
            let composed = spec.m_density(x) / spec.s_density(x);
            assert!(close(nat.m_density(y), composed, 1e-8));
        }
    }

    #[test]
    fn natural_scale_is_identity_on_natural_spec() {
        let spec = DiffusionSpec::standard_bm();
        let nat = spec.natural_scale_transform().unwrap();
        for &x in &[0.3, 1.0, 4.0] {
            assert!(close(nat.m_density(x), 2.0, 1e-8));
            assert!(close(nat.s_density(x), 1.0, 1e-12));
        }
    }

    #[test]
    fn classify_standard_bm_lower_regular() {
        let spec = DiffusionSpec::standard_bm();
        let class = spec
            .classify_boundary(BoundaryEnd::Lower, &ClassifyParams::default())
            .unwrap();
        assert_eq!(class.kind, BoundaryKind::Regular);
        // I(0) = J(0) = c^2 = 1 at c = 1 (hand quadrature).
        assert!(close(class.i_value, 1.0, 1e-3), "I = {}", class.i_value);
        assert!(close(class.j_value, 1.0, 1e-3), "J = {}", class.j_value);
    }

    #[test]
    fn classify_bm_drift_upper_natural() {
        let spec = DiffusionSpec::bm_with_drift(1.0);
        let class = spec
            .classify_boundary(BoundaryEnd::Upper, &ClassifyParams::default())
            .unwrap();
        assert_eq!(class.kind, BoundaryKind::Natural);
        assert!(class.i_value.is_infinite());
        assert!(class.j_value.is_infinite());
    }

    #[test]
    fn classify_invariant_under_natural_scale() {
        let spec = DiffusionSpec::bm_with_drift(1.0);
        let nat = spec.natural_scale_transform().unwrap();
        let p = ClassifyParams::default();
        for end in [BoundaryEnd::Lower, BoundaryEnd::Upper] {
            let k0 = spec.classify_boundary(end, &p).unwrap().kind;
            let k1 = nat.classify_boundary(end, &p).unwrap().kind;
            assert_eq!(k0, k1, "classification changed at {end:?}");
        }
    }

    // Brute-force oracle: iterated integral with explicit cutoff quadrature.
    fn brute_iterated_lower(
        outer: impl Fn(f64) -> f64,
        inner: impl Fn(f64) -> f64,
        c: f64,
        eps: f64,
    ) -> f64 {
        // int_eps^c outer(x) (int_eps^x inner) dx on a fine grid.
        let n = 4000;
        let mut acc = 0.0;
        let mut inner_acc = 0.0;
        let mut prev = eps;
        for i in 1..=n {
            let x = eps + (c - eps) * i as f64 / n as f64;
            let mid = 0.5 * (prev + x);
            inner_acc += inner(mid) * (x - prev);
            acc += outer(mid) * inner_acc * (x - prev);
            prev = x;
        }
        acc
    }

    #[test]
    fn classify_power_speed_density_is_natural_at_zero() {
        // m'(x) = x^{-3}, s' = 1 near 0: the brute-force oracle shows both
        // I(0) and J(0) blow up, so the boundary is natural.
        let i_small = brute_iterated_lower(|_| 1.0, |y| y.powi(-3), 1.0, 1e-3);
        let i_smaller = brute_iterated_lower(|_| 1.0, |y| y.powi(-3), 1.0, 1e-4);
        assert!(i_smaller > 50.0 * i_small.min(i_smaller)); // grows fast
        let j_small = brute_iterated_lower(|y| y.powi(-3), |_| 1.0, 1.0, 1e-3);
        let j_smaller = brute_iterated_lower(|y| y.powi(-3), |_| 1.0, 1.0, 1e-4);
        assert!(j_smaller > 5.0 * j_small);

        let spec = DiffusionSpec::from_measures(
            f64::INFINITY,
            Density::from_fn(|x| x.powi(-3)),
            Density::constant(1.0),
        )
        .unwrap();
        let class = spec
            .classify_boundary(BoundaryEnd::Lower, &ClassifyParams::default())
            .unwrap();
        assert_eq!(class.kind, BoundaryKind::Natural);
        // And such a spec is rejected at load time.
        assert!(spec.validate(&ClassifyParams::default()).is_err());
    }

    #[test]
    fn classify_exit_at_zero() {
        // m'(x) = x^{-3/2}: I(0) = inf, J(0) = int x^{-1/2} < inf -> exit.
        let spec = DiffusionSpec::from_measures(
            f64::INFINITY,
            Density::from_fn(|x| x.powf(-1.5)),
            Density::constant(1.0),
        )
        .unwrap();
        let class = spec
            .classify_boundary(BoundaryEnd::Lower, &ClassifyParams::default())
            .unwrap();
        assert_eq!(class.kind, BoundaryKind::Exit);
        assert!(spec.validate(&ClassifyParams::default()).is_ok());
    }

    #[test]
    fn qsd_count_bm_with_drift_natural_scale_form() {
        // m' = 2 (1 + 2y)^{-2}: s(y) = y, m(y, inf) = 1/(1+2y),
        // s(y) m(y, inf) -> 1/2.
        let spec = DiffusionSpec::from_speed_measure(
            f64::INFINITY,
            Density::from_fn(|y| 2.0 / (1.0 + 2.0 * y).powi(2)),
        )
        .unwrap();
        match spec.qsd_count(&ClassifyParams::default()).unwrap() {
            QsdVerdict::InfinitelyMany { limsup, .. } => {
                assert!((limsup - 0.5).abs() < 0.05, "limsup = {limsup}");
            }
            other => panic!("expected infinitely many, got {other:?}"),
        }
    }

    #[test]
    fn qsd_count_bm_with_drift_original_coordinates() {
        let spec = DiffusionSpec::bm_with_drift(1.0);
        match spec.qsd_count(&ClassifyParams::default()).unwrap() {
            QsdVerdict::InfinitelyMany { limsup, .. } => {
                assert!((limsup - 0.5).abs() < 0.05, "limsup = {limsup}");
            }
            other => panic!("expected infinitely many, got {other:?}"),
        }
    }

    #[test]
    fn qsd_count_standard_bm_is_no() {
        let spec = DiffusionSpec::standard_bm();
        match spec.qsd_count(&ClassifyParams::default()).unwrap() {
            QsdVerdict::No { .. } => {}
            other => panic!("expected no, got {other:?}"),
        }
    }

    #[test]
    fn qsd_count_ou_is_yes() {
        let spec = DiffusionSpec::ou(1.0);
        match spec.qsd_count(&ClassifyParams::default()).unwrap() {
            QsdVerdict::InfinitelyMany { .. } => {}
            other => panic!("expected infinitely many, got {other:?}"),
        }
    }
}
