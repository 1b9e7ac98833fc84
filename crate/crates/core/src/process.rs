//! Process specifications, structural checks, and scalar building blocks.
//!
//! Stationary coordinates use the correlation `r(h) = exp(−a|h|^κ)`.
//! Locally stationary coordinates are time changes of that model,
//! `r(s, t) = exp(−|A(t) − A(s)|^κ)` with `A(t) = ∫₀ᵗ a(x)^{1/κ} dx`, which
//! gives `r(t, t+h) = 1 − a(t)|h|^κ + o(|h|^κ)` uniformly in `t`.
//! Non-stationary coordinates are `σ(t)·Y(t)` with `Y` stationary of index
//! `α` and curvature `a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::Profile;

pub use crate::special::gaussian_tail;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoordinateSpec {
    Stationary {
        a: f64,
        kappa: f64,
    },
    LocallyStationary {
        a_profile: Profile,
        kappa: f64,
    },
    NonStationary(NonStationaryCoord),
    /// Standard fractional Brownian motion with variance `t^κ`.
    Fbm {
        kappa: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonStationaryCoord {
    pub sigma_profile: Profile,
    pub alpha: f64,
    pub a: f64,
    pub beta: f64,
    pub b_lower: f64,
    pub b_upper: f64,
    pub holder_g: f64,
    pub holder_gamma: f64,
    pub holder_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorProcessSpec {
    pub coords: Vec<CoordinateSpec>,
    #[serde(rename = "horizon")]
    pub horizon_t: f64,
}

/// Thresholds `f_i(u) = c_i·u + offset_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFamily {
    pub limits_c: Vec<f64>,
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Left,
    Interior,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfileReport {
    pub g_min: f64,
    pub t0: f64,
    pub boundary_tag: BoundaryTag,
    pub theta_lower: f64,
    pub theta_upper: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn into_result(self) -> Result<Vec<String>> {
        if self.errors.is_empty() {
            Ok(self.warnings)
        } else {
            Err(Error::Validation(self.errors))
        }
    }
}

fn exp_corr(a: f64, kappa: f64, lag: f64) -> f64 {
    (-a * lag.abs().powf(kappa)).exp()
}

impl CoordinateSpec {
    pub fn stationary(a: f64, kappa: f64) -> Self {
        CoordinateSpec::Stationary { a, kappa }
    }

    /// Local index: `κ` for (locally) stationary and fBm, `α` otherwise.
    pub fn index(&self) -> f64 {
        match self {
            CoordinateSpec::Stationary { kappa, .. }
            | CoordinateSpec::LocallyStationary { kappa, .. }
            | CoordinateSpec::Fbm { kappa } => *kappa,
            CoordinateSpec::NonStationary(ns) => ns.alpha,
        }
    }

    pub fn std_dev(&self, t: f64) -> f64 {
        match self {
            CoordinateSpec::Stationary { .. } | CoordinateSpec::LocallyStationary { .. } => 1.0,
            CoordinateSpec::NonStationary(ns) => ns.sigma_profile.eval(t),
            CoordinateSpec::Fbm { kappa } => t.abs().powf(0.5 * kappa),
        }
    }

    /// Time change `A(t) − A(s)` of a locally stationary coordinate.
    pub(crate) fn clock_increment(a_profile: &Profile, kappa: f64, s: f64, t: f64) -> f64 {
        a_profile.integrate_power(1.0 / kappa, s, t)
    }

    /// Correlation with no horizon check.
    pub(crate) fn correlation_unchecked(&self, s: f64, t: f64) -> f64 {
        if s == t {
            return 1.0;
        }
        match self {
            CoordinateSpec::Stationary { a, kappa } => exp_corr(*a, *kappa, t - s),
            CoordinateSpec::LocallyStationary { a_profile, kappa } => {
                let clock = Self::clock_increment(a_profile, *kappa, s.min(t), s.max(t));
                exp_corr(1.0, *kappa, clock)
            }
            CoordinateSpec::NonStationary(ns) => exp_corr(ns.a, ns.alpha, t - s),
            CoordinateSpec::Fbm { .. } => {
                let (ss, st) = (self.std_dev(s), self.std_dev(t));
                if ss == 0.0 || st == 0.0 {
                    0.0
                } else {
                    self.covariance_unchecked(s, t) / (ss * st)
                }
            }
        }
    }

    pub(crate) fn covariance_unchecked(&self, s: f64, t: f64) -> f64 {
        match self {
            CoordinateSpec::Fbm { kappa } => {
                0.5 * (s.abs().powf(*kappa) + t.abs().powf(*kappa) - (t - s).abs().powf(*kappa))
            }
            _ => self.std_dev(s) * self.std_dev(t) * self.correlation_unchecked(s, t),
        }
    }

    fn check(&self, horizon: f64, errors: &mut Vec<String>, at: usize) {
        let mut bad = |msg: String| errors.push(format!("coords[{at}]: {msg}"));
        let index_ok = |k: f64| k > 0.0 && k <= 2.0;
        match self {
            CoordinateSpec::Stationary { a, kappa } => {
                if !index_ok(*kappa) {
                    bad(format!("kappa = {kappa} not in (0,2]"));
                }
                if !(*a > 0.0 && a.is_finite()) {
                    bad(format!("a = {a} must be positive"));
                }
            }
            CoordinateSpec::LocallyStationary { a_profile, kappa } => {
                if !index_ok(*kappa) {
                    bad(format!("kappa = {kappa} not in (0,2]"));
                }
                let min = a_profile.min_on(horizon);
                if !(min > 0.0) {
                    bad(format!("a_profile must be positive on [0,T] (min {min})"));
                }
            }
            CoordinateSpec::NonStationary(ns) => {
                if !index_ok(ns.alpha) {
                    bad(format!("alpha = {} not in (0,2]", ns.alpha));
                }
                if !(ns.a > 0.0) {
                    bad(format!("a = {} must be positive", ns.a));
                }
                if !(ns.beta > 0.0) {
                    bad(format!("beta = {} must be positive", ns.beta));
                }
                if !(ns.holder_g > 0.0) {
                    bad(format!("holder_g = {} must be positive", ns.holder_g));
                }
                if !index_ok(ns.holder_gamma) {
                    bad(format!("holder_gamma = {} not in (0,2]", ns.holder_gamma));
                }
                if !(ns.holder_rho > 0.0) {
                    bad(format!("holder_rho = {} must be positive", ns.holder_rho));
                }
                let min = ns.sigma_profile.min_on(horizon);
                if !(min > 0.0) {
                    bad(format!("sigma_profile must be positive on [0,T] (min {min})"));
                }
            }
            CoordinateSpec::Fbm { kappa } => {
                if !index_ok(*kappa) {
                    bad(format!("kappa = {kappa} not in (0,2]"));
                }
            }
        }
    }
}

impl VectorProcessSpec {
    pub fn new(coords: Vec<CoordinateSpec>, horizon_t: f64) -> Self {
        Self { coords, horizon_t }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    fn non_stationary(&self) -> impl Iterator<Item = &NonStationaryCoord> {
        self.coords.iter().filter_map(|c| match c {
            CoordinateSpec::NonStationary(ns) => Some(ns),
            _ => None,
        })
    }

    pub fn has_non_stationary(&self) -> bool {
        self.non_stationary().next().is_some()
    }

    /// Common `β` of the non-stationary coordinates, if any.
    pub fn beta(&self) -> Option<f64> {
        self.non_stationary().map(|ns| ns.beta).next()
    }
}

/// Generalized variance `g(t) = Σ 1/σ_i²(t)`.
pub fn generalized_variance(spec: &VectorProcessSpec, t: f64) -> f64 {
    spec.coords.iter().map(|c| 1.0 / c.std_dev(t).powi(2)).sum()
}

impl ThresholdFamily {
    pub fn new(limits_c: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        if limits_c.len() != offsets.len() {
            return Err(Error::domain("threshold limits and offsets differ in length"));
        }
        if limits_c.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::domain("threshold limits must be positive"));
        }
        if offsets.iter().any(|o| !o.is_finite()) {
            return Err(Error::domain("threshold offsets must be finite"));
        }
        Ok(Self { limits_c, offsets })
    }

    /// `f(u) = u·1`.
    pub fn uniform(n: usize) -> Self {
        Self {
            limits_c: vec![1.0; n],
            offsets: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.limits_c.len()
    }

    pub fn realize(&self, u: f64) -> Vec<f64> {
        self.limits_c
            .iter()
            .zip(&self.offsets)
            .map(|(c, o)| c * u + o)
            .collect()
    }
}

/// Checks the structural assumptions on a specification.
pub fn validate_spec(spec: &VectorProcessSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    if spec.coords.is_empty() {
        report.errors.push("at least one coordinate is required".into());
    }
    if !(spec.horizon_t > 0.0 && spec.horizon_t.is_finite()) {
        report
            .errors
            .push(format!("horizon = {} must be positive", spec.horizon_t));
        return report;
    }
    for (k, c) in spec.coords.iter().enumerate() {
        c.check(spec.horizon_t, &mut report.errors, k);
    }
    if !report.errors.is_empty() || !spec.has_non_stationary() {
        return report;
    }
    let betas: Vec<f64> = spec.non_stationary().map(|ns| ns.beta).collect();
    if betas.iter().any(|b| (b - betas[0]).abs() > 1e-12) {
        report
            .errors
            .push(format!("non-stationary coordinates must share beta (got {betas:?})"));
        return report;
    }
    let step = spec.horizon_t / 1000.0;
    match variance_profile(spec, step) {
        Ok(profile) => {
            let needs_lower = profile.boundary_tag != BoundaryTag::Left;
            let needs_upper = profile.boundary_tag != BoundaryTag::Right;
            if profile.theta_lower <= 0.0 {
                report.warnings.push(format!(
                    "theta_lower = {} is not positive; the non-stationary asymptotics require it{}",
                    profile.theta_lower,
                    if needs_lower { "" } else { " (unused at t0 = 0)" }
                ));
            }
            if profile.theta_upper <= 0.0 {
                report.warnings.push(format!(
                    "theta_upper = {} is not positive; the non-stationary asymptotics require it{}",
                    profile.theta_upper,
                    if needs_upper { "" } else { " (unused at t0 = T)" }
                ));
            }
            if let Some(beta) = spec.beta() {
                for (side, rel) in theta_consistency(spec, &profile, beta) {
                    if rel > 0.05 {
                        report.warnings.push(format!(
                            "b coefficients disagree with the sigma profile on the {side} side of t0 (relative gap {rel:.3})"
                        ));
                    }
                }
            }
        }
        Err(e) => report.warnings.push(e.to_string()),
    }
    report
}

/// Relative gap between `2θ|t|^β` and `g(t0 ± t) − g(t0)` at the finest
/// rung of the ladder `t = 2^{-k}`, per available side.
pub fn theta_consistency(
    spec: &VectorProcessSpec,
    profile: &VarianceProfileReport,
    beta: f64,
) -> Vec<(&'static str, f64)> {
    let g0 = generalized_variance(spec, profile.t0);
    let t_max = spec.horizon_t;
    let mut out = Vec::new();
    let mut side = |name: &'static str, sign: f64, theta: f64| {
        let h = (2.0f64).powi(-14) * t_max;
        let t = profile.t0 + sign * h;
        if !(0.0..=t_max).contains(&t) || theta <= 0.0 {
            return;
        }
        let slope = (generalized_variance(spec, t) - g0) / (2.0 * h.powf(beta));
        out.push((name, (slope / theta - 1.0).abs()));
    };
    if profile.boundary_tag != BoundaryTag::Left {
        side("left", -1.0, profile.theta_lower);
    }
    if profile.boundary_tag != BoundaryTag::Right {
        side("right", 1.0, profile.theta_upper);
    }
    out
}

fn golden_section(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    // endpoints of the bracket may beat the interior estimate
    [lo, mid, hi]
        .into_iter()
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(mid)
}

/// Locates the minimizer `t0` of the generalized variance and the
/// one-sided curvature coefficients there.
pub fn variance_profile(spec: &VectorProcessSpec, scan_step: f64) -> Result<VarianceProfileReport> {
    let horizon = spec.horizon_t;
    if !spec.has_non_stationary() {
        return Err(Error::Precondition(
            "variance profile needs non-stationary coordinates".into(),
        ));
    }
    if !(scan_step > 0.0 && scan_step <= horizon / 10.0) {
        return Err(Error::Precondition(format!(
            "scan step {scan_step} must lie in (0, T/10]"
        )));
    }
    let g = |t: f64| generalized_variance(spec, t);
    let count = (horizon / scan_step).ceil() as usize;
    let nodes: Vec<f64> = (0..=count).map(|k| (k as f64 * scan_step).min(horizon)).collect();
    let values: Vec<f64> = nodes.iter().map(|&t| g(t)).collect();
    let last = nodes.len() - 1;
    let mut minima: Vec<(f64, f64)> = Vec::new();
    for k in 0..=last {
        let left_ok = k == 0 || values[k] <= values[k - 1];
        let right_ok = k == last || values[k] <= values[k + 1];
        if left_ok && right_ok {
            let lo = nodes[k.saturating_sub(1)];
            let hi = nodes[(k + 1).min(last)];
            let t = golden_section(&g, lo, hi, 1e-10);
            let v = g(t);
            if let Some(prev) = minima.iter_mut().find(|(pt, _)| (pt - t).abs() < 1e-7) {
                if v < prev.1 {
                    *prev = (t, v);
                }
            } else {
                minima.push((t, v));
            }
        }
    }
    minima.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (mut t0, g_min) = minima[0];
    if let Some(&(t1, g1)) = minima.get(1) {
        if g1 - g_min <= 1e-8 * (1.0 + g_min.abs()) {
            return Err(Error::Ambiguity(format!(
                "g({t0}) = {g_min} and g({t1}) = {g1} are indistinguishable"
            )));
        }
    }
    let edge = 1e-8 * horizon;
    let boundary_tag = if t0 <= edge {
        t0 = 0.0;
        BoundaryTag::Left
    } else if t0 >= horizon - edge {
        t0 = horizon;
        BoundaryTag::Right
    } else {
        BoundaryTag::Interior
    };
    let (mut theta_lower, mut theta_upper) = (0.0, 0.0);
    for ns in spec.non_stationary() {
        let var = ns.sigma_profile.eval(t0).powi(2);
        theta_lower += ns.b_lower / var;
        theta_upper += ns.b_upper / var;
    }
    Ok(VarianceProfileReport {
        g_min: g(t0),
        t0,
        boundary_tag,
        theta_lower,
        theta_upper,
    })
}

/// Correlation of coordinate `coord` between times `s` and `t` in `[0, T]`.
pub fn eval_correlation(coord: &CoordinateSpec, horizon: f64, s: f64, t: f64) -> Result<f64> {
    let inside = |x: f64| x.is_finite() && (-1e-12..=horizon + 1e-12).contains(&x);
    if !inside(s) || !inside(t) {
        return Err(Error::domain(format!(
            "correlation arguments ({s}, {t}) outside [0, {horizon}]"
        )));
    }
    Ok(coord.correlation_unchecked(s, t))
}
