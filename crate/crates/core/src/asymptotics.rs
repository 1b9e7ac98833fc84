//! Exact first-order asymptotics of conjunction probabilities.
//!
//! Every approximation has the form `K · u^p · Π Ψ(x_i)`; constants come from
//! a [`ConstantProvider`] so formula evaluation stays separate from the cost
//! of estimating them.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::constants::{
    closed_forms_n1, estimate_pickands, estimate_piterbarg, estimate_window_constant, ConstantEstimate, DriftSpec,
    EstimatorTag, PiterbargVariant, StepRule,
};
use crate::error::{Error, Result};
use crate::process::{BoundaryTag, CoordinateSpec, ThresholdFamily, VarianceProfileReport, VectorProcessSpec};
use crate::rng::RngStream;
use crate::special::{binomial, gamma, tail};

/// Relative tolerance for deciding `α = β`.
pub const INDEX_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    LocallyStationary,
    NsCaseI,
    NsCaseIi,
    NsCaseIii,
    LocalWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticApproximation {
    pub regime: Regime,
    pub leading_constant: f64,
    /// Standard error carried over from an estimated constant.
    pub constant_se: f64,
    pub u_power: f64,
    pub tail_args: Vec<f64>,
    pub value_at_u: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl AsymptoticApproximation {
    pub fn assemble(
        regime: Regime,
        leading_constant: f64,
        constant_se: f64,
        u: f64,
        u_power: f64,
        tail_args: Vec<f64>,
    ) -> Self {
        let tails: f64 = tail_args.iter().map(|&x| tail(x)).product();
        let value_at_u = leading_constant * u.powf(u_power) * tails;
        Self {
            regime,
            leading_constant,
            constant_se,
            u_power,
            tail_args,
            value_at_u,
            notes: Vec::new(),
        }
    }
}

/// Source of Pickands, Piterbarg, and window constants for `C·B_κ`.
pub trait ConstantProvider: Sync {
    fn pickands(&self, c: &[f64], kappa: f64) -> Result<ConstantEstimate>;

    fn piterbarg(
        &self,
        c: &[f64],
        kappa: f64,
        drift: &DriftSpec,
        variant: PiterbargVariant,
    ) -> Result<ConstantEstimate>;

    fn window(&self, c: &[f64], kappa: f64, drift: &DriftSpec, window: (f64, f64)) -> Result<ConstantEstimate>;
}

fn single_positive(c: &[f64]) -> Option<f64> {
    let mut pos = c.iter().filter(|&&x| x > 0.0);
    match (pos.next(), pos.next()) {
        (Some(&x), None) => Some(x),
        _ => None,
    }
}

/// Closed forms for a single active coordinate with `κ ∈ {1, 2}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClosedFormProvider;

impl ConstantProvider for ClosedFormProvider {
    fn pickands(&self, c: &[f64], kappa: f64) -> Result<ConstantEstimate> {
        let c1 = single_positive(c).ok_or_else(|| Error::Provider(format!("no closed form for C = {c:?}")))?;
        let value = closed_forms_n1(c1, kappa, None).map_err(|e| Error::Provider(e.to_string()))?;
        Ok(ConstantEstimate::exact(value, EstimatorTag::ClosedForm))
    }

    fn piterbarg(&self, _: &[f64], kappa: f64, _: &DriftSpec, _: PiterbargVariant) -> Result<ConstantEstimate> {
        Err(Error::Provider(format!(
            "no closed-form Piterbarg constant (kappa {kappa})"
        )))
    }

    fn window(&self, c: &[f64], kappa: f64, drift: &DriftSpec, window: (f64, f64)) -> Result<ConstantEstimate> {
        let zero_drift = drift.d_lower.iter().chain(&drift.d_upper).all(|&d| d == 0.0);
        match single_positive(c) {
            Some(c1) if zero_drift && window.0 == 0.0 && c.len() == 1 => {
                let value = closed_forms_n1(c1, kappa, Some(window.1)).map_err(|e| Error::Provider(e.to_string()))?;
                let mut est = ConstantEstimate::exact(value, EstimatorTag::ClosedForm);
                est.window_s = window;
                Ok(est)
            }
            _ => Err(Error::Provider(format!(
                "no closed-form window constant for C = {c:?}, window {window:?}"
            ))),
        }
    }
}

/// Pickands constants of `λ·C_base` from one base value via `H_{λC} = λ^{2/κ}H_C`.
#[derive(Debug, Clone)]
pub struct ScalingProvider {
    pub base_c: Vec<f64>,
    pub kappa: f64,
    pub base: ConstantEstimate,
}

impl ScalingProvider {
    fn factor(&self, c: &[f64]) -> Option<f64> {
        if c.len() != self.base_c.len() {
            return None;
        }
        let (k, &b) = self.base_c.iter().enumerate().find(|(_, &b)| b > 0.0)?;
        let lambda = c[k] / b;
        let consistent = c
            .iter()
            .zip(&self.base_c)
            .all(|(x, b)| (x - lambda * b).abs() <= 1e-12 * x.abs().max(1.0));
        consistent.then_some(lambda)
    }
}

impl ConstantProvider for ScalingProvider {
    fn pickands(&self, c: &[f64], kappa: f64) -> Result<ConstantEstimate> {
        match self.factor(c) {
            Some(lambda) if kappa == self.kappa && lambda > 0.0 => {
                let f = lambda.powf(2.0 / kappa);
                Ok(ConstantEstimate {
                    value: f * self.base.value,
                    se: f * self.base.se,
                    ..self.base.clone()
                })
            }
            _ => Err(Error::Provider(format!(
                "C = {c:?} is not a positive multiple of {:?}",
                self.base_c
            ))),
        }
    }

    fn piterbarg(&self, _: &[f64], _: f64, _: &DriftSpec, _: PiterbargVariant) -> Result<ConstantEstimate> {
        Err(Error::Provider("scaling provider has no Piterbarg constants".into()))
    }

    fn window(&self, _: &[f64], _: f64, _: &DriftSpec, _: (f64, f64)) -> Result<ConstantEstimate> {
        Err(Error::Provider("scaling provider has no window constants".into()))
    }
}

/// Estimation budget of an [`EstimatingProvider`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationBudget {
    pub s_ladder: Vec<f64>,
    pub piterbarg_ladder: Vec<f64>,
    pub step: Option<StepRule>,
    pub replications: u64,
}

impl Default for EstimationBudget {
    fn default() -> Self {
        Self {
            s_ladder: vec![1.0, 2.0, 4.0, 8.0],
            piterbarg_ladder: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            step: None,
            replications: 20_000,
        }
    }
}

/// Estimates constants on demand and caches them by their exact inputs.
#[derive(Debug)]
pub struct EstimatingProvider {
    budget: EstimationBudget,
    stream: RngStream,
    cache: Mutex<HashMap<Vec<u64>, ConstantEstimate>>,
}

impl EstimatingProvider {
    pub fn new(budget: EstimationBudget, stream: RngStream) -> Self {
        Self {
            budget,
            stream,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn key(kind: u64, c: &[f64], kappa: f64, extra: &[f64]) -> Vec<u64> {
        std::iter::once(kind)
            .chain(c.iter().chain([kappa].iter()).chain(extra).map(|x| x.to_bits()))
            .collect()
    }

    fn cached(
        &self,
        key: Vec<u64>,
        compute: impl FnOnce(RngStream) -> Result<ConstantEstimate>,
    ) -> Result<ConstantEstimate> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let index = key.iter().fold(0u64, |h, &k| h.rotate_left(7) ^ k);
        let est = compute(self.stream.fork("provider", index))?;
        self.cache.lock().expect("cache lock").insert(key, est.clone());
        Ok(est)
    }

    fn step(&self, kappa: f64) -> StepRule {
        self.budget.step.unwrap_or_else(|| StepRule::default_for(kappa))
    }
}

impl ConstantProvider for EstimatingProvider {
    fn pickands(&self, c: &[f64], kappa: f64) -> Result<ConstantEstimate> {
        self.cached(Self::key(0, c, kappa, &[]), |stream| {
            estimate_pickands(
                c,
                kappa,
                &self.budget.s_ladder,
                self.step(kappa),
                self.budget.replications,
                stream,
            )
        })
    }

    fn piterbarg(
        &self,
        c: &[f64],
        kappa: f64,
        drift: &DriftSpec,
        variant: PiterbargVariant,
    ) -> Result<ConstantEstimate> {
        let mut extra = vec![variant as u8 as f64];
        extra.extend(drift.d_lower.iter().chain(&drift.d_upper));
        self.cached(Self::key(1, c, kappa, &extra), |stream| {
            estimate_piterbarg(
                c,
                kappa,
                drift,
                variant,
                &self.budget.piterbarg_ladder,
                self.step(kappa),
                self.budget.replications,
                stream,
            )
        })
    }

    fn window(&self, c: &[f64], kappa: f64, drift: &DriftSpec, window: (f64, f64)) -> Result<ConstantEstimate> {
        let mut extra = vec![window.0, window.1];
        extra.extend(drift.d_lower.iter().chain(&drift.d_upper));
        self.cached(Self::key(2, c, kappa, &extra), |stream| {
            let step = self.step(kappa).step(window.0 + window.1);
            estimate_window_constant(c, kappa, drift, window, step, self.budget.replications, stream)
        })
    }
}

/// Tries each provider in order and returns the first success.
pub struct ChainProvider(pub Vec<Box<dyn ConstantProvider>>);

impl ChainProvider {
    fn first<T>(&self, f: impl Fn(&dyn ConstantProvider) -> Result<T>) -> Result<T> {
        let mut errors = Vec::new();
        for p in &self.0 {
            match f(p.as_ref()) {
                Ok(v) => return Ok(v),
                Err(e) => errors.push(e.to_string()),
            }
        }
        Err(Error::Provider(errors.join("; ")))
    }
}

impl ConstantProvider for ChainProvider {
    fn pickands(&self, c: &[f64], kappa: f64) -> Result<ConstantEstimate> {
        self.first(|p| p.pickands(c, kappa))
    }

    fn piterbarg(
        &self,
        c: &[f64],
        kappa: f64,
        drift: &DriftSpec,
        variant: PiterbargVariant,
    ) -> Result<ConstantEstimate> {
        self.first(|p| p.piterbarg(c, kappa, drift, variant))
    }

    fn window(&self, c: &[f64], kappa: f64, drift: &DriftSpec, window: (f64, f64)) -> Result<ConstantEstimate> {
        self.first(|p| p.window(c, kappa, drift, window))
    }
}

/// Composite Simpson on `intervals` (even) subintervals.
fn simpson(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64, intervals: usize) -> Result<f64> {
    let h = (b - a) / intervals as f64;
    let mut sum = f(a)? + f(b)?;
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h)?;
    }
    Ok(sum * h / 3.0)
}

/// Simpson on 33 nodes, halving the step until the relative change is below
/// `1e-3` (at most five refinements).
fn integrate(f: impl Fn(f64) -> Result<f64>, a: f64, b: f64, notes: &mut Vec<String>) -> Result<f64> {
    let mut intervals = 32;
    let mut prev = simpson(&f, a, b, intervals)?;
    for _ in 0..5 {
        intervals *= 2;
        let next = simpson(&f, a, b, intervals)?;
        if (next - prev).abs() <= 1e-3 * next.abs() {
            return Ok(next);
        }
        prev = next;
    }
    notes.push(format!(
        "quadrature stopped at {} nodes without reaching 1e-3",
        intervals + 1
    ));
    Ok(prev)
}

/// Locally stationary asymptotics `(∫₀ᵀ H_{c√a(t)B_κ} dt) u^{2/κ} Π Ψ(f_i(u))`.
pub fn approx_locally_stationary(
    spec: &VectorProcessSpec,
    thresholds: &ThresholdFamily,
    u: f64,
    provider: &dyn ConstantProvider,
) -> Result<AsymptoticApproximation> {
    if thresholds.dim() != spec.dim() {
        return Err(Error::domain("threshold family and spec differ in dimension"));
    }
    let mut kappas = Vec::new();
    for c in &spec.coords {
        match c {
            CoordinateSpec::Stationary { kappa, .. } | CoordinateSpec::LocallyStationary { kappa, .. } => {
                kappas.push(*kappa)
            }
            _ => {
                return Err(Error::domain(
                    "locally stationary asymptotics need stationary or locally stationary coordinates",
                ))
            }
        }
    }
    let kappa = kappas.iter().copied().fold(f64::INFINITY, f64::min);
    let a_at = |i: usize, t: f64| -> f64 {
        if kappas[i] != kappa {
            return 0.0;
        }
        match &spec.coords[i] {
            CoordinateSpec::Stationary { a, .. } => *a,
            CoordinateSpec::LocallyStationary { a_profile, .. } => a_profile.eval(t),
            _ => unreachable!(),
        }
    };
    let n = spec.dim();
    let horizon = spec.horizon_t;
    let c_at = |t: f64| -> Vec<f64> { (0..n).map(|i| thresholds.limits_c[i] * a_at(i, t).sqrt()).collect() };

    // a(t) = ρ(t)·a(0) for every active coordinate lets one constant serve all t.
    let probes: Vec<f64> = (0..=64).map(|k| horizon * k as f64 / 64.0).collect();
    let ratio = |t: f64| -> Option<f64> {
        let mut rho = None;
        for i in 0..n {
            let (a0, at) = (a_at(i, 0.0), a_at(i, t));
            if a0 == 0.0 {
                continue;
            }
            let r = at / a0;
            match rho {
                None => rho = Some(r),
                Some(prev) if (r - prev).abs() > 1e-12 * prev.abs() => return None,
                _ => {}
            }
        }
        rho
    };
    let proportional = probes.iter().all(|&t| ratio(t).is_some());

    let mut notes = Vec::new();
    let (integral, se) = if proportional {
        let base = provider.pickands(&c_at(0.0), kappa)?;
        let weight = integrate(
            |t| Ok(ratio(t).expect("checked proportional").powf(1.0 / kappa)),
            0.0,
            horizon,
            &mut notes,
        )?;
        notes.push("scalar-scaling path".into());
        (weight * base.value, weight * base.se)
    } else {
        let integral = integrate(
            |t| Ok(provider.pickands(&c_at(t), kappa)?.value),
            0.0,
            horizon,
            &mut notes,
        )?;
        (integral, 0.0)
    };
    let mut approx = AsymptoticApproximation::assemble(
        Regime::LocallyStationary,
        integral,
        se,
        u,
        2.0 / kappa,
        thresholds.realize(u),
    );
    approx.notes = notes;
    Ok(approx)
}

/// `Θ` for the boundary tag of the variance minimizer.
pub fn theta_factor(profile: &VarianceProfileReport, beta: f64) -> Result<f64> {
    let inv = |theta: f64, side: &str| {
        if theta > 0.0 {
            Ok(theta.powf(-1.0 / beta))
        } else {
            Err(Error::Hypothesis(format!("{side} = {theta} must be positive")))
        }
    };
    match profile.boundary_tag {
        BoundaryTag::Left => inv(profile.theta_upper, "theta_upper"),
        BoundaryTag::Right => inv(profile.theta_lower, "theta_lower"),
        BoundaryTag::Interior => {
            Ok(inv(profile.theta_lower, "theta_lower")? + inv(profile.theta_upper, "theta_upper")?)
        }
    }
}

/// Non-stationary asymptotics in the three regimes `α < β`, `α = β`, `α > β`.
pub fn approx_nonstationary(
    spec: &VectorProcessSpec,
    u: f64,
    profile: &VarianceProfileReport,
    provider: &dyn ConstantProvider,
) -> Result<AsymptoticApproximation> {
    let coords: Vec<_> = spec
        .coords
        .iter()
        .map(|c| match c {
            CoordinateSpec::NonStationary(ns) => Ok(ns),
            _ => Err(Error::domain(
                "non-stationary asymptotics need non-stationary coordinates",
            )),
        })
        .collect::<Result<_>>()?;
    let beta = coords[0].beta;
    if coords
        .iter()
        .any(|ns| (ns.beta - beta).abs() > INDEX_TIE_TOLERANCE * beta)
    {
        return Err(Error::domain("coordinates must share beta"));
    }
    match profile.boundary_tag {
        BoundaryTag::Left if !(profile.theta_upper > 0.0) => {
            return Err(Error::Hypothesis("theta_upper must be positive when t0 = 0".into()))
        }
        BoundaryTag::Right if !(profile.theta_lower > 0.0) => {
            return Err(Error::Hypothesis("theta_lower must be positive when t0 = T".into()))
        }
        BoundaryTag::Interior if !(profile.theta_lower > 0.0 && profile.theta_upper > 0.0) => {
            return Err(Error::Hypothesis("theta_lower and theta_upper must be positive".into()))
        }
        _ => {}
    }
    let alpha = coords.iter().map(|ns| ns.alpha).fold(f64::INFINITY, f64::min);
    let c: Vec<f64> = coords
        .iter()
        .map(|ns| 1.0 / ns.sigma_profile.eval(profile.t0))
        .collect();
    let tail_args: Vec<f64> = c.iter().map(|ci| ci * u).collect();
    let c_eff: Vec<f64> = coords
        .iter()
        .zip(&c)
        .map(|(ns, ci)| if ns.alpha == alpha { ci * ns.a.sqrt() } else { 0.0 })
        .collect();

    if (alpha - beta).abs() <= INDEX_TIE_TOLERANCE * beta {
        let drift = DriftSpec {
            exponent: alpha,
            d_lower: coords.iter().zip(&c).map(|(ns, ci)| ci * ci * ns.b_lower).collect(),
            d_upper: coords.iter().zip(&c).map(|(ns, ci)| ci * ci * ns.b_upper).collect(),
        };
        let variant = match profile.boundary_tag {
            BoundaryTag::Left => PiterbargVariant::Right,
            BoundaryTag::Right => PiterbargVariant::Left,
            BoundaryTag::Interior => PiterbargVariant::TwoSided,
        };
        let h = provider.piterbarg(&c_eff, alpha, &drift, variant)?;
        Ok(AsymptoticApproximation::assemble(
            Regime::NsCaseIi,
            h.value,
            h.se,
            u,
            0.0,
            tail_args,
        ))
    } else if alpha < beta {
        let h = provider.pickands(&c_eff, alpha)?;
        let factor = theta_factor(profile, beta)? * gamma(1.0 / beta + 1.0);
        Ok(AsymptoticApproximation::assemble(
            Regime::NsCaseI,
            h.value * factor,
            h.se * factor,
            u,
            2.0 / alpha - 2.0 / beta,
            tail_args,
        ))
    } else {
        Ok(AsymptoticApproximation::assemble(
            Regime::NsCaseIii,
            1.0,
            0.0,
            u,
            0.0,
            tail_args,
        ))
    }
}

/// `H_{C B_κ, d}[−S1, S2] · Π Ψ(f_i(u))` for a window of size `[−S1, S2]·u^{−2/κ}`.
pub fn local_window_approx(
    c_effective: &[f64],
    kappa: f64,
    drift: &DriftSpec,
    window: (f64, f64),
    thresholds_at_u: &[f64],
    u: f64,
    provider: &dyn ConstantProvider,
) -> Result<AsymptoticApproximation> {
    if !(window.0.max(window.1) > 0.0) {
        return Err(Error::domain(format!("window {window:?} is empty")));
    }
    let h = provider.window(c_effective, kappa, drift, window)?;
    Ok(AsymptoticApproximation::assemble(
        Regime::LocalWindow,
        h.value,
        h.se,
        u,
        0.0,
        thresholds_at_u.to_vec(),
    ))
}

/// Order-statistics asymptotics: `C(n, r)` times the min-of-`r` probability.
pub fn order_stats_approx(n: u64, r: u64, base_prob_min_r: f64) -> Result<f64> {
    if r == 0 || r > n {
        return Err(Error::domain(format!("order statistic r = {r} outside 1..={n}")));
    }
    Ok(binomial(n, r) * base_prob_min_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::NonStationaryCoord;
    use crate::profile::{CubicTable, Profile};
    use std::f64::consts::PI;

    fn stationary(a: f64, kappa: f64) -> VectorProcessSpec {
        VectorProcessSpec::new(vec![CoordinateSpec::stationary(a, kappa)], 1.0)
    }

    #[test]
    fn stationary_brownian_case() {
        let u = 3.5;
        let approx = approx_locally_stationary(
            &stationary(1.0, 1.0),
            &ThresholdFamily::uniform(1),
            u,
            &ClosedFormProvider,
        )
        .unwrap();
        let want = u * u * tail(u);
        assert!((approx.value_at_u / want - 1.0).abs() < 1e-12);
        assert_eq!(approx.u_power, 2.0);
    }

    #[test]
    fn kappa_two_leading_constant() {
        let a = 2.5;
        let approx = approx_locally_stationary(
            &stationary(a, 2.0),
            &ThresholdFamily::uniform(1),
            3.0,
            &ClosedFormProvider,
        )
        .unwrap();
        assert!((approx.leading_constant - a.sqrt() / PI.sqrt()).abs() < 1e-12);
        assert!((approx.value_at_u - approx.leading_constant * 3.0 * tail(3.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_profile_matches_stationary() {
        let ls = VectorProcessSpec::new(
            vec![CoordinateSpec::LocallyStationary {
                a_profile: Profile::Constant(1.7),
                kappa: 1.0,
            }],
            1.0,
        );
        let thr = ThresholdFamily::uniform(1);
        let a = approx_locally_stationary(&ls, &thr, 3.0, &ClosedFormProvider).unwrap();
        let b = approx_locally_stationary(&stationary(1.7, 1.0), &thr, 3.0, &ClosedFormProvider).unwrap();
        assert!((a.leading_constant / b.leading_constant - 1.0).abs() < 1e-12);
        assert_eq!(a.u_power, b.u_power);
    }

    #[test]
    fn varying_profile_integrates_scaled_constant() {
        let profile = Profile::Table(CubicTable::sample(|t| 1.0 + t, 0.0, 1.0, 65).unwrap());
        let ls = VectorProcessSpec::new(
            vec![CoordinateSpec::LocallyStationary {
                a_profile: profile,
                kappa: 1.0,
            }],
            1.0,
        );
        let approx = approx_locally_stationary(&ls, &ThresholdFamily::uniform(1), 3.0, &ClosedFormProvider).unwrap();
        assert!(
            (approx.leading_constant - 1.5).abs() < 1e-6,
            "{}",
            approx.leading_constant
        );
    }

    #[test]
    fn mixed_indices_use_indicator_vector() {
        let spec = VectorProcessSpec::new(
            vec![
                CoordinateSpec::stationary(2.0, 1.0),
                CoordinateSpec::stationary(1.0, 1.5),
            ],
            2.0,
        );
        let approx = approx_locally_stationary(&spec, &ThresholdFamily::uniform(2), 3.0, &ClosedFormProvider).unwrap();
        assert!((approx.leading_constant - 2.0 * 2.0).abs() < 1e-12);
        assert_eq!(approx.tail_args, vec![3.0, 3.0]);
    }

    fn ns(sigma: Profile, alpha: f64, beta: f64, b: (f64, f64)) -> CoordinateSpec {
        CoordinateSpec::NonStationary(NonStationaryCoord {
            sigma_profile: sigma,
            alpha,
            a: 1.0,
            beta,
            b_lower: b.0,
            b_upper: b.1,
            holder_g: 2.0,
            holder_gamma: 1.0,
            holder_rho: 0.5,
        })
    }

    fn report(tag: BoundaryTag, lower: f64, upper: f64) -> VarianceProfileReport {
        VarianceProfileReport {
            g_min: 2.0,
            t0: 0.0,
            boundary_tag: tag,
            theta_lower: lower,
            theta_upper: upper,
        }
    }

    #[test]
    fn case_three_is_product_of_tails() {
        let spec = VectorProcessSpec::new(
            vec![
                ns(Profile::Constant(1.0), 2.0, 1.0, (0.0, 1.0)),
                ns(Profile::Constant(0.5), 1.5, 1.0, (0.0, 1.0)),
            ],
            1.0,
        );
        let approx =
            approx_nonstationary(&spec, 3.0, &report(BoundaryTag::Left, 0.0, 1.0), &ClosedFormProvider).unwrap();
        assert_eq!(approx.regime, Regime::NsCaseIii);
        assert_eq!(approx.value_at_u, tail(3.0) * tail(6.0));
    }

    #[test]
    fn theta_table() {
        assert_eq!(
            theta_factor(&report(BoundaryTag::Interior, 1.0, 1.0), 1.0).unwrap(),
            2.0
        );
        assert_eq!(theta_factor(&report(BoundaryTag::Left, 0.0, 4.0), 2.0).unwrap(), 0.5);
        assert_eq!(
            theta_factor(&report(BoundaryTag::Right, 9.0, 0.0), 2.0).unwrap(),
            1.0 / 3.0
        );
        assert!(matches!(
            theta_factor(&report(BoundaryTag::Interior, 0.0, 1.0), 1.0),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn case_one_assembles_constant() {
        let spec = VectorProcessSpec::new(vec![ns(Profile::Constant(1.0), 1.0, 2.0, (1.0, 1.0))], 1.0);
        let approx = approx_nonstationary(
            &spec,
            4.0,
            &report(BoundaryTag::Interior, 1.0, 1.0),
            &ClosedFormProvider,
        )
        .unwrap();
        assert_eq!(approx.regime, Regime::NsCaseI);
        let want = 1.0 * 2.0 * gamma(1.5);
        assert!((approx.leading_constant - want).abs() < 1e-12);
        assert_eq!(approx.u_power, 1.0);
    }

    #[test]
    fn case_two_needs_piterbarg_constant() {
        let spec = VectorProcessSpec::new(vec![ns(Profile::Constant(1.0), 1.0, 1.0, (0.0, 1.0))], 1.0);
        let r = approx_nonstationary(&spec, 3.0, &report(BoundaryTag::Left, 0.0, 1.0), &ClosedFormProvider);
        assert!(matches!(r, Err(Error::Provider(_))));
    }

    #[test]
    fn boundary_hypothesis() {
        let spec = VectorProcessSpec::new(vec![ns(Profile::Constant(1.0), 1.0, 2.0, (1.0, 0.0))], 1.0);
        let r = approx_nonstationary(&spec, 3.0, &report(BoundaryTag::Left, 1.0, 0.0), &ClosedFormProvider);
        assert!(matches!(r, Err(Error::Hypothesis(_))));
    }

    #[test]
    fn local_window_closed_form() {
        let drift = DriftSpec::zero(1, 2.0);
        let u = 3.0;
        let approx = local_window_approx(&[1.0], 2.0, &drift, (0.0, 1.0), &[u], u, &ClosedFormProvider).unwrap();
        assert!((approx.value_at_u - (1.0 + 1.0 / PI.sqrt()) * tail(u)).abs() < 1e-15);
    }

    #[test]
    fn scaling_provider() {
        let base = ConstantEstimate::exact(0.3, EstimatorTag::Slope);
        let p = ScalingProvider {
            base_c: vec![1.0, 1.0],
            kappa: 1.0,
            base,
        };
        assert!((p.pickands(&[2.0, 2.0], 1.0).unwrap().value - 1.2).abs() < 1e-12);
        assert!(p.pickands(&[2.0, 1.0], 1.0).is_err());
        let chain = ChainProvider(vec![Box::new(ClosedFormProvider), Box::new(p)]);
        assert_eq!(
            chain.pickands(&[3.0], 2.0).unwrap().estimator_tag,
            EstimatorTag::ClosedForm
        );
        assert!((chain.pickands(&[0.5, 0.5], 1.0).unwrap().value - 0.075).abs() < 1e-12);
    }

    #[test]
    fn order_statistics_multiplier() {
        assert_eq!(order_stats_approx(3, 3, 0.1).unwrap(), 0.1);
        assert_eq!(order_stats_approx(2, 1, 0.1).unwrap(), 0.2);
        assert!((order_stats_approx(3, 2, 0.1).unwrap() - 0.3).abs() < 1e-15);
        assert!(order_stats_approx(3, 4, 0.1).is_err());
        assert!(order_stats_approx(3, 0, 0.1).is_err());
    }

    #[test]
    fn estimating_provider_caches() {
        let budget = EstimationBudget {
            s_ladder: vec![0.5, 1.0, 1.5],
            piterbarg_ladder: vec![1.0, 2.0],
            step: Some(StepRule::PerWindow(64)),
            replications: 4000,
        };
        let p = EstimatingProvider::new(budget, RngStream::new(1, 2));
        let a = p.pickands(&[1.0], 2.0).unwrap();
        let b = p.pickands(&[1.0], 2.0).unwrap();
        assert_eq!(a, b);
        assert!((a.value - 1.0 / PI.sqrt()).abs() < 4.0 * a.se, "{a:?}");
    }
}
