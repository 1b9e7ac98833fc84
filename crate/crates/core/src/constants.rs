//! Generalized Pickands and Piterbarg constants for `Y = C·B_κ`: Monte Carlo
//! estimators, closed forms for one coordinate, and the known bounds.
//!
//! A window constant is the mean over replications of `EWV({ξ(t_j)})` with
//! `ξ_i(t) = √2 C_i B_{i,κ}(t) − C_i²|t|^κ − d_i(t)` on a grid of the window.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthant::{ln_ewv, EwvScratch};
use crate::parallel::reduce_replications;
use crate::process::CoordinateSpec;
use crate::rng::RngStream;
use crate::sampler::{CoordinateSampler, SampleGrid, SamplerScratch};
use crate::special::{gamma, gaussian_cdf};
use crate::stats::{fit_line, MeanVar};

/// Minimum replication count for the Monte Carlo estimators.
pub const MIN_REPLICATIONS: u64 = 1000;

/// Drift `d_i(t) = d̲_i|t|^p` for `t ≤ 0` and `d̄_i|t|^p` for `t > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub exponent: f64,
    pub d_lower: Vec<f64>,
    pub d_upper: Vec<f64>,
}

impl DriftSpec {
    pub fn zero(n: usize, exponent: f64) -> Self {
        Self {
            exponent,
            d_lower: vec![0.0; n],
            d_upper: vec![0.0; n],
        }
    }

    pub fn symmetric(d: Vec<f64>, exponent: f64) -> Self {
        Self {
            exponent,
            d_lower: d.clone(),
            d_upper: d,
        }
    }

    pub fn eval(&self, i: usize, t: f64) -> f64 {
        let coef = if t <= 0.0 { self.d_lower[i] } else { self.d_upper[i] };
        if coef == 0.0 {
            0.0
        } else {
            coef * t.abs().powf(self.exponent)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    Window,
    Slope,
    DiscreteZero,
    ClosedForm,
    Bound,
}

/// One rung of a ladder: window size (or `u`), estimate, standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub x: f64,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub value: f64,
    pub se: f64,
    pub window_s: (f64, f64),
    pub grid_step: f64,
    pub replications: u64,
    pub estimator_tag: EstimatorTag,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rungs: Vec<Rung>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ConstantEstimate {
    pub fn exact(value: f64, tag: EstimatorTag) -> Self {
        Self {
            value,
            se: 0.0,
            window_s: (0.0, 0.0),
            grid_step: 0.0,
            replications: 0,
            estimator_tag: tag,
            rungs: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// How the grid step of a window is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `S / k` for a window of length `S`.
    PerWindow(u32),
    /// The same absolute step for every window.
    Fixed(f64),
}

impl StepRule {
    /// `S/1024` for `κ ≤ 1`, `S/512` otherwise.
    pub fn default_for(kappa: f64) -> Self {
        StepRule::PerWindow(if kappa <= 1.0 { 1024 } else { 512 })
    }

    pub fn step(&self, length: f64) -> f64 {
        match *self {
            StepRule::PerWindow(k) => length / k as f64,
            StepRule::Fixed(step) => step,
        }
    }
}

fn check_common(c: &[f64], kappa: f64, replications: u64) -> Result<()> {
    if c.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || !c.iter().any(|&x| x > 0.0) {
        return Err(Error::domain(format!("C must be nonnegative and nonzero, got {c:?}")));
    }
    if !(kappa > 0.0 && kappa <= 2.0) {
        return Err(Error::domain(format!("kappa = {kappa} not in (0,2]")));
    }
    if replications < MIN_REPLICATIONS {
        return Err(Error::domain(format!(
            "need at least {MIN_REPLICATIONS} replications, got {replications}"
        )));
    }
    Ok(())
}

struct WindowScratch {
    sampler: SamplerScratch,
    ewv: EwvScratch,
    paths: Vec<f64>,
    points: Vec<f64>,
}

/// `H_{CB_κ,d}[−S1, S2]` by Monte Carlo; replication `r` uses `stream.rng_for(r)`.
pub fn estimate_window_constant(
    c: &[f64],
    kappa: f64,
    drift: &DriftSpec,
    window: (f64, f64),
    grid_step: f64,
    replications: u64,
    stream: RngStream,
) -> Result<ConstantEstimate> {
    check_common(c, kappa, replications)?;
    let n = c.len();
    if drift.d_lower.len() != n || drift.d_upper.len() != n {
        return Err(Error::domain("drift length differs from C"));
    }
    let (s1, s2) = window;
    if !(s1 >= 0.0 && s2 >= 0.0) {
        return Err(Error::domain(format!(
            "window bounds must be nonnegative, got {window:?}"
        )));
    }
    let base = ConstantEstimate {
        value: 1.0,
        se: 0.0,
        window_s: window,
        grid_step,
        replications,
        estimator_tag: EstimatorTag::Window,
        rungs: Vec::new(),
        notes: Vec::new(),
    };
    if s1 == 0.0 && s2 == 0.0 {
        return Ok(base);
    }
    let grid = SampleGrid::covering(-s1, s2, grid_step)?;
    let m = grid.count;
    let fbm = CoordinateSampler::new(&CoordinateSpec::Fbm { kappa }, &grid)?;
    let scale: Vec<f64> = c.iter().map(|ci| std::f64::consts::SQRT_2 * ci).collect();
    let mut offset = vec![0.0; n * m];
    for i in 0..n {
        for (j, t) in grid.nodes().enumerate() {
            offset[i * m + j] = -c[i] * c[i] * t.abs().powf(kappa) - drift.eval(i, t);
        }
    }

    let stats = reduce_replications(
        replications,
        || WindowScratch {
            sampler: SamplerScratch::default(),
            ewv: EwvScratch::default(),
            paths: vec![0.0; n * m],
            points: vec![0.0; n * m],
        },
        |ws: &mut WindowScratch, acc: &mut MeanVar, r| {
            let mut rng = stream.rng_for(r);
            for i in 0..n {
                let path = &mut ws.paths[i * m..(i + 1) * m];
                if scale[i] == 0.0 {
                    path.copy_from_slice(&offset[i * m..(i + 1) * m]);
                    continue;
                }
                fbm.fill(&mut rng, path, &mut ws.sampler);
                for (x, o) in path.iter_mut().zip(&offset[i * m..(i + 1) * m]) {
                    *x = scale[i] * *x + o;
                }
            }
            let ln = if n == 1 {
                ws.paths.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            } else {
                for j in 0..m {
                    for i in 0..n {
                        ws.points[j * n + i] = ws.paths[i * m + j];
                    }
                }
                ln_ewv(n, &ws.points, &mut ws.ewv)
            };
            acc.push(ln.exp());
        },
        |total, part| total.merge(&part),
    );
    Ok(ConstantEstimate {
        value: stats.mean,
        se: stats.std_error(),
        ..base
    })
}

fn check_ladder(ladder: &[f64], min_len: usize, increasing: bool) -> Result<()> {
    if ladder.len() < min_len {
        return Err(Error::domain(format!("ladder needs at least {min_len} rungs")));
    }
    let ordered = ladder
        .windows(2)
        .all(|w| if increasing { w[0] < w[1] } else { w[0] > w[1] });
    if !ordered || ladder.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        let dir = if increasing { "increasing" } else { "decreasing" };
        return Err(Error::domain(format!("ladder must be {dir} and positive: {ladder:?}")));
    }
    Ok(())
}

/// Estimates of `H_{CB_κ}(S)` on each rung; rung `k` uses `stream.fork("rung", k)`.
pub fn pickands_rungs(
    c: &[f64],
    kappa: f64,
    s_ladder: &[f64],
    step: StepRule,
    replications: u64,
    stream: RngStream,
) -> Result<Vec<ConstantEstimate>> {
    let drift = DriftSpec::zero(c.len(), kappa);
    s_ladder
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            estimate_window_constant(
                c,
                kappa,
                &drift,
                (0.0, s),
                step.step(s),
                replications,
                stream.fork("rung", k as u64),
            )
        })
        .collect()
}

/// `H_{CB_κ}` as the slope of `H(S) ≈ H·S + b` over the ladder.
pub fn estimate_pickands(
    c: &[f64],
    kappa: f64,
    s_ladder: &[f64],
    step: StepRule,
    replications: u64,
    stream: RngStream,
) -> Result<ConstantEstimate> {
    check_ladder(s_ladder, 3, true)?;
    let rungs = pickands_rungs(c, kappa, s_ladder, step, replications, stream)?;
    Ok(pickands_from_rungs(s_ladder, &rungs))
}

/// Slope fit over precomputed rungs.
pub fn pickands_from_rungs(s_ladder: &[f64], rungs: &[ConstantEstimate]) -> ConstantEstimate {
    let ys: Vec<f64> = rungs.iter().map(|r| r.value).collect();
    let ses: Vec<f64> = rungs.iter().map(|r| r.se).collect();
    let mut notes = Vec::new();
    let mut fit = fit_line(s_ladder, &ys, &ses);
    let resid = ys[0] - (fit.slope * s_ladder[0] + fit.intercept);
    if s_ladder.len() > 3 && resid.abs() > 3.0 * ses[0] {
        notes.push(format!("dropped rung S={} (residual {resid:.3e} > 3 se)", s_ladder[0]));
        fit = fit_line(&s_ladder[1..], &ys[1..], &ses[1..]);
    }
    let ratios: Vec<Rung> = s_ladder
        .iter()
        .zip(rungs)
        .map(|(&s, r)| Rung {
            x: s,
            value: r.value / s,
            se: r.se / s,
        })
        .collect();
    for w in ratios.windows(2) {
        let pooled = (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
        if w[1].value > w[0].value + 3.0 * pooled {
            let msg = format!(
                "H(S)/S increases from S={} to S={} beyond 3 se ({:.5} -> {:.5})",
                w[0].x, w[1].x, w[0].value, w[1].value
            );
            log::warn!("{msg}");
            notes.push(msg);
        }
    }
    let last = rungs.last().expect("ladder is nonempty");
    ConstantEstimate {
        value: fit.slope,
        se: fit.slope_se,
        window_s: (0.0, *s_ladder.last().expect("ladder is nonempty")),
        grid_step: last.grid_step,
        replications: last.replications,
        estimator_tag: EstimatorTag::Slope,
        rungs: ratios,
        notes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiterbargVariant {
    Right,
    Left,
    TwoSided,
}

impl PiterbargVariant {
    fn window(self, s: f64) -> (f64, f64) {
        match self {
            PiterbargVariant::Right => (0.0, s),
            PiterbargVariant::Left => (s, 0.0),
            PiterbargVariant::TwoSided => (s, s),
        }
    }
}

fn positive_part_sum(d: &[f64]) -> f64 {
    d.iter().map(|&x| x.max(0.0)).sum()
}

/// Piterbarg constant: window estimates on growing windows until two
/// consecutive rungs differ by less than `max(2 pooled se, 1e-3·value)`.
pub fn estimate_piterbarg(
    c: &[f64],
    kappa: f64,
    drift: &DriftSpec,
    variant: PiterbargVariant,
    s_ladder: &[f64],
    step: StepRule,
    replications: u64,
    stream: RngStream,
) -> Result<ConstantEstimate> {
    if drift.exponent != kappa {
        return Err(Error::domain(format!(
            "drift exponent {} must equal kappa {kappa}",
            drift.exponent
        )));
    }
    let lower: f64 = drift.d_lower.iter().sum();
    let upper: f64 = drift.d_upper.iter().sum();
    let needs_upper = variant != PiterbargVariant::Left;
    let needs_lower = variant != PiterbargVariant::Right;
    if (needs_upper && !(upper > 0.0)) || (needs_lower && !(lower > 0.0)) {
        return Err(Error::Precondition(format!(
            "drift sums must be positive for the {variant:?} constant (lower {lower}, upper {upper})"
        )));
    }
    piterbarg_sequence(c, kappa, drift, variant, s_ladder, step, replications, stream)
}

#[allow(clippy::too_many_arguments)]
fn piterbarg_sequence(
    c: &[f64],
    kappa: f64,
    drift: &DriftSpec,
    variant: PiterbargVariant,
    s_ladder: &[f64],
    step: StepRule,
    replications: u64,
    stream: RngStream,
) -> Result<ConstantEstimate> {
    check_ladder(s_ladder, 2, true)?;
    let mut seq: Vec<(f64, f64, f64)> = Vec::new();
    let mut rungs = Vec::new();
    let mut prev: Option<ConstantEstimate> = None;
    for (k, &s) in s_ladder.iter().enumerate() {
        let est = estimate_window_constant(
            c,
            kappa,
            drift,
            variant.window(s),
            step.step(s),
            replications,
            stream.fork("rung", k as u64),
        )?;
        seq.push((s, est.value, est.se));
        rungs.push(Rung {
            x: s,
            value: est.value,
            se: est.se,
        });
        if let Some(p) = &prev {
            let pooled = (p.se.powi(2) + est.se.powi(2)).sqrt();
            if (est.value - p.value).abs() < (2.0 * pooled).max(1e-3 * est.value) {
                return Ok(ConstantEstimate { rungs, ..est });
            }
        }
        prev = Some(est);
    }
    Err(Error::Convergence { sequence: seq })
}

/// `H = lim_{u↓0} u⁻¹ P(max_{k≥1} Z(uk) ≤ 0)`, extrapolated linearly in
/// `u^{κ/2}` from the last two rungs. `horizon = None` picks the smallest
/// `S` with `min_i C_i² S^κ ≥ 40`.
pub fn estimate_discrete_zero(
    c: &[f64],
    kappa: f64,
    u_ladder: &[f64],
    horizon: Option<f64>,
    replications: u64,
    stream: RngStream,
) -> Result<ConstantEstimate> {
    check_common(c, kappa, replications)?;
    check_ladder(u_ladder, 2, false)?;
    let cmin = c.iter().copied().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
    let cmax = c.iter().copied().fold(0.0, f64::max);
    let horizon = horizon.unwrap_or_else(|| (40.0 / (cmin * cmin)).powf(1.0 / kappa));
    if cmax * cmax * horizon.powf(kappa) < 40.0 {
        return Err(Error::Truncation(format!(
            "horizon {horizon} too short: max C_i² S^κ = {} < 40",
            cmax * cmax * horizon.powf(kappa)
        )));
    }
    let mut rungs = Vec::new();
    for (k, &u) in u_ladder.iter().enumerate() {
        let (value, se) = discrete_zero_rung(c, kappa, u, horizon, replications, stream.fork("rung", k as u64))?;
        rungs.push(Rung { x: u, value, se });
    }
    let (a, b) = (rungs[rungs.len() - 2], rungs[rungs.len() - 1]);
    let (xa, xb) = (a.x.powf(kappa / 2.0), b.x.powf(kappa / 2.0));
    let value = (xa * b.value - xb * a.value) / (xa - xb);
    let se = (xa * xa * b.se * b.se + xb * xb * a.se * a.se).sqrt() / (xa - xb);
    Ok(ConstantEstimate {
        value,
        se,
        window_s: (0.0, horizon),
        grid_step: b.x,
        replications,
        estimator_tag: EstimatorTag::DiscreteZero,
        rungs,
        notes: vec![format!(
            "linear extrapolation in u^(kappa/2) from u={} and u={}",
            a.x, b.x
        )],
    })
}

/// `(u⁻¹ p̂, u⁻¹ se)` for one rung of the discrete-zero estimator.
pub fn discrete_zero_rung(
    c: &[f64],
    kappa: f64,
    u: f64,
    horizon: f64,
    replications: u64,
    stream: RngStream,
) -> Result<(f64, f64)> {
    let nodes = (horizon / u + 1e-9).floor() as usize;
    if nodes == 0 {
        return Err(Error::Truncation(format!("no nodes uk ≤ {horizon} for u = {u}")));
    }
    let n = c.len();
    let grid = SampleGrid::new(u, u, nodes)?;
    let fbm = CoordinateSampler::new(&CoordinateSpec::Fbm { kappa }, &grid)?;
    let drift: Vec<Vec<f64>> = c
        .iter()
        .map(|ci| grid.nodes().map(|t| ci * ci * t.powf(kappa)).collect())
        .collect();

    struct Scratch {
        sampler: SamplerScratch,
        path: Vec<f64>,
        alive: Vec<bool>,
    }
    let hits = reduce_replications(
        replications,
        || Scratch {
            sampler: SamplerScratch::default(),
            path: vec![0.0; nodes],
            alive: vec![true; nodes],
        },
        |s: &mut Scratch, acc: &mut u64, r| {
            let mut rng = stream.rng_for(r);
            let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            s.alive.iter_mut().for_each(|a| *a = true);
            let mut any = true;
            for i in 0..n {
                if c[i] == 0.0 {
                    continue;
                }
                fbm.fill(&mut rng, &mut s.path, &mut s.sampler);
                let k = std::f64::consts::SQRT_2 * c[i];
                any = false;
                for ((a, x), d) in s.alive.iter_mut().zip(&s.path).zip(&drift[i]) {
                    if *a {
                        *a = k * x - d + e[i] > 0.0;
                        any |= *a;
                    }
                }
                if !any {
                    break;
                }
            }
            if !any {
                *acc += 1;
            }
        },
        |total, part| *total += part,
    );
    let p = hits as f64 / replications as f64;
    let se = (p * (1.0 - p) / replications as f64).sqrt();
    Ok((p / u, se / u))
}

/// `H_{B_1}(T) = (2+T)Φ(√(T/2)) + √(T/π)e^{−T/4}`.
pub fn window_closed_form_b1(t: f64) -> f64 {
    (2.0 + t) * gaussian_cdf((t / 2.0).sqrt()) + (t / PI).sqrt() * (-t / 4.0).exp()
}

/// `H_{B_2}(T) = 1 + T/√π`.
pub fn window_closed_form_b2(t: f64) -> f64 {
    1.0 + t / PI.sqrt()
}

/// Closed forms for one coordinate, `κ ∈ {1, 2}`: the limit constant
/// `C^{2/κ}H*_κ`, or the window constant on `[0, T]` (self-similarity maps
/// `C` to the window `C^{2/κ}T`).
pub fn closed_forms_n1(c1: f64, kappa: f64, window_t: Option<f64>) -> Result<f64> {
    if !(c1 > 0.0) {
        return Err(Error::domain(format!("C1 = {c1} must be positive")));
    }
    let scale = c1.powf(2.0 / kappa);
    match (kappa, window_t) {
        (1.0, None) => Ok(scale),
        (2.0, None) => Ok(scale / PI.sqrt()),
        (k, Some(t)) if k == 1.0 && t >= 0.0 => Ok(window_closed_form_b1(scale * t)),
        (k, Some(t)) if k == 2.0 && t >= 0.0 => Ok(window_closed_form_b2(scale * t)),
        (_, Some(t)) if t < 0.0 => Err(Error::domain(format!("window {t} negative"))),
        _ => Err(Error::Unsupported(format!("no closed form for kappa = {kappa}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PickandsBounds {
    pub lower: f64,
    pub upper: Option<f64>,
}

/// Lower bound `(ΣC²)^{1/κ}/(4^{1+1/κ}Γ(1/κ+1))`; upper bounds for unit `C`
/// and `κ ∈ {1, 2}`.
pub fn pickands_bounds(c: &[f64], kappa: f64) -> Result<PickandsBounds> {
    if c.is_empty() || c.iter().any(|&x| !(x >= 0.0)) || c.iter().all(|&x| x == 0.0) {
        return Err(Error::domain(format!("C must be nonnegative and nonzero, got {c:?}")));
    }
    if !(kappa > 0.0 && kappa <= 2.0) {
        return Err(Error::domain(format!("kappa = {kappa} not in (0,2]")));
    }
    let n = c.len() as f64;
    let sum_sq: f64 = c.iter().map(|x| x * x).sum();
    let lower = sum_sq.powf(1.0 / kappa) / (4f64.powf(1.0 + 1.0 / kappa) * gamma(1.0 / kappa + 1.0));
    let ratio = if c.len() == 1 { 1.0 } else { n / (n - 1.0) };
    let unit = c.iter().all(|&x| x == 1.0);
    let upper = match kappa {
        k if unit && k == 1.0 => Some(n * (ratio * (2.0 + (2.0 / (PI * E)).sqrt())).powf(n - 1.0)),
        k if unit && k == 2.0 => Some(n * ratio.powf(n - 1.0) / PI.sqrt()),
        _ => None,
    };
    Ok(PickandsBounds { lower, upper })
}

/// Lower bounds for the right, left, and two-sided Piterbarg constants in
/// terms of the Pickands constant `h`.
pub fn piterbarg_lower_bound(kappa: f64, drift: &DriftSpec, variant: PiterbargVariant, h: f64) -> Result<f64> {
    let ek = E * kappa;
    let up = positive_part_sum(&drift.d_upper);
    let lo = positive_part_sum(&drift.d_lower);
    let (factor, sum) = match variant {
        PiterbargVariant::Right => (1.0, up),
        PiterbargVariant::Left => (1.0, lo),
        PiterbargVariant::TwoSided => (2.0, lo + up),
    };
    if !(sum > 0.0) {
        return Err(Error::domain(format!(
            "positive parts of the drift sum to zero for the {variant:?} bound"
        )));
    }
    let value = match variant {
        PiterbargVariant::TwoSided => factor * ek.powf(-1.0 / kappa) * sum.powf(-1.0 / kappa) * h,
        _ => (ek * sum).powf(-1.0 / kappa) * h,
    };
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gaussian_density;

    fn stream() -> RngStream {
        RngStream::new(2024, 1)
    }

    #[test]
    fn degenerate_window_is_one() {
        let est =
            estimate_window_constant(&[1.0], 1.0, &DriftSpec::zero(1, 1.0), (0.0, 0.0), 0.1, 1000, stream()).unwrap();
        assert_eq!((est.value, est.se), (1.0, 0.0));
    }

    #[test]
    fn kappa_two_window_matches_closed_form() {
        let s = 2.0;
        let est = estimate_window_constant(
            &[1.0],
            2.0,
            &DriftSpec::zero(1, 2.0),
            (0.0, s),
            s / 512.0,
            20_000,
            stream(),
        )
        .unwrap();
        let want = 1.0 + s / PI.sqrt();
        assert!(
            (est.value - want).abs() < 3.0 * est.se,
            "{} ± {} vs {want}",
            est.value,
            est.se
        );
    }

    #[test]
    fn kappa_one_window_near_closed_form() {
        let est = estimate_window_constant(
            &[1.0],
            1.0,
            &DriftSpec::zero(1, 1.0),
            (0.0, 1.0),
            1.0 / 1024.0,
            20_000,
            stream(),
        )
        .unwrap();
        let want = window_closed_form_b1(1.0);
        assert!((want - 2.7201).abs() < 1e-4);
        assert!((est.value - want).abs() < 3.0 * est.se + 0.03 * want, "{est:?}");
    }

    #[test]
    fn strong_drift_pins_right_constant_to_one() {
        let drift = DriftSpec {
            exponent: 1.0,
            d_lower: vec![0.0],
            d_upper: vec![1e3],
        };
        let est = estimate_piterbarg(
            &[1.0],
            1.0,
            &drift,
            PiterbargVariant::Right,
            &[0.5, 1.0, 2.0],
            StepRule::Fixed(1.0 / 4096.0),
            4000,
            stream(),
        )
        .unwrap();
        assert!((est.value - 1.0).abs() < 3.0 * est.se + 0.02, "{est:?}");
    }

    #[test]
    fn left_and_right_are_mirror_images() {
        let d = DriftSpec {
            exponent: 1.0,
            d_lower: vec![2.0, 1.0],
            d_upper: vec![0.5, 0.25],
        };
        let mirrored = DriftSpec {
            exponent: 1.0,
            d_lower: d.d_upper.clone(),
            d_upper: d.d_lower.clone(),
        };
        let a = estimate_window_constant(&[1.0, 1.0], 1.0, &d, (1.0, 0.5), 1.0 / 256.0, 5000, stream()).unwrap();
        let b = estimate_window_constant(
            &[1.0, 1.0],
            1.0,
            &mirrored,
            (0.5, 1.0),
            1.0 / 256.0,
            5000,
            stream().fork("b", 0),
        )
        .unwrap();
        let pooled = (a.se.powi(2) + b.se.powi(2)).sqrt();
        assert!((a.value - b.value).abs() < 3.0 * pooled, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn zero_drift_piterbarg_rung_is_window_constant() {
        let drift = DriftSpec::zero(1, 1.0);
        let err = piterbarg_sequence(
            &[1.0],
            1.0,
            &drift,
            PiterbargVariant::Right,
            &[1.0, 2.0],
            StepRule::PerWindow(128),
            1000,
            stream(),
        );
        let first = match err {
            Err(Error::Convergence { sequence }) => sequence[0].1,
            Ok(est) => est.rungs[0].value,
            Err(e) => panic!("{e}"),
        };
        let direct = estimate_window_constant(
            &[1.0],
            1.0,
            &drift,
            (0.0, 1.0),
            1.0 / 128.0,
            1000,
            stream().fork("rung", 0),
        )
        .unwrap();
        assert_eq!(first.to_bits(), direct.value.to_bits());
        assert!(matches!(
            estimate_piterbarg(
                &[1.0],
                1.0,
                &drift,
                PiterbargVariant::Right,
                &[1.0, 2.0],
                StepRule::PerWindow(64),
                1000,
                stream()
            ),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn window_estimate_is_worker_independent() {
        let run = || {
            estimate_window_constant(
                &[1.0, 0.7],
                1.3,
                &DriftSpec::zero(2, 1.3),
                (0.25, 1.0),
                1.0 / 64.0,
                1500,
                stream(),
            )
            .unwrap()
        };
        let a = run();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(a, b);
    }

    /// `P(∀k ≥ 1: √2ξuk − (uk)² + E ≤ 0)` by quadrature over `ξ`, with the
    /// exponential integrated in closed form.
    fn kappa_two_rung_oracle(u: f64) -> f64 {
        let prob_given = |xi: f64| {
            let mut g = f64::INFINITY;
            let mut k = 1.0;
            loop {
                let t = u * k;
                g = g.min(t * t - std::f64::consts::SQRT_2 * xi * t);
                if t > 2.0 * xi.max(0.0) + 1.0 {
                    break;
                }
                k += 1.0;
            }
            if g <= 0.0 {
                0.0
            } else {
                1.0 - (-g).exp()
            }
        };
        let (lo, hi, steps) = (-10.0, 10.0, 200_000);
        let h = (hi - lo) / steps as f64;
        (0..=steps)
            .map(|j| {
                let x = lo + j as f64 * h;
                let w = if j == 0 || j == steps { 0.5 } else { 1.0 };
                w * prob_given(x) * gaussian_density(x)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn discrete_zero_rung_matches_quadrature() {
        let u = 0.25;
        let (v, se) = discrete_zero_rung(&[1.0], 2.0, u, 40f64.sqrt(), 40_000, stream()).unwrap();
        let want = kappa_two_rung_oracle(u) / u;
        assert!((v - want).abs() < 3.0 * se, "{v} ± {se} vs {want}");
    }

    #[test]
    fn discrete_zero_truncation_errors() {
        assert!(matches!(
            discrete_zero_rung(&[1.0], 1.0, 2.0, 1.0, 1000, stream()),
            Err(Error::Truncation(_))
        ));
        assert!(matches!(
            estimate_discrete_zero(&[1.0], 1.0, &[0.5, 0.25], Some(3.0), 1000, stream()),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn closed_form_examples() {
        assert!((closed_forms_n1(2.0, 2.0, None).unwrap() - 2.0 / PI.sqrt()).abs() < 1e-15);
        assert!((closed_forms_n1(1.0, 2.0, Some(2.0)).unwrap() - 2.1284).abs() < 1e-4);
        assert!((closed_forms_n1(1.0, 1.0, Some(0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(closed_forms_n1(1.0, 1.5, None), Err(Error::Unsupported(_))));
        let slope = window_closed_form_b1(401.0) - window_closed_form_b1(400.0);
        assert!((slope - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bound_examples() {
        let b = pickands_bounds(&[1.0, 1.0], 1.0).unwrap();
        assert!((b.lower - 0.125).abs() < 1e-15);
        assert!((b.upper.unwrap() - 2.0 * 2.0 * (2.0 + (2.0 / (PI * E)).sqrt())).abs() < 1e-12);
        assert!((b.upper.unwrap() - 9.936).abs() < 1e-3);
        let b = pickands_bounds(&[1.0], 2.0).unwrap();
        assert!((b.upper.unwrap() - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert!((b.lower - 1.0 / (4.0 * PI.sqrt())).abs() < 1e-4);
        let b = pickands_bounds(&[1.0, 1.0], 2.0).unwrap();
        assert!((b.upper.unwrap() - 4.0 / PI.sqrt()).abs() < 1e-12);
        assert_eq!(pickands_bounds(&[1.0, 1.0], 1.5).unwrap().upper, None);
        assert_eq!(pickands_bounds(&[2.0], 1.0).unwrap().upper, None);
    }

    #[test]
    fn piterbarg_bound_examples() {
        let right = DriftSpec {
            exponent: 1.0,
            d_lower: vec![0.0],
            d_upper: vec![1.0],
        };
        let v = piterbarg_lower_bound(1.0, &right, PiterbargVariant::Right, 1.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        let clamped = DriftSpec {
            exponent: 1.0,
            d_lower: vec![0.0, 0.0],
            d_upper: vec![-1.0, 2.0],
        };
        let v = piterbarg_lower_bound(1.0, &clamped, PiterbargVariant::Right, 1.0).unwrap();
        assert!((v - 1.0 / (2.0 * E)).abs() < 1e-15);
        let two = DriftSpec::symmetric(vec![1.0], 1.0);
        let v = piterbarg_lower_bound(1.0, &two, PiterbargVariant::TwoSided, 1.0).unwrap();
        assert!((v - 1.0 / E).abs() < 1e-15);
        let zero = DriftSpec::symmetric(vec![-1.0], 1.0);
        assert!(piterbarg_lower_bound(1.0, &zero, PiterbargVariant::Right, 1.0).is_err());
    }
}
