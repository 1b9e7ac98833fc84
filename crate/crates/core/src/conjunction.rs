//! Direct Monte Carlo for conjunction probabilities and inequality audits.
//!
//! A replication hits when some grid node has every coordinate above its
//! threshold. Replication `r` draws from `stream.rng_for(r)`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::asymptotics::AsymptoticApproximation;
use crate::error::{Error, Result};
use crate::parallel::reduce_replications;
use crate::process::{validate_spec, CoordinateSpec, ThresholdFamily, VectorProcessSpec};
use crate::rng::RngStream;
use crate::sampler::{SampleGrid, SamplerScratch, VectorSampler};
use crate::stats::{median, MeanVar};

pub const MIN_REPLICATIONS: u64 = 1000;

/// Normal quantile used for two-sided 95% intervals.
const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimate {
    pub value: f64,
    /// Binomial standard error; `3/R` when there are no hits.
    pub se: f64,
    pub hits: u64,
    pub replications: u64,
    pub grid_step: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ProbEstimate {
    pub fn from_hits(hits: u64, replications: u64, grid_step: f64) -> Self {
        let n = replications as f64;
        let value = hits as f64 / n;
        let mut notes = Vec::new();
        let se = if hits == 0 {
            notes.push(format!("no hits; rule-of-three upper bound {:.3e}", 3.0 / n));
            3.0 / n
        } else {
            (value * (1.0 - value) / n).sqrt()
        };
        Self {
            value,
            se,
            hits,
            replications,
            grid_step,
            notes,
        }
    }

    /// Upper confidence bound: `value + 3 se`, or `3/R` with no hits.
    pub fn upper(&self) -> f64 {
        self.value + 3.0 * self.se
    }
}

fn pooled_se(a: &ProbEstimate, b: &ProbEstimate) -> f64 {
    a.se.hypot(b.se)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Fail => "fail",
        })
    }
}

fn check_replications(replications: u64) -> Result<()> {
    if replications < MIN_REPLICATIONS {
        return Err(Error::domain(format!(
            "need at least {MIN_REPLICATIONS} replications, got {replications}"
        )));
    }
    Ok(())
}

/// Step `min(T/1024, 0.1·u^{−2/κ_min})` on `[0, T]`.
pub fn default_grid(spec: &VectorProcessSpec, u: f64) -> Result<SampleGrid> {
    let kappa_min = spec
        .coords
        .iter()
        .map(CoordinateSpec::index)
        .fold(f64::INFINITY, f64::min);
    if !kappa_min.is_finite() {
        return Err(Error::domain("spec has no coordinates"));
    }
    let t = spec.horizon_t;
    let mesoscale = u.max(1.0).powf(-2.0 / kappa_min);
    let step = (t / 1024.0).min(0.1 * mesoscale);
    let count = (t / step).ceil() as usize;
    SampleGrid::new(0.0, t / count as f64, count + 1)
}

struct PathScratch {
    sampler: SamplerScratch,
    path: Vec<f64>,
    alive: Vec<usize>,
}

impl PathScratch {
    fn new(m: usize) -> Self {
        Self {
            sampler: SamplerScratch::default(),
            path: vec![0.0; m],
            alive: Vec::with_capacity(m),
        }
    }
}

/// `P(∃t ∀i: X_i(t) > f_i)` on the grid, with early exit per replication.
pub fn estimate_conjunction_prob(
    spec: &VectorProcessSpec,
    thresholds: &[f64],
    grid: &SampleGrid,
    replications: u64,
    stream: RngStream,
) -> Result<ProbEstimate> {
    check_replications(replications)?;
    if thresholds.len() != spec.dim() {
        return Err(Error::domain(format!(
            "{} thresholds for {} coordinates",
            thresholds.len(),
            spec.dim()
        )));
    }
    let sampler = VectorSampler::new(spec, grid)?;
    let m = grid.count;
    let hits = reduce_replications(
        replications,
        || PathScratch::new(m),
        |ps: &mut PathScratch, acc: &mut u64, r| {
            let mut rng = stream.rng_for(r);
            ps.alive.clear();
            ps.alive.extend(0..m);
            for (i, &f) in thresholds.iter().enumerate() {
                sampler.coordinate(i).fill(&mut rng, &mut ps.path, &mut ps.sampler);
                let path = &ps.path;
                ps.alive.retain(|&j| path[j] > f);
                if ps.alive.is_empty() {
                    return;
                }
            }
            *acc += 1;
        },
        |total, part| *total += part,
    );
    let est = ProbEstimate::from_hits(hits, replications, grid.step);
    if hits == 0 {
        warn!("conjunction estimate has no hits in {replications} replications");
    }
    Ok(est)
}

/// `max_j min_i (X_i(t_j) − o_i)/c_i` for one replication on a full path.
fn max_min_statistic(paths: &[f64], m: usize, family: &ThresholdFamily, nodes: impl Iterator<Item = usize>) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for j in nodes {
        let mut low = f64::INFINITY;
        for (i, (&c, &o)) in family.limits_c.iter().zip(&family.offsets).enumerate() {
            low = low.min((paths[i * m + j] - o) / c);
            if low <= best {
                break;
            }
        }
        best = best.max(low);
    }
    best
}

fn check_family(spec: &VectorProcessSpec, family: &ThresholdFamily) -> Result<()> {
    if family.limits_c.len() != spec.dim() || family.offsets.len() != spec.dim() {
        return Err(Error::domain("threshold family length differs from the spec"));
    }
    if family.limits_c.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::domain("shared-path ladders need positive threshold slopes"));
    }
    Ok(())
}

fn check_increasing(ladder: &[f64], min_len: usize) -> Result<()> {
    if ladder.len() < min_len || ladder.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain(format!(
            "ladder must be increasing with at least {min_len} values: {ladder:?}"
        )));
    }
    Ok(())
}

/// Hit probabilities for thresholds `c·u + o` on an increasing `u` ladder
/// from shared paths; the estimates are non-increasing in `u` exactly.
pub fn estimate_conjunction_ladder(
    spec: &VectorProcessSpec,
    family: &ThresholdFamily,
    u_ladder: &[f64],
    grid: &SampleGrid,
    replications: u64,
    stream: RngStream,
) -> Result<Vec<ProbEstimate>> {
    check_replications(replications)?;
    check_family(spec, family)?;
    check_increasing(u_ladder, 1)?;
    let sampler = VectorSampler::new(spec, grid)?;
    let (n, m) = (spec.dim(), grid.count);
    let counts = reduce_replications(
        replications,
        || (SamplerScratch::default(), vec![0.0; n * m]),
        |(scratch, paths): &mut (SamplerScratch, Vec<f64>), acc: &mut Vec<u64>, r| {
            if acc.is_empty() {
                acc.resize(u_ladder.len(), 0);
            }
            let mut rng = stream.rng_for(r);
            sampler.fill(&mut rng, paths, scratch);
            let stat = max_min_statistic(paths, m, family, 0..m);
            for (k, &u) in u_ladder.iter().enumerate() {
                if stat > u {
                    acc[k] += 1;
                } else {
                    break;
                }
            }
        },
        merge_counts,
    );
    Ok(expand_counts(counts, u_ladder.len(), replications, grid.step))
}

fn merge_counts(total: &mut Vec<u64>, part: Vec<u64>) {
    if total.len() < part.len() {
        total.resize(part.len(), 0);
    }
    for (t, p) in total.iter_mut().zip(part) {
        *t += p;
    }
}

fn expand_counts(mut counts: Vec<u64>, len: usize, replications: u64, step: f64) -> Vec<ProbEstimate> {
    counts.resize(len, 0);
    counts
        .into_iter()
        .map(|h| ProbEstimate::from_hits(h, replications, step))
        .collect()
}

/// Estimates on nested grids of steps `grid.step·2^{−k}`, `k = 0..=levels`,
/// all read from one path on the finest grid.
pub fn estimate_nested_refinement(
    spec: &VectorProcessSpec,
    thresholds: &[f64],
    grid: &SampleGrid,
    levels: u32,
    replications: u64,
    stream: RngStream,
) -> Result<Vec<ProbEstimate>> {
    check_replications(replications)?;
    if thresholds.len() != spec.dim() {
        return Err(Error::domain("threshold length differs from the spec"));
    }
    if levels > 16 {
        return Err(Error::domain(format!("{levels} refinement levels is too many")));
    }
    let factor = 1usize << levels;
    let fine = SampleGrid::new(grid.origin, grid.step / factor as f64, (grid.count - 1) * factor + 1)?;
    let sampler = VectorSampler::new(spec, &fine)?;
    let (n, m) = (spec.dim(), fine.count);
    let family = ThresholdFamily {
        limits_c: vec![1.0; n],
        offsets: thresholds.to_vec(),
    };
    let counts = reduce_replications(
        replications,
        || (SamplerScratch::default(), vec![0.0; n * m]),
        |(scratch, paths): &mut (SamplerScratch, Vec<f64>), acc: &mut Vec<u64>, r| {
            if acc.is_empty() {
                acc.resize(levels as usize + 1, 0);
            }
            let mut rng = stream.rng_for(r);
            sampler.fill(&mut rng, paths, scratch);
            for k in 0..=levels {
                let stride = factor >> k;
                if max_min_statistic(paths, m, &family, (0..m).step_by(stride)) > 0.0 {
                    acc[k as usize] += 1;
                }
            }
        },
        merge_counts,
    );
    Ok((0..=levels)
        .zip(expand_counts(counts, levels as usize + 1, replications, grid.step))
        .map(|(k, mut e)| {
            e.grid_step = grid.step / (1u64 << k) as f64;
            e
        })
        .collect())
}

/// `P(∃t: at least r coordinates exceed u)` on the grid.
pub fn estimate_order_statistic_prob(
    spec: &VectorProcessSpec,
    r_of_n: usize,
    u: f64,
    grid: &SampleGrid,
    replications: u64,
    stream: RngStream,
) -> Result<ProbEstimate> {
    check_replications(replications)?;
    let n = spec.dim();
    if r_of_n == 0 || r_of_n > n {
        return Err(Error::domain(format!("order {r_of_n} outside 1..={n}")));
    }
    let sampler = VectorSampler::new(spec, grid)?;
    let m = grid.count;
    let hits = reduce_replications(
        replications,
        || (SamplerScratch::default(), vec![0.0; n * m]),
        |(scratch, paths): &mut (SamplerScratch, Vec<f64>), acc: &mut u64, rep| {
            let mut rng = stream.rng_for(rep);
            sampler.fill(&mut rng, paths, scratch);
            let hit = (0..m).any(|j| (0..n).filter(|&i| paths[i * m + j] > u).count() >= r_of_n);
            *acc += hit as u64;
        },
        |total, part| *total += part,
    );
    Ok(ProbEstimate::from_hits(hits, replications, grid.step))
}

/// Joint probabilities of exceeding `u·1` in `[0, S]·u^{−2/κ}` and in
/// `[t0, t0 + S]·u^{−2/κ}` for each offset `t0`, from shared paths.
pub fn estimate_double_event(
    spec: &VectorProcessSpec,
    u: f64,
    s: f64,
    t0_offsets: &[f64],
    replications: u64,
    stream: RngStream,
) -> Result<Vec<ProbEstimate>> {
    check_replications(replications)?;
    let kappa = match spec.coords.first() {
        Some(CoordinateSpec::Stationary { kappa, .. }) => *kappa,
        _ => return Err(Error::domain("double event needs stationary coordinates")),
    };
    if spec
        .coords
        .iter()
        .any(|c| !matches!(c, CoordinateSpec::Stationary { kappa: k, .. } if *k == kappa))
    {
        return Err(Error::domain(
            "double event needs stationary coordinates with one index",
        ));
    }
    if !(s > 1.0) || !(u > 0.0) {
        return Err(Error::domain(format!("need S > 1 and u > 0, got S = {s}, u = {u}")));
    }
    check_increasing(t0_offsets, 1)?;
    if t0_offsets[0] < s {
        return Err(Error::domain(format!(
            "offsets must be at least S = {s}, got {}",
            t0_offsets[0]
        )));
    }
    let unit = u.powf(-2.0 / kappa);
    let last = t0_offsets[t0_offsets.len() - 1];
    let reach = (last + s) * unit;
    if reach > spec.horizon_t {
        return Err(Error::domain(format!(
            "window end {reach} exceeds horizon {}",
            spec.horizon_t
        )));
    }
    let per_unit = 16.0;
    let step = (unit / per_unit).min(spec.horizon_t / 1024.0);
    let idx = |x: f64| (x * unit / step).round() as usize;
    let grid = SampleGrid::new(0.0, step, idx(last + s) + 1)?;
    let windows: Vec<(usize, usize)> = t0_offsets.iter().map(|&t0| (idx(t0), idx(t0 + s))).collect();
    let first_end = idx(s);
    let sampler = VectorSampler::new(spec, &grid)?;
    let (n, m) = (spec.dim(), grid.count);
    let counts = reduce_replications(
        replications,
        || (SamplerScratch::default(), vec![0.0; n * m], vec![false; m]),
        |(scratch, paths, above): &mut (SamplerScratch, Vec<f64>, Vec<bool>), acc: &mut Vec<u64>, r| {
            if acc.is_empty() {
                acc.resize(windows.len(), 0);
            }
            let mut rng = stream.rng_for(r);
            sampler.fill(&mut rng, paths, scratch);
            for (j, a) in above.iter_mut().enumerate() {
                *a = (0..n).all(|i| paths[i * m + j] > u);
            }
            if !above[..=first_end].iter().any(|&a| a) {
                return;
            }
            for (k, &(lo, hi)) in windows.iter().enumerate() {
                if above[lo..=hi].iter().any(|&a| a) {
                    acc[k] += 1;
                }
            }
        },
        merge_counts,
    );
    Ok(expand_counts(counts, windows.len(), replications, step))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlepianReport {
    pub p_a: ProbEstimate,
    pub p_b: ProbEstimate,
    pub verdict: Verdict,
}

/// Checks `P_A ≤ P_B` when `A` and `B` share variances and `R_A ≥ R_B`.
pub fn audit_slepian(
    spec_a: &VectorProcessSpec,
    spec_b: &VectorProcessSpec,
    thresholds: &[f64],
    grid: &SampleGrid,
    replications: u64,
    stream: RngStream,
) -> Result<SlepianReport> {
    if spec_a.dim() != spec_b.dim() {
        return Err(Error::Precondition("specs differ in dimension".into()));
    }
    validate_spec(spec_a).into_result()?;
    validate_spec(spec_b).into_result()?;
    let nodes: Vec<f64> = grid.nodes().collect();
    for (i, (ca, cb)) in spec_a.coords.iter().zip(&spec_b.coords).enumerate() {
        for (j, &s) in nodes.iter().enumerate() {
            let (va, vb) = (ca.std_dev(s).powi(2), cb.std_dev(s).powi(2));
            if (va - vb).abs() > 1e-12 {
                return Err(Error::Precondition(format!(
                    "coordinate {i}: variances differ at t = {s} ({va} vs {vb})"
                )));
            }
            for &t in &nodes[j + 1..] {
                let (ra, rb) = (ca.covariance_unchecked(s, t), cb.covariance_unchecked(s, t));
                if ra < rb - 1e-12 {
                    return Err(Error::Precondition(format!(
                        "coordinate {i}: covariance of A below B at ({s}, {t})"
                    )));
                }
            }
        }
    }
    let p_a = estimate_conjunction_prob(spec_a, thresholds, grid, replications, stream.fork("slepian", 0))?;
    let p_b = estimate_conjunction_prob(spec_b, thresholds, grid, replications, stream.fork("slepian", 1))?;
    let verdict = if p_a.value <= p_b.value + 3.0 * pooled_se(&p_a, &p_b) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(SlepianReport { p_a, p_b, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorellReport {
    pub u: f64,
    pub tau_sq: f64,
    /// Mean of the supremum plus three standard errors.
    pub mu_hat: f64,
    pub mu_se: f64,
    pub bound_at_u: f64,
    pub empirical_at_u: ProbEstimate,
    pub verdict: Verdict,
}

/// `inf_t Σ 1/σ_i²(t)` over the grid nodes.
pub fn tau_squared(spec: &VectorProcessSpec, grid: &SampleGrid) -> f64 {
    grid.nodes()
        .map(|t| spec.coords.iter().map(|c| 1.0 / c.std_dev(t).powi(2)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Weights `w_i(t) = Π_{j≠i} σ_j² / Σ_k Π_{j≠k} σ_j²`, node-major.
fn combination_weights(spec: &VectorProcessSpec, grid: &SampleGrid) -> Vec<f64> {
    let n = spec.dim();
    let mut w = Vec::with_capacity(n * grid.count);
    for t in grid.nodes() {
        let var: Vec<f64> = spec.coords.iter().map(|c| c.std_dev(t).powi(2)).collect();
        let others: Vec<f64> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| var[j]).product())
            .collect();
        let total: f64 = others.iter().sum();
        if total > 0.0 {
            w.extend(others.iter().map(|o| o / total));
        } else {
            w.extend(std::iter::repeat_n(1.0 / n as f64, n));
        }
    }
    w
}

/// Borell-TIS bound `exp(−(u − μ)²τ²/2)` against the empirical conjunction
/// probability at each `u`.
pub fn audit_borell(
    spec: &VectorProcessSpec,
    u_ladder: &[f64],
    grid: &SampleGrid,
    replications: u64,
    stream: RngStream,
) -> Result<Vec<BorellReport>> {
    check_replications(replications)?;
    let tau_sq = tau_squared(spec, grid);
    if !(tau_sq > 0.0 && tau_sq.is_finite()) {
        return Err(Error::Precondition(format!(
            "tau^2 = {tau_sq} must be positive and finite"
        )));
    }
    let sampler = VectorSampler::new(spec, grid)?;
    let weights = combination_weights(spec, grid);
    let (n, m) = (spec.dim(), grid.count);
    let mu_stream = stream.fork("borell-mu", 0);
    let sup = reduce_replications(
        replications,
        || (SamplerScratch::default(), vec![0.0; n * m]),
        |(scratch, paths): &mut (SamplerScratch, Vec<f64>), acc: &mut MeanVar, r| {
            let mut rng = mu_stream.rng_for(r);
            sampler.fill(&mut rng, paths, scratch);
            let best = (0..m)
                .map(|j| (0..n).map(|i| weights[j * n + i] * paths[i * m + j]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            acc.push(best);
        },
        |total, part| total.merge(&part),
    );
    let mu_se = sup.std_error();
    let mu_hat = sup.mean + 3.0 * mu_se;
    u_ladder
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let thresholds = vec![u; n];
            let empirical =
                estimate_conjunction_prob(spec, &thresholds, grid, replications, stream.fork("borell-p", k as u64))?;
            let (bound_at_u, verdict) = if u <= mu_hat {
                (1.0, Verdict::Inconclusive)
            } else {
                let bound = (-(u - mu_hat).powi(2) * tau_sq / 2.0).exp();
                let v = if empirical.value <= bound {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                };
                (bound, v)
            };
            Ok(BorellReport {
                u,
                tau_sq,
                mu_hat,
                mu_se,
                bound_at_u,
                empirical_at_u: empirical,
                verdict,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub u: f64,
    pub estimate: ProbEstimate,
    /// `P̂(u) / (mes(T)·u^{2/ν−1}·exp(−u²τ²/2))`.
    pub ratio: f64,
    pub ratio_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub nu: f64,
    pub tau_sq: f64,
    pub measure: f64,
    pub points: Vec<DecayPoint>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

/// Regularity index: `min(γ, α)` for non-stationary coordinates, `κ` otherwise.
pub fn decay_index(spec: &VectorProcessSpec) -> f64 {
    spec.coords
        .iter()
        .map(|c| match c {
            CoordinateSpec::NonStationary(ns) => ns.holder_gamma.min(ns.alpha),
            other => other.index(),
        })
        .fold(f64::INFINITY, f64::min)
}

/// Piterbarg inequality audit: the normalized ratio must stay bounded
/// (maximum at most twice the median) along the ladder.
pub fn audit_piterbarg_decay(
    spec: &VectorProcessSpec,
    u_ladder: &[f64],
    grid: &SampleGrid,
    replications: u64,
    stream: RngStream,
) -> Result<DecayReport> {
    check_increasing(u_ladder, 3)?;
    let n = spec.dim();
    let nu = decay_index(spec);
    let tau_sq = tau_squared(spec, grid);
    if !(tau_sq > 0.0 && tau_sq.is_finite()) {
        return Err(Error::Precondition(format!(
            "tau^2 = {tau_sq} must be positive and finite"
        )));
    }
    let measure = grid.end() - grid.origin;
    let family = ThresholdFamily {
        limits_c: vec![1.0; n],
        offsets: vec![0.0; n],
    };
    let estimates = estimate_conjunction_ladder(spec, &family, u_ladder, grid, replications, stream)?;
    let points: Vec<DecayPoint> = u_ladder
        .iter()
        .zip(estimates)
        .map(|(&u, estimate)| {
            let norm = measure.max(f64::MIN_POSITIVE) * u.powf(2.0 / nu - 1.0) * (-u * u * tau_sq / 2.0).exp();
            DecayPoint {
                u,
                ratio: estimate.value / norm,
                ratio_se: estimate.se / norm,
                estimate,
            }
        })
        .collect();
    let mut notes = vec![format!("nu = min(gamma, alpha) = {nu}")];
    let with_hits: Vec<f64> = points.iter().filter(|p| p.estimate.hits > 0).map(|p| p.ratio).collect();
    let verdict = if with_hits.is_empty() {
        notes.push("no hits on the ladder".into());
        Verdict::Inconclusive
    } else {
        if with_hits.len() < points.len() {
            notes.push(format!("{} rungs without hits", points.len() - with_hits.len()));
        }
        let max = with_hits.iter().copied().fold(0.0, f64::max);
        if max <= 2.0 * median(&with_hits) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    Ok(DecayReport {
        nu,
        tau_sq,
        measure,
        points,
        verdict,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    /// `None` when the empirical estimate has no hits.
    pub ratio: Option<f64>,
    pub lower_ci: f64,
    pub upper_ci: f64,
    pub grid_step: f64,
    pub replications: u64,
}

/// Empirical / asymptotic with a 95% interval that also carries the
/// uncertainty of an estimated leading constant.
pub fn compare_with_asymptotic(empirical: &ProbEstimate, approx: &AsymptoticApproximation) -> Result<RatioReport> {
    let denom = approx.value_at_u;
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(Error::Precondition(format!(
            "approximation value {denom} must be positive"
        )));
    }
    if empirical.hits == 0 {
        return Ok(RatioReport {
            ratio: None,
            lower_ci: 0.0,
            upper_ci: 3.0 / empirical.replications as f64 / denom,
            grid_step: empirical.grid_step,
            replications: empirical.replications,
        });
    }
    let ratio = empirical.value / denom;
    let rel_const = if approx.leading_constant > 0.0 {
        approx.constant_se / approx.leading_constant
    } else {
        0.0
    };
    let rel = (empirical.se / empirical.value).hypot(rel_const);
    Ok(RatioReport {
        ratio: Some(ratio),
        lower_ci: (ratio * (1.0 - Z95 * rel)).max(0.0),
        upper_ci: ratio * (1.0 + Z95 * rel),
        grid_step: empirical.grid_step,
        replications: empirical.replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::Regime;
    use crate::special::tail;

    fn ou(a: f64, n: usize) -> VectorProcessSpec {
        VectorProcessSpec::new(vec![CoordinateSpec::stationary(a, 1.0); n], 1.0)
    }

    #[test]
    fn single_node_conjunction_is_product_of_tails() {
        let spec = ou(1.0, 2);
        let grid = SampleGrid::single(0.5);
        let est = estimate_conjunction_prob(&spec, &[1.0, 1.0], &grid, 200_000, RngStream::new(3, 0)).unwrap();
        let exact = tail(1.0).powi(2);
        assert!((est.value - exact).abs() < 3.0 * est.se, "{est:?} vs {exact}");
    }

    #[test]
    fn zero_hits_reports_rule_of_three() {
        let grid = SampleGrid::single(0.0);
        let est = estimate_conjunction_prob(&ou(1.0, 1), &[10.0], &grid, 1000, RngStream::new(1, 0)).unwrap();
        assert_eq!(est.hits, 0);
        assert_eq!(est.se, 3e-3);
        assert!(!est.notes.is_empty());
    }

    #[test]
    fn ladder_matches_direct_estimates() {
        let spec = ou(1.0, 2);
        let grid = SampleGrid::covering(0.0, 1.0, 1.0 / 64.0).unwrap();
        let family = ThresholdFamily {
            limits_c: vec![1.0, 1.0],
            offsets: vec![0.0, 0.0],
        };
        let stream = RngStream::new(5, 0);
        let ladder = estimate_conjunction_ladder(&spec, &family, &[0.5, 1.0, 1.5], &grid, 4000, stream).unwrap();
        for (k, u) in [0.5, 1.0, 1.5].into_iter().enumerate() {
            let direct = estimate_conjunction_prob(&spec, &[u, u], &grid, 4000, stream).unwrap();
            assert_eq!(direct.hits, ladder[k].hits);
        }
        assert!(ladder.windows(2).all(|w| w[0].hits >= w[1].hits));
    }

    #[test]
    fn nested_refinement_is_monotone() {
        let spec = ou(1.0, 1);
        let grid = SampleGrid::covering(0.0, 1.0, 1.0 / 8.0).unwrap();
        let est = estimate_nested_refinement(&spec, &[1.5], &grid, 3, 4000, RngStream::new(2, 0)).unwrap();
        assert_eq!(est.len(), 4);
        assert!(est.windows(2).all(|w| w[0].hits <= w[1].hits), "{est:?}");
        assert_eq!(est[3].grid_step, 1.0 / 64.0);
    }

    #[test]
    fn default_grid_resolves_mesoscale() {
        let grid = default_grid(&ou(1.0, 1), 3.0).unwrap();
        assert_eq!(grid.count, 1025);
        let grid = default_grid(&ou(1.0, 1), 40.0).unwrap();
        assert!(grid.step <= 0.1 / 1600.0 + 1e-15);
        assert!((grid.end() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn double_event_rejects_short_horizon() {
        let spec = ou(1.0, 1);
        let err = estimate_double_event(&spec, 1.0, 2.0, &[4.0], 1000, RngStream::new(1, 0));
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn slepian_rejects_reversed_dominance() {
        let grid = SampleGrid::covering(0.0, 1.0, 0.25).unwrap();
        let err = audit_slepian(&ou(2.0, 1), &ou(1.0, 1), &[1.0], &grid, 1000, RngStream::new(1, 0));
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn combination_weights_sum_to_one() {
        let spec = VectorProcessSpec::new(
            vec![CoordinateSpec::Fbm { kappa: 1.0 }, CoordinateSpec::stationary(1.0, 1.0)],
            1.0,
        );
        let grid = SampleGrid::covering(0.0, 1.0, 0.5).unwrap();
        let w = combination_weights(&spec, &grid);
        assert_eq!(&w[..2], &[1.0, 0.0]);
        for pair in w.chunks(2) {
            assert!((pair[0] + pair[1] - 1.0).abs() < 1e-15);
        }
        assert!((w[2] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(tau_squared(&spec, &grid), 2.0);
    }

    #[test]
    fn ratio_of_exact_match_is_one() {
        let est = ProbEstimate::from_hits(50, 1000, 0.1);
        let approx = AsymptoticApproximation {
            regime: Regime::LocallyStationary,
            leading_constant: 0.05,
            constant_se: 0.0,
            u_power: 0.0,
            tail_args: Vec::new(),
            value_at_u: 0.05,
            notes: Vec::new(),
        };
        let rep = compare_with_asymptotic(&est, &approx).unwrap();
        assert_eq!(rep.ratio, Some(1.0));
        assert!(rep.lower_ci < 1.0 && rep.upper_ci > 1.0);
        let none = compare_with_asymptotic(&ProbEstimate::from_hits(0, 1000, 0.1), &approx).unwrap();
        assert_eq!(none.ratio, None);
        assert!((none.upper_ci - 0.06).abs() < 1e-12);
    }
}
