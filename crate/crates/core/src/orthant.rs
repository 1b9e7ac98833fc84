//! Exponential-weighted volume of a union of downward orthants,
//! `EWV(P) = ∫ e^{Σw} 1{∃p ∈ P: w < p} dw`.
//!
//! The exact route slices along the last coordinate: sorting points by it in
//! decreasing order, `EWV = Σ_k (e^{p_(k)} − e^{p_(k+1)}) · EWV'(first k)`
//! where `EWV'` drops that coordinate. Every term is nonnegative, so the sum
//! is accumulated in log space and never overflows.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Largest Pareto set handled by inclusion–exclusion.
pub const INCLUSION_EXCLUSION_CAP: usize = 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    /// Cloud from row-major coordinates (`coords.len()` a multiple of `dim`).
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::domain(format!(
                "point cloud needs dim ≥ 1 and a positive multiple of {dim} coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("point cloud has non-finite coordinates"));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::domain("points have different dimensions"));
        }
        Self::new(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Reusable buffers for repeated evaluations.
#[derive(Debug, Default)]
pub struct EwvScratch {
    candidates: Vec<usize>,
    kept: Vec<usize>,
    sums: Vec<f64>,
    pareto: Vec<f64>,
}

/// `q ≥ p` in every coordinate.
#[inline]
fn covers(q: &[f64], p: &[f64]) -> bool {
    q.iter().zip(p).all(|(a, b)| a >= b)
}

/// Indices of the Pareto-maximal points, ordered by decreasing coordinate sum
/// (ties in input order). Duplicates keep their first occurrence.
fn pareto_indices(dim: usize, coords: &[f64], scratch: &mut EwvScratch) {
    let m = coords.len() / dim;
    let point = |j: usize| &coords[j * dim..(j + 1) * dim];
    scratch.sums.clear();
    scratch.sums.extend(coords.chunks(dim).map(|p| p.iter().sum::<f64>()));

    let mut anchors = [usize::MAX; 9];
    let anchor_count = (dim + 1).min(anchors.len());
    for (slot, anchor) in anchors[..anchor_count].iter_mut().enumerate() {
        let key = |j: usize| if slot < dim { point(j)[slot] } else { scratch.sums[j] };
        *anchor = (1..m).fold(0, |best, j| if key(j) > key(best) { j } else { best });
    }
    let anchors = &anchors[..anchor_count];

    scratch.candidates.clear();
    for j in 0..m {
        let p = point(j);
        let dominated = anchors.iter().any(|&a| {
            if a == j {
                return false;
            }
            let q = point(a);
            covers(q, p) && (q != p || a < j)
        });
        if !dominated {
            scratch.candidates.push(j);
        }
    }
    let sums = &scratch.sums;
    scratch.candidates.sort_by(|&x, &y| sums[y].total_cmp(&sums[x]));
    scratch.kept.clear();
    for &j in &scratch.candidates {
        let p = point(j);
        if !scratch.kept.iter().any(|&k| covers(point(k), p)) {
            scratch.kept.push(j);
        }
    }
}

/// Componentwise-maximal subset; weak domination and duplicates are removed.
pub fn pareto_prune(cloud: &PointCloud) -> PointCloud {
    let mut scratch = EwvScratch::default();
    pareto_indices(cloud.dim, &cloud.coords, &mut scratch);
    let coords = scratch
        .kept
        .iter()
        .flat_map(|&j| cloud.point(j).iter().copied())
        .collect();
    PointCloud { dim: cloud.dim, coords }
}

/// Streaming `ln Σ e^{x_k}`.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// `ln(e^a − e^b)` for `a ≥ b`, with `b = −∞` allowed.
#[inline]
fn ln_diff_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        a
    } else {
        a + (-(b - a).exp_m1()).ln()
    }
}

/// `ln EWV` of an arbitrary (not necessarily pruned) set of rows.
fn ln_slice(dim: usize, rows: &[&[f64]]) -> f64 {
    match dim {
        1 => rows.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max),
        2 => {
            let mut sorted: Vec<&[f64]> = rows.to_vec();
            sorted.sort_by(|p, q| q[0].total_cmp(&p[0]));
            let mut acc = LogSum::new();
            let mut ymax = f64::NEG_INFINITY;
            for (k, p) in sorted.iter().enumerate() {
                ymax = ymax.max(p[1]);
                let next = sorted.get(k + 1).map_or(f64::NEG_INFINITY, |q| q[0]);
                if next < p[0] {
                    acc.add(ymax + ln_diff_exp(p[0], next));
                }
            }
            acc.value()
        }
        _ => {
            let last = dim - 1;
            let mut sorted: Vec<&[f64]> = rows.to_vec();
            sorted.sort_by(|p, q| q[last].total_cmp(&p[last]));
            let mut acc = LogSum::new();
            let mut prefix: Vec<&[f64]> = Vec::with_capacity(sorted.len());
            for (k, p) in sorted.iter().enumerate() {
                prefix.push(&p[..last]);
                let next = sorted.get(k + 1).map_or(f64::NEG_INFINITY, |q| q[last]);
                if next < p[last] {
                    acc.add(ln_diff_exp(p[last], next) + ln_slice(last, &prefix));
                }
            }
            acc.value()
        }
    }
}

/// `ln EWV` of row-major `coords`; the hot-path entry point.
pub fn ln_ewv(dim: usize, coords: &[f64], scratch: &mut EwvScratch) -> f64 {
    if dim == 1 {
        return coords.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    pareto_indices(dim, coords, scratch);
    scratch.pareto.clear();
    for &j in &scratch.kept {
        scratch.pareto.extend_from_slice(&coords[j * dim..(j + 1) * dim]);
    }
    let rows: Vec<&[f64]> = scratch.pareto.chunks(dim).collect();
    ln_slice(dim, &rows)
}

/// Exact EWV for any dimension.
pub fn ewv_exact(cloud: &PointCloud) -> f64 {
    ln_ewv(cloud.dim, &cloud.coords, &mut EwvScratch::default()).exp()
}

/// Inclusion–exclusion over the Pareto set, kept as an independent oracle.
pub fn ewv_inclusion_exclusion(cloud: &PointCloud) -> Result<f64> {
    let pruned = pareto_prune(cloud);
    let m = pruned.len();
    if m > INCLUSION_EXCLUSION_CAP {
        return Err(Error::Capacity(format!(
            "Pareto set of {m} points exceeds inclusion-exclusion cap {INCLUSION_EXCLUSION_CAP}"
        )));
    }
    let dim = pruned.dim;
    let shift: Vec<f64> = (0..dim)
        .map(|i| pruned.points().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let shifted: Vec<Vec<f64>> = pruned
        .points()
        .map(|p| p.iter().zip(&shift).map(|(x, s)| x - s).collect())
        .collect();

    fn level(pts: &[Vec<f64>], start: usize, remaining: usize, mins: &mut Vec<Vec<f64>>, depth: usize) -> f64 {
        if remaining == 0 {
            return mins[depth].iter().sum::<f64>().exp();
        }
        let mut total = 0.0;
        for j in start..=pts.len() - remaining {
            let (head, tail) = mins.split_at_mut(depth + 1);
            for ((t, h), x) in tail[0].iter_mut().zip(&head[depth]).zip(&pts[j]) {
                *t = h.min(*x);
            }
            total += level(pts, j + 1, remaining - 1, mins, depth + 1);
        }
        total
    }

    let mut sum = 0.0;
    for size in 1..=m {
        let mut mins = vec![vec![f64::INFINITY; dim]; size + 1];
        let term = level(&shifted, 0, size, &mut mins, 0);
        let signed = if size % 2 == 1 { term } else { -term };
        sum += signed;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
    }
    Ok(sum * shift.iter().sum::<f64>().exp())
}

/// Monte Carlo estimate `(value, se)` from `budget` exponential draws.
pub fn ewv_mc(cloud: &PointCloud, budget: u64, stream: RngStream) -> Result<(f64, f64)> {
    if budget < 100 {
        return Err(Error::domain(format!("ewv_mc budget {budget} below 100")));
    }
    let pruned = pareto_prune(cloud);
    let dim = pruned.dim;
    let top: Vec<f64> = (0..dim)
        .map(|i| pruned.points().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let scale = top.iter().sum::<f64>().exp();
    let mut rng = stream.rng();
    let mut w = vec![0.0; dim];
    let mut hits = 0u64;
    for _ in 0..budget {
        for (wi, t) in w.iter_mut().zip(&top) {
            let e: f64 = rng.sample(Exp1);
            *wi = t - e;
        }
        if pruned.points().any(|p| w.iter().zip(p).all(|(wi, pi)| wi < pi)) {
            hits += 1;
        }
    }
    let frac = hits as f64 / budget as f64;
    let se = (frac * (1.0 - frac) / budget as f64).sqrt();
    Ok((scale * frac, scale * se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, ProptestConfig, Strategy};

    fn cloud(points: &[&[f64]]) -> PointCloud {
        PointCloud::from_points(&points.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_cloud(dim: usize, m: usize, seed: u64) -> PointCloud {
        let mut rng = RngStream::new(seed, 0).rng();
        let coords = (0..dim * m)
            .map(|_| Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
            .collect();
        PointCloud::new(dim, coords).unwrap()
    }

    #[test]
    fn hand_values() {
        assert_eq!(ewv_exact(&cloud(&[&[0.0, 0.0]])), 1.0);
        let two = cloud(&[&[0.0, -1.0], &[-1.0, 0.0]]);
        let want = 2.0 * (-1.0f64).exp() - (-2.0f64).exp();
        assert!((ewv_exact(&two) - want).abs() < 1e-15);
        assert!((ewv_inclusion_exclusion(&two).unwrap() - want).abs() < 1e-15);
        assert_eq!(ewv_exact(&cloud(&[&[-2.0], &[0.0], &[-1.0]])), 1.0);
        assert_eq!(ewv_exact(&cloud(&[&[0.0, 0.0, 0.0]])), 1.0);
    }

    #[test]
    fn prune_examples() {
        let p = pareto_prune(&cloud(&[&[0.0, 0.0], &[-1.0, -1.0]]));
        assert_eq!(p.coords(), &[0.0, 0.0]);
        assert_eq!(pareto_prune(&cloud(&[&[0.0, -1.0], &[-1.0, 0.0]])).len(), 2);
        assert_eq!(pareto_prune(&cloud(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 1.0]])).len(), 1);
        assert_eq!(pareto_prune(&cloud(&[&[1.0, 2.0], &[1.0, 1.0], &[0.0, 2.0]])).len(), 1);
    }

    #[test]
    fn huge_coordinates_stay_finite_in_log_space() {
        let c = cloud(&[&[800.0, -800.0], &[-800.0, 800.0]]);
        let ln = ln_ewv(2, c.coords(), &mut EwvScratch::default());
        assert!((ln - std::f64::consts::LN_2).abs() < 1e-12, "{ln}");
    }

    #[test]
    fn slicing_matches_inclusion_exclusion() {
        for (seed, dim, m) in [(1, 2, 30), (2, 3, 40), (3, 4, 25), (4, 5, 15)] {
            let c = random_cloud(dim, m, seed);
            let exact = ewv_exact(&c);
            let ie = ewv_inclusion_exclusion(&c).unwrap();
            assert!((exact / ie - 1.0).abs() < 1e-10, "dim {dim}: {exact} vs {ie}");
        }
    }

    #[test]
    fn inclusion_exclusion_cap() {
        let coords: Vec<f64> = (0..30).flat_map(|k| [k as f64, -(k as f64), 0.0]).collect();
        let c = PointCloud::new(3, coords).unwrap();
        assert!(matches!(ewv_inclusion_exclusion(&c), Err(Error::Capacity(_))));
    }

    #[test]
    fn mc_single_point_is_exact() {
        let c = cloud(&[&[0.5, -0.25]]);
        let (v, se) = ewv_mc(&c, 1000, RngStream::new(5, 0)).unwrap();
        assert_eq!(se, 0.0);
        assert!((v - 0.25f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn mc_two_point_example() {
        let c = cloud(&[&[0.0, -1.0], &[-1.0, 0.0]]);
        let (v, se) = ewv_mc(&c, 100_000, RngStream::new(6, 0)).unwrap();
        assert!((v - 0.60042).abs() < 3.0 * se, "{v} ± {se}");
        assert!(ewv_mc(&c, 99, RngStream::new(6, 0)).is_err());
    }

    #[test]
    fn mc_four_dim_cloud() {
        let c = random_cloud(4, 50, 9);
        let exact = ewv_exact(&c);
        let (v, se) = ewv_mc(&c, 100_000, RngStream::new(7, 0)).unwrap();
        assert!((v - exact).abs() < 3.0 * se, "{v} ± {se} vs {exact}");
    }

    fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
        (1usize..=4).prop_flat_map(|dim| {
            prop::collection::vec(-3.0f64..3.0, dim..=dim * 40).prop_map(move |mut v| {
                v.truncate(v.len() / dim * dim);
                PointCloud::new(dim, v).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn pruning_is_exactly_invariant(c in cloud_strategy()) {
            let pruned = pareto_prune(&c);
            prop_assert_eq!(ewv_exact(&pruned), ewv_exact(&c));
            prop_assert_eq!(pareto_prune(&pruned), pruned.clone());
            for p in c.points() {
                prop_assert!(pruned.points().any(|q| covers(q, p)));
            }
        }

        #[test]
        fn translation_covariance(c in cloud_strategy(), s in prop::collection::vec(-2.0f64..2.0, 4)) {
            let dim = c.dim();
            let shifted: Vec<f64> = c.coords().iter().enumerate().map(|(k, x)| x + s[k % dim]).collect();
            let shifted = PointCloud::new(dim, shifted).unwrap();
            let factor: f64 = s[..dim].iter().sum::<f64>().exp();
            let (a, b) = (ewv_exact(&shifted), factor * ewv_exact(&c));
            prop_assert!((a / b - 1.0).abs() < 1e-12, "{} vs {}", a, b);
        }

        #[test]
        fn adding_a_point_never_decreases(c in cloud_strategy(), extra in prop::collection::vec(-3.0f64..3.0, 4)) {
            let dim = c.dim();
            let mut coords = c.coords().to_vec();
            coords.extend_from_slice(&extra[..dim]);
            let bigger = PointCloud::new(dim, coords).unwrap();
            prop_assert!(ewv_exact(&bigger) >= ewv_exact(&c) * (1.0 - 1e-13));
        }

        #[test]
        fn one_dimension_is_exp_max(v in prop::collection::vec(-5.0f64..5.0, 1..50)) {
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let c = PointCloud::new(1, v).unwrap();
            prop_assert_eq!(ewv_exact(&c), max.exp());
        }
    }
}
