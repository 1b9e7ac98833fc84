//! Exact Gaussian path simulation on uniform grids.
//!
//! Every replication draws from its own generator (`stream.rng_for(r)`), and
//! within a replication coordinates are generated in order, so a batch is a
//! pure function of `(spec, grid, R, stream)`.

mod cholesky;
mod circulant;

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cholesky::PivotedCholesky;
pub use circulant::{fgn_autocov, CirculantSampler, CirculantScratch, NEGATIVE_TOLERANCE};

use crate::error::{Error, Result};
use crate::process::{validate_spec, CoordinateSpec, VectorProcessSpec};
use crate::rng::RngStream;

/// Largest grid handled by dense factorization.
pub const DENSE_LIMIT: usize = 2048;

const RAW_MAGIC: &[u8; 4] = b"GPB1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub origin: f64,
    pub step: f64,
    pub count: usize,
}

impl SampleGrid {
    pub fn new(origin: f64, step: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::domain("grid needs at least one node"));
        }
        if !(step > 0.0 && step.is_finite()) || !origin.is_finite() {
            return Err(Error::domain(format!("bad grid origin {origin} / step {step}")));
        }
        Ok(Self { origin, step, count })
    }

    /// Grid from `lo` to `hi` (inclusive, rounded to whole steps).
    pub fn covering(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(hi >= lo) {
            return Err(Error::domain(format!("empty interval [{lo}, {hi}]")));
        }
        let steps = ((hi - lo) / step).round() as usize;
        Self::new(lo, step, steps + 1)
    }

    pub fn single(origin: f64) -> Self {
        Self {
            origin,
            step: 1.0,
            count: 1,
        }
    }

    pub fn node(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.step
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|j| self.node(j))
    }

    pub fn end(&self) -> f64 {
        self.node(self.count - 1)
    }
}

/// `R × n × m` values, replication-major then coordinate then node.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub grid: SampleGrid,
    pub n_coords: usize,
    pub replications: usize,
    pub values: Vec<f64>,
}

impl PathBatch {
    pub fn path(&self, r: usize, i: usize) -> &[f64] {
        let m = self.grid.count;
        let start = (r * self.n_coords + i) * m;
        &self.values[start..start + m]
    }

    pub fn replication(&self, r: usize) -> &[f64] {
        let len = self.n_coords * self.grid.count;
        &self.values[r * len..(r + 1) * len]
    }

    /// Values of coordinate `i` at node `j` across replications.
    pub fn marginal(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.replications).map(|r| self.path(r, i)[j]).collect()
    }

    pub fn write_raw(&self, mut w: impl Write) -> Result<()> {
        w.write_all(RAW_MAGIC)?;
        for v in [self.n_coords, self.grid.count, self.replications] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.grid.step.to_le_bytes())?;
        w.write_all(&self.grid.origin.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_raw(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RAW_MAGIC {
            return Err(Error::domain("not a GPB1 path dump"));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let m = u64::from_le_bytes(next(&mut r)?) as usize;
        let reps = u64::from_le_bytes(next(&mut r)?) as usize;
        let step = f64::from_le_bytes(next(&mut r)?);
        let origin = f64::from_le_bytes(next(&mut r)?);
        let grid = SampleGrid::new(origin, step, m)?;
        let total = n
            .checked_mul(m)
            .and_then(|x| x.checked_mul(reps))
            .ok_or_else(|| Error::domain("path dump header overflows"))?;
        let mut values = Vec::with_capacity(total);
        for _ in 0..total {
            values.push(f64::from_le_bytes(next(&mut r)?));
        }
        Ok(Self {
            grid,
            n_coords: n,
            replications: reps,
            values,
        })
    }
}

/// Scratch buffers reused across replications by one worker.
#[derive(Debug, Default)]
pub struct SamplerScratch {
    circulant: CirculantScratch,
    normals: Vec<f64>,
    walk: Vec<f64>,
}

#[derive(Debug)]
struct FbmPlan {
    kappa: f64,
    /// `δ^{κ/2}`.
    scale: f64,
    /// Circulant plan for the unit-step noise; `None` on the κ ∈ {1, 2} fast paths.
    noise: Option<CirculantSampler>,
    /// Walk index of each grid node and of time zero.
    first: usize,
    zero: usize,
    walk_len: usize,
}

#[derive(Debug)]
enum Kind {
    Ar1 { rho: f64, innovation: f64 },
    VariableAr1 { rho: Vec<f64>, innovation: Vec<f64> },
    Circulant(CirculantSampler),
    Dense(PivotedCholesky),
    Fbm(FbmPlan),
}

/// Prepared sampler for one coordinate on one grid.
#[derive(Debug)]
pub struct CoordinateSampler {
    kind: Kind,
    len: usize,
    std_dev: Option<Vec<f64>>,
}

impl CoordinateSampler {
    pub fn new(coord: &CoordinateSpec, grid: &SampleGrid) -> Result<Self> {
        let m = grid.count;
        let (kind, std_dev) = match coord {
            CoordinateSpec::Stationary { a, kappa } => (stationary_kind(*a, *kappa, grid)?, None),
            CoordinateSpec::NonStationary(ns) => {
                let sd = grid.nodes().map(|t| ns.sigma_profile.eval(t)).collect();
                (stationary_kind(ns.a, ns.alpha, grid)?, Some(sd))
            }
            CoordinateSpec::LocallyStationary { a_profile, kappa } => {
                if *kappa == 1.0 {
                    let (rho, innovation) = (1..m)
                        .map(|j| {
                            let clock = CoordinateSpec::clock_increment(a_profile, 1.0, grid.node(j - 1), grid.node(j));
                            let rho = (-clock).exp();
                            (rho, (1.0 - rho * rho).sqrt())
                        })
                        .unzip();
                    (Kind::VariableAr1 { rho, innovation }, None)
                } else if m <= DENSE_LIMIT {
                    let cov = covariance_matrix(coord, grid);
                    (Kind::Dense(PivotedCholesky::new(&cov, m)?), None)
                } else {
                    return Err(Error::Unsupported(format!(
                        "locally stationary coordinate with kappa {kappa} on {m} nodes \
                         (dense limit {DENSE_LIMIT})"
                    )));
                }
            }
            CoordinateSpec::Fbm { kappa } => (Kind::Fbm(fbm_plan(*kappa, grid)?), None),
        };
        Ok(Self { kind, len: m, std_dev })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Writes one path into `out[..len]`.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], scratch: &mut SamplerScratch) {
        let out = &mut out[..self.len];
        match &self.kind {
            Kind::Ar1 { rho, innovation } => {
                let mut x: f64 = rng.sample(StandardNormal);
                out[0] = x;
                for o in &mut out[1..] {
                    let z: f64 = rng.sample(StandardNormal);
                    x = rho * x + innovation * z;
                    *o = x;
                }
            }
            Kind::VariableAr1 { rho, innovation } => {
                let mut x: f64 = rng.sample(StandardNormal);
                out[0] = x;
                for ((o, r), s) in out[1..].iter_mut().zip(rho).zip(innovation) {
                    let z: f64 = rng.sample(StandardNormal);
                    x = r * x + s * z;
                    *o = x;
                }
            }
            Kind::Circulant(c) => c.fill(rng, out, &mut scratch.circulant),
            Kind::Dense(f) => f.fill(rng, out, &mut scratch.normals),
            Kind::Fbm(plan) => fill_fbm(plan, rng, out, scratch),
        }
        if let Some(sd) = &self.std_dev {
            for (o, s) in out.iter_mut().zip(sd) {
                *o *= s;
            }
        }
    }
}

fn stationary_kind(a: f64, kappa: f64, grid: &SampleGrid) -> Result<Kind> {
    let delta = grid.step;
    if kappa == 1.0 {
        let rho = (-a * delta).exp();
        return Ok(Kind::Ar1 {
            rho,
            innovation: (1.0 - rho * rho).sqrt(),
        });
    }
    let cov = |lag: usize| (-a * (lag as f64 * delta).powf(kappa)).exp();
    match CirculantSampler::new(grid.count, cov) {
        Ok(c) => Ok(Kind::Circulant(c)),
        Err(Error::EmbeddingFailure { min_eigen, max_eigen }) if grid.count <= DENSE_LIMIT => {
            log::warn!(
                "circulant embedding failed (min {min_eigen:e}, max {max_eigen:e}); \
                 using dense factorization on {} nodes",
                grid.count
            );
            let m = grid.count;
            let mut dense = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    dense[i * m + j] = cov(i.abs_diff(j));
                }
            }
            Ok(Kind::Dense(PivotedCholesky::new(&dense, m)?))
        }
        Err(e) => Err(e),
    }
}

fn fbm_plan(kappa: f64, grid: &SampleGrid) -> Result<FbmPlan> {
    let offset = grid.origin / grid.step;
    let k0 = offset.round();
    if (offset - k0).abs() > 1e-9 * (1.0 + k0.abs()) {
        return Err(Error::domain(format!(
            "fBm grid origin {} is not a whole number of steps {} from zero",
            grid.origin, grid.step
        )));
    }
    let k0 = k0 as i64;
    let last = k0 + grid.count as i64 - 1;
    let lo = k0.min(0);
    let hi = last.max(0);
    let walk_len = (hi - lo + 1) as usize;
    let noise = if kappa == 1.0 || kappa == 2.0 || walk_len < 2 {
        None
    } else {
        Some(CirculantSampler::new(walk_len - 1, |lag| fgn_autocov(kappa, lag))?)
    };
    Ok(FbmPlan {
        kappa,
        scale: grid.step.powf(0.5 * kappa),
        noise,
        first: (k0 - lo) as usize,
        zero: (-lo) as usize,
        walk_len,
    })
}

fn fill_fbm<R: Rng + ?Sized>(plan: &FbmPlan, rng: &mut R, out: &mut [f64], scratch: &mut SamplerScratch) {
    let m = out.len();
    if plan.kappa == 2.0 {
        let xi: f64 = rng.sample(StandardNormal);
        let slope = plan.scale * xi;
        for (j, o) in out.iter_mut().enumerate() {
            *o = (plan.first + j) as f64 * slope - plan.zero as f64 * slope;
        }
        return;
    }
    let walk = &mut scratch.walk;
    walk.resize(plan.walk_len, 0.0);
    walk[0] = 0.0;
    match &plan.noise {
        Some(noise) => {
            let (head, tail) = walk.split_at_mut(1);
            noise.fill(rng, tail, &mut scratch.circulant);
            let mut acc = head[0];
            for w in tail.iter_mut() {
                acc += plan.scale * *w;
                *w = acc;
            }
        }
        None => {
            let mut acc = 0.0;
            for w in walk[1..].iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                acc += plan.scale * z;
                *w = acc;
            }
        }
    }
    let base = walk[plan.zero];
    for (o, w) in out.iter_mut().zip(&walk[plan.first..plan.first + m]) {
        *o = w - base;
    }
}

/// Dense covariance of `coord` on `grid`, row-major.
pub fn covariance_matrix(coord: &CoordinateSpec, grid: &SampleGrid) -> Vec<f64> {
    let m = grid.count;
    let mut cov = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let c = coord.covariance_unchecked(grid.node(i), grid.node(j));
            cov[i * m + j] = c;
            cov[j * m + i] = c;
        }
    }
    cov
}

/// Samplers for all coordinates of a spec on one grid.
#[derive(Debug)]
pub struct VectorSampler {
    grid: SampleGrid,
    coords: Vec<CoordinateSampler>,
}

impl VectorSampler {
    pub fn new(spec: &VectorProcessSpec, grid: &SampleGrid) -> Result<Self> {
        validate_spec(spec).into_result()?;
        let horizon = spec.horizon_t;
        let needs_horizon = spec.coords.iter().any(|c| {
            matches!(
                c,
                CoordinateSpec::LocallyStationary { .. } | CoordinateSpec::NonStationary(_)
            )
        });
        if needs_horizon {
            let tol = 1e-9 * horizon.max(1.0);
            if grid.origin < -tol || grid.end() > horizon + tol {
                return Err(Error::domain(format!(
                    "grid [{}, {}] leaves [0, {horizon}]",
                    grid.origin,
                    grid.end()
                )));
            }
        }
        let coords = spec
            .coords
            .iter()
            .map(|c| CoordinateSampler::new(c, grid))
            .collect::<Result<_>>()?;
        Ok(Self { grid: *grid, coords })
    }

    pub fn from_coordinates(grid: &SampleGrid, coords: Vec<CoordinateSampler>) -> Self {
        Self { grid: *grid, coords }
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coordinate(&self, i: usize) -> &CoordinateSampler {
        &self.coords[i]
    }

    /// Fills `out` (`n × m`, coordinate-major) with one replication.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], scratch: &mut SamplerScratch) {
        let m = self.grid.count;
        for (c, chunk) in self.coords.iter().zip(out.chunks_mut(m)) {
            c.fill(rng, chunk, scratch);
        }
    }

    /// Batch of `replications` paths; replication `r` uses `stream.rng_for(r)`.
    pub fn batch(&self, replications: usize, stream: RngStream) -> PathBatch {
        let len = self.dim() * self.grid.count;
        let mut values = vec![0.0; len * replications];
        if len > 0 {
            values
                .par_chunks_mut(len)
                .enumerate()
                .for_each_init(SamplerScratch::default, |scratch, (r, chunk)| {
                    let mut rng = stream.rng_for(r as u64);
                    self.fill(&mut rng, chunk, scratch);
                });
        }
        PathBatch {
            grid: self.grid,
            n_coords: self.dim(),
            replications,
            values,
        }
    }
}

/// Standard fBm with Hurst index `κ/2` on a grid starting at zero.
pub fn sample_fbm(kappa: f64, grid: &SampleGrid, replications: usize, stream: RngStream) -> Result<PathBatch> {
    if !(kappa > 0.0 && kappa <= 2.0) {
        return Err(Error::domain(format!("kappa = {kappa} not in (0,2]")));
    }
    if grid.origin != 0.0 {
        return Err(Error::domain("sample_fbm needs a grid starting at 0"));
    }
    let sampler = CoordinateSampler::new(&CoordinateSpec::Fbm { kappa }, grid)?;
    Ok(VectorSampler::from_coordinates(grid, vec![sampler]).batch(replications, stream))
}

pub fn sample_vector(
    spec: &VectorProcessSpec,
    grid: &SampleGrid,
    replications: usize,
    stream: RngStream,
) -> Result<PathBatch> {
    Ok(VectorSampler::new(spec, grid)?.batch(replications, stream))
}

/// Reference sampler: pivoted factorization of an explicit `dim × dim` matrix.
pub fn sample_cholesky_oracle(cov: &[f64], dim: usize, replications: usize, stream: RngStream) -> Result<PathBatch> {
    let factor = PivotedCholesky::new(cov, dim)?;
    let grid = SampleGrid::new(0.0, 1.0, dim)?;
    let sampler = CoordinateSampler {
        kind: Kind::Dense(factor),
        len: dim,
        std_dev: None,
    };
    Ok(VectorSampler::from_coordinates(&grid, vec![sampler]).batch(replications, stream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{CubicTable, Profile};
    use crate::stats::MeanVar;

    fn stream() -> RngStream {
        RngStream::new(11, 0)
    }

    #[test]
    fn fbm_kappa_two_is_linear() {
        let grid = SampleGrid::new(0.0, 0.25, 5).unwrap();
        let batch = sample_fbm(2.0, &grid, 2000, stream()).unwrap();
        let mut var = MeanVar::default();
        for r in 0..batch.replications {
            let p = batch.path(r, 0);
            assert_eq!(p[0], 0.0);
            let xi = p[4];
            for (j, v) in p.iter().enumerate() {
                assert!((v - grid.node(j) * xi).abs() < 1e-14);
            }
            var.push(xi * xi);
        }
        assert!((var.mean - 1.0).abs() < 3.0 * var.std_error());
    }

    #[test]
    fn brownian_increments_uncorrelated() {
        let grid = SampleGrid::new(0.0, 0.125, 9).unwrap();
        let batch = sample_fbm(1.0, &grid, 20_000, stream()).unwrap();
        let mut prod = MeanVar::default();
        for r in 0..batch.replications {
            let p = batch.path(r, 0);
            prod.push((p[2] - p[1]) * (p[1] - p[0]) / 0.125);
        }
        assert!(prod.mean.abs() < 3.0 * prod.std_error(), "{prod:?}");
    }

    #[test]
    fn fbm_variance_at_one() {
        let grid = SampleGrid::new(0.0, 1.0 / 64.0, 65).unwrap();
        let batch = sample_fbm(1.5, &grid, 20_000, stream()).unwrap();
        let mut v = MeanVar::default();
        for r in 0..batch.replications {
            let x = batch.path(r, 0)[64];
            assert_eq!(batch.path(r, 0)[0], 0.0);
            v.push(x * x);
        }
        assert!((v.mean - 1.0).abs() < 3.0 * v.std_error(), "{v:?}");
    }

    #[test]
    fn two_sided_fbm_has_fbm_covariance() {
        let kappa = 0.8;
        let grid = SampleGrid::new(-0.5, 0.125, 9).unwrap();
        let coord = CoordinateSpec::Fbm { kappa };
        let sampler = CoordinateSampler::new(&coord, &grid).unwrap();
        let batch = VectorSampler::from_coordinates(&grid, vec![sampler]).batch(40_000, stream());
        for &(i, j) in &[(0, 8), (1, 3), (4, 4), (6, 8)] {
            let mut prod = MeanVar::default();
            for r in 0..batch.replications {
                let p = batch.path(r, 0);
                prod.push(p[i] * p[j]);
            }
            let want = coord.covariance_unchecked(grid.node(i), grid.node(j));
            assert!((prod.mean - want).abs() < 4.0 * prod.std_error() + 1e-12, "{i},{j}");
        }
        assert!(batch.marginal(0, 4).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_node_vector_is_standard_normal() {
        let spec = VectorProcessSpec::new(
            vec![
                CoordinateSpec::stationary(1.0, 1.0),
                CoordinateSpec::stationary(2.0, 0.5),
            ],
            1.0,
        );
        let batch = sample_vector(&spec, &SampleGrid::single(0.0), 20_000, stream()).unwrap();
        let (mut m0, mut m1, mut cross) = (MeanVar::default(), MeanVar::default(), MeanVar::default());
        for r in 0..batch.replications {
            let x = batch.replication(r);
            m0.push(x[0]);
            m1.push(x[1] * x[1]);
            cross.push(x[0] * x[1]);
        }
        assert!(m0.mean.abs() < 3.0 * m0.std_error());
        assert!((m1.mean - 1.0).abs() < 3.0 * m1.std_error());
        assert!(cross.mean.abs() < 3.0 * cross.std_error());
    }

    #[test]
    fn ou_lag_correlation() {
        let delta = 0.1;
        let spec = VectorProcessSpec::new(vec![CoordinateSpec::stationary(1.0, 1.0)], 1.0);
        let grid = SampleGrid::new(0.0, delta, 2).unwrap();
        let batch = sample_vector(&spec, &grid, 50_000, stream()).unwrap();
        let mut prod = MeanVar::default();
        for r in 0..batch.replications {
            let p = batch.path(r, 0);
            prod.push(p[0] * p[1]);
        }
        assert!(((prod.mean - (-delta).exp()) / prod.std_error()).abs() < 3.0);
    }

    #[test]
    fn non_stationary_variance_follows_sigma() {
        let sigma = Profile::Table(CubicTable::sample(|t| 1.0 / (1.0 + t), 0.0, 1.0, 129).unwrap());
        let coord = CoordinateSpec::NonStationary(crate::process::NonStationaryCoord {
            sigma_profile: sigma.clone(),
            alpha: 1.5,
            a: 1.0,
            beta: 1.0,
            b_lower: 0.0,
            b_upper: 1.0,
            holder_g: 1.0,
            holder_gamma: 1.0,
            holder_rho: 0.5,
        });
        let spec = VectorProcessSpec::new(vec![coord], 1.0);
        let grid = SampleGrid::new(0.0, 1.0 / 32.0, 33).unwrap();
        let batch = sample_vector(&spec, &grid, 20_000, stream()).unwrap();
        for j in [0, 8, 16, 24, 32] {
            let mut v = MeanVar::default();
            for x in batch.marginal(0, j) {
                v.push(x * x);
            }
            let want = sigma.eval(grid.node(j)).powi(2);
            assert!((v.mean - want).abs() < 3.0 * v.std_error(), "node {j}: {v:?} vs {want}");
        }
    }

    #[test]
    fn locally_stationary_ar_matches_dense() {
        let a_profile = Profile::Table(CubicTable::sample(|t| 1.0 + t, 0.0, 1.0, 17).unwrap());
        let coord = CoordinateSpec::LocallyStationary { a_profile, kappa: 1.0 };
        let grid = SampleGrid::new(0.0, 1.0 / 16.0, 17).unwrap();
        let sampler = CoordinateSampler::new(&coord, &grid).unwrap();
        assert!(matches!(sampler.kind, Kind::VariableAr1 { .. }));
        let batch = VectorSampler::from_coordinates(&grid, vec![sampler]).batch(40_000, stream());
        for &(i, j) in &[(0, 1), (3, 9), (10, 16)] {
            let mut prod = MeanVar::default();
            for r in 0..batch.replications {
                let p = batch.path(r, 0);
                prod.push(p[i] * p[j]);
            }
            let want = coord.correlation_unchecked(grid.node(i), grid.node(j));
            assert!((prod.mean - want).abs() < 4.0 * prod.std_error(), "{i},{j}");
        }
    }

    #[test]
    fn locally_stationary_large_grid_unsupported() {
        let coord = CoordinateSpec::LocallyStationary {
            a_profile: Profile::Constant(1.0),
            kappa: 1.5,
        };
        let grid = SampleGrid::new(0.0, 1.0 / 4096.0, 4097).unwrap();
        assert!(matches!(
            CoordinateSampler::new(&coord, &grid),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn oracle_identity_and_rank_one() {
        let batch = sample_cholesky_oracle(&[1.0, 0.0, 0.0, 1.0], 2, 20_000, stream()).unwrap();
        let mut cross = MeanVar::default();
        for r in 0..batch.replications {
            let p = batch.path(r, 0);
            cross.push(p[0] * p[1]);
        }
        assert!(cross.mean.abs() < 3.0 * cross.std_error());

        let batch = sample_cholesky_oracle(&[1.0; 4], 2, 100, stream()).unwrap();
        for r in 0..batch.replications {
            let p = batch.path(r, 0);
            assert_eq!(p[0], p[1]);
        }
        assert!(sample_cholesky_oracle(&[1.0, 2.0, 2.0, 1.0], 2, 10, stream()).is_err());
    }

    #[test]
    fn batches_are_deterministic() {
        let spec = VectorProcessSpec::new(
            vec![CoordinateSpec::stationary(1.0, 1.5), CoordinateSpec::Fbm { kappa: 0.6 }],
            1.0,
        );
        let grid = SampleGrid::new(0.0, 1.0 / 32.0, 33).unwrap();
        let a = sample_vector(&spec, &grid, 300, stream()).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| sample_vector(&spec, &grid, 300, stream()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn raw_dump_round_trips() {
        let grid = SampleGrid::new(0.0, 0.5, 3).unwrap();
        let batch = sample_fbm(1.2, &grid, 4, stream()).unwrap();
        let mut bytes = Vec::new();
        batch.write_raw(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"GPB1");
        assert_eq!(bytes.len(), 4 + 5 * 8 + 12 * 8);
        assert_eq!(PathBatch::read_raw(bytes.as_slice()).unwrap(), batch);
        assert!(PathBatch::read_raw(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn grid_helpers() {
        let g = SampleGrid::covering(0.0, 1.0, 1.0 / 1024.0).unwrap();
        assert_eq!(g.count, 1025);
        assert!((g.end() - 1.0).abs() < 1e-12);
        assert!(SampleGrid::new(0.0, 0.0, 3).is_err());
        assert!(SampleGrid::new(0.0, 1.0, 0).is_err());
    }
}
