//! Function descriptors for `a(t)` and `σ(t)` profiles.
//!
//! A profile is either a constant or a table of `(node, value)` pairs
//! interpolated by a piecewise-cubic Hermite polynomial. Node slopes are
//! second-order finite differences (one-sided three-point formulas at the
//! ends), so smooth functions are reproduced to `O(h^3)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Constant(f64),
    Table(CubicTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct CubicTable {
    nodes: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawTable> for CubicTable {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        CubicTable::new(raw.nodes, raw.values)
    }
}

impl From<CubicTable> for RawTable {
    fn from(t: CubicTable) -> Self {
        RawTable {
            nodes: t.nodes,
            values: t.values,
        }
    }
}

impl CubicTable {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::domain("profile nodes and values differ in length"));
        }
        if nodes.len() < 2 {
            return Err(Error::domain("profile table needs at least two nodes"));
        }
        if nodes.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::domain("profile table contains non-finite entries"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("profile nodes must be strictly increasing"));
        }
        let slopes = node_slopes(&nodes, &values);
        Ok(Self { nodes, values, slopes })
    }

    /// Tabulates `f` at `count` equally spaced nodes on `[lo, hi]`.
    pub fn sample(f: impl Fn(f64) -> f64, lo: f64, hi: f64, count: usize) -> Result<Self> {
        let count = count.max(2);
        let nodes: Vec<f64> = (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect();
        let values = nodes.iter().map(|&t| f(t)).collect();
        Self::new(nodes, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn locate(&self, t: f64) -> usize {
        let k = self.nodes.partition_point(|&x| x <= t);
        k.clamp(1, self.nodes.len() - 1) - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.locate(t);
        let (x0, x1) = (self.nodes[k], self.nodes[k + 1]);
        let h = x1 - x0;
        let s = (t - x0) / h;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1
    }
}

fn node_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 2 {
        let m = (y[1] - y[0]) / (x[1] - x[0]);
        return vec![m, m];
    }
    // derivative of the quadratic through points (i, j, k) evaluated at x[at]
    let quad = |i: usize, j: usize, k: usize, at: usize| {
        let t = x[at];
        y[i] * ((t - x[j]) + (t - x[k])) / ((x[i] - x[j]) * (x[i] - x[k]))
            + y[j] * ((t - x[i]) + (t - x[k])) / ((x[j] - x[i]) * (x[j] - x[k]))
            + y[k] * ((t - x[i]) + (t - x[j])) / ((x[k] - x[i]) * (x[k] - x[j]))
    };
    (0..n)
        .map(|at| {
            if at == 0 {
                quad(0, 1, 2, 0)
            } else if at == n - 1 {
                quad(n - 3, n - 2, n - 1, n - 1)
            } else {
                quad(at - 1, at, at + 1, at)
            }
        })
        .collect()
}

impl Profile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Profile::Constant(v) => *v,
            Profile::Table(table) => table.eval(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Profile::Constant(_))
    }

    /// Smallest value seen on a fine scan of `[0, horizon]`.
    pub fn min_on(&self, horizon: f64) -> f64 {
        match self {
            Profile::Constant(v) => *v,
            Profile::Table(table) => {
                let steps = 4 * table.nodes.len().max(256);
                (0..=steps)
                    .map(|k| table.eval(horizon * k as f64 / steps as f64))
                    .chain(table.values.iter().copied())
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// `∫_s^t f(x)^p dx` by adaptive Simpson quadrature.
    pub fn integrate_power(&self, p: f64, s: f64, t: f64) -> f64 {
        if let Profile::Constant(v) = self {
            return v.powf(p) * (t - s);
        }
        let f = |x: f64| self.eval(x).max(0.0).powf(p);
        adaptive_simpson(&f, s, t, 1e-13, 40)
    }
}

pub(crate) fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubic_nodes_exactly() {
        let t = CubicTable::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 0.5]).unwrap();
        assert_eq!(t.eval(0.0), 1.0);
        assert_eq!(t.eval(0.5), 2.0);
        assert_eq!(t.eval(1.0), 0.5);
    }

    #[test]
    fn reciprocal_profile_is_accurate() {
        let t = CubicTable::sample(|x| 1.0 / (1.0 + x), 0.0, 1.0, 65).unwrap();
        for k in 0..=200 {
            let x = k as f64 / 200.0;
            assert!((t.eval(x) - 1.0 / (1.0 + x)).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(CubicTable::new(vec![0.0], vec![1.0]).is_err());
        assert!(CubicTable::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(CubicTable::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn deserializes_constant_and_table() {
        let c: Profile = serde_json::from_str("2.5").unwrap();
        assert_eq!(c, Profile::Constant(2.5));
        let t: Profile = serde_json::from_str(r#"{"nodes":[0,1],"values":[1,3]}"#).unwrap();
        assert!((t.eval(0.5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn integrates_power() {
        let p = Profile::Table(CubicTable::sample(|x| 1.0 + x, 0.0, 2.0, 9).unwrap());
        let v = p.integrate_power(2.0, 0.0, 2.0);
        assert!((v - (27.0 - 1.0) / 3.0).abs() < 1e-9);
    }
}
