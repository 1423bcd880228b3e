use serde::Serialize;

use super::{DensityField, Grid};
use crate::error::{Error, Result};

/// Entropic regularization used for D > 1, as a fraction of the domain diameter.
pub const SINKHORN_REG_FRACTION: f64 = 0.01;

const SINKHORN_MAX_ITERS: usize = 20_000;
const SINKHORN_TOL: f64 = 1e-10;

/// A 1-Wasserstein distance together with how it was computed.
///
/// `regularization` is `None` for the exact one-dimensional path and holds the
/// entropic strength otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct W1 {
    pub value: f64,
    pub regularization: Option<f64>,
}

/// Weighted point cloud in R^D, e.g. pooled particle positions.
#[derive(Clone, Debug)]
pub struct WeightedSamples {
    pub dimension: usize,
    /// Flat coordinates, `dimension` per point.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedSamples {
    /// Equal-weight cloud.
    pub fn uniform(dimension: usize, points: Vec<f64>) -> Self {
        let n = points.len() / dimension.max(1);
        WeightedSamples {
            dimension,
            points,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Bin onto the cells of `grid`, returning normalized cell masses.
    pub fn bin(&self, grid: &Grid) -> Result<Vec<f64>> {
        let mut masses = vec![0.0; grid.len()];
        let total: f64 = self.weights.iter().sum();
        for (q, w) in self.points.chunks_exact(self.dimension).zip(&self.weights) {
            let cell = grid
                .cell_of(q)
                .ok_or_else(|| Error::contract(format!("sample {q:?} lies outside the grid")))?;
            masses[cell] += w / total;
        }
        Ok(masses)
    }
}

/// W1 between two densities on the same grid.
///
/// D = 1 is exact (cell masses treated as atoms at the nodes); D > 1 uses
/// log-domain Sinkhorn with strength 0.01 × diameter.
pub fn w1_distance(a: &DensityField, b: &DensityField) -> Result<W1> {
    if a.grid() != b.grid() && **a.grid() != **b.grid() {
        return Err(Error::contract("w1_distance: densities live on different grids"));
    }
    let grid = a.grid();
    if grid.dimension() == 1 {
        let xs: Vec<f64> = grid.nodes().map(|q| q[0]).collect();
        let value = w1_atoms_1d(&xs, &a.masses(), &xs, &b.masses());
        return Ok(W1 { value, regularization: None });
    }
    sinkhorn_on_grid(grid, &a.masses(), &b.masses())
}

/// W1 between a weighted sample set and a density.
///
/// In D = 1 the samples are used at their exact positions; in D > 1 they are
/// binned onto the density's grid first.
pub fn w1_samples(a: &WeightedSamples, b: &DensityField) -> Result<W1> {
    let grid = b.grid();
    if a.dimension != grid.dimension() {
        return Err(Error::contract("w1_samples: sample dimension differs from the grid"));
    }
    if a.is_empty() {
        return Err(Error::contract("w1_samples: empty sample set"));
    }
    if grid.dimension() == 1 {
        if a.points.iter().any(|&x| !grid.contains(&[x])) {
            return Err(Error::contract("w1_samples: sample outside the domain"));
        }
        let total: f64 = a.weights.iter().sum();
        let mut pairs: Vec<(f64, f64)> =
            a.points.iter().zip(&a.weights).map(|(&x, &w)| (x, w / total)).collect();
        pairs.sort_by(|l, r| l.0.total_cmp(&r.0));
        let (xa, wa): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let xb: Vec<f64> = grid.nodes().map(|q| q[0]).collect();
        let value = w1_atoms_1d(&xa, &wa, &xb, &b.masses());
        return Ok(W1 { value, regularization: None });
    }
    sinkhorn_on_grid(grid, &a.bin(grid)?, &b.masses())
}

/// Exact W1 between two atomic measures on the line, ∫|F_a − F_b| dx.
/// Both position lists must be sorted ascending.
pub fn w1_atoms_1d(xa: &[f64], wa: &[f64], xb: &[f64], wb: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut last: Option<f64> = None;
    let mut acc = 0.0;
    while i < xa.len() || j < xb.len() {
        let x = match (xa.get(i), xb.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        if let Some(prev) = last {
            acc += (fa - fb).abs() * (x - prev);
        }
        while i < xa.len() && xa[i] == x {
            fa += wa[i];
            i += 1;
        }
        while j < xb.len() && xb[j] == x {
            fb += wb[j];
            j += 1;
        }
        last = Some(x);
    }
    acc
}

fn sinkhorn_on_grid(grid: &Grid, a: &[f64], b: &[f64]) -> Result<W1> {
    let reg = SINKHORN_REG_FRACTION * grid.diameter();
    let nodes: Vec<&[f64]> = grid.nodes().collect();
    // Drop empty cells: they carry no mass and only slow the iteration down.
    let ia: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let ib: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let cost: Vec<Vec<f64>> = ia
        .iter()
        .map(|&i| ib.iter().map(|&j| euclid(nodes[i], nodes[j])).collect())
        .collect();
    let la: Vec<f64> = ia.iter().map(|&i| a[i].ln()).collect();
    let lb: Vec<f64> = ib.iter().map(|&j| b[j].ln()).collect();
    let mut f = vec![0.0; ia.len()];
    let mut g = vec![0.0; ib.len()];

    for _ in 0..SINKHORN_MAX_ITERS {
        for (r, fr) in f.iter_mut().enumerate() {
            *fr = -reg * lse(ib.len(), |c| (g[c] - cost[r][c]) / reg + lb[c]);
        }
        let mut err = 0.0f64;
        for (c, gc) in g.iter_mut().enumerate() {
            *gc = -reg * lse(ia.len(), |r| (f[r] - cost[r][c]) / reg + la[r]);
        }
        // Row marginals after the column update measure the remaining violation.
        for (r, row) in cost.iter().enumerate() {
            let m: f64 = (0..ib.len())
                .map(|c| ((f[r] + g[c] - row[c]) / reg + la[r] + lb[c]).exp())
                .sum();
            err = err.max((m - a[ia[r]]).abs());
        }
        if err < SINKHORN_TOL {
            break;
        }
    }
    let mut value = 0.0;
    for (r, row) in cost.iter().enumerate() {
        for (c, &k) in row.iter().enumerate() {
            value += k * ((f[r] + g[c] - k) / reg + la[r] + lb[c]).exp();
        }
    }
    Ok(W1 { value, regularization: Some(reg) })
}

fn lse(n: usize, term: impl Fn(usize) -> f64) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for k in 0..n {
        m = m.max(term(k));
    }
    m + (0..n).map(|k| (term(k) - m).exp()).sum::<f64>().ln()
}

fn euclid(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, uniform_density};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn line(cells: usize) -> Arc<Grid> {
        Arc::new(build_grid(1, &[[0.0, 1.0]], cells).unwrap())
    }

    // Quantile-function oracle: W1 = ∫_0^1 |F_a^{-1}(t) − F_b^{-1}(t)| dt.
    fn quantile_oracle(xs: &[f64], wa: &[f64], wb: &[f64]) -> f64 {
        let mut cuts: Vec<f64> = Vec::new();
        let (mut ca, mut cb) = (0.0, 0.0);
        for k in 0..xs.len() {
            ca += wa[k];
            cb += wb[k];
            cuts.push(ca.min(1.0));
            cuts.push(cb.min(1.0));
        }
        cuts.push(0.0);
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        let q = |w: &[f64], t: f64| {
            let mut c = 0.0;
            for (k, &m) in w.iter().enumerate() {
                c += m;
                if c >= t {
                    return xs[k];
                }
            }
            xs[xs.len() - 1]
        };
        let mut acc = 0.0;
        for win in cuts.windows(2) {
            let (t0, t1) = (win[0], win[1]);
            if t1 > t0 {
                let t = 0.5 * (t0 + t1);
                acc += (q(wa, t) - q(wb, t)).abs() * (t1 - t0);
            }
        }
        acc
    }

    #[test]
    fn identical_densities_are_at_distance_zero() {
        let g = line(16);
        let u = uniform_density(g);
        assert_eq!(w1_distance(&u, &u).unwrap().value, 0.0);
    }

    #[test]
    fn point_masses_at_the_ends() {
        let g = line(64);
        let mut a = vec![0.0; 64];
        a[0] = 1.0;
        let mut b = vec![0.0; 64];
        b[63] = 1.0;
        let a = DensityField::from_masses(g.clone(), &a).unwrap();
        let b = DensityField::from_masses(g, &b).unwrap();
        let d = w1_distance(&a, &b).unwrap();
        assert!((d.value - 1.0).abs() <= 1.0 / 64.0);
        assert_eq!(d.regularization, None);
    }

    #[test]
    fn mismatched_grids_are_refused() {
        let a = uniform_density(line(8));
        let b = uniform_density(line(16));
        assert!(matches!(w1_distance(&a, &b), Err(Error::Contract(_))));
    }

    #[test]
    fn two_dimensional_reports_regularization() {
        let g = Arc::new(build_grid(2, &[[0.0, 1.0], [0.0, 1.0]], 6).unwrap());
        let mut m = vec![0.0; g.len()];
        m[0] = 1.0;
        let a = DensityField::from_masses(g.clone(), &m).unwrap();
        let mut m = vec![0.0; g.len()];
        m[g.len() - 1] = 1.0;
        let b = DensityField::from_masses(g.clone(), &m).unwrap();
        let d = w1_distance(&a, &b).unwrap();
        let exact = euclid(g.node(0), g.node(g.len() - 1));
        assert!((d.value - exact).abs() < 1e-9);
        assert!((d.regularization.unwrap() - 0.01 * 2f64.sqrt()).abs() < 1e-15);
        let u = uniform_density(g);
        assert!(w1_distance(&u, &u).unwrap().value < 0.05);
    }

    #[test]
    fn samples_at_nodes_match_density_path() {
        let g = line(10);
        let xs: Vec<f64> = g.nodes().map(|q| q[0]).collect();
        let s = WeightedSamples::uniform(1, xs);
        let u = uniform_density(g);
        assert!(w1_samples(&s, &u).unwrap().value < 1e-15);
    }

    fn hist(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().map(|x| x + 1e-3).sum();
            v.into_iter().map(|x| (x + 1e-3) / s).collect()
        })
    }

    proptest! {
        #[test]
        fn matches_quantile_oracle(a in hist(12), b in hist(12)) {
            let g = line(12);
            let xs: Vec<f64> = g.nodes().map(|q| q[0]).collect();
            let da = DensityField::from_masses(g.clone(), &a).unwrap();
            let db = DensityField::from_masses(g, &b).unwrap();
            let d = w1_distance(&da, &db).unwrap().value;
            let o = quantile_oracle(&xs, &da.masses(), &db.masses());
            prop_assert!((d - o).abs() <= 1e-10, "{d} vs {o}");
        }

        #[test]
        fn symmetric_and_triangle(a in hist(12), b in hist(12), c in hist(12)) {
            let g = line(12);
            let da = DensityField::from_masses(g.clone(), &a).unwrap();
            let db = DensityField::from_masses(g.clone(), &b).unwrap();
            let dc = DensityField::from_masses(g, &c).unwrap();
            let ab = w1_distance(&da, &db).unwrap().value;
            let ba = w1_distance(&db, &da).unwrap().value;
            let bc = w1_distance(&db, &dc).unwrap().value;
            let ac = w1_distance(&da, &dc).unwrap().value;
            prop_assert!((ab - ba).abs() <= 1e-14);
            prop_assert!(ac <= ab + bc + 1e-14);
        }

        #[test]
        fn refinement_keeps_total_volume(cells in 2usize..200, hi in 0.1f64..10.0) {
            let g = build_grid(1, &[[0.0, hi]], cells).unwrap();
            let s: f64 = g.weights().iter().sum();
            prop_assert!((s - hi).abs() <= 1e-12 * hi);
        }
    }
}
