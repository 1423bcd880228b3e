use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::{PairPotential, PotentialKind};
use crate::domain::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Verdict {
    fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    /// Symmetry, exact on every grid pair.
    pub h1: Verdict,
    /// Lower semi-continuity (from kind metadata).
    pub h2: Verdict,
    /// Sublevel-set regularity (from kind metadata).
    pub h3: Verdict,
    /// Local square integrability, from the trend of sub-cell U² integrals.
    pub h4: Verdict,
    /// Confinement: enforced by the box, so always satisfied.
    pub h5: Verdict,
    /// Continuity (from kind metadata).
    pub h6: Verdict,
    /// min over grid pairs ≥ 0.
    pub nonnegative: Verdict,
    pub min_pair_value: f64,
    /// PSD on mean-zero vectors: analytic where known, numeric for tables.
    pub psd: Verdict,
    /// ∫_{B_h(q)} U(q,·)² at successively finer sub-cell resolutions.
    pub h4_trend: Vec<f64>,
    pub notes: Vec<String>,
}

/// Report which hypotheses hold, checking numerically what can be checked on
/// the grid and taking the rest from analytic knowledge of the kernel kind.
pub fn check_hypotheses(pot: &PairPotential, grid: &Grid) -> HypothesisReport {
    let mut notes = Vec::new();
    if let Err(e) = pot.validate_for(grid) {
        notes.push(e.to_string());
        let i = Verdict::Indeterminate;
        return HypothesisReport {
            h1: i,
            h2: i,
            h3: i,
            h4: i,
            h5: i,
            h6: i,
            nonnegative: i,
            min_pair_value: f64::NAN,
            psd: i,
            h4_trend: Vec::new(),
            notes,
        };
    }

    let n = grid.len();
    let mut symmetric = true;
    let mut min = f64::INFINITY;
    for i in 0..n {
        for j in i..n {
            let a = pot.pair(grid.node(i), grid.node(j));
            let b = pot.pair(grid.node(j), grid.node(i));
            symmetric &= a == b;
            min = min.min(a).min(b);
        }
    }

    let tabulated = matches!(pot.kind(), PotentialKind::Tabulated);
    let meta = |analytic: bool| {
        if tabulated {
            Verdict::Indeterminate
        } else {
            Verdict::from_bool(analytic)
        }
    };
    if tabulated {
        notes.push("H2, H3 and H6 cannot be decided from a finite table".into());
    }
    let continuous = !matches!(pot.kind(), PotentialKind::AmendedCoulomb { .. });

    let (h4, h4_trend) = h4_trend(pot, grid);

    let psd = match pot.is_psd() {
        Some(b) => Verdict::from_bool(b),
        None if n <= 1024 => Verdict::from_bool(numeric_psd(pot, grid)),
        None => Verdict::Indeterminate,
    };

    HypothesisReport {
        h1: Verdict::from_bool(symmetric),
        // Every built-in kind is l.s.c.; +∞ at coincidence is allowed.
        h2: meta(true),
        h3: meta(true),
        h4,
        h5: Verdict::Pass,
        h6: meta(continuous),
        nonnegative: Verdict::from_bool(min >= 0.0),
        min_pair_value: min,
        psd,
        h4_trend,
        notes,
    }
}

// Midpoint sums of U(q,·)² over the ball of radius one cell around a probe
// node, refining the sub-grid each level. A convergent sequence suggests
// local square integrability; growing increments suggest divergence.
fn h4_trend(pot: &PairPotential, grid: &Grid) -> (Verdict, Vec<f64>) {
    let d = grid.dimension();
    let h = grid.spacing().iter().copied().fold(0.0, f64::max);
    let levels: &[usize] = match d {
        1 => &[2, 4, 8, 16, 32, 64],
        2 => &[2, 4, 8, 16, 32],
        _ => &[2, 4, 8, 16],
    };
    let centre = grid.centroid();
    let probe = (0..grid.len())
        .min_by(|&a, &b| {
            super::distance(grid.node(a), &centre).total_cmp(&super::distance(grid.node(b), &centre))
        })
        .unwrap_or(0);
    let q = grid.node(probe);

    let mut trend = Vec::new();
    for &m in levels {
        let step = h / m as f64;
        let per_axis = 2 * m;
        let total = per_axis.pow(d as u32);
        let mut acc = 0.0;
        let mut s = vec![0.0; d];
        for flat in 0..total {
            let mut rem = flat;
            for (axis, x) in s.iter_mut().enumerate() {
                let k = rem % per_axis;
                rem /= per_axis;
                *x = q[axis] - h + (k as f64 + 0.5) * step;
            }
            if super::distance(q, &s) > h || !grid.contains(&s) {
                continue;
            }
            let u = pot.pair(q, &s);
            acc += u * u;
        }
        trend.push(acc * step.powi(d as i32));
    }
    if trend.iter().any(|v| !v.is_finite()) {
        return (Verdict::Fail, trend);
    }
    let k = trend.len();
    let d1 = trend[k - 2] - trend[k - 3];
    let d2 = trend[k - 1] - trend[k - 2];
    let scale = trend[k - 1].abs().max(1e-300);
    if d2.abs() <= 1e-10 * scale {
        return (Verdict::Pass, trend);
    }
    let ratio = d2.abs() / d1.abs().max(1e-300);
    let verdict = if ratio <= 0.7 {
        Verdict::Pass
    } else if ratio >= 0.9 {
        Verdict::Fail
    } else {
        Verdict::Indeterminate
    };
    (verdict, trend)
}

// Eigenvalues of U compressed to mass vectors summing to zero, i.e. the form
// on mean-zero signed measures.
fn numeric_psd(pot: &PairPotential, grid: &Grid) -> bool {
    let n = grid.len();
    let mut u = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            u[(i, j)] = 0.5 * (pot.pair(grid.node(i), grid.node(j)) + pot.pair(grid.node(j), grid.node(i)));
        }
    }
    // P = I − 1 1ᵀ / n in mass coordinates projects onto Σ x = 0.
    let p = DMatrix::<f64>::identity(n, n) - DMatrix::<f64>::from_element(n, n, 1.0 / n as f64);
    let a = &p * u * &p;
    let eig = SymmetricEigen::new(a);
    let scale = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    eig.eigenvalues.iter().all(|&l| l >= -1e-10 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_grid;
    use crate::potentials::{parse_kernel_csv, PotentialKind};
    use std::sync::Arc;

    #[test]
    fn zero_kernel_passes_everything() {
        let g = build_grid(1, &[[0.0, 1.0]], 8).unwrap();
        let r = check_hypotheses(&PairPotential::zero(), &g);
        for v in [r.h1, r.h2, r.h3, r.h4, r.h5, r.h6, r.nonnegative, r.psd] {
            assert_eq!(v, Verdict::Pass);
        }
    }

    #[test]
    fn softened_coulomb_passes() {
        let g = build_grid(1, &[[0.0, 1.0]], 16).unwrap();
        let r = check_hypotheses(&PairPotential::softened_coulomb(0.1).unwrap(), &g);
        assert_eq!(r.h1, Verdict::Pass);
        assert_eq!(r.h4, Verdict::Pass);
        assert_eq!(r.h6, Verdict::Pass);
    }

    #[test]
    fn coulomb_h4_depends_on_dimension() {
        let p = PairPotential::new(PotentialKind::AmendedCoulomb { diagonal: Some(0.0) }).unwrap();
        let g1 = build_grid(1, &[[0.0, 1.0]], 16).unwrap();
        assert_eq!(check_hypotheses(&p, &g1).h4, Verdict::Fail);
        let g3 = build_grid(3, &[[0.0, 1.0]; 3], 5).unwrap();
        assert_eq!(check_hypotheses(&p, &g3).h4, Verdict::Pass);
        assert_eq!(check_hypotheses(&p, &g3).h6, Verdict::Fail);
    }

    #[test]
    fn asymmetric_table_fails_h1() {
        let g = Arc::new(build_grid(1, &[[0.0, 1.0]], 2).unwrap());
        let t = parse_kernel_csv("0,0,1\n0,1,2\n1,0,3\n1,1,1\n", g.clone()).unwrap();
        let r = check_hypotheses(&PairPotential::tabulated(t), &g);
        assert_eq!(r.h1, Verdict::Fail);
        assert_eq!(r.h3, Verdict::Indeterminate);
    }

    #[test]
    fn numeric_psd_on_tables() {
        let g = Arc::new(build_grid(1, &[[0.0, 1.0]], 2).unwrap());
        // [[0,1],[1,0]] on mean-zero (1,−1): −2 < 0.
        let t = parse_kernel_csv("0,0,0\n0,1,1\n1,1,0\n", g.clone()).unwrap();
        assert_eq!(check_hypotheses(&PairPotential::tabulated(t), &g).psd, Verdict::Fail);
        let t = parse_kernel_csv("0,0,1\n0,1,0\n1,1,1\n", g.clone()).unwrap();
        assert_eq!(check_hypotheses(&PairPotential::tabulated(t), &g).psd, Verdict::Pass);
    }
}
