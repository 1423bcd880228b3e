use std::sync::Arc;

use rayon::prelude::*;

use super::{DiagonalRule, PairPotential};
use crate::domain::Grid;
use crate::error::{Error, Result};

/// Sub-cells per axis used to average a singular kernel over its own cell.
const SUBCELLS: usize = 4;

/// Dense U_ij = U(q_i, q_j) on a grid. Immutable once assembled.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    grid: Arc<Grid>,
    entries: Vec<f64>,
    shift: f64,
}

impl KernelMatrix {
    /// Build directly from entries (row-major). Used by tests and oracles.
    pub fn from_entries(grid: Arc<Grid>, entries: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if entries.len() != n * n {
            return Err(Error::contract("kernel entries do not match the grid size"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::PotentialDomain("kernel has non-finite entries".into()));
        }
        Ok(KernelMatrix { grid, entries, shift: 0.0 })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.grid.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.entries[i * n..(i + 1) * n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Offset already folded into the entries by `shift_nonnegative`.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.grid.len();
        (0..n).all(|i| (i + 1..n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// (U x)_i = Σ_j U_ij x_j for cell masses x.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let row = |i: usize| -> f64 { self.row(i).iter().zip(x).map(|(u, m)| u * m).sum() };
        if n >= 256 {
            (0..n).into_par_iter().map(row).collect()
        } else {
            (0..n).map(row).collect()
        }
    }

    /// ½ xᵀ U x for cell masses x.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        0.5 * self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Assemble the dense kernel matrix of `pot` on `grid`, rows in parallel.
pub fn assemble_kernel(pot: &PairPotential, grid: &Arc<Grid>) -> Result<KernelMatrix> {
    pot.validate_for(grid)?;
    let n = grid.len();
    let subcell = match pot.diagonal_rule() {
        DiagonalRule::Auto => pot.is_singular(),
        DiagonalRule::Point => false,
        DiagonalRule::SubcellAverage => true,
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let qi = grid.node(i);
            (0..n)
                .map(|j| {
                    if i != j {
                        pot.pair(qi, grid.node(j))
                    } else if subcell && pot.table().is_none() {
                        subcell_average(pot, grid, i)
                    } else {
                        pot.pair(qi, qi)
                    }
                })
                .collect()
        })
        .collect();
    let entries: Vec<f64> = rows.into_iter().flatten().collect();
    if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
        return Err(Error::PotentialDomain(format!(
            "U is not finite at node pair ({}, {})",
            k / n,
            k % n
        )));
    }
    let km = KernelMatrix {
        grid: grid.clone(),
        entries,
        shift: pot.nonneg_shift(),
    };
    if !km.is_symmetric() {
        return Err(Error::PotentialDomain("kernel matrix is not symmetric (H1 fails)".into()));
    }
    Ok(km)
}

/// Mean of U(q_i, s) over the SUBCELLS^D sub-cell midpoints s of cell i.
/// The midpoints never coincide with q_i because SUBCELLS is even.
fn subcell_average(pot: &PairPotential, grid: &Grid, i: usize) -> f64 {
    let d = grid.dimension();
    let q = grid.node(i);
    let h = grid.spacing();
    let total = SUBCELLS.pow(d as u32);
    let mut s = vec![0.0; d];
    let mut acc = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        for axis in 0..d {
            let k = rem % SUBCELLS;
            rem /= SUBCELLS;
            s[axis] = q[axis] - 0.5 * h[axis] + (k as f64 + 0.5) * h[axis] / SUBCELLS as f64;
        }
        acc += pot.pair(q, &s);
    }
    acc / total as f64
}

/// Return `pot` shifted by −min_ij U_ij when that minimum is negative, so the
/// grid kernel becomes nonnegative. The shift is recorded on the potential.
pub fn shift_nonnegative(pot: &PairPotential, grid: &Arc<Grid>) -> Result<PairPotential> {
    let km = assemble_kernel(pot, grid)?;
    let min = km.min_entry();
    if min >= 0.0 {
        return Ok(pot.clone());
    }
    Ok(pot.clone().with_shift(-min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_grid;
    use crate::potentials::PotentialKind;
    use proptest::prelude::*;

    fn line(cells: usize) -> Arc<Grid> {
        Arc::new(build_grid(1, &[[0.0, 1.0]], cells).unwrap())
    }

    #[test]
    fn zero_and_constant() {
        let g = line(5);
        let k = assemble_kernel(&PairPotential::zero(), &g).unwrap();
        assert!(k.entries().iter().all(|&v| v == 0.0));
        let k = assemble_kernel(&PairPotential::constant(4.0).unwrap(), &g).unwrap();
        assert!(k.entries().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn softened_coulomb_entry() {
        let k = assemble_kernel(&PairPotential::softened_coulomb(0.1).unwrap(), &line(4)).unwrap();
        assert!((k.get(0, 1) - 1.0 / 0.35).abs() < 1e-14);
        assert!((k.get(1, 1) - 10.0).abs() < 1e-14);
    }

    #[test]
    fn coulomb_diagonal_is_subcell_average() {
        let g = line(4);
        let p = PairPotential::new(PotentialKind::AmendedCoulomb { diagonal: Some(0.0) }).unwrap();
        let k = assemble_kernel(&p, &g).unwrap();
        // offsets ±h/8, ±3h/8 with h = 1/4
        let expect = (2.0 * 32.0 + 2.0 * 32.0 / 3.0) / 4.0;
        assert!((k.get(2, 2) - expect).abs() < 1e-12);
        let k = assemble_kernel(&p.clone().with_diagonal(DiagonalRule::Point), &g).unwrap();
        assert_eq!(k.get(2, 2), 0.0);
        let bare = PairPotential::new(PotentialKind::AmendedCoulomb { diagonal: None }).unwrap();
        let err = assemble_kernel(&bare.with_diagonal(DiagonalRule::Point), &g).unwrap_err();
        assert!(matches!(err, Error::PotentialDomain(_)));
    }

    #[test]
    fn shift_examples() {
        let g = line(6);
        let p = shift_nonnegative(&PairPotential::constant(-3.0).unwrap(), &g).unwrap();
        assert_eq!(p.nonneg_shift(), 3.0);
        assert!(assemble_kernel(&p, &g).unwrap().entries().iter().all(|&v| v == 0.0));
        let p = shift_nonnegative(&PairPotential::softened_coulomb(0.1).unwrap(), &g).unwrap();
        assert_eq!(p.nonneg_shift(), 0.0);
    }

    #[test]
    fn mollified_newton_shift_is_minus_exhaustive_min() {
        let g = Arc::new(build_grid(3, &[[0.0, 1.0]; 3], 4).unwrap());
        let p = PairPotential::new(PotentialKind::MollifiedNewton { radius: 0.2 }).unwrap();
        let mut min = f64::INFINITY;
        for i in 0..g.len() {
            for j in 0..g.len() {
                min = min.min(p.pair(g.node(i), g.node(j)));
            }
        }
        let s = shift_nonnegative(&p, &g).unwrap();
        assert_eq!(s.nonneg_shift(), -min);
        assert!((min + 1.2 / 0.2).abs() < 1e-12);
        let d1 = line(8);
        assert!(matches!(assemble_kernel(&p, &d1), Err(Error::Config(_))));
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().map(|x| x + 1e-6).sum();
            v.into_iter().map(|x| (x + 1e-6) / s).collect()
        })
    }

    proptest! {
        #[test]
        fn assembled_kernels_are_exactly_symmetric(delta in 0.01f64..1.0, cells in 2usize..7) {
            let g = Arc::new(build_grid(2, &[[0.0, 1.0], [0.0, 2.0]], cells).unwrap());
            let k = assemble_kernel(&PairPotential::softened_coulomb(delta).unwrap(), &g).unwrap();
            prop_assert!(k.is_symmetric());
        }

        #[test]
        fn constant_kernel_times_probability_is_c(c in -5.0f64..5.0, x in simplex(9)) {
            let k = assemble_kernel(&PairPotential::constant(c).unwrap(), &line(9)).unwrap();
            for v in k.apply(&x) {
                prop_assert!((v - c).abs() <= 1e-12 * (1.0 + c.abs()));
            }
        }

        #[test]
        fn shift_moves_the_bilinear_form_by_half(c in -5.0f64..-0.1, x in simplex(8)) {
            let g = line(8);
            let p = PairPotential::new(PotentialKind::BoundedSmooth { amplitude: c, length: 0.2 }).unwrap();
            let s = shift_nonnegative(&p, &g).unwrap();
            let before = assemble_kernel(&p, &g).unwrap().quadratic(&x);
            let after = assemble_kernel(&s, &g).unwrap().quadratic(&x);
            prop_assert!((after - before - s.nonneg_shift() / 2.0).abs() <= 1e-12);
        }
    }
}
