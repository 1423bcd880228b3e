//! Optimization over the probability simplex {x ≥ floor, Σx = 1}.

use std::collections::VecDeque;

/// Euclidean projection onto {x_i ≥ floor, Σ x_i = 1} (sort-based, O(n log n)).
pub fn project_simplex(v: &[f64], floor: f64, out: &mut [f64]) {
    let n = v.len();
    let z = 1.0 - n as f64 * floor;
    debug_assert!(z > 0.0, "floor too large for the simplex");
    let mut u: Vec<f64> = v.iter().map(|x| x - floor).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - z) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    for (o, x) in out.iter_mut().zip(v) {
        *o = (x - floor - tau).max(0.0) + floor;
    }
}

#[derive(Clone, Debug)]
pub struct SpgOptions {
    pub max_iters: usize,
    /// Stop when ‖P(x − g) − x‖∞ falls below this.
    pub tol: f64,
    /// Lower bound on every coordinate.
    pub floor: f64,
    /// Nonmonotone memory for the Armijo reference value.
    pub memory: usize,
}

impl Default for SpgOptions {
    fn default() -> Self {
        SpgOptions {
            max_iters: 20_000,
            tol: 1e-11,
            floor: 0.0,
            memory: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpgResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final projected-gradient sup norm.
    pub pg_norm: f64,
}

/// Spectral projected gradient minimization (Barzilai–Borwein step with a
/// nonmonotone Armijo search). `f` returns the value and writes the gradient;
/// +∞ marks points outside the objective's domain and triggers backtracking.
pub fn spg_minimize<F>(mut f: F, x0: &[f64], opts: &SpgOptions) -> SpgResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const ALPHA_MIN: f64 = 1e-12;
    const ALPHA_MAX: f64 = 1e12;
    const ARMIJO: f64 = 1e-4;
    let n = x0.len();
    let mut x = vec![0.0; n];
    project_simplex(x0, opts.floor, &mut x);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    assert!(fx.is_finite(), "spg_minimize: starting point outside the objective's domain");

    let mut history: VecDeque<f64> = VecDeque::with_capacity(opts.memory);
    history.push_back(fx);
    let mut trial = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];

    let pg = |x: &[f64], g: &[f64], buf: &mut [f64]| -> f64 {
        let v: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
        project_simplex(&v, opts.floor, buf);
        buf.iter().zip(x).map(|(p, a)| (p - a).abs()).fold(0.0, f64::max)
    };
    let mut pg_norm = pg(&x, &g, &mut trial);
    let mut alpha = if pg_norm > 0.0 { (1.0 / pg_norm).clamp(ALPHA_MIN, ALPHA_MAX) } else { 1.0 };

    let mut it = 0;
    while it < opts.max_iters && pg_norm > opts.tol {
        it += 1;
        for i in 0..n {
            d[i] = x[i] - alpha * g[i];
        }
        project_simplex(&d, opts.floor, &mut trial);
        for i in 0..n {
            d[i] = trial[i] - x[i];
        }
        let gd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let fref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                xn[i] = x[i] + lambda * d[i];
            }
            let fnew = f(&xn, &mut gn);
            if fnew.is_finite() && fnew <= fref + ARMIJO * lambda * gd {
                fx = fnew;
                accepted = true;
                break;
            }
            // Safeguarded quadratic interpolation, falling back to halving.
            let lt = if fnew.is_finite() {
                let denom = 2.0 * (fnew - fx - lambda * gd);
                if denom > 0.0 {
                    -gd * lambda * lambda / denom
                } else {
                    0.5 * lambda
                }
            } else {
                0.5 * lambda
            };
            lambda = lt.clamp(0.1 * lambda, 0.5 * lambda);
        }
        if !accepted {
            break;
        }
        let mut sts = 0.0;
        let mut sty = 0.0;
        for i in 0..n {
            let s = xn[i] - x[i];
            let y = gn[i] - g[i];
            sts += s * s;
            sty += s * y;
        }
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        alpha = if sty > 0.0 { (sts / sty).clamp(ALPHA_MIN, ALPHA_MAX) } else { ALPHA_MAX };
        if history.len() == opts.memory.max(1) {
            history.pop_front();
        }
        history.push_back(fx);
        pg_norm = pg(&x, &g, &mut trial);
    }
    SpgResult {
        converged: pg_norm <= opts.tol,
        x,
        value: fx,
        iterations: it,
        pg_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        let mut out = [0.0; 3];
        project_simplex(&[0.2, 0.3, 0.5], 0.0, &mut out);
        assert_eq!(out, [0.2, 0.3, 0.5]);
        project_simplex(&[2.0, 0.0, 0.0], 0.0, &mut out);
        assert_eq!(out, [1.0, 0.0, 0.0]);
        project_simplex(&[2.0, 0.0, 0.0], 0.1, &mut out);
        assert!((out[0] - 0.8).abs() < 1e-15 && out[1] == 0.1);
    }

    #[test]
    fn minimizes_a_separable_quadratic() {
        // min Σ (x_i − c_i)² with c outside the simplex.
        let c = [0.9, 0.6, -0.2, 0.1];
        let r = spg_minimize(
            |x, g| {
                let mut v = 0.0;
                for i in 0..4 {
                    g[i] = 2.0 * (x[i] - c[i]);
                    v += (x[i] - c[i]).powi(2);
                }
                v
            },
            &[0.25; 4],
            &SpgOptions::default(),
        );
        let mut p = [0.0; 4];
        project_simplex(&c, 0.0, &mut p);
        assert!(r.converged);
        for i in 0..4 {
            assert!((r.x[i] - p[i]).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn projection_lands_on_the_simplex(v in prop::collection::vec(-3.0f64..3.0, 1..20)) {
            let mut out = vec![0.0; v.len()];
            project_simplex(&v, 0.0, &mut out);
            let s: f64 = out.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(out.iter().all(|&x| x >= 0.0));
            // idempotent
            let mut again = vec![0.0; v.len()];
            project_simplex(&out, 0.0, &mut again);
            for (a, b) in out.iter().zip(&again) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
