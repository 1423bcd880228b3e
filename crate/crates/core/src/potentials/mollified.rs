//! Ball-mollified Coulomb profile g(d) = (χ̂_{B_r} ∗ |·|⁻¹ ∗ χ̂_{B_r})(d), with
//! χ̂ the normalized indicator. The mollified Newton kernel is −g.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::quadrature::{gauss_legendre, legendre_on};

/// Closed form in D = 3: interaction energy of two unit-charge uniform balls.
/// Returns (g, g').
pub fn profile_3d(d: f64, r: f64) -> (f64, f64) {
    if d >= 2.0 * r {
        return (1.0 / d, -1.0 / (d * d));
    }
    let x = d / r;
    let g = (1.2 - 0.5 * x * x + 3.0 / 16.0 * x.powi(3) - x.powi(5) / 160.0) / r;
    let dg = (-x + 9.0 / 16.0 * x * x - x.powi(4) / 32.0) / (r * r);
    (g, dg)
}

/// Tabulated profile for D = 2, where no closed form is at hand.
///
/// Values on [0, 16r] come from a polar quadrature centred on the
/// singularity; beyond that a multipole tail is used.
#[derive(Clone, Debug)]
pub struct RadialTable {
    r: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

const TABLE_POINTS: usize = 2049;
const TABLE_REACH: f64 = 16.0;

impl RadialTable {
    pub fn disk(r: f64) -> Self {
        let step = TABLE_REACH * r / (TABLE_POINTS - 1) as f64;
        let rule = gauss_legendre(32);
        let values: Vec<f64> = (0..TABLE_POINTS)
            .into_par_iter()
            .map(|k| disk_profile(k as f64 * step, r, &rule))
            .collect();
        let mut slopes = vec![0.0; TABLE_POINTS];
        for k in 1..TABLE_POINTS - 1 {
            slopes[k] = (values[k + 1] - values[k - 1]) / (2.0 * step);
        }
        // g is even in d, so g'(0) = 0.
        let last = TABLE_POINTS - 1;
        slopes[last] = tail(last as f64 * step, r).1;
        RadialTable { r, step, values, slopes }
    }

    pub fn eval(&self, d: f64) -> (f64, f64) {
        let t = d / self.step;
        let k = t.floor() as usize;
        if k >= TABLE_POINTS - 1 {
            return tail(d, self.r);
        }
        // Cubic Hermite on [k, k+1].
        let s = t - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.step, self.slopes[k + 1] * self.step);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1;
        let dv = ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1)
            / self.step;
        (v, dv)
    }
}

// Far field in D = 2: averaged Legendre expansion with E|a−b|² = r² and
// E|a−b|⁴ = 5r⁴/3 for independent uniform points of the disk.
fn tail(d: f64, r: f64) -> (f64, f64) {
    let c2 = r * r / 4.0;
    let c4 = 9.0 / 64.0 * 5.0 / 3.0 * r.powi(4);
    let v = 1.0 / d + c2 / d.powi(3) + c4 / d.powi(5);
    let dv = -1.0 / (d * d) - 3.0 * c2 / d.powi(4) - 5.0 * c4 / d.powi(6);
    (v, dv)
}

// Density of a − b for a, b uniform on the disk of radius r.
fn disk_difference_density(s: f64, r: f64) -> f64 {
    if s >= 2.0 * r {
        return 0.0;
    }
    let area = 2.0 * r * r * (s / (2.0 * r)).acos() - 0.5 * s * (4.0 * r * r - s * s).sqrt();
    area / (PI * r * r).powi(2)
}

// Polar coordinates around the singular point turn 1/|v − p| dv into dρ dα.
// Each chord is split where it passes closest to v = 0, where the density
// has a conical kink.
fn disk_profile(d: f64, r: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let segment = |a: f64, b: f64, sin: f64, cos: f64| -> f64 {
        if b <= a {
            return 0.0;
        }
        legendre_on(a, b, rule)
            .map(|(rho, w)| {
                let vx = d + rho * cos;
                let vy = rho * sin;
                w * disk_difference_density((vx * vx + vy * vy).sqrt(), r)
            })
            .sum()
    };
    let chord = |alpha: f64| -> f64 {
        let (sin, cos) = alpha.sin_cos();
        let disc = 4.0 * r * r - d * d * sin * sin;
        if disc <= 0.0 {
            return 0.0;
        }
        let root = disc.sqrt();
        let hi = -d * cos + root;
        let lo = (-d * cos - root).max(0.0);
        let mid = (-d * cos).clamp(lo, hi.max(lo));
        segment(lo, mid, sin, cos) + segment(mid, hi, sin, cos)
    };
    // Only α ∈ [0, π] is integrated; the other half is its mirror image.
    if d <= 2.0 * r {
        const ANGLES: usize = 512;
        let h = PI / ANGLES as f64;
        2.0 * h * (0..ANGLES).map(|a| chord((a as f64 + 0.5) * h)).sum::<f64>()
    } else {
        // Chords exist within α_max = asin(2r/d) of the direction back to the
        // origin and close like a square root at the tangent;
        // α = π − α_max(1 − t²) removes that endpoint singularity.
        let amax = (2.0 * r / d).asin();
        2.0 * legendre_on(0.0, 1.0, rule)
            .map(|(t, w)| w * 2.0 * amax * t * chord(PI - amax * (1.0 - t * t)))
            .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_dimensional_profile_is_c1_at_contact() {
        let r = 0.3;
        let (a, da) = profile_3d(2.0 * r - 1e-9, r);
        let (b, db) = profile_3d(2.0 * r, r);
        assert!((a - b).abs() < 1e-8);
        assert!((da - db).abs() < 1e-6);
        assert!((profile_3d(0.0, r).0 - 1.2 / r).abs() < 1e-14);
    }

    #[test]
    fn disk_profile_at_zero_is_mean_inverse_distance() {
        // E 1/|a − b| over the unit disk is 16/(3π).
        let v = disk_profile(0.0, 1.0, &gauss_legendre(32));
        assert!((v - 16.0 / (3.0 * PI)).abs() < 1e-6);
    }

    #[test]
    fn disk_table_matches_tail_far_away() {
        let t = RadialTable::disk(0.1);
        let (v, _) = t.eval(1.2);
        assert!((v - tail(1.2, 0.1).0).abs() < 1e-6 * v);
        // continuity across the table edge
        let edge = TABLE_REACH * 0.1;
        assert!((t.eval(edge - 1e-9).0 - t.eval(edge + 1e-9).0).abs() < 1e-6);
        // monotone decreasing
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let v = t.eval(k as f64 * 0.01).0;
            assert!(v < prev);
            prev = v;
        }
    }
}
