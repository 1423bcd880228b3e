//! Symmetric pair kernels U(q, q′), their grid matrices and hypothesis checks.

mod hypotheses;
mod kernel;
mod mollified;
mod table;

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::domain::Grid;
use crate::error::{Error, Result};

pub use hypotheses::{check_hypotheses, HypothesisReport, Verdict};
pub use kernel::{assemble_kernel, shift_nonnegative, KernelMatrix};
pub use mollified::{profile_3d, RadialTable};
pub use table::{parse_kernel_csv, KernelTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialKind {
    Zero,
    Constant {
        c: f64,
    },
    /// Gaussian bump a·exp(−r²/2ℓ²).
    BoundedSmooth {
        amplitude: f64,
        length: f64,
    },
    /// 1/(r + δ).
    SoftenedCoulomb {
        delta: f64,
    },
    /// 1/r with U(q, q) = u; `None` leaves coincident points at +∞.
    AmendedCoulomb {
        #[serde(default)]
        diagonal: Option<f64>,
    },
    /// −(χ̂_{B_r} ∗ |·|⁻¹ ∗ χ̂_{B_r}) with normalized ball indicators.
    MollifiedNewton {
        radius: f64,
    },
    /// Values attached to pairs of cells of one particular grid.
    Tabulated,
}

/// How the kernel matrix diagonal U_ii is filled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalRule {
    /// Sub-cell average for kernels singular at coincidence, point value otherwise.
    #[default]
    Auto,
    Point,
    SubcellAverage,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairPotential {
    kind: PotentialKind,
    nonneg_shift: f64,
    diagonal: DiagonalRule,
    #[serde(skip)]
    table: Option<Arc<KernelTable>>,
    #[serde(skip)]
    disk_profile: OnceLock<Arc<RadialTable>>,
}

impl PairPotential {
    pub fn new(kind: PotentialKind) -> Result<Self> {
        let bad = |what: &str| Err(Error::config(format!("potential: {what}")));
        match kind {
            PotentialKind::Constant { c } if !c.is_finite() => return bad("c must be finite"),
            PotentialKind::BoundedSmooth { amplitude, length }
                if !(amplitude.is_finite() && length.is_finite() && length > 0.0) =>
            {
                return bad("bounded-smooth needs finite amplitude and length > 0")
            }
            PotentialKind::SoftenedCoulomb { delta } if !(delta.is_finite() && delta > 0.0) => {
                return bad("softened-coulomb needs delta > 0")
            }
            PotentialKind::AmendedCoulomb { diagonal: Some(u) } if !u.is_finite() => {
                return bad("amended-coulomb diagonal must be finite")
            }
            PotentialKind::MollifiedNewton { radius } if !(radius.is_finite() && radius > 0.0) => {
                return bad("mollified-newton needs radius > 0")
            }
            PotentialKind::Tabulated => {
                return bad("tabulated kernels are built with PairPotential::tabulated")
            }
            _ => {}
        }
        Ok(PairPotential {
            kind,
            nonneg_shift: 0.0,
            diagonal: DiagonalRule::Auto,
            table: None,
            disk_profile: OnceLock::new(),
        })
    }

    pub fn tabulated(table: KernelTable) -> Self {
        PairPotential {
            kind: PotentialKind::Tabulated,
            nonneg_shift: 0.0,
            diagonal: DiagonalRule::Auto,
            table: Some(Arc::new(table)),
            disk_profile: OnceLock::new(),
        }
    }

    pub fn zero() -> Self {
        Self::new(PotentialKind::Zero).expect("zero kernel is valid")
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(PotentialKind::Constant { c })
    }

    pub fn softened_coulomb(delta: f64) -> Result<Self> {
        Self::new(PotentialKind::SoftenedCoulomb { delta })
    }

    pub fn with_diagonal(mut self, rule: DiagonalRule) -> Self {
        self.diagonal = rule;
        self
    }

    /// Same kernel plus a constant offset (accumulates with any existing shift).
    pub fn with_shift(mut self, shift: f64) -> Self {
        self.nonneg_shift += shift;
        self
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn nonneg_shift(&self) -> f64 {
        self.nonneg_shift
    }

    pub fn diagonal_rule(&self) -> DiagonalRule {
        self.diagonal
    }

    pub fn table(&self) -> Option<&KernelTable> {
        self.table.as_deref()
    }

    /// Whether U is unbounded near the diagonal.
    pub fn is_singular(&self) -> bool {
        matches!(self.kind, PotentialKind::AmendedCoulomb { .. })
    }

    pub fn is_bounded(&self) -> bool {
        !self.is_singular()
    }

    /// Analytic positive-semidefiniteness on mean-zero signed measures.
    /// `None` when not known in closed form.
    pub fn is_psd(&self) -> Option<bool> {
        match &self.kind {
            PotentialKind::Zero | PotentialKind::Constant { .. } => Some(true),
            PotentialKind::BoundedSmooth { amplitude, .. } => Some(*amplitude >= 0.0),
            // Mixture of Laplace kernels e^{−t r}, positive definite in every D.
            PotentialKind::SoftenedCoulomb { .. } => Some(true),
            PotentialKind::AmendedCoulomb { .. } => None,
            PotentialKind::MollifiedNewton { .. } => Some(false),
            PotentialKind::Tabulated => None,
        }
    }

    /// Kernel gradient is available in closed form (off the diagonal).
    pub fn is_differentiable(&self) -> bool {
        !matches!(self.kind, PotentialKind::Tabulated)
    }

    /// Check that this kernel makes sense on `grid`.
    pub fn validate_for(&self, grid: &Grid) -> Result<()> {
        match &self.kind {
            PotentialKind::MollifiedNewton { .. } if grid.dimension() == 1 => Err(Error::config(
                "mollified-newton needs D >= 2: the 1D convolution with 1/|x| diverges",
            )),
            PotentialKind::Tabulated => {
                let t = self.table.as_ref().expect("tabulated potential carries a table");
                if t.grid().bounds() != grid.bounds() || t.grid().dimension() != grid.dimension() {
                    return Err(Error::contract("tabulated kernel belongs to a different domain"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Radial profile φ(r) and φ′(r) for translation-invariant kinds, without the shift.
    pub fn radial(&self, r: f64, dimension: usize) -> Option<(f64, f64)> {
        Some(match self.kind {
            PotentialKind::Zero => (0.0, 0.0),
            PotentialKind::Constant { c } => (c, 0.0),
            PotentialKind::BoundedSmooth { amplitude, length } => {
                let v = amplitude * (-r * r / (2.0 * length * length)).exp();
                (v, -r / (length * length) * v)
            }
            PotentialKind::SoftenedCoulomb { delta } => {
                let s = r + delta;
                (1.0 / s, -1.0 / (s * s))
            }
            PotentialKind::AmendedCoulomb { diagonal } => {
                if r == 0.0 {
                    (diagonal.unwrap_or(f64::INFINITY), 0.0)
                } else {
                    (1.0 / r, -1.0 / (r * r))
                }
            }
            PotentialKind::MollifiedNewton { radius } => {
                let (g, dg) = match dimension {
                    3 => profile_3d(r, radius),
                    2 => self
                        .disk_profile
                        .get_or_init(|| Arc::new(RadialTable::disk(radius)))
                        .eval(r),
                    _ => (f64::NAN, f64::NAN),
                };
                (-g, -dg)
            }
            PotentialKind::Tabulated => return None,
        })
    }

    /// U(q, q′) including the nonnegativity shift. May be +∞ for an
    /// un-amended Coulomb kernel at coincident points.
    pub fn pair(&self, q: &[f64], q2: &[f64]) -> f64 {
        let raw = match &self.table {
            Some(t) => t.lookup(q, q2),
            None => self.radial(distance(q, q2), q.len()).expect("radial kind").0,
        };
        raw + self.nonneg_shift
    }

    /// Gradient of U(q, q′) with respect to q, written into `out`.
    /// Zero at coincident points and for tabulated kernels.
    pub fn grad_first(&self, q: &[f64], q2: &[f64], out: &mut [f64]) {
        let r = distance(q, q2);
        let dphi = if r > 0.0 {
            self.radial(r, q.len()).map_or(0.0, |(_, d)| d)
        } else {
            0.0
        };
        for ((o, a), b) in out.iter_mut().zip(q).zip(q2) {
            *o = if r > 0.0 { dphi * (a - b) / r } else { 0.0 };
        }
    }
}

pub(crate) fn distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}
