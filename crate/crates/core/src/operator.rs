//! The control-affine Hamiltonian family `H(u) = H0 + sum_l u_l H_l` and its
//! control box.

use std::ops::Deref;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::tolerances::Tolerances;

pub type CMatrix = DMatrix<Complex64>;

/// Largest entrywise defect `|A_jk - conj(A_kj)|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut defect = 0.0f64;
    for j in 0..n {
        for k in j..n {
            defect = defect.max((m[(j, k)] - m[(k, j)].conj()).norm());
        }
    }
    defect
}

/// Outcome of [`validate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Validity {
    pub defect: f64,
    pub accepted: bool,
}

/// Checks a square matrix for Hermiticity at the absolute tolerance in `tol`.
pub fn validate(m: &CMatrix, tol: &Tolerances) -> Result<Validity> {
    if m.nrows() != m.ncols() {
        return Err(CoreError::Structural(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let defect = hermiticity_defect(m);
    Ok(Validity {
        defect,
        accepted: defect <= tol.hermiticity,
    })
}

/// Spectral norm of a Hermitian matrix.
pub(crate) fn hermitian_norm(m: &CMatrix) -> f64 {
    if m.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// A Hermitian matrix of dimension at least two.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let v = validate(&matrix, &Tolerances::default())?;
        if matrix.nrows() < 2 {
            return Err(CoreError::Structural("dimension must be at least 2".into()));
        }
        if !v.accepted {
            return Err(CoreError::NotHermitian { defect: v.defect });
        }
        Ok(Self { matrix })
    }

    /// Replaces `matrix` by `(A + A^dagger) / 2`. Only called on explicit request.
    pub fn symmetrized(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(CoreError::Structural("matrix is not square".into()));
        }
        let sym = (&matrix + matrix.adjoint()).scale(0.5);
        Self::new(sym)
    }

    pub fn from_real(n: usize, row_major: &[f64]) -> Result<Self> {
        if row_major.len() != n * n {
            return Err(CoreError::DimensionMismatch {
                expected: n * n,
                found: row_major.len(),
            });
        }
        Self::new(CMatrix::from_row_iterator(
            n,
            n,
            row_major.iter().map(|&x| Complex64::new(x, 0.0)),
        ))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut m = CMatrix::zeros(n, n);
        for (j, &v) in values.iter().enumerate() {
            m[(j, j)] = Complex64::new(v, 0.0);
        }
        Self::new(m)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(CMatrix::zeros(n, n))
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn norm(&self) -> f64 {
        hermitian_norm(&self.matrix)
    }
}

/// A point in control space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlPoint(pub Vec<f64>);

impl ControlPoint {
    pub fn new(u: Vec<f64>) -> Self {
        Self(u)
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn distance(&self, other: &ControlPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `self + t * direction`
    pub fn offset(&self, direction: &[f64], t: f64) -> ControlPoint {
        ControlPoint(
            self.0
                .iter()
                .zip(direction)
                .map(|(a, d)| a + t * d)
                .collect(),
        )
    }

    /// Convex combination `(1 - s) self + s other`.
    pub fn lerp(&self, other: &ControlPoint, s: f64) -> ControlPoint {
        ControlPoint(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + s * (b - a))
                .collect(),
        )
    }
}

impl Deref for ControlPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ControlPoint {
    fn from(u: Vec<f64>) -> Self {
        Self(u)
    }
}

/// Axis-aligned closed box `prod_l [lo_l, hi_l]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlBox {
    bounds: Vec<[f64; 2]>,
}

impl ControlBox {
    pub fn new(bounds: Vec<[f64; 2]>) -> Result<Self> {
        for (l, [lo, hi]) in bounds.iter().enumerate() {
            if lo >= hi || !lo.is_finite() || !hi.is_finite() {
                return Err(CoreError::Structural(format!(
                    "control interval {} is [{lo}, {hi}], expected lo < hi",
                    l + 1
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// The box `[-r, r]^m`.
    pub fn symmetric(m: usize, r: f64) -> Result<Self> {
        Self::new(vec![[-r, r]; m])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bounds.iter().map(|[lo, hi]| hi - lo).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn center(&self) -> ControlPoint {
        ControlPoint(self.bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect())
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(&self.bounds)
                .all(|(x, [lo, hi])| *lo <= *x && *x <= *hi)
    }

    /// Smallest distance from `u` to a face of the box (negative outside).
    pub fn margin(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(&self.bounds)
            .map(|(x, [lo, hi])| (x - lo).min(hi - x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn clamp(&self, u: &mut [f64]) {
        for (x, [lo, hi]) in u.iter_mut().zip(&self.bounds) {
            *x = x.clamp(*lo, *hi);
        }
    }

    /// Maps a point of the unit cube onto the box.
    pub fn from_unit(&self, s: &[f64]) -> ControlPoint {
        ControlPoint(
            s.iter()
                .zip(&self.bounds)
                .map(|(t, [lo, hi])| lo + t * (hi - lo))
                .collect(),
        )
    }

    /// All `2^m` corners for small `m`, in binary counting order.
    pub fn corners(&self) -> Vec<ControlPoint> {
        let m = self.dim();
        if m > 12 {
            return Vec::new();
        }
        (0..1usize << m)
            .map(|mask| {
                ControlPoint(
                    (0..m)
                        .map(|l| self.bounds[l][(mask >> l) & 1])
                        .collect(),
                )
            })
            .collect()
    }
}

/// `H(u) = H0 + sum_l u_l H_l` over a control box, with `m >= 2` controls.
#[derive(Clone, Debug)]
pub struct ControlHamiltonian {
    drift: HermitianOperator,
    controlled: Vec<HermitianOperator>,
    control_box: ControlBox,
    control_norms: Vec<f64>,
}

impl ControlHamiltonian {
    pub fn new(
        drift: HermitianOperator,
        controlled: Vec<HermitianOperator>,
        control_box: ControlBox,
    ) -> Result<Self> {
        if controlled.len() < 2 {
            return Err(CoreError::Structural(format!(
                "need at least 2 controlled operators, got {}",
                controlled.len()
            )));
        }
        if control_box.dim() != controlled.len() {
            return Err(CoreError::DimensionMismatch {
                expected: controlled.len(),
                found: control_box.dim(),
            });
        }
        let n = drift.dim();
        for h in &controlled {
            if h.dim() != n {
                return Err(CoreError::DimensionMismatch {
                    expected: n,
                    found: h.dim(),
                });
            }
        }
        let control_norms = controlled.iter().map(HermitianOperator::norm).collect();
        Ok(Self {
            drift,
            controlled,
            control_box,
            control_norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn num_controls(&self) -> usize {
        self.controlled.len()
    }

    pub fn drift(&self) -> &HermitianOperator {
        &self.drift
    }

    pub fn controlled(&self) -> &[HermitianOperator] {
        &self.controlled
    }

    pub fn control_box(&self) -> &ControlBox {
        &self.control_box
    }

    /// Operator norms `||H_l||`, l = 1..m.
    pub fn control_norms(&self) -> &[f64] {
        &self.control_norms
    }

    pub fn max_control_norm(&self) -> f64 {
        self.control_norms.iter().cloned().fold(0.0, f64::max)
    }

    /// Same family on a different box.
    pub fn with_box(&self, control_box: ControlBox) -> Result<Self> {
        Self::new(self.drift.clone(), self.controlled.clone(), control_box)
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.num_controls() {
            return Err(CoreError::DimensionMismatch {
                expected: self.num_controls(),
                found: u.len(),
            });
        }
        Ok(())
    }

    /// Dense matrix of `H(u)`.
    pub fn matrix_at(&self, u: &[f64]) -> Result<CMatrix> {
        self.check_point(u)?;
        let mut m = self.drift.matrix().clone();
        for (ul, hl) in u.iter().zip(&self.controlled) {
            if *ul != 0.0 {
                m.zip_apply(hl.matrix(), |a, b| *a += b * *ul);
            }
        }
        Ok(m)
    }

    pub fn evaluate(&self, u: &[f64]) -> Result<HermitianOperator> {
        Ok(HermitianOperator::from_matrix_unchecked(self.matrix_at(u)?))
    }

    /// `sum_l v_l H_l`, the derivative of `H` along `v`.
    pub fn directional(&self, v: &[f64]) -> Result<CMatrix> {
        self.check_point(v)?;
        let n = self.dim();
        let mut m = CMatrix::zeros(n, n);
        for (vl, hl) in v.iter().zip(&self.controlled) {
            m.zip_apply(hl.matrix(), |a, b| *a += b * *vl);
        }
        Ok(m)
    }

    /// Every operator `H0, H1, ..., Hm` scaled by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let sc = |h: &HermitianOperator| {
            HermitianOperator::from_matrix_unchecked(h.matrix().map(|z| z * s))
        };
        Self::new(
            sc(&self.drift),
            self.controlled.iter().map(sc).collect(),
            self.control_box.clone(),
        )
    }

    pub fn from_json_str(s: &str, symmetrize: bool) -> Result<Self> {
        let file: HamiltonianFile = serde_json::from_str(s)?;
        file.into_hamiltonian(symmetrize)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&HamiltonianFile::from(self)).expect("serializable")
    }
}

/// Real and imaginary parts of a square matrix, row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixParts {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixParts {
    fn to_matrix(&self, n: usize, what: &str) -> Result<CMatrix> {
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !rows_ok(&self.re) || self.im.as_ref().is_some_and(|im| !rows_ok(im)) {
            return Err(CoreError::Structural(format!("{what} is not {n}x{n}")));
        }
        Ok(CMatrix::from_fn(n, n, |j, k| {
            let im = self.im.as_ref().map_or(0.0, |im| im[j][k]);
            Complex64::new(self.re[j][k], im)
        }))
    }

    fn from_matrix(m: &CMatrix) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..m.nrows())
                .map(|j| (0..m.ncols()).map(|k| f(&m[(j, k)])).collect())
                .collect()
        };
        Self {
            re: rows(|z| z.re),
            im: Some(rows(|z| z.im)),
        }
    }
}

/// On-disk Hamiltonian description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HamiltonianFile {
    pub dim: usize,
    pub drift: MatrixParts,
    pub controlled: Vec<MatrixParts>,
    #[serde(rename = "box")]
    pub control_box: Vec<[f64; 2]>,
}

impl HamiltonianFile {
    pub fn into_hamiltonian(self, symmetrize: bool) -> Result<ControlHamiltonian> {
        let n = self.dim;
        let make = |parts: &MatrixParts, what: &str| -> Result<HermitianOperator> {
            let m = parts.to_matrix(n, what)?;
            if symmetrize {
                HermitianOperator::symmetrized(m)
            } else {
                HermitianOperator::new(m)
            }
        };
        let drift = make(&self.drift, "drift")?;
        let controlled = self
            .controlled
            .iter()
            .enumerate()
            .map(|(l, p)| make(p, &format!("controlled[{l}]")))
            .collect::<Result<Vec<_>>>()?;
        ControlHamiltonian::new(drift, controlled, ControlBox::new(self.control_box)?)
    }
}

impl From<&ControlHamiltonian> for HamiltonianFile {
    fn from(h: &ControlHamiltonian) -> Self {
        Self {
            dim: h.dim(),
            drift: MatrixParts::from_matrix(h.drift.matrix()),
            controlled: h
                .controlled
                .iter()
                .map(|c| MatrixParts::from_matrix(c.matrix()))
                .collect(),
            control_box: h.control_box.bounds.clone(),
        }
    }
}
