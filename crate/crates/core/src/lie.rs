//! Lie closure of a set of skew-Hermitian matrices by iterated commutators,
//! with classification against `u(n)`, `su(n)` and `sp(n/2)`.
//!
//! Skew-Hermitian `n x n` matrices form a real space of dimension `n^2`. We
//! work in real coordinates that are orthonormal for `<A, B> = Re tr(A^dagger B)`:
//! the imaginary parts of the diagonal, then `sqrt(2) Re A_jk` and
//! `sqrt(2) Im A_jk` for `j < k`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::operator::{CMatrix, ControlHamiltonian};
use crate::tolerances::Tolerances;

/// Largest entrywise defect `|A_jk + conj(A_kj)|`.
pub fn skew_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut d = 0.0f64;
    for j in 0..n {
        for k in j..n {
            d = d.max((a[(j, k)] + a[(k, j)].conj()).norm());
        }
    }
    d
}

fn to_coords(a: &CMatrix) -> Vec<f64> {
    let n = a.nrows();
    let mut v = Vec::with_capacity(n * n);
    for j in 0..n {
        v.push(a[(j, j)].im);
    }
    let s = std::f64::consts::SQRT_2;
    for j in 0..n {
        for k in j + 1..n {
            // average the two halves so tiny Hermiticity defects cancel
            let z = (a[(j, k)] - a[(k, j)].conj()) * 0.5;
            v.push(s * z.re);
            v.push(s * z.im);
        }
    }
    v
}

fn from_coords(v: &[f64], n: usize) -> CMatrix {
    let mut a = CMatrix::zeros(n, n);
    for j in 0..n {
        a[(j, j)] = Complex64::new(0.0, v[j]);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut idx = n;
    for j in 0..n {
        for k in j + 1..n {
            let z = Complex64::new(s * v[idx], s * v[idx + 1]);
            a[(j, k)] = z;
            a[(k, j)] = -z.conj();
            idx += 2;
        }
    }
    a
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal basis grown by two-pass modified Gram-Schmidt.
#[derive(Clone, Debug, Default)]
struct Basis {
    vectors: Vec<Vec<f64>>,
}

impl Basis {
    fn residual(&self, c: &[f64]) -> Vec<f64> {
        let mut r = c.to_vec();
        for _ in 0..2 {
            for b in &self.vectors {
                let p = dot(&r, b);
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        r
    }

    /// Adds the normalized residual of `c` when it exceeds `rank_tol * |c|`.
    fn try_add(&mut self, c: &[f64], rank_tol: f64) -> bool {
        let cn = norm(c);
        if cn == 0.0 {
            return false;
        }
        let r = self.residual(c);
        let rn = norm(&r);
        if rn > rank_tol * cn {
            self.vectors.push(r.into_iter().map(|x| x / rn).collect());
            true
        } else {
            false
        }
    }

    fn len(&self) -> usize {
        self.vectors.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    #[serde(rename = "u(n)")]
    Unitary,
    #[serde(rename = "su(n)")]
    SpecialUnitary,
    #[serde(rename = "sp-candidate")]
    SymplecticCandidate,
    #[serde(rename = "other")]
    Other,
    #[serde(rename = "abelian-or-small")]
    AbelianOrSmall,
}

#[derive(Clone, Debug, Serialize)]
pub struct LieClosureResult {
    pub n: usize,
    pub dimension: usize,
    /// Dimension of the projection onto `su(n)` (trace part removed).
    pub traceless_dimension: usize,
    pub classification: Classification,
    pub traceless_generators: bool,
    pub abelian: bool,
    #[serde(skip)]
    pub basis: Vec<CMatrix>,
}

impl LieClosureResult {
    pub fn is_full(&self) -> bool {
        matches!(
            self.classification,
            Classification::Unitary | Classification::SpecialUnitary
        )
    }
}

fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Breadth-first Lie closure of `generators` (skew-Hermitian, common dimension).
pub fn closure(generators: &[CMatrix], tol: &Tolerances) -> Result<LieClosureResult> {
    let Some(first) = generators.first() else {
        return Err(CoreError::Precondition("need at least one generator".into()));
    };
    let n = first.nrows();
    for g in generators {
        if g.nrows() != g.ncols() {
            return Err(CoreError::Structural("generator is not square".into()));
        }
        if g.nrows() != n {
            return Err(CoreError::DimensionMismatch { expected: n, found: g.nrows() });
        }
        let scale = 1.0f64.max(g.norm());
        let d = skew_defect(g);
        if d > tol.hermiticity * scale {
            return Err(CoreError::NotSkewHermitian { defect: d });
        }
    }
    let traceless_generators = generators
        .iter()
        .all(|g| g.trace().norm() <= tol.lie_rank * (1.0 + g.norm()));

    let full = n * n;
    let mut basis = Basis::default();
    let mut mats: Vec<CMatrix> = Vec::new();
    for g in generators {
        if basis.len() < full && basis.try_add(&to_coords(g), tol.lie_rank) {
            mats.push(from_coords(basis.vectors.last().unwrap(), n));
        }
    }

    let mut abelian = true;
    let mut next = 0;
    while next < mats.len() && basis.len() < full {
        for k in 0..next {
            let c = commutator(&mats[next], &mats[k]);
            // basis elements have unit norm
            if c.norm() <= tol.lie_zero {
                continue;
            }
            abelian = false;
            if basis.try_add(&to_coords(&c), tol.lie_rank) {
                mats.push(from_coords(basis.vectors.last().unwrap(), n));
                if basis.len() == full {
                    break;
                }
            }
        }
        next += 1;
    }
    if basis.len() == full && n > 1 {
        abelian = false;
    }

    // projection onto su(n): remove the component along i I / sqrt(n)
    let mut traceless = Basis::default();
    let id_dir: Vec<f64> = (0..full)
        .map(|i| if i < n { 1.0 / (n as f64).sqrt() } else { 0.0 })
        .collect();
    for v in &basis.vectors {
        let p = dot(v, &id_dir);
        let w: Vec<f64> = v.iter().zip(&id_dir).map(|(x, y)| x - p * y).collect();
        traceless.try_add(&w, tol.lie_rank);
    }

    let dimension = basis.len();
    let classification = if dimension == full {
        Classification::Unitary
    } else if dimension == full - 1 && traceless_generators {
        Classification::SpecialUnitary
    } else if abelian {
        Classification::AbelianOrSmall
    } else if n % 2 == 0 && traceless.len() == n * (n + 1) / 2 {
        Classification::SymplecticCandidate
    } else {
        Classification::Other
    };
    Ok(LieClosureResult {
        n,
        dimension,
        traceless_dimension: traceless.len(),
        classification,
        traceless_generators,
        abelian,
        basis: mats,
    })
}

/// `{i H0, i H1, ..., i Hm}`.
pub fn generators_from(h: &ControlHamiltonian) -> Vec<CMatrix> {
    let i = Complex64::i();
    std::iter::once(h.drift())
        .chain(h.controlled())
        .map(|op| op.matrix().map(|z| z * i))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tristate {
    Yes,
    No,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize)]
pub struct Transitivity {
    pub controllable_on_group: bool,
    pub controllable_on_sphere: Tristate,
    /// Whether an antiunitary `J = U K` with `J^2 = -1` commuting with the
    /// algebra was found (only searched for `sp` candidates).
    pub symplectic_witness: Option<bool>,
}

/// Searches for a unitary `U` with `U conj(X) U^-1 = X` for every basis
/// element `X` and `U conj(U) = -I`; such `U` makes the algebra a subalgebra
/// of a conjugate of `sp(n/2)`.
fn symplectic_witness(basis: &[CMatrix], n: usize) -> bool {
    if basis.is_empty() || !n.is_multiple_of(2) {
        return false;
    }
    let nn = n * n;
    let id = CMatrix::identity(n, n);
    // column-major vec: vec(U C) = (C^T kron I) vec(U), vec(X U) = (I kron X) vec(U)
    let mut rows = CMatrix::zeros(basis.len() * nn, nn);
    for (b, x) in basis.iter().enumerate() {
        let block = x.conjugate().transpose().kronecker(&id) - id.kronecker(x);
        rows.view_mut((b * nn, 0), (nn, nn)).copy_from(&block);
    }
    let svd = rows.svd(false, true);
    let Some(v_t) = svd.v_t else { return false };
    let smax = svd.singular_values.max();
    for (idx, &sv) in svd.singular_values.iter().enumerate() {
        if sv > 1e-9 * smax {
            continue;
        }
        let v: Vec<Complex64> = v_t.row(idx).iter().map(|z| z.conj()).collect();
        let u = CMatrix::from_column_slice(n, n, &v);
        let uu = &u * u.adjoint();
        let scale = uu.trace().re / n as f64;
        if scale <= 0.0 {
            continue;
        }
        let unitary_defect = (uu.map(|z| z / scale) - &id).norm();
        let j2 = (&u * u.conjugate()).map(|z| z / scale) + &id;
        if unitary_defect < 1e-8 && j2.norm() < 1e-8 {
            return true;
        }
    }
    false
}

fn traceless_part(x: &CMatrix) -> CMatrix {
    let n = x.nrows();
    let t = x.trace() / n as f64;
    x - CMatrix::identity(n, n) * t
}

/// Decides controllability of the lift on the group and of the system on
/// the sphere from a closure result.
pub fn classify_transitive(result: &LieClosureResult) -> Transitivity {
    let n = result.n;
    let full = n * n;
    let group = result.dimension == full || (result.dimension + 1 == full && result.traceless_generators);
    if group || result.traceless_dimension + 1 == full {
        return Transitivity {
            controllable_on_group: group,
            controllable_on_sphere: Tristate::Yes,
            symplectic_witness: None,
        };
    }
    if n.is_multiple_of(2) && result.traceless_dimension == n * (n + 1) / 2 {
        let projected: Vec<CMatrix> = result.basis.iter().map(traceless_part).collect();
        let witness = symplectic_witness(&projected, n);
        return Transitivity {
            controllable_on_group: false,
            controllable_on_sphere: if witness { Tristate::Yes } else { Tristate::Indeterminate },
            symplectic_witness: Some(witness),
        };
    }
    Transitivity {
        controllable_on_group: false,
        controllable_on_sphere: Tristate::No,
        symplectic_witness: None,
    }
}

/// Jacobi residual `|[A,[B,C]] + [B,[C,A]] + [C,[A,B]]|` (Frobenius).
pub fn jacobi_residual(a: &CMatrix, b: &CMatrix, c: &CMatrix) -> f64 {
    (commutator(a, &commutator(b, c)) + commutator(b, &commutator(c, a)) + commutator(c, &commutator(a, b))).norm()
}

/// Real Gram matrix of the basis, for orthonormality checks.
pub fn gram(basis: &[CMatrix]) -> DMatrix<f64> {
    let k = basis.len();
    DMatrix::from_fn(k, k, |a, b| (basis[a].adjoint() * &basis[b]).trace().re)
}
