//! Reference Hamiltonian families used by tests, benches and the CLI.

use num_complex::Complex64;

use crate::operator::{CMatrix, ControlBox, ControlHamiltonian, HermitianOperator};

fn real(n: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(n, n, entries.iter().map(|&x| Complex64::new(x, 0.0)))
}

pub fn sigma_x() -> CMatrix {
    real(2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn sigma_y() -> CMatrix {
    let i = Complex64::i();
    CMatrix::from_row_slice(2, 2, &[Complex64::new(0.0, 0.0), -i, i, Complex64::new(0.0, 0.0)])
}

pub fn sigma_z() -> CMatrix {
    real(2, &[1.0, 0.0, 0.0, -1.0])
}

fn op(m: CMatrix) -> HermitianOperator {
    HermitianOperator::new(m).expect("reference operator is Hermitian")
}

fn family(h0: CMatrix, hs: Vec<CMatrix>, control_box: ControlBox) -> ControlHamiltonian {
    ControlHamiltonian::new(op(h0), hs.into_iter().map(op).collect(), control_box)
        .expect("reference family is consistent")
}

/// `u1 sigma_x + u2 sigma_z` on `[-1, 1]^2`: gap `2 |u|`, one conical
/// intersection at the origin.
pub fn pauli_model() -> ControlHamiltonian {
    family(
        CMatrix::zeros(2, 2),
        vec![sigma_x(), sigma_z()],
        ControlBox::symmetric(2, 1.0).unwrap(),
    )
}

/// `sigma_z + u1 sigma_x + u2 sigma_z` on `[-2, 2]^2`: intersection at `(0, -1)`.
pub fn shifted_pauli_model() -> ControlHamiltonian {
    family(
        sigma_z(),
        vec![sigma_x(), sigma_z()],
        ControlBox::symmetric(2, 2.0).unwrap(),
    )
}

/// `diag(0,1,2) + u1 diag(1,1,0)` with an inert second control `H2 = 0`,
/// on `[-0.5, 0.5]^2`. Eigenvalues `u1, u1 + 1, 2`.
pub fn diag_counterexample() -> ControlHamiltonian {
    family(
        real(3, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]),
        vec![
            real(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
            CMatrix::zeros(3, 3),
        ],
        ControlBox::symmetric(2, 0.5).unwrap(),
    )
}

/// `u1 sigma_z` with an inert second control: degenerate along the whole
/// line `u1 = 0`, gap independent of `u2`.
pub fn flat_model() -> ControlHamiltonian {
    family(
        CMatrix::zeros(2, 2),
        vec![sigma_z(), CMatrix::zeros(2, 2)],
        ControlBox::symmetric(2, 1.0).unwrap(),
    )
}

/// Three levels where levels 1 and 2 touch at the origin with linear
/// splitting along `u1` but only quadratic splitting along `u2` (second
/// order coupling through level 3).
pub fn quadratic_contact_model() -> ControlHamiltonian {
    family(
        real(3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
        vec![
            real(3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0]),
            real(3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        ],
        ControlBox::symmetric(2, 1.0).unwrap(),
    )
}

/// Real symmetric three-level ladder
/// `diag(2 u1 - 1, 0, 2 u1 + 1) + u2 (|1><2| + |2><3| + h.c.)` on
/// `[-1.5, 1.5] x [-1, 1]`. Levels 1-2 meet conically at `(0.5, 0)` and
/// levels 2-3 at `(-0.5, 0)`; for `u2 != 0` the tridiagonal matrix is
/// irreducible so there are no other degeneracies.
pub fn three_level_ladder() -> ControlHamiltonian {
    family(
        real(3, &[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
        vec![
            real(3, &[2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]),
            real(3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]),
        ],
        ControlBox::new(vec![[-1.5, 1.5], [-1.0, 1.0]]).unwrap(),
    )
}

/// Frozen equally spaced spectrum `diag(0,1,2)` with zero controls.
pub fn frozen_ladder() -> ControlHamiltonian {
    family(
        real(3, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]),
        vec![CMatrix::zeros(3, 3), CMatrix::zeros(3, 3)],
        ControlBox::symmetric(2, 1.0).unwrap(),
    )
}
