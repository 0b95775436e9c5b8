//! Ordered spectra with eigenvector frames, and continuation of eigenvalue
//! branches along control-space paths.

use std::fmt::Write as _;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::operator::{CMatrix, ControlHamiltonian, ControlPoint};
use crate::tolerances::Tolerances;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Eigenvalues in ascending order and the matching orthonormal frame
/// (column `j` is the eigenvector of `eigenvalues[j]`).
#[derive(Clone, Debug)]
pub struct SpectralPoint {
    pub u: ControlPoint,
    pub eigenvalues: Vec<f64>,
    pub frame: CMatrix,
}

impl SpectralPoint {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `lambda_n - lambda_1`.
    pub fn diameter(&self) -> f64 {
        self.eigenvalues[self.dim() - 1] - self.eigenvalues[0]
    }

    /// Eigenvector `phi_j` for 0-based `j`.
    pub fn vector(&self, j: usize) -> nalgebra::DVectorView<'_, Complex64> {
        self.frame.column(j)
    }

    /// `lambda_{j+1} - lambda_j` for the 1-based level `j`.
    pub fn gap(&self, j: usize) -> Result<f64> {
        let n = self.dim();
        if j == 0 || j >= n {
            return Err(CoreError::IndexOutOfRange { index: j, max: n - 1 });
        }
        Ok(self.eigenvalues[j] - self.eigenvalues[j - 1])
    }

    /// Smallest adjacent gap and its 1-based lower level.
    pub fn min_gap(&self) -> (usize, f64) {
        self.eigenvalues
            .windows(2)
            .enumerate()
            .map(|(j, w)| (j + 1, w[1] - w[0]))
            .fold((1, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }

    pub fn gap_table(&self) -> GapTable {
        GapTable::new(&self.eigenvalues)
    }
}

/// All differences `lambda_j - lambda_k`.
#[derive(Clone, Debug)]
pub struct GapTable {
    n: usize,
    gaps: Vec<f64>,
}

impl GapTable {
    pub fn new(eigenvalues: &[f64]) -> Self {
        let n = eigenvalues.len();
        let mut gaps = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..j {
                let g = eigenvalues[j] - eigenvalues[k];
                gaps[j * n + k] = g;
                gaps[k * n + j] = -g;
            }
        }
        Self { n, gaps }
    }

    /// `lambda_j - lambda_k`, 1-based.
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.gaps[(j - 1) * self.n + (k - 1)]
    }
}

/// Makes the largest-magnitude component of every column real and positive.
fn fix_phases(frame: &mut CMatrix) {
    for mut col in frame.column_iter_mut() {
        let mut best = 0;
        let mut best_norm = -1.0;
        for (i, z) in col.iter().enumerate() {
            let a = z.norm();
            if a > best_norm {
                best_norm = a;
                best = i;
            }
        }
        let z = col[best];
        if z.norm() > 0.0 {
            let phase = z.conj() / z.norm();
            col.iter_mut().for_each(|x| *x *= phase);
            col[best] = Complex64::new(col[best].re, 0.0);
        }
    }
}

/// Sorted eigen-decomposition of a Hermitian matrix with residual checks.
pub fn decompose_matrix(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(CoreError::Numerical { residual: f64::NAN })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut frame = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    fix_phases(&mut frame);

    let scale = 1.0 + eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let mut residual = 0.0f64;
    for (j, lambda) in eigenvalues.iter().enumerate() {
        let phi = frame.column(j);
        let r = (m * phi - phi * Complex64::new(*lambda, 0.0)).norm();
        residual = residual.max(r);
    }
    let ortho = (frame.adjoint() * &frame - CMatrix::identity(n, n)).camax();
    if residual > 1e-9 * scale || ortho > 1e-10 {
        return Err(CoreError::Numerical {
            residual: residual.max(ortho),
        });
    }
    Ok((eigenvalues, frame))
}

/// Eigenvalues only, ascending.
pub fn eigenvalues_of(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Spectrum and frame of `H(u)`; `u` must lie in the control box.
pub fn decompose(h: &ControlHamiltonian, u: &ControlPoint) -> Result<SpectralPoint> {
    if u.len() != h.num_controls() {
        return Err(CoreError::DimensionMismatch {
            expected: h.num_controls(),
            found: u.len(),
        });
    }
    if !h.control_box().contains(u) {
        return Err(CoreError::Geometry(format!("point {:?} outside the control box", u.0)));
    }
    let (eigenvalues, frame) = decompose_matrix(&h.matrix_at(u)?)?;
    Ok(SpectralPoint {
        u: u.clone(),
        eigenvalues,
        frame,
    })
}

/// `lambda_{j+1} - lambda_j` of `sp`, 1-based.
pub fn gap(sp: &SpectralPoint, j: usize) -> Result<f64> {
    sp.gap(j)
}

/// Largest spectral diameter over the box corners and center; the energy
/// scale used by relative thresholds that refer to the whole family.
pub fn spectral_scale(h: &ControlHamiltonian) -> f64 {
    let b = h.control_box();
    let mut pts = b.corners();
    pts.push(b.center());
    pts.iter()
        .filter_map(|u| h.matrix_at(u).ok())
        .map(|m| {
            let ev = eigenvalues_of(&m);
            ev[ev.len() - 1] - ev[0]
        })
        .fold(0.0, f64::max)
}

/// Spectra along a path, with continuous branch labels.
#[derive(Clone, Debug, Serialize)]
pub struct TrackedSpectrum {
    #[serde(skip)]
    pub points: Vec<SpectralPoint>,
    /// `labels[k][pos]` is the 1-based branch occupying sorted position `pos`
    /// at step `k`.
    pub labels: Vec<Vec<usize>>,
}

impl TrackedSpectrum {
    /// Eigenvalue of branch `b` (1-based) at step `k`.
    pub fn branch_value(&self, k: usize, b: usize) -> f64 {
        let pos = self.labels[k].iter().position(|&x| x == b).expect("label present");
        self.points[k].eigenvalues[pos]
    }

    /// CSV with columns `step, u_1..u_m, lambda_1..lambda_n, branch_1..branch_n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(first) = self.points.first() {
            write_spectrum_header(&mut out, first.u.len(), first.dim());
        }
        for (k, (p, l)) in self.points.iter().zip(&self.labels).enumerate() {
            write_spectrum_row(&mut out, k, p, l);
        }
        out
    }
}

pub(crate) fn write_spectrum_header(out: &mut String, m: usize, n: usize) {
    out.push_str("step");
    for l in 1..=m {
        let _ = write!(out, ",u_{l}");
    }
    for j in 1..=n {
        let _ = write!(out, ",lambda_{j}");
    }
    for j in 1..=n {
        let _ = write!(out, ",branch_{j}");
    }
    out.push('\n');
}

pub(crate) fn write_spectrum_row(out: &mut String, step: usize, p: &SpectralPoint, labels: &[usize]) {
    let _ = write!(out, "{step}");
    for x in p.u.iter() {
        let _ = write!(out, ",{x}");
    }
    for x in &p.eigenvalues {
        let _ = write!(out, ",{x}");
    }
    for b in labels {
        let _ = write!(out, ",{b}");
    }
    out.push('\n');
}

/// Incremental branch continuation by maximal frame overlap.
///
/// Points where any adjacent gap is at or below the degeneracy threshold keep
/// the previous labels and do not replace the reference frame, so a path
/// that steps exactly onto a crossing is still relabeled correctly on the
/// far side.
#[derive(Clone, Debug)]
pub struct BranchTracker {
    labels: Vec<usize>,
    reference: Option<(CMatrix, Vec<usize>)>,
    tol: Tolerances,
}

impl BranchTracker {
    pub fn new(n: usize, tol: Tolerances) -> Self {
        Self {
            labels: (1..=n).collect(),
            reference: None,
            tol,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn is_degenerate(&self, sp: &SpectralPoint) -> bool {
        let tau = self.tol.degeneracy_threshold(sp.diameter());
        sp.min_gap().1 <= tau
    }

    /// Assigns labels for the next point and returns them.
    pub fn advance(&mut self, sp: &SpectralPoint) -> &[usize] {
        if self.is_degenerate(sp) {
            return &self.labels;
        }
        match &self.reference {
            None => {}
            Some((frame, ref_labels)) => {
                let n = sp.dim();
                let overlaps = frame.adjoint() * &sp.frame;
                let mut pairs: Vec<(f64, usize, usize)> = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .map(|(i, j)| (overlaps[(i, j)].norm(), i, j))
                    .collect();
                pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
                let mut used_old = vec![false; n];
                let mut new_labels = vec![0usize; n];
                for (_, i, j) in pairs {
                    if !used_old[i] && new_labels[j] == 0 {
                        used_old[i] = true;
                        new_labels[j] = ref_labels[i];
                    }
                }
                self.labels = new_labels;
            }
        }
        self.reference = Some((sp.frame.clone(), self.labels.clone()));
        &self.labels
    }
}

/// Decomposes `H` along `path` and labels branches continuously.
///
/// Consecutive points must be at most `step_bound` apart. Each labeled
/// branch is checked against the Lipschitz bound `sum_l ||H_l||` per unit of
/// control distance; a violation means the matching failed and the path
/// needs refinement.
pub fn track(
    h: &ControlHamiltonian,
    path: &[ControlPoint],
    step_bound: f64,
    tol: &Tolerances,
) -> Result<TrackedSpectrum> {
    for (k, w) in path.windows(2).enumerate() {
        let length = w[0].distance(&w[1]);
        if length > step_bound {
            return Err(CoreError::RefinementNeeded {
                step: k + 1,
                length,
                bound: step_bound,
            });
        }
    }
    let lipschitz = h.control_norms().iter().sum::<f64>() * (1.0 + 1e-6);
    let mut tracker = BranchTracker::new(h.dim(), *tol);
    let mut out = TrackedSpectrum {
        points: Vec::with_capacity(path.len()),
        labels: Vec::with_capacity(path.len()),
    };
    for (k, u) in path.iter().enumerate() {
        let sp = decompose(h, u)?;
        let labels = tracker.advance(&sp).to_vec();
        if let Some(prev) = out.points.last() {
            let prev_labels = out.labels.last().unwrap();
            let bound = lipschitz * prev.u.distance(u) + 1e-10 * (1.0 + sp.diameter());
            for b in 1..=h.dim() {
                let p0 = prev_labels.iter().position(|&x| x == b).unwrap();
                let p1 = labels.iter().position(|&x| x == b).unwrap();
                if (sp.eigenvalues[p1] - prev.eigenvalues[p0]).abs() > bound {
                    return Err(CoreError::BranchDiscontinuity { step: k });
                }
            }
        }
        out.points.push(sp);
        out.labels.push(labels);
    }
    Ok(out)
}

/// `count` evenly spaced points on the segment from `a` to `b`, endpoints included.
pub fn segment(a: &ControlPoint, b: &ControlPoint, count: usize) -> Vec<ControlPoint> {
    if count <= 1 {
        return vec![a.clone()];
    }
    (0..count)
        .map(|i| a.lerp(b, i as f64 / (count - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use proptest::prelude::*;

    #[test]
    fn sigma_z_spectrum() {
        let (ev, _) = decompose_matrix(&models::sigma_z()).unwrap();
        assert_eq!(ev, vec![-1.0, 1.0]);
    }

    #[test]
    fn diag_counterexample_spectrum_and_gap() {
        let h = models::diag_counterexample();
        let sp = decompose(&h, &ControlPoint::new(vec![0.5, 0.0])).unwrap();
        assert_eq!(sp.eigenvalues, vec![0.5, 1.5, 2.0]);
        assert_eq!(sp.gap(2).unwrap(), 0.5);
    }

    #[test]
    fn pauli_spectrum_and_gap() {
        let h = models::pauli_model();
        let sp = decompose(&h, &ControlPoint::new(vec![0.3, 0.4])).unwrap();
        assert!((sp.eigenvalues[0] + 0.5).abs() < 1e-14);
        assert!((sp.eigenvalues[1] - 0.5).abs() < 1e-14);
        let sz = decompose_matrix(&models::sigma_z()).unwrap();
        let sp_z = SpectralPoint { u: ControlPoint::zeros(2), eigenvalues: sz.0, frame: sz.1 };
        assert_eq!(sp_z.gap(1).unwrap(), 2.0);
        for (t, ang) in [(0.1, 0.3), (0.01, 2.0), (0.7, -1.2)] {
            let u = ControlPoint::new(vec![t * f64::cos(ang), t * f64::sin(ang)]);
            let g = decompose(&h, &u).unwrap().gap(1).unwrap();
            assert!((g - 2.0 * t).abs() < 1e-13);
        }
    }

    #[test]
    fn gap_index_errors() {
        let h = models::pauli_model();
        let sp = decompose(&h, &ControlPoint::zeros(2)).unwrap();
        assert!(matches!(sp.gap(0), Err(CoreError::IndexOutOfRange { .. })));
        assert!(matches!(sp.gap(2), Err(CoreError::IndexOutOfRange { .. })));
    }

    #[test]
    fn decompose_rejects_outside_box() {
        let h = models::pauli_model();
        assert!(matches!(
            decompose(&h, &ControlPoint::new(vec![2.0, 0.0])),
            Err(CoreError::Geometry(_))
        ));
    }

    #[test]
    fn phase_convention() {
        let h = models::three_level_ladder();
        let sp = decompose(&h, &ControlPoint::new(vec![0.1, 0.3])).unwrap();
        for j in 0..3 {
            let col = sp.vector(j);
            let (i, _) = col
                .iter()
                .enumerate()
                .fold((0, -1.0), |a, (i, z)| if z.norm() > a.1 { (i, z.norm()) } else { a });
            assert!(col[i].im == 0.0 && col[i].re > 0.0);
        }
    }

    #[test]
    fn gap_table_antisymmetric() {
        let t = GapTable::new(&[0.0, 1.0, 3.0]);
        assert_eq!(t.get(3, 1), 3.0);
        assert_eq!(t.get(1, 3), -3.0);
        assert_eq!(t.get(2, 2), 0.0);
    }

    #[test]
    fn track_without_crossing_keeps_labels() {
        let h = models::pauli_model();
        let path = segment(&ControlPoint::new(vec![0.5, 0.5]), &ControlPoint::new(vec![0.5, -0.5]), 41);
        let tr = track(&h, &path, 0.1, &Tolerances::default()).unwrap();
        assert!(tr.labels.iter().all(|l| l == &vec![1, 2]));
    }

    #[test]
    fn track_through_origin_swaps_labels() {
        let h = models::pauli_model();
        // odd count so the middle point lands exactly on the crossing
        let path = segment(&ControlPoint::new(vec![-0.6, -0.8]), &ControlPoint::new(vec![0.6, 0.8]), 21);
        let tr = track(&h, &path, 0.2, &Tolerances::default()).unwrap();
        assert_eq!(tr.labels[0], vec![1, 2]);
        assert_eq!(tr.labels[20], vec![2, 1]);
        // branch 1 starts at -1 and continues analytically to +1
        assert!((tr.branch_value(0, 1) + 1.0).abs() < 1e-12);
        assert!((tr.branch_value(20, 1) - 1.0).abs() < 1e-12);

        let path = segment(&ControlPoint::new(vec![-0.6, -0.8]), &ControlPoint::new(vec![0.6, 0.8]), 20);
        let tr = track(&h, &path, 0.2, &Tolerances::default()).unwrap();
        assert_eq!(tr.labels[19], vec![2, 1]);
    }

    #[test]
    fn track_constant_path() {
        let h = models::three_level_ladder();
        let path = vec![ControlPoint::new(vec![0.2, 0.1]); 5];
        let tr = track(&h, &path, 0.1, &Tolerances::default()).unwrap();
        for p in &tr.points {
            assert_eq!(p.eigenvalues, tr.points[0].eigenvalues);
        }
    }

    #[test]
    fn track_step_bound() {
        let h = models::pauli_model();
        let path = segment(&ControlPoint::new(vec![-1.0, 0.0]), &ControlPoint::new(vec![1.0, 0.0]), 3);
        assert!(matches!(
            track(&h, &path, 0.5, &Tolerances::default()),
            Err(CoreError::RefinementNeeded { step: 1, .. })
        ));
    }

    #[test]
    fn tracked_csv_layout() {
        let h = models::pauli_model();
        let path = segment(&ControlPoint::new(vec![0.1, 0.2]), &ControlPoint::new(vec![0.3, 0.2]), 3);
        let csv = track(&h, &path, 1.0, &Tolerances::default()).unwrap().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "step,u_1,u_2,lambda_1,lambda_2,branch_1,branch_2");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0.1,0.2,"));
        assert!(lines[1].ends_with(",1,2"));
    }

    #[test]
    fn decompose_deterministic() {
        let h = models::three_level_ladder();
        let u = ControlPoint::new(vec![0.37, -0.21]);
        let a = decompose(&h, &u).unwrap();
        let b = decompose(&h, &u).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.frame, b.frame);
    }

    fn random_family(seed: u64, n: usize) -> ControlHamiltonian {
        let mut r = crate::random::rng(seed, 0);
        let ops: Vec<_> = (0..3)
            .map(|_| crate::operator::HermitianOperator::new(crate::random::gue(n, &mut r)).unwrap())
            .collect();
        ControlHamiltonian::new(
            ops[0].clone(),
            ops[1..].to_vec(),
            crate::operator::ControlBox::symmetric(2, 2.0).unwrap(),
        )
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn spectral_point_invariants(seed in 0u64..10_000, n in 2usize..7, u1 in -2.0f64..2.0, u2 in -2.0f64..2.0) {
            let h = random_family(seed, n);
            let u = ControlPoint::new(vec![u1, u2]);
            let sp = decompose(&h, &u).unwrap();
            let m = h.matrix_at(&u).unwrap();
            prop_assert!(sp.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            let sum: f64 = sp.eigenvalues.iter().sum();
            let tr = m.trace().re;
            prop_assert!((sum - tr).abs() <= 1e-9 * (1.0 + tr.abs()));
        }

        #[test]
        fn weyl_bound(seed in 0u64..10_000, a in prop::array::uniform4(-2.0f64..2.0)) {
            let h = random_family(seed, 4);
            let u = ControlPoint::new(vec![a[0], a[1]]);
            let v = ControlPoint::new(vec![a[2], a[3]]);
            let su = decompose(&h, &u).unwrap();
            let sv = decompose(&h, &v).unwrap();
            let bound: f64 = (0..2).map(|l| (u[l] - v[l]).abs() * h.control_norms()[l]).sum();
            for j in 0..4 {
                prop_assert!((su.eigenvalues[j] - sv.eigenvalues[j]).abs() <= bound + 1e-12);
            }
        }
    }
}
