//! Non-resonance: simple spectrum with pairwise distinct spectral gaps.
//!
//! Only gap distinctness is checked. Full rational independence of the
//! eigenvalues cannot be decided from floating-point spectra, and the
//! coupling-graph criterion only consumes distinct gaps.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::operator::{ControlHamiltonian, ControlPoint};
use crate::random;
use crate::spectrum::{decompose, eigenvalues_of};
use crate::tolerances::Tolerances;

const SCOPE_NOTE: &str = "gap distinctness only; rational independence of the spectrum is not tested";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResonanceReport {
    pub u_bar: ControlPoint,
    pub eigenvalues: Vec<f64>,
    /// Smallest `|(l_k - l_j) - (l_s - l_r)|` over distinct pairs `{j,k} != {r,s}`;
    /// `None` for `n = 2`, where there is a single gap.
    pub min_gap_separation: Option<f64>,
    pub simple: bool,
    pub threshold: f64,
    pub passes: bool,
    pub note: &'static str,
}

/// Gap statistics of an ascending spectrum. Returns
/// `(simple, min_gap_separation, threshold, passes)`.
fn assess(eigenvalues: &[f64], tol: &Tolerances) -> (bool, Option<f64>, f64, bool) {
    let n = eigenvalues.len();
    let diameter = eigenvalues[n - 1] - eigenvalues[0];
    let tau_deg = tol.degeneracy_threshold(diameter);
    let simple = eigenvalues.windows(2).all(|w| w[1] - w[0] > tau_deg);
    let mut gaps: Vec<f64> = (0..n)
        .flat_map(|j| (j + 1..n).map(move |k| (j, k)))
        .map(|(j, k)| eigenvalues[k] - eigenvalues[j])
        .collect();
    gaps.sort_by(f64::total_cmp);
    let separation = gaps
        .windows(2)
        .map(|w| w[1] - w[0])
        .min_by(f64::total_cmp);
    let threshold = tol.resonance_threshold(diameter);
    let passes = simple && separation.is_none_or(|s| s >= threshold);
    (simple, separation, threshold, passes)
}

/// Non-resonance check of a bare spectrum (ascending).
pub fn check_spectrum(eigenvalues: &[f64], u: ControlPoint, tol: &Tolerances) -> ResonanceReport {
    let (simple, min_gap_separation, threshold, passes) = assess(eigenvalues, tol);
    ResonanceReport {
        u_bar: u,
        eigenvalues: eigenvalues.to_vec(),
        min_gap_separation,
        simple,
        threshold,
        passes,
        note: SCOPE_NOTE,
    }
}

pub fn check_nonresonant(h: &ControlHamiltonian, u: &ControlPoint, tol: &Tolerances) -> Result<ResonanceReport> {
    let sp = decompose(h, u)?;
    Ok(check_spectrum(&sp.eigenvalues, u.clone(), tol))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResonanceSample {
    /// First passing draw, by draw index.
    pub report: Option<ResonanceReport>,
    pub acceptance_rate: f64,
    pub budget: usize,
    pub rng_seed: u64,
}

/// Draws `budget` uniform points from the box and returns the first one
/// (in draw order) that passes, with the overall acceptance rate.
pub fn sample_nonresonant(
    h: &ControlHamiltonian,
    budget: usize,
    rng_seed: u64,
    tol: &Tolerances,
) -> Result<ResonanceSample> {
    if budget == 0 {
        return Err(CoreError::Precondition("budget must be at least 1".into()));
    }
    let mut r = random::rng(rng_seed, 0x2e5);
    let m = h.num_controls();
    let draws: Vec<ControlPoint> = (0..budget)
        .map(|_| {
            let s: Vec<f64> = (0..m).map(|_| r.random::<f64>()).collect();
            h.control_box().from_unit(&s)
        })
        .collect();
    let verdicts: Vec<bool> = draws
        .par_iter()
        .map(|u| {
            h.matrix_at(u)
                .map(|mat| assess(&eigenvalues_of(&mat), tol).3)
                .unwrap_or(false)
        })
        .collect();
    let accepted = verdicts.iter().filter(|&&v| v).count();
    let report = match verdicts.iter().position(|&v| v) {
        Some(i) => Some(check_nonresonant(h, &draws[i], tol)?),
        None => None,
    };
    Ok(ResonanceSample {
        report,
        acceptance_rate: accepted as f64 / budget as f64,
        budget,
        rng_seed,
    })
}
