//! Location of eigenvalue intersections in control space, the conicality
//! test, and conical-connectedness evidence.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::operator::{ControlBox, ControlHamiltonian, ControlPoint};
use crate::random;
use crate::search::{nelder_mead, SimplexOptions};
use crate::spectrum::{decompose, decompose_matrix, eigenvalues_of, spectral_scale, SpectralPoint};
use crate::tolerances::Tolerances;

/// Settings of the conicality test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicalConfig {
    /// Number of sampled unit directions.
    pub directions: usize,
    /// Largest probe radius as a fraction of the box diameter.
    pub t0_rel: f64,
    /// Minimum slope, times `spectral scale / box diameter`.
    pub c_min_rel: f64,
    /// Largest accepted relative residual of the through-origin fit.
    pub max_fit_residual: f64,
    /// Seed for direction sampling when `m > 3`.
    pub direction_seed: u64,
}

impl Default for ConicalConfig {
    fn default() -> Self {
        Self {
            directions: 32,
            t0_rel: 1e-3,
            c_min_rel: 1e-6,
            max_fit_residual: 0.1,
            direction_seed: 0,
        }
    }
}

/// Evidence that `u_star` is a conical intersection of levels `level` and
/// `level + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicalCertificate {
    pub level: usize,
    pub u_star: ControlPoint,
    pub c_hat: f64,
    pub slopes: Vec<f64>,
    pub others_simple: bool,
    pub t0: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub residual_gap: f64,
    pub fit_residuals: Vec<f64>,
}

impl ConicalCertificate {
    /// Conical and every other eigenvalue simple at `u_star`.
    pub fn passes(&self) -> bool {
        self.others_simple
    }
}

/// Why a degenerate point failed the conicality test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonConical {
    pub level: usize,
    pub u_star: ControlPoint,
    pub slopes: Vec<f64>,
    pub fit_residuals: Vec<f64>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConicalVerdict {
    Conical(ConicalCertificate),
    NonConical(NonConical),
}

impl ConicalVerdict {
    pub fn certificate(&self) -> Option<&ConicalCertificate> {
        match self {
            ConicalVerdict::Conical(c) => Some(c),
            ConicalVerdict::NonConical(_) => None,
        }
    }
}

/// A degenerate interior point found by the search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Located {
    pub u: ControlPoint,
    pub gap: f64,
    pub seed_index: usize,
}

fn level_gap(h: &ControlHamiltonian, u: &[f64], j: usize) -> f64 {
    match h.matrix_at(u) {
        Ok(m) => {
            let ev = eigenvalues_of(&m);
            ev[j] - ev[j - 1]
        }
        Err(_) => f64::INFINITY,
    }
}

fn degeneracy_tau(tol: &Tolerances, ev: &[f64]) -> f64 {
    tol.degeneracy_threshold(ev[ev.len() - 1] - ev[0])
}

/// One Newton step towards a degeneracy of levels `j`, `j + 1`, using the
/// 2x2 block of `H` on their eigenspace (first-order degenerate
/// perturbation theory). Returns the step `delta`.
fn block_newton_step(h: &ControlHamiltonian, sp: &SpectralPoint, j: usize) -> Option<Vec<f64>> {
    let m = h.num_controls();
    let (a, b) = (j - 1, j);
    let phi_a = sp.frame.column(a);
    let phi_b = sp.frame.column(b);
    let mut jac = DMatrix::<f64>::zeros(3, m);
    for (l, hl) in h.controlled().iter().enumerate() {
        let hm = hl.matrix();
        let ha = hm * phi_a;
        let hb = hm * phi_b;
        let aa = phi_a.dotc(&ha).re;
        let bb = phi_b.dotc(&hb).re;
        let ab = phi_a.dotc(&hb);
        jac[(0, l)] = aa - bb;
        jac[(1, l)] = ab.re;
        jac[(2, l)] = ab.im;
    }
    let rhs = DVector::from_vec(vec![sp.eigenvalues[b] - sp.eigenvalues[a], 0.0, 0.0]);
    let svd = jac.svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return None;
    }
    let delta = svd.solve(&rhs, 1e-12 * smax).ok()?;
    Some(delta.iter().copied().collect())
}

fn polish(h: &ControlHamiltonian, j: usize, mut u: Vec<f64>, tol: &Tolerances) -> (Vec<f64>, f64) {
    let bounds = h.control_box();
    let mut g = level_gap(h, &u, j);
    for _ in 0..40 {
        let Ok(m) = h.matrix_at(&u) else { break };
        let Ok((eigenvalues, frame)) = decompose_matrix(&m) else { break };
        if g <= 1e-3 * degeneracy_tau(tol, &eigenvalues) {
            break;
        }
        let sp = SpectralPoint {
            u: ControlPoint(u.clone()),
            eigenvalues,
            frame,
        };
        let Some(delta) = block_newton_step(h, &sp, j) else { break };
        let mut improved = false;
        let mut scale = 1.0;
        for _ in 0..12 {
            let mut trial: Vec<f64> = u.iter().zip(&delta).map(|(x, d)| x + scale * d).collect();
            bounds.clamp(&mut trial);
            let gt = level_gap(h, &trial, j);
            if gt < g {
                u = trial;
                g = gt;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (u, g)
}

fn search_from(h: &ControlHamiltonian, j: usize, seed: &ControlPoint, tol: &Tolerances) -> Option<(ControlPoint, f64)> {
    let bounds = h.control_box();
    let diam = bounds.diameter();
    let objective = |u: &[f64]| {
        let g = level_gap(h, u, j);
        g * g
    };
    let mut start = seed.0.clone();
    bounds.clamp(&mut start);
    let opts = SimplexOptions {
        max_iter: 300 * h.num_controls(),
        f_target: 1e-6 * spectral_guess(h).powi(2),
        x_tol: 1e-10 * diam,
        initial_step: 0.05,
    };
    let coarse = nelder_mead(objective, &start, bounds, &opts);
    let (u, g) = polish(h, j, coarse, tol);
    let ev = eigenvalues_of(&h.matrix_at(&u).ok()?);
    let tau = degeneracy_tau(tol, &ev);
    if g <= tau && bounds.margin(&u) > 1e-6 * diam {
        Some((ControlPoint(u), g))
    } else {
        None
    }
}

fn spectral_guess(h: &ControlHamiltonian) -> f64 {
    h.max_control_norm().max(h.drift().norm()).max(1e-300)
}

/// Degenerate interior points of levels `j`, `j + 1` found from each seed,
/// deduplicated, in seed order.
pub fn find_intersections(
    h: &ControlHamiltonian,
    j: usize,
    seeds: &[ControlPoint],
    tol: &Tolerances,
) -> Result<Vec<Located>> {
    let n = h.dim();
    if j == 0 || j >= n {
        return Err(CoreError::IndexOutOfRange { index: j, max: n - 1 });
    }
    for s in seeds {
        if s.len() != h.num_controls() {
            return Err(CoreError::DimensionMismatch {
                expected: h.num_controls(),
                found: s.len(),
            });
        }
    }
    let runs: Vec<Option<(ControlPoint, f64)>> =
        seeds.par_iter().map(|s| search_from(h, j, s, tol)).collect();
    let dedup_radius = 1e-6 * h.control_box().diameter();
    let mut out: Vec<Located> = Vec::new();
    for (i, r) in runs.into_iter().enumerate() {
        if let Some((u, gap)) = r {
            // first in seed order wins, so extra seeds never change earlier entries
            if !out.iter().any(|p| p.u.distance(&u) <= dedup_radius) {
                out.push(Located { u, gap, seed_index: i });
            }
        }
    }
    Ok(out)
}

/// Best degenerate interior point (smallest residual gap, earliest seed on
/// ties), or `None` when every run stalls above the degeneracy threshold or
/// on the box boundary.
pub fn locate_intersection(
    h: &ControlHamiltonian,
    j: usize,
    seeds: &[ControlPoint],
    tol: &Tolerances,
) -> Result<Option<ControlPoint>> {
    let found = find_intersections(h, j, seeds, tol)?;
    Ok(found
        .into_iter()
        .min_by(|a, b| a.gap.total_cmp(&b.gap).then(a.seed_index.cmp(&b.seed_index)))
        .map(|l| l.u))
}

/// Tests the linear-growth condition of the gap of levels `j`, `j + 1`
/// around `u_star` along sampled unit directions.
pub fn test_conicality(
    h: &ControlHamiltonian,
    u_star: &ControlPoint,
    j: usize,
    config: &ConicalConfig,
    tol: &Tolerances,
) -> Result<ConicalVerdict> {
    let sp = decompose(h, u_star)?;
    let residual_gap = sp.gap(j)?;
    let tau = tol.degeneracy_threshold(sp.diameter());
    if residual_gap > tau {
        return Err(CoreError::NotDegenerate { level: j, gap: residual_gap });
    }
    let bounds = h.control_box();
    let diam = bounds.diameter();
    let t0 = config.t0_rel * diam;
    if bounds.margin(u_star) < t0 {
        return Err(CoreError::Geometry(format!(
            "intersection at {:?} is closer than t0 = {t0:e} to the box boundary",
            u_star.0
        )));
    }
    let c_min = config.c_min_rel * spectral_scale(h) / diam;
    let radii = [t0, 0.5 * t0, 0.25 * t0];
    let directions = random::sphere_directions(h.num_controls(), config.directions, config.direction_seed);

    let fits: Vec<(f64, f64)> = directions
        .par_iter()
        .map(|v| {
            let gaps: Vec<f64> = radii.iter().map(|&t| level_gap(h, &u_star.offset(v, t), j)).collect();
            let stt: f64 = radii.iter().map(|t| t * t).sum();
            let stg: f64 = radii.iter().zip(&gaps).map(|(t, g)| t * g).sum();
            let slope = stg / stt;
            let gnorm = gaps.iter().map(|g| g * g).sum::<f64>().sqrt();
            let rnorm = radii
                .iter()
                .zip(&gaps)
                .map(|(t, g)| (g - slope * t).powi(2))
                .sum::<f64>()
                .sqrt();
            let rel = if gnorm > 0.0 { rnorm / gnorm } else { 0.0 };
            (slope, rel)
        })
        .collect();
    let slopes: Vec<f64> = fits.iter().map(|f| f.0).collect();
    let fit_residuals: Vec<f64> = fits.iter().map(|f| f.1).collect();
    let c_hat = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let worst_fit = fit_residuals.iter().copied().fold(0.0, f64::max);

    let reason = if !(c_hat > 0.0 && c_hat >= c_min) {
        Some(format!("minimum directional slope {c_hat:e} below c_min = {c_min:e}"))
    } else if worst_fit > config.max_fit_residual {
        Some(format!(
            "gap is not linear in t along some direction (relative fit residual {worst_fit:.3})"
        ))
    } else {
        None
    };
    if let Some(reason) = reason {
        return Ok(ConicalVerdict::NonConical(NonConical {
            level: j,
            u_star: u_star.clone(),
            slopes,
            fit_residuals,
            reason,
        }));
    }

    let others_simple = sp
        .eigenvalues
        .windows(2)
        .enumerate()
        .filter(|(i, _)| i + 1 != j)
        .all(|(_, w)| w[1] - w[0] >= 10.0 * tau);

    Ok(ConicalVerdict::Conical(ConicalCertificate {
        level: j,
        u_star: u_star.clone(),
        c_hat,
        slopes,
        others_simple,
        t0,
        k: config.directions,
        residual_gap,
        fit_residuals,
    }))
}

/// Search seeds: the hints, then a shifted Halton sequence over the box.
pub fn search_seeds(bounds: &ControlBox, budget: usize, rng_seed: u64, hints: &[ControlPoint]) -> Vec<ControlPoint> {
    use rand::Rng;
    let m = bounds.dim();
    let mut r = random::rng(rng_seed, 0x5eed);
    let shift: Vec<f64> = (0..m).map(|_| r.random::<f64>()).collect();
    hints
        .iter()
        .cloned()
        .chain((0..budget as u64).map(|i| bounds.from_unit(&random::halton(i, m, &shift))))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub certificate: Option<ConicalCertificate>,
    /// Every degenerate point found for this level.
    pub located: Vec<ControlPoint>,
    /// Why located points were rejected, if none passed.
    pub rejections: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectednessStatus {
    Certified,
    Incomplete,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConnectednessReport {
    pub levels: Vec<LevelReport>,
    pub status: ConnectednessStatus,
    pub checked_region: ControlBox,
    pub seed_budget: usize,
    pub rng_seed: u64,
    pub limitation: String,
}

impl ConnectednessReport {
    pub fn is_certified(&self) -> bool {
        self.status == ConnectednessStatus::Certified
    }

    /// Certificates of all levels, in order, when certified.
    pub fn certificates(&self) -> Option<Vec<&ConicalCertificate>> {
        self.levels.iter().map(|l| l.certificate.as_ref()).collect()
    }
}

const LIMITATION: &str = "only located intersections were tested for conicality; \
absence of non-conical intersections elsewhere in the region is not checked";

/// For every level, searches for a degenerate point and keeps the first one
/// (in seed order) that is conical with all other eigenvalues simple.
pub fn certify_connectedness(
    h: &ControlHamiltonian,
    seed_budget: usize,
    rng_seed: u64,
    hints: &[ControlPoint],
    config: &ConicalConfig,
    tol: &Tolerances,
) -> Result<ConnectednessReport> {
    if seed_budget == 0 {
        return Err(CoreError::Precondition("seed budget must be at least 1".into()));
    }
    let seeds = search_seeds(h.control_box(), seed_budget, rng_seed, hints);
    let levels = (1..h.dim())
        .map(|j| {
            let located = find_intersections(h, j, &seeds, tol)?;
            let mut certificate = None;
            let mut rejections = Vec::new();
            for loc in &located {
                match test_conicality(h, &loc.u, j, config, tol) {
                    Ok(ConicalVerdict::Conical(c)) if c.passes() => {
                        certificate = Some(c);
                        break;
                    }
                    Ok(ConicalVerdict::Conical(_)) => {
                        rejections.push(format!("{:?}: another eigenvalue is not simple", loc.u.0))
                    }
                    Ok(ConicalVerdict::NonConical(nc)) => rejections.push(format!("{:?}: {}", loc.u.0, nc.reason)),
                    Err(e) => rejections.push(format!("{:?}: {e}", loc.u.0)),
                }
            }
            Ok(LevelReport {
                level: j,
                certificate,
                located: located.into_iter().map(|l| l.u).collect(),
                rejections,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let status = if levels.iter().all(|l| l.certificate.is_some()) {
        ConnectednessStatus::Certified
    } else {
        ConnectednessStatus::Incomplete
    };
    Ok(ConnectednessReport {
        levels,
        status,
        checked_region: h.control_box().clone(),
        seed_budget,
        rng_seed,
        limitation: LIMITATION.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::operator::{CMatrix, HermitianOperator};
    use num_complex::Complex64;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn locates_pauli_origin() {
        let h = models::pauli_model();
        let u = locate_intersection(&h, 1, &[ControlPoint::new(vec![0.5, 0.5])], &tol())
            .unwrap()
            .unwrap();
        assert!(u[0].abs() < 1e-6 && u[1].abs() < 1e-6, "{u:?}");
    }

    #[test]
    fn locates_shifted_pauli() {
        let h = models::shifted_pauli_model();
        let seeds = search_seeds(h.control_box(), 8, 1, &[]);
        let found = find_intersections(&h, 1, &seeds, &tol()).unwrap();
        assert!(!found.is_empty());
        for l in &found {
            assert!(l.u[0].abs() < 1e-6 && (l.u[1] + 1.0).abs() < 1e-6, "{:?}", l.u);
        }
    }

    #[test]
    fn diag_counterexample_not_found() {
        let h = models::diag_counterexample();
        let seeds = search_seeds(h.control_box(), 16, 3, &[]);
        assert!(locate_intersection(&h, 1, &seeds, &tol()).unwrap().is_none());
        assert!(locate_intersection(&h, 2, &seeds, &tol()).unwrap().is_none());
    }

    #[test]
    fn locate_index_error() {
        let h = models::pauli_model();
        assert!(matches!(
            locate_intersection(&h, 2, &[ControlPoint::zeros(2)], &tol()),
            Err(CoreError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn boundary_minimizer_is_not_found() {
        // degeneracy at u = (0, -1) sits on the face of [-1, 1]^2
        let h = models::shifted_pauli_model()
            .with_box(ControlBox::symmetric(2, 1.0).unwrap())
            .unwrap();
        let seeds = search_seeds(h.control_box(), 8, 2, &[]);
        assert!(locate_intersection(&h, 1, &seeds, &tol()).unwrap().is_none());
    }

    #[test]
    fn pauli_origin_is_conical_with_slope_two() {
        let h = models::pauli_model();
        let v = test_conicality(&h, &ControlPoint::zeros(2), 1, &ConicalConfig::default(), &tol()).unwrap();
        let c = v.certificate().expect("conical");
        assert!((c.c_hat - 2.0).abs() < 0.1);
        assert!(c.others_simple);
        assert_eq!(c.slopes.len(), 32);
        assert!(c.c_hat <= c.slopes.iter().cloned().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn flat_direction_is_not_conical() {
        let h = models::flat_model();
        let v = test_conicality(&h, &ControlPoint::zeros(2), 1, &ConicalConfig::default(), &tol()).unwrap();
        match v {
            ConicalVerdict::NonConical(nc) => {
                // direction (0, 1) is sample 8 of 32
                assert!(nc.slopes[8].abs() < 1e-12);
                assert!(nc.reason.contains("slope"));
            }
            other => panic!("expected non-conical, got {other:?}"),
        }
    }

    #[test]
    fn quadratic_contact_fails_linear_fit() {
        let h = models::quadratic_contact_model();
        let v = test_conicality(&h, &ControlPoint::zeros(2), 1, &ConicalConfig::default(), &tol()).unwrap();
        match v {
            ConicalVerdict::NonConical(nc) => {
                assert!(nc.fit_residuals[8] > 0.1, "{:?}", nc.fit_residuals);
                assert!(nc.reason.contains("linear"));
            }
            other => panic!("expected non-conical, got {other:?}"),
        }
    }

    #[test]
    fn conicality_preconditions() {
        let h = models::pauli_model();
        assert!(matches!(
            test_conicality(&h, &ControlPoint::new(vec![0.5, 0.0]), 1, &ConicalConfig::default(), &tol()),
            Err(CoreError::NotDegenerate { .. })
        ));
        let shifted = models::shifted_pauli_model()
            .with_box(ControlBox::new(vec![[-1.0, 1.0], [-1.001, 1.0]]).unwrap())
            .unwrap();
        assert!(matches!(
            test_conicality(&shifted, &ControlPoint::new(vec![0.0, -1.0]), 1, &ConicalConfig::default(), &tol()),
            Err(CoreError::Geometry(_))
        ));
    }

    #[test]
    fn triple_degeneracy_is_not_others_simple() {
        // u1 (diag(1,-1,0)) + u2 X_{12}: at the origin all three levels coincide
        let d = HermitianOperator::zeros(3).unwrap();
        let h1 = HermitianOperator::diagonal(&[1.0, -1.0, 0.0]).unwrap();
        let mut x = CMatrix::zeros(3, 3);
        x[(0, 1)] = Complex64::new(1.0, 0.0);
        x[(1, 0)] = Complex64::new(1.0, 0.0);
        let h = ControlHamiltonian::new(
            d,
            vec![h1, HermitianOperator::new(x).unwrap()],
            ControlBox::symmetric(2, 1.0).unwrap(),
        )
        .unwrap();
        // levels 1 and 2 are the pair (-|u|, 0); the fit through the origin
        // of |u| is exact, but level 3 sits on the degenerate point as well
        let v = test_conicality(&h, &ControlPoint::zeros(2), 1, &ConicalConfig::default(), &tol()).unwrap();
        let c = v.certificate().expect("linear splitting of levels 1, 2");
        assert!(!c.others_simple);
        assert!(!c.passes());
    }

    #[test]
    fn connectedness_pauli_certified() {
        let h = models::pauli_model();
        let r = certify_connectedness(&h, 4, 11, &[], &ConicalConfig::default(), &tol()).unwrap();
        assert!(r.is_certified());
        let c = r.levels[0].certificate.as_ref().unwrap();
        assert!(c.u_star.distance(&ControlPoint::zeros(2)) < 1e-6);
    }

    #[test]
    fn connectedness_diag_incomplete() {
        let h = models::diag_counterexample();
        let r = certify_connectedness(&h, 8, 11, &[], &ConicalConfig::default(), &tol()).unwrap();
        assert_eq!(r.status, ConnectednessStatus::Incomplete);
        assert!(r.levels.iter().all(|l| l.located.is_empty()));
    }

    #[test]
    fn connectedness_gapped_incomplete() {
        // sigma_z + 0.1 (u1 sigma_x + u2 sigma_z) stays gapped on [-1,1]^2
        let h = ControlHamiltonian::new(
            HermitianOperator::new(models::sigma_z()).unwrap(),
            vec![
                HermitianOperator::new(models::sigma_x().map(|z| z * 0.1)).unwrap(),
                HermitianOperator::new(models::sigma_z().map(|z| z * 0.1)).unwrap(),
            ],
            ControlBox::symmetric(2, 1.0).unwrap(),
        )
        .unwrap();
        let r = certify_connectedness(&h, 6, 0, &[], &ConicalConfig::default(), &tol()).unwrap();
        assert_eq!(r.status, ConnectednessStatus::Incomplete);
    }

    #[test]
    fn zero_budget_rejected() {
        let h = models::pauli_model();
        assert!(certify_connectedness(&h, 0, 0, &[], &ConicalConfig::default(), &tol()).is_err());
    }

    #[test]
    fn ladder_levels_certified() {
        let h = models::three_level_ladder();
        let r = certify_connectedness(&h, 12, 5, &[], &ConicalConfig::default(), &tol()).unwrap();
        assert!(r.is_certified(), "{r:#?}");
        let c1 = r.levels[0].certificate.as_ref().unwrap();
        let c2 = r.levels[1].certificate.as_ref().unwrap();
        assert!(c1.u_star.distance(&ControlPoint::new(vec![0.5, 0.0])) < 1e-6);
        assert!(c2.u_star.distance(&ControlPoint::new(vec![-0.5, 0.0])) < 1e-6);
    }

    #[test]
    fn larger_budget_keeps_certification() {
        let h = models::three_level_ladder();
        let small = certify_connectedness(&h, 6, 9, &[], &ConicalConfig::default(), &tol()).unwrap();
        let large = certify_connectedness(&h, 24, 9, &[], &ConicalConfig::default(), &tol()).unwrap();
        for (a, b) in small.levels.iter().zip(&large.levels) {
            if a.certificate.is_some() {
                assert_eq!(a.certificate, b.certificate);
            }
        }
    }

    #[test]
    fn certificate_json_keys() {
        let h = models::pauli_model();
        let v = test_conicality(&h, &ControlPoint::zeros(2), 1, &ConicalConfig::default(), &tol()).unwrap();
        let json = serde_json::to_value(v.certificate().unwrap()).unwrap();
        for key in ["level", "u_star", "c_hat", "slopes", "others_simple", "t0", "K"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}
