//! Slow control paths through conical intersections and the time-dependent
//! Schrödinger propagator `i psi' = H(u(t)) psi`.

use std::fmt::Write as _;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conical::{ConicalCertificate, ConnectednessReport};
use crate::error::{CoreError, Result};
use crate::operator::{CMatrix, ControlBox, ControlHamiltonian, ControlPoint};
use crate::random;
use crate::resonance::check_nonresonant;
use crate::spectrum::{decompose, decompose_matrix, eigenvalues_of, BranchTracker, SpectralPoint};
use crate::tolerances::Tolerances;

pub type CVector = DVector<Complex64>;

/// Largest `||H(u)|| h` per step.
pub const STEP_NORM_BOUND: f64 = 0.1;
pub const DEFAULT_STEP_BUDGET: u64 = 100_000_000;

/// Piecewise-linear control path; segment `k` runs from `waypoints[k]` to
/// `waypoints[k + 1]` in time `durations[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub waypoints: Vec<ControlPoint>,
    pub durations: Vec<f64>,
    pub epsilon: f64,
}

impl ControlPath {
    pub fn new(waypoints: Vec<ControlPoint>, durations: Vec<f64>, epsilon: f64) -> Result<Self> {
        if waypoints.len() < 2 || durations.len() + 1 != waypoints.len() {
            return Err(CoreError::Structural(format!(
                "{} waypoints need {} durations, got {}",
                waypoints.len(),
                waypoints.len().saturating_sub(1).max(1),
                durations.len()
            )));
        }
        let m = waypoints[0].len();
        if let Some(w) = waypoints.iter().find(|w| w.len() != m) {
            return Err(CoreError::DimensionMismatch { expected: m, found: w.len() });
        }
        if durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(CoreError::Precondition("segment durations must be positive".into()));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(CoreError::Precondition("epsilon must be positive".into()));
        }
        Ok(Self {
            waypoints,
            durations,
            epsilon,
        })
    }

    /// Durations `segment length / epsilon`.
    pub fn at_speed(waypoints: Vec<ControlPoint>, epsilon: f64) -> Result<Self> {
        let durations = waypoints.windows(2).map(|w| w[0].distance(&w[1]) / epsilon).collect();
        Self::new(waypoints, durations, epsilon)
    }

    /// Constant control `u` for time `duration`.
    pub fn hold(u: ControlPoint, duration: f64) -> Result<Self> {
        Self::new(vec![u.clone(), u], vec![duration], 1.0)
    }

    pub fn num_controls(&self) -> usize {
        self.waypoints[0].len()
    }

    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    pub fn end(&self) -> &ControlPoint {
        self.waypoints.last().unwrap()
    }

    fn check_against(&self, h: &ControlHamiltonian) -> Result<()> {
        if self.num_controls() != h.num_controls() {
            return Err(CoreError::DimensionMismatch {
                expected: h.num_controls(),
                found: self.num_controls(),
            });
        }
        if let Some(w) = self.waypoints.iter().find(|w| !h.control_box().contains(w)) {
            return Err(CoreError::Geometry(format!("waypoint {:?} outside the control box", w.0)));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("path serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let p: ControlPath = serde_json::from_str(s)?;
        Self::new(p.waypoints, p.durations, p.epsilon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagateOptions {
    /// Multiplies the number of steps of every segment.
    pub refine: u64,
    /// Record every `record_stride`-th step; the final step is always recorded.
    pub record_stride: u64,
    pub step_budget: u64,
    pub tol: Tolerances,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            refine: 1,
            record_stride: 1,
            step_budget: DEFAULT_STEP_BUDGET,
            tol: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub controls: Vec<ControlPoint>,
    pub states: Vec<CVector>,
    /// `populations[k][b - 1] = |<phi_b(u(t_k)), psi(t_k)>|^2` for branch `b`.
    pub populations: Vec<Vec<f64>>,
    /// Sorted position `j` carries branch `labels[k][j]`.
    pub labels: Vec<Vec<usize>>,
    pub norm_defect: Vec<f64>,
    pub steps: u64,
}

impl StateTrajectory {
    pub fn final_state(&self) -> &CVector {
        self.states.last().unwrap()
    }

    pub fn max_norm_defect(&self) -> f64 {
        self.norm_defect.iter().copied().fold(0.0, f64::max)
    }

    /// Population of branch `b` (1-based) over time.
    pub fn branch_population(&self, b: usize) -> Vec<f64> {
        self.populations.iter().map(|p| p[b - 1]).collect()
    }

    /// Columns `t, u_1.., pop_1.., norm_defect`, one row per recorded time.
    pub fn to_csv(&self) -> String {
        let m = self.controls.first().map_or(0, |u| u.len());
        let n = self.populations.first().map_or(0, |p| p.len());
        let mut out = String::from("t");
        (1..=m).for_each(|l| write!(out, ",u_{l}").unwrap());
        (1..=n).for_each(|b| write!(out, ",pop_{b}").unwrap());
        out.push_str(",norm_defect\n");
        for k in 0..self.times.len() {
            write!(out, "{:e}", self.times[k]).unwrap();
            for x in self.controls[k].iter() {
                write!(out, ",{x:e}").unwrap();
            }
            for p in &self.populations[k] {
                write!(out, ",{p:e}").unwrap();
            }
            writeln!(out, ",{:e}", self.norm_defect[k]).unwrap();
        }
        out
    }
}

/// `exp(-i H h)` from the eigendecomposition of `H`.
pub fn step_propagator(hm: &CMatrix, h: f64) -> Result<CMatrix> {
    let (eigs, v) = decompose_matrix(hm)?;
    let mut scaled = v.clone();
    for (j, lambda) in eigs.iter().enumerate() {
        let z = Complex64::from_polar(1.0, -lambda * h);
        scaled.column_mut(j).iter_mut().for_each(|x| *x *= z);
    }
    Ok(scaled * v.adjoint())
}

fn spectral_norm(hm: &CMatrix) -> f64 {
    eigenvalues_of(hm).iter().fold(0.0f64, |a, l| a.max(l.abs()))
}

/// Steps per segment so that `||H(u)|| h <= STEP_NORM_BOUND` along it. The
/// spectral norm is convex in `u`, so its maximum on a segment sits at an end.
fn segment_steps(h: &ControlHamiltonian, path: &ControlPath, refine: u64) -> Result<Vec<u64>> {
    path.waypoints
        .windows(2)
        .zip(&path.durations)
        .map(|(w, &d)| {
            let norm = spectral_norm(&h.matrix_at(&w[0])?).max(spectral_norm(&h.matrix_at(&w[1])?));
            let base = (d * norm / STEP_NORM_BOUND).ceil().max(1.0);
            Ok((base as u64).saturating_mul(refine))
        })
        .collect()
}

fn populations(sp: &SpectralPoint, labels: &[usize], psi: &CVector) -> Vec<f64> {
    let mut pops = vec![0.0; sp.dim()];
    for (j, &b) in labels.iter().enumerate() {
        pops[b - 1] = sp.vector(j).dotc(psi).norm_sqr();
    }
    pops
}

/// Midpoint exponential integration of `i psi' = H(u(t)) psi` along `path`.
pub fn propagate(
    h: &ControlHamiltonian,
    path: &ControlPath,
    psi0: &CVector,
    opts: &PropagateOptions,
) -> Result<StateTrajectory> {
    if psi0.len() != h.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: h.dim(),
            found: psi0.len(),
        });
    }
    if (psi0.norm() - 1.0).abs() > 1e-9 {
        return Err(CoreError::Precondition(format!(
            "initial state must have unit norm (norm {})",
            psi0.norm()
        )));
    }
    if opts.refine == 0 || opts.record_stride == 0 {
        return Err(CoreError::Precondition("refine and record_stride must be at least 1".into()));
    }
    path.check_against(h)?;
    let counts = segment_steps(h, path, opts.refine)?;
    let total = counts.iter().fold(0u64, |a, &c| a.saturating_add(c));
    if total > opts.step_budget {
        return Err(CoreError::StepBudget {
            steps: total,
            budget: opts.step_budget,
        });
    }

    let mut tracker = BranchTracker::new(h.dim(), opts.tol);
    let mut psi = psi0.clone();
    let mut t = 0.0;
    let sp0 = decompose(h, &path.waypoints[0])?;
    let labels0 = tracker.advance(&sp0).to_vec();
    let cap = (total / opts.record_stride + 2) as usize;
    let mut traj = StateTrajectory {
        times: Vec::with_capacity(cap),
        controls: Vec::with_capacity(cap),
        states: Vec::with_capacity(cap),
        populations: Vec::with_capacity(cap),
        labels: Vec::with_capacity(cap),
        norm_defect: Vec::with_capacity(cap),
        steps: total,
    };
    let mut record = |t: f64, sp: &SpectralPoint, labels: &[usize], psi: &CVector| {
        traj.times.push(t);
        traj.controls.push(sp.u.clone());
        traj.populations.push(populations(sp, labels, psi));
        traj.labels.push(labels.to_vec());
        traj.norm_defect.push((psi.norm() - 1.0).abs());
        traj.states.push(psi.clone());
    };
    record(t, &sp0, &labels0, &psi);

    let mut step = 0u64;
    for (k, w) in path.waypoints.windows(2).enumerate() {
        let n_k = counts[k];
        let dt = path.durations[k] / n_k as f64;
        for i in 0..n_k {
            let mid = w[0].lerp(&w[1], (i as f64 + 0.5) / n_k as f64);
            psi = step_propagator(&h.matrix_at(&mid)?, dt)? * psi;
            t += dt;
            step += 1;
            let end = if i + 1 == n_k {
                w[1].clone()
            } else {
                w[0].lerp(&w[1], (i + 1) as f64 / n_k as f64)
            };
            let sp = decompose(h, &end)?;
            let labels = tracker.advance(&sp).to_vec();
            if step.is_multiple_of(opts.record_stride) || step == total {
                record(t, &sp, &labels, &psi);
            }
        }
    }
    Ok(traj)
}

fn normalized(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(CoreError::Precondition("direction must be a nonzero vector".into()));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn check_passage(h: &ControlHamiltonian, cert: &ConicalCertificate, rho: f64, epsilon: f64) -> Result<()> {
    if cert.u_star.len() != h.num_controls() {
        return Err(CoreError::DimensionMismatch {
            expected: h.num_controls(),
            found: cert.u_star.len(),
        });
    }
    if !(rho.is_finite() && rho > 0.0) || !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(CoreError::Precondition("rho and epsilon must be positive".into()));
    }
    let margin = h.control_box().margin(&cert.u_star);
    if rho > margin {
        return Err(CoreError::Geometry(format!(
            "rho = {rho} exceeds the distance {margin} from the intersection to the box boundary"
        )));
    }
    Ok(())
}

/// Direction of steepest gap opening at the intersection, among the sampled
/// test directions.
pub fn steepest_direction(h: &ControlHamiltonian, cert: &ConicalCertificate) -> Result<Vec<f64>> {
    let mut directions = random::sphere_directions(h.num_controls(), cert.k.max(1), 0);
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, v) in directions.iter().enumerate() {
        let ev = eigenvalues_of(&h.matrix_at(&cert.u_star.offset(v, cert.t0))?);
        let g = ev[cert.level] - ev[cert.level - 1];
        if g > best.0 {
            best = (g, i);
        }
    }
    Ok(directions.swap_remove(best.1))
}

/// Straight passage `u* - rho v -> u* -> u* + rho v`, each leg taking
/// `rho / epsilon`. Without `direction`, `v` is the steepest direction.
pub fn plan_passage(
    h: &ControlHamiltonian,
    cert: &ConicalCertificate,
    rho: f64,
    epsilon: f64,
    direction: Option<&[f64]>,
) -> Result<ControlPath> {
    check_passage(h, cert, rho, epsilon)?;
    let v = match direction {
        Some(d) => normalized(d)?,
        None => steepest_direction(h, cert)?,
    };
    ControlPath::new(
        vec![cert.u_star.offset(&v, -rho), cert.u_star.clone(), cert.u_star.offset(&v, rho)],
        vec![rho / epsilon; 2],
        epsilon,
    )
}

/// Passage entering from `u* + rho a` and leaving towards `u* + rho b`.
pub fn plan_turned_passage(
    h: &ControlHamiltonian,
    cert: &ConicalCertificate,
    rho: f64,
    epsilon: f64,
    from: &[f64],
    to: &[f64],
) -> Result<ControlPath> {
    check_passage(h, cert, rho, epsilon)?;
    let (a, b) = (normalized(from)?, normalized(to)?);
    ControlPath::new(
        vec![cert.u_star.offset(&a, rho), cert.u_star.clone(), cert.u_star.offset(&b, rho)],
        vec![rho / epsilon; 2],
        epsilon,
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClimbOptions {
    /// Passage leg length; derived from the geometry when `None`.
    pub rho: Option<f64>,
    /// Clearance kept from other intersections; `rho / 2` when `None`.
    pub delta: Option<f64>,
    pub propagate: PropagateOptions,
}

#[derive(Clone, Debug)]
pub struct Climb {
    pub path: ControlPath,
    pub trajectory: StateTrajectory,
    pub rho: f64,
    pub delta: f64,
    /// `|<phi_n(u_end), psi(T)>|^2`
    pub final_population: f64,
}

fn default_rho(report_points: &[&ControlPoint], anchor: &ControlPoint, bounds: &ControlBox) -> f64 {
    let mut rho = 0.5 * anchor.distance(report_points[0]);
    for (i, p) in report_points.iter().enumerate() {
        rho = rho.min(0.5 * bounds.margin(p));
        for q in &report_points[i + 1..] {
            rho = rho.min(0.25 * p.distance(q));
        }
    }
    rho
}

fn closest_on_segment(a: &ControlPoint, b: &ControlPoint, c: &ControlPoint) -> (ControlPoint, f64) {
    let d: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| y - x).collect();
    let dd: f64 = d.iter().map(|x| x * x).sum();
    let s = if dd > 0.0 {
        let dc: f64 = d.iter().zip(c.iter().zip(a.iter())).map(|(di, (ci, ai))| di * (ci - ai)).sum();
        (dc / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let p = a.lerp(b, s);
    let dist = p.distance(c);
    (p, dist)
}

/// A unit vector orthogonal to `d`.
fn perpendicular(d: &[f64]) -> Vec<f64> {
    let dn = normalized(d).unwrap_or_else(|_| vec![0.0; d.len()]);
    let axis = (0..d.len())
        .min_by(|&i, &j| dn[i].abs().total_cmp(&dn[j].abs()))
        .unwrap_or(0);
    let mut e = vec![0.0; d.len()];
    e[axis] = 1.0;
    let proj: f64 = dn[axis];
    let w: Vec<f64> = e.iter().zip(&dn).map(|(x, y)| x - proj * y).collect();
    normalized(&w).expect("coordinate axis independent of d")
}

/// Straight connector from `a` to `b`, with detour waypoints keeping at
/// least `delta` from every obstacle.
fn connector(
    a: &ControlPoint,
    b: &ControlPoint,
    obstacles: &[&ControlPoint],
    delta: f64,
    bounds: &ControlBox,
    depth: usize,
) -> Result<Vec<ControlPoint>> {
    let hit = obstacles
        .iter()
        .map(|c| (c, closest_on_segment(a, b, c)))
        .filter(|(_, (_, dist))| *dist < delta)
        .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1));
    let Some((c, (p, _))) = hit else {
        return Ok(vec![b.clone()]);
    };
    if depth == 0 {
        return Err(CoreError::Geometry(format!(
            "no connector from {:?} to {:?} keeps clear of {:?}",
            a.0, b.0, c.0
        )));
    }
    let away: Vec<f64> = p.iter().zip(c.iter()).map(|(x, y)| x - y).collect();
    let n = normalized(&away).unwrap_or_else(|_| {
        let d: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| y - x).collect();
        perpendicular(&d)
    });
    let w = [1.0, -1.0]
        .iter()
        .map(|s| c.offset(&n, 2.0 * delta * s))
        .find(|w| bounds.contains(w))
        .ok_or_else(|| CoreError::Geometry(format!("detour around {:?} leaves the control box", c.0)))?;
    let mut out = connector(a, &w, obstacles, delta, bounds, depth - 1)?;
    out.extend(connector(&w, b, obstacles, delta, bounds, depth - 1)?);
    Ok(out)
}

/// Path from `anchor` through the certified intersections of levels
/// `1, ..., n - 1` in turn, with `rho` and `delta`. Each passage is straight
/// and collinear with the connector that leads into it.
pub fn plan_climb(
    h: &ControlHamiltonian,
    report: &ConnectednessReport,
    anchor: &ControlPoint,
    epsilon: f64,
    opts: &ClimbOptions,
) -> Result<(ControlPath, f64, f64)> {
    let certs = report
        .certificates()
        .filter(|_| report.is_certified())
        .ok_or_else(|| CoreError::Precondition("connectedness is not certified".into()))?;
    let resonance = check_nonresonant(h, anchor, &opts.propagate.tol)?;
    if !resonance.passes {
        return Err(CoreError::Precondition(format!("anchor {:?} is resonant", anchor.0)));
    }
    let points: Vec<&ControlPoint> = certs.iter().map(|c| &c.u_star).collect();
    let bounds = h.control_box();
    let rho = opts.rho.unwrap_or_else(|| default_rho(&points, anchor, bounds));
    let delta = opts.delta.unwrap_or(0.5 * rho);
    if !(rho > 0.0 && delta > 0.0) {
        return Err(CoreError::Geometry("anchor coincides with an intersection".into()));
    }
    let located: Vec<&ControlPoint> = report.levels.iter().flat_map(|l| l.located.iter()).collect();

    let mut waypoints = vec![anchor.clone()];
    for cert in &certs {
        check_passage(h, cert, rho, epsilon)?;
        let pos = waypoints.last().unwrap().clone();
        let dir: Vec<f64> = cert.u_star.iter().zip(pos.iter()).map(|(a, b)| a - b).collect();
        let v = normalized(&dir)?;
        let entry = cert.u_star.offset(&v, -rho);
        let obstacles: Vec<&ControlPoint> = located
            .iter()
            .chain(points.iter())
            .copied()
            .filter(|p| p.distance(&cert.u_star) > 1e-9 * (1.0 + rho))
            .collect();
        if pos.distance(&entry) > 1e-12 * (1.0 + rho) {
            waypoints.extend(connector(&pos, &entry, &obstacles, delta, bounds, 8)?);
        }
        waypoints.push(cert.u_star.clone());
        waypoints.push(cert.u_star.offset(&v, rho));
    }
    Ok((ControlPath::at_speed(waypoints, epsilon)?, rho, delta))
}

/// Runs [`plan_climb`] and simulates it from the ground state at `anchor`.
pub fn climb(
    h: &ControlHamiltonian,
    report: &ConnectednessReport,
    anchor: &ControlPoint,
    epsilon: f64,
    opts: &ClimbOptions,
) -> Result<Climb> {
    let (path, rho, delta) = plan_climb(h, report, anchor, epsilon, opts)?;
    let sp0 = decompose(h, anchor)?;
    let psi0: CVector = sp0.vector(0).into_owned();
    let trajectory = propagate(h, &path, &psi0, &opts.propagate)?;
    let sp_end = decompose(h, path.end())?;
    let final_population = sp_end.vector(h.dim() - 1).dotc(trajectory.final_state()).norm_sqr();
    Ok(Climb {
        path,
        trajectory,
        rho,
        delta,
        final_population,
    })
}
