//! End-to-end controllability certificate and randomized genericity
//! experiments.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::conical::{
    certify_connectedness, find_intersections, search_seeds, test_conicality, ConicalConfig, ConicalVerdict,
    ConnectednessReport,
};
use crate::error::{CoreError, Result};
use crate::graph::{build_graph, is_connected, Connectivity, CouplingGraph};
use crate::lie::{classify_transitive, closure, generators_from, Classification, LieClosureResult, Transitivity};
use crate::operator::{CMatrix, ControlBox, ControlHamiltonian, ControlPoint, HermitianOperator};
use crate::random;
use crate::resonance::{sample_nonresonant, ResonanceSample};
use crate::spectrum::decompose;
use crate::tolerances::Tolerances;

pub const SCHEMA_VERSION: &str = "coniq-certificate/1";
pub const ENSEMBLE_SCHEMA_VERSION: &str = "coniq-ensemble/1";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertifyConfig {
    /// Intersection search seeds per level.
    pub seed_budget: usize,
    /// Uniform draws when looking for a non-resonant point.
    pub resonance_budget: usize,
    pub rng_seed: u64,
    /// Extra search starts tried before the quasi-random seeds.
    pub hints: Vec<ControlPoint>,
    pub conical: ConicalConfig,
    pub tol: Tolerances,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            seed_budget: 64,
            resonance_budget: 256,
            rng_seed: 0,
            hints: Vec::new(),
            conical: ConicalConfig::default(),
            tol: Tolerances::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "exactly-controllable-U(n)")]
    ControllableU,
    #[serde(rename = "exactly-controllable-SU(n)")]
    ControllableSU,
    #[serde(rename = "not-certified")]
    NotCertified,
}

impl Verdict {
    pub fn is_controllable(self) -> bool {
        self != Verdict::NotCertified
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GraphSection {
    pub graph: CouplingGraph,
    pub connectivity: Connectivity,
}

/// Whether the spectral sufficient condition held, and if so whether the
/// closure verdict agrees with it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralAgreement {
    pub connectedness_certified: bool,
    pub nonresonant_point_found: bool,
    pub graph_connected: bool,
    pub conditions_hold: bool,
    /// `None` when the conditions do not hold.
    pub agrees: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tolerances: Tolerances,
    pub conical: ConicalConfig,
    pub rng_seed: u64,
    pub seed_budget: usize,
    pub resonance_budget: usize,
    pub hints: Vec<ControlPoint>,
    pub tool_version: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct ControllabilityCertificate {
    pub schema_version: &'static str,
    pub n: usize,
    pub m: usize,
    pub connectedness: Option<ConnectednessReport>,
    pub resonance: Option<ResonanceSample>,
    pub graph: Option<GraphSection>,
    pub closure: LieClosureResult,
    pub transitivity: Transitivity,
    pub verdict: Verdict,
    pub spectral_agreement: SpectralAgreement,
    pub provenance: Provenance,
    /// Stage failures; the corresponding sections are absent.
    pub errors: Vec<String>,
}

impl ControllabilityCertificate {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

fn verdict_from(closure: &LieClosureResult) -> Verdict {
    match closure.classification {
        Classification::Unitary => Verdict::ControllableU,
        Classification::SpecialUnitary => Verdict::ControllableSU,
        _ => Verdict::NotCertified,
    }
}

/// Runs every stage. The verdict comes from the Lie closure; the spectral
/// stages are recorded as supporting evidence and may fail independently.
pub fn certify(h: &ControlHamiltonian, config: &CertifyConfig) -> Result<ControllabilityCertificate> {
    let tol = &config.tol;
    let mut errors = Vec::new();

    let connectedness = certify_connectedness(
        h,
        config.seed_budget,
        config.rng_seed,
        &config.hints,
        &config.conical,
        tol,
    )
    .map_err(|e| errors.push(format!("connectedness: {e}")))
    .ok();
    let resonance = sample_nonresonant(h, config.resonance_budget, config.rng_seed, tol)
        .map_err(|e| errors.push(format!("resonance: {e}")))
        .ok();
    let graph = match resonance.as_ref().and_then(|r| r.report.as_ref()) {
        Some(rep) => decompose(h, &rep.u_bar)
            .and_then(|sp| build_graph(h, &sp, tol))
            .map(|graph| GraphSection {
                connectivity: is_connected(&graph),
                graph,
            })
            .map_err(|e| errors.push(format!("graph: {e}")))
            .ok(),
        None => None,
    };

    let closure = closure(&generators_from(h), tol)?;
    let transitivity = classify_transitive(&closure);
    let verdict = verdict_from(&closure);

    let connectedness_certified = connectedness.as_ref().is_some_and(|c| c.is_certified());
    let nonresonant_point_found = resonance.as_ref().is_some_and(|r| r.report.is_some());
    let graph_connected = graph.as_ref().is_some_and(|g| g.connectivity.connected);
    let conditions_hold = connectedness_certified && nonresonant_point_found && graph_connected;
    let spectral_agreement = SpectralAgreement {
        connectedness_certified,
        nonresonant_point_found,
        graph_connected,
        conditions_hold,
        agrees: conditions_hold.then_some(verdict.is_controllable()),
    };

    Ok(ControllabilityCertificate {
        schema_version: SCHEMA_VERSION,
        n: h.dim(),
        m: h.num_controls(),
        connectedness,
        resonance,
        graph,
        closure,
        transitivity,
        verdict,
        spectral_agreement,
        provenance: Provenance {
            tolerances: *tol,
            conical: config.conical,
            rng_seed: config.rng_seed,
            seed_budget: config.seed_budget,
            resonance_budget: config.resonance_budget,
            hints: config.hints.clone(),
            tool_version: env!("CARGO_PKG_VERSION"),
        },
        errors,
    })
}

/// Recomputes the closure with rank and zero tolerances tightened `factor`
/// times and reports whether the dimension is unchanged.
pub fn recheck_closure(h: &ControlHamiltonian, cert: &ControllabilityCertificate, factor: f64) -> Result<bool> {
    let tight = Tolerances {
        lie_rank: cert.provenance.tolerances.lie_rank / factor,
        lie_zero: cert.provenance.tolerances.lie_zero / factor,
        ..cert.provenance.tolerances
    };
    Ok(closure(&generators_from(h), &tight)?.dimension == cert.closure.dimension)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub rng_seed: u64,
    /// Search seeds per level and trial.
    pub seed_budget: usize,
    /// Every control ranges over `[-half_width, half_width]`.
    pub half_width: f64,
    /// Relative size of the operator perturbation.
    pub perturbation: f64,
    /// A perturbed intersection counts as re-located within this distance.
    pub relocate_radius: f64,
    pub conical: ConicalConfig,
    pub tol: Tolerances,
}

impl EnsembleConfig {
    pub fn new(n: usize, m: usize, trials: usize, rng_seed: u64) -> Self {
        Self {
            n,
            m,
            trials,
            rng_seed,
            seed_budget: 24,
            half_width: 1.0,
            perturbation: 1e-3,
            relocate_radius: 1e-2,
            conical: ConicalConfig::default(),
            tol: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub located: usize,
    pub conical: usize,
    /// Certified intersection used for the perturbation probe.
    pub probe: Option<ControlPoint>,
    pub probe_level: Option<usize>,
    pub relocated: Option<bool>,
    pub relocate_distance: Option<f64>,
}

fn fraction_or_na<S: Serializer>(value: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match value {
        Some(v) => s.serialize_f64(*v),
        None => s.serialize_str("n/a"),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleSummary {
    pub schema_version: &'static str,
    pub config: EnsembleConfig,
    pub located: usize,
    pub conical: usize,
    /// Conical among located intersections; `"n/a"` when none was located.
    #[serde(serialize_with = "fraction_or_na")]
    pub conical_fraction: Option<f64>,
    pub perturbed_runs: usize,
    pub relocated: usize,
    #[serde(serialize_with = "fraction_or_na")]
    pub relocation_fraction: Option<f64>,
    pub rows: Vec<TrialRow>,
}

impl EnsembleSummary {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn rows_csv(&self) -> String {
        let mut out = String::from("trial,located,conical,probe_level,relocated,relocate_distance\n");
        for r in &self.rows {
            let opt = |x: Option<String>| x.unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.trial,
                r.located,
                r.conical,
                opt(r.probe_level.map(|l| l.to_string())),
                opt(r.relocated.map(|b| b.to_string())),
                opt(r.relocate_distance.map(|d| format!("{d:e}"))),
            )
            .unwrap();
        }
        out
    }
}

fn draw<R: Rng>(n: usize, complex: bool, rng: &mut R) -> CMatrix {
    if complex {
        random::gue(n, rng)
    } else {
        random::goe(n, rng)
    }
}

/// Random family of the ensemble: `m = 2` draws real symmetric operators,
/// `m = 3` complex Hermitian ones, each of unit operator norm.
pub fn ensemble_instance(n: usize, m: usize, half_width: f64, trial_seed: u64) -> Result<ControlHamiltonian> {
    let mut r = random::rng(trial_seed, 0xe5);
    let complex = m == 3;
    let drift = HermitianOperator::new(draw(n, complex, &mut r))?;
    let controls = (0..m)
        .map(|_| HermitianOperator::new(draw(n, complex, &mut r)))
        .collect::<Result<Vec<_>>>()?;
    ControlHamiltonian::new(drift, controls, ControlBox::symmetric(m, half_width)?)
}

/// Adds `size * ||H_l|| * G_l` to every operator, `G_l` from the same
/// ensemble with unit norm.
fn perturb(h: &ControlHamiltonian, size: f64, complex: bool, trial_seed: u64) -> Result<ControlHamiltonian> {
    let mut r = random::rng(trial_seed, 0x9e7);
    let n = h.dim();
    let mut bump = |op: &HermitianOperator| {
        let g = draw(n, complex, &mut r);
        HermitianOperator::new(op.matrix() + g * num_complex::Complex64::from(size * op.norm()))
    };
    let drift = bump(h.drift())?;
    let controls = h.controlled().iter().map(&mut bump).collect::<Result<Vec<_>>>()?;
    ControlHamiltonian::new(drift, controls, h.control_box().clone())
}

fn run_trial(config: &EnsembleConfig, trial: usize) -> Result<TrialRow> {
    let trial_seed = config.rng_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(trial as u64);
    let h = ensemble_instance(config.n, config.m, config.half_width, trial_seed)?;
    let seeds = search_seeds(h.control_box(), config.seed_budget, trial_seed, &[]);
    let mut located = 0;
    let mut conical = 0;
    let mut probe: Option<(usize, ControlPoint)> = None;
    for j in 1..config.n {
        for loc in find_intersections(&h, j, &seeds, &config.tol)? {
            located += 1;
            if let Ok(ConicalVerdict::Conical(c)) = test_conicality(&h, &loc.u, j, &config.conical, &config.tol) {
                conical += 1;
                probe.get_or_insert((j, c.u_star));
            }
        }
    }
    let mut row = TrialRow {
        trial,
        located,
        conical,
        probe: None,
        probe_level: None,
        relocated: None,
        relocate_distance: None,
    };
    if let Some((j, u_star)) = probe {
        let hp = perturb(&h, config.perturbation, config.m == 3, trial_seed)?;
        let found = find_intersections(&hp, j, std::slice::from_ref(&u_star), &config.tol)?;
        let distance = found.iter().map(|l| l.u.distance(&u_star)).fold(f64::INFINITY, f64::min);
        row.relocated = Some(distance <= config.relocate_radius);
        row.relocate_distance = distance.is_finite().then_some(distance);
        row.probe = Some(u_star);
        row.probe_level = Some(j);
    }
    Ok(row)
}

/// Conicality and structural stability of intersections of random families.
/// Trials run in parallel and are merged by index.
pub fn ensemble_genericity(config: &EnsembleConfig) -> Result<EnsembleSummary> {
    if !(config.m == 2 || config.m == 3) {
        return Err(CoreError::Precondition(format!("m must be 2 or 3, got {}", config.m)));
    }
    if config.trials == 0 || config.n < 2 {
        return Err(CoreError::Precondition("need trials >= 1 and n >= 2".into()));
    }
    let rows = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect::<Result<Vec<_>>>()?;
    let located = rows.iter().map(|r| r.located).sum();
    let conical = rows.iter().map(|r| r.conical).sum();
    let perturbed_runs = rows.iter().filter(|r| r.relocated.is_some()).count();
    let relocated = rows.iter().filter(|r| r.relocated == Some(true)).count();
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(EnsembleSummary {
        schema_version: ENSEMBLE_SCHEMA_VERSION,
        config: config.clone(),
        located,
        conical,
        conical_fraction: ratio(conical, located),
        perturbed_runs,
        relocated,
        relocation_fraction: ratio(relocated, perturbed_runs),
        rows,
    })
}
