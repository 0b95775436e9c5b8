//! `coniq`: command-line front end for spectral controllability certification.
//!
//! Exit codes: 0 success, 1 negative verdict (not certified / nothing found),
//! 2 usage or input error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use coniq_core::adiabatic::{plan_climb, propagate, ClimbOptions, ControlPath, PropagateOptions};
use coniq_core::certifier::{certify, ensemble_genericity, CertifyConfig, EnsembleConfig};
use coniq_core::conical::{
    certify_connectedness, find_intersections, search_seeds, test_conicality, ConicalCertificate, ConicalVerdict,
};
use coniq_core::resonance::sample_nonresonant;
use coniq_core::spectrum::{decompose, segment, track};
use coniq_core::{ConicalConfig, ControlHamiltonian, ControlPoint, CoreError, Tolerances};

#[derive(Parser)]
#[command(name = "coniq", version, about = "Spectral certification of quantum controllability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Hamiltonian family (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Relative degeneracy threshold.
    #[arg(long)]
    tol_deg: Option<f64>,
    /// Relative gap-distinctness threshold.
    #[arg(long)]
    tol_res: Option<f64>,
    /// Replace slightly non-Hermitian input matrices by their Hermitian part.
    #[arg(long)]
    symmetrize: bool,
}

impl Common {
    fn tolerances(&self) -> Tolerances {
        let mut tol = Tolerances::default();
        if let Some(d) = self.tol_deg {
            tol.degeneracy = d;
        }
        if let Some(r) = self.tol_res {
            tol.resonance = r;
        }
        tol
    }

    fn load(&self) -> Result<ControlHamiltonian, Failure> {
        let text = read(&self.input)?;
        ControlHamiltonian::from_json_str(&text, self.symmetrize)
            .map_err(|e| Failure::Input(format!("{}: {e}", self.input.display())))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues over a grid of the control box, or along a path.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Grid points per control.
        #[arg(long, default_value_t = 51)]
        grid: usize,
        /// Sweep along this control path (JSON) instead of a grid.
        #[arg(long)]
        path: Option<PathBuf>,
        /// Points per path segment.
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// Locate eigenvalue intersections and test them for conicality.
    FindIntersections {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        budget: usize,
        /// Only this level pair `(j, j+1)`.
        #[arg(long)]
        level: Option<usize>,
    },
    /// Full controllability certificate.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        budget: usize,
        #[arg(long, default_value_t = 256)]
        resonance_budget: usize,
    },
    /// Plan a climbing path through the certified intersections.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
        #[arg(long, default_value_t = 64)]
        budget: usize,
        /// Starting control point, comma separated; a non-resonant point is sampled if absent.
        #[arg(long)]
        anchor: Option<String>,
        /// Passage leg length.
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Propagate an eigenstate along a path or under constant control.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Control path (JSON).
        #[arg(long, conflicts_with = "hold")]
        path: Option<PathBuf>,
        /// Constant control, comma separated.
        #[arg(long, requires = "duration")]
        hold: Option<String>,
        #[arg(long)]
        duration: Option<f64>,
        /// Rescale the path's durations to this speed.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Initial eigenstate (1-based level at the first waypoint).
        #[arg(long, default_value_t = 1)]
        level: usize,
        /// Record every n-th step.
        #[arg(long, default_value_t = 1)]
        stride: u64,
    },
    /// Genericity experiments on random families.
    Ensemble {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        budget: usize,
        #[arg(long)]
        tol_deg: Option<f64>,
    },
}

enum Failure {
    /// Clean negative answer.
    Negative(String),
    Input(String),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<String, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn parse_point(s: &str, m: usize) -> Result<ControlPoint, Failure> {
    let values = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Input(format!("bad control point '{s}': {e}")))?;
    if values.len() != m {
        return Err(Failure::Input(format!("control point '{s}' needs {m} components")));
    }
    Ok(ControlPoint::new(values))
}

fn load_path(path: &Path) -> Result<ControlPath, Failure> {
    ControlPath::from_json_str(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn cmd_spectrum(common: &Common, grid: usize, path: Option<&Path>, samples: usize) -> Outcome {
    let h = common.load()?;
    let tol = common.tolerances();
    let out = if let Some(p) = path {
        let cp = load_path(p)?;
        let mut pts: Vec<ControlPoint> = vec![cp.waypoints[0].clone()];
        for w in cp.waypoints.windows(2) {
            pts.extend(segment(&w[0], &w[1], samples.max(2)).into_iter().skip(1));
        }
        track(&h, &pts, f64::INFINITY, &tol)?.to_csv()
    } else {
        if grid == 0 {
            return Err(Failure::Input("--grid must be at least 1".into()));
        }
        let m = h.num_controls();
        let rows = (grid as f64).powi(m as i32);
        if rows > 1e7 {
            return Err(Failure::Input(format!("grid of {rows} points is too large")));
        }
        let bounds = h.control_box().bounds().to_vec();
        let mut csv = String::new();
        (1..=m).for_each(|l| write!(csv, "u_{l},").unwrap());
        (1..=h.dim()).for_each(|j| write!(csv, "lambda_{j},").unwrap());
        csv.push_str("min_gap\n");
        let mut index = vec![0usize; m];
        loop {
            let u: Vec<f64> = index
                .iter()
                .zip(&bounds)
                .map(|(&i, [lo, hi])| if grid == 1 { *lo } else { lo + (hi - lo) * i as f64 / (grid - 1) as f64 })
                .collect();
            let sp = decompose(&h, &ControlPoint::new(u))?;
            for x in sp.u.iter().chain(&sp.eigenvalues) {
                write!(csv, "{x:e},").unwrap();
            }
            writeln!(csv, "{:e}", sp.min_gap().1).unwrap();
            // odometer, first control slowest
            let Some(l) = (0..m).rev().find(|&l| index[l] + 1 < grid) else { break };
            index[l] += 1;
            index[l + 1..].iter_mut().for_each(|i| *i = 0);
        }
        csv
    };
    let file = write(&common.out, "spectrum.csv", &out)?;
    Ok(format!("wrote {} ({} rows)", file.display(), out.lines().count() - 1))
}

#[derive(Serialize)]
struct IntersectionEntry {
    level: usize,
    u: ControlPoint,
    gap: f64,
    seed_index: usize,
    conical: bool,
    certificate: Option<ConicalCertificate>,
    reason: Option<String>,
}

fn cmd_find(common: &Common, seed: u64, budget: usize, level: Option<usize>) -> Outcome {
    let h = common.load()?;
    let tol = common.tolerances();
    let levels: Vec<usize> = match level {
        Some(j) if j >= 1 && j < h.dim() => vec![j],
        Some(j) => return Err(Failure::Input(format!("level {j} outside 1..{}", h.dim() - 1))),
        None => (1..h.dim()).collect(),
    };
    let seeds = search_seeds(h.control_box(), budget, seed, &[]);
    let config = ConicalConfig::default();
    let mut entries = Vec::new();
    for j in levels {
        for loc in find_intersections(&h, j, &seeds, &tol)? {
            let (conical, certificate, reason) = match test_conicality(&h, &loc.u, j, &config, &tol) {
                Ok(ConicalVerdict::Conical(c)) => (true, Some(c), None),
                Ok(ConicalVerdict::NonConical(nc)) => (false, None, Some(nc.reason)),
                Err(e) => (false, None, Some(e.to_string())),
            };
            entries.push(IntersectionEntry {
                level: j,
                u: loc.u,
                gap: loc.gap,
                seed_index: loc.seed_index,
                conical,
                certificate,
                reason,
            });
        }
    }
    let file = write(&common.out, "intersections.json", &json(&entries))?;
    let conical = entries.iter().filter(|e| e.conical).count();
    let msg = format!(
        "{} intersections ({conical} conical), wrote {}",
        entries.len(),
        file.display()
    );
    if entries.is_empty() {
        Err(Failure::Negative(msg))
    } else {
        Ok(msg)
    }
}

fn cmd_certify(common: &Common, seed: u64, budget: usize, resonance_budget: usize) -> Outcome {
    let h = common.load()?;
    let config = CertifyConfig {
        seed_budget: budget,
        resonance_budget,
        rng_seed: seed,
        tol: common.tolerances(),
        ..Default::default()
    };
    let cert = certify(&h, &config)?;
    let mut text = cert.to_json_string();
    text.push('\n');
    let file = write(&common.out, "certificate.json", &text)?;
    let verdict = serde_json::to_value(cert.verdict).expect("verdict serializes");
    let msg = format!(
        "verdict {} (closure dimension {}), wrote {}",
        verdict.as_str().unwrap_or_default(),
        cert.closure.dimension,
        file.display()
    );
    if cert.verdict.is_controllable() {
        Ok(msg)
    } else {
        Err(Failure::Negative(msg))
    }
}

#[derive(Serialize)]
struct SynthesisSummary {
    anchor: ControlPoint,
    epsilon: f64,
    rho: f64,
    delta: f64,
    total_time: f64,
    length: f64,
    rng_seed: u64,
}

fn cmd_synthesize(
    common: &Common,
    seed: u64,
    epsilon: f64,
    budget: usize,
    anchor: Option<&str>,
    rho: Option<f64>,
) -> Outcome {
    let h = common.load()?;
    let tol = common.tolerances();
    let report = certify_connectedness(&h, budget, seed, &[], &ConicalConfig::default(), &tol)?;
    write(&common.out, "connectedness.json", &json(&report))?;
    if !report.is_certified() {
        return Err(Failure::Negative("conical connectedness not certified; no path synthesized".into()));
    }
    let anchor = match anchor {
        Some(s) => parse_point(s, h.num_controls())?,
        None => sample_nonresonant(&h, 256, seed, &tol)?
            .report
            .map(|r| r.u_bar)
            .ok_or_else(|| Failure::Negative("no non-resonant anchor found".into()))?,
    };
    let opts = ClimbOptions {
        rho,
        propagate: PropagateOptions { tol, ..Default::default() },
        ..Default::default()
    };
    let (path, rho, delta) = plan_climb(&h, &report, &anchor, epsilon, &opts)?;
    let file = write(&common.out, "path.json", &(path.to_json_string() + "\n"))?;
    let summary = SynthesisSummary {
        anchor,
        epsilon,
        rho,
        delta,
        total_time: path.total_time(),
        length: path.length(),
        rng_seed: seed,
    };
    write(&common.out, "synthesis.json", &json(&summary))?;
    Ok(format!(
        "{} waypoints, total time {:.4e}, wrote {}",
        path.waypoints.len(),
        path.total_time(),
        file.display()
    ))
}

#[derive(Serialize)]
struct SimulationSummary {
    steps: u64,
    total_time: f64,
    initial_level: usize,
    max_norm_defect: f64,
    /// `|<phi_j(u_end), psi(T)>|^2` by sorted level.
    final_level_populations: Vec<f64>,
    final_branch_populations: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    common: &Common,
    path: Option<&Path>,
    hold: Option<&str>,
    duration: Option<f64>,
    epsilon: Option<f64>,
    level: usize,
    stride: u64,
) -> Outcome {
    let h = common.load()?;
    let mut cp = match (path, hold) {
        (Some(p), _) => load_path(p)?,
        (None, Some(u)) => ControlPath::hold(parse_point(u, h.num_controls())?, duration.unwrap_or(1.0))?,
        (None, None) => return Err(Failure::Input("either --path or --hold is required".into())),
    };
    if let Some(eps) = epsilon {
        let factor = cp.epsilon / eps;
        cp = ControlPath::new(cp.waypoints, cp.durations.iter().map(|d| d * factor).collect(), eps)?;
    }
    if level == 0 || level > h.dim() {
        return Err(Failure::Input(format!("level {level} outside 1..{}", h.dim())));
    }
    let sp0 = decompose(&h, &cp.waypoints[0])?;
    let psi0 = sp0.vector(level - 1).into_owned();
    let opts = PropagateOptions {
        record_stride: stride,
        tol: common.tolerances(),
        ..Default::default()
    };
    let traj = propagate(&h, &cp, &psi0, &opts)?;
    let end = decompose(&h, cp.end())?;
    let psi = traj.final_state();
    let summary = SimulationSummary {
        steps: traj.steps,
        total_time: cp.total_time(),
        initial_level: level,
        max_norm_defect: traj.max_norm_defect(),
        final_level_populations: (0..h.dim()).map(|j| end.vector(j).dotc(psi).norm_sqr()).collect(),
        final_branch_populations: traj.populations.last().cloned().unwrap_or_default(),
    };
    let file = write(&common.out, "trajectory.csv", &traj.to_csv())?;
    write(&common.out, "simulation.json", &json(&summary))?;
    Ok(format!(
        "{} steps, max norm defect {:.1e}, wrote {}",
        traj.steps,
        summary.max_norm_defect,
        file.display()
    ))
}

fn cmd_ensemble(out: &Path, n: usize, m: usize, trials: usize, seed: u64, budget: usize, tol_deg: Option<f64>) -> Outcome {
    let mut config = EnsembleConfig::new(n, m, trials, seed);
    config.seed_budget = budget;
    if let Some(d) = tol_deg {
        config.tol.degeneracy = d;
    }
    let summary = ensemble_genericity(&config)?;
    let file = write(out, "ensemble.json", &(summary.to_json_string() + "\n"))?;
    write(out, "ensemble_trials.csv", &summary.rows_csv())?;
    let fmt = |f: Option<f64>| f.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    Ok(format!(
        "conical fraction {}, relocation fraction {}, wrote {}",
        fmt(summary.conical_fraction),
        fmt(summary.relocation_fraction),
        file.display()
    ))
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Spectrum {
            common,
            grid,
            path,
            samples,
        } => cmd_spectrum(common, *grid, path.as_deref(), *samples),
        Command::FindIntersections {
            common,
            seed,
            budget,
            level,
        } => cmd_find(common, *seed, *budget, *level),
        Command::Certify {
            common,
            seed,
            budget,
            resonance_budget,
        } => cmd_certify(common, *seed, *budget, *resonance_budget),
        Command::Synthesize {
            common,
            seed,
            epsilon,
            budget,
            anchor,
            rho,
        } => cmd_synthesize(common, *seed, *epsilon, *budget, anchor.as_deref(), *rho),
        Command::Simulate {
            common,
            path,
            hold,
            duration,
            epsilon,
            level,
            stride,
        } => cmd_simulate(common, path.as_deref(), hold.as_deref(), *duration, *epsilon, *level, *stride),
        Command::Ensemble {
            out,
            n,
            m,
            trials,
            seed,
            budget,
            tol_deg,
        } => cmd_ensemble(out, *n, *m, *trials, *seed, *budget, *tol_deg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(Failure::Negative(msg)) => {
            println!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
