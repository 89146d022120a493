//! Subcommand drivers.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use plateau_core::desitter::{dual_curvatures, forward_map};
use plateau_core::verifier::SolutionAnalysis;
use plateau_core::{
    build_grid, continuation_solve, parse_spec, verify, Cap, ContinuationOptions, Domain, Schedule, ScoreEntry,
    Scorecard, SolveReport,
};

use crate::config::{check_sigma, ConfigError, RunArgs, RunConfig};
use crate::output::{convergence_log, desitter_csv, read_solution, solution_csv, write_atomic, write_json, ScorecardFile};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    SolverFailure = 1,
    ScorecardFailure = 2,
    Usage = 64,
}

/// Failure that ends a subcommand.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Solver(String),
    Io(std::io::Error),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Solver(m) => f.write_str(m),
            Failure::Io(e) => write!(f, "{e}"),
        }
    }
}

impl Failure {
    pub fn status(&self) -> Status {
        match self {
            Failure::Usage(_) => Status::Usage,
            Failure::Solver(_) | Failure::Io(_) => Status::SolverFailure,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

fn solver<E: fmt::Display>(e: E) -> Failure {
    Failure::Solver(e.to_string())
}

const STRUCTURE_SAMPLES: usize = 2000;

/// Verifier scorecard plus the randomized structure check of the curvature
/// function (the only seeded check).
fn score(report: &SolveReport, seed: u64) -> Result<Scorecard, Failure> {
    let mut card = verify(report).map_err(solver)?;
    let s = report.solved_spec().structure_check(STRUCTURE_SAMPLES, seed);
    card.extend([ScoreEntry::le("curvature.structure_violations", s.violations.len() as f64, 0.0, 0.0)]);
    Ok(card)
}

fn card_status(card: &Scorecard) -> Status {
    if card.passed() {
        Status::Pass
    } else {
        Status::ScorecardFailure
    }
}

fn print_card(card: &Scorecard) {
    let failed = card.failures();
    println!("scorecard: {}/{} checks pass", card.entries.len() - failed.len(), card.entries.len());
    for e in failed {
        println!("  FAIL {} : {} {:?} {} (tol {}, margin {:.3e})", e.check_id, e.lhs, e.relation, e.rhs, e.tolerance, e.margin);
    }
}

/// Outcome of one solve, as summarized by `sweep`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub status: Status,
    pub failures: Vec<String>,
    pub kappa_max: f64,
    pub kappa_min: f64,
    pub u_max: f64,
    pub final_residual: f64,
    pub error: Option<String>,
}

/// Solves, scores and writes the four run files into `cfg.out`.
fn run_solve(cfg: &RunConfig, quiet: bool) -> Result<(Status, RunSummary), Failure> {
    std::fs::create_dir_all(&cfg.out)?;
    let report = continuation_solve(&cfg.domain, &cfg.spec, cfg.sigma, &cfg.schedule, &ContinuationOptions::default())
        .map_err(solver)?;
    write_atomic(&cfg.out.join("convergence.log"), convergence_log(&report.stages).as_bytes())?;
    let a = SolutionAnalysis::new(&cfg.domain, &report.solved_spec(), cfg.sigma, &report.solution).map_err(solver)?;
    write_atomic(&cfg.out.join("solution.csv"), solution_csv(&a).as_bytes())?;
    write_json(&cfg.out.join("report.json"), &report)?;
    let card = score(&report, cfg.seed)?;
    write_json(&cfg.out.join("scorecard.json"), &ScorecardFile::from(&card))?;
    let kappa = a.interior().flat_map(|g| g.kappa.iter().copied());
    let (kmin, kmax) = kappa.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| (lo.min(k), hi.max(k)));
    let summary = RunSummary {
        status: card_status(&card),
        failures: card.failures().iter().map(|e| e.check_id.clone()).collect(),
        kappa_max: kmax,
        kappa_min: kmin,
        u_max: a.max_u(),
        final_residual: report.final_residual,
        error: None,
    };
    if !quiet {
        println!(
            "solved {} stages; final residual {:.3e}; u_max {}; kappa in [{kmin:.6}, {kmax:.6}]",
            report.stages.len(),
            report.final_residual,
            summary.u_max
        );
        print_card(&card);
        println!("wrote {}", cfg.out.display());
    }
    Ok((summary.status, summary))
}

pub fn solve(args: &RunArgs) -> Result<Status, Failure> {
    let cfg = args.resolve()?;
    Ok(run_solve(&cfg, false)?.0)
}

#[derive(Debug, Clone, Args)]
pub struct StoredArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Node table to load (default: `<out>/solution.csv`).
    #[arg(long)]
    pub solution: Option<PathBuf>,
}

/// Loads a stored node table for the configured problem. Ladder levels are
/// taken from a `report.json` beside it when that report describes the same
/// problem; otherwise the table is the only level.
fn load(args: &StoredArgs) -> Result<(RunConfig, SolveReport), Failure> {
    let cfg = args.run.resolve()?;
    let path = args.solution.clone().unwrap_or_else(|| cfg.out.join("solution.csv"));
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let grid = build_grid(&cfg.domain).map_err(solver)?;
    let solution = read_solution(&text, &grid).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let stored = path
        .parent()
        .map(|d| d.join("report.json"))
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|t| serde_json::from_str::<SolveReport>(&t).ok())
        .filter(|r| r.domain == cfg.domain && r.spec == cfg.spec && r.sigma == cfg.sigma);
    let report = match stored {
        Some(mut r) => {
            if let Some(last) = r.levels.last_mut() {
                last.solution = solution.clone();
            }
            r.solution = solution;
            r
        }
        None => {
            let res = plateau_core::residual(&grid, &solution, &cfg.spec, cfg.sigma).map_err(solver)?;
            SolveReport {
                domain: cfg.domain.clone(),
                spec: cfg.spec.clone(),
                sigma: cfg.sigma,
                schedule: cfg.schedule.clone(),
                theta_reached: 0.0,
                stages: Vec::new(),
                levels: vec![plateau_core::solver::LevelSolution {
                    eps: solution.boundary,
                    solution: solution.clone(),
                }],
                final_residual: res.iter().fold(0.0f64, |m, r| m.max(r.abs())),
                solution,
            }
        }
    };
    Ok((cfg, report))
}

pub fn verify_stored(args: &StoredArgs) -> Result<Status, Failure> {
    let (cfg, report) = load(args)?;
    let card = score(&report, cfg.seed)?;
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("scorecard.json"), &ScorecardFile::from(&card))?;
    println!("levels: {}; residual {:.3e}", report.levels.len(), report.final_residual);
    print_card(&card);
    Ok(card_status(&card))
}

pub fn dualize(args: &StoredArgs) -> Result<Status, Failure> {
    let (cfg, report) = load(args)?;
    let grid = build_grid(&cfg.domain).map_err(solver)?;
    let cloud = forward_map(&grid, &report.solution).map_err(solver)?;
    let curvatures = dual_curvatures(&cloud).map_err(solver)?;
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("desitter.csv");
    write_atomic(&path, desitter_csv(grid.dim(), &cloud, &curvatures).as_bytes())?;
    println!("wrote {} ({} points)", path.display(), cloud.len());
    Ok(Status::Pass)
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: f64,
    /// Radius of the sphere containing the cap.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub radius: f64,
    #[arg(long, default_value = "mean")]
    pub f: String,
    /// Radial node counts; each level uses twice as many angles.
    #[arg(long, default_value = "16,32,64", value_delimiter = ',')]
    pub levels: Vec<usize>,
    /// Also write `oracle.csv` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Errors of one oracle level.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub n_r: usize,
    pub n_phi: usize,
    pub h: f64,
    pub linf: f64,
    pub l2: f64,
    pub boundary_w: f64,
    pub kappa: f64,
}

/// Observed order between consecutive rows.
fn orders(rows: &[OracleRow], e: impl Fn(&OracleRow) -> f64) -> Vec<f64> {
    rows.windows(2).map(|w| (e(&w[0]) / e(&w[1])).ln() / (w[0].h / w[1].h).ln()).collect()
}

pub fn oracle(args: &OracleArgs) -> Result<Status, Failure> {
    check_sigma(args.sigma)?;
    if !(args.radius > 0.0) {
        return Err(Failure::Usage(format!("radius must be positive, got {}", args.radius)));
    }
    if args.levels.len() < 2 {
        return Err(Failure::Usage("oracle needs at least two levels".into()));
    }
    let spec = parse_spec(&args.f, 2).map_err(|e| Failure::Usage(format!("f: {e}")))?;
    let exact = Cap::new(args.sigma, args.radius);
    let rho = exact.domain_radius();
    println!("cap: u = sqrt({r}^2 - |x|^2) - {s}*{r} on the disk of radius {rho}", r = args.radius, s = args.sigma);
    let mut rows = Vec::new();
    for &n in &args.levels {
        let domain = Domain::disk(rho, n, 2 * n).map_err(|e| Failure::Usage(e.to_string()))?;
        let schedule = Schedule::default_for(&domain);
        let report =
            continuation_solve(&domain, &spec, args.sigma, &schedule, &ContinuationOptions::default()).map_err(solver)?;
        // at ε > 0 the discrete problem's exact solution is the cap through u = ε on ∂Ω
        let cap = Cap::matched(args.sigma, rho, report.solution.boundary);
        let a = SolutionAnalysis::new(&domain, &report.solved_spec(), args.sigma, &report.solution).map_err(solver)?;
        let (mut linf, mut sq, mut bw, mut kap) = (0.0f64, 0.0, 0.0f64, 0.0f64);
        for (p, g) in a.geometry.iter().enumerate() {
            let e = (g.u - cap.u(&g.x)).abs();
            linf = linf.max(e);
            sq += e * e;
            if a.grid.is_boundary(p) {
                let w = (1.0 + cap.du(&g.x).norm_squared()).sqrt();
                bw = bw.max((g.w - w).abs());
            } else {
                kap = g.kappa.iter().fold(kap, |m, k| m.max((k - args.sigma).abs()));
            }
        }
        rows.push(OracleRow {
            n_r: n,
            n_phi: 2 * n,
            h: a.grid.spacing(),
            linf,
            l2: (sq / a.geometry.len() as f64).sqrt(),
            boundary_w: bw,
            kappa: kap,
        });
    }
    let o_inf = orders(&rows, |r| r.linf);
    let o_l2 = orders(&rows, |r| r.l2);
    let mut table = String::from("n_r,n_phi,h,linf,l2,order_linf,order_l2,boundary_w_err,kappa_err\n");
    for (i, r) in rows.iter().enumerate() {
        let ord = |o: &[f64]| if i == 0 { String::new() } else { format!("{:?}", o[i - 1]) };
        table.push_str(&format!(
            "{},{},{:?},{:?},{:?},{},{},{:?},{:?}\n",
            r.n_r,
            r.n_phi,
            r.h,
            r.linf,
            r.l2,
            ord(&o_inf),
            ord(&o_l2),
            r.boundary_w,
            r.kappa
        ));
    }
    println!("{:>5} {:>6} {:>10} {:>10} {:>7} {:>7} {:>10} {:>10}", "n_r", "n_phi", "Linf", "L2", "p_inf", "p_L2", "w_err", "kappa_err");
    for (i, r) in rows.iter().enumerate() {
        let ord = |o: &[f64]| if i == 0 { "-".to_string() } else { format!("{:.2}", o[i - 1]) };
        println!(
            "{:>5} {:>6} {:>10.3e} {:>10.3e} {:>7} {:>7} {:>10.3e} {:>10.3e}",
            r.n_r,
            r.n_phi,
            r.linf,
            r.l2,
            ord(&o_inf),
            ord(&o_l2),
            r.boundary_w,
            r.kappa
        );
    }
    println!("exact boundary w of the cap: {}", 1.0 / args.sigma);
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("oracle.csv"), table.as_bytes())?;
    }
    let min_order = o_inf.iter().copied().fold(f64::INFINITY, f64::min);
    let finest = rows.last().expect("at least two levels");
    let ok = min_order >= 1.8 && finest.kappa <= 5e-3;
    println!(
        "{}: min order {min_order:.2} (>= 1.8), finest kappa error {:.3e} (<= 5e-3)",
        if ok { "PASS" } else { "FAIL" },
        finest.kappa
    );
    Ok(if ok { Status::Pass } else { Status::ScorecardFailure })
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated target levels σ.
    #[arg(long, conflicts_with = "thetas")]
    pub sigmas: Option<String>,
    /// Comma-separated final blend weights θ for f^θ.
    #[arg(long)]
    pub thetas: Option<String>,
    /// Concurrent solves (default: available cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Param {
    Sigma,
    Theta,
}

impl Param {
    fn name(self) -> &'static str {
        match self {
            Param::Sigma => "sigma",
            Param::Theta => "theta",
        }
    }
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    let mut v = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Failure::Usage(format!("{what}: `{s}` is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err(Failure::Usage(format!("{what} list is empty")));
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// Ladder ending at `theta`: the default weights above it, then `theta`.
fn theta_ladder(base: &Schedule, theta: f64) -> Vec<f64> {
    let mut t: Vec<f64> = base.theta.iter().copied().filter(|x| *x > theta).collect();
    t.push(theta);
    t
}

fn instantiate(args: &SweepArgs, param: Param, value: f64, root: &Path) -> Result<RunConfig, Failure> {
    let mut run = args.run.clone();
    if param == Param::Sigma {
        run.sigma = Some(value);
    }
    let mut cfg = run.resolve()?;
    if param == Param::Theta {
        if cfg.spec.is_gauss() {
            return Err(Failure::Usage("a theta sweep needs a curvature function other than gauss".into()));
        }
        if !(0.0..1.0).contains(&value) {
            return Err(Failure::Usage(format!("theta must lie in [0,1), got {value}")));
        }
        cfg.schedule.theta = theta_ladder(&cfg.schedule, value);
    }
    cfg.out = root.join(format!("{}={value}", param.name()));
    Ok(cfg)
}

pub fn sweep(args: &SweepArgs) -> Result<Status, Failure> {
    let (param, values) = match (&args.sigmas, &args.thetas) {
        (Some(s), None) => (Param::Sigma, parse_list(s, "sigma")?),
        (None, Some(t)) => (Param::Theta, parse_list(t, "theta")?),
        _ => return Err(Failure::Usage("sweep needs --sigmas or --thetas".into())),
    };
    let root = args.run.resolve_out()?;
    // validate every instance before starting any solve
    let configs = values
        .iter()
        .map(|&v| instantiate(args, param, v, &root))
        .collect::<Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(&root)?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, configs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunSummary>>> = Mutex::new(vec![None; configs.len()]);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = configs.get(i) else { break };
                let summary = match run_solve(cfg, true) {
                    Ok((_, s)) => s,
                    Err(e) => RunSummary {
                        status: e.status(),
                        failures: Vec::new(),
                        kappa_max: f64::NAN,
                        kappa_min: f64::NAN,
                        u_max: f64::NAN,
                        final_residual: f64::NAN,
                        error: Some(e.to_string()),
                    },
                };
                results.lock().expect("no panics while holding the lock")[i] = Some(summary);
            });
        }
    });
    let results: Vec<RunSummary> = results.into_inner().expect("workers joined").into_iter().flatten().collect();

    let mut table = format!("{},status,failures,kappa_min,kappa_max,u_max,final_residual,error\n", param.name());
    let mut any_failed = false;
    println!("{:>8} {:>10} {:>10} {:>10} {:>10}  failures", param.name(), "status", "kappa_min", "kappa_max", "residual");
    for (v, r) in values.iter().zip(&results) {
        let status = match r.status {
            Status::Pass => "pass",
            Status::ScorecardFailure => "scorecard",
            Status::SolverFailure => "solver",
            Status::Usage => "usage",
        };
        any_failed |= r.status != Status::Pass;
        let failures = r.failures.join(";");
        let error = r.error.clone().unwrap_or_default().replace(',', ";");
        table.push_str(&format!(
            "{v:?},{status},{failures},{:?},{:?},{:?},{:?},{error}\n",
            r.kappa_min, r.kappa_max, r.u_max, r.final_residual
        ));
        println!(
            "{v:>8} {status:>10} {:>10.6} {:>10.6} {:>10.3e}  {}{}",
            r.kappa_min,
            r.kappa_max,
            r.final_residual,
            failures,
            r.error.as_deref().unwrap_or("")
        );
    }
    write_atomic(&root.join("sweep.csv"), table.as_bytes())?;
    println!("wrote {}", root.join("sweep.csv").display());
    Ok(if any_failed { Status::ScorecardFailure } else { Status::Pass })
}
