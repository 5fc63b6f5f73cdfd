use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use switchbound::bound::{bound_affine, bound_covariance, lifted_anchor, BoundOptions, LambdaChoice};
use switchbound::dynamics::default_burn_in;
use switchbound::ellipsoid::{verify_invariance, VerifyOptions, DEFAULT_SLACK};
use switchbound::sdp::default_lambda_grid;
use switchbound::{bound::Ceiling, lift, simulate as run_simulation, AffineMap, Ellipsoid};
use switchbound::{Reduction, SwitchPolicy, SwitchedSystem, SystemKind};

use crate::config::{KindName, SystemConfig};
use crate::csv::{columns, CsvWriter};
use crate::report::{BoundReport, Seeds};
use crate::{CliError, Outcome};

fn open_output(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(path) => {
            Box::new(BufWriter::new(File::create(path).map_err(|e| {
                CliError::io(format!("creating {}: {e}", path.display()))
            })?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut w = open_output(out)?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn reduction(no_reduce: bool) -> Reduction {
    if no_reduce {
        Reduction::FullVec
    } else {
        Reduction::SymVech
    }
}

/// Column names for lifted coordinates, `p{i}_{j}` with 1-based indices.
fn lifted_columns(n: usize, r: Reduction) -> Vec<String> {
    let mut names = Vec::new();
    for j in 0..n {
        let start = if r == Reduction::SymVech { j } else { 0 };
        for i in start..n {
            names.push(format!("p{}_{}", i + 1, j + 1));
        }
    }
    names
}

/// Lifted point of a deterministic state: the second moment `x0·x0ᵀ`.
fn lifted_point(r: Reduction, x0: &DVector<f64>) -> Result<DVector<f64>, CliError> {
    Ok(r.encode(&(x0 * x0.transpose()))?)
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub steps: usize,
    pub burn_in: usize,
    pub covariances: bool,
    pub seed: Option<u64>,
    pub no_reduce: bool,
    pub out: Option<PathBuf>,
    pub verbose: bool,
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome, CliError> {
    let cfg = SystemConfig::load(&args.config)?;
    let sys = cfg.system()?;
    if args.covariances && sys.kind() != SystemKind::Noisy {
        return Err(CliError::invalid("--covariances needs a noisy system"));
    }
    if args.burn_in > args.steps {
        return Err(CliError::invalid(format!(
            "burn-in ({}) exceeds the {} recorded states",
            args.burn_in,
            args.steps + 1
        )));
    }
    let seed = cfg.resolve_seed(args.seed)?;
    let policy = cfg.policy(seed)?;
    let x0 = cfg.x0().unwrap_or_else(|| DVector::zeros(sys.dim()));
    if args.verbose {
        eprintln!("simulating {} steps, seed {seed}", args.steps);
    }
    let traj = run_simulation(&sys, &x0, args.steps, &policy)?;
    let mut header = columns("x", sys.dim());
    let covs = if args.covariances {
        let r = reduction(args.no_reduce);
        let ls = lift(&sys, r)?;
        header.extend(lifted_columns(sys.dim(), r));
        Some(ls.iterate(&lifted_point(r, &x0)?, traj.mode_sequence.iter().copied())?)
    } else {
        None
    };
    let mut w = CsvWriter::new(open_output(args.out.as_deref())?, &header)?;
    for (k, x) in traj.points.iter().enumerate().skip(args.burn_in) {
        let lifted = covs.as_ref().map(|c| c[k].iter().copied().collect::<Vec<_>>());
        w.row(x.iter().copied().chain(lifted.into_iter().flatten()))?;
    }
    w.finish()?;
    Ok(Outcome::Ok)
}

pub struct BoundArgs {
    pub config: PathBuf,
    pub samples: usize,
    pub steps: usize,
    pub seed: Option<u64>,
    pub no_reduce: bool,
    pub out: Option<PathBuf>,
    pub verbose: bool,
}

pub fn bound(args: &BoundArgs) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let cfg = SystemConfig::load(&args.config)?;
    let sys = cfg.system()?;
    let seed = cfg.resolve_seed(args.seed)?;
    let policy = cfg.policy(seed)?;
    let r = reduction(args.no_reduce);

    let lambda = match (cfg.solver.lambda, &cfg.solver.lambda_grid) {
        (Some(l), _) => LambdaChoice::Fixed(l),
        (None, Some(grid)) => LambdaChoice::Search {
            grid: grid.clone(),
            refine: true,
        },
        (None, None) => LambdaChoice::Search {
            grid: default_lambda_grid(),
            refine: true,
        },
    };
    let x0 = match (cfg.x0(), sys.kind()) {
        (Some(x), SystemKind::Noisy) => Some(lifted_point(r, &x)?),
        (x, _) => x,
    };
    let mut opts = BoundOptions {
        lambda,
        solve: cfg.solve_options(args.verbose)?,
        center: cfg.center(),
        x0,
        ceiling: cfg.solver.max_eigenvalue.map_or(Ceiling::Auto, Ceiling::Fixed),
        centroid_policy: policy,
        centroid_samples: args.steps,
        reduction: r,
        verify: None,
    };

    // Center first, so that its cost is reported separately.
    let t = Instant::now();
    let lifted = match sys.kind() {
        SystemKind::Affine => {
            if opts.center.is_none() {
                opts.center = Some(switchbound::sdp::affine_center_heuristic(
                    &sys,
                    &opts.centroid_policy,
                    opts.centroid_samples,
                )?);
            }
            None
        }
        SystemKind::Noisy => {
            let ls = lift(&sys, r)?;
            if opts.center.is_none() {
                opts.center = Some(switchbound::sdp::center_heuristic(&ls)?);
            }
            Some(ls)
        }
    };
    let center_seconds = t.elapsed().as_secs_f64();
    if args.verbose {
        eprintln!("center {:?}", opts.center.as_ref().map(|c| c.as_slice().to_vec()));
    }

    let t = Instant::now();
    let mut b = match sys.kind() {
        SystemKind::Affine => bound_affine(&sys, &opts)?,
        SystemKind::Noisy => bound_covariance(&sys, &opts)?.1,
    };
    let solve_seconds = t.elapsed().as_secs_f64();
    if args.verbose {
        eprintln!(
            "solve: {} at lambda {} in {solve_seconds:.3} s",
            b.solve.status, b.lambda
        );
    }

    let t = Instant::now();
    if let Some(e) = &b.ellipsoid {
        let v = VerifyOptions {
            samples: args.samples,
            seed,
            slack: DEFAULT_SLACK,
        };
        b.verification = Some(verify_invariance(e, &b.maps, &v)?);
    }
    let verify_seconds = t.elapsed().as_secs_f64();

    let mut report = BoundReport::new(
        cfg.kind,
        cfg.n,
        lifted.as_ref().map(|ls| ls.reduction()),
        &b,
        Seeds {
            policy: seed,
            verification: seed,
        },
    );
    report.timings.center_seconds = center_seconds;
    report.timings.solve_seconds = solve_seconds;
    report.timings.verify_seconds = verify_seconds;
    report.timings.total_seconds = started.elapsed().as_secs_f64();
    write_text(args.out.as_deref(), &report.to_json())?;

    Ok(if !b.is_feasible() {
        eprintln!("infeasible: no invariant ellipsoid found ({})", b.solve.status);
        Outcome::Infeasible
    } else if !b.is_verified() {
        let v = b.verification.as_ref().map_or(0, |v| v.violations);
        eprintln!("verification failed: {v} violations");
        Outcome::Violations
    } else {
        Outcome::Ok
    })
}

pub struct VerifyArgs {
    pub report: PathBuf,
    pub config: PathBuf,
    pub samples: usize,
    pub steps: usize,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub verbose: bool,
}

#[derive(Debug, Serialize)]
struct ContainmentSummary {
    steps: usize,
    burn_in: usize,
    checked: usize,
    outside: usize,
    worst_value: f64,
}

#[derive(Debug, Serialize)]
struct InvarianceSummary {
    samples: usize,
    interior_samples: usize,
    checks: usize,
    violations: usize,
    worst_value: f64,
}

#[derive(Debug, Serialize)]
struct VerifySummary {
    seed: u64,
    containment: ContainmentSummary,
    invariance: InvarianceSummary,
    passed: bool,
}

fn fresh_seed() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos() as u64)
}

/// Affine maps of the system in the coordinates of the stored ellipsoid.
fn report_maps(
    report: &BoundReport,
    cfg: &SystemConfig,
    sys: &SwitchedSystem,
) -> Result<(Vec<AffineMap>, Option<switchbound::LiftedSystem>), CliError> {
    if report.kind != cfg.kind || report.n != cfg.n {
        return Err(CliError::invalid(format!(
            "report describes a {} system with n = {}, config a {} system with n = {}",
            report.kind, report.n, cfg.kind, cfg.n
        )));
    }
    match cfg.kind {
        KindName::Affine => Ok((sys.affine_maps()?, None)),
        KindName::Noisy => {
            let r = report
                .reduction()?
                .ok_or_else(|| CliError::invalid("noisy report without a reduction"))?;
            let ls = lift(sys, r)?;
            Ok((ls.maps().to_vec(), Some(ls)))
        }
    }
}

pub fn verify(args: &VerifyArgs) -> Result<Outcome, CliError> {
    let report = BoundReport::load(&args.report)?;
    let cfg = SystemConfig::load(&args.config)?;
    let sys = cfg.system()?;
    let (maps, lifted) = report_maps(&report, &cfg, &sys)?;
    let e = report.ellipsoid()?;
    let q = maps[0].dim();
    if e.dim() != q {
        return Err(CliError::invalid(format!(
            "report ellipsoid has dimension {}, the system needs {q}",
            e.dim()
        )));
    }
    let seed = args.seed.unwrap_or_else(fresh_seed);
    let burn_in = args.burn_in.unwrap_or_else(|| default_burn_in(args.steps + 1));
    if burn_in > args.steps {
        return Err(CliError::invalid("burn-in must not exceed the step count"));
    }
    if args.verbose {
        eprintln!("verify: seed {seed}, {} steps, burn-in {burn_in}", args.steps);
    }

    // Arbitrary switching is what the ellipsoid claims; uniform iid switching
    // exercises every mode regardless of the configured policy.
    let policy = SwitchPolicy::iid_uniform(seed);
    let points = match &lifted {
        None => {
            let x0 = cfg.x0().unwrap_or_else(|| e.center().clone());
            run_simulation(&sys, &x0, args.steps, &policy)?.points
        }
        Some(ls) => {
            let mut selector = policy.selector(ls.mode_count())?;
            let modes = (0..args.steps)
                .map(|_| selector.next_mode())
                .collect::<Result<Vec<_>, _>>()?;
            ls.iterate(&lifted_anchor(ls)?, modes)?
        }
    };
    let containment = containment(&e, &points[burn_in..], args.steps, burn_in)?;

    let inv = verify_invariance(
        &e,
        &maps,
        &VerifyOptions {
            samples: args.samples,
            seed,
            slack: DEFAULT_SLACK,
        },
    )?;
    let passed = containment.outside == 0 && inv.passed();
    let summary = VerifySummary {
        seed,
        containment,
        invariance: InvarianceSummary {
            samples: inv.boundary_samples,
            interior_samples: inv.interior_samples,
            checks: inv.checks,
            violations: inv.violations,
            worst_value: inv.worst_value,
        },
        passed,
    };
    write_text(
        args.out.as_deref(),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    if passed {
        Ok(Outcome::Ok)
    } else {
        eprintln!(
            "verification failed: {} trajectory points outside, {} invariance violations",
            summary.containment.outside, summary.invariance.violations
        );
        Ok(Outcome::Violations)
    }
}

fn containment(
    e: &Ellipsoid,
    points: &[DVector<f64>],
    steps: usize,
    burn_in: usize,
) -> Result<ContainmentSummary, CliError> {
    let mut outside = 0;
    let mut worst = f64::NEG_INFINITY;
    for x in points {
        let v = e.quadratic_form(x)?;
        worst = worst.max(v);
        if v > 1.0 + DEFAULT_SLACK {
            outside += 1;
        }
    }
    Ok(ContainmentSummary {
        steps,
        burn_in,
        checked: points.len(),
        outside,
        worst_value: worst,
    })
}

/// Unit vectors for the boundary of a `q`-dimensional ellipsoid: a circle of
/// `r` points for `q = 2`, an `r × r` latitude/longitude mesh for `q = 3`
/// (poles included, longitudes at multiples of `2π/r`), and `±1` for `q = 1`.
pub fn unit_boundary(q: usize, r: usize) -> Result<Vec<DVector<f64>>, CliError> {
    match q {
        1 => Ok(vec![
            DVector::from_element(1, -1.0),
            DVector::from_element(1, 1.0),
        ]),
        2 => {
            if r == 0 {
                return Err(CliError::invalid("resolution must be positive"));
            }
            Ok((0..r)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / r as f64;
                    DVector::from_vec(vec![t.cos(), t.sin()])
                })
                .collect())
        }
        3 => {
            if r < 2 {
                return Err(CliError::invalid("a 3-D mesh needs resolution at least 2"));
            }
            let mut out = Vec::with_capacity(r * r);
            for i in 0..r {
                let theta = PI * i as f64 / (r - 1) as f64;
                for j in 0..r {
                    let phi = 2.0 * PI * j as f64 / r as f64;
                    out.push(DVector::from_vec(vec![
                        theta.sin() * phi.cos(),
                        theta.sin() * phi.sin(),
                        theta.cos(),
                    ]));
                }
            }
            Ok(out)
        }
        _ => Err(CliError::invalid(format!("no boundary mesh for dimension {q}"))),
    }
}

pub fn ellipse_points(report: &Path, resolution: usize, out: Option<&Path>) -> Result<Outcome, CliError> {
    let e = BoundReport::load(report)?.ellipsoid()?;
    let q = e.dim();
    let w = open_output(out)?;
    if q > 3 {
        // Too many dimensions to mesh: list the principal axes instead.
        let mut header = vec!["axis".to_string(), "length".to_string()];
        header.extend(columns("v", q));
        let mut w = CsvWriter::new(w, &header)?;
        for (k, (len, dir)) in e.semi_axes().iter().enumerate() {
            let mut cells = vec![(k + 1).to_string(), crate::csv::number(*len)];
            cells.extend(dir.iter().map(|v| crate::csv::number(*v)));
            w.text_row(&cells)?;
        }
        w.finish()?;
        return Ok(Outcome::Ok);
    }
    let root: DMatrix<f64> = e.boundary_map()?;
    let mut w = CsvWriter::new(w, &columns("x", q))?;
    for u in unit_boundary(q, resolution)? {
        let x = e.center() + &root * u;
        w.row(x.iter().copied())?;
    }
    w.finish()?;
    Ok(Outcome::Ok)
}
