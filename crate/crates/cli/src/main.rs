use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dhs_core::conjoined::{self, Construction};
use dhs_core::disconjugacy;
use dhs_core::extension::{self, BoundaryCondition, Verdict};
use dhs_core::io::{self, ConverterFile, MatrixJson};
use dhs_core::lattice::validate_system;
use dhs_core::linalg::{self, CMat, C64};
use dhs_core::propagation::{self, Direction};
use dhs_core::report::{self, err_stage, Report, StageReport, WorkflowConfig};
use dhs_core::{HamiltonianSystem, LatticeWindow, Trajectory};

#[derive(Parser)]
#[command(name = "dhs", version, about = "Discrete Hamiltonian systems: recessive solutions, deficiency indices, Friedrichs extensions")]
struct Cli {
    /// Numerical tolerance of the verdicts.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    /// Last lattice point used as "infinity"; defaults per command.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
    /// Seed of the randomized scan directions.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Text,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Ssum,
    Bvp,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the standing assumptions on a system file.
    Validate {
        #[arg(long)]
        system: PathBuf,
    },
    /// Turn a scalar or Sturm-Liouville spec into a system file.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Propagate initial data over a range of lattice points.
    Propagate {
        #[arg(long)]
        system: PathBuf,
        /// Spectral parameter, e.g. `-1`, `0.5+2i`.
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        lambda: String,
        /// `principal` for (0; I), `identity` for I_2n, or a matrix file.
        #[arg(long, default_value = "principal")]
        init: String,
        #[arg(long)]
        t0: Option<usize>,
        /// `a..b`, both inclusive.
        #[arg(long)]
        range: Option<String>,
    },
    /// Recessive solution at lambda0.
    Recessive {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lambda0: f64,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
    },
    /// Positivity of the quadratic form, cross-checked by a zero scan.
    Disconjugacy {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lambda0: f64,
        #[arg(long)]
        window: Option<String>,
        /// Where to write the witness sequence of a FAIL verdict.
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// Lower bound of the form on a window.
    Lowerbound {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long)]
        window: Option<String>,
    },
    /// Number of square-summable solutions.
    Deficiency {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
    },
    /// Pairing matrix of the ordered square-summable basis.
    Theta {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
    },
    /// Check a boundary condition or build the Friedrichs one.
    Extension {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, num_args = 2, value_names = ["M", "N"], conflicts_with = "friedrichs")]
        check: Option<Vec<PathBuf>>,
        #[arg(long)]
        friedrichs: bool,
    },
    /// Run every stage from a workflow config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(v) => ExitCode::from(match v {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_system(path: &Path) -> Result<HamiltonianSystem> {
    io::system_from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn parse_lambda(s: &str) -> Result<C64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if let Ok(re) = t.parse::<f64>() {
        return Ok(C64::new(re, 0.0));
    }
    let body = t.strip_suffix('i').ok_or_else(|| anyhow!("cannot parse lambda `{s}`"))?;
    // Split at the last sign that is not part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (body[..k].parse::<f64>()?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        x => x.parse::<f64>().with_context(|| format!("cannot parse lambda `{s}`"))?,
    };
    Ok(C64::new(re, im))
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once("..").ok_or_else(|| anyhow!("expected a..b, got `{s}`"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_window(s: Option<&str>, default: LatticeWindow) -> Result<LatticeWindow> {
    match s {
        None => Ok(default),
        Some(s) => {
            let (a, b) = parse_range(s)?;
            Ok(LatticeWindow::new(a, b)?)
        }
    }
}

/// Three quarters of the trajectory domain, leaving room for the shooting pad.
fn default_horizon(sys: &HamiltonianSystem) -> usize {
    let w = sys.window();
    w.start + 3 * (w.end + 1 - w.start) / 4
}

fn first_points(sys: &HamiltonianSystem, len: usize) -> Result<LatticeWindow> {
    let w = sys.window();
    Ok(LatticeWindow::new(w.start, (w.start + len).min(w.end))?)
}

fn emit(cli: &Cli, r: &Report) -> Verdict {
    let text = match cli.format {
        OutFormat::Json => report::emit(r, report::Format::Json),
        OutFormat::Text => report::emit(r, report::Format::Text),
        OutFormat::Csv => report::curves_csv(r),
    };
    print!("{text}");
    r.verdict()
}

fn single(cli: &Cli, st: StageReport) -> Verdict {
    let mut r = Report::default();
    r.push(st);
    emit(cli, &r)
}

fn basis_json(y: &dhs_core::ConjoinedBasis) -> String {
    let values: Vec<MatrixJson> = y.values().iter().map(MatrixJson::from_mat).collect();
    let doc = serde_json::json!({ "t_start": y.start(), "values": values });
    format!("{doc}\n")
}

fn trajectory_json(y: &Trajectory) -> String {
    let rows: Vec<Vec<[f64; 2]>> = y.values().iter().map(|v| v.iter().map(|z| [z.re, z.im]).collect()).collect();
    format!("{}\n", serde_json::json!({ "t_start": y.start(), "values": rows }))
}

fn norm_curve(y: &dhs_core::ConjoinedBasis) -> Vec<(usize, f64)> {
    let step = ((y.end() - y.start()) / 32).max(1);
    let mut pts: Vec<(usize, f64)> = (y.start()..=y.end()).step_by(step).map(|t| (t, y.y(t).unwrap().norm())).collect();
    if pts.last().map(|p| p.0) != Some(y.end()) {
        pts.push((y.end(), y.y(y.end()).unwrap().norm()));
    }
    pts
}

fn run(cli: &Cli) -> Result<Verdict> {
    match &cli.cmd {
        Cmd::Validate { system } => {
            let sys = load_system(system)?;
            let v = validate_system(&sys, 1e-10);
            let mut st = StageReport::new("validate");
            st.num("validate_system", "violations", v.violations.len() as f64);
            let normal = disconjugacy::check_identically_normal(&sys, sys.window());
            st.num("check_identically_normal", "normal", normal as u8 as f64);
            let st = match v.violations.first() {
                Some(x) => st.fail(format!("{:?} at t={} (magnitude {:e})", x.kind, x.t, x.magnitude)),
                None => {
                    st.message = format!("n = {}, window [{}, {}]", sys.n(), sys.window().start, sys.window().end);
                    st
                }
            };
            Ok(single(cli, st))
        }
        Cmd::Convert { input, output } => {
            let spec: ConverterFile = serde_json::from_str(&read(input)?).with_context(|| format!("parsing {}", input.display()))?;
            let text = io::system_to_json(&spec.convert()?)?;
            match output {
                Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
                None => println!("{text}"),
            }
            Ok(Verdict::Pass)
        }
        Cmd::Propagate { system, lambda, init, t0, range } => {
            let sys = load_system(system)?;
            let lam = parse_lambda(lambda)?;
            let n = sys.n();
            let w = sys.window();
            let y0 = match init.as_str() {
                "principal" => {
                    let mut m = linalg::zeros(2 * n, n);
                    m.view_mut((n, 0), (n, n)).copy_from(&linalg::identity(n));
                    m
                }
                "identity" => linalg::identity(2 * n),
                path => io::matrix_from_json(&read(Path::new(path))?).map_err(|e| anyhow!("{path}: {e}"))?,
            };
            if y0.nrows() != 2 * n {
                bail!("initial data has {} rows, expected {}", y0.nrows(), 2 * n);
            }
            let t0 = t0.unwrap_or(w.start);
            let (lo, hi) = match range {
                Some(r) => parse_range(r)?,
                None => (t0, w.end + 1),
            };
            if lo > t0 || hi < t0 {
                bail!("range {lo}..{hi} must contain t0 = {t0}");
            }
            let fwd = propagation::solve_ivp(&sys, lam, t0, &y0, Direction::Forward, Some(hi))?;
            let bwd = propagation::solve_ivp(&sys, lam, t0, &y0, Direction::Backward, Some(lo))?;
            let mut values = bwd.values().to_vec();
            values.extend_from_slice(&fwd.values()[1..]);
            let y = dhs_core::ConjoinedBasis::new(lo, values)?;
            match cli.format {
                OutFormat::Csv | OutFormat::Text => print!("{}", io::basis_csv(&y)),
                OutFormat::Json => print!("{}", basis_json(&y)),
            }
            Ok(Verdict::Pass)
        }
        Cmd::Recessive { system, lambda0, method } => {
            let sys = load_system(system)?;
            let w = sys.window();
            let last = w.end + 1;
            let h = cli.horizon.unwrap_or_else(|| default_horizon(&sys));
            let t1 = w.start + 1;
            let mut st = StageReport::new("recessive");
            let ssum = if *method != Method::Bvp {
                match conjoined::construct_recessive(&sys, *lambda0, t1, h, cli.tol) {
                    Ok(r) => {
                        st.num("construct_recessive", "tail_remainder", r.diagnostics.tail_remainder);
                        st.num("construct_recessive", "tail_uncertainty", r.diagnostics.tail_uncertainty);
                        if let Some(c) = r.diagnostics.clipped_at {
                            st.num("construct_recessive", "clipped_at", c as f64);
                        }
                        st.curve("construct_recessive", "norm", norm_curve(&r.basis));
                        Some(r)
                    }
                    Err(e) => return Ok(single(cli, err_stage("recessive", e))),
                }
            } else {
                None
            };
            let bvp = if *method != Method::Ssum {
                let room = last.saturating_sub(h);
                let s_list: Vec<usize> = if room >= 4 { (0..5).map(|k| h + k * room / 4).collect() } else { vec![h] };
                match conjoined::recessive_via_bvp_limit(&sys, *lambda0, t1, &s_list, cli.tol) {
                    Ok(r) => {
                        st.num("recessive_via_bvp_limit", "tail_remainder", r.diagnostics.tail_remainder);
                        st.num("recessive_via_bvp_limit", "tail_uncertainty", r.diagnostics.tail_uncertainty);
                        st.curve("recessive_via_bvp_limit", "convergence", r.diagnostics.convergence_curve.clone());
                        Some(r)
                    }
                    Err(e) => return Ok(single(cli, err_stage("recessive", e))),
                }
            } else {
                None
            };
            if let (Some(a), Some(b)) = (&ssum, &bvp) {
                let to = a.basis.end().min(b.basis.end());
                let diff = (t1..=to).map(|t| (a.basis.y(t).unwrap() - b.basis.y(t).unwrap()).norm()).fold(0.0, f64::max);
                st.num("recessive", "agreement", diff);
                if diff > 1e-7 * a.basis.y(t1)?.norm().max(1.0) {
                    st = st.fail(format!("constructions differ by {diff:e}"));
                }
            }
            let chosen = ssum.as_ref().or(bvp.as_ref()).expect("a method ran");
            st.num("recessive", "prepared_defect", conjoined::prepared_defect(chosen.basis.y(t1)?));
            st.mat("recessive", "Y_t1", chosen.basis.y(t1)?.clone());
            if st.verdict == Verdict::Pass {
                let by = match chosen.construction {
                    Construction::SSum => "S-sum",
                    Construction::BvpLimit => "two-point limit",
                    Construction::DominantTail => "dominant tail",
                };
                st.message = format!("{by} on [{}, {}]", chosen.basis.start(), chosen.basis.end());
            }
            if cli.format == OutFormat::Csv {
                print!("{}", io::basis_csv(&chosen.basis));
                return Ok(st.verdict);
            }
            Ok(single(cli, st))
        }
        Cmd::Disconjugacy { system, lambda0, window, witness } => {
            let sys = load_system(system)?;
            let win = parse_window(window.as_deref(), first_points(&sys, 40)?)?;
            let mut st = StageReport::new("disconjugacy");
            let v = match disconjugacy::is_disconjugate_seeded(&sys, *lambda0, win, 1e-10, 4, cli.seed) {
                Ok(v) => v,
                Err(e) => return Ok(single(cli, err_stage("disconjugacy", e))),
            };
            st.num("is_disconjugate", "min_eigenvalue", v.min_eigenvalue);
            st.num("is_disconjugate", "form_dim", v.form_dim as f64);
            st.num("generalized_zero_scan", "disconjugate", v.scan.disconjugate as u8 as f64);
            let st = if v.disconjugate != v.scan.disconjugate {
                st.verdict = Verdict::Inconclusive;
                st.message = "form test and zero scan disagree".into();
                st
            } else if v.disconjugate {
                st.message = format!("disconjugate on [{}, {}]", win.start, win.end);
                st
            } else {
                if let Some(val) = v.witness_value {
                    st.num("is_disconjugate", "witness_value", val);
                }
                if let (Some(path), Some(y)) = (witness, &v.witness) {
                    fs::write(path, trajectory_json(y)).with_context(|| format!("writing {}", path.display()))?;
                }
                st.fail(format!("not disconjugate at lambda0 = {lambda0} on [{}, {}]", win.start, win.end))
            };
            Ok(single(cli, st))
        }
        Cmd::Lowerbound { system, lambda, window } => {
            let sys = load_system(system)?;
            let win = parse_window(window.as_deref(), first_points(&sys, 40)?)?;
            let mut st = StageReport::new("lower_bound");
            let st = match disconjugacy::lower_bound_estimate(&sys, *lambda, win) {
                Ok(g) => {
                    st.num("lower_bound_estimate", "gamma", g.gamma);
                    st.num("lower_bound_estimate", "form_dim", g.form_dim as f64);
                    if g.gamma > 0.0 {
                        st.message = format!("gamma = {}", report::fmt_num(g.gamma));
                        st
                    } else {
                        st.fail("form is not bounded below by a positive constant")
                    }
                }
                Err(e) => err_stage("lower_bound", e),
            };
            Ok(single(cli, st))
        }
        Cmd::Deficiency { system, lambda } => {
            let sys = load_system(system)?;
            let h = cli.horizon.unwrap_or_else(|| default_horizon(&sys));
            let mut st = StageReport::new("deficiency");
            let st = match extension::estimate_deficiency_index(&sys, *lambda, h, cli.tol) {
                Ok(est) => {
                    st.num("estimate_deficiency_index", "d", est.d as f64);
                    st.num("estimate_deficiency_index", "gap", est.gap);
                    st.num("estimate_deficiency_index", "effective_horizon", est.basis.effective_horizon as f64);
                    for (i, r) in est.spectrum.iter().enumerate() {
                        st.num("estimate_deficiency_index", &format!("tail_ratio_{i}"), *r);
                    }
                    for (j, p) in est.basis.tail_profiles.iter().enumerate() {
                        st.curve("estimate_deficiency_index", &format!("tail_profile_{j}"), p.clone());
                    }
                    st.message = format!("d = {}", est.d);
                    st
                }
                Err(e) => err_stage("deficiency", e),
            };
            Ok(single(cli, st))
        }
        Cmd::Theta { system, lambda } => {
            let sys = load_system(system)?;
            let h = cli.horizon.unwrap_or_else(|| default_horizon(&sys));
            Ok(single(cli, theta_stage(&sys, *lambda, h, cli.tol)))
        }
        Cmd::Extension { system, lambda, check, friedrichs: _ } => {
            let sys = load_system(system)?;
            let h = cli.horizon.unwrap_or_else(|| default_horizon(&sys));
            let n = sys.n();
            let mut st = StageReport::new("extension");
            let (est, ordered, th) = match ordered_theta(&sys, *lambda, h, cli.tol) {
                Ok(x) => x,
                Err(e) => return Ok(single(cli, err_stage("extension", e))),
            };
            let d = est.d;
            st.num("estimate_deficiency_index", "d", d as f64);
            st.num("theta_matrix", "drift", th.drift);
            st.mat("theta_matrix", "theta", th.theta.clone());
            if let Some(paths) = check {
                let m = io::matrix_from_json(&read(&paths[0])?).map_err(|e| anyhow!("{}: {e}", paths[0].display()))?;
                let nn = read_n(&paths[1], d)?;
                let bc = BoundaryCondition { m, n: nn };
                let chk = extension::check_selfadjoint_bc(&bc, &th.theta, d, n, cli.tol)?;
                st.num("check_selfadjoint_bc", "rank", chk.rank as f64);
                st.num("check_selfadjoint_bc", "defect", chk.defect);
                let st = if chk.holds {
                    st.message = format!("self-adjoint boundary condition for d = {d}");
                    st
                } else if chk.rank != d {
                    st.fail(format!("rank(M, N) = {} but d = {d}", chk.rank))
                } else {
                    st.fail(format!("MJM* - N Theta^T N* has relative size {:e}", chk.defect))
                };
                return Ok(single(cli, st));
            }
            let bc = extension::friedrichs_bc(d, n)?;
            let chk = extension::check_selfadjoint_bc(&bc, &extension::canonical_theta(d - n), d, n, 1e-12)?;
            st.num("check_selfadjoint_bc", "defect", chk.defect);
            st.mat("friedrichs_bc", "M", bc.m.clone());
            st.mat("friedrichs_bc", "N", bc.n.clone());
            let patch = first_points(&sys, 4)?;
            let st = match extension::verify_recessive_characterization(&sys, *lambda, &ordered, patch, ordered.end(), cli.tol) {
                Ok(rc) => {
                    for (j, col) in rc.columns.iter().enumerate() {
                        let worst = col.membership.functionals.iter().map(|f| f.value.norm()).fold(0.0, f64::max);
                        st.num("membership_friedrichs", &format!("max_functional_{j}"), worst);
                        st.num("compact_patch", &format!("closing_residual_{j}"), col.patch.closing_residual);
                    }
                    let mut conds = vec!["u(0)=0".to_string()];
                    if d > n {
                        conds.push(format!("(y,theta_j)(inf)=0, j=1..{}", d - n));
                    }
                    st.message = conds.join("; ");
                    st.verdict = rc.verdict.and(Verdict::from_bool(chk.holds));
                    st
                }
                Err(e) => err_stage("extension", e),
            };
            Ok(single(cli, st))
        }
        Cmd::Pipeline { config } => {
            let mut cfg: WorkflowConfig =
                serde_json::from_str(&read(config)?).with_context(|| format!("parsing {}", config.display()))?;
            if let Some(h) = cli.horizon {
                cfg.horizon = h;
            }
            cfg.tol = cli.tol;
            cfg.seed = cli.seed;
            // Relative system paths resolve against the config's directory.
            if let report::SystemSource::File(p) = &mut cfg.system {
                if Path::new(p).is_relative() {
                    if let Some(dir) = config.parent() {
                        *p = dir.join(&*p).to_string_lossy().into_owned();
                    }
                }
            }
            let r = report::run_pipeline(&cfg)?;
            Ok(emit(cli, &r))
        }
    }
}

/// `N` may be empty when `d = n`; an empty file or `[]` gives a `d × 0` matrix.
fn read_n(path: &Path, d: usize) -> Result<CMat> {
    let text = read(path)?;
    let j: MatrixJson = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    match &j {
        MatrixJson::Rows(r) if r.is_empty() => Ok(linalg::zeros(d, 0)),
        MatrixJson::Rows(r) if r.iter().all(|row| row.is_empty()) => Ok(linalg::zeros(r.len(), 0)),
        _ => Ok(j.to_mat(None)?),
    }
}

type Ordered = (extension::DeficiencyEstimate, extension::OrderedBasis, extension::ThetaMatrix);

fn ordered_theta(sys: &HamiltonianSystem, lambda: f64, h: usize, tol: f64) -> dhs_core::Result<Ordered> {
    let est = extension::estimate_deficiency_index(sys, lambda, h, tol)?;
    let ordered = extension::order_basis(&est.basis, &est.recessive, tol)?;
    let (t1, end) = (ordered.t1, ordered.end());
    let t_list: Vec<usize> = (0..=4).map(|k| t1 + k * (end - t1) / 4).collect();
    let th = extension::theta_matrix(&ordered, &t_list, 1e-9)?;
    Ok((est, ordered, th))
}

fn theta_stage(sys: &HamiltonianSystem, lambda: f64, h: usize, tol: f64) -> StageReport {
    let mut st = StageReport::new("theta");
    match ordered_theta(sys, lambda, h, tol) {
        Ok((est, ordered, th)) => {
            st.num("estimate_deficiency_index", "d", est.d as f64);
            st.num("theta_matrix", "drift", th.drift);
            st.num("theta_matrix", "skew_defect", th.skew_defect);
            st.num("theta_matrix", "canonical_residual", th.blocks.max());
            st.mat("theta_matrix", "theta", th.theta.clone());
            st.message = format!("{0}x{0}, rows {1:?}", th.theta.nrows(), ordered.rows);
            if th.blocks.max() > 1e-8 {
                st.fail("theta is not in canonical form")
            } else {
                st
            }
        }
        Err(e) => err_stage("theta", e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_forms() {
        assert_eq!(parse_lambda("-1").unwrap(), C64::new(-1.0, 0.0));
        assert_eq!(parse_lambda("0.5+2i").unwrap(), C64::new(0.5, 2.0));
        assert_eq!(parse_lambda("1e-3-1e-2i").unwrap(), C64::new(1e-3, -1e-2));
        assert_eq!(parse_lambda("-i").unwrap(), C64::new(0.0, -1.0));
        assert_eq!(parse_lambda("3i").unwrap(), C64::new(0.0, 3.0));
        assert!(parse_lambda("x").is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("2..10").unwrap(), (2, 10));
        assert!(parse_range("2-10").is_err());
    }
}
