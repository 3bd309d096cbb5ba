//! The end-to-end workflow and its report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::disconjugacy;
use crate::error::{Error, Result};
use crate::extension::{self, Verdict};
use crate::io::{ConverterFile, SystemFile};
use crate::lattice::{self, HamiltonianSystem, LatticeWindow};
use crate::linalg::CMat;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemSource {
    File(String),
    Inline(SystemFile),
    Converter(ConverterFile),
}

impl SystemSource {
    pub fn load(&self) -> Result<HamiltonianSystem> {
        match self {
            SystemSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{path}: {e}")))?;
                crate::io::system_from_json(&text)
            }
            SystemSource::Inline(f) => f.to_system(),
            SystemSource::Converter(c) => c.convert(),
        }
    }
}

fn default_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorkflowConfig {
    pub system: SystemSource,
    pub lambda0: f64,
    pub lambda: f64,
    pub horizon: usize,
    /// Window of the disconjugacy and lower-bound tests; defaults to the
    /// first 41 points.
    #[serde(default)]
    pub disconjugacy_window: Option<LatticeWindow>,
    /// Definiteness window, also used for the compact patches; defaults to
    /// the first 5 points.
    #[serde(default)]
    pub definiteness_window: Option<LatticeWindow>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Number {
    /// `stage/operation:name`.
    pub tag: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedMatrix {
    pub tag: String,
    pub value: CMat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub tag: String,
    pub points: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: String,
    pub verdict: Verdict,
    pub message: String,
    pub numbers: Vec<Number>,
    pub matrices: Vec<NamedMatrix>,
    pub curves: Vec<Curve>,
}

impl StageReport {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.into(),
            verdict: Verdict::Pass,
            message: String::new(),
            numbers: Vec::new(),
            matrices: Vec::new(),
            curves: Vec::new(),
        }
    }

    pub fn num(&mut self, op: &str, name: &str, value: f64) {
        self.numbers.push(Number { tag: format!("{}/{op}:{name}", self.stage), value });
    }

    pub fn mat(&mut self, op: &str, name: &str, value: CMat) {
        self.matrices.push(NamedMatrix { tag: format!("{}/{op}:{name}", self.stage), value });
    }

    pub fn curve(&mut self, op: &str, name: &str, points: Vec<(usize, f64)>) {
        self.curves.push(Curve { tag: format!("{}/{op}:{name}", self.stage), points });
    }

    pub fn fail(mut self, message: impl Into<String>) -> Self {
        self.verdict = Verdict::Fail;
        self.message = message.into();
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub stages: Vec<StageReport>,
}

impl Report {
    pub fn verdict(&self) -> Verdict {
        self.stages.iter().fold(Verdict::Pass, |v, s| v.and(s.verdict))
    }

    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn number(&self, tag: &str) -> Option<f64> {
        self.stages.iter().flat_map(|s| &s.numbers).find(|n| n.tag == tag).map(|n| n.value)
    }

    /// Records `stage` and tells whether downstream stages may run.
    pub fn push(&mut self, stage: StageReport) -> bool {
        let ok = stage.verdict == Verdict::Pass;
        self.stages.push(stage);
        ok
    }
}

/// A stage ended by `e`; convergence failures are inconclusive.
pub fn err_stage(stage: &str, e: Error) -> StageReport {
    let mut s = StageReport::new(stage);
    s.verdict = match e {
        Error::AmbiguousCount { .. } | Error::TailNotConverged { .. } | Error::NonConvergent(_) => Verdict::Inconclusive,
        _ => Verdict::Fail,
    };
    s.message = e.to_string();
    s
}

/// Runs the stages in dependency order and stops at the first stage that
/// does not pass.
pub fn run_pipeline(config: &WorkflowConfig) -> Result<Report> {
    let sys = config.system.load()?;
    run_pipeline_on(&sys, config)
}

pub fn run_pipeline_on(sys: &HamiltonianSystem, config: &WorkflowConfig) -> Result<Report> {
    let mut report = Report::default();
    let tol = config.tol;
    let win = sys.window();
    let (lambda, lambda0) = (config.lambda, config.lambda0);
    let a = win.start;

    let mut st = StageReport::new("validate");
    let v = lattice::validate_system(sys, 1e-10);
    st.num("validate_system", "violations", v.violations.len() as f64);
    let last = win.end + 1;
    let st = if !v.is_empty() {
        let first = &v.violations[0];
        st.fail(format!("{:?} at t={} (magnitude {:e})", first.kind, first.t, first.magnitude))
    } else if !(lambda < lambda0) {
        st.fail(format!("lambda = {lambda} must be below lambda0 = {lambda0}"))
    } else if config.horizon > last || config.horizon < a + 17 {
        st.fail(format!("horizon {} must lie in [{}, {last}]", config.horizon, a + 17))
    } else {
        st.message = format!("n = {}, window [{}, {}]", sys.n(), win.start, win.end);
        st
    };
    if !report.push(st) {
        return Ok(report);
    }

    let dwin = match config.definiteness_window {
        Some(w) => w,
        None => LatticeWindow::new(a, (a + 4).min(win.end))?,
    };
    let mut st = StageReport::new("definiteness");
    let st = match lattice::definiteness_check(sys, dwin, lambda, 1e-10) {
        Ok(r) => {
            st.num("definiteness_check", "min_eigenvalue", r.min_eigenvalue);
            st.mat("definiteness_check", "gram", r.gram);
            if r.holds {
                st.message = format!("holds on [{}, {}]", dwin.start, dwin.end);
                st
            } else {
                st.fail(format!("W-Gram on [{}, {}] is not positive definite", dwin.start, dwin.end))
            }
        }
        Err(e) => err_stage("definiteness", e),
    };
    if !report.push(st) {
        return Ok(report);
    }

    let cwin = match config.disconjugacy_window {
        Some(w) => w,
        None => LatticeWindow::new(a, (a + 40).min(win.end))?,
    };
    let mut st = StageReport::new("disconjugacy");
    let st = match disconjugacy::is_disconjugate_seeded(sys, lambda0, cwin, 1e-10, 4, config.seed) {
        Ok(v) => {
            st.num("is_disconjugate", "min_eigenvalue", v.min_eigenvalue);
            st.num("is_disconjugate", "form_dim", v.form_dim as f64);
            let normal = disconjugacy::check_identically_normal(sys, win);
            st.num("check_identically_normal", "normal", normal as u8 as f64);
            if v.disconjugate != v.scan.disconjugate {
                st.verdict = Verdict::Inconclusive;
                st.message = "form test and zero scan disagree".into();
                st
            } else if !v.disconjugate {
                if let Some(w) = v.witness_value {
                    st.num("is_disconjugate", "witness_value", w);
                }
                st.fail(format!("not disconjugate at lambda0 = {lambda0} on [{}, {}]", cwin.start, cwin.end))
            } else if !normal {
                st.fail("system is not identically normal")
            } else {
                st.message = format!("disconjugate on [{}, {}]", cwin.start, cwin.end);
                st
            }
        }
        Err(e) => err_stage("disconjugacy", e),
    };
    if !report.push(st) {
        return Ok(report);
    }

    let mut st = StageReport::new("lower_bound");
    let st = match disconjugacy::lower_bound_estimate(sys, lambda, cwin) {
        Ok(g) => {
            st.num("lower_bound_estimate", "gamma", g.gamma);
            if g.gamma > 0.0 {
                st.message = format!("gamma = {:.6e}", g.gamma);
                st
            } else {
                st.fail("form is not bounded below by a positive constant")
            }
        }
        Err(e) => err_stage("lower_bound", e),
    };
    if !report.push(st) {
        return Ok(report);
    }

    let mut st = StageReport::new("deficiency");
    let est = match extension::estimate_deficiency_index(sys, lambda, config.horizon, tol) {
        Ok(est) => est,
        Err(e) => {
            report.push(err_stage("deficiency", e));
            return Ok(report);
        }
    };
    {
        let rec = &est.recessive;
        let mut rs = StageReport::new("recessive");
        rs.num("recessive_on", "construction_s_sum", matches!(rec.construction, crate::conjoined::Construction::SSum) as u8 as f64);
        rs.num("recessive_on", "tail_remainder", rec.diagnostics.tail_remainder);
        rs.num("recessive_on", "tail_uncertainty", rec.diagnostics.tail_uncertainty);
        rs.num("recessive_on", "prepared_defect", crate::conjoined::prepared_defect(rec.basis.y(rec.t1)?));
        let norms: Vec<(usize, f64)> = rec
            .basis
            .values()
            .iter()
            .enumerate()
            .step_by(((rec.basis.end() - a) / 16).max(1))
            .map(|(i, m)| (a + i, m.norm()))
            .collect();
        rs.curve("recessive_on", "norm", norms);
        rs.message = format!("{:?} on [{}, {}]", rec.construction, rec.basis.start(), rec.basis.end());
        report.push(rs);
    }
    st.num("estimate_deficiency_index", "d", est.d as f64);
    st.num("estimate_deficiency_index", "gap", est.gap);
    st.num("estimate_deficiency_index", "effective_horizon", est.basis.effective_horizon as f64);
    for (i, r) in est.spectrum.iter().enumerate() {
        st.num("estimate_deficiency_index", &format!("tail_ratio_{i}"), *r);
    }
    st.message = format!("d = {}", est.d);
    report.push(st);

    let n = sys.n();
    let mut st = StageReport::new("theta");
    let ordered = match extension::order_basis(&est.basis, &est.recessive, tol) {
        Ok(o) => o,
        Err(e) => {
            report.push(err_stage("theta", e));
            return Ok(report);
        }
    };
    let h = ordered.end();
    let t1 = ordered.t1;
    let t_list: Vec<usize> = (0..=4).map(|k| t1 + k * (h - t1) / 4).collect();
    let st = match extension::theta_matrix(&ordered, &t_list, 1e-9) {
        Ok(th) => {
            st.num("theta_matrix", "drift", th.drift);
            st.num("theta_matrix", "canonical_residual", th.blocks.max());
            st.num("theta_matrix", "skew_defect", th.skew_defect);
            st.message = format!("{0}×{0}, rows {1:?}", th.theta.nrows(), ordered.rows);
            st.mat("theta_matrix", "theta", th.theta.clone());
            if th.blocks.max() > 1e-8 {
                st.fail("Θ is not in canonical form")
            } else {
                st
            }
        }
        Err(e) => err_stage("theta", e),
    };
    if !report.push(st) {
        return Ok(report);
    }

    let d = est.d;
    let mut st = StageReport::new("friedrichs");
    let bc = extension::friedrichs_bc(d, n)?;
    let chk = extension::check_selfadjoint_bc(&bc, &extension::canonical_theta(d - n), d, n, 1e-12)?;
    st.num("check_selfadjoint_bc", "defect", chk.defect);
    st.num("check_selfadjoint_bc", "rank", chk.rank as f64);
    st.mat("friedrichs_bc", "M", bc.m.clone());
    st.mat("friedrichs_bc", "N", bc.n.clone());
    let st = match extension::verify_recessive_characterization(sys, lambda, &ordered, dwin, h, tol) {
        Ok(rc) => {
            for (j, col) in rc.columns.iter().enumerate() {
                st.num("verify_recessive_characterization", &format!("closing_residual_{j}"), col.patch.closing_residual);
                let worst = col.membership.functionals.iter().map(|f| f.value.norm()).fold(0.0, f64::max);
                st.num("membership_friedrichs", &format!("max_functional_{j}"), worst);
                st.num("membership_friedrichs", &format!("unpatched_u0_{j}"), col.unpatched.u0);
            }
            let mut conds = vec!["u(0)=0".to_string()];
            if d > n {
                conds.push(format!("(y,theta_j)(inf)=0, j=1..{}", d - n));
            }
            st.message = conds.join("; ");
            st.verdict = rc.verdict.and(Verdict::from_bool(chk.holds));
            st
        }
        Err(e) => err_stage("friedrichs", e),
    };
    report.push(st);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

/// Fifteen significant digits; non-finite values as `inf`, `-inf`, `nan`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.14e}")
    }
}

fn json_num(x: f64) -> String {
    if x.is_finite() {
        fmt_num(x)
    } else {
        format!("\"{}\"", fmt_num(x))
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

fn json_matrix(m: &CMat) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let entries: Vec<String> =
                (0..m.ncols()).map(|j| format!("[{},{}]", json_num(m[(i, j)].re), json_num(m[(i, j)].im))).collect();
            format!("[{}]", entries.join(","))
        })
        .collect();
    format!("[{}]", rows.join(","))
}

/// Deterministic rendering; both formats carry the same number strings.
pub fn emit(report: &Report, format: Format) -> String {
    match format {
        Format::Json => emit_json(report),
        Format::Text => emit_text(report),
    }
}

fn emit_json(report: &Report) -> String {
    let mut out = String::new();
    let _ = write!(out, "{{\"verdict\":{},\"stages\":[", json_str(&report.verdict().to_string()));
    for (k, s) in report.stages.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "\n{{\"stage\":{},\"verdict\":{},\"message\":{},\"numbers\":{{",
            json_str(&s.stage),
            json_str(&s.verdict.to_string()),
            json_str(&s.message)
        );
        let nums: Vec<String> = s.numbers.iter().map(|n| format!("{}:{}", json_str(&n.tag), json_num(n.value))).collect();
        out.push_str(&nums.join(","));
        out.push_str("},\"matrices\":{");
        let mats: Vec<String> = s.matrices.iter().map(|m| format!("{}:{}", json_str(&m.tag), json_matrix(&m.value))).collect();
        out.push_str(&mats.join(","));
        out.push_str("},\"curves\":{");
        let curves: Vec<String> = s
            .curves
            .iter()
            .map(|c| {
                let pts: Vec<String> = c.points.iter().map(|(t, v)| format!("[{t},{}]", json_num(*v))).collect();
                format!("{}:[{}]", json_str(&c.tag), pts.join(","))
            })
            .collect();
        out.push_str(&curves.join(","));
        out.push_str("}}");
    }
    out.push_str("]}\n");
    out
}

fn emit_text(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "verdict {}", report.verdict());
    for s in &report.stages {
        let _ = writeln!(out, "[{}] {} {}", s.stage, s.verdict, s.message);
        for n in &s.numbers {
            let _ = writeln!(out, "  {} = {}", n.tag, fmt_num(n.value));
        }
        for m in &s.matrices {
            let _ = writeln!(out, "  {} ({}x{})", m.tag, m.value.nrows(), m.value.ncols());
            for i in 0..m.value.nrows() {
                let row: Vec<String> = (0..m.value.ncols())
                    .map(|j| format!("{} {}", fmt_num(m.value[(i, j)].re), fmt_num(m.value[(i, j)].im)))
                    .collect();
                let _ = writeln!(out, "    {}", row.join(" | "));
            }
        }
        for c in &s.curves {
            let _ = writeln!(out, "  {} curve", c.tag);
            for (t, v) in &c.points {
                let _ = writeln!(out, "    {t} {}", fmt_num(*v));
            }
        }
    }
    out
}

/// Curves as `tag,t,value` lines.
pub fn curves_csv(report: &Report) -> String {
    let mut out = String::from("tag,t,value\n");
    for c in report.stages.iter().flat_map(|s| &s.curves) {
        for (t, v) in &c.points {
            let _ = writeln!(out, "{},{t},{}", c.tag, fmt_num(*v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_config(lambda: f64, lambda0: f64) -> WorkflowConfig {
        let sys = HamiltonianSystem::free(LatticeWindow::new(0, 400).unwrap());
        WorkflowConfig {
            system: SystemSource::Inline(SystemFile::from_system(&sys)),
            lambda0,
            lambda,
            horizon: 300,
            disconjugacy_window: None,
            definiteness_window: None,
            tol: 1e-8,
            seed: 0,
        }
    }

    #[test]
    fn free_system_full_pass() {
        let r = run_pipeline(&free_config(-1.0, 0.0)).unwrap();
        assert_eq!(r.verdict(), Verdict::Pass, "{}", emit(&r, Format::Text));
        assert_eq!(r.number("deficiency/estimate_deficiency_index:d"), Some(1.0));
        assert_eq!(r.stage("friedrichs").unwrap().message, "u(0)=0");
        assert_eq!(r.stages.len(), 8);
    }

    #[test]
    fn lambda_above_lambda0_rejected() {
        let r = run_pipeline(&free_config(0.5, 0.0)).unwrap();
        assert_eq!(r.stages.len(), 1);
        assert_eq!(r.verdict(), Verdict::Fail);
    }

    #[test]
    fn zero_weight_halts_at_definiteness() {
        let win = LatticeWindow::new(0, 100).unwrap();
        let sys = HamiltonianSystem::scalar(win, 0.0, 1.0, 0.0, 0.0).unwrap();
        let mut cfg = free_config(-1.0, 0.0);
        cfg.system = SystemSource::Inline(SystemFile::from_system(&sys));
        cfg.horizon = 80;
        let r = run_pipeline(&cfg).unwrap();
        let last = r.stages.last().unwrap();
        assert_eq!(last.stage, "definiteness");
        assert_eq!(last.verdict, Verdict::Fail);
    }

    #[test]
    fn emit_is_deterministic_and_consistent() {
        let empty = emit(&Report::default(), Format::Json);
        let v: serde_json::Value = serde_json::from_str(&empty).unwrap();
        assert_eq!(v["stages"].as_array().unwrap().len(), 0);
        let r = run_pipeline(&free_config(-1.0, 0.0)).unwrap();
        let j1 = emit(&r, Format::Json);
        assert_eq!(j1, emit(&r, Format::Json));
        let v: serde_json::Value = serde_json::from_str(&j1).unwrap();
        let text = emit(&r, Format::Text);
        for s in v["stages"].as_array().unwrap() {
            for (tag, val) in s["numbers"].as_object().unwrap() {
                let line = text.lines().find(|l| l.trim_start().starts_with(&format!("{tag} = "))).unwrap();
                let tv = line.rsplit(' ').next().unwrap();
                match val {
                    serde_json::Value::String(x) => assert_eq!(x, tv),
                    other => assert_eq!(other.as_f64().unwrap(), tv.parse::<f64>().unwrap()),
                }
            }
        }
    }
}
