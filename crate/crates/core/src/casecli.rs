//! Case-study driver, report writers and the `drp` command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridstrength::harness::{run_lemma_harness, LemmaTrial};
use crate::gridstrength::{eig_sym, LemmaStatus};
use crate::inverters::{build_gfl_model, build_gfm_model, load_params, AdmittanceModel, InverterParams};
use crate::netgraph::{grounded_laplacian, load_network, NetworkSpec};
use crate::sensitivity::{
    sibs_sweep, sweep, verify_det_factorization, verify_remark1_equality, GridSpec, InverterKind,
    Remark1Report, SibsConfig, SweepResult, SystemAssignment,
};

pub const DEFAULT_ACCEPTANCE: &str = include_str!("../../../fixtures/acceptance.json");

// ---------------------------------------------------------------------------
// Configuration

/// Which kind sits on each inverter node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Assignment {
    AllGfl,
    AllGfm,
    Custom(Vec<InverterKind>),
}

impl FromStr for Assignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_kind = |t: &str| match t.trim().to_ascii_lowercase().as_str() {
            "gfl" => Ok(InverterKind::Gfl),
            "gfm" => Ok(InverterKind::Gfm),
            other => Err(Error::schema("assign", format!("unknown inverter kind `{other}`"))),
        };
        if !s.contains(',') {
            return Ok(match parse_kind(s)? {
                InverterKind::Gfl => Assignment::AllGfl,
                InverterKind::Gfm => Assignment::AllGfm,
            });
        }
        Ok(Assignment::Custom(s.split(',').map(parse_kind).collect::<Result<_>>()?))
    }
}

impl Assignment {
    pub fn kinds(&self, n: usize) -> Result<Vec<InverterKind>> {
        match self {
            Assignment::AllGfl => Ok(vec![InverterKind::Gfl; n]),
            Assignment::AllGfm => Ok(vec![InverterKind::Gfm; n]),
            Assignment::Custom(k) if k.len() == n => Ok(k.clone()),
            Assignment::Custom(k) => Err(Error::schema(
                "assign",
                format!("{} kinds given for {n} inverter nodes", k.len()),
            )),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Assignment::AllGfl => "gfl".into(),
            Assignment::AllGfm => "gfm".into(),
            Assignment::Custom(k) => k
                .iter()
                .map(|k| match k {
                    InverterKind::Gfl => "gfl",
                    InverterKind::Gfm => "gfm",
                })
                .collect::<Vec<_>>()
                .join("-"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub network: PathBuf,
    pub params: PathBuf,
    pub assign: Assignment,
    pub k: Option<f64>,
    pub grid: GridSpec,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn load(&self) -> Result<(NetworkSpec, InverterParams)> {
        let mut net = load_network(&self.network)?;
        if let Some(k) = self.k {
            net = net.with_k(k);
            net.validate()?;
        }
        Ok((net, load_params(&self.params)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub kappa_db: f64,
    pub modal_rel: f64,
    pub det_rel: f64,
    pub lemma_margin: f64,
    pub kron_abs: f64,
    pub beq_identity_abs: f64,
    pub admittance_rel: f64,
    pub grid_refinement_db: f64,
    pub subsystem_gap_info_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublishedSystem {
    pub name: String,
    pub assign: String,
    pub published_db: Option<f64>,
    pub citation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseScenario {
    pub k: f64,
    /// `[a, b]`: system `a` must have a strictly lower peak than `b`.
    pub ordering: [String; 2],
    pub systems: Vec<PublishedSystem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SibsReference {
    pub scr_min: f64,
    pub scr_max: f64,
    pub steps: usize,
    pub gfl_db: [f64; 2],
    pub gfm_db: [f64; 2],
    pub citation: String,
}

/// Published reference values and tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceConfig {
    pub version: u32,
    pub tolerances: Tolerances,
    pub case_study: Vec<CaseScenario>,
    pub sibs: SibsReference,
}

impl AcceptanceConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Parse { what: "acceptance config".into(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
    }
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        Self::from_json_str(DEFAULT_ACCEPTANCE).expect("bundled acceptance config parses")
    }
}

// ---------------------------------------------------------------------------
// Case study

#[derive(Clone, Debug)]
pub struct Models {
    pub gfl: AdmittanceModel,
    pub gfm: AdmittanceModel,
    pub omega0: f64,
}

impl Models {
    pub fn build(p: &InverterParams) -> Result<Self> {
        Ok(Self {
            gfl: build_gfl_model(&p.filter, &p.gfl)?,
            gfm: build_gfm_model(&p.filter, &p.gfm)?,
            omega0: p.filter.omega0,
        })
    }

    pub fn system(&self, net: &NetworkSpec, assign: &Assignment) -> Result<SystemAssignment> {
        let b = grounded_laplacian(net)?;
        let kinds = assign.kinds(b.dim())?;
        SystemAssignment::new(b, kinds, Some(self.gfl.clone()), Some(self.gfm.clone()), self.omega0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub system: String,
    pub k: f64,
    pub assign: String,
    pub kappa_p_db: f64,
    pub freq_peak_hz: f64,
    pub published_db: Option<f64>,
    pub delta_db: Option<f64>,
    pub within_tolerance: Option<bool>,
    pub citation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityVerdict {
    pub scenario: String,
    pub k: f64,
    pub kappa_gamma1_db: f64,
    pub kappa_gamma2_db: f64,
    pub kappa_gamma3_db: f64,
    /// Mixed system beats the worse homogeneous one.
    pub holds: bool,
    pub ordering: [String; 2],
    pub ordering_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsystemCheck {
    pub scenario: String,
    pub det_max_rel_err: f64,
    pub remark: Remark1Report,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub pass: usize,
    pub inconclusive: usize,
    pub fail: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSuiteReport {
    pub trials: usize,
    pub seed: u64,
    pub lemma1: StatusCounts,
    pub lemma2: StatusCounts,
    pub min_margin1: f64,
    pub min_margin2: f64,
    #[serde(skip)]
    pub records: Vec<LemmaTrial>,
}

impl LemmaSuiteReport {
    pub fn all_pass(&self) -> bool {
        self.lemma1.pass == self.trials && self.lemma2.pass == self.trials
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub acceptance_version: u32,
    pub rows: Vec<ScenarioRow>,
    pub inequality: Vec<InequalityVerdict>,
    pub subsystems: Vec<SubsystemCheck>,
    pub lemmas: LemmaSuiteReport,
}

impl ComparisonReport {
    /// True when every mixing inequality, every ordering and the lemma suite pass.
    pub fn hard_pass(&self) -> bool {
        self.inequality.iter().all(|v| v.holds && v.ordering_holds) && self.lemmas.all_pass()
    }

    pub fn row(&self, scenario: &str, system: &str) -> Option<&ScenarioRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.system == system)
    }
}

pub struct CaseStudyOutput {
    pub report: ComparisonReport,
    /// Per scenario: `(scenario label, [(system name, sweep)])`.
    pub sweeps: Vec<(String, Vec<(String, SweepResult)>)>,
}

pub fn scenario_label(k: f64) -> String {
    format!("k{k}")
}

pub fn run_case_study(
    net: &NetworkSpec,
    params: &InverterParams,
    grid: &GridSpec,
    acceptance: &AcceptanceConfig,
    lemma_trials: usize,
    seed: u64,
) -> Result<CaseStudyOutput> {
    let models = Models::build(params)?;
    let tol = acceptance.tolerances.kappa_db;
    let mut rows = Vec::new();
    let mut inequality = Vec::new();
    let mut subsystems = Vec::new();
    let mut sweeps = Vec::new();

    for sc in &acceptance.case_study {
        let label = scenario_label(sc.k);
        let scoped = net.with_k(sc.k);
        let mut curves = Vec::new();
        let mut kappa = std::collections::BTreeMap::new();
        for s in &sc.systems {
            let assign: Assignment = s.assign.parse()?;
            let sys = models.system(&scoped, &assign).map_err(|e| e.context(format!("{label}/{}", s.name)))?;
            let r = sweep(&sys, grid).map_err(|e| e.context(format!("{label}/{}", s.name)))?;
            let delta = s.published_db.map(|p| r.kappa_p_db - p);
            rows.push(ScenarioRow {
                scenario: label.clone(),
                system: s.name.clone(),
                k: sc.k,
                assign: assign.label(),
                kappa_p_db: r.kappa_p_db,
                freq_peak_hz: r.freq_peak_hz(),
                published_db: s.published_db,
                delta_db: delta,
                within_tolerance: delta.map(|d| d.abs() <= tol),
                citation: s.citation.clone(),
            });
            kappa.insert(s.name.clone(), r.kappa_p_db);
            if matches!(assign, Assignment::Custom(_)) {
                let check = verify_det_factorization(&sys, grid)?;
                let remark = verify_remark1_equality(&sys, grid)?;
                subsystems.push(SubsystemCheck {
                    scenario: label.clone(),
                    det_max_rel_err: check.max_rel_err,
                    remark,
                });
            }
            curves.push((s.name.clone(), r));
        }
        let get = |name: &str| {
            kappa
                .get(name)
                .copied()
                .ok_or_else(|| Error::schema("case_study.systems", format!("missing system `{name}`")))
        };
        let (k1, k2, k3) = (get("gamma1")?, get("gamma2")?, get("gamma3")?);
        inequality.push(InequalityVerdict {
            scenario: label.clone(),
            k: sc.k,
            kappa_gamma1_db: k1,
            kappa_gamma2_db: k2,
            kappa_gamma3_db: k3,
            holds: k3 < k1.max(k2),
            ordering: sc.ordering.clone(),
            ordering_holds: get(&sc.ordering[0])? < get(&sc.ordering[1])?,
        });
        sweeps.push((label, curves));
    }

    Ok(CaseStudyOutput {
        report: ComparisonReport {
            acceptance_version: acceptance.version,
            rows,
            inequality,
            subsystems,
            lemmas: run_lemma_suite(lemma_trials, seed)?,
        },
        sweeps,
    })
}

// ---------------------------------------------------------------------------
// SIBS sweep over SCR

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SibsFigure {
    pub scr: Vec<f64>,
    pub gfl_db: Vec<f64>,
    pub gfm_db: Vec<f64>,
    /// `None` for a single-point run.
    pub gfl_decreasing: Option<bool>,
    pub gfm_increasing: Option<bool>,
}

pub fn scr_points(scr_min: f64, scr_max: f64, steps: usize) -> Result<Vec<f64>> {
    if !(scr_min > 0.0 && scr_min.is_finite() && scr_max.is_finite()) || scr_max < scr_min {
        return Err(Error::Precondition(format!("need 0 < scr_min <= scr_max, got {scr_min} and {scr_max}")));
    }
    if scr_min == scr_max {
        return Ok(vec![scr_min]);
    }
    if steps < 2 {
        return Err(Error::Precondition("an SCR range needs at least 2 steps".into()));
    }
    let last = (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| match i {
            0 => scr_min,
            i if i + 1 == steps => scr_max,
            i => scr_min + (scr_max - scr_min) * i as f64 / last,
        })
        .collect())
}

pub fn run_sibs_figure(
    params: &InverterParams,
    scr_min: f64,
    scr_max: f64,
    steps: usize,
    grid: &GridSpec,
) -> Result<SibsFigure> {
    let models = Models::build(params)?;
    let scr = scr_points(scr_min, scr_max, steps)?;
    let run = |model: &AdmittanceModel| -> Result<Vec<f64>> {
        scr.iter()
            .map(|&s| {
                let cfg = SibsConfig { scr: s, model: model.clone() };
                Ok(sibs_sweep(&cfg, grid, models.omega0)?.kappa_p_db)
            })
            .collect()
    };
    let gfl_db = run(&models.gfl)?;
    let gfm_db = run(&models.gfm)?;
    let verdict = |v: &[f64], up: bool| {
        (v.len() >= 2).then(|| v.windows(2).all(|w| if up { w[1] > w[0] } else { w[1] < w[0] }))
    };
    Ok(SibsFigure {
        gfl_decreasing: verdict(&gfl_db, false),
        gfm_increasing: verdict(&gfm_db, true),
        scr,
        gfl_db,
        gfm_db,
    })
}

pub fn sibs_csv(fig: &SibsFigure) -> String {
    let mut out = String::from("scr,kappa_p_db_gfl,kappa_p_db_gfm\n");
    for i in 0..fig.scr.len() {
        let _ = writeln!(out, "{},{},{}", fig.scr[i], fig.gfl_db[i], fig.gfm_db[i]);
    }
    out
}

// ---------------------------------------------------------------------------
// Lemma suite

pub fn run_lemma_suite(trials: usize, seed: u64) -> Result<LemmaSuiteReport> {
    let records = run_lemma_harness(trials, seed)?;
    let count = |pick: fn(&LemmaTrial) -> LemmaStatus| {
        let mut c = StatusCounts::default();
        for r in &records {
            match pick(r) {
                LemmaStatus::Holds => c.pass += 1,
                LemmaStatus::Violated => c.fail += 1,
                _ => c.inconclusive += 1,
            }
        }
        c
    };
    let min = |pick: fn(&LemmaTrial) -> f64| records.iter().map(pick).fold(f64::INFINITY, f64::min);
    Ok(LemmaSuiteReport {
        trials,
        seed,
        lemma1: count(|r| r.lemma1.status),
        lemma2: count(|r| r.lemma2.status),
        min_margin1: min(|r| r.lemma1.margin),
        min_margin2: min(|r| r.lemma2.margin),
        records,
    })
}

// ---------------------------------------------------------------------------
// Writers

/// CSV with one `sigma_max_db_<name>` column per sweep; all sweeps must share a grid.
pub fn sweep_csv(results: &[(String, &SweepResult)]) -> Result<String> {
    let first = results
        .first()
        .ok_or_else(|| Error::Precondition("no sweeps to write".into()))?;
    if let Some((name, _)) = results.iter().find(|(_, r)| r.omegas != first.1.omegas) {
        return Err(Error::Precondition(format!("sweep `{name}` uses a different frequency grid")));
    }
    let mut out = String::from("freq_hz");
    for (name, _) in results {
        let _ = write!(out, ",sigma_max_db_{name}");
    }
    out.push('\n');
    let db: Vec<Vec<f64>> = results.iter().map(|(_, r)| r.sigma_max_db()).collect();
    for (i, w) in first.1.omegas.iter().enumerate() {
        let _ = write!(out, "{}", w / (2.0 * std::f64::consts::PI));
        for col in &db {
            let _ = write!(out, ",{}", col[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

pub fn emit_sweep_csv(results: &[(String, &SweepResult)], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &sweep_csv(results)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub scenario: String,
    pub kappa_p_db: f64,
    pub freq_peak_hz: f64,
    pub holds_main_inequality: Option<bool>,
}

pub fn summary_entries(report: &ComparisonReport) -> Vec<SummaryEntry> {
    report
        .rows
        .iter()
        .map(|r| SummaryEntry {
            scenario: format!("{}_{}", r.scenario, r.system),
            kappa_p_db: r.kappa_p_db,
            freq_peak_hz: r.freq_peak_hz,
            holds_main_inequality: report.inequality.iter().find(|v| v.scenario == r.scenario).map(|v| v.holds),
        })
        .collect()
}

fn db1(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.1}")
    } else {
        "inf".into()
    }
}

pub fn report_markdown(report: &ComparisonReport) -> String {
    let mut md = String::from("# Sensitivity peak comparison\n\n");
    md.push_str("| scenario | system | assignment | kappa_p (dB) | peak (Hz) | reference (dB) | delta (dB) | within tolerance |\n");
    md.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in &report.rows {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {:.2} | {} | {} | {} |",
            r.scenario,
            r.system,
            r.assign,
            db1(r.kappa_p_db),
            r.freq_peak_hz,
            r.published_db.map(db1).unwrap_or_else(|| "-".into()),
            r.delta_db.map(db1).unwrap_or_else(|| "-".into()),
            r.within_tolerance.map(|b| if b { "yes" } else { "no" }).unwrap_or("-"),
        );
    }
    md.push_str("\nReference values: ");
    let cites: Vec<&str> = report.rows.iter().map(|r| r.citation.as_str()).collect();
    md.push_str(&cites.join("; "));
    md.push_str(".\n\n## Mixed versus homogeneous\n\n");
    for v in &report.inequality {
        let _ = writeln!(
            md,
            "- {}: gamma3 {} dB vs max(gamma1 {}, gamma2 {}) dB: {}; {} < {}: {}",
            v.scenario,
            db1(v.kappa_gamma3_db),
            db1(v.kappa_gamma1_db),
            db1(v.kappa_gamma2_db),
            if v.holds { "holds" } else { "FAILS" },
            v.ordering[0],
            v.ordering[1],
            if v.ordering_holds { "holds" } else { "FAILS" },
        );
    }
    md.push_str("\n## Subsystem split\n\n");
    for s in &report.subsystems {
        let _ = writeln!(
            md,
            "- {}: determinant split max rel err {:.2e}; sigma_min deviation {:.3e} (rel {:.3e}); kappa via subsystems {} dB vs direct {} dB (gap {:.2} dB)",
            s.scenario,
            s.det_max_rel_err,
            s.remark.max_deviation,
            s.remark.max_rel_deviation,
            db1(s.remark.kappa_subsystems_db),
            db1(s.remark.kappa_direct_db),
            s.remark.gap_db,
        );
    }
    let l = &report.lemmas;
    let _ = writeln!(
        md,
        "\n## Lemma suite\n\n- {} trials, seed {}: lemma 1 {}/{}/{} (pass/inconclusive/fail, min margin {:.3e}); lemma 2 {}/{}/{} (min margin {:.3e})",
        l.trials,
        l.seed,
        l.lemma1.pass,
        l.lemma1.inconclusive,
        l.lemma1.fail,
        l.min_margin1,
        l.lemma2.pass,
        l.lemma2.inconclusive,
        l.lemma2.fail,
        l.min_margin2,
    );
    md
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|source| Error::Parse { what: "report".into(), source })?;
    s.push('\n');
    Ok(s)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })
}

pub fn write_case_study(out: &Path, cs: &CaseStudyOutput) -> Result<()> {
    ensure_dir(out)?;
    for (label, curves) in &cs.sweeps {
        let cols: Vec<(String, &SweepResult)> = curves.iter().map(|(n, r)| (n.clone(), r)).collect();
        emit_sweep_csv(&cols, out.join(format!("sweep_{label}.csv")))?;
    }
    write_file(&out.join("summary.json"), &to_json(&summary_entries(&cs.report))?)?;
    write_file(&out.join("comparison.json"), &to_json(&cs.report)?)?;
    write_file(&out.join("report.md"), &report_markdown(&cs.report))
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(name = "drp", version, about = "Sensitivity-peak analysis of multi-inverter networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduce a network to its grounded Laplacian and print eigenvalues and gSCR.
    Reduce(ReduceArgs),
    /// Sweep sigma_max(S) for one assignment.
    Sweep(SweepArgs),
    /// Run the three-inverter case study in both scenarios.
    Casestudy(CaseArgs),
    /// Single-inverter peaks over a range of SCR values.
    Sibs(SibsArgs),
    /// Randomized grid-strength lemma checks.
    Lemmas(LemmaArgs),
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.1)]
    pub fmin: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub fmax: f64,
    #[arg(long, default_value_t = 2000)]
    pub points: usize,
}

impl GridArgs {
    fn spec(&self) -> GridSpec {
        GridSpec { f_min_hz: self.fmin, f_max_hz: self.fmax, points: self.points }
    }
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long, default_value = "fixtures/three_inverter.json")]
    pub network: PathBuf,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value = "fixtures/three_inverter.json")]
    pub network: PathBuf,
    #[arg(long, default_value = "fixtures/table_a1.json")]
    pub params: PathBuf,
    #[arg(long, default_value = "gfl")]
    pub assign: String,
    #[arg(long)]
    pub k: Option<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CaseArgs {
    #[arg(long, default_value = "fixtures/three_inverter.json")]
    pub network: PathBuf,
    #[arg(long, default_value = "fixtures/table_a1.json")]
    pub params: PathBuf,
    /// Versioned reference values and tolerances; the bundled copy is used when absent.
    #[arg(long)]
    pub acceptance: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SibsArgs {
    #[arg(long, default_value = "fixtures/table_a1.json")]
    pub params: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    pub scr_min: f64,
    #[arg(long, default_value_t = 7.0)]
    pub scr_max: f64,
    #[arg(long, default_value_t = 9)]
    pub steps: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LemmaArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ReduceOutput {
    k: f64,
    node_order: Vec<u32>,
    b: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    gscr: f64,
}

/// Runs one command; the returned value is the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Reduce(a) => {
            let mut net = load_network(&a.network)?;
            if let Some(k) = a.k {
                net = net.with_k(k);
                net.validate()?;
            }
            let b = grounded_laplacian(&net)?;
            let eig = eig_sym(&b)?;
            let m = b.matrix();
            let out = ReduceOutput {
                k: net.k,
                node_order: b.node_order().to_vec(),
                b: (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect(),
                gscr: eig.smallest(),
                eigenvalues: eig.lambdas,
            };
            let text = to_json(&out)?;
            print!("{text}");
            if let Some(dir) = a.out {
                ensure_dir(&dir)?;
                write_file(&dir.join("reduce.json"), &text)?;
            }
            Ok(0)
        }
        Command::Sweep(a) => {
            let cfg = ScenarioConfig {
                network: a.network,
                params: a.params,
                assign: a.assign.parse()?,
                k: a.k,
                grid: a.grid.spec(),
                seed: 0,
            };
            let (net, params) = cfg.load()?;
            let sys = Models::build(&params)?.system(&net, &cfg.assign)?;
            let r = sweep(&sys, &cfg.grid)?;
            let name = format!("{}_{}", scenario_label(net.k), cfg.assign.label());
            ensure_dir(&a.out)?;
            emit_sweep_csv(&[(name.clone(), &r)], a.out.join(format!("sweep_{name}.csv")))?;
            let entry = SummaryEntry {
                scenario: name,
                kappa_p_db: r.kappa_p_db,
                freq_peak_hz: r.freq_peak_hz(),
                holds_main_inequality: None,
            };
            write_file(&a.out.join("summary.json"), &to_json(&vec![&entry])?)?;
            println!("{}: kappa_p = {} dB at {:.3} Hz", entry.scenario, db1(entry.kappa_p_db), entry.freq_peak_hz);
            Ok(0)
        }
        Command::Casestudy(a) => {
            let acceptance = match &a.acceptance {
                Some(p) => AcceptanceConfig::load(p)?,
                None => AcceptanceConfig::default(),
            };
            let net = load_network(&a.network)?;
            let params = load_params(&a.params)?;
            let cs = run_case_study(&net, &params, &a.grid.spec(), &acceptance, a.trials, a.seed)?;
            write_case_study(&a.out, &cs)?;
            print!("{}", report_markdown(&cs.report));
            Ok(if cs.report.hard_pass() { 0 } else { 1 })
        }
        Command::Sibs(a) => {
            let params = load_params(&a.params)?;
            let fig = run_sibs_figure(&params, a.scr_min, a.scr_max, a.steps, &a.grid.spec())?;
            ensure_dir(&a.out)?;
            write_file(&a.out.join("sibs.csv"), &sibs_csv(&fig))?;
            print!("{}", sibs_csv(&fig));
            let ok = fig.gfl_decreasing.unwrap_or(true) && fig.gfm_increasing.unwrap_or(true);
            println!(
                "gfl decreasing: {:?}, gfm increasing: {:?}",
                fig.gfl_decreasing, fig.gfm_increasing
            );
            Ok(if ok { 0 } else { 1 })
        }
        Command::Lemmas(a) => {
            let rep = run_lemma_suite(a.trials, a.seed)?;
            let text = to_json(&rep)?;
            print!("{text}");
            if let Some(dir) = a.out {
                ensure_dir(&dir)?;
                write_file(&dir.join("lemmas.json"), &text)?;
                write_file(&dir.join("lemma_trials.json"), &to_json(&rep.records)?)?;
            }
            Ok(if rep.all_pass() { 0 } else { 1 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_parsing() {
        assert_eq!("gfl".parse::<Assignment>().unwrap(), Assignment::AllGfl);
        assert_eq!("GFM".parse::<Assignment>().unwrap(), Assignment::AllGfm);
        let c: Assignment = "gfm,gfl,gfm".parse().unwrap();
        assert_eq!(c.kinds(3).unwrap(), vec![InverterKind::Gfm, InverterKind::Gfl, InverterKind::Gfm]);
        assert_eq!(c.label(), "gfm-gfl-gfm");
        assert!(c.kinds(2).is_err());
        assert!("gfx".parse::<Assignment>().is_err());
    }

    #[test]
    fn scr_points_cover_endpoints() {
        let p = scr_points(3.0, 7.0, 9).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!((p[0], p[8]), (3.0, 7.0));
        assert!((p[1] - 3.5).abs() < 1e-15);
        assert_eq!(scr_points(4.0, 4.0, 9).unwrap(), vec![4.0]);
        assert!(scr_points(0.0, 4.0, 9).is_err());
        assert!(scr_points(5.0, 4.0, 9).is_err());
        assert!(scr_points(3.0, 4.0, 1).is_err());
    }

    #[test]
    fn zero_trial_suite_is_an_error() {
        assert!(matches!(run_lemma_suite(0, 7), Err(Error::Precondition(_))));
    }

    #[test]
    fn mismatched_grids_rejected() {
        let mk = |points| SweepResult {
            omegas: GridSpec { f_min_hz: 1.0, f_max_hz: 2.0, points }.omegas().unwrap(),
            sigma_max: vec![1.0; points],
            kappa_p_db: 0.0,
            omega_peak: 1.0,
            marginal: vec![],
        };
        let (a, b) = (mk(3), mk(4));
        assert!(sweep_csv(&[("a".into(), &a), ("b".into(), &b)]).is_err());
        let csv = sweep_csv(&[("a".into(), &a)]).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "freq_hz,sigma_max_db_a");
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn bundled_acceptance_config_parses() {
        let a = AcceptanceConfig::default();
        assert_eq!(a.version, 1);
        assert_eq!(a.case_study.len(), 2);
        assert!(a.case_study.iter().all(|s| s.systems.iter().all(|p| !p.citation.is_empty())));
    }
}
