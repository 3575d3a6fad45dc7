//! Linearized dq-frame admittance models of GFL and GFM inverters.
//!
//! Everything is per-unit and expressed in the global frame rotating at
//! `omega0`. A model maps a terminal-voltage deviation to the deviation of the
//! current drawn from the network by the inverter, so a plain inductor to ground
//! has admittance `F(s)/l`. Both inverter types sit behind the same LCL filter:
//!
//! ```text
//! di_f/dt = omega0/l_f * (v_inv - v_c - l_f*J*i_f)
//! dv_c/dt = omega0/c_f * (i_f - i_g - c_f*J*v_c)
//! di_g/dt = omega0/l_g * (v_c - u_t - l_g*J*i_g)
//! ```
//!
//! with `J = [[0, -1], [1, 0]]`. The controllers run in a frame at angle
//! `theta0 + delta`, where `delta` is the PLL (GFL) or swing-equation (GFM)
//! angle deviation.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::path::Path;

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::BaseValues;

pub type CMatrix2 = Matrix2<Complex64>;

/// Default frequency for the B_eq projection, 25 Hz.
pub const DEFAULT_BEQ_OMEGA: f64 = 2.0 * PI * 25.0;

const POLE_REL_TOL: f64 = 1e-6;

fn jmat() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

// ---------------------------------------------------------------------------
// Parameters

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub l_f: f64,
    pub c_f: f64,
    pub l_g: f64,
    /// R/L ratio of the grid impedance. Stored for completeness; the models
    /// and the reactance-only Laplacian do not use it.
    pub tau: f64,
    pub omega0: f64,
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("filter.l_f", self.l_f),
            ("filter.c_f", self.c_f),
            ("filter.l_g", self.l_g),
            ("filter.omega0", self.omega0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::schema(field, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub p0: f64,
    pub q0: f64,
    pub u0: f64,
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self { p0: 1.0, q0: 0.0, u0: 1.0 }
    }
}

impl OperatingPoint {
    fn validate(&self) -> Result<()> {
        if !(self.u0.is_finite() && self.u0 > 0.0) {
            return Err(Error::schema("operating_point.u0", "must be positive"));
        }
        if !(self.p0.is_finite() && self.q0.is_finite()) {
            return Err(Error::schema("operating_point", "p0 and q0 must be finite"));
        }
        Ok(())
    }
}

/// Where a controller samples its voltage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoltageSense {
    Capacitor,
    Terminal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GflParams {
    pub cc_kp: f64,
    pub cc_ki: f64,
    pub k_vf: f64,
    pub t_vf_s: f64,
    pub pq_kp: f64,
    pub pq_ki: f64,
    pub pll_kp: f64,
    pub pll_ki: f64,
    pub op: OperatingPoint,
    pub feedforward: VoltageSense,
    /// Adds the `omega0*l_f*J*i_f` cross-coupling cancellation to the current loop.
    pub decoupling: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GfmParams {
    pub cc_kp: f64,
    pub cc_ki: f64,
    pub k_vf: f64,
    pub t_vf_s: f64,
    pub vc_kp: f64,
    pub vc_ki: f64,
    /// Virtual inertia. `f64::INFINITY` freezes the angle.
    pub j_vsg: f64,
    pub d_vsg: f64,
    pub op: OperatingPoint,
    pub voltage_sense: VoltageSense,
    pub feedforward: VoltageSense,
    pub decoupling: bool,
}

fn check_gains(prefix: &str, gains: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in gains {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::schema(
                format!("{prefix}.{name}"),
                format!("must be finite and >= 0, got {v}"),
            ));
        }
    }
    Ok(())
}

fn check_time_constant(prefix: &str, t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::schema(format!("{prefix}.t_vf_s"), "must be positive"));
    }
    Ok(())
}

impl GflParams {
    pub fn validate(&self) -> Result<()> {
        check_gains(
            "gfl",
            &[
                ("cc_kp", self.cc_kp),
                ("cc_ki", self.cc_ki),
                ("k_vf", self.k_vf),
                ("pq_kp", self.pq_kp),
                ("pq_ki", self.pq_ki),
                ("pll_kp", self.pll_kp),
                ("pll_ki", self.pll_ki),
            ],
        )?;
        check_time_constant("gfl", self.t_vf_s)?;
        self.op.validate()
    }

    /// Zero gains, no feedforward and no decoupling: the passive LCL filter.
    pub fn disabled(op: OperatingPoint) -> Self {
        Self {
            cc_kp: 0.0,
            cc_ki: 0.0,
            k_vf: 0.0,
            t_vf_s: 0.004,
            pq_kp: 0.0,
            pq_ki: 0.0,
            pll_kp: 0.0,
            pll_ki: 0.0,
            op,
            feedforward: VoltageSense::Capacitor,
            decoupling: false,
        }
    }
}

impl GfmParams {
    pub fn validate(&self) -> Result<()> {
        check_gains(
            "gfm",
            &[
                ("cc_kp", self.cc_kp),
                ("cc_ki", self.cc_ki),
                ("k_vf", self.k_vf),
                ("vc_kp", self.vc_kp),
                ("vc_ki", self.vc_ki),
            ],
        )?;
        check_time_constant("gfm", self.t_vf_s)?;
        if !(self.j_vsg > 0.0) {
            return Err(Error::schema("gfm.j_vsg", "must be positive"));
        }
        if !(self.d_vsg.is_finite() && self.d_vsg > 0.0) {
            return Err(Error::schema("gfm.d_vsg", "must be positive and finite"));
        }
        self.op.validate()
    }

    /// Zero gains and infinite inertia: the passive LCL filter.
    pub fn disabled(op: OperatingPoint) -> Self {
        Self {
            cc_kp: 0.0,
            cc_ki: 0.0,
            k_vf: 0.0,
            t_vf_s: 0.004,
            vc_kp: 0.0,
            vc_ki: 0.0,
            j_vsg: f64::INFINITY,
            d_vsg: 1.0,
            op,
            voltage_sense: VoltageSense::Terminal,
            feedforward: VoltageSense::Capacitor,
            decoupling: false,
        }
    }
}

// ---------------------------------------------------------------------------
// Parameter file

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
struct PiPair {
    kp: f64,
    ki: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
struct FeedforwardSection {
    k_vf: f64,
    t_vf_s: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
struct FilterSection {
    l_f: f64,
    c_f: f64,
    l_g: f64,
    #[serde(default)]
    tau: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
struct GflSection {
    current_pi: PiPair,
    voltage_feedforward: FeedforwardSection,
    power_pi: PiPair,
    pll_pi: PiPair,
    #[serde(default = "capacitor")]
    feedforward_sense: VoltageSense,
    #[serde(default = "yes")]
    decoupling: bool,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
struct VsgSection {
    j: f64,
    d: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
struct GfmSection {
    current_pi: PiPair,
    voltage_feedforward: FeedforwardSection,
    voltage_pi: PiPair,
    vsg: VsgSection,
    #[serde(default = "terminal")]
    voltage_sense: VoltageSense,
    #[serde(default = "capacitor")]
    feedforward_sense: VoltageSense,
    #[serde(default = "yes")]
    decoupling: bool,
}

fn capacitor() -> VoltageSense {
    VoltageSense::Capacitor
}

fn terminal() -> VoltageSense {
    VoltageSense::Terminal
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, Serialize)]
struct ParamsFile {
    #[serde(default)]
    base: BaseValues,
    filter: FilterSection,
    gfl: GflSection,
    gfm: GfmSection,
    #[serde(default)]
    operating_point: OperatingPoint,
}

/// Everything needed to build both inverter models.
#[derive(Clone, Debug, PartialEq)]
pub struct InverterParams {
    pub filter: FilterParams,
    pub gfl: GflParams,
    pub gfm: GfmParams,
}

impl InverterParams {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: ParamsFile = serde_json::from_str(text).map_err(|source| Error::Parse {
            what: "inverter parameters".into(),
            source,
        })?;
        let op = raw.operating_point;
        let out = Self {
            filter: FilterParams {
                l_f: raw.filter.l_f,
                c_f: raw.filter.c_f,
                l_g: raw.filter.l_g,
                tau: raw.filter.tau,
                omega0: 2.0 * PI * raw.base.f_base_hz,
            },
            gfl: GflParams {
                cc_kp: raw.gfl.current_pi.kp,
                cc_ki: raw.gfl.current_pi.ki,
                k_vf: raw.gfl.voltage_feedforward.k_vf,
                t_vf_s: raw.gfl.voltage_feedforward.t_vf_s,
                pq_kp: raw.gfl.power_pi.kp,
                pq_ki: raw.gfl.power_pi.ki,
                pll_kp: raw.gfl.pll_pi.kp,
                pll_ki: raw.gfl.pll_pi.ki,
                op,
                feedforward: raw.gfl.feedforward_sense,
                decoupling: raw.gfl.decoupling,
            },
            gfm: GfmParams {
                cc_kp: raw.gfm.current_pi.kp,
                cc_ki: raw.gfm.current_pi.ki,
                k_vf: raw.gfm.voltage_feedforward.k_vf,
                t_vf_s: raw.gfm.voltage_feedforward.t_vf_s,
                vc_kp: raw.gfm.voltage_pi.kp,
                vc_ki: raw.gfm.voltage_pi.ki,
                j_vsg: raw.gfm.vsg.j,
                d_vsg: raw.gfm.vsg.d,
                op,
                voltage_sense: raw.gfm.voltage_sense,
                feedforward: raw.gfm.feedforward_sense,
                decoupling: raw.gfm.decoupling,
            },
        };
        out.filter.validate()?;
        out.gfl.validate()?;
        out.gfm.validate()?;
        Ok(out)
    }

    pub fn with_operating_point(mut self, op: OperatingPoint) -> Self {
        self.gfl.op = op;
        self.gfm.op = op;
        self
    }
}

pub fn load_params(path: impl AsRef<Path>) -> Result<InverterParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    InverterParams::from_json_str(&text).map_err(|e| e.context(format!("in {}", path.display())))
}

// ---------------------------------------------------------------------------
// Network factor

/// `F(jw) = [s, w0; -w0, s] / (s^2/w0 + w0)`, the dq admittance of a 1 pu inductor.
pub fn eval_network_factor(omega: f64, omega0: f64) -> Result<CMatrix2> {
    if (omega - omega0).abs() < POLE_REL_TOL * omega0 || (omega + omega0).abs() < POLE_REL_TOL * omega0
    {
        return Err(Error::NetworkFactorPole { omega });
    }
    let s = Complex64::new(0.0, omega);
    let w0 = Complex64::from(omega0);
    let den = s * s / w0 + w0;
    Ok(Matrix2::new(s, w0, -w0, s) / den)
}

/// `F^{-1}(jw) = [s, -w0; w0, s] / w0`; entire in `w`.
pub fn eval_network_factor_inverse(omega: f64, omega0: f64) -> CMatrix2 {
    let s = Complex64::new(0.0, omega);
    let w0 = Complex64::from(omega0);
    Matrix2::new(s, -w0, w0, s) / w0
}

// ---------------------------------------------------------------------------
// State-space models

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gfl,
    Gfm,
    PassiveBranch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceModel {
    pub a: DMatrix<f64>,
    pub b_in: DMatrix<f64>,
    pub c_out: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub kind: ModelKind,
}

impl AdmittanceModel {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn eval(&self, omega: f64) -> Result<CMatrix2> {
        eval_admittance(self, omega)
    }
}

/// `Y(jw) = C (jwI - A)^{-1} B + D`.
pub fn eval_admittance(m: &AdmittanceModel, omega: f64) -> Result<CMatrix2> {
    let n = m.order();
    let jw = Complex64::new(0.0, omega);
    let lhs = DMatrix::from_fn(n, n, |r, c| {
        let diag = if r == c { jw } else { Complex64::from(0.0) };
        diag - m.a[(r, c)]
    });
    let rhs = m.b_in.map(Complex64::from);
    let x = lhs.lu().solve(&rhs).ok_or(Error::Resonance { omega })?;
    let y = m.c_out.map(Complex64::from) * x + m.d.map(Complex64::from);
    if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Resonance { omega });
    }
    Ok(Matrix2::new(y[(0, 0)], y[(0, 1)], y[(1, 0)], y[(1, 1)]))
}

/// An inductor `l` from the terminal to ground; its admittance is `F(s)/l`.
pub fn passive_inductor(l: f64, omega0: f64) -> Result<AdmittanceModel> {
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::Model(format!("inductance must be positive, got {l}")));
    }
    let a = -omega0 * to_dm(&jmat());
    Ok(AdmittanceModel {
        a,
        b_in: DMatrix::identity(2, 2) * (omega0 / l),
        c_out: DMatrix::identity(2, 2),
        d: DMatrix::zeros(2, 2),
        kind: ModelKind::PassiveBranch,
    })
}

fn to_dm(m: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(2, 2, m.as_slice())
}

fn row(v: &Vector2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 2, &[v[0], v[1]])
}

/// Linear combination of states and inputs with `rows` output rows.
#[derive(Clone, Debug)]
struct Lin {
    x: DMatrix<f64>,
    u: DMatrix<f64>,
}

impl Lin {
    fn zero(rows: usize, nx: usize) -> Self {
        Self { x: DMatrix::zeros(rows, nx), u: DMatrix::zeros(rows, 2) }
    }

    fn state(nx: usize, at: usize, rows: usize) -> Self {
        let mut out = Self::zero(rows, nx);
        for r in 0..rows {
            out.x[(r, at + r)] = 1.0;
        }
        out
    }

    fn input(nx: usize) -> Self {
        let mut out = Self::zero(2, nx);
        out.u = DMatrix::identity(2, 2);
        out
    }

    fn lmul(&self, m: &DMatrix<f64>) -> Self {
        Self { x: m * &self.x, u: m * &self.u }
    }

    fn lmul2(&self, m: &Matrix2<f64>) -> Self {
        self.lmul(&to_dm(m))
    }

    fn dot(&self, v: &Vector2<f64>) -> Self {
        self.lmul(&row(v))
    }

    fn pick(&self, r: usize) -> Self {
        Self { x: self.x.rows(r, 1).into_owned(), u: self.u.rows(r, 1).into_owned() }
    }

    /// Column vector times a scalar expression.
    fn outer(col: &Vector2<f64>, s: &Lin) -> Self {
        let c = DMatrix::from_column_slice(2, 1, col.as_slice());
        s.lmul(&c)
    }

    fn stack(top: &Lin, bottom: &Lin) -> Self {
        let nx = top.x.ncols();
        let rows = top.x.nrows() + bottom.x.nrows();
        let mut out = Self::zero(rows, nx);
        out.x.rows_mut(0, top.x.nrows()).copy_from(&top.x);
        out.x.rows_mut(top.x.nrows(), bottom.x.nrows()).copy_from(&bottom.x);
        out.u.rows_mut(0, top.u.nrows()).copy_from(&top.u);
        out.u.rows_mut(top.u.nrows(), bottom.u.nrows()).copy_from(&bottom.u);
        out
    }
}

impl Add for Lin {
    type Output = Lin;
    fn add(self, o: Lin) -> Lin {
        Lin { x: self.x + o.x, u: self.u + o.u }
    }
}

impl Sub for Lin {
    type Output = Lin;
    fn sub(self, o: Lin) -> Lin {
        Lin { x: self.x - o.x, u: self.u - o.u }
    }
}

impl Mul<f64> for Lin {
    type Output = Lin;
    fn mul(self, k: f64) -> Lin {
        Lin { x: self.x * k, u: self.u * k }
    }
}

struct Assembly {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl Assembly {
    fn new(nx: usize) -> Self {
        Self { a: DMatrix::zeros(nx, nx), b: DMatrix::zeros(nx, 2) }
    }

    fn set(&mut self, at: usize, e: &Lin) {
        let rows = e.x.nrows();
        self.a.rows_mut(at, rows).copy_from(&e.x);
        self.b.rows_mut(at, rows).copy_from(&e.u);
    }

    fn finish(self, kind: ModelKind, ig_at: usize) -> AdmittanceModel {
        let nx = self.a.nrows();
        let mut c = DMatrix::zeros(2, nx);
        c[(0, ig_at)] = -1.0;
        c[(1, ig_at + 1)] = -1.0;
        AdmittanceModel { a: self.a, b_in: self.b, c_out: c, d: DMatrix::zeros(2, 2), kind }
    }
}

/// Steady-state filter quantities in the global frame.
#[derive(Clone, Copy, Debug)]
pub struct SteadyState {
    pub u_t: Vector2<f64>,
    pub i_g: Vector2<f64>,
    pub v_c: Vector2<f64>,
    pub i_f: Vector2<f64>,
    pub v_inv: Vector2<f64>,
}

impl SteadyState {
    /// Terminal voltage on the d axis, injecting `p0 + j q0` into the network.
    pub fn new(f: &FilterParams, op: &OperatingPoint) -> Self {
        let j = jmat();
        let u_t = Vector2::new(op.u0, 0.0);
        let i_g = Vector2::new(op.p0, -op.q0) / op.u0;
        let v_c = u_t + j * i_g * f.l_g;
        let i_f = i_g + j * v_c * f.c_f;
        let v_inv = v_c + j * i_f * f.l_f;
        Self { u_t, i_g, v_c, i_f, v_inv }
    }

    fn voltage(&self, sense: VoltageSense) -> Vector2<f64> {
        match sense {
            VoltageSense::Capacitor => self.v_c,
            VoltageSense::Terminal => self.u_t,
        }
    }
}

const IF: usize = 0;
const VC: usize = 2;
const IG: usize = 4;

/// Shared filter plus controller-frame plumbing.
struct Frame<'a> {
    nx: usize,
    f: &'a FilterParams,
    ss: SteadyState,
    r0: Matrix2<f64>,
    delta: Lin,
}

impl Frame<'_> {
    /// Controller-frame deviation of a global vector signal with steady value `x0`.
    fn to_ctrl(&self, v: Lin, x0: &Vector2<f64>) -> Lin {
        let x0c = self.r0.transpose() * x0;
        v.lmul2(&self.r0.transpose()) - Lin::outer(&(jmat() * x0c), &self.delta)
    }

    fn ctrl_state(&self, at: usize, x0: &Vector2<f64>) -> Lin {
        self.to_ctrl(Lin::state(self.nx, at, 2), x0)
    }

    fn ctrl_input(&self) -> Lin {
        self.to_ctrl(Lin::input(self.nx), &self.ss.u_t)
    }

    fn ctrl_voltage(&self, sense: VoltageSense) -> Lin {
        match sense {
            VoltageSense::Capacitor => self.ctrl_state(VC, &self.ss.v_c),
            VoltageSense::Terminal => self.ctrl_input(),
        }
    }

    /// Global-frame inverter voltage from the controller output deviation.
    fn to_global(&self, v_ctrl: Lin) -> Lin {
        let v_ctrl0 = self.r0.transpose() * self.ss.v_inv;
        (v_ctrl + Lin::outer(&(jmat() * v_ctrl0), &self.delta)).lmul2(&self.r0)
    }

    /// Terminal active power deviation.
    fn power(&self) -> Lin {
        self.ctrl_input().dot(&(self.r0.transpose() * self.ss.i_g))
            + self.ctrl_state(IG, &self.ss.i_g).dot(&(self.r0.transpose() * self.ss.u_t))
    }

    /// Terminal reactive power deviation, `Q = u^T J i`.
    fn reactive_power(&self) -> Lin {
        let j = jmat();
        let u0c = self.r0.transpose() * self.ss.u_t;
        let i0c = self.r0.transpose() * self.ss.i_g;
        self.ctrl_input().dot(&(j * i0c)) + self.ctrl_state(IG, &self.ss.i_g).dot(&(j.transpose() * u0c))
    }

    fn filter_rows(&self, asm: &mut Assembly, v_inv: Lin) {
        let (f, j, nx) = (self.f, jmat(), self.nx);
        let i_f = Lin::state(nx, IF, 2);
        let v_c = Lin::state(nx, VC, 2);
        let i_g = Lin::state(nx, IG, 2);
        let di_f = (v_inv - v_c.clone() - i_f.lmul2(&(j * f.l_f))) * (f.omega0 / f.l_f);
        let dv_c = (i_f - i_g.clone() - v_c.lmul2(&(j * f.c_f))) * (f.omega0 / f.c_f);
        let di_g = (v_c - Lin::input(nx) - i_g.lmul2(&(j * f.l_g))) * (f.omega0 / f.l_g);
        asm.set(IF, &di_f);
        asm.set(VC, &dv_c);
        asm.set(IG, &di_g);
    }

    /// Current PI on the inverter-side current with optional decoupling and feedforward.
    fn current_loop(&self, i_ref: Lin, xi_at: usize, vff_at: usize, p: CurrentLoop) -> (Lin, Lin) {
        let i_fc = self.ctrl_state(IF, &self.ss.i_f);
        let err = i_ref - i_fc.clone();
        let mut v_ctrl = err.clone() * p.kp
            + Lin::state(self.nx, xi_at, 2) * p.ki
            + Lin::state(self.nx, vff_at, 2);
        if p.decoupling {
            v_ctrl = v_ctrl + i_fc.lmul2(&(jmat() * self.f.l_f));
        }
        (err, v_ctrl)
    }

    fn feedforward_row(&self, vff_at: usize, sense: VoltageSense, k_vf: f64, t_vf: f64) -> Lin {
        (self.ctrl_voltage(sense) * k_vf - Lin::state(self.nx, vff_at, 2)) * (1.0 / t_vf)
    }
}

#[derive(Clone, Copy)]
struct CurrentLoop {
    kp: f64,
    ki: f64,
    decoupling: bool,
}

/// LCL filter driven by zero inverter voltage.
pub fn build_passive_lcl(f: &FilterParams) -> Result<AdmittanceModel> {
    f.validate()?;
    let nx = 6;
    let frame = Frame {
        nx,
        f,
        ss: SteadyState::new(f, &OperatingPoint::default()),
        r0: Matrix2::identity(),
        delta: Lin::zero(1, nx),
    };
    let mut asm = Assembly::new(nx);
    frame.filter_rows(&mut asm, Lin::zero(2, nx));
    Ok(asm.finish(ModelKind::PassiveBranch, IG))
}

/// GFL inverter: SRF-PLL on the terminal voltage, P/Q PI loops producing the
/// current reference, current PI with decoupling and first-order voltage
/// feedforward.
pub fn build_gfl_model(f: &FilterParams, g: &GflParams) -> Result<AdmittanceModel> {
    f.validate()?;
    g.validate()?;
    const XCC: usize = 6;
    const VFF: usize = 8;
    const XPQ: usize = 10;
    const XPLL: usize = 12;
    const DEL: usize = 13;
    let nx = 14;

    let ss = SteadyState::new(f, &g.op);
    // The PLL aligns the controller d axis with the terminal voltage.
    let theta0 = ss.u_t[1].atan2(ss.u_t[0]);
    let frame = Frame { nx, f, ss, r0: rot(theta0), delta: Lin::state(nx, DEL, 1) };
    let mut asm = Assembly::new(nx);

    let u_q = frame.ctrl_input().pick(1);
    asm.set(XPLL, &u_q);
    asm.set(DEL, &(u_q * g.pll_kp + Lin::state(nx, XPLL, 1) * g.pll_ki));

    let p_err = frame.power() * -1.0;
    let q_err = frame.reactive_power() * -1.0;
    asm.set(XPQ, &Lin::stack(&p_err, &q_err));
    let xi_p = Lin::state(nx, XPQ, 1);
    let xi_q = Lin::state(nx, XPQ + 1, 1);
    let i_ref = Lin::stack(
        &(p_err * g.pq_kp + xi_p * g.pq_ki),
        &((q_err * g.pq_kp + xi_q * g.pq_ki) * -1.0),
    );

    let cl = CurrentLoop { kp: g.cc_kp, ki: g.cc_ki, decoupling: g.decoupling };
    let (err, v_ctrl) = frame.current_loop(i_ref, XCC, VFF, cl);
    asm.set(XCC, &err);
    asm.set(VFF, &frame.feedforward_row(VFF, g.feedforward, g.k_vf, g.t_vf_s));
    let v_inv = frame.to_global(v_ctrl);
    frame.filter_rows(&mut asm, v_inv);
    Ok(asm.finish(ModelKind::Gfl, IG))
}

/// GFM inverter: VSG swing equation setting the angle, voltage PI producing the
/// current reference, then the same current loop and feedforward as the GFL.
pub fn build_gfm_model(f: &FilterParams, g: &GfmParams) -> Result<AdmittanceModel> {
    f.validate()?;
    g.validate()?;
    const DW: usize = 6;
    const DEL: usize = 7;
    const XV: usize = 8;
    const XCC: usize = 10;
    const VFF: usize = 12;
    let nx = 14;

    let ss = SteadyState::new(f, &g.op);
    // The regulated voltage sits on the controller d axis at its steady magnitude.
    let v_reg0 = ss.voltage(g.voltage_sense);
    let theta0 = v_reg0[1].atan2(v_reg0[0]);
    let frame = Frame { nx, f, ss, r0: rot(theta0), delta: Lin::state(nx, DEL, 1) };
    let mut asm = Assembly::new(nx);

    let dw = Lin::state(nx, DW, 1);
    let swing = (frame.power() * -1.0 - dw.clone() * g.d_vsg) * (1.0 / g.j_vsg);
    asm.set(DW, &swing);
    asm.set(DEL, &(dw * f.omega0));

    let e_v = frame.ctrl_voltage(g.voltage_sense) * -1.0;
    asm.set(XV, &e_v);
    let i_ref = e_v * g.vc_kp + Lin::state(nx, XV, 2) * g.vc_ki;

    let cl = CurrentLoop { kp: g.cc_kp, ki: g.cc_ki, decoupling: g.decoupling };
    let (err, v_ctrl) = frame.current_loop(i_ref, XCC, VFF, cl);
    asm.set(XCC, &err);
    asm.set(VFF, &frame.feedforward_row(VFF, g.feedforward, g.k_vf, g.t_vf_s));
    let v_inv = frame.to_global(v_ctrl);
    frame.filter_rows(&mut asm, v_inv);
    Ok(asm.finish(ModelKind::Gfm, IG))
}

// ---------------------------------------------------------------------------
// Equivalent susceptance

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeqEstimate {
    pub b_eq: f64,
    /// `||b_eq F - Y||_F / ||Y||_F` at `omega_star`.
    pub fit_error: f64,
    pub omega_star: f64,
}

/// Frobenius projection of `Y(jw*)` onto `F(jw*)`.
pub fn estimate_beq(m: &AdmittanceModel, omega_star: f64, omega0: f64) -> Result<BeqEstimate> {
    if m.kind == ModelKind::Gfl {
        return Err(Error::Model("B_eq is defined for GFM or passive models only".into()));
    }
    let f = eval_network_factor(omega_star, omega0)?;
    let y = m.eval(omega_star)?;
    let inner: Complex64 = f.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum();
    let b_eq = inner.re / f.norm_squared();
    if !(b_eq > 0.0) {
        return Err(Error::NonPositiveSusceptance { b_eq });
    }
    let resid = (f * Complex64::from(b_eq) - y).norm();
    let y_norm = y.norm();
    let fit_error = if y_norm > 0.0 { resid / y_norm } else { resid };
    Ok(BeqEstimate { b_eq, fit_error, omega_star })
}
