//! Sensitivity peaks of multi-inverter systems.
//!
//! For a grounded Laplacian `B` and per-node admittances `Y_i`, the open loop is
//! `L(jw) = (B^{-1} ⊗ F^{-1}(jw)) · blockdiag(Y_i(jw))` and the largest singular
//! value of the sensitivity `S = (I + L)^{-1}` is `1 / sigma_min(I + L)`. The
//! peak of that over frequency, in dB, is `kappa_p`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridstrength::{eig_sym, schur_complement, Partition};
use crate::inverters::{
    eval_network_factor, eval_network_factor_inverse, AdmittanceModel, CMatrix2, ModelKind,
};
use crate::netgraph::GroundedLaplacian;

pub type CMatrix = DMatrix<Complex64>;

/// `sigma_min(I + L)` below this marks a marginally stable frequency.
pub const NEAR_SINGULAR: f64 = 1e-13;

/// Determinants smaller than this are flagged by [`verify_det_factorization`].
pub const TINY_DET: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InverterKind {
    Gfl,
    Gfm,
}

/// Network plus a GFL/GFM label and model for every inverter node.
#[derive(Clone, Debug)]
pub struct SystemAssignment {
    b: GroundedLaplacian,
    b_inv: DMatrix<f64>,
    kinds: Vec<InverterKind>,
    gfl: Option<AdmittanceModel>,
    gfm: Option<AdmittanceModel>,
    partition: Partition,
    omega0: f64,
}

impl SystemAssignment {
    pub fn new(
        b: GroundedLaplacian,
        kinds: Vec<InverterKind>,
        gfl: Option<AdmittanceModel>,
        gfm: Option<AdmittanceModel>,
        omega0: f64,
    ) -> Result<Self> {
        let n = b.dim();
        if kinds.len() != n {
            return Err(Error::Partition(format!("{} kinds for {n} inverter nodes", kinds.len())));
        }
        let need = |k| kinds.contains(&k);
        match (&gfl, need(InverterKind::Gfl)) {
            (None, true) => return Err(Error::Model("GFL nodes assigned but no GFL model".into())),
            (Some(m), _) if m.kind == ModelKind::Gfm => {
                return Err(Error::Model("GFM model placed in the GFL slot".into()))
            }
            _ => {}
        }
        match (&gfm, need(InverterKind::Gfm)) {
            (None, true) => return Err(Error::Model("GFM nodes assigned but no GFM model".into())),
            (Some(m), _) if m.kind == ModelKind::Gfl => {
                return Err(Error::Model("GFL model placed in the GFM slot".into()))
            }
            _ => {}
        }
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(Error::Model(format!("omega0 must be positive, got {omega0}")));
        }
        let partition = partition_from_kinds(&kinds);
        let chol = b
            .matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotGroundedLaplacian("B is not positive definite".into()))?;
        let inv = chol.inverse();
        let b_inv = (&inv + inv.transpose()) * 0.5;
        Ok(Self { b, b_inv, kinds, gfl, gfm, partition, omega0 })
    }

    /// Every node uses `model`; its kind picks the slot.
    pub fn homogeneous(b: GroundedLaplacian, model: AdmittanceModel, omega0: f64) -> Result<Self> {
        let n = b.dim();
        match model.kind {
            ModelKind::Gfm => Self::new(b, vec![InverterKind::Gfm; n], None, Some(model), omega0),
            _ => Self::new(b, vec![InverterKind::Gfl; n], Some(model), None, omega0),
        }
    }

    pub fn b(&self) -> &GroundedLaplacian {
        &self.b
    }

    pub fn kinds(&self) -> &[InverterKind] {
        &self.kinds
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn n(&self) -> usize {
        self.kinds.len()
    }

    pub fn model(&self, kind: InverterKind) -> Option<&AdmittanceModel> {
        match kind {
            InverterKind::Gfl => self.gfl.as_ref(),
            InverterKind::Gfm => self.gfm.as_ref(),
        }
    }

    /// Same system with nodes relabelled: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let b = self.b.permuted(perm)?;
        let kinds = perm.iter().map(|&i| self.kinds[i]).collect();
        Self::new(b, kinds, self.gfl.clone(), self.gfm.clone(), self.omega0)
    }

    /// `Y_i(jw)` for every node, evaluating each model once.
    pub fn node_admittances(&self, omega: f64) -> Result<Vec<CMatrix2>> {
        let y_gfl = match &self.gfl {
            Some(m) if self.kinds.contains(&InverterKind::Gfl) => Some(m.eval(omega)?),
            _ => None,
        };
        let y_gfm = match &self.gfm {
            Some(m) if self.kinds.contains(&InverterKind::Gfm) => Some(m.eval(omega)?),
            _ => None,
        };
        Ok(self
            .kinds
            .iter()
            .map(|k| match k {
                InverterKind::Gfl => y_gfl.expect("checked in new"),
                InverterKind::Gfm => y_gfm.expect("checked in new"),
            })
            .collect())
    }
}

pub fn partition_from_kinds(kinds: &[InverterKind]) -> Partition {
    let pick = |want| kinds.iter().enumerate().filter(|(_, &k)| k == want).map(|(i, _)| i).collect();
    Partition {
        gfl_idx: pick(InverterKind::Gfl),
        gfm_idx: pick(InverterKind::Gfm),
    }
}

pub fn kron_with(a: &DMatrix<f64>, f: &CMatrix2) -> CMatrix {
    let (r, c) = a.shape();
    CMatrix::from_fn(2 * r, 2 * c, |i, j| f[(i % 2, j % 2)] * a[(i / 2, j / 2)])
}

pub fn block_diag(blocks: &[CMatrix2]) -> CMatrix {
    let n = blocks.len();
    let mut out = CMatrix::zeros(2 * n, 2 * n);
    for (k, y) in blocks.iter().enumerate() {
        out.fixed_view_mut::<2, 2>(2 * k, 2 * k).copy_from(y);
    }
    out
}

/// `L(jw) = (B^{-1} ⊗ F^{-1}(jw)) · blockdiag(Y_i(jw))`.
pub fn open_loop_at(sys: &SystemAssignment, omega: f64) -> Result<CMatrix> {
    let ys = sys.node_admittances(omega)?;
    let f_inv = eval_network_factor_inverse(omega, sys.omega0);
    let n = sys.n();
    let mut out = CMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        let fy = f_inv * ys[j];
        for i in 0..n {
            let blk = fy * Complex64::from(sys.b_inv[(i, j)]);
            out.fixed_view_mut::<2, 2>(2 * i, 2 * j).copy_from(&blk);
        }
    }
    Ok(out)
}

pub fn sigma_min(m: &CMatrix) -> f64 {
    m.singular_values().min()
}

/// `1 / sigma_min(I + L)` with near-singularity reported as an error.
pub fn sigma_max_from_return_difference(ipl: &CMatrix, omega: f64) -> Result<f64> {
    let s = sigma_min(ipl);
    if !(s >= NEAR_SINGULAR) {
        return Err(Error::NearSingular { omega, sigma_min: s });
    }
    Ok(1.0 / s)
}

fn identity_plus(l: CMatrix) -> CMatrix {
    let n = l.nrows();
    l + CMatrix::identity(n, n)
}

pub fn sensitivity_sigma_max(sys: &SystemAssignment, omega: f64) -> Result<f64> {
    let ipl = identity_plus(open_loop_at(sys, omega)?);
    sigma_max_from_return_difference(&ipl, omega)
}

/// Log-spaced frequency grid in Hz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { f_min_hz: 0.1, f_max_hz: 1000.0, points: 2000 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min_hz.is_finite() && self.f_min_hz > 0.0) {
            return Err(Error::Grid(format!("f_min must be positive, got {}", self.f_min_hz)));
        }
        if !(self.f_max_hz.is_finite() && self.f_max_hz > self.f_min_hz) {
            return Err(Error::Grid(format!(
                "need f_min < f_max, got {} and {}",
                self.f_min_hz, self.f_max_hz
            )));
        }
        if self.points < 2 {
            return Err(Error::Grid(format!("need at least 2 points, got {}", self.points)));
        }
        Ok(())
    }

    /// Angular frequencies in rad/s, ascending.
    pub fn omegas(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let (a, b) = (self.f_min_hz.log10(), self.f_max_hz.log10());
        let last = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                let f = if i + 1 == self.points {
                    self.f_max_hz
                } else {
                    10f64.powf(a + (b - a) * i as f64 / last)
                };
                2.0 * std::f64::consts::PI * f
            })
            .collect())
    }

    pub fn densified(&self, factor: usize) -> Self {
        Self { points: (self.points - 1) * factor + 1, ..*self }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub omegas: Vec<f64>,
    /// `sigma_max(S(jw))` on the coarse grid; `inf` at marginal frequencies.
    pub sigma_max: Vec<f64>,
    /// `20 log10` of the refined peak; `inf` when any frequency is marginal.
    pub kappa_p_db: f64,
    pub omega_peak: f64,
    /// Frequencies (rad/s) where `I + L` was near-singular.
    pub marginal: Vec<f64>,
}

impl SweepResult {
    pub fn freq_peak_hz(&self) -> f64 {
        self.omega_peak / (2.0 * std::f64::consts::PI)
    }

    pub fn sigma_max_db(&self) -> Vec<f64> {
        self.sigma_max.iter().map(|s| 20.0 * s.log10()).collect()
    }
}

const GOLDEN_REL_TOL: f64 = 1e-9;

fn eval_or_marginal<F>(f: &F, omega: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    match f(omega) {
        Err(Error::NearSingular { .. }) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Golden-section maximization on `[lo, hi]`; returns `(omega, value)`.
fn golden_max<F>(f: &F, mut lo: f64, mut hi: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = eval_or_marginal(f, x1)?;
    let mut f2 = eval_or_marginal(f, x2)?;
    for _ in 0..200 {
        if f1.is_infinite() {
            return Ok((x1, f1));
        }
        if f2.is_infinite() {
            return Ok((x2, f2));
        }
        if hi - lo <= GOLDEN_REL_TOL * 0.5 * (hi + lo) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eval_or_marginal(f, x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eval_or_marginal(f, x2)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Sweeps `f` over the grid in parallel, then refines the coarse maximum.
pub fn sweep_fn<F>(f: F, grid: &GridSpec) -> Result<SweepResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let omegas = grid.omegas()?;
    let sigma_max = omegas
        .par_iter()
        .map(|&w| eval_or_marginal(&f, w))
        .collect::<Result<Vec<f64>>>()?;
    let marginal: Vec<f64> = omegas
        .iter()
        .zip(&sigma_max)
        .filter(|(_, s)| s.is_infinite())
        .map(|(&w, _)| w)
        .collect();

    let mut i_max = 0;
    for (i, s) in sigma_max.iter().enumerate() {
        if *s > sigma_max[i_max] {
            i_max = i;
        }
    }
    let (mut omega_peak, mut peak) = (omegas[i_max], sigma_max[i_max]);
    if peak.is_finite() {
        let lo = omegas[i_max.saturating_sub(1)];
        let hi = omegas[(i_max + 1).min(omegas.len() - 1)];
        let (w, s) = golden_max(&f, lo, hi)?;
        if s > peak {
            omega_peak = w;
            peak = s;
        }
    }
    Ok(SweepResult {
        omegas,
        sigma_max,
        kappa_p_db: 20.0 * peak.log10(),
        omega_peak,
        marginal,
    })
}

pub fn sweep(sys: &SystemAssignment, grid: &GridSpec) -> Result<SweepResult> {
    sweep_fn(|w| sensitivity_sigma_max(sys, w), grid)
}

/// Single inverter behind a line of susceptance `scr`.
#[derive(Clone, Debug)]
pub struct SibsConfig {
    pub scr: f64,
    pub model: AdmittanceModel,
}

impl SibsConfig {
    pub fn to_system(&self, omega0: f64) -> Result<SystemAssignment> {
        if !(self.scr.is_finite() && self.scr > 0.0) {
            return Err(Error::Precondition(format!("SCR must be positive, got {}", self.scr)));
        }
        let b = GroundedLaplacian::from_matrix(DMatrix::from_element(1, 1, self.scr))?;
        SystemAssignment::homogeneous(b, self.model.clone(), omega0)
    }
}

pub fn sibs_sweep(cfg: &SibsConfig, grid: &GridSpec, omega0: f64) -> Result<SweepResult> {
    sweep(&cfg.to_system(omega0)?, grid)
}

#[derive(Clone, Debug)]
pub struct ModalResult {
    pub lambdas: Vec<f64>,
    pub per_mode: Vec<SweepResult>,
    /// Sweep of `max_i sigma_max` over the modes.
    pub combined: SweepResult,
    /// Index into `lambdas` of the mode with the largest peak.
    pub argmax_mode: usize,
}

/// Per-eigenvalue SIBS decomposition of a homogeneous system.
pub fn modal_kappa(
    b: &GroundedLaplacian,
    model: &AdmittanceModel,
    grid: &GridSpec,
    omega0: f64,
) -> Result<ModalResult> {
    let lambdas = eig_sym(b)?.lambdas;
    let systems = lambdas
        .iter()
        .map(|&scr| SibsConfig { scr, model: model.clone() }.to_system(omega0))
        .collect::<Result<Vec<_>>>()?;
    let per_mode = systems.iter().map(|s| sweep(s, grid)).collect::<Result<Vec<_>>>()?;
    let combined = sweep_fn(
        |w| {
            let mut best = 0f64;
            for s in &systems {
                best = best.max(sensitivity_sigma_max(s, w)?);
            }
            Ok(best)
        },
        grid,
    )?;
    let mut argmax_mode = 0;
    for (i, r) in per_mode.iter().enumerate() {
        if r.kappa_p_db > per_mode[argmax_mode].kappa_p_db {
            argmax_mode = i;
        }
    }
    Ok(ModalResult { lambdas, per_mode, combined, argmax_mode })
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Subsystem networks of a hybrid system, over `gfl_idx` and `gfm_idx` order.
#[derive(Clone, Debug)]
pub struct HybridNetworks {
    pub y_sub1: CMatrix,
    pub y_sub2: CMatrix,
    pub gfl_idx: Vec<usize>,
    pub gfm_idx: Vec<usize>,
}

/// `Y_sub1 = B11⊗F - (B12⊗F)(B22⊗F + I⊗Y_GFM)^{-1}(B21⊗F)` and `Y_sub2 = (B/n1)⊗F`.
pub fn hybrid_subsystem_networks(sys: &SystemAssignment, omega: f64) -> Result<HybridNetworks> {
    let y_gfm = match sys.model(InverterKind::Gfm) {
        Some(m) if sys.partition.n2() > 0 => Some(m.eval(omega)?),
        _ => None,
    };
    hybrid_networks_with(sys.b.matrix(), &sys.partition, y_gfm, omega, sys.omega0)
}

/// As [`hybrid_subsystem_networks`] with an explicit `Y_GFM(jw)` shared by all GFM nodes.
pub fn hybrid_networks_with(
    b: &DMatrix<f64>,
    p: &Partition,
    y_gfm: Option<CMatrix2>,
    omega: f64,
    omega0: f64,
) -> Result<HybridNetworks> {
    let f = eval_network_factor(omega, omega0)?;
    let (g1, g2) = (&p.gfl_idx, &p.gfm_idx);
    let b11 = sub(b, g1, g1);
    let y_sub1 = if g2.is_empty() {
        kron_with(&b11, &f)
    } else {
        let y_gfm = y_gfm.ok_or_else(|| Error::Model("hybrid system needs a GFM admittance".into()))?;
        let b12f = kron_with(&sub(b, g1, g2), &f);
        let b21f = kron_with(&sub(b, g2, g1), &f);
        let inner = kron_with(&sub(b, g2, g2), &f) + block_diag(&vec![y_gfm; g2.len()]);
        let solved = inner.lu().solve(&b21f).ok_or(Error::Resonance { omega })?;
        kron_with(&b11, &f) - b12f * solved
    };
    let y_sub2 = if g2.is_empty() {
        CMatrix::zeros(0, 0)
    } else {
        let mut order: Vec<usize> = g2.clone();
        order.extend(g1.iter().copied());
        let reordered = sub(b, &order, &order);
        let elim: Vec<usize> = (g2.len()..order.len()).collect();
        kron_with(&schur_complement(&reordered, &elim)?, &f)
    };
    Ok(HybridNetworks { y_sub1, y_sub2, gfl_idx: g1.clone(), gfm_idx: g2.clone() })
}

fn det(m: &CMatrix) -> Complex64 {
    if m.nrows() == 0 {
        return Complex64::from(1.0);
    }
    m.clone().lu().determinant()
}

/// `I + Y_G · Y_sub^{-1}` for one subsystem.
fn subsystem_return_difference(y_sub: &CMatrix, y_node: &CMatrix2, n: usize, omega: f64) -> Result<CMatrix> {
    let y_g = block_diag(&vec![*y_node; n]);
    // Y_G Y^{-1} = (Y^{-T} Y_G^T)^T
    let x = y_sub
        .transpose()
        .lu()
        .solve(&y_g.transpose())
        .ok_or(Error::Resonance { omega })?;
    Ok(identity_plus(x.transpose()))
}

/// `I + Y_sub^{-1} · Y_G` for one subsystem, the ordering used for singular values.
fn subsystem_sensitivity_matrix(y_sub: &CMatrix, y_node: &CMatrix2, n: usize, omega: f64) -> Result<CMatrix> {
    let y_g = block_diag(&vec![*y_node; n]);
    let x = y_sub.clone().lu().solve(&y_g).ok_or(Error::Resonance { omega })?;
    Ok(identity_plus(x))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetCheck {
    pub omegas: Vec<f64>,
    pub rel_err: Vec<f64>,
    pub max_rel_err: f64,
    /// Frequencies where `|det(I + L)|` fell below [`TINY_DET`].
    pub flagged: Vec<f64>,
}

/// Relative error of `det(I + Y_G Y_N^{-1}) = det(I + L_sub1) det(I + L_sub2)` over the grid.
pub fn verify_det_factorization(sys: &SystemAssignment, grid: &GridSpec) -> Result<DetCheck> {
    let omegas = grid.omegas()?;
    let rows = omegas
        .par_iter()
        .map(|&w| det_rel_err(sys, w))
        .collect::<Result<Vec<_>>>()?;
    let rel_err: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let flagged = omegas.iter().zip(&rows).filter(|(_, r)| r.1).map(|(&w, _)| w).collect();
    let max_rel_err = rel_err.iter().copied().fold(0.0, f64::max);
    Ok(DetCheck { omegas, rel_err, max_rel_err, flagged })
}

fn det_rel_err(sys: &SystemAssignment, omega: f64) -> Result<(f64, bool)> {
    let ys = sys.node_admittances(omega)?;
    let y_g = block_diag(&ys);
    // Y_G Y_N^{-1} = Y_G (B^{-1} ⊗ F^{-1})
    let y_n_inv = kron_with(&sys.b_inv, &eval_network_factor_inverse(omega, sys.omega0));
    let full = det(&identity_plus(y_g * y_n_inv));

    let nets = hybrid_subsystem_networks(sys, omega)?;
    let p = &sys.partition;
    let mut product = Complex64::from(1.0);
    if p.n1() > 0 {
        let y = ys[p.gfl_idx[0]];
        product *= det(&subsystem_return_difference(&nets.y_sub1, &y, p.n1(), omega)?);
    }
    if p.n2() > 0 {
        let y = ys[p.gfm_idx[0]];
        product *= det(&subsystem_return_difference(&nets.y_sub2, &y, p.n2(), omega)?);
    }
    let scale = full.norm();
    let tiny = scale < TINY_DET;
    let err = (full - product).norm() / if tiny { 1.0 } else { scale };
    Ok((err, tiny))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Remark1Report {
    /// `max_w |sigma_min(I + L) - min(sigma_min sub1, sigma_min sub2)|`.
    pub max_deviation: f64,
    /// The same deviation divided by `sigma_min(I + L)`.
    pub max_rel_deviation: f64,
    pub kappa_subsystems_db: f64,
    pub kappa_direct_db: f64,
    pub gap_db: f64,
}

fn subsystem_sigma_min(sys: &SystemAssignment, omega: f64) -> Result<f64> {
    let p = &sys.partition;
    if p.n1() == 0 || p.n2() == 0 {
        return Ok(sigma_min(&identity_plus(open_loop_at(sys, omega)?)));
    }
    let nets = hybrid_subsystem_networks(sys, omega)?;
    let ys = sys.node_admittances(omega)?;
    let s1 = sigma_min(&subsystem_sensitivity_matrix(&nets.y_sub1, &ys[p.gfl_idx[0]], p.n1(), omega)?);
    let s2 = sigma_min(&subsystem_sensitivity_matrix(&nets.y_sub2, &ys[p.gfm_idx[0]], p.n2(), omega)?);
    Ok(s1.min(s2))
}

/// Compares `sigma_min(I + L)` with the smaller subsystem value across the grid.
pub fn verify_remark1_equality(sys: &SystemAssignment, grid: &GridSpec) -> Result<Remark1Report> {
    let omegas = grid.omegas()?;
    let devs = omegas
        .par_iter()
        .map(|&w| {
            let direct = sigma_min(&identity_plus(open_loop_at(sys, w)?));
            let split = subsystem_sigma_min(sys, w)?;
            Ok(((direct - split).abs(), (direct - split).abs() / direct))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_deviation = devs.iter().map(|d| d.0).fold(0.0, f64::max);
    let max_rel_deviation = devs.iter().map(|d| d.1).fold(0.0, f64::max);
    let via_subsystems = sweep_fn(
        |w| {
            let s = subsystem_sigma_min(sys, w)?;
            if !(s >= NEAR_SINGULAR) {
                return Err(Error::NearSingular { omega: w, sigma_min: s });
            }
            Ok(1.0 / s)
        },
        grid,
    )?;
    let direct = sweep(sys, grid)?;
    Ok(Remark1Report {
        max_deviation,
        max_rel_deviation,
        kappa_subsystems_db: via_subsystems.kappa_p_db,
        kappa_direct_db: direct.kappa_p_db,
        gap_db: via_subsystems.kappa_p_db - direct.kappa_p_db,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainInequality {
    pub kappa_gamma1_db: f64,
    pub kappa_gamma2_db: f64,
    pub kappa_gamma3_db: f64,
    pub holds: bool,
    /// The hybrid assignment is actually homogeneous, so no mixing happened.
    pub degenerate: bool,
}

/// `kappa(Γ3) < max(kappa(Γ1), kappa(Γ2))`, all three computed on the full system.
pub fn verify_main_inequality(
    b: &GroundedLaplacian,
    gfl: &AdmittanceModel,
    gfm: &AdmittanceModel,
    hybrid: &[InverterKind],
    grid: &GridSpec,
    omega0: f64,
) -> Result<MainInequality> {
    let n = b.dim();
    let run = |kinds: Vec<InverterKind>| -> Result<f64> {
        let sys = SystemAssignment::new(b.clone(), kinds, Some(gfl.clone()), Some(gfm.clone()), omega0)?;
        Ok(sweep(&sys, grid)?.kappa_p_db)
    };
    let k1 = run(vec![InverterKind::Gfl; n])?;
    let k2 = run(vec![InverterKind::Gfm; n])?;
    let k3 = run(hybrid.to_vec())?;
    let degenerate = hybrid.iter().all(|&k| k == hybrid[0]);
    Ok(MainInequality {
        kappa_gamma1_db: k1,
        kappa_gamma2_db: k2,
        kappa_gamma3_db: k3,
        holds: !degenerate && k3 < k1.max(k2),
        degenerate,
    })
}
