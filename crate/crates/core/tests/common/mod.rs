#![allow(dead_code)]

use std::path::PathBuf;

use drp::inverters::{load_params, CMatrix2, InverterParams};
use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;

pub const W0: f64 = 2.0 * std::f64::consts::PI * 50.0;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn table_params() -> InverterParams {
    load_params(fixture("table_a1.json")).unwrap()
}

pub fn log_freqs(f_min: f64, f_max: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            2.0 * std::f64::consts::PI * 10f64.powf(f_min.log10() + t * (f_max.log10() - f_min.log10()))
        })
        .collect()
}

pub fn rel_err(a: &CMatrix2, b: &CMatrix2) -> f64 {
    (a - b).norm() / b.norm()
}

// ---------------------------------------------------------------------------
// Nonlinear time-domain inverter models, written out directly.

type V2 = [f64; 2];

fn rotate(theta: f64, v: V2) -> V2 {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn jx(v: V2) -> V2 {
    [-v[1], v[0]]
}

fn v2(x: &[f64], at: usize) -> V2 {
    [x[at], x[at + 1]]
}

struct Lcl {
    l_f: f64,
    c_f: f64,
    l_g: f64,
}

impl Lcl {
    fn rates(&self, i_f: V2, v_c: V2, i_g: V2, v_inv: V2, u: V2) -> [f64; 6] {
        let mut d = [0.0; 6];
        for k in 0..2 {
            d[k] = W0 / self.l_f * (v_inv[k] - v_c[k] - self.l_f * jx(i_f)[k]);
            d[2 + k] = W0 / self.c_f * (i_f[k] - i_g[k] - self.c_f * jx(v_c)[k]);
            d[4 + k] = W0 / self.l_g * (v_c[k] - u[k] - self.l_g * jx(i_g)[k]);
        }
        d
    }

    /// `(i_f, v_c, i_g, v_inv)` delivering `p + jq` at terminal voltage `(u0, 0)`.
    fn equilibrium(&self, p: f64, q: f64, u0: f64) -> (V2, V2, V2, V2) {
        let i_g = [p / u0, -q / u0];
        let v_c = [u0 + self.l_g * jx(i_g)[0], self.l_g * jx(i_g)[1]];
        let i_f = [i_g[0] + self.c_f * jx(v_c)[0], i_g[1] + self.c_f * jx(v_c)[1]];
        let v_inv = [v_c[0] + self.l_f * jx(i_f)[0], v_c[1] + self.l_f * jx(i_f)[1]];
        (i_f, v_c, i_g, v_inv)
    }
}

pub struct Nonlinear {
    pub x0: Vec<f64>,
    pub u0: [f64; 2],
    pub f: Box<dyn Fn(&[f64], V2) -> Vec<f64>>,
}

fn lcl(p: &InverterParams) -> Lcl {
    Lcl { l_f: p.filter.l_f, c_f: p.filter.c_f, l_g: p.filter.l_g }
}

/// GFL: PLL on u_t, P/Q PI, current PI on i_f with decoupling, v_c feedforward.
pub fn gfl_nonlinear(p: &InverterParams) -> Nonlinear {
    let g = p.gfl.clone();
    let net = lcl(p);
    let (p0, q0, u0) = (g.op.p0, g.op.q0, g.op.u0);
    let (if0, vc0, ig0, vinv0) = net.equilibrium(p0, q0, u0);
    let l_f = p.filter.l_f;

    let mut x0 = vec![0.0; 14];
    x0[0..2].copy_from_slice(&if0);
    x0[2..4].copy_from_slice(&vc0);
    x0[4..6].copy_from_slice(&ig0);
    x0[8] = g.k_vf * vc0[0];
    x0[9] = g.k_vf * vc0[1];
    x0[10] = if0[0] / g.pq_ki;
    x0[11] = -if0[1] / g.pq_ki;
    for k in 0..2 {
        x0[6 + k] = (vinv0[k] - l_f * jx(if0)[k] - x0[8 + k]) / g.cc_ki;
    }

    let f = move |x: &[f64], u: V2| -> Vec<f64> {
        let (i_f, v_c, i_g) = (v2(x, 0), v2(x, 2), v2(x, 4));
        let (xi_cc, v_ff) = (v2(x, 6), v2(x, 8));
        let (xi_p, xi_q, xi_pll, delta) = (x[10], x[11], x[12], x[13]);
        let uc = rotate(-delta, u);
        let igc = rotate(-delta, i_g);
        let ifc = rotate(-delta, i_f);
        let vcc = rotate(-delta, v_c);
        let w_pll = g.pll_kp * uc[1] + g.pll_ki * xi_pll;
        let pe = uc[0] * igc[0] + uc[1] * igc[1];
        let qe = uc[1] * igc[0] - uc[0] * igc[1];
        let (ep, eq) = (p0 - pe, q0 - qe);
        let i_ref = [g.pq_kp * ep + g.pq_ki * xi_p, -(g.pq_kp * eq + g.pq_ki * xi_q)];
        let e = [i_ref[0] - ifc[0], i_ref[1] - ifc[1]];
        let mut v_ctrl = [0.0; 2];
        for k in 0..2 {
            v_ctrl[k] = g.cc_kp * e[k] + g.cc_ki * xi_cc[k] + l_f * jx(ifc)[k] + v_ff[k];
        }
        let v_inv = rotate(delta, v_ctrl);
        let mut d = net.rates(i_f, v_c, i_g, v_inv, u).to_vec();
        d.extend_from_slice(&e);
        for k in 0..2 {
            d.push((g.k_vf * vcc[k] - v_ff[k]) / g.t_vf_s);
        }
        d.extend_from_slice(&[ep, eq, uc[1], w_pll]);
        d
    };
    Nonlinear { x0, u0: [u0, 0.0], f: Box::new(f) }
}

/// GFM: VSG swing, PI on the terminal voltage, current PI on i_f, v_c feedforward.
pub fn gfm_nonlinear(p: &InverterParams) -> Nonlinear {
    let g = p.gfm.clone();
    let net = lcl(p);
    let (p0, q0, u0) = (g.op.p0, g.op.q0, g.op.u0);
    let (if0, vc0, ig0, vinv0) = net.equilibrium(p0, q0, u0);
    let l_f = p.filter.l_f;

    let mut x0 = vec![0.0; 14];
    x0[0..2].copy_from_slice(&if0);
    x0[2..4].copy_from_slice(&vc0);
    x0[4..6].copy_from_slice(&ig0);
    for k in 0..2 {
        x0[8 + k] = if0[k] / g.vc_ki;
        x0[12 + k] = g.k_vf * vc0[k];
        x0[10 + k] = (vinv0[k] - l_f * jx(if0)[k] - x0[12 + k]) / g.cc_ki;
    }

    let f = move |x: &[f64], u: V2| -> Vec<f64> {
        let (i_f, v_c, i_g) = (v2(x, 0), v2(x, 2), v2(x, 4));
        let (dw, delta) = (x[6], x[7]);
        let (xi_v, xi_cc, v_ff) = (v2(x, 8), v2(x, 10), v2(x, 12));
        let uc = rotate(-delta, u);
        let igc = rotate(-delta, i_g);
        let ifc = rotate(-delta, i_f);
        let vcc = rotate(-delta, v_c);
        let pe = uc[0] * igc[0] + uc[1] * igc[1];
        let ev = [u0 - uc[0], -uc[1]];
        let mut e = [0.0; 2];
        let mut v_ctrl = [0.0; 2];
        for k in 0..2 {
            let i_ref = g.vc_kp * ev[k] + g.vc_ki * xi_v[k];
            e[k] = i_ref - ifc[k];
        }
        for k in 0..2 {
            v_ctrl[k] = g.cc_kp * e[k] + g.cc_ki * xi_cc[k] + l_f * jx(ifc)[k] + v_ff[k];
        }
        let v_inv = rotate(delta, v_ctrl);
        let mut d = net.rates(i_f, v_c, i_g, v_inv, u).to_vec();
        d.push((p0 - pe - g.d_vsg * dw) / g.j_vsg);
        d.push(W0 * dw);
        d.extend_from_slice(&ev);
        d.extend_from_slice(&e);
        for k in 0..2 {
            d.push((g.k_vf * vcc[k] - v_ff[k]) / g.t_vf_s);
        }
        d
    };
    Nonlinear { x0, u0: [u0, 0.0], f: Box::new(f) }
}

pub struct FdModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Largest `|f(x0, u0)|`; zero at a true equilibrium.
    pub residual: f64,
}

/// Central finite-difference Jacobians at the model's equilibrium.
pub fn linearize(m: &Nonlinear, h: f64) -> FdModel {
    let n = m.x0.len();
    let f0 = (m.f)(&m.x0, m.u0);
    let residual = f0.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let (mut xp, mut xm) = (m.x0.clone(), m.x0.clone());
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = ((m.f)(&xp, m.u0), (m.f)(&xm, m.u0));
        for i in 0..n {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let mut b = DMatrix::zeros(n, 2);
    for j in 0..2 {
        let (mut up, mut um) = (m.u0, m.u0);
        up[j] += h;
        um[j] -= h;
        let (fp, fm) = ((m.f)(&m.x0, up), (m.f)(&m.x0, um));
        for i in 0..n {
            b[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    FdModel { a, b, residual }
}

impl FdModel {
    /// Admittance with output `-i_g` (states 4 and 5).
    pub fn response(&self, omega: f64) -> CMatrix2 {
        let n = self.a.nrows();
        let lhs = DMatrix::from_fn(n, n, |r, c| {
            let d = if r == c { Complex64::new(0.0, omega) } else { Complex64::from(0.0) };
            d - self.a[(r, c)]
        });
        let x = lhs.lu().solve(&self.b.map(Complex64::from)).unwrap();
        Matrix2::new(-x[(4, 0)], -x[(4, 1)], -x[(5, 0)], -x[(5, 1)])
    }
}

// ---------------------------------------------------------------------------
// Passive LCL via dq impedances.

fn dq_reactive(k: f64, omega: f64) -> CMatrix2 {
    // k * (jw I + w0 J) / w0
    let jw = Complex64::new(0.0, omega);
    let w0 = Complex64::from(W0);
    Matrix2::new(jw, -w0, w0, jw) * Complex64::from(k / W0)
}

/// Current drawn at the terminal of an LCL filter with a shorted inverter side.
pub fn lcl_admittance(l_f: f64, c_f: f64, l_g: f64, omega: f64) -> CMatrix2 {
    let z_lf = dq_reactive(l_f, omega);
    let y_c = dq_reactive(c_f, omega);
    let z_lg = dq_reactive(l_g, omega);
    let shunt = (y_c + z_lf.try_inverse().unwrap()).try_inverse().unwrap();
    (z_lg + shunt).try_inverse().unwrap()
}

// ---------------------------------------------------------------------------
// Dense complex helpers.

pub fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(Complex64::from)
}

pub fn c2_to_dm(m: &CMatrix2) -> DMatrix<Complex64> {
    DMatrix::from_fn(2, 2, |r, c| m[(r, c)])
}

pub fn dense_rel_err(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
