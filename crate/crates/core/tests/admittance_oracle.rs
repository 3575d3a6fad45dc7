mod common;

use common::*;
use drp::inverters::{
    build_gfl_model, build_gfm_model, build_passive_lcl, eval_network_factor, estimate_beq,
    GflParams, GfmParams, OperatingPoint, DEFAULT_BEQ_OMEGA,
};
use nalgebra::DMatrix;
use num_complex::Complex64;

#[test]
fn nonlinear_models_start_at_equilibrium() {
    let p = table_params();
    for m in [gfl_nonlinear(&p), gfm_nonlinear(&p)] {
        assert!(linearize(&m, 1e-6).residual < 1e-9);
    }
}

#[test]
fn gfl_matches_finite_difference_linearization() {
    let p = table_params();
    let model = build_gfl_model(&p.filter, &p.gfl).unwrap();
    let fd = linearize(&gfl_nonlinear(&p), 1e-6);
    for w in log_freqs(0.1, 1000.0, 20) {
        let err = rel_err(&model.eval(w).unwrap(), &fd.response(w));
        assert!(err < 1e-4, "omega {w}: rel err {err:e}");
    }
}

#[test]
fn gfm_matches_finite_difference_linearization() {
    let p = table_params();
    let model = build_gfm_model(&p.filter, &p.gfm).unwrap();
    let fd = linearize(&gfm_nonlinear(&p), 1e-6);
    for w in log_freqs(0.1, 1000.0, 20) {
        let err = rel_err(&model.eval(w).unwrap(), &fd.response(w));
        assert!(err < 1e-4, "omega {w}: rel err {err:e}");
    }
}

#[test]
fn state_space_matches_finite_difference_off_nominal_operating_point() {
    let op = OperatingPoint { p0: 0.6, q0: 0.2, u0: 1.02 };
    let p = table_params().with_operating_point(op);
    let gfl = build_gfl_model(&p.filter, &p.gfl).unwrap();
    let gfm = build_gfm_model(&p.filter, &p.gfm).unwrap();
    let fd_gfl = linearize(&gfl_nonlinear(&p), 1e-6);
    let fd_gfm = linearize(&gfm_nonlinear(&p), 1e-6);
    assert!(fd_gfl.residual < 1e-9 && fd_gfm.residual < 1e-9);
    for w in log_freqs(0.5, 500.0, 7) {
        assert!(rel_err(&gfl.eval(w).unwrap(), &fd_gfl.response(w)) < 1e-4);
        assert!(rel_err(&gfm.eval(w).unwrap(), &fd_gfm.response(w)) < 1e-4);
    }
}

#[test]
fn disabled_controls_match_analytic_lcl() {
    let p = table_params();
    let op = OperatingPoint::default();
    let f = &p.filter;
    let models = [
        build_gfl_model(f, &GflParams::disabled(op)).unwrap(),
        build_gfm_model(f, &GfmParams::disabled(op)).unwrap(),
        build_passive_lcl(f).unwrap(),
    ];
    for w in log_freqs(0.1, 1000.0, 200) {
        let expect = lcl_admittance(f.l_f, f.c_f, f.l_g, w);
        for m in &models {
            let y = m.eval(w).unwrap();
            for (a, b) in y.iter().zip(expect.iter()) {
                assert!((a.norm() - b.norm()).abs() < 1e-9 * b.norm().max(1.0), "omega {w}");
            }
            assert!(rel_err(&y, &expect) < 1e-9);
        }
    }
}

#[test]
fn high_frequency_asymptote_is_grid_side_inductor() {
    let p = table_params();
    let f = &p.filter;
    for model in [
        build_gfl_model(f, &p.gfl).unwrap(),
        build_gfm_model(f, &p.gfm).unwrap(),
    ] {
        let top = 1e3 * W0;
        let inductor = eval_network_factor(top, W0).unwrap() / Complex64::from(f.l_g);
        assert!(rel_err(&model.eval(top).unwrap(), &inductor) < 1e-3);

        let ws: Vec<f64> = (0..=20).map(|i| W0 * 10f64.powf(2.0 + i as f64 / 20.0)).collect();
        let mags: Vec<f64> = ws.iter().map(|&w| model.eval(w).unwrap().norm()).collect();
        assert!(mags.windows(2).all(|m| m[1] < m[0]));
    }
}

#[test]
fn conjugate_symmetry() {
    let p = table_params();
    let models = [
        build_gfl_model(&p.filter, &p.gfl).unwrap(),
        build_gfm_model(&p.filter, &p.gfm).unwrap(),
        build_passive_lcl(&p.filter).unwrap(),
    ];
    for m in &models {
        for w in log_freqs(0.1, 1000.0, 50) {
            let pos = m.eval(w).unwrap();
            let neg = m.eval(-w).unwrap();
            assert!((neg - pos.map(|c| c.conj())).norm() <= 1e-12 * pos.norm());
        }
    }
}

#[test]
fn gfl_dc_gain_formula() {
    let p = table_params();
    let m = build_gfl_model(&p.filter, &p.gfl).unwrap();
    let eig = m.a.complex_eigenvalues();
    assert!(eig.iter().all(|l| l.re < 0.0), "GFL state matrix is Hurwitz");
    let dc = -(&m.c_out * m.a.clone().try_inverse().unwrap() * &m.b_in);
    let y0 = m.eval(0.0).unwrap();
    for r in 0..2 {
        for c in 0..2 {
            assert!((y0[(r, c)] - Complex64::from(dc[(r, c)])).norm() < 1e-9 * dc.norm().max(1.0));
        }
    }
}

#[test]
fn gfm_near_dc_is_bounded_and_positive() {
    let p = table_params();
    let m = build_gfm_model(&p.filter, &p.gfm).unwrap();
    let y = m.eval(1e-3).unwrap();
    let s = DMatrix::from_fn(2, 2, |r, c| y[(r, c)]).singular_values();
    assert!(s.max().is_finite() && s.max() > 0.0);
}

#[test]
fn beq_fixture_value() {
    let p = table_params();
    let m = build_gfm_model(&p.filter, &p.gfm).unwrap();
    let est = estimate_beq(&m, DEFAULT_BEQ_OMEGA, W0).unwrap();
    // Independent projection using the finite-difference response.
    let fd = linearize(&gfm_nonlinear(&p), 1e-6);
    let y = fd.response(DEFAULT_BEQ_OMEGA);
    let f = eval_network_factor(DEFAULT_BEQ_OMEGA, W0).unwrap();
    let num: f64 = f.iter().zip(y.iter()).map(|(a, b)| (a.conj() * b).re).sum();
    let den: f64 = f.iter().map(|a| a.norm_sqr()).sum();
    assert!(est.b_eq > 0.0);
    assert!((est.b_eq - num / den).abs() < 1e-4 * est.b_eq);
}
