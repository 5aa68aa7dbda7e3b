//! Acceptance checks: each criterion returns one or more named pass/fail lines.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::amplitude::{residual_reference_quadratic, solve_minimax, stabilization_probe, MinimaxProblem};
use crate::control::{controllability_threshold, open_loop_solve, regulate, RegulationProblem, Threshold};
use crate::error::{Error, Result};
use crate::grid::{Kernel1, Kernel2, Kernel3, Placement, SampledSignal, SmoothFn, TimeGrid};
use crate::identification::{
    collect_order3, identify_cubic, identify_pi_cubic, identify_quadratic, identify_vector_quadratic, HxPlant,
    ScalarSystem,
};
use crate::lambert::{w, w0, LambertBranch, BRANCH_POINT};
use crate::polyeq::{
    blowup_simple, bounds_from_kernels, invert_quadratic_const, invert_quadratic_linear_kernel, linear_kernel_blowup,
    majorant_blowup, solve_numeric, MajorantSpec, PolyEquation, Rule,
};
use crate::reference::{factored_inverse, hx_response, HeatExchangerParams, RefModel};
use crate::simulation::{simulate, KernelSet, PiWeights, VectorQuadraticModel, VolterraModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Reported, not judged.
    Info,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn judged(id: &str, pass: bool, detail: String) -> Self {
        Self {
            id: id.into(),
            status: if pass { Status::Pass } else { Status::Fail },
            detail,
        }
    }

    fn errored(id: &str, e: &Error) -> Self {
        Self::judged(id, false, format!("error: {e}"))
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    /// `PASS  2.3sq  detail`.
    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        };
        format!("{tag:<5} {:<22} {}", self.id, self.detail)
    }
}

fn outcome(id: &str, r: Result<(bool, String)>) -> Check {
    match r {
        Ok((pass, detail)) => Check::judged(id, pass, detail),
        Err(e) => Check::errored(id, &e),
    }
}

/// Tolerances and fixtures of the acceptance suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub lambert_tol: f64,
    pub lambert_samples: usize,
    pub branch_point_tol: f64,
    pub minimax_tol: f64,
    pub plant: HeatExchangerParams,
    /// Identification amplitudes as fractions of D0 and Q0.
    pub control_fraction: f64,
    pub control_horizon: f64,
    pub control_h: f64,
    pub terminal_fraction: f64,
    pub round_trip_n: usize,
    pub round_trip_fraction: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            lambert_tol: 1e-12,
            lambert_samples: 1000,
            branch_point_tol: 1e-10,
            minimax_tol: 1e-4,
            plant: HeatExchangerParams::default(),
            control_fraction: 0.25,
            control_horizon: 30.0,
            control_h: 1.0,
            terminal_fraction: 0.01,
            round_trip_n: 128,
            round_trip_fraction: 0.05,
        }
    }
}

/// Every criterion in order.
pub fn run_all(cfg: &SuiteConfig) -> Vec<Check> {
    let mut out = Vec::new();
    out.extend(lambert(cfg));
    out.extend(amplitude(cfg));
    out.extend(identification());
    out.extend(inversion());
    out.extend(blowup());
    out.extend(solver());
    out.extend(plant(cfg));
    out.extend(control(cfg));
    out.extend(reproducibility());
    out
}

// ---------------------------------------------------------------- 1

/// W0 samples spread over [−1/e, 1e6]; W−1 samples over [−1/e, −1e-300].
fn lambert_samples(count: usize) -> (Vec<f64>, Vec<f64>) {
    let last = (count.max(2) - 1) as f64;
    let principal = (0..count)
        .map(|k| {
            let u = k as f64 / last;
            BRANCH_POINT + (1e6 - BRANCH_POINT) * u.powi(6)
        })
        .collect();
    let minus_one = (0..count)
        .map(|k| {
            let u = k as f64 / last;
            BRANCH_POINT * 10f64.powf(-300.0 * u.powi(3))
        })
        .collect();
    (principal, minus_one)
}

pub fn lambert(cfg: &SuiteConfig) -> Vec<Check> {
    let (p, m) = lambert_samples(cfg.lambert_samples);
    let identity = (|| -> Result<(bool, String)> {
        let mut worst = 0.0f64;
        for (branch, ys) in [(LambertBranch::Principal, &p), (LambertBranch::MinusOne, &m)] {
            for &y in ys {
                let z = w(branch, y)?;
                worst = worst.max((z * z.exp() - y).abs() / y.abs().max(1.0));
            }
        }
        Ok((
            worst <= cfg.lambert_tol,
            format!("{} points/branch, max scaled residual {worst:.2e} (tol {:.0e})", p.len(), cfg.lambert_tol),
        ))
    })();
    let branch = (|| -> Result<(bool, String)> {
        let a = w0(-1.0 / E)?;
        let b = w(LambertBranch::MinusOne, -1.0 / E)?;
        let err = (a + 1.0).abs().max((b + 1.0).abs());
        Ok((err <= cfg.branch_point_tol, format!("W0 = {a}, W-1 = {b}")))
    })();
    vec![outcome("1.identity", identity), outcome("1.branch-point", branch)]
}

// ---------------------------------------------------------------- 2

fn near(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

fn rel(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

fn fmt_sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("({})", parts.join(", "))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

pub fn amplitude(cfg: &SuiteConfig) -> Vec<Check> {
    let tol = cfg.minimax_tol;
    let mut out = Vec::new();

    out.push(outcome("2.3sq", (|| {
        let s = solve_minimax(&MinimaxProblem::three_sq(1.0, 1.0)?, tol)?;
        let pass = near(&s.amplitudes, &[0.866], 0.005) && rel(s.value, 1.0 / 24.0) <= 0.005;
        Ok((pass, format!("alpha {} value {:.6} (want 0.866, 1/24 = 0.041667)", fmt_vec(&s.amplitudes), s.value)))
    })()));

    out.push(outcome("2.3sq_pi", (|| {
        let s = solve_minimax(&MinimaxProblem::three_sq_pi(1.0, 1.0)?, tol)?;
        let pass = near(&s.amplitudes, &[0.464, 0.928], 0.01) && rel(s.value, 0.0064) <= 0.1;
        Ok((pass, format!("alpha {} value {:.5} (want (0.464, 0.928), 0.0064)", fmt_vec(&s.amplitudes), s.value)))
    })()));

    out.push(outcome("2.3sq_twostep", (|| {
        let s = solve_minimax(&MinimaxProblem::three_sq_twostep(1.0, 1.0)?, tol)?;
        let omega = s
            .maximizers
            .iter()
            .filter(|p| p.len() == 3)
            .map(|p| [p[1], p[2]])
            .min_by(|a, b| {
                let d = |x: &[f64; 2]| (x[0] - 0.366).abs().max((x[1] - 0.634).abs());
                d(a).total_cmp(&d(b))
            });
        let pass = near(&s.amplitudes, &[0.732], 0.01) && omega.is_some_and(|o| near(&o, &[0.366, 0.634], 0.01));
        Ok((
            pass,
            format!(
                "alpha {} worst omega {} (want 0.732, (0.366, 0.634))",
                fmt_vec(&s.amplitudes),
                omega.map_or("none".into(), |o| fmt_vec(&o))
            ),
        ))
    })()));

    out.push(outcome("2.4cub", (|| {
        let s = solve_minimax(&MinimaxProblem::four_cub(1.0, 1.0)?, tol)?;
        let pass = near(&s.amplitudes, &[0.475, 0.885], 0.01) && rel(s.value, 0.00037) <= 0.1;
        Ok((pass, format!("alpha {} value {:.5} (want (0.475, 0.885), 0.00037)", fmt_vec(&s.amplitudes), s.value)))
    })()));

    out.push(outcome("2.4cub_pi", (|| {
        let s = solve_minimax(&MinimaxProblem::four_cub_pi(1.0, 1.0)?, tol)?;
        let pass = near(&s.amplitudes, &[0.283, 0.677, 0.960], 0.01);
        Ok((pass, format!("alpha {} value {:.6} (want (0.283, 0.677, 0.960))", fmt_vec(&s.amplitudes), s.value)))
    })()));

    out.push(outcome("2.stabilization", (|| {
        let probe = stabilization_probe(6..=10, 1.0, 1.0, tol)?;
        let pass = probe.iter().all(|(_, a)| (a - 0.878).abs() <= 0.01);
        let list: Vec<String> = probe.iter().map(|(n, a)| format!("N={n}:{a:.4}")).collect();
        Ok((pass, format!("{} (want 0.878)", list.join(" "))))
    })()));

    out.push(outcome("2.stabilization-sim", stabilization_by_simulation(tol)));
    out
}

/// Identifies the order-6 reference with ±α* and compares the simulated step
/// error against the closed-form residual used by the probe.
fn stabilization_by_simulation(tol: f64) -> Result<(bool, String)> {
    let order = 6;
    let alpha = stabilization_probe([order], 1.0, 1.0, tol)?[0].1;
    let grid = TimeGrid::covering(1.0, 8)?;
    let reference = RefModel::finite(order)?;
    let model = VolterraModel::midpoint(identify_quadratic(&reference, grid, alpha)?);
    let mut worst = 0.0f64;
    for k in 1..=20 {
        let beta = k as f64 / 20.0;
        let x = SampledSignal::midpoints(grid, vec![beta; grid.n()])?;
        let got = simulate(&model, &x)?.values()[grid.n()] - reference.respond(&x)?.values()[grid.n()];
        let want = -residual_reference_quadratic(order, alpha, beta, 1.0);
        worst = worst.max((got - want).abs());
    }
    Ok((worst <= 1e-10, format!("N=6 alpha {alpha:.4}: simulated vs closed-form step error differ by {worst:.1e}")))
}

// ---------------------------------------------------------------- 3

fn max_kernel_error(ks: &KernelSet, grid: &TimeGrid, k1: f64, k2: f64, k3: f64) -> Result<f64> {
    let n = grid.n();
    let mut e = ks.k1.cells(grid)?.iter().map(|v| (v - k1).abs()).fold(0.0, f64::max);
    if let Some(k) = &ks.k2 {
        let c = k.cells(grid)?;
        for a in 0..n {
            for b in 0..=a {
                e = e.max((c.get(a, b) - k2).abs());
            }
        }
    }
    if let Some(k) = &ks.k3 {
        let c = k.cells(grid)?;
        for a in 0..n {
            for b in 0..=a {
                for d in 0..=b {
                    e = e.max((c.get(a, b, d) - k3).abs());
                }
            }
        }
    }
    Ok(e)
}

fn planted_kernels() -> KernelSet {
    KernelSet::cubic(
        Kernel1::analytic(|s| (-s).exp()),
        Kernel2::analytic(|a, b| (a + 2.0 * b).cos() + (b + 2.0 * a).cos()),
        Kernel3::analytic(|a, b, c| 0.5 * (-(a + b + c)).exp()),
    )
}

/// Max cell error of kernels identified from a model whose weights are exact
/// cell integrals of the planted kernels, against the kernels at cell centres.
fn planted_error(n: usize) -> Result<f64> {
    let grid = TimeGrid::covering(1.0, n)?;
    let truth = planted_kernels();
    let sys = VolterraModel::product_integration(PiWeights::integrated(&truth, &grid)?);
    let got = identify_cubic(&sys, grid, [1.0, 2.0, -3.0])?;
    let mut e = 0.0f64;
    let (a1, b1) = (got.k1.cells(&grid)?, truth.k1.cells(&grid)?);
    e = a1.iter().zip(&b1).map(|(x, y)| (x - y).abs()).fold(e, f64::max);
    let (a2, b2) = (got.k2.as_ref().unwrap().cells(&grid)?, truth.k2.as_ref().unwrap().cells(&grid)?);
    let (a3, b3) = (got.k3.as_ref().unwrap().cells(&grid)?, truth.k3.as_ref().unwrap().cells(&grid)?);
    for i in 0..n {
        for j in 0..=i {
            e = e.max((a2.get(i, j) - b2.get(i, j)).abs());
            for k in 0..=j {
                e = e.max((a3.get(i, j, k) - b3.get(i, j, k)).abs());
            }
        }
    }
    Ok(e)
}

pub fn identification() -> Vec<Check> {
    let kernels = (|| -> Result<(bool, String)> {
        let grid = TimeGrid::covering(1.0, 64)?;
        let ks = identify_cubic(&RefModel::finite(3)?, grid, [0.5, 1.0, -1.0])?;
        let e = max_kernel_error(&ks, &grid, 1.0, 0.5, 1.0 / 6.0)?;
        Ok((e <= 0.05, format!("h = T/64: max |K - (1, 1/2, 1/6)| = {e:.2e}")))
    })();
    let order = (|| -> Result<(bool, String)> {
        let ns = [6, 12, 24];
        let errs = ns.iter().map(|&n| planted_error(n)).collect::<Result<Vec<_>>>()?;
        let orders: Vec<f64> = errs.windows(2).map(|p| (p[0] / p[1]).log2()).collect();
        let pass = orders.iter().all(|&p| p >= 1.0);
        Ok((pass, format!("planted kernels, n = {ns:?}: errors {}, orders {}", fmt_sci(&errs), fmt_vec(&orders))))
    })();
    let pi = (|| -> Result<(bool, String)> {
        let (c1, c2, c3) = (0.7, -0.3, 0.2);
        let grid = TimeGrid::covering(1.0, 10)?;
        let h = grid.h();
        let ks = KernelSet::cubic(Kernel1::constant(c1), Kernel2::constant(c2), Kernel3::constant(c3));
        let sys = VolterraModel::product_integration(PiWeights::integrated(&ks, &grid)?);
        let w = identify_pi_cubic(&collect_order3(&sys, grid, &[1.0, 2.0, -3.0])?)?;
        let mut e = w.m.iter().map(|v| (v - c1 * h).abs()).fold(0.0, f64::max);
        let (l, c) = (w.l.as_ref().unwrap(), w.c.as_ref().unwrap());
        for a in 0..grid.n() {
            for b in 0..=a {
                e = e.max((l.get(a, b) - c2 * h * h).abs());
                for d in 0..=b {
                    e = e.max((c.get(a, b, d) - c3 * h * h * h).abs());
                }
            }
        }
        Ok((e <= 1e-10, format!("constant kernels (0.7, -0.3, 0.2): max weight error {e:.1e}")))
    })();
    vec![outcome("3.reference-kernels", kernels), outcome("3.order", order), outcome("3.pi-weights", pi)]
}

// ---------------------------------------------------------------- 4

/// Composite Simpson over node samples (even cell count).
fn simpson_nodes(v: &[f64], h: f64) -> f64 {
    let n = v.len() - 1;
    let mut s = v[0] + v[n];
    for (k, x) in v.iter().enumerate().take(n).skip(1) {
        s += x * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub fn inversion() -> Vec<Check> {
    let constant = (|| -> Result<(bool, String)> {
        let lambda = 0.5;
        let y = SmoothFn::new(|t| t + t.sin(), |t| 1.0 + t.cos());
        let mut worst = 0.0f64;
        for t in [0.25, 0.5, 0.75, 1.0] {
            let g = TimeGrid::covering(t, 2000)?;
            let x = invert_quadratic_const(lambda, &y, g, Placement::Nodes)?;
            let th = simpson_nodes(x.values(), g.h());
            let back = th + lambda * th * th;
            worst = worst.max(rel(back, y.value(t)));
        }
        Ok((worst <= 1e-8, format!("lambda 0.5, y = t + sin t: max rel. residual {worst:.1e}")))
    })();
    let factored = (|| -> Result<(bool, String)> {
        let g = TimeGrid::covering(1.0, 100)?;
        let y = SmoothFn::new(|t| t * t.exp(), |t| (1.0 + t) * t.exp());
        let x = factored_inverse(&y, g, Placement::Nodes)?;
        let e = x.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        Ok((e <= 1e-8, format!("y = t e^t: max |x - 1| = {e:.1e}")))
    })();
    let linear = (|| -> Result<(bool, String)> {
        let (l1, lambda, f) = (1.0, 0.5, 1.0);
        let ts = linear_kernel_blowup(l1, lambda, f)?;
        let sol = majorant_blowup(&MajorantSpec::constant(f, &[l1, 0.0], &[lambda])?, 10.0)?;
        let mut worst = 0.0f64;
        for k in 0..=90 {
            let t = 0.01 * k as f64 * ts;
            let exact = invert_quadratic_linear_kernel(l1, lambda, f, t)?;
            let ode = sol.psi_at(t).ok_or_else(|| Error::Domain(format!("no ODE value at t = {t}")))?;
            worst = worst.max((exact - ode).abs() / exact.abs().max(1.0));
        }
        Ok((worst <= 1e-6, format!("L1 = 1, lambda = 0.5, F = 1 on [0, 0.9T*]: max deviation {worst:.1e}")))
    })();
    vec![
        outcome("4.constant-lambda", constant),
        outcome("4.factored", factored),
        outcome("4.linear-kernel", linear),
    ]
}

// ---------------------------------------------------------------- 5

pub fn blowup() -> Vec<Check> {
    let simple = (|| -> Result<(bool, String)> {
        let t = blowup_simple(0.25, f64::exp, 10.0)?.ok_or_else(|| Error::Domain("no blow-up found".into()))?;
        let want = w0(1.0)?;
        Ok(((t - want).abs() <= 1e-8, format!("bisection {t:.12} vs W0(1) = {want:.12}")))
    })();
    let linear = (|| -> Result<(bool, String)> {
        let ts = linear_kernel_blowup(1.0, 0.5, 1.0)?;
        let want = 2.0 * 2f64.ln() - 1.0;
        let ev = majorant_blowup(&MajorantSpec::constant(1.0, &[1.0, 0.0], &[0.5])?, 10.0)?
            .blowup
            .ok_or_else(|| Error::Domain("ODE reached the horizon".into()))?;
        let pass = (ts - want).abs() <= 1e-12 && rel(ev, ts) <= 0.01;
        Ok((pass, format!("formula {ts:.10} (2ln2-1 = {want:.10}), ODE event {ev:.10}")))
    })();
    let majorant = (|| -> Result<(bool, String)> {
        let mut worst = 0.0f64;
        for (f, m2) in [(1.0, 1.0), (1.3, 0.7), (0.2, 5.0)] {
            let ev = majorant_blowup(&MajorantSpec::constant(f, &[0.0, 0.0], &[m2])?, 100.0)?
                .blowup
                .ok_or_else(|| Error::Domain("ODE reached the horizon".into()))?;
            worst = worst.max(rel(ev, 1.0 / (4.0 * m2 * f)));
        }
        Ok((worst <= 1e-4, format!("T2* = 1/(4 M2 F) for 3 cases: max rel. error {worst:.1e}")))
    })();
    vec![
        outcome("5.simple", simple),
        outcome("5.linear-kernel", linear),
        outcome("5.constant-majorant", majorant),
    ]
}

// ---------------------------------------------------------------- 6

pub fn solver() -> Vec<Check> {
    let order = (|| -> Result<(bool, String)> {
        let eq = PolyEquation::quadratic_const(1.0, SmoothFn::new(|t| t, |_| 1.0))?;
        let mut errs = Vec::new();
        for n in [50, 100, 200] {
            let g = TimeGrid::covering(1.0, n)?;
            let u = solve_numeric(&eq, g, Rule::Midpoint)?;
            let e = g
                .mids()
                .iter()
                .zip(u.values())
                .map(|(t, v)| (v - 1.0 / (1.0 + 4.0 * t).sqrt()).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        let orders: Vec<f64> = errs.windows(2).map(|p| (p[0] / p[1]).log2()).collect();
        let pass = orders.iter().all(|&p| p >= 1.0);
        Ok((pass, format!("h = 1/50, 1/100, 1/200: errors {}, orders {}", fmt_sci(&errs), fmt_vec(&orders))))
    })();
    let majorant = (|| -> Result<(bool, String)> {
        let g = TimeGrid::covering(0.25, 200)?;
        let eq = PolyEquation::quadratic_const(1.0, SmoothFn::new(|t| t, |_| 1.0))?;
        let sol = majorant_blowup(&bounds_from_kernels(&eq, g)?, 1.0)?;
        let ts = sol.blowup.ok_or_else(|| Error::Domain("majorant has no blow-up".into()))?;
        let u = solve_numeric(&eq, g, Rule::Midpoint)?;
        let mut ratio = 0.0f64;
        let mut checked = 0;
        for (t, v) in g.mids().iter().zip(u.values()) {
            if *t <= 0.9 * ts {
                let psi = sol.psi_at(*t).ok_or_else(|| Error::Domain(format!("no majorant at t = {t}")))?;
                ratio = ratio.max(v.abs() / psi);
                checked += 1;
            }
        }
        Ok((ratio <= 1.0, format!("T2* = {ts:.6}, {checked} nodes: max |u|/psi = {ratio:.4}")))
    })();
    vec![outcome("6.order", order), outcome("6.majorant", majorant)]
}

// ---------------------------------------------------------------- 7

pub fn plant(cfg: &SuiteConfig) -> Vec<Check> {
    let p = cfg.plant;
    let closed = (|| -> Result<(bool, String)> {
        let g = TimeGrid::covering(30.0, 300)?;
        let q = 0.25 * p.q0;
        let dd = SampledSignal::zeros(g, Placement::Nodes);
        let dq = SampledSignal::nodes(g, vec![q; g.n() + 1])?;
        let y = hx_response(&p, &dd, &dq)?;
        let exact: Vec<f64> = g.nodes().iter().map(|&t| p.constant_dq_response(q, t)).collect();
        let peak = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = y.values().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / peak;
        Ok((err <= 1e-3, format!("trapezium, h = 0.1 on [0, 30]: max error / peak = {err:.2e}")))
    })();
    let zero = (|| -> Result<(bool, String)> {
        let g = TimeGrid::covering(30.0, 30)?;
        let z = SampledSignal::zeros(g, Placement::Midpoints);
        let y = hx_response(&p, &z, &z)?;
        Ok((y.values().iter().all(|&v| v == 0.0), format!("max |y| = {}", y.max_abs())))
    })();
    vec![outcome("7.closed-form", closed), outcome("7.zero-input", zero)]
}

// ---------------------------------------------------------------- 8

/// ΔQ scenario as a fraction of Q0 over time.
pub fn disturbance_scenarios() -> Vec<(&'static str, fn(f64) -> f64)> {
    fn step(_: f64) -> f64 {
        1.0
    }
    fn ramp(t: f64) -> f64 {
        (t / 10.0).min(1.0)
    }
    fn smooth(t: f64) -> f64 {
        0.5 * (1.0 - (std::f64::consts::PI * (t / 15.0).min(1.0)).cos())
    }
    vec![("step", step), ("ramp", ramp), ("smooth", smooth)]
}

/// Two-channel quadratic surrogate of the plant on `grid`.
pub fn hx_surrogate(p: &HeatExchangerParams, grid: TimeGrid, fraction: f64) -> Result<VectorQuadraticModel> {
    identify_vector_quadratic(&HxPlant(*p), grid, &[fraction * p.d0, fraction * p.q0])
}

fn scaled_disturbance(grid: TimeGrid, shape: fn(f64) -> f64, amplitude: f64) -> Result<SampledSignal> {
    SampledSignal::sample_midpoints(grid, move |t| amplitude * shape(t))
}

pub fn control(cfg: &SuiteConfig) -> Vec<Check> {
    let p = cfg.plant;
    let mut out = Vec::new();
    let grid = match TimeGrid::new(cfg.control_h, (cfg.control_horizon / cfg.control_h).round() as usize) {
        Ok(g) => g,
        Err(e) => return vec![Check::errored("8.setup", &e)],
    };
    let surrogate = match hx_surrogate(&p, grid, cfg.control_fraction) {
        Ok(m) => m,
        Err(e) => return vec![Check::errored("8.surrogate", &e)],
    };
    for (name, shape) in disturbance_scenarios() {
        let id = format!("8.loop-{name}");
        out.push(outcome(&id, (|| {
            let dq = scaled_disturbance(grid, shape, cfg.control_fraction * p.q0)?;
            let zero = SampledSignal::zeros(grid, Placement::Midpoints);
            let open = hx_response(&p, &zero, &dq)?;
            let peak = open.max_abs();
            let r = regulate(&RegulationProblem::new(surrogate.clone(), 0.0, vec![dq.clone()])?)?;
            let eps = r.terminal_error().abs();
            let plant_eps = match hx_response(&p, &r.applied, &dq) {
                Ok(y) => format!("{:.3e}", y.values()[grid.n()].abs()),
                Err(e) => format!("n/a ({e})"),
            };
            Ok((
                eps <= cfg.terminal_fraction * peak,
                format!(
                    "dQ = 25% Q0: |eps(T)| = {eps:.3e}, peak |di| = {peak:.3e}, ratio {:.2e}; on plant |eps(T)| = {plant_eps}",
                    eps / peak
                ),
            ))
        })()));
    }
    out.push(outcome("8.open-loop", open_loop_round_trip(cfg, 0.0).map(|e| {
        (
            e <= cfg.round_trip_fraction,
            format!(
                "h = T/{}, planted dD = 10% D0 half sine: max error {:.2}% of amplitude",
                cfg.round_trip_n,
                100.0 * e
            ),
        )
    })));
    // The dD kernel vanishes at lag 0, so the per-step linear coefficient is
    // carried by the dD·dQ cross term and can pass through zero.
    let mut disturbed = Vec::new();
    for f in [0.1, -0.1] {
        disturbed.push(match open_loop_round_trip(cfg, f) {
            Ok(e) => format!("dQ ramp {:+.0}% Q0: {:.2}%", 100.0 * f, 100.0 * e),
            Err(e) => format!("dQ ramp {:+.0}% Q0: {e}", 100.0 * f),
        });
    }
    out.push(Check {
        id: "8.open-loop-disturbed".into(),
        status: Status::Info,
        detail: format!("max control error with a known disturbance: {}", disturbed.join("; ")),
    });
    out.push(outcome("8.threshold", (|| {
        let run = |sign: f64| {
            controllability_threshold(
                |a| {
                    let dq = scaled_disturbance(grid, |_| 1.0, sign * a * p.q0)?;
                    regulate(&RegulationProblem::new(surrogate.clone(), 0.0, vec![dq])?).map(|_| ())
                },
                0.25,
                50.0,
                1e-3,
            )
        };
        let (up, down) = (run(1.0)?, run(-1.0)?);
        let show = |t: &Option<Threshold>| match t {
            Some(t) => format!("{:.3} Q0", 0.5 * (t.ok + t.failed)),
            None => "none up to 50 Q0".into(),
        };
        Ok((
            up.is_some() || down.is_some(),
            format!("step dQ: +{} / -{} (plant constants are assumed)", show(&up), show(&down)),
        ))
    })()));
    out
}

/// Planted ΔD (10% D0 half sine) plus a ΔQ ramp to `dq_fraction`·Q0 drive the
/// plant; the surrogate inverts the plant output. Returns the max control
/// error as a fraction of the planted amplitude.
pub fn open_loop_round_trip(cfg: &SuiteConfig, dq_fraction: f64) -> Result<f64> {
    let p = cfg.plant;
    let t_end = cfg.control_horizon;
    let grid = TimeGrid::covering(t_end, cfg.round_trip_n)?;
    let model = hx_surrogate(&p, grid, cfg.control_fraction)?;
    let amp = 0.1 * p.d0;
    let u0 = SampledSignal::sample_midpoints(grid, |t| amp * (std::f64::consts::PI * t / t_end).sin())?;
    let dq = scaled_disturbance(grid, |t| (t / 10.0).min(1.0), dq_fraction * p.q0)?;
    let y = hx_response(&p, &u0, &dq)?;
    let u = open_loop_solve(&model, &y, &[dq])?;
    let err = u.values().iter().zip(u0.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(err / amp)
}

// ---------------------------------------------------------------- 9

pub fn reproducibility() -> Vec<Check> {
    vec![Check {
        id: "9.not-reproducible".into(),
        status: Status::Info,
        detail: "plant curves and the 55% Q0 threshold depend on unpublished lambda1, lambda2; \
                 covered by criteria 7 and 8 instead"
            .into(),
    }]
}
