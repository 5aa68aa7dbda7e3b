//! Subcommand runners. Each returns its files in memory plus log lines; the
//! caller writes them only after the whole computation succeeded.

use std::path::Path;

use volterra_core::amplitude::{solve_minimax, stabilization_probe, MinimaxProblem};
use volterra_core::control::{open_loop_solve, regulate, FeedbackLaw, RegulationProblem};
use volterra_core::grid::{Placement, SampledSignal, SmoothFn, TimeGrid};
use volterra_core::identification::{
    collect_order2, collect_order3, identify_cubic_kernels, identify_pi_cubic, identify_pi_quadratic,
    identify_quadratic_kernels, ResponseTable, ScalarSystem,
};
use volterra_core::io::{self, NamedFile};
use volterra_core::lambert::{w, LambertBranch};
use volterra_core::polyeq::{
    blowup_simple, bounds_from_kernels, invert_quadratic_const, invert_quadratic_linear_kernel, linear_kernel_blowup,
    majorant_blowup, solve_numeric, MajorantSpec, PolyEquation, Rule,
};
use volterra_core::reference::{hx_response, ref_response, RefModel};
use volterra_core::signals::{build_signal, validate_amplitudes, TestFamilySpec};
use volterra_core::simulation::{simulate as simulate_model, VectorQuadraticModel, VolterraModel};
use volterra_core::suite::{disturbance_scenarios, hx_surrogate};

use crate::config::{
    ControlMode, Equation, LawName, ModelMode, ModelSource, Rhs, RuleName, RunConfig, Scenario, SolveMethod,
};
use crate::error::{CliError, Context};

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<NamedFile>,
    pub log: Vec<String>,
}

impl Outcome {
    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn say(&mut self, line: impl Into<String>) {
        self.log.push(line.into());
    }
}

fn csv_bytes(header: &[&str], cols: &[&[f64]]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    io::write_columns(&mut buf, header, cols).ctx("csv")?;
    Ok(buf)
}

fn signal_bytes(s: &SampledSignal) -> Result<Vec<u8>, CliError> {
    io::signal_bytes(s).ctx("csv")
}

/// Reads a signal file and checks it lies on the run grid.
fn read_on_grid(path: &Path, grid: &TimeGrid, placement: Placement) -> Result<SampledSignal, CliError> {
    let s = io::read_signal_file(path).ctx(&format!("reading {}", path.display()))?;
    if s.placement() != placement {
        return Err(CliError::Config(format!(
            "{}: expected {placement} samples, got {}",
            path.display(),
            s.placement()
        )));
    }
    grid.check_same(&s.grid())
        .map_err(|e| CliError::Config(format!("{}: {e} (run grid from [grid] / --h / --n)", path.display())))?;
    Ok(s)
}

pub fn lambert(branch: i32, ys: &[f64]) -> Result<Outcome, CliError> {
    let b = LambertBranch::from_index(branch).ctx("lambert")?;
    let mut out = Outcome::default();
    let mut ws = Vec::with_capacity(ys.len());
    let mut res = Vec::with_capacity(ys.len());
    for &y in ys {
        let z = w(b, y).ctx(&format!("lambert at y = {y}"))?;
        out.say(format!("W{branch}({y}) = {z}"));
        ws.push(z);
        res.push(z * z.exp() - y);
    }
    out.file("lambert.csv", csv_bytes(&["y", "w", "residual"], &[ys, &ws, &res])?);
    Ok(out)
}

pub fn signals(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.time_grid()?;
    let s = &cfg.signals;
    let spec = TestFamilySpec::new(s.m, s.amplitudes.clone(), s.omegas.clone()).ctx("[signals]")?;
    let mut out = Outcome::default();
    let check = validate_amplitudes(&spec, cfg.model.mode == ModelMode::Pi);
    out.say(format!("amplitude constraint: {}", check.message));
    for k in 0..spec.m() {
        let sig = build_signal(&spec, k, grid).ctx("signals")?;
        out.file(&format!("signal_{k}.csv"), signal_bytes(&sig)?);
    }
    out.say(format!("{} signals on h = {}, n = {}", spec.m(), grid.h(), grid.n()));
    Ok(out)
}

fn reference_model(order: u32) -> Result<RefModel, CliError> {
    if order == 0 {
        Ok(RefModel::infinite())
    } else {
        RefModel::finite(order).ctx("[model]")
    }
}

fn check_degree(d: usize, allowed: &[usize]) -> Result<(), CliError> {
    if allowed.contains(&d) {
        Ok(())
    } else {
        Err(CliError::Config(format!("[model] degree {d} not supported here (allowed: {allowed:?})")))
    }
}

pub fn identify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.time_grid()?;
    let m = &cfg.model;
    let mut out = Outcome::default();
    if m.source == ModelSource::Hx {
        check_degree(m.degree, &[2])?;
        let p = cfg.plant;
        let model = hx_surrogate(&p, grid, m.amplitude_fraction).ctx("identify plant")?;
        out.files.extend(io::vector_model_files(&model, &grid).ctx("csv")?);
        out.say(format!(
            "plant surrogate identified at dD = {} and dQ = {} (h = {}, n = {})",
            m.amplitude_fraction * p.d0,
            m.amplitude_fraction * p.q0,
            grid.h(),
            grid.n()
        ));
        return Ok(out);
    }
    check_degree(m.degree, &[2, 3])?;
    let table: ResponseTable = match m.source {
        ModelSource::Files => {
            let path = m
                .responses
                .as_ref()
                .ok_or_else(|| CliError::Config("[model] responses is required with source = \"files\"".into()))?;
            let f = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            io::read_response_table(f, grid, m.degree).ctx(&format!("reading {}", path.display()))?
        }
        _ => {
            let sys = reference_model(m.reference_order)?;
            let t = collect(&sys, grid, m.degree, &m.amplitudes)?;
            out.file("responses.csv", io::response_table_bytes(&t).ctx("csv")?);
            t
        }
    };
    match (m.mode, m.degree) {
        (ModelMode::Kernels, 2) => {
            let ks = identify_quadratic_kernels(&table).ctx("identify")?;
            out.files.extend(io::kernel_files(&ks, &grid).ctx("csv")?);
        }
        (ModelMode::Kernels, _) => {
            let ks = identify_cubic_kernels(&table).ctx("identify")?;
            out.files.extend(io::kernel_files(&ks, &grid).ctx("csv")?);
        }
        (ModelMode::Pi, 2) => {
            let w = identify_pi_quadratic(&table).ctx("identify")?;
            out.files.extend(io::weight_files(&w).ctx("csv")?);
        }
        (ModelMode::Pi, _) => {
            let w = identify_pi_cubic(&table).ctx("identify")?;
            out.files.extend(io::weight_files(&w).ctx("csv")?);
        }
    }
    out.say(format!(
        "degree-{} {} identified from amplitudes {:?} (h = {}, n = {})",
        m.degree,
        if m.mode == ModelMode::Pi { "weights" } else { "kernels" },
        table.amplitudes(),
        grid.h(),
        grid.n()
    ));
    Ok(out)
}

fn collect(sys: &dyn ScalarSystem, grid: TimeGrid, degree: usize, amps: &[f64]) -> Result<ResponseTable, CliError> {
    if amps.len() != degree {
        return Err(CliError::Config(format!(
            "[model] degree {degree} needs {degree} amplitudes, got {}",
            amps.len()
        )));
    }
    let t = if degree == 2 { collect_order2(sys, grid, amps) } else { collect_order3(sys, grid, amps) };
    t.ctx("collect responses")
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.time_grid()?;
    let s = &cfg.signals;
    let x = match &s.input {
        Some(p) => read_on_grid(p, &grid, Placement::Midpoints)?,
        None => SampledSignal::midpoints(grid, vec![s.step; grid.n()]).ctx("input")?,
    };
    let m = &cfg.model;
    let mut out = Outcome::default();
    let y = match m.source {
        ModelSource::Reference => {
            let model = reference_model(m.reference_order)?;
            let y = ref_response(&model, &x).ctx("simulate reference")?;
            if s.input.is_none() {
                let dev = grid
                    .nodes()
                    .iter()
                    .zip(y.values())
                    .map(|(t, v)| (v - model.of_theta(s.step * t)).abs())
                    .fold(0.0, f64::max);
                out.say(format!("step {}: max deviation from the closed form {dev:.3e}", s.step));
            }
            y
        }
        ModelSource::Hx => {
            let dq = match &s.input2 {
                Some(p) => read_on_grid(p, &grid, Placement::Midpoints)?,
                None => SampledSignal::zeros(grid, Placement::Midpoints),
            };
            hx_response(&cfg.plant, &x, &dq).ctx("simulate plant")?
        }
        ModelSource::Files => {
            check_degree(m.degree, &[1, 2, 3])?;
            let model = match m.mode {
                ModelMode::Kernels => {
                    let dir = m
                        .kernel_dir
                        .as_ref()
                        .ok_or_else(|| CliError::Config("[model] kernel_dir is required".into()))?;
                    VolterraModel::midpoint(io::read_kernels(dir, m.degree).ctx("reading kernels")?)
                }
                ModelMode::Pi => {
                    let dir = m
                        .weights_dir
                        .as_ref()
                        .ok_or_else(|| CliError::Config("[model] weights_dir is required".into()))?;
                    let w = io::read_weights(dir, m.degree).ctx("reading weights")?;
                    if w.n() != grid.n() {
                        return Err(CliError::Config(format!(
                            "weights cover {} cells, grid has {}",
                            w.n(),
                            grid.n()
                        )));
                    }
                    VolterraModel::product_integration(w)
                }
            };
            simulate_model(&model, &x).ctx("simulate")?
        }
    };
    out.say(format!("response: {} nodes, y(T) = {}", y.values().len(), y.values()[grid.n()]));
    out.file("response.csv", signal_bytes(&y)?);
    Ok(out)
}

pub fn optimize(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let o = &cfg.optimize;
    let problem = MinimaxProblem::by_name(&o.problem, o.b, o.t).ctx("[optimize]")?;
    let sol = solve_minimax(&problem, o.tol).ctx("optimize")?;
    let mut out = Outcome::default();
    let scaled: Vec<String> = sol.full_amplitudes.iter().map(|a| format!("{:.4}", a / o.b)).collect();
    let norm = (o.b * o.t).powi(problem.degree);
    out.say(format!("problem {}: amplitudes = ({})·B", o.problem, scaled.join(", ")));
    out.say(format!(
        "minimax value = {:.6e} = {:.6}·B^{d}T^{d}",
        sol.value,
        sol.value / norm,
        d = problem.degree
    ));
    if o.problem == "3sq" {
        out.say(format!("reference: 0.866·B and B³T³/24 = {:.6e}", o.b.powi(3) * o.t.powi(3) / 24.0));
    }
    for p in &sol.maximizers {
        let c: Vec<String> = p.iter().map(|v| format!("{v:.4}")).collect();
        out.say(format!("worst case at ({})", c.join(", ")));
    }
    let idx: Vec<f64> = (0..sol.full_amplitudes.len()).map(|k| k as f64).collect();
    out.file("optimize.csv", csv_bytes(&["index", "amplitude"], &[&idx, &sol.full_amplitudes])?);
    if !o.stabilization_orders.is_empty() {
        let probe = stabilization_probe(o.stabilization_orders.iter().copied(), o.b, o.t, o.tol).ctx("stabilization")?;
        let (n, a): (Vec<f64>, Vec<f64>) = probe.iter().map(|(n, a)| (*n as f64, *a)).unzip();
        for (n, a) in &probe {
            out.say(format!("stabilization N = {n}: alpha* = {a:.4}"));
        }
        out.file("stabilization.csv", csv_bytes(&["order", "alpha"], &[&n, &a])?);
    }
    Ok(out)
}

fn rhs(cfg: &RunConfig, grid: &TimeGrid) -> Result<SmoothFn, CliError> {
    let f = cfg.solve.f;
    Ok(match cfg.solve.rhs {
        Rhs::Linear => SmoothFn::new(move |t| f * t, move |_| f),
        Rhs::ExpM1 => SmoothFn::new(move |t| f * t.exp_m1(), move |t| f * t.exp()),
        Rhs::TExp => SmoothFn::new(move |t| f * t * t.exp(), move |t| f * (1.0 + t) * t.exp()),
        Rhs::File => {
            let p = cfg
                .solve
                .rhs_file
                .as_ref()
                .ok_or_else(|| CliError::Config("[solve] rhs_file is required with rhs = \"file\"".into()))?;
            SmoothFn::from_nodes(&read_on_grid(p, grid, Placement::Nodes)?).ctx("rhs")?
        }
    })
}

fn equation(cfg: &RunConfig, grid: &TimeGrid) -> Result<PolyEquation, CliError> {
    let s = &cfg.solve;
    match s.equation {
        Equation::QuadraticConst => PolyEquation::quadratic_const(s.lambda, rhs(cfg, grid)?).ctx("[solve]"),
        Equation::LinearKernel => {
            if s.rhs != Rhs::Linear {
                return Err(CliError::Config("[solve] linear_kernel needs rhs = \"linear\"".into()));
            }
            PolyEquation::linear_kernel(s.l1, s.lambda, s.f).ctx("[solve]")
        }
    }
}

pub fn solve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.time_grid()?;
    let s = &cfg.solve;
    let mut out = Outcome::default();
    let x = match s.method {
        SolveMethod::Numeric => {
            let rule = match s.rule {
                RuleName::Midpoint => Rule::Midpoint,
                RuleName::Right => Rule::RightRectangle,
            };
            solve_numeric(&equation(cfg, &grid)?, grid, rule).ctx("solve")?
        }
        SolveMethod::Analytic => match s.equation {
            Equation::QuadraticConst => {
                invert_quadratic_const(s.lambda, &rhs(cfg, &grid)?, grid, Placement::Nodes).ctx("solve")?
            }
            Equation::LinearKernel => {
                let vals = grid
                    .nodes()
                    .iter()
                    .map(|&t| invert_quadratic_linear_kernel(s.l1, s.lambda, s.f, t))
                    .collect::<volterra_core::Result<Vec<_>>>()
                    .ctx("solve")?;
                SampledSignal::nodes(grid, vals).ctx("solve")?
            }
        },
    };
    out.say(format!("solution on [0, {}]: max |x| = {}", grid.t_end(), x.max_abs()));
    out.file("solution.csv", signal_bytes(&x)?);
    Ok(out)
}

pub fn blowup(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.time_grid()?;
    let s = &cfg.solve;
    let mut out = Outcome::default();
    let mut names = Vec::new();
    let mut values = Vec::new();
    let mut record = |out: &mut Outcome, name: &str, v: Option<f64>| {
        match v {
            Some(t) => out.say(format!("{name}: T* = {t:.10}")),
            None => out.say(format!("{name}: no blow-up within the horizon")),
        }
        names.push(name.to_string());
        values.push(v.unwrap_or(f64::INFINITY));
    };
    let spec = match s.equation {
        Equation::QuadraticConst => {
            let f = s.f;
            let simple = match s.rhs {
                Rhs::Linear => blowup_simple(s.lambda, move |_| f.abs(), s.horizon),
                Rhs::ExpM1 => blowup_simple(s.lambda, move |t| f.abs() * t.exp(), s.horizon),
                Rhs::TExp => blowup_simple(s.lambda, move |t| f.abs() * (1.0 + t) * t.exp(), s.horizon),
                Rhs::File => Ok(None),
            }
            .ctx("blowup")?;
            if s.rhs != Rhs::File {
                record(&mut out, "simple", simple);
            }
            bounds_from_kernels(&equation(cfg, &grid)?, grid).ctx("bounds")?
        }
        Equation::LinearKernel => {
            let t = linear_kernel_blowup(s.l1, s.lambda, s.f).ctx("blowup")?;
            record(&mut out, "closed_form", Some(t));
            MajorantSpec::constant(s.f.abs(), &[s.l1.abs(), 0.0], &[s.lambda.abs()]).ctx("majorant")?
        }
    };
    let sol = majorant_blowup(&spec, s.horizon).ctx("majorant")?;
    record(&mut out, "majorant", sol.blowup);
    let end = sol.blowup.map_or(s.horizon, |t| 0.999 * t);
    let ts: Vec<f64> = (0..=200).map(|k| end * k as f64 / 200.0).collect();
    let psi: Vec<f64> = ts.iter().map(|&t| sol.psi_at(t).unwrap_or(f64::NAN)).collect();
    out.file("psi.csv", csv_bytes(&["t", "psi"], &[&ts, &psi])?);
    let mut buf = Vec::new();
    io::write_rows(
        &mut buf,
        &["estimate", "t_star"],
        names.iter().zip(&values).map(|(n, v)| vec![n.clone(), format!("{v}")]),
    )
    .ctx("csv")?;
    out.file("blowup.csv", buf);
    Ok(out)
}

pub fn control(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.time_grid()?;
    let c = &cfg.control;
    let p = cfg.plant;
    let model: VectorQuadraticModel = match c.source {
        ModelSource::Hx => hx_surrogate(&p, grid, cfg.model.amplitude_fraction).ctx("identify plant")?,
        ModelSource::Files => {
            let dir = c
                .model_dir
                .as_ref()
                .ok_or_else(|| CliError::Config("[control] model_dir is required with source = \"files\"".into()))?;
            io::read_vector_model(dir, 2).ctx("reading model")?
        }
        ModelSource::Reference => {
            return Err(CliError::Config("[control] source must be \"hx\" or \"files\"".into()));
        }
    };
    let disturbances: Vec<SampledSignal> = match c.scenario {
        Scenario::File => {
            if c.disturbance_files.len() + 1 != model.channels() {
                return Err(CliError::Config(format!(
                    "[control] model has {} channels, expected {} disturbance files",
                    model.channels(),
                    model.channels() - 1
                )));
            }
            c.disturbance_files
                .iter()
                .map(|f| read_on_grid(f, &grid, Placement::Midpoints))
                .collect::<Result<_, _>>()?
        }
        built_in => {
            let name = match built_in {
                Scenario::Step => "step",
                Scenario::Ramp => "ramp",
                _ => "smooth",
            };
            let shape = disturbance_scenarios()
                .into_iter()
                .find(|(n, _)| *n == name)
                .map(|(_, f)| f)
                .expect("built-in scenario");
            let amp = c.disturbance_fraction * p.q0;
            vec![SampledSignal::sample_midpoints(grid, move |t| amp * shape(t)).ctx("disturbance")?]
        }
    };
    let mut out = Outcome::default();
    match c.mode {
        ControlMode::Regulate => {
            let law = match c.law {
                LawName::Incremental => FeedbackLaw::Incremental,
                LawName::Differenced => FeedbackLaw::Differenced,
            };
            let problem = RegulationProblem::new(model, c.setpoint, disturbances).ctx("[control]")?.with_law(law);
            let r = regulate(&problem).ctx("regulate")?;
            out.file("control.csv", signal_bytes(&r.control)?);
            out.file("output.csv", signal_bytes(&r.output)?);
            out.file("eps.csv", signal_bytes(&r.error)?);
            out.say(format!("terminal miscoordination eps(T) = {:.6e}", r.terminal_error()));
            out.say(format!("max |eps| = {:.6e}, max |u| = {:.6e}", r.error.max_abs(), r.control.max_abs()));
            out.say("controllability: no loss");
        }
        ControlMode::OpenLoop => {
            let path = c
                .desired_file
                .as_ref()
                .ok_or_else(|| CliError::Config("[control] desired_file is required in open_loop mode".into()))?;
            let desired = read_on_grid(path, &grid, Placement::Nodes)?;
            let u = open_loop_solve(&model, &desired, &disturbances).ctx("open-loop solve")?;
            out.say(format!("open-loop control: max |u| = {:.6e}", u.max_abs()));
            out.file("control.csv", signal_bytes(&u)?);
        }
    }
    Ok(out)
}
