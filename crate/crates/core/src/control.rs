//! Delayed-feedback regulation and open-loop input recovery for vector
//! quadratic models. Channel 0 is the control; channels 1.. are known
//! disturbances.

use crate::error::{Error, Result};
use crate::grid::{Placement, SampledSignal, TimeGrid};
use crate::polyeq::nearest_root;
use crate::simulation::{VectorQuadraticModel, VectorWeights};

/// How the loop turns the miscoordination ε into the model-output target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackLaw {
    /// G_i = G_{i−1} + ε_i: the undelayed control response accumulates the error.
    #[default]
    Incremental,
    /// G_i = ε_i − ε_{i−1}. Unstable under the one-step delay; kept for comparison.
    Differenced,
}

#[derive(Debug, Clone)]
pub struct RegulationProblem {
    pub model: VectorQuadraticModel,
    pub setpoint: f64,
    /// Midpoint samples of channels 1..p, all on the control grid.
    pub disturbances: Vec<SampledSignal>,
    pub law: FeedbackLaw,
}

impl RegulationProblem {
    pub fn new(model: VectorQuadraticModel, setpoint: f64, disturbances: Vec<SampledSignal>) -> Result<Self> {
        let p = Self {
            model,
            setpoint,
            disturbances,
            law: FeedbackLaw::default(),
        };
        p.grid()?;
        Ok(p)
    }

    pub fn with_law(mut self, law: FeedbackLaw) -> Self {
        self.law = law;
        self
    }

    /// Shared grid of the disturbances; the delay is one step of it.
    pub fn grid(&self) -> Result<TimeGrid> {
        check_disturbances(&self.model, &self.disturbances)
    }
}

fn check_disturbances(model: &VectorQuadraticModel, d: &[SampledSignal]) -> Result<TimeGrid> {
    if d.len() + 1 != model.channels() {
        return Err(Error::Parameter(format!(
            "model has {} channels, expected {} disturbances, got {}",
            model.channels(),
            model.channels() - 1,
            d.len()
        )));
    }
    let grid = d[0].grid();
    for s in d {
        s.expect(Placement::Midpoints)?;
        grid.check_same(&s.grid())?;
        if s.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("disturbance samples must be finite".into()));
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone)]
pub struct RegulationResult {
    /// Computed control u at midpoints.
    pub control: SampledSignal,
    /// Channel-0 input actually applied: u delayed by one step.
    pub applied: SampledSignal,
    /// Closed-loop model output at nodes.
    pub output: SampledSignal,
    /// ε = y* − y at nodes.
    pub error: SampledSignal,
    /// max |u_{c+1} − u_c|.
    pub max_step_change: f64,
}

impl RegulationResult {
    pub fn terminal_error(&self) -> f64 {
        *self.error.values().last().unwrap_or(&0.0)
    }
}

/// Per-step quadratic a·v² + b·v + r for the newest control cell v = u[i−1]
/// entering the undelayed model output at node i.
struct Step {
    a: f64,
    b: f64,
    r: f64,
}

fn step_quadratic(w: &VectorWeights, cells: &mut [Vec<f64>], i: usize) -> Step {
    let slot = i - 1;
    let saved = cells[0][slot];
    let eval = |cells: &mut [Vec<f64>], v: f64| {
        cells[0][slot] = v;
        let refs: Vec<&[f64]> = cells.iter().map(|c| c.as_slice()).collect();
        w.node_output(&refs, i)
    };
    let r = eval(cells, 0.0);
    let a = w.channel(0).l.as_ref().map_or(0.0, |l| l.get(0, 0));
    // b from one evaluation: G(1) = a + b + r.
    let b = eval(cells, 1.0) - a - r;
    cells[0][slot] = saved;
    Step { a, b, r }
}

fn solve_step(s: &Step, target: f64, previous: Option<f64>, i: usize, h: f64) -> Result<f64> {
    let c = target - s.r;
    let guess = match previous {
        Some(u) => u,
        None if s.b != 0.0 => c / s.b,
        None => 0.0,
    };
    nearest_root(s.a, s.b, c, guess).ok_or(Error::ControllabilityLoss { step: i, t: i as f64 * h })
}

/// Closed loop with a one-step input delay: u(ξ) = 0 and ε(ξ) = 0 on [−h, 0].
pub fn regulate(problem: &RegulationProblem) -> Result<RegulationResult> {
    let grid = problem.grid()?;
    let (n, h) = (grid.n(), grid.h());
    let w = problem.model.weights_on(&grid)?;
    let a00 = w.channel(0).m.first().copied().unwrap_or(0.0);
    if a00 == 0.0 {
        return Err(Error::Parameter("control channel has K1(0) = 0".into()));
    }
    let mut u = vec![0.0; n];
    // Delayed layout: applied[c] = u[c − 1].
    let mut applied: Vec<Vec<f64>> = std::iter::once(vec![0.0; n])
        .chain(problem.disturbances.iter().map(|d| d.values().to_vec()))
        .collect();
    // Undelayed layout used to form the quadratic.
    let mut direct = applied.clone();
    let mut y = vec![0.0; n + 1];
    let mut eps = vec![0.0; n + 1];
    eps[0] = problem.setpoint;
    let mut g_prev = 0.0;
    let mut prev: Option<f64> = None;
    for i in 1..=n {
        let refs: Vec<&[f64]> = applied.iter().map(|c| c.as_slice()).collect();
        y[i] = w.node_output(&refs, i);
        eps[i] = problem.setpoint - y[i];
        let target = match problem.law {
            FeedbackLaw::Incremental => g_prev + eps[i],
            FeedbackLaw::Differenced => {
                let before = if i == 1 { 0.0 } else { eps[i - 1] };
                eps[i] - before
            }
        };
        let s = step_quadratic(&w, &mut direct, i);
        let v = solve_step(&s, target, prev, i, h)?;
        if !v.is_finite() {
            return Err(Error::ControllabilityLoss { step: i, t: i as f64 * h });
        }
        u[i - 1] = v;
        direct[0][i - 1] = v;
        if i < n {
            applied[0][i] = v;
        }
        g_prev = target;
        prev = Some(v);
    }
    let max_step_change = u.windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max);
    Ok(RegulationResult {
        control: SampledSignal::midpoints(grid, u)?,
        applied: SampledSignal::midpoints(grid, applied.swap_remove(0))?,
        output: SampledSignal::nodes(grid, y)?,
        error: SampledSignal::nodes(grid, eps)?,
        max_step_change,
    })
}

/// Input u with model(u, disturbances)(ih) = desired(ih), no feedback or delay.
pub fn open_loop_solve(
    model: &VectorQuadraticModel,
    desired: &SampledSignal,
    disturbances: &[SampledSignal],
) -> Result<SampledSignal> {
    desired.expect(Placement::Nodes)?;
    let grid = check_disturbances(model, disturbances)?;
    grid.check_same(&desired.grid())?;
    let (n, h) = (grid.n(), grid.h());
    let w = model.weights_on(&grid)?;
    let mut cells: Vec<Vec<f64>> = std::iter::once(vec![0.0; n])
        .chain(disturbances.iter().map(|d| d.values().to_vec()))
        .collect();
    let yd = desired.values();
    let mut prev = None;
    for i in 1..=n {
        let s = step_quadratic(&w, &mut cells, i);
        let v = solve_step(&s, yd[i], prev, i, h)?;
        cells[0][i - 1] = v;
        prev = Some(v);
    }
    SampledSignal::midpoints(grid, cells.swap_remove(0))
}

/// Outcome of a controllability scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    /// Largest amplitude found to succeed.
    pub ok: f64,
    /// Smallest amplitude found to fail.
    pub failed: f64,
}

/// Scans `step, 2·step, …` up to `max` for the first amplitude where `run`
/// reports a controllability loss, then bisects to `tol`. `None` if every
/// scanned amplitude succeeds. Errors other than controllability loss propagate.
pub fn controllability_threshold(
    run: impl Fn(f64) -> Result<()>,
    step: f64,
    max: f64,
    tol: f64,
) -> Result<Option<Threshold>> {
    if !(step > 0.0 && max >= step && tol > 0.0) {
        return Err(Error::Parameter("need 0 < step <= max and tol > 0".into()));
    }
    let fails = |a: f64| -> Result<bool> {
        match run(a) {
            Ok(()) => Ok(false),
            Err(Error::ControllabilityLoss { .. }) => Ok(true),
            Err(e) => Err(e),
        }
    };
    let mut ok = 0.0;
    let mut k = 1;
    let mut failed = loop {
        let a = (k as f64 * step).min(max);
        if fails(a)? {
            break a;
        }
        ok = a;
        if a >= max {
            return Ok(None);
        }
        k += 1;
    };
    while failed - ok > tol {
        let mid = 0.5 * (ok + failed);
        if fails(mid)? {
            failed = mid;
        } else {
            ok = mid;
        }
    }
    Ok(Some(Threshold { ok, failed }))
}
