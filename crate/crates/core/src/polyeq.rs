//! Polynomial Volterra equations of the first kind: closed-form inversions,
//! blow-up estimates, majorant Cauchy problems and a marching solver.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Placement, SampledSignal, SmoothFn, TimeGrid};
use crate::lambert::{w0, BRANCH_POINT};

pub type GeneralKernel1 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type GeneralKernel2 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// ∫K1(t,s)x(s)ds + ∫∫K2(t,s1,s2)x(s1)x(s2)ds1ds2 = y(t), degree 1 or 2.
#[derive(Clone)]
pub struct PolyEquation {
    k1: GeneralKernel1,
    k2: Option<GeneralKernel2>,
    rhs: SmoothFn,
}

impl fmt::Debug for PolyEquation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PolyEquation(degree {})", self.degree())
    }
}

impl PolyEquation {
    pub fn new(
        k1: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        k2: Option<GeneralKernel2>,
        rhs: SmoothFn,
    ) -> Result<Self> {
        if rhs.value(0.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "right-hand side must vanish at t = 0, got {}",
                rhs.value(0.0)
            )));
        }
        if k1(0.0, 0.0) == 0.0 {
            return Err(Error::Singular("K1(0, 0) = 0".into()));
        }
        Ok(Self {
            k1: Arc::new(k1),
            k2,
            rhs,
        })
    }

    /// ∫x + λ(∫x)² = y.
    pub fn quadratic_const(lambda: f64, rhs: SmoothFn) -> Result<Self> {
        let k2: Option<GeneralKernel2> = if lambda == 0.0 {
            None
        } else {
            Some(Arc::new(move |_, _, _| lambda))
        };
        Self::new(|_, _| 1.0, k2, rhs)
    }

    /// ∫(1 − L1(t−s))x − λ(∫x)² = F·t.
    pub fn linear_kernel(l1: f64, lambda: f64, f: f64) -> Result<Self> {
        Self::new(
            move |t, s| 1.0 - l1 * (t - s),
            Some(Arc::new(move |_, _, _| -lambda)),
            SmoothFn::new(move |t| f * t, move |_| f),
        )
    }

    pub fn degree(&self) -> usize {
        if self.k2.is_some() {
            2
        } else {
            1
        }
    }

    pub fn k1(&self, t: f64, s: f64) -> f64 {
        (self.k1)(t, s)
    }

    pub fn k2(&self, t: f64, s1: f64, s2: f64) -> f64 {
        self.k2.as_ref().map_or(0.0, |k| k(t, s1, s2))
    }

    pub fn rhs(&self) -> &SmoothFn {
        &self.rhs
    }
}

fn sample_times(grid: TimeGrid, placement: Placement) -> Vec<f64> {
    match placement {
        Placement::Midpoints => grid.mids(),
        Placement::Nodes => grid.nodes(),
    }
}

/// x = y′/√(1 + 4λy) for ∫x + λ(∫x)² = y; λ = 0 gives x = y′.
pub fn invert_quadratic_const(lambda: f64, y: &SmoothFn, grid: TimeGrid, placement: Placement) -> Result<SampledSignal> {
    if !lambda.is_finite() {
        return Err(Error::Parameter("lambda must be finite".into()));
    }
    if y.value(0.0).abs() > 1e-12 {
        return Err(Error::Domain("right-hand side must vanish at t = 0".into()));
    }
    let times = sample_times(grid, placement);
    if lambda != 0.0 {
        const SCAN: usize = 4096;
        let scan = (0..=SCAN).map(|k| grid.t_end() * k as f64 / SCAN as f64);
        if let Some(t) = times.iter().copied().chain(scan).find(|&t| 1.0 + 4.0 * lambda * y.value(t) <= 0.0) {
            return Err(Error::ExistenceLoss { t });
        }
    }
    let vals = times
        .iter()
        .map(|&t| y.derivative(t) / (1.0 + 4.0 * lambda * y.value(t)).sqrt())
        .collect();
    SampledSignal::new(grid, placement, vals)
}

/// Root of t·F(t) = 1/(4|λ|) below `cap`, or `None`.
pub fn blowup_simple(lambda: f64, f: impl Fn(f64) -> f64, cap: f64) -> Result<Option<f64>> {
    if !(cap.is_finite() && cap > 0.0) {
        return Err(Error::Parameter(format!("horizon cap must be positive, got {cap}")));
    }
    if lambda == 0.0 {
        return Ok(None);
    }
    let target = 1.0 / (4.0 * lambda.abs());
    let g = |t: f64| t * f(t) - target;
    let (mut lo, mut hi) = (0.0, cap.min(1.0));
    while g(hi) < 0.0 {
        if hi >= cap {
            return Ok(None);
        }
        lo = hi;
        hi = (2.0 * hi).min(cap);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

fn check_linear_kernel_params(l1: f64, lambda: f64, f: f64) -> Result<()> {
    if !(l1 > 0.0 && lambda > 0.0 && f > 0.0) || ![l1, lambda, f].iter().all(|v| v.is_finite()) {
        return Err(Error::Parameter("L1, lambda and F must be positive".into()));
    }
    Ok(())
}

/// Existence horizon (A/L1²)·ln(1 + L1/(2λF)) − 1/L1 with A = L1 + 2λF.
pub fn linear_kernel_blowup(l1: f64, lambda: f64, f: f64) -> Result<f64> {
    check_linear_kernel_params(l1, lambda, f)?;
    let a = l1 + 2.0 * lambda * f;
    Ok(a / (l1 * l1) * (l1 / (2.0 * lambda * f)).ln_1p() - 1.0 / l1)
}

/// Continuous solution of ∫(1 − L1(t−s))x − λ(∫x)² = F·t at time t.
pub fn invert_quadratic_linear_kernel(l1: f64, lambda: f64, f: f64, t: f64) -> Result<f64> {
    check_linear_kernel_params(l1, lambda, f)?;
    if t < 0.0 {
        return Err(Error::Domain(format!("t must be nonnegative, got {t}")));
    }
    let a = l1 + 2.0 * lambda * f;
    let z = -(2.0 * lambda * f / a) * ((l1 * l1 * t - 2.0 * lambda * f) / a).exp();
    if z <= BRANCH_POINT {
        return Err(Error::ExistenceLoss { t });
    }
    let w = w0(z)?;
    Ok(-(l1 / (2.0 * lambda)) * w / (1.0 + w))
}

/// Quadrature rule of the marching solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rule {
    /// Unknowns at cell midpoints.
    #[default]
    Midpoint,
    /// Unknowns at right cell ends.
    RightRectangle,
}

/// Marches node by node, solving a scalar quadratic for the newest cell value.
/// Midpoint output is placed at midpoints; right-rectangle output at nodes,
/// with x(0) = y′(0)/K1(0,0) prepended.
pub fn solve_numeric(eq: &PolyEquation, grid: TimeGrid, rule: Rule) -> Result<SampledSignal> {
    let n = grid.n();
    let h = grid.h();
    let s: Vec<f64> = match rule {
        Rule::Midpoint => grid.mids(),
        Rule::RightRectangle => (1..=n).map(|c| grid.node(c)).collect(),
    };
    let x0 = eq.rhs.derivative(0.0) / eq.k1(0.0, 0.0);
    let mut u: Vec<f64> = Vec::with_capacity(n);
    for i in 1..=n {
        let t = grid.node(i);
        let j = i - 1;
        let mut c = eq.rhs.value(t);
        for (k, &uk) in u.iter().enumerate() {
            c -= h * eq.k1(t, s[k]) * uk;
        }
        let mut b = h * eq.k1(t, s[j]);
        let mut a = 0.0;
        if eq.k2.is_some() {
            a = h * h * eq.k2(t, s[j], s[j]);
            for (k, &uk) in u.iter().enumerate() {
                b += 2.0 * h * h * eq.k2(t, s[j], s[k]) * uk;
                let mut row = 0.0;
                for (l, &ul) in u.iter().enumerate() {
                    row += eq.k2(t, s[k], s[l]) * ul;
                }
                c -= h * h * row * uk;
            }
        }
        let target = u.last().copied().unwrap_or(x0);
        let root = nearest_root(a, b, c, target).ok_or(Error::SolvabilityLoss { node: i, t })?;
        u.push(root);
    }
    match rule {
        Rule::Midpoint => SampledSignal::midpoints(grid, u),
        Rule::RightRectangle => {
            let mut v = Vec::with_capacity(n + 1);
            v.push(x0);
            v.extend(u);
            SampledSignal::nodes(grid, v)
        }
    }
}

/// Real root of a·u² + b·u = c nearest to `target`; `None` if no real root.
pub(crate) fn nearest_root(a: f64, b: f64, c: f64, target: f64) -> Option<f64> {
    let lin = |b: f64| if b != 0.0 { Some(c / b) } else { None };
    if a == 0.0 || a.abs() <= 1e-14 * b.abs() {
        return lin(b).filter(|v| v.is_finite());
    }
    let disc = b * b + 4.0 * a * c;
    if disc < 0.0 || !disc.is_finite() {
        return None;
    }
    // Cancellation-free pair of roots of a·u² + b·u − c = 0.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = if q != 0.0 { (q / a, -c / q) } else { (0.0, 0.0) };
    Some(if (r1 - target).abs() <= (r2 - target).abs() { r1 } else { r2 })
}

/// (1/k)·e^{L1·T/k}.
pub fn stability_bound(k: f64, l1: f64, t: f64) -> Result<f64> {
    if !(k > 0.0) || !(l1 >= 0.0) || !(t >= 0.0) {
        return Err(Error::Parameter("need k > 0, L1 >= 0, T >= 0".into()));
    }
    Ok((l1 * t / k).exp() / k)
}

/// Scalar function of time used for the majorant data.
#[derive(Clone)]
pub struct Profile(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Profile")
    }
}

impl Profile {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c)
    }

    /// `values[i]` holds on ((i−1)h, ih], so each interval takes the running
    /// maximum up to its right end; beyond the last node the last value holds.
    pub fn stepwise(h: f64, values: Vec<f64>) -> Self {
        Self::new(move |t| {
            let i = ((t / h) - 1e-9).ceil().max(0.0) as usize;
            values[i.min(values.len() - 1)]
        })
    }

    pub fn at(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

/// Data of the majorant problem Θ′ = (F + Σ L_m Θ^m)/(1 − Σ m M_m Θ^{m−1}).
#[derive(Debug, Clone)]
pub struct MajorantSpec {
    pub f: Profile,
    /// L_1..L_N.
    pub l: Vec<Profile>,
    /// M_2..M_N.
    pub m: Vec<Profile>,
}

impl MajorantSpec {
    pub fn new(f: Profile, l: Vec<Profile>, m: Vec<Profile>) -> Result<Self> {
        if l.is_empty() || m.len() + 1 != l.len() {
            return Err(Error::Parameter(format!(
                "need N >= 1 with N L-profiles and N - 1 M-profiles, got {} and {}",
                l.len(),
                m.len()
            )));
        }
        Ok(Self { f, l, m })
    }

    pub fn constant(f: f64, l: &[f64], m: &[f64]) -> Result<Self> {
        Self::new(
            Profile::constant(f),
            l.iter().map(|&v| Profile::constant(v)).collect(),
            m.iter().map(|&v| Profile::constant(v)).collect(),
        )
    }

    pub fn degree(&self) -> usize {
        self.l.len()
    }

    fn numerator(&self, t: f64, th: f64) -> f64 {
        let mut p = th;
        let mut s = self.f.at(t);
        for l in &self.l {
            s += l.at(t) * p;
            p *= th;
        }
        s
    }

    /// 1 − Σ m M_m Θ^{m−1}.
    fn denominator(&self, t: f64, th: f64) -> f64 {
        let mut p = th;
        let mut s = 1.0;
        for (k, m) in self.m.iter().enumerate() {
            s -= (k + 2) as f64 * m.at(t) * p;
            p *= th;
        }
        s
    }

    fn rate(&self, t: f64, th: f64) -> f64 {
        self.numerator(t, th) / self.denominator(t, th)
    }
}

/// Trajectory of the majorant problem.
#[derive(Debug, Clone)]
pub struct MajorantSolution {
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    /// ψ = Θ′ at the recorded times.
    pub psi: Vec<f64>,
    /// Blow-up time, or `None` if the horizon was reached first.
    pub blowup: Option<f64>,
    spec: MajorantSpec,
}

impl MajorantSolution {
    /// ψ(t) from Θ(t), obtained by one integrator step from the nearest
    /// earlier recorded point; `None` outside the integrated range.
    pub fn psi_at(&self, t: f64) -> Option<f64> {
        let last = *self.times.last()?;
        if t < 0.0 || t > last {
            return None;
        }
        let k = self.times.partition_point(|&s| s <= t).max(1) - 1;
        let (t0, th0) = (self.times[k], self.theta[k]);
        let g = |s: f64, th: f64| self.spec.rate(s, th);
        let (th, _) = dp_step(&g, t0, th0, t - t0);
        let psi = self.spec.rate(t, th);
        if psi.is_finite() {
            return Some(psi);
        }
        // Last segment ends at the blow-up point: interpolate Θ instead.
        let (t1, th1) = (self.times[k + 1], self.theta[k + 1]);
        let w = (t - t0) / (t1 - t0);
        Some(self.spec.rate(t, th0 * (1.0 - w) + th1 * w))
    }
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince 5(4) step: new value and error estimate.
fn dp_step(f: &impl Fn(f64, f64) -> f64, x: f64, y: f64, h: f64) -> (f64, f64) {
    let mut k = [0.0; 7];
    for i in 0..7 {
        let yi = y + h * (0..i).map(|j| DP_A[i][j] * k[j]).sum::<f64>();
        k[i] = f(x + DP_C[i] * h, yi);
    }
    let y5 = y + h * (0..7).map(|i| DP_B5[i] * k[i]).sum::<f64>();
    let y4 = y + h * (0..7).map(|i| DP_B4[i] * k[i]).sum::<f64>();
    (y5, (y5 - y4).abs())
}

const RTOL: f64 = 1e-10;
const ATOL: f64 = 1e-12;
const SWITCH: f64 = 1e-3;
const MAX_STEPS: usize = 1_000_000;

fn next_h(h: f64, err: f64, scale: f64) -> f64 {
    let ratio = if err == 0.0 { 5.0 } else { 0.9 * (scale / err).powf(0.2) };
    h * ratio.clamp(0.2, 5.0)
}

/// Integrates the majorant problem from Θ(0) = 0 up to the blow-up event or
/// `horizon`. Near the event the independent variable becomes Θ, and the event
/// (vanishing denominator) is located by bisection on the last step.
pub fn majorant_blowup(spec: &MajorantSpec, horizon: f64) -> Result<MajorantSolution> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
    }
    let mut sol = MajorantSolution {
        times: vec![0.0],
        theta: vec![0.0],
        psi: vec![spec.rate(0.0, 0.0)],
        blowup: None,
        spec: spec.clone(),
    };
    let g = |t: f64, th: f64| spec.rate(t, th);
    let (mut t, mut th) = (0.0, 0.0);
    let mut h = (horizon * 1e-4).min(1e-3);
    let mut steps = 0;
    // Phase 1: time as the independent variable.
    while spec.denominator(t, th) >= SWITCH {
        if t >= horizon {
            return Ok(sol);
        }
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::NonConvergence("majorant integration step limit".into()));
        }
        let step = h.min(horizon - t);
        let (y, err) = dp_step(&g, t, th, step);
        let scale = ATOL + RTOL * y.abs().max(th.abs());
        let bad = !y.is_finite() || spec.denominator(t + step, y) <= 0.0;
        if bad || err > scale {
            h = if bad { 0.25 * step } else { next_h(step, err, scale) };
            if h < 1e-15 * horizon.max(1.0) {
                return Err(Error::NonConvergence(format!("step underflow at t = {t}")));
            }
            continue;
        }
        t += step;
        th = y;
        sol.times.push(t);
        sol.theta.push(th);
        sol.psi.push(g(t, th));
        h = next_h(step, err, scale);
    }
    // Phase 2: Θ as the independent variable, dt/dΘ = 1/rate.
    let dt = |th: f64, t: f64| {
        let num = spec.numerator(t, th);
        if num <= 0.0 {
            f64::INFINITY
        } else {
            spec.denominator(t, th) / num
        }
    };
    let mut k = (th.abs() * 1e-4).max(1e-12);
    loop {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::NonConvergence("majorant integration step limit".into()));
        }
        let (tn, err) = dp_step(&dt, th, t, k);
        let scale = ATOL + RTOL * tn.abs();
        if !tn.is_finite() || err > scale {
            k = if tn.is_finite() { next_h(k, err, scale) } else { 0.25 * k };
            if k < 1e-300 {
                return Err(Error::NonConvergence(format!("step underflow at t = {t}")));
            }
            continue;
        }
        if spec.denominator(tn, th + k) <= 0.0 {
            let (mut lo, mut hi) = (0.0, k);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let (tm, _) = dp_step(&dt, th, t, mid);
                if spec.denominator(tm, th + mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let (te, _) = dp_step(&dt, th, t, hi);
            if te > horizon {
                return Ok(sol);
            }
            sol.blowup = Some(te);
            sol.times.push(te);
            sol.theta.push(th + hi);
            sol.psi.push(f64::INFINITY);
            return Ok(sol);
        }
        if tn > horizon {
            return Ok(sol);
        }
        t = tn;
        th += k;
        sol.times.push(t);
        sol.theta.push(th);
        sol.psi.push(g(t, th));
        k = next_h(k, err, scale);
    }
}

/// ψ₁ for N = 1 by quadrature: F(t) + L1(t)e^{∫L1}∫F e^{−∫L1}.
pub fn gronwall_psi(f: &Profile, l1: &Profile, t: f64) -> f64 {
    const STEPS: usize = 4000;
    if t <= 0.0 {
        return f.at(0.0);
    }
    let h = t / STEPS as f64;
    let mut int_l = 0.0;
    let mut inner = 0.0;
    // Trapezium on both running integrals.
    let mut prev_l = l1.at(0.0);
    let mut prev_g = f.at(0.0);
    for k in 1..=STEPS {
        let s = k as f64 * h;
        let ls = l1.at(s);
        int_l += 0.5 * h * (prev_l + ls);
        let gs = f.at(s) * (-int_l).exp();
        inner += 0.5 * h * (prev_g + gs);
        prev_l = ls;
        prev_g = gs;
    }
    f.at(t) + l1.at(t) * int_l.exp() * inner
}

/// Sampled majorant data for a degree-1 or -2 equation, normalized by K1(t,t).
/// All maxima are taken over grid nodes, so they are lower estimates of the
/// continuous maxima.
pub fn bounds_from_kernels(eq: &PolyEquation, grid: TimeGrid) -> Result<MajorantSpec> {
    let n = grid.n();
    let nodes = grid.nodes();
    let dt = |t: f64| 1e-6 * t.max(1.0);
    let diag: Vec<f64> = nodes.iter().map(|&t| eq.k1(t, t)).collect();
    if let Some(i) = diag.iter().position(|d| *d == 0.0 || !d.is_finite()) {
        return Err(Error::Singular(format!("K1(t,t) vanishes at t = {}", nodes[i])));
    }
    let deriv = |f: &dyn Fn(f64) -> f64, t: f64| {
        let d = dt(t);
        if t >= d {
            (f(t + d) - f(t - d)) / (2.0 * d)
        } else {
            (f(t + d) - f(t)) / d
        }
    };
    let running = |v: Vec<f64>| {
        let mut m = 0.0f64;
        v.into_iter()
            .map(|x| {
                m = m.max(x);
                m
            })
            .collect::<Vec<_>>()
    };
    let h = grid.h();
    let f: Vec<f64> = (0..=n)
        .map(|i| (eq.rhs.derivative(nodes[i]) / diag[i]).abs())
        .collect();
    let l1: Vec<f64> = (0..=n)
        .map(|i| {
            let t = nodes[i];
            (0..=i)
                .map(|j| deriv(&|tt| eq.k1(tt, nodes[j]), t).abs())
                .fold(0.0, f64::max)
                / diag[i].abs()
        })
        .collect();
    let mut l = vec![Profile::stepwise(h, running(l1))];
    let mut m = Vec::new();
    if eq.k2.is_some() {
        let l2: Vec<f64> = (0..=n)
            .map(|i| {
                let t = nodes[i];
                let mut best = 0.0f64;
                for a in 0..=i {
                    for b in 0..=a {
                        best = best.max(deriv(&|tt| eq.k2(tt, nodes[a], nodes[b]), t).abs());
                    }
                }
                best / diag[i].abs()
            })
            .collect();
        let m2: Vec<f64> = (0..=n)
            .map(|i| {
                let t = nodes[i];
                (0..=i).map(|j| eq.k2(t, t, nodes[j]).abs()).fold(0.0, f64::max) / diag[i].abs()
            })
            .collect();
        l.push(Profile::stepwise(h, running(l2)));
        m.push(Profile::stepwise(h, running(m2)));
    }
    MajorantSpec::new(Profile::stepwise(h, running(f)), l, m)
}

/// Same as [`bounds_from_kernels`] but returning the raw node values
/// (F, L_1.., M_2..) for reporting.
pub fn sampled_bounds(eq: &PolyEquation, grid: TimeGrid) -> Result<Vec<Vec<f64>>> {
    let spec = bounds_from_kernels(eq, grid)?;
    let nodes = grid.nodes();
    let mut out = vec![nodes.iter().map(|&t| spec.f.at(t)).collect::<Vec<_>>()];
    for p in spec.l.iter().chain(&spec.m) {
        out.push(nodes.iter().map(|&t| p.at(t)).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lambert::w0;
    use proptest::prelude::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn const_inversion_substitutes_back() {
        let g = TimeGrid::covering(1.0, 100).unwrap();
        let y = SmoothFn::new(|t| t, |_| 1.0);
        let x = invert_quadratic_const(1.0, &y, g, Placement::Nodes).unwrap();
        for (t, v) in g.nodes().iter().zip(x.values()) {
            assert!((v - 1.0 / (1.0 + 4.0 * t).sqrt()).abs() < 1e-15);
        }
        for t in [0.1, 0.5, 1.0] {
            let th = simpson(|s| 1.0 / (1.0 + 4.0 * s).sqrt(), 0.0, t, 2000);
            let back = th + th * th;
            assert!(((back - t) / t).abs() < 1e-8);
        }
        let z = invert_quadratic_const(1.0, &SmoothFn::new(|_| 0.0, |_| 0.0), g, Placement::Nodes).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let lin = invert_quadratic_const(0.0, &SmoothFn::new(|t| t * t, |t| 2.0 * t), g, Placement::Nodes).unwrap();
        assert!((lin.values()[100] - 2.0).abs() < 1e-15);
        match invert_quadratic_const(-1.0, &SmoothFn::new(|t| t, |_| 1.0), g, Placement::Nodes) {
            Err(Error::ExistenceLoss { t }) => assert!((t - 0.25).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn simple_blowup() {
        let t = blowup_simple(0.25, f64::exp, 10.0).unwrap().unwrap();
        assert!((t - 0.5671432904097838).abs() < 1e-8);
        assert!((t - w0(1.0).unwrap()).abs() < 1e-12);
        let lam = 0.1;
        let t = blowup_simple(lam, f64::exp, 10.0).unwrap().unwrap();
        assert!((t - w0(1.0 / (4.0 * lam)).unwrap()).abs() < 1e-10);
        let t = blowup_simple(-2.0, |_| 3.0, 10.0).unwrap().unwrap();
        assert!((t - 1.0 / 24.0).abs() < 1e-14);
        assert_eq!(blowup_simple(1e-6, |_| 1.0, 10.0).unwrap(), None);
        assert_eq!(blowup_simple(0.0, |_| 1.0, 10.0).unwrap(), None);
    }

    #[test]
    fn linear_kernel_formula() {
        let ts = linear_kernel_blowup(1.0, 0.5, 1.0).unwrap();
        assert!((ts - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        assert!((invert_quadratic_linear_kernel(1.0, 0.5, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((invert_quadratic_linear_kernel(2.0, 0.3, 0.7, 0.0).unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(
            invert_quadratic_linear_kernel(1.0, 0.5, 1.0, ts * 1.01),
            Err(Error::ExistenceLoss { .. })
        ));
        assert!(linear_kernel_blowup(0.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn linear_kernel_solution_satisfies_equation() {
        // Substitution into ∫(1 − L1(t−s))x − λ(∫x)² = F·t with L1 ≠ 1.
        let (l1, lam, f) = (1.7, 0.4, 0.8);
        let ts = linear_kernel_blowup(l1, lam, f).unwrap();
        let x = |s: f64| invert_quadratic_linear_kernel(l1, lam, f, s).unwrap();
        for frac in [0.2, 0.5, 0.9] {
            let t = frac * ts;
            let p = simpson(|s| (1.0 - l1 * (t - s)) * x(s), 0.0, t, 2000);
            let th = simpson(x, 0.0, t, 2000);
            let lhs = p - lam * th * th;
            assert!((lhs - f * t).abs() < 1e-6, "t = {t}: {lhs} vs {}", f * t);
        }
    }

    #[test]
    fn linear_kernel_matches_ode_event() {
        let (l1, lam, f) = (1.0, 0.5, 1.0);
        let spec = MajorantSpec::constant(f, &[l1, 0.0], &[lam]).unwrap();
        let sol = majorant_blowup(&spec, 10.0).unwrap();
        let ts = linear_kernel_blowup(l1, lam, f).unwrap();
        let tb = sol.blowup.unwrap();
        assert!(((tb - ts) / ts).abs() < 1e-6, "{tb} vs {ts}");
        for frac in [0.1, 0.5, 0.9] {
            let t = frac * ts;
            let exact = invert_quadratic_linear_kernel(l1, lam, f, t).unwrap();
            assert!((sol.psi_at(t).unwrap() - exact).abs() < 1e-6 * exact.max(1.0));
        }
    }

    #[test]
    fn constant_majorant_closed_form() {
        let (f, m2) = (1.3, 0.7);
        let spec = MajorantSpec::constant(f, &[0.0, 0.0], &[m2]).unwrap();
        let sol = majorant_blowup(&spec, 5.0).unwrap();
        let ts = 1.0 / (4.0 * m2 * f);
        assert!(((sol.blowup.unwrap() - ts) / ts).abs() < 1e-4);
        for frac in [0.2, 0.6, 0.95] {
            let t = frac * ts;
            let psi = f / (1.0 - 4.0 * m2 * f * t).sqrt();
            assert!(((sol.psi_at(t).unwrap() - psi) / psi).abs() < 1e-6);
        }
        let simple = blowup_simple(m2, |_| f, 5.0).unwrap().unwrap();
        assert!(((simple - sol.blowup.unwrap()) / simple).abs() < 0.01);
    }

    #[test]
    fn gronwall_case() {
        let (f, l1) = (0.8, 1.5);
        let spec = MajorantSpec::constant(f, &[l1], &[]).unwrap();
        let sol = majorant_blowup(&spec, 2.0).unwrap();
        assert_eq!(sol.blowup, None);
        for t in [0.5, 1.0, 2.0] {
            let exact = f * (l1 * t).exp();
            assert!(((sol.psi_at(t).unwrap() - exact) / exact).abs() < 1e-8);
            let q = gronwall_psi(&Profile::constant(f), &Profile::constant(l1), t);
            assert!(((q - exact) / exact).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_forcing_has_no_blowup() {
        let spec = MajorantSpec::constant(0.0, &[1.0, 1.0], &[1.0]).unwrap();
        let sol = majorant_blowup(&spec, 3.0).unwrap();
        assert_eq!(sol.blowup, None);
        assert!(sol.theta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stability_bound_values() {
        assert_eq!(stability_bound(1.0, 0.0, 5.0).unwrap(), 1.0);
        assert!((stability_bound(1.0, 1.0, 1.0).unwrap() - std::f64::consts::E).abs() < 1e-15);
        assert!(stability_bound(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn stability_bound_dominates_linear_inversion() {
        // K1 = 2 − (t − s): k = 1 on [0, 1], L1 = 1. Perturbation δy = ε sin(ωt).
        let g = TimeGrid::covering(1.0, 400).unwrap();
        let bound = stability_bound(1.0, 1.0, 1.0).unwrap();
        for w in [1.0, 5.0, 20.0] {
            let eps = 1e-3;
            let y = SmoothFn::new(move |t| eps * (w * t).sin(), move |t| eps * w * (w * t).cos());
            let eq = PolyEquation::new(|t, s| 2.0 - (t - s), None, y).unwrap();
            let x = solve_numeric(&eq, g, Rule::Midpoint).unwrap();
            let ratio = x.max_abs() / (eps * w);
            assert!(ratio <= bound, "ω = {w}: {ratio}");
        }
    }

    #[test]
    fn numeric_solver_converges_on_const_quadratic() {
        let err = |n: usize| {
            let g = TimeGrid::covering(1.0, n).unwrap();
            let eq = PolyEquation::quadratic_const(1.0, SmoothFn::new(|t| t, |_| 1.0)).unwrap();
            let u = solve_numeric(&eq, g, Rule::Midpoint).unwrap();
            g.mids()
                .iter()
                .zip(u.values())
                .map(|(t, v)| (v - 1.0 / (1.0 + 4.0 * t).sqrt()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(50), err(100), err(200));
        assert!(e2 < e1 && e3 < e2);
        assert!((e1 / e2).log2() >= 1.0 && (e2 / e3).log2() >= 1.0);
    }

    #[test]
    fn right_rectangle_rule_converges() {
        let err = |n: usize| {
            let g = TimeGrid::covering(1.0, n).unwrap();
            let eq = PolyEquation::quadratic_const(1.0, SmoothFn::new(|t| t, |_| 1.0)).unwrap();
            let u = solve_numeric(&eq, g, Rule::RightRectangle).unwrap();
            g.nodes()
                .iter()
                .zip(u.values())
                .map(|(t, v)| (v - 1.0 / (1.0 + 4.0 * t).sqrt()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(100), err(200));
        assert!((e1 / e2).log2() >= 0.9, "{e1} {e2}");
    }

    #[test]
    fn linear_equation_reduces_to_midpoint_scheme() {
        // K1 = 1 − (t − s), x ≡ 1 → y = t − t²/2.
        let err = |n: usize| {
            let g = TimeGrid::covering(2.0, n).unwrap();
            let eq = PolyEquation::new(|t, s| 1.0 - (t - s), None, SmoothFn::new(|t| t - t * t / 2.0, |t| 1.0 - t)).unwrap();
            let u = solve_numeric(&eq, g, Rule::Midpoint).unwrap();
            u.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
        };
        assert!(err(40) < 1e-12);
        let err2 = |n: usize| {
            let g = TimeGrid::covering(1.0, n).unwrap();
            let y = SmoothFn::new(|t| (t * t).sin(), |t| 2.0 * t * (t * t).cos());
            let eq = PolyEquation::new(|_, _| 1.0, None, y).unwrap();
            let u = solve_numeric(&eq, g, Rule::Midpoint).unwrap();
            g.mids().iter().zip(u.values()).map(|(t, v)| (v - 2.0 * t * (t * t).cos()).abs()).fold(0.0, f64::max)
        };
        assert!((err2(50) / err2(100)).log2() >= 1.0);
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let g = TimeGrid::covering(1.0, 30).unwrap();
        let eq = PolyEquation::quadratic_const(2.0, SmoothFn::new(|_| 0.0, |_| 0.0)).unwrap();
        let u = solve_numeric(&eq, g, Rule::Midpoint).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn solvability_loss_is_reported() {
        let g = TimeGrid::covering(1.0, 200).unwrap();
        let eq = PolyEquation::quadratic_const(-1.0, SmoothFn::new(|t| t, |_| 1.0)).unwrap();
        match solve_numeric(&eq, g, Rule::Midpoint) {
            Err(Error::SolvabilityLoss { t, .. }) => assert!((t - 0.25).abs() < 0.02, "{t}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn majorant_dominates_numeric_solution() {
        let g = TimeGrid::covering(0.25, 200).unwrap();
        let eq = PolyEquation::quadratic_const(1.0, SmoothFn::new(|t| t, |_| 1.0)).unwrap();
        let spec = bounds_from_kernels(&eq, g).unwrap();
        let sol = majorant_blowup(&spec, 1.0).unwrap();
        let ts = sol.blowup.unwrap();
        assert!(((ts - 0.25) / 0.25).abs() < 1e-4);
        let u = solve_numeric(&eq, g, Rule::Midpoint).unwrap();
        for (t, v) in g.mids().iter().zip(u.values()) {
            if *t <= 0.9 * ts {
                assert!(v.abs() <= sol.psi_at(*t).unwrap());
            }
        }
    }

    #[test]
    fn bounds_for_constant_and_exponential_data() {
        let g = TimeGrid::covering(1.0, 20).unwrap();
        let eq = PolyEquation::quadratic_const(-0.7, SmoothFn::new(|t: f64| t.exp_m1(), f64::exp)).unwrap();
        let b = sampled_bounds(&eq, g).unwrap();
        assert!(b[1].iter().all(|&v| v == 0.0) && b[2].iter().all(|&v| v == 0.0));
        assert!(b[3].iter().all(|&v| (v - 0.7).abs() < 1e-15));
        for (t, f) in g.nodes().iter().zip(&b[0]) {
            assert!((f - t.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn refined_sampling_never_lowers_bounds() {
        let y = SmoothFn::new(|t| (3.0 * t).sin(), |t| 3.0 * (3.0 * t).cos());
        let eq = PolyEquation::new(
            |t, s| 1.0 + 0.3 * (t * s).sin(),
            Some(Arc::new(|t, a, b| (t - a) * (t - b) + 0.5)),
            y,
        )
        .unwrap();
        let coarse = sampled_bounds(&eq, TimeGrid::covering(1.0, 8).unwrap()).unwrap();
        let fine = sampled_bounds(&eq, TimeGrid::covering(1.0, 16).unwrap()).unwrap();
        for (c, f) in coarse.iter().zip(&fine) {
            for i in 0..=8 {
                assert!(f[2 * i] >= c[i] - 1e-12);
            }
        }
    }

    #[test]
    fn nearest_root_choices() {
        assert_eq!(nearest_root(0.0, 2.0, 4.0, 0.0), Some(2.0));
        // u² + u = 2: roots 1, −2.
        assert!((nearest_root(1.0, 1.0, 2.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((nearest_root(1.0, 1.0, 2.0, -3.0).unwrap() + 2.0).abs() < 1e-15);
        assert_eq!(nearest_root(1.0, 0.0, -1.0, 0.0), None);
    }

    proptest! {
        #[test]
        fn bounds_are_nondecreasing(lam in -2.0f64..2.0, w in 0.5f64..5.0) {
            let y = SmoothFn::new(move |t| (w * t).sin(), move |t| w * (w * t).cos());
            let eq = PolyEquation::quadratic_const(lam, y).unwrap();
            let b = sampled_bounds(&eq, TimeGrid::covering(1.0, 12).unwrap()).unwrap();
            for row in b {
                prop_assert!(row.windows(2).all(|p| p[1] >= p[0]));
            }
        }

        #[test]
        fn constant_majorant_blowup(f in 0.1f64..3.0, m2 in 0.1f64..3.0) {
            let spec = MajorantSpec::constant(f, &[0.0, 0.0], &[m2]).unwrap();
            let sol = majorant_blowup(&spec, 100.0).unwrap();
            let ts = 1.0 / (4.0 * m2 * f);
            prop_assert!(((sol.blowup.unwrap() - ts) / ts).abs() < 1e-4);
        }
    }
}
