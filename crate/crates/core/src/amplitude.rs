//! Minimax choice of test amplitudes: minimize over amplitudes the worst
//! residual over step heights β (and switching times for the two-step family).

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// (β³ − α²β)T³/6.
pub fn residual_3sq(alpha: f64, beta: f64, t: f64) -> f64 {
    (beta.powi(3) - alpha * alpha * beta) * t.powi(3) / 6.0
}

/// (β³ − (α₁+α₂)β² + α₁α₂β)T³/6.
pub fn residual_3sq_pi(a1: f64, a2: f64, beta: f64, t: f64) -> f64 {
    beta * (beta - a1) * (beta - a2) * t.powi(3) / 6.0
}

/// (β³ − βα²)(ω₁−ω₂)³/6 + βα²ω₁ω₂².
pub fn residual_3sq_twostep(alpha: f64, beta: f64, w1: f64, w2: f64) -> f64 {
    let a2 = alpha * alpha;
    (beta.powi(3) - beta * a2) * (w1 - w2).powi(3) / 6.0 + beta * a2 * w1 * w2 * w2
}

/// {β⁴ + [α₁α₂ − (α₁² + α₁α₂ + α₂²)]β² + α₁α₂(α₁+α₂)β}T⁴/24, with α₃ = −α₁ − α₂.
pub fn residual_4cub(a1: f64, a2: f64, beta: f64, t: f64) -> f64 {
    let p = a1 * a2;
    let q = a1 * a1 + p + a2 * a2;
    (beta.powi(4) + (p - q) * beta * beta + p * (a1 + a2) * beta) * t.powi(4) / 24.0
}

/// β(β−α₁)(β−α₂)(β−α₃)T⁴/24.
pub fn residual_4cub_pi(a1: f64, a2: f64, a3: f64, beta: f64, t: f64) -> f64 {
    beta * (beta - a1) * (beta - a2) * (beta - a3) * t.powi(4) / 24.0
}

/// Step-response error of the quadratic model identified with ±α windows from
/// the reference series truncated at order `n`.
pub fn residual_reference_quadratic(n: u32, alpha: f64, beta: f64, t: f64) -> f64 {
    let mut sum = 0.0;
    let mut tm = t * t;
    let mut fact = 2.0;
    for m in 3..=n {
        tm *= t;
        fact *= m as f64;
        let model = if m % 2 == 1 {
            beta * alpha.powi(m as i32 - 1)
        } else {
            beta * beta * alpha.powi(m as i32 - 2)
        };
        sum += tm / fact * (beta.powi(m as i32) - model);
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeBox {
    /// (0, B], realized as [1e-9·B, B].
    Positive,
    /// [−B, B].
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// The last amplitude is minus the sum of the free ones.
    SumZero,
    None,
}

/// Where the inner maximum is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerDomain {
    /// β in [lo, hi].
    Interval(f64, f64),
    /// β in [0, B], ω₁, ω₂ >= 0 with ω₁ + ω₂ <= T; searched as (β, s, f) with
    /// s = ω₁ + ω₂ and ω₁ = s·f.
    Triangle { b: f64, t: f64 },
}

impl InnerDomain {
    fn dims(&self) -> usize {
        match self {
            InnerDomain::Interval(..) => 1,
            InnerDomain::Triangle { .. } => 3,
        }
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        match *self {
            InnerDomain::Interval(lo, hi) => vec![(lo, hi)],
            InnerDomain::Triangle { b, t } => vec![(0.0, b), (0.0, t), (0.0, 1.0)],
        }
    }

    /// Box coordinates to (β[, ω₁, ω₂]).
    fn natural(&self, u: &[f64]) -> Vec<f64> {
        match self {
            InnerDomain::Interval(..) => vec![u[0]],
            InnerDomain::Triangle { .. } => vec![u[0], u[1] * u[2], u[1] * (1.0 - u[2])],
        }
    }
}

pub type ResidualFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// A residual `r(amplitudes, inner)` with its amplitude and inner domains.
#[derive(Clone)]
pub struct MinimaxProblem {
    pub name: String,
    residual: ResidualFn,
    dims: usize,
    amp_box: AmplitudeBox,
    constraint: Constraint,
    inner: InnerDomain,
    b: f64,
    t: f64,
    /// Power of B·T the minimax value scales with.
    pub degree: i32,
}

impl fmt::Debug for MinimaxProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MinimaxProblem")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("amp_box", &self.amp_box)
            .field("constraint", &self.constraint)
            .field("inner", &self.inner)
            .field("b", &self.b)
            .field("t", &self.t)
            .finish()
    }
}

fn check_bt(b: f64, t: f64) -> Result<()> {
    if !(b.is_finite() && b > 0.0 && t.is_finite() && t > 0.0) {
        return Err(Error::Parameter(format!("B and T must be positive, got B = {b}, T = {t}")));
    }
    Ok(())
}

impl MinimaxProblem {
    /// Generic problem; `residual` receives the free amplitudes and the inner
    /// point in natural coordinates.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        dims: usize,
        amp_box: AmplitudeBox,
        constraint: Constraint,
        inner: InnerDomain,
        b: f64,
        t: f64,
        degree: i32,
        residual: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_bt(b, t)?;
        if dims == 0 {
            return Err(Error::Parameter("at least one free amplitude is needed".into()));
        }
        Ok(Self {
            name: name.into(),
            residual: Arc::new(residual),
            dims,
            amp_box,
            constraint,
            inner,
            b,
            t,
            degree,
        })
    }

    pub fn three_sq(b: f64, t: f64) -> Result<Self> {
        Self::new("3sq", 1, AmplitudeBox::Positive, Constraint::SumZero, InnerDomain::Interval(0.0, b), b, t, 3,
            move |a, u| residual_3sq(a[0], u[0], t))
    }

    pub fn three_sq_pi(b: f64, t: f64) -> Result<Self> {
        Self::new("3sq_pi", 2, AmplitudeBox::Positive, Constraint::None, InnerDomain::Interval(0.0, b), b, t, 3,
            move |a, u| residual_3sq_pi(a[0], a[1], u[0], t))
    }

    /// PI quadratic residual with amplitudes and β both ranging over [−B, B].
    pub fn three_sq_pi_symmetric(b: f64, t: f64) -> Result<Self> {
        Self::new("3sq_pi_sym", 2, AmplitudeBox::Symmetric, Constraint::None, InnerDomain::Interval(-b, b), b, t, 3,
            move |a, u| residual_3sq_pi(a[0], a[1], u[0], t))
    }

    pub fn three_sq_twostep(b: f64, t: f64) -> Result<Self> {
        Self::new("3sq_twostep", 1, AmplitudeBox::Positive, Constraint::SumZero, InnerDomain::Triangle { b, t }, b, t, 3,
            |a, u| residual_3sq_twostep(a[0], u[0], u[1], u[2]))
    }

    pub fn four_cub(b: f64, t: f64) -> Result<Self> {
        Self::new("4cub", 2, AmplitudeBox::Positive, Constraint::SumZero, InnerDomain::Interval(0.0, b), b, t, 4,
            move |a, u| residual_4cub(a[0], a[1], u[0], t))
    }

    pub fn four_cub_pi(b: f64, t: f64) -> Result<Self> {
        Self::new("4cub_pi", 3, AmplitudeBox::Positive, Constraint::None, InnerDomain::Interval(0.0, b), b, t, 4,
            move |a, u| residual_4cub_pi(a[0], a[1], a[2], u[0], t))
    }

    /// Quadratic identification of the order-`n` reference series.
    pub fn reference_quadratic(n: u32, b: f64, t: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Parameter(format!("truncation order must be at least 3, got {n}")));
        }
        Self::new(format!("ref_quadratic_{n}"), 1, AmplitudeBox::Positive, Constraint::SumZero,
            InnerDomain::Interval(0.0, b), b, t, 3, move |a, u| residual_reference_quadratic(n, a[0], u[0], t))
    }

    /// Named problem as used on the command line.
    pub fn by_name(name: &str, b: f64, t: f64) -> Result<Self> {
        match name {
            "3sq" => Self::three_sq(b, t),
            "3sq_pi" => Self::three_sq_pi(b, t),
            "3sq_pi_sym" => Self::three_sq_pi_symmetric(b, t),
            "3sq_twostep" => Self::three_sq_twostep(b, t),
            "4cub" => Self::four_cub(b, t),
            "4cub_pi" => Self::four_cub_pi(b, t),
            _ => Err(Error::Parameter(format!(
                "unknown problem {name}; expected one of 3sq, 3sq_pi, 3sq_pi_sym, 3sq_twostep, 4cub, 4cub_pi"
            ))),
        }
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    fn amp_bounds(&self) -> (f64, f64) {
        match self.amp_box {
            AmplitudeBox::Positive => (1e-9 * self.b, self.b),
            AmplitudeBox::Symmetric => (-self.b, self.b),
        }
    }

    /// Free amplitudes plus the implied one under the sum-zero constraint.
    pub fn full_amplitudes(&self, a: &[f64]) -> Vec<f64> {
        let mut out = a.to_vec();
        if self.constraint == Constraint::SumZero {
            out.push(-a.iter().sum::<f64>());
        }
        out
    }

    pub fn residual(&self, a: &[f64], inner: &[f64]) -> f64 {
        (self.residual)(a, inner)
    }

    /// Worst |residual| over the inner domain and the points attaining it.
    pub fn inner_max(&self, a: &[f64]) -> InnerMax {
        let f = |u: &[f64]| (self.residual)(a, &self.inner.natural(u)).abs();
        let bounds = self.inner.bounds();
        let peaks = if self.inner.dims() == 1 {
            maxima_1d(&f, bounds[0])
        } else {
            maxima_nd(&f, &bounds)
        };
        let value = peaks.iter().map(|p| p.1).fold(0.0, f64::max);
        let tol = 1e-6 * value.max(1e-300);
        let mut points: Vec<Vec<f64>> = peaks
            .into_iter()
            .filter(|p| p.1 >= value - tol)
            .map(|p| self.inner.natural(&p.0))
            .collect();
        points.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        points.dedup_by(|x, y| x.iter().zip(y.iter()).all(|(p, q)| (p - q).abs() < 1e-6 * self.b.max(self.t)));
        InnerMax { value, points }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerMax {
    pub value: f64,
    /// Maximizers in natural coordinates (β[, ω₁, ω₂]).
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxSolution {
    /// Free amplitudes.
    pub amplitudes: Vec<f64>,
    /// Free amplitudes plus any implied by the constraint.
    pub full_amplitudes: Vec<f64>,
    pub value: f64,
    pub maximizers: Vec<Vec<f64>>,
}

const INNER_GRID_1D: usize = 2001;
const INNER_GRID_ND: usize = 21;
const OUTER_GRID: usize = 21;
const OUTER_STARTS: usize = 4;
const GOLDEN_TOL: f64 = 1e-13;

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let floor = (GOLDEN_TOL * (b - a).abs()).max(4.0 * f64::EPSILON * a.abs().max(b.abs()));
    for _ in 0..200 {
        if (b - a).abs() <= floor {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Grid local maxima refined by golden section, including the endpoints.
fn maxima_1d(f: &impl Fn(&[f64]) -> f64, (lo, hi): (f64, f64)) -> Vec<(Vec<f64>, f64)> {
    let n = INNER_GRID_1D;
    let xs: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(&[x])).collect();
    let g = |x: f64| f(&[x]);
    let mut out = Vec::new();
    for k in 0..n {
        let left = if k > 0 { ys[k - 1] } else { f64::NEG_INFINITY };
        let right = if k + 1 < n { ys[k + 1] } else { f64::NEG_INFINITY };
        if ys[k] >= left && ys[k] >= right {
            let a = xs[k.saturating_sub(1)];
            let b = xs[(k + 1).min(n - 1)];
            let (x, v) = golden_max(&g, a, b);
            // An endpoint maximum may sit on the boundary itself.
            let cand = [(x, v), (xs[k], ys[k])];
            let best = cand.into_iter().fold((x, v), |m, c| if c.1 > m.1 { c } else { m });
            out.push((vec![best.0], best.1));
        }
    }
    out
}

/// Tensor grid, then cyclic coordinate golden-section refinement of the best
/// grid points.
fn maxima_nd(f: &impl Fn(&[f64]) -> f64, bounds: &[(f64, f64)]) -> Vec<(Vec<f64>, f64)> {
    let d = bounds.len();
    let n = INNER_GRID_ND;
    let total = n.pow(d as u32);
    let point = |mut k: usize| -> Vec<f64> {
        let mut u = vec![0.0; d];
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            u[j] = lo + (hi - lo) * (k % n) as f64 / (n - 1) as f64;
            k /= n;
        }
        u
    };
    let mut grid: Vec<(usize, f64)> = (0..total).map(|k| (k, f(&point(k)))).collect();
    grid.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(std::cmp::Ordering::Equal).then(x.0.cmp(&y.0)));
    let steps: Vec<f64> = bounds.iter().map(|&(lo, hi)| (hi - lo) / (n - 1) as f64).collect();
    let mut out = Vec::new();
    for &(k, _) in grid.iter().take(4) {
        let mut u = point(k);
        let mut val = f(&u);
        for _ in 0..40 {
            let before = val;
            for j in 0..d {
                let (lo, hi) = bounds[j];
                let a = (u[j] - 2.0 * steps[j]).max(lo);
                let b = (u[j] + 2.0 * steps[j]).min(hi);
                let g = |x: f64| {
                    let mut v = u.clone();
                    v[j] = x;
                    f(&v)
                };
                let mut best = (u[j], val);
                for cand in [golden_max(&g, a, b), (a, g(a)), (b, g(b))] {
                    if cand.1 > best.1 {
                        best = cand;
                    }
                }
                u[j] = best.0;
                val = best.1;
            }
            if val - before <= 1e-15 * val.abs().max(1e-300) {
                break;
            }
        }
        out.push((u, val));
    }
    out
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    a.partial_cmp(b) == Some(std::cmp::Ordering::Less)
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()) + 1e-300
}

/// Nelder–Mead on a box, with points projected onto the box.
fn nelder_mead(
    f: &(impl Fn(&[f64]) -> f64 + Sync),
    start: &[f64],
    (lo, hi): (f64, f64),
    size: f64,
    xtol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, bool) {
    let d = start.len();
    let clamp = |x: &mut Vec<f64>| x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for j in 0..d {
        let mut p = start.to_vec();
        p[j] += if p[j] + size <= hi { size } else { -size };
        clamp(&mut p);
        simplex.push(p);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = order.iter().map(|&k| simplex[k].clone()).collect();
        vals = order.iter().map(|&k| vals[k]).collect();
        let diam = simplex
            .iter()
            .skip(1)
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diam <= xtol {
            return (simplex[0].clone(), vals[0], true);
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |c: f64| {
            let mut p: Vec<f64> = (0..d).map(|j| centroid[j] + c * (simplex[d][j] - centroid[j])).collect();
            clamp(&mut p);
            p
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let xc = if fr < vals[d] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                let best = simplex[0].clone();
                for k in 1..=d {
                    let mut p: Vec<f64> = (0..d).map(|j| best[j] + 0.5 * (simplex[k][j] - best[j])).collect();
                    clamp(&mut p);
                    vals[k] = f(&p);
                    simplex[k] = p;
                }
            }
        }
    }
    let k = (0..=d)
        .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    (simplex[k].clone(), vals[k], false)
}

/// Min over amplitudes of the inner max, to `tol` in amplitude units of B.
pub fn solve_minimax(problem: &MinimaxProblem, tol: f64) -> Result<MinimaxSolution> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let d = problem.dims;
    let (lo, hi) = problem.amp_bounds();
    let obj = |a: &[f64]| problem.inner_max(a).value;
    let g = OUTER_GRID;
    let starts: Vec<Vec<f64>> = (0..g.pow(d as u32))
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let v = lo + (hi - lo) * (k % g) as f64 / (g - 1) as f64;
                    k /= g;
                    v
                })
                .collect()
        })
        .collect();
    let mut scored: Vec<(Vec<f64>, f64)> = starts.into_par_iter().map(|a| {
        let v = obj(&a);
        (a, v)
    }).collect();
    scored.sort_by(|x, y| {
        x.1.partial_cmp(&y.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal))
    });
    let xtol = 1e-3 * tol * problem.b;
    let step = (hi - lo) / (g - 1) as f64;
    let refined: Vec<(Vec<f64>, f64, bool)> = scored
        .iter()
        .take(OUTER_STARTS)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(a, _)| {
            let mut x = a.clone();
            let mut size = step;
            let mut val = f64::INFINITY;
            let mut converged = false;
            // Restart from the incumbent until a restart no longer helps.
            for _ in 0..4 {
                let (nx, nv, ok) = nelder_mead(&obj, &x, (lo, hi), size, xtol, 4000);
                let improved = nv < val - 1e-14 * val.abs();
                x = nx;
                val = val.min(nv);
                converged = ok;
                if !improved {
                    break;
                }
                size = (size * 0.25).max(100.0 * xtol);
            }
            (x, val, converged)
        })
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (x, v, ok) in refined {
        if !ok {
            return Err(Error::NonConvergence(format!(
                "{}: outer search did not converge to {tol}",
                problem.name
            )));
        }
        best = match best {
            None => Some((x, v)),
            Some((bx, bv)) => {
                if (v < bv && !same_value(v, bv)) || (same_value(v, bv) && lex_less(&x, &bx)) {
                    Some((x, v))
                } else {
                    Some((bx, bv))
                }
            }
        };
    }
    let (amplitudes, _) = best.ok_or_else(|| Error::NonConvergence("no starting points".into()))?;
    let inner = problem.inner_max(&amplitudes);
    Ok(MinimaxSolution {
        full_amplitudes: problem.full_amplitudes(&amplitudes),
        amplitudes,
        value: inner.value,
        maximizers: inner.points,
    })
}

/// Optimal ±α for the quadratic identification of the order-N reference
/// series, for each N in `orders`.
pub fn stabilization_probe(orders: impl IntoIterator<Item = u32>, b: f64, t: f64, tol: f64) -> Result<Vec<(u32, f64)>> {
    orders
        .into_iter()
        .map(|n| {
            let p = MinimaxProblem::reference_quadratic(n, b, t)?;
            Ok((n, solve_minimax(&p, tol)?.amplitudes[0]))
        })
        .collect()
}
