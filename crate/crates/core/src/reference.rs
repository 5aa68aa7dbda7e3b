//! Closed-form reference systems: the exponential model y = e^Θ - 1 and its
//! truncations, the factored model y = Θe^Θ, and the heat-exchanger plant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cumulative_integral, node_derivative, Placement, SampledSignal, SmoothFn, TimeGrid};
use crate::lambert::{w0, BRANCH_POINT};

/// Truncation order of the reference series Σ Θ^m / m!.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefOrder {
    Finite(u32),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefModel {
    order: RefOrder,
}

impl RefModel {
    pub fn new(order: RefOrder) -> Result<Self> {
        if order == RefOrder::Finite(0) {
            return Err(Error::Parameter("reference order must be at least 1".into()));
        }
        Ok(Self { order })
    }

    pub fn finite(n: u32) -> Result<Self> {
        Self::new(RefOrder::Finite(n))
    }

    pub fn infinite() -> Self {
        Self {
            order: RefOrder::Infinite,
        }
    }

    pub fn order(&self) -> RefOrder {
        self.order
    }

    /// Output for a given value of Θ.
    pub fn of_theta(&self, theta: f64) -> f64 {
        match self.order {
            RefOrder::Infinite => theta.exp_m1(),
            RefOrder::Finite(n) => {
                let mut term = 1.0;
                let mut sum = 0.0;
                for m in 1..=n {
                    term *= theta / m as f64;
                    sum += term;
                }
                sum
            }
        }
    }
}

/// Node response of the reference model to a midpoint-sampled input.
pub fn ref_response(model: &RefModel, x: &SampledSignal) -> Result<SampledSignal> {
    let theta = cumulative_integral(x)?;
    let vals = theta.values().iter().map(|&t| model.of_theta(t)).collect();
    SampledSignal::nodes(x.grid(), vals)
}

fn first_at_or_below(values: &[f64], times: &[f64], bound: f64) -> Option<f64> {
    values
        .iter()
        .zip(times)
        .find(|(v, _)| **v <= bound)
        .map(|(_, t)| *t)
}

fn check_rhs_origin(y0: f64) -> Result<()> {
    if y0.abs() > 1e-12 {
        return Err(Error::Domain(format!("right-hand side must vanish at t = 0, got {y0}")));
    }
    Ok(())
}

/// x = y' / (1 + y) from an analytic right-hand side, sampled with `placement`.
pub fn ref_inverse(y: &SmoothFn, grid: TimeGrid, placement: Placement) -> Result<SampledSignal> {
    check_rhs_origin(y.value(0.0))?;
    let times = sample_times(grid, placement);
    let ys: Vec<f64> = times.iter().map(|&t| y.value(t)).collect();
    if let Some(t) = first_at_or_below(&ys, &times, -1.0) {
        return Err(Error::ContinuityLoss { t });
    }
    // The continuity condition must hold on all of [0, T], not only at samples.
    if let Some(t) = scan_crossing(|t| y.value(t), grid.t_end(), -1.0) {
        return Err(Error::ContinuityLoss { t });
    }
    let vals = times
        .iter()
        .zip(&ys)
        .map(|(&t, &v)| y.derivative(t) / (1.0 + v))
        .collect();
    SampledSignal::new(grid, placement, vals)
}

/// x = y' / (1 + y) at nodes from node samples, derivative by finite differences.
pub fn ref_inverse_sampled(y: &SampledSignal) -> Result<SampledSignal> {
    y.expect(Placement::Nodes)?;
    check_rhs_origin(y.values()[0])?;
    let times = y.times();
    if let Some(t) = first_at_or_below(y.values(), &times, -1.0) {
        return Err(Error::ContinuityLoss { t });
    }
    let d = node_derivative(y.values(), y.grid().h());
    let vals = d.iter().zip(y.values()).map(|(dy, v)| dy / (1.0 + v)).collect();
    SampledSignal::nodes(y.grid(), vals)
}

/// Node response Θe^Θ of the factored model.
pub fn factored_response(x: &SampledSignal) -> Result<SampledSignal> {
    let theta = cumulative_integral(x)?;
    let vals = theta.values().iter().map(|&t| t * t.exp()).collect();
    SampledSignal::nodes(x.grid(), vals)
}

/// W0(y)/y, continuous through y = 0.
fn w_over_y(y: f64) -> Result<f64> {
    if y.abs() < 1e-4 {
        return Ok(1.0 - y + 1.5 * y * y - 8.0 / 3.0 * y * y * y);
    }
    Ok(w0(y)? / y)
}

fn factored_x(y: f64, dy: f64) -> Result<f64> {
    let wy = w_over_y(y)?;
    Ok(dy * wy / (1.0 + wy * y))
}

/// x = W0(y) y' / ((1 + W0(y)) y) from an analytic right-hand side.
pub fn factored_inverse(y: &SmoothFn, grid: TimeGrid, placement: Placement) -> Result<SampledSignal> {
    check_rhs_origin(y.value(0.0))?;
    let times = sample_times(grid, placement);
    let ys: Vec<f64> = times.iter().map(|&t| y.value(t)).collect();
    if let Some(t) = first_at_or_below(&ys, &times, BRANCH_POINT) {
        return Err(Error::ContinuityLoss { t });
    }
    if let Some(t) = scan_crossing(|t| y.value(t), grid.t_end(), BRANCH_POINT) {
        return Err(Error::ContinuityLoss { t });
    }
    let vals = times
        .iter()
        .zip(&ys)
        .map(|(&t, &v)| factored_x(v, y.derivative(t)))
        .collect::<Result<Vec<_>>>()?;
    SampledSignal::new(grid, placement, vals)
}

/// Factored-model inverse at nodes from node samples.
pub fn factored_inverse_sampled(y: &SampledSignal) -> Result<SampledSignal> {
    y.expect(Placement::Nodes)?;
    check_rhs_origin(y.values()[0])?;
    let times = y.times();
    if let Some(t) = first_at_or_below(y.values(), &times, BRANCH_POINT) {
        return Err(Error::ContinuityLoss { t });
    }
    let d = node_derivative(y.values(), y.grid().h());
    let vals = d
        .iter()
        .zip(y.values())
        .map(|(&dy, &v)| factored_x(v, dy))
        .collect::<Result<Vec<_>>>()?;
    SampledSignal::nodes(y.grid(), vals)
}

fn sample_times(grid: TimeGrid, placement: Placement) -> Vec<f64> {
    match placement {
        Placement::Midpoints => grid.mids(),
        Placement::Nodes => grid.nodes(),
    }
}

/// First t in a fine scan of [0, t_end] where f(t) <= bound.
fn scan_crossing(f: impl Fn(f64) -> f64, t_end: f64, bound: f64) -> Option<f64> {
    const SCAN: usize = 4096;
    (0..=SCAN)
        .map(|k| t_end * k as f64 / SCAN as f64)
        .find(|&t| f(t) <= bound)
}

/// Stationary operating point and constants of the heat-exchanger plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatExchangerParams {
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
    #[serde(rename = "Q0")]
    pub q0: f64,
    pub i0: f64,
}

impl Default for HeatExchangerParams {
    /// lambda1 and lambda2 are placeholders; D0, Q0 and i0 are the plant's
    /// stationary values.
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 1.0,
            d0: 0.16,
            q0: 100.0,
            i0: 434.0,
        }
    }
}

impl HeatExchangerParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.d0, self.q0, self.i0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("plant parameters must be finite".into()));
        }
        if self.lambda1 == self.lambda2 {
            return Err(Error::Singular("lambda1 equals lambda2".into()));
        }
        if self.d0 <= 0.0 || self.q0 <= 0.0 {
            return Err(Error::Parameter("D0 and Q0 must be positive".into()));
        }
        Ok(())
    }

    /// Closed-form response to a constant heat-supply step q with no flow change.
    pub fn constant_dq_response(&self, q: f64, t: f64) -> f64 {
        let (l1, l2, d0) = (self.lambda1, self.lambda2, self.d0);
        let c = l1 * l2 / (l2 - l1);
        let part = |l: f64| -(-l * d0 * t).exp_m1() / (l * d0);
        q * c * (part(l1) - part(l2))
    }
}

/// Node values and running integrals of a plant input.
fn plant_channel(x: &SampledSignal) -> (Vec<f64>, Vec<f64>) {
    let h = x.grid().h();
    let v = x.values();
    match x.placement() {
        Placement::Nodes => {
            let mut cum = vec![0.0; v.len()];
            for i in 1..v.len() {
                cum[i] = cum[i - 1] + 0.5 * h * (v[i] + v[i - 1]);
            }
            (v.to_vec(), cum)
        }
        Placement::Midpoints => {
            let n = v.len();
            let mut nodes = vec![0.0; n + 1];
            nodes[0] = v[0];
            nodes[n] = v[n - 1];
            for i in 1..n {
                nodes[i] = 0.5 * (v[i - 1] + v[i]);
            }
            let mut cum = vec![0.0; n + 1];
            for i in 1..=n {
                cum[i] = cum[i - 1] + h * v[i - 1];
            }
            (nodes, cum)
        }
    }
}

/// Enthalpy deviation at nodes.
///
/// Node inputs: outer integral by the trapezium rule. Midpoint inputs are
/// piecewise constant, and each cell's contribution is integrated exactly, so
/// node `i` depends on cells `0..i` only. Mixed placements go through the
/// trapezium rule with midpoint channels averaged to nodes.
pub fn hx_response(
    p: &HeatExchangerParams,
    d_d: &SampledSignal,
    d_q: &SampledSignal,
) -> Result<SampledSignal> {
    p.validate()?;
    let grid = d_d.grid();
    grid.check_same(&d_q.grid())?;
    let (dd_nodes, dd_cum) = plant_channel(d_d);
    let (dq_nodes, _) = plant_channel(d_q);
    let n = grid.n();
    let h = grid.h();
    if let Some(k) = d_d.values().iter().position(|v| p.d0 + v <= 0.0) {
        return Err(Error::Domain(format!(
            "total flow D0 + dD is not positive at sample {k}"
        )));
    }
    if d_d.placement() == Placement::Midpoints && d_q.placement() == Placement::Midpoints {
        return hx_cells(p, d_d, d_q);
    }
    let phi: Vec<f64> = (0..=n).map(|i| p.d0 * grid.node(i) + dd_cum[i]).collect();
    let g: Vec<f64> = (0..=n)
        .map(|i| dq_nodes[i] - p.q0 / p.d0 * dd_nodes[i])
        .collect();
    let c = p.lambda1 * p.lambda2 / (p.lambda2 - p.lambda1);
    let mut out = vec![0.0; n + 1];
    // S_i = Σ_{j<=i} g_j e^{-λ(Φ_i - Φ_j)} by recurrence; trapezium halves the ends.
    let (mut s1, mut s2) = (g[0], g[0]);
    for i in 1..=n {
        let dphi = phi[i] - phi[i - 1];
        s1 = s1 * (-p.lambda1 * dphi).exp() + g[i];
        s2 = s2 * (-p.lambda2 * dphi).exp() + g[i];
        let e1 = (-p.lambda1 * (phi[i] - phi[0])).exp();
        let e2 = (-p.lambda2 * (phi[i] - phi[0])).exp();
        let t1 = s1 - 0.5 * g[0] * e1 - 0.5 * g[i];
        let t2 = s2 - 0.5 * g[0] * e2 - 0.5 * g[i];
        out[i] = c * h * (t1 - t2);
    }
    SampledSignal::nodes(grid, out)
}

/// Exact response to piecewise-constant inputs: on cell c the flow is
/// D_c = D0 + dD_c and the cell integral of g_c e^{-λ(Φ_i − Φ(s))} is
/// g_c e^{-λ(Φ_i − Φ_{c+1})} (1 − e^{-λ D_c h}) / (λ D_c).
fn hx_cells(p: &HeatExchangerParams, d_d: &SampledSignal, d_q: &SampledSignal) -> Result<SampledSignal> {
    let grid = d_d.grid();
    let h = grid.h();
    let c = p.lambda1 * p.lambda2 / (p.lambda2 - p.lambda1);
    let mut out = vec![0.0; grid.n() + 1];
    let (mut s1, mut s2) = (0.0, 0.0);
    for (k, (&dd, &dq)) in d_d.values().iter().zip(d_q.values()).enumerate() {
        let flow = p.d0 + dd;
        let g = dq - p.q0 / p.d0 * dd;
        let advance = |s: f64, lam: f64| {
            let x = lam * flow * h;
            s * (-x).exp() + g * (-(-x).exp_m1()) / (lam * flow)
        };
        s1 = advance(s1, p.lambda1);
        s2 = advance(s2, p.lambda2);
        out[k + 1] = c * (s1 - s2);
    }
    SampledSignal::nodes(grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(h: f64, n: usize) -> TimeGrid {
        TimeGrid::new(h, n).unwrap()
    }

    #[test]
    fn zero_input_zero_output() {
        let g = grid(0.1, 20);
        let x = SampledSignal::zeros(g, Placement::Midpoints);
        for m in [RefModel::finite(1).unwrap(), RefModel::finite(3).unwrap(), RefModel::infinite()] {
            assert!(ref_response(&m, &x).unwrap().values().iter().all(|&v| v == 0.0));
        }
        assert!(RefModel::finite(0).is_err());
    }

    #[test]
    fn step_responses() {
        let g = grid(0.05, 40);
        let beta = 0.7;
        let x = SampledSignal::midpoints(g, vec![beta; 40]).unwrap();
        let inf = ref_response(&RefModel::infinite(), &x).unwrap();
        let lin = ref_response(&RefModel::finite(1).unwrap(), &x).unwrap();
        for (i, t) in g.nodes().into_iter().enumerate() {
            assert!((inf.values()[i] - (beta * t).exp_m1()).abs() < 1e-13);
            assert!((lin.values()[i] - beta * t).abs() < 1e-14);
        }
    }

    #[test]
    fn ref_inverse_examples() {
        let g = grid(0.01, 100);
        let x = ref_inverse(&SmoothFn::new(|t| t, |_| 1.0), g, Placement::Nodes).unwrap();
        for (t, v) in g.nodes().iter().zip(x.values()) {
            assert!((v - 1.0 / (1.0 + t)).abs() < 1e-15);
        }
        let err = ref_inverse(&SmoothFn::new(|t| -t, |_| -1.0), g, Placement::Nodes).unwrap_err();
        match err {
            Error::ContinuityLoss { t } => assert!((t - 1.0).abs() < 1e-12),
            e => panic!("unexpected {e}"),
        }
        let beta = 1.3;
        let y = SmoothFn::new(move |t| (beta * t).exp_m1(), move |t| beta * (beta * t).exp());
        let x = ref_inverse(&y, g, Placement::Midpoints).unwrap();
        assert!(x.values().iter().all(|v| (v - beta).abs() < 1e-13));
    }

    #[test]
    fn ref_inverse_from_samples_is_second_order() {
        let err = |n: usize| {
            let g = TimeGrid::covering(1.0, n).unwrap();
            let y = SampledSignal::sample_nodes(g, |t| (t * 1.5).sin()).unwrap();
            let x = ref_inverse_sampled(&y).unwrap();
            g.nodes()
                .iter()
                .zip(x.values())
                .map(|(t, v)| (v - 1.5 * (1.5 * t).cos() / (1.0 + (1.5 * t).sin())).abs())
                .fold(0.0, f64::max)
        };
        let r = err(50) / err(100);
        assert!(r > 3.5, "ratio {r}");
    }

    #[test]
    fn factored_examples() {
        let g = grid(0.01, 100);
        let y = SmoothFn::new(|t| t * t.exp(), |t| (1.0 + t) * t.exp());
        let x = factored_inverse(&y, g, Placement::Nodes).unwrap();
        assert!(x.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let y2 = SmoothFn::new(|t| (2.0 * t).sin(), |t| 2.0 * (2.0 * t).cos());
        let x2 = factored_inverse(&y2, g, Placement::Nodes).unwrap();
        assert!((x2.values()[0] - 2.0).abs() < 1e-15);
        let bad = SmoothFn::new(|t| -t, |_| -1.0);
        assert!(matches!(
            factored_inverse(&bad, g, Placement::Nodes),
            Err(Error::ContinuityLoss { .. })
        ));
    }

    #[test]
    fn factored_round_trip() {
        let g = grid(0.005, 200);
        let x = SampledSignal::sample_midpoints(g, |t| 0.5 + 0.3 * (3.0 * t).cos()).unwrap();
        let y = factored_response(&x).unwrap();
        let back = factored_inverse_sampled(&y).unwrap();
        // Node derivative of midpoint-integrated data compares with node values of x.
        let exact: Vec<f64> = g.nodes().iter().map(|t| 0.5 + 0.3 * (3.0 * t).cos()).collect();
        let err = back
            .values()
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "err {err}");
    }

    #[test]
    fn hx_zero_and_constant_dq() {
        let p = HeatExchangerParams::default();
        let g = grid(0.1, 300);
        let z = SampledSignal::zeros(g, Placement::Midpoints);
        let y = hx_response(&p, &z, &z).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
        let q = 25.0;
        let exact: Vec<f64> = g.nodes().iter().map(|&t| p.constant_dq_response(q, t)).collect();
        let peak = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = |y: &SampledSignal| {
            y.values()
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / peak
        };
        // Trapezium path.
        let zn = SampledSignal::zeros(g, Placement::Nodes);
        let dq = SampledSignal::nodes(g, vec![q; 301]).unwrap();
        let e = err(&hx_response(&p, &zn, &dq).unwrap());
        assert!(e <= 1e-3 && e > 0.0, "rel {e}");
        // Exact cell path.
        let dq = SampledSignal::midpoints(g, vec![q; 300]).unwrap();
        assert!(err(&hx_response(&p, &z, &dq).unwrap()) < 1e-12);
    }

    #[test]
    fn hx_cells_are_causal_and_shift_invariant() {
        let p = HeatExchangerParams::default();
        let g = grid(1.0, 30);
        let window = |start: usize| {
            let v = (0..30).map(|c| if (start..start + 4).contains(&c) { 0.02 } else { 0.0 }).collect();
            SampledSignal::midpoints(g, v).unwrap()
        };
        let dq = SampledSignal::sample_midpoints(g, |t| 5.0 * (0.3 * t).sin()).unwrap();
        let base = hx_response(&p, &window(5), &dq).unwrap();
        let mut bumped = dq.values().to_vec();
        bumped[12] += 3.0;
        let b = hx_response(&p, &window(5), &SampledSignal::midpoints(g, bumped).unwrap()).unwrap();
        assert_eq!(&base.values()[..=12], &b.values()[..=12]);
        assert_ne!(base.values()[13], b.values()[13]);
        let z = SampledSignal::zeros(g, Placement::Midpoints);
        let a0 = hx_response(&p, &window(0), &z).unwrap();
        let a7 = hx_response(&p, &window(7), &z).unwrap();
        for i in 0..=23 {
            assert!((a0.values()[i] - a7.values()[i + 7]).abs() < 1e-12);
        }
    }

    #[test]
    fn hx_parameter_errors() {
        let g = grid(0.1, 10);
        let z = SampledSignal::zeros(g, Placement::Midpoints);
        let mut p = HeatExchangerParams::default();
        p.lambda2 = p.lambda1;
        assert!(matches!(hx_response(&p, &z, &z), Err(Error::Singular(_))));
        let p = HeatExchangerParams::default();
        let dd = SampledSignal::midpoints(g, vec![-0.2; 10]).unwrap();
        assert!(matches!(hx_response(&p, &dd, &z), Err(Error::Domain(_))));
    }

    #[test]
    fn hx_small_signal_linearity() {
        let p = HeatExchangerParams::default();
        let g = grid(0.5, 60);
        let dd = SampledSignal::sample_midpoints(g, |t| 0.04 * (0.2 * t).sin()).unwrap();
        let dq = SampledSignal::sample_midpoints(g, |t| 20.0 * (1.0 - (-t / 5.0).exp())).unwrap();
        let resp = |eps: f64| hx_response(&p, &dd.scaled(eps), &dq.scaled(eps)).unwrap();
        let norm = |eps: f64| resp(eps).max_abs() / eps;
        let mut prev = f64::INFINITY;
        for eps in [0.4, 0.2, 0.1, 0.05] {
            let r = norm(eps) / norm(eps / 2.0);
            assert!((r - 1.0).abs() < prev, "ratio {r} at {eps}");
            prev = (r - 1.0).abs();
        }
        assert!(prev < 0.02, "deviation {prev}");
        // Deviation from linearity shrinks in proportion to the amplitude.
        let dev = |eps: f64| {
            let a = resp(eps);
            let b = resp(eps / 2.0);
            a.values()
                .iter()
                .zip(b.values())
                .map(|(u, v)| (u / eps - v / (eps / 2.0)).abs())
                .fold(0.0, f64::max)
        };
        let r = dev(0.05) / dev(0.025);
        assert!((r - 2.0).abs() < 0.04, "ratio {r}");
    }

    proptest! {
        #[test]
        fn truncation_remainder_bound(
            xs in proptest::collection::vec(-1.5f64..1.5, 16),
            order in 1u32..7,
        ) {
            let g = TimeGrid::new(0.1, 16).unwrap();
            let x = SampledSignal::midpoints(g, xs).unwrap();
            let th = cumulative_integral(&x).unwrap();
            let yi = ref_response(&RefModel::infinite(), &x).unwrap();
            let yn = ref_response(&RefModel::finite(order).unwrap(), &x).unwrap();
            let fact: f64 = (1..=order + 1).map(|k| k as f64).product();
            for i in 0..=16 {
                let t = th.values()[i].abs();
                let bound = t.powi(order as i32 + 1) * t.exp() / fact;
                prop_assert!((yi.values()[i] - yn.values()[i]).abs() <= bound * (1.0 + 1e-12) + 1e-15);
            }
        }

        #[test]
        fn hx_is_causal(
            dd in proptest::collection::vec(-0.03f64..0.03, 20),
            dq in proptest::collection::vec(-30.0f64..30.0, 20),
            cut in 1usize..20,
        ) {
            let p = HeatExchangerParams::default();
            let g = TimeGrid::new(1.0, 20).unwrap();
            let full = hx_response(
                &p,
                &SampledSignal::midpoints(g, dd.clone()).unwrap(),
                &SampledSignal::midpoints(g, dq.clone()).unwrap(),
            ).unwrap();
            let mut dd2 = dd.clone();
            let mut dq2 = dq.clone();
            // Cells from `cut` on are changed; nodes up to cut - 1 only see earlier cells
            // (node `cut` averages cells cut - 1 and cut).
            for c in cut..20 {
                dd2[c] = 0.0;
                dq2[c] = 0.0;
            }
            let trunc = hx_response(
                &p,
                &SampledSignal::midpoints(g, dd2).unwrap(),
                &SampledSignal::midpoints(g, dq2).unwrap(),
            ).unwrap();
            for i in 0..cut {
                prop_assert_eq!(full.values()[i], trunc.values()[i]);
            }
        }
    }
}
