//! Forward evaluation of scalar and vector Volterra polynomials by midpoint
//! rectangles or product integration.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Fn2, Kernel1, Kernel2, Kernel3, Placement, SampledSignal, SymMatrix, SymTensor3, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Midpoint,
    ProductIntegration,
}

/// Kernels of a scalar model up to degree three.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub k1: Kernel1,
    pub k2: Option<Kernel2>,
    pub k3: Option<Kernel3>,
}

impl KernelSet {
    pub fn linear(k1: Kernel1) -> Self {
        Self { k1, k2: None, k3: None }
    }

    pub fn quadratic(k1: Kernel1, k2: Kernel2) -> Self {
        Self { k1, k2: Some(k2), k3: None }
    }

    pub fn cubic(k1: Kernel1, k2: Kernel2, k3: Kernel3) -> Self {
        Self { k1, k2: Some(k2), k3: Some(k3) }
    }

    pub fn degree(&self) -> usize {
        if self.k3.is_some() {
            3
        } else if self.k2.is_some() {
            2
        } else {
            1
        }
    }
}

/// Cell weights m_j, l_jk, c_jkl: kernel integrals over lag cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PiWeights {
    pub m: Vec<f64>,
    pub l: Option<SymMatrix>,
    pub c: Option<SymTensor3>,
}

const GL_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

fn gl_points(grid: &TimeGrid, c: usize) -> [(f64, f64); 3] {
    let h = grid.h();
    let mid = grid.mid(c);
    let mut out = [(0.0, 0.0); 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (mid + 0.5 * h * GL_NODES[k], 0.5 * h * GL_WEIGHTS[k]);
    }
    out
}

impl PiWeights {
    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn degree(&self) -> usize {
        if self.c.is_some() {
            3
        } else if self.l.is_some() {
            2
        } else {
            1
        }
    }

    /// Midpoint-rule weights: h^m times kernel cell values.
    pub fn midpoint(kernels: &KernelSet, grid: &TimeGrid) -> Result<Self> {
        let h = grid.h();
        let m = kernels.k1.cells(grid)?.into_iter().map(|v| v * h).collect();
        let l = match &kernels.k2 {
            Some(k) => {
                let cells = k.cells(grid)?;
                Some(SymMatrix::from_fn(grid.n(), |i, j| h * h * cells.get(i, j)))
            }
            None => None,
        };
        let c = match &kernels.k3 {
            Some(k) => {
                let cells = k.cells(grid)?;
                let h3 = h * h * h;
                Some(SymTensor3::from_fn(grid.n(), |i, j, k| h3 * cells.get(i, j, k)))
            }
            None => None,
        };
        Ok(Self { m, l, c })
    }

    /// Cell integrals of analytic kernels by tensor 3-point Gauss-Legendre rules.
    pub fn integrated(kernels: &KernelSet, grid: &TimeGrid) -> Result<Self> {
        let n = grid.n();
        let analytic = |what: &str| Error::Parameter(format!("{what} must be analytic to integrate"));
        let f1 = match &kernels.k1 {
            Kernel1::Analytic(f) => f.clone(),
            Kernel1::Grid(_) => return Err(analytic("K1")),
        };
        let m = (0..n)
            .map(|c| gl_points(grid, c).iter().map(|(s, w)| w * f1(*s)).sum())
            .collect();
        let l = match &kernels.k2 {
            None => None,
            Some(Kernel2::Grid(_)) => return Err(analytic("K2")),
            Some(Kernel2::Analytic(f)) => Some(SymMatrix::from_fn(n, |i, j| {
                let mut acc = 0.0;
                for (a, wa) in gl_points(grid, i) {
                    for (b, wb) in gl_points(grid, j) {
                        acc += wa * wb * f(a, b);
                    }
                }
                acc
            })),
        };
        let c = match &kernels.k3 {
            None => None,
            Some(Kernel3::Grid(_)) => return Err(analytic("K3")),
            Some(Kernel3::Analytic(f)) => Some(SymTensor3::from_fn(n, |i, j, k| {
                let mut acc = 0.0;
                for (a, wa) in gl_points(grid, i) {
                    for (b, wb) in gl_points(grid, j) {
                        for (c, wc) in gl_points(grid, k) {
                            acc += wa * wb * wc * f(a, b, c);
                        }
                    }
                }
                acc
            })),
        };
        Ok(Self { m, l, c })
    }

    /// Per-degree contributions at node `i`; `w[c]` is the input `c` cells back.
    pub(crate) fn node_terms(&self, w: &[f64]) -> [f64; 3] {
        let i = w.len();
        let mut lin = 0.0;
        for c in 0..i {
            lin += self.m[c] * w[c];
        }
        let mut quad = 0.0;
        if let Some(l) = &self.l {
            for a in 0..i {
                let mut row = 0.5 * l.get(a, a) * w[a];
                for b in 0..a {
                    row += l.get(a, b) * w[b];
                }
                quad += 2.0 * row * w[a];
            }
        }
        let mut cub = 0.0;
        if let Some(t) = &self.c {
            for a in 0..i {
                let wa = w[a];
                let mut acc_a = t.get(a, a, a) * wa * wa;
                for b in 0..a {
                    let wb = w[b];
                    // (a, a, b) and (a, b, b) each occur three times.
                    acc_a += 3.0 * (t.get(a, a, b) * wa + t.get(a, b, b) * wb) * wb;
                    let mut acc_b = 0.0;
                    for c in 0..b {
                        acc_b += t.get(a, b, c) * w[c];
                    }
                    acc_a += 6.0 * acc_b * wb;
                }
                cub += acc_a * wa;
            }
        }
        [lin, quad, cub]
    }
}

/// Scalar Volterra polynomial of degree 1 to 3.
#[derive(Debug, Clone)]
pub struct VolterraModel {
    mode: Mode,
    kernels: Option<KernelSet>,
    weights: Option<PiWeights>,
}

impl VolterraModel {
    pub fn midpoint(kernels: KernelSet) -> Self {
        Self {
            mode: Mode::Midpoint,
            kernels: Some(kernels),
            weights: None,
        }
    }

    pub fn product_integration(weights: PiWeights) -> Self {
        Self {
            mode: Mode::ProductIntegration,
            kernels: None,
            weights: Some(weights),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn degree(&self) -> usize {
        match (&self.kernels, &self.weights) {
            (Some(k), _) => k.degree(),
            (None, Some(w)) => w.degree(),
            (None, None) => 0,
        }
    }

    pub fn kernels(&self) -> Option<&KernelSet> {
        self.kernels.as_ref()
    }

    /// Weights used on `grid`.
    pub fn weights_on(&self, grid: &TimeGrid) -> Result<PiWeights> {
        match (&self.kernels, &self.weights) {
            (Some(k), _) => PiWeights::midpoint(k, grid),
            (None, Some(w)) => {
                if w.n() < grid.n() {
                    return Err(Error::GridMismatch(format!(
                        "weights cover {} cells, grid needs {}",
                        w.n(),
                        grid.n()
                    )));
                }
                Ok(w.clone())
            }
            (None, None) => Err(Error::Parameter("model has neither kernels nor weights".into())),
        }
    }
}

fn reversed_prefix(x: &[f64], i: usize) -> Vec<f64> {
    x[..i].iter().rev().copied().collect()
}

/// Node response split by degree: `terms[d][i]` is the degree-(d+1) contribution.
pub fn simulate_terms(model: &VolterraModel, x: &SampledSignal) -> Result<[Vec<f64>; 3]> {
    x.expect(Placement::Midpoints)?;
    let grid = x.grid();
    let weights = model.weights_on(&grid)?;
    let xs = x.values();
    let per_node: Vec<[f64; 3]> = (0..=grid.n())
        .into_par_iter()
        .map(|i| weights.node_terms(&reversed_prefix(xs, i)))
        .collect();
    let mut out = [vec![0.0; grid.n() + 1], vec![0.0; grid.n() + 1], vec![0.0; grid.n() + 1]];
    for (i, t) in per_node.iter().enumerate() {
        for d in 0..3 {
            out[d][i] = t[d];
        }
    }
    Ok(out)
}

/// Node response of a scalar model to a midpoint-sampled input.
pub fn simulate(model: &VolterraModel, x: &SampledSignal) -> Result<SampledSignal> {
    let terms = simulate_terms(model, x)?;
    let vals = (0..terms[0].len())
        .map(|i| terms[0][i] + terms[1][i] + terms[2][i])
        .collect();
    SampledSignal::nodes(x.grid(), vals)
}

/// Cross kernel K_ji(s1, s2) between channels j < i; s1 is the lag of channel j.
#[derive(Clone)]
pub enum CrossKernel {
    Analytic(Fn2),
    /// Row-major `n x n` cell values, row index = lag cell of channel j.
    Grid { n: usize, data: Vec<f64> },
}

impl fmt::Debug for CrossKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrossKernel::Analytic(_) => f.write_str("CrossKernel::Analytic"),
            CrossKernel::Grid { n, .. } => write!(f, "CrossKernel::Grid({n} cells)"),
        }
    }
}

impl CrossKernel {
    pub fn analytic(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        CrossKernel::Analytic(Arc::new(f))
    }

    pub fn zero(n: usize) -> Self {
        CrossKernel::Grid {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Row-major cell values on `grid`.
    pub fn cells(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let n = grid.n();
        match self {
            CrossKernel::Analytic(f) => {
                let mut out = Vec::with_capacity(n * n);
                for a in 0..n {
                    for b in 0..n {
                        out.push(f(grid.mid(a), grid.mid(b)));
                    }
                }
                Ok(out)
            }
            CrossKernel::Grid { n: kn, data } if *kn >= n => {
                let mut out = Vec::with_capacity(n * n);
                for a in 0..n {
                    out.extend_from_slice(&data[a * kn..a * kn + n]);
                }
                Ok(out)
            }
            CrossKernel::Grid { n: kn, .. } => Err(Error::GridMismatch(format!(
                "cross kernel covers {kn} cells, grid needs {n}"
            ))),
        }
    }
}

/// Quadratic model with `p` input channels.
#[derive(Debug, Clone)]
pub struct VectorQuadraticModel {
    k1: Vec<Kernel1>,
    k2: Vec<Kernel2>,
    cross: Vec<Vec<Option<CrossKernel>>>,
}

impl VectorQuadraticModel {
    /// Diagonal kernels per channel; cross kernels are added with [`Self::with_cross`].
    pub fn new(k1: Vec<Kernel1>, k2: Vec<Kernel2>) -> Result<Self> {
        let p = k1.len();
        if p < 2 {
            return Err(Error::Parameter(format!("vector model needs at least 2 channels, got {p}")));
        }
        if k2.len() != p {
            return Err(Error::Parameter(format!(
                "{p} linear kernels but {} quadratic kernels",
                k2.len()
            )));
        }
        Ok(Self {
            k1,
            k2,
            cross: vec![vec![None; p]; p],
        })
    }

    /// Sets K_ji for channels j < i.
    pub fn with_cross(mut self, j: usize, i: usize, k: CrossKernel) -> Result<Self> {
        if !(j < i && i < self.channels()) {
            return Err(Error::Parameter(format!("cross kernel indices need j < i < p, got ({j}, {i})")));
        }
        self.cross[j][i] = Some(k);
        Ok(self)
    }

    pub fn channels(&self) -> usize {
        self.k1.len()
    }

    pub fn k1(&self, ch: usize) -> &Kernel1 {
        &self.k1[ch]
    }

    pub fn k2(&self, ch: usize) -> &Kernel2 {
        &self.k2[ch]
    }

    pub fn cross(&self, j: usize, i: usize) -> Option<&CrossKernel> {
        self.cross[j][i].as_ref()
    }

    pub fn weights_on(&self, grid: &TimeGrid) -> Result<VectorWeights> {
        let h = grid.h();
        let n = grid.n();
        let mut channels = Vec::with_capacity(self.channels());
        for ch in 0..self.channels() {
            let m = self.k1[ch].cells(grid)?.into_iter().map(|v| v * h).collect();
            let cells = self.k2[ch].cells(grid)?;
            let l = SymMatrix::from_fn(n, |a, b| h * h * cells.get(a, b));
            channels.push(PiWeights { m, l: Some(l), c: None });
        }
        let mut cross = Vec::new();
        for j in 0..self.channels() {
            for i in j + 1..self.channels() {
                if let Some(k) = &self.cross[j][i] {
                    let w = k.cells(grid)?.into_iter().map(|v| v * h * h).collect();
                    cross.push(((j, i), w));
                }
            }
        }
        Ok(VectorWeights { n, channels, cross })
    }
}

/// Cell weights of a vector quadratic model on a fixed grid.
#[derive(Debug, Clone)]
pub struct VectorWeights {
    n: usize,
    pub(crate) channels: Vec<PiWeights>,
    /// ((j, i), row-major n x n weights), j < i.
    pub(crate) cross: Vec<((usize, usize), Vec<f64>)>,
}

impl VectorWeights {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn channel(&self, ch: usize) -> &PiWeights {
        &self.channels[ch]
    }

    pub fn cross(&self, j: usize, i: usize) -> Option<&[f64]> {
        self.cross
            .iter()
            .find(|(k, _)| *k == (j, i))
            .map(|(_, w)| w.as_slice())
    }

    /// Output at node `i` for channel cell sequences `inputs[ch][c]`.
    pub fn node_output(&self, inputs: &[&[f64]], i: usize) -> f64 {
        let rev: Vec<Vec<f64>> = inputs.iter().map(|x| reversed_prefix(x, i)).collect();
        let mut y = 0.0;
        for (ch, w) in self.channels.iter().enumerate() {
            let t = w.node_terms(&rev[ch]);
            y += t[0] + t[1];
        }
        for ((j, k), w) in &self.cross {
            y += bilinear(w, self.n, &rev[*j], &rev[*k]);
        }
        y
    }
}

/// Σ_{a,b} W[a, b] u[a] v[b] over the first `u.len()` lags.
pub(crate) fn bilinear(w: &[f64], n: usize, u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, ua) in u.iter().enumerate() {
        if *ua == 0.0 {
            continue;
        }
        let row = &w[a * n..a * n + v.len()];
        let mut r = 0.0;
        for (wb, vb) in row.iter().zip(v) {
            r += wb * vb;
        }
        acc += ua * r;
    }
    acc
}

/// Node response of a vector model; all channels share one grid.
pub fn simulate_vector(model: &VectorQuadraticModel, x: &[SampledSignal]) -> Result<SampledSignal> {
    if x.len() != model.channels() {
        return Err(Error::Parameter(format!(
            "model has {} channels, got {} inputs",
            model.channels(),
            x.len()
        )));
    }
    let grid = x[0].grid();
    for s in x {
        s.expect(Placement::Midpoints)?;
        grid.check_same(&s.grid())?;
    }
    let weights = model.weights_on(&grid)?;
    let inputs: Vec<&[f64]> = x.iter().map(|s| s.values()).collect();
    let vals = (0..=grid.n())
        .into_par_iter()
        .map(|i| weights.node_output(&inputs, i))
        .collect();
    SampledSignal::nodes(grid, vals)
}

/// Errors against a fine-grid self-reference and observed orders.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub ns: Vec<usize>,
    pub errors: Vec<f64>,
    /// log2(e_k / e_{k+1}) for consecutive entries.
    pub orders: Vec<f64>,
}

/// Max node error on `[0, t_end]` for each cell count in `ns`, measured
/// against a run on `reference_n` cells (a common multiple of all `ns`).
pub fn convergence_probe(
    kernels: &KernelSet,
    x: &(dyn Fn(f64) -> f64 + Sync),
    t_end: f64,
    ns: &[usize],
    reference_n: usize,
) -> Result<ConvergenceTable> {
    if let Some(n) = ns.iter().find(|&&n| n == 0 || reference_n % n != 0) {
        return Err(Error::Parameter(format!(
            "reference cell count {reference_n} is not a multiple of {n}"
        )));
    }
    let model = VolterraModel::midpoint(kernels.clone());
    let run = |n: usize| -> Result<Vec<f64>> {
        let g = TimeGrid::covering(t_end, n)?;
        let xs = SampledSignal::sample_midpoints(g, x)?;
        Ok(simulate(&model, &xs)?.into_values())
    };
    let reference = run(reference_n)?;
    let mut errors = Vec::with_capacity(ns.len());
    for &n in ns {
        let y = run(n)?;
        let stride = reference_n / n;
        let e = y
            .iter()
            .enumerate()
            .map(|(i, v)| (v - reference[i * stride]).abs())
            .fold(0.0, f64::max);
        errors.push(e);
    }
    let orders = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(ConvergenceTable {
        ns: ns.to_vec(),
        errors,
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(h: f64, n: usize) -> TimeGrid {
        TimeGrid::new(h, n).unwrap()
    }

    #[test]
    fn unit_kernel_unit_input() {
        let grid = g(0.1, 10);
        let m = VolterraModel::midpoint(KernelSet::linear(Kernel1::constant(1.0)));
        let x = SampledSignal::midpoints(grid, vec![1.0; 10]).unwrap();
        let y = simulate(&m, &x).unwrap();
        for (i, v) in y.values().iter().enumerate() {
            assert!((v - i as f64 * 0.1).abs() < 1e-14);
        }
    }

    #[test]
    fn exponential_kernel_is_second_order() {
        let err = |n: usize| {
            let grid = TimeGrid::covering(2.0, n).unwrap();
            let m = VolterraModel::midpoint(KernelSet::linear(Kernel1::analytic(|s| (-s).exp())));
            let x = SampledSignal::midpoints(grid, vec![1.0; n]).unwrap();
            let y = simulate(&m, &x).unwrap();
            grid.nodes()
                .iter()
                .zip(y.values())
                .map(|(t, v)| (v - (1.0 - (-t).exp())).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(40), err(80));
        assert!(e1 < 1e-3);
        assert!(((e1 / e2).log2() - 2.0).abs() < 0.05);
    }

    #[test]
    fn reference_quadratic_step() {
        let grid = g(0.05, 20);
        let beta = 0.8;
        let m = VolterraModel::midpoint(KernelSet::quadratic(
            Kernel1::constant(1.0),
            Kernel2::constant(0.5),
        ));
        let x = SampledSignal::midpoints(grid, vec![beta; 20]).unwrap();
        let y = simulate(&m, &x).unwrap();
        for (t, v) in grid.nodes().iter().zip(y.values()) {
            let bt = beta * t;
            assert!((v - (bt + bt * bt / 2.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn cubic_symmetric_sum_matches_naive() {
        let grid = g(0.1, 9);
        let k3 = Kernel3::analytic(|a, b, c| 1.0 + a * b * c + a + b * b + c * c * c + (a * b + b * c + a * c));
        let k = KernelSet::cubic(
            Kernel1::constant(0.0),
            Kernel2::constant(0.0),
            k3.clone(),
        );
        let w = PiWeights::midpoint(&k, &grid).unwrap();
        let x: Vec<f64> = (0..9).map(|c| ((c * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let t = w.c.as_ref().unwrap();
        for i in 0..=9 {
            let rev = reversed_prefix(&x, i);
            let mut naive = 0.0;
            for a in 0..i {
                for b in 0..i {
                    for c in 0..i {
                        naive += t.get(a, b, c) * rev[a] * rev[b] * rev[c];
                    }
                }
            }
            let fast = w.node_terms(&rev)[2];
            assert!((naive - fast).abs() < 1e-13 * (1.0 + naive.abs()), "node {i}");
        }
    }

    #[test]
    fn pi_constant_kernel_equals_midpoint() {
        let grid = g(0.1, 12);
        let k = KernelSet::cubic(Kernel1::constant(1.0), Kernel2::constant(0.5), Kernel3::constant(1.0 / 6.0));
        let pi = VolterraModel::product_integration(PiWeights::integrated(&k, &grid).unwrap());
        let mid = VolterraModel::midpoint(k);
        let x = SampledSignal::sample_midpoints(grid, |t| (5.0 * t).sin()).unwrap();
        let a = simulate(&pi, &x).unwrap();
        let b = simulate(&mid, &x).unwrap();
        for (u, v) in a.values().iter().zip(b.values()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn short_weights_rejected() {
        let w = PiWeights { m: vec![1.0; 3], l: None, c: None };
        let m = VolterraModel::product_integration(w);
        let x = SampledSignal::midpoints(g(0.1, 4), vec![1.0; 4]).unwrap();
        assert!(simulate(&m, &x).is_err());
    }

    fn two_channel(cross: f64) -> VectorQuadraticModel {
        VectorQuadraticModel::new(
            vec![Kernel1::analytic(|s| (-s).exp()), Kernel1::constant(0.5)],
            vec![Kernel2::constant(0.25), Kernel2::analytic(|a, b| a * b)],
        )
        .unwrap()
        .with_cross(0, 1, CrossKernel::analytic(move |_, _| cross))
        .unwrap()
    }

    #[test]
    fn vector_zero_input() {
        let grid = g(0.1, 10);
        let z = SampledSignal::zeros(grid, Placement::Midpoints);
        let y = simulate_vector(&two_channel(1.0), &[z.clone(), z]).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vector_single_channel_matches_scalar() {
        let grid = g(0.1, 10);
        let x = SampledSignal::sample_midpoints(grid, |t| 1.0 + t).unwrap();
        let z = SampledSignal::zeros(grid, Placement::Midpoints);
        let v = simulate_vector(&two_channel(1.0), &[x.clone(), z]).unwrap();
        let s = simulate(
            &VolterraModel::midpoint(KernelSet::quadratic(
                Kernel1::analytic(|s| (-s).exp()),
                Kernel2::constant(0.25),
            )),
            &x,
        )
        .unwrap();
        assert_eq!(v.values(), s.values());
    }

    #[test]
    fn vector_cross_term() {
        let grid = g(0.05, 20);
        let model = VectorQuadraticModel::new(
            vec![Kernel1::constant(0.0), Kernel1::constant(0.0)],
            vec![Kernel2::constant(0.0), Kernel2::constant(0.0)],
        )
        .unwrap()
        .with_cross(0, 1, CrossKernel::analytic(|_, _| 1.0))
        .unwrap();
        let one = SampledSignal::midpoints(grid, vec![1.0; 20]).unwrap();
        let y = simulate_vector(&model, &[one.clone(), one]).unwrap();
        for (t, v) in grid.nodes().iter().zip(y.values()) {
            assert!((v - t * t).abs() < 1e-13);
        }
        assert!(simulate_vector(&model, &[SampledSignal::zeros(grid, Placement::Midpoints)]).is_err());
    }

    #[test]
    fn probe_orders() {
        let lin = KernelSet::linear(Kernel1::analytic(|s| (-s).exp() * (2.0 * s).cos()));
        let tab = convergence_probe(&lin, &|t: f64| 1.0 + t.sin(), 2.0, &[16, 32, 64], 512).unwrap();
        assert!(tab.orders.iter().all(|o| (o - 2.0).abs() < 0.2), "{:?}", tab.orders);
        let quad = KernelSet::quadratic(
            Kernel1::analytic(|s| (-s).exp()),
            Kernel2::analytic(|a, b| (-(a + b)).exp() + 0.5 * a * b),
        );
        let tab = convergence_probe(&quad, &|t: f64| (2.0 * t).cos(), 2.0, &[16, 32, 64], 512).unwrap();
        assert!(tab.orders.iter().all(|o| (o - 2.0).abs() < 0.2), "{:?}", tab.orders);
        let tau = 0.5 + 1.0 / 3.0;
        let tab = convergence_probe(&quad, &|t: f64| if t < tau { 1.0 } else { 0.0 }, 2.0, &[16, 32, 64, 128], 1024)
            .unwrap();
        let mean: f64 = tab.orders.iter().sum::<f64>() / tab.orders.len() as f64;
        assert!(mean >= 1.0 - 0.1, "{:?}", tab.orders);
        assert!(convergence_probe(&lin, &|_| 1.0, 1.0, &[3], 512).is_err());
    }

    proptest! {
        #[test]
        fn homogeneity_by_degree(
            xs in proptest::collection::vec(-2.0f64..2.0, 8),
            c in -3.0f64..3.0,
        ) {
            let grid = TimeGrid::new(0.1, 8).unwrap();
            let k = KernelSet::cubic(
                Kernel1::analytic(|s| 1.0 - s),
                Kernel2::analytic(|a, b| a + b),
                Kernel3::analytic(|a, b, c| 1.0 + a * b * c),
            );
            let m = VolterraModel::midpoint(k);
            let x = SampledSignal::midpoints(grid, xs).unwrap();
            let base = simulate_terms(&m, &x).unwrap();
            let scaled = simulate_terms(&m, &x.scaled(c)).unwrap();
            for d in 0..3 {
                let f = c.powi(d as i32 + 1);
                for i in 0..=8 {
                    let e = base[d][i] * f;
                    prop_assert!((scaled[d][i] - e).abs() <= 1e-12 * (1.0 + e.abs()));
                }
            }
        }

        #[test]
        fn causality(
            xs in proptest::collection::vec(-2.0f64..2.0, 10),
            cut in 0usize..10,
            junk in -5.0f64..5.0,
        ) {
            let grid = TimeGrid::new(0.1, 10).unwrap();
            let k = KernelSet::cubic(Kernel1::constant(1.0), Kernel2::constant(0.5), Kernel3::constant(0.2));
            let m = VolterraModel::midpoint(k);
            let mut other = xs.clone();
            for v in &mut other[cut..] {
                *v = junk;
            }
            let a = simulate(&m, &SampledSignal::midpoints(grid, xs).unwrap()).unwrap();
            let b = simulate(&m, &SampledSignal::midpoints(grid, other).unwrap()).unwrap();
            for i in 0..=cut {
                prop_assert_eq!(a.values()[i], b.values()[i]);
            }
        }
    }
}
