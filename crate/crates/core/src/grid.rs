//! Uniform grids, sampled signals, kernel containers and elementary quadrature.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Uniform mesh with `n` cells of width `h` on `[0, n*h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    h: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(h: f64, n: usize) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Grid(format!("step must be positive, got {h}")));
        }
        if n == 0 {
            return Err(Error::Grid("node count must be at least 1".into()));
        }
        Ok(Self { h, n })
    }

    /// Grid with `n` cells covering `[0, t_end]`.
    pub fn covering(t_end: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Grid("node count must be at least 1".into()));
        }
        Self::new(t_end / n as f64, n)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_end(&self) -> f64 {
        self.n as f64 * self.h
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    /// Midpoint of cell `c`, i.e. `(c + 1/2) h`.
    pub fn mid(&self, c: usize) -> f64 {
        (c as f64 + 0.5) * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }

    pub fn mids(&self) -> Vec<f64> {
        (0..self.n).map(|c| self.mid(c)).collect()
    }

    /// Number of whole cells in a duration, if it is a positive multiple of `h`.
    pub fn cells_in(&self, omega: f64) -> Result<usize> {
        let r = omega / self.h;
        let l = r.round();
        if !(omega > 0.0) || (r - l).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::Alignment { omega, h: self.h });
        }
        Ok(l as usize)
    }

    pub fn check_same(&self, other: &TimeGrid) -> Result<()> {
        if self.n != other.n || (self.h - other.h).abs() > 1e-14 * self.h {
            return Err(Error::GridMismatch(format!(
                "(h = {}, n = {}) vs (h = {}, n = {})",
                self.h, self.n, other.h, other.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Midpoints,
    Nodes,
}

impl Placement {
    fn name(self) -> &'static str {
        match self {
            Placement::Midpoints => "midpoints",
            Placement::Nodes => "nodes",
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Real samples on a grid: `n` cell midpoints or `n + 1` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    grid: TimeGrid,
    placement: Placement,
    values: Vec<f64>,
}

impl SampledSignal {
    pub fn new(grid: TimeGrid, placement: Placement, values: Vec<f64>) -> Result<Self> {
        let expected = match placement {
            Placement::Midpoints => grid.n,
            Placement::Nodes => grid.n + 1,
        };
        if values.len() != expected {
            return Err(Error::Grid(format!(
                "{placement} signal needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample at index {k}")));
        }
        Ok(Self {
            grid,
            placement,
            values,
        })
    }

    pub fn zeros(grid: TimeGrid, placement: Placement) -> Self {
        let len = match placement {
            Placement::Midpoints => grid.n,
            Placement::Nodes => grid.n + 1,
        };
        Self {
            grid,
            placement,
            values: vec![0.0; len],
        }
    }

    pub fn midpoints(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, Placement::Midpoints, values)
    }

    pub fn nodes(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, Placement::Nodes, values)
    }

    pub fn sample_midpoints(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::midpoints(grid, grid.mids().into_iter().map(f).collect())
    }

    pub fn sample_nodes(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::nodes(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Sample times matching the placement.
    pub fn times(&self) -> Vec<f64> {
        match self.placement {
            Placement::Midpoints => self.grid.mids(),
            Placement::Nodes => self.grid.nodes(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            placement: self.placement,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn expect(&self, placement: Placement) -> Result<()> {
        if self.placement != placement {
            return Err(Error::Placement {
                expected: placement.name(),
                got: self.placement.name(),
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Θ(ih) = h Σ_{c<i} x_c, the running midpoint integral, placed at nodes.
pub fn cumulative_integral(x: &SampledSignal) -> Result<SampledSignal> {
    x.expect(Placement::Midpoints)?;
    let h = x.grid.h;
    let mut theta = Vec::with_capacity(x.values.len() + 1);
    let mut acc = 0.0;
    theta.push(0.0);
    for v in &x.values {
        acc += h * v;
        theta.push(acc);
    }
    SampledSignal::nodes(x.grid, theta)
}

/// Derivative at nodes: central differences inside, one-sided second order at the ends.
pub fn node_derivative(y: &[f64], h: f64) -> Vec<f64> {
    let len = y.len();
    match len {
        0 => Vec::new(),
        1 => vec![0.0],
        2 => {
            let d = (y[1] - y[0]) / h;
            vec![d, d]
        }
        _ => {
            let mut d = vec![0.0; len];
            d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
            for i in 1..len - 1 {
                d[i] = (y[i + 1] - y[i - 1]) / (2.0 * h);
            }
            let k = len - 1;
            d[k] = (3.0 * y[k] - 4.0 * y[k - 1] + y[k - 2]) / (2.0 * h);
            d
        }
    }
}

/// Scalar function of time together with its derivative.
#[derive(Clone)]
pub struct SmoothFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for SmoothFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SmoothFn")
    }
}

impl SmoothFn {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            df: Arc::new(df),
        }
    }

    /// Piecewise-linear interpolant of node samples; the derivative comes from
    /// [`node_derivative`] and is interpolated the same way.
    pub fn from_nodes(y: &SampledSignal) -> Result<Self> {
        y.expect(Placement::Nodes)?;
        let h = y.grid.h;
        let vals: Arc<Vec<f64>> = Arc::new(y.values.clone());
        let ders: Arc<Vec<f64>> = Arc::new(node_derivative(&y.values, h));
        let interp = |data: Arc<Vec<f64>>| {
            move |t: f64| {
                let last = data.len() - 1;
                let r = (t / h).clamp(0.0, last as f64);
                let i = (r.floor() as usize).min(last.saturating_sub(1));
                if last == 0 {
                    return data[0];
                }
                let w = r - i as f64;
                data[i] * (1.0 - w) + data[i + 1] * w
            }
        };
        Ok(Self {
            f: Arc::new(interp(vals)),
            df: Arc::new(interp(ders)),
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        (self.df)(t)
    }
}

/// Lower-triangular storage of a symmetric matrix (`i >= j`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * (n + 1) / 2],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.data[i * (i + 1) / 2 + j] = f(i, j);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(i: usize, j: usize) -> usize {
        let (a, b) = if i >= j { (i, j) } else { (j, i) };
        a * (a + 1) / 2 + b
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[Self::index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[Self::index(i, j)] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Storage of a fully symmetric 3-tensor, only `i >= j >= k` kept.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor3 {
    n: usize,
    data: Vec<f64>,
}

impl SymTensor3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * (n + 1) * (n + 2) / 6],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                for k in 0..=j {
                    t.data[Self::sorted_index(i, j, k)] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn sorted_index(i: usize, j: usize, k: usize) -> usize {
        i * (i + 1) * (i + 2) / 6 + j * (j + 1) / 2 + k
    }

    #[inline]
    fn index(i: usize, j: usize, k: usize) -> usize {
        let (mut a, mut b, mut c) = (i, j, k);
        if a < b {
            std::mem::swap(&mut a, &mut b);
        }
        if b < c {
            std::mem::swap(&mut b, &mut c);
        }
        if a < b {
            std::mem::swap(&mut a, &mut b);
        }
        Self::sorted_index(a, b, c)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[Self::index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[Self::index(i, j, k)] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Fn3 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// First-order kernel: analytic, or one value per lag cell.
#[derive(Clone)]
pub enum Kernel1 {
    Analytic(Fn1),
    Grid(Vec<f64>),
}

/// Second-order kernel: analytic, or one value per lag cell pair.
#[derive(Clone)]
pub enum Kernel2 {
    Analytic(Fn2),
    Grid(SymMatrix),
}

/// Third-order kernel: analytic, or one value per lag cell triple.
#[derive(Clone)]
pub enum Kernel3 {
    Analytic(Fn3),
    Grid(SymTensor3),
}

impl fmt::Debug for Kernel1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel1::Analytic(_) => f.write_str("Kernel1::Analytic"),
            Kernel1::Grid(v) => write!(f, "Kernel1::Grid({} cells)", v.len()),
        }
    }
}

impl fmt::Debug for Kernel2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel2::Analytic(_) => f.write_str("Kernel2::Analytic"),
            Kernel2::Grid(m) => write!(f, "Kernel2::Grid({} cells)", m.n()),
        }
    }
}

impl fmt::Debug for Kernel3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel3::Analytic(_) => f.write_str("Kernel3::Analytic"),
            Kernel3::Grid(t) => write!(f, "Kernel3::Grid({} cells)", t.n()),
        }
    }
}

fn short_grid(have: usize, need: usize) -> Error {
    Error::GridMismatch(format!("kernel covers {have} cells, grid needs {need}"))
}

impl Kernel1 {
    pub fn analytic(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel1::Analytic(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::analytic(move |_| c)
    }

    /// Cell values on `grid`; analytic kernels are sampled at cell midpoints.
    pub fn cells(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        match self {
            Kernel1::Analytic(f) => Ok(grid.mids().into_iter().map(|s| f(s)).collect()),
            Kernel1::Grid(v) if v.len() >= grid.n => Ok(v[..grid.n].to_vec()),
            Kernel1::Grid(v) => Err(short_grid(v.len(), grid.n)),
        }
    }
}

impl Kernel2 {
    pub fn analytic(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel2::Analytic(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::analytic(move |_, _| c)
    }

    pub fn cells(&self, grid: &TimeGrid) -> Result<SymMatrix> {
        match self {
            Kernel2::Analytic(f) => Ok(SymMatrix::from_fn(grid.n, |i, j| {
                f(grid.mid(i), grid.mid(j))
            })),
            Kernel2::Grid(m) if m.n() >= grid.n => {
                Ok(SymMatrix::from_fn(grid.n, |i, j| m.get(i, j)))
            }
            Kernel2::Grid(m) => Err(short_grid(m.n(), grid.n)),
        }
    }
}

impl Kernel3 {
    pub fn analytic(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel3::Analytic(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::analytic(move |_, _, _| c)
    }

    pub fn cells(&self, grid: &TimeGrid) -> Result<SymTensor3> {
        match self {
            Kernel3::Analytic(f) => Ok(SymTensor3::from_fn(grid.n, |i, j, k| {
                f(grid.mid(i), grid.mid(j), grid.mid(k))
            })),
            Kernel3::Grid(t) if t.n() >= grid.n => {
                Ok(SymTensor3::from_fn(grid.n, |i, j, k| t.get(i, j, k)))
            }
            Kernel3::Grid(t) => Err(short_grid(t.n(), grid.n)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryReport {
    pub max_deviation: f64,
    pub pass: bool,
}

/// Maximum number of sample points per axis used by the symmetry check.
const SYMMETRY_SAMPLES: usize = 24;

fn symmetry_points(grid: &TimeGrid) -> Vec<f64> {
    let n = grid.n.min(SYMMETRY_SAMPLES);
    let step = grid.t_end() / n as f64;
    (0..n).map(|c| (c as f64 + 0.5) * step).collect()
}

/// Largest deviation under argument transposition over sampled midpoint pairs.
pub fn kernel2_symmetry_check(k: &Kernel2, grid: &TimeGrid, tol: f64) -> SymmetryReport {
    let max_deviation = match k {
        Kernel2::Grid(_) => 0.0,
        Kernel2::Analytic(f) => {
            let pts = symmetry_points(grid);
            let mut dev: f64 = 0.0;
            for &a in &pts {
                for &b in &pts {
                    dev = dev.max((f(a, b) - f(b, a)).abs());
                }
            }
            dev
        }
    };
    SymmetryReport {
        max_deviation,
        pass: max_deviation <= tol,
    }
}

/// Largest deviation over all argument permutations at sampled midpoint triples.
pub fn kernel3_symmetry_check(k: &Kernel3, grid: &TimeGrid, tol: f64) -> SymmetryReport {
    let max_deviation = match k {
        Kernel3::Grid(_) => 0.0,
        Kernel3::Analytic(f) => {
            let pts = symmetry_points(grid);
            let mut dev: f64 = 0.0;
            for &a in &pts {
                for &b in &pts {
                    for &c in &pts {
                        let base = f(a, b, c);
                        for v in [f(a, c, b), f(b, a, c), f(b, c, a), f(c, a, b), f(c, b, a)] {
                            dev = dev.max((v - base).abs());
                        }
                    }
                }
            }
            dev
        }
    };
    SymmetryReport {
        max_deviation,
        pass: max_deviation <= tol,
    }
}
