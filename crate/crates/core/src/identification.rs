//! Kernel and product-integration weight recovery from responses to the
//! piecewise-constant test families.
//!
//! Lattice conventions. For a node `i` the lag of input cell `c` is `i - 1 - c`.
//! An order-2 lattice point `(i, l)` holds the response at node `i` to a window
//! over the first `l` cells, i.e. lags `[i - l, i)`. An order-3 point
//! `(i, l1, l2)` holds the response at node `i` to `+1` on the first `l1` cells
//! and `-1` on the next `l2`, i.e. `+1` on lags `[mid, top)` and `-1` on lags
//! `[lo, mid)` with `top = i`, `mid = i - l1`, `lo = mid - l2`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Kernel1, Kernel2, Kernel3, Placement, SampledSignal, SymMatrix, SymTensor3, TimeGrid};
use crate::reference::{hx_response, ref_response, HeatExchangerParams, RefModel};
use crate::signals::{check_amplitudes, staircase};
use crate::simulation::{
    simulate, simulate_vector, CrossKernel, KernelSet, PiWeights, VectorQuadraticModel, VolterraModel,
};

/// Single-input system observed at grid nodes.
pub trait ScalarSystem: Sync {
    fn respond(&self, x: &SampledSignal) -> Result<SampledSignal>;
}

/// Multi-input system observed at grid nodes.
pub trait VectorSystem: Sync {
    fn channels(&self) -> usize;
    fn respond(&self, x: &[SampledSignal]) -> Result<SampledSignal>;
}

impl ScalarSystem for RefModel {
    fn respond(&self, x: &SampledSignal) -> Result<SampledSignal> {
        ref_response(self, x)
    }
}

impl ScalarSystem for VolterraModel {
    fn respond(&self, x: &SampledSignal) -> Result<SampledSignal> {
        simulate(self, x)
    }
}

impl VectorSystem for VectorQuadraticModel {
    fn channels(&self) -> usize {
        VectorQuadraticModel::channels(self)
    }

    fn respond(&self, x: &[SampledSignal]) -> Result<SampledSignal> {
        simulate_vector(self, x)
    }
}

/// The heat-exchanger plant with inputs (ΔD, ΔQ).
#[derive(Debug, Clone, Copy)]
pub struct HxPlant(pub HeatExchangerParams);

impl VectorSystem for HxPlant {
    fn channels(&self) -> usize {
        2
    }

    fn respond(&self, x: &[SampledSignal]) -> Result<SampledSignal> {
        if x.len() != 2 {
            return Err(Error::Parameter(format!("plant has 2 inputs, got {}", x.len())));
        }
        hx_response(&self.0, &x[0], &x[1])
    }
}

/// One channel of a vector system with the other inputs held at zero.
pub struct ChannelView<'a, S: VectorSystem> {
    pub system: &'a S,
    pub channel: usize,
}

impl<S: VectorSystem> ScalarSystem for ChannelView<'_, S> {
    fn respond(&self, x: &SampledSignal) -> Result<SampledSignal> {
        let zero = SampledSignal::zeros(x.grid(), Placement::Midpoints);
        let inputs: Vec<SampledSignal> = (0..self.system.channels())
            .map(|c| if c == self.channel { x.clone() } else { zero.clone() })
            .collect();
        self.system.respond(&inputs)
    }
}

/// Values on the order-2 lattice `0 <= l <= i <= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice2 {
    n: usize,
    data: Vec<f64>,
}

impl Lattice2 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; (n + 1) * (n + 2) / 2],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(i: usize, l: usize) -> usize {
        debug_assert!(l <= i);
        i * (i + 1) / 2 + l
    }

    #[inline]
    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.data[Self::index(i, l)]
    }

    pub fn set(&mut self, i: usize, l: usize, v: f64) {
        self.data[Self::index(i, l)] = v;
    }

    fn map_points(&self, f: impl Fn(usize) -> f64) -> Self {
        Self {
            n: self.n,
            data: (0..self.data.len()).map(f).collect(),
        }
    }
}

/// Values on the order-3 lattice `l1 + l2 <= i <= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice3 {
    n: usize,
    data: Vec<f64>,
}

impl Lattice3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; (n + 1) * (n + 2) * (n + 3) / 6],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(i: usize, l1: usize, l2: usize) -> usize {
        debug_assert!(l1 + l2 <= i);
        i * (i + 1) * (i + 2) / 6 + l1 * (i + 1) - l1 * l1.saturating_sub(1) / 2 + l2
    }

    #[inline]
    pub fn get(&self, i: usize, l1: usize, l2: usize) -> f64 {
        self.data[Self::index(i, l1, l2)]
    }

    pub fn set(&mut self, i: usize, l1: usize, l2: usize, v: f64) {
        self.data[Self::index(i, l1, l2)] = v;
    }

    /// Value addressed by lag boundaries `lo <= mid <= top`.
    #[inline]
    pub fn at_lags(&self, lo: usize, mid: usize, top: usize) -> f64 {
        self.get(top, top - mid, mid - lo)
    }

    /// The `l2 = 0` slice, which holds window responses.
    pub fn windows(&self) -> Lattice2 {
        let mut out = Lattice2::zeros(self.n);
        for i in 0..=self.n {
            for l in 0..=i {
                out.set(i, l, self.get(i, l, 0));
            }
        }
        out
    }

    fn map_points(&self, f: impl Fn(usize) -> f64) -> Self {
        Self {
            n: self.n,
            data: (0..self.data.len()).map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Lattice {
    Two(Lattice2),
    Three(Lattice3),
}

impl Lattice {
    fn n(&self) -> usize {
        match self {
            Lattice::Two(l) => l.n,
            Lattice::Three(l) => l.n,
        }
    }

    fn data(&self) -> &[f64] {
        match self {
            Lattice::Two(l) => &l.data,
            Lattice::Three(l) => &l.data,
        }
    }

    fn order(&self) -> usize {
        match self {
            Lattice::Two(_) => 2,
            Lattice::Three(_) => 3,
        }
    }

    fn map_like(&self, f: impl Fn(usize) -> f64) -> Self {
        match self {
            Lattice::Two(l) => Lattice::Two(l.map_points(f)),
            Lattice::Three(l) => Lattice::Three(l.map_points(f)),
        }
    }

    pub fn as_two(&self) -> Option<&Lattice2> {
        match self {
            Lattice::Two(l) => Some(l),
            Lattice::Three(_) => None,
        }
    }

    pub fn as_three(&self) -> Option<&Lattice3> {
        match self {
            Lattice::Three(l) => Some(l),
            Lattice::Two(_) => None,
        }
    }

    /// Step responses f(i, i[, 0]) along the lattice diagonal.
    fn diagonal(&self) -> Vec<f64> {
        match self {
            Lattice::Two(l) => (0..=l.n).map(|i| l.get(i, i)).collect(),
            Lattice::Three(l) => (0..=l.n).map(|i| l.get(i, i, 0)).collect(),
        }
    }

    fn windows(&self) -> Lattice2 {
        match self {
            Lattice::Two(l) => l.clone(),
            Lattice::Three(l) => l.windows(),
        }
    }
}

/// Responses to one test family, one lattice per amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    grid: TimeGrid,
    amplitudes: Vec<f64>,
    lattices: Vec<Lattice>,
}

impl ResponseTable {
    pub fn new(grid: TimeGrid, amplitudes: Vec<f64>, lattices: Vec<Lattice>) -> Result<Self> {
        if amplitudes.len() != lattices.len() || lattices.is_empty() {
            return Err(Error::InconsistentTable(format!(
                "{} amplitudes but {} lattices",
                amplitudes.len(),
                lattices.len()
            )));
        }
        let order = lattices[0].order();
        for l in &lattices {
            if l.n() != grid.n() || l.order() != order {
                return Err(Error::InconsistentTable(
                    "lattices must share the grid size and order".into(),
                ));
            }
            if l.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::InconsistentTable("non-finite response".into()));
            }
        }
        Ok(Self {
            grid,
            amplitudes,
            lattices,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn lattices(&self) -> &[Lattice] {
        &self.lattices
    }

    pub fn order(&self) -> usize {
        self.lattices[0].order()
    }
}

/// Midpoint cells of the order-2 test signal: `alpha` on the first `l` cells.
pub fn window_cells(n: usize, alpha: f64, l: usize) -> Vec<f64> {
    staircase(n, alpha, &[l])
}

/// Midpoint cells of the order-3 test signal with `l1`, `l2` cell durations.
pub fn doublet_cells(n: usize, alpha: f64, l1: usize, l2: usize) -> Vec<f64> {
    staircase(n, alpha, &[l1, l2])
}

/// Responses to windows of every width `1..=n` for each amplitude.
pub fn collect_order2(sys: &dyn ScalarSystem, grid: TimeGrid, amplitudes: &[f64]) -> Result<ResponseTable> {
    check_amplitudes(amplitudes)?;
    let n = grid.n();
    let mut lattices = Vec::with_capacity(amplitudes.len());
    for &alpha in amplitudes {
        let rows = (1..=n)
            .into_par_iter()
            .map(|l| {
                let x = SampledSignal::midpoints(grid, window_cells(n, alpha, l))?;
                Ok(sys.respond(&x)?.into_values())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut lat = Lattice2::zeros(n);
        for (k, y) in rows.iter().enumerate() {
            let l = k + 1;
            for i in l..=n {
                lat.set(i, l, y[i]);
            }
        }
        lattices.push(Lattice::Two(lat));
    }
    ResponseTable::new(grid, amplitudes.to_vec(), lattices)
}

/// Responses to doublets of every duration pair with `l1 + l2 <= n`.
pub fn collect_order3(sys: &dyn ScalarSystem, grid: TimeGrid, amplitudes: &[f64]) -> Result<ResponseTable> {
    check_amplitudes(amplitudes)?;
    let n = grid.n();
    let pairs: Vec<(usize, usize)> = (0..=n)
        .flat_map(|l1| (0..=n - l1).map(move |l2| (l1, l2)))
        .filter(|&(l1, l2)| l1 + l2 > 0)
        .collect();
    let mut lattices = Vec::with_capacity(amplitudes.len());
    for &alpha in amplitudes {
        let rows = pairs
            .par_iter()
            .map(|&(l1, l2)| {
                let x = SampledSignal::midpoints(grid, doublet_cells(n, alpha, l1, l2))?;
                Ok(sys.respond(&x)?.into_values())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut lat = Lattice3::zeros(n);
        for (&(l1, l2), y) in pairs.iter().zip(&rows) {
            for i in l1 + l2..=n {
                lat.set(i, l1, l2, y[i]);
            }
        }
        lattices.push(Lattice::Three(lat));
    }
    ResponseTable::new(grid, amplitudes.to_vec(), lattices)
}

/// Amplitude-free components f_1..f_m on the lattice of the table.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub grid: TimeGrid,
    /// `f[p - 1]` is the degree-`p` component.
    pub f: Vec<Lattice>,
}

/// Solves y_k = Σ_p α_k^p f_p at every lattice point.
pub fn extract_components(table: &ResponseTable) -> Result<Components> {
    let amps = &table.amplitudes;
    let m = amps.len();
    check_amplitudes(amps).map_err(|e| Error::Singular(format!("Vandermonde system: {e}")))?;
    let v = DMatrix::from_fn(m, m, |k, p| amps[k].powi(p as i32 + 1));
    let lu = v.lu();
    if !lu.is_invertible() {
        return Err(Error::Singular("Vandermonde matrix is not invertible".into()));
    }
    let len = table.lattices[0].data().len();
    let mut comps: Vec<Vec<f64>> = vec![vec![0.0; len]; m];
    let mut rhs = DVector::zeros(m);
    for idx in 0..len {
        for k in 0..m {
            rhs[k] = table.lattices[k].data()[idx];
        }
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("Vandermonde solve failed".into()))?;
        for p in 0..m {
            comps[p][idx] = sol[p];
        }
    }
    let f = comps
        .into_iter()
        .map(|c| table.lattices[0].map_like(|i| c[i]))
        .collect();
    Ok(Components { grid: table.grid, f })
}

/// K1 cells from a node step response to `alpha·I(t)`.
pub fn invert_k1(step: &SampledSignal, alpha: f64) -> Result<Kernel1> {
    step.expect(Placement::Nodes)?;
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(Error::Parameter("step amplitude must be nonzero".into()));
    }
    let h = step.grid().h();
    let y = step.values();
    Ok(Kernel1::Grid(
        y.windows(2).map(|w| (w[1] - w[0]) / (alpha * h)).collect(),
    ))
}

/// Linear cell weights m_c from the step responses on a lattice diagonal.
fn linear_weights(f1: &Lattice) -> Vec<f64> {
    f1.diagonal().windows(2).map(|w| w[1] - w[0]).collect()
}

/// Quadratic cell weights from window responses: 2-D inclusion-exclusion.
fn quadratic_weights(f2: &Lattice2) -> SymMatrix {
    let n = f2.n;
    let mut l = SymMatrix::zeros(n);
    for b in 0..n {
        l.set(b, b, f2.get(b + 1, 1));
        for a in 0..b {
            let i = b + 1;
            let w = b - a + 1;
            let v = f2.get(i, w) - f2.get(i, w - 1) - f2.get(i - 1, w - 1) + f2.get(i - 1, w - 2);
            l.set(a, b, 0.5 * v);
        }
    }
    l
}

/// Cubic cell weights from doublet responses.
fn cubic_weights(f3: &Lattice3) -> SymTensor3 {
    let n = f3.n;
    let f = |lo: usize, mid: usize, top: usize| f3.at_lags(lo, mid, top);
    let mut c = SymTensor3::zeros(n);
    for x in 0..n {
        c.set(x, x, x, f(x, x, x + 1));
    }
    // Distinct lags r < m < p: third mixed difference moves r into the
    // negative block, m across blocks and p into the positive block.
    for p in 0..n {
        for m in 0..p {
            for r in 0..m {
                let mut d = 0.0;
                for (lo, slo) in [(r, 1.0), (r + 1, -1.0)] {
                    for (mid, smid) in [(m + 1, 1.0), (m, -1.0)] {
                        for (top, stop) in [(p + 1, 1.0), (p, -1.0)] {
                            d += slo * smid * stop * f(lo, mid, top);
                        }
                    }
                }
                c.set(p, m, r, d / 12.0);
            }
        }
    }
    // Pairs p > r.
    for p in 0..n {
        for r in 0..p {
            let e1 = f(r, r, p + 1) - f(r, r, p) - f(r + 1, r + 1, p + 1) + f(r + 1, r + 1, p);
            let e2 = f(r, r + 1, p + 1) - f(r, r + 1, p) - f(r + 1, r + 1, p + 1) + f(r + 1, r + 1, p);
            c.set(p, r, r, (e1 + e2) / 6.0);
            let between: f64 = (r + 1..p).map(|x| c.get(x, p, r)).sum();
            c.set(p, p, r, (e1 - e2 - 12.0 * between) / 6.0);
        }
    }
    c
}

/// K2 cells from the degree-2 component on the window lattice.
pub fn invert_k2(f2: &Lattice2, grid: &TimeGrid) -> Result<Kernel2> {
    if f2.n < 3 {
        return Err(Error::LatticeTooSmall { need: 3, got: f2.n });
    }
    let h2 = grid.h() * grid.h();
    let l = quadratic_weights(f2);
    Ok(Kernel2::Grid(SymMatrix::from_fn(f2.n, |a, b| l.get(a, b) / h2)))
}

/// K3 cells from the degree-3 component on the doublet lattice.
pub fn invert_k3(f3: &Lattice3, grid: &TimeGrid) -> Result<Kernel3> {
    if f3.n < 4 {
        return Err(Error::LatticeTooSmall { need: 4, got: f3.n });
    }
    let h3 = grid.h().powi(3);
    let c = cubic_weights(f3);
    Ok(Kernel3::Grid(SymTensor3::from_fn(f3.n, |a, b, k| c.get(a, b, k) / h3)))
}

fn require_order(table: &ResponseTable, order: usize, count: usize) -> Result<()> {
    if table.order() != order || table.amplitudes.len() != count {
        return Err(Error::InconsistentTable(format!(
            "expected an order-{order} table with {count} amplitudes, got order {} with {}",
            table.order(),
            table.amplitudes.len()
        )));
    }
    Ok(())
}

/// Grid kernels K1, K2 from an order-2 table with two amplitudes.
pub fn identify_quadratic_kernels(table: &ResponseTable) -> Result<KernelSet> {
    require_order(table, 2, 2)?;
    let grid = table.grid;
    let comps = extract_components(table)?;
    let h = grid.h();
    let k1 = Kernel1::Grid(linear_weights(&comps.f[0]).into_iter().map(|v| v / h).collect());
    let k2 = invert_k2(&comps.f[1].windows(), &grid)?;
    Ok(KernelSet::quadratic(k1, k2))
}

/// Grid kernels K1, K2, K3 from an order-3 table with three amplitudes.
pub fn identify_cubic_kernels(table: &ResponseTable) -> Result<KernelSet> {
    require_order(table, 3, 3)?;
    let grid = table.grid;
    let comps = extract_components(table)?;
    let h = grid.h();
    let k1 = Kernel1::Grid(linear_weights(&comps.f[0]).into_iter().map(|v| v / h).collect());
    let k2 = invert_k2(&comps.f[1].windows(), &grid)?;
    let f3 = comps.f[2]
        .as_three()
        .ok_or_else(|| Error::InconsistentTable("missing doublet lattice".into()))?;
    let k3 = invert_k3(f3, &grid)?;
    Ok(KernelSet::cubic(k1, k2, k3))
}

/// Product-integration weights m, l from an order-2 table with two amplitudes.
pub fn identify_pi_quadratic(table: &ResponseTable) -> Result<PiWeights> {
    require_order(table, 2, 2)?;
    let comps = extract_components(table)?;
    Ok(PiWeights {
        m: linear_weights(&comps.f[0]),
        l: Some(quadratic_weights(&comps.f[1].windows())),
        c: None,
    })
}

/// Product-integration weights m, l, c from an order-3 table with three amplitudes.
pub fn identify_pi_cubic(table: &ResponseTable) -> Result<PiWeights> {
    require_order(table, 3, 3)?;
    let comps = extract_components(table)?;
    let f3 = comps.f[2]
        .as_three()
        .ok_or_else(|| Error::InconsistentTable("missing doublet lattice".into()))?;
    Ok(PiWeights {
        m: linear_weights(&comps.f[0]),
        l: Some(quadratic_weights(&comps.f[1].windows())),
        c: Some(cubic_weights(f3)),
    })
}

/// Quadratic kernels of a scalar system probed with amplitudes `±alpha`.
pub fn identify_quadratic(sys: &dyn ScalarSystem, grid: TimeGrid, alpha: f64) -> Result<KernelSet> {
    identify_quadratic_kernels(&collect_order2(sys, grid, &[alpha, -alpha])?)
}

/// Cubic kernels of a scalar system probed with three amplitudes.
pub fn identify_cubic(sys: &dyn ScalarSystem, grid: TimeGrid, amplitudes: [f64; 3]) -> Result<KernelSet> {
    identify_cubic_kernels(&collect_order3(sys, grid, &amplitudes)?)
}

/// Quadratic vector model from single-channel windows at `±amplitudes[ch]`
/// and paired windows at `+amplitudes`.
pub fn identify_vector_quadratic<S: VectorSystem>(
    sys: &S,
    grid: TimeGrid,
    amplitudes: &[f64],
) -> Result<VectorQuadraticModel> {
    let p = sys.channels();
    if p < 2 || amplitudes.len() != p {
        return Err(Error::Parameter(format!(
            "need at least 2 channels and one amplitude each, got {p} channels and {} amplitudes",
            amplitudes.len()
        )));
    }
    let n = grid.n();
    let h = grid.h();
    let mut k1 = Vec::with_capacity(p);
    let mut k2 = Vec::with_capacity(p);
    let mut plus = Vec::with_capacity(p);
    for (ch, &alpha) in amplitudes.iter().enumerate() {
        let view = ChannelView { system: sys, channel: ch };
        let table = collect_order2(&view, grid, &[alpha, -alpha])?;
        let ks = identify_quadratic_kernels(&table)?;
        k1.push(ks.k1);
        k2.push(ks.k2.expect("quadratic kernel set"));
        plus.push(table.lattices[0].as_two().expect("order-2 table").clone());
    }
    let mut model = VectorQuadraticModel::new(k1, k2)?;
    for j in 0..p {
        for i in j + 1..p {
            let rect = paired_rectangles(sys, grid, amplitudes, j, i, &plus[j], &plus[i])?;
            let mut data = vec![0.0; n * n];
            let r = |t: usize, la: usize, lb: usize| -> f64 {
                if la == 0 || lb == 0 {
                    0.0
                } else {
                    rect[(t * (n + 1) + la) * (n + 1) + lb]
                }
            };
            for a in 0..n {
                for b in 0..n {
                    let t = a.max(b) + 1;
                    let (la, lb) = (t - a, t - b);
                    let v = r(t, la, lb) - r(t, la - 1, lb) - r(t, la, lb - 1) + r(t, la - 1, lb - 1);
                    data[a * n + b] = v / (h * h);
                }
            }
            model = model.with_cross(j, i, CrossKernel::Grid { n, data })?;
        }
    }
    Ok(model)
}

/// Normalized cross responses R(t; la, lb), dense over `(n + 1)^3`, zero where
/// a window is still open at node `t`.
fn paired_rectangles<S: VectorSystem>(
    sys: &S,
    grid: TimeGrid,
    amplitudes: &[f64],
    j: usize,
    i: usize,
    single_j: &Lattice2,
    single_i: &Lattice2,
) -> Result<Vec<f64>> {
    let n = grid.n();
    let p = sys.channels();
    let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|a| (1..=n).map(move |b| (a, b))).collect();
    let zero = vec![0.0; n];
    let rows = pairs
        .par_iter()
        .map(|&(la, lb)| {
            let inputs = (0..p)
                .map(|ch| {
                    let v = if ch == j {
                        window_cells(n, amplitudes[j], la)
                    } else if ch == i {
                        window_cells(n, amplitudes[i], lb)
                    } else {
                        zero.clone()
                    };
                    SampledSignal::midpoints(grid, v)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(sys.respond(&inputs)?.into_values())
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = amplitudes[j] * amplitudes[i];
    let mut rect = vec![0.0; (n + 1) * (n + 1) * (n + 1)];
    for (&(la, lb), y) in pairs.iter().zip(&rows) {
        for t in la.max(lb)..=n {
            let v = (y[t] - single_j.get(t, la) - single_i.get(t, lb)) / scale;
            rect[(t * (n + 1) + la) * (n + 1) + lb] = v;
        }
    }
    Ok(rect)
}
