//! Piecewise-constant test-signal families and their amplitude constraints.

use crate::error::{Error, Result};
use crate::grid::{SampledSignal, TimeGrid};

/// Relative tolerance of the amplitude sum constraint.
pub const SUM_TOL: f64 = 1e-12;

/// A family of test signals α_k Σ_i γ_i I(t - b_i) for one kernel order.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFamilySpec {
    m: usize,
    amplitudes: Vec<f64>,
    omegas: Vec<f64>,
}

impl TestFamilySpec {
    /// `m` in {2, 3}; `m` distinct nonzero amplitudes; `m - 1` positive durations.
    pub fn new(m: usize, amplitudes: Vec<f64>, omegas: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&m) {
            return Err(Error::Parameter(format!("family order must be 2 or 3, got {m}")));
        }
        if amplitudes.len() != m {
            return Err(Error::Parameter(format!(
                "order {m} needs {m} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        if omegas.len() != m - 1 {
            return Err(Error::Parameter(format!(
                "order {m} needs {} durations, got {}",
                m - 1,
                omegas.len()
            )));
        }
        check_amplitudes(&amplitudes)?;
        if let Some(w) = omegas.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Parameter(format!("durations must be positive, got {w}")));
        }
        Ok(Self {
            m,
            amplitudes,
            omegas,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }
}

/// Amplitudes must be finite, nonzero and pairwise distinct.
pub fn check_amplitudes(amplitudes: &[f64]) -> Result<()> {
    for (i, a) in amplitudes.iter().enumerate() {
        if !a.is_finite() || *a == 0.0 {
            return Err(Error::Parameter(format!("amplitude {i} must be finite and nonzero")));
        }
        if amplitudes[..i].contains(a) {
            return Err(Error::Parameter(format!("amplitude {a} is repeated")));
        }
    }
    Ok(())
}

/// Coefficients γ_0 = 1, γ_i = 2(-1)^i inside, γ_{m-1} = (-1)^{m-1}.
pub fn gammas(m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            if i == 0 || i == m - 1 {
                s
            } else {
                2.0 * s
            }
        })
        .collect()
}

/// Midpoint samples of the `k`-th member (0-based amplitude index).
pub fn build_signal(spec: &TestFamilySpec, k: usize, grid: TimeGrid) -> Result<SampledSignal> {
    let alpha = *spec
        .amplitudes
        .get(k)
        .ok_or_else(|| Error::Parameter(format!("amplitude index {k} out of range")))?;
    let cells = spec
        .omegas
        .iter()
        .map(|&w| grid.cells_in(w))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = cells.iter().sum();
    if total > grid.n() {
        return Err(Error::Parameter(format!(
            "durations sum to {} cells but the grid has {}",
            total,
            grid.n()
        )));
    }
    SampledSignal::midpoints(grid, staircase(grid.n(), alpha, &cells))
}

/// Cell values of α Σ γ_i I(t - b_i) with breakpoints after the given cell counts.
pub(crate) fn staircase(n: usize, alpha: f64, cells: &[usize]) -> Vec<f64> {
    let g = gammas(cells.len() + 1);
    let mut values = vec![0.0; n];
    let mut level = 0.0;
    let mut start = 0;
    for (i, gi) in g.iter().enumerate() {
        level += gi;
        let end = if i < cells.len() { (start + cells[i]).min(n) } else { n };
        for v in &mut values[start..end] {
            *v = alpha * level;
        }
        start = end;
    }
    values
}

/// Outcome of the amplitude constraint check.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeCheck {
    pub ok: bool,
    pub sum: f64,
    pub message: String,
}

/// Checks Σ α_k = 0 within `SUM_TOL`·max|α|; skipped in product-integration mode.
pub fn validate_amplitudes(spec: &TestFamilySpec, pi_mode: bool) -> AmplitudeCheck {
    let sum: f64 = spec.amplitudes.iter().sum();
    if pi_mode {
        return AmplitudeCheck {
            ok: true,
            sum,
            message: "product-integration mode: no sum constraint".into(),
        };
    }
    let scale = spec.amplitudes.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let ok = sum.abs() <= SUM_TOL * scale;
    let names = (1..=spec.m)
        .map(|i| format!("a{i}"))
        .collect::<Vec<_>>()
        .join(" + ");
    let message = if ok {
        format!("{names} = 0 holds")
    } else {
        format!("{names} = 0 violated: sum is {sum}")
    };
    AmplitudeCheck { ok, sum, message }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spec_validation() {
        assert!(TestFamilySpec::new(4, vec![1.0; 4], vec![1.0; 3]).is_err());
        assert!(TestFamilySpec::new(2, vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(TestFamilySpec::new(2, vec![1.0, 0.0], vec![1.0]).is_err());
        assert!(TestFamilySpec::new(2, vec![1.0, -1.0], vec![0.0]).is_err());
        assert!(TestFamilySpec::new(3, vec![1.0, 2.0, -3.0], vec![1.0]).is_err());
    }

    #[test]
    fn window_signal() {
        let g = TimeGrid::new(0.1, 6).unwrap();
        let s = TestFamilySpec::new(2, vec![1.0, -1.0], vec![0.2]).unwrap();
        let x = build_signal(&s, 0, g).unwrap();
        assert_eq!(x.values(), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let x = build_signal(&s, 1, g).unwrap();
        assert_eq!(x.values(), &[-1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn doublet_signal() {
        let g = TimeGrid::new(0.1, 5).unwrap();
        let s = TestFamilySpec::new(3, vec![1.0, 2.0, -3.0], vec![0.1, 0.1]).unwrap();
        let x = build_signal(&s, 0, g).unwrap();
        assert_eq!(x.values(), &[1.0, -1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn doublet_integral() {
        let g = TimeGrid::new(0.05, 40).unwrap();
        let (w1, w2, a) = (0.35, 0.6, 1.7);
        let s = TestFamilySpec::new(3, vec![a, 1.0, -a - 1.0], vec![w1, w2]).unwrap();
        let x = build_signal(&s, 0, g).unwrap();
        let area: f64 = x.values().iter().map(|v| v * g.h()).sum();
        assert!((area - a * (w1 - w2)).abs() < 1e-12);
    }

    #[test]
    fn alignment_and_cover_errors() {
        let g = TimeGrid::new(0.1, 5).unwrap();
        let s = TestFamilySpec::new(2, vec![1.0, -1.0], vec![0.15]).unwrap();
        assert!(matches!(build_signal(&s, 0, g), Err(Error::Alignment { .. })));
        let s = TestFamilySpec::new(3, vec![1.0, 2.0, -3.0], vec![0.3, 0.3]).unwrap();
        assert!(build_signal(&s, 0, g).is_err());
        assert!(build_signal(&s, 3, g).is_err());
    }

    #[test]
    fn amplitude_constraints() {
        let b = 1.0;
        let s = TestFamilySpec::new(2, vec![0.7, -0.7], vec![1.0]).unwrap();
        assert!(validate_amplitudes(&s, false).ok);
        let s = TestFamilySpec::new(3, vec![0.475 * b, 0.885 * b, -1.36 * b], vec![1.0, 1.0]).unwrap();
        assert!(validate_amplitudes(&s, false).ok);
        let s = TestFamilySpec::new(2, vec![0.464 * b, 0.928 * b], vec![1.0]).unwrap();
        let r = validate_amplitudes(&s, false);
        assert!(!r.ok);
        assert!(r.message.contains("a1 + a2"));
        assert!(validate_amplitudes(&s, true).ok);
    }

    proptest! {
        #[test]
        fn plateau_structure(
            m in 2usize..4,
            l1 in 1usize..6,
            l2 in 1usize..6,
            alpha in 0.1f64..3.0,
        ) {
            let g = TimeGrid::new(0.25, 16).unwrap();
            let omegas = if m == 2 { vec![l1 as f64 * 0.25] } else { vec![l1 as f64 * 0.25, l2 as f64 * 0.25] };
            let amps = if m == 2 { vec![alpha, -alpha] } else { vec![alpha, 2.0 * alpha, -3.0 * alpha] };
            let s = TestFamilySpec::new(m, amps, omegas).unwrap();
            let x = build_signal(&s, 0, g).unwrap();
            let v = x.values();
            let breaks = v.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert_eq!(breaks, m - 1);
            let mut levels: Vec<f64> = v.to_vec();
            levels.dedup();
            prop_assert!(levels.len() <= m);
            if m == 3 {
                prop_assert_eq!(levels, vec![alpha, -alpha, 0.0]);
            }
        }
    }
}
