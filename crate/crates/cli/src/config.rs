//! TOML run configuration. Every section is optional; relative paths are
//! resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use volterra_core::grid::TimeGrid;
use volterra_core::reference::HeatExchangerParams;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub plant: HeatExchangerParams,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub signals: SignalsSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub control: ControlSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub h: f64,
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { h: 0.1, n: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    /// The exponential reference series.
    Reference,
    /// The heat-exchanger plant.
    Hx,
    /// Kernel, weight or response files.
    Files,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    Kernels,
    Pi,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub degree: usize,
    pub mode: ModelMode,
    pub source: ModelSource,
    /// Reference series order; 0 means the full exponential.
    pub reference_order: u32,
    /// Identification amplitudes (scalar systems).
    pub amplitudes: Vec<f64>,
    /// Identification amplitudes as fractions of D0 and Q0 (plant).
    pub amplitude_fraction: f64,
    pub kernel_dir: Option<PathBuf>,
    pub weights_dir: Option<PathBuf>,
    /// Response table CSV for `identify` with the files source.
    pub responses: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            degree: 2,
            mode: ModelMode::Kernels,
            source: ModelSource::Reference,
            reference_order: 0,
            amplitudes: vec![0.5, -0.5],
            amplitude_fraction: 0.25,
            kernel_dir: None,
            weights_dir: None,
            responses: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalsSection {
    pub m: usize,
    pub amplitudes: Vec<f64>,
    pub omegas: Vec<f64>,
    /// Input CSV for `simulate`.
    pub input: Option<PathBuf>,
    /// Constant input level for `simulate` when no file is given.
    pub step: f64,
    /// Second-channel input CSV for plant simulation.
    pub input2: Option<PathBuf>,
}

impl Default for SignalsSection {
    fn default() -> Self {
        Self {
            m: 2,
            amplitudes: vec![1.0, -1.0],
            omegas: vec![0.5],
            input: None,
            step: 1.0,
            input2: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub problem: String,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub tol: f64,
    /// Orders for the stabilization probe; empty to skip.
    pub stabilization_orders: Vec<u32>,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            problem: "3sq".into(),
            b: 1.0,
            t: 1.0,
            tol: 1e-4,
            stabilization_orders: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    /// ∫x + λ(∫x)² = y.
    QuadraticConst,
    /// ∫(1 − L1(t−s))x − λ(∫x)² = F·t.
    LinearKernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rhs {
    /// F·t
    Linear,
    /// F·(e^t − 1)
    ExpM1,
    /// F·t·e^t
    TExp,
    /// Node samples from `rhs_file`.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Numeric,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Midpoint,
    Right,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub equation: Equation,
    pub lambda: f64,
    pub l1: f64,
    pub rhs: Rhs,
    pub f: f64,
    pub rhs_file: Option<PathBuf>,
    pub method: SolveMethod,
    pub rule: RuleName,
    /// Search horizon for blow-up detection.
    pub horizon: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            equation: Equation::QuadraticConst,
            lambda: 1.0,
            l1: 1.0,
            rhs: Rhs::Linear,
            f: 1.0,
            rhs_file: None,
            method: SolveMethod::Numeric,
            rule: RuleName::Midpoint,
            horizon: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Step,
    Ramp,
    Smooth,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Regulate,
    OpenLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawName {
    Incremental,
    Differenced,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub mode: ControlMode,
    /// `hx` identifies the plant surrogate; `files` reads `model_dir`.
    pub source: ModelSource,
    pub model_dir: Option<PathBuf>,
    pub setpoint: f64,
    pub law: LawName,
    pub scenario: Scenario,
    /// Disturbance amplitude as a fraction of Q0 for built-in scenarios.
    pub disturbance_fraction: f64,
    pub disturbance_files: Vec<PathBuf>,
    /// Desired output CSV for open-loop mode.
    pub desired_file: Option<PathBuf>,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            mode: ControlMode::Regulate,
            source: ModelSource::Hx,
            model_dir: None,
            setpoint: 0.0,
            law: LawName::Incremental,
            scenario: Scenario::Step,
            disturbance_fraction: 0.25,
            disturbance_files: Vec::new(),
            desired_file: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.model.kernel_dir);
        fix(&mut self.model.weights_dir);
        fix(&mut self.model.responses);
        fix(&mut self.signals.input);
        fix(&mut self.signals.input2);
        fix(&mut self.solve.rhs_file);
        fix(&mut self.control.model_dir);
        fix(&mut self.control.desired_file);
        for p in &mut self.control.disturbance_files {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn apply_overrides(&mut self, h: Option<f64>, n: Option<usize>) {
        if let Some(h) = h {
            self.grid.h = h;
        }
        if let Some(n) = n {
            self.grid.n = n;
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(self.grid.h, self.grid.n).map_err(|e| CliError::Config(format!("[grid]: {e}")))
    }

    /// Checks that every referenced file or directory exists.
    pub fn check_paths(&self) -> Result<(), CliError> {
        let mut all: Vec<&PathBuf> = Vec::new();
        all.extend(self.model.kernel_dir.iter());
        all.extend(self.model.weights_dir.iter());
        all.extend(self.model.responses.iter());
        all.extend(self.signals.input.iter());
        all.extend(self.signals.input2.iter());
        all.extend(self.solve.rhs_file.iter());
        all.extend(self.control.model_dir.iter());
        all.extend(self.control.desired_file.iter());
        all.extend(self.control.disturbance_files.iter());
        match all.into_iter().find(|p| !p.exists()) {
            Some(p) => Err(CliError::Config(format!("referenced path does not exist: {}", p.display()))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c.grid.n, 10);
        assert_eq!(c.plant.d0, 0.16);
        assert_eq!(c.optimize.problem, "3sq");
    }

    #[test]
    fn sections_parse() {
        let c: RunConfig = toml::from_str(
            r#"
            [grid]
            h = 0.5
            n = 4
            [plant]
            lambda1 = 0.2
            lambda2 = 2.0
            D0 = 0.16
            Q0 = 100.0
            i0 = 434.0
            [optimize]
            problem = "4cub_pi"
            B = 2.0
            T = 3.0
            tol = 1e-3
            stabilization_orders = []
            [solve]
            equation = "linear_kernel"
            lambda = 0.5
            l1 = 1.0
            rhs = "linear"
            f = 1.0
            method = "analytic"
            rule = "midpoint"
            horizon = 5.0
            "#,
        )
        .unwrap();
        assert_eq!(c.grid.h, 0.5);
        assert_eq!(c.plant.lambda1, 0.2);
        assert_eq!(c.optimize.b, 2.0);
        assert_eq!(c.solve.equation, Equation::LinearKernel);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[grid]\nh = 1.0\nn = 3\nbogus = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[nonsense]\n").is_err());
        assert!(toml::from_str::<RunConfig>("[solve]\nequation = \"cubic\"\n").is_err());
    }

    #[test]
    fn overrides_and_paths() {
        let mut c = RunConfig::default();
        c.apply_overrides(Some(0.25), Some(8));
        assert_eq!(c.time_grid().unwrap().n(), 8);
        c.signals.input = Some(PathBuf::from("in.csv"));
        c.resolve_paths(Path::new("/base"));
        assert_eq!(c.signals.input.as_deref(), Some(Path::new("/base/in.csv")));
        assert!(matches!(c.check_paths(), Err(CliError::Config(_))));
        c.apply_overrides(Some(-1.0), None);
        assert!(c.time_grid().is_err());
    }
}
