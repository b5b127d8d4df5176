//! Scenario and sweep configuration files (TOML).

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::baselines::{MpctConfig, StdMpcConfig};
use crate::error::{Error, Result};
use crate::harmonic::Frequency;
use crate::hmpc::{HmpcConfig, ReferenceParams};
use crate::model::{make_ball_and_plate, make_double_integrator, matrix_from_rows, LtiModel, Matrix, OutputConstraint, Vector};
use crate::reference::{harmonic_from_hint, make_admissible_harmonic, make_multi_harmonic, MultiHarmonicSpec, ReferenceSignal, StateTarget};
use crate::sim::{ControllerSpec, ReferenceSwitch, Scenario, SweepSpec};
use crate::socp::SolverConfig;

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses TOML text, reporting the offending field path on failure.
pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(if path == "." { String::new() } else { path }, e.into_inner().message().trim().to_string())
    })
}

/// Hex-encoded SHA-256 of the raw config bytes.
pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A weight matrix given either as its diagonal or as full rows.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Weight {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl Weight {
    pub fn to_matrix(&self, path: &str) -> Result<Matrix> {
        match self {
            Self::Diagonal(d) => Ok(Matrix::from_diagonal(&Vector::from_vec(d.clone()))),
            Self::Full(rows) => matrix_from_rows(rows).map_err(|e| config_error(path, e.to_string())),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    #[default]
    BallAndPlate,
    DoubleIntegrator,
    Custom {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        e: Vec<Vec<f64>>,
        f: Vec<Vec<f64>>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

impl PlantSpec {
    pub fn build(&self) -> Result<(LtiModel, OutputConstraint)> {
        match self {
            Self::BallAndPlate => Ok(make_ball_and_plate()),
            Self::DoubleIntegrator => Ok(make_double_integrator()),
            Self::Custom { a, b, e, f, lo, hi } => {
                let m = |rows: &Vec<Vec<f64>>, p: &str| matrix_from_rows(rows).map_err(|err| config_error(p, err.to_string()));
                let model = LtiModel::new(m(a, "plant.a")?, m(b, "plant.b")?).map_err(|err| config_error("plant", err.to_string()))?;
                let cons = OutputConstraint::new(
                    m(e, "plant.e")?,
                    m(f, "plant.f")?,
                    Vector::from_vec(lo.clone()),
                    Vector::from_vec(hi.clone()),
                )
                .map_err(|err| config_error("plant", err.to_string()))?;
                cons.check_model(&model).map_err(|err| config_error("plant", err.to_string()))?;
                Ok((model, cons))
            }
        }
    }
}

/// Either `w` (rad/sample) or `period` (samples).
#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct FrequencySpec {
    pub w: Option<f64>,
    pub period: Option<f64>,
}

impl FrequencySpec {
    fn is_set(&self) -> bool {
        self.w.is_some() || self.period.is_some()
    }

    pub fn resolve(&self, path: &str) -> Result<Frequency> {
        let f = match (self.w, self.period) {
            (Some(w), None) => Frequency::new(w),
            (None, Some(p)) => Frequency::from_period(p),
            (Some(_), Some(_)) => return Err(config_error(path, "give either `w` or `period`, not both")),
            (None, None) => return Err(config_error(path, "missing `w` or `period`")),
        };
        f.map_err(|e| config_error(path, e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub check_interval: Option<usize>,
    pub strict: Option<bool>,
}

impl SolverSpec {
    pub fn build(&self) -> SolverConfig {
        let d = SolverConfig {
            strict: true,
            ..SolverConfig::default()
        };
        SolverConfig {
            rho: self.rho.unwrap_or(d.rho),
            sigma: self.sigma.unwrap_or(d.sigma),
            alpha: self.alpha.unwrap_or(d.alpha),
            tol: self.tol.unwrap_or(d.tol),
            rel_tol: 0.0,
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            check_interval: self.check_interval.unwrap_or(d.check_interval),
            strict: self.strict.unwrap_or(d.strict),
        }
    }
}

/// Shared controller tuning.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TuningSpec {
    pub horizon: usize,
    pub q: Weight,
    pub r: Weight,
    pub t_e: Weight,
    pub t_h: Weight,
    pub s_e: Weight,
    pub s_h: Weight,
    #[serde(flatten)]
    pub frequency: FrequencySpec,
    pub sigma: f64,
    #[serde(default = "default_artificial_tol")]
    pub artificial_tol: f64,
    #[serde(default)]
    pub solver: SolverSpec,
}

fn default_repeats() -> usize {
    3
}

fn default_artificial_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Hmpc,
    Mpct,
    Stdmpc,
}

/// One controller of a scenario; unset fields fall back to the tuning.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControllerEntry {
    pub label: String,
    pub kind: ControllerKind,
    pub horizon: Option<usize>,
    pub q: Option<Weight>,
    pub r: Option<Weight>,
    pub t_e: Option<Weight>,
    pub t_h: Option<Weight>,
    pub s_e: Option<Weight>,
    pub s_h: Option<Weight>,
    #[serde(flatten)]
    pub frequency: FrequencySpec,
    /// Artificial trajectory length (MPCT); defaults to the reference period.
    pub mpct_period: Option<usize>,
    /// Terminal weight (standard MPC); defaults to the Riccati solution.
    pub terminal: Option<Weight>,
    pub solver: Option<SolverSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub state: usize,
    #[serde(default)]
    pub center: f64,
    #[serde(default)]
    pub sine: f64,
    #[serde(default)]
    pub cosine: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CenterSpec {
    pub state: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    Harmonic {
        #[serde(flatten)]
        frequency: FrequencySpec,
        targets: Vec<TargetSpec>,
        /// Reject targets outside the constraint cones.
        #[serde(default = "yes")]
        require_admissible: bool,
    },
    MultiHarmonic {
        w_r: Option<f64>,
        period: Option<f64>,
        harmonics: usize,
        seed: u64,
        amplitude: f64,
        #[serde(default)]
        shaped_states: Vec<usize>,
        #[serde(default)]
        center: Vec<CenterSpec>,
    },
}

fn yes() -> bool {
    true
}

fn to_targets(t: &[TargetSpec]) -> Vec<StateTarget> {
    t.iter().map(|t| StateTarget::new(t.state, t.center, t.sine, t.cosine)).collect()
}

impl ReferenceSpec {
    pub fn build(&self, model: &LtiModel, cons: &OutputConstraint, sigma: f64, seed: Option<u64>, path: &str) -> Result<ReferenceSignal> {
        let wrap = |e: Error| config_error(path, e.to_string());
        match self {
            Self::Harmonic {
                frequency,
                targets,
                require_admissible,
            } => {
                let w = frequency.resolve(path)?;
                let t = to_targets(targets);
                let params = if *require_admissible {
                    make_admissible_harmonic(model, cons, w, &t, sigma).map_err(wrap)?
                } else {
                    harmonic_from_hint(model, w, &t).map_err(wrap)?
                };
                Ok(ReferenceSignal::Harmonic { params, w })
            }
            Self::MultiHarmonic {
                w_r,
                period,
                harmonics,
                seed: file_seed,
                amplitude,
                shaped_states,
                center,
            } => {
                let w_r = FrequencySpec { w: *w_r, period: *period }.resolve(path)?;
                let spec = MultiHarmonicSpec {
                    w_r,
                    harmonics: *harmonics,
                    seed: seed.unwrap_or(*file_seed),
                    amplitude: *amplitude,
                    shaped_states: shaped_states.clone(),
                    center: center.iter().map(|c| (c.state, c.value)).collect(),
                };
                Ok(ReferenceSignal::Multi(make_multi_harmonic(model, &spec).map_err(wrap)?))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SwitchSpec {
    pub at: usize,
    pub reference: ReferenceSpec,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    #[serde(default = "yes")]
    pub lyapunov: bool,
    #[serde(default = "yes")]
    pub feasibility: bool,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self {
            lyapunov: true,
            feasibility: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub duration: usize,
    #[serde(default)]
    pub plant: PlantSpec,
    /// Explicit initial state; the origin when absent.
    pub x0: Option<Vec<f64>>,
    /// Start on the reference instead of at `x0`.
    #[serde(default)]
    pub start_on_reference: bool,
    pub tuning: TuningSpec,
    pub reference: ReferenceSpec,
    pub switch: Option<SwitchSpec>,
    #[serde(default)]
    pub audits: AuditSpec,
    /// States entering the tracking RMS; all states when empty.
    #[serde(default)]
    pub tracking_states: Vec<usize>,
    pub controllers: Vec<ControllerEntry>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub name: String,
    #[serde(default)]
    pub plant: PlantSpec,
    pub tuning: TuningSpec,
    pub periods: Vec<usize>,
    pub steps: usize,
    /// Timed runs per controller and period; the fastest median is kept.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Shape of the swept reference; the frequency is set per period.
    pub targets: Vec<TargetSpec>,
    pub x0: Option<Vec<f64>>,
}

/// Command-line overrides applied on top of a file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

/// A resolved scenario for one controller of the file.
#[derive(Debug, Clone)]
pub struct LabeledScenario {
    pub label: String,
    pub scenario: Scenario,
}

struct Weights {
    q: Matrix,
    r: Matrix,
    t_e: Matrix,
    t_h: Matrix,
    s_e: Matrix,
    s_h: Matrix,
}

fn pick(entry: &Option<Weight>, base: &Weight, path: &str) -> Result<Matrix> {
    entry.as_ref().unwrap_or(base).to_matrix(path)
}

fn weights(t: &TuningSpec, c: &ControllerEntry, i: usize) -> Result<Weights> {
    let p = |name: &str| format!("controllers[{i}].{name}");
    Ok(Weights {
        q: pick(&c.q, &t.q, &p("q"))?,
        r: pick(&c.r, &t.r, &p("r"))?,
        t_e: pick(&c.t_e, &t.t_e, &p("t_e"))?,
        t_h: pick(&c.t_h, &t.t_h, &p("t_h"))?,
        s_e: pick(&c.s_e, &t.s_e, &p("s_e"))?,
        s_h: pick(&c.s_h, &t.s_h, &p("s_h"))?,
    })
}

fn solver_for(t: &TuningSpec, c: Option<&SolverSpec>, ov: &Overrides) -> SolverConfig {
    let mut s = c.unwrap_or(&t.solver).build();
    if let Some(tol) = ov.tol {
        s.tol = tol;
    }
    s
}

fn tuning_config(t: &TuningSpec, ov: &Overrides) -> Result<HmpcConfig> {
    Ok(HmpcConfig {
        horizon: t.horizon,
        q: t.q.to_matrix("tuning.q")?,
        r: t.r.to_matrix("tuning.r")?,
        t_e: t.t_e.to_matrix("tuning.t_e")?,
        t_h: t.t_h.to_matrix("tuning.t_h")?,
        s_e: t.s_e.to_matrix("tuning.s_e")?,
        s_h: t.s_h.to_matrix("tuning.s_h")?,
        w: t.frequency.resolve("tuning")?,
        sigma: t.sigma,
        solver: solver_for(t, None, ov),
        artificial_tol: t.artificial_tol,
    })
}

fn tuning_warnings(t: &TuningSpec, solvers: impl Iterator<Item = SolverConfig>) -> Vec<String> {
    let mut out = Vec::new();
    if t.sigma == 0.0 {
        out.push("tuning.sigma is zero: admissible references may touch the constraints, strict satisfaction is not guaranteed".into());
    }
    for s in solvers {
        if !s.strict {
            out.push("solver.strict is off: solved iterates may violate constraints by up to the solver tolerance".into());
            break;
        }
    }
    out
}

impl ScenarioFile {
    /// Settings that are valid but weaken the closed-loop guarantees.
    pub fn warnings(&self) -> Vec<String> {
        let ov = Overrides::default();
        let solvers = std::iter::once(solver_for(&self.tuning, None, &ov))
            .chain(self.controllers.iter().filter_map(|c| c.solver.as_ref()).map(|s| solver_for(&self.tuning, Some(s), &ov)));
        tuning_warnings(&self.tuning, solvers)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        parse_toml(text)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| config_error("", "config is not valid UTF-8"))?;
        Ok((Self::from_toml(&text)?, config_hash(&bytes)))
    }

    /// Weights of the tracking performance metric.
    pub fn metric_weights(&self) -> Result<(Matrix, Matrix)> {
        Ok((self.tuning.q.to_matrix("tuning.q")?, self.tuning.r.to_matrix("tuning.r")?))
    }

    /// Resolves every controller into a runnable scenario, validating all
    /// settings before anything runs.
    pub fn resolve(&self, ov: &Overrides) -> Result<Vec<LabeledScenario>> {
        if self.duration == 0 {
            return Err(config_error("duration", "must be at least 1"));
        }
        if self.controllers.is_empty() {
            return Err(config_error("controllers", "at least one controller is required"));
        }
        let (model, cons) = self.plant.build()?;
        if let Some(i) = self.tracking_states.iter().position(|&s| s >= model.nx()) {
            return Err(config_error(format!("tracking_states[{i}]"), format!("state index out of range 0..{}", model.nx())));
        }
        let t = &self.tuning;
        if !(t.sigma >= 0.0 && t.sigma.is_finite()) {
            return Err(config_error("tuning.sigma", format!("must be nonnegative, got {}", t.sigma)));
        }
        let reference = self.reference.build(&model, &cons, t.sigma, ov.seed, "reference")?;
        let switch = match &self.switch {
            Some(s) => {
                if s.at >= self.duration {
                    return Err(config_error("switch.at", "must be inside the run"));
                }
                Some(ReferenceSwitch {
                    at: s.at,
                    reference: s.reference.build(&model, &cons, t.sigma, ov.seed, "switch.reference")?,
                })
            }
            None => None,
        };
        let x0 = match (&self.x0, self.start_on_reference) {
            (Some(_), true) => return Err(config_error("x0", "conflicts with `start_on_reference`")),
            (Some(v), false) => {
                if v.len() != model.nx() {
                    return Err(config_error("x0", format!("expected {} entries, got {}", model.nx(), v.len())));
                }
                Vector::from_vec(v.clone())
            }
            (None, true) => reference.sample(0).0,
            (None, false) => Vector::zeros(model.nx()),
        };

        let mut labels = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(self.controllers.len());
        for (i, c) in self.controllers.iter().enumerate() {
            let path = format!("controllers[{i}]");
            if c.label.is_empty() || !c.label.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
                return Err(config_error(format!("{path}.label"), "use letters, digits, '_' or '-'"));
            }
            if !labels.insert(c.label.clone()) {
                return Err(config_error(format!("{path}.label"), format!("duplicate label `{}`", c.label)));
            }
            let wts = weights(t, c, i)?;
            let horizon = c.horizon.unwrap_or(t.horizon);
            let solver = solver_for(t, c.solver.as_ref(), ov);
            let wrap = |e: Error| config_error(path.clone(), e.to_string());
            let spec = match c.kind {
                ControllerKind::Hmpc => {
                    let w = if c.frequency.is_set() {
                        c.frequency.resolve(&path)?
                    } else {
                        t.frequency.resolve("tuning")?
                    };
                    let cfg = HmpcConfig {
                        horizon,
                        q: wts.q,
                        r: wts.r,
                        t_e: wts.t_e,
                        t_h: wts.t_h,
                        s_e: wts.s_e,
                        s_h: wts.s_h,
                        w,
                        sigma: t.sigma,
                        solver,
                        artificial_tol: t.artificial_tol,
                    };
                    cfg.validate(&model).map_err(wrap)?;
                    ControllerSpec::Hmpc(cfg)
                }
                ControllerKind::Mpct => {
                    let period = match c.mpct_period.or_else(|| reference.period()) {
                        Some(p) => p,
                        None => {
                            return Err(config_error(
                                format!("{path}.mpct_period"),
                                "reference period is not an integer; set it explicitly",
                            ))
                        }
                    };
                    let cfg = MpctConfig {
                        period,
                        horizon,
                        q: wts.q,
                        r: wts.r,
                        t_e: wts.t_e,
                        s_e: wts.s_e,
                        solver,
                    };
                    cfg.validate(&model).map_err(wrap)?;
                    ControllerSpec::Mpct(cfg)
                }
                ControllerKind::Stdmpc => {
                    let cfg = match &c.terminal {
                        Some(p) => StdMpcConfig {
                            horizon,
                            q: wts.q,
                            r: wts.r,
                            p: p.to_matrix(&format!("{path}.terminal"))?,
                            solver,
                        },
                        None => StdMpcConfig::with_riccati(&model, horizon, wts.q, wts.r, solver).map_err(wrap)?,
                    };
                    cfg.validate(&model).map_err(wrap)?;
                    ControllerSpec::StdMpc(cfg)
                }
            };
            out.push(LabeledScenario {
                label: c.label.clone(),
                scenario: Scenario {
                    model: model.clone(),
                    constraints: cons.clone(),
                    controller: spec,
                    reference: reference.clone(),
                    x0: x0.clone(),
                    duration: self.duration,
                    switch: switch.clone(),
                    lyapunov: self.audits.lyapunov,
                    feasibility: self.audits.feasibility,
                },
            });
        }
        Ok(out)
    }
}

/// A resolved sweep.
#[derive(Debug, Clone)]
pub struct ResolvedSweep {
    pub model: LtiModel,
    pub constraints: OutputConstraint,
    pub spec: SweepSpec,
    pub targets: Vec<StateTarget>,
}

impl ResolvedSweep {
    /// The admissible reference used at frequency `w`.
    pub fn reference(&self, w: Frequency) -> Result<ReferenceParams> {
        make_admissible_harmonic(&self.model, &self.constraints, w, &self.targets, self.spec.hmpc.sigma)
    }
}

impl SweepFile {
    pub fn warnings(&self) -> Vec<String> {
        tuning_warnings(&self.tuning, std::iter::once(solver_for(&self.tuning, None, &Overrides::default())))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        parse_toml(text)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| config_error("", "config is not valid UTF-8"))?;
        Ok((Self::from_toml(&text)?, config_hash(&bytes)))
    }

    pub fn resolve(&self, ov: &Overrides) -> Result<ResolvedSweep> {
        if self.periods.is_empty() {
            return Err(config_error("periods", "at least one period is required"));
        }
        if let Some(i) = self.periods.iter().position(|&p| p < 2) {
            return Err(config_error(format!("periods[{i}]"), "must be at least 2"));
        }
        if self.steps == 0 {
            return Err(config_error("steps", "must be at least 1"));
        }
        let (model, cons) = self.plant.build()?;
        let t = &self.tuning;
        let hmpc = tuning_config(t, ov)?;
        hmpc.validate(&model).map_err(|e| config_error("tuning", e.to_string()))?;
        let mpct = MpctConfig {
            period: self.periods[0],
            horizon: t.horizon,
            q: hmpc.q.clone(),
            r: hmpc.r.clone(),
            t_e: hmpc.t_e.clone(),
            s_e: hmpc.s_e.clone(),
            solver: hmpc.solver.clone(),
        };
        mpct.validate(&model).map_err(|e| config_error("tuning", e.to_string()))?;
        let x0 = match &self.x0 {
            Some(v) if v.len() != model.nx() => {
                return Err(config_error("x0", format!("expected {} entries, got {}", model.nx(), v.len())))
            }
            Some(v) => Vector::from_vec(v.clone()),
            None => Vector::zeros(model.nx()),
        };
        let targets = to_targets(&self.targets);
        for &p in &self.periods {
            let w = Frequency::from_period(p as f64).map_err(|e| config_error("periods", e.to_string()))?;
            make_admissible_harmonic(&model, &cons, w, &targets, hmpc.sigma)
                .map_err(|e| config_error("targets", format!("period {p}: {e}")))?;
        }
        Ok(ResolvedSweep {
            spec: SweepSpec {
                hmpc,
                mpct,
                periods: self.periods.clone(),
                steps: self.steps,
                repeats: self.repeats,
                targets: targets.clone(),
                x0,
            },
            model,
            constraints: cons,
            targets,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "mini"
duration = 5
plant = { kind = "double_integrator" }

[tuning]
horizon = 4
q = [1.0, 1.0]
r = [0.1]
t_e = [10.0, 10.0]
t_h = [10.0, 10.0]
s_e = [1.0]
s_h = [1.0]
period = 16
sigma = 1e-3

[reference]
kind = "harmonic"
period = 16
targets = [{ state = 0, sine = 1.0 }]

[[controllers]]
label = "hmpc"
kind = "hmpc"

[[controllers]]
label = "mpct"
kind = "mpct"
"#;

    #[test]
    fn minimal_file_resolves() {
        let f = ScenarioFile::from_toml(MINIMAL).unwrap();
        let s = f.resolve(&Overrides::default()).unwrap();
        assert_eq!(s.len(), 2);
        match &s[1].scenario.controller {
            ControllerSpec::Mpct(c) => assert_eq!(c.period, 16),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_reports_path() {
        let text = MINIMAL.replace("sigma = 1e-3", "sigma = 1e-3\nsgima = 2.0");
        match ScenarioFile::from_toml(&text) {
            Err(Error::Config { path, .. }) => assert!(path.contains("tuning"), "{path}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_type_reports_path() {
        let text = MINIMAL.replace("horizon = 4", "horizon = \"four\"");
        match ScenarioFile::from_toml(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "tuning.horizon"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_sigma_warns() {
        let text = MINIMAL.replace("sigma = 1e-3", "sigma = 0.0");
        let f = ScenarioFile::from_toml(&text).unwrap();
        assert!(f.warnings().iter().any(|w| w.contains("sigma")));
        assert!(f.resolve(&Overrides::default()).is_ok());
    }

    #[test]
    fn negative_sigma_rejected() {
        let text = MINIMAL.replace("sigma = 1e-3", "sigma = -1.0");
        let f = ScenarioFile::from_toml(&text).unwrap();
        match f.resolve(&Overrides::default()) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "tuning.sigma"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tolerance_override_applies() {
        let f = ScenarioFile::from_toml(MINIMAL).unwrap();
        let s = f
            .resolve(&Overrides {
                tol: Some(1e-6),
                seed: None,
            })
            .unwrap();
        match &s[0].scenario.controller {
            ControllerSpec::Hmpc(c) => assert_eq!(c.solver.tol, 1e-6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
