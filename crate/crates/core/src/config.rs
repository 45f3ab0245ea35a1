//! Simulation configuration and its flat `key = value` text form.
//!
//! ```text
//! # lines starting with '#' are ignored
//! omega = 1.0
//! lambda = 1.0
//! target_accel = sine:0.1:2.0
//! u_min = none
//! ```
//!
//! Keys match the struct field names. Missing keys fall back to
//! [`SimulationConfig::default`]; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use crate::duffing::{DuffingControlConfig, DuffingParams, TargetAccel};
use crate::dynamics::{StepSize, SystemState};
use crate::error::{Error, Result};

/// Upper bound on `(t_end − t0) / h`.
pub const MAX_STEPS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub params: DuffingParams,
    pub control: DuffingControlConfig,
    pub h: StepSize,
    /// Absolute end time; the run starts at `initial.t`.
    pub t_end: f64,
    pub initial: SystemState,
    pub control_enabled: bool,
    pub preset_name: Option<String>,
    /// Keep every `output_stride`-th sample when writing files.
    pub output_stride: usize,
}

impl Default for SimulationConfig {
    /// Beat experiment: `x = (1, 0.1)`, `v = 0`, `u₀ = ζ`, `h = 0.01`, `λ = 1`, `t ∈ [0, 200]`.
    fn default() -> Self {
        let params = DuffingParams::reference();
        Self {
            params,
            control: DuffingControlConfig {
                lambda: 1.0,
                b: 0.0,
                u0: params.zeta,
                target: TargetAccel::default(),
                u_min: None,
                u_max: None,
            },
            h: StepSize::new(0.01).expect("positive"),
            t_end: 200.0,
            initial: SystemState {
                x: vec![1.0, 0.1],
                v: vec![0.0, 0.0],
                t: 0.0,
            },
            control_enabled: true,
            preset_name: None,
            output_stride: 1,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.control.validate()?;
        if self.initial.dimension() != 2 {
            return Err(Error::config("initial state must be two-dimensional"));
        }
        if !(self.t_end > self.initial.t) || !self.t_end.is_finite() {
            return Err(Error::config(format!(
                "t_end ({}) must exceed the start time ({})",
                self.t_end, self.initial.t
            )));
        }
        let steps = (self.t_end - self.initial.t) / self.h.get();
        if steps.round() > MAX_STEPS as f64 {
            return Err(Error::config(format!("{steps:.0} steps exceeds the limit of {MAX_STEPS}")));
        }
        if self.output_stride == 0 {
            return Err(Error::config("output_stride must be at least 1"));
        }
        Ok(())
    }

    /// Number of Euler steps, `round((t_end − t0) / h)`.
    pub fn step_count(&self) -> usize {
        ((self.t_end - self.initial.t) / self.h.get()).round().max(1.0) as usize
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| format!("{x:?}"));
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("preset_name", self.preset_name.clone().unwrap_or_else(|| "none".into()));
        line("omega", format!("{:?}", self.params.omega));
        line("epsilon", format!("{:?}", self.params.epsilon));
        line("alpha", format!("{:?}", self.params.alpha));
        line("zeta", format!("{:?}", self.params.zeta));
        line("lambda", format!("{:?}", self.control.lambda));
        line("b", format!("{:?}", self.control.b));
        line("u0", format!("{:?}", self.control.u0));
        line("target_accel", self.control.target.to_string());
        line("u_min", opt(self.control.u_min));
        line("u_max", opt(self.control.u_max));
        line("h", format!("{:?}", self.h.get()));
        line("t0", format!("{:?}", self.initial.t));
        line("t_end", format!("{:?}", self.t_end));
        line("x1", format!("{:?}", self.initial.x[0]));
        line("x2", format!("{:?}", self.initial.x[1]));
        line("v1", format!("{:?}", self.initial.v[0]));
        line("v2", format!("{:?}", self.initial.v[1]));
        line("control_enabled", self.control_enabled.to_string());
        line("output_stride", self.output_stride.to_string());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = SimulationConfig::default();
        let mut h = cfg.h.get();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: `{key}` is not a number: `{value}`", lineno + 1)))
            };
            let opt_num = || -> Result<Option<f64>> {
                if value.eq_ignore_ascii_case("none") {
                    Ok(None)
                } else {
                    num().map(Some)
                }
            };
            match key {
                "preset_name" => {
                    cfg.preset_name = (!value.eq_ignore_ascii_case("none")).then(|| value.to_string())
                }
                "omega" => cfg.params.omega = num()?,
                "epsilon" => cfg.params.epsilon = num()?,
                "alpha" => cfg.params.alpha = num()?,
                "zeta" => cfg.params.zeta = num()?,
                "lambda" => cfg.control.lambda = num()?,
                "b" => cfg.control.b = num()?,
                "u0" => cfg.control.u0 = num()?,
                "target_accel" => cfg.control.target = value.parse()?,
                "u_min" => cfg.control.u_min = opt_num()?,
                "u_max" => cfg.control.u_max = opt_num()?,
                "h" => h = num()?,
                "t0" => cfg.initial.t = num()?,
                "t_end" => cfg.t_end = num()?,
                "x1" => cfg.initial.x[0] = num()?,
                "x2" => cfg.initial.x[1] = num()?,
                "v1" => cfg.initial.v[0] = num()?,
                "v2" => cfg.initial.v[1] = num()?,
                "control_enabled" => {
                    cfg.control_enabled = value
                        .parse()
                        .map_err(|_| Error::Parse(format!("line {}: expected true or false", lineno + 1)))?
                }
                "output_stride" => {
                    cfg.output_stride = value
                        .parse()
                        .map_err(|_| Error::Parse(format!("line {}: invalid stride", lineno + 1)))?
                }
                other => return Err(Error::Parse(format!("line {}: unknown key `{other}`", lineno + 1))),
            }
        }
        cfg.h = StepSize::new(h)?;
        cfg.initial = SystemState::new(cfg.initial.x, cfg.initial.v, cfg.initial.t)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_round_trips() {
        let cfg = SimulationConfig::default();
        assert_eq!(SimulationConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn missing_keys_use_defaults_and_unknown_keys_fail() {
        let cfg = SimulationConfig::from_text("# tweak\nlambda = 10\nh = 0.001\n").unwrap();
        assert_eq!(cfg.control.lambda, 10.0);
        assert_eq!(cfg.h.get(), 0.001);
        assert_eq!(cfg.params, DuffingParams::reference());
        assert!(matches!(SimulationConfig::from_text("lamda = 1"), Err(Error::Parse(_))));
        assert!(matches!(SimulationConfig::from_text("lambda 1"), Err(Error::Parse(_))));
        assert!(SimulationConfig::from_text("h = -1").is_err());
        assert!(SimulationConfig::from_text("t_end = 0").is_err());
        assert!(SimulationConfig::from_text("h = 1e-7").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(
            omega in 0.1f64..5.0,
            epsilon in 0.0f64..0.99,
            lambda in 0.0f64..100.0,
            b in -1.0f64..1.0,
            h in 1e-3f64..0.1,
            x1 in -2.0f64..2.0,
            v2 in -2.0f64..2.0,
            bounded in any::<bool>(),
            enabled in any::<bool>(),
            stride in 1usize..20,
        ) {
            let mut cfg = SimulationConfig::default();
            cfg.params.omega = omega;
            cfg.params.epsilon = epsilon;
            cfg.control.lambda = lambda;
            cfg.control.b = b;
            cfg.control.target = TargetAccel::Sine { amplitude: b, frequency: omega };
            if bounded {
                cfg.control.u_min = Some(-0.5);
                cfg.control.u_max = Some(2.0);
            }
            cfg.h = StepSize::new(h).unwrap();
            cfg.t_end = 10.0;
            cfg.initial.x[0] = x1;
            cfg.initial.v[1] = v2;
            cfg.control_enabled = enabled;
            cfg.output_stride = stride;
            cfg.preset_name = Some("custom".into());
            prop_assert_eq!(SimulationConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        }
    }
}
