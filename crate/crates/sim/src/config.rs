//! Flat `key = value` run configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use bingham_core::momentum::{DualIteration, MomentumSettings, StressMode, VelocitySide};
use bingham_core::rheology::{PhysicalParams, SolidPressure};

use crate::error::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Channel that starts and enters with `p_f = 1`.
    ChannelFluidized,
    /// Channel with `p_f = 0`, i.e. constant yield.
    ChannelBingham,
    /// Channel started from rest with no yield stress.
    NewtonianPoiseuille,
    /// Closed free-slip box with a decaying vortex and no convection.
    StokesDecay,
    /// Pure pore-pressure diffusion of a sine mode.
    DiffusionOnly,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::ChannelFluidized,
        Scenario::ChannelBingham,
        Scenario::NewtonianPoiseuille,
        Scenario::StokesDecay,
        Scenario::DiffusionOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::ChannelFluidized => "channel_fluidized",
            Scenario::ChannelBingham => "channel_bingham",
            Scenario::NewtonianPoiseuille => "newtonian_poiseuille",
            Scenario::StokesDecay => "stokes_decay",
            Scenario::DiffusionOnly => "diffusion_only",
        }
    }

    pub fn is_channel(self) -> bool {
        matches!(
            self,
            Scenario::ChannelFluidized | Scenario::ChannelBingham | Scenario::NewtonianPoiseuille
        )
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scenario '{s}'"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeKind {
    Regularized,
    Projection,
    Newtonian,
}

impl ModeKind {
    fn name(self) -> &'static str {
        match self {
            ModeKind::Regularized => "regularized",
            ModeKind::Projection => "projection",
            ModeKind::Newtonian => "newtonian",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Steps between field dumps; 0 dumps only the initial and final state.
    pub dump_every: usize,
    /// Advective CFL number above which `dt` is halved.
    pub cfl_max: f64,
    pub params: PhysicalParams,
    pub convection: bool,
    pub mode: ModeKind,
    pub eps: f64,
    pub dual: DualIteration,
    pub inflow_peak: f64,
    pub pf_inlet: f64,
    pub pf_wall: f64,
    /// Velocity amplitude of the vortex in the box scenario.
    pub amplitude: f64,
    pub output_dir: PathBuf,
    /// `None` selects the resolution-aware default.
    pub tol_rigid: Option<f64>,
    pub stations: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            nx: 256,
            ny: 64,
            lx: 4.0,
            ly: 1.0,
            dt: 2e-3,
            t_end: 30.0,
            dump_every: 0,
            cfl_max: 0.5,
            params: PhysicalParams::channel(),
            convection: true,
            mode: ModeKind::Regularized,
            eps: 1e-3,
            dual: DualIteration::default(),
            inflow_peak: 1.0,
            pf_inlet: 1.0,
            pf_wall: 0.0,
            amplitude: 1.0,
            output_dir: PathBuf::from("output"),
            tol_rigid: None,
            stations: vec![0.25, 0.5, 1.0, 2.0, 3.0, 3.75],
        }
    }
}

/// Every accepted key with its documentation line.
pub const KEYS: &[(&str, &str)] = &[
    ("scenario", "channel_fluidized | channel_bingham | newtonian_poiseuille | stokes_decay | diffusion_only (required)"),
    ("grid.nx", "cells along x"),
    ("grid.ny", "cells along y"),
    ("grid.lx", "domain length"),
    ("grid.ly", "domain height"),
    ("time.dt", "step size, halved automatically when the CFL limit is exceeded"),
    ("time.t_end", "final time"),
    ("time.dump_every", "steps between VTK dumps, 0 for initial and final only"),
    ("time.cfl_max", "advective CFL number that triggers step halving"),
    ("physics.rho", "density"),
    ("physics.eta", "viscosity"),
    ("physics.q0", "yield multiplier of (p_s - p_f)+"),
    ("physics.diffusivity", "pore-pressure diffusivity"),
    ("physics.ps_mode", "constant | lithostatic"),
    ("physics.ps_const", "solid pressure in constant mode"),
    ("physics.ps0", "solid pressure at the reference altitude (lithostatic mode)"),
    ("physics.y0", "reference altitude (lithostatic mode)"),
    ("physics.g_mag", "gravity magnitude (lithostatic mode)"),
    ("physics.convection", "include the convective term"),
    ("rheology.mode", "regularized | projection | newtonian"),
    ("rheology.eps", "regularization parameter"),
    ("rheology.r_uzawa", "multiplier step"),
    ("rheology.max_iters", "multiplier sweeps per step"),
    ("rheology.tol", "multiplier increment tolerance"),
    ("bc.inflow_peak", "peak inflow velocity of the channel"),
    ("bc.pf_inlet", "pore pressure at the channel inlet (fluidized run)"),
    ("bc.pf_wall", "pore pressure on the other sides (fluidized run)"),
    ("init.amplitude", "vortex amplitude in stokes_decay, mode amplitude in diffusion_only"),
    ("output.dir", "output directory"),
    ("output.tol_rigid", "rigid threshold on |Dv|, or auto"),
    ("output.stations", "comma-separated x positions of the velocity profiles"),
];

fn fmt_f64(x: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{x:?}")
}

impl RunConfig {
    pub fn settings(&self) -> MomentumSettings {
        MomentumSettings {
            mode: match self.mode {
                ModeKind::Regularized => StressMode::Regularized { eps: self.eps },
                ModeKind::Projection => StressMode::Projection,
                ModeKind::Newtonian => StressMode::Newtonian,
            },
            convection: self.convection,
            dual: self.dual,
        }
    }

    pub fn wall(&self) -> VelocitySide {
        match self.scenario {
            Some(Scenario::StokesDecay) => VelocitySide::FreeSlip,
            _ => VelocitySide::NoSlip,
        }
    }

    /// `max(1e-3 u_max/Ly, 10 ε)` in regularized mode, the first term
    /// otherwise. Regularized plugs carry strain rates of order ε.
    pub fn rigid_threshold(&self) -> f64 {
        self.tol_rigid.unwrap_or_else(|| {
            let base = 1e-3 * self.inflow_peak.abs().max(self.amplitude.abs()) / self.ly;
            match self.mode {
                ModeKind::Regularized => base.max(10.0 * self.eps),
                _ => base,
            }
        })
    }

    fn value(&self, key: &str) -> String {
        let p = &self.params;
        match key {
            "scenario" => self.scenario.map(|s| s.name().to_string()).unwrap_or_default(),
            "grid.nx" => self.nx.to_string(),
            "grid.ny" => self.ny.to_string(),
            "grid.lx" => fmt_f64(self.lx),
            "grid.ly" => fmt_f64(self.ly),
            "time.dt" => fmt_f64(self.dt),
            "time.t_end" => fmt_f64(self.t_end),
            "time.dump_every" => self.dump_every.to_string(),
            "time.cfl_max" => fmt_f64(self.cfl_max),
            "physics.rho" => fmt_f64(p.rho),
            "physics.eta" => fmt_f64(p.eta),
            "physics.q0" => fmt_f64(p.q0),
            "physics.diffusivity" => fmt_f64(p.diffusivity),
            "physics.ps_mode" => match p.ps_mode {
                SolidPressure::Constant(_) => "constant".into(),
                SolidPressure::Lithostatic => "lithostatic".into(),
            },
            "physics.ps_const" => match p.ps_mode {
                SolidPressure::Constant(c) => fmt_f64(c),
                SolidPressure::Lithostatic => fmt_f64(p.ps0),
            },
            "physics.ps0" => fmt_f64(p.ps0),
            "physics.y0" => fmt_f64(p.y0),
            "physics.g_mag" => fmt_f64(p.g_mag),
            "physics.convection" => self.convection.to_string(),
            "rheology.mode" => self.mode.name().into(),
            "rheology.eps" => fmt_f64(self.eps),
            "rheology.r_uzawa" => fmt_f64(self.dual.r),
            "rheology.max_iters" => self.dual.max_iters.to_string(),
            "rheology.tol" => fmt_f64(self.dual.tol),
            "bc.inflow_peak" => fmt_f64(self.inflow_peak),
            "bc.pf_inlet" => fmt_f64(self.pf_inlet),
            "bc.pf_wall" => fmt_f64(self.pf_wall),
            "init.amplitude" => fmt_f64(self.amplitude),
            "output.dir" => self.output_dir.display().to_string(),
            "output.tol_rigid" => self.tol_rigid.map(fmt_f64).unwrap_or_else(|| "auto".into()),
            "output.stations" => self.stations.iter().map(|s| fmt_f64(*s)).collect::<Vec<_>>().join(", "),
            _ => unreachable!("key table and serializer disagree on {key}"),
        }
    }

    /// Every key on its own line; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            if *key == "scenario" && self.scenario.is_none() {
                continue;
            }
            let _ = writeln!(out, "{key} = {}", self.value(key));
        }
        out
    }

    /// Defaults with one comment line per key.
    pub fn defaults_text() -> String {
        let d = RunConfig::default();
        let mut out = String::from("# defaults; every key is optional except scenario\n");
        for (key, doc) in KEYS {
            let _ = writeln!(out, "# {doc}");
            if *key == "scenario" {
                let _ = writeln!(out, "# scenario = channel_bingham");
            } else {
                let _ = writeln!(out, "{key} = {}", d.value(key));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, reason: &str| {
            Err(ConfigError::Invalid {
                field: field.to_string(),
                reason: reason.to_string(),
            })
        };
        if self.scenario.is_none() {
            return Err(ConfigError::ScenarioMissing);
        }
        if self.nx < 4 {
            return bad("grid.nx", "must be at least 4");
        }
        if self.ny < 4 {
            return bad("grid.ny", "must be at least 4");
        }
        for (name, v) in [("grid.lx", self.lx), ("grid.ly", self.ly)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, "must be positive");
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("time.dt", "must be positive");
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return bad("time.t_end", "must be at least time.dt");
        }
        if !(self.cfl_max > 0.0 && self.cfl_max <= 1.0) {
            return bad("time.cfl_max", "must lie in (0, 1]");
        }
        if let Err(e) = self.params.validate() {
            return bad("physics", &e.to_string());
        }
        if self.mode == ModeKind::Regularized && !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("rheology.eps", "must be positive");
        }
        if !(self.dual.r > 0.0 && self.dual.r.is_finite()) {
            return bad("rheology.r_uzawa", "must be positive");
        }
        if self.dual.max_iters == 0 {
            return bad("rheology.max_iters", "must be at least 1");
        }
        if !(self.dual.tol > 0.0) {
            return bad("rheology.tol", "must be positive");
        }
        if !(self.inflow_peak.is_finite()) {
            return bad("bc.inflow_peak", "must be finite");
        }
        for (name, v) in [("bc.pf_inlet", self.pf_inlet), ("bc.pf_wall", self.pf_wall)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be non-negative");
            }
        }
        if !self.amplitude.is_finite() {
            return bad("init.amplitude", "must be finite");
        }
        if let Some(t) = self.tol_rigid {
            if !(t > 0.0 && t.is_finite()) {
                return bad("output.tol_rigid", "must be positive");
            }
        }
        if self.stations.iter().any(|s| !(*s >= 0.0 && *s <= self.lx)) {
            return bad("output.stations", "stations must lie in [0, grid.lx]");
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(raw: &str, line: usize, key: &str) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| ConfigError::Parse {
        line,
        message: format!("cannot parse '{raw}' for {key}"),
    })
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg = parse_unvalidated(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses without validation so command-line overrides can be applied first.
pub fn parse_unvalidated(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen = BTreeSet::new();
    let mut ps_mode: Option<String> = None;
    let mut ps_const: Option<f64> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Parse {
                line,
                message: "expected key = value".into(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::Parse {
                line,
                message: format!("unknown key '{key}'"),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Parse {
                line,
                message: format!("duplicate key '{key}'"),
            });
        }
        let num = |k: &str| parse_num::<f64>(value, line, k);
        let p = &mut cfg.params;
        match key {
            "scenario" => {
                cfg.scenario = Some(value.parse().map_err(|message| ConfigError::Parse { line, message })?)
            }
            "grid.nx" => cfg.nx = parse_num(value, line, key)?,
            "grid.ny" => cfg.ny = parse_num(value, line, key)?,
            "grid.lx" => cfg.lx = num(key)?,
            "grid.ly" => cfg.ly = num(key)?,
            "time.dt" => cfg.dt = num(key)?,
            "time.t_end" => cfg.t_end = num(key)?,
            "time.dump_every" => cfg.dump_every = parse_num(value, line, key)?,
            "time.cfl_max" => cfg.cfl_max = num(key)?,
            "physics.rho" => p.rho = num(key)?,
            "physics.eta" => p.eta = num(key)?,
            "physics.q0" => p.q0 = num(key)?,
            "physics.diffusivity" => p.diffusivity = num(key)?,
            "physics.ps_mode" => ps_mode = Some(value.to_string()),
            "physics.ps_const" => ps_const = Some(num(key)?),
            "physics.ps0" => p.ps0 = num(key)?,
            "physics.y0" => p.y0 = num(key)?,
            "physics.g_mag" => p.g_mag = num(key)?,
            "physics.convection" => cfg.convection = parse_num(value, line, key)?,
            "rheology.mode" => {
                cfg.mode = match value {
                    "regularized" => ModeKind::Regularized,
                    "projection" => ModeKind::Projection,
                    "newtonian" => ModeKind::Newtonian,
                    other => {
                        return Err(ConfigError::Parse {
                            line,
                            message: format!("unknown rheology mode '{other}'"),
                        })
                    }
                }
            }
            "rheology.eps" => cfg.eps = num(key)?,
            "rheology.r_uzawa" => cfg.dual.r = num(key)?,
            "rheology.max_iters" => cfg.dual.max_iters = parse_num(value, line, key)?,
            "rheology.tol" => cfg.dual.tol = num(key)?,
            "bc.inflow_peak" => cfg.inflow_peak = num(key)?,
            "bc.pf_inlet" => cfg.pf_inlet = num(key)?,
            "bc.pf_wall" => cfg.pf_wall = num(key)?,
            "init.amplitude" => cfg.amplitude = num(key)?,
            "output.dir" => cfg.output_dir = PathBuf::from(value),
            "output.tol_rigid" => cfg.tol_rigid = if value == "auto" { None } else { Some(num(key)?) },
            "output.stations" => {
                cfg.stations = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|s| parse_num::<f64>(s.trim(), line, key))
                        .collect::<Result<_, _>>()?
                }
            }
            _ => unreachable!(),
        }
    }
    let c = ps_const.unwrap_or(match cfg.params.ps_mode {
        SolidPressure::Constant(c) => c,
        SolidPressure::Lithostatic => cfg.params.ps0,
    });
    cfg.params.ps_mode = match ps_mode.as_deref() {
        None | Some("constant") => SolidPressure::Constant(c),
        Some("lithostatic") => SolidPressure::Lithostatic,
        Some(other) => {
            return Err(ConfigError::Invalid {
                field: "physics.ps_mode".into(),
                reason: format!("unknown solid pressure mode '{other}'"),
            })
        }
    };
    Ok(cfg)
}
