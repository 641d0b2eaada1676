//! Scenario set-up and the coupled transport/momentum loop.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use bingham_core::diagnostics::{
    energy_audit, energy_rates, profile_extract, rigid_zone, EnergyAudit, EnergyRates, EnergyRecorder, Profile,
    RigidZoneReport,
};
use bingham_core::mesh::{sym_gradient, Array2, CellScalar, Closure, Grid, ScalarBoundary, StaggeredVelocity};
use bingham_core::momentum::{MomentumSolver, MomentumState, VelocityBoundarySpec};
use bingham_core::rheology::yield_field;
use bingham_core::transport::{advective_cfl, PfBoundarySpec, PfTransport};

use crate::config::{RunConfig, Scenario};
use crate::error::SimError;
use crate::io::{num, write_profiles, write_timeseries, Checkpoint, VtkField};

/// Worst values seen over every step of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monitor {
    pub steps: usize,
    pub pf_min: f64,
    pub pf_max: f64,
    pub div_max: f64,
    /// Smallest site sum of `σ:Dv` (no area weight).
    pub plastic_min: f64,
    /// Number of stress storage sites.
    pub sites: usize,
    pub cfl_halvings: usize,
    /// Steps whose multiplier loop stopped at the iteration cap.
    pub dual_capped: usize,
}

pub struct Simulation {
    config: RunConfig,
    grid: Grid,
    solver: Option<MomentumSolver>,
    transport: PfTransport,
    state: MomentumState,
    p_f: CellScalar,
    forcing: StaggeredVelocity,
    dt: f64,
    tol_rigid: f64,
    recorder: EnergyRecorder,
    monitor: Monitor,
}

fn pf_boundary(config: &RunConfig) -> Result<PfBoundarySpec, SimError> {
    Ok(match config.scenario {
        Some(Scenario::ChannelFluidized) => PfBoundarySpec::new(ScalarBoundary {
            left: Closure::Dirichlet(config.pf_inlet),
            right: Closure::Dirichlet(config.pf_wall),
            bottom: Closure::Dirichlet(config.pf_wall),
            top: Closure::Dirichlet(config.pf_wall),
        })?,
        _ => PfBoundarySpec::zero(),
    })
}

/// Discretely divergence-free field from a stream function at corners.
fn stream_velocity(g: Grid, psi: impl Fn(f64, f64) -> f64) -> StaggeredVelocity {
    let (nx, ny) = (g.nx(), g.ny());
    let u = Array2::from_fn(nx + 1, ny, |i, j| {
        (psi(g.x_face(i), g.y_face(j + 1)) - psi(g.x_face(i), g.y_face(j))) / g.hy()
    });
    let v = Array2::from_fn(nx, ny + 1, |i, j| {
        -(psi(g.x_face(i + 1), g.y_face(j)) - psi(g.x_face(i), g.y_face(j))) / g.hx()
    });
    StaggeredVelocity::from_parts(g, u, v).expect("shapes follow the grid")
}

impl Simulation {
    pub fn new(config: &RunConfig) -> Result<Self, SimError> {
        config.validate()?;
        let scenario = config.scenario.expect("validated");
        let grid = Grid::new(config.nx, config.ny, config.lx, config.ly)?;
        let mut params = config.params;
        if scenario == Scenario::NewtonianPoiseuille {
            params.q0 = 0.0;
        }
        let mut settings = config.settings();
        if scenario == Scenario::StokesDecay {
            settings.convection = false;
        }
        let (bc, v0) = if scenario.is_channel() {
            let bc = VelocityBoundarySpec::channel(config.inflow_peak);
            let v0 = if scenario == Scenario::NewtonianPoiseuille {
                let mut v = StaggeredVelocity::zeros(grid);
                bc.apply_normal_values(&mut v);
                v
            } else {
                bc.poiseuille_field(grid)
            };
            (bc, v0)
        } else {
            let bc = VelocityBoundarySpec::closed(config.wall())?;
            let v0 = if scenario == Scenario::StokesDecay {
                let (a, lx, ly) = (config.amplitude, config.lx, config.ly);
                stream_velocity(grid, move |x, y| a * (PI * x / lx).sin() * (PI * y / ly).sin() * ly / PI)
            } else {
                StaggeredVelocity::zeros(grid)
            };
            (bc, v0)
        };
        let solver = if scenario == Scenario::DiffusionOnly {
            None
        } else {
            Some(MomentumSolver::new(grid, bc, params, settings)?)
        };
        let p_f = match scenario {
            Scenario::ChannelFluidized => CellScalar::constant(grid, config.pf_inlet),
            Scenario::DiffusionOnly => {
                let (a, lx, ly) = (config.amplitude, config.lx, config.ly);
                CellScalar::from_fn(grid, move |x, y| a * (PI * x / lx).sin() * (PI * y / ly).sin())
            }
            _ => CellScalar::zeros(grid),
        };
        let transport = PfTransport::new(grid, pf_boundary(config)?, config.dt, params.diffusivity)?;
        let sites = config.nx * config.ny + (config.nx + 1) * (config.ny + 1);
        let mut sim = Self {
            config: config.clone(),
            grid,
            solver,
            transport,
            state: MomentumState::new(v0),
            forcing: StaggeredVelocity::zeros(grid),
            dt: config.dt,
            tol_rigid: config.rigid_threshold(),
            recorder: EnergyRecorder::new(),
            monitor: Monitor {
                steps: 0,
                pf_min: p_f.min(),
                pf_max: p_f.max(),
                div_max: 0.0,
                plastic_min: 0.0,
                sites,
                cfl_halvings: 0,
                dual_capped: 0,
            },
            p_f,
        };
        let div = bingham_core::mesh::divergence(&sim.state.v_n).values().max_abs();
        let rates = sim.rates();
        let rigid = sim.rigid_report()?.area_fraction;
        sim.recorder.record_initial(0.0, rates, div, &sim.p_f, rigid);
        // only post-step fields are constrained; a start from rest against an inflow is not solenoidal
        Ok(sim)
    }

    /// Continues from a checkpoint written by [`checkpoint`](Self::checkpoint).
    pub fn from_checkpoint(config: &RunConfig, ckpt: &Checkpoint) -> Result<Self, SimError> {
        let mut sim = Self::new(config)?;
        if ckpt.state.grid() != &sim.grid || ckpt.p_f.grid() != &sim.grid {
            return Err(SimError::Numerical(bingham_core::Error::Contract(
                "checkpoint grid differs from the configured grid",
            )));
        }
        sim.state = ckpt.state.clone();
        sim.p_f = ckpt.p_f.clone();
        sim.dt = ckpt.dt;
        if sim.transport.dt() != sim.dt {
            sim.transport = PfTransport::new(sim.grid, pf_boundary(config)?, sim.dt, sim.diffusivity())?;
        }
        let rates = sim.rates();
        let rigid = sim.rigid_report()?.area_fraction;
        let div = bingham_core::mesh::divergence(&sim.state.v_n).values().max_abs();
        sim.recorder.record_initial(sim.state.t, rates, div, &sim.p_f, rigid);
        Ok(sim)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            state: self.state.clone(),
            p_f: self.p_f.clone(),
            dt: self.dt,
        }
    }

    fn diffusivity(&self) -> f64 {
        self.config.params.diffusivity
    }

    fn rates(&self) -> EnergyRates {
        match &self.solver {
            Some(s) => energy_rates(s, &self.state, &self.forcing),
            None => EnergyRates {
                kinetic: 0.0,
                viscous: 0.0,
                plastic: 0.0,
                forcing: 0.0,
            },
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn state(&self) -> &MomentumState {
        &self.state
    }
    pub fn p_f(&self) -> &CellScalar {
        &self.p_f
    }
    pub fn solver(&self) -> Option<&MomentumSolver> {
        self.solver.as_ref()
    }
    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }
    pub fn recorder(&self) -> &EnergyRecorder {
        &self.recorder
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn tol_rigid(&self) -> f64 {
        self.tol_rigid
    }

    pub fn finished(&self) -> bool {
        self.state.t >= self.config.t_end - 1e-9 * self.dt
    }

    pub fn rigid_report(&self) -> Result<RigidZoneReport, SimError> {
        let closure = match &self.solver {
            Some(s) => *s.closure(),
            None => VelocityBoundarySpec::closed(self.config.wall())?.tangential_closure(),
        };
        Ok(rigid_zone(&sym_gradient(&self.state.v_n, &closure), self.tol_rigid)?)
    }

    /// Yield stress per cell for the current pore pressure.
    pub fn yield_cells(&self) -> Result<CellScalar, SimError> {
        Ok(match &self.solver {
            Some(s) => s.yield_sites(&self.p_f)?.0,
            None => {
                let ps = bingham_core::rheology::solid_pressure_field(self.grid, &self.config.params);
                yield_field(&self.p_f, &ps, &self.config.params)?
            }
        })
    }

    /// One coupled step: pore pressure with the current velocity, then
    /// momentum with the new pore pressure.
    pub fn step(&mut self) -> Result<(), SimError> {
        let mut dt = self.dt;
        while advective_cfl(&self.state.v_n, dt) > self.config.cfl_max {
            dt *= 0.5;
            self.monitor.cfl_halvings += 1;
            if dt < self.config.dt * 1e-9 {
                let cfl = advective_cfl(&self.state.v_n, self.config.dt);
                return Err(SimError::Numerical(bingham_core::Error::StepSize { cfl }));
            }
        }
        if dt != self.dt {
            self.dt = dt;
            self.transport = PfTransport::new(self.grid, pf_boundary(&self.config)?, dt, self.diffusivity())?;
        }
        let remaining = self.config.t_end - self.state.t;
        let last = remaining <= dt * (1.0 + 1e-9);
        // a remainder within rounding of dt keeps the cached operators
        let dt_step = if last && remaining < dt * (1.0 - 1e-9) { remaining } else { dt };
        let p_f = if dt_step != dt {
            PfTransport::new(self.grid, pf_boundary(&self.config)?, dt_step, self.diffusivity())?
                .advance(&self.p_f, &self.state.v_n)?
        } else {
            self.transport.advance(&self.p_f, &self.state.v_n)?
        };
        let div = match &mut self.solver {
            Some(solver) => {
                let (next, report) = solver.step(&self.state, &p_f, &self.forcing, dt_step)?;
                if !report.uzawa_converged {
                    self.monitor.dual_capped += 1;
                }
                self.state = next;
                report.divergence_max
            }
            None => {
                self.state.t += dt_step;
                self.state.step_index += 1;
                self.state.last_dt = Some(dt_step);
                0.0
            }
        };
        if last {
            // land exactly on the requested time
            self.state.t = self.config.t_end;
        }
        self.p_f = p_f;
        let rates = self.rates();
        let rigid = self.rigid_report()?.area_fraction;
        self.recorder.record_step(self.state.t, dt_step, rates, div, &self.p_f, rigid);
        let m = &mut self.monitor;
        m.steps += 1;
        m.pf_min = m.pf_min.min(self.p_f.min());
        m.pf_max = m.pf_max.max(self.p_f.max());
        m.div_max = m.div_max.max(div);
        m.plastic_min = m.plastic_min.min(rates.plastic / self.grid.cell_area());
        Ok(())
    }

    pub fn run_until(&mut self, t: f64) -> Result<(), SimError> {
        let saved = self.config.t_end;
        self.config.t_end = t.min(saved);
        let out = (|| {
            while !self.finished() {
                self.step()?;
            }
            Ok(())
        })();
        self.config.t_end = saved;
        out
    }

    /// Cell fields of a dump: velocity at centres, pressures, yield, strain
    /// rate magnitude and rigid mask.
    pub fn dump_fields(&self) -> Result<Vec<VtkField>, SimError> {
        let g = self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (u, v) = (self.state.v_n.u(), self.state.v_n.v());
        let mut uc = Vec::with_capacity(nx * ny);
        let mut vc = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                uc.push(0.5 * (u[(i, j)] + u[(i + 1, j)]));
                vc.push(0.5 * (v[(i, j)] + v[(i, j + 1)]));
            }
        }
        let closure = match &self.solver {
            Some(s) => *s.closure(),
            None => VelocityBoundarySpec::closed(self.config.wall())?.tangential_closure(),
        };
        let d = sym_gradient(&self.state.v_n, &closure);
        let rigid = rigid_zone(&d, self.tol_rigid)?;
        let mask: Vec<f64> = rigid.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let title = format!(
            "{} t={} step={}",
            self.config.scenario.map(|s| s.name()).unwrap_or(""),
            num(self.state.t),
            self.state.step_index
        );
        let q = self.yield_cells()?;
        let mag = d.cell_magnitudes();
        let fields: [(&str, &[f64]); 7] = [
            ("u", &uc),
            ("v", &vc),
            ("p", self.state.p.values().as_slice()),
            ("p_f", self.p_f.values().as_slice()),
            ("q", q.values().as_slice()),
            ("strain_rate", mag.values().as_slice()),
            ("rigid", &mask),
        ];
        Ok(fields
            .iter()
            .map(|(name, data)| VtkField::from_cells(&g, &title, name, data))
            .collect())
    }

    pub fn write_dump(&self, dir: &Path, tag: &str) -> Result<(), SimError> {
        for f in self.dump_fields()? {
            f.write(&dir.join(format!("{}_{tag}.vtk", f.name)))?;
        }
        Ok(())
    }

    pub fn profiles(&self) -> Result<Vec<Profile>, SimError> {
        Ok(profile_extract(&self.state.v_n, &self.config.stations)?)
    }
}

/// Outcome of a completed run.
#[derive(Clone, Debug)]
pub struct Summary {
    pub scenario: Scenario,
    pub t: f64,
    pub dt: f64,
    pub wall_seconds: f64,
    pub monitor: Monitor,
    pub audit: EnergyAudit,
    /// Whether the energy inequality applies: closed boxes without forcing.
    pub audit_applies: bool,
    pub rigid: RigidZoneReport,
    pub tol_rigid: f64,
    pub profiles: Vec<Profile>,
}

impl Summary {
    /// Deterministic `key = value` report (wall time excluded).
    pub fn render(&self) -> String {
        let m = &self.monitor;
        let a = &self.audit;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("scenario", self.scenario.name().into());
        kv("t", num(self.t));
        kv("steps", m.steps.to_string());
        kv("dt_final", num(self.dt));
        kv("cfl_halvings", m.cfl_halvings.to_string());
        kv("dual_capped_steps", m.dual_capped.to_string());
        kv("pf_min", num(m.pf_min));
        kv("pf_max", num(m.pf_max));
        kv("div_max", num(m.div_max));
        kv("plastic_site_sum_min", num(m.plastic_min));
        kv("sites", m.sites.to_string());
        kv("energy_audit_applies", self.audit_applies.to_string());
        kv("energy_audit_passed", a.passed.to_string());
        kv("energy_worst_excess", num(a.worst_excess));
        kv("kinetic_sup", num(a.kinetic_sup));
        kv("viscous_total", num(a.viscous_total));
        kv("plastic_total", num(a.plastic_total));
        kv("tol_rigid", num(self.tol_rigid));
        kv("rigid_fraction", num(self.rigid.area_fraction));
        s
    }
}

fn ensure_dir(dir: &Path) -> Result<(), SimError> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))
}

/// Runs a configured scenario and writes its outputs under
/// `config.output_dir`. On a numerical failure the last state is dumped
/// with the `failure` tag before the error is returned.
pub fn run_scenario(config: &RunConfig) -> Result<Summary, SimError> {
    config.validate()?;
    let dir = config.output_dir.clone();
    ensure_dir(&dir)?;
    fs::write(dir.join("config.txt"), config.to_text()).map_err(|e| SimError::io(dir.join("config.txt"), e))?;
    let start = Instant::now();
    let mut sim = Simulation::new(config)?;
    let mut dumps = 0usize;
    sim.write_dump(&dir, &format!("{dumps:04}"))?;
    let looped = (|| {
        while !sim.finished() {
            sim.step()?;
            if config.dump_every > 0 && sim.monitor.steps % config.dump_every == 0 && !sim.finished() {
                dumps += 1;
                sim.write_dump(&dir, &format!("{dumps:04}"))?;
            }
        }
        Ok::<(), SimError>(())
    })();
    write_timeseries(&dir.join("timeseries.csv"), sim.recorder.samples())?;
    if let Err(e) = looped {
        // best effort: the original error matters more than a failed dump
        let _ = sim.write_dump(&dir, "failure");
        return Err(e);
    }
    dumps += 1;
    sim.write_dump(&dir, &format!("{dumps:04}"))?;
    let profiles = sim.profiles()?;
    write_profiles(&dir.join("profiles.csv"), &profiles)?;
    let summary = Summary {
        scenario: config.scenario.expect("validated"),
        t: sim.state.t,
        dt: sim.dt,
        wall_seconds: start.elapsed().as_secs_f64(),
        monitor: sim.monitor,
        audit: energy_audit(sim.recorder.samples()),
        audit_applies: !config.scenario.expect("validated").is_channel(),
        rigid: sim.rigid_report()?,
        tol_rigid: sim.tol_rigid,
        profiles,
    };
    fs::write(dir.join("summary.txt"), summary.render()).map_err(|e| SimError::io(dir.join("summary.txt"), e))?;
    Ok(summary)
}
