//! Time integration with positivity-preserving step control.
//!
//! Two schemes are available. `Imex` advances chemotaxis and the nonlinear
//! kinetics explicitly, then solves one Helmholtz problem per component for
//! diffusion together with linear decay. `ExplicitEuler` treats everything
//! explicitly. A step that would produce a negative value is rejected and
//! retried with half the step size; values are never clamped.

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use thiserror::Error;

use crate::discretization::{
    chemotaxis_divergence, face_gradient, laplacian_neumann, DiscretizationError, HelmholtzOperator,
};
use crate::grid::{Field, Grid, GridError, State};
use crate::model::{select_energy_exponent, Params};
use crate::monitors::{DiagnosticsRecord, Monitor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    ExplicitEuler,
    #[default]
    Imex,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::ExplicitEuler => "explicit-euler",
            Scheme::Imex => "imex",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "explicit-euler" => Ok(Scheme::ExplicitEuler),
            "imex" => Ok(Scheme::Imex),
            other => Err(format!(
                "unknown scheme '{other}' (expected imex or explicit-euler)"
            )),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("{component} became negative ({value:e}) in cell {cell}")]
    NegativityDetected {
        component: char,
        cell: usize,
        value: f64,
    },
    #[error("invalid step size {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
}

impl From<GridError> for StepError {
    fn from(e: GridError) -> Self {
        StepError::Discretization(e.into())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("run unstable at t = {t}: step rejected after {halvings} halvings ({source})")]
    Unstable {
        t: f64,
        halvings: usize,
        state: Box<State>,
        source: StepError,
    },
    #[error("numerical failure at t = {t}: {source}")]
    Numerical { t: f64, source: StepError },
    #[error("invalid run options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt_max: f64,
    pub cfl_advect: f64,
    pub cfl_react: f64,
    pub scheme: Scheme,
    /// Relative residual target of the implicit diffusion solves.
    pub solver_tol: f64,
    /// Halvings of a rejected step before the run is declared unstable.
    pub max_halvings: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt_max: 0.01,
            cfl_advect: 0.4,
            cfl_react: 0.9,
            scheme: Scheme::Imex,
            solver_tol: 1e-12,
            max_halvings: 20,
        }
    }
}

impl StepControl {
    pub fn with_scheme(scheme: Scheme) -> Self {
        Self {
            scheme,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt_max.is_finite() && self.dt_max > 0.0) {
            return Err(format!("dt_max must be > 0, got {}", self.dt_max));
        }
        for (name, f) in [
            ("cfl_advect", self.cfl_advect),
            ("cfl_react", self.cfl_react),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(format!("{name} must lie in (0, 1), got {f}"));
            }
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return Err(format!(
                "solver_tol must lie in (0, 1), got {}",
                self.solver_tol
            ));
        }
        Ok(())
    }
}

/// Largest transport speed `|∂v/∂n| φ(u)/u` over all faces, evaluated at the
/// donor cell of each face.
fn max_face_speed(state: &State, params: &Params, grid: &Grid) -> Result<f64, StepError> {
    let grad = face_gradient(&state.v, grid)?;
    let u = state.u.values();
    let mut speed: f64 = 0.0;
    for axis in 0..grid.ndim() {
        let stride = grid.stride(axis);
        for (c, &g) in grad.axis(axis).iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let donor = if g > 0.0 { u[c] } else { u[c + stride] };
            let saturation = (1.0 + donor.max(0.0)).powf(-params.alpha);
            speed = speed.max(g.abs() * saturation);
        }
    }
    Ok(speed)
}

/// Step size from the advective, reactive and (explicit only) diffusive caps.
pub fn stable_dt(
    state: &State,
    params: &Params,
    grid: &Grid,
    control: &StepControl,
) -> Result<f64, StepError> {
    state.check(grid)?;
    let h = grid.min_spacing();
    let ndim = grid.ndim() as f64;
    let mut dt = control.dt_max;

    let speed = max_face_speed(state, params, grid)?;
    if speed > 0.0 {
        dt = dt.min(control.cfl_advect * h / (ndim * speed));
    }

    let decay = params.coeffs.max_decay();
    let react = state
        .w
        .values()
        .iter()
        .fold(decay, |m, &w| m.max(w + decay));
    dt = dt.min(control.cfl_react / react);

    if control.scheme == Scheme::ExplicitEuler {
        let c = &params.coeffs;
        let diffusivity = c.d_u.max(c.d_v).max(c.d_w);
        dt = dt.min(control.cfl_advect * h * h / (2.0 * ndim * diffusivity));
    }
    Ok(dt)
}

fn reject_negative(component: char, f: &Field) -> Result<(), StepError> {
    match f.values().iter().position(|&x| x.is_nan() || x < 0.0) {
        Some(cell) => Err(StepError::NegativityDetected {
            component,
            cell,
            value: f[cell],
        }),
        None => Ok(()),
    }
}

/// Advances `state` by `dt` with the scheme selected in `control`.
pub fn step(
    state: &State,
    params: &Params,
    grid: &Grid,
    dt: f64,
    control: &StepControl,
) -> Result<State, StepError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(StepError::InvalidStep(dt));
    }
    state.check(grid)?;
    let c = &params.coeffs;
    let kappa = params.kappa;
    let (u, v, w) = (state.u.values(), state.v.values(), state.w.values());
    let chemo = chemotaxis_divergence(&state.u, &state.v, grid, params.alpha)?;
    let chemo = chemo.values();
    let n = grid.len();

    let (nu, nv, nw) = match control.scheme {
        Scheme::ExplicitEuler => {
            let lu = laplacian_neumann(&state.u, grid)?;
            let lv = laplacian_neumann(&state.v, grid)?;
            let lw = laplacian_neumann(&state.w, grid)?;
            let mut nu = Vec::with_capacity(n);
            let mut nv = Vec::with_capacity(n);
            let mut nw = Vec::with_capacity(n);
            for i in 0..n {
                let infection = u[i] * w[i];
                nu.push(
                    u[i] + dt * (c.d_u * lu[i] - chemo[i] - infection + kappa - c.decay_u * u[i]),
                );
                nv.push(v[i] + dt * (c.d_v * lv[i] + infection - c.decay_v * v[i]));
                nw.push(w[i] + dt * (c.d_w * lw[i] + c.production * v[i] - c.decay_w * w[i]));
            }
            (
                Field::from_vec(nu),
                Field::from_vec(nv),
                Field::from_vec(nw),
            )
        }
        Scheme::Imex => {
            let mut ru = Vec::with_capacity(n);
            let mut rv = Vec::with_capacity(n);
            let mut rw = Vec::with_capacity(n);
            for i in 0..n {
                let infection = u[i] * w[i];
                ru.push(u[i] + dt * (kappa - chemo[i] - infection));
                rv.push(v[i] + dt * infection);
                rw.push(w[i] + dt * c.production * v[i]);
            }
            let (ru, rv, rw) = (
                Field::from_vec(ru),
                Field::from_vec(rv),
                Field::from_vec(rw),
            );
            // Explicit stage first so negativity there is reported before solving.
            reject_negative('u', &ru)?;
            let implicit = |rhs: &Field, diffusivity: f64, decay: f64| {
                HelmholtzOperator::new(1.0 + dt * decay, dt * diffusivity)
                    .and_then(|op| op.solve(rhs, grid, control.solver_tol))
                    .map(|s| s.x)
            };
            (
                implicit(&ru, c.d_u, c.decay_u)?,
                implicit(&rv, c.d_v, c.decay_v)?,
                implicit(&rw, c.d_w, c.decay_w)?,
            )
        }
    };
    reject_negative('u', &nu)?;
    reject_negative('v', &nv)?;
    reject_negative('w', &nw)?;
    Ok(State::new(nu, nv, nw, state.t + dt))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub t_end: f64,
    /// Spacing of diagnostics records in simulated time.
    pub monitor_every: f64,
    /// Times at which full state snapshots are kept.
    pub snapshot_times: Vec<f64>,
    /// Exponent of the `∫u^p` energy term; chosen by `select_energy_exponent` when `None`.
    pub energy_exponent: Option<f64>,
}

impl RunOptions {
    pub fn new(t_end: f64, monitor_every: f64) -> Self {
        Self {
            t_end,
            monitor_every,
            snapshot_times: Vec::new(),
            energy_exponent: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    /// Rejected steps, each followed by a retry at half the step size.
    pub halvings: usize,
    pub dt_min: f64,
    pub dt_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: State,
    pub snapshots: Vec<State>,
    pub stats: RunStats,
    pub energy_exponent: Option<f64>,
}

/// Integrates from `initial` to `options.t_end`, recording diagnostics at
/// `t = 0`, every `monitor_every`, and at `t_end`.
pub fn run(
    initial: &State,
    params: &Params,
    grid: &Grid,
    control: &StepControl,
    options: &RunOptions,
) -> Result<RunOutput, RunError> {
    control.validate().map_err(RunError::InvalidOptions)?;
    initial.check(grid)?;
    if !(options.t_end >= 0.0 && options.t_end.is_finite()) {
        return Err(RunError::InvalidOptions(format!(
            "t_end must be >= 0, got {}",
            options.t_end
        )));
    }
    if options.monitor_every.is_nan() || options.monitor_every <= 0.0 {
        return Err(RunError::InvalidOptions(format!(
            "monitor interval must be > 0, got {}",
            options.monitor_every
        )));
    }
    let exponent = options.energy_exponent.or_else(|| {
        select_energy_exponent(params.alpha, grid.ndim() as u32)
            .ok()
            .map(|e| e.p)
    });
    let mut out = RunOutput {
        records: Vec::new(),
        final_state: initial.clone(),
        snapshots: Vec::new(),
        stats: RunStats {
            dt_min: f64::INFINITY,
            ..RunStats::default()
        },
        energy_exponent: exponent,
    };
    if options.t_end == 0.0 {
        out.stats.dt_min = 0.0;
        return Ok(out);
    }

    let monitor = Monitor::new(initial, params, grid, exponent)?;
    let t0 = initial.t;
    let t_end = t0 + options.t_end;
    let mut snapshot_times: Vec<f64> = options
        .snapshot_times
        .iter()
        .map(|s| t0 + s)
        .filter(|&s| s >= t0 && s <= t_end)
        .collect();
    snapshot_times.sort_by(f64::total_cmp);
    let mut snap_ix = 0;
    while snap_ix < snapshot_times.len() && snapshot_times[snap_ix] <= t0 {
        out.snapshots.push(initial.clone());
        snap_ix += 1;
    }

    let mut state = initial.clone();
    out.records.push(monitor.record(&state, grid)?);
    let mut monitor_ix = 1u64;
    let mut backoff = 1.0f64;

    while state.t < t_end {
        let next_record = (t0 + monitor_ix as f64 * options.monitor_every).min(t_end);
        let mut target = next_record;
        if let Some(&s) = snapshot_times.get(snap_ix) {
            target = target.min(s);
        }
        let cap = stable_dt(&state, params, grid, control)
            .map_err(|source| RunError::Numerical { t: state.t, source })?
            * backoff;
        let mut dt = cap;
        let mut hits_target = false;
        if state.t + dt >= target {
            dt = target - state.t;
            hits_target = true;
        }

        let mut halvings = 0;
        let next = loop {
            match step(&state, params, grid, dt, control) {
                Ok(next) => break next,
                Err(err @ StepError::NegativityDetected { .. }) => {
                    if halvings >= control.max_halvings {
                        return Err(RunError::Unstable {
                            t: state.t,
                            halvings,
                            state: Box::new(state),
                            source: err,
                        });
                    }
                    halvings += 1;
                    out.stats.halvings += 1;
                    warn!(
                        "t = {:.6}: {err}; retrying with dt = {:e}",
                        state.t,
                        dt / 2.0
                    );
                    dt /= 2.0;
                    hits_target = false;
                }
                Err(source) => return Err(RunError::Numerical { t: state.t, source }),
            }
        };
        backoff = if halvings > 0 {
            (dt / cap * backoff).min(1.0)
        } else {
            (backoff * 1.25).min(1.0)
        };
        state = next;
        if hits_target {
            state.t = target;
        }
        out.stats.steps += 1;
        out.stats.dt_min = out.stats.dt_min.min(dt);
        out.stats.dt_max = out.stats.dt_max.max(dt);

        while snap_ix < snapshot_times.len() && snapshot_times[snap_ix] <= state.t {
            out.snapshots.push(state.clone());
            snap_ix += 1;
        }
        if state.t >= next_record {
            out.records.push(monitor.record(&state, grid)?);
            monitor_ix += 1;
        }
    }
    debug!(
        "run finished: {} steps, {} halvings, dt in [{:e}, {:e}]",
        out.stats.steps, out.stats.halvings, out.stats.dt_min, out.stats.dt_max
    );
    out.final_state = state;
    Ok(out)
}
