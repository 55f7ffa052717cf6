//! Runtime checks of the a-priori estimates: the `∫u` bound, the exact
//! evolution of `∫u + ∫v`, the resulting `∫v` bound, the quasi-energy, and
//! a plateau/growth classification of trajectories.
//!
//! The mass formulas assume unit decay rates.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{grad_norm_sq, integrate, lp_norm, Grid, GridError, State};
use crate::model::Params;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("energy exponent must exceed 1, got {0}")]
    InvalidExponent(f64),
    #[error("trajectory has {got} records; at least {needed} are required")]
    TrajectoryTooShort { got: usize, needed: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("diagnostics CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One row of the diagnostics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub mass_w: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    pub sup_w: f64,
    /// `‖u‖_p` for the energy exponent; empty when no exponent is admissible.
    pub lp_u: Option<f64>,
    pub grad_v_sq: f64,
    pub grad_w_sq: f64,
    pub energy: Option<f64>,
    pub mass_identity_residual: f64,
    pub u_bound_slack: f64,
    pub v_bound_slack: f64,
}

pub const CSV_HEADER: &str = "t,mass_u,mass_v,mass_w,sup_u,sup_v,sup_w,lp_u,grad_v_sq,grad_w_sq,energy,mass_identity_residual,u_bound_slack,v_bound_slack";

/// `(1/p)∫u^p + ((p+3)/4)∫v² + ∫|∇w|²`
pub fn quasi_energy(state: &State, p: f64, grid: &Grid) -> Result<f64, MonitorError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(MonitorError::InvalidExponent(p));
    }
    state.check(grid)?;
    let u_p = lp_norm(&state.u, grid, p)?.powf(p);
    let v_sq = lp_norm(&state.v, grid, 2.0)?.powi(2);
    Ok(u_p / p + (p + 3.0) / 4.0 * v_sq + grad_norm_sq(&state.w, grid)?)
}

/// `e^{-t} m0 + kappa |Ω| (1 - e^{-t})`: the exact value of `∫u + ∫v` and an
/// upper bound for `∫u` and `∫v` individually.
pub fn mass_envelope(m0: f64, kappa: f64, volume: f64, t: f64) -> f64 {
    let decay = (-t).exp();
    decay * m0 - kappa * volume * (-t).exp_m1()
}

/// `(∫u + ∫v) - [e^{-t} M0 + kappa|Ω|(1 - e^{-t})]`, zero along exact solutions.
pub fn mass_identity_residual(
    mass_u: f64,
    mass_v: f64,
    mass0: f64,
    kappa: f64,
    volume: f64,
    t: f64,
) -> f64 {
    (mass_u + mass_v) - mass_envelope(mass0, kappa, volume, t)
}

/// Slack of `∫u(t) <= e^{-t}∫u_0 + kappa|Ω|(1-e^{-t})`; negative means violated.
pub fn check_u_mass_bound(mass_u: f64, mass_u0: f64, kappa: f64, volume: f64, t: f64) -> f64 {
    mass_envelope(mass_u0, kappa, volume, t) - mass_u
}

/// Slack of `∫v(t) <= e^{-t}(∫u_0 + ∫v_0) + kappa|Ω|(1-e^{-t})`.
pub fn check_v_mass_bound(mass_v: f64, mass0: f64, kappa: f64, volume: f64, t: f64) -> f64 {
    mass_envelope(mass0, kappa, volume, t) - mass_v
}

/// Evaluates [`DiagnosticsRecord`]s against the initial masses of a run.
#[derive(Debug, Clone)]
pub struct Monitor {
    kappa: f64,
    volume: f64,
    t0: f64,
    mass_u0: f64,
    mass_v0: f64,
    exponent: Option<f64>,
}

impl Monitor {
    pub fn new(
        initial: &State,
        params: &Params,
        grid: &Grid,
        exponent: Option<f64>,
    ) -> Result<Self, GridError> {
        Ok(Self {
            kappa: params.kappa,
            volume: grid.volume(),
            t0: initial.t,
            mass_u0: integrate(&initial.u, grid)?,
            mass_v0: integrate(&initial.v, grid)?,
            exponent: exponent.filter(|&p| p > 1.0),
        })
    }

    pub fn exponent(&self) -> Option<f64> {
        self.exponent
    }

    pub fn record(&self, state: &State, grid: &Grid) -> Result<DiagnosticsRecord, GridError> {
        let mass_u = integrate(&state.u, grid)?;
        let mass_v = integrate(&state.v, grid)?;
        let elapsed = state.t - self.t0;
        let mass0 = self.mass_u0 + self.mass_v0;
        let grad_w_sq = grad_norm_sq(&state.w, grid)?;
        let (lp_u, energy) = match self.exponent {
            Some(p) => {
                let norm = lp_norm(&state.u, grid, p)?;
                let v_sq = lp_norm(&state.v, grid, 2.0)?.powi(2);
                (
                    Some(norm),
                    Some(norm.powf(p) / p + (p + 3.0) / 4.0 * v_sq + grad_w_sq),
                )
            }
            None => (None, None),
        };
        Ok(DiagnosticsRecord {
            t: state.t,
            mass_u,
            mass_v,
            mass_w: integrate(&state.w, grid)?,
            sup_u: lp_norm(&state.u, grid, f64::INFINITY)?,
            sup_v: lp_norm(&state.v, grid, f64::INFINITY)?,
            sup_w: lp_norm(&state.w, grid, f64::INFINITY)?,
            lp_u,
            grad_v_sq: grad_norm_sq(&state.v, grid)?,
            grad_w_sq,
            energy,
            mass_identity_residual: mass_identity_residual(
                mass_u,
                mass_v,
                mass0,
                self.kappa,
                self.volume,
                elapsed,
            ),
            u_bound_slack: check_u_mass_bound(
                mass_u,
                self.mass_u0,
                self.kappa,
                self.volume,
                elapsed,
            ),
            v_bound_slack: check_v_mass_bound(mass_v, mass0, self.kappa, self.volume, elapsed),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    BoundedPlateau,
    Growing,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::BoundedPlateau => "bounded-plateau",
            Verdict::Growing => "growing",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundednessVerdict {
    pub label: Verdict,
    pub peak_sup_u: f64,
    /// Least-squares slope of `ln sup_u` against `t` over the trailing window.
    pub tail_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// `growing` fires once `sup_u > growth_factor·sup_u(0) + 1`.
    pub growth_factor: f64,
    /// Largest tail slope still counted as a plateau.
    pub tail_slope: f64,
    /// Trailing fraction of records used for the slope fit.
    pub window_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            growth_factor: 1e3,
            tail_slope: 1e-4,
            window_fraction: 0.2,
        }
    }
}

pub const MIN_CLASSIFY_RECORDS: usize = 10;

fn tail_len(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).ceil() as usize).clamp(2, n)
}

fn least_squares_slope(points: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let n = points.clone().count() as f64;
    let (sx, sy) = points
        .clone()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = points.fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - mx) * (y - my), b + (x - mx) * (x - mx))
    });
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

pub fn classify_boundedness(
    records: &[DiagnosticsRecord],
    config: &ClassifierConfig,
) -> Result<BoundednessVerdict, MonitorError> {
    if records.len() < MIN_CLASSIFY_RECORDS {
        return Err(MonitorError::TrajectoryTooShort {
            got: records.len(),
            needed: MIN_CLASSIFY_RECORDS,
        });
    }
    let peak = records
        .iter()
        .map(|r| r.sup_u)
        .fold(f64::NEG_INFINITY, f64::max);
    let trigger = config.growth_factor * records[0].sup_u + 1.0;
    let tail = &records[records.len() - tail_len(records.len(), config.window_fraction)..];
    let slope = least_squares_slope(
        tail.iter()
            .map(|r| (r.t, r.sup_u.max(f64::MIN_POSITIVE).ln())),
    );
    let label = if records
        .iter()
        .any(|r| r.sup_u.is_nan() || r.sup_u > trigger)
    {
        Verdict::Growing
    } else if slope < config.tail_slope {
        Verdict::BoundedPlateau
    } else {
        Verdict::Inconclusive
    };
    Ok(BoundednessVerdict {
        label,
        peak_sup_u: peak,
        tail_slope: slope,
    })
}

/// Running maxima of the quasi-energy before and inside the trailing window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyPlateau {
    pub head_max: f64,
    pub tail_max: f64,
}

impl EnergyPlateau {
    /// Whether the trailing maximum stays within `rel_tol` of the earlier one.
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.tail_max <= self.head_max + rel_tol * self.head_max.abs()
    }
}

/// Splits the records at time `t_first + (1 - window_fraction)·(t_last - t_first)`
/// and reports the energy maximum on either side. `None` if energy was not
/// monitored or either side is empty.
pub fn energy_plateau(
    records: &[DiagnosticsRecord],
    window_fraction: f64,
) -> Option<EnergyPlateau> {
    let (first, last) = (records.first()?.t, records.last()?.t);
    let split = first + (1.0 - window_fraction) * (last - first);
    let mut head_max = None::<f64>;
    let mut tail_max = None::<f64>;
    for r in records {
        let e = r.energy?;
        let slot = if r.t <= split {
            &mut head_max
        } else {
            &mut tail_max
        };
        *slot = Some(slot.map_or(e, |m| m.max(e)));
    }
    Some(EnergyPlateau {
        head_max: head_max?,
        tail_max: tail_max?,
    })
}

pub fn write_diagnostics_csv<W: io::Write>(
    records: &[DiagnosticsRecord],
    writer: W,
) -> Result<(), MonitorError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_diagnostics_csv<R: io::Read>(
    reader: R,
) -> Result<Vec<DiagnosticsRecord>, MonitorError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(MonitorError::from))
        .collect()
}
